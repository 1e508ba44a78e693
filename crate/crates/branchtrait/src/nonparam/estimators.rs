use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::KernelSpec;
use crate::error::{ensure, Error, Result};
use crate::transition_kernel::{GridSource, TransitionGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub xs: Vec<f64>,
    /// Signed kernels can give negative values; they are kept as computed.
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub sample_size: usize,
}

impl DensityEstimate {
    /// Plot data: header "x,value", one line per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value"]).map_err(|e| Error::Io(e.to_string()))?;
        for (x, v) in self.xs.iter().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()]).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted copy of the sample, so each grid point only visits the data
/// inside the kernel's reach.
fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn window(sorted: &[f64], center: f64, radius: f64) -> &[f64] {
    let lo = sorted.partition_point(|&v| v < center - radius);
    let hi = sorted.partition_point(|&v| v <= center + radius);
    &sorted[lo..hi]
}

fn kernel_mean(sorted: &[f64], n: usize, x0: f64, h: f64, kernel: &KernelSpec) -> f64 {
    window(sorted, x0, kernel.reach() * h).iter().map(|&x| kernel.scaled(x0 - x, h)).sum::<f64>() / n as f64
}

/// nu^(x0) = n^-1 sum_u G_h(x0 - X_u) at every grid point.
pub fn estimate_nu(samples: &[f64], xs: &[f64], h: f64, kernel: &KernelSpec) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to estimate the density from".into()));
    }
    ensure(h > 0.0 && h.is_finite(), || format!("bandwidth must be positive, got {h}"))?;
    let s = sorted(samples);
    let values = xs.par_iter().map(|&x0| kernel_mean(&s, samples.len(), x0, h, kernel)).collect();
    Ok(DensityEstimate { xs: xs.to_vec(), values, bandwidth: h, sample_size: samples.len() })
}

/// Bandwidths of the quotient estimator: h for the denominator, (h1, h2) for
/// the numerator's product kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, one row per x.
    pub values: Vec<f64>,
    pub bandwidths: Bandwidths,
    pub threshold: f64,
    /// Denominator mean at each x before clamping.
    pub denominators: Vec<f64>,
    /// Whether the denominator at x_i was raised to the threshold; it applies
    /// to every node (x_i, y_j) of the row.
    pub clamped: Vec<bool>,
    pub pairs: usize,
}

impl TransitionEstimate {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    pub fn is_clamped(&self, i: usize, _j: usize) -> bool {
        self.clamped[i]
    }

    /// Same layout as [`TransitionGrid::write_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::transition_kernel::write_grid_csv(&self.xs, &self.ys, &self.values, out)
    }

    /// Converts to a transition table; negative values from signed kernels are
    /// rejected rather than silently clipped.
    pub fn to_grid(&self) -> Result<TransitionGrid> {
        let grid = TransitionGrid::new(self.xs.clone(), self.ys.clone(), self.values.clone(), GridSource::Nonparametric)?;
        Ok(grid.with_parameters(serde_json::json!({
            "bandwidths": self.bandwidths,
            "threshold": self.threshold,
            "pairs": self.pairs,
            "clamped_rows": self.clamped.iter().filter(|c| **c).count(),
        })))
    }
}

/// q^(x0, y0) = mean G_h1(x0 - X_parent) G_h2(y0 - X_child) / (mean G_h(x0 - X_parent) v threshold),
/// both means taken over the observed pairs.
pub fn estimate_q(
    pairs: &[(f64, f64)],
    xs: &[f64],
    ys: &[f64],
    bw: Bandwidths,
    threshold: f64,
    kernel: &KernelSpec,
) -> Result<TransitionEstimate> {
    if pairs.is_empty() {
        return Err(Error::Data("no pairs to estimate the transition from".into()));
    }
    ensure(threshold > 0.0, || format!("threshold must be positive, got {threshold}"))?;
    for h in [bw.h, bw.h1, bw.h2] {
        ensure(h > 0.0 && h.is_finite(), || format!("bandwidth must be positive, got {h}"))?;
    }
    if xs.is_empty() || ys.is_empty() || xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Data("grid axes must be non-empty and strictly increasing".into()));
    }
    let n = pairs.len();
    let parents: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let sorted_parents = sorted(&parents);
    let mut by_parent = pairs.to_vec();
    by_parent.sort_by(|a, b| a.0.total_cmp(&b.0));

    // the y-factor of each pair, restricted to the grid nodes it reaches
    let reach2 = kernel.reach() * bw.h2;
    let y_factors: Vec<(usize, Vec<f64>)> = by_parent
        .par_iter()
        .map(|&(_, y)| {
            let lo = ys.partition_point(|&v| v < y - reach2);
            let hi = ys.partition_point(|&v| v <= y + reach2);
            (lo, ys[lo..hi].iter().map(|&y0| kernel.scaled(y0 - y, bw.h2)).collect())
        })
        .collect();

    let reach1 = kernel.reach() * bw.h1;
    let rows: Vec<(Vec<f64>, f64, bool)> = xs
        .par_iter()
        .map(|&x0| {
            let mut row = vec![0.0; ys.len()];
            let lo = by_parent.partition_point(|p| p.0 < x0 - reach1);
            let hi = by_parent.partition_point(|p| p.0 <= x0 + reach1);
            for k in lo..hi {
                let a = kernel.scaled(x0 - by_parent[k].0, bw.h1);
                if a == 0.0 {
                    continue;
                }
                let (start, ref f) = y_factors[k];
                for (r, b) in row[start..start + f.len()].iter_mut().zip(f) {
                    *r += a * b;
                }
            }
            let denom = kernel_mean(&sorted_parents, n, x0, bw.h, kernel);
            let clamped = !(denom >= threshold);
            let d = if clamped { threshold } else { denom };
            for r in &mut row {
                *r /= n as f64 * d;
            }
            (row, denom, clamped)
        })
        .collect();
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut denominators = Vec::with_capacity(xs.len());
    let mut clamped = Vec::with_capacity(xs.len());
    for (row, d, c) in rows {
        values.extend(row);
        denominators.push(d);
        clamped.push(c);
    }
    Ok(TransitionEstimate {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        values,
        bandwidths: bw,
        threshold,
        denominators,
        clamped,
        pairs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonparam::{make_kernel, KernelKind};
    use crate::numerics::{linspace, trapezoid};

    #[test]
    fn single_point_gives_kernel_peak() {
        let g = make_kernel(KernelKind::Gaussian, 1).unwrap();
        let e = estimate_nu(&[0.3], &[0.3], 0.1, &g).unwrap();
        assert!((e.values[0] - 1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-14);
        assert!(matches!(estimate_nu(&[], &[0.3], 0.1, &g), Err(Error::Data(_))));
    }

    #[test]
    fn density_integrates_to_one_over_covering_grid() {
        let g = make_kernel(KernelKind::Gaussian, 1).unwrap();
        let data = [0.2, 0.25, 0.5, 0.9];
        let xs = linspace(-1.0, 2.0, 3001);
        let e = estimate_nu(&data, &xs, 0.05, &g).unwrap();
        assert!((trapezoid(&xs, &e.values) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn denominator_clamp_is_flagged() {
        let g = make_kernel(KernelKind::Polynomial, 2).unwrap();
        let pairs = [(0.2, 0.1), (0.25, 0.15)];
        let e = estimate_q(&pairs, &[0.2, 0.9], &[0.1, 0.5], Bandwidths { h: 0.1, h1: 0.1, h2: 0.1 }, 1e-6, &g).unwrap();
        assert_eq!(e.clamped, vec![false, true]);
        assert_eq!(e.value(1, 0), 0.0);
        assert!(e.is_clamped(1, 1));
    }

    #[test]
    fn matches_the_direct_double_sum() {
        let g = make_kernel(KernelKind::Gaussian, 1).unwrap();
        let pairs: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64 * 0.37).fract(), (i as f64 * 0.61).fract() * 0.5)).collect();
        let bw = Bandwidths { h: 0.2, h1: 0.1, h2: 0.07 };
        let xs = linspace(0.0, 1.0, 9);
        let ys = linspace(0.0, 1.0, 11);
        let e = estimate_q(&pairs, &xs, &ys, bw, 1e-6, &g).unwrap();
        for (i, &x0) in xs.iter().enumerate() {
            let d = pairs.iter().map(|p| g.scaled(x0 - p.0, bw.h)).sum::<f64>() / 50.0;
            for (j, &y0) in ys.iter().enumerate() {
                let num = pairs.iter().map(|p| g.scaled(x0 - p.0, bw.h1) * g.scaled(y0 - p.1, bw.h2)).sum::<f64>() / 50.0;
                let want = num / d.max(1e-6);
                assert!((e.value(i, j) - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}
