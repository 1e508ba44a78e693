use serde::{Deserialize, Serialize};

use super::{DiffusionSpec, Domain, PathSample};
use crate::error::{Error, Result};

/// Cumulative band estimate of the local time at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeCurve {
    pub level: f64,
    pub band: f64,
    pub step: f64,
    /// `values[i]` is the estimate at time `i * step`.
    pub values: Vec<f64>,
}

impl LocalTimeCurve {
    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Band width 4 sigma_max sqrt(dt): wide enough to dominate one Euler increment.
pub fn default_band(sigma_max: f64, dt: f64) -> f64 {
    4.0 * sigma_max * dt.sqrt()
}

/// Band estimator of the semimartingale local time at `level`.
///
/// On a reflected interval the indicator is normalised by the part of the
/// band that lies inside [0, L], so the estimator stays unbiased at the walls.
pub fn estimate_local_time(
    spec: &DiffusionSpec,
    path: &PathSample,
    level: f64,
    band: f64,
) -> Result<LocalTimeCurve> {
    if !(band > 0.0 && band.is_finite()) {
        return Err(Error::Parameter(format!("band must be positive, got {band}")));
    }
    if path.is_empty() {
        return Err(Error::Data("empty path".into()));
    }
    let width = spec.domain.band_width(level, band);
    let mut values = Vec::with_capacity(path.len());
    values.push(0.0);
    let mut acc = 0.0;
    if width > 0.0 {
        let half = 0.5 * band;
        let scale = path.step / width;
        for &x in &path.values[..path.len() - 1] {
            if (x - level).abs() <= half {
                let s = spec.volatility.eval(x);
                acc += s * s * scale;
            }
            values.push(acc);
        }
    } else {
        values.resize(path.len(), 0.0);
    }
    Ok(LocalTimeCurve { level, band, step: path.step, values })
}

/// Many levels probed at once: for a path value, finds every level whose band
/// contains it. Used by the discounted local-time accumulators.
#[derive(Debug, Clone)]
pub struct LevelBands {
    sorted: Vec<f64>,
    order: Vec<usize>,
    inv_width: Vec<f64>,
    half: f64,
}

impl LevelBands {
    pub fn new(levels: &[f64], band: f64, domain: Domain) -> Result<Self> {
        if !(band > 0.0 && band.is_finite()) {
            return Err(Error::Parameter(format!("band must be positive, got {band}")));
        }
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
        let inv_width = sorted
            .iter()
            .map(|&y| {
                let w = domain.band_width(y, band);
                if w > 0.0 { 1.0 / w } else { 0.0 }
            })
            .collect();
        Ok(Self { sorted, order, inv_width, half: 0.5 * band })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Calls `f(original_index, 1/width)` for every level within half a band of `x`.
    #[inline]
    pub fn for_each_hit(&self, x: f64, f: impl FnMut(usize, f64)) {
        let mut cursor = self.sorted.partition_point(|&y| y < x - self.half);
        self.for_each_hit_from(x, &mut cursor, f)
    }

    /// Same as [`Self::for_each_hit`], starting the search from `cursor`,
    /// which is left at the first level not below `x - band/2`. Cheap when
    /// consecutive calls come from one path.
    #[inline]
    pub fn for_each_hit_from(&self, x: f64, cursor: &mut usize, mut f: impl FnMut(usize, f64)) {
        let lo = x - self.half;
        let mut start = (*cursor).min(self.sorted.len());
        while start > 0 && self.sorted[start - 1] >= lo {
            start -= 1;
        }
        while start < self.sorted.len() && self.sorted[start] < lo {
            start += 1;
        }
        *cursor = start;
        for k in start..self.sorted.len() {
            if self.sorted[k] > x + self.half {
                break;
            }
            f(self.order[k], self.inv_width[k]);
        }
    }
}
