use crate::error::{Error, Result};
use crate::transition_kernel::TransitionGrid;

/// Second derivatives of the natural cubic spline through (xs, ys).
fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let r = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (r - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

/// Index k with xs[k] <= x <= xs[k + 1].
fn interval(xs: &[f64], x: f64) -> usize {
    xs.partition_point(|&v| v <= x).saturating_sub(1).min(xs.len().saturating_sub(2))
}

fn spline_eval(xs: &[f64], ys: &[f64], m: &[f64], x: f64) -> f64 {
    if xs.len() == 1 {
        return ys[0];
    }
    let k = interval(xs, x);
    let h = xs[k + 1] - xs[k];
    let a = (xs[k + 1] - x) / h;
    let b = (x - xs[k]) / h;
    a * ys[k] + b * ys[k + 1] + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0
}

/// Tensor-product natural cubic spline over a rectangular table. Row splines
/// along y are prepared once; each query then fits one spline along x.
#[derive(Debug, Clone)]
pub struct GridInterpolator {
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<f64>,
    row_curvature: Vec<f64>,
}

impl GridInterpolator {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || ys.is_empty() || values.len() != xs.len() * ys.len() {
            return Err(Error::Data("interpolation table has inconsistent dimensions".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("interpolation axes must be strictly increasing".into()));
        }
        let n = ys.len();
        let row_curvature = values.chunks(n).flat_map(|row| natural_second_derivatives(&ys, row)).collect();
        Ok(Self { xs, ys, values, row_curvature })
    }

    pub fn from_grid(grid: &TransitionGrid) -> Result<Self> {
        Self::new(grid.xs.clone(), grid.ys.clone(), grid.values.clone())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xs[0] && x <= self.xs[self.xs.len() - 1] && y >= self.ys[0] && y <= self.ys[self.ys.len() - 1]
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::Extrapolation { x, y });
        }
        let n = self.ys.len();
        // exact node hits skip the spline arithmetic
        let ix = self.xs.binary_search_by(|v| v.total_cmp(&x)).ok();
        let iy = self.ys.binary_search_by(|v| v.total_cmp(&y)).ok();
        let column = |i: usize| -> f64 {
            match iy {
                Some(j) => self.values[i * n + j],
                None => spline_eval(
                    &self.ys,
                    &self.values[i * n..(i + 1) * n],
                    &self.row_curvature[i * n..(i + 1) * n],
                    y,
                ),
            }
        };
        if let Some(i) = ix {
            return Ok(column(i));
        }
        let col: Vec<f64> = (0..self.xs.len()).map(column).collect();
        let m = natural_second_derivatives(&self.xs, &col);
        Ok(spline_eval(&self.xs, &col, &m, x))
    }
}

/// One-off interpolation of a table at (x, y).
pub fn interpolate_grid(grid: &TransitionGrid, x: f64, y: f64) -> Result<f64> {
    GridInterpolator::from_grid(grid)?.eval(x, y)
}
