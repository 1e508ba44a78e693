//! The tagged-chain transition density q(x, y) (and the pair transition
//! p(x, y1, y2)) by Monte Carlo over local times, by quadrature for the OU
//! case with constant rate, and by eigenfunction expansion for reflected
//! Brownian motion with constant drift.

mod grid;
mod mc;
mod ou_oracle;
mod potential;
mod spectral;

pub use grid::{GridSource, TransitionGrid};
pub(crate) use grid::write_grid_csv;
pub use mc::{mc_full_transition, mc_transition_density, mc_transition_row, McEstimate, McOptions};
pub use ou_oracle::ou_q_oracle;
pub use spectral::{
    spectral_density_reflected, spectral_q_and_grad, spectral_resolvent, SeriesValue, SpectralParams, SpectralQ,
    SpectralTable, StationaryVariant,
};

/// Membership in the two-piece region written for the reflected model:
/// {0 < y1 <= eps L, eps/(1-eps) y1 <= y2 <= (1-eps)/eps y1}
/// union {eps L <= y1 <= (1-eps) L, eps/(1-eps) y1 <= y2 <= (L - y1)/y1}.
///
/// The second piece is evaluated exactly as written; see [`in_pair_support`]
/// for the region where the pair density is actually positive.
pub fn check_support_domain(eps: f64, length: f64, y1: f64, y2: f64) -> bool {
    let lo = eps / (1.0 - eps) * y1;
    let first = 0.0 < y1 && y1 <= eps * length && lo <= y2 && y2 <= (1.0 - eps) / eps * y1;
    let second = eps * length <= y1 && y1 <= (1.0 - eps) * length && lo <= y2 && y2 <= (length - y1) / y1;
    first || second
}

/// (y1, y2) can be the children of a parent that divided inside [0, L]
/// (`length = None` for the real line) with first-child fraction in
/// [eps, 1 - eps].
pub fn in_pair_support(eps: f64, length: Option<f64>, y1: f64, y2: f64) -> bool {
    let s = y1 + y2;
    if s == 0.0 || !s.is_finite() {
        return false;
    }
    if let Some(l) = length {
        if !(y1 > 0.0 && y2 > 0.0 && s <= l) {
            return false;
        }
    }
    let frac = y1 / s;
    (eps..=1.0 - eps).contains(&frac)
}
