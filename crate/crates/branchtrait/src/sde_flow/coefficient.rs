use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Closure-backed coefficient; not serializable.
#[derive(Clone)]
pub struct CustomFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn(..)")
    }
}

impl PartialEq for CustomFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Scalar function descriptor used for drift, volatility and division rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    /// Coefficients in increasing degree.
    Polynomial { coefficients: Vec<f64> },
    #[serde(skip)]
    Custom(CustomFn),
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn affine(intercept: f64, slope: f64) -> Self {
        Coefficient::Affine { intercept, slope }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Custom(CustomFn(Arc::new(f)))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Affine { intercept, slope } => intercept + slope * x,
            Coefficient::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            Coefficient::Custom(f) => (f.0)(x),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant { value } => Some(*value),
            Coefficient::Affine { intercept, slope } if *slope == 0.0 => Some(*intercept),
            _ => None,
        }
    }

    /// Exact supremum over a compact interval where it is cheap to get.
    pub fn sup_on(&self, lo: f64, hi: f64) -> Option<f64> {
        match self {
            Coefficient::Constant { value } => Some(*value),
            Coefficient::Affine { .. } => Some(self.eval(lo).max(self.eval(hi))),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_uses_increasing_degree() {
        let p = Coefficient::Polynomial { coefficients: vec![1.0, 2.0, 3.0] };
        assert_eq!(p.eval(2.0), 1.0 + 4.0 + 12.0);
    }

    #[test]
    fn serde_round_trip() {
        let c = Coefficient::affine(1.0, -0.5);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"kind":"affine","intercept":1.0,"slope":-0.5}"#);
        let back: Coefficient = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn custom_is_not_serializable() {
        let c = Coefficient::custom(|x| x * x);
        assert_eq!(c.eval(3.0), 9.0);
        assert!(serde_json::to_string(&c).is_err());
    }
}
