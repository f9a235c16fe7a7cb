//! Precision calibration from a target inconsistent-clustering rate.
//!
//! With `i'(j)` the nearest centroid of document `j`, the aggregate relation is
//! `sum_j sum_i (pi_i / pi_i') exp(-lambda (d_ji - d_ji')) = n / (1 - alpha)`.
//! The left side is nonincreasing in `lambda`, so bisection finds the unique root.

use serde::{Deserialize, Serialize};

use crate::geometry::DistanceMatrix;
use crate::{Error, Result};

/// Relative bracket width at which bisection stops.
pub const LAMBDA_RTOL: f64 = 1e-10;

const MAX_LAMBDA: f64 = 1e12;

/// Target inconsistent-clustering rate `alpha`, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CalibrationTarget(f64);

impl CalibrationTarget {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(CalibrationTarget(alpha))
        } else {
            Err(Error::InvalidArgument(format!("alpha {alpha} must lie in (0, 1)")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        CalibrationTarget(0.05)
    }
}

impl TryFrom<f64> for CalibrationTarget {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        CalibrationTarget::new(alpha)
    }
}

impl From<CalibrationTarget> for f64 {
    fn from(t: CalibrationTarget) -> f64 {
        t.0
    }
}

/// The left side of the calibration equation, split into the part that does not
/// decay with lambda (zero gaps) and the decaying terms.
struct Lhs {
    n: usize,
    flat: f64,
    terms: Vec<(f64, f64)>,
}

impl Lhs {
    fn new(dist: &DistanceMatrix, weights: &[f64]) -> Result<Self> {
        let k = dist.k();
        if weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: weights.len(),
            });
        }
        if k == 1 {
            return Err(Error::SingleComponent);
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("calibration weights must be positive".into()));
        }
        if dist.n() == 0 {
            return Err(Error::InvalidArgument("calibration needs at least one document".into()));
        }
        let mut flat = 0.0;
        let mut terms = Vec::new();
        for j in 0..dist.n() {
            let near = dist.nearest(j);
            let d0 = dist.get(j, near);
            for (i, &d) in dist.row(j).iter().enumerate() {
                let ratio = weights[i] / weights[near];
                let gap = d - d0;
                if gap > 0.0 {
                    terms.push((ratio, gap));
                } else {
                    flat += ratio;
                }
            }
        }
        Ok(Lhs {
            n: dist.n(),
            flat,
            terms,
        })
    }

    fn eval(&self, lambda: f64) -> f64 {
        self.flat + self.terms.iter().map(|(r, g)| r * (-lambda * g).exp()).sum::<f64>()
    }
}

/// Left side of the calibration equation at `lambda`.
pub fn calibration_lhs(dist: &DistanceMatrix, weights: &[f64], lambda: f64) -> Result<f64> {
    Ok(Lhs::new(dist, weights)?.eval(lambda))
}

/// The `alpha` implied by the aggregate relation at `lambda`: `1 - n / LHS(lambda)`.
pub fn aggregate_alpha(dist: &DistanceMatrix, weights: &[f64], lambda: f64) -> Result<f64> {
    let lhs = Lhs::new(dist, weights)?;
    Ok(1.0 - lhs.n as f64 / lhs.eval(lambda))
}

/// Solve the calibration equation for `lambda` by bracketed bisection.
pub fn solve_lambda(dist: &DistanceMatrix, weights: &[f64], target: CalibrationTarget) -> Result<f64> {
    let lhs = Lhs::new(dist, weights)?;
    let alpha = target.alpha();
    let goal = lhs.n as f64 / (1.0 - alpha);
    let at_zero = lhs.eval(0.0);
    if at_zero <= goal {
        return Err(Error::TooConcentrated {
            requested: alpha,
            attainable: 1.0 - lhs.n as f64 / at_zero,
        });
    }
    if lhs.flat >= goal {
        return Err(Error::NoFiniteRoot);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while lhs.eval(hi) > goal {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_LAMBDA {
            return Err(Error::NoFiniteRoot);
        }
    }
    while hi - lo > LAMBDA_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if lhs.eval(mid) > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_doc(d: [f64; 2]) -> DistanceMatrix {
        DistanceMatrix::new(1, 2, d.to_vec()).unwrap()
    }

    #[test]
    fn single_document_closed_form() {
        let lam = solve_lambda(&one_doc([0.2, 0.3]), &[0.5, 0.5], CalibrationTarget::default()).unwrap();
        let exact = -10.0 * (1.0f64 / 0.95 - 1.0).ln();
        assert!((lam - exact).abs() < 1e-6, "{lam} vs {exact}");
        assert!((lam - 29.444).abs() < 1e-3);
    }

    #[test]
    fn boundary_alpha_is_too_concentrated() {
        let err = solve_lambda(&one_doc([0.2, 0.3]), &[0.5, 0.5], CalibrationTarget::new(0.5).unwrap());
        match err {
            Err(Error::TooConcentrated { attainable, .. }) => assert!((attainable - 0.5).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_component_and_ties() {
        let d = DistanceMatrix::new(2, 1, vec![0.1, 0.2]).unwrap();
        assert!(matches!(solve_lambda(&d, &[1.0], CalibrationTarget::default()), Err(Error::SingleComponent)));
        // one document equidistant from both centroids keeps LHS >= 2 + 1 > 2 / 0.95
        let d = DistanceMatrix::new(2, 2, vec![0.3, 0.3, 0.1, 0.5]).unwrap();
        assert!(matches!(solve_lambda(&d, &[0.5, 0.5], CalibrationTarget::default()), Err(Error::NoFiniteRoot)));
    }

    #[test]
    fn target_bounds() {
        assert!(CalibrationTarget::new(0.0).is_err());
        assert!(CalibrationTarget::new(1.0).is_err());
        let t: CalibrationTarget = serde_json::from_str("0.1").unwrap();
        assert_eq!(t.alpha(), 0.1);
        assert!(serde_json::from_str::<CalibrationTarget>("1.5").is_err());
    }

    #[test]
    fn root_satisfies_equation() {
        let d = DistanceMatrix::new(3, 3, vec![0.1, 0.5, 0.7, 0.6, 0.2, 0.9, 0.4, 0.45, 0.3]).unwrap();
        let w = [0.2, 0.5, 0.3];
        let lam = solve_lambda(&d, &w, CalibrationTarget::default()).unwrap();
        let lhs = calibration_lhs(&d, &w, lam).unwrap();
        assert!((lhs / (3.0 / 0.95) - 1.0).abs() < 1e-8);
        assert!((aggregate_alpha(&d, &w, lam).unwrap() - 0.05).abs() < 1e-8);
    }
}
