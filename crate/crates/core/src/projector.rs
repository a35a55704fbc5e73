//! Box domains and the two projectors used by the solver.
//!
//! Membership tests are exact: no tolerance is applied when deciding whether
//! `x_i + α d_i` lies in `[ℓ_i, u_i]`, so the non-linear projector is exactly
//! idempotent and the orthogonality identity holds to rounding.

use crate::Vector;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty or degenerate interval at coordinate {index}: [{lower}, {upper}]")]
    Degenerate { index: usize, lower: f64, upper: f64 },
    #[error("point is outside the domain at coordinate {index} (value {value})")]
    Outside { index: usize, value: f64 },
    #[error("stepsize must be positive, got {0}")]
    NonPositiveStep(f64),
}

/// Which projector keeps iterates feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorKind {
    /// Infeasible coordinates fall back to the current iterate.
    #[default]
    Nonlinear,
    /// Classical clamp onto the box.
    Orthogonal,
}

impl ProjectorKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectorKind::Nonlinear => "nonlinear",
            ProjectorKind::Orthogonal => "orthogonal",
        }
    }
}

impl std::str::FromStr for ProjectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nonlinear" => Ok(ProjectorKind::Nonlinear),
            "orthogonal" => Ok(ProjectorKind::Orthogonal),
            other => Err(format!("unknown projector variant '{other}'")),
        }
    }
}

/// Cartesian product of closed intervals `[lower_i, upper_i]`.
///
/// Bounds may be infinite; `lower_i < upper_i` is enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            // NaN bounds fail this test as well.
            if !(l < u) || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(DomainError::Degenerate { index, lower: l, upper: u });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The nonnegative orthant `ℝ₊ⁿ`.
    pub fn nonnegative(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    /// All of `ℝⁿ`.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn contains_coord(&self, i: usize, v: f64) -> bool {
        self.lower[i] <= v && v <= self.upper[i]
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &v)| self.contains_coord(i, v))
    }

    /// Returns an error naming the first offending coordinate.
    pub fn check(&self, x: &Vector) -> Result<(), DomainError> {
        self.check_dim(x)?;
        match x.iter().enumerate().find(|&(i, &v)| !self.contains_coord(i, v)) {
            Some((index, &value)) => Err(DomainError::Outside { index, value }),
            None => Ok(()),
        }
    }

    fn check_dim(&self, v: &Vector) -> Result<(), DomainError> {
        if v.len() != self.dim() {
            return Err(DomainError::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Non-linear projection `𝓟(z; x)`: keep `z_i` where it is feasible,
    /// otherwise fall back to `x_i`.
    pub fn project_nonlinear(&self, z: &Vector, x: &Vector) -> Result<Vector, DomainError> {
        self.check_dim(z)?;
        self.check(x)?;
        Ok(self.project_nonlinear_unchecked(z, x))
    }

    pub(crate) fn project_nonlinear_unchecked(&self, z: &Vector, x: &Vector) -> Vector {
        Vector::from_iterator(
            z.len(),
            z.iter().zip(x.iter()).enumerate().map(
                |(i, (&zi, &xi))| {
                    if self.contains_coord(i, zi) {
                        zi
                    } else {
                        xi
                    }
                },
            ),
        )
    }

    #[inline]
    pub fn clamp_coord(&self, i: usize, v: f64) -> f64 {
        if v <= self.lower[i] {
            self.lower[i]
        } else if v >= self.upper[i] {
            self.upper[i]
        } else {
            v
        }
    }

    /// Orthogonal (Euclidean) projection onto the box.
    pub fn project_orthogonal(&self, z: &Vector) -> Result<Vector, DomainError> {
        self.check_dim(z)?;
        Ok(self.project_orthogonal_unchecked(z))
    }

    pub(crate) fn project_orthogonal_unchecked(&self, z: &Vector) -> Vector {
        Vector::from_iterator(z.len(), z.iter().enumerate().map(|(i, &v)| self.clamp_coord(i, v)))
    }

    /// Projects `z` with the requested operator; `x` is the current iterate.
    pub fn project(&self, kind: ProjectorKind, z: &Vector, x: &Vector) -> Result<Vector, DomainError> {
        match kind {
            ProjectorKind::Nonlinear => self.project_nonlinear(z, x),
            ProjectorKind::Orthogonal => self.project_orthogonal(z),
        }
    }

    pub(crate) fn project_unchecked(&self, kind: ProjectorKind, z: &Vector, x: &Vector) -> Vector {
        match kind {
            ProjectorKind::Nonlinear => self.project_nonlinear_unchecked(z, x),
            ProjectorKind::Orthogonal => self.project_orthogonal_unchecked(z),
        }
    }

    /// Whether coordinate `i` is blocked: `x_i + α d_i` is infeasible for
    /// every `α > 0`. For a box this means `x_i` sits on a finite bound and
    /// `d_i` points strictly outward.
    #[inline]
    fn is_blocked(&self, i: usize, xi: f64, di: f64) -> bool {
        (xi == self.lower[i] && di < 0.0) || (xi == self.upper[i] && di > 0.0)
    }

    /// Splits the coordinates into blocked, moved and shrinkable sets for
    /// the step `x + α d`.
    pub fn index_sets(&self, x: &Vector, d: &Vector, alpha: f64) -> Result<IndexSets, DomainError> {
        if !(alpha > 0.0) {
            return Err(DomainError::NonPositiveStep(alpha));
        }
        self.check(x)?;
        self.check_dim(d)?;
        Ok(self.index_sets_unchecked(x, d, alpha))
    }

    pub(crate) fn index_sets_unchecked(&self, x: &Vector, d: &Vector, alpha: f64) -> IndexSets {
        let mut sets = IndexSets::default();
        for i in 0..x.len() {
            let (xi, di) = (x[i], d[i]);
            if self.is_blocked(i, xi, di) {
                sets.blocked.push(i);
            } else if self.contains_coord(i, xi + alpha * di) {
                sets.moved.push(i);
            } else {
                sets.shrinkable.push(i);
            }
        }
        sets
    }

    /// `‖𝓟(x + αd; x) − x‖` computed from the moved set as
    /// `α·sqrt(Σ_{i∈moved} d_i²)`.
    pub fn arc_displacement_norm(&self, x: &Vector, d: &Vector, alpha: f64) -> Result<f64, DomainError> {
        let sets = self.index_sets(x, d, alpha)?;
        let sq: f64 = sets.moved.iter().map(|&i| d[i] * d[i]).sum();
        Ok(alpha * sq.sqrt())
    }
}

/// Partition of `{0, …, n−1}` relative to a point, a direction and a step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub blocked: Vec<usize>,
    pub moved: Vec<usize>,
    pub shrinkable: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn unit_box(n: usize) -> BoxDomain {
        BoxDomain::new(vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn rejects_degenerate_intervals() {
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![2.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![f64::NEG_INFINITY], vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn nonlinear_projection_examples() {
        let orthant = BoxDomain::nonnegative(2);
        let p = orthant.project_nonlinear(&v(&[3.0, -1.0]), &v(&[1.0, 2.0])).unwrap();
        assert_eq!(p, v(&[3.0, 2.0]));

        let z = v(&[0.25, 7.0]);
        assert_eq!(orthant.project_nonlinear(&z, &v(&[1.0, 1.0])).unwrap(), z);

        let p = unit_box(2)
            .project_nonlinear(&v(&[2.0, -2.0]), &v(&[0.5, 0.5]))
            .unwrap();
        assert_eq!(p, v(&[0.5, 0.5]));
    }

    #[test]
    fn nonlinear_projection_rejects_infeasible_anchor() {
        let orthant = BoxDomain::nonnegative(2);
        let err = orthant.project_nonlinear(&v(&[1.0, 1.0]), &v(&[-1.0, 1.0]));
        assert_eq!(err, Err(DomainError::Outside { index: 0, value: -1.0 }));
    }

    #[test]
    fn orthogonal_projection_examples() {
        let orthant = BoxDomain::nonnegative(2);
        assert_eq!(orthant.project_orthogonal(&v(&[3.0, -1.0])).unwrap(), v(&[3.0, 0.0]));
        assert_eq!(orthant.project_orthogonal(&v(&[3.0, 1.0])).unwrap(), v(&[3.0, 1.0]));
        assert_eq!(unit_box(1).project_orthogonal(&v(&[2.0])).unwrap(), v(&[1.0]));
    }

    #[test]
    fn index_set_examples() {
        let orthant = BoxDomain::nonnegative(2);
        let x = v(&[0.0, 2.0]);
        let d = v(&[-1.0, -1.0]);

        let s = orthant.index_sets(&x, &d, 1.0).unwrap();
        assert_eq!((s.blocked, s.moved, s.shrinkable), (vec![0], vec![1], vec![]));

        let s = orthant.index_sets(&x, &d, 3.0).unwrap();
        assert_eq!((s.blocked, s.moved, s.shrinkable), (vec![0], vec![], vec![1]));

        let s = orthant.index_sets(&x, &v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!((s.blocked, s.moved, s.shrinkable), (vec![], vec![0, 1], vec![]));
    }

    #[test]
    fn zero_direction_at_bound_is_moved() {
        let s = unit_box(2)
            .index_sets(&v(&[0.0, 1.0]), &v(&[0.0, 0.0]), 0.5)
            .unwrap();
        assert_eq!(s.moved, vec![0, 1]);
    }

    #[test]
    fn index_sets_reject_nonpositive_step() {
        let orthant = BoxDomain::nonnegative(1);
        assert!(orthant.index_sets(&v(&[1.0]), &v(&[1.0]), 0.0).is_err());
        assert!(orthant.index_sets(&v(&[1.0]), &v(&[1.0]), -1.0).is_err());
        assert!(orthant.arc_displacement_norm(&v(&[1.0]), &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn infinite_bounds_never_block() {
        let dom = BoxDomain::unbounded(1);
        let s = dom.index_sets(&v(&[0.0]), &v(&[-1e300]), 1e10).unwrap();
        assert_eq!(s.moved, vec![0]);
    }

    #[test]
    fn arc_displacement_examples() {
        let orthant = BoxDomain::nonnegative(2);
        let n = orthant
            .arc_displacement_norm(&v(&[0.0, 2.0]), &v(&[-1.0, -1.0]), 1.0)
            .unwrap();
        assert_eq!(n, 1.0);
        let n = orthant
            .arc_displacement_norm(&v(&[0.0, 2.0]), &v(&[0.0, 0.0]), 1.0)
            .unwrap();
        assert_eq!(n, 0.0);

        // direct norm of P(x + αd; x) − x
        let x = v(&[1.0, 1.0]);
        let d = v(&[1.0, 2.0]);
        let p = orthant.project_nonlinear(&(&x + 0.5 * &d), &x).unwrap();
        let direct = (p - &x).norm();
        let n = orthant.arc_displacement_norm(&x, &d, 0.5).unwrap();
        assert!((n - 0.5 * 5f64.sqrt()).abs() <= 1e-15);
        assert!((n - direct).abs() <= 1e-12 * direct);
    }
}
