//! Dense LU with partial pivoting and a 1-norm condition estimate.

use crate::{Matrix, Vector};

/// `P·A = L·U` with unit-diagonal `L` stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    anorm1: f64,
    singular: bool,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Self {
        assert!(a.is_square(), "LU requires a square matrix");
        let n = a.nrows();
        let anorm1 = norm1(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;

        for k in 0..n {
            let (mut piv, mut best) = (k, lu[(k, k)].abs());
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if best == 0.0 || !best.is_finite() {
                singular = true;
                continue;
            }
            if piv != k {
                lu.swap_rows(piv, k);
                perm.swap(piv, k);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= l * u;
                    }
                }
            }
        }
        Self { lu, perm, anorm1, singular }
    }

    /// True when an exactly zero (or non-finite) pivot was met.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`. Returns `None` for a singular factorization.
    pub fn solve(&self, b: &Vector) -> Option<Vector> {
        if self.singular {
            return None;
        }
        let n = self.dim();
        let mut x = Vector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Some(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &Vector) -> Option<Vector> {
        if self.singular {
            return None;
        }
        let n = self.dim();
        // Uᵀ y = b
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        // Lᵀ z = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s;
        }
        let mut x = Vector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Some(x)
    }

    /// Estimate of `‖A‖₁·‖A⁻¹‖₁` (Hager's method with Higham's refinements).
    /// Singular factorizations report `+∞`.
    pub fn condition_estimate(&self) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let inv_norm = match self.inverse_norm1_estimate() {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        let c = self.anorm1 * inv_norm;
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    fn inverse_norm1_estimate(&self) -> Option<f64> {
        let n = self.dim();
        let mut x = Vector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x)?;
            let y_norm = y.lp_norm(1);
            if y_norm <= est && last_j != usize::MAX {
                break;
            }
            est = y_norm;
            let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&sign)?;
            let (j, zmax) = z.iamax_full_abs();
            if last_j != usize::MAX && (zmax <= z.dot(&x) || j == last_j) {
                break;
            }
            last_j = j;
            x = Vector::zeros(n);
            x[j] = 1.0;
        }
        // Higham's alternating-sign test vector guards against the
        // classical counterexamples.
        let mut alt = Vector::zeros(n);
        for i in 0..n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            alt[i] = sign * (1.0 + i as f64 / (n.max(2) - 1) as f64);
        }
        let y = self.solve(&alt)?;
        let alt_est = 2.0 * y.lp_norm(1) / (3.0 * n as f64);
        Some(est.max(alt_est))
    }
}

trait AbsArgmax {
    fn iamax_full_abs(&self) -> (usize, f64);
}

impl AbsArgmax for Vector {
    fn iamax_full_abs(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.iter().enumerate() {
            if v.abs() > best.1 {
                best = (i, v.abs());
            }
        }
        best
    }
}

/// Maximum absolute column sum.
pub fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn solves_small_system() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 1.0]);
        let lu = Lu::factor(&a);
        let x = lu.solve(&Vector::from_column_slice(&[0.0, 3.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn solve_and_transpose_solve_agree_with_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..12 {
            let a = random_matrix(&mut rng, n);
            let b = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let lu = Lu::factor(&a);
            let x = lu.solve(&b).unwrap();
            assert!((&a * &x - &b).norm() < 1e-9 * (1.0 + b.norm()));
            let xt = lu.solve_transpose(&b).unwrap();
            assert!((a.transpose() * &xt - &b).norm() < 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn detects_exact_singularity() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let lu = Lu::factor(&a);
        assert!(lu.is_singular());
        assert!(lu.solve(&Vector::from_element(2, 1.0)).is_none());
        assert_eq!(lu.condition_estimate(), f64::INFINITY);
    }

    #[test]
    fn condition_estimate_brackets_exact_value() {
        // Oracle: explicit inverse through nalgebra.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..10 {
            let mut a = random_matrix(&mut rng, n);
            a[(0, 0)] *= 1e-4;
            let exact = norm1(&a) * norm1(&a.clone().try_inverse().unwrap());
            let est = Lu::factor(&a).condition_estimate();
            assert!(est <= exact * (1.0 + 1e-10), "n={n} est={est} exact={exact}");
            assert!(est >= exact / 10.0, "n={n} est={est} exact={exact}");
        }
    }

    #[test]
    fn diagonal_condition_is_exact() {
        let a = Matrix::from_diagonal(&Vector::from_column_slice(&[1.0, 1e-8, 10.0]));
        let est = Lu::factor(&a).condition_estimate();
        assert!((est - 1e9).abs() <= 1e-6 * 1e9);
    }
}
