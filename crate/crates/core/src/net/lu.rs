//! Dense complex LU factorisation with partial pivoting.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LuError {
    #[error("matrix is singular (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Row-major square matrix factorised in place as `P A = L U`.
#[derive(Debug, Clone)]
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    pub fn factor(n: usize, mut a: Vec<Complex64>) -> Result<Self, LuError> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LuError::NonFinite);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].norm();
            for r in (k + 1)..n {
                let m = a[r * n + k].norm();
                if m > best {
                    best = m;
                    piv = r;
                }
            }
            if best == 0.0 {
                return Err(LuError::Singular { column: k });
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let inv = a[k * n + k].inv();
            for r in (k + 1)..n {
                let f = a[r * n + k] * inv;
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                a[r * n + k] = f;
                for c in (k + 1)..n {
                    let u = a[k * n + c];
                    a[r * n + c] -= f * u;
                }
            }
        }
        Ok(ComplexLu { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in (r + 1)..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    /// 1-norm condition number `||A||_1 ||A^-1||_1`, computed exactly from
    /// the factors (n solves). `a_norm1` is the 1-norm of the original matrix.
    pub fn condition_1(&self, a_norm1: f64) -> f64 {
        let n = self.n;
        let mut inv_norm: f64 = 0.0;
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            e[j] = Complex64::new(0.0, 0.0);
            inv_norm = inv_norm.max(col.iter().map(|z| z.norm()).sum());
        }
        a_norm1 * inv_norm
    }
}

pub(crate) fn norm1(n: usize, a: &[Complex64]) -> f64 {
    (0..n)
        .map(|c| (0..n).map(|r| a[r * n + c].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_small_system_needing_pivot() {
        // [[0, 1+i], [2, 1]] x = [1+i, 3] -> x = [1, 1]
        let a = vec![c(0.0, 0.0), c(1.0, 1.0), c(2.0, 0.0), c(1.0, 0.0)];
        let lu = ComplexLu::factor(2, a).unwrap();
        let x = lu.solve(&[c(1.0, 1.0), c(3.0, 0.0)]);
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        assert!(matches!(ComplexLu::factor(2, a), Err(LuError::Singular { column: 1 })));
    }

    #[test]
    fn identity_condition_is_one() {
        let a = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let lu = ComplexLu::factor(2, a.clone()).unwrap();
        assert_eq!(lu.condition_1(norm1(2, &a)), 1.0);
    }
}
