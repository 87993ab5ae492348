//! Quadratic systems `x' = A x + Q(x) + d` and their shifted coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::Scalar;

/// Relative asymmetry accepted (and removed) when loading a `Q_i`.
pub const ASYMMETRY_TOL: f64 = 1e-9;

/// A quadratic system with state matrix `A`, symmetric quadratic forms
/// `Q_1..Q_n` and constant bias `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem<T: Scalar> {
    a: DMatrix<T>,
    q: Vec<DMatrix<T>>,
    d: DVector<T>,
}

/// The system expressed in `y = x - m`: `y' = L(m) y + Q(y) + c(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSystem<T: Scalar> {
    pub l: DMatrix<T>,
    pub c: DVector<T>,
    pub m: DVector<T>,
}

impl<T: Scalar> QuadraticSystem<T> {
    /// Validates dimensions and finiteness, and symmetrizes each `Q_i`.
    pub fn new(a: DMatrix<T>, q: Vec<DMatrix<T>>, d: DVector<T>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Dimension {
                what: "state dimension".into(),
                expected: 1,
                found: 0,
            });
        }
        if a.ncols() != n {
            return Err(Error::Dimension {
                what: "A columns".into(),
                expected: n,
                found: a.ncols(),
            });
        }
        if q.len() != n {
            return Err(Error::Dimension {
                what: "number of Q matrices".into(),
                expected: n,
                found: q.len(),
            });
        }
        if d.len() != n {
            return Err(Error::Dimension {
                what: "d".into(),
                expected: n,
                found: d.len(),
            });
        }
        if a.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("A".into()));
        }
        if d.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("d".into()));
        }
        let mut sym = Vec::with_capacity(n);
        for (i, qi) in q.into_iter().enumerate() {
            if qi.nrows() != n || qi.ncols() != n {
                return Err(Error::Dimension {
                    what: format!("Q[{i}]"),
                    expected: n,
                    found: if qi.nrows() != n {
                        qi.nrows()
                    } else {
                        qi.ncols()
                    },
                });
            }
            if qi.iter().any(|v| !v.finite()) {
                return Err(Error::NonFinite(format!("Q[{i}]")));
            }
            let asym = max_abs(&(&qi - qi.transpose()));
            let tol = T::lit(ASYMMETRY_TOL) * max_abs(&qi);
            if asym > tol {
                return Err(Error::Asymmetric {
                    index: i,
                    asymmetry: asym.as_f64(),
                    tolerance: tol.as_f64(),
                });
            }
            sym.push((&qi + qi.transpose()) * T::lit(0.5));
        }
        Ok(Self { a, q: sym, d })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn q(&self) -> &[DMatrix<T>] {
        &self.q
    }

    pub fn d(&self) -> &DVector<T> {
        &self.d
    }

    /// Largest absolute entry over all `Q_i`.
    pub fn q_scale(&self) -> T {
        self.q
            .iter()
            .fold(T::zero(), |acc, qi| acc.max(max_abs(qi)))
    }

    /// `Q(x)`, the vector with components `x^T Q_i x`.
    pub fn eval_quadratic(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.dim(), self.q.iter().map(|qi| x.dot(&(qi * x))))
    }

    /// Right-hand side `A x + Q(x) + d`.
    pub fn eval_rhs(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x + self.eval_quadratic(x) + &self.d
    }

    /// `L(m) = A + 2 [Q_1 m, ..., Q_n m]^T`, the Jacobian of the rhs at `m`.
    pub fn linear_part(&self, m: &DVector<T>) -> DMatrix<T> {
        let mut l = self.a.clone();
        for (i, qi) in self.q.iter().enumerate() {
            let row = qi * m * T::lit(2.0);
            for j in 0..self.dim() {
                l[(i, j)] += row[j];
            }
        }
        l
    }

    /// `c(m) = d + A m + Q(m)`.
    pub fn bias(&self, m: &DVector<T>) -> DVector<T> {
        self.eval_rhs(m)
    }

    pub fn shift(&self, m: &DVector<T>) -> ShiftedSystem<T> {
        ShiftedSystem {
            l: self.linear_part(m),
            c: self.bias(m),
            m: m.clone(),
        }
    }

    /// Partial derivatives of `L(m)` with respect to each `m_k`; `L(m)` is
    /// affine so `L(m) = A + sum_k m_k J_k`.
    pub fn linear_part_gradients(&self) -> Vec<DMatrix<T>> {
        let n = self.dim();
        (0..n)
            .map(|k| DMatrix::from_fn(n, n, |i, j| T::lit(2.0) * self.q[i][(j, k)]))
            .collect()
    }

    /// Lossy conversion between scalar types.
    pub fn cast<U: Scalar>(&self) -> QuadraticSystem<U> {
        let c = |m: &DMatrix<T>| m.map(|v| U::lit(v.as_f64()));
        QuadraticSystem {
            a: c(&self.a),
            q: self.q.iter().map(c).collect(),
            d: self.d.map(|v| U::lit(v.as_f64())),
        }
    }
}

impl<T: Scalar> ShiftedSystem<T> {
    /// `L y + Q(y) + c` evaluated through the originating system's `Q`.
    pub fn eval(&self, system: &QuadraticSystem<T>, y: &DVector<T>) -> DVector<T> {
        &self.l * y + system.eval_quadratic(y) + &self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn lorenz_is_accepted() {
        let s = fixtures::lorenz(10.0, 28.0, 8.0 / 3.0);
        assert_eq!(s.dim(), 3);
    }

    #[test]
    fn missing_q_matrix_is_rejected() {
        let err = QuadraticSystem::new(
            DMatrix::<f64>::identity(3, 3),
            vec![DMatrix::zeros(3, 3); 2],
            DVector::zeros(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn asymmetric_q_is_rejected() {
        let mut q = vec![DMatrix::<f64>::zeros(2, 2); 2];
        q[0][(0, 1)] = 1.0;
        q[0][(1, 0)] = 1.0 + 1e-3;
        let err = QuadraticSystem::new(DMatrix::identity(2, 2), q, DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { index: 0, .. }));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let mut q = vec![DMatrix::<f64>::zeros(2, 2); 2];
        q[1][(0, 1)] = 1.0;
        q[1][(1, 0)] = 1.0 + 1e-12;
        let s = QuadraticSystem::new(DMatrix::identity(2, 2), q, DVector::zeros(2)).unwrap();
        assert_eq!(s.q()[1][(0, 1)], s.q()[1][(1, 0)]);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        let err =
            QuadraticSystem::new(a, vec![DMatrix::zeros(2, 2); 2], DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn quadratic_examples() {
        let lz = fixtures::lorenz(10.0, 28.0, 8.0 / 3.0);
        assert_eq!(
            lz.eval_quadratic(&v(&[1.0, 1.0, 1.0])),
            v(&[0.0, -1.0, 1.0])
        );
        assert_eq!(lz.eval_quadratic(&v(&[0.0; 3])), v(&[0.0; 3]));
        let ac = fixtures::academic2d();
        assert_eq!(ac.eval_quadratic(&v(&[1.0, 2.0])), v(&[-2.0, 1.0]));
    }

    #[test]
    fn rhs_examples() {
        let ac = fixtures::academic2d();
        assert!(ac.eval_rhs(&v(&[0.0, 0.25])).norm() < 1e-15);
        let lin = fixtures::linear(&DMatrix::from_diagonal_element(2, 2, -1.0));
        assert_eq!(lin.eval_rhs(&v(&[1.0, 1.0])), v(&[-1.0, -1.0]));
        let lz = fixtures::lorenz(10.0, 28.0, 8.0 / 3.0);
        let f = lz.eval_rhs(&v(&[1.0, 1.0, 1.0]));
        assert!((f - v(&[0.0, 26.0, -5.0 / 3.0])).norm() < 1e-14);
    }

    #[test]
    fn shift_examples() {
        let ac = fixtures::academic2d();
        let z = ac.shift(&v(&[0.0, 0.0]));
        assert_eq!(&z.l, ac.a());
        assert_eq!(&z.c, ac.d());
        let s = ac.shift(&v(&[0.0, 0.25]));
        assert!((s.l - DMatrix::from_diagonal(&v(&[-1.25, -4.0]))).norm() < 1e-15);
        assert!(s.c.norm() < 1e-15);
        let mls = fixtures::mls();
        let s = mls.shift(&v(&[0.0, 0.0, 25.22, 0.0]));
        let row: Vec<f64> = s.l.row(1).iter().copied().collect();
        let expect = [0.78, -1.0, 0.0, 0.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn gradients_reassemble_linear_part() {
        let mls = fixtures::mls();
        let m = v(&[0.3, -1.0, 2.0, 0.5]);
        let mut l = mls.a().clone();
        for (k, j) in mls.linear_part_gradients().iter().enumerate() {
            l += j * m[k];
        }
        assert!((l - mls.linear_part(&m)).norm() < 1e-13);
    }

    #[test]
    fn single_precision_evaluates() {
        let ac: QuadraticSystem<f32> = fixtures::academic2d().cast();
        let f = ac.eval_rhs(&DVector::from_column_slice(&[0.0f32, 0.25]));
        assert!(f.norm() < 1e-6);
    }

    fn arb_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, n)
    }

    proptest! {
        #[test]
        fn shift_consistency(x in arb_point(4), m in arb_point(4)) {
            let sys = fixtures::mls();
            let x = v(&x);
            let m = v(&m);
            let sh = sys.shift(&m);
            let lhs = sys.eval_rhs(&x);
            let rhs = sh.eval(&sys, &(&x - &m));
            let scale = lhs.norm().max(1.0);
            prop_assert!((lhs - rhs).norm() <= 1e-10 * scale);
        }

        #[test]
        fn linear_part_is_jacobian(m in arb_point(4)) {
            let sys = fixtures::mls();
            let m = v(&m);
            let l = sys.linear_part(&m);
            let h = 1e-6;
            for j in 0..4 {
                let mut e = DVector::zeros(4);
                e[j] = h;
                let fd = (sys.eval_rhs(&(&m + &e)) - sys.eval_rhs(&(&m - &e))) / (2.0 * h);
                for i in 0..4 {
                    let scale = l[(i, j)].abs().max(1.0);
                    prop_assert!((fd[i] - l[(i, j)]).abs() <= 1e-6 * scale);
                }
            }
        }

        #[test]
        fn quadratic_is_homogeneous(x in arb_point(3), t in -3.0..3.0f64) {
            let sys = fixtures::lorenz(10.0, 28.0, 8.0 / 3.0);
            let x = v(&x);
            let lhs = sys.eval_quadratic(&(&x * t));
            let rhs = sys.eval_quadratic(&x) * (t * t);
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
        }
    }
}
