//! Generalized lossless structure: the linear map `S -> G^T vec(S)` whose
//! kernel contains every `S` with `y^T S Q(y) = 0` for all `y`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{canonical_basis, null_space, vec_of};
use crate::model::QuadraticSystem;
use crate::Scalar;

/// Relative singular-value threshold used when extracting null spaces.
pub const RANK_TOL: f64 = 1e-9;

/// Cubic monomials `y_i y_k y_l` as sorted index triples `i <= k <= l`, in
/// lexicographic order. Every entry has degree three so graded-lex and lex
/// coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    terms: Vec<[usize; 3]>,
}

impl MonomialBasis {
    pub fn cubic(n: usize) -> Self {
        let mut terms = Vec::with_capacity(n * (n + 1) * (n + 2) / 6);
        for i in 0..n {
            for k in i..n {
                for l in k..n {
                    terms.push([i, k, l]);
                }
            }
        }
        Self { n, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[[usize; 3]] {
        &self.terms
    }

    /// Position of the monomial `y_a y_b y_c` (any order).
    pub fn index_of(&self, a: usize, b: usize, c: usize) -> usize {
        let mut t = [a, b, c];
        t.sort_unstable();
        let n = self.n;
        // count triples whose first index is < t0, then second < t1, then third < t2
        let tri = |m: usize| m * (m + 1) * (m + 2) / 6;
        let pairs = |m: usize| m * (m + 1) / 2;
        let before_first = tri(n) - tri(n - t[0]);
        let rem = n - t[0];
        let before_second = pairs(rem) - pairs(n - t[1]);
        before_first + before_second + (t[2] - t[1])
    }
}

/// `G` together with orthonormal bases of `{S : G^T vec(S) = 0}` and of its
/// intersection with the symmetric matrices.
#[derive(Debug, Clone)]
pub struct LosslessStructure<T: Scalar> {
    pub monomials: MonomialBasis,
    /// `n^2 x M`; row `i + j n` corresponds to `S_ij` (column stacking).
    pub g: DMatrix<T>,
    pub general_basis: Vec<DMatrix<T>>,
    pub symmetric_basis: Vec<DMatrix<T>>,
}

/// Result of testing a single matrix against the lossless constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosslessCheck<T> {
    pub lossless: bool,
    /// `||G^T vec(S)||`
    pub residual: T,
    /// Largest `|y^T S Q(y)|` over sampled unit vectors.
    pub sampled_max: T,
}

/// Orthonormal (trace inner product) basis of the symmetric matrices, as
/// `n^2 x n(n+1)/2` columns of vec-coordinates. Pairs `(i, j)` with `i <= j`
/// in row-major order.
pub fn symmetric_coordinates<T: Scalar>(n: usize) -> (DMatrix<T>, Vec<(usize, usize)>) {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut u = DMatrix::zeros(n * n, pairs.len());
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            u[(i + j * n, c)] = T::one();
        } else {
            u[(i + j * n, c)] = h;
            u[(j + i * n, c)] = h;
        }
    }
    (u, pairs)
}

fn unvec<T: Scalar>(v: &DVector<T>, n: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

impl<T: Scalar> LosslessStructure<T> {
    pub fn build(system: &QuadraticSystem<T>) -> Self {
        let n = system.dim();
        let monomials = MonomialBasis::cubic(n);
        let mut g = DMatrix::zeros(n * n, monomials.len());
        // y^T S Q(y) = sum_{i,j,k,l} S_ij (Q_j)_kl y_i y_k y_l
        for i in 0..n {
            for (j, qj) in system.q().iter().enumerate() {
                let row = i + j * n;
                for k in 0..n {
                    for l in 0..n {
                        let coef = qj[(k, l)];
                        if coef != T::zero() {
                            g[(row, monomials.index_of(i, k, l))] += coef;
                        }
                    }
                }
            }
        }
        let tol = T::lit(RANK_TOL);
        let clean = T::lit(1e-12);
        let gt = g.transpose();

        let general = canonical_basis(&null_space(&gt, tol), clean);
        let general_basis = general
            .column_iter()
            .map(|c| unvec(&c.clone_owned(), n))
            .collect();

        let (u, _) = symmetric_coordinates::<T>(n);
        let sym = canonical_basis(&null_space(&(&gt * &u), tol), clean);
        let symmetric_basis = sym.column_iter().map(|c| unvec(&(&u * c), n)).collect();

        Self {
            monomials,
            g,
            general_basis,
            symmetric_basis,
        }
    }

    pub fn dim(&self) -> usize {
        (self.g.nrows() as f64).sqrt().round() as usize
    }

    /// `G^T vec(S)`.
    pub fn constraint_residual(&self, s: &DMatrix<T>) -> DVector<T> {
        self.g.transpose() * vec_of(s)
    }

    /// Tests `||G^T vec(S)|| <= tol ||S||` and cross-checks by sampling
    /// `|y^T S Q(y)|` on 100 seeded random unit vectors.
    pub fn check(&self, system: &QuadraticSystem<T>, s: &DMatrix<T>, tol: T) -> LosslessCheck<T> {
        let residual = self.constraint_residual(s).norm();
        let sampled_max = sampled_lossless_residual(system, s, 100, 0x5eed);
        LosslessCheck {
            lossless: residual <= tol * s.norm(),
            residual,
            sampled_max,
        }
    }

    /// Hard-constraint parameterization of the admissible symmetric `P`.
    pub fn parameterize_hard(&self) -> Result<HardParameterization<T>> {
        if self.symmetric_basis.is_empty() {
            return Err(Error::Inapplicable(
                "no symmetric matrix satisfies the generalized lossless constraint".into(),
            ));
        }
        Ok(HardParameterization {
            basis: self.symmetric_basis.clone(),
        })
    }
}

/// Largest `|y^T S Q(y)|` over `samples` random unit vectors drawn from `seed`.
pub fn sampled_lossless_residual<T: Scalar>(
    system: &QuadraticSystem<T>,
    s: &DMatrix<T>,
    samples: usize,
    seed: u64,
) -> T {
    let n = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let y = random_unit::<T>(&mut rng, n);
            y.dot(&(s * system.eval_quadratic(&y))).abs()
        })
        .fold(T::zero(), |a, b| a.max(b))
}

pub(crate) fn random_unit<T: Scalar>(rng: &mut impl Rng, n: usize) -> DVector<T> {
    loop {
        let v = DVector::from_fn(n, |_, _| T::lit(rng.random_range(-1.0..1.0)));
        let nrm = v.norm();
        if nrm > T::lit(1e-3) && nrm <= T::one() {
            return v / nrm;
        }
    }
}

/// `theta -> sum_k theta_k B_k` over the symmetric lossless basis.
#[derive(Debug, Clone)]
pub struct HardParameterization<T: Scalar> {
    pub basis: Vec<DMatrix<T>>,
}

impl<T: Scalar> HardParameterization<T> {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn eval(&self, theta: &[T]) -> DMatrix<T> {
        let n = self.basis[0].nrows();
        self.basis
            .iter()
            .zip(theta)
            .fold(DMatrix::zeros(n, n), |acc, (b, t)| acc + b * *t)
    }

    /// Coordinates of `p` in the (orthonormal) basis.
    pub fn coordinates(&self, p: &DMatrix<T>) -> Vec<T> {
        self.basis.iter().map(|b| b.dot(p)).collect()
    }
}
