//! Affine expressions over the scalar slots of a [`ConicProgram`](super::ConicProgram).

use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;

use super::ConicError;
use crate::Scalar;

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalarVar(pub(crate) usize);

/// Handle to a symmetric matrix decision variable. Occupies `dim (dim + 1) / 2`
/// consecutive scalar slots holding the upper triangle, row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixVar {
    pub(crate) offset: usize,
    pub(crate) dim: usize,
}

impl MatrixVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row r of the upper triangle holds dim - r entries
        self.offset + i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub(crate) fn slots(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// The matrix variable itself as an affine expression.
    pub fn expr<T: Scalar>(&self) -> MatExpr<T> {
        let n = self.dim;
        let mut terms = Vec::with_capacity(self.slots());
        for i in 0..n {
            for j in i..n {
                let mut e = DMatrix::zeros(n, n);
                e[(i, j)] = T::one();
                e[(j, i)] = T::one();
                terms.push((self.slot(i, j), e));
            }
        }
        MatExpr {
            constant: DMatrix::zeros(n, n),
            terms,
        }
    }

    /// A single entry `X_ij` as a scalar expression.
    pub fn entry<T: Scalar>(&self, i: usize, j: usize) -> LinExpr<T> {
        LinExpr::var(ScalarVar(self.slot(i, j)))
    }

    /// `trace(X)`.
    pub fn trace<T: Scalar>(&self) -> LinExpr<T> {
        (0..self.dim).fold(LinExpr::constant(T::zero()), |acc, i| {
            acc + self.entry(i, i)
        })
    }
}

/// Scalar affine expression `constant + sum coef * slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr<T: Scalar> {
    pub(crate) constant: T,
    pub(crate) terms: Vec<(usize, T)>,
}

impl<T: Scalar> LinExpr<T> {
    pub fn constant(c: T) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(v: ScalarVar) -> Self {
        Self::term(v, T::one())
    }

    pub fn term(v: ScalarVar, coef: T) -> Self {
        Self {
            constant: T::zero(),
            terms: vec![(v.0, coef)],
        }
    }

    pub fn scale(mut self, k: T) -> Self {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == T::zero())
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    fn merged(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, T)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != T::zero());
        self.terms = out;
        self
    }
}

impl<T: Scalar> Add for LinExpr<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self.merged()
    }
}

impl<T: Scalar> Neg for LinExpr<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Sub for LinExpr<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Scalar> From<ScalarVar> for LinExpr<T> {
    fn from(v: ScalarVar) -> Self {
        Self::var(v)
    }
}

/// Rectangular affine matrix expression `C + sum slot * M_slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr<T: Scalar> {
    pub(crate) constant: DMatrix<T>,
    pub(crate) terms: Vec<(usize, DMatrix<T>)>,
}

impl<T: Scalar> MatExpr<T> {
    pub fn constant(m: DMatrix<T>) -> Self {
        Self {
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    /// `coef * v` where `coef` is a constant matrix.
    pub fn scalar_times(v: ScalarVar, coef: DMatrix<T>) -> Self {
        Self {
            constant: DMatrix::zeros(coef.nrows(), coef.ncols()),
            terms: vec![(v.0, coef)],
        }
    }

    /// A `1 x 1` expression from a scalar one.
    pub fn from_lin(e: &LinExpr<T>) -> Self {
        Self {
            constant: DMatrix::from_element(1, 1, e.constant),
            terms: e
                .terms
                .iter()
                .map(|&(i, c)| (i, DMatrix::from_element(1, 1, c)))
                .collect(),
        }
    }

    /// `sum_k theta_k B_k` for scalar variables `theta`.
    pub fn combination(vars: &[ScalarVar], mats: &[DMatrix<T>]) -> Self {
        assert_eq!(vars.len(), mats.len());
        assert!(!mats.is_empty());
        Self {
            constant: DMatrix::zeros(mats[0].nrows(), mats[0].ncols()),
            terms: vars
                .iter()
                .zip(mats)
                .map(|(v, m)| (v.0, m.clone()))
                .collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.1.iter().all(|v| *v == T::zero()))
    }

    pub fn scale(mut self, k: T) -> Self {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    pub fn transpose(&self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|(i, m)| (*i, m.transpose()))
                .collect(),
        }
    }

    /// `self * m` for a constant `m`.
    pub fn mul_right(&self, m: &DMatrix<T>) -> Self {
        Self {
            constant: &self.constant * m,
            terms: self.terms.iter().map(|(i, t)| (*i, t * m)).collect(),
        }
    }

    /// `m * self` for a constant `m`.
    pub fn mul_left(&self, m: &DMatrix<T>) -> Self {
        Self {
            constant: m * &self.constant,
            terms: self.terms.iter().map(|(i, t)| (*i, m * t)).collect(),
        }
    }

    /// `self * rhs`; fails unless at least one side is constant.
    pub fn try_mul(&self, rhs: &Self) -> Result<Self, ConicError> {
        if self.is_constant() {
            Ok(rhs.mul_left(&self.constant))
        } else if rhs.is_constant() {
            Ok(self.mul_right(&rhs.constant))
        } else {
            Err(ConicError::NonAffine)
        }
    }

    /// `self * e` for a scalar expression; fails unless one side is constant.
    pub fn try_mul_lin(&self, e: &LinExpr<T>) -> Result<Self, ConicError> {
        let rhs = MatExpr::from_lin(e);
        if self.is_constant() {
            let c = self.constant.clone();
            Ok(Self {
                constant: &c * rhs.constant[(0, 0)],
                terms: rhs
                    .terms
                    .iter()
                    .map(|(i, t)| (*i, &c * t[(0, 0)]))
                    .collect(),
            })
        } else if e.is_constant() {
            Ok(self.clone().scale(e.constant))
        } else {
            Err(ConicError::NonAffine)
        }
    }

    /// Trace of a square expression.
    pub fn trace(&self) -> LinExpr<T> {
        LinExpr {
            constant: self.constant.trace(),
            terms: self.terms.iter().map(|(i, m)| (*i, m.trace())).collect(),
        }
        .merged()
    }

    /// Entry `(i, j)` as a scalar expression.
    pub fn entry(&self, i: usize, j: usize) -> LinExpr<T> {
        LinExpr {
            constant: self.constant[(i, j)],
            terms: self.terms.iter().map(|(k, m)| (*k, m[(i, j)])).collect(),
        }
        .merged()
    }

    /// `self + self^T`.
    pub fn sym(&self) -> Self {
        self.clone() + self.transpose()
    }

    /// Assembles a block matrix; blocks in a row share a height and blocks
    /// in a column share a width.
    pub fn block(rows: &[Vec<MatExpr<T>>]) -> Result<Self, ConicError> {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].shape().0).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.shape().1).collect();
        for (ri, r) in rows.iter().enumerate() {
            if r.len() != widths.len() {
                return Err(ConicError::Shape("ragged block rows".into()));
            }
            for (ci, b) in r.iter().enumerate() {
                if b.shape() != (heights[ri], widths[ci]) {
                    return Err(ConicError::Shape(format!(
                        "block ({ri},{ci}) is {:?}, expected {:?}",
                        b.shape(),
                        (heights[ri], widths[ci])
                    )));
                }
            }
        }
        let (h, w) = (heights.iter().sum(), widths.iter().sum());
        let mut out = MatExpr::zeros(h, w);
        let mut r0 = 0;
        for (ri, r) in rows.iter().enumerate() {
            let mut c0 = 0;
            for (ci, b) in r.iter().enumerate() {
                let mut placed = MatExpr::zeros(h, w);
                placed
                    .constant
                    .view_mut((r0, c0), b.shape())
                    .copy_from(&b.constant);
                for (i, t) in &b.terms {
                    let mut m = DMatrix::zeros(h, w);
                    m.view_mut((r0, c0), b.shape()).copy_from(t);
                    placed.terms.push((*i, m));
                }
                out = out + placed;
                c0 += widths[ci];
            }
            r0 += heights[ri];
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[T]) -> DMatrix<T> {
        self.terms
            .iter()
            .fold(self.constant.clone(), |acc, (i, m)| acc + m * x[*i])
    }

    fn merged(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, DMatrix<T>)> = Vec::with_capacity(self.terms.len());
        for (i, m) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += m,
                _ => out.push((i, m)),
            }
        }
        out.retain(|t| t.1.iter().any(|v| *v != T::zero()));
        self.terms = out;
        self
    }
}

impl<T: Scalar> Add for MatExpr<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in affine sum");
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self.merged()
    }
}

impl<T: Scalar> Neg for MatExpr<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Sub for MatExpr<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}
