//! Solver-independent semidefinite programs.
//!
//! Programs are built from affine expressions over scalar and symmetric
//! matrix variables and solved by the dense interior-point routine in
//! [`barrier`]. Every answer is re-checked against the original constraints
//! before it is reported as optimal.

mod barrier;
mod expr;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

pub use expr::{LinExpr, MatExpr, MatrixVar, ScalarVar};

use crate::linalg::{lambda_min, max_abs};
use crate::Scalar;

/// Default duality-gap target (relative to `max(1, |objective|)`).
pub const DEFAULT_ACCURACY: f64 = 1e-9;
/// Margin used for strict inequalities when none is supplied.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Allowed slack violation (relative to the constraint scale) when a solution
/// is re-verified.
pub const VERIFY_TOL: f64 = 1e-7;
/// Allowed equality residual (relative) when a solution is re-verified.
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("product of two decision-variable expressions is not affine")]
    NonAffine,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("LMI expression is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint<T: Scalar> {
    /// `expr ⪰ 0`
    Psd(MatExpr<T>),
    /// `expr = 0`
    Equality(LinExpr<T>),
    /// `expr >= 0`
    NonNegative(LinExpr<T>),
    /// `||vector|| <= bound`
    SecondOrderCone {
        vector: MatExpr<T>,
        bound: LinExpr<T>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Inaccurate,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Scalar> {
    pub status: SolveStatus,
    pub values: Vec<T>,
    pub objective: T,
    /// Final duality gap of the interior-point run.
    pub accuracy: T,
    /// Smallest verified slack over all constraints, relative to each
    /// constraint's scale (negative means violated).
    pub min_slack: T,
    pub iterations: usize,
    pub message: String,
}

impl<T: Scalar> SolveResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: ScalarVar) -> T {
        self.values[v.0]
    }

    pub fn matrix(&self, v: MatrixVar) -> DMatrix<T> {
        DMatrix::from_fn(v.dim, v.dim, |i, j| self.values[v.slot(i, j)])
    }

    pub fn eval(&self, e: &MatExpr<T>) -> DMatrix<T> {
        e.eval(&self.values)
    }

    pub fn eval_lin(&self, e: &LinExpr<T>) -> T {
        e.eval(&self.values)
    }
}

#[derive(Debug, Clone)]
enum VarKind {
    Scalar,
    Matrix(usize),
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    kind: VarKind,
    offset: usize,
}

/// A linear objective over affine conic constraints.
#[derive(Debug, Clone)]
pub struct ConicProgram<T: Scalar> {
    vars: Vec<VarInfo>,
    slots: usize,
    objective: LinExpr<T>,
    constraints: Vec<Constraint<T>>,
}

impl<T: Scalar> Default for ConicProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ConicProgram<T> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            slots: 0,
            objective: LinExpr::constant(T::zero()),
            constraints: Vec::new(),
        }
    }

    pub fn scalar(&mut self, name: &str) -> ScalarVar {
        let v = ScalarVar(self.slots);
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind: VarKind::Scalar,
            offset: self.slots,
        });
        self.slots += 1;
        v
    }

    pub fn scalars(&mut self, name: &str, count: usize) -> Vec<ScalarVar> {
        (0..count)
            .map(|k| self.scalar(&format!("{name}[{k}]")))
            .collect()
    }

    pub fn symmetric(&mut self, name: &str, dim: usize) -> MatrixVar {
        let v = MatrixVar {
            offset: self.slots,
            dim,
        };
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind: VarKind::Matrix(dim),
            offset: self.slots,
        });
        self.slots += v.slots();
        v
    }

    pub fn num_slots(&self) -> usize {
        self.slots
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn minimize(&mut self, objective: LinExpr<T>) {
        self.objective = objective;
    }

    pub fn clear_objective(&mut self) {
        self.objective = LinExpr::constant(T::zero());
    }

    fn check_lmi(expr: &MatExpr<T>) -> Result<(), ConicError> {
        let (r, c) = expr.shape();
        if r != c {
            return Err(ConicError::Shape(format!("LMI expression is {r}x{c}")));
        }
        let asym = std::iter::once(&expr.constant)
            .chain(expr.terms.iter().map(|t| &t.1))
            .map(|m| {
                let scale = max_abs(m).max(T::one());
                max_abs(&(m - m.transpose())) / scale
            })
            .fold(T::zero(), |a, b| a.max(b));
        if asym > T::lit(1e-12) {
            return Err(ConicError::NotSymmetric(asym.as_f64()));
        }
        Ok(())
    }

    /// `expr ⪰ 0`
    pub fn add_psd(&mut self, expr: MatExpr<T>) -> Result<(), ConicError> {
        Self::check_lmi(&expr)?;
        self.constraints.push(Constraint::Psd(expr));
        Ok(())
    }

    /// `expr ⪯ 0`
    pub fn add_nsd(&mut self, expr: MatExpr<T>) -> Result<(), ConicError> {
        self.add_psd(-expr)
    }

    /// `expr ⪰ margin I`, the encoding of a strict inequality `expr ≻ 0`.
    pub fn add_pd(&mut self, expr: MatExpr<T>, margin: T) -> Result<(), ConicError> {
        let n = expr.shape().0;
        self.add_psd(expr - MatExpr::constant(DMatrix::identity(n, n) * margin))
    }

    /// `expr ⪯ -margin I`
    pub fn add_nd(&mut self, expr: MatExpr<T>, margin: T) -> Result<(), ConicError> {
        self.add_pd(-expr, margin)
    }

    pub fn add_eq(&mut self, expr: LinExpr<T>) {
        self.constraints.push(Constraint::Equality(expr));
    }

    /// `expr >= lower`
    pub fn add_ge(&mut self, expr: LinExpr<T>, lower: T) {
        self.constraints
            .push(Constraint::NonNegative(expr - LinExpr::constant(lower)));
    }

    /// `expr <= upper`
    pub fn add_le(&mut self, expr: LinExpr<T>, upper: T) {
        self.constraints
            .push(Constraint::NonNegative(LinExpr::constant(upper) - expr));
    }

    /// `||vector|| <= bound` for a column expression.
    pub fn add_soc(&mut self, vector: MatExpr<T>, bound: LinExpr<T>) -> Result<(), ConicError> {
        if vector.shape().1 != 1 {
            return Err(ConicError::Shape("cone vector must be a column".into()));
        }
        self.constraints
            .push(Constraint::SecondOrderCone { vector, bound });
        Ok(())
    }

    /// Solves to the requested relative duality-gap target.
    pub fn solve(&self, accuracy_target: T) -> SolveResult<T> {
        let mut res = barrier::solve(self, accuracy_target);
        if matches!(res.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
            let (slack, eq) = self.verify(&res.values);
            res.min_slack = slack;
            if slack < -T::lit(VERIFY_TOL) || eq > T::lit(EQUALITY_TOL) {
                res.status = SolveStatus::Inaccurate;
                res.message = format!(
                    "re-verification failed: min slack {:e}, equality residual {:e}",
                    slack.as_f64(),
                    eq.as_f64()
                );
            }
        }
        res
    }

    /// True iff the constraints (objective ignored) admit a point.
    pub fn lmi_feasible(&self) -> bool {
        let mut p = self.clone();
        p.clear_objective();
        p.solve(T::lit(DEFAULT_ACCURACY)).is_optimal()
    }

    /// Smallest relative slack over inequality constraints and largest
    /// relative equality residual at `x`.
    pub fn verify(&self, x: &[T]) -> (T, T) {
        let mut slack = T::lit(f64::INFINITY);
        let mut eq = T::zero();
        let rel = |v: T, scale: T| v / scale.max(T::one());
        for c in &self.constraints {
            match c {
                Constraint::Psd(e) => {
                    let m = e.eval(x);
                    slack = slack.min(rel(lambda_min(&m), expr_scale(e)));
                }
                Constraint::NonNegative(e) => {
                    slack = slack.min(rel(e.eval(x), lin_scale(e)));
                }
                Constraint::Equality(e) => {
                    eq = eq.max(rel(e.eval(x).abs(), lin_scale(e)));
                }
                Constraint::SecondOrderCone { vector, bound } => {
                    let v = vector.eval(x).norm();
                    let scale = expr_scale(vector).max(lin_scale(bound));
                    slack = slack.min(rel(bound.eval(x) - v, scale));
                }
            }
        }
        (slack, eq)
    }

    /// Human-readable listing of variables and constraints.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables ({} slots):", self.slots);
        for v in &self.vars {
            match v.kind {
                VarKind::Scalar => {
                    let _ = writeln!(s, "  scalar {} @{}", v.name, v.offset);
                }
                VarKind::Matrix(d) => {
                    let _ = writeln!(s, "  sym{d}x{d} {} @{}", v.name, v.offset);
                }
            }
        }
        let _ = writeln!(s, "minimize {}", fmt_lin(&self.objective));
        for (k, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Psd(e) => {
                    let _ = writeln!(
                        s,
                        "  [{k}] psd {}x{} with {} terms, constant {:?}",
                        e.shape().0,
                        e.shape().1,
                        e.terms.len(),
                        e.constant.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
                    );
                }
                Constraint::Equality(e) => {
                    let _ = writeln!(s, "  [{k}] {} = 0", fmt_lin(e));
                }
                Constraint::NonNegative(e) => {
                    let _ = writeln!(s, "  [{k}] {} >= 0", fmt_lin(e));
                }
                Constraint::SecondOrderCone { vector, bound } => {
                    let _ = writeln!(
                        s,
                        "  [{k}] ||v_{}|| <= {}",
                        vector.shape().0,
                        fmt_lin(bound)
                    );
                }
            }
        }
        s
    }
}

fn fmt_lin<T: Scalar>(e: &LinExpr<T>) -> String {
    let mut s = format!("{}", e.constant.as_f64());
    for (i, c) in &e.terms {
        let _ = write!(s, " + {}*x{}", c.as_f64(), i);
    }
    s
}

pub(crate) fn expr_scale<T: Scalar>(e: &MatExpr<T>) -> T {
    e.terms
        .iter()
        .map(|t| max_abs(&t.1))
        .fold(max_abs(&e.constant), |a, b| a.max(b))
}

fn lin_scale<T: Scalar>(e: &LinExpr<T>) -> T {
    e.terms
        .iter()
        .fold(e.constant.abs(), |a, t| a.max(t.1.abs()))
}
