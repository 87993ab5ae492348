//! Shift-coordinate search: alternate between `P` and `m` in
//! `min a  s.t.  P L(m) + L(m)^T P ⪯ a I, ||m|| <= delta_m, P lossless`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{admissible_p, PipelineConfig};
use crate::conic::{ConicProgram, LinExpr, MatExpr};
use crate::error::{Error, Result};
use crate::lossless::{random_unit, LosslessStructure};
use crate::model::QuadraticSystem;
use crate::Scalar;

/// Lower bound on `P` for the reported `a*`, with `trace(P) = n`.
const P_FLOOR: f64 = 1e-6;
/// Condition-number cap `I ⪯ P ⪯ P_CEILING I` used while alternating.
const P_CEILING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Normalization {
    Trace,
    Box,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSolution<T: Scalar> {
    pub m_star: DVector<T>,
    pub p_star: DMatrix<T>,
    pub a_star: T,
    pub iterations: usize,
    /// Index of the restart that produced this solution.
    pub restart: usize,
    pub restarts_used: usize,
    pub seed: u64,
}

impl<T: Scalar> ShiftSolution<T> {
    /// `a* < 0` certifies that some trapping region exists.
    pub fn certifies(&self) -> bool {
        self.a_star < T::zero()
    }
}

fn p_step<T: Scalar>(
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    m: &DVector<T>,
    config: &PipelineConfig,
    normalization: Normalization,
) -> Option<(T, DMatrix<T>)> {
    let n = system.dim();
    let l = system.linear_part(m);
    let mut prog = ConicProgram::new();
    let a = prog.scalar("a");
    let p = admissible_p(&mut prog, structure, config.constraint_mode);
    let lhs = p.mul_right(&l).sym() - MatExpr::scalar_times(a, DMatrix::identity(n, n));
    prog.add_nsd(lhs).ok()?;
    match normalization {
        Normalization::Trace => {
            prog.add_eq(p.trace() - LinExpr::constant(T::lit(n as f64)));
            prog.add_pd(p.clone(), T::lit(P_FLOOR)).ok()?;
        }
        Normalization::Box => {
            let eye = DMatrix::identity(n, n);
            prog.add_psd(p.clone() - MatExpr::constant(eye.clone()))
                .ok()?;
            prog.add_psd(MatExpr::constant(eye * T::lit(P_CEILING)) - p.clone())
                .ok()?;
        }
    }
    prog.minimize(a.into());
    let res = prog.solve(T::lit(config.solver_accuracy));
    res.is_optimal()
        .then(|| (res.value(a), crate::linalg::symmetrize(&res.eval(&p))))
}

fn m_step<T: Scalar>(
    system: &QuadraticSystem<T>,
    p: &DMatrix<T>,
    config: &PipelineConfig,
) -> Option<(T, DVector<T>)> {
    let n = system.dim();
    let mut prog = ConicProgram::new();
    let a = prog.scalar("a");
    let m = prog.scalars("m", n);
    let grads = system.linear_part_gradients();
    // P L(m) + L(m)^T P with L(m) = A + sum_k m_k J_k
    let mut lhs = MatExpr::constant(p * system.a() + system.a().transpose() * p)
        - MatExpr::scalar_times(a, DMatrix::identity(n, n));
    for (k, j) in grads.iter().enumerate() {
        lhs = lhs + MatExpr::scalar_times(m[k], p * j + j.transpose() * p);
    }
    prog.add_nsd(lhs).ok()?;
    let vector = MatExpr::combination(
        &m,
        &(0..n)
            .map(|k| {
                let mut e = DMatrix::zeros(n, 1);
                e[k] = T::one();
                e
            })
            .collect::<Vec<_>>(),
    );
    prog.add_soc(vector, LinExpr::constant(T::lit(config.delta_m)))
        .ok()?;
    prog.minimize(a.into());
    let res = prog.solve(T::lit(config.solver_accuracy));
    res.is_optimal().then(|| {
        (
            res.value(a),
            DVector::from_iterator(n, m.iter().map(|v| res.value(*v))),
        )
    })
}

fn alternate<T: Scalar>(
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    config: &PipelineConfig,
    restart: usize,
) -> Option<ShiftSolution<T>> {
    let seed = config.rng_seed.wrapping_add(restart as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.dim();
    let mut m: DVector<T> = random_unit(&mut rng, n);
    if m.norm() > T::lit(config.delta_m) {
        m *= T::lit(config.delta_m) / m.norm();
    }
    let (mut a, mut p) = p_step(system, structure, &m, config, Normalization::Box)?;
    let mut iterations = 0;
    for _ in 0..config.alternation_max_iters {
        iterations += 1;
        let Some((_, m_new)) = m_step(system, &p, config) else {
            break;
        };
        let Some((a_new, p_new)) = p_step(system, structure, &m_new, config, Normalization::Box)
        else {
            break;
        };
        let delta = (a - a_new).abs();
        m = m_new;
        p = p_new;
        a = a_new;
        if delta <= T::lit(config.alternation_tol) {
            break;
        }
    }
    // the reported bound uses the trace normalization
    let (a, p) = p_step(system, structure, &m, config, Normalization::Trace)?;
    Some(ShiftSolution {
        m_star: m,
        p_star: p,
        a_star: a,
        iterations,
        restart,
        restarts_used: config.restarts,
        seed: config.rng_seed,
    })
}

/// Best of `config.restarts` seeded alternations (lowest `a`).
pub fn optimize_shift<T: Scalar>(
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    config: &PipelineConfig,
) -> Result<ShiftSolution<T>> {
    config.validate()?;
    let runs: Vec<ShiftSolution<T>> = (0..config.restarts)
        .into_par_iter()
        .filter_map(|k| alternate(system, structure, config, k))
        .collect();
    runs.into_iter()
        .min_by(|x, y| {
            x.a_star
                .partial_cmp(&y.a_star)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.restart.cmp(&y.restart))
        })
        .ok_or_else(|| {
            Error::Inapplicable(
                "every restart of the shift search was infeasible (no positive definite lossless P)"
                    .into(),
            )
        })
}
