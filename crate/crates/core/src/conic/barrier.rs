//! Dense log-barrier interior-point method for
//! `min c^T z  s.t.  F_b(z) = F_b0 + sum_k z_k F_bk ⪰ 0` for every block `b`,
//! with a phase-one problem for a strictly feasible start.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{expr_scale, ConicProgram, Constraint, SolveResult, SolveStatus, VERIFY_TOL};
use crate::linalg::{lambda_min, max_abs, null_space};
use crate::Scalar;

const MU: f64 = 10.0;
const MAX_NEWTON: usize = 600;
const MAX_CENTERING: usize = 60;
const CENTERING_TOL: f64 = 1e-10;
/// Radius of the bounding ball added to every problem, relative to the
/// magnitude of the equality-constrained particular solution.
const BALL_RADIUS: f64 = 1e8;

#[derive(Debug, Clone)]
struct Block<T: Scalar> {
    f0: DMatrix<T>,
    terms: Vec<(usize, DMatrix<T>)>,
}

impl<T: Scalar> Block<T> {
    fn eval(&self, z: &DVector<T>) -> DMatrix<T> {
        self.terms
            .iter()
            .fold(self.f0.clone(), |acc, (k, m)| acc + m * z[*k])
    }

    fn size(&self) -> usize {
        self.f0.nrows()
    }
}

/// Constant term and per-variable coefficients of one LMI block.
type RawBlock<T> = (DMatrix<T>, Vec<(usize, DMatrix<T>)>);

/// Raw (x-space) block from a constraint; `None` for equalities.
fn raw_block<T: Scalar>(c: &Constraint<T>) -> Option<RawBlock<T>> {
    match c {
        Constraint::Psd(e) => Some((e.constant.clone(), e.terms.clone())),
        Constraint::NonNegative(e) => Some((
            DMatrix::from_element(1, 1, e.constant),
            e.terms
                .iter()
                .map(|&(i, v)| (i, DMatrix::from_element(1, 1, v)))
                .collect(),
        )),
        Constraint::SecondOrderCone { vector, bound } => {
            let k = vector.shape().0;
            let arrow = |v: &DMatrix<T>, t: T| {
                let mut m = DMatrix::identity(k + 1, k + 1) * t;
                for i in 0..k {
                    m[(i, k)] = v[(i, 0)];
                    m[(k, i)] = v[(i, 0)];
                }
                m
            };
            let mut terms: Vec<(usize, DMatrix<T>)> = Vec::new();
            let zero_v = DMatrix::zeros(k, 1);
            let mut slots: Vec<usize> = vector
                .terms
                .iter()
                .map(|t| t.0)
                .chain(bound.terms.iter().map(|t| t.0))
                .collect();
            slots.sort_unstable();
            slots.dedup();
            for s in slots {
                let v = vector
                    .terms
                    .iter()
                    .find(|t| t.0 == s)
                    .map(|t| t.1.clone())
                    .unwrap_or_else(|| zero_v.clone());
                let t = bound
                    .terms
                    .iter()
                    .find(|t| t.0 == s)
                    .map(|t| t.1)
                    .unwrap_or_else(T::zero);
                terms.push((s, arrow(&v, t)));
            }
            Some((arrow(&vector.constant, bound.constant), terms))
        }
        Constraint::Equality(_) => None,
    }
}

fn chol<T: Scalar>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
}

/// Barrier value `-sum log det F_b(z)`; `None` outside the interior.
fn barrier_value<T: Scalar>(blocks: &[Block<T>], z: &DVector<T>) -> Option<T> {
    let mut v = T::zero();
    for b in blocks {
        let c = chol(&b.eval(z))?;
        for i in 0..b.size() {
            let d = c.l_dirty()[(i, i)];
            if d <= T::zero() || !d.finite() {
                return None;
            }
            v -= T::lit(2.0) * d.ln();
        }
    }
    Some(v)
}

/// Gradient and Hessian of the barrier at an interior point.
fn barrier_derivatives<T: Scalar>(
    blocks: &[Block<T>],
    z: &DVector<T>,
) -> Option<(DVector<T>, DMatrix<T>)> {
    let k = z.len();
    let mut g = DVector::zeros(k);
    let mut h = DMatrix::zeros(k, k);
    for b in blocks {
        let c = chol(&b.eval(z))?;
        let l = c.l();
        // W = L^{-1} F_k L^{-T}
        let ws: Vec<(usize, DMatrix<T>)> = b
            .terms
            .iter()
            .map(|(idx, fk)| {
                let a = l.solve_lower_triangular(fk)?;
                let w = l.solve_lower_triangular(&a.transpose())?;
                Some((*idx, w))
            })
            .collect::<Option<_>>()?;
        for (a, (ia, wa)) in ws.iter().enumerate() {
            g[*ia] -= wa.trace();
            for (ib, wb) in ws.iter().skip(a) {
                let v = wa.dot(wb);
                h[(*ia, *ib)] += v;
                if ia != ib {
                    h[(*ib, *ia)] += v;
                }
            }
        }
    }
    Some((g, h))
}

fn newton_direction<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>) -> Option<DVector<T>> {
    let scale = (0..h.nrows()).fold(T::zero(), |a, i| a.max(h[(i, i)].abs()));
    let mut reg = T::zero();
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(hr) {
            let d = c.solve(&(-g));
            if d.iter().all(|v| v.finite()) {
                return Some(d);
            }
        }
        reg = if reg == T::zero() {
            scale.max(T::one()) * T::lit(1e-14)
        } else {
            reg * T::lit(100.0)
        };
    }
    None
}

enum Stop {
    /// Phase one found a point with `s < 0`.
    Feasible,
    /// Phase one certified `s* > 0`.
    Infeasible,
    Converged,
    Stalled,
}

struct Run<T: Scalar> {
    z: DVector<T>,
    gap: T,
    iterations: usize,
    stop: Stop,
}

/// Path following from a strictly feasible `z0`. `phase_one` is the index of
/// the auxiliary variable `s` when solving the feasibility problem.
fn path_follow<T: Scalar>(
    blocks: &[Block<T>],
    c: &DVector<T>,
    c0: T,
    z0: DVector<T>,
    accuracy: T,
    phase_one: Option<usize>,
) -> Run<T> {
    let m_total = T::lit(blocks.iter().map(|b| b.size()).sum::<usize>() as f64);
    let mut z = z0;
    let mut iterations = 0;

    let mut t = match barrier_derivatives(blocks, &z) {
        Some((gb, _)) => {
            let cc = c.dot(c);
            let fit = if cc > T::zero() {
                -c.dot(&gb) / cc
            } else {
                T::one()
            };
            if fit.finite() && fit > T::zero() {
                fit.max(T::lit(1e-6)).min(T::lit(1e6))
            } else {
                T::one()
            }
        }
        None => T::one(),
    };

    loop {
        let mut inner = 0;
        // centering
        loop {
            if let Some(s) = phase_one {
                if z[s] < T::zero() {
                    return Run {
                        z,
                        gap: m_total / t,
                        iterations,
                        stop: Stop::Feasible,
                    };
                }
            }
            if iterations >= MAX_NEWTON {
                return Run {
                    z,
                    gap: m_total / t,
                    iterations,
                    stop: Stop::Stalled,
                };
            }
            let Some((gb, h)) = barrier_derivatives(blocks, &z) else {
                return Run {
                    z,
                    gap: m_total / t,
                    iterations,
                    stop: Stop::Stalled,
                };
            };
            let g = c * t + gb;
            let Some(dz) = newton_direction(&h, &g) else {
                return Run {
                    z,
                    gap: m_total / t,
                    iterations,
                    stop: Stop::Stalled,
                };
            };
            iterations += 1;
            let decrement = -g.dot(&dz);
            if decrement * T::lit(0.5) <= T::lit(CENTERING_TOL) {
                break;
            }
            let b0 = barrier_value(blocks, &z).unwrap_or(T::zero());
            let slope = t * c.dot(&dz);
            let mut step = T::one();
            let mut moved = false;
            // Inside the quadratic-convergence region the full step is taken
            // whenever it stays interior.
            let full_ok = decrement.sqrt() < T::lit(0.25);
            while step > T::lit(1e-14) {
                let trial = &z + &dz * step;
                if let Some(bv) = barrier_value(blocks, &trial) {
                    let change = slope * step + (bv - b0);
                    if full_ok || change <= -T::lit(0.01) * step * decrement {
                        z = trial;
                        moved = true;
                        break;
                    }
                }
                step *= T::lit(0.5);
            }
            inner += 1;
            if !moved || inner >= MAX_CENTERING {
                // numerical floor of the line search: accept current centering
                break;
            }
        }

        let gap = m_total / t;
        if let Some(s) = phase_one {
            if z[s] - gap > T::zero() {
                return Run {
                    z,
                    gap,
                    iterations,
                    stop: Stop::Infeasible,
                };
            }
            if gap < T::lit(1e-13) {
                // s* is within 1e-13 of zero: no usable interior
                return Run {
                    z,
                    gap,
                    iterations,
                    stop: Stop::Infeasible,
                };
            }
        } else {
            let obj = c.dot(&z) + c0;
            if gap <= accuracy * obj.abs().max(T::one()) {
                return Run {
                    z,
                    gap,
                    iterations,
                    stop: Stop::Converged,
                };
            }
        }
        t *= T::lit(MU);
    }
}

fn result<T: Scalar>(
    status: SolveStatus,
    values: Vec<T>,
    objective: T,
    accuracy: T,
    iterations: usize,
    message: impl Into<String>,
) -> SolveResult<T> {
    SolveResult {
        status,
        values,
        objective,
        accuracy,
        min_slack: T::zero(),
        iterations,
        message: message.into(),
    }
}

pub(super) fn solve<T: Scalar>(program: &ConicProgram<T>, accuracy: T) -> SolveResult<T> {
    let n = program.slots;
    let nan_values = || vec![T::lit(f64::NAN); n];

    // Eliminate equalities: x = x0 + B z.
    let eqs: Vec<_> = program
        .constraints
        .iter()
        .filter_map(|c| match c {
            Constraint::Equality(e) => Some(e),
            _ => None,
        })
        .collect();
    let (x0, basis) = if eqs.is_empty() {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let mut e = DMatrix::zeros(eqs.len(), n);
        let mut f = DVector::zeros(eqs.len());
        for (r, eq) in eqs.iter().enumerate() {
            f[r] = -eq.constant;
            for &(i, v) in &eq.terms {
                e[(r, i)] += v;
            }
        }
        let svd = nalgebra::SVD::new(e.clone(), true, true);
        let smax = svd.singular_values.iter().fold(T::zero(), |a, b| a.max(*b));
        let x0 = match svd.solve(&f, smax * T::lit(1e-12)) {
            Ok(x) => x,
            Err(msg) => {
                return result(
                    SolveStatus::Failed,
                    nan_values(),
                    T::zero(),
                    T::zero(),
                    0,
                    msg,
                )
            }
        };
        let resid = (&e * &x0 - &f).norm();
        let scale = max_abs(&e).max(f.norm()).max(T::one());
        if resid > T::lit(1e-9) * scale {
            return result(
                SolveStatus::Infeasible,
                nan_values(),
                T::zero(),
                T::zero(),
                0,
                format!(
                    "equality constraints inconsistent (residual {:e})",
                    resid.as_f64()
                ),
            );
        }
        (x0, null_space(&e, T::lit(1e-12)))
    };
    let k = basis.ncols();

    // Map every inequality block into z-space.
    let mut blocks = Vec::new();
    for c in &program.constraints {
        let Some((f0, terms)) = raw_block(c) else {
            continue;
        };
        let scale_in = expr_scale(&super::MatExpr {
            constant: f0.clone(),
            terms: terms.clone(),
        });
        let mut g0 = f0;
        for (i, fi) in &terms {
            g0 += fi * x0[*i];
        }
        let mut zterms = Vec::new();
        for col in 0..k {
            let mut acc = DMatrix::zeros(g0.nrows(), g0.ncols());
            for (i, fi) in &terms {
                let w = basis[(*i, col)];
                if w != T::zero() {
                    acc += fi * w;
                }
            }
            if max_abs(&acc) > T::lit(1e-14) * scale_in.max(T::one()) {
                zterms.push((col, acc));
            }
        }
        if zterms.is_empty() {
            let lm = lambda_min(&g0);
            if lm < -T::lit(VERIFY_TOL) * max_abs(&g0).max(T::one()) {
                return result(
                    SolveStatus::Infeasible,
                    nan_values(),
                    T::zero(),
                    T::zero(),
                    0,
                    format!(
                        "constant constraint violated (min eigenvalue {:e})",
                        lm.as_f64()
                    ),
                );
            }
            continue;
        }
        let s = zterms
            .iter()
            .map(|t| max_abs(&t.1))
            .fold(max_abs(&g0), |a, b| a.max(b));
        let inv = T::one() / s;
        blocks.push(Block {
            f0: g0 * inv,
            terms: zterms.into_iter().map(|(i, m)| (i, m * inv)).collect(),
        });
    }

    let c_x = {
        let mut c = DVector::zeros(n);
        for &(i, v) in &program.objective.terms {
            c[i] += v;
        }
        c
    };
    let c0 = program.objective.constant + c_x.dot(&x0);
    let cz = basis.transpose() * &c_x;
    let to_x = |z: &DVector<T>| -> Vec<T> { (&x0 + &basis * z).iter().copied().collect() };

    if k == 0 || blocks.is_empty() && cz.iter().all(|v| *v == T::zero()) {
        let z = DVector::zeros(k);
        return result(SolveStatus::Optimal, to_x(&z), c0, T::zero(), 0, "trivial");
    }

    // Bounding ball ||z|| <= R keeps every centering problem bounded.
    let radius = T::lit(BALL_RADIUS) * x0.norm().max(T::one());
    {
        let mut f0 = DMatrix::identity(k + 1, k + 1);
        let mut terms = Vec::with_capacity(k);
        for i in 0..k {
            let mut m = DMatrix::zeros(k + 1, k + 1);
            m[(i, k)] = T::one() / radius;
            m[(k, i)] = T::one() / radius;
            terms.push((i, m));
        }
        f0[(k, k)] = T::one();
        blocks.push(Block { f0, terms });
    }

    let mut z = DVector::zeros(k);
    let mut iterations = 0;
    if barrier_value(&blocks, &z).is_none() {
        // phase one: min s  s.t.  F_b(z) + s I ⪰ 0,  s >= -1
        let s_idx = k;
        let shift = blocks
            .iter()
            .map(|b| -lambda_min(&b.f0))
            .fold(T::zero(), |a, b| a.max(b));
        let mut aux: Vec<Block<T>> = blocks
            .iter()
            .map(|b| {
                let mut terms = b.terms.clone();
                terms.push((s_idx, DMatrix::identity(b.size(), b.size())));
                Block {
                    f0: b.f0.clone(),
                    terms,
                }
            })
            .collect();
        aux.push(Block {
            f0: DMatrix::from_element(1, 1, T::one()),
            terms: vec![(s_idx, DMatrix::from_element(1, 1, T::one()))],
        });
        let mut c1 = DVector::zeros(k + 1);
        c1[s_idx] = T::one();
        let mut z1 = DVector::zeros(k + 1);
        z1[s_idx] = shift + T::one();
        let run = path_follow(&aux, &c1, T::zero(), z1, accuracy, Some(s_idx));
        iterations += run.iterations;
        match run.stop {
            Stop::Feasible => {
                z = run.z.rows(0, k).into_owned();
            }
            Stop::Infeasible => {
                return result(
                    SolveStatus::Infeasible,
                    nan_values(),
                    T::zero(),
                    run.gap,
                    iterations,
                    format!("phase one optimum s = {:e} > 0", run.z[s_idx].as_f64()),
                );
            }
            _ => {
                return result(
                    SolveStatus::Failed,
                    nan_values(),
                    T::zero(),
                    run.gap,
                    iterations,
                    "phase one stalled",
                );
            }
        }
    }

    if cz.iter().all(|v| *v == T::zero()) {
        return result(
            SolveStatus::Optimal,
            to_x(&z),
            c0,
            T::zero(),
            iterations,
            "feasible point",
        );
    }

    let run = path_follow(&blocks, &cz, c0, z, accuracy, None);
    iterations += run.iterations;
    let objective = cz.dot(&run.z) + c0;
    if run.z.norm() > radius * T::lit(0.5) {
        return result(
            SolveStatus::Failed,
            to_x(&run.z),
            objective,
            run.gap,
            iterations,
            "iterates reached the bounding ball: problem appears unbounded",
        );
    }
    let status = match run.stop {
        Stop::Converged => SolveStatus::Optimal,
        _ => SolveStatus::Inaccurate,
    };
    result(status, to_x(&run.z), objective, run.gap, iterations, "")
}
