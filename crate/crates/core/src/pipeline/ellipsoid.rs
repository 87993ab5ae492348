//! The ellipsoid SDP at fixed `(m, chi)`, its sweep over a chi grid, and the
//! GEVP refinement by bisection on `r`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{admissible_p, EllipsoidCertificate, PipelineConfig, Stage};
use crate::conic::{ConicProgram, LinExpr, MatExpr, ScalarVar};
use crate::linalg::lambda_min;
use crate::lossless::LosslessStructure;
use crate::model::QuadraticSystem;
use crate::Scalar;

/// Relative tolerance of the GEVP bisection on `r`.
const BISECTION_TOL: f64 = 1e-6;

/// ```text
/// Theta(m, P, r, chi) = [ P L + L^T P + chi P    P c      ]
///                       [ c^T P                  -chi r^2 ]
/// ```
pub fn theta<T: Scalar>(
    system: &QuadraticSystem<T>,
    m: &DVector<T>,
    p: &DMatrix<T>,
    r: T,
    chi: T,
) -> DMatrix<T> {
    let n = system.dim();
    let sh = system.shift(m);
    let mut th = DMatrix::zeros(n + 1, n + 1);
    let top = p * &sh.l + sh.l.transpose() * p + p * chi;
    th.view_mut((0, 0), (n, n)).copy_from(&top);
    let pc = p * &sh.c;
    for i in 0..n {
        th[(i, n)] = pc[i];
        th[(n, i)] = pc[i];
    }
    th[(n, n)] = -chi * r * r;
    th
}

/// Theta as an affine expression. At most one of the factors in each
/// product may be a decision variable.
pub(crate) fn theta_expr<T: Scalar>(
    p: &MatExpr<T>,
    l: &MatExpr<T>,
    c: &MatExpr<T>,
    chi: &LinExpr<T>,
    r2: &LinExpr<T>,
) -> Result<MatExpr<T>, crate::conic::ConicError> {
    let pl = p.try_mul(l)?;
    let top = pl.sym() + p.try_mul_lin(chi)?;
    let pc = p.try_mul(c)?;
    let corner = MatExpr::from_lin(r2).try_mul_lin(chi)?.scale(-T::one());
    MatExpr::block(&[vec![top, pc.clone()], vec![pc.transpose(), corner]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidFit<T: Scalar> {
    pub p: DMatrix<T>,
    pub r: T,
    pub chi: T,
}

/// `min r^2 (+ w trace P)  s.t.  Theta(m, P, r, chi) ⪯ -eps I, P ⪰ I, P lossless`
/// at fixed `chi`. `None` when infeasible at this `chi`.
pub fn ellipsoid_sdp<T: Scalar>(
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    m: &DVector<T>,
    chi: T,
    config: &PipelineConfig,
) -> Option<EllipsoidFit<T>> {
    let n = system.dim();
    let sh = system.shift(m);
    let mut prog = ConicProgram::new();
    let r2 = prog.scalar("r2");
    let p = admissible_p(&mut prog, structure, config.constraint_mode);
    let th = theta_expr(
        &p,
        &MatExpr::constant(sh.l),
        &MatExpr::constant(DMatrix::from_column_slice(n, 1, sh.c.as_slice())),
        &LinExpr::constant(chi),
        &LinExpr::var(r2),
    )
    .ok()?;
    prog.add_nd(th, T::lit(config.epsilon)).ok()?;
    prog.add_psd(p.clone() - MatExpr::constant(DMatrix::identity(n, n)))
        .ok()?;
    prog.minimize(LinExpr::var(r2) + p.trace().scale(T::lit(config.trace_weight)));
    let res = prog.solve(T::lit(config.solver_accuracy));
    if !res.is_optimal() {
        return None;
    }
    let pv = crate::linalg::symmetrize(&res.eval(&p));
    Some(EllipsoidFit {
        p: pv,
        r: res.value(r2).max(T::zero()).sqrt(),
        chi,
    })
}

/// One point of the chi sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub chi: f64,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
}

impl SweepPoint {
    pub fn feasible(&self) -> bool {
        self.alpha.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome<T: Scalar> {
    pub best: Option<EllipsoidCertificate<T>>,
    pub sweep: Vec<SweepPoint>,
}

/// Solves the ellipsoid SDP at every grid point and keeps the smallest alpha.
pub fn grid_search<T: Scalar>(
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    m: &DVector<T>,
    config: &PipelineConfig,
) -> GridOutcome<T> {
    let fits: Vec<Option<EllipsoidFit<T>>> = config
        .chi_grid
        .par_iter()
        .map(|&chi| ellipsoid_sdp(system, structure, m, T::lit(chi), config))
        .collect();
    let alpha = |f: &EllipsoidFit<T>| f.r / lambda_min(&f.p).sqrt();
    let sweep = config
        .chi_grid
        .iter()
        .zip(&fits)
        .map(|(&chi, f)| SweepPoint {
            chi,
            r: f.as_ref().map(|f| f.r.as_f64()),
            alpha: f.as_ref().map(|f| alpha(f).as_f64()),
        })
        .collect();
    let best = fits
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            alpha(a)
                .partial_cmp(&alpha(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|f| {
            EllipsoidCertificate::new(
                system,
                structure,
                m.clone(),
                f.p,
                f.r,
                f.chi,
                Stage::Grid,
                T::lit(config.epsilon),
            )
        });
    GridOutcome { best, sweep }
}

/// Program over `chi >= 0` (and a margin variable when `margin` is set)
/// with `Theta(m, P, r, chi) ⪯ -eps I` for fixed `m, P, r`.
fn chi_program<T: Scalar>(
    system: &QuadraticSystem<T>,
    m: &DVector<T>,
    p: &DMatrix<T>,
    r: T,
    epsilon: T,
    margin: bool,
) -> (ConicProgram<T>, ScalarVar, Option<ScalarVar>) {
    let n = system.dim();
    let sh = system.shift(m);
    let mut prog = ConicProgram::new();
    let chi = prog.scalar("chi");
    let mut base = DMatrix::zeros(n + 1, n + 1);
    base.view_mut((0, 0), (n, n))
        .copy_from(&(p * &sh.l + sh.l.transpose() * p));
    let pc = p * &sh.c;
    for i in 0..n {
        base[(i, n)] = pc[i];
        base[(n, i)] = pc[i];
    }
    let mut dchi = DMatrix::zeros(n + 1, n + 1);
    dchi.view_mut((0, 0), (n, n)).copy_from(p);
    dchi[(n, n)] = -r * r;
    let mut th = MatExpr::constant(base) + MatExpr::scalar_times(chi, dchi);
    let slack = margin.then(|| {
        let s = prog.scalar("s");
        th = th.clone() + MatExpr::scalar_times(s, DMatrix::identity(n + 1, n + 1));
        s
    });
    prog.add_nd(th, epsilon).expect("symmetric by construction");
    prog.add_ge(chi.into(), T::zero());
    if let Some(s) = slack {
        prog.add_le(s.into(), T::one());
        prog.minimize(-LinExpr::var(s));
    }
    (prog, chi, slack)
}

/// Bisection on `r` over `[0, r_in]`: at each trial `r` the remaining
/// constraint is an LMI in `chi` alone.
pub fn gevp_refine<T: Scalar>(
    certificate: &EllipsoidCertificate<T>,
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    config: &PipelineConfig,
) -> EllipsoidCertificate<T> {
    let eps = T::lit(config.epsilon);
    let m = &certificate.m;
    let p = &certificate.p;
    let feasible = |r: T| chi_program(system, m, p, r, eps, false).0.lmi_feasible();

    let mut hi = certificate.r;
    let mut lo = T::zero();
    let tol = T::lit(BISECTION_TOL);
    while hi - lo > tol * hi {
        let mid = (lo + hi) * T::lit(0.5);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Most interior chi at the final radius.
    let (prog, chi, slack) = chi_program(system, m, p, hi, eps, true);
    let res = prog.solve(T::lit(config.solver_accuracy));
    let witness = match slack {
        Some(s) if res.is_optimal() && res.value(s) >= T::zero() => Some(res.value(chi)),
        _ => None,
    };
    let (r, chi) = match witness {
        Some(c) => (hi, c),
        None => (certificate.r, certificate.chi),
    };
    EllipsoidCertificate::new(
        system,
        structure,
        m.clone(),
        p.clone(),
        r,
        chi,
        Stage::Gevp,
        eps,
    )
}
