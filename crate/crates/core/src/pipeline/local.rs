//! Two-step local refinement of the shift around a GEVP certificate.

use nalgebra::DMatrix;

use super::ellipsoid::theta_expr;
use super::{
    containment_check, ellipsoid_sdp, gevp_refine, EllipsoidCertificate, PipelineConfig, Stage,
};
use crate::conic::{ConicProgram, LinExpr, MatExpr};
use crate::lossless::LosslessStructure;
use crate::model::QuadraticSystem;
use crate::Scalar;

/// Returns `(selected, candidate, accepted)`: the candidate `Psi_2` built
/// from the linearized shift step, and whichever of `Psi_2` / `Psi_1` is
/// selected. `Psi_2` is accepted only when it is shown to lie inside `Psi_1`.
pub fn local_shift_search<T: Scalar>(
    certificate: &EllipsoidCertificate<T>,
    system: &QuadraticSystem<T>,
    structure: &LosslessStructure<T>,
    config: &PipelineConfig,
) -> (
    EllipsoidCertificate<T>,
    Option<EllipsoidCertificate<T>>,
    bool,
) {
    let keep = || (certificate.clone(), None, false);
    let n = system.dim();
    let m1 = &certificate.m;
    let l1 = system.linear_part(m1);
    let c1 = system.bias(m1);
    let trust = config
        .local_search_trust_radius
        .map(T::lit)
        .unwrap_or_else(|| T::one().max(m1.norm() * T::lit(0.5)));

    // Step 1: variables (dm, r2); L(m1 + dm) exact, c linearized.
    let mut prog = ConicProgram::new();
    let r2 = prog.scalar("r2");
    let dm = prog.scalars("dm", n);
    let unit = |k: usize| {
        let mut e = DMatrix::zeros(n, 1);
        e[k] = T::one();
        e
    };
    let mut l = MatExpr::constant(l1.clone());
    let mut c = MatExpr::constant(DMatrix::from_column_slice(n, 1, c1.as_slice()));
    for (k, j) in system.linear_part_gradients().into_iter().enumerate() {
        l = l + MatExpr::scalar_times(dm[k], j);
        c = c + MatExpr::scalar_times(
            dm[k],
            DMatrix::from_column_slice(n, 1, l1.column(k).as_slice()),
        );
    }
    let Ok(th) = theta_expr(
        &MatExpr::constant(certificate.p.clone()),
        &l,
        &c,
        &LinExpr::constant(certificate.chi),
        &LinExpr::var(r2),
    ) else {
        return keep();
    };
    if prog.add_nd(th, T::lit(config.epsilon)).is_err() {
        return keep();
    }
    let step = MatExpr::combination(&dm, &(0..n).map(unit).collect::<Vec<_>>());
    if prog.add_soc(step, LinExpr::constant(trust)).is_err() {
        return keep();
    }
    prog.minimize(r2.into());
    let res = prog.solve(T::lit(config.solver_accuracy));
    if !res.is_optimal() {
        return keep();
    }
    let delta = nalgebra::DVector::from_iterator(n, dm.iter().map(|v| res.value(*v)));

    // Step 2: re-solve the ellipsoid SDP at the moved shift, then refine.
    let m2 = m1 + delta;
    let Some(fit) = ellipsoid_sdp(system, structure, &m2, certificate.chi, config) else {
        return keep();
    };
    let eps = T::lit(config.epsilon);
    let grid2 = EllipsoidCertificate::new(
        system,
        structure,
        m2,
        fit.p,
        fit.r,
        fit.chi,
        Stage::Grid,
        eps,
    );
    let mut psi2 = gevp_refine(&grid2, system, structure, config);
    psi2.stage = Stage::LocalSearch;
    if containment_check(&psi2, certificate) {
        (psi2.clone(), Some(psi2), true)
    } else {
        (certificate.clone(), Some(psi2), false)
    }
}
