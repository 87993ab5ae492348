//! Sufficient test for `E(P2, r2) + m2 ⊆ E(P1, r1) + m1`.

use nalgebra::DMatrix;

use super::EllipsoidCertificate;
use crate::conic::{ConicProgram, LinExpr, MatExpr};
use crate::linalg::max_abs;
use crate::Scalar;

const LMI_TOL: f64 = 1e-9;

/// S-procedure: inner ⊆ outer if some `tau >= 0` makes
/// ```text
/// [ tau P2 - P1            P1 m1 - tau P2 m2                      ]
/// [ (.)^T                  r1^2 - m1'P1 m1 - tau (r2^2 - m2'P2 m2) ] ⪰ 0
/// ```
/// Falls back to `||m2 - m1|| + alpha2 <= alpha1` when the LMI does not
/// confirm containment. Both tests are one-sided.
pub fn containment_check<T: Scalar>(
    inner: &EllipsoidCertificate<T>,
    outer: &EllipsoidCertificate<T>,
) -> bool {
    s_procedure(inner, outer) || ball_test(inner, outer)
}

fn ball_test<T: Scalar>(inner: &EllipsoidCertificate<T>, outer: &EllipsoidCertificate<T>) -> bool {
    (&inner.m - &outer.m).norm() + inner.alpha <= outer.alpha
}

fn s_procedure<T: Scalar>(
    inner: &EllipsoidCertificate<T>,
    outer: &EllipsoidCertificate<T>,
) -> bool {
    let n = inner.m.len();
    if outer.m.len() != n {
        return false;
    }
    let (p1, m1, r1) = (&outer.p, &outer.m, outer.r);
    let (p2, m2, r2) = (&inner.p, &inner.m, inner.r);
    let mut c = DMatrix::zeros(n + 1, n + 1);
    let mut d = DMatrix::zeros(n + 1, n + 1);
    c.view_mut((0, 0), (n, n)).copy_from(&(-p1));
    d.view_mut((0, 0), (n, n)).copy_from(p2);
    let p1m1 = p1 * m1;
    let p2m2 = p2 * m2;
    for i in 0..n {
        c[(i, n)] = p1m1[i];
        c[(n, i)] = p1m1[i];
        d[(i, n)] = -p2m2[i];
        d[(n, i)] = -p2m2[i];
    }
    c[(n, n)] = r1 * r1 - m1.dot(&p1m1);
    d[(n, n)] = m2.dot(&p2m2) - r2 * r2;
    let scale = max_abs(&c).max(max_abs(&d)).max(T::lit(f64::MIN_POSITIVE));
    let (c, d) = (c / scale, d / scale);

    let mut prog = ConicProgram::new();
    let tau = prog.scalar("tau");
    let s = prog.scalar("s");
    let lmi = MatExpr::constant(c) + MatExpr::scalar_times(tau, d)
        - MatExpr::scalar_times(s, DMatrix::identity(n + 1, n + 1));
    if prog.add_psd(lmi).is_err() {
        return false;
    }
    prog.add_ge(tau.into(), T::zero());
    prog.add_le(s.into(), T::one());
    prog.minimize(-LinExpr::var(s));
    let res = prog.solve(T::lit(1e-10));
    res.is_optimal() && res.value(s) >= -T::lit(LMI_TOL)
}
