//! Solver-free verification of a trapping-ellipsoid certificate.
//!
//! Everything here is recomputed from the raw `A`, `Q`, `d` and the
//! certificate fields; no optimization output is trusted.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{lambda_max, lambda_min, max_abs};
use crate::lossless::{random_unit, LosslessStructure};
use crate::model::QuadraticSystem;
use crate::pipeline::EllipsoidCertificate;
use crate::Scalar;

/// Relative asymmetry of `P` tolerated by check (a).
pub const SYMMETRY_TOL: f64 = 1e-9;
/// `||G^T vec(P)|| <= LOSSLESS_REL_TOL * ||P||` in check (c).
pub const LOSSLESS_REL_TOL: f64 = 1e-7;
/// Bound on `|y^T P Q(y)|` over unit `y`, relative to `||P||`.
pub const SAMPLED_LOSSLESS_TOL: f64 = 1e-8;
/// Radii, in units of the boundary, at which decrease is sampled.
pub const DECREASE_SCALES: [f64; 3] = [1.0, 2.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    /// (a) `P` symmetric and positive definite.
    pub positive_definite: bool,
    /// (b) `Theta ⪯ -(epsilon/2) I` with `P` scaled to `lambda_min(P) = 1`.
    pub theta: bool,
    /// (c) `P` satisfies the generalized lossless constraint.
    pub lossless: bool,
    /// (d) `V` decreases at sampled points on and outside the boundary.
    pub decrease: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slacks {
    pub p_min_eig: f64,
    /// `lambda_min(P) - 1`; non-negative under the `P ⪰ I` normalization.
    pub p_min_eig_minus_one: f64,
    pub p_asymmetry: f64,
    /// `lambda_min(-Theta) / lambda_min(P) - epsilon / 2`.
    pub theta: f64,
    pub lossless_residual: f64,
    pub lossless_sampled_max: f64,
    /// `-max dV/dt` over the sampled points.
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub checks: Checks,
    pub slacks: Slacks,
    /// Label of the first failing check, if any.
    pub failed: Option<String>,
    pub options: VerifyOptions,
}

/// `L(m)` and `c(m)` assembled entrywise from the system data.
fn shifted_data<T: Scalar>(
    system: &QuadraticSystem<T>,
    m: &DVector<T>,
) -> (DMatrix<T>, DVector<T>) {
    let n = system.dim();
    let q = system.q();
    let mut l = system.a().clone();
    let mut c = system.d().clone();
    for i in 0..n {
        let mut qm = T::zero();
        for j in 0..n {
            c[i] += system.a()[(i, j)] * m[j];
            let mut row = T::zero();
            for k in 0..n {
                row += q[i][(j, k)] * m[k];
            }
            l[(i, j)] += T::lit(2.0) * row;
            qm += m[j] * row;
        }
        c[i] += qm;
    }
    (l, c)
}

fn theta_matrix<T: Scalar>(
    system: &QuadraticSystem<T>,
    cert: &EllipsoidCertificate<T>,
) -> DMatrix<T> {
    let n = system.dim();
    let (l, c) = shifted_data(system, &cert.m);
    let p = &cert.p;
    let top = p * &l + l.transpose() * p + p * cert.chi;
    let pc = p * &c;
    let mut th = DMatrix::zeros(n + 1, n + 1);
    th.view_mut((0, 0), (n, n)).copy_from(&top);
    for i in 0..n {
        th[(i, n)] = pc[i];
        th[(n, i)] = pc[i];
    }
    th[(n, n)] = -cert.chi * cert.r * cert.r;
    th
}

/// `dV/dt` at shifted coordinate `y` for `V(y) = y^T P y`.
fn energy_rate<T: Scalar>(
    system: &QuadraticSystem<T>,
    p: &DMatrix<T>,
    m: &DVector<T>,
    y: &DVector<T>,
) -> T {
    let x = y + m;
    let f = system.eval_rhs(&x);
    T::lit(2.0) * y.dot(&(p * f))
}

/// Runs checks (a)-(d) and reports every slack, failing or not.
pub fn verify<T: Scalar>(
    system: &QuadraticSystem<T>,
    cert: &EllipsoidCertificate<T>,
    options: &VerifyOptions,
) -> VerificationReport {
    let n = system.dim();
    let p = &cert.p;
    let finite = cert.m.iter().chain(p.iter()).all(|v| v.finite())
        && cert.r.finite()
        && cert.chi.finite()
        && p.nrows() == n
        && p.ncols() == n
        && cert.m.len() == n;
    if !finite {
        let nan = f64::NAN;
        return VerificationReport {
            pass: false,
            checks: Checks {
                positive_definite: false,
                theta: false,
                lossless: false,
                decrease: false,
            },
            slacks: Slacks {
                p_min_eig: nan,
                p_min_eig_minus_one: nan,
                p_asymmetry: nan,
                theta: nan,
                lossless_residual: nan,
                lossless_sampled_max: nan,
                decrease: nan,
            },
            failed: Some("input: certificate has non-finite or mis-sized fields".into()),
            options: *options,
        };
    }

    let p_norm = max_abs(p).max(T::lit(f64::MIN_POSITIVE));
    let asym = max_abs(&(p - p.transpose())) / p_norm;
    let p_sym = (p + p.transpose()) * T::lit(0.5);
    let p_min = lambda_min(&p_sym);
    let check_a = asym <= T::lit(SYMMETRY_TOL) && p_min > T::zero();

    // Theta is homogeneous in (P, r^2); measuring it at lambda_min(P) = 1
    // makes the outcome independent of the certificate's scale.
    let th = theta_matrix(system, cert);
    let theta_slack =
        -lambda_max(&th) / p_min.max(T::lit(f64::MIN_POSITIVE)) - T::lit(options.epsilon / 2.0);
    let check_b = check_a && theta_slack >= T::zero();

    let structure = LosslessStructure::build(system);
    let residual = structure.constraint_residual(&p_sym).norm();
    let p_fro = p_sym.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut sampled = T::zero();
    for _ in 0..options.samples {
        let y = random_unit::<T>(&mut rng, n);
        sampled = sampled.max(y.dot(&(&p_sym * system.eval_quadratic(&y))).abs());
    }
    let sampled_rel = sampled / p_fro.max(T::lit(f64::MIN_POSITIVE));
    let check_c =
        residual <= T::lit(LOSSLESS_REL_TOL) * p_fro && sampled_rel <= T::lit(SAMPLED_LOSSLESS_TOL);

    let mut worst = T::lit(f64::NEG_INFINITY);
    if p_min > T::zero() {
        for _ in 0..options.samples {
            let u = random_unit::<T>(&mut rng, n);
            let boundary = cert.r / u.dot(&(&p_sym * &u)).sqrt();
            for s in DECREASE_SCALES {
                let y = &u * (boundary * T::lit(s));
                worst = worst.max(energy_rate(system, &p_sym, &cert.m, &y));
            }
        }
    }
    let check_d = p_min > T::zero() && worst < T::zero();

    let checks = Checks {
        positive_definite: check_a,
        theta: check_b,
        lossless: check_c,
        decrease: check_d,
    };
    let failed = [
        (check_a, "a: P is not symmetric positive definite"),
        (check_b, "b: Theta is not below -(epsilon/2) I"),
        (check_c, "c: P violates the generalized lossless constraint"),
        (
            check_d,
            "d: energy increases at a sampled point outside the ellipsoid",
        ),
    ]
    .iter()
    .find(|(ok, _)| !ok)
    .map(|(_, why)| why.to_string());

    VerificationReport {
        pass: failed.is_none(),
        checks,
        slacks: Slacks {
            p_min_eig: p_min.as_f64(),
            p_min_eig_minus_one: (p_min - T::one()).as_f64(),
            p_asymmetry: asym.as_f64(),
            theta: theta_slack.as_f64(),
            lossless_residual: residual.as_f64(),
            lossless_sampled_max: sampled.as_f64(),
            decrease: (-worst).as_f64(),
        },
        failed,
        options: *options,
    }
}
