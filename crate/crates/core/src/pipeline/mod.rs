//! Trapping-ellipsoid optimization: shift search, chi-grid ellipsoid SDP,
//! GEVP refinement, local shift search and final selection.

mod containment;
mod ellipsoid;
mod local;
mod shift;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use containment::containment_check;
pub use ellipsoid::{
    ellipsoid_sdp, gevp_refine, grid_search, theta, EllipsoidFit, GridOutcome, SweepPoint,
};
pub use local::local_shift_search;
pub use shift::{optimize_shift, ShiftSolution};

use crate::conic::{ConicProgram, LinExpr, MatExpr};
use crate::error::{Error, Result};
use crate::linalg::{lambda_max, lambda_min, max_abs_vec};
use crate::lossless::LosslessStructure;
use crate::model::QuadraticSystem;
use crate::Scalar;

/// How the lossless equality `G^T vec(P) = 0` enters the SDPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// `P` restricted to the span of the symmetric lossless basis.
    #[default]
    Hard,
    /// `P` a free symmetric matrix with the equalities passed to the solver.
    Soft,
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            _ => Err(Error::Config(format!(
                "constraint mode '{s}' is not hard|soft"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Grid,
    Gevp,
    LocalSearch,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Grid => "grid",
            Stage::Gevp => "gevp",
            Stage::LocalSearch => "local-search",
        })
    }
}

/// `count` logarithmically spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub delta_m: f64,
    pub epsilon: f64,
    pub chi_grid: Vec<f64>,
    pub restarts: usize,
    pub rng_seed: u64,
    pub alternation_tol: f64,
    pub alternation_max_iters: usize,
    pub constraint_mode: ConstraintMode,
    /// `None` selects `max(1, 0.5 ||m||)` at the certificate being refined.
    pub local_search_trust_radius: Option<f64>,
    /// Skip the shift optimization and use this shift.
    pub fixed_shift: Option<Vec<f64>>,
    /// Relative duality-gap target handed to the conic solver.
    pub solver_accuracy: f64,
    /// Weight of `trace(P)` added to `r^2` in the ellipsoid SDP so that the
    /// optimal face (often unbounded along the scale of `P`) has a
    /// well-defined representative.
    pub trace_weight: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta_m: 30.0,
            epsilon: 1e-6,
            chi_grid: log_grid(0.1, 10.0, 100),
            restarts: 10,
            rng_seed: 7,
            alternation_tol: 1e-8,
            alternation_max_iters: 100,
            constraint_mode: ConstraintMode::Hard,
            local_search_trust_radius: None,
            fixed_shift: None,
            solver_accuracy: 1e-9,
            trace_weight: 1e-7,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_m", self.delta_m),
            ("epsilon", self.epsilon),
            ("alternation_tol", self.alternation_tol),
            ("solver_accuracy", self.solver_accuracy),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.trace_weight.is_nan() || self.trace_weight < 0.0 {
            return Err(Error::Config("trace_weight must be non-negative".into()));
        }
        if self.chi_grid.is_empty() {
            return Err(Error::Config("chi grid is empty".into()));
        }
        if self.chi_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config("chi grid must be strictly positive".into()));
        }
        if self.restarts == 0 || self.alternation_max_iters == 0 {
            return Err(Error::Config(
                "restarts and iteration limits must be positive".into(),
            ));
        }
        if let Some(r) = self.local_search_trust_radius {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::Config("trust radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Verification slacks recorded with a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Residuals {
    /// `lambda_max(Theta) + epsilon` (non-positive when the LMI holds).
    pub theta_max_eig: f64,
    /// `lambda_min(P) - 1`.
    pub p_min_eig_excess: f64,
    /// Largest absolute entry of `G^T vec(P)`.
    pub lossless_max_abs: f64,
}

/// A trapping ellipsoid `{x : (x - m)^T P (x - m) <= r^2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidCertificate<T: Scalar> {
    pub m: DVector<T>,
    pub p: DMatrix<T>,
    pub r: T,
    pub chi: T,
    /// Largest semi-axis, `r / sqrt(lambda_min(P))`.
    pub alpha: T,
    /// `alpha + ||m||`.
    pub ultimate_bound: T,
    pub stage: Stage,
    pub residuals: Residuals,
}

impl<T: Scalar> EllipsoidCertificate<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        system: &QuadraticSystem<T>,
        structure: &LosslessStructure<T>,
        m: DVector<T>,
        p: DMatrix<T>,
        r: T,
        chi: T,
        stage: Stage,
        epsilon: T,
    ) -> Self {
        let p = crate::linalg::symmetrize(&p);
        let lmin = lambda_min(&p);
        let alpha = r / lmin.max(T::lit(f64::MIN_POSITIVE)).sqrt();
        let th = theta(system, &m, &p, r, chi);
        let residuals = Residuals {
            theta_max_eig: (lambda_max(&th) + epsilon).as_f64(),
            p_min_eig_excess: (lmin - T::one()).as_f64(),
            lossless_max_abs: max_abs_vec(&structure.constraint_residual(&p)).as_f64(),
        };
        let ultimate_bound = alpha + m.norm();
        Self {
            m,
            p,
            r,
            chi,
            alpha,
            ultimate_bound,
            stage,
            residuals,
        }
    }

    /// Same ellipsoid with `(P, r^2)` replaced by `(t P, t r^2)`.
    pub fn rescaled(&self, t: T) -> Self {
        let p = &self.p * t;
        let r = self.r * t.sqrt();
        let alpha = r / lambda_min(&p).sqrt();
        Self {
            p,
            r,
            alpha,
            ultimate_bound: alpha + self.m.norm(),
            ..self.clone()
        }
    }

    /// `(x - m)^T P (x - m)` for a point in original coordinates.
    pub fn energy(&self, x: &DVector<T>) -> T {
        let y = x - &self.m;
        y.dot(&(&self.p * &y))
    }
}

/// Where and why a run stopped without a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub stage: String,
    pub reason: String,
}

/// Every stage's output from [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineReport<T: Scalar> {
    pub general_dim: usize,
    pub symmetric_dim: usize,
    pub shift: Option<ShiftSolution<T>>,
    pub sweep: Vec<SweepPoint>,
    pub grid: Option<EllipsoidCertificate<T>>,
    pub gevp: Option<EllipsoidCertificate<T>>,
    pub local: Option<EllipsoidCertificate<T>>,
    pub final_certificate: Option<EllipsoidCertificate<T>>,
    /// Whether the local-search candidate replaced the GEVP certificate.
    pub local_accepted: bool,
    pub diagnosis: Option<Diagnosis>,
}

impl<T: Scalar> PipelineReport<T> {
    fn new(structure: &LosslessStructure<T>) -> Self {
        Self {
            general_dim: structure.general_basis.len(),
            symmetric_dim: structure.symmetric_basis.len(),
            shift: None,
            sweep: Vec::new(),
            grid: None,
            gevp: None,
            local: None,
            final_certificate: None,
            local_accepted: false,
            diagnosis: None,
        }
    }

    fn fail(mut self, stage: &str, reason: impl Into<String>) -> Self {
        self.diagnosis = Some(Diagnosis {
            stage: stage.to_string(),
            reason: reason.into(),
        });
        self
    }
}

/// Runs the full analysis. Configuration problems are errors; failing to
/// find a certificate is reported through [`PipelineReport::diagnosis`].
pub fn run_pipeline<T: Scalar>(
    system: &QuadraticSystem<T>,
    config: &PipelineConfig,
) -> Result<PipelineReport<T>> {
    config.validate()?;
    let structure = LosslessStructure::build(system);
    let mut report = PipelineReport::new(&structure);
    if config.constraint_mode == ConstraintMode::Hard && structure.symmetric_basis.is_empty() {
        return Ok(report.fail(
            "lossless",
            "no symmetric matrix satisfies the generalized lossless constraint",
        ));
    }

    let m = match &config.fixed_shift {
        Some(v) => {
            if v.len() != system.dim() {
                return Err(Error::Dimension {
                    what: "fixed shift".into(),
                    expected: system.dim(),
                    found: v.len(),
                });
            }
            DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)))
        }
        None => match optimize_shift(system, &structure, config) {
            Ok(sol) => {
                let m = sol.m_star.clone();
                let certified = sol.certifies();
                let a = sol.a_star;
                report.shift = Some(sol);
                if !certified {
                    return Ok(report.fail(
                        "shift",
                        format!("best spectral bound a* = {:e} is not negative", a.as_f64()),
                    ));
                }
                m
            }
            Err(Error::Inapplicable(why)) => return Ok(report.fail("shift", why)),
            Err(e) => return Err(e),
        },
    };

    let grid = grid_search(system, &structure, &m, config);
    report.sweep = grid.sweep;
    let Some(grid_cert) = grid.best else {
        return Ok(report.fail("grid", "no feasible point on the chi grid"));
    };
    report.grid = Some(grid_cert.clone());

    let gevp = gevp_refine(&grid_cert, system, &structure, config);
    report.gevp = Some(gevp.clone());

    let (chosen, candidate, accepted) = local_shift_search(&gevp, system, &structure, config);
    report.local = candidate;
    report.local_accepted = accepted;
    report.final_certificate = Some(chosen);
    Ok(report)
}

/// Comparison ball radius `2 ||S c(m)|| / |lambda_max(S L + L^T S)|`.
pub fn goyal_ball_radius<T: Scalar>(
    system: &QuadraticSystem<T>,
    s: &DMatrix<T>,
    m: &DVector<T>,
) -> Result<T> {
    let sh = system.shift(m);
    let lam = lambda_max(&(s * &sh.l + sh.l.transpose() * s));
    if lam >= T::zero() {
        return Err(Error::Inapplicable(format!(
            "lambda_max(S L + L^T S) = {:e} is not negative",
            lam.as_f64()
        )));
    }
    Ok(T::lit(2.0) * (s * &sh.c).norm() / lam.abs())
}

/// The admissible `P` as an affine expression, in the configured mode.
pub(crate) fn admissible_p<T: Scalar>(
    program: &mut ConicProgram<T>,
    structure: &LosslessStructure<T>,
    mode: ConstraintMode,
) -> MatExpr<T> {
    let n = structure.dim();
    match mode {
        ConstraintMode::Hard => {
            let theta = program.scalars("theta", structure.symmetric_basis.len());
            MatExpr::combination(&theta, &structure.symmetric_basis)
        }
        ConstraintMode::Soft => {
            let p = program.symmetric("P", n);
            for col in 0..structure.g.ncols() {
                let mut e = LinExpr::constant(T::zero());
                for i in 0..n {
                    for j in 0..n {
                        let w = structure.g[(i + j * n, col)];
                        if w != T::zero() {
                            e = e + p.entry(i, j).scale(w);
                        }
                    }
                }
                if !e.is_constant() {
                    program.add_eq(e);
                }
            }
            p.expr()
        }
    }
}
