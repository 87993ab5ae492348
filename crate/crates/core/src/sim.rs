//! Adaptive Dormand-Prince 5(4) integration, Monte-Carlo ultimate-bound
//! estimation and trajectory-level invariance checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QuadraticSystem;
use crate::pipeline::EllipsoidCertificate;
use crate::Scalar;

/// States with a norm above this are treated as a blow-up.
pub const BLOW_UP: f64 = 1e12;
/// Relative slack on `V <= r^2` once a trajectory has entered the ellipsoid.
pub const INVARIANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Fraction of the horizon, counted from the end, over which the bound is measured.
    pub tail_fraction: f64,
    pub trials: usize,
    /// Initial states are uniform on `[-w, w]^n`.
    pub init_half_width: f64,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 200.0,
            rtol: 1e-8,
            atol: 1e-10,
            tail_fraction: 0.5,
            trials: 1000,
            init_half_width: 100.0,
            seed: 7,
            max_steps: 5_000_000,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Error::Config("tail fraction must lie in (0, 1)".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if !(self.init_half_width >= 0.0 && self.init_half_width.is_finite()) {
            return Err(Error::Config("init half-width must be non-negative".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub stats: IntegratorStats,
}

// Dormand-Prince 5(4) tableau; the nodes are unused for autonomous systems.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn error_norm<T: Scalar>(
    err: &DVector<T>,
    y0: &DVector<T>,
    y1: &DVector<T>,
    rtol: T,
    atol: T,
) -> T {
    let n = err.len();
    let sum = (0..n).fold(T::zero(), |acc, i| {
        let scale = atol + rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / scale;
        acc + e * e
    });
    (sum / T::lit(n.max(1) as f64)).sqrt()
}

/// One accepted step with the data for cubic Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a, T: Scalar> {
    pub t0: T,
    pub t1: T,
    pub x0: &'a DVector<T>,
    pub x1: &'a DVector<T>,
    pub f0: &'a DVector<T>,
    pub f1: &'a DVector<T>,
}

impl<T: Scalar> Step<'_, T> {
    /// Hermite interpolant at `t0 + s (t1 - t0)`, `s` in `[0, 1]`.
    pub fn interpolate(&self, s: T) -> DVector<T> {
        let h = self.t1 - self.t0;
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        self.x0 * h00 + self.f0 * (h10 * h) + self.x1 * h01 + self.f1 * (h11 * h)
    }

    /// Largest `||x||` over the step, refining an interior maximum.
    pub fn peak_norm(&self) -> T {
        let ends = self.x0.norm().max(self.x1.norm());
        let rising = self.x0.dot(self.f0) > T::zero();
        let falling = self.x1.dot(self.f1) < T::zero();
        if self.t1 <= self.t0 || !(rising && falling) {
            return ends;
        }
        // golden-section search on the interpolant
        let g = T::lit(0.5 * (5f64.sqrt() - 1.0));
        let (mut a, mut b) = (T::zero(), T::one());
        let norm_at = |s: T| self.interpolate(s).norm();
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (norm_at(c), norm_at(d));
        for _ in 0..40 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = norm_at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = norm_at(d);
            }
        }
        ends.max(fc).max(fd)
    }
}

/// Integrates from `x0` over `[0, horizon]`, calling `observe` once with the
/// zero-length step at `t = 0` and then after every accepted step.
pub fn integrate_with<T: Scalar, F: FnMut(&Step<'_, T>)>(
    system: &QuadraticSystem<T>,
    x0: &DVector<T>,
    options: &SimOptions,
    mut observe: F,
) -> Result<IntegratorStats> {
    options.validate()?;
    if x0.len() != system.dim() {
        return Err(Error::Dimension {
            what: "initial state".into(),
            expected: system.dim(),
            found: x0.len(),
        });
    }
    if !x0.iter().all(|v| v.finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let diverged = |t: T| Error::Diverged {
        x0: x0.iter().map(|v| v.as_f64()).collect(),
        time: t.as_f64(),
    };
    let (rtol, atol) = (T::lit(options.rtol), T::lit(options.atol));
    let horizon = T::lit(options.horizon);
    let mut stats = IntegratorStats::default();
    let mut t = T::zero();
    let mut x = x0.clone();
    let mut k1 = system.eval_rhs(&x);
    stats.evaluations += 1;
    observe(&Step {
        t0: t,
        t1: t,
        x0: &x,
        x1: &x,
        f0: &k1,
        f1: &k1,
    });

    // initial step from the scale of x and f(x)
    let scale = |v: &DVector<T>| {
        let sc = x.map(|xi| atol + rtol * xi.abs());
        let n = T::lit(v.len().max(1) as f64);
        (v.component_div(&sc).norm_squared() / n).sqrt()
    };
    let (d0, d1) = (scale(&x), scale(&k1));
    let mut h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    };
    h = h.min(horizon);
    let h_min = horizon * T::lit(1e-14);

    let mut k: Vec<DVector<T>> = vec![DVector::zeros(x.len()); 7];
    while t < horizon {
        if stats.accepted + stats.rejected >= options.max_steps {
            return Err(diverged(t));
        }
        if t + h > horizon {
            h = horizon - t;
        }
        k[0] = k1.clone();
        for s in 1..7 {
            let mut stage = x.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    stage.axpy(h * T::lit(a), kj, T::one());
                }
            }
            k[s] = system.eval_rhs(&stage);
        }
        stats.evaluations += 6;
        let mut x_new = x.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = A[6][j];
            if b != 0.0 {
                x_new.axpy(h * T::lit(b), kj, T::one());
            }
        }
        let mut err = DVector::zeros(x.len());
        for (j, kj) in k.iter().enumerate() {
            err.axpy(h * T::lit(E[j]), kj, T::one());
        }
        let e = error_norm(&err, &x, &x_new, rtol, atol);
        if !e.finite() || !x_new.iter().all(|v| v.finite()) {
            stats.rejected += 1;
            h *= T::lit(0.2);
            if h < h_min {
                return Err(diverged(t));
            }
            continue;
        }
        if e <= T::one() {
            stats.accepted += 1;
            if x_new.norm() > T::lit(BLOW_UP) {
                return Err(diverged(t + h));
            }
            // first-same-as-last: stage 7 is f at the new point
            observe(&Step {
                t0: t,
                t1: t + h,
                x0: &x,
                x1: &x_new,
                f0: &k1,
                f1: &k[6],
            });
            t += h;
            x = x_new;
            k1 = k[6].clone();
        } else {
            stats.rejected += 1;
        }
        let factor = if e == T::zero() {
            T::lit(5.0)
        } else {
            (T::lit(0.9) * e.powf(T::lit(-0.2))).clamp(T::lit(0.2), T::lit(5.0))
        };
        h *= factor;
        if h < h_min && t < horizon {
            return Err(diverged(t));
        }
    }
    Ok(stats)
}

/// Integrates and keeps every accepted step.
pub fn integrate<T: Scalar>(
    system: &QuadraticSystem<T>,
    x0: &DVector<T>,
    options: &SimOptions,
) -> Result<Trajectory<T>> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let stats = integrate_with(system, x0, options, |step| {
        times.push(step.t1);
        states.push(step.x1.clone());
    })?;
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

/// Outcome of [`check_invariance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub pass: bool,
    /// `false` when the trajectory never entered; the pass is then vacuous.
    pub entered: bool,
    pub entry_time: Option<f64>,
    pub first_violation: Option<f64>,
    /// Largest `V / r^2` after entry.
    pub max_ratio_after_entry: f64,
}

#[derive(Debug, Clone)]
struct InvarianceTracker<'a, T: Scalar> {
    cert: &'a EllipsoidCertificate<T>,
    r2: T,
    entry: Option<T>,
    violation: Option<T>,
    max_ratio: T,
}

impl<'a, T: Scalar> InvarianceTracker<'a, T> {
    fn new(cert: &'a EllipsoidCertificate<T>) -> Self {
        Self {
            cert,
            r2: cert.r * cert.r,
            entry: None,
            violation: None,
            max_ratio: T::zero(),
        }
    }

    fn observe(&mut self, t: T, x: &DVector<T>) {
        let v = self.cert.energy(x);
        if self.entry.is_none() {
            if v <= self.r2 {
                self.entry = Some(t);
            } else {
                return;
            }
        }
        let ratio = v / self.r2;
        self.max_ratio = self.max_ratio.max(ratio);
        if self.violation.is_none() && ratio > T::one() + T::lit(INVARIANCE_TOL) {
            self.violation = Some(t);
        }
    }

    fn finish(&self) -> InvarianceCheck {
        InvarianceCheck {
            pass: self.violation.is_none(),
            entered: self.entry.is_some(),
            entry_time: self.entry.map(|t| t.as_f64()),
            first_violation: self.violation.map(|t| t.as_f64()),
            max_ratio_after_entry: self.max_ratio.as_f64(),
        }
    }
}

/// Once `V(x - m) <= r^2` holds at a sample, every later sample must keep
/// `V <= r^2 (1 + 1e-6)`.
pub fn check_invariance<T: Scalar>(
    trajectory: &Trajectory<T>,
    cert: &EllipsoidCertificate<T>,
) -> InvarianceCheck {
    let mut tracker = InvarianceTracker::new(cert);
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        tracker.observe(*t, x);
    }
    tracker.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub x0: Vec<f64>,
    /// `max ||x(t)||` over the tail window, including interior peaks of each
    /// step's Hermite interpolant.
    pub tail_max: f64,
    pub stats: IntegratorStats,
    pub invariance: Option<InvarianceCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSummary {
    pub trials_entered: usize,
    pub violations: usize,
    /// `(trial, time)` of the earliest-indexed violating trial.
    pub first_violation: Option<(usize, f64)>,
    pub ultimate_bound: f64,
    pub bound_below_certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    /// Largest tail-window norm over all trials.
    pub bound: f64,
    pub per_trial_max: Vec<f64>,
    pub mean_tail_max: f64,
    pub seed: u64,
    pub options: SimOptions,
    pub invariance: Option<InvarianceSummary>,
    pub trials: Vec<TrialResult>,
}

/// Initial state of trial `k`, drawn from stream `k` of the seeded generator.
pub fn trial_initial_state<T: Scalar>(n: usize, options: &SimOptions, k: usize) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(k as u64);
    let w = options.init_half_width;
    DVector::from_fn(n, |_, _| {
        T::lit(if w > 0.0 {
            rng.random_range(-w..=w)
        } else {
            0.0
        })
    })
}

fn run_trial<T: Scalar>(
    system: &QuadraticSystem<T>,
    options: &SimOptions,
    cert: Option<&EllipsoidCertificate<T>>,
    k: usize,
) -> Result<TrialResult> {
    let x0 = trial_initial_state::<T>(system.dim(), options, k);
    let tail_start = T::lit(options.horizon * (1.0 - options.tail_fraction));
    let mut tail_max = T::zero();
    let mut tracker = cert.map(InvarianceTracker::new);
    let stats = integrate_with(system, &x0, options, |step| {
        if step.t0 >= tail_start {
            tail_max = tail_max.max(step.peak_norm());
        } else if step.t1 >= tail_start {
            tail_max = tail_max.max(step.x1.norm());
        }
        if let Some(tr) = tracker.as_mut() {
            tr.observe(step.t1, step.x1);
        }
    })?;
    Ok(TrialResult {
        x0: x0.iter().map(|v| v.as_f64()).collect(),
        tail_max: tail_max.as_f64(),
        stats,
        invariance: tracker.map(|tr| tr.finish()),
    })
}

/// Monte-Carlo study; with a certificate, also checks invariance on every
/// trial and compares the empirical bound with `ultimate_bound`.
pub fn monte_carlo<T: Scalar>(
    system: &QuadraticSystem<T>,
    options: &SimOptions,
    cert: Option<&EllipsoidCertificate<T>>,
) -> Result<MonteCarloReport> {
    options.validate()?;
    let trials: Vec<TrialResult> = (0..options.trials)
        .into_par_iter()
        .map(|k| run_trial(system, options, cert, k))
        .collect::<Result<_>>()?;
    let per_trial_max: Vec<f64> = trials.iter().map(|t| t.tail_max).collect();
    let bound = per_trial_max.iter().cloned().fold(0.0, f64::max);
    let mean_tail_max = per_trial_max.iter().sum::<f64>() / per_trial_max.len() as f64;
    let invariance = cert.map(|c| {
        let checks: Vec<&InvarianceCheck> = trials
            .iter()
            .filter_map(|t| t.invariance.as_ref())
            .collect();
        let ultimate_bound = c.ultimate_bound.as_f64();
        InvarianceSummary {
            trials_entered: checks.iter().filter(|c| c.entered).count(),
            violations: checks.iter().filter(|c| !c.pass).count(),
            first_violation: checks
                .iter()
                .enumerate()
                .find_map(|(k, c)| c.first_violation.map(|t| (k, t))),
            ultimate_bound,
            bound_below_certified: bound < ultimate_bound,
        }
    });
    Ok(MonteCarloReport {
        bound,
        per_trial_max,
        mean_tail_max,
        seed: options.seed,
        options: options.clone(),
        invariance,
        trials,
    })
}

/// Largest tail-window norm over `options.trials` random initial states.
pub fn empirical_ultimate_bound<T: Scalar>(
    system: &QuadraticSystem<T>,
    options: &SimOptions,
) -> Result<MonteCarloReport> {
    monte_carlo(system, options, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{academic2d, linear, mls};
    use nalgebra::DMatrix;

    fn opts(horizon: f64) -> SimOptions {
        SimOptions {
            horizon,
            ..Default::default()
        }
    }

    #[test]
    fn exponential_decay() {
        let sys = linear(&DMatrix::from_element(1, 1, -1.0));
        let tr = integrate(&sys, &DVector::from_element(1, 1.0), &opts(1.0)).unwrap();
        let last = tr.states.last().unwrap()[0];
        assert!((last - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn hermite_peak_of_a_circle() {
        // |x|^2 = 5 + 4 cos t peaks at t = 0 with |x| = 3
        let pt = |t: f64| DVector::from_column_slice(&[2.0 + t.cos(), t.sin()]);
        let dt = |t: f64| DVector::from_column_slice(&[-t.sin(), t.cos()]);
        let step_on = |t0: f64, t1: f64, f: &mut dyn FnMut(&Step<'_, f64>)| {
            let (x0, x1, f0, f1) = (pt(t0), pt(t1), dt(t0), dt(t1));
            f(&Step {
                t0,
                t1,
                x0: &x0,
                x1: &x1,
                f0: &f0,
                f1: &f1,
            })
        };
        step_on(-0.2, 0.3, &mut |s| {
            assert!((s.interpolate(0.4) - pt(0.0)).norm() < 5e-4);
            assert!((s.peak_norm() - 3.0).abs() < 5e-4);
            assert!(s.x0.norm().max(s.x1.norm()) < 3.0 - 1e-3);
        });
        step_on(0.9, 1.3, &mut |s| {
            assert!((s.peak_norm() - s.x0.norm()).abs() < 1e-12);
        });
    }

    #[test]
    fn academic_converges_to_equilibrium() {
        let tr = integrate(
            &academic2d(),
            &DVector::from_column_slice(&[5.0, 5.0]),
            &opts(50.0),
        )
        .unwrap();
        let last = tr.states.last().unwrap();
        assert!((last - DVector::from_column_slice(&[0.0, 0.25])).norm() < 1e-4);
    }

    #[test]
    fn mls_from_far_corner_stays_bounded() {
        let tr = integrate(&mls(), &DVector::from_element(4, 100.0), &opts(50.0)).unwrap();
        assert!(tr.states.iter().all(|x| x.norm() < 1e3));
    }

    #[test]
    fn blow_up_is_reported() {
        // x' = x^2 escapes in finite time from x0 = 1
        let mut q = DMatrix::zeros(1, 1);
        q[(0, 0)] = 1.0;
        let sys = QuadraticSystem::new(DMatrix::zeros(1, 1), vec![q], DVector::zeros(1)).unwrap();
        let err = integrate(&sys, &DVector::from_element(1, 1.0), &opts(2.0)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn linear_decay_bound_is_tiny() {
        let sys = linear(&DMatrix::from_diagonal(&DVector::from_column_slice(&[
            -1.0, -2.0,
        ])));
        let o = SimOptions {
            trials: 8,
            ..Default::default()
        };
        let rep = empirical_ultimate_bound(&sys, &o).unwrap();
        assert!(rep.bound <= 1e-6);
        assert_eq!(rep.per_trial_max.len(), 8);
    }

    #[test]
    fn trials_are_deterministic_per_seed() {
        let o = SimOptions {
            trials: 4,
            horizon: 20.0,
            ..Default::default()
        };
        let a = empirical_ultimate_bound(&academic2d(), &o).unwrap();
        let b = empirical_ultimate_bound(&academic2d(), &o).unwrap();
        assert_eq!(a.per_trial_max, b.per_trial_max);
        assert_ne!(a.trials[0].x0, a.trials[1].x0);
    }

    #[test]
    fn zero_trials_rejected() {
        let o = SimOptions {
            trials: 0,
            ..Default::default()
        };
        assert!(matches!(
            empirical_ultimate_bound(&academic2d(), &o),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn f32_integration_runs() {
        let sys = academic2d().cast::<f32>();
        let o = SimOptions {
            horizon: 10.0,
            rtol: 1e-5,
            atol: 1e-6,
            ..Default::default()
        };
        let tr = integrate(&sys, &DVector::from_column_slice(&[1.0f32, 1.0]), &o).unwrap();
        assert!(tr.states.last().unwrap().norm() < 2.0);
    }
}
