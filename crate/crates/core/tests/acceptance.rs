//! Acceptance criteria. Each criterion prints one PASS or FAIL line; the test
//! fails at the end if any criterion failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trapping_core::certify::{verify, VerifyOptions};
use trapping_core::fixtures;
use trapping_core::lossless::LosslessStructure;
use trapping_core::pipeline::{goyal_ball_radius, run_pipeline, PipelineConfig, PipelineReport};
use trapping_core::sim::{monte_carlo, SimOptions};
use trapping_core::{Certificate, System};

type Outcome = Result<String, String>;
/// `(i, j, k)`: entry `i` equals `k` times entry `j`.
type Tie = ((usize, usize), (usize, usize), f64);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn academic_config() -> PipelineConfig {
    PipelineConfig {
        fixed_shift: Some(vec![0.0, 0.0]),
        ..Default::default()
    }
}

fn mls_config() -> PipelineConfig {
    PipelineConfig {
        delta_m: 30.0,
        ..Default::default()
    }
}

fn certificates(report: &PipelineReport<f64>) -> Vec<Certificate> {
    [
        &report.grid,
        &report.gevp,
        &report.local,
        &report.final_certificate,
    ]
    .into_iter()
    .flatten()
    .cloned()
    .collect()
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let nrm = v.norm();
        if nrm > 1e-3 && nrm <= 1.0 {
            return v / nrm;
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rep =
        run_pipeline(&fixtures::academic2d(), &academic_config()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let grid = rep.grid.ok_or("no grid certificate")?;
    let gevp = rep.gevp.ok_or("no GEVP certificate")?;
    let fin = rep.final_certificate.ok_or("no final certificate")?;
    let dm = (&fin.m - DVector::from_column_slice(&[0.0, 0.25])).norm();
    ensure(
        (grid.alpha - 0.2905).abs() <= 1e-2
            && (gevp.alpha - 0.289).abs() <= 1e-2
            && dm <= 1e-3
            && fin.r <= 1e-2
            && secs < 60.0,
        format!(
            "grid alpha {:.5}, GEVP alpha {:.5}, final m [{:.5}, {:.5}], r {:.3e}, {secs:.2} s",
            grid.alpha, gevp.alpha, fin.m[0], fin.m[1], fin.r
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rep = run_pipeline(&fixtures::mls(), &mls_config()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let a_star = rep.shift.as_ref().ok_or("no shift solution")?.a_star;
    let fin = rep.final_certificate.ok_or("no final certificate")?;
    ensure(
        a_star < 0.0
            && rel(fin.alpha, 25.721) <= 0.05
            && rel(fin.ultimate_bound, 50.94) <= 0.05
            && secs < 120.0,
        format!(
            "a* {a_star:.4}, alpha {:.4}, ultimate bound {:.4}, {secs:.2} s",
            fin.alpha, fin.ultimate_bound
        ),
    )
}

/// Every basis matrix is zero outside `free` and satisfies `b[i] = ratio * b[j]`
/// for each tied pair.
fn fits_pattern(b: &DMatrix<f64>, free: &[(usize, usize)], tied: &[Tie]) -> bool {
    let scale = b.amax();
    let zeros = (0..b.nrows())
        .flat_map(|i| (0..b.ncols()).map(move |j| (i, j)))
        .filter(|ij| !free.contains(ij))
        .all(|ij| b[ij].abs() <= 1e-9 * scale);
    zeros
        && tied
            .iter()
            .all(|(a, c, k)| (b[*a] - k * b[*c]).abs() <= 1e-9 * scale)
}

fn criterion_3() -> Outcome {
    let lorenz = LosslessStructure::build(&fixtures::by_name("lorenz").unwrap());
    let lorenz_free = [(0, 0), (1, 0), (2, 0), (1, 1), (2, 2)];
    let lorenz_ok = lorenz.general_basis.len() == 4
        && lorenz
            .general_basis
            .iter()
            .all(|b| fits_pattern(b, &lorenz_free, &[((1, 1), (2, 2), 1.0)]));

    let mls = LosslessStructure::build(&fixtures::mls());
    let mls_free = [(0, 0), (0, 3), (3, 0), (3, 3), (1, 1), (2, 2)];
    let mls_ok = mls.symmetric_basis.len() == 4
        && mls
            .symmetric_basis
            .iter()
            .all(|b| fits_pattern(b, &mls_free, &[((1, 1), (2, 2), 2.0)]));

    let academic = LosslessStructure::build(&fixtures::academic2d());
    let academic_ok = academic.symmetric_basis.len() == 1 && {
        let b = &academic.symmetric_basis[0];
        (b / b[(0, 0)] - DMatrix::identity(2, 2)).amax() <= 1e-9
    };
    ensure(
        lorenz_ok && mls_ok && academic_ok,
        format!(
            "lorenz general dim {} (pattern {lorenz_ok}), mls symmetric dim {} (pattern {mls_ok}), academic symmetric dim {} (identity {academic_ok})",
            lorenz.general_basis.len(),
            mls.symmetric_basis.len(),
            academic.symmetric_basis.len()
        ),
    )
}

fn all_fixtures() -> Vec<(&'static str, System)> {
    vec![
        ("lorenz", fixtures::by_name("lorenz").unwrap()),
        ("mls", fixtures::mls()),
        ("academic2d", fixtures::academic2d()),
        ("random6", fixtures::random_lossless(6, 0)),
    ]
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0_f64;
    let mut count = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (_, sys) in all_fixtures() {
        let st = LosslessStructure::build(&sys);
        for b in st.general_basis.iter().chain(&st.symmetric_basis) {
            count += 1;
            for _ in 0..1000 {
                let y = random_unit(&mut rng, sys.dim());
                worst = worst.max(y.dot(&(b * sys.eval_quadratic(&y))).abs());
            }
        }
    }
    ensure(
        worst <= 1e-8,
        format!("{count} basis matrices, max |y^T B Q(y)| = {worst:.2e}"),
    )
}

fn soundness_runs() -> Vec<(String, System, PipelineConfig)> {
    let mut runs = vec![
        (
            "academic2d fixed".to_string(),
            fixtures::academic2d(),
            academic_config(),
        ),
        (
            "academic2d".to_string(),
            fixtures::academic2d(),
            PipelineConfig::default(),
        ),
        ("mls".to_string(), fixtures::mls(), mls_config()),
        (
            "lorenz".to_string(),
            fixtures::by_name("lorenz").unwrap(),
            PipelineConfig::default(),
        ),
    ];
    for seed in 0..3 {
        runs.push((
            format!("random6 seed {seed}"),
            fixtures::random_lossless(6, seed),
            PipelineConfig::default(),
        ));
    }
    runs
}

fn criterion_5() -> Outcome {
    let mut total = 0;
    let mut failed = Vec::new();
    for (name, sys, config) in soundness_runs() {
        let rep = run_pipeline(&sys, &config).map_err(|e| format!("{name}: {e}"))?;
        let opts = VerifyOptions {
            epsilon: config.epsilon,
            ..Default::default()
        };
        for cert in certificates(&rep) {
            total += 1;
            let v = verify(&sys, &cert, &opts);
            if !v.pass {
                failed.push(format!(
                    "{name} {}: {}",
                    cert.stage,
                    v.failed.unwrap_or_default()
                ));
            }
        }
    }
    ensure(
        total > 0 && failed.is_empty(),
        format!(
            "{} of {total} certificates pass verify {failed:?}",
            total - failed.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let sys = fixtures::mls();
    let rep = run_pipeline(&sys, &mls_config()).map_err(|e| e.to_string())?;
    let cert = rep.final_certificate.ok_or("no final certificate")?;
    let opts = SimOptions {
        trials: 1000,
        init_half_width: 100.0,
        ..Default::default()
    };
    let mc = monte_carlo(&sys, &opts, Some(&cert)).map_err(|e| e.to_string())?;
    let inv = mc.invariance.ok_or("no invariance summary")?;
    ensure(
        rel(mc.bound, 42.34) <= 0.10 && mc.bound < cert.ultimate_bound && inv.violations == 0,
        format!(
            "empirical bound {:.3} vs certified {:.3}, {} of 1000 trials entered, {} violations",
            mc.bound, cert.ultimate_bound, inv.trials_entered, inv.violations
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut cases: Vec<(System, Certificate, f64)> = Vec::new();
    for (_, sys, config) in soundness_runs() {
        let rep = run_pipeline(&sys, &config).map_err(|e| e.to_string())?;
        for cert in certificates(&rep) {
            let mut shrunk = cert.clone();
            shrunk.r *= 0.5;
            let shrunk = shrunk.rescaled(1.0);
            cases.push((sys.clone(), cert, config.epsilon));
            cases.push((sys.clone(), shrunk, config.epsilon));
        }
    }
    let mut worst_alpha = 0.0_f64;
    let mut flips = 0;
    let mut passing = 0;
    for (sys, cert, epsilon) in &cases {
        let opts = VerifyOptions {
            epsilon: *epsilon,
            ..Default::default()
        };
        let base = verify(sys, cert, &opts).pass;
        passing += usize::from(base);
        for t in [0.1, 10.0] {
            let scaled = cert.rescaled(t);
            worst_alpha = worst_alpha.max(rel(scaled.alpha, cert.alpha));
            if verify(sys, &scaled, &opts).pass != base {
                flips += 1;
            }
        }
    }
    let failing = cases.len() - passing;
    ensure(
        worst_alpha <= 1e-10 && flips == 0 && passing > 0 && failing > 0,
        format!(
            "{} certificates ({passing} passing, {failing} failing), max alpha change {worst_alpha:.1e}, {flips} verify flips",
            cases.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let sys = fixtures::academic2d();
    let radius = goyal_ball_radius(&sys, &DMatrix::identity(2, 2), &DVector::zeros(2))
        .map_err(|e| e.to_string())?;
    let rep = run_pipeline(&sys, &academic_config()).map_err(|e| e.to_string())?;
    let gevp = rep.gevp.ok_or("no GEVP certificate")?;
    ensure(
        (radius - 1.0).abs() <= 1e-9 && radius > gevp.alpha,
        format!(
            "comparison radius {radius:.12} vs certified alpha {:.5}",
            gevp.alpha
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut certified = 0;
    let mut diagnosed = 0;
    for seed in 0..5 {
        let sys = fixtures::random_lossless(6, seed);
        let rep = run_pipeline(&sys, &PipelineConfig::default()).map_err(|e| e.to_string())?;
        match (&rep.final_certificate, &rep.diagnosis) {
            (Some(cert), None) => {
                let v = verify(&sys, cert, &VerifyOptions::default());
                if !v.pass {
                    return Err(format!(
                        "seed {seed}: certificate fails verify: {:?}",
                        v.failed
                    ));
                }
                certified += 1;
            }
            (None, Some(_)) => diagnosed += 1,
            _ => {
                return Err(format!(
                    "seed {seed}: neither a certificate nor a diagnosis"
                ))
            }
        }
    }
    ensure(
        certified + diagnosed == 5,
        format!("5 random 6-state lossless systems: {certified} verified certificates, {diagnosed} diagnoses"),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("academic example", criterion_1),
        ("MLS pipeline", criterion_2),
        ("lossless structure", criterion_3),
        ("lossless residual", criterion_4),
        ("certificate soundness", criterion_5),
        ("Monte-Carlo bound", criterion_6),
        ("scale invariance", criterion_7),
        ("comparison ball", criterion_8),
        ("random 6-state systems", criterion_9),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL {name}: {detail}", k + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
