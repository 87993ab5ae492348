mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use nalgebra::DMatrix;
use trapping_core::certify::{verify, VerifyOptions};
use trapping_core::io::{self, AnalysisReport, CertificateFile, StructureReport};
use trapping_core::lossless::LosslessStructure;
use trapping_core::pipeline::{
    goyal_ball_radius, log_grid, run_pipeline, ConstraintMode, PipelineConfig,
};
use trapping_core::sim::{self, SimOptions};
use trapping_core::{fixtures, Error, System};

use args::{
    AnalyzeArgs, CertifyArgs, Cli, Command, LosslessArgs, Mode, Reference, SimulateArgs, Source,
};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Published comparison values for the airfoil model.
const AIRFOIL_PRIOR_ALPHA: f64 = 1637.56;
const AIRFOIL_PRIOR_BOUND: f64 = 2031.3;
const AIRFOIL_REPORTED_BOUND: f64 = 480.6;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn fail(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAIL,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            Error::Inapplicable(_) | Error::Conic(_) => EXIT_FAIL,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Lossless(a) => lossless(a),
        Command::Certify(a) => certify(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(source: &Source) -> Result<(System, String), Failure> {
    match (&source.fixture, &source.system) {
        (Some(name), _) => Ok((fixtures::by_name(name)?, name.clone())),
        (None, Some(path)) => {
            let sys = io::read_system(path).map_err(|e| {
                Failure::input(format!("cannot read system {}: {e}", path.display()))
            })?;
            let label = path.file_stem().map_or_else(
                || "system".to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            Ok((sys, label))
        }
        (None, None) => Err(Failure::input("one of --fixture or --system is required")),
    }
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, result: trapping_core::Result<()>) -> CmdResult {
    result.map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn parse_chi_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::input(format!("--chi-grid expects lo:hi:count, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && count > 0) {
        return Err(bad());
    }
    Ok(log_grid(lo, hi, count))
}

fn config_from(a: &AnalyzeArgs) -> Result<PipelineConfig, Failure> {
    let mut config = PipelineConfig::default();
    if let Some(v) = a.delta_m {
        config.delta_m = v;
    }
    if let Some(v) = a.epsilon {
        config.epsilon = v;
    }
    if let Some(g) = &a.chi_grid {
        config.chi_grid = parse_chi_grid(g)?;
    }
    if let Some(v) = a.restarts {
        config.restarts = v;
    }
    if let Some(v) = a.seed {
        config.rng_seed = v;
    }
    if let Some(m) = a.constraint_mode {
        config.constraint_mode = match m {
            Mode::Hard => ConstraintMode::Hard,
            Mode::Soft => ConstraintMode::Soft,
        };
    }
    config.fixed_shift = a.fix_shift.clone();
    config.local_search_trust_radius = a.trust_radius;
    config.validate()?;
    Ok(config)
}

fn prior_alpha(label: &str) -> Option<f64> {
    match label {
        "academic2d" => Some(0.289),
        _ => None,
    }
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    let (system, label) = load(&a.source)?;
    let config = config_from(&a)?;
    let report = run_pipeline(&system, &config)?;

    ensure_dir(&a.out)?;
    let sweep_path = a.out.join("sweep.csv");
    write(
        &sweep_path,
        fs::write(&sweep_path, io::sweep_csv(&report.sweep)).map_err(Into::into),
    )?;

    // evaluated at the shift of the first-stage certificate
    let goyal = report.gevp.as_ref().and_then(|c| {
        let n = system.dim();
        goyal_ball_radius(&system, &DMatrix::identity(n, n), &c.m).ok()
    });
    let summary = AnalysisReport::new(&report, &config, goyal);
    let report_path = a.out.join("report.json");
    write(&report_path, io::write_json(&report_path, &summary))?;

    println!(
        "lossless: general dim {}, symmetric dim {}",
        report.general_dim, report.symmetric_dim
    );
    if let Some(s) = &report.shift {
        println!(
            "shift: a* = {:.6e}, |m*| = {:.6}, m* = {:?}",
            s.a_star,
            s.m_star.norm(),
            s.m_star.as_slice()
        );
    }
    for (name, c) in [
        ("grid", &report.grid),
        ("gevp", &report.gevp),
        ("local-search", &report.local),
    ] {
        if let Some(c) = c {
            println!(
                "{name}: r = {:.6e}, chi = {:.6}, alpha = {:.6e}, ultimate bound = {:.6}",
                c.r, c.chi, c.alpha, c.ultimate_bound
            );
        }
    }

    let Some(cert) = &report.final_certificate else {
        let d = report
            .diagnosis
            .clone()
            .unwrap_or_else(|| trapping_core::pipeline::Diagnosis {
                stage: "unknown".into(),
                reason: "no certificate".into(),
            });
        return Err(Failure::fail(format!(
            "no certificate at stage {}: {}",
            d.stage, d.reason
        )));
    };

    let cert_path = a.out.join("certificate.json");
    write(
        &cert_path,
        io::write_json(&cert_path, &CertificateFile::new(cert, &config)),
    )?;
    if let Some(g) = goyal {
        println!("comparison ball radius (S = I): {g:.6}");
    }
    let prior = prior_alpha(&label).map_or_else(|| "n/a".to_string(), |v| format!("{v}"));
    println!(
        "summary: case={label} prior_alpha={prior} alpha={:.6e} ultimate_bound={:.6} stage={}",
        cert.alpha, cert.ultimate_bound, cert.stage
    );
    if let Some(Reference::Airfoil) = a.compare {
        println!(
            "reference (airfoil): prior alpha {AIRFOIL_PRIOR_ALPHA}, prior ultimate bound {AIRFOIL_PRIOR_BOUND}, published ultimate bound {AIRFOIL_REPORTED_BOUND}"
        );
    }

    let check = verify(
        &system,
        cert,
        &VerifyOptions {
            epsilon: config.epsilon,
            ..Default::default()
        },
    );
    println!("verify: {}", if check.pass { "pass" } else { "FAIL" });
    println!(
        "wrote {}, {}, {}",
        cert_path.display(),
        report_path.display(),
        sweep_path.display()
    );
    if !check.pass {
        return Err(Failure::fail(format!(
            "emitted certificate failed verification: {}",
            check.failed.unwrap_or_default()
        )));
    }
    Ok(())
}

fn pattern(m: &DMatrix<f64>) -> String {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    m.row_iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    if v.abs() <= 1e-12 * scale {
                        format!("{:>9}", 0)
                    } else {
                        format!("{:>9.4}", v / scale)
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn lossless(a: LosslessArgs) -> CmdResult {
    let (system, label) = load(&a.source)?;
    let structure = LosslessStructure::build(&system);
    println!("system: {label} (n = {})", system.dim());
    println!("G: {} x {}", structure.g.nrows(), structure.g.ncols());
    println!("general dim: {}", structure.general_basis.len());
    println!("symmetric dim: {}", structure.symmetric_basis.len());
    for (k, b) in structure.general_basis.iter().enumerate() {
        println!("general basis {k} (scaled to max 1):\n{}", pattern(b));
    }
    for (k, b) in structure.symmetric_basis.iter().enumerate() {
        println!("symmetric basis {k} (scaled to max 1):\n{}", pattern(b));
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("structure.json");
        write(
            &path,
            io::write_json(&path, &StructureReport::new(&structure)),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn certify(a: CertifyArgs) -> CmdResult {
    let (system, _) = load(&a.source)?;
    let (cert, file) = io::read_certificate(&a.certificate).map_err(|e| {
        Failure::input(format!(
            "cannot read certificate {}: {e}",
            a.certificate.display()
        ))
    })?;
    if cert.m.len() != system.dim() {
        return Err(Failure::input(format!(
            "certificate has dimension {} but the system has {}",
            cert.m.len(),
            system.dim()
        )));
    }
    let options = VerifyOptions {
        epsilon: a.epsilon.unwrap_or(file.config.epsilon),
        samples: a.samples,
        seed: a.seed,
    };
    let report = verify(&system, &cert, &options);
    let c = &report.checks;
    let s = &report.slacks;
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!(
        "(a) P positive definite: {} (lambda_min = {:.6e})",
        mark(c.positive_definite),
        s.p_min_eig
    );
    println!(
        "(b) Theta <= -(eps/2) I: {} (slack = {:.6e})",
        mark(c.theta),
        s.theta
    );
    println!(
        "(c) lossless: {} (residual = {:.3e}, sampled = {:.3e})",
        mark(c.lossless),
        s.lossless_residual,
        s.lossless_sampled_max
    );
    println!(
        "(d) sampled decrease: {} (margin = {:.6e})",
        mark(c.decrease),
        s.decrease
    );
    println!("certificate: {}", if report.pass { "pass" } else { "FAIL" });
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("verify.json");
        write(&path, io::write_json(&path, &report))?;
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::fail(report.failed.unwrap_or_default()))
    }
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let (system, label) = load(&a.source)?;
    let options = SimOptions {
        horizon: a.horizon,
        tail_fraction: a.tail_fraction,
        trials: a.trials,
        init_half_width: a.init_range,
        seed: a.seed,
        ..Default::default()
    };
    options.validate()?;
    let cert = match &a.certificate {
        Some(path) => {
            let (c, _) = io::read_certificate(path).map_err(|e| {
                Failure::input(format!("cannot read certificate {}: {e}", path.display()))
            })?;
            if c.m.len() != system.dim() {
                return Err(Failure::input(
                    "certificate dimension does not match the system",
                ));
            }
            Some(c)
        }
        None => None,
    };
    let report = sim::monte_carlo(&system, &options, cert.as_ref())?;
    println!(
        "simulate: case={label} trials={} horizon={} tail_fraction={} seed={}",
        options.trials, options.horizon, options.tail_fraction, options.seed
    );
    println!("empirical ultimate bound: {:.6}", report.bound);
    println!("mean tail maximum: {:.6}", report.mean_tail_max);

    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("montecarlo.json");
        write(&path, io::write_json(&path, &report))?;
        let x0 = sim::trial_initial_state::<f64>(system.dim(), &options, 0);
        let traj = sim::integrate(&system, &x0, &options)?;
        let tpath = dir.join("trajectory.csv");
        write(
            &tpath,
            fs::write(&tpath, io::trajectory_csv(&traj)).map_err(Into::into),
        )?;
        println!("wrote {}, {}", path.display(), tpath.display());
    }

    if let Some(inv) = &report.invariance {
        println!(
            "certified ultimate bound: {:.6} ({})",
            inv.ultimate_bound,
            if inv.bound_below_certified {
                "empirical bound is below"
            } else {
                "EXCEEDED"
            }
        );
        println!(
            "invariance: {} of {} trials entered the ellipsoid, {} violations",
            inv.trials_entered, options.trials, inv.violations
        );
        if let Some((k, t)) = inv.first_violation {
            return Err(Failure::fail(format!(
                "trial {k} left the ellipsoid at t = {t}"
            )));
        }
        if !inv.bound_below_certified {
            return Err(Failure::fail(
                "empirical bound exceeds the certified ultimate bound",
            ));
        }
    }
    Ok(())
}
