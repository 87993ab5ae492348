//! File formats: system and certificate JSON, sweep and trajectory CSV,
//! structure and stage reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{
    Diagnosis, EllipsoidCertificate, PipelineConfig, PipelineReport, Residuals, ShiftSolution,
    Stage, SweepPoint,
};
use crate::sim::Trajectory;
use crate::{Certificate, Scalar, Structure, System};

/// Row-major nested rows.
pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_of(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Dimension {
            what: format!("{what} row length"),
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn square_of(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    let m = matrix_of(rows, what)?;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            what: what.into(),
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(m)
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `{"n", "A", "Q", "d"}` with `Q[i]` the symmetric matrix of component `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<f64>>>,
    pub d: Vec<f64>,
}

impl SystemFile {
    pub fn from_system(system: &System) -> Self {
        Self {
            n: system.dim(),
            a: rows_of(system.a()),
            q: system.q().iter().map(rows_of).collect(),
            d: system.d().iter().copied().collect(),
        }
    }

    pub fn to_system(&self) -> Result<System> {
        let n = self.n;
        if self.q.len() != n {
            return Err(Error::Dimension {
                what: "Q".into(),
                expected: n,
                found: self.q.len(),
            });
        }
        let a = square_of(&self.a, n, "A")?;
        let q = self
            .q
            .iter()
            .enumerate()
            .map(|(i, qi)| square_of(qi, n, &format!("Q[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        System::new(a, q, DVector::from_column_slice(&self.d))
    }
}

pub fn read_system(path: &Path) -> Result<System> {
    read_json::<SystemFile>(path)?.to_system()
}

pub fn write_system(path: &Path, system: &System) -> Result<()> {
    write_json(path, &SystemFile::from_system(system))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub m: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub r: f64,
    pub chi: f64,
    pub alpha: f64,
    pub ultimate_bound: f64,
    pub stage: Stage,
    pub residuals: Residuals,
    pub config: PipelineConfig,
    pub seed: u64,
}

impl CertificateFile {
    pub fn new(cert: &Certificate, config: &PipelineConfig) -> Self {
        Self {
            m: cert.m.iter().copied().collect(),
            p: rows_of(&cert.p),
            r: cert.r,
            chi: cert.chi,
            alpha: cert.alpha,
            ultimate_bound: cert.ultimate_bound,
            stage: cert.stage,
            residuals: cert.residuals,
            config: config.clone(),
            seed: config.rng_seed,
        }
    }

    /// The stored fields as a certificate; nothing is recomputed.
    pub fn certificate(&self) -> Result<Certificate> {
        let n = self.m.len();
        Ok(EllipsoidCertificate {
            m: DVector::from_column_slice(&self.m),
            p: square_of(&self.p, n, "P")?,
            r: self.r,
            chi: self.chi,
            alpha: self.alpha,
            ultimate_bound: self.ultimate_bound,
            stage: self.stage,
            residuals: self.residuals,
        })
    }
}

pub fn read_certificate(path: &Path) -> Result<(Certificate, CertificateFile)> {
    let file: CertificateFile = read_json(path)?;
    Ok((file.certificate()?, file))
}

/// `chi,r,alpha,feasible`; infeasible points leave `r` and `alpha` empty.
pub fn sweep_csv(sweep: &[SweepPoint]) -> String {
    let mut out = String::from("chi,r,alpha,feasible\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for s in sweep {
        let _ = writeln!(
            out,
            "{:e},{},{},{}",
            s.chi,
            opt(s.r),
            opt(s.alpha),
            s.feasible()
        );
    }
    out
}

/// `t,x1,...,xn`, one row per accepted step.
pub fn trajectory_csv<T: Scalar>(trajectory: &Trajectory<T>) -> String {
    let n = trajectory.states.first().map_or(0, |x| x.len());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        let _ = write!(out, "{:e}", t.as_f64());
        for v in x.iter() {
            let _ = write!(out, ",{:e}", v.as_f64());
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub n: usize,
    pub g_shape: [usize; 2],
    pub general_dim: usize,
    pub symmetric_dim: usize,
    pub general_basis: Vec<Vec<Vec<f64>>>,
    pub symmetric_basis: Vec<Vec<Vec<f64>>>,
}

impl StructureReport {
    pub fn new(structure: &Structure) -> Self {
        Self {
            n: structure.dim(),
            g_shape: [structure.g.nrows(), structure.g.ncols()],
            general_dim: structure.general_basis.len(),
            symmetric_dim: structure.symmetric_basis.len(),
            general_basis: structure.general_basis.iter().map(rows_of).collect(),
            symmetric_basis: structure.symmetric_basis.iter().map(rows_of).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub m_star: Vec<f64>,
    #[serde(rename = "P_star")]
    pub p_star: Vec<Vec<f64>>,
    pub a_star: f64,
    pub certifies: bool,
    pub iterations: usize,
    pub restart: usize,
    pub restarts_used: usize,
    pub seed: u64,
}

impl ShiftRecord {
    pub fn new(s: &ShiftSolution<f64>) -> Self {
        Self {
            m_star: s.m_star.iter().copied().collect(),
            p_star: rows_of(&s.p_star),
            a_star: s.a_star,
            certifies: s.certifies(),
            iterations: s.iterations,
            restart: s.restart,
            restarts_used: s.restarts_used,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub m: Vec<f64>,
    pub r: f64,
    pub chi: f64,
    pub alpha: f64,
    pub ultimate_bound: f64,
}

impl StageRecord {
    pub fn new(c: &Certificate) -> Self {
        Self {
            m: c.m.iter().copied().collect(),
            r: c.r,
            chi: c.chi,
            alpha: c.alpha,
            ultimate_bound: c.ultimate_bound,
        }
    }
}

/// Summary of every stage of an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub general_dim: usize,
    pub symmetric_dim: usize,
    pub shift: Option<ShiftRecord>,
    pub grid: Option<StageRecord>,
    pub gevp: Option<StageRecord>,
    pub local_search: Option<StageRecord>,
    pub local_accepted: bool,
    pub final_stage: Option<Stage>,
    pub alpha: Option<f64>,
    pub ultimate_bound: Option<f64>,
    /// Comparison ball radius with `S = I` at the GEVP-stage shift, when defined.
    pub goyal_radius: Option<f64>,
    pub feasible_grid_points: usize,
    pub diagnosis: Option<Diagnosis>,
    pub config: PipelineConfig,
}

impl AnalysisReport {
    pub fn new(
        report: &PipelineReport<f64>,
        config: &PipelineConfig,
        goyal_radius: Option<f64>,
    ) -> Self {
        let fin = report.final_certificate.as_ref();
        Self {
            general_dim: report.general_dim,
            symmetric_dim: report.symmetric_dim,
            shift: report.shift.as_ref().map(ShiftRecord::new),
            grid: report.grid.as_ref().map(StageRecord::new),
            gevp: report.gevp.as_ref().map(StageRecord::new),
            local_search: report.local.as_ref().map(StageRecord::new),
            local_accepted: report.local_accepted,
            final_stage: fin.map(|c| c.stage),
            alpha: fin.map(|c| c.alpha),
            ultimate_bound: fin.map(|c| c.ultimate_bound),
            goyal_radius,
            feasible_grid_points: report.sweep.iter().filter(|s| s.feasible()).count(),
            diagnosis: report.diagnosis.clone(),
            config: config.clone(),
        }
    }
}
