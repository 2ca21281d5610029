//! `report.json` and `field.csv` writers.

use std::io::Write;
use std::path::Path;

use helmlayer::fmm::FmmStats;
use helmlayer::solver::SolveReport;
use helmlayer::Complex64;
use serde::Serialize;
use serde_json::Value;

/// Everything under `timings` varies between runs; every other key is
/// reproducible in deterministic mode.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub rule_build: f64,
    pub assembly: f64,
    pub matvec: f64,
    pub precond: f64,
    pub solve: f64,
    pub total: f64,
    /// Per-size rows of the convergence and scaling runs.
    pub per_iteration: Vec<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FmmSummary {
    pub p: usize,
    pub leaf_size: usize,
    pub theta: f64,
    pub source_boxes: usize,
    pub free_m2l: usize,
    pub reaction_m2l: usize,
    pub node_keys: usize,
    pub reaction_blocks: usize,
    pub near_blocks: usize,
    pub near_entries: usize,
}

impl FmmSummary {
    pub fn set_stats(&mut self, s: &FmmStats) {
        self.source_boxes = s.source_boxes;
        self.free_m2l = s.free_m2l;
        self.reaction_m2l = s.reaction_m2l;
        self.node_keys = s.node_keys;
        self.reaction_blocks = s.reaction_blocks;
        self.near_blocks = s.near_blocks;
        self.near_entries = s.near_entries;
    }
}

/// The same keys appear on success and on failure.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub command: String,
    /// `converged`, `not_converged` or `failed`.
    pub status: String,
    pub phase: Option<String>,
    pub error: Option<String>,
    pub deterministic: bool,
    pub threads_requested: usize,
    pub threads_used: usize,
    pub layers: usize,
    pub scatterers: usize,
    pub unknowns: usize,
    pub fmm: FmmSummary,
    pub precondition: bool,
    pub iterations: usize,
    pub matvecs: usize,
    pub final_residual: Option<f64>,
    pub residual_history: Vec<f64>,
    pub fallback_blocks: usize,
    pub field: Option<String>,
    /// Per-size table of `converge` and `scale`.
    pub rows: Vec<Value>,
    pub timings: Timings,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.into(), status: "failed".into(), threads_used: 1, ..Report::default() }
    }

    pub fn fail(&mut self, phase: &str, err: impl ToString) {
        self.status = "failed".into();
        self.phase = Some(phase.into());
        self.error = Some(err.to_string());
    }

    pub fn set_solve(&mut self, r: &SolveReport) {
        self.iterations = r.iterations;
        self.matvecs = r.matvecs;
        self.final_residual = Some(r.final_residual);
        self.residual_history = r.history.clone();
        self.status = if r.converged { "converged" } else { "not_converged" }.into();
        self.timings.rule_build = r.timings.rule_build;
        self.timings.assembly = r.timings.assembly;
        self.timings.matvec = r.timings.matvec;
        self.timings.precond = r.timings.precond;
        self.timings.solve = r.timings.solve;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

/// Drops the `timings` object so two reports can be compared.
pub fn without_timings(json: &str) -> Option<Value> {
    let mut v: Value = serde_json::from_str(json).ok()?;
    v.as_object_mut()?.remove("timings");
    Some(v)
}

/// Row-major grid, x fastest. `mask` is 1 inside a scatterer, where the field is written as 0.
pub struct FieldGrid {
    pub points: Vec<[f64; 2]>,
    pub mask: Vec<bool>,
    pub values: Vec<Complex64>,
}

pub fn grid_points(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Vec<[f64; 2]> {
    let step = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            pts.push([step(x[0], x[1], nx, i), step(y[0], y[1], ny, j)]);
        }
    }
    pts
}

pub fn write_field(path: &Path, grid: &FieldGrid) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,y,re_us,im_us,mask")?;
    for ((p, m), u) in grid.points.iter().zip(&grid.mask).zip(&grid.values) {
        writeln!(out, "{},{},{:e},{:e},{}", p[0], p[1], u.re, u.im, *m as u8)?;
    }
    out.flush()
}
