//! Subcommand drivers. Each returns the report it wrote and an exit code.

use std::path::{Path, PathBuf};
use std::time::Instant;

use helmlayer::discretization::Excitation;
use helmlayer::geometry::PanelMesh;
use helmlayer::solver::*;
use helmlayer::sommerfeld::SommerfeldRule;
use helmlayer::Complex64;
use serde_json::json;

use crate::config::Config;
use crate::report::{grid_points, write_field, FieldGrid, Report};

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub deterministic: bool,
    /// Recorded only: the numerical core runs on one thread.
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for Options {
    fn default() -> Self {
        Options { deterministic: false, threads: 1, out: PathBuf::from(".") }
    }
}

pub struct Outcome {
    pub report: Report,
    pub exit: i32,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// Probes for the manufactured-solution errors: 128 panels per curve, 0.1 off the boundary.
pub const PROBE_PANELS: usize = 128;
pub const PROBE_OFFSET: f64 = 0.1;

fn start(command: &str, path: &Path, opts: &Options) -> (Report, Result<Config, String>) {
    let mut rep = Report::new(command);
    rep.threads_requested = opts.threads;
    rep.deterministic = opts.deterministic;
    let cfg = Config::load(path).and_then(|c| c.validate().map(|_| c));
    match cfg {
        Ok(c) => {
            rep.deterministic |= c.fmm.deterministic;
            rep.layers = c.stack.k.len();
            rep.scatterers = c.scatterers.len();
            rep.precondition = c.gmres.precondition;
            rep.fmm.p = c.fmm.p;
            rep.fmm.leaf_size = c.fmm.leaf_size;
            rep.fmm.theta = c.fmm.theta;
            (rep, Ok(c))
        }
        Err(e) => {
            rep.fail("config", &e);
            (rep, Err(e.to_string()))
        }
    }
}

fn finish(mut rep: Report, cfg: Option<&Config>, opts: &Options, clock: &WallClock, summary: String) -> Outcome {
    rep.timings.total = clock.now();
    let name = cfg.map_or("report.json", |c| c.output.report.as_str());
    let mut summary = summary;
    if let Err(e) = std::fs::create_dir_all(&opts.out).and_then(|_| rep.write(&opts.out.join(name))) {
        rep.fail("output", format!("cannot write report: {e}"));
        summary.push_str(&format!("cannot write report: {e}\n"));
    }
    let exit = match rep.status.as_str() {
        "converged" => 0,
        "not_converged" => 1,
        _ => 2,
    };
    if let Some(e) = &rep.error {
        summary.push_str(&format!("error ({}): {e}\n", rep.phase.as_deref().unwrap_or("?")));
    }
    Outcome { report: rep, exit, summary }
}

pub fn solve(path: &Path, opts: &Options) -> Outcome {
    let clock = WallClock::start();
    let (mut rep, cfg) = start("solve", path, opts);
    let cfg = match cfg {
        Ok(c) => c,
        Err(_) => return finish(rep, None, opts, &clock, String::new()),
    };
    let scene = match cfg.scene() {
        Ok(s) => s,
        Err(e) => {
            rep.fail("config", e);
            return finish(rep, Some(&cfg), opts, &clock, String::new());
        }
    };
    let sol = match solve_scene(&scene, &clock) {
        Ok(s) => s,
        Err(e) => {
            rep.fail("solve", e);
            return finish(rep, Some(&cfg), opts, &clock, String::new());
        }
    };
    rep.unknowns = sol.mesh.len();
    rep.fallback_blocks = sol.fallback_blocks;
    rep.set_solve(&sol.report);
    rep.fmm.set_stats(&sol.stats);
    let o = &cfg.output;
    if o.nx > 0 && o.ny > 0 {
        let points = grid_points(o.x, o.y, o.nx, o.ny);
        let mask: Vec<bool> = points.iter().map(|p| sol.mesh.inside(*p)).collect();
        let outside: Vec<[f64; 2]> = points.iter().zip(&mask).filter(|(_, m)| !**m).map(|(p, _)| *p).collect();
        match sol.field(&outside, &scene.fmm) {
            Ok(u) => {
                let mut it = u.into_iter();
                let values = mask.iter().map(|m| if *m { Complex64::new(0.0, 0.0) } else { it.next().unwrap() }).collect();
                let grid = FieldGrid { points, mask, values };
                let written = std::fs::create_dir_all(&opts.out).and_then(|_| write_field(&opts.out.join(&o.field), &grid));
                match written {
                    Ok(()) => rep.field = Some(o.field.clone()),
                    Err(e) => rep.fail("output", format!("cannot write field: {e}")),
                }
            }
            Err(e) => rep.fail("field", e),
        }
    }
    let summary = format!(
        "{}: N={} iterations={} residual={:.3e}\n",
        rep.status,
        rep.unknowns,
        rep.iterations,
        rep.final_residual.unwrap_or(f64::NAN)
    );
    finish(rep, Some(&cfg), opts, &clock, summary)
}

/// Successive ratios `e[i-1] / e[i]`.
pub fn ratios(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| w[0] / w[1]).collect()
}

/// Relative L∞ and weighted L2 errors of the manufactured solution, and
/// both solves, for one configuration.
pub struct ConvergenceRow {
    pub unknowns: usize,
    pub linf: f64,
    pub l2: f64,
    pub iterations: [usize; 2],
    pub converged: bool,
    pub per_iteration: f64,
    pub fallback_blocks: usize,
}

pub fn convergence_row(cfg: &Config, clock: &dyn Clock) -> Result<ConvergenceRow, String> {
    let scene = cfg.scene().map_err(|e| e.to_string())?;
    let Excitation::PointSource(src) = scene.excitation else {
        return Err("converge needs incidence.point_source".into());
    };
    let runs = solve_scene_runs(&scene, clock, &[false, true]).map_err(|e| e.to_string())?;
    let sol = &runs[1];
    let (pts, w) = boundary_probes(&sol.mesh.curves, PROBE_PANELS, PROBE_OFFSET, &scene.stack).map_err(|e| e.to_string())?;
    let u = sol.field(&pts, &scene.fmm).map_err(|e| e.to_string())?;
    let exact: Vec<Complex64> = pts.iter().map(|p| sol.rule.layered_green(*p, src)).collect();
    let (linf, l2) = probe_errors(&u, &exact, &w);
    let t = &sol.report.timings;
    Ok(ConvergenceRow {
        unknowns: sol.mesh.len(),
        linf,
        l2,
        iterations: [runs[0].report.iterations, sol.report.iterations],
        converged: runs.iter().all(|r| r.report.converged),
        per_iteration: (t.matvec + t.precond) / sol.report.iterations.max(1) as f64,
        fallback_blocks: sol.fallback_blocks,
    })
}

pub fn converge(path: &Path, ns: &[usize], opts: &Options) -> Outcome {
    let clock = WallClock::start();
    let (mut rep, cfg) = start("converge", path, opts);
    let cfg = match cfg {
        Ok(c) => c,
        Err(_) => return finish(rep, None, opts, &clock, String::new()),
    };
    if ns.is_empty() {
        rep.fail("config", "empty N list");
        return finish(rep, Some(&cfg), opts, &clock, String::new());
    }
    let mut rows = Vec::new();
    let mut summary = String::from("       N     L_inf        L2   iters  iters(pc)\n");
    for &n in ns {
        match convergence_row(&cfg.with_total_panels(n), &clock) {
            Ok(r) => {
                summary.push_str(&format!("{:8} {:9.3e} {:9.3e} {:7} {:10}\n", r.unknowns, r.linf, r.l2, r.iterations[0], r.iterations[1]));
                rows.push(r);
            }
            Err(e) => {
                rep.fail("solve", e);
                return finish(rep, Some(&cfg), opts, &clock, summary);
            }
        }
    }
    let linf: Vec<f64> = rows.iter().map(|r| r.linf).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2).collect();
    let (rl, r2) = (ratios(&linf), ratios(&l2));
    for (i, (r, &n)) in rows.iter().zip(ns).enumerate() {
        rep.rows.push(json!({
            "n_requested": n,
            "unknowns": r.unknowns,
            "linf_error": r.linf,
            "l2_error": r.l2,
            "linf_ratio": i.checked_sub(1).map(|j| rl[j]),
            "l2_ratio": i.checked_sub(1).map(|j| r2[j]),
            "iterations": r.iterations[0],
            "iterations_preconditioned": r.iterations[1],
            "fallback_blocks": r.fallback_blocks,
        }));
        rep.timings.per_iteration.push(r.per_iteration);
    }
    rep.unknowns = rows.last().map_or(0, |r| r.unknowns);
    rep.status = if rows.iter().all(|r| r.converged) { "converged" } else { "not_converged" }.into();
    summary.push_str(&format!("L_inf ratios {:?}\nL2 ratios    {:?}\n", rl, r2));
    finish(rep, Some(&cfg), opts, &clock, summary)
}

pub fn scale(path: &Path, ns: &[usize], opts: &Options) -> Outcome {
    let clock = WallClock::start();
    let (mut rep, cfg) = start("scale", path, opts);
    let cfg = match cfg {
        Ok(c) => c,
        Err(_) => return finish(rep, None, opts, &clock, String::new()),
    };
    if ns.is_empty() {
        rep.fail("config", "empty N list");
        return finish(rep, Some(&cfg), opts, &clock, String::new());
    }
    let mut summary = String::from("       N   seconds/iteration\n");
    let (mut sizes, mut times) = (Vec::new(), Vec::new());
    for &n in ns {
        let res = cfg.with_total_panels(n).scene().map_err(|e| e.to_string()).and_then(|s| iteration_time(&s, &clock, 3).map_err(|e| e.to_string()));
        match res {
            Ok((m, t)) => {
                summary.push_str(&format!("{m:8} {t:19.4e}\n"));
                rep.rows.push(json!({ "n_requested": n, "unknowns": m }));
                sizes.push(m as f64);
                times.push(t);
            }
            Err(e) => {
                rep.fail("solve", e);
                return finish(rep, Some(&cfg), opts, &clock, summary);
            }
        }
    }
    rep.timings.per_iteration = times.clone();
    rep.timings.slope = loglog_slope(&sizes, &times);
    rep.unknowns = sizes.last().map_or(0, |n| *n as usize);
    rep.status = "converged".into();
    match rep.timings.slope {
        Some(s) => summary.push_str(&format!("log-log slope {s:.3}\n")),
        None => summary.push_str("log-log slope undefined\n"),
    }
    finish(rep, Some(&cfg), opts, &clock, summary)
}

/// Layered Green's function at `dst` due to a source at `src`.
pub fn greens(path: &Path, src: [f64; 2], dst: [f64; 2]) -> Result<serde_json::Value, String> {
    let cfg = Config::load(path).map_err(|e| e.to_string())?;
    let stack = cfg.layer_stack().map_err(|e| e.to_string())?;
    let rule = SommerfeldRule::build(&stack, cfg.rule_config()).map_err(|e| e.to_string())?;
    let g = rule.layered_green(dst, src);
    let r = rule.reaction_green(dst, src);
    let (ls, ld) = (stack.layer_of(src[1]), stack.layer_of(dst[1]));
    Ok(json!({
        "src": src,
        "dst": dst,
        "src_layer": ls,
        "dst_layer": ld,
        "re": g.re,
        "im": g.im,
        "reaction_re": r.re,
        "reaction_im": r.im,
    }))
}

/// Panels the mesh of a config would have, without solving.
pub fn mesh_size(cfg: &Config) -> Result<usize, String> {
    let stack = cfg.layer_stack().map_err(|e| e.to_string())?;
    let curves = cfg.curves().map_err(|e| e.to_string())?;
    let counts: Vec<usize> = cfg.scatterers.iter().map(|s| s.panels()).collect();
    PanelMesh::new(curves, &counts, &stack).map(|m| m.len()).map_err(|e| e.to_string())
}
