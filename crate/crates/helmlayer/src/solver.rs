//! Left-preconditioned GMRES around the FMM matvec, and the leaf-box
//! preconditioner built from the free-space part of the kernel.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::discretization::{free_self_term, rhs, Excitation};
use crate::fmm::{FmmConfig, FmmError, FmmStats, LayeredFmm, NystromOperator};
use crate::geometry::{panelize, BoundaryCurve, GeometryError, PanelMesh};
use crate::layered_media::LayerStack;
use crate::sommerfeld::{RuleConfig, RuleError, SommerfeldRule};
use crate::special_functions::hankel0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Seconds since an arbitrary origin. The core has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock that always reads zero.
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

fn norm(v: &[Complex64]) -> f64 {
    libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum())
}

/// In-place LU with partial pivoting of a row-major `n × n` matrix.
/// Returns the pivot rows, or `None` when a pivot vanishes.
fn lu_factor(a: &mut [Complex64], n: usize) -> Option<Vec<usize>> {
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut piv = vec![0; n];
    for k in 0..n {
        let (mut best, mut row) = (0.0, k);
        for i in k..n {
            let v = a[i * n + k].norm();
            if v > best {
                best = v;
                row = i;
            }
        }
        if best <= 1e-14 * scale || !best.is_finite() {
            return None;
        }
        piv[k] = row;
        if row != k {
            for j in 0..n {
                a.swap(k * n + j, row * n + j);
            }
        }
        let inv = a[k * n + k].inv();
        for i in k + 1..n {
            let f = a[i * n + k] * inv;
            a[i * n + k] = f;
            if f != ZERO {
                for j in k + 1..n {
                    let u = a[k * n + j];
                    a[i * n + j] -= f * u;
                }
            }
        }
    }
    Some(piv)
}

fn lu_solve(lu: &[Complex64], piv: &[usize], n: usize, b: &mut [Complex64]) {
    for k in 0..n {
        b.swap(k, piv[k]);
    }
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= lu[i * n + j] * b[j];
        }
        b[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= lu[i * n + j] * b[j];
        }
        b[i] = s / lu[i * n + i];
    }
}

/// One leaf of the preconditioner: owned rows of the inverse of the local
/// free-space system over the leaf and its same-layer neighbours.
#[derive(Debug, Clone)]
pub struct LeafBlock {
    pub owned: Vec<usize>,
    pub halo: Vec<usize>,
    /// `owned.len() × halo.len()`, row-major; empty for a diagonal fallback.
    rows: Vec<Complex64>,
    /// Inverse diagonal used when the local matrix is singular.
    diag: Vec<Complex64>,
}

impl LeafBlock {
    pub fn is_fallback(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LeafPreconditioner {
    pub blocks: Vec<LeafBlock>,
    n: usize,
}

impl LeafPreconditioner {
    /// Blocks from the leaves and halos of a self-mode FMM plan over the mesh.
    pub fn build(mesh: &PanelMesh, stack: &LayerStack, fmm: &LayeredFmm<'_>) -> Self {
        let halos = fmm.leaf_halos();
        let mut blocks = Vec::with_capacity(halos.len());
        for (owned, halo) in halos {
            blocks.push(Self::block(mesh, stack, owned, halo));
        }
        LeafPreconditioner { blocks, n: mesh.len() }
    }

    fn block(mesh: &PanelMesh, stack: &LayerStack, owned: Vec<usize>, halo: Vec<usize>) -> LeafBlock {
        let h = halo.len();
        let mut a = vec![ZERO; h * h];
        for (r, &i) in halo.iter().enumerate() {
            let pi = &mesh.panels[i];
            let k = stack.k(pi.layer);
            for (c, &e) in halo.iter().enumerate() {
                let pe = &mesh.panels[e];
                a[r * h + c] = if i == e {
                    free_self_term(k, pi.length)
                } else {
                    let d = libm::hypot(pi.center[0] - pe.center[0], pi.center[1] - pe.center[1]);
                    hankel0(k * d) * Complex64::new(0.0, 0.25 * pe.length)
                };
            }
        }
        let diag: Vec<Complex64> = (0..owned.len()).map(|r| a[r * h + r].inv()).collect();
        // owned rows of A^{-1} are the solutions of A^T y = e_r
        let mut at = vec![ZERO; h * h];
        for r in 0..h {
            for c in 0..h {
                at[c * h + r] = a[r * h + c];
            }
        }
        let Some(piv) = lu_factor(&mut at, h) else {
            return LeafBlock { owned, halo, rows: Vec::new(), diag };
        };
        let mut rows = vec![ZERO; owned.len() * h];
        for r in 0..owned.len() {
            let y = &mut rows[r * h..(r + 1) * h];
            y[r] = Complex64::new(1.0, 0.0);
            lu_solve(&at, &piv, h, y);
        }
        LeafBlock { owned, halo, rows, diag }
    }

    pub fn fallbacks(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_fallback()).count()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n];
        for b in &self.blocks {
            let h = b.halo.len();
            if b.is_fallback() {
                for (r, &i) in b.owned.iter().enumerate() {
                    out[i] = b.diag[r] * v[i];
                }
                continue;
            }
            for (r, &i) in b.owned.iter().enumerate() {
                let row = &b.rows[r * h..(r + 1) * h];
                out[i] = row.iter().zip(&b.halo).fold(ZERO, |acc, (x, &j)| acc + x * v[j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GmresConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Restart length; `None` runs without restarts.
    pub restart: Option<usize>,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig { tol: 1e-8, max_iter: 1000, restart: None }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub rule_build: f64,
    pub assembly: f64,
    pub matvec: f64,
    pub precond: f64,
    pub solve: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub matvecs: usize,
    /// Relative (preconditioned, when preconditioned) residual after each iteration.
    pub history: Vec<f64>,
    /// `‖b - KΦ‖ / ‖b‖` of the returned solution.
    pub final_residual: f64,
    pub converged: bool,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<Complex64>,
    pub report: SolveReport,
}

/// GMRES for `K x = b`, left-preconditioned by `m` when given, from `x = 0`.
pub fn gmres(
    k: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    m: Option<&dyn Fn(&[Complex64]) -> Vec<Complex64>>,
    b: &[Complex64],
    cfg: &GmresConfig,
    clock: &dyn Clock,
) -> GmresResult {
    let n = b.len();
    let mut rep = SolveReport::default();
    let t_start = clock.now();
    let timed_k = |x: &[Complex64], rep: &mut SolveReport| {
        let t = clock.now();
        let y = k(x);
        rep.timings.matvec += clock.now() - t;
        rep.matvecs += 1;
        y
    };
    let timed_m = |x: Vec<Complex64>, rep: &mut SolveReport| match m {
        Some(m) => {
            let t = clock.now();
            let y = m(&x);
            rep.timings.precond += clock.now() - t;
            y
        }
        None => x,
    };
    let mut x = vec![ZERO; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        rep.converged = true;
        return GmresResult { x, report: rep };
    }
    let mb = timed_m(b.to_vec(), &mut rep);
    let mb_norm = norm(&mb);
    let restart = cfg.restart.unwrap_or(cfg.max_iter).max(1);
    let mut r = mb.clone();
    'outer: while rep.iterations < cfg.max_iter {
        let beta = norm(&r);
        if beta / mb_norm <= cfg.tol {
            rep.converged = true;
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hcols: Vec<Vec<Complex64>> = Vec::new();
        let (mut cs, mut sn): (Vec<Complex64>, Vec<Complex64>) = (Vec::new(), Vec::new());
        let mut g = vec![Complex64::new(beta, 0.0)];
        let mut j = 0;
        while j < restart && rep.iterations < cfg.max_iter {
            let kv = timed_k(&basis[j], &mut rep);
            let mut w = timed_m(kv, &mut rep);
            let mut h = vec![ZERO; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = v.iter().zip(&w).fold(ZERO, |acc, (a, b)| acc + a.conj() * b);
                h[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            h[j + 1] = Complex64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i].conj() * h[i] + cs[i].conj() * h[i + 1];
                h[i] = t;
            }
            let (a, bb) = (h[j], h[j + 1]);
            let d = libm::sqrt(a.norm_sqr() + bb.norm_sqr());
            let (c, s) = if d == 0.0 { (Complex64::new(1.0, 0.0), ZERO) } else { (a / d, bb / d) };
            let (c, s) = (c.conj(), s.conj());
            h[j] = c * a + s * bb;
            h[j + 1] = ZERO;
            g.push(-s.conj() * g[j]);
            g[j] = c * g[j];
            cs.push(c);
            sn.push(s);
            hcols.push(h);
            rep.iterations += 1;
            j += 1;
            let res = g[j].norm() / mb_norm;
            rep.history.push(res);
            let done = res <= cfg.tol || wn == 0.0;
            if !done {
                basis.push(w.iter().map(|z| z / wn).collect());
            }
            if done || j == restart || rep.iterations == cfg.max_iter {
                // back substitution for the update in the current basis
                let mut y = vec![ZERO; j];
                for i in (0..j).rev() {
                    let mut s = g[i];
                    for l in i + 1..j {
                        s -= hcols[l][i] * y[l];
                    }
                    y[i] = s / hcols[i][i];
                }
                for (yi, v) in y.iter().zip(&basis) {
                    for (xk, vk) in x.iter_mut().zip(v) {
                        *xk += yi * vk;
                    }
                }
                if done {
                    rep.converged = true;
                    break 'outer;
                }
                let kx = timed_k(&x, &mut rep);
                let res: Vec<Complex64> = b.iter().zip(&kx).map(|(a, c)| a - c).collect();
                r = timed_m(res, &mut rep);
                continue 'outer;
            }
        }
    }
    let kx = timed_k(&x, &mut rep);
    let res: Vec<Complex64> = b.iter().zip(&kx).map(|(a, c)| a - c).collect();
    rep.final_residual = norm(&res) / b_norm;
    rep.timings.solve = clock.now() - t_start;
    GmresResult { x, report: rep }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub stack: LayerStack,
    pub curves: Vec<BoundaryCurve>,
    /// Requested panels per curve.
    pub panels: Vec<usize>,
    pub excitation: Excitation,
    pub rule: RuleConfig,
    pub fmm: FmmConfig,
    pub gmres: GmresConfig,
    pub precondition: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    NothingToSolve,
    Geometry(GeometryError),
    Rule(RuleError),
    Fmm(FmmError),
}

impl core::fmt::Display for SolveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolveError::NothingToSolve => write!(f, "nothing to solve"),
            SolveError::Geometry(e) => write!(f, "geometry: {e}"),
            SolveError::Rule(e) => write!(f, "sommerfeld rule: {e}"),
            SolveError::Fmm(e) => write!(f, "fmm: {e}"),
        }
    }
}

pub struct Solution {
    pub rule: SommerfeldRule,
    pub mesh: PanelMesh,
    /// `Φ = η φ` per panel.
    pub phi: Vec<Complex64>,
    pub report: SolveReport,
    pub fallback_blocks: usize,
    pub stats: FmmStats,
}

impl Solution {
    /// Scattered field `u^s` at arbitrary points by fast summation.
    pub fn field(&self, targets: &[[f64; 2]], cfg: &FmmConfig) -> Result<Vec<Complex64>, FmmError> {
        scattered_field_fmm(&self.mesh, &self.rule, &self.phi, targets, cfg)
    }
}

pub fn scattered_field_fmm(
    mesh: &PanelMesh,
    rule: &SommerfeldRule,
    phi: &[Complex64],
    targets: &[[f64; 2]],
    cfg: &FmmConfig,
) -> Result<Vec<Complex64>, FmmError> {
    let stack = rule.stack();
    let pts: Vec<[f64; 2]> = mesh.panels.iter().map(|p| p.center).collect();
    let q: Vec<Complex64> = mesh.panels.iter().zip(phi).map(|(p, f)| f * (p.length / stack.eta(p.layer))).collect();
    let fmm = LayeredFmm::new(rule, &pts, targets, FmmConfig { reaction_matrices: false, ..cfg.clone() })?;
    Ok(fmm.apply(&q))
}

/// Mesh, rule, FMM plan, preconditioner and GMRES for one scene.
pub fn solve_scene(scene: &Scene, clock: &dyn Clock) -> Result<Solution, SolveError> {
    let mut runs = solve_scene_runs(scene, clock, &[scene.precondition])?;
    Ok(runs.remove(0))
}

/// One GMRES run per entry of `precondition` over a shared operator.
pub fn solve_scene_runs(scene: &Scene, clock: &dyn Clock, precondition: &[bool]) -> Result<Vec<Solution>, SolveError> {
    if scene.curves.is_empty() {
        return Err(SolveError::NothingToSolve);
    }
    let t0 = clock.now();
    let rule = SommerfeldRule::build(&scene.stack, scene.rule.clone()).map_err(SolveError::Rule)?;
    let rule_time = clock.now() - t0;
    let mesh = PanelMesh::new(scene.curves.clone(), &scene.panels, &scene.stack).map_err(SolveError::Geometry)?;
    let t1 = clock.now();
    let op = NystromOperator::new(&mesh, &rule, scene.fmm.clone()).map_err(SolveError::Fmm)?;
    let pre = precondition.contains(&true).then(|| LeafPreconditioner::build(&mesh, &scene.stack, &op.fmm));
    let assembly = clock.now() - t1;
    let b = rhs(&mesh, &rule, &scene.excitation);
    let kf = |x: &[Complex64]| op.apply(x);
    let mut out = Vec::with_capacity(precondition.len());
    for &with in precondition {
        let res = match pre.as_ref().filter(|_| with) {
            Some(p) => gmres(&kf, Some(&|x: &[Complex64]| p.apply(x)), &b, &scene.gmres, clock),
            None => gmres(&kf, None, &b, &scene.gmres, clock),
        };
        let mut report = res.report;
        report.timings.rule_build = rule_time;
        report.timings.assembly = assembly;
        let fallback_blocks = if with { pre.as_ref().map_or(0, |p| p.fallbacks()) } else { 0 };
        out.push(Solution { rule: rule.clone(), mesh: mesh.clone(), phi: res.x, report, fallback_blocks, stats: op.fmm.stats.clone() });
    }
    Ok(out)
}

/// Unknowns and seconds of one matvec plus one preconditioner apply: the
/// fastest of `reps` timed applies after one untimed warm-up.
pub fn iteration_time(scene: &Scene, clock: &dyn Clock, reps: usize) -> Result<(usize, f64), SolveError> {
    if scene.curves.is_empty() {
        return Err(SolveError::NothingToSolve);
    }
    let rule = SommerfeldRule::build(&scene.stack, scene.rule.clone()).map_err(SolveError::Rule)?;
    let mesh = PanelMesh::new(scene.curves.clone(), &scene.panels, &scene.stack).map_err(SolveError::Geometry)?;
    let op = NystromOperator::new(&mesh, &rule, scene.fmm.clone()).map_err(SolveError::Fmm)?;
    let pre = LeafPreconditioner::build(&mesh, &scene.stack, &op.fmm);
    let mut x = rhs(&mesh, &rule, &scene.excitation);
    let mut best = f64::INFINITY;
    for r in 0..=reps.max(1) {
        let t = clock.now();
        let y = op.apply(&x);
        x = pre.apply(&y);
        if r > 0 {
            best = best.min(clock.now() - t);
        }
        let s = norm(&x);
        if s > 0.0 {
            x.iter_mut().for_each(|z| *z /= s);
        }
    }
    Ok((mesh.len(), best))
}

/// Least-squares slope of `log t` against `log n`; `None` with fewer than two distinct sizes.
pub fn loglog_slope(n: &[f64], t: &[f64]) -> Option<f64> {
    let m = n.len().min(t.len());
    if m < 2 {
        return None;
    }
    let lx: Vec<f64> = n[..m].iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = t[..m].iter().map(|v| libm::log(*v)).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / m as f64, ly.iter().sum::<f64>() / m as f64);
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Probe points `offset` outside the midpoints of an `m`-panel
/// discretization of each curve, weighted by panel length. Probes that land
/// inside a scatterer are dropped.
pub fn boundary_probes(curves: &[BoundaryCurve], m: usize, offset: f64, stack: &LayerStack) -> Result<(Vec<[f64; 2]>, Vec<f64>), GeometryError> {
    let (mut pts, mut w) = (Vec::new(), Vec::new());
    for (s, c) in curves.iter().enumerate() {
        for p in panelize(c, m, stack, s)? {
            let nrm = p.normal();
            let r = [p.center[0] + offset * nrm[0], p.center[1] + offset * nrm[1]];
            if !curves.iter().any(|c| c.contains(r)) {
                pts.push(r);
                w.push(p.length);
            }
        }
    }
    Ok((pts, w))
}

/// Relative max error and relative weighted L2 error.
pub fn probe_errors(u: &[Complex64], exact: &[Complex64], w: &[f64]) -> (f64, f64) {
    let mut inf = (0.0f64, 0.0f64);
    let mut l2 = (0.0, 0.0);
    for ((a, b), wi) in u.iter().zip(exact).zip(w) {
        let e = (a - b).norm();
        inf = (inf.0.max(e), inf.1.max(b.norm()));
        l2 = (l2.0 + wi * e * e, l2.1 + wi * b.norm_sqr());
    }
    (inf.0 / inf.1, libm::sqrt(l2.0 / l2.1))
}
