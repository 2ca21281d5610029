//! Reaction-field Sommerfeld integrals.
//!
//! Each component `(l, l', *, ⋆)` is written as
//!
//! ```text
//! G(r, r') = (i/4pi) ∫ s~(λ)/k_{l',y} exp(iλ(x-x') + i k_{l,y} a_t + i k_{l',y} a_s) dλ
//! ```
//!
//! where `a_t >= 0` is the distance from the target to the interface its
//! arriving wave last touched, `a_s >= 0` the distance from the source to the
//! interface its departing wave first touches, and `s~` is the density with
//! the phase between those two interfaces folded in. This is the usual
//! polarized form with the reference interfaces factored out so that no
//! intermediate exponential overflows.
//!
//! The contour uses the evenness of the integrand in `λ` (apart from the
//! `exp(iλx)` factor). Nodes are laid on the right half: a trapezoidal dip
//! below the real axis over `[0, Λ0]` shared by all evaluations, then a ray
//! rotated by `atan2(x, g)` so the integrand decays like `exp(-t d)` with `d`
//! the effective distance. Rays are shared by angle/distance class.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::layered_media::{density, Coefficients, ComponentId, Dir, LayerStack};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const PI: f64 = core::f64::consts::PI;

/// `τ_m(a) = -2 d_m - a`.
pub fn reflect(stack: &LayerStack, m: usize, a: f64) -> f64 {
    -2.0 * stack.depths()[m] - a
}

/// `+1` when the effective target sits above the polarized source.
pub fn orientation(id: ComponentId) -> f64 {
    let above = match id.departure {
        Dir::Down => id.target <= id.source,
        Dir::Up => id.target < id.source,
    };
    if above {
        1.0
    } else {
        -1.0
    }
}

/// Equivalent polarization coordinate of a source point.
pub fn polarize_source(stack: &LayerStack, id: ComponentId, p: [f64; 2]) -> [f64; 2] {
    let up = orientation(id) > 0.0;
    let y = match (id.departure, up) {
        (Dir::Down, true) => reflect(stack, id.source, p[1]),
        (Dir::Up, false) => reflect(stack, id.source - 1, p[1]),
        _ => p[1],
    };
    [p[0], y]
}

/// Effective location of a target point.
pub fn effective_target(stack: &LayerStack, id: ComponentId, p: [f64; 2]) -> [f64; 2] {
    let up = orientation(id) > 0.0;
    let y = match (id.arrival, up) {
        (Dir::Down, true) => reflect(stack, id.target - 1, p[1]),
        (Dir::Up, false) => reflect(stack, id.target, p[1]),
        _ => p[1],
    };
    [p[0], y]
}

pub fn effective_distance(stack: &LayerStack, id: ComponentId, r: [f64; 2], rs: [f64; 2]) -> f64 {
    let t = effective_target(stack, id, r);
    let s = polarize_source(stack, id, rs);
    libm::hypot(t[0] - s[0], t[1] - s[1])
}

/// `y` of the interface the arriving wave comes from.
pub fn target_reference(stack: &LayerStack, id: ComponentId) -> f64 {
    match id.arrival {
        Dir::Up => stack.interface_y(id.target),
        Dir::Down => stack.interface_y(id.target - 1),
    }
}

/// `y` of the interface the departing wave heads for.
pub fn source_reference(stack: &LayerStack, id: ComponentId) -> f64 {
    match id.departure {
        Dir::Down => stack.interface_y(id.source),
        Dir::Up => stack.interface_y(id.source - 1),
    }
}

/// `a_t` for a target at height `y`, from the effective coordinate.
pub fn target_offset(stack: &LayerStack, id: ComponentId, y_eff: f64) -> f64 {
    orientation(id) * (y_eff - target_reference(stack, id))
}

/// `a_s` for a source at polarized height `y_pol`.
pub fn source_offset(stack: &LayerStack, id: ComponentId, y_pol: f64) -> f64 {
    -orientation(id) * (y_pol - source_reference(stack, id))
}

/// Vertical gap `s (ŷ - y̆)` for offsets `a_t`, `a_s`.
pub fn gap(stack: &LayerStack, id: ComponentId, a_t: f64, a_s: f64) -> f64 {
    a_t + a_s + orientation(id) * (target_reference(stack, id) - source_reference(stack, id))
}

/// Density with the inter-reference phase folded in.
pub fn reduced_density(stack: &LayerStack, c: &Coefficients, id: ComponentId) -> Complex64 {
    let sig = density(c, id);
    if sig == Complex64::new(0.0, 0.0) {
        return sig;
    }
    let s = orientation(id);
    let e = (c.ky[id.target] * target_reference(stack, id)
        - c.ky[id.source] * source_reference(stack, id))
        * s;
    sig * (I * e).exp()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if libm::fabs(dz) < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Quadrature nodes with cached vertical wavenumbers and reduced densities.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub lambda: Vec<Complex64>,
    pub weight: Vec<Complex64>,
    /// node-major, one entry per layer
    pub ky: Vec<Complex64>,
    /// component-major, one entry per node
    pub dens: Vec<Complex64>,
    layers: usize,
}

impl NodeSet {
    fn from_segments(segments: &[(Complex64, Complex64)], gl: &(Vec<f64>, Vec<f64>)) -> Self {
        let mut lambda = Vec::new();
        let mut weight = Vec::new();
        for &(a, b) in segments {
            let half = (b - a) * 0.5;
            let mid = (b + a) * 0.5;
            for (x, w) in gl.0.iter().zip(gl.1.iter()) {
                lambda.push(mid + half * *x);
                weight.push(half * *w);
            }
        }
        NodeSet { lambda, weight, ..Default::default() }
    }

    fn fill(&mut self, stack: &LayerStack, comps: &[ComponentId]) {
        let n = self.lambda.len();
        self.layers = stack.num_layers();
        self.ky = Vec::with_capacity(n * self.layers);
        self.dens = alloc::vec![Complex64::new(0.0, 0.0); n * comps.len()];
        for (q, &lam) in self.lambda.iter().enumerate() {
            match Coefficients::new(stack, lam) {
                Ok(c) => {
                    self.ky.extend_from_slice(&c.ky);
                    for (ci, id) in comps.iter().enumerate() {
                        self.dens[ci * n + q] = reduced_density(stack, &c, *id);
                    }
                }
                Err(_) => {
                    // exact resonance on a node: drop it
                    self.weight[q] = Complex64::new(0.0, 0.0);
                    for k in stack.ks() {
                        self.ky.push(crate::layered_media::vertical_wavenumber(lam, *k));
                    }
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    #[inline]
    pub fn ky(&self, q: usize, layer: usize) -> Complex64 {
        self.ky[q * self.layers + layer]
    }

    #[inline]
    pub fn dens(&self, comp: usize, q: usize) -> Complex64 {
        self.dens[comp * self.lambda.len() + q]
    }
}

#[derive(Debug, Clone)]
pub struct RuleConfig {
    /// Target accuracy of a single kernel integral.
    pub tol: f64,
    /// `Λ0 - max k`.
    pub margin: f64,
    /// Depth of the dip below the real axis; `None` picks one from `k_min` and `x_extent`.
    pub depth: Option<f64>,
    /// Largest horizontal separation the rule must serve.
    pub x_extent: f64,
    /// Smallest effective distance served by the shared rays.
    pub d_min: f64,
    /// Largest effective distance served by the shared rays.
    pub d_max: f64,
    /// Extra decay (in e-folds) budgeted on the rays for expansion growth.
    pub extra_decay: f64,
    /// Refinement rounds of the middle segment.
    pub max_refine: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            tol: 1e-10,
            margin: 2.0,
            depth: None,
            x_extent: 8.0,
            d_min: 1e-3,
            d_max: 64.0,
            extra_decay: 30.0,
            max_refine: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleError {
    BadConfig(&'static str),
    /// Probe integral did not settle within the refinement budget.
    NotConverged { residual: f64 },
}

impl core::fmt::Display for RuleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RuleError::BadConfig(s) => write!(f, "invalid sommerfeld rule config: {s}"),
            RuleError::NotConverged { residual } => {
                write!(f, "sommerfeld rule did not converge (probe residual {residual:e})")
            }
        }
    }
}

pub const ANGLE_CLASSES: i32 = 6;
const ANGLE_STEP: f64 = PI / 12.0;

/// Contour rule shared by every reaction-kernel evaluation of one stack.
#[derive(Debug, Clone)]
pub struct SommerfeldRule {
    stack: LayerStack,
    comps: Vec<ComponentId>,
    lookup: Vec<Option<usize>>,
    pub config: RuleConfig,
    pub lambda0: f64,
    pub depth: f64,
    pub middle: NodeSet,
    /// `rays[(a + ANGLE_CLASSES) * scales + j]`
    rays: Vec<NodeSet>,
    scales: usize,
    trivial: bool,
    gl: (Vec<f64>, Vec<f64>),
}

/// One evaluation's view of the contour.
#[derive(Clone, Copy)]
pub struct PairNodes<'a> {
    pub middle: &'a NodeSet,
    pub right: &'a NodeSet,
    pub left: &'a NodeSet,
}

impl SommerfeldRule {
    pub fn build(stack: &LayerStack, config: RuleConfig) -> Result<Self, RuleError> {
        if !(config.tol > 0.0 && config.tol < 1.0) {
            return Err(RuleError::BadConfig("tol must lie in (0,1)"));
        }
        if !(config.d_min > 0.0 && config.d_max > config.d_min) {
            return Err(RuleError::BadConfig("need 0 < d_min < d_max"));
        }
        let comps = ComponentId::all_nonzero(stack.num_layers());
        let nl = stack.num_layers();
        let mut lookup = alloc::vec![None; nl * nl * 4];
        for (i, id) in comps.iter().enumerate() {
            lookup[Self::slot(nl, *id)] = Some(i);
        }
        let kmax = stack.k_max();
        let kmin = stack.k_min();
        let depth = config
            .depth
            .unwrap_or_else(|| (0.25 * kmin).min(0.5).min(3.0 / config.x_extent.max(1e-3)));
        let lambda0 = kmax + config.margin;
        let gl = gauss_legendre(16);
        let mut rule = SommerfeldRule {
            stack: stack.clone(),
            comps,
            lookup,
            config,
            lambda0,
            depth,
            middle: NodeSet::default(),
            rays: Vec::new(),
            scales: 0,
            trivial: stack.is_homogeneous(),
            gl,
        };
        rule.build_rays();
        let mut width = (2.0 * depth).min(8.0 / rule.config.x_extent.max(1e-3));
        rule.middle = rule.middle_nodes(width);
        if !rule.trivial && !rule.comps.is_empty() {
            let mut prev = rule.probe();
            let mut ok = false;
            let mut residual = f64::INFINITY;
            for _ in 0..rule.config.max_refine {
                width *= 0.5;
                let cand = rule.middle_nodes(width);
                let old = core::mem::replace(&mut rule.middle, cand);
                let now = rule.probe();
                residual = (now - prev).norm() / prev.norm().max(1e-300);
                if residual < rule.config.tol * 10.0 {
                    // the coarser set already met tolerance
                    rule.middle = old;
                    ok = true;
                    break;
                }
                prev = now;
            }
            if !ok {
                return Err(RuleError::NotConverged { residual });
            }
        }
        Ok(rule)
    }

    fn slot(nl: usize, id: ComponentId) -> usize {
        let a = (id.arrival == Dir::Down) as usize;
        let d = (id.departure == Dir::Down) as usize;
        ((id.target * nl + id.source) * 2 + a) * 2 + d
    }

    fn middle_nodes(&self, width: f64) -> NodeSet {
        let h = self.depth;
        let l0 = self.lambda0;
        let mut segs = Vec::new();
        let a = Complex64::new(h, -h);
        let b = Complex64::new(l0 - h, -h);
        segs.push((Complex64::new(0.0, 0.0), a));
        let n = libm::ceil((l0 - 2.0 * h) / width).max(1.0) as usize;
        for i in 0..n {
            let t0 = i as f64 / n as f64;
            let t1 = (i + 1) as f64 / n as f64;
            segs.push((a + (b - a) * t0, a + (b - a) * t1));
        }
        segs.push((b, Complex64::new(l0, 0.0)));
        let mut ns = NodeSet::from_segments(&segs, &self.gl);
        ns.fill(&self.stack, &self.comps);
        ns
    }

    fn ray_nodes(&self, phi: f64, d_lo: f64) -> NodeSet {
        let segs = ray_segments(self.lambda0, phi, d_lo, self.config.margin, self.decay_budget());
        let mut ns = NodeSet::from_segments(&segs, &self.gl);
        ns.fill(&self.stack, &self.comps);
        ns
    }

    fn decay_budget(&self) -> f64 {
        libm::log(1.0 / self.config.tol) + self.config.extra_decay
    }

    fn build_rays(&mut self) {
        let scales = libm::ceil(libm::log2(self.config.d_max / self.config.d_min)).max(1.0) as usize;
        self.scales = scales;
        self.rays.clear();
        if self.trivial {
            return;
        }
        for a in -ANGLE_CLASSES..=ANGLE_CLASSES {
            let phi = a as f64 * ANGLE_STEP;
            for j in 0..scales {
                let d_lo = self.config.d_min * libm::exp2(j as f64);
                self.rays.push(self.ray_nodes(phi, d_lo));
            }
        }
    }

    fn probe(&self) -> Complex64 {
        // the cross-layer component with the shortest reach is the most oscillatory
        let id = self.comps[0];
        let x = self.config.x_extent;
        let g = self.config.d_min.max(0.25);
        self.component_integral(id, x, g * 0.5, g * 0.5, 0, 0)
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    /// True for a matched stack: every reaction component vanishes.
    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    pub fn components(&self) -> &[ComponentId] {
        &self.comps
    }

    pub fn component_index(&self, id: ComponentId) -> Option<usize> {
        self.lookup[Self::slot(self.stack.num_layers(), id)]
    }

    pub fn node_count(&self) -> usize {
        self.middle.len() + self.rays.iter().map(|r| r.len()).sum::<usize>()
    }

    /// Real-axis truncation that a plain `[0, λ_max]` rule would need for gap `h_min`.
    pub fn lambda_max_for_gap(&self, h_min: f64) -> f64 {
        lambda_max_for_gap(self.stack.k_max(), h_min, self.config.tol)
    }

    /// Ray class `(angle, scale)` for horizontal offset `dx` and vertical gap
    /// `g`, or `None` when the pair falls outside the tabulated distance range.
    pub fn ray_class(&self, dx: f64, g: f64) -> Option<(i32, usize)> {
        if self.trivial {
            return None;
        }
        let d = libm::hypot(dx, g);
        if d < self.config.d_min || d >= self.config.d_max * 0.999 {
            return None;
        }
        let phi = libm::atan2(dx, g.max(0.0));
        let a = libm::round(phi / ANGLE_STEP) as i32;
        let a = a.clamp(-ANGLE_CLASSES, ANGLE_CLASSES);
        let j = (libm::floor(libm::log2(d / self.config.d_min)) as usize).min(self.scales - 1);
        Some((a, j))
    }

    pub fn class_nodes(&self, class: (i32, usize)) -> PairNodes<'_> {
        let (a, j) = class;
        let idx = |a: i32| (a + ANGLE_CLASSES) as usize * self.scales + j;
        PairNodes { middle: &self.middle, right: &self.rays[idx(a)], left: &self.rays[idx(-a)] }
    }

    /// Shared nodes for horizontal offset `dx` and vertical gap `g`.
    pub fn pair_nodes(&self, dx: f64, g: f64) -> Option<PairNodes<'_>> {
        self.ray_class(dx, g).map(|c| self.class_nodes(c))
    }

    /// Whether the rays can be skipped: the real-axis integrand at `Λ0` is
    /// already below tolerance for gap `g`.
    pub fn rays_negligible(&self, g: f64) -> bool {
        let kmax = self.stack.k_max();
        let decay = libm::sqrt(self.lambda0 * self.lambda0 - kmax * kmax) * g;
        decay > self.decay_budget()
    }

    /// `∫ s~/k'_y E ω(λ,k)^n ω(λ,k')^m dλ` for one component, with
    /// `dx = x - x'` and offsets `a_t`, `a_s`.
    pub fn component_integral(
        &self,
        id: ComponentId,
        dx: f64,
        a_t: f64,
        a_s: f64,
        n: i32,
        m: i32,
    ) -> Complex64 {
        let Some(ci) = self.component_index(id) else {
            return Complex64::new(0.0, 0.0);
        };
        if self.trivial {
            return Complex64::new(0.0, 0.0);
        }
        let kt = self.stack.k(id.target);
        let ks = self.stack.k(id.source);
        let term = |lam: Complex64, w: Complex64, kyt: Complex64, kys: Complex64, sig: Complex64| {
            let mut e = (I * (lam * dx + kyt * a_t + kys * a_s)).exp() * sig / kys * w;
            if n != 0 {
                e *= omega(lam, kyt, kt).powi(n);
            }
            if m != 0 {
                e *= omega(lam, kys, ks).powi(m);
            }
            e
        };
        let mut acc = Complex64::new(0.0, 0.0);
        let mid = &self.middle;
        for q in 0..mid.len() {
            let sig = mid.dens(ci, q);
            let (kyt, kys) = (mid.ky(q, id.target), mid.ky(q, id.source));
            acc += term(mid.lambda[q], mid.weight[q], kyt, kys, sig);
            acc += term(-mid.lambda[q], mid.weight[q], kyt, kys, sig);
        }
        acc + self.ray_integral(id, dx, a_t, a_s, n, m)
    }

    /// Part of [`Self::component_integral`] carried by the two rays; zero
    /// when the rays are negligible for the pair's gap.
    pub fn ray_integral(&self, id: ComponentId, dx: f64, a_t: f64, a_s: f64, n: i32, m: i32) -> Complex64 {
        let zero = Complex64::new(0.0, 0.0);
        let Some(ci) = self.component_index(id) else {
            return zero;
        };
        let g = gap(&self.stack, id, a_t, a_s);
        if self.trivial || self.rays_negligible(g) {
            return zero;
        }
        let kt = self.stack.k(id.target);
        let ks = self.stack.k(id.source);
        let term = |lam: Complex64, w: Complex64, kyt: Complex64, kys: Complex64, sig: Complex64| {
            let mut e = (I * (lam * dx + kyt * a_t + kys * a_s)).exp() * sig / kys * w;
            if n != 0 {
                e *= omega(lam, kyt, kt).powi(n);
            }
            if m != 0 {
                e *= omega(lam, kys, ks).powi(m);
            }
            e
        };
        let mut acc = zero;
        match self.pair_nodes(dx, g) {
            Some(p) => {
                for q in 0..p.right.len() {
                    let (kyt, kys) = (p.right.ky(q, id.target), p.right.ky(q, id.source));
                    acc += term(p.right.lambda[q], p.right.weight[q], kyt, kys, p.right.dens(ci, q));
                }
                for q in 0..p.left.len() {
                    let (kyt, kys) = (p.left.ky(q, id.target), p.left.ky(q, id.source));
                    acc += term(-p.left.lambda[q], p.left.weight[q], kyt, kys, p.left.dens(ci, q));
                }
            }
            None => {
                let d = libm::hypot(dx, g).max(1e-12);
                let phi = libm::atan2(dx, g.max(0.0));
                for (sign, ang) in [(1.0, phi), (-1.0, -phi)] {
                    let segs = ray_segments(self.lambda0, ang, d, self.config.margin, self.decay_budget());
                    let ns = NodeSet::from_segments(&segs, &self.gl);
                    for q in 0..ns.len() {
                        let lam = ns.lambda[q];
                        let Ok(c) = Coefficients::new(&self.stack, lam) else { continue };
                        let sig = reduced_density(&self.stack, &c, id);
                        acc += term(lam * sign, ns.weight[q], c.ky[id.target], c.ky[id.source], sig);
                    }
                }
            }
        }
        acc
    }

    /// One reaction component `G^{*⋆}_{l l'}(r, r')`.
    pub fn reaction_component(&self, id: ComponentId, r: [f64; 2], rs: [f64; 2]) -> Complex64 {
        if self.trivial || self.component_index(id).is_none() {
            return Complex64::new(0.0, 0.0);
        }
        let t = effective_target(&self.stack, id, r);
        let s = polarize_source(&self.stack, id, rs);
        let a_t = target_offset(&self.stack, id, t[1]);
        let a_s = source_offset(&self.stack, id, s[1]);
        self.component_integral(id, r[0] - rs[0], a_t, a_s, 0, 0) * (I / (4.0 * PI))
    }

    /// Reaction part `G^r_{l l'}(r, r')` with `l = layer_of(r)`, `l' = layer_of(r')`.
    pub fn reaction_green(&self, r: [f64; 2], rs: [f64; 2]) -> Complex64 {
        if self.trivial {
            return Complex64::new(0.0, 0.0);
        }
        let l = self.stack.layer_of(r[1]);
        let ls = self.stack.layer_of(rs[1]);
        let mut acc = Complex64::new(0.0, 0.0);
        for arrival in [Dir::Up, Dir::Down] {
            for departure in [Dir::Up, Dir::Down] {
                let id = ComponentId::new(l, ls, arrival, departure);
                if !id.is_structural_zero(self.stack.num_layers()) {
                    acc += self.reaction_component(id, r, rs);
                }
            }
        }
        acc
    }

    /// Whether the free-space term couples layers `l` and `ls`; a matched
    /// stack is one medium.
    pub fn free_couples(&self, l: usize, ls: usize) -> bool {
        l == ls || self.trivial
    }

    /// Full layered Green's function `G_{l l'}(r, r')`.
    pub fn layered_green(&self, r: [f64; 2], rs: [f64; 2]) -> Complex64 {
        let l = self.stack.layer_of(r[1]);
        let ls = self.stack.layer_of(rs[1]);
        let mut g = self.reaction_green(r, rs);
        if self.free_couples(l, ls) {
            let d = libm::hypot(r[0] - rs[0], r[1] - rs[1]);
            g += crate::special_functions::hankel0(self.stack.k(l) * d) * (I * 0.25);
        }
        g
    }

    /// Translation integral `I_{nm}` between a target expansion with wavenumber
    /// `k` and a source expansion with `k'` for component `id`.
    pub fn translation_integral(
        &self,
        id: ComponentId,
        n: i32,
        m: i32,
        dx: f64,
        a_t: f64,
        a_s: f64,
    ) -> Complex64 {
        self.component_integral(id, dx, a_t, a_s, n, m)
    }
}

/// `ω(λ, k) = (k_y + iλ)/k`.
#[inline]
pub fn omega(lambda: Complex64, ky: Complex64, k: f64) -> Complex64 {
    (ky + I * lambda) / k
}

pub fn lambda_max_for_gap(kmax: f64, h_min: f64, tol: f64) -> f64 {
    kmax + libm::log(1.0 / tol) / h_min
}

/// Ray `Λ0 + t e^{iφ}`, `t ∈ [0, budget/d]`, geometrically graded.
fn ray_segments(lambda0: f64, phi: f64, d: f64, w0: f64, budget: f64) -> Vec<(Complex64, Complex64)> {
    let dir = Complex64::new(libm::cos(phi), libm::sin(phi));
    let t_max = budget / d;
    let cap = 4.0 / d;
    let mut w = w0.min(cap);
    let mut t = 0.0;
    let mut segs = Vec::new();
    while t < t_max {
        let t1 = (t + w).min(t_max);
        segs.push((Complex64::new(lambda0, 0.0) + dir * t, Complex64::new(lambda0, 0.0) + dir * t1));
        t = t1;
        w = (w * 2.0).min(cap);
    }
    segs
}
