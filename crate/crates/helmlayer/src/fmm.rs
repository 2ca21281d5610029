//! Fast summation of layered-medium Green's function potentials.
//!
//! Sources and targets are grouped by layer, one adaptive quadtree per group.
//! Every box carries one multipole `α_n = Σ Q J_n(kρ) e^{-inθ}` and one local
//! expansion `Σ β_n J_n(kρ) e^{inθ}` about the centre of its points' bounding
//! box. Free-space interactions translate with Graf's theorem. A reaction
//! component couples a target box and a source box through the Sommerfeld
//! nodes: the source multipole becomes the plane-wave amplitude
//! `Σ α_n V^n`, the pair factor carries the density and the vertical phase,
//! and `W^m` turns it back into local coefficients.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use num_complex::Complex64;

use crate::discretization::free_self_term;
use crate::geometry::PanelMesh;
use crate::layered_media::{ComponentId, Dir, LayerStack};
use crate::sommerfeld::{gap, source_reference, target_reference, NodeSet, SommerfeldRule};
use crate::special_functions::{bessel_j_seq, hankel0, hankel1_seq};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const PI: f64 = core::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct FmmConfig {
    /// Expansion order; coefficients run over `-p..=p`.
    pub p: usize,
    /// Maximum points per leaf.
    pub leaf_size: usize,
    /// Separation parameter: expansions need `D >= (1 + θ)(ρ_T + ρ_S)`.
    pub theta: f64,
    /// Boxes used in an expansion need `κ ρ <= size_factor p`, with `κ` the
    /// wavenumber (free space) or the largest spectral variable on the
    /// middle contour (reaction).
    pub size_factor: f64,
    pub max_depth: usize,
    /// Precompute a translation matrix per reaction box pair. Pays off over
    /// repeated applies; otherwise translations run through the contour nodes.
    pub reaction_matrices: bool,
}

impl Default for FmmConfig {
    fn default() -> Self {
        FmmConfig { p: 25, leaf_size: 60, theta: 1.0, size_factor: 0.2, max_depth: 30, reaction_matrices: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FmmError {
    DepthCap { depth: usize },
    BadOrder(usize),
}

impl core::fmt::Display for FmmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FmmError::DepthCap { depth } => write!(f, "quadtree deeper than {depth} levels (duplicate points?)"),
            FmmError::BadOrder(p) => write!(f, "expansion order {p} out of range"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeBox {
    /// Expansion centre.
    pub center: [f64; 2],
    /// Largest distance from `center` to a point of the box.
    pub radius: f64,
    /// Geometric square.
    pub square: [f64; 2],
    pub half: f64,
    /// Slice of `QuadTree::order`.
    pub range: Range<usize>,
    pub children: Vec<usize>,
    pub level: usize,
}

impl TreeBox {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Adaptive quadtree; boxes are stored parents before children.
#[derive(Debug, Clone, Default)]
pub struct QuadTree {
    pub boxes: Vec<TreeBox>,
    /// Point indices, grouped so that every box owns a contiguous run.
    pub order: Vec<usize>,
}

impl QuadTree {
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.boxes.len()).filter(|&b| self.boxes[b].is_leaf())
    }

    pub fn points_of(&self, b: usize) -> &[usize] {
        &self.order[self.boxes[b].range.clone()]
    }
}

pub fn build_tree(points: &[[f64; 2]], leaf_size: usize, max_depth: usize) -> Result<QuadTree, FmmError> {
    build_tree_limited(points, leaf_size, f64::INFINITY, max_depth)
}

/// As [`build_tree`], also splitting boxes whose points spread wider than `max_radius`.
pub fn build_tree_limited(points: &[[f64; 2]], leaf_size: usize, max_radius: f64, max_depth: usize) -> Result<QuadTree, FmmError> {
    if points.is_empty() {
        return Ok(QuadTree::default());
    }
    let leaf_size = leaf_size.max(1);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 1e-12) + 1e-300;
    let square = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut boxes = vec![TreeBox {
        center: [0.0; 2],
        radius: 0.0,
        square,
        half,
        range: 0..points.len(),
        children: Vec::new(),
        level: 0,
    }];
    let mut b = 0;
    while b < boxes.len() {
        let range = boxes[b].range.clone();
        let (sq, h, level) = (boxes[b].square, boxes[b].half, boxes[b].level);
        if range.len() > leaf_size || (range.len() > 1 && spread(points, &order[range.clone()]) > max_radius) {
            if level >= max_depth {
                return Err(FmmError::DepthCap { depth: max_depth });
            }
            let quad = |i: usize| {
                let p = points[i];
                (p[0] >= sq[0]) as usize + 2 * (p[1] >= sq[1]) as usize
            };
            let slice = &mut order[range.clone()];
            slice.sort_by_key(|&i| quad(i));
            let mut start = range.start;
            for q in 0..4 {
                let count = order[start..range.end].iter().take_while(|&&i| quad(i) == q).count();
                if count > 0 {
                    let child_sq = [
                        sq[0] + if q & 1 == 1 { 0.5 * h } else { -0.5 * h },
                        sq[1] + if q & 2 == 2 { 0.5 * h } else { -0.5 * h },
                    ];
                    let id = boxes.len();
                    boxes.push(TreeBox {
                        center: [0.0; 2],
                        radius: 0.0,
                        square: child_sq,
                        half: 0.5 * h,
                        range: start..start + count,
                        children: Vec::new(),
                        level: level + 1,
                    });
                    boxes[b].children.push(id);
                }
                start += count;
            }
        }
        b += 1;
    }
    for bx in boxes.iter_mut() {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &i in &order[bx.range.clone()] {
            for d in 0..2 {
                lo[d] = lo[d].min(points[i][d]);
                hi[d] = hi[d].max(points[i][d]);
            }
        }
        bx.center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        bx.radius = order[bx.range.clone()]
            .iter()
            .map(|&i| libm::hypot(points[i][0] - bx.center[0], points[i][1] - bx.center[1]))
            .fold(0.0, f64::max);
    }
    Ok(QuadTree { boxes, order })
}

/// Half the bounding-box diagonal of a point subset.
fn spread(points: &[[f64; 2]], idx: &[usize]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in idx {
        for d in 0..2 {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    0.5 * libm::hypot(hi[0] - lo[0], hi[1] - lo[1])
}

/// `(ρ, e^{iθ})` of a planar vector.
fn polar(v: [f64; 2]) -> (f64, Complex64) {
    let r = libm::hypot(v[0], v[1]);
    if r == 0.0 {
        (0.0, Complex64::new(1.0, 0.0))
    } else {
        (r, Complex64::new(v[0] / r, v[1] / r))
    }
}

/// `e^{inθ}` for `n = -m..=m`, stored at `n + m`.
fn phases(u: Complex64, m: usize, out: &mut [Complex64]) {
    out[m] = Complex64::new(1.0, 0.0);
    let uc = u.conj();
    for n in 1..=m {
        out[m + n] = out[m + n - 1] * u;
        out[m - n] = out[m - n + 1] * uc;
    }
}

fn signed_j(j: &[f64], n: i64) -> f64 {
    let a = n.unsigned_abs() as usize;
    if n < 0 && a % 2 == 1 {
        -j[a]
    } else {
        j[a]
    }
}

fn signed_h(h: &[Complex64], n: i64) -> Complex64 {
    let a = n.unsigned_abs() as usize;
    if n < 0 && a % 2 == 1 {
        -h[a]
    } else {
        h[a]
    }
}

/// Translation kernels for one wavenumber and order.
#[derive(Debug, Clone)]
pub struct Translator {
    pub k: f64,
    pub p: usize,
    jbuf: Vec<f64>,
    ybuf: Vec<f64>,
    hbuf: Vec<Complex64>,
    ph: Vec<Complex64>,
}

impl Translator {
    pub fn new(k: f64, p: usize) -> Self {
        Translator {
            k,
            p,
            jbuf: vec![0.0; 2 * p + 2],
            ybuf: vec![0.0; 2 * p + 2],
            hbuf: vec![ZERO; 2 * p + 2],
            ph: vec![ZERO; 4 * p + 3],
        }
    }

    pub fn len(&self) -> usize {
        2 * self.p + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Adds `q` at offset `d` from the centre into `alpha`.
    pub fn p2m(&mut self, d: [f64; 2], q: Complex64, alpha: &mut [Complex64]) {
        let p = self.p;
        let (r, u) = polar(d);
        bessel_j_seq(self.k * r, &mut self.jbuf[..p + 1]);
        phases(u.conj(), p, &mut self.ph);
        for n in -(p as i64)..=p as i64 {
            alpha[(n + p as i64) as usize] += q * signed_j(&self.jbuf, n) * self.ph[(n + p as i64) as usize];
        }
    }

    /// Child multipole shifted by `v = c_child - c_parent`, added to `parent`.
    pub fn m2m(&mut self, v: [f64; 2], child: &[Complex64], parent: &mut [Complex64]) {
        let p = self.p as i64;
        let (r, u) = polar(v);
        bessel_j_seq(self.k * r, &mut self.jbuf[..2 * self.p + 1]);
        phases(u.conj(), 2 * self.p, &mut self.ph);
        for n in -p..=p {
            let mut acc = ZERO;
            for m in -p..=p {
                let d = n - m;
                acc += child[(m + p) as usize] * signed_j(&self.jbuf, d) * self.ph[(d + 2 * p) as usize];
            }
            parent[(n + p) as usize] += acc;
        }
    }

    /// Multipole at `c_S` to local at `c_T`, `v = c_T - c_S`; includes `i/4`.
    pub fn m2l(&mut self, v: [f64; 2], alpha: &[Complex64], beta: &mut [Complex64]) {
        let p = self.p as i64;
        let (r, u) = polar(v);
        hankel1_seq(self.k * r, &mut self.jbuf, &mut self.ybuf, &mut self.hbuf);
        phases(u, 2 * self.p, &mut self.ph);
        for m in -p..=p {
            let mut acc = ZERO;
            for n in -p..=p {
                let d = n - m;
                acc += alpha[(n + p) as usize] * signed_h(&self.hbuf, d) * self.ph[(d + 2 * p) as usize];
            }
            beta[(m + p) as usize] += acc * (I * 0.25);
        }
    }

    /// Parent local shifted to a child, `v = c_child - c_parent`.
    pub fn l2l(&mut self, v: [f64; 2], parent: &[Complex64], child: &mut [Complex64]) {
        let p = self.p as i64;
        let (r, u) = polar(v);
        bessel_j_seq(self.k * r, &mut self.jbuf[..2 * self.p + 1]);
        phases(u, 2 * self.p, &mut self.ph);
        for n in -p..=p {
            let mut acc = ZERO;
            for m in -p..=p {
                let d = m - n;
                acc += parent[(m + p) as usize] * signed_j(&self.jbuf, d) * self.ph[(d + 2 * p) as usize];
            }
            child[(n + p) as usize] += acc;
        }
    }

    /// Local expansion evaluated at offset `d` from its centre.
    pub fn l2p(&mut self, d: [f64; 2], beta: &[Complex64]) -> Complex64 {
        let p = self.p;
        let (r, u) = polar(d);
        bessel_j_seq(self.k * r, &mut self.jbuf[..p + 1]);
        phases(u, p, &mut self.ph);
        let mut acc = ZERO;
        for n in -(p as i64)..=p as i64 {
            acc += beta[(n + p as i64) as usize] * signed_j(&self.jbuf, n) * self.ph[(n + p as i64) as usize];
        }
        acc
    }

    /// Multipole evaluated at offset `d` from its centre; includes `i/4`.
    pub fn m2p(&mut self, d: [f64; 2], alpha: &[Complex64]) -> Complex64 {
        let p = self.p;
        let (r, u) = polar(d);
        hankel1_seq(self.k * r, &mut self.jbuf[..p + 1], &mut self.ybuf[..p + 1], &mut self.hbuf[..p + 1]);
        phases(u, p, &mut self.ph);
        let mut acc = ZERO;
        for n in -(p as i64)..=p as i64 {
            acc += alpha[(n + p as i64) as usize] * signed_h(&self.hbuf, n) * self.ph[(n + p as i64) as usize];
        }
        acc * (I * 0.25)
    }
}

/// Rows `q` of `f_q z_q^n`, `n = -p..=p`, from `(z_q, f_q)`.
fn power_table(n: usize, p: usize, mut zf: impl FnMut(usize) -> (Complex64, Complex64)) -> Vec<Complex64> {
    let nc = 2 * p + 1;
    let mut out = vec![ZERO; n * nc];
    for q in 0..n {
        let (z, f) = zf(q);
        let row = &mut out[q * nc..(q + 1) * nc];
        row[p] = f;
        let u = z.inv();
        for j in 1..=p {
            row[p + j] = row[p + j - 1] * z;
            row[p - j] = row[p - j + 1] * u;
        }
    }
    out
}

/// Points of one layer (or of the whole plane for a matched stack) and their tree.
#[derive(Debug, Clone)]
struct Group {
    layer: usize,
    k: f64,
    /// Global point index of each tree-local point.
    idx: Vec<usize>,
    tree: QuadTree,
    /// Global id of the group's first box.
    offset: usize,
}

fn make_groups(
    rule: &SommerfeldRule,
    pts: &[[f64; 2]],
    cfg: &FmmConfig,
) -> Result<(Vec<Group>, Vec<(usize, usize)>), FmmError> {
    let stack = rule.stack();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); stack.num_layers()];
    for (i, p) in pts.iter().enumerate() {
        let l = if rule.is_trivial() { 0 } else { stack.layer_of(p[1]) };
        members[l].push(i);
    }
    let mut groups = Vec::new();
    let mut boxes = Vec::new();
    for (layer, idx) in members.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let local: Vec<[f64; 2]> = idx.iter().map(|&i| pts[i]).collect();
        // leaves small enough for the size condition of every channel
        let kappa = if rule.is_trivial() { stack.k(layer) } else { stack.k(layer).max(rule.lambda0) };
        let tree = build_tree_limited(&local, cfg.leaf_size, cfg.size_factor * cfg.p as f64 / kappa, cfg.max_depth)?;
        let g = groups.len();
        let offset = boxes.len();
        boxes.extend((0..tree.boxes.len()).map(|b| (g, b)));
        groups.push(Group { layer, k: stack.k(layer), idx, tree, offset });
    }
    Ok((groups, boxes))
}

type NodeKey = Option<(i32, usize)>;

/// Contour nodes of one key, flattened: `λ`, weight and `k_y` per layer.
#[derive(Debug, Clone, Default)]
struct FlatNodes {
    lambda: Vec<Complex64>,
    weight: Vec<Complex64>,
    ky: Vec<Complex64>,
    layers: usize,
    /// `(set, sign, start)` for every copied node set, to fetch densities.
    parts: Vec<(u8, f64, usize)>,
}

impl FlatNodes {
    fn new(rule: &SommerfeldRule, key: NodeKey) -> Self {
        let layers = rule.stack().num_layers();
        let mut f = FlatNodes { layers, ..Default::default() };
        let mid = &rule.middle;
        f.push(mid, 1.0, 0);
        f.push(mid, -1.0, 0);
        if let Some(c) = key {
            let p = rule.class_nodes(c);
            f.push(p.right, 1.0, 1);
            f.push(p.left, -1.0, 2);
        }
        f
    }

    fn push(&mut self, ns: &NodeSet, sign: f64, set: u8) {
        self.parts.push((set, sign, self.lambda.len()));
        for q in 0..ns.len() {
            self.lambda.push(ns.lambda[q] * sign);
            self.weight.push(ns.weight[q]);
            for l in 0..self.layers {
                self.ky.push(ns.ky(q, l));
            }
        }
    }

    fn len(&self) -> usize {
        self.lambda.len()
    }

    fn ky(&self, q: usize, l: usize) -> Complex64 {
        self.ky[q * self.layers + l]
    }

    fn densities(&self, rule: &SommerfeldRule, key: NodeKey, ci: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for &(set, _, _) in &self.parts {
            let ns = match (set, key) {
                (0, _) => &rule.middle,
                (1, Some(c)) => rule.class_nodes(c).right,
                (_, Some(c)) => rule.class_nodes(c).left,
                _ => unreachable!(),
            };
            out.extend((0..ns.len()).map(|q| ns.dens(ci, q)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct ReacPair {
    t: usize,
    s: usize,
    ci: usize,
    dx: f64,
}

#[derive(Debug, Clone)]
struct KeyPlan {
    nodes: FlatNodes,
    pairs: Vec<ReacPair>,
    dens: BTreeMap<usize, Vec<Complex64>>,
}

#[derive(Debug, Clone)]
struct NearBlock {
    /// Global target and source box ids.
    t: usize,
    s: usize,
    /// Row-major over the boxes' tree-local points.
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    Free,
    Reaction(usize),
}

#[derive(Debug, Clone, Default)]
pub struct FmmStats {
    pub source_boxes: usize,
    pub target_boxes: usize,
    pub free_m2l: usize,
    pub reaction_m2l: usize,
    pub node_keys: usize,
    /// Box pairs with a precomputed reaction translation.
    pub reaction_blocks: usize,
    pub near_blocks: usize,
    pub near_entries: usize,
}

fn sigma(d: Dir) -> f64 {
    match d {
        Dir::Up => 1.0,
        Dir::Down => -1.0,
    }
}

/// Offsets `(a_T, a_S)` and gap of a reaction interaction between two centres.
pub fn reaction_offsets(stack: &LayerStack, id: ComponentId, ct: [f64; 2], cs: [f64; 2]) -> (f64, f64, f64) {
    let a_t = sigma(id.arrival) * (ct[1] - target_reference(stack, id));
    let a_s = -sigma(id.departure) * (cs[1] - source_reference(stack, id));
    (a_t, a_s, gap(stack, id, a_t, a_s))
}

/// Layered-medium potential `pot_t = Σ_s G(r_t, r_s) q_s` by fast summation.
///
/// In self mode sources and targets coincide and the singular free-space
/// self interaction is skipped; the reaction self interaction is kept.
pub struct LayeredFmm<'a> {
    rule: &'a SommerfeldRule,
    pub config: FmmConfig,
    src: Vec<Group>,
    tgt: Vec<Group>,
    src_pts: Vec<[f64; 2]>,
    tgt_pts: Vec<[f64; 2]>,
    sbox: Vec<(usize, usize)>,
    tbox: Vec<(usize, usize)>,
    self_mode: bool,
    m2l_free: Vec<(usize, usize)>,
    m2l_reaction: Vec<(usize, usize, Vec<Complex64>)>,
    node_plans: Vec<KeyPlan>,
    near: Vec<NearBlock>,
    /// Near leaf pairs that carry the free-space kernel.
    free_near: Vec<(usize, usize)>,
    pub stats: FmmStats,
}

impl<'a> LayeredFmm<'a> {
    /// Plan for distinct source and target sets.
    pub fn new(rule: &'a SommerfeldRule, sources: &[[f64; 2]], targets: &[[f64; 2]], config: FmmConfig) -> Result<Self, FmmError> {
        Self::build(rule, sources, Some(targets), config)
    }

    /// Plan with targets equal to sources.
    pub fn new_self(rule: &'a SommerfeldRule, points: &[[f64; 2]], config: FmmConfig) -> Result<Self, FmmError> {
        Self::build(rule, points, None, config)
    }

    fn build(rule: &'a SommerfeldRule, sources: &[[f64; 2]], targets: Option<&[[f64; 2]]>, config: FmmConfig) -> Result<Self, FmmError> {
        if config.p == 0 || config.p > 60 {
            return Err(FmmError::BadOrder(config.p));
        }
        let (src, sbox) = make_groups(rule, sources, &config)?;
        let (tgt, tbox) = match targets {
            Some(t) => make_groups(rule, t, &config)?,
            None => (src.clone(), sbox.clone()),
        };
        let mut fmm = LayeredFmm {
            rule,
            config,
            src,
            tgt,
            src_pts: sources.to_vec(),
            tgt_pts: targets.unwrap_or(sources).to_vec(),
            sbox,
            tbox,
            self_mode: targets.is_none(),
            m2l_free: Vec::new(),
            m2l_reaction: Vec::new(),
            node_plans: Vec::new(),
            near: Vec::new(),
            free_near: Vec::new(),
            stats: FmmStats::default(),
        };
        fmm.plan();
        Ok(fmm)
    }

    pub fn num_sources(&self) -> usize {
        self.src_pts.len()
    }

    pub fn num_targets(&self) -> usize {
        self.tgt_pts.len()
    }

    /// Source leaves as global point indices, each paired with its halo: the
    /// points of the leaf followed by those of every other leaf it meets
    /// through a near free-space block. Only meaningful in self mode.
    pub fn leaf_halos(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut nbrs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(t, s) in &self.free_near {
            if t != s {
                nbrs.entry(t).or_default().push(s);
            }
        }
        let pts = |gid: usize| -> Vec<usize> {
            let (g, b) = self.sbox[gid];
            self.src[g].tree.points_of(b).iter().map(|&i| self.src[g].idx[i]).collect()
        };
        let mut out = Vec::new();
        for g in &self.src {
            for b in g.tree.leaves() {
                let gid = g.offset + b;
                let own = pts(gid);
                let mut halo = own.clone();
                for &n in nbrs.get(&gid).map(|v| v.as_slice()).unwrap_or(&[]) {
                    halo.extend(pts(n));
                }
                out.push((own, halo));
            }
        }
        out
    }

    fn tb(&self, g: usize, b: usize) -> &TreeBox {
        &self.tgt[g].tree.boxes[b]
    }

    fn sb(&self, g: usize, b: usize) -> &TreeBox {
        &self.src[g].tree.boxes[b]
    }

    fn channels(&self, gt: usize, gs: usize) -> Vec<Channel> {
        let (lt, ls) = (self.tgt[gt].layer, self.src[gs].layer);
        let mut out = Vec::new();
        if self.rule.free_couples(lt, ls) {
            out.push(Channel::Free);
        }
        if !self.rule.is_trivial() {
            for arrival in [Dir::Up, Dir::Down] {
                for departure in [Dir::Up, Dir::Down] {
                    if let Some(ci) = self.rule.component_index(ComponentId::new(lt, ls, arrival, departure)) {
                        out.push(Channel::Reaction(ci));
                    }
                }
            }
        }
        out
    }

    /// Node key when the box pair may interact through expansions.
    fn admissible(&self, ch: Channel, gt: usize, t: &TreeBox, gs: usize, s: &TreeBox) -> Option<NodeKey> {
        let cfg = &self.config;
        let reach = (1.0 + cfg.theta) * (t.radius + s.radius);
        let size = t.radius.max(s.radius);
        let budget = cfg.size_factor * cfg.p as f64;
        match ch {
            Channel::Free => {
                let d = libm::hypot(t.center[0] - s.center[0], t.center[1] - s.center[1]);
                let k = self.tgt[gt].k.max(self.src[gs].k);
                (d > 0.0 && d >= reach && k * size <= budget).then_some(None)
            }
            Channel::Reaction(ci) => {
                let id = self.rule.components()[ci];
                let stack = self.rule.stack();
                let (_, _, g) = reaction_offsets(stack, id, t.center, s.center);
                let dx = t.center[0] - s.center[0];
                let d = libm::hypot(dx, g);
                if d == 0.0 || d < reach || self.rule.lambda0 * size > budget {
                    return None;
                }
                let g_lo = (g - t.radius - s.radius).max(0.0);
                if self.rule.rays_negligible(g_lo) {
                    return Some(None);
                }
                self.rule.ray_class(dx, g).map(Some)
            }
        }
    }

    fn plan(&mut self) {
        let mut near: BTreeMap<(usize, usize), Vec<Channel>> = BTreeMap::new();
        let mut keys: BTreeMap<NodeKey, KeyPlan> = BTreeMap::new();
        for gt in 0..self.tgt.len() {
            for gs in 0..self.src.len() {
                for ch in self.channels(gt, gs) {
                    let mut stack = vec![(0usize, 0usize)];
                    while let Some((bt, bs)) = stack.pop() {
                        let (t, s) = (self.tb(gt, bt), self.sb(gs, bs));
                        let (tg, sg) = (self.tgt[gt].offset + bt, self.src[gs].offset + bs);
                        if let Some(key) = self.admissible(ch, gt, t, gs, s) {
                            match ch {
                                Channel::Free => self.m2l_free.push((tg, sg)),
                                Channel::Reaction(ci) => {
                                    let dx = t.center[0] - s.center[0];
                                    let rule = self.rule;
                                    let plan = keys.entry(key).or_insert_with(|| KeyPlan {
                                        nodes: FlatNodes::new(rule, key),
                                        pairs: Vec::new(),
                                        dens: BTreeMap::new(),
                                    });
                                    if !plan.dens.contains_key(&ci) {
                                        let d = plan.nodes.densities(rule, key, ci);
                                        plan.dens.insert(ci, d);
                                    }
                                    plan.pairs.push(ReacPair { t: tg, s: sg, ci, dx });
                                }
                            }
                            continue;
                        }
                        match (t.is_leaf(), s.is_leaf()) {
                            (true, true) => near.entry((tg, sg)).or_default().push(ch),
                            (false, true) => stack.extend(t.children.iter().map(|&c| (c, bs))),
                            (true, false) => stack.extend(s.children.iter().map(|&c| (bt, c))),
                            (false, false) => {
                                if t.radius >= s.radius {
                                    stack.extend(t.children.iter().map(|&c| (c, bs)));
                                } else {
                                    stack.extend(s.children.iter().map(|&c| (bt, c)));
                                }
                            }
                        }
                    }
                }
            }
        }
        for ((tg, sg), chans) in near {
            if chans.iter().any(|c| matches!(c, Channel::Free)) {
                self.free_near.push((tg, sg));
            }
            let block = self.near_block(tg, sg, &chans);
            self.stats.near_entries += block.data.len();
            self.near.push(block);
        }
        self.stats.source_boxes = self.sbox.len();
        self.stats.target_boxes = self.tbox.len();
        self.stats.free_m2l = self.m2l_free.len();
        self.stats.reaction_m2l = keys.values().map(|p| p.pairs.len()).sum();
        self.stats.node_keys = keys.len();
        self.reaction_matrices(keys);
        self.stats.reaction_blocks = self.m2l_reaction.len();
        self.stats.near_blocks = self.near.len();
    }

    /// `pot_t = Σ_s G(r_t, r_s) q_s` for every target.
    pub fn apply(&self, q: &[Complex64]) -> Vec<Complex64> {
        let p = self.config.p;
        let nc = 2 * p + 1;
        let mut alpha = vec![ZERO; self.sbox.len() * nc];
        let mut tmp = vec![ZERO; nc];
        for g in &self.src {
            let mut tr = Translator::new(g.k, p);
            for b in (0..g.tree.boxes.len()).rev() {
                let bx = &g.tree.boxes[b];
                let gid = g.offset + b;
                if bx.is_leaf() {
                    for &i in g.tree.points_of(b) {
                        let gi = g.idx[i];
                        let pt = self.src_pts[gi];
                        let d = [pt[0] - bx.center[0], pt[1] - bx.center[1]];
                        tr.p2m(d, q[gi], &mut alpha[gid * nc..(gid + 1) * nc]);
                    }
                } else {
                    for &c in &bx.children {
                        let cid = g.offset + c;
                        tmp.copy_from_slice(&alpha[cid * nc..(cid + 1) * nc]);
                        let cc = g.tree.boxes[c].center;
                        let v = [cc[0] - bx.center[0], cc[1] - bx.center[1]];
                        tr.m2m(v, &tmp, &mut alpha[gid * nc..(gid + 1) * nc]);
                    }
                }
            }
        }

        let mut beta = vec![ZERO; self.tbox.len() * nc];
        let mut trs: Vec<Translator> = self.tgt.iter().map(|g| Translator::new(g.k, p)).collect();
        for &(tg, sg) in &self.m2l_free {
            let (gt, bt) = self.tbox[tg];
            let (gs, bs) = self.sbox[sg];
            let (ct, cs) = (self.tb(gt, bt).center, self.sb(gs, bs).center);
            trs[gt].m2l([ct[0] - cs[0], ct[1] - cs[1]], &alpha[sg * nc..(sg + 1) * nc], &mut beta[tg * nc..(tg + 1) * nc]);
        }
        for (t, s, m) in &self.m2l_reaction {
            let al = &alpha[s * nc..(s + 1) * nc];
            for (row, b) in m.chunks_exact(nc).zip(beta[t * nc..(t + 1) * nc].iter_mut()) {
                *b += row.iter().zip(al).fold(ZERO, |acc, (x, y)| acc + x * y);
            }
        }
        self.apply_node_plans(&alpha, &mut beta);

        let mut pot = vec![ZERO; self.tgt_pts.len()];
        for (g, tr) in self.tgt.iter().zip(trs.iter_mut()) {
            for b in 0..g.tree.boxes.len() {
                let bx = &g.tree.boxes[b];
                let gid = g.offset + b;
                if bx.is_leaf() {
                    for &i in g.tree.points_of(b) {
                        let gi = g.idx[i];
                        let pt = self.tgt_pts[gi];
                        let d = [pt[0] - bx.center[0], pt[1] - bx.center[1]];
                        pot[gi] += tr.l2p(d, &beta[gid * nc..(gid + 1) * nc]);
                    }
                } else {
                    tmp.copy_from_slice(&beta[gid * nc..(gid + 1) * nc]);
                    for &c in &bx.children {
                        let cid = g.offset + c;
                        let cc = g.tree.boxes[c].center;
                        let v = [cc[0] - bx.center[0], cc[1] - bx.center[1]];
                        tr.l2l(v, &tmp, &mut beta[cid * nc..(cid + 1) * nc]);
                    }
                }
            }
        }

        for blk in &self.near {
            let (gt, bt) = self.tbox[blk.t];
            let (gs, bs) = self.sbox[blk.s];
            let (tg, sg) = (&self.tgt[gt], &self.src[gs]);
            let spts = sg.tree.points_of(bs);
            for (a, &ti) in tg.tree.points_of(bt).iter().enumerate() {
                let row = &blk.data[a * spts.len()..(a + 1) * spts.len()];
                let mut acc = ZERO;
                for (v, &si) in row.iter().zip(spts) {
                    acc += v * q[sg.idx[si]];
                }
                pot[tg.idx[ti]] += acc;
            }
        }
        pot
    }

    /// Dense reaction translation `β_T += T α_S` for every box pair, summed
    /// over components: `T_{mn} = (i/4π) Σ_q c_q W_q^m V_q^n`.
    /// `(z_q, f_q)` of the source power table of box `s` for departures `down`.
    fn source_factors<'b>(&'b self, nodes: &'b FlatNodes, s: usize, id: ComponentId) -> impl Fn(usize) -> (Complex64, Complex64) + 'b {
        let (gs, bs) = self.sbox[s];
        let (ls, ks) = (self.src[gs].layer, self.src[gs].k);
        let sd = if id.departure == Dir::Down { 1.0 } else { -1.0 };
        let a_s = sd * (self.sb(gs, bs).center[1] - source_reference(self.rule.stack(), id));
        move |q| {
            let kys = nodes.ky(q, ls);
            (-(kys * sd + I * nodes.lambda[q]) / ks, nodes.weight[q] * (I * kys * a_s).exp() / kys)
        }
    }

    fn target_factors<'b>(&'b self, nodes: &'b FlatNodes, t: usize, id: ComponentId) -> impl Fn(usize) -> (Complex64, Complex64) + 'b {
        let (gt, bt) = self.tbox[t];
        let (lt, kt) = (self.tgt[gt].layer, self.tgt[gt].k);
        let sa = if id.arrival == Dir::Up { 1.0 } else { -1.0 };
        let a_t = sa * (self.tb(gt, bt).center[1] - target_reference(self.rule.stack(), id));
        move |q| {
            let kyt = nodes.ky(q, lt);
            ((kyt * sa + I * nodes.lambda[q]) / kt, (I * kyt * a_t).exp())
        }
    }

    fn reaction_matrices(&mut self, keys: BTreeMap<NodeKey, KeyPlan>) {
        if !self.config.reaction_matrices {
            self.node_plans = keys.into_values().collect();
            return;
        }
        let p = self.config.p;
        let nc = 2 * p + 1;
        let mut mats: BTreeMap<(usize, usize), Vec<Complex64>> = BTreeMap::new();
        for plan in keys.values() {
            let nodes = &plan.nodes;
            let n = nodes.len();
            // node-major power tables with the box-dependent factors folded in
            let mut vtab: BTreeMap<(usize, bool), Vec<Complex64>> = BTreeMap::new();
            let mut wtab: BTreeMap<(usize, bool), Vec<Complex64>> = BTreeMap::new();
            for pair in &plan.pairs {
                let id = self.rule.components()[pair.ci];
                vtab.entry((pair.s, id.departure == Dir::Down))
                    .or_insert_with(|| power_table(n, p, self.source_factors(nodes, pair.s, id)));
                wtab.entry((pair.t, id.arrival == Dir::Up))
                    .or_insert_with(|| power_table(n, p, self.target_factors(nodes, pair.t, id)));
            }
            let (mut rre, mut rim) = (vec![0.0; nc], vec![0.0; nc]);
            let (mut tre, mut tim) = (vec![0.0; nc * nc], vec![0.0; nc * nc]);
            for pair in &plan.pairs {
                let id = self.rule.components()[pair.ci];
                let vt = &vtab[&(pair.s, id.departure == Dir::Down)];
                let wt = &wtab[&(pair.t, id.arrival == Dir::Up)];
                let dens = &plan.dens[&pair.ci];
                tre.fill(0.0);
                tim.fill(0.0);
                for q in 0..n {
                    let c = dens[q] * (I * nodes.lambda[q] * pair.dx).exp() * (I / (4.0 * PI));
                    if c == ZERO {
                        continue;
                    }
                    for (j, v) in vt[q * nc..(q + 1) * nc].iter().enumerate() {
                        let r = c * v;
                        rre[j] = r.re;
                        rim[j] = r.im;
                    }
                    // split real and imaginary parts so the update vectorizes
                    for (m, w) in wt[q * nc..(q + 1) * nc].iter().enumerate() {
                        let (wr, wi) = (w.re, w.im);
                        let tr = &mut tre[m * nc..(m + 1) * nc];
                        let ti = &mut tim[m * nc..(m + 1) * nc];
                        for j in 0..nc {
                            tr[j] += wr * rre[j] - wi * rim[j];
                            ti[j] += wr * rim[j] + wi * rre[j];
                        }
                    }
                }
                let t = mats.entry((pair.t, pair.s)).or_insert_with(|| vec![ZERO; nc * nc]);
                for ((tv, a), b) in t.iter_mut().zip(&tre).zip(&tim) {
                    *tv += Complex64::new(*a, *b);
                }
            }
        }
        self.m2l_reaction = mats.into_iter().map(|((t, s), m)| (t, s, m)).collect();
    }

    /// Reaction translations through the contour nodes: each multipole is
    /// reduced to node values once, and each local collects node values.
    fn apply_node_plans(&self, alpha: &[Complex64], beta: &mut [Complex64]) {
        let p = self.config.p;
        let nc = 2 * p + 1;
        let sum_powers = |z: Complex64, f: Complex64, a: &[Complex64]| {
            let (mut acc, mut zp, mut zm) = (a[p], Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
            let u = z.inv();
            for j in 1..=p {
                zp *= z;
                zm *= u;
                acc += a[p + j] * zp + a[p - j] * zm;
            }
            acc * f
        };
        for plan in &self.node_plans {
            let nodes = &plan.nodes;
            let n = nodes.len();
            let mut reduced: BTreeMap<(usize, bool), Vec<Complex64>> = BTreeMap::new();
            let mut gathered: BTreeMap<(usize, bool), (ComponentId, Vec<Complex64>)> = BTreeMap::new();
            for pair in &plan.pairs {
                let id = self.rule.components()[pair.ci];
                let va = reduced.entry((pair.s, id.departure == Dir::Down)).or_insert_with(|| {
                    let fac = self.source_factors(nodes, pair.s, id);
                    let a = &alpha[pair.s * nc..(pair.s + 1) * nc];
                    (0..n).map(|q| {
                        let (z, f) = fac(q);
                        sum_powers(z, f, a)
                    }).collect()
                });
                let acc = &mut gathered.entry((pair.t, id.arrival == Dir::Up)).or_insert_with(|| (id, vec![ZERO; n])).1;
                let dens = &plan.dens[&pair.ci];
                for q in 0..n {
                    if dens[q] != ZERO {
                        acc[q] += dens[q] * (I * nodes.lambda[q] * pair.dx).exp() * va[q];
                    }
                }
            }
            for ((t, _), (id, u)) in gathered {
                let fac = self.target_factors(nodes, t, id);
                let b = &mut beta[t * nc..(t + 1) * nc];
                for (q, uq) in u.iter().enumerate() {
                    if *uq == ZERO {
                        continue;
                    }
                    let (z, f) = fac(q);
                    let c = uq * f * (I / (4.0 * PI));
                    let zi = z.inv();
                    let (mut zp, mut zm) = (c, c);
                    b[p] += c;
                    for j in 1..=p {
                        zp *= z;
                        zm *= zi;
                        b[p + j] += zp;
                        b[p - j] += zm;
                    }
                }
            }
        }
    }

    /// Adds one reaction component over a block of point pairs. The middle
    /// contour is shared, so its exponentials factor into per-point tables.
    fn reaction_block(&self, ci: usize, tpts: &[usize], spts: &[usize], data: &mut [Complex64]) {
        let rule = self.rule;
        let stack = rule.stack();
        let id = rule.components()[ci];
        let mid = &rule.middle;
        let nm = mid.len();
        let sa = sigma(id.arrival);
        let sd = -sigma(id.departure);
        let (yt, ys) = (target_reference(stack, id), source_reference(stack, id));
        let xbar = self.tgt_pts[tpts[0]][0];
        let a_t: Vec<f64> = tpts.iter().map(|&i| sa * (self.tgt_pts[i][1] - yt)).collect();
        let a_s: Vec<f64> = spts.iter().map(|&i| sd * (self.src_pts[i][1] - ys)).collect();
        let mut tf = vec![ZERO; tpts.len() * 2 * nm];
        for (a, &i) in tpts.iter().enumerate() {
            let x = self.tgt_pts[i][0] - xbar;
            for q in 0..nm {
                let v = I * mid.ky(q, id.target) * a_t[a];
                let h = I * mid.lambda[q] * x;
                tf[a * 2 * nm + q] = (h + v).exp();
                tf[a * 2 * nm + nm + q] = (v - h).exp();
            }
        }
        let mut sf = vec![ZERO; spts.len() * 2 * nm];
        for (b, &i) in spts.iter().enumerate() {
            let x = self.src_pts[i][0] - xbar;
            for q in 0..nm {
                let kys = mid.ky(q, id.source);
                let c = mid.weight[q] * mid.dens(ci, q) / kys;
                let v = I * kys * a_s[b];
                let h = I * mid.lambda[q] * x;
                sf[b * 2 * nm + q] = c * (v - h).exp();
                sf[b * 2 * nm + nm + q] = c * (v + h).exp();
            }
        }
        let ns = spts.len();
        for (a, &ti) in tpts.iter().enumerate() {
            let t = &tf[a * 2 * nm..(a + 1) * 2 * nm];
            for (b, &si) in spts.iter().enumerate() {
                let s = &sf[b * 2 * nm..(b + 1) * 2 * nm];
                let mut acc = t.iter().zip(s).fold(ZERO, |acc, (x, y)| acc + x * y);
                let dx = self.tgt_pts[ti][0] - self.src_pts[si][0];
                acc += rule.ray_integral(id, dx, a_t[a], a_s[b], 0, 0);
                data[a * ns + b] += acc * (I / (4.0 * PI));
            }
        }
    }

    fn near_block(&self, tg: usize, sg: usize, chans: &[Channel]) -> NearBlock {
        let (gt, bt) = self.tbox[tg];
        let (gs, bs) = self.sbox[sg];
        let tpts: Vec<usize> = self.tgt[gt].tree.points_of(bt).iter().map(|&i| self.tgt[gt].idx[i]).collect();
        let spts: Vec<usize> = self.src[gs].tree.points_of(bs).iter().map(|&i| self.src[gs].idx[i]).collect();
        let k = self.src[gs].k;
        let ns = spts.len();
        let mut data = vec![ZERO; tpts.len() * ns];
        for ch in chans {
            match *ch {
                Channel::Free => {
                    for (a, &ti) in tpts.iter().enumerate() {
                        let r = self.tgt_pts[ti];
                        for (b, &si) in spts.iter().enumerate() {
                            if !(self.self_mode && ti == si) {
                                let rs = self.src_pts[si];
                                let d = libm::hypot(r[0] - rs[0], r[1] - rs[1]);
                                data[a * ns + b] += hankel0(k * d) * (I * 0.25);
                            }
                        }
                    }
                }
                Channel::Reaction(ci) => self.reaction_block(ci, &tpts, &spts, &mut data),
            }
        }
        NearBlock { t: tg, s: sg, data }
    }
}

/// Reaction translation matrix `T` (row-major, `β = T α`) for component
/// `id` between a multipole at `cs` and a local expansion at `ct`. The rays
/// are dropped when negligible for gap `g - rsum`; `None` when the pair falls
/// outside the tabulated distance range.
pub fn reaction_translation(rule: &SommerfeldRule, id: ComponentId, ct: [f64; 2], cs: [f64; 2], rsum: f64, p: usize) -> Option<Vec<Complex64>> {
    let ci = rule.component_index(id)?;
    let stack = rule.stack();
    let (a_t, a_s, g) = reaction_offsets(stack, id, ct, cs);
    let dx = ct[0] - cs[0];
    let key = if rule.rays_negligible((g - rsum).max(0.0)) { None } else { Some(rule.ray_class(dx, g)?) };
    let nodes = FlatNodes::new(rule, key);
    let dens = nodes.densities(rule, key, ci);
    let n = nodes.len();
    let nc = 2 * p + 1;
    let (kt, ks) = (stack.k(id.target), stack.k(id.source));
    let (sa, sd) = (sigma(id.arrival), -sigma(id.departure));
    let vt = power_table(n, p, |q| {
        let kys = nodes.ky(q, id.source);
        (-(kys * sd + I * nodes.lambda[q]) / ks, nodes.weight[q] * (I * kys * a_s).exp() / kys)
    });
    let wt = power_table(n, p, |q| {
        let kyt = nodes.ky(q, id.target);
        ((kyt * sa + I * nodes.lambda[q]) / kt, (I * kyt * a_t).exp())
    });
    let mut t = vec![ZERO; nc * nc];
    for q in 0..n {
        let c = dens[q] * (I * nodes.lambda[q] * dx).exp() * (I / (4.0 * PI));
        for m in 0..nc {
            let w = wt[q * nc + m] * c;
            for j in 0..nc {
                t[m * nc + j] += w * vt[q * nc + j];
            }
        }
    }
    Some(t)
}

/// Matrix-free Nyström operator: `(KΦ)_i = η_i Σ_e G(c_i, c_e) q_e + I^s_i Φ_i`
/// with charges `q_e = |Γ_e| Φ_e / η_e`.
pub struct NystromOperator<'a> {
    pub fmm: LayeredFmm<'a>,
    len: Vec<f64>,
    eta: Vec<f64>,
    self_term: Vec<Complex64>,
}

impl<'a> NystromOperator<'a> {
    pub fn new(mesh: &PanelMesh, rule: &'a SommerfeldRule, config: FmmConfig) -> Result<Self, FmmError> {
        let stack = rule.stack();
        let pts: Vec<[f64; 2]> = mesh.panels.iter().map(|p| p.center).collect();
        let fmm = LayeredFmm::new_self(rule, &pts, config)?;
        Ok(NystromOperator {
            fmm,
            len: mesh.panels.iter().map(|p| p.length).collect(),
            eta: mesh.panels.iter().map(|p| stack.eta(p.layer)).collect(),
            self_term: mesh.panels.iter().map(|p| free_self_term(stack.k(p.layer), p.length)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len.is_empty()
    }

    pub fn apply(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let pot = self.fmm.apply(&self.charges(phi));
        pot.iter()
            .zip(&self.eta)
            .zip(phi.iter().zip(&self.self_term))
            .map(|((u, e), (f, s))| u * *e + f * s)
            .collect()
    }

    /// Physical charges `|Γ_e| Φ_e / η_e` of a density.
    pub fn charges(&self, phi: &[Complex64]) -> Vec<Complex64> {
        phi.iter().zip(&self.len).zip(&self.eta).map(|((f, l), e)| f * (*l / *e)).collect()
    }
}
