//! Scatterer boundaries and their flat-panel discretization.

use alloc::vec::Vec;

use crate::layered_media::LayerStack;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCurve {
    /// `r(θ) = a sin(k(θ - θ0)) + b` about `center`.
    Star { center: [f64; 2], a: f64, b: f64, k: f64, theta0: f64 },
    /// Counterclockwise vertex list.
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    InvalidRadius { a: f64, b: f64 },
    TooFewPanels(usize),
    DegeneratePolygon,
    /// A boundary piece lies along an interface.
    TangentToInterface { interface: usize },
}

impl core::fmt::Display for GeometryError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GeometryError::InvalidRadius { a, b } => write!(f, "star needs b > |a| (a={a}, b={b})"),
            GeometryError::TooFewPanels(n) => write!(f, "need at least 16 panels per curve, got {n}"),
            GeometryError::DegeneratePolygon => write!(f, "polygon needs 3+ distinct vertices"),
            GeometryError::TangentToInterface { interface } => {
                write!(f, "boundary runs along interface {interface}")
            }
        }
    }
}

pub fn make_star(center: [f64; 2], a: f64, b: f64, k: f64, theta0: f64) -> Result<BoundaryCurve, GeometryError> {
    if !(b > libm::fabs(a)) {
        return Err(GeometryError::InvalidRadius { a, b });
    }
    Ok(BoundaryCurve::Star { center, a, b, k, theta0 })
}

pub fn make_polygon(mut vertices: Vec<[f64; 2]>) -> Result<BoundaryCurve, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::DegeneratePolygon);
    }
    let area = signed_area(&vertices);
    if area == 0.0 {
        return Err(GeometryError::DegeneratePolygon);
    }
    if area < 0.0 {
        vertices.reverse();
    }
    Ok(BoundaryCurve::Polygon { vertices })
}

/// The L-shaped scatterer of the manufactured-solution example.
pub fn make_lshape() -> BoundaryCurve {
    make_polygon(alloc::vec![
        [0.75, 0.75],
        [-0.75, 0.75],
        [-0.75, -2.5],
        [2.25, -2.5],
        [2.25, -1.5],
        [0.75, -1.5],
    ])
    .unwrap()
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum::<f64>()
}

impl BoundaryCurve {
    pub fn point(&self, t: f64) -> [f64; 2] {
        match self {
            BoundaryCurve::Star { center, a, b, k, theta0 } => {
                let r = a * libm::sin(k * (t - theta0)) + b;
                [center[0] + r * libm::cos(t), center[1] + r * libm::sin(t)]
            }
            BoundaryCurve::Polygon { vertices } => {
                let n = vertices.len();
                let i = (libm::floor(t) as usize).min(n - 1);
                let s = t - i as f64;
                let p = vertices[i];
                let q = vertices[(i + 1) % n];
                [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
            }
        }
    }

    /// Parameter period: `2π` for stars, vertex count for polygons.
    pub fn period(&self) -> f64 {
        match self {
            BoundaryCurve::Star { .. } => 2.0 * core::f64::consts::PI,
            BoundaryCurve::Polygon { vertices } => vertices.len() as f64,
        }
    }

    fn speed(&self, t: f64) -> f64 {
        match self {
            BoundaryCurve::Star { a, b, k, theta0, .. } => {
                let r = a * libm::sin(k * (t - theta0)) + b;
                let dr = a * k * libm::cos(k * (t - theta0));
                libm::hypot(r, dr)
            }
            BoundaryCurve::Polygon { vertices } => {
                let n = vertices.len();
                let i = (libm::floor(t) as usize).min(n - 1);
                let p = vertices[i];
                let q = vertices[(i + 1) % n];
                libm::hypot(q[0] - p[0], q[1] - p[1])
            }
        }
    }

    /// Corner parameters (polygon vertices); empty for smooth curves.
    fn corners(&self) -> Vec<f64> {
        match self {
            BoundaryCurve::Star { .. } => alloc::vec![0.0],
            BoundaryCurve::Polygon { vertices } => (0..vertices.len()).map(|i| i as f64).collect(),
        }
    }

    /// Arclength between parameters `t0 < t1`.
    pub fn arclength(&self, t0: f64, t1: f64) -> f64 {
        match self {
            BoundaryCurve::Polygon { .. } => {
                let mut s = 0.0;
                let mut t = t0;
                while t < t1 - 1e-15 {
                    let next = (libm::floor(t) + 1.0).min(t1);
                    s += (next - t) * self.speed(t);
                    t = next;
                }
                s
            }
            BoundaryCurve::Star { .. } => {
                let pieces = libm::ceil((t1 - t0) / 0.02).max(1.0) as usize;
                let h = (t1 - t0) / pieces as f64;
                (0..pieces).map(|p| self.gl8(t0 + p as f64 * h, t0 + (p + 1) as f64 * h)).sum()
            }
        }
    }

    fn gl8(&self, a: f64, b: f64) -> f64 {
        const X: [f64; 4] = [0.183434642495650, 0.525532409916329, 0.796666477413627, 0.960289856497536];
        const W: [f64; 4] = [0.362683783378362, 0.313706645877887, 0.222381034453374, 0.101228536290376];
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in X.iter().zip(W.iter()) {
            s += w * (self.speed(m - r * x) + self.speed(m + r * x));
        }
        s * r
    }

    pub fn perimeter(&self) -> f64 {
        self.arclength(0.0, self.period())
    }

    /// True if `p` lies strictly inside the curve.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            BoundaryCurve::Star { center, a, b, k, theta0 } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let t = libm::atan2(dy, dx);
                let r = a * libm::sin(k * (t - theta0)) + b;
                libm::hypot(dx, dy) < r
            }
            BoundaryCurve::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                let mut j = n - 1;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[j]);
                    if (a[1] > p[1]) != (b[1] > p[1])
                        && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0]
                    {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }

    /// Parameters where the curve crosses `y = level`.
    fn crossings(&self, level: f64, interface: usize) -> Result<Vec<f64>, GeometryError> {
        let period = self.period();
        let mut out = Vec::new();
        match self {
            BoundaryCurve::Polygon { vertices } => {
                let n = vertices.len();
                for i in 0..n {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    if p[1] == level && q[1] == level {
                        return Err(GeometryError::TangentToInterface { interface });
                    }
                    let (fp, fq) = (p[1] - level, q[1] - level);
                    if fp == 0.0 {
                        out.push(i as f64);
                    } else if fp * fq < 0.0 {
                        out.push(i as f64 + fp / (fp - fq));
                    }
                }
            }
            BoundaryCurve::Star { .. } => {
                let m = 4096;
                let f = |t: f64| self.point(t)[1] - level;
                for i in 0..m {
                    let (a, b) = (period * i as f64 / m as f64, period * (i + 1) as f64 / m as f64);
                    let (fa, fb) = (f(a), f(b));
                    if fa == 0.0 {
                        out.push(a);
                    } else if fa * fb < 0.0 {
                        let (mut lo, mut hi, mut flo) = (a, b, fa);
                        for _ in 0..80 {
                            let mid = 0.5 * (lo + hi);
                            let fm = f(mid);
                            if (fm < 0.0) == (flo < 0.0) {
                                lo = mid;
                                flo = fm;
                            } else {
                                hi = mid;
                            }
                        }
                        out.push(0.5 * (lo + hi));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub center: [f64; 2],
    pub length: f64,
    pub tangent: [f64; 2],
    pub layer: usize,
    pub scatterer: usize,
}

impl Panel {
    fn new(start: [f64; 2], end: [f64; 2], stack: &LayerStack, scatterer: usize) -> Self {
        let center = [0.5 * (start[0] + end[0]), 0.5 * (start[1] + end[1])];
        let length = libm::hypot(end[0] - start[0], end[1] - start[1]);
        let tangent = [(end[0] - start[0]) / length, (end[1] - start[1]) / length];
        Panel { start, end, center, length, tangent, layer: stack.layer_of(center[1]), scatterer }
    }

    /// Outward unit normal for a counterclockwise curve.
    pub fn normal(&self) -> [f64; 2] {
        [self.tangent[1], -self.tangent[0]]
    }
}

/// Cumulative arclength on a uniform parameter grid over two periods.
struct ArcTable<'a> {
    curve: &'a BoundaryCurve,
    dt: f64,
    cum: Vec<f64>,
}

impl<'a> ArcTable<'a> {
    fn new(curve: &'a BoundaryCurve) -> Self {
        let per = curve.period();
        let m = match curve {
            BoundaryCurve::Star { .. } => 4096,
            BoundaryCurve::Polygon { vertices } => vertices.len(),
        };
        let dt = per / m as f64;
        let mut cum = Vec::with_capacity(2 * m + 1);
        cum.push(0.0);
        for j in 0..2 * m {
            let a = j as f64 * dt;
            let last = cum[j];
            cum.push(last + curve.arclength(a, a + dt));
        }
        ArcTable { curve, dt, cum }
    }

    fn s(&self, t: f64) -> f64 {
        let j = ((t / self.dt) as usize).min(self.cum.len() - 2);
        let a = j as f64 * self.dt;
        self.cum[j] + if t > a { self.curve.arclength(a, t) } else { 0.0 }
    }

    fn length(&self, t0: f64, t1: f64) -> f64 {
        self.s(t1) - self.s(t0)
    }

    fn invert(&self, target: f64) -> f64 {
        let j = self.cum.partition_point(|&c| c <= target).saturating_sub(1).min(self.cum.len() - 2);
        let (mut lo, mut hi) = (j as f64 * self.dt, (j + 1) as f64 * self.dt);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.s(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Breakpoint parameters for one closed curve: corners and interface
/// crossings are kept, the arcs between them are split uniformly in arclength.
fn breakpoints(curve: &BoundaryCurve, n_target: usize, stack: &LayerStack) -> Result<Vec<f64>, GeometryError> {
    let period = curve.period();
    let mut fixed = curve.corners();
    for m in 0..stack.num_interfaces() {
        fixed.extend(curve.crossings(stack.interface_y(m), m)?);
    }
    fixed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fixed.dedup_by(|a, b| libm::fabs(*a - *b) < 1e-13);
    let arc = ArcTable::new(curve);
    let h = arc.length(0.0, period) / n_target as f64;
    // merge slivers into their neighbours
    let mut kept: Vec<f64> = Vec::with_capacity(fixed.len());
    for &t in &fixed {
        if let Some(&last) = kept.last() {
            if arc.length(last, t) < 1e-3 * h {
                continue;
            }
        }
        kept.push(t);
    }
    if kept.len() > 1 {
        let first = kept[0];
        let last = *kept.last().unwrap();
        if arc.length(last, first + period) < 1e-3 * h {
            kept.pop();
        }
    }
    let mut out = Vec::new();
    for i in 0..kept.len() {
        let t0 = kept[i];
        let t1 = if i + 1 < kept.len() { kept[i + 1] } else { kept[0] + period };
        let s0 = arc.s(t0);
        let len = arc.s(t1) - s0;
        let n = libm::round(len / h).max(1.0) as usize;
        out.push(t0);
        for j in 1..n {
            out.push(arc.invert(s0 + len * j as f64 / n as f64));
        }
    }
    Ok(out)
}

/// Panels of one curve in curve order.
pub fn panelize(curve: &BoundaryCurve, n_target: usize, stack: &LayerStack, scatterer: usize) -> Result<Vec<Panel>, GeometryError> {
    if n_target < 16 {
        return Err(GeometryError::TooFewPanels(n_target));
    }
    let bp = breakpoints(curve, n_target, stack)?;
    let period = curve.period();
    let levels: Vec<f64> = (0..stack.num_interfaces()).map(|m| stack.interface_y(m)).collect();
    let pts: Vec<[f64; 2]> = bp
        .iter()
        .map(|&t| {
            let mut p = curve.point(if t >= period { t - period } else { t });
            if let Some(&y) = levels.iter().find(|&&y| libm::fabs(p[1] - y) < 1e-12) {
                p[1] = y;
            }
            p
        })
        .collect();
    let n = pts.len();
    Ok((0..n).map(|i| Panel::new(pts[i], pts[(i + 1) % n], stack, scatterer)).collect())
}

/// Panels of every scatterer, ordered layer-major.
#[derive(Debug, Clone)]
pub struct PanelMesh {
    pub panels: Vec<Panel>,
    /// `layer_ranges[l]` indexes the panels in layer `l`.
    pub layer_ranges: Vec<core::ops::Range<usize>>,
    pub curves: Vec<BoundaryCurve>,
}

impl PanelMesh {
    /// `counts[i]` panels on `curves[i]`.
    pub fn new(curves: Vec<BoundaryCurve>, counts: &[usize], stack: &LayerStack) -> Result<Self, GeometryError> {
        let mut panels = Vec::new();
        for (i, c) in curves.iter().enumerate() {
            panels.extend(panelize(c, counts[i], stack, i)?);
        }
        panels.sort_by_key(|p| p.layer);
        let mut layer_ranges = Vec::with_capacity(stack.num_layers());
        let mut start = 0;
        for l in 0..stack.num_layers() {
            let end = start + panels[start..].iter().take_while(|p| p.layer == l).count();
            layer_ranges.push(start..end);
            start = end;
        }
        Ok(PanelMesh { panels, layer_ranges, curves })
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// True if `p` is inside any scatterer.
    pub fn inside(&self, p: [f64; 2]) -> bool {
        self.curves.iter().any(|c| c.contains(p))
    }

    /// Distance from `p` to the nearest panel center.
    pub fn nearest_center(&self, p: [f64; 2]) -> f64 {
        self.panels
            .iter()
            .map(|q| libm::hypot(q.center[0] - p[0], q.center[1] - p[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.panels {
            for q in [p.start, p.end] {
                for d in 0..2 {
                    lo[d] = lo[d].min(q[d]);
                    hi[d] = hi[d].max(q[d]);
                }
            }
        }
        (lo, hi)
    }
}
