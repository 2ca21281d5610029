//! Layer stack, vertical wavenumbers, Fresnel and generalized
//! reflection/transmission coefficients, densities and plane-wave fields.
//!
//! Layer 0 is the top half-space `y > -d_0`, layer `L` the bottom half-space
//! `y < -d_{L-1}`. Phase factors across a layer of thickness `t` are
//! `exp(2i k_y t)` on the `Im k_y >= 0` branch.

use alloc::vec::Vec;
use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub enum StackError {
    NoInterfaces,
    LengthMismatch { interfaces: usize, k: usize, eta: usize },
    NotIncreasing(usize),
    NonPositive { field: &'static str, index: usize },
}

impl core::fmt::Display for StackError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StackError::NoInterfaces => write!(f, "stack needs at least one interface"),
            StackError::LengthMismatch { interfaces, k, eta } => write!(
                f,
                "stack.k ({k}) and stack.eta ({eta}) must have length interfaces+1 ({})",
                interfaces + 1
            ),
            StackError::NotIncreasing(i) => write!(f, "interface depth {i} is not increasing"),
            StackError::NonPositive { field, index } => write!(f, "{field}[{index}] must be > 0"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefError {
    /// `eta_l k_ly + eta_{l+1} k_{l+1,y}` vanished.
    FresnelDenominator { interface: usize },
    /// A multiple-reflection denominator vanished (guided-mode pole).
    Resonance,
}

impl core::fmt::Display for CoefError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoefError::FresnelDenominator { interface } => write!(f, "vanishing Fresnel denominator at interface {interface}"),
            CoefError::Resonance => write!(f, "guided-mode resonance at this horizontal wavenumber"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    depths: Vec<f64>,
    k: Vec<f64>,
    eta: Vec<f64>,
}

impl LayerStack {
    /// `depths` are `d_0 < d_1 < ...`; interface `m` sits at `y = -d_m`.
    pub fn new(depths: Vec<f64>, k: Vec<f64>, eta: Vec<f64>) -> Result<Self, StackError> {
        if depths.is_empty() {
            return Err(StackError::NoInterfaces);
        }
        if k.len() != depths.len() + 1 || eta.len() != depths.len() + 1 {
            return Err(StackError::LengthMismatch {
                interfaces: depths.len(),
                k: k.len(),
                eta: eta.len(),
            });
        }
        for i in 1..depths.len() {
            if !(depths[i] > depths[i - 1]) {
                return Err(StackError::NotIncreasing(i));
            }
        }
        for (i, v) in k.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(StackError::NonPositive { field: "k", index: i });
            }
        }
        for (i, v) in eta.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(StackError::NonPositive { field: "eta", index: i });
            }
        }
        Ok(LayerStack { depths, k, eta })
    }

    /// Number of interfaces `L`.
    pub fn num_interfaces(&self) -> usize {
        self.depths.len()
    }

    pub fn num_layers(&self) -> usize {
        self.depths.len() + 1
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn k(&self, l: usize) -> f64 {
        self.k[l]
    }

    pub fn eta(&self, l: usize) -> f64 {
        self.eta[l]
    }

    pub fn ks(&self) -> &[f64] {
        &self.k
    }

    pub fn etas(&self) -> &[f64] {
        &self.eta
    }

    pub fn k_max(&self) -> f64 {
        self.k.iter().cloned().fold(0.0, f64::max)
    }

    pub fn k_min(&self) -> f64 {
        self.k.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `y` coordinate of interface `m`.
    pub fn interface_y(&self, m: usize) -> f64 {
        -self.depths[m]
    }

    /// Thickness of an interior layer; 0 for the two half-spaces.
    pub fn thickness(&self, l: usize) -> f64 {
        if l == 0 || l >= self.depths.len() {
            0.0
        } else {
            self.depths[l] - self.depths[l - 1]
        }
    }

    pub fn layer_of(&self, y: f64) -> usize {
        self.depths.iter().take_while(|&&d| y < -d).count()
    }

    /// Distance from `y` to the nearest interface.
    pub fn interface_distance(&self, y: f64) -> f64 {
        self.depths.iter().map(|&d| libm::fabs(y + d)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.k.iter().all(|&v| v == self.k[0]) && self.eta.iter().all(|&v| v == self.eta[0])
    }
}

/// `sqrt(k^2 - lambda^2)` on the branch with `Im >= 0`.
#[inline]
pub fn vertical_wavenumber(lambda: Complex64, k: f64) -> Complex64 {
    let s = (Complex64::new(k * k, 0.0) - lambda * lambda).sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re < 0.0) {
        -s
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fresnel {
    /// `R_{l,l+1}`, wave from above reflecting off interface `l`.
    pub r_down: Complex64,
    /// `T_{l,l+1}`
    pub t_down: Complex64,
    /// `R_{l+1,l}`
    pub r_up: Complex64,
    /// `T_{l+1,l}`
    pub t_up: Complex64,
}

fn fresnel_from(
    eta_a: f64,
    ky_a: Complex64,
    eta_b: f64,
    ky_b: Complex64,
    interface: usize,
) -> Result<Fresnel, CoefError> {
    let za = ky_a * eta_a;
    let zb = ky_b * eta_b;
    let den = za + zb;
    if den.norm() == 0.0 {
        return Err(CoefError::FresnelDenominator { interface });
    }
    let r = (za - zb) / den;
    let t = za * 2.0 / den;
    let t_up = if za.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { zb * 2.0 / den };
    Ok(Fresnel { r_down: r, t_down: t, r_up: -r, t_up })
}

pub fn fresnel(stack: &LayerStack, l: usize, lambda: Complex64) -> Result<Fresnel, CoefError> {
    let ka = vertical_wavenumber(lambda, stack.k[l]);
    let kb = vertical_wavenumber(lambda, stack.k[l + 1]);
    fresnel_from(stack.eta[l], ka, stack.eta[l + 1], kb, l)
}

/// All stack coefficients at one spectral point.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub lambda: Complex64,
    /// `k_{l,y}` per layer.
    pub ky: Vec<Complex64>,
    /// Fresnel coefficients per interface.
    pub fresnel: Vec<Fresnel>,
    /// `R~_{l,l+1}` per layer; entry `L` is 0.
    pub refl_below: Vec<Complex64>,
    /// `R~_{l,l-1}` per layer; entry 0 is 0.
    pub refl_above: Vec<Complex64>,
    depths: Vec<f64>,
    thick: Vec<f64>,
}

fn expi(z: Complex64) -> Complex64 {
    (I * z).exp()
}

impl Coefficients {
    pub fn new(stack: &LayerStack, lambda: Complex64) -> Result<Self, CoefError> {
        let n = stack.num_layers();
        let nl = stack.num_interfaces();
        let ky: Vec<Complex64> = stack.k.iter().map(|&k| vertical_wavenumber(lambda, k)).collect();
        let mut fr = Vec::with_capacity(nl);
        for l in 0..nl {
            fr.push(fresnel_from(stack.eta[l], ky[l], stack.eta[l + 1], ky[l + 1], l)?);
        }
        let thick: Vec<f64> = (0..n).map(|l| stack.thickness(l)).collect();
        let zero = Complex64::new(0.0, 0.0);
        let mut below = alloc::vec![zero; n];
        for l in (0..nl).rev() {
            let ph = expi(ky[l + 1] * (2.0 * thick[l + 1]));
            let rb = below[l + 1] * ph;
            let den = Complex64::new(1.0, 0.0) + fr[l].r_down * rb;
            if den.norm() == 0.0 {
                return Err(CoefError::Resonance);
            }
            below[l] = (fr[l].r_down + rb) / den;
        }
        let mut above = alloc::vec![zero; n];
        for l in 1..n {
            let ph = expi(ky[l - 1] * (2.0 * thick[l - 1]));
            let ra = above[l - 1] * ph;
            let r = fr[l - 1].r_up;
            let den = Complex64::new(1.0, 0.0) + r * ra;
            if den.norm() == 0.0 {
                return Err(CoefError::Resonance);
            }
            above[l] = (r + ra) / den;
        }
        Ok(Coefficients {
            lambda,
            ky,
            fresnel: fr,
            refl_below: below,
            refl_above: above,
            depths: stack.depths.clone(),
            thick,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.ky.len()
    }

    /// `exp(2i k_{l,y} t_l)`; 0-thickness half-spaces give 1.
    pub fn layer_phase(&self, l: usize) -> Complex64 {
        expi(self.ky[l] * (2.0 * self.thick[l]))
    }

    /// Generalized transmission `T~_{src,dst}`.
    pub fn transmission(&self, src: usize, dst: usize) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let mut t = one;
        if dst < src {
            for l in (dst..src).rev() {
                let f = &self.fresnel[l];
                let ph = expi((self.ky[l] - self.ky[l + 1]) * self.depths[l]);
                let den = one + f.r_up * self.refl_above[l] * self.layer_phase(l);
                t = f.t_up * ph * t / den;
            }
        } else if dst > src {
            for l in (src + 1)..=dst {
                let f = &self.fresnel[l - 1];
                let ph = expi((self.ky[l - 1] - self.ky[l]) * self.depths[l - 1]);
                let den = one + f.r_down * self.refl_below[l] * self.layer_phase(l);
                t = f.t_down * ph * t / den;
            }
        }
        t
    }
}

/// Arrival (`*`) or departure (`⋆`) direction of a reaction component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    Up,
    Down,
}

/// Reaction component `(l, l', *, ⋆)`: target layer, source layer, arrival, departure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId {
    pub target: usize,
    pub source: usize,
    pub arrival: Dir,
    pub departure: Dir,
}

impl ComponentId {
    pub const fn new(target: usize, source: usize, arrival: Dir, departure: Dir) -> Self {
        ComponentId { target, source, arrival, departure }
    }

    /// True iff the density vanishes identically in a stack with `layers` layers.
    pub fn is_structural_zero(&self, layers: usize) -> bool {
        let last = layers - 1;
        (self.target == 0 && self.arrival == Dir::Down)
            || (self.target == last && self.arrival == Dir::Up)
            || (self.source == 0 && self.departure == Dir::Up)
            || (self.source == last && self.departure == Dir::Down)
    }

    /// All non-zero components for a stack with `layers` layers.
    pub fn all_nonzero(layers: usize) -> Vec<ComponentId> {
        let mut v = Vec::new();
        for target in 0..layers {
            for source in 0..layers {
                for arrival in [Dir::Up, Dir::Down] {
                    for departure in [Dir::Up, Dir::Down] {
                        let id = ComponentId { target, source, arrival, departure };
                        if !id.is_structural_zero(layers) {
                            v.push(id);
                        }
                    }
                }
            }
        }
        v
    }
}

/// Spectral density `sigma^{*⋆}_{l l'}(lambda)`.
pub fn density(c: &Coefficients, id: ComponentId) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    if id.is_structural_zero(c.num_layers()) {
        return zero;
    }
    let s = id.source;
    let rp = c.refl_below[s];
    let rm = c.refl_above[s];
    let ph = c.layer_phase(s);
    let den = one - rp * rm * ph;
    let ud = rp / den;
    let du = rm / den;
    let uu = rm * ud;
    use Dir::*;
    let l = id.target;
    if l == s {
        match (id.arrival, id.departure) {
            (Up, Down) => ud,
            (Down, Up) => du,
            _ => uu,
        }
    } else if l < s {
        let t = c.transmission(s, l);
        let up_down = t * ud;
        let up_up = t * (one + uu * ph);
        match (id.arrival, id.departure) {
            (Up, Down) => up_down,
            (Up, Up) => up_up,
            (Down, Down) => c.refl_above[l] * up_down,
            (Down, Up) => c.refl_above[l] * up_up,
        }
    } else {
        let t = c.transmission(s, l);
        let down_up = t * du;
        let down_down = t * (one + uu * ph);
        match (id.arrival, id.departure) {
            (Down, Up) => down_up,
            (Down, Down) => down_down,
            (Up, Up) => c.refl_below[l] * down_up,
            (Up, Down) => c.refl_below[l] * down_down,
        }
    }
}

/// Incident plane wave `exp(i(kx x - ky y))` in layer 0 with its background response.
#[derive(Debug, Clone)]
pub struct PlaneWaveField {
    pub kx: f64,
    pub ky: f64,
    /// Upgoing amplitude per layer (`A_l`); `A_L = 0`.
    pub a: Vec<Complex64>,
    /// Downgoing amplitude per layer (`B_l`); `B_0` unused.
    pub b: Vec<Complex64>,
    kyl: Vec<Complex64>,
    depths: Vec<f64>,
}

impl PlaneWaveField {
    pub fn new(stack: &LayerStack, kx: f64, ky: f64) -> Result<Self, CoefError> {
        let c = Coefficients::new(stack, Complex64::new(kx, 0.0))?;
        let n = stack.num_layers();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for l in 0..n {
            let t = c.transmission(0, l);
            let dl = if l < stack.num_interfaces() { stack.depths[l] } else { 0.0 };
            a.push(c.refl_below[l] * t * expi(c.ky[l] * (2.0 * dl)));
            b.push(if l == 0 { Complex64::new(0.0, 0.0) } else { t });
        }
        Ok(PlaneWaveField { kx, ky, a, b, kyl: c.ky, depths: stack.depths.clone() })
    }

    /// Build from an incidence angle measured from the downward normal:
    /// `(kx, ky) = k_0 (sin theta, cos theta)`.
    pub fn from_angle(stack: &LayerStack, theta: f64) -> Result<Self, CoefError> {
        let k0 = stack.k(0);
        Self::new(stack, k0 * libm::sin(theta), k0 * libm::cos(theta))
    }

    fn layer(&self, y: f64) -> usize {
        self.depths.iter().take_while(|&&d| y < -d).count()
    }

    pub fn incident(&self, x: f64, y: f64) -> Complex64 {
        if self.layer(y) == 0 {
            expi(Complex64::new(self.kx * x - self.ky * y, 0.0))
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn background(&self, x: f64, y: f64) -> Complex64 {
        let l = self.layer(y);
        let kx = Complex64::new(self.kx * x, 0.0);
        let k = self.kyl[l];
        let dl = if l < self.depths.len() { self.depths[l] } else { 0.0 };
        // A_l carries exp(2i k d_l); fold it so the exponent stays bounded
        let up = if self.a[l] == Complex64::new(0.0, 0.0) {
            Complex64::new(0.0, 0.0)
        } else {
            self.a[l] * expi(-k * (2.0 * dl)) * expi(kx + k * (y + 2.0 * dl))
        };
        let down = if l == 0 { Complex64::new(0.0, 0.0) } else { self.b[l] * expi(kx - k * y) };
        up + down
    }

    /// `d/dy` of the background field.
    pub fn background_dy(&self, x: f64, y: f64) -> Complex64 {
        let l = self.layer(y);
        let kx = Complex64::new(self.kx * x, 0.0);
        let k = self.kyl[l];
        let dl = if l < self.depths.len() { self.depths[l] } else { 0.0 };
        let up = self.a[l] * expi(-k * (2.0 * dl)) * expi(kx + k * (y + 2.0 * dl)) * I * k;
        let down = if l == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.b[l] * expi(kx - k * y) * (-I * k)
        };
        up + down
    }

    pub fn incident_dy(&self, x: f64, y: f64) -> Complex64 {
        self.incident(x, y) * Complex64::new(0.0, -self.ky)
    }

    /// Total field `u^inc + u^b`.
    pub fn total(&self, x: f64, y: f64) -> Complex64 {
        self.incident(x, y) + self.background(x, y)
    }
}
