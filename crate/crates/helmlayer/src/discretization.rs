//! Lowest-order Nyström discretization: midpoint collocation, piecewise
//! constant densities, analytic self term.
//!
//! Unknowns are `Φ_i = η_l φ_i`, ordered layer-major as in [`PanelMesh`].
//! Row `i` of the system reads `Σ_e G_{l_e l_i}(c_e, c_i) |Γ_e| Φ_e = η_{l_i} g(c_i)`.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::geometry::PanelMesh;
use crate::layered_media::PlaneWaveField;
use crate::sommerfeld::SommerfeldRule;
use crate::special_functions::EULER_GAMMA;

const PI: f64 = core::f64::consts::PI;

/// Integral of `(i/4) H_0(k|r - c|)` over a flat panel of length `len` centred at `c`.
pub fn free_self_term(k: f64, len: f64) -> Complex64 {
    let re = -(EULER_GAMMA + libm::log(k * len / 4.0) - 1.0) / (2.0 * PI);
    Complex64::new(re, 0.25) * len
}

pub fn diagonal_entry(len: f64, k: f64, reaction: Complex64) -> Complex64 {
    reaction * len + free_self_term(k, len)
}

/// Dirichlet data of the scattering problem.
#[derive(Debug, Clone)]
pub enum Excitation {
    /// Sound-soft scattering of a plane wave: `g = -(u^inc + u^b)`.
    PlaneWave(PlaneWaveField),
    /// Manufactured solution `u^s = G_{l0}(r, src)` from an interior point.
    PointSource([f64; 2]),
}

impl Excitation {
    /// `g(r)` at a point of the boundary.
    pub fn data(&self, rule: &SommerfeldRule, r: [f64; 2]) -> Complex64 {
        match self {
            Excitation::PlaneWave(f) => -f.total(r[0], r[1]),
            Excitation::PointSource(s) => rule.layered_green(r, *s),
        }
    }

    /// Exact scattered field where known.
    pub fn exact(&self, rule: &SommerfeldRule, r: [f64; 2]) -> Option<Complex64> {
        match self {
            Excitation::PlaneWave(_) => None,
            Excitation::PointSource(s) => Some(rule.layered_green(r, *s)),
        }
    }
}

pub fn rhs(mesh: &PanelMesh, rule: &SommerfeldRule, ex: &Excitation) -> Vec<Complex64> {
    let stack = rule.stack();
    mesh.panels.iter().map(|p| ex.data(rule, p.center) * stack.eta(p.layer)).collect()
}

/// Entry `K_{ie}`: collocation row `i`, density column `e`.
pub fn kernel_entry(mesh: &PanelMesh, rule: &SommerfeldRule, i: usize, e: usize) -> Complex64 {
    let pi = &mesh.panels[i];
    if i == e {
        let g = rule.reaction_green(pi.center, pi.center);
        return diagonal_entry(pi.length, rule.stack().k(pi.layer), g);
    }
    let pe = &mesh.panels[e];
    rule.layered_green(pe.center, pi.center) * pe.length
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseError {
    TooLarge { n: usize, cap: usize },
}

impl core::fmt::Display for DenseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DenseError::TooLarge { n, cap } => write!(f, "dense oracle capped at {cap} unknowns, got {n}"),
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub const DENSE_CAP: usize = 6000;

pub fn dense_row(mesh: &PanelMesh, rule: &SommerfeldRule, i: usize) -> Vec<Complex64> {
    (0..mesh.len()).map(|e| kernel_entry(mesh, rule, i, e)).collect()
}

pub fn assemble_dense(mesh: &PanelMesh, rule: &SommerfeldRule, cap: usize) -> Result<DenseMatrix, DenseError> {
    let n = mesh.len();
    if n > cap {
        return Err(DenseError::TooLarge { n, cap });
    }
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        data.extend(dense_row(mesh, rule, i));
    }
    Ok(DenseMatrix { n, data })
}

pub fn dense_matvec(k: &DenseMatrix, phi: &[Complex64]) -> Vec<Complex64> {
    (0..k.n).map(|i| row_dot(k.row(i), phi)).collect()
}

pub fn row_dot(row: &[Complex64], v: &[Complex64]) -> Complex64 {
    row.iter().zip(v).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
}

/// Dense product restricted to `rows`, assembled on the fly.
pub fn dense_matvec_rows(mesh: &PanelMesh, rule: &SommerfeldRule, phi: &[Complex64], rows: &[usize]) -> Vec<Complex64> {
    rows.iter().map(|&i| row_dot(&dense_row(mesh, rule, i), phi)).collect()
}

/// Scattered field at `r` by direct summation.
pub fn scattered_field(mesh: &PanelMesh, rule: &SommerfeldRule, phi: &[Complex64], r: [f64; 2]) -> Complex64 {
    let stack = rule.stack();
    let eta_r = stack.eta(stack.layer_of(r[1]));
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, f) in mesh.panels.iter().zip(phi) {
        acc += rule.layered_green(p.center, r) * (f * p.length);
    }
    acc / eta_r
}
