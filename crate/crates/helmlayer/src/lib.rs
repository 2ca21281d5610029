//! Sound-soft scattering in 2D multilayered media: layered Green's function,
//! Nyström discretization, Sommerfeld-integral FMM and a preconditioned GMRES.
#![no_std]

extern crate alloc;

pub mod geometry;
pub mod discretization;
pub mod fmm;
pub mod layered_media;
pub mod solver;
pub mod sommerfeld;
pub mod special_functions;

pub use num_complex::Complex64;
