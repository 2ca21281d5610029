//! Integer-order Bessel and Hankel functions of real positive argument.
//!
//! `J_0, J_1, Y_0, Y_1` come from `libm` (musl/fdlibm rational fits). Whole
//! sequences `J_0..J_n` use Miller's backward recurrence normalised by
//! `J_0 + 2 sum J_2k = 1`; `Y_n` uses forward recurrence, which is stable.

use num_complex::Complex64;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Default largest order accepted by the scalar entry points.
pub const ORDER_CAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BesselError {
    /// Argument must be strictly positive.
    Domain(f64),
    /// `|n|` above [`ORDER_CAP`].
    OrderCap(i32),
}

impl core::fmt::Display for BesselError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BesselError::Domain(x) => write!(f, "bessel argument must be > 0, got {x}"),
            BesselError::OrderCap(n) => write!(f, "bessel order {n} exceeds cap {ORDER_CAP}"),
        }
    }
}

fn check(n: i32, x: f64) -> Result<(), BesselError> {
    if !(x > 0.0) {
        return Err(BesselError::Domain(x));
    }
    if n.unsigned_abs() as usize > ORDER_CAP {
        return Err(BesselError::OrderCap(n));
    }
    Ok(())
}

#[inline]
fn parity(n: i32) -> f64 {
    if n & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn bessel_j(n: i32, x: f64) -> Result<f64, BesselError> {
    check(n, x)?;
    let m = n.unsigned_abs() as usize;
    let v = match m {
        0 => libm::j0(x),
        1 => libm::j1(x),
        _ => {
            let mut buf = alloc::vec![0.0; m + 1];
            bessel_j_seq(x, &mut buf);
            buf[m]
        }
    };
    Ok(if n < 0 { parity(n) * v } else { v })
}

pub fn bessel_y(n: i32, x: f64) -> Result<f64, BesselError> {
    check(n, x)?;
    let m = n.unsigned_abs() as usize;
    let mut buf = alloc::vec![0.0; m + 1];
    bessel_y_seq(x, &mut buf);
    Ok(if n < 0 { parity(n) * buf[m] } else { buf[m] })
}

pub fn hankel1(n: i32, x: f64) -> Result<Complex64, BesselError> {
    Ok(Complex64::new(bessel_j(n, x)?, bessel_y(n, x)?))
}

/// Fills `out[n] = J_n(x)` for `n = 0..out.len()`. Accepts `x = 0`.
pub fn bessel_j_seq(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let nmax = out.len() - 1;
    if x == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let x = libm::fabs(x);
    if (nmax as f64) < x {
        // forward recurrence is stable while n < x
        out[0] = libm::j0(x);
        if nmax >= 1 {
            out[1] = libm::j1(x);
        }
        for n in 1..nmax {
            out[n + 1] = 2.0 * n as f64 / x * out[n] - out[n - 1];
        }
        return;
    }
    let top = (nmax as f64).max(x);
    let mut start = (top + 20.0 + libm::sqrt(160.0 * top)) as usize;
    start += start & 1;
    let mut jp = 0.0f64;
    let mut j = 1e-300f64;
    let mut sum = 0.0f64;
    out.fill(0.0);
    for k in (1..=start).rev() {
        // j holds J_k, jp holds J_{k+1}
        let jm = 2.0 * k as f64 / x * j - jp;
        jp = j;
        j = jm;
        if k - 1 <= nmax {
            out[k - 1] = j;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            sum += 2.0 * j;
        }
        if libm::fabs(j) > 1e200 {
            j *= 1e-200;
            jp *= 1e-200;
            sum *= 1e-200;
            for v in out.iter_mut() {
                *v *= 1e-200;
            }
        }
    }
    sum += j;
    let scale = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= scale;
    }
}

/// Fills `out[n] = Y_n(x)` for `n = 0..out.len()`; `x > 0`.
pub fn bessel_y_seq(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = libm::y0(x);
    if out.len() > 1 {
        out[1] = libm::y1(x);
    }
    for n in 1..out.len().saturating_sub(1) {
        out[n + 1] = 2.0 * n as f64 / x * out[n] - out[n - 1];
    }
}

/// Fills `out[n] = H^(1)_n(x)` for `n = 0..out.len()`; `x > 0`.
pub fn hankel1_seq(x: f64, jbuf: &mut [f64], ybuf: &mut [f64], out: &mut [Complex64]) {
    bessel_j_seq(x, jbuf);
    bessel_y_seq(x, ybuf);
    for ((o, &j), &y) in out.iter_mut().zip(jbuf.iter()).zip(ybuf.iter()) {
        *o = Complex64::new(j, y);
    }
}

/// `H_0^(1)(x)` without the sequence machinery.
#[inline]
pub fn hankel0(x: f64) -> Complex64 {
    Complex64::new(libm::j0(x), libm::y0(x))
}

#[inline]
pub fn hankel1_1(x: f64) -> Complex64 {
    Complex64::new(libm::j1(x), libm::y1(x))
}
