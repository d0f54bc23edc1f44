//! Angular-quadrature reference for operator matrix elements.
//!
//! Integrates the explicit symmetric-top wavefunctions over the Euler angles
//! with Gauss–Legendre nodes in cos θ and uniform grids in φ and χ. It shares
//! no code with the 3j-based builders in [`crate::operators`] and is used to
//! verify them.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;

use crate::basis::BasisFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngularOperator {
    CosTheta,
    Cos2Theta,
    Sin2ThetaSin2Chi,
}

impl AngularOperator {
    fn eval(self, cos_t: f64, chi: f64) -> f64 {
        match self {
            AngularOperator::CosTheta => cos_t,
            AngularOperator::Cos2Theta => cos_t * cos_t,
            AngularOperator::Sin2ThetaSin2Chi => (1.0 - cos_t * cos_t) * chi.sin().powi(2),
        }
    }
}

impl FromStr for AngularOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" | "cos_theta" => Ok(AngularOperator::CosTheta),
            "cos2" | "cos2_theta" => Ok(AngularOperator::Cos2Theta),
            "sin2sin2" | "sin2theta_sin2chi" => Ok(AngularOperator::Sin2ThetaSin2Chi),
            other => Err(Error::Domain(format!(
                "unsupported operator kind `{other}`"
            ))),
        }
    }
}

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Wigner small-d `d^j_{m'm}(β)` from the explicit sum formula.
pub fn wigner_small_d(j: i64, mp: i64, m: i64, beta: f64) -> f64 {
    if mp.abs() > j || m.abs() > j {
        return 0.0;
    }
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let pre = (factorial(j + mp) * factorial(j - mp) * factorial(j + m) * factorial(j - m)).sqrt();
    let s_min = 0.max(m - mp);
    let s_max = (j + m).min(j - mp);
    let mut sum = 0.0;
    for k in s_min..=s_max {
        let sign = if (mp - m + k) % 2 == 0 { 1.0 } else { -1.0 };
        let den =
            factorial(j + m - k) * factorial(k) * factorial(mp - m + k) * factorial(j - mp - k);
        sum +=
            sign / den * c.powi((2 * j + m - mp - 2 * k) as i32) * s.powi((mp - m + 2 * k) as i32);
    }
    pre * sum
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Symmetric-top wavefunction `√((2J+1)/8π²)·D^{J*}_{MK}(φ,θ,χ)`.
fn symmetric_top(j: u32, k: i32, m: u32, phi: f64, theta: f64, chi: f64) -> Complex64 {
    let norm = ((2 * j + 1) as f64 / (8.0 * PI * PI)).sqrt();
    let d = wigner_small_d(j as i64, m as i64, k as i64, theta);
    // D* = e^{+iMφ} d e^{+iKχ}.
    norm * d * Complex64::from_polar(1.0, m as f64 * phi + k as f64 * chi)
}

fn wavefunction(f: &BasisFunction, phi: f64, theta: f64, chi: f64) -> Complex64 {
    f.components()
        .map(|(k, c)| c * symmetric_top(f.j, k, f.m, phi, theta, chi))
        .sum()
}

/// `⟨bra|op|ket⟩` by direct quadrature over the Euler angles.
pub fn quadrature_oracle(
    op: AngularOperator,
    bra: &BasisFunction,
    ket: &BasisFunction,
) -> Complex64 {
    let j_max = bra.j.max(ket.j) as usize;
    let (nodes, weights) = gauss_legendre(2 * j_max + 8);
    let n_chi = 4 * j_max + 12;
    let n_phi = 2 * (bra.m.max(ket.m) as usize) + 4;
    let d_chi = 2.0 * PI / n_chi as f64;
    let d_phi = 2.0 * PI / n_phi as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x, &wx) in nodes.iter().zip(&weights) {
        let theta = x.acos();
        for ic in 0..n_chi {
            let chi = ic as f64 * d_chi;
            let f = op.eval(x, chi);
            for ip in 0..n_phi {
                let phi = ip as f64 * d_phi;
                let b = wavefunction(bra, phi, theta, chi);
                let k = wavefunction(ket, phi, theta, chi);
                sum += b.conj() * f * k * wx;
            }
        }
    }
    sum * d_chi * d_phi
}
