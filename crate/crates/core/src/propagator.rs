//! Short iterative Lanczos propagation of `i dψ/dt = 2π H ψ` (H in MHz).
//!
//! Each step builds a Krylov basis from ψ with full reorthogonalization,
//! exponentiates the small tridiagonal matrix through its eigendecomposition
//! and grows the order until the last Krylov coefficient of the propagated
//! vector drops below the tolerance.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::sparse::SymmetricMatrix;
use crate::units::{CYCLES_PER_MHZ_NS, FS_PER_NS};

const BREAKDOWN: f64 = 1e-14;

/// Coefficients of a state in the primitive basis of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    basis: Arc<Basis>,
    coefficients: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(basis: Arc<Basis>, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::Usage(format!(
                "{} coefficients for a basis of {} functions",
                coefficients.len(),
                basis.len()
            )));
        }
        Ok(WaveFunction {
            basis,
            coefficients,
        })
    }

    pub fn from_real(basis: Arc<Basis>, v: &[f64]) -> Result<Self> {
        Self::new(basis, v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coefficients)
    }

    /// `⟨v|ψ⟩` for a real vector `v`.
    pub fn overlap_real(&self, v: &[f64]) -> Complex64 {
        self.coefficients.iter().zip(v).map(|(c, &x)| c * x).sum()
    }
}

/// Controls of the short iterative Lanczos integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilControls {
    /// Time step in fs.
    pub dt_fs: f64,
    pub min_krylov: usize,
    pub max_krylov: usize,
    pub step_error_tol: f64,
}

impl SilControls {
    pub fn new(dt_fs: f64) -> Result<Self> {
        let c = SilControls {
            dt_fs,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    /// Default step for a pulse of FWHM `tau_ns`; see [`default_dt_fs`].
    pub fn for_pulse(tau_ns: f64) -> Result<Self> {
        Self::new(default_dt_fs(tau_ns))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_fs > 0.0) || !self.dt_fs.is_finite() {
            return Err(Error::invalid(
                "SilControls",
                format!("dt must be > 0 (got {})", self.dt_fs),
            ));
        }
        if self.min_krylov < 2 || self.min_krylov > self.max_krylov {
            return Err(Error::invalid(
                "SilControls",
                format!(
                    "need 2 <= min_krylov <= max_krylov (got {} and {})",
                    self.min_krylov, self.max_krylov
                ),
            ));
        }
        if !(self.step_error_tol > 0.0) {
            return Err(Error::invalid(
                "SilControls",
                format!("step_error_tol must be > 0 (got {})", self.step_error_tol),
            ));
        }
        Ok(())
    }
}

impl Default for SilControls {
    fn default() -> Self {
        SilControls {
            dt_fs: 3.5,
            min_krylov: 4,
            max_krylov: 25,
            step_error_tol: 1e-9,
        }
    }
}

/// Step (fs) for a pulse of FWHM `tau_ns`: linear between 3.5 fs at 0.5 ns
/// and 150 fs at 20 ns, proportional to τ below and constant above.
pub fn default_dt_fs(tau_ns: f64) -> f64 {
    const SHORT: (f64, f64) = (0.5, 3.5);
    const LONG: (f64, f64) = (20.0, 150.0);
    if tau_ns <= SHORT.0 {
        SHORT.1 * tau_ns / SHORT.0
    } else if tau_ns >= LONG.0 {
        LONG.1
    } else {
        SHORT.1 + (tau_ns - SHORT.0) * (LONG.1 - SHORT.1) / (LONG.0 - SHORT.0)
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// Time at the start of the step (ns).
    pub t: f64,
    pub order: usize,
    pub error: f64,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Reusable Krylov workspace.
#[derive(Debug, Clone)]
pub struct Lanczos {
    basis: Vec<Vec<Complex64>>,
    w: Vec<Complex64>,
}

impl Lanczos {
    pub fn new(dim: usize, max_krylov: usize) -> Self {
        Lanczos {
            basis: (0..max_krylov)
                .map(|_| vec![Complex64::new(0.0, 0.0); dim])
                .collect(),
            w: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    /// Advances `psi` by `dt_fs` under the static `h`, in place.
    pub fn step(
        &mut self,
        h: &SymmetricMatrix,
        psi: &mut [Complex64],
        dt_fs: f64,
        controls: &SilControls,
    ) -> Result<(usize, f64)> {
        let dim = psi.len();
        if h.dim() != dim {
            return Err(Error::Usage(format!(
                "Hamiltonian of dimension {} applied to a vector of length {dim}",
                h.dim()
            )));
        }
        if self.basis.len() < controls.max_krylov || self.w.len() != dim {
            *self = Lanczos::new(dim, controls.max_krylov);
        }
        if dt_fs == 0.0 {
            return Ok((0, 0.0));
        }
        let n0 = norm(psi);
        if n0 == 0.0 {
            return Ok((0, 0.0));
        }
        // Phase per MHz over the step.
        let omega = 2.0 * PI * CYCLES_PER_MHZ_NS * dt_fs / FS_PER_NS;
        let max_k = controls.max_krylov.min(dim.max(1));
        let min_k = controls.min_krylov.min(max_k);

        for (b, p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *b = p / n0;
        }
        let mut alpha: Vec<f64> = Vec::with_capacity(max_k);
        let mut beta: Vec<f64> = Vec::with_capacity(max_k);
        let mut coeffs: Vec<Complex64> = Vec::new();
        let mut error = f64::INFINITY;
        let mut order = 0;
        for k in 0..max_k {
            h.apply(&self.basis[k], &mut self.w);
            let a = dot(&self.basis[k], &self.w).re;
            alpha.push(a);
            // Full reorthogonalization (two passes of classical Gram–Schmidt).
            for _ in 0..2 {
                for i in 0..=k {
                    let c = dot(&self.basis[i], &self.w);
                    for (wj, vj) in self.w.iter_mut().zip(&self.basis[i]) {
                        *wj -= c * vj;
                    }
                }
            }
            let b = norm(&self.w);
            order = k + 1;
            let breakdown = b < BREAKDOWN * (1.0 + a.abs());
            if order >= min_k || breakdown || order == max_k {
                coeffs = tridiagonal_exponential(&alpha, &beta, omega);
                error = coeffs.last().map_or(0.0, |c| c.norm());
                if breakdown {
                    error = 0.0;
                }
                if error <= controls.step_error_tol {
                    break;
                }
            }
            if breakdown || order == max_k {
                break;
            }
            beta.push(b);
            for (v, wj) in self.basis[k + 1].iter_mut().zip(&self.w) {
                *v = wj / b;
            }
        }
        if error > controls.step_error_tol {
            return Err(Error::StepRejected {
                t_ns: f64::NAN,
                reason: format!(
                    "Krylov order {order} reached with error estimate {error:.3e} above {:.1e}; reduce dt",
                    controls.step_error_tol
                ),
            });
        }
        psi.iter_mut().for_each(|p| *p = Complex64::new(0.0, 0.0));
        for (c, v) in coeffs.iter().zip(&self.basis) {
            let c = c * n0;
            for (p, vj) in psi.iter_mut().zip(v) {
                *p += c * vj;
            }
        }
        Ok((order, error))
    }
}

/// `exp(−iωT) e₁` for the symmetric tridiagonal `T` with diagonal `alpha`
/// and off-diagonal `beta`.
fn tridiagonal_exponential(alpha: &[f64], beta: &[f64], omega: f64) -> Vec<Complex64> {
    let n = alpha.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (0..n)
        .map(|r| {
            (0..n)
                .map(|s| {
                    let u = eig.eigenvectors[(r, s)] * eig.eigenvectors[(0, s)];
                    Complex64::from_polar(u, -omega * eig.eigenvalues[s])
                })
                .sum()
        })
        .collect()
}

/// One SIL step of `psi` under the static `h`.
pub fn sil_step(
    h: &SymmetricMatrix,
    psi: &WaveFunction,
    controls: &SilControls,
) -> Result<(WaveFunction, usize, f64)> {
    controls.validate()?;
    let mut out = psi.clone();
    let mut ws = Lanczos::new(psi.coefficients.len(), controls.max_krylov);
    let (order, err) = ws.step(h, &mut out.coefficients, controls.dt_fs, controls)?;
    Ok((out, order, err))
}

/// Supplies `H(t)` by overwriting a matrix that has the operator pattern.
pub trait HamiltonianProvider {
    fn assign(&self, t_ns: f64, out: &mut SymmetricMatrix) -> Result<()>;
    fn template(&self) -> SymmetricMatrix;
}

/// A time-independent Hamiltonian.
#[derive(Debug, Clone)]
pub struct StaticHamiltonian(pub SymmetricMatrix);

impl HamiltonianProvider for StaticHamiltonian {
    fn assign(&self, _t_ns: f64, out: &mut SymmetricMatrix) -> Result<()> {
        out.values_mut().copy_from_slice(self.0.values());
        Ok(())
    }

    fn template(&self) -> SymmetricMatrix {
        self.0.clone()
    }
}

/// Fixed-step propagation with the Hamiltonian taken at each step midpoint.
///
/// The last step is shortened to land exactly on `t1`. `on_step` receives a
/// record for every accepted step. Propagation backwards in time (`t1 < t0`)
/// uses negative steps.
pub fn propagate_window<P: HamiltonianProvider>(
    provider: &P,
    psi: &mut WaveFunction,
    t0: f64,
    t1: f64,
    controls: &SilControls,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<usize> {
    controls.validate()?;
    if t0 == t1 {
        return Ok(0);
    }
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::Domain("propagation window must be finite".into()));
    }
    let dt_ns = controls.dt_fs / FS_PER_NS * (t1 - t0).signum();
    let span = t1 - t0;
    let n_full = (span / dt_ns).floor() as usize;
    let mut h = provider.template();
    let mut ws = Lanczos::new(psi.coefficients.len(), controls.max_krylov);
    let mut steps = 0;
    let mut k = 0usize;
    loop {
        let t = t0 + k as f64 * dt_ns;
        let remaining = t1 - t;
        if remaining * span.signum() <= 1e-12 * span.abs() {
            break;
        }
        let this = if k < n_full { dt_ns } else { remaining };
        provider.assign(t + 0.5 * this, &mut h)?;
        let (order, error) = ws
            .step(&h, &mut psi.coefficients, this * FS_PER_NS, controls)
            .map_err(|e| match e {
                Error::StepRejected { reason, .. } => Error::StepRejected { t_ns: t, reason },
                other => other,
            })?;
        on_step(&StepRecord { t, order, error });
        steps += 1;
        k += 1;
        if k > n_full {
            break;
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, Parity, SymmetryBlock};
    use approx::assert_relative_eq;

    fn toy_basis(n: usize) -> Arc<Basis> {
        // Any basis of the requested length works for raw vector tests.
        let mut j = 0;
        loop {
            let b = build_basis(SymmetryBlock::with_m(1, Parity::Odd), j.max(1)).unwrap();
            if b.len() >= n {
                assert_eq!(b.len(), n, "pick n matching a basis size");
                return Arc::new(b);
            }
            j += 1;
        }
    }

    #[test]
    fn default_dt_schedule() {
        assert_relative_eq!(default_dt_fs(0.5), 3.5);
        assert_relative_eq!(default_dt_fs(0.25), 1.75);
        assert_relative_eq!(default_dt_fs(10.25), 76.75);
        assert_eq!(default_dt_fs(20.0), 150.0);
        assert_eq!(default_dt_fs(40.0), 150.0);
        assert!(SilControls::new(-1.0).is_err());
        let bad = SilControls {
            min_krylov: 30,
            ..SilControls::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn diagonal_hamiltonian_phases() {
        let basis = toy_basis(2);
        let energies = [1234.5, -987.0];
        let h =
            SymmetricMatrix::from_triplets(2, [(0, 0, energies[0]), (1, 1, energies[1])]).unwrap();
        let psi = WaveFunction::new(
            basis,
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
        )
        .unwrap();
        let c = SilControls::new(50.0).unwrap();
        let (out, _, _) = sil_step(&h, &psi, &c).unwrap();
        for (k, e) in energies.iter().enumerate().take(2) {
            let phase = -2.0 * PI * e * 50.0 * 1e-9;
            let expected = psi.coefficients()[k] * Complex64::from_polar(1.0, phase);
            assert!((out.coefficients()[k] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let basis = toy_basis(2);
        let h = SymmetricMatrix::from_triplets(2, [(0, 0, 0.0), (1, 1, 0.0)]).unwrap();
        let psi = WaveFunction::new(
            basis,
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
        )
        .unwrap();
        let (out, _, _) = sil_step(&h, &psi, &SilControls::default()).unwrap();
        assert_eq!(out.coefficients(), psi.coefficients());
    }

    #[test]
    fn zero_length_window() {
        let basis = toy_basis(2);
        let h = SymmetricMatrix::from_triplets(2, [(0, 1, 1e3)]).unwrap();
        let mut psi = WaveFunction::new(
            basis,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let before = psi.clone();
        let n = propagate_window(
            &StaticHamiltonian(h),
            &mut psi,
            0.3,
            0.3,
            &SilControls::default(),
            |_| {},
        )
        .unwrap();
        assert_eq!(n, 0);
        assert_eq!(psi, before);
    }

    #[test]
    fn window_lands_on_end() {
        let basis = toy_basis(2);
        let h = SymmetricMatrix::from_triplets(2, [(0, 1, 1e3)]).unwrap();
        let mut psi = WaveFunction::new(
            basis,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let mut last = 0.0;
        let c = SilControls::new(7.0).unwrap();
        let n = propagate_window(&StaticHamiltonian(h), &mut psi, 0.0, 0.0001, &c, |r| {
            last = r.t
        })
        .unwrap();
        // 100 fs in 7 fs steps: 14 full steps and one of 2 fs.
        assert_eq!(n, 15);
        assert_relative_eq!(last, 14.0 * 7e-6, max_relative = 1e-12);
    }

    #[test]
    fn rejected_step_reports_time() {
        let basis = toy_basis(4);
        let h = SymmetricMatrix::from_triplets(
            4,
            [
                (0, 0, 1e7),
                (0, 1, 3e6),
                (1, 1, -2e6),
                (1, 2, 5e6),
                (2, 2, 4e6),
                (2, 3, 1e6),
                (3, 3, -1e6),
            ],
        )
        .unwrap();
        let mut psi = WaveFunction::new(basis, vec![Complex64::new(0.5, 0.0); 4]).unwrap();
        let c = SilControls {
            dt_fs: 100.0,
            min_krylov: 2,
            max_krylov: 2,
            step_error_tol: 1e-12,
        };
        let err =
            propagate_window(&StaticHamiltonian(h), &mut psi, 1.0, 1.001, &c, |_| {}).unwrap_err();
        match err {
            Error::StepRejected { t_ns, .. } => assert_eq!(t_ns, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
