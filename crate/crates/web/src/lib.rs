//! WebAssembly bindings for the browser demo.
//!
//! Every exported function takes plain numbers and strings and returns a
//! JSON document. The `*_impl` functions hold the logic and are tested
//! natively.

use std::sync::Arc;

use rotodyn::basis::{build_basis, Parity, SymmetryBlock};
use rotodyn::dynamics::{run, RunConfig};
use rotodyn::operators::{OperatorSet, RotationalConstants};
use rotodyn::propagator::SilControls;
use rotodyn::spectrum::{
    detect_crossings, label_by_field_free, log_grid, scan_intensity, StateLabel,
};
use rotodyn::units::{MoleculeSpec, PulseSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest J_max the page may request; keeps a propagation interactive.
pub const MAX_J: u32 = 20;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub labels: Vec<String>,
    pub intensities: Vec<f64>,
    /// `values[k][p]`: state `k` at grid point `p`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    #[serde(flatten)]
    pub curves: Curves,
    /// `(lower, upper, intensity)` of every gap minimum.
    pub crossings: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize)]
pub struct Propagation {
    pub t: Vec<f64>,
    pub intensity: Vec<f64>,
    pub cos_theta: Vec<f64>,
    pub labels: Vec<String>,
    pub populations: Vec<Vec<f64>>,
    pub steps: usize,
}

fn block(m: u32, k_parity: &str, sigma_parity: &str) -> Result<SymmetryBlock, String> {
    let k: Parity = k_parity
        .parse()
        .map_err(|e: rotodyn::Error| e.to_string())?;
    let sigma = if m == 0 {
        Some(
            sigma_parity
                .parse()
                .map_err(|e: rotodyn::Error| e.to_string())?,
        )
    } else {
        None
    };
    SymmetryBlock::new(m, k, sigma).map_err(|e| e.to_string())
}

fn checked_j(j_max: u32) -> Result<u32, String> {
    if j_max > MAX_J {
        return Err(format!("J_max is limited to {MAX_J} in the browser"));
    }
    Ok(j_max)
}

fn setup(
    m: u32,
    k_parity: &str,
    sigma_parity: &str,
    j_max: u32,
) -> Result<(MoleculeSpec, OperatorSet), String> {
    let mol = MoleculeSpec::benzonitrile();
    let basis = build_basis(block(m, k_parity, sigma_parity)?, checked_j(j_max)?)
        .map_err(|e| e.to_string())?;
    let ops = OperatorSet::for_molecule(Arc::new(basis), &mol);
    Ok((mol, ops))
}

/// Adiabatic energies (MHz) of the lowest `n_track` states of a block over
/// a log-spaced intensity grid.
#[allow(clippy::too_many_arguments)]
pub fn spectrum_impl(
    m: u32,
    k_parity: &str,
    sigma_parity: &str,
    es: f64,
    i_max: f64,
    points: usize,
    n_track: usize,
    j_max: u32,
) -> Result<Spectrum, String> {
    let (mol, ops) = setup(m, k_parity, sigma_parity, j_max)?;
    let grid = log_grid(i_max * 1e-3, i_max, points).map_err(|e| e.to_string())?;
    let scan = scan_intensity(&ops, &mol, es, &grid, n_track).map_err(|e| e.to_string())?;
    let values = (0..scan.n_track())
        .map(|k| scan.energies.iter().map(|e| e[k]).collect())
        .collect();
    Ok(Spectrum {
        crossings: detect_crossings(&scan)
            .iter()
            .map(|c| (c.lower, c.upper, c.i_star))
            .collect(),
        curves: Curves {
            labels: scan.labels.iter().map(|l| l.to_string()).collect(),
            intensities: scan.intensities,
            values,
        },
    })
}

/// ⟨cos θ⟩ of the adiabatic states along the same kind of grid.
#[allow(clippy::too_many_arguments)]
pub fn orientation_impl(
    m: u32,
    k_parity: &str,
    sigma_parity: &str,
    es: f64,
    i_max: f64,
    points: usize,
    n_track: usize,
    j_max: u32,
) -> Result<Curves, String> {
    let (mol, ops) = setup(m, k_parity, sigma_parity, j_max)?;
    let grid = log_grid(i_max * 1e-3, i_max, points).map_err(|e| e.to_string())?;
    let scan = scan_intensity(&ops, &mol, es, &grid, n_track).map_err(|e| e.to_string())?;
    let cos = ops.cos_theta();
    let values = (0..scan.n_track())
        .map(|k| {
            scan.vectors
                .iter()
                .map(|v| {
                    let c = v.column(k);
                    cos.bilinear(c.as_slice(), c.as_slice())
                })
                .collect()
        })
        .collect();
    Ok(Curves {
        labels: scan.labels.iter().map(|l| l.to_string()).collect(),
        intensities: scan.intensities,
        values,
    })
}

/// Propagates `label` through a pulse of FWHM `tau` ns up to its peak.
pub fn propagate_impl(
    label: &str,
    es: f64,
    i0: f64,
    tau: f64,
    j_max: u32,
    samples: usize,
) -> Result<Propagation, String> {
    let l: StateLabel = label.parse().map_err(|e: rotodyn::Error| e.to_string())?;
    let j_max = checked_j(j_max)?;
    let mol = MoleculeSpec::benzonitrile();
    let b = SymmetryBlock::all_for_m(l.m)
        .into_iter()
        .find(|&b| {
            build_basis(b, j_max).is_ok_and(|basis| {
                label_by_field_free(&basis, RotationalConstants::from(&mol)).contains(&l)
            })
        })
        .ok_or_else(|| format!("{l} is not a state with J <= {j_max}"))?;
    let pulse = PulseSpec::new(i0, tau).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(mol, b, l, es, pulse).map_err(|e| e.to_string())?;
    config.j_max = j_max;
    config.n_track = 6;
    config.sample_count = samples.clamp(2, 400);
    config.sil = SilControls::for_pulse(tau).map_err(|e| e.to_string())?;
    let traj = run(&config).map_err(|e| e.to_string())?;
    let n = traj.labels.len();
    Ok(Propagation {
        t: traj.samples.iter().map(|s| s.t).collect(),
        intensity: traj.samples.iter().map(|s| s.intensity).collect(),
        cos_theta: traj.samples.iter().map(|s| s.cos_theta).collect(),
        labels: traj.labels.iter().map(|l| l.to_string()).collect(),
        populations: (0..n)
            .map(|k| traj.samples.iter().map(|s| s.populations[k]).collect())
            .collect(),
        steps: traj.steps,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn spectrum(
    m: u32,
    k_parity: &str,
    sigma_parity: &str,
    es: f64,
    i_max: f64,
    points: usize,
    n_track: usize,
    j_max: u32,
) -> Result<String, JsError> {
    to_js(spectrum_impl(
        m,
        k_parity,
        sigma_parity,
        es,
        i_max,
        points,
        n_track,
        j_max,
    ))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn orientation(
    m: u32,
    k_parity: &str,
    sigma_parity: &str,
    es: f64,
    i_max: f64,
    points: usize,
    n_track: usize,
    j_max: u32,
) -> Result<String, JsError> {
    to_js(orientation_impl(
        m,
        k_parity,
        sigma_parity,
        es,
        i_max,
        points,
        n_track,
        j_max,
    ))
}

#[wasm_bindgen]
pub fn propagate(
    label: &str,
    es: f64,
    i0: f64,
    tau: f64,
    j_max: u32,
    samples: usize,
) -> Result<String, JsError> {
    to_js(propagate_impl(label, es, i0, tau, j_max, samples))
}
