//! The run configuration file.
//!
//! A TOML document with a top-level `schema_version` and the sections
//! `[molecule]`, `[block]`, `[dc]`, `[pulse]`, `[numerics]`, plus `[scan]`
//! for spectrum scans and `[sweep]` for parameter sweeps. Unknown keys are
//! rejected. Overrides of the form `section.key=value` are applied to the
//! parsed document before validation.

use std::path::Path;

use rotodyn::basis::{build_basis, Parity, SymmetryBlock};
use rotodyn::dynamics::{RunConfig, DEFAULT_J_MAX, DEFAULT_N_TRACK, DEFAULT_SAMPLES};
use rotodyn::operators::RotationalConstants;
use rotodyn::propagator::{default_dt_fs, SilControls};
use rotodyn::spectrum::{label_by_field_free, log_grid, StateLabel};
use rotodyn::units::{DcMode, DcSpec, MoleculeSpec, PulseSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_SCAN_POINTS: usize = 400;
const DEFAULT_SCAN_MIN: f64 = 1e9;
const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: Option<u32>,
    pub molecule: Option<MoleculeSection>,
    pub block: Option<BlockSection>,
    pub dc: Option<DcSection>,
    pub pulse: Option<PulseSection>,
    #[serde(default)]
    pub numerics: NumericsSection,
    pub scan: Option<ScanSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSection {
    /// Preset name, or a free name when all constants are given.
    pub name: Option<String>,
    pub b_x_mhz: Option<f64>,
    pub b_y_mhz: Option<f64>,
    pub b_z_mhz: Option<f64>,
    pub mu_debye: Option<f64>,
    pub alpha_xx_a3: Option<f64>,
    pub alpha_yy_a3: Option<f64>,
    pub alpha_zz_a3: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    pub m: Option<u32>,
    pub k_parity: Option<String>,
    pub sigma_parity: Option<String>,
    pub initial_state: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcSection {
    pub es_vcm: Option<f64>,
    /// `instantaneous` (default) or `ramp`.
    pub mode: Option<String>,
    pub ramp_rate_vcm_per_ns: Option<f64>,
    pub ramp_start_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub i0_wcm2: Option<f64>,
    pub tau_ns: Option<f64>,
    pub t_start_ns: Option<f64>,
    pub t_end_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub j_max: Option<u32>,
    pub n_track: Option<usize>,
    pub sample_count: Option<usize>,
    pub dt_fs: Option<f64>,
    pub min_krylov: Option<usize>,
    pub max_krylov: Option<usize>,
    pub step_error_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub i_min_wcm2: Option<f64>,
    pub i_max_wcm2: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub tau_ns: Option<Vec<f64>>,
    pub es_vcm: Option<Vec<f64>>,
    pub top_k: Option<usize>,
}

/// An intensity scan request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRequest {
    pub molecule: MoleculeSpec,
    pub block: SymmetryBlock,
    pub es: f64,
    pub j_max: u32,
    pub n_track: usize,
    pub grid: Vec<f64>,
}

/// Runs of a sweep, in the order they are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest {
    pub runs: Vec<RunConfig>,
    pub top_k: usize,
}

fn invalid(key: &str, constraint: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {constraint}"))
}

fn missing(key: &str) -> CliError {
    CliError::Validation(format!("missing required key `{key}`"))
}

fn required<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| missing(key))
}

fn parity(v: &Option<String>, key: &str) -> Result<Option<Parity>, CliError> {
    v.as_deref()
        .map(|s| s.parse::<Parity>().map_err(|e| invalid(key, e)))
        .transpose()
}

/// Sets `path` (dotted) in `table` to the TOML value `raw`. Unquoted text
/// that is not a TOML value, or that contains an underscore (state labels
/// such as `1_01_0`), is taken as a string.
fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<(), CliError> {
    let quoted = raw.starts_with(['"', '\'', '[']);
    let value = Some(raw)
        .filter(|r| quoted || !r.contains('_'))
        .and_then(|r| format!("v = {r}").parse::<toml::Table>().ok())
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Validation(format!(
            "malformed override key `{path}`"
        )));
    }
    let (last, parents) = keys.split_last().expect("split of a nonempty path");
    let mut node = table;
    for k in parents {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Validation(format!("override `{path}`: `{k}` is not a section"))
        })?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Parses `text` with `key=value` overrides applied, without validation.
pub fn parse_str(text: &str, overrides: &[String]) -> Result<FileConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        CliError::Validation(format!("config is not valid TOML: {e}"))
    })?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("override `{o}` is not of the form key=value"))
        })?;
        apply_override(&mut table, k.trim(), v.trim())?;
    }
    // Round-trip through text so that type errors point at the offending key.
    let text = toml::to_string(&table).expect("a parsed table serializes");
    let config: FileConfig =
        toml::from_str(&text).map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
    match config.schema_version {
        Some(SCHEMA_VERSION) => Ok(config),
        Some(v) => Err(invalid(
            "schema_version",
            format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
        )),
        None => Err(missing("schema_version")),
    }
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_str(&text, overrides)
}

impl FileConfig {
    pub fn molecule(&self) -> Result<MoleculeSpec, CliError> {
        let sec = self.molecule.clone().unwrap_or_default();
        let name = sec.name.clone().unwrap_or_else(|| "benzonitrile".into());
        let base = MoleculeSpec::preset(&name);
        let pick = |v: Option<f64>, key: &str, preset: Option<f64>| {
            v.or(preset).ok_or_else(|| {
                invalid(
                    &format!("molecule.{key}"),
                    format!("required for the custom molecule `{name}`"),
                )
            })
        };
        let b = base.as_ref();
        let mol = MoleculeSpec {
            name: name.clone(),
            b_x: pick(sec.b_x_mhz, "b_x_mhz", b.map(|m| m.b_x))?,
            b_y: pick(sec.b_y_mhz, "b_y_mhz", b.map(|m| m.b_y))?,
            b_z: pick(sec.b_z_mhz, "b_z_mhz", b.map(|m| m.b_z))?,
            mu: pick(sec.mu_debye, "mu_debye", b.map(|m| m.mu))?,
            alpha_xx: pick(sec.alpha_xx_a3, "alpha_xx_a3", b.map(|m| m.alpha_xx))?,
            alpha_yy: pick(sec.alpha_yy_a3, "alpha_yy_a3", b.map(|m| m.alpha_yy))?,
            alpha_zz: pick(sec.alpha_zz_a3, "alpha_zz_a3", b.map(|m| m.alpha_zz))?,
        };
        mol.validate().map_err(|e| invalid("molecule", e))?;
        Ok(mol)
    }

    pub fn block(&self) -> Result<SymmetryBlock, CliError> {
        let sec = self.block.clone().ok_or_else(|| missing("block"))?;
        let m = required(&sec.m, "block.m")?;
        let k =
            parity(&sec.k_parity, "block.k_parity")?.ok_or_else(|| missing("block.k_parity"))?;
        let s = parity(&sec.sigma_parity, "block.sigma_parity")?;
        if m == 0 && s.is_none() {
            return Err(missing("block.sigma_parity"));
        }
        SymmetryBlock::new(m, k, s).map_err(|e| invalid("block", e))
    }

    fn es(&self) -> Result<f64, CliError> {
        let es = required(&self.dc.as_ref().and_then(|d| d.es_vcm), "dc.es_vcm")?;
        if !(es >= 0.0) || !es.is_finite() {
            return Err(invalid(
                "dc.es_vcm",
                format!("DcSpec requires Es_max >= 0 (got {es})"),
            ));
        }
        Ok(es)
    }

    fn dc(&self, es: f64, pulse: &PulseSpec) -> Result<DcSpec, CliError> {
        let sec = self.dc.clone().unwrap_or_default();
        let mode = match sec.mode.as_deref().unwrap_or("instantaneous") {
            "instantaneous" => {
                if sec.ramp_rate_vcm_per_ns.is_some() || sec.ramp_start_ns.is_some() {
                    return Err(invalid(
                        "dc.mode",
                        "ramp keys given but mode is `instantaneous`",
                    ));
                }
                DcMode::Instantaneous
            }
            "ramp" => {
                let rate = required(&sec.ramp_rate_vcm_per_ns, "dc.ramp_rate_vcm_per_ns")?;
                // By default the ramp ends where the pulse window starts.
                let start = sec.ramp_start_ns.unwrap_or(pulse.t_start() - es / rate);
                DcMode::Ramp {
                    rate,
                    start_ns: start,
                }
            }
            other => {
                return Err(invalid(
                    "dc.mode",
                    format!("`{other}` is not one of instantaneous|ramp"),
                ))
            }
        };
        DcSpec::new(es, mode).map_err(|e| invalid("dc", e))
    }

    fn pulse_with(&self, tau: Option<f64>) -> Result<PulseSpec, CliError> {
        let sec = self.pulse.clone().ok_or_else(|| missing("pulse"))?;
        let i0 = required(&sec.i0_wcm2, "pulse.i0_wcm2")?;
        let tau = match tau {
            Some(t) => t,
            None => required(&sec.tau_ns, "pulse.tau_ns")?,
        };
        let p = PulseSpec::new(i0, tau).map_err(|e| invalid("pulse", e))?;
        if sec.t_start_ns.is_none() && sec.t_end_ns.is_none() {
            return Ok(p);
        }
        PulseSpec::with_window(
            i0,
            tau,
            sec.t_start_ns.unwrap_or(p.t_start()),
            sec.t_end_ns.unwrap_or(p.t_end()),
        )
        .map_err(|e| invalid("pulse", e))
    }

    pub fn pulse(&self) -> Result<PulseSpec, CliError> {
        self.pulse_with(None)
    }

    fn sil(&self, tau: f64) -> Result<SilControls, CliError> {
        let n = &self.numerics;
        let d = SilControls::default();
        let c = SilControls {
            dt_fs: n.dt_fs.unwrap_or_else(|| default_dt_fs(tau)),
            min_krylov: n.min_krylov.unwrap_or(d.min_krylov),
            max_krylov: n.max_krylov.unwrap_or(d.max_krylov),
            step_error_tol: n.step_error_tol.unwrap_or(d.step_error_tol),
        };
        c.validate().map_err(|e| invalid("numerics", e))?;
        Ok(c)
    }

    fn j_max(&self, block: SymmetryBlock) -> Result<u32, CliError> {
        let j = self.numerics.j_max.unwrap_or(DEFAULT_J_MAX);
        if j < block.m() {
            return Err(invalid(
                "numerics.j_max",
                format!("J_max = {j} is below |M| = {}", block.m()),
            ));
        }
        Ok(j)
    }

    fn run_config(&self, es: f64, tau: Option<f64>) -> Result<RunConfig, CliError> {
        let molecule = self.molecule()?;
        let block = self.block()?;
        let label_text = required(
            &self.block.as_ref().and_then(|b| b.initial_state.clone()),
            "block.initial_state",
        )?;
        let initial_label: StateLabel = label_text
            .parse()
            .map_err(|e| invalid("block.initial_state", e))?;
        let pulse = self.pulse_with(tau)?;
        let config = RunConfig {
            dc: self.dc(es, &pulse)?,
            sil: self.sil(pulse.tau())?,
            j_max: self.j_max(block)?,
            n_track: self.numerics.n_track.unwrap_or(DEFAULT_N_TRACK),
            sample_count: self.numerics.sample_count.unwrap_or(DEFAULT_SAMPLES),
            molecule,
            block,
            initial_label,
            pulse,
        };
        config.validate().map_err(|e| invalid("config", e))?;
        check_label(&config)?;
        Ok(config)
    }

    /// The single run described by the file.
    pub fn run(&self) -> Result<RunConfig, CliError> {
        self.run_config(self.es()?, None)
    }

    pub fn scan(&self) -> Result<ScanRequest, CliError> {
        let block = self.block()?;
        let sec = self.scan.clone().unwrap_or_default();
        let i_max = match sec.i_max_wcm2 {
            Some(i) => i,
            None => required(
                &self.pulse.as_ref().and_then(|p| p.i0_wcm2),
                "scan.i_max_wcm2",
            )?,
        };
        let i_min = sec.i_min_wcm2.unwrap_or(DEFAULT_SCAN_MIN);
        let points = sec.points.unwrap_or(DEFAULT_SCAN_POINTS);
        if !(i_min > 0.0 && i_max > i_min) {
            return Err(invalid(
                "scan",
                format!("need 0 < i_min_wcm2 < i_max_wcm2 (got {i_min}, {i_max})"),
            ));
        }
        let grid = log_grid(i_min, i_max, points).map_err(|e| invalid("scan.points", e))?;
        let n_track = self.numerics.n_track.unwrap_or(DEFAULT_N_TRACK);
        if n_track < 2 {
            return Err(invalid(
                "numerics.n_track",
                "a scan needs at least 2 tracked states",
            ));
        }
        Ok(ScanRequest {
            molecule: self.molecule()?,
            block,
            es: self.es()?,
            j_max: self.j_max(block)?,
            n_track,
            grid,
        })
    }

    pub fn sweep(&self) -> Result<SweepRequest, CliError> {
        let sec = self.sweep.clone().ok_or_else(|| missing("sweep"))?;
        let taus = sec
            .tau_ns
            .clone()
            .map(|v| v.into_iter().map(Some).collect())
            .unwrap_or(vec![None]);
        let fields = match sec.es_vcm.clone() {
            Some(v) => v,
            None => vec![self.es()?],
        };
        if sec.tau_ns.is_none() && sec.es_vcm.is_none() {
            return Err(invalid("sweep", "give tau_ns and/or es_vcm lists"));
        }
        let mut runs = Vec::new();
        for &es in &fields {
            if !(es >= 0.0) || !es.is_finite() {
                return Err(invalid(
                    "sweep.es_vcm",
                    format!("DcSpec requires Es_max >= 0 (got {es})"),
                ));
            }
            for &tau in &taus {
                runs.push(self.run_config(es, tau)?);
            }
        }
        Ok(SweepRequest {
            runs,
            top_k: sec.top_k.unwrap_or(DEFAULT_TOP_K),
        })
    }

    /// The file with every default made explicit, for a given subcommand's
    /// resolved run (if any).
    pub fn effective(&self, run: Option<&RunConfig>, scan: Option<&ScanRequest>) -> FileConfig {
        let mut out = self.clone();
        out.schema_version = Some(SCHEMA_VERSION);
        if let Some(mol) = run.map(|r| &r.molecule).or(scan.map(|s| &s.molecule)) {
            out.molecule = Some(MoleculeSection {
                name: Some(mol.name.clone()),
                b_x_mhz: Some(mol.b_x),
                b_y_mhz: Some(mol.b_y),
                b_z_mhz: Some(mol.b_z),
                mu_debye: Some(mol.mu),
                alpha_xx_a3: Some(mol.alpha_xx),
                alpha_yy_a3: Some(mol.alpha_yy),
                alpha_zz_a3: Some(mol.alpha_zz),
            });
        }
        if let Some(r) = run {
            let n = &mut out.numerics;
            n.j_max = Some(r.j_max);
            n.n_track = Some(r.n_track);
            n.sample_count = Some(r.sample_count);
            n.dt_fs = Some(r.sil.dt_fs);
            n.min_krylov = Some(r.sil.min_krylov);
            n.max_krylov = Some(r.sil.max_krylov);
            n.step_error_tol = Some(r.sil.step_error_tol);
            let p = out.pulse.get_or_insert_with(Default::default);
            p.t_start_ns = Some(r.pulse.t_start());
            p.t_end_ns = Some(r.pulse.t_end());
            let d = out.dc.get_or_insert_with(Default::default);
            match r.dc.mode() {
                DcMode::Instantaneous => d.mode = Some("instantaneous".into()),
                DcMode::Ramp { rate, start_ns } => {
                    d.mode = Some("ramp".into());
                    d.ramp_rate_vcm_per_ns = Some(rate);
                    d.ramp_start_ns = Some(start_ns);
                }
            }
        }
        if let Some(s) = scan {
            out.numerics.j_max = Some(s.j_max);
            out.numerics.n_track = Some(s.n_track);
            out.scan = Some(ScanSection {
                i_min_wcm2: Some(s.grid[0]),
                i_max_wcm2: Some(*s.grid.last().expect("nonempty grid")),
                points: Some(s.grid.len()),
            });
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Checks that the initial state exists in the block below J_max.
fn check_label(config: &RunConfig) -> Result<(), CliError> {
    let basis = build_basis(config.block, config.j_max).map_err(|e| invalid("block", e))?;
    let labels = label_by_field_free(&basis, RotationalConstants::from(&config.molecule));
    match labels.iter().position(|&l| l == config.initial_label) {
        None => Err(invalid(
            "block.initial_state",
            format!(
                "{} is not a state of the {} block",
                config.initial_label, config.block
            ),
        )),
        Some(rank) if rank >= config.n_track.min(labels.len()) => Err(invalid(
            "numerics.n_track",
            format!(
                "{} is state {rank} of its block; n_track = {} must exceed it",
                config.initial_label, config.n_track
            ),
        )),
        Some(_) => Ok(()),
    }
}
