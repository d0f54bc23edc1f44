//! The subcommands. Each writes its artifacts into the output directory and
//! returns the warnings it collected.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use log::{info, warn};
use rayon::prelude::*;
use rotodyn::basis::build_basis;
use rotodyn::dynamics::{
    adiabatic_reference_with, fmt12, run_observed, summarize, RunConfig, Setup, SweepSummary,
};
use rotodyn::operators::OperatorSet;
use rotodyn::propagator::StepRecord;
use rotodyn::spectrum::{
    detect_crossings, max_eta_over_pulse, scan_intensity, AdiabaticScan, CrossingReport,
};
use serde::Serialize;

use crate::config::{FileConfig, ScanRequest};
use crate::output::{create_dir, relative, timestamp, write_atomic, write_json, Metadata};
use crate::CliError;

/// Settings shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub threads: usize,
    pub step_log: bool,
}

struct Recorder<'a> {
    ctx: &'a Context,
    subcommand: &'static str,
    started: chrono::DateTime<Utc>,
    clock: Instant,
    files: Vec<PathBuf>,
}

impl<'a> Recorder<'a> {
    fn start(ctx: &'a Context, subcommand: &'static str) -> Result<Self, CliError> {
        create_dir(&ctx.out_dir)?;
        Ok(Recorder {
            ctx,
            subcommand,
            started: Utc::now(),
            clock: Instant::now(),
            files: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.ctx.out_dir.join(name);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_atomic(&path, fill)?;
        self.files.push(path);
        Ok(())
    }

    fn echo(&mut self, effective: &FileConfig) -> Result<(), CliError> {
        let text = effective.to_toml();
        self.write("effective_config.toml", |w| w.write_all(text.as_bytes()))
    }

    fn finish<R: Serialize>(
        mut self,
        effective: &FileConfig,
        results: R,
        warnings: Vec<String>,
    ) -> Result<Vec<String>, CliError> {
        let path = self.ctx.out_dir.join("metadata.json");
        self.files.push(path.clone());
        let meta = Metadata {
            program: "rotodyn",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            started: timestamp(self.started),
            finished: timestamp(Utc::now()),
            elapsed_s: self.clock.elapsed().as_secs_f64(),
            threads: self.ctx.threads,
            config: serde_json::to_value(effective).expect("configuration serializes"),
            outputs: relative(&self.ctx.out_dir, &self.files),
            results,
            warnings: warnings.clone(),
        };
        write_json(&path, &meta)?;
        Ok(warnings)
    }
}

fn write_steps(w: &mut dyn Write, steps: &[StepRecord]) -> std::io::Result<()> {
    writeln!(w, "t_ns,krylov_order,error_estimate")?;
    for s in steps {
        writeln!(w, "{},{},{}", fmt12(s.t), s.order, fmt12(s.error))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PropagateResults {
    initial_state: String,
    block: String,
    basis_dimension: usize,
    cos_theta_final: f64,
    cos_theta_adiabatic: f64,
    final_populations: Vec<(String, f64)>,
    steps: usize,
    max_krylov_order: usize,
    max_step_error: f64,
}

pub fn propagate(file: &FileConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let config = file.run()?;
    let effective = file.effective(Some(&config), None);
    let mut rec = Recorder::start(ctx, "propagate")?;
    rec.echo(&effective)?;
    let setup = Setup::for_config(&config)?;
    let mut steps = Vec::new();
    let traj = run_observed(&config, &setup, |r| {
        if ctx.step_log {
            steps.push(*r);
        }
    })?;
    rec.write("trajectory.csv", |w| traj.write_csv(w))?;
    if ctx.step_log {
        rec.write("steps.csv", |w| write_steps(w, &steps))?;
    }
    let last = traj.last();
    let results = PropagateResults {
        initial_state: config.initial_label.to_string(),
        block: config.block.to_string(),
        basis_dimension: setup.ops.dim(),
        cos_theta_final: last.cos_theta,
        cos_theta_adiabatic: adiabatic_reference_with(&config, &setup)?,
        final_populations: traj
            .labels
            .iter()
            .map(|l| l.to_string())
            .zip(last.populations.iter().copied())
            .collect(),
        steps: traj.steps,
        max_krylov_order: traj.max_krylov_order,
        max_step_error: traj.max_step_error,
    };
    info!(
        "{} -> <cos theta> = {:.4} at t = {} ns",
        config.initial_label, last.cos_theta, last.t
    );
    rec.finish(&effective, results, traj.warnings.clone())
}

fn run_scan(req: &ScanRequest) -> Result<(OperatorSet, AdiabaticScan), CliError> {
    let basis = Arc::new(build_basis(req.block, req.j_max)?);
    let ops = OperatorSet::for_molecule(basis, &req.molecule);
    let scan = scan_intensity(&ops, &req.molecule, req.es, &req.grid, req.n_track)?;
    Ok((ops, scan))
}

fn write_energies(w: &mut dyn Write, scan: &AdiabaticScan) -> std::io::Result<()> {
    write!(w, "I_Wcm2,Es_Vcm")?;
    for k in 0..scan.n_track() {
        write!(w, ",E_track{k}_MHz")?;
    }
    writeln!(w)?;
    for (i, e) in scan.intensities.iter().zip(&scan.energies) {
        write!(w, "{},{}", fmt12(*i), fmt12(scan.es))?;
        for x in e {
            write!(w, ",{}", fmt12(*x))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_crossings(w: &mut dyn Write, crossings: &[CrossingReport]) -> std::io::Result<()> {
    writeln!(w, "track_i,track_j,I_star,gap_MHz")?;
    for c in crossings {
        writeln!(
            w,
            "{},{},{},{}",
            c.lower,
            c.upper,
            fmt12(c.i_star),
            fmt12(c.gap)
        )?;
    }
    Ok(())
}

fn scan_warnings(scan: &AdiabaticScan) -> Vec<String> {
    let w: Vec<String> = scan.flags.iter().map(|f| format!("{f:?}")).collect();
    for msg in &w {
        warn!("scan: {msg}");
    }
    w
}

#[derive(Debug, Serialize)]
struct ScanResults {
    block: String,
    es_vcm: f64,
    basis_dimension: usize,
    labels: Vec<String>,
    crossings: Vec<CrossingReport>,
}

fn scan_results(
    req: &ScanRequest,
    ops: &OperatorSet,
    scan: &AdiabaticScan,
    crossings: Vec<CrossingReport>,
) -> ScanResults {
    ScanResults {
        block: req.block.to_string(),
        es_vcm: req.es,
        basis_dimension: ops.dim(),
        labels: scan.labels.iter().map(|l| l.to_string()).collect(),
        crossings,
    }
}

pub fn spectrum(file: &FileConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let req = file.scan()?;
    let effective = file.effective(None, Some(&req));
    let mut rec = Recorder::start(ctx, "spectrum")?;
    rec.echo(&effective)?;
    let (ops, scan) = run_scan(&req)?;
    let crossings = detect_crossings(&scan);
    rec.write("energies.csv", |w| write_energies(w, &scan))?;
    rec.write("crossings.csv", |w| write_crossings(w, &crossings))?;
    let warnings = scan_warnings(&scan);
    rec.finish(
        &effective,
        scan_results(&req, &ops, &scan, crossings),
        warnings,
    )
}

#[derive(Debug, Serialize)]
struct EtaRow {
    track_i: usize,
    track_j: usize,
    label_i: String,
    label_j: String,
    eta_max: f64,
    i_at_max_wcm2: f64,
}

pub fn crossings(file: &FileConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let req = file.scan()?;
    let pulse = file.pulse()?;
    let effective = file.effective(None, Some(&req));
    let mut rec = Recorder::start(ctx, "crossings")?;
    rec.echo(&effective)?;
    let (ops, scan) = run_scan(&req)?;
    let crossings = detect_crossings(&scan);
    let mut etas = Vec::new();
    for i in 0..scan.n_track() {
        for j in i + 1..scan.n_track() {
            let (eta, at) = max_eta_over_pulse(&scan, (i, j), &pulse, &ops, &req.molecule)?;
            etas.push(EtaRow {
                track_i: i,
                track_j: j,
                label_i: scan.labels[i].to_string(),
                label_j: scan.labels[j].to_string(),
                eta_max: eta,
                i_at_max_wcm2: at,
            });
        }
    }
    rec.write("crossings.csv", |w| write_crossings(w, &crossings))?;
    rec.write("eta.csv", |w| {
        writeln!(w, "track_i,track_j,label_i,label_j,eta_max,I_at_max_Wcm2")?;
        for e in &etas {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.track_i,
                e.track_j,
                e.label_i,
                e.label_j,
                fmt12(e.eta_max),
                fmt12(e.i_at_max_wcm2)
            )?;
        }
        Ok(())
    })?;
    let warnings = scan_warnings(&scan);
    rec.finish(
        &effective,
        scan_results(&req, &ops, &scan, crossings),
        warnings,
    )
}

#[derive(Debug, Serialize)]
struct SweepResult {
    run: usize,
    es_vcm: f64,
    tau_ns: f64,
    summary: Option<SweepSummary>,
    error: Option<String>,
}

fn sweep_one(
    index: usize,
    config: &RunConfig,
    top_k: usize,
    dir: &Path,
) -> Result<SweepSummary, CliError> {
    let setup = Setup::for_config(config)?;
    let traj = run_observed(config, &setup, |_| {})?;
    write_atomic(&dir.join(format!("runs/run_{index:03}.csv")), |w| {
        traj.write_csv(w)
    })?;
    Ok(summarize(&traj, top_k))
}

/// Runs every configuration of the sweep; a failed run is reported in its
/// row and, after all rows are written, through the returned error.
pub fn sweep(file: &FileConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let req = file.sweep()?;
    let effective = file.effective(None, None);
    let mut rec = Recorder::start(ctx, "sweep")?;
    rec.echo(&effective)?;
    create_dir(&ctx.out_dir.join("runs"))?;
    let outcomes: Vec<Result<SweepSummary, CliError>> = req
        .runs
        .par_iter()
        .enumerate()
        .map(|(i, c)| sweep_one(i, c, req.top_k, &ctx.out_dir))
        .collect();
    let mut first_error = None;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (i, (config, outcome)) in req.runs.iter().zip(outcomes).enumerate() {
        let (summary, error) = match outcome {
            Ok(s) => {
                rec.files
                    .push(ctx.out_dir.join(format!("runs/run_{i:03}.csv")));
                warnings.extend(s.warnings.iter().map(|w| format!("run {i}: {w}")));
                (Some(s), None)
            }
            Err(e) => {
                warn!("run {i} failed: {e}");
                let msg = e.to_string();
                first_error.get_or_insert(e);
                (None, Some(msg))
            }
        };
        rows.push(SweepResult {
            run: i,
            es_vcm: config.dc.es_max(),
            tau_ns: config.pulse.tau(),
            summary,
            error,
        });
    }
    rec.write("sweep.csv", |w| {
        write!(w, "run,Es_Vcm,tau_ns,status,cos_theta,steps")?;
        for k in 1..=req.top_k {
            write!(w, ",label_{k},pop_{k}")?;
        }
        writeln!(w)?;
        for r in &rows {
            write!(w, "{},{},{}", r.run, fmt12(r.es_vcm), fmt12(r.tau_ns))?;
            match &r.summary {
                Some(s) => {
                    write!(w, ",ok,{},{}", fmt12(s.cos_theta), s.steps)?;
                    for k in 0..req.top_k {
                        match s.top_populations.get(k) {
                            Some((l, p)) => write!(w, ",{l},{}", fmt12(*p))?,
                            None => write!(w, ",,")?,
                        }
                    }
                }
                None => {
                    write!(w, ",failed,,")?;
                    for _ in 0..req.top_k {
                        write!(w, ",,")?;
                    }
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let warnings = rec.finish(&effective, rows, warnings)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(warnings),
    }
}

/// Parses and resolves every section present, without computing anything.
pub fn validate(file: &FileConfig) -> Result<String, CliError> {
    let mut report = Vec::new();
    let mol = file.molecule()?;
    let block = file.block()?;
    report.push(format!("molecule {} in block {block}", mol.name));
    let mut run = None;
    if file.pulse.is_some()
        && file
            .block
            .as_ref()
            .is_some_and(|b| b.initial_state.is_some())
    {
        let r = file.run()?;
        report.push(format!(
            "run from {} with J_max = {}, dt = {} fs, window {} .. {} ns",
            r.initial_label,
            r.j_max,
            r.sil.dt_fs,
            r.t_start(),
            r.pulse.t_end()
        ));
        run = Some(r);
    }
    let mut scan = None;
    if file.scan.is_some() {
        let s = file.scan()?;
        report.push(format!(
            "scan of {} points from {:e} to {:e} W/cm2",
            s.grid.len(),
            s.grid[0],
            s.grid[s.grid.len() - 1]
        ));
        scan = Some(s);
    }
    if file.sweep.is_some() {
        report.push(format!("sweep of {} runs", file.sweep()?.runs.len()));
    }
    let effective = file.effective(run.as_ref(), scan.as_ref());
    Ok(format!("{}\n\n{}", report.join("\n"), effective.to_toml()))
}
