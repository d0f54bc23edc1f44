//! Mixed-field experiments: initial state preparation, propagation through
//! the Gaussian pulse and projection onto the instantaneous adiabatic states.

use std::io::Write;
use std::sync::Arc;
use web_time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;

use crate::basis::{build_basis, SymmetryBlock};
use crate::error::{Error, Result};
use crate::operators::{FieldCouplings, OperatorSet};
use crate::propagator::{
    propagate_window, HamiltonianProvider, SilControls, StepRecord, WaveFunction,
};
use crate::sparse::SymmetricMatrix;
use crate::spectrum::{diagonalize, field_free_states, label_by_field_free, rank_of, StateLabel};
use crate::units::{
    dc_field, polarizability_coupling, pulse_intensity, stark_coupling, DcMode, DcSpec,
    MoleculeSpec, PulseSpec,
};

pub const DEFAULT_J_MAX: u32 = 30;
pub const DEFAULT_N_TRACK: usize = 12;
pub const DEFAULT_SAMPLES: usize = 600;
/// Tracked-set population below which leakage is reported.
pub const LEAKAGE_WARNING: f64 = 0.999;
/// Overlap with the target state below which a DC ramp counts as non-adiabatic.
pub const RAMP_OVERLAP_WARNING: f64 = 0.99;

/// Everything needed to run one propagation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub molecule: MoleculeSpec,
    pub block: SymmetryBlock,
    pub initial_label: StateLabel,
    pub dc: DcSpec,
    pub pulse: PulseSpec,
    pub j_max: u32,
    pub sil: SilControls,
    pub n_track: usize,
    pub sample_count: usize,
}

impl RunConfig {
    /// Benzonitrile-style defaults around the given fields and pulse.
    pub fn new(
        molecule: MoleculeSpec,
        block: SymmetryBlock,
        initial_label: StateLabel,
        es: f64,
        pulse: PulseSpec,
    ) -> Result<Self> {
        let config = RunConfig {
            molecule,
            block,
            initial_label,
            dc: DcSpec::instantaneous(es)?,
            sil: SilControls::for_pulse(pulse.tau())?,
            pulse,
            j_max: DEFAULT_J_MAX,
            n_track: DEFAULT_N_TRACK,
            sample_count: DEFAULT_SAMPLES,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that does not need a diagonalization.
    pub fn validate(&self) -> Result<()> {
        self.molecule.validate()?;
        self.sil.validate()?;
        if self.sample_count < 2 {
            return Err(Error::invalid(
                "RunConfig",
                format!("sample_count must be >= 2 (got {})", self.sample_count),
            ));
        }
        if self.n_track == 0 {
            return Err(Error::invalid("RunConfig", "n_track must be >= 1"));
        }
        if self.j_max < self.block.m() {
            return Err(Error::Domain(format!(
                "J_max = {} is below |M| = {}",
                self.j_max,
                self.block.m()
            )));
        }
        let l = self.initial_label;
        if l.m != self.block.m() {
            return Err(Error::invalid(
                "RunConfig",
                format!(
                    "initial state {l} has M = {} but the block has M = {}",
                    l.m,
                    self.block.m()
                ),
            ));
        }
        if l.j > self.j_max {
            return Err(Error::invalid(
                "RunConfig",
                format!("initial state {l} lies above J_max = {}", self.j_max),
            ));
        }
        Ok(())
    }

    /// Start of the propagation: the pulse window, or the ramp start if earlier.
    pub fn t_start(&self) -> f64 {
        match self.dc.mode() {
            DcMode::Ramp { start_ns, .. } => start_ns.min(self.pulse.t_start()),
            DcMode::Instantaneous => self.pulse.t_start(),
        }
    }
}

/// Operators and field-free labels of one block, reusable across runs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub ops: OperatorSet,
    pub labels: Vec<StateLabel>,
}

impl Setup {
    pub fn new(mol: &MoleculeSpec, block: SymmetryBlock, j_max: u32) -> Result<Self> {
        let basis = Arc::new(build_basis(block, j_max)?);
        let ops = OperatorSet::for_molecule(basis.clone(), mol);
        let labels = label_by_field_free(&basis, ops.constants());
        Ok(Setup { ops, labels })
    }

    pub fn for_config(config: &RunConfig) -> Result<Self> {
        Self::new(&config.molecule, config.block, config.j_max)
    }

    /// Energy rank of `label`, checked against the number of tracked states.
    pub fn tracked_rank(&self, label: StateLabel, n_track: usize) -> Result<usize> {
        let r = rank_of(&self.labels, label)?;
        if r >= n_track {
            return Err(Error::invalid(
                "RunConfig",
                format!("{label} is state {r} of its block; n_track = {n_track} must exceed it"),
            ));
        }
        Ok(r)
    }

    /// Frozen-field Hamiltonian.
    pub fn hamiltonian(
        &self,
        mol: &MoleculeSpec,
        es: f64,
        intensity: f64,
    ) -> Result<SymmetricMatrix> {
        Ok(self
            .ops
            .hamiltonian(FieldCouplings::new(mol, es, intensity)?))
    }
}

/// `H(t)` for a DC field and a Gaussian pulse.
struct FieldHamiltonian<'a> {
    ops: &'a OperatorSet,
    dc: DcSpec,
    pulse: PulseSpec,
    stark_per_vcm: f64,
    zx_per_wcm2: f64,
    yx_per_wcm2: f64,
}

impl<'a> FieldHamiltonian<'a> {
    fn new(ops: &'a OperatorSet, mol: &MoleculeSpec, dc: DcSpec, pulse: PulseSpec) -> Result<Self> {
        Ok(FieldHamiltonian {
            ops,
            dc,
            pulse,
            stark_per_vcm: stark_coupling(mol.mu, 1.0)?,
            zx_per_wcm2: polarizability_coupling(mol.alpha_zx(), 1.0)?,
            yx_per_wcm2: polarizability_coupling(mol.alpha_yx(), 1.0)?,
        })
    }

    fn fields(&self, t: f64) -> (f64, f64) {
        (dc_field(t, &self.dc), pulse_intensity(t, &self.pulse).0)
    }

    fn couplings(&self, t: f64) -> FieldCouplings {
        let (es, i) = self.fields(t);
        FieldCouplings {
            stark: self.stark_per_vcm * es,
            laser_zx: self.zx_per_wcm2 * i,
            laser_yx: self.yx_per_wcm2 * i,
        }
    }
}

impl HamiltonianProvider for FieldHamiltonian<'_> {
    fn assign(&self, t_ns: f64, out: &mut SymmetricMatrix) -> Result<()> {
        self.ops.assign_hamiltonian(out, self.couplings(t_ns))
    }

    fn template(&self) -> SymmetricMatrix {
        self.ops.zeros()
    }
}

/// Initial wavefunction for a run.
///
/// With an instantaneous DC field this is the adiabatic state of `H(E_s, I = 0)`
/// correlating with `initial_label`. With a ramp it is the field-free
/// eigenstate, to be propagated through the ramp by [`run`].
pub fn prepare_initial(config: &RunConfig, setup: &Setup) -> Result<WaveFunction> {
    config.validate()?;
    let basis = setup.ops.basis().clone();
    match config.dc.mode() {
        DcMode::Instantaneous => {
            let rank = rank_of(&setup.labels, config.initial_label)?;
            let h = setup.hamiltonian(&config.molecule, config.dc.es_max(), 0.0)?;
            let eig = diagonalize(&h, rank + 1)?;
            WaveFunction::from_real(basis, eig.vectors.column(rank).as_slice())
        }
        DcMode::Ramp { .. } => {
            let state = field_free_states(&basis, setup.ops.constants())
                .into_iter()
                .find(|s| s.label == config.initial_label)
                .ok_or_else(|| Error::LabelNotFound(config.initial_label.to_string()))?;
            WaveFunction::from_real(basis, state.vector.as_slice())
        }
    }
}

/// Observables at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub intensity: f64,
    pub es: f64,
    pub cos_theta: f64,
    pub norm: f64,
    /// ⟨ψ|H|ψ⟩ in MHz.
    pub energy: f64,
    /// |C_γ|² for the tracked adiabatic states, in rank order.
    pub populations: Vec<f64>,
}

impl Sample {
    /// Population outside the tracked set.
    pub fn leakage(&self) -> f64 {
        self.norm * self.norm - self.populations.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Labels of the tracked adiabatic states, in rank order.
    pub labels: Vec<StateLabel>,
    pub samples: Vec<Sample>,
    #[serde(skip)]
    pub final_state: WaveFunction,
    pub steps: usize,
    pub max_krylov_order: usize,
    pub max_step_error: f64,
    pub warnings: Vec<String>,
    pub elapsed_s: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("a trajectory has at least two samples")
    }

    /// Population history of one adiabatic state.
    pub fn population(&self, label: StateLabel) -> Result<Vec<f64>> {
        let r = rank_of(&self.labels, label)?;
        Ok(self.samples.iter().map(|s| s.populations[r]).collect())
    }

    /// Final population of one adiabatic state.
    pub fn final_population(&self, label: StateLabel) -> Result<f64> {
        let r = rank_of(&self.labels, label)?;
        Ok(self.last().populations[r])
    }

    /// CSV with columns `t_ns, I_Wcm2, Es_Vcm, cos_theta, norm, energy_MHz,
    /// pop_<label>...`, numbers to 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t_ns,I_Wcm2,Es_Vcm,cos_theta,norm,energy_MHz")?;
        for l in &self.labels {
            write!(w, ",pop_{l}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(
                w,
                "{},{},{},{},{},{}",
                fmt12(s.t),
                fmt12(s.intensity),
                fmt12(s.es),
                fmt12(s.cos_theta),
                fmt12(s.norm),
                fmt12(s.energy)
            )?;
            for p in &s.populations {
                write!(w, ",{}", fmt12(*p))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Formats with 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{x:.11e}")
}

/// Sample times covering `[t0, t1]`, geometrically spaced in intensity on
/// each edge of the pulse, always including both ends.
pub fn sample_times(pulse: &PulseSpec, t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let i_at = |t: f64| pulse_intensity(t, pulse).0;
    let mut times = Vec::with_capacity(count + 2);
    let geometric = |a: f64, b: f64, n: usize, rising: bool, out: &mut Vec<f64>| {
        let (ia, ib) = (i_at(a), i_at(b));
        if n < 2 || !(ia > 0.0 && ib > 0.0) || (ia / ib).ln().abs() < 1e-9 {
            for k in 0..n.max(2) {
                out.push(a + (b - a) * k as f64 / (n.max(2) - 1) as f64);
            }
            return;
        }
        out.push(a);
        for k in 1..n - 1 {
            let f = k as f64 / (n - 1) as f64;
            let i = (ia.ln() + (ib.ln() - ia.ln()) * f).exp();
            let dt = pulse.sigma() * (2.0 * (pulse.i0() / i).ln().max(0.0)).sqrt();
            out.push(if rising { -dt } else { dt });
        }
        out.push(b);
    };
    if pulse.i0() == 0.0 {
        for k in 0..count {
            times.push(t0 + (t1 - t0) * k as f64 / (count - 1) as f64);
        }
    } else if t1 <= 0.0 {
        geometric(t0, t1, count, true, &mut times);
    } else if t0 >= 0.0 {
        geometric(t0, t1, count, false, &mut times);
    } else {
        let n_rise = (count / 2).max(2);
        geometric(t0, 0.0, n_rise, true, &mut times);
        geometric(0.0, t1, (count - n_rise).max(2), false, &mut times);
    }
    times.push(t0);
    times.push(t1);
    times.retain(|t| *t >= t0 && *t <= t1);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    if let Some(first) = times.first_mut() {
        *first = t0;
    }
    if let Some(last) = times.last_mut() {
        *last = t1;
    }
    times
}

fn observe(
    setup: &Setup,
    h: &SymmetricMatrix,
    psi: &WaveFunction,
    n_track: usize,
    t: f64,
    (es, intensity): (f64, f64),
) -> Result<Sample> {
    let eig = diagonalize(h, n_track)?;
    let populations = (0..eig.len())
        .map(|k| {
            psi.overlap_real(eig.vectors.column(k).as_slice())
                .norm_sqr()
        })
        .collect();
    let c = psi.coefficients();
    Ok(Sample {
        t,
        intensity,
        es,
        cos_theta: setup.ops.cos_theta().expectation(c),
        norm: psi.norm(),
        energy: h.expectation(c),
        populations,
    })
}

/// Propagates one configuration from its start time to `pulse.t_end`.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let setup = Setup::for_config(config)?;
    run_with(config, &setup)
}

/// [`run`] with prebuilt operators.
pub fn run_with(config: &RunConfig, setup: &Setup) -> Result<Trajectory> {
    run_observed(config, setup, |_| {})
}

/// [`run_with`], reporting every propagation step to `on_step`.
pub fn run_observed(
    config: &RunConfig,
    setup: &Setup,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Trajectory> {
    let started = Instant::now();
    config.validate()?;
    setup.ops.check_molecule(&config.molecule)?;
    if setup.ops.basis().block() != config.block || setup.ops.basis().j_max() != config.j_max {
        return Err(Error::Usage(
            "operator set does not match the configured basis".into(),
        ));
    }
    let n_track = config.n_track.min(setup.ops.dim());
    let rank = setup.tracked_rank(config.initial_label, n_track)?;
    let labels: Vec<StateLabel> = setup.labels.iter().copied().take(n_track).collect();

    let provider = FieldHamiltonian::new(&setup.ops, &config.molecule, config.dc, config.pulse)?;
    let mut psi = prepare_initial(config, setup)?;
    let t_first = config.t_start();
    let t_last = config.pulse.t_end();
    let mut times = sample_times(
        &config.pulse,
        config.pulse.t_start(),
        t_last,
        config.sample_count,
    );
    if t_first < times[0] {
        times.insert(0, t_first);
    }
    let ramp_check = match config.dc.ramp_end() {
        Some(t) if t > t_first && t < t_last => Some(t),
        _ => None,
    };

    let mut warnings = Vec::new();
    let mut samples = Vec::with_capacity(times.len());
    let mut h = setup.ops.zeros();
    let mut steps = 0;
    let mut max_order = 0;
    let mut max_error = 0.0f64;
    let mut t_now = t_first;
    let mut leak_reported = false;
    let mut ramp_checked = ramp_check.is_none();

    let mut advance = |psi: &mut WaveFunction, from: f64, to: f64| -> Result<()> {
        steps += propagate_window(&provider, psi, from, to, &config.sil, |r| {
            max_order = max_order.max(r.order);
            max_error = max_error.max(r.error);
            on_step(r);
        })?;
        Ok(())
    };

    for &t in &times {
        if !ramp_checked {
            let t_ramp = ramp_check.expect("pending ramp check");
            if t_ramp <= t {
                advance(&mut psi, t_now, t_ramp)?;
                t_now = t_ramp;
                let (es, i) = provider.fields(t_ramp);
                let hr = setup.hamiltonian(&config.molecule, es, i)?;
                let eig = diagonalize(&hr, rank + 1)?;
                let overlap = psi
                    .overlap_real(eig.vectors.column(rank).as_slice())
                    .norm_sqr();
                if overlap < RAMP_OVERLAP_WARNING {
                    let msg = format!(
                        "DC ramp not adiabatic: population {overlap:.4} in {} when the ramp ends",
                        config.initial_label
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
                ramp_checked = true;
            }
        }
        advance(&mut psi, t_now, t)?;
        t_now = t;
        provider.assign(t, &mut h)?;
        let sample = observe(setup, &h, &psi, n_track, t, provider.fields(t))?;
        if (sample.norm - 1.0).abs() > 1e-7 {
            let msg = format!("norm drifted to {:.12} at t = {t} ns", sample.norm);
            warn!("{msg}");
            warnings.push(msg);
        }
        if !leak_reported && sample.populations.iter().sum::<f64>() < LEAKAGE_WARNING {
            let msg = format!(
                "tracked states hold only {:.5} of the population at t = {t} ns; increase n_track",
                sample.populations.iter().sum::<f64>()
            );
            warn!("{msg}");
            warnings.push(msg);
            leak_reported = true;
        }
        samples.push(sample);
    }
    let elapsed_s = started.elapsed().as_secs_f64();
    info!(
        "{} from {}: {steps} steps in {elapsed_s:.1} s, final <cos> = {:.4}",
        config.block,
        config.initial_label,
        samples.last().map_or(f64::NAN, |s| s.cos_theta)
    );
    Ok(Trajectory {
        labels,
        samples,
        final_state: psi,
        steps,
        max_krylov_order: max_order,
        max_step_error: max_error,
        warnings,
        elapsed_s,
    })
}

/// ⟨cos θ⟩ in the adiabatic state correlating with `initial_label`, at the
/// full DC field and the pulse peak.
pub fn adiabatic_reference(config: &RunConfig) -> Result<f64> {
    let setup = Setup::for_config(config)?;
    adiabatic_reference_with(config, &setup)
}

pub fn adiabatic_reference_with(config: &RunConfig, setup: &Setup) -> Result<f64> {
    config.validate()?;
    let rank = rank_of(&setup.labels, config.initial_label)?;
    let h = setup.hamiltonian(&config.molecule, config.dc.es_max(), config.pulse.i0())?;
    let eig = diagonalize(&h, rank + 1)?;
    let v: DVector<f64> = eig.vector(rank);
    Ok(setup.ops.cos_theta().bilinear(v.as_slice(), v.as_slice()))
}

/// Summary of one run in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cos_theta: f64,
    /// Largest final populations, descending.
    pub top_populations: Vec<(StateLabel, f64)>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct SweepRow {
    pub index: usize,
    pub result: Result<SweepSummary>,
}

pub fn summarize(traj: &Trajectory, top_k: usize) -> SweepSummary {
    let last = traj.last();
    let mut pops: Vec<(StateLabel, f64)> = traj
        .labels
        .iter()
        .copied()
        .zip(last.populations.iter().copied())
        .collect();
    pops.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pops.truncate(top_k);
    SweepSummary {
        cos_theta: last.cos_theta,
        top_populations: pops,
        steps: traj.steps,
        warnings: traj.warnings.clone(),
    }
}

/// Runs every configuration independently; failures stay in their row.
pub fn sweep(configs: &[RunConfig], top_k: usize) -> Vec<SweepRow> {
    let one = |(index, c): (usize, &RunConfig)| SweepRow {
        index,
        result: run(c).map(|t| summarize(&t, top_k)),
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().enumerate().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        configs.iter().enumerate().map(one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Parity;

    fn ground(es: f64, i0: f64, tau: f64) -> RunConfig {
        let mut c = RunConfig::new(
            MoleculeSpec::benzonitrile(),
            SymmetryBlock::m0(Parity::Even, Parity::Even),
            "0_00_0".parse().unwrap(),
            es,
            PulseSpec::new(i0, tau).unwrap(),
        )
        .unwrap();
        c.j_max = 10;
        c.n_track = 6;
        c.sample_count = 8;
        c
    }

    #[test]
    fn sample_times_cover_window() {
        let p = PulseSpec::new(7e11, 1.0).unwrap();
        let t = sample_times(&p, p.t_start(), p.t_end(), 50);
        assert_eq!(t.len(), 50);
        assert_eq!(t[0], p.t_start());
        assert_eq!(*t.last().unwrap(), 0.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let i: Vec<f64> = t.iter().map(|&x| pulse_intensity(x, &p).0).collect();
        let r0 = i[1] / i[0];
        let r1 = i[20] / i[19];
        assert!((r0 - r1).abs() < 1e-9 * r0);
        let flat = PulseSpec::with_window(0.0, 1.0, -1.0, 1.0).unwrap();
        let t = sample_times(&flat, -1.0, 1.0, 5);
        assert_eq!(t, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn initial_ground_state_is_lowest_eigenvector() {
        let c = ground(300.0, 7e11, 1.0);
        let setup = Setup::for_config(&c).unwrap();
        let psi = prepare_initial(&c, &setup).unwrap();
        let h = setup.hamiltonian(&c.molecule, 300.0, 0.0).unwrap();
        let e = diagonalize(&h, 1).unwrap();
        let overlap = psi.overlap_real(e.vectors.column(0).as_slice()).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_pulse_is_stationary() {
        let mut c = ground(300.0, 0.0, 1.0);
        c.pulse = PulseSpec::with_window(0.0, 1.0, -0.2, 0.0).unwrap();
        let traj = run(&c).unwrap();
        let first = &traj.samples[0];
        for s in &traj.samples {
            assert!((s.populations[0] - first.populations[0]).abs() < 1e-8);
            assert!((s.cos_theta - first.cos_theta).abs() < 1e-8);
        }
    }

    #[test]
    fn label_outside_block_is_rejected() {
        let mut c = ground(300.0, 7e11, 1.0);
        c.initial_label = "1_10_0".parse().unwrap();
        assert!(matches!(run(&c), Err(Error::LabelNotFound(_))));
        c.initial_label = "3_03_3".parse().unwrap();
        assert!(run(&c).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut c = ground(300.0, 0.0, 1.0);
        c.pulse = PulseSpec::with_window(0.0, 1.0, -0.01, 0.0).unwrap();
        c.sample_count = 3;
        let traj = run(&c).unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header
            .starts_with("t_ns,I_Wcm2,Es_Vcm,cos_theta,norm,energy_MHz,pop_0_00_0,pop_1_01_0"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn fmt12_digits() {
        assert_eq!(fmt12(0.661), "6.61000000000e-1");
        assert_eq!(fmt12(0.0), "0");
    }
}
