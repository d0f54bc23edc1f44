//! Physical constants, unit conversions, molecule records and field profiles.
//!
//! Internal units: energies are frequencies in MHz, times in ns, laser
//! intensities in W/cm² and DC field strengths in V/cm. A state with energy
//! `E` (MHz) accumulates the phase `2π·E·t·1e-3` over `t` ns.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Vacuum permittivity (F/m).
    pub epsilon_0: f64,
    /// Speed of light (m/s).
    pub c: f64,
    /// Planck constant (J s).
    pub h: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
}

// CODATA 2018. Fixed here so regression numbers are bit-reproducible.
pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    epsilon_0: 8.854_187_812_8e-12,
    c: 299_792_458.0,
    h: 6.626_070_15e-34,
    hbar: 6.626_070_15e-34 / (2.0 * PI),
};

/// One debye in C·m (10⁻²¹/c).
pub const DEBYE_SI: f64 = 1e-21 / CODATA_2018.c;

/// μE/h in MHz for μ = 1 D and E = 1 V/cm.
pub const STARK_MHZ_PER_DEBYE_VCM: f64 = DEBYE_SI * 100.0 / CODATA_2018.h * 1e-6;

/// 2π·α·I/(c·h) in MHz for α = 1 Å³ and I = 1 W/cm².
pub const POLARIZABILITY_MHZ_PER_A3_WCM2: f64 =
    2.0 * PI * 1e-30 * 1e4 / (CODATA_2018.c * CODATA_2018.h) * 1e-6;

/// Cycles accumulated per MHz·ns.
pub const CYCLES_PER_MHZ_NS: f64 = 1e-3;

pub const FS_PER_NS: f64 = 1e6;

pub fn mhz_to_joule(e_mhz: f64) -> f64 {
    e_mhz * 1e6 * CODATA_2018.h
}

pub fn joule_to_mhz(e_joule: f64) -> f64 {
    e_joule / CODATA_2018.h * 1e-6
}

pub fn mhz_to_wavenumber(e_mhz: f64) -> f64 {
    e_mhz * 1e6 / (CODATA_2018.c * 100.0)
}

pub fn wavenumber_to_mhz(e_cm: f64) -> f64 {
    e_cm * CODATA_2018.c * 100.0 * 1e-6
}

/// Prefactor μ·E_s of the cos θ matrix, in MHz.
pub fn stark_coupling(mu_debye: f64, es_vcm: f64) -> Result<f64> {
    if !(mu_debye >= 0.0) || !(es_vcm >= 0.0) {
        return Err(Error::Domain(format!(
            "stark coupling needs mu >= 0 and Es >= 0, got mu = {mu_debye}, Es = {es_vcm}"
        )));
    }
    Ok(mu_debye * es_vcm * STARK_MHZ_PER_DEBYE_VCM)
}

/// Prefactor I·α/(2ε₀c) (α in SI) of a laser-coupling matrix, in MHz.
///
/// The polarizability is a volume in Å³ and may be negative (an anisotropy
/// difference); the intensity must not be.
pub fn polarizability_coupling(alpha_a3: f64, intensity_wcm2: f64) -> Result<f64> {
    if !(intensity_wcm2 >= 0.0) {
        return Err(Error::Domain(format!(
            "laser intensity must be >= 0, got {intensity_wcm2}"
        )));
    }
    Ok(alpha_a3 * intensity_wcm2 * POLARIZABILITY_MHZ_PER_A3_WCM2)
}

/// Rotational constants, dipole and polarizability of a rigid asymmetric top.
///
/// Axes follow the left-handed convention: the dipole lies along z and
/// `b_z > b_y > b_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub name: String,
    /// MHz.
    pub b_x: f64,
    pub b_y: f64,
    pub b_z: f64,
    /// Debye.
    pub mu: f64,
    /// Polarizability volumes, Å³.
    pub alpha_xx: f64,
    pub alpha_yy: f64,
    pub alpha_zz: f64,
}

impl MoleculeSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        b_x: f64,
        b_y: f64,
        b_z: f64,
        mu: f64,
        alpha_xx: f64,
        alpha_yy: f64,
        alpha_zz: f64,
    ) -> Result<Self> {
        let spec = MoleculeSpec {
            name: name.into(),
            b_x,
            b_y,
            b_z,
            mu,
            alpha_xx,
            alpha_yy,
            alpha_zz,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Benzonitrile.
    pub fn benzonitrile() -> Self {
        MoleculeSpec {
            name: "benzonitrile".into(),
            b_x: 1214.0,
            b_y: 1547.0,
            b_z: 5655.0,
            mu: 4.515,
            alpha_xx: 7.49,
            alpha_yy: 13.01,
            alpha_zz: 18.64,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "benzonitrile" | "bn" => Some(Self::benzonitrile()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.b_x,
            self.b_y,
            self.b_z,
            self.mu,
            self.alpha_xx,
            self.alpha_yy,
            self.alpha_zz,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid(
                "MoleculeSpec",
                "all parameters must be finite",
            ));
        }
        if !(self.b_z > self.b_y && self.b_y > self.b_x && self.b_x > 0.0) {
            return Err(Error::invalid(
                "MoleculeSpec",
                format!(
                    "rotational constants must satisfy B_z > B_y > B_x > 0 (got {}, {}, {})",
                    self.b_z, self.b_y, self.b_x
                ),
            ));
        }
        if self.mu < 0.0 {
            return Err(Error::invalid("MoleculeSpec", "mu must be >= 0"));
        }
        if !(self.alpha_xx > 0.0 && self.alpha_yy > 0.0 && self.alpha_zz > 0.0) {
            return Err(Error::invalid(
                "MoleculeSpec",
                "polarizability volumes must be > 0",
            ));
        }
        Ok(())
    }

    /// α^{zx} = α_zz − α_xx.
    pub fn alpha_zx(&self) -> f64 {
        self.alpha_zz - self.alpha_xx
    }

    /// α^{yx} = α_yy − α_xx.
    pub fn alpha_yx(&self) -> f64 {
        self.alpha_yy - self.alpha_xx
    }

    /// Parses the plain-text `key = value` molecule format.
    ///
    /// Recognised keys are `name`, `B_x_MHz`, `B_y_MHz`, `B_z_MHz`, `mu_D`,
    /// `alpha_xx_A3`, `alpha_yy_A3` and `alpha_zz_A3`. Blank lines and `#`
    /// comments are ignored; every key is required exactly once.
    pub fn from_key_value_str(text: &str) -> Result<Self> {
        const KEYS: [&str; 8] = [
            "name",
            "B_x_MHz",
            "B_y_MHz",
            "B_z_MHz",
            "mu_D",
            "alpha_xx_A3",
            "alpha_yy_A3",
            "alpha_zz_A3",
        ];
        let mut values: [Option<String>; 8] = Default::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim().trim_matches('"').to_string();
            let idx = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::Parse(format!("line {}: unknown key `{key}`", lineno + 1)))?;
            if values[idx].replace(value).is_some() {
                return Err(Error::Parse(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        let mut numbers = [0.0; 7];
        for (i, key) in KEYS.iter().enumerate().skip(1) {
            let raw = values[i]
                .as_deref()
                .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))?;
            numbers[i - 1] = raw
                .parse()
                .map_err(|_| Error::Parse(format!("key `{key}`: `{raw}` is not a number")))?;
        }
        let name = values[0]
            .take()
            .ok_or_else(|| Error::Parse("missing key `name`".into()))?;
        MoleculeSpec::new(
            name, numbers[0], numbers[1], numbers[2], numbers[3], numbers[4], numbers[5],
            numbers[6],
        )
    }

    pub fn to_key_value_string(&self) -> String {
        format!(
            "name = {}\nB_x_MHz = {}\nB_y_MHz = {}\nB_z_MHz = {}\nmu_D = {}\nalpha_xx_A3 = {}\nalpha_yy_A3 = {}\nalpha_zz_A3 = {}\n",
            self.name, self.b_x, self.b_y, self.b_z, self.mu, self.alpha_xx, self.alpha_yy, self.alpha_zz
        )
    }
}

impl FromStr for MoleculeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_key_value_str(s)
    }
}

/// Relative intensity at which the default propagation window opens.
pub const DEFAULT_START_FRACTION: f64 = 1e-4;

/// Gaussian laser pulse `I(t) = I0·exp(−t²/2σ²)` peaking at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    i0: f64,
    tau: f64,
    sigma: f64,
    t_start: f64,
    t_end: f64,
}

impl PulseSpec {
    /// Pulse with peak `i0` (W/cm²) and FWHM `tau` (ns), with the default
    /// window: from `I = 1e-4·I0` on the rising edge up to the peak.
    pub fn new(i0: f64, tau: f64) -> Result<Self> {
        let sigma = fwhm_to_sigma(tau);
        let t_start = -sigma * (2.0 * (1.0 / DEFAULT_START_FRACTION).ln()).sqrt();
        Self::with_window(i0, tau, t_start, 0.0)
    }

    pub fn with_window(i0: f64, tau: f64, t_start: f64, t_end: f64) -> Result<Self> {
        if !(i0 >= 0.0) || !i0.is_finite() {
            return Err(Error::invalid(
                "PulseSpec",
                format!("I0 must be >= 0 (got {i0})"),
            ));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid(
                "PulseSpec",
                format!("tau must be > 0 (got {tau})"),
            ));
        }
        if !(t_start < t_end) {
            return Err(Error::invalid(
                "PulseSpec",
                format!("t_start must be < t_end (got {t_start} >= {t_end})"),
            ));
        }
        Ok(PulseSpec {
            i0,
            tau,
            sigma: fwhm_to_sigma(tau),
            t_start,
            t_end,
        })
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Time on the rising edge (`t <= 0`) at which the intensity equals `i`.
    pub fn rising_time_at(&self, i: f64) -> Option<f64> {
        if !(i > 0.0 && i <= self.i0) {
            return None;
        }
        Some(-self.sigma * (2.0 * (self.i0 / i).ln()).sqrt())
    }

    /// |dI/dt| on the rising edge at intensity `i`.
    pub fn rising_slope_at(&self, i: f64) -> Option<f64> {
        self.rising_time_at(i).map(|t| pulse_intensity(t, self).1)
    }
}

pub fn fwhm_to_sigma(tau: f64) -> f64 {
    tau / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Intensity (W/cm²) and its time derivative (W/cm² per ns) at `t` ns.
pub fn pulse_intensity(t: f64, pulse: &PulseSpec) -> (f64, f64) {
    let s2 = pulse.sigma * pulse.sigma;
    let i = pulse.i0 * (-t * t / (2.0 * s2)).exp();
    (i, -t / s2 * i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DcMode {
    /// The field is at full strength for the whole run; the initial state is
    /// an eigenstate of the field-dressed Hamiltonian.
    Instantaneous,
    /// Linear ramp from zero starting at `start_ns`, at `rate` V/cm per ns.
    Ramp { rate: f64, start_ns: f64 },
}

/// Static electric field parallel to the laser polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcSpec {
    es_max: f64,
    mode: DcMode,
}

impl DcSpec {
    pub fn instantaneous(es_max: f64) -> Result<Self> {
        Self::new(es_max, DcMode::Instantaneous)
    }

    pub fn ramp(es_max: f64, rate: f64, start_ns: f64) -> Result<Self> {
        Self::new(es_max, DcMode::Ramp { rate, start_ns })
    }

    pub fn new(es_max: f64, mode: DcMode) -> Result<Self> {
        if !(es_max >= 0.0) || !es_max.is_finite() {
            return Err(Error::invalid(
                "DcSpec",
                format!("Es_max must be >= 0 (got {es_max})"),
            ));
        }
        if let DcMode::Ramp { rate, start_ns } = mode {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::invalid(
                    "DcSpec",
                    format!("ramp_rate must be > 0 in ramp mode (got {rate})"),
                ));
            }
            if !start_ns.is_finite() {
                return Err(Error::invalid("DcSpec", "ramp start must be finite"));
            }
        }
        Ok(DcSpec { es_max, mode })
    }

    pub fn es_max(&self) -> f64 {
        self.es_max
    }

    pub fn mode(&self) -> DcMode {
        self.mode
    }

    /// Time at which the field reaches `es_max`.
    pub fn ramp_end(&self) -> Option<f64> {
        match self.mode {
            DcMode::Instantaneous => None,
            DcMode::Ramp { rate, start_ns } => Some(start_ns + self.es_max / rate),
        }
    }
}

/// DC field strength (V/cm) at time `t` ns.
pub fn dc_field(t: f64, dc: &DcSpec) -> f64 {
    match dc.mode {
        DcMode::Instantaneous => dc.es_max,
        DcMode::Ramp { rate, start_ns } => (rate * (t - start_ns)).clamp(0.0, dc.es_max),
    }
}

impl fmt::Display for MoleculeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (B = {}, {}, {} MHz; mu = {} D; alpha = {}, {}, {} A^3)",
            self.name,
            self.b_x,
            self.b_y,
            self.b_z,
            self.mu,
            self.alpha_xx,
            self.alpha_yy,
            self.alpha_zz
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stark_examples() {
        assert_eq!(stark_coupling(0.0, 300.0).unwrap(), 0.0);
        // 1 D·V/cm / h from CODATA: 3.33564e-30 C m · 100 V/m / 6.62607015e-34 J s.
        assert_relative_eq!(
            stark_coupling(1.0, 1.0).unwrap(),
            0.503_412,
            max_relative = 1e-6
        );
        assert_relative_eq!(
            stark_coupling(4.515, 300.0).unwrap(),
            681.87,
            max_relative = 1e-5
        );
        assert!(stark_coupling(-1.0, 1.0).is_err());
        assert!(stark_coupling(1.0, -1.0).is_err());
    }

    #[test]
    fn polarizability_examples() {
        assert_eq!(polarizability_coupling(11.15, 0.0).unwrap(), 0.0);
        // 2π · 1e-30 m³ · 1e15 W/m² / (c h), evaluated independently.
        let expected = 2.0 * PI * 1e-15 / (299_792_458.0 * 6.626_070_15e-34) * 1e-6;
        assert_relative_eq!(expected, 3.163_03e4, max_relative = 1e-5);
        assert_relative_eq!(
            polarizability_coupling(1.0, 1e11).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            polarizability_coupling(11.15, 7e11).unwrap(),
            expected * 11.15 * 7.0,
            max_relative = 1e-12
        );
        assert!(polarizability_coupling(1.0, -1.0).is_err());
    }

    #[test]
    fn conversions_are_linear_and_round_trip() {
        for &x in &[1e-3, 0.7, 12.0, 5655.0, 3.2e6] {
            let a = 3.7;
            assert_relative_eq!(
                stark_coupling(a * x, 2.0).unwrap(),
                a * stark_coupling(x, 2.0).unwrap(),
                max_relative = 1e-15
            );
            assert_relative_eq!(
                polarizability_coupling(2.0, a * x).unwrap(),
                a * polarizability_coupling(2.0, x).unwrap(),
                max_relative = 1e-15
            );
            assert_relative_eq!(joule_to_mhz(mhz_to_joule(x)), x, max_relative = 1e-12);
            assert_relative_eq!(
                wavenumber_to_mhz(mhz_to_wavenumber(x)),
                x,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn pulse_examples() {
        let p = PulseSpec::new(7e11, 2.0).unwrap();
        let (i, di) = pulse_intensity(0.0, &p);
        assert_eq!(i, 7e11);
        assert_eq!(di, 0.0);
        for t in [-1.0, 1.0] {
            assert_relative_eq!(pulse_intensity(t, &p).0, 3.5e11, max_relative = 1e-12);
        }
        let s = p.sigma();
        let (i, di) = pulse_intensity(-s, &p);
        assert_relative_eq!(i, 7e11 * (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(di, 7e11 * (-0.5f64).exp() / s, max_relative = 1e-14);
    }

    #[test]
    fn pulse_derivative_matches_finite_differences() {
        let p = PulseSpec::new(7e11, 1.3).unwrap();
        let s = p.sigma();
        let h = 1e-5 * s;
        for k in -40..=40 {
            let t = k as f64 * 0.1 * s;
            let fd = (pulse_intensity(t + h, &p).0 - pulse_intensity(t - h, &p).0) / (2.0 * h);
            let (_, di) = pulse_intensity(t, &p);
            let scale = p.i0() / s;
            assert!(
                (fd - di).abs() <= 1e-8 * scale.max(di.abs()),
                "t = {t}: {fd} vs {di}"
            );
        }
    }

    #[test]
    fn default_window_starts_at_1e4_fraction() {
        let p = PulseSpec::new(7e11, 1.0).unwrap();
        assert_relative_eq!(
            pulse_intensity(p.t_start(), &p).0,
            7e7,
            max_relative = 1e-12
        );
        assert_relative_eq!(p.t_start() / p.sigma(), -4.291_932, max_relative = 1e-6);
        assert_eq!(p.t_end(), 0.0);
        assert_relative_eq!(
            p.rising_time_at(7e7).unwrap(),
            p.t_start(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pulse_invariants() {
        assert!(PulseSpec::new(-1.0, 1.0).is_err());
        assert!(PulseSpec::new(1.0, 0.0).is_err());
        assert!(PulseSpec::new(1.0, -1.0).is_err());
        assert!(PulseSpec::with_window(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn dc_examples() {
        let dc = DcSpec::ramp(300.0, 100.0, 2.0).unwrap();
        assert_eq!(dc_field(0.0, &dc), 0.0);
        assert_eq!(dc_field(100.0, &dc), 300.0);
        assert_relative_eq!(dc_field(3.5, &dc), 150.0, max_relative = 1e-14);
        assert_eq!(dc.ramp_end(), Some(5.0));
        let dc = DcSpec::instantaneous(300.0).unwrap();
        assert_eq!(dc_field(-1e3, &dc), 300.0);
        assert!(DcSpec::ramp(300.0, 0.0, 0.0).is_err());
        assert!(DcSpec::instantaneous(-1.0).is_err());
    }

    #[test]
    fn molecule_validation() {
        assert!(MoleculeSpec::benzonitrile().validate().is_ok());
        assert!(MoleculeSpec::new("x", 2.0, 1.0, 3.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(MoleculeSpec::new("x", 1.0, 2.0, 3.0, -1.0, 1.0, 1.0, 1.0).is_err());
        assert!(MoleculeSpec::new("x", 1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0).is_err());
        let bn = MoleculeSpec::benzonitrile();
        assert_relative_eq!(bn.alpha_zx(), 11.15, max_relative = 1e-12);
        assert_relative_eq!(bn.alpha_yx(), 5.52, max_relative = 1e-12);
    }

    #[test]
    fn molecule_file_round_trip() {
        let bn = MoleculeSpec::benzonitrile();
        let text = bn.to_key_value_string();
        assert_eq!(text.parse::<MoleculeSpec>().unwrap(), bn);

        let err = MoleculeSpec::from_key_value_str("name = x\nB_x_MHz = 1\n").unwrap_err();
        assert!(err.to_string().contains("B_y_MHz"));
        let err = MoleculeSpec::from_key_value_str("bogus = 1").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
