//! Frozen-field eigenstates: diagonalization, field-free labels, intensity
//! scans with state tracking, avoided-crossing detection and the
//! adiabaticity parameter η.
//!
//! Adiabatic states are identified by their energy rank within a symmetry
//! block. Inside a block there are no true crossings once the DC field is on,
//! so the k-th lowest state at any field correlates with the k-th lowest
//! field-free level and inherits its `J_{KaKc}M` label.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::operators::{rotor_primitive, FieldCouplings, OperatorSet, RotationalConstants};
use crate::sparse::SymmetricMatrix;
use crate::units::{polarizability_coupling, MoleculeSpec, PulseSpec, CYCLES_PER_MHZ_NS};

/// Field-free asymmetric-top label `J_{Ka Kc} M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateLabel {
    pub j: u32,
    pub ka: u32,
    pub kc: u32,
    pub m: u32,
}

impl StateLabel {
    pub fn new(j: u32, ka: u32, kc: u32, m: u32) -> Self {
        StateLabel { j, ka, kc, m }
    }
}

/// Written as `3_03_3`; when Ka or Kc has two digits the pair is separated
/// by a dash, as in `12_10-3_3`.
impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ka < 10 && self.kc < 10 {
            write!(f, "{}_{}{}_{}", self.j, self.ka, self.kc, self.m)
        } else {
            write!(f, "{}_{}-{}_{}", self.j, self.ka, self.kc, self.m)
        }
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("`{s}` is not a state label (expected e.g. 3_03_3)"));
        let parts: Vec<&str> = s.trim().split('_').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |t: &str| t.parse::<u32>().map_err(|_| bad());
        let (ka, kc) = match parts[1].split_once('-') {
            Some((a, c)) => (num(a)?, num(c)?),
            None if parts[1].len() == 2 && parts[1].is_ascii() => {
                (num(&parts[1][..1])?, num(&parts[1][1..])?)
            }
            None => return Err(bad()),
        };
        let label = StateLabel::new(num(parts[0])?, ka, kc, num(parts[2])?);
        if label.ka > label.j
            || label.kc > label.j
            || !(label.ka + label.kc == label.j || label.ka + label.kc == label.j + 1)
        {
            return Err(Error::Parse(format!("`{s}` violates Ka + Kc ∈ {{J, J+1}}")));
        }
        if label.m > label.j {
            return Err(Error::Parse(format!("`{s}` has M > J")));
        }
        Ok(label)
    }
}

/// Lowest eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// One eigenvector per column.
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

/// Dense diagonalization returning the `n_lowest` eigenpairs.
pub fn diagonalize(h: &SymmetricMatrix, n_lowest: usize) -> Result<Eigenpairs> {
    if h.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    diagonalize_dense(h.to_dense(), n_lowest)
}

pub fn diagonalize_dense(a: DMatrix<f64>, n_lowest: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    let take = n_lowest.min(n);
    let norm = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen(format!("symmetric eigensolver did not converge (dim {n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(take);
    let mut vectors = DMatrix::zeros(n, take);
    for (col, &i) in order.iter().take(take).enumerate() {
        let v = eig.eigenvectors.column(i);
        let residual = (&a * v - v * eig.eigenvalues[i]).norm();
        if residual > 1e-8 * norm.max(1.0) {
            return Err(Error::Eigen(format!(
                "eigenpair {col} has residual {residual:.3e} (matrix scale {norm:.3e})"
            )));
        }
        values.push(eig.eigenvalues[i]);
        vectors.set_column(col, &v);
    }
    Ok(Eigenpairs { values, vectors })
}

/// A field-free eigenstate of the rotor within one block.
#[derive(Debug, Clone)]
pub struct FieldFreeState {
    pub label: StateLabel,
    pub energy: f64,
    pub vector: DVector<f64>,
}

/// Field-free eigenstates of a block ordered by energy (ties: lower Ka first).
///
/// Each J manifold is split by the twofold rotation about the molecular x
/// axis, which maps `|J K M⟩` to `(−1)^J |J −K M⟩` and has eigenvalue
/// `(−1)^Kc`. Within one such sector and fixed K parity the levels are
/// non-degenerate and Ka increases with energy, which fixes the labels.
pub fn field_free_states(basis: &Basis, constants: RotationalConstants) -> Vec<FieldFreeState> {
    let funcs = basis.functions();
    let dim = funcs.len();
    let m = basis.block().m();
    let mut out = Vec::new();
    for j in basis.j_min()..=basis.j_max() {
        let range = basis.j_range(j).expect("j within the basis");
        // Sector basis vectors in block coordinates, keyed by Kc parity (0 even, 1 odd).
        let mut sectors: [Vec<Vec<(usize, f64)>>; 2] = [Vec::new(), Vec::new()];
        let sign_j: i32 = if j % 2 == 0 { 1 } else { -1 };
        for i in range.clone() {
            let f = &funcs[i];
            match f.combo_sign {
                Some(s) => {
                    let p = sign_j * i32::from(s);
                    sectors[usize::from(p < 0)].push(vec![(i, 1.0)]);
                }
                None if f.k == 0 => sectors[usize::from(sign_j < 0)].push(vec![(i, 1.0)]),
                None if f.k > 0 => {
                    let partner = basis
                        .index_of(&crate::basis::BasisFunction::plain(j, -f.k, m))
                        .expect("both signs of K are present for M > 0");
                    let c = std::f64::consts::FRAC_1_SQRT_2;
                    for p in [1, -1] {
                        let coef = f64::from(p * sign_j) * c;
                        sectors[usize::from(p < 0)].push(vec![(i, c), (partner, coef)]);
                    }
                }
                None => {}
            }
        }
        let k_parity_odd = funcs[range.start..range.end]
            .first()
            .is_some_and(|f| f.k % 2 != 0);
        for (kc_odd, sector) in sectors.iter().enumerate() {
            if sector.is_empty() {
                continue;
            }
            let n = sector.len();
            let mut h = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let mut v = 0.0;
                    for &(ia, ca) in &sector[a] {
                        for &(ib, cb) in &sector[b] {
                            v += ca * cb * rotor_element(constants, &funcs[ia], &funcs[ib]);
                        }
                    }
                    h[(a, b)] = v;
                }
            }
            let eig = diagonalize_dense(h, n).expect("small rotor blocks always converge");
            let kas: Vec<u32> = (0..=j)
                .filter(|&ka| (ka % 2 == 1) == k_parity_odd)
                .filter(|&ka| {
                    // Kc = J − Ka or J + 1 − Ka, whichever has the sector's parity.
                    let kc = if (j - ka) % 2 == kc_odd as u32 {
                        j - ka
                    } else {
                        j + 1 - ka
                    };
                    kc <= j
                })
                .collect();
            debug_assert_eq!(kas.len(), n, "J={j} sector {kc_odd}");
            for (r, &ka) in kas.iter().enumerate().take(n) {
                let kc = if (j - ka) % 2 == kc_odd as u32 {
                    j - ka
                } else {
                    j + 1 - ka
                };
                let mut vector = DVector::zeros(dim);
                for (s, comps) in sector.iter().enumerate() {
                    for &(i, c) in comps {
                        vector[i] += c * eig.vectors[(s, r)];
                    }
                }
                out.push(FieldFreeState {
                    label: StateLabel::new(j, ka, kc, m),
                    energy: eig.values[r],
                    vector,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.label.ka.cmp(&b.label.ka))
            .then(a.label.j.cmp(&b.label.j))
    });
    out
}

fn rotor_element(
    b: RotationalConstants,
    bra: &crate::basis::BasisFunction,
    ket: &crate::basis::BasisFunction,
) -> f64 {
    if bra.j != ket.j {
        return 0.0;
    }
    let mut sum = 0.0;
    for (kb, cb) in bra.components() {
        for (kk, ck) in ket.components() {
            sum += cb * ck * rotor_primitive(b, bra.j, kb, kk);
        }
    }
    sum
}

/// Field-free labels of the block in order of increasing energy.
pub fn label_by_field_free(basis: &Basis, constants: RotationalConstants) -> Vec<StateLabel> {
    field_free_states(basis, constants)
        .into_iter()
        .map(|s| s.label)
        .collect()
}

/// Energy rank of `label` within the block.
pub fn rank_of(labels: &[StateLabel], label: StateLabel) -> Result<usize> {
    labels
        .iter()
        .position(|&l| l == label)
        .ok_or_else(|| Error::LabelNotFound(label.to_string()))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!(
            "log grid needs 0 < lo < hi (got {lo}, {hi})"
        )));
    }
    if n < 2 {
        return Err(Error::Domain("log grid needs at least two points".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ScanFlag {
    /// Best overlap of a state with the next grid point fell below 0.5.
    LowOverlap {
        point: usize,
        rank: usize,
        overlap: f64,
    },
    /// Two candidates matched a state almost equally well.
    Ambiguous { point: usize, rank: usize },
    /// States exchanged energy order between two grid points, so the grid
    /// does not resolve an avoided crossing.
    Unresolved {
        point: usize,
        rank: usize,
        to_rank: usize,
    },
}

/// Eigenpairs of the frozen-field Hamiltonian along an intensity grid.
#[derive(Debug, Clone)]
pub struct AdiabaticScan {
    pub es: f64,
    pub intensities: Vec<f64>,
    /// Ascending energies (MHz) of the lowest states at each grid point.
    pub energies: Vec<Vec<f64>>,
    /// Eigenvectors (columns by rank) with phases fixed so that overlaps
    /// between consecutive points are non-negative.
    pub vectors: Vec<DMatrix<f64>>,
    /// Field-free label of each rank.
    pub labels: Vec<StateLabel>,
    /// `assignment[p][r]`: rank at point `p + 1` of the state with maximal
    /// overlap with rank `r` at point `p`.
    pub assignment: Vec<Vec<usize>>,
    pub flags: Vec<ScanFlag>,
}

impl AdiabaticScan {
    pub fn n_track(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn rank_of(&self, label: StateLabel) -> Result<usize> {
        rank_of(&self.labels, label)
    }

    /// Energies following the maximal-overlap tracks from the first point,
    /// i.e. diabatic curves where the grid jumps across narrow crossings.
    pub fn tracked_energies(&self) -> Vec<Vec<f64>> {
        let n = self.n_track();
        let mut pos: Vec<usize> = (0..n).collect();
        let mut out = vec![Vec::with_capacity(self.len()); n];
        for p in 0..self.len() {
            for t in 0..n {
                out[t].push(self.energies[p][pos[t]]);
            }
            if p + 1 < self.len() {
                for r in pos.iter_mut() {
                    *r = self.assignment[p][*r];
                }
            }
        }
        out
    }
}

fn diagonalize_point(
    ops: &OperatorSet,
    mol: &MoleculeSpec,
    es: f64,
    intensity: f64,
    n: usize,
) -> Result<Eigenpairs> {
    let h = ops.hamiltonian(FieldCouplings::new(mol, es, intensity)?);
    diagonalize(&h, n)
}

/// Scans the lowest `n_track` adiabatic states over an increasing intensity grid.
pub fn scan_intensity(
    ops: &OperatorSet,
    mol: &MoleculeSpec,
    es: f64,
    grid: &[f64],
    n_track: usize,
) -> Result<AdiabaticScan> {
    ops.check_molecule(mol)?;
    if grid.is_empty() {
        return Err(Error::Domain("intensity grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "intensity grid must be strictly increasing".into(),
        ));
    }
    if n_track == 0 {
        return Err(Error::Domain("n_track must be at least 1".into()));
    }
    let n_track = n_track.min(ops.dim());
    let labels: Vec<StateLabel> = label_by_field_free(ops.basis(), ops.constants())
        .into_iter()
        .take(n_track)
        .collect();

    let points: Vec<Result<Eigenpairs>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            grid.par_iter()
                .map(|&i| diagonalize_point(ops, mol, es, i, n_track))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            grid.iter()
                .map(|&i| diagonalize_point(ops, mol, es, i, n_track))
                .collect()
        }
    };
    let mut energies = Vec::with_capacity(grid.len());
    let mut vectors: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    for p in points {
        let p = p?;
        energies.push(p.values);
        vectors.push(p.vectors);
    }

    let mut assignment = Vec::with_capacity(grid.len().saturating_sub(1));
    let mut flags = Vec::new();
    for p in 0..grid.len().saturating_sub(1) {
        let (prev, next) = vectors.split_at_mut(p + 1);
        let (a, b) = (&prev[p], &mut next[0]);
        let overlap = a.transpose() * &*b;
        for r in 0..n_track {
            if overlap[(r, r)] < 0.0 {
                b.column_mut(r).neg_mut();
            }
        }
        let overlap = a.transpose() * &*b;
        let (perm, step_flags) = match_states(&overlap, p);
        flags.extend(step_flags);
        assignment.push(perm);
    }
    Ok(AdiabaticScan {
        es,
        intensities: grid.to_vec(),
        energies,
        vectors,
        labels,
        assignment,
        flags,
    })
}

/// Greedy maximal-|overlap| bijection between ranks at consecutive points.
fn match_states(overlap: &DMatrix<f64>, point: usize) -> (Vec<usize>, Vec<ScanFlag>) {
    let n = overlap.nrows();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            pairs.push((overlap[(r, c)].abs(), r, c));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut flags = Vec::new();
    for (v, r, c) in pairs {
        if perm[r] != usize::MAX || taken[c] {
            continue;
        }
        perm[r] = c;
        taken[c] = true;
        if v < 0.5 {
            flags.push(ScanFlag::LowOverlap {
                point,
                rank: r,
                overlap: v,
            });
        }
    }
    for r in 0..n {
        let mut row: Vec<f64> = (0..n).map(|c| overlap[(r, c)].abs()).collect();
        row.sort_by(|a, b| b.total_cmp(a));
        if n > 1 && row[0] - row[1] < 1e-6 {
            flags.push(ScanFlag::Ambiguous { point, rank: r });
        }
        if perm[r] != r {
            flags.push(ScanFlag::Unresolved {
                point,
                rank: r,
                to_rank: perm[r],
            });
        }
    }
    (perm, flags)
}

/// A local minimum of the gap between two adjacent adiabatic states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub lower: usize,
    pub upper: usize,
    pub lower_label: StateLabel,
    pub upper_label: StateLabel,
    /// Refined intensity of the minimum (W/cm²).
    pub i_star: f64,
    pub es: f64,
    /// Minimal gap (MHz).
    pub gap: f64,
}

/// Reports every interior local minimum of `E_{k+1} − E_k`, refined by a
/// parabola through the three surrounding points in ln I.
pub fn detect_crossings(scan: &AdiabaticScan) -> Vec<CrossingReport> {
    let n = scan.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for k in 0..scan.n_track().saturating_sub(1) {
        let gap: Vec<f64> = scan.energies.iter().map(|e| e[k + 1] - e[k]).collect();
        for p in 1..n - 1 {
            if !(gap[p] < gap[p - 1] && gap[p] <= gap[p + 1]) {
                continue;
            }
            let x = [
                scan.intensities[p - 1].ln(),
                scan.intensities[p].ln(),
                scan.intensities[p + 1].ln(),
            ];
            let (x_star, g_star) = parabola_vertex(x, [gap[p - 1], gap[p], gap[p + 1]])
                .filter(|&(xs, g)| xs >= x[0] && xs <= x[2] && g > 0.0 && g <= gap[p])
                .unwrap_or((x[1], gap[p]));
            out.push(CrossingReport {
                lower: k,
                upper: k + 1,
                lower_label: scan.labels[k],
                upper_label: scan.labels[k + 1],
                i_star: x_star.exp(),
                es: scan.es,
                gap: g_star,
            });
        }
    }
    out.sort_by(|a, b| a.i_star.total_cmp(&b.i_star).then(a.lower.cmp(&b.lower)));
    out
}

fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if !(a > 0.0) {
        return None;
    }
    let b = d1 - a * (x[0] + x[1]);
    let xs = -b / (2.0 * a);
    let ys = y[0] + d1 * (xs - x[0]) + a * (xs - x[0]) * (xs - x[1]);
    Some((xs, ys))
}

/// η = ħ|⟨i|∂H/∂t|j⟩|/(E_i − E_j)² at one scan point, for an intensity
/// slope `di_dt` (W/cm² per ns). Coincident energies give `f64::INFINITY`.
pub fn adiabaticity_eta(
    scan: &AdiabaticScan,
    point: usize,
    (i, j): (usize, usize),
    di_dt: f64,
    ops: &OperatorSet,
    mol: &MoleculeSpec,
) -> Result<f64> {
    if i == j {
        return Err(Error::Domain("η needs two distinct states".into()));
    }
    if point >= scan.len() || i.max(j) >= scan.n_track() {
        return Err(Error::Domain(format!(
            "point {point} or state pair ({i}, {j}) outside the scan"
        )));
    }
    let laser = ops.laser_operator(mol);
    Ok(eta_with(&laser, scan, point, (i, j), di_dt))
}

fn eta_with(
    laser: &SymmetricMatrix,
    scan: &AdiabaticScan,
    point: usize,
    (i, j): (usize, usize),
    di_dt: f64,
) -> f64 {
    if di_dt == 0.0 {
        return 0.0;
    }
    let v = &scan.vectors[point];
    let vi = v.column(i);
    let vj = v.column(j);
    let elem = laser.bilinear(vi.as_slice(), vj.as_slice());
    // dH/dt in MHz per ns.
    let rate = (polarizability_coupling(1.0, 1.0).expect("unit coupling") * di_dt * elem).abs();
    let gap = scan.energies[point][i] - scan.energies[point][j];
    if gap == 0.0 {
        return f64::INFINITY;
    }
    rate / (2.0 * std::f64::consts::PI * CYCLES_PER_MHZ_NS * gap * gap)
}

/// Maximum of η over the rising edge of `pulse`, evaluated at the scan's
/// intensities (those above the peak are skipped).
pub fn max_eta_over_pulse(
    scan: &AdiabaticScan,
    pair: (usize, usize),
    pulse: &PulseSpec,
    ops: &OperatorSet,
    mol: &MoleculeSpec,
) -> Result<(f64, f64)> {
    if pair.0 == pair.1 || pair.0.max(pair.1) >= scan.n_track() {
        return Err(Error::Domain(format!("invalid state pair {pair:?}")));
    }
    let laser = ops.laser_operator(mol);
    let mut best = (0.0, f64::NAN);
    for (p, &i) in scan.intensities.iter().enumerate() {
        let Some(slope) = pulse.rising_slope_at(i) else {
            continue;
        };
        let eta = eta_with(&laser, scan, p, pair, slope);
        if eta > best.0 || best.1.is_nan() {
            best = (eta, i);
        }
    }
    Ok(best)
}

/// Expectation of a real symmetric operator in a real vector.
pub fn real_expectation(op: &SymmetricMatrix, v: &DVector<f64>) -> f64 {
    op.bilinear(v.as_slice(), v.as_slice())
}
