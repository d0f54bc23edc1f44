//! Matrix representations of the rotor Hamiltonian and the angular coupling
//! operators cos θ, cos²θ and sin²θ sin²χ in a symmetry-adapted basis.
//!
//! Primitive elements use the Wigner-D convention
//! `D^j_{mk}(φ,θ,χ) = e^{−imφ} d^j_{mk}(θ) e^{−ikχ}` with
//! `|J K M⟩ = √((2J+1)/8π²) D^{J*}_{MK}`. The angular operators are expanded
//! in rank-1 and rank-2 D functions:
//!
//! * `cos θ = D¹₀₀`
//! * `cos²θ = (2 D²₀₀ + 1)/3`
//! * `sin²θ sin²χ = (1 − cos²θ)/2 − ½√(2/3)(D²₀₂ + D²₀₋₂)`
//!
//! Elements between symmetrized combinations are obtained by expanding both
//! sides into primitives.

use std::sync::Arc;

use crate::basis::{Basis, BasisFunction};
use crate::error::{Error, Result};
use crate::sparse::{Pattern, SymmetricMatrix};
use crate::units::{polarizability_coupling, stark_coupling, MoleculeSpec};
use crate::wigner::ThreeJCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rotor,
    Cos,
    Cos2,
    Sin2Sin2,
}

/// Rotational constants in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationalConstants {
    pub b_x: f64,
    pub b_y: f64,
    pub b_z: f64,
}

impl From<&MoleculeSpec> for RotationalConstants {
    fn from(m: &MoleculeSpec) -> Self {
        RotationalConstants {
            b_x: m.b_x,
            b_y: m.b_y,
            b_z: m.b_z,
        }
    }
}

/// `⟨J K'|H_R|J K⟩` between primitive functions of the same J.
pub fn rotor_primitive(b: RotationalConstants, j: u32, k_bra: i32, k_ket: i32) -> f64 {
    let jj = f64::from(j) * f64::from(j + 1);
    let k = f64::from(k_ket);
    if k_bra == k_ket {
        0.5 * (b.b_x + b.b_y) * (jj - k * k) + b.b_z * k * k
    } else if (k_bra - k_ket).abs() == 2 {
        let s = f64::from((k_bra - k_ket).signum());
        let k1 = k + s;
        let k2 = k + 2.0 * s;
        let r = (jj - k * k1) * (jj - k1 * k2);
        0.25 * (b.b_x - b.b_y) * r.max(0.0).sqrt()
    } else {
        0.0
    }
}

/// `⟨J' K' M|D^λ_{0q}|J K M⟩`, nonzero only for `K' = K − q`.
#[allow(clippy::too_many_arguments)]
fn tensor_primitive(
    cache: &mut ThreeJCache,
    rank: i32,
    q: i32,
    j_bra: u32,
    k_bra: i32,
    j_ket: u32,
    k_ket: i32,
    m: u32,
) -> f64 {
    if k_bra + q != k_ket {
        return 0.0;
    }
    let (jb, jk, m) = (j_bra as i32, j_ket as i32, m as i32);
    if (jb - jk).abs() > rank {
        return 0.0;
    }
    let a = cache.get(jb, rank, jk, m, 0, -m);
    if a == 0.0 {
        return 0.0;
    }
    let b = cache.get(jb, rank, jk, k_bra, q, -k_ket);
    if b == 0.0 {
        return 0.0;
    }
    let phase = if (m - k_ket).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    let norm = (f64::from(2 * jb + 1) * f64::from(2 * jk + 1)).sqrt();
    norm * phase * a * b
}

fn primitive(
    kind: Kind,
    cache: &mut ThreeJCache,
    b: RotationalConstants,
    (jb, kb): (u32, i32),
    (jk, kk): (u32, i32),
    m: u32,
) -> f64 {
    let delta = if jb == jk && kb == kk { 1.0 } else { 0.0 };
    match kind {
        Kind::Rotor => {
            if jb == jk {
                rotor_primitive(b, jb, kb, kk)
            } else {
                0.0
            }
        }
        Kind::Cos => tensor_primitive(cache, 1, 0, jb, kb, jk, kk, m),
        Kind::Cos2 => (2.0 * tensor_primitive(cache, 2, 0, jb, kb, jk, kk, m) + delta) / 3.0,
        Kind::Sin2Sin2 => {
            let cos2 = (2.0 * tensor_primitive(cache, 2, 0, jb, kb, jk, kk, m) + delta) / 3.0;
            let d2 = tensor_primitive(cache, 2, 2, jb, kb, jk, kk, m)
                + tensor_primitive(cache, 2, -2, jb, kb, jk, kk, m);
            0.5 * (delta - cos2) - 0.5 * (2.0f64 / 3.0).sqrt() * d2
        }
    }
}

fn element(
    kind: Kind,
    cache: &mut ThreeJCache,
    b: RotationalConstants,
    bra: &BasisFunction,
    ket: &BasisFunction,
) -> f64 {
    let mut sum = 0.0;
    for (kb, cb) in bra.components() {
        for (kk, ck) in ket.components() {
            if (kb - kk).abs() > 2 {
                continue;
            }
            sum += cb * ck * primitive(kind, cache, b, (bra.j, kb), (ket.j, kk), bra.m);
        }
    }
    sum
}

fn could_couple(a: &BasisFunction, b: &BasisFunction) -> bool {
    if a.j.abs_diff(b.j) > 2 {
        return false;
    }
    a.components()
        .any(|(ka, _)| b.components().any(|(kb, _)| (ka - kb).abs() <= 2))
}

/// Assembles the requested operators on a single shared sparsity pattern.
fn assemble(basis: &Basis, b: RotationalConstants, kinds: &[Kind]) -> Vec<SymmetricMatrix> {
    const DROP: f64 = 1e-14;
    let funcs = basis.functions();
    let mut cache = ThreeJCache::new();
    let mut triplets: Vec<(usize, usize)> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let rotor_scale = b.b_x.abs().max(b.b_y.abs()).max(b.b_z.abs()).max(1.0);
    for (a, fa) in funcs.iter().enumerate() {
        let end = basis
            .j_range((fa.j + 2).min(basis.j_max()))
            .map_or(funcs.len(), |r| r.end);
        for (bi, fb) in funcs.iter().enumerate().take(end).skip(a) {
            if !could_couple(fa, fb) {
                continue;
            }
            let mut row = Vec::with_capacity(kinds.len());
            let mut any = false;
            for &kind in kinds {
                let mut v = element(kind, &mut cache, b, fa, fb);
                let scale = if kind == Kind::Rotor {
                    rotor_scale
                } else {
                    1.0
                };
                if v.abs() < DROP * scale {
                    v = 0.0;
                }
                any |= v != 0.0;
                row.push(v);
            }
            // Keep the diagonal so that every matrix has a full diagonal slot.
            if any || a == bi {
                triplets.push((a, bi));
                for (k, v) in row.into_iter().enumerate() {
                    values[k].push(v);
                }
            }
        }
    }
    let dim = funcs.len();
    let first = SymmetricMatrix::from_triplets(
        dim,
        triplets
            .iter()
            .zip(&values[0])
            .map(|(&(r, c), &v)| (r, c, v)),
    )
    .expect("triplets are generated in order without duplicates");
    let pattern: Arc<Pattern> = first.pattern().clone();
    let mut out = vec![first];
    for vals in values.into_iter().skip(1) {
        out.push(SymmetricMatrix::with_pattern(pattern.clone(), vals).expect("same length"));
    }
    out
}

pub fn rotor_matrix(basis: &Basis, b_x: f64, b_y: f64, b_z: f64) -> SymmetricMatrix {
    let b = RotationalConstants { b_x, b_y, b_z };
    assemble(basis, b, &[Kind::Rotor]).remove(0)
}

const NO_ROTOR: RotationalConstants = RotationalConstants {
    b_x: 0.0,
    b_y: 0.0,
    b_z: 0.0,
};

pub fn cos_theta_matrix(basis: &Basis) -> SymmetricMatrix {
    assemble(basis, NO_ROTOR, &[Kind::Cos]).remove(0)
}

pub fn cos2_theta_matrix(basis: &Basis) -> SymmetricMatrix {
    assemble(basis, NO_ROTOR, &[Kind::Cos2]).remove(0)
}

pub fn sin2theta_sin2chi_matrix(basis: &Basis) -> SymmetricMatrix {
    assemble(basis, NO_ROTOR, &[Kind::Sin2Sin2]).remove(0)
}

/// Field prefactors (MHz) multiplying the angular matrices.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldCouplings {
    /// μ·E_s.
    pub stark: f64,
    /// I·α^{zx}/(2ε₀c).
    pub laser_zx: f64,
    /// I·α^{yx}/(2ε₀c).
    pub laser_yx: f64,
}

impl FieldCouplings {
    pub fn new(mol: &MoleculeSpec, es_vcm: f64, intensity_wcm2: f64) -> Result<Self> {
        Ok(FieldCouplings {
            stark: stark_coupling(mol.mu, es_vcm)?,
            laser_zx: polarizability_coupling(mol.alpha_zx(), intensity_wcm2)?,
            laser_yx: polarizability_coupling(mol.alpha_yx(), intensity_wcm2)?,
        })
    }
}

/// The rotor Hamiltonian and angular operators of one basis, sharing a
/// sparsity pattern so that field-dressed Hamiltonians are cheap to form.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    basis: Arc<Basis>,
    constants: RotationalConstants,
    rotor: SymmetricMatrix,
    cos: SymmetricMatrix,
    cos2: SymmetricMatrix,
    sin2_sin2: SymmetricMatrix,
}

impl OperatorSet {
    pub fn build(basis: Arc<Basis>, constants: RotationalConstants) -> Self {
        let mut mats = assemble(
            &basis,
            constants,
            &[Kind::Rotor, Kind::Cos, Kind::Cos2, Kind::Sin2Sin2],
        )
        .into_iter();
        let mut next = || mats.next().expect("four operators");
        OperatorSet {
            basis,
            constants,
            rotor: next(),
            cos: next(),
            cos2: next(),
            sin2_sin2: next(),
        }
    }

    pub fn for_molecule(basis: Arc<Basis>, mol: &MoleculeSpec) -> Self {
        Self::build(basis, mol.into())
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn constants(&self) -> RotationalConstants {
        self.constants
    }

    pub fn rotor(&self) -> &SymmetricMatrix {
        &self.rotor
    }

    pub fn cos_theta(&self) -> &SymmetricMatrix {
        &self.cos
    }

    pub fn cos2_theta(&self) -> &SymmetricMatrix {
        &self.cos2
    }

    pub fn sin2theta_sin2chi(&self) -> &SymmetricMatrix {
        &self.sin2_sin2
    }

    pub fn zeros(&self) -> SymmetricMatrix {
        SymmetricMatrix::zeros_like(&self.rotor)
    }

    /// `out = H_R − stark·cos θ − laser_zx·cos²θ − laser_yx·sin²θ sin²χ`.
    pub fn assign_hamiltonian(&self, out: &mut SymmetricMatrix, c: FieldCouplings) -> Result<()> {
        out.assign_linear_combination(&[
            (1.0, &self.rotor),
            (-c.stark, &self.cos),
            (-c.laser_zx, &self.cos2),
            (-c.laser_yx, &self.sin2_sin2),
        ])
    }

    pub fn hamiltonian(&self, c: FieldCouplings) -> SymmetricMatrix {
        let mut h = self.zeros();
        self.assign_hamiltonian(&mut h, c).expect("shared pattern");
        h
    }

    /// The angular part of the laser interaction, `α^{zx} cos²θ + α^{yx} sin²θ sin²χ`
    /// in Å³; the laser Hamiltonian is `−polarizability_coupling(1, I)` times this.
    pub fn laser_operator(&self, mol: &MoleculeSpec) -> SymmetricMatrix {
        SymmetricMatrix::linear_combination(&[
            (mol.alpha_zx(), &self.cos2),
            (mol.alpha_yx(), &self.sin2_sin2),
        ])
        .expect("shared pattern")
    }

    pub(crate) fn check_molecule(&self, mol: &MoleculeSpec) -> Result<()> {
        if RotationalConstants::from(mol) != self.constants {
            return Err(Error::Usage(format!(
                "operator set was built for rotational constants {:?}, not those of {}",
                self.constants, mol.name
            )));
        }
        Ok(())
    }
}

/// `H = H_R − μE_s cos θ − (I/2ε₀c)(α^{zx} cos²θ + α^{yx} sin²θ sin²χ)` in MHz.
pub fn total_hamiltonian(
    ops: &OperatorSet,
    mol: &MoleculeSpec,
    es_vcm: f64,
    intensity_wcm2: f64,
) -> Result<SymmetricMatrix> {
    ops.check_molecule(mol)?;
    let c = FieldCouplings::new(mol, es_vcm, intensity_wcm2)?;
    if !(c.stark.is_finite() && c.laser_zx.is_finite() && c.laser_yx.is_finite()) {
        return Err(Error::Domain("field couplings must be finite".into()));
    }
    Ok(ops.hamiltonian(c))
}
