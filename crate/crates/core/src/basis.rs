//! Symmetry-adapted symmetric-top bases.
//!
//! In parallel fields M and the parity of K are conserved. For M = 0 the
//! reflection through any plane containing the fields splits each K parity
//! into two further blocks, spanned by the combinations
//! `(|J K 0⟩ ± |J −K 0⟩)/√2` with K > 0 (plus `|J 0 0⟩` in the fully even
//! block). For M ≠ 0 a block holds every `|J K M⟩` with K of one parity and
//! either sign. Only M ≥ 0 is represented; −M blocks are degenerate copies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: i64) -> Self {
        if n.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn matches(self, n: i64) -> bool {
        Parity::of(n) == self
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

impl FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "even" | "e" => Ok(Parity::Even),
            "odd" | "o" => Ok(Parity::Odd),
            other => Err(Error::Parse(format!(
                "`{other}` is not a parity (even|odd)"
            ))),
        }
    }
}

/// One irreducible representation of the parallel-field symmetry group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetryBlock {
    m: u32,
    k_parity: Parity,
    sigma_parity: Option<Parity>,
}

impl SymmetryBlock {
    /// `sigma_parity` must be given for M = 0 and omitted otherwise.
    pub fn new(m: u32, k_parity: Parity, sigma_parity: Option<Parity>) -> Result<Self> {
        match (m, sigma_parity) {
            (0, None) => Err(Error::invalid(
                "SymmetryBlock",
                "M = 0 blocks need a reflection parity",
            )),
            (m, Some(_)) if m != 0 => Err(Error::invalid(
                "SymmetryBlock",
                "the reflection parity is only meaningful for M = 0",
            )),
            _ => Ok(SymmetryBlock {
                m,
                k_parity,
                sigma_parity,
            }),
        }
    }

    pub fn m0(k_parity: Parity, sigma_parity: Parity) -> Self {
        SymmetryBlock {
            m: 0,
            k_parity,
            sigma_parity: Some(sigma_parity),
        }
    }

    /// Panics if `m == 0`.
    pub fn with_m(m: u32, k_parity: Parity) -> Self {
        assert!(m > 0, "M = 0 blocks need a reflection parity");
        SymmetryBlock {
            m,
            k_parity,
            sigma_parity: None,
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k_parity(&self) -> Parity {
        self.k_parity
    }

    pub fn sigma_parity(&self) -> Option<Parity> {
        self.sigma_parity
    }

    /// Every block with the given M.
    pub fn all_for_m(m: u32) -> Vec<SymmetryBlock> {
        let parities = [Parity::Even, Parity::Odd];
        if m == 0 {
            parities
                .iter()
                .flat_map(|&k| parities.iter().map(move |&s| SymmetryBlock::m0(k, s)))
                .collect()
        } else {
            parities
                .iter()
                .map(|&k| SymmetryBlock::with_m(m, k))
                .collect()
        }
    }
}

impl fmt::Display for SymmetryBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sigma_parity {
            Some(s) => write!(f, "M={} K={} sigma={}", self.m, self.k_parity, s),
            None => write!(f, "M={} K={}", self.m, self.k_parity),
        }
    }
}

/// A basis function: either a plain `|J K M⟩` or, for M = 0, the normalized
/// combination `(|J K 0⟩ + sign·|J −K 0⟩)/√2` with K > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisFunction {
    pub j: u32,
    pub k: i32,
    pub m: u32,
    /// Coefficient sign of `|J −K M⟩`; `None` for plain functions.
    pub combo_sign: Option<i8>,
}

impl BasisFunction {
    pub fn plain(j: u32, k: i32, m: u32) -> Self {
        BasisFunction {
            j,
            k,
            m,
            combo_sign: None,
        }
    }

    pub fn symmetrized(j: u32, k: i32, sign: i8) -> Self {
        debug_assert!(k > 0 && (sign == 1 || sign == -1));
        BasisFunction {
            j,
            k,
            m: 0,
            combo_sign: Some(sign),
        }
    }

    /// Expansion in primitive `|J K M⟩` functions as `(K, coefficient)` pairs.
    pub fn components(&self) -> impl Iterator<Item = (i32, f64)> {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let (parts, n) = match self.combo_sign {
            None => ([(self.k, 1.0), (0, 0.0)], 1),
            Some(s) => ([(self.k, c), (-self.k, f64::from(s) * c)], 2),
        };
        parts.into_iter().take(n)
    }
}

impl fmt::Display for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.combo_sign {
            None => write!(f, "{} {} {} none", self.j, self.k, self.m),
            Some(s) => write!(f, "{} {} {} {:+}", self.j, self.k, self.m, s),
        }
    }
}

/// Ordered basis of one symmetry block, truncated at `J <= j_max`.
///
/// Functions are ordered by ascending J, then ascending (signed) K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    block: SymmetryBlock,
    j_max: u32,
    functions: Vec<BasisFunction>,
    /// `j_offsets[J - j_min]` is the index of the first function with that J.
    j_offsets: Vec<usize>,
}

impl Basis {
    pub fn block(&self) -> SymmetryBlock {
        self.block
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    pub fn j_min(&self) -> u32 {
        self.block.m
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn index_of(&self, f: &BasisFunction) -> Option<usize> {
        let range = self.j_range(f.j)?;
        range.clone().find(|&i| self.functions[i] == *f)
    }

    /// Index range of the functions with angular momentum `j`.
    pub fn j_range(&self, j: u32) -> Option<std::ops::Range<usize>> {
        if j < self.j_min() || j > self.j_max {
            return None;
        }
        let slot = (j - self.j_min()) as usize;
        Some(self.j_offsets[slot]..self.j_offsets[slot + 1])
    }

    /// One function per line: `J K M combo_sign`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# {} J_max={} dim={}",
            self.block,
            self.j_max,
            self.len()
        )?;
        for f in &self.functions {
            writeln!(w, "{f}")?;
        }
        Ok(())
    }
}

/// Ks (signed for M ≠ 0, positive representatives for M = 0) allowed at `j`.
fn allowed_ks(block: SymmetryBlock, j: u32) -> impl Iterator<Item = (i32, Option<i8>)> {
    let j = j as i32;
    let m0 = block.m == 0;
    let sigma = block.sigma_parity;
    let kp = block.k_parity;
    (-j..=j).filter_map(move |k| {
        if !kp.matches(k as i64) {
            return None;
        }
        if !m0 {
            return Some((k, None));
        }
        match k {
            0 => (sigma == Some(Parity::Even)).then_some((0, None)),
            k if k > 0 => {
                // Table of M = 0 functions: reflection-even combinations carry
                // (−1)^K on |J −K 0⟩, reflection-odd ones (−1)^(K+1).
                let base: i8 = if k % 2 == 0 { 1 } else { -1 };
                let sign = match sigma {
                    Some(Parity::Even) => base,
                    _ => -base,
                };
                Some((k, Some(sign)))
            }
            _ => None,
        }
    })
}

pub fn build_basis(block: SymmetryBlock, j_max: u32) -> Result<Basis> {
    if j_max < block.m {
        return Err(Error::Domain(format!(
            "J_max = {j_max} is below |M| = {}",
            block.m
        )));
    }
    let mut functions = Vec::new();
    let mut j_offsets = Vec::with_capacity((j_max - block.m + 2) as usize);
    for j in block.m..=j_max {
        j_offsets.push(functions.len());
        functions.extend(allowed_ks(block, j).map(|(k, sign)| BasisFunction {
            j,
            k,
            m: block.m,
            combo_sign: sign,
        }));
    }
    j_offsets.push(functions.len());
    Ok(Basis {
        block,
        j_max,
        functions,
        j_offsets,
    })
}

/// Number of functions `build_basis(block, j_max)` produces.
pub fn basis_dimension(block: SymmetryBlock, j_max: u32) -> Result<usize> {
    if j_max < block.m {
        return Err(Error::Domain(format!(
            "J_max = {j_max} is below |M| = {}",
            block.m
        )));
    }
    let per_j = |j: u32| -> u32 {
        let same_parity_as_j = block.k_parity.matches(j as i64);
        if block.m != 0 {
            // Ks of one parity in [−J, J].
            if same_parity_as_j {
                j + 1
            } else {
                j
            }
        } else {
            // Positive Ks of the parity, plus K = 0 in the fully even block.
            let positive = match block.k_parity {
                Parity::Even => j / 2,
                Parity::Odd => j.div_ceil(2),
            };
            let zero = u32::from(
                block.k_parity == Parity::Even && block.sigma_parity == Some(Parity::Even),
            );
            positive + zero
        }
    };
    Ok((block.m..=j_max).map(|j| per_j(j) as usize).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    const E: Parity = Parity::Even;
    const O: Parity = Parity::Odd;

    #[test]
    fn m0_even_even_up_to_j2() {
        let b = build_basis(SymmetryBlock::m0(E, E), 2).unwrap();
        let expected = vec![
            BasisFunction::plain(0, 0, 0),
            BasisFunction::plain(1, 0, 0),
            BasisFunction::plain(2, 0, 0),
            BasisFunction::symmetrized(2, 2, 1),
        ];
        assert_eq!(b.functions(), expected.as_slice());
        assert_eq!(basis_dimension(SymmetryBlock::m0(E, E), 2).unwrap(), 4);
        assert_eq!(basis_dimension(SymmetryBlock::m0(E, E), 0).unwrap(), 1);
    }

    #[test]
    fn m3_even_k() {
        let block = SymmetryBlock::with_m(3, E);
        let b = build_basis(block, 3).unwrap();
        let expected: Vec<_> = [-2, 0, 2]
            .iter()
            .map(|&k| BasisFunction::plain(3, k, 3))
            .collect();
        assert_eq!(b.functions(), expected.as_slice());
        assert_eq!(basis_dimension(block, 3).unwrap(), 3);
    }

    #[test]
    fn m0_odd_k_even_sigma() {
        let b = build_basis(SymmetryBlock::m0(O, E), 1).unwrap();
        assert_eq!(b.functions(), &[BasisFunction::symmetrized(1, 1, -1)]);
    }

    #[test]
    fn table_signs() {
        // (σ, K parity) -> sign of |J −K 0⟩ for the representative K.
        let cases = [
            (E, E, 2, 1),
            (O, E, 2, -1),
            (E, O, 1, -1),
            (O, O, 1, 1),
            (E, O, 3, -1),
        ];
        for (sigma, kp, k, sign) in cases {
            let b = build_basis(SymmetryBlock::m0(kp, sigma), 4).unwrap();
            let f = b.functions().iter().find(|f| f.k == k).unwrap();
            assert_eq!(f.combo_sign, Some(sign), "sigma={sigma} K={k}");
        }
    }

    #[test]
    fn invalid_requests() {
        assert!(build_basis(SymmetryBlock::with_m(3, E), 2).is_err());
        assert!(basis_dimension(SymmetryBlock::with_m(3, E), 2).is_err());
        assert!(SymmetryBlock::new(0, E, None).is_err());
        assert!(SymmetryBlock::new(2, E, Some(E)).is_err());
        assert!(SymmetryBlock::new(2, O, None).is_ok());
    }

    #[test]
    fn odd_k_m0_blocks_have_no_k0() {
        for sigma in [E, O] {
            let b = build_basis(SymmetryBlock::m0(O, sigma), 10).unwrap();
            assert!(b.functions().iter().all(|f| f.k != 0));
        }
        let b = build_basis(SymmetryBlock::m0(E, O), 10).unwrap();
        assert!(b.functions().iter().all(|f| f.k != 0));
    }

    #[test]
    fn m0_blocks_cover_all_k_states_exhaustively() {
        for j_max in 0..=10u32 {
            let mut count_per_j = vec![0usize; j_max as usize + 1];
            let mut seen = HashSet::new();
            for block in SymmetryBlock::all_for_m(0) {
                if j_max < block.m() {
                    continue;
                }
                let b = build_basis(block, j_max).unwrap();
                assert_eq!(b.len(), basis_dimension(block, j_max).unwrap());
                for f in b.functions() {
                    assert!(seen.insert((f.j, f.k, f.combo_sign)), "duplicate {f}");
                    count_per_j[f.j as usize] += 1;
                    assert!(f.k.unsigned_abs() <= f.j);
                }
            }
            for (j, n) in count_per_j.iter().enumerate() {
                assert_eq!(*n, 2 * j + 1, "J = {j}");
            }
        }
    }

    #[test]
    fn dimensions_match_enumeration() {
        for m in 0..6 {
            for block in SymmetryBlock::all_for_m(m) {
                for j_max in m..=14 {
                    assert_eq!(
                        build_basis(block, j_max).unwrap().len(),
                        basis_dimension(block, j_max).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn combos_are_normalized() {
        let b = build_basis(SymmetryBlock::m0(E, E), 6).unwrap();
        for f in b.functions() {
            let norm: f64 = f.components().map(|(_, c)| c * c).sum();
            assert!((norm - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_indexable() {
        let block = SymmetryBlock::with_m(2, O);
        let a = build_basis(block, 9).unwrap();
        let b = build_basis(block, 9).unwrap();
        assert_eq!(a, b);
        for (i, f) in a.functions().iter().enumerate() {
            assert_eq!(a.index_of(f), Some(i));
        }
    }

    #[test]
    fn dump_format() {
        let b = build_basis(SymmetryBlock::m0(O, E), 1).unwrap();
        let mut out = Vec::new();
        b.write_dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1), Some("1 1 0 -1"));
    }
}
