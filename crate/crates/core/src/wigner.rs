//! Wigner 3j symbols for integer angular momenta.
//!
//! The Racah sum is evaluated in exact rational arithmetic and only the final
//! square root is taken in floating point, so there is no cancellation error.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

const MAX_FACTORIAL: usize = 400;

fn factorial(n: i64) -> &'static BigUint {
    static TABLE: OnceLock<Vec<BigUint>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(MAX_FACTORIAL + 1);
        t.push(BigUint::one());
        for k in 1..=MAX_FACTORIAL {
            let next = &t[k - 1] * BigUint::from(k);
            t.push(next);
        }
        t
    });
    assert!(
        n >= 0 && (n as usize) <= MAX_FACTORIAL,
        "factorial argument {n} out of range"
    );
    &table[n as usize]
}

fn fact_int(n: i64) -> BigInt {
    BigInt::from(factorial(n).clone())
}

fn triangle(a: i64, b: i64, c: i64) -> bool {
    c >= (a - b).abs() && c <= a + b
}

/// The 3j symbol `(j1 j2 j3; m1 m2 m3)`.
pub fn wigner_3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    let (j1, j2, j3) = (j1 as i64, j2 as i64, j3 as i64);
    let (m1, m2, m3) = (m1 as i64, m2 as i64, m3 as i64);
    if j1 < 0 || j2 < 0 || j3 < 0 {
        return 0.0;
    }
    if m1 + m2 + m3 != 0 || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if !triangle(j1, j2, j3) {
        return 0.0;
    }
    // (j1 j2 j3; 0 0 0) vanishes for odd j1 + j2 + j3.
    if m1 == 0 && m2 == 0 && m3 == 0 && (j1 + j2 + j3) % 2 == 1 {
        return 0.0;
    }

    let t_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let t_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let denom = fact_int(t)
            * fact_int(j3 - j2 + t + m1)
            * fact_int(j3 - j1 + t - m2)
            * fact_int(j1 + j2 - j3 - t)
            * fact_int(j1 - t - m1)
            * fact_int(j2 - t + m2);
        let sign = if t % 2 == 0 {
            BigInt::one()
        } else {
            -BigInt::one()
        };
        sum += BigRational::new(sign, denom);
    }
    if sum.is_zero() {
        return 0.0;
    }

    let delta = BigRational::new(
        fact_int(j1 + j2 - j3) * fact_int(j1 - j2 + j3) * fact_int(-j1 + j2 + j3),
        fact_int(j1 + j2 + j3 + 1),
    );
    let numer = fact_int(j1 + m1)
        * fact_int(j1 - m1)
        * fact_int(j2 + m2)
        * fact_int(j2 - m2)
        * fact_int(j3 + m3)
        * fact_int(j3 - m3);
    let squared = delta * BigRational::from_integer(numer) * &sum * &sum;
    let magnitude = squared.to_f64().unwrap_or(f64::NAN).sqrt();

    let phase_negative = (j1 - j2 - m3).rem_euclid(2) == 1;
    let negative = phase_negative ^ sum.is_negative();
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Memoizing front end for repeated symbol evaluations.
#[derive(Debug, Default)]
pub struct ThreeJCache {
    table: HashMap<[i32; 6], f64>,
}

impl ThreeJCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
        *self
            .table
            .entry([j1, j2, j3, m1, m2, m3])
            .or_insert_with(|| wigner_3j(j1, j2, j3, m1, m2, m3))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}
