//! The recursive small-divisor functions `h_J`, `f_{J,K}`, `g_{J,K}` and
//! `𝒢_{J,0}`, evaluated pointwise over any field-like scalar.
//!
//! With [`Rational`] every value is exact, which is what the identity checks
//! run on. The float instantiation drives the error sums in [`crate::bounds`].

mod symfn;
mod verify;

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use symfn::{sym_product, sym_product_by_permutations, SymFunction};
pub use verify::{
    catalan, verify_catalan, verify_identities, Identity, IdentityReport, Witness, DEFAULT_J_MAX,
};

pub type Rational = BigRational;

/// A denominator `multiplier·η − (sum of `terms` frequencies)` vanished.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pole: {multiplier}·eta minus a sum of {terms} frequencies vanishes")]
pub struct PoleError {
    pub multiplier: i64,
    pub terms: usize,
}

/// Arithmetic needed by the recursions.
pub trait DivisorScalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_i64(n: i64) -> Self;
    /// Whether a denominator counts as a pole.
    fn is_pole(&self) -> bool;
    fn magnitude(&self) -> f64;
}

impl DivisorScalar for f64 {
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn is_pole(&self) -> bool {
        self.abs() < 1e-12
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl DivisorScalar for BigRational {
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn is_pole(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
}

/// `ω_a`: −1 at 0, 1/2 at ±1, 0 elsewhere.
pub fn omega<T: DivisorScalar>(a: i64) -> T {
    match a {
        0 => T::from_i64(-1),
        1 | -1 => T::from_i64(1) / T::from_i64(2),
        _ => T::from_i64(0),
    }
}

/// Memoised `f_{J,K}`, `g_{J,K}` on sub-multisets of a fixed frequency list.
///
/// Sub-multisets are addressed by bitmask over the list, so `(mask, K)` keys
/// the memo. A table is owned by one caller; build one per thread.
pub struct DivisorTable<T> {
    eta: T,
    phis: Vec<T>,
    memo_f: HashMap<(u32, i64), Result<T, PoleError>>,
    memo_g: HashMap<(u32, i64), Result<T, PoleError>>,
}

impl<T: DivisorScalar> DivisorTable<T> {
    pub fn new(eta: T, phis: Vec<T>) -> Self {
        assert!(phis.len() < 32, "at most 31 frequencies per table");
        DivisorTable {
            eta,
            phis,
            memo_f: HashMap::new(),
            memo_g: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }

    pub fn full_mask(&self) -> u32 {
        (1u32 << self.phis.len()) - 1
    }

    fn masked_sum(&self, mask: u32) -> T {
        let mut sum = T::from_i64(0);
        for (i, phi) in self.phis.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sum = sum + phi.clone();
            }
        }
        sum
    }

    /// `(f_{J,K}, g_{J,K})` at the frequencies selected by `mask`, `J = |mask|`.
    pub fn fg(&mut self, mask: u32, k: i64) -> Result<(T, T), PoleError> {
        Ok((self.f(mask, k)?, self.g(mask, k)?))
    }

    pub fn f(&mut self, mask: u32, k: i64) -> Result<T, PoleError> {
        if let Some(hit) = self.memo_f.get(&(mask, k)) {
            return hit.clone();
        }
        let result = self.compute_f(mask, k);
        self.memo_f.insert((mask, k), result.clone());
        result
    }

    pub fn g(&mut self, mask: u32, k: i64) -> Result<T, PoleError> {
        if let Some(hit) = self.memo_g.get(&(mask, k)) {
            return hit.clone();
        }
        let result = self.compute_g(mask, k);
        self.memo_g.insert((mask, k), result.clone());
        result
    }

    fn outside(mask: u32, k: i64) -> bool {
        let j = mask.count_ones() as i64;
        j <= 0 || k < 0 || k > j
    }

    fn compute_f(&mut self, mask: u32, k: i64) -> Result<T, PoleError> {
        let zero = T::from_i64(0);
        if Self::outside(mask, k) {
            return Ok(zero);
        }
        if self.eta.is_pole() {
            return Err(PoleError {
                multiplier: 1,
                terms: 0,
            });
        }
        let j = mask.count_ones() as i64;
        if j == 1 {
            let inv = T::from_i64(1) / self.eta.clone();
            return Ok(if k == 0 { -inv } else { inv });
        }
        // f_{J,K} = (1/η) Σ_a ω_a ⊙ g_{J-1,K+a}; ω is constant so the
        // symmetric product averages g over the J ways to drop one frequency.
        let mut acc = zero.clone();
        for a in -1..=1 {
            let weight: T = omega(a);
            let mut inner = zero.clone();
            for i in 0..self.phis.len() {
                if mask >> i & 1 == 1 {
                    inner = inner + self.g(mask & !(1 << i), k + a)?;
                }
            }
            acc = acc + weight * inner;
        }
        Ok(acc / (T::from_i64(j) * self.eta.clone()))
    }

    fn compute_g(&mut self, mask: u32, k: i64) -> Result<T, PoleError> {
        if k == 0 || Self::outside(mask, k) {
            return Ok(T::from_i64(0));
        }
        let f = self.f(mask, k)?;
        let denom = T::from_i64(k) * self.eta.clone() - self.masked_sum(mask);
        if denom.is_pole() {
            return Err(PoleError {
                multiplier: k,
                terms: mask.count_ones() as usize,
            });
        }
        Ok(-(T::from_i64(2 * k) / denom) * f)
    }
}

/// `h_J(η; φ_1, …, φ_J)` with `h_0 = 1`.
///
/// Only contiguous runs `φ_s..φ_e` appear in the recursion, so values are
/// memoised by run. Runs the recursion never reaches are not evaluated, so
/// their denominators cannot raise a pole.
pub fn eval_h<T: DivisorScalar>(eta: &T, phis: &[T]) -> Result<T, PoleError> {
    let n = phis.len();
    let mut memo: Vec<Vec<Option<T>>> = vec![vec![None; n + 1]; n + 1];
    h_run(eta, phis, 0, n, &mut memo)
}

fn h_run<T: DivisorScalar>(
    eta: &T,
    phis: &[T],
    start: usize,
    len: usize,
    memo: &mut [Vec<Option<T>>],
) -> Result<T, PoleError> {
    if len == 0 {
        return Ok(T::from_i64(1));
    }
    if let Some(v) = &memo[start][len] {
        return Ok(v.clone());
    }
    let mut denom = eta.clone();
    for phi in &phis[start..start + len] {
        denom = denom - phi.clone();
    }
    if denom.is_pole() {
        return Err(PoleError {
            multiplier: 1,
            terms: len,
        });
    }
    let mut acc = T::from_i64(0);
    for j in 0..len {
        // h_j(φ_1..φ_j)·h_{J-j-1}(φ_{j+1}..φ_{J-1}); φ_J only enters the denominator.
        let left = h_run(eta, phis, start, j, memo)?;
        let right = h_run(eta, phis, start + j, len - j - 1, memo)?;
        acc = acc + left * right;
    }
    let value = acc / denom;
    memo[start][len] = Some(value.clone());
    Ok(value)
}

/// `(f_{J,K}, g_{J,K})`, zero outside `1 ≤ J`, `0 ≤ K ≤ J`.
pub fn eval_fg<T: DivisorScalar>(k: i64, eta: &T, phis: &[T]) -> Result<(T, T), PoleError> {
    Ok((eval_f(k, eta, phis)?, eval_g(k, eta, phis)?))
}

/// `f_{J,K}` alone; finite even where `g_{J,K}` has its own pole.
pub fn eval_f<T: DivisorScalar>(k: i64, eta: &T, phis: &[T]) -> Result<T, PoleError> {
    if phis.is_empty() {
        return Ok(T::from_i64(0));
    }
    let mut table = DivisorTable::new(eta.clone(), phis.to_vec());
    let mask = table.full_mask();
    table.f(mask, k)
}

pub fn eval_g<T: DivisorScalar>(k: i64, eta: &T, phis: &[T]) -> Result<T, PoleError> {
    if phis.is_empty() {
        return Ok(T::from_i64(0));
    }
    let mut table = DivisorTable::new(eta.clone(), phis.to_vec());
    let mask = table.full_mask();
    table.g(mask, k)
}

/// Visits every `size`-subset of the bits of `mask`.
pub(crate) fn for_each_submask(mask: u32, size: u32, mut visit: impl FnMut(u32)) {
    let mut sub = mask;
    loop {
        if sub.count_ones() == size {
            visit(sub);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// `𝒢_{J,0}` normalised so that `f_{J,0} − f̆_{J,0} = (φ_1 + ⋯ + φ_J)·𝒢_{J,0}`.
///
/// `pos` holds the frequencies, `neg` their negatives in the same order.
pub fn script_g_from_tables<T: DivisorScalar>(
    pos: &mut DivisorTable<T>,
    neg: &mut DivisorTable<T>,
) -> Result<T, PoleError> {
    debug_assert_eq!(pos.len(), neg.len());
    Ok(-script_g_display_from_tables(pos, neg)?)
}

/// `Σ_{j=1}^{J-1} Σ_{k=1}^{min(j,J-j)} (1/4k) g_{j,k} ⊙ ğ_{J-j,k}`.
pub fn script_g_display_from_tables<T: DivisorScalar>(
    pos: &mut DivisorTable<T>,
    neg: &mut DivisorTable<T>,
) -> Result<T, PoleError> {
    let full = pos.full_mask();
    let n = pos.len() as u32;
    let mut total = T::from_i64(0);
    for j in 1..n {
        let splits = binomial(n, j);
        for k in 1..=(j.min(n - j) as i64) {
            let mut acc = T::from_i64(0);
            let mut failure = None;
            for_each_submask(full, j, |sub| {
                if failure.is_some() {
                    return;
                }
                let term = pos
                    .g(sub, k)
                    .and_then(|a| neg.g(full & !sub, k).map(|b| a * b));
                match term {
                    Ok(t) => acc = acc.clone() + t,
                    Err(e) => failure = Some(e),
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            total = total + acc / T::from_i64(4 * k * splits);
        }
    }
    Ok(total)
}

/// `𝒢_{J,0}(η; φ)` for `J ≥ 2`, with the sign fixed by
/// `f_{J,0} − f̆_{J,0} = (Σφ)·𝒢_{J,0}`.
pub fn eval_script_g<T: DivisorScalar>(eta: &T, phis: &[T]) -> Result<T, PoleError> {
    assert!(phis.len() >= 2, "script G is defined for J >= 2");
    let mut pos = DivisorTable::new(eta.clone(), phis.to_vec());
    let mut neg = DivisorTable::new(eta.clone(), phis.iter().map(|p| -p.clone()).collect());
    script_g_from_tables(&mut pos, &mut neg)
}

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

pub fn one() -> Rational {
    Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        rational(n, 1)
    }

    #[test]
    fn h_examples() {
        assert_eq!(eval_h(&r(7), &[]).unwrap(), r(1));
        assert_eq!(eval_h(&r(2), &[r(1)]).unwrap(), r(1));
        assert_eq!(eval_h(&r(3), &[r(1), r(1)]).unwrap(), r(1));
        assert_eq!(
            eval_h(&r(1), &[r(1)]).unwrap_err(),
            PoleError {
                multiplier: 1,
                terms: 1
            }
        );
        // The run φ_2 alone never occurs, so η = φ_2 is not a pole of h_2.
        assert!(eval_h(&r(2), &[r(1), r(2)]).is_ok());
        assert!(eval_h(&r(3), &[r(1), r(2)]).is_err());
    }

    #[test]
    fn h_uses_the_truncated_second_factor() {
        // h_2 = [h_1(φ1) + h_1(φ1)] / (η − φ1 − φ2); φ2 only enters the prefactor.
        let v = eval_h(&r(5), &[r(1), r(2)]).unwrap();
        assert_eq!(v, rational(2, 4) / r(2));
    }

    #[test]
    fn fg_examples() {
        let (f, g) = eval_fg(1, &r(4), &[r(5)]).unwrap();
        assert_eq!((f, g), (rational(1, 4), rational(1, 2)));
        assert_eq!(eval_fg(1, &r(2), &[r(1)]).unwrap().1, r(-1));
        assert_eq!(eval_fg(2, &r(2), &[r(1), r(1)]).unwrap().0, rational(-1, 4));
        let (f, g) = eval_fg(0, &r(1), &[r(0), r(0), r(0)]).unwrap();
        assert_eq!((f, g), (r(-2), r(0)));
        assert_eq!(
            eval_fg(1, &r(1), &[r(1)]).unwrap_err(),
            PoleError {
                multiplier: 1,
                terms: 1
            }
        );
        // f_{2,1}(2; 1, 1) is regular although g_{2,1} has a pole there.
        assert!(eval_f(1, &r(2), &[r(1), r(1)]).is_ok());
        assert!(eval_g(1, &r(2), &[r(1), r(1)]).is_err());
    }

    #[test]
    fn zero_convention() {
        for (k, phis) in [
            (-1, vec![r(1)]),
            (2, vec![r(1)]),
            (4, vec![r(1), r(2), r(3)]),
        ] {
            assert_eq!(eval_fg(k, &r(3), &phis).unwrap(), (r(0), r(0)));
        }
        assert_eq!(eval_fg::<Rational>(0, &r(3), &[]).unwrap(), (r(0), r(0)));
    }

    #[test]
    fn script_g_examples() {
        let g = eval_script_g(&r(2), &[r(1), r(1)]).unwrap();
        assert_eq!(g, rational(-1, 12));
        let mut pos = DivisorTable::new(r(2), vec![r(1), r(1)]);
        let mut neg = DivisorTable::new(r(2), vec![r(-1), r(-1)]);
        assert_eq!(
            script_g_display_from_tables(&mut pos, &mut neg).unwrap(),
            rational(1, 12)
        );
        for eta in [r(2), rational(3, 7), r(-5)] {
            let expected = r(1) / (eta.clone() * eta.clone() * eta.clone() * eta.clone());
            assert_eq!(eval_script_g(&eta, &[r(0), r(0)]).unwrap(), -expected);
        }
    }

    #[test]
    fn script_g_satisfies_the_difference_identity_at_small_j() {
        let eta = r(2);
        let phis = [r(1), r(1)];
        let f = eval_fg(0, &eta, &phis).unwrap().0;
        let fb = eval_fg(0, &eta, &[r(-1), r(-1)]).unwrap().0;
        assert_eq!(f - fb, r(2) * eval_script_g(&eta, &phis).unwrap());
    }

    #[test]
    fn float_and_exact_agree() {
        let phis = [0.25, -1.5, 0.75, 2.3125];
        let eta = 1.125;
        let exact_phis: Vec<Rational> = phis.iter().map(|&p| rational_from_f64(p)).collect();
        let exact_eta = rational_from_f64(eta);
        for k in 0..=4 {
            let (f, g) = eval_fg(k, &eta, &phis).unwrap();
            let (fe, ge) = eval_fg(k, &exact_eta, &exact_phis).unwrap();
            let (fe, ge) = (fe.to_f64().unwrap(), ge.to_f64().unwrap());
            assert!((f - fe).abs() <= 1e-12 * fe.abs(), "f_4,{k}: {f} vs {fe}");
            assert!((g - ge).abs() <= 1e-12 * ge.abs(), "g_4,{k}: {g} vs {ge}");
        }
    }

    #[test]
    fn submask_enumeration_counts() {
        let mut count = 0;
        for_each_submask(0b10111, 2, |_| count += 1);
        assert_eq!(count, 6);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(5, 0), 1);
    }
}
