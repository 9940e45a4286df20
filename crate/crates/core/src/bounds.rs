//! Small-divisor sums, the error sums `E_{J,K}` and `ℰ_{J,0}`, and the
//! assembled bound on `|log R(b) − log R(a)|`.
//!
//! `g`, `f` and `𝒢` are symmetric in the frequencies and `|c_{m_1}⋯c_{m_J}|`
//! only depends on the multiset of indices, so those sums run over multisets
//! with multinomial weights. `h` is not symmetric and is summed over ordered
//! tuples.

use std::fmt::Write as _;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use thiserror::Error;

use crate::divisor::{
    eval_h, omega, rational_from_f64, script_g_from_tables, DivisorTable, PoleError, Rational,
};
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what} is infinite: {} tuple(s) hit a pole", pole_hits.len())]
    InfiniteSum {
        what: String,
        pole_hits: Vec<Vec<usize>>,
    },
}

/// A finite sum over index tuples, or the record of why it is infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct SumValue {
    /// `+∞` when any tuple hit a pole.
    pub value: f64,
    /// Ordered tuples accounted for.
    pub terms_used: u64,
    pub last_term_magnitude: f64,
    /// Tuples (term indices; sorted for symmetric summands) skipped at a pole.
    pub pole_hits: Vec<Vec<usize>>,
}

impl SumValue {
    fn zero() -> Self {
        SumValue {
            value: 0.0,
            terms_used: 0,
            last_term_magnitude: 0.0,
            pole_hits: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pole_hits.is_empty()
    }

    fn into_result(self, what: impl Into<String>) -> Result<f64, BoundsError> {
        if self.is_finite() {
            Ok(self.value)
        } else {
            Err(BoundsError::InfiniteSum {
                what: what.into(),
                pole_hits: self.pole_hits,
            })
        }
    }
}

/// One row of the sums CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SumRow {
    pub eta: f64,
    pub j: usize,
    pub k: Option<i64>,
    pub sum: SumValue,
}

pub fn sums_csv(rows: &[SumRow]) -> String {
    let mut out = String::from("eta,j_or_J,K,value,finite_flag,terms_used\n");
    for r in rows {
        let k = r.k.map_or_else(String::new, |k| k.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.eta,
            r.j,
            k,
            r.sum.value,
            r.sum.is_finite() as u8,
            r.sum.terms_used
        );
    }
    out
}

/// Non-decreasing index sequences of length `len` over `0..n`.
fn multisets(n: usize, len: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, len: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in from..n {
            cur.push(i);
            rec(n, len, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, len, 0, &mut Vec::with_capacity(len), &mut out);
    out
}

/// Number of orderings of a sorted multiset.
fn multinomial(sorted: &[usize]) -> f64 {
    let mut weight = (1..=sorted.len()).map(|i| i as f64).product::<f64>();
    let mut run = 1usize;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            weight /= (1..=run).map(|i| i as f64).product::<f64>();
            run = 1;
        }
    }
    weight
}

fn all_tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..n).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// Sums `weight·|value|` over the given index tuples. Evaluation is parallel;
/// accumulation runs in tuple order, so the result does not depend on scheduling.
fn accumulate<F>(
    tuples: Vec<Vec<usize>>,
    weight: impl Fn(&[usize]) -> f64 + Sync,
    eval: F,
) -> SumValue
where
    F: Fn(&[usize]) -> Result<f64, PoleError> + Sync,
{
    let values: Vec<Result<f64, PoleError>> = tuples.par_iter().map(|t| eval(t)).collect();
    let mut sum = SumValue::zero();
    for (t, v) in tuples.iter().zip(values) {
        let w = weight(t);
        sum.terms_used += w as u64;
        match v {
            Ok(v) => {
                let term = w * v.abs();
                sum.value += term;
                sum.last_term_magnitude = term;
            }
            Err(_) => sum.pole_hits.push(t.clone()),
        }
    }
    if !sum.is_finite() {
        sum.value = f64::INFINITY;
    }
    sum
}

fn coeff_product(pot: &Potential, tuple: &[usize]) -> f64 {
    tuple.iter().map(|&m| pot.terms()[m].c.norm()).product()
}

fn phis_of(pot: &Potential, tuple: &[usize]) -> Vec<f64> {
    tuple.iter().map(|&m| pot.terms()[m].phi).collect()
}

/// `Σ |c_{k_1}⋯c_{k_j} h_j(η; φ_{k_1}, …, φ_{k_j})|` over ordered `j`-tuples.
pub fn small_divisor_sum(pot: &Potential, j: usize, eta: f64) -> Result<SumValue, BoundsError> {
    if j < 1 || j + 1 > pot.p() as usize {
        return Err(BoundsError::InvalidArgument(format!(
            "need 1 <= j <= p-1 = {}, got {j}",
            pot.p() - 1
        )));
    }
    let tuples = all_tuples(pot.terms().len(), j);
    Ok(accumulate(
        tuples,
        |_| 1.0,
        |t| Ok(coeff_product(pot, t) * eval_h(&eta, &phis_of(pot, t))?),
    ))
}

/// `E_{J,K} = Σ |c_{m_1}⋯c_{m_J} g_{J,K}(η; φ_{m_1}, …)|`; zero unless `1 ≤ K ≤ J`.
pub fn sum_e(pot: &Potential, j: usize, k: i64, eta: f64) -> Result<SumValue, BoundsError> {
    if j < 1 {
        return Err(BoundsError::InvalidArgument("E_{J,K} needs J >= 1".into()));
    }
    if k < 1 || k as usize > j {
        return Ok(SumValue::zero());
    }
    let tuples = multisets(pot.terms().len(), j);
    Ok(accumulate(tuples, multinomial, |t| {
        let mut table = DivisorTable::new(eta, phis_of(pot, t));
        let full = table.full_mask();
        Ok(coeff_product(pot, t) * table.g(full, k)?)
    }))
}

/// `ℰ_{J,0} = Σ |c_{m_1}⋯c_{m_J} 𝒢_{J,0}(η; φ_{m_1}, …)|` for `2 ≤ J ≤ p`.
pub fn sum_script_e(pot: &Potential, j: usize, eta: f64) -> Result<SumValue, BoundsError> {
    if j < 2 || j > pot.p() as usize {
        return Err(BoundsError::InvalidArgument(format!(
            "need 2 <= J <= p = {}, got {j}",
            pot.p()
        )));
    }
    let tuples = multisets(pot.terms().len(), j);
    Ok(accumulate(tuples, multinomial, |t| {
        let phis = phis_of(pot, t);
        let mut pos = DivisorTable::new(eta, phis.clone());
        let mut neg = DivisorTable::new(eta, phis.iter().map(|p| -p).collect());
        Ok(coeff_product(pot, t) * script_g_from_tables(&mut pos, &mut neg)?)
    }))
}

/// Both sides of the envelope estimate for `𝒮_{J,K}(x)`:
/// `lhs = Σ |f_{J,K} β_{m_1}(x)⋯β_{m_J}(x)|`,
/// `rhs = (1/η) Σ_a |ω_a| E_{J−1,K+a} (Σ|c|) σ(x)^J`.
pub fn script_s_envelope(
    pot: &Potential,
    j: usize,
    k: i64,
    eta: f64,
    x: f64,
) -> Result<(f64, f64), BoundsError> {
    if j < 2 || j > pot.p() as usize || k < 0 || k as usize > j {
        return Err(BoundsError::InvalidArgument(format!(
            "need 2 <= J <= p and 0 <= K <= J, got J={j} K={k}"
        )));
    }
    let tuples = multisets(pot.terms().len(), j);
    let lhs = accumulate(tuples, multinomial, |t| {
        let mut table = DivisorTable::new(eta, phis_of(pot, t));
        let full = table.full_mask();
        let envelopes: f64 = t
            .iter()
            .map(|&m| pot.terms()[m].envelope.value(x).abs())
            .product();
        Ok(coeff_product(pot, t) * envelopes * table.f(full, k)?)
    })
    .into_result(format!("S_{j},{k}"))?;
    let mut inner = 0.0;
    for a in -1..=1i64 {
        let e = sum_e(pot, j - 1, k + a, eta)?.into_result(format!("E_{},{}", j - 1, k + a))?;
        inner += omega::<f64>(a).abs() * e;
    }
    let rhs = inner / eta * pot.coeff_l1() * pot.sigma(x).powi(j as i32);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundBreakdown {
    /// `Σ_{j<p} Σ_{k=1}^{j} (1/k) E_{j,k} τ^j`
    pub term1: f64,
    /// `Σ_{J=2}^{p} ℰ_{J,0} τ^J`
    pub term2: f64,
    /// `(2/η) Σ_{k=0}^{p−1} E_{p−1,k} (Σ|c|) ∫_a^∞ σ^p`
    pub term3: f64,
    pub total: f64,
}

/// Why [`total_bound`] has no finite value.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("bound is infinite: {reason}")]
pub struct InfiniteBound {
    pub reason: String,
    pub pole_hits: Vec<Vec<usize>>,
}

impl From<BoundsError> for InfiniteBound {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::InfiniteSum { what, pole_hits } => InfiniteBound {
                reason: what,
                pole_hits,
            },
            BoundsError::InvalidArgument(msg) => InfiniteBound {
                reason: msg,
                pole_hits: Vec::new(),
            },
        }
    }
}

/// An upper bound on `sup_{b > a} |log R(b) − log R(a)|` for real `V`, finite
/// when the small-divisor sums of order `j < p` are.
pub fn total_bound(pot: &Potential, eta: f64, a: f64) -> Result<BoundBreakdown, InfiniteBound> {
    if !(eta > 0.0) {
        return Err(InfiniteBound {
            reason: format!("eta must be positive, got {eta}"),
            pole_hits: Vec::new(),
        });
    }
    let p = pot.p() as usize;
    for j in 1..p {
        small_divisor_sum(pot, j, eta)?.into_result(format!("small-divisor sum of order {j}"))?;
    }
    let tau = pot.tau();
    let mut term1 = 0.0;
    for j in 1..p {
        for k in 1..=j as i64 {
            term1 += sum_e(pot, j, k, eta)?.into_result(format!("E_{j},{k}"))? / k as f64
                * tau.powi(j as i32);
        }
    }
    let mut term2 = 0.0;
    for j in 2..=p {
        term2 +=
            sum_script_e(pot, j, eta)?.into_result(format!("script E_{j},0"))? * tau.powi(j as i32);
    }
    let mut e_last = 0.0;
    for k in 0..p as i64 {
        e_last += sum_e(pot, p - 1, k, eta)?.into_result(format!("E_{},{k}", p - 1))?;
    }
    let term3 = 2.0 / eta * e_last * pot.coeff_l1() * pot.lp_tail(a);
    Ok(BoundBreakdown {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
    })
}

pub fn bound_csv(rows: &[(f64, f64, Result<BoundBreakdown, InfiniteBound>)]) -> String {
    let mut out = String::from("eta,a,term1,term2,term3,total,finite_flag\n");
    for (eta, a, r) in rows {
        match r {
            Ok(b) => {
                let _ = writeln!(
                    out,
                    "{eta},{a},{},{},{},{},1",
                    b.term1, b.term2, b.term3, b.total
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{eta},{a},inf,inf,inf,inf,0");
            }
        }
    }
    out
}

fn exact_sum<F>(pot: &Potential, j: usize, eval: F) -> Result<f64, BoundsError>
where
    F: Fn(&[Rational]) -> Result<Rational, PoleError>,
{
    let mut total = 0.0;
    let mut pole_hits = Vec::new();
    for t in multisets(pot.terms().len(), j) {
        let phis: Vec<Rational> = t
            .iter()
            .map(|&m| rational_from_f64(pot.terms()[m].phi))
            .collect();
        match eval(&phis) {
            Ok(v) => {
                total += multinomial(&t)
                    * coeff_product(pot, &t)
                    * v.to_f64().unwrap_or(f64::INFINITY).abs()
            }
            Err(_) => pole_hits.push(t),
        }
    }
    if pole_hits.is_empty() {
        Ok(total)
    } else {
        Err(BoundsError::InfiniteSum {
            what: "exact recomputation".into(),
            pole_hits,
        })
    }
}

/// `E_{J,K}` with every `g` evaluated in exact rational arithmetic at the
/// binary values of `η` and the frequencies.
pub fn sum_e_exact(pot: &Potential, j: usize, k: i64, eta: f64) -> Result<f64, BoundsError> {
    if k < 1 || k as usize > j {
        return Ok(0.0);
    }
    let eta = rational_from_f64(eta);
    exact_sum(pot, j, |phis| {
        let mut table = DivisorTable::new(eta.clone(), phis.to_vec());
        let full = table.full_mask();
        table.g(full, k)
    })
}

/// `ℰ_{J,0}` with every `𝒢` evaluated exactly.
pub fn sum_script_e_exact(pot: &Potential, j: usize, eta: f64) -> Result<f64, BoundsError> {
    let eta = rational_from_f64(eta);
    exact_sum(pot, j, |phis| {
        let mut pos = DivisorTable::new(eta.clone(), phis.to_vec());
        let mut neg = DivisorTable::new(eta.clone(), phis.iter().map(|p| -p).collect());
        script_g_from_tables(&mut pos, &mut neg)
    })
}
