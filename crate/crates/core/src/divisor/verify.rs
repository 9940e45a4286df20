use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    binomial, eval_h, for_each_submask, rational, script_g_from_tables,
    symfn::for_each_permutation, DivisorTable, PoleError, Rational,
};

pub const DEFAULT_J_MAX: usize = 5;

const MAX_RESAMPLES: usize = 10_000;
const MAX_WITNESSES: usize = 3;

/// The identities checked by [`verify_identities`] and [`verify_catalan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Identity {
    /// `g_{J,K} = ½ Σ_j g_{j,k} ⊙ g_{J−j,K−k}` for `0 < k < K ≤ J`.
    GSplit,
    /// `f_{J,K} = ½ Σ_j f_{j,k} ⊙ g_{J−j,K−k}` for `0 < k < K ≤ J`.
    FSplit,
    /// `f_{J,0} − f̆_{J,0} = (Σφ)·𝒢_{J,0}` for `J ≥ 2`.
    BreveDifference,
    /// `g_{J,1} = −(2/η^J)(1/J!) Σ_σ h_J(η; φ_σ)`.
    SymmetrizedH,
    /// `C_J = Σ_j C_j C_{J−j−1}` with `C_J = binom(2J, J)/(J+1)`.
    Catalan,
}

impl Identity {
    pub fn label(self) -> &'static str {
        match self {
            Identity::GSplit => "g-split",
            Identity::FSplit => "f-split",
            Identity::BreveDifference => "breve-difference",
            Identity::SymmetrizedH => "h-symmetrization",
            Identity::Catalan => "catalan",
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A sample point where the two sides disagreed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub eta: Rational,
    pub phis: Vec<Rational>,
    pub lhs: Rational,
    pub rhs: Rational,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phis: Vec<String> = self.phis.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "eta={} phi=[{}] lhs={} rhs={}",
            self.eta,
            phis.join(","),
            self.lhs,
            self.rhs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub identity: Identity,
    pub j: usize,
    pub k_big: Option<i64>,
    pub k_small: Option<i64>,
    pub trials: usize,
    pub max_discrepancy: Rational,
    pub witnesses: Vec<Witness>,
}

impl IdentityReport {
    fn new(identity: Identity, j: usize, k_big: Option<i64>, k_small: Option<i64>) -> Self {
        IdentityReport {
            identity,
            j,
            k_big,
            k_small,
            trials: 0,
            max_discrepancy: Rational::zero(),
            witnesses: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.max_discrepancy.is_zero()
    }

    fn record(&mut self, eta: &Rational, phis: &[Rational], lhs: Rational, rhs: Rational) {
        self.trials += 1;
        let gap = (&lhs - &rhs).abs();
        if gap.is_zero() {
            return;
        }
        if gap > self.max_discrepancy {
            self.max_discrepancy = gap;
        }
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(Witness {
                eta: eta.clone(),
                phis: phis.to_vec(),
                lhs,
                rhs,
            });
        }
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<i64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        write!(
            f,
            "{} J={} K={} k={} trials={} max_discrepancy={} {}",
            self.identity,
            self.j,
            opt(self.k_big),
            opt(self.k_small),
            self.trials,
            self.max_discrepancy,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        if let Some(w) = self.witnesses.first() {
            write!(f, " witness: {w}")?;
        }
        Ok(())
    }
}

fn sample_rational(rng: &mut ChaCha8Rng) -> Rational {
    rational(rng.gen_range(-1000..=1000), rng.gen_range(1..=1000))
}

/// `½ Σ_j left_{j,k} ⊙ g_{J−j,K−k}` over the full mask, where `left` picks f or g.
fn split_sum(
    table: &mut DivisorTable<Rational>,
    k_big: i64,
    k: i64,
    use_f: bool,
) -> Result<Rational, PoleError> {
    let full = table.full_mask();
    let n = table.len() as u32;
    let mut total = Rational::zero();
    // j = 0 and j = J vanish by the zero convention.
    for j in 1..n {
        let mut acc = Rational::zero();
        let mut subs = Vec::new();
        for_each_submask(full, j, |s| subs.push(s));
        for sub in subs {
            let (f, g) = table.fg(sub, k)?;
            let left = if use_f { f } else { g };
            acc += left * table.g(full & !sub, k_big - k)?;
        }
        total += acc / rational(binomial(n, j), 1);
    }
    Ok(total / rational(2, 1))
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

fn symmetrized_h_side(eta: &Rational, phis: &[Rational]) -> Result<Rational, PoleError> {
    let j = phis.len();
    let mut total = Rational::zero();
    let mut failure = None;
    for_each_permutation(j, |perm| {
        if failure.is_some() {
            return;
        }
        let permuted: Vec<Rational> = perm.iter().map(|&i| phis[i].clone()).collect();
        match eval_h(eta, &permuted) {
            Ok(v) => total += v,
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut eta_pow = Rational::from_integer(BigInt::from(1));
    for _ in 0..j {
        eta_pow *= eta;
    }
    Ok(-rational(2, factorial(j)) * total / eta_pow)
}

/// Both sides of every identity at one point, in report order.
fn evaluate_point(
    eta: &Rational,
    phis: &[Rational],
    j_max: usize,
) -> Result<Vec<(Rational, Rational)>, PoleError> {
    let mut out = Vec::new();
    for j in 1..=j_max {
        let prefix = &phis[..j];
        let mut pos = DivisorTable::new(eta.clone(), prefix.to_vec());
        let full = pos.full_mask();
        for k_big in 2..=j as i64 {
            for k in 1..k_big {
                out.push((pos.g(full, k_big)?, split_sum(&mut pos, k_big, k, false)?));
                out.push((pos.f(full, k_big)?, split_sum(&mut pos, k_big, k, true)?));
            }
        }
        if j >= 2 {
            let mut neg = DivisorTable::new(eta.clone(), prefix.iter().map(|p| -p).collect());
            let diff = pos.f(full, 0)? - neg.f(full, 0)?;
            let sum: Rational = prefix.iter().sum();
            out.push((diff, sum * script_g_from_tables(&mut pos, &mut neg)?));
        }
        out.push((pos.g(full, 1)?, symmetrized_h_side(eta, prefix)?));
    }
    Ok(out)
}

fn empty_reports(j_max: usize) -> Vec<IdentityReport> {
    let mut reports = Vec::new();
    for j in 1..=j_max {
        for k_big in 2..=j as i64 {
            for k in 1..k_big {
                reports.push(IdentityReport::new(
                    Identity::GSplit,
                    j,
                    Some(k_big),
                    Some(k),
                ));
                reports.push(IdentityReport::new(
                    Identity::FSplit,
                    j,
                    Some(k_big),
                    Some(k),
                ));
            }
        }
        if j >= 2 {
            reports.push(IdentityReport::new(
                Identity::BreveDifference,
                j,
                Some(0),
                None,
            ));
        }
        reports.push(IdentityReport::new(
            Identity::SymmetrizedH,
            j,
            Some(1),
            None,
        ));
    }
    reports
}

/// Checks the split, breve-difference and h-symmetrization identities for
/// every admissible `(J, K, k)` with `J ≤ j_max` at `trials` random rational
/// points, then appends the Catalan check up to `j_max`.
///
/// Points landing on a pole of any evaluated function are redrawn.
pub fn verify_identities(j_max: usize, trials: usize, seed: u64) -> Vec<IdentityReport> {
    assert!(j_max >= 2, "j_max must be at least 2");
    assert!(trials >= 1, "at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = empty_reports(j_max);
    for _ in 0..trials {
        let mut attempts = 0;
        let (eta, phis, values) = loop {
            attempts += 1;
            assert!(
                attempts <= MAX_RESAMPLES,
                "could not draw a pole-free point"
            );
            let eta = sample_rational(&mut rng);
            if eta.is_zero() {
                continue;
            }
            let phis: Vec<Rational> = (0..j_max).map(|_| sample_rational(&mut rng)).collect();
            if let Ok(values) = evaluate_point(&eta, &phis, j_max) {
                break (eta, phis, values);
            }
        };
        for (report, (lhs, rhs)) in reports.iter_mut().zip(values) {
            report.record(&eta, &phis[..report.j], lhs, rhs);
        }
    }
    reports.push(verify_catalan(j_max));
    reports
}

/// `C_n = binom(2n, n)/(n+1)`.
pub fn catalan(n: usize) -> BigInt {
    let mut binom = BigInt::from(1);
    for i in 0..n {
        binom = binom * BigInt::from(2 * n - i) / BigInt::from(i + 1);
    }
    binom / BigInt::from(n + 1)
}

/// The Catalan convolution `C_J = Σ_{j<J} C_j C_{J−j−1}` for `1 ≤ J ≤ j_max`.
pub fn verify_catalan(j_max: usize) -> IdentityReport {
    let mut report = IdentityReport::new(Identity::Catalan, j_max, None, None);
    let values: Vec<BigInt> = (0..=j_max).map(catalan).collect();
    for j in 1..=j_max {
        let conv: BigInt = (0..j).map(|i| &values[i] * &values[j - i - 1]).sum();
        let lhs = Rational::from_integer(values[j].clone());
        let rhs = Rational::from_integer(conv);
        report.record(&Rational::zero(), &[], lhs, rhs);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divisor::{sym_product, SymFunction};

    #[test]
    fn catalan_values() {
        let expected = [1, 1, 2, 5, 14, 42, 132];
        for (n, c) in expected.iter().enumerate() {
            assert_eq!(catalan(n), BigInt::from(*c));
        }
        assert_eq!(catalan(12), BigInt::from(208_012));
        let report = verify_catalan(12);
        assert!(report.passed());
        assert_eq!(report.trials, 12);
    }

    #[test]
    fn small_suite_passes() {
        let reports = verify_identities(3, 5, 11);
        assert!(reports.iter().all(|r| r.passed()), "{reports:#?}");
        assert!(reports.iter().all(|r| r.trials >= 3));
        let h1 = reports
            .iter()
            .find(|r| r.identity == Identity::SymmetrizedH && r.j == 1)
            .expect("J = 1 report");
        assert_eq!(h1.trials, 5);
    }

    #[test]
    fn first_order_h_symmetrization_at_many_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 100 {
            let eta = sample_rational(&mut rng);
            let phi = sample_rational(&mut rng);
            let Ok((_, g)) = crate::divisor::eval_fg(1, &eta, std::slice::from_ref(&phi)) else {
                continue;
            };
            let Ok(h) = eval_h(&eta, std::slice::from_ref(&phi)) else {
                continue;
            };
            assert_eq!(g + rational(2, 1) / &eta * h, Rational::zero());
            checked += 1;
        }
    }

    #[test]
    fn table_split_matches_sym_product_route() {
        let eta = rational(7, 3);
        let phis = vec![rational(1, 2), rational(-3, 5), rational(2, 1)];
        let mut table = DivisorTable::new(eta.clone(), phis.clone());
        let fast = split_sum(&mut table, 2, 1, false).unwrap();
        let mut slow = Rational::zero();
        for j in 0..=3 {
            let prod = sym_product(&SymFunction::g(j, 1), &SymFunction::g(3 - j, 1));
            slow += prod.eval(&eta, &phis).unwrap();
        }
        assert_eq!(fast, slow / rational(2, 1));
    }

    #[test]
    fn report_line_mentions_outcome() {
        let mut report = IdentityReport::new(Identity::GSplit, 2, Some(2), Some(1));
        report.record(
            &rational(2, 1),
            &[rational(1, 1)],
            rational(1, 1),
            rational(1, 1),
        );
        assert!(report.to_string().ends_with("PASS"));
        report.record(
            &rational(2, 1),
            &[rational(1, 1)],
            rational(1, 1),
            rational(0, 1),
        );
        let line = report.to_string();
        assert!(line.contains("FAIL") && line.contains("witness"), "{line}");
    }
}
