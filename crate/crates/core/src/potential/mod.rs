//! Decaying oscillatory potentials `V(x) = Σ c_k e^{-iφ_k x} γ_k(x)`.

mod envelope;

pub use envelope::{sup_envelope, sup_power_tail, Envelope};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("p must be an integer >= 2, got {0}")]
    InvalidOrder(u32),
    #[error("alpha must lie in (0, 1/(p-1)) = (0, {limit}), got {alpha}")]
    AlphaOutOfRange { alpha: f64, limit: f64 },
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid term {index}: {reason}")]
    InvalidTerm { index: usize, reason: String },
    #[error("potential is not real-valued; build it with conjugate closure")]
    NotReal,
    #[error("{0}")]
    InvalidArgument(String),
}

/// One oscillatory term `c e^{-iφx} γ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub c: Complex64,
    pub phi: f64,
    pub envelope: Envelope,
}

impl Term {
    pub fn new(c: Complex64, phi: f64, envelope: Envelope) -> Self {
        Term { c, phi, envelope }
    }

    pub fn real(c: f64, phi: f64, envelope: Envelope) -> Self {
        Term::new(Complex64::new(c, 0.0), phi, envelope)
    }

    /// `(c, φ, γ) ↦ (c̄, −φ, γ̄)`; envelopes are real.
    pub fn conjugate(&self) -> Self {
        Term {
            c: self.c.conj(),
            phi: -self.phi,
            envelope: self.envelope.clone(),
        }
    }

    /// `β(x) = c e^{-iφx} γ(x)`.
    pub fn value(&self, x: f64) -> Complex64 {
        let g = self.envelope.value(x);
        if g == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.c * Complex64::from_polar(g, -self.phi * x)
    }

    fn is_placeholder(&self) -> bool {
        self.c == Complex64::new(0.0, 0.0)
    }

    fn pairs_with(&self, other: &Term) -> bool {
        let scale = 1e-12 * (1.0 + self.c.norm() + self.phi.abs());
        (self.c.conj() - other.c).norm() <= scale
            && (self.phi + other.phi).abs() <= scale
            && self.envelope == other.envelope
    }
}

/// Serialized form of a term, shared by potential specs and coefficient files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub c_re: f64,
    #[serde(default)]
    pub c_im: f64,
    pub phi: f64,
    pub envelope: Envelope,
}

impl From<&TermSpec> for Term {
    fn from(s: &TermSpec) -> Self {
        Term::new(Complex64::new(s.c_re, s.c_im), s.phi, s.envelope.clone())
    }
}

impl From<&Term> for TermSpec {
    fn from(t: &Term) -> Self {
        TermSpec {
            c_re: t.c.re,
            c_im: t.c.im,
            phi: t.phi,
            envelope: t.envelope.clone(),
        }
    }
}

/// How realness of `V` was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realness {
    /// The supplied terms were already closed under conjugation.
    Closed,
    /// Conjugate partners were appended for `appended` unmatched terms.
    Symmetrized { appended: usize },
    /// Formal term list with no closure; `V` may be complex.
    Formal,
}

#[derive(Debug, Clone)]
pub struct Potential {
    terms: Vec<Term>,
    p: u32,
    alpha: f64,
    realness: Realness,
    coeff_alpha_sum: f64,
    tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeStats {
    pub sigma_at_x: f64,
    pub tau: f64,
    pub lp_tail: f64,
}

fn validate_header(terms: &[Term], p: u32, alpha: f64) -> Result<(), PotentialError> {
    if p < 2 {
        return Err(PotentialError::InvalidOrder(p));
    }
    let limit = 1.0 / (p as f64 - 1.0);
    if !(alpha > 0.0 && alpha < limit) {
        return Err(PotentialError::AlphaOutOfRange { alpha, limit });
    }
    for (index, t) in terms.iter().enumerate() {
        t.envelope.validate()?;
        if !(t.c.re.is_finite() && t.c.im.is_finite() && t.phi.is_finite()) {
            return Err(PotentialError::InvalidTerm {
                index,
                reason: "non-finite coefficient or frequency".into(),
            });
        }
    }
    Ok(())
}

/// Indices of terms that have no conjugate partner in the list.
fn unmatched_terms(terms: &[Term]) -> Vec<usize> {
    let mut used = vec![false; terms.len()];
    let mut unmatched = Vec::new();
    for i in 0..terms.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        if terms[i].is_placeholder() || terms[i].pairs_with(&terms[i]) {
            continue;
        }
        match (i + 1..terms.len()).find(|&j| !used[j] && terms[i].pairs_with(&terms[j])) {
            Some(j) => used[j] = true,
            None => unmatched.push(i),
        }
    }
    unmatched
}

/// Validates the hypotheses on `(p, α)` and the envelopes, and closes the term
/// list under conjugation so that `V` is real. Each unmatched term gets its
/// conjugate partner appended, so a lone `(c, φ)` describes `c e^{-iφx}γ + c.c.`
pub fn build_potential(terms: Vec<Term>, p: u32, alpha: f64) -> Result<Potential, PotentialError> {
    validate_header(&terms, p, alpha)?;
    let unmatched = unmatched_terms(&terms);
    let realness = if unmatched.is_empty() {
        Realness::Closed
    } else {
        Realness::Symmetrized {
            appended: unmatched.len(),
        }
    };
    let mut terms = terms;
    let partners: Vec<Term> = unmatched.iter().map(|&i| terms[i].conjugate()).collect();
    terms.extend(partners);
    Ok(Potential::assemble(terms, p, alpha, realness))
}

impl Potential {
    fn assemble(terms: Vec<Term>, p: u32, alpha: f64, realness: Realness) -> Self {
        let coeff_alpha_sum = terms.iter().map(|t| t.c.norm().powf(alpha)).sum();
        let tau = terms
            .iter()
            .map(|t| t.envelope.variation())
            .fold(0.0, f64::max);
        Potential {
            terms,
            p,
            alpha,
            realness,
            coeff_alpha_sum,
            tau,
        }
    }

    /// A term list taken as given, without conjugate closure. Small-divisor and
    /// error sums are defined for any such list; the ODE integrators require a
    /// real potential and reject formal ones.
    pub fn formal(terms: Vec<Term>, p: u32, alpha: f64) -> Result<Potential, PotentialError> {
        validate_header(&terms, p, alpha)?;
        let realness = if unmatched_terms(&terms).is_empty() {
            Realness::Closed
        } else {
            Realness::Formal
        };
        Ok(Potential::assemble(terms, p, alpha, realness))
    }

    /// `V ≡ 0` with the given hypotheses.
    pub fn zero(p: u32, alpha: f64) -> Result<Potential, PotentialError> {
        build_potential(Vec::new(), p, alpha)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn realness(&self) -> Realness {
        self.realness
    }

    pub fn is_real(&self) -> bool {
        self.realness != Realness::Formal
    }

    /// `Σ |c_k|^α` over the stored (truncated) list.
    pub fn coeff_alpha_sum(&self) -> f64 {
        self.coeff_alpha_sum
    }

    /// `Σ |c_k|`.
    pub fn coeff_l1(&self) -> f64 {
        self.terms.iter().map(|t| t.c.norm()).sum()
    }

    /// `τ = sup_k Var(γ_k, (0, ∞))`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn require_real(&self) -> Result<(), PotentialError> {
        if self.is_real() {
            Ok(())
        } else {
            Err(PotentialError::NotReal)
        }
    }

    /// Complex sum `Σ β_k(x)`; its imaginary part is rounding noise for real potentials.
    pub fn value_complex(&self, x: f64) -> Complex64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// `V(x)` (real part of the term sum).
    pub fn value(&self, x: f64) -> f64 {
        self.value_complex(x).re
    }

    /// `V(x)` together with the individual `β_k(x)`.
    pub fn eval(&self, x: f64) -> (f64, Vec<Complex64>) {
        let values: Vec<Complex64> = self.terms.iter().map(|t| t.value(x)).collect();
        let v = values.iter().sum::<Complex64>().re;
        (v, values)
    }

    /// `σ(x) = max_k |γ_k(x)|`.
    pub fn sigma(&self, x: f64) -> f64 {
        sup_envelope(self.terms.iter().map(|t| &t.envelope), x)
    }

    /// `∫_a^∞ σ(x)^p dx`.
    pub fn lp_tail(&self, a: f64) -> f64 {
        let envs: Vec<&Envelope> = self.terms.iter().map(|t| &t.envelope).collect();
        sup_power_tail(&envs, self.p as f64, a)
    }

    pub fn envelope_stats(&self, x: f64, a: f64) -> EnvelopeStats {
        EnvelopeStats {
            sigma_at_x: self.sigma(x),
            tau: self.tau,
            lp_tail: self.lp_tail(a),
        }
    }

    /// Sorted jump locations of all envelopes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|t| t.envelope.breakpoints())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// The almost periodic factor `W(x) = Σ c_k e^{-iφ_k x}`.
    pub fn almost_periodic(&self, x: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.c * Complex64::from_polar(1.0, -t.phi * x))
            .sum()
    }

    /// Min and max over window starts `a ∈ {0, h, 2h, …} ∩ [0, a_max]` of
    /// `∫_a^{a+T} |W(x)| dx`.
    pub fn ap_window_bounds(
        &self,
        window: f64,
        a_max: f64,
        grid_step: f64,
    ) -> Result<(f64, f64), PotentialError> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(PotentialError::InvalidArgument(format!(
                "window length T must be positive, got {window}"
            )));
        }
        if !(grid_step > 0.0) || a_max < 0.0 {
            return Err(PotentialError::InvalidArgument(
                "grid_step must be positive and a_max nonnegative".into(),
            ));
        }
        let starts = (a_max / grid_step + 1e-9).floor() as usize;
        let zeros = self.real_sign_changes(starts as f64 * grid_step + window);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..=starts {
            let a = i as f64 * grid_step;
            let b = a + window;
            // |W| has kinks at sign changes of a real W; integrate between them.
            let mut cuts = vec![a];
            cuts.extend(zeros.iter().copied().filter(|&z| z > a && z < b));
            cuts.push(b);
            let value: f64 = cuts
                .windows(2)
                .map(|w| {
                    quad::integrate(|x| self.almost_periodic(x).norm(), w[0], w[1], 1e-10, 1e-15)
                        .value
                })
                .sum();
            lo = lo.min(value);
            hi = hi.max(value);
        }
        Ok((lo, hi))
    }

    /// Sign changes of `W` on `[0, end]` when `W` is real there, located by bisection.
    fn real_sign_changes(&self, end: f64) -> Vec<f64> {
        let max_freq = self.terms.iter().fold(0.0f64, |m, t| m.max(t.phi.abs()));
        let step = (0.05f64).min(std::f64::consts::PI / (8.0 * max_freq.max(1e-300)));
        let n = (end / step).ceil().max(1.0) as usize;
        let scale = self.coeff_l1().max(f64::MIN_POSITIVE);
        let w = |x: f64| self.almost_periodic(x);
        let mut zeros = Vec::new();
        let mut prev = w(0.0);
        for i in 1..=n {
            let x = (i as f64 * step).min(end);
            let cur = w(x);
            if prev.im.abs() > 1e-12 * scale || cur.im.abs() > 1e-12 * scale {
                return Vec::new();
            }
            if prev.re * cur.re < 0.0 {
                let (mut l, mut r) = (x - step, x);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if m <= l || m >= r {
                        break;
                    }
                    if w(m).re * prev.re > 0.0 {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                zeros.push(0.5 * (l + r));
            }
            prev = cur;
        }
        zeros
    }
}
