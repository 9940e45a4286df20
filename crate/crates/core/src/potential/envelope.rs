use serde::{Deserialize, Serialize};

use super::PotentialError;

/// Decaying amplitude γ(x) multiplying one oscillatory term.
///
/// Every kind has finite total variation on `(0, ∞)` and tends to zero, and
/// both the variation and `∫ γ^p` are available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    /// `γ(x) = (1 + x/x0)^(-beta)`.
    PowerDecay {
        x0: f64,
        beta: f64,
    },
    /// `γ(x) = exp(-rate·x)`.
    Exponential {
        rate: f64,
    },
    /// Piecewise constant: `steps[i] = [end, value]` sets `γ = value` on
    /// `[end_{i-1}, end)` (with `end_{-1} = 0`), and `γ = 0` past the last end.
    StepTrain {
        steps: Vec<[f64; 2]>,
    },
    Zero,
}

impl Envelope {
    pub fn power_decay(x0: f64, beta: f64) -> Self {
        Envelope::PowerDecay { x0, beta }
    }

    pub fn exponential(rate: f64) -> Self {
        Envelope::Exponential { rate }
    }

    pub fn step_train(steps: Vec<[f64; 2]>) -> Self {
        Envelope::StepTrain { steps }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let bad = |msg: String| Err(PotentialError::InvalidEnvelope(msg));
        match self {
            Envelope::PowerDecay { x0, beta } => {
                if !(x0.is_finite() && *x0 > 0.0) {
                    return bad(format!("power_decay x0 must be positive, got {x0}"));
                }
                if !(beta.is_finite() && *beta > 0.0) {
                    return bad(format!("power_decay beta must be positive, got {beta}"));
                }
            }
            Envelope::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            Envelope::StepTrain { steps } => {
                let mut prev = 0.0;
                for [end, value] in steps {
                    if !value.is_finite() {
                        return bad(format!("step value {value} has infinite variation"));
                    }
                    if !(end.is_finite() && *end > prev) {
                        return bad(format!(
                            "step ends must increase from 0, got {end} after {prev}"
                        ));
                    }
                    prev = *end;
                }
            }
            Envelope::Zero => {}
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Envelope::PowerDecay { x0, beta } => (1.0 + x / x0).powf(-beta),
            Envelope::Exponential { rate } => (-rate * x).exp(),
            Envelope::StepTrain { steps } => steps
                .iter()
                .find(|[end, _]| x < *end)
                .map_or(0.0, |[_, v]| *v),
            Envelope::Zero => 0.0,
        }
    }

    /// Smooth kinds are normalised to `γ(0) = 1` and strictly decrease.
    pub fn is_monotone(&self) -> bool {
        match self {
            Envelope::PowerDecay { .. } | Envelope::Exponential { .. } | Envelope::Zero => true,
            Envelope::StepTrain { steps } => {
                let mut prev = f64::INFINITY;
                for [_, v] in steps.iter().chain(std::iter::once(&[0.0, 0.0])) {
                    if v.abs() > prev {
                        return false;
                    }
                    prev = v.abs();
                }
                steps.iter().all(|[_, v]| *v >= 0.0) || steps.iter().all(|[_, v]| *v <= 0.0)
            }
        }
    }

    /// Total variation on `(0, ∞)`.
    pub fn variation(&self) -> f64 {
        self.tail_variation(0.0)
    }

    /// Variation on `[a, ∞)`.
    pub fn tail_variation(&self, a: f64) -> f64 {
        match self {
            Envelope::PowerDecay { .. } | Envelope::Exponential { .. } => self.value(a.max(0.0)),
            Envelope::StepTrain { steps } => {
                let mut total = 0.0;
                let mut current: Option<f64> = None;
                for [end, v] in steps {
                    if a < *end {
                        if let Some(c) = current {
                            total += (v - c).abs();
                        }
                        current = Some(*v);
                    }
                }
                total + current.map_or(0.0, f64::abs)
            }
            Envelope::Zero => 0.0,
        }
    }

    /// `Σ_{n ≥ m} |γ(n+1) − γ(n)|` for the envelope sampled on the integers.
    pub fn discrete_tail_variation(&self, m: usize) -> f64 {
        match self {
            Envelope::PowerDecay { .. } | Envelope::Exponential { .. } => self.value(m as f64),
            Envelope::StepTrain { steps } => {
                let last = steps.last().map_or(0.0, |[end, _]| *end);
                let stop = last.ceil() as usize + 1;
                (m..stop.max(m))
                    .map(|n| (self.value(n as f64 + 1.0) - self.value(n as f64)).abs())
                    .sum()
            }
            Envelope::Zero => 0.0,
        }
    }

    /// `∫_u^v |γ(x)|^p dx` in closed form; `v` may be `+∞`.
    pub fn power_integral(&self, p: f64, u: f64, v: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        match self {
            Envelope::PowerDecay { x0, beta } => {
                let q = beta * p;
                let su = 1.0 + u / x0;
                let sv = 1.0 + v / x0;
                if (q - 1.0).abs() < 1e-14 {
                    x0 * (sv.ln() - su.ln())
                } else {
                    x0 / (1.0 - q) * (sv.powf(1.0 - q) - su.powf(1.0 - q))
                }
            }
            Envelope::Exponential { rate } => {
                let q = rate * p;
                ((-q * u).exp() - (-q * v).exp()) / q
            }
            Envelope::StepTrain { steps } => {
                let mut start = 0.0f64;
                let mut total = 0.0;
                for [end, value] in steps {
                    let lo = start.max(u);
                    let hi = end.min(v);
                    if hi > lo {
                        total += value.abs().powf(p) * (hi - lo);
                    }
                    start = *end;
                }
                total
            }
            Envelope::Zero => 0.0,
        }
    }

    fn is_smooth(&self) -> bool {
        matches!(
            self,
            Envelope::PowerDecay { .. } | Envelope::Exponential { .. }
        )
    }

    /// Points where |γ| has a jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Envelope::StepTrain { steps } => steps.iter().map(|[end, _]| *end).collect(),
            _ => Vec::new(),
        }
    }

    fn distinct_levels(&self) -> Vec<f64> {
        match self {
            Envelope::StepTrain { steps } => steps
                .iter()
                .map(|[_, v]| v.abs())
                .filter(|v| *v > 0.0)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Where a smooth (strictly decreasing from 1) envelope takes the value `level`.
    fn level_crossing(&self, level: f64) -> Option<f64> {
        if !(level > 0.0 && level < 1.0) {
            return None;
        }
        match self {
            Envelope::PowerDecay { x0, beta } => Some(x0 * (level.powf(-1.0 / beta) - 1.0)),
            Envelope::Exponential { rate } => Some(-level.ln() / rate),
            _ => None,
        }
    }
}

/// Positive crossing of two smooth envelopes. The log-ratio vanishes at 0 and
/// its derivative has at most one zero, so there is at most one such point.
fn smooth_crossing(a: &Envelope, b: &Envelope) -> Option<f64> {
    let d = |x: f64| a.value(x).ln() - b.value(x).ln();
    let mut lo = 1e-9;
    let mut d_lo = d(lo);
    while lo < 1e12 {
        let hi = lo * 2.0;
        let d_hi = d(hi);
        if d_lo != 0.0 && d_hi != 0.0 && d_lo.signum() != d_hi.signum() {
            let (mut l, mut h) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (l + h);
                if m <= l || m >= h {
                    break;
                }
                if d(m).signum() == d_lo.signum() {
                    l = m;
                } else {
                    h = m;
                }
            }
            return Some(0.5 * (l + h));
        }
        lo = hi;
        d_lo = d_hi;
    }
    None
}

/// `σ(x) = max_k |γ_k(x)|`.
pub fn sup_envelope<'a>(envelopes: impl IntoIterator<Item = &'a Envelope>, x: f64) -> f64 {
    envelopes
        .into_iter()
        .map(|e| e.value(x).abs())
        .fold(0.0, f64::max)
}

/// `∫_a^∞ σ(x)^p dx` for `σ` the pointwise max of the envelopes.
///
/// The half-line is cut at every point where the maximising envelope may
/// change (step ends, step levels met by a smooth envelope, crossings of two
/// smooth envelopes); on each piece one envelope dominates and its closed-form
/// integral is used.
pub fn sup_power_tail(envelopes: &[&Envelope], p: f64, a: f64) -> f64 {
    let mut distinct: Vec<&Envelope> = Vec::new();
    for e in envelopes {
        if !matches!(e, Envelope::Zero) && !distinct.contains(e) {
            distinct.push(e);
        }
    }
    match distinct.as_slice() {
        [] => return 0.0,
        [only] => return only.power_integral(p, a, f64::INFINITY),
        _ => {}
    }

    let mut cuts = vec![a];
    for (i, e) in distinct.iter().enumerate() {
        cuts.extend(e.breakpoints());
        for other in &distinct[i + 1..] {
            if e.is_smooth() && other.is_smooth() {
                cuts.extend(smooth_crossing(e, other));
            }
        }
        if e.is_smooth() {
            for step in distinct.iter().filter(|s| !s.is_smooth()) {
                cuts.extend(
                    step.distinct_levels()
                        .into_iter()
                        .filter_map(|l| e.level_crossing(l)),
                );
            }
        }
    }
    cuts.retain(|c| *c >= a && c.is_finite());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let dominant = |x: f64| -> &Envelope {
        distinct
            .iter()
            .copied()
            .max_by(|l, r| l.value(x).abs().total_cmp(&r.value(x).abs()))
            .expect("at least two envelopes")
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v > u {
            total += dominant(0.5 * (u + v)).power_integral(p, u, v);
        }
    }
    let last = *cuts.last().expect("cuts contains a");
    // Past the last cut the ordering is fixed; probe far out to see who wins.
    let probe = 2.0 * last + 1.0;
    total + dominant(probe).power_integral(p, last, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn closed_form_variations() {
        assert_eq!(Envelope::exponential(1.0).variation(), 1.0);
        assert_eq!(Envelope::power_decay(1.0, 1.0).variation(), 1.0);
        let step = Envelope::step_train(vec![[1.0, 1.0]]);
        assert_eq!(step.variation(), 1.0);
        assert_eq!(step.value(2.0), 0.0);
        let bumpy = Envelope::step_train(vec![[1.0, 1.0], [2.0, -0.5], [3.0, 0.25]]);
        assert_eq!(bumpy.variation(), 1.5 + 0.75 + 0.25);
        assert_eq!(bumpy.tail_variation(1.5), 0.75 + 0.25);
        assert_eq!(bumpy.tail_variation(3.0), 0.0);
        assert!(!bumpy.is_monotone());
    }

    #[test]
    fn discrete_variation_of_harmonic_envelope() {
        let e = Envelope::power_decay(1.0, 1.0);
        let direct: f64 = (3..200_000)
            .map(|n| (e.value(n as f64 + 1.0) - e.value(n as f64)).abs())
            .sum();
        assert!((e.discrete_tail_variation(3) - 0.25).abs() < 1e-5);
        assert!((direct - 0.25).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Envelope::power_decay(0.0, 1.0).validate().is_err());
        assert!(Envelope::exponential(-1.0).validate().is_err());
        assert!(Envelope::step_train(vec![[1.0, f64::INFINITY]])
            .validate()
            .is_err());
        assert!(Envelope::step_train(vec![[2.0, 1.0], [1.0, 0.5]])
            .validate()
            .is_err());
    }

    #[test]
    fn mixed_tail_matches_quadrature() {
        let envs = [
            Envelope::power_decay(1.0, 1.0),
            Envelope::exponential(0.3),
            Envelope::power_decay(3.0, 2.0),
            Envelope::step_train(vec![[2.0, 0.9], [5.0, 0.4]]),
        ];
        let refs: Vec<&Envelope> = envs.iter().collect();
        for a in [0.0, 0.7, 3.0, 12.0] {
            let fast = sup_power_tail(&refs, 2.0, a);
            // Break the reference integral at the step ends and map the tail to a finite interval.
            let sigma = |x: f64| sup_envelope(envs.iter(), x).powi(2);
            let mut slow = 0.0;
            let mut lo = a;
            for cut in [2.0, 5.0, 40.0] {
                if cut > lo {
                    slow += quad::integrate(sigma, lo, cut, 1e-13, 0.0).value;
                    lo = cut;
                }
            }
            slow += quad::integrate(
                |t: f64| sigma(lo + t / (1.0 - t)) / (1.0 - t).powi(2),
                0.0,
                1.0,
                1e-13,
                0.0,
            )
            .value;
            assert!(
                (fast - slow).abs() <= 1e-9 * slow,
                "a={a}: {fast} vs {slow}"
            );
        }
    }
}
