//! Discrete Prüfer recursions for orthogonal polynomials on the unit circle
//! (`c = 0`) and on the real line (`c = 1`), with a Szegő-recursion oracle.
//!
//! With `ψ_n = (n+1)η + 2θ_n` and `w_n = 1 − α_n e^{iψ_n} − c ᾱ_n`:
//! `r_{n+1}/r_n = |w_n| / √((1 − cα_n)(1 − cᾱ_n) − |α_n|²)` and
//! `e^{2i(θ_{n+1} − θ_n)} = w̄_n / w_n`.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::potential::Term;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteError {
    #[error("e^(i eta) = 1 at eta = {eta}: the Jacobi-to-Verblunsky map has a pole")]
    Pole { eta: f64 },
    #[error("radicand {value} <= 0 at n = {index}: eta is outside the window where the amplitude is real")]
    Radicand { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Opuc,
    Oprl,
}

impl Family {
    pub fn c(self) -> f64 {
        match self {
            Family::Opuc => 0.0,
            Family::Oprl => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    OpucDirect,
    /// Derived from Jacobi parameters at a fixed `η`; `b` is indexed so that
    /// `α_n` uses `a[n]` and `b[n + 1]`.
    OprlDerived {
        a: Vec<f64>,
        b: Vec<f64>,
        eta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSequence {
    pub values: Vec<Complex64>,
    pub origin: Origin,
    /// Terms `(c_l, φ_l, γ^{(l)})` with `α_n = Σ_l c_l e^{−inφ_l} γ^{(l)}_n`, when known.
    pub terms: Option<Vec<Term>>,
}

impl CoeffSequence {
    pub fn opuc(values: Vec<Complex64>) -> Result<Self, DiscreteError> {
        if let Some(n) = values.iter().position(|a| !(a.norm() < 1.0)) {
            return Err(DiscreteError::InvalidArgument(format!(
                "|alpha_{n}| must be < 1"
            )));
        }
        Ok(CoeffSequence {
            values,
            origin: Origin::OpucDirect,
            terms: None,
        })
    }

    /// Verblunsky coefficients `α_n = Σ_l c_l e^{−inφ_l} γ^{(l)}(n)`, `n < len`.
    pub fn opuc_from_terms(terms: Vec<Term>, len: usize) -> Result<Self, DiscreteError> {
        let values = (0..len)
            .map(|n| terms.iter().map(|t| t.value(n as f64)).sum::<Complex64>())
            .collect();
        let mut seq = CoeffSequence::opuc(values)?;
        seq.terms = Some(terms);
        Ok(seq)
    }

    /// `α_n` from Jacobi parameters at spectral parameter `η`.
    pub fn oprl(a: Vec<f64>, b: Vec<f64>, eta: f64) -> Result<Self, DiscreteError> {
        if b.len() != a.len() + 1 {
            return Err(DiscreteError::InvalidArgument(
                "need len(b) = len(a) + 1".into(),
            ));
        }
        let values = a
            .iter()
            .zip(&b[1..])
            .map(|(&a, &b)| oprl_alpha(a, b, eta))
            .collect::<Result<_, _>>()?;
        Ok(CoeffSequence {
            values,
            origin: Origin::OprlDerived { a, b, eta },
            terms: None,
        })
    }

    pub fn family(&self) -> Family {
        match self.origin {
            Origin::OpucDirect => Family::Opuc,
            Origin::OprlDerived { .. } => Family::Oprl,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `α = (a² − 1 + e^{iη/2} b_next) / (e^{iη} − 1)`.
pub fn oprl_alpha(a: f64, b_next: f64, eta: f64) -> Result<Complex64, DiscreteError> {
    if !(a > 0.0) {
        return Err(DiscreteError::InvalidArgument(format!(
            "a_n must be positive, got {a}"
        )));
    }
    let denom = Complex64::from_polar(1.0, eta) - 1.0;
    if denom.norm() < 1e-12 {
        return Err(DiscreteError::Pole { eta });
    }
    Ok((a * a - 1.0 + Complex64::from_polar(b_next, eta / 2.0)) / denom)
}

/// One step of the recursion at index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub log_ratio: f64,
    pub theta_next: f64,
    /// `w̄/w` as evaluated; unimodular up to rounding.
    pub ratio: Complex64,
    /// Imaginary part of the evaluated radicand.
    pub radicand_residue: f64,
}

pub fn prufer_step_detailed(
    alpha: Complex64,
    eta: f64,
    n: usize,
    theta: f64,
    c: f64,
) -> Result<Step, DiscreteError> {
    let psi = (n as f64 + 1.0) * eta + 2.0 * theta;
    let e = Complex64::from_polar(1.0, psi);
    let radicand = (1.0 - c * alpha) * (1.0 - c * alpha.conj()) - alpha * alpha.conj();
    if !(radicand.re > 0.0) {
        return Err(DiscreteError::Radicand {
            index: n,
            value: radicand.re,
        });
    }
    let den = 1.0 - alpha * e - c * alpha.conj();
    let num = 1.0 - alpha.conj() * e.conj() - c * alpha;
    let ratio = num / den;
    Ok(Step {
        log_ratio: den.norm().ln() - 0.5 * radicand.re.ln(),
        theta_next: theta + 0.5 * ratio.arg(),
        ratio,
        radicand_residue: radicand.im.abs(),
    })
}

/// `(log(r_{n+1}/r_n), θ_{n+1})`; the phase increment is half the principal argument.
pub fn prufer_step(
    alpha: Complex64,
    eta: f64,
    n: usize,
    theta: f64,
    c: f64,
) -> Result<(f64, f64), DiscreteError> {
    prufer_step_detailed(alpha, eta, n, theta, c).map(|s| (s.log_ratio, s.theta_next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    pub family: Family,
    pub eta: f64,
    /// `log r_n`, `n = 0..=N`, with `log r_0 = 0`.
    pub log_r: Vec<f64>,
    pub theta: Vec<f64>,
    /// Largest `| |w̄/w| − 1 |` along the run.
    pub max_unimodularity_error: f64,
    pub max_radicand_residue: f64,
}

impl DiscreteTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# eta={} c={}\nn,log_r,theta\n", self.eta, self.family.c());
        for (n, (l, t)) in self.log_r.iter().zip(&self.theta).enumerate() {
            let _ = writeln!(out, "{n},{l},{t}");
        }
        out
    }

    /// `sup_{n ∈ [from, to]} |log r_n − log r_from|`.
    pub fn tail_excursion(&self, from: usize, to: usize) -> f64 {
        let base = self.log_r[from];
        self.log_r[from..=to.min(self.log_r.len() - 1)]
            .iter()
            .map(|l| (l - base).abs())
            .fold(0.0, f64::max)
    }
}

/// Folds [`prufer_step`] over the whole sequence.
pub fn run_discrete(
    seq: &CoeffSequence,
    eta: f64,
    theta0: f64,
) -> Result<DiscreteTrajectory, DiscreteError> {
    let c = seq.family().c();
    let mut log_r = Vec::with_capacity(seq.len() + 1);
    let mut theta = Vec::with_capacity(seq.len() + 1);
    log_r.push(0.0);
    theta.push(theta0);
    let mut unimod = 0.0f64;
    let mut residue = 0.0f64;
    for (n, &alpha) in seq.values.iter().enumerate() {
        let step = prufer_step_detailed(alpha, eta, n, theta[n], c)?;
        log_r.push(log_r[n] + step.log_ratio);
        theta.push(step.theta_next);
        unimod = unimod.max((step.ratio.norm() - 1.0).abs());
        residue = residue.max(step.radicand_residue);
    }
    Ok(DiscreteTrajectory {
        family: seq.family(),
        eta,
        log_r,
        theta,
        max_unimodularity_error: unimod,
        max_radicand_residue: residue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SzegoComparison {
    /// `max_n |log r_n + ½ Σ_{k<n} log(1 − |α_k|²) − log|Φ_n(e^{iη})||`.
    pub max_deviation: f64,
    /// `max_n |e^{−iψ_n} − z^{−1} Φ*_n/Φ_n|`.
    pub phase_deviation: f64,
}

/// Compares the `c = 0` recursion from `θ_0 = 0` with the Szegő recursion
/// `Φ_{n+1} = zΦ_n − ᾱ_nΦ*_n`, `Φ*_{n+1} = Φ*_n − α_n zΦ_n` at `z = e^{iη}`.
///
/// The oracle runs on `ρ_n = Φ*_n/Φ_n`, which is unimodular:
/// `log|Φ_{n+1}/Φ_n| = log|1 − ᾱ_n z̄ ρ_n|` and
/// `ρ_{n+1} = z̄ (ρ_n − α_n z) / (1 − ᾱ_n z̄ ρ_n)`.
pub fn szego_compare(
    seq: &CoeffSequence,
    eta: f64,
    n_max: usize,
) -> Result<SzegoComparison, DiscreteError> {
    if seq.family() != Family::Opuc {
        return Err(DiscreteError::InvalidArgument(
            "the Szegő oracle needs Verblunsky coefficients".into(),
        ));
    }
    if n_max > seq.len() {
        return Err(DiscreteError::InvalidArgument(format!(
            "N = {n_max} exceeds the sequence length {}",
            seq.len()
        )));
    }
    let traj = run_discrete(seq, eta, 0.0)?;
    let z = Complex64::from_polar(1.0, eta);
    let zbar = z.conj();
    let mut rho = Complex64::new(1.0, 0.0);
    let mut log_phi = 0.0;
    let mut log_norm_sum = 0.0;
    let mut worst = 0.0f64;
    let mut worst_phase = 0.0f64;
    for n in 0..=n_max {
        let dev = (traj.log_r[n] + 0.5 * log_norm_sum - log_phi).abs();
        worst = worst.max(dev);
        let psi = (n as f64 + 1.0) * eta + 2.0 * traj.theta[n];
        worst_phase = worst_phase.max((Complex64::from_polar(1.0, -psi) - zbar * rho).norm());
        if n == n_max {
            break;
        }
        let alpha = seq.values[n];
        let factor = 1.0 - alpha.conj() * zbar * rho;
        log_phi += factor.norm().ln();
        rho = zbar * (rho - alpha * z) / factor;
        rho /= rho.norm();
        log_norm_sum += (1.0 - alpha.norm_sqr()).ln();
    }
    Ok(SzegoComparison {
        max_deviation: worst,
        phase_deviation: worst_phase,
    })
}

/// The discrete analog of the oscillatory-sum estimate.
///
/// With `Γ_n = Π_{plus} γ_n Π_{minus} γ̄_n`, `φ = Σ_{plus} φ − Σ_{minus} φ`,
/// `A_n = e^{−inφ} Γ_n e^{ik[(n+1)η + 2θ_n]}` and `θ_n` from [`run_discrete`]
/// at `θ_0 = 0`, returns
/// `lhs = |Σ_{n=M}^{N} ((e^{−i(kη−φ)} − 1) A_n − A_n (e^{2ik(θ_{n+1}−θ_n)} − 1))|`
/// and `rhs = 2τ^{s+t}`, `τ = max_l Σ_{n≥M} |γ^{(l)}_{n+1} − γ^{(l)}_n|` over the tuple.
#[allow(clippy::too_many_arguments)]
pub fn discrete_sum_bound_check(
    seq: &CoeffSequence,
    plus: &[usize],
    minus: &[usize],
    k: i64,
    eta: f64,
    m: usize,
    n_end: usize,
) -> Result<(f64, f64), DiscreteError> {
    let terms = seq.terms.as_ref().ok_or_else(|| {
        DiscreteError::InvalidArgument("sequence has no term representation".into())
    })?;
    if plus.is_empty() && minus.is_empty() {
        return Err(DiscreteError::InvalidArgument("need s + t >= 1".into()));
    }
    if let Some(&bad) = plus.iter().chain(minus).find(|&&i| i >= terms.len()) {
        return Err(DiscreteError::InvalidArgument(format!(
            "term index {bad} out of range"
        )));
    }
    if m > n_end || n_end >= seq.len() {
        return Err(DiscreteError::InvalidArgument(format!(
            "need M <= N < {} (got M={m}, N={n_end})",
            seq.len()
        )));
    }
    let traj = run_discrete(seq, eta, 0.0)?;
    let phi: f64 = plus.iter().map(|&i| terms[i].phi).sum::<f64>()
        - minus.iter().map(|&i| terms[i].phi).sum::<f64>();
    let kf = k as f64;
    let shift = Complex64::from_polar(1.0, -(kf * eta - phi)) - 1.0;
    let mut sum = Complex64::new(0.0, 0.0);
    for n in m..=n_end {
        let x = n as f64;
        // Envelopes are real, so conjugation only matters through the sign of φ.
        let gamma: f64 = plus
            .iter()
            .chain(minus)
            .map(|&i| terms[i].envelope.value(x))
            .product();
        let psi = (x + 1.0) * eta + 2.0 * traj.theta[n];
        let a = Complex64::from_polar(gamma, -x * phi + kf * psi);
        let dtheta = traj.theta[n + 1] - traj.theta[n];
        sum += shift * a - a * (Complex64::from_polar(1.0, 2.0 * kf * dtheta) - 1.0);
    }
    let tau = plus
        .iter()
        .chain(minus)
        .map(|&i| terms[i].envelope.discrete_tail_variation(m))
        .fold(0.0, f64::max);
    Ok((
        sum.norm(),
        2.0 * tau.powi((plus.len() + minus.len()) as i32),
    ))
}
