//! Modified Prüfer variables for `-u'' + V u = E u`, `E = η²/4`:
//! `u = R sin(ηx/2 + θ)`, `u' = (η/2) R cos(ηx/2 + θ)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::ode::{self, OdeError, OdeOptions, Output};
use crate::potential::{Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PruferError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Step(#[from] OdeError),
    #[error("u and u' both vanish at x = {x}")]
    DegenerateState { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferSample {
    pub x: f64,
    pub log_r: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest normalised local error among accepted steps.
    pub max_error: f64,
    /// Largest `|Im θ'|` seen when the phase equation is evaluated with the
    /// complex term sum; zero up to rounding for a real potential.
    pub max_imag_residue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruferTrajectory {
    pub eta: f64,
    pub tol: f64,
    pub samples: Vec<PruferSample>,
    pub diagnostics: Diagnostics,
}

impl PruferTrajectory {
    pub fn final_log_r(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.log_r)
    }

    /// Linear interpolation of `log R` at `x` inside the sampled range.
    pub fn log_r_at(&self, x: f64) -> f64 {
        let i = self.samples.partition_point(|s| s.x < x);
        if i == 0 {
            return self.samples[0].log_r;
        }
        if i >= self.samples.len() {
            return self.final_log_r();
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let t = (x - a.x) / (b.x - a.x);
        a.log_r + t * (b.log_r - a.log_r)
    }

    /// `sup_{x ∈ [from, to]} |log R(x) − log R(from)|` over the samples.
    pub fn tail_excursion(&self, from: f64, to: f64) -> f64 {
        let base = self.log_r_at(from);
        self.samples
            .iter()
            .filter(|s| s.x >= from && s.x <= to)
            .map(|s| (s.log_r - base).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with a comment header naming `eta` and `tol`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# eta={} tol={}\nx,logR,theta\n", self.eta, self.tol);
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.x, s.log_r, s.theta);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionSample {
    pub x: f64,
    pub u: f64,
    pub du: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTrajectory {
    pub energy: f64,
    pub samples: Vec<SolutionSample>,
}

impl SolutionTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# E={}\nx,u,du\n", self.energy);
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.x, s.u, s.du);
        }
        out
    }
}

/// Step cap tied to the free oscillation frequency.
pub fn max_step(eta: f64) -> f64 {
    0.1 * (2.0 * PI / eta).min(1.0)
}

fn check_common(pot: &Potential, eta: f64, x_max: f64, tol: f64) -> Result<(), PruferError> {
    pot.require_real()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(PruferError::InvalidArgument(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(PruferError::InvalidArgument(format!(
            "x_max must be positive, got {x_max}"
        )));
    }
    if !(tol > 0.0) {
        return Err(PruferError::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    Ok(())
}

fn check_points(xs: &[f64]) -> Result<f64, PruferError> {
    let ok = !xs.is_empty() && xs[0] >= 0.0 && xs.windows(2).all(|w| w[1] > w[0]);
    if !ok {
        return Err(PruferError::InvalidArgument(
            "sample points must be nonnegative and strictly increasing".into(),
        ));
    }
    Ok(*xs.last().expect("nonempty"))
}

/// Right-hand side of the `(θ, log R)` system, plus `|Im θ'|` from the complex form.
fn prufer_rhs(pot: &Potential, eta: f64, x: f64, theta: f64) -> (f64, f64, f64) {
    let v = pot.value_complex(x);
    let psi = eta * x + 2.0 * theta;
    let (s, c) = psi.sin_cos();
    let bracket = Complex64::from_polar(0.5, psi) + Complex64::from_polar(0.5, -psi) - 1.0;
    let residue = (v * bracket / eta).im.abs();
    let scale = v.re / eta;
    (scale * (c - 1.0), scale * s, residue)
}

/// Integrates the Prüfer system, optionally carrying extra quadrature states
/// whose derivatives `extra(x, θ, θ', out)` depend on the phase.
#[allow(clippy::too_many_arguments)]
fn run_prufer<X>(
    pot: &Potential,
    eta: f64,
    theta0: f64,
    tol: f64,
    x_max: f64,
    output: &Output,
    extra_landmarks: &[f64],
    n_extra: usize,
    mut extra: X,
) -> Result<(ode::OdeSolution, f64), PruferError>
where
    X: FnMut(f64, f64, f64, &mut [f64]),
{
    let mut residue = 0.0f64;
    let opts = OdeOptions::new(tol, max_step(eta));
    let mut landmarks = pot.breakpoints();
    landmarks.extend_from_slice(extra_landmarks);
    let mut y0 = vec![theta0, 0.0];
    y0.resize(2 + n_extra, 0.0);
    let sol = ode::integrate(
        |x, y, dy| {
            let (dtheta, dlog, res) = prufer_rhs(pot, eta, x, y[0]);
            residue = residue.max(res);
            dy[0] = dtheta;
            dy[1] = dlog;
            if n_extra > 0 {
                extra(x, y[0], dtheta, &mut dy[2..]);
            }
        },
        0.0,
        x_max,
        &y0,
        &opts,
        output,
        &landmarks,
        |old, new| (new[0] - old[0]).abs() <= PI / 2.0,
    )?;
    Ok((sol, residue))
}

fn to_trajectory(eta: f64, tol: f64, sol: ode::OdeSolution, residue: f64) -> PruferTrajectory {
    let samples = sol
        .xs
        .iter()
        .zip(&sol.ys)
        .map(|(&x, y)| PruferSample {
            x,
            log_r: y[1],
            theta: y[0],
        })
        .collect();
    PruferTrajectory {
        eta,
        tol,
        samples,
        diagnostics: Diagnostics {
            accepted: sol.stats.accepted,
            rejected: sol.stats.rejected,
            max_error: sol.stats.max_error,
            max_imag_residue: residue,
        },
    }
}

/// Integrates `θ' = (V/η)(cos ψ − 1)`, `(log R)' = (V/η) sin ψ`, `ψ = ηx + 2θ`,
/// from `θ(0) = θ0`, `log R(0) = 0`, recording every accepted step.
pub fn integrate_prufer(
    pot: &Potential,
    eta: f64,
    x_max: f64,
    theta0: f64,
    tol: f64,
) -> Result<PruferTrajectory, PruferError> {
    check_common(pot, eta, x_max, tol)?;
    let (sol, residue) = run_prufer(
        pot,
        eta,
        theta0,
        tol,
        x_max,
        &Output::EveryStep,
        &[],
        0,
        |_, _, _, _| {},
    )?;
    Ok(to_trajectory(eta, tol, sol, residue))
}

/// As [`integrate_prufer`], recording only at the given increasing points.
pub fn integrate_prufer_at(
    pot: &Potential,
    eta: f64,
    theta0: f64,
    tol: f64,
    xs: &[f64],
) -> Result<PruferTrajectory, PruferError> {
    let x_max = check_points(xs)?;
    check_common(pot, eta, x_max, tol)?;
    let (sol, residue) = run_prufer(
        pot,
        eta,
        theta0,
        tol,
        x_max,
        &Output::At(xs.to_vec()),
        &[],
        0,
        |_, _, _, _| {},
    )?;
    Ok(to_trajectory(eta, tol, sol, residue))
}

fn run_schrodinger(
    pot: &Potential,
    energy: f64,
    x_max: f64,
    u0: f64,
    du0: f64,
    tol: f64,
    output: &Output,
) -> Result<SolutionTrajectory, PruferError> {
    pot.require_real()?;
    if u0 == 0.0 && du0 == 0.0 {
        return Err(PruferError::InvalidArgument(
            "initial data (u0, du0) must not both vanish".into(),
        ));
    }
    if !(x_max > 0.0 && tol > 0.0 && energy.is_finite()) {
        return Err(PruferError::InvalidArgument(
            "x_max and tol must be positive, E finite".into(),
        ));
    }
    let h_max = if energy > 0.0 {
        max_step(2.0 * energy.sqrt())
    } else {
        0.1
    };
    let opts = OdeOptions::new(tol, h_max);
    let sol = ode::integrate(
        |x, y, dy| {
            dy[0] = y[1];
            dy[1] = (pot.value(x) - energy) * y[0];
        },
        0.0,
        x_max,
        &[u0, du0],
        &opts,
        output,
        &pot.breakpoints(),
        |_, _| true,
    )?;
    let samples = sol
        .xs
        .iter()
        .zip(&sol.ys)
        .map(|(&x, y)| SolutionSample {
            x,
            u: y[0],
            du: y[1],
        })
        .collect();
    Ok(SolutionTrajectory { energy, samples })
}

/// Integrates `u'' = (V − E) u` with `u(0) = u0`, `u'(0) = du0`.
pub fn integrate_schrodinger(
    pot: &Potential,
    energy: f64,
    x_max: f64,
    u0: f64,
    du0: f64,
    tol: f64,
) -> Result<SolutionTrajectory, PruferError> {
    run_schrodinger(pot, energy, x_max, u0, du0, tol, &Output::EveryStep)
}

/// As [`integrate_schrodinger`], recording only at the given increasing points.
pub fn integrate_schrodinger_at(
    pot: &Potential,
    energy: f64,
    u0: f64,
    du0: f64,
    tol: f64,
    xs: &[f64],
) -> Result<SolutionTrajectory, PruferError> {
    let x_max = check_points(xs)?;
    run_schrodinger(pot, energy, x_max, u0, du0, tol, &Output::At(xs.to_vec()))
}

/// Initial data `(u(0), u'(0))` matching `R(0) = 1`, `θ(0) = θ0`.
pub fn initial_data(eta: f64, theta0: f64) -> (f64, f64) {
    (theta0.sin(), 0.5 * eta * theta0.cos())
}

/// Recovers `(log R, θ)` from sampled `(u, u')`.
///
/// `θ` is the continuous branch of `atan2(u, 2u'/η) − ηx/2` whose
/// sample-to-sample increments lie in `(−π, π]`; `log R` is shifted to vanish
/// at the first sample.
pub fn prufer_from_solution(
    traj: &SolutionTrajectory,
    eta: f64,
) -> Result<PruferTrajectory, PruferError> {
    if !(eta > 0.0) {
        return Err(PruferError::InvalidArgument(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let expected = eta * eta / 4.0;
    if (traj.energy - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(PruferError::InvalidArgument(format!(
            "E = {} does not match eta²/4 = {expected}",
            traj.energy
        )));
    }
    let mut samples: Vec<PruferSample> = Vec::with_capacity(traj.samples.len());
    let mut log_r0 = None;
    for s in &traj.samples {
        let w = 2.0 * s.du / eta;
        if s.u == 0.0 && w == 0.0 {
            return Err(PruferError::DegenerateState { x: s.x });
        }
        let log_r = 0.5 * (s.u * s.u + w * w).ln();
        let base = *log_r0.get_or_insert(log_r);
        let raw = s.u.atan2(w) - 0.5 * eta * s.x;
        let theta = match samples.last() {
            None => raw,
            Some(prev) => {
                let mut d = (raw - prev.theta).rem_euclid(2.0 * PI);
                if d > PI {
                    d -= 2.0 * PI;
                }
                prev.theta + d
            }
        };
        samples.push(PruferSample {
            x: s.x,
            log_r: log_r - base,
            theta,
        });
    }
    Ok(PruferTrajectory {
        eta,
        tol: 0.0,
        samples,
        diagnostics: Diagnostics::default(),
    })
}

/// Checks the oscillatory-integral estimate for the terms `tuple` of `pot`:
/// with `Γ = Π γ_m`, `φ = Σ φ_m` and `θ` the Prüfer phase (`θ(0) = 0`),
/// `lhs = |∫_a^b ((φ − Kη) − 2Kθ') e^{iK(ηx+2θ)} e^{−iφx} Γ dx|` and
/// `rhs = 2 Π Var(γ_m)`.
///
/// The integral is carried as two extra ODE states alongside `(θ, log R)`.
#[allow(clippy::too_many_arguments)]
pub fn osc_integral_bound_check(
    pot: &Potential,
    tuple: &[usize],
    k: i64,
    eta: f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64), PruferError> {
    if tuple.is_empty() || k < 0 || k as usize > tuple.len() {
        return Err(PruferError::InvalidArgument(format!(
            "need 0 <= K <= J with J >= 1, got J={} K={k}",
            tuple.len()
        )));
    }
    if let Some(&bad) = tuple.iter().find(|&&m| m >= pot.terms().len()) {
        return Err(PruferError::InvalidArgument(format!(
            "term index {bad} out of range"
        )));
    }
    if !(0.0 <= a && a < b) {
        return Err(PruferError::InvalidArgument(format!(
            "need 0 <= a < b, got a={a} b={b}"
        )));
    }
    check_common(pot, eta, b, tol)?;
    let terms: Vec<_> = tuple.iter().map(|&m| &pot.terms()[m]).collect();
    let phi: f64 = terms.iter().map(|t| t.phi).sum();
    let rhs = 2.0
        * terms
            .iter()
            .map(|t| t.envelope.variation())
            .product::<f64>();
    let kf = k as f64;
    let integrand = |x: f64, theta: f64, dtheta: f64, out: &mut [f64]| {
        if x < a {
            out[0] = 0.0;
            out[1] = 0.0;
            return;
        }
        let gamma: f64 = terms.iter().map(|t| t.envelope.value(x)).product();
        let phase = Complex64::from_polar(1.0, kf * (eta * x + 2.0 * theta) - phi * x);
        let z = phase * ((phi - kf * eta) - 2.0 * kf * dtheta) * gamma;
        out[0] = z.re;
        out[1] = z.im;
    };
    let points = if a == 0.0 {
        vec![0.0, b]
    } else {
        vec![0.0, a, b]
    };
    let (sol, _) = run_prufer(
        pot,
        eta,
        0.0,
        tol,
        b,
        &Output::At(points),
        &[a],
        2,
        integrand,
    )?;
    let start = sol
        .ys
        .iter()
        .zip(&sol.xs)
        .find(|(_, &x)| x == a)
        .map(|(y, _)| y)
        .expect("a is recorded");
    let end = sol.ys.last().expect("b is recorded");
    let lhs = Complex64::new(end[2] - start[2], end[3] - start[3]).norm();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, Envelope, Term};

    fn wvn() -> Potential {
        build_potential(
            vec![Term::real(1.0, 1.0, Envelope::power_decay(1.0, 1.0))],
            2,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn free_dynamics_are_frozen() {
        let pot = Potential::zero(2, 0.5).unwrap();
        let traj = integrate_prufer(&pot, 1.7, 50.0, 0.4, 1e-10).unwrap();
        assert!(traj
            .samples
            .iter()
            .all(|s| s.theta == 0.4 && s.log_r == 0.0));
        assert_eq!(traj.samples.last().unwrap().x, 50.0);
    }

    #[test]
    fn free_solutions() {
        let pot = Potential::zero(2, 0.5).unwrap();
        let sol = integrate_schrodinger(&pot, 1.0, 30.0, 0.0, 1.0, 1e-10).unwrap();
        for s in &sol.samples {
            assert!((s.u - s.x.sin()).abs() <= 1e-10 * s.x.max(1.0), "x={}", s.x);
        }
        let sol = integrate_schrodinger(&pot, 1.0, 30.0, 1.0, 0.0, 1e-10).unwrap();
        for s in &sol.samples {
            assert!((s.u - s.x.cos()).abs() <= 1e-10 * s.x.max(1.0));
        }
        assert!(integrate_schrodinger(&pot, 1.0, 1.0, 0.0, 0.0, 1e-10).is_err());
    }

    #[test]
    fn reconstruction_of_free_sine() {
        let samples: Vec<SolutionSample> = (0..200)
            .map(|i| {
                let x = i as f64 * 0.1;
                SolutionSample {
                    x,
                    u: 2.0 * x.sin(),
                    du: 2.0 * x.cos(),
                }
            })
            .collect();
        let traj = prufer_from_solution(
            &SolutionTrajectory {
                energy: 1.0,
                samples,
            },
            2.0,
        )
        .unwrap();
        for s in &traj.samples {
            assert!(s.log_r.abs() < 1e-14 && s.theta.abs() < 1e-12, "{s:?}");
        }
        let degenerate = SolutionTrajectory {
            energy: 1.0,
            samples: vec![SolutionSample {
                x: 0.0,
                u: 0.0,
                du: 0.0,
            }],
        };
        assert_eq!(
            prufer_from_solution(&degenerate, 2.0),
            Err(PruferError::DegenerateState { x: 0.0 })
        );
    }

    #[test]
    fn routes_agree_on_a_decaying_potential() {
        let pot = wvn();
        let eta = 2.6;
        let theta0 = 0.3;
        let xs: Vec<f64> = (0..=400).map(|i| i as f64 * 0.5).collect();
        let direct = integrate_prufer_at(&pot, eta, theta0, 1e-10, &xs).unwrap();
        let (u0, du0) = initial_data(eta, theta0);
        let sol = integrate_schrodinger_at(&pot, eta * eta / 4.0, u0, du0, 1e-10, &xs).unwrap();
        let rebuilt = prufer_from_solution(&sol, eta).unwrap();
        for (p, q) in direct.samples.iter().zip(&rebuilt.samples) {
            assert_eq!(p.x, q.x);
            assert!(
                (p.log_r - q.log_r).abs() < 1e-6,
                "x={} {} vs {}",
                p.x,
                p.log_r,
                q.log_r
            );
            assert!((p.theta - q.theta).abs() < 1e-6);
        }
        assert!(direct.diagnostics.max_imag_residue <= 1e-14 * pot.coeff_l1() / eta);
    }

    #[test]
    fn wronskian_is_conserved() {
        let pot = wvn();
        let xs: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        let a = integrate_schrodinger_at(&pot, 0.8, 1.0, 0.0, 1e-10, &xs).unwrap();
        let b = integrate_schrodinger_at(&pot, 0.8, 0.0, 1.0, 1e-10, &xs).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            let w = p.u * q.du - p.du * q.u;
            assert!((w - 1.0).abs() < 1e-8, "x={} W={w}", p.x);
        }
    }

    #[test]
    fn resonant_energy_grows_and_generic_energy_settles() {
        let pot = wvn();
        let resonant = integrate_prufer(&pot, 1.0, 500.0, 0.0, 1e-8).unwrap();
        let other = integrate_prufer(&pot, 1.0, 500.0, PI / 2.0, 1e-8).unwrap();
        let growth = resonant.final_log_r() - resonant.log_r_at(50.0);
        let growth_other = other.final_log_r() - other.log_r_at(50.0);
        assert!(growth.max(growth_other) > 0.5, "{growth} {growth_other}");
        let calm = integrate_prufer(&pot, 5.0, 500.0, 0.0, 1e-8).unwrap();
        assert!(calm.tail_excursion(100.0, 500.0) < 0.1);
    }

    #[test]
    fn oscillatory_integral_free_background() {
        let pot = build_potential(
            vec![Term::real(0.0, 1.0, Envelope::power_decay(1.0, 1.0))],
            2,
            0.5,
        )
        .unwrap();
        let (lhs, rhs) = osc_integral_bound_check(&pot, &[0], 1, 3.0, 0.0, 100.0, 1e-10).unwrap();
        assert_eq!(rhs, 2.0);
        let exact =
            crate::quad::integrate(|x| (2.0 * x).cos() / (1.0 + x), 0.0, 100.0, 1e-12, 0.0).value;
        let exact_im =
            crate::quad::integrate(|x| (2.0 * x).sin() / (1.0 + x), 0.0, 100.0, 1e-12, 0.0).value;
        let expected = 2.0 * exact.hypot(exact_im);
        assert!((lhs - expected).abs() < 1e-7, "{lhs} vs {expected}");
        assert!(lhs <= rhs);

        let zero = build_potential(vec![Term::real(0.0, 1.0, Envelope::Zero)], 2, 0.5).unwrap();
        assert_eq!(
            osc_integral_bound_check(&zero, &[0], 1, 3.0, 0.0, 10.0, 1e-10).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn csv_header() {
        let pot = Potential::zero(2, 0.5).unwrap();
        let traj = integrate_prufer_at(&pot, 2.0, 0.0, 1e-10, &[0.0, 1.0]).unwrap();
        assert!(traj
            .to_csv()
            .starts_with("# eta=2 tol=0.0000000001\nx,logR,theta\n0,0,0\n"));
    }
}
