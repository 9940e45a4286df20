//! Dormand–Prince 5(4) with first-same-as-last stages and per-unit-step error control.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at x = {x} (h = {h:e})")]
    StepFailure { x: f64, h: f64 },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl OdeOptions {
    pub fn new(tol: f64, max_step: f64) -> Self {
        OdeOptions {
            tol,
            max_step,
            initial_step: max_step.min(1e-3),
            min_step: 1e-14,
        }
    }
}

/// Where accepted states are recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// After every accepted step.
    EveryStep,
    /// Only at these abscissae (sorted, inside the interval); steps are
    /// shortened to land on them exactly.
    At(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest normalised error estimate among accepted steps (≤ 1).
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub stats: OdeStats,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = rhs(x, y)` from `x0` to `x1 > x0`.
///
/// The local error estimate of a step of length `h` must satisfy
/// `‖err‖∞ ≤ tol·h·(1 + ‖y‖∞)`. `accept(y_old, y_new)` can veto an otherwise
/// acceptable step; the step is then halved. Steps are also clipped to land
/// on `landmarks`, which is where a discontinuous right-hand side should jump.
#[allow(clippy::too_many_arguments)]
pub fn integrate<F, G>(
    mut rhs: F,
    x0: f64,
    x1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    output: &Output,
    landmarks: &[f64],
    mut accept: G,
) -> Result<OdeSolution, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(&[f64], &[f64]) -> bool,
{
    assert!(x1 > x0, "integration interval must be nonempty");
    let n = y0.len();
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut stats = OdeStats::default();
    // Every point the integrator must land on, with flags (recorded, landmark).
    let mut stops: Vec<(f64, bool, bool)> = landmarks.iter().map(|&t| (t, false, true)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    match output {
        Output::EveryStep => {
            xs.push(x0);
            ys.push(y.clone());
        }
        Output::At(points) => {
            if points.first() == Some(&x0) {
                xs.push(x0);
                ys.push(y.clone());
            }
            stops.extend(points.iter().map(|&t| (t, true, false)));
        }
    }
    stops.retain(|&(t, _, _)| t > x0 && t < x1);
    stops.push((
        x1,
        matches!(output, Output::At(points) if points.last() == Some(&x1)),
        false,
    ));
    stops.sort_by(|a, b| a.0.total_cmp(&b.0));
    stops.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 |= later.1;
            earlier.2 |= later.2;
            true
        } else {
            false
        }
    });
    let record_all = matches!(output, Output::EveryStep);
    let mut next_stop = 0;

    rhs(x, &y, &mut k[0]);
    let mut h = opts.initial_step.min(opts.max_step).min(x1 - x0);
    while x < x1 {
        let (stop, record_stop, landmark) = stops[next_stop];
        let mut step = h.min(stop - x);
        let lands = step >= stop - x || x + step >= stop;
        if lands {
            step = stop - x;
        }
        // On a landmark the right-hand side may jump; end-of-step stages use its left limit.
        let step_end = if lands && landmark {
            stop.next_down()
        } else {
            x + step
        };
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + step * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            let xs_eval = if C[s] == 1.0 {
                step_end
            } else {
                x + C[s] * step
            };
            rhs(xs_eval, &stage, &mut tail[0]);
        }
        // The seventh stage was evaluated at the fifth-order solution.
        y_new.copy_from_slice(&stage);
        let scale = 1.0 + y.iter().chain(&y_new).fold(0.0f64, |m, v| m.max(v.abs()));
        let err = (0..n)
            .map(|i| (k.iter().zip(E).map(|(ks, e)| e * ks[i]).sum::<f64>() * step).abs())
            .fold(0.0f64, f64::max);
        let norm = err / (opts.tol * step * scale);
        if !norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            if step <= opts.min_step {
                return Err(OdeError::NonFinite { x });
            }
            h = step * 0.2;
            stats.rejected += 1;
            continue;
        }
        if norm <= 1.0 && accept(&y, &y_new) {
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(norm);
            x = if lands { stop } else { x + step };
            std::mem::swap(&mut y, &mut y_new);
            let last = k.len() - 1;
            k.swap(0, last);
            if lands && landmark {
                rhs(x, &y, &mut k[0]);
            }
            let record = record_all || (lands && record_stop);
            if lands {
                next_stop += 1;
            }
            if record {
                xs.push(x);
                ys.push(y.clone());
            }
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (step * factor).min(opts.max_step);
            if lands {
                // A clipped step says nothing about the natural step size.
                h = h.max(step.min(opts.max_step));
            }
        } else {
            stats.rejected += 1;
            let factor = if norm <= 1.0 {
                0.5
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0)
            };
            h = step * factor;
            if h < opts.min_step {
                return Err(OdeError::StepFailure { x, h });
            }
        }
    }
    Ok(OdeSolution { xs, ys, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(_: &[f64], _: &[f64]) -> bool {
        true
    }

    #[test]
    fn harmonic_oscillator() {
        let opts = OdeOptions::new(1e-10, 0.1);
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            20.0,
            &[0.0, 1.0],
            &opts,
            &Output::EveryStep,
            &[],
            all,
        )
        .unwrap();
        for (x, y) in sol.xs.iter().zip(&sol.ys) {
            assert!((y[0] - x.sin()).abs() < 1e-9 * (1.0 + x), "x={x}");
        }
        assert_eq!(*sol.xs.last().unwrap(), 20.0);
    }

    #[test]
    fn lands_on_requested_points() {
        let opts = OdeOptions::new(1e-10, 0.5);
        let pts = vec![0.0, 0.3, 1.0, 2.5];
        let sol = integrate(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            2.5,
            &[1.0],
            &opts,
            &Output::At(pts.clone()),
            &[],
            all,
        )
        .unwrap();
        assert_eq!(sol.xs, pts);
        for (x, y) in sol.xs.iter().zip(&sol.ys) {
            assert!((y[0] - (-x).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn veto_forces_smaller_steps() {
        let opts = OdeOptions::new(1e-6, 1.0);
        let sol = integrate(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            1.0,
            &[0.0],
            &opts,
            &Output::EveryStep,
            &[],
            |a, b| (b[0] - a[0]).abs() <= 0.05,
        )
        .unwrap();
        assert!(sol.xs.windows(2).all(|w| w[1] - w[0] <= 0.05 + 1e-15));
        assert!(sol.stats.rejected > 0);
    }

    #[test]
    fn jump_at_landmark() {
        let opts = OdeOptions::new(1e-10, 0.5);
        let rhs = |x: f64, _: &[f64], dy: &mut [f64]| dy[0] = if x < 1.0 { 1.0 } else { -3.0 };
        let sol = integrate(
            rhs,
            0.0,
            2.0,
            &[0.0],
            &opts,
            &Output::At(vec![1.0, 2.0]),
            &[1.0],
            all,
        )
        .unwrap();
        assert_eq!(sol.xs, vec![1.0, 2.0]);
        assert!(
            (sol.ys[0][0] - 1.0).abs() < 1e-12 && (sol.ys[1][0] + 2.0).abs() < 1e-12,
            "{:?}",
            sol.ys
        );
    }

    #[test]
    fn dense_output_points_do_not_stall() {
        let opts = OdeOptions::new(1e-10, 0.1);
        let pts: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.1).collect();
        let sol = integrate(
            |_, y, dy| dy[0] = -1e-3 * y[0],
            0.0,
            200.0,
            &[1.0],
            &opts,
            &Output::At(pts),
            &[],
            all,
        )
        .unwrap();
        assert_eq!(sol.xs.len(), 2001);
    }

    #[test]
    fn stiff_blowup_reports_failure() {
        let opts = OdeOptions::new(1e-12, 1.0);
        let res = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            2.0,
            &[1.0],
            &opts,
            &Output::EveryStep,
            &[],
            all,
        );
        assert!(res.is_err());
    }
}
