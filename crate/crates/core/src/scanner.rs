//! Energy scans for unbounded solutions, divergence maps of the small-divisor
//! sums, box-counting dimension estimates and the Hölder integral check.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{small_divisor_sum, total_bound};
use crate::potential::Potential;
use crate::prufer::integrate_prufer;
use crate::quad::gauss_legendre;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub n_grid: usize,
    pub x_max: f64,
    pub growth_threshold: f64,
    pub cap: f64,
    pub tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            n_grid: 2048,
            x_max: 200.0,
            growth_threshold: 1.0,
            cap: 1e3,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub eta: f64,
    /// Largest tail excursion of `log R` over the two probes; `None` if an
    /// integration failed (see `error`).
    pub growth: Option<f64>,
    pub error: Option<String>,
    /// Bit `j − 1` is set when the order-`j` small-divisor sum is infinite or ≥ cap.
    pub divergent: u32,
    /// `None` when the bound is infinite.
    pub bound: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub options: ScanOptions,
    pub entries: Vec<ScanEntry>,
    /// Maximal runs of flagged grid points, as `(first η, last η)`.
    pub flagged_intervals: Vec<(f64, f64)>,
}

impl ScanReport {
    pub fn grid_step(&self) -> f64 {
        match self.entries.as_slice() {
            [first, .., last] => (last.eta - first.eta) / (self.entries.len() - 1) as f64,
            _ => 0.0,
        }
    }

    pub fn flagged_etas(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.flagged)
            .map(|e| e.eta)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let o = &self.options;
        let mut out = format!(
            "# grid step {} over {} points; x_max {}; growth threshold {}; cap {}; tol {}. \
             Features narrower than the grid step or slower than x_max are not resolved.\n",
            self.grid_step(),
            self.entries.len(),
            o.x_max,
            o.growth_threshold,
            o.cap,
            o.tol
        );
        out.push_str("eta,growth_stat,divergent_j_flags,bound_value,flagged\n");
        for e in &self.entries {
            let growth = e
                .growth
                .map_or_else(|| "nan".to_string(), |g| g.to_string());
            let bound = e.bound.map_or_else(|| "inf".to_string(), |b| b.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.eta, growth, e.divergent, bound, e.flagged as u8
            );
        }
        out
    }
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Maximal runs of `true` in `mask`, mapped to grid values.
pub fn runs(grid: &[f64], mask: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((grid[s], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[mask.len() - 1]));
    }
    out
}

fn divergence_bits(pot: &Potential, eta: f64, cap: f64) -> u32 {
    let mut bits = 0;
    for j in 1..pot.p() as usize {
        if let Ok(s) = small_divisor_sum(pot, j, eta) {
            if !s.is_finite() || s.value >= cap {
                bits |= 1 << (j - 1);
            }
        }
    }
    bits
}

fn growth_statistic(pot: &Potential, eta: f64, opts: &ScanOptions) -> Result<f64, String> {
    let mid = 0.5 * opts.x_max;
    let mut worst = 0.0f64;
    for theta0 in [0.0, PI / 2.0] {
        let traj =
            integrate_prufer(pot, eta, opts.x_max, theta0, opts.tol).map_err(|e| e.to_string())?;
        worst = worst.max(traj.tail_excursion(mid, opts.x_max));
    }
    Ok(worst)
}

/// Scans a uniform `η` grid: per point, integrates two independent solutions
/// (`θ0 = 0, π/2`), evaluates the small-divisor sums and the assembled bound,
/// and flags points with large tail growth or divergent sums.
pub fn scan_energies(
    pot: &Potential,
    eta_min: f64,
    eta_max: f64,
    opts: &ScanOptions,
) -> Result<ScanReport, ScanError> {
    if !(eta_min > 0.0 && eta_max > eta_min) {
        return Err(ScanError::InvalidArgument(format!(
            "need 0 < eta_min < eta_max, got [{eta_min}, {eta_max}]"
        )));
    }
    if opts.n_grid < 2 || !(opts.x_max > 0.0) || !(opts.cap > 0.0) || !(opts.tol > 0.0) {
        return Err(ScanError::InvalidArgument(
            "need n_grid >= 2 and positive x_max, cap, tol".into(),
        ));
    }
    pot.require_real()
        .map_err(|e| ScanError::InvalidArgument(e.to_string()))?;
    let grid = linear_grid(eta_min, eta_max, opts.n_grid);
    let entries: Vec<ScanEntry> = grid
        .par_iter()
        .map(|&eta| {
            let (growth, error) = match growth_statistic(pot, eta, opts) {
                Ok(g) => (Some(g), None),
                Err(e) => (None, Some(e)),
            };
            let divergent = divergence_bits(pot, eta, opts.cap);
            let bound = total_bound(pot, eta, 0.0).ok().map(|b| b.total);
            let flagged = divergent != 0 || growth.is_some_and(|g| g > opts.growth_threshold);
            ScanEntry {
                eta,
                growth,
                error,
                divergent,
                bound,
                flagged,
            }
        })
        .collect();
    let mask: Vec<bool> = entries.iter().map(|e| e.flagged).collect();
    let flagged_intervals = runs(&grid, &mask);
    Ok(ScanReport {
        options: *opts,
        entries,
        flagged_intervals,
    })
}

/// Maximal grid runs where the order-`j` small-divisor sum is infinite or ≥ `cap`.
pub fn divergence_set(
    pot: &Potential,
    j: usize,
    eta_grid: &[f64],
    cap: f64,
) -> Result<Vec<(f64, f64)>, ScanError> {
    if j < 1 || j + 1 > pot.p() as usize {
        return Err(ScanError::InvalidArgument(format!(
            "need 1 <= j <= p-1, got {j}"
        )));
    }
    if !(cap > 0.0) {
        return Err(ScanError::InvalidArgument("cap must be positive".into()));
    }
    let mask: Vec<bool> = eta_grid
        .par_iter()
        .map(|&eta| {
            let s = small_divisor_sum(pot, j, eta).expect("order checked above");
            !s.is_finite() || s.value >= cap
        })
        .collect();
    Ok(runs(eta_grid, &mask))
}

/// A subset of the line for box counting.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSet {
    Points(Vec<f64>),
    Intervals(Vec<(f64, f64)>),
}

impl PointSet {
    /// The grid points selected by `mask`.
    pub fn from_mask(grid: &[f64], mask: &[bool]) -> Self {
        PointSet::Points(
            grid.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&x, _)| x)
                .collect(),
        )
    }

    fn is_empty(&self) -> bool {
        match self {
            PointSet::Points(p) => p.is_empty(),
            PointSet::Intervals(i) => i.is_empty(),
        }
    }

    /// Number of half-open boxes `[iε, (i+1)ε)` meeting the set.
    pub fn box_count(&self, eps: f64) -> usize {
        // Absorbs rounding when a point sits on a box edge.
        const NUDGE: f64 = 1e-9;
        let mut boxes = BTreeSet::new();
        match self {
            PointSet::Points(points) => {
                for &x in points {
                    boxes.insert((x / eps + NUDGE).floor() as i64);
                }
            }
            PointSet::Intervals(intervals) => {
                for &(lo, hi) in intervals {
                    let first = (lo / eps + NUDGE).floor() as i64;
                    let last = ((hi / eps - NUDGE).ceil() as i64 - 1).max(first);
                    boxes.extend(first..=last);
                }
            }
        }
        boxes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fitted slope clamped to `[0, 1]`.
    pub slope: f64,
    pub raw_slope: f64,
    /// Two standard errors of the fitted slope.
    pub confidence_width: f64,
    /// Set when the input was empty; the estimate is then 0 by convention.
    pub degenerate: bool,
}

impl DimensionEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,count\n");
        for (s, c) in self.scales.iter().zip(&self.counts) {
            let _ = writeln!(out, "{s},{c}");
        }
        let _ = writeln!(
            out,
            "# slope={} raw_slope={} confidence_width={} degenerate={}",
            self.slope, self.raw_slope, self.confidence_width, self.degenerate
        );
        out
    }
}

/// Least-squares slope of `log N(ε)` against `log(1/ε)`.
pub fn box_counting_dim(set: &PointSet, scales: &[f64]) -> Result<DimensionEstimate, ScanError> {
    if scales.len() < 3 || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(ScanError::InvalidArgument(
            "need at least 3 positive scales".into(),
        ));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| a.total_cmp(b));
    if scales[scales.len() - 1] / scales[0] < 100.0 * (1.0 - 1e-12) {
        return Err(ScanError::InvalidArgument(
            "scales must span at least two decades".into(),
        ));
    }
    let counts: Vec<usize> = scales.iter().map(|&s| set.box_count(s)).collect();
    if set.is_empty() {
        return Ok(DimensionEstimate {
            scales,
            counts,
            slope: 0.0,
            raw_slope: 0.0,
            confidence_width: 0.0,
            degenerate: true,
        });
    }
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    Ok(DimensionEstimate {
        scales,
        counts,
        slope: slope.clamp(0.0, 1.0),
        raw_slope: slope,
        confidence_width: 2.0 * se,
        degenerate: false,
    })
}

/// Intervals of the level-`level` middle-thirds Cantor construction.
pub fn cantor_intervals(level: u32) -> Vec<(f64, f64)> {
    let mut intervals = vec![(0.0, 1.0)];
    for _ in 0..level {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    intervals
}

/// `∫_0^1 |η − ψ|^{−α} dη` in closed form.
pub fn holder_closed_form(alpha: f64, psi: f64) -> f64 {
    (psi.powf(1.0 - alpha) + (1.0 - psi).powf(1.0 - alpha)) / (1.0 - alpha)
}

/// `max_ψ ∫_0^1 |η − ψ|^{−α} dη` by quadrature, with the bound `2^α/(1 − α)`.
///
/// The integral is split at `ψ`; on each side `t = |η − ψ| = L u^{1/(1−α)}`
/// maps the endpoint singularity away before an `n_quad`-point
/// Gauss–Legendre rule is applied in `u`.
pub fn holder_check(alpha: f64, psi_grid: &[f64], n_quad: usize) -> Result<(f64, f64), ScanError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScanError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if n_quad == 0 || psi_grid.is_empty() || psi_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(ScanError::InvalidArgument(
            "need n_quad >= 1 and psi values in [0, 1]".into(),
        ));
    }
    let (nodes, weights) = gauss_legendre(n_quad);
    let q = 1.0 / (1.0 - alpha);
    let side = |len: f64| -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        nodes
            .iter()
            .zip(&weights)
            .map(|(&z, &w)| {
                let u = 0.5 * (z + 1.0);
                let t = len * u.powf(q);
                let jacobian = len * q * u.powf(q - 1.0);
                0.5 * w * t.powf(-alpha) * jacobian
            })
            .sum()
    };
    let max = psi_grid
        .iter()
        .map(|&psi| side(psi) + side(1.0 - psi))
        .fold(0.0, f64::max);
    Ok((max, 2f64.powf(alpha) / (1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, Envelope, Term};

    #[test]
    fn runs_are_maximal() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            runs(&grid, &[true, true, false, true, true]),
            vec![(0.0, 1.0), (3.0, 4.0)]
        );
        assert!(runs(&grid, &[false; 5]).is_empty());
    }

    #[test]
    fn free_scan_flags_nothing() {
        let pot = Potential::zero(2, 0.5).unwrap();
        let opts = ScanOptions {
            n_grid: 16,
            x_max: 40.0,
            ..ScanOptions::default()
        };
        let report = scan_energies(&pot, 0.5, 4.0, &opts).unwrap();
        assert!(report.flagged_intervals.is_empty());
        assert!(report
            .entries
            .iter()
            .all(|e| e.growth == Some(0.0) && e.bound == Some(0.0)));
        let tiny = ScanOptions { n_grid: 2, ..opts };
        assert_eq!(
            scan_energies(&pot, 1.0, 2.0, &tiny).unwrap().entries.len(),
            2
        );
    }

    #[test]
    fn divergence_near_single_pole() {
        let pot = build_potential(
            vec![Term::real(1.0, 1.0, Envelope::power_decay(1.0, 1.0))],
            2,
            0.5,
        )
        .unwrap();
        let grid = linear_grid(0.5, 1.5, 1001);
        let set = divergence_set(&pot, 1, &grid, 1e3).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set[0].0 <= 1.0 && set[0].1 >= 1.0);
        assert!(
            divergence_set(&Potential::zero(2, 0.5).unwrap(), 1, &grid, 1e3)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn box_counts() {
        let scales: Vec<f64> = (1..=6).map(|k| 3f64.powi(-k)).collect();
        let est = box_counting_dim(&PointSet::Intervals(cantor_intervals(6)), &scales).unwrap();
        assert_eq!(est.counts, vec![64, 32, 16, 8, 4, 2]);
        assert!((est.slope - 2f64.ln() / 3f64.ln()).abs() < 1e-9);
        let empty = box_counting_dim(&PointSet::Points(vec![]), &scales).unwrap();
        assert!(empty.degenerate && empty.slope == 0.0);
        assert!(box_counting_dim(&PointSet::Points(vec![0.5]), &[0.1, 0.05, 0.01]).is_err());
    }

    #[test]
    fn holder_examples() {
        let (v, bound) = holder_check(0.5, &[0.5], 16).unwrap();
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-8 && (bound - v).abs() < 1e-8);
        let (v, _) = holder_check(0.5, &[0.0], 16).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
        for psi in [0.0, 0.3, 0.9] {
            let (v, b) = holder_check(0.01, &[psi], 16).unwrap();
            assert!((v - holder_closed_form(0.01, psi)).abs() < 1e-6 && v <= b);
        }
        assert!(holder_check(1.0, &[0.5], 8).is_err());
    }
}
