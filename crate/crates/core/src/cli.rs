//! File-driven experiments: configuration loading and subcommand dispatch.
//!
//! One TOML file configures a run. Sections that a subcommand does not use
//! may be omitted; every numeric parameter has a default, listed on its field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::bounds::{bound_csv, total_bound};
use crate::discrete::{discrete_sum_bound_check, run_discrete, szego_compare, CoeffSequence};
use crate::divisor::{verify_catalan, verify_identities};
use crate::potential::{build_potential, Potential, PotentialError, Term, TermSpec};
use crate::prufer::{
    initial_data, integrate_prufer_at, integrate_schrodinger_at, prufer_from_solution,
};
use crate::scanner::{
    box_counting_dim, holder_check, linear_grid, scan_energies, PointSet, ScanOptions,
};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "PRUFER_THREADS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Output directory; `--out` takes precedence. Default `out`.
    pub out_dir: Option<PathBuf>,
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub discrete: DiscreteConfig,
    #[serde(default)]
    pub holder: HolderConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub p: u32,
    pub alpha: f64,
    /// Take the term list as given instead of closing it under conjugation.
    /// Only `bound` accepts formal potentials. Default `false`.
    #[serde(default)]
    pub formal: bool,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Default `[1.0, 2.5]`.
    pub etas: Vec<f64>,
    /// Default 200.
    pub x_max: f64,
    /// Default 1e−10.
    pub tol: f64,
    /// Default 0.
    pub theta0: f64,
    /// Number of equally spaced output points on `[0, x_max]`. Default 2001.
    pub samples: usize,
    /// Allowed `log R` gap between the two integration routes. Default 1e−6.
    pub route_tol: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            etas: vec![1.0, 2.5],
            x_max: 200.0,
            tol: 1e-10,
            theta0: 0.0,
            samples: 2001,
            route_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Default 0.1.
    pub eta_min: f64,
    /// Default 4.
    pub eta_max: f64,
    /// Default 2048.
    pub grid: usize,
    /// Default 200.
    pub x_max: f64,
    /// Default 1.
    pub growth_threshold: f64,
    /// Default 1e3.
    pub cap: f64,
    /// Default 1e−8.
    pub tol: f64,
    /// Box sizes `3^{−1}, …, 3^{−box_levels}` relative to the η range. Default 6.
    pub box_levels: u32,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let o = ScanOptions::default();
        ScanConfig {
            eta_min: 0.1,
            eta_max: 4.0,
            grid: o.n_grid,
            x_max: o.x_max,
            growth_threshold: o.growth_threshold,
            cap: o.cap,
            tol: o.tol,
            box_levels: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Default 5.
    pub j_max: usize,
    /// Default 100.
    pub trials: usize,
    /// Default 1.
    pub seed: u64,
    /// Default 12.
    pub catalan_max: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            j_max: 5,
            trials: 100,
            seed: 1,
            catalan_max: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Default `[0.5, 1.5, 2.5, 3.5]`.
    pub etas: Vec<f64>,
    /// Left endpoints. Default `[0]`.
    pub a: Vec<f64>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            etas: vec![0.5, 1.5, 2.5, 3.5],
            a: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyConfig {
    Opuc,
    Oprl,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteConfig {
    /// Default `opuc`.
    pub family: FamilyConfig,
    /// Default 1.
    pub eta: f64,
    /// Default 0.
    pub theta0: f64,
    /// Sequence length when coefficients come from the potential terms. Default 200.
    pub n: usize,
    /// Explicit Verblunsky coefficients (`opuc`); otherwise built from the potential terms.
    pub alpha_re: Option<Vec<f64>>,
    pub alpha_im: Option<Vec<f64>>,
    /// Jacobi parameters (`oprl`), with `len(b) = len(a) + 1`.
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    /// Allowed deviation from the Szegő recursion. Default 1e−9.
    pub oracle_tol: f64,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        DiscreteConfig {
            family: FamilyConfig::Opuc,
            eta: 1.0,
            theta0: 0.0,
            n: 200,
            alpha_re: None,
            alpha_im: None,
            a: None,
            b: None,
            oracle_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderConfig {
    /// Default `[0.25, 0.5, 0.75]`.
    pub alphas: Vec<f64>,
    /// Number of equally spaced ψ in `[0, 1]`. Default 101.
    pub grid: usize,
    /// Gauss–Legendre points per side. Default 32.
    pub n_quad: usize,
    /// Default 1e−6.
    pub tol: f64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            alphas: vec![0.25, 0.5, 0.75],
            grid: 101,
            n_quad: 32,
            tol: 1e-6,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl PotentialConfig {
    /// Builds the potential, naming the offending key on failure.
    pub fn build(&self) -> Result<Potential, ConfigError> {
        let terms: Vec<Term> = self.terms.iter().map(Term::from).collect();
        for (i, t) in terms.iter().enumerate() {
            t.envelope
                .validate()
                .map_err(|e| invalid(&format!("potential.terms[{i}].envelope"), e.to_string()))?;
        }
        let built = if self.formal {
            Potential::formal(terms, self.p, self.alpha)
        } else {
            build_potential(terms, self.p, self.alpha)
        };
        built.map_err(|e| match e {
            PotentialError::InvalidOrder(_) => invalid("potential.p", e.to_string()),
            PotentialError::AlphaOutOfRange { .. } => invalid("potential.alpha", e.to_string()),
            PotentialError::InvalidTerm { index, .. } => {
                invalid(&format!("potential.terms[{index}]"), e.to_string())
            }
            other => invalid("potential", other.to_string()),
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks for every section; a potential, if present, must build.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(p) = &self.potential {
            p.build()?;
        }
        let s = &self.simulate;
        for (i, &eta) in s.etas.iter().enumerate() {
            positive(&format!("simulate.etas[{i}]"), eta)?;
        }
        positive("simulate.x_max", s.x_max)?;
        positive("simulate.tol", s.tol)?;
        positive("simulate.route_tol", s.route_tol)?;
        if !(s.theta0.abs() < std::f64::consts::PI) {
            return Err(invalid("simulate.theta0", "must lie in (-pi, pi)"));
        }
        if s.samples < 2 {
            return Err(invalid("simulate.samples", "need at least 2 points"));
        }
        // Phase reconstruction needs the free phase to advance by less than π/2 per sample.
        let spacing = s.x_max / (s.samples - 1) as f64;
        if let Some(eta) = s
            .etas
            .iter()
            .find(|&&eta| eta * spacing >= std::f64::consts::PI)
        {
            return Err(invalid(
                "simulate.samples",
                format!("too coarse for eta = {eta}: need eta * x_max / (samples - 1) < pi"),
            ));
        }

        let sc = &self.scan;
        positive("scan.eta_min", sc.eta_min)?;
        if !(sc.eta_max > sc.eta_min && sc.eta_max.is_finite()) {
            return Err(invalid("scan.eta_max", "must exceed scan.eta_min"));
        }
        if sc.grid < 2 {
            return Err(invalid("scan.grid", "need at least 2 points"));
        }
        positive("scan.x_max", sc.x_max)?;
        positive("scan.growth_threshold", sc.growth_threshold)?;
        positive("scan.cap", sc.cap)?;
        positive("scan.tol", sc.tol)?;
        if !(3..=30).contains(&sc.box_levels) {
            return Err(invalid("scan.box_levels", "must lie in 3..=30"));
        }

        let v = &self.verify;
        if !(1..=8).contains(&v.j_max) {
            return Err(invalid("verify.j_max", "must lie in 1..=8"));
        }
        if v.trials == 0 {
            return Err(invalid("verify.trials", "must be at least 1"));
        }
        if v.catalan_max > 200 {
            return Err(invalid("verify.catalan_max", "must be at most 200"));
        }

        for (i, &eta) in self.bound.etas.iter().enumerate() {
            positive(&format!("bound.etas[{i}]"), eta)?;
        }
        for (i, &a) in self.bound.a.iter().enumerate() {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid(
                    &format!("bound.a[{i}]"),
                    format!("must be finite and >= 0, got {a}"),
                ));
            }
        }

        let d = &self.discrete;
        if !d.eta.is_finite() {
            return Err(invalid("discrete.eta", "must be finite"));
        }
        if !d.theta0.is_finite() {
            return Err(invalid("discrete.theta0", "must be finite"));
        }
        positive("discrete.oracle_tol", d.oracle_tol)?;
        match d.family {
            FamilyConfig::Opuc => {
                if d.a.is_some() || d.b.is_some() {
                    return Err(invalid(
                        "discrete.a",
                        "Jacobi parameters require family = \"oprl\"",
                    ));
                }
                match (&d.alpha_re, &d.alpha_im) {
                    (Some(re), Some(im)) if re.len() != im.len() => {
                        return Err(invalid(
                            "discrete.alpha_im",
                            "must have the same length as discrete.alpha_re",
                        ));
                    }
                    (Some(re), im) => {
                        let im_at = |i: usize| im.as_ref().map_or(0.0, |v| v[i]);
                        if let Some(i) =
                            (0..re.len()).find(|&i| !(Complex64::new(re[i], im_at(i)).norm() < 1.0))
                        {
                            return Err(invalid(
                                &format!("discrete.alpha_re[{i}]"),
                                "|alpha_n| must be < 1",
                            ));
                        }
                    }
                    (None, Some(_)) => {
                        return Err(invalid(
                            "discrete.alpha_im",
                            "given without discrete.alpha_re",
                        ))
                    }
                    (None, None) => {
                        if d.n == 0 {
                            return Err(invalid("discrete.n", "must be at least 1"));
                        }
                    }
                }
            }
            FamilyConfig::Oprl => {
                if d.alpha_re.is_some() || d.alpha_im.is_some() {
                    return Err(invalid(
                        "discrete.alpha_re",
                        "Verblunsky coefficients require family = \"opuc\"",
                    ));
                }
                let (Some(a), Some(b)) = (&d.a, &d.b) else {
                    return Err(invalid(
                        "discrete.a",
                        "family = \"oprl\" needs both discrete.a and discrete.b",
                    ));
                };
                if b.len() != a.len() + 1 {
                    return Err(invalid("discrete.b", "need len(b) = len(a) + 1"));
                }
                if let Some(i) = a.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(invalid(
                        &format!("discrete.a[{i}]"),
                        "must be positive and finite",
                    ));
                }
            }
        }

        let h = &self.holder;
        for (i, &alpha) in h.alphas.iter().enumerate() {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(invalid(
                    &format!("holder.alphas[{i}]"),
                    format!("must lie in (0, 1), got {alpha}"),
                ));
            }
        }
        if h.grid < 2 {
            return Err(invalid("holder.grid", "need at least 2 points"));
        }
        if h.n_quad == 0 {
            return Err(invalid("holder.n_quad", "must be at least 1"));
        }
        positive("holder.tol", h.tol)?;
        Ok(())
    }

    fn potential(&self) -> Result<Potential, CommandError> {
        let spec = self.potential.as_ref().ok_or_else(|| {
            CommandError::Usage("this command needs a [potential] section".into())
        })?;
        Ok(spec.build()?)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Config::parse(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Simulate,
    Scan,
    Bound,
    Discrete,
    Holder,
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Run(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// What a successful run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Failed contract checks; a nonempty list means exit code 1.
    pub violations: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            0
        } else {
            1
        }
    }
}

struct Writer {
    dir: PathBuf,
    outcome: Outcome,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CommandError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CommandError::Io {
            path: path.clone(),
            source,
        })?;
        self.outcome.files.push(path);
        Ok(())
    }
}

/// Runs one subcommand, writing its outputs under `out` (or the configured
/// directory). Files are written after all computation finishes.
pub fn run_command(
    cmd: Command,
    cfg: &Config,
    out: Option<&Path>,
) -> Result<Outcome, CommandError> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|source| CommandError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut w = Writer {
        dir,
        outcome: Outcome::default(),
    };
    match cmd {
        Command::Verify => run_verify(cfg, &mut w)?,
        Command::Simulate => run_simulate(cfg, &mut w)?,
        Command::Scan => run_scan(cfg, &mut w)?,
        Command::Bound => run_bound(cfg, &mut w)?,
        Command::Discrete => run_discrete_cmd(cfg, &mut w)?,
        Command::Holder => run_holder(cfg, &mut w)?,
    }
    Ok(w.outcome)
}

fn run_verify(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let v = &cfg.verify;
    let mut reports = verify_identities(v.j_max, v.trials, v.seed);
    reports.push(verify_catalan(v.catalan_max));
    let mut text = String::new();
    for r in &reports {
        let _ = writeln!(text, "{r}");
        if !r.passed() {
            w.outcome.violations.push(r.to_string());
        }
    }
    w.write("verify.txt", &text)
}

struct RouteResult {
    csv: String,
    summary: String,
    violation: Option<String>,
}

fn simulate_one(pot: &Potential, s: &SimulateConfig, eta: f64) -> Result<RouteResult, String> {
    let xs = linear_grid(0.0, s.x_max, s.samples);
    let direct = integrate_prufer_at(pot, eta, s.theta0, s.tol, &xs)
        .map_err(|e| format!("eta={eta}: {e}"))?;
    let (u0, du0) = initial_data(eta, s.theta0);
    let sol = integrate_schrodinger_at(pot, eta * eta / 4.0, u0, du0, s.tol, &xs)
        .map_err(|e| format!("eta={eta}: {e}"))?;
    let rebuilt = prufer_from_solution(&sol, eta).map_err(|e| format!("eta={eta}: {e}"))?;
    let mut csv = format!(
        "# eta={eta} theta0={} tol={}\nx,log_r,theta,log_r_oracle,theta_oracle\n",
        s.theta0, s.tol
    );
    let mut dev_r = 0.0f64;
    let mut dev_theta = 0.0f64;
    for (p, q) in direct.samples.iter().zip(&rebuilt.samples) {
        dev_r = dev_r.max((p.log_r - q.log_r).abs());
        dev_theta = dev_theta.max((p.theta - q.theta).abs());
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.x, p.log_r, p.theta, q.log_r, q.theta
        );
    }
    let d = &direct.diagnostics;
    let summary = format!(
        "{eta},{},{dev_r},{dev_theta},{},{},{},{}\n",
        s.theta0,
        direct.final_log_r(),
        d.accepted,
        d.rejected,
        d.max_imag_residue
    );
    let violation = (dev_r > s.route_tol)
        .then(|| format!("route gap {dev_r} exceeds {} at eta = {eta}", s.route_tol));
    Ok(RouteResult {
        csv,
        summary,
        violation,
    })
}

fn run_simulate(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let pot = cfg.potential()?;
    let s = &cfg.simulate;
    let results: Vec<Result<RouteResult, String>> = s
        .etas
        .par_iter()
        .map(|&eta| simulate_one(&pot, s, eta))
        .collect();
    let mut summary = String::from(
        "eta,theta0,max_log_r_gap,max_theta_gap,final_log_r,accepted,rejected,max_imag_residue\n",
    );
    let mut files = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r.map_err(CommandError::Run)?;
        summary.push_str(&r.summary);
        w.outcome.violations.extend(r.violation);
        files.push((format!("simulate_{i}.csv"), r.csv));
    }
    for (name, csv) in files {
        w.write(&name, &csv)?;
    }
    w.write("simulate_summary.csv", &summary)
}

fn run_scan(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let pot = cfg.potential()?;
    let sc = &cfg.scan;
    let opts = ScanOptions {
        n_grid: sc.grid,
        x_max: sc.x_max,
        growth_threshold: sc.growth_threshold,
        cap: sc.cap,
        tol: sc.tol,
    };
    let report = scan_energies(&pot, sc.eta_min, sc.eta_max, &opts)
        .map_err(|e| CommandError::Run(e.to_string()))?;
    let width = sc.eta_max - sc.eta_min;
    let normalized: Vec<f64> = report
        .flagged_etas()
        .iter()
        .map(|eta| (eta - sc.eta_min) / width)
        .collect();
    let scales: Vec<f64> = (1..=sc.box_levels as i32).map(|k| 3f64.powi(-k)).collect();
    let dim = box_counting_dim(&PointSet::Points(normalized), &scales)
        .map_err(|e| CommandError::Run(e.to_string()))?;
    w.write("scan.csv", &report.to_csv())?;
    w.write("scan_dimension.csv", &dim.to_csv())
}

fn run_bound(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let pot = cfg.potential()?;
    let b = &cfg.bound;
    let points: Vec<(f64, f64)> = b
        .etas
        .iter()
        .flat_map(|&eta| b.a.iter().map(move |&a| (eta, a)))
        .collect();
    let rows: Vec<_> = points
        .par_iter()
        .map(|&(eta, a)| (eta, a, total_bound(&pot, eta, a)))
        .collect();
    let mut poles = String::from("eta,a,reason\n");
    for (eta, a, r) in &rows {
        if let Err(e) = r {
            let _ = writeln!(poles, "{eta},{a},\"{}\"", e.reason.replace('"', "'"));
        }
    }
    w.write("bound.csv", &bound_csv(&rows))?;
    w.write("bound_infinite.csv", &poles)
}

fn discrete_sequence(cfg: &Config) -> Result<CoeffSequence, CommandError> {
    let d = &cfg.discrete;
    let run = |e: crate::discrete::DiscreteError| CommandError::Run(e.to_string());
    match d.family {
        FamilyConfig::Oprl => {
            let (a, b) = (
                d.a.clone().unwrap_or_default(),
                d.b.clone().unwrap_or_default(),
            );
            CoeffSequence::oprl(a, b, d.eta).map_err(run)
        }
        FamilyConfig::Opuc => match &d.alpha_re {
            Some(re) => {
                let values = re
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| Complex64::new(x, d.alpha_im.as_ref().map_or(0.0, |im| im[i])))
                    .collect();
                CoeffSequence::opuc(values).map_err(run)
            }
            None => {
                let terms = cfg.potential()?.terms().to_vec();
                CoeffSequence::opuc_from_terms(terms, d.n).map_err(run)
            }
        },
    }
}

fn run_discrete_cmd(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let d = &cfg.discrete;
    let seq = discrete_sequence(cfg)?;
    let run = |e: crate::discrete::DiscreteError| CommandError::Run(e.to_string());
    let traj = run_discrete(&seq, d.eta, d.theta0).map_err(run)?;
    let mut checks = String::from("check,lhs,rhs,passed\n");
    if d.family == FamilyConfig::Opuc {
        let cmp = szego_compare(&seq, d.eta, seq.len()).map_err(run)?;
        let ok = cmp.max_deviation <= d.oracle_tol;
        let _ = writeln!(
            checks,
            "szego_log_r,{},{},{}",
            cmp.max_deviation, d.oracle_tol, ok as u8
        );
        let _ = writeln!(
            checks,
            "szego_phase,{},{},{}",
            cmp.phase_deviation,
            d.oracle_tol,
            (cmp.phase_deviation <= d.oracle_tol) as u8
        );
        if !ok {
            w.outcome.violations.push(format!(
                "Szegő deviation {} exceeds {}",
                cmp.max_deviation, d.oracle_tol
            ));
        }
        if let Some(terms) = &seq.terms {
            for i in 0..terms.len() {
                let (lhs, rhs) =
                    discrete_sum_bound_check(&seq, &[i], &[], 1, d.eta, 0, seq.len() - 1)
                        .map_err(run)?;
                let ok = lhs <= rhs + 1e-10;
                let _ = writeln!(checks, "sum_bound_term_{i},{lhs},{rhs},{}", ok as u8);
                if !ok {
                    w.outcome.violations.push(format!(
                        "discrete sum bound fails for term {i}: {lhs} > {rhs}"
                    ));
                }
            }
        }
    }
    let mut text = traj.to_csv();
    let _ = writeln!(
        text,
        "# max unimodularity error {}; max radicand residue {}",
        traj.max_unimodularity_error, traj.max_radicand_residue
    );
    w.write("discrete.csv", &text)?;
    w.write("discrete_checks.csv", &checks)
}

fn run_holder(cfg: &Config, w: &mut Writer) -> Result<(), CommandError> {
    let h = &cfg.holder;
    let grid = linear_grid(0.0, 1.0, h.grid);
    let mut csv = String::from("alpha,max_integral,bound,value_at_half,passed\n");
    for &alpha in &h.alphas {
        let run = |e: crate::scanner::ScanError| CommandError::Run(e.to_string());
        let (max, bound) = holder_check(alpha, &grid, h.n_quad).map_err(run)?;
        let (half, _) = holder_check(alpha, &[0.5], h.n_quad).map_err(run)?;
        let ok = max <= bound + h.tol && (half - bound).abs() <= h.tol;
        let _ = writeln!(csv, "{alpha},{max},{bound},{half},{}", ok as u8);
        if !ok {
            w.outcome.violations.push(format!(
                "Hölder check fails at alpha = {alpha}: max {max}, bound {bound}"
            ));
        }
    }
    w.write("holder.csv", &csv)
}

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer, got 0"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[potential]
p = 2
alpha = 0.5
[[potential.terms]]
c_re = 1.0
phi = 1.0
envelope = { kind = "power_decay", x0 = 1.0, beta = 1.0 }
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = Config::parse(MINIMAL).unwrap();
        assert_eq!(cfg.scan.grid, 2048);
        assert_eq!(cfg.simulate.tol, 1e-10);
        assert_eq!(cfg.verify, VerifyConfig::default());
    }

    #[test]
    fn alpha_out_of_range_names_alpha() {
        let err = Config::parse(&MINIMAL.replace("alpha = 0.5", "alpha = 1.0")).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Invalid { key, .. } if key == "potential.alpha"),
            "{err}"
        );
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = Config::parse(&format!("foo = 1\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = Config::parse(&MINIMAL.replace("p = 2", "p = 2\nfoo = 3")).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Config::parse("[scan]\ngrid = \"many\"\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("grid") && text.contains("line 2"), "{text}");
    }

    #[test]
    fn oprl_needs_jacobi_parameters() {
        let err = Config::parse("[discrete]\nfamily = \"oprl\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key, .. } if key == "discrete.a"));
    }

    #[test]
    fn commands_without_potential_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = Config::parse("").unwrap();
        assert!(matches!(
            run_command(Command::Scan, &cfg, Some(dir.path())),
            Err(CommandError::Usage(_))
        ));
    }
}
