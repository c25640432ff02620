//! Experiment-runner plumbing: config files, CSV/SVG emission, and the
//! built-in validation suite behind the `check` subcommand.
//!
//! Config files are JSON; every field has a default and command-line flags
//! override file values. Infinite values (an absent manual option) are
//! written as the string `"inf"`. All output files are written atomically
//! (temp file + rename) and all numbers with 17 significant digits, so a
//! rerun of the same config is byte-identical.

use crate::model::ModelParams;
use crate::population::{self, PopulationStats, QuadratureSpec, SweepAxis};
use crate::quantizer::{lloyd_max, PopulationPreset};
use crate::solver::{self, SolverSettings};
use crate::three_point::{self, ThreePointPolicy, ThreePointPrior};
use crate::training::{self, LoopConfig, LoopVariant};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failures} validation check(s) failed")]
    CheckFailed { failures: usize },
}

impl CliError {
    /// Process exit code: 1 for config/usage errors, 2 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed { .. } => 2,
            _ => 1,
        }
    }
}

fn cfg_err<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Config(msg.to_string())
}

/// (De)serialize an f64 that may be infinite, written as "inf"/"-inf".
mod inf_f64 {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mu_pop: f64,
    pub sigma_pop: f64,
    pub mu_ai: f64,
    pub sigma_ai: f64,
    pub cost_interact: f64,
    #[serde(with = "inf_f64")]
    pub cost_manual: f64,
    pub temperature: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            mu_pop: 0.0,
            sigma_pop: 1.0,
            mu_ai: 0.0,
            sigma_ai: 1.0,
            cost_interact: 1.0,
            cost_manual: f64::INFINITY,
            temperature: 0.0,
        }
    }
}

impl ModelSection {
    pub fn to_params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(
            self.mu_pop,
            self.sigma_pop,
            self.mu_ai,
            self.sigma_ai,
            self.cost_interact,
            self.cost_manual,
            self.temperature,
        )
        .map_err(|e| cfg_err(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub population: PopulationPreset,
    pub m: usize,
    pub m_q: usize,
    /// Explicit candidate list; `null` selects the built-in default.
    pub sigma_candidates: Option<Vec<f64>>,
    pub gamma: f64,
    #[serde(with = "inf_f64")]
    pub cap_gamma: f64,
    pub iterations: usize,
    pub variant: LoopVariant,
    pub snapshot_priors: bool,
}

impl Default for LoopSection {
    fn default() -> Self {
        Self {
            population: PopulationPreset::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
            m: 201,
            m_q: 801,
            sigma_candidates: None,
            gamma: 1.0,
            cap_gamma: f64::INFINITY,
            iterations: 30,
            variant: LoopVariant::ExAnte,
            snapshot_priors: false,
        }
    }
}

impl LoopSection {
    pub fn to_loop_config(&self) -> Result<LoopConfig, CliError> {
        let cfg = LoopConfig {
            population: self.population,
            m: self.m,
            m_q: self.m_q,
            sigma_candidates: self
                .sigma_candidates
                .clone()
                .unwrap_or_else(training::default_sigma_candidates),
            gamma: self.gamma,
            cap_gamma: self.cap_gamma,
            iterations: self.iterations,
            variant: self.variant,
            snapshot_priors: self.snapshot_priors,
        };
        cfg.validate().map_err(|e| cfg_err(format!("loop: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreePointSection {
    pub theta_bar: f64,
    pub p0: f64,
    pub gamma: f64,
    /// "adaptive" or a fixed noise level.
    pub frozen_sigma: Option<f64>,
    pub iterations: usize,
}

impl Default for ThreePointSection {
    fn default() -> Self {
        Self {
            theta_bar: 2.0,
            p0: 0.5,
            gamma: 1e-3,
            frozen_sigma: None,
            iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(rename = "loop")]
    pub loop_section: LoopSection,
    pub sweep: SweepSection,
    pub three_point: ThreePointSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            cfg_err(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    /// The fully resolved config as a single JSON line (for CSV comments).
    pub fn resolved_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// 17 significant digits; round-trip exact for f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

/// Minimal SVG 1.1 line chart: one polyline, linear axes, axis labels.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    assert_eq!(xs.len(), ys.len());
    let (w, h, ml, mb, mt, mr) = (640.0, 420.0, 70.0, 50.0, 30.0, 20.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let finite = |v: &&f64| v.is_finite();
    let x_min = xs.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_min = ys.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_span = (x_max - x_min).max(1e-300);
    let y_span = (y_max - y_min).max(1e-300);
    let mut pts = String::new();
    for (x, y) in xs.iter().zip(ys) {
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let px = ml + (x - x_min) / x_span * pw;
        let py = mt + ph - (y - y_min) / y_span * ph;
        let _ = write!(pts, "{px:.2},{py:.2} ");
    }
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" ",
            "width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
            "<line x1=\"{ml}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<text x=\"{tx}\" y=\"{h2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{xl}</text>\n",
            "<text x=\"15\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 {ty})\">{yl}</text>\n",
            "<text x=\"{ml}\" y=\"{h3}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{x0}</text>\n",
            "<text x=\"{xr}\" y=\"{h3}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{x1}</text>\n",
            "<text x=\"{ml5}\" y=\"{yb}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{y0}</text>\n",
            "<text x=\"{ml5}\" y=\"{mt2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{y1}</text>\n",
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        tx = ml + pw / 2.0,
        title = title,
        ml = ml,
        yb = mt + ph,
        xr = ml + pw,
        mt = mt,
        h2 = h - 12.0,
        xl = x_label,
        ty = mt + ph / 2.0,
        yl = y_label,
        h3 = mt + ph + 16.0,
        x0 = format!("{x_min:.4}"),
        x1 = format!("{x_max:.4}"),
        ml5 = ml - 5.0,
        mt2 = mt + 4.0,
        y0 = format!("{y_min:.4}"),
        y1 = format!("{y_max:.4}"),
        pts = pts,
    )
}

fn stats_columns() -> &'static str {
    "mean_output,variance_output,societal_bias,population_loss,fraction_default,fraction_interactive,fraction_manual"
}

fn stats_row(s: &PopulationStats) -> String {
    [
        s.mean_output,
        s.variance_output,
        s.societal_bias,
        s.population_loss,
        s.fraction_default,
        s.fraction_interactive,
        s.fraction_manual,
    ]
    .iter()
    .map(|&v| fmt_f64(v))
    .collect::<Vec<_>>()
    .join(",")
}

/// `solve-user`: per-type decision sweep over an evenly spaced theta range.
pub fn run_solve_user(
    config: &ExperimentConfig,
    theta_min: f64,
    theta_max: f64,
    steps: usize,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    if !(theta_max >= theta_min) || steps < 2 {
        return Err(cfg_err("need theta_max >= theta_min and steps >= 2"));
    }
    let params = config.model.to_params()?;
    let settings = SolverSettings::default();
    let tau_d = if params.is_unbiased() {
        solver::threshold_tau_d(&params, &settings)
    } else {
        f64::NAN
    };
    let tau_a = solver::threshold_tau_a(&params, &settings);
    let mut out = String::new();
    let _ = writeln!(out, "# config: {}", config.resolved_json());
    let _ = writeln!(out, "# tau_d: {}", fmt_f64(tau_d));
    let _ = writeln!(out, "# tau_a: {}", fmt_f64(tau_a));
    let _ = writeln!(
        out,
        "theta,uniqueness,regime,w_star,sigma_star,fidelity_error,comm_cost,utility_loss,expected_output"
    );
    let h = (theta_max - theta_min) / (steps - 1) as f64;
    for i in 0..steps {
        let theta = theta_min + i as f64 * h;
        let o = solver::solve_user(theta, &params, &settings);
        let (w, sigma_u) = match o.signal {
            Some(c) => (c.weight, c.sigma_u(params.sigma_ai)),
            None => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(theta),
            fmt_f64((theta - params.mu_ai).abs()),
            o.regime.as_str(),
            fmt_f64(w),
            fmt_f64(sigma_u),
            fmt_f64(o.fidelity_error),
            fmt_f64(o.comm_cost),
            fmt_f64(o.utility_loss),
            fmt_f64(o.expected_output),
        );
    }
    let path = out_dir.join("solve_user.csv");
    write_atomic(&path, &out)?;
    Ok(path)
}

/// `sweep`: population statistics along one parameter axis.
pub fn run_sweep(
    config: &ExperimentConfig,
    svg: bool,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let axis = config
        .sweep
        .axis
        .ok_or_else(|| cfg_err("sweep.axis missing"))?;
    if config.sweep.values.is_empty() {
        return Err(cfg_err("sweep.values is empty"));
    }
    let params = config.model.to_params()?;
    let quad = QuadratureSpec::default();
    let settings = SolverSettings::default();
    let rows = population::sweep(&params, axis, &config.sweep.values, &quad, &settings)
        .map_err(cfg_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "# config: {}", config.resolved_json());
    let _ = writeln!(out, "{},{}", axis.as_str(), stats_columns());
    for (v, s) in &rows {
        let _ = writeln!(out, "{},{}", fmt_f64(*v), stats_row(s));
    }
    let csv_path = out_dir.join(format!("sweep_{}.csv", axis.as_str()));
    write_atomic(&csv_path, &out)?;
    let mut written = vec![csv_path];
    if svg {
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1.variance_output).collect();
        let svg_path = out_dir.join(format!("sweep_{}.svg", axis.as_str()));
        write_atomic(
            &svg_path,
            &line_chart_svg(
                "output variance",
                axis.as_str(),
                "variance_output",
                &xs,
                &ys,
            ),
        )?;
        written.push(svg_path);
    }
    Ok(written)
}

/// `loop`: one self-training run; optional prior snapshots and SVG.
pub fn run_loop_cmd(
    config: &ExperimentConfig,
    svg: bool,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let loop_cfg = config.loop_section.to_loop_config()?;
    let snapshots = loop_cfg.snapshot_priors;
    let traj = training::run_loop(loop_cfg).map_err(cfg_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "# config: {}", config.resolved_json());
    let _ = writeln!(out, "t,variance,mean,mass_at_default,fraction_manual");
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            fmt_f64(r.variance),
            fmt_f64(r.mean),
            fmt_f64(r.mass_at_default),
            fmt_f64(r.fraction_manual),
        );
    }
    let csv_path = out_dir.join("loop.csv");
    write_atomic(&csv_path, &out)?;
    let mut written = vec![csv_path];
    if snapshots {
        if let Some(priors) = &traj.priors {
            let mut pout = String::new();
            let _ = writeln!(pout, "# config: {}", config.resolved_json());
            let _ = writeln!(pout, "t,support,mass");
            for (t, prior) in priors.iter().enumerate() {
                for (x, m) in prior.support.iter().zip(&prior.mass) {
                    let _ = writeln!(pout, "{t},{},{}", fmt_f64(*x), fmt_f64(*m));
                }
            }
            let ppath = out_dir.join("loop_priors.csv");
            write_atomic(&ppath, &pout)?;
            written.push(ppath);
        }
    }
    if svg {
        let xs: Vec<f64> = traj.records.iter().map(|r| r.t as f64).collect();
        let ys: Vec<f64> = traj.records.iter().map(|r| r.variance).collect();
        let spath = out_dir.join("loop.svg");
        write_atomic(
            &spath,
            &line_chart_svg("output variance over iterations", "t", "variance", &xs, &ys),
        )?;
        written.push(spath);
    }
    Ok(written)
}

/// `three-point`: the scalar mass-at-zero recursion.
pub fn run_three_point_cmd(
    config: &ExperimentConfig,
    svg: bool,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let tp = &config.three_point;
    if !(tp.theta_bar > 0.0) {
        return Err(cfg_err("three_point.theta_bar must be > 0"));
    }
    if !(0.0..=1.0).contains(&tp.p0) {
        return Err(cfg_err("three_point.p0 must lie in [0,1]"));
    }
    if let Some(s) = tp.frozen_sigma {
        if !(s > 0.0) {
            return Err(cfg_err("three_point.frozen_sigma must be > 0"));
        }
    }
    if !(tp.gamma >= 0.0) {
        return Err(cfg_err("three_point.gamma must be >= 0"));
    }
    let policy = match tp.frozen_sigma {
        Some(s) => ThreePointPolicy::FrozenSigma(s),
        None => ThreePointPolicy::Adaptive,
    };
    let traj =
        three_point::run_three_point_loop(tp.theta_bar, tp.p0, tp.gamma, policy, tp.iterations);
    let mut out = String::new();
    let _ = writeln!(out, "# config: {}", config.resolved_json());
    let _ = writeln!(out, "t,p,variance");
    for (t, &p) in traj.iter().enumerate() {
        let v = tp.theta_bar * tp.theta_bar * (1.0 - p);
        let _ = writeln!(out, "{t},{},{}", fmt_f64(p), fmt_f64(v));
    }
    let csv_path = out_dir.join("three_point.csv");
    write_atomic(&csv_path, &out)?;
    let mut written = vec![csv_path];
    if svg {
        let xs: Vec<f64> = (0..traj.len()).map(|t| t as f64).collect();
        let spath = out_dir.join("three_point.svg");
        write_atomic(
            &spath,
            &line_chart_svg("mass at the default output", "t", "p", &xs, &traj),
        )?;
        written.push(spath);
    }
    Ok(written)
}

/// One entry of the `check` suite.
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Fast built-in invariant suite (a few seconds); returns one result per
/// check. Exit code 2 when any fails.
pub fn run_checks() -> Vec<CheckResult> {
    let mut results = Vec::new();
    let mut check = |name: &'static str, passed: bool, detail: String| {
        results.push(CheckResult {
            name,
            passed,
            detail,
        });
    };
    let settings = SolverSettings::default();

    // solver: closed form against the grid oracle
    {
        let p = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let mut worst = 0.0_f64;
        for i in 0..=40 {
            let theta = 0.1 * i as f64;
            let w = solver::optimal_weight(theta, &p, &settings);
            let (wg, _) = solver::brute_force_optimum(theta, &p, &settings);
            worst = worst.max((w - wg).abs());
        }
        check(
            "solver_closed_form_vs_grid",
            worst <= 1e-3,
            format!("max |w - w_grid| = {worst:.2e}"),
        );
    }
    // solver: exact anchor w* = 1/2
    {
        let p = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let w = solver::optimal_weight(1.0, &p, &settings);
        check(
            "solver_anchor_half",
            (w - 0.5).abs() <= 1e-12,
            format!("w* = {w}"),
        );
    }
    // model: information cost strictly decreasing in w
    {
        let p = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let mut ok = true;
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let c = p.comm_cost(i as f64 / 100.0);
            ok &= c < last;
            last = c;
        }
        check("comm_cost_decreasing", ok, String::new());
    }
    // model: bias-variance decomposition
    {
        let p = ModelParams::new(0.0, 1.0, 0.4, 0.9, 1.0, 2.0, 0.2).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..30 {
            let theta = -3.0 + 0.2 * i as f64;
            for j in 0..=10 {
                let w = j as f64 / 10.0;
                let (m, v) = p.expected_output_and_variance(theta, w);
                worst = worst.max((p.fidelity_error(theta, w) - v - (m - theta) * (m - theta)).abs());
            }
        }
        check(
            "bias_variance_decomposition",
            worst <= 1e-12,
            format!("max residual = {worst:.2e}"),
        );
    }
    // population: unbiased mean equals the population mean
    {
        let p = ModelParams::unbiased(0.3, 1.0, 1.0, f64::INFINITY);
        let s = population::population_stats(&p, &QuadratureSpec::default(), &settings);
        check(
            "population_unbiased_mean",
            (s.mean_output - 0.3).abs() <= 1e-9,
            format!("mean = {}", s.mean_output),
        );
    }
    // quantizer: 2-level anchor
    {
        let r = lloyd_max(
            &PopulationPreset::Normal { mu: 0.0, sigma: 1.0 },
            2,
            1e-10,
            500,
        );
        let want = (2.0 / std::f64::consts::PI).sqrt();
        let got = r.distribution.support[1];
        check(
            "quantizer_two_level_anchor",
            (got - want).abs() <= 1e-3,
            format!("level = {got}"),
        );
    }
    // three-point: inverse round trip and monotone frozen trajectory
    {
        let prior = ThreePointPrior::new(2.0, 0.4);
        let s = three_point::inverse_signal(0.7, 0.9, &prior);
        let back = three_point::posterior_mean_output(s, 0.9, &prior);
        check(
            "three_point_inverse_round_trip",
            (back - 0.7).abs() <= 1e-9,
            format!("round trip error = {:.2e}", (back - 0.7).abs()),
        );
        let traj = three_point::run_three_point_loop(
            2.0,
            0.5,
            0.0,
            ThreePointPolicy::FrozenSigma(1.0),
            50,
        );
        let monotone = traj.windows(2).all(|w| w[1] >= w[0] - 1e-15);
        check("three_point_frozen_monotone", monotone, String::new());
    }
    results
}
