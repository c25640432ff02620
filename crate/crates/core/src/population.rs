//! Population-level aggregates by quadrature over the preference
//! distribution: output mean/variance, societal bias, expected loss, and
//! regime shares, plus one-axis parameter sweeps.

use crate::model::{ModelParams, Regime};
use crate::solver::{solve_user, SolverSettings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Composite-Simpson quadrature rule over `mu_pop ± half_width_sigmas·sigma_pop`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub half_width_sigmas: f64,
    /// Number of panels; must be even.
    pub panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            half_width_sigmas: 8.0,
            panels: 4096,
        }
    }
}

/// Aggregates of the output distribution across the population.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PopulationStats {
    /// E[output].
    pub mean_output: f64,
    /// Var(output), including per-user conditional output variance.
    pub variance_output: f64,
    /// |E[output] - mu_pop|.
    pub societal_bias: f64,
    /// Expected utility loss across the population.
    pub population_loss: f64,
    pub fraction_default: f64,
    pub fraction_interactive: f64,
    pub fraction_manual: f64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("axis value must be positive, got {0}")]
    NonPositive(f64),
    #[error("axis value must be finite, got {0}")]
    NotFinite(f64),
    #[error("empty value list")]
    Empty,
}

/// Parameter axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    SigmaAiSq,
    CapGamma,
    Temperature,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::SigmaAiSq => "sigma_ai_sq",
            SweepAxis::CapGamma => "cap_gamma",
            SweepAxis::Temperature => "temperature",
        }
    }

    pub fn apply(&self, params: &ModelParams, value: f64) -> Result<ModelParams, SweepError> {
        let mut p = *params;
        match self {
            SweepAxis::Gamma => {
                if !value.is_finite() {
                    return Err(SweepError::NotFinite(value));
                }
                if value < 0.0 {
                    return Err(SweepError::NonPositive(value));
                }
                p.cost_interact = value;
            }
            SweepAxis::SigmaAiSq => {
                if !value.is_finite() {
                    return Err(SweepError::NotFinite(value));
                }
                if value <= 0.0 {
                    return Err(SweepError::NonPositive(value));
                }
                p.sigma_ai = value.sqrt();
            }
            SweepAxis::CapGamma => {
                if value <= 0.0 {
                    return Err(SweepError::NonPositive(value));
                }
                p.cost_manual = value;
            }
            SweepAxis::Temperature => {
                if !value.is_finite() {
                    return Err(SweepError::NotFinite(value));
                }
                if value < 0.0 {
                    return Err(SweepError::NonPositive(value));
                }
                p.temperature = value;
            }
        }
        Ok(p)
    }
}

/// Boundaries in `(a, b)` where the per-type solution jumps: regime
/// switches and, with a biased prior, hops of the global optimum between
/// local minima (detected as jumps of the expected output). Located by a
/// coarse scan plus bisection; returned sorted with `a` and `b` included.
fn solution_breakpoints(
    a: f64,
    b: f64,
    params: &ModelParams,
    settings: &SolverSettings,
) -> Vec<f64> {
    const COARSE: usize = 512;
    let step = (b - a) / COARSE as f64;
    let jump_tol = 2.0 * step;
    let x_tol = 1e-12 * (b - a);
    let differs = |l: &crate::model::UserOutcome, r: &crate::model::UserOutcome| {
        l.regime != r.regime || (l.expected_output - r.expected_output).abs() > jump_tol
    };

    // Subdivide every differing interval until each feature is localized;
    // one coarse interval may hold several (e.g. a steep stretch right next
    // to a regime boundary). Returns whether a cut landed in [l, r].
    fn refine(
        l: f64,
        lo: &crate::model::UserOutcome,
        r: f64,
        ro: &crate::model::UserOutcome,
        x_tol: f64,
        differs: &dyn Fn(&crate::model::UserOutcome, &crate::model::UserOutcome) -> bool,
        solve: &dyn Fn(f64) -> crate::model::UserOutcome,
        cuts: &mut Vec<f64>,
    ) -> bool {
        if !differs(lo, ro) {
            return false;
        }
        let mid = 0.5 * (l + r);
        if r - l <= x_tol {
            cuts.push(mid);
            return true;
        }
        let mo = solve(mid);
        let left = refine(l, lo, mid, &mo, x_tol, differs, solve, cuts);
        let right = refine(mid, &mo, r, ro, x_tol, differs, solve, cuts);
        if !left && !right {
            // steep but smooth on both halves: the change is spread around
            // the midpoint, which still makes a safe piece boundary
            cuts.push(mid);
        }
        true
    }

    let solve = |theta: f64| solve_user(theta, params, settings);
    let mut cuts = Vec::new();
    let mut prev_theta = a;
    let mut prev = solve(a);
    for i in 1..=COARSE {
        let theta = a + i as f64 * step;
        let here = solve(theta);
        refine(
            prev_theta, &prev, theta, &here, x_tol, &differs, &solve, &mut cuts,
        );
        prev_theta = theta;
        prev = here;
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut breaks = vec![a];
    for c in cuts {
        if c - breaks.last().unwrap() > x_tol && b - c > x_tol {
            breaks.push(c);
        }
    }
    breaks.push(b);
    breaks
}

/// Population aggregates by two passes of composite Simpson quadrature
/// against the preference density. The domain is split at the solution's
/// discontinuities so each piece is smooth; per-node solves are shared by
/// both passes; manual users contribute their own preference with zero
/// variance.
pub fn population_stats(
    params: &ModelParams,
    quad: &QuadratureSpec,
    settings: &SolverSettings,
) -> PopulationStats {
    assert!(quad.panels >= 2 && quad.panels % 2 == 0, "panels must be even");
    let a = params.mu_pop - quad.half_width_sigmas * params.sigma_pop;
    let b = params.mu_pop + quad.half_width_sigmas * params.sigma_pop;
    let norm = 1.0 / (params.sigma_pop * (2.0 * std::f64::consts::PI).sqrt());
    let breaks = solution_breakpoints(a, b, params, settings);

    let mut weights = Vec::with_capacity(quad.panels + 1);
    let mut means = Vec::with_capacity(quad.panels + 1);
    let mut vars = Vec::with_capacity(quad.panels + 1);

    let mut total_w = 0.0;
    let mut mean_out = 0.0;
    let mut loss = 0.0;
    let mut frac = [0.0_f64; 3];

    for piece in breaks.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        let len = hi - lo;
        let mut n = ((quad.panels as f64) * len / (b - a)).ceil() as usize;
        // floor high enough that even sliver pieces are integrated to full
        // accuracy: the transformed weight function is quartic, so a
        // handful of panels is not enough
        n = n.max(128);
        if n % 2 == 1 {
            n += 1;
        }
        // Simpson in a transformed variable that clusters nodes at the piece
        // ends: the solution may have a square-root cusp where an interior
        // optimum meets the boundary tangentially, and the vanishing
        // endpoint weights recover fast convergence there.
        let h = 1.0 / n as f64;
        for i in 0..=n {
            let x = i as f64 * h;
            let s = x * x * x * (10.0 + x * (6.0 * x - 15.0));
            let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
            let theta = lo + len * s;
            let coef = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let z = (theta - params.mu_pop) / params.sigma_pop;
            let w = coef * h / 3.0 * len * ds * norm * (-0.5 * z * z).exp();
            let o = solve_user(theta, params, settings);
            weights.push(w);
            means.push(o.expected_output);
            vars.push(o.conditional_output_variance);
            total_w += w;
            mean_out += w * o.expected_output;
            loss += w * o.utility_loss;
            let slot = match o.regime {
                Regime::DefaultOutput => 0,
                Regime::InteractiveAI => 1,
                Regime::Manual => 2,
            };
            frac[slot] += w;
        }
    }

    mean_out /= total_w;
    loss /= total_w;
    let mut var_out = 0.0;
    for i in 0..weights.len() {
        let d = means[i] - mean_out;
        var_out += weights[i] * (d * d + vars[i]);
    }
    var_out /= total_w;

    PopulationStats {
        mean_output: mean_out,
        variance_output: var_out,
        societal_bias: (mean_out - params.mu_pop).abs(),
        population_loss: loss,
        fraction_default: frac[0] / total_w,
        fraction_interactive: frac[1] / total_w,
        fraction_manual: frac[2] / total_w,
    }
}

/// One [`population_stats`] evaluation per axis value.
pub fn sweep(
    params: &ModelParams,
    axis: SweepAxis,
    values: &[f64],
    quad: &QuadratureSpec,
    settings: &SolverSettings,
) -> Result<Vec<(f64, PopulationStats)>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::Empty);
    }
    values
        .iter()
        .map(|&v| {
            let p = axis.apply(params, v)?;
            Ok((v, population_stats(&p, quad, settings)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn free_information_preserves_variance() {
        let p = ModelParams::unbiased(0.0, 1.0, 1e-6, f64::INFINITY);
        let s = population_stats(&p, &quad(), &settings());
        assert!(
            s.variance_output >= 0.95 && s.variance_output <= 1.0,
            "variance {}",
            s.variance_output
        );
    }

    #[test]
    fn prohibitive_cost_collapses_variance() {
        let p = ModelParams::unbiased(0.0, 1.0, 1e6, f64::INFINITY);
        let s = population_stats(&p, &quad(), &settings());
        assert!(s.variance_output <= 0.01, "variance {}", s.variance_output);
        assert_abs_diff_eq!(s.fraction_default, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn max_societal_bias_at_prohibitive_cost() {
        let p = ModelParams::new(0.0, 1.0, 1.0, 1.0, 1e6, f64::INFINITY, 0.0).unwrap();
        let s = population_stats(&p, &quad(), &settings());
        assert!(
            s.societal_bias >= 0.95 && s.societal_bias <= 1.0 + 1e-9,
            "bias {}",
            s.societal_bias
        );
    }

    #[test]
    fn unbiased_mean_is_population_mean() {
        let p = ModelParams::unbiased(0.7, 1.3, 1.0, 2.0);
        let s = population_stats(&p, &quad(), &settings());
        assert_abs_diff_eq!(s.mean_output, 0.7, epsilon = 1e-9);
        let fsum = s.fraction_default + s.fraction_interactive + s.fraction_manual;
        assert_abs_diff_eq!(fsum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn homogenization_and_gamma_monotonicity() {
        let p = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let rows = sweep(&p, SweepAxis::Gamma, &[0.01, 0.1, 1.0, 10.0], &quad(), &settings())
            .unwrap();
        let mut last = f64::INFINITY;
        for (v, s) in &rows {
            assert!(s.variance_output < 1.0, "no homogenization at gamma={v}");
            assert!(s.variance_output < last, "variance not decreasing at gamma={v}");
            last = s.variance_output;
        }
    }

    #[test]
    fn bias_bounds_and_limits() {
        let base = ModelParams::new(0.0, 1.0, 1.0, 1.0, 1.0, f64::INFINITY, 0.0).unwrap();
        let mut gammas = Vec::new();
        for i in 0..10 {
            gammas.push(10f64.powf(-3.0 + 6.0 * i as f64 / 9.0));
        }
        let rows = sweep(&base, SweepAxis::Gamma, &gammas, &quad(), &settings()).unwrap();
        let mut last = -1.0;
        for (v, s) in &rows {
            assert!(s.societal_bias <= 1.0 + 1e-9);
            assert!(
                s.societal_bias >= last - 1e-9,
                "bias not nondecreasing at gamma={v}"
            );
            last = s.societal_bias;
        }
        assert!(rows[0].1.societal_bias <= 0.05);
        assert!(rows[9].1.societal_bias >= 0.95);
    }

    #[test]
    fn bias_vanishes_with_cap() {
        let p = ModelParams::new(0.0, 1.0, 1.0, 1.0, 1.0, 1e-9, 0.0).unwrap();
        let s = population_stats(&p, &quad(), &settings());
        assert!(s.societal_bias <= 1e-6, "bias {}", s.societal_bias);
        // a quadrature node can sit exactly at mu_ai, where the default
        // output is exact and beats even a vanishing cap
        assert!(s.fraction_manual > 0.999, "manual {}", s.fraction_manual);
    }

    #[test]
    fn temperature_shifts_variance_additively() {
        let base = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let rows = sweep(
            &base,
            SweepAxis::Temperature,
            &[0.0, 0.5],
            &quad(),
            &settings(),
        )
        .unwrap();
        let dv = rows[1].1.variance_output - rows[0].1.variance_output;
        assert_abs_diff_eq!(dv, 0.25, epsilon = 1e-9);
        assert!(rows[1].1.population_loss > rows[0].1.population_loss);
    }

    #[test]
    fn censoring_bias_derivative_sign() {
        // widening the AI prior lowers expected loss once gamma >= 2·sigma_pop²
        let base = ModelParams::new(0.0, 1.0, 0.0, 1.0, 2.0, f64::INFINITY, 0.0).unwrap();
        let rows = sweep(&base, SweepAxis::SigmaAiSq, &[1.0, 1.1], &quad(), &settings()).unwrap();
        assert!(rows[1].1.population_loss < rows[0].1.population_loss);
    }

    #[test]
    fn loss_minimized_at_matching_prior_mean() {
        let center = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        let s0 = population_stats(&center, &quad(), &settings());
        for &mu in &[-0.5, 0.5] {
            let p = ModelParams::new(0.0, 1.0, mu, 1.0, 1.0, f64::INFINITY, 0.0).unwrap();
            let s = population_stats(&p, &quad(), &settings());
            assert!(s0.population_loss <= s.population_loss);
        }
    }

    #[test]
    fn quadrature_self_check() {
        // with the domain split at regime boundaries, doubling panels
        // barely moves any statistic even for a biased, capped config
        for p in [
            ModelParams::new(0.0, 1.0, 0.3, 0.9, 1.0, 1.4, 0.1).unwrap(),
            ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY),
        ] {
            let s1 = population_stats(&p, &quad(), &settings());
            let s2 = population_stats(
                &p,
                &QuadratureSpec {
                    half_width_sigmas: 8.0,
                    panels: 8192,
                },
                &settings(),
            );
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
            assert!(
                rel(s1.variance_output, s2.variance_output) < 1e-6,
                "variance {} vs {}",
                s1.variance_output,
                s2.variance_output
            );
            assert!(
                rel(s1.mean_output, s2.mean_output) < 1e-6
                    || (s1.mean_output - s2.mean_output).abs() < 1e-9
            );
            assert!(rel(s1.population_loss, s2.population_loss) < 1e-6);
            assert!(
                (s1.fraction_manual - s2.fraction_manual).abs() < 1e-6,
                "manual {} vs {}",
                s1.fraction_manual,
                s2.fraction_manual
            );
        }
    }

    #[test]
    fn sweep_rejects_bad_values() {
        let p = ModelParams::unbiased(0.0, 1.0, 1.0, f64::INFINITY);
        assert!(sweep(&p, SweepAxis::SigmaAiSq, &[-1.0], &quad(), &settings()).is_err());
        assert!(sweep(&p, SweepAxis::Gamma, &[], &quad(), &settings()).is_err());
    }
}

