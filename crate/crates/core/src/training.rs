//! Discretized self-training loop: the AI's prior is repeatedly re-fit to
//! the distribution of its own outputs.
//!
//! Everything runs on a fixed quantized support. Users pick a signal noise
//! level from a finite candidate set; the AI maps each signal-grid point to
//! the support value minimizing posterior expected squared error; the next
//! prior is the population-weighted mixture of the resulting outputs.
//!
//! Information costs are measured against the fixed population distribution,
//! not the evolving prior, so the per-(type, sigma) information table is
//! computed once per run.

use crate::quantizer::{
    lloyd_max, nearest_index, std_normal_cdf, DiscreteDistribution, PopulationPreset, SignalGrid,
};
use serde::{Deserialize, Serialize};

/// Acceptance rule for the AI's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopVariant {
    /// Decide between AI and manual up front from the expected loss.
    ExAnte,
    /// Always interact; keep the realized output only when its realized
    /// squared error is at most the manual cost.
    ExPost,
}

/// Configuration of one self-training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopConfig {
    pub population: PopulationPreset,
    /// Support size of the quantized population.
    pub m: usize,
    /// Signal grid size.
    pub m_q: usize,
    /// Candidate signal noise levels, ascending; may end with +inf
    /// (the uninformative signal).
    pub sigma_candidates: Vec<f64>,
    pub gamma: f64,
    /// Manual cost; may be +inf.
    pub cap_gamma: f64,
    /// Number of steps T; the trajectory has T+1 records.
    pub iterations: usize,
    pub variant: LoopVariant,
    /// Keep a copy of every prior in the trajectory.
    pub snapshot_priors: bool,
}

impl LoopConfig {
    pub fn new(population: PopulationPreset, gamma: f64, cap_gamma: f64, iterations: usize) -> Self {
        Self {
            population,
            m: 201,
            m_q: 801,
            sigma_candidates: default_sigma_candidates(),
            gamma,
            cap_gamma,
            iterations,
            variant: LoopVariant::ExAnte,
            snapshot_priors: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.m < 3 {
            return Err(format!("m must be >= 3, got {}", self.m));
        }
        if self.m_q < 2 {
            return Err(format!("m_q must be >= 2, got {}", self.m_q));
        }
        if self.sigma_candidates.is_empty() {
            return Err("sigma_candidates must be nonempty".into());
        }
        if !self.sigma_candidates.windows(2).all(|w| w[0] < w[1]) {
            return Err("sigma_candidates must be strictly ascending".into());
        }
        if self.sigma_candidates[0] <= 0.0 {
            return Err("sigma candidates must be positive".into());
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.cap_gamma > 0.0) {
            return Err(format!("cap_gamma must be > 0, got {}", self.cap_gamma));
        }
        Ok(())
    }
}

/// 120 log-spaced noise levels on [1e-3, 1e3] plus the uninformative signal.
pub fn default_sigma_candidates() -> Vec<f64> {
    let mut v: Vec<f64> = (0..120)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 119.0))
        .collect();
    v.push(f64::INFINITY);
    v
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub variance: f64,
    pub mean: f64,
    /// Prior mass at the current default output point.
    pub mass_at_default: f64,
    /// Population share that declines the AI this step (ex ante) or has its
    /// realized output rejected in expectation (ex post).
    pub fraction_manual: f64,
}

/// Per-iteration summary of a loop run (record `t` describes the prior
/// entering step `t`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub priors: Option<Vec<DiscreteDistribution>>,
}

/// Precomputed tables shared by every iteration of one run.
pub struct LoopEngine {
    pub config: LoopConfig,
    /// Quantized population (fixed over the run); also the output support.
    pub population: DiscreteDistribution,
    pub grid: SignalGrid,
    finite_sigmas: Vec<f64>,
    has_uninformative: bool,
    /// `cond[s][i * m_q + k]` = P(signal cell k | type i, sigma s).
    cond: Vec<Vec<f64>>,
    /// `info[s][i]` = mutual information (nats) of the signal at sigma s for
    /// type i, w.r.t. the population distribution.
    info: Vec<Vec<f64>>,
}

/// Outcome of solving one user type against a given prior.
#[derive(Debug, Clone, Copy)]
pub struct TypeDecision {
    /// Index into the candidate list; `None` for the uninformative signal.
    pub sigma_index: Option<usize>,
    pub sigma: f64,
    pub loss: f64,
    /// Ex-post only: probability the realized output is rejected.
    pub reject_prob: f64,
}

impl LoopEngine {
    pub fn new(config: LoopConfig) -> Result<Self, String> {
        config.validate()?;
        let population = lloyd_max(&config.population, config.m, 1e-10, 500).distribution;
        let theta_min = population.support[0];
        let theta_max = *population.support.last().unwrap();
        let range = (theta_max - theta_min).max(1e-6);
        let mut finite_sigmas: Vec<f64> = config
            .sigma_candidates
            .iter()
            .copied()
            .filter(|s| s.is_finite())
            .collect();
        let has_uninformative = config.sigma_candidates.iter().any(|s| s.is_infinite());
        finite_sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let max_sigma = finite_sigmas.last().copied().unwrap_or(1.0);
        let delta_q = (4.0 * max_sigma).min(4.0 * range);
        let grid = SignalGrid::new(theta_min, theta_max, config.m_q, delta_q);

        let m = population.len();
        let m_q = grid.len();
        let mut cond = Vec::with_capacity(finite_sigmas.len());
        for &sigma in &finite_sigmas {
            let mut table = Vec::with_capacity(m * m_q);
            for i in 0..m {
                table.extend(grid.conditional_signal_probs(population.support[i], sigma));
            }
            cond.push(table);
        }

        // Information table against the fixed population. Posteriors are
        // built from the exact per-cell signal probabilities — the same
        // numbers that propagate mass in `step` — so the absorbing tail
        // cells (which carry the sign of the type at large sigma) are
        // priced at their true information content.
        let pop_entropy = population.entropy();
        let mut info = Vec::with_capacity(finite_sigmas.len());
        for s in 0..finite_sigmas.len() {
            // entropy of the population posterior at each signal cell
            let mut cell_entropy = Vec::with_capacity(m_q);
            for k in 0..m_q {
                let mut total = 0.0;
                for j in 0..m {
                    total += population.mass[j] * cond[s][j * m_q + k];
                }
                let mut h = 0.0;
                if total > 0.0 {
                    for j in 0..m {
                        let p = population.mass[j] * cond[s][j * m_q + k] / total;
                        if p > 0.0 {
                            h -= p * p.ln();
                        }
                    }
                } else {
                    // zero-probability cell: no contribution either way
                    h = pop_entropy;
                }
                cell_entropy.push(h);
            }
            let mut row = Vec::with_capacity(m);
            for i in 0..m {
                let probs = &cond[s][i * m_q..(i + 1) * m_q];
                let mut mi = 0.0;
                for k in 0..m_q {
                    mi += probs[k] * (pop_entropy - cell_entropy[k]);
                }
                row.push(mi.clamp(0.0, pop_entropy));
            }
            info.push(row);
        }

        Ok(Self {
            config,
            population,
            grid,
            finite_sigmas,
            has_uninformative,
            cond,
            info,
        })
    }

    pub fn finite_sigmas(&self) -> &[f64] {
        &self.finite_sigmas
    }

    pub fn mutual_info(&self, theta_index: usize, sigma_index: usize) -> f64 {
        self.info[sigma_index][theta_index]
    }

    /// The AI's output map at one noise level: for each signal-grid cell,
    /// the index of the support value minimizing posterior expected squared
    /// error under `prior`. `sigma_index` indexes `finite_sigmas`.
    pub fn discrete_ai_output(&self, prior: &DiscreteDistribution, sigma_index: usize) -> Vec<usize> {
        output_map_point_likelihood(prior, &self.grid, self.finite_sigmas[sigma_index])
    }

    /// Pick the loss-minimizing noise level for one type against `prior`.
    /// `out_maps[s]` must be the output map for `finite_sigmas[s]`.
    /// Ties break toward less information (larger sigma, then uninformative).
    pub fn best_sigma(
        &self,
        theta_index: usize,
        prior: &DiscreteDistribution,
        out_maps: &[Vec<usize>],
        default_index: usize,
    ) -> TypeDecision {
        let theta = self.population.support[theta_index];
        let m_q = self.grid.len();
        let expost = self.config.variant == LoopVariant::ExPost;
        let cap = self.config.cap_gamma;

        let mut best: Option<TypeDecision> = None;
        for (s, &sigma) in self.finite_sigmas.iter().enumerate() {
            let probs = &self.cond[s][theta_index * m_q..(theta_index + 1) * m_q];
            let map = &out_maps[s];
            let mut q_err = 0.0;
            let mut reject = 0.0;
            for k in 0..m_q {
                let e = self.population.support[map[k]] - theta;
                let e2 = e * e;
                if expost && e2 > cap {
                    reject += probs[k];
                } else {
                    q_err += probs[k] * e2;
                }
            }
            let loss = q_err + self.config.gamma * self.info[s][theta_index];
            let cand = TypeDecision {
                sigma_index: Some(s),
                sigma,
                loss,
                reject_prob: reject,
            };
            if best.as_ref().map_or(true, |b| loss <= b.loss) {
                best = Some(cand);
            }
        }
        if self.has_uninformative {
            let e = self.population.support[default_index] - theta;
            let e2 = e * e;
            let (loss, reject) = if expost && e2 > cap {
                (0.0, 1.0)
            } else {
                (e2, 0.0)
            };
            let cand = TypeDecision {
                sigma_index: None,
                sigma: f64::INFINITY,
                loss,
                reject_prob: reject,
            };
            if best.as_ref().map_or(true, |b| loss <= b.loss) {
                best = Some(cand);
            }
        }
        let _ = prior;
        best.expect("candidate list is nonempty")
    }

    /// One loop step: solve every type against `prior`, apply the acceptance
    /// rule, and mix the outputs into the next prior. Also returns the
    /// population share completing manually / rejecting.
    pub fn step(&self, prior: &DiscreteDistribution) -> (DiscreteDistribution, f64) {
        let m = self.population.len();
        let m_q = self.grid.len();
        let out_maps: Vec<Vec<usize>> = (0..self.finite_sigmas.len())
            .map(|s| self.discrete_ai_output(prior, s))
            .collect();
        let default_index = prior.squared_error_argmin();
        let expost = self.config.variant == LoopVariant::ExPost;

        let mut next = vec![0.0_f64; m];
        let mut manual_share = 0.0;
        for i in 0..m {
            let pop_mass = self.population.mass[i];
            if pop_mass == 0.0 {
                continue;
            }
            let d = self.best_sigma(i, prior, &out_maps, default_index);
            if !expost && d.loss > self.config.cap_gamma {
                next[i] += pop_mass;
                manual_share += pop_mass;
                continue;
            }
            manual_share += pop_mass * d.reject_prob;
            match d.sigma_index {
                None => {
                    // uninformative: everything lands on the default point
                    let e = self.population.support[default_index]
                        - self.population.support[i];
                    if expost && e * e > self.config.cap_gamma {
                        next[i] += pop_mass;
                    } else {
                        next[default_index] += pop_mass;
                    }
                }
                Some(s) => {
                    let probs = &self.cond[s][i * m_q..(i + 1) * m_q];
                    let map = &out_maps[s];
                    let theta = self.population.support[i];
                    for k in 0..m_q {
                        let j = map[k];
                        let e = self.population.support[j] - theta;
                        if expost && e * e > self.config.cap_gamma {
                            next[i] += pop_mass * probs[k];
                        } else {
                            next[j] += pop_mass * probs[k];
                        }
                    }
                }
            }
        }
        let total: f64 = next.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-9, "mass leaked: {total}");
        for v in &mut next {
            *v /= total;
        }
        (
            DiscreteDistribution::new(self.population.support.clone(), next),
            manual_share,
        )
    }

    /// Run the configured number of steps from the quantized population.
    pub fn run(&self) -> Trajectory {
        let mut prior = self.population.clone();
        let mut records = Vec::with_capacity(self.config.iterations + 1);
        let mut priors = self.config.snapshot_priors.then(Vec::new);
        for t in 0..=self.config.iterations {
            let (next, manual_share) = self.step(&prior);
            records.push(TrajectoryRecord {
                t,
                variance: prior.variance(),
                mean: prior.mean(),
                mass_at_default: prior.mass[prior.squared_error_argmin()],
                fraction_manual: manual_share,
            });
            if let Some(ps) = priors.as_mut() {
                ps.push(prior.clone());
            }
            prior = next;
        }
        Trajectory { records, priors }
    }
}

/// Standalone output map: for each signal-grid cell, the support index
/// minimizing posterior expected squared error under `prior` with noise
/// `sigma`.
pub fn discrete_ai_output(
    prior: &DiscreteDistribution,
    grid: &SignalGrid,
    sigma: f64,
) -> Vec<usize> {
    assert!(sigma > 0.0 && sigma.is_finite());
    output_map_point_likelihood(prior, grid, sigma)
}

/// Core of the output map. Posterior weights are normal likelihoods of the
/// cell's representative point, evaluated in log space with the per-cell
/// maximum (over positive-mass support points) subtracted, so the posterior
/// never underflows to all zeros even at tiny `sigma`.
fn output_map_point_likelihood(
    prior: &DiscreteDistribution,
    grid: &SignalGrid,
    sigma: f64,
) -> Vec<usize> {
    let inv = 0.5 / (sigma * sigma);
    let m = prior.len();
    let mut out = Vec::with_capacity(grid.len());
    for &q in &grid.points {
        let mut max_ll = f64::NEG_INFINITY;
        for j in 0..m {
            if prior.mass[j] > 0.0 {
                let d = q - prior.support[j];
                let ll = -d * d * inv;
                if ll > max_ll {
                    max_ll = ll;
                }
            }
        }
        let mut total = 0.0;
        let mut mean = 0.0;
        for j in 0..m {
            if prior.mass[j] > 0.0 {
                let d = q - prior.support[j];
                let w = prior.mass[j] * (-d * d * inv - max_ll).exp();
                total += w;
                mean += w * prior.support[j];
            }
        }
        out.push(nearest_index(&prior.support, mean / total));
    }
    out
}

/// Run a full loop from its configuration.
pub fn run_loop(config: LoopConfig) -> Result<Trajectory, String> {
    Ok(LoopEngine::new(config)?.run())
}

/// Comparison of the discrete prior after one step against the analytic
/// first-iteration distribution (unbiased normal population, no manual
/// option required, i.e. `cap_gamma = +inf`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstIterationReport {
    pub mass_zero_discrete: f64,
    pub mass_zero_analytic: f64,
    /// Sup-norm gap between discrete and analytic per-cell masses.
    pub sup_norm: f64,
}

/// Compare one discrete step against the closed-form first-iteration
/// density: an atom of `2·Phi(tau_d/sigma) - 1` at the population mean plus
/// a mixture of per-type normals for types beyond the threshold.
pub fn first_iteration_density_check(config: &LoopConfig) -> Result<FirstIterationReport, String> {
    let (mu, sigma_pop) = match config.population {
        PopulationPreset::Normal { mu, sigma } => (mu, sigma),
        _ => return Err("analytic check requires a normal population".into()),
    };
    if mu != 0.0 {
        return Err("analytic check requires a centered population".into());
    }
    if config.cap_gamma.is_finite() {
        return Err("analytic check requires cap_gamma = +inf".into());
    }
    let engine = LoopEngine::new(config.clone())?;
    let (pi1, _) = engine.step(&engine.population);

    let params =
        crate::model::ModelParams::unbiased(0.0, sigma_pop, config.gamma, f64::INFINITY);
    let settings = crate::solver::SolverSettings::default();
    let tau_d = crate::solver::threshold_tau_d(&params, &settings);
    let mass_zero_analytic = 2.0 * std_normal_cdf(tau_d / sigma_pop) - 1.0;

    // analytic per-cell masses: cells are bounded by support midpoints
    let support = &engine.population.support;
    let m = support.len();
    let cell_bound = |i: usize| -> f64 {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == m {
            f64::INFINITY
        } else {
            0.5 * (support[i - 1] + support[i])
        }
    };
    let zero_cell = nearest_index(support, 0.0);

    let mut analytic = vec![0.0_f64; m];
    analytic[zero_cell] += mass_zero_analytic;
    // quadrature over types beyond the threshold
    let n = 4096;
    let (a, b) = (-8.0 * sigma_pop, 8.0 * sigma_pop);
    let h = (b - a) / n as f64;
    for k in 0..=n {
        let theta: f64 = a + k as f64 * h;
        if theta.abs() <= tau_d {
            continue;
        }
        let coef = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let z = theta / sigma_pop;
        let pop_w = coef * h / 3.0 * (-0.5 * z * z).exp()
            / (sigma_pop * (2.0 * std::f64::consts::PI).sqrt());
        let w = crate::solver::optimal_weight(theta, &params, &settings);
        let out_mean = (1.0 - w) * theta;
        let out_sd = (w * (1.0 - w)).max(0.0).sqrt() * sigma_pop;
        if out_sd < 1e-12 {
            analytic[nearest_index(support, out_mean)] += pop_w;
            continue;
        }
        for i in 0..m {
            let lo = (cell_bound(i) - out_mean) / out_sd;
            let hi = (cell_bound(i + 1) - out_mean) / out_sd;
            analytic[i] += pop_w * (std_normal_cdf(hi) - std_normal_cdf(lo));
        }
    }

    let sup_norm = pi1
        .mass
        .iter()
        .zip(&analytic)
        .map(|(&d, &an)| (d - an).abs())
        .fold(0.0_f64, f64::max);
    Ok(FirstIterationReport {
        mass_zero_discrete: pi1.mass[zero_cell],
        mass_zero_analytic,
        sup_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_config(gamma: f64, cap: f64) -> LoopConfig {
        let mut sigmas: Vec<f64> = (0..20)
            .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0))
            .collect();
        sigmas.push(f64::INFINITY);
        LoopConfig {
            population: PopulationPreset::Normal { mu: 0.0, sigma: 1.0 },
            m: 25,
            m_q: 151,
            sigma_candidates: sigmas,
            gamma,
            cap_gamma: cap,
            iterations: 5,
            variant: LoopVariant::ExAnte,
            snapshot_priors: false,
        }
    }

    fn three_point_prior() -> DiscreteDistribution {
        DiscreteDistribution::new(
            vec![-1.0, 0.0, 1.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
    }

    #[test]
    fn output_map_degenerate_prior() {
        let grid = SignalGrid::new(-2.0, 2.0, 51, 2.0);
        let prior = DiscreteDistribution::degenerate(0.7);
        let map = discrete_ai_output(&prior, &grid, 0.5);
        assert!(map.iter().all(|&j| j == 0));
    }

    #[test]
    fn output_map_uninformative_limit() {
        let grid = SignalGrid::new(-2.0, 2.0, 51, 2.0);
        let prior = three_point_prior();
        let map = discrete_ai_output(&prior, &grid, 1e6);
        // posterior ~ prior: every signal maps to the prior's best point
        let want = prior.squared_error_argmin();
        assert!(map.iter().all(|&j| j == want));
    }

    #[test]
    fn output_map_sharp_signal() {
        let grid = SignalGrid {
            points: vec![-1.5, -0.9, 0.0, 0.9, 1.5],
            delta_q: 0.5,
        };
        let prior = three_point_prior();
        let map = discrete_ai_output(&prior, &grid, 0.2);
        // q = 0.9 identifies theta = 1
        assert_eq!(prior.support[map[3]], 1.0);
        assert_eq!(prior.support[map[2]], 0.0);
    }

    #[test]
    fn mutual_info_limits() {
        let mut cfg = small_config(1.0, f64::INFINITY);
        cfg.sigma_candidates = vec![1e-6, 1.0, 1e6];
        cfg.m = 11;
        let engine = LoopEngine::new(cfg).unwrap();
        let h = engine.population.entropy();
        let sharp = engine.mutual_info(5, 0);
        let blunt = engine.mutual_info(5, 2);
        assert!(sharp > 0.95 * h, "sharp {sharp} vs H {h}");
        assert!(blunt < 1e-6, "blunt {blunt}");
        let mid = engine.mutual_info(5, 1);
        assert!(mid > 0.0 && mid < h);
    }

    #[test]
    fn mutual_info_matches_closed_form() {
        // fine grids: discrete MI approaches -ln(sigma²/(1+sigma²))/2
        let mut cfg = small_config(1.0, f64::INFINITY);
        cfg.m = 201;
        cfg.m_q = 801;
        cfg.sigma_candidates = vec![0.5, 1.0, 2.0];
        let engine = LoopEngine::new(cfg).unwrap();
        // population-average MI (types near the center carry the mass)
        for (s, &sigma) in [0.5_f64, 1.0, 2.0].iter().enumerate() {
            let closed = -0.5 * (sigma * sigma / (1.0 + sigma * sigma)).ln();
            let avg: f64 = (0..engine.population.len())
                .map(|i| engine.population.mass[i] * engine.mutual_info(i, s))
                .sum();
            assert!(
                (avg - closed).abs() < 0.02,
                "sigma={sigma}: discrete {avg} vs closed {closed}"
            );
        }
    }

    #[test]
    fn best_sigma_prohibitive_gamma_is_uninformative() {
        let cfg = small_config(1e6, f64::INFINITY);
        let engine = LoopEngine::new(cfg).unwrap();
        let prior = engine.population.clone();
        let out_maps: Vec<Vec<usize>> = (0..engine.finite_sigmas().len())
            .map(|s| engine.discrete_ai_output(&prior, s))
            .collect();
        let d_index = prior.squared_error_argmin();
        for i in 0..engine.population.len() {
            let d = engine.best_sigma(i, &prior, &out_maps, d_index);
            assert!(d.sigma.is_infinite(), "type {i} chose sigma {}", d.sigma);
        }
    }

    #[test]
    fn best_sigma_at_mean_and_tail() {
        let cfg = small_config(1.0, f64::INFINITY);
        let engine = LoopEngine::new(cfg).unwrap();
        let prior = engine.population.clone();
        let out_maps: Vec<Vec<usize>> = (0..engine.finite_sigmas().len())
            .map(|s| engine.discrete_ai_output(&prior, s))
            .collect();
        let d_index = prior.squared_error_argmin();
        // the central type gets the default at zero loss
        let center = engine.population.len() / 2;
        let d = engine.best_sigma(center, &prior, &out_maps, d_index);
        assert!(d.sigma.is_infinite());
        assert_abs_diff_eq!(d.loss, 0.0, epsilon = 1e-12);
        // a tail type near theta = 2 interacts and beats the default loss
        let i2 = nearest_index(&engine.population.support, 2.0);
        let theta = engine.population.support[i2];
        let d2 = engine.best_sigma(i2, &prior, &out_maps, d_index);
        assert!(d2.sigma.is_finite());
        assert!(d2.loss < theta * theta);
    }

    #[test]
    fn degenerate_prior_is_absorbing() {
        let cfg = small_config(1.0, f64::INFINITY);
        let engine = LoopEngine::new(cfg).unwrap();
        let mut mass = vec![0.0; engine.population.len()];
        mass[3] = 1.0;
        let prior = DiscreteDistribution::new(engine.population.support.clone(), mass);
        let (next, _) = engine.step(&prior);
        assert_abs_diff_eq!(next.mass[3], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.variance(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tiny_cap_returns_population() {
        let cfg = small_config(1.0, 1e-12);
        let engine = LoopEngine::new(cfg).unwrap();
        let (next, _) = engine.step(&engine.population);
        for (a, b) in next.mass.iter().zip(&engine.population.mass) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let mut cfg2 = small_config(1.0, 1e-12);
        cfg2.variant = LoopVariant::ExPost;
        let engine2 = LoopEngine::new(cfg2).unwrap();
        let (next2, _) = engine2.step(&engine2.population);
        for (a, b) in next2.mass.iter().zip(&engine2.population.mass) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_step_reduces_variance() {
        let cfg = small_config(1.0, f64::INFINITY);
        let engine = LoopEngine::new(cfg).unwrap();
        let (next, manual) = engine.step(&engine.population);
        assert!(next.variance() < engine.population.variance());
        assert_eq!(manual, 0.0);
    }

    #[test]
    fn expost_matches_exante_with_infinite_cap() {
        let a = LoopEngine::new(small_config(1.0, f64::INFINITY)).unwrap();
        let mut cfg = small_config(1.0, f64::INFINITY);
        cfg.variant = LoopVariant::ExPost;
        let b = LoopEngine::new(cfg).unwrap();
        let (na, _) = a.step(&a.population);
        let (nb, _) = b.step(&b.population);
        assert_eq!(na.mass, nb.mass);
    }

    #[test]
    fn run_loop_zero_iterations() {
        let mut cfg = small_config(1.0, f64::INFINITY);
        cfg.iterations = 0;
        let engine = LoopEngine::new(cfg).unwrap();
        let traj = engine.run();
        assert_eq!(traj.records.len(), 1);
        assert_abs_diff_eq!(
            traj.records[0].variance,
            engine.population.variance(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn mass_conserved_along_run() {
        let mut cfg = small_config(1.0, 2.0);
        cfg.iterations = 8;
        cfg.snapshot_priors = true;
        let traj = run_loop(cfg).unwrap();
        for p in traj.priors.unwrap() {
            assert_abs_diff_eq!(p.mass.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lower_gamma_keeps_more_variance() {
        let mut hi = small_config(1.0, f64::INFINITY);
        hi.iterations = 6;
        let mut lo = small_config(0.1, f64::INFINITY);
        lo.iterations = 6;
        let t_hi = run_loop(hi).unwrap();
        let t_lo = run_loop(lo).unwrap();
        for (a, b) in t_lo.records.iter().zip(&t_hi.records) {
            assert!(a.variance >= b.variance - 1e-9, "t={}", a.t);
        }
    }

    #[test]
    fn first_iteration_report_small_scale() {
        let mut cfg = small_config(1.0, f64::INFINITY);
        cfg.m = 51;
        cfg.m_q = 301;
        let r = first_iteration_density_check(&cfg).unwrap();
        assert!(
            (r.mass_zero_discrete - r.mass_zero_analytic).abs() < 0.05,
            "{r:?}"
        );
        let mut fine = cfg.clone();
        fine.m = 101;
        fine.m_q = 601;
        let r2 = first_iteration_density_check(&fine).unwrap();
        assert!(r2.sup_norm <= r.sup_norm + 1e-3, "{} vs {}", r2.sup_norm, r.sup_norm);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(1.0, 1.0);
        cfg.m = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(1.0, 1.0);
        cfg.sigma_candidates = vec![2.0, 1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(1.0, 1.0);
        cfg.gamma = -1.0;
        assert!(cfg.validate().is_err());
        assert!(small_config(1.0, 1.0).validate().is_ok());
    }
}
