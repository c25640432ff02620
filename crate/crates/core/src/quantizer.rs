//! Discretization layer: scalar (Lloyd-Max) quantization of population
//! densities, evenly spaced signal grids with conditional cell
//! probabilities, and the built-in population presets.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

pub fn std_normal_cdf(z: f64) -> f64 {
    // statrs's Normal is exact enough and already a dependency
    Normal::standard().cdf(z)
}

/// A finite distribution on a strictly increasing support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Self {
        assert_eq!(support.len(), mass.len());
        assert!(!support.is_empty());
        assert!(
            support.windows(2).all(|w| w[0] < w[1]),
            "support must be strictly increasing"
        );
        assert!(mass.iter().all(|&m| m >= 0.0));
        let total: f64 = mass.iter().sum();
        assert!(
            (total - 1.0).abs() <= 1e-12,
            "masses must sum to 1, got {total}"
        );
        Self { support, mass }
    }

    pub fn degenerate(point: f64) -> Self {
        Self {
            support: vec![point],
            mass: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(&x, &m)| m * x)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(&x, &m)| m * (x - mu) * (x - mu))
            .sum()
    }

    /// Shannon entropy in nats (0·ln 0 = 0).
    pub fn entropy(&self) -> f64 {
        -self
            .mass
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| m * m.ln())
            .sum::<f64>()
    }

    /// Index of the support point minimizing expected squared error under
    /// this distribution (the point nearest the mean; ties toward smaller
    /// absolute value, then smaller value).
    pub fn squared_error_argmin(&self) -> usize {
        nearest_index(&self.support, self.mean())
    }
}

/// Index of the support point nearest `target`; ties toward smaller
/// absolute value, then smaller value.
pub fn nearest_index(support: &[f64], target: f64) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, &x) in support.iter().enumerate() {
        let d = (x - target).abs();
        if d < best_d
            || (d == best_d
                && (x.abs() < support[best].abs()
                    || (x.abs() == support[best].abs() && x < support[best])))
        {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Continuous population densities available to the self-training loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationPreset {
    Normal { mu: f64, sigma: f64 },
    /// Uniform with the requested mean and sd: support `mu ± sqrt(3)·sigma`.
    Uniform { mu: f64, sigma: f64 },
    /// Equal mixture of N(-2, 0.5²) and N(2, 0.5²).
    SymmetricMixture,
    /// Equal mixture of N(-2, 0.5²) and N(2, 0.3²).
    AsymmetricMixture,
}

impl PopulationPreset {
    fn components(&self) -> Vec<(f64, f64, f64)> {
        // (weight, mu, sigma) for the normal-mixture cases
        match *self {
            PopulationPreset::Normal { mu, sigma } => vec![(1.0, mu, sigma)],
            PopulationPreset::SymmetricMixture => {
                vec![(0.5, -2.0, 0.5), (0.5, 2.0, 0.5)]
            }
            PopulationPreset::AsymmetricMixture => {
                vec![(0.5, -2.0, 0.5), (0.5, 2.0, 0.3)]
            }
            PopulationPreset::Uniform { .. } => unreachable!(),
        }
    }

    fn uniform_bounds(mu: f64, sigma: f64) -> (f64, f64) {
        let half = 3f64.sqrt() * sigma;
        (mu - half, mu + half)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PopulationPreset::Normal { mu, .. } | PopulationPreset::Uniform { mu, .. } => mu,
            _ => self
                .components()
                .iter()
                .map(|&(w, m, _)| w * m)
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PopulationPreset::Normal { sigma, .. } => sigma * sigma,
            PopulationPreset::Uniform { sigma, .. } => sigma * sigma,
            _ => {
                let mu = self.mean();
                self.components()
                    .iter()
                    .map(|&(w, m, s)| w * (s * s + (m - mu) * (m - mu)))
                    .sum()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            PopulationPreset::Uniform { mu, sigma } => {
                let (a, b) = Self::uniform_bounds(mu, sigma);
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            _ => self
                .components()
                .iter()
                .map(|&(w, m, s)| w * std_normal_pdf((x - m) / s) / s)
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            PopulationPreset::Uniform { mu, sigma } => {
                let (a, b) = Self::uniform_bounds(mu, sigma);
                ((x - a) / (b - a)).clamp(0.0, 1.0)
            }
            _ => self
                .components()
                .iter()
                .map(|&(w, m, s)| w * std_normal_cdf((x - m) / s))
                .sum(),
        }
    }

    /// First partial moment ∫_a^b x·f(x) dx.
    pub fn partial_mean(&self, a: f64, b: f64) -> f64 {
        match *self {
            PopulationPreset::Uniform { mu, sigma } => {
                let (lo, hi) = Self::uniform_bounds(mu, sigma);
                let (a, b) = (a.max(lo), b.min(hi));
                if a >= b {
                    0.0
                } else {
                    0.5 * (b * b - a * a) / (hi - lo)
                }
            }
            _ => self
                .components()
                .iter()
                .map(|&(w, m, s)| {
                    let (za, zb) = ((a - m) / s, (b - m) / s);
                    let dphi = if za.is_infinite() && zb.is_infinite() {
                        0.0
                    } else {
                        std_normal_pdf(zb.min(40.0).max(-40.0))
                            - std_normal_pdf(za.min(40.0).max(-40.0))
                    };
                    w * (m * (std_normal_cdf(zb) - std_normal_cdf(za)) - s * dphi)
                })
                .sum(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p));
        match *self {
            PopulationPreset::Normal { mu, sigma } => {
                mu + sigma * Normal::standard().inverse_cdf(p)
            }
            PopulationPreset::Uniform { mu, sigma } => {
                let (a, b) = Self::uniform_bounds(mu, sigma);
                a + p * (b - a)
            }
            _ => {
                // bisection on the cdf; mixture supports are bounded in practice
                let (mut a, mut b) = (-60.0, 60.0);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.cdf(mid) < p {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
        }
    }

    /// Range containing all but negligible mass; used to size signal grids.
    pub fn bulk_range(&self) -> (f64, f64) {
        (self.quantile(1e-12), self.quantile(1.0 - 1e-12))
    }
}

/// Result of [`lloyd_max`]. `mse_per_iter` records the quantization mean
/// squared error after each centroid update (nonincreasing by construction).
#[derive(Debug, Clone)]
pub struct LloydMaxResult {
    pub distribution: DiscreteDistribution,
    pub converged: bool,
    pub iterations: usize,
    pub mse_per_iter: Vec<f64>,
}

/// MSE-optimal scalar quantizer of a density by the alternating
/// boundary-midpoint / cell-centroid algorithm. Initialized at equally
/// spaced quantiles; stops when the largest centroid movement falls below
/// `tol` or after `max_iter` sweeps (flagged in the result).
pub fn lloyd_max(
    density: &PopulationPreset,
    m: usize,
    tol: f64,
    max_iter: usize,
) -> LloydMaxResult {
    assert!(m >= 1);
    let second_moment = density.variance() + density.mean() * density.mean();
    let mut centroids: Vec<f64> = (0..m)
        .map(|i| density.quantile((i as f64 + 0.5) / m as f64))
        .collect();
    let mut mass = vec![1.0; m];
    let mut mse_per_iter = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        // cell boundaries at centroid midpoints
        let mut bounds = Vec::with_capacity(m + 1);
        bounds.push(f64::NEG_INFINITY);
        for i in 0..m - 1 {
            bounds.push(0.5 * (centroids[i] + centroids[i + 1]));
        }
        bounds.push(f64::INFINITY);

        let mut max_move: f64 = 0.0;
        let mut mse = second_moment;
        for i in 0..m {
            let p = density.cdf(bounds[i + 1]) - density.cdf(bounds[i]);
            mass[i] = p.max(0.0);
            if mass[i] > 1e-300 {
                let c = density.partial_mean(bounds[i], bounds[i + 1]) / mass[i];
                max_move = max_move.max((c - centroids[i]).abs());
                centroids[i] = c;
            }
            mse -= 2.0 * centroids[i] * density.partial_mean(bounds[i], bounds[i + 1])
                - centroids[i] * centroids[i] * mass[i];
        }
        mse_per_iter.push(mse.max(0.0));
        if max_move < tol {
            converged = true;
            break;
        }
    }

    // renormalize (boundary cdf truncation leaves only ~1e-16 slack)
    let total: f64 = mass.iter().sum();
    for v in &mut mass {
        *v /= total;
    }
    // merge any coincident centroids so the support stays strictly increasing
    let mut support = Vec::with_capacity(m);
    let mut masses = Vec::with_capacity(m);
    for i in 0..m {
        if let Some(&last) = support.last() {
            if centroids[i] <= last {
                let lm: &mut f64 = masses.last_mut().unwrap();
                *lm += mass[i];
                continue;
            }
        }
        support.push(centroids[i]);
        masses.push(mass[i]);
    }

    LloydMaxResult {
        distribution: DiscreteDistribution::new(support, masses),
        converged,
        iterations,
        mse_per_iter,
    }
}

/// Evenly spaced signal grid covering `[theta_min - delta_q, theta_max + delta_q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGrid {
    pub points: Vec<f64>,
    pub delta_q: f64,
}

impl SignalGrid {
    pub fn new(theta_min: f64, theta_max: f64, m_q: usize, delta_q: f64) -> Self {
        assert!(m_q >= 2 && theta_max >= theta_min && delta_q > 0.0);
        let a = theta_min - delta_q;
        let b = theta_max + delta_q;
        let h = (b - a) / (m_q - 1) as f64;
        Self {
            points: (0..m_q).map(|i| a + i as f64 * h).collect(),
            delta_q,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Probability of each grid cell under N(`mean`, `sigma`²); interior
    /// cells are bounded by point midpoints, the first and last cells absorb
    /// the tails, so the masses sum to 1 exactly.
    pub fn conditional_signal_probs(&self, mean: f64, sigma: f64) -> Vec<f64> {
        assert!(sigma > 0.0 && sigma.is_finite());
        let n = self.points.len();
        let mut probs = Vec::with_capacity(n);
        let mut prev_cdf = 0.0;
        for i in 0..n - 1 {
            let mid = 0.5 * (self.points[i] + self.points[i + 1]);
            let c = std_normal_cdf((mid - mean) / sigma);
            probs.push(c - prev_cdf);
            prev_cdf = c;
        }
        probs.push(1.0 - prev_cdf);
        probs
    }
}
