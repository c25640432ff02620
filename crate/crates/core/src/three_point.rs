//! Analytically tractable variant of the self-training dynamics on a
//! symmetric three-point support {-theta_bar, 0, theta_bar}: closed-form
//! posterior-mean output, decision thresholds for its squared-error-optimal
//! quantization, and the scalar recursion for the mass at zero.

use crate::quantizer::std_normal_cdf;
use serde::{Deserialize, Serialize};

/// Symmetric prior on {-theta_bar, 0, theta_bar} with mass `mass_zero` at 0
/// and `(1 - mass_zero)/2` on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointPrior {
    pub theta_bar: f64,
    pub mass_zero: f64,
}

impl ThreePointPrior {
    pub fn new(theta_bar: f64, mass_zero: f64) -> Self {
        assert!(theta_bar > 0.0 && theta_bar.is_finite());
        assert!((0.0..=1.0).contains(&mass_zero));
        Self {
            theta_bar,
            mass_zero,
        }
    }

    pub fn side_mass(&self) -> f64 {
        0.5 * (1.0 - self.mass_zero)
    }

    pub fn variance(&self) -> f64 {
        self.theta_bar * self.theta_bar * (1.0 - self.mass_zero)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        if self.mass_zero > 0.0 {
            h -= self.mass_zero * self.mass_zero.ln();
        }
        let side = self.side_mass();
        if side > 0.0 {
            h -= 2.0 * side * side.ln();
        }
        h
    }
}

/// Posterior-mean output for signal `s` with noise sd `sigma`: the
/// mass-weighted softmax average of the three support points (evaluated in
/// log space). Odd in `s` and bounded by `theta_bar` in absolute value.
pub fn posterior_mean_output(s: f64, sigma: f64, prior: &ThreePointPrior) -> f64 {
    assert!(sigma > 0.0);
    let tb = prior.theta_bar;
    let m0 = prior.mass_zero;
    if m0 >= 1.0 {
        return 0.0;
    }
    let side = prior.side_mass();
    let inv2v = 0.5 / (sigma * sigma);
    let lw = [
        side.ln() - (s + tb) * (s + tb) * inv2v,
        if m0 > 0.0 {
            m0.ln() - s * s * inv2v
        } else {
            f64::NEG_INFINITY
        },
        side.ln() - (s - tb) * (s - tb) * inv2v,
    ];
    let max = lw[0].max(lw[1]).max(lw[2]);
    let w: Vec<f64> = lw.iter().map(|&l| (l - max).exp()).collect();
    let total = w[0] + w[1] + w[2];
    (tb * (w[2] - w[0]) / total).clamp(-tb, tb)
}

/// The signal whose posterior-mean output equals `target`
/// (|target| < theta_bar). Closed form, evaluated in log space so it stays
/// finite for tiny `sigma`.
pub fn inverse_signal(target: f64, sigma: f64, prior: &ThreePointPrior) -> f64 {
    assert!(sigma > 0.0);
    let tb = prior.theta_bar;
    let m0 = prior.mass_zero;
    assert!(
        target.abs() < tb,
        "target must lie strictly inside (-theta_bar, theta_bar)"
    );
    assert!(m0 < 1.0, "degenerate prior has no informative output");
    if target == 0.0 {
        return 0.0;
    }
    let side2 = 1.0 - m0; // 2 * side mass
    let b = tb * tb / (2.0 * sigma * sigma);
    // the output-inversion quadratic has unique positive root
    //   x = A + sqrt(A² + C),  A = target·m0·e^b,  C = (tb² - target²)(1-m0)²
    // and s = (sigma²/tb)·ln(x / ((tb - target)(1-m0))).
    // ln x is assembled from logs so e^b never overflows.
    let c_ln = (tb * tb - target * target).ln() + 2.0 * side2.ln();
    let ln_x = if m0 == 0.0 {
        0.5 * c_ln
    } else {
        let a_ln = target.abs().ln() + m0.ln() + b;
        // ln(|A|(1 + sqrt(1 + C/A²))) without forming e^b
        let ratio_ln = c_ln - 2.0 * a_ln;
        let bracket = if ratio_ln > 500.0 {
            0.5 * ratio_ln
        } else {
            (1.0 + (1.0 + ratio_ln.exp()).sqrt()).ln()
        };
        if target > 0.0 {
            a_ln + bracket
        } else {
            // x = C / (|A| + sqrt(A² + C))
            c_ln - (a_ln + bracket)
        }
    };
    let denom_ln = (tb - target).ln() + side2.ln();
    sigma * sigma / tb * (ln_x - denom_ln)
}

/// Signal thresholds of the squared-error-optimal restriction of the output
/// to the support: the restricted output is `theta_bar` iff `s > U`,
/// `-theta_bar` iff `s < L = -U`, else 0. `p = 1` yields infinite sentinels
/// (every signal maps to 0).
pub fn decision_thresholds(sigma: f64, p: f64, theta_bar: f64) -> (f64, f64) {
    assert!(sigma > 0.0);
    assert!((0.0..=1.0).contains(&p));
    if p >= 1.0 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let v = sigma * sigma;
    let u = if p == 0.0 {
        v * 3f64.ln() / (2.0 * theta_bar)
    } else {
        let r = p / (1.0 - p);
        let w = (r * r + 3.0 * (-theta_bar * theta_bar / v).exp()).sqrt();
        0.5 * theta_bar + v / theta_bar * (r + w).ln()
    };
    (-u, u)
}

/// One step of the mass-at-zero recursion. Common users (the `p0` share of
/// the population) always realize the default output 0; each unique type
/// sends signals at noise `sigma` and lands on 0 whenever the signal falls
/// between the thresholds.
pub fn p_next(p: f64, sigma: f64, p0: f64, theta_bar: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&p0));
    if p >= 1.0 {
        return 1.0;
    }
    if sigma == 0.0 {
        // exact revelation: unique outputs stay unique
        return p0;
    }
    if sigma.is_infinite() {
        return 1.0;
    }
    let (_, u) = decision_thresholds(sigma, p, theta_bar);
    let inner = std_normal_cdf((u - theta_bar) / sigma) - std_normal_cdf((-u - theta_bar) / sigma);
    p0 + (1.0 - p0) * inner
}

/// Expected squared error of the restricted output for a user of type
/// `theta` at noise `sigma`, against thresholds from `prior`. The restricted
/// output is a step function of the signal, so this is an exact sum of
/// normal CDF differences.
pub fn restricted_fidelity(theta: f64, sigma: f64, prior: &ThreePointPrior) -> f64 {
    let tb = prior.theta_bar;
    if prior.mass_zero >= 1.0 {
        // degenerate prior: every signal maps to 0
        return theta * theta;
    }
    if sigma == 0.0 {
        // the signal reveals theta; a support point maps to itself
        return 0.0;
    }
    if sigma.is_infinite() {
        return theta * theta;
    }
    let (_, u) = decision_thresholds(sigma, prior.mass_zero, tb);
    if u.is_infinite() {
        return theta * theta;
    }
    let p_hi = 1.0 - std_normal_cdf((u - theta) / sigma);
    let p_lo = std_normal_cdf((-u - theta) / sigma);
    let p_mid = 1.0 - p_hi - p_lo;
    p_hi * (tb - theta) * (tb - theta) + p_lo * (tb + theta) * (tb + theta) + p_mid * theta * theta
}

/// Mutual information (nats) between a population three-point preference
/// (mass `p0` at zero) and the signal at noise `sigma`, by Simpson
/// quadrature over the signal marginal.
pub fn mutual_information(sigma: f64, p0: f64, theta_bar: f64) -> f64 {
    let pop = ThreePointPrior::new(theta_bar, p0);
    let h = pop.entropy();
    if sigma == 0.0 {
        return h;
    }
    if sigma.is_infinite() {
        return 0.0;
    }
    let masses = [pop.side_mass(), pop.mass_zero, pop.side_mass()];
    let locs = [-theta_bar, 0.0, theta_bar];
    let a = -theta_bar - 8.0 * sigma;
    let b = theta_bar + 8.0 * sigma;
    let n = 2048;
    let step = (b - a) / n as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut acc = 0.0;
    for k in 0..=n {
        let s = a + k as f64 * step;
        let coef = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let mut f = [0.0_f64; 3];
        let mut marginal = 0.0;
        for j in 0..3 {
            if masses[j] > 0.0 {
                let z = (s - locs[j]) / sigma;
                f[j] = masses[j] * norm * (-0.5 * z * z).exp();
                marginal += f[j];
            }
        }
        if marginal <= 0.0 {
            continue;
        }
        let mut cond_h = 0.0;
        for fj in f {
            let p = fj / marginal;
            if p > 0.0 {
                cond_h -= p * p.ln();
            }
        }
        acc += coef * marginal * cond_h;
    }
    (h - acc * step / 3.0).clamp(0.0, h)
}

/// Candidate noise grid for [`solve_user_three_point`]: exact revelation,
/// 200 log-spaced levels on [1e-3, 1e3], and the uninformative signal.
pub fn sigma_grid() -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((0..200).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0)));
    v.push(f64::INFINITY);
    v
}

/// Loss-minimizing noise level for one user type. The fidelity term uses the
/// current prior (through the thresholds), the information term the
/// population mass `p0`. The first (most precise) minimizer wins ties, so
/// free information picks exact revelation.
pub fn solve_user_three_point(
    theta: f64,
    prior: &ThreePointPrior,
    p0: f64,
    gamma: f64,
) -> (f64, f64) {
    assert!(gamma >= 0.0);
    if theta == 0.0 {
        // the default output is already exact
        return (f64::INFINITY, 0.0);
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for sigma in sigma_grid() {
        let q = restricted_fidelity(theta, sigma, prior);
        let i = mutual_information(sigma, p0, prior.theta_bar);
        let loss = q + gamma * i;
        if loss < best.1 {
            best = (sigma, loss);
        }
    }
    best
}

/// Noise policy of [`run_three_point_loop`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreePointPolicy {
    /// Unique users re-solve for the loss-minimizing noise each step.
    Adaptive,
    /// All unique users send at this fixed noise level forever.
    FrozenSigma(f64),
}

/// Iterate the mass-at-zero recursion T steps from `p0`; returns
/// `p_0..=p_T`. Output variance at any point is
/// `theta_bar²·(1 - p)` ([`ThreePointPrior::variance`]).
pub fn run_three_point_loop(
    theta_bar: f64,
    p0: f64,
    gamma: f64,
    policy: ThreePointPolicy,
    t: usize,
) -> Vec<f64> {
    let mut traj = Vec::with_capacity(t + 1);
    let mut p = p0;
    traj.push(p);
    for _ in 0..t {
        let sigma = match policy {
            ThreePointPolicy::FrozenSigma(s) => s,
            ThreePointPolicy::Adaptive => {
                let prior = ThreePointPrior::new(theta_bar, p);
                solve_user_three_point(theta_bar, &prior, p0, gamma).0
            }
        };
        p = p_next(p, sigma, p0, theta_bar);
        traj.push(p);
    }
    traj
}
