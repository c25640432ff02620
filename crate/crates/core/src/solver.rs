//! Per-user optimal signal choice: closed form in the unbiased case, scan +
//! golden-section search otherwise, plus the two decision thresholds.

use crate::model::{ModelParams, Regime, SignalChoice, UserOutcome};
use serde::{Deserialize, Serialize};

/// Numerical knobs for the solver and its test oracle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Grid resolution of [`brute_force_optimum`].
    pub w_grid_size: usize,
    pub bisection_tol: f64,
    pub golden_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            w_grid_size: 20_001,
            bisection_tol: 1e-10,
            golden_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Interior stationary point of the loss in w for uniqueness-squared `u2`
/// (unbiased parameters). `None` when no admissible root exists, in which
/// case the uninformative choice w = 1 is optimal.
fn interior_root(u2: f64, pop_var: f64, gamma: f64) -> Option<f64> {
    let d = u2 - pop_var;
    if d.abs() < 1e-9 * pop_var {
        // removable singularity of the quadratic formula
        let w = gamma / (2.0 * pop_var);
        return (0.0..=1.0).contains(&w).then_some(w);
    }
    let disc = pop_var * pop_var + 4.0 * gamma * d;
    if disc < 0.0 {
        return None;
    }
    let w = (-pop_var + disc.sqrt()) / (4.0 * d);
    (w > 0.0 && w <= 1.0).then_some(w)
}

/// The user's optimal signal weight, minimizing
/// [`ModelParams::utility_loss`] over w in (0, 1].
///
/// Unbiased parameters take the closed-form branch gated by
/// [`threshold_tau_d`]; a biased AI prior falls back to a 256-point scan with
/// golden-section refinement on each bracketed local minimum.
pub fn optimal_weight(theta: f64, params: &ModelParams, settings: &SolverSettings) -> f64 {
    if params.cost_interact == 0.0 {
        // information is free: reveal exactly
        return 0.0;
    }
    if params.is_unbiased() {
        let u = (theta - params.mu_pop).abs();
        if u < threshold_tau_d(params, settings) {
            return 1.0;
        }
        return interior_root(u * u, params.pop_var(), params.cost_interact).unwrap_or(1.0);
    }
    optimal_weight_scan(theta, params, settings)
}

/// Golden-section minimization of the loss on [a, b].
fn golden_section(
    f: &dyn Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() < tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn optimal_weight_scan(theta: f64, params: &ModelParams, settings: &SolverSettings) -> f64 {
    let f = |w: f64| params.utility_loss(theta, w);
    // coarse scan over (0, 1]; the objective can have two local minima
    const N: usize = 256;
    let lo = 1e-9;
    let grid: Vec<f64> = (0..=N)
        .map(|i| lo + (1.0 - lo) * i as f64 / N as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&w| f(w)).collect();
    let mut best_w = 1.0;
    let mut best_loss = f(1.0);
    for i in 1..N {
        if vals[i] <= vals[i - 1] && vals[i] <= vals[i + 1] {
            let w = golden_section(
                &f,
                grid[i - 1],
                grid[i + 1],
                settings.golden_tol,
                settings.max_iter,
            );
            let l = f(w);
            if l < best_loss {
                best_loss = l;
                best_w = w;
            }
        }
    }
    // interior minimum can also sit at the scan edge near 0
    if vals[0] < vals[1] {
        let w = golden_section(&f, lo, grid[1], settings.golden_tol, settings.max_iter);
        if f(w) < best_loss {
            best_w = w;
        }
    }
    best_w
}

/// Uniqueness threshold below which the uninformative signal (w = 1) beats
/// any informative one. Unbiased parameters only.
///
/// For `gamma > sigma_pop²` the threshold is `sqrt(sigma_pop²/2 + gamma/4)`
/// in closed form; otherwise it is bisected between that value and the lower
/// bound `sqrt(max(0, sigma_pop² - sigma_pop⁴/(4·gamma)))`, where the
/// default-vs-interior loss gap is monotone.
pub fn threshold_tau_d(params: &ModelParams, settings: &SolverSettings) -> f64 {
    let s2 = params.pop_var();
    let gamma = params.cost_interact;
    if gamma == 0.0 {
        return 0.0;
    }
    let hi = (0.5 * s2 + 0.25 * gamma).sqrt();
    if gamma > s2 {
        return hi;
    }
    let lo = (s2 - s2 * s2 / (4.0 * gamma)).max(0.0).sqrt();
    if hi - lo < settings.bisection_tol {
        return hi;
    }
    // gap(u) = loss at w=1 minus loss at the interior root; < 0 below the
    // threshold, > 0 above
    let gap = |u: f64| -> f64 {
        let u2 = u * u;
        match interior_root(u2, s2, gamma) {
            None => -1.0,
            Some(w) => u2 - (w * (1.0 - w) * s2 + w * w * u2 - 0.5 * gamma * w.ln()),
        }
    };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..settings.max_iter {
        if b - a < settings.bisection_tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if gap(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Uniqueness threshold `u = |theta - mu_ai|` above which users abandon the
/// AI for manual completion; +inf when manual completion never wins.
pub fn threshold_tau_a(params: &ModelParams, settings: &SolverSettings) -> f64 {
    let cap = params.cost_manual;
    if cap.is_infinite() {
        return f64::INFINITY;
    }
    let best_loss = |u: f64| -> f64 {
        let theta = params.mu_ai + u;
        let w = optimal_weight(theta, params, settings);
        params.utility_loss(theta, w)
    };
    if best_loss(0.0) >= cap {
        return 0.0;
    }
    let u_max = (params.mu_ai - params.mu_pop).abs() + 20.0 * params.sigma_pop.max(params.sigma_ai);
    if best_loss(u_max) < cap {
        return f64::INFINITY;
    }
    let (mut a, mut b) = (0.0, u_max);
    for _ in 0..settings.max_iter {
        if b - a < settings.bisection_tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if best_loss(mid) < cap {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Full per-user decision: pick the optimal weight, then compare the
/// resulting loss against the manual cost. Ties go to the AI.
pub fn solve_user(theta: f64, params: &ModelParams, settings: &SolverSettings) -> UserOutcome {
    let w = optimal_weight(theta, params, settings);
    let loss = params.utility_loss(theta, w);
    if loss > params.cost_manual {
        return UserOutcome {
            regime: Regime::Manual,
            signal: None,
            fidelity_error: 0.0,
            comm_cost: 0.0,
            utility_loss: params.cost_manual,
            expected_output: theta,
            conditional_output_variance: 0.0,
        };
    }
    let (mean, var) = params.expected_output_and_variance(theta, w);
    UserOutcome {
        regime: if w >= 1.0 {
            Regime::DefaultOutput
        } else {
            Regime::InteractiveAI
        },
        signal: Some(SignalChoice::from_weight(w)),
        fidelity_error: params.fidelity_error(theta, w),
        comm_cost: params.comm_cost(w),
        utility_loss: loss,
        expected_output: mean,
        conditional_output_variance: var,
    }
}

/// Exhaustive grid minimum of the loss over w; test oracle for the closed
/// form and the scan path.
pub fn brute_force_optimum(
    theta: f64,
    params: &ModelParams,
    settings: &SolverSettings,
) -> (f64, f64) {
    let n = settings.w_grid_size.max(3);
    let mut best = (1.0, params.utility_loss(theta, 1.0));
    for i in 1..n {
        let w = i as f64 / (n - 1) as f64;
        let l = params.utility_loss(theta, w);
        if l < best.1 {
            best = (w, l);
        }
    }
    best
}
