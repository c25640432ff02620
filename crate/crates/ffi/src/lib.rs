//! C ABI over the core model: an opaque parameter handle, flat result
//! structs, and integer status codes. Every entry point checks its pointers,
//! catches panics, and never unwinds across the boundary.
//!
//! The generated header lives in `include/homogsim.h`.

use homogsim::quantizer::PopulationPreset;
use homogsim::solver::{solve_user, threshold_tau_a, threshold_tau_d, SolverSettings};
use homogsim::three_point::{run_three_point_loop, ThreePointPolicy};
use homogsim::training::{run_loop, LoopConfig, LoopVariant};
use homogsim::population::population_stats;
use homogsim::{ModelParams, QuadratureSpec, Regime};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    HsOk = 0,
    HsNullPointer = 1,
    HsInvalidArgument = 2,
    HsInternalError = 3,
}

/// How a user's task gets done.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsRegime {
    HsDefault = 0,
    HsInteractive = 1,
    HsManual = 2,
}

/// Opaque model-parameter handle; create with `hs_model_new`, release with
/// `hs_model_free`.
pub struct HsModel {
    params: ModelParams,
    settings: SolverSettings,
}

/// Solved outcome for a single user preference.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HsUserOutcome {
    pub regime: HsRegime,
    /// Posterior weight on the AI prior; NaN for manual users.
    pub weight: f64,
    /// Chosen signal noise standard deviation; NaN for manual users.
    pub sigma_u: f64,
    pub fidelity_error: f64,
    pub comm_cost: f64,
    pub utility_loss: f64,
    pub expected_output: f64,
    pub conditional_output_variance: f64,
}

/// Output-distribution aggregates across the population.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HsPopulationStats {
    pub mean_output: f64,
    pub variance_output: f64,
    pub societal_bias: f64,
    pub population_loss: f64,
    pub fraction_default: f64,
    pub fraction_interactive: f64,
    pub fraction_manual: f64,
}

fn guard<F: FnOnce() -> HsStatus>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => HsStatus::HsInternalError,
    }
}

/// Create a model. `cap_gamma` may be +infinity (manual work never pays);
/// writes the handle to `out`. Free with `hs_model_free`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_model_new(
    mu_pop: f64,
    sigma_pop: f64,
    mu_ai: f64,
    sigma_ai: f64,
    gamma: f64,
    cap_gamma: f64,
    temperature: f64,
    out: *mut *mut HsModel,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return HsStatus::HsNullPointer;
        }
        match ModelParams::new(mu_pop, sigma_pop, mu_ai, sigma_ai, gamma, cap_gamma, temperature)
        {
            Ok(params) => {
                let handle = Box::new(HsModel {
                    params,
                    settings: SolverSettings::default(),
                });
                unsafe { *out = Box::into_raw(handle) };
                HsStatus::HsOk
            }
            Err(_) => HsStatus::HsInvalidArgument,
        }
    })
}

/// Release a handle from `hs_model_new`. A null pointer is a no-op.
///
/// # Safety
/// `model` must be null or a pointer obtained from `hs_model_new` that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn hs_model_free(model: *mut HsModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Solve one user preference against the model.
///
/// # Safety
/// `model` must come from `hs_model_new`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_solve_user(
    model: *const HsModel,
    theta: f64,
    out: *mut HsUserOutcome,
) -> HsStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return HsStatus::HsNullPointer;
        }
        if !theta.is_finite() {
            return HsStatus::HsInvalidArgument;
        }
        let m = unsafe { &*model };
        let o = solve_user(theta, &m.params, &m.settings);
        let (weight, sigma_u) = match o.signal {
            Some(s) => (s.weight, s.sigma_u(m.params.sigma_ai)),
            None => (f64::NAN, f64::NAN),
        };
        unsafe {
            *out = HsUserOutcome {
                regime: match o.regime {
                    Regime::DefaultOutput => HsRegime::HsDefault,
                    Regime::InteractiveAI => HsRegime::HsInteractive,
                    Regime::Manual => HsRegime::HsManual,
                },
                weight,
                sigma_u,
                fidelity_error: o.fidelity_error,
                comm_cost: o.comm_cost,
                utility_loss: o.utility_loss,
                expected_output: o.expected_output,
                conditional_output_variance: o.conditional_output_variance,
            };
        }
        HsStatus::HsOk
    })
}

/// Regime thresholds for an unbiased model: `tau_d` bounds the default
/// region, `tau_a` the manual region (+infinity when manual never pays).
/// Fails with `HsInvalidArgument` when the AI prior is biased.
///
/// # Safety
/// `model` must come from `hs_model_new`; `tau_d` and `tau_a` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_thresholds(
    model: *const HsModel,
    tau_d: *mut f64,
    tau_a: *mut f64,
) -> HsStatus {
    guard(|| {
        if model.is_null() || tau_d.is_null() || tau_a.is_null() {
            return HsStatus::HsNullPointer;
        }
        let m = unsafe { &*model };
        if !m.params.is_unbiased() {
            return HsStatus::HsInvalidArgument;
        }
        unsafe {
            *tau_d = threshold_tau_d(&m.params, &m.settings);
            *tau_a = threshold_tau_a(&m.params, &m.settings);
        }
        HsStatus::HsOk
    })
}

/// Population aggregates by quadrature. `panels` must be even and >= 2;
/// `half_width_sigmas` >= 6 (pass 8 for the default range).
///
/// # Safety
/// `model` must come from `hs_model_new`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_population_stats(
    model: *const HsModel,
    half_width_sigmas: f64,
    panels: usize,
    out: *mut HsPopulationStats,
) -> HsStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return HsStatus::HsNullPointer;
        }
        if !(half_width_sigmas >= 6.0) || panels < 2 || panels % 2 != 0 {
            return HsStatus::HsInvalidArgument;
        }
        let m = unsafe { &*model };
        let quad = QuadratureSpec {
            half_width_sigmas,
            panels,
        };
        let s = population_stats(&m.params, &quad, &m.settings);
        unsafe {
            *out = HsPopulationStats {
                mean_output: s.mean_output,
                variance_output: s.variance_output,
                societal_bias: s.societal_bias,
                population_loss: s.population_loss,
                fraction_default: s.fraction_default,
                fraction_interactive: s.fraction_interactive,
                fraction_manual: s.fraction_manual,
            };
        }
        HsStatus::HsOk
    })
}

/// Run the self-training loop on a normal population and write the
/// per-iteration output variance into `out_variance` (length
/// `iterations + 1`; entry `t` describes the prior entering step `t`).
/// `ex_post` selects per-realization acceptance instead of the up-front
/// rule. Pass 0 for `m`/`m_q` to get the defaults (201 / 801).
///
/// # Safety
/// `out_variance` must point to at least `iterations + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_loop_run_normal(
    mu: f64,
    sigma: f64,
    gamma: f64,
    cap_gamma: f64,
    m: usize,
    m_q: usize,
    iterations: usize,
    ex_post: bool,
    out_variance: *mut f64,
) -> HsStatus {
    guard(|| {
        if out_variance.is_null() {
            return HsStatus::HsNullPointer;
        }
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return HsStatus::HsInvalidArgument;
        }
        let mut config = LoopConfig::new(
            PopulationPreset::Normal { mu, sigma },
            gamma,
            cap_gamma,
            iterations,
        );
        if m > 0 {
            config.m = m;
        }
        if m_q > 0 {
            config.m_q = m_q;
        }
        config.variant = if ex_post {
            LoopVariant::ExPost
        } else {
            LoopVariant::ExAnte
        };
        match run_loop(config) {
            Ok(tr) => {
                let dst = unsafe { std::slice::from_raw_parts_mut(out_variance, iterations + 1) };
                for (d, r) in dst.iter_mut().zip(&tr.records) {
                    *d = r.variance;
                }
                HsStatus::HsOk
            }
            Err(_) => HsStatus::HsInvalidArgument,
        }
    })
}

/// Run the three-point-support loop and write the trajectory of the prior's
/// mass at zero into `out_p` (length `iterations + 1`). Pass NaN as
/// `frozen_sigma` for the adaptive policy.
///
/// # Safety
/// `out_p` must point to at least `iterations + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_three_point_run(
    theta_bar: f64,
    p0: f64,
    gamma: f64,
    frozen_sigma: f64,
    iterations: usize,
    out_p: *mut f64,
) -> HsStatus {
    guard(|| {
        if out_p.is_null() {
            return HsStatus::HsNullPointer;
        }
        if !(theta_bar > 0.0) || !(0.0..=1.0).contains(&p0) || !(gamma >= 0.0) {
            return HsStatus::HsInvalidArgument;
        }
        let policy = if frozen_sigma.is_nan() {
            ThreePointPolicy::Adaptive
        } else if frozen_sigma >= 0.0 {
            ThreePointPolicy::FrozenSigma(frozen_sigma)
        } else {
            return HsStatus::HsInvalidArgument;
        };
        let traj = run_three_point_loop(theta_bar, p0, gamma, policy, iterations);
        let dst = unsafe { std::slice::from_raw_parts_mut(out_p, iterations + 1) };
        for (d, p) in dst.iter_mut().zip(&traj) {
            *d = *p;
        }
        HsStatus::HsOk
    })
}
