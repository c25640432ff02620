//! Model parameters and the closed-form per-user primitives: fidelity error,
//! communication cost, AI output, and utility loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("sigma_pop must be > 0, got {0}")]
    SigmaPop(f64),
    #[error("sigma_ai must be > 0, got {0}")]
    SigmaAi(f64),
    #[error("cost_interact must be >= 0, got {0}")]
    CostInteract(f64),
    #[error("cost_manual must be > 0, got {0}")]
    CostManual(f64),
    #[error("temperature must be >= 0, got {0}")]
    Temperature(f64),
    #[error("{0} must be finite")]
    NotFinite(&'static str),
}

/// Parameters of the interaction model.
///
/// The population of user preferences is N(`mu_pop`, `sigma_pop`²); the AI
/// holds a (possibly different) normal prior N(`mu_ai`, `sigma_ai`²).
/// `cost_interact` is the utility price per nat of information shared with
/// the AI, `cost_manual` the fixed loss of doing the task without it, and
/// `temperature` the sd of noise the AI adds on top of its posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu_pop: f64,
    pub sigma_pop: f64,
    pub mu_ai: f64,
    pub sigma_ai: f64,
    pub cost_interact: f64,
    /// May be `f64::INFINITY` (manual completion unavailable).
    pub cost_manual: f64,
    pub temperature: f64,
}

impl ModelParams {
    pub fn new(
        mu_pop: f64,
        sigma_pop: f64,
        mu_ai: f64,
        sigma_ai: f64,
        cost_interact: f64,
        cost_manual: f64,
        temperature: f64,
    ) -> Result<Self, ParamError> {
        let p = Self {
            mu_pop,
            sigma_pop,
            mu_ai,
            sigma_ai,
            cost_interact,
            cost_manual,
            temperature,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unbiased AI prior matching the population, no temperature.
    pub fn unbiased(mu: f64, sigma: f64, cost_interact: f64, cost_manual: f64) -> Self {
        Self {
            mu_pop: mu,
            sigma_pop: sigma,
            mu_ai: mu,
            sigma_ai: sigma,
            cost_interact,
            cost_manual,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !self.mu_pop.is_finite() {
            return Err(ParamError::NotFinite("mu_pop"));
        }
        if !self.mu_ai.is_finite() {
            return Err(ParamError::NotFinite("mu_ai"));
        }
        if !(self.sigma_pop > 0.0) || !self.sigma_pop.is_finite() {
            return Err(ParamError::SigmaPop(self.sigma_pop));
        }
        if !(self.sigma_ai > 0.0) || !self.sigma_ai.is_finite() {
            return Err(ParamError::SigmaAi(self.sigma_ai));
        }
        if !(self.cost_interact >= 0.0) || !self.cost_interact.is_finite() {
            return Err(ParamError::CostInteract(self.cost_interact));
        }
        if !(self.cost_manual > 0.0) {
            return Err(ParamError::CostManual(self.cost_manual));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(ParamError::Temperature(self.temperature));
        }
        Ok(())
    }

    /// True when the AI prior coincides with the population distribution.
    pub fn is_unbiased(&self) -> bool {
        self.mu_ai == self.mu_pop && self.sigma_ai == self.sigma_pop
    }

    pub fn pop_var(&self) -> f64 {
        self.sigma_pop * self.sigma_pop
    }

    pub fn ai_var(&self) -> f64 {
        self.sigma_ai * self.sigma_ai
    }

    pub fn temp_var(&self) -> f64 {
        self.temperature * self.temperature
    }

    /// Expected squared gap between the AI's output and the preference
    /// `theta` at signal weight `w`:
    /// `w(1-w)·sigma_ai² + w²·(mu_ai - theta)² + temperature²`.
    pub fn fidelity_error(&self, theta: f64, w: f64) -> f64 {
        let u = self.mu_ai - theta;
        w * (1.0 - w) * self.ai_var() + w * w * u * u + self.temp_var()
    }

    /// Mutual information (nats) between the preference and the signal,
    /// measured against the population distribution. 0 at `w = 1`,
    /// +inf at `w = 0`; in the unbiased case this is `-ln(w)/2`.
    pub fn comm_cost(&self, w: f64) -> f64 {
        if w >= 1.0 {
            return 0.0;
        }
        if w <= 0.0 {
            return f64::INFINITY;
        }
        // sigma_u² = sigma_ai²·w/(1-w); the ratio below is
        // sigma_u²/(sigma_pop² + sigma_u²) rearranged to avoid infinities.
        let a = self.ai_var() * w;
        let ratio = a / (a + self.pop_var() * (1.0 - w));
        -0.5 * ratio.ln()
    }

    /// The AI's output for signal realization `s` at weight `w`:
    /// `(1-w)·s + w·mu_ai`, plus an optional sampled temperature draw.
    pub fn ai_output(&self, s: f64, w: f64, temperature_draw: Option<f64>) -> f64 {
        (1.0 - w) * s + w * self.mu_ai + temperature_draw.unwrap_or(0.0)
    }

    /// Expected utility loss of interacting at weight `w`:
    /// fidelity error plus `cost_interact` per nat of information.
    /// +inf at `w = 0` when `cost_interact > 0` (0·inf treated as 0).
    pub fn utility_loss(&self, theta: f64, w: f64) -> f64 {
        let q = self.fidelity_error(theta, w);
        if self.cost_interact == 0.0 {
            return q;
        }
        q + self.cost_interact * self.comm_cost(w)
    }

    /// Mean and variance of the AI's output conditional on the preference:
    /// `((1-w)·theta + w·mu_ai, w(1-w)·sigma_ai² + temperature²)`.
    pub fn expected_output_and_variance(&self, theta: f64, w: f64) -> (f64, f64) {
        let mean = (1.0 - w) * theta + w * self.mu_ai;
        let var = w * (1.0 - w) * self.ai_var() + self.temp_var();
        (mean, var)
    }
}

/// A user's chosen signal precision, canonically parameterized by the
/// posterior weight `w = sigma_u²/(sigma_ai² + sigma_u²)` placed on the AI's
/// prior mean. `w = 1` is the uninformative signal, `w = 0` exact revelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalChoice {
    pub weight: f64,
}

impl SignalChoice {
    pub fn from_weight(weight: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&weight),
            "weight must lie in [0,1], got {weight}"
        );
        Self { weight }
    }

    /// Build from the signal noise sd; `sigma_u` may be infinite.
    pub fn from_sigma_u(sigma_u: f64, sigma_ai: f64) -> Self {
        assert!(sigma_u >= 0.0 && sigma_ai > 0.0);
        let weight = if sigma_u.is_infinite() {
            1.0
        } else {
            let v = sigma_u * sigma_u;
            v / (sigma_ai * sigma_ai + v)
        };
        Self { weight }
    }

    /// Signal noise sd implied by the weight: `sigma_ai·sqrt(w/(1-w))`,
    /// infinite at `w = 1`, zero at `w = 0`.
    pub fn sigma_u(&self, sigma_ai: f64) -> f64 {
        if self.weight >= 1.0 {
            f64::INFINITY
        } else {
            sigma_ai * (self.weight / (1.0 - self.weight)).sqrt()
        }
    }
}

/// How a user ends up completing the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Uninformative signal; the AI returns its prior mean.
    DefaultOutput,
    /// Informative signal shared with the AI.
    InteractiveAI,
    /// Task done without the AI at fixed cost.
    Manual,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::DefaultOutput => "default",
            Regime::InteractiveAI => "interactive",
            Regime::Manual => "manual",
        }
    }
}

/// Solved outcome for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub regime: Regime,
    /// Absent for manual users.
    pub signal: Option<SignalChoice>,
    pub fidelity_error: f64,
    pub comm_cost: f64,
    /// min(fidelity error + cost_interact · comm cost, cost_manual).
    pub utility_loss: f64,
    pub expected_output: f64,
    pub conditional_output_variance: f64,
}
