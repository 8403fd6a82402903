//! Run configuration with calibrated defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{CircleSceneConfig, Window};
use crate::sls::SynthesisMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub dt: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { dt: 0.1 }
    }
}

/// Circular orbit around the window centre, traversed counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    /// Orbit radius in position units.
    pub radius: f64,
    /// Steps per revolution.
    pub period: usize,
    /// Bound on the uniform perturbation `||v_k||_inf` added to the orbit.
    pub perturbation: f64,
    /// Lower bound on `r_ref`, the distance from the reference to the
    /// training data. The value used is the larger of this and the distance
    /// measured on the dataset.
    pub r_ref: Option<f64>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { radius: 700.0, period: 12_000, perturbation: 0.1, r_ref: None }
    }
}

/// Full-information LQR rollout that produces the training states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub steps: usize,
    /// Keep every `stride`-th state.
    pub stride: usize,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { steps: 12_000, stride: 3, q_diag: vec![100.0, 0.1, 100.0, 0.1], r_diag: vec![1.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    /// Ridge weight per pixel; the fit uses this times the pixel count.
    pub ridge_per_pixel: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self { ridge_per_pixel: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyConfig {
    /// Validity radius `r` of the slope bound.
    pub radius: f64,
    /// Grid pitch as a fraction of `r`.
    pub epsilon_fraction: f64,
    /// Assumed minimum distance of the slope maximizer, as a fraction of `r`.
    pub tau_fraction: f64,
    /// Local Lipschitz constant of the error; when absent it is estimated
    /// as `lipschitz_factor` times the largest difference quotient between
    /// neighbouring grid points.
    pub lipschitz: Option<f64>,
    pub lipschitz_factor: f64,
    /// Estimate slopes around every `center_stride`-th training point.
    pub center_stride: usize,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self { radius: 10.0, epsilon_fraction: 0.1, tau_fraction: 0.8, lipschitz: None, lipschitz_factor: 1.5, center_stride: 1 }
    }
}

/// Weights shared by the response-space programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub horizon: usize,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { horizon: 200, q_diag: vec![1.0, 0.01, 1.0, 0.01], r_diag: vec![0.01, 0.01] }
    }
}

/// Nominal LQG baseline. Noise levels default to the reference increment
/// bound and the training error, i.e. the sensor is trusted as much as the
/// training data suggests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqgConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    /// Process-noise level; defaults to `Delta_ref`.
    pub process_std: Option<f64>,
    /// Measurement-noise level; defaults to `R0`.
    pub measurement_std: Option<f64>,
    /// Added to every state of the process covariance, relative to the
    /// process variance, so the filter Riccati equation has a stabilizing
    /// solution.
    pub process_floor: f64,
}

impl Default for LqgConfig {
    fn default() -> Self {
        Self {
            q_diag: vec![1.0, 0.01, 1.0, 0.01],
            r_diag: vec![0.01, 0.01],
            process_std: None,
            measurement_std: None,
            process_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub count: usize,
    pub horizon: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { count: 200, horizon: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NecessityConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Tested caps as multiples of `1/S`.
    pub alpha_factors: Vec<f64>,
}

impl Default for NecessityConfig {
    fn default() -> Self {
        Self { dt: 0.5, horizon: 60, alpha_factors: vec![0.8, 0.9, 0.95, 0.99, 1.0, 1.05, 1.1, 1.2] }
    }
}

/// Probes for the error-versus-distance profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub probes: usize,
    /// Largest per-axis offset of a probe from its training point.
    pub max_offset: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { probes: 2000, max_offset: 30.0 }
    }
}

/// Overrides applied by the `fast` profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FastProfile {
    pub rollouts: usize,
    pub horizon: usize,
    pub safety_stride: usize,
}

impl Default for FastProfile {
    fn default() -> Self {
        Self { rollouts: 200, horizon: 60, safety_stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub scene: CircleSceneConfig,
    pub reference: ReferenceConfig,
    pub training: TrainingConfig,
    pub perception: PerceptionConfig,
    pub safety: SafetyConfig,
    pub synthesis: SynthesisConfig,
    pub lqg: LqgConfig,
    pub rollouts: RolloutConfig,
    pub controllers: Vec<SynthesisMode>,
    pub necessity: NecessityConfig,
    pub profile: ProfileConfig,
    pub fast: FastProfile,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            system: SystemConfig::default(),
            scene: CircleSceneConfig { window: Window::centered(1000.0), ..CircleSceneConfig::default() },
            reference: ReferenceConfig::default(),
            training: TrainingConfig::default(),
            perception: PerceptionConfig::default(),
            safety: SafetyConfig::default(),
            synthesis: SynthesisConfig::default(),
            lqg: LqgConfig::default(),
            rollouts: RolloutConfig::default(),
            controllers: vec![
                SynthesisMode::Lqg,
                SynthesisMode::NominalL1,
                SynthesisMode::RobustL1,
                SynthesisMode::RobustH2,
            ],
            necessity: NecessityConfig::default(),
            profile: ProfileConfig::default(),
            fast: FastProfile::default(),
        }
    }
}

fn check_weights(name: &str, w: &[f64], len: usize) -> Result<()> {
    if w.len() != len || w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("{name}: need {len} finite nonnegative entries")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Copy with the `fast` overrides applied.
    pub fn fast_profile(&self) -> Self {
        let mut c = self.clone();
        c.rollouts.count = self.fast.rollouts;
        c.synthesis.horizon = self.fast.horizon;
        c.safety.center_stride = self.fast.safety_stride;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate().map_err(|e| Error::InvalidArgument(format!("scene: {e}")))?;
        if !(self.system.dt > 0.0) {
            return Err(Error::InvalidArgument("system.dt must be positive".into()));
        }
        let r = &self.reference;
        if !(r.radius > 0.0) || r.period < 3 {
            return Err(Error::InvalidArgument("reference: radius must be positive and period at least 3".into()));
        }
        if !(r.perturbation >= 0.0) || r.r_ref.is_some_and(|v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("reference: perturbation and r_ref must be nonnegative".into()));
        }
        if self.training.steps == 0 || self.training.stride == 0 {
            return Err(Error::InvalidArgument("training.steps and training.stride must be positive".into()));
        }
        check_weights("training.q_diag", &self.training.q_diag, 4)?;
        check_weights("training.r_diag", &self.training.r_diag, 2)?;
        check_weights("synthesis.q_diag", &self.synthesis.q_diag, 4)?;
        check_weights("synthesis.r_diag", &self.synthesis.r_diag, 2)?;
        check_weights("lqg.q_diag", &self.lqg.q_diag, 4)?;
        check_weights("lqg.r_diag", &self.lqg.r_diag, 2)?;
        if !(self.perception.ridge_per_pixel >= 0.0) {
            return Err(Error::InvalidArgument("perception.ridge_per_pixel must be nonnegative".into()));
        }
        let s = &self.safety;
        if !(s.radius > 0.0)
            || !(s.epsilon_fraction > 0.0 && s.epsilon_fraction <= 1.0)
            || !(s.tau_fraction > 0.0 && s.tau_fraction <= 1.0)
            || !(s.lipschitz_factor >= 1.0)
            || s.lipschitz.is_some_and(|l| !(l >= 0.0))
            || s.center_stride == 0
            || self.fast.safety_stride == 0
        {
            return Err(Error::InvalidArgument(
                "safety: need radius > 0, epsilon_fraction and tau_fraction in (0, 1], lipschitz_factor >= 1, lipschitz >= 0, strides >= 1"
                    .into(),
            ));
        }
        if self.synthesis.horizon < 2 || self.fast.horizon < 2 {
            return Err(Error::InvalidArgument("synthesis horizons must be at least 2".into()));
        }
        if self.rollouts.count == 0 || self.fast.rollouts == 0 || self.rollouts.horizon == 0 {
            return Err(Error::InvalidArgument("rollout count and horizon must be positive".into()));
        }
        if !(self.necessity.dt > 0.0) || self.necessity.alpha_factors.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument("necessity: dt and alpha factors must be positive".into()));
        }
        if !(self.profile.max_offset >= 0.0) {
            return Err(Error::InvalidArgument("profile.max_offset must be nonnegative".into()));
        }
        Ok(())
    }
}
