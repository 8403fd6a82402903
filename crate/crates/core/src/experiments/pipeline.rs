//! Stages shared by the experiments and the command-line pipeline.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::lti::{double_integrator, lqg_controller, lqr_gain, Controller, LtiSystem, StateSpaceController};
use crate::perception::{fit_linear_map, generate_dataset, LinearPerceptionMap, PerceptionDataset};
use crate::safety::{corrected_slope, estimate_slopes, nearest_position, training_error, SlopeEstimate};
use crate::sls::{
    position_embedding, tracking_error_system, xe_norm, ResponseQuartet, SlsController, SynthesisMode, SynthesisResult,
    SynthesisSpec,
};

/// Planar double integrator with `C` extracting the two positions.
pub fn plant(cfg: &ExperimentConfig) -> Result<LtiSystem> {
    double_integrator(cfg.system.dt, 2)
}

/// Tracking-error plant `x = xi - E r` driven by reference increments.
pub fn error_plant(cfg: &ExperimentConfig) -> Result<LtiSystem> {
    let sys = plant(cfg)?;
    let e = position_embedding(&sys);
    tracking_error_system(&sys, &e)
}

/// Orbit position at step `k` (fractional phase offset `phase` in turns).
pub fn orbit_point(cfg: &ExperimentConfig, k: usize, phase: f64) -> DVector<f64> {
    let (cx, cy) = cfg.scene.window.center();
    let th = 2.0 * PI * (k as f64 / cfg.reference.period as f64 + phase);
    let rho = cfg.reference.radius;
    DVector::from_vec(vec![cx + rho * th.cos(), cy + rho * th.sin()])
}

/// `len` orbit samples plus independent uniform perturbations with
/// `||v_k||_inf <= perturbation`.
pub fn perturbed_reference(cfg: &ExperimentConfig, len: usize, phase: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let b = cfg.reference.perturbation;
    (0..len)
        .map(|k| {
            let v = DVector::from_fn(2, |_, _| if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 });
            orbit_point(cfg, k, phase) + v
        })
        .collect()
}

/// Training states from a full-information LQR rollout tracking the
/// perturbed orbit, `u_k = K (xi_k - E w_k)`, starting at rest on the orbit.
pub fn training_states(cfg: &ExperimentConfig) -> Result<Vec<DVector<f64>>> {
    let sys = plant(cfg)?;
    let e = position_embedding(&sys);
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.training.q_diag));
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.training.r_diag));
    let k = lqr_gain(&sys.a, &sys.b, &q, &r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reference = perturbed_reference(cfg, cfg.training.steps, 0.0, &mut rng);
    let mut xi = &e * orbit_point(cfg, 0, 0.0);
    let mut out = Vec::with_capacity(cfg.training.steps / cfg.training.stride + 1);
    for (t, w) in reference.iter().enumerate() {
        if t % cfg.training.stride == 0 {
            out.push(xi.clone());
        }
        let u = &k * (&xi - &e * w);
        xi = &sys.a * &xi + &sys.b * u;
    }
    Ok(out)
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<PerceptionDataset> {
    let sys = plant(cfg)?;
    let states = training_states(cfg)?;
    let description = format!(
        "LQR tracking of a radius-{} orbit ({} steps per turn) with |v|_inf <= {}, {} steps, every {} kept",
        cfg.reference.radius, cfg.reference.period, cfg.reference.perturbation, cfg.training.steps, cfg.training.stride
    );
    generate_dataset(&states, &sys.c, &cfg.scene, cfg.seed, &description)
}

pub fn train_map(cfg: &ExperimentConfig, ds: &PerceptionDataset) -> Result<LinearPerceptionMap> {
    fit_linear_map(ds, cfg.perception.ridge_per_pixel * cfg.scene.pixel_count() as f64)
}

/// `Delta_ref`: largest chord between consecutive orbit samples plus twice
/// the perturbation bound.
pub fn reference_increment_bound(cfg: &ExperimentConfig) -> f64 {
    let half_angle = PI / cfg.reference.period as f64;
    let chord = 2.0 * cfg.reference.radius * half_angle.sin();
    // l_inf chord never exceeds the Euclidean one
    chord + 2.0 * cfg.reference.perturbation
}

/// `r_ref`: largest distance from an orbit sample to the training positions.
pub fn reference_training_distance(cfg: &ExperimentConfig, positions: &[DVector<f64>]) -> f64 {
    (0..cfg.reference.period)
        .map(|k| nearest_position(positions, &orbit_point(cfg, k, 0.0)).0)
        .fold(0.0, f64::max)
}

/// Data-dependent quantities entering the robust programs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SafetyCalibration {
    pub r0: f64,
    pub radius: f64,
    pub slope: SlopeEstimate,
    /// `"configured"` or `"estimated"`.
    pub lipschitz_source: String,
    /// Largest neighbour difference quotient seen on the slope grids.
    pub max_local_quotient: f64,
    pub delta_ref: f64,
    pub r_ref: f64,
}

impl SafetyCalibration {
    pub fn corrected_slope(&self) -> f64 {
        self.slope.corrected
    }
}

pub fn calibrate_safety(
    cfg: &ExperimentConfig,
    ds: &PerceptionDataset,
    map: &LinearPerceptionMap,
) -> Result<SafetyCalibration> {
    let r = cfg.safety.radius;
    let eps = cfg.safety.epsilon_fraction * r;
    let tau = cfg.safety.tau_fraction * r;
    let centers: Vec<usize> = (0..ds.len()).step_by(cfg.safety.center_stride).collect();
    let mut slope = estimate_slopes(map, &cfg.scene, ds, Some(&centers), r, eps, tau, 0.0)?;
    let max_local_quotient = slope.per_point.iter().map(|(_, s)| s.local_quotient).fold(0.0, f64::max);
    let (lipschitz, source) = match cfg.safety.lipschitz {
        Some(l) => (l, "configured"),
        None => (cfg.safety.lipschitz_factor * max_local_quotient, "estimated"),
    };
    slope.lipschitz = lipschitz;
    slope.corrected = corrected_slope(slope.max_observed(), eps, tau, lipschitz)?;
    Ok(SafetyCalibration {
        r0: training_error(ds, map)?,
        radius: r,
        slope,
        lipschitz_source: source.into(),
        max_local_quotient,
        delta_ref: reference_increment_bound(cfg),
        r_ref: reference_training_distance(cfg, &ds.positions()).max(cfg.reference.r_ref.unwrap_or(0.0)),
    })
}

/// Program specification for a response-space controller. The nominal L1
/// program weighs disturbances by `Delta_ref` and sensor errors by `R0`.
pub fn synthesis_spec(cfg: &ExperimentConfig, cal: &SafetyCalibration, mode: SynthesisMode) -> SynthesisSpec {
    let robust = matches!(mode, SynthesisMode::RobustL1 | SynthesisMode::RobustH2);
    SynthesisSpec {
        horizon: cfg.synthesis.horizon,
        q_diag: cfg.synthesis.q_diag.clone(),
        r_diag: cfg.synthesis.r_diag.clone(),
        eps_w: cal.delta_ref,
        eps_e: cal.r0.max(1e-9),
        delta_ref: cal.delta_ref,
        r_ref: cal.r_ref,
        radius: if robust { cal.radius } else { 0.0 },
        slope: cal.corrected_slope(),
        r0: cal.r0,
        alpha: None,
        mode,
    }
}

/// Certainty-equivalent LQG on the tracking-error plant with process
/// covariance `sigma_w^2 (H H' + floor I)` and measurement covariance
/// `sigma_e^2 I`.
pub fn lqg_baseline(cfg: &ExperimentConfig, cal: &SafetyCalibration) -> Result<StateSpaceController> {
    let sys = error_plant(cfg)?;
    let sw = cfg.lqg.process_std.unwrap_or(cal.delta_ref);
    let se = cfg.lqg.measurement_std.unwrap_or(cal.r0.max(1e-9));
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.lqg.q_diag));
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.lqg.r_diag));
    let n = sys.n();
    let w = (&sys.h * sys.h.transpose() + DMatrix::identity(n, n) * cfg.lqg.process_floor) * (sw * sw);
    let v = DMatrix::identity(sys.l(), sys.l()) * (se * se);
    lqg_controller(&sys, &q, &r, &w, &v)
}

/// A controller ready to be simulated, with the norm `||C Phi_xe||` of its
/// closed loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlLaw {
    Responses { quartet: ResponseQuartet },
    StateSpace { controller: StateSpaceController },
}

/// Stored form of one synthesized controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerArtifact {
    pub mode: SynthesisMode,
    pub law: Option<ControlLaw>,
    /// Synthesis outcome for response-space programs.
    pub synthesis: Option<SynthesisResult>,
    /// `||C Phi_xe||` of the closed loop (impulse response summed over
    /// `norm_horizon` taps for state-space laws); absent when synthesis
    /// produced no controller.
    pub xe_norm: Option<f64>,
    pub norm_horizon: usize,
}

impl ControlLaw {
    pub fn instantiate(&self) -> Result<Box<dyn Controller + Send>> {
        Ok(match self {
            ControlLaw::Responses { quartet } => Box::new(SlsController::new(quartet)?),
            ControlLaw::StateSpace { controller } => {
                let mut c = controller.clone();
                c.reset();
                Box::new(c)
            }
        })
    }
}

/// Taps used to sum the impulse response of state-space baselines.
pub const BASELINE_NORM_HORIZON: usize = 4000;

pub fn build_controller(cfg: &ExperimentConfig, cal: &SafetyCalibration, mode: SynthesisMode) -> Result<ControllerArtifact> {
    let sys = error_plant(cfg)?;
    match mode {
        SynthesisMode::Lqg => {
            let ctrl = lqg_baseline(cfg, cal)?;
            let q = ResponseQuartet::from_closed_loop(&sys, &ctrl, BASELINE_NORM_HORIZON)?;
            let tail = q.phi_xe.tap(BASELINE_NORM_HORIZON).amax();
            if !(tail < 1e-9) {
                return Err(Error::Numerical(format!(
                    "LQG impulse response has not decayed after {BASELINE_NORM_HORIZON} taps (last tap {tail:.2e})"
                )));
            }
            Ok(ControllerArtifact {
                mode,
                xe_norm: Some(xe_norm(&q, &sys.c)?),
                law: Some(ControlLaw::StateSpace { controller: ctrl }),
                synthesis: None,
                norm_horizon: BASELINE_NORM_HORIZON,
            })
        }
        _ => {
            let spec = synthesis_spec(cfg, cal, mode);
            let res = crate::sls::synthesize(&sys, &spec)?;
            let (law, norm) = match &res.quartet {
                Some(q) => (Some(ControlLaw::Responses { quartet: q.clone() }), Some(xe_norm(q, &sys.c)?)),
                None => (None, None),
            };
            Ok(ControllerArtifact { mode, law, synthesis: Some(res), xe_norm: norm, norm_horizon: spec.horizon })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.reference.period = 400;
        c.reference.radius = 30.0;
        c.scene.window = crate::perception::Window::centered(45.0);
        c.training.steps = 400;
        c.training.stride = 4;
        c
    }

    #[test]
    fn orbit_closes_and_increments_are_bounded() {
        let c = small();
        let p0 = orbit_point(&c, 0, 0.0);
        assert!((orbit_point(&c, c.reference.period, 0.0) - &p0).amax() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = perturbed_reference(&c, 2 * c.reference.period, 0.25, &mut rng);
        let bound = reference_increment_bound(&c);
        assert!(r.windows(2).all(|w| (&w[1] - &w[0]).amax() <= bound + 1e-12));
        let max_v = (0..r.len()).map(|k| (&r[k] - orbit_point(&c, k, 0.25)).amax()).fold(0.0, f64::max);
        assert!(max_v <= 0.1 && max_v > 0.09);
    }

    #[test]
    fn training_rollout_follows_the_orbit() {
        let c = small();
        let states = training_states(&c).unwrap();
        assert_eq!(states.len(), 100);
        let sys = plant(&c).unwrap();
        let pos: Vec<_> = states.iter().map(|s| &sys.c * s).collect();
        let worst = pos.iter().map(|p| ((p[0].powi(2) + p[1].powi(2)).sqrt() - 30.0).abs()).fold(0.0, f64::max);
        assert!(worst < 3.0, "radial deviation {worst}");
        assert!(reference_training_distance(&c, &pos) < 3.0);
        // same seed, same states
        assert_eq!(training_states(&c).unwrap(), states);
    }
}
