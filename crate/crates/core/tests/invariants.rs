//! Property tests for the safe set, slope estimates, rollout statistics and
//! rendering.

use nalgebra::{DMatrix, DVector};
use percept_core::experiments::necessity::{StabilityVerdict, UNSTABLE_MARGIN};
use percept_core::experiments::rollout::quartiles;
use percept_core::perception::{generate_dataset, render_circle, CircleSceneConfig, LinearPerceptionMap, PerceptionDataset, Window};
use percept_core::safety::{corrected_slope, max_slope_on_grid, SafeSet, SafeSetParams};
use proptest::prelude::*;

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// Five training points with a map whose bias gives nonzero residuals.
fn world(bias: (f64, f64)) -> (PerceptionDataset, LinearPerceptionMap) {
    let scene = CircleSceneConfig { window: Window::centered(4.0), ..Default::default() };
    let states = vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(0.0, 1.0), v2(-1.5, 0.5), v2(2.0, -2.0)];
    let ds = generate_dataset(&states, &DMatrix::identity(2, 2), &scene, 0, "five points").unwrap();
    let map = LinearPerceptionMap {
        weights: DMatrix::zeros(2, scene.pixel_count()),
        bias: v2(bias.0, bias.1),
        ridge: 0.0,
        width: scene.width,
        height: scene.height,
        min_norm: false,
    };
    (ds, map)
}

fn params(gamma: f64, slope: f64) -> SafeSetParams {
    SafeSetParams { r: 1.0, slope, r0: 0.0, gamma, epsilon: 0.1, tau: 0.5, lipschitz: 1.0 }
}

/// Piecewise-smooth test error with a kink and a curved part.
fn bumpy(x: &DVector<f64>) -> DVector<f64> {
    v2((x[0] - 0.3).abs() + 0.2 * x[1] * x[1], (3.0 * x[0]).sin() * 0.5 - x[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acceptance_grows_with_gamma(
        bx in -0.5f64..0.5, by in -0.5f64..0.5,
        g in 0.0f64..2.0, extra in 0.0f64..1.0, s in 0.0f64..2.0,
        px in -3.0f64..3.0, py in -3.0f64..3.0,
    ) {
        let (ds, map) = world((bx, by));
        let small = SafeSet::new(params(g, s), &ds, &map).unwrap();
        let large = SafeSet::new(params(g + extra, s), &ds, &map).unwrap();
        let p = v2(px, py);
        if small.witness(&p).is_some() {
            prop_assert!(large.witness(&p).is_some());
        }
    }

    #[test]
    fn acceptance_shrinks_with_slope(
        g in 0.0f64..2.0, s in 0.0f64..2.0, extra in 0.0f64..1.0,
        px in -3.0f64..3.0, py in -3.0f64..3.0,
    ) {
        let (ds, map) = world((0.1, -0.2));
        let steep = SafeSet::new(params(g, s + extra), &ds, &map).unwrap();
        let flat = SafeSet::new(params(g, s), &ds, &map).unwrap();
        let p = v2(px, py);
        if steep.witness(&p).is_some() {
            prop_assert!(flat.witness(&p).is_some());
        }
    }

    #[test]
    fn accepted_points_satisfy_the_membership_inequality(
        bx in -0.5f64..0.5, g in 0.0f64..2.0, s in 0.0f64..2.0,
        px in -3.0f64..3.0, py in -3.0f64..3.0,
    ) {
        let (ds, map) = world((bx, 0.0));
        let set = SafeSet::new(params(g, s), &ds, &map).unwrap();
        let p = v2(px, py);
        if let Some(i) = set.witness(&p) {
            let d = (&p - ds.position(i)).amax();
            prop_assert!(d <= 1.0);
            prop_assert!(set.residual_norm(i) + s * d <= g);
        }
    }

    #[test]
    fn slope_is_nondecreasing_in_radius(cx in -1.0f64..1.0, cy in -1.0f64..1.0, steps in 1usize..6, grow in 1usize..4) {
        // Same dyadic pitch, so the larger grid contains the smaller one exactly.
        let pitch = 0.125;
        let r = pitch * steps as f64;
        let f = |x: &DVector<f64>| Ok(bumpy(x));
        let small = max_slope_on_grid(f, &v2(cx, cy), r, pitch).unwrap();
        let large = max_slope_on_grid(f, &v2(cx, cy), r + pitch * grow as f64, pitch).unwrap();
        prop_assert!(large.slope >= small.slope);
    }

    #[test]
    fn corrected_slope_dominates_observed(obs in 0.0f64..10.0, eps in 0.0f64..1.0, tau in 0.01f64..5.0, l in 0.0f64..10.0) {
        prop_assert!(corrected_slope(obs, eps, tau, l).unwrap() >= obs);
    }

    #[test]
    fn quartiles_are_ordered(data in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 1..30), 1..12)) {
        let horizon = data.iter().map(Vec::len).max().unwrap();
        let views: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        for row in quartiles(&views, horizon) {
            prop_assert!(row.q1 <= row.median && row.median <= row.q3, "{row:?}");
        }
    }

    #[test]
    fn unstable_verdict_iff_radius_above_margin(rho in 0.0f64..2.0) {
        let unstable = StabilityVerdict::from_radius(rho) == StabilityVerdict::Unstable;
        prop_assert_eq!(unstable, rho > 1.0 + UNSTABLE_MARGIN);
    }

    #[test]
    fn rendered_pixels_lie_in_unit_interval(x in -2000.0f64..2000.0, y in -2000.0f64..2000.0) {
        let img = render_circle(&v2(x, y), &CircleSceneConfig::default());
        prop_assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(&img, &render_circle(&v2(x, y), &CircleSceneConfig::default()));
    }
}
