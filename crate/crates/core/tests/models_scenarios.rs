mod common;

use belief_simplify::belief::{make_index_chain, normalize_weights, BeliefError, SimplificationSchedule, WeightedParticleBelief};
use belief_simplify::entropy::discrete_weight_entropy;
use belief_simplify::given_tree::node_count;
use belief_simplify::models::{
    pf_update, sample_observation, transition_density_max, Action, BeaconMean, BeaconObservationModel, BeaconScale,
    GaussianDriftModel, LinearGaussianObservation, ObservationModel, TransitionModel,
};
use belief_simplify::scenarios::{build_problem, gaussian_belief, kde_entropy, KalmanFilter, ScenarioError};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn normalization_examples() {
    let b = WeightedParticleBelief::new(1, vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0]).unwrap();
    let n = normalize_weights(&b).unwrap();
    assert_eq!(n.raw_weights(), &[0.25, 0.0, 0.75]);
    let again = normalize_weights(&n).unwrap();
    assert_eq!(again, n);
    assert_eq!(
        WeightedParticleBelief::new(1, vec![0.0, 1.0], vec![0.0, 0.0]).and_then(|b| normalize_weights(&b)).unwrap_err(),
        BeliefError::AllWeightsZero
    );
}

#[test]
fn ten_level_grid_of_one_hundred_particles() {
    let schedule = SimplificationSchedule::uniform(100, 10).unwrap();
    assert_eq!(schedule.level_sizes(), (1..=10).map(|s| 10 * s).collect::<Vec<_>>().as_slice());
    let chain = make_index_chain(100, &schedule, &mut rng(4)).unwrap();
    let sets = chain.sets();
    assert_eq!(sets.len(), 10);
    for w in sets.windows(2) {
        let (small, big) = (w[0].indices(), w[1].indices());
        assert_eq!(small.len() + 10, big.len());
        assert!(small.iter().all(|i| big.contains(i)));
    }
    let mut all = sets[9].indices().to_vec();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}

#[test]
fn two_level_chain_tops_out_at_every_index() {
    let schedule = SimplificationSchedule::new(vec![2, 4]).unwrap();
    let chain = make_index_chain(4, &schedule, &mut rng(1)).unwrap();
    let mut top = chain.level(2).unwrap().indices().to_vec();
    top.sort_unstable();
    assert_eq!(top, vec![0, 1, 2, 3]);
    assert_eq!(make_index_chain(4, &schedule, &mut rng(1)).unwrap(), chain);
}

proptest! {
    #[test]
    fn chains_nest_strictly(seed in any::<u64>(), n_x in 1usize..200, frac in 0.0f64..1.0) {
        let n_max = 1 + ((n_x - 1) as f64 * frac) as usize;
        let schedule = SimplificationSchedule::uniform(n_x, n_max).unwrap();
        let chain = make_index_chain(n_x, &schedule, &mut rng(seed)).unwrap();
        let sets = chain.sets();
        for w in sets.windows(2) {
            prop_assert!(w[0].len() < w[1].len());
            prop_assert!(w[0].indices().iter().all(|i| w[1].indices().contains(i)));
        }
        prop_assert_eq!(sets.last().unwrap().len(), n_x);
        prop_assert_eq!(make_index_chain(n_x, &schedule, &mut rng(seed)).unwrap(), chain);
    }

    #[test]
    fn update_keeps_count_and_normalizes(seed in any::<u64>(), n_x in 1usize..60) {
        let mut r = rng(seed);
        let prior = gaussian_belief::<f64>(&[0.0, 0.0], &[1.0, 1.0], n_x, &mut r).unwrap();
        let tr = GaussianDriftModel::isotropic(2, 0.3).unwrap();
        let ob = LinearGaussianObservation::new(2, 0.5).unwrap();
        let a = Action::new(0, "a", vec![0.2, 0.1]);
        let z = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let post = pf_update(&prior, &a, &z, &tr, &ob, &mut rng(seed ^ 1)).unwrap();
        prop_assert_eq!(post.len(), n_x);
        let total: f64 = post.normalized_weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let again = pf_update(&prior, &a, &z, &tr, &ob, &mut rng(seed ^ 1)).unwrap();
        prop_assert_eq!(again, post);
    }
}

#[test]
fn particle_update_matches_kalman_posterior_mean() {
    let (sigma_t, sigma_o) = (0.4, 0.6);
    let n_x = 5000;
    let mut r = rng(2024);
    let prior = gaussian_belief::<f64>(&[0.0, 0.0], &[1.0, 1.0], n_x, &mut r).unwrap();
    let tr = GaussianDriftModel::isotropic(2, sigma_t).unwrap();
    let ob = LinearGaussianObservation::new(2, sigma_o).unwrap();
    let a = Action::new(0, "a", vec![1.0, -0.5]);
    let z = [1.3, -0.2];
    let post = pf_update(&prior, &a, &z, &tr, &ob, &mut r).unwrap();

    let mut kf = KalmanFilter::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    kf.predict(&[1.0, -0.5], sigma_t * sigma_t);
    kf.update(&z, sigma_o * sigma_o).unwrap();

    let w = post.normalized_weights();
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    let mean = post.mean();
    for k in 0..2 {
        let se = (kf.cov[(k, k)] / ess).sqrt();
        assert!((mean[k] - kf.mean[k]).abs() < 3.0 * se, "axis {k}: {} vs {} (se {se})", mean[k], kf.mean[k]);
    }
}

#[test]
fn zero_weight_particle_is_never_drawn() {
    let b = WeightedParticleBelief::new(2, vec![0.0, 0.0, 100.0, 100.0], vec![1.0, 0.0]).unwrap();
    let tr = GaussianDriftModel::isotropic(2, 0.1).unwrap();
    let ob = LinearGaussianObservation::new(2, 0.1).unwrap();
    let a = Action::new(0, "stay", vec![0.0, 0.0]);
    let mut r = rng(9);
    for _ in 0..10_000 {
        let (x, _) = sample_observation(&b, &a, &tr, &ob, &mut r);
        assert!(x[0] < 50.0);
    }
    let first = sample_observation(&b, &a, &tr, &ob, &mut rng(3));
    assert_eq!(first, sample_observation(&b, &a, &tr, &ob, &mut rng(3)));
}

#[test]
fn density_maxima_closed_forms() {
    let narrow = GaussianDriftModel::<f64>::isotropic(2, 0.1).unwrap();
    assert!((transition_density_max(&narrow).unwrap() - 15.915494309189533).abs() < 1e-12);
    let wide = GaussianDriftModel::<f64>::isotropic(2, 1.0).unwrap();
    assert!((transition_density_max(&wide).unwrap() - 0.15915494309189535).abs() < 1e-15);
}

#[test]
fn joint_density_maximum_is_product_of_planar_maxima() {
    let joint = GaussianDriftModel::<f64>::isotropic(4, 0.3).unwrap();
    let planar = 1.0 / (std::f64::consts::TAU * 0.09);
    let m = transition_density_max(&joint).unwrap();
    assert!((m - planar * planar).abs() < 1e-10 * m);
    let a = Action::new(0, "a", vec![0.5, 0.0, 0.0, 1.0]);
    let x = [0.0; 4];
    let mut best = 0.0f64;
    let steps: usize = 11;
    for i in 0..steps.pow(4) {
        let mut xp = [0.0; 4];
        let mut k = i;
        for (d, v) in xp.iter_mut().enumerate() {
            let g = (k % steps) as f64 / (steps - 1) as f64;
            *v = a.displacement[d] - 0.5 + g;
            k /= steps;
        }
        best = best.max(joint.density(&xp, &x, &a));
    }
    assert!(best <= m);
    assert!((best - m).abs() < 1e-9 * m, "grid peak {best} vs {m}");
}

#[test]
fn sampled_density_never_exceeds_maximum() {
    let tr = GaussianDriftModel::<f64>::new(vec![0.2, 0.7]).unwrap();
    let m = transition_density_max(&tr).unwrap();
    let a = Action::new(0, "a", vec![0.3, -0.3]);
    let mut r = rng(77);
    for _ in 0..1_000_000 {
        let x = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let xp = [x[0] + 0.3 + r.random_range(-0.5..0.5), x[1] - 0.3 + r.random_range(-0.5..0.5)];
        assert!(tr.density(&xp, &x, &a) <= m);
    }
}

#[test]
fn beacon_noise_scales_with_distance() {
    let ob = BeaconObservationModel::<f64>::new(
        vec![vec![0.0, 0.0], vec![10.0, 0.0]],
        0.1,
        0.05,
        BeaconMean::Relative,
        BeaconScale::Floored,
    )
    .unwrap();
    assert!((ob.noise_std(&[3.0, 4.0]) - 0.5).abs() < 1e-12);
    assert!((ob.noise_std(&[9.0, 0.0]) - 0.1).abs() < 1e-12);
    assert!((ob.noise_std(&[0.0, 0.0]) - 0.1 * 0.05).abs() < 1e-15);
    let z = [0.4, -0.2];
    let x = [3.0, 4.0];
    let direct = {
        let s: f64 = 0.5;
        let q = ((0.4 - 3.0f64).powi(2) + (-0.2 - 4.0f64).powi(2)) / (s * s);
        (-0.5 * q).exp() / (std::f64::consts::TAU * s * s)
    };
    assert!((ob.density(&z, &x) - direct).abs() < 1e-15);
}

fn target_config() -> belief_simplify::scenarios::ScenarioConfig {
    serde_json::from_value(json!({
        "name": "target_tracking",
        "beacons": [[2.0, 2.0]],
        "sigma_t": 0.1,
        "sigma_o": 0.1,
        "prior_mean": [0.0, 0.0, 3.0, 3.0],
        "prior_var": [0.1, 0.1, 0.1, 0.1],
        "horizon": 3,
        "n_z": [1, 3, 3],
        "n_x": 20,
        "target_cycle": ["up", "up", "left"],
    }))
    .unwrap()
}

#[test]
fn target_transition_factorizes_into_agent_and_target() {
    let problem = build_problem::<f64>(&target_config()).unwrap();
    let acts = problem.actions.at(2);
    assert_eq!(acts.len(), 9);
    let a = &acts[1];
    assert_eq!(&a.displacement[2..], &[-1.0, 0.0]);
    let x = [0.1, -0.2, 3.0, 2.5];
    let xp = [0.85, 0.55, 2.1, 2.45];
    let planar = |p: &[f64], m: &[f64]| {
        let q = ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)) / 0.01;
        (-0.5 * q).exp() / (std::f64::consts::TAU * 0.01)
    };
    let agent_mean = [x[0] + a.displacement[0], x[1] + a.displacement[1]];
    let target_mean = [x[2] - 1.0, x[3]];
    let expected = planar(&xp[..2], &agent_mean) * planar(&xp[2..], &target_mean);
    let got = problem.transition.density(&xp, &x, a);
    assert!((got - expected).abs() < 1e-12 * expected);
    assert!((problem.m - planar(&[0.0, 0.0], &[0.0, 0.0]).powi(2)).abs() < 1e-9);
}

#[test]
fn target_offset_noise_switches_at_d_min() {
    let cfg = target_config();
    let problem = build_problem::<f64>(&cfg).unwrap();
    let ob = &problem.observation;
    let far = [0.0, 0.0, 4.0, 0.0];
    let z_far = [-1.5, -2.5, -4.2, 0.3];
    let beacon = {
        let d = (8.0f64).sqrt();
        let s = 0.1 * d;
        let q = ((-1.5 - 0.0f64).powi(2) + (-2.5 - 0.0f64).powi(2)) / (s * s);
        (-0.5 * q).exp() / (std::f64::consts::TAU * s * s)
    };
    let offset = {
        let s2 = 0.01 * 4.0;
        let q = ((-4.2 + 4.0f64).powi(2) + 0.3f64.powi(2)) / s2;
        (-0.5 * q).exp() / (std::f64::consts::TAU * s2)
    };
    assert!((ob.density(&z_far, &far) - beacon * offset).abs() < 1e-12 * beacon * offset);
}

#[test]
fn scenario_constructors_are_pure() {
    let cfg = common::light_dark(10, 5, 0.5, &[1, 2], &[]);
    let (p1, p2) = (build_problem::<f64>(&cfg).unwrap(), build_problem::<f64>(&cfg).unwrap());
    let a = &p1.actions.at(0)[3];
    let (x, xp, z) = ([0.2, 0.4], [0.0, 1.1], [-0.9, -1.0]);
    assert_eq!(p1.transition.log_density(&xp, &x, a), p2.transition.log_density(&xp, &x, a));
    assert_eq!(p1.observation.log_density(&z, &xp), p2.observation.log_density(&z, &xp));
    assert_eq!(p1.m, p2.m);
    assert_eq!(p1.actions, p2.actions);
}

#[test]
fn tree_sizes() {
    assert_eq!(node_count(8, &[1, 3, 3]), 4809);
    assert_eq!(node_count(9, &[1, 3, 3]), 6814);
    assert_eq!(node_count(2, &[2, 2]), 21);
    assert_eq!(node_count(3, &[1, 2]) - 1, 21);
}

#[test]
fn kde_of_standard_normal_sample() {
    let b = gaussian_belief::<f64>(&[0.0, 0.0], &[1.0, 1.0], 10_000, &mut rng(31)).unwrap();
    let h = kde_entropy(&b).unwrap();
    let analytic = 1.0 + std::f64::consts::TAU.ln();
    assert!((analytic - 2.8379).abs() < 1e-4);
    assert!((h - analytic).abs() < 0.2, "KDE {h}");
    let flat = WeightedParticleBelief::uniform(2, vec![1.0, 2.0, 1.0, 2.0]).unwrap();
    assert_eq!(kde_entropy::<f64>(&flat), Err(ScenarioError::DegenerateBandwidth));
}

#[test]
fn kde_ignores_far_zero_weight_particles() {
    let far = WeightedParticleBelief::new(1, vec![0.0, 1.0, 1e6], vec![0.5, 0.5, 0.0]).unwrap();
    let h = kde_entropy::<f64>(&far).unwrap();
    // Silverman bandwidth with n = 3, d = 1 and a weighted standard deviation of 0.5.
    let bw = 0.5 * (4.0f64 / 9.0).powf(0.2);
    let kernel = |t: f64| (-0.5 * (t / bw).powi(2)).exp() / (bw * std::f64::consts::TAU.sqrt());
    let density = 0.5 * kernel(0.0) + 0.5 * kernel(1.0);
    assert!((h + density.ln()).abs() < 1e-12, "KDE {h}");
}

#[test]
fn discrete_entropy_examples() {
    let uniform = WeightedParticleBelief::uniform(1, (0..8).map(f64::from).collect()).unwrap();
    assert!((discrete_weight_entropy(&uniform) - 8f64.ln()).abs() < 1e-12);
    let one_hot = WeightedParticleBelief::new(1, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
    assert_eq!(discrete_weight_entropy(&one_hot), 0.0);
    let skewed = WeightedParticleBelief::new(1, vec![0.0, 1.0, 2.0], vec![0.5, 0.25, 0.25]).unwrap();
    assert!((discrete_weight_entropy(&skewed) - 1.5 * 2f64.ln()).abs() < 1e-12);
    assert!((discrete_weight_entropy(&skewed) - 1.0397).abs() < 1e-4);
}

#[test]
fn f32_beliefs_update_too() {
    let prior = gaussian_belief::<f32>(&[0.0, 0.0], &[1.0, 1.0], 50, &mut rng(5)).unwrap();
    let tr = GaussianDriftModel::<f32>::isotropic(2, 0.3).unwrap();
    let ob = LinearGaussianObservation::<f32>::new(2, 0.5).unwrap();
    let a = Action::new(0, "a", vec![0.2f32, 0.1]);
    let post = pf_update(&prior, &a, &[0.1f32, 0.0], &tr, &ob, &mut rng(6)).unwrap();
    let total: f32 = post.normalized_weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-5);
}
