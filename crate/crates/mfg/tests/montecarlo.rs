//! Monte Carlo cross-checks: the closed-form kernels, flows, and policy
//! values must agree with brute-force simulation of the same objects.

use mfg::best_response::exact_best_response;
use mfg::diagnostics::evaluate_policy;
use mfg::dist::{estimate_density, DiscreteDistribution};
use mfg::env::{Horizon, MfgEnvironment, RewardModel};
use mfg::flow::MeanFieldFlow;
use mfg::grid::{ActionGrid, StateGrid};
use mfg::policy::induced_flow;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn congestion_env(num_cells: usize, horizon: usize) -> MfgEnvironment {
    MfgEnvironment::new(
        StateGrid::unit_torus(num_cells).unwrap(),
        ActionGrid::new(21, -4.0, 4.0).unwrap(),
        Horizon::Steps(horizon),
        0.95,
        0.05,
        0.35,
        RewardModel::congestion(),
    )
    .unwrap()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn sampled_transitions_match_the_kernel_in_total_variation() {
    let env = congestion_env(16, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let draws = 1_000_000usize;
    for &(state, action) in &[(0usize, 0usize), (7, 10), (15, 20)] {
        let kernel: Vec<f64> = env.step_kernel(state, action).unwrap().dist.probs().to_vec();
        let mut counts = vec![0.0; env.num_cells()];
        for _ in 0..draws {
            counts[env.sample_transition(state, action, &mut rng).unwrap()] += 1.0;
        }
        for c in &mut counts {
            *c /= draws as f64;
        }
        let tv = total_variation(&counts, &kernel);
        assert!(
            tv <= 0.01,
            "sampled kernel at ({state}, {action}) is {tv} away in total variation"
        );
    }
}

#[test]
fn simulated_agents_reproduce_the_induced_flow() {
    let env = congestion_env(20, 8);
    let mu0 = DiscreteDistribution::uniform(env.num_cells()).unwrap();
    let background = MeanFieldFlow::constant(&mu0, env.horizon()).unwrap();
    let policy = exact_best_response(&env, &background, &mu0).unwrap().policy;
    let flow = induced_flow(&env, &policy, &mu0, None).unwrap();

    let agents = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut histograms = vec![vec![0.0; env.num_cells()]; env.horizon() + 1];
    for _ in 0..agents {
        let mut x = mu0.sample(&mut rng);
        histograms[0][x] += 1.0;
        for t in 0..env.horizon() {
            x = env.sample_transition(x, policy.action(t, x), &mut rng).unwrap();
            histograms[t + 1][x] += 1.0;
        }
    }
    for (t, h) in histograms.iter().enumerate() {
        let empirical: Vec<f64> = h.iter().map(|&c| c / agents as f64).collect();
        let tv = total_variation(&empirical, flow.at(t).probs());
        assert!(
            tv <= 0.02,
            "slice {t}: simulated crowd is {tv} away from the push-forward flow"
        );
    }
}

#[test]
fn policy_value_matches_monte_carlo_rollouts() {
    let env = congestion_env(12, 8);
    let mu0 = DiscreteDistribution::uniform(env.num_cells()).unwrap();
    let mu_bar = MeanFieldFlow::constant(&mu0, env.horizon()).unwrap();
    let policy = exact_best_response(&env, &mu_bar, &mu0).unwrap().policy;
    let exact = evaluate_policy(&env, &policy, &mu_bar, &mu0).unwrap();

    let rollouts = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..rollouts {
        let mut x = mu0.sample(&mut rng);
        let mut ret = 0.0;
        let mut discount = 1.0;
        for t in 0..env.horizon() {
            let a = policy.action(t, x);
            ret += discount * env.reward_value(x, a, mu_bar.at(t)).unwrap();
            discount *= env.discount();
            x = env.sample_transition(x, a, &mut rng).unwrap();
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = rollouts as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let standard_error = (variance / n).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * standard_error,
        "rollout mean {mean} is more than three standard errors ({standard_error}) from {exact}"
    );
}

#[test]
fn histogram_estimate_recovers_the_sampling_density() {
    let num_bins = 10usize;
    let target =
        DiscreteDistribution::from_weights(&[5.0, 3.0, 1.0, 0.5, 0.5, 1.0, 2.0, 4.0, 6.0, 2.0])
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let samples: Vec<f64> = (0..100_000)
        .map(|_| {
            let cell = target.sample(&mut rng);
            (cell as f64 + rng.random::<f64>()) / num_bins as f64
        })
        .collect();
    let estimate = estimate_density(&samples, num_bins).unwrap();
    let tv = total_variation(estimate.probs(), target.probs());
    assert!(
        tv <= 0.02,
        "histogram estimate is {tv} away from the sampling density"
    );
}
