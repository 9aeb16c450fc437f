//! Cross-module invariants exercised on randomized inputs and real
//! fictitious-play runs, complementing the per-module unit tests.

use mfg::best_response::{exact_best_response, q_learning_best_response, QLearningSchedule};
use mfg::diagnostics::{certify_nash, theorem_bound_report};
use mfg::dist::DiscreteDistribution;
use mfg::env::{check_monotonicity, Horizon, MfgEnvironment, RewardModel};
use mfg::flow::{fp_mixing_update, MeanFieldFlow};
use mfg::fp::{run_approximate_fp, run_exact_fp, ApproxSolver, CorruptionSchedule, FpConfig};
use mfg::grid::{ActionGrid, StateGrid};
use mfg::transport::wasserstein1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_distribution(rng: &mut ChaCha8Rng, m: usize) -> DiscreteDistribution {
    let weights: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
    DiscreteDistribution::from_weights(&weights).unwrap()
}

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

fn exact_config(env: &MfgEnvironment, num_iterations: usize, seed: u64) -> FpConfig {
    FpConfig::new(
        num_iterations,
        DiscreteDistribution::uniform(env.num_cells()).unwrap(),
        seed,
    )
    .unwrap()
}

#[test]
fn wasserstein_is_a_metric_on_random_histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let p = random_distribution(&mut rng, 8);
        let q = random_distribution(&mut rng, 8);
        let r = random_distribution(&mut rng, 8);

        assert_eq!(wasserstein1(&p, &p).unwrap(), 0.0);
        assert_eq!(
            wasserstein1(&p, &q).unwrap(),
            wasserstein1(&q, &p).unwrap()
        );
        assert!(wasserstein1(&p, &q).unwrap() > 0.0);

        let pq = wasserstein1(&p, &q).unwrap();
        let qr = wasserstein1(&q, &r).unwrap();
        let pr = wasserstein1(&p, &r).unwrap();
        assert!(
            pr <= pq + qr + 1e-12,
            "triangle inequality violated: {pr} > {pq} + {qr}"
        );
    }
}

#[test]
fn congestion_crowd_reward_is_monotone_on_random_pairs() {
    let reward = RewardModel::congestion();
    let grid = StateGrid::unit_torus(50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let m1 = random_distribution(&mut rng, 50);
        let m2 = random_distribution(&mut rng, 50);
        assert!(wasserstein1(&m1, &m2).unwrap() > 0.0);
        let pairing = check_monotonicity(&reward.crowd, &grid, &m1, &m2).unwrap();
        assert!(
            pairing < 0.0,
            "crowd-aversion pairing must be negative, got {pairing}"
        );
    }
}

// Replays fictitious play by hand with library primitives and checks two
// things at every iteration: the belief flow equals the per-bin arithmetic
// mean of all best-response flows so far, and the driver's returned flow
// matches the replay bit for bit.
#[test]
fn belief_flow_is_the_running_mean_of_response_flows() {
    let env = congestion_env(12, 40);
    let mu0 = DiscreteDistribution::uniform(12).unwrap();
    let total = 10;

    let mut mu_bar = MeanFieldFlow::constant(&mu0, env.horizon()).unwrap();
    let mut hats: Vec<MeanFieldFlow> = Vec::new();
    for step in 0..total {
        let hat = exact_best_response(&env, &mu_bar, &mu0).unwrap();
        hats.push(hat.flow);
        mu_bar = fp_mixing_update(&mu_bar, hats.last().unwrap(), step).unwrap();

        let n = hats.len();
        for t in 0..=env.horizon() {
            for x in 0..env.num_cells() {
                let mean: f64 =
                    hats.iter().map(|f| f.at(t).prob(x)).sum::<f64>() / n as f64;
                let got = mu_bar.at(t).prob(x);
                assert!(
                    (got - mean).abs() < 1e-10,
                    "iteration {n}, t={t}, x={x}: averaged {got} vs mean {mean}"
                );
            }
        }
    }

    let out = run_exact_fp(&env, &exact_config(&env, total, 0)).unwrap();
    for t in 0..=env.horizon() {
        assert_eq!(out.flow.at(t).probs(), mu_bar.at(t).probs());
    }
}

#[test]
fn trace_rows_decompose_exactly_and_stay_nonnegative() {
    let env = congestion_env(20, 60);
    let config = FpConfig {
        diagnostics: true,
        ..exact_config(&env, 25, 11)
    };
    let solver = ApproxSolver::Perturbed(CorruptionSchedule::new(1.0, 2.0).unwrap());
    let out = run_approximate_fp(&env, &config, &solver).unwrap();

    for row in out.trace.iterations() {
        let e = row.exploitability.unwrap();
        let l = row.learning_error.unwrap();
        assert_eq!(e, l + row.approx_exploitability, "iteration {}", row.n);
        assert!(e >= -1e-12, "iteration {}: e = {e}", row.n);
        assert!(l >= -1e-12, "iteration {}: l = {l}", row.n);
    }

    let exact_out = run_exact_fp(&env, &exact_config(&env, 10, 11)).unwrap();
    for row in exact_out.trace.iterations() {
        assert_eq!(row.learning_error.unwrap(), 0.0);
        assert_eq!(row.exploitability.unwrap(), row.approx_exploitability);
    }
}

// Flow-stability safeguard: n·d₁(μ̄^(n), μ̄^(n+1)) stays bounded along an
// exact run, with the diameter-based additive term absorbing small-n noise.
#[test]
fn scaled_belief_steps_stay_bounded() {
    let env = congestion_env(25, 80);
    let out = run_exact_fp(&env, &exact_config(&env, 60, 0)).unwrap();
    let scaled: Vec<f64> = out
        .trace
        .iterations()
        .iter()
        .map(|row| row.n as f64 * row.avg_flow_step)
        .collect();

    let head_max = scaled[..10].iter().cloned().fold(f64::MIN, f64::max);
    let tail_max = scaled[9..].iter().cloned().fold(f64::MIN, f64::max);
    let safeguard = 0.5 * (env.horizon() + 1) as f64;
    assert!(
        tail_max <= 2.0 * head_max + safeguard,
        "late scaled steps {tail_max} exceed 2 × {head_max} + {safeguard}"
    );
}

// With full exploration and the default learning-rate decay, the learned
// action values converge to the dynamic-programming ones. Transitions are
// made deterministic by aligning the action displacements with the grid
// and turning the noise off, so the only randomness is exploration.
#[test]
fn q_learning_approaches_dp_action_values() {
    let env = MfgEnvironment::new(
        StateGrid::unit_torus(4).unwrap(),
        ActionGrid::new(3, -5.0, 5.0).unwrap(),
        Horizon::Steps(3),
        0.95,
        0.05,
        0.0,
        RewardModel::congestion(),
    )
    .unwrap();
    let mu0 = DiscreteDistribution::uniform(4).unwrap();
    let mu_bar = MeanFieldFlow::constant(&mu0, env.horizon()).unwrap();

    let schedule = QLearningSchedule {
        num_episodes: 30_000,
        episode_length: env.horizon(),
        epsilon_floor: 1.0,
        epsilon_exponent: 0.5,
        alpha_scale: 1.0,
        alpha_exponent: 0.7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (_, table) = q_learning_best_response(&env, &mu_bar, &mu0, &schedule, None, &mut rng).unwrap();

    // DP action values: Q(t,x,a) = r(x,a,μ) + γ·E V_{t+1}, with V from the
    // exact solver's table.
    let best = exact_best_response(&env, &mu_bar, &mu0).unwrap();
    let gamma = env.discount();
    let mut worst = 0.0f64;
    for t in 0..env.horizon() {
        for x in 0..env.num_cells() {
            for a in 0..env.num_actions() {
                let step = env.step_kernel(x, a).unwrap();
                let expected: f64 = (0..env.num_cells())
                    .map(|y| step.dist.prob(y) * best.values.at(t + 1)[y])
                    .sum();
                let dp = env.reward_value(x, a, mu_bar.at(t)).unwrap() + gamma * expected;
                worst = worst.max((table.value(t, x, a) - dp).abs());
            }
        }
    }
    assert!(worst < 1e-2, "sup-norm gap to DP action values: {worst}");
}

// The fitted bound constant must not blow up as the grid refines.
#[test]
fn fitted_gap_constant_is_stable_under_grid_refinement() {
    let mut constants = Vec::new();
    for cells in [25, 50, 100] {
        let env = congestion_env(cells, 50);
        let config = FpConfig {
            diagnostics: true,
            ..exact_config(&env, 40, 0)
        };
        let out = run_exact_fp(&env, &config).unwrap();
        let report = theorem_bound_report(&out.trace, 0.5).unwrap();
        assert!(report.holds_on_holdout(), "{cells} cells: holdout failed");
        constants.push(report.gap_constant);
    }
    let coarsest = constants[0];
    for (i, c) in constants.iter().enumerate() {
        assert!(
            *c <= 4.0 * coarsest,
            "refinement level {i}: constant {c} vs coarsest {coarsest}"
        );
    }
}

// Certification from the averaged drift bound: once the running average of
// weighted learning errors and response-flow steps is small enough, the
// Markov certificate at the matching level must be issued.
#[test]
fn averaged_drift_bound_yields_a_certificate() {
    let env = MfgEnvironment::new(
        StateGrid::unit_torus(8).unwrap(),
        ActionGrid::new(5, -4.0, 4.0).unwrap(),
        Horizon::Steps(8),
        0.95,
        0.05,
        0.35,
        RewardModel::congestion(),
    )
    .unwrap();
    let config = FpConfig {
        diagnostics: true,
        ..exact_config(&env, 800, 4)
    };
    let solver = ApproxSolver::Perturbed(CorruptionSchedule::new(0.1, 2.0).unwrap());
    let out = run_approximate_fp(&env, &config, &solver).unwrap();

    let report = theorem_bound_report(&out.trace, 0.5).unwrap();
    assert!(report.drift_holds_on_holdout);
    let c2 = report.drift_constant;

    let rows = out.trace.iterations();
    let steps = out.trace.hat_flow_steps();
    let n = rows.len();
    let mut learning_sum = 0.0;
    let mut step_sum = 0.0;
    for i in 1..=n {
        learning_sum += (i + 1) as f64 * rows[i - 1].learning_error.unwrap();
        step_sum += steps[i - 1];
    }
    let average = (learning_sum + c2 * step_sum) / n as f64;
    assert!(
        average < 0.5,
        "averaged bound {average} too large for a sub-unit certification level \
         (learning part {}, drift part {} with constant {c2})",
        learning_sum / n as f64,
        c2 * step_sum / n as f64,
    );

    let epsilon = (2.0 * average).sqrt() * (1.0 + 1e-9);
    let e_n = rows[n - 1].exploitability.unwrap();
    let outcome = certify_nash(e_n, epsilon, n).unwrap();
    assert!(
        outcome.is_certified(),
        "e_{n} = {e_n} not certified at level {epsilon}"
    );
}
