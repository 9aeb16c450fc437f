//! Fictitious-play drivers.
//!
//! All three drivers share the same averaging scheme: at step `k` the
//! current best-response solver is run against the population average
//! `μ̄^(k)`, the new response's flow is folded into the average with weight
//! `1/(k+1)`, and the returned policy is the uniform mixture of the
//! responses. They differ only in the solver (exact dynamic programming,
//! a corrupted copy of it, tabular Q-learning) and in whether the
//! population is tracked as a full flow or, in the model-free driver, as a
//! density estimated from simulated trajectories.
//!
//! A run of `N` iterations performs `N + 1` best responses: the extra one
//! at the end is never mixed into the returned policy, it only provides
//! the final iteration's exploitability and flow-stability entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::benchmark::benchmark_errors;
use crate::best_response::{
    exact_best_response, perturbed_best_response, q_learning_best_response, q_learning_stationary,
    value_iteration_stationary, BestResponseResult, QLearningSchedule, QTable,
};
use crate::diagnostics::{crowd_coupling, crowd_vectors, private_return};
use crate::dist::{estimate_density, DiscreteDistribution};
use crate::env::MfgEnvironment;
use crate::error::{MfgError, Result};
use crate::flow::{fp_mixing_update, MeanFieldFlow};
use crate::policy::{FeedbackPolicy, MixedPolicy};
use crate::transport::wasserstein1;
use std::io::Write as _;
use std::path::Path;

/// Settings shared by every driver.
#[derive(Debug, Clone)]
pub struct FpConfig {
    /// Number of fictitious-play iterations `N`.
    pub num_iterations: usize,
    /// Initial distribution of a representative agent.
    pub mu0: DiscreteDistribution,
    /// Population flow the first best response is solved against; defaults
    /// to `mu0` frozen over the whole horizon.
    pub initial_flow: Option<MeanFieldFlow>,
    /// Seed for every random choice a driver makes. Equal configurations
    /// with equal seeds produce bit-identical runs.
    pub seed: u64,
    /// Record the solver-quality columns (exploitability, learning error,
    /// exact-vs-learned flow distance). They need an exact best response
    /// per iteration, which a deployment of the model-free solvers would
    /// not have; switching this off reproduces that blind setting.
    pub diagnostics: bool,
    /// Record per-iteration L2 errors against the closed-form congestion
    /// equilibrium. Only meaningful on benchmark environments.
    pub compare_to_closed_form: bool,
}

impl FpConfig {
    pub fn new(num_iterations: usize, mu0: DiscreteDistribution, seed: u64) -> Result<Self> {
        if num_iterations == 0 {
            return Err(MfgError::InvalidParameter(
                "num_iterations must be ≥ 1".into(),
            ));
        }
        Ok(Self {
            num_iterations,
            mu0,
            initial_flow: None,
            seed,
            diagnostics: true,
            compare_to_closed_form: false,
        })
    }
}

/// Corruption probabilities for the perturbed solver: the `k`-th best
/// response (counting from 1) is corrupted with probability
/// `scale·k^(−exponent)`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl CorruptionSchedule {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if scale < 0.0 || !scale.is_finite() || !exponent.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "corruption schedule needs finite scale ≥ 0 and finite exponent, \
                 got scale {scale}, exponent {exponent}"
            )));
        }
        Ok(Self { scale, exponent })
    }

    /// Corruption probability at 0-based driver step `k`.
    #[must_use]
    pub fn probability(&self, step: usize) -> f64 {
        (self.scale * (step as f64 + 1.0).powf(-self.exponent)).clamp(0.0, 1.0)
    }
}

/// Inexact best-response solvers available to [`run_approximate_fp`].
#[derive(Debug, Clone)]
pub enum ApproxSolver {
    /// Exact dynamic programming with randomly corrupted policy entries.
    Perturbed(CorruptionSchedule),
    /// Tabular Q-learning; with `warm_start` the table carries over
    /// between iterations (visit counts reset).
    QLearning {
        schedule: QLearningSchedule,
        warm_start: bool,
    },
}

/// Settings for the model-free driver on stationary problems.
#[derive(Debug, Clone)]
pub struct ModelFreeConfig {
    pub schedule: QLearningSchedule,
    /// Trajectories simulated per iteration to refresh the density estimate.
    pub num_trajectories: usize,
    /// States recorded per trajectory.
    pub trajectory_length: usize,
    /// Carry the Q-table across iterations instead of relearning from zero.
    pub warm_start: bool,
}

impl ModelFreeConfig {
    /// Sizes small enough for an interactive run; roughly a tenth of
    /// [`ModelFreeConfig::full`] in both trajectory count and length.
    #[must_use]
    pub fn desk_scale() -> Self {
        Self {
            schedule: QLearningSchedule::desk_default(2000, 100),
            num_trajectories: 300,
            trajectory_length: 100,
            warm_start: true,
        }
    }

    #[must_use]
    pub fn full() -> Self {
        Self {
            schedule: QLearningSchedule::desk_default(20000, 1000),
            num_trajectories: 3000,
            trajectory_length: 1000,
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.num_trajectories == 0 || self.trajectory_length == 0 {
            return Err(MfgError::InvalidParameter(
                "model-free runs need at least one trajectory of at least one state".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded fictitious-play iteration, `n = 1..N`.
///
/// All values are measured against the population average `μ̄^(n)` using
/// the freshly computed responses `π̂^(n+1)` (and `π*^(n+1)` when
/// diagnostics are on) and the mixture `π̄^(n)` of the first `n` responses.
/// The exploitability is recorded as the sum of the learning error and the
/// approximate exploitability, so that decomposition holds exactly as
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FpIteration {
    pub n: usize,
    /// `e_n = 𝕁(π*^(n+1), μ̄^(n)) − 𝕁(π̄^(n), μ̄^(n))`; absent without
    /// diagnostics.
    pub exploitability: Option<f64>,
    /// `ê_n = 𝕁(π̂^(n+1), μ̄^(n)) − 𝕁(π̄^(n), μ̄^(n))`. May be negative when
    /// the learned response is worse than the running mixture.
    pub approx_exploitability: f64,
    /// `ℓ_n = 𝕁(π*^(n+1), μ̄^(n)) − 𝕁(π̂^(n+1), μ̄^(n))`; absent without
    /// diagnostics.
    pub learning_error: Option<f64>,
    /// Distance between successive population averages,
    /// `d₁(μ̄^(n), μ̄^(n+1))`.
    pub avg_flow_step: f64,
    /// Distance between successive best-response flows,
    /// `d₁(μ̂^(n+1), μ̂^(n+2))`. The final iteration has no successor yet,
    /// so its entry is absent.
    pub br_flow_step: Option<f64>,
    /// `d₁(μ*^(n+1), μ̂^(n+1))`; absent without diagnostics.
    pub exact_vs_learned_flow: Option<f64>,
    /// L2 gap between the population density and the closed-form
    /// equilibrium density; absent unless the run compares to it.
    pub l2_density_error: Option<f64>,
    /// L2 gap between the mixture's mean initial control and the
    /// closed-form equilibrium control; absent unless compared.
    pub l2_control_error: Option<f64>,
}

/// Full record of a fictitious-play run.
#[derive(Debug, Clone)]
pub struct FpTrace {
    iterations: Vec<FpIteration>,
    hat_flow_steps: Vec<f64>,
    negative_approx_count: usize,
    diagnostics: bool,
    compare_to_closed_form: bool,
}

impl FpTrace {
    /// Assemble a trace from its parts (mainly for tests and synthetic
    /// bound-fitting inputs).
    pub fn from_parts(
        iterations: Vec<FpIteration>,
        hat_flow_steps: Vec<f64>,
        diagnostics: bool,
        compare_to_closed_form: bool,
    ) -> Self {
        let negative_approx_count = iterations
            .iter()
            .filter(|r| r.approx_exploitability < 0.0)
            .count();
        Self {
            iterations,
            hat_flow_steps,
            negative_approx_count,
            diagnostics,
            compare_to_closed_form,
        }
    }

    #[must_use]
    pub fn iterations(&self) -> &[FpIteration] {
        &self.iterations
    }

    /// Distances `d₁(μ̂^(j), μ̂^(j+1))` for `j = 1..N`, including the leading
    /// term that belongs to no recorded iteration.
    #[must_use]
    pub fn hat_flow_steps(&self) -> &[f64] {
        &self.hat_flow_steps
    }

    /// Number of iterations whose approximate exploitability came out
    /// negative (the learned response lost to the running mixture).
    #[must_use]
    pub fn negative_approx_count(&self) -> usize {
        self.negative_approx_count
    }

    #[must_use]
    pub fn has_diagnostics(&self) -> bool {
        self.diagnostics
    }

    #[must_use]
    pub fn has_benchmark_errors(&self) -> bool {
        self.compare_to_closed_form
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Write one CSV row per iteration. Solver-quality and benchmark
    /// columns appear only when the run recorded them; an absent final
    /// flow-step entry is written as an empty cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        let mut header = vec!["n"];
        if self.diagnostics {
            header.push("exploitability");
        }
        header.push("approx_exploitability");
        if self.diagnostics {
            header.push("learning_error");
        }
        header.extend(["avg_flow_step", "br_flow_step"]);
        if self.diagnostics {
            header.push("exact_vs_learned_flow");
        }
        if self.compare_to_closed_form {
            header.extend(["l2_density_error", "l2_control_error"]);
        }
        writeln!(out, "{}", header.join(","))?;
        let cell = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.12e}"));
        for row in &self.iterations {
            let mut fields = vec![row.n.to_string()];
            if self.diagnostics {
                fields.push(cell(row.exploitability));
            }
            fields.push(format!("{:.12e}", row.approx_exploitability));
            if self.diagnostics {
                fields.push(cell(row.learning_error));
            }
            fields.push(format!("{:.12e}", row.avg_flow_step));
            fields.push(cell(row.br_flow_step));
            if self.diagnostics {
                fields.push(cell(row.exact_vs_learned_flow));
            }
            if self.compare_to_closed_form {
                fields.push(cell(row.l2_density_error));
                fields.push(cell(row.l2_control_error));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Result of a flow-tracking fictitious-play run: the average flow
/// `μ̄^(N)`, the mixture `π̄^(N)` it is consistent with, and the trace.
#[derive(Debug, Clone)]
pub struct FpOutcome {
    pub flow: MeanFieldFlow,
    pub policy: MixedPolicy,
    pub trace: FpTrace,
}

/// Result of a model-free run: the density estimated from all simulated
/// trajectories instead of an exact flow.
#[derive(Debug, Clone)]
pub struct ModelFreeOutcome {
    pub density: DiscreteDistribution,
    pub policy: MixedPolicy,
    pub trace: FpTrace,
}

/// How the shared driver obtains the per-step exploitability companions.
enum ExactCompanion {
    /// The solver itself is exact, so the learned response doubles as the
    /// exact one.
    HatIsExact,
    Computed(BestResponseResult),
    Off,
}

struct StepSolution {
    hat: BestResponseResult,
    exact: ExactCompanion,
}

fn initial_flow(env: &MfgEnvironment, config: &FpConfig) -> Result<MeanFieldFlow> {
    if config.mu0.len() != env.num_cells() {
        return Err(MfgError::Dimension(format!(
            "mu0 has {} cells, environment has {}",
            config.mu0.len(),
            env.num_cells()
        )));
    }
    match &config.initial_flow {
        Some(flow) => {
            if flow.horizon() != env.horizon() || flow.num_cells() != env.num_cells() {
                return Err(MfgError::Dimension(format!(
                    "initial flow of shape ({}, {}) does not fit horizon {} on {} cells",
                    flow.horizon(),
                    flow.num_cells(),
                    env.horizon(),
                    env.num_cells()
                )));
            }
            Ok(flow.clone())
        }
        None => MeanFieldFlow::constant(&config.mu0, env.horizon()),
    }
}

fn mean_initial_control(env: &MfgEnvironment, members: &[FeedbackPolicy]) -> Vec<f64> {
    let mut mean = vec![0.0; env.num_cells()];
    for member in members {
        for (cell, acc) in mean.iter_mut().enumerate() {
            *acc += env.action_grid().value(member.action(0, cell));
        }
    }
    for acc in &mut mean {
        *acc /= members.len() as f64;
    }
    mean
}

fn drive<F>(env: &MfgEnvironment, config: &FpConfig, mut solve: F) -> Result<FpOutcome>
where
    F: FnMut(usize, &MeanFieldFlow, &mut ChaCha8Rng) -> Result<StepSolution>,
{
    if config.num_iterations == 0 {
        return Err(MfgError::InvalidParameter(
            "num_iterations must be ≥ 1".into(),
        ));
    }
    let total = config.num_iterations;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mu_bar = initial_flow(env, config)?;

    let mut members: Vec<FeedbackPolicy> = Vec::with_capacity(total + 1);
    let mut member_flows: Vec<MeanFieldFlow> = Vec::with_capacity(total + 1);
    let mut member_private: Vec<f64> = Vec::with_capacity(total + 1);
    let mut prev_hat_flow: Option<MeanFieldFlow> = None;
    let mut rows: Vec<FpIteration> = Vec::with_capacity(total);
    let mut hat_flow_steps: Vec<f64> = Vec::with_capacity(total);
    let mut returned: Option<(MeanFieldFlow, Vec<FeedbackPolicy>)> = None;

    for step in 0..=total {
        let StepSolution { hat, exact } = solve(step, &mu_bar, &mut rng)?;
        let hat_private = private_return(env, &hat.policy, &hat.flow)?;

        if let Some(prev) = &prev_hat_flow {
            let d = prev.distance(&hat.flow)?;
            hat_flow_steps.push(d);
            if let Some(prev_row) = rows.last_mut() {
                prev_row.br_flow_step = Some(d);
            }
        }

        if step >= 1 {
            let n = step;
            let crowd = crowd_vectors(env, &mu_bar)?;
            let j_hat = hat_private + crowd_coupling(env, &hat.flow, &crowd);
            let mut j_bar = 0.0;
            for k in 0..members.len() {
                j_bar += member_private[k] + crowd_coupling(env, &member_flows[k], &crowd);
            }
            j_bar /= n as f64;
            let approx = j_hat - j_bar;
            let (exploit, learning, flow_gap) = match &exact {
                ExactCompanion::HatIsExact => (Some(approx), Some(0.0), Some(0.0)),
                ExactCompanion::Computed(star) => {
                    let j_star =
                        private_return(env, &star.policy, &star.flow)?
                            + crowd_coupling(env, &star.flow, &crowd);
                    let learning = j_star - j_hat;
                    (
                        Some(learning + approx),
                        Some(learning),
                        Some(star.flow.distance(&hat.flow)?),
                    )
                }
                ExactCompanion::Off => (None, None, None),
            };
            let (l2_density, l2_control) = if config.compare_to_closed_form {
                let control = mean_initial_control(env, &members);
                let (d, c) =
                    benchmark_errors(mu_bar.at(env.horizon()), &control, env.state_grid())?;
                (Some(d), Some(c))
            } else {
                (None, None)
            };
            rows.push(FpIteration {
                n,
                exploitability: exploit,
                approx_exploitability: approx,
                learning_error: learning,
                avg_flow_step: 0.0,
                br_flow_step: None,
                exact_vs_learned_flow: flow_gap,
                l2_density_error: l2_density,
                l2_control_error: l2_control,
            });
        }

        if step == total {
            returned = Some((mu_bar.clone(), members.clone()));
        }
        let mu_next = fp_mixing_update(&mu_bar, &hat.flow, step)?;
        if let Some(row) = rows.last_mut() {
            if row.n == step {
                row.avg_flow_step = mu_bar.distance(&mu_next)?;
            }
        }
        members.push(hat.policy);
        member_private.push(hat_private);
        prev_hat_flow = Some(hat.flow.clone());
        member_flows.push(hat.flow);
        mu_bar = mu_next;
    }

    let (flow, final_members) = returned.expect("loop ran to the final step");
    let diagnostics = rows.iter().all(|r| r.exploitability.is_some());
    Ok(FpOutcome {
        flow,
        policy: MixedPolicy::new(final_members)?,
        trace: FpTrace::from_parts(
            rows,
            hat_flow_steps,
            diagnostics,
            config.compare_to_closed_form,
        ),
    })
}

/// Fictitious play with exact best responses. The learning error is zero
/// by construction, so the trace always carries full diagnostics.
pub fn run_exact_fp(env: &MfgEnvironment, config: &FpConfig) -> Result<FpOutcome> {
    drive(env, config, |_, mu_bar, _| {
        Ok(StepSolution {
            hat: exact_best_response(env, mu_bar, &config.mu0)?,
            exact: ExactCompanion::HatIsExact,
        })
    })
}

/// Fictitious play with an inexact best-response solver.
pub fn run_approximate_fp(
    env: &MfgEnvironment,
    config: &FpConfig,
    solver: &ApproxSolver,
) -> Result<FpOutcome> {
    match solver {
        ApproxSolver::Perturbed(schedule) => drive(env, config, |step, mu_bar, rng| {
            let p = schedule.probability(step);
            let pair = perturbed_best_response(env, mu_bar, &config.mu0, p, rng)?;
            Ok(StepSolution {
                hat: pair.perturbed,
                exact: if config.diagnostics {
                    ExactCompanion::Computed(pair.exact)
                } else {
                    ExactCompanion::Off
                },
            })
        }),
        ApproxSolver::QLearning {
            schedule,
            warm_start,
        } => {
            schedule.validate()?;
            let mut table: Option<QTable> = None;
            drive(env, config, |_, mu_bar, rng| {
                let (hat, learned) =
                    q_learning_best_response(env, mu_bar, &config.mu0, schedule, table.take(), rng)?;
                if *warm_start {
                    table = Some(learned);
                }
                let exact = if config.diagnostics {
                    ExactCompanion::Computed(exact_best_response(env, mu_bar, &config.mu0)?)
                } else {
                    ExactCompanion::Off
                };
                Ok(StepSolution { hat, exact })
            })
        }
    }
}

/// Model-free fictitious play for stationary problems.
///
/// The solver never touches the transition kernel or reward model: each
/// iteration learns a stationary response by Q-learning from sampled
/// transitions, simulates a batch of trajectories under it, and
/// re-estimates the population density from every state visited so far.
/// The growing sample buffer makes the estimate the exact sample analogue
/// of the `1/(k+1)` averaging rule. Diagnostics, when enabled, do use the
/// model: they compare against a stationary exact best response.
///
/// The population-side distance columns of the trace are single-slice
/// 1-Wasserstein distances between successive density estimates, and the
/// response-side column compares the per-iteration batch histograms.
pub fn run_modelfree_fp(
    env: &MfgEnvironment,
    config: &FpConfig,
    settings: &ModelFreeConfig,
) -> Result<ModelFreeOutcome> {
    settings.validate()?;
    if config.num_iterations == 0 {
        return Err(MfgError::InvalidParameter(
            "num_iterations must be ≥ 1".into(),
        ));
    }
    if config.initial_flow.is_some() {
        return Err(MfgError::Config(
            "the model-free driver tracks a density, not a flow; \
             initial_flow does not apply"
                .into(),
        ));
    }
    if config.mu0.len() != env.num_cells() {
        return Err(MfgError::Dimension(format!(
            "mu0 has {} cells, environment has {}",
            config.mu0.len(),
            env.num_cells()
        )));
    }
    let total = config.num_iterations;
    let m = env.num_cells();
    let grid = env.state_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut buffer: Vec<f64> = Vec::with_capacity(
        (total + 1) * settings.num_trajectories * settings.trajectory_length,
    );
    let mut estimate = config.mu0.clone();
    let mut members: Vec<FeedbackPolicy> = Vec::with_capacity(total + 1);
    let mut member_flows: Vec<MeanFieldFlow> = Vec::with_capacity(total + 1);
    let mut member_private: Vec<f64> = Vec::with_capacity(total + 1);
    let mut prev_hist: Option<DiscreteDistribution> = None;
    let mut rows: Vec<FpIteration> = Vec::with_capacity(total);
    let mut hat_flow_steps: Vec<f64> = Vec::with_capacity(total);
    let mut returned: Option<(DiscreteDistribution, Vec<FeedbackPolicy>)> = None;
    let mut table: Option<QTable> = None;

    for step in 0..=total {
        let (hat, learned) =
            q_learning_stationary(env, &estimate, &config.mu0, &settings.schedule, table.take(), &mut rng)?;
        if settings.warm_start {
            table = Some(learned);
        }
        let hat_private = private_return(env, &hat.policy, &hat.flow)?;

        let mut batch =
            Vec::with_capacity(settings.num_trajectories * settings.trajectory_length);
        for _ in 0..settings.num_trajectories {
            let mut state = config.mu0.sample(&mut rng);
            for _ in 0..settings.trajectory_length {
                batch.push(grid.coordinate(state));
                let action = hat.policy.action(0, state);
                state = env.sample_transition(state, action, &mut rng)?;
            }
        }
        let hist = estimate_density(&batch, m)?;

        if let Some(prev) = &prev_hist {
            let d = wasserstein1(prev, &hist)?;
            hat_flow_steps.push(d);
            if let Some(prev_row) = rows.last_mut() {
                prev_row.br_flow_step = Some(d);
            }
        }

        if step >= 1 {
            let n = step;
            let population = MeanFieldFlow::constant(&estimate, env.horizon())?;
            let crowd = crowd_vectors(env, &population)?;
            let j_hat = hat_private + crowd_coupling(env, &hat.flow, &crowd);
            let mut j_bar = 0.0;
            for k in 0..members.len() {
                j_bar += member_private[k] + crowd_coupling(env, &member_flows[k], &crowd);
            }
            j_bar /= n as f64;
            let approx = j_hat - j_bar;
            let (exploit, learning, flow_gap) = if config.diagnostics {
                let star = value_iteration_stationary(env, &estimate, &config.mu0)?;
                let j_star = private_return(env, &star.result.policy, &star.result.flow)?
                    + crowd_coupling(env, &star.result.flow, &crowd);
                let learning = j_star - j_hat;
                (
                    Some(learning + approx),
                    Some(learning),
                    Some(star.result.flow.distance(&hat.flow)?),
                )
            } else {
                (None, None, None)
            };
            let (l2_density, l2_control) = if config.compare_to_closed_form {
                let control = mean_initial_control(env, &members);
                let (d, c) = benchmark_errors(&estimate, &control, grid)?;
                (Some(d), Some(c))
            } else {
                (None, None)
            };
            rows.push(FpIteration {
                n,
                exploitability: exploit,
                approx_exploitability: approx,
                learning_error: learning,
                avg_flow_step: 0.0,
                br_flow_step: None,
                exact_vs_learned_flow: flow_gap,
                l2_density_error: l2_density,
                l2_control_error: l2_control,
            });
        }

        if step == total {
            returned = Some((estimate.clone(), members.clone()));
        }
        buffer.extend_from_slice(&batch);
        let next = estimate_density(&buffer, m)?;
        if let Some(row) = rows.last_mut() {
            if row.n == step {
                row.avg_flow_step = wasserstein1(&estimate, &next)?;
            }
        }
        members.push(hat.policy);
        member_private.push(hat_private);
        member_flows.push(hat.flow);
        prev_hist = Some(hist);
        estimate = next;
    }

    let (density, final_members) = returned.expect("loop ran to the final step");
    Ok(ModelFreeOutcome {
        density,
        policy: MixedPolicy::new(final_members)?,
        trace: FpTrace::from_parts(
            rows,
            hat_flow_steps,
            config.diagnostics,
            config.compare_to_closed_form,
        ),
    })
}
