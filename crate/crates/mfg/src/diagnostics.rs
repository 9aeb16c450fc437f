//! Convergence metrics and a-posteriori guarantees for fictitious play.
//!
//! Everything here is a pure function of environments, policies, flows, or
//! finished traces: population-averaged policy values, exploitability and
//! learning error, Nash certification (via the Markov-inequality argument
//! or by direct measure computation), error-bound fitting with a holdout
//! check, and the averaging lemma used as a test oracle.

use crate::best_response::{exact_best_response, policy_evaluation, BestResponseResult};
use crate::dist::DiscreteDistribution;
use crate::env::MfgEnvironment;
use crate::error::{MfgError, Result};
use crate::flow::MeanFieldFlow;
use crate::fp::FpTrace;
use crate::policy::{induced_flow, FeedbackPolicy, MixedPolicy};

/// Crowd-reward vectors of a flow at each decision time `t = 0..T−1`.
pub(crate) fn crowd_vectors(env: &MfgEnvironment, mu_bar: &MeanFieldFlow) -> Result<Vec<Vec<f64>>> {
    (0..env.horizon())
        .map(|t| env.crowd_reward_by_cell(mu_bar.at(t)))
        .collect()
}

/// Discounted private-reward part of a policy's value, accumulated along
/// its own state flow: `Σ_t γ^t Σ_x ρ_t(x)·r̃(x, π_t(x))`.
pub(crate) fn private_return(
    env: &MfgEnvironment,
    policy: &FeedbackPolicy,
    own_flow: &MeanFieldFlow,
) -> Result<f64> {
    if own_flow.horizon() != env.horizon() || policy.num_steps() != env.horizon() {
        return Err(MfgError::Dimension(
            "policy and flow must cover the environment horizon".into(),
        ));
    }
    let private = env.private_reward_table();
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 0..env.horizon() {
        let dist = own_flow.at(t);
        let mut step_sum = 0.0;
        for x in 0..env.num_cells() {
            step_sum += dist.prob(x) * private[x][policy.action(t, x)];
        }
        total += discount * step_sum;
        discount *= env.discount();
    }
    Ok(total)
}

/// Discounted crowd-reward part of a value: the policy's own flow paired
/// with precomputed crowd vectors of the population flow.
pub(crate) fn crowd_coupling(
    env: &MfgEnvironment,
    own_flow: &MeanFieldFlow,
    crowd: &[Vec<f64>],
) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for (t, c) in crowd.iter().enumerate() {
        let dist = own_flow.at(t);
        let mut step_sum = 0.0;
        for (x, &cx) in c.iter().enumerate() {
            step_sum += dist.prob(x) * cx;
        }
        total += discount * step_sum;
        discount *= env.discount();
    }
    total
}

/// Population-averaged value of a feedback policy against a population
/// flow: the initial distribution is pushed forward under the policy and
/// the discounted rewards are accumulated slice by slice.
pub fn evaluate_policy(
    env: &MfgEnvironment,
    policy: &FeedbackPolicy,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
) -> Result<f64> {
    let own_flow = induced_flow(env, policy, mu0, None)?;
    evaluate_with_flow(env, policy, &own_flow, mu_bar)
}

/// As [`evaluate_policy`], reusing an already-computed flow of the policy.
pub(crate) fn evaluate_with_flow(
    env: &MfgEnvironment,
    policy: &FeedbackPolicy,
    own_flow: &MeanFieldFlow,
    mu_bar: &MeanFieldFlow,
) -> Result<f64> {
    if mu_bar.horizon() != env.horizon() || mu_bar.num_cells() != env.num_cells() {
        return Err(MfgError::Dimension(
            "population flow must cover the environment horizon".into(),
        ));
    }
    let crowd = crowd_vectors(env, mu_bar)?;
    Ok(private_return(env, policy, own_flow)? + crowd_coupling(env, own_flow, &crowd))
}

/// Value of a uniform mixture: the average of its member values.
pub fn evaluate_mixed_policy(
    env: &MfgEnvironment,
    policy: &MixedPolicy,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
) -> Result<f64> {
    let mut total = 0.0;
    for member in policy.members() {
        total += evaluate_policy(env, member, mu_bar, mu0)?;
    }
    Ok(total / policy.len() as f64)
}

/// Value lost to an inexact best-response solver:
/// `𝕁(π_exact, μ̄) − 𝕁(π̂, μ̄)`.
///
/// `exact_policy` must be an exact best response against `mu_bar`; a gap
/// below `−1e−12` therefore signals a broken precondition and is an error.
pub fn learning_error(
    env: &MfgEnvironment,
    exact_policy: &FeedbackPolicy,
    hat_policy: &FeedbackPolicy,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
) -> Result<f64> {
    let exact_value = evaluate_policy(env, exact_policy, mu_bar, mu0)?;
    let hat_value = evaluate_policy(env, hat_policy, mu_bar, mu0)?;
    let gap = exact_value - hat_value;
    if gap < -1e-12 {
        return Err(MfgError::Diagnostic(format!(
            "claimed exact policy is beaten by {gap:e}; it is not a best response"
        )));
    }
    Ok(gap)
}

/// Exploitability of a mixture together with the best response that
/// witnesses it.
#[derive(Debug)]
pub struct ExploitabilityReport {
    /// `𝕁(best response, μ̄) − 𝕁(π̄, μ̄)`.
    pub value: f64,
    /// The witnessing exact best response against `mu_bar`.
    pub best_response: BestResponseResult,
    /// Largest per-bin gap between `mu_bar` and the flow the mixture
    /// actually induces. Values above `1e−8` mean the pair passed in was
    /// inconsistent and `value` is not the canonical exploitability.
    pub flow_consistency_gap: f64,
}

impl ExploitabilityReport {
    #[must_use]
    pub fn flow_consistent(&self) -> bool {
        self.flow_consistency_gap <= 1e-8
    }
}

/// Expected gain of deviating from the mixture `π̄` while the population
/// plays `mu_bar`.
pub fn exploitability(
    env: &MfgEnvironment,
    mixture: &MixedPolicy,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
) -> Result<ExploitabilityReport> {
    let induced = crate::policy::induced_flow_mixed(env, mixture, mu0, None)?;
    let mut gap = 0.0f64;
    for t in 0..=env.horizon() {
        for x in 0..env.num_cells() {
            gap = gap.max((induced.at(t).prob(x) - mu_bar.at(t).prob(x)).abs());
        }
    }
    let best = exact_best_response(env, mu_bar, mu0)?;
    let best_value = evaluate_with_flow(env, &best.policy, &best.flow, mu_bar)?;
    let mixture_value = evaluate_mixed_policy(env, mixture, mu_bar, mu0)?;
    Ok(ExploitabilityReport {
        value: best_value - mixture_value,
        best_response: best,
        flow_consistency_gap: gap,
    })
}

/// How a Nash certificate was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificationMethod {
    /// Markov's inequality applied to the exploitability.
    MarkovFromExploitability,
    /// Direct computation of the deviation-gain measure over the grid.
    DirectMeasure,
}

/// Certified `(ε, δ)` equilibrium quality at a given iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NashCertificate {
    pub epsilon: f64,
    pub delta: f64,
    pub iteration: usize,
    pub method: CertificationMethod,
}

impl NashCertificate {
    pub fn new(
        epsilon: f64,
        delta: f64,
        iteration: usize,
        method: CertificationMethod,
    ) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "certificate needs epsilon > 0, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MfgError::InvalidParameter(format!(
                "certificate needs delta in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            iteration,
            method,
        })
    }
}

/// Outcome of a certification attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum CertificationOutcome {
    Certified(NashCertificate),
    /// The requested `ε` failed; the smallest epsilon this exploitability
    /// supports is reported instead.
    Rejected { minimal_epsilon: f64 },
}

impl CertificationOutcome {
    #[must_use]
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified(_))
    }
}

/// Certify an `(ε, ε)` equilibrium from the exploitability alone: the
/// deviation gain is nonnegative with mean `e_n`, so by Markov's inequality
/// the mass of states gaining more than `ε` is at most `e_n/ε ≤ ε` whenever
/// `e_n ≤ ε²`.
pub fn certify_nash(e_n: f64, epsilon: f64, iteration: usize) -> Result<CertificationOutcome> {
    if e_n < -1e-12 || !e_n.is_finite() {
        return Err(MfgError::Diagnostic(format!(
            "exploitability must be nonnegative, got {e_n}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MfgError::InvalidParameter(format!(
            "certification level must lie in (0, 1), got {epsilon}"
        )));
    }
    let e_n = e_n.max(0.0);
    if e_n <= epsilon * epsilon {
        Ok(CertificationOutcome::Certified(NashCertificate::new(
            epsilon,
            epsilon,
            iteration,
            CertificationMethod::MarkovFromExploitability,
        )?))
    } else {
        Ok(CertificationOutcome::Rejected {
            minimal_epsilon: e_n.sqrt(),
        })
    }
}

/// Certify by measuring the deviation gain directly: per starting cell,
/// compare the best-response value with the mixture value and weigh the
/// cells that gain more than `ε` under `mu0`.
pub fn certify_nash_direct(
    env: &MfgEnvironment,
    mixture: &MixedPolicy,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
    epsilon: f64,
    iteration: usize,
) -> Result<CertificationOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MfgError::InvalidParameter(format!(
            "certification level must lie in (0, 1), got {epsilon}"
        )));
    }
    let best = exact_best_response(env, mu_bar, mu0)?;
    let m = env.num_cells();
    let mut mixture_v0 = vec![0.0; m];
    for member in mixture.members() {
        let values = policy_evaluation(env, member, mu_bar)?;
        for (acc, &v) in mixture_v0.iter_mut().zip(values.initial()) {
            *acc += v;
        }
    }
    for v in &mut mixture_v0 {
        *v /= mixture.len() as f64;
    }
    let mut bad_mass = 0.0;
    let mut worst_gain = 0.0f64;
    for x in 0..m {
        let gain = best.values.initial()[x] - mixture_v0[x];
        worst_gain = worst_gain.max(gain);
        if gain > epsilon {
            bad_mass += mu0.prob(x);
        }
    }
    if bad_mass <= epsilon {
        Ok(CertificationOutcome::Certified(NashCertificate::new(
            epsilon,
            epsilon,
            iteration,
            CertificationMethod::DirectMeasure,
        )?))
    } else {
        Ok(CertificationOutcome::Rejected {
            minimal_epsilon: worst_gain.max(0.0).sqrt().max(epsilon),
        })
    }
}

/// Fitted a-posteriori error bounds for a diagnostic trace.
///
/// Two bound shapes are computed from the trace. The first controls `e_n`
/// through the distance between exact and learned best-response flows:
///
/// `e_n ≤ C·(1 + Σ_{i≤n} d₁(μ*^(i+1), μ̂^(i+1)))/n + (1/n)·Σ_{i≤n} ℓ_i`.
///
/// The second controls it through the drift of successive learned flows
/// and the weighted learning errors:
///
/// `e_n ≤ ℓ_n + C·(1 + Σ_{i≤n} d₁(μ̂^(i+1), μ̂^(i+2)))/n + (1/n)·Σ_{i≤n} (i+1)·ℓ_i`.
///
/// The constants are existential, so each is fitted as the smallest value
/// satisfying its inequality on a prefix of the run and then validated on
/// the remaining iterations.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// `e_n` per iteration, `n = 1..N`.
    pub exploitability: Vec<f64>,
    /// Bound built from the exact-vs-learned flow gaps.
    pub gap_bound: Vec<f64>,
    /// Bound built from the successive learned-flow drift; the final
    /// iteration's drift term does not exist yet, so trailing entries are
    /// absent.
    pub drift_bound: Vec<Option<f64>>,
    pub gap_constant: f64,
    pub drift_constant: f64,
    /// Number of leading iterations the constants were fitted on.
    pub fit_iterations: usize,
    pub gap_holds_on_holdout: bool,
    pub drift_holds_on_holdout: bool,
}

impl BoundReport {
    #[must_use]
    pub fn holds_on_holdout(&self) -> bool {
        self.gap_holds_on_holdout && self.drift_holds_on_holdout
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// Fit both bound constants on the first `fit_fraction` of a diagnostic
/// trace and validate them on the rest.
pub fn theorem_bound_report(trace: &FpTrace, fit_fraction: f64) -> Result<BoundReport> {
    if !(fit_fraction > 0.0 && fit_fraction < 1.0) {
        return Err(MfgError::InvalidParameter(format!(
            "fit fraction must lie strictly between 0 and 1, got {fit_fraction}"
        )));
    }
    let rows = trace.iterations();
    let n_rows = rows.len();
    if n_rows < 2 {
        return Err(MfgError::Diagnostic(
            "bound fitting needs at least two iterations".into(),
        ));
    }
    let mut exploitability = Vec::with_capacity(n_rows);
    let mut learning = Vec::with_capacity(n_rows);
    let mut gap_series = Vec::with_capacity(n_rows);
    for row in rows {
        let (Some(e), Some(l), Some(g)) =
            (row.exploitability, row.learning_error, row.exact_vs_learned_flow)
        else {
            return Err(MfgError::Diagnostic(
                "bound fitting needs a trace recorded with diagnostics enabled".into(),
            ));
        };
        exploitability.push(e);
        learning.push(l);
        gap_series.push(g);
    }
    let drift_series: Vec<Option<f64>> = rows.iter().map(|r| r.br_flow_step).collect();

    let fit_iterations = ((fit_fraction * n_rows as f64).floor() as usize).clamp(1, n_rows - 1);

    // Prefix sums over i = 1..n of the learning errors (plain and
    // (i+1)-weighted) and the two distance series.
    let mut sum_l = vec![0.0; n_rows + 1];
    let mut sum_wl = vec![0.0; n_rows + 1];
    let mut sum_gap = vec![0.0; n_rows + 1];
    let mut sum_drift: Vec<Option<f64>> = vec![Some(0.0); n_rows + 1];
    for i in 1..=n_rows {
        sum_l[i] = sum_l[i - 1] + learning[i - 1];
        sum_wl[i] = sum_wl[i - 1] + (i as f64 + 1.0) * learning[i - 1];
        sum_gap[i] = sum_gap[i - 1] + gap_series[i - 1];
        sum_drift[i] = match (sum_drift[i - 1], drift_series[i - 1]) {
            (Some(acc), Some(d)) => Some(acc + d),
            _ => None,
        };
    }

    let mut gap_constant = 0.0f64;
    let mut drift_constant = 0.0f64;
    for n in 1..=fit_iterations {
        let nf = n as f64;
        let e = exploitability[n - 1];
        let needed = (nf * e - sum_l[n]) / (1.0 + sum_gap[n]);
        gap_constant = gap_constant.max(needed);
        if let Some(drift_sum) = sum_drift[n] {
            let needed = nf * (e - learning[n - 1] - sum_wl[n] / nf) / (1.0 + drift_sum);
            drift_constant = drift_constant.max(needed);
        }
    }
    gap_constant = gap_constant.max(0.0);
    drift_constant = drift_constant.max(0.0);

    let mut gap_bound = Vec::with_capacity(n_rows);
    let mut drift_bound = Vec::with_capacity(n_rows);
    let mut gap_holds = true;
    let mut drift_holds = true;
    for n in 1..=n_rows {
        let nf = n as f64;
        let rhs5 = gap_constant * (1.0 + sum_gap[n]) / nf + sum_l[n] / nf;
        gap_bound.push(rhs5);
        if n > fit_iterations && exploitability[n - 1] > rhs5 + BOUND_SLACK {
            gap_holds = false;
        }
        let rhs6 = sum_drift[n].map(|drift_sum| {
            learning[n - 1] + drift_constant * (1.0 + drift_sum) / nf + sum_wl[n] / nf
        });
        if let Some(rhs6) = rhs6 {
            if n > fit_iterations && exploitability[n - 1] > rhs6 + BOUND_SLACK {
                drift_holds = false;
            }
        }
        drift_bound.push(rhs6);
    }

    Ok(BoundReport {
        exploitability,
        gap_bound,
        drift_bound,
        gap_constant,
        drift_constant,
        fit_iterations,
        gap_holds_on_holdout: gap_holds,
        drift_holds_on_holdout: drift_holds,
    })
}

/// Result of checking the averaging lemma on a concrete pair of sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLemmaOutcome {
    /// `(n+1)·φ_{n+1} − n·φ_n ≤ λ_n` for all `n ≥ 1`.
    pub hypothesis_holds: bool,
    /// `φ_n ≤ φ_0/n + (1/n)·Σ_{i≤n} λ_i` for all `n ≥ 1`.
    pub conclusion_holds: bool,
}

/// Check both sides of the averaging lemma on sequences indexed from 0.
///
/// The lemma's conclusion needs more than the stated hypothesis (it also
/// uses `φ_1 ≤ φ_0` and nonnegative `λ`, which hold for the running-average
/// sequences it is applied to), so the two checks are reported separately
/// rather than one implying the other.
pub fn sequence_lemma_check(phi: &[f64], lambda: &[f64]) -> Result<SequenceLemmaOutcome> {
    if phi.len() != lambda.len() {
        return Err(MfgError::Dimension(format!(
            "sequences of different lengths: {} vs {}",
            phi.len(),
            lambda.len()
        )));
    }
    if phi.len() < 2 {
        return Err(MfgError::Dimension(
            "the averaging lemma needs sequences of length at least 2".into(),
        ));
    }
    let mut hypothesis_holds = true;
    for n in 1..phi.len() - 1 {
        let nf = n as f64;
        if (nf + 1.0) * phi[n + 1] - nf * phi[n] > lambda[n] + 1e-12 {
            hypothesis_holds = false;
        }
    }
    let mut conclusion_holds = true;
    let mut lambda_sum = 0.0;
    for n in 1..phi.len() {
        lambda_sum += lambda[n];
        let nf = n as f64;
        if phi[n] > phi[0] / nf + lambda_sum / nf + 1e-12 {
            conclusion_holds = false;
        }
    }
    Ok(SequenceLemmaOutcome {
        hypothesis_holds,
        conclusion_holds,
    })
}
