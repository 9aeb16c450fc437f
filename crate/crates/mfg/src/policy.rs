//! Feedback policies, uniform policy mixtures, and the flows they induce.

use crate::dist::DiscreteDistribution;
use crate::env::MfgEnvironment;
use crate::error::{MfgError, Result};
use crate::flow::MeanFieldFlow;

/// Deterministic feedback policy: an action index for every decision time
/// and grid cell. Row `t` selects the action taken at time `t`, for
/// `t = 0, …, T−1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackPolicy {
    actions: Vec<Vec<usize>>,
}

impl FeedbackPolicy {
    pub fn new(actions: Vec<Vec<usize>>, num_cells: usize, num_actions: usize) -> Result<Self> {
        if actions.is_empty() {
            return Err(MfgError::Dimension("policy needs at least one decision time".into()));
        }
        for (t, row) in actions.iter().enumerate() {
            if row.len() != num_cells {
                return Err(MfgError::Dimension(format!(
                    "policy row {t} covers {} cells, grid has {num_cells}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&a| a >= num_actions) {
                return Err(MfgError::Dimension(format!(
                    "policy row {t} uses action index {bad}, grid has {num_actions} actions"
                )));
            }
        }
        Ok(Self { actions })
    }

    /// Repeat one decision rule at every time step.
    pub fn stationary(
        row: Vec<usize>,
        horizon: usize,
        num_actions: usize,
    ) -> Result<Self> {
        let cells = row.len();
        Self::new(vec![row; horizon.max(1)], cells, num_actions)
    }

    /// Number of decision steps covered.
    #[must_use]
    pub fn num_steps(&self) -> usize {
        self.actions.len()
    }

    #[must_use]
    pub fn num_cells(&self) -> usize {
        self.actions[0].len()
    }

    /// Action index chosen at time `t` in cell `i`.
    #[must_use]
    pub fn action(&self, t: usize, cell: usize) -> usize {
        self.actions[t][cell]
    }

    #[must_use]
    pub fn rows(&self) -> &[Vec<usize>] {
        &self.actions
    }
}

/// Uniform mixture over past best responses: the randomized policy that
/// picks one member uniformly at time zero and follows it thereafter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedPolicy {
    members: Vec<FeedbackPolicy>,
}

impl MixedPolicy {
    pub fn new(members: Vec<FeedbackPolicy>) -> Result<Self> {
        if members.is_empty() {
            return Err(MfgError::Dimension("mixture needs at least one member".into()));
        }
        let (steps, cells) = (members[0].num_steps(), members[0].num_cells());
        if members
            .iter()
            .any(|p| p.num_steps() != steps || p.num_cells() != cells)
        {
            return Err(MfgError::Dimension(
                "all mixture members must share one shape".into(),
            ));
        }
        Ok(Self { members })
    }

    #[must_use]
    pub fn members(&self) -> &[FeedbackPolicy] {
        &self.members
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.members.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Append a member, keeping uniform weights over the extended list.
    pub fn push(&mut self, member: FeedbackPolicy) -> Result<()> {
        if member.num_steps() != self.members[0].num_steps()
            || member.num_cells() != self.members[0].num_cells()
        {
            return Err(MfgError::Dimension(
                "new member does not match the mixture shape".into(),
            ));
        }
        self.members.push(member);
        Ok(())
    }

    /// Mean control value per (time, cell), averaging the members' real
    /// action values with uniform weights.
    #[must_use]
    pub fn mean_control(&self, env: &MfgEnvironment) -> Vec<Vec<f64>> {
        let steps = self.members[0].num_steps();
        let cells = self.members[0].num_cells();
        let mut mean = vec![vec![0.0; cells]; steps];
        let w = 1.0 / self.members.len() as f64;
        for member in &self.members {
            for t in 0..steps {
                for i in 0..cells {
                    mean[t][i] += w * env.action_grid().value(member.action(t, i));
                }
            }
        }
        mean
    }
}

fn check_policy_against_env(env: &MfgEnvironment, policy: &FeedbackPolicy) -> Result<()> {
    if policy.num_cells() != env.num_cells() {
        return Err(MfgError::Dimension(format!(
            "policy covers {} cells, environment has {}",
            policy.num_cells(),
            env.num_cells()
        )));
    }
    if policy.num_steps() != env.horizon() {
        return Err(MfgError::Dimension(format!(
            "policy covers {} decision steps, environment horizon is {}",
            policy.num_steps(),
            env.horizon()
        )));
    }
    Ok(())
}

/// Population flow generated when every agent follows `policy` from the
/// initial distribution `mu0`: each time slice is the push-forward of the
/// previous one through the transition kernel.
///
/// `background` is the flow the dynamics would read if they were coupled to
/// the population. The drift here is the control itself, so it is accepted
/// for interface uniformity and only checked for shape.
pub fn induced_flow(
    env: &MfgEnvironment,
    policy: &FeedbackPolicy,
    mu0: &DiscreteDistribution,
    background: Option<&MeanFieldFlow>,
) -> Result<MeanFieldFlow> {
    check_policy_against_env(env, policy)?;
    if mu0.len() != env.num_cells() {
        return Err(MfgError::Dimension(format!(
            "initial distribution on {} cells, grid has {}",
            mu0.len(),
            env.num_cells()
        )));
    }
    if let Some(bg) = background {
        if bg.num_cells() != env.num_cells() || bg.horizon() != env.horizon() {
            return Err(MfgError::Dimension(
                "background flow does not match the environment shape".into(),
            ));
        }
    }
    let m = env.num_cells();
    let mut slices = Vec::with_capacity(env.horizon() + 1);
    slices.push(mu0.clone());
    for t in 0..env.horizon() {
        let current = slices.last().expect("at least mu0 present");
        let mut next = vec![0.0; m];
        for i in 0..m {
            let mass = current.prob(i);
            if mass == 0.0 {
                continue;
            }
            let step = env.step_kernel(i, policy.action(t, i))?;
            for (j, &p) in step.dist.probs().iter().enumerate() {
                next[j] += mass * p;
            }
        }
        slices.push(DiscreteDistribution::from_weights(&next)?);
    }
    MeanFieldFlow::new(slices)
}

/// Flow of the uniform mixture: the average of the member flows, matching
/// agent-level randomization (each agent draws one member at time zero).
pub fn induced_flow_mixed(
    env: &MfgEnvironment,
    policy: &MixedPolicy,
    mu0: &DiscreteDistribution,
    background: Option<&MeanFieldFlow>,
) -> Result<MeanFieldFlow> {
    let mut slices: Option<Vec<Vec<f64>>> = None;
    let w = 1.0 / policy.len() as f64;
    for member in policy.members() {
        let flow = induced_flow(env, member, mu0, background)?;
        let acc = slices.get_or_insert_with(|| {
            vec![vec![0.0; flow.num_cells()]; flow.horizon() + 1]
        });
        for (t, dist) in flow.slices().iter().enumerate() {
            for (j, &p) in dist.probs().iter().enumerate() {
                acc[t][j] += w * p;
            }
        }
    }
    let per_time = slices
        .expect("mixture is nonempty")
        .into_iter()
        .map(|row| DiscreteDistribution::from_weights(&row))
        .collect::<Result<Vec<_>>>()?;
    MeanFieldFlow::new(per_time)
}
