//! Risk-neutral maximum-entropy IRL baseline.
//!
//! Each agent is treated separately. For every demonstration the opponent's
//! recorded actions are pinned, which turns the game into a finite-horizon,
//! time-indexed single-agent MDP. Rewards are linear in the agent's weights
//! off collisions and the fixed collision reward on collisions. The
//! interface takes no risk or level parameters, so the baseline is blind to
//! both by construction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::game::{dot_sparse, Agent, GameSpec};
use crate::inverse::Demonstration;
use crate::math::{compensated_sum, exp, ln, log_sum_exp, sqrt};
use crate::{Error, Result};

/// Single-agent MDP induced by pinning the opponent to its demonstrated
/// actions; step `t` uses opponent action `opp_actions[t]`.
#[derive(Debug, Clone, Copy)]
pub struct InducedMdp<'a> {
    spec: &'a GameSpec,
    agent: Agent,
    start: usize,
    opp_actions: &'a [usize],
}

/// Opponent actions of `agent`'s opponent along `demo`, in demo order.
fn opponent_actions(demo: &Demonstration, agent: Agent) -> Vec<usize> {
    demo.steps.iter().map(|st| st.action(agent.opponent())).collect()
}

impl<'a> InducedMdp<'a> {
    pub fn new(spec: &'a GameSpec, agent: Agent, start: usize, opp_actions: &'a [usize]) -> Result<Self> {
        if opp_actions.is_empty() {
            return Err(Error::InvalidDemonstration("empty horizon".into()));
        }
        spec.checked_joint_index(start, 0, 0)?;
        for &a in opp_actions {
            if a >= spec.n_actions(agent.opponent()) {
                return Err(Error::Index {
                    what: "opponent action",
                    index: a,
                    len: spec.n_actions(agent.opponent()),
                });
            }
        }
        Ok(Self {
            spec,
            agent,
            start,
            opp_actions,
        })
    }

    #[inline]
    pub fn spec(&self) -> &GameSpec {
        self.spec
    }

    #[inline]
    pub fn agent(&self) -> Agent {
        self.agent
    }

    #[inline]
    pub fn start(&self) -> usize {
        self.start
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.opp_actions.len()
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.spec.n_states()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.spec.n_actions(self.agent)
    }

    #[inline]
    fn joint(&self, t: usize, a: usize) -> (usize, usize) {
        self.agent.joint(a, self.opp_actions[t])
    }

    /// Successor of `s` when the agent plays `a` at step `t`.
    #[inline]
    pub fn transition(&self, t: usize, s: usize, a: usize) -> usize {
        let (a1, a2) = self.joint(t, a);
        self.spec.next_state(s, a1, a2)
    }

    /// Features at `(t, s, a)`; empty on collisions.
    #[inline]
    pub fn features(&self, t: usize, s: usize, a: usize) -> &[(u32, f64)] {
        let (a1, a2) = self.joint(t, a);
        if self.spec.is_collision(s, a1, a2) {
            &[]
        } else {
            self.spec.features(self.agent, s, a1, a2)
        }
    }

    /// Reward at `(t, s, a)` for weights `omega`.
    #[inline]
    pub fn reward(&self, omega: &[f64], collision_reward: f64, t: usize, s: usize, a: usize) -> f64 {
        let (a1, a2) = self.joint(t, a);
        if self.spec.is_collision(s, a1, a2) {
            collision_reward
        } else {
            dot_sparse(omega, self.spec.features(self.agent, s, a1, a2))
        }
    }
}

/// Builds the induced MDP of `agent` for one demonstration. The opponent
/// actions are copied into `buf`, which the MDP borrows.
pub fn induce_mdp<'a>(
    spec: &'a GameSpec,
    demo: &Demonstration,
    agent: Agent,
    buf: &'a mut Vec<usize>,
) -> Result<InducedMdp<'a>> {
    demo.validate(spec)?;
    *buf = opponent_actions(demo, agent);
    InducedMdp::new(spec, agent, demo.steps[0].state, buf)
}

/// Soft values `V[t][s]` for `t = 0..=N` (with `V[N] = 0`) and the
/// stochastic policy `pi[t][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
}

impl SoftSolution {
    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.policy[t][s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Backward recursion `V_t(s) = log sum_a exp(R_t(s, a) + V_{t+1}(s'))`.
pub fn soft_value_iteration(mdp: &InducedMdp, omega: &[f64], collision_reward: f64) -> Result<SoftSolution> {
    if omega.len() != mdp.spec.feature_dim() {
        return Err(Error::Shape(format!(
            "{} weights for {} features",
            omega.len(),
            mdp.spec.feature_dim()
        )));
    }
    let (n, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
    let mut values = vec![vec![0.0; ns]; n + 1];
    let mut policy = vec![vec![0.0; ns * na]; n];
    let mut q = vec![0.0; na];
    for t in (0..n).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let (v_t, v_next) = (&mut head[t], &tail[0]);
        for s in 0..ns {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = mdp.reward(omega, collision_reward, t, s, a) + v_next[mdp.transition(t, s, a)];
            }
            let v = log_sum_exp(&q);
            v_t[s] = v;
            for (a, &qa) in q.iter().enumerate() {
                policy[t][s * na + a] = exp(qa - v);
            }
        }
    }
    Ok(SoftSolution {
        n_states: ns,
        n_actions: na,
        values,
        policy,
    })
}

/// Soft solution stored only over states reachable from the start.
/// `reach[t]` lists the states at step `t`; `values[t]`, `policy[t]` and
/// `next[t]` are aligned with it, `next[t][i * na + a]` indexing `reach[t + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachableSoft {
    pub n_actions: usize,
    pub reach: Vec<Vec<usize>>,
    pub next: Vec<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
}

impl ReachableSoft {
    /// Position of `s` in `reach[t]`.
    pub fn index(&self, t: usize, s: usize) -> Option<usize> {
        self.reach[t].iter().position(|&r| r == s)
    }

    #[inline]
    pub fn row(&self, t: usize, i: usize) -> &[f64] {
        &self.policy[t][i * self.n_actions..(i + 1) * self.n_actions]
    }
}

/// [`soft_value_iteration`] restricted to states reachable from the start,
/// which are the only ones the likelihood and feature counts touch.
pub fn soft_value_iteration_reachable(mdp: &InducedMdp, omega: &[f64], collision_reward: f64) -> Result<ReachableSoft> {
    if omega.len() != mdp.spec.feature_dim() {
        return Err(Error::Shape(format!(
            "{} weights for {} features",
            omega.len(),
            mdp.spec.feature_dim()
        )));
    }
    let (n, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
    let mut pos = vec![(usize::MAX, 0usize); ns];
    let mut reach = Vec::with_capacity(n + 1);
    let mut next = Vec::with_capacity(n);
    reach.push(vec![mdp.start]);
    for t in 0..n {
        let mut states = Vec::new();
        let mut idx = Vec::with_capacity(reach[t].len() * na);
        for &s in &reach[t] {
            for a in 0..na {
                let s2 = mdp.transition(t, s, a);
                if pos[s2].0 != t {
                    pos[s2] = (t, states.len());
                    states.push(s2);
                }
                idx.push(pos[s2].1);
            }
        }
        reach.push(states);
        next.push(idx);
    }
    let mut values: Vec<Vec<f64>> = reach.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut policy: Vec<Vec<f64>> = reach[..n].iter().map(|r| vec![0.0; r.len() * na]).collect();
    let mut q = vec![0.0; na];
    for t in (0..n).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let (v_t, v_next) = (&mut head[t], &tail[0]);
        for (i, &s) in reach[t].iter().enumerate() {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = mdp.reward(omega, collision_reward, t, s, a) + v_next[next[t][i * na + a]];
            }
            let v = log_sum_exp(&q);
            v_t[i] = v;
            for (a, &qa) in q.iter().enumerate() {
                policy[t][i * na + a] = exp(qa - v);
            }
        }
    }
    Ok(ReachableSoft {
        n_actions: na,
        reach,
        next,
        values,
        policy,
    })
}

/// [`expected_feature_counts`] for a [`ReachableSoft`].
pub fn expected_feature_counts_reachable(mdp: &InducedMdp, sol: &ReachableSoft) -> Vec<f64> {
    let na = mdp.n_actions();
    let mut counts = vec![0.0; mdp.spec.feature_dim()];
    let mut d = vec![1.0];
    for t in 0..mdp.horizon() {
        let mut d_next = vec![0.0; sol.reach[t + 1].len()];
        for (i, &s) in sol.reach[t].iter().enumerate() {
            if d[i] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = d[i] * sol.policy[t][i * na + a];
                for &(j, v) in mdp.features(t, s, a) {
                    counts[j as usize] += w * v;
                }
                d_next[sol.next[t][i * na + a]] += w;
            }
        }
        d = d_next;
    }
    counts
}

/// Feature counts expected under the soft policy from the MDP's start.
pub fn expected_feature_counts(mdp: &InducedMdp, sol: &SoftSolution) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut counts = vec![0.0; mdp.spec.feature_dim()];
    let mut d = vec![0.0; ns];
    let mut d_next = vec![0.0; ns];
    d[mdp.start] = 1.0;
    for t in 0..mdp.horizon() {
        d_next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = d[s] * sol.policy[t][s * na + a];
                for &(j, v) in mdp.features(t, s, a) {
                    counts[j as usize] += w * v;
                }
                d_next[mdp.transition(t, s, a)] += w;
            }
        }
        core::mem::swap(&mut d, &mut d_next);
    }
    counts
}

/// Feature counts of `agent` along the demonstration.
pub fn empirical_feature_counts(spec: &GameSpec, demo: &Demonstration, agent: Agent) -> Vec<f64> {
    let mut counts = vec![0.0; spec.feature_dim()];
    for st in &demo.steps {
        let (a1, a2) = (st.actions[0], st.actions[1]);
        if spec.is_collision(st.state, a1, a2) {
            continue;
        }
        for &(j, v) in spec.features(agent, st.state, a1, a2) {
            counts[j as usize] += v;
        }
    }
    counts
}

/// Log-likelihood and its gradient for one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeirlTerm {
    pub loglik: f64,
    pub grad: Vec<f64>,
}

/// `log prod_t pi_t(a_t | s_t)` and `empirical - expected` feature counts.
pub fn meirl_term(spec: &GameSpec, demo: &Demonstration, agent: Agent, omega: &[f64], collision_reward: f64) -> Result<MeirlTerm> {
    let mut buf = Vec::new();
    let mdp = induce_mdp(spec, demo, agent, &mut buf)?;
    let sol = soft_value_iteration_reachable(&mdp, omega, collision_reward)?;
    let mut loglik = 0.0;
    for (t, st) in demo.steps.iter().enumerate() {
        let i = sol
            .index(t, st.state)
            .ok_or_else(|| Error::InvalidDemonstration(format!("step {t} leaves the reachable set")))?;
        loglik += ln(sol.row(t, i)[st.action(agent)]);
    }
    let expected = expected_feature_counts_reachable(&mdp, &sol);
    let mut grad = empirical_feature_counts(spec, demo, agent);
    for (g, e) in grad.iter_mut().zip(&expected) {
        *g -= e;
    }
    Ok(MeirlTerm { loglik, grad })
}

/// Sums per-demo terms in demo order with compensated summation.
pub fn reduce_meirl_terms(terms: &[MeirlTerm], dim: usize) -> (f64, Vec<f64>) {
    let loglik = compensated_sum(terms.iter().map(|t| t.loglik));
    let grad = (0..dim).map(|j| compensated_sum(terms.iter().map(|t| t.grad[j]))).collect();
    (loglik, grad)
}

/// Total log-likelihood and gradient over all demonstrations.
pub fn meirl_gradient(
    spec: &GameSpec,
    demos: &[Demonstration],
    agent: Agent,
    omega: &[f64],
    collision_reward: f64,
) -> Result<(f64, Vec<f64>)> {
    let terms = demos
        .iter()
        .map(|d| meirl_term(spec, d, agent, omega, collision_reward))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_meirl_terms(&terms, spec.feature_dim()))
}

/// Settings of the baseline ascent loop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeirlConfig {
    pub eta: f64,
    pub max_epochs: usize,
    pub conv_tol: f64,
    pub patience: usize,
    /// Box for the weights, applied after every step.
    pub omega_bounds: (f64, f64),
    pub collision_reward: f64,
}

impl Default for MeirlConfig {
    fn default() -> Self {
        Self {
            eta: 0.0015,
            max_epochs: 400,
            conv_tol: 1e-4,
            patience: 5,
            omega_bounds: (1.0, 2.5),
            collision_reward: crate::game::DEFAULT_COLLISION_REWARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeirlEpoch {
    pub epoch: usize,
    pub omega: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeirlState {
    pub omega: Vec<f64>,
    pub converged: bool,
    pub trace: Vec<MeirlEpoch>,
}

/// Gradient ascent on the MaxEnt log-likelihood of `agent`'s weights.
pub fn meirl_learn(
    spec: &GameSpec,
    demos: &[Demonstration],
    agent: Agent,
    init: &[f64],
    cfg: &MeirlConfig,
) -> Result<MeirlState> {
    meirl_learn_with(spec, demos, init, cfg, |omega, demos| {
        demos
            .iter()
            .map(|d| meirl_term(spec, d, agent, omega, cfg.collision_reward))
            .collect()
    })
}

/// [`meirl_learn`] with a caller-supplied evaluator returning one term per
/// demo, in order. The evaluator fixes the agent.
pub fn meirl_learn_with<E>(
    spec: &GameSpec,
    demos: &[Demonstration],
    init: &[f64],
    cfg: &MeirlConfig,
    evaluate: E,
) -> Result<MeirlState>
where
    E: Fn(&[f64], &[Demonstration]) -> Result<Vec<MeirlTerm>>,
{
    if demos.is_empty() {
        return Err(Error::InvalidDemonstration("no demonstrations".into()));
    }
    if init.len() != spec.feature_dim() {
        return Err(Error::Shape(format!("{} initial weights for {} features", init.len(), spec.feature_dim())));
    }
    let (lo, hi) = cfg.omega_bounds;
    let mut omega: Vec<f64> = init.iter().map(|x| x.clamp(lo, hi)).collect();
    let mut trace: Vec<MeirlEpoch> = Vec::new();
    let mut quiet = 0;
    let mut converged = false;
    for epoch in 0..=cfg.max_epochs {
        let terms = evaluate(&omega, demos)?;
        if terms.len() != demos.len() {
            return Err(Error::Shape("evaluator returned the wrong number of terms".into()));
        }
        let (loglik, grad) = reduce_meirl_terms(&terms, spec.feature_dim());
        let grad_norm = sqrt(grad.iter().map(|g| g * g).sum());
        if !loglik.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if let Some(prev) = trace.last() {
            if (loglik - prev.loglik).abs() < cfg.conv_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        trace.push(MeirlEpoch {
            epoch,
            omega: omega.clone(),
            loglik,
            grad_norm,
        });
        if quiet >= cfg.patience {
            converged = true;
            break;
        }
        if epoch == cfg.max_epochs {
            break;
        }
        for (w, g) in omega.iter_mut().zip(&grad) {
            *w = (*w + cfg.eta * g).clamp(lo, hi);
        }
    }
    Ok(MeirlState {
        omega,
        converged,
        trace,
    })
}
