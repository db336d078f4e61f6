//! Risk-sensitive quantal level-k policies by CPT value iteration.
//!
//! Level 0 is the anchoring "uncertain follower": given the leader's action,
//! it soft-maximizes its own one-step reward. A level-k agent (k >= 1)
//! treats its opponent as level k-1, evaluates each of its actions with the
//! CPT measure over the opponent's action distribution, iterates the CPT
//! Bellman operator to a fixed point and responds with a Boltzmann policy
//! over the resulting Q-values.

use alloc::vec;
use alloc::vec::Vec;

use crate::cpt::{utility_unchecked, RankWeights};
use crate::game::{reward_bounds, Agent, CptParams, GameSpec, RewardParams, RewardTable};
use crate::math::{abs, smooth_max_unchecked, softmax_into};
use crate::{Error, Result};

/// Reduction from `Q(s, .)` to `V(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MaxOperator {
    /// The exact maximum.
    #[default]
    Hard,
    /// `(sum Q^kappa)^(1/kappa)`, the surrogate the gradient iteration
    /// differentiates. Solving with it makes the analytic gradients exact
    /// derivatives of the forward tables.
    Smooth { kappa: f64 },
}

/// Stopping rule for value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverOptions {
    /// Sup-norm residual at which iteration stops.
    pub tol: f64,
    pub max_sweeps: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub max_op: MaxOperator,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 10_000,
            max_op: MaxOperator::Hard,
        }
    }
}

/// How the reasoning agent predicts its opponent's action.
#[derive(Debug, Clone, Copy)]
pub enum OpponentModel<'a> {
    /// Level-0 follower table `[s][leader][own]`, where the leader is the
    /// reasoning agent, so the opponent's distribution depends on the
    /// reasoning agent's own action.
    Anchor(&'a [f64]),
    /// Unconditional level-(k-1) policy `[s][a]`.
    Level(&'a [f64]),
}

impl<'a> OpponentModel<'a> {
    #[inline]
    pub(crate) fn probs(&self, s: usize, own: usize, n_own: usize, n_opp: usize) -> &'a [f64] {
        match *self {
            OpponentModel::Anchor(t) => {
                let base = (s * n_own + own) * n_opp;
                &t[base..base + n_opp]
            }
            OpponentModel::Level(t) => &t[s * n_opp..(s + 1) * n_opp],
        }
    }
}

/// Converged tables of one agent at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    /// `V*[s]`
    pub value: Vec<f64>,
    /// `Q*[s][a]`
    pub q: Vec<f64>,
    /// `pi*[s][a]`
    pub policy: Vec<f64>,
    pub sweeps: usize,
    /// Sup-norm residual of every sweep, in order.
    pub residuals: Vec<f64>,
}

impl LevelSolution {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// Policies of both agents for levels `0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPolicySet {
    n_states: usize,
    n_actions: [usize; 2],
    anchor: [Vec<f64>; 2],
    levels: Vec<[LevelSolution; 2]>,
}

impl LevelPolicySet {
    /// Assembles a set from precomputed tables (used when loading dumps).
    pub fn from_parts(
        n_states: usize,
        n_actions: [usize; 2],
        anchor: [Vec<f64>; 2],
        levels: Vec<[LevelSolution; 2]>,
    ) -> Result<Self> {
        for agent in Agent::BOTH {
            let (n_own, n_opp) = (n_actions[agent.index()], n_actions[agent.opponent().index()]);
            if anchor[agent.index()].len() != n_states * n_opp * n_own {
                return Err(Error::Shape("anchor table size".into()));
            }
            for lv in &levels {
                let sol = &lv[agent.index()];
                if sol.value.len() != n_states
                    || sol.q.len() != n_states * n_own
                    || sol.policy.len() != n_states * n_own
                {
                    return Err(Error::Shape("level table size".into()));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            anchor,
            levels,
        })
    }

    #[inline]
    pub fn k_max(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self, agent: Agent) -> usize {
        self.n_actions[agent.index()]
    }

    /// Level-0 table of `agent`, laid out `[s][leader][own]`.
    #[inline]
    pub fn anchor(&self, agent: Agent) -> &[f64] {
        &self.anchor[agent.index()]
    }

    /// Tables for level `k >= 1`.
    #[inline]
    pub fn level(&self, agent: Agent, k: usize) -> &LevelSolution {
        assert!(k >= 1 && k <= self.k_max(), "level {k} outside 1..={}", self.k_max());
        &self.levels[k - 1][agent.index()]
    }

    /// `pi*[s][a]` for level `k >= 1`.
    #[inline]
    pub fn policy(&self, agent: Agent, k: usize) -> &[f64] {
        &self.level(agent, k).policy
    }

    /// `pi^{agent,k}(s, a)` for `k >= 1`.
    #[inline]
    pub fn prob(&self, agent: Agent, k: usize, s: usize, a: usize) -> f64 {
        self.policy(agent, k)[s * self.n_actions(agent) + a]
    }

    /// Probability row of `agent` at level `k` in state `s`.
    #[inline]
    pub fn row(&self, agent: Agent, k: usize, s: usize) -> &[f64] {
        let n = self.n_actions(agent);
        &self.policy(agent, k)[s * n..(s + 1) * n]
    }

    /// How `agent` at level `k` models its opponent.
    pub fn opponent_model(&self, agent: Agent, k: usize) -> OpponentModel<'_> {
        let opp = agent.opponent();
        if k == 1 {
            OpponentModel::Anchor(self.anchor(opp))
        } else {
            OpponentModel::Level(self.policy(opp, k - 1))
        }
    }
}

/// Boltzmann response `exp(beta Q) / sum exp(beta Q)`.
pub fn quantal_policy(q_row: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; q_row.len()];
    softmax_into(q_row, beta, &mut out);
    out
}

/// Level-0 follower row: softmax of `agent`'s one-step rewards given the
/// leader's action.
pub fn level0_policy(
    spec: &GameSpec,
    rp: &RewardParams,
    s: usize,
    a_leader: usize,
    agent: Agent,
) -> Result<Vec<f64>> {
    let n_own = spec.n_actions(agent);
    let (a1, a2) = agent.joint(0, a_leader);
    spec.checked_joint_index(s, a1, a2)?;
    let rewards: Vec<f64> = (0..n_own)
        .map(|own| {
            let (a1, a2) = agent.joint(own, a_leader);
            rp.realized(spec, agent, s, a1, a2)
        })
        .collect();
    Ok(quantal_policy(&rewards, 1.0))
}

/// Full level-0 table of `agent`, `[s][leader][own]`.
pub(crate) fn anchor_table(spec: &GameSpec, rewards: &RewardTable, agent: Agent) -> Vec<f64> {
    let n_own = spec.n_actions(agent);
    let n_lead = spec.n_actions(agent.opponent());
    let mut out = vec![0.0; spec.n_states() * n_lead * n_own];
    let mut logits = vec![0.0; n_own];
    for s in 0..spec.n_states() {
        for lead in 0..n_lead {
            for (own, l) in logits.iter_mut().enumerate() {
                *l = rewards.get(s, own, lead);
            }
            let base = (s * n_lead + lead) * n_own;
            softmax_into(&logits, 1.0, &mut out[base..base + n_own]);
        }
    }
    out
}

pub(crate) struct Bellman<'a> {
    pub(crate) spec: &'a GameSpec,
    pub(crate) rewards: &'a RewardTable,
    pub(crate) agent: Agent,
    pub(crate) alpha: f64,
    pub(crate) gamma: f64,
    pub(crate) opp: OpponentModel<'a>,
}

#[derive(Default)]
pub(crate) struct BellmanScratch {
    pub(crate) outcome_values: Vec<f64>,
    pub(crate) next_states: Vec<usize>,
    pub(crate) ranks: RankWeights,
}

impl<'a> Bellman<'a> {
    pub(crate) fn new(
        spec: &'a GameSpec,
        rewards: &'a RewardTable,
        cpt: &CptParams,
        agent: Agent,
        opp: OpponentModel<'a>,
    ) -> Self {
        Self {
            spec,
            rewards,
            agent,
            alpha: cpt.alpha_of(agent),
            gamma: cpt.gamma_of(agent),
            opp,
        }
    }

    #[inline]
    pub(crate) fn n_own(&self) -> usize {
        self.spec.n_actions(self.agent)
    }

    #[inline]
    pub(crate) fn n_opp(&self) -> usize {
        self.spec.n_actions(self.agent.opponent())
    }

    /// Fills outcome values `R + discount * V(s')` and successor states for
    /// `(s, own)`, then the normalized CPT weights over opponent actions.
    pub(crate) fn outcomes(&self, v: &[f64], s: usize, own: usize, sc: &mut BellmanScratch) {
        let n_opp = self.n_opp();
        let disc = self.spec.discount();
        sc.outcome_values.clear();
        sc.next_states.clear();
        for opp in 0..n_opp {
            let (a1, a2) = self.agent.joint(own, opp);
            let s_next = self.spec.next_state(s, a1, a2);
            let x = self.rewards.get(s, own, opp) + disc * v[s_next];
            debug_assert!(x >= 0.0, "negative gain {x}");
            sc.outcome_values.push(x);
            sc.next_states.push(s_next);
        }
        let probs = self.opp.probs(s, own, self.n_own(), n_opp);
        sc.ranks.compute(&sc.outcome_values, probs, self.gamma);
    }

    /// `Q(s, own)` under value table `v`.
    #[inline]
    pub(crate) fn q_value(&self, v: &[f64], s: usize, own: usize, sc: &mut BellmanScratch) -> f64 {
        self.outcomes(v, s, own, sc);
        sc.ranks
            .rho
            .iter()
            .zip(&sc.outcome_values)
            .map(|(r, &x)| r * utility_unchecked(x, self.alpha))
            .sum()
    }

    /// One Jacobi sweep; returns the sup-norm change.
    pub(crate) fn sweep(
        &self,
        v: &[f64],
        v_next: &mut [f64],
        q: &mut [f64],
        max_op: MaxOperator,
        sc: &mut BellmanScratch,
    ) -> f64 {
        let n_own = self.n_own();
        let mut residual: f64 = 0.0;
        for s in 0..self.spec.n_states() {
            let mut best = f64::NEG_INFINITY;
            for own in 0..n_own {
                let qa = self.q_value(v, s, own, sc);
                q[s * n_own + own] = qa;
                best = best.max(qa);
            }
            if let MaxOperator::Smooth { kappa } = max_op {
                best = smooth_max_unchecked(&q[s * n_own..(s + 1) * n_own], kappa);
            }
            v_next[s] = best;
            residual = residual.max(abs(best - v[s]));
        }
        residual
    }
}

/// One application of the CPT Bellman operator: returns `(V_next, Q)`.
pub fn cpt_bellman(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    v: &[f64],
    opp: OpponentModel<'_>,
    agent: Agent,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_values(spec, v)?;
    let rewards = RewardTable::new(spec, rp, agent);
    let op = Bellman::new(spec, &rewards, cpt, agent, opp);
    let mut v_next = vec![0.0; spec.n_states()];
    let mut q = vec![0.0; spec.n_states() * op.n_own()];
    op.sweep(v, &mut v_next, &mut q, MaxOperator::Hard, &mut BellmanScratch::default());
    Ok((v_next, q))
}

fn check_values(spec: &GameSpec, v: &[f64]) -> Result<()> {
    if v.len() != spec.n_states() {
        return Err(Error::Shape(alloc::format!(
            "value table has {} entries for {} states",
            v.len(),
            spec.n_states()
        )));
    }
    if let Some(&bad) = v.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain {
            what: "value table (gains only)",
            value: bad,
        });
    }
    Ok(())
}

/// Initial value `u(R_min) / (1 - discount)`.
fn initial_value(spec: &GameSpec, rp: &RewardParams, alpha: f64) -> f64 {
    let (r_min, _) = reward_bounds(spec, rp);
    utility_unchecked(r_min, alpha) / (1.0 - spec.discount())
}

/// Iterates the CPT Bellman operator for one agent and level to a fixed
/// point and forms its quantal policy.
pub fn solve_level(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    opp: OpponentModel<'_>,
    agent: Agent,
    opts: &SolverOptions,
) -> Result<LevelSolution> {
    let rewards = RewardTable::new(spec, rp, agent);
    let v0 = vec![initial_value(spec, rp, cpt.alpha_of(agent)); spec.n_states()];
    solve_level_from(spec, &rewards, cpt, opp, agent, opts, v0)
}

fn solve_level_from(
    spec: &GameSpec,
    rewards: &RewardTable,
    cpt: &CptParams,
    opp: OpponentModel<'_>,
    agent: Agent,
    opts: &SolverOptions,
    mut v: Vec<f64>,
) -> Result<LevelSolution> {
    let op = Bellman::new(spec, rewards, cpt, agent, opp);
    let n_own = op.n_own();
    let mut v_next = vec![0.0; spec.n_states()];
    let mut q = vec![0.0; spec.n_states() * n_own];
    let mut sc = BellmanScratch::default();
    let mut residuals = Vec::new();
    loop {
        let r = op.sweep(&v, &mut v_next, &mut q, opts.max_op, &mut sc);
        residuals.push(r);
        core::mem::swap(&mut v, &mut v_next);
        if r <= opts.tol {
            break;
        }
        if residuals.len() >= opts.max_sweeps {
            return Err(Error::NonConvergence {
                sweeps: residuals.len(),
                residual: r,
            });
        }
    }
    let mut policy = vec![0.0; q.len()];
    for s in 0..spec.n_states() {
        let row = s * n_own..(s + 1) * n_own;
        softmax_into(&q[row.clone()], cpt.beta, &mut policy[row]);
    }
    Ok(LevelSolution {
        value: v,
        q,
        policy,
        sweeps: residuals.len(),
        residuals,
    })
}

/// Solves levels `1..=k_max` for both agents, bottoming out at the level-0
/// follower.
pub fn solve_all(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<LevelPolicySet> {
    solve_all_warm(spec, rp, cpt, k_max, opts, None)
}

/// Like [`solve_all`], starting each level's iteration from `warm`'s values
/// when provided.
pub fn solve_all_warm(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    k_max: usize,
    opts: &SolverOptions,
    warm: Option<&LevelPolicySet>,
) -> Result<LevelPolicySet> {
    if k_max == 0 {
        return Err(Error::Parameter {
            name: "k_max",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    let rewards = [
        RewardTable::new(spec, rp, Agent::One),
        RewardTable::new(spec, rp, Agent::Two),
    ];
    let anchor = [
        anchor_table(spec, &rewards[0], Agent::One),
        anchor_table(spec, &rewards[1], Agent::Two),
    ];
    let mut set = LevelPolicySet {
        n_states: spec.n_states(),
        n_actions: [spec.n_actions(Agent::One), spec.n_actions(Agent::Two)],
        anchor,
        levels: Vec::with_capacity(k_max),
    };
    for k in 1..=k_max {
        let mut pair: Vec<LevelSolution> = Vec::with_capacity(2);
        for agent in Agent::BOTH {
            let v0 = match warm {
                Some(w) if w.k_max() >= k && w.n_states() == spec.n_states() => w.level(agent, k).value.clone(),
                _ => vec![initial_value(spec, rp, cpt.alpha_of(agent)); spec.n_states()],
            };
            let opp = set.opponent_model(agent, k);
            pair.push(solve_level_from(spec, &rewards[agent.index()], cpt, opp, agent, opts, v0)?);
        }
        let two = pair.pop().unwrap();
        let one = pair.pop().unwrap();
        set.levels.push([one, two]);
    }
    Ok(set)
}
