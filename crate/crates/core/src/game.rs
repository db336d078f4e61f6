//! Two-player Markov game data model.
//!
//! States and actions are dense indices. Every table is flat and indexed by
//! `(state, a1, a2)` in joint order, where `a1` is agent one's action and
//! `a2` agent two's, regardless of which agent is doing the reasoning.

use alloc::format;
use alloc::vec::Vec;

use crate::math::pow;
use crate::{Error, Result};

/// One of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Agent {
    One,
    Two,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::One, Agent::Two];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Agent::One => 0,
            Agent::Two => 1,
        }
    }

    #[inline]
    pub fn opponent(self) -> Agent {
        match self {
            Agent::One => Agent::Two,
            Agent::Two => Agent::One,
        }
    }

    /// Maps an ego-centric `(own, opponent)` action pair to joint `(a1, a2)` order.
    #[inline]
    pub fn joint(self, own: usize, opp: usize) -> (usize, usize) {
        match self {
            Agent::One => (own, opp),
            Agent::Two => (opp, own),
        }
    }
}

/// Finite two-player game with deterministic transitions and sparse features.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n_states: usize,
    n_actions: [usize; 2],
    feature_dim: usize,
    discount: f64,
    next: Vec<usize>,
    collision: Vec<bool>,
    // CSR layout per agent over joint (s, a1, a2) entries.
    feat_offsets: [Vec<u32>; 2],
    feat_entries: [Vec<(u32, f64)>; 2],
    absorbing: Vec<bool>,
}

impl GameSpec {
    /// Builds a game by tabulating the supplied functions over every
    /// `(state, a1, a2)` tuple.
    ///
    /// `features(s, own, opp, agent, out)` pushes the non-zero entries of
    /// that agent's feature vector. Every state in `absorbing` must map to
    /// itself under all joint actions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fns<T, C, F>(
        n_states: usize,
        n_actions: [usize; 2],
        feature_dim: usize,
        discount: f64,
        absorbing: &[usize],
        transition: T,
        collision: C,
        mut features: F,
    ) -> Result<Self>
    where
        T: Fn(usize, usize, usize) -> usize,
        C: Fn(usize, usize, usize) -> bool,
        F: FnMut(usize, usize, usize, Agent, &mut Vec<(usize, f64)>),
    {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Parameter {
                name: "discount",
                value: discount,
                expected: "(0, 1)",
            });
        }
        if n_states == 0 || n_actions[0] == 0 || n_actions[1] == 0 {
            return Err(Error::InvalidGame("empty state or action set".into()));
        }
        let n_joint = n_states * n_actions[0] * n_actions[1];
        let mut next = Vec::with_capacity(n_joint);
        let mut coll = Vec::with_capacity(n_joint);
        let mut feat_offsets = [Vec::with_capacity(n_joint + 1), Vec::with_capacity(n_joint + 1)];
        let mut feat_entries: [Vec<(u32, f64)>; 2] = [Vec::new(), Vec::new()];
        feat_offsets[0].push(0);
        feat_offsets[1].push(0);
        let mut buf = Vec::new();
        for s in 0..n_states {
            for a1 in 0..n_actions[0] {
                for a2 in 0..n_actions[1] {
                    let s_next = transition(s, a1, a2);
                    if s_next >= n_states {
                        return Err(Error::InvalidGame(format!(
                            "transition ({s}, {a1}, {a2}) -> {s_next} leaves the state space"
                        )));
                    }
                    next.push(s_next);
                    coll.push(collision(s, a1, a2));
                    for agent in Agent::BOTH {
                        let (own, opp) = match agent {
                            Agent::One => (a1, a2),
                            Agent::Two => (a2, a1),
                        };
                        buf.clear();
                        features(s, own, opp, agent, &mut buf);
                        let i = agent.index();
                        for &(j, v) in &buf {
                            if j >= feature_dim {
                                return Err(Error::Index {
                                    what: "feature",
                                    index: j,
                                    len: feature_dim,
                                });
                            }
                            if v != 0.0 {
                                feat_entries[i].push((j as u32, v));
                            }
                        }
                        feat_offsets[i].push(feat_entries[i].len() as u32);
                    }
                }
            }
        }
        let mut absorbing_mask = alloc::vec![false; n_states];
        for &s in absorbing {
            if s >= n_states {
                return Err(Error::Index {
                    what: "absorbing state",
                    index: s,
                    len: n_states,
                });
            }
            absorbing_mask[s] = true;
            let base = s * n_actions[0] * n_actions[1];
            if next[base..base + n_actions[0] * n_actions[1]].iter().any(|&t| t != s) {
                return Err(Error::InvalidGame(format!(
                    "absorbing state {s} does not self-loop under every joint action"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            feature_dim,
            discount,
            next,
            collision: coll,
            feat_offsets,
            feat_entries,
            absorbing: absorbing_mask,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self, agent: Agent) -> usize {
        self.n_actions[agent.index()]
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    #[inline]
    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[inline]
    pub fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing[s]
    }

    #[inline]
    pub(crate) fn joint_index(&self, s: usize, a1: usize, a2: usize) -> usize {
        (s * self.n_actions[0] + a1) * self.n_actions[1] + a2
    }

    /// Checked index of `(s, a1, a2)`.
    pub fn checked_joint_index(&self, s: usize, a1: usize, a2: usize) -> Result<usize> {
        if s >= self.n_states {
            return Err(Error::Index {
                what: "state",
                index: s,
                len: self.n_states,
            });
        }
        for (a, n) in [(a1, self.n_actions[0]), (a2, self.n_actions[1])] {
            if a >= n {
                return Err(Error::Index {
                    what: "action",
                    index: a,
                    len: n,
                });
            }
        }
        Ok(self.joint_index(s, a1, a2))
    }

    #[inline]
    pub fn next_state(&self, s: usize, a1: usize, a2: usize) -> usize {
        self.next[self.joint_index(s, a1, a2)]
    }

    #[inline]
    pub fn is_collision(&self, s: usize, a1: usize, a2: usize) -> bool {
        self.collision[self.joint_index(s, a1, a2)]
    }

    /// Sparse feature vector of `agent` for joint actions `(a1, a2)`.
    #[inline]
    pub fn features(&self, agent: Agent, s: usize, a1: usize, a2: usize) -> &[(u32, f64)] {
        let i = agent.index();
        let k = self.joint_index(s, a1, a2);
        let lo = self.feat_offsets[i][k] as usize;
        let hi = self.feat_offsets[i][k + 1] as usize;
        &self.feat_entries[i][lo..hi]
    }
}

/// Linear reward weights for both agents.
///
/// Realized reward is `omega_i . phi_i` off collisions and the fixed
/// `collision_reward` on collisions. Construction guarantees every realized
/// reward is at least 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardParams {
    omega: [Vec<f64>; 2],
    collision_reward: f64,
}

pub const DEFAULT_COLLISION_REWARD: f64 = 1.0;

impl RewardParams {
    pub fn new(
        spec: &GameSpec,
        omega_1: Vec<f64>,
        omega_2: Vec<f64>,
        collision_reward: f64,
    ) -> Result<Self> {
        for w in [&omega_1, &omega_2] {
            if w.len() != spec.feature_dim() {
                return Err(Error::Shape(format!(
                    "reward weights have {} entries, game has {} features",
                    w.len(),
                    spec.feature_dim()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain {
                    what: "reward weights",
                    value: f64::NAN,
                });
            }
        }
        let rp = Self {
            omega: [omega_1, omega_2],
            collision_reward,
        };
        for agent in Agent::BOTH {
            for s in 0..spec.n_states() {
                for a1 in 0..spec.n_actions(Agent::One) {
                    for a2 in 0..spec.n_actions(Agent::Two) {
                        let r = rp.realized(spec, agent, s, a1, a2);
                        if r < 1.0 {
                            return Err(Error::RewardBelowOne {
                                agent: agent.index(),
                                state: s,
                                reward: r,
                            });
                        }
                    }
                }
            }
        }
        Ok(rp)
    }

    #[inline]
    pub fn omega(&self, agent: Agent) -> &[f64] {
        &self.omega[agent.index()]
    }

    #[inline]
    pub fn collision_reward(&self) -> f64 {
        self.collision_reward
    }

    /// Reward of `agent` for joint actions `(a1, a2)`, no bounds checks.
    #[inline]
    pub(crate) fn realized(&self, spec: &GameSpec, agent: Agent, s: usize, a1: usize, a2: usize) -> f64 {
        if spec.is_collision(s, a1, a2) {
            self.collision_reward
        } else {
            dot_sparse(&self.omega[agent.index()], spec.features(agent, s, a1, a2))
        }
    }
}

#[inline]
pub(crate) fn dot_sparse(dense: &[f64], sparse: &[(u32, f64)]) -> f64 {
    sparse.iter().map(|&(j, v)| dense[j as usize] * v).sum()
}

/// Ego-centric reward table `[s][own][opp]` for one agent.
#[derive(Debug, Clone)]
pub(crate) struct RewardTable {
    n_own: usize,
    n_opp: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub(crate) fn new(spec: &GameSpec, rp: &RewardParams, agent: Agent) -> Self {
        let n_own = spec.n_actions(agent);
        let n_opp = spec.n_actions(agent.opponent());
        let mut values = Vec::with_capacity(spec.n_states() * n_own * n_opp);
        for s in 0..spec.n_states() {
            for own in 0..n_own {
                for opp in 0..n_opp {
                    let (a1, a2) = agent.joint(own, opp);
                    values.push(rp.realized(spec, agent, s, a1, a2));
                }
            }
        }
        Self { n_own, n_opp, values }
    }

    #[inline]
    pub(crate) fn get(&self, s: usize, own: usize, opp: usize) -> f64 {
        self.values[(s * self.n_own + own) * self.n_opp + opp]
    }
}

/// Reward of `agent` taking `a_i` while the opponent takes `a_neg_i`.
pub fn reward(
    spec: &GameSpec,
    rp: &RewardParams,
    s: usize,
    a_i: usize,
    a_neg_i: usize,
    agent: Agent,
) -> Result<f64> {
    let (a1, a2) = agent.joint(a_i, a_neg_i);
    spec.checked_joint_index(s, a1, a2)?;
    Ok(rp.realized(spec, agent, s, a1, a2))
}

/// Exact `(R_min, R_max)` over every state, joint action and agent.
pub fn reward_bounds(spec: &GameSpec, rp: &RewardParams) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for agent in Agent::BOTH {
        for s in 0..spec.n_states() {
            for a1 in 0..spec.n_actions(Agent::One) {
                for a2 in 0..spec.n_actions(Agent::Two) {
                    let r = rp.realized(spec, agent, s, a1, a2);
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
    }
    (lo, hi)
}

/// Largest `R_max / R_min^(2 - alpha) * alpha * discount` over both agents.
pub fn gradient_condition_bound(spec: &GameSpec, rp: &RewardParams, cpt: &CptParams) -> f64 {
    let (r_min, r_max) = reward_bounds(spec, rp);
    cpt.alpha
        .iter()
        .map(|&a| r_max / pow(r_min, 2.0 - a) * a * spec.discount())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// True when the value-gradient iteration is a contraction for both agents.
pub fn check_gradient_condition(spec: &GameSpec, rp: &RewardParams, cpt: &CptParams) -> bool {
    gradient_condition_bound(spec, rp, cpt) < 1.0
}

/// Risk-measure parameters of both agents and the shared Boltzmann `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CptParams {
    /// Utility exponents `u(x) = x^alpha`.
    pub alpha: [f64; 2],
    /// Probability weighting exponents.
    pub gamma: [f64; 2],
    /// Inverse temperature of the quantal response.
    pub beta: f64,
}

impl CptParams {
    pub fn new(alpha: [f64; 2], gamma: [f64; 2], beta: f64) -> Result<Self> {
        for &a in &alpha {
            check_unit_exponent("alpha", a)?;
        }
        for &g in &gamma {
            check_unit_exponent("gamma", g)?;
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter {
                name: "beta",
                value: beta,
                expected: "[0, inf)",
            });
        }
        Ok(Self { alpha, gamma, beta })
    }

    /// Same `alpha` and `gamma` for both agents, `beta = 1`.
    pub fn symmetric(alpha: f64, gamma: f64) -> Result<Self> {
        Self::new([alpha; 2], [gamma; 2], 1.0)
    }

    /// `alpha = gamma = 1`: CPT collapses to the expectation.
    pub fn risk_neutral() -> Self {
        Self {
            alpha: [1.0; 2],
            gamma: [1.0; 2],
            beta: 1.0,
        }
    }

    #[inline]
    pub fn alpha_of(&self, agent: Agent) -> f64 {
        self.alpha[agent.index()]
    }

    #[inline]
    pub fn gamma_of(&self, agent: Agent) -> f64 {
        self.gamma[agent.index()]
    }
}

/// Whether agents score outcomes with CPT or with plain expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RiskMode {
    #[default]
    Cpt,
    Neutral,
}

impl RiskMode {
    /// Parameters for this mode; `Neutral` ignores `cpt` except for `beta`.
    pub fn params(self, cpt: &CptParams) -> CptParams {
        match self {
            RiskMode::Cpt => *cpt,
            RiskMode::Neutral => CptParams {
                beta: cpt.beta,
                ..CptParams::risk_neutral()
            },
        }
    }
}

pub(crate) fn check_unit_exponent(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value: x,
            expected: "(0, 1]",
        })
    }
}
