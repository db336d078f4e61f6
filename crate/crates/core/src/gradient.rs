//! Exact parameter gradients of the level-k policies.
//!
//! The hard max in the Bellman operator is replaced by the smooth max
//! `(sum Q^kappa)^(1/kappa)` for differentiation only; the value tables
//! themselves come from the forward solver. With the forward fixed point
//! frozen, the value gradient satisfies a linear fixed-point equation
//!
//! ```text
//! dV(s) = sum_a c(s,a) [ C(s,a) + sum_o rho_o u'(x_o) discount dV(s'_o) ]
//! ```
//!
//! where `c` are smooth-max weights and `C` collects everything that does
//! not depend on `dV`: the derivative of the decision weights (through the
//! weighting exponent and through the opponent's policy) and of the
//! rewards. It is solved by iteration from zero, one level at a time, so
//! the opponent's level k-1 gradient is known when level k is processed.

use alloc::vec;
use alloc::vec::Vec;

use crate::cpt::{clamp_prob, utility_derivative_unchecked, utility_unchecked, weight_dgamma_unchecked, weight_dp_unchecked};
use crate::forward::{anchor_table, Bellman, BellmanScratch, LevelPolicySet, OpponentModel};
use crate::game::{gradient_condition_bound, Agent, CptParams, GameSpec, RewardParams, RewardTable};
use crate::math::{abs, pow, smooth_max_unchecked};
use crate::params::ParamLayout;
use crate::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientOptions {
    pub kappa: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

/// `(sum x_i^kappa)^(1/kappa)` for positive `x`.
pub fn smooth_max(x: &[f64], kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Parameter {
            name: "kappa",
            value: kappa,
            expected: "(0, inf)",
        });
    }
    if let Some(&bad) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain {
            what: "smooth max (positive entries only)",
            value: bad,
        });
    }
    if x.is_empty() {
        return Err(Error::Shape("smooth max of an empty vector".into()));
    }
    Ok(smooth_max_unchecked(x, kappa))
}

/// Partial derivatives of the smooth max, `(x_a / SM)^(kappa - 1)`,
/// evaluated without overflow.
pub(crate) fn smooth_max_weights(x: &[f64], kappa: f64, out: &mut [f64]) {
    let m = x.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let r = v / m;
        *o = pow(r, kappa - 1.0);
        s += *o * r;
    }
    let scale = pow(s, -(kappa - 1.0) / kappa);
    for o in out.iter_mut() {
        *o *= scale;
    }
}

/// How the opponent's action probabilities move with the parameters.
#[derive(Debug, Clone, Copy)]
pub enum OpponentGradient<'a> {
    /// `[s][leader][own][p]`, paired with [`OpponentModel::Anchor`].
    Anchor(&'a [f64]),
    /// `[s][a][p]`, paired with [`OpponentModel::Level`].
    Level(&'a [f64]),
}

impl<'a> OpponentGradient<'a> {
    /// Gradient rows of all opponent actions, `[o][p]`.
    #[inline]
    fn rows(&self, s: usize, own: usize, n_own: usize, n_opp: usize, n_p: usize) -> &'a [f64] {
        match *self {
            OpponentGradient::Anchor(t) => {
                let base = (s * n_own + own) * n_opp * n_p;
                &t[base..base + n_opp * n_p]
            }
            OpponentGradient::Level(t) => &t[s * n_opp * n_p..(s + 1) * n_opp * n_p],
        }
    }
}

/// Gradient of one agent's level-0 row given the leader's action, `[own][p]`.
pub fn level0_policy_gradient(
    spec: &GameSpec,
    rp: &RewardParams,
    layout: &ParamLayout,
    s: usize,
    a_leader: usize,
    agent: Agent,
) -> Result<Vec<f64>> {
    check_layout(spec, layout)?;
    let (a1, a2) = agent.joint(0, a_leader);
    spec.checked_joint_index(s, a1, a2)?;
    let rewards = RewardTable::new(spec, rp, agent);
    let n_own = spec.n_actions(agent);
    let mut pi = vec![0.0; n_own];
    let mut out = vec![0.0; n_own * layout.n_params()];
    anchor_row_gradient(spec, &rewards, layout, agent, s, a_leader, &mut pi, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn anchor_row_gradient(
    spec: &GameSpec,
    rewards: &RewardTable,
    layout: &ParamLayout,
    agent: Agent,
    s: usize,
    lead: usize,
    pi: &mut [f64],
    out: &mut [f64],
) {
    let n_p = layout.n_params();
    let off = layout.omega_offset(agent);
    let logits: Vec<f64> = (0..pi.len()).map(|own| rewards.get(s, own, lead)).collect();
    crate::math::softmax_into(&logits, 1.0, pi);
    out.fill(0.0);
    // out[own] = pi_own * (dR_own - sum_b pi_b dR_b), dR sparse in the omega block
    let mut mean = vec![0.0; layout.feature_dim()];
    for (own, &p) in pi.iter().enumerate() {
        let (a1, a2) = agent.joint(own, lead);
        if spec.is_collision(s, a1, a2) {
            continue;
        }
        for &(j, v) in spec.features(agent, s, a1, a2) {
            mean[j as usize] += p * v;
            out[own * n_p + off + j as usize] += v;
        }
    }
    for (own, &p) in pi.iter().enumerate() {
        let row = &mut out[own * n_p + off..own * n_p + off + layout.feature_dim()];
        for (r, m) in row.iter_mut().zip(&mean) {
            *r = p * (*r - m);
        }
    }
}

/// Level-0 gradient table `[s][leader][own][p]` of `agent`.
fn anchor_gradient_table(spec: &GameSpec, rewards: &RewardTable, layout: &ParamLayout, agent: Agent) -> Vec<f64> {
    let n_own = spec.n_actions(agent);
    let n_lead = spec.n_actions(agent.opponent());
    let block = n_own * layout.n_params();
    let mut out = vec![0.0; spec.n_states() * n_lead * block];
    let mut pi = vec![0.0; n_own];
    for s in 0..spec.n_states() {
        for lead in 0..n_lead {
            let base = (s * n_lead + lead) * block;
            anchor_row_gradient(spec, rewards, layout, agent, s, lead, &mut pi, &mut out[base..base + block]);
        }
    }
    out
}

fn check_layout(spec: &GameSpec, layout: &ParamLayout) -> Result<()> {
    if layout.feature_dim() != spec.feature_dim() {
        return Err(Error::Shape(alloc::format!(
            "layout has {} features, game has {}",
            layout.feature_dim(),
            spec.feature_dim()
        )));
    }
    Ok(())
}

/// The linear system of one agent at one level, frozen at the forward
/// fixed point.
struct GradSystem {
    n_own: usize,
    n_opp: usize,
    n_p: usize,
    /// `C[s][a][p]`
    constant: Vec<f64>,
    /// `[s][a][o]` successor states and `rho_o u'(x_o) discount`
    next: Vec<usize>,
    coef: Vec<f64>,
    /// Smooth-max weights `[s][a]`.
    smw: Vec<f64>,
}

#[derive(Default)]
struct SystemScratch {
    bellman: BellmanScratch,
    dp_sorted: Vec<f64>,
    d_prefix: Vec<f64>,
    dg_prev: Vec<f64>,
    dg: Vec<f64>,
    d_rho_tilde: Vec<f64>,
    d_total: Vec<f64>,
    q_row: Vec<f64>,
}

impl GradSystem {
    fn build(
        op: &Bellman<'_>,
        v_star: &[f64],
        d_opp: OpponentGradient<'_>,
        layout: &ParamLayout,
        kappa: f64,
    ) -> Self {
        let spec = op.spec;
        let (n_own, n_opp, n_p) = (op.n_own(), op.n_opp(), layout.n_params());
        let n_s = spec.n_states();
        let mut sys = GradSystem {
            n_own,
            n_opp,
            n_p,
            constant: vec![0.0; n_s * n_own * n_p],
            next: vec![0; n_s * n_own * n_opp],
            coef: vec![0.0; n_s * n_own * n_opp],
            smw: vec![0.0; n_s * n_own],
        };
        let mut sc = SystemScratch::default();
        sc.q_row.resize(n_own, 0.0);
        for s in 0..n_s {
            for own in 0..n_own {
                let q = sys.fill_pair(op, v_star, d_opp, layout, s, own, &mut sc);
                sc.q_row[own] = q;
            }
            smooth_max_weights(&sc.q_row, kappa, &mut sys.smw[s * n_own..(s + 1) * n_own]);
        }
        sys
    }

    /// Fills `C`, successors and coefficients for `(s, own)`; returns `Q*`.
    #[allow(clippy::too_many_arguments)]
    fn fill_pair(
        &mut self,
        op: &Bellman<'_>,
        v_star: &[f64],
        d_opp: OpponentGradient<'_>,
        layout: &ParamLayout,
        s: usize,
        own: usize,
        sc: &mut SystemScratch,
    ) -> f64 {
        let (n_own, n_opp, n_p) = (self.n_own, self.n_opp, self.n_p);
        let spec = op.spec;
        let agent = op.agent;
        let (alpha, gamma) = (op.alpha, op.gamma);
        op.outcomes(v_star, s, own, &mut sc.bellman);
        let bs = &sc.bellman;
        let rk = &bs.ranks;
        let pair = s * n_own + own;
        let c = &mut self.constant[pair * n_p..(pair + 1) * n_p];
        c.fill(0.0);

        // sorted opponent-probability gradients, zeroed where the
        // probability is clamped away
        let d_rows = d_opp.rows(s, own, n_own, n_opp, n_p);
        sc.dp_sorted.clear();
        for (j, &o) in rk.order.iter().enumerate() {
            if clamp_prob(rk.sorted_probs[j]) > 0.0 {
                sc.dp_sorted.extend_from_slice(&d_rows[o * n_p..(o + 1) * n_p]);
            } else {
                sc.dp_sorted.extend(core::iter::repeat_n(0.0, n_p));
            }
        }
        let mass: f64 = rk.sorted_probs.iter().map(|&p| clamp_prob(p)).sum();
        let last = rk.sorted_probs.iter().rposition(|&p| clamp_prob(p) > 0.0);
        sc.d_total.clear();
        sc.d_total.resize(n_p, 0.0);
        for j in 0..n_opp {
            for (t, d) in sc.d_total.iter_mut().zip(&sc.dp_sorted[j * n_p..(j + 1) * n_p]) {
                *t += d;
            }
        }
        let d_mass = sc.d_total.clone();

        // d rho_tilde_j = w'(G_j) dG_j - w'(G_{j-1}) dG_{j-1} + (w_g(G_j) - w_g(G_{j-1})) e_gamma
        sc.d_prefix.clear();
        sc.d_prefix.resize(n_p, 0.0);
        sc.dg_prev.clear();
        sc.dg_prev.resize(n_p, 0.0);
        sc.dg.resize(n_p, 0.0);
        sc.d_rho_tilde.clear();
        sc.d_rho_tilde.resize(n_opp * n_p, 0.0);
        let g_idx = layout.gamma_index(agent);
        let mut prefix = 0.0;
        let (mut wdp_prev, mut wg_prev) = (0.0, 0.0);
        for j in 0..n_opp {
            prefix += clamp_prob(rk.sorted_probs[j]);
            for (dp, d) in sc.d_prefix.iter_mut().zip(&sc.dp_sorted[j * n_p..(j + 1) * n_p]) {
                *dp += d;
            }
            let pinned = matches!(last, Some(l) if j >= l) || last.is_none();
            let g = match last {
                Some(l) if j >= l => 1.0,
                Some(_) => (prefix / mass).min(1.0),
                None => 0.0,
            };
            if pinned {
                sc.dg.fill(0.0);
            } else {
                for ((dg, dp), dm) in sc.dg.iter_mut().zip(&sc.d_prefix).zip(&d_mass) {
                    *dg = (dp - g * dm) / mass;
                }
            }
            let wdp = if pinned { 0.0 } else { weight_dp_unchecked(g, gamma) };
            let wg = weight_dgamma_unchecked(g, gamma);
            let row = &mut sc.d_rho_tilde[j * n_p..(j + 1) * n_p];
            for ((r, dg), dgp) in row.iter_mut().zip(&sc.dg).zip(&sc.dg_prev) {
                *r = wdp * dg - wdp_prev * dgp;
            }
            row[g_idx] += wg - wg_prev;
            core::mem::swap(&mut sc.dg, &mut sc.dg_prev);
            wdp_prev = wdp;
            wg_prev = wg;
        }

        // quotient rule for rho = rho_tilde / T
        let total = rk.total;
        sc.d_total.fill(0.0);
        for j in 0..n_opp {
            for (t, d) in sc.d_total.iter_mut().zip(&sc.d_rho_tilde[j * n_p..(j + 1) * n_p]) {
                *t += d;
            }
        }
        let mut q = 0.0;
        for (j, &o) in rk.order.iter().enumerate() {
            let x = bs.outcome_values[o];
            let u = utility_unchecked(x, alpha);
            let rho = rk.rho[o];
            q += rho * u;
            let row = &sc.d_rho_tilde[j * n_p..(j + 1) * n_p];
            for ((cp, dr), dt) in c.iter_mut().zip(row).zip(&sc.d_total) {
                *cp += (dr - rho * dt) / total * u;
            }
        }

        // reward and continuation terms
        let off = layout.omega_offset(agent);
        let disc = spec.discount();
        for o in 0..n_opp {
            let x = bs.outcome_values[o];
            let w = rk.rho[o] * utility_derivative_unchecked(x, alpha);
            let (a1, a2) = agent.joint(own, o);
            if !spec.is_collision(s, a1, a2) {
                for &(j, v) in spec.features(agent, s, a1, a2) {
                    c[off + j as usize] += w * v;
                }
            }
            self.next[pair * n_opp + o] = bs.next_states[o];
            self.coef[pair * n_opp + o] = w * disc;
        }
        q
    }

    /// `dQ(s, a) = C(s, a) + sum_o coef_o dV(s'_o)` for every pair.
    fn dq(&self, dv: &[f64], dq: &mut [f64]) {
        let (n_opp, n_p) = (self.n_opp, self.n_p);
        for pair in 0..self.smw.len() {
            let out = &mut dq[pair * n_p..(pair + 1) * n_p];
            out.copy_from_slice(&self.constant[pair * n_p..(pair + 1) * n_p]);
            for o in 0..n_opp {
                let k = pair * n_opp + o;
                let w = self.coef[k];
                if w == 0.0 {
                    continue;
                }
                let src = &dv[self.next[k] * n_p..(self.next[k] + 1) * n_p];
                for (d, s) in out.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }

    /// Smooth-max chain rule; returns the sup-norm change from `dv`.
    fn dv_from_dq(&self, dq: &[f64], dv: &[f64], dv_next: &mut [f64]) -> f64 {
        let (n_own, n_p) = (self.n_own, self.n_p);
        let mut residual: f64 = 0.0;
        for s in 0..self.smw.len() / n_own {
            let out = &mut dv_next[s * n_p..(s + 1) * n_p];
            out.fill(0.0);
            for a in 0..n_own {
                let c = self.smw[s * n_own + a];
                let pair = s * n_own + a;
                for (d, q) in out.iter_mut().zip(&dq[pair * n_p..(pair + 1) * n_p]) {
                    *d += c * q;
                }
            }
            for (a, b) in out.iter().zip(&dv[s * n_p..(s + 1) * n_p]) {
                residual = residual.max(abs(a - b));
            }
        }
        residual
    }
}

/// One value-gradient sweep: returns `(dV_next, dQ)` from the frozen
/// forward values `v_star` and the current gradient `dv` (`[s][p]`).
#[allow(clippy::too_many_arguments)]
pub fn grad_bellman(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    layout: &ParamLayout,
    v_star: &[f64],
    dv: &[f64],
    opp: OpponentModel<'_>,
    d_opp: OpponentGradient<'_>,
    agent: Agent,
    kappa: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_layout(spec, layout)?;
    check_condition(spec, rp, cpt)?;
    let n_p = layout.n_params();
    if v_star.len() != spec.n_states() || dv.len() != spec.n_states() * n_p {
        return Err(Error::Shape("value or value-gradient table size".into()));
    }
    let rewards = RewardTable::new(spec, rp, agent);
    let op = Bellman::new(spec, &rewards, cpt, agent, opp);
    let sys = GradSystem::build(&op, v_star, d_opp, layout, kappa);
    let mut dq = vec![0.0; spec.n_states() * op.n_own() * n_p];
    sys.dq(dv, &mut dq);
    let mut dv_next = vec![0.0; dv.len()];
    sys.dv_from_dq(&dq, dv, &mut dv_next);
    Ok((dv_next, dq))
}

fn check_condition(spec: &GameSpec, rp: &RewardParams, cpt: &CptParams) -> Result<()> {
    let bound = gradient_condition_bound(spec, rp, cpt);
    if bound >= 1.0 {
        return Err(Error::GradientCondition { bound });
    }
    Ok(())
}

/// Gradient tables of one agent at one level; rows are `p`-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGradient {
    /// `dV[s][p]`
    pub dv: Vec<f64>,
    /// `dQ[s][a][p]`
    pub dq: Vec<f64>,
    /// `dpi[s][a][p]`
    pub dpi: Vec<f64>,
    pub sweeps: usize,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTables {
    layout: ParamLayout,
    kappa: f64,
    n_actions: [usize; 2],
    anchor: [Vec<f64>; 2],
    levels: Vec<[LevelGradient; 2]>,
}

impl GradientTables {
    #[inline]
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[inline]
    pub fn k_max(&self) -> usize {
        self.levels.len()
    }

    /// Level-0 gradient `[s][leader][own][p]`.
    #[inline]
    pub fn anchor(&self, agent: Agent) -> &[f64] {
        &self.anchor[agent.index()]
    }

    #[inline]
    pub fn level(&self, agent: Agent, k: usize) -> &LevelGradient {
        assert!(k >= 1 && k <= self.k_max(), "level {k} outside 1..={}", self.k_max());
        &self.levels[k - 1][agent.index()]
    }

    /// `d pi^{agent,k}(s, a) / d theta`.
    #[inline]
    pub fn dpi(&self, agent: Agent, k: usize, s: usize, a: usize) -> &[f64] {
        let n_p = self.layout.n_params();
        let i = s * self.n_actions[agent.index()] + a;
        &self.level(agent, k).dpi[i * n_p..(i + 1) * n_p]
    }

    fn opponent_gradient(&self, agent: Agent, k: usize) -> OpponentGradient<'_> {
        let opp = agent.opponent();
        if k == 1 {
            OpponentGradient::Anchor(self.anchor(opp))
        } else {
            OpponentGradient::Level(&self.level(opp, k - 1).dpi)
        }
    }
}

/// Value-gradient iteration for every agent and level of `policies`.
pub fn solve_gradients(
    spec: &GameSpec,
    rp: &RewardParams,
    cpt: &CptParams,
    layout: &ParamLayout,
    policies: &LevelPolicySet,
    opts: &GradientOptions,
) -> Result<GradientTables> {
    check_layout(spec, layout)?;
    check_condition(spec, rp, cpt)?;
    if policies.n_states() != spec.n_states() {
        return Err(Error::Shape("policy set does not match the game".into()));
    }
    let rewards = [RewardTable::new(spec, rp, Agent::One), RewardTable::new(spec, rp, Agent::Two)];
    debug_assert_eq!(anchor_table(spec, &rewards[0], Agent::One), policies.anchor(Agent::One));
    let mut tables = GradientTables {
        layout: *layout,
        kappa: opts.kappa,
        n_actions: [spec.n_actions(Agent::One), spec.n_actions(Agent::Two)],
        anchor: [
            anchor_gradient_table(spec, &rewards[0], layout, Agent::One),
            anchor_gradient_table(spec, &rewards[1], layout, Agent::Two),
        ],
        levels: Vec::with_capacity(policies.k_max()),
    };
    for k in 1..=policies.k_max() {
        let mut pair = Vec::with_capacity(2);
        for agent in Agent::BOTH {
            let op = Bellman::new(spec, &rewards[agent.index()], cpt, agent, policies.opponent_model(agent, k));
            let sol = policies.level(agent, k);
            let sys = GradSystem::build(&op, &sol.value, tables.opponent_gradient(agent, k), layout, opts.kappa);
            pair.push(iterate(&sys, &sol.policy, cpt.beta, opts)?);
        }
        let two = pair.pop().unwrap();
        let one = pair.pop().unwrap();
        tables.levels.push([one, two]);
    }
    Ok(tables)
}

fn iterate(sys: &GradSystem, policy: &[f64], beta: f64, opts: &GradientOptions) -> Result<LevelGradient> {
    let (n_own, n_p) = (sys.n_own, sys.n_p);
    let n_s = sys.smw.len() / n_own;
    let mut dv = vec![0.0; n_s * n_p];
    let mut dv_next = vec![0.0; n_s * n_p];
    let mut dq = vec![0.0; n_s * n_own * n_p];
    let mut residuals = Vec::new();
    loop {
        sys.dq(&dv, &mut dq);
        let r = sys.dv_from_dq(&dq, &dv, &mut dv_next);
        residuals.push(r);
        core::mem::swap(&mut dv, &mut dv_next);
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
    // dQ consistent with the returned dV
    sys.dq(&dv, &mut dq);
    let mut dpi = vec![0.0; dq.len()];
    let mut mean = vec![0.0; n_p];
    for s in 0..n_s {
        mean.fill(0.0);
        for a in 0..n_own {
            let p = policy[s * n_own + a];
            let i = s * n_own + a;
            for (m, d) in mean.iter_mut().zip(&dq[i * n_p..(i + 1) * n_p]) {
                *m += p * d;
            }
        }
        for a in 0..n_own {
            let p = policy[s * n_own + a];
            let i = s * n_own + a;
            for ((o, d), m) in dpi[i * n_p..(i + 1) * n_p].iter_mut().zip(&dq[i * n_p..(i + 1) * n_p]).zip(&mean) {
                *o = beta * p * (d - m);
            }
        }
    }
    Ok(LevelGradient {
        dv,
        dq,
        dpi,
        sweeps: residuals.len(),
        residuals,
    })
}
