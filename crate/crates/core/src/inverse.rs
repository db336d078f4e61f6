//! Inverse learning from paired demonstrations.
//!
//! Intelligence levels are latent. For each agent a posterior over
//! `1..=k_max` is updated by Bayes' rule along the demonstration, starting
//! from uniform, and the likelihood of every joint action is its expectation
//! under the posteriors before that step. Because the two agents' posteriors
//! are independent the joint expectation factorizes, so each agent
//! contributes `log sum_k pi^k(s_t, a_t) b_t(k)` per step.
//!
//! Gradients are carried in log-posterior form. With `l_k = log pi^k`,
//!
//! ```text
//! d log b_{t+1}(k) = dl_k + d log b_t(k) - sum_j b_{t+1}(j) (dl_j + d log b_t(j))
//! d loglik_t       = sum_j b_{t+1}(j) (dl_j + d log b_t(j))
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::forward::{solve_all_warm, LevelPolicySet, SolverOptions};
use crate::game::{Agent, GameSpec};
use crate::gradient::{solve_gradients, GradientOptions, GradientTables};
use crate::math::{compensated_sum, ln};
use crate::params::{FixedParams, ParamBox, ParamLayout};
use crate::{Error, Result};

/// One joint decision: the state and both agents' actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Step {
    pub state: usize,
    pub actions: [usize; 2],
}

impl Step {
    pub fn new(state: usize, a1: usize, a2: usize) -> Self {
        Self {
            state,
            actions: [a1, a2],
        }
    }

    #[inline]
    pub fn action(&self, agent: Agent) -> usize {
        self.actions[agent.index()]
    }
}

/// A paired trajectory `(s_0, a_0), ..., (s_{N-1}, a_{N-1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Demonstration {
    pub steps: Vec<Step>,
    /// Ground-truth levels when the demo is synthetic.
    pub true_levels: Option<[usize; 2]>,
    /// Seed the synthetic demo was generated from.
    pub seed: Option<u64>,
}

impl Demonstration {
    pub fn new(steps: Vec<Step>) -> Self {
        Self {
            steps,
            true_levels: None,
            seed: None,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks indices, successive states against the transition function,
    /// and that nothing follows a collision.
    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidDemonstration("empty demonstration".into()));
        }
        for (t, st) in self.steps.iter().enumerate() {
            let (a1, a2) = (st.actions[0], st.actions[1]);
            spec.checked_joint_index(st.state, a1, a2)
                .map_err(|e| Error::InvalidDemonstration(format!("step {t}: {e}")))?;
            if let Some(next) = self.steps.get(t + 1) {
                if spec.is_collision(st.state, a1, a2) {
                    return Err(Error::InvalidDemonstration(format!("step {} follows a collision", t + 1)));
                }
                let expect = spec.next_state(st.state, a1, a2);
                if next.state != expect {
                    return Err(Error::InvalidDemonstration(format!(
                        "step {}: state {} but the transition gives {expect}",
                        t + 1,
                        next.state
                    )));
                }
            }
        }
        if let Some(levels) = self.true_levels {
            if levels.contains(&0) {
                return Err(Error::InvalidDemonstration("true levels start at 1".into()));
            }
        }
        Ok(())
    }
}

/// Bayes' rule: `prior(k) * likelihood(k)`, normalized.
pub fn posterior_update(prior: &[f64], likelihoods: &[f64]) -> Result<Vec<f64>> {
    if prior.len() != likelihoods.len() {
        return Err(Error::Shape("prior and likelihood lengths differ".into()));
    }
    let joint: Vec<f64> = prior.iter().zip(likelihoods).map(|(p, l)| p * l).collect();
    let z: f64 = joint.iter().sum();
    if !(z > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    Ok(joint.into_iter().map(|x| x / z).collect())
}

/// Posterior over levels `1..=k_max` of `agent` after observing action `a`
/// in state `s`.
pub fn level_posterior_update(
    prior: &[f64],
    policies: &LevelPolicySet,
    s: usize,
    a: usize,
    agent: Agent,
) -> Result<Vec<f64>> {
    check_simplex(prior, policies.k_max())?;
    let lik: Vec<f64> = (1..=policies.k_max()).map(|k| policies.prob(agent, k, s, a)).collect();
    posterior_update(prior, &lik)
}

fn check_simplex(p: &[f64], k_max: usize) -> Result<()> {
    if p.len() != k_max {
        return Err(Error::Shape(format!("posterior has {} entries for {k_max} levels", p.len())));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotADistribution { sum });
    }
    Ok(())
}

/// `log sum_{k1,k2} pi^{1,k1} pi^{2,k2} b1(k1) b2(k2)` for one joint action.
pub fn expected_action_loglik(
    policies: &LevelPolicySet,
    posterior_1: &[f64],
    posterior_2: &[f64],
    s: usize,
    a1: usize,
    a2: usize,
) -> f64 {
    let mix = |agent: Agent, b: &[f64], a: usize| -> f64 {
        b.iter().enumerate().map(|(i, bk)| bk * policies.prob(agent, i + 1, s, a)).sum()
    };
    ln(mix(Agent::One, posterior_1, a1)) + ln(mix(Agent::Two, posterior_2, a2))
}

/// Posterior of one agent together with `d log b(k) / d theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// `b(k)` for `k = 1..=k_max`.
    pub posterior: Vec<f64>,
    /// `[k][p]`
    pub log_grad: Vec<f64>,
}

impl Belief {
    pub fn uniform(k_max: usize, n_params: usize) -> Self {
        Self {
            posterior: vec![1.0 / k_max as f64; k_max],
            log_grad: vec![0.0; k_max * n_params],
        }
    }
}

/// Advances `belief` over one observed action; returns the step's
/// log-likelihood contribution and adds its gradient into `d_loglik`.
///
/// With `grads = None` only the posterior and likelihood are updated.
pub fn posterior_gradient_step(
    belief: &mut Belief,
    policies: &LevelPolicySet,
    grads: Option<&GradientTables>,
    s: usize,
    a: usize,
    agent: Agent,
    d_loglik: &mut [f64],
) -> f64 {
    let k_max = policies.k_max();
    let mut z = 0.0;
    for k in 1..=k_max {
        let w = belief.posterior[k - 1] * policies.prob(agent, k, s, a);
        belief.posterior[k - 1] = w;
        z += w;
    }
    for b in belief.posterior.iter_mut() {
        *b /= z;
    }
    if let Some(g) = grads {
        let n_p = g.layout().n_params();
        // log_grad[k] += dlog pi^k; the step gradient is its posterior mean
        for k in 1..=k_max {
            let pi = policies.prob(agent, k, s, a);
            let row = &mut belief.log_grad[(k - 1) * n_p..k * n_p];
            for (r, d) in row.iter_mut().zip(g.dpi(agent, k, s, a)) {
                *r += d / pi;
            }
        }
        let mut mean = vec![0.0; n_p];
        for k in 0..k_max {
            let b = belief.posterior[k];
            for (m, r) in mean.iter_mut().zip(&belief.log_grad[k * n_p..(k + 1) * n_p]) {
                *m += b * r;
            }
        }
        for k in 0..k_max {
            for (r, m) in belief.log_grad[k * n_p..(k + 1) * n_p].iter_mut().zip(&mean) {
                *r -= m;
            }
        }
        for (d, m) in d_loglik.iter_mut().zip(&mean) {
            *d += m;
        }
    }
    ln(z)
}

/// Log-likelihood of one demonstration, its gradient, and the final level
/// posteriors of both agents.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTerm {
    pub loglik: f64,
    /// Empty when no gradient tables were supplied.
    pub grad: Vec<f64>,
    pub posteriors: [Vec<f64>; 2],
}

pub fn demo_loglik_and_grad(
    policies: &LevelPolicySet,
    grads: Option<&GradientTables>,
    demo: &Demonstration,
) -> DemoTerm {
    let k_max = policies.k_max();
    let n_p = grads.map_or(0, |g| g.layout().n_params());
    let mut beliefs = [Belief::uniform(k_max, n_p), Belief::uniform(k_max, n_p)];
    let mut grad = vec![0.0; n_p];
    let mut terms = Vec::with_capacity(2 * demo.len());
    for st in &demo.steps {
        for agent in Agent::BOTH {
            terms.push(posterior_gradient_step(
                &mut beliefs[agent.index()],
                policies,
                grads,
                st.state,
                st.action(agent),
                agent,
                &mut grad,
            ));
        }
    }
    let [b1, b2] = beliefs;
    DemoTerm {
        loglik: compensated_sum(terms),
        grad,
        posteriors: [b1.posterior, b2.posterior],
    }
}

/// Sums demo terms in demo order, so any evaluation order of the terms
/// gives the same result.
pub fn reduce_terms(terms: &[DemoTerm], n_params: usize) -> (f64, Vec<f64>) {
    let ll = compensated_sum(terms.iter().map(|t| t.loglik));
    let grad = (0..n_params)
        .map(|p| compensated_sum(terms.iter().map(|t| t.grad.get(p).copied().unwrap_or(0.0))))
        .collect();
    (ll, grad)
}

/// Total log-likelihood and gradient over all demos, evaluated in order.
pub fn total_loglik_and_grad(
    policies: &LevelPolicySet,
    grads: Option<&GradientTables>,
    demos: &[Demonstration],
) -> (f64, Vec<f64>) {
    let terms: Vec<DemoTerm> = demos.iter().map(|d| demo_loglik_and_grad(policies, grads, d)).collect();
    reduce_terms(&terms, grads.map_or(0, |g| g.layout().n_params()))
}

/// Most probable level per agent after the whole demo; ties go to the
/// lower level.
pub fn infer_levels(policies: &LevelPolicySet, demo: &Demonstration) -> [usize; 2] {
    let term = demo_loglik_and_grad(policies, None, demo);
    let argmax = |b: &[f64]| {
        let mut best = 0;
        for (i, &x) in b.iter().enumerate() {
            if x > b[best] {
                best = i;
            }
        }
        best + 1
    };
    [argmax(&term.posteriors[0]), argmax(&term.posteriors[1])]
}

/// Settings of the ascent loop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LearnConfig {
    pub eta: f64,
    /// Number of ascent steps at most.
    pub max_epochs: usize,
    /// Stop once `|delta loglik|` stays below this ...
    pub conv_tol: f64,
    /// ... for this many consecutive epochs.
    pub patience: usize,
    pub k_max: usize,
    pub solver: SolverOptions,
    pub grad: GradientOptions,
    pub bounds: ParamBox,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            eta: 0.0015,
            max_epochs: 400,
            conv_tol: 1e-4,
            patience: 5,
            k_max: 2,
            solver: SolverOptions::default(),
            grad: GradientOptions::default(),
            bounds: ParamBox::default(),
        }
    }
}

/// Parameters and objective at the start of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
}

/// State of the learner after the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnState {
    pub theta: Vec<f64>,
    pub epoch: usize,
    pub eta: f64,
    pub converged: bool,
    /// Final level posteriors per demo and agent.
    pub posteriors: Vec<[Vec<f64>; 2]>,
    pub trace: Vec<EpochRecord>,
}

/// Random start: weights uniform in `[1.2, 2.2]`, weighting exponents 0.8.
pub fn init_theta<R: Rng + ?Sized>(layout: &ParamLayout, rng: &mut R) -> Vec<f64> {
    let mut theta = vec![0.8; layout.n_params()];
    for x in theta.iter_mut().skip(layout.n_gamma()) {
        *x = 1.2 + rng.random::<f64>();
    }
    theta
}

/// Gradient ascent on the total demo log-likelihood with projection onto
/// the parameter box. `observer` sees every epoch record with the policies
/// at that epoch's parameters.
pub fn learn<O>(
    spec: &GameSpec,
    fixed: &FixedParams,
    layout: &ParamLayout,
    demos: &[Demonstration],
    init: &[f64],
    cfg: &LearnConfig,
    observer: O,
) -> Result<LearnState>
where
    O: FnMut(&EpochRecord, &LevelPolicySet),
{
    learn_with(spec, fixed, layout, demos, init, cfg, observer, |p, g, d| {
        d.iter().map(|x| demo_loglik_and_grad(p, Some(g), x)).collect()
    })
}

/// [`learn`] with a caller-supplied evaluator of the per-demo terms, e.g.
/// a parallel one. The evaluator must return one term per demo, in order.
#[allow(clippy::too_many_arguments)]
pub fn learn_with<O, E>(
    spec: &GameSpec,
    fixed: &FixedParams,
    layout: &ParamLayout,
    demos: &[Demonstration],
    init: &[f64],
    cfg: &LearnConfig,
    mut observer: O,
    evaluate: E,
) -> Result<LearnState>
where
    O: FnMut(&EpochRecord, &LevelPolicySet),
    E: Fn(&LevelPolicySet, &GradientTables, &[Demonstration]) -> Vec<DemoTerm>,
{
    if demos.is_empty() {
        return Err(Error::InvalidDemonstration("no demonstrations".into()));
    }
    for d in demos {
        d.validate(spec)?;
    }
    let mut theta = init.to_vec();
    layout.project(&mut theta, &cfg.bounds);
    let mut trace = Vec::new();
    let mut warm: Option<LevelPolicySet> = None;
    let mut quiet = 0;
    let mut converged = false;
    let mut posteriors = Vec::new();
    for epoch in 0..=cfg.max_epochs {
        let (cpt, rp) = layout.unpack(spec, &theta, fixed)?;
        let policies = solve_all_warm(spec, &rp, &cpt, cfg.k_max, &cfg.solver, warm.as_ref())?;
        let grads = solve_gradients(spec, &rp, &cpt, layout, &policies, &cfg.grad)?;
        let terms = evaluate(&policies, &grads, demos);
        if terms.len() != demos.len() {
            return Err(Error::Shape("evaluator returned the wrong number of terms".into()));
        }
        let (loglik, grad) = reduce_terms(&terms, layout.n_params());
        let grad_norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
        if !loglik.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let record = EpochRecord {
            epoch,
            theta: theta.clone(),
            loglik,
            grad_norm,
        };
        observer(&record, &policies);
        if let Some(prev) = trace.last().map(|r: &EpochRecord| r.loglik) {
            if (loglik - prev).abs() < cfg.conv_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        trace.push(record);
        posteriors = terms.into_iter().map(|t| t.posteriors).collect();
        if quiet >= cfg.patience {
            converged = true;
            break;
        }
        if epoch == cfg.max_epochs {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t += cfg.eta * g;
        }
        layout.project(&mut theta, &cfg.bounds);
        warm = Some(policies);
    }
    let epoch = trace.last().map_or(0, |r| r.epoch);
    Ok(LearnState {
        theta,
        epoch,
        eta: cfg.eta,
        converged,
        posteriors,
        trace,
    })
}
