//! Finite-difference checks of the analytic gradients.

use std::collections::BTreeMap;

use brsmg_core::forward::{solve_all, LevelPolicySet, SolverOptions};
use brsmg_core::gradient::{solve_gradients, GradientOptions, GradientTables};
use brsmg_core::inverse::{total_loglik_and_grad, Demonstration};
use brsmg_core::params::{FixedParams, ParamLayout};
use brsmg_core::{Agent, GameSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Result;

/// The model whose gradients are checked.
#[derive(Debug, Clone)]
pub struct CheckSetup<'a> {
    pub spec: &'a GameSpec,
    pub fixed: FixedParams,
    pub layout: ParamLayout,
    pub theta: Vec<f64>,
    pub k_max: usize,
    /// Used for the analytic policies and every re-solve.
    pub solver: SolverOptions,
    pub grad: GradientOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Value,
    Loglik,
}

/// One analytic entry against its central difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub kind: CheckKind,
    pub agent: Option<u8>,
    pub level: Option<usize>,
    pub state: Option<usize>,
    pub param: usize,
    pub analytic: f64,
    pub fd: f64,
    pub abs_err: f64,
    pub pass: bool,
}

/// `|a - fd| <= max(abs_tol, rel_tol * |fd|)`.
pub fn within(analytic: f64, fd: f64, abs_tol: f64, rel_tol: f64) -> bool {
    (analytic - fd).abs() <= abs_tol.max(rel_tol * fd.abs())
}

impl CheckSetup<'_> {
    pub fn solve(&self, theta: &[f64]) -> Result<LevelPolicySet> {
        let (cpt, rp) = self.layout.unpack(self.spec, theta, &self.fixed)?;
        Ok(solve_all(self.spec, &rp, &cpt, self.k_max, &self.solver)?)
    }

    pub fn analytic(&self) -> Result<(LevelPolicySet, GradientTables)> {
        let (cpt, rp) = self.layout.unpack(self.spec, &self.theta, &self.fixed)?;
        let policies = solve_all(self.spec, &rp, &cpt, self.k_max, &self.solver)?;
        let grads = solve_gradients(self.spec, &rp, &cpt, &self.layout, &policies, &self.grad)?;
        Ok((policies, grads))
    }

    fn shifted(&self, p: usize, h: f64) -> [Vec<f64>; 2] {
        let (mut up, mut down) = (self.theta.clone(), self.theta.clone());
        up[p] += h;
        down[p] -= h;
        [up, down]
    }

    /// Compares `dV` at `samples` random (agent, level, state, parameter)
    /// points with central differences of the full forward solve. Each
    /// distinct parameter costs two solves; they run in parallel.
    pub fn check_values(&self, samples: usize, h: f64, abs_tol: f64, rel_tol: f64, seed: u64) -> Result<Vec<CheckRow>> {
        let (_, grads) = self.analytic()?;
        let n_p = self.layout.n_params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<(Agent, usize, usize, usize)> = (0..samples)
            .map(|_| {
                let agent = Agent::BOTH[rng.random_range(0..2)];
                let k = rng.random_range(1..=self.k_max);
                let s = rng.random_range(0..self.spec.n_states());
                let p = rng.random_range(0..n_p);
                (agent, k, s, p)
            })
            .collect();
        let mut by_param: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, pick) in picks.iter().enumerate() {
            by_param.entry(pick.3).or_default().push(i);
        }
        let params: Vec<usize> = by_param.keys().copied().collect();
        let solved: Vec<(usize, [LevelPolicySet; 2])> = params
            .par_iter()
            .map(|&p| {
                let [up, down] = self.shifted(p, h);
                Ok((p, [self.solve(&up)?, self.solve(&down)?]))
            })
            .collect::<Result<_>>()?;
        let solved: BTreeMap<usize, [LevelPolicySet; 2]> = solved.into_iter().collect();
        Ok(picks
            .iter()
            .map(|&(agent, k, s, p)| {
                let [up, down] = &solved[&p];
                let fd = (up.level(agent, k).value[s] - down.level(agent, k).value[s]) / (2.0 * h);
                let analytic = grads.level(agent, k).dv[s * n_p + p];
                CheckRow {
                    kind: CheckKind::Value,
                    agent: Some(agent.index() as u8 + 1),
                    level: Some(k),
                    state: Some(s),
                    param: p,
                    analytic,
                    fd,
                    abs_err: (analytic - fd).abs(),
                    pass: within(analytic, fd, abs_tol, rel_tol),
                }
            })
            .collect())
    }

    /// Compares the total log-likelihood gradient of `demos` with central
    /// differences in every parameter.
    pub fn check_loglik(&self, demos: &[Demonstration], h: f64, rel_tol: f64) -> Result<Vec<CheckRow>> {
        let (policies, grads) = self.analytic()?;
        let (_, grad) = total_loglik_and_grad(&policies, Some(&grads), demos);
        (0..self.layout.n_params())
            .into_par_iter()
            .map(|p| {
                let [up, down] = self.shifted(p, h);
                let ll = |th: &[f64]| -> Result<f64> { Ok(total_loglik_and_grad(&self.solve(th)?, None, demos).0) };
                let fd = (ll(&up)? - ll(&down)?) / (2.0 * h);
                Ok(CheckRow {
                    kind: CheckKind::Loglik,
                    agent: None,
                    level: None,
                    state: None,
                    param: p,
                    analytic: grad[p],
                    fd,
                    abs_err: (grad[p] - fd).abs(),
                    pass: within(grad[p], fd, 1e-6, rel_tol),
                })
            })
            .collect()
    }
}

/// Rows plus the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn passed(&self) -> bool {
        self.failed() == 0
    }

    pub fn max_abs_err(&self, kind: CheckKind) -> f64 {
        self.rows.iter().filter(|r| r.kind == kind).map(|r| r.abs_err).fold(0.0, f64::max)
    }
}
