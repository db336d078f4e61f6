//! Rayon-backed evaluators for the learners.
//!
//! Per-demo terms are computed in parallel and reduced in demo order, so
//! results do not depend on the number of workers.

use brsmg_core::baseline::{meirl_learn_with, meirl_term, MeirlConfig, MeirlState};
use brsmg_core::forward::LevelPolicySet;
use brsmg_core::inverse::{demo_loglik_and_grad, learn_with, EpochRecord, LearnConfig, LearnState};
use brsmg_core::params::{FixedParams, ParamLayout};
use brsmg_core::{Agent, GameSpec};
use brsmg_core::inverse::Demonstration;
use rayon::prelude::*;

use crate::{Error, Result};

/// Thread pool with `workers` threads, or one per core when `None`.
pub fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Pool(e.to_string()))
}

/// [`brsmg_core::inverse::learn`] with demos evaluated in parallel.
#[allow(clippy::too_many_arguments)]
pub fn learn_parallel<O>(
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
    Ok(learn_with(spec, fixed, layout, demos, init, cfg, observer, |p, g, d| {
        d.par_iter().map(|x| demo_loglik_and_grad(p, Some(g), x)).collect()
    })?)
}

/// [`brsmg_core::baseline::meirl_learn`] with demos evaluated in parallel.
pub fn meirl_parallel(
    spec: &GameSpec,
    demos: &[Demonstration],
    agent: Agent,
    init: &[f64],
    cfg: &MeirlConfig,
) -> Result<MeirlState> {
    Ok(meirl_learn_with(spec, demos, init, cfg, |omega, d| {
        d.par_iter()
            .map(|x| meirl_term(spec, x, agent, omega, cfg.collision_reward))
            .collect()
    })?)
}
