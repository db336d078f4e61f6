//! Evaluation statistics: parameter error, policy loss, success rate,
//! level identification and reward correlations.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::forward::LevelPolicySet;
use crate::game::Agent;
use crate::gridworld::Outcome;
use crate::math::{abs, sqrt};
use crate::params::ParamLayout;
use crate::{Error, Result};

/// Mean absolute percentage error `|learned - truth| / |truth|` over the
/// entries with nonzero truth, plus the number of excluded entries.
pub fn ppe_counted(learned: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    if learned.len() != truth.len() {
        return Err(Error::Shape(format!(
            "ppe: {} learned vs {} true entries",
            learned.len(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&l, &t) in learned.iter().zip(truth) {
        if t != 0.0 {
            sum += abs(l - t) / abs(t);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Domain {
            what: "ppe (all truth entries are zero)",
            value: 0.0,
        });
    }
    Ok((sum / n as f64, truth.len() - n))
}

/// [`ppe_counted`] without the exclusion count.
pub fn ppe(learned: &[f64], truth: &[f64]) -> Result<f64> {
    ppe_counted(learned, truth).map(|(v, _)| v)
}

/// Percentage errors of each block of the learnable vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PpeBlocks {
    pub gamma: f64,
    pub omega_1: f64,
    pub omega_2: f64,
    /// Mean over every entry of the vector.
    pub aggregate: f64,
}

pub fn ppe_blocks(layout: &ParamLayout, learned: &[f64], truth: &[f64]) -> Result<PpeBlocks> {
    let n = layout.n_params();
    if learned.len() != n || truth.len() != n {
        return Err(Error::Shape(format!("ppe: layout needs {n} entries")));
    }
    let g = layout.n_gamma();
    Ok(PpeBlocks {
        gamma: ppe(&learned[..g], &truth[..g])?,
        omega_1: ppe(layout.omega(learned, Agent::One), layout.omega(truth, Agent::One))?,
        omega_2: ppe(layout.omega(learned, Agent::Two), layout.omega(truth, Agent::Two))?,
        aggregate: ppe(learned, truth)?,
    })
}

/// Mean absolute difference of two equally shaped probability tables.
pub fn table_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("policy tables of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| abs(x - y)).sum::<f64>() / a.len() as f64)
}

/// Mean `|pi_learned - pi_true|` over levels `1..=k_max`, states and the
/// agent's actions.
pub fn policy_loss(learned: &LevelPolicySet, truth: &LevelPolicySet, agent: Agent) -> Result<f64> {
    if learned.k_max() != truth.k_max()
        || learned.n_states() != truth.n_states()
        || learned.n_actions(agent) != truth.n_actions(agent)
    {
        return Err(Error::Shape("policy sets differ in shape".into()));
    }
    let mut total = 0.0;
    for k in 1..=truth.k_max() {
        total += table_loss(learned.policy(agent, k), truth.policy(agent, k))?;
    }
    Ok(total / truth.k_max() as f64)
}

/// Policy loss of both agents and their mean.
pub fn policy_loss_both(learned: &LevelPolicySet, truth: &LevelPolicySet) -> Result<[f64; 3]> {
    let a = policy_loss(learned, truth, Agent::One)?;
    let b = policy_loss(learned, truth, Agent::Two)?;
    Ok([a, b, 0.5 * (a + b)])
}

/// Pearson correlation coefficient.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("correlation of lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn scc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("correlation of lengths {} and {}", x.len(), y.len())));
    }
    pcc(&average_ranks(x), &average_ranks(y))
}

/// Fraction of successful episodes.
pub fn rate_of_success(outcomes: &[Outcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Shape("no outcomes".into()));
    }
    let n = outcomes.iter().filter(|&&o| o == Outcome::Success).count();
    Ok(n as f64 / outcomes.len() as f64)
}

/// Per-agent fraction of correctly inferred levels.
pub fn id_accuracy(inferred: &[[usize; 2]], truth: &[[usize; 2]]) -> Result<[f64; 2]> {
    if inferred.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} inferred vs {} true level pairs",
            inferred.len(),
            truth.len()
        )));
    }
    let mut hits = [0usize; 2];
    for (a, b) in inferred.iter().zip(truth) {
        for i in 0..2 {
            hits[i] += usize::from(a[i] == b[i]);
        }
    }
    let n = truth.len() as f64;
    Ok([hits[0] as f64 / n, hits[1] as f64 / n])
}

/// Correlations between learned and true reward weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correlations {
    pub scc: [f64; 2],
    pub pcc: [f64; 2],
    /// Means of the per-agent values.
    pub scc_avg: f64,
    pub pcc_avg: f64,
    /// Over the concatenation `omega_1 ++ omega_2`.
    pub scc_joint: f64,
    pub pcc_joint: f64,
}

pub fn reward_correlations(layout: &ParamLayout, learned: &[f64], truth: &[f64]) -> Result<Correlations> {
    let mut scc_a = [0.0; 2];
    let mut pcc_a = [0.0; 2];
    for agent in Agent::BOTH {
        let (l, t) = (layout.omega(learned, agent), layout.omega(truth, agent));
        scc_a[agent.index()] = scc(l, t)?;
        pcc_a[agent.index()] = pcc(l, t)?;
    }
    let g = layout.n_gamma();
    let (l, t) = (&learned[g..], &truth[g..]);
    Ok(Correlations {
        scc: scc_a,
        pcc: pcc_a,
        scc_avg: 0.5 * (scc_a[0] + scc_a[1]),
        pcc_avg: 0.5 * (pcc_a[0] + pcc_a[1]),
        scc_joint: scc(l, t)?,
        pcc_joint: pcc(l, t)?,
    })
}

/// Success rate of one simulated scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioRs {
    /// Scenario label such as `L1-L2`.
    pub scenario: String,
    pub risk_mode: crate::RiskMode,
    pub episodes: usize,
    pub rs: f64,
}

/// Everything an evaluation run reports. Absent sections were not requested.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub ppe: Option<PpeBlocks>,
    /// Policy loss of agent 1, agent 2 and their mean.
    pub pl: Option<[f64; 3]>,
    pub rs: Vec<ScenarioRs>,
    pub id_accuracy: Option<[f64; 2]>,
    pub correlations: Option<Correlations>,
    pub seed: u64,
    pub trials: usize,
}
