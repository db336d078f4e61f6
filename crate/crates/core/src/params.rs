//! Layout of the learnable vector `(gamma, omega_1, omega_2)`.

use alloc::format;
use alloc::vec::Vec;

use crate::game::{Agent, CptParams, GameSpec, RewardParams};
use crate::{Error, Result};

/// Index map for the learnable parameters.
///
/// With a shared weighting exponent the vector is
/// `[gamma, omega_1[0..d], omega_2[0..d]]`; otherwise it starts with
/// `[gamma_1, gamma_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    feature_dim: usize,
    shared_gamma: bool,
}

impl ParamLayout {
    pub fn new(feature_dim: usize, shared_gamma: bool) -> Self {
        Self {
            feature_dim,
            shared_gamma,
        }
    }

    pub fn shared(feature_dim: usize) -> Self {
        Self::new(feature_dim, true)
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    #[inline]
    pub fn shared_gamma(&self) -> bool {
        self.shared_gamma
    }

    #[inline]
    pub fn n_gamma(&self) -> usize {
        if self.shared_gamma {
            1
        } else {
            2
        }
    }

    #[inline]
    pub fn n_params(&self) -> usize {
        self.n_gamma() + 2 * self.feature_dim
    }

    #[inline]
    pub fn gamma_index(&self, agent: Agent) -> usize {
        if self.shared_gamma {
            0
        } else {
            agent.index()
        }
    }

    #[inline]
    pub fn omega_offset(&self, agent: Agent) -> usize {
        self.n_gamma() + agent.index() * self.feature_dim
    }

    #[inline]
    pub fn omega_index(&self, agent: Agent, j: usize) -> usize {
        self.omega_offset(agent) + j
    }

    pub fn omega<'a>(&self, theta: &'a [f64], agent: Agent) -> &'a [f64] {
        let o = self.omega_offset(agent);
        &theta[o..o + self.feature_dim]
    }

    pub fn gamma(&self, theta: &[f64], agent: Agent) -> f64 {
        theta[self.gamma_index(agent)]
    }

    /// Flattens parameters. With a shared exponent the agents must agree.
    pub fn pack(&self, cpt: &CptParams, rp: &RewardParams) -> Result<Vec<f64>> {
        if self.shared_gamma && cpt.gamma[0] != cpt.gamma[1] {
            return Err(Error::Shape(format!(
                "shared layout but gamma differs across agents ({} vs {})",
                cpt.gamma[0], cpt.gamma[1]
            )));
        }
        let mut theta = Vec::with_capacity(self.n_params());
        theta.extend_from_slice(&cpt.gamma[..self.n_gamma()]);
        for agent in Agent::BOTH {
            let w = rp.omega(agent);
            if w.len() != self.feature_dim {
                return Err(Error::Shape(format!(
                    "expected {} reward weights, got {}",
                    self.feature_dim,
                    w.len()
                )));
            }
            theta.extend_from_slice(w);
        }
        Ok(theta)
    }

    /// Rebuilds model parameters from `theta`; `alpha`, `beta` and the
    /// collision reward are not learned and come from `fixed`.
    pub fn unpack(
        &self,
        spec: &GameSpec,
        theta: &[f64],
        fixed: &FixedParams,
    ) -> Result<(CptParams, RewardParams)> {
        if theta.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, layout needs {}",
                theta.len(),
                self.n_params()
            )));
        }
        let gamma = [self.gamma(theta, Agent::One), self.gamma(theta, Agent::Two)];
        let cpt = CptParams::new(fixed.alpha, gamma, fixed.beta)?;
        let rp = RewardParams::new(
            spec,
            self.omega(theta, Agent::One).to_vec(),
            self.omega(theta, Agent::Two).to_vec(),
            fixed.collision_reward,
        )?;
        Ok((cpt, rp))
    }

    /// Clips every entry into its box.
    pub fn project(&self, theta: &mut [f64], bounds: &ParamBox) {
        for (i, x) in theta.iter_mut().enumerate() {
            let (lo, hi) = if i < self.n_gamma() {
                bounds.gamma
            } else {
                bounds.omega
            };
            *x = x.clamp(lo, hi);
        }
    }
}

/// Model parameters held fixed during learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedParams {
    pub alpha: [f64; 2],
    pub beta: f64,
    pub collision_reward: f64,
}

impl FixedParams {
    pub fn from_model(cpt: &CptParams, rp: &RewardParams) -> Self {
        Self {
            alpha: cpt.alpha,
            beta: cpt.beta,
            collision_reward: rp.collision_reward(),
        }
    }
}

/// Feasible box applied after every ascent step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamBox {
    pub gamma: (f64, f64),
    pub omega: (f64, f64),
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            gamma: (0.05, 1.0),
            omega: (1.0, 2.5),
        }
    }
}
