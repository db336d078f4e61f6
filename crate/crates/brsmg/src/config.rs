//! Experiment configuration, read from a single TOML document.
//!
//! Every section has defaults except the master `seed`. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use brsmg_core::forward::{MaxOperator, SolverOptions};
use brsmg_core::gradient::{GradientOptions, DEFAULT_KAPPA};
use brsmg_core::gridworld::GridConfig;
use brsmg_core::inverse::LearnConfig;
use brsmg_core::params::{ParamBox, ParamLayout};
use brsmg_core::{CptParams, RiskMode};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it by name.
    pub seed: u64,
    #[serde(default)]
    pub cpt: CptSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub learn: LearnSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub game: GridConfig,
}

/// True risk parameters of both agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CptSection {
    pub alpha: [f64; 2],
    pub gamma: [f64; 2],
    pub beta: f64,
}

impl Default for CptSection {
    fn default() -> Self {
        Self {
            alpha: [0.7; 2],
            gamma: [0.5; 2],
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxOpChoice {
    #[default]
    Hard,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub k_max: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Maximum used by the forward value iteration.
    pub max_op: MaxOpChoice,
    /// Smooth-max exponent of the gradient iteration.
    pub kappa: f64,
    pub grad_tol: f64,
    pub grad_max_sweeps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            k_max: 2,
            tol: 1e-6,
            max_sweeps: 10_000,
            max_op: MaxOpChoice::Hard,
            kappa: DEFAULT_KAPPA,
            grad_tol: 1e-6,
            grad_max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnSection {
    pub eta: f64,
    pub epochs: usize,
    pub conv_tol: f64,
    pub patience: usize,
    pub shared_gamma: bool,
    /// Number of demonstrations to generate when no demo file is given.
    pub demos: usize,
    /// Independent restarts from different random initializations.
    pub trials: usize,
    /// Run the gradient check first and refuse to learn if it fails.
    pub ci: bool,
    pub gamma_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
}

impl Default for LearnSection {
    fn default() -> Self {
        let b = ParamBox::default();
        Self {
            eta: 0.0015,
            epochs: 400,
            conv_tol: 1e-4,
            patience: 5,
            shared_gamma: true,
            demos: 100,
            trials: 5,
            ci: false,
            gamma_bounds: b.gamma,
            omega_bounds: b.omega,
        }
    }
}

/// A pair of levels played against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario(pub [usize; 2]);

impl Scenario {
    pub const PAPER: [Scenario; 3] = [Scenario([1, 1]), Scenario([2, 2]), Scenario([1, 2])];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}-L{}", self.0[0], self.0[1])
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("scenario `{s}` is not of the form L<k>-L<k>"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let level = |x: &str| -> Result<usize> {
            let k: usize = x.strip_prefix('L').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            Ok(k)
        };
        Ok(Scenario([level(a)?, level(b)?]))
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub episodes: usize,
    pub scenarios: Vec<Scenario>,
    pub risk_modes: Vec<RiskMode>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            episodes: 100,
            scenarios: Scenario::PAPER.to_vec(),
            risk_modes: vec![RiskMode::Neutral, RiskMode::Cpt],
        }
    }
}

/// Which game the gradient check runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckGame {
    /// The 3x3 toy room.
    #[default]
    Toy,
    /// The configured game.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub game: CheckGame,
    /// Number of random (agent, level, state, parameter) samples of dV.
    pub samples: usize,
    pub h: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum the finite differences re-solve with.
    pub max_op: MaxOpChoice,
    /// Synthetic demos for the log-likelihood check (0 skips it).
    pub demos: usize,
    pub loglik_h: f64,
    pub loglik_rel_tol: f64,
    /// Residual tolerance of every solve in the check; the differences
    /// are only as accurate as `tol / h`.
    pub tol: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            game: CheckGame::Toy,
            samples: 200,
            h: 1e-5,
            abs_tol: 1e-4,
            rel_tol: 1e-3,
            max_op: MaxOpChoice::Smooth,
            demos: 20,
            loglik_h: 1e-4,
            loglik_rel_tol: 1e-2,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Demonstrations to learn from; generated from the true model if absent.
    pub demos: Option<PathBuf>,
    /// Learned parameters to evaluate; the true parameters if absent.
    pub learned: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            demos: None,
            learned: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            cpt: CptSection::default(),
            solver: SolverSection::default(),
            learn: LearnSection::default(),
            simulate: SimulateSection::default(),
            gradcheck: GradcheckSection::default(),
            paths: PathsSection::default(),
            game: GridConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.cpt_params()?;
        brsmg_core::gridworld::GridWorld::new(self.game.clone())?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if i64::try_from(self.seed).is_err() {
            return bad("seed must fit in a signed 64-bit integer");
        }
        if self.solver.k_max == 0 {
            return bad("solver.k_max must be at least 1");
        }
        if self.learn.shared_gamma && self.cpt.gamma[0] != self.cpt.gamma[1] {
            return bad("learn.shared_gamma needs equal cpt.gamma entries");
        }
        if self.learn.trials == 0 || self.learn.demos == 0 || self.simulate.episodes == 0 {
            return bad("learn.trials, learn.demos and simulate.episodes must be positive");
        }
        if let Some(s) = self.simulate.scenarios.iter().find(|s| s.0.iter().any(|&k| k > self.solver.k_max)) {
            return Err(Error::Config(format!("scenario {s} exceeds solver.k_max")));
        }
        Ok(())
    }

    pub fn cpt_params(&self) -> Result<CptParams> {
        Ok(CptParams::new(self.cpt.alpha, self.cpt.gamma, self.cpt.beta)?)
    }

    pub fn max_op(&self, choice: MaxOpChoice) -> MaxOperator {
        match choice {
            MaxOpChoice::Hard => MaxOperator::Hard,
            MaxOpChoice::Smooth => MaxOperator::Smooth { kappa: self.solver.kappa },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            max_op: self.max_op(self.solver.max_op),
        }
    }

    pub fn gradient_options(&self) -> GradientOptions {
        GradientOptions {
            kappa: self.solver.kappa,
            tol: self.solver.grad_tol,
            max_sweeps: self.solver.grad_max_sweeps,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.game.width * self.game.height, self.learn.shared_gamma)
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            eta: self.learn.eta,
            max_epochs: self.learn.epochs,
            conv_tol: self.learn.conv_tol,
            patience: self.learn.patience,
            k_max: self.solver.k_max,
            solver: self.solver_options(),
            grad: self.gradient_options(),
            bounds: ParamBox {
                gamma: self.learn.gamma_bounds,
                omega: self.learn.omega_bounds,
            },
        }
    }
}
