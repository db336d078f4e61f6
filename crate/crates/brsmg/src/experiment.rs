//! The command verbs. Each is a pure function of the config and its input
//! files and writes into `<out>/<verb>-<hash>`, where the hash covers the
//! verb, the config, the risk-mode override and the input file contents.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use brsmg_core::baseline::MeirlConfig;
use brsmg_core::forward::{solve_all, LevelPolicySet};
use brsmg_core::gridworld::{build_game, gen_demos, simulate, GridConfig, GridWorld};
use brsmg_core::inverse::{infer_levels, init_theta, Demonstration};
use brsmg_core::metrics::{
    id_accuracy, policy_loss_both, ppe_blocks, rate_of_success, reward_correlations, EvalReport, ScenarioRs,
};
use brsmg_core::params::{FixedParams, ParamLayout};
use brsmg_core::{Agent, CptParams, GameSpec, RewardParams, RiskMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CheckGame, ExperimentConfig, Scenario};
use crate::formats::{
    read_demos, read_toml, write_csv, write_demos, write_policy_set, write_report, write_toml, LearnedParams,
    RolloutRow, SummaryRow, TraceRow,
};
use crate::gradcheck::{CheckReport, CheckSetup};
use crate::parallel::{learn_parallel, meirl_parallel};
use crate::seeds::{content_hash, sub_seed};
use crate::{Error, Result};

/// The true model described by a config.
#[derive(Debug, Clone)]
pub struct Model {
    pub gw: GridWorld,
    pub spec: GameSpec,
    pub rp: RewardParams,
    pub cpt: CptParams,
    pub layout: ParamLayout,
    pub fixed: FixedParams,
    /// Packed true parameters.
    pub truth: Vec<f64>,
}

impl Model {
    pub fn new(cfg: &ExperimentConfig, game: GridConfig) -> Result<Self> {
        let (gw, spec, rp) = build_game(game)?;
        let cpt = cfg.cpt_params()?;
        let layout = ParamLayout::new(spec.feature_dim(), cfg.learn.shared_gamma);
        let truth = layout.pack(&cpt, &rp)?;
        Ok(Self {
            fixed: FixedParams::from_model(&cpt, &rp),
            gw,
            spec,
            rp,
            cpt,
            layout,
            truth,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(cfg, cfg.game.clone())
    }

    /// Policies of the true rewards under `mode`.
    pub fn solve(&self, cfg: &ExperimentConfig, mode: RiskMode) -> Result<LevelPolicySet> {
        let cpt = mode.params(&self.cpt);
        Ok(solve_all(&self.spec, &self.rp, &cpt, cfg.solver.k_max, &cfg.solver_options())?)
    }

    /// Policies of a parameter vector under `mode`.
    pub fn solve_theta(&self, cfg: &ExperimentConfig, theta: &[f64], mode: RiskMode) -> Result<LevelPolicySet> {
        let (cpt, rp) = self.layout.unpack(&self.spec, theta, &self.fixed)?;
        Ok(solve_all(&self.spec, &rp, &mode.params(&cpt), cfg.solver.k_max, &cfg.solver_options())?)
    }
}

/// Everything a verb depends on.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    /// Root under which the per-invocation directory is created.
    pub out_root: PathBuf,
    /// Restricts solving and simulation to a single risk mode.
    pub risk_mode: Option<RiskMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// `manifest.toml`, written last into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub verb: String,
    pub config_hash: String,
    pub seed: u64,
    /// Decimal strings; TOML integers stop at `i64::MAX`.
    pub sub_seeds: BTreeMap<String, String>,
    pub inputs: Vec<InputRecord>,
}

struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn seed(&mut self, name: &str) -> u64 {
        let s = sub_seed(self.manifest.seed, name);
        self.manifest.sub_seeds.insert(name.into(), s.to_string());
        s
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn finish(self) -> Result<PathBuf> {
        write_toml(&self.dir.join("manifest.toml"), &self.manifest)?;
        Ok(self.dir)
    }
}

fn mode_name(m: RiskMode) -> &'static str {
    match m {
        RiskMode::Cpt => "cpt",
        RiskMode::Neutral => "neutral",
    }
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            out_root: cfg.paths.out_dir.clone(),
            cfg,
            risk_mode: None,
        }
    }

    fn risk_modes(&self) -> Vec<RiskMode> {
        match self.risk_mode {
            Some(m) => vec![m],
            None => self.cfg.simulate.risk_modes.clone(),
        }
    }

    fn inputs(&self, verb: &str) -> Vec<(&'static str, &Path)> {
        let p = &self.cfg.paths;
        let mut v = Vec::new();
        if matches!(verb, "learn" | "baseline") {
            if let Some(d) = &p.demos {
                v.push(("demos", d.as_path()));
            }
        }
        if verb == "eval" {
            if let Some(l) = &p.learned {
                v.push(("learned", l.as_path()));
            }
        }
        v
    }

    fn start(&self, verb: &str) -> Result<Run> {
        let cfg_text = self.cfg.to_toml()?;
        let mode = self.risk_mode.map_or("", mode_name);
        let mut inputs = Vec::new();
        let mut blobs = Vec::new();
        for (role, path) in self.inputs(verb) {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let mut parts: Vec<Vec<u8>> = vec![bytes];
            if role == "demos" {
                let meta = crate::formats::meta_path(path);
                if meta.exists() {
                    parts.push(fs::read(&meta).map_err(|e| Error::io(&meta, e))?);
                }
            }
            inputs.push(InputRecord {
                role: role.into(),
                path: path.to_path_buf(),
                sha256: content_hash(parts.iter().map(|b| b.as_slice())),
            });
            blobs.extend(parts);
        }
        let hash = content_hash(
            [verb.as_bytes(), cfg_text.as_bytes(), mode.as_bytes()]
                .into_iter()
                .chain(blobs.iter().map(|b| b.as_slice())),
        );
        let dir = self.out_root.join(format!("{verb}-{}", &hash[..12]));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let cfg_path = dir.join("config.toml");
        fs::write(&cfg_path, cfg_text).map_err(|e| Error::io(&cfg_path, e))?;
        Ok(Run {
            dir,
            manifest: Manifest {
                verb: verb.into(),
                config_hash: hash,
                seed: self.cfg.seed,
                sub_seeds: BTreeMap::new(),
                inputs,
            },
        })
    }

    fn demos(&self, run: &mut Run, model: &Model) -> Result<Vec<Demonstration>> {
        let demos = match &self.cfg.paths.demos {
            Some(p) => read_demos(p)?,
            None => {
                let truth = model.solve(&self.cfg, RiskMode::Cpt)?;
                gen_demos(&model.gw, &truth, self.cfg.learn.demos, run.seed("demos"))
            }
        };
        for d in &demos {
            d.validate(&model.spec)?;
        }
        Ok(demos)
    }
}

pub struct SolveOutput {
    pub dir: PathBuf,
    pub sets: Vec<(RiskMode, LevelPolicySet)>,
}

/// Solves the true model in every requested risk mode and dumps the
/// tables into `<dir>/<mode>/`.
pub fn cmd_solve(ctx: &Context) -> Result<SolveOutput> {
    let run = ctx.start("solve")?;
    let model = Model::from_config(&ctx.cfg)?;
    let mut sets = Vec::new();
    for mode in ctx.risk_modes() {
        let set = model.solve(&ctx.cfg, mode)?;
        let sub = run.path(mode_name(mode));
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        write_policy_set(&sub, &set)?;
        sets.push((mode, set));
    }
    Ok(SolveOutput {
        dir: run.finish()?,
        sets,
    })
}

/// Rollout rows and success rates of every scenario under one policy set.
/// All cells share the episode seeds.
pub fn simulate_cells(
    gw: &GridWorld,
    set: &LevelPolicySet,
    mode: RiskMode,
    scenarios: &[Scenario],
    episodes: usize,
    seed: u64,
) -> Result<(Vec<RolloutRow>, Vec<ScenarioRs>)> {
    let mut rows = Vec::new();
    let mut rs = Vec::new();
    for sc in scenarios {
        let trajs = simulate(gw, set, sc.0, episodes, seed);
        let outcomes: Vec<_> = trajs.iter().map(|t| t.outcome).collect();
        rs.push(ScenarioRs {
            scenario: sc.to_string(),
            risk_mode: mode,
            episodes,
            rs: rate_of_success(&outcomes)?,
        });
        rows.extend(trajs.iter().enumerate().map(|(i, t)| RolloutRow {
            scenario: sc.to_string(),
            risk_mode: mode,
            episode: i,
            seed: brsmg_core::gridworld::episode_seed(seed, i as u64),
            level_1: sc.0[0],
            level_2: sc.0[1],
            outcome: t.outcome,
            steps: t.steps.len(),
        }));
    }
    Ok((rows, rs))
}

fn summary_rows(rs: &[ScenarioRs]) -> Vec<SummaryRow> {
    rs.iter()
        .map(|r| SummaryRow {
            scenario: r.scenario.clone(),
            risk_mode: r.risk_mode,
            episodes: r.episodes,
            rs: r.rs,
        })
        .collect()
}

pub struct SimulateOutput {
    pub dir: PathBuf,
    pub rs: Vec<ScenarioRs>,
}

/// Rollouts of the true policies for every scenario and risk mode.
pub fn cmd_simulate(ctx: &Context) -> Result<SimulateOutput> {
    let mut run = ctx.start("simulate")?;
    let model = Model::from_config(&ctx.cfg)?;
    let seed = run.seed("simulate");
    let mut rows = Vec::new();
    let mut rs = Vec::new();
    for mode in ctx.risk_modes() {
        let set = model.solve(&ctx.cfg, mode)?;
        let (r, s) = simulate_cells(&model.gw, &set, mode, &ctx.cfg.simulate.scenarios, ctx.cfg.simulate.episodes, seed)?;
        rows.extend(r);
        rs.extend(s);
    }
    write_csv(&run.path("rollouts.csv"), rows)?;
    write_csv(&run.path("summary.csv"), summary_rows(&rs))?;
    Ok(SimulateOutput { dir: run.finish()?, rs })
}

pub struct DemosOutput {
    pub dir: PathBuf,
    pub path: PathBuf,
    pub demos: Vec<Demonstration>,
}

/// Demonstrations of the true model with levels drawn uniformly.
pub fn cmd_gen_demos(ctx: &Context) -> Result<DemosOutput> {
    let mut run = ctx.start("gen-demos")?;
    let model = Model::from_config(&ctx.cfg)?;
    let mode = ctx.risk_mode.unwrap_or(RiskMode::Cpt);
    let set = model.solve(&ctx.cfg, mode)?;
    let demos = gen_demos(&model.gw, &set, ctx.cfg.learn.demos, run.seed("demos"));
    let path = run.path("demos.csv");
    write_demos(&path, &demos)?;
    Ok(DemosOutput {
        dir: run.finish()?,
        path,
        demos,
    })
}

/// The gradient-check model of a config.
pub fn check_model(cfg: &ExperimentConfig) -> Result<Model> {
    match cfg.gradcheck.game {
        CheckGame::Toy => Model::new(cfg, GridConfig::toy()),
        CheckGame::Config => Model::from_config(cfg),
    }
}

/// The true parameters with every reward weight raised by a seeded amount
/// in `[0.01, 0.1)`. Raising keeps shifted rewards at or above 1; the
/// jitter breaks ties between outcome values, where the rank-dependent
/// weights have only one-sided derivatives.
pub fn check_point(model: &Model, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = model.truth.clone();
    for x in theta.iter_mut().skip(model.layout.n_gamma()) {
        *x += rng.random_range(0.01..0.1);
    }
    theta
}

/// Runs both gradient checks at the true parameters of `model`.
pub fn run_gradcheck(cfg: &ExperimentConfig, model: &Model, seed: u64, demo_seed: u64, point_seed: u64) -> Result<CheckReport> {
    let g = &cfg.gradcheck;
    let mut solver = cfg.solver_options();
    solver.tol = g.tol;
    solver.max_op = cfg.max_op(g.max_op);
    let mut grad = cfg.gradient_options();
    grad.tol = g.tol;
    let setup = CheckSetup {
        spec: &model.spec,
        fixed: model.fixed,
        layout: model.layout,
        theta: check_point(model, point_seed),
        k_max: cfg.solver.k_max,
        solver,
        grad,
    };
    let mut rows = setup.check_values(g.samples, g.h, g.abs_tol, g.rel_tol, seed)?;
    if g.demos > 0 {
        let truth = setup.solve(&setup.theta)?;
        let demos = gen_demos(&model.gw, &truth, g.demos, demo_seed);
        rows.extend(setup.check_loglik(&demos, g.loglik_h, g.loglik_rel_tol)?);
    }
    Ok(CheckReport { rows })
}

pub struct GradcheckOutput {
    pub dir: PathBuf,
    pub report: CheckReport,
}

#[derive(Serialize)]
struct CheckSummary {
    passed: bool,
    failed: usize,
    total: usize,
    max_abs_err_value: f64,
    max_abs_err_loglik: f64,
}

fn write_check(run: &Run, report: &CheckReport) -> Result<()> {
    use crate::gradcheck::CheckKind;
    write_csv(&run.path("gradcheck.csv"), &report.rows)?;
    write_toml(
        &run.path("gradcheck.toml"),
        &CheckSummary {
            passed: report.passed(),
            failed: report.failed(),
            total: report.rows.len(),
            max_abs_err_value: report.max_abs_err(CheckKind::Value),
            max_abs_err_loglik: report.max_abs_err(CheckKind::Loglik),
        },
    )
}

/// Finite-difference check of the value and log-likelihood gradients. The
/// report is written whether or not the check passes.
pub fn cmd_gradcheck(ctx: &Context) -> Result<GradcheckOutput> {
    let mut run = ctx.start("gradcheck")?;
    let model = check_model(&ctx.cfg)?;
    let (s, d, p) = (run.seed("gradcheck"), run.seed("gradcheck-demos"), run.seed("gradcheck-point"));
    let report = run_gradcheck(&ctx.cfg, &model, s, d, p)?;
    write_check(&run, &report)?;
    Ok(GradcheckOutput {
        dir: run.finish()?,
        report,
    })
}

/// One learning restart.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub init: Vec<f64>,
    pub theta: Vec<f64>,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl Trial {
    pub fn final_loglik(&self) -> f64 {
        self.trace.last().map_or(f64::NEG_INFINITY, |r| r.loglik)
    }
}

pub struct LearnOutput {
    pub dir: PathBuf,
    pub trials: Vec<Trial>,
    /// Trial with the highest final log-likelihood.
    pub best: usize,
    pub gradcheck: Option<CheckReport>,
}

/// Per-epoch means over the trials that reached the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeanRow {
    pub epoch: usize,
    pub trials: usize,
    pub loglik: f64,
    pub ppe_gamma: f64,
    pub ppe: f64,
    pub pl: f64,
}

pub fn trace_means(trials: &[Trial]) -> Vec<TraceMeanRow> {
    let n = trials.iter().map(|t| t.trace.len()).max().unwrap_or(0);
    (0..n)
        .map(|e| {
            let rows: Vec<&TraceRow> = trials.iter().filter_map(|t| t.trace.get(e)).collect();
            let m = rows.len() as f64;
            let mean = |f: fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / m;
            TraceMeanRow {
                epoch: e,
                trials: rows.len(),
                loglik: mean(|r| r.loglik),
                ppe_gamma: mean(|r| r.ppe_gamma),
                ppe: mean(|r| r.ppe),
                pl: mean(|r| r.pl),
            }
        })
        .collect()
}

fn best_index(scores: impl Iterator<Item = f64>) -> usize {
    scores
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, s)| if s > b.1 { (i, s) } else { b })
        .0
}

/// Learns from `demos` starting at each of `inits`, recording PPE and PL
/// against the true model at every epoch.
pub fn learn_trials(cfg: &ExperimentConfig, model: &Model, demos: &[Demonstration], inits: &[Vec<f64>]) -> Result<Vec<Trial>> {
    let truth_policies = model.solve(cfg, RiskMode::Cpt)?;
    let lcfg = cfg.learn_config();
    let mut trials = Vec::with_capacity(inits.len());
    for (t, init) in inits.iter().enumerate() {
        let mut trace = Vec::new();
        let mut failure = None;
        let state = learn_parallel(&model.spec, &model.fixed, &model.layout, demos, init, &lcfg, |r, p| {
            let metrics = ppe_blocks(&model.layout, &r.theta, &model.truth)
                .and_then(|pp| Ok((pp, policy_loss_both(p, &truth_policies)?[2])));
            match metrics {
                Ok((pp, pl)) => trace.push(TraceRow {
                    trial: t,
                    epoch: r.epoch,
                    loglik: r.loglik,
                    grad_norm: r.grad_norm,
                    gamma: r.theta[0],
                    ppe_gamma: pp.gamma,
                    ppe_omega_1: pp.omega_1,
                    ppe_omega_2: pp.omega_2,
                    ppe: pp.aggregate,
                    pl,
                }),
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        trials.push(Trial {
            init: init.clone(),
            theta: state.theta,
            converged: state.converged,
            trace,
        });
    }
    Ok(trials)
}

fn inits(run: &mut Run, cfg: &ExperimentConfig, layout: &ParamLayout) -> Vec<Vec<f64>> {
    (0..cfg.learn.trials)
        .map(|t| init_theta(layout, &mut ChaCha8Rng::seed_from_u64(run.seed(&format!("init-{t}")))))
        .collect()
}

/// BRSMG inverse learning over `learn.trials` random restarts.
pub fn cmd_learn(ctx: &Context) -> Result<LearnOutput> {
    let mut run = ctx.start("learn")?;
    let cfg = &ctx.cfg;
    let model = Model::from_config(cfg)?;
    let gradcheck = if cfg.learn.ci {
        let check = check_model(cfg)?;
        let (s, d, p) = (run.seed("gradcheck"), run.seed("gradcheck-demos"), run.seed("gradcheck-point"));
        let report = run_gradcheck(cfg, &check, s, d, p)?;
        write_check(&run, &report)?;
        if !report.passed() {
            return Err(Error::GradCheck {
                failed: report.failed(),
                total: report.rows.len(),
            });
        }
        Some(report)
    } else {
        None
    };
    let demos = ctx.demos(&mut run, &model)?;
    let inits = inits(&mut run, cfg, &model.layout);
    let trials = learn_trials(cfg, &model, &demos, &inits)?;
    write_csv(&run.path("trace.csv"), trials.iter().flat_map(|t| t.trace.iter()))?;
    write_csv(&run.path("trace_mean.csv"), trace_means(&trials))?;
    for (i, t) in trials.iter().enumerate() {
        write_toml(
            &run.path(&format!("learned_trial{i}.toml")),
            &LearnedParams::from_theta("brsmg", &model.layout, &t.theta),
        )?;
    }
    let best = best_index(trials.iter().map(Trial::final_loglik));
    write_toml(
        &run.path("learned.toml"),
        &LearnedParams::from_theta("brsmg", &model.layout, &trials[best].theta),
    )?;
    Ok(LearnOutput {
        dir: run.finish()?,
        trials,
        best,
        gradcheck,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTraceRow {
    pub trial: usize,
    pub agent: u8,
    pub epoch: usize,
    pub loglik: f64,
    pub grad_norm: f64,
}

/// ME-IRL weights of both agents for one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTrial {
    pub omega: [Vec<f64>; 2],
    pub loglik: f64,
    pub trace: Vec<BaselineTraceRow>,
}

pub fn meirl_config(cfg: &ExperimentConfig) -> MeirlConfig {
    MeirlConfig {
        eta: cfg.learn.eta,
        max_epochs: cfg.learn.epochs,
        conv_tol: cfg.learn.conv_tol,
        patience: cfg.learn.patience,
        omega_bounds: cfg.learn.omega_bounds,
        collision_reward: cfg.game.collision_reward,
    }
}

/// Fits ME-IRL per agent from the reward part of each initial vector.
pub fn baseline_trials(cfg: &ExperimentConfig, model: &Model, demos: &[Demonstration], inits: &[Vec<f64>]) -> Result<Vec<BaselineTrial>> {
    let mcfg = meirl_config(cfg);
    inits
        .iter()
        .enumerate()
        .map(|(t, init)| {
            let mut omega = [Vec::new(), Vec::new()];
            let mut trace = Vec::new();
            let mut loglik = 0.0;
            for agent in Agent::BOTH {
                let st = meirl_parallel(&model.spec, demos, agent, model.layout.omega(init, agent), &mcfg)?;
                loglik += st.trace.last().map_or(0.0, |e| e.loglik);
                trace.extend(st.trace.iter().map(|e| BaselineTraceRow {
                    trial: t,
                    agent: agent.index() as u8 + 1,
                    epoch: e.epoch,
                    loglik: e.loglik,
                    grad_norm: e.grad_norm,
                }));
                omega[agent.index()] = st.omega;
            }
            Ok(BaselineTrial { omega, loglik, trace })
        })
        .collect()
}

fn baseline_params(t: &BaselineTrial) -> LearnedParams {
    LearnedParams {
        method: "meirl".into(),
        gamma: Vec::new(),
        omega_1: t.omega[0].clone(),
        omega_2: t.omega[1].clone(),
    }
}

pub struct BaselineOutput {
    pub dir: PathBuf,
    pub trials: Vec<BaselineTrial>,
    pub best: usize,
}

/// Risk-neutral MaxEnt IRL on the same demos and initializations as
/// [`cmd_learn`].
pub fn cmd_baseline(ctx: &Context) -> Result<BaselineOutput> {
    let mut run = ctx.start("baseline")?;
    let cfg = &ctx.cfg;
    let model = Model::from_config(cfg)?;
    let demos = ctx.demos(&mut run, &model)?;
    let inits = inits(&mut run, cfg, &model.layout);
    let trials = baseline_trials(cfg, &model, &demos, &inits)?;
    write_csv(&run.path("trace.csv"), trials.iter().flat_map(|t| t.trace.iter()))?;
    for (i, t) in trials.iter().enumerate() {
        write_toml(&run.path(&format!("learned_trial{i}.toml")), &baseline_params(t))?;
    }
    let best = best_index(trials.iter().map(|t| t.loglik));
    write_toml(&run.path("learned.toml"), &baseline_params(&trials[best]))?;
    Ok(BaselineOutput {
        dir: run.finish()?,
        trials,
        best,
    })
}

/// Evaluates `learned` against the true model. Parameters without
/// exponents are only compared through their reward weights.
pub fn evaluate(cfg: &ExperimentConfig, model: &Model, learned: &LearnedParams, sim_seed: u64, heldout_seed: u64) -> Result<EvalReport> {
    let layout = &model.layout;
    let n_g = layout.n_gamma();
    let shape = |path: &str| Error::Config(format!("learned parameters do not fit the game: {path}"));
    let omegas = learned.omegas();
    if omegas.len() != 2 * layout.feature_dim() {
        return Err(shape("reward weights"));
    }
    let with_truth_gamma = [&model.truth[..n_g], omegas.as_slice()].concat();
    let mut report = EvalReport {
        correlations: Some(reward_correlations(layout, &with_truth_gamma, &model.truth)?),
        seed: cfg.seed,
        trials: 1,
        ..EvalReport::default()
    };
    if learned.gamma.is_empty() {
        return Ok(report);
    }
    let theta = learned.theta(layout).ok_or_else(|| shape("exponents"))?;
    report.ppe = Some(ppe_blocks(layout, &theta, &model.truth)?);
    let truth = model.solve(cfg, RiskMode::Cpt)?;
    let fitted = model.solve_theta(cfg, &theta, RiskMode::Cpt)?;
    report.pl = Some(policy_loss_both(&fitted, &truth)?);
    let heldout = gen_demos(&model.gw, &truth, cfg.learn.demos, heldout_seed);
    let inferred: Vec<[usize; 2]> = heldout.iter().map(|d| infer_levels(&fitted, d)).collect();
    let levels: Vec<[usize; 2]> = heldout.iter().filter_map(|d| d.true_levels).collect();
    report.id_accuracy = Some(id_accuracy(&inferred, &levels)?);
    for &mode in &cfg.simulate.risk_modes {
        let set = if mode == RiskMode::Cpt {
            fitted.clone()
        } else {
            model.solve_theta(cfg, &theta, mode)?
        };
        let (_, rs) = simulate_cells(&model.gw, &set, mode, &cfg.simulate.scenarios, cfg.simulate.episodes, sim_seed)?;
        report.rs.extend(rs);
    }
    Ok(report)
}

pub struct EvalOutput {
    pub dir: PathBuf,
    pub report: EvalReport,
}

/// Evaluates `paths.learned`, or the true parameters when it is unset.
pub fn cmd_eval(ctx: &Context) -> Result<EvalOutput> {
    let mut run = ctx.start("eval")?;
    let cfg = &ctx.cfg;
    let model = Model::from_config(cfg)?;
    let learned = match &cfg.paths.learned {
        Some(p) => read_toml(p)?,
        None => LearnedParams::from_theta("truth", &model.layout, &model.truth),
    };
    let (s, h) = (run.seed("simulate"), run.seed("heldout"));
    let report = evaluate(cfg, &model, &learned, s, h)?;
    write_report(&run.dir, &report)?;
    Ok(EvalOutput {
        dir: run.finish()?,
        report,
    })
}
