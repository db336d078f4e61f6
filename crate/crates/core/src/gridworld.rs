//! Two-agent room navigation.
//!
//! Both agents move simultaneously on a `width x height` grid and have to
//! leave through their own door. A cell index is `y * width + x` with `y`
//! growing downward; an agent that left the room sits in the extra position
//! `n_cells`. The joint state is `p1 * (n_cells + 1) + p2`.
//!
//! Moves off the grid or into an obstacle leave the agent in place. Taking
//! the door's exit action on the door cell leaves the room. Two agents that
//! end up in the same cell, or swap cells, collide: both get the fixed
//! collision reward and stay where they were. Otherwise each agent's
//! feature is the one-hot of its new cell (its door once it has left).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::forward::LevelPolicySet;
use crate::game::{Agent, GameSpec, RewardParams, DEFAULT_COLLISION_REWARD};
use crate::inverse::{Demonstration, Step};
use crate::{Error, Result};

/// The shared action set, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Move {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Left, Move::Right, Move::Up, Move::Down, Move::Stay];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Move> {
        Self::ALL.get(i).copied()
    }

    #[inline]
    fn delta(self) -> (isize, isize) {
        match self {
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Stay => (0, 0),
        }
    }
}

/// An exit: standing on `cell` and taking `exit` leaves the room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Door {
    /// `(x, y)`
    pub cell: (usize, usize),
    pub exit: Move,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    /// Navigation reward per cell, row-major, for agent one.
    pub nav_reward_1: Vec<f64>,
    pub nav_reward_2: Vec<f64>,
    pub door_1: Door,
    pub door_2: Door,
    /// `(x, y)` cells nobody can enter.
    pub obstacles: Vec<(usize, usize)>,
    pub max_episode_steps: usize,
    pub discount: f64,
    pub collision_reward: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let (width, height) = (5, 5);
        let door_1 = Door {
            cell: (4, 2),
            exit: Move::Right,
        };
        let door_2 = Door {
            cell: (0, 2),
            exit: Move::Left,
        };
        let obstacles = vec![(2, 0), (2, 4)];
        Self {
            width,
            height,
            nav_reward_1: distance_map(width, height, door_1.cell, &obstacles),
            nav_reward_2: distance_map(width, height, door_2.cell, &obstacles),
            door_1,
            door_2,
            obstacles,
            max_episode_steps: 40,
            discount: 0.5,
            collision_reward: DEFAULT_COLLISION_REWARD,
        }
    }
}

impl GridConfig {
    /// 3x3 room with doors on opposite walls and no obstacles.
    pub fn toy() -> Self {
        let (width, height) = (3, 3);
        let door_1 = Door {
            cell: (2, 1),
            exit: Move::Right,
        };
        let door_2 = Door {
            cell: (0, 1),
            exit: Move::Left,
        };
        Self {
            width,
            height,
            nav_reward_1: distance_map(width, height, door_1.cell, &[]),
            nav_reward_2: distance_map(width, height, door_2.cell, &[]),
            door_1,
            door_2,
            obstacles: Vec::new(),
            ..Self::default()
        }
    }
}

/// Reward map rising linearly from 1.0 at the farthest free cell to 2.5 at
/// the door, by shortest-path distance around obstacles.
pub fn distance_map(width: usize, height: usize, door: (usize, usize), obstacles: &[(usize, usize)]) -> Vec<f64> {
    let n = width * height;
    let blocked = |c: usize| obstacles.iter().any(|&(x, y)| y * width + x == c);
    let mut dist = vec![usize::MAX; n];
    let start = door.1 * width + door.0;
    dist[start] = 0;
    let mut queue = alloc::collections::VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let (x, y) = ((c % width) as isize, (c / width) as isize);
        for m in Move::ALL {
            let (dx, dy) = m.delta();
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                continue;
            }
            let nc = ny as usize * width + nx as usize;
            if !blocked(nc) && dist[nc] == usize::MAX {
                dist[nc] = dist[c] + 1;
                queue.push_back(nc);
            }
        }
    }
    let far = dist.iter().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0).max(1) as f64;
    dist.iter()
        .map(|&d| if d == usize::MAX { 1.0 } else { 1.0 + 1.5 * (1.0 - d as f64 / far) })
        .collect()
}

/// Validated grid with its game model.
#[derive(Debug, Clone)]
pub struct GridWorld {
    cfg: GridConfig,
    blocked: Vec<bool>,
    doors: [usize; 2],
}

impl GridWorld {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        let n = cfg.width * cfg.height;
        let bad = |msg: alloc::string::String| Err(Error::InvalidGame(msg));
        if cfg.width == 0 || cfg.height == 0 {
            return bad("empty grid".into());
        }
        for (name, map) in [("nav_reward_1", &cfg.nav_reward_1), ("nav_reward_2", &cfg.nav_reward_2)] {
            if map.len() != n {
                return bad(format!("{name} has {} entries for {n} cells", map.len()));
            }
        }
        let in_grid = |(x, y): (usize, usize)| x < cfg.width && y < cfg.height;
        let mut blocked = vec![false; n];
        for &c in &cfg.obstacles {
            if !in_grid(c) {
                return bad(format!("obstacle {c:?} outside the grid"));
            }
            blocked[c.1 * cfg.width + c.0] = true;
        }
        let mut doors = [0; 2];
        for (i, d) in [cfg.door_1, cfg.door_2].iter().enumerate() {
            if !in_grid(d.cell) {
                return bad(format!("door {} outside the grid", i + 1));
            }
            let c = d.cell.1 * cfg.width + d.cell.0;
            if blocked[c] {
                return bad(format!("door {} is an obstacle", i + 1));
            }
            if d.exit == Move::Stay {
                return bad(format!("door {} needs a directional exit", i + 1));
            }
            doors[i] = c;
        }
        if doors[0] == doors[1] {
            return bad("doors must be distinct".into());
        }
        if !(cfg.collision_reward >= 1.0) {
            return bad("collision reward below 1".into());
        }
        if cfg.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive".into());
        }
        Ok(Self { cfg, blocked, doors })
    }

    #[inline]
    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    /// Position index of an agent that has left.
    #[inline]
    pub fn exited(&self) -> usize {
        self.n_cells()
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        (self.n_cells() + 1) * (self.n_cells() + 1)
    }

    #[inline]
    pub fn encode(&self, p1: usize, p2: usize) -> usize {
        p1 * (self.n_cells() + 1) + p2
    }

    #[inline]
    pub fn decode(&self, s: usize) -> (usize, usize) {
        (s / (self.n_cells() + 1), s % (self.n_cells() + 1))
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.cfg.width + x
    }

    #[inline]
    pub fn door(&self, agent: Agent) -> usize {
        self.doors[agent.index()]
    }

    #[inline]
    pub fn is_blocked(&self, cell: usize) -> bool {
        self.blocked[cell]
    }

    /// Single-agent move ignoring the other agent.
    pub fn move_agent(&self, agent: Agent, pos: usize, m: Move) -> usize {
        if pos == self.exited() {
            return pos;
        }
        let door = [self.cfg.door_1, self.cfg.door_2][agent.index()];
        if pos == self.doors[agent.index()] && m == door.exit {
            return self.exited();
        }
        let w = self.cfg.width as isize;
        let (x, y) = ((pos % self.cfg.width) as isize, (pos / self.cfg.width) as isize);
        let (dx, dy) = m.delta();
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= self.cfg.height as isize {
            return pos;
        }
        let c = (ny * w + nx) as usize;
        if self.blocked[c] {
            pos
        } else {
            c
        }
    }

    /// Joint move: `(next state, collided)`.
    pub fn step(&self, s: usize, a1: usize, a2: usize) -> (usize, bool) {
        let (p1, p2) = self.decode(s);
        let m = |a| Move::from_index(a).unwrap_or(Move::Stay);
        let q1 = self.move_agent(Agent::One, p1, m(a1));
        let q2 = self.move_agent(Agent::Two, p2, m(a2));
        let out = self.exited();
        let collided = q1 != out && q2 != out && (q1 == q2 || (q1 == p2 && q2 == p1));
        if collided {
            (s, true)
        } else {
            (self.encode(q1, q2), false)
        }
    }

    /// Cell whose one-hot is the agent's feature after a collision-free move.
    fn feature_cell(&self, agent: Agent, pos: usize) -> usize {
        if pos == self.exited() {
            self.doors[agent.index()]
        } else {
            pos
        }
    }

    pub fn game_spec(&self) -> Result<GameSpec> {
        let out = self.exited();
        let done = self.encode(out, out);
        GameSpec::from_fns(
            self.n_states(),
            [Move::ALL.len(); 2],
            self.n_cells(),
            self.cfg.discount,
            &[done],
            |s, a1, a2| self.step(s, a1, a2).0,
            |s, a1, a2| self.step(s, a1, a2).1,
            |s, own, opp, agent, feats| {
                let (a1, a2) = agent.joint(own, opp);
                let (next, collided) = self.step(s, a1, a2);
                if !collided {
                    let (q1, q2) = self.decode(next);
                    let q = [q1, q2][agent.index()];
                    feats.push((self.feature_cell(agent, q), 1.0));
                }
            },
        )
    }

    pub fn reward_params(&self, spec: &GameSpec) -> Result<RewardParams> {
        RewardParams::new(
            spec,
            self.cfg.nav_reward_1.clone(),
            self.cfg.nav_reward_2.clone(),
            self.cfg.collision_reward,
        )
    }

    /// Free cells an agent may start from: not an obstacle and not a door.
    pub fn start_cells(&self) -> Vec<usize> {
        (0..self.n_cells())
            .filter(|&c| !self.blocked[c] && !self.doors.contains(&c))
            .collect()
    }

    /// Uniform start over ordered pairs of distinct start cells.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let cells = self.start_cells();
        let i = rng.random_range(0..cells.len());
        let mut j = rng.random_range(0..cells.len() - 1);
        if j >= i {
            j += 1;
        }
        self.encode(cells[i], cells[j])
    }
}

/// Builds the grid, its game and the configured rewards.
pub fn build_game(cfg: GridConfig) -> Result<(GridWorld, GameSpec, RewardParams)> {
    let gw = GridWorld::new(cfg)?;
    let spec = gw.game_spec()?;
    let rp = gw.reward_params(&spec)?;
    Ok((gw, spec, rp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Outcome {
    Success,
    Collision,
    Deadlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub outcome: Outcome,
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Plays both agents' quantal policies at the given levels until both have
/// left, they collide, or the step cap is hit.
pub fn rollout<R: Rng + ?Sized>(
    gw: &GridWorld,
    policies: &LevelPolicySet,
    levels: [usize; 2],
    start: usize,
    rng: &mut R,
) -> Trajectory {
    let done = gw.encode(gw.exited(), gw.exited());
    let mut s = start;
    let mut steps = Vec::new();
    let outcome = loop {
        if s == done {
            break Outcome::Success;
        }
        if steps.len() >= gw.cfg.max_episode_steps {
            break Outcome::Deadlock;
        }
        let a1 = sample_row(policies.row(Agent::One, levels[0], s), rng);
        let a2 = sample_row(policies.row(Agent::Two, levels[1], s), rng);
        steps.push(Step::new(s, a1, a2));
        let (next, collided) = gw.step(s, a1, a2);
        if collided {
            break Outcome::Collision;
        }
        s = next;
    };
    Trajectory { steps, outcome }
}

/// Seed of episode `i` under master seed `seed`; shared by every scenario
/// so comparisons use common random numbers.
pub fn episode_seed(seed: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng.next_u64()
}

/// `n` rollouts at fixed levels; episode `i` draws its start and actions
/// from [`episode_seed`].
pub fn simulate(gw: &GridWorld, policies: &LevelPolicySet, levels: [usize; 2], n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, i));
            let start = gw.sample_start(&mut rng);
            rollout(gw, policies, levels, start, &mut rng)
        })
        .collect()
}

/// `m` demonstrations with levels drawn uniformly from `1..=k_max` and
/// random starts. Demo `i` is reproducible from its recorded seed alone.
pub fn gen_demos(gw: &GridWorld, policies: &LevelPolicySet, m: usize, seed: u64) -> Vec<Demonstration> {
    (0..m as u64)
        .map(|i| {
            let demo_seed = episode_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(demo_seed);
            let k_max = policies.k_max();
            let levels = [rng.random_range(1..=k_max), rng.random_range(1..=k_max)];
            let start = gw.sample_start(&mut rng);
            let traj = rollout(gw, policies, levels, start, &mut rng);
            Demonstration {
                steps: traj.steps,
                true_levels: Some(levels),
                seed: Some(demo_seed),
            }
        })
        .collect()
}
