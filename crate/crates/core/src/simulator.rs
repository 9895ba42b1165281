//! Seeded play of tug-of-war under explicit strategies.
//!
//! Trial `i` of a run with seed `s` draws from ChaCha8 stream `i` of key `s`,
//! so estimates do not depend on how trials are scheduled across threads.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{oscillation_at, GameGraph};

pub const PLAYER_I: u8 = 1;
pub const PLAYER_II: u8 = 2;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// What a strategy may look at when choosing a move.
pub struct Turn<'a> {
    /// Positions `x_0, …, x_n`; the token is at the last one.
    pub history: &'a [usize],
    /// Running payoff accumulated before the current position.
    pub psi: f64,
}

impl Turn<'_> {
    pub fn current(&self) -> usize {
        *self.history.last().expect("history is never empty")
    }
}

#[derive(Debug, Clone)]
pub enum Strategy {
    /// Step to a neighbor strictly closer (in hops) to a target set.
    PullToward { dist: Vec<u32> },
    GreedyMax { field: Vec<f64> },
    GreedyMin { field: Vec<f64> },
    /// Player II's backtracking strategy: off `X₀ = {δ ≥ δ₀} ∪ Y` step back
    /// toward the last visited point of `X₀` inside the visited subgraph; on
    /// `X₀` minimize the field.
    Backtracking {
        field: Vec<f64>,
        delta: Vec<f64>,
        delta0: f64,
    },
    /// `primary` while the accumulated running payoff is below `budget`,
    /// `fallback` afterwards.
    Budgeted {
        name: String,
        primary: Box<Strategy>,
        fallback: Box<Strategy>,
        budget: f64,
    },
    /// Fixed move per state.
    Table {
        name: String,
        moves: Vec<Option<usize>>,
    },
    RandomNeighbor,
    /// Greedy with probability `1 − eps`, uniform neighbor otherwise.
    EpsilonGreedy {
        field: Vec<f64>,
        eps: f64,
        maximize: bool,
    },
}

impl Strategy {
    pub fn pull_toward(g: &GameGraph, targets: &[usize]) -> Result<Strategy> {
        if targets.is_empty() {
            return Err(Error::InvalidParameter("pull target set is empty".into()));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= g.n()) {
            return Err(Error::UnknownState(t));
        }
        let dist = g
            .bfs(targets)
            .into_iter()
            .map(|d| d.unwrap_or(u32::MAX))
            .collect();
        Ok(Strategy::PullToward { dist })
    }

    pub fn backtracking(g: &GameGraph, field: Vec<f64>, delta0: f64) -> Result<Strategy> {
        if field.len() != g.n() {
            return Err(Error::FieldLength {
                expected: g.n(),
                got: field.len(),
            });
        }
        if !(delta0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "backtracking needs delta0 > 0, got {delta0}"
            )));
        }
        let delta = (0..g.n()).map(|x| oscillation_at(g, &field, x)).collect();
        Ok(Strategy::Backtracking {
            field,
            delta,
            delta0,
        })
    }

    /// Player I's strategy from the comb lower bound: down, left, right at
    /// the origin while the running payoff is below `budget`, then toward the
    /// nearest tooth tip.
    pub fn comb_down_left_right(board: &crate::boards::CombBoard, budget: f64) -> Result<Strategy> {
        Ok(Strategy::Budgeted {
            name: "comb_down_left_right".into(),
            primary: Box::new(Strategy::Table {
                name: "down_left_right".into(),
                moves: board.down_left_right(),
            }),
            fallback: Box::new(Strategy::pull_toward(&board.graph, board.graph.terminals())?),
            budget,
        })
    }

    pub fn comb_pull_up(board: &crate::boards::CombBoard) -> Strategy {
        Strategy::Table {
            name: "comb_pull_up".into(),
            moves: board.pull_up(),
        }
    }

    pub fn table(name: &str, moves: Vec<Option<usize>>) -> Strategy {
        Strategy::Table {
            name: name.into(),
            moves,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Strategy::PullToward { .. } => "pull_toward".into(),
            Strategy::GreedyMax { .. } => "greedy_max".into(),
            Strategy::GreedyMin { .. } => "greedy_min".into(),
            Strategy::Backtracking { .. } => "backtracking".into(),
            Strategy::Budgeted { name, .. } | Strategy::Table { name, .. } => name.clone(),
            Strategy::RandomNeighbor => "random_neighbor".into(),
            Strategy::EpsilonGreedy { .. } => "epsilon_greedy".into(),
        }
    }

    /// Choose the next position. Only randomized strategies touch `rng`.
    pub fn choose(&self, g: &GameGraph, turn: &Turn<'_>, rng: &mut ChaCha8Rng) -> Result<usize> {
        let x = turn.current();
        let nbrs = g.neighbors(x);
        match self {
            Strategy::PullToward { dist } => nbrs
                .iter()
                .copied()
                .filter(|&y| dist[y] < dist[x])
                .min_by_key(|&y| (dist[y], y))
                .ok_or(Error::NoMove(x)),
            Strategy::GreedyMax { field } => Ok(argbest(nbrs, field, true)),
            Strategy::GreedyMin { field } => Ok(argbest(nbrs, field, false)),
            Strategy::Backtracking {
                field,
                delta,
                delta0,
            } => {
                let in_x0 = |s: usize| g.is_terminal(s) || delta[s] >= *delta0;
                if in_x0(x) {
                    return Ok(argbest(nbrs, field, false));
                }
                let (_, dist) = anchor_distances(g, turn.history, &in_x0);
                let here = dist[&x];
                if here == 0 {
                    // started off X₀ and never reached it: nothing to retrace
                    return Ok(argbest(nbrs, field, false));
                }
                nbrs.iter()
                    .copied()
                    .filter_map(|y| dist.get(&y).map(|&d| (d, y)))
                    .filter(|&(d, _)| d < here)
                    .min()
                    .map(|(_, y)| y)
                    .ok_or(Error::NoMove(x))
            }
            Strategy::Budgeted {
                primary,
                fallback,
                budget,
                ..
            } => {
                if turn.psi < *budget {
                    primary.choose(g, turn, rng)
                } else {
                    fallback.choose(g, turn, rng)
                }
            }
            Strategy::Table { moves, .. } => moves
                .get(x)
                .copied()
                .flatten()
                .ok_or(Error::NoMove(x)),
            Strategy::RandomNeighbor => Ok(nbrs[rng.gen_range(0..nbrs.len())]),
            Strategy::EpsilonGreedy {
                field,
                eps,
                maximize,
            } => {
                if rng.gen_bool(eps.clamp(0.0, 1.0)) {
                    Ok(nbrs[rng.gen_range(0..nbrs.len())])
                } else {
                    Ok(argbest(nbrs, field, *maximize))
                }
            }
        }
    }
}

/// Best neighbor by field value, smallest index on ties.
fn argbest(nbrs: &[usize], field: &[f64], maximize: bool) -> usize {
    let mut best = nbrs[0];
    for &y in &nbrs[1..] {
        let better = if maximize {
            field[y] > field[best]
        } else {
            field[y] < field[best]
        };
        if better {
            best = y;
        }
    }
    best
}

/// Last visited point `v_n` of `X₀` (the start if none) and hop distances to
/// it within the subgraph induced by the positions visited since then.
fn anchor_distances(
    g: &GameGraph,
    history: &[usize],
    in_x0: &dyn Fn(usize) -> bool,
) -> (usize, HashMap<usize, u32>) {
    let j = history.iter().rposition(|&s| in_x0(s)).unwrap_or(0);
    let span: std::collections::HashSet<usize> = history[j..].iter().copied().collect();
    let v = history[j];
    let mut dist = HashMap::new();
    dist.insert(v, 0u32);
    let mut queue = VecDeque::from([v]);
    while let Some(a) = queue.pop_front() {
        let da = dist[&a];
        for &b in g.neighbors(a) {
            if span.contains(&b) && !dist.contains_key(&b) {
                dist.insert(b, da + 1);
                queue.push_back(b);
            }
        }
    }
    (v, dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    /// Winner of each coin toss (1 or 2).
    pub coin_wins: Vec<u8>,
    /// `F(x_τ) + Σ f(x_i)`, or `−∞` when truncated.
    pub payoff: f64,
    pub terminated: bool,
    pub steps: usize,
    /// Names of player I's and player II's strategies.
    pub strategies: (String, String),
}

impl Trajectory {
    /// Running payoff accumulated before each position.
    pub fn psi(&self, g: &GameGraph) -> Vec<f64> {
        let mut acc = 0.0;
        self.states
            .iter()
            .map(|&x| {
                let before = acc;
                acc += g.running_payoff(x);
                before
            })
            .collect()
    }

    pub fn recompute_payoff(&self, g: &GameGraph) -> f64 {
        let last = *self.states.last().expect("nonempty");
        match g.terminal_payoff(last) {
            Some(fy) => fy + self.states[..self.states.len() - 1]
                .iter()
                .map(|&x| g.running_payoff(x))
                .sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }
}

/// Play one game from `x0`, stopping at a terminal or after `max_steps` moves.
pub fn play(
    g: &GameGraph,
    s1: &Strategy,
    s2: &Strategy,
    x0: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Trajectory> {
    play_trial(g, s1, s2, x0, &mut trial_rng(seed, 0), max_steps)
}

fn play_trial(
    g: &GameGraph,
    s1: &Strategy,
    s2: &Strategy,
    x0: usize,
    rng: &mut ChaCha8Rng,
    max_steps: usize,
) -> Result<Trajectory> {
    if x0 >= g.n() {
        return Err(Error::UnknownState(x0));
    }
    if max_steps == 0 {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    let mut states = vec![x0];
    let mut coin_wins = Vec::new();
    let mut psi = 0.0;
    let mut x = x0;
    while !g.is_terminal(x) && coin_wins.len() < max_steps {
        let player = if rng.gen_bool(0.5) { PLAYER_I } else { PLAYER_II };
        let s = if player == PLAYER_I { s1 } else { s2 };
        let turn = Turn {
            history: &states,
            psi,
        };
        let y = s.choose(g, &turn, rng)?;
        if !g.is_adjacent(x, y) {
            return Err(Error::IllegalMove {
                from: x,
                to: y,
                player,
            });
        }
        psi += g.running_payoff(x);
        coin_wins.push(player);
        states.push(y);
        x = y;
    }
    let terminated = g.is_terminal(x);
    let payoff = match g.terminal_payoff(x) {
        Some(fy) if terminated => fy + psi,
        _ => f64::NEG_INFINITY,
    };
    Ok(Trajectory {
        steps: coin_wins.len(),
        states,
        coin_wins,
        payoff,
        terminated,
        strategies: (s1.name(), s2.name()),
    })
}

/// Run `trials` games; trial `i` uses stream `i` of `seed`.
pub fn simulate(
    g: &GameGraph,
    s1: &Strategy,
    s2: &Strategy,
    x0: usize,
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<Trajectory>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| play_trial(g, s1, s2, x0, &mut trial_rng(seed, i), max_steps))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    /// Mean payoff over terminated trials (NaN if none terminated).
    pub mean: f64,
    pub std_err: f64,
    pub termination_rate: f64,
    pub trials: usize,
}

impl ValueEstimate {
    pub fn from_trajectories(ts: &[Trajectory]) -> ValueEstimate {
        let payoffs: Vec<f64> = ts.iter().filter(|t| t.terminated).map(|t| t.payoff).collect();
        let (mean, std_err) = mean_se(&payoffs);
        ValueEstimate {
            mean,
            std_err,
            termination_rate: payoffs.len() as f64 / ts.len().max(1) as f64,
            trials: ts.len(),
        }
    }
}

pub fn estimate_value(
    g: &GameGraph,
    s1: &Strategy,
    s2: &Strategy,
    x0: usize,
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<ValueEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let ts = simulate(g, s1, s2, x0, trials, seed, max_steps)?;
    Ok(ValueEstimate::from_trajectories(&ts))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Processes whose one-step drift is checked against trajectories.
#[derive(Debug, Clone)]
pub enum Functional {
    /// `m_n = u(v_n) + δ₀·d_n` under player II's backtracking strategy;
    /// claimed supermartingale.
    Backtracking { field: Vec<f64>, delta0: f64 },
    /// `M_t = 2·h(x_t) + ψ(t)` with `h = 1 − y/ℓ_x`, stopped once `ψ ≥ budget`,
    /// under player I's comb strategy; claimed submartingale.
    CombM { potential: Vec<f64>, budget: f64 },
    /// `u(x_n)` with both players greedy on `u`; claimed martingale.
    Greedy { field: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    NonPositive,
    NonNegative,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub functional: String,
    pub claim: Drift,
    pub increments: usize,
    pub mean: f64,
    pub std_err: f64,
    pub pass: bool,
}

impl Functional {
    fn name(&self) -> &'static str {
        match self {
            Functional::Backtracking { .. } => "backtracking_m",
            Functional::CombM { .. } => "comb_M",
            Functional::Greedy { .. } => "greedy_u",
        }
    }

    fn check_strategies(&self, t: &Trajectory) -> Result<()> {
        let (a, b) = (&t.strategies.0, &t.strategies.1);
        let ok = match self {
            Functional::Backtracking { .. } => b == "backtracking",
            Functional::CombM { .. } => a == "comb_down_left_right",
            Functional::Greedy { .. } => a == "greedy_max" && b == "greedy_min",
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "{} cannot be checked on ({a}, {b}) play",
                self.name()
            )))
        }
    }

    /// Value of the process along the trajectory, cut where it stops being
    /// claimed.
    fn path(&self, g: &GameGraph, t: &Trajectory) -> Vec<f64> {
        match self {
            Functional::Backtracking { field, delta0 } => {
                let delta: Vec<f64> = (0..g.n()).map(|x| oscillation_at(g, field, x)).collect();
                let in_x0 = |s: usize| g.is_terminal(s) || delta[s] >= *delta0;
                (1..=t.states.len())
                    .map(|n| {
                        let hist = &t.states[..n];
                        let (v, dist) = anchor_distances(g, hist, &in_x0);
                        field[v] + delta0 * dist[&hist[n - 1]] as f64
                    })
                    .collect()
            }
            Functional::CombM { potential, budget } => {
                let psi = t.psi(g);
                let mut out = Vec::new();
                for (n, &x) in t.states.iter().enumerate() {
                    out.push(2.0 * potential[x] + psi[n]);
                    if psi[n] >= *budget {
                        break;
                    }
                }
                out
            }
            Functional::Greedy { field } => t.states.iter().map(|&x| field[x]).collect(),
        }
    }

    fn claim(&self) -> Drift {
        match self {
            Functional::Backtracking { .. } => Drift::NonPositive,
            Functional::CombM { .. } => Drift::NonNegative,
            Functional::Greedy { .. } => Drift::Zero,
        }
    }
}

/// Mean one-step increment of the process over all recorded steps, judged
/// against the claimed sign at three standard errors.
pub fn drift_check(
    g: &GameGraph,
    trajectories: &[Trajectory],
    functional: &Functional,
) -> Result<DriftReport> {
    for t in trajectories {
        functional.check_strategies(t)?;
    }
    let incs: Vec<f64> = trajectories
        .par_iter()
        .flat_map_iter(|t| {
            let p = functional.path(g, t);
            p.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
        })
        .collect();
    let (mean, std_err) = mean_se(&incs);
    let slack = 3.0 * std_err + 1e-12;
    let claim = functional.claim();
    let pass = !incs.is_empty()
        && match claim {
            Drift::NonPositive => mean <= slack,
            Drift::NonNegative => mean >= -slack,
            Drift::Zero => mean.abs() <= slack,
        };
    Ok(DriftReport {
        functional: functional.name().into(),
        claim,
        increments: incs.len(),
        mean,
        std_err,
        pass,
    })
}
