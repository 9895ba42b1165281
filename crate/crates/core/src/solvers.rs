//! Solvers for `Δ∞u = −2f` on finite boards.
//!
//! Two independent routes:
//! * [`solve_f0_exact`] — steepest-path interpolation, valid when `f ≡ 0`;
//! * [`value_iteration`] — monotone fixed-point iteration of the DP operator
//!   from a certified sub- or supersolution. From below the limit is the
//!   smallest fixed point above the start (player I's value); from above, the
//!   largest (player II's value).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{dp_apply, dp_at, residual_of, residual_unchecked, GameGraph, ValueField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactF0,
    IterateBelow,
    IterateAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// In-place updates in index order.
    GaussSeidel,
    /// Synchronous updates; parallel over states, schedule independent.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub sweep: Sweep,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
            sweep: Sweep::GaussSeidel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub field: ValueField,
    pub method: Method,
    pub iterations: usize,
    pub residual_sup: f64,
    pub converged: bool,
    /// Extreme value of the starting field: a certified lower bound on
    /// player I's value (below) or upper bound on player II's (above).
    pub lower_init: f64,
    /// Every sweep moved the iterate in the declared direction.
    pub monotone: bool,
    pub warning: Option<String>,
}

impl SolveReport {
    pub fn values(&self) -> &[f64] {
        &self.field.values
    }
}

/// Sup over non-terminals of |Δ∞u(x) + 2f(x)|.
pub fn residual(g: &GameGraph, u: &ValueField) -> Result<f64> {
    residual_of(g, &u.values)
}

/// Exact value for `f ≡ 0`: repeatedly interpolate linearly along a path of
/// maximal slope whose endpoints are solved and whose interior is not.
pub fn solve_f0_exact(g: &GameGraph) -> Result<SolveReport> {
    if let Some(x) = g.non_terminals().find(|&x| g.running_payoff(x) != 0.0) {
        return Err(Error::NonzeroRunningPayoff(x));
    }
    let n = g.n();
    let mut solved: Vec<bool> = (0..n).map(|x| g.is_terminal(x)).collect();
    let mut values = g.field_with(f64::NAN);
    let mut remaining = solved.iter().filter(|s| !**s).count();
    let mut rounds = 0;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();

    while remaining > 0 {
        rounds += 1;
        // (slope, a, b, k)
        let mut best: Option<(f64, usize, usize, u32)> = None;
        for a in 0..n {
            if !solved[a] || !g.neighbors(a).iter().any(|&w| !solved[w]) {
                continue;
            }
            // hops from a to unsolved states through unsolved states
            let touched = bfs_unsolved(g, &solved, a, &mut dist, &mut queue);
            for &w in &touched {
                let d = dist[w];
                for &b in g.neighbors(w) {
                    if !solved[b] {
                        continue;
                    }
                    let k = d + 1;
                    let rise = values[b] - values[a];
                    if rise < 0.0 {
                        continue;
                    }
                    let slope = rise / k as f64;
                    let better = match best {
                        None => true,
                        Some((s, ba, bb, bk)) => {
                            slope > s || (slope == s && (a, b, k) < (ba, bb, bk))
                        }
                    };
                    if better {
                        best = Some((slope, a, b, k));
                    }
                }
            }
            for &w in &touched {
                dist[w] = u32::MAX;
            }
        }
        let (_, a, b, k) = best.expect("connected board always has a candidate path");
        let path = lex_smallest_shortest_interior(g, &solved, a, b, k, &mut dist, &mut queue);
        let (ua, ub) = (values[a], values[b]);
        for (i, &v) in path.iter().enumerate() {
            let i = (i + 1) as f64;
            values[v] = ua + i * (ub - ua) / k as f64;
            solved[v] = true;
            remaining -= 1;
        }
    }

    let scale = g
        .max_terminal_payoff()
        .abs()
        .max(g.min_terminal_payoff().abs())
        .max(1.0);
    let field = ValueField::certified(g, values, rounds)?;
    let residual_sup = field.residual_sup;
    Ok(SolveReport {
        field,
        method: Method::ExactF0,
        iterations: rounds,
        residual_sup,
        converged: residual_sup <= 1e-12 * scale,
        lower_init: g.min_terminal_payoff(),
        monotone: true,
        warning: None,
    })
}

/// BFS from solved `a` into the unsolved region. Returns the unsolved states
/// reached; their hop counts are left in `dist`.
fn bfs_unsolved(
    g: &GameGraph,
    solved: &[bool],
    a: usize,
    dist: &mut [u32],
    queue: &mut VecDeque<usize>,
) -> Vec<usize> {
    let mut touched = Vec::new();
    queue.clear();
    for &w in g.neighbors(a) {
        if !solved[w] && dist[w] == u32::MAX {
            dist[w] = 1;
            touched.push(w);
            queue.push_back(w);
        }
    }
    while let Some(x) = queue.pop_front() {
        for &y in g.neighbors(x) {
            if !solved[y] && dist[y] == u32::MAX {
                dist[y] = dist[x] + 1;
                touched.push(y);
                queue.push_back(y);
            }
        }
    }
    touched
}

fn lex_smallest_shortest_interior(
    g: &GameGraph,
    solved: &[bool],
    a: usize,
    b: usize,
    k: u32,
    dist: &mut [u32],
    queue: &mut VecDeque<usize>,
) -> Vec<usize> {
    // dist[w] = hops from unsolved w to b through unsolved states
    let touched = bfs_unsolved(g, solved, b, dist, queue);
    let mut path = Vec::with_capacity(k as usize - 1);
    let mut cur = a;
    for i in 1..k {
        let need = k - i;
        let next = g
            .neighbors(cur)
            .iter()
            .copied()
            .filter(|&w| !solved[w] && dist[w] == need)
            .min()
            .expect("shortest path exists");
        path.push(next);
        cur = next;
    }
    for &w in &touched {
        dist[w] = u32::MAX;
    }
    path
}

/// Starting field for monotone iteration: `m − β·h(D)` off `Y` (below), where
/// `D` is hop distance to `Y`, `h(D) = D(2N + 2 − D)` and `β = max(0, −min f)`.
/// Under a pull-toward-`Y` strategy `h(D)` bounds the expected remaining
/// duration, so this field is a subsolution and a lower bound on player I's
/// value. The above-start is the mirror image.
pub fn initial_field(g: &GameGraph, direction: Direction) -> Vec<f64> {
    let d = g.distance_to_terminals();
    let big_n = d.iter().copied().max().unwrap_or(0) as f64;
    let (fmin, fmax) = g.running_range();
    let h = |dx: u32| {
        let dx = dx as f64;
        dx * (2.0 * big_n + 2.0 - dx)
    };
    match direction {
        Direction::Below => {
            let m = g.min_terminal_payoff() - 1.0;
            let beta = (-fmin).max(0.0);
            (0..g.n())
                .map(|x| match g.terminal_payoff(x) {
                    Some(v) => v,
                    None => m - beta * h(d[x]),
                })
                .collect()
        }
        Direction::Above => {
            let m = g.max_terminal_payoff() + 1.0;
            let beta = fmax.max(0.0);
            (0..g.n())
                .map(|x| match g.terminal_payoff(x) {
                    Some(v) => v,
                    None => m + beta * h(d[x]),
                })
                .collect()
        }
    }
}

/// Monotone value iteration of the DP operator.
///
/// Converged when the sup-norm change of a sweep is `≤ tol` and the residual
/// is `≤ 10·tol`. Exhausting `max_iter` yields a non-converged report.
pub fn value_iteration(
    g: &GameGraph,
    direction: Direction,
    opts: &IterOptions,
) -> Result<SolveReport> {
    let init = initial_field(g, direction);
    value_iteration_from(g, direction, opts, init)
}

/// Value iteration from a caller-supplied start, which should be a sub- or
/// supersolution matching `direction` for the monotone guarantees to hold.
pub fn value_iteration_from(
    g: &GameGraph,
    direction: Direction,
    opts: &IterOptions,
    mut values: Vec<f64>,
) -> Result<SolveReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {}", opts.tol)));
    }
    g.check_extends(&values)?;
    let lower_init = g
        .non_terminals()
        .map(|x| values[x])
        .fold(
            match direction {
                Direction::Below => f64::INFINITY,
                Direction::Above => f64::NEG_INFINITY,
            },
            |acc, v| match direction {
                Direction::Below => acc.min(v),
                Direction::Above => acc.max(v),
            },
        );
    let sign = match direction {
        Direction::Below => 1.0,
        Direction::Above => -1.0,
    };
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale;
    let interior: Vec<usize> = g.non_terminals().collect();

    let mut monotone = true;
    let mut converged = false;
    let mut residual_sup = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut change = 0.0f64;
        match opts.sweep {
            Sweep::GaussSeidel => {
                for &x in &interior {
                    let new = dp_at(g, &values, x);
                    let step = new - values[x];
                    if sign * step < -slack {
                        monotone = false;
                    }
                    change = change.max(step.abs());
                    values[x] = new;
                }
            }
            Sweep::Jacobi => {
                let next = dp_apply(g, &values);
                for &x in &interior {
                    let step = next[x] - values[x];
                    if sign * step < -slack {
                        monotone = false;
                    }
                    change = change.max(step.abs());
                }
                values = next;
            }
        }
        if !change.is_finite() {
            return Err(Error::NonFinite(format!(
                "value iteration diverged at sweep {iterations}"
            )));
        }
        if change <= opts.tol {
            residual_sup = residual_unchecked(g, &values);
            if residual_sup <= 10.0 * opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        residual_sup = residual_unchecked(g, &values);
        log::warn!(
            "value iteration stopped after {iterations} sweeps with residual {residual_sup:e}"
        );
    }
    let (fmin, fmax) = g.running_range();
    let warning = (fmin < 0.0 && fmax > 0.0).then(|| {
        "sign-changing running payoff: limit is an extreme fixed point; \
         equality with the game value is not certified"
            .to_string()
    });
    Ok(SolveReport {
        field: ValueField {
            values,
            residual_sup,
            iterations,
        },
        method: match direction {
            Direction::Below => Method::IterateBelow,
            Direction::Above => Method::IterateAbove,
        },
        iterations,
        residual_sup,
        converged,
        lower_init,
        monotone,
        warning,
    })
}

/// Below/above limits and the sup of their difference.
pub fn bracket(g: &GameGraph, opts: &IterOptions) -> Result<(SolveReport, SolveReport, f64)> {
    let lo = value_iteration(g, Direction::Below, opts)?;
    let hi = value_iteration(g, Direction::Above, opts)?;
    let gap = lo
        .values()
        .iter()
        .zip(hi.values())
        .map(|(a, b)| (b - a).abs())
        .fold(0.0, f64::max);
    Ok((lo, hi, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boards;

    #[test]
    fn exact_on_path() {
        let g = boards::path(5, 0.0, 1.0);
        let r = solve_f0_exact(&g).unwrap();
        for k in 0..5 {
            assert!((r.values()[k] - k as f64 / 4.0).abs() < 1e-15);
        }
        assert!(r.converged);
        assert!(r.residual_sup <= 1e-12);
    }

    #[test]
    fn exact_single_interior_vertex() {
        let g = boards::path(3, 0.0, 1.0);
        let r = solve_f0_exact(&g).unwrap();
        assert_eq!(r.values()[1], 0.5);
    }

    #[test]
    fn exact_rejects_running_payoff() {
        let g = boards::path_with_running(3, 0.0, 1.0, 1.0);
        assert_eq!(
            solve_f0_exact(&g).unwrap_err(),
            Error::NonzeroRunningPayoff(1)
        );
    }

    #[test]
    fn exact_handles_pendant_component() {
        // 0(T,F=1) - 1 - 2(T,F=0), and 3 hanging off 0 only
        let g = GameGraph::from_parts(
            4,
            &[(0, 1), (1, 2), (0, 3)],
            vec![Some(1.0), None, Some(0.0), None],
            vec![0.0; 4],
        )
        .unwrap();
        let r = solve_f0_exact(&g).unwrap();
        assert_eq!(r.values(), &[1.0, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn running_payoff_path_fixed_point() {
        let g = boards::path_with_running(3, 0.0, 1.0, 1.0);
        let opts = IterOptions::default();
        let lo = value_iteration(&g, Direction::Below, &opts).unwrap();
        let hi = value_iteration(&g, Direction::Above, &opts).unwrap();
        assert!((lo.values()[1] - 1.5).abs() < 1e-9);
        assert!((hi.values()[1] - 1.5).abs() < 1e-9);
        assert!(lo.monotone && hi.monotone);
    }

    #[test]
    fn triangle_extremes() {
        let g = boards::triangle();
        let opts = IterOptions::default();
        let lo = value_iteration(&g, Direction::Below, &opts).unwrap();
        let hi = value_iteration(&g, Direction::Above, &opts).unwrap();
        assert!((lo.values()[1] + 2.0).abs() < 1e-8 && lo.values()[2].abs() < 1e-8);
        assert!(hi.values()[1].abs() < 1e-8 && (hi.values()[2] - 2.0).abs() < 1e-8);
        assert!(lo.warning.is_some());
        assert!(lo.lower_init <= -2.0 && hi.lower_init >= 2.0);
    }

    #[test]
    fn jacobi_matches_gauss_seidel() {
        let g = boards::random_connected(40, 0.1, 7);
        let gs = value_iteration(&g, Direction::Below, &IterOptions::default()).unwrap();
        let jac = value_iteration(
            &g,
            Direction::Below,
            &IterOptions {
                sweep: Sweep::Jacobi,
                ..IterOptions::default()
            },
        )
        .unwrap();
        assert!(gs.converged && jac.converged);
        for (a, b) in gs.values().iter().zip(jac.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = boards::path(30, 0.0, 1.0);
        let r = value_iteration(
            &g,
            Direction::Below,
            &IterOptions {
                max_iter: 3,
                ..IterOptions::default()
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.residual_sup > 0.0);
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let g = boards::path(5, 0.0, 1.0);
        let mut u = solve_f0_exact(&g).unwrap().field;
        u.values[2] += 1.0;
        assert_eq!(residual(&g, &u).unwrap(), 2.0);
        u.values[0] = 0.5;
        assert_eq!(residual(&g, &u).unwrap_err(), Error::BoundaryMismatch(0));
    }

    #[test]
    fn initial_field_is_subsolution() {
        let g = boards::triangle();
        let init = initial_field(&g, Direction::Below);
        let t = dp_apply(&g, &init);
        for x in g.non_terminals() {
            assert!(t[x] >= init[x]);
        }
        let init = initial_field(&g, Direction::Above);
        let t = dp_apply(&g, &init);
        for x in g.non_terminals() {
            assert!(t[x] <= init[x]);
        }
    }
}
