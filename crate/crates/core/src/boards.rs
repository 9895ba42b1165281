//! Named boards: paths, the self-loop triangle, truncated lattice strips, the
//! pull-up square, combs, and random connected graphs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameGraph;
use crate::solvers::IterOptions;

/// Path `0 – 1 – … – n−1` with terminals at both ends.
pub fn path(n: usize, left: f64, right: f64) -> GameGraph {
    path_with_running(n, left, right, 0.0)
}

/// Path with a constant running payoff on the interior.
pub fn path_with_running(n: usize, left: f64, right: f64, f: f64) -> GameGraph {
    assert!(n >= 2, "path needs two endpoints");
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let mut payoff = vec![None; n];
    payoff[0] = Some(left);
    payoff[n - 1] = Some(right);
    let mut running = vec![f; n];
    running[0] = 0.0;
    running[n - 1] = 0.0;
    GameGraph::from_parts(n, &edges, payoff, running).expect("path is valid")
}

/// Triangle `v0 v1 v2` with self-loops, `Y = {v0}`, `F(v0) = 0`,
/// `f(v1) = −1`, `f(v2) = 1`.
pub fn triangle() -> GameGraph {
    GameGraph::from_parts(
        3,
        &[(0, 1), (1, 2), (0, 2), (0, 0), (1, 1), (2, 2)],
        vec![Some(0.0), None, None],
        vec![0.0, -1.0, 1.0],
    )
    .expect("triangle is valid")
    .with_labels(vec!["v0".into(), "v1".into(), "v2".into()])
}

/// Random connected graph on `n` states: a random spanning tree plus each
/// remaining pair with probability `p`. Between one and `max(1, n/5)`
/// terminals get payoffs uniform in `[0, 1]`; `f ≡ 0`.
pub fn random_connected(n: usize, p: f64, seed: u64) -> GameGraph {
    assert!(n >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        edges.push((order[i], parent));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let n_term = rng.gen_range(1..=(n / 5).max(1));
    let mut payoff = vec![None; n];
    for &t in order.choose_multiple(&mut rng, n_term) {
        payoff[t] = Some(rng.gen::<f64>());
    }
    GameGraph::from_parts(n, &edges, payoff, vec![0.0; n]).expect("random graph is connected")
}

/// Truncation of `Z²` to `[−half_w, half_w] × [−half_h, half_h]`.
///
/// Terminals are the `x`-axis and the outer ring, with `F(x, y) = x − |y|`.
pub struct LatticeStrip {
    pub graph: GameGraph,
    pub coords: Vec<(i64, i64)>,
}

pub fn z2_strip(half_w: i64, half_h: i64) -> LatticeStrip {
    let w = 2 * half_w + 1;
    let h = 2 * half_h + 1;
    let idx = |x: i64, y: i64| ((y + half_h) * w + (x + half_w)) as usize;
    let mut coords = Vec::with_capacity((w * h) as usize);
    let mut payoff = Vec::with_capacity((w * h) as usize);
    let mut edges = Vec::new();
    for y in -half_h..=half_h {
        for x in -half_w..=half_w {
            coords.push((x, y));
            let boundary = y == 0 || x.abs() == half_w || y.abs() == half_h;
            payoff.push(boundary.then(|| (x - y.abs()) as f64));
            if x < half_w {
                edges.push((idx(x, y), idx(x + 1, y)));
            }
            if y < half_h {
                edges.push((idx(x, y), idx(x, y + 1)));
            }
        }
    }
    let n = coords.len();
    let graph = GameGraph::from_parts(n, &edges, payoff, vec![0.0; n])
        .expect("strip is valid")
        .with_labels(coords.iter().map(|(x, y)| format!("({x},{y})")).collect());
    LatticeStrip { graph, coords }
}

/// The pull-up square: vertices `v(k, j)`, `j = 1..=depth`, `k = 0..=2^j`,
/// with edges `v(k,j) ~ v(k+1,j)` and `v(k,j) ~ v(2k,j+1)`.
///
/// The left edge (`k = 0`) pays 1, the right edge (`k = 2^j`) pays 0. The
/// last row stands in for the rest of the infinite square: it is terminal
/// with the harmonic value `1 − k/2^depth` and marked as an escape row.
pub struct PullupSquare {
    pub graph: GameGraph,
    pub depth: u32,
    /// `(k, j)` per state.
    pub coords: Vec<(u64, u32)>,
    /// Terminal on the left or right side of the square.
    pub side: Vec<bool>,
}

impl PullupSquare {
    pub fn index(&self, k: u64, j: u32) -> usize {
        pullup_index(k, j)
    }

    /// Exact harmonic value `1 − k/2^j`.
    pub fn harmonic(&self, x: usize) -> f64 {
        let (k, j) = self.coords[x];
        1.0 - k as f64 / (1u64 << j) as f64
    }

    /// Move table: always one step left.
    pub fn pull_left(&self) -> Vec<Option<usize>> {
        self.coords
            .iter()
            .map(|&(k, j)| (k > 0).then(|| pullup_index(k - 1, j)))
            .collect()
    }

    /// Move table: always up to `v(2k, j+1)`.
    pub fn pull_up(&self) -> Vec<Option<usize>> {
        self.coords
            .iter()
            .map(|&(k, j)| (j < self.depth).then(|| pullup_index(2 * k, j + 1)))
            .collect()
    }
}

fn pullup_index(k: u64, j: u32) -> usize {
    // rows 1..j-1 hold sum (2^i + 1) = 2^j - 2 + (j - 1) states
    let before = (1u64 << j) - 2 + (j as u64 - 1);
    (before + k) as usize
}

pub fn pullup_square(depth: u32) -> Result<PullupSquare> {
    if !(1..=24).contains(&depth) {
        return Err(Error::InvalidParameter(format!("depth {depth} not in 1..=24")));
    }
    let mut coords = Vec::new();
    let mut payoff = Vec::new();
    let mut side = Vec::new();
    let mut edges = Vec::new();
    for j in 1..=depth {
        let top = 1u64 << j;
        for k in 0..=top {
            coords.push((k, j));
            let is_side = k == 0 || k == top;
            side.push(is_side);
            payoff.push(if k == 0 {
                Some(1.0)
            } else if k == top {
                Some(0.0)
            } else if j == depth {
                Some(1.0 - k as f64 / top as f64)
            } else {
                None
            });
            if k < top {
                edges.push((pullup_index(k, j), pullup_index(k + 1, j)));
            }
            if j < depth {
                edges.push((pullup_index(k, j), pullup_index(2 * k, j + 1)));
            }
        }
    }
    let n = coords.len();
    let graph = GameGraph::from_parts(n, &edges, payoff, vec![0.0; n])?;
    Ok(PullupSquare {
        graph,
        depth,
        coords,
        side,
    })
}

/// Comb with teeth `0..width` of lengths `lengths[x]`; the base vertex
/// `(width, 0)` is terminal with payoff 0 and replaces everything beyond it.
/// Tooth tips `(x, ℓ_x)` are terminal with payoff 0; the running payoff is
/// `1/ℓ_x` on the base and 0 on the teeth.
pub struct CombBoard {
    pub graph: GameGraph,
    pub lengths: Vec<usize>,
    pub width: usize,
    /// `(x, y)` per state.
    pub coords: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

/// Tooth lengths `(c + x)^3` for `x = 0..width`.
pub fn cubic_lengths(c: usize, width: usize) -> Vec<usize> {
    (0..width).map(|x| (c + x).pow(3)).collect()
}

pub fn comb_board(lengths: &[usize]) -> Result<CombBoard> {
    if lengths.contains(&0) {
        return Err(Error::InvalidParameter("tooth length must be positive".into()));
    }
    let width = lengths.len();
    let mut offsets = Vec::with_capacity(width + 2);
    let mut coords = Vec::new();
    let mut payoff = Vec::new();
    let mut running = Vec::new();
    for (x, &l) in lengths.iter().enumerate() {
        offsets.push(coords.len());
        for y in 0..=l {
            coords.push((x, y));
            payoff.push((y == l).then_some(0.0));
            running.push(if y == 0 { 1.0 / l as f64 } else { 0.0 });
        }
    }
    offsets.push(coords.len());
    coords.push((width, 0));
    payoff.push(Some(0.0));
    running.push(0.0);
    offsets.push(coords.len());

    let mut edges = Vec::with_capacity(coords.len());
    for (x, &l) in lengths.iter().enumerate() {
        let base = offsets[x];
        for y in 0..l {
            edges.push((base + y, base + y + 1));
        }
        edges.push((base, offsets[x + 1]));
    }
    let n = coords.len();
    let graph = GameGraph::from_parts(n, &edges, payoff, running)?;
    Ok(CombBoard {
        graph,
        lengths: lengths.to_vec(),
        width,
        coords,
        offsets,
    })
}

impl CombBoard {
    pub fn index(&self, x: usize, y: usize) -> usize {
        self.offsets[x] + y
    }

    fn tooth_len(&self, x: usize) -> Option<usize> {
        self.lengths.get(x).copied()
    }

    /// Player I's primary rule from the lower-bound argument: down on a
    /// tooth, left along the base, right at the origin.
    pub fn down_left_right(&self) -> Vec<Option<usize>> {
        self.coords
            .iter()
            .map(|&(x, y)| {
                if self.graph.is_terminal(self.index(x, y)) {
                    None
                } else if y > 0 {
                    Some(self.index(x, y - 1))
                } else if x > 0 {
                    Some(self.index(x - 1, 0))
                } else {
                    Some(self.index(1, 0))
                }
            })
            .collect()
    }

    /// Always up the current tooth (right at the truncation vertex never
    /// happens since it is terminal).
    pub fn pull_up(&self) -> Vec<Option<usize>> {
        self.coords
            .iter()
            .map(|&(x, y)| match self.tooth_len(x) {
                Some(l) if y < l => Some(self.index(x, y + 1)),
                _ => None,
            })
            .collect()
    }

    /// Left along the base beyond tooth `k`, up otherwise.
    pub fn left_beyond(&self, k: usize) -> Vec<Option<usize>> {
        let up = self.pull_up();
        self.coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                if y == 0 && x > k && x < self.width {
                    Some(self.index(x - 1, 0))
                } else {
                    up[i]
                }
            })
            .collect()
    }

    /// Down on a tooth, right along the base.
    pub fn down_right(&self) -> Vec<Option<usize>> {
        self.coords
            .iter()
            .map(|&(x, y)| {
                if self.graph.is_terminal(self.index(x, y)) {
                    None
                } else if y > 0 {
                    Some(self.index(x, y - 1))
                } else {
                    Some(self.index(x + 1, 0))
                }
            })
            .collect()
    }

    /// `1 − y/ℓ_x` per state. The truncation vertex sits at the foot of a
    /// missing tooth and gets 1.
    pub fn height_potential(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|&(x, y)| match self.tooth_len(x) {
                Some(l) => 1.0 - y as f64 / l as f64,
                None => 1.0,
            })
            .collect()
    }
}

/// Player II's guarantee from always pulling left beyond tooth `k`:
/// `2 + 2 ℓ_k Σ_{j>k} 1/ℓ_j` for `ℓ_x = (c + x)^3`, with the tail summed in
/// closed form past `cutoff` terms.
pub fn comb_remark_bound(c: usize, k: usize) -> f64 {
    let l = |x: usize| ((c + x) as f64).powi(3);
    let cutoff = k + 100_000;
    let mut sum = 0.0;
    for j in (k + 1..=cutoff).rev() {
        sum += 1.0 / l(j);
    }
    // Σ_{m>M} m^-3 ≈ 1/(2 M²) − 1/(2 M³) + 1/(4 M⁴), M = c + cutoff
    let m = (c + cutoff) as f64;
    sum += 1.0 / (2.0 * m * m) - 1.0 / (2.0 * m * m * m) + 1.0 / (4.0 * m.powi(4));
    2.0 + 2.0 * l(k) * sum
}

/// Value of the comb game from below with every tooth collapsed.
///
/// On a tooth the running payoff vanishes, so any bounded fixed point is
/// linear there: `u(x, y) = u(x, 0)(1 − y/ℓ_x)`. The base then carries the
/// closed system `u_x = ½(max + min){u_{x−1}, u_{x+1}, u_x(1 − 1/ℓ_x)} + 1/ℓ_x`
/// with `u_width = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombSolution {
    pub width: usize,
    pub base: Vec<f64>,
    pub iterations: usize,
    pub residual_sup: f64,
    pub converged: bool,
}

pub fn comb_reduced_value(lengths: &[usize], opts: &IterOptions) -> Result<CombSolution> {
    let width = lengths.len();
    if width == 0 || lengths.contains(&0) {
        return Err(Error::InvalidParameter("comb needs positive tooth lengths".into()));
    }
    let inv: Vec<f64> = lengths.iter().map(|&l| 1.0 / l as f64).collect();
    let mut u = vec![-1.0; width + 1];
    u[width] = 0.0;
    let update = |u: &[f64], x: usize| {
        let tooth = u[x] * (1.0 - inv[x]);
        let mut hi = u[x + 1].max(tooth);
        let mut lo = u[x + 1].min(tooth);
        if x > 0 {
            hi = hi.max(u[x - 1]);
            lo = lo.min(u[x - 1]);
        }
        0.5 * (hi + lo) + inv[x]
    };
    let residual = |u: &[f64]| {
        (0..width)
            .map(|x| 2.0 * (update(u, x) - u[x]).abs())
            .fold(0.0, f64::max)
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut res = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut change = 0.0f64;
        for x in 0..width {
            let new = update(&u, x);
            change = change.max((new - u[x]).abs());
            u[x] = new;
        }
        if change <= opts.tol {
            res = residual(&u);
            if res <= 10.0 * opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        res = residual(&u);
    }
    Ok(CombSolution {
        width,
        base: u,
        iterations,
        residual_sup: res,
        converged,
    })
}
