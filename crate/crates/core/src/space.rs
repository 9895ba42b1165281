//! ε-step tug-of-war on sampled length spaces.
//!
//! A [`SpaceSpec`] generates a point cloud; [`build_complex`] links points at
//! distance `< ε` and marks the terminal band. Grid points carry integer
//! lattice indices so that grid-to-grid distances are `h·√k` for an integer
//! `k`, which keeps the strict `d < ε` test reproducible.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameGraph, ValueField};
use crate::simulator::trial_rng;
use crate::solvers::{initial_field, value_iteration, Direction, IterOptions, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Integer coordinates in units of the spacing, when on the lattice.
    pub lattice: Option<(i64, i64)>,
}

impl Point {
    fn grid(i: i64, j: i64, h: f64) -> Point {
        Point {
            x: i as f64 * h,
            y: j as f64 * h,
            lattice: Some((i, j)),
        }
    }

    fn free(x: f64, y: f64) -> Point {
        Point { x, y, lattice: None }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    /// `[0, length]`, terminals at both ends.
    Segment { length: f64, spacing: f64 },
    /// Disk of the given radius centred at the origin; terminals are samples
    /// of the boundary circle at arc spacing `spacing`.
    EuclideanBall { radius: f64, spacing: f64 },
    /// `[0, width] × [0, height]`, terminals on the boundary.
    EuclideanBox { width: f64, height: f64, spacing: f64 },
    /// `inner < |p| < outer`, terminals on both circles.
    Annulus { inner: f64, outer: f64, spacing: f64 },
    /// Comb with teeth `lengths[x]` at integer base positions, the base cut
    /// at `x = lengths.len()`; `1/spacing` must be an integer. Distances are
    /// path lengths inside the comb.
    Comb { lengths: Vec<usize>, spacing: f64 },
    /// `{0}×[0,1] ∪ [0,1]×{0}` with the ambient Euclidean distance and
    /// terminals `(0,1)` and `(1,0)`.
    LShape { spacing: f64 },
    /// Explicit Euclidean point list.
    Custom {
        points: Vec<[f64; 2]>,
        terminals: Vec<usize>,
        spacing: f64,
    },
}

impl SpaceSpec {
    pub fn spacing(&self) -> f64 {
        match self {
            SpaceSpec::Segment { spacing, .. }
            | SpaceSpec::EuclideanBall { spacing, .. }
            | SpaceSpec::EuclideanBox { spacing, .. }
            | SpaceSpec::Annulus { spacing, .. }
            | SpaceSpec::Comb { spacing, .. }
            | SpaceSpec::LShape { spacing }
            | SpaceSpec::Custom { spacing, .. } => *spacing,
        }
    }

    pub fn with_spacing(&self, h: f64) -> SpaceSpec {
        let mut s = self.clone();
        match &mut s {
            SpaceSpec::Segment { spacing, .. }
            | SpaceSpec::EuclideanBall { spacing, .. }
            | SpaceSpec::EuclideanBox { spacing, .. }
            | SpaceSpec::Annulus { spacing, .. }
            | SpaceSpec::Comb { spacing, .. }
            | SpaceSpec::LShape { spacing }
            | SpaceSpec::Custom { spacing, .. } => *spacing = h,
        }
        s
    }

    fn name(&self) -> &'static str {
        match self {
            SpaceSpec::Segment { .. } => "segment",
            SpaceSpec::EuclideanBall { .. } => "euclidean_ball",
            SpaceSpec::EuclideanBox { .. } => "euclidean_box",
            SpaceSpec::Annulus { .. } => "annulus",
            SpaceSpec::Comb { .. } => "comb",
            SpaceSpec::LShape { .. } => "l_shape",
            SpaceSpec::Custom { .. } => "custom",
        }
    }
}

/// Default sampling spacing for a given ε: `ε/4.5`, so that `ε` is never a
/// whole multiple of the spacing.
pub fn default_spacing(eps: f64) -> f64 {
    eps / 4.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Comb,
}

/// `d^ε(x, y)`: 0 if `d = 0`, otherwise `ε + ε⌊d/ε⌋`.
pub fn d_eps(d: f64, eps: f64) -> f64 {
    eps * d_eps_steps(d, eps) as f64
}

/// Number of sub-ε steps `d^ε/ε`. Quotients within `1e-9` (relative) of an
/// integer count as exact multiples of ε, so `d = kε` always takes `k + 1`
/// steps regardless of rounding in `d`.
pub fn d_eps_steps(d: f64, eps: f64) -> u64 {
    if d == 0.0 {
        return 0;
    }
    let q = d / eps;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64 + 1
    } else {
        q.floor() as u64 + 1
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonComplex {
    pub kind: String,
    pub points: Vec<Point>,
    pub metric: Metric,
    pub eps: f64,
    pub spacing: f64,
    terminal: Vec<bool>,
    terminals: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

fn generate(spec: &SpaceSpec) -> Result<(Vec<Point>, Vec<bool>, Metric, f64)> {
    let h = spec.spacing();
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing {h}")));
    }
    let mut pts = Vec::new();
    let mut term = Vec::new();
    let mut metric = Metric::Euclidean;
    let mut h_used = h;
    match spec {
        SpaceSpec::Segment { length, .. } => {
            let m = (length / h).round().max(1.0) as i64;
            h_used = length / m as f64;
            for i in 0..=m {
                pts.push(Point::grid(i, 0, h_used));
                term.push(i == 0 || i == m);
            }
        }
        SpaceSpec::EuclideanBall { radius, .. } => {
            let r = *radius;
            let m = (r / h).ceil() as i64;
            for j in -m..=m {
                for i in -m..=m {
                    let p = Point::grid(i, j, h);
                    if p.norm() < r - 0.25 * h {
                        pts.push(p);
                        term.push(false);
                    }
                }
            }
            push_circle(&mut pts, &mut term, r, h);
        }
        SpaceSpec::EuclideanBox { width, height, .. } => {
            let mw = (width / h).round() as i64;
            let mh = (height / h).round() as i64;
            for j in 0..=mh {
                for i in 0..=mw {
                    pts.push(Point::grid(i, j, h));
                    term.push(i == 0 || j == 0 || i == mw || j == mh);
                }
            }
        }
        SpaceSpec::Annulus { inner, outer, .. } => {
            if !(0.0 < *inner && inner < outer) {
                return Err(Error::InvalidParameter("annulus needs 0 < inner < outer".into()));
            }
            let m = (outer / h).ceil() as i64;
            for j in -m..=m {
                for i in -m..=m {
                    let p = Point::grid(i, j, h);
                    let r = p.norm();
                    if r > inner + 0.25 * h && r < outer - 0.25 * h {
                        pts.push(p);
                        term.push(false);
                    }
                }
            }
            push_circle(&mut pts, &mut term, *inner, h);
            push_circle(&mut pts, &mut term, *outer, h);
        }
        SpaceSpec::Comb { lengths, .. } => {
            metric = Metric::Comb;
            let per = (1.0 / h).round() as i64;
            if per < 1 || ((1.0 / h) - per as f64).abs() > 1e-9 {
                return Err(Error::InvalidParameter(
                    "comb spacing must divide the unit tooth gap".into(),
                ));
            }
            h_used = 1.0 / per as f64;
            let w = lengths.len() as i64;
            for a in 0..=w * per {
                pts.push(Point::grid(a, 0, h_used));
                term.push(a == w * per);
            }
            for (x, &l) in lengths.iter().enumerate() {
                let a = x as i64 * per;
                let top = l as i64 * per;
                for b in 1..=top {
                    pts.push(Point::grid(a, b, h_used));
                    term.push(b == top);
                }
            }
        }
        SpaceSpec::LShape { .. } => {
            let m = (1.0 / h).round().max(1.0) as i64;
            h_used = 1.0 / m as f64;
            for j in 0..=m {
                pts.push(Point::grid(0, j, h_used));
                term.push(j == m);
            }
            for i in 1..=m {
                pts.push(Point::grid(i, 0, h_used));
                term.push(i == m);
            }
        }
        SpaceSpec::Custom {
            points, terminals, ..
        } => {
            for p in points {
                pts.push(Point::free(p[0], p[1]));
                term.push(false);
            }
            for &t in terminals {
                *term.get_mut(t).ok_or(Error::UnknownState(t))? = true;
            }
        }
    }
    Ok((pts, term, metric, h_used))
}

fn push_circle(pts: &mut Vec<Point>, term: &mut Vec<bool>, r: f64, h: f64) {
    let m = ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).max(8);
    let m = m + m % 2;
    for k in 0..m {
        let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        pts.push(Point::free(r * t.cos(), r * t.sin()));
        term.push(true);
    }
}

pub fn build_complex(spec: &SpaceSpec, eps: f64) -> Result<EpsilonComplex> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps {eps}")));
    }
    let (points, terminal, metric, spacing) = generate(spec)?;
    if spacing > eps / 2.0 {
        return Err(Error::SpacingTooCoarse { spacing, eps });
    }
    let terminals: Vec<usize> = (0..points.len()).filter(|&i| terminal[i]).collect();
    if terminals.is_empty() {
        return Err(Error::EmptyTerminalBand);
    }
    let mut c = EpsilonComplex {
        kind: spec.name().into(),
        points,
        metric,
        eps,
        spacing,
        terminal,
        terminals,
        adjacency: Vec::new(),
    };
    c.adjacency = c.balls(eps);
    Ok(c)
}

impl EpsilonComplex {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (&self.points[i], &self.points[j]);
        match self.metric {
            Metric::Euclidean => match (p.lattice, q.lattice) {
                (Some((a, b)), Some((c, d))) => {
                    let k = (a - c) * (a - c) + (b - d) * (b - d);
                    self.spacing * (k as f64).sqrt()
                }
                _ => (p.x - q.x).hypot(p.y - q.y),
            },
            Metric::Comb => {
                let ((a1, b1), (a2, b2)) = (p.lattice.unwrap(), q.lattice.unwrap());
                let k = if b1 > 0 && b2 > 0 && a1 == a2 {
                    (b1 - b2).abs()
                } else {
                    b1 + (a1 - a2).abs() + b2
                };
                self.spacing * k as f64
            }
        }
    }

    pub fn d_eps(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            d_eps(self.dist(i, j), self.eps)
        }
    }

    /// `d^ε(i, j)/ε` as an integer, for exact metric audits.
    pub fn d_eps_steps(&self, i: usize, j: usize) -> u64 {
        if i == j {
            0
        } else {
            d_eps_steps(self.dist(i, j), self.eps)
        }
    }

    /// Points at distance `< r` from each point, excluding itself.
    /// The embedding never overestimates the metric, so a bucket grid on the
    /// embedded coordinates finds every candidate.
    pub fn balls(&self, r: f64) -> Vec<Vec<usize>> {
        let cell = |p: &Point| ((p.x / r).floor() as i64, (p.y / r).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in self.points.iter().enumerate() {
            buckets.entry(cell(p)).or_default().push(i);
        }
        (0..self.n())
            .into_par_iter()
            .map(|i| {
                let (cx, cy) = cell(&self.points[i]);
                let mut out = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(b) = buckets.get(&(cx + dx, cy + dy)) {
                            out.extend(b.iter().copied().filter(|&j| j != i && self.dist(i, j) < r));
                        }
                    }
                }
                out.sort_unstable();
                out
            })
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Hop counts from `src` in the ε-graph.
    pub fn hop_distances(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n()];
        dist[src] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(a) = queue.pop_front() {
            for &b in self.neighbors(a) {
                if dist[b] == u32::MAX {
                    dist[b] = dist[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        dist
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.terminal[i]
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| !self.terminal[i])
    }

    /// Evaluate a function of position at every point.
    pub fn eval(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.points.iter().map(f).collect()
    }

    /// Index of the closest point by embedded coordinates.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        (0..self.n())
            .min_by(|&a, &b| {
                let pa = &self.points[a];
                let pb = &self.points[b];
                (pa.x - x)
                    .hypot(pa.y - y)
                    .total_cmp(&(pb.x - x).hypot(pb.y - y))
            })
            .expect("nonempty cloud")
    }

    pub fn diameter(&self) -> f64 {
        // exact for the closed-form spaces up to sampling; an upper bound otherwise
        let t = self.terminals[0];
        let far = (0..self.n()).map(|j| self.dist(t, j)).fold(0.0, f64::max);
        let a = (0..self.n())
            .max_by(|&p, &q| self.dist(t, p).total_cmp(&self.dist(t, q)))
            .unwrap();
        let far2 = (0..self.n()).map(|j| self.dist(a, j)).fold(0.0, f64::max);
        far.max(far2)
    }

    /// The ε-step game on the cloud: `x ~ y` iff `d(x, y) < ε`, including
    /// `x ~ x`, with terminal payoff `F` on the band and running payoff
    /// `ε²·f` elsewhere. `big_f` and `f` are full-length; only the relevant
    /// entries are read.
    pub fn game(&self, big_f: &[f64], f: &[f64]) -> Result<GameGraph> {
        self.check_len(big_f)?;
        self.check_len(f)?;
        let adj: Vec<Vec<usize>> = (0..self.n())
            .map(|i| {
                let mut a = self.adjacency[i].clone();
                let pos = a.partition_point(|&j| j < i);
                a.insert(pos, i);
                a
            })
            .collect();
        let payoff = (0..self.n())
            .map(|i| self.terminal[i].then_some(big_f[i]))
            .collect();
        let e2 = self.eps * self.eps;
        let running = (0..self.n())
            .map(|i| if self.terminal[i] { 0.0 } else { e2 * f[i] })
            .collect();
        GameGraph::from_adjacency(&adj, payoff, running)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::FieldLength {
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Lipschitz constant of `F` on the terminal band.
    pub fn lip_terminal(&self, big_f: &[f64]) -> f64 {
        self.lip_on(&self.terminals, big_f)
    }

    /// `max |u(i) − u(j)| / d(i, j)` over distinct pairs of `subset`.
    pub fn lip_on(&self, subset: &[usize], u: &[f64]) -> f64 {
        self.lip_at_scale(subset, u, 0.0)
    }

    /// Lipschitz constant over pairs at distance at least `scale`.
    pub fn lip_at_scale(&self, subset: &[usize], u: &[f64], scale: f64) -> f64 {
        subset
            .par_iter()
            .enumerate()
            .map(|(a, &i)| {
                subset[a + 1..]
                    .iter()
                    .filter_map(|&j| {
                        let d = self.dist(i, j);
                        (d > 0.0 && d >= scale).then(|| (u[i] - u[j]).abs() / d)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// `u^ε` from below: player I's value of the ε-step game.
pub fn solve_u_eps(
    c: &EpsilonComplex,
    big_f: &[f64],
    f: &[f64],
    opts: &IterOptions,
) -> Result<SolveReport> {
    let g = c.game(big_f, f)?;
    value_iteration(&g, Direction::Below, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Favored {
    /// Player II favored; value `v^ε ≤ u^ε`.
    II,
    /// Player I favored; value `w^ε ≥ u^ε`.
    I,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavoredReport {
    pub side: Favored,
    pub field: ValueField,
    pub iterations: usize,
    pub residual_sup: f64,
    pub converged: bool,
}

/// Closed-neighborhood min (or max) of `v`: `out[x] = ext_{y ∈ N[x]} v[y]`.
fn closed_extreme(c: &EpsilonComplex, v: &[f64], take_min: bool) -> Vec<f64> {
    (0..c.n())
        .into_par_iter()
        .map(|x| {
            c.neighbors(x).iter().fold(v[x], |acc, &y| {
                if take_min {
                    acc.min(v[y])
                } else {
                    acc.max(v[y])
                }
            })
        })
        .collect()
}

/// Value of the favored ε-game.
///
/// The continuum ball `B_{2ε}(z)` is replaced by the two-step neighborhood of
/// `z` in the ε-graph. For the II-favored game the DP reads
/// `v(x) = max_{z ∈ N[x]} [ε²·min_{N²[z]} f̃ + ½·min(v(z), min_{N²[z] ∩ Y} F) + ½·min_{N²[z]} v]`
/// with `f̃ = 0` on `Y`; the I-favored game swaps the roles of min and max.
pub fn favored_value(
    c: &EpsilonComplex,
    big_f: &[f64],
    f: &[f64],
    side: Favored,
    opts: &IterOptions,
) -> Result<FavoredReport> {
    let g = c.game(big_f, f)?;
    let lower = side == Favored::II;
    let e2 = c.eps * c.eps;
    let ftilde: Vec<f64> = (0..c.n())
        .map(|i| if c.is_terminal(i) { 0.0 } else { f[i] })
        .collect();
    let f2 = closed_extreme(c, &closed_extreme(c, &ftilde, lower), lower);
    let sentinel = if lower { f64::INFINITY } else { f64::NEG_INFINITY };
    let fy: Vec<f64> = (0..c.n())
        .map(|i| if c.is_terminal(i) { big_f[i] } else { sentinel })
        .collect();
    let fy2 = closed_extreme(c, &closed_extreme(c, &fy, lower), lower);

    let apply = |v: &[f64]| -> Vec<f64> {
        let m2 = closed_extreme(c, &closed_extreme(c, v, lower), lower);
        let term: Vec<f64> = (0..c.n())
            .into_par_iter()
            .map(|z| {
                let stay = if lower { v[z].min(fy2[z]) } else { v[z].max(fy2[z]) };
                e2 * f2[z] + 0.5 * stay + 0.5 * m2[z]
            })
            .collect();
        // the player choosing z takes the opposite extreme
        let best = closed_extreme(c, &term, !lower);
        (0..c.n())
            .map(|x| if c.is_terminal(x) { big_f[x] } else { best[x] })
            .collect()
    };

    let dir = if lower { Direction::Below } else { Direction::Above };
    let mut v = initial_field(&g, dir);
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let next = apply(&v);
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if !change.is_finite() {
            return Err(Error::NonFinite("favored iteration diverged".into()));
        }
        if change <= opts.tol {
            let again = apply(&v);
            residual = 2.0 * again.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if residual <= 10.0 * opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        let again = apply(&v);
        residual = 2.0 * again.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        log::warn!("favored iteration stopped after {iterations} sweeps, residual {residual:e}");
    }
    let mut field = ValueField::new(v);
    field.iterations = iterations;
    field.residual_sup = residual;
    Ok(FavoredReport {
        side,
        field,
        iterations,
        residual_sup: residual,
        converged,
    })
}

/// McShane–Whitney extensions `(lower, upper)` of `F` with `L = Lip_Y F`:
/// `upper(x) = min_y F(y) + L·d(x,y)`, `lower(x) = max_y F(y) − L·d(x,y)`.
pub fn mcshane_whitney(c: &EpsilonComplex, big_f: &[f64]) -> Result<(ValueField, ValueField)> {
    c.check_len(big_f)?;
    let l = c.lip_terminal(big_f);
    let ys = c.terminals();
    let (lower, upper): (Vec<f64>, Vec<f64>) = (0..c.n())
        .into_par_iter()
        .map(|x| {
            if c.is_terminal(x) {
                return (big_f[x], big_f[x]);
            }
            ys.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), &y| {
                let d = c.dist(x, y);
                (lo.max(big_f[y] - l * d), hi.min(big_f[y] + l * d))
            })
        })
        .unzip();
    Ok((ValueField::new(lower), ValueField::new(upper)))
}

/// Sampled region `U` together with its discrete boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub inside: Vec<usize>,
    /// Points outside `U` adjacent (in the ε-graph) to a point of `U`.
    pub boundary: Vec<usize>,
}

impl Region {
    pub fn new(c: &EpsilonComplex, inside: Vec<usize>) -> Result<Region> {
        if inside.is_empty() {
            return Err(Error::DegenerateSet("empty region".into()));
        }
        if inside.iter().any(|&i| c.is_terminal(i)) {
            return Err(Error::RegionTouchesTerminal);
        }
        let mut mark = vec![false; c.n()];
        for &i in &inside {
            mark[i] = true;
        }
        let mut boundary: Vec<usize> = inside
            .iter()
            .flat_map(|&i| c.neighbors(i).iter().copied())
            .filter(|&j| !mark[j])
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        Ok(Region { inside, boundary })
    }

    /// Points of the cloud at distance `< radius` from `center`.
    pub fn ball(c: &EpsilonComplex, center: usize, radius: f64) -> Result<Region> {
        let inside = (0..c.n()).filter(|&j| c.dist(center, j) < radius).collect();
        Region::new(c, inside)
    }

    pub fn closure(&self) -> Vec<usize> {
        let mut all = self.inside.clone();
        all.extend_from_slice(&self.boundary);
        all
    }

    pub fn diameter(&self, c: &EpsilonComplex) -> f64 {
        let all = self.closure();
        all.par_iter()
            .map(|&i| all.iter().map(|&j| c.dist(i, j)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }
}

/// Random balls of radius in `[r_min, r_max]` avoiding the terminal band.
pub fn sample_ball_regions(
    c: &EpsilonComplex,
    count: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Vec<Region> {
    let mut rng = trial_rng(seed, 0);
    let interior: Vec<usize> = c.interior().collect();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count.max(1) {
        attempts += 1;
        let center = *interior.choose(&mut rng).expect("nonempty interior");
        let r = rng.gen_range(r_min..=r_max);
        if let Ok(region) = Region::ball(c, center, r) {
            out.push(region);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmRegionReport {
    pub lip_closure: f64,
    pub lip_boundary: f64,
    pub ratio: f64,
    pub diameter: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmReport {
    pub regions: Vec<AmRegionReport>,
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Compare `Lip` of `u` over `U ∪ ∂U` with `Lip` over `∂U`, both taken over
/// pairs at least `ε` apart since `u^ε` is not resolved below that. A region passes
/// when the ratio is at most `1 + slack·ε/diam(U ∪ ∂U)`.
pub fn am_audit(c: &EpsilonComplex, u: &[f64], regions: &[Region], slack: f64) -> Result<AmReport> {
    c.check_len(u)?;
    let mut reps = Vec::with_capacity(regions.len());
    for r in regions {
        if r.inside.iter().any(|&i| c.is_terminal(i)) {
            return Err(Error::RegionTouchesTerminal);
        }
        let lip_closure = c.lip_at_scale(&r.closure(), u, c.eps);
        let lip_boundary = c.lip_at_scale(&r.boundary, u, c.eps);
        let ratio = if lip_boundary > 0.0 {
            lip_closure / lip_boundary
        } else if lip_closure == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        let diameter = r.diameter(c);
        reps.push(AmRegionReport {
            lip_closure,
            lip_boundary,
            ratio,
            diameter,
            allowed: 1.0 + slack * c.eps / diameter,
        });
    }
    let worst_ratio = reps.iter().map(|r| r.ratio).fold(1.0, f64::max);
    let pass = reps.iter().all(|r| r.ratio <= r.allowed);
    Ok(AmReport {
        regions: reps,
        worst_ratio,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub eps: f64,
    pub spacing: f64,
    pub points: usize,
    /// Values at the common evaluation points.
    pub values: Vec<f64>,
    /// Sup-difference to the previous rung (NaN on the first).
    pub sup_diff: f64,
    pub residual: f64,
    pub converged: bool,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStudy {
    pub rows: Vec<LadderRow>,
    /// Slope of `log sup_diff` against `log ε` (NaN with fewer than two
    /// differences).
    pub order: f64,
    pub r_squared: f64,
}

/// Solve `u^ε` on each rung and compare values at fixed positions.
///
/// The spacing follows ε at a fixed ratio `spacing₀/ε₀`, so halving ε
/// halves the spacing and keeps lattice points nested.
pub fn convergence_study(
    spec: &SpaceSpec,
    big_f: &(dyn Fn(&Point) -> f64 + Sync),
    f: &(dyn Fn(&Point) -> f64 + Sync),
    ladder: &[f64],
    eval_at: &[(f64, f64)],
    opts: &IterOptions,
) -> Result<LadderStudy> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty ladder".into()));
    }
    let ratio = spec.spacing() / ladder[0];
    let mut rows: Vec<LadderRow> = Vec::new();
    for &eps in ladder {
        let start = Instant::now();
        let c = build_complex(&spec.with_spacing(ratio * eps), eps)?;
        let rep = solve_u_eps(&c, &c.eval(big_f), &c.eval(f), opts)?;
        let values: Vec<f64> = eval_at
            .iter()
            .map(|&(x, y)| rep.values()[c.nearest(x, y)])
            .collect();
        let sup_diff = rows.last().map_or(f64::NAN, |prev| {
            prev.values
                .iter()
                .zip(&values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        rows.push(LadderRow {
            eps,
            spacing: c.spacing,
            points: c.n(),
            values,
            sup_diff,
            residual: rep.residual_sup,
            converged: rep.converged,
            runtime_s: start.elapsed().as_secs_f64(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_diff.is_finite() && r.sup_diff > 0.0)
        .map(|r| (r.eps, r.sup_diff))
        .collect();
    let (order, r_squared) = match crate::fit::loglog(&pts) {
        Some(fit) => (fit.slope, fit.r_squared),
        None => (f64::NAN, f64::NAN),
    };
    Ok(LadderStudy {
        rows,
        order,
        r_squared,
    })
}

/// Constant from the uniform Lipschitz estimate for `u^ε` with respect to
/// `d^ε`: `4·(3·Lip^ε_Y F + 4·diam·sup|f|)`.
pub fn uniform_lipschitz_constant(c: &EpsilonComplex, big_f: &[f64], f: &[f64]) -> f64 {
    let ys = c.terminals();
    let mut lip = 0.0f64;
    for (a, &i) in ys.iter().enumerate() {
        for &j in &ys[a + 1..] {
            lip = lip.max((big_f[i] - big_f[j]).abs() / c.d_eps(i, j));
        }
    }
    let sup_f = c.interior().map(|i| f[i].abs()).fold(0.0, f64::max);
    4.0 * (3.0 * lip + 4.0 * c.diameter() * sup_f)
}
