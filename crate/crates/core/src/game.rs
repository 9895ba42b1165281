//! Finite tug-of-war boards and the one-step dynamic-programming operator.
//!
//! A [`GameGraph`] is an undirected graph (self-loops allowed) with a nonempty
//! terminal set `Y`, a terminal payoff `F` on `Y` and a running payoff `f` on
//! the remaining states. States are dense indices `0..n`; neighbor lists are
//! stored in compressed rows so sweeps scan contiguous memory.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this many states the DP operator runs sequentially.
const PAR_THRESHOLD: usize = 4096;

/// A state label as it appears in the interchange document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateLabel {
    Index(i64),
    Name(String),
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateLabel::Index(i) => write!(f, "{i}"),
            StateLabel::Name(s) => f.write_str(s),
        }
    }
}

/// Graph interchange document:
/// `{states:[...], edges:[[i,j],...], terminals:[i,...], F:{i:val}, f:{i:val}}`.
///
/// Each edge pair is undirected. Missing `f` entries mean zero running payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub states: Vec<StateLabel>,
    pub edges: Vec<[usize; 2]>,
    pub terminals: Vec<usize>,
    #[serde(rename = "F")]
    pub terminal_payoff: BTreeMap<usize, f64>,
    #[serde(rename = "f", default)]
    pub running_payoff: BTreeMap<usize, f64>,
}

impl GameSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game spec serializes")
    }
}

#[derive(Debug, Clone)]
pub struct GameGraph {
    labels: Option<Vec<String>>,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    adj: Vec<usize>,
    terminal: Vec<bool>,
    terminals: Vec<usize>,
    terminal_payoff: Vec<f64>,
    running_payoff: Vec<f64>,
}

/// Validates an interchange document and builds the board.
pub fn build_game(spec: &GameSpec) -> Result<GameGraph> {
    let n = spec.states.len();
    let terminals: BTreeSet<usize> = spec.terminals.iter().copied().collect();
    if terminals.is_empty() {
        return Err(Error::EmptyTerminalSet);
    }
    if let Some(&t) = terminals.iter().find(|&&t| t >= n) {
        return Err(Error::UnknownState(t));
    }
    let keys: BTreeSet<usize> = spec.terminal_payoff.keys().copied().collect();
    if keys != terminals {
        return Err(Error::WrongDomain(
            "F must be defined exactly on the terminal set".into(),
        ));
    }
    let mut payoff = vec![None; n];
    for (&i, &v) in &spec.terminal_payoff {
        payoff[i] = Some(v);
    }
    let mut running = vec![0.0; n];
    for (&i, &v) in &spec.running_payoff {
        if i >= n {
            return Err(Error::UnknownState(i));
        }
        if terminals.contains(&i) {
            return Err(Error::WrongDomain(format!(
                "f defined on terminal state {i}"
            )));
        }
        running[i] = v;
    }
    let edges: Vec<(usize, usize)> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
    let g = GameGraph::from_parts(n, &edges, payoff, running)?;
    Ok(g.with_labels(spec.states.iter().map(|s| s.to_string()).collect()))
}

impl GameGraph {
    /// Builds a board from undirected edge pairs.
    ///
    /// `terminal_payoff[i]` is `Some(F(i))` exactly on `Y`; `running_payoff`
    /// must vanish on `Y`.
    pub fn from_parts(
        n: usize,
        edges: &[(usize, usize)],
        terminal_payoff: Vec<Option<f64>>,
        running_payoff: Vec<f64>,
    ) -> Result<Self> {
        if terminal_payoff.len() != n || running_payoff.len() != n {
            return Err(Error::FieldLength {
                expected: n,
                got: terminal_payoff.len().min(running_payoff.len()),
            });
        }
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n {
                return Err(Error::UnknownState(a));
            }
            if b >= n {
                return Err(Error::UnknownState(b));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut degree = vec![0usize; n];
        for &(a, b) in &canon {
            degree[a] += 1;
            if a != b {
                degree[b] += 1;
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![0usize; offsets[n]];
        for &(a, b) in &canon {
            adj[fill[a]] = b;
            fill[a] += 1;
            if a != b {
                adj[fill[b]] = a;
                fill[b] += 1;
            }
        }
        for i in 0..n {
            adj[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self::assemble(None, canon, offsets, adj, terminal_payoff, running_payoff)
    }

    /// Builds a board from per-state neighbor lists, which must be symmetric.
    pub fn from_adjacency(
        lists: &[Vec<usize>],
        terminal_payoff: Vec<Option<f64>>,
        running_payoff: Vec<f64>,
    ) -> Result<Self> {
        let n = lists.len();
        let mut arcs = BTreeSet::new();
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::UnknownState(j));
                }
                arcs.insert((i, j));
            }
        }
        for &(i, j) in &arcs {
            if !arcs.contains(&(j, i)) {
                return Err(Error::AsymmetricEdges(i, j));
            }
        }
        let edges: Vec<(usize, usize)> = arcs.into_iter().filter(|&(i, j)| i <= j).collect();
        Self::from_parts(n, &edges, terminal_payoff, running_payoff)
    }

    fn assemble(
        labels: Option<Vec<String>>,
        edges: Vec<(usize, usize)>,
        offsets: Vec<usize>,
        adj: Vec<usize>,
        terminal_payoff: Vec<Option<f64>>,
        running_payoff: Vec<f64>,
    ) -> Result<Self> {
        let n = terminal_payoff.len();
        let terminal: Vec<bool> = terminal_payoff.iter().map(Option::is_some).collect();
        let terminals: Vec<usize> = (0..n).filter(|&i| terminal[i]).collect();
        if terminals.is_empty() {
            return Err(Error::EmptyTerminalSet);
        }
        let mut payoff = vec![0.0; n];
        for (i, p) in terminal_payoff.iter().enumerate() {
            if let Some(v) = p {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("F({i}) = {v}")));
                }
                payoff[i] = *v;
            }
        }
        for (i, &v) in running_payoff.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("f({i}) = {v}")));
            }
            if terminal[i] && v != 0.0 {
                return Err(Error::WrongDomain(format!(
                    "f defined on terminal state {i}"
                )));
            }
        }
        for i in 0..n {
            if offsets[i] == offsets[i + 1] {
                return Err(Error::IsolatedState(i));
            }
        }
        let g = GameGraph {
            labels,
            edges,
            offsets,
            adj,
            terminal,
            terminals,
            terminal_payoff: payoff,
            running_payoff,
        };
        let dist = g.bfs(&[0]);
        if let Some(i) = dist.iter().position(|d| d.is_none()) {
            return Err(Error::Disconnected(i));
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.n() {
            self.labels = Some(labels);
        }
        self
    }

    /// Same board with new payoffs; the graph structure is reused.
    pub fn with_payoffs(
        &self,
        terminal_payoff: Vec<Option<f64>>,
        running_payoff: Vec<f64>,
    ) -> Result<Self> {
        Self::assemble(
            self.labels.clone(),
            self.edges.clone(),
            self.offsets.clone(),
            self.adj.clone(),
            terminal_payoff,
            running_payoff,
        )
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.terminal.len()
    }

    #[inline]
    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adj[self.offsets[x]..self.offsets[x + 1]]
    }

    #[inline]
    pub fn is_terminal(&self, x: usize) -> bool {
        self.terminal[x]
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn non_terminals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&x| !self.terminal[x])
    }

    /// `F(x)` for terminal `x`.
    pub fn terminal_payoff(&self, x: usize) -> Option<f64> {
        self.terminal[x].then(|| self.terminal_payoff[x])
    }

    /// `f(x)`; zero on terminals.
    #[inline]
    pub fn running_payoff(&self, x: usize) -> f64 {
        self.running_payoff[x]
    }

    pub fn running_payoffs(&self) -> &[f64] {
        &self.running_payoff
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_adjacent(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).binary_search(&y).is_ok()
    }

    pub fn label(&self, x: usize) -> String {
        match &self.labels {
            Some(l) => l[x].clone(),
            None => x.to_string(),
        }
    }

    pub fn f_is_zero(&self) -> bool {
        self.running_payoff.iter().all(|&v| v == 0.0)
    }

    pub fn min_terminal_payoff(&self) -> f64 {
        self.terminals
            .iter()
            .map(|&y| self.terminal_payoff[y])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_terminal_payoff(&self) -> f64 {
        self.terminals
            .iter()
            .map(|&y| self.terminal_payoff[y])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// (min f, max f) over non-terminal states; (0, 0) if there are none.
    pub fn running_range(&self) -> (f64, f64) {
        self.non_terminals()
            .map(|x| self.running_payoff[x])
            .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
            .unwrap_or((0.0, 0.0))
    }

    /// Hop distances from a set of sources.
    pub fn bfs(&self, sources: &[usize]) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap();
            for &y in self.neighbors(x) {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// Hop distance from every state to `Y`.
    pub fn distance_to_terminals(&self) -> Vec<u32> {
        self.bfs(&self.terminals)
            .into_iter()
            .map(|d| d.expect("connected"))
            .collect()
    }

    /// A field equal to `F` on `Y` and `fill` elsewhere.
    pub fn field_with(&self, fill: f64) -> Vec<f64> {
        (0..self.n())
            .map(|x| if self.terminal[x] { self.terminal_payoff[x] } else { fill })
            .collect()
    }

    pub fn to_spec(&self) -> GameSpec {
        let states = (0..self.n())
            .map(|i| match &self.labels {
                Some(l) => StateLabel::Name(l[i].clone()),
                None => StateLabel::Index(i as i64),
            })
            .collect();
        GameSpec {
            states,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            terminals: self.terminals.clone(),
            terminal_payoff: self
                .terminals
                .iter()
                .map(|&y| (y, self.terminal_payoff[y]))
                .collect(),
            running_payoff: self
                .non_terminals()
                .filter(|&x| self.running_payoff[x] != 0.0)
                .map(|x| (x, self.running_payoff[x]))
                .collect(),
        }
    }

    /// Checks that `values` is finite and coincides with `F` on `Y`.
    pub fn check_extends(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n() {
            return Err(Error::FieldLength {
                expected: self.n(),
                got: values.len(),
            });
        }
        for (x, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("u({x}) = {v}")));
            }
            if self.terminal[x] {
                let f = self.terminal_payoff[x];
                if (v - f).abs() > 1e-12 * f.abs().max(1.0) {
                    return Err(Error::BoundaryMismatch(x));
                }
            }
        }
        Ok(())
    }
}

/// A value per state with its residual diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub values: Vec<f64>,
    /// sup over non-terminals of |Δ∞u(x) + 2f(x)|; `NaN` until certified.
    pub residual_sup: f64,
    pub iterations: usize,
}

impl ValueField {
    pub fn new(values: Vec<f64>) -> Self {
        ValueField {
            values,
            residual_sup: f64::NAN,
            iterations: 0,
        }
    }

    /// Wraps `values` and records their residual against `g`.
    pub fn certified(g: &GameGraph, values: Vec<f64>, iterations: usize) -> Result<Self> {
        let residual_sup = residual_of(g, &values)?;
        Ok(ValueField {
            values,
            residual_sup,
            iterations,
        })
    }

    #[inline]
    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    /// δ(x) = sup over neighbors of |u(y) − u(x)|.
    pub fn oscillation(&self, g: &GameGraph, x: usize) -> f64 {
        oscillation_at(g, &self.values, x)
    }
}

pub(crate) fn oscillation_at(g: &GameGraph, values: &[f64], x: usize) -> f64 {
    g.neighbors(x)
        .iter()
        .map(|&y| (values[y] - values[x]).abs())
        .fold(0.0, f64::max)
}

#[inline]
pub(crate) fn neighbor_extremes(g: &GameGraph, values: &[f64], x: usize) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &y in g.neighbors(x) {
        let v = values[y];
        hi = hi.max(v);
        lo = lo.min(v);
    }
    (hi, lo)
}

/// One DP update at a non-terminal: ½(sup + inf) + f(x).
#[inline]
pub(crate) fn dp_at(g: &GameGraph, values: &[f64], x: usize) -> f64 {
    let (hi, lo) = neighbor_extremes(g, values, x);
    0.5 * (hi + lo) + g.running_payoff(x)
}

/// Δ∞u(x) = sup_{y~x} u(y) + inf_{y~x} u(y) − 2u(x).
pub fn discrete_inf_laplacian(g: &GameGraph, u: &ValueField, x: usize) -> Result<f64> {
    if x >= g.n() {
        return Err(Error::UnknownState(x));
    }
    if g.is_terminal(x) {
        return Err(Error::TerminalState(x));
    }
    let v = u.values[x];
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("u({x}) = {v}")));
    }
    for &y in g.neighbors(x) {
        if !u.values[y].is_finite() {
            return Err(Error::NonFinite(format!("u({y}) = {}", u.values[y])));
        }
    }
    let (hi, lo) = neighbor_extremes(g, &u.values, x);
    Ok(hi + lo - 2.0 * v)
}

/// Applies `T(u)(x) = ½(sup u + inf u) + f(x)` off `Y` and `T(u) = F` on `Y`.
pub fn dp_operator(g: &GameGraph, u: &ValueField) -> Result<ValueField> {
    g.check_extends(&u.values)?;
    Ok(ValueField::new(dp_apply(g, &u.values)))
}

pub(crate) fn dp_apply(g: &GameGraph, values: &[f64]) -> Vec<f64> {
    let update = |x: usize| {
        if g.is_terminal(x) {
            g.terminal_payoff[x]
        } else {
            dp_at(g, values, x)
        }
    };
    if g.n() >= PAR_THRESHOLD {
        (0..g.n()).into_par_iter().map(update).collect()
    } else {
        (0..g.n()).map(update).collect()
    }
}

/// sup over non-terminals of |Δ∞u(x) + 2f(x)| for an unchecked field.
pub(crate) fn residual_unchecked(g: &GameGraph, values: &[f64]) -> f64 {
    let local = |x: usize| {
        if g.is_terminal(x) {
            0.0
        } else {
            let (hi, lo) = neighbor_extremes(g, values, x);
            (hi + lo - 2.0 * values[x] + 2.0 * g.running_payoff(x)).abs()
        }
    };
    if g.n() >= PAR_THRESHOLD {
        (0..g.n()).into_par_iter().map(local).reduce(|| 0.0, f64::max)
    } else {
        (0..g.n()).map(local).fold(0.0, f64::max)
    }
}

pub(crate) fn residual_of(g: &GameGraph, values: &[f64]) -> Result<f64> {
    g.check_extends(values)?;
    Ok(residual_unchecked(g, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, f0: f64, f1: f64) -> GameGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let mut payoff = vec![None; n];
        payoff[0] = Some(f0);
        payoff[n - 1] = Some(f1);
        GameGraph::from_parts(n, &edges, payoff, vec![0.0; n]).unwrap()
    }

    fn triangle() -> GameGraph {
        let spec = GameSpec::from_json(
            r#"{"states":["v0","v1","v2"],
                "edges":[[0,1],[1,2],[0,2],[0,0],[1,1],[2,2]],
                "terminals":[0], "F":{"0":0.0}, "f":{"1":-1.0,"2":1.0}}"#,
        )
        .unwrap();
        build_game(&spec).unwrap()
    }

    #[test]
    fn triangle_with_self_loops_is_valid() {
        let g = triangle();
        assert_eq!(g.n(), 3);
        assert_eq!(g.neighbors(1), &[0, 1, 2]);
        assert_eq!(g.terminals(), &[0]);
        assert_eq!(g.running_payoff(2), 1.0);
        assert_eq!(g.label(2), "v2");
    }

    #[test]
    fn two_terminal_path_is_valid() {
        let g = path(3, 0.0, 1.0);
        assert_eq!(g.terminals(), &[0, 2]);
        assert!(!g.is_terminal(1));
    }

    #[test]
    fn empty_terminal_set_rejected() {
        let spec = GameSpec {
            states: (0..3).map(StateLabel::Index).collect(),
            edges: vec![[0, 1], [1, 2]],
            terminals: vec![],
            terminal_payoff: BTreeMap::new(),
            running_payoff: BTreeMap::new(),
        };
        assert_eq!(build_game(&spec).unwrap_err(), Error::EmptyTerminalSet);
        assert_eq!(Error::EmptyTerminalSet.to_string(), "empty terminal set");
    }

    #[test]
    fn disconnected_and_domain_errors() {
        let err = GameGraph::from_parts(
            4,
            &[(0, 1), (2, 3)],
            vec![Some(0.0), None, None, Some(1.0)],
            vec![0.0; 4],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Disconnected(_)));

        let spec = GameSpec::from_json(
            r#"{"states":[0,1,2],"edges":[[0,1],[1,2]],"terminals":[0,2],
                "F":{"0":0.0,"2":1.0},"f":{"0":1.0}}"#,
        )
        .unwrap();
        assert!(matches!(build_game(&spec), Err(Error::WrongDomain(_))));

        let spec = GameSpec::from_json(
            r#"{"states":[0,1,2],"edges":[[0,1],[1,2]],"terminals":[0,2],
                "F":{"0":0.0,"1":1.0}}"#,
        )
        .unwrap();
        assert!(matches!(build_game(&spec), Err(Error::WrongDomain(_))));

        let spec = GameSpec::from_json(
            r#"{"states":[0,1],"edges":[[0,5]],"terminals":[0],"F":{"0":0.0}}"#,
        )
        .unwrap();
        assert_eq!(build_game(&spec).unwrap_err(), Error::UnknownState(5));
    }

    #[test]
    fn asymmetric_adjacency_rejected() {
        let err = GameGraph::from_adjacency(
            &[vec![1], vec![0, 2], vec![]],
            vec![Some(0.0), None, Some(1.0)],
            vec![0.0; 3],
        )
        .unwrap_err();
        assert_eq!(err, Error::AsymmetricEdges(1, 2));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = GameSpec::from_json(
            r#"{"states":[0],"edges":[],"terminals":[0],"F":{"0":0},"extra":1}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn spec_round_trip() {
        let g = triangle();
        let back = build_game(&GameSpec::from_json(&g.to_spec().to_json()).unwrap()).unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.running_payoffs(), g.running_payoffs());
    }

    #[test]
    fn laplacian_examples() {
        let n = 9;
        let g = path(n, 0.0, 1.0);
        let u = ValueField::new((0..n).map(|k| k as f64 / (n - 1) as f64).collect());
        for k in 1..n - 1 {
            assert!(discrete_inf_laplacian(&g, &u, k).unwrap().abs() < 1e-15);
        }
        let g = path(3, 0.0, 4.0);
        let u = ValueField::new(vec![0.0, 1.0, 4.0]);
        assert_eq!(discrete_inf_laplacian(&g, &u, 1).unwrap(), 2.0);
        assert_eq!(
            discrete_inf_laplacian(&g, &u, 0).unwrap_err(),
            Error::TerminalState(0)
        );
        let u = ValueField::new(vec![0.0, 1.0, f64::INFINITY]);
        assert!(matches!(
            discrete_inf_laplacian(&g, &u, 1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn dp_operator_examples() {
        let g = triangle();
        let u = ValueField::new(vec![0.0, -1.0, 1.0]);
        assert_eq!(dp_operator(&g, &u).unwrap().values, vec![0.0, -1.0, 1.0]);

        let g = path(5, 0.0, 1.0);
        let u = ValueField::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            dp_operator(&g, &u).unwrap().values,
            vec![0.0, 0.0, 0.0, 0.5, 1.0]
        );
        let bad = ValueField::new(vec![0.5, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            dp_operator(&g, &bad).unwrap_err(),
            Error::BoundaryMismatch(0)
        );
    }

    #[test]
    fn laplacian_matches_dp_defect() {
        let g = triangle();
        let u = ValueField::new(vec![0.0, 0.3, -2.5]);
        let t = dp_operator(&g, &u).unwrap();
        for x in 1..3 {
            let lap = discrete_inf_laplacian(&g, &u, x).unwrap();
            let lhs = lap + 2.0 * g.running_payoff(x);
            assert!((lhs - 2.0 * (t.values[x] - u.values[x])).abs() < 1e-12);
        }
    }
}
