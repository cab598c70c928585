//! Undirected weighted state graphs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An undirected, loop-free weighted graph whose nodes stand for MDP states.
///
/// Adjacency is kept as sorted neighbour lists; [`StateGraph::dense_weights`]
/// materialises `W` when a dense matrix is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    node_to_state: Vec<usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl StateGraph {
    /// Builds a graph from undirected edges `(u, v, w)`. Repeated pairs keep
    /// the last weight given.
    pub fn new(node_to_state: Vec<usize>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let n = node_to_state.len();
        let mut map = BTreeMap::new();
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Contract(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                return Err(Error::Contract(format!("self-loop at node {u}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Contract(format!("edge ({u}, {v}) has invalid weight {w}")));
            }
            map.insert((u.min(v), u.max(v)), w);
        }
        Ok(Self::from_edge_map(node_to_state, &map))
    }

    /// Builds a graph from a map keyed by `(min, max)` node pairs.
    pub(crate) fn from_edge_map(node_to_state: Vec<usize>, map: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut adjacency = vec![Vec::new(); node_to_state.len()];
        for (&(u, v), &w) in map {
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        StateGraph { node_to_state, adjacency }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_state.len()
    }

    pub fn node_to_state(&self) -> &[usize] {
        &self.node_to_state
    }

    pub fn state_of(&self, node: usize) -> usize {
        self.node_to_state[node]
    }

    /// Node holding `state`, if the state is in the graph.
    pub fn node_of(&self, state: usize) -> Option<usize> {
        self.node_to_state.iter().position(|&s| s == state)
    }

    /// Dense lookup table from state id to node, sized to cover `n_states`.
    pub fn state_index(&self, n_states: usize) -> Vec<Option<usize>> {
        let mut index = vec![None; n_states];
        for (node, &s) in self.node_to_state.iter().enumerate() {
            if s < n_states {
                index[s] = Some(node);
            }
        }
        index
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.adjacency[u].binary_search_by_key(&v, |&(x, _)| x).map(|i| self.adjacency[u][i].1).unwrap_or(0.0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search_by_key(&v, |&(x, _)| x).is_ok()
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.adjacency[node].iter().map(|&(_, w)| w).sum()
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&(v, _)| v > u).map(move |&(v, w)| (u, v, w)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges().count()
    }

    pub fn dense_weights(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut w = DMatrix::zeros(n, n);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &(v, x) in list {
                w[(u, v)] = x;
            }
        }
        w
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(u, list)| list.iter().all(|&(v, w)| v != u && self.weight(v, u) == w))
    }

    /// Errors if any node has zero weighted degree.
    pub fn check_no_isolated(&self) -> Result<()> {
        match (0..self.n_nodes()).find(|&u| self.degree(u) <= 0.0) {
            Some(u) => Err(Error::DegenerateGraph(format!("node {u} has zero degree"))),
            None => Ok(()),
        }
    }

    /// Hop distances from `source` (unweighted BFS); `usize::MAX` if unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_nodes()];
        let mut queue = std::collections::VecDeque::from([source]);
        dist[source] = 0;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n_nodes() == 0 || self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let adjacency =
            self.adjacency.iter().map(|list| list.iter().map(|&(v, w)| (v, w * factor)).collect()).collect();
        StateGraph { node_to_state: self.node_to_state.clone(), adjacency }
    }

    /// Writes the edge list: a header line with the node count, then one
    /// `u v w` line per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.n_nodes())?;
        for (u, v, w) in self.edges() {
            writeln!(out, "{u} {v} {w}")?;
        }
        Ok(())
    }

    /// Writes the `node state` map, one line per node.
    pub fn write_node_map<W: Write>(&self, mut out: W) -> Result<()> {
        for (node, state) in self.node_to_state.iter().enumerate() {
            writeln!(out, "{node} {state}")?;
        }
        Ok(())
    }

    /// Reads a graph back from an edge list and a node map.
    pub fn read<R1: BufRead, R2: BufRead>(edge_list: R1, node_map: R2) -> Result<Self> {
        let mut lines = edge_list.lines().enumerate();
        let n: usize = match lines.next() {
            Some((_, line)) => parse_field(&line?, 1)?,
            None => return Err(Error::Parse { line: 1, reason: "missing node count header".into() }),
        };
        let mut edges = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: i + 1, reason: "expected `u v w`".into() });
            }
            edges.push((
                parse_field(fields[0], i + 1)?,
                parse_field(fields[1], i + 1)?,
                parse_field(fields[2], i + 1)?,
            ));
        }
        let mut node_to_state = vec![usize::MAX; n];
        for (i, line) in node_map.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: i + 1, reason: "expected `node state`".into() });
            }
            let node: usize = parse_field(fields[0], i + 1)?;
            if node >= n {
                return Err(Error::Parse { line: i + 1, reason: format!("node {node} out of range") });
            }
            node_to_state[node] = parse_field(fields[1], i + 1)?;
        }
        if let Some(node) = node_to_state.iter().position(|&s| s == usize::MAX) {
            return Err(Error::Parse { line: 0, reason: format!("node {node} missing from node map") });
        }
        StateGraph::new(node_to_state, edges)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse { line, reason: format!("cannot parse {s:?}") })
}
