//! Trajectory collection and state-graph estimation from temporal adjacency.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{parse_field, StateGraph};
use crate::mdp::{Action, TabularMdp};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: Action,
    pub s_next: usize,
    pub r: f64,
}

/// How the agent picks actions while collecting data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingStrategy {
    UniformRandom,
    /// Actions are weighted by the node2vec return/in-out factor of the
    /// cell they aim at, relative to the previously occupied state.
    Node2vecBiased {
        p: f64,
        q: f64,
    },
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingStrategy::UniformRandom => f.write_str("uniform"),
            SamplingStrategy::Node2vecBiased { p, q } => write!(f, "node2vec:{p}:{q}"),
        }
    }
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(SamplingStrategy::UniformRandom);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["node2vec", p, q] => Ok(SamplingStrategy::Node2vecBiased {
                p: p.parse().map_err(|_| Error::Config(format!("bad p in {s:?}")))?,
                q: q.parse().map_err(|_| Error::Config(format!("bad q in {s:?}")))?,
            }),
            _ => Err(Error::Config(format!("unknown sampling strategy {s:?}"))),
        }
    }
}

/// Episodes of consecutive transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSet {
    pub episodes: Vec<Vec<Transition>>,
    pub max_len: usize,
    pub strategy: SamplingStrategy,
    /// Absorbing state at which episodes end, if any.
    pub terminal: Option<usize>,
}

impl EpisodeSet {
    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }

    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// Visited states of each episode, in order: `s_0, s_1, ..., s_T`.
    pub fn state_sequences(&self) -> Vec<Vec<usize>> {
        self.episodes
            .iter()
            .filter(|ep| !ep.is_empty())
            .map(|ep| std::iter::once(ep[0].s).chain(ep.iter().map(|t| t.s_next)).collect())
            .collect()
    }

    /// Checks that each episode chains (`s_next` of a step is `s` of the next).
    pub fn is_chained(&self) -> bool {
        self.episodes.iter().all(|ep| ep.windows(2).all(|w| w[0].s_next == w[1].s))
    }

    /// Each transition repeated `times` times in place.
    pub fn repeated(&self, times: usize) -> Self {
        let episodes =
            self.episodes.iter().map(|ep| ep.iter().flat_map(|t| std::iter::repeat_n(*t, times)).collect()).collect();
        EpisodeSet { episodes, ..self.clone() }
    }

    /// Writes `episode_id s a s_next r` lines, `a` as the action index,
    /// after a `#` metadata header.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let terminal = self.terminal.map_or_else(|| "none".to_string(), |t| t.to_string());
        writeln!(out, "# strategy={} max_len={} terminal={}", self.strategy, self.max_len, terminal)?;
        for (id, ep) in self.episodes.iter().enumerate() {
            for t in ep {
                writeln!(out, "{id} {} {} {} {}", t.s, t.a.index(), t.s_next, t.r)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut set =
            EpisodeSet { episodes: Vec::new(), max_len: 0, strategy: SamplingStrategy::UniformRandom, terminal: None };
        let mut declared_len = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("strategy", v)) => set.strategy = v.parse()?,
                        Some(("max_len", v)) => declared_len = Some(parse_field(v, i + 1)?),
                        Some(("terminal", "none")) => set.terminal = None,
                        Some(("terminal", v)) => set.terminal = Some(parse_field(v, i + 1)?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::Parse { line: i + 1, reason: "expected `episode_id s a s_next r`".into() });
            }
            let id: usize = parse_field(f[0], i + 1)?;
            let a = Action::from_index(parse_field(f[2], i + 1)?)
                .ok_or_else(|| Error::Parse { line: i + 1, reason: "action index out of range".into() })?;
            let t = Transition {
                s: parse_field(f[1], i + 1)?,
                a,
                s_next: parse_field(f[3], i + 1)?,
                r: parse_field(f[4], i + 1)?,
            };
            if id >= set.episodes.len() {
                set.episodes.resize_with(id + 1, Vec::new);
            }
            set.episodes[id].push(t);
        }
        let longest = set.episodes.iter().map(Vec::len).max().unwrap_or(0);
        set.max_len = declared_len.unwrap_or(longest).max(longest);
        Ok(set)
    }
}

/// The outcome an action aims at: its successful move, or staying put.
fn intended_next(mdp: &TabularMdp, s: usize, a: Action) -> usize {
    mdp.outcomes(s, a).iter().find(|o| o.next != s).map_or(s, |o| o.next)
}

/// Collects `n_episodes` episodes of at most `max_len` steps. Each starts at
/// a uniformly drawn non-goal state and stops early on reaching the goal.
pub fn collect_episodes(
    mdp: &TabularMdp,
    strategy: SamplingStrategy,
    n_episodes: usize,
    max_len: usize,
    seed: u64,
) -> EpisodeSet {
    assert!(n_episodes > 0 && max_len > 0, "n_episodes and max_len must be positive");
    let starts: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_goal(s)).collect();
    let episodes = (0..n_episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = rng::seeded(rng::derive(seed, ep as u64));
            let mut s = starts[rng.gen_range(0..starts.len())];
            let mut prev: Option<usize> = None;
            let mut out = Vec::new();
            while out.len() < max_len {
                let a = match strategy {
                    SamplingStrategy::UniformRandom => Action::ALL[rng.gen_range(0..Action::COUNT)],
                    SamplingStrategy::Node2vecBiased { p, q } => {
                        let weights = Action::ALL.map(|a| {
                            let x = intended_next(mdp, s, a);
                            match prev {
                                None => 1.0,
                                Some(t) if x == t => 1.0 / p,
                                Some(t) if x == s || mdp.adjacent(t, x) => 1.0,
                                Some(_) => 1.0 / q,
                            }
                        });
                        Action::ALL[sample_weighted(&weights, &mut rng)]
                    }
                };
                let (s_next, r) = mdp.sample_step(s, a, &mut rng);
                out.push(Transition { s, a, s_next, r });
                if s_next != s {
                    prev = Some(s);
                }
                s = s_next;
                if mdp.is_goal(s) {
                    break;
                }
            }
            out
        })
        .collect();
    EpisodeSet { episodes, max_len, strategy, terminal: Some(mdp.goal_state) }
}

pub(crate) fn sample_weighted<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeWeighting {
    /// Weight 1 whenever the pair was observed at least once.
    #[default]
    Unit,
    /// Weight equal to the number of observations.
    Multiplicity,
}

/// Connects temporally consecutive states with unit edges.
pub fn build_estimated_graph(data: &EpisodeSet) -> Result<StateGraph> {
    build_estimated_graph_with(data, EdgeWeighting::Unit)
}

/// Like [`build_estimated_graph`] with a choice of edge weighting. Nodes are
/// the states incident to at least one observed move, in ascending state
/// order; failed moves (`s == s_next`) add nothing.
pub fn build_estimated_graph_with(data: &EpisodeSet, weighting: EdgeWeighting) -> Result<StateGraph> {
    if data.n_transitions() == 0 {
        return Err(Error::InsufficientData("episode set is empty".into()));
    }
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for t in data.transitions().filter(|t| t.s != t.s_next) {
        let key = (t.s.min(t.s_next), t.s.max(t.s_next));
        let w = pairs.entry(key).or_insert(0.0);
        match weighting {
            EdgeWeighting::Unit => *w = 1.0,
            EdgeWeighting::Multiplicity => *w += 1.0,
        }
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateGraph("every transition is a self-loop".into()));
    }
    let mut states: Vec<usize> = pairs.keys().flat_map(|&(u, v)| [u, v]).collect();
    states.sort_unstable();
    states.dedup();
    let node = |s: usize| states.binary_search(&s).expect("state collected above");
    let edges: BTreeMap<(usize, usize), f64> = pairs.iter().map(|(&(u, v), &w)| ((node(u), node(v)), w)).collect();
    Ok(StateGraph::from_edge_map(states, &edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_two_room, ideal_weighted_graph, two_room_spec};
    use std::collections::BTreeSet;

    fn t(s: usize, s_next: usize) -> Transition {
        Transition { s, a: Action::Right, s_next, r: 0.0 }
    }

    fn set(episodes: Vec<Vec<Transition>>) -> EpisodeSet {
        EpisodeSet { episodes, max_len: 100, strategy: SamplingStrategy::UniformRandom, terminal: None }
    }

    #[test]
    fn two_room_collection() {
        let (_, mdp) = build_two_room();
        let data = collect_episodes(&mdp, SamplingStrategy::UniformRandom, 100, 100, 5);
        assert_eq!(data.n_episodes(), 100);
        assert!(data.episodes.iter().all(|ep| !ep.is_empty() && ep.len() <= 100));
        assert!(data.is_chained());
        // an episode shorter than the cap must have ended at the goal, and only there
        for ep in &data.episodes {
            let goal_hits = ep.iter().position(|t| t.s_next == mdp.goal_state);
            match goal_hits {
                Some(i) => assert_eq!(i + 1, ep.len()),
                None => assert_eq!(ep.len(), 100),
            }
        }
        assert_eq!(data, collect_episodes(&mdp, SamplingStrategy::UniformRandom, 100, 100, 5));
    }

    #[test]
    fn biased_collection_is_deterministic_and_chained() {
        let (_, mdp) = build_two_room();
        let strategy = SamplingStrategy::Node2vecBiased { p: 1.0, q: 4.0 };
        let a = collect_episodes(&mdp, strategy, 20, 50, 11);
        assert!(a.is_chained());
        assert_eq!(a, collect_episodes(&mdp, strategy, 20, 50, 11));
    }

    #[test]
    fn estimated_graph_from_path() {
        let g = build_estimated_graph(&set(vec![vec![t(4, 7), t(7, 9)]])).unwrap();
        assert_eq!(g.node_to_state(), &[4, 7, 9]);
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn self_loops_are_dropped() {
        let g = build_estimated_graph(&set(vec![vec![t(0, 1), t(1, 1), t(1, 0)]])).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.weight(0, 1), 1.0);
        let counted =
            build_estimated_graph_with(&set(vec![vec![t(0, 1), t(1, 1), t(1, 0)]]), EdgeWeighting::Multiplicity)
                .unwrap();
        assert_eq!(counted.weight(0, 1), 2.0);
        assert!(matches!(build_estimated_graph(&set(vec![vec![t(3, 3)]])), Err(Error::DegenerateGraph(_))));
    }

    #[test]
    fn estimated_graph_is_subgraph_of_ideal() {
        let (_, mdp) = build_two_room();
        let ideal = ideal_weighted_graph(&two_room_spec());
        for strategy in [SamplingStrategy::UniformRandom, SamplingStrategy::Node2vecBiased { p: 1.0, q: 4.0 }] {
            let data = collect_episodes(&mdp, strategy, 100, 100, 21);
            let g = build_estimated_graph(&data).unwrap();
            let visited: BTreeSet<usize> = data.transitions().flat_map(|t| [t.s, t.s_next]).collect();
            assert!(g.n_nodes() <= 57);
            assert_eq!(g.n_nodes(), visited.len());
            assert!(g.is_symmetric());
            for (u, v, _) in g.edges() {
                assert!(ideal.has_edge(g.state_of(u), g.state_of(v)));
            }
            g.check_no_isolated().unwrap();
        }
    }

    #[test]
    fn text_roundtrip() {
        let (_, mdp) = build_two_room();
        let data = collect_episodes(&mdp, SamplingStrategy::Node2vecBiased { p: 1.0, q: 4.0 }, 5, 30, 2);
        let mut buf = Vec::new();
        data.write_text(&mut buf).unwrap();
        let back = EpisodeSet::read_text(&buf[..]).unwrap();
        assert_eq!(back, data);
    }
}
