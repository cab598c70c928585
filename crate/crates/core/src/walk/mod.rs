//! Random-walk embeddings: node2vec's second-order walks, skip-gram training
//! with negative sampling, and struc2vec's multilayer structural walks.

mod skipgram;
mod struc2vec;

pub use skipgram::{pair_loss, pair_loss_grad, skipgram_train, PairGrad, SkipGram, SkipGramConfig};
pub use struc2vec::{dtw_distance, struc2vec_embed, struc2vec_walks, Struc2vecConfig, Struc2vecLayers};

use std::io::Write;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::rng;
use crate::sampling::{sample_weighted, EpisodeSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { p: 1.0, q: 4.0, walks_per_node: 10, walk_length: 80, seed: 0 }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::Config(format!("p and q must be positive, got p={} q={}", self.p, self.q)));
        }
        if self.walk_length < 2 || self.walks_per_node == 0 {
            return Err(Error::Config("walk_length must be >= 2 and walks_per_node > 0".into()));
        }
        Ok(())
    }
}

/// Normalised probabilities of the next node of a walk at `current` that
/// arrived from `previous`. Candidate `x` is weighted by `w(current, x)`
/// times `1/p` (return to `previous`), `1` (neighbour of `previous`) or
/// `1/q` (moving away). Without a predecessor the step is first-order.
pub fn transition_probs(g: &StateGraph, previous: Option<usize>, current: usize, p: f64, q: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = g
        .neighbors(current)
        .iter()
        .map(|&(x, w)| {
            let alpha = match previous {
                None => 1.0,
                Some(t) if x == t => 1.0 / p,
                Some(t) if g.has_edge(t, x) => 1.0,
                Some(_) => 1.0 / q,
            };
            (x, w * alpha)
        })
        .collect();
    let total: f64 = out.iter().map(|&(_, w)| w).sum();
    if total > 0.0 {
        out.iter_mut().for_each(|(_, w)| *w /= total);
    }
    out
}

/// `walks_per_node` rounds of one walk from every node. Walk `(round, node)`
/// draws from its own derived stream.
pub fn generate_walks(g: &StateGraph, cfg: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.walks_per_node).flat_map(|r| (0..g.n_nodes()).map(move |u| (r, u))).collect();
    Ok(jobs
        .par_iter()
        .map(|&(round, start)| {
            let mut rng = rng::seeded(rng::derive2(cfg.seed, round as u64, start as u64));
            let mut walk = vec![start];
            while walk.len() < cfg.walk_length {
                let cur = *walk.last().unwrap();
                let prev = walk.len().checked_sub(2).map(|i| walk[i]);
                let probs = transition_probs(g, prev, cur, cfg.p, cfg.q);
                if probs.is_empty() {
                    break;
                }
                let weights: Vec<f64> = probs.iter().map(|&(_, w)| w).collect();
                walk.push(probs[sample_weighted(&weights, &mut rng)].0);
            }
            walk
        })
        .collect())
}

/// Writes one walk per line, node ids separated by spaces.
pub fn write_walks<W: Write>(walks: &[Vec<usize>], mut out: W) -> Result<()> {
    for walk in walks {
        let line: Vec<String> = walk.iter().map(usize::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Node sequences of recorded episodes; states missing from the graph are
/// skipped.
pub fn episode_walks(g: &StateGraph, data: &EpisodeSet) -> Vec<Vec<usize>> {
    let n_states = data.transitions().map(|t| t.s.max(t.s_next) + 1).max().unwrap_or(0);
    let index = g.state_index(n_states);
    data.state_sequences()
        .into_iter()
        .map(|seq| seq.into_iter().filter_map(|s| index[s]).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// node2vec: skip-gram over biased walks, or over the recorded episodes when
/// `reuse_walks` is given.
pub fn node2vec_embed(
    g: &StateGraph,
    d: usize,
    walk_cfg: &WalkConfig,
    sg_cfg: &SkipGramConfig,
    reuse_walks: Option<&EpisodeSet>,
) -> Result<BasisMatrix> {
    if d == 0 {
        return Err(Error::Dimension("embedding dimension must be at least 1".into()));
    }
    let walks = match reuse_walks {
        Some(data) => episode_walks(g, data),
        None => generate_walks(g, walk_cfg)?,
    };
    let cfg = SkipGramConfig { dim: d, ..*sg_cfg };
    skipgram_train(&walks, g.n_nodes(), &cfg)?.into_basis(g.node_to_state().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> StateGraph {
        StateGraph::new(vec![0, 1, 2], [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn path_bias_probabilities() {
        let probs = transition_probs(&path3(), Some(0), 1, 1.0, 4.0);
        assert_eq!(probs.len(), 2);
        assert!((probs[0].1 - 0.8).abs() < 1e-15);
        assert!((probs[1].1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let g = StateGraph::new(
            (0..5).collect(),
            [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 0, 1.0), (1, 3, 0.2), (3, 4, 1.0)],
        )
        .unwrap();
        for cur in 0..5 {
            for prev in std::iter::once(None).chain(g.neighbors(cur).iter().map(|&(t, _)| Some(t))) {
                for (p, q) in [(1.0, 4.0), (4.0, 1.0), (0.3, 2.5)] {
                    let total: f64 = transition_probs(&g, prev, cur, p, q).iter().map(|x| x.1).sum();
                    assert!((total - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn unbiased_walks_match_first_order_chain() {
        let g = StateGraph::new((0..4).collect(), [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (0, 2, 3.0)]).unwrap();
        let cfg = WalkConfig { p: 1.0, q: 1.0, walks_per_node: 2500, walk_length: 11, seed: 17 };
        let walks = generate_walks(&g, &cfg).unwrap();
        let mut counts = vec![vec![0usize; 4]; 4];
        for w in &walks {
            for pair in w.windows(2) {
                counts[pair[0]][pair[1]] += 1;
            }
        }
        let total_steps: usize = counts.iter().flatten().sum();
        assert_eq!(total_steps, 100_000);
        let mut chi2 = 0.0;
        for u in 0..4 {
            let row: usize = counts[u].iter().sum();
            for &(v, w) in g.neighbors(u) {
                let expected = row as f64 * w / g.degree(u);
                chi2 += (counts[u][v] as f64 - expected).powi(2) / expected;
            }
        }
        // 4 degrees of freedom, 0.999 quantile
        assert!(chi2 < 18.47, "chi-square {chi2}");
    }

    #[test]
    fn walk_length_and_determinism() {
        let g = path3();
        let cfg = WalkConfig { walk_length: 7, walks_per_node: 3, ..WalkConfig::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        assert_eq!(walks.len(), 9);
        assert!(walks.iter().all(|w| w.len() <= 7));
        assert_eq!(walks, generate_walks(&g, &cfg).unwrap());
        assert!(generate_walks(&g, &WalkConfig { p: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn walk_corpus_format() {
        let mut buf = Vec::new();
        write_walks(&[vec![0, 1, 2], vec![3]], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 2\n3\n");
    }
}
