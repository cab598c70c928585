use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use super::{skipgram_train, SkipGramConfig, WalkConfig};
use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::rng;

/// Dynamic time warping distance between two degree sequences with element
/// cost `max(a, b) / min(a, b) - 1`. Entries must be positive.
pub fn dtw_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("DTW needs two nonempty sequences".into()));
    }
    if a.iter().chain(b).any(|&x| x == 0) {
        return Err(Error::Contract("DTW ratio cost needs positive entries".into()));
    }
    let cost = |x: usize, y: usize| x.max(y) as f64 / x.min(y) as f64 - 1.0;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = cost(x, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Struc2vecConfig {
    pub k_max: usize,
    /// Probability of stepping within the current layer rather than
    /// switching layers.
    pub stay_prob: f64,
}

impl Default for Struc2vecConfig {
    fn default() -> Self {
        Struc2vecConfig { k_max: 4, stay_prob: 0.7 }
    }
}

/// Structural distances of the multilayer graph.
#[derive(Debug, Clone)]
pub struct Struc2vecLayers {
    /// Index of the deepest non-empty layer.
    pub k_max: usize,
    /// `degree_sequences[k][u]`: sorted degrees of the nodes exactly `k` hops
    /// from `u` (empty once the ring is exhausted).
    pub degree_sequences: Vec<Vec<Vec<usize>>>,
    /// `distances[k][(u, v)]`: cumulative structural distance `w_k(u, v)`,
    /// infinite where either ring is exhausted at some layer `<= k`.
    pub distances: Vec<DMatrix<f64>>,
}

impl Struc2vecLayers {
    pub fn build(g: &StateGraph, k_max: usize) -> Result<Self> {
        let n = g.n_nodes();
        let degree: Vec<usize> = (0..n).map(|u| g.neighbors(u).len()).collect();
        let hops: Vec<Vec<usize>> = (0..n).into_par_iter().map(|u| g.hop_distances(u)).collect();
        let eccentricity = hops.iter().flatten().filter(|&&d| d != usize::MAX).max().copied().unwrap_or(0);
        let top = k_max.min(eccentricity);

        let degree_sequences: Vec<Vec<Vec<usize>>> = (0..=top)
            .map(|k| {
                (0..n)
                    .map(|u| {
                        let mut ring: Vec<usize> = (0..n).filter(|&v| hops[u][v] == k).map(|v| degree[v]).collect();
                        ring.sort_unstable();
                        ring
                    })
                    .collect()
            })
            .collect();

        let mut distances: Vec<DMatrix<f64>> = Vec::with_capacity(top + 1);
        for k in 0..=top {
            let rings = &degree_sequences[k];
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|u| {
                    (0..n)
                        .map(|v| {
                            let below = if k == 0 { 0.0 } else { distances[k - 1][(u, v)] };
                            if !below.is_finite() || rings[u].is_empty() || rings[v].is_empty() {
                                return Ok(f64::INFINITY);
                            }
                            Ok(below + dtw_distance(&rings[u], &rings[v])?)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            let layer = DMatrix::from_fn(n, n, |u, v| rows[u][v]);
            if k > 0 {
                let below = &distances[k - 1];
                assert!(
                    layer.iter().zip(below.iter()).all(|(w, b)| !w.is_finite() || w >= b),
                    "structural distance decreased between layers"
                );
            }
            distances.push(layer);
        }
        Ok(Struc2vecLayers { k_max: top, degree_sequences, distances })
    }

    /// Nodes sharing layer `k` with `u`, and their weights `exp(-w_k)`.
    fn layer_neighbors(&self, k: usize, u: usize) -> Vec<(usize, f64)> {
        let w = &self.distances[k];
        (0..w.ncols()).filter(|&v| v != u && w[(u, v)].is_finite()).map(|v| (v, (-w[(u, v)]).exp())).collect()
    }
}

/// Per-(layer, node) sampling tables for the multilayer walk.
struct LayerTables {
    /// `[k][u]`: candidate nodes and cumulative weights.
    steps: Vec<Vec<(Vec<usize>, Vec<f64>)>>,
    /// `[k][u]`: probability of moving up a layer when switching.
    up_prob: Vec<Vec<f64>>,
}

impl LayerTables {
    fn new(layers: &Struc2vecLayers) -> Self {
        let n = layers.distances[0].nrows();
        let depth = layers.k_max + 1;
        let mut steps = Vec::with_capacity(depth);
        let mut up_prob = Vec::with_capacity(depth);
        for k in 0..depth {
            let per_node: Vec<Vec<(usize, f64)>> = (0..n).map(|u| layers.layer_neighbors(k, u)).collect();
            let (sum, count) = per_node.iter().flatten().fold((0.0, 0usize), |(s, c), &(_, w)| (s + w, c + 1));
            let mean = if count > 0 { sum / count as f64 } else { 0.0 };
            up_prob.push(
                per_node
                    .iter()
                    .enumerate()
                    .map(|(u, nbrs)| {
                        let has_upper = k + 1 < depth && !layers.layer_neighbors(k + 1, u).is_empty();
                        if !has_upper {
                            return 0.0;
                        }
                        if k == 0 {
                            return 1.0;
                        }
                        let gamma = nbrs.iter().filter(|&&(_, w)| w > mean).count() as f64;
                        let up = (gamma + std::f64::consts::E).ln();
                        up / (up + 1.0)
                    })
                    .collect(),
            );
            steps.push(
                per_node
                    .into_iter()
                    .map(|nbrs| {
                        let mut acc = 0.0;
                        let cumulative = nbrs.iter().map(|&(_, w)| {
                            acc += w;
                            acc
                        });
                        let cumulative: Vec<f64> = cumulative.collect();
                        (nbrs.iter().map(|&(v, _)| v).collect(), cumulative)
                    })
                    .collect(),
            );
        }
        LayerTables { steps, up_prob }
    }
}

/// Multilayer walks: each step stays in the current layer with `stay_prob`
/// and moves to another node in proportion to `exp(-w_k)`; otherwise it
/// switches layers (up with weight `ln(Gamma_k(u) + e)`, down with weight 1)
/// without emitting a node.
pub fn struc2vec_walks(layers: &Struc2vecLayers, cfg: &Struc2vecConfig, walk_cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let tables = LayerTables::new(layers);
    let n = layers.distances[0].nrows();
    let jobs: Vec<(usize, usize)> = (0..walk_cfg.walks_per_node).flat_map(|r| (0..n).map(move |u| (r, u))).collect();
    jobs.par_iter()
        .map(|&(round, start)| {
            let mut rng = rng::seeded(rng::derive2(walk_cfg.seed, round as u64, start as u64));
            let mut walk = vec![start];
            let (mut u, mut k) = (start, 0usize);
            // layer switches do not emit nodes; the guard bounds pathological loops
            let mut guard = 0;
            while walk.len() < walk_cfg.walk_length && guard < 100 * walk_cfg.walk_length {
                guard += 1;
                let (cands, cum) = &tables.steps[k][u];
                let can_switch = tables.up_prob[k][u] > 0.0 || k > 0;
                if cands.is_empty() && !can_switch {
                    break;
                }
                if !cands.is_empty() && (!can_switch || rng.gen::<f64>() < cfg.stay_prob) {
                    let x = rng.gen::<f64>() * cum[cum.len() - 1];
                    let i = cum.partition_point(|&c| c <= x).min(cands.len() - 1);
                    u = cands[i];
                    walk.push(u);
                } else if rng.gen::<f64>() < tables.up_prob[k][u] {
                    k += 1;
                } else {
                    k = k.saturating_sub(1);
                }
            }
            walk
        })
        .collect()
}

/// struc2vec: structural multilayer walks followed by skip-gram.
pub fn struc2vec_embed(
    g: &StateGraph,
    d: usize,
    cfg: &Struc2vecConfig,
    walk_cfg: &WalkConfig,
    sg_cfg: &SkipGramConfig,
) -> Result<BasisMatrix> {
    if d == 0 {
        return Err(Error::Dimension("embedding dimension must be at least 1".into()));
    }
    if !(cfg.stay_prob > 0.0 && cfg.stay_prob < 1.0) {
        return Err(Error::Config(format!("stay_prob must lie in (0, 1), got {}", cfg.stay_prob)));
    }
    let layers = Struc2vecLayers::build(g, cfg.k_max)?;
    let walks = struc2vec_walks(&layers, cfg, walk_cfg);
    let sg = SkipGramConfig { dim: d, ..*sg_cfg };
    skipgram_train(&walks, g.n_nodes(), &sg)?.into_basis(g.node_to_state().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_distance(&[1], &[1]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[2], &[1]).unwrap(), 1.0);
        assert_eq!(dtw_distance(&[1, 2], &[1, 1, 2]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1, 3], &[2]).unwrap(), 1.0 + 0.5);
        assert!(dtw_distance(&[], &[1]).is_err());
    }

    #[test]
    fn star_center_vs_leaf() {
        for n in [3usize, 5, 8] {
            let g = StateGraph::new((0..n).collect(), (1..n).map(|v| (0, v, 1.0))).unwrap();
            let layers = Struc2vecLayers::build(&g, 0).unwrap();
            assert_eq!(layers.distances.len(), 1);
            assert_eq!(layers.distances[0][(0, 1)], (n - 2) as f64);
            assert_eq!(layers.distances[0][(1, 2)], 0.0);
        }
    }

    #[test]
    fn layers_truncate_past_diameter() {
        let g = StateGraph::new((0..3).collect(), [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let layers = Struc2vecLayers::build(&g, 10).unwrap();
        assert_eq!(layers.k_max, 2);
        // the centre has no ring at distance 2
        assert!(layers.degree_sequences[2][1].is_empty());
        assert!(layers.distances[2][(0, 1)].is_infinite());
        assert_eq!(layers.distances[2][(0, 2)], 0.0);
    }

    #[test]
    fn walks_emit_graph_nodes() {
        let g = StateGraph::new((0..6).collect(), [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0)])
            .unwrap();
        let layers = Struc2vecLayers::build(&g, 3).unwrap();
        let walk_cfg = WalkConfig { walks_per_node: 2, walk_length: 15, ..Default::default() };
        let walks = struc2vec_walks(&layers, &Struc2vecConfig::default(), &walk_cfg);
        assert_eq!(walks.len(), 12);
        assert!(walks.iter().all(|w| w.len() == 15 && w.iter().all(|&u| u < 6)));
        assert_eq!(walks, struc2vec_walks(&layers, &Struc2vecConfig::default(), &walk_cfg));
    }

    proptest! {
        #[test]
        fn dtw_symmetric(a in proptest::collection::vec(1usize..6, 1..6), b in proptest::collection::vec(1usize..6, 1..6)) {
            prop_assert_eq!(dtw_distance(&a, &b).unwrap(), dtw_distance(&b, &a).unwrap());
            prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        }
    }
}
