use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate; decays linearly to `MIN_LR` over training.
    pub lr: f64,
    pub seed: u64,
}

pub const MIN_LR: f64 = 1e-4;
const UNIGRAM_POWER: f64 = 0.75;

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { dim: 32, window: 10, negatives: 5, epochs: 5, lr: 0.025, seed: 0 }
    }
}

/// Trained skip-gram tables.
#[derive(Debug, Clone)]
pub struct SkipGram {
    /// Centre-node embeddings, `n x d`.
    pub embeddings: DMatrix<f64>,
    /// Context-node embeddings, `n x d`.
    pub context: DMatrix<f64>,
    /// Mean pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl SkipGram {
    pub fn into_basis(self, node_to_state: Vec<usize>) -> Result<BasisMatrix> {
        BasisMatrix::new(self.embeddings, node_to_state)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss of one (centre, context) pair:
/// `-log s(f.g) - sum_k log s(-f.n_k)`.
pub fn pair_loss(f: &[f64], g: &[f64], negatives: &[&[f64]]) -> f64 {
    let pos = -sigmoid(dot(f, g)).ln();
    let neg: f64 = negatives.iter().map(|n| -sigmoid(-dot(f, n)).ln()).sum();
    pos + neg
}

/// Gradients of [`pair_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn pair_loss_grad(f: &[f64], g: &[f64], negatives: &[&[f64]]) -> PairGrad {
    let pos_coef = sigmoid(dot(f, g)) - 1.0;
    let mut center: Vec<f64> = g.iter().map(|x| pos_coef * x).collect();
    let context = f.iter().map(|x| pos_coef * x).collect();
    let negatives = negatives
        .iter()
        .map(|n| {
            let coef = sigmoid(dot(f, n));
            center.iter_mut().zip(n.iter()).for_each(|(c, x)| *c += coef * x);
            f.iter().map(|x| coef * x).collect()
        })
        .collect();
    PairGrad { center, context, negatives }
}

/// Skip-gram with negative sampling by plain SGD.
///
/// Every (centre, context) pair within `window` positions of each other in a
/// walk is visited in order; negatives are drawn from the unigram
/// distribution raised to 0.75 and never equal the positive context.
pub fn skipgram_train(walks: &[Vec<usize>], n_nodes: usize, cfg: &SkipGramConfig) -> Result<SkipGram> {
    if cfg.dim == 0 || cfg.window == 0 || cfg.epochs == 0 || cfg.lr <= 0.0 {
        return Err(Error::Config("skip-gram dim, window, epochs and lr must be positive".into()));
    }
    let tokens: usize = walks.iter().map(Vec::len).sum();
    if walks.iter().all(|w| w.len() < 2) {
        return Err(Error::InsufficientData("no walk has two or more nodes".into()));
    }
    if let Some(&bad) = walks.iter().flatten().find(|&&u| u >= n_nodes) {
        return Err(Error::Contract(format!("walk node {bad} out of range for {n_nodes} nodes")));
    }

    let d = cfg.dim;
    let mut rng = rng::seeded(cfg.seed);
    let half = 0.5 / d as f64;
    let mut f: Vec<f64> = (0..n_nodes * d).map(|_| rng.gen_range(-half..half)).collect();
    let mut g = vec![0.0; n_nodes * d];

    let mut freq = vec![0.0; n_nodes];
    for &u in walks.iter().flatten() {
        freq[u] += 1.0;
    }
    let noise = WeightedIndex::new(freq.iter().map(|c: &f64| c.powf(UNIGRAM_POWER)))
        .map_err(|e| Error::InsufficientData(format!("negative sampling table: {e}")))?;

    let total = (cfg.epochs * tokens) as f64;
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad_f = vec![0.0; d];
    let mut negs = Vec::with_capacity(cfg.negatives);

    for _ in 0..cfg.epochs {
        let (mut loss_sum, mut pairs) = (0.0, 0usize);
        for walk in walks {
            for (i, &u) in walk.iter().enumerate() {
                let lr = cfg.lr - (cfg.lr - MIN_LR) * (processed as f64 / total);
                processed += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for j in (lo..hi).filter(|&j| j != i) {
                    let v = walk[j];
                    negs.clear();
                    while negs.len() < cfg.negatives {
                        let k = noise.sample(&mut rng);
                        if k != v {
                            negs.push(k);
                        }
                    }
                    grad_f.iter_mut().for_each(|x| *x = 0.0);
                    let fu = &f[u * d..(u + 1) * d];
                    for (target, label) in std::iter::once((v, 1.0)).chain(negs.iter().map(|&k| (k, 0.0))) {
                        let gt = &mut g[target * d..(target + 1) * d];
                        let score = dot(fu, gt);
                        let s = sigmoid(score);
                        loss_sum -= if label == 1.0 { s.ln() } else { (1.0 - s).ln() };
                        // ascent coefficient of log s(+-score)
                        let coef = lr * (label - s);
                        for k in 0..d {
                            grad_f[k] += coef * gt[k];
                            gt[k] += coef * fu[k];
                        }
                    }
                    f[u * d..(u + 1) * d].iter_mut().zip(&grad_f).for_each(|(x, dx)| *x += dx);
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(loss_sum / pairs.max(1) as f64);
    }

    Ok(SkipGram {
        embeddings: DMatrix::from_row_slice(n_nodes, d, &f),
        context: DMatrix::from_row_slice(n_nodes, d, &g),
        epoch_losses,
    })
}
