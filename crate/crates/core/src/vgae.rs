//! A small variational graph auto-encoder.
//!
//! Encoder: two graph-convolution layers over the featureless input
//! (`X = I`), producing a Gaussian posterior `N(mu, diag(exp(logsig)^2))`
//! per node. Decoder: `sigmoid(Z Z^T)`. Training minimises the
//! positive-weighted binary cross-entropy of the reconstruction plus the
//! scaled KL divergence to `N(0, I)`, by full-batch gradient descent with
//! hand-derived gradients.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgaeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VgaeConfig {
    fn default() -> Self {
        VgaeConfig { latent_dim: 16, hidden_dim: 32, epochs: 200, lr: 0.1, seed: 0 }
    }
}

/// Encoder weights (or gradients with the same shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct VgaeParams {
    /// `n_features x hidden`
    pub w0: DMatrix<f64>,
    /// `hidden x d`
    pub w_mu: DMatrix<f64>,
    /// `hidden x d`
    pub w_logsig: DMatrix<f64>,
}

impl VgaeParams {
    /// Glorot-uniform initialisation.
    pub fn init(n_features: usize, hidden: usize, d: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let r = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-r..r))
        };
        VgaeParams { w0: glorot(n_features, hidden), w_mu: glorot(hidden, d), w_logsig: glorot(hidden, d) }
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().chain(self.w_mu.iter()).chain(self.w_logsig.iter()).all(|x| x.is_finite())
    }

    fn axpy(&mut self, alpha: f64, other: &VgaeParams) {
        self.w0 += &other.w0 * alpha;
        self.w_mu += &other.w_mu * alpha;
        self.w_logsig += &other.w_logsig * alpha;
    }
}

/// GCN propagation operator `D~^{-1/2} (W + I) D~^{-1/2}`.
pub fn normalize_adjacency(g: &StateGraph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / (g.degree(u) + 1.0).sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for u in 0..n {
        a[(u, u)] = inv_sqrt[u] * inv_sqrt[u];
    }
    for (u, v, w) in g.edges() {
        let x = w * inv_sqrt[u] * inv_sqrt[v];
        a[(u, v)] = x;
        a[(v, u)] = x;
    }
    a
}

/// Reconstruction target: adjacency pattern plus the identity.
pub fn reconstruction_target(g: &StateGraph) -> DMatrix<f64> {
    let n = g.n_nodes();
    DMatrix::from_fn(n, n, |u, v| if u == v || g.weight(u, v) > 0.0 { 1.0 } else { 0.0 })
}

/// `#non-edges / #edges` of a 0/1 target.
pub fn default_pos_weight(target: &DMatrix<f64>) -> f64 {
    let pos = target.sum();
    (target.len() as f64 - pos) / pos
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub z: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub logsig: DMatrix<f64>,
    /// Hidden pre-activation `A W0`.
    pre: DMatrix<f64>,
    /// `A relu(A W0)`
    ah: DMatrix<f64>,
}

fn check_shapes(a_hat: &DMatrix<f64>, params: &VgaeParams, noise: Option<&DMatrix<f64>>) -> Result<()> {
    let n = a_hat.nrows();
    let ok = a_hat.ncols() == n
        && params.w0.nrows() == n
        && params.w_mu.nrows() == params.w0.ncols()
        && params.w_logsig.shape() == params.w_mu.shape()
        && noise.is_none_or(|e| e.shape() == (n, params.w_mu.ncols()));
    if ok {
        Ok(())
    } else {
        Err(Error::Contract("VGAE operand shapes do not line up".into()))
    }
}

/// Encoder forward pass; `noise = None` means zero noise (`Z = mu`).
pub fn vgae_forward(a_hat: &DMatrix<f64>, params: &VgaeParams, noise: Option<&DMatrix<f64>>) -> Result<Forward> {
    check_shapes(a_hat, params, noise)?;
    // X = I, so A X W0 = A W0
    let pre = a_hat * &params.w0;
    let h = pre.map(|x| x.max(0.0));
    let ah = a_hat * h;
    let mu = &ah * &params.w_mu;
    let logsig = &ah * &params.w_logsig;
    let z = match noise {
        Some(eps) => &mu + logsig.map(f64::exp).component_mul(eps),
        None => mu.clone(),
    };
    Ok(Forward { z, mu, logsig, pre, ah })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    /// Mean per-node KL divergence, before the `1/n` weight.
    pub kl: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-log sigmoid(x)`, stable for large `|x|`.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Loss and exact gradients with respect to all encoder weights.
///
/// `loss = mean_{ij} BCE_w(sigmoid(z_i . z_j), y_ij) + kl / n` where the
/// positive class is weighted by `pos_weight` and
/// `kl = (1/n) sum_i KL(q_i || N(0, I))`.
pub fn vgae_loss_and_grad(
    a_hat: &DMatrix<f64>,
    target: &DMatrix<f64>,
    params: &VgaeParams,
    noise: Option<&DMatrix<f64>>,
    pos_weight: f64,
) -> Result<(LossParts, VgaeParams)> {
    let fwd = vgae_forward(a_hat, params, noise)?;
    let n = a_hat.nrows();
    if target.shape() != (n, n) {
        return Err(Error::Contract("target must be n x n".into()));
    }
    let nn = (n * n) as f64;
    let logits = &fwd.z * fwd.z.transpose();

    let mut reconstruction = 0.0;
    let mut g_logits = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let (s, y) = (logits[(i, j)], target[(i, j)]);
            reconstruction += pos_weight * y * neg_log_sigmoid(s) + (1.0 - y) * neg_log_sigmoid(-s);
            g_logits[(i, j)] = (sigmoid(s) * (pos_weight * y + 1.0 - y) - pos_weight * y) / nn;
        }
    }
    reconstruction /= nn;

    let sig2 = fwd.logsig.map(|x| (2.0 * x).exp());
    let kl_sum: f64 = fwd
        .mu
        .iter()
        .zip(fwd.logsig.iter())
        .zip(sig2.iter())
        .map(|((m, l), s2)| -0.5 * (1.0 + 2.0 * l - m * m - s2))
        .sum();
    let kl = kl_sum / n as f64;
    let total = reconstruction + kl / n as f64;

    let g_z = (&g_logits + g_logits.transpose()) * &fwd.z;
    let c = 1.0 / nn;
    let g_mu = &g_z + &fwd.mu * c;
    let mut g_logsig = sig2.map(|s2| c * (s2 - 1.0));
    if let Some(eps) = noise {
        g_logsig += g_z.component_mul(&fwd.logsig.map(f64::exp)).component_mul(eps);
    }

    let w_mu = fwd.ah.transpose() * &g_mu;
    let w_logsig = fwd.ah.transpose() * &g_logsig;
    let g_h = a_hat.transpose() * (&g_mu * params.w_mu.transpose() + &g_logsig * params.w_logsig.transpose());
    let g_pre = g_h.zip_map(&fwd.pre, |g, p| if p > 0.0 { g } else { 0.0 });
    let w0 = a_hat.transpose() * g_pre;

    Ok((LossParts { total, reconstruction, kl }, VgaeParams { w0, w_mu, w_logsig }))
}

#[derive(Debug, Clone)]
pub struct VgaeModel {
    pub params: VgaeParams,
    /// Total loss at each epoch, before that epoch's update.
    pub losses: Vec<f64>,
}

pub fn vgae_train(g: &StateGraph, cfg: &VgaeConfig) -> Result<VgaeModel> {
    if cfg.latent_dim == 0 || cfg.hidden_dim == 0 || cfg.epochs == 0 || cfg.lr <= 0.0 {
        return Err(Error::Config("VGAE dimensions, epochs and lr must be positive".into()));
    }
    let n = g.n_nodes();
    let a_hat = normalize_adjacency(g);
    let target = reconstruction_target(g);
    let pos_weight = default_pos_weight(&target);
    let mut params = VgaeParams::init(n, cfg.hidden_dim, cfg.latent_dim, cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let noise = DMatrix::from_fn(n, cfg.latent_dim, |_, _| rng.sample(StandardNormal));
        let (loss, grad) = vgae_loss_and_grad(&a_hat, &target, &params, Some(&noise), pos_weight)?;
        if !loss.total.is_finite() || !grad.is_finite() {
            return Err(Error::TrainingFailure { epoch, reason: format!("loss is {}", loss.total) });
        }
        assert!(loss.kl >= 0.0, "KL divergence went negative at epoch {epoch}");
        losses.push(loss.total);
        params.axpy(-cfg.lr, &grad);
    }
    Ok(VgaeModel { params, losses })
}

/// Trains a VGAE and returns the posterior means as the embedding.
pub fn vgae_embed(g: &StateGraph, cfg: &VgaeConfig) -> Result<BasisMatrix> {
    let model = vgae_train(g, cfg)?;
    let fwd = vgae_forward(&normalize_adjacency(g), &model.params, None)?;
    BasisMatrix::new(fwd.mu, g.node_to_state().to_vec())
}
