//! The three experiments: steps-to-goal under learned policies, smoothness
//! of the optimal value function on estimated and ideal graphs, and value
//! fitting error per basis.
//!
//! Randomness is keyed by the experiment seed only: episodes use stream
//! `SAMPLE_STREAM`, embeddings `EMBED_STREAM` and policy evaluation
//! `EVAL_STREAM`. Episodes therefore do not depend on the dimension, and all
//! policies of one seed are scored on the same rollout streams.

use rayon::prelude::*;

use super::config::{EnvKind, ExperimentConfig, ModelKind, ModelParams};
use super::records::{Metric, ResultRecord};
use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::lspi::{ls_value_fit, lspi};
use crate::mdp::{
    greedy_policy, ideal_weighted_graph, simulate_policy, value_iteration, GridSpec, TabularMdp, ValueVector,
};
use crate::rng;
use crate::sampling::{build_estimated_graph, collect_episodes, EpisodeSet};
use crate::spectral::{graphwave_embed, pvf_basis, smoothness, GraphWaveConfig};
use crate::vgae::{vgae_embed, VgaeConfig};
use crate::walk::{node2vec_embed, struc2vec_embed, SkipGramConfig, WalkConfig};

pub const SAMPLE_STREAM: u64 = 1;
pub const EMBED_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;

/// Convergence tolerance of the value-iteration oracle.
pub const VI_TOLERANCE: f64 = 1e-10;
/// Ridge of the least-squares value fit.
pub const FIT_RIDGE: f64 = 1e-8;

/// Model label of records that belong to no embedding model.
pub const NO_MODEL: &str = "none";
/// Model label of the value-iteration policy's steps-to-goal.
pub const OPTIMAL_MODEL: &str = "optimal";

/// A built environment with its optimal value function.
#[derive(Debug, Clone)]
pub struct Environment {
    pub kind: EnvKind,
    pub spec: GridSpec,
    pub mdp: TabularMdp,
    pub v_star: ValueVector,
}

impl Environment {
    pub fn new(kind: EnvKind, cfg: &ExperimentConfig) -> Result<Self> {
        let (spec, mdp) = kind.build(cfg.three_room, cfg.gamma)?;
        let v_star = value_iteration(&mdp, VI_TOLERANCE);
        Ok(Environment { kind, spec, mdp, v_star })
    }

    /// Episodes a model trains on under `seed`.
    pub fn collect(&self, cfg: &ExperimentConfig, model: ModelKind, seed: u64) -> EpisodeSet {
        collect_episodes(
            &self.mdp,
            cfg.sampling_for(model),
            cfg.episodes,
            cfg.max_len,
            rng::derive(seed, SAMPLE_STREAM),
        )
    }

    /// Steps-to-goal of the value-iteration policy on the evaluation streams
    /// of `seed`.
    pub fn optimal_avg_steps(&self, cfg: &ExperimentConfig, seed: u64) -> f64 {
        let policy = greedy_policy(&self.mdp, &self.v_star);
        simulate_policy(&self.mdp, &policy, cfg.eval_max_steps, cfg.eval_runs, rng::derive(seed, EVAL_STREAM))
    }
}

/// Basis of `model` with `d` columns. `graph` is the estimated graph of
/// `data`; the ideal-graph PVF variant ignores both.
pub fn build_basis(
    model: ModelKind,
    params: &ModelParams,
    spec: &GridSpec,
    graph: &StateGraph,
    data: &EpisodeSet,
    d: usize,
    seed: u64,
) -> Result<BasisMatrix> {
    let embed_seed = rng::derive(seed, EMBED_STREAM);
    let walk_seed = rng::derive(embed_seed, 0);
    let train_seed = rng::derive(embed_seed, 1);
    match model {
        ModelKind::Pvf => pvf_basis(graph, d, params.pvf_laplacian),
        ModelKind::PvfIdeal => pvf_basis(&ideal_weighted_graph(spec), d, params.pvf_laplacian),
        ModelKind::N2v => {
            let walk = WalkConfig { seed: walk_seed, ..params.n2v_walk };
            let sg = SkipGramConfig { dim: d, seed: train_seed, ..params.n2v_skipgram };
            node2vec_embed(graph, d, &walk, &sg, params.n2v_reuse_walks.then_some(data))
        }
        ModelKind::S2v => {
            let walk = WalkConfig { seed: walk_seed, ..params.s2v_walk };
            let sg = SkipGramConfig { dim: d, seed: train_seed, ..params.s2v_skipgram };
            struc2vec_embed(graph, d, &params.s2v, &walk, &sg)
        }
        ModelKind::Gw => {
            let gw = GraphWaveConfig { scale: params.gw_scale, n_sample_points: d / 2, t_max: params.gw_t_max };
            graphwave_embed(graph, d, &gw)
        }
        ModelKind::Vgae => vgae_embed(graph, &VgaeConfig { latent_dim: d, seed: train_seed, ..params.vgae }),
    }
}

/// Builds every requested dimension of one model, sharing the spectrum
/// across dimensions for the PVF variants.
fn bases_for_dims(
    model: ModelKind,
    params: &ModelParams,
    spec: &GridSpec,
    graph: &StateGraph,
    data: &EpisodeSet,
    dims: &[usize],
    seed: u64,
) -> Vec<(usize, Result<BasisMatrix>)> {
    match model {
        ModelKind::Pvf | ModelKind::PvfIdeal => {
            let n_nodes = match model {
                ModelKind::Pvf => graph.n_nodes(),
                _ => spec.accessible_cells().count(),
            };
            let widest = dims.iter().copied().filter(|&d| d <= n_nodes).max();
            let full = widest.map(|d| build_basis(model, params, spec, graph, data, d, seed));
            dims.iter()
                .map(|&d| {
                    let basis = match &full {
                        Some(Ok(b)) if d <= b.dim() => b.truncated(d),
                        Some(Err(e)) if d <= n_nodes => Err(Error::Contract(format!("spectrum failed: {e}"))),
                        _ => Err(Error::Dimension(format!("PVF dimension {d} exceeds {n_nodes} graph nodes"))),
                    };
                    (d, basis)
                })
                .collect()
        }
        _ => dims.par_iter().map(|&d| (d, build_basis(model, params, spec, graph, data, d, seed))).collect(),
    }
}

fn log_failure(what: &str, env: EnvKind, model: ModelKind, d: usize, seed: u64, e: &Error) {
    log::warn!("{what} skipped for {env}/{model} d={d} seed={seed}: {e}");
}

/// Mean steps-to-goal of the LSPI policy learned on `basis`.
pub fn grpi_avg_steps(
    env: &Environment,
    cfg: &ExperimentConfig,
    data: &EpisodeSet,
    basis: &BasisMatrix,
    seed: u64,
) -> Result<f64> {
    let result = lspi(data, basis, &cfg.lspi(), env.mdp.n_states())?;
    Ok(simulate_policy(&env.mdp, &result.policy, cfg.eval_max_steps, cfg.eval_runs, rng::derive(seed, EVAL_STREAM)))
}

/// Steps-to-goal per `(dim, seed)` for `cfg.model`: collect episodes, build
/// the estimated graph, embed, run LSPI, simulate. Cells whose model fails
/// are logged and left out.
pub fn run_grpi(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let env = Environment::new(cfg.env, cfg)?;
    let model = cfg.model;
    let per_seed: Vec<Vec<ResultRecord>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut out = Vec::new();
            if cfg.baseline {
                let steps = env.optimal_avg_steps(cfg, seed);
                out.push(ResultRecord::new(env.kind.name(), OPTIMAL_MODEL, 0, seed, Metric::AvgSteps, steps));
            }
            let data = env.collect(cfg, model, seed);
            let graph = match build_estimated_graph(&data) {
                Ok(g) => g,
                Err(e) => {
                    log_failure("grpi", env.kind, model, 0, seed, &e);
                    return out;
                }
            };
            let bases = bases_for_dims(model, &cfg.params, &env.spec, &graph, &data, &cfg.dims, seed);
            let cells: Vec<Option<ResultRecord>> = bases
                .into_par_iter()
                .map(|(d, basis)| match basis.and_then(|b| grpi_avg_steps(&env, cfg, &data, &b, seed)) {
                    Ok(steps) => {
                        Some(ResultRecord::new(env.kind.name(), model.name(), d, seed, Metric::AvgSteps, steps))
                    }
                    Err(e) => {
                        log_failure("grpi", env.kind, model, d, seed, &e);
                        None
                    }
                })
                .collect();
            out.extend(cells.into_iter().flatten());
            out
        })
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}

/// `v^T L v` of the optimal value function on the estimated graph of one
/// seed's episodes (restricted to its nodes) and on the ideal graph.
pub fn smoothness_pair(env: &Environment, cfg: &ExperimentConfig, seed: u64) -> Result<(f64, f64)> {
    let data = env.collect(cfg, ModelKind::Pvf, seed);
    let graph = build_estimated_graph(&data)?;
    let restricted: Vec<f64> = graph.node_to_state().iter().map(|&s| env.v_star.0[s]).collect();
    let estimated = smoothness(&restricted, &graph)?;
    let ideal = smoothness(env.v_star.as_slice(), &ideal_weighted_graph(&env.spec))?;
    Ok((estimated, ideal))
}

/// Two smoothness records per seed, with model `none` and dimension 0.
pub fn run_smoothness(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let env = Environment::new(cfg.env, cfg)?;
    let pairs: Vec<(u64, (f64, f64))> =
        cfg.seeds.par_iter().map(|&seed| smoothness_pair(&env, cfg, seed).map(|p| (seed, p))).collect::<Result<_>>()?;
    Ok(pairs
        .into_iter()
        .flat_map(|(seed, (estimated, ideal))| {
            [
                ResultRecord::new(env.kind.name(), NO_MODEL, 0, seed, Metric::SmoothnessEstimated, estimated),
                ResultRecord::new(env.kind.name(), NO_MODEL, 0, seed, Metric::SmoothnessIdeal, ideal),
            ]
        })
        .collect())
}

/// Least-squares fitting error of the optimal value function per
/// `(model, dim, seed)`. Cells whose model fails are logged and left out.
pub fn run_mse(cfg: &ExperimentConfig, models: &[ModelKind]) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if models.is_empty() {
        return Err(Error::Config("no models given".into()));
    }
    let env = Environment::new(cfg.env, cfg)?;
    let groups: Vec<(ModelKind, u64)> = models.iter().flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s))).collect();
    let per_group: Vec<Vec<ResultRecord>> = groups
        .par_iter()
        .map(|&(model, seed)| {
            let data = env.collect(cfg, model, seed);
            let graph = match build_estimated_graph(&data) {
                Ok(g) => g,
                Err(e) => {
                    log_failure("mse", env.kind, model, 0, seed, &e);
                    return Vec::new();
                }
            };
            bases_for_dims(model, &cfg.params, &env.spec, &graph, &data, &cfg.dims, seed)
                .into_iter()
                .filter_map(|(d, basis)| match basis.and_then(|b| ls_value_fit(&b, &env.v_star, FIT_RIDGE)) {
                    Ok((_, mse)) => Some(ResultRecord::new(env.kind.name(), model.name(), d, seed, Metric::Mse, mse)),
                    Err(e) => {
                        log_failure("mse", env.kind, model, d, seed, &e);
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_group.into_iter().flatten().collect())
}

/// Basis `cfg.model` learns at dimension `d` from the episodes of `seed`.
pub fn embed(cfg: &ExperimentConfig, d: usize, seed: u64) -> Result<BasisMatrix> {
    let env = Environment::new(cfg.env, cfg)?;
    let data = env.collect(cfg, cfg.model, seed);
    let graph = build_estimated_graph(&data)?;
    build_basis(cfg.model, &cfg.params, &env.spec, &graph, &data, d, seed)
}
