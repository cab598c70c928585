//! Experiment configuration: flat `key = value` text, one entry per line,
//! `#` starting a comment. Model settings use dotted keys (`n2v.q = 4`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lspi::LspiConfig;
use crate::mdp::{self, GridSpec, TabularMdp};
use crate::sampling::SamplingStrategy;
use crate::spectral::{LaplacianKind, WaveletScale};
use crate::vgae::VgaeConfig;
use crate::walk::{SkipGramConfig, Struc2vecConfig, WalkConfig};

/// Environment variable that replaces the default seed list.
pub const SEED_ENV_VAR: &str = "GRAPHREP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    TwoRoom,
    ObstacleRoom,
    ThreeRoom,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::TwoRoom, EnvKind::ObstacleRoom, EnvKind::ThreeRoom];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::TwoRoom => "two-room",
            EnvKind::ObstacleRoom => "obstacle-room",
            EnvKind::ThreeRoom => "three-room",
        }
    }

    /// Layout of the environment; `three_room` is its `(width, height)`.
    pub fn spec(self, three_room: (usize, usize)) -> Result<GridSpec> {
        match self {
            EnvKind::TwoRoom => Ok(mdp::two_room_spec()),
            EnvKind::ObstacleRoom => mdp::obstacle_room_spec(None),
            EnvKind::ThreeRoom => mdp::three_room_spec(three_room.0, three_room.1),
        }
    }

    pub fn build(self, three_room: (usize, usize), gamma: f64) -> Result<(GridSpec, TabularMdp)> {
        let spec = self.spec(three_room)?;
        let mdp = TabularMdp::from_grid(&spec, gamma)?;
        Ok((spec, mdp))
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown env '{s}' (expected two-room, obstacle-room or three-room)")))
    }
}

/// Embedding model. `PvfIdeal` takes proto-value functions of the ideal
/// weighted graph instead of the estimated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Pvf,
    PvfIdeal,
    N2v,
    S2v,
    Gw,
    Vgae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] =
        [ModelKind::Pvf, ModelKind::PvfIdeal, ModelKind::N2v, ModelKind::S2v, ModelKind::Gw, ModelKind::Vgae];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pvf => "pvf",
            ModelKind::PvfIdeal => "pvf-ideal",
            ModelKind::N2v => "n2v",
            ModelKind::S2v => "s2v",
            ModelKind::Gw => "gw",
            ModelKind::Vgae => "vgae",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown model '{s}' (expected pvf, pvf-ideal, n2v, s2v, gw or vgae)"))
        })
    }
}

/// Per-model settings. Dimensions and seeds are filled in per experiment
/// cell, so the `dim`/`seed` fields inside are placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub pvf_laplacian: LaplacianKind,
    pub n2v_walk: WalkConfig,
    pub n2v_skipgram: SkipGramConfig,
    /// Train node2vec on the collected episodes instead of fresh walks.
    pub n2v_reuse_walks: bool,
    pub s2v: Struc2vecConfig,
    pub s2v_walk: WalkConfig,
    pub s2v_skipgram: SkipGramConfig,
    pub gw_scale: WaveletScale,
    pub gw_t_max: f64,
    pub vgae: VgaeConfig,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            pvf_laplacian: LaplacianKind::Normalized,
            n2v_walk: WalkConfig::default(),
            n2v_skipgram: SkipGramConfig::default(),
            n2v_reuse_walks: true,
            s2v: Struc2vecConfig::default(),
            s2v_walk: WalkConfig { p: 1.0, q: 1.0, ..WalkConfig::default() },
            s2v_skipgram: SkipGramConfig::default(),
            gw_scale: WaveletScale::Fixed(1.0),
            gw_t_max: 100.0,
            vgae: VgaeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub model: ModelKind,
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub max_len: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub lspi_max_iters: usize,
    pub lspi_ridge: f64,
    /// Evaluation rollouts per start state.
    pub eval_runs: usize,
    pub eval_max_steps: usize,
    /// Collection strategy; `None` picks biased walks for node2vec and
    /// uniform-random actions otherwise.
    pub sampling: Option<SamplingStrategy>,
    /// Also emit the value-iteration policy's steps-to-goal per seed.
    pub baseline: bool,
    pub three_room: (usize, usize),
    pub params: ModelParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvKind::TwoRoom,
            model: ModelKind::N2v,
            dims: vec![30],
            seeds: vec![default_seed()],
            episodes: 100,
            max_len: 100,
            gamma: mdp::DEFAULT_GAMMA,
            epsilon: 1e-6,
            lspi_max_iters: 20,
            lspi_ridge: 1e-6,
            eval_runs: 20,
            eval_max_steps: 100,
            sampling: None,
            baseline: false,
            three_room: (100, 50),
            params: ModelParams::default(),
        }
    }
}

/// Seed from `GRAPHREP_SEED`, or 0 when unset or unparsable.
pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV_VAR).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl ExperimentConfig {
    pub fn lspi(&self) -> LspiConfig {
        LspiConfig { gamma: self.gamma, epsilon: self.epsilon, max_iters: self.lspi_max_iters, ridge: self.lspi_ridge }
    }

    /// Collection strategy for a model under this config.
    pub fn sampling_for(&self, model: ModelKind) -> SamplingStrategy {
        match (self.sampling, model) {
            (Some(s), _) => s,
            (None, ModelKind::N2v) => {
                SamplingStrategy::Node2vecBiased { p: self.params.n2v_walk.p, q: self.params.n2v_walk.q }
            }
            (None, _) => SamplingStrategy::UniformRandom,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "env" => self.env = value.parse()?,
            "model" => self.model = value.parse()?,
            "dims" => self.dims = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "episodes" => self.episodes = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "sampling" => {
                self.sampling = match value {
                    "auto" => None,
                    other => Some(other.parse().map_err(|e| Error::Config(format!("sampling: {e}")))?),
                }
            }
            "baseline" => self.baseline = parse_bool(key, value)?,
            "lspi.max_iters" => self.lspi_max_iters = parse_value(key, value)?,
            "lspi.ridge" => self.lspi_ridge = parse_value(key, value)?,
            "eval.runs" => self.eval_runs = parse_value(key, value)?,
            "eval.max_steps" => self.eval_max_steps = parse_value(key, value)?,
            "three_room.width" => self.three_room.0 = parse_value(key, value)?,
            "three_room.height" => self.three_room.1 = parse_value(key, value)?,
            "pvf.laplacian" => {
                p.pvf_laplacian = match value {
                    "normalized" => LaplacianKind::Normalized,
                    "combinatorial" => LaplacianKind::Combinatorial,
                    _ => {
                        return Err(Error::Config(format!(
                            "pvf.laplacian must be normalized or combinatorial, got '{value}'"
                        )))
                    }
                }
            }
            "n2v.p" => p.n2v_walk.p = parse_value(key, value)?,
            "n2v.q" => p.n2v_walk.q = parse_value(key, value)?,
            "n2v.walks_per_node" => p.n2v_walk.walks_per_node = parse_value(key, value)?,
            "n2v.walk_length" => p.n2v_walk.walk_length = parse_value(key, value)?,
            "n2v.reuse_walks" => p.n2v_reuse_walks = parse_bool(key, value)?,
            "n2v.window" => p.n2v_skipgram.window = parse_value(key, value)?,
            "n2v.negatives" => p.n2v_skipgram.negatives = parse_value(key, value)?,
            "n2v.epochs" => p.n2v_skipgram.epochs = parse_value(key, value)?,
            "n2v.lr" => p.n2v_skipgram.lr = parse_value(key, value)?,
            "s2v.k_max" => p.s2v.k_max = parse_value(key, value)?,
            "s2v.stay_prob" => p.s2v.stay_prob = parse_value(key, value)?,
            "s2v.walks_per_node" => p.s2v_walk.walks_per_node = parse_value(key, value)?,
            "s2v.walk_length" => p.s2v_walk.walk_length = parse_value(key, value)?,
            "s2v.window" => p.s2v_skipgram.window = parse_value(key, value)?,
            "s2v.negatives" => p.s2v_skipgram.negatives = parse_value(key, value)?,
            "s2v.epochs" => p.s2v_skipgram.epochs = parse_value(key, value)?,
            "s2v.lr" => p.s2v_skipgram.lr = parse_value(key, value)?,
            "gw.scale" => {
                p.gw_scale = match value {
                    "auto" => WaveletScale::Auto,
                    v => WaveletScale::Fixed(parse_value(key, v)?),
                }
            }
            "gw.t_max" => p.gw_t_max = parse_value(key, value)?,
            "vgae.hidden" => p.vgae.hidden_dim = parse_value(key, value)?,
            "vgae.epochs" => p.vgae.epochs = parse_value(key, value)?,
            "vgae.lr" => p.vgae.lr = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("dims must not be empty".into()));
        }
        if self.dims.contains(&0) || self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("dims must be positive and strictly ascending, got {:?}", self.dims)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.episodes == 0 || self.max_len == 0 {
            return Err(Error::Config("episodes and max_len must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.epsilon.is_nan()
            || self.epsilon <= 0.0
            || self.lspi_max_iters == 0
            || self.lspi_ridge.is_nan()
            || self.lspi_ridge < 0.0
        {
            return Err(Error::Config("epsilon and lspi.max_iters must be positive, lspi.ridge nonnegative".into()));
        }
        if self.eval_runs == 0 || self.eval_max_steps == 0 {
            return Err(Error::Config("eval.runs and eval.max_steps must be positive".into()));
        }
        if self.model == ModelKind::Gw && self.dims.iter().any(|d| d % 2 != 0) {
            return Err(Error::Config("GraphWave dimensions must be even".into()));
        }
        self.params.n2v_walk.validate()?;
        self.params.s2v_walk.validate()?;
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, reason: format!("expected 'key = value', got '{line}'") })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(reason) => Error::Parse { line: i + 1, reason },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_and_dotted_keys() {
        let cfg: ExperimentConfig = "# comment\nenv = obstacle-room\nmodel = vgae\ndims = 10, 20\nseeds = 1,2,3\n\
                                      vgae.epochs = 50 # trailing\nn2v.q = 2.5\ngw.scale = auto\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.env, EnvKind::ObstacleRoom);
        assert_eq!(cfg.model, ModelKind::Vgae);
        assert_eq!(cfg.dims, vec![10, 20]);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.params.vgae.epochs, 50);
        assert_eq!(cfg.params.n2v_walk.q, 2.5);
        assert_eq!(cfg.params.gw_scale, WaveletScale::Auto);
        assert_eq!(cfg.episodes, 100);
    }

    #[test]
    fn rejects_bad_configs() {
        let line_of = |text: &str| match text.parse::<ExperimentConfig>() {
            Err(Error::Parse { line, .. }) => Some(line),
            _ => None,
        };
        assert_eq!(line_of("env = two-room\nbogus = 1"), Some(2));
        assert_eq!(line_of("no equals sign"), Some(1));
        assert_eq!(line_of("env = four-room"), Some(1));
        assert!(matches!("dims = 20, 10".parse::<ExperimentConfig>(), Err(Error::Config(_))));
        assert!(matches!("dims =".parse::<ExperimentConfig>(), Err(Error::Config(_))));
        assert!(matches!("seeds = ".parse::<ExperimentConfig>(), Err(Error::Config(_))));
        assert!(matches!("model = gw\ndims = 9".parse::<ExperimentConfig>(), Err(Error::Config(_))));
    }

    #[test]
    fn sampling_choice() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sampling_for(ModelKind::N2v), SamplingStrategy::Node2vecBiased { p: 1.0, q: 4.0 });
        assert_eq!(cfg.sampling_for(ModelKind::Pvf), SamplingStrategy::UniformRandom);
        let forced: ExperimentConfig = "sampling = uniform".parse().unwrap();
        assert_eq!(forced.sampling_for(ModelKind::N2v), SamplingStrategy::UniformRandom);
    }
}
