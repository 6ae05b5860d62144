use go3d_core::config::Settings as RawSettings;
use go3d_core::direction::DirectionRuleSet;
use go3d_core::graph::{GraphConfig, NearComparator};
use go3d_core::sampler::DEFAULT_P_CUT;
use go3d_core::train::TrainConfig;
use go3d_core::{Error, Result};

const KEYS: &[&str] = &[
    "seed",
    "distance",
    "confidence",
    "near",
    "d_hidden",
    "layers",
    "bins",
    "tau",
    "p_cut",
    "k",
    "temperature",
    "learning_rate",
    "weight_decay",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "batch_size",
    "steps",
    "grad_floor",
];

/// Every knob the subcommands read, after the config file is applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub graph: GraphConfig,
    pub d_hidden: Option<usize>,
    pub layers: usize,
    pub bins: usize,
    pub rules: DirectionRuleSet,
    pub p_cut: f64,
    pub k: usize,
    pub temperature: f64,
    pub train: TrainConfig,
    pub steps: usize,
    pub grad_floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0,
            graph: GraphConfig::default(),
            d_hidden: None,
            layers: 3,
            bins: 16,
            rules: DirectionRuleSet::default(),
            p_cut: DEFAULT_P_CUT,
            k: 5,
            temperature: 1.0,
            train: TrainConfig::default(),
            steps: 500,
            grad_floor: 1e-4,
        }
    }
}

impl Settings {
    pub fn from_text(text: &str) -> Result<Self> {
        let raw = RawSettings::parse(text)?;
        if let Some(k) = raw.keys().find(|k| !KEYS.contains(k)) {
            return Err(Error::validation(k, "unknown setting"));
        }
        let mut s = Settings::default();
        raw.apply("seed", &mut s.seed)?;
        raw.apply("distance", &mut s.graph.distance)?;
        raw.apply("confidence", &mut s.graph.confidence)?;
        match raw.get_str("near") {
            None | Some("gt") => {}
            Some("lt") => s.graph.near = NearComparator::Less,
            Some(other) => return Err(Error::validation("near", format!("expected gt or lt, got {other:?}"))),
        }
        s.d_hidden = raw.get("d_hidden")?;
        raw.apply("layers", &mut s.layers)?;
        raw.apply("bins", &mut s.bins)?;
        if let Some(tau) = raw.get("tau")? {
            s.rules = DirectionRuleSet::with_tau(tau)?;
        }
        raw.apply("p_cut", &mut s.p_cut)?;
        raw.apply("k", &mut s.k)?;
        raw.apply("temperature", &mut s.temperature)?;
        raw.apply("learning_rate", &mut s.train.learning_rate)?;
        raw.apply("weight_decay", &mut s.train.weight_decay)?;
        raw.apply("adam_beta1", &mut s.train.adam_beta1)?;
        raw.apply("adam_beta2", &mut s.train.adam_beta2)?;
        raw.apply("adam_eps", &mut s.train.adam_eps)?;
        raw.apply("batch_size", &mut s.train.batch_size)?;
        raw.apply("steps", &mut s.steps)?;
        raw.apply("grad_floor", &mut s.grad_floor)?;
        Ok(s)
    }

    pub fn validate(&mut self) -> Result<()> {
        self.graph.validate()?;
        self.train.seed = self.seed;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.p_cut) {
            return Err(Error::validation("p_cut", "must lie in [0, 1]"));
        }
        if self.k == 0 {
            return Err(Error::validation("k", "must be at least 1"));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::validation("temperature", "must be positive"));
        }
        Ok(())
    }
}
