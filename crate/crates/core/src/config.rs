//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected and missing keys take their defaults. [`RunConfig::to_text`]
//! writes every key in a fixed order, so equal configs serialize to equal
//! bytes.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig};
use crate::numkit::Scalar;
use crate::optim::AdamConfig;
use crate::pltm::PltmHyper;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_topics: usize,
    pub hidden_dim: usize,
    pub temperature: f64,
    pub contrastive_weight: f64,
    pub inference_samples: usize,
    pub include_self_pairs: bool,
    pub architecture: Architecture,

    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub zeroshot_train_view: Option<String>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: Option<f64>,

    /// `None` means 50/K.
    pub pltm_alpha: Option<f64>,
    pub pltm_eta: f64,
    pub pltm_iterations: usize,
    pub pltm_burn_in: usize,
    pub pltm_sample_lag: usize,
    pub pltm_infer_sweeps: usize,
    pub pltm_infer_average: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pltm = PltmHyper::new(100);
        Self {
            n_topics: 100,
            hidden_dim: 100,
            temperature: 0.07,
            contrastive_weight: 50.0,
            inference_samples: 20,
            include_self_pairs: false,
            architecture: Architecture::M3lContrast,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            shuffle: true,
            zeroshot_train_view: None,
            learning_rate: 2e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: None,
            pltm_alpha: None,
            pltm_eta: pltm.eta,
            pltm_iterations: pltm.iterations,
            pltm_burn_in: pltm.burn_in,
            pltm_sample_lag: pltm.sample_lag,
            pltm_infer_sweeps: pltm.infer_sweeps,
            pltm_infer_average: pltm.infer_average,
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 24] = [
    "n_topics",
    "hidden_dim",
    "temperature",
    "contrastive_weight",
    "inference_samples",
    "include_self_pairs",
    "architecture",
    "epochs",
    "batch_size",
    "seed",
    "shuffle",
    "zeroshot_train_view",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "grad_clip",
    "pltm_alpha",
    "pltm_eta",
    "pltm_iterations",
    "pltm_burn_in",
    "pltm_sample_lag",
    "pltm_infer_sweeps",
    "pltm_infer_average",
];

fn parse_value<V: FromStr>(key: &str, value: &str, line: usize) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e: V::Err| Error::Parse {
        what: "config",
        line,
        detail: format!("{key}: {e}"),
    })
}

fn parse_optional(key: &str, value: &str, line: usize, none: &str) -> Result<Option<f64>> {
    if value == none {
        Ok(None)
    } else {
        parse_value(key, value, line).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                what: "config",
                line,
                detail: format!("expected key=value, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Parse {
                    what: "config",
                    line,
                    detail: format!("duplicate key {key}"),
                });
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "n_topics" => self.n_topics = parse_value(key, value, line)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value, line)?,
            "temperature" => self.temperature = parse_value(key, value, line)?,
            "contrastive_weight" => self.contrastive_weight = parse_value(key, value, line)?,
            "inference_samples" => self.inference_samples = parse_value(key, value, line)?,
            "include_self_pairs" => self.include_self_pairs = parse_value(key, value, line)?,
            "architecture" => self.architecture = value.parse()?,
            "epochs" => self.epochs = parse_value(key, value, line)?,
            "batch_size" => self.batch_size = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "shuffle" => self.shuffle = parse_value(key, value, line)?,
            "zeroshot_train_view" => {
                self.zeroshot_train_view = (!value.is_empty()).then(|| value.to_owned())
            }
            "learning_rate" => self.learning_rate = parse_value(key, value, line)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, value, line)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, value, line)?,
            "adam_eps" => self.adam_eps = parse_value(key, value, line)?,
            "grad_clip" => self.grad_clip = parse_optional(key, value, line, "off")?,
            "pltm_alpha" => self.pltm_alpha = parse_optional(key, value, line, "auto")?,
            "pltm_eta" => self.pltm_eta = parse_value(key, value, line)?,
            "pltm_iterations" => self.pltm_iterations = parse_value(key, value, line)?,
            "pltm_burn_in" => self.pltm_burn_in = parse_value(key, value, line)?,
            "pltm_sample_lag" => self.pltm_sample_lag = parse_value(key, value, line)?,
            "pltm_infer_sweeps" => self.pltm_infer_sweeps = parse_value(key, value, line)?,
            "pltm_infer_average" => self.pltm_infer_average = parse_value(key, value, line)?,
            other => return Err(Error::UnknownConfigKey(other.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config::<f64>().validate()?;
        self.train_config::<f64>().validate()?;
        self.pltm_hyper().validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>, none: &str| v.map_or(none.to_owned(), |x| x.to_string());
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("n_topics", self.n_topics.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("temperature", self.temperature.to_string());
        put("contrastive_weight", self.contrastive_weight.to_string());
        put("inference_samples", self.inference_samples.to_string());
        put("include_self_pairs", self.include_self_pairs.to_string());
        put("architecture", self.architecture.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("shuffle", self.shuffle.to_string());
        put("zeroshot_train_view", self.zeroshot_train_view.clone().unwrap_or_default());
        put("learning_rate", self.learning_rate.to_string());
        put("adam_beta1", self.adam_beta1.to_string());
        put("adam_beta2", self.adam_beta2.to_string());
        put("adam_eps", self.adam_eps.to_string());
        put("grad_clip", opt(self.grad_clip, "off"));
        put("pltm_alpha", opt(self.pltm_alpha, "auto"));
        put("pltm_eta", self.pltm_eta.to_string());
        put("pltm_iterations", self.pltm_iterations.to_string());
        put("pltm_burn_in", self.pltm_burn_in.to_string());
        put("pltm_sample_lag", self.pltm_sample_lag.to_string());
        put("pltm_infer_sweeps", self.pltm_infer_sweeps.to_string());
        put("pltm_infer_average", self.pltm_infer_average.to_string());
        s
    }

    pub fn model_config<T: Scalar>(&self) -> ModelConfig<T> {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            temperature: T::of(self.temperature),
            contrastive_weight: T::of(self.contrastive_weight),
            inference_samples: self.inference_samples,
            include_self_pairs: self.include_self_pairs,
            architecture: self.architecture,
            ..ModelConfig::new(self.n_topics)
        }
    }

    pub fn train_config<T: Scalar>(&self) -> TrainConfig<T> {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            shuffle: self.shuffle,
            zeroshot_train_view: self.zeroshot_train_view.clone(),
            optimizer: AdamConfig {
                learning_rate: T::of(self.learning_rate),
                beta1: T::of(self.adam_beta1),
                beta2: T::of(self.adam_beta2),
                eps: T::of(self.adam_eps),
                grad_clip: self.grad_clip.map(T::of),
            },
        }
    }

    pub fn pltm_hyper(&self) -> PltmHyper {
        PltmHyper {
            alpha: self.pltm_alpha.unwrap_or(50.0 / self.n_topics.max(1) as f64),
            eta: self.pltm_eta,
            iterations: self.pltm_iterations,
            burn_in: self.pltm_burn_in,
            sample_lag: self.pltm_sample_lag,
            infer_sweeps: self.pltm_infer_sweeps,
            infer_average: self.pltm_infer_average,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.n_topics, 100);
        assert_eq!(c.temperature, 0.07);
        assert_eq!(c.contrastive_weight, 50.0);
        assert_eq!(c.learning_rate, 2e-3);
        assert_eq!(c.pltm_hyper().alpha, 0.5);
    }

    #[test]
    fn parses_comments_and_overrides() {
        let c = RunConfig::parse("# run\n\n n_topics = 10\narchitecture=zeroshot\nzeroshot_train_view=lang0\ngrad_clip=5\npltm_alpha=0.1\n").unwrap();
        assert_eq!(c.n_topics, 10);
        assert_eq!(c.architecture, Architecture::Zeroshot);
        assert_eq!(c.zeroshot_train_view.as_deref(), Some("lang0"));
        assert_eq!(c.grad_clip, Some(5.0));
        assert_eq!(c.pltm_hyper().alpha, 0.1);
        assert_eq!(c.model_config::<f64>().prior_variance, vec![0.9; 10]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("topics=3"), Err(Error::UnknownConfigKey(_))));
        assert!(matches!(RunConfig::parse("epochs=many"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("epochs"), Err(Error::Parse { .. })));
        assert!(matches!(RunConfig::parse("seed=1\nseed=2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(RunConfig::parse("temperature=0"), Err(Error::InvalidConfig(_))));
        assert!(matches!(RunConfig::parse("batch_size=0"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.n_topics = 7;
        c.temperature = 0.1 + 0.2;
        c.seed = u64::MAX;
        c.zeroshot_train_view = Some("de".into());
        let text = c.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        for line in text.lines() {
            let key = line.split('=').next().unwrap();
            assert!(KEYS.contains(&key));
        }
    }
}
