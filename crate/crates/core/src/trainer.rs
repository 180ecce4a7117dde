//! Epoch loop and model persistence.
//!
//! All randomness of a run derives from `TrainConfig::seed`:
//!
//! * `derive_seed(seed, "init")` seeds [`init_params`],
//! * `SeededRng::derived(seed, "shuffle")` permutes the tuple order at the
//!   start of every epoch (when shuffling is on),
//! * `SeededRng::derived(seed, "noise")` supplies the reparameterisation
//!   noise, drawn per batch tuple by tuple and view by view, `K` values per
//!   item.
//!
//! The MDL1 bundle layout (little endian):
//!
//! ```text
//! "MDL1"  u32 version = 1  u32 K  u32 n_views
//! per view:
//!   u8 modality (0 text, 1 image)  u32 len + UTF-8 name  u32 D
//!   EMB1 W1, b1, Wμ, bμ, Wlv, blv      (vectors stored as 1 × n)
//!   text views only: EMB1 β, u32 V, V × (u32 len + UTF-8 token)
//! u32 len + UTF-8 config text (key=value lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::corpus::io::{decode_emb1, encode_emb1, put_string, put_u32, ByteReader};
use crate::corpus::{Modality, TupleDataset, Vocabulary};
use crate::error::{Error, Result};
use crate::fsio;
use crate::model::{
    backward, init_params, Architecture, Batch, BatchItem, DecoderParams, EncoderParams,
    LossBreakdown, ModelConfig, ModelParams, Noise, ViewParams,
};
use crate::numkit::{derive_seed, sample_standard_normal, Matrix, Scalar, SeededRng};
use crate::optim::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// The text view the single-network architecture trains on. Ignored by
    /// the multi-view architecture.
    pub zeroshot_train_view: Option<String>,
    pub optimizer: AdamConfig<T>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            seed: 0,
            shuffle: true,
            zeroshot_train_view: None,
            optimizer: AdamConfig::default(),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Epoch-summed loss terms, one entry per completed epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory<T> {
    pub epochs: Vec<LossBreakdown<T>>,
}

impl<T: Scalar> TrainHistory<T> {
    pub const TSV_HEADER: &'static str = "epoch\trecon\tprior_kl\tpairwise_kl\tcontrastive\ttotal";

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(Self::TSV_HEADER);
        s.push('\n');
        for (i, e) in self.epochs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                e.recon_nll,
                e.prior_kl,
                e.pairwise_kl,
                e.contrastive,
                e.total
            );
        }
        s
    }
}

/// The views a run trains on: all of them, or the single named text view
/// for the zero-shot architecture.
pub fn training_views<T: Scalar>(
    dataset: &TupleDataset<T>,
    model_config: &ModelConfig<T>,
    train_config: &TrainConfig<T>,
) -> Result<TupleDataset<T>> {
    match model_config.architecture {
        Architecture::M3lContrast => Ok(dataset.clone()),
        Architecture::Zeroshot => {
            let name = match (&train_config.zeroshot_train_view, dataset.n_views()) {
                (Some(name), _) => name.clone(),
                (None, 1) => dataset.view(0).spec.name.clone(),
                (None, _) => {
                    return Err(Error::InvalidConfig(
                        "zeroshot architecture needs zeroshot_train_view".into(),
                    ))
                }
            };
            let idx = dataset.view_index(&name)?;
            if !dataset.view(idx).spec.is_text() {
                return Err(Error::InvalidConfig(format!(
                    "zeroshot training view {name} is not a text view"
                )));
            }
            dataset.select_views(&[name.as_str()])
        }
    }
}

pub fn train<T: Scalar>(
    dataset: &TupleDataset<T>,
    model_config: &ModelConfig<T>,
    train_config: &TrainConfig<T>,
) -> Result<(ModelParams<T>, TrainHistory<T>)> {
    train_observed(dataset, model_config, train_config, |_, _, _| {})
}

/// [`train`] calling `observe(epoch, loss, params)` after every epoch
/// (epochs numbered from 1).
pub fn train_observed<T: Scalar>(
    dataset: &TupleDataset<T>,
    model_config: &ModelConfig<T>,
    train_config: &TrainConfig<T>,
    mut observe: impl FnMut(usize, &LossBreakdown<T>, &ModelParams<T>),
) -> Result<(ModelParams<T>, TrainHistory<T>)> {
    model_config.validate()?;
    train_config.validate()?;
    if dataset.tuple_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let data = training_views(dataset, model_config, train_config)?;
    let seed = train_config.seed;
    let mut params = init_params(model_config, &data.specs(), derive_seed(seed, "init"))?;
    let mut adam = AdamState::for_params(train_config.optimizer, &params);
    let mut shuffle_rng = SeededRng::derived(seed, "shuffle");
    let mut noise_rng = SeededRng::derived(seed, "noise");
    let k = model_config.n_topics;
    let mut order: Vec<usize> = (0..data.tuple_count()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=train_config.epochs {
        if train_config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut epoch_loss = LossBreakdown::zero();
        for chunk in order.chunks(train_config.batch_size) {
            let batch = Batch {
                tuples: chunk
                    .iter()
                    .map(|&t| {
                        data.views()
                            .iter()
                            .map(|v| BatchItem {
                                x: v.embeddings.row(t),
                                bow: v.bows.as_ref().map(|b| &b[t]),
                            })
                            .collect()
                    })
                    .collect(),
            };
            let noise: Noise<T> = chunk
                .iter()
                .map(|_| (0..data.n_views()).map(|_| sample_standard_normal(&mut noise_rng, k)).collect())
                .collect();
            let (loss, grads) = backward(&params, &batch, &noise, model_config)?;
            adam_step(&mut params, &grads, &mut adam)?;
            epoch_loss.accumulate(&loss);
        }
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        observe(epoch, &epoch_loss, &params);
        history.epochs.push(epoch_loss);
    }
    Ok((params, history))
}

/// Trained parameters with everything inference needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub params: ModelParams<T>,
    /// Parallel to `params.views`; `Some` exactly for text views.
    pub vocabularies: Vec<Option<Vocabulary>>,
    pub config: RunConfig,
}

impl<T: Scalar> ModelBundle<T> {
    /// Attaches the vocabularies of `dataset` to freshly trained parameters.
    pub fn from_training(params: ModelParams<T>, dataset: &TupleDataset<T>, config: RunConfig) -> Result<Self> {
        let vocabularies = params
            .views
            .iter()
            .map(|v| {
                let idx = dataset.view_index(&v.name)?;
                Ok(dataset.view(idx).spec.vocabulary.clone())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params,
            vocabularies,
            config,
        })
    }

    pub fn model_config(&self) -> ModelConfig<T> {
        self.config.model_config()
    }
}

pub const MDL1_MAGIC: [u8; 4] = *b"MDL1";
pub const MDL1_VERSION: u32 = 1;

fn vector_block<T: Scalar>(v: &[T], out: &mut Vec<u8>) {
    encode_emb1(&Matrix::row_vector(v), out);
}

pub fn encode_model<T: Scalar>(bundle: &ModelBundle<T>) -> Result<Vec<u8>> {
    let p = &bundle.params;
    if bundle.vocabularies.len() != p.views.len() {
        return Err(Error::dim("bundle vocabularies", p.views.len(), bundle.vocabularies.len()));
    }
    if bundle.config.n_topics != p.n_topics || bundle.config.architecture != p.architecture {
        return Err(Error::InvalidConfig("bundle config disagrees with its parameters".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MDL1_MAGIC);
    put_u32(&mut out, MDL1_VERSION);
    put_u32(&mut out, p.n_topics as u32);
    put_u32(&mut out, p.views.len() as u32);
    for (v, vocab) in p.views.iter().zip(&bundle.vocabularies) {
        let e = &v.encoder;
        out.push(v.modality.code());
        put_string(&mut out, &v.name);
        put_u32(&mut out, e.input_dim() as u32);
        encode_emb1(&e.w1, &mut out);
        vector_block(&e.b1, &mut out);
        encode_emb1(&e.w_mu, &mut out);
        vector_block(&e.b_mu, &mut out);
        encode_emb1(&e.w_logvar, &mut out);
        vector_block(&e.b_logvar, &mut out);
        match (&v.decoder, vocab) {
            (Some(d), Some(vocab)) => {
                if vocab.len() != d.beta.cols() {
                    return Err(Error::dim("vocabulary of view", d.beta.cols(), vocab.len()));
                }
                encode_emb1(&d.beta, &mut out);
                put_u32(&mut out, vocab.len() as u32);
                for t in vocab.tokens() {
                    put_string(&mut out, t);
                }
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::MissingBow(v.name.clone())),
            (None, Some(_)) => {
                return Err(Error::InvalidConfig(format!("view {} has a vocabulary but no decoder", v.name)))
            }
        }
    }
    put_string(&mut out, &bundle.config.to_text());
    Ok(out)
}

fn expect_shape<T: Scalar>(m: &Matrix<T>, rows: usize, cols: usize, what: &'static str) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::dim(what, rows, m.rows()));
    }
    if m.cols() != cols {
        return Err(Error::dim(what, cols, m.cols()));
    }
    Ok(())
}

fn read_vector<T: Scalar>(r: &mut ByteReader<'_>, len: usize, what: &'static str) -> Result<Vec<T>> {
    let m = decode_emb1::<T>(r)?;
    expect_shape(&m, 1, len, what)?;
    Ok(m.into_data())
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<ModelBundle<T>> {
    let mut r = ByteReader::new(bytes);
    let magic = r.magic("MDL1 header")?;
    if magic != MDL1_MAGIC {
        return Err(Error::BadMagic {
            expected: MDL1_MAGIC,
            found: magic,
        });
    }
    let version = r.u32("MDL1 header")?;
    if version != MDL1_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: MDL1_VERSION,
            found: version,
        });
    }
    let k = r.u32("MDL1 header")? as usize;
    let n_views = r.u32("MDL1 header")? as usize;
    let mut views = Vec::with_capacity(n_views.min(64));
    let mut vocabularies = Vec::with_capacity(n_views.min(64));
    for _ in 0..n_views {
        let code = r.u8("MDL1 view")?;
        let modality = Modality::from_code(code).ok_or_else(|| Error::Parse {
            what: "MDL1 view",
            line: 0,
            detail: format!("unknown modality code {code}"),
        })?;
        let name = r.string("MDL1 view name")?;
        let d = r.u32("MDL1 view")? as usize;
        let w1 = decode_emb1::<T>(&mut r)?;
        let hidden = w1.rows();
        expect_shape(&w1, hidden, d, "W1")?;
        let b1 = read_vector(&mut r, hidden, "b1")?;
        let w_mu = decode_emb1::<T>(&mut r)?;
        expect_shape(&w_mu, k, hidden, "Wmu")?;
        let b_mu = read_vector(&mut r, k, "bmu")?;
        let w_logvar = decode_emb1::<T>(&mut r)?;
        expect_shape(&w_logvar, k, hidden, "Wlv")?;
        let b_logvar = read_vector(&mut r, k, "blv")?;
        let (decoder, vocab) = match modality {
            Modality::Text => {
                let beta = decode_emb1::<T>(&mut r)?;
                let v = r.u32("MDL1 vocabulary")? as usize;
                expect_shape(&beta, k, v, "beta")?;
                let tokens = (0..v).map(|_| r.string("MDL1 vocabulary")).collect::<Result<Vec<_>>>()?;
                (Some(DecoderParams { beta }), Some(Vocabulary::from_tokens(tokens)?))
            }
            Modality::Image => (None, None),
        };
        views.push(ViewParams {
            name,
            modality,
            encoder: EncoderParams {
                w1,
                b1,
                w_mu,
                b_mu,
                w_logvar,
                b_logvar,
            },
            decoder,
        });
        vocabularies.push(vocab);
    }
    let config = RunConfig::parse(&r.string("MDL1 config")?)?;
    if !r.is_at_end() {
        return Err(Error::Parse {
            what: "MDL1",
            line: 0,
            detail: "trailing bytes after config block".into(),
        });
    }
    if config.n_topics != k {
        return Err(Error::dim("MDL1 topic count vs config", k, config.n_topics));
    }
    Ok(ModelBundle {
        params: ModelParams {
            architecture: config.architecture,
            n_topics: k,
            views,
        },
        vocabularies,
        config,
    })
}

pub fn save_model<T: Scalar>(bundle: &ModelBundle<T>, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_model(bundle)?)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelBundle<T>> {
    decode_model(&fsio::read_bytes(path)?)
}
