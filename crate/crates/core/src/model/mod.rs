//! Multi-view neural topic model.
//!
//! Every view (language or image modality) owns an inference network that
//! maps a precomputed embedding to a diagonal Gaussian over `K` logits:
//!
//! ```text
//! h = softplus(W1 x + b1),  μ = Wμ h + bμ,  log σ² = Wlv h + blv
//! z = μ + σ ⊙ ε,            θ = softmax(z)
//! ```
//!
//! Text views also own a topic-word matrix `β` (K × V). The minimised
//! objective for a batch of aligned tuples is
//!
//! ```text
//! Σ_text −wᵀ log softmax(βᵀθ) + Σ_views KL(q ‖ prior)
//!   + Σ_{a≠b} KL(q_a ‖ q_b) + s · InfoNCE(θ; τ)
//! ```
//!
//! with all terms summed over the batch. In the single-network
//! (`zeroshot`) architecture one encoder/decoder pair is trained on one
//! text view and reused for every other view at inference time.

mod grad;
mod infer;
mod loss;

use std::fmt;
use std::str::FromStr;

use crate::corpus::{BowVector, Modality, ViewSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::numkit::{sample_standard_normal, Matrix, Scalar, SeededRng};

pub use grad::backward;
pub use infer::{infer_crossview_zeroshot, infer_theta, top_words};
pub use loss::{
    encode, infonce_batch, infonce_batch_with_grad, pairwise_gaussian_kl, prior_kl,
    reconstruction_nll, reparameterize, total_loss,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Architecture {
    /// One inference network per view, aligned through pairwise KL and InfoNCE.
    #[default]
    M3lContrast,
    /// A single inference network trained on one text view.
    Zeroshot,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::M3lContrast => "m3l_contrast",
            Architecture::Zeroshot => "zeroshot",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m3l_contrast" => Ok(Architecture::M3lContrast),
            "zeroshot" => Ok(Architecture::Zeroshot),
            other => Err(Error::InvalidConfig(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T> {
    pub n_topics: usize,
    pub hidden_dim: usize,
    pub temperature: T,
    pub contrastive_weight: T,
    pub inference_samples: usize,
    pub prior_mean: Vec<T>,
    pub prior_variance: Vec<T>,
    /// Keep `(j = i, c = d)` self-similarities in the InfoNCE denominator.
    pub include_self_pairs: bool,
    pub architecture: Architecture,
}

impl<T: Scalar> ModelConfig<T> {
    /// Defaults for `n_topics` topics. The prior is the Laplace approximation
    /// of a symmetric Dirichlet with α = 1/K: zero mean, variance 1 − 1/K.
    pub fn new(n_topics: usize) -> Self {
        let k = n_topics.max(1);
        Self {
            n_topics,
            hidden_dim: 100,
            temperature: T::of(0.07),
            contrastive_weight: T::of(50.0),
            inference_samples: 20,
            prior_mean: vec![T::zero(); k],
            prior_variance: vec![T::one() - T::one() / T::of(k as f64); k],
            include_self_pairs: false,
            architecture: Architecture::M3lContrast,
        }
    }

    /// Resets the prior to its default for the current `n_topics`.
    pub fn with_default_prior(mut self) -> Self {
        let fresh = Self::new(self.n_topics);
        self.prior_mean = fresh.prior_mean;
        self.prior_variance = fresh.prior_variance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.n_topics < 2 {
            return bad("n_topics must be at least 2");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if !(self.temperature > T::zero()) {
            return bad("temperature must be positive");
        }
        if !(self.contrastive_weight >= T::zero()) {
            return bad("contrastive_weight must be non-negative");
        }
        if self.inference_samples == 0 {
            return bad("inference_samples must be at least 1");
        }
        if self.prior_mean.len() != self.n_topics || self.prior_variance.len() != self.n_topics {
            return bad("prior_mean and prior_variance need one entry per topic");
        }
        if self.prior_variance.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return bad("prior_variance entries must be positive");
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ModelConfig<T> {
    fn default() -> Self {
        Self::new(100)
    }
}

/// Diagonal Gaussian over topic logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w_mu: Matrix<T>,
    pub b_mu: Vec<T>,
    pub w_logvar: Matrix<T>,
    pub b_logvar: Vec<T>,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize, k: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input_dim),
            b1: vec![T::zero(); hidden],
            w_mu: Matrix::zeros(k, hidden),
            b_mu: vec![T::zero(); k],
            w_logvar: Matrix::zeros(k, hidden),
            b_logvar: vec![T::zero(); k],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_topics(&self) -> usize {
        self.w_mu.rows()
    }
}

/// Unnormalised topic-word weights, K × V.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub beta: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewParams<T> {
    pub name: String,
    pub modality: Modality,
    pub encoder: EncoderParams<T>,
    pub decoder: Option<DecoderParams<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub architecture: Architecture,
    pub n_topics: usize,
    pub views: Vec<ViewParams<T>>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = ModelParams<T>;

/// Names of the parameter tensors of one view, in [`ModelParams::tensors`] order.
pub const TENSOR_NAMES: [&str; 7] = ["W1", "b1", "Wmu", "bmu", "Wlv", "blv", "beta"];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            architecture: self.architecture,
            n_topics: self.n_topics,
            views: self
                .views
                .iter()
                .map(|v| {
                    let e = &v.encoder;
                    ViewParams {
                        name: v.name.clone(),
                        modality: v.modality,
                        encoder: EncoderParams::zeros(e.input_dim(), e.hidden_dim(), e.n_topics()),
                        decoder: v.decoder.as_ref().map(|d| DecoderParams {
                            beta: Matrix::zeros(d.beta.rows(), d.beta.cols()),
                        }),
                    }
                })
                .collect(),
        }
    }

    pub fn view_index(&self, name: &str) -> Result<usize> {
        self.views
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::ViewNotFound(name.to_owned()))
    }

    /// Flat views of every tensor: per view `W1, b1, Wμ, bμ, Wlv, blv` and,
    /// for text views, `β`.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for v in &self.views {
            let e = &v.encoder;
            out.extend([
                e.w1.data(),
                &e.b1[..],
                e.w_mu.data(),
                &e.b_mu[..],
                e.w_logvar.data(),
                &e.b_logvar[..],
            ]);
            if let Some(d) = &v.decoder {
                out.push(d.beta.data());
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for v in &mut self.views {
            let e = &mut v.encoder;
            out.push(e.w1.data_mut());
            out.push(&mut e.b1[..]);
            out.push(e.w_mu.data_mut());
            out.push(&mut e.b_mu[..]);
            out.push(e.w_logvar.data_mut());
            out.push(&mut e.b_logvar[..]);
            if let Some(d) = &mut v.decoder {
                out.push(d.beta.data_mut());
            }
        }
        out
    }

    /// `view/tensor` labels matching [`Self::tensors`].
    pub fn tensor_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for v in &self.views {
            let n = if v.decoder.is_some() { 7 } else { 6 };
            out.extend(TENSOR_NAMES[..n].iter().map(|t| format!("{}/{t}", v.name)));
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            architecture: self.architecture,
            n_topics: self.n_topics,
            views: self
                .views
                .iter()
                .map(|v| {
                    let e = &v.encoder;
                    let vec = |x: &[T]| x.iter().map(|&a| U::of(a.as_f64())).collect();
                    ViewParams {
                        name: v.name.clone(),
                        modality: v.modality,
                        encoder: EncoderParams {
                            w1: e.w1.cast(),
                            b1: vec(&e.b1),
                            w_mu: e.w_mu.cast(),
                            b_mu: vec(&e.b_mu),
                            w_logvar: e.w_logvar.cast(),
                            b_logvar: vec(&e.b_logvar),
                        },
                        decoder: v.decoder.as_ref().map(|d| DecoderParams { beta: d.beta.cast() }),
                    }
                })
                .collect(),
        }
    }

    /// Every entry rounded through `f32`, i.e. exactly what a checkpoint stores.
    pub fn rounded_to_f32(&self) -> Self {
        self.cast::<f32>().cast()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Standard deviation of the initial topic-word weights.
pub const BETA_INIT_STD: f64 = 0.02;

/// Draws initial parameters from `SeededRng::new(seed)`. For each view in
/// order: `W1 ~ N(0, 1/D)`, `Wμ ~ N(0, 1/hidden)`, `Wlv ~ N(0, 1/hidden)`,
/// then for text views `β ~ N(0, 0.02²)`. Biases start at zero.
pub fn init_params<T: Scalar>(
    config: &ModelConfig<T>,
    views: &[ViewSpec],
    seed: u64,
) -> Result<ModelParams<T>> {
    config.validate()?;
    if views.is_empty() {
        return Err(Error::EmptyInput("model needs at least one view"));
    }
    if config.architecture == Architecture::Zeroshot && views.len() != 1 {
        return Err(Error::InvalidConfig(
            "zeroshot architecture trains exactly one view".into(),
        ));
    }
    let k = config.n_topics;
    let hidden = config.hidden_dim;
    let mut rng = SeededRng::new(seed);
    let mut gaussian = |rows: usize, cols: usize, std: f64| -> Matrix<T> {
        let draws: Vec<T> = sample_standard_normal(&mut rng, rows * cols);
        Matrix::new(rows, cols, draws.into_iter().map(|x| x * T::of(std)).collect())
            .expect("sized above")
    };
    let params = views
        .iter()
        .map(|spec| {
            if spec.embedding_dim == 0 {
                return Err(Error::InvalidConfig(format!("view {} has zero embedding dimension", spec.name)));
            }
            let d = spec.embedding_dim;
            let encoder = EncoderParams {
                w1: gaussian(hidden, d, 1.0 / (d as f64).sqrt()),
                b1: vec![T::zero(); hidden],
                w_mu: gaussian(k, hidden, 1.0 / (hidden as f64).sqrt()),
                b_mu: vec![T::zero(); k],
                w_logvar: gaussian(k, hidden, 1.0 / (hidden as f64).sqrt()),
                b_logvar: vec![T::zero(); k],
            };
            let decoder = match (&spec.modality, &spec.vocabulary) {
                (Modality::Text, Some(v)) if !v.is_empty() => Some(DecoderParams {
                    beta: gaussian(k, v.len(), BETA_INIT_STD),
                }),
                (Modality::Text, _) => return Err(Error::MissingBow(spec.name.clone())),
                (Modality::Image, _) => None,
            };
            Ok(ViewParams {
                name: spec.name.clone(),
                modality: spec.modality,
                encoder,
                decoder,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ModelParams {
        architecture: config.architecture,
        n_topics: k,
        views: params,
    })
}

/// One item of a training batch: a view's embedding and, for text views,
/// its bag of words.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a, T> {
    pub x: &'a [T],
    pub bow: Option<&'a BowVector>,
}

/// `tuples[i][v]` is view `v` of tuple `i`; view order follows
/// [`ModelParams::views`].
#[derive(Debug, Clone, Default)]
pub struct Batch<'a, T> {
    pub tuples: Vec<Vec<BatchItem<'a, T>>>,
}

impl<'a, T> Batch<'a, T> {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Reparameterisation noise, `noise[i][v]` of length K.
pub type Noise<T> = Vec<Vec<Vec<T>>>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown<T> {
    pub recon_nll: T,
    pub prior_kl: T,
    pub pairwise_kl: T,
    pub contrastive: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn new(recon_nll: T, prior_kl: T, pairwise_kl: T, contrastive: T, weight: T) -> Self {
        Self {
            recon_nll,
            prior_kl,
            pairwise_kl,
            contrastive,
            total: recon_nll + prior_kl + pairwise_kl + weight * contrastive,
        }
    }

    pub fn zero() -> Self {
        Self {
            recon_nll: T::zero(),
            prior_kl: T::zero(),
            pairwise_kl: T::zero(),
            contrastive: T::zero(),
            total: T::zero(),
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.recon_nll = self.recon_nll + other.recon_nll;
        self.prior_kl = self.prior_kl + other.prior_kl;
        self.pairwise_kl = self.pairwise_kl + other.pairwise_kl;
        self.contrastive = self.contrastive + other.contrastive;
        self.total = self.total + other.total;
    }

    pub fn is_finite(&self) -> bool {
        [self.recon_nll, self.prior_kl, self.pairwise_kl, self.contrastive, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Vocabulary of a view, when it has one.
pub fn view_vocabulary<'a>(specs: &'a [ViewSpec], name: &str) -> Option<&'a Vocabulary> {
    specs.iter().find(|s| s.name == name).and_then(|s| s.vocabulary.as_ref())
}
