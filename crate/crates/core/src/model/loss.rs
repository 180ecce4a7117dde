use crate::corpus::BowVector;
use crate::error::{Error, Result};
use crate::numkit::{dot, log_softmax, logsumexp, softmax, softplus, Scalar};

use super::{
    Batch, DecoderParams, EncoderParams, GaussianPosterior, LossBreakdown, ModelConfig,
    ModelParams, Noise,
};

/// Intermediate values of one encoder pass, kept for the backward pass.
pub(super) struct EncoderTrace<T> {
    pub pre: Vec<T>,
    pub hidden: Vec<T>,
    pub post: GaussianPosterior<T>,
}

pub(super) fn encode_traced<T: Scalar>(enc: &EncoderParams<T>, x: &[T]) -> Result<EncoderTrace<T>> {
    let mut pre = enc.w1.matvec(x)?;
    pre.iter_mut().zip(&enc.b1).for_each(|(a, &b)| *a = *a + b);
    let hidden = softplus(&pre);
    let mut mu = enc.w_mu.matvec(&hidden)?;
    mu.iter_mut().zip(&enc.b_mu).for_each(|(a, &b)| *a = *a + b);
    let mut logvar = enc.w_logvar.matvec(&hidden)?;
    logvar.iter_mut().zip(&enc.b_logvar).for_each(|(a, &b)| *a = *a + b);
    Ok(EncoderTrace {
        pre,
        hidden,
        post: GaussianPosterior { mu, logvar },
    })
}

pub fn encode<T: Scalar>(enc: &EncoderParams<T>, x: &[T]) -> Result<GaussianPosterior<T>> {
    encode_traced(enc, x).map(|t| t.post)
}

/// `z = μ + exp(logvar / 2) ⊙ ε` and `θ = softmax(z)`.
pub fn reparameterize<T: Scalar>(post: &GaussianPosterior<T>, eps: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if eps.len() != post.mu.len() {
        return Err(Error::dim("reparameterisation noise", post.mu.len(), eps.len()));
    }
    let z: Vec<T> = post
        .mu
        .iter()
        .zip(&post.logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv * T::half()).exp() * e)
        .collect();
    let theta = softmax(&z);
    Ok((z, theta))
}

/// Word log-probabilities `log softmax(βᵀθ)` over the vocabulary.
pub(super) fn word_log_probs<T: Scalar>(dec: &DecoderParams<T>, theta: &[T]) -> Result<Vec<T>> {
    Ok(log_softmax(&dec.beta.matvec_t(theta)?))
}

/// `−wᵀ log softmax(βᵀθ)`.
pub fn reconstruction_nll<T: Scalar>(dec: &DecoderParams<T>, theta: &[T], bow: &BowVector) -> Result<T> {
    if bow.is_empty() {
        return Ok(T::zero());
    }
    if let Some(i) = bow.max_index().filter(|&i| i >= dec.beta.cols()) {
        return Err(Error::IndexOutOfRange {
            what: "decoder vocabulary".into(),
            index: i,
            size: dec.beta.cols(),
        });
    }
    let lp = word_log_probs(dec, theta)?;
    Ok(-bow
        .entries()
        .iter()
        .fold(T::zero(), |acc, &(w, c)| acc + T::of(c as f64) * lp[w]))
}

/// KL(N(μp, e^{lvp}) ‖ N(μq, vq)) for diagonal Gaussians given the
/// second one's variance directly.
fn diag_gaussian_kl<T: Scalar>(mu_p: &[T], lv_p: &[T], mu_q: &[T], lv_q: &[T], var_q: &[T]) -> T {
    let mut acc = T::zero();
    for k in 0..mu_p.len() {
        let var_p = lv_p[k].exp();
        let diff = mu_p[k] - mu_q[k];
        acc = acc + (lv_q[k] - lv_p[k]) + (var_p + diff * diff) / var_q[k] - T::one();
    }
    acc * T::half()
}

pub fn prior_kl<T: Scalar>(post: &GaussianPosterior<T>, config: &ModelConfig<T>) -> T {
    let lv_prior: Vec<T> = config.prior_variance.iter().map(|v| v.ln()).collect();
    diag_gaussian_kl(&post.mu, &post.logvar, &config.prior_mean, &lv_prior, &config.prior_variance)
}

/// KL(p ‖ q) between two diagonal Gaussian posteriors.
pub fn pairwise_gaussian_kl<T: Scalar>(p: &GaussianPosterior<T>, q: &GaussianPosterior<T>) -> Result<T> {
    if p.mu.len() != q.mu.len() {
        return Err(Error::dim("pairwise KL", p.mu.len(), q.mu.len()));
    }
    let var_q: Vec<T> = q.logvar.iter().map(|v| v.exp()).collect();
    Ok(diag_gaussian_kl(&p.mu, &p.logvar, &q.mu, &q.logvar, &var_q))
}

/// In-batch InfoNCE over topic distributions.
///
/// `thetas[i][v]` is the topic distribution of view `v` in tuple `i`. For
/// every tuple `i` and ordered view pair `(a, b)`, `a ≠ b`, the term is
/// `−log(exp(θᵢᵃ·θᵢᵇ/τ) / Dᵢ)` where `Dᵢ` sums `exp(θᵢᶜ·θⱼᵈ/τ)` over every
/// `j` and `c, d`, leaving out `(j = i, c = d)` unless `include_self`.
/// Batches with fewer than two tuples have no negatives and contribute 0.
pub fn infonce_batch<T: Scalar>(thetas: &[Vec<Vec<T>>], tau: T, include_self: bool) -> T {
    infonce_impl(thetas, tau, include_self, None)
}

/// [`infonce_batch`] together with `∂loss/∂θ`, shaped like `thetas`.
pub fn infonce_batch_with_grad<T: Scalar>(
    thetas: &[Vec<Vec<T>>],
    tau: T,
    include_self: bool,
) -> (T, Vec<Vec<Vec<T>>>) {
    let mut grad: Vec<Vec<Vec<T>>> = thetas
        .iter()
        .map(|t| t.iter().map(|th| vec![T::zero(); th.len()]).collect())
        .collect();
    let loss = infonce_impl(thetas, tau, include_self, Some(&mut grad));
    (loss, grad)
}

fn infonce_impl<T: Scalar>(
    thetas: &[Vec<Vec<T>>],
    tau: T,
    include_self: bool,
    mut grad: Option<&mut Vec<Vec<Vec<T>>>>,
) -> T {
    let n_tuples = thetas.len();
    let n_views = thetas.first().map_or(0, Vec::len);
    if n_tuples < 2 || n_views < 2 {
        return T::zero();
    }
    let inv_tau = T::one() / tau;
    let pair_count = T::of((n_views * (n_views - 1)) as f64);
    let mut total = T::zero();
    let mut logits = Vec::with_capacity(n_views * n_tuples * n_views);
    let mut pairs = Vec::with_capacity(logits.capacity());
    for i in 0..n_tuples {
        logits.clear();
        pairs.clear();
        for c in 0..n_views {
            for (j, tuple_j) in thetas.iter().enumerate() {
                for (d, theta_jd) in tuple_j.iter().enumerate() {
                    if j == i && c == d && !include_self {
                        continue;
                    }
                    logits.push(dot(&thetas[i][c], theta_jd) * inv_tau);
                    pairs.push((c, j, d));
                }
            }
        }
        let log_denominator = logsumexp(&logits);
        let mut positive = T::zero();
        for a in 0..n_views {
            for b in 0..n_views {
                if a != b {
                    positive = positive + dot(&thetas[i][a], &thetas[i][b]) * inv_tau;
                }
            }
        }
        total = total + pair_count * log_denominator - positive;

        if let Some(g) = grad.as_deref_mut() {
            // positives: −θᵢᵃ·θᵢᵇ/τ for each ordered pair
            for a in 0..n_views {
                for b in 0..n_views {
                    if a == b {
                        continue;
                    }
                    for k in 0..thetas[i][a].len() {
                        let (ta, tb) = (thetas[i][a][k], thetas[i][b][k]);
                        g[i][a][k] = g[i][a][k] - tb * inv_tau;
                        g[i][b][k] = g[i][b][k] - ta * inv_tau;
                    }
                }
            }
            // denominator: pair_count · log Σ exp(logit)
            for (&logit, &(c, j, d)) in logits.iter().zip(&pairs) {
                let w = pair_count * (logit - log_denominator).exp() * inv_tau;
                for k in 0..thetas[i][c].len() {
                    let (tc, td) = (thetas[i][c][k], thetas[j][d][k]);
                    g[i][c][k] = g[i][c][k] + w * td;
                    g[j][d][k] = g[j][d][k] + w * tc;
                }
            }
        }
    }
    total
}

/// Checks batch/noise/parameter consistency shared by the forward and
/// backward passes.
pub(super) fn validate_batch<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch<'_, T>,
    noise: &Noise<T>,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if noise.len() != batch.len() {
        return Err(Error::dim("noise tuples", batch.len(), noise.len()));
    }
    let k = params.n_topics;
    for (tuple, eps) in batch.tuples.iter().zip(noise) {
        if tuple.len() != params.views.len() {
            return Err(Error::dim("views per tuple", params.views.len(), tuple.len()));
        }
        if eps.len() != tuple.len() {
            return Err(Error::dim("noise views", tuple.len(), eps.len()));
        }
        for ((item, view), e) in tuple.iter().zip(&params.views).zip(eps) {
            if item.x.len() != view.encoder.input_dim() {
                return Err(Error::dim("embedding", view.encoder.input_dim(), item.x.len()));
            }
            if e.len() != k {
                return Err(Error::dim("noise", k, e.len()));
            }
            if view.decoder.is_some() && item.bow.is_none() {
                return Err(Error::MissingBow(view.name.clone()));
            }
        }
    }
    Ok(())
}

/// Full objective on one batch with fixed reparameterisation noise.
pub fn total_loss<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch<'_, T>,
    noise: &Noise<T>,
    config: &ModelConfig<T>,
) -> Result<LossBreakdown<T>> {
    validate_batch(params, batch, noise)?;
    let mut recon = T::zero();
    let mut prior = T::zero();
    let mut pairwise = T::zero();
    let mut thetas = Vec::with_capacity(batch.len());
    for (tuple, eps) in batch.tuples.iter().zip(noise) {
        let mut posts = Vec::with_capacity(tuple.len());
        let mut tuple_thetas = Vec::with_capacity(tuple.len());
        for ((item, view), e) in tuple.iter().zip(&params.views).zip(eps) {
            let post = encode(&view.encoder, item.x)?;
            let (_, theta) = reparameterize(&post, e)?;
            if let (Some(dec), Some(bow)) = (&view.decoder, item.bow) {
                recon = recon + reconstruction_nll(dec, &theta, bow)?;
            }
            prior = prior + prior_kl(&post, config);
            posts.push(post);
            tuple_thetas.push(theta);
        }
        for (a, p) in posts.iter().enumerate() {
            for (b, q) in posts.iter().enumerate() {
                if a != b {
                    pairwise = pairwise + pairwise_gaussian_kl(p, q)?;
                }
            }
        }
        thetas.push(tuple_thetas);
    }
    let contrastive = infonce_batch(&thetas, config.temperature, config.include_self_pairs);
    Ok(LossBreakdown::new(recon, prior, pairwise, contrastive, config.contrastive_weight))
}
