use std::cmp::Ordering;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numkit::{sample_standard_normal, softmax, Scalar, SeededRng};

use super::loss::{encode, reparameterize};
use super::{Architecture, DecoderParams, ModelParams};

/// Topic distribution of one embedding through view `view`'s network,
/// averaged over `n_samples` reparameterised draws. `n_samples = 0` is the
/// deterministic mode and returns `softmax(μ)`.
pub fn infer_theta<T: Scalar>(
    params: &ModelParams<T>,
    view: usize,
    x: &[T],
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<Vec<T>> {
    let vp = params.views.get(view).ok_or_else(|| Error::IndexOutOfRange {
        what: "model views".into(),
        index: view,
        size: params.views.len(),
    })?;
    let post = encode(&vp.encoder, x)?;
    if n_samples == 0 {
        return Ok(softmax(&post.mu));
    }
    let k = params.n_topics;
    let mut acc = vec![T::zero(); k];
    for _ in 0..n_samples {
        let eps: Vec<T> = sample_standard_normal(rng, k);
        let (_, theta) = reparameterize(&post, &eps)?;
        acc.iter_mut().zip(&theta).for_each(|(a, &t)| *a = *a + t);
    }
    let n = T::of(n_samples as f64);
    acc.iter_mut().for_each(|a| *a = *a / n);
    Ok(acc)
}

/// Topic distribution of an embedding from a view the single-network model
/// never saw during training, through its one shared encoder.
pub fn infer_crossview_zeroshot<T: Scalar>(
    params: &ModelParams<T>,
    x: &[T],
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<Vec<T>> {
    if params.architecture != Architecture::Zeroshot {
        return Err(Error::InvalidConfig(
            "cross-view zero-shot inference needs the zeroshot architecture".into(),
        ));
    }
    let d = params.views[0].encoder.input_dim();
    if x.len() != d {
        return Err(Error::dim("zero-shot embedding (encoders not aligned?)", d, x.len()));
    }
    infer_theta(params, 0, x, n_samples, rng)
}

/// Per topic, the `top_k` vocabulary entries by descending weight with ties
/// broken lexicographically.
pub fn top_words<T: Scalar>(dec: &DecoderParams<T>, vocab: &Vocabulary, top_k: usize) -> Result<Vec<Vec<String>>> {
    let v = dec.beta.cols();
    if vocab.len() != v {
        return Err(Error::dim("vocabulary", v, vocab.len()));
    }
    if top_k > v {
        return Err(Error::InvalidConfig(format!("top_k {top_k} exceeds vocabulary size {v}")));
    }
    Ok((0..dec.beta.rows())
        .map(|k| {
            let row = dec.beta.row(k);
            let mut idx: Vec<usize> = (0..v).collect();
            idx.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| vocab.token(a).cmp(vocab.token(b)))
            });
            idx.into_iter().take(top_k).map(|i| vocab.token(i).to_owned()).collect()
        })
        .collect())
}
