//! Reverse pass through the batch objective with the reparameterisation
//! noise held fixed.

use crate::error::Result;
use crate::numkit::{logistic, softmax, Scalar};

use super::loss::{
    encode_traced, infonce_batch_with_grad, pairwise_gaussian_kl, prior_kl, validate_batch,
    word_log_probs, EncoderTrace,
};
use super::{Batch, EncoderParams, Gradients, LossBreakdown, ModelConfig, ModelParams, Noise};

struct ItemState<T> {
    trace: EncoderTrace<T>,
    sigma: Vec<T>,
    theta: Vec<T>,
    /// ∂loss/∂μ and ∂loss/∂logvar collected from the KL terms.
    d_mu: Vec<T>,
    d_logvar: Vec<T>,
    /// ∂loss/∂θ collected from reconstruction and InfoNCE.
    d_theta: Vec<T>,
}

/// Loss breakdown and exact gradient of `total_loss` for every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch<'_, T>,
    noise: &Noise<T>,
    config: &ModelConfig<T>,
) -> Result<(LossBreakdown<T>, Gradients<T>)> {
    validate_batch(params, batch, noise)?;
    let k = params.n_topics;
    let mut grads = params.zeros_like();
    let mut recon = T::zero();
    let mut prior = T::zero();
    let mut pairwise = T::zero();

    let prior_var = &config.prior_variance;
    let prior_mean = &config.prior_mean;

    let mut states: Vec<Vec<ItemState<T>>> = Vec::with_capacity(batch.len());
    for (tuple, eps) in batch.tuples.iter().zip(noise) {
        let mut row = Vec::with_capacity(tuple.len());
        for (v, (item, e)) in tuple.iter().zip(eps).enumerate() {
            let view = &params.views[v];
            let trace = encode_traced(&view.encoder, item.x)?;
            let sigma: Vec<T> = trace.post.logvar.iter().map(|&lv| (lv * T::half()).exp()).collect();
            let z: Vec<T> = (0..k).map(|i| trace.post.mu[i] + sigma[i] * e[i]).collect();
            let theta = softmax(&z);
            let mut d_theta = vec![T::zero(); k];

            if let (Some(dec), Some(bow)) = (&view.decoder, item.bow) {
                if !bow.is_empty() {
                    let lp = word_log_probs(dec, &theta)?;
                    let n_words = T::of(bow.total() as f64);
                    let mut nll = T::zero();
                    // ∂nll/∂logits = N·p − w
                    let mut d_logits: Vec<T> = lp.iter().map(|&l| n_words * l.exp()).collect();
                    for &(w, c) in bow.entries() {
                        let c = T::of(c as f64);
                        nll = nll - c * lp[w];
                        d_logits[w] = d_logits[w] - c;
                    }
                    recon = recon + nll;
                    let d_beta = &mut grads.views[v].decoder.as_mut().expect("text view").beta;
                    d_beta.add_outer(T::one(), &theta, &d_logits);
                    d_theta = dec.beta.matvec(&d_logits)?;
                }
            }

            prior = prior + prior_kl(&trace.post, config);
            let d_mu: Vec<T> = (0..k)
                .map(|i| (trace.post.mu[i] - prior_mean[i]) / prior_var[i])
                .collect();
            let d_logvar: Vec<T> = (0..k)
                .map(|i| T::half() * (trace.post.logvar[i].exp() / prior_var[i] - T::one()))
                .collect();

            row.push(ItemState {
                trace,
                sigma,
                theta,
                d_mu,
                d_logvar,
                d_theta,
            });
        }

        // KL(q_a ‖ q_b) over ordered pairs
        let n = row.len();
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                pairwise = pairwise + pairwise_gaussian_kl(&row[a].trace.post, &row[b].trace.post)?;
                for i in 0..k {
                    let (mu_a, lv_a) = (row[a].trace.post.mu[i], row[a].trace.post.logvar[i]);
                    let (mu_b, lv_b) = (row[b].trace.post.mu[i], row[b].trace.post.logvar[i]);
                    let var_b = lv_b.exp();
                    let diff = mu_a - mu_b;
                    let ratio = lv_a.exp() / var_b;
                    row[a].d_mu[i] = row[a].d_mu[i] + diff / var_b;
                    row[b].d_mu[i] = row[b].d_mu[i] - diff / var_b;
                    row[a].d_logvar[i] = row[a].d_logvar[i] + T::half() * (ratio - T::one());
                    row[b].d_logvar[i] =
                        row[b].d_logvar[i] + T::half() * (T::one() - ratio - diff * diff / var_b);
                }
            }
        }
        states.push(row);
    }

    let thetas: Vec<Vec<Vec<T>>> = states
        .iter()
        .map(|row| row.iter().map(|s| s.theta.clone()).collect())
        .collect();
    let (contrastive, d_thetas_nce) =
        infonce_batch_with_grad(&thetas, config.temperature, config.include_self_pairs);
    let weight = config.contrastive_weight;

    for ((row, d_row), (tuple, eps)) in states
        .iter_mut()
        .zip(&d_thetas_nce)
        .zip(batch.tuples.iter().zip(noise))
    {
        for (v, ((state, d_nce), (item, e))) in row.iter_mut().zip(d_row).zip(tuple.iter().zip(eps)).enumerate() {
            for (dt, &g) in state.d_theta.iter_mut().zip(d_nce) {
                *dt = *dt + weight * g;
            }
            // softmax: ∂z = θ ⊙ (∂θ − ⟨∂θ, θ⟩)
            let inner = state
                .d_theta
                .iter()
                .zip(&state.theta)
                .fold(T::zero(), |acc, (&g, &t)| acc + g * t);
            for i in 0..k {
                let dz = state.theta[i] * (state.d_theta[i] - inner);
                state.d_mu[i] = state.d_mu[i] + dz;
                state.d_logvar[i] = state.d_logvar[i] + dz * e[i] * state.sigma[i] * T::half();
            }
            encoder_backward(
                &params.views[v].encoder,
                &mut grads.views[v].encoder,
                &state.trace,
                item.x,
                &state.d_mu,
                &state.d_logvar,
            )?;
        }
    }

    Ok((
        LossBreakdown::new(recon, prior, pairwise, contrastive, weight),
        grads,
    ))
}

fn encoder_backward<T: Scalar>(
    enc: &EncoderParams<T>,
    grad: &mut EncoderParams<T>,
    trace: &EncoderTrace<T>,
    x: &[T],
    d_mu: &[T],
    d_logvar: &[T],
) -> Result<()> {
    grad.w_mu.add_outer(T::one(), d_mu, &trace.hidden);
    grad.w_logvar.add_outer(T::one(), d_logvar, &trace.hidden);
    for (g, &d) in grad.b_mu.iter_mut().zip(d_mu) {
        *g = *g + d;
    }
    for (g, &d) in grad.b_logvar.iter_mut().zip(d_logvar) {
        *g = *g + d;
    }
    let from_mu = enc.w_mu.matvec_t(d_mu)?;
    let from_lv = enc.w_logvar.matvec_t(d_logvar)?;
    let d_pre: Vec<T> = from_mu
        .iter()
        .zip(&from_lv)
        .zip(&trace.pre)
        .map(|((&a, &b), &p)| (a + b) * logistic(p))
        .collect();
    grad.w1.add_outer(T::one(), &d_pre, x);
    for (g, &d) in grad.b1.iter_mut().zip(&d_pre) {
        *g = *g + d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BowVector, ViewSpec, Vocabulary};
    use crate::model::{init_params, total_loss, BatchItem};
    use crate::numkit::{finite_difference_gradient, sample_standard_normal, SeededRng};

    struct Fixture {
        params: ModelParams<f64>,
        xs: Vec<Vec<Vec<f64>>>,
        bows: Vec<Vec<Option<BowVector>>>,
        noise: Noise<f64>,
        config: ModelConfig<f64>,
    }

    impl Fixture {
        fn batch(&self) -> Batch<'_, f64> {
            Batch {
                tuples: self
                    .xs
                    .iter()
                    .zip(&self.bows)
                    .map(|(xs, bows)| {
                        xs.iter()
                            .zip(bows)
                            .map(|(x, b)| BatchItem { x, bow: b.as_ref() })
                            .collect()
                    })
                    .collect(),
            }
        }
    }

    // K=5, V=20, D=8, hidden=6, N=4 tuples, two text views and one image view
    fn fixture(seed: u64, weight: f64) -> Fixture {
        let k = 5;
        let mut config = ModelConfig::<f64>::new(k);
        config.hidden_dim = 6;
        config.contrastive_weight = weight;
        let vocab = Vocabulary::from_tokens((0..20).map(|i| format!("w{i}")).collect()).unwrap();
        let specs = [
            ViewSpec::text("en", 8, vocab.clone()),
            ViewSpec::text("de", 8, vocab),
            ViewSpec::image("img", 8),
        ];
        let mut params = init_params(&config, &specs, seed).unwrap();
        let mut rng = SeededRng::new(seed + 100);
        // move biases off zero so every path is exercised
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += 0.3 * rng.standard_normal_pair().0;
            }
        }
        let xs = (0..4)
            .map(|_| (0..3).map(|_| sample_standard_normal(&mut rng, 8)).collect())
            .collect();
        let bows = (0..4)
            .map(|_| {
                (0..3)
                    .map(|v| {
                        (v < 2).then(|| {
                            BowVector::from_pairs((0..6).map(|_| (rng.below(20), 1 + rng.below(3) as u32)))
                        })
                    })
                    .collect()
            })
            .collect();
        let noise = (0..4)
            .map(|_| (0..3).map(|_| sample_standard_normal(&mut rng, k)).collect())
            .collect();
        Fixture { params, xs, bows, noise, config }
    }

    fn check_against_fd(fx: &Fixture) {
        let batch = fx.batch();
        let (breakdown, grads) = backward(&fx.params, &batch, &fx.noise, &fx.config).unwrap();
        let forward = total_loss(&fx.params, &batch, &fx.noise, &fx.config).unwrap();
        assert!((breakdown.total - forward.total).abs() <= 1e-9 * forward.total.abs().max(1.0));

        let labels = fx.params.tensor_labels();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (g, label) in labels.iter().enumerate() {
            let x0 = fx.params.tensors()[g].to_vec();
            let fd = finite_difference_gradient(
                |x: &[f64]| {
                    let mut p = fx.params.clone();
                    p.tensors_mut()[g].copy_from_slice(x);
                    total_loss(&p, &batch, &fx.noise, &fx.config).unwrap().total
                },
                &x0,
                1e-5,
            );
            let diff: f64 = fd.iter().zip(&analytic[g]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
            assert!(diff / scale <= 1e-4, "{label}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn matches_finite_differences() {
        check_against_fd(&fixture(3, 50.0));
        check_against_fd(&fixture(4, 0.0));
    }

    #[test]
    fn zero_contrastive_weight_decouples_tuples() {
        let fx = fixture(5, 0.0);
        let (_, full) = backward(&fx.params, &fx.batch(), &fx.noise, &fx.config).unwrap();
        // gradient of the batch equals the sum of per-tuple gradients
        let mut summed = fx.params.zeros_like();
        let batch = fx.batch();
        for i in 0..batch.len() {
            let single = Batch { tuples: vec![batch.tuples[i].clone()] };
            let (_, g) = backward(&fx.params, &single, &vec![fx.noise[i].clone()], &fx.config).unwrap();
            for (acc, part) in summed.tensors_mut().into_iter().zip(g.tensors()) {
                acc.iter_mut().zip(part).for_each(|(a, &b)| *a += b);
            }
        }
        for (a, b) in full.tensors().iter().zip(summed.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn empty_bows_give_zero_decoder_gradient() {
        let mut fx = fixture(6, 50.0);
        for row in &mut fx.bows {
            for b in row.iter_mut().take(2) {
                *b = Some(BowVector::default());
            }
        }
        let (loss, g) = backward(&fx.params, &fx.batch(), &fx.noise, &fx.config).unwrap();
        assert_eq!(loss.recon_nll, 0.0);
        for v in &g.views {
            if let Some(d) = &v.decoder {
                assert!(d.beta.data().iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn identical_views_have_no_pairwise_term() {
        let mut fx = fixture(7, 0.0);
        let shared = fx.params.views[0].clone();
        fx.params.views[1].encoder = shared.encoder.clone();
        fx.params.views[1].decoder = shared.decoder.clone();
        fx.params.views.truncate(2);
        for i in 0..4 {
            fx.xs[i].truncate(2);
            fx.xs[i][1] = fx.xs[i][0].clone();
            fx.bows[i].truncate(2);
            fx.bows[i][1] = fx.bows[i][0].clone();
            fx.noise[i].truncate(2);
            fx.noise[i][1] = fx.noise[i][0].clone();
        }
        let (loss, with_pairs) = backward(&fx.params, &fx.batch(), &fx.noise, &fx.config).unwrap();
        assert_eq!(loss.pairwise_kl, 0.0);
        // the same gradient as two independent single-view models
        let mut single = fx.clone_single_view();
        single.params.views[0].name = "en".into();
        let (_, alone) = backward(&single.params, &single.batch(), &single.noise, &single.config).unwrap();
        for (a, b) in with_pairs.tensors()[..7].iter().zip(alone.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    impl Fixture {
        fn clone_single_view(&self) -> Fixture {
            let mut params = self.params.clone();
            params.views.truncate(1);
            Fixture {
                params,
                xs: self.xs.iter().map(|r| r[..1].to_vec()).collect(),
                bows: self.bows.iter().map(|r| r[..1].to_vec()).collect(),
                noise: self.noise.iter().map(|r| r[..1].to_vec()).collect(),
                config: self.config.clone(),
            }
        }
    }
}
