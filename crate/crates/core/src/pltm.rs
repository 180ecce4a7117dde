//! Polylingual topic model trained by collapsed Gibbs sampling.
//!
//! All languages of a tuple share one topic distribution; each language has
//! its own topic-word distributions. Resampling token `i` (word `w`,
//! language `l`, tuple `t`) with its own assignment removed from the counts:
//!
//! ```text
//! p(z = k) ∝ (n_tk + α) · (n_lkw + η) / (n_lk + η V_l)
//! ```
//!
//! Held-out tuples are folded in with `φ` frozen, so the conditional
//! becomes `(n_tk + α) · φ_lkw`.

use crate::corpus::{BowVector, TupleDataset};
use crate::error::{Error, Result};
use crate::numkit::{derive_seed, Matrix, Scalar, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct PltmHyper {
    pub alpha: f64,
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    /// Fold-in sweeps per held-out tuple.
    pub infer_sweeps: usize,
    /// Trailing fold-in sweeps whose θ estimates are averaged.
    pub infer_average: usize,
}

impl PltmHyper {
    /// Defaults for `k` topics: α = 50/K, η = 0.01, 1000 sweeps with 800
    /// burn-in and lag 10; fold-in runs 200 sweeps and averages the last 100.
    pub fn new(k: usize) -> Self {
        Self {
            alpha: 50.0 / k.max(1) as f64,
            eta: 0.01,
            iterations: 1000,
            burn_in: 800,
            sample_lag: 10,
            infer_sweeps: 200,
            infer_average: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("pltm alpha and eta must be positive");
        }
        if self.burn_in >= self.iterations {
            return bad("pltm burn_in must be smaller than iterations");
        }
        if self.sample_lag == 0 || self.iterations - self.burn_in < self.sample_lag {
            return bad("pltm sample_lag must be at least 1 and leave one sample after burn-in");
        }
        if self.infer_average == 0 || self.infer_average > self.infer_sweeps {
            return bad("pltm infer_average must be in 1..=infer_sweeps");
        }
        Ok(())
    }
}

/// Token streams of the text views: `docs[t][l]` lists the word indices of
/// language `l` in tuple `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PltmCorpus {
    pub languages: Vec<String>,
    pub vocab_sizes: Vec<usize>,
    pub docs: Vec<Vec<Vec<usize>>>,
}

impl PltmCorpus {
    /// `bows[l][t]` is the bag of words of language `l` in tuple `t`.
    pub fn from_bows(languages: Vec<String>, vocab_sizes: Vec<usize>, bows: &[&[BowVector]]) -> Result<Self> {
        if bows.is_empty() {
            return Err(Error::NoTextViews);
        }
        if languages.len() != bows.len() || vocab_sizes.len() != bows.len() {
            return Err(Error::dim("pltm languages", bows.len(), languages.len().min(vocab_sizes.len())));
        }
        let n = bows[0].len();
        for (l, b) in bows.iter().enumerate() {
            if b.len() != n {
                return Err(Error::RowCountMismatch {
                    view: languages[l].clone(),
                    expected: n,
                    actual: b.len(),
                });
            }
            if let Some(i) = b.iter().filter_map(BowVector::max_index).max().filter(|&i| i >= vocab_sizes[l]) {
                return Err(Error::IndexOutOfRange {
                    what: format!("vocabulary of {}", languages[l]),
                    index: i,
                    size: vocab_sizes[l],
                });
            }
        }
        let docs = (0..n)
            .map(|t| bows.iter().map(|b| b[t].tokens().collect()).collect())
            .collect();
        Ok(Self {
            languages,
            vocab_sizes,
            docs,
        })
    }

    /// Every text view of `ds`, in dataset order.
    pub fn from_dataset<T: Scalar>(ds: &TupleDataset<T>) -> Result<Self> {
        let text: Vec<_> = ds.views().iter().filter(|v| v.spec.is_text()).collect();
        if text.is_empty() {
            return Err(Error::NoTextViews);
        }
        let bows: Vec<&[BowVector]> = text
            .iter()
            .map(|v| v.bows.as_deref().ok_or_else(|| Error::MissingBow(v.spec.name.clone())))
            .collect::<Result<_>>()?;
        Self::from_bows(
            text.iter().map(|v| v.spec.name.clone()).collect(),
            text.iter().map(|v| v.spec.vocab_size()).collect(),
            &bows,
        )
    }

    pub fn n_languages(&self) -> usize {
        self.vocab_sizes.len()
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().flatten().map(Vec::len).sum()
    }
}

/// Assignments and the count tables of the collapsed sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PltmState {
    pub n_topics: usize,
    pub vocab_sizes: Vec<usize>,
    /// `z[t][l][i]`, parallel to [`PltmCorpus::docs`].
    pub z: Vec<Vec<Vec<usize>>>,
    /// Tuple × topic, row-major.
    pub n_tk: Vec<u32>,
    /// Per language, topic × word, row-major.
    pub n_lkw: Vec<Vec<u32>>,
    /// Per language, topic totals.
    pub n_lk: Vec<Vec<u32>>,
}

impl PltmState {
    fn empty(n_topics: usize, vocab_sizes: &[usize], n_tuples: usize) -> Self {
        Self {
            n_topics,
            vocab_sizes: vocab_sizes.to_vec(),
            z: Vec::new(),
            n_tk: vec![0; n_tuples * n_topics],
            n_lkw: vocab_sizes.iter().map(|&v| vec![0; n_topics * v]).collect(),
            n_lk: vocab_sizes.iter().map(|_| vec![0; n_topics]).collect(),
        }
    }

    fn add(&mut self, t: usize, l: usize, w: usize, k: usize, sign: i32) {
        let v = self.vocab_sizes[l];
        let bump = |c: &mut u32| *c = c.checked_add_signed(sign).expect("count underflow");
        bump(&mut self.n_tk[t * self.n_topics + k]);
        bump(&mut self.n_lkw[l][k * v + w]);
        bump(&mut self.n_lk[l][k]);
    }

    /// Recomputes every count table from `z` and compares.
    pub fn counts_consistent(&self, corpus: &PltmCorpus) -> bool {
        let mut fresh = PltmState::empty(self.n_topics, &self.vocab_sizes, corpus.docs.len());
        for (t, langs) in corpus.docs.iter().enumerate() {
            for (l, words) in langs.iter().enumerate() {
                for (&w, &k) in words.iter().zip(&self.z[t][l]) {
                    fresh.add(t, l, w, k, 1);
                }
            }
        }
        let tuple_totals_ok = corpus.docs.iter().enumerate().all(|(t, langs)| {
            let n: usize = langs.iter().map(Vec::len).sum();
            self.n_tk[t * self.n_topics..(t + 1) * self.n_topics].iter().map(|&c| c as usize).sum::<usize>() == n
        });
        let word_totals_ok = self.n_lkw.iter().zip(&self.n_lk).zip(&self.vocab_sizes).all(|((kw, k), &v)| {
            (0..self.n_topics).all(|topic| kw[topic * v..(topic + 1) * v].iter().sum::<u32>() == k[topic])
        });
        tuple_totals_ok
            && word_totals_ok
            && fresh.n_tk == self.n_tk
            && fresh.n_lkw == self.n_lkw
            && fresh.n_lk == self.n_lk
    }
}

/// Uniformly random topic per token, counts rebuilt from the assignments.
pub fn pltm_init(corpus: &PltmCorpus, n_topics: usize, seed: u64) -> Result<PltmState> {
    if corpus.n_languages() == 0 {
        return Err(Error::NoTextViews);
    }
    if n_topics < 2 {
        return Err(Error::InvalidConfig("pltm needs at least 2 topics".into()));
    }
    let mut rng = SeededRng::derived(seed, "pltm-init");
    let mut state = PltmState::empty(n_topics, &corpus.vocab_sizes, corpus.docs.len());
    for (t, langs) in corpus.docs.iter().enumerate() {
        let mut zt = Vec::with_capacity(langs.len());
        for (l, words) in langs.iter().enumerate() {
            let zl: Vec<usize> = words.iter().map(|_| rng.below(n_topics)).collect();
            for (&w, &k) in words.iter().zip(&zl) {
                state.add(t, l, w, k, 1);
            }
            zt.push(zl);
        }
        state.z.push(zt);
    }
    Ok(state)
}

/// Unnormalised conditional over topics for a token of word `w` in
/// language `l` of tuple `t`. The token's own assignment must already be
/// removed from the counts.
pub fn gibbs_conditional(state: &PltmState, hyper: &PltmHyper, t: usize, l: usize, w: usize) -> Vec<f64> {
    let mut p = vec![0.0; state.n_topics];
    fill_conditional(state, hyper, t, l, w, &mut p);
    p
}

fn fill_conditional(state: &PltmState, hyper: &PltmHyper, t: usize, l: usize, w: usize, p: &mut [f64]) {
    let k = state.n_topics;
    let v = state.vocab_sizes[l];
    let eta_v = hyper.eta * v as f64;
    let n_t = &state.n_tk[t * k..(t + 1) * k];
    let n_kw = &state.n_lkw[l];
    let n_k = &state.n_lk[l];
    for topic in 0..k {
        p[topic] = (n_t[topic] as f64 + hyper.alpha) * (n_kw[topic * v + w] as f64 + hyper.eta)
            / (n_k[topic] as f64 + eta_v);
    }
}

/// Draws an index with probability proportional to `weights`.
fn sample_index(rng: &mut SeededRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// One full sweep over every token of the corpus.
pub fn gibbs_sweep(state: &mut PltmState, corpus: &PltmCorpus, hyper: &PltmHyper, rng: &mut SeededRng) {
    let mut p = vec![0.0; state.n_topics];
    for (t, langs) in corpus.docs.iter().enumerate() {
        for (l, words) in langs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let old = state.z[t][l][i];
                state.add(t, l, w, old, -1);
                fill_conditional(state, hyper, t, l, w, &mut p);
                let new = sample_index(rng, &p);
                state.add(t, l, w, new, 1);
                state.z[t][l][i] = new;
            }
        }
    }
}

/// Averaged posterior estimates of a trained sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PltmModel {
    pub languages: Vec<String>,
    /// Per language, K × V_l topic-word distributions.
    pub phi: Vec<Matrix<f64>>,
    /// Tuples × K.
    pub theta: Matrix<f64>,
    pub state: PltmState,
    pub samples: usize,
}

pub fn pltm_train(corpus: &PltmCorpus, n_topics: usize, hyper: &PltmHyper, seed: u64) -> Result<PltmModel> {
    pltm_train_observed(corpus, n_topics, hyper, seed, |_, _| {})
}

/// [`pltm_train`] calling `observe(sweep, state)` after every sweep
/// (sweeps numbered from 1).
pub fn pltm_train_observed(
    corpus: &PltmCorpus,
    n_topics: usize,
    hyper: &PltmHyper,
    seed: u64,
    mut observe: impl FnMut(usize, &PltmState),
) -> Result<PltmModel> {
    hyper.validate()?;
    let mut state = pltm_init(corpus, n_topics, seed)?;
    let mut rng = SeededRng::derived(seed, "pltm-gibbs");
    let k = n_topics;
    let n_tuples = corpus.docs.len();
    let mut phi: Vec<Matrix<f64>> = corpus.vocab_sizes.iter().map(|&v| Matrix::zeros(k, v)).collect();
    let mut theta = Matrix::zeros(n_tuples, k);
    let mut samples = 0;
    for sweep in 1..=hyper.iterations {
        gibbs_sweep(&mut state, corpus, hyper, &mut rng);
        observe(sweep, &state);
        if sweep > hyper.burn_in && (sweep - hyper.burn_in) % hyper.sample_lag == 0 {
            samples += 1;
            for (l, acc) in phi.iter_mut().enumerate() {
                let v = corpus.vocab_sizes[l];
                let denom_add = hyper.eta * v as f64;
                for topic in 0..k {
                    let denom = state.n_lk[l][topic] as f64 + denom_add;
                    let counts = &state.n_lkw[l][topic * v..(topic + 1) * v];
                    for (a, &c) in acc.row_mut(topic).iter_mut().zip(counts) {
                        *a += (c as f64 + hyper.eta) / denom;
                    }
                }
            }
            let k_alpha = k as f64 * hyper.alpha;
            for t in 0..n_tuples {
                let counts = &state.n_tk[t * k..(t + 1) * k];
                let n: u32 = counts.iter().sum();
                for (a, &c) in theta.row_mut(t).iter_mut().zip(counts) {
                    *a += (c as f64 + hyper.alpha) / (n as f64 + k_alpha);
                }
            }
        }
    }
    let inv = 1.0 / samples as f64;
    let phi = phi.into_iter().map(|m| m.map(|x| x * inv)).collect();
    let theta = theta.map(|x| x * inv);
    Ok(PltmModel {
        languages: corpus.languages.clone(),
        phi,
        theta,
        state,
        samples,
    })
}

/// Folds one held-out tuple into frozen topics. `tuple[l]` holds the word
/// indices of language `l`. Runs `infer_sweeps` sweeps and averages
/// `(n_k + α) / (N + Kα)` over the last `infer_average`; an empty tuple
/// yields the uniform distribution.
pub fn pltm_infer_tuple(phi: &[Matrix<f64>], tuple: &[Vec<usize>], hyper: &PltmHyper, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if tuple.len() != phi.len() {
        return Err(Error::dim("pltm languages", phi.len(), tuple.len()));
    }
    let k = phi.first().map_or(0, |m| m.rows());
    if k == 0 {
        return Err(Error::NoTextViews);
    }
    for (words, p) in tuple.iter().zip(phi) {
        if let Some(&w) = words.iter().find(|&&w| w >= p.cols()) {
            return Err(Error::IndexOutOfRange {
                what: "pltm vocabulary".into(),
                index: w,
                size: p.cols(),
            });
        }
    }
    let n_tokens: usize = tuple.iter().map(Vec::len).sum();
    if n_tokens == 0 {
        return Ok(vec![1.0 / k as f64; k]);
    }
    let mut counts = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = tuple
        .iter()
        .map(|words| {
            words
                .iter()
                .map(|_| {
                    let topic = rng.below(k);
                    counts[topic] += 1;
                    topic
                })
                .collect()
        })
        .collect();
    let mut p = vec![0.0; k];
    let mut acc = vec![0.0; k];
    let denom = n_tokens as f64 + k as f64 * hyper.alpha;
    let start_avg = hyper.infer_sweeps - hyper.infer_average;
    for sweep in 0..hyper.infer_sweeps {
        for (l, words) in tuple.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                counts[z[l][i]] -= 1;
                for topic in 0..k {
                    p[topic] = (counts[topic] as f64 + hyper.alpha) * phi[l][(topic, w)];
                }
                let new = sample_index(rng, &p);
                counts[new] += 1;
                z[l][i] = new;
            }
        }
        if sweep >= start_avg {
            for (a, &c) in acc.iter_mut().zip(&counts) {
                *a += (c as f64 + hyper.alpha) / denom;
            }
        }
    }
    let n = hyper.infer_average as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Fold-in for every tuple of `corpus`. Tuple `t` draws from its own
/// stream derived from `seed` and `t`, so results do not depend on order.
pub fn pltm_infer(phi: &[Matrix<f64>], corpus: &PltmCorpus, hyper: &PltmHyper, seed: u64) -> Result<Matrix<f64>> {
    hyper.validate()?;
    let k = phi.first().map_or(0, |m| m.rows());
    let mut out = Vec::with_capacity(corpus.docs.len() * k);
    for (t, tuple) in corpus.docs.iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(seed, &format!("pltm-fold-in/{t}")));
        out.extend(pltm_infer_tuple(phi, tuple, hyper, &mut rng)?);
    }
    if corpus.docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Matrix::new(corpus.docs.len(), k, out)
}
