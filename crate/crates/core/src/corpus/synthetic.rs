//! Planted-topic comparable corpus.
//!
//! Per language `l`, topic-word distributions `φ*_l` are drawn from a
//! symmetric Dirichlet(0.05); every tuple gets `θ* ~ Dirichlet(0.2)`. Text
//! documents have Poisson(λ) length and each word picks a topic from `θ*`
//! then a word from that topic. Every view embeds the tuple as
//! `A_v θ* + 0.1·N(0, I)`; image views additionally add `δ·u` for a fixed
//! random unit vector `u`.
//!
//! Independent streams are derived from the seed for topics (`"phi"`),
//! proportions (`"theta"`), projections (`"projection"`), documents
//! (`"docs"`) and embedding noise (`"noise"`).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::{Gamma, Poisson};

use crate::error::{Error, Result};
use crate::numkit::{sample_standard_normal, Matrix, SeededRng};

use super::{BowVector, TupleDataset, ViewData, ViewSpec, Vocabulary};

const TOPIC_WORD_CONCENTRATION: f64 = 0.05;
const DOC_TOPIC_CONCENTRATION: f64 = 0.2;
const EMBEDDING_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub languages: usize,
    pub image_views: usize,
    pub tuples: usize,
    pub topics: usize,
    pub vocab_size: usize,
    pub dim: usize,
    pub doc_len: f64,
    pub modality_offset: f64,
    /// All views share one projection `A` (like a joint multilingual
    /// encoder); otherwise every view draws its own.
    pub shared_projection: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            languages: 2,
            image_views: 0,
            tuples: 500,
            topics: 10,
            vocab_size: 200,
            dim: 32,
            doc_len: 60.0,
            modality_offset: 0.0,
            shared_projection: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("languages", self.languages),
            ("tuples", self.tuples),
            ("topics", self.topics),
            ("vocab_size", self.vocab_size),
            ("dim", self.dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.doc_len > 0.0 && self.doc_len.is_finite()) {
            return Err(Error::InvalidConfig("doc_len must be positive".into()));
        }
        if !self.modality_offset.is_finite() {
            return Err(Error::InvalidConfig("modality_offset must be finite".into()));
        }
        Ok(())
    }
}

/// Generator parameters, kept for oracle checks.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// tuples × topics
    pub theta: Matrix<f64>,
    /// Per language, topics × vocabulary.
    pub phi: Vec<Matrix<f64>>,
    /// Per view, dim × topics.
    pub projections: Vec<Matrix<f64>>,
    pub offset_direction: Vec<f64>,
}

pub fn language_name(l: usize) -> String {
    format!("lang{l}")
}

pub fn image_name(m: usize) -> String {
    format!("image{m}")
}

fn dirichlet(rng: &mut SeededRng, gamma: &Gamma<f64>, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // every draw underflowed; fall back to a random vertex
        let hot = rng.below(k);
        v.iter_mut().enumerate().for_each(|(i, x)| *x = (i == hot) as u8 as f64);
    }
    v
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(TupleDataset<f64>, GroundTruth)> {
    cfg.validate()?;
    let k = cfg.topics;
    let v = cfg.vocab_size;
    let d = cfg.dim;
    let t = cfg.tuples;

    let mut phi_rng = SeededRng::derived(cfg.seed, "phi");
    let word_gamma = Gamma::new(TOPIC_WORD_CONCENTRATION, 1.0).unwrap();
    let phi: Vec<Matrix<f64>> = (0..cfg.languages)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut phi_rng, &word_gamma, v)).collect();
            Matrix::from_rows(&rows)
        })
        .collect::<Result<_>>()?;

    let mut theta_rng = SeededRng::derived(cfg.seed, "theta");
    let topic_gamma = Gamma::new(DOC_TOPIC_CONCENTRATION, 1.0).unwrap();
    let theta_rows: Vec<Vec<f64>> = (0..t).map(|_| dirichlet(&mut theta_rng, &topic_gamma, k)).collect();
    let theta = Matrix::from_rows(&theta_rows)?;

    let n_views = cfg.languages + cfg.image_views;
    let mut proj_rng = SeededRng::derived(cfg.seed, "projection");
    let mut draw_projection = || Matrix::new(d, k, sample_standard_normal(&mut proj_rng, d * k));
    let projections: Vec<Matrix<f64>> = if cfg.shared_projection {
        let a = draw_projection()?;
        vec![a; n_views]
    } else {
        (0..n_views).map(|_| draw_projection()).collect::<Result<_>>()?
    };
    let mut u: Vec<f64> = sample_standard_normal(&mut proj_rng, d);
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= norm);

    let mut doc_rng = SeededRng::derived(cfg.seed, "docs");
    let poisson = Poisson::new(cfg.doc_len).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let topic_pickers: Vec<Option<WeightedIndex<f64>>> =
        theta_rows.iter().map(|row| WeightedIndex::new(row).ok()).collect();

    let mut noise_rng = SeededRng::derived(cfg.seed, "noise");
    let mut views = Vec::with_capacity(n_views);
    for view in 0..n_views {
        let is_text = view < cfg.languages;
        let a = &projections[view];
        let mut data = Vec::with_capacity(t * d);
        for theta_t in &theta_rows {
            let mut x = a.matvec(theta_t)?;
            let noise: Vec<f64> = sample_standard_normal(&mut noise_rng, d);
            for ((xi, ni), ui) in x.iter_mut().zip(&noise).zip(&u) {
                *xi += EMBEDDING_NOISE * ni;
                if !is_text {
                    *xi += cfg.modality_offset * ui;
                }
            }
            data.extend(x);
        }
        let embeddings = Matrix::new(t, d, data)?;

        if is_text {
            let l = view;
            let word_pickers: Vec<WeightedIndex<f64>> = (0..k)
                .map(|topic| WeightedIndex::new(phi[l].row(topic)).expect("topic rows are normalised"))
                .collect();
            let bows: Vec<BowVector> = topic_pickers
                .iter()
                .map(|picker| {
                    let len = poisson.sample(&mut doc_rng) as usize;
                    let picker = picker.as_ref().expect("theta rows are normalised");
                    BowVector::from_pairs((0..len).map(|_| {
                        let topic = picker.sample(&mut doc_rng);
                        (word_pickers[topic].sample(&mut doc_rng), 1)
                    }))
                })
                .collect();
            let vocab = Vocabulary::from_tokens((0..v).map(|w| format!("l{l}_w{w:03}")).collect())?;
            views.push(ViewData {
                spec: ViewSpec::text(language_name(l), d, vocab),
                embeddings,
                bows: Some(bows),
            });
        } else {
            views.push(ViewData {
                spec: ViewSpec::image(image_name(view - cfg.languages), d),
                embeddings,
                bows: None,
            });
        }
    }

    Ok((
        TupleDataset::new(views)?,
        GroundTruth {
            theta,
            phi,
            projections,
            offset_direction: u,
        },
    ))
}
