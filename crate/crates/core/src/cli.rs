//! Command-line front end.
//!
//! Every failure maps to [`Error::exit_code`]; usage errors exit with 2.
//! All output files are written atomically.

use std::collections::HashSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::corpus::io::{load_bows, load_stopwords, save_bows, save_vocabulary};
use crate::corpus::{
    build_vocabulary, gen_synthetic, load_dataset, load_embeddings, save_dataset, to_bow, tokenize,
    SyntheticConfig, TupleDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    format_gold_tsv, load_theta_tsv, mean_gold_jsd, mrr, npmi_coherence, parse_gold_tsv, resolve_gold,
    save_theta_tsv, uap, NPMI_EPS,
};
use crate::fsio;
use crate::model::{infer_crossview_zeroshot, infer_theta, top_words, Architecture};
use crate::numkit::{Matrix, SeededRng};
use crate::pltm::{pltm_infer, pltm_train, PltmCorpus};
use crate::trainer::{load_model, save_model, train, ModelBundle};

#[derive(Debug, Parser)]
#[command(name = "m3l", version, about = "Multilingual and multimodal neural topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build vocabularies and BoW files from raw line-aligned documents.
    Preprocess {
        /// One document per line; repeat once per language.
        #[arg(long, required = true)]
        docs: Vec<PathBuf>,
        /// Stopword list; give none or one per language.
        #[arg(long)]
        stopwords: Vec<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        vocab_size: usize,
        /// Output names per language (default: file stem of each --docs).
        #[arg(long)]
        names: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic comparable corpus with its ground truth.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        languages: usize,
        #[arg(long, default_value_t = 0)]
        images: usize,
        #[arg(long, default_value_t = 500)]
        tuples: usize,
        /// Extra tuples written to a separate test split.
        #[arg(long, default_value_t = 0)]
        heldout: usize,
        #[arg(long, default_value_t = 10)]
        topics: usize,
        #[arg(long, default_value_t = 200)]
        vocab_size: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 60.0)]
        doc_len: f64,
        #[arg(long, default_value_t = 0.0)]
        modality_offset: f64,
        /// Draw a separate projection per view instead of one shared one.
        #[arg(long)]
        separate_projections: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, `key=value`; repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Loss history TSV (default: `<out>.history.tsv`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Topic distributions for the rows of an embedding file.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long)]
        out: PathBuf,
        /// Samples averaged per item; 0 is the deterministic softmax(μ).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Polylingual Gibbs baseline.
    Pltm {
        #[command(subcommand)]
        command: PltmCommand,
    },
    /// Cross-view retrieval scores from two θ files and a gold file.
    EvalRetrieval {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Mrr)]
        metric: Metric,
    },
    /// NPMI of a model's topics over a BoW corpus.
    EvalCoherence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bows: PathBuf,
        /// Text view whose topics are scored (default: the first one).
        #[arg(long)]
        view: Option<String>,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Top words per topic, and optionally θ for an embedding file.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        #[arg(long, requires = "view")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        view: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum PltmCommand {
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Receives `phi.<view>.tsv`, `theta.tsv` and `config.txt`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    Infer {
        /// Output directory of `pltm train`.
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fold in only this language's words.
        #[arg(long)]
        view: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Mrr,
    Uap,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn say(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Preprocess {
            docs,
            stopwords,
            vocab_size,
            names,
            out: dir,
        } => preprocess(&docs, &stopwords, vocab_size, &names, &dir, out),
        Command::GenSynth {
            out: dir,
            languages,
            images,
            tuples,
            heldout,
            topics,
            vocab_size,
            dim,
            doc_len,
            modality_offset,
            separate_projections,
            seed,
        } => {
            let cfg = SyntheticConfig {
                languages,
                image_views: images,
                tuples: tuples + heldout,
                topics,
                vocab_size,
                dim,
                doc_len,
                modality_offset,
                shared_projection: !separate_projections,
                seed,
            };
            gen_synth(&cfg, tuples, &dir, out)
        }
        Command::Train {
            data,
            config,
            overrides,
            out: model_path,
            history,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let ds: TupleDataset<f64> = load_dataset(&data)?;
            let (params, hist) = train(&ds, &cfg.model_config(), &cfg.train_config())?;
            let history = history.unwrap_or_else(|| sibling(&model_path, ".history.tsv"));
            let bundle = ModelBundle::from_training(params, &ds, cfg)?;
            save_model(&bundle, &model_path)?;
            fsio::write_atomic(&history, hist.to_tsv().as_bytes())?;
            let last = hist.epochs.last().expect("at least one epoch");
            say(out, &format!("epochs={} final_total={}", hist.epochs.len(), last.total))
        }
        Command::Infer {
            model,
            embeddings,
            view,
            out: path,
            samples,
            seed,
        } => {
            let bundle: ModelBundle<f64> = load_model(&model)?;
            let x: Matrix<f64> = load_embeddings(&embeddings)?;
            let thetas = infer_rows(&bundle, &view, &x, samples, seed)?;
            save_theta_tsv(&row_ids(thetas.len()), &thetas, &path)?;
            say(out, &format!("rows={}", thetas.len()))
        }
        Command::Pltm { command } => match command {
            PltmCommand::Train {
                data,
                config,
                overrides,
                out_dir,
            } => {
                let cfg = load_config(config.as_deref(), &overrides)?;
                let ds: TupleDataset<f64> = load_dataset(&data)?;
                let corpus = PltmCorpus::from_dataset(&ds)?;
                let model = pltm_train(&corpus, cfg.n_topics, &cfg.pltm_hyper(), cfg.seed)?;
                for (name, phi) in model.languages.iter().zip(&model.phi) {
                    let ids: Vec<String> = (0..phi.rows()).map(|k| format!("k{k}")).collect();
                    save_theta_tsv(&ids, &matrix_rows(phi), &out_dir.join(format!("phi.{name}.tsv")))?;
                }
                save_theta_tsv(&row_ids(model.theta.rows()), &matrix_rows(&model.theta), &out_dir.join("theta.tsv"))?;
                fsio::write_atomic(&out_dir.join("config.txt"), cfg.to_text().as_bytes())?;
                say(out, &format!("samples={} tuples={}", model.samples, model.theta.rows()))
            }
            PltmCommand::Infer {
                model_dir,
                data,
                view,
                out: path,
            } => {
                let cfg = RunConfig::parse(&fsio::read_text(&model_dir.join("config.txt"))?)?;
                let ds: TupleDataset<f64> = load_dataset(&data)?;
                let mut corpus = PltmCorpus::from_dataset(&ds)?;
                let phi = corpus
                    .languages
                    .iter()
                    .map(|name| {
                        let (_, rows) = load_theta_tsv(&model_dir.join(format!("phi.{name}.tsv")))?;
                        Matrix::from_rows(&rows)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(v) = &view {
                    let keep = corpus
                        .languages
                        .iter()
                        .position(|l| l == v)
                        .ok_or_else(|| Error::ViewNotFound(v.clone()))?;
                    for tuple in &mut corpus.docs {
                        for (l, words) in tuple.iter_mut().enumerate() {
                            if l != keep {
                                words.clear();
                            }
                        }
                    }
                }
                let theta = pltm_infer(&phi, &corpus, &cfg.pltm_hyper(), cfg.seed)?;
                save_theta_tsv(&row_ids(theta.rows()), &matrix_rows(&theta), &path)?;
                say(out, &format!("rows={}", theta.rows()))
            }
        },
        Command::EvalRetrieval {
            queries,
            candidates,
            gold,
            metric,
        } => {
            let (q_ids, q_rows) = load_theta_tsv(&queries)?;
            let (c_ids, c_rows) = load_theta_tsv(&candidates)?;
            let entries = parse_gold_tsv(&fsio::read_text(&gold)?)?;
            let (q_index, gold) = resolve_gold(&entries, &q_ids, &c_ids)?;
            let q: Vec<Vec<f64>> = q_index.iter().map(|&i| q_rows[i].clone()).collect();
            match metric {
                Metric::Mrr => {
                    let single: Vec<usize> = gold
                        .relevant
                        .iter()
                        .enumerate()
                        .map(|(i, r)| match r[..] {
                            [one] => Ok(one),
                            _ => Err(Error::Parse {
                                what: "gold TSV",
                                line: i + 1,
                                detail: "mrr needs exactly one relevant id per query".into(),
                            }),
                        })
                        .collect::<Result<_>>()?;
                    say(out, &format!("mrr={}", mrr(&q, &c_rows, &single)?))?;
                }
                Metric::Uap => say(out, &format!("uap={}", uap(&q, &c_rows, &gold)?))?,
            }
            say(out, &format!("mean_jsd={}", mean_gold_jsd(&q, &c_rows, &gold)?))
        }
        Command::EvalCoherence {
            model,
            bows,
            view,
            top_n,
        } => {
            let bundle: ModelBundle<f64> = load_model(&model)?;
            let v = match &view {
                Some(name) => bundle.params.view_index(name)?,
                None => bundle
                    .params
                    .views
                    .iter()
                    .position(|v| v.decoder.is_some())
                    .ok_or(Error::NoTextViews)?,
            };
            let (dec, vocab) = match (&bundle.params.views[v].decoder, &bundle.vocabularies[v]) {
                (Some(d), Some(voc)) => (d, voc),
                _ => return Err(Error::InvalidConfig(format!("view {} has no topics", bundle.params.views[v].name))),
            };
            let topics: Vec<Vec<usize>> = top_words(dec, vocab, top_n)?
                .iter()
                .map(|words| words.iter().map(|w| vocab.get(w).expect("word from vocabulary")).collect())
                .collect();
            let corpus = load_bows(&bows)?;
            let c = npmi_coherence(&topics, &corpus, NPMI_EPS)?;
            for (k, value) in c.per_topic.iter().enumerate() {
                say(out, &format!("topic\t{k}\t{value}"))?;
            }
            say(out, &format!("mean_npmi={}", c.mean))
        }
        Command::Export {
            model,
            out_dir,
            top_n,
            embeddings,
            view,
            samples,
        } => {
            let bundle: ModelBundle<f64> = load_model(&model)?;
            for (vp, vocab) in bundle.params.views.iter().zip(&bundle.vocabularies) {
                if let (Some(dec), Some(vocab)) = (&vp.decoder, vocab) {
                    let mut s = String::new();
                    for (k, words) in top_words(dec, vocab, top_n.min(vocab.len()))?.iter().enumerate() {
                        s.push_str(&format!("{k}\t{}\n", words.join("\t")));
                    }
                    fsio::write_atomic(&out_dir.join(format!("topics.{}.tsv", vp.name)), s.as_bytes())?;
                }
            }
            if let (Some(emb), Some(view)) = (embeddings, view) {
                let x: Matrix<f64> = load_embeddings(&emb)?;
                let thetas = infer_rows(&bundle, &view, &x, samples, None)?;
                save_theta_tsv(&row_ids(thetas.len()), &thetas, &out_dir.join(format!("theta.{view}.tsv")))?;
            }
            say(out, &format!("exported={}", out_dir.display()))
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn row_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn matrix_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Config file (if any) with `key=value` overrides applied in order.
fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::parse(&fsio::read_text(p)?)?,
        None => RunConfig::default(),
    };
    for (i, kv) in overrides.iter().enumerate() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
            what: "--set override",
            line: i + 1,
            detail: format!("expected key=value, got {kv:?}"),
        })?;
        cfg.set(k.trim(), v.trim(), i + 1)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// θ for every row of `x` through the network of `view`. A zero-shot
/// model routes views it was not trained on through its single encoder.
fn infer_rows(
    bundle: &ModelBundle<f64>,
    view: &str,
    x: &Matrix<f64>,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<Vec<Vec<f64>>> {
    let params = &bundle.params;
    let samples = samples.unwrap_or(bundle.config.inference_samples);
    let mut rng = SeededRng::derived(seed.unwrap_or(bundle.config.seed), "infer");
    let index = params.view_index(view);
    (0..x.rows())
        .map(|r| match (&index, params.architecture) {
            (Ok(v), _) => infer_theta(params, *v, x.row(r), samples, &mut rng),
            (Err(_), Architecture::Zeroshot) => infer_crossview_zeroshot(params, x.row(r), samples, &mut rng),
            (Err(_), Architecture::M3lContrast) => Err(Error::ViewNotFound(view.to_owned())),
        })
        .collect()
}

fn preprocess(
    docs: &[PathBuf],
    stopwords: &[PathBuf],
    vocab_size: usize,
    names: &[String],
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    if !stopwords.is_empty() && stopwords.len() != docs.len() {
        return Err(Error::InvalidConfig(format!(
            "got {} stopword files for {} languages",
            stopwords.len(),
            docs.len()
        )));
    }
    if !names.is_empty() && names.len() != docs.len() {
        return Err(Error::InvalidConfig(format!("got {} names for {} languages", names.len(), docs.len())));
    }
    let texts: Vec<Vec<String>> = docs.iter().map(|p| fsio::read_lines(p)).collect::<Result<_>>()?;
    let expected = texts[0].len();
    for (p, t) in docs.iter().zip(&texts) {
        if t.len() != expected {
            return Err(Error::LineCountMismatch {
                path: p.clone(),
                expected,
                actual: t.len(),
            });
        }
    }
    for (l, (path, lines)) in docs.iter().zip(&texts).enumerate() {
        let stop = match stopwords.get(l) {
            Some(p) => load_stopwords(p)?,
            None => HashSet::new(),
        };
        let tokens: Vec<Vec<String>> = lines.iter().map(|line| tokenize(line, &stop)).collect();
        let vocab = build_vocabulary(&tokens, vocab_size)?;
        let bows: Vec<_> = tokens.iter().map(|d| to_bow(d, &vocab)).collect();
        let name = match names.get(l) {
            Some(n) => n.clone(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("lang{l}")),
        };
        save_vocabulary(&vocab, &dir.join(format!("{name}.vocab")))?;
        save_bows(&bows, &dir.join(format!("{name}.bow.tsv")))?;
        say(out, &format!("{name}: vocab={} docs={}", vocab.len(), bows.len()))?;
    }
    Ok(())
}

fn gen_synth(cfg: &SyntheticConfig, train_tuples: usize, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let (ds, truth) = gen_synthetic(cfg)?;
    let truth_dir = dir.join("truth");
    for (l, phi) in truth.phi.iter().enumerate() {
        let ids: Vec<String> = (0..phi.rows()).map(|k| format!("k{k}")).collect();
        let name = &ds.view(l).spec.name;
        save_theta_tsv(&ids, &matrix_rows(phi), &truth_dir.join(format!("phi.{name}.tsv")))?;
    }
    let theta = matrix_rows(&truth.theta);
    let (eval_count, eval_dir) = if train_tuples < cfg.tuples {
        let (train, test) = ds.split_at(train_tuples)?;
        save_dataset(&train, &dir.join("train"))?;
        save_dataset(&test, &dir.join("test"))?;
        save_theta_tsv(&row_ids(train_tuples), &theta[..train_tuples], &truth_dir.join("theta.train.tsv"))?;
        let held = &theta[train_tuples..];
        save_theta_tsv(&row_ids(held.len()), held, &truth_dir.join("theta.test.tsv"))?;
        (test.tuple_count(), dir.join("test"))
    } else {
        save_dataset(&ds, dir)?;
        save_theta_tsv(&row_ids(theta.len()), &theta, &truth_dir.join("theta.tsv"))?;
        (ds.tuple_count(), dir.to_path_buf())
    };
    let gold: Vec<(String, Vec<String>)> = (0..eval_count).map(|i| (i.to_string(), vec![i.to_string()])).collect();
    fsio::write_atomic(&eval_dir.join("gold.tsv"), format_gold_tsv(&gold).as_bytes())?;
    say(out, &format!("tuples={} views={}", cfg.tuples, ds.n_views()))
}
