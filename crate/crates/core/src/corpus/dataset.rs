use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsio;
use crate::numkit::{Matrix, Scalar};

use super::io::{
    load_alignment, load_bows, load_embeddings, load_vocabulary, save_bows, save_embeddings,
    save_vocabulary,
};
use super::{BowVector, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Text),
            1 => Some(Modality::Image),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            other => Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
        }
    }
}

/// One language or image modality of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub name: String,
    pub modality: Modality,
    pub embedding_dim: usize,
    pub vocabulary: Option<Vocabulary>,
}

impl ViewSpec {
    pub fn text(name: impl Into<String>, embedding_dim: usize, vocabulary: Vocabulary) -> Self {
        Self {
            name: name.into(),
            modality: Modality::Text,
            embedding_dim,
            vocabulary: Some(vocabulary),
        }
    }

    pub fn image(name: impl Into<String>, embedding_dim: usize) -> Self {
        Self {
            name: name.into(),
            modality: Modality::Image,
            embedding_dim,
            vocabulary: None,
        }
    }

    pub fn is_text(&self) -> bool {
        self.modality == Modality::Text
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.as_ref().map_or(0, Vocabulary::len)
    }
}

#[derive(Debug, Clone)]
pub struct ViewData<T> {
    pub spec: ViewSpec,
    /// One row per tuple.
    pub embeddings: Matrix<T>,
    /// One document per tuple; present exactly for text views.
    pub bows: Option<Vec<BowVector>>,
}

/// Aligned multi-view corpus: row `t` of every view belongs to tuple `t`.
#[derive(Debug, Clone)]
pub struct TupleDataset<T> {
    views: Vec<ViewData<T>>,
    tuple_count: usize,
}

impl<T: Scalar> TupleDataset<T> {
    pub fn new(views: Vec<ViewData<T>>) -> Result<Self> {
        let tuple_count = views.first().map_or(0, |v| v.embeddings.rows());
        for v in &views {
            let name = &v.spec.name;
            if v.embeddings.rows() != tuple_count {
                return Err(Error::RowCountMismatch {
                    view: name.clone(),
                    expected: tuple_count,
                    actual: v.embeddings.rows(),
                });
            }
            if v.embeddings.cols() != v.spec.embedding_dim {
                return Err(Error::dim(
                    "view embedding dimension",
                    v.spec.embedding_dim,
                    v.embeddings.cols(),
                ));
            }
            match (v.spec.modality, &v.bows) {
                (Modality::Text, None) => return Err(Error::MissingBow(name.clone())),
                (Modality::Text, Some(bows)) => {
                    if v.spec.vocabulary.is_none() {
                        return Err(Error::MissingBow(name.clone()));
                    }
                    if bows.len() != tuple_count {
                        return Err(Error::RowCountMismatch {
                            view: name.clone(),
                            expected: tuple_count,
                            actual: bows.len(),
                        });
                    }
                    let size = v.spec.vocab_size();
                    if let Some(bad) = bows.iter().filter_map(BowVector::max_index).find(|&i| i >= size)
                    {
                        return Err(Error::IndexOutOfRange {
                            what: format!("vocabulary of view {name}"),
                            index: bad,
                            size,
                        });
                    }
                }
                (Modality::Image, Some(_)) => {
                    return Err(Error::InvalidConfig(format!(
                        "image view {name} must not carry bag-of-words data"
                    )))
                }
                (Modality::Image, None) => {}
            }
        }
        Ok(Self { views, tuple_count })
    }

    pub fn tuple_count(&self) -> usize {
        self.tuple_count
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[ViewData<T>] {
        &self.views
    }

    pub fn view(&self, i: usize) -> &ViewData<T> {
        &self.views[i]
    }

    pub fn specs(&self) -> Vec<ViewSpec> {
        self.views.iter().map(|v| v.spec.clone()).collect()
    }

    pub fn view_index(&self, name: &str) -> Result<usize> {
        self.views
            .iter()
            .position(|v| v.spec.name == name)
            .ok_or_else(|| Error::ViewNotFound(name.to_owned()))
    }

    /// New dataset holding the given tuples, in the given order.
    pub fn subset(&self, tuples: &[usize]) -> Result<Self> {
        let views = self
            .views
            .iter()
            .map(|v| {
                let mut data = Vec::with_capacity(tuples.len() * v.embeddings.cols());
                for &t in tuples {
                    if t >= self.tuple_count {
                        return Err(Error::IndexOutOfRange {
                            what: "tuple".into(),
                            index: t,
                            size: self.tuple_count,
                        });
                    }
                    data.extend_from_slice(v.embeddings.row(t));
                }
                Ok(ViewData {
                    spec: v.spec.clone(),
                    embeddings: Matrix::new(tuples.len(), v.embeddings.cols(), data)?,
                    bows: v
                        .bows
                        .as_ref()
                        .map(|b| tuples.iter().map(|&t| b[t].clone()).collect()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(views)
    }

    /// Keeps only the named views, in the given order.
    pub fn select_views(&self, names: &[&str]) -> Result<Self> {
        let views = names
            .iter()
            .map(|n| self.view_index(n).map(|i| self.views[i].clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(views)
    }

    /// First `n` tuples and the remainder.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        let n = n.min(self.tuple_count);
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.tuple_count).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }
}

/// Builds a dataset from per-view row tables. Without `alignment`, row `i`
/// of every view is tuple `i`. With it, `alignment[t][v]` picks the row of
/// view `v` for tuple `t`, so one article row may appear in several tuples.
pub fn assemble_dataset<T: Scalar>(
    specs: Vec<ViewSpec>,
    embeddings: Vec<Matrix<T>>,
    bows: Vec<Option<Vec<BowVector>>>,
    alignment: Option<&[Vec<usize>]>,
) -> Result<TupleDataset<T>> {
    if specs.len() != embeddings.len() || specs.len() != bows.len() {
        return Err(Error::dim("views", specs.len(), embeddings.len().min(bows.len())));
    }
    if specs.is_empty() {
        return Err(Error::EmptyInput("dataset has no views"));
    }
    for ((spec, emb), bow) in specs.iter().zip(&embeddings).zip(&bows) {
        if emb.cols() != spec.embedding_dim {
            return Err(Error::dim("view embedding dimension", spec.embedding_dim, emb.cols()));
        }
        match (spec.is_text(), bow) {
            (true, None) => return Err(Error::MissingBow(spec.name.clone())),
            (true, Some(b)) if b.len() != emb.rows() => {
                return Err(Error::RowCountMismatch {
                    view: spec.name.clone(),
                    expected: emb.rows(),
                    actual: b.len(),
                })
            }
            _ => {}
        }
    }

    let views = match alignment {
        None => specs
            .into_iter()
            .zip(embeddings)
            .zip(bows)
            .map(|((spec, embeddings), bows)| ViewData {
                spec,
                embeddings,
                bows,
            })
            .collect(),
        Some(rows) => {
            if rows.is_empty() {
                return Err(Error::EmptyInput("alignment file"));
            }
            let mut views = Vec::with_capacity(specs.len());
            for (v, ((spec, emb), bow)) in specs.into_iter().zip(embeddings).zip(bows).enumerate() {
                let mut picked = Vec::with_capacity(rows.len());
                for row in rows {
                    let r = *row.get(v).ok_or_else(|| Error::dim("alignment columns", v + 1, row.len()))?;
                    if r >= emb.rows() {
                        return Err(Error::IndexOutOfRange {
                            what: format!("rows of view {}", spec.name),
                            index: r,
                            size: emb.rows(),
                        });
                    }
                    picked.push(r);
                }
                let data = picked.iter().flat_map(|&r| emb.row(r).iter().copied()).collect();
                views.push(ViewData {
                    embeddings: Matrix::new(picked.len(), emb.cols(), data)?,
                    bows: bow.map(|b| picked.iter().map(|&r| b[r].clone()).collect()),
                    spec,
                });
            }
            views
        }
    };
    TupleDataset::new(views)
}

/// Manifest file name inside a dataset directory.
pub const MANIFEST: &str = "views.tsv";
/// Optional alignment file inside a dataset directory.
pub const ALIGNMENT: &str = "alignment.tsv";

/// One manifest line: `name  modality  embeddings  vocab  bow`, tab separated,
/// with `-` for the vocabulary and BoW of image views. Paths are relative to
/// the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSource {
    pub name: String,
    pub modality: Modality,
    pub embeddings: PathBuf,
    pub vocab: Option<PathBuf>,
    pub bow: Option<PathBuf>,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ViewSource>> {
    let path = dir.join(MANIFEST);
    let opt = |s: &str| (s != "-").then(|| dir.join(s));
    fsio::read_lines(&path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::Parse {
                    what: "dataset manifest",
                    line: i + 1,
                    detail: format!("expected 5 fields, got {}", f.len()),
                });
            }
            Ok(ViewSource {
                name: f[0].to_owned(),
                modality: f[1].parse()?,
                embeddings: dir.join(f[2]),
                vocab: opt(f[3]),
                bow: opt(f[4]),
            })
        })
        .collect()
}

/// Loads a dataset directory: manifest, per-view files and, when present,
/// the alignment file.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<TupleDataset<T>> {
    let sources = read_manifest(dir)?;
    let mut specs = Vec::new();
    let mut embs = Vec::new();
    let mut bows = Vec::new();
    for s in &sources {
        let emb: Matrix<T> = load_embeddings(&s.embeddings)?;
        let vocabulary = match (&s.modality, &s.vocab) {
            (Modality::Text, Some(p)) => Some(load_vocabulary(p)?),
            (Modality::Text, None) => return Err(Error::MissingBow(s.name.clone())),
            _ => None,
        };
        let bow = match (&s.modality, &s.bow) {
            (Modality::Text, Some(p)) => Some(load_bows(p)?),
            (Modality::Text, None) => return Err(Error::MissingBow(s.name.clone())),
            _ => None,
        };
        specs.push(ViewSpec {
            name: s.name.clone(),
            modality: s.modality,
            embedding_dim: emb.cols(),
            vocabulary,
        });
        embs.push(emb);
        bows.push(bow);
    }
    let align_path = dir.join(ALIGNMENT);
    let alignment = if align_path.exists() {
        Some(load_alignment(&align_path, sources.len())?)
    } else {
        None
    };
    assemble_dataset(specs, embs, bows, alignment.as_deref())
}

/// Writes a dataset directory that [`load_dataset`] reads back.
pub fn save_dataset<T: Scalar>(ds: &TupleDataset<T>, dir: &Path) -> Result<()> {
    let mut manifest = String::new();
    for v in ds.views() {
        let name = &v.spec.name;
        let emb = format!("{name}.emb1");
        save_embeddings(&v.embeddings, &dir.join(&emb))?;
        let (vocab, bow) = match (&v.spec.vocabulary, &v.bows) {
            (Some(vocab), Some(bows)) => {
                let vf = format!("{name}.vocab");
                let bf = format!("{name}.bow.tsv");
                save_vocabulary(vocab, &dir.join(&vf))?;
                save_bows(bows, &dir.join(&bf))?;
                (vf, bf)
            }
            _ => ("-".to_owned(), "-".to_owned()),
        };
        manifest.push_str(&format!("{name}\t{}\t{emb}\t{vocab}\t{bow}\n", v.spec.modality));
    }
    fsio::write_atomic(&dir.join(MANIFEST), manifest.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")).collect()).unwrap()
    }

    fn emb(rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |r, c| (r * cols + c) as f64)
    }

    fn bows(n: usize) -> Vec<BowVector> {
        (0..n).map(|i| BowVector::from_pairs([(i % 3, 1)])).collect()
    }

    #[test]
    fn identity_alignment() {
        let ds = assemble_dataset(
            vec![ViewSpec::text("en", 8, vocab(3)), ViewSpec::text("de", 8, vocab(3))],
            vec![emb(10, 8), emb(10, 8)],
            vec![Some(bows(10)), Some(bows(10))],
            None,
        )
        .unwrap();
        assert_eq!(ds.tuple_count(), 10);
        assert_eq!(ds.n_views(), 2);
    }

    #[test]
    fn alignment_out_of_range() {
        let err = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3)), ViewSpec::image("img", 2)],
            vec![emb(10, 2), emb(10, 2)],
            vec![Some(bows(10)), None],
            Some(&[vec![0, 0], vec![99, 1]]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 99, .. }));
    }

    #[test]
    fn repeated_article_rows() {
        let ds = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3)), ViewSpec::image("img", 2)],
            vec![emb(2, 2), emb(8, 2)],
            vec![Some(bows(2)), None],
            Some(&[vec![0, 5], vec![0, 6], vec![1, 7]]),
        )
        .unwrap();
        assert_eq!(ds.tuple_count(), 3);
        let en = ds.view(0);
        assert_eq!(en.embeddings.row(0), en.embeddings.row(1));
        assert_eq!(en.embeddings.row(2), &[2.0, 3.0]);
        assert_eq!(ds.view(1).embeddings.row(0), &[10.0, 11.0]);
        let b = en.bows.as_ref().unwrap();
        assert_eq!(b[0], b[1]);
    }

    #[test]
    fn distinct_validation_errors() {
        let rows = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3)), ViewSpec::text("de", 2, vocab(3))],
            vec![emb(10, 2), emb(9, 2)],
            vec![Some(bows(10)), Some(bows(9))],
            None,
        );
        assert!(matches!(rows, Err(Error::RowCountMismatch { .. })));

        let dims = assemble_dataset(
            vec![ViewSpec::text("en", 4, vocab(3))],
            vec![emb(3, 2)],
            vec![Some(bows(3))],
            None,
        );
        assert!(matches!(dims, Err(Error::DimensionMismatch { .. })));

        let missing = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3))],
            vec![emb(3, 2)],
            vec![None],
            None,
        );
        assert!(matches!(missing, Err(Error::MissingBow(_))));

        let oov = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(2))],
            vec![emb(3, 2)],
            vec![Some(bows(3))],
            None,
        );
        assert!(matches!(oov, Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn directory_round_trip() {
        let ds = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3)), ViewSpec::image("img", 3)],
            vec![emb(4, 2), emb(4, 3)],
            vec![Some(bows(4)), None],
            None,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back: TupleDataset<f64> = load_dataset(dir.path()).unwrap();
        assert_eq!(back.tuple_count(), 4);
        assert_eq!(back.specs(), ds.specs());
        assert_eq!(back.view(1).embeddings, ds.view(1).embeddings);
        assert_eq!(back.view(0).bows, ds.view(0).bows);
    }

    #[test]
    fn subset_and_split_keep_alignment() {
        let ds = assemble_dataset(
            vec![ViewSpec::text("en", 2, vocab(3)), ViewSpec::image("img", 2)],
            vec![emb(5, 2), emb(5, 2).map(|x| x + 100.0)],
            vec![Some(bows(5)), None],
            None,
        )
        .unwrap();
        let sub = ds.subset(&[3, 1]).unwrap();
        assert_eq!(sub.view(0).embeddings.row(0), ds.view(0).embeddings.row(3));
        assert_eq!(sub.view(1).embeddings.row(0), ds.view(1).embeddings.row(3));
        let (a, b) = ds.split_at(2).unwrap();
        assert_eq!((a.tuple_count(), b.tuple_count()), (2, 3));
        assert!(ds.subset(&[7]).is_err());
    }
}
