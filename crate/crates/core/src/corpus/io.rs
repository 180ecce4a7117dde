//! Corpus file formats.
//!
//! * EMB1: `b"EMB1"`, `u32` rows, `u32` cols (little endian), then
//!   `rows × cols` little-endian `f32` in row-major order.
//! * Vocabulary: one token per line, line order is index order.
//! * BoW: one document per line, tab-separated `idx:count` pairs.
//! * Alignment: one tuple per line, one 0-based row index per view.
//! * Stopwords: one token per line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio;
use crate::numkit::{Matrix, Scalar};

use super::{BowVector, Vocabulary};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";

/// Cursor over a byte buffer that reports truncation instead of panicking.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Truncated { what }),
        }
    }

    pub(crate) fn magic(&mut self, what: &'static str) -> Result<[u8; 4]> {
        Ok(self.take(4, what)?.try_into().unwrap())
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self, what: &'static str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Parse {
            what,
            line: 0,
            detail: e.to_string(),
        })
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Appends one EMB1 block.
pub fn encode_emb1<T: Scalar>(m: &Matrix<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(&EMB1_MAGIC);
    put_u32(out, m.rows() as u32);
    put_u32(out, m.cols() as u32);
    out.reserve(m.data().len() * 4);
    for &x in m.data() {
        out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
}

pub(crate) fn decode_emb1<T: Scalar>(r: &mut ByteReader<'_>) -> Result<Matrix<T>> {
    let magic = r.magic("EMB1 header")?;
    if magic != EMB1_MAGIC {
        return Err(Error::BadMagic {
            expected: EMB1_MAGIC,
            found: magic,
        });
    }
    let rows = r.u32("EMB1 header")? as usize;
    let cols = r.u32("EMB1 header")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::ZeroDims { rows, cols });
    }
    let payload = r.take(rows * cols * 4, "EMB1 payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn decode_embeddings<T: Scalar>(bytes: &[u8]) -> Result<Matrix<T>> {
    decode_emb1(&mut ByteReader::new(bytes))
}

pub fn load_embeddings<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    decode_embeddings(&fsio::read_bytes(path)?)
}

pub fn save_embeddings<T: Scalar>(m: &Matrix<T>, path: &Path) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::ZeroDims {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let mut out = Vec::with_capacity(12 + m.data().len() * 4);
    encode_emb1(m, &mut out);
    fsio::write_atomic(path, &out)
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    Vocabulary::from_tokens(fsio::read_lines(path)?)
}

pub fn save_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut s = String::new();
    for t in vocab.tokens() {
        s.push_str(t);
        s.push('\n');
    }
    fsio::write_atomic(path, s.as_bytes())
}

pub fn parse_bow_line(line: &str, line_no: usize) -> Result<BowVector> {
    let bad = |detail: String| Error::Parse {
        what: "BoW file",
        line: line_no,
        detail,
    };
    let mut pairs = Vec::new();
    for field in line.split('\t').filter(|f| !f.trim().is_empty()) {
        let (idx, count) = field
            .trim()
            .split_once(':')
            .ok_or_else(|| bad(format!("expected idx:count, got {field:?}")))?;
        let idx: usize = idx.parse().map_err(|_| bad(format!("bad index {idx:?}")))?;
        let count: u32 = count
            .parse()
            .map_err(|_| bad(format!("bad count {count:?}")))?;
        if count == 0 {
            return Err(bad("counts must be positive".into()));
        }
        pairs.push((idx, count));
    }
    Ok(BowVector::from_pairs(pairs))
}

pub fn load_bows(path: &Path) -> Result<Vec<BowVector>> {
    fsio::read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_bow_line(l, i + 1))
        .collect()
}

pub fn format_bows(bows: &[BowVector]) -> String {
    let mut s = String::new();
    for bow in bows {
        for (j, &(i, c)) in bow.entries().iter().enumerate() {
            if j > 0 {
                s.push('\t');
            }
            let _ = write!(s, "{i}:{c}");
        }
        s.push('\n');
    }
    s
}

pub fn save_bows(bows: &[BowVector], path: &Path) -> Result<()> {
    fsio::write_atomic(path, format_bows(bows).as_bytes())
}

/// Rows of the alignment file: `tuples[t][v]` is the row of view `v` that
/// belongs to tuple `t`.
pub fn load_alignment(path: &Path, n_views: usize) -> Result<Vec<Vec<usize>>> {
    fsio::read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let row: Vec<usize> = l
                .split('\t')
                .map(|f| {
                    f.trim().parse().map_err(|_| Error::Parse {
                        what: "alignment file",
                        line: i + 1,
                        detail: format!("bad row index {f:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != n_views {
                return Err(Error::Parse {
                    what: "alignment file",
                    line: i + 1,
                    detail: format!("expected {n_views} columns, got {}", row.len()),
                });
            }
            Ok(row)
        })
        .collect()
}

pub fn save_alignment(rows: &[Vec<usize>], path: &Path) -> Result<()> {
    let mut s = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(usize::to_string).collect();
        s.push_str(&fields.join("\t"));
        s.push('\n');
    }
    fsio::write_atomic(path, s.as_bytes())
}

/// Stopwords are lowercased so they match tokenizer output.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(fsio::read_lines(path)?
        .into_iter()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}
