//! Retrieval and coherence metrics over topic distributions.
//!
//! Candidates are ranked by ascending Jensen-Shannon divergence to the query
//! (natural log, so values lie in `[0, ln 2]`), ties broken by candidate
//! index. NPMI uses document-level co-occurrence:
//!
//! ```text
//! npmi(i, j) = ln((p(i,j) + ε) / (p(i) p(j))) / −ln(p(i,j) + ε)
//! ```

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::BowVector;
use crate::error::{Error, Result};
use crate::fsio;
use crate::numkit::Matrix;

pub const NPMI_EPS: f64 = 1e-12;
pub const DEFAULT_TOP_N: usize = 10;

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen-Shannon divergence, clamped to `[0, ln 2]` against rounding.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("jsd", p.len(), q.len()));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m);
    Ok(d.clamp(0.0, std::f64::consts::LN_2))
}

/// Relevant candidate indices per query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalGold {
    pub relevant: Vec<Vec<usize>>,
}

impl RetrievalGold {
    /// One relevant candidate per query.
    pub fn single(gold: &[usize]) -> Self {
        Self {
            relevant: gold.iter().map(|&g| vec![g]).collect(),
        }
    }

    fn validate(&self, n_queries: usize, n_candidates: usize) -> Result<()> {
        if self.relevant.len() != n_queries {
            return Err(Error::dim("gold queries", n_queries, self.relevant.len()));
        }
        for rel in &self.relevant {
            if rel.is_empty() {
                return Err(Error::EmptyInput("relevant set of a query"));
            }
            if let Some(&i) = rel.iter().find(|&&i| i >= n_candidates) {
                return Err(Error::IndexOutOfRange {
                    what: "retrieval candidates".into(),
                    index: i,
                    size: n_candidates,
                });
            }
        }
        Ok(())
    }
}

/// Candidate indices ordered by ascending JSD to `query`, ties by index.
pub fn rank_candidates(query: &[f64], candidates: &[Vec<f64>]) -> Result<Vec<usize>> {
    let d: Vec<f64> = candidates.iter().map(|c| jsd(query, c)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    Ok(order)
}

fn check_nonempty(queries: &[Vec<f64>], candidates: &[Vec<f64>]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("retrieval queries"));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("retrieval candidates"));
    }
    Ok(())
}

/// Mean reciprocal rank of each query's gold candidate.
pub fn mrr(queries: &[Vec<f64>], candidates: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    check_nonempty(queries, candidates)?;
    RetrievalGold::single(gold).validate(queries.len(), candidates.len())?;
    let mut total = 0.0;
    for (q, &g) in queries.iter().zip(gold) {
        let order = rank_candidates(q, candidates)?;
        let rank = order.iter().position(|&c| c == g).expect("gold index validated") + 1;
        total += 1.0 / rank as f64;
    }
    Ok(total / queries.len() as f64)
}

/// Uninterpolated average precision, averaged over queries.
pub fn uap(queries: &[Vec<f64>], candidates: &[Vec<f64>], gold: &RetrievalGold) -> Result<f64> {
    check_nonempty(queries, candidates)?;
    gold.validate(queries.len(), candidates.len())?;
    let mut total = 0.0;
    for (q, rel) in queries.iter().zip(&gold.relevant) {
        let order = rank_candidates(q, candidates)?;
        let mut is_rel = vec![false; candidates.len()];
        rel.iter().for_each(|&i| is_rel[i] = true);
        let n_rel = is_rel.iter().filter(|&&r| r).count();
        let mut hits = 0;
        let mut ap = 0.0;
        for (pos, &c) in order.iter().enumerate() {
            if is_rel[c] {
                hits += 1;
                ap += hits as f64 / (pos + 1) as f64;
            }
        }
        total += ap / n_rel as f64;
    }
    Ok(total / queries.len() as f64)
}

/// Mean JSD between each query and its relevant candidates.
pub fn mean_gold_jsd(queries: &[Vec<f64>], candidates: &[Vec<f64>], gold: &RetrievalGold) -> Result<f64> {
    check_nonempty(queries, candidates)?;
    gold.validate(queries.len(), candidates.len())?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (q, rel) in queries.iter().zip(&gold.relevant) {
        for &c in rel {
            total += jsd(q, &candidates[c])?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

fn check_views(thetas: &[Vec<Vec<f64>>]) -> Result<usize> {
    if thetas.len() < 2 {
        return Err(Error::InvalidConfig("aligned-pair JSD needs at least two views".into()));
    }
    let n = thetas[0].len();
    if n == 0 {
        return Err(Error::EmptyInput("aligned tuples"));
    }
    if let Some(v) = thetas.iter().find(|v| v.len() != n) {
        return Err(Error::dim("tuples per view", n, v.len()));
    }
    Ok(n)
}

/// Mean JSD over tuples and unordered view pairs; `thetas[v][t]` is the
/// topic distribution of view `v` in tuple `t`.
pub fn aligned_pair_jsd(thetas: &[Vec<Vec<f64>>]) -> Result<f64> {
    let n = check_views(thetas)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..n {
        for a in 0..thetas.len() {
            for b in a + 1..thetas.len() {
                total += jsd(&thetas[a][t], &thetas[b][t])?;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// The same average over mismatched tuples: every view pair, every `s ≠ t`.
/// The chance level that [`aligned_pair_jsd`] is compared against.
pub fn unaligned_pair_jsd(thetas: &[Vec<Vec<f64>>]) -> Result<f64> {
    let n = check_views(thetas)?;
    if n < 2 {
        return Err(Error::EmptyInput("mismatched tuple pairs"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..thetas.len() {
        for b in a + 1..thetas.len() {
            for s in 0..n {
                for t in 0..n {
                    if s != t {
                        total += jsd(&thetas[a][s], &thetas[b][t])?;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coherence {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

/// NPMI of two words given document frequencies. Pairs involving a word
/// that never occurs score −1, the value never co-occurring words approach.
fn npmi_pair(df_i: usize, df_j: usize, co: usize, n_docs: f64, eps: f64) -> f64 {
    if df_i == 0 || df_j == 0 {
        return -1.0;
    }
    if co as f64 == n_docs {
        // both words in every document: −ln p(i,j) vanishes
        return 1.0;
    }
    let p_i = df_i as f64 / n_docs;
    let p_j = df_j as f64 / n_docs;
    let p_ij = co as f64 / n_docs + eps;
    ((p_ij / (p_i * p_j)).ln() / -p_ij.ln()).clamp(-1.0, 1.0)
}

/// Mean pairwise NPMI of each topic's top words (vocabulary indices) over
/// the reference documents.
pub fn npmi_coherence(topics: &[Vec<usize>], corpus: &[BowVector], eps: f64) -> Result<Coherence> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if topics.is_empty() {
        return Err(Error::EmptyInput("topics"));
    }
    if topics.iter().any(|t| t.len() < 2) {
        return Err(Error::InvalidConfig("NPMI needs at least two words per topic".into()));
    }
    let n_docs = corpus.len() as f64;
    let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
    for t in topics {
        for &w in t {
            postings.entry(w).or_default();
        }
    }
    for (d, doc) in corpus.iter().enumerate() {
        for &(w, _) in doc.entries() {
            if let Some(p) = postings.get_mut(&w) {
                p.push(d);
            }
        }
    }
    let co_count = |a: &[usize], b: &[usize]| {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    };
    let per_topic: Vec<f64> = topics
        .iter()
        .map(|words| {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for a in 0..words.len() {
                for b in a + 1..words.len() {
                    let (pa, pb) = (&postings[&words[a]], &postings[&words[b]]);
                    total += npmi_pair(pa.len(), pb.len(), co_count(pa, pb), n_docs, eps);
                    pairs += 1;
                }
            }
            total / pairs as f64
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(Coherence { per_topic, mean })
}

/// Indices of the `n` largest entries of `row`, descending, ties by index.
pub fn top_indices(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Minimum-cost assignment of every row to a distinct column
/// (`rows ≤ cols`), by the shortest augmenting path method with
/// potentials. Returns the column chosen for each row.
pub fn hungarian(cost: &Matrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = (cost.rows(), cost.cols());
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > m {
        return Err(Error::InvalidConfig(format!("assignment needs rows ≤ cols, got {n}x{m}")));
    }
    if !cost.is_finite() {
        return Err(Error::InvalidConfig("assignment costs must be finite".into()));
    }
    // 1-based arrays; column 0 is a virtual start node
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatch {
    /// Recovered topic matched to each reference topic.
    pub assignment: Vec<usize>,
    /// Fraction of shared top words per reference topic.
    pub overlap: Vec<f64>,
    pub mean_overlap: f64,
}

/// Matches reference topics (rows of `truth`) to recovered topics by
/// minimum total ℓ1 distance, then scores top-`n` word overlap per pair.
pub fn match_topics(recovered: &Matrix<f64>, truth: &Matrix<f64>, top_n: usize) -> Result<TopicMatch> {
    if recovered.cols() != truth.cols() {
        return Err(Error::dim("topic vocabulary", truth.cols(), recovered.cols()));
    }
    if top_n == 0 || top_n > truth.cols() {
        return Err(Error::InvalidConfig(format!("top_n must be in 1..={}", truth.cols())));
    }
    let cost = Matrix::from_fn(truth.rows(), recovered.rows(), |i, j| {
        truth.row(i).iter().zip(recovered.row(j)).map(|(a, b)| (a - b).abs()).sum()
    });
    let assignment = hungarian(&cost)?;
    let overlap: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let a = top_indices(truth.row(i), top_n);
            let b = top_indices(recovered.row(j), top_n);
            a.iter().filter(|w| b.contains(w)).count() as f64 / top_n as f64
        })
        .collect();
    let mean_overlap = overlap.iter().sum::<f64>() / overlap.len().max(1) as f64;
    Ok(TopicMatch {
        assignment,
        overlap,
        mean_overlap,
    })
}

/// `id<TAB>v1<TAB>…<TAB>vK` per row.
pub fn format_theta_tsv(ids: &[String], thetas: &[Vec<f64>]) -> Result<String> {
    if ids.len() != thetas.len() {
        return Err(Error::dim("theta ids", thetas.len(), ids.len()));
    }
    let mut s = String::new();
    for (id, row) in ids.iter().zip(thetas) {
        s.push_str(id);
        for v in row {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_theta_tsv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |detail: String| Error::Parse {
            what: "theta TSV",
            line: i + 1,
            detail,
        };
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_owned();
        let row: Vec<f64> = fields
            .map(|f| f.parse().map_err(|e| bad(format!("{f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if row.is_empty() {
            return Err(bad("no values".into()));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(bad(format!("expected {} values, got {}", first.len(), row.len())));
            }
        }
        ids.push(id);
        rows.push(row);
    }
    Ok((ids, rows))
}

pub fn save_theta_tsv(ids: &[String], thetas: &[Vec<f64>], path: &Path) -> Result<()> {
    fsio::write_atomic(path, format_theta_tsv(ids, thetas)?.as_bytes())
}

pub fn load_theta_tsv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    parse_theta_tsv(&fsio::read_text(path)?)
}

/// `query_id<TAB>relevant_id[,relevant_id…]` lines.
pub fn parse_gold_tsv(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (q, rel) = line.split_once('\t').ok_or_else(|| Error::Parse {
            what: "gold TSV",
            line: i + 1,
            detail: "expected query_id<TAB>relevant_ids".into(),
        })?;
        let rel: Vec<String> = rel.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect();
        if rel.is_empty() {
            return Err(Error::Parse {
                what: "gold TSV",
                line: i + 1,
                detail: "empty relevant set".into(),
            });
        }
        out.push((q.to_owned(), rel));
    }
    Ok(out)
}

pub fn format_gold_tsv(entries: &[(String, Vec<String>)]) -> String {
    let mut s = String::new();
    for (q, rel) in entries {
        let _ = writeln!(s, "{q}\t{}", rel.join(","));
    }
    s
}

/// Resolves gold ids against the query and candidate id lists. Returns the
/// query indices in gold-file order and the matching relevant sets.
pub fn resolve_gold(
    entries: &[(String, Vec<String>)],
    query_ids: &[String],
    candidate_ids: &[String],
) -> Result<(Vec<usize>, RetrievalGold)> {
    let index = |ids: &[String]| -> HashMap<String, usize> {
        ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
    };
    let (qi, ci) = (index(query_ids), index(candidate_ids));
    let mut queries = Vec::with_capacity(entries.len());
    let mut relevant = Vec::with_capacity(entries.len());
    for (q, rel) in entries {
        queries.push(*qi.get(q).ok_or_else(|| Error::ViewNotFound(format!("query id {q}")))?);
        relevant.push(
            rel.iter()
                .map(|r| ci.get(r).copied().ok_or_else(|| Error::ViewNotFound(format!("candidate id {r}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((queries, RetrievalGold { relevant }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SeededRng;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn random_simplex(rng: &mut SeededRng, k: usize, coarse: bool) -> Vec<f64> {
        let raw: Vec<f64> = (0..k)
            .map(|_| {
                let u = rng.uniform();
                if coarse { (u * 3.0).floor() + 0.5 } else { -u.ln() }
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN2).abs() < 1e-15);
        // m = (0.75, 0.25): ½[0.5 ln(2/3) + 0.5 ln 2] + ½ ln(4/3)
        let want = 0.5 * (0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln()) + 0.5 * (1.0f64 / 0.75).ln();
        let got = jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.215762).abs() < 1e-6);
        assert!(jsd(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mrr_examples() {
        let c = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(mrr(&c, &c, &[0, 1, 2]).unwrap(), 1.0);
        // query equal to candidate 0; the other two tie at ln 2 and rank by index
        let q = vec![vec![1.0, 0.0, 0.0]; 3];
        let c4 = vec![c[0].clone(), c[1].clone(), c[2].clone(), vec![0.0, 1.0, 0.0]];
        let got = mrr(&q, &c4, &[0, 1, 3]).unwrap();
        assert!((got - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        assert!(mrr(&[], &c, &[]).is_err());
        assert!(mrr(&c, &c, &[0, 1, 5]).is_err());
        assert!(mrr(&c, &c, &[0, 1]).is_err());
    }

    #[test]
    fn uap_examples() {
        let q = vec![vec![1.0, 0.0]];
        let c = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.9, 0.1]];
        // ranking: 0, 2, 1
        assert_eq!(uap(&q, &c, &RetrievalGold { relevant: vec![vec![0]] }).unwrap(), 1.0);
        let got = uap(&q, &c, &RetrievalGold { relevant: vec![vec![0, 1]] }).unwrap();
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let two = uap(&[q[0].clone(), q[0].clone()], &c, &RetrievalGold { relevant: vec![vec![0, 1], vec![2]] }).unwrap();
        assert!((two - (0.8333333333333334 + 0.5) / 2.0).abs() < 1e-12);
        assert!(uap(&q, &c, &RetrievalGold { relevant: vec![vec![]] }).is_err());
    }

    fn brute_ranks(q: &[f64], cands: &[Vec<f64>]) -> Vec<usize> {
        // rank of each candidate = 1 + number of candidates strictly ahead of it
        let d: Vec<f64> = cands.iter().map(|c| jsd(q, c).unwrap()).collect();
        (0..cands.len())
            .map(|i| 1 + (0..cands.len()).filter(|&j| d[j] < d[i] || (d[j] == d[i] && j < i)).count())
            .collect()
    }

    #[test]
    fn retrieval_matches_brute_force() {
        let mut rng = SeededRng::new(8);
        for trial in 0..100 {
            let n_c = 1 + rng.below(20);
            let n_q = 1 + rng.below(6);
            let k = 2 + rng.below(4);
            let coarse = trial % 3 == 0;
            let cands: Vec<Vec<f64>> = (0..n_c).map(|_| random_simplex(&mut rng, k, coarse)).collect();
            let queries: Vec<Vec<f64>> = (0..n_q).map(|_| random_simplex(&mut rng, k, coarse)).collect();
            let gold: Vec<usize> = (0..n_q).map(|_| rng.below(n_c)).collect();
            let rel: Vec<Vec<usize>> = (0..n_q)
                .map(|_| {
                    let mut r: Vec<usize> = (0..n_c).filter(|_| rng.uniform() < 0.3).collect();
                    if r.is_empty() {
                        r.push(rng.below(n_c));
                    }
                    r
                })
                .collect();
            let mut want_mrr = 0.0;
            let mut want_uap = 0.0;
            for (qi, q) in queries.iter().enumerate() {
                let ranks = brute_ranks(q, &cands);
                want_mrr += 1.0 / ranks[gold[qi]] as f64;
                let mut rr: Vec<usize> = rel[qi].iter().map(|&c| ranks[c]).collect();
                rr.sort();
                want_uap += rr.iter().enumerate().map(|(h, &r)| (h + 1) as f64 / r as f64).sum::<f64>() / rr.len() as f64;
            }
            want_mrr /= n_q as f64;
            want_uap /= n_q as f64;
            assert_eq!(mrr(&queries, &cands, &gold).unwrap(), want_mrr);
            let got_uap = uap(&queries, &cands, &RetrievalGold { relevant: rel }).unwrap();
            assert!((got_uap - want_uap).abs() < 1e-15);
        }
    }

    fn bow(words: &[usize]) -> BowVector {
        BowVector::from_pairs(words.iter().map(|&w| (w, 1)))
    }

    #[test]
    fn npmi_examples() {
        // words 0 and 1 in the same documents
        let corpus = vec![bow(&[0, 1]), bow(&[2]), bow(&[0, 1, 2]), bow(&[])];
        let c = npmi_coherence(&[vec![0, 1]], &corpus, NPMI_EPS).unwrap();
        assert!((c.per_topic[0] - 1.0).abs() < 1e-9);
        // w1 in docs {1,2}, w2 in docs {2,3} of four documents
        let corpus = vec![bow(&[]), bow(&[1]), bow(&[1, 2]), bow(&[2])];
        let c = npmi_coherence(&[vec![1, 2]], &corpus, NPMI_EPS).unwrap();
        assert!(c.per_topic[0].abs() < 1e-9);
        // never together: approaches −1 as ε shrinks
        let corpus = vec![bow(&[1]), bow(&[2]), bow(&[1]), bow(&[2])];
        let mut prev = 0.0;
        for eps in [1e-6, 1e-12, 1e-100] {
            let v = npmi_coherence(&[vec![1, 2]], &corpus, eps).unwrap().per_topic[0];
            assert!(v < prev && v >= -1.0);
            prev = v;
        }
        assert!((prev + 1.0).abs() < 0.01);
        // absent word
        let c = npmi_coherence(&[vec![1, 9]], &corpus, NPMI_EPS).unwrap();
        assert_eq!(c.per_topic[0], -1.0);
        assert!(npmi_coherence(&[vec![1]], &corpus, NPMI_EPS).is_err());
        assert!(npmi_coherence(&[vec![1, 2]], &[], NPMI_EPS).is_err());
    }

    #[test]
    fn coherence_mean_over_topics_and_pairs() {
        let corpus = vec![bow(&[0, 1, 2]), bow(&[0, 1]), bow(&[2, 3]), bow(&[3])];
        let c = npmi_coherence(&[vec![0, 1, 2], vec![2, 3]], &corpus, NPMI_EPS).unwrap();
        let single = |a, b| npmi_coherence(&[vec![a, b]], &corpus, NPMI_EPS).unwrap().mean;
        let t0 = (single(0, 1) + single(0, 2) + single(1, 2)) / 3.0;
        assert!((c.per_topic[0] - t0).abs() < 1e-12);
        assert!((c.mean - (t0 + single(2, 3)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_pair_examples() {
        let same = vec![vec![vec![0.2, 0.8]; 3]; 3];
        assert_eq!(aligned_pair_jsd(&same).unwrap(), 0.0);
        let a = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.5, 0.5], vec![0.0, 1.0]];
        let want = (jsd(&a[0], &b[0]).unwrap() + LN2) / 2.0;
        assert!((aligned_pair_jsd(&[a.clone(), b.clone()]).unwrap() - want).abs() < 1e-15);
        let cross = (jsd(&a[0], &b[1]).unwrap() + jsd(&a[1], &b[0]).unwrap()) / 2.0;
        assert!((unaligned_pair_jsd(&[a.clone(), b]).unwrap() - cross).abs() < 1e-15);
        assert!(aligned_pair_jsd(&[a]).is_err());
    }

    #[test]
    fn aligned_pair_matches_double_loop() {
        let mut rng = SeededRng::new(2);
        let thetas: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..7).map(|_| random_simplex(&mut rng, 4, false)).collect())
            .collect();
        let mut sum = 0.0;
        let mut n = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                if a < b {
                    for t in 0..7 {
                        sum += jsd(&thetas[a][t], &thetas[b][t]).unwrap();
                        n += 1.0;
                    }
                }
            }
        }
        assert!((aligned_pair_jsd(&thetas).unwrap() - sum / n).abs() < 1e-14);
    }

    fn brute_assignment(cost: &Matrix<f64>) -> f64 {
        fn go(cost: &Matrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.rows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.cols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[(row, j)] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost.cols()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = SeededRng::new(5);
        for _ in 0..200 {
            let n = 1 + rng.below(6);
            let m = n + rng.below(3);
            let cost = Matrix::from_fn(n, m, |_, _| (rng.uniform() * 10.0).floor());
            let a = hungarian(&cost).unwrap();
            let mut seen = a.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), n);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            assert_eq!(total, brute_assignment(&cost));
        }
        assert!(hungarian(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn topic_matching_recovers_a_permutation() {
        let truth = Matrix::from_rows(&[
            vec![0.5, 0.3, 0.2, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.6, 0.3, 0.1],
        ])
        .unwrap();
        let recovered = Matrix::from_rows(&[
            vec![0.0, 0.05, 0.0, 0.5, 0.3, 0.15],
            vec![1.0 / 6.0; 6],
            vec![0.4, 0.4, 0.2, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let m = match_topics(&recovered, &truth, 3).unwrap();
        assert_eq!(m.assignment, vec![2, 0]);
        assert_eq!(m.overlap, vec![1.0, 1.0]);
    }

    #[test]
    fn tsv_round_trips() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![0.1 + 0.2, 0.7], vec![1.0 / 3.0, 2.0 / 3.0]];
        let text = format_theta_tsv(&ids, &rows).unwrap();
        assert_eq!(parse_theta_tsv(&text).unwrap(), (ids.clone(), rows));
        assert!(matches!(parse_theta_tsv("a\t0.5\nb\t0.5\t0.5\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_theta_tsv("a\tx\n").is_err());

        let gold = parse_gold_tsv("a\tb,a\nb\tb\n").unwrap();
        assert_eq!(format_gold_tsv(&gold), "a\tb,a\nb\tb\n");
        let (q, g) = resolve_gold(&gold, &ids, &ids).unwrap();
        assert_eq!(q, vec![0, 1]);
        assert_eq!(g.relevant, vec![vec![1, 0], vec![1]]);
        assert!(parse_gold_tsv("a\n").is_err());
        assert!(resolve_gold(&[("z".into(), vec!["a".into()])], &ids, &ids).is_err());
    }

    proptest! {
        #[test]
        fn jsd_bounded_and_symmetric(
            a in prop::collection::vec(0.0f64..1.0, 5),
            b in prop::collection::vec(0.0f64..1.0, 5),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9;
                v.iter().map(|x| (x + 1e-9 / 5.0) / s).collect::<Vec<f64>>()
            };
            let (p, q) = (norm(&a), norm(&b));
            let d = jsd(&p, &q).unwrap();
            prop_assert!((0.0..=LN2).contains(&d));
            prop_assert_eq!(d, jsd(&q, &p).unwrap());
        }

        #[test]
        fn retrieval_invariant_under_query_permutation(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let cands: Vec<Vec<f64>> = (0..8).map(|_| random_simplex(&mut rng, 3, false)).collect();
            let queries: Vec<Vec<f64>> = (0..5).map(|_| random_simplex(&mut rng, 3, false)).collect();
            let gold: Vec<usize> = (0..5).map(|_| rng.below(8)).collect();
            let a = mrr(&queries, &cands, &gold).unwrap();
            let rev_q: Vec<Vec<f64>> = queries.iter().rev().cloned().collect();
            let rev_g: Vec<usize> = gold.iter().rev().cloned().collect();
            let b = mrr(&rev_q, &cands, &rev_g).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }
}
