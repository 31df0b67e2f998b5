//! Graded retrieval metrics (ERR@k, nDCG@k, MAP, P@k), TREC qrels/run
//! interchange, and the best-of-m reformulation protocol.
//!
//! Gains use the exponential form: a document with grade g contributes
//! (2^g − 1), normalized by 2^g_max for ERR's stopping probability.
//! Negative grades (spam judgments) are kept in storage but clamp to zero
//! for gain; unjudged documents count as grade zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::toy_retrieval::{InvertedIndex, Ranking};

/// Relevance judgments: qid → (doc_id → grade).
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, i64>>,
}

impl Qrels {
    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: i64) {
        self.grades
            .entry(qid.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    pub fn grades_for(&self, qid: &str) -> Option<&BTreeMap<String, i64>> {
        self.grades.get(qid)
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    /// Largest grade present anywhere (at least 1, so gains stay defined
    /// even for all-negative files).
    pub fn max_grade(&self) -> i64 {
        self.grades
            .values()
            .flat_map(|g| g.values())
            .copied()
            .max()
            .unwrap_or(1)
            .max(1)
    }
}

/// Parse TREC qrels: whitespace-separated `qid iteration doc_id grade`
/// lines. Malformed lines are fatal, with their line number.
pub fn parse_qrels(text: &str, path: &str) -> Result<Qrels> {
    let mut qrels = Qrels::default();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |msg: &str| Error::Parse {
            path: path.to_string(),
            line: no + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 4 {
            return Err(malformed("expected: qid iteration doc_id grade"));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| malformed("grade is not an integer"))?;
        qrels.insert(fields[0], fields[2], grade);
    }
    Ok(qrels)
}

/// A parsed run file: per-qid rankings re-sorted by (score desc, doc_id
/// asc) regardless of the stated rank field, plus any warnings.
#[derive(Debug, Default)]
pub struct RunFile {
    pub rankings: BTreeMap<String, Ranking>,
    pub warnings: Vec<String>,
}

/// Parse a TREC run: whitespace-separated `qid Q0 doc_id rank score runtag`
/// lines. Duplicate (qid, doc_id) entries keep the first occurrence with a
/// warning; malformed lines are fatal.
pub fn parse_run(text: &str, path: &str) -> Result<RunFile> {
    let mut run = RunFile::default();
    let mut seen: BTreeMap<(String, String), ()> = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |msg: &str| Error::Parse {
            path: path.to_string(),
            line: no + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 6 {
            return Err(malformed("expected: qid Q0 doc_id rank score runtag"));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| malformed("score is not a number"))?;
        if !score.is_finite() {
            return Err(malformed("score is not finite"));
        }
        let key = (fields[0].to_string(), fields[2].to_string());
        if seen.contains_key(&key) {
            run.warnings.push(format!(
                "{path}:{}: duplicate document {} for query {}; first kept",
                no + 1,
                fields[2],
                fields[0]
            ));
            continue;
        }
        seen.insert(key, ());
        run.rankings
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[2].to_string(), score));
    }
    for ranking in run.rankings.values_mut() {
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
    Ok(run)
}

/// Format one query's ranking in TREC run format, ranks starting at 1 and
/// scores printed with 6 decimals.
pub fn format_run(qid: &str, ranking: &Ranking, runtag: &str) -> String {
    let mut out = String::new();
    for (i, (doc, score)) in ranking.iter().enumerate() {
        out.push_str(&format!("{qid} Q0 {doc} {} {score:.6} {runtag}\n", i + 1));
    }
    out
}

fn clamped_gain(grade: i64, g_max: i64) -> f64 {
    let g = grade.clamp(0, g_max) as f64;
    2f64.powf(g) - 1.0
}

/// Expected reciprocal rank at `k`: a cascade over ranks where a document
/// of grade g stops the user with probability (2^g − 1) / 2^g_max.
pub fn err_at_k(ranking: &[(String, f64)], grades: &BTreeMap<String, i64>, k: usize, g_max: i64) -> f64 {
    assert!(k >= 1 && g_max >= 1, "err_at_k: k and g_max must be positive");
    let denom = 2f64.powf(g_max as f64);
    let mut err = 0.0;
    let mut keep_going = 1.0;
    for (r, (doc, _)) in ranking.iter().take(k).enumerate() {
        let grade = grades.get(doc).copied().unwrap_or(0);
        let stop = clamped_gain(grade, g_max) / denom;
        err += keep_going * stop / (r + 1) as f64;
        keep_going *= 1.0 - stop;
    }
    err
}

/// Normalized discounted cumulative gain at `k`, with exponential gain and
/// the ideal ordering computed over all judged documents of the query.
/// Zero when the query has no positive judgment.
pub fn ndcg_at_k(ranking: &[(String, f64)], grades: &BTreeMap<String, i64>, k: usize) -> f64 {
    assert!(k >= 1, "ndcg_at_k: k must be positive");
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, (doc, _))| {
            let grade = grades.get(doc).copied().unwrap_or(0);
            clamped_gain(grade, i64::MAX) / ((r + 2) as f64).log2()
        })
        .sum();
    let mut ideal: Vec<i64> = grades.values().copied().filter(|g| *g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &g)| clamped_gain(g, i64::MAX) / ((r + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Average precision over the full ranking with binary relevance
/// (grade > 0), divided by the number of judged-relevant documents. Zero
/// when nothing relevant is judged.
pub fn average_precision(ranking: &[(String, f64)], grades: &BTreeMap<String, i64>) -> f64 {
    let total_relevant = grades.values().filter(|g| **g > 0).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, (doc, _)) in ranking.iter().enumerate() {
        if grades.get(doc).copied().unwrap_or(0) > 0 {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

/// Precision at `k`: relevant documents in the top `k`, divided by `k`
/// (short rankings count the missing tail as non-relevant).
pub fn p_at_k(ranking: &[(String, f64)], grades: &BTreeMap<String, i64>, k: usize) -> f64 {
    assert!(k >= 1, "p_at_k: k must be positive");
    let hits = ranking
        .iter()
        .take(k)
        .filter(|(doc, _)| grades.get(doc).copied().unwrap_or(0) > 0)
        .count();
    hits as f64 / k as f64
}

/// The four measures for one query (or their mean over queries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub err: f64,
    pub ndcg: f64,
    pub ap: f64,
    pub p: f64,
}

/// Per-query and mean metrics for a run.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub mean: QueryMetrics,
    pub k: usize,
    pub g_max: i64,
}

/// Evaluate a run against qrels at cutoff `k`. Every judged query counts:
/// queries missing from the run score zero. `g_max` defaults to the
/// largest grade in the qrels.
pub fn evaluate_run(
    rankings: &BTreeMap<String, Ranking>,
    qrels: &Qrels,
    k: usize,
    g_max: Option<i64>,
) -> Result<MetricReport> {
    if qrels.is_empty() {
        return Err(Error::Data("qrels contain no judgments".into()));
    }
    let g_max = g_max.unwrap_or_else(|| qrels.max_grade());
    if g_max < 1 {
        return Err(Error::Data(format!("g_max must be at least 1, got {g_max}")));
    }
    let empty: Ranking = Vec::new();
    let mut per_query = BTreeMap::new();
    let mut sums = QueryMetrics {
        err: 0.0,
        ndcg: 0.0,
        ap: 0.0,
        p: 0.0,
    };
    for qid in qrels.qids() {
        let grades = qrels.grades_for(qid).expect("qid comes from qrels");
        let ranking = rankings.get(qid).unwrap_or(&empty);
        let m = QueryMetrics {
            err: err_at_k(ranking, grades, k, g_max),
            ndcg: ndcg_at_k(ranking, grades, k),
            ap: average_precision(ranking, grades),
            p: p_at_k(ranking, grades, k),
        };
        sums.err += m.err;
        sums.ndcg += m.ndcg;
        sums.ap += m.ap;
        sums.p += m.p;
        per_query.insert(qid.to_string(), m);
    }
    let n = per_query.len() as f64;
    Ok(MetricReport {
        per_query,
        mean: QueryMetrics {
            err: sums.err / n,
            ndcg: sums.ndcg / n,
            ap: sums.ap / n,
            p: sums.p / n,
        },
        k,
        g_max,
    })
}

impl MetricReport {
    /// Per-query rows plus a mean row, tab-separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("qid\terr@k\tndcg@k\tmap\tp@k\n");
        for (qid, m) in &self.per_query {
            out.push_str(&format!(
                "{qid}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                m.err, m.ndcg, m.ap, m.p
            ));
        }
        out.push_str(&format!(
            "mean\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            self.mean.err, self.mean.ndcg, self.mean.ap, self.mean.p
        ));
        out
    }
}

/// Best-of-m evaluation of one query's reformulation candidates.
#[derive(Debug, Clone)]
pub struct BestOfMResult {
    /// ERR@k of the original query.
    pub baseline_err: f64,
    /// Deduplicated candidates in generation-score order with their ERR@k.
    pub candidates: Vec<(String, f64)>,
    /// `best_curve[i]` = best ERR@k among the first i+1 candidates.
    pub best_curve: Vec<f64>,
    /// Index into `candidates` of the best one (first maximum).
    pub argmax: usize,
}

/// Retrieve with every candidate and record the best ERR@k as a function
/// of how many candidates the user considers. Candidates are deduplicated
/// preserving their generation-score order; a candidate retrieving nothing
/// scores zero.
#[allow(clippy::too_many_arguments)]
pub fn best_of_m(
    original: &str,
    candidates: &[String],
    index: &InvertedIndex,
    grades: &BTreeMap<String, i64>,
    m: usize,
    k_retrieve: usize,
    mu: f64,
    err_k: usize,
    g_max: i64,
) -> Result<BestOfMResult> {
    let mut unique: Vec<&String> = Vec::new();
    for c in candidates {
        if !unique.iter().any(|u| *u == c) {
            unique.push(c);
        }
    }
    if unique.is_empty() || m < 1 || m > unique.len() {
        return Err(Error::Contract(format!(
            "best_of_m: need 1 <= m <= {} distinct candidates, got m={m}",
            unique.len()
        )));
    }
    let err_of = |query: &str| -> f64 {
        let ranking = index.search(query, k_retrieve, mu);
        err_at_k(&ranking, grades, err_k, g_max)
    };
    let baseline_err = err_of(original);
    let scored: Vec<(String, f64)> = unique
        .into_iter()
        .take(m)
        .map(|c| (c.clone(), err_of(c)))
        .collect();
    let mut best_curve = Vec::with_capacity(scored.len());
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    for (i, (_, e)) in scored.iter().enumerate() {
        if *e > best {
            best = *e;
            argmax = i;
        }
        best_curve.push(best);
    }
    Ok(BestOfMResult {
        baseline_err,
        candidates: scored,
        best_curve,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grades(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    fn ranking(docs: &[&str]) -> Ranking {
        docs.iter()
            .enumerate()
            .map(|(i, d)| (d.to_string(), 1.0 - i as f64 * 0.1))
            .collect()
    }

    #[test]
    fn err_zero_without_relevance() {
        let r = ranking(&["a", "b"]);
        assert_eq!(err_at_k(&r, &grades(&[]), 20, 1), 0.0);
    }

    #[test]
    fn err_single_top_document() {
        let r = ranking(&["a"]);
        let g = grades(&[("a", 1)]);
        assert!((err_at_k(&r, &g, 20, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn err_hand_derived_three_documents() {
        // Grades 3, 0, 2 with g_max = 4:
        //   R1 = 7/16, R2 = 0, R3 = 3/16
        //   ERR = 7/16 + (1/3)·(1 − 7/16)·(3/16) = 0.47265625
        let r = ranking(&["a", "b", "c"]);
        let g = grades(&[("a", 3), ("b", 0), ("c", 2)]);
        assert!((err_at_k(&r, &g, 20, 4) - 0.472_656_25).abs() < 1e-12);
    }

    #[test]
    fn err_clamps_grades_into_range() {
        let r = ranking(&["a", "b"]);
        let g = grades(&[("a", -2), ("b", 9)]);
        // a clamps to 0, b clamps to g_max=2: ERR = (1/2)·(3/4) = 0.375
        assert!((err_at_k(&r, &g, 20, 2) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn ndcg_ideal_ordering_is_one_and_zero_without_relevance() {
        let r = ranking(&["a", "b", "c"]);
        let g = grades(&[("a", 3), ("b", 2), ("c", 1)]);
        assert!((ndcg_at_k(&r, &g, 20) - 1.0).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&r, &grades(&[]), 20), 0.0);
        assert_eq!(ndcg_at_k(&r, &grades(&[("a", 0)]), 20), 0.0);
    }

    #[test]
    fn ndcg_matches_permutation_oracle_on_five_documents() {
        // IDCG by brute force over all 120 orderings of the judged docs.
        let docs = ["a", "b", "c", "d", "e"];
        let g = grades(&[("a", 0), ("b", 3), ("c", 1), ("d", 2), ("e", 1)]);
        let dcg_of = |order: &[&str]| -> f64 {
            order
                .iter()
                .enumerate()
                .map(|(r, d)| {
                    let grade = g.get(*d).copied().unwrap_or(0).max(0) as f64;
                    (2f64.powf(grade) - 1.0) / ((r + 2) as f64).log2()
                })
                .sum()
        };
        fn permutations<'a>(items: &[&'a str]) -> Vec<Vec<&'a str>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.to_vec();
                let head = rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
        let best = permutations(&docs)
            .into_iter()
            .map(|p| dcg_of(&p))
            .fold(f64::NEG_INFINITY, f64::max);
        let r = ranking(&["e", "a", "b", "c", "d"]);
        let expected = dcg_of(&["e", "a", "b", "c", "d"]) / best;
        assert!((ndcg_at_k(&r, &g, 20) - expected).abs() < 1e-12);
    }

    #[test]
    fn average_precision_examples() {
        // Relevant at ranks 1 and 2, two relevant total: AP = 1.
        let g = grades(&[("a", 1), ("b", 2)]);
        assert!((average_precision(&ranking(&["a", "b", "c"]), &g) - 1.0).abs() < 1e-15);
        // Single relevant at rank 4 of 4.
        let g = grades(&[("d", 1)]);
        assert!((average_precision(&ranking(&["a", "b", "c", "d"]), &g) - 0.25).abs() < 1e-15);
        // Nothing judged relevant.
        assert_eq!(average_precision(&ranking(&["a"]), &grades(&[("a", 0)])), 0.0);
    }

    #[test]
    fn precision_counts_relevant_in_window() {
        let docs: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
        let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let g: BTreeMap<String, i64> = (0..7).map(|i| (format!("d{i}"), 1)).collect();
        let r = ranking(&doc_refs);
        assert!((p_at_k(&r, &g, 20) - 0.35).abs() < 1e-15);
        // Short rankings count missing docs as non-relevant.
        assert!((p_at_k(&ranking(&["d0"]), &g, 20) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn qrels_parse_and_max_grade() {
        let q = parse_qrels("1 0 d1 2\n1 0 d2 -2\n2 0 d9 1\n", "mem").unwrap();
        assert_eq!(q.grades_for("1").unwrap()["d1"], 2);
        assert_eq!(q.grades_for("1").unwrap()["d2"], -2);
        assert_eq!(q.max_grade(), 2);
        assert!(parse_qrels("1 0 d1\n", "mem").is_err());
        assert!(parse_qrels("1 0 d1 x\n", "mem").is_err());
    }

    #[test]
    fn run_parse_resorts_and_warns_on_duplicates() {
        let text = "q1 Q0 d1 1 0.2 tag\nq1 Q0 d2 2 0.9 tag\nq1 Q0 d1 3 0.5 tag\n";
        let run = parse_run(text, "mem").unwrap();
        let r = &run.rankings["q1"];
        assert_eq!(r[0].0, "d2");
        assert_eq!(r[1].0, "d1");
        assert!((r[1].1 - 0.2).abs() < 1e-15, "first occurrence kept");
        assert_eq!(run.warnings.len(), 1);
    }

    #[test]
    fn run_format_round_trips() {
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut text = String::new();
        let mut expected: BTreeMap<String, Ranking> = BTreeMap::new();
        for q in 0..5 {
            let qid = format!("q{q}");
            // 6-decimal scores: the on-disk precision, so the round trip
            // is exact.
            let mut ranking: Ranking = (0..20)
                .map(|d| {
                    let score: f64 = format!("{:.6}", rng.random_range(0.0..1.0))
                        .parse()
                        .unwrap();
                    (format!("d{d:02}"), score)
                })
                .collect();
            ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            text.push_str(&format_run(&qid, &ranking, "probe"));
            expected.insert(qid, ranking);
        }
        let parsed = parse_run(&text, "mem").unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.rankings.len(), 5);
        for (qid, ranking) in expected {
            assert_eq!(parsed.rankings[&qid], ranking);
        }
    }

    #[test]
    fn evaluate_run_means_and_missing_queries() {
        let qrels = parse_qrels("1 0 d1 1\n2 0 d9 1\n", "mem").unwrap();
        let mut rankings = BTreeMap::new();
        rankings.insert("1".to_string(), ranking(&["d1"]));
        // Query 2 missing from the run: scores zero.
        let report = evaluate_run(&rankings, &qrels, 20, None).unwrap();
        assert_eq!(report.per_query.len(), 2);
        assert_eq!(report.per_query["2"].err, 0.0);
        assert!((report.mean.err - report.per_query["1"].err / 2.0).abs() < 1e-15);
        let tsv = report.to_tsv();
        assert!(tsv.lines().count() == 4 && tsv.contains("mean\t"));
    }

    fn tiny_index() -> InvertedIndex {
        use crate::toy_retrieval::{index_corpus, Document};
        index_corpus(&[
            Document::new("d1", "solar panel install"),
            Document::new("d2", "panel discussion notes"),
            Document::new("d3", "solar eclipse photos"),
        ])
        .unwrap()
    }

    #[test]
    fn best_of_m_degenerate_candidates_match_baseline() {
        let index = tiny_index();
        let g = grades(&[("d1", 2), ("d3", 1)]);
        let candidates = vec!["solar panel".to_string(), "solar panel".to_string()];
        let result = best_of_m("solar panel", &candidates, &index, &g, 1, 1000, 2500.0, 20, 2)
            .unwrap();
        assert_eq!(result.candidates.len(), 1, "duplicates collapse");
        assert!((result.best_curve[0] - result.baseline_err).abs() < 1e-15);
    }

    #[test]
    fn best_of_m_curve_is_non_decreasing_and_argmax_consistent() {
        let index = tiny_index();
        let g = grades(&[("d1", 2), ("d3", 1)]);
        let candidates: Vec<String> = ["panel discussion", "eclipse", "solar panel", "solar"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let result =
            best_of_m("solar", &candidates, &index, &g, 4, 1000, 2500.0, 20, 2).unwrap();
        for w in result.best_curve.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let last = *result.best_curve.last().unwrap();
        assert!((result.candidates[result.argmax].1 - last).abs() < 1e-15);
        // The original is among the candidates, so the final best cannot
        // fall below the baseline.
        assert!(last >= result.baseline_err);
        // A candidate retrieving nothing scores zero.
        let none = best_of_m("solar", &["zzz".to_string()], &index, &g, 1, 1000, 2500.0, 20, 2)
            .unwrap();
        assert_eq!(none.candidates[0].1, 0.0);
    }
}
