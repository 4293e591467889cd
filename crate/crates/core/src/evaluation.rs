//! Candidate pools, ranking, P@1 / MRR and attention explanations.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index;

use crate::dataset::{AnswerStore, EncodedQuestion};
use crate::error::{Error, Result};
use crate::model::{Encoded, Model};
use crate::par::Execution;
use crate::rng::Rng;
use crate::text::Vocabulary;

/// Candidates to rank for one question, with the ids that count as correct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePool {
    pub question_id: u64,
    pub candidates: Vec<u64>,
    pub correct: Vec<u64>,
}

impl CandidatePool {
    pub fn new(question_id: u64, candidates: Vec<u64>, correct: Vec<u64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Data(format!(
                "pool for question {question_id} is empty"
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = candidates.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::Data(format!(
                "pool for question {question_id} repeats candidate {dup}"
            )));
        }
        if correct.is_empty() || correct.iter().any(|c| !seen.contains(c)) {
            return Err(Error::Data(format!(
                "pool for question {question_id} must contain every correct answer"
            )));
        }
        Ok(Self {
            question_id,
            candidates,
            correct,
        })
    }
}

/// Candidates ordered by descending score (ties by ascending id).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPool {
    pub question_id: u64,
    pub ranking: Vec<(u64, f64)>,
    /// 1-based rank of the highest-ranked correct candidate.
    pub best_correct_rank: usize,
}

/// Sorts `(id, score)` pairs by descending score, breaking ties by ascending id.
pub fn sort_ranking(ranking: &mut [(u64, f64)]) {
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

impl RankedPool {
    pub fn from_scores(pool: &CandidatePool, scores: &[f64]) -> Result<Self> {
        if scores.len() != pool.candidates.len() {
            return Err(Error::invalid(
                "rank_pool",
                format!(
                    "{} scores for {} candidates",
                    scores.len(),
                    pool.candidates.len()
                ),
            ));
        }
        let mut ranking: Vec<(u64, f64)> = pool
            .candidates
            .iter()
            .copied()
            .zip(scores.iter().copied())
            .collect();
        sort_ranking(&mut ranking);
        let best_correct_rank = ranking
            .iter()
            .position(|(id, _)| pool.correct.contains(id))
            .map(|p| p + 1)
            .ok_or_else(|| {
                Error::Data(format!(
                    "pool for question {} has no correct answer",
                    pool.question_id
                ))
            })?;
        Ok(Self {
            question_id: pool.question_id,
            ranking,
            best_correct_rank,
        })
    }
}

fn require_results(results: &[RankedPool]) -> Result<()> {
    if results.is_empty() {
        Err(Error::invalid("metrics", "no ranked pools"))
    } else {
        Ok(())
    }
}

/// Fraction of pools whose top candidate is correct.
pub fn precision_at_1(results: &[RankedPool]) -> Result<f64> {
    require_results(results)?;
    let hits = results.iter().filter(|r| r.best_correct_rank == 1).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Mean reciprocal best-correct rank.
pub fn mrr(results: &[RankedPool]) -> Result<f64> {
    require_results(results)?;
    let total: f64 = results
        .iter()
        .map(|r| 1.0 / r.best_correct_rank as f64)
        .sum();
    Ok(total / results.len() as f64)
}

/// One pool per question: its correct answers plus uniformly drawn other answers, `k` in total.
pub fn build_pools(
    questions: &[&EncodedQuestion],
    store: &AnswerStore,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<CandidatePool>> {
    if k == 0 {
        return Err(Error::Config("pool size k must be at least 1".into()));
    }
    if store.len() < k {
        return Err(Error::Data(format!(
            "answer store holds {} answers, fewer than the pool size {k}",
            store.len()
        )));
    }
    questions
        .iter()
        .map(|q| {
            let correct: HashSet<u64> = q.answers.iter().copied().collect();
            if correct.len() > k {
                return Err(Error::Data(format!(
                    "question {} has {} correct answers, more than the pool size {k}",
                    q.id,
                    correct.len()
                )));
            }
            let others: Vec<u64> = store
                .ids()
                .iter()
                .copied()
                .filter(|id| !correct.contains(id))
                .collect();
            let mut candidates: Vec<u64> = q
                .answers
                .iter()
                .copied()
                .filter({
                    let mut seen = HashSet::new();
                    move |id| seen.insert(*id)
                })
                .collect();
            let need = k - candidates.len();
            candidates.extend(
                index::sample(rng, others.len(), need)
                    .into_iter()
                    .map(|i| others[i]),
            );
            CandidatePool::new(q.id, candidates, q.answers.clone())
        })
        .collect()
}

/// Scores pools against a read-only model, reusing answer encodings across pools.
pub struct Ranker<'m> {
    model: &'m Model,
    answers: HashMap<u64, Encoded>,
    exec: Execution,
}

impl<'m> Ranker<'m> {
    /// Encodes the answers in `ids` from `store`.
    pub fn new(
        model: &'m Model,
        store: &AnswerStore,
        ids: &[u64],
        exec: Execution,
    ) -> Result<Self> {
        let mut unique: Vec<u64> = ids.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let encoded = exec.try_map(&unique, |&id| model.encode(store.tokens(id)?))?;
        Ok(Self {
            model,
            answers: unique.into_iter().zip(encoded).collect(),
            exec,
        })
    }

    /// Encodes every answer that appears in `pools`.
    pub fn for_pools(
        model: &'m Model,
        store: &AnswerStore,
        pools: &[CandidatePool],
        exec: Execution,
    ) -> Result<Self> {
        let ids: Vec<u64> = pools
            .iter()
            .flat_map(|p| p.candidates.iter().copied())
            .collect();
        Self::new(model, store, &ids, exec)
    }

    fn answer(&self, id: u64) -> Result<&Encoded> {
        self.answers
            .get(&id)
            .ok_or_else(|| Error::Data(format!("answer {id} is not in the answer store")))
    }

    /// Scores of `candidates` for an encoded question, in candidate order.
    pub fn scores(&self, question: &Encoded, candidates: &[u64]) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|&id| Ok(self.model.score_encoded(question, self.answer(id)?)?.score))
            .collect()
    }

    pub fn rank(&self, question: &[usize], pool: &CandidatePool) -> Result<RankedPool> {
        let q = self.model.encode(question)?;
        RankedPool::from_scores(pool, &self.scores(&q, &pool.candidates)?)
    }

    /// Ranks each pool against the question with the matching id.
    pub fn rank_all(
        &self,
        questions: &[&EncodedQuestion],
        pools: &[CandidatePool],
    ) -> Result<Vec<RankedPool>> {
        let by_id: HashMap<u64, &EncodedQuestion> = questions.iter().map(|q| (q.id, *q)).collect();
        self.exec.try_map(pools, |pool| {
            let q = by_id
                .get(&pool.question_id)
                .ok_or_else(|| Error::Data(format!("no question with id {}", pool.question_id)))?;
            self.rank(&q.tokens, pool)
        })
    }

    /// Every encoded answer ranked against a question.
    pub fn rank_everything(&self, question: &[usize]) -> Result<Vec<(u64, f64)>> {
        let q = self.model.encode(question)?;
        let ids: Vec<u64> = self.answers.keys().copied().collect();
        let scores = self.exec.try_map(&ids, |&id| {
            Ok(self.model.score_encoded(&q, self.answer(id)?)?.score)
        })?;
        let mut ranking: Vec<(u64, f64)> = ids.into_iter().zip(scores).collect();
        sort_ranking(&mut ranking);
        Ok(ranking)
    }
}

/// Ranks a single pool, encoding its candidates on the fly.
pub fn rank_pool(
    model: &Model,
    question: &[usize],
    pool: &CandidatePool,
    store: &AnswerStore,
) -> Result<RankedPool> {
    Ranker::new(model, store, &pool.candidates, Execution::Sequential)?.rank(question, pool)
}

/// Builds pools for `questions` and ranks them.
pub fn evaluate(
    model: &Model,
    questions: &[&EncodedQuestion],
    store: &AnswerStore,
    k: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<Vec<RankedPool>> {
    let pools = build_pools(questions, store, k, rng)?;
    Ranker::for_pools(model, store, &pools, exec)?.rank_all(questions, &pools)
}

/// Summary metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub split: String,
    pub n_pools: usize,
    pub k: usize,
    pub p_at_1: f64,
    pub mrr: f64,
}

pub const REPORT_HEADER: &str =
    "# p_at_1: a pool counts as solved when any correct answer is ranked first; mrr uses the best-ranked correct answer";

impl MetricsReport {
    pub fn new(split: impl Into<String>, k: usize, results: &[RankedPool]) -> Result<Self> {
        Ok(Self {
            split: split.into(),
            n_pools: results.len(),
            k,
            p_at_1: precision_at_1(results)?,
            mrr: mrr(results)?,
        })
    }

    /// Header comment followed by `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "{REPORT_HEADER}\nsplit={}\nn_pools={}\nk={}\np_at_1={:.6}\nmrr={:.6}\n",
            self.split, self.n_pools, self.k, self.p_at_1, self.mrr
        )
    }
}

/// Answer tokens with the attention weight each received.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
    pub score: f64,
}

/// Attention weights over the answer tokens for one question/answer pair.
pub fn explain(
    model: &Model,
    vocab: &Vocabulary,
    question: &[usize],
    answer: &[usize],
) -> Result<Explanation> {
    let q = model.encode(question)?;
    let a = model.encode(answer)?;
    let scored = model.score_encoded(&q, &a)?;
    let trace = scored.attention.ok_or_else(|| {
        Error::Config("the configured head has no attention weights to explain".into())
    })?;
    let tokens = vocab.decode(&a.ids);
    if tokens.len() != trace.weights.len() {
        return Err(Error::invalid(
            "explain",
            format!(
                "{} tokens but {} attention weights",
                tokens.len(),
                trace.weights.len()
            ),
        ));
    }
    Ok(Explanation {
        tokens,
        weights: trace.weights,
        score: scored.score,
    })
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

impl Explanation {
    /// One `<span>` per token; background opacity is the weight relative to the largest weight.
    pub fn to_html(&self, title: &str) -> String {
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        let mut spans = String::new();
        for (tok, w) in self.tokens.iter().zip(&self.weights) {
            let intensity = if max > 0.0 { w / max } else { 0.0 };
            writeln!(
                spans,
                "<span title=\"{w:.6}\" style=\"background-color: rgba(255, 0, 0, {intensity:.4})\">{}</span>",
                escape_html(tok)
            )
            .expect("writing to a String cannot fail");
        }
        format!(
            "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{t}</title>\n</head>\n<body>\n<p>{t}</p>\n<p>score={s:.6}</p>\n<p>\n{spans}</p>\n</body>\n</html>\n",
            t = escape_html(title),
            s = self.score,
        )
    }

    /// `token<TAB>weight` lines under a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("token\tweight\n");
        for (tok, w) in self.tokens.iter().zip(&self.weights) {
            writeln!(out, "{tok}\t{w}").expect("writing to a String cannot fail");
        }
        out
    }
}
