//! Seeded keyword-topic corpus generator.
//!
//! Every topic owns one keyword (`k…`) and a few related words (`r…`). Its
//! answers place the keyword and related words at random positions inside
//! Zipf-distributed filler (`n…`); its questions are the keyword among filler.
//! Keywords never occur outside their own topic.

use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnswerRecord, Dataset, QuestionRecord, Split};
use crate::error::{Error, Result};
use crate::rng::{substream, SYNTHETIC};

pub const KEYWORD_PREFIX: char = 'k';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Distinct surface words: keywords, related words and filler.
    pub vocab: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub answer_len: usize,
    pub question_len: usize,
    /// Evaluation pool size the corpus must support.
    pub pool_size: usize,
    /// Number of topics; `None` picks `max(pool_size, vocab / 10)`.
    pub topics: Option<usize>,
    pub related: usize,
    pub answers_per_topic: usize,
    /// Exponent of the filler word distribution.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            vocab: 200,
            train: 500,
            valid: 0,
            test: 100,
            answer_len: 40,
            question_len: 7,
            pool_size: 10,
            topics: None,
            related: 2,
            answers_per_topic: 1,
            zipf: 1.0,
            seed: 1,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// Parses `key=value` pairs separated by commas, starting from the defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("spec entry {pair:?} is not key=value")))?;
            spec.set(key.trim(), value.trim())?;
        }
        Ok(spec)
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("spec field {key}: cannot parse {value:?}")))
}

impl SyntheticSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "vocab" | "v" => self.vocab = parse_num(key, value)?,
            "train" => self.train = parse_num(key, value)?,
            "valid" => self.valid = parse_num(key, value)?,
            "test" => self.test = parse_num(key, value)?,
            "answer_len" => self.answer_len = parse_num(key, value)?,
            "question_len" => self.question_len = parse_num(key, value)?,
            "pool_size" | "k" => self.pool_size = parse_num(key, value)?,
            "topics" => self.topics = Some(parse_num(key, value)?),
            "related" => self.related = parse_num(key, value)?,
            "answers_per_topic" => self.answers_per_topic = parse_num(key, value)?,
            "zipf" => self.zipf = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown spec field {other:?}"))),
        }
        Ok(())
    }

    pub fn topic_count(&self) -> usize {
        self.topics
            .unwrap_or_else(|| self.pool_size.max(self.vocab / 10))
    }

    fn check(&self) -> Result<usize> {
        let t = self.topic_count();
        let infeasible =
            |msg: String| Err(Error::Config(format!("infeasible synthetic spec: {msg}")));
        if self.vocab < 10 {
            return infeasible(format!("vocab {} is below the minimum of 10", self.vocab));
        }
        if t == 0 || self.answers_per_topic == 0 {
            return infeasible("topics and answers_per_topic must be positive".into());
        }
        let topic_words = t * (1 + self.related);
        if topic_words >= self.vocab {
            return infeasible(format!(
                "{t} topics need {topic_words} keyword and related words, leaving no filler in a vocabulary of {}",
                self.vocab
            ));
        }
        if t * self.answers_per_topic < self.pool_size {
            return infeasible(format!(
                "{} answers cannot fill pools of size {}",
                t * self.answers_per_topic,
                self.pool_size
            ));
        }
        if self.answer_len < 1 + self.related || self.question_len == 0 {
            return infeasible(
                "answers must fit the keyword and related words; questions need a token".into(),
            );
        }
        if self.zipf.is_nan() || self.zipf < 0.0 {
            return infeasible("zipf exponent must be non-negative".into());
        }
        Ok(t)
    }

    pub fn generate(&self) -> Result<Dataset> {
        let topics = self.check()?;
        let noise_count = self.vocab - topics * (1 + self.related);
        let tw = width(topics);
        let keyword = |t: usize| format!("{KEYWORD_PREFIX}{t:0tw$}");
        let related = |t: usize, j: usize| format!("r{t:0tw$}{}", letter(j));
        let nw = width(noise_count);
        let noise: Vec<String> = (0..noise_count).map(|i| format!("n{i:0nw$}")).collect();
        let zipf = WeightedIndex::new((0..noise_count).map(|r| ((r + 1) as f64).powf(-self.zipf)))
            .map_err(|e| Error::Config(format!("filler distribution: {e}")))?;
        let mut rng = substream(self.seed, SYNTHETIC);

        let mut answers = Vec::with_capacity(topics * self.answers_per_topic);
        for t in 0..topics {
            for _ in 0..self.answers_per_topic {
                let mut tokens: Vec<String> = (0..self.answer_len)
                    .map(|_| noise[zipf.sample(&mut rng)].clone())
                    .collect();
                let mut slots: Vec<usize> = (0..self.answer_len).collect();
                slots.shuffle(&mut rng);
                tokens[slots[0]] = keyword(t);
                for j in 0..self.related {
                    tokens[slots[1 + j]] = related(t, j);
                }
                answers.push(AnswerRecord {
                    id: answers.len() as u64,
                    text: tokens.join(" "),
                });
            }
        }

        let splits = [
            (Split::Train, self.train),
            (Split::Valid, self.valid),
            (Split::Test, self.test),
        ];
        let mut questions = Vec::new();
        for (split, count) in splits {
            for _ in 0..count {
                let t = rng.gen_range(0..topics);
                let mut tokens: Vec<String> = (0..self.question_len)
                    .map(|_| noise[zipf.sample(&mut rng)].clone())
                    .collect();
                let pos = rng.gen_range(0..self.question_len);
                tokens[pos] = keyword(t);
                let first = (t * self.answers_per_topic) as u64;
                questions.push(QuestionRecord {
                    id: questions.len() as u64,
                    text: tokens.join(" "),
                    answers: (first..first + self.answers_per_topic as u64).collect(),
                    split,
                });
            }
        }
        Ok(Dataset { answers, questions })
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

fn letter(j: usize) -> String {
    let mut s = String::new();
    let mut j = j;
    loop {
        s.insert(0, char::from(b'a' + (j % 26) as u8));
        if j < 26 {
            break;
        }
        j = j / 26 - 1;
    }
    s
}

/// The topic keyword of a generated question, if any.
pub fn keyword_in(text: &str) -> Option<&str> {
    text.split_whitespace()
        .find(|w| w.starts_with(KEYWORD_PREFIX))
}
