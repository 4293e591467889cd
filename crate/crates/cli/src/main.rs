use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glaqa::checkpoint::Checkpoint;
use glaqa::config::RunConfig;
use glaqa::dataset::{AnswerStore, Dataset, Split};
use glaqa::evaluation::{explain, Ranker};
use glaqa::model::ModelConfig;
use glaqa::par::Execution;
use glaqa::run::{evaluate_checkpoint, train_from_config};
use glaqa::synthetic::SyntheticSpec;
use glaqa::text::tokenize;
use glaqa::training::{grad_check_random, history_csv};
use glaqa::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;
const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "glaqa",
    version,
    about = "Global-local attention answer selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, its history CSV and vocabulary.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config field, e.g. `--set epochs=5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// History CSV path; defaults to `<out>.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Rank every question of a split in seeded pools and report P@1 and MRR.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = 500)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Rank without the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Rank all answers of a dataset file against a free-text question.
    Rank {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Write the attention weights of one question/answer pair as HTML and TSV.
    Explain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        question_id: u64,
        #[arg(long)]
        answer_id: u64,
        #[arg(long)]
        html: PathBuf,
        /// TSV path; defaults to the HTML path with a `.tsv` extension.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Write a seeded keyword-topic dataset.
    GenSynthetic {
        /// Comma-separated `key=value` generator settings.
        #[arg(long, default_value = "")]
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare backpropagated gradients with finite differences for every parameter group.
    GradCheck {
        /// Comma-separated toy dimensions: v, e, h, tf, proj.
        #[arg(long, default_value = "v=20,e=8,h=8,tf=4,proj=8")]
        dims: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidArgument { .. } => EXIT_USAGE,
            Error::Diverged { .. } => EXIT_ACCEPTANCE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            config,
            out,
            overrides,
            history,
        } => {
            let mut cfg = RunConfig::read(&config).map_err(usage)?;
            for o in &overrides {
                cfg.set(o).map_err(usage)?;
            }
            log::info!("resolved configuration:\n{}", cfg.to_toml());
            let data = Dataset::read(&cfg.data)?;
            let run = train_from_config(&cfg, &data)?;
            run.checkpoint.save(&out)?;
            let history = history.unwrap_or_else(|| suffixed(&out, ".history.csv"));
            write(&history, &history_csv(&run.history))?;
            let vocab = suffixed(&out, ".vocab");
            run.checkpoint.vocab.write_to(&vocab)?;
            if let Some(best) = run.best_epoch {
                log::info!("kept parameters from epoch {best}");
            }
            log::info!(
                "wrote {}, {} and {}",
                out.display(),
                history.display(),
                vocab.display()
            );
        }
        Command::Eval {
            ckpt,
            data,
            split,
            k,
            seed,
            sequential,
        } => {
            log::info!(
                "eval: ckpt={} data={} split={split} k={k} seed={seed} sequential={sequential}",
                ckpt.display(),
                data.display()
            );
            let ck = Checkpoint::load(&ckpt)?;
            log_checkpoint(&ck);
            let data = Dataset::read(&data)?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let report = evaluate_checkpoint(&ck, &data, split, k, seed, exec)?;
            print!("{}", report.to_text());
        }
        Command::Rank {
            ckpt,
            answers,
            question,
            top,
        } => {
            log::info!(
                "rank: ckpt={} answers={} top={top}",
                ckpt.display(),
                answers.display()
            );
            let ck = Checkpoint::load(&ckpt)?;
            log_checkpoint(&ck);
            let data = Dataset::read(&answers)?;
            let store = AnswerStore::encode(&data.answers, &ck.vocab)?;
            let ranker = Ranker::new(&ck.model, &store, store.ids(), Execution::Parallel)?;
            let q = ck.vocab.encode(&tokenize(&question));
            let ranked = ranker.rank_everything(&q)?;
            let text = |id: u64| {
                data.answers
                    .iter()
                    .find(|a| a.id == id)
                    .map_or("", |a| a.text.as_str())
            };
            println!("rank\tanswer_id\tscore\ttext");
            for (i, (id, score)) in ranked.iter().take(top).enumerate() {
                println!("{}\t{id}\t{score:.6}\t{}", i + 1, text(*id));
            }
        }
        Command::Explain {
            ckpt,
            data,
            question_id,
            answer_id,
            html,
            tsv,
        } => {
            log::info!(
                "explain: ckpt={} data={} question_id={question_id} answer_id={answer_id}",
                ckpt.display(),
                data.display()
            );
            let ck = Checkpoint::load(&ckpt)?;
            log_checkpoint(&ck);
            let data = Dataset::read(&data)?;
            let question = data
                .questions
                .iter()
                .find(|q| q.id == question_id)
                .ok_or_else(|| {
                    Error::Data(format!("question {question_id} is not in the dataset"))
                })?;
            let answer = data
                .answers
                .iter()
                .find(|a| a.id == answer_id)
                .ok_or_else(|| Error::Data(format!("answer {answer_id} is not in the dataset")))?;
            let q = ck.vocab.encode(&tokenize(&question.text));
            let a = ck.vocab.encode(&tokenize(&answer.text));
            let ex = explain(&ck.model, &ck.vocab, &q, &a)?;
            write(&html, &ex.to_html(&question.text))?;
            let tsv = tsv.unwrap_or_else(|| html.with_extension("tsv"));
            write(&tsv, &ex.to_tsv())?;
            println!("score={:.6}", ex.score);
        }
        Command::GenSynthetic { spec, seed, out } => {
            let mut s: SyntheticSpec = spec.parse().map_err(usage)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            log::info!("synthetic spec: {s:?}");
            let data = s.generate().map_err(usage)?;
            data.write(&out)?;
            log::info!(
                "wrote {} answers and {} questions to {}",
                data.answers.len(),
                data.questions.len(),
                out.display()
            );
        }
        Command::GradCheck { dims, seed } => {
            let cfg = parse_dims(&dims).map_err(usage)?;
            log::info!("grad-check: {cfg:?} seed={seed}");
            let checks = grad_check_random(&cfg, seed)?;
            println!("group\tparameters\tmax_relative_error");
            let mut failed = Vec::new();
            for c in &checks {
                println!(
                    "{}\t{}\t{:.3e}",
                    c.group, c.parameters, c.max_relative_error
                );
                if c.max_relative_error.is_nan() || c.max_relative_error >= GRAD_TOLERANCE {
                    failed.push(c.group);
                }
            }
            if !failed.is_empty() {
                return Err(Failure {
                    code: EXIT_ACCEPTANCE,
                    message: format!(
                        "gradient check above {GRAD_TOLERANCE:e} for {}",
                        failed.join(", ")
                    ),
                });
            }
        }
    }
    Ok(())
}

fn log_checkpoint(ck: &Checkpoint) {
    log::info!("model configuration: {:?}", ck.model.config);
    log::info!("training configuration: {:?}", ck.train);
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn parse_dims(dims: &str) -> Result<ModelConfig, Error> {
    let mut cfg = ModelConfig::toy(20);
    for pair in dims.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("dimension {pair:?} is not key=value")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("dimension {key}: cannot parse {value:?}")))?;
        match key.trim() {
            "v" => cfg.vocab_size = value,
            "e" => cfg.embed_dim = value,
            "h" => cfg.hidden_dim = value,
            "tf" => cfg.tf_dim = value,
            "proj" => cfg.proj_dim = value,
            other => {
                return Err(Error::Config(format!(
                    "unknown dimension {other:?} (expected v, e, h, tf, proj)"
                )))
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
