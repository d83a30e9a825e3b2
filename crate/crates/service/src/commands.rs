//! Command-line surface of the `supportbot` binary.

use crate::config::{load_scenario, ServiceConfig};
use crate::service::{load_classifier, load_models, retrieval_index, Models};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use supportbot_core::classifier::{cross_validate, train_classifier, ClassifierConfig};
use supportbot_core::community::SimScenario;
use supportbot_core::corpus::{
    clean_pairs, load_corpus_file, oversample_balance, read_stopwords, write_corpus, ContentFilter, Corpus, LoadOptions, TopCategory,
    Vocabulary, DAY_MS,
};
use supportbot_core::evaluation::{
    bleu, chi2_2x2, cohen_kappa, compute_metrics, corpus_bleu, icc_3_1, t_from_summary, t_test_ind, Dimension, MetricsConfig, RatingMatrix,
    Smoothing, Summary, TVariant,
};
use supportbot_core::generator::{train_generator, Bm25Index, GeneratorConfig};
use supportbot_core::pipeline::{run_simulated, sim_classifier, warmup_pairs, EventLog, PipelineConfig, ResponderKind};
use supportbot_core::text::Tokenizer;

#[derive(Debug, Parser)]
#[command(name = "supportbot", version, about = "Auto-reply social-support bot for online communities")]
pub struct Cli {
    /// Service configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed (pipeline, scenario, training).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the post classifier on a labelled corpus.
    TrainClassifier(TrainClassifierArgs),
    /// Train the reply generator on the first-reply pairs of a corpus.
    TrainGenerator(TrainGeneratorArgs),
    /// Run the pipeline against the simulated community on a virtual clock.
    Simulate(SimulateArgs),
    /// Run the live service: pipeline loop plus operator API.
    Run,
    /// Compute the experiment report from an event log.
    Report(ReportArgs),
    /// Sentence and corpus BLEU of candidate lines against reference lines.
    EvalBleu(EvalBleuArgs),
    /// Closed-form statistics on summary numbers or rating files.
    EvalStats {
        #[command(subcommand)]
        test: StatsCommand,
    },
    /// Classify one post and draft a reply with the configured models.
    Respond {
        #[arg(long)]
        text: String,
    },
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Corpus file whose posts carry `category`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also report k-fold cross-validation.
    #[arg(long)]
    pub cv: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainGeneratorArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// One advertisement or offensive phrase per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML or JSON); defaults apply when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Intake period in days.
    #[arg(long)]
    pub days: Option<f64>,
    /// Event log; an existing log is resumed.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the simulated community as a corpus file.
    #[arg(long)]
    pub corpus_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report posts whose tracking window is still open.
    #[arg(long)]
    pub allow_open: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SmoothingArg {
    None,
    AddOne,
}

#[derive(Debug, Args)]
pub struct EvalBleuArgs {
    /// One candidate per line.
    #[arg(long)]
    pub candidates: PathBuf,
    /// One line per candidate; multiple references separated by tabs.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long, value_enum, default_value = "add-one")]
    pub smoothing: SmoothingArg,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Pearson chi-square on the 2x2 table [[a, b], [c, d]].
    Chi2 {
        a: u64,
        b: u64,
        c: u64,
        d: u64,
        #[arg(long)]
        yates: bool,
    },
    /// Two-sample t from means, standard deviations and sizes.
    TSummary {
        mean1: f64,
        sd1: f64,
        n1: u64,
        mean2: f64,
        sd2: f64,
        n2: u64,
        #[arg(long)]
        welch: bool,
    },
    /// Two-sample t on files of whitespace-separated numbers.
    TTest {
        x: PathBuf,
        y: PathBuf,
        #[arg(long)]
        welch: bool,
    },
    /// Cohen's kappa on a file of two whitespace-separated label columns.
    Kappa { file: PathBuf },
    /// ICC(3,1) on a file with one line of scores per rater.
    Icc { file: PathBuf },
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref().map(ServiceConfig::load).transpose()?;
    match cli.command {
        Command::TrainClassifier(a) => train_classifier_cmd(a, cli.seed),
        Command::TrainGenerator(a) => train_generator_cmd(a, cli.seed),
        Command::Simulate(a) => simulate(a, config.as_ref(), cli.seed),
        Command::Run => {
            let mut config = config.context("run needs --config")?;
            if let Some(seed) = cli.seed {
                config.pipeline.seed = seed;
            }
            tokio::runtime::Runtime::new()?.block_on(crate::run_service(config))
        }
        Command::Report(a) => report(a),
        Command::EvalBleu(a) => eval_bleu(a),
        Command::EvalStats { test } => eval_stats(test),
        Command::Respond { text } => respond(&text, config.as_ref()),
    }
}

fn load(path: &Path) -> Result<Corpus> {
    let report = load_corpus_file(path, &LoadOptions::default())?;
    if !report.rejections.is_empty() {
        log::warn!("{}: {} records rejected", path.display(), report.rejections.len());
    }
    Ok(report.corpus)
}

fn train_classifier_cmd(a: TrainClassifierArgs, seed: Option<u64>) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let mut config = ClassifierConfig::default();
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let examples = oversample_balance(&corpus.labeled_examples(), config.seed)?;
    let tok = Tokenizer::default();
    let vocab = Vocabulary::build(examples.iter().map(|e| tok.tokenize(&e.post_text)), config.vocab_size)?;
    let (model, history) = train_classifier(&examples, &vocab, tok, &config)?;
    println!("{}", json!({ "examples": examples.len(), "loss": history }));
    if let Some(k) = a.cv {
        let cv = cross_validate(&examples, &vocab, tok, &config, k)?;
        println!("{}", json!({ "cv_mean_accuracy": cv.mean_accuracy, "macro_f1": cv.macro_f1() }));
    }
    model.save(&a.out)?;
    Ok(())
}

fn train_generator_cmd(a: TrainGeneratorArgs, seed: Option<u64>) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let tok = Tokenizer::default();
    let mut filter = ContentFilter::new(tok);
    if let Some(path) = &a.stopwords {
        filter = filter.with_advertisement_words(&read_stopwords(path)?);
    }
    let pairs = clean_pairs(&corpus, &filter);
    let mut config = GeneratorConfig::default();
    config.train_steps = a.steps.unwrap_or(config.train_steps);
    config.hidden = a.hidden.unwrap_or(config.hidden);
    config.embed_dim = a.embed.unwrap_or(config.embed_dim);
    config.batch_size = a.batch.unwrap_or(config.batch_size);
    config.seed = seed.unwrap_or(config.seed);
    let vocab = Vocabulary::build(pairs.iter().flat_map(|p| [tok.tokenize(&p.post_text), tok.tokenize(&p.response_text)]), 5000)?;
    let (model, history) = train_generator(&pairs, &vocab, tok, &config)?;
    println!("{}", json!({ "pairs": pairs.len(), "loss": history }));
    model.save(&a.out)?;
    Ok(())
}

fn simulate(a: SimulateArgs, config: Option<&ServiceConfig>, seed: Option<u64>) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => SimScenario::default(),
    };
    let mut pipeline = match config {
        Some(c) => c.pipeline.clone(),
        None => PipelineConfig { responder: ResponderKind::Bm25, ..Default::default() },
    };
    if let Some(days) = a.days {
        scenario.duration_ms = (days * DAY_MS as f64).round() as i64;
    }
    if let Some(s) = seed {
        scenario.seed = s;
        pipeline.seed = s;
    }
    let (classifier, responder): Models = match config {
        Some(c) => {
            let c = ServiceConfig { pipeline: pipeline.clone(), ..c.clone() };
            load_models(&c, Some(&scenario))?
        }
        None => {
            let index: Bm25Index = retrieval_index(&warmup_pairs(&scenario)?)?;
            (Box::new(sim_classifier()), Box::new(index))
        }
    };
    let log = EventLog::open(&a.out)?;
    let out = run_simulated(&scenario, &pipeline, classifier.as_ref(), responder.as_ref(), log, None)?;
    let state = out.pipeline.state();
    println!(
        "{}",
        json!({
            "posts_seen": state.posts_seen(),
            "enrolled": state.records().count(),
            "published": state.records().filter(|r| r.bot_response_id.is_some()).count(),
            "events": out.pipeline.entries().len(),
            "log": a.out,
        })
    );
    if let Some(path) = &a.corpus_out {
        let sim = out.port.state();
        let corpus = Corpus::new(sim.posts().to_vec(), sim.responses().to_vec());
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
        write_corpus(&corpus, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let entries = EventLog::read(&a.log)?;
    let config = MetricsConfig { require_closed: !a.allow_open, ..Default::default() };
    let report = compute_metrics(&entries, &config)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn eval_bleu(a: EvalBleuArgs) -> Result<()> {
    let tok = Tokenizer::default();
    let candidates: Vec<Vec<String>> = read_lines(&a.candidates)?.iter().map(|l| tok.tokenize(l)).collect();
    let references: Vec<Vec<Vec<String>>> =
        read_lines(&a.references)?.iter().map(|l| l.split('\t').map(|r| tok.tokenize(r)).collect()).collect();
    if candidates.len() != references.len() {
        bail!("{} candidates but {} reference lines", candidates.len(), references.len());
    }
    let smoothing = match a.smoothing {
        SmoothingArg::None => Smoothing::None,
        SmoothingArg::AddOne => Smoothing::AddK(1.0),
    };
    for (i, (c, r)) in candidates.iter().zip(&references).enumerate() {
        println!("{}\t{}", i + 1, bleu(c, r, a.max_n, smoothing)?);
    }
    println!("corpus\t{}", corpus_bleu(&candidates, &references, a.max_n, smoothing)?);
    Ok(())
}

fn numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.split_whitespace().map(|t| t.parse::<f64>().with_context(|| format!("not a number: {t}"))).collect()
}

fn eval_stats(test: StatsCommand) -> Result<()> {
    let variant = |welch: bool| if welch { TVariant::Welch } else { TVariant::Pooled };
    let value = match test {
        StatsCommand::Chi2 { a, b, c, d, yates } => serde_json::to_value(chi2_2x2(a, b, c, d, yates)?)?,
        StatsCommand::TSummary { mean1, sd1, n1, mean2, sd2, n2, welch } => serde_json::to_value(t_from_summary(
            Summary { mean: mean1, sd: sd1, n: n1 },
            Summary { mean: mean2, sd: sd2, n: n2 },
            variant(welch),
        )?)?,
        StatsCommand::TTest { x, y, welch } => serde_json::to_value(t_test_ind(&numbers(&x)?, &numbers(&y)?, variant(welch))?)?,
        StatsCommand::Kappa { file } => {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for line in read_lines(&file)?.iter().filter(|l| !l.trim().is_empty()) {
                let cols: Vec<&str> = line.split_whitespace().collect();
                if cols.len() != 2 {
                    bail!("kappa lines need two labels: {line:?}");
                }
                a.push(cols[0].to_string());
                b.push(cols[1].to_string());
            }
            json!({ "kappa": cohen_kappa(&a, &b)? })
        }
        StatsCommand::Icc { file } => {
            let rows = read_lines(&file)?
                .iter()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.split_whitespace().map(|t| t.parse::<f64>().with_context(|| format!("not a number: {t}"))).collect())
                .collect::<Result<Vec<Vec<f64>>>>()?;
            json!({ "icc_3_1": icc_3_1(&RatingMatrix::new(Dimension::EmotionalSupport, rows)?)? })
        }
    };
    println!("{value}");
    Ok(())
}

fn respond(text: &str, config: Option<&ServiceConfig>) -> Result<()> {
    let config = config.context("respond needs --config")?;
    let scenario = config.community.simulator.as_deref().map(load_scenario).transpose()?;
    let (classifier, responder) = match (&config.models.classifier, &scenario) {
        (Some(path), None) => {
            let c = load_classifier(path)?;
            let (_, r) = load_models(config, None)?;
            (Box::new(c) as Box<dyn supportbot_core::pipeline::PostClassifier>, r)
        }
        _ => load_models(config, scenario.as_ref())?,
    };
    let category = classifier.classify(text)?;
    if category == TopCategory::Informational {
        println!("{}", json!({ "category": category, "reply": null }));
        return Ok(());
    }
    let (reply, source) = responder.respond(text)?;
    println!("{}", json!({ "category": category, "reply": reply, "source": source }));
    Ok(())
}
