//! Subcommand implementations.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde_json::json;
use vizseq::bundled;
use vizseq::checkpoint;
use vizseq::corpus::{generate_pairs, infer_schema, load_corpus_dir, load_dataset_dir, Dataset, TrainingPair};
use vizseq::decoder::export_attention;
use vizseq::eval::{evaluate, render_report, EvalConfig, Thresholds};
use vizseq::pipeline::{generate, GenerateError};
use vizseq::tokenizer::Vocabs;
use vizseq::train::{split_examples, train, TrainConfig};
use vizseq::validate::{score_batch, validate_text, GrammarSubset};

use crate::{data_err, load_dataset_file, load_model, usage_err, CliError, CliResult, CHECKPOINT_ENV};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of corpus examples; defaults to the bundled corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Where to write the final checkpoint.
    #[arg(long, short)]
    pub out: PathBuf,
    /// TOML file with `TrainConfig` fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub d_cell: Option<usize>,
    #[arg(long)]
    pub d_attn: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Rows sampled per corpus example.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Fraction of corpus examples held out for log perplexity.
    #[arg(long, default_value_t = 0.05)]
    pub heldout_fraction: f64,
    /// Line-delimited JSON training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Writes the training history as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

pub fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let mut config: TrainConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(CliError::Usage)?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display())).map_err(CliError::Usage)?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { config.$f = v; } )* };
    }
    set!(steps, batch_size, learning_rate, dropout, max_len, d_cell, seed, eval_every, checkpoint_every);
    if a.d_attn.is_some() {
        config.d_attn = a.d_attn;
    }
    if a.log.is_some() {
        config.log_path = a.log.clone();
    }
    if config.checkpoint_every > 0 && config.checkpoint_path.is_none() {
        config.checkpoint_path = Some(a.out.clone());
    }
    if a.samples == 0 || !(0.0..1.0).contains(&a.heldout_fraction) {
        return Err(usage_err("--samples must be positive and --heldout-fraction in [0, 1)"));
    }
    let dir = a.corpus.clone().unwrap_or_else(bundled::corpus_dir);
    let corpus = load_corpus_dir(&dir).map_err(data_err)?;
    if corpus.is_empty() {
        return Err(data_err(anyhow::anyhow!("no examples in {}", dir.display())));
    }
    let (train_ex, held_ex) = split_examples(&corpus, a.heldout_fraction, config.seed);
    let pairs = generate_pairs(&train_ex, a.samples, Some(config.max_len), config.seed).map_err(data_err)?;
    let held = generate_pairs(&held_ex, a.samples, Some(config.max_len), config.seed).map_err(data_err)?;
    let all: Vec<TrainingPair> = pairs.iter().chain(&held).cloned().collect();
    let vocabs = Vocabs::build(&all);
    println!(
        "{} training pairs from {} examples, {} held-out pairs; vocabularies {}/{}",
        pairs.len(),
        train_ex.len(),
        held.len(),
        vocabs.source.len(),
        vocabs.target.len()
    );
    let (model, history) = train::<f32>(&pairs, &held, &vocabs, &config).map_err(|e| match e {
        vizseq::train::TrainError::InvalidConfig(_) => CliError::Usage(e.into()),
        vizseq::train::TrainError::Checkpoint(_) => CliError::Checkpoint(e.into()),
        _ => CliError::Data(e.into()),
    })?;
    checkpoint::save(&model, &a.out).map_err(|e| CliError::Checkpoint(e.into()))?;
    if let Some(p) = &a.history {
        let text = serde_json::to_string_pretty(&history).expect("history serializes");
        fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(CliError::Data)?;
    }
    if let Some(last) = history.points.last() {
        println!(
            "step {}: train nll/char {:.4}, held-out log perplexity {}",
            last.step,
            last.train_nll,
            last.heldout_log_perplexity.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
    }
    println!("checkpoint written to {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint path.
    #[arg(long, env = CHECKPOINT_ENV)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// JSON record array or CSV file.
    #[arg(long, conflicts_with = "dataset")]
    pub data: Option<PathBuf>,
    /// Name of a bundled held-out dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Row of the dataset to translate.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
}

impl InputArgs {
    fn load(&self) -> CliResult<Dataset> {
        match (&self.data, &self.dataset) {
            (Some(p), _) => load_dataset_file(p),
            (None, Some(name)) => bundled::heldout_dataset(name).ok_or_else(|| {
                let names: Vec<&str> = bundled::HELDOUT.iter().map(|(n, _)| *n).collect();
                usage_err(format!("unknown dataset {name}; bundled: {}", names.join(", ")))
            }),
            (None, None) => Err(usage_err("one of --data or --dataset is required")),
        }
    }
}

fn generate_err(e: GenerateError) -> CliError {
    match e {
        GenerateError::RowOutOfRange { .. } => CliError::Usage(e.into()),
        _ => CliError::Data(e.into()),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Beam width; 1 decodes greedily.
    #[arg(long, default_value_t = 15)]
    pub beam: usize,
    /// Writes candidates as JSON lines; otherwise they go to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn generate_cmd(a: GenerateArgs) -> CliResult<()> {
    if a.beam == 0 {
        return Err(usage_err("--beam must be at least 1"));
    }
    let (model, id) = load_model(&a.model.checkpoint)?;
    let ds = a.input.load()?;
    let (_, _, specs) = generate(&model, &ds, a.input.row, a.beam, false).map_err(generate_err)?;
    let lines: Vec<String> = specs
        .iter()
        .enumerate()
        .map(|(rank, g)| {
            json!({
                "rank": rank,
                "spec": g.spec,
                "score": g.score,
                "finished": g.finished,
                "language_valid": g.validity.language_valid,
                "visualization_valid": g.validity.visualization_valid,
                "phantom_fields": g.validity.phantom_fields,
                "checkpoint_id": id,
            })
            .to_string()
        })
        .collect();
    match &a.out {
        Some(p) => {
            fs::write(p, lines.join("\n") + "\n").with_context(|| format!("writing {}", p.display())).map_err(CliError::Data)?;
            let valid = specs.iter().filter(|g| g.validity.visualization_valid).count();
            println!("{} candidates ({valid} visualization-valid) written to {}", specs.len(), p.display());
        }
        None => lines.iter().for_each(|l| println!("{l}")),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory of held-out record arrays; defaults to the bundled set.
    #[arg(long)]
    pub datasets: Option<PathBuf>,
    /// Restrict to these dataset names.
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    pub widths: Vec<usize>,
    /// Rows sampled per dataset.
    #[arg(long, default_value_t = 10)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bilstm-attn")]
    pub tag: String,
    /// Machine-readable report.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// One JSON line per decoded candidate.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// TOML file with `language`, `visualization` minimums and a `phantom` maximum.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

pub fn evaluate_cmd(a: EvaluateArgs) -> CliResult<bool> {
    if a.widths.is_empty() || a.widths.contains(&0) {
        return Err(usage_err("--widths needs at least one positive width"));
    }
    let thresholds: Thresholds = match &a.thresholds {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(CliError::Usage)?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display())).map_err(CliError::Usage)?
        }
        None => Thresholds::default(),
    };
    let (model, id) = load_model(&a.model.checkpoint)?;
    let mut datasets = match &a.datasets {
        Some(dir) => load_dataset_dir(dir).map_err(data_err)?,
        None => bundled::heldout_datasets(),
    };
    if !a.names.is_empty() {
        if let Some(missing) = a.names.iter().find(|n| !datasets.iter().any(|d| &d.name == *n)) {
            return Err(usage_err(format!("no dataset named {missing}")));
        }
        datasets.retain(|d| a.names.contains(&d.name));
    }
    let config = EvalConfig { widths: a.widths.clone(), per_dataset_rows: a.rows, seed: a.seed, model_tag: a.tag.clone() };
    let mut diag = match &a.diagnostics {
        Some(p) => Some(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display())).map_err(CliError::Data)?,
        )),
        None => None,
    };
    let mut write_err = None;
    let report = evaluate(&model, &datasets, &config, &id, |rec| {
        if let Some(w) = diag.as_mut() {
            if let Err(e) = writeln!(w, "{}", serde_json::to_string(rec).expect("records serialize")) {
                write_err.get_or_insert(e);
            }
        }
    })
    .map_err(data_err)?;
    if let Some(e) = write_err {
        return Err(data_err(e));
    }
    if let Some(w) = diag.as_mut() {
        w.flush().map_err(data_err)?;
    }
    let (text, json) = render_report(&report).map_err(data_err)?;
    print!("{text}");
    if let Some(p) = &a.out {
        fs::write(p, json).with_context(|| format!("writing {}", p.display())).map_err(CliError::Data)?;
    }
    let failures = thresholds.failures(&report);
    for f in &failures {
        eprintln!("threshold missed: {f}");
    }
    Ok(failures.is_empty())
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// File with one specification per line, or `-` for stdin.
    pub input: PathBuf,
    /// Dataset whose schema the specifications should reference.
    #[arg(long)]
    pub schema_from: Option<PathBuf>,
    /// Diagnostics as JSON lines; otherwise they go to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn validate_cmd(a: ValidateArgs) -> CliResult<()> {
    let schema = match &a.schema_from {
        Some(p) => Some(infer_schema(&load_dataset_file(p)?).map_err(data_err)?),
        None => None,
    };
    let reader: Box<dyn BufRead> = if a.input.as_os_str() == "-" {
        Box::new(BufReader::new(std::io::stdin()))
    } else {
        Box::new(BufReader::new(
            fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display())).map_err(CliError::Data)?,
        ))
    };
    let grammar = GrammarSubset::default();
    let mut results = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(data_err)?;
        if line.trim().is_empty() {
            continue;
        }
        results.push(validate_text(&line, &grammar, schema.as_deref()));
    }
    let lines: Vec<String> = results.iter().map(|r| serde_json::to_string(r).expect("results serialize")).collect();
    match &a.out {
        Some(p) => fs::write(p, lines.join("\n") + "\n").with_context(|| format!("writing {}", p.display())).map_err(CliError::Data)?,
        None => lines.iter().for_each(|l| println!("{l}")),
    }
    match score_batch(&results) {
        Ok(r) => eprintln!(
            "{} specs: language {:.3}, visualization {:.3}, phantom {:.3}",
            r.count, r.language, r.visualization, r.phantom
        ),
        Err(e) => return Err(data_err(e)),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Which returned candidate to export.
    #[arg(long, default_value_t = 0)]
    pub rank: usize,
    /// Output file; `.json` writes JSON, anything else tab-separated text.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn attention_cmd(a: AttentionArgs) -> CliResult<()> {
    if a.beam == 0 {
        return Err(usage_err("--beam must be at least 1"));
    }
    let (model, _) = load_model(&a.model.checkpoint)?;
    let ds = a.input.load()?;
    let (prepared, hyps, specs) = generate(&model, &ds, a.input.row, a.beam, true).map_err(generate_err)?;
    let h = hyps
        .get(a.rank)
        .ok_or_else(|| usage_err(format!("only {} candidates were returned", hyps.len())))?;
    let matrix = export_attention(h, &prepared.source, &model.vocabs.target).map_err(data_err)?;
    let text = if a.out.extension().is_some_and(|e| e == "json") {
        serde_json::to_string(&matrix).expect("matrices serialize")
    } else {
        matrix.to_tsv()
    };
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display())).map_err(CliError::Data)?;
    println!(
        "{}x{} attention matrix for \"{}\" written to {}",
        matrix.rows.len(),
        matrix.columns.len(),
        specs[a.rank].spec,
        a.out.display()
    );
    Ok(())
}
