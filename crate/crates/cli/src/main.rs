//! `fifthspace`: train key-aware autoencoders on symbolic music and score
//! their latent spaces against the circle of fifths.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fifthspace::vae::{load_checkpoint, save_checkpoint, VaeParams};
use fifthspace_cli::cache::TensorCache;
use fifthspace_cli::config::{load_config, ExperimentConfig, Overrides};
use fifthspace_cli::pipeline::{
    build_cache, load_corpus, run_experiment, split_dataset, train_model, vocabulary_for,
};
use fifthspace_cli::report::{
    history_csv, manifest_csv, metrics_csv, points_csv, write_text,
};
use fifthspace_cli::{plot, CliError};

#[derive(Parser)]
#[command(
    name = "fifthspace",
    version,
    about = "Key-structure probes for symbolic-music autoencoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus and print a per-piece inventory
    Ingest(Stage),
    /// Build the augmented training-tensor cache
    Encode(Stage),
    /// Train the autoencoder on the cached tensors
    Train(Stage),
    /// Embed the test pieces and write latent-geometry metrics
    Eval(EvalStage),
    /// Render per-piece latent scatter plots
    Plot(EvalStage),
}

/// Flags shared by every stage; each overrides the config file.
#[derive(Args)]
struct Stage {
    /// TOML experiment config
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory of .mid/.midi/.json scores
    #[arg(long, value_name = "DIR")]
    corpus_dir: Option<PathBuf>,
    /// piano_roll, midi_like, abc, tonnetz, pc_dft, or pitch_dft
    #[arg(long)]
    encoding: Option<String>,
    /// Steps per training segment
    #[arg(long)]
    segment_length: Option<usize>,
    /// Fraction of pieces used for training, in (0, 1)
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Seed for the split, the parameter init, and the batch order
    #[arg(long)]
    seed: Option<u64>,
    /// Beats per grid step, as "num/den"
    #[arg(long)]
    resolution: Option<String>,
    /// Directory for caches, checkpoints, reports, and plots
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Examples per minibatch
    #[arg(long)]
    batch_size: Option<usize>,
    /// Input dropout probability in [0, 1)
    #[arg(long)]
    dropout_rate: Option<f64>,
    /// Latent dimensions (>= 2)
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Hidden-layer width
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Adam step size
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct EvalStage {
    #[command(flatten)]
    stage: Stage,
    /// Evaluate this checkpoint instead of training in-process
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

impl Stage {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let over = Overrides {
            corpus_dir: self.corpus_dir.clone(),
            encoding: self.encoding.clone(),
            segment_length: self.segment_length,
            split_ratio: self.split_ratio,
            seed: self.seed,
            resolution: self.resolution.clone(),
            output_dir: self.output_dir.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            dropout_rate: self.dropout_rate,
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
            learning_rate: self.learning_rate,
        };
        load_config(self.config.as_deref(), &over)
    }
}

fn print_notes(notes: &[String]) {
    for n in notes {
        eprintln!("note: {n}");
    }
}

fn cmd_ingest(config: &ExperimentConfig) -> Result<(), CliError> {
    let (pieces, notes) = load_corpus(config)?;
    print_notes(&notes);
    let manifest = manifest_csv(&pieces, config.segment_length);
    write_text(&config.output_dir.join("manifest.csv"), &manifest)?;
    print!("{manifest}");
    println!(
        "{} pieces -> {}",
        pieces.len(),
        config.output_dir.join("manifest.csv").display()
    );
    Ok(())
}

/// Builds the cache (train pieces only) and writes cache.bin plus the token
/// vocabulary when the encoding has one.
fn cmd_encode(config: &ExperimentConfig) -> Result<(), CliError> {
    let (pieces, notes) = load_corpus(config)?;
    print_notes(&notes);
    if pieces.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 pieces to split, found {}",
            pieces.len()
        )));
    }
    let (train_ps, test_ps) = split_dataset(&pieces, config.split_ratio, config.seed);
    let (cache, cache_notes) = build_cache(&train_ps, config)?;
    print_notes(&cache_notes);
    for t in &test_ps {
        assert!(
            cache.entries.iter().all(|e| e.piece_id != t.id),
            "split hygiene: test piece {} leaked into the cache",
            t.id
        );
    }
    let cache_path = config.output_dir.join("cache.bin");
    cache.write_to(&cache_path)?;
    println!(
        "{} tensors ({} train pieces x 12 transpositions) -> {}",
        cache.entries.len(),
        train_ps.len(),
        cache_path.display()
    );
    if let Some(vocab) = vocabulary_for(config.encoding, config.segment_length) {
        let vocab_path = config.output_dir.join("vocab.txt");
        write_text(&vocab_path, &vocab.to_file_string())?;
        println!("{} tokens -> {}", vocab.len(), vocab_path.display());
    }
    Ok(())
}

/// Reuses cache.bin when it matches the config; otherwise encodes in memory.
fn load_or_build_cache(config: &ExperimentConfig) -> Result<TensorCache, CliError> {
    let cache_path = config.output_dir.join("cache.bin");
    if cache_path.exists() {
        let cache = TensorCache::read_from(&cache_path)?;
        if cache.encoding != config.encoding || cache.segment_length != config.segment_length {
            return Err(CliError::Data(format!(
                "{} was built for {} at segment_length {}; re-run encode",
                cache_path.display(),
                cache.encoding.as_str(),
                cache.segment_length
            )));
        }
        return Ok(cache);
    }
    let (pieces, _) = load_corpus(config)?;
    if pieces.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 pieces to split, found {}",
            pieces.len()
        )));
    }
    let (train_ps, _) = split_dataset(&pieces, config.split_ratio, config.seed);
    Ok(build_cache(&train_ps, config)?.0)
}

fn cmd_train(config: &ExperimentConfig) -> Result<(), CliError> {
    let cache = load_or_build_cache(config)?;
    let (params, history) = train_model(config, &cache)?;
    let ckpt = config.output_dir.join("model.ckpt");
    if let Some(dir) = ckpt.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&ckpt, config.encoding, &params)?;
    write_text(
        &config.output_dir.join("loss_history.csv"),
        &history_csv(&history),
    )?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs; final loss {:.4} (recon {:.4} + kl {:.4})",
            history.len(),
            last.total,
            last.reconstruction,
            last.kl
        );
    }
    println!("checkpoint -> {}", ckpt.display());
    Ok(())
}

/// The checkpoint to evaluate: --checkpoint, else output_dir/model.ckpt,
/// else None (train in-process).
fn resolve_checkpoint(
    config: &ExperimentConfig,
    flag: Option<&Path>,
) -> Result<Option<VaeParams>, CliError> {
    let path = match flag {
        Some(p) => p.to_path_buf(),
        None => {
            let default = config.output_dir.join("model.ckpt");
            if !default.exists() {
                return Ok(None);
            }
            default
        }
    };
    let (encoding, params) = load_checkpoint(&path)?;
    if encoding != config.encoding {
        return Err(CliError::Data(format!(
            "{} holds a {} model but the config says {}",
            path.display(),
            encoding.as_str(),
            config.encoding.as_str()
        )));
    }
    Ok(Some(params))
}

fn cmd_eval(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let params = resolve_checkpoint(config, checkpoint)?;
    let trained_here = params.is_none();
    let out = run_experiment(config, params)?;
    print_notes(&out.notes);
    write_text(&config.output_dir.join("metrics.csv"), &metrics_csv(&out.evals))?;
    write_text(&config.output_dir.join("points.csv"), &points_csv(&out.evals))?;
    if trained_here && !out.history.is_empty() {
        write_text(
            &config.output_dir.join("loss_history.csv"),
            &history_csv(&out.history),
        )?;
    }
    for e in &out.evals {
        println!(
            "{}: davies_bouldin {:.3}, dunn {:.3}, tau {:.3}, accuracy {:.1}%",
            e.report.piece_id, e.report.davies_bouldin, e.report.dunn, e.report.tau,
            e.recon.accuracy
        );
    }
    println!(
        "{} test pieces -> {}",
        out.evals.len(),
        config.output_dir.join("metrics.csv").display()
    );
    Ok(())
}

fn cmd_plot(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let params = resolve_checkpoint(config, checkpoint)?;
    let out = run_experiment(config, params)?;
    print_notes(&out.notes);
    let dir = config.output_dir.join("plots");
    for e in &out.evals {
        let path = dir.join(format!("{}.svg", e.report.piece_id));
        let title = format!(
            "{} (tau {:.3})",
            e.report.piece_id, e.report.tau
        );
        plot::render_scatter(&path, &title, &e.points)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(s) => cmd_ingest(&s.config()?),
        Command::Encode(s) => cmd_encode(&s.config()?),
        Command::Train(s) => cmd_train(&s.config()?),
        Command::Eval(e) => cmd_eval(&e.stage.config()?, e.checkpoint.as_deref()),
        Command::Plot(e) => cmd_plot(&e.stage.config()?, e.checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; real parse errors are
            // usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
