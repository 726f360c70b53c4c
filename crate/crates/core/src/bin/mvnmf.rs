//! Command-line surface: `run` (full experiment from a config file), `gen`
//! (write a synthetic dataset to files), `metrics` (score predictions
//! against ground truth), `solve` (single fit, emit the consensus H*).
//! Progress goes to stderr; data goes to stdout only with `--out -`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvnmf::admm::fit;
use mvnmf::error::{Error, Result};
use mvnmf::metrics::MetricReport;
use mvnmf::pipeline::{
    emit_report, format_matrix, load_labels, run_experiment, save_labels, save_matrix,
    ExperimentConfig, Orientation,
};
use mvnmf::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(name = "mvnmf", version, about = "Multi-modal deep NMF clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json / summary.csv / traces.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic dataset description (JSON, the synth spec object).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; writes modality<v>.csv (samples as rows) and labels.txt.
    #[arg(long)]
    out: PathBuf,
    /// Override the generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Ground-truth labels, one integer per line.
    #[arg(long)]
    truth: PathBuf,
    /// Predicted labels, one integer per line.
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Experiment configuration (JSON); only the data/solver sections are used.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for hstar.csv, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Seed for this single fit (default: the configured base seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full multi-seed experiment with baselines and emit reports.
    Run(RunArgs),
    /// Generate a synthetic multi-modal dataset.
    Gen(GenArgs),
    /// Score a prediction file against a label file (JSON on stdout).
    Metrics(MetricsArgs),
    /// Fit once and emit the consensus representation H*.
    Solve(SolveArgs),
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(r) = args.runs {
        config.n_runs = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    config.validate()?;
    log::info!(
        "running '{}' for {} seeds starting at {}",
        config.ablation.method_name(),
        config.n_runs,
        config.base_seed
    );
    let report = run_experiment(&config)?;
    emit_report(&report, &args.out)?;
    for m in &report.methods {
        match &m.mean {
            Some(mu) => log::info!(
                "{}: acc {:.4}, nmi {:.4}, ari {:.4} ({} failed)",
                m.name,
                mu.acc,
                mu.nmi,
                mu.ari,
                m.n_failed
            ),
            None => log::info!("{}: no successful scored runs", m.name),
        }
    }
    log::info!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let (modalities, truth) = generate(&spec)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    for (v, md) in modalities.iter().enumerate() {
        let path = args.out.join(format!("modality{v}.csv"));
        save_matrix(&path, &md.x, Orientation::SamplesAsRows)?;
        log::info!("wrote {} ({} x {})", path.display(), md.x.cols(), md.x.rows());
    }
    save_labels(&args.out.join("labels.txt"), &truth)?;
    log::info!("wrote {}", args.out.join("labels.txt").display());
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let truth = load_labels(&args.truth)?;
    let pred = load_labels(&args.pred)?;
    let report = MetricReport::compute(&truth, &pred)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Io(format!("metric serialization: {e}")))?;
    println!("{json}");
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.base_seed);
    let (modalities, _truth) = match &config.data {
        mvnmf::pipeline::DataSource::Synth(spec) => {
            let (m, t) = generate(spec)?;
            (m, Some(t))
        }
        mvnmf::pipeline::DataSource::Files(_) => {
            // reuse the experiment loader through a 1-run probe config
            let mut probe = config.clone();
            probe.n_runs = 1;
            return solve_from_files(&probe, seed, &args.out);
        }
    };
    let result = fit(&modalities, &config.layer_sizes, &config.fit_config(), seed)?;
    log::info!(
        "fit converged after {} iterations (objective {:.6e})",
        result.traces.len(),
        result.traces.last().map_or(f64::NAN, |t| t.objective)
    );
    emit_hstar(&result.hstar, &args.out)
}

fn solve_from_files(config: &ExperimentConfig, seed: u64, out: &PathBuf) -> Result<()> {
    let src = match &config.data {
        mvnmf::pipeline::DataSource::Files(src) => src,
        _ => unreachable!(),
    };
    let mut modalities = Vec::new();
    for (v, path) in src.modalities.iter().enumerate() {
        let x = mvnmf::pipeline::load_matrix(path, src.orientation)?;
        modalities.push(mvnmf::data::ModalityData::new(format!("modality{v}"), x));
    }
    let result = fit(&modalities, &config.layer_sizes, &config.fit_config(), seed)?;
    emit_hstar(&result.hstar, out)
}

fn emit_hstar(hstar: &mvnmf::Mat64, out: &PathBuf) -> Result<()> {
    if out.as_os_str() == "-" {
        print!("{}", format_matrix(hstar, Orientation::SamplesAsColumns));
        return Ok(());
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let path = out.join("hstar.csv");
    save_matrix(&path, hstar, Orientation::SamplesAsColumns)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(
        if cli.quiet { "warn" } else { "info" },
    ))
    .format_timestamp(None)
    .target(env_logger::Target::Stderr)
    .init();

    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Solve(args) => cmd_solve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
