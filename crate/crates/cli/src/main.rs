use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmface::vae::Variant;
use lmface_cli::config::{CorpusSource, Experiment, PipelineConfig, DEFAULT_OUTPUT, OUTPUT_ENV};
use lmface_cli::report::{export_report, Format, Report};
use lmface_cli::{CliError, Pipeline, Target};

/// Teacher/student face-model laboratory.
///
/// Exit codes: 0 success, 1 stage failure, 2 configuration error, 3 I/O error.
#[derive(Parser)]
#[command(name = "lmface", version)]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the active appearance model to the landmarked corpus.
    FitAam,
    /// Sample teacher codes and their synthesized faces.
    Sample,
    /// Train every configured VAE student.
    TrainVae,
    /// Run one experiment and whatever it depends on.
    Analyze {
        #[arg(value_enum)]
        experiment: ExperimentArg,
    },
    /// Run the full pipeline.
    Run,
    /// Re-export a finished report as JSON or CSV.
    Report {
        #[arg(long, value_enum, default_value = "linearity")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Destination file; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Linearity,
    Decode,
    Separate,
    Traverse,
    Replicate,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Linearity => Experiment::Linearity,
            ExperimentArg::Decode => Experiment::Decode,
            ExperimentArg::Separate => Experiment::Separate,
            ExperimentArg::Traverse => Experiment::Traverse,
            ExperimentArg::Replicate => Experiment::Replicate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Conv,
    Fc,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Conv => Variant::Conv,
            VariantArg::Fc => Variant::Fc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linearity,
    Decoding,
    Separation,
    Traversal,
    Replication,
}

impl KindArg {
    fn name(self) -> &'static str {
        match self {
            KindArg::Linearity => "linearity",
            KindArg::Decoding => "decoding",
            KindArg::Separation => "separation",
            KindArg::Traversal => "traversal",
            KindArg::Replication => "replication",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Every flag overrides the matching field of the `--config` file.
#[derive(Args)]
struct Overrides {
    /// Pipeline configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; mandatory unless the config file has one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $LM_OUTPUT_DIR, then ./lmface-out].
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// Read landmarked faces (NAME.png/pgm + NAME.pts) from a directory.
    #[arg(long, global = true, help_heading = "Corpus")]
    corpus_dir: Option<PathBuf>,
    /// Number of procedural training faces.
    #[arg(long, global = true, help_heading = "Corpus")]
    procedural_n: Option<usize>,

    #[arg(long, global = true, help_heading = "AAM")]
    k_s: Option<usize>,
    #[arg(long, global = true, help_heading = "AAM")]
    k_a: Option<usize>,
    /// Frame as WIDTHxHEIGHT.
    #[arg(long, global = true, value_parser = parse_frame, help_heading = "AAM")]
    frame: Option<[usize; 2]>,
    /// Number of sampled teacher codes.
    #[arg(long, global = true, help_heading = "AAM")]
    samples: Option<usize>,

    #[arg(
        long,
        global = true,
        value_enum,
        value_delimiter = ',',
        help_heading = "VAE"
    )]
    variant: Vec<VariantArg>,
    /// Latent sizes, comma separated.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "VAE")]
    d: Vec<usize>,
    #[arg(long, global = true, help_heading = "VAE")]
    epochs: Option<usize>,
    #[arg(long, global = true, help_heading = "VAE")]
    batch_size: Option<usize>,
    #[arg(long, global = true, help_heading = "VAE")]
    lr: Option<f64>,
    #[arg(long, global = true, help_heading = "VAE")]
    sigma: Option<f64>,
    #[arg(long, global = true, help_heading = "VAE")]
    filters: Option<usize>,
    #[arg(long, global = true, help_heading = "VAE")]
    hidden: Option<usize>,

    /// Experiments for `run`, comma separated.
    #[arg(
        long,
        global = true,
        value_enum,
        value_delimiter = ',',
        help_heading = "Experiments"
    )]
    experiments: Vec<ExperimentArg>,
    #[arg(long, global = true, help_heading = "Experiments")]
    decode_n_test: Option<usize>,
    #[arg(long, global = true, help_heading = "Experiments")]
    traverse_steps: Option<usize>,
    #[arg(long, global = true, help_heading = "Experiments")]
    replicate_n_train: Option<usize>,
    #[arg(long, global = true, help_heading = "Experiments")]
    replicate_epochs: Option<usize>,
    #[arg(long, global = true, help_heading = "Experiments")]
    replicate_lr: Option<f64>,
    /// Skip the linear-decoder baseline of the replication experiment.
    #[arg(long, global = true, help_heading = "Experiments")]
    no_linear_baseline: bool,
}

fn parse_frame(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok([n(w)?, n(h)?])
}

impl Overrides {
    fn build(&self) -> Result<PipelineConfig, CliError> {
        let mut c = match (&self.config, self.seed) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, Some(seed)) => PipelineConfig::with_seed(seed),
            (None, None) => {
                return Err(CliError::Config(
                    "a seed is mandatory: pass --seed or a --config file".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = Some(dir.clone());
        }
        if let Some(path) = &self.corpus_dir {
            c.corpus = CorpusSource::Directory { path: path.clone() };
        }
        if let Some(n) = self.procedural_n {
            match &mut c.corpus {
                CorpusSource::Procedural { n: slot, .. } => *slot = n,
                CorpusSource::Directory { .. } => {
                    return Err(CliError::Config(
                        "--procedural-n needs a procedural corpus".into(),
                    ))
                }
            }
        }
        set(&mut c.aam.k_s, self.k_s);
        set(&mut c.aam.k_a, self.k_a);
        set(&mut c.aam.frame, self.frame);
        set(&mut c.sampling.n, self.samples);
        if !self.variant.is_empty() {
            c.vae.variants = self.variant.iter().map(|&v| v.into()).collect();
        }
        if !self.d.is_empty() {
            c.vae.dims = self.d.clone();
        }
        set(&mut c.vae.epochs, self.epochs);
        set(&mut c.vae.batch_size, self.batch_size);
        set(&mut c.vae.lr, self.lr);
        set(&mut c.vae.sigma, self.sigma);
        set(&mut c.vae.filters, self.filters);
        set(&mut c.vae.hidden, self.hidden);
        if !self.experiments.is_empty() {
            c.experiments = self.experiments.iter().map(|&e| e.into()).collect();
        }
        set(&mut c.decode.n_test, self.decode_n_test);
        set(&mut c.traverse.steps, self.traverse_steps);
        set(&mut c.replicate.n_train, self.replicate_n_train);
        set(&mut c.replicate.epochs, self.replicate_epochs);
        set(&mut c.replicate.lr, self.replicate_lr);
        if self.no_linear_baseline {
            c.replicate.linear_baseline = false;
        }
        Ok(c)
    }

    /// Output directory for `report`, which needs no seed.
    fn output_dir(&self) -> Result<PathBuf, CliError> {
        if let Some(dir) = &self.output_dir {
            return Ok(dir.clone());
        }
        if let Some(path) = &self.config {
            return Ok(PipelineConfig::load(path)?.output_dir());
        }
        Ok(std::env::var_os(OUTPUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn report(
    opts: &Overrides,
    kind: KindArg,
    format: FormatArg,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let dir = opts.output_dir()?;
    let path = dir.join("reports").join(format!("{}.json", kind.name()));
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Config(format!(
            "{} does not exist; run the {} experiment first",
            path.display(),
            kind.name()
        )),
        _ => CliError::io(&path, e),
    })?;
    let report = Report::from_json(kind.name(), &text)?;
    let format = match format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    match output {
        Some(out) => export_report(&report, format, &out),
        None => {
            print!(
                "{}",
                match format {
                    Format::Json => report.to_json(),
                    Format::Csv => report.to_csv(),
                }
            );
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let target = match cli.command {
        Command::Report {
            kind,
            format,
            output,
        } => return report(&cli.opts, kind, format, output),
        Command::FitAam => Target::FitAam,
        Command::Sample => Target::Sample,
        Command::TrainVae => Target::TrainVae,
        Command::Analyze { experiment } => Target::Analyze(experiment.into()),
        Command::Run => Target::All,
    };
    let config = cli.opts.build()?;
    let mut pipeline = Pipeline::open(config)?;
    pipeline.verbose = !cli.opts.quiet;
    let summary = pipeline.run(target)?;
    if !cli.opts.quiet {
        eprintln!(
            "{} stage(s) ran, {} up to date; manifest at {}",
            summary.ran.len(),
            summary.skipped.len(),
            pipeline
                .dir()
                .join(lmface_cli::manifest::MANIFEST_FILE)
                .display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
