mod correct;
mod error;
mod eval;
mod io;
mod settings;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lesionloc::label_correction::{CorrectionMethod, MatchPredicate};
use lesionloc::lesion_ops::Connectivity;
use lesionloc::manifest::BaseAt;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lesionloc", version, about = "Report-guided pseudo-label correction for prostate MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a radiology report and print the extracted lesions as JSON.
    ParseReport {
        report: PathBuf,
    },
    /// Print the sector grid of a prostate mask as JSON.
    Sectors {
        prostate: PathBuf,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Correct teacher pseudo labels for every case of a manifest.
    Correct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Location)]
        method: MethodArg,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        settings: SettingsArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate predictions against ground truth (fROC, Dice, pseudo-label quality).
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory of `correct`, or a directory of `<id>.nii[.gz]`
        /// maps. Defaults to the manifest's probability maps.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        target_sensitivity: f64,
        #[command(flatten)]
        settings: SettingsArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic cohort with a manifest.
    Simulate {
        /// JSON file with generator parameters; defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, short)]
        n: usize,
        #[arg(long, short)]
        output: PathBuf,
        /// Overrides the seed from the parameter file.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Location,
    Count,
    None,
}

impl From<MethodArg> for CorrectionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Location => CorrectionMethod::LocationBased,
            MethodArg::Count => CorrectionMethod::CountBased,
            MethodArg::None => CorrectionMethod::None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ConnectivityArg {
    #[value(name = "6")]
    Six,
    #[value(name = "26")]
    TwentySix,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Six => Connectivity::Six,
            ConnectivityArg::TwentySix => Connectivity::TwentySix,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MatchArg {
    Overlap,
    Centroid,
}

impl From<MatchArg> for MatchPredicate {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Overlap => MatchPredicate::Overlap,
            MatchArg::Centroid => MatchPredicate::Centroid,
        }
    }
}

/// Setting overrides. Precedence: flags, then `--config`, then the manifest.
#[derive(Args, Debug, Clone, Default)]
struct SettingsArgs {
    /// JSON object with manifest settings to override.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    connectivity: Option<ConnectivityArg>,
    #[arg(long = "match", value_enum)]
    match_predicate: Option<MatchArg>,
    #[arg(long, allow_hyphen_values = true, value_parser = clap::value_parser!(BaseAt))]
    base_at: Option<BaseAt>,
}

#[derive(Args, Debug, Clone, Copy, Default)]
struct RunArgs {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, short)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| CliError::data("thread_pool", e.to_string()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ParseReport { report } => {
            let text = std::fs::read_to_string(&report).map_err(|e| CliError::io(&report, e))?;
            let parsed = lesionloc::parse_report(&text).map_err(|e| CliError::data("parse", e.to_string()))?;
            io::print_json(&parsed);
            Ok(())
        }
        Command::Sectors { prostate, settings } => {
            let settings = settings::resolve(Default::default(), &settings)?;
            let mask = io::load_mask(&prostate).map_err(|e| CliError::data("volume", format!("{e:#}")))?;
            let grid = lesionloc::sector_map::build_sector_grid_with(&mask, &settings.sector_options())
                .map_err(|e| CliError::data("sectors", e.to_string()))?;
            io::print_json(&io::SectorsOutput::new(&grid));
            Ok(())
        }
        Command::Correct {
            manifest,
            method,
            output,
            settings,
            run,
        } => correct::run(&manifest, method.into(), &output, &settings, run),
        Command::Eval {
            manifest,
            predictions,
            output,
            target_sensitivity,
            settings,
            run,
        } => eval::run(&manifest, predictions.as_deref(), &output, target_sensitivity, &settings, run),
        Command::Simulate {
            params,
            n,
            output,
            seed,
            run,
        } => simulate::run(params.as_deref(), n, &output, seed, run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code != 0 {
                error::print_error(&CliError::Usage(e.kind().to_string()));
            }
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            error::print_error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}
