//! Command-line runner: single missions, seeded Monte-Carlo campaigns,
//! heatmap rendering, and preset config dumps.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radioseek::campaign::{self, CampaignError};
use radioseek::config::{Preset, RunConfig};
use radioseek::geo::GeoPoint;
use radioseek::raster::Raster;

#[derive(Parser)]
#[command(
    name = "radioseek",
    about = "GP radio-map estimation and UCB-guided transmitter localization simulator",
    version
)]
struct Cli {
    /// Suppress per-run output lines.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Path to a TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario: near, far, or noisy.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<RunConfig, String> {
        match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::load(path).map_err(|e| e.to_string()),
            (None, Some(p)) => Ok(RunConfig::preset(*p)),
            (None, None) => Err("pass either --config <path> or --preset <name>".into()),
            (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and write its artifacts.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default ./out/run).
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
    },
    /// Run a seeded campaign of missions and aggregate the errors.
    Campaign {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of runs.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Base seed; run i uses seed base + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default ./out/campaign).
        #[arg(long, default_value = "out/campaign")]
        out: PathBuf,
    },
    /// Render a raster CSV artifact as a PGM heatmap.
    Render {
        /// Input raster CSV (posterior_mean.csv / posterior_std.csv).
        input: PathBuf,
        /// Output PGM path.
        output: PathBuf,
        /// Overlay a black cross at `lat,lon` (e.g. the true transmitter).
        #[arg(long, value_parser = parse_latlon)]
        mark_black: Option<GeoPoint>,
        /// Overlay a white cross at `lat,lon` (e.g. the estimate).
        #[arg(long, value_parser = parse_latlon)]
        mark_white: Option<GeoPoint>,
    },
    /// Print a bundled scenario config as TOML.
    Config {
        /// Bundled scenario: near, far, or noisy.
        #[arg(long, default_value = "near")]
        preset: Preset,
    },
}

fn parse_latlon(s: &str) -> Result<GeoPoint, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected `lat,lon`".into());
    }
    let lat: f64 = parts[0].trim().parse().map_err(|_| "bad latitude")?;
    let lon: f64 = parts[1].trim().parse().map_err(|_| "bad longitude")?;
    Ok(GeoPoint::new(lat, lon))
}

fn config_failure(msg: &str) -> ExitCode {
    eprintln!("configuration error: {msg}");
    ExitCode::from(1)
}

fn runtime_failure(msg: &str) -> ExitCode {
    eprintln!("runtime error: {msg}");
    ExitCode::from(2)
}

fn campaign_exit(err: &CampaignError) -> ExitCode {
    match err {
        CampaignError::Config(e) => config_failure(&e.to_string()),
        other => runtime_failure(&other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let config = match scenario.load() {
                Ok(c) => c,
                Err(e) => return config_failure(&e),
            };
            match campaign::run_single(&config, seed, &out) {
                Ok(summary) => {
                    println!("{}", summary.summary_line());
                    if !cli.quiet {
                        println!("artifacts in {}", out.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => campaign_exit(&e),
            }
        }
        Command::Campaign {
            scenario,
            runs,
            seed,
            out,
        } => {
            let config = match scenario.load() {
                Ok(c) => c,
                Err(e) => return config_failure(&e),
            };
            if runs == 0 {
                return config_failure("--runs must be at least 1");
            }
            let base_seed = seed.unwrap_or(config.seed);
            match campaign::run_campaign(&config, runs, base_seed, &out) {
                Ok(summary) => {
                    if !cli.quiet {
                        for row in &summary.rows {
                            println!("{}", row.summary_line());
                        }
                    }
                    print!("{}", summary.summary_text());
                    ExitCode::SUCCESS
                }
                Err(e) => campaign_exit(&e),
            }
        }
        Command::Render {
            input,
            output,
            mark_black,
            mark_white,
        } => {
            let raster = match Raster::load_csv(&input) {
                Ok(r) => r,
                Err(e) => return runtime_failure(&e.to_string()),
            };
            let mut markers = Vec::new();
            if let Some(p) = mark_black {
                markers.push((p, 0u8));
            }
            if let Some(p) = mark_white {
                markers.push((p, 255u8));
            }
            match raster.write_pgm(&output, &markers) {
                Ok(()) => {
                    if !cli.quiet {
                        println!("wrote {}", output.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => runtime_failure(&e.to_string()),
            }
        }
        Command::Config { preset } => {
            print!("{}", RunConfig::preset(preset).to_toml_string());
            ExitCode::SUCCESS
        }
    }
}
