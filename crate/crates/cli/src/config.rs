//! Command-line surface and the serialisable run record.
//!
//! A run is described by a [`RunConfig`]. It can come from flags alone, or
//! from a JSON file given with `--config`, in which case any flag typed on
//! the command line replaces the matching field of the loaded record.

use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use wbsrc_core::analysis::DESK_RATE_HZ;
use wbsrc_core::NumericKind;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "WBSRC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "wbsrc",
    version,
    about = "Wideband parallel/serial CIC-halfband sample-rate converter"
)]
pub struct Cli {
    /// Load a run configuration (or a report embedding one); flags given
    /// on the command line override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for output files [default: $WBSRC_OUT_DIR, else `.`].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Design a halfband stage or describe a CIC stage.
    Design(DesignArgs),
    /// Decimate a sample file through the converter.
    Process(ProcessArgs),
    /// Check the parallel datapaths against their serial oracles.
    Verify(VerifyArgs),
    /// Compute the cascade magnitude response for a factor.
    Respond(RespondArgs),
    /// Run the anti-aliasing and multitone experiments.
    Simulate(SimulateArgs),
    /// Write a test-signal sample file.
    Generate(GenerateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Design(_) => "design",
            Command::Process(_) => "process",
            Command::Verify(_) => "verify",
            Command::Respond(_) => "respond",
            Command::Simulate(_) => "simulate",
            Command::Generate(_) => "generate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Numeric {
    Fixed,
    Float,
}

impl From<Numeric> for NumericKind {
    fn from(n: Numeric) -> Self {
        match n {
            Numeric::Fixed => NumericKind::Fixed,
            Numeric::Float => NumericKind::Float,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    /// Halfband filter order 2N (the filter has order + 1 taps) [default: 122].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub hb_order: Option<u64>,

    /// Halfband transition half-width, as a fraction of the sample rate.
    #[arg(long, default_value_t = 0.03)]
    pub transition: f64,

    /// Target stopband attenuation in dB.
    #[arg(long, default_value_t = 70.0)]
    pub atten: f64,

    /// Coefficient width for a halfband, data width for a CIC.
    #[arg(long, default_value_t = 16)]
    pub bits: u32,

    /// Describe a CIC instead: `N=<stages> R=<decimation> M=<delay>`.
    #[arg(long, num_args = 1..=3, value_name = "KEY=VALUE", conflicts_with = "hb_order")]
    pub cic: Option<Vec<String>>,

    /// Input sample rate used to label response frequencies.
    #[arg(long, default_value_t = DESK_RATE_HZ)]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProcessArgs {
    /// Input samples (`.i16` or `.csv`), optionally with a `.json` sidecar.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Output file; the extension picks the format [default: next to the
    /// other outputs, named after the input].
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Total decimation factor.
    #[arg(long, default_value_t = 80)]
    pub factor: u64,

    #[arg(long, value_enum, default_value_t = Numeric::Fixed)]
    pub numeric: Numeric,

    /// Input sample rate; overrides the sidecar [default: sidecar, else 20 MHz].
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Parallel lane counts L (give the flag with no values to skip the CIC cases).
    #[arg(long, num_args = 0.., value_delimiter = ',', default_values_t = [2usize, 4, 6, 8, 80])]
    pub lanes: Vec<usize>,

    /// CIC stage counts N.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 3, 5])]
    pub stages: Vec<u32>,

    /// CIC decimation factors R.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 20])]
    pub decimation: Vec<u32>,

    /// CIC differential delays M.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2])]
    pub delay: Vec<u32>,

    /// Random samples per CIC case.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,

    /// Whole-converter factors checked against the serial reference chain.
    #[arg(long, num_args = 0.., value_delimiter = ',', default_values_t = [80u64, 160, 320, 640, 1600, 3840])]
    pub factors: Vec<u64>,

    /// Random samples per converter case.
    #[arg(long, default_value_t = 256_000)]
    pub src_samples: usize,

    /// Corrupt one parallel CIC output sample of the first case (harness self-test).
    #[arg(long, hide = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RespondArgs {
    #[arg(long, default_value_t = 80)]
    pub factor: u64,

    #[arg(long, value_enum, default_value_t = Numeric::Fixed)]
    pub numeric: Numeric,

    /// Input sample rate used to label frequencies.
    #[arg(long, default_value_t = DESK_RATE_HZ)]
    pub rate: f64,

    /// Points across the passband and across each alias band.
    #[arg(long, default_value_t = 512)]
    pub band_points: usize,

    /// Points in the written response curve.
    #[arg(long, default_value_t = 4001)]
    pub display_points: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Desired tone plus an out-of-band interferer.
    #[arg(long)]
    pub antialias: bool,

    /// Eight in-band tones. With neither flag both experiments run.
    #[arg(long)]
    pub multitone: bool,

    #[arg(long, default_value_t = 80)]
    pub factor: u64,

    #[arg(long, value_enum, default_value_t = Numeric::Fixed)]
    pub numeric: Numeric,

    #[arg(long, default_value_t = DESK_RATE_HZ)]
    pub rate: f64,

    /// Desired tone frequency in Hz.
    #[arg(long, default_value_t = 50e3)]
    pub desired_hz: f64,

    /// Interferer frequency in Hz.
    #[arg(long, default_value_t = 7.04e6)]
    pub alias_hz: f64,

    /// FFT length at the output rate.
    #[arg(long, default_value_t = 1000)]
    pub fft_size: usize,

    /// Scale fixed-point input so its peak is this far below full scale
    /// [default: none for anti-aliasing, 1 dB for multitone].
    #[arg(long)]
    pub headroom_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// Eight tones at 10..80 kHz (scaled to the rate).
    Multitone,
    /// 50 kHz plus 7.04 MHz (scaled to the rate).
    Alias,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Output file (`.i16` or `.csv`).
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Signal::Multitone)]
    pub signal: Signal,

    #[arg(long, default_value_t = 80_000)]
    pub count: usize,

    #[arg(long, default_value_t = DESK_RATE_HZ)]
    pub rate: f64,

    /// Peak level below full scale.
    #[arg(long, default_value_t = 1.0)]
    pub headroom_db: f64,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub command: Command,
}

impl RunConfig {
    /// `out_dir`, else `$WBSRC_OUT_DIR`, else the current directory.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    // reports carry their run configuration under `run`
    let value = match value.get("run") {
        Some(run) if value.get("command").is_none() => run.clone(),
        _ => value,
    };
    serde_json::from_value(value)
        .map_err(|e| CliError::Usage(format!("{}: not a run configuration: {e}", path.display())))
}

/// Build the run configuration from parsed arguments.
pub fn resolve(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let base = cli.config.as_deref().map(load).transpose()?;
    let mut run = match (base, cli.command) {
        (None, None) => {
            return Err(CliError::Usage(
                "no command given (see `wbsrc --help`)".into(),
            ))
        }
        (None, Some(command)) => RunConfig {
            out_dir: None,
            command,
        },
        (Some(base), None) => base,
        (Some(base), Some(command)) => {
            let (name, sub) = matches.subcommand().expect("command parsed");
            if base.command.name() != name {
                return Err(CliError::Usage(format!(
                    "configuration is for `{}`, not `{name}`",
                    base.command.name()
                )));
            }
            RunConfig {
                out_dir: base.out_dir,
                command: overlay(&base.command, &command, name, sub)?,
            }
        }
    };
    if cli.out_dir.is_some() {
        run.out_dir = cli.out_dir;
    }
    Ok(run)
}

/// Replace fields of `base` with those of `cli` that were typed on the
/// command line. Field names and argument ids coincide.
fn overlay(
    base: &Command,
    cli: &Command,
    name: &str,
    sub: &ArgMatches,
) -> Result<Command, CliError> {
    let mut merged = serde_json::to_value(base).expect("command serialises");
    let given = serde_json::to_value(cli).expect("command serialises");
    let (Some(dst), Some(src)) = (
        merged.get_mut(name).and_then(Value::as_object_mut),
        given.get(name).and_then(Value::as_object),
    ) else {
        return Ok(cli.clone());
    };
    for id in sub.ids() {
        let id = id.as_str();
        if sub.value_source(id) == Some(ValueSource::CommandLine) {
            if let Some(v) = src.get(id) {
                dst.insert(id.to_string(), v.clone());
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| CliError::Usage(e.to_string()))
}
