//! `evclust` command-line front end.
//!
//! Exit codes: 0 on success, 1 for bad flags (or a failed verification),
//! 2 for unreadable or invalid input.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use evclust_core::io::{
    bounding_geometry, read_events_binary, read_events_csv, validate_monotonic, write_events_binary, write_events_csv,
    EventFormat,
};
use evclust_core::{ClusterParams, Event, Polarity, SensorGeometry};
use thiserror::Error;

pub mod bench;
pub mod cluster;
pub mod plot;
pub mod synth;
pub mod verify;

#[derive(Debug, Error)]
pub enum CliError {
    /// Flag-level problems; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed, or out-of-contract input; exit code 2.
    #[error("{0}")]
    Input(String),
    /// The command ran but its check failed; exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Failed(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "evclust", version, about = "Detect roots of small event clusters in event-camera streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the detector on an event file
    Cluster(cluster::ClusterArgs),
    /// Generate a synthetic event stream
    Synth(synth::SynthArgs),
    /// Compare the detector against the brute-force reference
    Verify(verify::VerifyArgs),
    /// Measure per-event cost over stream sizes and sensor geometries
    Bench(bench::BenchArgs),
    /// Export events with root markers for 3-D scatter plots
    PlotData(plot::PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Evc1,
}

impl From<FormatArg> for EventFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => EventFormat::Csv,
            FormatArg::Evc1 => EventFormat::Evc1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityFilter {
    Pos,
    Neg,
    Both,
}

impl PolarityFilter {
    pub fn keeps(self, p: Polarity) -> bool {
        match self {
            PolarityFilter::Pos => p == Polarity::Positive,
            PolarityFilter::Neg => p == Polarity::Negative,
            PolarityFilter::Both => true,
        }
    }
}

/// Where the events come from and which of them to cluster.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Sensor width; defaults to the smallest width that holds every event
    #[arg(long)]
    pub width: Option<u32>,
    /// Sensor height; defaults to the smallest height that holds every event
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long, value_enum, default_value = "both")]
    pub polarity: PolarityFilter,
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Maximal temporal gap in microseconds
    #[arg(long, default_value_t = 2000)]
    pub delta_us: u64,
    /// Chebyshev neighbourhood radius in pixels
    #[arg(long, default_value_t = 1)]
    pub radius: u16,
    /// Minimal events per reported cluster
    #[arg(long, default_value_t = 10)]
    pub min_events: u64,
    /// Minimal contributing pixels per reported cluster
    #[arg(long, default_value_t = 5)]
    pub min_pixels: u64,
}

impl ParamArgs {
    pub fn params(&self) -> Result<ClusterParams, CliError> {
        ClusterParams::new(self.delta_us, self.radius, self.min_events, self.min_pixels)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

pub fn format_for_path(path: &Path, explicit: Option<FormatArg>) -> Result<EventFormat, CliError> {
    if let Some(f) = explicit {
        return Ok(f.into());
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(EventFormat::Csv),
        Some("evc1") | Some("bin") => Ok(EventFormat::Evc1),
        _ => Err(CliError::Usage(format!(
            "cannot infer the format of {}; pass --format csv|evc1",
            path.display()
        ))),
    }
}

pub fn read_event_file(path: &Path, format: EventFormat) -> Result<Vec<Event>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let events = match format {
        EventFormat::Csv => read_events_csv(reader),
        EventFormat::Evc1 => read_events_binary(reader),
    };
    events.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_event_file(path: &Path, format: EventFormat, events: &[Event]) -> Result<(), CliError> {
    let writer = create_file(path)?;
    match format {
        EventFormat::Csv => write_events_csv(writer, events),
        EventFormat::Evc1 => write_events_binary(writer, events),
    }
    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Events as read, plus the subset selected for clustering.
#[derive(Debug, Clone)]
pub struct LoadedInput {
    pub all: Vec<Event>,
    pub selected: Vec<Event>,
    /// Position of each selected event in `all`.
    pub selected_index: Vec<usize>,
    pub geometry: SensorGeometry,
}

/// Reads, validates, and polarity-filters the input.
pub fn load_input(args: &InputArgs) -> Result<LoadedInput, CliError> {
    let format = format_for_path(&args.input, args.format)?;
    let all = read_event_file(&args.input, format)?;
    if let Err(i) = validate_monotonic(&all) {
        return Err(CliError::Input(format!(
            "input is not sorted by timestamp: event {i} ({} µs) precedes its predecessor ({} µs)",
            all[i].t,
            all[i - 1].t
        )));
    }
    let geometry = match (args.width, args.height) {
        (Some(w), Some(h)) => SensorGeometry::new(w, h).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => bounding_geometry(&all).unwrap_or(SensorGeometry::new(1, 1).expect("1x1 is valid")),
        _ => return Err(CliError::Usage("--width and --height must be given together".into())),
    };
    if let Some(i) = all.iter().position(|e| !geometry.contains(e.pixel())) {
        return Err(CliError::Input(format!(
            "event {i} at ({},{}) lies outside the {geometry} sensor",
            all[i].x, all[i].y
        )));
    }
    let (selected_index, selected): (Vec<usize>, Vec<Event>) = all
        .iter()
        .enumerate()
        .filter(|(_, e)| args.polarity.keeps(e.p))
        .map(|(i, e)| (i, *e))
        .unzip();
    Ok(LoadedInput {
        all,
        selected,
        selected_index,
        geometry,
    })
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Opens `path` for writing, or falls back to `fallback` when no path is given.
pub(crate) fn sink<'a>(path: Option<&Path>, fallback: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => Ok(Box::new(create_file(p)?)),
        None => Ok(Box::new(fallback)),
    }
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Cluster(a) => cluster::cmd_cluster(a, out),
        Command::Synth(a) => synth::cmd_synth(a),
        Command::Verify(a) => verify::cmd_verify(a, out),
        Command::Bench(a) => bench::cmd_bench(a, out),
        Command::PlotData(a) => plot::cmd_plot_data(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
