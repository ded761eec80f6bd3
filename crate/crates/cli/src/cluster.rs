use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use evclust_core::io::write_clusters_csv;
use evclust_core::{ClusterRecord, Freshness, StreamClusterer};
use serde::{Deserialize, Serialize};

use crate::{create_file, load_input, sink, CliError, InputArgs, ParamArgs};

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Clusters CSV destination (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Line-delimited JSON of every row creation and update
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Print a run summary as JSON
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events_in: usize,
    pub events_after_polarity_filter: usize,
    pub rows_emitted: usize,
    pub wall_time_us: u64,
    pub events_per_second: f64,
}

/// One line of the detections stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    pub kind: Freshness,
    pub row: usize,
    pub record: ClusterRecord,
}

pub fn cmd_cluster(args: &ClusterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = args.params.params()?;
    let input = load_input(&args.input)?;
    let mut clusterer =
        StreamClusterer::new(input.geometry, params).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut detections = args.detections.as_deref().map(create_file).transpose()?;
    let started = Instant::now();
    for e in &input.selected {
        let step = clusterer
            .process_event(e)
            .map_err(|err| CliError::Input(err.to_string()))?;
        if let (Some(w), Some(det)) = (detections.as_mut(), step.detection) {
            let line = DetectionLine {
                kind: det.freshness,
                row: det.row_index,
                record: det.record,
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| CliError::Input(e.to_string()))?;
            w.write_all(b"\n")?;
        }
    }
    let elapsed = started.elapsed();
    if let Some(mut w) = detections {
        w.flush()?;
    }

    let rows = clusterer.results();
    {
        let mut w = sink(args.output.as_deref(), out)?;
        write_clusters_csv(&mut w, rows)?;
    }
    if args.summary {
        let secs = elapsed.as_secs_f64();
        let summary = RunSummary {
            events_in: input.all.len(),
            events_after_polarity_filter: input.selected.len(),
            rows_emitted: rows.len(),
            wall_time_us: elapsed.as_micros() as u64,
            events_per_second: if secs > 0.0 { input.selected.len() as f64 / secs } else { 0.0 },
        };
        serde_json::to_writer(&mut *out, &summary).map_err(|e| CliError::Input(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
