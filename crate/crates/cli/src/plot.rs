use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use evclust_core::{Event, StreamClusterer};

use crate::{load_input, sink, CliError, InputArgs, ParamArgs};

/// Inclusive pixel window `X0,Y0,X1,Y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl Roi {
    pub fn contains(&self, e: &Event) -> bool {
        (self.x0..=self.x1).contains(&e.x) && (self.y0..=self.y1).contains(&e.y)
    }
}

impl FromStr for Roi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<u16> = s
            .split(',')
            .map(|p| p.trim().parse::<u16>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("expected X0,Y0,X1,Y1, got {s:?}"))?;
        let [x0, y0, x1, y1] = v[..] else {
            return Err(format!("expected X0,Y0,X1,Y1, got {s:?}"));
        };
        if x0 > x1 || y0 > y1 {
            return Err(format!("empty region {s:?}"));
        }
        Ok(Roi { x0, y0, x1, y1 })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Events are clustered after polarity filtering; all polarities are exported
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Export window X0,Y0,X1,Y1 (inclusive); whole sensor when omitted
    #[arg(long)]
    pub roi: Option<Roi>,
    /// Destination CSV (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn cmd_plot_data(args: &PlotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = args.params.params()?;
    let input = load_input(&args.input)?;
    let mut clusterer =
        StreamClusterer::new(input.geometry, params).map_err(|e| CliError::Usage(e.to_string()))?;
    for e in &input.selected {
        clusterer
            .process_event(e)
            .map_err(|err| CliError::Input(err.to_string()))?;
    }

    // A root is an input event; pick the first clustered event carrying its key.
    let mut root_keys: HashMap<(u64, u16, u16), bool> =
        clusterer.results().iter().map(|r| (r.root_key(), false)).collect();
    let mut is_root = vec![false; input.all.len()];
    for (e, &i) in input.selected.iter().zip(&input.selected_index) {
        if let Some(marked) = root_keys.get_mut(&(e.t, e.x, e.y)) {
            if !*marked {
                *marked = true;
                is_root[i] = true;
            }
        }
    }

    let mut w = sink(args.output.as_deref(), out)?;
    writeln!(w, "t,x,y,p,is_root")?;
    for (e, root) in input.all.iter().zip(is_root) {
        if args.roi.is_none_or(|r| r.contains(e)) {
            writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, e.p.as_i8(), u8::from(root))?;
        }
    }
    w.flush()?;
    Ok(())
}
