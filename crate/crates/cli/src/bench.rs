//! Scaling measurements.
//!
//! The benchmark stream is uniform activity inside a 128x128 window at a
//! fixed event density, translated to the middle of each requested sensor.
//! Sizes differ only in duration, so per-event cost should stay flat across
//! both sweeps. The density is low enough that clusters keep forming and
//! dying instead of merging into one giant component, so the mix of steps
//! is the same early and late in the stream.
//!
//! Each run first feeds an untimed warm-up prefix. Allocating a large state
//! evicts the cache, and without the prefix the first touches of the active
//! window would be charged to the timed events.

use std::hint::black_box;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use evclust_core::synth::gen_background;
use evclust_core::{ClusterParams, Event, SensorGeometry, StreamClusterer};

use crate::{CliError, ParamArgs};

pub const WINDOW: u32 = 128;
/// Events per second per pixel inside the window.
pub const WINDOW_RATE_HZ: f64 = 20.0;
pub const DEFAULT_WARMUP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometrySpec(pub SensorGeometry);

impl FromStr for GeometrySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
        let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
        let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
        if w < WINDOW || h < WINDOW {
            return Err(format!("geometry must be at least {WINDOW}x{WINDOW}"));
        }
        SensorGeometry::new(w, h).map(GeometrySpec).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Stream sizes to sweep
    #[arg(long, value_delimiter = ',', default_value = "100000,1000000")]
    pub events: Vec<usize>,
    /// Sensor geometries to sweep, as WIDTHxHEIGHT
    #[arg(long, value_delimiter = ',', default_value = "128x128,1280x720")]
    pub geometry: Vec<GeometrySpec>,
    /// Runs per cell; the median is reported
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// Untimed events processed before each timed run
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// Exactly `count` events of uniform activity in the benchmark window.
pub fn bench_stream(count: usize, seed: u64) -> Vec<Event> {
    let window = SensorGeometry::new(WINDOW, WINDOW).expect("valid window");
    let per_us = WINDOW_RATE_HZ * window.pixel_count() as f64 / 1e6;
    let mut duration = (count as f64 / per_us * 1.05).ceil() as u64 + 1;
    loop {
        let mut events = gen_background(window, WINDOW_RATE_HZ, duration, seed);
        if events.len() >= count {
            events.truncate(count);
            return events;
        }
        duration *= 2;
    }
}

/// Moves the window's events to the middle of `geom`.
pub fn translate(events: &[Event], geom: SensorGeometry) -> Vec<Event> {
    let dx = ((geom.width() - WINDOW) / 2) as u16;
    let dy = ((geom.height() - WINDOW) / 2) as u16;
    events
        .iter()
        .map(|e| Event::new(e.t, e.x + dx, e.y + dy, e.p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub geometry: SensorGeometry,
    pub events: usize,
    /// Median time to build the state.
    pub alloc_us: f64,
    /// Median time to process the timed events.
    pub total_us: f64,
    pub ns_per_event: f64,
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Times `events[warmup..]` after feeding `events[..warmup]` untimed.
pub fn measure(
    events: &[Event],
    warmup: usize,
    geom: SensorGeometry,
    params: ClusterParams,
    repeat: usize,
) -> Measurement {
    let warmup = warmup.min(events.len());
    let (prefix, timed) = events.split_at(warmup);
    let mut alloc = Vec::with_capacity(repeat);
    let mut total = Vec::with_capacity(repeat);
    for _ in 0..repeat.max(1) {
        let started = Instant::now();
        let mut clusterer = StreamClusterer::new(geom, params).expect("validated parameters");
        alloc.push(started.elapsed().as_secs_f64() * 1e6);

        for e in prefix {
            black_box(clusterer.process_event(e).expect("benchmark stream is valid"));
        }
        let started = Instant::now();
        for e in timed {
            black_box(clusterer.process_event(black_box(e)).expect("benchmark stream is valid"));
        }
        total.push(started.elapsed().as_secs_f64() * 1e6);
        black_box(clusterer.results().len());
    }
    let total_us = median(total);
    Measurement {
        geometry: geom,
        events: timed.len(),
        alloc_us: median(alloc),
        total_us,
        ns_per_event: if timed.is_empty() { 0.0 } else { total_us * 1e3 / timed.len() as f64 },
    }
}

/// One measurement per cell per round, `result[round][cell]`.
///
/// Every round visits every cell once, so slow drift in machine load is
/// shared by all cells instead of landing on whichever ran last.
pub fn measure_rounds(
    cells: &[(SensorGeometry, Vec<Event>)],
    warmup: usize,
    params: ClusterParams,
    rounds: usize,
) -> Vec<Vec<Measurement>> {
    (0..rounds)
        .map(|_| {
            cells
                .iter()
                .map(|(geom, events)| measure(events, warmup, *geom, params, 1))
                .collect()
        })
        .collect()
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = args.params.params()?;
    if args.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &count in &args.events {
        let base = bench_stream(args.warmup + count, args.seed);
        for &GeometrySpec(geom) in &args.geometry {
            cells.push((geom, translate(&base, geom)));
        }
    }
    let rounds = measure_rounds(&cells, args.warmup, params, args.repeat);

    writeln!(out, "geometry,events,total_us,ns_per_event,alloc_us")?;
    for cell in 0..cells.len() {
        let first = rounds[0][cell];
        let total_us = median(rounds.iter().map(|r| r[cell].total_us).collect());
        let alloc_us = median(rounds.iter().map(|r| r[cell].alloc_us).collect());
        let ns_per_event = if first.events == 0 { 0.0 } else { total_us * 1e3 / first.events as f64 };
        writeln!(
            out,
            "{},{},{:.1},{:.2},{:.1}",
            first.geometry, first.events, total_us, ns_per_event, alloc_us
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_spec_parsing() {
        let g: GeometrySpec = "1280x720".parse().unwrap();
        assert_eq!((g.0.width(), g.0.height()), (1280, 720));
        assert!("64x64".parse::<GeometrySpec>().is_err());
        assert!("1280".parse::<GeometrySpec>().is_err());
    }

    #[test]
    fn bench_stream_has_exact_length_and_translates() {
        let events = bench_stream(5000, 1);
        assert_eq!(events.len(), 5000);
        let g = SensorGeometry::new(1280, 720).unwrap();
        let moved = translate(&events, g);
        assert!(moved.iter().all(|e| g.contains(e.pixel())));
        assert_eq!(moved[0].x, events[0].x + 576);
        assert_eq!(moved[0].y, events[0].y + 296);
    }

    #[test]
    fn warmup_events_are_not_counted() {
        let g = SensorGeometry::new(WINDOW, WINDOW).unwrap();
        let params = ClusterParams::new(2000, 1, 10, 5).unwrap();
        let m = measure(&bench_stream(3000, 2), 1000, g, params, 1);
        assert_eq!(m.events, 2000);
        let m = measure(&bench_stream(300, 2), 1000, g, params, 1);
        assert_eq!((m.events, m.ns_per_event), (0, 0.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
