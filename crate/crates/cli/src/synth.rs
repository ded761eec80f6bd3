use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use evclust_core::synth::{gen_lamp, gen_noise, merge_streams, LampConfig, NoiseConfig};
use evclust_core::{Pixel, SensorGeometry};

use crate::{format_for_path, write_event_file, CliError, FormatArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Signal {
    /// Periodic positive/negative bursts
    Lamp,
    /// Noise sources only
    None,
}

/// `X,Y,RATE` for one hot pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotPixelSpec {
    pub pixel: Pixel,
    pub rate_hz: f64,
}

impl FromStr for HotPixelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [x, y, rate] = parts.as_slice() else {
            return Err(format!("expected X,Y,RATE, got {s:?}"));
        };
        let x = x.parse().map_err(|_| format!("bad x in {s:?}"))?;
        let y = y.parse().map_err(|_| format!("bad y in {s:?}"))?;
        let rate_hz: f64 = rate.parse().map_err(|_| format!("bad rate in {s:?}"))?;
        if rate_hz.is_nan() || rate_hz < 0.0 {
            return Err(format!("rate must be non-negative in {s:?}"));
        }
        Ok(Self {
            pixel: Pixel::new(x, y),
            rate_hz,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "lamp")]
    pub signal: Signal,
    #[arg(long, default_value_t = 1280)]
    pub width: u32,
    #[arg(long, default_value_t = 720)]
    pub height: u32,
    /// Frequency of the rectified signal, Hz
    #[arg(long, default_value_t = 100.0)]
    pub freq: f64,
    #[arg(long, default_value_t = 10)]
    pub periods: u32,
    #[arg(long, default_value_t = 40)]
    pub events_per_burst: u32,
    #[arg(long, default_value_t = 1500)]
    pub burst_width_us: u64,
    #[arg(long, default_value_t = 640)]
    pub roi_x: u16,
    #[arg(long, default_value_t = 360)]
    pub roi_y: u16,
    #[arg(long, default_value_t = 3)]
    pub roi_radius: u16,
    /// Hot pixel as X,Y,RATE_HZ; repeatable
    #[arg(long = "hot-pixel")]
    pub hot_pixels: Vec<HotPixelSpec>,
    /// Background events per second per pixel
    #[arg(long, default_value_t = 0.0)]
    pub background_rate: f64,
    /// Length of the noise streams; defaults to the lamp's length
    #[arg(long)]
    pub duration_us: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl SynthArgs {
    pub fn lamp_config(&self) -> Result<LampConfig, CliError> {
        Ok(LampConfig {
            frequency: self.freq,
            periods: self.periods,
            events_per_burst: self.events_per_burst,
            burst_width_us: self.burst_width_us,
            roi_center: Pixel::new(self.roi_x, self.roi_y),
            roi_radius: self.roi_radius,
            geometry: SensorGeometry::new(self.width, self.height).map_err(|e| CliError::Usage(e.to_string()))?,
            seed: self.seed,
        })
    }
}

/// Lamp (seeded with `seed`) merged with noise (seeded with `seed + 1`).
pub fn synthesize(args: &SynthArgs) -> Result<Vec<evclust_core::Event>, CliError> {
    let lamp = args.lamp_config()?;
    let mut streams = Vec::new();
    if args.signal == Signal::Lamp {
        streams.push(gen_lamp(&lamp).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    let duration_us = args
        .duration_us
        .unwrap_or_else(|| u64::from(args.periods) * lamp.period_us());
    let noise = NoiseConfig {
        hot_pixels: args.hot_pixels.iter().map(|h| (h.pixel, h.rate_hz)).collect(),
        background_rate: args.background_rate,
        duration_us,
        seed: args.seed.wrapping_add(1),
    };
    if !noise.hot_pixels.is_empty() || noise.background_rate > 0.0 {
        streams.push(gen_noise(&noise, lamp.geometry).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    Ok(merge_streams(&streams))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let format = format_for_path(&args.out, args.format)?;
    let events = synthesize(args)?;
    write_event_file(&args.out, format, &events)
}
