//! Deterministic synthetic event streams.
//!
//! All randomness comes from SplitMix64 seeded with the caller's 64-bit seed
//! (state = seed; each draw adds `0x9E3779B97F4A7C15` and mixes). Derived
//! draws are defined so other implementations can reproduce streams exactly:
//!
//! * `below(n)`: `(next_u64() as u128 * n as u128) >> 64`
//! * `unit()`: `(next_u64() >> 11) as f64 * 2^-53`, in `[0, 1)`
//! * `polarity()`: `Positive` if `next_u64() >> 63 == 0`, else `Negative`
//!
//! Test vector: seed 0 yields `0xe220a8397b1dcdaf`, `0x6e789e6aa1b965f4`,
//! `0x06c45d188009454f`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::model::{Event, Pixel, Polarity, SensorGeometry, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
}

/// Seeded random source with the derived draws documented above.
#[derive(Debug, Clone)]
pub struct SynthRng(SplitMix64);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn polarity(&mut self) -> Polarity {
        if self.next_u64() >> 63 == 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

/// Periodic burst signal in a small region, one positive and one negative
/// burst per period, in the manner of a lamp flickering on a rectified grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LampConfig {
    /// Frequency of the rectified signal, Hz.
    pub frequency: f64,
    pub periods: u32,
    /// Events per burst, per polarity.
    pub events_per_burst: u32,
    pub burst_width_us: u64,
    pub roi_center: Pixel,
    /// Chebyshev radius of the region the bursts live in.
    pub roi_radius: u16,
    pub geometry: SensorGeometry,
    pub seed: u64,
}

impl Default for LampConfig {
    fn default() -> Self {
        Self {
            frequency: 100.0,
            periods: 10,
            events_per_burst: 40,
            burst_width_us: 1500,
            roi_center: Pixel::new(640, 360),
            roi_radius: 3,
            geometry: SensorGeometry::new(1280, 720).expect("valid geometry"),
            seed: 1,
        }
    }
}

impl LampConfig {
    pub fn period_us(&self) -> u64 {
        (1e6 / self.frequency).round() as u64
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad(format!("frequency must be positive, got {}", self.frequency));
        }
        if self.events_per_burst < 1 {
            return bad("events_per_burst must be at least 1".into());
        }
        if 4 * self.burst_width_us >= self.period_us() {
            return bad(format!(
                "burst width {} µs must be under a quarter of the {} µs period",
                self.burst_width_us,
                self.period_us()
            ));
        }
        // Every event gets its own time slot, which keeps the first one strictly earliest.
        if self.burst_width_us < u64::from(self.events_per_burst) {
            return bad("burst width must be at least events_per_burst µs".into());
        }
        let r = u32::from(self.roi_radius);
        let (cx, cy) = (u32::from(self.roi_center.x), u32::from(self.roi_center.y));
        if cx < r || cy < r || cx + r >= self.geometry.width() || cy + r >= self.geometry.height() {
            return bad("region of interest does not fit the sensor".into());
        }
        Ok(())
    }
}

/// One burst confined to a box: timestamps in per-event slots, pixels from a
/// random walk where each step starts at a pixel the burst already used.
fn gen_burst(
    rng: &mut SynthRng,
    start: Timestamp,
    count: u32,
    width_us: u64,
    center: Pixel,
    radius: u16,
    p: Polarity,
) -> Vec<Event> {
    let n = u64::from(count);
    let (lo_x, hi_x) = (center.x - radius, center.x + radius);
    let (lo_y, hi_y) = (center.y - radius, center.y + radius);
    let first = Pixel::new(
        rng.range_inclusive(lo_x.into(), hi_x.into()) as u16,
        rng.range_inclusive(lo_y.into(), hi_y.into()) as u16,
    );
    let mut out = Vec::with_capacity(count as usize);
    out.push(Event::new(start, first.x, first.y, p));
    for i in 1..n {
        let slot_lo = start + i * width_us / n;
        let slot_hi = start + (i + 1) * width_us / n - 1;
        let t = rng.range_inclusive(slot_lo, slot_hi);
        let from = out[rng.below(out.len() as u64) as usize];
        let step = |v: u16, lo: u16, hi: u16, r: &mut SynthRng| {
            (i64::from(v) + r.below(3) as i64 - 1).clamp(i64::from(lo), i64::from(hi)) as u16
        };
        let x = step(from.x, lo_x, hi_x, rng);
        let y = step(from.y, lo_y, hi_y, rng);
        out.push(Event::new(t, x, y, p));
    }
    out
}

/// Lamp-style periodic signal. Positive bursts start at `k * period`, negative
/// bursts half a period later.
pub fn gen_lamp(config: &LampConfig) -> Result<Vec<Event>, SynthError> {
    config.validate()?;
    let mut rng = SynthRng::new(config.seed);
    let period = config.period_us();
    let mut out = Vec::with_capacity(2 * config.periods as usize * config.events_per_burst as usize);
    for k in 0..u64::from(config.periods) {
        for (offset, p) in [(0, Polarity::Positive), (period / 2, Polarity::Negative)] {
            out.extend(gen_burst(
                &mut rng,
                k * period + offset,
                config.events_per_burst,
                config.burst_width_us,
                config.roi_center,
                config.roi_radius,
                p,
            ));
        }
    }
    Ok(out)
}

/// Near-periodic events on a single pixel: the k-th event lands in
/// `[k * T, k * T + T / 2)` with `T = 1 / rate`.
pub fn gen_hot_pixel(pixel: Pixel, rate_hz: f64, duration_us: u64, seed: u64) -> Vec<Event> {
    if rate_hz.is_nan() || rate_hz <= 0.0 {
        return Vec::new();
    }
    let mut rng = SynthRng::new(seed);
    let period = 1e6 / rate_hz;
    let mut out = Vec::new();
    for k in 0u64.. {
        let t = (k as f64 * period + rng.unit() * period / 2.0).floor() as u64;
        if t >= duration_us {
            break;
        }
        out.push(Event::new(t, pixel.x, pixel.y, rng.polarity()));
    }
    out
}

/// Uniform background: a Poisson process of `rate_hz` per pixel over the
/// whole sensor, with uniformly drawn pixels.
pub fn gen_background(geometry: SensorGeometry, rate_hz: f64, duration_us: u64, seed: u64) -> Vec<Event> {
    if rate_hz.is_nan() || rate_hz <= 0.0 {
        return Vec::new();
    }
    let mut rng = SynthRng::new(seed);
    let per_us = rate_hz * geometry.pixel_count() as f64 / 1e6;
    let mut out = Vec::new();
    let mut clock = 0.0f64;
    loop {
        clock += -(1.0 - rng.unit()).ln() / per_us;
        let t = clock.floor() as u64;
        if t >= duration_us {
            break;
        }
        let x = rng.below(u64::from(geometry.width())) as u16;
        let y = rng.below(u64::from(geometry.height())) as u16;
        out.push(Event::new(t, x, y, rng.polarity()));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub hot_pixels: Vec<(Pixel, f64)>,
    /// Events per second per pixel.
    pub background_rate: f64,
    pub duration_us: u64,
    pub seed: u64,
}

/// Hot pixels and background merged into one stream. The background uses
/// `seed`; hot pixel `i` uses `seed + i + 1`.
pub fn gen_noise(config: &NoiseConfig, geometry: SensorGeometry) -> Result<Vec<Event>, SynthError> {
    if config.background_rate < 0.0 || config.hot_pixels.iter().any(|&(_, r)| r < 0.0) {
        return Err(SynthError::InvalidConfig("rates must be non-negative".into()));
    }
    if let Some((p, _)) = config.hot_pixels.iter().find(|(p, _)| !geometry.contains(*p)) {
        return Err(SynthError::InvalidConfig(format!("hot pixel ({},{}) is off the sensor", p.x, p.y)));
    }
    let mut streams = vec![gen_background(geometry, config.background_rate, config.duration_us, config.seed)];
    for (i, &(pixel, rate)) in config.hot_pixels.iter().enumerate() {
        let seed = config.seed.wrapping_add(i as u64 + 1);
        streams.push(gen_hot_pixel(pixel, rate, config.duration_us, seed));
    }
    Ok(merge_streams(&streams))
}

/// Stable k-way merge by timestamp; ties keep the earlier stream first.
pub fn merge_streams(streams: &[Vec<Event>]) -> Vec<Event> {
    let total = streams.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap: BinaryHeap<Reverse<(Timestamp, usize, usize)>> = streams
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| Reverse((s[0].t, i, 0)))
        .collect();
    while let Some(Reverse((_, stream, pos))) = heap.pop() {
        out.push(streams[stream][pos]);
        if let Some(next) = streams[stream].get(pos + 1) {
            heap.push(Reverse((next.t, stream, pos + 1)));
        }
    }
    out
}

/// Random bursts laid out so that any two bursts either occupy boxes more
/// than `radius` apart or are separated in time by more than `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedConfig {
    pub geometry: SensorGeometry,
    pub delta_us: u64,
    pub radius: u16,
    pub max_events: usize,
    pub max_burst_len: u32,
    /// Largest half-side of a burst's box.
    pub max_box_radius: u16,
    pub seed: u64,
}

impl SeparatedConfig {
    pub fn new(geometry: SensorGeometry, delta_us: u64, radius: u16, max_events: usize, seed: u64) -> Self {
        Self {
            geometry,
            delta_us,
            radius,
            max_events,
            max_burst_len: 60,
            max_box_radius: 4,
            seed,
        }
    }
}

/// Bursts from [`SeparatedConfig`]; each burst is one ground-truth cluster.
///
/// Consecutive events inside a burst are at most `delta / 2` apart and each
/// lands within `radius` of an earlier burst event no older than `delta`.
pub fn gen_separated_bursts(config: &SeparatedConfig) -> Result<Vec<Event>, SynthError> {
    let g = config.geometry;
    let box_r = config.max_box_radius;
    if g.width() <= 2 * u32::from(box_r) || g.height() <= 2 * u32::from(box_r) {
        return Err(SynthError::InvalidConfig("sensor too small for burst boxes".into()));
    }
    if config.delta_us < 2 || config.max_burst_len < 1 {
        return Err(SynthError::InvalidConfig("delta must be at least 2 µs and bursts non-empty".into()));
    }
    let mut rng = SynthRng::new(config.seed);
    let delta = config.delta_us;
    let reach = i64::from(config.radius);
    // (x_lo, y_lo, x_hi, y_hi, last timestamp)
    let mut placed: Vec<(i64, i64, i64, i64, Timestamp)> = Vec::new();
    let mut bursts: Vec<Vec<Event>> = Vec::new();
    let mut total = 0usize;
    let mut cursor: Timestamp = 0;

    loop {
        let len = rng.range_inclusive(1, u64::from(config.max_burst_len)) as usize;
        if total + len > config.max_events {
            break;
        }
        let r = rng.range_inclusive(0, u64::from(box_r)) as i64;
        let cx = rng.range_inclusive(r as u64, u64::from(g.width()) - 1 - r as u64) as i64;
        let cy = rng.range_inclusive(r as u64, u64::from(g.height()) - 1 - r as u64) as i64;
        let bx = (cx - r, cy - r, cx + r, cy + r);

        let mut start = cursor + rng.below(delta);
        for &(x0, y0, x1, y1, end) in &placed {
            let apart = bx.0 > x1 + reach || x0 > bx.2 + reach || bx.1 > y1 + reach || y0 > bx.3 + reach;
            if !apart {
                start = start.max(end + delta + 1);
            }
        }

        let mut events: Vec<Event> = Vec::with_capacity(len);
        let mut t = start;
        for i in 0..len {
            if i > 0 {
                t += rng.below(delta / 2 + 1);
            }
            let (x, y) = if i == 0 {
                (
                    rng.range_inclusive(bx.0 as u64, bx.2 as u64) as i64,
                    rng.range_inclusive(bx.1 as u64, bx.3 as u64) as i64,
                )
            } else {
                let recent: Vec<&Event> = events.iter().filter(|e| t - e.t <= delta).collect();
                let from = recent[rng.below(recent.len() as u64) as usize];
                let span = 2 * reach as u64 + 1;
                let dx = rng.below(span) as i64 - reach;
                let dy = rng.below(span) as i64 - reach;
                (
                    (i64::from(from.x) + dx).clamp(bx.0, bx.2),
                    (i64::from(from.y) + dy).clamp(bx.1, bx.3),
                )
            };
            events.push(Event::new(t, x as u16, y as u16, rng.polarity()));
        }
        placed.push((bx.0, bx.1, bx.2, bx.3, t));
        total += len;
        bursts.push(events);
        cursor += rng.below(delta + 1);
    }
    Ok(merge_streams(&bursts))
}
