//! Domain types shared by the clusterer, the reference oracle, and the I/O layer.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Timestamps are unsigned microseconds.
pub type Timestamp = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("sensor geometry must have non-zero area, got {width}x{height}")]
    EmptyGeometry { width: u32, height: u32 },
    #[error("sensor dimension {0} exceeds the 16-bit coordinate range")]
    GeometryTooLarge(u32),
    #[error("invalid cluster parameters: {0}")]
    InvalidParams(&'static str),
    #[error("polarity must be 1 or -1, got {0}")]
    InvalidPolarity(i64),
}

/// Sign of the brightness change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

impl TryFrom<i64> for Polarity {
    type Error = ModelError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            other => Err(ModelError::InvalidPolarity(other)),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// A pixel coordinate on the sensor. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u16,
    pub y: u16,
}

impl Pixel {
    pub const fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }

    /// Chebyshev (chessboard) distance.
    pub fn chebyshev(self, other: Pixel) -> u16 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    /// Key for raster order: ascending row, then ascending column.
    pub fn raster_key(self) -> (u16, u16) {
        (self.y, self.x)
    }
}

/// One camera report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: Timestamp,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub const fn new(t: Timestamp, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }

    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.x, self.y)
    }
}

/// Dimensions of the pixel array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    width: u32,
    height: u32,
}

impl SensorGeometry {
    /// Largest dimension addressable by 16-bit coordinates.
    pub const MAX_DIM: u32 = 1 << 16;

    pub fn new(width: u32, height: u32) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyGeometry { width, height });
        }
        for dim in [width, height] {
            if dim > Self::MAX_DIM {
                return Err(ModelError::GeometryTooLarge(dim));
            }
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        u32::from(pixel.x) < self.width && u32::from(pixel.y) < self.height
    }

    /// Row-major index of an in-bounds pixel.
    #[inline]
    pub fn index(&self, pixel: Pixel) -> usize {
        pixel.y as usize * self.width as usize + pixel.x as usize
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// The four constants that drive clustering.
///
/// `delta_us` bounds the temporal gap between an event and the cluster it
/// joins, `radius` is the Chebyshev neighbourhood radius, and a cluster is
/// reported once it holds at least `min_events` events spread over at least
/// `min_pixels` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterParams {
    pub delta_us: u64,
    pub radius: u16,
    pub min_events: u64,
    pub min_pixels: u64,
}

impl ClusterParams {
    pub fn new(delta_us: u64, radius: u16, min_events: u64, min_pixels: u64) -> Result<Self, ModelError> {
        let params = Self {
            delta_us,
            radius,
            min_events,
            min_pixels,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.delta_us < 1 {
            return Err(ModelError::InvalidParams("delta must be at least 1 µs"));
        }
        // A freshly founded cluster has two events; the threshold has to sit above it.
        if self.min_events < 3 {
            return Err(ModelError::InvalidParams("minimum event count must be at least 3"));
        }
        if self.min_pixels < 1 {
            return Err(ModelError::InvalidParams("minimum pixel count must be at least 1"));
        }
        Ok(())
    }
}

/// One row of the output list: a detected cluster described by its root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub root_t: Timestamp,
    pub root_x: u16,
    pub root_y: u16,
    pub end_t: Timestamp,
    pub event_count: u64,
    pub pixel_count: u64,
}

impl ClusterRecord {
    pub fn root(&self) -> Pixel {
        Pixel::new(self.root_x, self.root_y)
    }

    /// Identity of the root event; used to pair rows from different producers.
    pub fn root_key(&self) -> (Timestamp, u16, u16) {
        (self.root_t, self.root_x, self.root_y)
    }

    /// Checks the row invariants against the thresholds that admitted it.
    pub fn satisfies_invariants(&self, params: &ClusterParams) -> bool {
        self.root_t <= self.end_t
            && self.event_count >= params.min_events
            && self.pixel_count >= params.min_pixels
            && self.pixel_count <= self.event_count
    }
}

/// Iterator over the square neighbourhood of a pixel, clipped to the sensor.
///
/// Yields pixels in raster order and includes the center itself.
#[derive(Debug, Clone)]
pub struct ChebyshevNeighbors {
    x_lo: u32,
    x_hi: u32,
    y_hi: u32,
    x: u32,
    y: u32,
}

impl Iterator for ChebyshevNeighbors {
    type Item = Pixel;

    #[inline]
    fn next(&mut self) -> Option<Pixel> {
        if self.y > self.y_hi {
            return None;
        }
        let out = Pixel::new(self.x as u16, self.y as u16);
        if self.x == self.x_hi {
            self.x = self.x_lo;
            self.y += 1;
        } else {
            self.x += 1;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        if self.y > self.y_hi {
            return (0, Some(0));
        }
        let row_len = (self.x_hi - self.x_lo + 1) as usize;
        let full_rows = (self.y_hi - self.y) as usize;
        let remaining = full_rows * row_len + (self.x_hi - self.x + 1) as usize;
        (remaining, Some(remaining))
    }
}

impl ExactSizeIterator for ChebyshevNeighbors {}

/// All in-bounds pixels within Chebyshev distance `radius` of `center`.
///
/// `center` must lie inside `geom`.
pub fn chebyshev_neighbors(center: Pixel, radius: u16, geom: SensorGeometry) -> ChebyshevNeighbors {
    debug_assert!(geom.contains(center));
    let r = u32::from(radius);
    let (cx, cy) = (u32::from(center.x), u32::from(center.y));
    let x_lo = cx.saturating_sub(r);
    let y_lo = cy.saturating_sub(r);
    ChebyshevNeighbors {
        x_lo,
        x_hi: (cx + r).min(geom.width - 1),
        y_hi: (cy + r).min(geom.height - 1),
        x: x_lo,
        y: y_lo,
    }
}
