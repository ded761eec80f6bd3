//! Streaming detection of small spatio-temporal event clusters in event-camera
//! data, reporting each cluster by its root (first) event.
//!
//! [`clusterer::StreamClusterer`] does the work in one pass with constant
//! per-event cost; [`oracle`] rebuilds the same answer by brute force from the
//! graph definition and is what the tests trust.

pub mod clusterer;
pub mod io;
pub mod model;
pub mod oracle;
pub mod synth;

pub use clusterer::{DetectionEvent, Freshness, PixelCell, PixelState, StepKind, StepOutcome, StreamClusterer};
pub use model::{chebyshev_neighbors, ClusterParams, ClusterRecord, Event, Pixel, Polarity, SensorGeometry, Timestamp};
