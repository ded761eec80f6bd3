//! Single-pass cluster detector.
//!
//! Every pixel carries a small record (its last timestamp, a link to the root
//! pixel of the cluster it last joined, and, when it is itself a root, that
//! cluster's counters). Each event touches only its own cell and the cells of
//! its Chebyshev neighbourhood, so the cost per event is independent of the
//! sensor size and of how many clusters exist.
//!
//! Per event the decision flow is:
//!
//! 1. drop the pixel's root link if the root has since started a newer cluster;
//! 2. if the pixel is linked and its cluster saw an event within `delta`,
//!    extend that cluster;
//! 3. otherwise pick the freshest neighbour (within `delta`). With none the
//!    event is isolated. If the neighbour belongs to a live cluster the pixel
//!    joins it, otherwise the neighbour's last event becomes the root of a new
//!    two-event cluster.
//!
//! Reported rows are created or refreshed whenever an update leaves the
//! cluster at or above both thresholds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    chebyshev_neighbors, ClusterParams, ClusterRecord, Event, ModelError, Pixel, SensorGeometry, Timestamp,
};

/// `time_surface` value of a pixel that has never fired.
pub const NEVER: Timestamp = Timestamp::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("event timestamp {got} precedes previous timestamp {previous}")]
    OutOfOrderTimestamp { previous: Timestamp, got: Timestamp },
    #[error("event at ({x},{y}) lies outside the {width}x{height} sensor")]
    OutOfBounds { x: u16, y: u16, width: u32, height: u32 },
}

/// Cluster bookkeeping of one pixel. The pixel's last timestamp lives
/// apart from it, see [`PixelState::time_surface`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(align(64))]
pub struct PixelCell {
    /// Root pixel of the last cluster this pixel was related to.
    pub root_link: Option<Pixel>,
    /// Event count of the last cluster rooted here.
    pub grade: u64,
    /// Contributing-pixel count of the last cluster rooted here.
    pub pixels: u64,
    /// Root timestamp of the last cluster rooted here.
    pub cluster_begin: Timestamp,
    /// Timestamp of the last event joined to the cluster rooted here.
    pub cluster_end: Timestamp,
    /// Output row of the last cluster rooted here.
    pub cluster_id: Option<u32>,
    /// Begin timestamp of the cluster this pixel was linked under.
    pub compatibility: Timestamp,
}

impl PixelCell {
    const INITIAL: PixelCell = PixelCell {
        root_link: None,
        grade: 0,
        pixels: 0,
        cluster_begin: 0,
        cluster_end: 0,
        cluster_id: None,
        compatibility: 0,
    };
}

/// Pixel-to-slot mapping for a plane stored as 4 KiB tiles.
///
/// A neighbourhood then spans the same few pages whatever the sensor width;
/// in row-major order every row of it would sit on its own page. Tile rows
/// hold an odd number of tiles: with an even count such as 1280 / 8 the same
/// columns of successive tile rows fall into a fraction of the cache sets,
/// and a small active region of a large sensor thrashes a cache it would
/// otherwise fit in.
#[derive(Debug, Clone, Copy)]
struct TiledLayout {
    shift_x: u32,
    shift_y: u32,
    tiles_per_row: usize,
    len: usize,
}

impl TiledLayout {
    fn new(geom: SensorGeometry, shift_x: u32, shift_y: u32) -> Self {
        let tiles_x = (geom.width() as usize).div_ceil(1 << shift_x);
        let tiles_y = (geom.height() as usize).div_ceil(1 << shift_y);
        let tiles_per_row = tiles_x | 1;
        Self {
            shift_x,
            shift_y,
            tiles_per_row,
            len: (tiles_per_row * tiles_y) << (shift_x + shift_y),
        }
    }

    #[inline]
    fn index(&self, pixel: Pixel) -> usize {
        let (x, y) = (pixel.x as usize, pixel.y as usize);
        let tile = (y >> self.shift_y) * self.tiles_per_row + (x >> self.shift_x);
        let row = y & ((1 << self.shift_y) - 1);
        let col = x & ((1 << self.shift_x) - 1);
        (tile << (self.shift_x + self.shift_y)) | (row << self.shift_x) | col
    }
}

/// Dense per-pixel state.
///
/// Timestamps form their own plane because the neighbour scan reads nothing
/// else; the remaining fields are touched for at most three pixels per event.
#[derive(Debug, Clone)]
pub struct PixelState {
    geom: SensorGeometry,
    surface_layout: TiledLayout,
    cell_layout: TiledLayout,
    surface: Vec<Timestamp>,
    cells: Vec<PixelCell>,
}

impl PixelState {
    pub fn new(geom: SensorGeometry) -> Self {
        // 32 x 16 timestamps and 8 x 8 cells per tile, 4 KiB each
        let surface_layout = TiledLayout::new(geom, 5, 4);
        let cell_layout = TiledLayout::new(geom, 3, 3);
        Self {
            geom,
            surface_layout,
            cell_layout,
            surface: vec![NEVER; surface_layout.len],
            cells: vec![PixelCell::INITIAL; cell_layout.len],
        }
    }

    /// Timestamp of the pixel's last event, or [`NEVER`].
    #[inline]
    pub fn time_surface(&self, pixel: Pixel) -> Timestamp {
        debug_assert!(self.geom.contains(pixel));
        self.surface[self.surface_layout.index(pixel)]
    }

    #[inline]
    fn set_time_surface(&mut self, pixel: Pixel, t: Timestamp) {
        let idx = self.surface_layout.index(pixel);
        self.surface[idx] = t;
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geom
    }

    #[inline]
    pub fn get(&self, pixel: Pixel) -> &PixelCell {
        debug_assert!(self.geom.contains(pixel));
        &self.cells[self.cell_layout.index(pixel)]
    }

    #[inline]
    fn get_mut(&mut self, pixel: Pixel) -> &mut PixelCell {
        let idx = self.cell_layout.index(pixel);
        &mut self.cells[idx]
    }

    pub fn heap_bytes(&self) -> usize {
        self.surface.capacity() * std::mem::size_of::<Timestamp>()
            + self.cells.capacity() * std::mem::size_of::<PixelCell>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    /// No fresh neighbour; the event starts nothing yet.
    Isolated,
    /// A neighbour's last event became the root of a new two-event cluster.
    ClusterFounded,
    /// The event joined the cluster its own pixel was linked to.
    ClusterExtended,
    /// The pixel joined the live cluster of a neighbour.
    PixelAttached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Freshness {
    NewRow,
    UpdatedRow,
}

/// A reported row was created or refreshed by the current event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub row_index: usize,
    pub freshness: Freshness,
    pub record: ClusterRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub detection: Option<DetectionEvent>,
}

impl StepOutcome {
    fn plain(kind: StepKind) -> Self {
        Self { kind, detection: None }
    }
}

/// `earlier` happened no more than `delta` before `now`.
#[inline]
fn within(now: Timestamp, earlier: Timestamp, delta: u64) -> bool {
    earlier <= now && now - earlier <= delta
}

/// Streaming clusterer over one sensor.
///
/// Events must arrive in non-decreasing timestamp order. The state can be
/// moved between threads but is processed strictly sequentially.
#[derive(Debug, Clone)]
pub struct StreamClusterer {
    params: ClusterParams,
    state: PixelState,
    rows: Vec<ClusterRecord>,
    last_t: Option<Timestamp>,
}

impl StreamClusterer {
    pub fn new(geom: SensorGeometry, params: ClusterParams) -> Result<Self, ClusterError> {
        params.validate()?;
        Ok(Self {
            params,
            state: PixelState::new(geom),
            rows: Vec::new(),
            last_t: None,
        })
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.state.geom
    }

    pub fn pixel_state(&self) -> &PixelState {
        &self.state
    }

    /// Output rows in creation order.
    pub fn results(&self) -> &[ClusterRecord] {
        &self.rows
    }

    pub fn into_results(self) -> Vec<ClusterRecord> {
        self.rows
    }

    /// Heap memory held by the per-pixel arrays and the output list.
    pub fn memory_bytes(&self) -> usize {
        self.state.heap_bytes() + self.rows.capacity() * std::mem::size_of::<ClusterRecord>()
    }

    /// Feeds one event through the detector.
    pub fn process_event(&mut self, e: &Event) -> Result<StepOutcome, ClusterError> {
        let geom = self.state.geom;
        let pixel = e.pixel();
        if !geom.contains(pixel) {
            return Err(ClusterError::OutOfBounds {
                x: e.x,
                y: e.y,
                width: geom.width(),
                height: geom.height(),
            });
        }
        if let Some(previous) = self.last_t {
            if e.t < previous {
                return Err(ClusterError::OutOfOrderTimestamp { previous, got: e.t });
            }
        }
        let t = e.t;

        self.stale_link_check(pixel);
        let outcome = if self.membership_check(pixel, t) {
            self.extend_cluster(pixel, t)
        } else {
            match self.neighbor_select(pixel, t) {
                None => {
                    self.reset_link(pixel);
                    StepOutcome::plain(StepKind::Isolated)
                }
                Some(anchor) if self.live_root(anchor).is_some() => self.attach_pixel(pixel, anchor, t),
                Some(anchor) => self.found_cluster(anchor, pixel, t),
            }
        };

        // Written last so that the neighbour scan only ever sees earlier events.
        self.state.set_time_surface(pixel, t);
        self.last_t = Some(t);
        Ok(outcome)
    }

    /// Feeds a whole stream, returning the outcome of every event.
    pub fn process_all<'a, I>(&mut self, events: I) -> Result<Vec<StepOutcome>, ClusterError>
    where
        I: IntoIterator<Item = &'a Event>,
    {
        events.into_iter().map(|e| self.process_event(e)).collect()
    }

    /// Root of the cluster `pixel` is linked to, provided that root has not
    /// begun a newer cluster since the link was made.
    fn live_root(&self, pixel: Pixel) -> Option<Pixel> {
        let cell = self.state.get(pixel);
        let root = cell.root_link?;
        (cell.compatibility == self.state.get(root).cluster_begin).then_some(root)
    }

    fn reset_link(&mut self, pixel: Pixel) {
        let cell = self.state.get_mut(pixel);
        cell.root_link = None;
        cell.compatibility = 0;
    }

    /// Drops the pixel's link if its root has been re-rooted by a newer
    /// cluster. Returns whether a reset happened.
    fn stale_link_check(&mut self, pixel: Pixel) -> bool {
        let stale = self.state.get(pixel).root_link.is_some() && self.live_root(pixel).is_none();
        if stale {
            self.reset_link(pixel);
        }
        stale
    }

    /// The pixel is linked and its cluster has seen an event within `delta` of `t`.
    pub fn membership_check(&self, pixel: Pixel, t: Timestamp) -> bool {
        match self.state.get(pixel).root_link {
            Some(root) => within(t, self.state.get(root).cluster_end, self.params.delta_us),
            None => false,
        }
    }

    /// Neighbour (center included) whose last event is closest in time to `t`
    /// and no more than `delta` before it. Ties go to the raster-first pixel.
    pub fn neighbor_select(&self, pixel: Pixel, t: Timestamp) -> Option<Pixel> {
        let delta = self.params.delta_us;
        let mut best: Option<(u64, Pixel)> = None;
        for candidate in chebyshev_neighbors(pixel, self.params.radius, self.state.geom) {
            let ts = self.state.time_surface(candidate);
            if ts == NEVER || !within(t, ts, delta) {
                continue;
            }
            let gap = t - ts;
            // Strict comparison keeps the first pixel in raster order on ties.
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, candidate));
            }
        }
        best.map(|(_, p)| p)
    }

    fn found_cluster(&mut self, anchor: Pixel, pixel: Pixel, t: Timestamp) -> StepOutcome {
        let begin = self.state.time_surface(anchor);
        {
            let root = self.state.get_mut(anchor);
            root.root_link = Some(anchor);
            root.cluster_begin = begin;
            root.compatibility = begin;
            root.cluster_end = t;
            root.grade = 2;
            root.pixels = if anchor == pixel { 1 } else { 2 };
        }
        let member = self.state.get_mut(pixel);
        member.root_link = Some(anchor);
        member.compatibility = begin;
        // grade is 2 here and min_events >= 3, so this never publishes; it is
        // kept so the threshold logic lives in one place.
        let detection = self.publish_or_update_detection(anchor, t);
        StepOutcome {
            kind: StepKind::ClusterFounded,
            detection,
        }
    }

    fn extend_cluster(&mut self, pixel: Pixel, t: Timestamp) -> StepOutcome {
        let root = self.state.get(pixel).root_link.expect("membership implies a link");
        let cell = self.state.get_mut(root);
        cell.cluster_end = t;
        cell.grade += 1;
        StepOutcome {
            kind: StepKind::ClusterExtended,
            detection: self.publish_or_update_detection(root, t),
        }
    }

    fn attach_pixel(&mut self, pixel: Pixel, anchor: Pixel, t: Timestamp) -> StepOutcome {
        let anchor_cell = *self.state.get(anchor);
        let root = anchor_cell.root_link.expect("attach requires a linked anchor");
        let member = self.state.get_mut(pixel);
        member.root_link = Some(root);
        member.compatibility = anchor_cell.compatibility;
        let cell = self.state.get_mut(root);
        cell.cluster_end = t;
        cell.grade += 1;
        cell.pixels += 1;
        StepOutcome {
            kind: StepKind::PixelAttached,
            detection: self.publish_or_update_detection(root, t),
        }
    }

    fn publish_or_update_detection(&mut self, root: Pixel, t: Timestamp) -> Option<DetectionEvent> {
        let cell = *self.state.get(root);
        if cell.grade < self.params.min_events || cell.pixels < self.params.min_pixels {
            return None;
        }
        let live_row = cell
            .cluster_id
            .map(|id| id as usize)
            .filter(|&id| within(t, self.rows[id].end_t, self.params.delta_us));
        match live_row {
            Some(id) => {
                let row = &mut self.rows[id];
                row.end_t = cell.cluster_end;
                row.event_count = cell.grade;
                row.pixel_count = cell.pixels;
                Some(DetectionEvent {
                    row_index: id,
                    freshness: Freshness::UpdatedRow,
                    record: *row,
                })
            }
            None => {
                let id = self.rows.len();
                let record = ClusterRecord {
                    root_t: cell.cluster_begin,
                    root_x: root.x,
                    root_y: root.y,
                    end_t: cell.cluster_end,
                    event_count: cell.grade,
                    pixel_count: cell.pixels,
                };
                self.rows.push(record);
                self.state.get_mut(root).cluster_id = Some(u32::try_from(id).expect("more than u32::MAX rows"));
                Some(DetectionEvent {
                    row_index: id,
                    freshness: Freshness::NewRow,
                    record,
                })
            }
        }
    }
}
