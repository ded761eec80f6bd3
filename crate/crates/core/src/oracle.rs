//! Brute-force ground truth built straight from the inductive graph definition.
//!
//! Events are vertices. Each new event either joins the component that already
//! contains a vertex on the same pixel and whose latest vertex is within
//! `delta` (rule 1), or else the component of the freshest vertex within
//! `delta` and Chebyshev distance `radius` (rule 2), or starts a new component
//! (rule 3). A joining vertex gets a single edge from its component's root,
//! the component's minimal-index vertex.
//!
//! Nothing here is incremental or clever; it is meant to be obviously right.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterRecord, Event, Timestamp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("events are not sorted by timestamp at index {index}")]
    Unsorted { index: usize },
    #[error("event {index} satisfies the same-pixel rule for {count} components")]
    AmbiguousSamePixelRule { index: usize, count: usize },
}

/// Which rule attached a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinRule {
    SamePixel,
    Neighbor,
    NewComponent,
}

/// Directed forest over the input events.
#[derive(Debug, Clone)]
pub struct Polyforest {
    pub events: Vec<Event>,
    /// `(root_index, vertex_index)` pairs in insertion order.
    pub edges: Vec<(usize, usize)>,
    /// Component id of each vertex; ids are assigned in root order.
    pub component_of: Vec<usize>,
    /// Root vertex of each component.
    pub roots: Vec<usize>,
    pub rules: Vec<JoinRule>,
}

impl Polyforest {
    pub fn component_count(&self) -> usize {
        self.roots.len()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.events.len();
        let mut in_degree = vec![0usize; n];
        for &(from, to) in &self.edges {
            if from >= to {
                return Err(format!("edge {from}->{to} does not point forward"));
            }
            in_degree[to] += 1;
            if self.roots[self.component_of[to]] != from {
                return Err(format!("edge {from}->{to} does not start at the component root"));
            }
        }
        let root_set: HashSet<usize> = self.roots.iter().copied().collect();
        for (v, &degree) in in_degree.iter().enumerate() {
            let expected = usize::from(!root_set.contains(&v));
            if degree != expected {
                return Err(format!("vertex {v} has in-degree {degree}"));
            }
        }
        for (c, &root) in self.roots.iter().enumerate() {
            if self.component_of[root] != c {
                return Err(format!("root {root} is not in its component {c}"));
            }
            if let Some(v) = (0..root).find(|&v| self.component_of[v] == c) {
                return Err(format!("component {c} has vertex {v} below its root {root}"));
            }
        }
        // n vertices, one edge per non-root: with every edge inside a component
        // this is exactly a forest of `roots.len()` trees.
        if self.edges.len() + self.roots.len() != n {
            return Err("edge count is not vertices minus components".into());
        }
        Ok(())
    }
}

struct Component {
    max_t: Timestamp,
    pixels: HashSet<(u16, u16)>,
}

/// Builds the polyforest by literal application of the three rules.
///
/// Rule-2 ties between qualifying vertices go to the smallest time gap, then
/// the raster-first pixel, then the most recent vertex.
pub fn build_polyforest(events: &[Event], delta: u64, radius: u16) -> Result<Polyforest, OracleError> {
    if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(OracleError::Unsorted { index: i + 1 });
    }
    let mut components: Vec<Component> = Vec::new();
    let mut forest = Polyforest {
        events: events.to_vec(),
        edges: Vec::new(),
        component_of: Vec::with_capacity(events.len()),
        roots: Vec::new(),
        rules: Vec::with_capacity(events.len()),
    };

    for (k, e) in events.iter().enumerate() {
        let same_pixel: Vec<usize> = components
            .iter()
            .enumerate()
            .filter(|(_, c)| e.t - c.max_t <= delta && c.pixels.contains(&(e.x, e.y)))
            .map(|(id, _)| id)
            .collect();
        if same_pixel.len() > 1 {
            return Err(OracleError::AmbiguousSamePixelRule {
                index: k,
                count: same_pixel.len(),
            });
        }

        let (target, rule) = if let Some(&id) = same_pixel.first() {
            (Some(id), JoinRule::SamePixel)
        } else {
            // Sorted input: once a vertex is older than delta, all before it are too.
            let best = (0..k)
                .rev()
                .take_while(|&j| e.t - events[j].t <= delta)
                .filter(|&j| events[j].pixel().chebyshev(e.pixel()) <= radius)
                .min_by_key(|&j| (e.t - events[j].t, events[j].pixel().raster_key(), std::cmp::Reverse(j)));
            match best {
                Some(j) => (Some(forest.component_of[j]), JoinRule::Neighbor),
                None => (None, JoinRule::NewComponent),
            }
        };

        match target {
            Some(id) => {
                forest.edges.push((forest.roots[id], k));
                forest.component_of.push(id);
                let c = &mut components[id];
                c.max_t = c.max_t.max(e.t);
                c.pixels.insert((e.x, e.y));
            }
            None => {
                forest.component_of.push(components.len());
                forest.roots.push(k);
                components.push(Component {
                    max_t: e.t,
                    pixels: HashSet::from([(e.x, e.y)]),
                });
            }
        }
        forest.rules.push(rule);
    }
    Ok(forest)
}

/// Per-component description in the output-row layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub root_index: usize,
    pub root_t: Timestamp,
    pub root_x: u16,
    pub root_y: u16,
    pub end_t: Timestamp,
    pub event_count: u64,
    pub distinct_pixels: u64,
}

impl ComponentSummary {
    pub fn to_record(&self) -> ClusterRecord {
        ClusterRecord {
            root_t: self.root_t,
            root_x: self.root_x,
            root_y: self.root_y,
            end_t: self.end_t,
            event_count: self.event_count,
            pixel_count: self.distinct_pixels,
        }
    }
}

/// One summary per component, in root order.
pub fn component_summaries(forest: &Polyforest) -> Vec<ComponentSummary> {
    let mut out: Vec<ComponentSummary> = forest
        .roots
        .iter()
        .map(|&r| {
            let e = forest.events[r];
            ComponentSummary {
                root_index: r,
                root_t: e.t,
                root_x: e.x,
                root_y: e.y,
                end_t: e.t,
                event_count: 0,
                distinct_pixels: 0,
            }
        })
        .collect();
    let mut seen: Vec<HashSet<(u16, u16)>> = vec![HashSet::new(); out.len()];
    for (v, e) in forest.events.iter().enumerate() {
        let c = forest.component_of[v];
        let s = &mut out[c];
        s.end_t = s.end_t.max(e.t);
        s.event_count += 1;
        if seen[c].insert((e.x, e.y)) {
            s.distinct_pixels += 1;
        }
    }
    out
}

/// Components with at least `min_events` events over at least `min_pixels` distinct pixels.
pub fn qualifying_roots(summaries: &[ComponentSummary], min_events: u64, min_pixels: u64) -> Vec<ClusterRecord> {
    summaries
        .iter()
        .filter(|s| s.event_count >= min_events && s.distinct_pixels >= min_pixels)
        .map(ComponentSummary::to_record)
        .collect()
}

/// For every component, the index of the first event after which the
/// component meets both thresholds, if it ever does.
pub fn qualification_indices(forest: &Polyforest, min_events: u64, min_pixels: u64) -> Vec<Option<usize>> {
    let comps = forest.component_count();
    let mut counts = vec![0u64; comps];
    let mut seen: Vec<HashSet<(u16, u16)>> = vec![HashSet::new(); comps];
    let mut first = vec![None; comps];
    for (v, e) in forest.events.iter().enumerate() {
        let c = forest.component_of[v];
        counts[c] += 1;
        seen[c].insert((e.x, e.y));
        if first[c].is_none() && counts[c] >= min_events && seen[c].len() as u64 >= min_pixels {
            first[c] = Some(v);
        }
    }
    first
}

/// Rows whose root was found by both producers but disagree on one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMismatch {
    pub root_t: Timestamp,
    pub root_x: u16,
    pub root_y: u16,
    pub field: RecordField,
    pub oracle: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordField {
    EndT,
    EventCount,
    PixelCount,
}

/// Difference between the oracle's qualifying roots and the streaming rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub matched: Vec<(ClusterRecord, ClusterRecord)>,
    pub oracle_only: Vec<ClusterRecord>,
    pub stream_only: Vec<ClusterRecord>,
    pub mismatches: Vec<FieldMismatch>,
}

impl EquivalenceReport {
    /// True when both sides agree exactly.
    pub fn is_exact(&self) -> bool {
        self.oracle_only.is_empty() && self.stream_only.is_empty() && self.mismatches.is_empty()
    }

    /// True when the only disagreements are in the pixel-count column.
    pub fn is_exact_except_pixel_count(&self) -> bool {
        self.oracle_only.is_empty()
            && self.stream_only.is_empty()
            && self.mismatches.iter().all(|m| m.field == RecordField::PixelCount)
    }

    pub fn pixel_count_mismatches(&self) -> usize {
        self.mismatches
            .iter()
            .filter(|m| m.field == RecordField::PixelCount)
            .count()
    }
}

/// Pairs rows by root event and reports what differs.
pub fn equivalence_report(oracle: &[ClusterRecord], stream: &[ClusterRecord]) -> EquivalenceReport {
    let mut pending: BTreeMap<(Timestamp, u16, u16), Vec<ClusterRecord>> = BTreeMap::new();
    for r in stream {
        pending.entry(r.root_key()).or_default().push(*r);
    }
    let mut report = EquivalenceReport::default();
    for o in oracle {
        let candidate = pending.get_mut(&o.root_key()).and_then(|v| {
            if v.is_empty() {
                None
            } else {
                Some(v.remove(0))
            }
        });
        let Some(s) = candidate else {
            report.oracle_only.push(*o);
            continue;
        };
        for (field, a, b) in [
            (RecordField::EndT, o.end_t, s.end_t),
            (RecordField::EventCount, o.event_count, s.event_count),
            (RecordField::PixelCount, o.pixel_count, s.pixel_count),
        ] {
            if a != b {
                report.mismatches.push(FieldMismatch {
                    root_t: o.root_t,
                    root_x: o.root_x,
                    root_y: o.root_y,
                    field,
                    oracle: a,
                    stream: b,
                });
            }
        }
        report.matched.push((*o, s));
    }
    report.stream_only = pending.into_values().flatten().collect();
    report.stream_only.sort_by_key(ClusterRecord::root_key);
    report
}
