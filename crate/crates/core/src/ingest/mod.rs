//! Trajectory data model, HighD-format CSV ingestion and synthetic recordings.
//!
//! Raw samples keep the dataset's image-aligned conventions: `(x, y)` is the
//! upper-left corner of the bounding box, `x` grows to the right and `y`
//! grows downward. Analysis code never reads those fields directly; it goes
//! through the canonical accessors on [`Track`], which express positions in
//! the vehicle's own travel frame:
//!
//! * longitudinal position is the front bumper, increasing along travel,
//! * lateral position increases toward the outer (right-hand) road edge, so
//!   an inward lane change always decreases it.

mod highd;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use highd::{load_recording, write_recording, ColumnMap, LoadOptions, LoadReport, RecordingFiles};
pub use synthetic::{
    generate_synthetic, LaneChangeScript, LayoutScript, ScenarioScript, SpeedChangeScript,
    Synthetic, SyntheticSpec, TrafficPlan, TruthEvent, VehicleScript,
};

pub type VehicleId = u32;
pub type LaneId = i32;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: cannot parse `{value}` at row {row}, column `{column}`")]
    Parse {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("vehicle {vehicle_id}: {reason}")]
    Integrity { vehicle_id: VehicleId, reason: String },
    #[error("dangling surrounding-vehicle ids (vehicle -> referenced): {0:?}")]
    DanglingReferences(Vec<(VehicleId, VehicleId)>),
    #[error("invalid lane layout: {0}")]
    Layout(String),
    #[error("invalid recording: {0}")]
    Invalid(String),
    #[error("invalid synthetic script: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrivingDirection {
    /// Upper lanes in the dataset image, travelling toward decreasing `x`.
    Dir1,
    /// Lower lanes, travelling toward increasing `x`.
    Dir2,
}

impl DrivingDirection {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(DrivingDirection::Dir1),
            2 => Some(DrivingDirection::Dir2),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DrivingDirection::Dir1 => 1,
            DrivingDirection::Dir2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Some(VehicleClass::Car),
            "truck" | "bus" => Some(VehicleClass::Truck),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "Car",
            VehicleClass::Truck => "Truck",
        }
    }
}

/// One lane: its driving direction and its two raw `y` boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneBounds {
    pub direction: DrivingDirection,
    pub top: f64,
    pub bottom: f64,
}

/// Lane markings of both carriageways.
///
/// Lane ids follow the HighD numbering: with `u` upper markings the upper
/// lanes are `2..=u`, and the lower lanes continue at `u + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneLayout {
    upper: Vec<f64>,
    lower: Vec<f64>,
    road_width: f64,
    lanes: BTreeMap<LaneId, LaneBounds>,
}

impl LaneLayout {
    /// Builds a layout whose mirror axis is the outermost marking.
    pub fn new(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self, IngestError> {
        let road_width = upper
            .iter()
            .chain(lower.iter())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Self::with_road_width(upper, lower, road_width)
    }

    /// Builds a layout with an explicit mirror axis for the upper carriageway.
    pub fn with_road_width(
        upper: Vec<f64>,
        lower: Vec<f64>,
        road_width: f64,
    ) -> Result<Self, IngestError> {
        if upper.len() < 2 && lower.len() < 2 {
            return Err(IngestError::Layout(
                "at least one direction needs two markings".into(),
            ));
        }
        for (name, group) in [("upper", &upper), ("lower", &lower)] {
            if group.iter().any(|v| !v.is_finite()) {
                return Err(IngestError::Layout(format!("{name} markings not finite")));
            }
            if group.windows(2).any(|w| w[1] <= w[0]) {
                return Err(IngestError::Layout(format!(
                    "{name} markings not strictly increasing: {group:?}"
                )));
            }
        }
        if !road_width.is_finite() {
            return Err(IngestError::Layout("road width not finite".into()));
        }
        let mut lanes = BTreeMap::new();
        for (i, w) in upper.windows(2).enumerate() {
            lanes.insert(
                2 + i as LaneId,
                LaneBounds {
                    direction: DrivingDirection::Dir1,
                    top: w[0],
                    bottom: w[1],
                },
            );
        }
        let lower_base = upper.len() as LaneId + 2;
        for (i, w) in lower.windows(2).enumerate() {
            lanes.insert(
                lower_base + i as LaneId,
                LaneBounds {
                    direction: DrivingDirection::Dir2,
                    top: w[0],
                    bottom: w[1],
                },
            );
        }
        Ok(LaneLayout {
            upper,
            lower,
            road_width,
            lanes,
        })
    }

    pub fn upper_markings(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_markings(&self) -> &[f64] {
        &self.lower
    }

    pub fn road_width(&self) -> f64 {
        self.road_width
    }

    pub fn lanes(&self) -> &BTreeMap<LaneId, LaneBounds> {
        &self.lanes
    }

    pub fn lane(&self, id: LaneId) -> Option<&LaneBounds> {
        self.lanes.get(&id)
    }

    /// Maps a raw lateral coordinate into the canonical frame of `direction`.
    pub fn canonical_lateral(&self, direction: DrivingDirection, raw_y: f64) -> f64 {
        match direction {
            DrivingDirection::Dir2 => raw_y,
            DrivingDirection::Dir1 => self.road_width - raw_y,
        }
    }

    /// Canonical `(inner, outer)` boundaries of a lane.
    pub fn canonical_bounds(&self, id: LaneId) -> Option<(f64, f64)> {
        let b = self.lanes.get(&id)?;
        let (a, c) = (
            self.canonical_lateral(b.direction, b.top),
            self.canonical_lateral(b.direction, b.bottom),
        );
        Some((a.min(c), a.max(c)))
    }

    pub fn canonical_center(&self, id: LaneId) -> Option<f64> {
        self.canonical_bounds(id).map(|(a, b)| 0.5 * (a + b))
    }

    /// Canonical position of the marking shared by two adjacent lanes.
    pub fn shared_boundary(&self, a: LaneId, b: LaneId) -> Option<f64> {
        let la = self.lanes.get(&a)?;
        let lb = self.lanes.get(&b)?;
        if la.direction != lb.direction || a == b {
            return None;
        }
        let raw = if la.bottom == lb.top {
            la.bottom
        } else if la.top == lb.bottom {
            la.top
        } else {
            return None;
        };
        Some(self.canonical_lateral(la.direction, raw))
    }

    /// True when moving from `from` to `to` is an inward (toward the median) change.
    pub fn is_inward(&self, from: LaneId, to: LaneId) -> Option<bool> {
        Some(self.canonical_center(to)? < self.canonical_center(from)?)
    }

    /// Adjacent lane on the inward (`inward = true`) or outward side.
    pub fn neighbor_lane(&self, id: LaneId, inward: bool) -> Option<LaneId> {
        let (inner, outer) = self.canonical_bounds(id)?;
        let dir = self.lanes.get(&id)?.direction;
        let edge = if inward { inner } else { outer };
        self.lanes.iter().find_map(|(&other, b)| {
            if other == id || b.direction != dir {
                return None;
            }
            let (oi, oo) = self.canonical_bounds(other)?;
            let touches = if inward { oo == edge } else { oi == edge };
            touches.then_some(other)
        })
    }

    /// Lane of `direction` containing the canonical lateral position.
    pub fn lane_at(&self, direction: DrivingDirection, canonical: f64) -> Option<LaneId> {
        self.lanes.iter().find_map(|(&id, b)| {
            if b.direction != direction {
                return None;
            }
            let (inner, outer) = self.canonical_bounds(id)?;
            (canonical >= inner && canonical < outer).then_some(id)
        })
    }
}

/// Surrounding-vehicle ids reported by the dataset for one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbors {
    pub preceding: Option<VehicleId>,
    pub following: Option<VehicleId>,
    pub left_preceding: Option<VehicleId>,
    pub left_alongside: Option<VehicleId>,
    pub left_following: Option<VehicleId>,
    pub right_preceding: Option<VehicleId>,
    pub right_alongside: Option<VehicleId>,
    pub right_following: Option<VehicleId>,
}

impl Neighbors {
    pub fn ids(&self) -> [Option<VehicleId>; 8] {
        [
            self.preceding,
            self.following,
            self.left_preceding,
            self.left_alongside,
            self.left_following,
            self.right_preceding,
            self.right_alongside,
            self.right_following,
        ]
    }

    pub fn ids_mut(&mut self) -> [&mut Option<VehicleId>; 8] {
        [
            &mut self.preceding,
            &mut self.following,
            &mut self.left_preceding,
            &mut self.left_alongside,
            &mut self.left_following,
            &mut self.right_preceding,
            &mut self.right_alongside,
            &mut self.right_following,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub frame: u32,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub lane_id: LaneId,
    pub neighbors: Neighbors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub vehicle_id: VehicleId,
    pub class: VehicleClass,
    /// Longitudinal extent (m).
    pub length: f64,
    /// Lateral extent across lanes (m).
    pub lateral_extent: f64,
    pub direction: DrivingDirection,
    pub frame_rate: f64,
    pub frames: Vec<FrameSample>,
}

impl Track {
    /// Checks the per-track invariants: positive extents and a contiguous,
    /// strictly increasing frame sequence.
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |reason: String| IngestError::Integrity {
            vehicle_id: self.vehicle_id,
            reason,
        };
        if !(self.length > 0.0) || !(self.lateral_extent > 0.0) {
            return Err(bad(format!(
                "non-positive extent (length {}, lateral {})",
                self.length, self.lateral_extent
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(bad("frame rate must be positive".into()));
        }
        if self.frames.is_empty() {
            return Err(bad("track has no frames".into()));
        }
        for w in self.frames.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(bad(format!(
                    "frame index not increasing ({} then {})",
                    w[0].frame, w[1].frame
                )));
            }
            if w[1].frame != w[0].frame + 1 {
                return Err(bad(format!(
                    "frame gap between {} and {}",
                    w[0].frame, w[1].frame
                )));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn start_time(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.time)
    }

    pub fn end_time(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.time)
    }

    /// Index of the sample nearest to `t`, if `t` lies within the sampled span
    /// (half a frame of slack on either side).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let first = self.frames.first()?;
        let k = ((t - first.time) * self.frame_rate).round();
        if k < 0.0 || k as usize >= self.frames.len() {
            return None;
        }
        Some(k as usize)
    }

    pub fn sample_at(&self, t: f64) -> Option<&FrameSample> {
        self.index_at(t).map(|i| &self.frames[i])
    }

    /// Front-bumper position along the direction of travel.
    pub fn front(&self, f: &FrameSample) -> f64 {
        match self.direction {
            DrivingDirection::Dir2 => f.x + self.length,
            DrivingDirection::Dir1 => -f.x,
        }
    }

    /// Speed along the direction of travel.
    pub fn speed(&self, f: &FrameSample) -> f64 {
        match self.direction {
            DrivingDirection::Dir2 => f.vx,
            DrivingDirection::Dir1 => -f.vx,
        }
    }

    /// Canonical lateral position of the outer (right-hand) vehicle edge.
    pub fn outer_edge(&self, layout: &LaneLayout, f: &FrameSample) -> f64 {
        match self.direction {
            DrivingDirection::Dir2 => f.y + self.lateral_extent,
            DrivingDirection::Dir1 => layout.canonical_lateral(self.direction, f.y),
        }
    }

    /// Canonical lateral position of the inner (left-hand) vehicle edge.
    pub fn inner_edge(&self, layout: &LaneLayout, f: &FrameSample) -> f64 {
        self.outer_edge(layout, f) - self.lateral_extent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: u32,
    pub frame_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub layout: LaneLayout,
    pub tracks: BTreeMap<VehicleId, Track>,
}

impl Recording {
    pub fn track(&self, id: VehicleId) -> Option<&Track> {
        self.tracks.get(&id)
    }

    /// Surrounding-vehicle references that do not resolve to a track.
    pub fn dangling_references(&self) -> Vec<(VehicleId, VehicleId)> {
        let mut out = Vec::new();
        for t in self.tracks.values() {
            for f in &t.frames {
                for id in f.neighbors.ids().into_iter().flatten() {
                    if !self.tracks.contains_key(&id) {
                        out.push((t.vehicle_id, id));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Replaces dangling surrounding-vehicle ids by null and returns what was removed.
    pub fn null_dangling_references(&mut self) -> Vec<(VehicleId, VehicleId)> {
        let dangling = self.dangling_references();
        if dangling.is_empty() {
            return dangling;
        }
        let known: std::collections::BTreeSet<VehicleId> = self.tracks.keys().copied().collect();
        for t in self.tracks.values_mut() {
            for f in &mut t.frames {
                for slot in f.neighbors.ids_mut() {
                    if matches!(slot, Some(id) if !known.contains(id)) {
                        *slot = None;
                    }
                }
            }
        }
        dangling
    }

    /// Full validation of the recording invariants.
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.frame_rate > 0.0) {
            return Err(IngestError::Invalid("frame rate must be positive".into()));
        }
        let max_frame = self.duration * self.frame_rate + 1e-6;
        for (id, t) in &self.tracks {
            if *id != t.vehicle_id {
                return Err(IngestError::Invalid(format!(
                    "track keyed {id} carries vehicle id {}",
                    t.vehicle_id
                )));
            }
            if t.frame_rate != self.frame_rate {
                return Err(IngestError::Integrity {
                    vehicle_id: *id,
                    reason: "frame rate differs from recording".into(),
                });
            }
            t.validate()?;
            if let Some(last) = t.frames.last() {
                if f64::from(last.frame) > max_frame {
                    return Err(IngestError::Integrity {
                        vehicle_id: *id,
                        reason: format!(
                            "frame {} beyond recording duration {} s",
                            last.frame, self.duration
                        ),
                    });
                }
            }
            for f in &t.frames {
                if f.lane_id > 0 && self.layout.lane(f.lane_id).is_none() {
                    return Err(IngestError::Integrity {
                        vehicle_id: *id,
                        reason: format!("lane id {} not in layout", f.lane_id),
                    });
                }
            }
        }
        let dangling = self.dangling_references();
        if !dangling.is_empty() {
            return Err(IngestError::DanglingReferences(dangling));
        }
        Ok(())
    }
}
