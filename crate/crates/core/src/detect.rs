//! Lane-change event detection.
//!
//! A lane change is anchored at the last sample on the source lane (`t_lc`,
//! which is also the start `t_s`). For an inward change the end `t_e` is the
//! first later sample whose outer (trailing) vehicle edge lies strictly inside
//! the crossed marking; outward changes use the inner edge and the mirrored
//! inequality.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::{LaneId, LaneLayout, Recording, Track, VehicleId};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("vehicle {vehicle_id}: time {t} s outside the sampled span")]
    OutOfRange { vehicle_id: VehicleId, t: f64 },
    #[error("event csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneChangeDirection {
    Inward,
    Outward,
}

/// A sample index where the reported lane id changes on the next sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneSwitch {
    pub t_lc: f64,
    pub index: usize,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle_id: VehicleId,
    pub t_lc: f64,
    pub t_s: f64,
    pub t_e: f64,
    /// `t_e - t_s`, always positive.
    pub duration: f64,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub direction: LaneChangeDirection,
}

impl LaneChangeEvent {
    pub fn is_inward(&self) -> bool {
        self.direction == LaneChangeDirection::Inward
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub events: Vec<LaneChangeEvent>,
    /// Switches whose end crossing never appears before the track ends.
    pub discarded: usize,
    /// Switches skipping a lane, or involving an off-road lane id.
    pub rejected_sweeps: usize,
    /// `(vehicle, t_s)` of events that end after the vehicle's next switch.
    pub overlaps: Vec<(VehicleId, f64)>,
    pub diagnostics: Vec<String>,
}

impl Detection {
    pub fn inward(&self) -> impl Iterator<Item = &LaneChangeEvent> {
        self.events.iter().filter(|e| e.is_inward())
    }

    fn merge(&mut self, other: Detection) {
        self.events.extend(other.events);
        self.discarded += other.discarded;
        self.rejected_sweeps += other.rejected_sweeps;
        self.overlaps.extend(other.overlaps);
        self.diagnostics.extend(other.diagnostics);
    }
}

/// Every `t` with `ID(t) != ID(t + dt)`, reported at `t`.
pub fn lane_switch_instants(track: &Track) -> Vec<LaneSwitch> {
    track
        .frames
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].lane_id != w[1].lane_id)
        .map(|(i, w)| LaneSwitch {
            t_lc: w[0].time,
            index: i,
            source_lane: w[0].lane_id,
            target_lane: w[1].lane_id,
        })
        .collect()
}

/// Canonical lateral position of the vehicle's outer edge at `t`.
pub fn lateral_edge_position(track: &Track, layout: &LaneLayout, t: f64) -> Result<f64, DetectError> {
    let f = track.sample_at(t).ok_or(DetectError::OutOfRange {
        vehicle_id: track.vehicle_id,
        t,
    })?;
    Ok(track.outer_edge(layout, f))
}

pub fn detect_events(track: &Track, layout: &LaneLayout) -> Detection {
    let mut out = Detection::default();
    let switches = lane_switch_instants(track);
    for (n, sw) in switches.iter().enumerate() {
        let boundary = layout.shared_boundary(sw.source_lane, sw.target_lane);
        let (Some(line), Some(inward)) = (boundary, layout.is_inward(sw.source_lane, sw.target_lane))
        else {
            out.rejected_sweeps += 1;
            out.diagnostics.push(format!(
                "vehicle {}: switch {}->{} at {:.3} s does not cross a single marking",
                track.vehicle_id, sw.source_lane, sw.target_lane, sw.t_lc
            ));
            continue;
        };
        let end = track.frames[sw.index + 1..].iter().find(|f| {
            if inward {
                track.outer_edge(layout, f) < line
            } else {
                track.inner_edge(layout, f) > line
            }
        });
        let Some(end) = end else {
            out.discarded += 1;
            out.diagnostics.push(format!(
                "vehicle {}: switch at {:.3} s has no end crossing before the track ends",
                track.vehicle_id, sw.t_lc
            ));
            continue;
        };
        if let Some(next) = switches.get(n + 1) {
            if end.time > next.t_lc {
                out.overlaps.push((track.vehicle_id, sw.t_lc));
            }
        }
        out.events.push(LaneChangeEvent {
            vehicle_id: track.vehicle_id,
            t_lc: sw.t_lc,
            t_s: sw.t_lc,
            t_e: end.time,
            duration: end.time - sw.t_lc,
            source_lane: sw.source_lane,
            target_lane: sw.target_lane,
            direction: if inward {
                LaneChangeDirection::Inward
            } else {
                LaneChangeDirection::Outward
            },
        });
    }
    out
}

/// Runs detection over every track; results are in vehicle-id order.
pub fn detect_recording(recording: &Recording, exec: Exec) -> Detection {
    let tracks: Vec<&Track> = recording.tracks.values().collect();
    let per_track = exec.map(&tracks, |t| detect_events(t, &recording.layout));
    let mut out = Detection::default();
    for d in per_track {
        out.merge(d);
    }
    out
}

/// One row of `events.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub recording_id: u32,
    pub vehicle_id: VehicleId,
    pub t_lc: f64,
    pub t_s: f64,
    pub t_e: f64,
    #[serde(rename = "T_LC")]
    pub duration: f64,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub direction: LaneChangeDirection,
}

impl EventRow {
    pub fn new(recording_id: u32, e: &LaneChangeEvent) -> Self {
        EventRow {
            recording_id,
            vehicle_id: e.vehicle_id,
            t_lc: e.t_lc,
            t_s: e.t_s,
            t_e: e.t_e,
            duration: e.duration,
            source_lane: e.source_lane,
            target_lane: e.target_lane,
            direction: e.direction,
        }
    }

    pub fn event(&self) -> LaneChangeEvent {
        LaneChangeEvent {
            vehicle_id: self.vehicle_id,
            t_lc: self.t_lc,
            t_s: self.t_s,
            t_e: self.t_e,
            duration: self.duration,
            source_lane: self.source_lane,
            target_lane: self.target_lane,
            direction: self.direction,
        }
    }
}

pub fn write_events_csv<W: Write>(rows: &[EventRow], out: W) -> Result<(), DetectError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRow>, DetectError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<EventRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DrivingDirection, FrameSample, Neighbors, VehicleClass};

    fn track_with_lanes(lanes: &[LaneId]) -> Track {
        Track {
            vehicle_id: 1,
            class: VehicleClass::Car,
            length: 4.5,
            lateral_extent: 2.0,
            direction: DrivingDirection::Dir2,
            frame_rate: 25.0,
            frames: lanes
                .iter()
                .enumerate()
                .map(|(k, &lane)| FrameSample {
                    frame: k as u32,
                    time: k as f64 / 25.0,
                    x: 0.0,
                    y: 10.0,
                    vx: 30.0,
                    vy: 0.0,
                    ax: 0.0,
                    ay: 0.0,
                    lane_id: lane,
                    neighbors: Neighbors::default(),
                })
                .collect(),
        }
    }

    #[test]
    fn lane_keeping_has_no_switch() {
        assert!(lane_switch_instants(&track_with_lanes(&[3; 10])).is_empty());
    }

    #[test]
    fn switch_reported_at_last_source_frame() {
        let s = lane_switch_instants(&track_with_lanes(&[3, 3, 3, 2, 2]));
        assert_eq!(s.len(), 1);
        assert!((s[0].t_lc - 0.08).abs() < 1e-12);
        assert_eq!((s[0].source_lane, s[0].target_lane), (3, 2));
    }

    #[test]
    fn back_and_forth_gives_two_switches_in_order() {
        let s = lane_switch_instants(&track_with_lanes(&[3, 3, 2, 2, 2, 3, 3]));
        assert_eq!(s.len(), 2);
        assert!(s[0].t_lc < s[1].t_lc);
        assert_eq!((s[1].source_lane, s[1].target_lane), (2, 3));
    }

    #[test]
    fn edge_position_identity_and_mirror() {
        let layout = LaneLayout::with_road_width(vec![1.0, 5.0, 9.0], vec![11.0, 15.0, 19.0], 30.0)
            .unwrap();
        let mut t = track_with_lanes(&[6; 3]);
        assert!((lateral_edge_position(&t, &layout, 0.04).unwrap() - 12.0).abs() < 1e-12);
        t.direction = DrivingDirection::Dir1;
        assert!((lateral_edge_position(&t, &layout, 0.04).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(
            lateral_edge_position(&t, &layout, 5.0),
            Err(DetectError::OutOfRange { .. })
        ));
    }

    #[test]
    fn sweep_across_two_lanes_is_rejected() {
        let layout = LaneLayout::new(vec![], vec![10.0, 13.0, 16.0, 19.0]).unwrap();
        let d = detect_events(&track_with_lanes(&[4, 4, 2, 2]), &layout);
        assert!(d.events.is_empty());
        assert_eq!(d.rejected_sweeps, 1);
    }
}
