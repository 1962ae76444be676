//! Lane-changing vehicle groups and consecutive lane-change scenarios.
//!
//! A group is a subject vehicle (SV) plus its current-lane leader (CLV) and the
//! target-lane leader and follower (TLV, TFV) at the lane-change start. Two
//! inward events from the same source lane into the same target lane form a
//! consecutive scenario when the second starts no more than `max_interval`
//! seconds after the first and the second subject vehicle stays in the
//! source lane throughout.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{LaneChangeDirection, LaneChangeEvent};
use crate::exec::Exec;
use crate::ingest::{LaneId, Recording, VehicleId};

/// Slack on interval comparisons; event times are frame/rate quotients.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MineError {
    #[error("vehicle {0} not in recording")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {vehicle_id} has no sample at t = {t} s")]
    NoSample { vehicle_id: VehicleId, t: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("scenario csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleGroup {
    pub event: LaneChangeEvent,
    pub sv: VehicleId,
    pub clv: Option<VehicleId>,
    pub tlv: Option<VehicleId>,
    pub tfv: Option<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsecutiveScenario {
    pub v1: VehicleGroup,
    pub v2: VehicleGroup,
    /// `t_s2 - t_s1`.
    pub delta_t: f64,
}

impl ConsecutiveScenario {
    /// Re-checks the scenario invariants against `max_interval`.
    pub fn is_consistent(&self, max_interval: f64) -> bool {
        let (e1, e2) = (&self.v1.event, &self.v2.event);
        self.delta_t > 0.0
            && self.delta_t <= max_interval + TIME_EPS
            && e1.source_lane == e2.source_lane
            && e1.target_lane == e2.target_lane
            && self.v1.sv != self.v2.sv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningOptions {
    pub max_interval: f64,
    /// Also require SV2 to be longitudinally behind SV1 at `t_s1`.
    pub require_sv2_behind: bool,
}

impl Default for MiningOptions {
    fn default() -> Self {
        MiningOptions {
            max_interval: 9.0,
            require_sv2_behind: false,
        }
    }
}

/// Resolves the neighbor roles of an event's subject vehicle at `t_s`.
///
/// Surrounding-vehicle columns are used when present; a null column falls
/// back to a positional scan of the relevant lane.
pub fn build_group(recording: &Recording, event: &LaneChangeEvent) -> Result<VehicleGroup, MineError> {
    let sv = recording
        .track(event.vehicle_id)
        .ok_or(MineError::UnknownVehicle(event.vehicle_id))?;
    let frame = sv.sample_at(event.t_s).ok_or(MineError::NoSample {
        vehicle_id: event.vehicle_id,
        t: event.t_s,
    })?;
    let front = sv.front(frame);
    let rear = front - sv.length;

    // (id, front, rear) of every other vehicle in `lane` at t_s
    let in_lane = |lane: LaneId| -> Vec<(VehicleId, f64, f64)> {
        recording
            .tracks
            .values()
            .filter(|t| t.vehicle_id != sv.vehicle_id)
            .filter_map(|t| {
                let f = t.sample_at(event.t_s)?;
                (f.lane_id == lane).then(|| {
                    let fr = t.front(f);
                    (t.vehicle_id, fr, fr - t.length)
                })
            })
            .collect()
    };
    let closest = |cands: Vec<(VehicleId, f64, f64)>| -> Option<VehicleId> {
        cands
            .into_iter()
            .min_by(|a, b| {
                (a.1 - front)
                    .abs()
                    .total_cmp(&(b.1 - front).abs())
                    .then(a.0.cmp(&b.0))
            })
            .map(|c| c.0)
    };

    let n = &frame.neighbors;
    let (col_lead, col_follow) = match event.direction {
        LaneChangeDirection::Inward => (n.left_preceding, n.left_following),
        LaneChangeDirection::Outward => (n.right_preceding, n.right_following),
    };
    let clv = n.preceding.or_else(|| {
        closest(
            in_lane(event.source_lane)
                .into_iter()
                .filter(|c| c.1 > front)
                .collect(),
        )
    });
    let target = in_lane(event.target_lane);
    let tlv = col_lead.or_else(|| closest(target.iter().copied().filter(|c| c.2 >= front).collect()));
    let tfv = col_follow.or_else(|| closest(target.iter().copied().filter(|c| c.1 <= rear).collect()));
    Ok(VehicleGroup {
        event: event.clone(),
        sv: sv.vehicle_id,
        clv,
        tlv,
        tfv,
    })
}

fn stays_in_lane(recording: &Recording, vehicle: VehicleId, lane: LaneId, from: f64, to: f64) -> bool {
    let Some(track) = recording.track(vehicle) else {
        return false;
    };
    let half = 0.5 * track.dt();
    if track.start_time() > from + half {
        return false;
    }
    track
        .frames
        .iter()
        .filter(|f| f.time >= from - half && f.time <= to + half)
        .all(|f| f.lane_id == lane)
}

/// Mines every ordered consecutive pair, sorted by `(t_s1, t_s2)`.
pub fn mine_consecutive(
    recording: &Recording,
    events: &[LaneChangeEvent],
    options: &MiningOptions,
    exec: Exec,
) -> Result<Vec<ConsecutiveScenario>, MineError> {
    if !(options.max_interval > 0.0) {
        return Err(MineError::Parameter(format!(
            "max_interval must be positive, got {}",
            options.max_interval
        )));
    }
    let inward: Vec<&LaneChangeEvent> = events.iter().filter(|e| e.is_inward()).collect();

    let pairs: Vec<Vec<(usize, usize)>> = exec.map_range(inward.len(), |i| {
        let e1 = inward[i];
        inward
            .iter()
            .enumerate()
            .filter(|(_, e2)| {
                let dt = e2.t_s - e1.t_s;
                e2.vehicle_id != e1.vehicle_id
                    && e2.source_lane == e1.source_lane
                    && e2.target_lane == e1.target_lane
                    && dt > 0.0
                    && dt <= options.max_interval + TIME_EPS
            })
            .filter(|(_, e2)| {
                stays_in_lane(recording, e2.vehicle_id, e1.source_lane, e1.t_s, e2.t_s)
            })
            .filter(|(_, e2)| {
                if !options.require_sv2_behind {
                    return true;
                }
                let front_at = |id: VehicleId| {
                    recording
                        .track(id)
                        .and_then(|t| t.sample_at(e1.t_s).map(|f| t.front(f)))
                };
                matches!((front_at(e1.vehicle_id), front_at(e2.vehicle_id)), (Some(a), Some(b)) if b < a)
            })
            .map(|(j, _)| (i, j))
            .collect()
    });

    let mut groups: BTreeMap<usize, VehicleGroup> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, j) in pairs.into_iter().flatten() {
        for k in [i, j] {
            if let std::collections::btree_map::Entry::Vacant(slot) = groups.entry(k) {
                slot.insert(build_group(recording, inward[k])?);
            }
        }
        let scenario = ConsecutiveScenario {
            v1: groups[&i].clone(),
            v2: groups[&j].clone(),
            delta_t: inward[j].t_s - inward[i].t_s,
        };
        if scenario.is_consistent(options.max_interval) {
            out.push(scenario);
        }
    }
    out.sort_by(|a, b| {
        a.v1.event
            .t_s
            .total_cmp(&b.v1.event.t_s)
            .then(a.v2.event.t_s.total_cmp(&b.v2.event.t_s))
            .then(a.v1.sv.cmp(&b.v1.sv))
            .then(a.v2.sv.cmp(&b.v2.sv))
    });
    Ok(out)
}

/// One row of `scenarios.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub recording_id: u32,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub sv1: VehicleId,
    pub clv1: Option<VehicleId>,
    pub tlv1: Option<VehicleId>,
    pub tfv1: Option<VehicleId>,
    pub t_s1: f64,
    pub t_e1: f64,
    pub sv2: VehicleId,
    pub clv2: Option<VehicleId>,
    pub tlv2: Option<VehicleId>,
    pub tfv2: Option<VehicleId>,
    pub t_s2: f64,
    pub t_e2: f64,
    pub delta_t: f64,
}

impl ScenarioRow {
    pub fn new(recording_id: u32, s: &ConsecutiveScenario) -> Self {
        ScenarioRow {
            recording_id,
            source_lane: s.v1.event.source_lane,
            target_lane: s.v1.event.target_lane,
            sv1: s.v1.sv,
            clv1: s.v1.clv,
            tlv1: s.v1.tlv,
            tfv1: s.v1.tfv,
            t_s1: s.v1.event.t_s,
            t_e1: s.v1.event.t_e,
            sv2: s.v2.sv,
            clv2: s.v2.clv,
            tlv2: s.v2.tlv,
            tfv2: s.v2.tfv,
            t_s2: s.v2.event.t_s,
            t_e2: s.v2.event.t_e,
            delta_t: s.delta_t,
        }
    }

    pub fn scenario(&self) -> ConsecutiveScenario {
        let event = |sv, t_s: f64, t_e: f64| LaneChangeEvent {
            vehicle_id: sv,
            t_lc: t_s,
            t_s,
            t_e,
            duration: t_e - t_s,
            source_lane: self.source_lane,
            target_lane: self.target_lane,
            direction: LaneChangeDirection::Inward,
        };
        ConsecutiveScenario {
            v1: VehicleGroup {
                event: event(self.sv1, self.t_s1, self.t_e1),
                sv: self.sv1,
                clv: self.clv1,
                tlv: self.tlv1,
                tfv: self.tfv1,
            },
            v2: VehicleGroup {
                event: event(self.sv2, self.t_s2, self.t_e2),
                sv: self.sv2,
                clv: self.clv2,
                tlv: self.tlv2,
                tfv: self.tfv2,
            },
            delta_t: self.delta_t,
        }
    }
}

pub fn write_scenarios_csv<W: Write>(rows: &[ScenarioRow], out: W) -> Result<(), MineError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scenarios_csv<R: Read>(input: R) -> Result<Vec<ScenarioRow>, MineError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<ScenarioRow>, _>>()?;
    Ok(rows)
}
