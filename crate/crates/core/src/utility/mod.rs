//! Before/after utility measures, comparison matrices and TTC risk.
//!
//! Each lane change gets four abutting windows before its start (`T_1s` is
//! the one touching `t_s`) and four after its end (`T_1e` touches `t_e`), all
//! half the lane-change duration wide. A utility record pairs before window
//! `i` with after window `j` for both subject vehicles of a scenario.

mod risk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::LaneChangeEvent;
use crate::ingest::{Recording, Track, VehicleId};
use crate::mine::ConsecutiveScenario;

pub use risk::{
    group_risk, pair_risk, risk_table, scenario_risk, ttc, RiskRow, RiskStatus, RiskTable,
};

/// Frame times are quotients; keep boundary samples on the intended side.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("lane-change duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("vehicle {0} not in recording")]
    UnknownVehicle(VehicleId),
    #[error("overlapping vehicles: gap {0} m is negative")]
    NegativeGap(f64),
    #[error("period index {0} outside 1..=4")]
    PeriodIndex(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start - EDGE_EPS && t < self.end - EDGE_EPS
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of sampling-grid instants `k / rate` inside the interval.
    pub fn grid_points(&self, rate: f64) -> usize {
        let first = (self.start * rate - EDGE_EPS * rate).ceil();
        let past = (self.end * rate - EDGE_EPS * rate).ceil();
        (past - first).max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodWindows {
    /// `before[k - 1]` is `T_ks`.
    pub before: [Interval; 4],
    /// `after[k - 1]` is `T_ke`.
    pub after: [Interval; 4],
    pub width: f64,
}

impl PeriodWindows {
    pub fn before(&self, i: usize) -> Result<Interval, UtilityError> {
        check_index(i).map(|k| self.before[k])
    }

    pub fn after(&self, j: usize) -> Result<Interval, UtilityError> {
        check_index(j).map(|k| self.after[k])
    }
}

fn check_index(i: usize) -> Result<usize, UtilityError> {
    if (1..=4).contains(&i) {
        Ok(i - 1)
    } else {
        Err(UtilityError::PeriodIndex(i))
    }
}

pub fn period_windows(event: &LaneChangeEvent) -> Result<PeriodWindows, UtilityError> {
    let t_lc = event.t_e - event.t_s;
    if !(t_lc > 0.0) {
        return Err(UtilityError::NonPositiveDuration(t_lc));
    }
    let width = 0.5 * t_lc;
    let before = std::array::from_fn(|k| Interval {
        start: event.t_s - (k + 1) as f64 * width,
        end: event.t_s - k as f64 * width,
    });
    let after = std::array::from_fn(|k| Interval {
        start: event.t_e + k as f64 * width,
        end: event.t_e + (k + 1) as f64 * width,
    });
    Ok(PeriodWindows { before, after, width })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Speed along the direction of travel.
    Speed,
    /// Front-bumper position along the direction of travel.
    Position,
}

/// Mean of a channel over the samples inside `interval`, or `None` when fewer
/// than `min_coverage` of the expected samples exist.
pub fn window_mean(track: &Track, interval: Interval, channel: Channel, min_coverage: f64) -> Option<f64> {
    let (sum, n) = track
        .frames
        .iter()
        .filter(|f| interval.contains(f.time))
        .map(|f| match channel {
            Channel::Speed => track.speed(f),
            Channel::Position => track.front(f),
        })
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    covered(n, interval, track.frame_rate, min_coverage).then(|| sum / n as f64)
}

/// Mean bumper-to-bumper gap `leader front - follower front - leader length`
/// over samples where both vehicles are present.
pub fn window_gap_mean(leader: &Track, follower: &Track, interval: Interval, min_coverage: f64) -> Option<f64> {
    let first_leader = leader.frames.first()?.frame;
    let (sum, n) = follower
        .frames
        .iter()
        .filter(|f| interval.contains(f.time))
        .filter_map(|f| {
            let idx = f.frame.checked_sub(first_leader)? as usize;
            let l = leader.frames.get(idx)?;
            Some(leader.front(l) - follower.front(f) - leader.length)
        })
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    covered(n, interval, follower.frame_rate, min_coverage).then(|| sum / n as f64)
}

fn covered(n: usize, interval: Interval, rate: f64, min_coverage: f64) -> bool {
    let expected = interval.grid_points(rate).max(1);
    n > 0 && n as f64 >= min_coverage * expected as f64 - EDGE_EPS
}

/// How SV1's windows are placed when pairing with SV2's period indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sv1Anchor {
    /// SV1's windows come from SV1's own lane change.
    #[default]
    Own,
    /// SV1 is measured over SV2's windows.
    Sv2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityOptions {
    pub min_coverage: f64,
    pub sv1_anchor: Sv1Anchor,
}

impl Default for UtilityOptions {
    fn default() -> Self {
        UtilityOptions {
            min_coverage: 0.8,
            sv1_anchor: Sv1Anchor::Own,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Clearance to the target-lane leader after the change, SV2 minus SV1.
    DyTlv,
    /// Clearance to the target-lane follower after the change, SV2 minus SV1.
    DyTfv,
    DvSv1,
    DvSv2,
    /// `dv_sv2 - dv_sv1`.
    DvDiff,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::DyTlv,
        Measure::DyTfv,
        Measure::DvSv1,
        Measure::DvSv2,
        Measure::DvDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::DyTlv => "dy_tlv",
            Measure::DyTfv => "dy_tfv",
            Measure::DvSv1 => "dv_sv1",
            Measure::DvSv2 => "dv_sv2",
            Measure::DvDiff => "dv_diff",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Utility measures of one scenario for period pair `(before, after)`.
/// `None` marks a measure that could not be computed from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub scenario: usize,
    pub before: usize,
    pub after: usize,
    pub dy_tlv: Option<f64>,
    pub dy_tfv: Option<f64>,
    pub dv_sv1: Option<f64>,
    pub dv_sv2: Option<f64>,
    pub dv_diff: Option<f64>,
}

impl UtilityRecord {
    pub fn get(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::DyTlv => self.dy_tlv,
            Measure::DyTfv => self.dy_tfv,
            Measure::DvSv1 => self.dv_sv1,
            Measure::DvSv2 => self.dv_sv2,
            Measure::DvDiff => self.dv_diff,
        }
    }
}

/// Windows and tracks needed to measure one scenario.
struct Measured<'a> {
    sv1: &'a Track,
    sv2: &'a Track,
    w1: PeriodWindows,
    w2: PeriodWindows,
}

impl<'a> Measured<'a> {
    fn new(
        recording: &'a Recording,
        scenario: &ConsecutiveScenario,
        options: &UtilityOptions,
    ) -> Result<Self, UtilityError> {
        let track = |id| recording.track(id).ok_or(UtilityError::UnknownVehicle(id));
        let w2 = period_windows(&scenario.v2.event)?;
        let w1 = match options.sv1_anchor {
            Sv1Anchor::Own => period_windows(&scenario.v1.event)?,
            Sv1Anchor::Sv2 => w2,
        };
        Ok(Measured {
            sv1: track(scenario.v1.sv)?,
            sv2: track(scenario.v2.sv)?,
            w1,
            w2,
        })
    }
}

fn gap(
    recording: &Recording,
    leader: Option<VehicleId>,
    follower: Option<VehicleId>,
    interval: Interval,
    min_coverage: f64,
) -> Option<f64> {
    let l = recording.track(leader?)?;
    let f = recording.track(follower?)?;
    window_gap_mean(l, f, interval, min_coverage)
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

pub fn utility_record(
    recording: &Recording,
    scenario: &ConsecutiveScenario,
    scenario_index: usize,
    before: usize,
    after: usize,
    options: &UtilityOptions,
) -> Result<UtilityRecord, UtilityError> {
    let m = Measured::new(recording, scenario, options)?;
    let cov = options.min_coverage;
    let speed = |t: &Track, iv: Interval| window_mean(t, iv, Channel::Speed, cov);

    let dv_sv2 = diff(speed(m.sv2, m.w2.after(after)?), speed(m.sv2, m.w2.before(before)?));
    let dv_sv1 = diff(speed(m.sv1, m.w1.after(after)?), speed(m.sv1, m.w1.before(before)?));
    let (a1, a2) = (m.w1.after(after)?, m.w2.after(after)?);
    let (v1, v2) = (&scenario.v1, &scenario.v2);
    let dy_tlv = diff(
        gap(recording, v2.tlv, Some(v2.sv), a2, cov),
        gap(recording, v1.tlv, Some(v1.sv), a1, cov),
    );
    let dy_tfv = diff(
        gap(recording, Some(v2.sv), v2.tfv, a2, cov),
        gap(recording, Some(v1.sv), v1.tfv, a1, cov),
    );
    Ok(UtilityRecord {
        scenario: scenario_index,
        before,
        after,
        dy_tlv,
        dy_tfv,
        dv_sv1,
        dv_sv2,
        dv_diff: diff(dv_sv2, dv_sv1),
    })
}

/// All sixteen period pairs of one scenario, `(1,1), (1,2), ..., (4,4)`.
pub fn utility_records(
    recording: &Recording,
    scenario: &ConsecutiveScenario,
    scenario_index: usize,
    options: &UtilityOptions,
) -> Result<Vec<UtilityRecord>, UtilityError> {
    let mut out = Vec::with_capacity(16);
    for i in 1..=4 {
        for j in 1..=4 {
            out.push(utility_record(recording, scenario, scenario_index, i, j, options)?);
        }
    }
    Ok(out)
}

/// The explanatory variables used by the choice and classification models.
pub const MODEL_FEATURES: [&str; 8] = [
    "dy_after_tlv1_sv1",
    "dy_after_sv1_tfv1",
    "dy_before_clv1_sv1",
    "dy_before_clv2_sv2",
    "v_before_sv1",
    "v_before_sv2",
    "v_after_sv1",
    "delta_t",
];

/// Variables computed for reference but withheld from the models because
/// they nearly determine the response.
pub const WITHHELD_FEATURES: [&str; 3] = ["v_after_sv2", "dy_after_tlv2_sv2", "dy_after_sv2_tfv2"];

/// Response and explanatory variables of one scenario for one period pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub recording_id: u32,
    pub scenario: usize,
    pub before: usize,
    pub after: usize,
    /// 1 when SV2's speed gain is positive.
    pub y: Option<u8>,
    pub dy_after_tlv1_sv1: Option<f64>,
    pub dy_after_sv1_tfv1: Option<f64>,
    pub dy_before_clv1_sv1: Option<f64>,
    pub dy_before_clv2_sv2: Option<f64>,
    pub v_before_sv1: Option<f64>,
    pub v_before_sv2: Option<f64>,
    pub v_after_sv1: Option<f64>,
    pub delta_t: Option<f64>,
    pub v_after_sv2: Option<f64>,
    pub dy_after_tlv2_sv2: Option<f64>,
    pub dy_after_sv2_tfv2: Option<f64>,
}

impl FeatureRow {
    pub fn model_values(&self) -> [Option<f64>; 8] {
        [
            self.dy_after_tlv1_sv1,
            self.dy_after_sv1_tfv1,
            self.dy_before_clv1_sv1,
            self.dy_before_clv2_sv2,
            self.v_before_sv1,
            self.v_before_sv2,
            self.v_after_sv1,
            self.delta_t,
        ]
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "v_after_sv2" => self.v_after_sv2,
            "dy_after_tlv2_sv2" => self.dy_after_tlv2_sv2,
            "dy_after_sv2_tfv2" => self.dy_after_sv2_tfv2,
            _ => {
                let k = MODEL_FEATURES.iter().position(|f| *f == name)?;
                self.model_values()[k]
            }
        }
    }

    /// Response and model features when every one of them is available.
    pub fn complete(&self) -> Option<(u8, [f64; 8])> {
        let y = self.y?;
        let vals = self.model_values();
        if vals.iter().any(Option::is_none) {
            return None;
        }
        Some((y, vals.map(|v| v.unwrap_or_default())))
    }
}

pub fn feature_row(
    recording: &Recording,
    scenario: &ConsecutiveScenario,
    scenario_index: usize,
    before: usize,
    after: usize,
    options: &UtilityOptions,
) -> Result<FeatureRow, UtilityError> {
    let m = Measured::new(recording, scenario, options)?;
    let cov = options.min_coverage;
    let speed = |t: &Track, iv: Interval| window_mean(t, iv, Channel::Speed, cov);
    let (v1, v2) = (&scenario.v1, &scenario.v2);
    let (b1, a1) = (m.w1.before(before)?, m.w1.after(after)?);
    let (b2, a2) = (m.w2.before(before)?, m.w2.after(after)?);
    let v_after_sv2 = speed(m.sv2, a2);
    let v_before_sv2 = speed(m.sv2, b2);
    let y = diff(v_after_sv2, v_before_sv2).map(|d| u8::from(d > 0.0));
    Ok(FeatureRow {
        recording_id: recording.id,
        scenario: scenario_index,
        before,
        after,
        y,
        dy_after_tlv1_sv1: gap(recording, v1.tlv, Some(v1.sv), a1, cov),
        dy_after_sv1_tfv1: gap(recording, Some(v1.sv), v1.tfv, a1, cov),
        dy_before_clv1_sv1: gap(recording, v1.clv, Some(v1.sv), b1, cov),
        dy_before_clv2_sv2: gap(recording, v2.clv, Some(v2.sv), b2, cov),
        v_before_sv1: speed(m.sv1, b1),
        v_before_sv2,
        v_after_sv1: speed(m.sv1, a1),
        delta_t: Some(scenario.delta_t),
        v_after_sv2,
        dy_after_tlv2_sv2: gap(recording, v2.tlv, Some(v2.sv), a2, cov),
        dy_after_sv2_tfv2: gap(recording, Some(v2.sv), v2.tfv, a2, cov),
    })
}

/// Aggregate of one `(T_is, T_je)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub proportion_positive: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub measure: Measure,
    /// `cells[i - 1][j - 1]` aggregates before window `i`, after window `j`.
    pub cells: [[Cell; 4]; 4],
}

impl ComparisonMatrix {
    pub fn cell_name(i: usize, j: usize) -> String {
        format!("T{i}s_vs_T{j}e")
    }

    /// Cells keyed `T{i}s_vs_T{j}e`.
    pub fn named_cells(&self) -> Vec<(String, Cell)> {
        let mut out = Vec::with_capacity(16);
        for i in 1..=4 {
            for j in 1..=4 {
                out.push((Self::cell_name(i, j), self.cells[i - 1][j - 1]));
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cells: serde_json::Map<String, serde_json::Value> = self
            .named_cells()
            .into_iter()
            .map(|(k, c)| (k, serde_json::to_value(c).unwrap_or_default()))
            .collect();
        serde_json::json!({ "measure": self.measure.name(), "cells": cells })
    }
}

/// Count, positive share and mean of `measure` per period pair. Records
/// missing the measure are left out.
pub fn comparison_matrix(records: &[UtilityRecord], measure: Measure) -> ComparisonMatrix {
    // (n, positives, sum)
    let mut acc = [[(0usize, 0usize, 0.0f64); 4]; 4];
    for r in records {
        let (Some(v), true, true) = (
            r.get(measure),
            (1..=4).contains(&r.before),
            (1..=4).contains(&r.after),
        ) else {
            continue;
        };
        let a = &mut acc[r.before - 1][r.after - 1];
        a.0 += 1;
        a.1 += usize::from(v > 0.0);
        a.2 += v;
    }
    let cells = acc.map(|row| {
        row.map(|(n, pos, sum)| Cell {
            n,
            proportion_positive: (n > 0).then(|| pos as f64 / n as f64),
            mean: (n > 0).then(|| sum / n as f64),
        })
    });
    ComparisonMatrix { measure, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::LaneChangeDirection;
    use crate::ingest::{DrivingDirection, FrameSample, Neighbors, VehicleClass};

    fn event(t_s: f64, t_e: f64) -> LaneChangeEvent {
        LaneChangeEvent {
            vehicle_id: 1,
            t_lc: t_s,
            t_s,
            t_e,
            duration: t_e - t_s,
            source_lane: 3,
            target_lane: 2,
            direction: LaneChangeDirection::Inward,
        }
    }

    fn track(speeds: &[f64], rate: f64, first_frame: u32) -> Track {
        Track {
            vehicle_id: 1,
            class: VehicleClass::Car,
            length: 4.0,
            lateral_extent: 2.0,
            direction: DrivingDirection::Dir2,
            frame_rate: rate,
            frames: speeds
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let frame = first_frame + k as u32;
                    FrameSample {
                        frame,
                        time: f64::from(frame) / rate,
                        x: 0.0,
                        y: 0.0,
                        vx: v,
                        vy: 0.0,
                        ax: 0.0,
                        ay: 0.0,
                        lane_id: 2,
                        neighbors: Neighbors::default(),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn windows_for_ts10_te14() {
        let w = period_windows(&event(10.0, 14.0)).unwrap();
        assert_eq!(w.width, 2.0);
        assert_eq!(w.before[0], Interval { start: 8.0, end: 10.0 });
        assert_eq!(w.before[3], Interval { start: 2.0, end: 4.0 });
        assert_eq!(w.after[0], Interval { start: 14.0, end: 16.0 });
        assert_eq!(w.after[3], Interval { start: 20.0, end: 22.0 });
        let covered: f64 = w.before.iter().chain(&w.after).map(Interval::len).sum();
        assert_eq!(covered, 8.0 * w.width);
    }

    #[test]
    fn windows_reject_non_positive_duration() {
        assert!(period_windows(&event(5.0, 5.0)).is_err());
    }

    #[test]
    fn early_window_is_incomplete_at_track_start() {
        let w = period_windows(&event(0.0, 1.0)).unwrap();
        assert_eq!(w.before[3], Interval { start: -2.0, end: -1.5 });
        let t = track(&[30.0; 50], 25.0, 0);
        assert_eq!(window_mean(&t, w.before[3], Channel::Speed, 0.8), None);
    }

    #[test]
    fn window_mean_examples() {
        let t = track(&[30.0; 100], 25.0, 0);
        let iv = Interval { start: 1.0, end: 2.0 };
        assert_eq!(window_mean(&t, iv, Channel::Speed, 0.8), Some(30.0));
        // three samples at 10 Hz covering [0, 0.3)
        let t = track(&[20.0, 22.0, 24.0, 99.0], 10.0, 0);
        let iv = Interval { start: 0.0, end: 0.3 };
        assert!((window_mean(&t, iv, Channel::Speed, 0.8).unwrap() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_threshold() {
        // 10 grid points expected in [0, 1) at 10 Hz, track starts at frame 3
        let t = track(&[1.0; 20], 10.0, 3);
        let iv = Interval { start: 0.0, end: 1.0 };
        assert_eq!(iv.grid_points(10.0), 10);
        assert_eq!(window_mean(&t, iv, Channel::Speed, 0.8), None);
        assert_eq!(window_mean(&t, iv, Channel::Speed, 0.7), Some(1.0));
    }

    #[test]
    fn comparison_cell_example() {
        let mk = |v: f64| UtilityRecord {
            scenario: 0,
            before: 1,
            after: 1,
            dy_tlv: None,
            dy_tfv: None,
            dv_sv1: None,
            dv_sv2: Some(v),
            dv_diff: None,
        };
        let m = comparison_matrix(&[mk(1.0), mk(-1.0), mk(2.0)], Measure::DvSv2);
        let c = m.cells[0][0];
        assert_eq!(c.n, 3);
        assert!((c.proportion_positive.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.mean.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.cells[3][3], Cell { n: 0, proportion_positive: None, mean: None });
        let names: Vec<String> = m.named_cells().into_iter().map(|c| c.0).collect();
        assert_eq!(names.len(), 16);
        assert_eq!(names[0], "T1s_vs_T1e");
        assert_eq!(names[15], "T4s_vs_T4e");
        let m = comparison_matrix(&[mk(1.0), mk(3.0)], Measure::DvSv2);
        assert_eq!(m.cells[0][0].proportion_positive, Some(1.0));
    }
}
