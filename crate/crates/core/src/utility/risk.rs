//! Time-to-collision risk flags.

use serde::{Deserialize, Serialize};

use super::UtilityError;
use crate::ingest::{FrameSample, Recording, Track, VehicleId};
use crate::mine::{ConsecutiveScenario, VehicleGroup};

/// Time to collision of a follower closing on its leader. Positions are
/// front-bumper coordinates in the direction of travel.
pub fn ttc(x_lv: f64, x_fv: f64, leader_length: f64, v_fv: f64, v_lv: f64) -> Result<f64, UtilityError> {
    let gap = x_lv - x_fv - leader_length;
    if gap < 0.0 {
        return Err(UtilityError::NegativeGap(gap));
    }
    if v_fv > v_lv {
        Ok(gap / (v_fv - v_lv))
    } else {
        Ok(f64::INFINITY)
    }
}

/// 1 when `0 < ttc < threshold`.
pub fn pair_risk(ttc: f64, threshold: f64) -> u8 {
    u8::from(ttc > 0.0 && ttc < threshold)
}

pub fn group_risk(clv: u8, tlv: u8, tfv: u8) -> u8 {
    u8::from(clv != 0 || tlv != 0 || tfv != 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RiskStatus {
    pub clv: u8,
    pub tlv: u8,
    pub tfv: u8,
    pub group: u8,
}

fn at(t: &Track, frame: u32) -> Option<&FrameSample> {
    let first = t.frames.first()?.frame;
    t.frames.get(frame.checked_sub(first)? as usize)
}

/// Minimum TTC between `leader` and `follower` over frames of `sv` inside
/// `[t_s, t_e]`. Frames where the vehicles overlap are skipped.
fn min_ttc(sv: &Track, leader: &Track, follower: &Track, t_s: f64, t_e: f64) -> f64 {
    sv.frames
        .iter()
        .filter(|f| f.time >= t_s - 1e-9 && f.time <= t_e + 1e-9)
        .filter_map(|f| {
            let l = at(leader, f.frame)?;
            let fv = at(follower, f.frame)?;
            ttc(
                leader.front(l),
                follower.front(fv),
                leader.length,
                follower.speed(fv),
                leader.speed(l),
            )
            .ok()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Risk flags of one vehicle group during its lane change.
pub fn scenario_risk(recording: &Recording, group: &VehicleGroup, threshold: f64) -> RiskStatus {
    let Some(sv) = recording.track(group.sv) else {
        return RiskStatus::default();
    };
    let (t_s, t_e) = (group.event.t_s, group.event.t_e);
    let flag = |other: Option<VehicleId>, sv_leads: bool| {
        let Some(o) = other.and_then(|id| recording.track(id)) else {
            return 0;
        };
        let (l, f) = if sv_leads { (sv, o) } else { (o, sv) };
        pair_risk(min_ttc(sv, l, f, t_s, t_e), threshold)
    };
    let clv = flag(group.clv, false);
    let tlv = flag(group.tlv, false);
    let tfv = flag(group.tfv, true);
    RiskStatus {
        clv,
        tlv,
        tfv,
        group: group_risk(clv, tlv, tfv),
    }
}

/// Share of scenarios flagged for each neighbor and for the group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskRow {
    #[serde(rename = "CLV")]
    pub clv: f64,
    #[serde(rename = "TLV")]
    pub tlv: f64,
    #[serde(rename = "TFV")]
    pub tfv: f64,
    #[serde(rename = "Vehicle group")]
    pub group: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub threshold: f64,
    pub n: usize,
    #[serde(rename = "SV1")]
    pub sv1: RiskRow,
    #[serde(rename = "SV2")]
    pub sv2: RiskRow,
}

impl RiskTable {
    pub fn from_statuses(statuses: &[(RiskStatus, RiskStatus)], threshold: f64) -> Self {
        let n = statuses.len();
        let share = |pick: &dyn Fn(&(RiskStatus, RiskStatus)) -> u8| {
            if n == 0 {
                0.0
            } else {
                statuses.iter().map(|s| f64::from(pick(s))).sum::<f64>() / n as f64
            }
        };
        RiskTable {
            threshold,
            n,
            sv1: RiskRow {
                clv: share(&|s| s.0.clv),
                tlv: share(&|s| s.0.tlv),
                tfv: share(&|s| s.0.tfv),
                group: share(&|s| s.0.group),
            },
            sv2: RiskRow {
                clv: share(&|s| s.1.clv),
                tlv: share(&|s| s.1.tlv),
                tfv: share(&|s| s.1.tfv),
                group: share(&|s| s.1.group),
            },
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vehicle", "CLV", "TLV", "TFV", "Vehicle group"])?;
        for (name, r) in [("SV1", &self.sv1), ("SV2", &self.sv2)] {
            w.write_record([
                name.to_string(),
                r.clv.to_string(),
                r.tlv.to_string(),
                r.tfv.to_string(),
                r.group.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn risk_table(recording: &Recording, scenarios: &[ConsecutiveScenario], threshold: f64) -> RiskTable {
    let statuses: Vec<_> = scenarios
        .iter()
        .map(|s| {
            (
                scenario_risk(recording, &s.v1, threshold),
                scenario_risk(recording, &s.v2, threshold),
            )
        })
        .collect();
    RiskTable::from_statuses(&statuses, threshold)
}
