//! Deterministic synthetic recordings with known lane-change ground truth.
//!
//! A [`ScenarioScript`] lists vehicles with an initial lane, position and
//! speed plus timed maneuvers. Lane changes follow a half-cosine lateral
//! profile between lane centers; speed changes are linear ramps. Because the
//! profiles are analytic, the boundary-crossing instants of every lane change
//! are known in closed form and returned as [`TruthEvent`]s.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    DrivingDirection, FrameSample, IngestError, LaneId, LaneLayout, Neighbors, Recording, Track,
    VehicleClass, VehicleId,
};

fn default_frame_rate() -> f64 {
    25.0
}
fn default_length() -> f64 {
    4.5
}
fn default_width() -> f64 {
    1.9
}
fn default_class() -> VehicleClass {
    VehicleClass::Car
}
fn default_direction() -> DrivingDirection {
    DrivingDirection::Dir2
}
fn default_recording_id() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutScript {
    #[serde(default)]
    pub upper: Vec<f64>,
    #[serde(default)]
    pub lower: Vec<f64>,
}

impl LayoutScript {
    /// Three lanes per direction, 3.75 m wide, HighD-like.
    pub fn highway() -> Self {
        LayoutScript {
            upper: vec![1.0, 4.75, 8.5, 12.25],
            lower: vec![16.0, 19.75, 23.5, 27.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeScript {
    pub start: f64,
    pub duration: f64,
    pub target_lane: LaneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedChangeScript {
    pub start: f64,
    pub duration: f64,
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleScript {
    pub id: VehicleId,
    #[serde(default = "default_class")]
    pub class: VehicleClass,
    #[serde(default = "default_length")]
    pub length: f64,
    /// Lateral extent (m).
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_direction")]
    pub direction: DrivingDirection,
    /// Lane at `enter`.
    pub lane: LaneId,
    /// Front-bumper position along travel at `enter` (m).
    pub position: f64,
    /// Speed along travel at time 0 (m/s).
    pub speed: f64,
    #[serde(default)]
    pub enter: f64,
    #[serde(default)]
    pub exit: Option<f64>,
    #[serde(default)]
    pub lane_changes: Vec<LaneChangeScript>,
    #[serde(default)]
    pub speed_changes: Vec<SpeedChangeScript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default = "default_recording_id")]
    pub id: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub duration: f64,
    pub layout: LayoutScript,
    /// Standard deviation of Gaussian noise added to recorded `xVelocity`.
    #[serde(default)]
    pub speed_noise: f64,
    pub vehicles: Vec<VehicleScript>,
}

/// Analytic ground truth for one scripted lane change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub vehicle_id: VehicleId,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub inward: bool,
    /// Continuous instant the vehicle center crosses the marking.
    pub t_center: f64,
    /// Continuous instant the trailing edge crosses the marking.
    pub t_edge: f64,
    /// Last sampled instant with the center still on the source side.
    pub t_anchor: f64,
    /// The vehicle is sampled on both sides of both crossings.
    pub observable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub recording: Recording,
    pub truth: Vec<TruthEvent>,
}

/// Contents of a synthetic-spec file: explicit recordings, generated traffic, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub recordings: Vec<ScenarioScript>,
    #[serde(default)]
    pub traffic: Option<TrafficPlan>,
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Spec(e.to_string()))
    }

    /// All scripts, with generated traffic episodes appended after the explicit ones.
    pub fn scripts(&self, seed: u64) -> Vec<ScenarioScript> {
        let mut out = self.recordings.clone();
        if let Some(plan) = &self.traffic {
            let base = out.iter().map(|s| s.id).max().unwrap_or(0);
            out.extend((0..plan.episodes).map(|k| plan.episode(seed, k, base + 1 + k as u32)));
        }
        out
    }
}

/// Randomized consecutive lane-change episodes, one recording each.
///
/// Every episode has two subject vehicles changing inward from the same lane
/// (the second following the first at a random interval), a slower leader in
/// the current lane and three vehicles in the target lane. The second
/// vehicle's post-change speed gain has a planted logistic dependence on the
/// interval and on its gap to the current-lane leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficPlan {
    pub episodes: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "TrafficPlan::default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub speed_noise: f64,
    /// Largest scripted interval between the two lane changes (s).
    #[serde(default = "TrafficPlan::default_max_gap")]
    pub max_interval: f64,
}

impl TrafficPlan {
    fn default_duration() -> f64 {
        32.0
    }
    fn default_max_gap() -> f64 {
        10.0
    }

    pub fn new(episodes: usize) -> Self {
        TrafficPlan {
            episodes,
            frame_rate: default_frame_rate(),
            duration: Self::default_duration(),
            speed_noise: 0.0,
            max_interval: Self::default_max_gap(),
        }
    }

    pub fn episode(&self, seed: u64, index: usize, recording_id: u32) -> ScenarioScript {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let layout = LayoutScript::highway();
        let (direction, src, tgt) = if rng.random_bool(0.5) {
            (DrivingDirection::Dir2, 7, 6)
        } else {
            (DrivingDirection::Dir1, 3, 4)
        };
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);

        let v_src = u(22.0, 30.0);
        let v_tgt = v_src + u(-2.0, 6.0);
        let t1 = u(5.0, 8.0);
        let dur1 = u(3.0, 6.0);
        let dur2 = u(3.0, 6.0);
        // keep the centre-crossing interval clear of the 9 s mining bound
        let mut gap_t = u(0.5, self.max_interval);
        if (gap_t - 9.0).abs() < 0.3 {
            gap_t += 0.6;
        }
        let t2 = t1 + gap_t;
        let sv_len = u(4.0, 5.0);
        let clv_len = u(4.0, 5.5);
        let gap12 = u(15.0, 45.0);
        let g_clv = u(6.0, 60.0);
        let dv_clv = u(0.0, 4.0).min((g_clv + gap12 - 8.0) / (gap_t + 4.0));
        let v_clv = v_src - dv_clv;
        let sv1_front0 = 300.0;
        let sv2_front0 = sv1_front0 - sv_len - gap12;
        let clv_front0 = sv1_front0 + g_clv + clv_len + dv_clv * t1;
        let tlv_gap = u(10.0, 60.0);
        let tfv_gap = u(10.0, 50.0);
        let t_len = u(4.0, 5.0);
        let tlv_front0 = sv1_front0 + (v_src - v_tgt) * t1 + tlv_gap + t_len;
        let tfv_front0 = sv1_front0 - sv_len + (v_src - v_tgt) * t1 - tfv_gap;
        let tfv2_front0 = tfv_front0 - t_len - u(15.0, 50.0);

        // planted response for the follower's speed gain
        let gap_clv2 = (g_clv + gap12 + sv_len - dv_clv * gap_t).max(0.0);
        let index = 1.1 - 0.025 * gap_clv2 - 0.12 * gap_t + u(-0.5, 0.5);
        let p = 1.0 / (1.0 + (-index).exp());
        let gain = if u(0.0, 1.0) < p { u(0.5, 3.0) } else { -u(0.5, 3.0) };
        let sv1_gain = u(-2.0, 3.0);
        let sv2_exit = t2 + dur2 + u(0.0, 10.0);

        let car = |id: VehicleId, lane: LaneId, position: f64, speed: f64, length: f64| VehicleScript {
            id,
            class: VehicleClass::Car,
            length,
            width: 1.9,
            direction,
            lane,
            position,
            speed,
            enter: 0.0,
            exit: None,
            lane_changes: Vec::new(),
            speed_changes: Vec::new(),
        };
        let mut sv1 = car(1, src, sv1_front0, v_src, sv_len);
        sv1.lane_changes.push(LaneChangeScript {
            start: t1,
            duration: dur1,
            target_lane: tgt,
        });
        sv1.speed_changes.push(SpeedChangeScript {
            start: t1 + 0.6 * dur1,
            duration: 2.0,
            target_speed: v_src + sv1_gain,
        });
        let mut sv2 = car(2, src, sv2_front0, v_src, sv_len);
        sv2.exit = Some(sv2_exit.min(self.duration));
        sv2.lane_changes.push(LaneChangeScript {
            start: t2,
            duration: dur2,
            target_lane: tgt,
        });
        sv2.speed_changes.push(SpeedChangeScript {
            start: t2 + 0.6 * dur2,
            duration: 1.5,
            target_speed: v_src + gain,
        });
        let vehicles = vec![
            sv1,
            sv2,
            car(3, src, clv_front0, v_clv, clv_len),
            car(4, tgt, tlv_front0, v_tgt, t_len),
            car(5, tgt, tfv_front0, v_tgt, t_len),
            car(6, tgt, tfv2_front0, v_tgt, t_len),
        ];
        ScenarioScript {
            id: recording_id,
            frame_rate: self.frame_rate,
            duration: self.duration,
            layout,
            speed_noise: self.speed_noise,
            vehicles,
        }
    }
}

struct Kinematics<'a> {
    v: &'a VehicleScript,
    /// (start, end, from_center, to_center)
    lateral: Vec<(f64, f64, f64, f64)>,
    start_center: f64,
    /// (start, end, from_speed, to_speed)
    ramps: Vec<(f64, f64, f64, f64)>,
}

impl<'a> Kinematics<'a> {
    fn new(v: &'a VehicleScript, layout: &'a LaneLayout) -> Self {
        let start_center = layout.canonical_center(v.lane).unwrap_or(0.0);
        let mut lateral = Vec::new();
        let mut cur = start_center;
        for lc in &v.lane_changes {
            let to = layout.canonical_center(lc.target_lane).unwrap_or(cur);
            lateral.push((lc.start, lc.start + lc.duration, cur, to));
            cur = to;
        }
        let mut ramps = Vec::new();
        let mut speed = v.speed;
        for sc in &v.speed_changes {
            ramps.push((sc.start, sc.start + sc.duration, speed, sc.target_speed));
            speed = sc.target_speed;
        }
        Kinematics {
            v,
            lateral,
            start_center,
            ramps,
        }
    }

    /// Canonical lateral center and its first two derivatives.
    fn lateral(&self, t: f64) -> (f64, f64, f64) {
        let mut c = self.start_center;
        for &(s, e, from, to) in &self.lateral {
            if t <= s {
                return (c, 0.0, 0.0);
            }
            if t < e {
                let d = e - s;
                let phase = PI * (t - s) / d;
                let delta = to - from;
                return (
                    from + delta * 0.5 * (1.0 - phase.cos()),
                    delta * 0.5 * PI / d * phase.sin(),
                    delta * 0.5 * (PI / d).powi(2) * phase.cos(),
                );
            }
            c = to;
        }
        (c, 0.0, 0.0)
    }

    fn speed(&self, t: f64) -> (f64, f64) {
        let mut v = self.v.speed;
        for &(s, e, from, to) in &self.ramps {
            if t <= s {
                return (v, 0.0);
            }
            if t < e {
                let a = (to - from) / (e - s);
                return (from + a * (t - s), a);
            }
            v = to;
        }
        (v, 0.0)
    }

    /// Exact integral of the piecewise-linear speed over `[0, t]`.
    fn distance(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut cursor = 0.0;
        let mut v = self.v.speed;
        for &(s, e, from, to) in &self.ramps {
            if t <= s {
                break;
            }
            acc += v * (s - cursor);
            let end = t.min(e);
            let a = (to - from) / (e - s);
            acc += from * (end - s) + 0.5 * a * (end - s).powi(2);
            cursor = end;
            v = if t < e { from + a * (end - s) } else { to };
            if t < e {
                return acc;
            }
        }
        acc + v * (t - cursor)
    }

    fn front(&self, t: f64) -> f64 {
        self.v.position + self.distance(t) - self.distance(self.v.enter)
    }
}

fn validate(script: &ScenarioScript, layout: &LaneLayout) -> Result<(), IngestError> {
    let err = |m: String| Err(IngestError::Spec(m));
    if !(script.frame_rate > 0.0) {
        return err(format!("frame rate {} must be positive", script.frame_rate));
    }
    if !(script.duration > 0.0) {
        return err(format!("duration {} must be positive", script.duration));
    }
    if !(script.speed_noise >= 0.0) {
        return err("speed noise must be non-negative".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in &script.vehicles {
        if v.id == 0 || !seen.insert(v.id) {
            return err(format!("vehicle id {} is zero or duplicated", v.id));
        }
        if !(v.length > 0.0) || !(v.width > 0.0) {
            return err(format!("vehicle {}: extents must be positive", v.id));
        }
        let exit = v.exit.unwrap_or(script.duration);
        if !(v.enter >= 0.0 && v.enter < exit && exit <= script.duration) {
            return err(format!("vehicle {}: bad enter/exit window", v.id));
        }
        let Some(bounds) = layout.lane(v.lane) else {
            return err(format!("vehicle {}: lane {} not in layout", v.id, v.lane));
        };
        if bounds.direction != v.direction {
            return err(format!("vehicle {}: lane {} belongs to the other direction", v.id, v.lane));
        }
        let mut lane = v.lane;
        let mut free_from = f64::NEG_INFINITY;
        for lc in &v.lane_changes {
            if !(lc.duration > 0.0) {
                return err(format!("vehicle {}: lane-change duration must be positive", v.id));
            }
            if lc.start < free_from {
                return err(format!("vehicle {}: overlapping lane changes", v.id));
            }
            let Some(_) = layout.shared_boundary(lane, lc.target_lane) else {
                return err(format!(
                    "vehicle {}: lanes {} and {} are not adjacent",
                    v.id, lane, lc.target_lane
                ));
            };
            let (inner, outer) = layout.canonical_bounds(lc.target_lane).unwrap_or((0.0, 0.0));
            if v.width >= outer - inner {
                return err(format!("vehicle {}: wider than the target lane", v.id));
            }
            free_from = lc.start + lc.duration;
            lane = lc.target_lane;
        }
        let mut free_from = f64::NEG_INFINITY;
        for sc in &v.speed_changes {
            if !(sc.duration > 0.0) {
                return err(format!("vehicle {}: speed-change duration must be positive", v.id));
            }
            if sc.start < free_from {
                return err(format!("vehicle {}: overlapping speed changes", v.id));
            }
            free_from = sc.start + sc.duration;
        }
    }
    Ok(())
}

struct Placed {
    id: VehicleId,
    lane: LaneId,
    front: f64,
    length: f64,
}

fn fill_neighbors(tracks: &mut BTreeMap<VehicleId, Track>, layout: &LaneLayout) {
    let mut by_frame: BTreeMap<u32, Vec<Placed>> = BTreeMap::new();
    for t in tracks.values() {
        for f in &t.frames {
            by_frame.entry(f.frame).or_default().push(Placed {
                id: t.vehicle_id,
                lane: f.lane_id,
                front: t.front(f),
                length: t.length,
            });
        }
    }
    let nearest = |cands: &[&Placed], me: &Placed, ahead: bool| -> Option<VehicleId> {
        cands
            .iter()
            .filter(|o| o.id != me.id && if ahead { o.front > me.front } else { o.front < me.front })
            .min_by(|a, b| {
                (a.front - me.front)
                    .abs()
                    .total_cmp(&(b.front - me.front).abs())
                    .then(a.id.cmp(&b.id))
            })
            .map(|o| o.id)
    };
    for t in tracks.values_mut() {
        for f in &mut t.frames {
            let placed = &by_frame[&f.frame];
            let Some(me) = placed.iter().find(|p| p.id == t.vehicle_id) else {
                continue;
            };
            let in_lane = |lane: Option<LaneId>| -> Vec<&Placed> {
                match lane {
                    Some(l) => placed.iter().filter(|p| p.lane == l).collect(),
                    None => Vec::new(),
                }
            };
            let same = in_lane(Some(me.lane));
            let mut n = Neighbors {
                preceding: nearest(&same, me, true),
                following: nearest(&same, me, false),
                ..Neighbors::default()
            };
            let rear = me.front - me.length;
            for (inward, slots) in [(true, 0usize), (false, 1usize)] {
                let lane = in_lane(layout.neighbor_lane(me.lane, inward));
                let along: Vec<&Placed> = lane
                    .iter()
                    .copied()
                    .filter(|o| o.front - o.length < me.front && o.front > rear)
                    .collect();
                let ahead: Vec<&Placed> =
                    lane.iter().copied().filter(|o| o.front - o.length >= me.front).collect();
                let behind: Vec<&Placed> = lane.iter().copied().filter(|o| o.front <= rear).collect();
                let alongside = along
                    .iter()
                    .min_by(|a, b| {
                        (a.front - me.front)
                            .abs()
                            .total_cmp(&(b.front - me.front).abs())
                            .then(a.id.cmp(&b.id))
                    })
                    .map(|o| o.id);
                let (p, a, fo) = (nearest(&ahead, me, true), alongside, nearest(&behind, me, false));
                if slots == 0 {
                    n.left_preceding = p;
                    n.left_alongside = a;
                    n.left_following = fo;
                } else {
                    n.right_preceding = p;
                    n.right_alongside = a;
                    n.right_following = fo;
                }
            }
            f.neighbors = n;
        }
    }
}

fn crossing_fraction(f: f64) -> f64 {
    (1.0 - 2.0 * f).clamp(-1.0, 1.0).acos() / PI
}

/// Generates one recording from a script. `seed` only drives measurement noise.
pub fn generate_synthetic(script: &ScenarioScript, seed: u64) -> Result<Synthetic, IngestError> {
    let layout = LaneLayout::new(script.layout.upper.clone(), script.layout.lower.clone())?;
    validate(script, &layout)?;
    let fr = script.frame_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(script.id));
    let noise = Normal::new(0.0, script.speed_noise.max(0.0))
        .map_err(|e| IngestError::Spec(e.to_string()))?;

    let mut vehicles: Vec<&VehicleScript> = script.vehicles.iter().collect();
    vehicles.sort_by_key(|v| v.id);

    let mut tracks = BTreeMap::new();
    let mut truth = Vec::new();
    for v in vehicles {
        let kin = Kinematics::new(v, &layout);
        let exit = v.exit.unwrap_or(script.duration);
        let first = (v.enter * fr - 1e-9).ceil().max(0.0) as u32;
        let last = (exit * fr + 1e-9).floor() as u32;
        let sign = match v.direction {
            DrivingDirection::Dir2 => 1.0,
            DrivingDirection::Dir1 => -1.0,
        };
        let mut frames = Vec::with_capacity((last - first + 1) as usize);
        for k in first..=last {
            let t = f64::from(k) / fr;
            let (c, dc, ddc) = kin.lateral(t);
            let (speed, accel) = kin.speed(t);
            let front = kin.front(t);
            let outer = c + 0.5 * v.width;
            let (x, y) = match v.direction {
                DrivingDirection::Dir2 => (front - v.length, outer - v.width),
                DrivingDirection::Dir1 => (-front, layout.road_width() - outer),
            };
            let measured = speed
                + if script.speed_noise > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
            frames.push(FrameSample {
                frame: k,
                time: t,
                x,
                y,
                vx: sign * measured,
                vy: sign * dc,
                ax: sign * accel,
                ay: sign * ddc,
                lane_id: layout.lane_at(v.direction, c).unwrap_or(0),
                neighbors: Neighbors::default(),
            });
        }
        let t_first = f64::from(first) / fr;
        let t_last = f64::from(last) / fr;

        let mut lane = v.lane;
        for (lc, &(s, e, from, to)) in v.lane_changes.iter().zip(&kin.lateral) {
            let b = layout
                .shared_boundary(lane, lc.target_lane)
                .expect("validated adjacency");
            let inward = to < from;
            let span = (to - from).abs();
            let half = 0.5 * v.width;
            let (fc, fe) = if inward {
                ((from - b) / span, (from + half - b) / span)
            } else {
                ((b - from) / span, (b + half - from) / span)
            };
            let t_center = s + crossing_fraction(fc) * (e - s);
            let t_edge = s + crossing_fraction(fe) * (e - s);
            let t_anchor = (t_center * fr).floor() / fr;
            truth.push(TruthEvent {
                vehicle_id: v.id,
                source_lane: lane,
                target_lane: lc.target_lane,
                inward,
                t_center,
                t_edge,
                t_anchor,
                observable: t_anchor >= t_first && t_edge < t_last,
            });
            lane = lc.target_lane;
        }

        let track = Track {
            vehicle_id: v.id,
            class: v.class,
            length: v.length,
            lateral_extent: v.width,
            direction: v.direction,
            frame_rate: fr,
            frames,
        };
        tracks.insert(v.id, track);
    }
    fill_neighbors(&mut tracks, &layout);
    truth.sort_by(|a, b| a.t_center.total_cmp(&b.t_center).then(a.vehicle_id.cmp(&b.vehicle_id)));

    let recording = Recording {
        id: script.id,
        frame_rate: fr,
        duration: script.duration,
        layout,
        tracks,
    };
    recording.validate()?;
    Ok(Synthetic { recording, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_change() -> ScenarioScript {
        ScenarioScript {
            id: 1,
            frame_rate: 25.0,
            duration: 20.0,
            layout: LayoutScript::highway(),
            speed_noise: 0.0,
            vehicles: vec![VehicleScript {
                id: 1,
                class: VehicleClass::Car,
                length: 4.5,
                width: 1.9,
                direction: DrivingDirection::Dir2,
                lane: 7,
                position: 100.0,
                speed: 30.0,
                enter: 0.0,
                exit: None,
                lane_changes: vec![LaneChangeScript {
                    start: 5.0,
                    duration: 4.0,
                    target_lane: 6,
                }],
                speed_changes: vec![],
            }],
        }
    }

    #[test]
    fn single_change_has_one_truth_event() {
        let s = generate_synthetic(&one_change(), 0).unwrap();
        assert_eq!(s.truth.len(), 1);
        let ev = &s.truth[0];
        assert!(ev.inward && ev.observable);
        assert_eq!((ev.source_lane, ev.target_lane), (7, 6));
        // symmetric half-cosine: the centre crosses the shared marking halfway
        assert!((ev.t_center - 7.0).abs() < 1e-9);
        assert!(ev.t_edge > ev.t_center && ev.t_edge < 9.0);
    }

    #[test]
    fn deterministic_for_same_seed() {
        let mut script = one_change();
        script.speed_noise = 0.3;
        let a = generate_synthetic(&script, 42).unwrap();
        let b = generate_synthetic(&script, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&script, 43).unwrap();
        assert_ne!(a.recording, c.recording);
    }

    #[test]
    fn constant_speed_integrates_exactly() {
        let s = generate_synthetic(&one_change(), 0).unwrap();
        let t = &s.recording.tracks[&1];
        let f = &t.frames[250];
        assert!((t.front(f) - (100.0 + 30.0 * 10.0)).abs() < 1e-9);
        assert!((t.speed(f) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn speed_ramp_distance_matches_trapezoid() {
        let mut script = one_change();
        script.vehicles[0].speed_changes.push(SpeedChangeScript {
            start: 2.0,
            duration: 2.0,
            target_speed: 32.0,
        });
        let s = generate_synthetic(&script, 0).unwrap();
        let t = &s.recording.tracks[&1];
        let f = t.sample_at(10.0).unwrap();
        // 2 s at 30, 2 s ramp averaging 31, 6 s at 32
        assert!((t.front(f) - (100.0 + 60.0 + 62.0 + 192.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive_duration() {
        let mut script = one_change();
        script.vehicles[0].lane_changes[0].duration = 0.0;
        assert!(matches!(generate_synthetic(&script, 0), Err(IngestError::Spec(_))));
    }

    #[test]
    fn rejects_non_adjacent_target() {
        let mut script = one_change();
        script.vehicles[0].lane_changes[0].target_lane = 8 - 2 - 1 + 10;
        assert!(generate_synthetic(&script, 0).is_err());
    }

    #[test]
    fn two_vehicles_same_target_interval() {
        let mut script = one_change();
        let mut second = script.vehicles[0].clone();
        second.id = 2;
        second.position = 60.0;
        second.lane_changes[0].start = 8.0;
        script.vehicles.push(second);
        let s = generate_synthetic(&script, 0).unwrap();
        assert_eq!(s.truth.len(), 2);
        assert!((s.truth[1].t_center - s.truth[0].t_center - 3.0).abs() < 1e-9);
        assert!((s.truth[1].t_anchor - s.truth[0].t_anchor - 3.0).abs() < 1e-9);
    }

    #[test]
    fn neighbors_follow_positions() {
        let mut script = one_change();
        let mut leader = script.vehicles[0].clone();
        leader.id = 2;
        leader.position = 150.0;
        leader.lane_changes.clear();
        script.vehicles.push(leader);
        let s = generate_synthetic(&script, 0).unwrap();
        let f = &s.recording.tracks[&1].frames[0];
        assert_eq!(f.neighbors.preceding, Some(2));
        let f2 = &s.recording.tracks[&2].frames[0];
        assert_eq!(f2.neighbors.following, Some(1));
    }

    #[test]
    fn traffic_episodes_are_valid_and_reproducible() {
        let plan = TrafficPlan::new(5);
        for k in 0..5 {
            let a = plan.episode(9, k, k as u32 + 1);
            assert_eq!(a, plan.episode(9, k, k as u32 + 1));
            let s = generate_synthetic(&a, 9).unwrap();
            assert_eq!(s.truth.len(), 2);
        }
    }
}
