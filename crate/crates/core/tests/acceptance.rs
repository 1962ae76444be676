//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Criteria listed in
//! `KNOWN_DIVERGENT` are reported like the others but do not fail the run;
//! any other FAIL exits nonzero.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use lcstim_core::classify::*;
use lcstim_core::detect::{detect_recording, LaneChangeEvent};
use lcstim_core::exec::Exec;
use lcstim_core::ingest::*;
use lcstim_core::logit::*;
use lcstim_core::mine::{mine_consecutive, MiningOptions, VehicleGroup};
use lcstim_core::pipeline::*;
use lcstim_core::utility::{group_risk, pair_risk, scenario_risk, ttc, Measure, RiskTable};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The reference share 0.1725 is not what (-0.121, 0.129) gives.
const KNOWN_DIVERGENT: &[usize] = &[1];

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

// ---------------------------------------------------------------- fixtures

fn traffic(n: usize, seed: u64) -> Vec<Synthetic> {
    let plan = TrafficPlan { speed_noise: 0.3, ..TrafficPlan::new(n) };
    let spec = SyntheticSpec { recordings: vec![], traffic: Some(plan) };
    spec.scripts(seed).iter().map(|s| generate_synthetic(s, seed).unwrap()).collect()
}

fn car(id: VehicleId, position: f64, change_at: f64) -> VehicleScript {
    VehicleScript {
        id,
        class: VehicleClass::Car,
        length: 4.5,
        width: 1.9,
        direction: DrivingDirection::Dir2,
        lane: 7,
        position,
        speed: 30.0,
        enter: 0.0,
        exit: None,
        lane_changes: vec![LaneChangeScript { start: change_at, duration: 4.0, target_lane: 6 }],
        speed_changes: vec![],
    }
}

/// SV1 changes at 5 s, SV2 `gap` seconds later into the same lane.
fn scripted_pair(id: u32, gap: f64) -> Synthetic {
    let script = ScenarioScript {
        id,
        frame_rate: 25.0,
        duration: 30.0,
        layout: LayoutScript::highway(),
        speed_noise: 0.0,
        vehicles: vec![car(1, 120.0, 5.0), car(2, 80.0, 5.0 + gap)],
    };
    generate_synthetic(&script, 0).unwrap()
}

// ---------------------------------------------------------------- criteria

fn c1_positive_share() -> Check {
    let t0 = Instant::now();
    let cases = [(-0.111, 0.178, 0.2667), (-0.121, 0.129, 0.1725), (-0.139, 0.237, 0.2787)];
    let got: Vec<f64> = cases.iter().map(|&(m, s, _)| positive_share(m, s).unwrap()).collect();
    let elapsed = t0.elapsed();
    let detail = cases
        .iter()
        .zip(&got)
        .map(|(c, g)| format!("{g:.5} vs {}", c.2))
        .collect::<Vec<_>>()
        .join(", ");
    let bad: Vec<String> = cases
        .iter()
        .zip(&got)
        .filter(|(c, g)| !close(**g, c.2, 5e-4))
        .map(|(c, g)| format!("({}, {}) gives {g:.5}, reference {}", c.0, c.1, c.2))
        .collect();
    ensure(elapsed < Duration::from_millis(1), format!("took {elapsed:?}"))?;
    ensure(bad.is_empty(), bad.join("; "))?;
    Ok(format!("{detail} in {elapsed:?}"))
}

fn c2_rho_squared() -> Check {
    let pairs = [(-146.191, -166.967, 0.1244), (-97.453, -112.092, 0.1306), (-74.961, -90.094, 0.1679)];
    let mut out = Vec::new();
    for (ll, ll0, want) in pairs {
        let r = rho_squared(ll, ll0).map_err(|e| e.to_string())?;
        ensure(close(r, want, 5e-4), format!("rho2({ll}, {ll0}) = {r:.5}, want {want}"))?;
        out.push(format!("{r:.4}"));
    }
    // Expected divergence: the third pair's reference rho2 is 0.1689, but its
    // own LL values give 0.1680.
    Ok(format!("{} (reference 0.124, 0.131, 0.1689; the last does not follow from its LL pair)", out.join(", ")))
}

fn c3_recovery() -> Check {
    let t0 = Instant::now();
    let model = PlantedModel::reference();
    let truth = model.truth();
    let names = model.spec().parameter_names();
    let reps = 20u64;
    let mut sums = vec![0.0; truth.len()];
    let mut cover = vec![0usize; truth.len()];
    for rep in 0..reps {
        let data = model.simulate(2000, 1000 + rep);
        let spec = model.spec();
        ensure(spec.draws == 200, "planted spec must use 200 draws")?;
        let fit = estimate(&data, &spec).map_err(|e| format!("replication {rep}: {e}"))?;
        for (k, e) in fit.estimates.iter().enumerate() {
            sums[k] += e.value;
            if let Some((lo, hi)) = e.ci95() {
                if lo <= truth[k] && truth[k] <= hi {
                    cover[k] += 1;
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for k in 0..truth.len() {
        let mean = sums[k] / reps as f64;
        let rel = (mean - truth[k]).abs() / truth[k].abs();
        parts.push(format!("{} {mean:.4} ({:+.1}%, cover {}/{reps})", names[k], 100.0 * (mean - truth[k]) / truth[k].abs(), cover[k]));
        if rel > 0.2 || cover[k] < 18 {
            bad.push(names[k].clone());
        }
    }
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    ensure(bad.is_empty(), format!("{}; failing: {}", parts.join(", "), bad.join(", ")))?;
    Ok(format!("{} in {:.1?}", parts.join(", "), elapsed))
}

fn c4_gradient() -> Check {
    let model = PlantedModel::reference();
    let data = model.simulate(300, 42);
    let mut spec = model.spec();
    spec.draws = 50;
    let problem = Problem::new(&data, &spec).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta: Vec<f64> = (0..problem.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, g) = problem.loglik_grad(&theta, Exec::Sequential).map_err(|e| e.to_string())?;
        for k in 0..theta.len() {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (problem.loglik(&up, Exec::Sequential).unwrap() - problem.loglik(&dn, Exec::Sequential).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
        }
    }
    ensure(worst <= 1e-4, format!("worst relative error {worst:.2e}"))?;
    Ok(format!("worst relative error {worst:.2e} over 10 points"))
}

fn c5_detection(fixtures: &[Synthetic]) -> Check {
    let (mut tp, mut fp, mut missed) = (0usize, 0usize, 0usize);
    let mut worst_s: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for syn in fixtures {
        let rec = &syn.recording;
        let dt = 1.0 / rec.frame_rate;
        let detected: Vec<LaneChangeEvent> = detect_recording(rec, Exec::Sequential).inward().cloned().collect();
        let truth: Vec<&TruthEvent> = syn.truth.iter().filter(|t| t.inward && t.observable).collect();
        let mut used = vec![false; detected.len()];
        for t in &truth {
            let hit = detected.iter().enumerate().find(|(k, e)| {
                !used[*k]
                    && e.vehicle_id == t.vehicle_id
                    && (e.source_lane, e.target_lane) == (t.source_lane, t.target_lane)
                    && (e.t_s - t.t_anchor).abs() <= dt + 1e-9
                    && (e.t_e - t.t_edge).abs() <= dt + 1e-9
            });
            match hit {
                Some((k, e)) => {
                    used[k] = true;
                    tp += 1;
                    worst_s = worst_s.max((e.t_s - t.t_anchor).abs());
                    worst_e = worst_e.max((e.t_e - t.t_edge).abs());
                }
                None => missed += 1,
            }
        }
        fp += used.iter().filter(|u| !**u).count();
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / (tp + missed).max(1) as f64;
    let detail = format!(
        "{} recordings, {tp} matches, precision {precision:.3}, recall {recall:.3}, worst |dt_s| {worst_s:.3} s, |dt_e| {worst_e:.3} s",
        fixtures.len()
    );
    ensure(tp > 0 && fp == 0 && missed == 0, detail.clone())?;
    Ok(detail)
}

/// All ordered pairs of truth events passing the mining rules.
fn brute_force_pairs(syn: &Synthetic, bound: f64) -> BTreeSet<(VehicleId, VehicleId)> {
    let rec = &syn.recording;
    let truth: Vec<&TruthEvent> = syn.truth.iter().filter(|t| t.inward && t.observable).collect();
    let mut out = BTreeSet::new();
    for a in &truth {
        for b in &truth {
            let gap = b.t_anchor - a.t_anchor;
            if a.vehicle_id == b.vehicle_id
                || (a.source_lane, a.target_lane) != (b.source_lane, b.target_lane)
                || gap <= 0.0
                || gap > bound + 1e-9
            {
                continue;
            }
            let track = rec.track(b.vehicle_id).unwrap();
            let half = 0.5 / rec.frame_rate;
            let present = track.frames[0].time <= a.t_anchor + half;
            let stays = track
                .frames
                .iter()
                .filter(|f| f.time >= a.t_anchor - half && f.time <= b.t_anchor + half)
                .all(|f| f.lane_id == a.source_lane);
            if present && stays {
                out.insert((a.vehicle_id, b.vehicle_id));
            }
        }
    }
    out
}

fn mined_pairs(rec: &Recording, bound: f64) -> BTreeSet<(VehicleId, VehicleId)> {
    let events = detect_recording(rec, Exec::Sequential).events;
    let opts = MiningOptions { max_interval: bound, ..Default::default() };
    mine_consecutive(rec, &events, &opts, Exec::Sequential)
        .unwrap()
        .iter()
        .map(|s| (s.v1.sv, s.v2.sv))
        .collect()
}

fn c6_mining(fixtures: &[Synthetic]) -> Check {
    let mut total = 0;
    for syn in fixtures {
        let want = brute_force_pairs(syn, 9.0);
        let got = mined_pairs(&syn.recording, 9.0);
        ensure(want == got, format!("recording {}: mined {got:?}, brute force {want:?}", syn.recording.id))?;
        total += got.len();
    }
    let near = scripted_pair(900, 3.0);
    let far = scripted_pair(901, 9.5);
    ensure(mined_pairs(&near.recording, 9.0).len() == 1, "3 s pair not mined")?;
    ensure(mined_pairs(&far.recording, 9.0).is_empty(), "9.5 s pair mined under the 9 s bound")?;
    ensure(brute_force_pairs(&far, 9.0).is_empty() && brute_force_pairs(&near, 9.0).len() == 1, "scripted truth")?;
    Ok(format!("{total} pairs over {} recordings equal the brute-force filter; 3 s kept, 9.5 s excluded", fixtures.len()))
}

/// Min TTC by scanning every SV frame in [t_s, t_e] and matching partners by time.
fn brute_flag(rec: &Recording, g: &VehicleGroup, other: Option<VehicleId>, sv_leads: bool, thr: f64) -> u8 {
    let Some(o) = other.and_then(|id| rec.track(id)) else { return 0 };
    let sv = rec.track(g.sv).unwrap();
    let mut min = f64::INFINITY;
    for f in &sv.frames {
        if f.time < g.event.t_s - 1e-9 || f.time > g.event.t_e + 1e-9 {
            continue;
        }
        let Some(of) = o.frames.iter().find(|q| (q.time - f.time).abs() < 1e-9) else { continue };
        let ((lt, lf), (ft, ff)) = if sv_leads { ((sv, f), (o, of)) } else { ((o, of), (sv, f)) };
        let gap = lt.front(lf) - ft.front(ff) - lt.length;
        if gap < 0.0 {
            continue;
        }
        let closing = ft.speed(ff) - lt.speed(lf);
        if closing > 0.0 {
            min = min.min(gap / closing);
        }
    }
    u8::from(min > 0.0 && min < thr)
}

fn c7_risk(fixtures: &[Synthetic]) -> Check {
    ensure(ttc(100.0, 50.0, 5.0, 30.0, 20.0).map_err(|e| e.to_string())? == 4.5, "ttc 4.5 s example")?;
    ensure(ttc(100.0, 50.0, 5.0, 20.0, 20.0).unwrap().is_infinite(), "equal speeds")?;
    ensure(ttc(100.0, 50.0, 5.0, 10.0, 20.0).unwrap().is_infinite(), "opening gap")?;
    ensure(ttc(50.0, 50.0, 5.0, 30.0, 20.0).is_err(), "negative gap must error")?;
    ensure(pair_risk(3.0, 4.0) == 1 && pair_risk(4.0, 4.0) == 0 && pair_risk(f64::INFINITY, 4.0) == 0, "pair_risk")?;
    for bits in 0..8u8 {
        let (a, b, c) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1);
        ensure(group_risk(a, b, c) == u8::from(a == 1 || b == 1 || c == 1), "group_risk is not OR")?;
    }
    let mut n = 0;
    for thr in [4.0, 2.5, 1.5] {
        let mut got = Vec::new();
        let mut want = Vec::new();
        for syn in fixtures {
            let rec = &syn.recording;
            let events = detect_recording(rec, Exec::Sequential).events;
            for s in mine_consecutive(rec, &events, &MiningOptions::default(), Exec::Sequential).unwrap() {
                got.push((scenario_risk(rec, &s.v1, thr), scenario_risk(rec, &s.v2, thr)));
                let brute = |g: &VehicleGroup| {
                    let (c, t, f) = (
                        brute_flag(rec, g, g.clv, false, thr),
                        brute_flag(rec, g, g.tlv, false, thr),
                        brute_flag(rec, g, g.tfv, true, thr),
                    );
                    [c, t, f, u8::from(c + t + f > 0)]
                };
                want.push((brute(&s.v1), brute(&s.v2)));
            }
        }
        n = got.len();
        let table = RiskTable::from_statuses(&got, thr);
        let share = |sel: &dyn Fn(&([u8; 4], [u8; 4])) -> u8| {
            want.iter().map(|w| f64::from(sel(w))).sum::<f64>() / want.len() as f64
        };
        let expect = [
            [share(&|w| w.0[0]), share(&|w| w.0[1]), share(&|w| w.0[2]), share(&|w| w.0[3])],
            [share(&|w| w.1[0]), share(&|w| w.1[1]), share(&|w| w.1[2]), share(&|w| w.1[3])],
        ];
        let rows = [table.sv1, table.sv2];
        for (r, e) in rows.iter().zip(expect) {
            let have = [r.clv, r.tlv, r.tfv, r.group];
            ensure(
                have.iter().zip(e).all(|(h, e)| close(*h, e, 1e-12)),
                format!("threshold {thr}: table {have:?} vs brute force {e:?}"),
            )?;
        }
        ensure(table.n == n, "scenario count")?;
    }
    Ok(format!("{n} scenarios at thresholds 4, 2.5, 1.5 match the per-frame scan; unit examples exact"))
}

/// Eight uniform features; the label depends on a ring in the first two plus 10% flips.
fn nonlinear_task(n: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2 = row[0] * row[0] + row[1] * row[1];
        let mut label = u8::from(r2 < 0.5);
        if rng.random_bool(0.1) {
            label = 1 - label;
        }
        x.push(row);
        y.push(label);
    }
    LabeledSet::new((0..8).map(|k| format!("x{k}")).collect(), x, y).unwrap()
}

fn c8_tree_forest() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20 {
        let n = rng.random_range(10..120);
        let d = rng.random_range(1..6);
        let mut seen = BTreeMap::new();
        for _ in 0..n {
            let row: Vec<i64> = (0..d).map(|_| rng.random_range(0..4)).collect();
            let label = rng.random_range(0..2u8);
            seen.entry(row).or_insert(label);
        }
        let (x, y): (Vec<Vec<f64>>, Vec<u8>) =
            seen.into_iter().map(|(r, l)| (r.iter().map(|v| *v as f64).collect(), l)).unzip();
        if y.iter().all(|v| *v == y[0]) {
            continue;
        }
        let data = LabeledSet::new((0..d).map(|k| format!("f{k}")).collect(), x, y).unwrap();
        let tree = train_tree(&data, &TreeConfig::default()).map_err(|e| e.to_string())?;
        let acc = evaluate(&tree, &data).accuracy;
        ensure(acc == 1.0, format!("consistent dataset {trial}: train accuracy {acc}"))?;
    }
    let (mut dt_sum, mut rf_sum) = (0.0, 0.0);
    for seed in 0..20u64 {
        let data = nonlinear_task(252, 100 + seed);
        let (train, test) = split_train_test(&data, 0.8, seed).map_err(|e| e.to_string())?;
        ensure(train.len() == 201 && test.len() == 51, format!("split {}/{}", train.len(), test.len()))?;
        let tree = train_tree(&train, &TreeConfig::default()).map_err(|e| e.to_string())?;
        let forest = train_forest(&train, &ForestConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        dt_sum += evaluate(&tree, &test).accuracy;
        rf_sum += evaluate(&forest, &test).accuracy;
    }
    let (dt, rf) = (dt_sum / 20.0, rf_sum / 20.0);
    ensure(rf >= dt, format!("mean test accuracy rf {rf:.3} < dt {dt:.3}"))?;
    Ok(format!("DT train accuracy 1.000 on 20 consistent sets; 201/51 split, mean test accuracy rf {rf:.3} >= dt {dt:.3}"))
}

fn c9_metrics() -> Check {
    let r = evaluate_predictions(&[1, 1, 0, 0], &[1, 0, 0, 0], &[0.9, 0.4, 0.3, 0.1]);
    ensure(
        close(r.accuracy, 0.75, 1e-3) && close(r.precision, 0.833, 1e-3) && close(r.recall, 0.75, 1e-3) && close(r.f1, 0.733, 1e-3),
        format!("example gives {:.4}/{:.4}/{:.4}/{:.4}", r.accuracy, r.precision, r.recall, r.f1),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..100 {
        let n = rng.random_range(1..60);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let s: Vec<f64> = p.iter().map(|v| f64::from(*v)).collect();
        let r = evaluate_predictions(&y, &p, &s);
        ensure(r.recall == r.accuracy, format!("vector {k}: recall {} != accuracy {}", r.recall, r.accuracy))?;
    }
    Ok(format!("example {:.4}/{:.4}/{:.4}; recall == accuracy on 100 random vectors", r.accuracy, r.precision, r.f1))
}

fn c10_kernel_gini() -> Check {
    let e = |x: Result<f64, ClassifyError>| x.map_err(|e| e.to_string());
    ensure(e(rbf_kernel(&[0.3, -1.0], &[0.3, -1.0], 0.7))? == 1.0, "zero distance")?;
    ensure(close(e(rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5))?, (-1.0f64).exp(), 1e-12), "e^-1 case")?;
    ensure(close(e(gini(&[1.0]))?, 0.0, 1e-12), "gini pure")?;
    ensure(close(e(gini(&[0.5, 0.5]))?, 0.5, 1e-12), "gini 0.5")?;
    ensure(close(e(gini(&[0.7, 0.3]))?, 0.42, 1e-12), "gini 0.42")?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut lowest = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(2..40);
        let d = rng.random_range(1..5);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let gamma = rng.random_range(0.01..5.0);
        let g = gram_matrix(&x, gamma, Exec::Sequential);
        let m = DMatrix::from_fn(n, n, |i, j| g[i][j]);
        lowest = lowest.min(m.symmetric_eigenvalues().min());
    }
    ensure(lowest >= -1e-8, format!("min eigenvalue {lowest:.3e}"))?;
    Ok(format!("unit examples to 1e-12; min Gram eigenvalue over 20 random sets {lowest:.2e}"))
}

fn demo_config() -> PipelineConfig {
    PipelineConfig::from_file(Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/demo.toml")).unwrap()
}

fn bundle_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&p).unwrap();
        if name == MANIFEST_FILE {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v["generated_at"] = serde_json::Value::Null;
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

fn check_schemas(dir: &Path) -> Result<(), String> {
    let json = |name: &str| -> Result<serde_json::Value, String> {
        serde_json::from_str(&fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?)
            .map_err(|e| format!("{name}: {e}"))
    };
    let cells: BTreeSet<String> =
        (1..=4).flat_map(|i| (1..=4).map(move |j| format!("T{i}s_vs_T{j}e"))).collect();
    for m in Measure::ALL {
        let v = json(&comparison_file(m, "json"))?;
        let keys: BTreeSet<String> = v["cells"].as_object().ok_or("cells")?.keys().cloned().collect();
        ensure(keys == cells, format!("{} cells {keys:?}", m.name()))?;
        let csv = fs::read_to_string(dir.join(comparison_file(m, "csv"))).unwrap();
        ensure(csv.lines().count() == 17, format!("{} csv rows", m.name()))?;
    }
    let risk = fs::read_to_string(dir.join(RISK_CSV)).unwrap();
    let rows: Vec<&str> = risk.lines().collect();
    ensure(rows.len() == 3 && rows[0] == "vehicle,CLV,TLV,TFV,Vehicle group", format!("risk header {:?}", rows.first()))?;
    ensure(rows[1].starts_with("SV1,") && rows[2].starts_with("SV2,"), "risk rows")?;
    let fit = json(LOGIT_FILE)?;
    for k in ["fixed_parameters", "random_parameters", "ll_converged", "ll_constant", "rho2", "n_obs"] {
        ensure(!fit[k].is_null(), format!("logit_fit lacks {k}"))?;
    }
    for p in fit["random_parameters"].as_array().ok_or("random_parameters")? {
        for k in ["mean", "sd", "positive_share"] {
            ensure(!p[k].is_null(), format!("random parameter lacks {k}"))?;
        }
    }
    let me = json(EFFECTS_FILE)?;
    ensure(me["effects"].as_array().is_some_and(|a| !a.is_empty()), "marginal effects")?;
    let cr = json(CLASSIFIER_JSON)?;
    for m in ["dt", "rf", "svm"] {
        for split in ["train", "test"] {
            for k in ["accuracy", "precision", "recall", "f1"] {
                ensure(cr["models"][m][split][k].is_number(), format!("classifier_report {m}.{split}.{k}"))?;
            }
        }
    }
    let fi = json(IMPORTANCE_JSON)?;
    let fi = fi.as_array().ok_or("feature_importance")?;
    ensure(fi.len() == 8 && fi.iter().all(|r| r["mean"].is_number() && r["sd"].is_number()), "feature importance rows")?;
    Ok(())
}

fn c11_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = demo_config();
    let a = run_pipeline(&cfg, Some(&tmp.path().join("a"))).map_err(|e| e.to_string())?;
    let b = run_pipeline(&cfg, Some(&tmp.path().join("b"))).map_err(|e| e.to_string())?;
    let (ba, bb) = (bundle_bytes(&a.out_dir), bundle_bytes(&b.out_dir));
    let differing: Vec<&String> = ba.keys().filter(|k| ba.get(*k) != bb.get(*k)).collect();
    ensure(ba.len() == bb.len() && differing.is_empty(), format!("differing files {differing:?}"))?;
    check_schemas(&a.out_dir)?;
    let counts = &a.manifest.counts;
    ensure(counts["truth_inward_events"] == counts["inward_events"], "manifest event count vs generator truth")?;
    Ok(format!(
        "{} files identical modulo timestamp; {} scenarios; 5 measures x 16 cells; risk table SV1/SV2 x CLV/TLV/TFV/group",
        ba.len(),
        counts["scenarios"]
    ))
}

fn c12_external_data() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = tmp.path().join("highd");
    let syn_cfg = {
        let mut c = demo_config();
        let spec = tmp.path().join("spec.toml");
        fs::write(&spec, "[traffic]\nepisodes = 150\nspeed_noise = 0.3\n").unwrap();
        c.input.synthetic = Some(spec);
        c
    };
    let recs = load_recordings(&syn_cfg).map_err(|e| e.to_string())?;
    for r in &recs {
        write_recording(r, &RecordingFiles::in_dir(&data_dir, r.id)).map_err(|e| e.to_string())?;
    }
    let mut cfg = syn_cfg.clone();
    cfg.input.synthetic = None;
    cfg.input.highd_dir = Some(data_dir);
    cfg.input.recordings = recs.iter().map(|r| r.id).collect();
    let run = run_pipeline(&cfg, Some(&tmp.path().join("bundle"))).map_err(|e| e.to_string())?;
    let reference = run_pipeline(&syn_cfg, Some(&tmp.path().join("reference"))).map_err(|e| e.to_string())?;
    for f in [EVENTS_FILE, SCENARIOS_FILE] {
        ensure(
            fs::read(run.out_dir.join(f)).unwrap() == fs::read(reference.out_dir.join(f)).unwrap(),
            format!("{f} differs after the CSV round trip"),
        )?;
    }
    check_schemas(&run.out_dir)?;
    Ok(format!(
        "{} HighD-format recordings ingested unmodified, all report layouts schema-checked; dataset-specific counts, cell values, risk shares, estimates and accuracies are not reproduced without the licensed recordings",
        recs.len()
    ))
}

fn main() {
    let t0 = Instant::now();
    let fixtures = {
        let mut f = traffic(50, 2024);
        f.push(scripted_pair(900, 3.0));
        f.push(scripted_pair(901, 9.5));
        f
    };
    let detection_fixtures = &fixtures[..50];
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Check + '_>)> = vec![
        (1, "positive share", Box::new(c1_positive_share)),
        (2, "rho squared", Box::new(c2_rho_squared)),
        (3, "mixed logit recovery", Box::new(c3_recovery)),
        (4, "gradient check", Box::new(c4_gradient)),
        (5, "detection oracle", Box::new(|| c5_detection(detection_fixtures))),
        (6, "mining equivalence", Box::new(|| c6_mining(&fixtures))),
        (7, "risk table oracle", Box::new(|| c7_risk(&fixtures))),
        (8, "tree and forest pattern", Box::new(c8_tree_forest)),
        (9, "metric identity", Box::new(c9_metrics)),
        (10, "kernel and impurity units", Box::new(c10_kernel_gini)),
        (11, "end-to-end determinism", Box::new(c11_determinism)),
        (12, "external data and report layouts", Box::new(c12_external_data)),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, run) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS criterion {id} ({name}): {detail}");
            }
            Err(detail) => {
                let known = KNOWN_DIVERGENT.contains(id);
                println!("FAIL criterion {id} ({name}): {detail}{}", if known { " [known divergence]" } else { "" });
                if !known {
                    unexpected.push(*id);
                }
            }
        }
    }
    println!("acceptance: {passed}/{} passed in {:.1?}", criteria.len(), t0.elapsed());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
