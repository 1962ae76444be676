//! End-to-end orchestration: ingest, detect, mine, analyze, fit, predict and
//! report, each stage reading the previous stage's files from the bundle
//! directory.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{
    evaluate, feature_importance, split_train_test, standardize_split, train_forest_with, train_svm_with,
    train_tree, EvalReport, ForestConfig, Importance, LabeledSet, Model, ModelDocument,
};
use crate::detect::{detect_recording, read_events_csv, write_events_csv, EventRow};
use crate::ingest::{
    generate_synthetic, load_recording, ColumnMap, LaneId, LaneLayout, LoadOptions, Recording, RecordingFiles, SyntheticSpec, VehicleId,
};
use crate::logit::{estimate_with, marginal_effects_with, ChoiceDataset, LogitFit, MarginalEffect};
use crate::mine::{mine_consecutive, read_scenarios_csv, write_scenarios_csv, ScenarioRow};
use crate::utility::{
    comparison_matrix, feature_row, scenario_risk, utility_records, ComparisonMatrix, FeatureRow, Measure, RiskTable,
    UtilityRecord,
};

pub use config::{
    default_logit_spec, ClassifyConfig, DetectionConfig, HighdFiles, InputConfig, ModelKind, PeriodPair,
    PipelineConfig, UtilityConfig,
};

pub const BUNDLE_FORMAT: u32 = 1;
pub const TOOL_NAME: &str = "lcstim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIG_FILE: &str = "config.json";
pub const EVENTS_FILE: &str = "events.csv";
pub const DETECTION_FILE: &str = "detection_summary.json";
pub const TRUTH_FILE: &str = "truth_events.csv";
pub const SCENARIOS_FILE: &str = "scenarios.csv";
pub const UTILITY_FILE: &str = "utility_records.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const RISK_CSV: &str = "risk_table.csv";
pub const RISK_JSON: &str = "risk_table.json";
pub const LOGIT_FILE: &str = "logit_fit.json";
pub const EFFECTS_FILE: &str = "marginal_effects.json";
pub const CLASSIFIER_JSON: &str = "classifier_report.json";
pub const CLASSIFIER_CSV: &str = "classifier_report.csv";
pub const IMPORTANCE_JSON: &str = "feature_importance.json";
pub const IMPORTANCE_CSV: &str = "feature_importance.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Detect,
    Mine,
    Analyze,
    Fit,
    Predict,
    Report,
}

impl Stage {
    pub const RUN_ORDER: [Stage; 6] = [Stage::Detect, Stage::Mine, Stage::Analyze, Stage::Fit, Stage::Predict, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Detect => "detect",
            Stage::Mine => "mine",
            Stage::Analyze => "analyze",
            Stage::Fit => "fit",
            Stage::Predict => "predict",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Bad flags, config or stage input files.
    Usage,
    /// The stage ran and failed.
    Failure,
}

#[derive(Debug, Clone, Error)]
#[error("{} stage: {message}", stage.name())]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn usage(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError { stage, kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn failure(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError { stage, kind: ErrorKind::Failure, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 2,
            ErrorKind::Failure => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn fail(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::failure(stage, e.to_string())
}

fn write_file(stage: Stage, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes).map_err(|e| PipelineError::failure(stage, format!("{name}: {e}")))
}

fn write_json<T: Serialize + ?Sized>(stage: Stage, dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(stage)(&e))?;
    text.push('\n');
    write_file(stage, dir, name, text.as_bytes())
}

fn write_csv<T: Serialize>(stage: Stage, dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| fail(stage)(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| fail(stage)(&e))?;
    write_file(stage, dir, name, &bytes)
}

fn open_input(stage: Stage, dir: &Path, name: &str) -> Result<fs::File> {
    fs::File::open(dir.join(name))
        .map_err(|e| PipelineError::usage(stage, format!("{}: {e}", dir.join(name).display())))
}

fn read_csv<T: for<'de> Deserialize<'de>>(stage: Stage, dir: &Path, name: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(open_input(stage, dir, name)?);
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::usage(stage, format!("{name}: {e}")))
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, dir: &Path, name: &str) -> Result<T> {
    serde_json::from_reader(std::io::BufReader::new(open_input(stage, dir, name)?))
        .map_err(|e| PipelineError::usage(stage, format!("{name}: {e}")))
}

/// Ground truth of one generated lane change, as written to `truth_events.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub recording_id: u32,
    pub vehicle_id: VehicleId,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub inward: bool,
    pub t_center: f64,
    pub t_edge: f64,
    pub t_anchor: f64,
    pub observable: bool,
}

/// Recordings in id order, plus generator truth for synthetic input.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub recordings: Vec<Recording>,
    pub truth: Option<Vec<TruthRow>>,
}

pub fn load_recordings(cfg: &PipelineConfig) -> Result<Vec<Recording>> {
    Ok(load_inputs(cfg)?.recordings)
}

/// Loads or generates every input recording.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let stage = Stage::Ingest;
    let input = &cfg.input;
    let mut recs = Vec::new();
    let mut truth = None;
    if let Some(path) = &input.synthetic {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::failure(stage, format!("{}: {e}", path.display())))?;
        let spec = SyntheticSpec::from_toml(&text).map_err(|e| fail(stage)(&e))?;
        let mut rows = Vec::new();
        for script in spec.scripts(cfg.seed) {
            let syn = generate_synthetic(&script, cfg.seed).map_err(|e| fail(stage)(&e))?;
            rows.extend(syn.truth.iter().map(|t| TruthRow {
                recording_id: syn.recording.id,
                vehicle_id: t.vehicle_id,
                source_lane: t.source_lane,
                target_lane: t.target_lane,
                inward: t.inward,
                t_center: t.t_center,
                t_edge: t.t_edge,
                t_anchor: t.t_anchor,
                observable: t.observable,
            }));
            recs.push(syn.recording);
        }
        rows.sort_by(|a, b| (a.recording_id, a.vehicle_id).cmp(&(b.recording_id, b.vehicle_id)).then(a.t_center.total_cmp(&b.t_center)));
        truth = Some(rows);
    } else {
        let files: Vec<RecordingFiles> = match &input.highd_dir {
            Some(dir) => input.recordings.iter().map(|&id| RecordingFiles::in_dir(dir, id)).collect(),
            None => input
                .highd
                .iter()
                .map(|h| RecordingFiles {
                    tracks: h.tracks.clone(),
                    tracks_meta: h.tracks_meta.clone(),
                    recording_meta: h.recording_meta.clone(),
                })
                .collect(),
        };
        let opts = LoadOptions {
            columns: ColumnMap(input.columns.clone()),
            strict_references: input.strict_references,
        };
        for f in &files {
            recs.push(load_recording(f, &opts).map_err(|e| fail(stage)(&e))?.0);
        }
    }
    if let Some(w) = cfg.detection.road_width {
        for r in &mut recs {
            r.layout = LaneLayout::with_road_width(r.layout.upper_markings().to_vec(), r.layout.lower_markings().to_vec(), w)
                .map_err(|e| fail(stage)(&e))?;
        }
    }
    recs.sort_by_key(|r| r.id);
    if recs.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(PipelineError::failure(stage, "duplicate recording ids"));
    }
    Ok(Inputs { recordings: recs, truth })
}

fn recording(recs: &[Recording], id: u32, stage: Stage) -> Result<&Recording> {
    recs.iter()
        .find(|r| r.id == id)
        .ok_or_else(|| PipelineError::usage(stage, format!("recording {id} not among the inputs")))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub recordings: usize,
    pub vehicles: usize,
    pub events: usize,
    pub inward: usize,
    pub discarded: usize,
    pub rejected_sweeps: usize,
    pub overlaps: usize,
}

pub fn detect_stage(cfg: &PipelineConfig, recs: &[Recording]) -> (Vec<EventRow>, DetectionSummary) {
    let mut rows = Vec::new();
    let mut s = DetectionSummary { recordings: recs.len(), ..Default::default() };
    for r in recs {
        let d = detect_recording(r, cfg.exec);
        s.vehicles += r.tracks.len();
        s.discarded += d.discarded;
        s.rejected_sweeps += d.rejected_sweeps;
        s.overlaps += d.overlaps.len();
        rows.extend(d.events.iter().map(|e| EventRow::new(r.id, e)));
    }
    s.events = rows.len();
    s.inward = rows.iter().filter(|r| r.event().is_inward()).count();
    (rows, s)
}

pub fn write_truth(dir: &Path, rows: &[TruthRow]) -> Result<()> {
    write_csv(Stage::Detect, dir, TRUTH_FILE, rows)
}

pub fn write_detect(dir: &Path, rows: &[EventRow], summary: &DetectionSummary) -> Result<()> {
    let mut buf = Vec::new();
    write_events_csv(rows, &mut buf).map_err(|e| fail(Stage::Detect)(&e))?;
    write_file(Stage::Detect, dir, EVENTS_FILE, &buf)?;
    write_json(Stage::Detect, dir, DETECTION_FILE, summary)
}

pub fn read_events(dir: &Path) -> Result<Vec<EventRow>> {
    read_events_csv(open_input(Stage::Mine, dir, EVENTS_FILE)?)
        .map_err(|e| PipelineError::usage(Stage::Mine, format!("{EVENTS_FILE}: {e}")))
}

pub fn mine_stage(cfg: &PipelineConfig, recs: &[Recording], events: &[EventRow]) -> Result<Vec<ScenarioRow>> {
    let mut by_rec: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for e in events {
        by_rec.entry(e.recording_id).or_default().push(e.event());
    }
    let mut out = Vec::new();
    for (id, evs) in by_rec {
        let rec = recording(recs, id, Stage::Mine)?;
        let mined = mine_consecutive(rec, &evs, &cfg.mining, cfg.exec).map_err(|e| fail(Stage::Mine)(&e))?;
        out.extend(mined.iter().map(|s| ScenarioRow::new(id, s)));
    }
    Ok(out)
}

pub fn write_mine(dir: &Path, rows: &[ScenarioRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_scenarios_csv(rows, &mut buf).map_err(|e| fail(Stage::Mine)(&e))?;
    write_file(Stage::Mine, dir, SCENARIOS_FILE, &buf)
}

pub fn read_scenarios(dir: &Path) -> Result<Vec<ScenarioRow>> {
    read_scenarios_csv(open_input(Stage::Analyze, dir, SCENARIOS_FILE)?)
        .map_err(|e| PipelineError::usage(Stage::Analyze, format!("{SCENARIOS_FILE}: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub records: Vec<UtilityRecord>,
    pub features: Vec<FeatureRow>,
    pub matrices: Vec<ComparisonMatrix>,
    pub risk: RiskTable,
}

pub fn analyze_stage(cfg: &PipelineConfig, recs: &[Recording], scenarios: &[ScenarioRow]) -> Result<Analysis> {
    let stage = Stage::Analyze;
    let opts = cfg.utility.options();
    let resolved = scenarios
        .iter()
        .map(|row| Ok((recording(recs, row.recording_id, stage)?, row.scenario())))
        .collect::<Result<Vec<_>>>()?;
    let per = cfg.exec.map_range(resolved.len(), |k| {
        let (rec, s) = &resolved[k];
        let records = utility_records(rec, s, k, &opts)?;
        let mut features = Vec::with_capacity(16);
        for i in 1..=4 {
            for j in 1..=4 {
                features.push(feature_row(rec, s, k, i, j, &opts)?);
            }
        }
        Ok::<_, crate::utility::UtilityError>((records, features))
    });
    let mut records = Vec::new();
    let mut features = Vec::new();
    for p in per {
        let (r, f) = p.map_err(|e| fail(stage)(&e))?;
        records.extend(r);
        features.extend(f);
    }
    let matrices = Measure::ALL.iter().map(|&m| comparison_matrix(&records, m)).collect();
    let thr = cfg.utility.ttc_threshold;
    let statuses: Vec<_> = resolved
        .iter()
        .map(|(r, s)| (scenario_risk(r, &s.v1, thr), scenario_risk(r, &s.v2, thr)))
        .collect();
    let risk = RiskTable::from_statuses(&statuses, thr);
    Ok(Analysis { records, features, matrices, risk })
}

#[derive(Serialize)]
struct MatrixCsvRow {
    before: usize,
    after: usize,
    cell: String,
    n: usize,
    proportion_positive: Option<f64>,
    mean: Option<f64>,
}

pub fn comparison_file(m: Measure, ext: &str) -> String {
    format!("comparison_{}.{ext}", m.name())
}

pub fn write_analyze(dir: &Path, a: &Analysis) -> Result<()> {
    let stage = Stage::Analyze;
    write_csv(stage, dir, UTILITY_FILE, &a.records)?;
    write_csv(stage, dir, FEATURES_FILE, &a.features)?;
    for m in &a.matrices {
        let rows: Vec<MatrixCsvRow> = (1..=4)
            .flat_map(|i| (1..=4).map(move |j| (i, j)))
            .map(|(i, j)| {
                let c = m.cells[i - 1][j - 1];
                MatrixCsvRow {
                    before: i,
                    after: j,
                    cell: ComparisonMatrix::cell_name(i, j),
                    n: c.n,
                    proportion_positive: c.proportion_positive,
                    mean: c.mean,
                }
            })
            .collect();
        write_csv(stage, dir, &comparison_file(m.measure, "csv"), &rows)?;
        write_json(stage, dir, &comparison_file(m.measure, "json"), &m.to_json())?;
    }
    let mut buf = Vec::new();
    a.risk.write_csv(&mut buf).map_err(|e| fail(stage)(&e))?;
    write_file(stage, dir, RISK_CSV, &buf)?;
    write_json(stage, dir, RISK_JSON, &a.risk)
}

pub fn read_features(dir: &Path, stage: Stage) -> Result<Vec<FeatureRow>> {
    read_csv(stage, dir, FEATURES_FILE)
}

fn pair_rows(features: &[FeatureRow], pair: PeriodPair) -> Vec<FeatureRow> {
    features
        .iter()
        .filter(|f| f.before == pair.before && f.after == pair.after)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub pair: PeriodPair,
    pub fit: LogitFit,
    pub effects: Vec<MarginalEffect>,
}

pub fn fit_stage(cfg: &PipelineConfig, features: &[FeatureRow]) -> Result<FitOutput> {
    let stage = Stage::Fit;
    let pair = cfg.utility.period_pair;
    let data = ChoiceDataset::from_feature_rows(&pair_rows(features, pair)).map_err(|e| fail(stage)(&e))?;
    let fit = estimate_with(&data, &cfg.logit, cfg.exec).map_err(|e| fail(stage)(&e))?;
    let effects = marginal_effects_with(&fit, &data, cfg.exec).map_err(|e| fail(stage)(&e))?;
    Ok(FitOutput { pair, fit, effects })
}

pub fn write_fit(dir: &Path, out: &FitOutput) -> Result<()> {
    let mut report = out.fit.report_json();
    report["period_pair"] = serde_json::json!(out.pair.to_string());
    write_json(Stage::Fit, dir, LOGIT_FILE, &report)?;
    let effects = serde_json::json!({ "period_pair": out.pair.to_string(), "effects": out.effects });
    write_json(Stage::Fit, dir, EFFECTS_FILE, &effects)
}

/// Metric summary without the ROC points (those go to CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: [[usize; 2]; 2],
    pub auc: Option<f64>,
}

impl From<&EvalReport> for Metrics {
    fn from(r: &EvalReport) -> Self {
        Metrics {
            n: r.n,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            confusion: r.confusion,
            auc: r.auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub train: EvalReport,
    pub test: EvalReport,
    pub document: ModelDocument,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutput {
    pub pair: PeriodPair,
    pub labeled: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub outcomes: Vec<ModelOutcome>,
    pub importance: Option<Vec<Importance>>,
}

pub fn predict_stage(cfg: &PipelineConfig, features: &[FeatureRow], models: &[ModelKind]) -> Result<PredictOutput> {
    let stage = Stage::Predict;
    let pair = cfg.utility.period_pair;
    let data = LabeledSet::from_feature_rows(&pair_rows(features, pair)).map_err(|e| fail(stage)(&e))?;
    let (train, test) = split_train_test(&data, cfg.classify.train_fraction, cfg.seed).map_err(|e| fail(stage)(&e))?;
    if test.is_empty() {
        return Err(PipelineError::failure(stage, "test split is empty"));
    }
    let (train, test) = standardize_split(&train, &test);
    let standardizer = train.standardizer.clone();
    let mut outcomes = Vec::new();
    let mut importance = None;
    for &kind in models {
        let model = match kind {
            ModelKind::Dt => Model::Tree(train_tree(&train, &cfg.classify.tree).map_err(|e| fail(stage)(&e))?),
            ModelKind::Rf => {
                let fc = ForestConfig { seed: cfg.seed, ..cfg.classify.forest };
                let f = train_forest_with(&train, &fc, cfg.exec).map_err(|e| fail(stage)(&e))?;
                importance = Some(feature_importance(&f, &train.names));
                Model::Forest(f)
            }
            ModelKind::Svm => Model::Svm(train_svm_with(&train, &cfg.classify.svm, cfg.exec).map_err(|e| fail(stage)(&e))?),
        };
        let c = model.as_classifier();
        outcomes.push(ModelOutcome {
            kind,
            train: evaluate(c, &train),
            test: evaluate(c, &test),
            document: ModelDocument::new(model.clone(), train.names.clone(), standardizer.clone()),
        });
    }
    Ok(PredictOutput {
        pair,
        labeled: data.len(),
        train_size: train.len(),
        test_size: test.len(),
        outcomes,
        importance,
    })
}

#[derive(Serialize)]
struct ReportCsvRow<'a> {
    model: &'a str,
    split: &'a str,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

pub fn roc_file(kind: ModelKind) -> String {
    format!("roc_{}.csv", kind.name())
}

pub fn model_file(kind: ModelKind) -> String {
    format!("model_{}.json", kind.name())
}

pub fn write_predict(dir: &Path, out: &PredictOutput) -> Result<()> {
    let stage = Stage::Predict;
    let mut models = serde_json::Map::new();
    let mut rows = Vec::new();
    for o in &out.outcomes {
        models.insert(
            o.kind.name().into(),
            serde_json::json!({ "train": Metrics::from(&o.train), "test": Metrics::from(&o.test) }),
        );
        for (split, r) in [("train", &o.train), ("test", &o.test)] {
            rows.push(ReportCsvRow {
                model: o.kind.name(),
                split,
                accuracy: r.accuracy,
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
            });
        }
        write_csv(stage, dir, &roc_file(o.kind), &o.test.roc)?;
        let doc = o.document.to_json().map_err(|e| fail(stage)(&e))?;
        write_file(stage, dir, &model_file(o.kind), format!("{doc}\n").as_bytes())?;
    }
    let report = serde_json::json!({
        "period_pair": out.pair.to_string(),
        "labeled": out.labeled,
        "train_size": out.train_size,
        "test_size": out.test_size,
        "models": models,
    });
    write_json(stage, dir, CLASSIFIER_JSON, &report)?;
    write_csv(stage, dir, CLASSIFIER_CSV, &rows)?;
    if let Some(imp) = &out.importance {
        write_json(stage, dir, IMPORTANCE_JSON, imp)?;
        write_csv(stage, dir, IMPORTANCE_CSV, imp)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub bundle_format: u32,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub config_hash: String,
    pub seed: u64,
    pub period_pair: String,
    pub counts: BTreeMap<String, usize>,
    pub stages: BTreeMap<String, StageStatus>,
    pub error: Option<String>,
    /// sha256 of every other bundle file.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn stage_outputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Detect => &[EVENTS_FILE, DETECTION_FILE],
        Stage::Mine => &[SCENARIOS_FILE],
        Stage::Analyze => &[UTILITY_FILE, FEATURES_FILE, RISK_CSV, RISK_JSON],
        Stage::Fit => &[LOGIT_FILE, EFFECTS_FILE],
        Stage::Predict => &[CLASSIFIER_JSON, CLASSIFIER_CSV],
        _ => &[],
    }
}

/// Builds `manifest.json` from the files present in `dir`.
pub fn report_stage(dir: &Path, cfg: &PipelineConfig, failure: Option<&PipelineError>) -> Result<Manifest> {
    let stage = Stage::Report;
    let mut counts = BTreeMap::new();
    if dir.join(DETECTION_FILE).exists() {
        let d: DetectionSummary = read_json(stage, dir, DETECTION_FILE)?;
        counts.insert("recordings".into(), d.recordings);
        counts.insert("vehicles".into(), d.vehicles);
        counts.insert("events".into(), d.events);
        counts.insert("inward_events".into(), d.inward);
        counts.insert("discarded_events".into(), d.discarded);
    }
    if dir.join(TRUTH_FILE).exists() {
        let t: Vec<TruthRow> = read_csv(stage, dir, TRUTH_FILE)?;
        counts.insert("truth_inward_events".into(), t.iter().filter(|r| r.inward && r.observable).count());
    }
    if dir.join(SCENARIOS_FILE).exists() {
        counts.insert("scenarios".into(), read_scenarios(dir)?.len());
    }
    if dir.join(FEATURES_FILE).exists() {
        let f = read_features(dir, stage)?;
        let p = cfg.utility.period_pair;
        counts.insert("utility_records".into(), f.len());
        counts.insert(
            "complete_pair_rows".into(),
            f.iter().filter(|r| r.before == p.before && r.after == p.after && r.complete().is_some()).count(),
        );
    }
    if dir.join(LOGIT_FILE).exists() {
        let v: serde_json::Value = read_json(stage, dir, LOGIT_FILE)?;
        counts.insert("logit_observations".into(), v["n_obs"].as_u64().unwrap_or(0) as usize);
    }
    if dir.join(CLASSIFIER_JSON).exists() {
        let v: serde_json::Value = read_json(stage, dir, CLASSIFIER_JSON)?;
        for k in ["labeled", "train_size", "test_size"] {
            counts.insert(k.into(), v[k].as_u64().unwrap_or(0) as usize);
        }
    }

    let mut stages = BTreeMap::new();
    let mut after_failure = false;
    for s in Stage::RUN_ORDER.iter().filter(|s| **s != Stage::Report) {
        let status = match failure {
            Some(f) if f.stage == *s => {
                after_failure = true;
                StageStatus::Failed
            }
            _ if after_failure => StageStatus::NotRun,
            _ if stage_outputs(*s).iter().all(|f| dir.join(f).exists()) => StageStatus::Complete,
            _ => StageStatus::NotRun,
        };
        stages.insert(s.name().to_string(), status);
    }

    let mut files = BTreeMap::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| fail(stage)(&e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    names.sort();
    for p in names {
        let bytes = fs::read(&p).map_err(|e| fail(stage)(&e))?;
        files.insert(p.file_name().unwrap_or_default().to_string_lossy().into_owned(), sha256_hex(&bytes));
    }

    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        bundle_format: BUNDLE_FORMAT,
        generated_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config_hash: sha256_hex(cfg.canonical_json().as_bytes()),
        seed: cfg.seed,
        period_pair: cfg.utility.period_pair.to_string(),
        counts,
        stages,
        error: failure.map(ToString::to_string),
        files,
    };
    write_json(stage, dir, MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

/// Prepares the bundle directory and records the effective config.
pub fn init_bundle(dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::failure(Stage::Config, format!("{}: {e}", dir.display())))?;
    write_json(Stage::Config, dir, CONFIG_FILE, cfg)
}

/// Reads the config recorded in a bundle.
pub fn bundle_config(dir: &Path) -> Result<PipelineConfig> {
    read_json(Stage::Config, dir, CONFIG_FILE)
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// Runs every stage into `out_dir` (or the config's `out_dir`).
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| PipelineError::usage(Stage::Config, "no output directory"))?;
    let inputs = load_inputs(cfg)?;
    let recs = &inputs.recordings;
    init_bundle(&dir, cfg)?;
    let result = (|| {
        if let Some(t) = &inputs.truth {
            write_truth(&dir, t)?;
        }
        let (events, summary) = detect_stage(cfg, recs);
        write_detect(&dir, &events, &summary)?;
        let scenarios = mine_stage(cfg, recs, &read_events(&dir)?)?;
        write_mine(&dir, &scenarios)?;
        let analysis = analyze_stage(cfg, recs, &read_scenarios(&dir)?)?;
        write_analyze(&dir, &analysis)?;
        let features = read_features(&dir, Stage::Fit)?;
        write_fit(&dir, &fit_stage(cfg, &features)?)?;
        write_predict(&dir, &predict_stage(cfg, &features, &cfg.classify.models)?)?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            let manifest = report_stage(&dir, cfg, None)?;
            Ok(RunReport { out_dir: dir, manifest })
        }
        Err(e) => {
            report_stage(&dir, cfg, Some(&e))?;
            Err(e)
        }
    }
}
