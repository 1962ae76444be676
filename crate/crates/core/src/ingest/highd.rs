//! HighD-format CSV reader and writer.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    DrivingDirection, FrameSample, IngestError, LaneLayout, Neighbors, Recording, Track,
    VehicleClass, VehicleId,
};

/// Paths of the three files describing one recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingFiles {
    pub tracks: PathBuf,
    pub tracks_meta: PathBuf,
    pub recording_meta: PathBuf,
}

impl RecordingFiles {
    /// The dataset's own naming: `01_tracks.csv`, `01_tracksMeta.csv`, `01_recordingMeta.csv`.
    pub fn in_dir(dir: impl AsRef<Path>, id: u32) -> Self {
        let dir = dir.as_ref();
        RecordingFiles {
            tracks: dir.join(format!("{id:02}_tracks.csv")),
            tracks_meta: dir.join(format!("{id:02}_tracksMeta.csv")),
            recording_meta: dir.join(format!("{id:02}_recordingMeta.csv")),
        }
    }
}

const REQUIRED_TRACK_COLUMNS: [&str; 9] = [
    "frame",
    "id",
    "x",
    "y",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "laneId",
];

const NEIGHBOR_COLUMNS: [&str; 8] = [
    "precedingId",
    "followingId",
    "leftPrecedingId",
    "leftAlongsideId",
    "leftFollowingId",
    "rightPrecedingId",
    "rightAlongsideId",
    "rightFollowingId",
];

const REQUIRED_TRACK_META_COLUMNS: [&str; 5] = ["id", "width", "height", "class", "drivingDirection"];

const REQUIRED_RECORDING_META_COLUMNS: [&str; 5] = [
    "id",
    "frameRate",
    "duration",
    "upperLaneMarkings",
    "lowerLaneMarkings",
];

/// Logical-to-physical column renaming. Logical names are the HighD headers;
/// unmapped names resolve to themselves. In the tracks-meta file `width` is
/// the longitudinal length and `height` the lateral extent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    pub fn resolve<'a>(&'a self, logical: &'a str) -> &'a str {
        self.0.get(logical).map(String::as_str).unwrap_or(logical)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub columns: ColumnMap,
    /// Reject recordings with dangling surrounding-vehicle ids instead of
    /// nulling them.
    pub strict_references: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// `(vehicle, referenced id)` pairs replaced by null.
    pub dangling: Vec<(VehicleId, VehicleId)>,
}

struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, IngestError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: name.clone(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = rdr
            .headers()
            .map_err(|source| IngestError::Csv {
                path: name.clone(),
                source,
            })?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|source| IngestError::Csv {
                path: name.clone(),
                source,
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Table {
            path: name,
            headers,
            rows,
        })
    }

    fn column(&self, physical: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == physical)
    }

    fn require(&self, map: &ColumnMap, logical: &str) -> Result<usize, IngestError> {
        let physical = map.resolve(logical);
        self.column(physical).ok_or_else(|| IngestError::MissingColumn {
            file: self.path.clone(),
            column: physical.to_owned(),
        })
    }

    fn parse_err(&self, line: usize, col: usize, value: &str) -> IngestError {
        IngestError::Parse {
            file: self.path.clone(),
            row: line,
            column: self.headers[col].clone(),
            value: value.to_owned(),
        }
    }

    fn f64_at(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<f64, IngestError> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.parse_err(line, col, raw))
    }

    fn i64_at(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<i64, IngestError> {
        let raw = rec.get(col).unwrap_or("");
        // some exports write integer columns as floats ("3.0")
        raw.parse::<i64>()
            .ok()
            .or_else(|| {
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && v.is_finite())
                    .map(|v| v as i64)
            })
            .ok_or_else(|| self.parse_err(line, col, raw))
    }

    fn markings_at(
        &self,
        line: usize,
        rec: &csv::StringRecord,
        col: usize,
    ) -> Result<Vec<f64>, IngestError> {
        let raw = rec.get(col).unwrap_or("");
        raw.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| self.parse_err(line, col, raw)))
            .collect()
    }
}

fn optional_id(v: i64) -> Option<VehicleId> {
    (v > 0).then_some(v as VehicleId)
}

struct MetaRow {
    length: f64,
    lateral_extent: f64,
    class: VehicleClass,
    direction: DrivingDirection,
}

/// Loads and validates one recording.
pub fn load_recording(
    files: &RecordingFiles,
    options: &LoadOptions,
) -> Result<(Recording, LoadReport), IngestError> {
    let map = &options.columns;

    let rmeta = Table::read(&files.recording_meta)?;
    let cols: Vec<usize> = REQUIRED_RECORDING_META_COLUMNS
        .iter()
        .map(|c| rmeta.require(map, c))
        .collect::<Result<_, _>>()?;
    let (line, rec) = rmeta
        .rows
        .first()
        .ok_or_else(|| IngestError::Invalid(format!("{}: no data row", rmeta.path)))?;
    let rec_id = rmeta.i64_at(*line, rec, cols[0])? as u32;
    let frame_rate = rmeta.f64_at(*line, rec, cols[1])?;
    let duration = rmeta.f64_at(*line, rec, cols[2])?;
    let upper = rmeta.markings_at(*line, rec, cols[3])?;
    let lower = rmeta.markings_at(*line, rec, cols[4])?;
    if !(frame_rate > 0.0) {
        return Err(IngestError::Invalid(format!("frame rate {frame_rate} must be positive")));
    }
    let layout = LaneLayout::new(upper, lower)?;

    let tmeta = Table::read(&files.tracks_meta)?;
    let cols: Vec<usize> = REQUIRED_TRACK_META_COLUMNS
        .iter()
        .map(|c| tmeta.require(map, c))
        .collect::<Result<_, _>>()?;
    let mut metas = BTreeMap::new();
    for (line, rec) in &tmeta.rows {
        let id = tmeta.i64_at(*line, rec, cols[0])? as VehicleId;
        let length = tmeta.f64_at(*line, rec, cols[1])?;
        let lateral_extent = tmeta.f64_at(*line, rec, cols[2])?;
        let class_raw = rec.get(cols[3]).unwrap_or("");
        let class = VehicleClass::parse(class_raw)
            .ok_or_else(|| tmeta.parse_err(*line, cols[3], class_raw))?;
        let dir_code = tmeta.i64_at(*line, rec, cols[4])?;
        let direction = DrivingDirection::from_code(dir_code)
            .ok_or_else(|| tmeta.parse_err(*line, cols[4], &dir_code.to_string()))?;
        if metas
            .insert(
                id,
                MetaRow {
                    length,
                    lateral_extent,
                    class,
                    direction,
                },
            )
            .is_some()
        {
            return Err(IngestError::Invalid(format!("duplicate vehicle id {id} in tracks meta")));
        }
    }

    let tracks_tbl = Table::read(&files.tracks)?;
    let cols: Vec<usize> = REQUIRED_TRACK_COLUMNS
        .iter()
        .map(|c| tracks_tbl.require(map, c))
        .collect::<Result<_, _>>()?;
    let neighbor_cols: Vec<Option<usize>> = NEIGHBOR_COLUMNS
        .iter()
        .map(|c| tracks_tbl.column(map.resolve(c)))
        .collect();

    let mut frames: BTreeMap<VehicleId, Vec<FrameSample>> = BTreeMap::new();
    for (line, rec) in &tracks_tbl.rows {
        let line = *line;
        let frame = tracks_tbl.i64_at(line, rec, cols[0])?;
        if frame < 0 {
            return Err(tracks_tbl.parse_err(line, cols[0], &frame.to_string()));
        }
        let id = tracks_tbl.i64_at(line, rec, cols[1])? as VehicleId;
        let mut neighbors = Neighbors::default();
        for (slot, col) in neighbor_cols.iter().zip(neighbors.ids_mut()) {
            if let Some(c) = slot {
                *col = optional_id(tracks_tbl.i64_at(line, rec, *c)?);
            }
        }
        let sample = FrameSample {
            frame: frame as u32,
            time: frame as f64 / frame_rate,
            x: tracks_tbl.f64_at(line, rec, cols[2])?,
            y: tracks_tbl.f64_at(line, rec, cols[3])?,
            vx: tracks_tbl.f64_at(line, rec, cols[4])?,
            vy: tracks_tbl.f64_at(line, rec, cols[5])?,
            ax: tracks_tbl.f64_at(line, rec, cols[6])?,
            ay: tracks_tbl.f64_at(line, rec, cols[7])?,
            lane_id: tracks_tbl.i64_at(line, rec, cols[8])? as i32,
            neighbors,
        };
        frames.entry(id).or_default().push(sample);
    }

    let mut tracks = BTreeMap::new();
    for (id, frames) in frames {
        let meta = metas.get(&id).ok_or_else(|| IngestError::Integrity {
            vehicle_id: id,
            reason: "no tracks-meta row".into(),
        })?;
        let track = Track {
            vehicle_id: id,
            class: meta.class,
            length: meta.length,
            lateral_extent: meta.lateral_extent,
            direction: meta.direction,
            frame_rate,
            frames,
        };
        track.validate()?;
        tracks.insert(id, track);
    }

    let mut recording = Recording {
        id: rec_id,
        frame_rate,
        duration,
        layout,
        tracks,
    };
    let mut report = LoadReport::default();
    if options.strict_references {
        let dangling = recording.dangling_references();
        if !dangling.is_empty() {
            return Err(IngestError::DanglingReferences(dangling));
        }
    } else {
        report.dangling = recording.null_dangling_references();
    }
    recording.validate()?;
    Ok((recording, report))
}

fn id_field(id: Option<VehicleId>) -> String {
    id.unwrap_or(0).to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| IngestError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn join_markings(m: &[f64]) -> String {
    m.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(";")
}

/// Writes a recording in the HighD schema with six decimal places.
pub fn write_recording(recording: &Recording, files: &RecordingFiles) -> Result<(), IngestError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| IngestError::Io { path, source }
    };

    let mut w = create(&files.recording_meta)?;
    writeln!(w, "id,frameRate,duration,upperLaneMarkings,lowerLaneMarkings")
        .and_then(|_| {
            writeln!(
                w,
                "{},{:.6},{:.6},{},{}",
                recording.id,
                recording.frame_rate,
                recording.duration,
                join_markings(recording.layout.upper_markings()),
                join_markings(recording.layout.lower_markings())
            )
        })
        .and_then(|_| w.flush())
        .map_err(io(&files.recording_meta))?;

    let mut w = create(&files.tracks_meta)?;
    let mut body = String::from("id,width,height,initialFrame,finalFrame,numFrames,class,drivingDirection\n");
    for t in recording.tracks.values() {
        let first = t.frames.first().map_or(0, |f| f.frame);
        let last = t.frames.last().map_or(0, |f| f.frame);
        body.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{}\n",
            t.vehicle_id,
            t.length,
            t.lateral_extent,
            first,
            last,
            t.frames.len(),
            t.class.as_str(),
            t.direction.code()
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io(&files.tracks_meta))?;

    let mut w = create(&files.tracks)?;
    let header = format!(
        "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,{},laneId\n",
        NEIGHBOR_COLUMNS.join(",")
    );
    w.write_all(header.as_bytes()).map_err(io(&files.tracks))?;
    for t in recording.tracks.values() {
        for f in &t.frames {
            let n = f.neighbors.ids().map(id_field).join(",");
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                f.frame, t.vehicle_id, f.x, f.y, f.vx, f.vy, f.ax, f.ay, n, f.lane_id
            )
            .map_err(io(&files.tracks))?;
        }
    }
    w.flush().map_err(io(&files.tracks))?;
    Ok(())
}
