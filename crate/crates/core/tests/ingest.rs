use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lcstim_core::ingest::*;

/// Two vehicles on lane 6, 100 frames each at 25 Hz; vehicle 2 follows 1.
fn fixture(dir: &Path, mutate: impl Fn(u32, u32, &mut [String; 3])) -> RecordingFiles {
    let files = RecordingFiles::in_dir(dir, 1);
    fs::write(
        &files.recording_meta,
        "id,frameRate,duration,upperLaneMarkings,lowerLaneMarkings\n1,25,4.0,1.0;5.0;9.0;13.0,15.0;19.0;23.0;27.0\n",
    )
    .unwrap();
    fs::write(
        &files.tracks_meta,
        "id,width,height,class,drivingDirection\n1,4.5,1.9,Car,2\n2,12.0,2.5,Truck,2\n",
    )
    .unwrap();
    let mut body = String::from(
        "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,precedingId,followingId,laneId\n",
    );
    for id in [1u32, 2] {
        for k in 0..100u32 {
            let x0 = if id == 1 { 40.0 } else { 10.0 };
            let v = if id == 1 { 30.0 } else { 25.0 };
            let (prec, foll) = if id == 1 { (0, 2) } else { (1, 0) };
            let mut cells = [
                format!("{:.4}", x0 + v * k as f64 / 25.0),
                prec.to_string(),
                foll.to_string(),
            ];
            mutate(id, k, &mut cells);
            writeln!(body, "{k},{id},{},16.0,{v},0,0,0,{},{},6", cells[0], cells[1], cells[2]).unwrap();
        }
    }
    fs::write(&files.tracks, body).unwrap();
    files
}

fn load(files: &RecordingFiles) -> Result<(Recording, LoadReport), IngestError> {
    load_recording(files, &LoadOptions::default())
}

#[test]
fn well_formed_fixture_loads_field_by_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (rec, report) = load(&fixture(tmp.path(), |_, _, _| {})).unwrap();
    assert!(report.dangling.is_empty());
    assert_eq!((rec.id, rec.frame_rate, rec.duration), (1, 25.0, 4.0));
    assert_eq!(rec.tracks.len(), 2);
    let t1 = rec.track(1).unwrap();
    assert_eq!((t1.length, t1.lateral_extent, t1.class), (4.5, 1.9, VehicleClass::Car));
    assert_eq!(t1.direction, DrivingDirection::Dir2);
    assert_eq!(t1.frames.len(), 100);
    let f = &t1.frames[50];
    assert_eq!(f.frame, 50);
    assert!((f.time - 2.0).abs() < 1e-12);
    assert!((f.x - 100.0).abs() < 1e-12);
    assert_eq!((f.y, f.vx, f.lane_id), (16.0, 30.0, 6));
    assert_eq!((f.neighbors.preceding, f.neighbors.following), (None, Some(2)));
    let t2 = rec.track(2).unwrap();
    assert_eq!(t2.class, VehicleClass::Truck);
    assert_eq!(t2.frames[0].neighbors.preceding, Some(1));
    assert_eq!(rec.layout.upper_markings(), &[1.0, 5.0, 9.0, 13.0]);
}

#[test]
fn dangling_reference_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let files = fixture(tmp.path(), |id, k, c| {
        if id == 2 && k == 10 {
            c[1] = "99".into();
        }
    });
    let strict = LoadOptions { strict_references: true, ..Default::default() };
    match load_recording(&files, &strict) {
        Err(IngestError::DanglingReferences(v)) => assert_eq!(v, vec![(2, 99)]),
        other => panic!("expected dangling error, got {other:?}"),
    }
    let (rec, report) = load(&files).unwrap();
    assert_eq!(report.dangling, vec![(2, 99)]);
    assert_eq!(rec.track(2).unwrap().frames[10].neighbors.preceding, None);
}

#[test]
fn backwards_frames_are_an_integrity_error() {
    let tmp = tempfile::tempdir().unwrap();
    let files = fixture(tmp.path(), |_, _, _| {});
    let text = fs::read_to_string(&files.tracks).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(20, 21);
    fs::write(&files.tracks, lines.join("\n") + "\n").unwrap();
    match load(&files) {
        Err(IngestError::Integrity { vehicle_id, .. }) => assert_eq!(vehicle_id, 1),
        other => panic!("expected integrity error, got {other:?}"),
    }
}

#[test]
fn bad_cells_and_columns_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let files = fixture(tmp.path(), |id, k, c| {
        if id == 1 && k == 3 {
            c[0] = "abc".into();
        }
    });
    match load(&files) {
        Err(IngestError::Parse { row, column, value, .. }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (5, "x", "abc"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    let files = fixture(tmp.path(), |_, _, _| {});
    let text = fs::read_to_string(&files.tracks).unwrap().replacen("laneId", "lane", 1);
    fs::write(&files.tracks, &text).unwrap();
    match load(&files) {
        Err(IngestError::MissingColumn { column, .. }) => assert_eq!(column, "laneId"),
        other => panic!("expected missing column, got {other:?}"),
    }
    let mut columns = ColumnMap::default();
    columns.0.insert("laneId".into(), "lane".into());
    load_recording(&files, &LoadOptions { columns, ..Default::default() }).unwrap();
}

#[test]
fn missing_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load(&RecordingFiles::in_dir(tmp.path(), 7)), Err(IngestError::Io { .. })));
}

#[test]
fn synthetic_recording_round_trips_through_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { recordings: vec![], traffic: Some(TrafficPlan::new(3)) };
    for script in spec.scripts(11) {
        let orig = generate_synthetic(&script, 11).unwrap().recording;
        let files = RecordingFiles::in_dir(tmp.path(), orig.id);
        write_recording(&orig, &files).unwrap();
        let (back, report) = load(&files).unwrap();
        assert!(report.dangling.is_empty());
        assert_eq!(back.id, orig.id);
        assert_eq!(back.layout, orig.layout);
        assert_eq!(back.tracks.keys().collect::<Vec<_>>(), orig.tracks.keys().collect::<Vec<_>>());
        for (a, b) in orig.tracks.values().zip(back.tracks.values()) {
            assert_eq!((a.class, a.direction), (b.class, b.direction));
            assert!((a.length - b.length).abs() <= 5e-7);
            assert_eq!(a.frames.len(), b.frames.len());
            for (p, q) in a.frames.iter().zip(&b.frames) {
                assert_eq!((p.frame, p.lane_id, p.neighbors), (q.frame, q.lane_id, q.neighbors));
                for (u, v) in [(p.time, q.time), (p.x, q.x), (p.y, q.y), (p.vx, q.vx), (p.vy, q.vy), (p.ax, q.ax)] {
                    assert!((u - v).abs() <= 5e-7, "{u} vs {v}");
                }
            }
        }
    }
}
