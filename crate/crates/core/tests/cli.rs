mod common;

use std::fs;
use std::process::{Command, Output};

fn lanewatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanewatch"))
        .args(args)
        .output()
        .unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(ws.path("lanes.cfg"), common::TWO_LANES).unwrap();
        ws
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }
}

#[test]
fn bad_config_exits_1() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.cfg"), "lane a\nquad 0,0 10,0\nblocks 2\nstopline front\n").unwrap();
    fs::write(ws.path("empty.raw"), b"").unwrap();
    let out = lanewatch(&["--config", &ws.path("bad.cfg"), "--input", &ws.path("empty.raw")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg"));

    let out = lanewatch(&["--config", &ws.path("missing.cfg"), "--input", &ws.path("empty.raw")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn truncated_stream_exits_2() {
    let ws = Workspace::new();
    let frames: Vec<_> = common::scripted_stream(31, 2, 1).into_iter().map(|(f, _)| f).collect();
    let mut raw = common::raw_bytes(&frames);
    raw.truncate(raw.len() - 100);
    fs::write(ws.path("short.raw"), raw).unwrap();
    let out = lanewatch(&["--config", &ws.path("lanes.cfg"), "--input", &ws.path("short.raw")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame 1"));
}

#[test]
fn dump_features_and_rank_them() {
    let ws = Workspace::new();
    let stream = common::scripted_stream(32, 20, 2);
    let frames: Vec<_> = stream.iter().map(|(f, _)| f.clone()).collect();
    fs::write(ws.path("in.raw"), common::raw_bytes(&frames)).unwrap();
    let out = lanewatch(&[
        "--config",
        &ws.path("lanes.cfg"),
        "--input",
        &ws.path("in.raw"),
        "--source-fps",
        "5",
        "--target-fps",
        "5",
        "--init-samples",
        "120",
        "--dump-features",
        &ws.path("features.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Ten frames collect, the other ten are reported on stdout.
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 10);

    let dump = fs::read_to_string(ws.path("features.csv")).unwrap();
    let mut lines = dump.lines();
    assert!(lines.next().unwrap().starts_with("# sequence,lane,block,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20 * 12);

    // Split the dump by ground truth and rank.
    let (mut occupied, mut empty) = (String::new(), String::new());
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        let seq: usize = f[0].parse().unwrap();
        let lane = if f[1] == "west" { 0 } else { 1 };
        let block: usize = f[2].parse().unwrap();
        let target = if stream[seq].1[lane][block] { &mut occupied } else { &mut empty };
        target.push_str(row);
        target.push('\n');
    }
    fs::write(ws.path("vehicle.csv"), occupied).unwrap();
    fs::write(ws.path("lane.csv"), empty).unwrap();
    let out = lanewatch(&["--fisher", &ws.path("vehicle.csv"), &ws.path("lane.csv")]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(body.len(), 8);
    assert!(body[0].starts_with("1 "));
    for symbol in ["G(h1)", "B", "M2", "M1"] {
        assert!(table.contains(symbol), "{table}");
    }
}

#[test]
fn fisher_needs_two_rows() {
    let ws = Workspace::new();
    fs::write(ws.path("one.csv"), "0,0,0,0,0,0,0,0\n").unwrap();
    let out = lanewatch(&["--fisher", &ws.path("one.csv"), &ws.path("one.csv")]);
    assert_eq!(out.status.code(), Some(1));
}
