//! File formats: point-cloud frames (CSV and binary PLY), odometry logs,
//! labeled output, ground truth, and per-frame stats.
//!
//! Conventions shared by every format: UTF-8, `.` decimal separator, LF
//! line endings, binary PLY little-endian. Echo coordinates are in the
//! sensor frame of their scan with the sensor at the origin. A sequence
//! directory holds one file per frame whose name carries a zero-padded scan
//! index (`frame_000042.csv`), optionally a `timestamps.csv` manifest
//! (`scan_id,t`); without a manifest, timestamps are synthesized at 10 Hz.
//! The reserved names `timestamps.csv` / `odometry.csv` and the `truth_*` /
//! `labeled_*` prefixes are never treated as frame files, so a directory
//! produced by the scene generator or a labeling run can be read back
//! directly.

pub mod cloud;
pub mod odometry;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::DataError;
use crate::frame::{FrameStats, LabeledFrame, ScanFrame};
use crate::scalar::GridScalar;
use crate::synth::{EchoTruth, GroundTruth};

pub use cloud::{
    read_cloud_csv, read_cloud_ply, read_labeled_csv, read_multi_frame_csv, write_cloud_csv,
    write_labeled_cloud, CloudFormat,
};
pub use odometry::{read_odometry, write_odometry};

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn schema_err(path: &Path, msg: impl Into<String>) -> DataError {
    DataError::InconsistentSchema {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Scan index carried by a frame filename: the trailing run of digits in the
/// stem (`frame_000042` → 42).
fn scan_index_from_stem(stem: &str) -> Option<u64> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        None
    } else {
        digits.parse().ok()
    }
}

fn is_reserved_stem(stem: &str) -> bool {
    stem == "timestamps"
        || stem == "odometry"
        || stem.starts_with("truth_")
        || stem.starts_with("labeled_")
}

/// `scan_id,t` manifest.
fn read_timestamps(path: &Path) -> Result<BTreeMap<u64, f64>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if n == 0 {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["scan_id", "t"] {
                return Err(schema_err(path, "expected header `scan_id,t`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, n + 1, "expected 2 fields"));
        }
        let id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, n + 1, format!("bad scan id: {e}")))?;
        let t: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, n + 1, format!("bad timestamp: {e}")))?;
        out.insert(id, t);
    }
    Ok(out)
}

/// Read a point-cloud sequence from a directory of per-frame files (CSV or
/// binary PLY) or from a single multi-frame CSV (header
/// `scan_id,t,x,y,z[,intensity]`). Frames come back ordered by scan index.
pub fn read_point_cloud_sequence<S: GridScalar>(
    path: &Path,
) -> Result<Vec<ScanFrame<S>>, DataError> {
    if path.is_dir() {
        return read_sequence_dir(path);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_multi_frame_csv(path),
        Some("ply") => Ok(vec![ScanFrame {
            scan_id: 0,
            timestamp: 0.0,
            sensor_origin: crate::geometry::Vec3::zero(),
            echoes: read_cloud_ply(path)?,
        }]),
        _ => Err(schema_err(
            path,
            "expected a directory, a .csv, or a .ply path",
        )),
    }
}

fn read_sequence_dir<S: GridScalar>(dir: &Path) -> Result<Vec<ScanFrame<S>>, DataError> {
    let mut frame_files: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let Some(ext) = p.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if ext != "csv" && ext != "ply" {
            continue;
        }
        let Some(stem) = p.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if is_reserved_stem(stem) {
            continue;
        }
        let Some(idx) = scan_index_from_stem(stem) else {
            return Err(schema_err(
                &p,
                "frame filename must end in a zero-padded scan index",
            ));
        };
        if let Some(prev) = frame_files.insert(idx, p.clone()) {
            return Err(schema_err(
                &p,
                format!("duplicate scan index {idx} (also {})", prev.display()),
            ));
        }
    }

    let manifest = dir.join("timestamps.csv");
    let timestamps = if manifest.is_file() {
        Some(read_timestamps(&manifest)?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(frame_files.len());
    for (pos, (idx, p)) in frame_files.into_iter().enumerate() {
        let echoes = match p.extension().and_then(|e| e.to_str()) {
            Some("ply") => read_cloud_ply(&p)?,
            _ => read_cloud_csv(&p)?,
        };
        let timestamp = match &timestamps {
            Some(map) => *map.get(&idx).ok_or_else(|| {
                schema_err(&manifest, format!("no timestamp for scan {idx}"))
            })?,
            // No manifest: synthesize a 10 Hz clock over the file order.
            None => pos as f64 * 0.1,
        };
        frames.push(ScanFrame {
            scan_id: idx,
            timestamp,
            sensor_origin: crate::geometry::Vec3::zero(),
            echoes,
        });
    }
    Ok(frames)
}

fn write_timestamps<S: GridScalar>(
    path: &Path,
    frames: &[ScanFrame<S>],
) -> Result<(), DataError> {
    let mut out = String::from("scan_id,t\n");
    for f in frames {
        out.push_str(&format!("{},{}\n", f.scan_id, f.timestamp));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a generated scene to a directory: `frame_NNNNNN.csv` per frame,
/// `truth_NNNNNN.csv` per frame (`is_dynamic,actor_id`), a `timestamps.csv`
/// manifest, and `odometry.csv`.
pub fn write_scene_outputs<S: GridScalar>(
    dir: &Path,
    frames: &[ScanFrame<S>],
    truth: &GroundTruth,
    odometry: &[crate::ego::OdometrySample<S>],
) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    for (f, ft) in frames.iter().zip(&truth.frames) {
        write_cloud_csv(&f.echoes, &dir.join(format!("frame_{:06}.csv", f.scan_id)))?;
        write_truth_csv(ft, &dir.join(format!("truth_{:06}.csv", f.scan_id)))?;
    }
    write_timestamps(&dir.join("timestamps.csv"), frames)?;
    write_odometry(&dir.join("odometry.csv"), odometry)?;
    Ok(())
}

fn write_truth_csv(truth: &[EchoTruth], path: &Path) -> Result<(), DataError> {
    let mut out = String::from("is_dynamic,actor_id\n");
    for t in truth {
        out.push_str(&format!(
            "{},{}\n",
            u8::from(t.is_dynamic),
            t.actor_id.map(|id| id.to_string()).unwrap_or_default()
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read every `truth_NNNNNN.csv` in a directory, ordered by scan index.
pub fn read_truth_dir(dir: &Path) -> Result<GroundTruth, DataError> {
    let mut files: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let Some(stem) = p.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if !stem.starts_with("truth_") || p.extension().and_then(|e| e.to_str()) != Some("csv")
        {
            continue;
        }
        let Some(idx) = scan_index_from_stem(stem) else {
            return Err(schema_err(&p, "truth filename must carry a scan index"));
        };
        files.insert(idx, p);
    }
    let mut truth = GroundTruth::default();
    for (_, p) in files {
        truth.frames.push(read_truth_csv(&p)?);
    }
    Ok(truth)
}

fn read_truth_csv(path: &Path) -> Result<Vec<EchoTruth>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if n == 0 {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["is_dynamic", "actor_id"] {
                return Err(schema_err(path, "expected header `is_dynamic,actor_id`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, n + 1, "expected 2 fields"));
        }
        let is_dynamic = match fields[0].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    path,
                    n + 1,
                    format!("is_dynamic must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let actor_field = fields[1].trim();
        let actor_id = if actor_field.is_empty() {
            None
        } else {
            Some(actor_field.parse::<u32>().map_err(|e| {
                parse_err(path, n + 1, format!("bad actor id: {e}"))
            })?)
        };
        out.push(EchoTruth {
            is_dynamic,
            actor_id,
        });
    }
    Ok(out)
}

/// Write labeled frames to a directory as `labeled_NNNNNN.csv` (or `.ply`)
/// plus a `timestamps.csv` manifest.
pub fn write_labeled_outputs<S: GridScalar>(
    dir: &Path,
    frames: &[ScanFrame<S>],
    labeled: &[LabeledFrame],
    format: CloudFormat,
) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        CloudFormat::Csv => "csv",
        CloudFormat::Ply => "ply",
    };
    for (f, l) in frames.iter().zip(labeled) {
        write_labeled_cloud(
            f,
            l,
            &dir.join(format!("labeled_{:06}.{ext}", f.scan_id)),
            format,
        )?;
    }
    write_timestamps(&dir.join("timestamps.csv"), frames)?;
    Ok(())
}

/// Read every `labeled_NNNNNN.csv` in a directory, ordered by scan index.
/// Stats are not stored in label files and come back zeroed.
pub fn read_labeled_dir(dir: &Path) -> Result<Vec<LabeledFrame>, DataError> {
    let mut files: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let Some(stem) = p.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if !stem.starts_with("labeled_")
            || p.extension().and_then(|e| e.to_str()) != Some("csv")
        {
            continue;
        }
        let Some(idx) = scan_index_from_stem(stem) else {
            return Err(schema_err(&p, "label filename must carry a scan index"));
        };
        files.insert(idx, p);
    }
    let mut out = Vec::new();
    for (idx, p) in files {
        let (_echoes, labels, flags) = read_labeled_csv::<f64>(&p)?;
        out.push(LabeledFrame {
            scan_id: idx,
            labels,
            flags,
            stats: FrameStats::default(),
        });
    }
    Ok(out)
}

/// Append-style stats export: one JSON object per line, one line per frame.
pub fn write_stats_jsonl(path: &Path, labeled: &[LabeledFrame]) -> Result<(), DataError> {
    #[derive(serde::Serialize)]
    struct Record<'a> {
        scan_id: u64,
        #[serde(flatten)]
        stats: &'a FrameStats,
    }
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for l in labeled {
        let rec = Record {
            scan_id: l.scan_id,
            stats: &l.stats,
        };
        let line = serde_json::to_string(&rec)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(())
}
