//! Single-file cloud formats.
//!
//! CSV frames: header `x,y,z` or `x,y,z,intensity`, one echo per row.
//! Multi-frame CSV: header `scan_id,t,x,y,z[,intensity]`.
//! PLY frames: binary little-endian, `vertex` element with `x,y,z` as
//! float32 or float64; unknown fixed-size properties are skipped, list
//! properties are rejected (they make the vertex stride variable).
//! Labeled output adds a `label` column (`static`/`dynamic`) and a `flags`
//! column (`;`-joined tokens, currently just `out_of_range`); labeled PLY
//! paints vertices as uchar RGB — magenta (255,0,255) for dynamic, gray
//! (128,128,128) for static.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::frame::{Echo, EchoFlags, Label, LabeledFrame, ScanFrame};
use crate::geometry::Vec3;
use crate::scalar::GridScalar;

use super::{parse_err, schema_err};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Csv,
    Ply,
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudFormat::Csv => "csv",
            CloudFormat::Ply => "ply",
        })
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CloudFormat::Csv),
            "ply" => Ok(CloudFormat::Ply),
            other => Err(format!("unknown cloud format {other:?} (csv|ply)")),
        }
    }
}

fn parse_coord<S: GridScalar>(
    field: &str,
    what: &str,
    path: &Path,
    line: usize,
) -> Result<S, DataError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|e| parse_err(path, line, format!("bad {what}: {e}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} must be finite")));
    }
    Ok(S::from_f64_const(v))
}

/// Columns of a frame CSV after the leading `x,y,z`.
fn intensity_column(cols: &[&str], path: &Path) -> Result<bool, DataError> {
    match cols {
        ["x", "y", "z"] => Ok(false),
        ["x", "y", "z", "intensity"] => Ok(true),
        _ => Err(schema_err(
            path,
            "expected header `x,y,z` or `x,y,z,intensity`",
        )),
    }
}

/// One frame from a CSV file. A header-only file is a valid empty frame.
pub fn read_cloud_csv<S: GridScalar>(path: &Path) -> Result<Vec<Echo<S>>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(schema_err(path, "empty file, expected a header row"));
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    let has_intensity = intensity_column(&cols, path)?;
    let width = cols.len();

    let mut echoes = Vec::new();
    for (n, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected {width} fields, got {}", fields.len()),
            ));
        }
        let position = Vec3::new(
            parse_coord(fields[0], "x", path, n + 1)?,
            parse_coord(fields[1], "y", path, n + 1)?,
            parse_coord(fields[2], "z", path, n + 1)?,
        );
        let intensity = if has_intensity && !fields[3].trim().is_empty() {
            Some(parse_coord(fields[3], "intensity", path, n + 1)?)
        } else {
            None
        };
        echoes.push(Echo {
            position,
            intensity,
        });
    }
    Ok(echoes)
}

/// Write one frame as CSV. The `intensity` column appears when any echo
/// carries a value.
pub fn write_cloud_csv<S: GridScalar>(echoes: &[Echo<S>], path: &Path) -> Result<(), DataError> {
    let with_intensity = echoes.iter().any(|e| e.intensity.is_some());
    let mut file = BufWriter::new(fs::File::create(path)?);
    if with_intensity {
        writeln!(file, "x,y,z,intensity")?;
    } else {
        writeln!(file, "x,y,z")?;
    }
    for e in echoes {
        write!(
            file,
            "{},{},{}",
            e.position.x.to_f64_lossy(),
            e.position.y.to_f64_lossy(),
            e.position.z.to_f64_lossy()
        )?;
        if with_intensity {
            match e.intensity {
                Some(i) => writeln!(file, ",{}", i.to_f64_lossy())?,
                None => writeln!(file, ",")?,
            }
        } else {
            writeln!(file)?;
        }
    }
    file.flush()?;
    Ok(())
}

/// A whole sequence from one CSV with header `scan_id,t,x,y,z[,intensity]`.
/// Rows are grouped by scan id; frames come back ordered by scan id with the
/// timestamp of their first row.
pub fn read_multi_frame_csv<S: GridScalar>(path: &Path) -> Result<Vec<ScanFrame<S>>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(schema_err(path, "empty file, expected a header row"));
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    let has_intensity = match cols.as_slice() {
        ["scan_id", "t", "x", "y", "z"] => false,
        ["scan_id", "t", "x", "y", "z", "intensity"] => true,
        _ => {
            return Err(schema_err(
                path,
                "expected header `scan_id,t,x,y,z[,intensity]`",
            ))
        }
    };
    let width = cols.len();

    let mut frames: std::collections::BTreeMap<u64, ScanFrame<S>> = Default::default();
    for (n, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected {width} fields, got {}", fields.len()),
            ));
        }
        let scan_id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, n + 1, format!("bad scan id: {e}")))?;
        let t: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, n + 1, format!("bad timestamp: {e}")))?;
        let position = Vec3::new(
            parse_coord(fields[2], "x", path, n + 1)?,
            parse_coord(fields[3], "y", path, n + 1)?,
            parse_coord(fields[4], "z", path, n + 1)?,
        );
        let intensity = if has_intensity && !fields[5].trim().is_empty() {
            Some(parse_coord(fields[5], "intensity", path, n + 1)?)
        } else {
            None
        };
        frames
            .entry(scan_id)
            .or_insert_with(|| ScanFrame {
                scan_id,
                timestamp: t,
                sensor_origin: Vec3::zero(),
                echoes: Vec::new(),
            })
            .echoes
            .push(Echo {
                position,
                intensity,
            });
    }
    Ok(frames.into_values().collect())
}

fn flags_token(flags: &EchoFlags) -> &'static str {
    if flags.out_of_range {
        "out_of_range"
    } else {
        ""
    }
}

fn parse_flags(field: &str, path: &Path, line: usize) -> Result<EchoFlags, DataError> {
    let mut flags = EchoFlags::default();
    for token in field.split(';') {
        match token.trim() {
            "" => {}
            "out_of_range" => flags.out_of_range = true,
            other => {
                return Err(parse_err(path, line, format!("unknown flag {other:?}")))
            }
        }
    }
    Ok(flags)
}

/// Write a frame with its labels. CSV keeps full float precision and the
/// flags column; PLY trades those for viewer-friendly vertex colors.
pub fn write_labeled_cloud<S: GridScalar>(
    frame: &ScanFrame<S>,
    labeled: &LabeledFrame,
    path: &Path,
    format: CloudFormat,
) -> Result<(), DataError> {
    if frame.echoes.len() != labeled.labels.len() || frame.echoes.len() != labeled.flags.len() {
        return Err(schema_err(
            path,
            format!(
                "frame has {} echoes but {} labels / {} flags",
                frame.echoes.len(),
                labeled.labels.len(),
                labeled.flags.len()
            ),
        ));
    }
    match format {
        CloudFormat::Csv => write_labeled_csv(frame, labeled, path),
        CloudFormat::Ply => write_labeled_ply(frame, labeled, path),
    }
}

fn write_labeled_csv<S: GridScalar>(
    frame: &ScanFrame<S>,
    labeled: &LabeledFrame,
    path: &Path,
) -> Result<(), DataError> {
    let with_intensity = frame.echoes.iter().any(|e| e.intensity.is_some());
    let mut file = BufWriter::new(fs::File::create(path)?);
    if with_intensity {
        writeln!(file, "x,y,z,intensity,label,flags")?;
    } else {
        writeln!(file, "x,y,z,label,flags")?;
    }
    for ((e, label), flags) in frame.echoes.iter().zip(&labeled.labels).zip(&labeled.flags) {
        write!(
            file,
            "{},{},{}",
            e.position.x.to_f64_lossy(),
            e.position.y.to_f64_lossy(),
            e.position.z.to_f64_lossy()
        )?;
        if with_intensity {
            match e.intensity {
                Some(i) => write!(file, ",{}", i.to_f64_lossy())?,
                None => write!(file, ",")?,
            }
        }
        writeln!(file, ",{label},{}", flags_token(flags))?;
    }
    file.flush()?;
    Ok(())
}

/// Read a labeled CSV back: echoes, labels, and flags in file order.
#[allow(clippy::type_complexity)]
pub fn read_labeled_csv<S: GridScalar>(
    path: &Path,
) -> Result<(Vec<Echo<S>>, Vec<Label>, Vec<EchoFlags>), DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(schema_err(path, "empty file, expected a header row"));
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    let has_intensity = match cols.as_slice() {
        ["x", "y", "z", "label", "flags"] => false,
        ["x", "y", "z", "intensity", "label", "flags"] => true,
        _ => {
            return Err(schema_err(
                path,
                "expected header `x,y,z[,intensity],label,flags`",
            ))
        }
    };
    let width = cols.len();

    let mut echoes = Vec::new();
    let mut labels = Vec::new();
    let mut flags = Vec::new();
    for (n, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected {width} fields, got {}", fields.len()),
            ));
        }
        let position = Vec3::new(
            parse_coord(fields[0], "x", path, n + 1)?,
            parse_coord(fields[1], "y", path, n + 1)?,
            parse_coord(fields[2], "z", path, n + 1)?,
        );
        let mut cursor = 3;
        let intensity = if has_intensity {
            let f = fields[cursor].trim();
            cursor += 1;
            if f.is_empty() {
                None
            } else {
                Some(parse_coord(f, "intensity", path, n + 1)?)
            }
        } else {
            None
        };
        let label: Label = fields[cursor]
            .trim()
            .parse()
            .map_err(|e: String| parse_err(path, n + 1, e))?;
        cursor += 1;
        echoes.push(Echo {
            position,
            intensity,
        });
        labels.push(label);
        flags.push(parse_flags(fields[cursor], path, n + 1)?);
    }
    Ok((echoes, labels, flags))
}

const DYNAMIC_RGB: [u8; 3] = [255, 0, 255];
const STATIC_RGB: [u8; 3] = [128, 128, 128];

fn write_labeled_ply<S: GridScalar>(
    frame: &ScanFrame<S>,
    labeled: &LabeledFrame,
    path: &Path,
) -> Result<(), DataError> {
    let mut file = BufWriter::new(fs::File::create(path)?);
    write!(
        file,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        frame.echoes.len()
    )?;
    for (e, label) in frame.echoes.iter().zip(&labeled.labels) {
        file.write_all(&e.position.x.to_f64_lossy().to_le_bytes())?;
        file.write_all(&e.position.y.to_f64_lossy().to_le_bytes())?;
        file.write_all(&e.position.z.to_f64_lossy().to_le_bytes())?;
        let rgb = match label {
            Label::Dynamic => DYNAMIC_RGB,
            Label::Static => STATIC_RGB,
        };
        file.write_all(&rgb)?;
    }
    file.flush()?;
    Ok(())
}

/// Write one unlabeled frame as binary PLY with float64 coordinates.
pub fn write_cloud_ply<S: GridScalar>(echoes: &[Echo<S>], path: &Path) -> Result<(), DataError> {
    let mut file = BufWriter::new(fs::File::create(path)?);
    write!(
        file,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        echoes.len()
    )?;
    for e in echoes {
        file.write_all(&e.position.x.to_f64_lossy().to_le_bytes())?;
        file.write_all(&e.position.y.to_f64_lossy().to_le_bytes())?;
        file.write_all(&e.position.z.to_f64_lossy().to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PropKind {
    F32,
    F64,
    OtherFixed,
}

struct PlyProp {
    name: String,
    kind: PropKind,
    size: usize,
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
    has_list: bool,
}

impl PlyElement {
    fn stride(&self) -> usize {
        self.props.iter().map(|p| p.size).sum()
    }

    fn offset_of(&self, name: &str) -> Option<(usize, PropKind)> {
        let mut off = 0;
        for p in &self.props {
            if p.name == name {
                return Some((off, p.kind));
            }
            off += p.size;
        }
        None
    }
}

fn prop_kind(type_name: &str, path: &Path) -> Result<(PropKind, usize), DataError> {
    Ok(match type_name {
        "float" | "float32" => (PropKind::F32, 4),
        "double" | "float64" => (PropKind::F64, 8),
        "char" | "int8" | "uchar" | "uint8" => (PropKind::OtherFixed, 1),
        "short" | "int16" | "ushort" | "uint16" => (PropKind::OtherFixed, 2),
        "int" | "int32" | "uint" | "uint32" => (PropKind::OtherFixed, 4),
        other => {
            return Err(schema_err(
                path,
                format!("unsupported property type {other:?}"),
            ))
        }
    })
}

fn parse_ply_header(text: &str, path: &Path) -> Result<Vec<PlyElement>, DataError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(schema_err(path, "missing `ply` magic line"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    for line in lines {
        let line = line.trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                let rest: Vec<&str> = words.collect();
                if rest != ["binary_little_endian", "1.0"] {
                    return Err(schema_err(
                        path,
                        "only `format binary_little_endian 1.0` is supported",
                    ));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| schema_err(path, "element without a name"))?;
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| schema_err(path, "element without a count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| schema_err(path, "property before any element"))?;
                let type_name = words
                    .next()
                    .ok_or_else(|| schema_err(path, "property without a type"))?;
                if type_name == "list" {
                    element.has_list = true;
                    continue;
                }
                let (kind, size) = prop_kind(type_name, path)?;
                let name = words
                    .next()
                    .ok_or_else(|| schema_err(path, "property without a name"))?;
                element.props.push(PlyProp {
                    name: name.to_string(),
                    kind,
                    size,
                });
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(schema_err(
                    path,
                    format!("unexpected header keyword {other:?}"),
                ))
            }
            None => {}
        }
    }
    if !saw_format {
        return Err(schema_err(path, "header missing a format line"));
    }
    Ok(elements)
}

fn read_scalar<S: GridScalar>(bytes: &[u8], kind: PropKind) -> S {
    match kind {
        PropKind::F32 => {
            S::from_f64_const(f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64)
        }
        PropKind::F64 => S::from_f64_const(f64::from_le_bytes(bytes[..8].try_into().unwrap())),
        PropKind::OtherFixed => unreachable!("coordinate properties are float32/float64"),
    }
}

/// One frame from a binary little-endian PLY file. The `vertex` element must
/// carry `x,y,z` as float32 or float64; a float `intensity` property is kept,
/// other fixed-size properties are skipped.
pub fn read_cloud_ply<S: GridScalar>(path: &Path) -> Result<Vec<Echo<S>>, DataError> {
    let bytes = fs::read(path)?;
    let header_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .map(|p| p + 11)
        .ok_or_else(|| schema_err(path, "missing `end_header` line"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| schema_err(path, "header is not UTF-8"))?;
    let elements = parse_ply_header(header, path)?;

    let mut cursor = header_end;
    let mut echoes: Option<Vec<Echo<S>>> = None;
    for element in &elements {
        if element.has_list {
            return Err(schema_err(
                path,
                format!(
                    "element {:?} has a list property; only fixed-stride PLY is supported",
                    element.name
                ),
            ));
        }
        let stride = element.stride();
        let data_len = element.count.checked_mul(stride).ok_or_else(|| {
            schema_err(path, format!("element {:?} is implausibly large", element.name))
        })?;
        if bytes.len() < cursor + data_len {
            return Err(parse_err(
                path,
                0,
                format!("unexpected end of file inside element {:?}", element.name),
            ));
        }
        if element.name != "vertex" {
            cursor += data_len;
            continue;
        }

        let coords = ["x", "y", "z"].map(|axis| element.offset_of(axis));
        let [x, y, z] = coords;
        let (Some(x), Some(y), Some(z)) = (x, y, z) else {
            return Err(schema_err(path, "vertex element must carry x, y, z"));
        };
        for (name, (_, kind)) in ["x", "y", "z"].iter().zip([x, y, z]) {
            if kind == PropKind::OtherFixed {
                return Err(schema_err(
                    path,
                    format!("vertex property {name:?} must be float32 or float64"),
                ));
            }
        }
        let intensity = element
            .offset_of("intensity")
            .filter(|(_, kind)| *kind != PropKind::OtherFixed);

        let mut out = Vec::with_capacity(element.count);
        for record in bytes[cursor..cursor + data_len].chunks_exact(stride.max(1)) {
            let position = Vec3::new(
                read_scalar::<S>(&record[x.0..], x.1),
                read_scalar::<S>(&record[y.0..], y.1),
                read_scalar::<S>(&record[z.0..], z.1),
            );
            let intensity = intensity.map(|(off, kind)| read_scalar::<S>(&record[off..], kind));
            out.push(Echo {
                position,
                intensity,
            });
        }
        cursor += data_len;
        echoes = Some(out);
    }
    echoes.ok_or_else(|| schema_err(path, "no vertex element in file"))
}
