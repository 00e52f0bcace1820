//! Odometry logs: CSV with header `t,vx,vy,vz,wx,wy,wz`. One row per
//! sample — timestamp in seconds, linear velocity in m/s, angular velocity
//! in rad/s, both in the sensor frame at that timestamp. Rows must be
//! strictly increasing in `t`.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::ego::OdometrySample;
use crate::error::DataError;
use crate::geometry::Vec3;
use crate::scalar::GridScalar;

use super::{parse_err, schema_err};

const HEADER: [&str; 7] = ["t", "vx", "vy", "vz", "wx", "wy", "wz"];

pub fn read_odometry<S: GridScalar>(path: &Path) -> Result<Vec<OdometrySample<S>>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(schema_err(path, "empty file, expected a header row"));
    };
    let cols: Vec<&str> = header
        .trim_end_matches('\r')
        .split(',')
        .map(str::trim)
        .collect();
    if cols != HEADER {
        return Err(schema_err(path, "expected header `t,vx,vy,vz,wx,wy,wz`"));
    }

    let mut samples: Vec<OdometrySample<S>> = Vec::new();
    for (n, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let mut values = [0.0f64; 7];
        for (i, (field, value)) in fields.iter().zip(values.iter_mut()).enumerate() {
            *value = field.trim().parse().map_err(|e| {
                parse_err(path, n + 1, format!("bad {}: {e}", HEADER[i]))
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    path,
                    n + 1,
                    format!("{} must be finite", HEADER[i]),
                ));
            }
        }
        if let Some(prev) = samples.last() {
            if values[0] <= prev.timestamp {
                return Err(DataError::NonMonotonicTimestamps {
                    path: path.display().to_string(),
                    line: n + 1,
                });
            }
        }
        samples.push(OdometrySample {
            timestamp: values[0],
            v: Vec3::new(
                S::from_f64_const(values[1]),
                S::from_f64_const(values[2]),
                S::from_f64_const(values[3]),
            ),
            w: Vec3::new(
                S::from_f64_const(values[4]),
                S::from_f64_const(values[5]),
                S::from_f64_const(values[6]),
            ),
        });
    }
    Ok(samples)
}

pub fn write_odometry<S: GridScalar>(
    path: &Path,
    samples: &[OdometrySample<S>],
) -> Result<(), DataError> {
    let mut file = BufWriter::new(fs::File::create(path)?);
    writeln!(file, "{}", HEADER.join(","))?;
    for s in samples {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            s.timestamp,
            s.v.x.to_f64_lossy(),
            s.v.y.to_f64_lossy(),
            s.v.z.to_f64_lossy(),
            s.w.x.to_f64_lossy(),
            s.w.y.to_f64_lossy(),
            s.w.z.to_f64_lossy()
        )?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn reads_stationary_and_cruising_rows() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("odometry.csv");
        fs::write(
            &path,
            "t,vx,vy,vz,wx,wy,wz\n\
             0.0,0.0,0.0,0.0,0.0,0.0,0.0\n\
             0.1,8.33,0.0,0.0,0.0,0.0,0.05\n",
        )
        .unwrap();
        let samples: Vec<OdometrySample> = read_odometry(&path).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].timestamp, 0.0);
        assert_eq!(samples[0].v, Vec3::zero());
        assert_eq!(samples[1].v.x, 8.33);
        assert_eq!(samples[1].w.z, 0.05);
    }

    #[test]
    fn rejects_non_monotonic_timestamps() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("odometry.csv");
        fs::write(
            &path,
            "t,vx,vy,vz,wx,wy,wz\n\
             0.0,0,0,0,0,0,0\n\
             0.2,1,0,0,0,0,0\n\
             0.2,2,0,0,0,0,0\n",
        )
        .unwrap();
        match read_odometry::<f64>(&path).unwrap_err() {
            DataError::NonMonotonicTimestamps { line, .. } => assert_eq!(line, 4),
            other => panic!("expected timestamp error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header_and_bad_fields() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("odometry.csv");

        fs::write(&path, "time,vx,vy,vz,wx,wy,wz\n").unwrap();
        assert!(matches!(
            read_odometry::<f64>(&path).unwrap_err(),
            DataError::InconsistentSchema { .. }
        ));

        fs::write(&path, "t,vx,vy,vz,wx,wy,wz\n0.0,0,0,0,0,0\n").unwrap();
        assert!(matches!(
            read_odometry::<f64>(&path).unwrap_err(),
            DataError::Parse { line: 2, .. }
        ));

        fs::write(&path, "t,vx,vy,vz,wx,wy,wz\n0.0,0,nanana,0,0,0,0\n").unwrap();
        assert!(matches!(
            read_odometry::<f64>(&path).unwrap_err(),
            DataError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn round_trips_samples() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("odometry.csv");
        let samples = vec![
            OdometrySample {
                timestamp: 0.0,
                v: Vec3::new(8.333333333333334, -0.25, 0.0),
                w: Vec3::new(0.0, 0.0, 0.1),
            },
            OdometrySample {
                timestamp: 0.1,
                v: Vec3::new(8.0, 0.0, 0.0),
                w: Vec3::zero(),
            },
        ];
        write_odometry(&path, &samples).unwrap();
        let back: Vec<OdometrySample> = read_odometry(&path).unwrap();
        assert_eq!(back, samples);
    }
}
