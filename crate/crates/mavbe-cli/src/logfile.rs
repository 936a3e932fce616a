//! Canonical CSV log schema and the ground-truth extension.
//!
//! Log header: `t,mx,my,mz,wx,wy,wz,ax,ay,az` with optional `vx,vy,vz`
//! (DVL, m/s) and `gps_x,gps_y` (m) column groups. Optional cells may be
//! empty on any row; they are never zero-filled.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use mavbe::{Attitude, ImuSample, Mat3, Vec3};

use crate::CliError;

const BASE_COLUMNS: [&str; 10] = ["t", "mx", "my", "mz", "wx", "wy", "wz", "ax", "ay", "az"];
const DVL_COLUMNS: [&str; 3] = ["vx", "vy", "vz"];
const GPS_COLUMNS: [&str; 2] = ["gps_x", "gps_y"];

/// Parsed log: IMU samples plus per-row optional DVL and GPS readings
/// (present only when the file carries the columns).
#[derive(Clone, Debug, Default)]
pub struct ParsedLog {
    pub samples: Vec<ImuSample<f64>>,
    pub dvl: Option<Vec<Option<Vec3>>>,
    pub gps: Option<Vec<Option<[f64; 2]>>>,
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64, CliError> {
    cell.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "line {line}: column {column}: malformed number {cell:?}"
        ))
    })
}

fn optional_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>, CliError> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        parse_cell(cell, line, column).map(Some)
    }
}

/// Reads a log, validating the header, every numeric cell, and time
/// monotonicity; errors carry the offending line number.
pub fn parse_log(path: &Path) -> Result<ParsedLog, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?;
    let header = header?;
    let columns: Vec<&str> = header.trim().split(',').collect();
    if columns.len() < BASE_COLUMNS.len() || columns[..10] != BASE_COLUMNS {
        return Err(CliError::Data(format!(
            "bad header: expected it to start with {}",
            BASE_COLUMNS.join(",")
        )));
    }
    let mut expected: Vec<&str> = BASE_COLUMNS.to_vec();
    let has_dvl = columns.len() > 10 && columns[10] == "vx";
    if has_dvl {
        expected.extend(DVL_COLUMNS);
    }
    let has_gps = columns.len() > expected.len() && columns[expected.len()] == "gps_x";
    if has_gps {
        expected.extend(GPS_COLUMNS);
    }
    if columns != expected {
        return Err(CliError::Data(format!(
            "bad header: unsupported column layout {header:?}"
        )));
    }

    let mut log = ParsedLog {
        samples: Vec::new(),
        dvl: has_dvl.then(Vec::new),
        gps: has_gps.then(Vec::new),
    };
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, header is line 1
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected.len() {
            return Err(CliError::Data(format!(
                "line {line_no}: expected {} cells, got {}",
                expected.len(),
                cells.len()
            )));
        }
        let mut v = [0.0; 10];
        for (i, val) in v.iter_mut().enumerate() {
            *val = parse_cell(cells[i], line_no, expected[i])?;
        }
        let t = v[0];
        if let Some(prev) = log.samples.last() {
            if t <= prev.t {
                return Err(CliError::Data(format!(
                    "line {line_no}: timestamp {t} not increasing (previous {})",
                    prev.t
                )));
            }
        }
        log.samples.push(ImuSample {
            t,
            mag: Vec3::new(v[1], v[2], v[3]),
            gyro: Vec3::new(v[4], v[5], v[6]),
            accel: Vec3::new(v[7], v[8], v[9]),
        });
        if let Some(dvl) = log.dvl.as_mut() {
            let vx = optional_cell(cells[10], line_no, "vx")?;
            let vy = optional_cell(cells[11], line_no, "vy")?;
            let vz = optional_cell(cells[12], line_no, "vz")?;
            dvl.push(match (vx, vy, vz) {
                (Some(x), Some(y), Some(z)) => Some(Vec3::new(x, y, z)),
                (None, None, None) => None,
                _ => {
                    return Err(CliError::Data(format!(
                        "line {line_no}: partial DVL row (all of vx,vy,vz or none)"
                    )))
                }
            });
        }
        if let Some(gps) = log.gps.as_mut() {
            let base = if has_dvl { 13 } else { 10 };
            let x = optional_cell(cells[base], line_no, "gps_x")?;
            let y = optional_cell(cells[base + 1], line_no, "gps_y")?;
            gps.push(match (x, y) {
                (Some(x), Some(y)) => Some([x, y]),
                (None, None) => None,
                _ => {
                    return Err(CliError::Data(format!(
                        "line {line_no}: partial GPS row (both of gps_x,gps_y or none)"
                    )))
                }
            });
        }
    }
    if log.samples.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(log)
}

fn push_num(out: &mut String, v: f64) {
    // shortest round-trip formatting keeps write -> parse -> write idempotent
    write!(out, "{v}").expect("string write");
}

/// Writes a log with the optional column groups present only when data is
/// supplied.
pub fn write_log(
    path: &Path,
    samples: &[ImuSample<f64>],
    dvl: Option<&[Option<Vec3>]>,
    gps: Option<&[Option<[f64; 2]>]>,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&BASE_COLUMNS.join(","));
    if dvl.is_some() {
        out.push(',');
        out.push_str(&DVL_COLUMNS.join(","));
    }
    if gps.is_some() {
        out.push(',');
        out.push_str(&GPS_COLUMNS.join(","));
    }
    out.push('\n');

    for (i, s) in samples.iter().enumerate() {
        for (j, v) in [
            s.t, s.mag.x, s.mag.y, s.mag.z, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y,
            s.accel.z,
        ]
        .into_iter()
        .enumerate()
        {
            if j > 0 {
                out.push(',');
            }
            push_num(&mut out, v);
        }
        if let Some(dvl) = dvl {
            match dvl.get(i).copied().flatten() {
                Some(v) => {
                    out.push(',');
                    push_num(&mut out, v.x);
                    out.push(',');
                    push_num(&mut out, v.y);
                    out.push(',');
                    push_num(&mut out, v.z);
                }
                None => out.push_str(",,,"),
            }
        }
        if let Some(gps) = gps {
            match gps.get(i).copied().flatten() {
                Some(p) => {
                    out.push(',');
                    push_num(&mut out, p[0]);
                    out.push(',');
                    push_num(&mut out, p[1]);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// One ground-truth row: rotation, body rate, instrument-frame field, and
/// canonical attitude.
#[derive(Clone, Debug)]
pub struct TruthRow {
    pub t: f64,
    pub rotation: Mat3,
    pub w_t: Vec3,
    pub m_t: Vec3,
    pub attitude: Attitude<f64>,
}

const TRUTH_HEADER: &str =
    "t,r11,r12,r13,r21,r22,r23,r31,r32,r33,wtx,wty,wtz,mtx,mty,mtz,roll,pitch,heading";

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<(), CliError> {
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for r in rows {
        push_num(&mut out, r.t);
        for i in 0..3 {
            for j in 0..3 {
                out.push(',');
                push_num(&mut out, r.rotation[(i, j)]);
            }
        }
        for v in [
            r.w_t.x,
            r.w_t.y,
            r.w_t.z,
            r.m_t.x,
            r.m_t.y,
            r.m_t.z,
            r.attitude.roll,
            r.attitude.pitch,
            r.attitude.heading,
        ] {
            out.push(',');
            push_num(&mut out, v);
        }
        out.push('\n');
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn parse_truth(path: &Path) -> Result<Vec<TruthRow>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line.trim() != TRUTH_HEADER {
                return Err(CliError::Data("bad ground-truth header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 19 {
            return Err(CliError::Data(format!(
                "line {}: expected 19 cells, got {}",
                idx + 1,
                cells.len()
            )));
        }
        let mut v = [0.0; 19];
        for (i, val) in v.iter_mut().enumerate() {
            *val = parse_cell(cells[i], idx + 1, "truth")?;
        }
        rows.push(TruthRow {
            t: v[0],
            rotation: Mat3::new(v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]),
            w_t: Vec3::new(v[10], v[11], v[12]),
            m_t: Vec3::new(v[13], v[14], v[15]),
            attitude: Attitude::new(v[16], v[17], v[18]),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no ground-truth rows",
            path.display()
        )));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64) -> ImuSample<f64> {
        ImuSample {
            t,
            mag: Vec3::new(0.1, -0.2, 0.3),
            gyro: Vec3::new(0.01, 0.02, -0.03),
            accel: Vec3::new(0.0, 0.0, -9.81),
        }
    }

    #[test]
    fn three_rows_parse_to_three_samples() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("three.csv");
        write_log(&path, &[sample(0.0), sample(0.05), sample(0.1)], None, None).unwrap();
        let log = parse_log(&path).unwrap();
        assert_eq!(log.samples.len(), 3);
        assert!(log.dvl.is_none() && log.gps.is_none());
    }

    #[test]
    fn decreasing_time_is_rejected_with_row_number() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_time.csv");
        std::fs::write(
            &path,
            "t,mx,my,mz,wx,wy,wz,ax,ay,az\n\
             0.0,0,0,0,0,0,0,0,0,0\n\
             0.1,0,0,0,0,0,0,0,0,0\n\
             0.05,0,0,0,0,0,0,0,0,0\n",
        )
        .unwrap();
        let msg = parse_log(&path).unwrap_err().to_string();
        assert!(msg.contains("line 4") && msg.contains("not increasing"), "{msg}");
    }

    #[test]
    fn write_parse_write_is_idempotent() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("round1.csv");
        let p2 = dir.join("round2.csv");
        let samples: Vec<ImuSample<f64>> = (0..50)
            .map(|i| ImuSample {
                t: i as f64 * 0.05 + 0.001234567890123,
                mag: Vec3::new(0.1 / 3.0, -2.0 / 7.0, 1e-7),
                gyro: Vec3::new(1e-300, -0.25, 3.7e11),
                accel: Vec3::new(0.0, -9.81, f64::MIN_POSITIVE),
            })
            .collect();
        write_log(&p1, &samples, None, None).unwrap();
        let log = parse_log(&p1).unwrap();
        write_log(&p2, &log.samples, None, None).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "byte-identical round trip"
        );
    }

    #[test]
    fn optional_columns_round_trip_with_gaps() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("optional.csv");
        let samples = vec![sample(0.0), sample(0.05), sample(0.1)];
        let dvl = vec![Some(Vec3::new(1.0, 0.0, 0.0)), None, Some(Vec3::new(0.9, 0.1, 0.0))];
        let gps = vec![Some([0.0, 0.0]), Some([0.05, 0.0]), None];
        write_log(&path, &samples, Some(&dvl), Some(&gps)).unwrap();
        let log = parse_log(&path).unwrap();
        assert_eq!(log.dvl.as_ref().unwrap()[1], None);
        assert_eq!(log.gps.as_ref().unwrap()[2], None);
        assert_eq!(log.dvl.unwrap()[0], Some(Vec3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn malformed_cell_names_line_and_column() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("malformed.csv");
        std::fs::write(
            &path,
            "t,mx,my,mz,wx,wy,wz,ax,ay,az\n0.0,oops,0,0,0,0,0,0,0,0\n",
        )
        .unwrap();
        let msg = parse_log(&path).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("mx"), "{msg}");
    }

    #[test]
    fn empty_file_is_a_data_error() {
        let dir = std::env::temp_dir().join("mavbe_log_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(parse_log(&path), Err(CliError::Data(_))));
        std::fs::write(&path, "t,mx,my,mz,wx,wy,wz,ax,ay,az\n").unwrap();
        assert!(matches!(parse_log(&path), Err(CliError::Data(_))));
    }
}
