use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{write_file, BopError};
use crate::geometry::{from_row_major, Pose};

const HEADER: [&str; 7] = ["scene_id", "im_id", "obj_id", "score", "R", "t", "time"];

/// One prediction in the BOP-challenge results CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    /// Row-major rotation.
    pub r: [f64; 9],
    /// Translation, mm.
    pub t: [f64; 3],
    /// Seconds spent on the image; `-1` when unknown.
    pub time: f64,
}

impl ResultRow {
    pub fn pose(&self) -> Pose {
        Pose { rotation: from_row_major(&self.r), translation: Vector3::new(self.t[0], self.t[1], self.t[2]) }
    }

    pub fn from_pose(scene_id: u32, im_id: u32, obj_id: u32, score: f64, pose: &Pose, time: f64) -> Self {
        let t = pose.translation;
        Self { scene_id, im_id, obj_id, score, r: pose.rotation_row_major(), t: [t.x, t.y, t.z], time }
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), BopError> {
    let mut out = String::from("scene_id,im_id,obj_id,score,R,t,time\n");
    for (i, r) in rows.iter().enumerate() {
        let finite = r.score.is_finite() && r.time.is_finite() && r.r.iter().chain(&r.t).all(|v| v.is_finite());
        if !finite {
            return Err(BopError::NonFiniteNumber { path: path.to_path_buf(), line: i as u64 + 2, field: "row" });
        }
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.scene_id, r.im_id, r.obj_id, r.score, join(&r.r), join(&r.t), r.time);
    }
    write_file(path, out.as_bytes())
}

fn parse_floats<const N: usize>(cell: &str, field: &'static str, path: &Path, line: u64) -> Result<[f64; N], BopError> {
    let tokens: Vec<&str> = cell.split_whitespace().collect();
    if tokens.len() != N {
        return Err(BopError::FieldCount { path: path.to_path_buf(), line, field, expected: N, got: tokens.len() });
    }
    let mut out = [0.0; N];
    for (o, tok) in out.iter_mut().zip(tokens) {
        *o = parse_float(tok, field, path, line)?;
    }
    Ok(out)
}

fn parse_float(tok: &str, field: &'static str, path: &Path, line: u64) -> Result<f64, BopError> {
    let v: f64 = tok.trim().parse().map_err(|_| BopError::InvalidValue {
        path: path.to_path_buf(),
        line,
        message: format!("field '{field}': '{tok}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(BopError::NonFiniteNumber { path: path.to_path_buf(), line, field });
    }
    Ok(v)
}

fn parse_id(tok: &str, field: &'static str, path: &Path, line: u64) -> Result<u32, BopError> {
    tok.trim().parse().map_err(|_| BopError::InvalidValue {
        path: path.to_path_buf(),
        line,
        message: format!("field '{field}': '{tok}' is not a non-negative integer"),
    })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, BopError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(BopError::MissingFile(path.to_path_buf())),
        Err(e) => return Err(BopError::Io { path: path.to_path_buf(), source: e }),
    };
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| BopError::Csv {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != HEADER {
        return Err(BopError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}, found {}", HEADER.join(","), names.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != HEADER.len() {
            return Err(BopError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} columns, found {}", HEADER.len(), record.len()),
            });
        }
        let score = parse_float(&record[3], "score", path, line)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(BopError::InvalidValue {
                path: path.to_path_buf(),
                line,
                message: format!("score {score} outside [0, 1]"),
            });
        }
        rows.push(ResultRow {
            scene_id: parse_id(&record[0], "scene_id", path, line)?,
            im_id: parse_id(&record[1], "im_id", path, line)?,
            obj_id: parse_id(&record[2], "obj_id", path, line)?,
            score,
            r: parse_floats::<9>(&record[4], "R", path, line)?,
            t: parse_floats::<3>(&record[5], "t", path, line)?,
            time: parse_float(&record[6], "time", path, line)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IDENTITY_ROW: &str = "scene_id,im_id,obj_id,score,R,t,time\n0,3,1,0.9,1 0 0 0 1 0 0 0 1,0 0 1000,-1\n";

    fn write_tmp(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("res.csv");
        std::fs::write(&p, text).unwrap();
        (d, p)
    }

    #[test]
    fn parses_fixture() {
        let (_d, p) = write_tmp(IDENTITY_ROW);
        let rows = read_results(&p).unwrap();
        assert_eq!(
            rows,
            vec![ResultRow {
                scene_id: 0,
                im_id: 3,
                obj_id: 1,
                score: 0.9,
                r: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                t: [0.0, 0.0, 1000.0],
                time: -1.0
            }]
        );
    }

    #[test]
    fn wrong_rotation_arity() {
        let (_d, p) = write_tmp(&IDENTITY_ROW.replace("1 0 0 0 1 0 0 0 1", "1 0 0 0 1 0 0 0"));
        match read_results(&p) {
            Err(BopError::FieldCount { line: 2, field: "R", got: 8, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_score() {
        let (_d, p) = write_tmp(&IDENTITY_ROW.replace("0 0 1000", "0 0 inf"));
        assert!(matches!(read_results(&p), Err(BopError::NonFiniteNumber { field: "t", .. })));
        let (_d, p) = write_tmp(&IDENTITY_ROW.replace(",0.9,", ",1.5,"));
        assert!(matches!(read_results(&p), Err(BopError::InvalidValue { .. })));
        let (_d, p) = write_tmp("a,b\n1,2\n");
        assert!(matches!(read_results(&p), Err(BopError::Csv { .. })));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let (_d, p) = write_tmp("");
        assert!(read_results(&p).unwrap().is_empty());
        let (_d, p) = write_tmp("scene_id,im_id,obj_id,score,R,t,time\n");
        assert!(read_results(&p).unwrap().is_empty());
    }

    #[test]
    fn rewrite_is_idempotent() {
        let (d, p) = write_tmp(&IDENTITY_ROW.replace("0 0 1000", "0.10000 0 1.0e3"));
        let rows = read_results(&p).unwrap();
        let p2 = d.path().join("b.csv");
        let p3 = d.path().join("c.csv");
        write_results(&p2, &rows).unwrap();
        write_results(&p3, &read_results(&p2).unwrap()).unwrap();
        assert_eq!(read_results(&p2).unwrap(), rows);
        assert_eq!(std::fs::read(&p2).unwrap(), std::fs::read(&p3).unwrap());
    }

    proptest! {
        #[test]
        fn numeric_round_trip(vals in proptest::array::uniform12(-1e6f64..1e6), score in 0.0f64..=1.0, time in -1.0f64..10.0) {
            let mut r = [0.0; 9];
            r.copy_from_slice(&vals[..9]);
            let row = ResultRow { scene_id: 4, im_id: 17, obj_id: 2, score, r, t: [vals[9], vals[10], vals[11]], time };
            let d = tempfile::tempdir().unwrap();
            let p = d.path().join("r.csv");
            write_results(&p, &[row, row]).unwrap();
            prop_assert_eq!(read_results(&p).unwrap(), vec![row, row]);
        }
    }
}
