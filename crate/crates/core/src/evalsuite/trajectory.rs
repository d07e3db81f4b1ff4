use std::path::Path;

use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 5] = ["idx", "pred_x", "pred_y", "true_x", "true_y"];

/// Write predicted and true positions, in query order, as CSV.
pub fn export_trajectory(pred: &[[f64; 2]], truth: &[[f64; 2]], path: impl AsRef<Path>) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            axis: "trajectory length",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        w.write_record([
            i.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            t[0].to_string(),
            t[1].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a file written by [`export_trajectory`] into `(pred, truth)`.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header {}", TRAJECTORY_HEADER.join(",")),
        });
    }
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i as u64 + 2;
        let v: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })?;
        if v.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        pred.push([v[0], v[1]]);
        truth.push([v[2], v[3]]);
    }
    Ok((pred, truth))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}
