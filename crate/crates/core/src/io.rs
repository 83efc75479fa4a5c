//! CSV and JSON artifacts: draw tables, hierarchical draw files and summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchical::HierDrawSet;
use crate::samplers::{Algorithm, DrawSet, Hyper};

fn write_matrix(path: &Path, prefix: &str, indices: &[usize], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["draw".to_string()];
    header.extend((1..=m.ncols()).map(|k| format!("{prefix}_{k}")));
    w.write_record(&header)?;
    for (i, j) in indices.iter().enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `draw,theta_1,…` with the original draw index of each row.
pub fn write_draws_csv(path: &Path, d: &DrawSet) -> Result<()> {
    write_matrix(path, "theta", &d.kept_indices(), &d.draws)
}

/// Reads a `draw,<name>_1,…` table; the first column is ignored.
pub fn read_draws_csv(path: &Path) -> Result<DrawSet> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r
        .headers()?
        .len()
        .checked_sub(1)
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::Parse(format!(
                "{}: expected a draw column and at least one parameter",
                path.display()
            ))
        })?;
    let mut vals = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields",
                path.display(),
                rows + 1,
                rec.len()
            )));
        }
        for f in rec.iter().skip(1) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}: bad number {f:?}", path.display())))?;
            vals.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty(format!("{} has no draws", path.display())));
    }
    Ok(DrawSet {
        draws: DMatrix::from_row_slice(rows, d, &vals),
        algorithm: Algorithm::External,
        hyper: Hyper::None,
        master_seed: 0,
        n_requested: rows,
        nonconverged: Vec::new(),
    })
}

/// Writes `lambda_tilde.csv`, `lambda_bar.csv` and one `theta_group_<id>.csv`
/// per group into `dir`.
pub fn write_hier_draws(dir: &Path, h: &HierDrawSet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let total = h.n_draws() + h.nonconverged.len();
    let idx: Vec<usize> = (0..total)
        .filter(|j| h.nonconverged.binary_search(j).is_err())
        .collect();
    write_matrix(
        &dir.join("lambda_tilde.csv"),
        "lambda",
        &idx,
        &h.lambda_tilde,
    )?;
    write_matrix(&dir.join("lambda_bar.csv"), "lambda", &idx, &h.lambda_bar)?;
    for (id, m) in h.group_ids.iter().zip(&h.theta_draws) {
        write_matrix(&dir.join(format!("theta_group_{id}.csv")), "theta", &idx, m)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn round_trip_with_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<DVector<f64>> = (0..3)
            .map(|i| DVector::from_vec(vec![i as f64 + 0.1, -1e-300]))
            .collect();
        let mut d = DrawSet::from_rows(&rows, Algorithm::Wlb, Hyper::None, 1).unwrap();
        d.nonconverged = vec![1];
        d.n_requested = 4;
        let p = dir.path().join("d.csv");
        write_draws_csv(&p, &d).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("draw,theta_1,theta_2\n0,"));
        assert!(text.contains("\n2,1.1,"));
        let back = read_draws_csv(&p).unwrap();
        assert_eq!(back.draws, d.draws);
    }

    #[test]
    fn rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "draw,theta_1\n0,abc\n").unwrap();
        assert!(matches!(read_draws_csv(&p), Err(Error::Parse(_))));
        std::fs::write(&p, "draw,theta_1\n").unwrap();
        assert!(matches!(read_draws_csv(&p), Err(Error::Empty(_))));
    }
}
