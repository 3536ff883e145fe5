//! Comma-separated dataset files.
//!
//! One sample per record: numeric feature cells plus one label cell holding
//! an arbitrary token. The first record is treated as a header when any of
//! its feature cells is not a number.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rmee_core::data::{one_vs_all, Dataset, MultiClassDataset};
use rmee_core::linalg::Matrix;

use crate::error::{BenchError, Result};

/// Which cell of a record holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    /// 0-based index.
    Index(usize),
}

impl LabelColumn {
    fn resolve(self, width: usize) -> Option<usize> {
        match self {
            LabelColumn::Last => width.checked_sub(1),
            LabelColumn::Index(i) if i < width => Some(i),
            LabelColumn::Index(_) => None,
        }
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| BenchError::csv(path, e))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

/// Features and raw label tokens.
pub fn load_multiclass_csv(
    path: impl AsRef<Path>,
    label: LabelColumn,
) -> Result<MultiClassDataset> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let Some(first) = records.first() else {
        return Err(BenchError::Parse {
            path: path.into(),
            row: 1,
            column: 1,
            message: "file has no records".into(),
        });
    };
    let width = first.len();
    let label_col = label.resolve(width).ok_or_else(|| BenchError::Parse {
        path: path.into(),
        row: 1,
        column: width,
        message: format!("label column out of range for {width} columns"),
    })?;
    if width < 2 {
        return Err(BenchError::Parse {
            path: path.into(),
            row: 1,
            column: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let is_header = first
        .iter()
        .enumerate()
        .any(|(j, c)| j != label_col && parse_cell(c).is_none());
    let skip = usize::from(is_header);

    let mut data = Vec::with_capacity((records.len() - skip) * (width - 1));
    let mut classes = Vec::with_capacity(records.len() - skip);
    for (r, rec) in records.iter().enumerate().skip(skip) {
        let row = r + 1;
        if rec.len() != width {
            return Err(BenchError::Parse {
                path: path.into(),
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_col {
                if cell.is_empty() {
                    return Err(BenchError::Parse {
                        path: path.into(),
                        row,
                        column: j + 1,
                        message: "missing label".into(),
                    });
                }
                classes.push(cell.to_string());
            } else {
                let v = parse_cell(cell).ok_or_else(|| BenchError::Parse {
                    path: path.into(),
                    row,
                    column: j + 1,
                    message: if cell.is_empty() {
                        "missing value".to_string()
                    } else {
                        format!("'{cell}' is not a finite number")
                    },
                })?;
                data.push(v);
            }
        }
    }
    if classes.is_empty() {
        return Err(BenchError::Parse {
            path: path.into(),
            row: 1,
            column: 1,
            message: "file has a header but no samples".into(),
        });
    }
    let features = Matrix::from_vec(classes.len(), width - 1, data)?;
    Ok(MultiClassDataset {
        features,
        classes,
        name: dataset_name(path),
    })
}

/// Binary dataset: `positive` becomes label 1, every other token label 0.
pub fn load_csv(path: impl AsRef<Path>, label: LabelColumn, positive: &str) -> Result<Dataset> {
    let multi = load_multiclass_csv(path, label)?;
    let mut ds = one_vs_all(&multi, positive)?;
    ds.name = multi.name;
    Ok(ds)
}

/// A feature matrix without labels; every cell must be numeric. A leading
/// non-numeric record is skipped as a header.
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let skip = usize::from(
        records
            .first()
            .is_some_and(|r| r.iter().any(|c| parse_cell(c).is_none())),
    );
    let width = records.get(skip).map_or(0, |r| r.len());
    let mut data = Vec::new();
    for (r, rec) in records.iter().enumerate().skip(skip) {
        if rec.len() != width {
            return Err(BenchError::Parse {
                path: path.into(),
                row: r + 1,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            data.push(parse_cell(cell).ok_or_else(|| BenchError::Parse {
                path: path.into(),
                row: r + 1,
                column: j + 1,
                message: format!("'{cell}' is not a finite number"),
            })?);
        }
    }
    Ok(Matrix::from_vec(records.len() - skip, width, data)?)
}

/// Writes `x1..xd,label` with labels 0/1 and shortest round-trip floats, so
/// [`load_csv`] with positive token `1` reads the same dataset back.
pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::csv(path, e))?;
    let mut header: Vec<String> = (1..=ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)
        .map_err(|e| BenchError::csv(path, e))?;
    for (row, label) in ds.features.iter_rows().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(|e| BenchError::csv(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// One `probability,label` line per sample.
pub fn write_predictions(probs: &[f64], labels: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| BenchError::io(path, e);
    writeln!(out, "probability,label").map_err(io)?;
    for (p, l) in probs.iter().zip(labels) {
        writeln!(out, "{p:.6},{l}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn header_detection_and_label_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "r,t,diag\n1.0,2,M\n3,4.5,B\n-1,0,M\n");
        let ds = load_csv(&p, LabelColumn::Last, "M").unwrap();
        assert_eq!(ds.labels, vec![1, 0, 1]);
        assert_eq!(ds.features.row(1), &[3.0, 4.5]);
        assert_eq!(ds.name, "a");

        let p = write(dir.path(), "b.csv", "M,1.0,2\nB,3,4.5\n");
        let ds = load_csv(&p, LabelColumn::Index(0), "M").unwrap();
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn rejects_bad_cells_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "a,b,y\n1,2,x\n3,,y\n");
        let err = load_csv(&p, LabelColumn::Last, "x").unwrap_err();
        assert!(
            matches!(
                err,
                BenchError::Parse {
                    row: 3,
                    column: 2,
                    ..
                }
            ),
            "{err}"
        );
        let p = write(dir.path(), "d.csv", "1,2,x\n3,NaN,y\n");
        let err = load_csv(&p, LabelColumn::Last, "x").unwrap_err();
        assert!(
            matches!(
                err,
                BenchError::Parse {
                    row: 2,
                    column: 2,
                    ..
                }
            ),
            "{err}"
        );
        let p = write(dir.path(), "e.csv", "1,2,x\n3,4,y\n");
        assert!(matches!(
            load_csv(&p, LabelColumn::Last, "z"),
            Err(BenchError::Core(_))
        ));
        assert!(matches!(
            load_csv(dir.path().join("missing.csv"), LabelColumn::Last, "x"),
            Err(BenchError::Io { .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_rows(&[[0.1, -2.5e-7], [3.0, 1.0 / 3.0]]).unwrap();
        let ds = Dataset::new("rt", x, vec![0, 1]).unwrap();
        let p = dir.path().join("rt.csv");
        write_dataset_csv(&ds, &p).unwrap();
        let back = load_csv(&p, LabelColumn::Last, "1").unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(load_features_csv(&p).unwrap().cols(), 3);
    }
}
