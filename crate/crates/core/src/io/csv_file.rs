//! Comma-separated feature tables with one label column.

use std::path::Path;

use ndarray::Array2;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::latent::LatentModel;

/// Which column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name; the file must have a header row.
    Name(String),
    /// 0-based column index.
    Index(usize),
    Last,
}

/// Loads a CSV table. Every column except the label becomes a feature, in
/// file order. The first row is treated as a header when one of its feature
/// cells is not a number (always, when the label is selected by name).
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| csv_error(0, e))?;
    let mut records = reader.records().enumerate();

    let (first_row, first) = match records.next() {
        Some((i, rec)) => (i + 1, rec.map_err(|e| csv_error(i + 1, e))?),
        None => return Err(Error::Csv { row: 1, message: "file is empty".into() }),
    };
    let width = first.len();
    let label_col = match label {
        LabelColumn::Name(name) => first
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv {
                row: 1,
                message: format!("label column '{name}' not found in header"),
            })?,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Csv {
                row: 1,
                message: format!("label column {i} out of range for {width} columns"),
            })
        }
        LabelColumn::Last => width - 1,
    };
    if width < 2 {
        return Err(Error::Csv {
            row: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let has_header = matches!(label, LabelColumn::Name(_))
        || first
            .iter()
            .enumerate()
            .any(|(c, cell)| c != label_col && cell.parse::<f64>().is_err());

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut push = |row: usize, rec: &csv::StringRecord| -> Result<()> {
        if rec.len() != width {
            return Err(Error::Csv {
                row,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_col {
                labels.push(cell.to_string());
            } else {
                let v = cell.parse::<f64>().map_err(|_| Error::Csv {
                    row,
                    message: format!("column {c}: '{cell}' is not a number"),
                })?;
                values.push(v);
            }
        }
        Ok(())
    };
    if !has_header {
        push(first_row, &first)?;
    }
    for (i, rec) in records {
        let rec = rec.map_err(|e| csv_error(i + 1, e))?;
        push(i + 1, &rec)?;
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Csv { row: 2, message: "no data rows".into() });
    }
    let features = Array2::from_shape_vec((n, width - 1), values).map_err(|e| Error::format(e.to_string()))?;
    Dataset::new(features, &labels)
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv {
            row,
            message: format!("{other:?}"),
        },
    }
}

/// Writes `data` with a header `f0,...,f{d-1},label`, using label names.
pub fn save_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_error(0, e))?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_error(0, e))?;
    for (i, &y) in data.labels().iter().enumerate() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(data.label_names()[y].clone());
        w.write_record(&rec).map_err(|e| csv_error(i + 2, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes latent examples with their label, cluster size and margin, one
/// per row, for plotting.
pub fn save_latents_csv(path: impl AsRef<Path>, model: &LatentModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_error(0, e))?;
    let mut header = vec!["latent".to_string(), "label".into(), "members".into(), "margin".into()];
    header.extend((0..model.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_error(0, e))?;
    let sizes = model.cluster_sizes();
    for o in 0..model.len() {
        let mut rec = vec![
            o.to_string(),
            model.label_names.get(model.latent_labels[o]).cloned().unwrap_or_default(),
            sizes[o].to_string(),
            format!("{:?}", model.cluster_margins[o]),
        ];
        rec.extend(model.latents.row(o).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_error(o + 2, e))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_table() {
        let f = file("1,2,a\n3,4,b\n5,6,a\n");
        let data = load_csv(f.path(), &LabelColumn::Last).unwrap();
        assert_eq!((data.len(), data.dim()), (3, 2));
        assert_eq!(data.labels(), &[0, 1, 0]);
        assert_eq!(data.row(1).to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn header_is_detected() {
        let f = file("x,y,class\n1,2,0\n3,4,1\n");
        let data = load_csv(f.path(), &LabelColumn::Index(2)).unwrap();
        assert_eq!(data.len(), 2);
        let data = load_csv(f.path(), &LabelColumn::Name("class".into())).unwrap();
        assert_eq!(data.len(), 2);
    }

    #[test]
    fn label_column_in_the_middle() {
        let f = file("1,cat,2\n3,dog,4\n");
        let data = load_csv(f.path(), &LabelColumn::Index(1)).unwrap();
        assert_eq!(data.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(data.label_names(), &["cat".to_string(), "dog".to_string()]);
    }

    #[test]
    fn missing_label_name() {
        let f = file("x,y,class\n1,2,0\n");
        let err = load_csv(f.path(), &LabelColumn::Name("target".into())).unwrap_err();
        assert!(err.to_string().contains("label column 'target' not found"), "{err}");
    }

    #[test]
    fn ragged_and_non_numeric_rows_report_row_number() {
        let f = file("1,2,a\n3,a\n");
        let err = load_csv(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(matches!(err, Error::Csv { row: 2, .. }), "{err}");
        let f = file("x,y,l\n1,2,a\n3,oops,b\n");
        let err = load_csv(f.path(), &LabelColumn::Last).unwrap_err();
        assert!(matches!(err, Error::Csv { row: 3, .. }), "{err}");
    }

    #[test]
    fn round_trip() {
        let x = ndarray::array![[0.1, 1e-17], [3.0, -2.5]];
        let data = Dataset::new(x, &["b", "a"]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv(f.path(), &data).unwrap();
        let back = load_csv(f.path(), &LabelColumn::Name("label".into())).unwrap();
        assert_eq!(back, data);
    }
}
