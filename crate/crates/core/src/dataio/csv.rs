//! CSV output shared by every producer: leading `# ` comment lines, one header row, then
//! data rows. Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mlp::MetricsLog;
use crate::pointlab::Trajectory;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    /// Comment lines without the leading `# `.
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as `f64`.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::invalid(format!("no column named {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|e| Error::invalid(format!("column {name}: {e}: {:?}", r[c])))
            })
            .collect()
    }
}

/// Serializes a table to bytes. Every row must have as many fields as the header.
pub fn encode_csv<I, R>(comments: &[String], header: &[String], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = Vec::new();
    for c in comments {
        if c.contains('\n') {
            return Err(Error::invalid("comment lines may not contain newlines"));
        }
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::invalid(format!(
                "row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv: {}", e.error())))
}

pub fn write_csv<I, R>(path: &Path, comments: &[String], header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let bytes = encode_csv(comments, header, rows)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut comments = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        match line.strip_prefix('#') {
            Some(rest) => {
                comments.push(rest.trim_end_matches(['\n', '\r']).trim_start().to_string());
                offset += line.len();
            }
            None => break,
        }
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[offset..]);
    let parse_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64 + e.position().map_or(0, |p| p.byte()),
        message: e.to_string(),
    };
    let header = r
        .headers()
        .map_err(parse_err)?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(parse_err)?;
    Ok(CsvTable {
        comments,
        header,
        rows,
    })
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub const POINTS_HEADER: [&str; 6] = ["step", "point_index", "x", "y", "label", "loss"];

/// One row per point per snapshot. Only 2-D trajectories are accepted.
pub fn write_points_csv(path: &Path, comments: &[String], trajectory: &Trajectory) -> Result<()> {
    let dims = trajectory.first().points.cols();
    if dims != 2 {
        return Err(Error::invalid(format!(
            "points CSV needs 2-D points, got {dims}"
        )));
    }
    let rows = trajectory.snapshots.iter().flat_map(|s| {
        (0..s.points.rows()).map(move |i| {
            vec![
                s.step.to_string(),
                i.to_string(),
                fmt_f64(s.points.get(i, 0)),
                fmt_f64(s.points.get(i, 1)),
                trajectory.labels[i].to_string(),
                fmt_f64(s.loss),
            ]
        })
    });
    write_csv(path, comments, &strings(&POINTS_HEADER), rows)
}

/// `step, train_ce, test_ce, train_acc, test_acc, ent_layer_1.., temp_layer_1..`.
pub fn write_metrics_csv(path: &Path, comments: &[String], log: &MetricsLog) -> Result<()> {
    let rows = log.rows.iter().map(|r| {
        let mut row = vec![
            r.step.to_string(),
            fmt_f64(r.train_ce),
            fmt_f64(r.test_ce),
            fmt_f64(r.train_acc),
            fmt_f64(r.test_acc),
        ];
        row.extend(r.entanglement.iter().map(|&v| fmt_f64(v)));
        row.extend(r.temperatures.iter().map(|&v| fmt_f64(v)));
        row
    });
    write_csv(path, comments, &log.header(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MetricsRow;
    use crate::numkernel::Matrix;
    use crate::pointlab::Snapshot;

    fn metrics(rows: usize) -> MetricsLog {
        MetricsLog {
            layer_count: 3,
            rows: (0..rows)
                .map(|s| MetricsRow {
                    step: s * 10,
                    train_ce: 0.1 + s as f64 / 3.0,
                    test_ce: std::f64::consts::PI,
                    train_acc: 1.0 / 7.0,
                    test_acc: 0.5,
                    entanglement: vec![1e-300, 2.0 / 3.0, 123456.789],
                    temperatures: vec![100.0, f64::MIN_POSITIVE],
                })
                .collect(),
        }
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let log = metrics(3);
        write_metrics_csv(&path, &["config_hash=abc".into()], &log).unwrap();
        let t = read_csv(&path).unwrap();
        assert_eq!(t.comments, vec!["config_hash=abc"]);
        assert_eq!(t.header.len(), 4 + 2 * 3);
        assert_eq!(t.header[5], "ent_layer_1");
        assert_eq!(t.header[8], "temp_layer_1");
        assert_eq!(t.header.last().unwrap(), "temp_layer_2");
        assert_eq!(t.rows.len(), 3);
        assert_eq!(
            t.floats("train_ce").unwrap(),
            vec![0.1, 0.1 + 1.0 / 3.0, 0.1 + 2.0 / 3.0]
        );
        assert_eq!(t.floats("ent_layer_1").unwrap()[0], 1e-300);
        assert_eq!(t.floats("temp_layer_2").unwrap()[0], f64::MIN_POSITIVE);
        assert_eq!(t.floats("test_ce").unwrap()[2], std::f64::consts::PI);
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/empty.csv");
        write_metrics_csv(&path, &[], &metrics(0)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let t = read_csv(&path).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.header.len(), 10);
    }

    #[test]
    fn points_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pts = Matrix::from_rows(&[[0.1, 0.2], [0.3, -0.4]]).unwrap();
        let tr = Trajectory {
            labels: vec![1, 0],
            snapshots: vec![
                Snapshot {
                    step: 0,
                    points: pts.clone(),
                    loss: 0.7,
                    temperature: Some(1.0),
                },
                Snapshot {
                    step: 5,
                    points: pts.scale(2.0),
                    loss: 0.3,
                    temperature: None,
                },
            ],
        };
        write_points_csv(&path, &[], &tr).unwrap();
        let t = read_csv(&path).unwrap();
        assert_eq!(t.header, strings(&POINTS_HEADER));
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[3][..2], ["5".to_string(), "1".to_string()]);
        assert_eq!(t.floats("y").unwrap()[3], -0.8);
        assert_eq!(t.rows[0][4], "1");
        let wide = Trajectory {
            labels: vec![0],
            snapshots: vec![Snapshot {
                step: 0,
                points: Matrix::zeros(1, 3),
                loss: 0.0,
                temperature: None,
            }],
        };
        assert!(write_points_csv(&path, &[], &wide).is_err());
    }

    #[test]
    fn ragged_rows_and_missing_files() {
        let h = strings(&["a", "b"]);
        assert!(encode_csv(&[], &h, [vec!["1".to_string()]]).is_err());
        assert!(encode_csv(&["x\ny".into()], &h, Vec::<Vec<String>>::new()).is_err());
        assert!(matches!(
            read_csv(Path::new("/nonexistent/x.csv")),
            Err(Error::Io { .. })
        ));
    }
}
