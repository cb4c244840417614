//! Comma-delimited feature tables.
//!
//! ```text
//! # comment lines start with '#'
//! dim=3,classes=4
//! 2,0.5,-1.25,3
//! -1,0.1,0.2,0.3
//! ```
//!
//! Each data row is a label (`-1` for unlabeled) followed by `dim` values.
//! Values are written in Rust's shortest round-trip form, so a write/load
//! cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DomainDataset, LabeledSet, TargetTruth, UnlabeledSet};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub samples: Tensor2,
    pub labels: Vec<Option<usize>>,
    pub classes: usize,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    pub fn into_source(self) -> Result<LabeledSet> {
        if let Some(i) = self.labels.iter().position(Option::is_none) {
            return Err(Error::Config(format!("source row {i} is unlabeled")));
        }
        LabeledSet::new(
            self.samples,
            self.labels.into_iter().flatten().collect(),
            self.classes,
        )
    }

    /// Training view plus evaluation labels when every row is labeled.
    pub fn into_target(self) -> (UnlabeledSet, Option<TargetTruth>) {
        let truth = self.is_fully_labeled().then(|| {
            TargetTruth::new(
                self.labels.iter().flatten().copied().collect(),
                self.classes,
            )
        });
        (UnlabeledSet::new(self.samples), truth)
    }
}

impl From<&DomainDataset> for FeatureTable {
    fn from(ds: &DomainDataset) -> Self {
        Self {
            samples: ds.samples.clone(),
            labels: ds.labels.iter().map(|&l| Some(l)).collect(),
            classes: ds.classes,
        }
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut classes = None;
    for part in line.split(',') {
        let (k, v) = part.split_once('=')?;
        let v: usize = v.trim().parse().ok()?;
        match k.trim() {
            "dim" => dim = Some(v),
            "classes" => classes = Some(v),
            _ => return None,
        }
    }
    Some((dim?, classes?))
}

pub fn parse_feature_table(text: &str, origin: &str) -> Result<FeatureTable> {
    let err = |line: usize, detail: String| Error::Parse {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut header = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((dim, classes)) = header else {
            header = Some(parse_header(line).ok_or_else(|| {
                err(
                    line_no,
                    format!("expected header 'dim=<d>,classes=<C>', found '{line}'"),
                )
            })?);
            continue;
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(err(
                line_no,
                format!(
                    "expected label and {dim} features, found {} fields",
                    fields.len()
                ),
            ));
        }
        let label: i64 = fields[0]
            .parse()
            .map_err(|_| err(line_no, format!("bad label '{}'", fields[0])))?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 && (l as usize) < classes => Some(l as usize),
            l => return Err(err(line_no, format!("label {l} outside [-1, {classes})"))),
        });
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| err(line_no, format!("bad feature value '{f}'")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite feature value '{f}'")));
            }
            data.push(v);
        }
    }
    let (dim, classes) = header.ok_or_else(|| err(0, "missing header".into()))?;
    Ok(FeatureTable {
        samples: Tensor2::from_vec(labels.len(), dim, data)?,
        labels,
        classes,
    })
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_feature_table(&text, &path.display().to_string())
}

pub fn format_feature_table(table: &FeatureTable) -> String {
    let mut out = String::new();
    writeln!(out, "dim={},classes={}", table.dim(), table.classes).unwrap();
    for (row, label) in table.samples.iter_rows().zip(&table.labels) {
        match label {
            Some(l) => write!(out, "{l}").unwrap(),
            None => out.push_str("-1"),
        }
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_table(path: impl AsRef<Path>, table: &FeatureTable) -> Result<()> {
    fs::write(path, format_feature_table(table))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_rows_with_comments() {
        let text = "# features\ndim=2,classes=3\n0,1.5,2\n# mid\n2,-1,0.25\n-1,3,4\n";
        let t = parse_feature_table(text, "mem").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.labels, vec![Some(0), Some(2), None]);
        assert_eq!(t.samples.row(1), &[-1.0, 0.25]);
        let (u, truth) = t.into_target();
        assert_eq!(u.len(), 3);
        assert!(truth.is_none());
    }

    #[test]
    fn short_row_reports_its_line() {
        let text = "dim=3,classes=2\n0,1,2,3\n1,1,2\n";
        match parse_feature_table(text, "x.csv").unwrap_err() {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "x.csv");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_feature_table("0,1,2\n", "m").is_err());
        assert!(parse_feature_table("dim=1,classes=2\n5,1\n", "m").is_err());
        assert!(parse_feature_table("dim=1,classes=2\n0,abc\n", "m").is_err());
        assert!(parse_feature_table("dim=1,classes=2\n0,NaN\n", "m").is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let samples = Tensor2::from_vec(
            2,
            3,
            vec![
                0.1 + 0.2,
                -1e-300,
                std::f64::consts::PI,
                1.0 / 3.0,
                123456.789,
                -0.0,
            ],
        )
        .unwrap();
        let table = FeatureTable {
            samples,
            labels: vec![Some(1), None],
            classes: 2,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_feature_table(&path, &table).unwrap();
        let back = load_feature_table(&path).unwrap();
        assert_eq!(back, table);
        for (a, b) in back.samples.data().iter().zip(table.samples.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
