//! Line-oriented dataset files.
//!
//! ```text
//! #affect-v1 dim=512
//! id,e1,...,e512,au,ce,v,a
//! ```
//!
//! `au` is twelve `0`/`1` characters, `ce` a digit 0-6, `v`/`a` decimals; any
//! of them may be `-` for a missing label. Valence and arousal are present or
//! missing together.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{format_au, parse_au, Emotion, LabelSet, Va};
use crate::numeric::Matrix;

pub const HEADER_TAG: &str = "#affect-v1";
pub const MISSING: &str = "-";

#[derive(Debug, Clone, PartialEq)]
pub struct AffectRecord {
    pub id: String,
    pub embedding: Vec<f64>,
    pub labels: LabelSet,
}

/// Embeddings and labels gathered for one forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub embeddings: Matrix,
    pub labels: Vec<LabelSet>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().any(|l| !l.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<AffectRecord>,
}

fn validate_record(r: &AffectRecord, dim: usize) -> std::result::Result<(), String> {
    if r.id.is_empty() || r.id.contains([',', '\n', '\r']) || r.id.starts_with('#') {
        return Err(format!("invalid record id `{}`", r.id));
    }
    if r.embedding.len() != dim {
        return Err(format!(
            "record `{}` has {} embedding values, header says {dim}",
            r.id,
            r.embedding.len()
        ));
    }
    if let Some(i) = r.embedding.iter().position(|v| !v.is_finite()) {
        return Err(format!("record `{}` has non-finite embedding entry {i}", r.id));
    }
    if let Some(va) = r.labels.va {
        Va::new(va.valence, va.arousal).map_err(|e| format!("record `{}`: {e}", r.id))?;
    }
    Ok(())
}

impl Dataset {
    pub fn new(dim: usize, records: Vec<AffectRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be >= 1".into()));
        }
        for r in &records {
            validate_record(r, dim).map_err(Error::Validation)?;
        }
        Ok(Self { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AffectRecord] {
        &self.records
    }

    /// Label edits only; embeddings and ids stay validated.
    pub fn labels_mut(&mut self) -> impl Iterator<Item = &mut LabelSet> {
        self.records.iter_mut().map(|r| &mut r.labels)
    }

    pub fn into_records(self) -> Vec<AffectRecord> {
        self.records
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.records[i].embedding);
            labels.push(self.records[i].labels);
        }
        Batch {
            embeddings: Matrix::from_vec(indices.len(), self.dim, data).expect("validated widths"),
            labels,
        }
    }

    pub fn full_batch(&self) -> Batch {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    /// Per-track label counts `(au, ce, va)`.
    pub fn label_counts(&self) -> (usize, usize, usize) {
        self.records.iter().fold((0, 0, 0), |(a, c, v), r| {
            (
                a + r.labels.au.is_some() as usize,
                c + r.labels.ce.is_some() as usize,
                v + r.labels.va.is_some() as usize,
            )
        })
    }

    pub fn has_any_label(&self) -> bool {
        self.records.iter().any(|r| !r.labels.is_empty())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * (self.dim * 20 + 40));
        let _ = writeln!(s, "{HEADER_TAG} dim={}", self.dim);
        for r in &self.records {
            s.push_str(&r.id);
            for v in &r.embedding {
                let _ = write!(s, ",{v}");
            }
            s.push(',');
            match &r.labels.au {
                Some(bits) => s.push_str(&format_au(bits)),
                None => s.push_str(MISSING),
            }
            s.push(',');
            match r.labels.ce {
                Some(ce) => {
                    let _ = write!(s, "{}", ce.index());
                }
                None => s.push_str(MISSING),
            }
            match r.labels.va {
                Some(va) => {
                    let _ = write!(s, ",{},{}", va.valence, va.arousal);
                }
                None => {
                    let _ = write!(s, ",{MISSING},{MISSING}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses dataset text; `source` names the input in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let dim = parse_header(header).map_err(|m| err(1, m))?;

        let mut records = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_row(line, dim).map_err(|m| err(lineno, m))?;
            validate_record(&record, dim).map_err(|m| err(lineno, m))?;
            records.push(record);
        }
        Ok(Self { dim, records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> std::result::Result<usize, String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(HEADER_TAG) {
        return Err(format!("expected header `{HEADER_TAG} dim=<n>`"));
    }
    let dim = parts
        .next()
        .and_then(|p| p.strip_prefix("dim="))
        .ok_or("header is missing `dim=<n>`")?;
    let dim: usize = dim.parse().map_err(|_| format!("bad dimension `{dim}`"))?;
    if dim == 0 {
        return Err("dimension must be >= 1".into());
    }
    if parts.next().is_some() {
        return Err("unexpected trailing header fields".into());
    }
    Ok(dim)
}

fn parse_row(line: &str, dim: usize) -> std::result::Result<AffectRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let expected = dim + 5;
    if fields.len() != expected {
        return Err(format!("expected {expected} fields, found {}", fields.len()));
    }
    let id = fields[0].to_owned();
    let embedding = fields[1..=dim]
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.parse::<f64>()
                .map_err(|_| format!("embedding value {} `{f}` is not a number", i + 1))
        })
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let (au, ce, v, a) = (fields[dim + 1], fields[dim + 2], fields[dim + 3], fields[dim + 4]);

    let au = match au {
        MISSING => None,
        s => Some(parse_au(s).map_err(|e| e.to_string())?),
    };
    let ce = match ce {
        MISSING => None,
        s => Some(s.parse::<Emotion>().map_err(|e| e.to_string())?),
    };
    let va = match (v, a) {
        (MISSING, MISSING) => None,
        (MISSING, _) | (_, MISSING) => {
            return Err("valence and arousal must both be present or both `-`".into())
        }
        (v, a) => {
            let num = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map_err(|_| format!("{what} `{s}` is not a number"))
            };
            Some(Va::new(num(v, "valence")?, num(a, "arousal")?).map_err(|e| e.to_string())?)
        }
    };
    Ok(AffectRecord {
        id,
        embedding,
        labels: LabelSet { au, ce, va },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_ROW: &str = "#affect-v1 dim=3\nr0,0.5,-1.25,3,101010101010,4,0.25,-0.5\n";

    #[test]
    fn fully_labelled_row() {
        let d = Dataset::parse(ONE_ROW, "t").unwrap();
        assert_eq!(d.len(), 1);
        let r = &d.records()[0];
        assert_eq!(r.embedding, vec![0.5, -1.25, 3.0]);
        assert!(r.labels.au.unwrap()[0]);
        assert_eq!(r.labels.ce, Some(Emotion::Happiness));
        assert_eq!(r.labels.va.unwrap().arousal, -0.5);
    }

    #[test]
    fn missing_sentinels() {
        let d = Dataset::parse("#affect-v1 dim=1\nx,0,-,-,-,-\n", "t").unwrap();
        assert!(d.records()[0].labels.is_empty());
        assert!(!d.has_any_label());
        let d = Dataset::parse("#affect-v1 dim=1\nx,0,-,2,-,-\n", "t").unwrap();
        assert!(d.records()[0].labels.au.is_none());
        assert_eq!(d.label_counts(), (0, 1, 0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "#affect-v1 dim=2\na,1,2,-,-,-,-\nb,1,-,-,-,-\n";
        match Dataset::parse(text, "f.csv").unwrap_err() {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "f.csv");
            }
            other => panic!("{other}"),
        }
        let out_of_range = "#affect-v1 dim=1\na,1,-,-,1.5,0\n";
        let e = Dataset::parse(out_of_range, "t").unwrap_err();
        assert!(e.to_string().contains("valence"), "{e}");
        assert!(Dataset::parse("#affect-v2 dim=1\n", "t").is_err());
        assert!(Dataset::parse("#affect-v1 dim=1\na,1,1x0000000000,-,-,-\n", "t").is_err());
        assert!(Dataset::parse("#affect-v1 dim=1\na,1,-,7,-,-\n", "t").is_err());
        assert!(Dataset::parse("#affect-v1 dim=1\na,1,-,-,0.1,-\n", "t").is_err());
        assert!(Dataset::parse("#affect-v1 dim=1\na,NaN,-,-,-,-\n", "t").is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let mut rng = crate::numeric::RngState::new(1);
        let records = (0..5)
            .map(|i| AffectRecord {
                id: format!("s{i}"),
                embedding: (0..4).map(|_| rng.normal() * 1e-3).collect(),
                labels: LabelSet {
                    au: (i % 2 == 0).then(|| std::array::from_fn(|k| (k + i) % 3 == 0)),
                    ce: (i % 3 != 0).then(|| Emotion::ALL[i]),
                    va: Some(Va::new(rng.uniform(-1.0, 1.0), 1.0 / 3.0).unwrap()),
                },
            })
            .collect();
        let d = Dataset::new(4, records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.records().iter().zip(d.records()) {
            for (x, y) in a.embedding.iter().zip(&b.embedding) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.to_text(), d.to_text());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            Dataset::load("/nonexistent/affect.csv").unwrap_err(),
            Error::Io { .. }
        ));
    }
}
