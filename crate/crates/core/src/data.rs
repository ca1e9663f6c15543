//! LETOR-style ranking datasets.
//!
//! A file holds one query-document pair per line:
//!
//! ```text
//! REL qid:QID FID:VALUE FID:VALUE ... #optional comment
//! ```
//!
//! Feature ids are 1-based and strictly increasing within a line; ids that a
//! line omits are read as `0.0`. Samples of a query must be contiguous.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One query-document pair as it appears in a file.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub relevance: u32,
    pub query_id: u64,
    pub features: Vec<f64>,
    /// Trailing `#` comment, kept verbatim (LETOR stores the document id there).
    pub doc_id: Option<String>,
}

/// Borrowed view of a sample stored inside a [`Dataset`].
#[derive(Clone, Copy, Debug)]
pub struct SampleRef<'a> {
    pub relevance: u32,
    pub query_id: u64,
    pub features: &'a [f64],
    pub doc_id: Option<&'a str>,
}

impl SampleRef<'_> {
    pub fn to_sample(&self) -> Sample {
        Sample {
            relevance: self.relevance,
            query_id: self.query_id,
            features: self.features.to_vec(),
            doc_id: self.doc_id.map(str::to_owned),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryGroup {
    pub query_id: u64,
    pub range: Range<usize>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Query-grouped samples with a dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    relevance: Vec<u32>,
    query_ids: Vec<u64>,
    doc_ids: Vec<Option<String>>,
    features: Vec<f64>,
    dimension: usize,
    queries: Vec<QueryGroup>,
    active: Vec<bool>,
}

impl Dataset {
    /// Builds a dataset from samples in order. Every feature vector is padded
    /// with zeros to `dimension` (or to the longest vector when `None`).
    pub fn from_samples(samples: Vec<Sample>, dimension: Option<usize>) -> Result<Self> {
        let longest = samples.iter().map(|s| s.features.len()).max().unwrap_or(0);
        let dimension = match dimension {
            Some(d) if d < longest => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: longest,
                })
            }
            Some(d) => d,
            None => longest,
        };

        let n = samples.len();
        let mut relevance = Vec::with_capacity(n);
        let mut query_ids = Vec::with_capacity(n);
        let mut doc_ids = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n * dimension);
        for s in samples {
            relevance.push(s.relevance);
            query_ids.push(s.query_id);
            doc_ids.push(s.doc_id);
            features.extend_from_slice(&s.features);
            features.resize(features.len() + dimension - s.features.len(), 0.0);
        }
        let queries = group_queries(&query_ids)?;
        let mut dataset = Dataset {
            relevance,
            query_ids,
            doc_ids,
            features,
            dimension,
            queries,
            active: Vec::new(),
        };
        dataset.active = dataset.compute_active();
        Ok(dataset)
    }

    pub fn empty(dimension: usize) -> Self {
        Dataset {
            relevance: Vec::new(),
            query_ids: Vec::new(),
            doc_ids: Vec::new(),
            features: Vec::new(),
            dimension,
            queries: Vec::new(),
            active: vec![false; dimension],
        }
    }

    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn queries(&self) -> &[QueryGroup] {
        &self.queries
    }

    pub fn relevance(&self, i: usize) -> u32 {
        self.relevance[i]
    }

    pub fn relevances(&self) -> &[u32] {
        &self.relevance
    }

    pub fn query_id(&self, i: usize) -> u64 {
        self.query_ids[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Row-major `n × d` feature matrix.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> SampleRef<'_> {
        SampleRef {
            relevance: self.relevance[i],
            query_id: self.query_ids[i],
            features: self.features(i),
            doc_id: self.doc_ids[i].as_deref(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = SampleRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// `active_features()[j]` is false iff feature `j` is zero in every sample.
    pub fn active_features(&self) -> &[bool] {
        &self.active
    }

    pub fn num_active_features(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn compute_active(&self) -> Vec<bool> {
        let mut active = vec![false; self.dimension];
        for row in self.features.chunks_exact(self.dimension.max(1)) {
            for (a, &x) in active.iter_mut().zip(row) {
                *a |= x != 0.0;
            }
        }
        active
    }

    /// Widens the feature space to `dimension`, filling new columns with zeros.
    pub fn with_dimension(&self, dimension: usize) -> Result<Dataset> {
        if dimension < self.dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: self.dimension,
            });
        }
        if dimension == self.dimension {
            return Ok(self.clone());
        }
        let mut features = Vec::with_capacity(self.len() * dimension);
        for i in 0..self.len() {
            features.extend_from_slice(self.features(i));
            features.resize((i + 1) * dimension, 0.0);
        }
        let mut active = self.active.clone();
        active.resize(dimension, false);
        Ok(Dataset {
            features,
            dimension,
            active,
            ..self.clone()
        })
    }

    /// Concatenates datasets that share no query id.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let dimension = parts.iter().map(|p| p.dimension).max().unwrap_or(0);
        let samples = parts
            .iter()
            .flat_map(|p| {
                p.samples().map(|s| Sample {
                    relevance: s.relevance,
                    query_id: s.query_id,
                    features: s.features.to_vec(),
                    doc_id: s.doc_id.map(str::to_owned),
                })
            })
            .collect();
        Dataset::from_samples(samples, Some(dimension))
    }

    /// Rescales every feature to `[0, 1]` independently within each query.
    /// A feature that is constant within a query maps to 0 for that query.
    pub fn normalize_query_minmax(&self) -> Dataset {
        let d = self.dimension;
        let mut features = self.features.clone();
        for q in &self.queries {
            for j in 0..d {
                let column = q.range.clone().map(|i| features[i * d + j]);
                let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
                let span = hi - lo;
                for i in q.range.clone() {
                    let x = &mut features[i * d + j];
                    *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
                }
            }
        }
        let mut out = Dataset {
            features,
            ..self.clone()
        };
        out.active = out.compute_active();
        out
    }

    /// Writes the dataset in the LETOR text format, listing every feature.
    pub fn write_letor<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for s in self.samples() {
            line.clear();
            let _ = write!(line, "{} qid:{}", s.relevance, s.query_id);
            for (j, x) in s.features.iter().enumerate() {
                let _ = write!(line, " {}:{}", j + 1, x);
            }
            if let Some(c) = s.doc_id {
                let _ = write!(line, " #{c}");
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_letor(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        self.write_letor(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn group_queries(query_ids: &[u64]) -> Result<Vec<QueryGroup>> {
    let mut groups: Vec<QueryGroup> = Vec::new();
    let mut seen = HashSet::new();
    for (i, &qid) in query_ids.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if g.query_id == qid => g.range.end = i + 1,
            _ => {
                if !seen.insert(qid) {
                    return Err(Error::Parse {
                        path: String::new(),
                        line: i + 1,
                        message: format!("samples of query {qid} are not contiguous"),
                    });
                }
                groups.push(QueryGroup {
                    query_id: qid,
                    range: i..i + 1,
                });
            }
        }
    }
    Ok(groups)
}

/// Parses one non-comment line. Returns `Ok(None)` for blank or `#` lines.
pub fn parse_line(line: &str) -> std::result::Result<Option<Sample>, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let (body, comment) = match trimmed.split_once('#') {
        Some((body, comment)) => (body, Some(comment.trim().to_owned())),
        None => (trimmed, None),
    };
    let mut tokens = body.split_whitespace();

    let rel = tokens.next().ok_or("missing relevance")?;
    let relevance: u32 = rel
        .parse()
        .map_err(|_| format!("relevance {rel:?} is not a non-negative integer"))?;

    let qid_tok = tokens.next().ok_or("missing qid")?;
    let query_id: u64 = qid_tok
        .strip_prefix("qid:")
        .ok_or_else(|| format!("expected qid:<id>, found {qid_tok:?}"))?
        .parse()
        .map_err(|_| format!("query id in {qid_tok:?} is not a non-negative integer"))?;

    let mut features = Vec::new();
    let mut last_fid = 0usize;
    for tok in tokens {
        let (fid, value) = tok
            .split_once(':')
            .ok_or_else(|| format!("expected <fid>:<value>, found {tok:?}"))?;
        let fid: usize = fid
            .parse()
            .map_err(|_| format!("feature id {fid:?} is not a positive integer"))?;
        if fid == 0 {
            return Err("feature ids start at 1".into());
        }
        if fid <= last_fid {
            return Err(format!("feature id {fid} does not increase (previous {last_fid})"));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| format!("feature value {value:?} is not a number"))?;
        if !value.is_finite() {
            return Err(format!("feature {fid} has non-finite value"));
        }
        features.resize(fid - 1, 0.0);
        features.push(value);
        last_fid = fid;
    }
    if features.is_empty() {
        return Err("line has no features".into());
    }
    Ok(Some(Sample {
        relevance,
        query_id,
        features,
        doc_id: comment,
    }))
}

pub fn parse_letor_str(text: &str, source: &str, dimension: Option<usize>) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut line_of_sample = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let parsed = parse_line(line).map_err(|message| Error::Parse {
            path: source.to_owned(),
            line: lineno + 1,
            message,
        })?;
        if let Some(sample) = parsed {
            if let Some(d) = dimension {
                if sample.features.len() > d {
                    return Err(Error::Parse {
                        path: source.to_owned(),
                        line: lineno + 1,
                        message: format!(
                            "feature id {} exceeds declared dimension {d}",
                            sample.features.len()
                        ),
                    });
                }
            }
            samples.push(sample);
            line_of_sample.push(lineno + 1);
        }
    }
    Dataset::from_samples(samples, dimension).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: source.to_owned(),
            line: line_of_sample[line - 1],
            message,
        },
        other => other,
    })
}

pub fn parse_letor_file(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_letor_file_with_dimension(path, None)
}

/// Like [`parse_letor_file`] but fails when a line names a feature id above
/// `dimension`, and pads all samples to it.
pub fn parse_letor_file_with_dimension(
    path: impl AsRef<Path>,
    dimension: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_letor_str(&text, &path.display().to_string(), dimension)
}

/// File locations of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FoldSpec {
    pub train_path: PathBuf,
    pub validation_path: PathBuf,
    pub test_path: PathBuf,
}

impl FoldSpec {
    pub fn new(
        train_path: impl Into<PathBuf>,
        validation_path: impl Into<PathBuf>,
        test_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        let fold = FoldSpec {
            train_path: train_path.into(),
            validation_path: validation_path.into(),
            test_path: test_path.into(),
        };
        fold.validate()?;
        Ok(fold)
    }

    pub fn validate(&self) -> Result<()> {
        let paths = [&self.train_path, &self.validation_path, &self.test_path];
        if paths[0] == paths[1] || paths[0] == paths[2] || paths[1] == paths[2] {
            return Err(Error::InvalidParameter(
                "train, validation and test paths must be distinct".into(),
            ));
        }
        for p in paths {
            fs::metadata(p).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    /// Finds `Fold1/`, `Fold2/`, ... under `dir`, each holding `train.txt`,
    /// `vali.txt` and `test.txt`. Numbering must start at 1 and be gapless.
    pub fn discover(dir: impl AsRef<Path>) -> Result<Vec<FoldSpec>> {
        let dir = dir.as_ref();
        let mut folds = Vec::new();
        for n in 1.. {
            let fold_dir = dir.join(format!("Fold{n}"));
            if !fold_dir.is_dir() {
                break;
            }
            folds.push(FoldSpec::new(
                fold_dir.join("train.txt"),
                fold_dir.join("vali.txt"),
                fold_dir.join("test.txt"),
            )?);
        }
        if folds.is_empty() {
            return Err(Error::io(
                dir.join("Fold1"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no fold directories"),
            ));
        }
        Ok(folds)
    }
}
