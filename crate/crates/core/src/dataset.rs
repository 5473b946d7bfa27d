//! Pool and exemplar data: types, file formats, and synthetic generators.
//!
//! Pools are read from JSONL (one record per line) or from a packed binary
//! format for large embedding matrices. Lines beginning with `#` are comments.
//!
//! ```text
//! pool:      {"id": "ex1", "vec": [0.1, 0.2], "label": "bank_river", "text": "..."}
//! exemplars: {"class": "bank_river", "vec": [0.1, 0.3], "text": "..."}
//! ```
//!
//! The binary layout is `b"EGALV1"`, `u32 n`, `u32 d`, then per record a
//! length-prefixed UTF-8 id, `d` little-endian `f32`s, a length-prefixed label
//! and a length-prefixed text. All integers are little-endian `u32`; a zero
//! length encodes an absent label or text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Stream};

pub const BINARY_MAGIC: &[u8; 6] = b"EGALV1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("duplicate exemplar for class `{0}`")]
    DuplicateExemplar(String),
    #[error("exemplar for class `{0}` has no vector")]
    MissingVector(String),
    #[error("record `{0}` has a non-finite coordinate")]
    NonFinite(String),
    #[error("{0} contains no records")]
    Empty(PathBuf),
    #[error("not an EGALV1 binary pool: {0}")]
    BadBinary(String),
    #[error("class `{class}`: requested {requested} examples but only {available} are available")]
    NotEnoughExamples {
        class: String,
        requested: usize,
        available: usize,
    },
    #[error("invalid synthetic dataset parameters: {0}")]
    InvalidSynth(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// One unlabeled pool item. `label` is the hidden ground truth used only by
/// simulation oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub vec: Vec<f64>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

/// A reference usage for one known class. Never part of the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    #[serde(rename = "class")]
    pub class_id: String,
    #[serde(default)]
    pub vec: Vec<f64>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub examples: Vec<ExampleRecord>,
    pub exemplars: Vec<Exemplar>,
    /// Known classes, in exemplar-file order.
    pub class_ids: Vec<String>,
}

impl Dataset {
    /// Validates and assembles a dataset. `class_ids` are taken from the
    /// exemplars, in order.
    pub fn new(examples: Vec<ExampleRecord>, exemplars: Vec<Exemplar>) -> Result<Self> {
        let d = examples
            .first()
            .map(|r| r.vec.len())
            .or_else(|| exemplars.first().map(|e| e.vec.len()))
            .unwrap_or(0);
        validate_records(&examples, d)?;
        let mut class_ids = Vec::with_capacity(exemplars.len());
        let mut seen = HashSet::new();
        for ex in &exemplars {
            if ex.vec.is_empty() {
                return Err(DatasetError::MissingVector(ex.class_id.clone()));
            }
            if ex.vec.len() != d {
                return Err(DatasetError::DimensionMismatch {
                    id: ex.class_id.clone(),
                    expected: d,
                    found: ex.vec.len(),
                });
            }
            if ex.vec.iter().any(|x| !x.is_finite()) {
                return Err(DatasetError::NonFinite(ex.class_id.clone()));
            }
            if !seen.insert(ex.class_id.as_str()) {
                return Err(DatasetError::DuplicateExemplar(ex.class_id.clone()));
            }
            class_ids.push(ex.class_id.clone());
        }
        Ok(Self {
            d,
            examples,
            exemplars,
            class_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn exemplar(&self, class_id: &str) -> Option<&Exemplar> {
        self.exemplars.iter().find(|e| e.class_id == class_id)
    }

    pub fn has_hidden_labels(&self) -> bool {
        self.examples.iter().all(|r| r.label.is_some())
    }

    /// Hidden-label frequencies over the pool, keyed by class id. Unlabeled
    /// records are ignored.
    pub fn label_frequencies(&self) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in &self.examples {
            if let Some(label) = &r.label {
                *counts.entry(label.clone()).or_default() += 1;
            }
        }
        let n = self.examples.len().max(1) as f64;
        counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / n))
            .collect()
    }

    /// Classes whose pool frequency is at least `gamma`.
    pub fn common_classes(&self, gamma: f64) -> Vec<String> {
        self.label_frequencies()
            .into_iter()
            .filter(|(_, p)| *p >= gamma)
            .map(|(k, _)| k)
            .collect()
    }
}

fn validate_records(records: &[ExampleRecord], d: usize) -> Result<()> {
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        if r.vec.len() != d {
            return Err(DatasetError::DimensionMismatch {
                id: r.id.clone(),
                expected: d,
                found: r.vec.len(),
            });
        }
        if r.vec.iter().any(|x| !x.is_finite()) {
            return Err(DatasetError::NonFinite(r.id.clone()));
        }
        if !ids.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let item = serde_json::from_str(trimmed).map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Reads pool records from JSONL or the binary format (sniffed by magic).
/// Records are checked for finite coordinates, a common dimension and unique
/// ids.
pub fn load_records(path: &Path) -> Result<Vec<ExampleRecord>> {
    let mut head = [0u8; 6];
    let is_binary = {
        let mut f = File::open(path)?;
        matches!(f.read(&mut head), Ok(6)) && &head == BINARY_MAGIC
    };
    let records = if is_binary {
        read_binary(path)?
    } else {
        read_jsonl(path)?
    };
    let d = records.first().map(|r| r.vec.len()).unwrap_or(0);
    validate_records(&records, d)?;
    Ok(records)
}

pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>> {
    read_jsonl(path)
}

/// Loads a pool and its exemplar file into a validated [`Dataset`].
pub fn load_dataset(pool_path: &Path, exemplar_path: &Path) -> Result<Dataset> {
    let examples = load_records(pool_path)?;
    if examples.is_empty() {
        return Err(DatasetError::Empty(pool_path.to_path_buf()));
    }
    let exemplars = load_exemplars(exemplar_path)?;
    Dataset::new(examples, exemplars)
}

fn write_jsonl<T: Serialize>(path: &Path, header: Option<&str>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes pool records as JSONL, with an optional `#` comment header.
pub fn write_records(path: &Path, header: Option<&str>, records: &[ExampleRecord]) -> Result<()> {
    write_jsonl(path, header, records)
}

pub fn write_exemplars(path: &Path, header: Option<&str>, exemplars: &[Exemplar]) -> Result<()> {
    write_jsonl(path, header, exemplars)
}

fn put_str(w: &mut impl Write, s: Option<&str>) -> io::Result<()> {
    let bytes = s.unwrap_or("").as_bytes();
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)
}

/// Writes records in the packed binary format. Coordinates are narrowed to f32.
pub fn write_binary(path: &Path, records: &[ExampleRecord]) -> Result<()> {
    let d = records.first().map(|r| r.vec.len()).unwrap_or(0);
    validate_records(records, d)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    for r in records {
        put_str(&mut w, Some(&r.id))?;
        for &x in &r.vec {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        put_str(&mut w, r.label.as_deref())?;
        put_str(&mut w, r.text.as_deref())?;
    }
    w.flush()?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn get_str(r: &mut impl Read) -> Result<Option<String>> {
    let len = get_u32(r)? as usize;
    if len == 0 {
        return Ok(None);
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map(Some)
        .map_err(|e| DatasetError::BadBinary(e.to_string()))
}

fn read_binary(path: &Path) -> Result<Vec<ExampleRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(DatasetError::BadBinary("bad magic".into()));
    }
    let n = get_u32(&mut r)? as usize;
    let d = get_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for i in 0..n {
        let id = get_str(&mut r)?
            .ok_or_else(|| DatasetError::BadBinary(format!("record {i} has an empty id")))?;
        let mut vec = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut buf)?;
            vec.push(f32::from_le_bytes(buf) as f64);
        }
        let label = get_str(&mut r)?;
        let text = get_str(&mut r)?;
        out.push(ExampleRecord {
            id,
            vec,
            label,
            text,
        });
    }
    Ok(out)
}

/// Class id used by the synthetic generators.
pub fn synth_class_id(k: usize) -> String {
    format!("class_{k}")
}

/// Isotropic unit-variance Gaussian clusters, one per class.
///
/// Class `k` is centred at `separation / sqrt(2) * e_k`, so every pair of
/// centres is exactly `separation` apart. Each class gets a fresh exemplar
/// drawn from its own Gaussian; exemplars are not added to the pool.
pub fn synth_dataset(
    classes: usize,
    d: usize,
    n_per_class: &[usize],
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(DatasetError::InvalidSynth("need at least 2 classes".into()));
    }
    if n_per_class.len() != classes || n_per_class.contains(&0) {
        return Err(DatasetError::InvalidSynth(format!(
            "need {classes} positive class counts, got {n_per_class:?}"
        )));
    }
    if d < classes {
        return Err(DatasetError::InvalidSynth(format!(
            "dimension {d} cannot hold {classes} simplex centres"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(DatasetError::InvalidSynth(format!("separation {separation}")));
    }
    let scale = separation / std::f64::consts::SQRT_2;
    let mut rng = rng::stream(seed, Stream::Synth);
    let draw = |k: usize, rng: &mut rng::EgalRng| -> Vec<f64> {
        (0..d)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                if j == k {
                    z + scale
                } else {
                    z
                }
            })
            .collect()
    };
    let mut examples = Vec::with_capacity(n_per_class.iter().sum());
    for (k, &count) in n_per_class.iter().enumerate() {
        for _ in 0..count {
            let vec = draw(k, &mut rng);
            examples.push(ExampleRecord {
                id: format!("ex{:06}", examples.len()),
                vec,
                label: Some(synth_class_id(k)),
                text: None,
            });
        }
    }
    let exemplars = (0..classes)
        .map(|k| Exemplar {
            class_id: synth_class_id(k),
            vec: draw(k, &mut rng),
            text: None,
        })
        .collect();
    Dataset::new(examples, exemplars)
}

/// Centres used by [`synth_dataset`].
pub fn synth_centers(classes: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    let scale = separation / std::f64::consts::SQRT_2;
    (0..classes)
        .map(|k| (0..d).map(|j| if j == k { scale } else { 0.0 }).collect())
        .collect()
}

/// Holds out a balanced test set, then subsamples `rare_class` in the
/// remaining pool down to `rare_count` examples.
///
/// The held-out test set takes the last `min(test_per_class, available)`
/// examples of every labeled class in pool order, so it does not depend on
/// `seed`; only the rare subset does. The training pool keeps its original
/// order.
pub fn subsample_skew(
    dataset: &Dataset,
    rare_class: &str,
    rare_count: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Vec<ExampleRecord>)> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.examples.iter().enumerate() {
        if let Some(label) = &r.label {
            by_class.entry(label.as_str()).or_default().push(i);
        }
    }
    let mut held_out = HashSet::new();
    for indices in by_class.values() {
        let take = test_per_class.min(indices.len());
        held_out.extend(indices[indices.len() - take..].iter().copied());
    }
    let rare_available: Vec<usize> = by_class
        .get(rare_class)
        .map(|v| v.iter().copied().filter(|i| !held_out.contains(i)).collect())
        .unwrap_or_default();
    if rare_count > rare_available.len() {
        return Err(DatasetError::NotEnoughExamples {
            class: rare_class.to_string(),
            requested: rare_count,
            available: rare_available.len(),
        });
    }
    let mut rng = rng::stream(seed, Stream::Subsample);
    let kept_rare: HashSet<usize> = sample(&mut rng, rare_available.len(), rare_count)
        .into_iter()
        .map(|j| rare_available[j])
        .collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in dataset.examples.iter().enumerate() {
        if held_out.contains(&i) {
            test.push(r.clone());
        } else if r.label.as_deref() != Some(rare_class) || kept_rare.contains(&i) {
            train.push(r.clone());
        }
    }
    let pool = Dataset::new(train, dataset.exemplars.clone())?;
    Ok((pool, test))
}

/// Parameters of a skewed synthetic benchmark: `classes - 1` common classes
/// sharing `common_total` training examples, and one rare class (the last)
/// with `rare_count` training examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkewedSynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub common_total: usize,
    pub rare_count: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl SkewedSynthSpec {
    pub fn rare_class(&self) -> String {
        synth_class_id(self.classes - 1)
    }
}

/// Generates a skewed pool and its balanced test set.
pub fn skewed_synthetic(spec: &SkewedSynthSpec) -> Result<(Dataset, Vec<ExampleRecord>)> {
    if spec.classes < 2 {
        return Err(DatasetError::InvalidSynth("need at least 2 classes".into()));
    }
    let commons = spec.classes - 1;
    if spec.common_total < commons || spec.rare_count == 0 {
        return Err(DatasetError::InvalidSynth(format!(
            "common_total {} / rare_count {} too small",
            spec.common_total, spec.rare_count
        )));
    }
    let base = spec.common_total / commons;
    let extra = spec.common_total % commons;
    let mut counts: Vec<usize> = (0..commons)
        .map(|k| base + usize::from(k < extra) + spec.test_per_class)
        .collect();
    counts.push(spec.rare_count + spec.test_per_class);
    let full = synth_dataset(spec.classes, spec.dim, &counts, spec.separation, spec.seed)?;
    subsample_skew(
        &full,
        &spec.rare_class(),
        spec.rare_count,
        spec.test_per_class,
        spec.seed,
    )
}

/// Maps example ids to pool indices.
pub fn id_index(examples: &[ExampleRecord]) -> HashMap<&str, usize> {
    examples
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::tempdir;

    fn write(path: &Path, body: &str) {
        fs::write(path, body).unwrap();
    }

    #[test]
    fn loads_small_pool() {
        let dir = tempdir().unwrap();
        let pool = dir.path().join("pool.jsonl");
        let ex = dir.path().join("ex.jsonl");
        write(
            &pool,
            "# header\n\
             {\"id\":\"a\",\"vec\":[0,1,2,3],\"label\":\"x\",\"text\":null}\n\
             {\"id\":\"b\",\"vec\":[1,1,2,3],\"label\":\"y\"}\n\
             \n\
             {\"id\":\"c\",\"vec\":[2,1,2,3],\"label\":null,\"text\":\"hi\"}\n",
        );
        write(
            &ex,
            "{\"class\":\"x\",\"vec\":[0,0,0,0]}\n{\"class\":\"y\",\"vec\":[1,1,1,1],\"text\":\"t\"}\n",
        );
        let ds = load_dataset(&pool, &ex).unwrap();
        assert_eq!((ds.d, ds.len(), ds.class_ids.len()), (4, 3, 2));
        assert_eq!(ds.examples[2].text.as_deref(), Some("hi"));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let dir = tempdir().unwrap();
        let pool = dir.path().join("pool.jsonl");
        let ex = dir.path().join("ex.jsonl");
        write(
            &pool,
            "{\"id\":\"a\",\"vec\":[0,1,2,3]}\n{\"id\":\"short\",\"vec\":[0,1,2]}\n",
        );
        write(&ex, "{\"class\":\"x\",\"vec\":[0,0,0,0]}\n");
        match load_dataset(&pool, &ex) {
            Err(DatasetError::DimensionMismatch { id, .. }) => assert_eq!(id, "short"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_bad_lines() {
        let dir = tempdir().unwrap();
        let pool = dir.path().join("pool.jsonl");
        let ex = dir.path().join("ex.jsonl");
        write(&ex, "{\"class\":\"x\",\"vec\":[0]}\n");
        write(&pool, "{\"id\":\"a\",\"vec\":[0]}\n{\"id\":\"a\",\"vec\":[1]}\n");
        assert!(matches!(load_dataset(&pool, &ex), Err(DatasetError::DuplicateId(id)) if id == "a"));
        write(&pool, "{\"id\":\"a\",\"vec\":[0]}\n{\"id\":\"b\",\"vec\":[1}\n");
        assert!(matches!(
            load_dataset(&pool, &ex),
            Err(DatasetError::Malformed { line: 2, .. })
        ));
        write(&pool, "{\"id\":\"a\",\"vec\":[0]}\n");
        write(&ex, "{\"class\":\"x\"}\n");
        assert!(matches!(load_dataset(&pool, &ex), Err(DatasetError::MissingVector(c)) if c == "x"));
    }

    #[test]
    fn unknown_hidden_labels_are_kept() {
        let dir = tempdir().unwrap();
        let pool = dir.path().join("pool.jsonl");
        let ex = dir.path().join("ex.jsonl");
        write(
            &pool,
            "{\"id\":\"a\",\"vec\":[0,0],\"label\":\"sense_1\"}\n{\"id\":\"b\",\"vec\":[1,1],\"label\":\"sense_9\"}\n",
        );
        write(&ex, "{\"class\":\"sense_1\",\"vec\":[0,0]}\n");
        let ds = load_dataset(&pool, &ex).unwrap();
        assert_eq!(ds.class_ids, vec!["sense_1"]);
        assert_eq!(ds.examples[1].label.as_deref(), Some("sense_9"));
    }

    #[test]
    fn jsonl_and_binary_round_trip() {
        let ds = synth_dataset(3, 5, &[4, 3, 2], 2.0, 11).unwrap();
        let dir = tempdir().unwrap();
        let jsonl = dir.path().join("p.jsonl");
        write_records(&jsonl, Some("seed=11"), &ds.examples).unwrap();
        assert_eq!(load_records(&jsonl).unwrap(), ds.examples);

        let bin = dir.path().join("p.bin");
        let mut recs = ds.examples.clone();
        recs[0].text = Some("the bass was loud".into());
        write_binary(&bin, &recs).unwrap();
        let back = load_records(&bin).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!((&a.id, &a.label, &a.text), (&b.id, &b.label, &b.text));
            for (x, y) in a.vec.iter().zip(&b.vec) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn synth_is_deterministic_and_separated() {
        let a = synth_dataset(2, 2, &[10, 10], 0.0, 3).unwrap();
        let b = synth_dataset(2, 2, &[10, 10], 0.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert!(a.examples.iter().all(|r| r.label.is_some()));
        let centers = synth_centers(5, 7, 3.5);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let dist: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((dist - 3.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wide_separation_is_nearest_centroid_separable() {
        let ds = synth_dataset(2, 2, &[10, 10], 100.0, 5).unwrap();
        let centers = synth_centers(2, 2, 100.0);
        for r in &ds.examples {
            let dist = |c: &Vec<f64>| -> f64 { r.vec.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum() };
            let pred = if dist(&centers[0]) <= dist(&centers[1]) { 0 } else { 1 };
            assert_eq!(r.label.as_deref(), Some(synth_class_id(pred).as_str()));
        }
    }

    #[test]
    fn subsample_skew_counts_and_disjointness() {
        let full = synth_dataset(2, 2, &[5050, 5050], 4.0, 1).unwrap();
        let (pool, test) = subsample_skew(&full, "class_1", 50, 50, 9).unwrap();
        assert_eq!(pool.len(), 5050);
        assert_eq!(test.len(), 100);
        let freq = pool.label_frequencies();
        assert!((freq["class_1"] - 50.0 / 5050.0).abs() < 1e-12);
        let train_ids: HashSet<_> = pool.examples.iter().map(|r| &r.id).collect();
        assert!(test.iter().all(|r| !train_ids.contains(&r.id)));

        let (other, _) = subsample_skew(&full, "class_1", 50, 50, 10).unwrap();
        let rare = |ds: &Dataset| -> HashSet<String> {
            ds.examples
                .iter()
                .filter(|r| r.label.as_deref() == Some("class_1"))
                .map(|r| r.id.clone())
                .collect()
        };
        let common = |ds: &Dataset| -> Vec<String> {
            ds.examples
                .iter()
                .filter(|r| r.label.as_deref() == Some("class_0"))
                .map(|r| r.id.clone())
                .collect()
        };
        assert_ne!(rare(&pool), rare(&other));
        assert_eq!(common(&pool), common(&other));

        let (unskewed, _) = subsample_skew(&full, "class_1", 5000, 50, 9).unwrap();
        assert_eq!(unskewed.len(), 10_000);
        assert!(matches!(
            subsample_skew(&full, "class_1", 5001, 50, 9),
            Err(DatasetError::NotEnoughExamples { .. })
        ));
    }

    #[test]
    fn skewed_spec_builds_expected_counts() {
        let spec = SkewedSynthSpec {
            classes: 4,
            dim: 16,
            separation: 6.0,
            common_total: 5000,
            rare_count: 50,
            test_per_class: 50,
            seed: 7,
        };
        let (pool, test) = skewed_synthetic(&spec).unwrap();
        assert_eq!(pool.len(), 5050);
        assert_eq!(test.len(), 200);
        assert_eq!(pool.class_ids.len(), 4);
    }
}
