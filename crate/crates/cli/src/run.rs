//! Per-invocation state: output directory, artifact bookkeeping, manifests
//! and shared loaders for the stage inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dcf_core::data::{
    apply_assignment, derive_kinematics, filter_spacing_min, load_pairs, read_windows, DatasetSplit,
    FilterReport, NormalizationSpec, SplitRole, TrajectoryPair,
};
use dcf_core::nn::Weights;
use dcf_core::{seed, Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

/// Stage labels for seeds derived from `run.seed`.
pub const SEED_LABELS: &[&str] = &["synth", "split", "teacher", "student", "search"];

pub struct Run {
    pub cfg: Config,
    pub out: PathBuf,
    pub command: &'static str,
    artifacts: Vec<String>,
    details: BTreeMap<String, serde_json::Value>,
    dataset: Option<DatasetId>,
}

/// Input file as recorded in manifests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetId {
    pub input: String,
    pub sha256: String,
}

impl DatasetId {
    fn to_text(&self) -> String {
        format!("input = {}\nsha256 = {}\n", self.input, self.sha256)
    }

    fn from_text(text: &str) -> Option<Self> {
        let mut input = None;
        let mut sha = None;
        for line in text.lines() {
            match line.split_once(" = ") {
                Some(("input", v)) => input = Some(v.to_string()),
                Some(("sha256", v)) => sha = Some(v.to_string()),
                _ => {}
            }
        }
        Some(DatasetId {
            input: input?,
            sha256: sha?,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Training, validation and test windows with the training normalization.
pub struct Prepared {
    pub split: DatasetSplit,
    pub norm: NormalizationSpec,
}

impl Run {
    pub fn new(cfg: Config, out: PathBuf, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        Ok(Run {
            cfg,
            out,
            command,
            artifacts: Vec::new(),
            details: BTreeMap::new(),
            dataset: None,
        })
    }

    pub fn root_seed(&self) -> Result<u64> {
        self.cfg.seed()
    }

    pub fn stage_seed(&self, label: &str) -> Result<u64> {
        Ok(seed::derive(self.root_seed()?, label))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::Io { path, source: e })?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn save_weights(&mut self, name: &str, weights: &Weights) -> Result<()> {
        self.write(name, weights.to_bytes())
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.details.insert(key.to_string(), v);
    }

    /// A stage input; missing files are data errors naming the path and the
    /// producing command.
    pub fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(Error::Data(format!(
                "missing artifact {}; run `dcf {producer}` first",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn load_weights(&self, name: &str, producer: &str) -> Result<Weights> {
        Weights::load(&self.require(name, producer)?)
    }

    /// The configured input file, defaulting to the synthetic `pairs.csv`
    /// in the output directory.
    pub fn input_path(&self) -> PathBuf {
        match self.cfg.get("data.input") {
            "" => self.path("pairs.csv"),
            p => PathBuf::from(p),
        }
    }

    fn input_label(&self, path: &Path) -> String {
        match path.strip_prefix(&self.out) {
            Ok(rel) => rel.display().to_string(),
            Err(_) => path.display().to_string(),
        }
    }

    pub fn note_artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    /// Hashes the configured input file and records it for the manifest.
    pub fn identify_input(&mut self) -> Result<(PathBuf, DatasetId)> {
        let path = self.input_path();
        if !path.is_file() {
            return Err(Error::Data(format!(
                "missing input {}; run `dcf synth` or set data.input",
                path.display()
            )));
        }
        let id = self.identify_input_at(&path)?;
        Ok((path, id))
    }

    pub fn identify_input_at(&mut self, path: &Path) -> Result<DatasetId> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        let id = DatasetId {
            input: self.input_label(path),
            sha256: sha256_hex(&bytes),
        };
        self.dataset = Some(id.clone());
        Ok(id)
    }

    /// Loads the input with kinematics filled in, before the spacing filter.
    pub fn load_input(&mut self) -> Result<Vec<TrajectoryPair>> {
        let (path, _) = self.identify_input()?;
        let loaded = load_pairs(&path, &self.cfg.schema()?)?;
        loaded.pairs.iter().map(derive_kinematics).collect()
    }

    pub fn filter(&self, pairs: &[TrajectoryPair]) -> Result<(Vec<TrajectoryPair>, FilterReport)> {
        Ok(filter_spacing_min(
            pairs,
            self.cfg.parse("data.max_spacing")?,
            self.cfg.parse("data.min_segment_points")?,
        ))
    }

    /// Filtered segments of the input, checked against the dataset that
    /// `ingest` recorded.
    pub fn load_segments(&mut self) -> Result<Vec<TrajectoryPair>> {
        let recorded = self.ingested_dataset()?;
        let pairs = self.load_input()?;
        if self.dataset.as_ref() != Some(&recorded) {
            return Err(Error::Data(format!(
                "input {} changed since ingest (recorded sha256 {}); rerun `dcf ingest`",
                self.input_path().display(),
                recorded.sha256
            )));
        }
        Ok(self.filter(&pairs)?.0)
    }

    fn ingested_dataset(&self) -> Result<DatasetId> {
        let path = self.require("dataset.txt", "ingest")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        DatasetId::from_text(&text).ok_or_else(|| Error::Format(format!("{}: malformed dataset record", path.display())))
    }

    pub fn write_dataset_record(&mut self) -> Result<()> {
        let id = self
            .dataset
            .clone()
            .ok_or_else(|| Error::Data("no dataset identified".into()))?;
        self.write("dataset.txt", id.to_text())
    }

    /// Windows, split and normalization written by `ingest`.
    pub fn prepared(&mut self) -> Result<Prepared> {
        self.dataset = Some(self.ingested_dataset()?);
        let file = read_windows(&self.require("windows.dcfw", "ingest")?)?;
        let split_path = self.require("split.csv", "ingest")?;
        let text = std::fs::read_to_string(&split_path).map_err(|e| Error::Io { path: split_path.clone(), source: e })?;
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let parsed = line
                .split_once(',')
                .and_then(|(id, role)| SplitRole::parse(role).map(|r| (id.to_string(), r)));
            let (id, role) = parsed.ok_or_else(|| Error::Row {
                path: split_path.clone(),
                line: i as u64 + 1,
                message: format!("expected `pair_id,role`, got {line:?}"),
            })?;
            assignment.insert(id, role);
        }
        let split = apply_assignment(&file.windows, assignment)?;
        let norm = NormalizationSpec::load(&self.require("norm.txt", "ingest")?)?;
        Ok(Prepared { split, norm })
    }

    /// Filtered segments of the test pairs.
    pub fn test_segments(&mut self, prepared: &Prepared) -> Result<Vec<TrajectoryPair>> {
        let segments = self.load_segments()?;
        Ok(segments
            .into_iter()
            .filter(|p| prepared.split.assignment.get(&p.pair_id) == Some(&SplitRole::Test))
            .collect())
    }

    pub fn manifest_text(&self) -> Result<String> {
        let mut s = format!("command = {}\n\n[config]\n", self.command);
        s.push_str(&self.cfg.to_text());
        s.push_str("\n[seeds]\n");
        let root = self.root_seed()?;
        let _ = writeln!(s, "root = {root}");
        for label in SEED_LABELS {
            let _ = writeln!(s, "{label} = {}", seed::derive(root, label));
        }
        s.push_str("\n[dataset]\n");
        match &self.dataset {
            Some(id) => s.push_str(&id.to_text()),
            None => s.push_str("none\n"),
        }
        Ok(s)
    }

    /// Writes the manifest and the exit summary.
    pub fn finish(mut self) -> Result<()> {
        let manifest = format!("manifest_{}.txt", self.command);
        let text = self.manifest_text()?;
        self.write(&manifest, text)?;
        let summary = Summary {
            command: self.command,
            status: "ok",
            exit_code: 0,
            message: None,
            artifacts: std::mem::take(&mut self.artifacts),
            details: std::mem::take(&mut self.details),
        };
        let name = format!("summary_{}.json", self.command);
        write_summary(&self.out.join(name), &summary)
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub command: &'a str,
    pub status: &'a str,
    pub exit_code: i32,
    pub message: Option<String>,
    pub artifacts: Vec<String>,
    pub details: BTreeMap<String, serde_json::Value>,
}

pub fn write_summary(path: &Path, summary: &Summary<'_>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
