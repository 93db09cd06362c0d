//! Run configuration: a flat `section.key = value` file layered over
//! built-in defaults, then `DCF_SECTION__KEY` environment variables, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dcf_core::data::{ColumnMap, Schema};
use dcf_core::distill::{parse_alpha_range, SearchSpace};
use dcf_core::gipps::GippsParams;
use dcf_core::nn::{Activation, LstmSpec, MlpSpec, OptimizerSpec};
use dcf_core::stats::{MomentVariable, SpacingBins};
use dcf_core::{Error, Result};

/// Every accepted key with its default. Anything else is rejected.
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", "0"),
    ("run.threads", "0"),
    ("data.input", ""),
    ("data.dt", "0.1"),
    ("data.history", "1.0"),
    ("data.max_spacing", "50"),
    ("data.min_segment_points", "11"),
    ("schema.pair_id", "pair_id"),
    ("schema.pair_type", "pair_type"),
    ("schema.t", "t"),
    ("schema.lead_pos", "lead_pos"),
    ("schema.foll_pos", "foll_pos"),
    ("schema.lead_speed", "lead_speed"),
    ("schema.foll_speed", "foll_speed"),
    ("schema.lead_accel", "lead_accel"),
    ("schema.foll_accel", "foll_accel"),
    ("synth.pairs", "50"),
    ("synth.duration", "30"),
    ("synth.noise_std", "0.03"),
    ("stats.variability_edges", "5,15,25,35,45"),
    ("stats.category_edges", "0,10,15,30"),
    ("stats.moment_variable", "speed_diff"),
    ("teacher.layers", "475,61"),
    ("teacher.dropout", "0.3"),
    ("teacher.projection", "none"),
    ("teacher.learning_rate", "0.0016"),
    ("teacher.batch_size", "161"),
    ("teacher.epochs", "10"),
    ("student.hidden", "60,60"),
    ("student.learning_rate", "0.01"),
    ("student.batch_size", "100"),
    ("student.epochs", "5"),
    ("distill.alpha", "0.5"),
    ("distill.alphas", "0.1:0.9:0.1"),
    ("distill.cache_teacher", "true"),
    ("search.budget", "20"),
    ("search.folds", "3"),
    ("gipps.a_max", "1.7"),
    ("gipps.b", "-3.0"),
    ("gipps.b_hat", "-3.5"),
    ("gipps.v_desired", "13.9"),
    ("gipps.s_eff", "6.5"),
    ("gipps.tau", "1.0"),
    ("eval.profile_pairs", "2"),
    ("eval.horizon", "0"),
    ("bench.batch", "1000"),
    ("bench.repetitions", "5"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are skipped;
    /// a key given twice in one file is an error.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{source}:{}: expected `section.key = value`", i + 1)))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(Error::Config(format!("{source}:{}: {key} already set on line {prev}", i + 1)));
            }
            self.set(key, value)
                .map_err(|e| Error::Config(format!("{source}:{}: {}", i + 1, strip(&e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `DCF_TEACHER__LEARNING_RATE=0.01` sets `teacher.learning_rate`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> = vars.into_iter().collect();
        vars.sort();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix("DCF_") else { continue };
            let Some((section, key)) = rest.split_once("__") else { continue };
            let key = format!("{}.{}", section.to_ascii_lowercase(), key.to_ascii_lowercase());
            self.set(&key, &value)
                .map_err(|e| Error::Config(format!("environment {name}: {}", strip(&e))))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("{key} = {raw:?} is not a valid value")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key);
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key} = {raw:?}: bad list element {s:?}")))
            })
            .collect()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!("{key} = {other:?} is not a boolean"))),
        }
    }

    /// All resolved values, one `key = value` per line in key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("run.seed")
    }

    pub fn schema(&self) -> Result<Schema> {
        let col = |k: &str| self.get(k).to_string();
        let opt = |k: &str| {
            let v = self.get(k);
            (!v.is_empty() && v != "none").then(|| v.to_string())
        };
        Ok(Schema {
            columns: ColumnMap {
                pair_id: col("schema.pair_id"),
                pair_type: col("schema.pair_type"),
                t: col("schema.t"),
                lead_pos: col("schema.lead_pos"),
                foll_pos: col("schema.foll_pos"),
                lead_speed: col("schema.lead_speed"),
                foll_speed: col("schema.foll_speed"),
                lead_accel: opt("schema.lead_accel"),
                foll_accel: opt("schema.foll_accel"),
            },
            dt: self.parse("data.dt")?,
        })
    }

    pub fn bins(&self, key: &str) -> Result<SpacingBins> {
        SpacingBins::new(self.list(key)?)
    }

    pub fn moment_variable(&self) -> Result<MomentVariable> {
        match self.get("stats.moment_variable") {
            "speed_diff" => Ok(MomentVariable::SpeedDiff),
            "foll_accel" => Ok(MomentVariable::FollowerAccel),
            other => Err(Error::Config(format!(
                "stats.moment_variable = {other:?}; expected speed_diff or foll_accel"
            ))),
        }
    }

    fn seq_len(&self) -> Result<usize> {
        dcf_core::data::history_steps(self.parse("data.history")?, self.parse("data.dt")?)
    }

    pub fn teacher_spec(&self) -> Result<LstmSpec> {
        let projection = match self.get("teacher.projection") {
            "none" | "" => None,
            _ => Some(self.parse("teacher.projection")?),
        };
        Ok(LstmSpec {
            seq_len: self.seq_len()?,
            layers: self.list("teacher.layers")?,
            dropout: self.parse("teacher.dropout")?,
            projection,
            ..LstmSpec::teacher()
        })
    }

    pub fn student_spec(&self) -> Result<MlpSpec> {
        Ok(MlpSpec {
            input_dim: self.seq_len()? * dcf_core::data::CHANNELS,
            hidden: self.list("student.hidden")?,
            hidden_activation: Activation::Relu,
            ..MlpSpec::student()
        })
    }

    fn optimizer(&self, section: &str) -> Result<OptimizerSpec> {
        Ok(OptimizerSpec::adam(
            self.parse(&format!("{section}.learning_rate"))?,
            self.parse(&format!("{section}.batch_size"))?,
            self.parse(&format!("{section}.epochs"))?,
        ))
    }

    pub fn teacher_optimizer(&self) -> Result<OptimizerSpec> {
        self.optimizer("teacher")
    }

    pub fn student_optimizer(&self) -> Result<OptimizerSpec> {
        self.optimizer("student")
    }

    pub fn alphas(&self) -> Result<Vec<f64>> {
        parse_alpha_range(self.get("distill.alphas"))
    }

    pub fn search_space(&self, teacher: bool) -> Result<SearchSpace> {
        let base = if teacher { SearchSpace::teacher() } else { SearchSpace::student() };
        Ok(SearchSpace {
            budget: self.parse("search.budget")?,
            folds: self.parse("search.folds")?,
            ..base
        })
    }

    /// Parses every key, so a bad value fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.parse::<usize>("run.threads")?;
        self.schema()?;
        self.seq_len()?;
        let positive = |key: &str| -> Result<()> {
            let v: f64 = self.parse(key)?;
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{key} must be positive, got {v}")))
            }
        };
        positive("data.max_spacing")?;
        positive("synth.duration")?;
        let noise: f64 = self.parse("synth.noise_std")?;
        if noise.is_nan() || noise < 0.0 {
            return Err(Error::Config(format!("synth.noise_std must be non-negative, got {noise}")));
        }
        for key in ["data.min_segment_points", "synth.pairs", "eval.profile_pairs", "eval.horizon"] {
            self.parse::<usize>(key)?;
        }
        for key in ["bench.batch", "bench.repetitions"] {
            if self.parse::<usize>(key)? == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        self.bins("stats.variability_edges")?;
        self.bins("stats.category_edges")?;
        self.moment_variable()?;
        dcf_core::nn::NetworkSpec::Lstm(self.teacher_spec()?).validate()?;
        dcf_core::nn::NetworkSpec::Mlp(self.student_spec()?).validate()?;
        self.teacher_optimizer()?.validate()?;
        self.student_optimizer()?.validate()?;
        dcf_core::distill::check_alpha(self.parse("distill.alpha")?)?;
        self.alphas()?;
        self.flag("distill.cache_teacher")?;
        self.search_space(true)?.validate()?;
        self.search_space(false)?.validate()?;
        self.gipps()?;
        Ok(())
    }

    pub fn gipps(&self) -> Result<GippsParams> {
        let p = GippsParams {
            a_max: self.parse("gipps.a_max")?,
            b: self.parse("gipps.b")?,
            b_hat: self.parse("gipps.b_hat")?,
            v_desired: self.parse("gipps.v_desired")?,
            s_eff: self.parse("gipps.s_eff")?,
            tau: self.parse("gipps.tau")?,
        };
        p.validate()?;
        Ok(p)
    }
}

fn strip(e: &Error) -> String {
    e.to_string().trim_start_matches("configuration error: ").to_string()
}
