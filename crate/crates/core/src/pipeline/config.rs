use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::classify::{ForestConfig, SvmConfig, TreeConfig};
use crate::exec::Exec;
use crate::logit::LogitSpec;
use crate::mine::MiningOptions;
use crate::utility::{Sv1Anchor, UtilityOptions};

/// Before window `i` against after window `j`, written `"{i}s:{j}e"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeriodPair {
    pub before: usize,
    pub after: usize,
}

impl Default for PeriodPair {
    fn default() -> Self {
        PeriodPair { before: 1, after: 1 }
    }
}

impl fmt::Display for PeriodPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s:{}e", self.before, self.after)
    }
}

impl FromStr for PeriodPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("period pair {s:?} is not of the form 1s:1e");
        let (b, a) = s.split_once(':').ok_or_else(bad)?;
        let idx = |part: &str, suffix: char| -> Result<usize, String> {
            let n: usize = part.trim().strip_suffix(suffix).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if (1..=4).contains(&n) {
                Ok(n)
            } else {
                Err(format!("period index {n} outside 1..=4"))
            }
        };
        Ok(PeriodPair { before: idx(b, 's')?, after: idx(a, 'e')? })
    }
}

impl Serialize for PeriodPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PeriodPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighdFiles {
    pub tracks: PathBuf,
    pub tracks_meta: PathBuf,
    pub recording_meta: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Synthetic-spec TOML file.
    pub synthetic: Option<PathBuf>,
    /// Directory holding `NN_tracks.csv` style files, with `recordings` ids.
    pub highd_dir: Option<PathBuf>,
    pub recordings: Vec<u32>,
    /// Explicit file triples.
    pub highd: Vec<HighdFiles>,
    pub strict_references: bool,
    /// Logical column name to the name used in the files.
    pub columns: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Overrides the road width used to mirror direction-1 lateral positions.
    pub road_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub ttc_threshold: f64,
    pub min_coverage: f64,
    pub sv1_anchor: Sv1Anchor,
    /// Period pair used by the model stages.
    pub period_pair: PeriodPair,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig {
            ttc_threshold: 4.0,
            min_coverage: 0.8,
            sv1_anchor: Sv1Anchor::Own,
            period_pair: PeriodPair::default(),
        }
    }
}

impl UtilityConfig {
    pub fn options(&self) -> UtilityOptions {
        UtilityOptions {
            min_coverage: self.min_coverage,
            sv1_anchor: self.sv1_anchor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Rf,
    Svm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Svm => "svm",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dt" => Ok(ModelKind::Dt),
            "rf" => Ok(ModelKind::Rf),
            "svm" => Ok(ModelKind::Svm),
            _ => Err(format!("unknown model {s:?}, expected dt, rf or svm")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub train_fraction: f64,
    pub models: Vec<ModelKind>,
    pub tree: TreeConfig,
    /// The forest seed is replaced by the pipeline seed.
    pub forest: ForestConfig,
    pub svm: SvmConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            train_fraction: 0.8,
            models: vec![ModelKind::Dt, ModelKind::Rf, ModelKind::Svm],
            tree: TreeConfig::default(),
            forest: ForestConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

pub fn default_logit_spec() -> LogitSpec {
    LogitSpec::new(vec!["dy_before_clv2_sv2", "dy_after_sv1_tfv1"], vec!["delta_t"])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub exec: Exec,
    pub input: InputConfig,
    pub detection: DetectionConfig,
    pub mining: MiningOptions,
    pub utility: UtilityConfig,
    pub logit: LogitSpec,
    pub classify: ClassifyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: None,
            exec: Exec::default(),
            input: InputConfig::default(),
            detection: DetectionConfig::default(),
            mining: MiningOptions::default(),
            utility: UtilityConfig::default(),
            logit: default_logit_spec(),
            classify: ClassifyConfig::default(),
        }
    }
}

fn usage(msg: impl Into<String>) -> PipelineError {
    PipelineError::usage(Stage::Config, msg)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| usage(e.to_string()))
    }

    /// Reads a TOML config, resolving relative paths against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.input.synthetic {
            fix(p);
        }
        if let Some(p) = &mut self.input.highd_dir {
            fix(p);
        }
        for h in &mut self.input.highd {
            fix(&mut h.tracks);
            fix(&mut h.tracks_meta);
            fix(&mut h.recording_meta);
        }
        if let Some(p) = &mut self.out_dir {
            fix(p);
        }
    }

    /// Range checks on every numeric option.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let u = &self.utility;
        if !(1.5..=4.0).contains(&u.ttc_threshold) {
            return Err(usage(format!("ttc_threshold {} outside 1.5..=4", u.ttc_threshold)));
        }
        if !(u.min_coverage > 0.0 && u.min_coverage <= 1.0) {
            return Err(usage(format!("min_coverage {} outside (0, 1]", u.min_coverage)));
        }
        if !(self.mining.max_interval > 0.0) {
            return Err(usage(format!("max_interval {} must be positive", self.mining.max_interval)));
        }
        let f = self.classify.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(usage(format!("train_fraction {f} outside (0, 1)")));
        }
        self.logit.validate().map_err(|e| usage(e.to_string()))?;
        let i = &self.input;
        let sources = usize::from(i.synthetic.is_some()) + usize::from(i.highd_dir.is_some()) + usize::from(!i.highd.is_empty());
        if sources != 1 {
            return Err(usage("input needs exactly one of synthetic, highd_dir or highd"));
        }
        if i.highd_dir.is_some() && i.recordings.is_empty() {
            return Err(usage("highd_dir needs a non-empty recordings list"));
        }
        Ok(())
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}
