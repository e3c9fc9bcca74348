//! JSON run configuration. Every field except `manifest` has a default;
//! command-line flags override `seed`, `output` and the thread count.

use std::path::{Path, PathBuf};

use microtex_core::dataset::PreprocessSpec;
use microtex_core::eval::CvConfig;
use microtex_core::featurize::{Featurizer, Source, DEFAULT_N_WORDS, DEFAULT_VLAD_SIDE};
use microtex_core::forest::TrainConfig;
use microtex_core::rng;
use microtex_core::viz::AscentConfig;
use microtex_core::{PixelNormalization, TapPoint};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

/// Stream indices under the run seed, so each consumer gets its own stream.
const FOREST_STREAM: u64 = 1;
const CV_STREAM: u64 = 2;
const VLAD_STREAM: u64 = 3;
const ASCENT_STREAM: u64 = 4;
const WEIGHTS_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSource {
    /// An MTEXW001 file.
    File(PathBuf),
    /// Seeded He-normal weights; `seed` defaults to a stream of the run seed.
    Random { random: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VladSettings {
    pub n_words: usize,
    pub sample_fraction: f64,
    /// Images are resized to (height, width) before the forward pass.
    pub resize: Option<(usize, usize)>,
}

impl Default for VladSettings {
    fn default() -> Self {
        VladSettings {
            n_words: DEFAULT_N_WORDS,
            sample_fraction: 0.2,
            resize: Some((DEFAULT_VLAD_SIDE, DEFAULT_VLAD_SIDE)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSettings {
    pub n_trees: usize,
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        ForestSettings {
            n_trees: t.n_trees,
            features_per_split: t.features_per_split,
            max_depth: t.max_depth,
            min_samples_split: t.min_samples_split,
            bootstrap: t.bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub n_folds: usize,
    pub n_trials: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings { n_folds: 3, n_trials: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentSettings {
    pub size: usize,
    pub iterations: usize,
    pub step: f64,
    pub init_range: f64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        let a = AscentConfig::default();
        AscentSettings { size: a.size, iterations: a.iterations, step: a.step, init_range: a.init_range }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_weights")]
    pub weights: WeightsSource,
    /// Sources to featurize: tap names, `"raw"`, or `"all"` for the five taps.
    #[serde(default = "default_taps", deserialize_with = "de_sources")]
    pub taps: Vec<Source>,
    #[serde(default = "default_featurizers", deserialize_with = "de_featurizers")]
    pub featurizer: Vec<Featurizer>,
    /// Also evaluate the concatenation of all requested taps per featurizer.
    #[serde(default)]
    pub combine_taps: bool,
    #[serde(default)]
    pub vlad: VladSettings,
    #[serde(default)]
    pub forest: ForestSettings,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    #[serde(default)]
    pub normalization: PixelNormalization,
    #[serde(default)]
    pub ascent: AscentSettings,
}

fn default_weights() -> WeightsSource {
    WeightsSource::Random { random: None }
}

fn default_taps() -> Vec<Source> {
    TapPoint::ALL.iter().map(|&t| Source::Tap(t)).collect()
}

fn default_featurizers() -> Vec<Featurizer> {
    vec![Featurizer::Mean]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

pub fn parse_sources(items: &[String]) -> std::result::Result<Vec<Source>, String> {
    let mut out = Vec::new();
    for s in items {
        if s.eq_ignore_ascii_case("all") {
            out.extend(default_taps());
        } else {
            out.push(s.parse::<Source>().map_err(|e| e.to_string())?);
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("taps must not be empty".into());
    }
    Ok(out)
}

fn de_sources<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Source>, D::Error> {
    parse_sources(&OneOrMany::deserialize(d)?.into_vec()).map_err(serde::de::Error::custom)
}

fn de_featurizers<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Featurizer>, D::Error> {
    let mut out = Vec::new();
    for s in OneOrMany::deserialize(d)?.into_vec() {
        let f = s.parse::<Featurizer>().map_err(serde::de::Error::custom)?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(serde::de::Error::custom("featurizer list must not be empty"));
    }
    Ok(out)
}

impl RunConfig {
    /// A config for `manifest` with every other field at its default.
    pub fn for_manifest(manifest: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            weights: default_weights(),
            taps: default_taps(),
            featurizer: default_featurizers(),
            combine_taps: false,
            vlad: VladSettings::default(),
            forest: ForestSettings::default(),
            cv: CvSettings::default(),
            output: default_output(),
            seed: 0,
            preprocess: PreprocessSpec::default(),
            normalization: PixelNormalization::default(),
            ascent: AscentSettings::default(),
        }
    }

    /// Parses JSON; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output = base.join(&cfg.output);
        if let WeightsSource::File(p) = &cfg.weights {
            cfg.weights = WeightsSource::File(base.join(p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.taps.is_empty() {
            return bad("taps must not be empty".into());
        }
        if self.forest.n_trees == 0 {
            return bad("forest.n_trees must be at least 1".into());
        }
        if self.cv.n_folds < 2 || self.cv.n_trials == 0 {
            return bad("cv needs n_folds >= 2 and n_trials >= 1".into());
        }
        if self.vlad.n_words == 0 || !(self.vlad.sample_fraction > 0.0 && self.vlad.sample_fraction <= 1.0) {
            return bad("vlad needs n_words >= 1 and sample_fraction in (0, 1]".into());
        }
        if self.ascent.iterations == 0 {
            return bad("ascent.iterations must be at least 1".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let f = &self.forest;
        TrainConfig {
            n_trees: f.n_trees,
            features_per_split: f.features_per_split,
            max_depth: f.max_depth,
            min_samples_split: f.min_samples_split,
            bootstrap: f.bootstrap,
            seed: rng::substream_seed(self.seed, FOREST_STREAM),
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            n_folds: self.cv.n_folds,
            n_trials: self.cv.n_trials,
            seed: rng::substream_seed(self.seed, CV_STREAM),
            forest: self.train_config(),
        }
    }

    pub fn vlad_seed(&self) -> u64 {
        rng::substream_seed(self.seed, VLAD_STREAM)
    }

    /// Ascent settings for the `index`-th visualized filter.
    pub fn ascent_config(&self, index: usize) -> AscentConfig {
        let a = &self.ascent;
        AscentConfig {
            size: a.size,
            iterations: a.iterations,
            step: a.step,
            init_range: a.init_range,
            seed: rng::nested_seed(self.seed, ASCENT_STREAM, index as u64),
            normalization: self.normalization,
        }
    }

    pub fn random_weights_seed(&self) -> Option<u64> {
        match self.weights {
            WeightsSource::Random { random } => {
                Some(random.unwrap_or_else(|| rng::substream_seed(self.seed, WEIGHTS_STREAM)))
            }
            WeightsSource::File(_) => None,
        }
    }
}
