//! Dataset loading, featurization, cross-validation and visualization over
//! a whole manifest. Work is spread over the current rayon pool; every
//! result is collected in manifest order, so output never depends on the
//! number of threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use microtex_core::cnn::{self, Network, VggConfig, WeightStore};
use microtex_core::dataset::{self, PreprocessSpec};
use microtex_core::eval::{CvPlan, EvalReport};
use microtex_core::featurize::{self, FeatureLabel, Featurizer, Source, VladDictionary};
use microtex_core::forest::{Matrix, RandomForest};
use microtex_core::{FeatureMap, Image, PixelNormalization, TapPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, WeightsSource};
use crate::error::{CliError, Result};
use crate::imageio;
use crate::manifest::{self, Manifest};
use crate::weights;

/// Manifest records with their decoded, preprocessed images.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub images: Vec<Image>,
}

impl Dataset {
    pub fn load(path: &Path, spec: &PreprocessSpec) -> Result<Self> {
        let manifest = manifest::load_manifest(path)?;
        let images = manifest
            .records
            .par_iter()
            .map(|r| {
                let img = imageio::load_image(&r.path)?;
                dataset::apply_preprocess(&img, spec)
                    .map_err(|e| CliError::Image { path: r.path.clone(), message: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, images })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.manifest.label_indices()
    }
}

pub fn load_network(cfg: &RunConfig) -> Result<Network<f32>> {
    let store = match &cfg.weights {
        WeightsSource::File(path) => {
            if !path.is_file() {
                return Err(CliError::Config(format!("weights file {} does not exist", path.display())));
            }
            weights::load_weights(path)?
        }
        WeightsSource::Random { .. } => {
            WeightStore::random(VggConfig::vgg16(), cfg.random_weights_seed().expect("random weights"))
        }
    };
    Ok(Network::from_store(&store))
}

/// A feature matrix for one featurizer over one or more sources.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub featurizer: Featurizer,
    pub sources: Vec<Source>,
    pub labels: Vec<FeatureLabel>,
    pub matrix: Matrix,
}

impl FeatureSet {
    pub fn tag(&self) -> String {
        featurize::sources_tag(&self.sources)
    }

    /// Column-wise concatenation in source order.
    pub fn combine(sets: &[&FeatureSet]) -> Result<FeatureSet> {
        let first = sets.first().ok_or_else(|| CliError::Usage("nothing to combine".into()))?;
        let mut sorted: Vec<&FeatureSet> = sets.to_vec();
        sorted.sort_by(|a, b| a.sources.cmp(&b.sources));
        let mut matrix = sorted[0].matrix.clone();
        let mut sources = sorted[0].sources.clone();
        let mut labels = sorted[0].labels.clone();
        for s in &sorted[1..] {
            if s.featurizer != first.featurizer {
                return Err(CliError::Usage("cannot combine different featurizers".into()));
            }
            if s.sources.iter().any(|x| sources.contains(x)) {
                return Err(CliError::Usage(format!("source {} appears twice", s.tag())));
            }
            matrix = matrix.hstack(&s.matrix)?;
            sources.extend(&s.sources);
            labels.extend(s.labels.iter().copied());
        }
        Ok(FeatureSet { featurizer: first.featurizer, sources, labels, matrix })
    }
}

fn network_input(img: &Image, norm: &PixelNormalization, resize: Option<(usize, usize)>) -> Result<FeatureMap<f32>> {
    let img = match resize {
        Some((h, w)) if (img.height(), img.width()) != (h, w) => dataset::resize(img, h, w)?,
        _ => img.clone(),
    };
    Ok(cnn::preprocess(&img, norm)?.into_map())
}

/// Activations of one image at every requested source.
fn source_maps(
    net: &Network<f32>,
    input: FeatureMap<f32>,
    sources: &[Source],
) -> Result<BTreeMap<Source, FeatureMap<f32>>> {
    let taps: Vec<TapPoint> = sources.iter().filter_map(|s| s.tap()).collect();
    let mut out = BTreeMap::new();
    if !taps.is_empty() {
        for (tap, m) in net.forward(&input, &taps)? {
            out.insert(Source::Tap(tap), m);
        }
    }
    if sources.contains(&Source::Raw) {
        out.insert(Source::Raw, input);
    }
    Ok(out)
}

/// Fits one dictionary per source on a seeded sample of the images. Every
/// source uses the same image sample and k-means seed.
pub fn vlad_dictionaries(
    net: &Network<f32>,
    images: &[Image],
    cfg: &RunConfig,
) -> Result<BTreeMap<Source, VladDictionary>> {
    let seed = cfg.vlad_seed();
    let chosen = featurize::dictionary_sample(images.len(), cfg.vlad.sample_fraction, seed)?;
    let maps = chosen
        .par_iter()
        .map(|&i| source_maps(net, network_input(&images[i], &cfg.normalization, cfg.vlad.resize)?, &cfg.taps))
        .collect::<Result<Vec<_>>>()?;
    cfg.taps
        .par_iter()
        .map(|&src| {
            let refs: Vec<&FeatureMap<f32>> = maps.iter().map(|m| &m[&src]).collect();
            let dict = featurize::fit_vlad_dictionary(
                &refs,
                src,
                cfg.vlad.n_words,
                microtex_core::rng::substream_seed(seed, 1),
            )?;
            Ok((src, dict))
        })
        .collect()
}

/// Computes every (featurizer, source) feature matrix requested by `cfg`,
/// plus the all-source concatenation per featurizer when `combine_taps` is
/// set and more than one source is requested.
pub fn compute_features(net: &Network<f32>, data: &Dataset, cfg: &RunConfig) -> Result<Vec<FeatureSet>> {
    let mut rows: BTreeMap<(Featurizer, Source), Vec<featurize::FeatureVector>> = BTreeMap::new();
    let direct: Vec<Featurizer> = cfg.featurizer.iter().copied().filter(|&f| f != Featurizer::Vlad).collect();
    if !direct.is_empty() {
        let per_image = data
            .images
            .par_iter()
            .map(|img| {
                let maps = source_maps(net, network_input(img, &cfg.normalization, None)?, &cfg.taps)?;
                let mut v = Vec::new();
                for &f in &direct {
                    for (&src, m) in &maps {
                        v.push(((f, src), featurize::featurize(m, f, src, None)?));
                    }
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        for img in per_image {
            for (key, fv) in img {
                rows.entry(key).or_default().push(fv);
            }
        }
    }
    if cfg.featurizer.contains(&Featurizer::Vlad) {
        let dicts = vlad_dictionaries(net, &data.images, cfg)?;
        let per_image = data
            .images
            .par_iter()
            .map(|img| {
                let maps = source_maps(net, network_input(img, &cfg.normalization, cfg.vlad.resize)?, &cfg.taps)?;
                maps.iter()
                    .map(|(&src, m)| Ok(((Featurizer::Vlad, src), featurize::vlad_features(m, &dicts[&src], src)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for img in per_image {
            for (key, fv) in img {
                rows.entry(key).or_default().push(fv);
            }
        }
    }

    let mut sets = Vec::new();
    for &f in &cfg.featurizer {
        let mut singles = Vec::new();
        for &src in &cfg.taps {
            let vs = &rows[&(f, src)];
            let flat: Vec<&[f32]> = vs.iter().map(|v| v.values()).collect();
            let matrix = Matrix::from_rows(&flat)?;
            singles.push(FeatureSet { featurizer: f, sources: vec![src], labels: vs[0].labels().to_vec(), matrix });
        }
        let combined = if cfg.combine_taps && singles.len() > 1 {
            Some(FeatureSet::combine(&singles.iter().collect::<Vec<_>>())?)
        } else {
            None
        };
        sets.extend(singles);
        sets.extend(combined);
    }
    Ok(sets)
}

/// Runs all cross-validation trials of every feature set, trials spread
/// over the pool.
pub fn evaluate_sets(sets: &[FeatureSet], labels: &[usize], cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let cv = cfg.cv_config();
    let plans = sets.iter().map(|s| CvPlan::new(&s.matrix, labels, &cv)).collect::<microtex_core::Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..plans.len()).flat_map(|p| (0..cv.n_trials).map(move |t| (p, t))).collect();
    let scores = jobs.par_iter().map(|&(p, t)| plans[p].run_trial(t)).collect::<microtex_core::Result<Vec<f64>>>()?;
    Ok(sets
        .iter()
        .zip(scores.chunks(cv.n_trials))
        .map(|(s, sc)| EvalReport::from_scores(s.featurizer.name(), s.tag(), sc.to_vec()))
        .collect())
}

/// A forest trained on a whole feature set, with what is needed to
/// interpret it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestDump {
    pub featurizer: Featurizer,
    pub sources: Vec<Source>,
    pub feature_labels: Vec<String>,
    pub classes: Vec<String>,
    pub forest: RandomForest,
}

impl ForestDump {
    pub fn train(set: &FeatureSet, labels: &[usize], classes: &[String], cfg: &RunConfig) -> Result<Self> {
        let forest = RandomForest::fit(&set.matrix, labels, &cfg.train_config())?;
        Ok(ForestDump {
            featurizer: set.featurizer,
            sources: set.sources.clone(),
            feature_labels: set.labels.iter().map(|l| l.to_string()).collect(),
            classes: classes.to_vec(),
            forest,
        })
    }

    pub fn labels(&self) -> Result<Vec<FeatureLabel>> {
        self.feature_labels.iter().map(|s| s.parse().map_err(CliError::Core)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn output_name(mode: &str, tap: Source, filter: usize) -> String {
    format!("{mode}_{tap}_f{filter:03}.png")
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}
