//! Interpretability artifacts: filter textures by gradient ascent, activation
//! heat maps, and the textures singled out by forest importances or by
//! class-mean differences.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cnn::{ChannelOrder, Network, PixelNormalization, TapPoint, MIN_INPUT_SIDE};
use crate::error::{Error, Result};
use crate::featurize::{FeatureLabel, Source};
use crate::forest::{Matrix, RandomForest};
use crate::image::Image;
use crate::rng;
use crate::tensor::{self, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub size: usize,
    pub iterations: usize,
    /// Step length applied to the RMS-normalised gradient.
    pub step: f64,
    /// Half-width of the uniform noise around mid-gray used to start.
    pub init_range: f64,
    pub seed: u64,
    pub normalization: PixelNormalization,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            size: 128,
            iterations: 200,
            step: 1.0,
            init_range: 10.0,
            seed: 0,
            normalization: PixelNormalization::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    /// RGB rendering of the best input found, min-max scaled to 0..=255.
    pub image: Image,
    pub tap: TapPoint,
    pub filter: usize,
    pub initial_objective: f64,
    /// Best mean activation reached; never below `initial_objective`.
    pub objective: f64,
    /// Objective before each update, then after the last one.
    pub history: Vec<f64>,
    /// The gradient vanished, so the image is the rescaled starting noise.
    pub degenerate: bool,
}

/// Min-max scales a 3-channel map into an RGB image.
pub fn to_rgb_image(map: &FeatureMap<f32>, order: ChannelOrder) -> Result<Image> {
    if map.channels() != 3 {
        return Err(Error::Config(format!("RGB rendering needs 3 channels, got {}", map.channels())));
    }
    let (lo, hi) = min_max(map.values());
    let (h, w) = (map.height(), map.width());
    let mut px = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let src = if order == ChannelOrder::Bgr { 2 - c } else { c };
                px.push(scale_u8(map.get(src, y, x), lo, hi));
            }
        }
    }
    Image::new(w, h, 3, px)
}

/// Min-max scales channel 0 of a map into a grayscale image.
pub fn to_gray_image(map: &FeatureMap<f32>) -> Result<Image> {
    let plane = map.channel(0);
    let (lo, hi) = min_max(plane);
    Image::gray(map.width(), map.height(), plane.iter().map(|&v| scale_u8(v, lo, hi)).collect())
}

fn min_max(v: &[f32]) -> (f32, f32) {
    v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn scale_u8(v: f32, lo: f32, hi: f32) -> u8 {
    if hi > lo {
        Float::round((v - lo) / (hi - lo) * 255.0).clamp(0.0, 255.0) as u8
    } else {
        0
    }
}

fn check_filter(net: &Network<f32>, tap: TapPoint, filter: usize) -> Result<()> {
    let filters = net.filters_at(tap)?;
    if filter >= filters {
        return Err(Error::Index { what: "filter", index: filter, len: filters });
    }
    Ok(())
}

/// Maximises the mean activation of `filter` at `tap` by gradient ascent on
/// the input, starting from seeded noise around mid-gray. Each step moves
/// the image by `step * grad / rms(grad)`; the best iterate is returned.
pub fn texture_image(net: &Network<f32>, tap: TapPoint, filter: usize, cfg: &AscentConfig) -> Result<TextureImage> {
    check_filter(net, tap, filter)?;
    if cfg.iterations == 0 {
        return Err(Error::Argument("ascent needs at least one iteration".into()));
    }
    if cfg.size < MIN_INPUT_SIDE {
        return Err(Error::Size(format!("ascent image size {} is below {MIN_INPUT_SIDE}", cfg.size)));
    }
    let channels = net.config().in_channels;
    let mut r = rng::seeded(cfg.seed);
    let range = cfg.init_range;
    let means = cfg.normalization.means;
    let mut x = FeatureMap::from_fn(channels, cfg.size, cfg.size, |c, _, _| {
        let noise = if range > 0.0 { r.gen_range(-range..range) } else { 0.0 };
        (128.0 - means.get(c).copied().unwrap_or(0.0) as f64 + noise) as f32
    });

    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, FeatureMap<f32>)> = None;
    let mut degenerate = false;
    for _ in 0..cfg.iterations {
        let (obj, grad) = net.mean_activation_grad(&x, tap, filter)?;
        let obj = obj as f64;
        history.push(obj);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, x.clone()));
        }
        let g = grad.values();
        let rms = Float::sqrt(g.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / g.len() as f64);
        if rms == 0.0 || !rms.is_finite() {
            degenerate = true;
            break;
        }
        let scale = (cfg.step / rms) as f32;
        for (xi, &gi) in x.values_mut().iter_mut().zip(g) {
            *xi += scale * gi;
        }
    }
    if !degenerate {
        let obj = net.mean_activation(&x, tap, filter)? as f64;
        history.push(obj);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, x));
        }
    }
    let (objective, best_x) = best.expect("at least one iteration ran");
    let image = if channels == 3 { to_rgb_image(&best_x, cfg.normalization.order)? } else { to_gray_image(&best_x)? };
    Ok(TextureImage { image, tap, filter, initial_objective: history[0], objective, history, degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// The tapped activation of the filter (1 x tap height x tap width).
    pub map: FeatureMap<f32>,
    /// `map` resized bilinearly to the input's spatial size.
    pub upsampled: FeatureMap<f32>,
}

/// Where in the image a filter responds: its activation at `tap`, plus a
/// bilinear upsampling to the input size.
pub fn activation_heatmap(
    net: &Network<f32>,
    input: &FeatureMap<f32>,
    tap: TapPoint,
    filter: usize,
) -> Result<Heatmap> {
    check_filter(net, tap, filter)?;
    let maps = net.forward(input, &[tap])?;
    let map = maps[&tap].extract_channel(filter)?;
    let upsampled = tensor::resize_bilinear(&map, input.height(), input.width())?;
    Ok(Heatmap { map, upsampled })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedTexture {
    /// Column of the feature matrix.
    pub feature: usize,
    pub source: Source,
    pub filter: usize,
    pub value: f64,
}

fn per_filter_labels(labels: &[FeatureLabel]) -> Result<Vec<(Source, usize)>> {
    labels
        .iter()
        .map(|l| match l.filter() {
            Some(f) if l.featurizer.is_per_filter() => Ok((l.source, f)),
            _ => Err(Error::Unsupported(format!("{} features are not tied to a single filter", l.featurizer))),
        })
        .collect()
}

/// The `k` most important features of a forest trained on mean or max
/// features, by descending importance (ties to the lower filter index).
pub fn top_important_textures(forest: &RandomForest, labels: &[FeatureLabel], k: usize) -> Result<Vec<RankedTexture>> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let imp = forest.feature_importances();
    if imp.len() != labels.len() {
        return Err(Error::Argument(format!("{} importances but {} feature labels", imp.len(), labels.len())));
    }
    let info = per_filter_labels(labels)?;
    let mut ranked: Vec<RankedTexture> = info
        .into_iter()
        .enumerate()
        .map(|(i, (source, filter))| RankedTexture { feature: i, source, filter, value: imp[i] })
        .collect();
    ranked.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.filter.cmp(&b.filter)).then(a.feature.cmp(&b.feature)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTexture {
    pub class: usize,
    pub texture: RankedTexture,
}

/// One-vs-rest class-mean difference of every feature:
/// `scores[c][f] = mean(x[class c, f]) - mean(x[other classes, f])`,
/// classes in ascending label order.
pub fn class_mean_differences(x: &Matrix, labels: &[usize]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    if x.rows() != labels.len() {
        return Err(Error::Argument(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Argument("characteristic textures need at least two classes".into()));
    }
    let p = x.cols();
    let mut totals = alloc::vec![0.0f64; p];
    let mut class_sums = alloc::vec![alloc::vec![0.0f64; p]; classes.len()];
    let mut counts = alloc::vec![0usize; classes.len()];
    for (i, l) in labels.iter().enumerate() {
        let c = classes.binary_search(l).expect("label present");
        counts[c] += 1;
        for (f, &v) in x.row(i).iter().enumerate() {
            class_sums[c][f] += v as f64;
            totals[f] += v as f64;
        }
    }
    let n = labels.len();
    let scores = class_sums
        .iter()
        .zip(&counts)
        .map(|(sums, &nc)| (0..p).map(|f| sums[f] / nc as f64 - (totals[f] - sums[f]) / (n - nc) as f64).collect())
        .collect();
    Ok((classes, scores))
}

/// For each class, the feature whose class mean most exceeds its mean over
/// the other classes.
pub fn characteristic_textures(
    x: &Matrix,
    labels: &[usize],
    feature_labels: &[FeatureLabel],
) -> Result<Vec<CharacteristicTexture>> {
    if feature_labels.len() != x.cols() {
        return Err(Error::Argument(format!("{} columns but {} feature labels", x.cols(), feature_labels.len())));
    }
    let info = per_filter_labels(feature_labels)?;
    let (classes, scores) = class_mean_differences(x, labels)?;
    Ok(classes
        .into_iter()
        .zip(scores)
        .map(|(class, s)| {
            let best = (0..s.len()).fold(0, |b, f| if s[f] > s[b] { f } else { b });
            let (source, filter) = info[best];
            CharacteristicTexture { class, texture: RankedTexture { feature: best, source, filter, value: s[best] } }
        })
        .collect())
}
