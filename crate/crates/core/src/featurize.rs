//! Translation-invariant texture descriptors computed from tapped feature
//! maps `F` (filters x spatial locations): spatial mean, spatial max, Gram
//! matrix and VLAD, plus concatenation across taps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cnn::TapPoint;
use crate::error::{Error, Result};
use crate::kmeans::{self, Points};
use crate::rng;
use crate::tensor::FeatureMap;

pub const DEFAULT_N_WORDS: usize = 32;
pub const DEFAULT_VLAD_SIDE: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Featurizer {
    Mean,
    Max,
    Gram,
    Vlad,
}

impl Featurizer {
    pub const ALL: [Featurizer; 4] = [Featurizer::Vlad, Featurizer::Mean, Featurizer::Max, Featurizer::Gram];

    pub fn name(self) -> &'static str {
        match self {
            Featurizer::Mean => "mean",
            Featurizer::Max => "max",
            Featurizer::Gram => "gram",
            Featurizer::Vlad => "vlad",
        }
    }

    /// Feature count for a map with `filters` channels.
    pub fn feature_len(self, filters: usize, n_words: usize) -> usize {
        match self {
            Featurizer::Mean | Featurizer::Max => filters,
            Featurizer::Gram => filters * filters,
            Featurizer::Vlad => filters * n_words,
        }
    }

    /// Whether each feature is tied to exactly one filter.
    pub fn is_per_filter(self) -> bool {
        matches!(self, Featurizer::Mean | Featurizer::Max)
    }
}

impl fmt::Display for Featurizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Featurizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Featurizer::Mean),
            "max" => Ok(Featurizer::Max),
            "gram" => Ok(Featurizer::Gram),
            "vlad" => Ok(Featurizer::Vlad),
            _ => Err(Error::Argument(format!("unknown featurizer {s:?}"))),
        }
    }
}

/// Where a feature map came from: a network tap, or the preprocessed image
/// itself (the untransformed baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Raw,
    Tap(TapPoint),
}

impl Source {
    pub fn tap(self) -> Option<TapPoint> {
        match self {
            Source::Raw => None,
            Source::Tap(t) => Some(t),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Raw => f.write_str("raw"),
            Source::Tap(t) => f.write_str(t.name()),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("raw") {
            Ok(Source::Raw)
        } else {
            s.parse().map(Source::Tap)
        }
    }
}

impl From<TapPoint> for Source {
    fn from(t: TapPoint) -> Self {
        Source::Tap(t)
    }
}

/// What a single feature measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Element {
    Filter(u32),
    Pair(u32, u32),
    Word { word: u32, filter: u32 },
}

/// Provenance of one feature, rendered as e.g. `mean:C33:f017`,
/// `gram:C12:i003_j041` or `vlad:C43:w05_f200`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLabel {
    pub featurizer: Featurizer,
    pub source: Source,
    pub element: Element,
}

impl FeatureLabel {
    /// The filter behind a per-filter (mean or max) feature.
    pub fn filter(&self) -> Option<usize> {
        match self.element {
            Element::Filter(f) => Some(f as usize),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.featurizer, self.source)?;
        match self.element {
            Element::Filter(i) => write!(f, "f{i:03}"),
            Element::Pair(i, j) => write!(f, "i{i:03}_j{j:03}"),
            Element::Word { word, filter } => write!(f, "w{word:02}_f{filter:03}"),
        }
    }
}

impl FromStr for FeatureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("malformed feature label {s:?}"));
        let mut parts = s.splitn(3, ':');
        let featurizer: Featurizer = parts.next().ok_or_else(bad)?.parse()?;
        let source: Source = parts.next().ok_or_else(bad)?.parse()?;
        let rest = parts.next().ok_or_else(bad)?;
        let num = |p: &str, prefix: char| -> Result<u32> {
            p.strip_prefix(prefix).and_then(|d| d.parse().ok()).ok_or_else(bad)
        };
        let element = match featurizer {
            Featurizer::Mean | Featurizer::Max => Element::Filter(num(rest, 'f')?),
            Featurizer::Gram => {
                let (i, j) = rest.split_once('_').ok_or_else(bad)?;
                Element::Pair(num(i, 'i')?, num(j, 'j')?)
            }
            Featurizer::Vlad => {
                let (w, f) = rest.split_once('_').ok_or_else(bad)?;
                Element::Word { word: num(w, 'w')?, filter: num(f, 'f')? }
            }
        };
        Ok(FeatureLabel { featurizer, source, element })
    }
}

/// A flat texture descriptor with one provenance label per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    featurizer: Featurizer,
    sources: Vec<Source>,
    values: Vec<f32>,
    labels: Vec<FeatureLabel>,
}

impl FeatureVector {
    pub fn new(
        featurizer: Featurizer,
        sources: Vec<Source>,
        values: Vec<f32>,
        labels: Vec<FeatureLabel>,
    ) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::Config(format!("{} values but {} labels", values.len(), labels.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature vector contains non-finite values".into()));
        }
        Ok(FeatureVector { featurizer, sources, values, labels })
    }

    pub fn featurizer(&self) -> Featurizer {
        self.featurizer
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn labels(&self) -> &[FeatureLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Joined source names, e.g. `C12+C22`.
    pub fn source_tag(&self) -> String {
        sources_tag(&self.sources)
    }
}

pub fn sources_tag(sources: &[Source]) -> String {
    let mut s = String::new();
    for (i, src) in sources.iter().enumerate() {
        if i > 0 {
            s.push('+');
        }
        s.push_str(&format!("{src}"));
    }
    s
}

fn per_filter(featurizer: Featurizer, source: Source, values: Vec<f32>) -> FeatureVector {
    let labels =
        (0..values.len()).map(|i| FeatureLabel { featurizer, source, element: Element::Filter(i as u32) }).collect();
    FeatureVector { featurizer, sources: vec![source], values, labels }
}

/// Spatial average of each channel: `mean_j F_ij`.
pub fn mean_features(map: &FeatureMap<f32>, source: Source) -> FeatureVector {
    let area = map.area() as f64;
    let values =
        (0..map.channels()).map(|c| (map.channel(c).iter().map(|&v| v as f64).sum::<f64>() / area) as f32).collect();
    per_filter(Featurizer::Mean, source, values)
}

/// Spatial maximum of each channel: `max_j F_ij`.
pub fn max_features(map: &FeatureMap<f32>, source: Source) -> FeatureVector {
    let values =
        (0..map.channels()).map(|c| map.channel(c).iter().copied().fold(f32::NEG_INFINITY, f32::max)).collect();
    per_filter(Featurizer::Max, source, values)
}

/// Full Gram matrix `G_ij = sum_k F_ik F_jk`, flattened row-major.
pub fn gram_features(map: &FeatureMap<f32>, source: Source) -> FeatureVector {
    let n = map.channels();
    let planes: Vec<Vec<f64>> = (0..n).map(|c| map.channel(c).iter().map(|&v| v as f64).collect()).collect();
    let mut values = vec![0.0f32; n * n];
    for i in 0..n {
        for j in i..n {
            let g = planes[i].iter().zip(&planes[j]).map(|(a, b)| a * b).sum::<f64>() as f32;
            values[i * n + j] = g;
            values[j * n + i] = g;
        }
    }
    let mut labels = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            labels.push(FeatureLabel {
                featurizer: Featurizer::Gram,
                source,
                element: Element::Pair(i as u32, j as u32),
            });
        }
    }
    FeatureVector { featurizer: Featurizer::Gram, sources: vec![source], values, labels }
}

/// Visual-word centroids for VLAD encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VladDictionary {
    source: Source,
    dim: usize,
    centroids: Vec<f64>,
}

impl VladDictionary {
    pub fn new(source: Source, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!("{} centroid values do not form words of dim {dim}", centroids.len())));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dictionary contains non-finite centroids".into()));
        }
        Ok(VladDictionary { source, dim, centroids })
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn n_words(&self) -> usize {
        self.centroids.len() / self.dim
    }

    /// Descriptor length (filters at the tap).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, word: usize) -> &[f64] {
        &self.centroids[word * self.dim..(word + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }
}

/// Per-location descriptors of a map: row `j` holds `F[:, j]`.
pub fn descriptors(map: &FeatureMap<f32>) -> Vec<f32> {
    let (c, _, _) = map.shape();
    let area = map.area();
    let mut out = vec![0.0f32; area * c];
    for ch in 0..c {
        for (j, &v) in map.channel(ch).iter().enumerate() {
            out[j * c + ch] = v;
        }
    }
    out
}

/// Indices of the images used to build a dictionary: `max(1, floor(n * fraction))`
/// images chosen by a seeded shuffle, returned in ascending order.
pub fn dictionary_sample(n_images: usize, sample_fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n_images == 0 {
        return Err(Error::Argument("no images to build a dictionary from".into()));
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::Argument(format!("sample fraction must lie in (0, 1], got {sample_fraction}")));
    }
    let take = (Float::floor(n_images as f64 * sample_fraction) as usize).clamp(1, n_images);
    let mut idx: Vec<usize> = (0..n_images).collect();
    idx.shuffle(&mut rng::seeded(seed));
    idx.truncate(take);
    idx.sort_unstable();
    Ok(idx)
}

/// Clusters every spatial descriptor of the given maps into `n_words` words.
pub fn fit_vlad_dictionary(
    maps: &[&FeatureMap<f32>],
    source: Source,
    n_words: usize,
    seed: u64,
) -> Result<VladDictionary> {
    let first = maps.first().ok_or_else(|| Error::Argument("no feature maps for the dictionary".into()))?;
    let dim = first.channels();
    if maps.iter().any(|m| m.channels() != dim) {
        return Err(Error::Config("dictionary maps disagree on channel count".into()));
    }
    let mut pooled = Vec::with_capacity(maps.iter().map(|m| m.values().len()).sum());
    for m in maps {
        pooled.extend(descriptors(m));
    }
    let km = kmeans::kmeans(Points::new(&pooled, dim)?, n_words, seed, kmeans::DEFAULT_MAX_ITERATIONS)?;
    VladDictionary::new(source, dim, km.centroids)
}

/// Samples images per [`dictionary_sample`] and fits a dictionary on them.
pub fn build_vlad_dictionary(
    maps: &[FeatureMap<f32>],
    source: Source,
    n_words: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<VladDictionary> {
    let chosen = dictionary_sample(maps.len(), sample_fraction, seed)?;
    let sampled: Vec<&FeatureMap<f32>> = chosen.iter().map(|&i| &maps[i]).collect();
    fit_vlad_dictionary(&sampled, source, n_words, rng::substream_seed(seed, 1))
}

/// Unnormalised VLAD: per word, the sum of residuals (descriptor - centroid)
/// over descriptors hard-assigned to that word, blocks in word order.
pub fn vlad_residuals(map: &FeatureMap<f32>, dict: &VladDictionary) -> Result<Vec<f64>> {
    if map.channels() != dict.dim() {
        return Err(Error::Config(format!("dictionary built for {} filters, map has {}", dict.dim(), map.channels())));
    }
    let dim = dict.dim();
    let mut acc = vec![0.0f64; dict.n_words() * dim];
    for d in descriptors(map).chunks_exact(dim) {
        let (w, _) = kmeans::nearest(d, dict.centroids(), dim);
        let c = dict.centroid(w);
        for ((a, &x), &m) in acc[w * dim..(w + 1) * dim].iter_mut().zip(d).zip(c) {
            *a += x as f64 - m;
        }
    }
    Ok(acc)
}

/// VLAD encoding with signed square root and global L2 normalisation; an
/// all-zero residual vector stays zero.
pub fn vlad_features(map: &FeatureMap<f32>, dict: &VladDictionary, source: Source) -> Result<FeatureVector> {
    let mut v = vlad_residuals(map, dict)?;
    for x in v.iter_mut() {
        *x = Float::signum(*x) * Float::sqrt(Float::abs(*x));
    }
    let norm = Float::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    let dim = dict.dim();
    let labels = (0..v.len())
        .map(|i| FeatureLabel {
            featurizer: Featurizer::Vlad,
            source,
            element: Element::Word { word: (i / dim) as u32, filter: (i % dim) as u32 },
        })
        .collect();
    Ok(FeatureVector {
        featurizer: Featurizer::Vlad,
        sources: vec![source],
        values: v.into_iter().map(|x| x as f32).collect(),
        labels,
    })
}

/// Featurizes one map with a single-map featurizer. VLAD needs a dictionary.
pub fn featurize(
    map: &FeatureMap<f32>,
    featurizer: Featurizer,
    source: Source,
    dict: Option<&VladDictionary>,
) -> Result<FeatureVector> {
    match featurizer {
        Featurizer::Mean => Ok(mean_features(map, source)),
        Featurizer::Max => Ok(max_features(map, source)),
        Featurizer::Gram => Ok(gram_features(map, source)),
        Featurizer::Vlad => {
            let dict = dict.ok_or_else(|| Error::Argument("VLAD featurization needs a dictionary".into()))?;
            vlad_features(map, dict, source)
        }
    }
}

/// Concatenates per-tap vectors of one featurizer, ordered by source.
pub fn concat_taps(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let first = vectors.first().ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
    let featurizer = first.featurizer;
    if vectors.iter().any(|v| v.featurizer != featurizer) {
        return Err(Error::Argument("cannot concatenate different featurizers".into()));
    }
    let mut order: Vec<&FeatureVector> = vectors.iter().collect();
    order.sort_by_key(|v| v.sources.first().copied());
    let mut sources: Vec<Source> = Vec::new();
    for v in &order {
        for s in &v.sources {
            if sources.contains(s) {
                return Err(Error::Argument(format!("tap {s} appears twice")));
            }
            sources.push(*s);
        }
    }
    sources.sort();
    let mut values = Vec::with_capacity(order.iter().map(|v| v.len()).sum());
    let mut labels = Vec::with_capacity(values.capacity());
    for v in order {
        values.extend_from_slice(&v.values);
        labels.extend_from_slice(&v.labels);
    }
    Ok(FeatureVector { featurizer, sources, values, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn label_formats() {
        let l = FeatureLabel {
            featurizer: Featurizer::Mean,
            source: Source::Tap(TapPoint::C33),
            element: Element::Filter(17),
        };
        assert_eq!(l.to_string(), "mean:C33:f017");
        let g = FeatureLabel {
            featurizer: Featurizer::Gram,
            source: Source::Tap(TapPoint::C12),
            element: Element::Pair(3, 41),
        };
        assert_eq!(g.to_string(), "gram:C12:i003_j041");
        let v = FeatureLabel {
            featurizer: Featurizer::Vlad,
            source: Source::Tap(TapPoint::C43),
            element: Element::Word { word: 5, filter: 200 },
        };
        assert_eq!(v.to_string(), "vlad:C43:w05_f200");
        for x in [l, g, v] {
            assert_eq!(x.to_string().parse::<FeatureLabel>().unwrap(), x);
        }
        assert!("mean:raw:f002".parse::<FeatureLabel>().is_ok());
        assert!("mean:C33:x1".parse::<FeatureLabel>().is_err());
    }

    #[test]
    fn mean_max_gram_basics() {
        let ones = FeatureMap::filled(64, 8, 8, 1.0f32);
        let m = mean_features(&ones, TapPoint::C12.into());
        assert_eq!(m.values(), &[1.0; 64][..]);

        let mut single = FeatureMap::zeros(2, 3, 3);
        single.set(1, 2, 0, 5.0);
        assert_eq!(max_features(&single, Source::Raw).values(), &[0.0, 5.0]);

        let f = FeatureMap::new(1, 2, 2, vec![1.0f32; 4]).unwrap();
        assert_eq!(gram_features(&f, Source::Raw).values(), &[4.0]);
    }

    #[test]
    fn vlad_zero_when_descriptors_sit_on_centroid() {
        let map = FeatureMap::from_fn(3, 4, 4, |c, _, _| c as f32);
        let dict = VladDictionary::new(Source::Raw, 3, vec![0.0, 1.0, 2.0, 9.0, 9.0, 9.0]).unwrap();
        let v = vlad_features(&map, &dict, Source::Raw).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.values().iter().all(|&x| x == 0.0));
        let wrong = FeatureMap::zeros(4, 2, 2);
        assert!(matches!(vlad_features(&wrong, &dict, Source::Raw), Err(Error::Config(_))));
    }

    #[test]
    fn dictionary_sample_sizes() {
        assert_eq!(dictionary_sample(10, 0.2, 1).unwrap().len(), 2);
        assert_eq!(dictionary_sample(3, 0.2, 1).unwrap().len(), 1);
        assert_eq!(dictionary_sample(7, 1.0, 1).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(dictionary_sample(0, 0.5, 1).is_err());
        assert!(dictionary_sample(5, 0.0, 1).is_err());
    }

    #[test]
    fn concat_rules() {
        let a = mean_features(&FeatureMap::filled(2, 2, 2, 1.0), TapPoint::C22.into());
        let b = mean_features(&FeatureMap::filled(3, 2, 2, 2.0), TapPoint::C12.into());
        let c = concat_taps(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.values(), &[2.0, 2.0, 2.0, 1.0, 1.0]);
        assert_eq!(c.source_tag(), "C12+C22");
        assert_eq!(concat_taps(core::slice::from_ref(&a)).unwrap(), a);
        assert!(concat_taps(&[a.clone(), a.clone()]).is_err());
        let g = gram_features(&FeatureMap::filled(2, 2, 2, 1.0), TapPoint::C33.into());
        assert!(concat_taps(&[a, g]).is_err());
    }
}
