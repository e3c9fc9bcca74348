//! The VGG16 convolutional stack: architecture, weights, pixel
//! preprocessing, forward pass with tap extraction, and the input gradient
//! of a filter's mean activation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;
use crate::tensor::{self, ConvKernel, FeatureMap, Scalar};

/// Smallest side accepted by [`preprocess`]; five 2x2 pools stay valid.
pub const MIN_INPUT_SIDE: usize = 32;

/// Standard ImageNet channel means in RGB order.
pub const IMAGENET_MEAN_RGB: [f32; 3] = [123.68, 116.779, 103.939];

/// Last convolution of each VGG stack, where feature maps are extracted.
/// The tap is taken after the layer's ReLU and before the stack's pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TapPoint {
    C12,
    C22,
    C33,
    C43,
    C53,
}

impl TapPoint {
    pub const ALL: [TapPoint; 5] = [TapPoint::C12, TapPoint::C22, TapPoint::C33, TapPoint::C43, TapPoint::C53];

    /// 1-based stack index.
    pub fn stack(self) -> usize {
        self as usize + 1
    }

    pub fn from_stack(stack: usize) -> Option<TapPoint> {
        TapPoint::ALL.get(stack.checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TapPoint::C12 => "C12",
            TapPoint::C22 => "C22",
            TapPoint::C33 => "C33",
            TapPoint::C43 => "C43",
            TapPoint::C53 => "C53",
        }
    }
}

impl fmt::Display for TapPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TapPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TapPoint::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown tap point {s:?}")))
    }
}

/// Architecture of a VGG-style stack: per stack, (conv layer count, filters).
/// Every convolution is 3x3 and every stack but the last ends in a 2x2 pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VggConfig {
    pub in_channels: usize,
    pub stacks: Vec<(usize, usize)>,
}

impl VggConfig {
    pub fn vgg16() -> Self {
        VggConfig { in_channels: 3, stacks: alloc::vec![(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)] }
    }

    /// A reduced stack for tests and demos. At most five stacks.
    pub fn custom(in_channels: usize, stacks: Vec<(usize, usize)>) -> Result<Self> {
        if stacks.is_empty() || stacks.len() > 5 {
            return Err(Error::Argument(format!("a VGG stack has 1..=5 stacks, got {}", stacks.len())));
        }
        if in_channels == 0 || stacks.iter().any(|&(n, f)| n == 0 || f == 0) {
            return Err(Error::Argument("layer and filter counts must be positive".into()));
        }
        Ok(VggConfig { in_channels, stacks })
    }

    pub fn conv_layer_count(&self) -> usize {
        self.stacks.iter().map(|s| s.0).sum()
    }

    /// Filter count at the given tap, if the network reaches it.
    pub fn filters_at(&self, tap: TapPoint) -> Option<usize> {
        self.stacks.get(tap.stack() - 1).map(|s| s.1)
    }

    pub fn taps(&self) -> impl Iterator<Item = TapPoint> + '_ {
        TapPoint::ALL.into_iter().take(self.stacks.len())
    }

    /// (name, out, in) for every convolution in network order.
    pub fn layers(&self) -> Vec<(String, usize, usize)> {
        let mut layers = Vec::with_capacity(self.conv_layer_count());
        let mut in_c = self.in_channels;
        for (s, &(count, filters)) in self.stacks.iter().enumerate() {
            for l in 0..count {
                layers.push((layer_name(s + 1, l + 1), filters, in_c));
                in_c = filters;
            }
        }
        layers
    }

    /// Spatial size of the tap output for an (h, w) input.
    pub fn tap_dims(&self, tap: TapPoint, height: usize, width: usize) -> (usize, usize) {
        (1..tap.stack()).fold((height, width), |(h, w), _| (h / 2, w / 2))
    }
}

pub fn layer_name(stack: usize, index: usize) -> String {
    format!("conv{stack}_{index}")
}

/// Convolution kernels keyed by layer name ("conv{stack}_{index}"), validated
/// against a [`VggConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    config: VggConfig,
    layers: Vec<(String, ConvKernel<f32>)>,
}

impl WeightStore {
    /// Assembles a store from named kernels; every layer of `config` must be
    /// present with exactly its 3x3 shape and no extra layers may appear.
    pub fn from_named(config: VggConfig, mut named: BTreeMap<String, ConvKernel<f32>>) -> Result<Self> {
        let mut layers = Vec::with_capacity(config.conv_layer_count());
        for (name, out_c, in_c) in config.layers() {
            let kernel = named.remove(&name).ok_or_else(|| Error::Schema(format!("missing layer {name}")))?;
            let expected = [out_c, in_c, 3, 3];
            if kernel.shape() != expected {
                return Err(Error::Schema(format!(
                    "layer {name} has shape {:?}, expected {:?}",
                    kernel.shape(),
                    expected
                )));
            }
            layers.push((name, kernel));
        }
        if let Some(extra) = named.keys().next() {
            return Err(Error::Schema(format!("unexpected layer {extra}")));
        }
        Ok(WeightStore { config, layers })
    }

    /// He-normal kernels with zero biases, seeded.
    pub fn random(config: VggConfig, seed: u64) -> Self {
        let mut named = BTreeMap::new();
        for (i, (name, out_c, in_c)) in config.layers().into_iter().enumerate() {
            let mut r = rng::substream(seed, i as u64);
            let std = Float::sqrt(2.0 / (in_c * 9) as f32);
            let normal = Normal::new(0.0f32, std).expect("positive std");
            let weights = (0..out_c * in_c * 9).map(|_| normal.sample(&mut r)).collect();
            let kernel =
                ConvKernel::new(out_c, in_c, 3, 3, weights, alloc::vec![0.0; out_c]).expect("shape is consistent");
            named.insert(name, kernel);
        }
        WeightStore::from_named(config, named).expect("random store matches its config")
    }

    /// Every weight and bias set to zero.
    pub fn zeros(config: VggConfig) -> Self {
        let mut named = BTreeMap::new();
        for (name, out_c, in_c) in config.layers() {
            let kernel =
                ConvKernel::new(out_c, in_c, 3, 3, alloc::vec![0.0; out_c * in_c * 9], alloc::vec![0.0; out_c])
                    .expect("shape is consistent");
            named.insert(name, kernel);
        }
        WeightStore::from_named(config, named).expect("zero store matches its config")
    }

    pub fn config(&self) -> &VggConfig {
        &self.config
    }

    /// Layers in network order.
    pub fn layers(&self) -> &[(String, ConvKernel<f32>)] {
        &self.layers
    }

    pub fn get(&self, name: &str) -> Option<&ConvKernel<f32>> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, k)| k)
    }
}

/// Channel order expected by the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

/// Per-channel mean subtraction applied to raw 8-bit pixels. `means` are
/// given in the network's channel order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelNormalization {
    pub means: [f32; 3],
    pub order: ChannelOrder,
}

impl Default for PixelNormalization {
    fn default() -> Self {
        PixelNormalization { means: IMAGENET_MEAN_RGB, order: ChannelOrder::Rgb }
    }
}

/// Mean-subtracted 3-channel network input.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage(FeatureMap<f32>);

impl PreprocessedImage {
    /// Wraps a map that is already in network input space.
    pub fn from_map(map: FeatureMap<f32>) -> Result<Self> {
        if map.channels() != 3 {
            return Err(Error::Config(format!("network input needs 3 channels, got {}", map.channels())));
        }
        Ok(PreprocessedImage(map))
    }

    pub fn map(&self) -> &FeatureMap<f32> {
        &self.0
    }

    pub fn into_map(self) -> FeatureMap<f32> {
        self.0
    }
}

/// Converts 8-bit pixels into network input: grayscale is replicated to three
/// channels, channels are reordered if requested, and means are subtracted.
pub fn preprocess(image: &Image, norm: &PixelNormalization) -> Result<PreprocessedImage> {
    if image.width() < MIN_INPUT_SIDE || image.height() < MIN_INPUT_SIDE {
        return Err(Error::Size(format!(
            "image {}x{} is smaller than {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}",
            image.width(),
            image.height()
        )));
    }
    let map = FeatureMap::from_fn(3, image.height(), image.width(), |c, y, x| {
        let src = match (image.channels(), norm.order) {
            (1, _) => 0,
            (_, ChannelOrder::Rgb) => c,
            (_, ChannelOrder::Bgr) => 2 - c,
        };
        image.pixel(x, y, src) as f32 - norm.means[c]
    });
    Ok(PreprocessedImage(map))
}

/// Inverse of [`preprocess`] up to rounding: adds the means back and returns
/// the map in network channel order (no clamping).
pub fn add_means(map: &FeatureMap<f32>, norm: &PixelNormalization) -> FeatureMap<f32> {
    FeatureMap::from_fn(map.channels(), map.height(), map.width(), |c, y, x| {
        map.get(c, y, x) + norm.means.get(c).copied().unwrap_or(0.0)
    })
}

/// A VGG stack with kernels converted to the working precision `T`.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    config: VggConfig,
    stacks: Vec<Vec<ConvKernel<T>>>,
}

/// Activations saved during a forward pass for the backward traversal.
struct Trace<T: Scalar> {
    /// Per stack, per layer: (conv input, pre-activation).
    layers: Vec<Vec<(FeatureMap<T>, FeatureMap<T>)>>,
    /// Per stack after the first: the pooling input.
    pool_inputs: Vec<FeatureMap<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn from_store(store: &WeightStore) -> Self {
        let mut kernels = store.layers().iter().map(|(_, k)| k.cast::<T>());
        let stacks = store.config().stacks.iter().map(|&(count, _)| kernels.by_ref().take(count).collect()).collect();
        Network { config: store.config().clone(), stacks }
    }

    pub fn random(config: VggConfig, seed: u64) -> Self {
        Self::from_store(&WeightStore::random(config, seed))
    }

    pub fn config(&self) -> &VggConfig {
        &self.config
    }

    pub fn filters_at(&self, tap: TapPoint) -> Result<usize> {
        self.config.filters_at(tap).ok_or_else(|| {
            Error::Argument(format!("tap {tap} is beyond this {}-stack network", self.config.stacks.len()))
        })
    }

    fn check_input(&self, input: &FeatureMap<T>) -> Result<()> {
        if input.channels() != self.config.in_channels {
            return Err(Error::Config(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                input.channels()
            )));
        }
        Ok(())
    }

    /// Runs the stack up to the deepest requested tap and returns the
    /// post-ReLU activation at each requested tap.
    pub fn forward(&self, input: &FeatureMap<T>, taps: &[TapPoint]) -> Result<BTreeMap<TapPoint, FeatureMap<T>>> {
        self.check_input(input)?;
        let deepest =
            taps.iter().copied().max().ok_or_else(|| Error::Argument("at least one tap is required".into()))?;
        self.filters_at(deepest)?;

        let mut out = BTreeMap::new();
        let mut x = input.clone();
        for (s, stack) in self.stacks.iter().enumerate().take(deepest.stack()) {
            if s > 0 {
                x = tensor::maxpool2(&x)?;
            }
            for kernel in stack {
                x = tensor::conv2d(&x, kernel)?;
                tensor::relu_in_place(&mut x);
            }
            let tap = TapPoint::from_stack(s + 1).expect("at most five stacks");
            if taps.contains(&tap) {
                out.insert(tap, x.clone());
            }
        }
        Ok(out)
    }

    fn traced_forward(&self, input: &FeatureMap<T>, tap: TapPoint) -> Result<(FeatureMap<T>, Trace<T>)> {
        let mut trace = Trace { layers: Vec::new(), pool_inputs: Vec::new() };
        let mut x = input.clone();
        for (s, stack) in self.stacks.iter().enumerate().take(tap.stack()) {
            if s > 0 {
                let pooled = tensor::maxpool2(&x)?;
                trace.pool_inputs.push(core::mem::replace(&mut x, pooled));
            }
            let mut saved = Vec::with_capacity(stack.len());
            for kernel in stack {
                let z = tensor::conv2d(&x, kernel)?;
                let a = tensor::relu(&z);
                saved.push((core::mem::replace(&mut x, a), z));
            }
            trace.layers.push(saved);
        }
        Ok((x, trace))
    }

    /// Mean over spatial locations of channel `filter` at `tap`, and its
    /// gradient with respect to the network input.
    pub fn mean_activation_grad(
        &self,
        input: &FeatureMap<T>,
        tap: TapPoint,
        filter: usize,
    ) -> Result<(T, FeatureMap<T>)> {
        self.check_input(input)?;
        let filters = self.filters_at(tap)?;
        if filter >= filters {
            return Err(Error::Index { what: "filter", index: filter, len: filters });
        }
        let (out, trace) = self.traced_forward(input, tap)?;
        let area = out.area();
        let objective = out.channel(filter).iter().copied().sum::<T>() / T::of(area as f64);

        let mut grad = FeatureMap::zeros(out.channels(), out.height(), out.width());
        let inv_area = T::of(1.0 / area as f64);
        grad.values_mut()[filter * area..(filter + 1) * area].fill(inv_area);

        for s in (0..tap.stack()).rev() {
            for (kernel, (x, z)) in self.stacks[s].iter().zip(&trace.layers[s]).rev() {
                grad = tensor::relu_input_grad(z, &grad)?;
                grad = tensor::conv2d_input_grad(x, kernel, &grad)?;
            }
            if s > 0 {
                grad = tensor::maxpool2_input_grad(&trace.pool_inputs[s - 1], &grad)?;
            }
        }
        Ok((objective, grad))
    }

    /// Objective of [`Self::mean_activation_grad`] without the backward pass.
    pub fn mean_activation(&self, input: &FeatureMap<T>, tap: TapPoint, filter: usize) -> Result<T> {
        let filters = self.filters_at(tap)?;
        if filter >= filters {
            return Err(Error::Index { what: "filter", index: filter, len: filters });
        }
        let maps = self.forward(input, &[tap])?;
        let map = &maps[&tap];
        Ok(map.channel(filter).iter().copied().sum::<T>() / T::of(map.area() as f64))
    }
}

impl fmt::Display for VggConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.stacks.iter().map(|(n, c)| format!("{n}x{c}")).collect();
        write!(f, "vgg[{}]", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn vgg16_shape() {
        let c = VggConfig::vgg16();
        assert_eq!(c.conv_layer_count(), 13);
        let filters: Vec<_> = TapPoint::ALL.iter().map(|&t| c.filters_at(t).unwrap()).collect();
        assert_eq!(filters, [64, 128, 256, 512, 512]);
        let layers = c.layers();
        assert_eq!(layers[0], ("conv1_1".into(), 64, 3));
        assert_eq!(layers[12], ("conv5_3".into(), 512, 512));
        assert_eq!(c.tap_dims(TapPoint::C53, 64, 64), (4, 4));
        assert_eq!(c.tap_dims(TapPoint::C33, 75, 33), (18, 8));
    }

    #[test]
    fn tap_names_round_trip() {
        for t in TapPoint::ALL {
            assert_eq!(t.name().parse::<TapPoint>().unwrap(), t);
            assert_eq!(TapPoint::from_stack(t.stack()), Some(t));
        }
        assert!("C99".parse::<TapPoint>().is_err());
    }

    #[test]
    fn schema_errors() {
        let config = VggConfig::custom(3, vec![(1, 4)]).unwrap();
        let mut named = BTreeMap::new();
        named.insert("conv1_1".to_string(), ConvKernel::new(4, 1, 3, 3, vec![0.0; 36], vec![0.0; 4]).unwrap());
        assert!(matches!(WeightStore::from_named(config.clone(), named), Err(Error::Schema(_))));
        assert!(matches!(WeightStore::from_named(config, BTreeMap::new()), Err(Error::Schema(_))));
    }

    #[test]
    fn preprocess_grayscale_and_size() {
        let img = Image::gray(40, 33, vec![128; 40 * 33]).unwrap();
        let p = preprocess(&img, &PixelNormalization::default()).unwrap();
        assert_eq!(p.map().shape(), (3, 33, 40));
        for (c, mean) in IMAGENET_MEAN_RGB.iter().enumerate() {
            assert!(p.map().channel(c).iter().all(|&v| v == 128.0 - mean));
        }
        let small = Image::gray(16, 16, vec![0; 256]).unwrap();
        assert!(matches!(preprocess(&small, &PixelNormalization::default()), Err(Error::Size(_))));
    }

    #[test]
    fn preprocess_channel_order() {
        let mut px = Vec::new();
        for _ in 0..32 * 32 {
            px.extend_from_slice(&[10, 20, 30]);
        }
        let img = Image::new(32, 32, 3, px).unwrap();
        let norm = PixelNormalization { means: [0.0; 3], order: ChannelOrder::Bgr };
        let p = preprocess(&img, &norm).unwrap();
        assert_eq!(p.map().get(0, 5, 5), 30.0);
        assert_eq!(p.map().get(2, 5, 5), 10.0);
    }

    #[test]
    fn forward_shapes_and_zero_input() {
        let net = Network::<f32>::random(VggConfig::custom(3, vec![(1, 4), (2, 6), (1, 5)]).unwrap(), 3);
        let input = FeatureMap::zeros(3, 20, 13);
        let out = net.forward(&input, &[TapPoint::C33, TapPoint::C12]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[&TapPoint::C12].shape(), (4, 20, 13));
        assert_eq!(out[&TapPoint::C33].shape(), (5, 5, 3));
        assert!(out.values().all(|m| m.values().iter().all(|&v| v == 0.0)));
        assert!(net.forward(&input, &[]).is_err());
        assert!(net.forward(&input, &[TapPoint::C43]).is_err());
    }

    #[test]
    fn grad_index_errors_and_zero_weights() {
        let config = VggConfig::custom(3, vec![(2, 4), (1, 4)]).unwrap();
        let net = Network::<f64>::from_store(&WeightStore::zeros(config));
        let input = FeatureMap::from_fn(3, 8, 8, |c, y, x| (c + y + x) as f64);
        assert!(matches!(net.mean_activation_grad(&input, TapPoint::C22, 4), Err(Error::Index { .. })));
        let (obj, g) = net.mean_activation_grad(&input, TapPoint::C22, 1).unwrap();
        assert_eq!(obj, 0.0);
        assert!(g.values().iter().all(|&v| v == 0.0));
    }
}
