//! Dense (channel, row, col) arrays and the convolutional primitives used by
//! the VGG stack: same-padded stride-1 convolution, ReLU, 2x2 max pooling,
//! bilinear resizing, plus the input gradients of the first three.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of im2col elements materialised at once.
const IM2COL_BUDGET: usize = 1 << 22;

/// Floating-point element type. `f32` is the production type, `f64` is used
/// for gradient checking.
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + AddAssign + MulAssign + 'static {
    /// `c = alpha * a * b + beta * c` on strided row/column-major buffers.
    ///
    /// # Safety
    /// The strides must address memory inside the given buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f32 {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f64 {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// A stack of 2-D channels stored row-major as (channel, row, col).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Size(format!("feature map dims must be positive, got {channels}x{height}x{width}")));
        }
        if values.len() != channels * height * width {
            return Err(Error::Config(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature map contains non-finite values".into()));
        }
        Ok(FeatureMap { channels, height, width, values })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty feature map");
        FeatureMap { channels, height, width, values: vec![value; channels * height * width] }
    }

    /// Builds a map from a generator over (channel, row, col).
    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    values.push(f(c, y, x));
                }
            }
        }
        FeatureMap { channels, height, width, values }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Number of spatial locations per channel.
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    /// The flattened spatial plane of channel `c`.
    pub fn channel(&self, c: usize) -> &[T] {
        let a = self.area();
        &self.values[c * a..(c + 1) * a]
    }

    /// Copies out channel `c` as a single-channel map.
    pub fn extract_channel(&self, c: usize) -> Result<FeatureMap<T>> {
        if c >= self.channels {
            return Err(Error::Index { what: "channel", index: c, len: self.channels });
        }
        Ok(FeatureMap { channels: 1, height: self.height, width: self.width, values: self.channel(c).to_vec() })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> FeatureMap<T> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    fn same_shape(&self, other: &FeatureMap<T>, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Config(format!("{what}: expected shape {:?}, got {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

/// Convolution weights in (out, in, kh, kw) order with one bias per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel<T = f32> {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::Size("kernel dims must be positive".into()));
        }
        if weights.len() != out_channels * in_channels * kernel_h * kernel_w {
            return Err(Error::Config(format!(
                "kernel {out_channels}x{in_channels}x{kernel_h}x{kernel_w} needs {} weights, got {}",
                out_channels * in_channels * kernel_h * kernel_w,
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Config(format!(
                "kernel with {out_channels} outputs needs {out_channels} biases, got {}",
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("kernel contains non-finite values".into()));
        }
        Ok(ConvKernel { out_channels, in_channels, kernel_h, kernel_w, weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }

    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }

    /// (out, in, kh, kw)
    pub fn shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight(&self, o: usize, c: usize, dy: usize, dx: usize) -> T {
        self.weights[((o * self.in_channels + c) * self.kernel_h + dy) * self.kernel_w + dx]
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel<U> {
        ConvKernel {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            weights: self.weights.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

fn rows_per_chunk(patch: usize, width: usize, height: usize) -> usize {
    (IM2COL_BUDGET / (patch * width).max(1)).clamp(1, height)
}

/// Fills `cols` ((in*kh*kw) x ((y1-y0)*w)) with zero-padded input patches.
fn im2col<T: Scalar>(input: &FeatureMap<T>, kernel: &ConvKernel<T>, y0: usize, y1: usize, cols: &mut [T]) {
    let (channels, h, w) = input.shape();
    let (kh, kw) = (kernel.kernel_h, kernel.kernel_w);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let ncols = (y1 - y0) * w;
    for c in 0..channels {
        let plane = input.channel(c);
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut cols[((c * kh + dy) * kw + dx) * ncols..][..ncols];
                for y in y0..y1 {
                    let sy = y as isize + dy as isize - ph;
                    let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx as isize - pw;
                        *d = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back onto `grad` (the adjoint of [`im2col`]).
fn col2im<T: Scalar>(grad: &mut FeatureMap<T>, kernel: &ConvKernel<T>, y0: usize, y1: usize, cols: &[T]) {
    let (channels, h, w) = grad.shape();
    let (kh, kw) = (kernel.kernel_h, kernel.kernel_w);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let ncols = (y1 - y0) * w;
    let area = h * w;
    for c in 0..channels {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &cols[((c * kh + dy) * kw + dx) * ncols..][..ncols];
                for y in y0..y1 {
                    let sy = y as isize + dy as isize - ph;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[(y - y0) * w..(y - y0 + 1) * w];
                    let dst = &mut grad.values[c * area + sy as usize * w..][..w];
                    for (x, &g) in src.iter().enumerate() {
                        let sx = x as isize + dx as isize - pw;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded, stride-1 2-D convolution (cross-correlation) plus bias.
pub fn conv2d<T: Scalar>(input: &FeatureMap<T>, kernel: &ConvKernel<T>) -> Result<FeatureMap<T>> {
    if input.channels != kernel.in_channels {
        return Err(Error::Config(format!(
            "conv2d: input has {} channels, kernel expects {}",
            input.channels, kernel.in_channels
        )));
    }
    let (_, h, w) = input.shape();
    let area = h * w;
    let out_c = kernel.out_channels;
    let patch = kernel.patch_len();

    let mut values = Vec::with_capacity(out_c * area);
    for &b in &kernel.bias {
        values.extend(core::iter::repeat_n(b, area));
    }
    let chunk = rows_per_chunk(patch, w, h);
    let mut cols = vec![T::zero(); patch * chunk * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + chunk).min(h);
        let ncols = (y1 - y0) * w;
        im2col(input, kernel, y0, y1, &mut cols[..patch * ncols]);
        // SAFETY: a is out_c x patch (row-major), b is patch x ncols, c addresses
        // columns y0*w .. y1*w of each output channel plane.
        unsafe {
            T::gemm(
                out_c,
                patch,
                ncols,
                kernel.weights.as_ptr(),
                patch as isize,
                1,
                cols.as_ptr(),
                ncols as isize,
                1,
                T::one(),
                values.as_mut_ptr().add(y0 * w),
                area as isize,
                1,
            );
        }
        y0 = y1;
    }
    Ok(FeatureMap { channels: out_c, height: h, width: w, values })
}

/// Gradient of a scalar objective w.r.t. the convolution input, given the
/// gradient w.r.t. its output.
pub fn conv2d_input_grad<T: Scalar>(
    input: &FeatureMap<T>,
    kernel: &ConvKernel<T>,
    upstream: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    if input.channels != kernel.in_channels {
        return Err(Error::Config(format!(
            "conv2d_input_grad: input has {} channels, kernel expects {}",
            input.channels, kernel.in_channels
        )));
    }
    let (_, h, w) = input.shape();
    if upstream.shape() != (kernel.out_channels, h, w) {
        return Err(Error::Config(format!(
            "conv2d_input_grad: upstream shape {:?} does not match output shape {:?}",
            upstream.shape(),
            (kernel.out_channels, h, w)
        )));
    }
    let area = h * w;
    let patch = kernel.patch_len();
    let mut grad = FeatureMap::zeros(input.channels, h, w);
    let chunk = rows_per_chunk(patch, w, h);
    let mut cols = vec![T::zero(); patch * chunk * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + chunk).min(h);
        let ncols = (y1 - y0) * w;
        // SAFETY: a is the transposed weight matrix (patch x out_c) read through
        // swapped strides; b addresses columns y0*w .. y1*w of each upstream plane.
        unsafe {
            T::gemm(
                patch,
                kernel.out_channels,
                ncols,
                kernel.weights.as_ptr(),
                1,
                patch as isize,
                upstream.values.as_ptr().add(y0 * w),
                area as isize,
                1,
                T::zero(),
                cols.as_mut_ptr(),
                ncols as isize,
                1,
            );
        }
        col2im(&mut grad, kernel, y0, y1, &cols[..patch * ncols]);
        y0 = y1;
    }
    Ok(grad)
}

pub fn relu<T: Scalar>(input: &FeatureMap<T>) -> FeatureMap<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_in_place<T: Scalar>(map: &mut FeatureMap<T>) {
    for v in map.values.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Passes the upstream gradient where the ReLU input was strictly positive.
pub fn relu_input_grad<T: Scalar>(input: &FeatureMap<T>, upstream: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    input.same_shape(upstream, "relu_input_grad")?;
    let values =
        input.values.iter().zip(&upstream.values).map(|(&x, &g)| if x > T::zero() { g } else { T::zero() }).collect();
    Ok(FeatureMap { channels: input.channels, height: input.height, width: input.width, values })
}

fn pool_dims<T: Scalar>(input: &FeatureMap<T>) -> Result<(usize, usize)> {
    if input.height < 2 || input.width < 2 {
        return Err(Error::Size(format!("maxpool2 needs at least 2x2 input, got {}x{}", input.height, input.width)));
    }
    Ok((input.height / 2, input.width / 2))
}

/// Index within the input plane of the first maximum of the 2x2 window at
/// output position (oy, ox), scanning row-major.
fn window_argmax<T: Scalar>(plane: &[T], width: usize, oy: usize, ox: usize) -> usize {
    let mut best = (2 * oy) * width + 2 * ox;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let idx = (2 * oy + dy) * width + 2 * ox + dx;
        if plane[idx] > plane[best] {
            best = idx;
        }
    }
    best
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool2<T: Scalar>(input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    let (oh, ow) = pool_dims(input)?;
    let mut values = Vec::with_capacity(input.channels * oh * ow);
    for c in 0..input.channels {
        let plane = input.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                values.push(plane[window_argmax(plane, input.width, oy, ox)]);
            }
        }
    }
    Ok(FeatureMap { channels: input.channels, height: oh, width: ow, values })
}

/// Routes each upstream value to the first argmax of its pooling window.
pub fn maxpool2_input_grad<T: Scalar>(input: &FeatureMap<T>, upstream: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    let (oh, ow) = pool_dims(input)?;
    if upstream.shape() != (input.channels, oh, ow) {
        return Err(Error::Config(format!(
            "maxpool2_input_grad: upstream shape {:?} does not match output shape {:?}",
            upstream.shape(),
            (input.channels, oh, ow)
        )));
    }
    let mut grad = FeatureMap::zeros(input.channels, input.height, input.width);
    let area = input.area();
    for c in 0..input.channels {
        let plane = input.channel(c);
        let up = upstream.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let idx = window_argmax(plane, input.width, oy, ox);
                grad.values[c * area + idx] += up[oy * ow + ox];
            }
        }
    }
    Ok(grad)
}

/// Source sample positions for one axis: (low index, high index, fraction).
fn bilinear_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = Float::floor(s) as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    let v = a + (b - a) * t;
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    v.max(lo).min(hi)
}

/// Bilinear resize with half-pixel centers (align_corners = false).
pub fn resize_bilinear<T: Scalar>(image: &FeatureMap<T>, target_h: usize, target_w: usize) -> Result<FeatureMap<T>> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Size(format!("resize target must be positive, got {target_h}x{target_w}")));
    }
    let ys = bilinear_axis(image.height, target_h);
    let xs = bilinear_axis(image.width, target_w);
    let mut values = Vec::with_capacity(image.channels * target_h * target_w);
    for c in 0..image.channels {
        let plane = image.channel(c);
        let w = image.width;
        for &(y0, y1, fy) in &ys {
            let fy = T::of(fy);
            for &(x0, x1, fx) in &xs {
                let fx = T::of(fx);
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
                values.push(lerp(top, bottom, fy));
            }
        }
    }
    Ok(FeatureMap { channels: image.channels, height: target_h, width: target_w, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scalar_affine_conv() {
        let input = FeatureMap::new(1, 1, 1, vec![5.0f32]).unwrap();
        let k = ConvKernel::new(1, 1, 1, 1, vec![2.0], vec![1.0]).unwrap();
        assert_eq!(conv2d(&input, &k).unwrap().values(), &[11.0]);
        let g = conv2d_input_grad(&input, &k, &FeatureMap::new(1, 1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.values(), &[2.0]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let input = FeatureMap::<f32>::from_fn(2, 4, 5, |c, y, x| (c * 31 + y * 7 + x) as f32 - 9.5);
        let mut w = vec![0.0f32; 2 * 2 * 9];
        // Kernel (out o, in i) occupies w[(o * 2 + i) * 9..]; its centre tap is +4.
        w[4] = 1.0;
        w[3 * 9 + 4] = 1.0;
        let k = ConvKernel::new(2, 2, 3, 3, w, vec![0.0, 0.0]).unwrap();
        assert_eq!(conv2d(&input, &k).unwrap(), input);
    }

    #[test]
    fn conv_channel_mismatch() {
        let input = FeatureMap::<f32>::zeros(2, 3, 3);
        let k = ConvKernel::new(1, 3, 3, 3, vec![0.0; 27], vec![0.0]).unwrap();
        assert!(matches!(conv2d(&input, &k), Err(Error::Config(_))));
        let up = FeatureMap::zeros(2, 3, 3);
        assert!(matches!(conv2d_input_grad(&input, &k, &up), Err(Error::Config(_))));
    }

    #[test]
    fn relu_basics() {
        let m = FeatureMap::new(1, 1, 3, vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&m).values(), &[0.0, 0.0, 2.0]);
        let pos = FeatureMap::new(1, 1, 3, vec![0.0f32, 1.0, 2.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn maxpool_basics() {
        let m = FeatureMap::new(1, 2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(maxpool2(&m).unwrap().values(), &[4.0]);
        let c = FeatureMap::filled(2, 5, 7, 3.0f32);
        let p = maxpool2(&c).unwrap();
        assert_eq!(p.shape(), (2, 2, 3));
        assert!(p.values().iter().all(|&v| v == 3.0));
        assert!(matches!(maxpool2(&FeatureMap::<f32>::zeros(1, 1, 4)), Err(Error::Size(_))));
    }

    #[test]
    fn maxpool_grad_tie_goes_to_first() {
        let m = FeatureMap::new(1, 2, 2, vec![1.0f32, 1.0, 1.0, 1.0]).unwrap();
        let up = FeatureMap::new(1, 1, 1, vec![3.0f32]).unwrap();
        assert_eq!(maxpool2_input_grad(&m, &up).unwrap().values(), &[3.0, 0.0, 0.0, 0.0]);
        let bad = FeatureMap::zeros(1, 2, 2);
        assert!(matches!(maxpool2_input_grad(&m, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let input = FeatureMap::<f64>::from_fn(2, 4, 4, |c, y, x| (c + y * 3 + x) as f64 - 4.0);
        let k = ConvKernel::new(3, 2, 3, 3, (0..54).map(|i| i as f64 * 0.1 - 2.0).collect(), vec![0.5; 3]).unwrap();
        let g = conv2d_input_grad(&input, &k, &FeatureMap::zeros(3, 4, 4)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        let g = relu_input_grad(&input, &FeatureMap::zeros(2, 4, 4)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        let g = maxpool2_input_grad(&input, &FeatureMap::zeros(2, 2, 2)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resize_identity_and_constant() {
        let m = FeatureMap::<f32>::from_fn(2, 3, 5, |c, y, x| (c * 100 + y * 10 + x) as f32 * 0.37);
        assert_eq!(resize_bilinear(&m, 3, 5).unwrap(), m);
        let c = FeatureMap::filled(1, 2, 2, 7.0f32);
        for (h, w) in [(1, 1), (4, 4), (3, 9), (17, 2)] {
            assert!(resize_bilinear(&c, h, w).unwrap().values().iter().all(|&v| v == 7.0));
        }
        assert!(matches!(resize_bilinear(&c, 0, 3), Err(Error::Size(_))));
    }

    #[test]
    fn feature_map_rejects_bad_input() {
        assert!(matches!(FeatureMap::new(1, 2, 2, vec![0.0f32; 3]), Err(Error::Config(_))));
        assert!(matches!(FeatureMap::new(1, 0, 2, Vec::<f32>::new()), Err(Error::Size(_))));
        assert!(matches!(FeatureMap::new(1, 1, 1, vec![f32::NAN]), Err(Error::Data(_))));
    }
}
