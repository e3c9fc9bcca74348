#![allow(dead_code)]

use microtex_core::rng::{self, Rng};
use microtex_core::{ConvKernel, FeatureMap, Scalar};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    rng::seeded(seed)
}

pub fn random_map<T: Scalar>(r: &mut Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> FeatureMap<T> {
    FeatureMap::from_fn(c, h, w, |_, _, _| T::of(r.gen_range(lo..hi)))
}

pub fn random_kernel<T: Scalar>(r: &mut Rng, out: usize, inp: usize, kh: usize, kw: usize) -> ConvKernel<T> {
    let w = (0..out * inp * kh * kw).map(|_| T::of(r.gen_range(-1.0..1.0))).collect();
    let b = (0..out).map(|_| T::of(r.gen_range(-0.5..0.5))).collect();
    ConvKernel::new(out, inp, kh, kw, w, b).unwrap()
}

/// Direct quadruple-loop convolution with same zero padding.
pub fn conv_oracle(input: &FeatureMap<f64>, k: &ConvKernel<f64>) -> Vec<f64> {
    let (c_in, h, w) = input.shape();
    let [out, _, kh, kw] = k.shape();
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut res = vec![0.0; out * h * w];
    for o in 0..out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = k.bias()[o];
                for c in 0..c_in {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let sy = y as isize + dy as isize - ph;
                            let sx = x as isize + dx as isize - pw;
                            if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                acc += input.get(c, sy as usize, sx as usize) * k.weight(o, c, dy, dx);
                            }
                        }
                    }
                }
                res[(o * h + y) * w + x] = acc;
            }
        }
    }
    res
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
