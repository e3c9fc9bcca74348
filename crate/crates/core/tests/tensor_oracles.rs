mod common;

use common::*;
use microtex_core::tensor::*;
use microtex_core::FeatureMap;
use proptest::prelude::*;
use rand::Rng as _;

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

#[test]
fn conv2d_matches_direct_summation() {
    let mut r = rng(1);
    for _ in 0..50 {
        let input: FeatureMap<f32> = random_map(&mut r, 2, 5, 5, -1.0, 1.0);
        let k = random_kernel::<f32>(&mut r, 3, 2, 3, 3);
        let got = conv2d(&input, &k).unwrap();
        let want = conv_oracle(&input.cast(), &k.cast());
        assert!(max_abs_diff(&to_f64(got.values()), &want) < 1e-5);
    }
}

#[test]
fn conv2d_odd_shapes_and_kernels() {
    let mut r = rng(2);
    for (c, h, w, o, kh, kw) in [(1, 1, 7, 2, 3, 3), (3, 6, 2, 1, 1, 1), (2, 4, 9, 4, 5, 3), (4, 3, 3, 2, 3, 5)] {
        let input: FeatureMap<f64> = random_map(&mut r, c, h, w, -2.0, 2.0);
        let k = random_kernel::<f64>(&mut r, o, c, kh, kw);
        let got = conv2d(&input, &k).unwrap();
        assert_eq!(got.shape(), (o, h, w));
        assert!(max_abs_diff(got.values(), &conv_oracle(&input, &k)) < 1e-12);
    }
}

#[test]
fn maxpool2_matches_window_scan() {
    let mut r = rng(3);
    for _ in 0..20 {
        let input: FeatureMap<f32> = random_map(&mut r, 2, 6, 6, -3.0, 3.0);
        let out = maxpool2(&input).unwrap();
        for c in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut m = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(input.get(c, 2 * oy + dy, 2 * ox + dx));
                        }
                    }
                    assert_eq!(out.get(c, oy, ox), m);
                }
            }
        }
    }
}

#[test]
fn relu_matches_elementwise() {
    let mut r = rng(4);
    let input: FeatureMap<f32> = random_map(&mut r, 3, 7, 5, -1.0, 1.0);
    let out = relu(&input);
    for (a, b) in input.values().iter().zip(out.values()) {
        assert_eq!(*b, if *a > 0.0 { *a } else { 0.0 });
    }
}

/// Evaluates the half-pixel bilinear formula for one output pixel.
fn bilinear_oracle(src: &FeatureMap<f64>, c: usize, dy: usize, dx: usize, th: usize, tw: usize) -> f64 {
    let coord = |d: usize, s: usize, t: usize| -> f64 {
        ((d as f64 + 0.5) * (s as f64 / t as f64) - 0.5).clamp(0.0, (s - 1) as f64)
    };
    let sy = coord(dy, src.height(), th);
    let sx = coord(dx, src.width(), tw);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(src.height() - 1), (x0 + 1).min(src.width() - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    (1.0 - fy) * ((1.0 - fx) * src.get(c, y0, x0) + fx * src.get(c, y0, x1))
        + fy * ((1.0 - fx) * src.get(c, y1, x0) + fx * src.get(c, y1, x1))
}

#[test]
fn ramp_upsample_matches_formula() {
    let src = FeatureMap::new(1, 2, 2, vec![0.0f64, 1.0, 2.0, 3.0]).unwrap();
    let out = resize_bilinear(&src, 4, 4).unwrap();
    // Frozen from the formula: source coords are clamp(-0.25, 0.25, 0.75, 1.25).
    let expected = [
        0.0, 0.25, 0.75, 1.0, //
        0.5, 0.75, 1.25, 1.5, //
        1.5, 1.75, 2.25, 2.5, //
        2.0, 2.25, 2.75, 3.0,
    ];
    assert!(max_abs_diff(out.values(), &expected) < 1e-12);
    for y in 0..4 {
        for x in 0..4 {
            assert!((out.get(0, y, x) - bilinear_oracle(&src, 0, y, x, 4, 4)).abs() < 1e-12);
        }
    }
}

#[test]
fn resize_matches_formula_on_random_maps() {
    let mut r = rng(5);
    for _ in 0..30 {
        let (h, w) = (r.gen_range(1..8), r.gen_range(1..8));
        let (th, tw) = (r.gen_range(1..12), r.gen_range(1..12));
        let src: FeatureMap<f64> = random_map(&mut r, 2, h, w, -5.0, 5.0);
        let out = resize_bilinear(&src, th, tw).unwrap();
        for c in 0..2 {
            for y in 0..th {
                for x in 0..tw {
                    assert!((out.get(c, y, x) - bilinear_oracle(&src, c, y, x, th, tw)).abs() < 1e-9);
                }
            }
        }
    }
}

/// conv -> relu -> maxpool with a random linear read-out, in f64.
fn composite(x: &FeatureMap<f64>, k: &microtex_core::ConvKernel<f64>, readout: &[f64]) -> f64 {
    let z = conv2d(x, k).unwrap();
    let p = maxpool2(&relu(&z)).unwrap();
    dot(p.values(), readout)
}

#[test]
fn composite_gradient_matches_finite_differences() {
    let mut r = rng(6);
    let h = 1e-4;
    for _ in 0..10 {
        let x: FeatureMap<f64> = random_map(&mut r, 2, 6, 6, -1.0, 1.0);
        let k = random_kernel::<f64>(&mut r, 3, 2, 3, 3);
        let readout: Vec<f64> = (0..3 * 3 * 3).map(|_| r.gen_range(-1.0..1.0)).collect();

        let z = conv2d(&x, &k).unwrap();
        let a = relu(&z);
        let up = FeatureMap::new(3, 3, 3, readout.clone()).unwrap();
        let g = maxpool2_input_grad(&a, &up).unwrap();
        let g = relu_input_grad(&z, &g).unwrap();
        let g = conv2d_input_grad(&x, &k, &g).unwrap();

        for _ in 0..5 {
            let d: Vec<f64> = (0..x.values().len()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let shifted = |s: f64| {
                let v = x.values().iter().zip(&d).map(|(a, b)| a + s * b).collect();
                FeatureMap::new(2, 6, 6, v).unwrap()
            };
            let fd = (composite(&shifted(h), &k, &readout) - composite(&shifted(-h), &k, &readout)) / (2.0 * h);
            let an = dot(g.values(), &d);
            assert!(relative_error(fd, an) < 1e-4, "fd {fd} analytic {an}");
        }
    }
}

#[test]
fn scalar_chain_rule() {
    let x = FeatureMap::new(1, 1, 1, vec![5.0f64]).unwrap();
    let k = microtex_core::ConvKernel::new(1, 1, 1, 1, vec![2.0], vec![1.0]).unwrap();
    let g = conv2d_input_grad(&x, &k, &FeatureMap::new(1, 1, 1, vec![1.0]).unwrap()).unwrap();
    assert_eq!(g.values(), &[2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_affine(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut r = rng(seed);
        let x: FeatureMap<f64> = random_map(&mut r, 2, 4, 5, -1.0, 1.0);
        let y: FeatureMap<f64> = random_map(&mut r, 2, 4, 5, -1.0, 1.0);
        let k = random_kernel::<f64>(&mut r, 3, 2, 3, 3);
        let mix = FeatureMap::new(2, 4, 5, x.values().iter().zip(y.values()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = conv2d(&mix, &k).unwrap();
        let cx = conv2d(&x, &k).unwrap();
        let cy = conv2d(&y, &k).unwrap();
        let area = 20;
        for (i, v) in lhs.values().iter().enumerate() {
            let bias = k.bias()[i / area];
            let rhs = a * cx.values()[i] + b * cy.values()[i] - (a + b - 1.0) * bias;
            prop_assert!((v - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn maxpool_bounds(seed in any::<u64>(), h in 2usize..9, w in 2usize..9) {
        let mut r = rng(seed);
        let x: FeatureMap<f32> = random_map(&mut r, 2, h, w, -4.0, 4.0);
        let p = maxpool2(&x).unwrap();
        let global = x.values().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        for c in 0..2 {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let v = p.get(c, oy, ox);
                    prop_assert!(v <= global);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            prop_assert!(v >= x.get(c, 2 * oy + dy, 2 * ox + dx));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn resize_stays_within_bounds(seed in any::<u64>(), th in 1usize..20, tw in 1usize..20) {
        let mut r = rng(seed);
        let x: FeatureMap<f32> = random_map(&mut r, 1, 5, 3, -10.0, 10.0);
        let lo = x.values().iter().copied().fold(f32::INFINITY, f32::min);
        let hi = x.values().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let out = resize_bilinear(&x, th, tw).unwrap();
        prop_assert!(out.values().iter().all(|&v| v >= lo && v <= hi));
    }
}
