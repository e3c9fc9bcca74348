use microtex_core::dataset::{generate_synthetic_textures, SyntheticSpec, TextureClass, TextureKind};

fn histogram(px: &[u8]) -> [f64; 16] {
    let mut h = [0.0; 16];
    for &p in px {
        h[p as usize / 16] += 1.0 / px.len() as f64;
    }
    h
}

#[test]
fn dots_and_stripes_have_distinct_histograms() {
    let spec = SyntheticSpec {
        classes: vec![
            TextureClass { name: "dots".into(), texture: TextureKind::Dots { radius: 3.0, density: 0.01 } },
            TextureClass { name: "stripes".into(), texture: TextureKind::Stripes { angle: 30.0, period: 8.0 } },
        ],
        n_per_class: 10,
        size: 64,
        noise: 0.0,
        seed: 17,
    };
    let imgs = generate_synthetic_textures(&spec).unwrap();
    let hists: Vec<[f64; 16]> = imgs.iter().map(|l| histogram(l.image.pixels())).collect();
    let l1 = |a: &[f64; 16], b: &[f64; 16]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let mut within = 0.0f64;
    let mut between = f64::INFINITY;
    for i in 0..imgs.len() {
        for j in 0..i {
            let d = l1(&hists[i], &hists[j]);
            if imgs[i].label == imgs[j].label {
                within = within.max(d);
            } else {
                between = between.min(d);
            }
        }
    }
    assert!(between > within, "closest cross-class {between} vs farthest same-class {within}");
}

#[test]
fn seeds_change_images_but_not_balance() {
    let a = generate_synthetic_textures(&SyntheticSpec::three_class(5, 48, 2.0, 1)).unwrap();
    let b = generate_synthetic_textures(&SyntheticSpec::three_class(5, 48, 2.0, 2)).unwrap();
    assert_ne!(a, b);
    for set in [&a, &b] {
        let labels: Vec<&str> = set.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(labels[..5], ["stripes"; 5]);
        assert_eq!(labels[5..10], ["dots"; 5]);
        assert_eq!(labels[10..], ["checker"; 5]);
    }
}

#[test]
fn spec_round_trips_through_json_shape() {
    let spec = SyntheticSpec::three_class(2, 32, 0.0, 0);
    assert_eq!(spec.classes[1].texture, TextureKind::Dots { radius: 3.0, density: 0.01 });
}
