use std::collections::BTreeMap;

use microtex::weights::{self, Entry};
use microtex::CliError;
use microtex_core::{ConvKernel, VggConfig, WeightStore};

fn tiny() -> VggConfig {
    VggConfig::custom(3, vec![(1, 4), (2, 5)]).unwrap()
}

#[test]
fn round_trip_is_byte_exact() {
    let store = WeightStore::random(tiny(), 9);
    let bytes = weights::encode(&store).unwrap();
    let back = weights::decode(&bytes, &tiny()).unwrap();
    assert_eq!(back, store);
    assert_eq!(weights::encode(&back).unwrap(), bytes);
}

#[test]
fn vgg16_file_has_26_entries_with_exact_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vgg16.mtexw");
    let store = WeightStore::random(VggConfig::vgg16(), 1);
    weights::save_weights(&path, &store).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let entries = weights::decode_entries(&bytes).unwrap();
    assert_eq!(entries.len(), 26);
    assert_eq!(entries[0].name, "conv1_1");
    assert_eq!(entries[0].dims, [64, 3, 3, 3]);
    assert_eq!(entries[1].name, "conv1_1.bias");
    assert_eq!(entries[1].dims, [64]);
    assert_eq!(entries[25].name, "conv5_3.bias");
    assert_eq!(weights::load_weights(&path).unwrap(), store);
}

#[test]
fn layout_matches_hand_encoding() {
    let entries = vec![Entry { name: "ab".into(), dims: vec![2], values: vec![1.0, -2.5] }];
    let bytes = weights::encode_entries(&entries).unwrap();
    let mut body = vec![1, 0, 0, 0, 2, 0, b'a', b'b', 1, 2, 0, 0, 0];
    body.extend(1.0f32.to_le_bytes());
    body.extend((-2.5f32).to_le_bytes());
    let mut expected = b"MTEXW001".to_vec();
    expected.extend(&body);
    expected.extend(crc32fast::hash(&body).to_le_bytes());
    assert_eq!(bytes, expected);
    assert_eq!(weights::decode_entries(&bytes).unwrap(), entries);
}

#[test]
fn flipped_magic_is_a_format_error() {
    let mut bytes = weights::encode(&WeightStore::random(tiny(), 2)).unwrap();
    bytes[0] ^= 0xff;
    assert!(matches!(weights::decode(&bytes, &tiny()), Err(CliError::Format(_))));
    bytes[0] ^= 0xff;
    bytes[7] = b'2';
    assert!(matches!(weights::decode(&bytes, &tiny()), Err(CliError::Format(_))));
}

#[test]
fn truncation_and_bit_flips_are_corruption() {
    let bytes = weights::encode(&WeightStore::random(tiny(), 3)).unwrap();
    for cut in [9, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(weights::decode(&bytes[..cut], &tiny()), Err(CliError::Corruption(_))), "cut {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(weights::decode(&flipped, &tiny()), Err(CliError::Corruption(_))));
}

#[test]
fn wrong_shape_is_a_schema_error() {
    let store = WeightStore::random(VggConfig::vgg16(), 4);
    let mut entries = weights::entries_of(&store);
    entries[0] = Entry { name: "conv1_1".into(), dims: vec![64, 1, 3, 3], values: vec![0.0; 64 * 9] };
    let bytes = weights::encode_entries(&entries).unwrap();
    let err = weights::decode(&bytes, &VggConfig::vgg16()).unwrap_err();
    assert!(matches!(err, CliError::Schema(ref m) if m.contains("conv1_1")), "{err}");
}

#[test]
fn missing_and_extra_layers_are_schema_errors() {
    let store = WeightStore::random(tiny(), 5);
    let mut entries = weights::entries_of(&store);
    let last = entries.pop().unwrap();
    let bytes = weights::encode_entries(&entries).unwrap();
    assert!(matches!(weights::decode(&bytes, &tiny()), Err(CliError::Schema(_))));
    entries.push(last);
    entries.push(Entry { name: "conv9_9".into(), dims: vec![1, 1, 3, 3], values: vec![0.0; 9] });
    entries.push(Entry { name: "conv9_9.bias".into(), dims: vec![1], values: vec![0.0] });
    let bytes = weights::encode_entries(&entries).unwrap();
    assert!(matches!(weights::decode(&bytes, &tiny()), Err(CliError::Schema(_))));
}

#[test]
fn explicit_values_survive() {
    let mut named = BTreeMap::new();
    for (name, out_c, in_c) in tiny().layers() {
        let n = out_c * in_c * 9;
        let w = (0..n).map(|i| i as f32 * 0.25 - 3.0).collect();
        let b = (0..out_c).map(|i| -(i as f32)).collect();
        named.insert(name, ConvKernel::new(out_c, in_c, 3, 3, w, b).unwrap());
    }
    let store = WeightStore::from_named(tiny(), named).unwrap();
    let back = weights::decode(&weights::encode(&store).unwrap(), &tiny()).unwrap();
    assert_eq!(back.get("conv2_2").unwrap().weight(4, 3, 2, 1), store.get("conv2_2").unwrap().weight(4, 3, 2, 1));
    assert_eq!(back.get("conv2_1").unwrap().bias(), &[0.0, -1.0, -2.0, -3.0, -4.0]);
}
