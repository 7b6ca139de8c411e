use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stancegen_core::sdmg::{
    build_visual_input, encode_text, encode_visual, HashPatchEmbedder, TensorFile, ToyTextEncoder,
    ToyVisualEncoder,
};

const DIM: usize = 16;

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sdmg/toy_encoders.json")
}

fn compute() -> TensorFile {
    let patches = HashPatchEmbedder { grid: 2, dim: DIM }.embed("golden/image.jpg");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 0.02).unwrap();
    let prompt = Array1::from_shape_simple_fn(DIM, || normal.sample(&mut rng));
    let seq = build_visual_input(patches.view(), prompt.view()).unwrap();
    let visual = ToyVisualEncoder::new(5, DIM, 2);
    let enc = encode_visual(&seq, Some(&visual)).unwrap();

    let text = ToyTextEncoder::new(6, 64, DIM, 32, 2);
    let emb = encode_text(&[0, 5, 17, 42, 63], Some(&text)).unwrap();

    let mut f = TensorFile::new();
    f.insert("input", &seq.to_matrix());
    for layer in &enc.layers {
        f.insert(&format!("visual.layer{}", layer.layer_index), &layer.to_matrix());
    }
    f.insert("visual.cls", enc.cls());
    f.insert("text.cls", &emb.cls);
    if let Some(t) = &emb.tokens {
        f.insert("text.tokens", t);
    }
    f
}

fn max_abs(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn toy_encoders_match_frozen_tensors() {
    let got = compute();
    if std::env::var_os("STANCEGEN_BLESS").is_some() {
        got.write(&golden_path()).unwrap();
    }
    let frozen = TensorFile::read(&golden_path()).unwrap();
    let names: Vec<_> = got.tensors.keys().collect();
    assert_eq!(names, frozen.tensors.keys().collect::<Vec<_>>());
    for name in got.tensors.keys() {
        let err = max_abs(&got.get(name).unwrap(), &frozen.get(name).unwrap());
        assert!(err <= 1e-12, "{name}: {err:e}");
    }
}

#[test]
fn toy_encoders_are_bit_deterministic() {
    assert_eq!(compute(), compute());
}
