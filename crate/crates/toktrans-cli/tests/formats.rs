//! File-format round trips: checkpoints, the corpus layout, and the
//! resolved config snapshot all reload bit-for-bit and reject damage.

use std::fs;

use tempfile::tempdir;

use toktrans_cli::checkpoint::{load_codebook, load_model, save_codebook, save_model};
use toktrans_cli::corpus::{load_manifest, load_split, save_corpus, Manifest};
use toktrans_cli::{RunConfig, Split};

use toktrans_core::model::{Model, ModelConfig, PredictorKind};
use toktrans_core::quantizer::{kmeans_fit, Utterance};
use toktrans_core::rng::Rng;
use toktrans_core::tensor::Tensor;

fn model_load_err(path: &std::path::Path) -> toktrans_cli::CliError {
    match load_model(path) {
        Ok(_) => panic!("loading {} unexpectedly succeeded", path.display()),
        Err(e) => e,
    }
}

fn small_model(kind: PredictorKind) -> Model {
    let mut cfg = ModelConfig::new(6, 5, 4);
    cfg.dim = 12;
    cfg.ref_dim = 6;
    cfg.heads = 2;
    cfg.text_blocks = 1;
    cfg.pred_blocks = 1;
    cfg.lstm_layers = 1;
    cfg.lstm_hidden = 10;
    cfg.joint_blocks = 1;
    cfg.max_text_len = 8;
    cfg.max_token_len = 12;
    cfg.predictor = kind;
    let mut model = Model::new(cfg, 9).unwrap();
    model.randomize(&mut Rng::new(10), 0.2);
    model
}

#[test]
fn model_checkpoint_round_trips_bitwise() {
    let dir = tempdir().unwrap();
    for kind in [PredictorKind::Lstm, PredictorKind::Attention] {
        let model = small_model(kind);
        let path = dir.path().join("model.bin");
        let extra = [("step".to_string(), "17".to_string())];
        save_model(&path, &model, &extra).unwrap();
        let (loaded, meta) = load_model(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        assert!(meta.contains(&extra[0]));
        for (name, tensor) in model.params().iter() {
            let other = loaded.params().expect(name);
            assert_eq!(tensor.shape(), other.shape(), "{name} shape");
            let same = tensor
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{name} changed across the round trip");
        }
    }
}

#[test]
fn codebook_checkpoint_round_trips_bitwise() {
    let dir = tempdir().unwrap();
    let mut rng = Rng::new(11);
    let points = Tensor::new(&[60, 5], (0..300).map(|_| rng.normal()).collect());
    let codebook = kmeans_fit(&points, 7, 20, 1).unwrap();
    let path = dir.path().join("codebook.bin");
    save_codebook(&path, &codebook).unwrap();
    let loaded = load_codebook(&path).unwrap();
    assert_eq!(loaded.len(), codebook.len());
    assert_eq!(loaded.dim(), codebook.dim());
    let same = codebook
        .centroids()
        .data()
        .iter()
        .zip(loaded.centroids().data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same, "centroids changed across the round trip");
}

#[test]
fn checkpoint_kinds_do_not_interchange() {
    let dir = tempdir().unwrap();
    let model_path = dir.path().join("model.bin");
    save_model(&model_path, &small_model(PredictorKind::Lstm), &[]).unwrap();
    let err = load_codebook(&model_path).unwrap_err();
    assert_eq!(err.tag(), "checkpoint");

    let mut rng = Rng::new(12);
    let points = Tensor::new(&[40, 3], (0..120).map(|_| rng.normal()).collect());
    let codebook_path = dir.path().join("codebook.bin");
    save_codebook(&codebook_path, &kmeans_fit(&points, 4, 10, 2).unwrap()).unwrap();
    assert_eq!(model_load_err(&codebook_path).tag(), "checkpoint");
}

#[test]
fn checkpoint_rejects_damage() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&path, &small_model(PredictorKind::Lstm), &[]).unwrap();
    let bytes = fs::read(&path).unwrap();

    // Truncation.
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(model_load_err(&path).tag(), "checkpoint");

    // Trailing garbage.
    let mut padded = bytes.clone();
    padded.extend_from_slice(b"xx");
    fs::write(&path, &padded).unwrap();
    assert_eq!(model_load_err(&path).tag(), "checkpoint");

    // Wrong magic.
    let mut flipped = bytes;
    flipped[0] ^= 0xFF;
    fs::write(&path, &flipped).unwrap();
    assert_eq!(model_load_err(&path).tag(), "checkpoint");
}

fn tiny_utterance(rng: &mut Rng, feat_dim: usize) -> Utterance {
    let rows = 1 + rng.below(4);
    Utterance {
        text: vec![rng.below(5), rng.below(5)],
        rate: rng.uniform_in(0.8, 1.6),
        frames: Tensor::new(&[rows, feat_dim], (0..rows * feat_dim).map(|_| rng.normal()).collect()),
        gold_tokens: (0..rows).map(|_| rng.below(5)).collect(),
    }
}

#[test]
fn corpus_round_trips_bitwise() {
    let dir = tempdir().unwrap();
    let manifest =
        Manifest { vocab: 5, feat_dim: 3, scale: 1.0, noise: 0.05, seed: 77 };
    let mut rng = Rng::new(13);
    let train: Vec<Utterance> = (0..4).map(|_| tiny_utterance(&mut rng, 3)).collect();
    let dev: Vec<Utterance> = (0..2).map(|_| tiny_utterance(&mut rng, 3)).collect();
    save_corpus(dir.path(), &manifest, &[(Split::Train, &train), (Split::Dev, &dev)]).unwrap();

    assert_eq!(load_manifest(dir.path()).unwrap(), manifest);
    let loaded = load_split(dir.path(), Split::Train).unwrap();
    assert_eq!(loaded.len(), train.len());
    for (a, b) in train.iter().zip(&loaded) {
        assert_eq!(a.text, b.text);
        assert_eq!(a.rate, b.rate);
        assert_eq!(a.gold_tokens, b.gold_tokens);
        assert_eq!(a.frames.shape(), b.frames.shape());
        let same =
            a.frames.data().iter().zip(b.frames.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "frames changed across the round trip");
    }
}

#[test]
fn corpus_rejects_blob_length_mismatch() {
    let dir = tempdir().unwrap();
    let manifest =
        Manifest { vocab: 5, feat_dim: 3, scale: 1.0, noise: 0.05, seed: 78 };
    let mut rng = Rng::new(14);
    let train: Vec<Utterance> = (0..2).map(|_| tiny_utterance(&mut rng, 3)).collect();
    save_corpus(dir.path(), &manifest, &[(Split::Train, &train)]).unwrap();
    let blob = dir.path().join("blobs/train_00000.f64");
    let bytes = fs::read(&blob).unwrap();
    fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
    assert_eq!(load_split(dir.path(), Split::Train).unwrap_err().tag(), "corpus");
}

#[test]
fn resolved_snapshot_restores_the_run_config() {
    let dir = tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = 123;
    cfg.train.steps = 77;
    cfg.data.train_bands = vec![(0.8, 1.0), (1.9, 2.2)];
    cfg.save_resolved(dir.path()).unwrap();
    let loaded = RunConfig::load(&dir.path().join("config.resolved.txt")).unwrap();
    assert_eq!(loaded, cfg);
}
