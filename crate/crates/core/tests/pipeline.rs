//! End-to-end flow through the public API on a small corpus.

use tinyradar::model::{build_tinyradarnn, decode_network, encode_network, ModelConfig};
use tinyradar::quant::{
    calibrate_and_quantize, decode_quantized, encode_quantized, quantized_forward_sequence,
};
use tinyradar::radar_io::{decode_recording, encode_recording, synth_corpus, CorpusConfig};
use tinyradar::train::{evaluate, split_cv5, train, Aggregation, GestureDataset, TrainConfig};

fn small_corpus() -> CorpusConfig {
    CorpusConfig {
        per_class: 6,
        sweeps: 192,
        range_points: 32,
        range_step_m: 0.008,
        ..CorpusConfig::default()
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        tw: 32,
        rp: 32,
        classes: 5,
        ..ModelConfig::toy()
    }
}

#[test]
fn recordings_survive_the_container() {
    let recs = synth_corpus(&small_corpus()).unwrap();
    assert_eq!(recs.len(), 30);
    for r in recs.iter().take(3) {
        let bytes = encode_recording(r);
        let back = decode_recording(&bytes).unwrap();
        assert_eq!(back.data(), r.data());
        assert_eq!(
            (back.label, back.user_id, back.session_id),
            (r.label, r.user_id, r.session_id)
        );
        assert_eq!(encode_recording(&back), bytes);
    }
}

#[test]
fn synth_to_quantized_inference() {
    let recs = synth_corpus(&small_corpus()).unwrap();
    let mc = small_model();
    let (ds, stats) = GestureDataset::from_recordings(&recs, mc.tw, mc.time_steps, 5).unwrap();
    assert_eq!(stats.frames, 30 * 6);
    assert_eq!(ds.len(), 30 * 2);

    let (train_set, test_set) = split_cv5(&ds, 0, 1).unwrap();
    let mut net = build_tinyradarnn(&mc, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 1,
        ..TrainConfig::default()
    };
    let log = train(&mut net, &train_set, &cfg).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|r| r.loss.is_finite()));

    let before = evaluate(&net, &test_set, Aggregation::MeanSoftmax).unwrap();
    let reloaded = decode_network(&encode_network(&net)).unwrap();
    let after = evaluate(&reloaded, &test_set, Aggregation::MeanSoftmax).unwrap();
    assert_eq!(before.sequences, test_set.len());
    assert!(
        (before.per_sequence_acc - after.per_sequence_acc).abs() <= 1.0 / test_set.len() as f64
    );

    let calib: Vec<_> = train_set
        .sequences
        .iter()
        .map(|s| s.frames.clone())
        .collect();
    let qnet = calibrate_and_quantize(&reloaded, &calib).unwrap();
    let qnet = decode_quantized(&encode_quantized(&qnet)).unwrap();
    for s in &test_set.sequences {
        let q = quantized_forward_sequence(&qnet, &s.frames).unwrap();
        assert_eq!(q.shape(), &[mc.time_steps, mc.classes]);
        assert!(q.data().iter().all(|v| v.is_finite()));
    }
}
