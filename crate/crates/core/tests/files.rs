use residuum::classifiers::{fit_logreg, ClassifierModel, LogRegParams};
use residuum::container::Container;
use residuum::dataspec::{
    content_hash, encode_embx, make_split, read_embeddings, read_manifest, write_embeddings,
    write_manifest,
};
use residuum::regression::{fit_ridge, ResidualModel};
use residuum::synthgen::{generate, SynthConfig};
use residuum::{Manifest, SplitPlan};

fn dataset() -> residuum::synthgen::SynthDataset {
    generate(&SynthConfig {
        n_sentences: 10,
        n_tones: 4,
        text_dims: 4,
        speech_dims: 6,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn synthetic_dataset_survives_a_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let (tp, sp, mp) = (
        dir.path().join("t.embx"),
        dir.path().join("s.embx"),
        dir.path().join("m.jsonl"),
    );
    write_embeddings(&data.text, &tp).unwrap();
    write_embeddings(&data.speech, &sp).unwrap();
    let mut manifest = data.manifest.clone();
    let hash = content_hash(&[
        &encode_embx(&data.speech).unwrap(),
        &encode_embx(&data.text).unwrap(),
    ]);
    manifest.meta.as_mut().unwrap().content_hash = Some(hash.clone());
    write_manifest(&manifest, &mp).unwrap();

    let text = read_embeddings(&tp).unwrap();
    let speech = read_embeddings(&sp).unwrap();
    let back: Manifest = read_manifest(&mp).unwrap();
    assert_eq!(text, data.text.to_f32_precision());
    assert_eq!(speech, data.speech.to_f32_precision());
    assert_eq!(back, manifest);
    let on_disk = content_hash(&[&std::fs::read(&sp).unwrap(), &std::fs::read(&tp).unwrap()]);
    assert_eq!(on_disk, hash);
    assert_eq!(
        back.meta.unwrap().speech_model.as_deref(),
        Some("synthetic")
    );
}

#[test]
fn identical_transcripts_share_text_rows() {
    let data = dataset();
    let entries = data.manifest.entries();
    for i in 0..entries.len() {
        for j in 0..entries.len() {
            if entries[i].transcript_key == entries[j].transcript_key {
                assert_eq!(data.text.row(i), data.text.row(j));
            }
        }
    }
}

#[test]
fn split_plan_round_trips_as_json() {
    let data = dataset();
    let plan = make_split(&data.manifest, 0.25, 3, true).unwrap();
    let back: SplitPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(back, plan);
    back.validate(data.manifest.len()).unwrap();
    // 10 rows per tone, round(2.5) = 3 of each on the test side
    let y = data.manifest.tone_indices();
    for c in 0..4 {
        assert_eq!(plan.test_indices.iter().filter(|&&i| y[i] == c).count(), 3);
    }
}

#[test]
fn fitted_models_round_trip_through_containers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let ridge = fit_ridge(&data.text, &data.speech, 0.1).unwrap();
    let path = dir.path().join("ridge.rsdm");
    ridge.to_container().unwrap().write(&path).unwrap();
    let back = ResidualModel::from_container(&Container::read(&path).unwrap()).unwrap();
    // W and b are stored as EMBX payloads, so at f32 precision
    assert_eq!(back.weights, ridge.weights.map(|v| v as f32 as f64));
    assert_eq!(back.intercept, ridge.intercept.map(|v| v as f32 as f64));
    assert_eq!(back.t_mean, ridge.t_mean);
    assert_eq!(back.lambda, ridge.lambda);

    let y = data.manifest.tone_indices();
    let lr = fit_logreg(
        &data.speech,
        &y,
        data.manifest.label_set(),
        &LogRegParams::default(),
    )
    .unwrap();
    let model = ClassifierModel::LogReg(lr);
    let path = dir.path().join("lr.rsdm");
    model.to_container().unwrap().write(&path).unwrap();
    let back = ClassifierModel::from_container(&Container::read(&path).unwrap()).unwrap();
    let expected = model.predict(&data.speech).unwrap();
    for (a, b) in back.predict(&data.speech).unwrap().iter().zip(&expected) {
        assert_eq!(a.label, b.label);
        assert!(a
            .probs
            .iter()
            .zip(&b.probs)
            .all(|(p, q)| (p - q).abs() < 1e-5));
    }
    assert!(ResidualModel::from_container(&Container::read(&path).unwrap()).is_err());
}
