use residuum::classifiers::{fit_logreg, predict_logreg, LogRegParams};
use residuum::dataspec::make_split;
use residuum::metrics::accuracy;
use residuum::regression::{default_lambda_grid, extract_residuals, fit_ridge, fit_ridge_cv};
use residuum::synthgen::{generate, SynthConfig};
use residuum::EmbeddingMatrix;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_sentences: 40,
        n_tones: 6,
        text_dims: 8,
        speech_dims: 12,
        seed,
        ..Default::default()
    }
}

/// Mean speech row per sentence (rows are sentence-major).
fn tone_average(speech: &EmbeddingMatrix, tones: usize) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = (0..speech.rows() / tones)
        .map(|j| {
            (0..speech.dims())
                .map(|k| {
                    (0..tones)
                        .map(|c| speech.get(j * tones + c, k))
                        .sum::<f64>()
                        / tones as f64
                })
                .collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

#[test]
fn noiseless_fit_recovers_the_mixing_matrix() {
    for seed in 0..5 {
        let cfg = SynthConfig {
            noise_scale: 0.0,
            ..small(seed)
        };
        let data = generate(&cfg).unwrap();
        let sentences: Vec<usize> = (0..cfg.n_sentences).map(|j| j * cfg.n_tones).collect();
        let text = data.text.select_rows(&sentences);
        let speech = tone_average(&data.speech, cfg.n_tones);
        let m = fit_ridge(&text, &speech, 0.0).unwrap();
        assert!((&m.weights - &data.mixing).amax() <= 1e-6);
    }
}

#[test]
fn toneless_noiseless_data_has_zero_residual() {
    let cfg = SynthConfig {
        noise_scale: 0.0,
        tone_scale: 0.0,
        ..small(1)
    };
    let data = generate(&cfg).unwrap();
    let m = fit_ridge(&data.text, &data.speech, 0.0).unwrap();
    let r = extract_residuals(&m, &data.text, &data.speech).unwrap();
    assert!(r.data().iter().all(|v| v.abs() <= 1e-9));
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn residuals_cluster_by_tone() {
    let data = generate(&SynthConfig::default()).unwrap();
    let (m, _) = fit_ridge_cv(&data.text, &data.speech, &default_lambda_grid(), 5, 0).unwrap();
    let r = extract_residuals(&m, &data.text, &data.speech).unwrap();
    let y = data.manifest.tone_indices();
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..r.rows() {
        for j in i + 1..r.rows() {
            let c = cosine(r.row(i), r.row(j));
            if y[i] == y[j] {
                within += c;
                nw += 1;
            } else {
                between += c;
                nb += 1;
            }
        }
    }
    let (within, between) = (within / nw as f64, between / nb as f64);
    assert!(within > between, "within {within} vs between {between}");
}

#[test]
fn generation_is_deterministic_and_tones_are_separated() {
    let cfg = SynthConfig {
        seed: 17,
        ..Default::default()
    };
    let (a, b) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
    assert_eq!(a.text, b.text);
    assert_eq!(a.speech, b.speech);
    assert_eq!(a.manifest, b.manifest);
    assert_eq!(a.speech.rows(), 1584);
    for (i, ti) in a.tone_offsets.iter().enumerate() {
        assert!((ti.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        for tj in &a.tone_offsets[i + 1..] {
            assert!(cosine(ti, tj) <= 0.5 + 1e-12);
        }
    }
}

fn residual_accuracy(noise: f64, seed: u64) -> f64 {
    let data = generate(&SynthConfig {
        noise_scale: noise,
        seed,
        ..Default::default()
    })
    .unwrap();
    let plan = make_split(&data.manifest, 0.2, seed, true).unwrap();
    let t = data.text.select_rows(&plan.train_indices);
    let s = data.speech.select_rows(&plan.train_indices);
    let (m, _) = fit_ridge_cv(&t, &s, &default_lambda_grid(), 5, seed).unwrap();
    let r = extract_residuals(&m, &data.text, &data.speech).unwrap();
    let y = data.manifest.tone_indices();
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let clf = fit_logreg(
        &r.select_rows(&plan.train_indices),
        &pick(&plan.train_indices),
        data.manifest.label_set(),
        &LogRegParams::default(),
    )
    .unwrap();
    let pred: Vec<usize> = predict_logreg(&clf, &r.select_rows(&plan.test_indices))
        .unwrap()
        .iter()
        .map(|p| p.label)
        .collect();
    accuracy(&pick(&plan.test_indices), &pred).unwrap()
}

#[test]
fn residual_accuracy_degrades_with_noise() {
    let seeds = [1, 2, 3, 4, 5];
    let means: Vec<f64> = [0.1, 0.5, 2.0]
        .iter()
        .map(|&noise| {
            seeds
                .iter()
                .map(|&s| residual_accuracy(noise, s))
                .sum::<f64>()
                / seeds.len() as f64
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
    assert!(means[2] < means[0]);
}
