//! Synthetic paired (text, speech) embeddings with known structure.
//!
//! Sentence `j` gets a unit-norm Gaussian text vector `t_j`; tone `c` gets an
//! offset `τ_c` of norm `tone_scale`, with every pair of offsets at least
//! `min_tone_angle_deg` apart. Each (sentence, tone) pair yields one row:
//! text row `t_j` (identical across a sentence's tones) and speech row
//! `A·t_j + τ_c + ε`, `ε ~ N(0, noise_scale² I)`. Rows are sentence-major.
//!
//! Mixing matrix, text vectors, tone offsets and noise come from separate
//! random streams of the seed, so e.g. changing the noise level leaves the
//! other three untouched.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataspec::{Corpus, EmbeddingMatrix, Manifest, ManifestMeta, UtteranceRecord};
use crate::error::{Error, Result};
use crate::seed;

pub const TONE_NAMES: [&str; 12] = [
    "formal",
    "conversational",
    "promotional",
    "meditative",
    "furious",
    "angry",
    "cheerful",
    "sad",
    "calm",
    "excited",
    "whispering",
    "authoritative",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub n_tones: usize,
    pub text_dims: usize,
    pub speech_dims: usize,
    /// Explicit `speech_dims × text_dims` mixing matrix, rows outermost.
    /// When absent, entries are drawn i.i.d. `N(0, mixing_scale²)`.
    pub mixing: Option<Vec<Vec<f64>>>,
    pub mixing_scale: f64,
    pub tone_scale: f64,
    pub noise_scale: f64,
    pub min_tone_angle_deg: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sentences: 132,
            n_tones: 12,
            text_dims: 32,
            speech_dims: 48,
            mixing: None,
            mixing_scale: 1.0,
            tone_scale: 1.0,
            noise_scale: 0.1,
            min_tone_angle_deg: 60.0,
            max_attempts: 10_000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sentences < 2 {
            return Err(Error::param("n_sentences must be at least 2"));
        }
        if self.n_tones < 2 {
            return Err(Error::param("n_tones must be at least 2"));
        }
        if self.text_dims < 2 || self.speech_dims < 2 {
            return Err(Error::param("text_dims and speech_dims must be at least 2"));
        }
        for (name, v) in [
            ("mixing_scale", self.mixing_scale),
            ("tone_scale", self.tone_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=180.0).contains(&self.min_tone_angle_deg) {
            return Err(Error::param("min_tone_angle_deg must lie in [0, 180]"));
        }
        if let Some(m) = &self.mixing {
            if m.len() != self.speech_dims || m.iter().any(|r| r.len() != self.text_dims) {
                return Err(Error::param(format!(
                    "mixing must be {}x{}",
                    self.speech_dims, self.text_dims
                )));
            }
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::param("mixing contains non-finite values"));
            }
        }
        Ok(())
    }
}

pub struct SynthDataset {
    pub text: EmbeddingMatrix,
    pub speech: EmbeddingMatrix,
    pub manifest: Manifest,
    /// Ground-truth `A`, `speech_dims × text_dims`.
    pub mixing: DMatrix<f64>,
    /// Ground-truth `τ_c`, one per tone.
    pub tone_offsets: Vec<Vec<f64>>,
}

const STREAM_MIXING: u64 = 0;
const STREAM_TEXT: u64 = 1;
const STREAM_TONES: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn scale_to(v: &mut [f64], norm: f64) {
    let cur = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if cur > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / cur);
    }
}

fn tone_offsets(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    let d = cfg.speech_dims;
    if cfg.tone_scale == 0.0 {
        return Ok(vec![vec![0.0; d]; cfg.n_tones]);
    }
    let mut rng = seed::rng_stream(cfg.seed, STREAM_TONES);
    let max_cos = cfg.min_tone_angle_deg.to_radians().cos();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_tones);
    let mut attempts = 0;
    while out.len() < cfg.n_tones {
        if attempts == cfg.max_attempts {
            return Err(Error::ToneSeparation {
                count: cfg.n_tones,
                min_angle_deg: cfg.min_tone_angle_deg,
                attempts,
            });
        }
        attempts += 1;
        let mut v = gaussian(&mut rng, d);
        scale_to(&mut v, 1.0);
        let ok = out.iter().all(|u| {
            let cos = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / cfg.tone_scale;
            cos <= max_cos
        });
        if ok {
            scale_to(&mut v, cfg.tone_scale);
            out.push(v);
        }
    }
    Ok(out)
}

pub fn tone_name(c: usize, n_tones: usize) -> String {
    if n_tones <= TONE_NAMES.len() {
        TONE_NAMES[c].to_string()
    } else {
        format!("tone_{c:02}")
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (dt, ds) = (cfg.text_dims, cfg.speech_dims);

    let mixing = match &cfg.mixing {
        Some(rows) => DMatrix::from_row_iterator(ds, dt, rows.iter().flatten().copied()),
        None => {
            let mut rng = seed::rng_stream(cfg.seed, STREAM_MIXING);
            DMatrix::from_row_iterator(
                ds,
                dt,
                gaussian(&mut rng, ds * dt)
                    .into_iter()
                    .map(|v| v * cfg.mixing_scale),
            )
        }
    };

    let mut rng = seed::rng_stream(cfg.seed, STREAM_TEXT);
    let sentences: Vec<Vec<f64>> = (0..cfg.n_sentences)
        .map(|_| {
            let mut t = gaussian(&mut rng, dt);
            scale_to(&mut t, 1.0);
            t
        })
        .collect();
    let tones = tone_offsets(cfg)?;

    let mut noise_rng = seed::rng_stream(cfg.seed, STREAM_NOISE);
    let n = cfg.n_sentences * cfg.n_tones;
    let mut text = Vec::with_capacity(n * dt);
    let mut speech = Vec::with_capacity(n * ds);
    let mut entries = Vec::with_capacity(n);
    for (j, t) in sentences.iter().enumerate() {
        let at: Vec<f64> = (0..ds)
            .map(|k| mixing.row(k).iter().zip(t).map(|(a, b)| a * b).sum())
            .collect();
        for (c, tau) in tones.iter().enumerate() {
            text.extend_from_slice(t);
            for k in 0..ds {
                let eps: f64 = noise_rng.sample(StandardNormal);
                speech.push(at[k] + tau[k] + cfg.noise_scale * eps);
            }
            let tone = tone_name(c, cfg.n_tones);
            entries.push(UtteranceRecord {
                id: format!("s{j:03}_{tone}"),
                corpus: Corpus::Synthetic,
                transcript_key: format!("s{j:03}"),
                tone,
                speaker: "synth".into(),
            });
        }
    }

    let mut manifest = Manifest::new(entries)?;
    let mut extra = BTreeMap::new();
    extra.insert("synth_config".to_string(), serde_json::to_value(cfg)?);
    manifest.meta = Some(ManifestMeta {
        speech_model: Some("synthetic".into()),
        text_model: Some("synthetic".into()),
        content_hash: None,
        extra,
    });

    Ok(SynthDataset {
        text: EmbeddingMatrix::new(n, dt, text)?,
        speech: EmbeddingMatrix::new(n, ds, speech)?,
        manifest,
        mixing,
        tone_offsets: tones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{extract_residuals, fit_ridge};

    fn small() -> SynthConfig {
        SynthConfig {
            n_sentences: 10,
            n_tones: 4,
            text_dims: 3,
            speech_dims: 5,
            ..Default::default()
        }
    }

    #[test]
    fn default_shape() {
        let d = generate(&SynthConfig::default()).unwrap();
        assert_eq!(d.text.rows(), 1584);
        assert_eq!(d.manifest.len(), 1584);
        assert_eq!(d.manifest.label_set().len(), 12);
        assert_eq!((d.text.dims(), d.speech.dims()), (32, 48));
        // one sentence's renditions share a text row
        assert_eq!(d.text.row(0), d.text.row(11));
        assert_ne!(d.text.row(0), d.text.row(12));
    }

    #[test]
    fn tones_are_separated_and_scaled() {
        let d = generate(&SynthConfig::default()).unwrap();
        for (i, a) in d.tone_offsets.iter().enumerate() {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((na - 1.0).abs() < 1e-12);
            for b in &d.tone_offsets[..i] {
                let cos: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!(cos <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.speech, b.speech);
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn toneless_noiseless_is_linear() {
        let cfg = SynthConfig {
            noise_scale: 0.0,
            tone_scale: 0.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        let m = fit_ridge(&d.text, &d.speech, 0.0).unwrap();
        let r = extract_residuals(&m, &d.text, &d.speech).unwrap();
        assert!(r.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn infeasible_separation_reports_attempts() {
        let cfg = SynthConfig {
            n_tones: 6,
            speech_dims: 2,
            min_tone_angle_deg: 90.0,
            max_attempts: 50,
            ..small()
        };
        match generate(&cfg) {
            Err(Error::ToneSeparation { attempts: 50, .. }) => {}
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig {
            text_dims: 1,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            n_tones: 1,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            noise_scale: -1.0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            mixing: Some(vec![vec![0.0; 3]; 4]),
            ..small()
        })
        .is_err());
    }

    #[test]
    fn explicit_mixing_is_used() {
        let mixing: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..3).map(|j| (k * 3 + j) as f64).collect())
            .collect();
        let d = generate(&SynthConfig {
            mixing: Some(mixing),
            ..small()
        })
        .unwrap();
        assert_eq!(d.mixing[(1, 2)], 5.0);
    }
}
