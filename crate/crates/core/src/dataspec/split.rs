use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::error::{Error, Result};
use crate::seed;

/// Disjoint train/test row indices, both sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
    pub stratified: bool,
    #[serde(default)]
    pub group_by_transcript: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitPlan {
    /// Checks disjointness and bounds against a dataset of `n` rows.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n {
                return Err(Error::shape(format!(
                    "split index {i} out of range for {n} rows"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::shape(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Fraction of rows (or transcript groups) sent to the test side.
    pub ratio: f64,
    pub seed: u64,
    pub stratified: bool,
    /// Keep every rendition of a transcript on the same side.
    pub group_by_transcript: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            seed: 42,
            stratified: true,
            group_by_transcript: false,
        }
    }
}

/// Test-side size for a block of `n >= 2` items: `round(n * ratio)` clamped
/// to `[1, n - 1]` so both sides are nonempty.
pub fn test_count(n: usize, ratio: f64) -> usize {
    debug_assert!(n >= 2);
    ((n as f64 * ratio).round() as usize).clamp(1, n - 1)
}

pub fn make_split(
    manifest: &Manifest,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitPlan> {
    make_split_with(
        manifest,
        &SplitOptions {
            ratio,
            seed,
            stratified,
            group_by_transcript: false,
        },
    )
}

pub fn make_split_with(manifest: &Manifest, opts: &SplitOptions) -> Result<SplitPlan> {
    let n = manifest.len();
    if !(opts.ratio > 0.0 && opts.ratio < 1.0) {
        return Err(Error::param(format!(
            "split ratio {} not in (0, 1)",
            opts.ratio
        )));
    }
    if n < 2 {
        return Err(Error::param("a split needs at least two rows"));
    }
    let mut rng = seed::rng(opts.seed);
    let mut warnings = Vec::new();
    let mut test = Vec::new();
    let mut train = Vec::new();

    if opts.group_by_transcript {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, e) in manifest.entries().iter().enumerate() {
            groups
                .entry(e.transcript_key.as_str())
                .or_insert_with(|| {
                    order.push(e.transcript_key.as_str());
                    Vec::new()
                })
                .push(i);
        }
        if order.len() < 2 {
            return Err(Error::param("grouped split needs at least two transcripts"));
        }
        if opts.stratified {
            warnings.push("stratification is not applied to transcript-grouped splits".into());
        }
        order.shuffle(&mut rng);
        let k = test_count(order.len(), opts.ratio);
        for (g, key) in order.iter().enumerate() {
            let side = if g < k { &mut test } else { &mut train };
            side.extend_from_slice(&groups[key]);
        }
    } else if opts.stratified {
        let labels = manifest.tone_indices();
        let mut by_class = vec![Vec::new(); manifest.label_set().len()];
        for (i, &c) in labels.iter().enumerate() {
            by_class[c].push(i);
        }
        for (c, mut members) in by_class.into_iter().enumerate() {
            match members.len() {
                0 => {}
                1 => {
                    let msg = format!(
                        "tone {:?} has a single sample; it goes to train",
                        manifest.label_set().label(c)
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    train.push(members[0]);
                }
                m => {
                    members.shuffle(&mut rng);
                    let k = test_count(m, opts.ratio);
                    test.extend_from_slice(&members[..k]);
                    train.extend_from_slice(&members[k..]);
                }
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let k = test_count(n, opts.ratio);
        test.extend_from_slice(&all[..k]);
        train.extend_from_slice(&all[k..]);
    }

    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed: opts.seed,
        ratio: opts.ratio,
        stratified: opts.stratified && !opts.group_by_transcript,
        group_by_transcript: opts.group_by_transcript,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataspec::{Corpus, UtteranceRecord};
    use proptest::prelude::*;

    fn manifest(tones: &[usize], sentences_per: Option<usize>) -> Manifest {
        let entries = tones
            .iter()
            .enumerate()
            .map(|(i, t)| UtteranceRecord {
                id: format!("u{i}"),
                corpus: Corpus::Synthetic,
                transcript_key: match sentences_per {
                    Some(k) => format!("s{}", i / k),
                    None => format!("s{i}"),
                },
                tone: format!("t{t}"),
                speaker: "s".into(),
            })
            .collect();
        Manifest::new(entries).unwrap()
    }

    #[test]
    fn deterministic() {
        let m = manifest(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], None);
        let a = make_split(&m, 0.2, 7, false).unwrap();
        let b = make_split(&m, 0.2, 7, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test_indices.len(), 2);
        a.validate(10).unwrap();
    }

    #[test]
    fn stratified_twelve_by_ten() {
        let tones: Vec<usize> = (0..120).map(|i| i % 12).collect();
        let m = manifest(&tones, None);
        let plan = make_split(&m, 0.2, 42, true).unwrap();
        let mut per_class = [0usize; 12];
        for &i in &plan.test_indices {
            per_class[tones[i]] += 1;
        }
        assert_eq!(per_class, [2; 12]);
        assert_eq!(plan.train_indices.len(), 96);
    }

    #[test]
    fn extreme_ratio_keeps_both_sides() {
        let m = manifest(&[0, 1], None);
        let plan = make_split(&m, 0.99, 1, false).unwrap();
        assert_eq!(plan.train_indices.len(), 1);
        assert_eq!(plan.test_indices.len(), 1);
    }

    #[test]
    fn singleton_class_goes_to_train_with_warning() {
        let m = manifest(&[0, 0, 0, 0, 1], None);
        let plan = make_split(&m, 0.5, 3, true).unwrap();
        assert!(plan.train_indices.contains(&4));
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn bad_ratio_rejected() {
        let m = manifest(&[0, 1], None);
        assert!(make_split(&m, 0.0, 1, false).is_err());
        assert!(make_split(&m, 1.0, 1, false).is_err());
    }

    #[test]
    fn grouped_split_keeps_transcripts_together() {
        let tones: Vec<usize> = (0..60).map(|i| i % 4).collect();
        let m = manifest(&tones, Some(4));
        let plan = make_split_with(
            &m,
            &SplitOptions {
                ratio: 0.2,
                seed: 5,
                stratified: false,
                group_by_transcript: true,
            },
        )
        .unwrap();
        assert_eq!(plan.test_indices.len(), 12);
        let key = |i: usize| m.entries()[i].transcript_key.clone();
        for &t in &plan.test_indices {
            assert!(plan.train_indices.iter().all(|&r| key(r) != key(t)));
        }
    }

    proptest! {
        #[test]
        fn stratification_bound(
            sizes in prop::collection::vec(2usize..15, 1..6),
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let tones: Vec<usize> = sizes
                .iter()
                .enumerate()
                .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
                .collect();
            let m = manifest(&tones, None);
            let plan = make_split(&m, ratio, seed, true).unwrap();
            plan.validate(tones.len()).unwrap();
            prop_assert_eq!(plan.train_indices.len() + plan.test_indices.len(), tones.len());
            for (c, &size) in sizes.iter().enumerate() {
                let k = plan.test_indices.iter().filter(|&&i| tones[i] == c).count();
                prop_assert!(k >= 1 && k < size);
                prop_assert!((k as f64 / size as f64 - ratio).abs() <= 1.0 / size as f64 + 1e-12);
            }
        }
    }
}
