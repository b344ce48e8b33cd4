use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AudioClip, DatasetError, Split};

/// Optional deterministic subsampling applied by [`split_corpus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPolicy {
    /// Fraction of each side kept, in `(0, 1]`.
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            train_fraction: 1.0,
            test_fraction: 1.0,
            seed: 0,
        }
    }
}

fn subsample(clips: Vec<AudioClip>, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<AudioClip> {
    if fraction >= 1.0 {
        return clips;
    }
    let keep = ((clips.len() as f64) * fraction).ceil() as usize;
    let mut idx: Vec<usize> = (0..clips.len()).collect();
    idx.shuffle(rng);
    let mut chosen = vec![false; clips.len()];
    for &i in &idx[..keep] {
        chosen[i] = true;
    }
    clips
        .into_iter()
        .zip(chosen)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

/// Partitions by the metadata split field, keeping corpus order.
pub fn split_corpus(
    corpus: Vec<AudioClip>,
    policy: &SplitPolicy,
) -> Result<(Vec<AudioClip>, Vec<AudioClip>), DatasetError> {
    for f in [policy.train_fraction, policy.test_fraction] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(DatasetError::InvalidConfig(format!(
                "subsample fraction {f} outside (0, 1]"
            )));
        }
    }
    for c in &corpus {
        c.metadata.validate()?;
    }
    let (train, test): (Vec<_>, Vec<_>) = corpus
        .into_iter()
        .partition(|c| c.metadata.split == Split::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let train = subsample(train, policy.train_fraction, &mut rng);
    let test = subsample(test, policy.test_fraction, &mut rng);
    if train.is_empty() {
        return Err(DatasetError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(DatasetError::EmptySplit("test"));
    }
    Ok((train, test))
}
