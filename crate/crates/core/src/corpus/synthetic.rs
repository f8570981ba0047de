use super::{Category, SentenceRecord, Source};
use crate::labels::BinaryLabel;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FILLER: [&str; 12] = [
    "people", "from", "the", "city", "often", "said", "that", "neighbours", "were", "quite",
    "there", "today",
];
const BIAS_WORDS: [&str; 2] = ["considerate", "worthless"];
const STEREO_WORDS: [&str; 2] = ["individually", "typically"];

/// Labeled sentences whose labels are fixed by one marker word per task, so
/// any encoder that keeps token identity yields separable features.
///
/// The four (bias, stereotype) combinations cycle, so every combination
/// appears `n / 4` times (rounded up for the first `n % 4`).
pub fn separable_corpus(n: usize, seed: u64) -> Vec<SentenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let b = i % 2;
            let s = (i / 2) % 2;
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..2 {
                words.push(FILLER.choose(&mut rng).unwrap());
            }
            words.push(BIAS_WORDS[b]);
            words.push(FILLER.choose(&mut rng).unwrap());
            words.push(STEREO_WORDS[s]);
            words.push(FILLER.choose(&mut rng).unwrap());
            let bias = BinaryLabel::from_index(b).unwrap();
            let stereo = BinaryLabel::from_index(s).unwrap();
            SentenceRecord::new(format!("syn{i:04}"), words.join(" "), Source::Synthetic)
                .with_labels(bias, stereo)
                .with_category(if b == 1 || s == 1 { Category::Other } else { Category::None })
        })
        .collect()
}
