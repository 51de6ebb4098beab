//! POS-based word replacement, the augmentation that keeps the syntax
//! encoder from memorizing exemplar words.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};

/// Independently replace each word with probability `p` by a uniform draw
/// from its POS bucket (which may return the word itself). Length and the
/// POS sequence are preserved. A tag absent from the lexicon leaves the
/// position unchanged.
pub fn word_replace(
    words: &[String],
    pos_tags: &[String],
    p: f64,
    lexicon: &BTreeMap<String, Vec<String>>,
    rng_seed: u64,
) -> Result<Vec<String>> {
    if words.len() != pos_tags.len() {
        return Err(CoreError::dim(format!(
            "word_replace: {} words vs {} tags",
            words.len(),
            pos_tags.len()
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::domain(format!(
            "word_replace: probability {p} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(words.len());
    for (w, t) in words.iter().zip(pos_tags) {
        let fire = rng.gen_bool(p);
        let replacement = if fire {
            match lexicon.get(t) {
                Some(bucket) if !bucket.is_empty() => {
                    bucket[rng.gen_range(0..bucket.len())].clone()
                }
                _ => w.clone(),
            }
        } else {
            w.clone()
        };
        out.push(replacement);
    }
    Ok(out)
}
