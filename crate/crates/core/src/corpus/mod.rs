//! Data model, dataset I/O, the synthetic corpus, embeddings, and the
//! POS-based word-replacement augmentation.

mod replace;
mod sample;
pub mod toy;
mod vocab;

pub use replace::word_replace;
pub use sample::{
    load_jsonl, read_features, save_jsonl, write_features, Exemplar, FeatureSource, Sample,
};
pub use vocab::{
    cosine, is_stop_word, sentence_embedding, EmbedTable, Vocab, BOS, EOS, PAD, RESERVED,
    STOP_WORDS, UNK,
};

/// Build the vocabulary over captions and exemplar sentences of a corpus.
pub fn vocab_from_samples(samples: &[Sample]) -> Vocab {
    let mut pairs: Vec<(&[String], &[String])> = Vec::new();
    for s in samples {
        pairs.push((&s.caption, &s.caption_pos));
        for e in &s.exemplars {
            pairs.push((&e.words, &e.pos));
        }
    }
    Vocab::build(pairs)
}
