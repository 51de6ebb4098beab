//! The three encoders: the hierarchical sentence syntax encoder (character
//! LSTM, averaged into word features, then a word LSTM), the video semantic
//! encoder, and the per-word sentence semantic encoder used by the
//! autoencoding training path.

use crate::corpus::word_replace;
use crate::error::{CoreError, Result};
use crate::model::{char_index, Model};
use crate::numcore::{Tape, Tensor, Value};

/// A plain LSTM cell bound to registered parameters. Gate order is (f, i, o, g).
pub struct LstmCell {
    w_i: Value,
    w_h: Value,
    b: Value,
    hidden: usize,
}

impl LstmCell {
    pub fn register(tape: &mut Tape, model: &Model, prefix: &str) -> Result<Self> {
        let w_i = tape.param(&model.params, &format!("{prefix}.w_i"))?;
        let w_h = tape.param(&model.params, &format!("{prefix}.w_h"))?;
        let b = tape.param(&model.params, &format!("{prefix}.b"))?;
        Ok(LstmCell {
            w_i,
            w_h,
            b,
            hidden: model.dims.hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, tape: &mut Tape, x: Value, h: Value, c: Value) -> Result<(Value, Value)> {
        let zx = tape.matvec(self.w_i, x)?;
        let zh = tape.matvec(self.w_h, h)?;
        let gates = tape.add_n(&[zx, zh, self.b])?;
        lstm_combine(tape, gates, c, self.hidden)
    }
}

/// Shared gate arithmetic: split pre-activations (f, i, o, g) and update the
/// cell and hidden state.
pub fn lstm_combine(
    tape: &mut Tape,
    gates: Value,
    c_prev: Value,
    hidden: usize,
) -> Result<(Value, Value)> {
    let f = tape.slice(gates, 0, hidden)?;
    let i = tape.slice(gates, hidden, hidden)?;
    let o = tape.slice(gates, 2 * hidden, hidden)?;
    let g = tape.slice(gates, 3 * hidden, hidden)?;
    let fs = tape.sigmoid(f)?;
    let is = tape.sigmoid(i)?;
    let os = tape.sigmoid(o)?;
    let gt = tape.tanh(g)?;
    let keep = tape.mul(fs, c_prev)?;
    let write = tape.mul(is, gt)?;
    let c = tape.add(keep, write)?;
    let ct = tape.tanh(c)?;
    let h = tape.mul(os, ct)?;
    Ok((h, c))
}

/// An encoded sequence: one row per position plus a validity mask.
pub struct EncodedSeq {
    pub rows: Vec<Value>,
    pub mask: Vec<bool>,
}

impl EncodedSeq {
    pub fn all_valid(rows: Vec<Value>) -> Self {
        let mask = vec![true; rows.len()];
        EncodedSeq { rows, mask }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Word-replacement policy for the syntax encoder input.
#[derive(Debug, Clone, Copy)]
pub struct ReplacePolicy {
    pub p: f64,
    pub seed: u64,
}

/// Character-level word feature: run the character LSTM over the word's
/// characters (truncated to `max_word_len`) from a zero state and average
/// the hidden states.
pub fn char_word_feature(
    tape: &mut Tape,
    model: &Model,
    cell: &LstmCell,
    char_embed: Value,
    word: &str,
) -> Result<Value> {
    if word.is_empty() {
        return Err(CoreError::domain("char_word_feature of empty word"));
    }
    let h = cell.hidden();
    let mut hs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut cs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut states = Vec::new();
    for ch in word.chars().take(model.dims.max_word_len) {
        let e = tape.select_row(char_embed, char_index(ch))?;
        let (nh, nc) = cell.step(tape, e, hs, cs)?;
        hs = nh;
        cs = nc;
        states.push(nh);
    }
    let stacked = tape.stack_rows(&states)?;
    tape.mean_over_axis(stacked, 0)
}

/// Hierarchical syntax encoder: char-level features per word, then the
/// word-level LSTM. Word replacement (training only) happens on the way in.
pub fn encode_syntax(
    tape: &mut Tape,
    model: &Model,
    words: &[String],
    pos_tags: &[String],
    replace: Option<ReplacePolicy>,
) -> Result<EncodedSeq> {
    if words.is_empty() {
        return Err(CoreError::domain("encode_syntax of empty sentence"));
    }
    let replaced;
    let words = match replace {
        Some(r) if r.p > 0.0 => {
            replaced = word_replace(words, pos_tags, r.p, model.vocab.pos_lexicon(), r.seed)?;
            &replaced
        }
        _ => words,
    };

    let char_cell = LstmCell::register(tape, model, "enc.char")?;
    let char_embed = tape.param(&model.params, "enc.char.embed")?;
    let word_cell = LstmCell::register(tape, model, "enc.word")?;

    let h = model.dims.hidden;
    let mut hs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut cs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut rows = Vec::with_capacity(words.len());
    for w in words {
        let feat = char_word_feature(tape, model, &char_cell, char_embed, w)?;
        let (nh, nc) = word_cell.step(tape, feat, hs, cs)?;
        hs = nh;
        cs = nc;
        rows.push(nh);
    }
    Ok(EncodedSeq::all_valid(rows))
}

/// Video semantic encoder: a linear projection per frame, then an LSTM over
/// the valid prefix. Padded rows come out as zero vectors and are masked.
pub fn encode_video(
    tape: &mut Tape,
    model: &Model,
    features: &[Vec<f64>],
    valid_frames: usize,
) -> Result<EncodedSeq> {
    if features.is_empty() || valid_frames == 0 || valid_frames > features.len() {
        return Err(CoreError::dim(format!(
            "encode_video: {} frames, {valid_frames} valid",
            features.len()
        )));
    }
    let d = features[0].len();
    if d != model.feature_dim {
        return Err(CoreError::dim(format!(
            "encode_video: feature dim {d}, model expects {}",
            model.feature_dim
        )));
    }
    let proj_w = tape.param(&model.params, "enc.video.proj.w")?;
    let proj_b = tape.param(&model.params, "enc.video.proj.b")?;
    let cell = LstmCell::register(tape, model, "enc.video")?;

    let h = model.dims.hidden;
    let mut hs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut cs = tape.constant(Tensor::zeros(vec![h]))?;
    let mut rows = Vec::with_capacity(features.len());
    let mut mask = Vec::with_capacity(features.len());
    for frame in &features[..valid_frames] {
        let x = tape.constant(Tensor::vector(frame.clone()))?;
        let px = tape.matvec(proj_w, x)?;
        let p = tape.add(px, proj_b)?;
        let (nh, nc) = cell.step(tape, p, hs, cs)?;
        hs = nh;
        cs = nc;
        rows.push(nh);
        mask.push(true);
    }
    for _ in valid_frames..features.len() {
        rows.push(tape.constant(Tensor::zeros(vec![h]))?);
        mask.push(false);
    }
    Ok(EncodedSeq { rows, mask })
}

/// Sentence semantic encoder: a tanh FC layer over each word's frozen
/// embedding; no recurrence, so the rows are a per-position map.
pub fn encode_sentence_semantics(
    tape: &mut Tape,
    model: &Model,
    words: &[String],
) -> Result<EncodedSeq> {
    if words.is_empty() {
        return Err(CoreError::domain(
            "encode_sentence_semantics of empty sentence",
        ));
    }
    let table = tape.param(&model.params, "emb.table")?;
    let fc_w = tape.param(&model.params, "enc.sent.fc.w")?;
    let fc_b = tape.param(&model.params, "enc.sent.fc.b")?;
    let mut rows = Vec::with_capacity(words.len());
    for w in words {
        let e = tape.select_row(table, model.vocab.id(w))?;
        let z = tape.matvec(fc_w, e)?;
        let zb = tape.add(z, fc_b)?;
        rows.push(tape.tanh(zb)?);
    }
    Ok(EncodedSeq::all_valid(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{generate_toy_corpus, ToyConfig};
    use crate::corpus::{vocab_from_samples, EmbedTable};
    use crate::model::{ModelDims, SyntaxVocab};
    use crate::numcore::Tensor;

    fn tiny_model() -> Model {
        let cfg = ToyConfig {
            n_samples: 6,
            exemplars_per_sample: 2,
            ..Default::default()
        };
        let samples = generate_toy_corpus(&cfg).unwrap();
        let vocab = vocab_from_samples(&samples);
        let table = EmbedTable::random(vocab.words(), 12, 3);
        let sv = SyntaxVocab::build(&samples);
        Model::init(
            ModelDims {
                hidden: 10,
                word_embed: 8,
                char_embed: 5,
                synhead_embed: 6,
                max_word_len: 24,
            },
            vocab,
            sv,
            32,
            &table,
            11,
        )
        .unwrap()
    }

    fn zero_weights(model: &mut Model, names: &[&str]) {
        for n in names {
            let t = model.params.tensor_mut(n).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn ws(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_char_word_is_that_step() {
        let model = tiny_model();
        let mut tape = Tape::new();
        let cell = LstmCell::register(&mut tape, &model, "enc.char").unwrap();
        let embed = tape.param(&model.params, "enc.char.embed").unwrap();
        let f = char_word_feature(&mut tape, &model, &cell, embed, "a").unwrap();

        let h0 = tape.constant(Tensor::zeros(vec![10])).unwrap();
        let c0 = tape.constant(Tensor::zeros(vec![10])).unwrap();
        let e = tape.select_row(embed, char_index('a')).unwrap();
        let (h1, _) = cell.step(&mut tape, e, h0, c0).unwrap();
        assert_eq!(tape.value(f).data(), tape.value(h1).data());
    }

    #[test]
    fn zero_initialized_char_encoder_outputs_zero() {
        // all gates 0.5, g = 0 => c = 0, h = 0 for every word
        let mut model = tiny_model();
        zero_weights(
            &mut model,
            &["enc.char.w_i", "enc.char.w_h", "enc.char.b", "enc.char.embed"],
        );
        let mut tape = Tape::new();
        let cell = LstmCell::register(&mut tape, &model, "enc.char").unwrap();
        let embed = tape.param(&model.params, "enc.char.embed").unwrap();
        let f = char_word_feature(&mut tape, &model, &cell, embed, "guitar").unwrap();
        assert!(tape.value(f).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_word_is_error() {
        let model = tiny_model();
        let mut tape = Tape::new();
        let cell = LstmCell::register(&mut tape, &model, "enc.char").unwrap();
        let embed = tape.param(&model.params, "enc.char.embed").unwrap();
        assert!(char_word_feature(&mut tape, &model, &cell, embed, "").is_err());
    }

    #[test]
    fn encode_syntax_single_word_matches_manual_step() {
        let model = tiny_model();
        let words = ws(&["dog"]);
        let tags = ws(&["NN"]);
        let mut tape = Tape::new();
        let enc = encode_syntax(&mut tape, &model, &words, &tags, None).unwrap();
        assert_eq!(enc.len(), 1);

        let word_cell = LstmCell::register(&mut tape, &model, "enc.word").unwrap();
        let char_cell = LstmCell::register(&mut tape, &model, "enc.char").unwrap();
        let embed = tape.param(&model.params, "enc.char.embed").unwrap();
        let feat = char_word_feature(&mut tape, &model, &char_cell, embed, "dog").unwrap();
        let h0 = tape.constant(Tensor::zeros(vec![10])).unwrap();
        let c0 = tape.constant(Tensor::zeros(vec![10])).unwrap();
        let (h1, _) = word_cell.step(&mut tape, feat, h0, c0).unwrap();
        assert_eq!(tape.value(enc.rows[0]).data(), tape.value(h1).data());
    }

    #[test]
    fn encode_syntax_is_deterministic_without_replacement() {
        let model = tiny_model();
        let words = ws(&["the", "dog", "chases", "a", "ball"]);
        let tags = ws(&["DT", "NN", "VBZ", "DT", "NN"]);
        let run = || {
            let mut tape = Tape::new();
            let enc = encode_syntax(&mut tape, &model, &words, &tags, None).unwrap();
            enc.rows
                .iter()
                .map(|&r| tape.value(r).data().to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn encode_syntax_with_seeded_replacement_is_deterministic() {
        let model = tiny_model();
        let words = ws(&["the", "dog", "chases", "a", "ball"]);
        let tags = ws(&["DT", "NN", "VBZ", "DT", "NN"]);
        let policy = Some(ReplacePolicy { p: 0.7, seed: 5 });
        let run = || {
            let mut tape = Tape::new();
            let enc = encode_syntax(&mut tape, &model, &words, &tags, policy).unwrap();
            enc.rows
                .iter()
                .map(|&r| tape.value(r).data().to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn permuting_words_changes_suffix_rows() {
        let model = tiny_model();
        let a = ws(&["the", "dog", "chases", "a", "ball", "quickly"]);
        let b = ws(&["the", "dog", "chases", "a", "quickly", "ball"]);
        let tags = ws(&["DT", "NN", "VBZ", "DT", "NN", "RB"]);
        let encode = |words: &[String]| {
            let mut tape = Tape::new();
            let enc = encode_syntax(&mut tape, &model, words, &tags, None).unwrap();
            enc.rows
                .iter()
                .map(|&r| tape.value(r).data().to_vec())
                .collect::<Vec<_>>()
        };
        let ra = encode(&a);
        let rb = encode(&b);
        for t in 0..4 {
            assert_eq!(ra[t], rb[t], "prefix rows agree");
        }
        assert_ne!(ra[4], rb[4], "first changed position diverges");
        assert_ne!(ra[5], rb[5], "recurrence carries the change forward");
    }

    #[test]
    fn encode_video_single_frame_and_zero_case() {
        let mut model = tiny_model();
        let frames = vec![vec![0.1; 32]];
        let mut tape = Tape::new();
        let enc = encode_video(&mut tape, &model, &frames, 1).unwrap();
        assert_eq!(enc.len(), 1);
        assert!(enc.mask[0]);

        // zero weights + zero features => zero rows
        zero_weights(
            &mut model,
            &[
                "enc.video.proj.w",
                "enc.video.proj.b",
                "enc.video.w_i",
                "enc.video.w_h",
                "enc.video.b",
            ],
        );
        let zf = vec![vec![0.0; 32], vec![0.0; 32]];
        let mut tape = Tape::new();
        let enc = encode_video(&mut tape, &model, &zf, 2).unwrap();
        for &r in &enc.rows {
            assert!(tape.value(r).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encode_video_dimension_mismatch_is_error() {
        let model = tiny_model();
        let frames = vec![vec![0.0; 7]];
        let mut tape = Tape::new();
        assert!(encode_video(&mut tape, &model, &frames, 1).is_err());
    }

    #[test]
    fn padded_rows_are_masked_zeros() {
        let model = tiny_model();
        let mut frames = vec![vec![0.3; 32]; 2];
        frames.push(vec![0.0; 32]);
        let mut tape = Tape::new();
        let enc = encode_video(&mut tape, &model, &frames, 2).unwrap();
        assert_eq!(enc.mask, vec![true, true, false]);
        assert!(tape.value(enc.rows[2]).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sentence_semantics_is_per_position() {
        let model = tiny_model();
        let a = ws(&["dog", "ball"]);
        let b = ws(&["ball", "dog"]);
        let encode = |words: &[String]| {
            let mut tape = Tape::new();
            let enc = encode_sentence_semantics(&mut tape, &model, words).unwrap();
            enc.rows
                .iter()
                .map(|&r| tape.value(r).data().to_vec())
                .collect::<Vec<_>>()
        };
        let ra = encode(&a);
        let rb = encode(&b);
        assert_eq!(ra[0], rb[1]);
        assert_eq!(ra[1], rb[0]);
    }

    #[test]
    fn sentence_semantics_zero_weights_gives_tanh_bias() {
        let mut model = tiny_model();
        zero_weights(&mut model, &["enc.sent.fc.w"]);
        {
            let t = model.params.tensor_mut("enc.sent.fc.b").unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = 0.25);
        }
        let mut tape = Tape::new();
        let enc =
            encode_sentence_semantics(&mut tape, &model, &ws(&["dog", "ball", "kite"])).unwrap();
        let expect = 0.25f64.tanh();
        for &r in &enc.rows {
            for &v in tape.value(r).data() {
                assert!((v - expect).abs() < 1e-15);
            }
        }
    }
}
