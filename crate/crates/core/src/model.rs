//! The full parameter set: naming, initialization, and checkpoint glue.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbedTable, Sample, Vocab};
use crate::error::{CoreError, Result};
use crate::numcore::{checkpoint, ParamStore, Tensor};

/// Character alphabet for the character-level encoder: lowercase letters,
/// digits, hyphen, apostrophe, and a trailing UNK slot.
pub const CHAR_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789-'";

pub fn char_index(c: char) -> usize {
    CHAR_ALPHABET.find(c).unwrap_or(CHAR_ALPHABET.len())
}

pub fn char_alphabet_size() -> usize {
    CHAR_ALPHABET.len() + 1
}

/// Model dimensions. The defaults follow the reference configuration
/// (hidden and word-embedding size 256, character embedding 32).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelDims {
    pub hidden: usize,
    pub word_embed: usize,
    pub char_embed: usize,
    pub synhead_embed: usize,
    pub max_word_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            hidden: 256,
            word_embed: 256,
            char_embed: 32,
            synhead_embed: 64,
            max_word_len: 24,
        }
    }
}

/// Vocabulary over syntax tokens: `(`, `)`, and category labels, with the
/// same reserved slots as the word vocabulary.
#[derive(Debug, Clone)]
pub struct SyntaxVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl SyntaxVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().cloned().zip(0..).collect();
        SyntaxVocab { tokens, index }
    }

    /// Collect `(`, `)`, and every label appearing in the corpus parses.
    pub fn build(samples: &[Sample]) -> Self {
        let mut tokens: Vec<String> = crate::corpus::RESERVED
            .iter()
            .map(|s| s.to_string())
            .collect();
        tokens.push("(".to_string());
        tokens.push(")".to_string());
        let mut seen: HashMap<String, ()> = tokens.iter().cloned().map(|t| (t, ())).collect();
        let mut add_tree = |toks: &mut Vec<String>,
                            seen: &mut HashMap<String, ()>,
                            t: &crate::syntree::ParseTree| {
            for tok in t.syntax_tokens().0 {
                if !seen.contains_key(&tok) {
                    seen.insert(tok.clone(), ());
                    toks.push(tok);
                }
            }
        };
        for s in samples {
            add_tree(&mut tokens, &mut seen, &s.caption_parse);
            for e in &s.exemplars {
                add_tree(&mut tokens, &mut seen, &e.parse);
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn id(&self, tok: &str) -> usize {
        self.index
            .get(tok)
            .copied()
            .unwrap_or(crate::corpus::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Everything needed to run the model: parameters plus the vocabularies and
/// dimensions they were built for.
pub struct Model {
    pub dims: ModelDims,
    pub params: ParamStore,
    pub vocab: Vocab,
    pub syntax_vocab: SyntaxVocab,
    pub feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    dims: ModelDims,
    feature_dim: usize,
    words: Vec<String>,
    pos_lexicon: std::collections::BTreeMap<String, Vec<String>>,
    syntax_tokens: Vec<String>,
}

impl Model {
    /// Initialize parameters. Weight matrices draw uniform(-k, k) with
    /// k = 1/sqrt(fan_in); biases start at zero. Conditioner output layers
    /// start at zero weights with gamma bias 1 and beta bias 0, so every CLN
    /// begins as a plain layer norm.
    pub fn init(
        dims: ModelDims,
        vocab: Vocab,
        syntax_vocab: SyntaxVocab,
        feature_dim: usize,
        table: &EmbedTable,
        seed: u64,
    ) -> Result<Model> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(0x1217);
        let mut p = ParamStore::new();
        let h = dims.hidden;
        let vw = vocab.len();
        let vs = syntax_vocab.len();

        let mut mat = |p: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha20Rng| -> Result<()> {
            let k = 1.0 / (cols as f64).sqrt();
            p.insert_uniform(name, vec![rows, cols], k, rng)
        };
        let mut emb = |p: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha20Rng| -> Result<()> {
            p.insert_uniform(name, vec![rows, cols], 0.1, rng)
        };
        let vecu = |p: &mut ParamStore, name: &str, len: usize, bound: f64, rng: &mut ChaCha20Rng| -> Result<()> {
            p.insert_uniform(name, vec![len], bound, rng)
        };

        // hierarchical syntax encoder
        emb(&mut p, "enc.char.embed", char_alphabet_size(), dims.char_embed, &mut rng)?;
        mat(&mut p, "enc.char.w_i", 4 * h, dims.char_embed, &mut rng)?;
        mat(&mut p, "enc.char.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("enc.char.b", vec![4 * h])?;
        mat(&mut p, "enc.word.w_i", 4 * h, h, &mut rng)?;
        mat(&mut p, "enc.word.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("enc.word.b", vec![4 * h])?;

        // video semantic encoder
        mat(&mut p, "enc.video.proj.w", h, feature_dim, &mut rng)?;
        p.insert_zeros("enc.video.proj.b", vec![h])?;
        mat(&mut p, "enc.video.w_i", 4 * h, h, &mut rng)?;
        mat(&mut p, "enc.video.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("enc.video.b", vec![4 * h])?;

        // sentence semantic encoder
        mat(&mut p, "enc.sent.fc.w", h, table.dim(), &mut rng)?;
        p.insert_zeros("enc.sent.fc.b", vec![h])?;

        // two-layer syntax conditioned decoder
        emb(&mut p, "dec.syn.embed", vw, dims.word_embed, &mut rng)?;
        mat(&mut p, "dec.syn.w_i", 4 * h, dims.word_embed + h, &mut rng)?;
        mat(&mut p, "dec.syn.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("dec.syn.b", vec![4 * h])?;
        mat(&mut p, "dec.sem.w_i", 4 * h, h + h, &mut rng)?;
        mat(&mut p, "dec.sem.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("dec.sem.b", vec![4 * h])?;

        // three independent CLNs per layer; gamma/beta MLPs share no weights
        for layer in ["syn", "sem"] {
            for (site, out) in [("h", 4 * h), ("x", 4 * h), ("c", h)] {
                for which in ["gamma", "beta"] {
                    let base = format!("dec.cln.{layer}.{site}.{which}");
                    mat(&mut p, &format!("{base}.w1"), h, h, &mut rng)?;
                    p.insert_zeros(&format!("{base}.b1"), vec![h])?;
                    p.insert_zeros(&format!("{base}.w2"), vec![out, h])?;
                    let bias = if which == "gamma" {
                        Tensor::new(vec![out], vec![1.0; out])?
                    } else {
                        Tensor::zeros(vec![out])
                    };
                    p.insert(&format!("{base}.b2"), bias)?;
                }
            }
        }

        // additive attentions
        for att in ["dec.att.syn", "dec.att.vid", "dec.synhead.att"] {
            mat(&mut p, &format!("{att}.wq"), h, h, &mut rng)?;
            mat(&mut p, &format!("{att}.wk"), h, h, &mut rng)?;
            vecu(&mut p, &format!("{att}.v"), h, 1.0 / (h as f64).sqrt(), &mut rng)?;
        }

        // syntax-token prediction head
        emb(&mut p, "dec.synhead.embed", vs, dims.synhead_embed, &mut rng)?;
        mat(&mut p, "dec.synhead.w_i", 4 * h, dims.synhead_embed + h, &mut rng)?;
        mat(&mut p, "dec.synhead.w_h", 4 * h, h, &mut rng)?;
        p.insert_zeros("dec.synhead.b", vec![4 * h])?;
        mat(&mut p, "dec.synhead.out.w", vs, h, &mut rng)?;
        p.insert_zeros("dec.synhead.out.b", vec![vs])?;

        // word output head (no weight tying with dec.syn.embed)
        mat(&mut p, "dec.out.w", vw, h, &mut rng)?;
        p.insert_zeros("dec.out.b", vec![vw])?;

        // frozen embedding table, rows aligned to vocab ids (zero when absent)
        let mut rows = vec![0.0; vw * table.dim()];
        for (i, w) in vocab.words().iter().enumerate() {
            if let Some(r) = table.get(w) {
                rows[i * table.dim()..(i + 1) * table.dim()].copy_from_slice(r);
            }
        }
        p.insert_frozen("emb.table", Tensor::matrix(vw, table.dim(), rows)?)?;

        Ok(Model {
            dims,
            params: p,
            vocab,
            syntax_vocab,
            feature_dim,
        })
    }

    pub fn embed_table_dim(&self) -> usize {
        self.params
            .tensor("emb.table")
            .map(|t| t.cols())
            .unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = ModelMeta {
            dims: self.dims.clone(),
            feature_dim: self.feature_dim,
            words: self.vocab.words().to_vec(),
            pos_lexicon: self.vocab.pos_lexicon().clone(),
            syntax_tokens: self.syntax_vocab.tokens().to_vec(),
        };
        let meta = serde_json::to_value(&meta)
            .map_err(|e| CoreError::data(format!("model meta encode: {e}")))?;
        checkpoint::save(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Model> {
        let (params, meta) = checkpoint::load(path)?;
        let meta: ModelMeta = serde_json::from_value(meta)
            .map_err(|e| CoreError::data(format!("model meta decode: {e}")))?;
        let vocab = Vocab::from_parts(meta.words, meta.pos_lexicon);
        let syntax_vocab = SyntaxVocab::from_tokens(meta.syntax_tokens);
        Ok(Model {
            dims: meta.dims,
            params,
            vocab,
            syntax_vocab,
            feature_dim: meta.feature_dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{generate_toy_corpus, ToyConfig};
    use crate::corpus::vocab_from_samples;

    fn tiny_model() -> Model {
        let cfg = ToyConfig {
            n_samples: 4,
            exemplars_per_sample: 2,
            ..Default::default()
        };
        let samples = generate_toy_corpus(&cfg).unwrap();
        let vocab = vocab_from_samples(&samples);
        let table = EmbedTable::random(vocab.words(), 16, 3);
        let sv = SyntaxVocab::build(&samples);
        Model::init(
            ModelDims {
                hidden: 12,
                word_embed: 10,
                char_embed: 6,
                synhead_embed: 8,
                max_word_len: 24,
            },
            vocab,
            sv,
            32,
            &table,
            7,
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_complete() {
        let a = tiny_model();
        let b = tiny_model();
        for name in a.params.names() {
            assert_eq!(
                a.params.tensor(name).unwrap(),
                b.params.tensor(name).unwrap(),
                "{name}"
            );
        }
        for prefix in [
            "enc.char.", "enc.word.", "enc.video.", "enc.sent.", "dec.syn.", "dec.sem.",
            "dec.cln.", "dec.att.", "dec.synhead.", "dec.out.",
        ] {
            assert!(
                a.params.names().any(|n| n.starts_with(prefix)),
                "missing family {prefix}"
            );
        }
    }

    #[test]
    fn conditioner_outputs_start_as_identity() {
        let m = tiny_model();
        let w2 = m.params.tensor("dec.cln.syn.h.gamma.w2").unwrap();
        assert!(w2.data().iter().all(|&v| v == 0.0));
        let b2 = m.params.tensor("dec.cln.syn.h.gamma.b2").unwrap();
        assert!(b2.data().iter().all(|&v| v == 1.0));
        let bb2 = m.params.tensor("dec.cln.syn.h.beta.b2").unwrap();
        assert!(bb2.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_round_trip() {
        let m = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.scvc");
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.dims, m.dims);
        assert_eq!(back.vocab.words(), m.vocab.words());
        assert_eq!(back.syntax_vocab.tokens(), m.syntax_vocab.tokens());
        for name in m.params.names() {
            assert_eq!(
                back.params.tensor(name).unwrap(),
                m.params.tensor(name).unwrap()
            );
        }
        assert!(!back.params.is_trainable("emb.table"));
    }

    #[test]
    fn char_alphabet_covers_expected() {
        assert_eq!(char_index('a'), 0);
        assert_eq!(char_index('\''), CHAR_ALPHABET.len() - 1);
        assert_eq!(char_index('Z'), CHAR_ALPHABET.len()); // UNK
    }
}
