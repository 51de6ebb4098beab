//! Additive attention: e_i = v . tanh(Wq q + Wk k_i), masked softmax,
//! context = sum of weighted rows. Key projections are computed once per
//! encoded sequence and reused across decode steps.

use crate::encoders::EncodedSeq;
use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::numcore::{Tape, Value};

pub struct AdditiveAttention {
    wq: Value,
    wk: Value,
    v: Value,
}

/// Cached key projections for one encoded sequence on one tape.
pub struct AttentionKeys {
    rows: Vec<Value>,
    projected: Vec<Value>,
    /// Positions of the valid rows in the original sequence.
    positions: Vec<usize>,
    total_len: usize,
}

impl AttentionKeys {
    pub fn total_len(&self) -> usize {
        self.total_len
    }
}

impl AdditiveAttention {
    pub fn register(tape: &mut Tape, model: &Model, prefix: &str) -> Result<Self> {
        Ok(AdditiveAttention {
            wq: tape.param(&model.params, &format!("{prefix}.wq"))?,
            wk: tape.param(&model.params, &format!("{prefix}.wk"))?,
            v: tape.param(&model.params, &format!("{prefix}.v"))?,
        })
    }

    /// Project the valid rows. Errors if every row is masked.
    pub fn prepare(&self, tape: &mut Tape, enc: &EncodedSeq) -> Result<AttentionKeys> {
        let mut rows = Vec::new();
        let mut projected = Vec::new();
        let mut positions = Vec::new();
        for (i, (&row, &ok)) in enc.rows.iter().zip(&enc.mask).enumerate() {
            if !ok {
                continue;
            }
            rows.push(row);
            projected.push(tape.matvec(self.wk, row)?);
            positions.push(i);
        }
        if rows.is_empty() {
            return Err(CoreError::dim("attention over fully masked sequence"));
        }
        Ok(AttentionKeys {
            rows,
            projected,
            positions,
            total_len: enc.rows.len(),
        })
    }

    /// One attention read. Returns the context vector and the weights
    /// spread over the full (padded) sequence length, zeros at masked rows.
    pub fn attend(
        &self,
        tape: &mut Tape,
        keys: &AttentionKeys,
        query: Value,
    ) -> Result<(Value, Vec<f64>)> {
        let q = tape.matvec(self.wq, query)?;
        let mut scores = Vec::with_capacity(keys.rows.len());
        for &k in &keys.projected {
            let s = tape.add(q, k)?;
            let t = tape.tanh(s)?;
            scores.push(tape.dot(self.v, t)?);
        }
        let stacked = tape.concat(&scores)?;
        let weights = tape.softmax(stacked)?;

        let mut ctx: Option<Value> = None;
        for (i, &row) in keys.rows.iter().enumerate() {
            let w = tape.element(weights, i)?;
            let term = tape.scale_by(row, w)?;
            ctx = Some(match ctx {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }

        let mut full = vec![0.0; keys.total_len];
        for (i, &pos) in keys.positions.iter().enumerate() {
            full[pos] = tape.value(weights).data()[i];
        }
        Ok((ctx.expect("at least one valid row"), full))
    }
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
            n_samples: 3,
            exemplars_per_sample: 2,
            ..Default::default()
        };
        let samples = generate_toy_corpus(&cfg).unwrap();
        let vocab = vocab_from_samples(&samples);
        let table = EmbedTable::random(vocab.words(), 8, 3);
        let sv = SyntaxVocab::build(&samples);
        Model::init(
            ModelDims {
                hidden: 6,
                word_embed: 5,
                char_embed: 4,
                synhead_embed: 4,
                max_word_len: 24,
            },
            vocab,
            sv,
            32,
            &table,
            13,
        )
        .unwrap()
    }

    fn rows(tape: &mut Tape, data: &[Vec<f64>]) -> EncodedSeq {
        EncodedSeq::all_valid(
            data.iter()
                .map(|r| tape.constant(Tensor::vector(r.clone())).unwrap())
                .collect(),
        )
    }

    #[test]
    fn single_row_gets_weight_one() {
        let model = tiny_model();
        let mut tape = Tape::new();
        let att = AdditiveAttention::register(&mut tape, &model, "dec.att.syn").unwrap();
        let enc = rows(&mut tape, &[vec![0.3, -0.2, 0.1, 0.5, 0.0, 1.0]]);
        let keys = att.prepare(&mut tape, &enc).unwrap();
        let q = tape.constant(Tensor::vector(vec![0.1; 6])).unwrap();
        let (ctx, w) = att.attend(&mut tape, &keys, q).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(tape.value(ctx).data(), tape.value(enc.rows[0]).data());
    }

    #[test]
    fn zero_projections_give_uniform_weights_and_mean_context() {
        let mut model = tiny_model();
        for n in ["dec.att.syn.wq", "dec.att.syn.wk"] {
            model
                .params
                .tensor_mut(n)
                .unwrap()
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let att = AdditiveAttention::register(&mut tape, &model, "dec.att.syn").unwrap();
        let data = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        ];
        let enc = rows(&mut tape, &data);
        let keys = att.prepare(&mut tape, &enc).unwrap();
        let q = tape.constant(Tensor::vector(vec![0.7; 6])).unwrap();
        let (ctx, w) = att.attend(&mut tape, &keys, q).unwrap();
        for &wi in &w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-12);
        }
        let c = tape.value(ctx).data();
        for i in 0..3 {
            assert!((c[i] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_skip_masked_rows() {
        let model = tiny_model();
        let mut tape = Tape::new();
        let att = AdditiveAttention::register(&mut tape, &model, "dec.att.vid").unwrap();
        let mut enc = rows(
            &mut tape,
            &[vec![0.5; 6], vec![-0.25; 6], vec![0.125; 6], vec![0.0; 6]],
        );
        enc.mask[3] = false;
        let keys = att.prepare(&mut tape, &enc).unwrap();
        let q = tape.constant(Tensor::vector(vec![0.2; 6])).unwrap();
        let (_, w) = att.attend(&mut tape, &keys, q).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[3], 0.0, "masked row got weight");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_masked_is_error() {
        let model = tiny_model();
        let mut tape = Tape::new();
        let att = AdditiveAttention::register(&mut tape, &model, "dec.att.vid").unwrap();
        let mut enc = rows(&mut tape, &[vec![0.5; 6]]);
        enc.mask[0] = false;
        assert!(att.prepare(&mut tape, &enc).is_err());
    }
}
