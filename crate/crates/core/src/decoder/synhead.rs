//! The syntax-token prediction head: a single-layer attention LSTM over the
//! collected layer-1 hidden states, predicting the bracketed syntactic token
//! sequence of the sentence being imitated.

use crate::corpus::{BOS, EOS};
use crate::decoder::attention::AdditiveAttention;
use crate::encoders::{EncodedSeq, LstmCell};
use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::numcore::{Tape, Tensor, Value};

pub struct SyntaxHead {
    cell: LstmCell,
    att: AdditiveAttention,
    embed: Value,
    out_w: Value,
    out_b: Value,
    hidden: usize,
}

impl SyntaxHead {
    pub fn register(tape: &mut Tape, model: &Model) -> Result<Self> {
        Ok(SyntaxHead {
            cell: LstmCell::register(tape, model, "dec.synhead")?,
            att: AdditiveAttention::register(tape, model, "dec.synhead.att")?,
            embed: tape.param(&model.params, "dec.synhead.embed")?,
            out_w: tape.param(&model.params, "dec.synhead.out.w")?,
            out_b: tape.param(&model.params, "dec.synhead.out.b")?,
            hidden: model.dims.hidden,
        })
    }

    fn step(
        &self,
        tape: &mut Tape,
        prev_token: usize,
        h: Value,
        c: Value,
        keys: &crate::decoder::attention::AttentionKeys,
    ) -> Result<(Value, Value, Value)> {
        let e = tape.select_row(self.embed, prev_token)?;
        let (ctx, _) = self.att.attend(tape, keys, h)?;
        let x = tape.concat(&[e, ctx])?;
        let (nh, nc) = self.cell.step(tape, x, h, c)?;
        let z = tape.matvec(self.out_w, nh)?;
        let logits = tape.add(z, self.out_b)?;
        Ok((logits, nh, nc))
    }

    /// Mean NLL of the target syntax-token sequence under teacher forcing
    /// (inputs BOS + targets, predictions targets + EOS).
    pub fn teacher_forced_nll(
        &self,
        tape: &mut Tape,
        h_syn: &EncodedSeq,
        target_tokens: &[usize],
    ) -> Result<Value> {
        if h_syn.is_empty() {
            return Err(CoreError::dim("syntax head over empty H_syn"));
        }
        let keys = self.att.prepare(tape, h_syn)?;
        let mut h = tape.constant(Tensor::zeros(vec![self.hidden]))?;
        let mut c = tape.constant(Tensor::zeros(vec![self.hidden]))?;
        let mut prev = BOS;
        let mut losses = Vec::with_capacity(target_tokens.len() + 1);
        for &target in target_tokens.iter().chain(std::iter::once(&EOS)) {
            let (logits, nh, nc) = self.step(tape, prev, h, c, &keys)?;
            losses.push(tape.cross_entropy(logits, target)?);
            h = nh;
            c = nc;
            prev = target;
        }
        let total = tape.add_n(&losses)?;
        tape.scale(total, 1.0 / losses.len() as f64)
    }

    /// Greedy decode for diagnostics, capped at `max_len` tokens.
    pub fn greedy(&self, tape: &mut Tape, h_syn: &EncodedSeq, max_len: usize) -> Result<Vec<usize>> {
        let keys = self.att.prepare(tape, h_syn)?;
        let mut h = tape.constant(Tensor::zeros(vec![self.hidden]))?;
        let mut c = tape.constant(Tensor::zeros(vec![self.hidden]))?;
        let mut prev = BOS;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (logits, nh, nc) = self.step(tape, prev, h, c, &keys)?;
            let next = argmax(tape.value(logits).data());
            if next == EOS {
                break;
            }
            out.push(next);
            h = nh;
            c = nc;
            prev = next;
        }
        Ok(out)
    }
}

/// Index of the largest value (first one wins ties).
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
