//! The two-layer syntax-then-semantics decoder: layer 1 consumes the
//! previous word embedding and the attentively summarized syntax
//! representation (which also conditions its CLNs); layer 2 consumes layer
//! 1's output and the attentively summarized video representation under the
//! same conditioning scheme, and feeds the word output head.

use crate::decoder::attention::{AdditiveAttention, AttentionKeys};
use crate::decoder::cln::ClnLstmLayer;
use crate::encoders::EncodedSeq;
use crate::error::Result;
use crate::model::Model;
use crate::numcore::{Tape, Tensor, Value};

pub struct Decoder {
    layer_syn: ClnLstmLayer,
    layer_sem: ClnLstmLayer,
    att_syn: AdditiveAttention,
    att_vid: AdditiveAttention,
    embed: Value,
    out_w: Value,
    out_b: Value,
    hidden: usize,
}

#[derive(Clone, Copy)]
pub struct DecoderState {
    pub h_syn: Value,
    pub c_syn: Value,
    pub h_sem: Value,
    pub c_sem: Value,
}

/// Everything one decode step produces.
pub struct StepOutput {
    pub logits: Value,
    pub state: DecoderState,
    /// Attention over the exemplar syntax rows (padded positions zero).
    pub syn_weights: Vec<f64>,
    /// Attention over the semantic rows.
    pub vid_weights: Vec<f64>,
    /// Layer-1 hidden state, collected into H_syn for the syntax head.
    pub h_syn: Value,
}

impl Decoder {
    pub fn register(tape: &mut Tape, model: &Model) -> Result<Self> {
        Ok(Decoder {
            layer_syn: ClnLstmLayer::register(tape, model, "dec.syn", "syn")?,
            layer_sem: ClnLstmLayer::register(tape, model, "dec.sem", "sem")?,
            att_syn: AdditiveAttention::register(tape, model, "dec.att.syn")?,
            att_vid: AdditiveAttention::register(tape, model, "dec.att.vid")?,
            embed: tape.param(&model.params, "dec.syn.embed")?,
            out_w: tape.param(&model.params, "dec.out.w")?,
            out_b: tape.param(&model.params, "dec.out.b")?,
            hidden: model.dims.hidden,
        })
    }

    pub fn prepare_syntax(&self, tape: &mut Tape, enc: &EncodedSeq) -> Result<AttentionKeys> {
        self.att_syn.prepare(tape, enc)
    }

    pub fn prepare_semantic(&self, tape: &mut Tape, enc: &EncodedSeq) -> Result<AttentionKeys> {
        self.att_vid.prepare(tape, enc)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Result<DecoderState> {
        let z = tape.constant(Tensor::zeros(vec![self.hidden]))?;
        Ok(DecoderState {
            h_syn: z,
            c_syn: z,
            h_sem: z,
            c_sem: z,
        })
    }

    /// One decode step from the previous word id.
    pub fn step(
        &self,
        tape: &mut Tape,
        prev_word: usize,
        state: &DecoderState,
        syn_keys: &AttentionKeys,
        sem_keys: &AttentionKeys,
    ) -> Result<StepOutput> {
        let e_prev = tape.select_row(self.embed, prev_word)?;

        // layer 1: x = [e_prev, a_s], conditioned on a_s
        let (a_s, syn_weights) = self.att_syn.attend(tape, syn_keys, state.h_syn)?;
        let x1 = tape.concat(&[e_prev, a_s])?;
        let (h1, c1) = self
            .layer_syn
            .step(tape, x1, state.h_syn, state.c_syn, a_s)?;

        // layer 2: x = [h1, a_v], conditioned on a_v
        let (a_v, vid_weights) = self.att_vid.attend(tape, sem_keys, state.h_sem)?;
        let x2 = tape.concat(&[h1, a_v])?;
        let (h2, c2) = self
            .layer_sem
            .step(tape, x2, state.h_sem, state.c_sem, a_v)?;

        let z = tape.matvec(self.out_w, h2)?;
        let logits = tape.add(z, self.out_b)?;

        Ok(StepOutput {
            logits,
            state: DecoderState {
                h_syn: h1,
                c_syn: c1,
                h_sem: h2,
                c_sem: c2,
            },
            syn_weights,
            vid_weights,
            h_syn: h1,
        })
    }
}
