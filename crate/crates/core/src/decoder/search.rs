//! Greedy and beam-search caption generation.
//!
//! Hypotheses are pruned per step by cumulative log-probability; the
//! finished candidate set always includes the pure greedy rollout, and the
//! winner is chosen by length-normalized score, so beam search never
//! returns anything the scorer ranks below greedy.

use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS};
use crate::decoder::attention::AttentionKeys;
use crate::decoder::step::{Decoder, DecoderState};
use crate::decoder::synhead::{argmax, SyntaxHead};
use crate::encoders::{
    encode_sentence_semantics, encode_syntax, encode_video, EncodedSeq, ReplacePolicy,
};
use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::numcore::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct DecodeOptions {
    pub beam_size: usize,
    pub max_len: usize,
    /// Length-normalization exponent for hypothesis selection.
    pub length_norm: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam_size: 1,
            max_len: 30,
            length_norm: 0.7,
        }
    }
}

/// What conditions the syntax pathway.
pub enum SyntaxSource<'a> {
    Exemplar {
        words: &'a [String],
        pos: &'a [String],
        /// Replacement is only applied when a policy is passed (training-time
        /// diagnostics); inference passes None.
        replace: Option<ReplacePolicy>,
    },
    /// Zero syntax context and zero conditioning signal everywhere (the
    /// sequence-to-sequence baseline).
    Disabled,
}

/// What conditions the semantic pathway.
pub enum SemanticSource<'a> {
    Video {
        features: &'a [Vec<f64>],
        valid_frames: usize,
    },
    Sentence(&'a [String]),
}

/// A generated caption with its per-step diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResult {
    pub tokens: Vec<String>,
    pub token_ids: Vec<usize>,
    /// Log-probability of each emitted token.
    pub logprobs: Vec<f64>,
    /// Cumulative log-probability including the terminating EOS when present.
    pub total_logprob: f64,
    /// Length-normalized selection score.
    pub score: f64,
    /// Per-step attention over the exemplar word positions (empty rows when
    /// the syntax path is disabled).
    pub syntax_attention: Vec<Vec<f64>>,
    /// Per-step attention over the semantic rows.
    pub semantic_attention: Vec<Vec<f64>>,
    /// Greedy output of the syntax head, for diagnostics.
    pub predicted_syntax_tokens: Vec<String>,
}

struct Hypothesis {
    state: DecoderState,
    prev: usize,
    tokens: Vec<usize>,
    logprobs: Vec<f64>,
    cum: f64,
    syn_att: Vec<Vec<f64>>,
    sem_att: Vec<Vec<f64>>,
    h_syn_rows: Vec<crate::numcore::Value>,
    finished: bool,
}

impl Hypothesis {
    fn fresh(state: DecoderState) -> Self {
        Hypothesis {
            state,
            prev: BOS,
            tokens: Vec::new(),
            logprobs: Vec::new(),
            cum: 0.0,
            syn_att: Vec::new(),
            sem_att: Vec::new(),
            h_syn_rows: Vec::new(),
            finished: false,
        }
    }

    fn score(&self, length_norm: f64) -> f64 {
        self.cum / (self.tokens.len().max(1) as f64).powf(length_norm)
    }
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|&x| x - lse).collect()
}

/// Generate one caption. `beam_size` 1 is exactly greedy.
pub fn generate(
    model: &Model,
    syntax: SyntaxSource,
    semantic: SemanticSource,
    opts: &DecodeOptions,
) -> Result<GenerationResult> {
    if opts.beam_size == 0 {
        return Err(CoreError::domain("beam size must be at least 1"));
    }
    let mut tape = Tape::new();
    let decoder = Decoder::register(&mut tape, model)?;
    let synhead = SyntaxHead::register(&mut tape, model)?;

    let syn_keys = match syntax {
        SyntaxSource::Exemplar {
            words,
            pos,
            replace,
        } => {
            let enc = encode_syntax(&mut tape, model, words, pos, replace)?;
            Some(decoder.prepare_syntax(&mut tape, &enc)?)
        }
        SyntaxSource::Disabled => None,
    };
    let sem_enc = match semantic {
        SemanticSource::Video {
            features,
            valid_frames,
        } => encode_video(&mut tape, model, features, valid_frames)?,
        SemanticSource::Sentence(words) => encode_sentence_semantics(&mut tape, model, words)?,
    };
    let sem_keys = decoder.prepare_semantic(&mut tape, &sem_enc)?;

    // The pure greedy rollout is always a candidate.
    let greedy = rollout_greedy(&mut tape, model, &decoder, syn_keys.as_ref(), &sem_keys, opts)?;
    let mut finished: Vec<Hypothesis> = vec![greedy];

    if opts.beam_size > 1 {
        beam_search(
            &mut tape,
            model,
            &decoder,
            syn_keys.as_ref(),
            &sem_keys,
            opts,
            &mut finished,
        )?;
    }

    let best = finished
        .into_iter()
        .max_by(|a, b| {
            a.score(opts.length_norm)
                .partial_cmp(&b.score(opts.length_norm))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least the greedy candidate");

    // Syntax head diagnostics over the winning hypothesis's layer-1 states.
    let predicted_syntax_tokens = if best.h_syn_rows.is_empty() {
        Vec::new()
    } else {
        let h_syn = EncodedSeq::all_valid(best.h_syn_rows.clone());
        let cap = 4 * best.tokens.len().max(1);
        synhead
            .greedy(&mut tape, &h_syn, cap)?
            .into_iter()
            .map(|id| model.syntax_vocab.token(id).to_string())
            .collect()
    };

    Ok(GenerationResult {
        tokens: best
            .tokens
            .iter()
            .map(|&id| model.vocab.word(id).to_string())
            .collect(),
        token_ids: best.tokens.clone(),
        logprobs: best.logprobs.clone(),
        total_logprob: best.cum,
        score: best.score(opts.length_norm),
        syntax_attention: best.syn_att,
        semantic_attention: best.sem_att,
        predicted_syntax_tokens,
    })
}

/// One decode step for a hypothesis; returns the next-token log-probs.
fn advance(
    tape: &mut Tape,
    model: &Model,
    decoder: &Decoder,
    hyp: &Hypothesis,
    syn_keys: Option<&AttentionKeys>,
    sem_keys: &AttentionKeys,
) -> Result<(Vec<f64>, DecoderState, Vec<f64>, Vec<f64>, crate::numcore::Value)> {
    let out = step_maybe_syntax(tape, model, decoder, hyp.prev, &hyp.state, syn_keys, sem_keys)?;
    let logprobs = log_softmax(tape.value(out.logits).data());
    Ok((
        logprobs,
        out.state,
        out.syn_weights,
        out.vid_weights,
        out.h_syn,
    ))
}

/// Decoder step with an optional syntax pathway (None = zero context and
/// zero conditioning, the Seq2Seq baseline).
pub(crate) fn step_maybe_syntax(
    tape: &mut Tape,
    model: &Model,
    decoder: &Decoder,
    prev: usize,
    state: &DecoderState,
    syn_keys: Option<&AttentionKeys>,
    sem_keys: &AttentionKeys,
) -> Result<crate::decoder::step::StepOutput> {
    match syn_keys {
        Some(keys) => decoder.step(tape, prev, state, keys, sem_keys),
        None => {
            let zeros = tape.constant(Tensor::zeros(vec![model.dims.hidden]))?;
            let z_enc = EncodedSeq::all_valid(vec![zeros]);
            let z_keys = decoder.prepare_syntax(tape, &z_enc)?;
            let mut out = decoder.step(tape, prev, state, &z_keys, sem_keys)?;
            out.syn_weights = Vec::new();
            Ok(out)
        }
    }
}

fn rollout_greedy(
    tape: &mut Tape,
    model: &Model,
    decoder: &Decoder,
    syn_keys: Option<&AttentionKeys>,
    sem_keys: &AttentionKeys,
    opts: &DecodeOptions,
) -> Result<Hypothesis> {
    let mut hyp = Hypothesis::fresh(decoder.zero_state(tape)?);
    for _ in 0..opts.max_len {
        let (logprobs, state, syn_w, sem_w, h_syn) =
            advance(tape, model, decoder, &hyp, syn_keys, sem_keys)?;
        let next = argmax(&logprobs);
        hyp.cum += logprobs[next];
        hyp.state = state;
        if next == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(next);
        hyp.logprobs.push(logprobs[next]);
        hyp.syn_att.push(syn_w);
        hyp.sem_att.push(sem_w);
        hyp.h_syn_rows.push(h_syn);
        hyp.prev = next;
    }
    Ok(hyp)
}

fn beam_search(
    tape: &mut Tape,
    model: &Model,
    decoder: &Decoder,
    syn_keys: Option<&AttentionKeys>,
    sem_keys: &AttentionKeys,
    opts: &DecodeOptions,
    finished: &mut Vec<Hypothesis>,
) -> Result<()> {
    let mut beam: Vec<Hypothesis> = vec![Hypothesis::fresh(decoder.zero_state(tape)?)];
    for _ in 0..opts.max_len {
        let mut expansions: Vec<Hypothesis> = Vec::new();
        for hyp in &beam {
            let (logprobs, state, syn_w, sem_w, h_syn) =
                advance(tape, model, decoder, hyp, syn_keys, sem_keys)?;
            // top beam_size continuations, ties broken by token id
            let mut order: Vec<usize> = (0..logprobs.len()).collect();
            order.sort_by(|&a, &b| {
                logprobs[b]
                    .partial_cmp(&logprobs[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &tok in order.iter().take(opts.beam_size) {
                let mut next = Hypothesis {
                    state,
                    prev: tok,
                    tokens: hyp.tokens.clone(),
                    logprobs: hyp.logprobs.clone(),
                    cum: hyp.cum + logprobs[tok],
                    syn_att: hyp.syn_att.clone(),
                    sem_att: hyp.sem_att.clone(),
                    h_syn_rows: hyp.h_syn_rows.clone(),
                    finished: false,
                };
                if tok == EOS {
                    next.finished = true;
                    finished.push(next);
                } else {
                    next.tokens.push(tok);
                    next.logprobs.push(logprobs[tok]);
                    next.syn_att.push(syn_w.clone());
                    next.sem_att.push(sem_w.clone());
                    next.h_syn_rows.push(h_syn);
                    expansions.push(next);
                }
            }
        }
        if expansions.is_empty() {
            return Ok(());
        }
        expansions.sort_by(|a, b| {
            b.cum
                .partial_cmp(&a.cum)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.tokens.cmp(&b.tokens))
        });
        expansions.truncate(opts.beam_size);
        beam = expansions;
    }
    // length cap reached: remaining hypotheses finish without EOS
    finished.extend(beam);
    Ok(())
}
