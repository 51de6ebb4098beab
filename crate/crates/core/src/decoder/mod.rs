//! The syntax conditioned caption decoder: CLN, the CLN-modulated LSTM,
//! additive attention, the two-layer decode step, the syntax-token head,
//! and greedy/beam search.

mod attention;
mod cln;
mod search;
mod step;
mod synhead;

pub use attention::{AdditiveAttention, AttentionKeys};
pub use cln::{cln, ClnConditioner, ClnLstmLayer, ConditionerMlp};
pub use search::{
    generate, DecodeOptions, GenerationResult, SemanticSource, SyntaxSource,
};
pub use step::{Decoder, DecoderState, StepOutput};
pub use synhead::{argmax, SyntaxHead};

pub(crate) use search::step_maybe_syntax;
