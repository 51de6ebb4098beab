//! Conditional Layer Normalization and the CLN-modulated LSTM layer.
//!
//! CLN(x | a) = f_gamma(a) * (x - mu(x)) / sigma(x) + f_beta(a), where
//! f_gamma and f_beta are independent one-hidden-layer tanh MLPs of the
//! conditioning signal. At initialization the MLP output layers are zero
//! with gamma bias 1 and beta bias 0, so CLN starts as plain layer norm.

use crate::error::Result;
use crate::model::Model;
use crate::numcore::{Tape, Value, LAYER_NORM_EPS};

/// One conditioning MLP: w2 . tanh(w1 . a + b1) + b2.
pub struct ConditionerMlp {
    w1: Value,
    b1: Value,
    w2: Value,
    b2: Value,
}

impl ConditionerMlp {
    pub fn register(tape: &mut Tape, model: &Model, prefix: &str) -> Result<Self> {
        Ok(ConditionerMlp {
            w1: tape.param(&model.params, &format!("{prefix}.w1"))?,
            b1: tape.param(&model.params, &format!("{prefix}.b1"))?,
            w2: tape.param(&model.params, &format!("{prefix}.w2"))?,
            b2: tape.param(&model.params, &format!("{prefix}.b2"))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, a: Value) -> Result<Value> {
        let z = tape.matvec(self.w1, a)?;
        let zb = tape.add(z, self.b1)?;
        let t = tape.tanh(zb)?;
        let o = tape.matvec(self.w2, t)?;
        tape.add(o, self.b2)
    }
}

/// A CLN site: the gamma and beta conditioners for one normalized vector.
pub struct ClnConditioner {
    gamma: ConditionerMlp,
    beta: ConditionerMlp,
}

impl ClnConditioner {
    pub fn register(tape: &mut Tape, model: &Model, prefix: &str) -> Result<Self> {
        Ok(ClnConditioner {
            gamma: ConditionerMlp::register(tape, model, &format!("{prefix}.gamma"))?,
            beta: ConditionerMlp::register(tape, model, &format!("{prefix}.beta"))?,
        })
    }

    /// CLN(x | a).
    pub fn apply(&self, tape: &mut Tape, x: Value, a: Value) -> Result<Value> {
        let (normed, _, _) = tape.layer_norm(x, LAYER_NORM_EPS)?;
        let g = self.gamma.apply(tape, a)?;
        let b = self.beta.apply(tape, a)?;
        let scaled = tape.mul(g, normed)?;
        tape.add(scaled, b)
    }
}

/// Free-standing CLN over explicitly provided conditioners.
pub fn cln(tape: &mut Tape, x: Value, a: Value, cond: &ClnConditioner) -> Result<Value> {
    cond.apply(tape, x, a)
}

/// The CLN-modulated LSTM layer: three independent CLNs modulate the
/// recurrent term, the input term, and the cell state.
pub struct ClnLstmLayer {
    w_i: Value,
    w_h: Value,
    b: Value,
    cln_h: ClnConditioner,
    cln_x: ClnConditioner,
    cln_c: ClnConditioner,
    hidden: usize,
}

impl ClnLstmLayer {
    /// `prefix` names the LSTM weights (e.g. `dec.syn`); the conditioners
    /// live under `dec.cln.<cln_name>.{h,x,c}`.
    pub fn register(tape: &mut Tape, model: &Model, prefix: &str, cln_name: &str) -> Result<Self> {
        Ok(ClnLstmLayer {
            w_i: tape.param(&model.params, &format!("{prefix}.w_i"))?,
            w_h: tape.param(&model.params, &format!("{prefix}.w_h"))?,
            b: tape.param(&model.params, &format!("{prefix}.b"))?,
            cln_h: ClnConditioner::register(tape, model, &format!("dec.cln.{cln_name}.h"))?,
            cln_x: ClnConditioner::register(tape, model, &format!("dec.cln.{cln_name}.x"))?,
            cln_c: ClnConditioner::register(tape, model, &format!("dec.cln.{cln_name}.c"))?,
            hidden: model.dims.hidden,
        })
    }

    /// gates = CLN(W_h h | a) + CLN(W_i x | a) + b, split (f, i, o, g);
    /// c = sigma(f).c_prev + sigma(i).tanh(g); h = sigma(o).tanh(CLN(c | a)).
    pub fn step(
        &self,
        tape: &mut Tape,
        x: Value,
        h_prev: Value,
        c_prev: Value,
        cond_signal: Value,
    ) -> Result<(Value, Value)> {
        let zh = tape.matvec(self.w_h, h_prev)?;
        let zx = tape.matvec(self.w_i, x)?;
        let mh = self.cln_h.apply(tape, zh, cond_signal)?;
        let mx = self.cln_x.apply(tape, zx, cond_signal)?;
        let gates = tape.add_n(&[mh, mx, self.b])?;

        let hidden = self.hidden;
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
        let cn = self.cln_c.apply(tape, c, cond_signal)?;
        let ct = tape.tanh(cn)?;
        let h = tape.mul(os, ct)?;
        Ok((h, c))
    }
}
