use super::TrainError;
use crate::model::{ForwardTrace, ForwardVars};
use crate::tensor::{Tape, TensorError, Var};

/// `-ln p(y) + (alpha / S) * sum(kl)` from plain trace values.
pub fn loss(trace: &ForwardTrace, label: bool, alpha: f64, fused_layers: usize) -> Result<f64, TrainError> {
    if !(trace.score > 0.0 && trace.score < 1.0) {
        return Err(TrainError::ScoreOutOfRange(trace.score));
    }
    if trace.kl_terms.len() != fused_layers {
        return Err(TrainError::KlCount {
            expected: fused_layers,
            got: trace.kl_terms.len(),
        });
    }
    let p = if label { trace.score } else { 1.0 - trace.score };
    let kl: f64 = trace.kl_terms.iter().sum();
    Ok(-p.ln() + alpha / fused_layers as f64 * kl)
}

/// The same objective on the tape. The likelihood term is a softplus of the
/// logit difference, which stays finite where `ln p` would underflow.
pub fn loss_var(tape: &mut Tape, vars: &ForwardVars, label: bool, alpha: f64) -> Result<(Var, Var), TensorError> {
    let nll = vars.nll(tape, label)?;
    if alpha == 0.0 || vars.kl.is_empty() {
        return Ok((nll, nll));
    }
    let mut kl = vars.kl[0];
    for k in &vars.kl[1..] {
        kl = tape.add(kl, *k)?;
    }
    let penalty = tape.scale(kl, alpha / vars.kl.len() as f64)?;
    Ok((tape.add(nll, penalty)?, nll))
}
