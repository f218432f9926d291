use super::vocab::{Vocab, DOC_MARK, INTERACTION, QUERY_MARK, RELEVANT_MARK};
use super::ModelError;
use crate::text::tokenize;

/// Marker tokens every prompt carries.
pub const PROMPT_MARKERS: usize = 4;

/// `[<int>, query:, q.., document:, d.., relevant:]`, at most `max_len` long.
///
/// The document is cut first. The query is only cut when it alone overflows.
pub fn build_prompt(query: &str, doc: &str, vocab: &Vocab, max_len: usize) -> Result<Vec<usize>, ModelError> {
    let q = tokenize(query);
    let d = tokenize(doc);
    let needed = PROMPT_MARKERS + usize::from(!q.is_empty());
    if max_len < needed {
        return Err(ModelError::Config(format!(
            "max_len {max_len} cannot hold the prompt markers and one query token"
        )));
    }
    let budget = max_len - PROMPT_MARKERS;
    let q_keep = q.len().min(budget);
    let d_keep = d.len().min(budget - q_keep);

    let mut ids = Vec::with_capacity(PROMPT_MARKERS + q_keep + d_keep);
    ids.push(vocab.id(INTERACTION));
    ids.push(vocab.id(QUERY_MARK));
    ids.extend(q[..q_keep].iter().map(|w| vocab.id(w)));
    ids.push(vocab.id(DOC_MARK));
    ids.extend(d[..d_keep].iter().map(|w| vocab.id(w)));
    ids.push(vocab.id(RELEVANT_MARK));
    Ok(ids)
}
