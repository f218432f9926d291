use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const INTERACTION: &str = "<int>";
pub const TRUE: &str = "<true>";
pub const FALSE: &str = "<false>";
pub const START: &str = "<start>";
pub const QUERY_MARK: &str = "query:";
pub const DOC_MARK: &str = "document:";
pub const RELEVANT_MARK: &str = "relevant:";

/// Reserved tokens, in id order. None of them can come out of `tokenize`.
pub const RESERVED: [&str; 9] = [
    PAD,
    UNK,
    INTERACTION,
    TRUE,
    FALSE,
    START,
    QUERY_MARK,
    DOC_MARK,
    RELEVANT_MARK,
];

/// Word-level vocabulary: reserved tokens, then corpus words sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !RESERVED.contains(&w.as_str())))
            .collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk())
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn unk(&self) -> usize {
        1
    }

    /// True when the reserved block is intact, e.g. after loading a checkpoint.
    pub fn is_well_formed(&self) -> bool {
        self.tokens.len() >= RESERVED.len()
            && RESERVED.iter().zip(&self.tokens).all(|(r, t)| r == t)
            && self.index.len() == self.tokens.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed_and_unknowns_map_to_unk() {
        let v = Vocab::build(["Beta alpha", "alpha"]);
        assert_eq!(v.len(), RESERVED.len() + 2);
        assert_eq!(v.id(INTERACTION), 2);
        assert_eq!(v.id("alpha"), RESERVED.len());
        assert_eq!(v.id("nope"), v.id(UNK));
        assert!(v.is_well_formed());
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }
}
