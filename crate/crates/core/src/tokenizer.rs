//! Character vocabularies and fixed-length token sequences.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

/// Rendered in place of unknown ids so broken generations stay visibly broken.
pub const UNK_CHAR: char = '\u{FFFD}';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("text of {len} characters does not fit max_len {max_len} (one slot is reserved for EOS)")]
    TooLong { len: usize, max_len: usize },
    #[error("token id {0} is outside the vocabulary")]
    BadIndex(u32),
}

/// Bijective character <-> id map. Ids 0..4 are PAD, SOS, EOS, UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, u32>,
}

impl Vocabulary {
    /// Every distinct character of `texts`, ordered by code point.
    pub fn build<S: AsRef<str>>(texts: &[S]) -> Self {
        let chars: BTreeSet<char> = texts.iter().flat_map(|t| t.as_ref().chars()).collect();
        Self::from_symbols(chars.into_iter().collect())
    }

    /// Restores a vocabulary from its non-special symbols, in id order.
    pub fn from_symbols(symbols: Vec<char>) -> Self {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, (i + NUM_SPECIALS) as u32))
            .collect();
        Self { symbols, index }
    }

    /// Non-special symbols in id order.
    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Total size including the four specials.
    pub fn len(&self) -> usize {
        self.symbols.len() + NUM_SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Symbol for a non-special id.
    pub fn symbol(&self, id: u32) -> Option<char> {
        (id as usize).checked_sub(NUM_SPECIALS).and_then(|i| self.symbols.get(i).copied())
    }

    /// Per-character ids followed by EOS.
    pub fn encode(&self, text: &str, max_len: usize) -> Result<TokenSequence, TokenizeError> {
        assert!(max_len >= 2, "max_len must leave room for one symbol and EOS");
        let len = text.chars().count();
        if len > max_len - 1 {
            return Err(TokenizeError::TooLong { len, max_len });
        }
        let mut ids: Vec<u32> = text.chars().map(|c| self.id(c)).collect();
        ids.push(EOS);
        Ok(TokenSequence(ids))
    }

    /// Concatenates symbols up to the first EOS. PAD and SOS render as
    /// nothing, UNK as U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizeError> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            match id {
                EOS => break,
                PAD | SOS => {}
                UNK => out.push(UNK_CHAR),
                _ => out.push(self.symbol(id).ok_or(TokenizeError::BadIndex(id))?),
            }
        }
        Ok(out)
    }
}

/// Token ids of one encoded text, EOS-terminated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Source and target vocabularies of one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub source: Vocabulary,
    pub target: Vocabulary,
}

impl Vocabs {
    pub fn build(pairs: &[crate::corpus::TrainingPair]) -> Self {
        let sources: Vec<&str> = pairs.iter().map(|p| p.source.as_str()).collect();
        let targets: Vec<&str> = pairs.iter().map(|p| p.target.as_str()).collect();
        Self {
            source: Vocabulary::build(&sources),
            target: Vocabulary::build(&targets),
        }
    }
}
