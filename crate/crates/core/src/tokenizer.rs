//! WordPiece tokenization: vocabulary construction by frequency-driven pair
//! merging, greedy longest-match encoding, and decoding back to text.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

/// The five reserved tokens, in id order.
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Subword continuation marker: a token starting with `##` glues onto the
/// previous token without a space.
pub const CONTINUATION: &str = "##";

/// Words longer than this many characters are mapped straight to `[UNK]`
/// instead of being decomposed.
pub const MAX_WORD_CHARS: usize = 100;

/// An id-addressable subword vocabulary. Ids 0..=4 are always the special
/// tokens; ids are dense and stable, so a vocabulary file is just one token
/// per line with the line number as the id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Wraps an ordered token list. The list must start with the five special
    /// tokens and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens; the {} special tokens are mandatory",
                tokens.len(),
                SPECIAL_TOKENS.len()
            )));
        }
        for (i, expected) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *expected {
                return Err(Error::Config(format!(
                    "vocabulary id {i} must be {expected:?}, found {:?}",
                    tokens[i]
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Builds a vocabulary from normalized texts.
    ///
    /// Seeds with the special tokens plus every character form (word-initial
    /// or `##`-prefixed) whose frequency reaches `min_freq`, then repeatedly
    /// merges the most frequent adjacent pair until `vocab_size` tokens exist
    /// or no pair reaches `min_freq`. Frequency ties pick the
    /// lexicographically smaller merged token, so construction is
    /// deterministic.
    pub fn build(
        texts: impl IntoIterator<Item = impl AsRef<str>>,
        vocab_size: usize,
        min_freq: u64,
    ) -> Result<Self> {
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".to_string()));
        }

        // Word frequencies, then each distinct word as a mutable symbol
        // sequence in WordPiece surface form: first char bare, rest ##-form.
        let mut word_freqs: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for word in text.as_ref().split_whitespace() {
                *word_freqs.entry(word.to_string()).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(Vec<String>, u64)> = {
            let mut sorted: Vec<(String, u64)> = word_freqs.into_iter().collect();
            sorted.sort();
            sorted
                .into_iter()
                .map(|(w, f)| {
                    let symbols = w
                        .chars()
                        .enumerate()
                        .map(|(i, c)| {
                            if i == 0 {
                                c.to_string()
                            } else {
                                format!("{CONTINUATION}{c}")
                            }
                        })
                        .collect();
                    (symbols, f)
                })
                .collect()
        };

        let mut alphabet: HashMap<String, u64> = HashMap::new();
        for (symbols, freq) in &words {
            for s in symbols {
                *alphabet.entry(s.clone()).or_insert(0) += freq;
            }
        }
        let mut alphabet: Vec<(String, u64)> = alphabet
            .into_iter()
            .filter(|(_, f)| *f >= min_freq)
            .collect();
        // Most frequent first; ties alphabetical.
        alphabet.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        if vocab_size < SPECIAL_TOKENS.len() + alphabet.len() {
            return Err(Error::Config(format!(
                "vocab_size {vocab_size} cannot hold {} special tokens plus {} alphabet entries",
                SPECIAL_TOKENS.len(),
                alphabet.len()
            )));
        }

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(alphabet.into_iter().map(|(s, _)| s));
        let mut present: HashMap<String, ()> = tokens.iter().map(|t| (t.clone(), ())).collect();

        while tokens.len() < vocab_size {
            let mut pair_freqs: HashMap<(String, String), u64> = HashMap::new();
            for (symbols, freq) in &words {
                for pair in symbols.windows(2) {
                    *pair_freqs
                        .entry((pair[0].clone(), pair[1].clone()))
                        .or_insert(0) += freq;
                }
            }
            // Highest frequency wins; ties pick the smaller merged surface.
            // The scan order over the map does not affect the winner.
            let mut best: Option<(u64, String, (String, String))> = None;
            for ((left, right), freq) in &pair_freqs {
                if *freq < min_freq {
                    continue;
                }
                let merged = merge_surface(left, right);
                let better = match &best {
                    None => true,
                    Some((bf, bm, _)) => *freq > *bf || (*freq == *bf && merged < *bm),
                };
                if better {
                    best = Some((*freq, merged, (left.clone(), right.clone())));
                }
            }
            let Some((_, merged, (left, right))) = best else {
                break;
            };

            for (symbols, _) in words.iter_mut() {
                let mut i = 0;
                while i + 1 < symbols.len() {
                    if symbols[i] == left && symbols[i + 1] == right {
                        symbols[i] = merged.clone();
                        symbols.remove(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
            if present.insert(merged.clone(), ()).is_none() {
                tokens.push(merged);
            }
        }

        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::InvalidTokenId {
                id,
                vocab_size: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read vocabulary {}: {e}", path.display())))?;
        Vocabulary::from_tokens(raw.lines().map(|l| l.to_string()).collect())
    }
}

/// Surface form of merging two adjacent WordPiece symbols: the right side
/// always carries the `##` marker, which disappears into the merged token.
fn merge_surface(left: &str, right: &str) -> String {
    let tail = right.strip_prefix(CONTINUATION).unwrap_or(right);
    format!("{left}{tail}")
}

/// A fixed-length encoded sequence: `[CLS] tokens... [SEP]` then padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoding {
    /// Token ids, exactly `max_seq` long.
    pub ids: Vec<u32>,
    /// 1 for real positions (including CLS/SEP), 0 for padding.
    pub attention_mask: Vec<u8>,
    /// Number of real positions; `ids[true_length - 1]` is SEP.
    pub true_length: usize,
}

/// Encodes one normalized text: greedy longest-match WordPiece per word,
/// truncated to fit, wrapped in CLS/SEP, padded to `max_seq`.
///
/// A word with no matchable prefix (or longer than [`MAX_WORD_CHARS`])
/// becomes a single UNK.
pub fn encode(text: &str, vocab: &Vocabulary, max_seq: usize) -> Result<Encoding> {
    if max_seq < 2 {
        return Err(Error::Config(format!(
            "max_seq must be at least 2 to hold CLS and SEP, got {max_seq}"
        )));
    }
    let mut piece_ids: Vec<u32> = Vec::new();
    for word in text.split_whitespace() {
        match word_pieces(word, vocab) {
            Some(pieces) => piece_ids.extend(pieces),
            None => piece_ids.push(UNK_ID),
        }
    }
    piece_ids.truncate(max_seq - 2);

    let true_length = piece_ids.len() + 2;
    let mut ids = Vec::with_capacity(max_seq);
    ids.push(CLS_ID);
    ids.extend(piece_ids);
    ids.push(SEP_ID);
    ids.resize(max_seq, PAD_ID);

    let mut attention_mask = vec![0u8; max_seq];
    for m in attention_mask.iter_mut().take(true_length) {
        *m = 1;
    }
    Ok(Encoding {
        ids,
        attention_mask,
        true_length,
    })
}

/// Greedy longest-match decomposition of one word. `None` means the word
/// cannot be fully decomposed and must become UNK.
fn word_pieces(word: &str, vocab: &Vocabulary) -> Option<Vec<u32>> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return None;
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let slice: String = chars[start..end].iter().collect();
            let candidate = if start == 0 {
                slice
            } else {
                format!("{CONTINUATION}{slice}")
            };
            if let Some(id) = vocab.id_of(&candidate) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return None,
        }
    }
    Some(pieces)
}

/// Reconstructs text from ids: special tokens are dropped, `##` continuations
/// glue onto the previous piece, and pieces join with single spaces.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for &id in ids {
        let token = vocab.token(id)?;
        if vocab.is_special(id) {
            continue;
        }
        if let Some(tail) = token.strip_prefix(CONTINUATION) {
            out.push_str(tail);
        } else {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(token);
        }
    }
    Ok(out)
}
