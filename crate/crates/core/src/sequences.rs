//! Phoneme alphabets and the sequence forms built from them: blank-interleaved
//! token sequences, per-token durations, frame expansion and vowel masking.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PhonemeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeEntry {
    pub id: PhonemeId,
    pub symbol: String,
    pub language: String,
    pub is_vowel: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AlphabetFile {
    blank_id: PhonemeId,
    null_id: PhonemeId,
    entries: Vec<PhonemeEntry>,
}

/// A validated phoneme inventory covering one or more languages.
///
/// Ids are contiguous from zero so they double as dense table indices.
#[derive(Debug, Clone)]
pub struct PhonemeAlphabet {
    entries: Vec<PhonemeEntry>,
    blank_id: PhonemeId,
    null_id: PhonemeId,
    by_symbol: HashMap<(String, String), PhonemeId>,
}

impl PhonemeAlphabet {
    pub fn new(
        mut entries: Vec<PhonemeEntry>,
        blank_id: PhonemeId,
        null_id: PhonemeId,
    ) -> Result<Self> {
        entries.sort_by_key(|e| e.id);
        for (i, e) in entries.iter().enumerate() {
            if e.id as usize != i {
                return Err(Error::invalid(format!(
                    "alphabet ids must be unique and contiguous from 0; found {} at position {i}",
                    e.id
                )));
            }
        }
        if blank_id == null_id {
            return Err(Error::invalid("blank_id and null_id must differ"));
        }
        for (name, id) in [("blank_id", blank_id), ("null_id", null_id)] {
            match entries.get(id as usize) {
                None => {
                    return Err(Error::invalid(format!(
                        "{name} {id} is not in the alphabet"
                    )))
                }
                Some(e) if e.is_vowel => {
                    return Err(Error::invalid(format!("{name} {id} must not be a vowel")))
                }
                Some(_) => {}
            }
        }
        let mut by_symbol = HashMap::with_capacity(entries.len());
        for e in &entries {
            if by_symbol
                .insert((e.language.clone(), e.symbol.clone()), e.id)
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "duplicate symbol {:?} in language {:?}",
                    e.symbol, e.language
                )));
            }
        }
        Ok(Self {
            entries,
            blank_id,
            null_id,
            by_symbol,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: AlphabetFile =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("alphabet: {e}")))?;
        Self::new(file.entries, file.blank_id, file.null_id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AlphabetFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::new(file.entries, file.blank_id, file.null_id)
    }

    pub fn to_json(&self) -> String {
        let file = AlphabetFile {
            blank_id: self.blank_id,
            null_id: self.null_id,
            entries: self.entries.clone(),
        };
        serde_json::to_string_pretty(&file).expect("alphabet serializes")
    }

    pub fn blank_id(&self) -> PhonemeId {
        self.blank_id
    }

    pub fn null_id(&self) -> PhonemeId {
        self.null_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PhonemeEntry] {
        &self.entries
    }

    pub fn get(&self, id: PhonemeId) -> Result<&PhonemeEntry> {
        self.entries
            .get(id as usize)
            .ok_or(Error::UnknownPhoneme(id))
    }

    pub fn is_vowel(&self, id: PhonemeId) -> Result<bool> {
        Ok(self.get(id)?.is_vowel)
    }

    pub fn lookup(&self, language: &str, symbol: &str) -> Option<PhonemeId> {
        self.by_symbol
            .get(&(language.to_string(), symbol.to_string()))
            .copied()
    }
}

/// `b, s1, b, s2, …, b, sN, b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    token_ids: Vec<PhonemeId>,
    language: String,
}

impl TokenizedSequence {
    pub fn token_ids(&self) -> &[PhonemeId] {
        &self.token_ids
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// The phonemes at odd positions, i.e. the input to [`tokenize_with_blanks`].
    pub fn phonemes(&self) -> Vec<PhonemeId> {
        self.token_ids.iter().skip(1).step_by(2).copied().collect()
    }
}

/// Interleaves `phoneme_ids` with the alphabet's blank token.
pub fn tokenize_with_blanks(
    phoneme_ids: &[PhonemeId],
    language: &str,
    alphabet: &PhonemeAlphabet,
) -> Result<TokenizedSequence> {
    let blank = alphabet.blank_id();
    let mut token_ids = Vec::with_capacity(2 * phoneme_ids.len() + 1);
    token_ids.push(blank);
    for &id in phoneme_ids {
        alphabet.get(id)?;
        if id == blank || id == alphabet.null_id() {
            return Err(Error::invalid(format!(
                "phoneme sequence may not contain the blank or null id ({id})"
            )));
        }
        token_ids.push(id);
        token_ids.push(blank);
    }
    Ok(TokenizedSequence {
        token_ids,
        language: language.to_string(),
    })
}

/// A tokenized sequence with a frame count for every token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationedSequence {
    base: TokenizedSequence,
    durations: Vec<u32>,
}

impl DurationedSequence {
    pub fn new(base: TokenizedSequence, durations: Vec<u32>) -> Result<Self> {
        if base.len() != durations.len() {
            return Err(Error::invalid(format!(
                "{} durations for {} tokens",
                durations.len(),
                base.len()
            )));
        }
        Ok(Self { base, durations })
    }

    pub fn base(&self) -> &TokenizedSequence {
        &self.base
    }

    pub fn durations(&self) -> &[u32] {
        &self.durations
    }

    pub fn total_frames(&self) -> usize {
        self.durations.iter().map(|&d| d as usize).sum()
    }
}

/// One alphabet id per acoustic frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedSequence {
    frame_ids: Vec<PhonemeId>,
}

impl ExpandedSequence {
    pub fn new(frame_ids: Vec<PhonemeId>) -> Self {
        Self { frame_ids }
    }

    pub fn frame_ids(&self) -> &[PhonemeId] {
        &self.frame_ids
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    /// Run-length encoding as `(id, run)` pairs.
    pub fn runs(&self) -> Vec<(PhonemeId, usize)> {
        let mut out: Vec<(PhonemeId, usize)> = Vec::new();
        for &id in &self.frame_ids {
            match out.last_mut() {
                Some((last, n)) if *last == id => *n += 1,
                _ => out.push((id, 1)),
            }
        }
        out
    }
}

/// Repeats every token by its duration. Zero-duration tokens vanish.
pub fn expand_with_durations(seq: &DurationedSequence) -> ExpandedSequence {
    let mut frame_ids = Vec::with_capacity(seq.total_frames());
    for (&id, &d) in seq.base.token_ids.iter().zip(&seq.durations) {
        frame_ids.extend(std::iter::repeat_n(id, d as usize));
    }
    ExpandedSequence { frame_ids }
}

/// Replaces every non-vowel frame (blanks and word spaces included) by the null id.
pub fn mask_non_vowels(
    seq: &ExpandedSequence,
    alphabet: &PhonemeAlphabet,
) -> Result<ExpandedSequence> {
    let null = alphabet.null_id();
    let frame_ids = seq
        .frame_ids
        .iter()
        .map(|&id| Ok(if alphabet.is_vowel(id)? { id } else { null }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpandedSequence { frame_ids })
}

/// Seconds to frames at 22050 Hz with a 256-sample hop, rounded up.
pub fn seconds_to_frames(seconds: f64) -> u32 {
    (seconds * crate::SAMPLE_RATE as f64 / crate::HOP_SIZE as f64).ceil() as u32
}
