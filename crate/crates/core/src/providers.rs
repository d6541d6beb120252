//! Contracts for the neural components the selection pipeline depends on
//! (duration predictor, sentence embedder, semantic scorer, paraphraser,
//! phonemizer) and deterministic implementations backed by fixture files.
//!
//! Fixture records are JSON lines. Text-keyed records are looked up by a
//! content hash of the language code and the whitespace-normalized text, so
//! reflowing a sentence's spacing does not invalidate its fixtures.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sequences::{seconds_to_frames, PhonemeId, TokenizedSequence};

/// A sentence in a given language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub language: String,
}

impl Utterance {
    pub fn new(text: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            id: None,
            text: text.into(),
            language: language.into(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Hex SHA-256 of `language`, a unit separator, and the text with runs of
    /// whitespace collapsed. The `id` does not participate.
    pub fn key(&self) -> String {
        let normalized = self.text.split_whitespace().collect::<Vec<_>>().join(" ");
        let mut h = Sha256::new();
        h.update(self.language.as_bytes());
        h.update([0x1f]);
        h.update(normalized.as_bytes());
        hex::encode(h.finalize())
    }

    /// Short human-readable label for error messages.
    pub fn label(&self) -> String {
        match &self.id {
            Some(id) => format!("{id} ({:?}, {})", self.text, self.language),
            None => format!("{:?} ({})", self.text, self.language),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedDuration {
    pub total_frames: f64,
    pub per_token_frames: Vec<u32>,
}

pub trait DurationProvider: Send + Sync {
    fn predict_duration(
        &self,
        utterance: &Utterance,
        sequence: &TokenizedSequence,
    ) -> Result<PredictedDuration>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed_sentence(&self, utterance: &Utterance) -> Result<Vec<f64>>;
}

pub trait SemanticProvider: Send + Sync {
    fn semantic_score(&self, source: &Utterance, candidate: &Utterance) -> Result<f64>;
}

/// Which candidate stream a paraphrase request draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StreamPurpose {
    /// Rewrites tried by the isochrony loop.
    #[default]
    Iso,
    /// The candidate pool for phonetic selection.
    Ps,
}

pub struct ParaphraseContext<'a> {
    pub source: &'a Utterance,
    pub purpose: StreamPurpose,
    pub prior: &'a [Utterance],
}

pub trait ParaphraseProvider: Send + Sync {
    /// `None` signals end of stream.
    fn next_paraphrase(&self, context: &ParaphraseContext<'_>) -> Option<Utterance>;
}

pub trait PhonemeProvider: Send + Sync {
    fn phonemize(&self, utterance: &Utterance) -> Result<Vec<PhonemeId>>;
}

/// One handle per external model.
#[derive(Clone)]
pub struct ProviderBundle {
    pub durations: Arc<dyn DurationProvider>,
    pub embeddings: Arc<dyn EmbeddingProvider>,
    pub semantic: Option<Arc<dyn SemanticProvider>>,
    pub paraphrases: Arc<dyn ParaphraseProvider>,
    pub phonemes: Arc<dyn PhonemeProvider>,
}

impl ProviderBundle {
    pub fn from_fixtures(fixtures: Arc<FixtureSet>) -> Self {
        Self {
            durations: fixtures.clone(),
            embeddings: fixtures.clone(),
            semantic: fixtures
                .has_semantic()
                .then(|| fixtures.clone() as Arc<dyn SemanticProvider>),
            paraphrases: fixtures.clone(),
            phonemes: fixtures,
        }
    }

    pub fn semantic(&self) -> Result<&dyn SemanticProvider> {
        self.semantic
            .as_deref()
            .ok_or_else(|| Error::Config("no semantic-score provider configured".into()))
    }
}

// ---------------------------------------------------------------------------
// Fixture records

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    #[default]
    Frames,
    Seconds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DurationRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub language: String,
    pub per_token: Vec<f64>,
    #[serde(default)]
    pub unit: DurationUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub language: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticRecord {
    pub source_text: String,
    pub source_language: String,
    pub text: String,
    pub language: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub source_text: String,
    pub source_language: String,
    #[serde(default)]
    pub purpose: StreamPurpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub language: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhonemeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub language: String,
    pub phonemes: Vec<PhonemeId>,
}

/// Paths of every fixture file, relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<PathBuf>,
    pub durations: PathBuf,
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<PathBuf>,
    pub paraphrases: PathBuf,
    pub phonemes: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.durations);
        fix(&mut m.embeddings);
        fix(&mut m.paraphrases);
        fix(&mut m.phonemes);
        if let Some(p) = m.alphabet.as_mut() {
            fix(p);
        }
        if let Some(p) = m.semantic.as_mut() {
            fix(p);
        }
        Ok(m)
    }
}

/// All fixture tables, loaded once and immutable afterwards.
#[derive(Debug, Default)]
pub struct FixtureSet {
    durations: HashMap<String, PredictedDuration>,
    embeddings: HashMap<String, Vec<f64>>,
    semantic: Option<HashMap<(String, String), f64>>,
    streams: HashMap<(String, StreamPurpose), Vec<Utterance>>,
    phonemes: HashMap<String, Vec<PhonemeId>>,
}

fn insert_unique<K: std::hash::Hash + Eq, V>(
    map: &mut HashMap<K, V>,
    key: K,
    value: V,
    what: &str,
    label: impl FnOnce() -> String,
) -> Result<()> {
    if map.insert(key, value).is_some() {
        return Err(Error::invalid(format!(
            "duplicate {what} fixture for {}",
            label()
        )));
    }
    Ok(())
}

impl FixtureSet {
    pub fn from_records(
        durations: Vec<DurationRecord>,
        embeddings: Vec<EmbeddingRecord>,
        semantic: Option<Vec<SemanticRecord>>,
        paraphrases: Vec<ParaphraseRecord>,
        phonemes: Vec<PhonemeRecord>,
    ) -> Result<Self> {
        let mut set = FixtureSet::default();

        for r in durations {
            let utt = Utterance::new(&r.text, &r.language);
            let per_token = r
                .per_token
                .iter()
                .map(|&d| {
                    if !(d.is_finite() && d >= 0.0) {
                        return Err(Error::invalid(format!(
                            "negative or non-finite duration for {}",
                            utt.label()
                        )));
                    }
                    match r.unit {
                        DurationUnit::Seconds => Ok(seconds_to_frames(d)),
                        DurationUnit::Frames if d.fract() == 0.0 && d <= u32::MAX as f64 => {
                            Ok(d as u32)
                        }
                        DurationUnit::Frames => Err(Error::invalid(format!(
                            "frame durations must be whole numbers ({d} for {})",
                            utt.label()
                        ))),
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            let sum: f64 = per_token.iter().map(|&d| d as f64).sum();
            let total = match r.total {
                Some(t) if r.unit == DurationUnit::Frames => {
                    if (t - sum).abs() > 1e-6 {
                        return Err(Error::invalid(format!(
                            "duration total {t} disagrees with per-token sum {sum} for {}",
                            utt.label()
                        )));
                    }
                    t
                }
                _ => sum,
            };
            insert_unique(
                &mut set.durations,
                utt.key(),
                PredictedDuration {
                    total_frames: total,
                    per_token_frames: per_token,
                },
                "duration",
                || utt.label(),
            )?;
        }

        let mut dim = None;
        for r in embeddings {
            let utt = Utterance::new(&r.text, &r.language);
            if r.vector.is_empty() || r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("bad embedding for {}", utt.label())));
            }
            if *dim.get_or_insert(r.vector.len()) != r.vector.len() {
                return Err(Error::invalid(format!(
                    "embedding for {} has dimension {}, expected {}",
                    utt.label(),
                    r.vector.len(),
                    dim.unwrap()
                )));
            }
            insert_unique(
                &mut set.embeddings,
                utt.key(),
                r.vector,
                "embedding",
                || utt.label(),
            )?;
        }

        if let Some(records) = semantic {
            let mut table = HashMap::new();
            for r in records {
                let src = Utterance::new(&r.source_text, &r.source_language);
                let cand = Utterance::new(&r.text, &r.language);
                if !(0.0..=1.0).contains(&r.score) {
                    return Err(Error::invalid(format!(
                        "semantic score {} outside [0, 1] for {} -> {}",
                        r.score,
                        src.label(),
                        cand.label()
                    )));
                }
                insert_unique(
                    &mut table,
                    (src.key(), cand.key()),
                    r.score,
                    "semantic",
                    || format!("{} -> {}", src.label(), cand.label()),
                )?;
            }
            set.semantic = Some(table);
        }

        for r in paraphrases {
            let src = Utterance::new(&r.source_text, &r.source_language);
            let mut utt = Utterance::new(r.text, r.language);
            utt.id = r.id;
            set.streams
                .entry((src.key(), r.purpose))
                .or_default()
                .push(utt);
        }

        for r in phonemes {
            let utt = Utterance::new(&r.text, &r.language);
            insert_unique(&mut set.phonemes, utt.key(), r.phonemes, "phoneme", || {
                utt.label()
            })?;
        }
        Ok(set)
    }

    pub fn load(manifest: &Manifest) -> Result<Self> {
        Self::from_records(
            read_jsonl(&manifest.durations)?,
            read_jsonl(&manifest.embeddings)?,
            manifest.semantic.as_ref().map(read_jsonl).transpose()?,
            read_jsonl(&manifest.paraphrases)?,
            read_jsonl(&manifest.phonemes)?,
        )
    }

    pub fn has_semantic(&self) -> bool {
        self.semantic.is_some()
    }

    pub fn has_duration(&self, u: &Utterance) -> bool {
        self.durations.contains_key(&u.key())
    }

    pub fn has_embedding(&self, u: &Utterance) -> bool {
        self.embeddings.contains_key(&u.key())
    }

    pub fn has_phonemes(&self, u: &Utterance) -> bool {
        self.phonemes.contains_key(&u.key())
    }

    pub fn has_semantic_pair(&self, source: &Utterance, candidate: &Utterance) -> bool {
        self.semantic
            .as_ref()
            .is_some_and(|t| t.contains_key(&(source.key(), candidate.key())))
    }

    /// The whole stream for `source`, in order.
    pub fn stream(&self, source: &Utterance, purpose: StreamPurpose) -> &[Utterance] {
        self.streams
            .get(&(source.key(), purpose))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn miss(provider: &'static str, key: String) -> Error {
    Error::FixtureMiss { provider, key }
}

impl DurationProvider for FixtureSet {
    fn predict_duration(
        &self,
        utterance: &Utterance,
        sequence: &TokenizedSequence,
    ) -> Result<PredictedDuration> {
        let d = self
            .durations
            .get(&utterance.key())
            .ok_or_else(|| miss("durations", utterance.label()))?;
        if d.per_token_frames.len() != sequence.len() {
            return Err(Error::invalid(format!(
                "duration fixture for {} has {} tokens, sequence has {}",
                utterance.label(),
                d.per_token_frames.len(),
                sequence.len()
            )));
        }
        Ok(d.clone())
    }
}

impl EmbeddingProvider for FixtureSet {
    fn embed_sentence(&self, utterance: &Utterance) -> Result<Vec<f64>> {
        self.embeddings
            .get(&utterance.key())
            .cloned()
            .ok_or_else(|| miss("embeddings", utterance.label()))
    }
}

impl SemanticProvider for FixtureSet {
    fn semantic_score(&self, source: &Utterance, candidate: &Utterance) -> Result<f64> {
        let table = self
            .semantic
            .as_ref()
            .ok_or_else(|| miss("semantic", "no semantic fixture file".into()))?;
        table
            .get(&(source.key(), candidate.key()))
            .copied()
            .ok_or_else(|| {
                miss(
                    "semantic",
                    format!("{} -> {}", source.label(), candidate.label()),
                )
            })
    }
}

impl ParaphraseProvider for FixtureSet {
    fn next_paraphrase(&self, context: &ParaphraseContext<'_>) -> Option<Utterance> {
        self.stream(context.source, context.purpose)
            .get(context.prior.len())
            .cloned()
    }
}

impl PhonemeProvider for FixtureSet {
    fn phonemize(&self, utterance: &Utterance) -> Result<Vec<PhonemeId>> {
        if utterance.text.trim().is_empty() {
            return Ok(Vec::new());
        }
        self.phonemes
            .get(&utterance.key())
            .cloned()
            .ok_or_else(|| miss("phonemes", utterance.label()))
    }
}
