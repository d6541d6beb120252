//! Duration and meaning gates for translated candidates, and the bounded
//! paraphrase loop that searches for a candidate passing both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pauses::PauseIntervalSet;
use crate::providers::{ParaphraseContext, ParaphraseProvider, StreamPurpose, Utterance};
use crate::selection::Candidate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoParams {
    /// Half-width of the accepted duration window, in frames.
    pub window_frames: u32,
    pub sim_threshold: f64,
    pub max_iterations: usize,
}

impl Default for IsoParams {
    fn default() -> Self {
        Self {
            window_frames: 26,
            sim_threshold: 0.75,
            max_iterations: 60,
        }
    }
}

impl IsoParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::Config(format!(
                "sim_threshold {} outside [0, 1]",
                self.sim_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoEvaluation {
    pub candidate_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub predicted_frames: f64,
    pub scaled_duration: f64,
    pub similarity: f64,
    pub accepted: bool,
}

/// Source frame count with pauses removed.
pub fn effective_frames(total_frames: usize, pauses: &PauseIntervalSet) -> Result<usize> {
    let paused = pauses.paused_frames();
    total_frames.checked_sub(paused).ok_or_else(|| {
        Error::invalid(format!(
            "pauses cover {paused} frames, more than the {total_frames} available"
        ))
    })
}

/// Source frames per predicted synthesis frame.
pub fn speaking_rate(effective: usize, predicted_duration: f64) -> Result<f64> {
    if !(predicted_duration > 0.0) || !predicted_duration.is_finite() {
        return Err(Error::Degenerate(format!(
            "predicted source duration must be positive, got {predicted_duration}"
        )));
    }
    Ok(effective as f64 / predicted_duration)
}

pub fn scaled_duration(rate: f64, target_predicted_duration: f64) -> f64 {
    rate * target_predicted_duration
}

/// `scaled_duration(effective / source, target)` evaluated as
/// `effective · (target / source)`, which returns `effective` exactly when
/// `target == source`.
pub fn scaled_duration_for(
    effective: usize,
    source_predicted: f64,
    target_predicted: f64,
) -> Result<f64> {
    speaking_rate(effective, source_predicted)?;
    Ok(effective as f64 * (target_predicted / source_predicted))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding dimensions differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Inclusive duration window around `effective` plus the similarity floor.
pub fn iso_accept(
    effective: usize,
    eval_duration: f64,
    similarity: f64,
    params: &IsoParams,
) -> bool {
    let k = effective as f64;
    let w = params.window_frames as f64;
    k - w <= eval_duration && eval_duration <= k + w && similarity >= params.sim_threshold
}

/// What the gates need to know about the source side.
#[derive(Debug, Clone)]
pub struct SourceContext {
    pub utterance: Utterance,
    pub effective_frames: usize,
    pub embedding: Vec<f64>,
    pub predicted_frames: f64,
}

impl SourceContext {
    pub fn rate(&self) -> Result<f64> {
        speaking_rate(self.effective_frames, self.predicted_frames)
    }
}

pub fn evaluate(
    source: &SourceContext,
    candidate: &Candidate,
    params: &IsoParams,
) -> Result<IsoEvaluation> {
    let embedding = candidate.embedding.as_deref().ok_or_else(|| {
        Error::Internal(format!("candidate {} has no embedding", candidate.index))
    })?;
    let scaled = scaled_duration_for(
        source.effective_frames,
        source.predicted_frames,
        candidate.predicted_frames,
    )?;
    let similarity = cosine_similarity(&source.embedding, embedding)?;
    Ok(IsoEvaluation {
        candidate_index: candidate.index,
        id: candidate.utterance.id.clone(),
        text: candidate.utterance.text.clone(),
        predicted_frames: candidate.predicted_frames,
        scaled_duration: scaled,
        similarity,
        accepted: iso_accept(source.effective_frames, scaled, similarity, params),
    })
}

/// Evaluates an already materialized candidate list; order is preserved.
pub fn evaluate_all(
    source: &SourceContext,
    candidates: &[Candidate],
    params: &IsoParams,
    exec: Execution,
) -> Result<Vec<IsoEvaluation>> {
    par::try_map(exec, candidates, |i, c| {
        evaluate(source, c, params).map_err(|e| Error::Candidate {
            index: i,
            source: Box::new(e),
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoSelection {
    pub selected: Candidate,
    pub evaluation: IsoEvaluation,
    /// False when no candidate passed and the most similar one was taken.
    pub accepted: bool,
    pub trail: Vec<IsoEvaluation>,
}

/// Evaluates `initial`, then paraphrases in stream order, stopping at the
/// first accepted candidate. When none passes, the most similar evaluated
/// candidate (earliest on ties) is returned.
///
/// `materialize` turns an utterance into a candidate with an embedding;
/// its failures are reported with the candidate index.
pub fn iso_select<F>(
    source: &SourceContext,
    initial: &Utterance,
    paraphraser: &dyn ParaphraseProvider,
    mut materialize: F,
    params: &IsoParams,
) -> Result<IsoSelection>
where
    F: FnMut(usize, &Utterance) -> Result<Candidate>,
{
    params.validate()?;
    let mut trail: Vec<IsoEvaluation> = Vec::new();
    let mut best: Option<(Candidate, IsoEvaluation)> = None;
    let mut prior: Vec<Utterance> = Vec::new();
    let mut next = Some(initial.clone());
    let mut index = 0usize;

    while let Some(utt) = next.take() {
        let wrap = |e: Error| Error::Provider {
            index,
            source: Box::new(e),
        };
        let candidate = materialize(index, &utt).map_err(wrap)?;
        let eval = evaluate(source, &candidate, params).map_err(wrap)?;
        trail.push(eval.clone());
        if eval.accepted {
            return Ok(IsoSelection {
                selected: candidate,
                evaluation: eval,
                accepted: true,
                trail,
            });
        }
        if best
            .as_ref()
            .is_none_or(|(_, b)| eval.similarity > b.similarity)
        {
            best = Some((candidate, eval));
        }
        if index < params.max_iterations {
            next = paraphraser.next_paraphrase(&ParaphraseContext {
                source: &source.utterance,
                purpose: StreamPurpose::Iso,
                prior: &prior,
            });
            if let Some(p) = &next {
                prior.push(p.clone());
            }
        }
        index += 1;
    }

    let (selected, evaluation) =
        best.ok_or_else(|| Error::Internal("no candidate evaluated".into()))?;
    Ok(IsoSelection {
        selected,
        evaluation,
        accepted: false,
        trail,
    })
}
