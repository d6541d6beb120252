//! Final candidate choice: least-DTW (PS), the weighted DTW/semantic blend
//! (PS-Comet), and the DTW-versus-semantic correlation diagnostic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::providers::{ProviderBundle, Utterance};
use crate::sequences::{tokenize_with_blanks, DurationedSequence, PhonemeAlphabet};

/// One paraphrase with everything the gates and scorers need.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub index: usize,
    pub utterance: Utterance,
    pub sequence: DurationedSequence,
    /// Predictor total in frames; equals the per-token sum within 1e-6.
    pub predicted_frames: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic_score: Option<f64>,
}

/// What to fetch besides phonemes and durations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub embedding: bool,
    /// Semantic score against this source.
    pub semantic: bool,
}

/// Runs an utterance through phonemizer, tokenizer and duration predictor.
pub struct CandidateBuilder<'a> {
    pub alphabet: &'a PhonemeAlphabet,
    pub providers: &'a ProviderBundle,
}

impl CandidateBuilder<'_> {
    pub fn build(
        &self,
        index: usize,
        utterance: &Utterance,
        needs: Needs,
        source: Option<&Utterance>,
    ) -> Result<Candidate> {
        let ids = self.providers.phonemes.phonemize(utterance)?;
        let tokens = tokenize_with_blanks(&ids, &utterance.language, self.alphabet)?;
        let predicted = self
            .providers
            .durations
            .predict_duration(utterance, &tokens)?;
        let sequence = DurationedSequence::new(tokens, predicted.per_token_frames)?;
        let embedding = needs
            .embedding
            .then(|| self.providers.embeddings.embed_sentence(utterance))
            .transpose()?;
        let semantic_score = if needs.semantic {
            let source =
                source.ok_or_else(|| Error::Internal("semantic score without a source".into()))?;
            Some(
                self.providers
                    .semantic()?
                    .semantic_score(source, utterance)?,
            )
        } else {
            None
        };
        Ok(Candidate {
            index,
            utterance: utterance.clone(),
            sequence,
            predicted_frames: predicted.total_frames,
            embedding,
            semantic_score,
        })
    }
}

/// How the DTW term enters the weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DtwTerm {
    /// Min-max normalized then inverted, so lower distance scores higher.
    #[default]
    NormalizedInverted,
    /// The raw distance, summed as printed in the weighted-argmax formula.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CometParams {
    pub alpha: f64,
    pub beta: f64,
    pub dtw_term: DtwTerm,
}

impl Default for CometParams {
    fn default() -> Self {
        Self {
            alpha: 1.6,
            beta: 0.4,
            dtw_term: DtwTerm::NormalizedInverted,
        }
    }
}

impl CometParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::Config(format!(
                "comet weights need alpha >= 0, beta >= 0, alpha + beta > 0 (got {}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Ps,
    PsComet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub index: usize,
    pub dtw_raw: f64,
    pub dtw_normalized_inverted: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub mode: SelectionMode,
    pub chosen_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<CometParams>,
    pub rows: Vec<SelectionRow>,
}

fn check_scores(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{what} must be non-empty")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} must be finite")));
    }
    Ok(())
}

/// First index of the minimum.
pub fn ps_select(dtw_scores: &[f64]) -> Result<usize> {
    check_scores(dtw_scores, "DTW scores")?;
    let mut best = 0;
    for (i, &s) in dtw_scores.iter().enumerate().skip(1) {
        if s < dtw_scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in xs.iter().enumerate().skip(1) {
        if s > xs[best] {
            best = i;
        }
    }
    best
}

/// `1 - (s - min) / (max - min)`; all ones when the scores are equal.
pub fn normalize_invert(dtw_scores: &[f64]) -> Result<Vec<f64>> {
    check_scores(dtw_scores, "DTW scores")?;
    let min = dtw_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = dtw_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![1.0; dtw_scores.len()]);
    }
    let span = max - min;
    Ok(dtw_scores.iter().map(|s| 1.0 - (s - min) / span).collect())
}

/// PS selection with a full report.
pub fn ps_report(dtw_scores: &[f64]) -> Result<SelectionReport> {
    let chosen_index = ps_select(dtw_scores)?;
    let inverted = normalize_invert(dtw_scores)?;
    let rows = dtw_scores
        .iter()
        .zip(inverted)
        .enumerate()
        .map(
            |(index, (&dtw_raw, dtw_normalized_inverted))| SelectionRow {
                index,
                dtw_raw,
                dtw_normalized_inverted,
                semantic_score: None,
                combined_score: None,
            },
        )
        .collect();
    Ok(SelectionReport {
        mode: SelectionMode::Ps,
        chosen_index,
        params: None,
        rows,
    })
}

/// `argmax alpha * dtw_term + beta * semantic`, first index on ties.
pub fn ps_comet_select(
    dtw_scores: &[f64],
    semantic_scores: &[f64],
    params: &CometParams,
) -> Result<(usize, SelectionReport)> {
    params.validate()?;
    check_scores(dtw_scores, "DTW scores")?;
    if dtw_scores.len() != semantic_scores.len() {
        return Err(Error::invalid(format!(
            "{} DTW scores but {} semantic scores",
            dtw_scores.len(),
            semantic_scores.len()
        )));
    }
    check_scores(semantic_scores, "semantic scores")?;
    let inverted = normalize_invert(dtw_scores)?;
    let term: &[f64] = match params.dtw_term {
        DtwTerm::NormalizedInverted => &inverted,
        DtwTerm::Raw => dtw_scores,
    };
    let combined: Vec<f64> = term
        .iter()
        .zip(semantic_scores)
        .map(|(d, s)| params.alpha * d + params.beta * s)
        .collect();
    let chosen_index = argmax(&combined);
    let rows = (0..dtw_scores.len())
        .map(|i| SelectionRow {
            index: i,
            dtw_raw: dtw_scores[i],
            dtw_normalized_inverted: inverted[i],
            semantic_score: Some(semantic_scores[i]),
            combined_score: Some(combined[i]),
        })
        .collect();
    Ok((
        chosen_index,
        SelectionReport {
            mode: SelectionMode::PsComet,
            chosen_index,
            params: Some(*params),
            rows,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
}

/// Pearson's r with a two-sided p-value from the t distribution on n - 2
/// degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries(
            "constant series has no correlation".into(),
        ));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok((r, t_test_p(r, x.len())))
}

/// Spearman's rho (Pearson on average ranks) with the same t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn correlation_diagnostic(
    dtw_scores: &[f64],
    semantic_scores: &[f64],
) -> Result<CorrelationReport> {
    let (pearson_r, pearson_p) = pearson(dtw_scores, semantic_scores)?;
    let (spearman_rho, spearman_p) = spearman(dtw_scores, semantic_scores)?;
    Ok(CorrelationReport {
        n: dtw_scores.len(),
        pearson_r,
        pearson_p,
        spearman_rho,
        spearman_p,
    })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("paired series differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation inputs must be finite"));
    }
    Ok(())
}

fn t_test_p(r: f64, n: usize) -> f64 {
    if r.abs() == 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// 1-based ranks; ties share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}
