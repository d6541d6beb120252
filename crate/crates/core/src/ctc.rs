//! Viterbi forced alignment over CTC emission matrices.
//!
//! The search runs on the usual CTC trellis: targets interleaved with blanks,
//! a state may stay, advance by one, or skip the blank between two distinct
//! labels. Emissions come from an external acoustic model.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CTCE";
const ROW_NORM_TOLERANCE: f64 = 1e-6;

/// Row-major `frames × vocab` log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    log_probs: Vec<f64>,
    frames: usize,
    vocab: usize,
    blank_index: usize,
}

#[derive(Deserialize, Serialize)]
struct EmissionJson {
    blank_index: usize,
    log_probs: Vec<Vec<f64>>,
}

impl EmissionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, blank_index: usize) -> Result<Self> {
        let frames = rows.len();
        if frames == 0 {
            return Err(Error::invalid("emission matrix needs at least one frame"));
        }
        let vocab = rows[0].len();
        if rows.iter().any(|r| r.len() != vocab) {
            return Err(Error::invalid("emission rows differ in length"));
        }
        Self::from_flat(rows.concat(), frames, vocab, blank_index)
    }

    fn from_flat(
        log_probs: Vec<f64>,
        frames: usize,
        vocab: usize,
        blank_index: usize,
    ) -> Result<Self> {
        if frames == 0 || vocab == 0 {
            return Err(Error::invalid("emission matrix must be non-empty"));
        }
        if blank_index >= vocab {
            return Err(Error::invalid(format!(
                "blank index {blank_index} outside vocabulary of {vocab}"
            )));
        }
        for (t, row) in log_probs.chunks_exact(vocab).enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::invalid(format!(
                    "frame {t} has a non-finite log-probability"
                )));
            }
            let lse = log_sum_exp(row);
            if (lse.abs()).is_nan() || lse.abs() > ROW_NORM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "frame {t} is not normalized (log-sum-exp {lse})"
                )));
            }
        }
        Ok(Self {
            log_probs,
            frames,
            vocab,
            blank_index,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.log_probs[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn get(&self, t: usize, v: usize) -> f64 {
        self.log_probs[t * self.vocab + v]
    }

    /// `"CTCE"`, then frames, vocab, blank index as little-endian u32, then
    /// frames × vocab little-endian f32.
    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::invalid("emission file lacks the CTCE header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (frames, vocab, blank) = (word(4), word(8), word(12));
        let body = &bytes[16..];
        let expected = frames
            .checked_mul(vocab)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::invalid("emission dimensions overflow"))?;
        if body.len() != expected {
            return Err(Error::invalid(format!(
                "emission body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let log_probs = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::from_flat(log_probs, frames, vocab, blank)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.log_probs.len());
        out.extend_from_slice(MAGIC);
        for v in [self.frames, self.vocab, self.blank_index] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &lp in &self.log_probs {
            out.extend_from_slice(&(lp as f32).to_le_bytes());
        }
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: EmissionJson =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("emission JSON: {e}")))?;
        Self::new(j.log_probs, j.blank_index)
    }

    pub fn to_json_string(&self) -> String {
        let j = EmissionJson {
            blank_index: self.blank_index,
            log_probs: self
                .log_probs
                .chunks_exact(self.vocab)
                .map(<[f64]>::to_vec)
                .collect(),
        };
        serde_json::to_string(&j).expect("emissions serialize")
    }

    /// Reads either encoding, chosen by the leading magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::parse(path, e))?;
            Self::from_json_str(&text)
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    /// Vocabulary index emitted at each frame (the blank index for blanks).
    pub frame_labels: Vec<usize>,
    /// Per target token, `(start_frame, end_frame)` with `end_frame` exclusive.
    pub token_spans: Vec<(usize, usize)>,
    pub path_log_prob: f64,
}

impl AlignmentResult {
    /// Spans of consecutive token groups, e.g. words of `word_lengths[i]` tokens.
    pub fn group_spans(&self, group_lengths: &[usize]) -> Result<Vec<(usize, usize)>> {
        if group_lengths.iter().sum::<usize>() != self.token_spans.len() {
            return Err(Error::invalid(
                "group lengths do not cover the aligned tokens",
            ));
        }
        let mut out = Vec::with_capacity(group_lengths.len());
        let mut i = 0;
        for &n in group_lengths {
            if n == 0 {
                return Err(Error::invalid("empty token group"));
            }
            out.push((self.token_spans[i].0, self.token_spans[i + n - 1].1));
            i += n;
        }
        Ok(out)
    }
}

/// Merges repeats then drops blanks.
pub fn collapse(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Minimum number of frames a CTC path for `targets` needs.
pub fn min_frames(targets: &[usize]) -> usize {
    targets.len() + targets.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Maximum-probability monotone CTC path that collapses to `targets`.
///
/// Ties prefer a blank predecessor, then the lower vocabulary index; at the
/// final frame, ending on the trailing blank wins ties.
pub fn ctc_viterbi_align(emissions: &EmissionMatrix, targets: &[usize]) -> Result<AlignmentResult> {
    let blank = emissions.blank_index();
    for &t in targets {
        if t >= emissions.vocab() {
            return Err(Error::invalid(format!(
                "target id {t} outside vocabulary of {}",
                emissions.vocab()
            )));
        }
        if t == blank {
            return Err(Error::invalid("targets may not contain the blank index"));
        }
    }
    let frames = emissions.frames();
    let needed = min_frames(targets);
    if frames < needed {
        return Err(Error::AlignmentInfeasible(format!(
            "{} targets need at least {needed} frames, got {frames}",
            targets.len()
        )));
    }

    let states: Vec<usize> = std::iter::once(blank)
        .chain(targets.iter().flat_map(|&t| [t, blank]))
        .collect();
    let n_states = states.len();

    // `None` marks unreachable states so that -inf emissions stay distinguishable.
    let mut prev: Vec<Option<f64>> = vec![None; n_states];
    let mut cur: Vec<Option<f64>> = vec![None; n_states];
    let mut back = vec![0usize; frames * n_states];

    prev[0] = Some(emissions.get(0, states[0]));
    if n_states > 1 {
        prev[1] = Some(emissions.get(0, states[1]));
    }

    for t in 1..frames {
        for s in 0..n_states {
            let mut preds: [Option<usize>; 3] = [Some(s), s.checked_sub(1), None];
            if s >= 2 && states[s] != blank && states[s] != states[s - 2] {
                preds[2] = Some(s - 2);
            }
            let mut best: Option<(f64, usize)> = None;
            for p in preds.into_iter().flatten() {
                let Some(score) = prev[p] else { continue };
                let better = match best {
                    None => true,
                    Some((b, bp)) => score > b || (score == b && prefer(&states, blank, p, bp)),
                };
                if better {
                    best = Some((score, p));
                }
            }
            cur[s] = best.map(|(score, p)| {
                back[t * n_states + s] = p;
                score + emissions.get(t, states[s])
            });
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.iter_mut().for_each(|c| *c = None);
    }

    let last = n_states - 1;
    let mut end_state = last;
    let mut end_score = prev[last];
    if n_states > 1 {
        if let Some(alt) = prev[last - 1] {
            if end_score.is_none_or(|s| alt > s) {
                end_state = last - 1;
                end_score = Some(alt);
            }
        }
    }
    let path_log_prob = end_score
        .ok_or_else(|| Error::AlignmentInfeasible("no path reaches the final state".to_string()))?;

    let mut path_states = vec![0usize; frames];
    let mut s = end_state;
    for t in (0..frames).rev() {
        path_states[t] = s;
        if t > 0 {
            s = back[t * n_states + s];
        }
    }

    let frame_labels: Vec<usize> = path_states.iter().map(|&s| states[s]).collect();
    let mut token_spans = vec![(usize::MAX, 0usize); targets.len()];
    for (t, &s) in path_states.iter().enumerate() {
        if s % 2 == 1 {
            let span = &mut token_spans[s / 2];
            span.0 = span.0.min(t);
            span.1 = t + 1;
        }
    }
    Ok(AlignmentResult {
        frame_labels,
        token_spans,
        path_log_prob,
    })
}

/// Whether predecessor `a` beats `b` on a score tie.
fn prefer(states: &[usize], blank: usize, a: usize, b: usize) -> bool {
    let (la, lb) = (states[a], states[b]);
    match (la == blank, lb == blank) {
        (true, false) => true,
        (false, true) => false,
        _ => la < lb,
    }
}
