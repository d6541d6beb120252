//! Energy-based pause detection over framed audio, boundary refinement, and
//! inter-word silences derived from forced-alignment spans.

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::{HOP_SIZE, SAMPLE_RATE, WINDOW_SIZE};

/// Mean-square energy per analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    energies: Vec<f64>,
}

impl EnergySeries {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::invalid("energies must be finite and non-negative"));
        }
        Ok(Self { energies })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn frame_count(&self) -> usize {
        self.energies.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseInterval {
    pub start_frame: usize,
    pub length_frames: usize,
}

impl PauseInterval {
    pub fn new(start_frame: usize, length_frames: usize) -> Self {
        Self {
            start_frame,
            length_frames,
        }
    }

    pub fn end_frame(&self) -> usize {
        self.start_frame + self.length_frames
    }
}

/// Sorted, disjoint pause intervals over `total_frames` frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseIntervalSet {
    intervals: Vec<PauseInterval>,
    total_frames: usize,
}

impl PauseIntervalSet {
    pub fn new(intervals: Vec<PauseInterval>, total_frames: usize) -> Result<Self> {
        let mut prev_end = 0usize;
        for (i, iv) in intervals.iter().enumerate() {
            if iv.length_frames == 0 {
                return Err(Error::invalid(format!(
                    "pause interval {i} has zero length"
                )));
            }
            if i > 0 && iv.start_frame < prev_end {
                return Err(Error::invalid(format!(
                    "pause interval {i} starts at {} before the previous end {prev_end}",
                    iv.start_frame
                )));
            }
            if iv.end_frame() > total_frames {
                return Err(Error::invalid(format!(
                    "pause interval {i} ends at {} beyond {total_frames} frames",
                    iv.end_frame()
                )));
            }
            prev_end = iv.end_frame();
        }
        Ok(Self {
            intervals,
            total_frames,
        })
    }

    pub fn empty(total_frames: usize) -> Self {
        Self {
            intervals: Vec::new(),
            total_frames,
        }
    }

    pub fn intervals(&self) -> &[PauseInterval] {
        &self.intervals
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn paused_frames(&self) -> usize {
        self.intervals.iter().map(|iv| iv.length_frames).sum()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// The on-disk form: a bare list of intervals.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.intervals).expect("intervals serialize")
    }

    pub fn from_json_str(s: &str, total_frames: usize) -> Result<Self> {
        let intervals: Vec<PauseInterval> =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("pause set: {e}")))?;
        Self::new(intervals, total_frames)
    }
}

/// Mean of squared samples over 1024-sample windows with a 256-sample hop.
/// Trailing partial windows are dropped.
pub fn frame_energies(audio: &AudioBuffer) -> Result<EnergySeries> {
    if audio.sample_rate != SAMPLE_RATE {
        return Err(Error::RateMismatch {
            found: audio.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    let n = audio.samples.len();
    if n < WINDOW_SIZE {
        return Err(Error::invalid(format!(
            "audio has {n} samples; at least {WINDOW_SIZE} are needed for one frame"
        )));
    }
    let frames = (n - WINDOW_SIZE) / HOP_SIZE + 1;
    let energies = (0..frames)
        .map(|k| {
            let w = &audio.samples[k * HOP_SIZE..k * HOP_SIZE + WINDOW_SIZE];
            w.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / WINDOW_SIZE as f64
        })
        .collect();
    EnergySeries::new(energies)
}

/// Maximal runs of frames with energy strictly below `threshold` that last at
/// least `min_run` frames.
pub fn detect_pauses_rms(
    energies: &EnergySeries,
    threshold: f64,
    min_run: usize,
) -> Result<PauseIntervalSet> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    if min_run == 0 {
        return Err(Error::invalid("min_run must be at least 1"));
    }
    let e = energies.energies();
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for k in 0..=e.len() {
        let quiet = k < e.len() && e[k] < threshold;
        match (quiet, run_start) {
            (true, None) => run_start = Some(k),
            (false, Some(s)) => {
                if k - s >= min_run {
                    intervals.push(PauseInterval::new(s, k - s));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    PauseIntervalSet::new(intervals, e.len())
}

/// Trims each interval's edges while the adjacent-frame energy change inside
/// the interval exceeds `slope_threshold`; intervals left shorter than
/// `min_run` are dropped. Never merges or grows intervals.
pub fn refine_pauses(
    energies: &EnergySeries,
    pauses: &PauseIntervalSet,
    slope_threshold: f64,
    min_run: usize,
) -> Result<PauseIntervalSet> {
    let e = energies.energies();
    if pauses.total_frames() != e.len() {
        return Err(Error::invalid(format!(
            "pause set covers {} frames but the energy series has {}",
            pauses.total_frames(),
            e.len()
        )));
    }
    let slope = |a: usize, b: usize| (e[b] - e[a]).abs();
    let mut out = Vec::with_capacity(pauses.len());
    for iv in pauses.intervals() {
        let mut start = iv.start_frame;
        let mut end = iv.end_frame();
        while start + 1 < end && slope(start, start + 1) > slope_threshold {
            start += 1;
        }
        while end > start + 1 && slope(end - 2, end - 1) > slope_threshold {
            end -= 1;
        }
        if end - start >= min_run.max(1) {
            out.push(PauseInterval::new(start, end - start));
        }
    }
    PauseIntervalSet::new(out, pauses.total_frames())
}

/// Gaps between consecutive word spans (`end` exclusive).
pub fn silence_between_words(
    spans: &[(usize, usize)],
    total_frames: usize,
) -> Result<PauseIntervalSet> {
    for (i, &(s, e)) in spans.iter().enumerate() {
        if e < s {
            return Err(Error::invalid(format!("span {i} ends before it starts")));
        }
        if i > 0 && s < spans[i - 1].1 {
            return Err(Error::invalid(format!(
                "span {i} overlaps or precedes span {}",
                i - 1
            )));
        }
    }
    let intervals = spans
        .windows(2)
        .filter(|w| w[1].0 > w[0].1)
        .map(|w| PauseInterval::new(w[0].1, w[1].0 - w[0].1))
        .collect();
    PauseIntervalSet::new(intervals, total_frames)
}
