//! Independent reference implementations and fixtures shared by the
//! integration test targets.
#![allow(dead_code)]

pub mod criteria;

use std::path::{Path, PathBuf};

use dubsync_core::ctc::EmissionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cell `(i, j)` of a `k × l` grid is inside the band when the rescaled
/// diagonal `i·l/k` is within `r` columns of `j`.
fn brute_in_band(i: usize, j: usize, k: usize, l: usize, radius: Option<usize>) -> bool {
    radius.is_none_or(|r| ((i * l) as i64 - (j * k) as i64).unsigned_abs() as usize <= r * k)
}

/// Minimum over every monotone (1,0)/(0,1)/(1,1) path from `(0,0)` to
/// `(k-1,l-1)` of the path's costs summed front to back.
pub fn brute_dtw(
    k: usize,
    l: usize,
    cost: &dyn Fn(usize, usize) -> f64,
    radius: Option<usize>,
) -> Option<f64> {
    fn walk(
        i: usize,
        j: usize,
        acc: f64,
        k: usize,
        l: usize,
        cost: &dyn Fn(usize, usize) -> f64,
        radius: Option<usize>,
        best: &mut Option<f64>,
    ) {
        if !brute_in_band(i, j, k, l, radius) {
            return;
        }
        let acc = acc + cost(i, j);
        if (i, j) == (k - 1, l - 1) {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        if i + 1 < k && j + 1 < l {
            walk(i + 1, j + 1, acc, k, l, cost, radius, best);
        }
        if i + 1 < k {
            walk(i + 1, j, acc, k, l, cost, radius, best);
        }
        if j + 1 < l {
            walk(i, j + 1, acc, k, l, cost, radius, best);
        }
    }
    let mut best = None;
    walk(0, 0, 0.0, k, l, cost, radius, &mut best);
    best
}

fn brute_collapse(seq: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (t, &s) in seq.iter().enumerate() {
        if s != blank && (t == 0 || seq[t - 1] != s) {
            out.push(s);
        }
    }
    out
}

/// Best log-probability over every frame labelling that collapses to
/// `targets`, found by enumerating all `vocab^frames` labellings.
pub fn brute_ctc(em: &EmissionMatrix, targets: &[usize]) -> Option<f64> {
    let (frames, vocab, blank) = (em.frames(), em.vocab(), em.blank_index());
    let mut seq = vec![0usize; frames];
    let mut best: Option<f64> = None;
    loop {
        if brute_collapse(&seq, blank) == targets {
            let score = (1..frames).fold(em.get(0, seq[0]), |acc, t| acc + em.get(t, seq[t]));
            if best.is_none_or(|b| score > b) {
                best = Some(score);
            }
        }
        let mut t = 0;
        loop {
            if t == frames {
                return best;
            }
            seq[t] += 1;
            if seq[t] < vocab {
                break;
            }
            seq[t] = 0;
            t += 1;
        }
    }
}

/// Emission matrix of log-softmaxed random logits.
pub fn random_emissions(
    rng: &mut impl Rng,
    frames: usize,
    vocab: usize,
    blank: usize,
) -> EmissionMatrix {
    let rows = (0..frames)
        .map(|_| {
            let logits: Vec<f64> = (0..vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            logits.iter().map(|x| x - lse).collect()
        })
        .collect();
    EmissionMatrix::new(rows, blank).unwrap()
}

/// Pearson's r by the raw-sums formula.
pub fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Ranks from 1, ties sharing the mean of the positions they span.
pub fn textbook_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// `1 − 6Σd² / (n(n² − 1))`; valid only without ties.
pub fn textbook_spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (textbook_ranks(x), textbook_ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Mean of each vowel's vectors, then pairwise Euclidean distances.
pub fn mean_then_euclidean(source: &[Vec<Vec<f64>>], target: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let mean = |vs: &Vec<Vec<f64>>| -> Vec<f64> {
        let dim = vs[0].len();
        (0..dim)
            .map(|d| vs.iter().map(|v| v[d]).sum::<f64>() / vs.len() as f64)
            .collect()
    };
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let sm: Vec<Vec<f64>> = source.iter().map(mean).collect();
    let tm: Vec<Vec<f64>> = target.iter().map(mean).collect();
    sm.iter()
        .map(|s| tm.iter().map(|t| dist(s, t)).collect())
        .collect()
}

pub const SR: u32 = 22050;

/// Voiced tone everywhere except the given sample ranges, which hold
/// low-level noise.
pub fn synth_with_silences(total: usize, silences: &[(usize, usize)], seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..total)
        .map(|n| {
            let silent = silences.iter().any(|&(a, b)| (a..b).contains(&n));
            if silent {
                r.random_range(-0.001..0.001)
            } else {
                let t = n as f64 / SR as f64;
                let env = 0.7 + 0.3 * (2.0 * std::f64::consts::PI * 3.0 * t).sin().abs();
                (0.5 * env * (2.0 * std::f64::consts::PI * 220.0 * t).sin()) as f32
            }
        })
        .collect()
}

pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .unwrap();
    }
    w.finalize().unwrap();
}

/// Frames whose whole 1024-sample window lies inside `[a, b)`, as
/// `(start, length)`.
pub fn silent_frames(a: usize, b: usize) -> (usize, usize) {
    let first = a.div_ceil(256);
    let last = (b - 1024) / 256;
    (first, last + 1 - first)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
