//! Sakoe–Chiba banded DTW over frame-expanded phoneme id sequences, using
//! vowel distances as the local cost.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::sequences::{ExpandedSequence, PhonemeAlphabet, PhonemeId};
use crate::vowel_space::VowelDistanceMatrix;

/// Dense lookup of local costs indexed by alphabet id pairs
/// (row: source id, column: target id).
#[derive(Debug, Clone)]
pub struct LocalCost {
    n: usize,
    null_id: PhonemeId,
    // NaN marks a pair with no defined cost.
    table: Vec<f64>,
}

impl LocalCost {
    /// Resolves the matrix's vowel symbols against `alphabet`.
    pub fn bind(matrix: &VowelDistanceMatrix, alphabet: &PhonemeAlphabet) -> Result<Self> {
        let resolve = |lang: &str, sym: &str| -> Result<PhonemeId> {
            let id = alphabet.lookup(lang, sym).ok_or_else(|| {
                Error::invalid(format!(
                    "matrix vowel {sym:?} ({lang}) is not in the alphabet"
                ))
            })?;
            if !alphabet.is_vowel(id)? {
                return Err(Error::invalid(format!(
                    "matrix entry {sym:?} ({lang}) is not a vowel"
                )));
            }
            Ok(id)
        };
        let rows = matrix
            .source_vowels
            .iter()
            .map(|s| resolve(&matrix.source_language, s))
            .collect::<Result<Vec<_>>>()?;
        let cols = matrix
            .target_vowels
            .iter()
            .map(|s| resolve(&matrix.target_language, s))
            .collect::<Result<Vec<_>>>()?;
        let mut cost = Self::undefined(alphabet.len(), alphabet.null_id());
        for (m, &x) in rows.iter().enumerate() {
            for (n, &y) in cols.iter().enumerate() {
                cost.set(x, y, matrix.d[m][n]);
            }
            cost.set(x, alphabet.null_id(), matrix.null_cost);
        }
        for &y in &cols {
            cost.set(alphabet.null_id(), y, matrix.null_cost);
        }
        cost.set(alphabet.null_id(), alphabet.null_id(), 0.0);
        Ok(cost)
    }

    /// A table over ids `0..n` with every pair undefined.
    pub fn undefined(n: usize, null_id: PhonemeId) -> Self {
        Self {
            n,
            null_id,
            table: vec![f64::NAN; n * n],
        }
    }

    pub fn set(&mut self, x: PhonemeId, y: PhonemeId, cost: f64) {
        self.table[x as usize * self.n + y as usize] = cost;
    }

    pub fn null_id(&self) -> PhonemeId {
        self.null_id
    }

    fn raw(&self, x: PhonemeId, y: PhonemeId) -> f64 {
        self.table[x as usize * self.n + y as usize]
    }
}

/// Cost of aligning source frame `x` with target frame `y`.
pub fn local_cost(x: PhonemeId, y: PhonemeId, cost: &LocalCost) -> Result<f64> {
    let in_range = |id: PhonemeId| (id as usize) < cost.n;
    if !in_range(x) {
        return Err(Error::UnknownVowel(x));
    }
    if !in_range(y) {
        return Err(Error::UnknownVowel(y));
    }
    let c = cost.raw(x, y);
    if c.is_nan() {
        // Blame the side that has no row/column at all.
        let x_known = (0..cost.n as PhonemeId).any(|j| !cost.raw(x, j).is_nan());
        return Err(Error::UnknownVowel(if x_known { y } else { x }));
    }
    Ok(c)
}

/// Sakoe–Chiba radius around the rescaled diagonal `l ≈ k·L/K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandRadius {
    /// `max(5, ceil(0.1 · max(K, L)))`.
    #[default]
    Auto,
    Unbounded,
    Frames(usize),
}

impl BandRadius {
    pub fn resolve(self, k: usize, l: usize) -> Option<usize> {
        match self {
            BandRadius::Auto => Some(5.max((k.max(l) as u64).div_ceil(10) as usize)),
            BandRadius::Unbounded => None,
            BandRadius::Frames(r) => Some(r),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandRadiusRepr {
    Frames(usize),
    Keyword(String),
}

impl Serialize for BandRadius {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BandRadius::Auto => BandRadiusRepr::Keyword("auto".into()),
            BandRadius::Unbounded => BandRadiusRepr::Keyword("unbounded".into()),
            BandRadius::Frames(r) => BandRadiusRepr::Frames(*r),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BandRadius {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match BandRadiusRepr::deserialize(d)? {
            BandRadiusRepr::Frames(r) => Ok(BandRadius::Frames(r)),
            BandRadiusRepr::Keyword(k) if k == "auto" => Ok(BandRadius::Auto),
            BandRadiusRepr::Keyword(k) if k == "unbounded" => Ok(BandRadius::Unbounded),
            BandRadiusRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "band_radius must be a frame count, \"auto\" or \"unbounded\", not {k:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwParams {
    pub band_radius: BandRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtwResult {
    pub distance: f64,
    pub path: Vec<(usize, usize)>,
}

/// Whether cell `(i, j)` of a `k × l` grid lies within `radius` of the
/// rescaled diagonal, i.e. `|i·l/k − j| ≤ radius`, in exact integer arithmetic.
pub fn in_band(i: usize, j: usize, k: usize, l: usize, radius: Option<usize>) -> bool {
    match radius {
        None => true,
        Some(r) => {
            let lhs = (i as i128 * l as i128 - j as i128 * k as i128).abs();
            lhs <= r as i128 * k as i128
        }
    }
}

fn band_columns(i: usize, k: usize, l: usize, radius: Option<usize>) -> (usize, usize) {
    let Some(r) = radius else { return (0, l - 1) };
    let (i, k, l, r) = (i as i128, k as i128, l as i128, r as i128);
    let lo = (i * l - r * k).max(0);
    let lo = (lo + k - 1) / k;
    let hi = ((i * l + r * k) / k).min(l - 1);
    (lo as usize, hi as usize)
}

/// DTW over an abstract `k × l` grid with `cost(i, j)` as local cost.
///
/// Steps are (1,0), (0,1), (1,1) with unit weights and no length
/// normalization. Among equally cheap predecessors the path prefers the
/// diagonal, then the vertical step (advancing `i`).
pub fn dtw_grid<F>(k: usize, l: usize, cost: F, radius: Option<usize>) -> Result<DtwResult>
where
    F: Fn(usize, usize) -> f64,
{
    if k == 0 || l == 0 {
        return Err(Error::invalid("DTW needs two non-empty sequences"));
    }
    let idx = |i: usize, j: usize| i * l + j;
    let mut acc = vec![f64::INFINITY; k * l];
    for i in 0..k {
        let (lo, hi) = band_columns(i, k, l, radius);
        for j in lo..=hi {
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 && j > 0 {
                    m = m.min(acc[idx(i - 1, j - 1)]);
                }
                if i > 0 {
                    m = m.min(acc[idx(i - 1, j)]);
                }
                if j > 0 {
                    m = m.min(acc[idx(i, j - 1)]);
                }
                m
            };
            if best_prev.is_finite() {
                acc[idx(i, j)] = best_prev + cost(i, j);
            }
        }
    }
    let distance = acc[idx(k - 1, l - 1)];
    if !distance.is_finite() {
        return Err(Error::BandInfeasible(format!(
            "no warping path of a {k}×{l} grid fits a band of radius {}",
            radius.map_or("unbounded".to_string(), |r| r.to_string())
        )));
    }

    let mut path = vec![(k - 1, l - 1)];
    let (mut i, mut j) = (k - 1, l - 1);
    while (i, j) != (0, 0) {
        let mut best: Option<(f64, (usize, usize))> = None;
        let mut consider = |c: (usize, usize)| {
            let v = acc[idx(c.0, c.1)];
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, c));
            }
        };
        if i > 0 && j > 0 {
            consider((i - 1, j - 1));
        }
        if i > 0 {
            consider((i - 1, j));
        }
        if j > 0 {
            consider((i, j - 1));
        }
        (i, j) = best.expect("interior cell has a predecessor").1;
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult { distance, path })
}

fn check_pairs(xs: &ExpandedSequence, ys: &ExpandedSequence, cost: &LocalCost) -> Result<()> {
    let xset: BTreeSet<PhonemeId> = xs.frame_ids().iter().copied().collect();
    let yset: BTreeSet<PhonemeId> = ys.frame_ids().iter().copied().collect();
    for &x in &xset {
        for &y in &yset {
            local_cost(x, y, cost)?;
        }
    }
    Ok(())
}

/// Banded DTW distance between a source and a target frame sequence.
pub fn dtw(
    xs: &ExpandedSequence,
    ys: &ExpandedSequence,
    cost: &LocalCost,
    params: &DtwParams,
) -> Result<DtwResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("DTW needs two non-empty sequences"));
    }
    check_pairs(xs, ys, cost)?;
    let (x, y) = (xs.frame_ids(), ys.frame_ids());
    let radius = params.band_radius.resolve(x.len(), y.len());
    dtw_grid(x.len(), y.len(), |i, j| cost.raw(x[i], y[j]), radius)
}

/// `dtw(source, candidate).distance` for each candidate, in input order.
pub fn candidate_dtw_scores(
    source: &ExpandedSequence,
    candidates: &[ExpandedSequence],
    cost: &LocalCost,
    params: &DtwParams,
    exec: Execution,
) -> Result<Vec<f64>> {
    par::try_map(exec, candidates, |i, c| {
        dtw(source, c, cost, params)
            .map(|r| r.distance)
            .map_err(|e| Error::Candidate {
                index: i,
                source: Box::new(e),
            })
    })
}
