//! Cross-lingual vowel distances.
//!
//! Each vowel's mean vectors are clustered with K-means, the centroids are
//! averaged into one point per vowel, and source/target vowels are compared
//! by Euclidean distance. The resulting matrix is the local cost for DTW.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9_string;
use crate::par::{self, Execution};

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VowelKey {
    pub language: String,
    pub vowel: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct CorpusLine {
    language: String,
    vowel: String,
    vector: Vec<f64>,
}

/// Mean vectors grouped per vowel, in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelVectorCorpus {
    groups: IndexMap<VowelKey, Vec<Vec<f64>>>,
    dim: usize,
}

impl VowelVectorCorpus {
    pub fn new(groups: IndexMap<VowelKey, Vec<Vec<f64>>>) -> Result<Self> {
        let dim = groups
            .values()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("vowel corpus is empty"))?;
        if dim == 0 {
            return Err(Error::invalid("vowel vectors must have dimension >= 1"));
        }
        for (key, vs) in &groups {
            if vs.is_empty() {
                return Err(Error::invalid(format!(
                    "vowel {}/{} has no vectors",
                    key.language, key.vowel
                )));
            }
            if vs
                .iter()
                .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()))
            {
                return Err(Error::invalid(format!(
                    "vowel {}/{} has a vector that is not a finite {dim}-vector",
                    key.language, key.vowel
                )));
            }
        }
        Ok(Self { groups, dim })
    }

    pub fn from_lines(lines: impl IntoIterator<Item = (String, String, Vec<f64>)>) -> Result<Self> {
        let mut groups: IndexMap<VowelKey, Vec<Vec<f64>>> = IndexMap::new();
        for (language, vowel, vector) in lines {
            groups
                .entry(VowelKey { language, vowel })
                .or_default()
                .push(vector);
        }
        Self::new(groups)
    }

    /// JSON lines of `{"language", "vowel", "vector"}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let lines: Vec<CorpusLine> = crate::providers::read_jsonl(path)?;
        Self::from_lines(lines.into_iter().map(|l| (l.language, l.vowel, l.vector)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> &IndexMap<VowelKey, Vec<Vec<f64>>> {
        &self.groups
    }

    /// Applies `f` to every vector.
    pub fn map_vectors(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(
            self.groups
                .iter()
                .map(|(k, vs)| (k.clone(), vs.iter().map(|v| f(v)).collect()))
                .collect(),
        )
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, sq_dist(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeding. Deterministic for a given seed.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeans_with_rng(vectors, k, &mut rng)
}

fn kmeans_with_rng(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if vectors.len() < k {
        return Err(Error::invalid(format!(
            "k-means needs at least k = {k} vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("k-means vectors differ in dimension"));
    }

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(vectors[rng.random_range(0..vectors.len())].clone());
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..vectors.len())
        };
        let c = vectors[pick].clone();
        for (w, v) in d2.iter_mut().zip(vectors) {
            *w = w.min(sq_dist(v, &c));
        }
        centroids.push(c);
    }

    let mut assignment: Vec<usize> = vec![usize::MAX; vectors.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut dists = vec![0.0; vectors.len()];
        let mut next: Vec<usize> = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            let (j, d) = nearest(v, &centroids);
            next.push(j);
            dists[i] = d;
        }
        repair_empty_clusters(&mut next, &mut dists, k);
        let changed = next != assignment;
        assignment = next;
        centroids = cluster_means(vectors, &assignment, k, dim);
        if !changed {
            break;
        }
    }
    Ok(centroids)
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty_clusters(assignment: &mut [usize], dists: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = empty;
            counts[empty] = 1;
            dists[i] = 0.0;
        }
    }
}

fn cluster_means(
    vectors: &[Vec<f64>],
    assignment: &[usize],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(v) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        for x in s.iter_mut() {
            *x /= n.max(1) as f64;
        }
    }
    sums
}

/// Elementwise mean of the centroids.
pub fn averaged_centroid(centroids: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = centroids
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty centroid list"))?;
    if centroids.iter().any(|c| c.len() != first.len()) {
        return Err(Error::invalid("centroids differ in dimension"));
    }
    let n = centroids.len() as f64;
    Ok((0..first.len())
        .map(|d| centroids.iter().map(|c| c[d]).sum::<f64>() / n)
        .collect())
}

/// How DTW prices a null frame aligned with a vowel frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NullCostPolicy {
    /// Mean of all matrix entries.
    #[default]
    GlobalMean,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub source_language: String,
    pub target_language: String,
    pub null_cost: f64,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

/// Source-vowel × target-vowel Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelDistanceMatrix {
    pub source_language: String,
    pub target_language: String,
    pub source_vowels: Vec<String>,
    pub target_vowels: Vec<String>,
    pub d: Vec<Vec<f64>>,
    pub null_cost: f64,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

/// `d[m][n] = ‖source[m] − target[n]‖₂`.
pub fn build_distance_matrix(
    source_mus: &[Vec<f64>],
    target_mus: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let dim = source_mus
        .first()
        .or(target_mus.first())
        .map(Vec::len)
        .unwrap_or(0);
    if source_mus.iter().chain(target_mus).any(|m| m.len() != dim) {
        return Err(Error::invalid("vowel centroids differ in dimension"));
    }
    Ok(source_mus
        .iter()
        .map(|s| target_mus.iter().map(|t| euclidean(s, t)).collect())
        .collect())
}

pub fn resolve_null_cost(d: &[Vec<f64>], policy: NullCostPolicy) -> Result<f64> {
    match policy {
        NullCostPolicy::Constant(c) if c.is_finite() && c >= 0.0 => Ok(c),
        NullCostPolicy::Constant(c) => Err(Error::Config(format!(
            "null cost {c} must be finite and >= 0"
        ))),
        NullCostPolicy::GlobalMean => {
            let n: usize = d.iter().map(Vec::len).sum();
            if n == 0 {
                return Err(Error::invalid("cannot take the mean of an empty matrix"));
            }
            Ok(d.iter().flatten().sum::<f64>() / n as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VowelMapParams {
    pub k: usize,
    pub seed: u64,
    pub source_language: String,
    pub target_language: String,
    pub null_cost: NullCostPolicy,
}

impl Default for VowelMapParams {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            source_language: "ko".into(),
            target_language: "en".into(),
            null_cost: NullCostPolicy::GlobalMean,
        }
    }
}

/// Per-vowel averaged centroids, in corpus order. Vowel `i` draws from RNG
/// stream `i`, so the result does not depend on scheduling.
pub fn vowel_centroids(
    corpus: &VowelVectorCorpus,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(VowelKey, Vec<f64>)>> {
    let groups: Vec<(&VowelKey, &Vec<Vec<f64>>)> = corpus.groups.iter().collect();
    par::try_map(exec, &groups, |i, (key, vectors)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let centroids = kmeans_with_rng(vectors, k, &mut rng)
            .map_err(|e| Error::invalid(format!("vowel {}/{}: {e}", key.language, key.vowel)))?;
        Ok(((*key).clone(), averaged_centroid(&centroids)?))
    })
}

/// Clustering, averaging and distances in one step.
pub fn build_vowel_map(
    corpus: &VowelVectorCorpus,
    params: &VowelMapParams,
    exec: Execution,
) -> Result<VowelDistanceMatrix> {
    let mus = vowel_centroids(corpus, params.k, params.seed, exec)?;
    let pick = |lang: &str| -> (Vec<String>, Vec<Vec<f64>>) {
        mus.iter()
            .filter(|(k, _)| k.language == lang)
            .map(|(k, m)| (k.vowel.clone(), m.clone()))
            .unzip()
    };
    let (source_vowels, src) = pick(&params.source_language);
    let (target_vowels, tgt) = pick(&params.target_language);
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::invalid(format!(
            "corpus needs vowels for both {} and {}",
            params.source_language, params.target_language
        )));
    }
    let d = build_distance_matrix(&src, &tgt)?;
    let null_cost = resolve_null_cost(&d, params.null_cost)?;
    Ok(VowelDistanceMatrix {
        source_language: params.source_language.clone(),
        target_language: params.target_language.clone(),
        source_vowels,
        target_vowels,
        d,
        null_cost,
        k: Some(params.k),
        seed: Some(params.seed),
    })
}

impl VowelDistanceMatrix {
    pub fn meta(&self) -> MatrixMeta {
        MatrixMeta {
            source_language: self.source_language.clone(),
            target_language: self.target_language.clone(),
            null_cost: self.null_cost,
            k: self.k,
            seed: self.seed,
        }
    }

    /// Header row of target vowels, one row per source vowel.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.target_vowels.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (name, row) in self.source_vowels.iter().zip(&self.d) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|&x| sig9_string(x)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes `path` and its `.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let json = crate::format::to_json_string(&self.meta())?;
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn from_csv_str(csv_text: &str, meta: MatrixMeta) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(csv_text.as_bytes());
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::invalid("matrix CSV is empty"))?
            .map_err(|e| Error::invalid(format!("matrix CSV: {e}")))?;
        let target_vowels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut source_vowels = Vec::new();
        let mut d = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::invalid(format!("matrix CSV: {e}")))?;
            if rec.len() != target_vowels.len() + 1 {
                return Err(Error::invalid("matrix CSV row width differs from header"));
            }
            source_vowels.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x >= 0.0)
                        .ok_or_else(|| Error::invalid(format!("bad matrix entry {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            d.push(row);
        }
        if !(meta.null_cost.is_finite() && meta.null_cost >= 0.0) {
            return Err(Error::invalid("null_cost must be finite and >= 0"));
        }
        Ok(Self {
            source_language: meta.source_language,
            target_language: meta.target_language,
            source_vowels,
            target_vowels,
            d,
            null_cost: meta.null_cost,
            k: meta.k,
            seed: meta.seed,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let meta_text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: MatrixMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::parse(&side, e))?;
        let csv_text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&csv_text, meta)
    }

    pub fn entry(&self, source_vowel: &str, target_vowel: &str) -> Option<f64> {
        let m = self.source_vowels.iter().position(|v| v == source_vowel)?;
        let n = self.target_vowels.iter().position(|v| v == target_vowel)?;
        Some(self.d[m][n])
    }
}
