//! End-to-end wiring: configuration, fixture preflight, the individual
//! stages (pauses, isochrony, vowel map, selection) and report files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audio::read_wav;
use crate::ctc::{ctc_viterbi_align, EmissionMatrix};
use crate::dtw::{candidate_dtw_scores, DtwParams, LocalCost};
use crate::error::{Error, Result};
use crate::format::to_json_string;
use crate::isochrony::{effective_frames, iso_select, IsoEvaluation, IsoParams, SourceContext};
use crate::par::Execution;
use crate::pauses::{
    detect_pauses_rms, frame_energies, refine_pauses, silence_between_words, PauseIntervalSet,
};
use crate::providers::{
    FixtureSet, Manifest, ParaphraseContext, ProviderBundle, StreamPurpose, Utterance,
};
use crate::selection::{
    correlation_diagnostic, ps_comet_select, ps_report, CandidateBuilder, CometParams,
    CorrelationReport, Needs, SelectionMode, SelectionReport,
};
use crate::sequences::{expand_with_durations, mask_non_vowels, ExpandedSequence, PhonemeAlphabet};
use crate::vowel_space::{
    build_vowel_map, NullCostPolicy, VowelDistanceMatrix, VowelMapParams, VowelVectorCorpus,
};
use crate::SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PauseMethod {
    #[default]
    Rms,
    Ctc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PauseParams {
    pub method: PauseMethod,
    /// Mean-square energy below which a frame counts as quiet.
    pub threshold: f64,
    pub min_run: usize,
    pub slope_threshold: f64,
    /// Resample non-22.05 kHz input instead of rejecting it.
    pub allow_resample: bool,
}

impl Default for PauseParams {
    fn default() -> Self {
        Self {
            method: PauseMethod::Rms,
            threshold: 0.01,
            min_run: 18,
            slope_threshold: 0.005,
            allow_resample: false,
        }
    }
}

/// Word-grouped CTC targets: `{"words": [[id, …], …]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtcTargets {
    pub words: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VowelMapConfig {
    pub k: usize,
    pub source_language: String,
    pub target_language: String,
    pub null_cost: NullCostPolicy,
}

impl Default for VowelMapConfig {
    fn default() -> Self {
        let d = VowelMapParams::default();
        Self {
            k: d.k,
            source_language: d.source_language,
            target_language: d.target_language,
            null_cost: d.null_cost,
        }
    }
}

impl VowelMapConfig {
    pub fn params(&self, seed: u64) -> VowelMapParams {
        VowelMapParams {
            k: self.k,
            seed,
            source_language: self.source_language.clone(),
            target_language: self.target_language.clone(),
            null_cost: self.null_cost,
        }
    }
}

/// Everything a run needs. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Overrides the manifest's alphabet entry.
    #[serde(default)]
    pub alphabet: Option<PathBuf>,
    #[serde(default)]
    pub audio: Option<PathBuf>,
    #[serde(default)]
    pub emissions: Option<PathBuf>,
    #[serde(default)]
    pub ctc_targets: Option<PathBuf>,
    /// Precomputed vowel distance matrix (CSV with JSON sidecar).
    #[serde(default)]
    pub matrix: Option<PathBuf>,
    /// Vowel vector corpus used when no matrix is given.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    pub source: Utterance,
    pub target: Utterance,
    #[serde(default)]
    pub pause: PauseParams,
    #[serde(default)]
    pub iso: IsoParams,
    #[serde(default)]
    pub dtw: DtwParams,
    #[serde(default)]
    pub comet: CometParams,
    #[serde(default)]
    pub vowel_map: VowelMapConfig,
    #[serde(default = "default_mode")]
    pub mode: SelectionMode,
    /// Upper bound on candidates drawn for phonetic selection.
    #[serde(default = "default_ps_candidates")]
    pub ps_candidates: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> SelectionMode {
    SelectionMode::Ps
}

fn default_ps_candidates() -> usize {
    60
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Sets `dotted.path` in a JSON document. `raw` is parsed as JSON when it
/// can be, else taken as a string.
pub fn apply_override(doc: &mut Value, dotted: &str, raw: &str) -> Result<()> {
    let value =
        serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {dotted:?}")));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().unwrap()
            }
            _ => {
                return Err(Error::Config(format!(
                    "{dotted}: {part:?} is not inside an object"
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("non-empty key")
}

/// Top-level config keys; the first segment of every override must be one.
pub const TOP_LEVEL_FIELDS: &[&str] = &[
    "manifest",
    "alphabet",
    "audio",
    "emissions",
    "ctc_targets",
    "matrix",
    "corpus",
    "source",
    "target",
    "pause",
    "iso",
    "dtw",
    "comet",
    "vowel_map",
    "mode",
    "ps_candidates",
    "output_dir",
    "seed",
];

/// Keys holding filesystem paths.
pub const PATH_FIELDS: &[&str] = &[
    "manifest",
    "alphabet",
    "audio",
    "emissions",
    "ctc_targets",
    "matrix",
    "corpus",
    "output_dir",
];

/// A config document before typed parsing, so commands that need only a
/// few fields can run without a full config. Paths in the file resolve
/// against its directory; paths given as overrides resolve against `cwd`.
#[derive(Debug, Clone)]
pub struct ConfigDoc {
    pub doc: Value,
    pub base: PathBuf,
}

impl ConfigDoc {
    pub fn load(path: Option<&Path>, overrides: &[(String, String)], cwd: &Path) -> Result<Self> {
        let (mut doc, base) = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let doc: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
                if !doc.is_object() {
                    return Err(Error::Config(format!(
                        "{}: config must be a JSON object",
                        path.display()
                    )));
                }
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (doc, cwd.join(base))
            }
            None => (Value::Object(Default::default()), cwd.to_path_buf()),
        };
        for (key, raw) in overrides {
            let head = key.split('.').next().unwrap_or_default();
            if !TOP_LEVEL_FIELDS.contains(&head) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            if PATH_FIELDS.contains(&key.as_str()) {
                let p = cwd.join(raw);
                apply_override(
                    &mut doc,
                    key,
                    &Value::String(p.display().to_string()).to_string(),
                )?;
            } else {
                apply_override(&mut doc, key, raw)?;
            }
        }
        Ok(Self { doc, base })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.doc.get(key).filter(|v| !v.is_null())
    }

    /// Resolved path field, if present.
    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(self.base.join(s))),
            Some(_) => Err(Error::Config(format!("{key} must be a path string"))),
        }
    }

    /// Typed field, falling back to its default when absent.
    pub fn field<T: serde::de::DeserializeOwned + Default>(&self, key: &str) -> Result<T> {
        match self.get(key) {
            None => Ok(T::default()),
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{key}: {e}")))
            }
        }
    }

    pub fn into_config(self) -> Result<PipelineConfig> {
        PipelineConfig::from_value(self.doc, &self.base)
    }
}

impl PipelineConfig {
    /// Reads `path`, applies dotted overrides, resolves relative paths.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        ConfigDoc::load(Some(path.as_ref()), overrides, &cwd)?.into_config()
    }

    pub fn from_value(doc: Value, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        for p in [
            &mut self.alphabet,
            &mut self.audio,
            &mut self.emissions,
            &mut self.ctc_targets,
            &mut self.matrix,
            &mut self.corpus,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.iso.validate()?;
        self.comet.validate()?;
        if self.ps_candidates == 0 {
            return Err(Error::Config("ps_candidates must be at least 1".into()));
        }
        if self.vowel_map.k == 0 {
            return Err(Error::Config("vowel_map.k must be at least 1".into()));
        }
        if !(self.pause.threshold > 0.0)
            || self.pause.min_run == 0
            || !(self.pause.slope_threshold >= 0.0)
        {
            return Err(Error::Config(
                "pause threshold, min_run and slope_threshold must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn vowel_map_params(&self) -> VowelMapParams {
        self.vowel_map.params(self.seed)
    }
}

/// Loaded alphabet and fixtures.
pub struct Session {
    pub alphabet: PhonemeAlphabet,
    pub fixtures: Arc<FixtureSet>,
    pub providers: ProviderBundle,
    pub exec: Execution,
}

impl Session {
    pub fn open(cfg: &PipelineConfig) -> Result<Self> {
        let manifest = Manifest::load(&cfg.manifest)?;
        let alphabet_path = cfg
            .alphabet
            .clone()
            .or(manifest.alphabet.clone())
            .ok_or_else(|| Error::Config("no alphabet path in config or manifest".into()))?;
        let alphabet = PhonemeAlphabet::load(alphabet_path)?;
        let fixtures = Arc::new(FixtureSet::load(&manifest)?);
        Ok(Self {
            alphabet,
            providers: ProviderBundle::from_fixtures(fixtures.clone()),
            fixtures,
            exec: Execution::default(),
        })
    }

    fn builder(&self) -> CandidateBuilder<'_> {
        CandidateBuilder {
            alphabet: &self.alphabet,
            providers: &self.providers,
        }
    }
}

fn stream(
    fixtures: &FixtureSet,
    source: &Utterance,
    purpose: StreamPurpose,
    cap: usize,
) -> Vec<Utterance> {
    let mut prior: Vec<Utterance> = Vec::new();
    while prior.len() < cap {
        let ctx = ParaphraseContext {
            source,
            purpose,
            prior: &prior,
        };
        match crate::providers::ParaphraseProvider::next_paraphrase(fixtures, &ctx) {
            Some(u) => prior.push(u),
            None => break,
        }
    }
    prior
}

/// Every fixture entry a run of `stages` would look up but not find, as
/// sorted `"<table>: <utterance>"` strings. Performs no computation.
pub fn fixture_misses(cfg: &PipelineConfig, session: &Session, stages: Stages) -> Vec<String> {
    let fx = &session.fixtures;
    let mut misses: Vec<String> = Vec::new();
    fn need(misses: &mut Vec<String>, ok: bool, what: &str, label: String) {
        if !ok {
            misses.push(format!("{what}: {label}"));
        }
    }

    if stages.iso {
        let candidates: Vec<Utterance> = std::iter::once(cfg.target.clone())
            .chain(stream(
                fx,
                &cfg.source,
                StreamPurpose::Iso,
                cfg.iso.max_iterations,
            ))
            .collect();
        need(
            &mut misses,
            fx.has_phonemes(&cfg.source),
            "phonemes",
            cfg.source.label(),
        );
        need(
            &mut misses,
            fx.has_duration(&cfg.source),
            "durations",
            cfg.source.label(),
        );
        need(
            &mut misses,
            fx.has_embedding(&cfg.source),
            "embeddings",
            cfg.source.label(),
        );
        for u in &candidates {
            need(&mut misses, fx.has_phonemes(u), "phonemes", u.label());
            need(&mut misses, fx.has_duration(u), "durations", u.label());
            need(&mut misses, fx.has_embedding(u), "embeddings", u.label());
        }
    }
    if stages.select {
        need(
            &mut misses,
            fx.has_phonemes(&cfg.source),
            "phonemes",
            cfg.source.label(),
        );
        need(
            &mut misses,
            fx.has_duration(&cfg.source),
            "durations",
            cfg.source.label(),
        );
        let pool = stream(fx, &cfg.source, StreamPurpose::Ps, cfg.ps_candidates);
        if pool.is_empty() {
            misses.push(format!("paraphrases: {}", cfg.source.label()));
        }
        for u in &pool {
            need(&mut misses, fx.has_phonemes(u), "phonemes", u.label());
            need(&mut misses, fx.has_duration(u), "durations", u.label());
            if cfg.mode == SelectionMode::PsComet {
                need(
                    &mut misses,
                    fx.has_semantic_pair(&cfg.source, u),
                    "semantic",
                    format!("{} -> {}", cfg.source.label(), u.label()),
                );
            }
        }
    }
    misses.sort();
    misses.dedup();
    misses
}

/// Fails with every fixture miss at once (see [`fixture_misses`]), then
/// checks that the input files the stages read exist.
pub fn preflight(cfg: &PipelineConfig, session: &Session, stages: Stages) -> Result<()> {
    if stages.select && cfg.mode == SelectionMode::PsComet && !session.fixtures.has_semantic() {
        return Err(Error::FixtureMiss {
            provider: "semantic",
            key: "ps-comet mode requires a semantic fixture file".into(),
        });
    }
    let misses = fixture_misses(cfg, session, stages);
    if !misses.is_empty() {
        return Err(Error::FixtureMiss {
            provider: "preflight",
            key: format!(
                "{} missing fixture entries: {}",
                misses.len(),
                misses.join("; ")
            ),
        });
    }

    let require = |p: &Option<PathBuf>, what: &str| -> Result<()> {
        match p {
            Some(p) if p.exists() => Ok(()),
            Some(p) => Err(Error::Config(format!(
                "{what} {} does not exist",
                p.display()
            ))),
            None => Err(Error::Config(format!("{what} path is required"))),
        }
    };
    if stages.pauses {
        match cfg.pause.method {
            PauseMethod::Rms => require(&cfg.audio, "audio")?,
            PauseMethod::Ctc => {
                require(&cfg.emissions, "emissions")?;
                require(&cfg.ctc_targets, "ctc_targets")?;
            }
        }
    }
    if stages.select {
        if cfg.matrix.is_some() {
            require(&cfg.matrix, "matrix")?;
        } else {
            require(&cfg.corpus, "corpus")?;
        }
    }
    Ok(())
}

/// Which stages a command runs; preflight checks only what they need.
#[derive(Debug, Clone, Copy)]
pub struct Stages {
    pub pauses: bool,
    pub iso: bool,
    pub select: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        pauses: true,
        iso: true,
        select: true,
    };
    pub const ISO: Stages = Stages {
        pauses: true,
        iso: true,
        select: false,
    };
    pub const SELECT: Stages = Stages {
        pauses: false,
        iso: false,
        select: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PauseReport {
    pub method: PauseMethod,
    pub total_frames: usize,
    pub effective_frames: usize,
    pub intervals: PauseIntervalSet,
}

/// Standalone pause detection inputs.
#[derive(Debug, Clone)]
pub enum PauseSource<'a> {
    Audio(&'a Path),
    Ctc {
        emissions: &'a Path,
        targets: &'a Path,
    },
}

pub fn detect_pauses(source: PauseSource<'_>, params: &PauseParams) -> Result<PauseReport> {
    let intervals = match source {
        PauseSource::Audio(path) => {
            let mut audio = read_wav(path)?;
            if audio.sample_rate != SAMPLE_RATE {
                if !params.allow_resample {
                    return Err(Error::RateMismatch {
                        found: audio.sample_rate,
                        expected: SAMPLE_RATE,
                    });
                }
                audio = audio.resample_linear(SAMPLE_RATE)?;
            }
            let energies = frame_energies(&audio)?;
            let raw = detect_pauses_rms(&energies, params.threshold, params.min_run)?;
            refine_pauses(&energies, &raw, params.slope_threshold, params.min_run)?
        }
        PauseSource::Ctc { emissions, targets } => {
            let em = EmissionMatrix::load(emissions)?;
            let text = std::fs::read_to_string(targets).map_err(|e| Error::io(targets, e))?;
            let t: CtcTargets =
                serde_json::from_str(&text).map_err(|e| Error::parse(targets, e))?;
            let flat: Vec<usize> = t.words.concat();
            let lens: Vec<usize> = t.words.iter().map(Vec::len).collect();
            let aligned = ctc_viterbi_align(&em, &flat)?;
            silence_between_words(&aligned.group_spans(&lens)?, em.frames())?
        }
    };
    let total_frames = intervals.total_frames();
    Ok(PauseReport {
        method: params.method,
        total_frames,
        effective_frames: effective_frames(total_frames, &intervals)?,
        intervals,
    })
}

pub fn pauses_stage(cfg: &PipelineConfig) -> Result<PauseReport> {
    let missing =
        |what: &str| Error::Config(format!("{what} path is required for pause detection"));
    let source = match cfg.pause.method {
        PauseMethod::Rms => {
            PauseSource::Audio(cfg.audio.as_deref().ok_or_else(|| missing("audio"))?)
        }
        PauseMethod::Ctc => PauseSource::Ctc {
            emissions: cfg
                .emissions
                .as_deref()
                .ok_or_else(|| missing("emissions"))?,
            targets: cfg
                .ctc_targets
                .as_deref()
                .ok_or_else(|| missing("ctc_targets"))?,
        },
    };
    detect_pauses(source, &cfg.pause)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoReport {
    pub total_frames: usize,
    pub effective_frames: usize,
    pub source_predicted_frames: f64,
    pub speaking_rate: f64,
    pub params: IsoParams,
    pub accepted: bool,
    pub selected: IsoEvaluation,
    pub trail: Vec<IsoEvaluation>,
}

pub fn iso_stage(
    cfg: &PipelineConfig,
    session: &Session,
    pauses: &PauseReport,
) -> Result<IsoReport> {
    let builder = session.builder();
    let src = builder.build(
        0,
        &cfg.source,
        Needs {
            embedding: true,
            semantic: false,
        },
        None,
    )?;
    let context = SourceContext {
        utterance: cfg.source.clone(),
        effective_frames: pauses.effective_frames,
        embedding: src.embedding.clone().expect("requested"),
        predicted_frames: src.predicted_frames,
    };
    let speaking_rate = context.rate()?;
    let sel = iso_select(
        &context,
        &cfg.target,
        session.providers.paraphrases.as_ref(),
        |i, u| {
            builder.build(
                i,
                u,
                Needs {
                    embedding: true,
                    semantic: false,
                },
                None,
            )
        },
        &cfg.iso,
    )?;
    Ok(IsoReport {
        total_frames: pauses.total_frames,
        effective_frames: pauses.effective_frames,
        source_predicted_frames: src.predicted_frames,
        speaking_rate,
        params: cfg.iso,
        accepted: sel.accepted,
        selected: sel.evaluation,
        trail: sel.trail,
    })
}

pub fn vowel_map_stage(cfg: &PipelineConfig, exec: Execution) -> Result<VowelDistanceMatrix> {
    match (&cfg.matrix, &cfg.corpus) {
        (Some(m), _) => VowelDistanceMatrix::load(m),
        (None, Some(c)) => {
            build_vowel_map(&VowelVectorCorpus::load(c)?, &cfg.vowel_map_params(), exec)
        }
        (None, None) => Err(Error::Config("either matrix or corpus is required".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateSummary {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub frames: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectOutput {
    pub source_text: String,
    pub source_frames: usize,
    pub dtw: DtwParams,
    pub candidates: Vec<CandidateSummary>,
    pub chosen: CandidateSummary,
    pub report: SelectionReport,
}

/// Expanded, vowel-masked frames for a phonetic comparison.
pub fn masked_frames(
    candidate: &crate::selection::Candidate,
    alphabet: &PhonemeAlphabet,
) -> Result<ExpandedSequence> {
    mask_non_vowels(&expand_with_durations(&candidate.sequence), alphabet)
}

pub fn select_stage(
    cfg: &PipelineConfig,
    session: &Session,
    matrix: &VowelDistanceMatrix,
) -> Result<SelectOutput> {
    let builder = session.builder();
    let alphabet = &session.alphabet;
    let cost = LocalCost::bind(matrix, alphabet)?;
    let comet = cfg.mode == SelectionMode::PsComet;

    let source = builder.build(0, &cfg.source, Needs::default(), None)?;
    let source_frames = masked_frames(&source, alphabet)?;
    if source_frames.is_empty() {
        return Err(Error::invalid("source expands to zero frames"));
    }
    let pool = stream(
        &session.fixtures,
        &cfg.source,
        StreamPurpose::Ps,
        cfg.ps_candidates,
    );
    if pool.is_empty() {
        return Err(Error::FixtureMiss {
            provider: "paraphrases",
            key: format!("no ps stream for {}", cfg.source.label()),
        });
    }
    let needs = Needs {
        embedding: false,
        semantic: comet,
    };
    let candidates = pool
        .iter()
        .enumerate()
        .map(|(i, u)| {
            builder
                .build(i, u, needs, Some(&cfg.source))
                .map_err(|e| Error::Candidate {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = candidates
        .iter()
        .map(|c| masked_frames(c, alphabet))
        .collect::<Result<Vec<_>>>()?;
    let scores = candidate_dtw_scores(&source_frames, &frames, &cost, &cfg.dtw, session.exec)?;

    let report = if comet {
        let semantic: Vec<f64> = candidates
            .iter()
            .map(|c| c.semantic_score.expect("requested"))
            .collect();
        ps_comet_select(&scores, &semantic, &cfg.comet)?.1
    } else {
        ps_report(&scores)?
    };
    let summaries: Vec<CandidateSummary> = candidates
        .iter()
        .zip(&frames)
        .map(|(c, f)| CandidateSummary {
            index: c.index,
            id: c.utterance.id.clone(),
            text: c.utterance.text.clone(),
            frames: f.len(),
        })
        .collect();
    Ok(SelectOutput {
        source_text: cfg.source.text.clone(),
        source_frames: source_frames.len(),
        dtw: cfg.dtw,
        chosen: summaries[report.chosen_index].clone(),
        candidates: summaries,
        report,
    })
}

/// DTW-vs-semantic correlation across the phonetic candidate pool. Forces
/// semantic scoring regardless of the configured mode.
pub fn correlation_stage(
    cfg: &PipelineConfig,
    session: &Session,
    matrix: &VowelDistanceMatrix,
) -> Result<CorrelationReport> {
    let mut cfg = cfg.clone();
    cfg.mode = SelectionMode::PsComet;
    let out = select_stage(&cfg, session, matrix)?;
    let dtw: Vec<f64> = out.report.rows.iter().map(|r| r.dtw_raw).collect();
    let sem: Vec<f64> = out
        .report
        .rows
        .iter()
        .map(|r| r.semantic_score.expect("ps-comet rows"))
        .collect();
    correlation_diagnostic(&dtw, &sem)
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub mode: SelectionMode,
    pub seed: u64,
    pub total_frames: usize,
    pub effective_frames: usize,
    pub pause_count: usize,
    pub iso_accepted: bool,
    pub iso_selected_index: usize,
    pub iso_selected_text: String,
    pub iso_evaluations: usize,
    pub ps_chosen_index: usize,
    pub ps_chosen_text: String,
    pub files: Vec<String>,
}

/// Runs preflight, then pauses → isochrony → vowel map → selection, writing
/// each stage's output under `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, exec: Execution) -> Result<Bundle> {
    let mut session = staged("load", Session::open(cfg))?;
    session.exec = exec;
    staged("preflight", preflight(cfg, &session, Stages::ALL))?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let pauses = staged("pauses", pauses_stage(cfg))?;
    write(
        dir,
        "pauses.json",
        &to_json_string(&pauses.intervals.to_json_value())?,
    )?;
    files.push("pauses.json".to_string());

    let iso = staged("iso", iso_stage(cfg, &session, &pauses))?;
    write(dir, "iso.json", &to_json_string(&iso)?)?;
    files.push("iso.json".to_string());

    let matrix = staged("vowel-map", vowel_map_stage(cfg, session.exec))?;
    if cfg.matrix.is_none() {
        staged("vowel-map", matrix.save(dir.join("vowel_map.csv")))?;
        files.push("vowel_map.csv".to_string());
        files.push("vowel_map.json".to_string());
    }

    let sel = staged("select", select_stage(cfg, &session, &matrix))?;
    write(dir, "selection.json", &to_json_string(&sel)?)?;
    files.push("selection.json".to_string());

    let bundle = Bundle {
        mode: cfg.mode,
        seed: cfg.seed,
        total_frames: pauses.total_frames,
        effective_frames: pauses.effective_frames,
        pause_count: pauses.intervals.len(),
        iso_accepted: iso.accepted,
        iso_selected_index: iso.selected.candidate_index,
        iso_selected_text: iso.selected.text.clone(),
        iso_evaluations: iso.trail.len(),
        ps_chosen_index: sel.report.chosen_index,
        ps_chosen_text: sel.chosen.text.clone(),
        files,
    };
    write(dir, "bundle.json", &to_json_string(&bundle)?)?;
    Ok(bundle)
}
