//! Regenerates the demo fixture corpus under `fixtures/demo` (or the
//! directory given as the first argument).
//!
//! ```text
//! cargo run -p dubsync-core --example make_demo_fixtures -- fixtures/demo
//! ```

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dubsync_core::audio::{write_wav_pcm16, AudioBuffer};
use dubsync_core::ctc::EmissionMatrix;
use dubsync_core::pipeline::{self, PipelineConfig, Session};
use dubsync_core::providers::{
    DurationRecord, DurationUnit, EmbeddingRecord, ParaphraseRecord, PhonemeRecord, SemanticRecord,
    StreamPurpose, Utterance,
};
use dubsync_core::selection::SelectionMode;
use dubsync_core::sequences::{PhonemeAlphabet, PhonemeEntry, PhonemeId};
use dubsync_core::vowel_space::{build_vowel_map, VowelVectorCorpus};
use dubsync_core::{Execution, HOP_SIZE, SAMPLE_RATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

const KO_VOWELS: [&str; 5] = ["a", "ʌ", "o", "u", "i"];
const KO_CONSONANTS: [&str; 5] = ["k", "n", "s", "m", "g"];
const EN_VOWELS: [&str; 5] = ["ɑ", "ʌ", "oʊ", "u", "i"];
const EN_CONSONANTS: [&str; 5] = ["t", "n", "s", "m", "d"];

const SEED: u64 = 7;
const EMBED_DIM: usize = 8;
const ISO_STREAM_LEN: usize = 60;

fn alphabet() -> PhonemeAlphabet {
    let mut entries = vec![
        entry(0, "<b>", "*", false),
        entry(1, "<null>", "*", false),
        entry(2, " ", "*", false),
    ];
    for (lang, vowels, consonants) in [
        ("ko", KO_VOWELS, KO_CONSONANTS),
        ("en", EN_VOWELS, EN_CONSONANTS),
    ] {
        for v in vowels {
            entries.push(entry(entries.len() as u32, v, lang, true));
        }
        for c in consonants {
            entries.push(entry(entries.len() as u32, c, lang, false));
        }
    }
    PhonemeAlphabet::new(entries, 0, 1).expect("valid alphabet")
}

fn entry(id: u32, symbol: &str, language: &str, is_vowel: bool) -> PhonemeEntry {
    PhonemeEntry {
        id,
        symbol: symbol.into(),
        language: language.into(),
        is_vowel,
    }
}

/// Rough Hangul decomposition onto the five-vowel inventory.
fn phonemize_ko(text: &str, ab: &PhonemeAlphabet) -> Vec<PhonemeId> {
    let id = |s: &str| ab.lookup("ko", s).expect("ko symbol");
    let space = ab.lookup("*", " ").unwrap();
    let mut out = Vec::new();
    for ch in text.chars() {
        let c = ch as u32;
        if ch == ' ' {
            out.push(space);
            continue;
        }
        if !(0xAC00..=0xD7A3).contains(&c) {
            continue;
        }
        let s = c - 0xAC00;
        let (initial, medial, fin) = (s / 588, (s % 588) / 28, s % 28);
        if initial != 11 {
            out.push(id(KO_CONSONANTS[initial as usize % 5]));
        }
        let v = match medial {
            0..=3 | 9 | 10 => "a",
            4..=7 | 14 | 15 => "ʌ",
            8 | 11 | 12 => "o",
            13 | 16..=18 => "u",
            _ => "i",
        };
        out.push(id(v));
        if fin != 0 {
            out.push(id(KO_CONSONANTS[fin as usize % 5]));
        }
    }
    out
}

fn phonemize_en(text: &str, ab: &PhonemeAlphabet) -> Vec<PhonemeId> {
    let id = |s: &str| ab.lookup("en", s).expect("en symbol");
    let space = ab.lookup("*", " ").unwrap();
    let mut out: Vec<PhonemeId> = Vec::new();
    for ch in text.to_lowercase().chars() {
        let p = match ch {
            ' ' => space,
            'a' => id("ɑ"),
            'e' => id("ʌ"),
            'o' => id("oʊ"),
            'u' => id("u"),
            'i' | 'y' => id("i"),
            c if c.is_ascii_alphabetic() => id(EN_CONSONANTS[c as usize % 5]),
            _ => continue,
        };
        if out.last() == Some(&p) && p != space {
            continue;
        }
        out.push(p);
    }
    out
}

/// Per-token frame counts for `[blank, p1, blank, …]` summing to `total`.
fn durations(
    phonemes: &[PhonemeId],
    ab: &PhonemeAlphabet,
    total: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    let mut d = vec![rng.random_range(0..=2)];
    for &p in phonemes {
        let f = if ab.is_vowel(p).unwrap() {
            rng.random_range(6..=10)
        } else if ab.get(p).unwrap().symbol == " " {
            rng.random_range(2..=3)
        } else {
            rng.random_range(3..=5)
        };
        d.push(f);
        d.push(rng.random_range(0..=2));
    }
    loop {
        let sum: u32 = d.iter().sum();
        if sum == total {
            return d;
        }
        let i = 2 * rng.random_range(0..phonemes.len()) + 1;
        if sum < total {
            d[i] += 1;
        } else if d[i] > 1 {
            d[i] -= 1;
        } else if d.iter().all(|&x| x <= 1) {
            panic!("cannot shrink to {total} frames");
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..EMBED_DIM)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    normalize(&mut v);
    v
}

/// A vector whose cosine with the unit vector `u` is `sim`.
fn embedding_with_similarity(u: &[f64], sim: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = random_unit(rng);
    let dot: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
    w.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
    normalize(&mut w);
    let scale = rng.random_range(0.5..2.0);
    let perp = (1.0 - sim * sim).sqrt();
    u.iter()
        .zip(&w)
        .map(|(a, b)| scale * (sim * a + perp * b))
        .collect()
}

fn jsonl<T: Serialize>(path: &Path, rows: &[T]) {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn iso_texts() -> Vec<String> {
    let subjects = [
        "I need to",
        "I have to",
        "I must",
        "I should",
        "I'd better",
        "I've got to",
    ];
    let verbs = [
        "go home",
        "head home",
        "get home",
        "be home",
        "leave for home",
    ];
    let times = ["early today", "early", "soon today", "early tonight"];
    let mut out = Vec::new();
    for t in times {
        for v in verbs {
            for s in subjects {
                out.push(format!("{s} {v} {t}"));
            }
        }
    }
    out.truncate(ISO_STREAM_LEN);
    out
}

const PS_TEXTS: [&str; 8] = [
    "Today I go home early",
    "I am off home early today",
    "Home early for me today",
    "Going home early today",
    "Early home today for me",
    "Today I'm heading home early",
    "I leave early to go home today",
    "Tonight I'm going back home early so I can rest",
];

struct Speech {
    /// Sample ranges carrying voiced signal.
    regions: Vec<(usize, usize)>,
    total: usize,
}

fn synthesize(rng: &mut ChaCha8Rng) -> (AudioBuffer, Speech) {
    let sr = SAMPLE_RATE as f64;
    let at = |s: f64| (s * sr).round() as usize;
    let total = at(3.0);
    // A short 0.12 s gap inside the first phrase stays below the minimum run.
    let regions = vec![
        (at(0.15), at(0.70)),
        (at(0.82), at(1.25)),
        (at(1.85), at(2.85)),
    ];
    let mut samples = vec![0f32; total];
    for x in samples.iter_mut() {
        *x = rng.random_range(-0.002..0.002);
    }
    for &(a, b) in &regions {
        for (i, x) in samples[a..b].iter_mut().enumerate() {
            let t = i as f64 / sr;
            let env = 0.6 + 0.4 * (2.0 * PI * 4.0 * t).sin().abs();
            let tone = 0.5 * (2.0 * PI * 180.0 * t).sin()
                + 0.3 * (2.0 * PI * 360.0 * t).sin()
                + 0.2 * (2.0 * PI * 720.0 * t).sin();
            *x += (0.45 * env * tone) as f32;
        }
    }
    (
        AudioBuffer::new(samples, SAMPLE_RATE).unwrap(),
        Speech { regions, total },
    )
}

/// Log-probabilities favouring a per-frame label track.
fn emissions(track: &[usize], vocab: usize) -> EmissionMatrix {
    let hi = 0.85f64;
    let lo = (1.0 - hi) / (vocab - 1) as f64;
    let rows = track
        .iter()
        .map(|&l| {
            (0..vocab)
                .map(|v| if v == l { hi.ln() } else { lo.ln() })
                .collect()
        })
        .collect();
    EmissionMatrix::new(rows, 0).unwrap()
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/demo".into()),
    );
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let ab = alphabet();
    std::fs::write(dir.join("alphabet.json"), ab.to_json()).unwrap();

    // Vowel corpus: twelve 4-D mean vectors around a prototype per vowel.
    let protos: [(&str, &str, [f64; 4]); 10] = [
        ("ko", "a", [0.80, 0.30, 0.50, 0.60]),
        ("ko", "ʌ", [0.60, 0.20, 0.50, 0.50]),
        ("ko", "o", [0.45, 0.10, 0.45, 0.55]),
        ("ko", "u", [0.30, 0.15, 0.40, 0.40]),
        ("ko", "i", [0.25, 0.90, 0.70, 0.40]),
        ("en", "ɑ", [0.82, 0.28, 0.52, 0.62]),
        ("en", "ʌ", [0.58, 0.35, 0.50, 0.50]),
        ("en", "oʊ", [0.50, 0.12, 0.42, 0.55]),
        ("en", "u", [0.28, 0.20, 0.38, 0.42]),
        ("en", "i", [0.22, 0.92, 0.72, 0.38]),
    ];
    let mut corpus = Vec::new();
    for (lang, vowel, p) in protos {
        for _ in 0..12 {
            let v: Vec<f64> = p
                .iter()
                .map(|x| x + rng.random_range(-0.06..0.06))
                .collect();
            corpus.push(json!({"language": lang, "vowel": vowel, "vector": v}));
        }
    }
    jsonl(&dir.join("vowel_corpus.jsonl"), &corpus);

    // Source audio with one authored pause between the two phrases.
    let (audio, speech) = synthesize(&mut rng);
    write_wav_pcm16(dir.join("source.wav"), &audio).unwrap();
    let report = pipeline::detect_pauses(
        pipeline::PauseSource::Audio(&dir.join("source.wav")),
        &Default::default(),
    )
    .unwrap();
    let k_eff = report.effective_frames as u32;
    eprintln!(
        "K = {}, K' = {k_eff}, pauses = {:?}",
        report.total_frames,
        report.intervals.intervals()
    );

    let source = Utterance::new("오늘은 집에 일찍 가야 해요", "ko");
    let source_ph = phonemize_ko(&source.text, &ab);

    // CTC emissions over the same frame grid: first three words in the first
    // phrase, the last two after the pause.
    let words: Vec<Vec<usize>> = source_ph
        .split(|&p| p == 2)
        .map(|w| w.iter().map(|&p| p as usize).collect())
        .collect();
    let frames = report.total_frames;
    let frame_of = |sample: usize| sample / HOP_SIZE;
    let mut track = vec![0usize; frames];
    let phrases = [
        (
            frame_of(speech.regions[0].0),
            frame_of(speech.regions[1].1),
            &words[..3],
        ),
        (
            frame_of(speech.regions[2].0),
            frame_of(speech.regions[2].1),
            &words[3..],
        ),
    ];
    for (a, b, ws) in phrases {
        let labels: Vec<usize> = ws.concat();
        let step = (b - a) / labels.len();
        assert!(step >= 2, "phrase too short for its labels");
        for (i, &l) in labels.iter().enumerate() {
            let f = a + i * step;
            // Repeated labels need a blank frame between them.
            let len = if labels.get(i + 1) == Some(&l) {
                step - 1
            } else {
                step
            };
            track[f..f + len].iter_mut().for_each(|x| *x = l);
        }
    }
    assert!(speech.total / HOP_SIZE >= frames);
    std::fs::write(
        dir.join("emissions.json"),
        emissions(&track, ab.len()).to_json_string(),
    )
    .unwrap();
    std::fs::write(
        dir.join("ctc_targets.json"),
        serde_json::to_string(&json!({ "words": words })).unwrap() + "\n",
    )
    .unwrap();

    let mut phonemes = Vec::new();
    let mut durs = Vec::new();
    let mut embeds = Vec::new();
    let mut paras = Vec::new();
    let mut seen = HashSet::new();
    let mut add = |u: &Utterance, total: u32, emb: Option<Vec<f64>>, rng: &mut ChaCha8Rng| {
        assert!(seen.insert(u.key()), "duplicate text {}", u.text);
        let ph = if u.language == "ko" {
            phonemize_ko(&u.text, &ab)
        } else {
            phonemize_en(&u.text, &ab)
        };
        let d = durations(&ph, &ab, total, rng);
        phonemes.push(PhonemeRecord {
            id: None,
            text: u.text.clone(),
            language: u.language.clone(),
            phonemes: ph,
        });
        durs.push(DurationRecord {
            id: None,
            text: u.text.clone(),
            language: u.language.clone(),
            per_token: d.into_iter().map(f64::from).collect(),
            unit: DurationUnit::Frames,
            total: None,
        });
        if let Some(vector) = emb {
            embeds.push(EmbeddingRecord {
                id: None,
                text: u.text.clone(),
                language: u.language.clone(),
                vector,
            });
        }
    };

    // Source predicted duration equals K', so the speaking rate is exactly 1
    // and a candidate's scaled duration is its own frame count.
    let src_emb = random_unit(&mut rng);
    add(&source, k_eff, Some(src_emb.clone()), &mut rng);

    let target = Utterance::new(
        "I have to go home early today because I am very tired",
        "en",
    );
    let emb = embedding_with_similarity(&src_emb, 0.93, &mut rng);
    add(&target, k_eff + 45, Some(emb), &mut rng);

    // (frame offset from K', similarity) for the head of the ISO stream; the
    // sixth rewrite is the first to pass both gates.
    let head: [(i32, f64); 6] = [
        (-38, 0.88),
        (5, 0.62),
        (27, 0.9),
        (-30, 0.8),
        (-3, 0.7499),
        (12, 0.86),
    ];
    for (i, text) in iso_texts().into_iter().enumerate() {
        let (off, sim) = match head.get(i) {
            Some(&h) => h,
            None => (rng.random_range(-60..=60), rng.random_range(0.4..0.95)),
        };
        let u = Utterance::new(text, "en");
        let emb = embedding_with_similarity(&src_emb, sim, &mut rng);
        add(&u, (k_eff as i32 + off) as u32, Some(emb), &mut rng);
        paras.push(ParaphraseRecord {
            source_text: source.text.clone(),
            source_language: source.language.clone(),
            purpose: StreamPurpose::Iso,
            id: Some(format!("iso-{i:02}")),
            text: u.text,
            language: u.language,
        });
    }
    for (i, text) in PS_TEXTS.iter().enumerate() {
        let u = Utterance::new(*text, "en");
        let off = if i == PS_TEXTS.len() - 1 {
            70
        } else {
            rng.random_range(-20..=20)
        };
        add(&u, (k_eff as i32 + off) as u32, None, &mut rng);
        paras.push(ParaphraseRecord {
            source_text: source.text.clone(),
            source_language: source.language.clone(),
            purpose: StreamPurpose::Ps,
            id: Some(format!("ps-{i}")),
            text: u.text,
            language: u.language,
        });
    }
    // Ids live on the stream records only; fixture keys ignore them.
    jsonl(&dir.join("phonemes.jsonl"), &phonemes);
    jsonl(&dir.join("durations.jsonl"), &durs);
    jsonl(&dir.join("embeddings.jsonl"), &embeds);
    jsonl(&dir.join("paraphrases.jsonl"), &paras);
    jsonl::<SemanticRecord>(&dir.join("semantic.jsonl"), &[]);

    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&json!({
            "alphabet": "alphabet.json",
            "durations": "durations.jsonl",
            "embeddings": "embeddings.jsonl",
            "semantic": "semantic.jsonl",
            "paraphrases": "paraphrases.jsonl",
            "phonemes": "phonemes.jsonl",
        }))
        .unwrap()
            + "\n",
    )
    .unwrap();
    let config = json!({
        "manifest": "manifest.json",
        "audio": "source.wav",
        "emissions": "emissions.json",
        "ctc_targets": "ctc_targets.json",
        "corpus": "vowel_corpus.jsonl",
        "source": {"text": source.text, "language": "ko"},
        "target": {"text": target.text, "language": "en"},
        "pause": {"method": "rms", "threshold": 0.01, "min_run": 18, "slope_threshold": 0.005},
        "iso": {"window_frames": 26, "sim_threshold": 0.75, "max_iterations": 60},
        "dtw": {"band_radius": "auto"},
        "comet": {"alpha": 1.6, "beta": 0.4, "dtw_term": "normalized-inverted"},
        "vowel_map": {"k": 5, "source_language": "ko", "target_language": "en", "null_cost": "global-mean"},
        "mode": "ps",
        "ps_candidates": 60,
        "output_dir": "out",
        "seed": SEED,
    });
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).unwrap() + "\n",
    )
    .unwrap();

    let cfg = PipelineConfig::load(&config_path, &[]).unwrap();
    let matrix = build_vowel_map(
        &VowelVectorCorpus::load(dir.join("vowel_corpus.jsonl")).unwrap(),
        &cfg.vowel_map_params(),
        Execution::Sequential,
    )
    .unwrap();
    matrix.save(dir.join("vowel_map.csv")).unwrap();

    // Semantic scores: the DTW winner gets a poor score and the runner-up a
    // strong one, so the two selection modes disagree.
    let session = Session::open(&cfg).unwrap();
    let ps = pipeline::select_stage(&cfg, &session, &matrix).unwrap();
    let rows = &ps.report.rows;
    let best = ps.report.chosen_index;
    let runner = (0..rows.len())
        .filter(|&i| i != best)
        .max_by(|&a, &b| {
            rows[a]
                .dtw_normalized_inverted
                .total_cmp(&rows[b].dtw_normalized_inverted)
        })
        .unwrap();
    let sem: Vec<SemanticRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, _)| SemanticRecord {
            source_text: source.text.clone(),
            source_language: source.language.clone(),
            text: PS_TEXTS[i].into(),
            language: "en".into(),
            score: if i == best {
                0.2
            } else if i == runner {
                0.97
            } else {
                (rng.random_range(0.4..0.85f64) * 100.0).round() / 100.0
            },
        })
        .collect();
    jsonl(&dir.join("semantic.jsonl"), &sem);

    let mut comet_cfg = cfg.clone();
    comet_cfg.mode = SelectionMode::PsComet;
    let session = Session::open(&comet_cfg).unwrap();
    let comet = pipeline::select_stage(&comet_cfg, &session, &matrix).unwrap();
    assert_ne!(
        comet.report.chosen_index, best,
        "fixture must make ps and ps-comet disagree"
    );

    let iso = pipeline::iso_stage(&cfg, &session, &report).unwrap();
    assert!(
        iso.accepted && iso.selected.candidate_index == 6,
        "ISO should accept the sixth rewrite"
    );

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "ps chose {best}, ps-comet chose {}",
        comet.report.chosen_index
    );
    let _ = writeln!(
        summary,
        "iso accepted candidate {} after {} evaluations",
        iso.selected.candidate_index,
        iso.trail.len()
    );
    eprint!("{summary}");
}
