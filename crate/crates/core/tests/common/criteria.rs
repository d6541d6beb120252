//! The nine acceptance criteria. Each returns a one-line summary on success.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use dubsync_core::ctc::{collapse, ctc_viterbi_align, EmissionMatrix};
use dubsync_core::dtw::{dtw, local_cost, BandRadius, DtwParams, LocalCost};
use dubsync_core::isochrony::{
    cosine_similarity, effective_frames, evaluate, iso_accept, iso_select, scaled_duration,
    speaking_rate, IsoParams, SourceContext,
};
use dubsync_core::pauses::{detect_pauses_rms, EnergySeries, PauseInterval, PauseIntervalSet};
use dubsync_core::pipeline::{
    detect_pauses, run_pipeline, PauseParams, PauseSource, PipelineConfig,
};
use dubsync_core::providers::Utterance;
use dubsync_core::selection::{correlation_diagnostic, ps_comet_select, ps_select, CometParams};
use dubsync_core::sequences::ExpandedSequence;
use dubsync_core::vowel_space::{build_vowel_map, VowelMapParams, VowelVectorCorpus};
use dubsync_core::{format, Error, Execution};
use rand::Rng;

use super::invariants::{iso_candidate, ListStream};
use super::*;

pub type Criterion = fn() -> Result<String, String>;

pub fn all() -> Vec<(u32, &'static str, Criterion)> {
    vec![
        (1, "DTW oracle equivalence", dtw_oracle),
        (2, "CTC Viterbi oracle equivalence", ctc_oracle),
        (3, "pause detection on synthesized audio", pause_detection),
        (4, "ISO gate fidelity", iso_gates),
        (5, "vowel map correctness", vowel_map),
        (6, "selection arithmetic", selection_arithmetic),
        (7, "correlation diagnostic", correlation),
        (8, "end-to-end determinism", end_to_end),
        (9, "invariant suite", invariant_suite),
    ]
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<T>(r: dubsync_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1 ---------------------------------------------------------------------------

pub fn dtw_oracle() -> Result<String, String> {
    let started = Instant::now();
    let mut r = rng(1);
    let mut infeasible = 0;
    for case in 0..200 {
        // Ids 0..4 are vowels, 4 is null; costs come from the table only.
        let mut cost = LocalCost::undefined(5, 4);
        for x in 0..4 {
            for y in 0..4 {
                cost.set(x, y, r.random_range(0.0..10.0));
            }
        }
        let k = r.random_range(1..=8);
        let l = r.random_range(1..=8);
        let xs = ExpandedSequence::new((0..k).map(|_| r.random_range(0..4)).collect());
        let ys = ExpandedSequence::new((0..l).map(|_| r.random_range(0..4)).collect());
        let band = match r.random_range(0..3) {
            0 => BandRadius::Unbounded,
            1 => BandRadius::Auto,
            _ => BandRadius::Frames(r.random_range(0..4)),
        };
        let radius = band.resolve(k, l);
        let c =
            |i: usize, j: usize| local_cost(xs.frame_ids()[i], ys.frame_ids()[j], &cost).unwrap();
        let oracle = brute_dtw(k, l, &c, radius);
        match (
            dtw(&xs, &ys, &cost, &DtwParams { band_radius: band }),
            oracle,
        ) {
            (Ok(got), Some(want)) => ensure(rel_close(got.distance, want, 1e-12), || {
                format!("case {case}: dtw {} vs brute force {want}", got.distance)
            })?,
            (Err(Error::BandInfeasible(_)), None) => infeasible += 1,
            (got, want) => return Err(format!("case {case}: dtw {got:?} vs brute force {want:?}")),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "200 instances ({infeasible} band-infeasible on both sides), {secs:.3} s"
    ))
}

// 2 ---------------------------------------------------------------------------

/// Every target sequence of length `0..=max_len` over `labels`.
fn sequences(labels: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &l in labels {
                let mut t: Vec<usize> = s.clone();
                t.push(l);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn ctc_oracle() -> Result<String, String> {
    let mut r = rng(2);
    let (mut instances, mut infeasible) = (0, 0);
    for vocab in 1..=4 {
        for blank in 0..vocab {
            let labels: Vec<usize> = (0..vocab).filter(|&v| v != blank).collect();
            for targets in sequences(&labels, 3) {
                for frames in 1..=6 {
                    for _draw in 0..3 {
                        instances += 1;
                        let em: EmissionMatrix = random_emissions(&mut r, frames, vocab, blank);
                        let label =
                            || format!("V={vocab} blank={blank} targets={targets:?} T={frames}");
                        match (ctc_viterbi_align(&em, &targets), brute_ctc(&em, &targets)) {
                            (Ok(a), Some(best)) => {
                                ensure(a.path_log_prob == best, || {
                                    format!(
                                        "{}: viterbi {} vs enumeration {best}",
                                        label(),
                                        a.path_log_prob
                                    )
                                })?;
                                ensure(collapse(&a.frame_labels, blank) == targets, || {
                                    format!(
                                        "{}: labels {:?} do not collapse to targets",
                                        label(),
                                        a.frame_labels
                                    )
                                })?;
                            }
                            (Err(Error::AlignmentInfeasible(_)), None) => infeasible += 1,
                            (got, want) => {
                                return Err(format!(
                                    "{}: viterbi {got:?} vs enumeration {want:?}",
                                    label()
                                ))
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{instances} instances exact ({infeasible} infeasible on both sides)"
    ))
}

// 3 ---------------------------------------------------------------------------

fn detect_wav(dir: &Path, name: &str, samples: &[f32]) -> Result<PauseIntervalSet, String> {
    let path = dir.join(name);
    write_wav(&path, samples, SR);
    Ok(e2s(detect_pauses(
        PauseSource::Audio(&path),
        &PauseParams::default(),
    ))?
    .intervals)
}

pub fn pause_detection() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(3);
    let mut authored = 0;
    for scene in 0..12 {
        // Two to four silences of 0.3 to 0.9 s separated by at least 0.2 s of tone.
        let n = r.random_range(2..=4);
        let mut silences = Vec::new();
        let mut at = r.random_range(4_000..12_000);
        for _ in 0..n {
            let len = r.random_range(6_615..19_845);
            silences.push((at, at + len));
            at += len + r.random_range(4_410..15_000);
        }
        let total = at + r.random_range(2_000..8_000);
        let got = detect_wav(
            dir.path(),
            &format!("scene{scene}.wav"),
            &synth_with_silences(total, &silences, scene),
        )?;
        ensure(got.len() == silences.len(), || {
            format!(
                "scene {scene}: {} intervals for {} silences: {:?}",
                got.len(),
                silences.len(),
                got.intervals()
            )
        })?;
        for (iv, &(a, b)) in got.intervals().iter().zip(&silences) {
            let (s, len) = silent_frames(a, b);
            let close = iv.start_frame.abs_diff(s) <= 1 && iv.end_frame().abs_diff(s + len) <= 1;
            ensure(close, || {
                format!("scene {scene}: {iv:?} vs authored frames ({s}, {len})")
            })?;
            authored += 1;
        }
    }

    // A silence covering exactly 17 (then 18) whole windows between tones.
    let a = 40 * 256;
    for (windows, expect) in [(17usize, 0usize), (18, 1)] {
        let b = a + 1024 + (windows - 1) * 256;
        ensure(silent_frames(a, b).1 == windows, || {
            "fixture arithmetic".into()
        })?;
        let got = detect_wav(
            dir.path(),
            &format!("run{windows}.wav"),
            &synth_with_silences(b + 20_000, &[(a, b)], 99),
        )?;
        ensure(got.len() == expect, || {
            format!("{windows}-frame silence gave {:?}", got.intervals())
        })?;
        if expect == 1 {
            ensure(got.intervals()[0] == PauseInterval::new(40, 18), || {
                format!("{:?}", got.intervals())
            })?;
        }
    }
    for (run, expect) in [(17usize, 0usize), (18, 1)] {
        let e: Vec<f64> = [vec![0.5; 5], vec![0.001; run], vec![0.5; 5]].concat();
        let got = e2s(detect_pauses_rms(&e2s(EnergySeries::new(e))?, 0.01, 18))?;
        ensure(got.len() == expect, || {
            format!("{run}-frame energy run gave {:?}", got.intervals())
        })?;
    }
    Ok(format!(
        "{authored} authored silences within ±1 frame; 17-frame runs rejected, 18 kept"
    ))
}

// 4 ---------------------------------------------------------------------------

pub fn iso_gates() -> Result<String, String> {
    let p = IsoParams::default();
    ensure(
        p.window_frames == 26 && p.sim_threshold == 0.75 && p.max_iterations == 60,
        || format!("{p:?}"),
    )?;

    // Rate and scaled-duration arithmetic on the worked numbers.
    let pauses = e2s(PauseIntervalSet::new(
        vec![PauseInterval::new(10, 100), PauseInterval::new(200, 20)],
        500,
    ))?;
    ensure(e2s(effective_frames(500, &pauses))? == 380, || "K'".into())?;
    ensure(e2s(speaking_rate(380, 304.0))? == 1.25, || "rate".into())?;
    ensure(scaled_duration(1.25, 300.0) == 375.0, || {
        "scaled duration".into()
    })?;
    ensure(
        e2s(cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]))? == 1.0,
        || "self cosine".into(),
    )?;
    ensure(
        e2s(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]))? == 0.0,
        || "orthogonal".into(),
    )?;
    ensure(
        e2s(cosine_similarity(&[1.0, -2.0], &[-1.0, 2.0]))? == -1.0,
        || "opposite".into(),
    )?;

    // Duration window, directly and through evaluate with exact arithmetic.
    let mut sweeps = 0;
    for k in [0usize, 26, 256, 380, 1024, 5000] {
        for d in -40i64..=40 {
            let eval = k as f64 + d as f64;
            let want = d.abs() <= 26;
            ensure(iso_accept(k, eval, 0.8, &p) == want, || {
                format!("K'={k} d={d}")
            })?;
            sweeps += 1;
        }
    }
    let one_hot = {
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        v
    };
    for k in [256usize, 1024] {
        let source = SourceContext {
            utterance: Utterance::new("s", "ko"),
            effective_frames: k,
            embedding: one_hot.clone(),
            predicted_frames: k as f64,
        };
        for d in [-27i64, -26, 0, 26, 27] {
            // Cosine 3/4 exactly: (3,1,1,1,1,1,1,1) has norm 4.
            let mut c = iso_candidate(0, "t", k as f64 + d as f64, 0.0);
            c.embedding = Some([vec![3.0], vec![1.0; 7]].concat());
            let e = e2s(evaluate(&source, &c, &p))?;
            ensure(
                e.scaled_duration == k as f64 + d as f64 && e.similarity == 0.75,
                || format!("{e:?}"),
            )?;
            ensure(e.accepted == (d.abs() <= 26), || {
                format!("K'={k} d={d}: {e:?}")
            })?;
        }
    }
    for (sim, want) in [(0.75, true), (0.7499, false), (0.74, false), (1.0, true)] {
        ensure(iso_accept(380, 380.0, sim, &p) == want, || {
            format!("similarity {sim}")
        })?;
    }
    ensure(iso_accept(380, 375.0, 0.80, &p), || "worked accept".into())?;
    ensure(!iso_accept(380, 353.0, 0.90, &p), || {
        "worked lower bound".into()
    })?;

    // The loop on authored streams of 60 paraphrases.
    let source = SourceContext {
        utterance: Utterance::new("s", "ko"),
        effective_frames: 300,
        embedding: vec![1.0, 0.0],
        predicted_frames: 300.0,
    };
    let stream = |n: usize| {
        ListStream(
            (1..=n)
                .map(|i| Utterance::new(format!("c{i}"), "en"))
                .collect(),
        )
    };
    let run = |specs: &[(f64, f64)]| {
        iso_select(
            &source,
            &Utterance::new("c0", "en"),
            &stream(specs.len() - 1),
            |i, u| {
                let (f, s) = specs[i];
                Ok(iso_candidate(i, &u.text, f, s))
            },
            &p,
        )
    };
    // 61 candidates, none passing: similarities peak twice, at 17 and 40.
    let mut specs: Vec<(f64, f64)> = (0..61)
        .map(|i| {
            (
                300.0 + if i % 2 == 0 { 100.0 } else { 0.0 },
                0.3 + (i % 7) as f64 * 0.05,
            )
        })
        .collect();
    specs[17] = (300.0, 0.7);
    specs[40] = (300.0, 0.7);
    let sel = e2s(run(&specs))?;
    ensure(!sel.accepted && sel.trail.len() == 61, || {
        format!("trail {} accepted {}", sel.trail.len(), sel.accepted)
    })?;
    ensure(sel.evaluation.candidate_index == 17, || {
        format!("fallback chose {}", sel.evaluation.candidate_index)
    })?;
    // A longer stream is cut at the cap.
    let mut long = specs.clone();
    long.extend((0..20).map(|_| (300.0, 0.99)));
    let sel = e2s(run(&long))?;
    ensure(!sel.accepted && sel.trail.len() == 61, || {
        format!("cap: trail {}", sel.trail.len())
    })?;
    // Candidate 3 is the first to pass both gates.
    let mut early = specs.clone();
    early[3] = (320.0, 0.8);
    early[5] = (300.0, 0.99);
    let sel = e2s(run(&early))?;
    ensure(
        sel.accepted && sel.trail.len() == 4 && sel.evaluation.candidate_index == 3,
        || {
            format!(
                "early exit: trail {} chose {}",
                sel.trail.len(),
                sel.evaluation.candidate_index
            )
        },
    )?;
    // Similarities [0.5, 0.7, 0.6] with nothing passing choose 1.
    let sel = e2s(run(&[(300.0, 0.5), (300.0, 0.7), (300.0, 0.6)]))?;
    ensure(
        sel.evaluation.candidate_index == 1 && sel.trail.len() == 3,
        || "short fallback".into(),
    )?;

    Ok(format!("{sweeps} window cases, ±26 accept / ±27 reject, 0.75 / 0.7499, 60-paraphrase cap and fallback"))
}

// 5 ---------------------------------------------------------------------------

fn corpus_4x4() -> Result<VowelVectorCorpus, String> {
    e2s(VowelVectorCorpus::load(
        demo_dir().join("../oracle/vowels_4x4.jsonl"),
    ))
}

fn grouped(corpus: &VowelVectorCorpus, lang: &str) -> Vec<Vec<Vec<f64>>> {
    corpus
        .groups()
        .iter()
        .filter(|(k, _)| k.language == lang)
        .map(|(_, v)| v.clone())
        .collect()
}

pub fn vowel_map() -> Result<String, String> {
    let corpus = corpus_4x4()?;
    let params = VowelMapParams {
        seed: 11,
        ..VowelMapParams::default()
    };
    let m = e2s(build_vowel_map(&corpus, &params, Execution::Sequential))?;
    let oracle = mean_then_euclidean(&grouped(&corpus, "ko"), &grouped(&corpus, "en"));
    ensure(m.d.len() == 4 && m.d.iter().all(|r| r.len() == 4), || {
        "shape".into()
    })?;
    let mut worst: f64 = 0.0;
    for (row, orow) in m.d.iter().zip(&oracle) {
        for (x, y) in row.iter().zip(orow) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-9, || {
        format!("max deviation from oracle {worst:e}")
    })?;

    let csv = m.to_csv_string();
    for exec in [
        Execution::Sequential,
        Execution::Parallel,
        Execution::Sequential,
    ] {
        let again = e2s(build_vowel_map(&corpus, &params, exec))?;
        ensure(
            again.to_csv_string() == csv && again.meta() == m.meta(),
            || "fixed-seed rerun differs".into(),
        )?;
    }

    let tripled = e2s(corpus.map_vectors(|v| v.iter().map(|x| x * 3.0).collect()))?;
    let t = e2s(build_vowel_map(&tripled, &params, Execution::Sequential))?;
    let argmin =
        |row: &Vec<f64>| (0..row.len()).fold(0, |b, j| if row[j] < row[b] { j } else { b });
    for (row, trow) in m.d.iter().zip(&t.d) {
        for (x, y) in row.iter().zip(trow) {
            ensure(rel_close(3.0 * x, *y, 1e-9), || {
                format!("scaled entry {y} vs 3 × {x}")
            })?;
        }
        ensure(argmin(row) == argmin(trow), || {
            "row argmin moved under scaling".into()
        })?;
    }
    Ok(format!(
        "4×4 matrix within {worst:.1e} of oracle; reruns byte-identical; ×3 scaling exact to 1e-9"
    ))
}

// 6 ---------------------------------------------------------------------------

pub fn selection_arithmetic() -> Result<String, String> {
    let params = CometParams::default();
    ensure(params.alpha == 1.6 && params.beta == 0.4, || {
        format!("{params:?}")
    })?;
    let (chosen, report) = e2s(ps_comet_select(&[2.0, 4.0, 6.0], &[0.2, 0.9, 0.8], &params))?;
    let normalized: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.dtw_normalized_inverted)
        .collect();
    ensure(normalized == [1.0, 0.5, 0.0], || {
        format!("normalized {normalized:?}")
    })?;
    let combined: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.combined_score.unwrap())
        .collect();
    let by_hand = [
        1.6 * 1.0 + 0.4 * 0.2,
        1.6 * 0.5 + 0.4 * 0.9,
        1.6 * 0.0 + 0.4 * 0.8,
    ];
    ensure(combined == by_hand, || {
        format!("combined {combined:?} vs {by_hand:?}")
    })?;
    let printed: Vec<String> = combined.iter().map(|&x| format::sig9_string(x)).collect();
    ensure(printed == ["1.68", "1.16", "0.32"], || {
        format!("printed {printed:?}")
    })?;
    ensure(chosen == 0, || format!("chose {chosen}"))?;

    let mut r = rng(6);
    let beta0 = CometParams {
        beta: 0.0,
        ..params
    };
    for set in 0..1000 {
        let n = r.random_range(1..=60);
        let dtw: Vec<f64> = (0..n).map(|_| r.random_range(0.0..500.0)).collect();
        let sem: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let a = e2s(ps_comet_select(&dtw, &sem, &beta0))?.0;
        let b = e2s(ps_select(&dtw))?;
        ensure(a == b, || {
            format!("set {set}: beta=0 chose {a}, ps chose {b}")
        })?;
    }
    Ok("combined [1.68, 1.16, 0.32] → 0; β=0 agrees with PS on 1000 sets".into())
}

// 7 ---------------------------------------------------------------------------

/// 40 paired scores shaped like a DTW/semantic study: weakly anti-correlated.
pub fn forty_pairs() -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(7);
    let dtw: Vec<f64> = (0..40)
        .map(|_| (r.random_range(50.0..150.0) * 1000.0_f64).round() / 1000.0)
        .collect();
    let sem = dtw
        .iter()
        .map(|d| ((0.9 - d / 500.0 + r.random_range(-0.2..0.2)) * 1000.0_f64).round() / 1000.0)
        .collect();
    (dtw, sem)
}

pub fn correlation() -> Result<String, String> {
    let (dtw, sem) = forty_pairs();
    let mut fixtures = vec![
        (dtw, sem),
        (
            vec![12.5, 9.1, 15.2, 7.7, 11.0, 14.3, 8.8, 10.4],
            vec![0.61, 0.72, 0.55, 0.81, 0.64, 0.50, 0.77, 0.70],
        ),
        (
            vec![1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 5.0, 6.0, 7.0],
            vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0],
        ),
    ];
    let mut r = rng(70);
    for _ in 0..20 {
        let n = r.random_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v * r.random_range(-1.0..1.0) + r.random_range(-5.0..5.0))
            .collect();
        fixtures.push((x, y));
    }
    for (i, (x, y)) in fixtures.iter().enumerate() {
        let rep = e2s(correlation_diagnostic(x, y))?;
        let r_tb = textbook_pearson(x, y);
        let rho_tb = textbook_pearson(&textbook_ranks(x), &textbook_ranks(y));
        ensure((rep.pearson_r - r_tb).abs() <= 1e-9, || {
            format!("fixture {i}: r {} vs {r_tb}", rep.pearson_r)
        })?;
        ensure((rep.spearman_rho - rho_tb).abs() <= 1e-9, || {
            format!("fixture {i}: rho {} vs {rho_tb}", rep.spearman_rho)
        })?;
        let distinct = |v: &[f64]| {
            v.iter()
                .map(|f| f.to_bits())
                .collect::<std::collections::BTreeSet<_>>()
                .len()
                == v.len()
        };
        if distinct(x) && distinct(y) {
            let rho_d2 = textbook_spearman_no_ties(x, y);
            ensure((rep.spearman_rho - rho_d2).abs() <= 1e-9, || {
                format!("fixture {i}: rho vs Σd² formula")
            })?;
        }
    }

    let x: Vec<f64> = (1..=25).map(f64::from).collect();
    let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let up = e2s(correlation_diagnostic(&x, &lin))?;
    let down = e2s(correlation_diagnostic(&x, &neg))?;
    ensure(up.pearson_r == 1.0 && up.spearman_rho == 1.0, || {
        format!("linear: {up:?}")
    })?;
    ensure(down.pearson_r == -1.0 && down.spearman_rho == -1.0, || {
        format!("anti-monotone: {down:?}")
    })?;
    Ok(format!(
        "{} fixtures within 1e-9 of textbook formulas; ±1.0 exact",
        fixtures.len()
    ))
}

// 8 ---------------------------------------------------------------------------

fn read_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

pub fn run_demo(
    mode: &str,
    out: &Path,
    exec: Execution,
) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let overrides = vec![
        ("mode".to_string(), mode.to_string()),
        ("output_dir".to_string(), out.display().to_string()),
    ];
    let cfg = e2s(PipelineConfig::load(
        demo_dir().join("config.json"),
        &overrides,
    ))?;
    e2s(run_pipeline(&cfg, exec))?;
    read_tree(out)
}

pub fn end_to_end() -> Result<String, String> {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for mode in ["ps", "ps-comet"] {
        let runs: Vec<BTreeMap<String, Vec<u8>>> = (0..3)
            .map(|i| {
                run_demo(
                    mode,
                    &tmp.path().join(format!("{mode}-{i}")),
                    Execution::default(),
                )
            })
            .collect::<Result<_, _>>()?;
        for (i, run) in runs.iter().enumerate().skip(1) {
            ensure(run == &runs[0], || {
                let differ: Vec<&String> = run
                    .keys()
                    .filter(|k| runs[0].get(*k) != run.get(*k))
                    .collect();
                format!("{mode}: run {i} differs from run 0 in {differ:?}")
            })?;
        }
        ensure(runs[0].contains_key("bundle.json"), || {
            format!("{mode}: no bundle")
        })?;
        summary.push(format!("{mode}: {} files", runs[0].len()));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "3 byte-identical runs each ({}), {secs:.2} s",
        summary.join(", ")
    ))
}

// 9 ---------------------------------------------------------------------------

pub fn invariant_suite() -> Result<String, String> {
    let props = super::invariants::all();
    let mut failed = Vec::new();
    for (module, name, check) in &props {
        if let Err(e) = check() {
            failed.push(format!("{module}: {name}: {e}"));
        }
    }
    if failed.is_empty() {
        Ok(format!(
            "{} properties × {} cases",
            props.len(),
            super::invariants::CASES
        ))
    } else {
        Err(failed.join("; "))
    }
}
