use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dubsync_core::format::{sig9_string, to_json_string};
use dubsync_core::pipeline::{
    self, detect_pauses, ConfigDoc, PauseMethod, PauseParams, PauseSource, SelectOutput, Session,
    Stages, TOP_LEVEL_FIELDS,
};
use dubsync_core::selection::correlation_diagnostic;
use dubsync_core::vowel_space::{build_vowel_map, VowelMapParams, VowelVectorCorpus};
use dubsync_core::{Error, Execution, Result};
use serde_json::json;

const OVERRIDE_HELP: &str = "\
Any config field can also be given on the command line as --<dotted.name> <value>
(or --<dotted.name>=<value>), e.g. --iso.window_frames 30 --mode ps-comet --seed 7.
Values are parsed as JSON when possible and as plain strings otherwise.";

#[derive(Debug, Parser)]
#[command(name = "dubsync", version, about = "Isochrony gating and lip-sync aware candidate selection", after_help = OVERRIDE_HELP)]
struct Cli {
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect pauses from audio (rms) or CTC emissions (ctc) and write the pause set.
    #[command(after_help = OVERRIDE_HELP)]
    DetectPauses {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; defaults to <output_dir>/pauses.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the isochrony loop and write the ISO report.
    #[command(after_help = OVERRIDE_HELP)]
    Iso {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; defaults to <output_dir>/iso.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a vowel vector corpus and write the distance matrix CSV plus sidecar.
    #[command(after_help = OVERRIDE_HELP)]
    BuildVowelMap {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV; defaults to <output_dir>/vowel_map.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank phonetic candidates (--mode ps|ps-comet) and write the selection report.
    #[command(after_help = OVERRIDE_HELP)]
    Select {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; defaults to <output_dir>/selection.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run pauses, isochrony, vowel map and selection, writing every artifact.
    #[command(after_help = OVERRIDE_HELP)]
    RunPipeline {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Pearson and Spearman correlation between DTW and semantic scores.
    #[command(after_help = OVERRIDE_HELP)]
    DiagnoseCorrelation {
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON file {"dtw": [...], "semantic": [...]} used instead of the config's candidate pool.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Pulls `--key[=value]` pairs whose first segment is a config field out of
/// the argument list.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.to_str().and_then(|s| s.strip_prefix("--")) else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        let head = key.split('.').next().unwrap_or_default();
        if !TOP_LEVEL_FIELDS.contains(&head) {
            if key.contains('.') {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn output_path(doc: &ConfigDoc, out: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match out {
        Some(p) => Ok(p),
        None => Ok(doc
            .path("output_dir")?
            .unwrap_or_else(|| doc.base.join("out"))
            .join(name)),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    print!("{}", to_json_string(value)?);
    Ok(())
}

fn selection_table(out: &SelectOutput) -> String {
    let comet = out.report.params.is_some();
    let mut s = String::new();
    let _ = write!(
        s,
        "{:>3}  {:>5}  {:>14}  {:>14}",
        "", "index", "dtw", "dtw_norm_inv"
    );
    if comet {
        let _ = write!(s, "  {:>14}  {:>14}", "semantic", "combined");
    }
    let _ = writeln!(s, "  text");
    for (row, cand) in out.report.rows.iter().zip(&out.candidates) {
        let mark = if row.index == out.report.chosen_index {
            "*"
        } else {
            ""
        };
        let _ = write!(
            s,
            "{mark:>3}  {:>5}  {:>14}  {:>14}",
            row.index,
            sig9_string(row.dtw_raw),
            sig9_string(row.dtw_normalized_inverted)
        );
        if let (Some(sem), Some(comb)) = (row.semantic_score, row.combined_score) {
            let _ = write!(s, "  {:>14}  {:>14}", sig9_string(sem), sig9_string(comb));
        }
        let _ = writeln!(s, "  {}", cand.text);
    }
    s
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let cwd = std::env::current_dir().map_err(|e| io_err(Path::new("."), e))?;
    let open = |config: Option<&Path>| ConfigDoc::load(config, overrides, &cwd);

    match cli.command {
        Command::DetectPauses { config, out } => {
            let doc = open(config.as_deref())?;
            let params: PauseParams = doc.field("pause")?;
            let need = |key: &str| {
                doc.path(key)?.ok_or_else(|| {
                    Error::Config(format!(
                        "--{key} is required for pause method {:?}",
                        params.method
                    ))
                })
            };
            let (audio, emissions, targets);
            let source = match params.method {
                PauseMethod::Rms => {
                    audio = need("audio")?;
                    PauseSource::Audio(&audio)
                }
                PauseMethod::Ctc => {
                    emissions = need("emissions")?;
                    targets = need("ctc_targets")?;
                    PauseSource::Ctc {
                        emissions: &emissions,
                        targets: &targets,
                    }
                }
            };
            let report = detect_pauses(source, &params)?;
            let path = output_path(&doc, out, "pauses.json")?;
            write_file(&path, &to_json_string(&report.intervals.to_json_value())?)?;
            print_json(&json!({
                "total_frames": report.total_frames,
                "effective_frames": report.effective_frames,
                "intervals": report.intervals.len(),
                "output": path.display().to_string(),
            }))
        }
        Command::Iso { config, out } => {
            let doc = open(config.as_deref())?;
            let path = output_path(&doc, out, "iso.json")?;
            let cfg = doc.into_config()?;
            let mut session = Session::open(&cfg)?;
            session.exec = exec;
            pipeline::preflight(&cfg, &session, Stages::ISO)?;
            let pauses = pipeline::pauses_stage(&cfg)?;
            let iso = pipeline::iso_stage(&cfg, &session, &pauses)?;
            write_file(&path, &to_json_string(&iso)?)?;
            print_json(&json!({
                "total_frames": iso.total_frames,
                "effective_frames": iso.effective_frames,
                "speaking_rate": iso.speaking_rate,
                "accepted": iso.accepted,
                "selected_index": iso.selected.candidate_index,
                "selected_text": iso.selected.text,
                "evaluations": iso.trail.len(),
                "output": path.display().to_string(),
            }))
        }
        Command::BuildVowelMap { config, out } => {
            let doc = open(config.as_deref())?;
            let corpus_path = doc
                .path("corpus")?
                .ok_or_else(|| Error::Config("--corpus is required".into()))?;
            let vm: pipeline::VowelMapConfig = doc.field("vowel_map")?;
            let seed: u64 = doc.field("seed")?;
            let params: VowelMapParams = vm.params(seed);
            let matrix = build_vowel_map(&VowelVectorCorpus::load(&corpus_path)?, &params, exec)?;
            let path = output_path(&doc, out, "vowel_map.csv")?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            matrix.save(&path)?;
            print_json(&json!({
                "source_vowels": matrix.source_vowels,
                "target_vowels": matrix.target_vowels,
                "output": path.display().to_string(),
            }))
        }
        Command::Select { config, out } => {
            let doc = open(config.as_deref())?;
            let path = output_path(&doc, out, "selection.json")?;
            let cfg = doc.into_config()?;
            let mut session = Session::open(&cfg)?;
            session.exec = exec;
            pipeline::preflight(&cfg, &session, Stages::SELECT)?;
            let matrix = pipeline::vowel_map_stage(&cfg, exec)?;
            let sel = pipeline::select_stage(&cfg, &session, &matrix)?;
            write_file(&path, &to_json_string(&sel)?)?;
            print!("{}", selection_table(&sel));
            Ok(())
        }
        Command::RunPipeline { config } => {
            let cfg = open(config.as_deref())?.into_config()?;
            let bundle = pipeline::run_pipeline(&cfg, exec)?;
            print!("{}", to_json_string(&bundle)?);
            Ok(())
        }
        Command::DiagnoseCorrelation { config, input, out } => {
            let report = match input {
                Some(input) => {
                    #[derive(serde::Deserialize)]
                    struct Pairs {
                        dtw: Vec<f64>,
                        semantic: Vec<f64>,
                    }
                    let text = std::fs::read_to_string(&input).map_err(|e| io_err(&input, e))?;
                    let p: Pairs = serde_json::from_str(&text).map_err(|e| Error::Parse {
                        path: input.display().to_string(),
                        message: e.to_string(),
                    })?;
                    correlation_diagnostic(&p.dtw, &p.semantic)?
                }
                None => {
                    let mut cfg = open(config.as_deref())?.into_config()?;
                    cfg.mode = dubsync_core::selection::SelectionMode::PsComet;
                    let mut session = Session::open(&cfg)?;
                    session.exec = exec;
                    pipeline::preflight(&cfg, &session, Stages::SELECT)?;
                    let matrix = pipeline::vowel_map_stage(&cfg, exec)?;
                    pipeline::correlation_stage(&cfg, &session, &matrix)?
                }
            };
            let text = to_json_string(&report)?;
            if let Some(out) = out {
                write_file(&out, &text)?;
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    let mut body = json!({"error": e.code(), "message": e.to_string()});
    if let Error::Stage { stage, .. } = e {
        body["stage"] = json!(stage);
    }
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
