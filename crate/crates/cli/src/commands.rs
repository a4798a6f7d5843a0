use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use tdpa_core::metrics::{self, reset_based_eval, EvalReport, ResetProtocol};
use tdpa_core::miner::{jitter_box, knn_query, sample_negatives, sample_positives, Gallery, GalleryEntry};
use tdpa_core::rng::stream_key;
use tdpa_core::simulator::{generate, preset, ScenarioSpec};
use tdpa_core::{
    ArgmaxTracker, Detection, FrameOutput, OnlineTracker, Scenario, ShortTermTracker, TdpaTracker,
};

use crate::config::{EngineConfig, Mode};
use crate::error::{CliError, CliResult};
use crate::format::{self, Stream, StreamHeader, Truth, TruthHeader, FORMAT_VERSION};

pub const STREAM_FILE: &str = "stream.ndjson";
pub const TRUTH_FILE: &str = "truth.ndjson";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const PREDICTIONS_FILE: &str = "predictions.ndjson";
pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes to `path`, or to stdout when `path` is `None`.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn load_stream(path: &Path) -> CliResult<Stream> {
    format::read_stream(open(path)?).map_err(|e| prefix(path, e))
}

pub fn load_truth(path: &Path) -> CliResult<Truth> {
    format::read_truth(open(path)?).map_err(|e| prefix(path, e))
}

fn prefix(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

// ---------------------------------------------------------------- simulate

/// Scenario from a preset name or a JSON spec file, with an optional seed override.
pub fn resolve_scenario(preset_name: Option<&str>, scenario: Option<&Path>, seed: Option<u64>) -> CliResult<ScenarioSpec> {
    let mut spec = match (preset_name, scenario) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        _ => return Err(CliError::validation("give exactly one of --preset or --scenario")),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn scenario_files(spec: &ScenarioSpec) -> CliResult<(Stream, Truth)> {
    let sc: Scenario<f64> = generate(spec)?;
    let ids = sc.truth_ids();
    let stream = Stream {
        header: StreamHeader {
            frame_w: sc.frame_w,
            frame_h: sc.frame_h,
            embedding_dim: spec.embedding_dim(),
            format_version: FORMAT_VERSION,
            n_frames: Some(sc.stream.len()),
        },
        frames: sc.stream,
    };
    let truth = Truth {
        header: TruthHeader {
            frame_w: sc.frame_w,
            frame_h: sc.frame_h,
            format_version: FORMAT_VERSION,
            n_frames: Some(sc.truth.len()),
        },
        boxes: sc.truth,
        ids,
    };
    Ok((stream, truth))
}

pub fn simulate(spec: &ScenarioSpec, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let (stream, truth) = scenario_files(spec)?;
    let mut w = create(&out_dir.join(STREAM_FILE))?;
    format::write_stream(&mut w, &stream)?;
    w.flush()?;
    let mut w = create(&out_dir.join(TRUTH_FILE))?;
    format::write_truth(&mut w, &truth)?;
    w.flush()?;
    let mut w = create(&out_dir.join(SCENARIO_FILE))?;
    writeln!(w, "{}", serde_json::to_string_pretty(spec).expect("spec serializes"))?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- track

pub fn make_tracker(cfg: &EngineConfig, mode: Mode, template: &Detection<f64>) -> CliResult<Box<dyn OnlineTracker<f64>>> {
    Ok(match mode {
        Mode::Tdpa => Box::new(TdpaTracker::new(template.clone(), cfg.oracle.clone(), cfg.tdpa())?),
        Mode::Argmax => Box::new(ArgmaxTracker::new(template)),
        Mode::ShortTerm => Box::new(ShortTermTracker::new(
            template.clone(),
            cfg.oracle.clone(),
            cfg.short_term.clone(),
            cfg.seed,
        )?),
    })
}

/// Template detection: the `ff_index`-th detection of frame 0.
pub fn template(stream: &Stream, ff_index: usize) -> CliResult<&Detection<f64>> {
    stream.frames[0].get(ff_index).ok_or_else(|| {
        CliError::validation(format!(
            "--ff-line {ff_index} out of range: frame 0 has {} detections",
            stream.frames[0].len()
        ))
    })
}

/// Runs a tracker over the whole stream. Frame 0 reports the template itself.
pub fn run_tracker(stream: &Stream, cfg: &EngineConfig, mode: Mode, ff_index: usize) -> CliResult<Vec<FrameOutput<f64>>> {
    let tpl = template(stream, ff_index)?;
    let mut tracker = make_tracker(cfg, mode, tpl)?;
    let mut out = Vec::with_capacity(stream.frames.len());
    out.push(FrameOutput {
        t: 0,
        bbox: tpl.bbox,
        confidence: 1.0,
        present: true,
        det_id: Some(tpl.det_id),
        object_id: tpl.object_id,
    });
    for (t, frame) in stream.frames.iter().enumerate().skip(1) {
        out.push(tracker.track(t, frame)?);
    }
    Ok(out)
}

pub fn track(stream_path: &Path, out: Option<&Path>, cfg: &EngineConfig, mode: Mode, ff_index: usize) -> CliResult<()> {
    let stream = load_stream(stream_path)?;
    let preds = run_tracker(&stream, cfg, mode, ff_index)?;
    with_output(out, |w| format::write_predictions(w, &preds))
}

// ---------------------------------------------------------------- eval

pub fn evaluate(
    preds: &[metrics::PredictionRecord<f64>],
    truth: &Truth,
    reset: Option<(&Stream, &EngineConfig, Mode)>,
) -> CliResult<EvalReport> {
    let mut report = EvalReport::from_predictions(preds, &truth.boxes, truth.header.frame_w, truth.header.frame_h, Some(&truth.ids))?;
    if let Some((stream, cfg, mode)) = reset {
        if stream.frames.len() != truth.boxes.len() {
            return Err(CliError::validation(format!(
                "stream has {} frames, truth has {}",
                stream.frames.len(),
                truth.boxes.len()
            )));
        }
        let mut tracker = make_tracker(cfg, mode, template(stream, 0)?)?;
        let r = reset_based_eval(tracker.as_mut(), &stream.frames, &truth.boxes, ResetProtocol::default())?;
        report.resets = Some(r.resets);
        report.reset_accuracy = r.accuracy;
    }
    Ok(report)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// All metric curves as CSV rows `curve,threshold,a,b,c`.
pub fn curves_csv(preds: &[metrics::PredictionRecord<f64>], truth: &Truth) -> String {
    let mut s = String::from("curve,threshold,a,b,c\n");
    if let Ok(c) = metrics::success_curve(preds, &truth.boxes) {
        for (tau, rate) in c {
            s += &format!("success,{},{},,\n", num(tau), num(rate));
        }
    }
    if let Ok(c) = metrics::precision_curve(preds, &truth.boxes, truth.header.frame_w, truth.header.frame_h, 50) {
        for (px, rate) in c {
            s += &format!("precision,{},{},,\n", num(px), num(rate));
        }
    }
    if let Ok(c) = metrics::longterm_curve(preds, &truth.boxes) {
        for p in c {
            s += &format!("pr_re_f,{},{},{},{}\n", num(p.threshold), num(p.pr), num(p.re), num(p.f));
        }
    }
    if let Ok(c) = metrics::gm_curve(preds, &truth.boxes) {
        for p in c {
            s += &format!("tpr_tnr_gm,{},{},{},{}\n", num(p.threshold), num(p.tpr), num(p.tnr), num(p.gm));
        }
    }
    s
}

pub struct EvalArgs<'a> {
    pub predictions: &'a Path,
    pub truth: &'a Path,
    pub stream: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub curves: Option<&'a Path>,
}

pub fn eval(args: &EvalArgs<'_>, cfg: &EngineConfig, mode: Mode) -> CliResult<()> {
    let preds = format::read_predictions(open(args.predictions)?).map_err(|e| prefix(args.predictions, e))?;
    let truth = load_truth(args.truth)?;
    let stream = args.stream.map(load_stream).transpose()?;
    let report = evaluate(&preds, &truth, stream.as_ref().map(|s| (s, cfg, mode)))?;
    if let Some(path) = args.curves {
        let mut w = create(path)?;
        w.write_all(curves_csv(&preds, &truth).as_bytes())?;
        w.flush()?;
    }
    with_output(args.out, |w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
        Ok(())
    })
}

// ---------------------------------------------------------------- mine

pub struct MineArgs<'a> {
    pub gallery: &'a Path,
    pub reference: i64,
    pub query_entry: Option<u64>,
    pub jitter: bool,
    pub out: Option<&'a Path>,
}

#[derive(serde::Serialize)]
struct MinedLine {
    role: &'static str,
    entry_id: u64,
    video_id: i64,
    frame: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Hard negatives from other videos near the query plus positives from the
/// reference video, optionally with jittered boxes.
pub fn mine_examples(
    gallery: &Gallery<f64>,
    args: &MineArgs<'_>,
    cfg: &EngineConfig,
) -> CliResult<Vec<(&'static str, GalleryEntry<f64>)>> {
    let query = match args.query_entry {
        Some(id) => gallery
            .get(id)
            .ok_or_else(|| CliError::validation(format!("unknown --query-entry {id}")))?,
        None => gallery
            .entries()
            .iter()
            .filter(|e| e.video_id == args.reference)
            .min_by_key(|e| e.entry_id)
            .ok_or(tdpa_core::Error::UnknownVideo(args.reference))?,
    };
    let m = &cfg.miner;
    let nn = knn_query(gallery, &query.embedding, m.k, Some(args.reference))?;
    let negatives = sample_negatives(&nn, m.negative_videos, cfg.seed);
    let positives = sample_positives(gallery, args.reference, m.positives, cfg.seed)?;
    let mut out = Vec::with_capacity(negatives.len() + positives.len());
    for (role, entries) in [("negative", negatives), ("positive", positives)] {
        for mut e in entries {
            if args.jitter {
                let key = stream_key(cfg.seed, &[e.entry_id]);
                e.bbox = jitter_box(&e.bbox.corners(), &m.jitter, key).to_bbox()?;
            }
            out.push((role, e));
        }
    }
    Ok(out)
}

pub fn mine(args: &MineArgs<'_>, cfg: &EngineConfig) -> CliResult<()> {
    let entries = format::read_gallery(open(args.gallery)?).map_err(|e| prefix(args.gallery, e))?;
    let gallery = Gallery::new(entries, cfg.miner.metric)?;
    let mined = mine_examples(&gallery, args, cfg)?;
    with_output(args.out, |w| {
        for (role, e) in &mined {
            let line = MinedLine {
                role,
                entry_id: e.entry_id,
                video_id: e.video_id,
                frame: e.frame,
                bbox: e.bbox.to_array(),
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("line serializes"))?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- pipeline

pub struct PipelineArgs {
    pub spec: ScenarioSpec,
    pub out_dir: PathBuf,
    pub keep: bool,
}

/// simulate, track and evaluate in one go; leaves `report.json` and
/// `curves.csv` in the output directory, plus the intermediate files with `keep`.
pub fn pipeline(args: &PipelineArgs, cfg: &EngineConfig, mode: Mode) -> CliResult<EvalReport> {
    let dir = &args.out_dir;
    simulate(&args.spec, dir)?;
    let stream = load_stream(&dir.join(STREAM_FILE))?;
    let truth = load_truth(&dir.join(TRUTH_FILE))?;
    let outputs = run_tracker(&stream, cfg, mode, 0)?;
    let pred_path = dir.join(PREDICTIONS_FILE);
    let mut w = create(&pred_path)?;
    format::write_predictions(&mut w, &outputs)?;
    w.flush()?;
    drop(w);
    let preds = format::read_predictions(open(&pred_path)?)?;
    let report = evaluate(&preds, &truth, Some((&stream, cfg, mode)))?;
    let mut w = create(&dir.join(REPORT_FILE))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
    w.flush()?;
    let mut w = create(&dir.join(CURVES_FILE))?;
    w.write_all(curves_csv(&preds, &truth).as_bytes())?;
    w.flush()?;
    if !args.keep {
        for f in [STREAM_FILE, TRUTH_FILE, SCENARIO_FILE, PREDICTIONS_FILE] {
            std::fs::remove_file(dir.join(f)).with_context(|| format!("cannot remove {f}"))?;
        }
    }
    Ok(report)
}
