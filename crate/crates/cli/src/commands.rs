use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use agripretext::config::RunConfig;
use agripretext::ingest::{
    build_dataset, grid_chips, neighbor_grid, read_pgm, write_mock_source, FsSource, MockSpec,
};
use agripretext::model::{
    grad_check, linear_probe, load_checkpoint, save_checkpoint, train, write_loss_trace, InputNorm, Model,
    ModelConfig, ProbeChip, Task, TrainData,
};
use agripretext::sampling::{enumerate_pairs, split_pairs, td_label, GapSpec};
use agripretext::signal::construct_frequency_map;
use agripretext::store::{read_cube, read_frequency_map, write_frequency_map};
use agripretext::synth::{gen_probe_set, gen_sits, write_synth, SynthSpec};
use agripretext::{BitemporalSample, Timestamp, TimeSeriesCube};

use crate::{Cli, Command, GapArgs};

/// A failed command: bad input (exit 1) or a failing run (exit 2).
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<agripretext::Error> for CliError {
    fn from(e: agripretext::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| invalid(format!("bad {what} value `{p}`"))))
        .collect()
}

fn parse_month(s: &str) -> Result<Timestamp> {
    s.parse().map_err(|e: agripretext::Error| invalid(e.to_string()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Prints to stdout, ignoring a closed pipe.
fn print_json(value: &serde_json::Value) {
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("json"));
}

fn apply_gaps(cfg: &mut RunConfig, gap: &GapArgs) -> Result<()> {
    if let Some(g) = &gap.gaps {
        cfg.gaps = GapSpec::parse_set(g)?;
    } else if let Some(m) = gap.max_gap {
        cfg.gaps = GapSpec::Range { max_gap: m };
    }
    Ok(())
}

/// Loads the config file, applies flag overrides and validates.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            s.height = a.height.unwrap_or(s.height);
            s.width = a.width.unwrap_or(s.width);
            s.months = a.months.unwrap_or(s.months);
            s.parcels = a.parcels.unwrap_or(s.parcels);
            s.noise_sigma = a.noise.unwrap_or(s.noise_sigma);
            if let Some(p) = &a.periods {
                s.periods = parse_list(p, "period")?;
            }
            if let Some(p) = &a.phases {
                s.phases = parse_list(p, "phase")?;
            }
            if let Some(t) = &a.start {
                s.start = parse_month(t)?;
            }
            cfg.paths.output = Some(a.out.clone());
        }
        Command::Ingest(a) => {
            let i = &mut cfg.ingest;
            if let Some(t) = &a.start {
                i.start = parse_month(t)?;
            }
            if let Some(t) = &a.end {
                i.end = parse_month(t)?;
            }
            i.chip_size = a.chip_size.unwrap_or(i.chip_size);
            i.min_overlap = a.min_overlap.unwrap_or(i.min_overlap);
            i.thresholds.threshold = a.threshold.unwrap_or(i.thresholds.threshold);
            i.thresholds.step = a.step.unwrap_or(i.thresholds.step);
            i.thresholds.floor = a.floor.unwrap_or(i.thresholds.floor);
            cfg.paths.input = Some(a.source.clone());
            cfg.paths.output = Some(a.out.clone());
        }
        Command::Freqmap(a) => {
            cfg.signal.k = a.k.unwrap_or(cfg.signal.k);
            cfg.paths.input = Some(a.input.clone());
            cfg.paths.output = Some(a.out.clone());
        }
        Command::Pairs(a) => {
            apply_gaps(&mut cfg, &a.gap)?;
            cfg.model.heads.td_classes = a.classes.unwrap_or(cfg.model.heads.td_classes);
            cfg.paths.input = Some(a.input.clone());
            cfg.paths.output = a.out.clone();
        }
        Command::Pretrain(a) => {
            cfg.task = a.task.unwrap_or(cfg.task);
            apply_gaps(&mut cfg, &a.gap)?;
            let t = &mut cfg.train;
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.lr = a.lr.unwrap_or(t.lr);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.warmup_epochs = a.warmup.unwrap_or(t.warmup_epochs);
            t.weight_decay = a.weight_decay.unwrap_or(t.weight_decay);
            cfg.pretrain.holdout = a.holdout.unwrap_or(cfg.pretrain.holdout);
            cfg.paths.input = Some(a.input.clone());
            cfg.paths.output = Some(a.out.clone());
        }
        Command::Gradcheck(a) => {
            cfg.task = a.task.unwrap_or(cfg.task);
            cfg.gradcheck.coords = a.coords.unwrap_or(cfg.gradcheck.coords);
            cfg.gradcheck.step = a.step.unwrap_or(cfg.gradcheck.step);
            cfg.paths.output = a.out.clone();
        }
        Command::Probe(a) => {
            cfg.paths.input = a.ckpt.clone();
            cfg.paths.output = a.out.clone();
        }
        Command::ExportPng(a) => {
            cfg.paths.input = Some(a.input.clone());
            cfg.paths.output = Some(a.out.clone());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Ingest(_) => "ingest",
        Command::Freqmap(_) => "freqmap",
        Command::Pairs(_) => "pairs",
        Command::Pretrain(_) => "pretrain",
        Command::Gradcheck(_) => "gradcheck",
        Command::Probe(_) => "probe",
        Command::ExportPng(_) => "export-png",
    }
}

fn run_log_path(cli: &Cli) -> PathBuf {
    if let Some(p) = &cli.run_log {
        return p.clone();
    }
    match &cli.command {
        Command::Synth(a) => a.out.join("run.json"),
        Command::Ingest(a) => a.out.join("run.json"),
        Command::Freqmap(a) => a.out.join("run.json"),
        Command::Pretrain(a) => a.out.join("run.json"),
        Command::Pairs(a) => a.out.as_deref().unwrap_or(Path::new(".")).join("run.json"),
        Command::Gradcheck(a) => a.out.as_deref().unwrap_or(Path::new(".")).join("run.json"),
        Command::Probe(a) => a.out.as_deref().unwrap_or(Path::new(".")).join("run.json"),
        Command::ExportPng(a) => {
            let mut name = a.out.file_name().unwrap_or_default().to_os_string();
            name.push(".run.json");
            a.out.with_file_name(name)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let cfg = resolve(cli)?;
    let name = command_name(&cli.command);
    log::info!("{name}: seed {}", cfg.seed);
    let summary = match &cli.command {
        Command::Synth(a) => synth(&cfg, &a.out)?,
        Command::Ingest(a) => ingest(&cfg, a)?,
        Command::Freqmap(a) => freqmap(&cfg, &a.input, &a.out)?,
        Command::Pairs(a) => pairs(&cfg, &a.input, a.out.as_deref())?,
        Command::Pretrain(a) => pretrain(&cfg, &a.input, a.fmap.as_deref(), &a.out)?,
        Command::Gradcheck(a) => gradcheck(&cfg, a.tolerance, a.out.as_deref())?,
        Command::Probe(a) => probe(&cfg, a.ckpt.as_deref(), a.out.as_deref(), a.write_pretrain.as_deref())?,
        Command::ExportPng(a) => {
            let map = read_frequency_map(&a.input)?;
            agripretext::render::export_png(&map, &a.out)?;
            json!({ "png": a.out, "k": map.k() })
        }
    };
    print_json(&summary);
    let log = json!({
        "command": name,
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "seed": cfg.seed,
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "summary": summary,
    });
    write_json(&run_log_path(cli), &log)
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<serde_json::Value> {
    let sits = gen_sits(&cfg.synth)?;
    write_synth(&sits, out)?;
    Ok(json!({
        "cube": out.join("cube"),
        "dims": sits.cube.dims(),
        "periods": sits.periods,
        "phases": sits.phases,
    }))
}

fn ingest(cfg: &RunConfig, a: &crate::IngestArgs) -> Result<serde_json::Value> {
    let raster = read_pgm(&a.aoi)?;
    let aoi = raster.mapv(|v| v != 0);
    let ic = &cfg.ingest;
    let mut chips = grid_chips(aoi.view(), ic.chip_size, ic.min_overlap)?;
    let mut dropped = 0;
    if a.neighbors {
        let (h, w) = aoi.dim();
        let mut seen = BTreeSet::new();
        let mut expanded = Vec::new();
        for chip in &chips {
            let grid = neighbor_grid(*chip, h, w)?;
            dropped += grid.dropped.len();
            for g in grid.geometries() {
                if seen.insert(g) {
                    expanded.push(g);
                }
            }
        }
        chips = expanded;
    }
    log::info!("{} chips over a {}×{} AOI", chips.len(), aoi.nrows(), aoi.ncols());
    if a.mock {
        let spec = MockSpec {
            start: ic.start,
            end: ic.end,
            parcels: cfg.synth.parcels,
            noise_sigma: cfg.synth.noise_sigma,
            seed: cfg.seed,
            ..Default::default()
        };
        write_mock_source(&a.source, &chips, &spec)?;
    }
    let source = FsSource::open(&a.source)?;
    let report = build_dataset(&source, &chips, ic.start, ic.end, &ic.thresholds, &a.out)?;
    if !chips.is_empty() && report.written == 0 {
        return Err(CliError::Runtime(format!("all {} chips failed", chips.len())));
    }
    let missing: usize = report
        .manifest
        .chips
        .values()
        .map(|c| c.months.values().filter(|m| m.missing).count())
        .sum();
    let fallback: usize = report
        .manifest
        .chips
        .values()
        .map(|c| c.months.values().filter(|m| m.fallback).count())
        .sum();
    Ok(json!({
        "chips": chips.len(),
        "written": report.written,
        "failed": report.failed,
        "dropped_neighbors": dropped,
        "missing_months": missing,
        "fallback_months": fallback,
        "manifest": a.out.join(agripretext::ingest::MANIFEST_FILE),
    }))
}

fn freqmap(cfg: &RunConfig, input: &Path, out: &Path) -> Result<serde_json::Value> {
    let cube = read_cube(input)?;
    let (map, report) = construct_frequency_map(&cube, cfg.signal.k)?;
    write_frequency_map(&map, out)?;
    let c0 = map.data().index_axis(ndarray::Axis(0), 0);
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for v in c0.iter().filter(|v| !v.is_nan()) {
        *hist.entry(format!("{v:.6}")).or_default() += 1;
    }
    Ok(json!({
        "dims": map.dims(),
        "invalid_pixels": report.invalid_pixels,
        "flagged_pixels": report.flagged_pixels,
        "channel0_histogram": hist,
    }))
}

fn pairs(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<serde_json::Value> {
    let cube = read_cube(input)?;
    let ts = cube.timestamps();
    let pairs = enumerate_pairs(ts, &cfg.gaps);
    let classes = cfg.model.heads.td_classes;
    let mut by_gap: BTreeMap<i64, usize> = BTreeMap::new();
    let mut by_label = vec![0usize; classes];
    for &(i, j) in &pairs {
        let gap = agripretext::months_between(ts[i], ts[j]);
        *by_gap.entry(gap).or_default() += 1;
        by_label[td_label(gap, classes)?.0] += 1;
    }
    let stats = json!({
        "frames": cube.len(),
        "gaps": cfg.gaps,
        "classes": classes,
        "pairs": pairs.len(),
        "by_gap": by_gap,
        "by_label": by_label,
    });
    if let Some(dir) = out {
        write_json(&dir.join("pairs.json"), &stats)?;
    }
    Ok(stats)
}

fn prepare_cube(cube: TimeSeriesCube) -> Result<TimeSeriesCube> {
    cube.require_canonical_bands()?;
    if cube.has_missing() {
        log::info!("filling missing pixels from neighboring months");
        let filled = cube.fill_missing_temporal();
        if filled.has_missing() {
            return Err(invalid("cube has pixels with no valid observation at all"));
        }
        return Ok(filled);
    }
    Ok(cube)
}

fn model_config(cfg: &RunConfig, cube: &TimeSeriesCube) -> Result<ModelConfig> {
    let (_, c, h, w) = cube.dims();
    let mut mc = cfg.model.clone();
    if h != w || h != mc.vit.image_size || c != mc.vit.channels {
        return Err(invalid(format!(
            "cube frames are {c}×{h}×{w} but the model expects {}×{1}×{1}; set model.vit.image_size",
            mc.vit.channels, mc.vit.image_size
        )));
    }
    if cfg.pretrain.standardize_inputs {
        mc.input_norm = Some(InputNorm::from_cube(cube));
    }
    mc.validate()?;
    Ok(mc)
}

fn pretrain(cfg: &RunConfig, input: &Path, fmap: Option<&Path>, out: &Path) -> Result<serde_json::Value> {
    let cube = prepare_cube(read_cube(input)?)?;
    let mc = model_config(cfg, &cube)?;
    let freq = match (cfg.task, fmap) {
        (Task::Fp, Some(p)) => Some(read_frequency_map(p)?),
        (Task::Fp, None) => Some(construct_frequency_map(&cube, mc.heads.fp_k)?.0),
        _ => None,
    };
    let all = enumerate_pairs(cube.timestamps(), &cfg.gaps);
    let (train_pairs, held) = split_pairs(&all, cfg.pretrain.holdout, cfg.train.seed);
    if train_pairs.is_empty() {
        return Err(invalid("no training pairs for this gap spec and holdout"));
    }
    let mut model = Model::<f32>::new(mc, cfg.seed)?;
    let data = TrainData { cube: &cube, pairs: train_pairs.clone(), freq_map: freq.as_ref() };
    let report = train(&mut model, cfg.task, &data, &cfg.train)?;

    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    save_checkpoint(out, model.config(), model.params())?;
    write_loss_trace(&out.join("loss.csv"), &report.epoch_losses)?;
    let held_loss = if held.is_empty() {
        None
    } else {
        let mut total = 0.0;
        for &(i, j) in &held {
            let s = BitemporalSample::from_cube(&cube, i, j, freq.as_ref())?;
            total += model.loss(cfg.task, &[s])? as f64;
        }
        Some(total / held.len() as f64)
    };
    let summary = json!({
        "task": cfg.task,
        "train_pairs": train_pairs.len(),
        "held_out_pairs": held.len(),
        "initial_loss": report.initial_loss,
        "final_loss": report.epoch_losses.last(),
        "held_out_loss": held_loss,
        "steps": report.steps,
        "epoch_losses": report.epoch_losses,
        "lrs": report.lrs,
    });
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

fn gradcheck(cfg: &RunConfig, tolerance: f64, out: Option<&Path>) -> Result<serde_json::Value> {
    let mc = ModelConfig::toy();
    let sits = gen_sits(&SynthSpec {
        height: mc.vit.image_size,
        width: mc.vit.image_size,
        months: 24,
        parcels: 2,
        periods: vec![6, 12],
        phases: vec![0.0, 0.25],
        seed: cfg.seed,
        ..Default::default()
    })?;
    let (fmap, _) = construct_frequency_map(&sits.cube, mc.heads.fp_k)?;
    let pairs = enumerate_pairs(sits.cube.timestamps(), &cfg.gaps);
    let (picked, _) = split_pairs(&pairs, 0.0, cfg.seed);
    let batch = picked
        .iter()
        .filter(|(i, j)| i != j)
        .take(cfg.gradcheck.batch)
        .map(|&(i, j)| BitemporalSample::from_cube(&sits.cube, i, j, Some(&fmap)))
        .collect::<agripretext::Result<Vec<_>>>()?;
    let mut model = Model::<f64>::new(mc, cfg.seed)?;
    // zero-initialized heads would leave most gradients identically zero
    model.perturb(0.2, cfg.seed.wrapping_add(1));
    let report = grad_check(&mut model, cfg.task, &batch, cfg.gradcheck.coords, cfg.gradcheck.step, cfg.seed)?;
    let value = json!({ "report": report, "tolerance": tolerance, "pass": report.max_rel_err <= tolerance });
    if let Some(dir) = out {
        write_json(&dir.join("gradcheck.json"), &value)?;
    }
    if report.max_rel_err > tolerance {
        print_json(&value);
        return Err(CliError::Runtime(format!(
            "gradient check failed: relative error {:.3e} at {}[{}]",
            report.max_rel_err, report.worst_param, report.worst_index
        )));
    }
    Ok(value)
}

fn probe(cfg: &RunConfig, ckpt: Option<&Path>, out: Option<&Path>, pretrain_out: Option<&Path>) -> Result<serde_json::Value> {
    let model = match ckpt {
        Some(dir) => {
            let (mc, params) = load_checkpoint(dir)?;
            Model::from_params(mc, params)?
        }
        None => {
            let size = cfg.model.vit.image_size;
            let set = gen_probe_set(&cfg.probe_set, size)?;
            let mut mc = cfg.model.clone();
            if cfg.pretrain.standardize_inputs {
                mc.input_norm = Some(InputNorm::from_cube(&set.pretrain.cube));
            }
            Model::new(mc, cfg.seed)?
        }
    };
    let size = model.config().vit.image_size;
    let set = gen_probe_set(&cfg.probe_set, size)?;
    if let Some(dir) = pretrain_out {
        write_synth(&set.pretrain, dir)?;
    }
    let frames = &cfg.probe_set.frames;
    let train: Vec<_> = set.train.iter().map(|c| ProbeChip::from_labeled(c, frames)).collect();
    let test: Vec<_> = set.test.iter().map(|c| ProbeChip::from_labeled(c, frames)).collect();
    let report = linear_probe(&model, &train, &test, &cfg.probe)?;
    let value = json!({
        "encoder": if ckpt.is_some() { "checkpoint" } else { "random" },
        "image_size": size,
        "report": report,
    });
    if let Some(dir) = out {
        write_json(&dir.join("probe.json"), &value)?;
    }
    Ok(value)
}
