//! Command-line front end: mapping plans, inference runs, power reports,
//! frame compression, and the power-versus-precision calibration fit.
//!
//! All outputs are machine-readable (JSON, CSV, PGM), deterministic for
//! identical inputs, and embed the SHA-256 of the active configuration.
//! Exit codes: 0 ok, 2 usage, 3 parse, 4 validation, 5 capacity.

use clap::{Args, Parser, Subcommand};
use lightator::compress::{self, CompressionPath, CompressionSpec};
use lightator::config::{self, RunConfig, CONFIG_SCHEMA_VERSION};
use lightator::error::{Error, Result};
use lightator::mapper::{self, MappingPlan, Placement};
use lightator::netir::{self, ModelDesc};
use lightator::power;
use lightator::sim::{self, Mode, RunOptions};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "lightator",
    about = "Device-to-architecture simulator for an MR-based optical near-sensor accelerator",
    version
)]
struct Cli {
    /// Configuration file (defaults to the built-in paper-calibration profile).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a model onto the optical core and print the mapping as JSON.
    Map(MapArgs),
    /// Run inference on one or more frames.
    Run(RunArgs),
    /// Per-layer, per-component power report (JSON, optional CSV).
    Power(PowerArgs),
    /// Compress a frame through the acquisition path.
    Compress(CompressArgs),
    /// Fit power versus weight precision from measured points.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct MapArgs {
    /// Model manifest (JSON).
    manifest: PathBuf,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    manifest: PathBuf,
    /// Input images (binary PPM or PGM).
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Arithmetic mode.
    #[arg(long, default_value = "ideal")]
    mode: ModeArg,
    /// Skip a leading compressive-acquisition layer (inputs are already
    /// compressed).
    #[arg(long)]
    no_compress: bool,
    /// Weight precision override: "W:A" uniform, "mx:W1:A,W:A" for a
    /// mixed scheme, or a comma list per mapped layer ("4,3,3").
    #[arg(long)]
    precision: Option<String>,
    /// Dump per-layer activation maps as PGMs into this directory.
    #[arg(long)]
    dump_featuremaps: Option<PathBuf>,
    /// Write the resolved quantization scales back into the manifest so
    /// later runs reproduce this one bit for bit.
    #[arg(long)]
    freeze_scales: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Ideal,
    Device,
}

#[derive(Args)]
struct PowerArgs {
    manifest: PathBuf,
    #[arg(long)]
    precision: Option<String>,
    /// Also write flat CSV rows (layer, component, watts).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    /// Input image (binary PPM or PGM).
    input: PathBuf,
    /// Output grayscale map (binary PGM).
    output: PathBuf,
    /// Pool size as HxW.
    #[arg(long, default_value = "2x2")]
    pool: String,
    /// Fuse RGB-to-grayscale conversion into the pooling weights.
    #[arg(long)]
    fuse: bool,
    /// Execution path.
    #[arg(long, default_value = "optical")]
    path: PathArg,
    /// Weight precision of the acquisition coefficients.
    #[arg(long, default_value_t = 4)]
    bits: u8,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PathArg {
    Optical,
    Reference,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Measured point as BITS:WATTS (repeat for each point).
    #[arg(long = "point", required = true)]
    points: Vec<String>,
    /// Predict power at these precisions.
    #[arg(long = "predict")]
    predict: Vec<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let (cfg, cfg_hash) = match &cli.config {
        Some(path) => config::load_config(path)?,
        None => (RunConfig::default(), config::default_config_hash()),
    };
    match cli.command {
        Command::Map(a) => cmd_map(a, &cfg, &cfg_hash),
        Command::Run(a) => cmd_run(a, &cfg, &cfg_hash),
        Command::Power(a) => cmd_power(a, &cfg, &cfg_hash),
        Command::Compress(a) => cmd_compress(a, &cfg, &cfg_hash),
        Command::Calibrate(a) => cmd_calibrate(a, &cfg_hash),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialization: {e}")))?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Parse a precision override against the model's mapped layers.
fn apply_precision(model: &ModelDesc, spec: &str) -> Result<ModelDesc> {
    let parse_pair = |s: &str| -> Result<u8> {
        let (w, a) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("precision {s:?} is not W:A")))?;
        let w: u8 = w
            .parse()
            .map_err(|_| Error::Parse(format!("bad weight bits {w:?}")))?;
        let a: u8 = a
            .parse()
            .map_err(|_| Error::Parse(format!("bad activation bits {a:?}")))?;
        if a != 4 {
            return Err(Error::validation(
                "activation precision is fixed at 4 bits by the VCSEL driver",
            ));
        }
        Ok(w)
    };
    if let Some(mx) = spec.strip_prefix("mx:") {
        let (first, rest) = mx
            .split_once(',')
            .ok_or_else(|| Error::Parse("mixed precision needs \"mx:W1:A,W:A\"".into()))?;
        return model.with_mixed_bits(parse_pair(first)?, parse_pair(rest)?);
    }
    if spec.contains(':') {
        return model.with_uniform_bits(parse_pair(spec)?);
    }
    // Comma list, one entry per mapped layer.
    let per_mapped: Vec<u8> = spec
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u8>()
                .map_err(|_| Error::Parse(format!("bad weight bits {t:?}")))
        })
        .collect::<Result<_>>()?;
    let mapped: Vec<usize> = model
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind.is_mapped())
        .map(|(i, _)| i)
        .collect();
    if per_mapped.len() != mapped.len() {
        return Err(Error::validation(format!(
            "precision list has {} entries for {} mapped layers",
            per_mapped.len(),
            mapped.len()
        )));
    }
    let mut assign: Vec<u8> = (0..model.layers.len())
        .map(|i| model.layer_bits(i))
        .collect();
    for (i, b) in mapped.into_iter().zip(per_mapped) {
        assign[i] = b;
    }
    model.with_weight_bits(&assign)
}

// ---------------------------------------------------------------------------
// map
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MapLayerRow {
    index: usize,
    label: String,
    dot_length: usize,
    arms_per_stride: usize,
    summation: Placement,
    unused_mrs_per_stride: usize,
    banks_per_stride: usize,
    /// Strides per bank in the bank-aligned regime.
    strides_per_bank: Option<u64>,
    strides_per_full_load: u64,
    total_strides: u64,
    bank_loads: u64,
    cycles: u64,
    cycle_splits: u64,
    mr_writes: u64,
    image_swaps: u64,
    utilization: f64,
    multiplies: u64,
}

#[derive(Serialize)]
struct MapOutput {
    schema_version: u32,
    config_sha256: String,
    model: String,
    layers: Vec<MapLayerRow>,
    totals: MapTotals,
}

#[derive(Serialize)]
struct MapTotals {
    cycles: u64,
    stall_cycles: u64,
    mr_writes: u64,
    multiplies: u64,
}

fn map_rows(
    plans: &[MappingPlan],
    geometry_banks: u64,
    stall_per_swap: u64,
) -> (Vec<MapLayerRow>, MapTotals) {
    let mut rows = Vec::with_capacity(plans.len());
    let mut totals = MapTotals {
        cycles: 0,
        stall_cycles: 0,
        mr_writes: 0,
        multiplies: 0,
    };
    for p in plans {
        let sp = &p.stride_plan;
        rows.push(MapLayerRow {
            index: p.layer_index,
            label: p.label.clone(),
            dot_length: p.dot_length,
            arms_per_stride: sp.arms_per_stride,
            summation: sp.summation,
            unused_mrs_per_stride: sp.unused_mrs_per_stride,
            banks_per_stride: sp.banks_per_stride,
            strides_per_bank: (sp.summation != Placement::MultiBank)
                .then(|| p.strides_per_full_load / geometry_banks),
            strides_per_full_load: p.strides_per_full_load,
            total_strides: p.total_strides,
            bank_loads: p.bank_loads,
            cycles: p.cycles,
            cycle_splits: sp.cycle_splits,
            mr_writes: p.mr_writes,
            image_swaps: p.counts.image_swaps,
            utilization: p.utilization,
            multiplies: p.counts.mult_slots,
        });
        totals.cycles += p.cycles;
        totals.stall_cycles += p.counts.image_swaps * stall_per_swap;
        totals.mr_writes += p.mr_writes;
        totals.multiplies += p.counts.mult_slots;
    }
    (rows, totals)
}

fn cmd_map(args: MapArgs, cfg: &RunConfig, cfg_hash: &str) -> Result<()> {
    cfg.validate()?;
    let model = netir::load_model(&args.manifest)?;
    let geometry = cfg.geometry()?;
    let plans = mapper::plan_model(&model, &geometry)?;
    let (layers, totals) = map_rows(&plans, geometry.n_banks as u64, cfg.reprogram_stall_cycles);
    emit(
        &MapOutput {
            schema_version: CONFIG_SCHEMA_VERSION,
            config_sha256: cfg_hash.into(),
            model: model.name.clone(),
            layers,
            totals,
        },
        args.out.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunFrameRow {
    image: String,
    argmax: usize,
    outputs: Vec<f64>,
    total_cycles: u64,
    stall_cycles: u64,
    reprogram_events: u64,
}

#[derive(Serialize)]
struct RunOutput {
    schema_version: u32,
    config_sha256: String,
    model: String,
    mode: Mode,
    compressed: bool,
    precision: String,
    frames: Vec<RunFrameRow>,
    aggregate_fps: f64,
    network_w: f64,
    kfps_per_w: f64,
    act_scales: Vec<f64>,
}

fn cmd_run(args: RunArgs, cfg: &RunConfig, cfg_hash: &str) -> Result<()> {
    let mut model = netir::load_model(&args.manifest)?;
    if let Some(spec) = &args.precision {
        model = apply_precision(&model, spec)?;
    }
    let opts = RunOptions {
        mode: match args.mode {
            ModeArg::Ideal => Mode::Ideal,
            ModeArg::Device => Mode::Device,
        },
        skip_leading_ca: args.no_compress,
        collect_feature_maps: args.dump_featuremaps.is_some(),
    };
    let mut frames = Vec::new();
    for path in &args.images {
        frames.push(netir::load_image(path)?);
    }
    let batch = sim::run_batch(&model, &frames, cfg, &opts)?;

    if let Some(dir) = &args.dump_featuremaps {
        std::fs::create_dir_all(dir)?;
        for (fi, run) in batch.runs.iter().enumerate() {
            for fm in run.feature_maps.iter().filter(|m| m.is_codes) {
                let samples: Vec<u8> = fm
                    .levels
                    .iter()
                    .map(|&l| (l as f64 * 17.0).round().clamp(0.0, 255.0) as u8)
                    .collect();
                // Channel planes stacked vertically.
                let mut planar = vec![0u8; samples.len()];
                for y in 0..fm.dims.h {
                    for x in 0..fm.dims.w {
                        for c in 0..fm.dims.c {
                            planar[(c * fm.dims.h + y) * fm.dims.w + x] =
                                samples[fm.dims.index(y, x, c)];
                        }
                    }
                }
                let name = format!("frame{fi}_layer{}.pgm", fm.layer_index);
                netir::save_pgm(dir.join(name), fm.dims.w, fm.dims.h * fm.dims.c, &planar)?;
            }
        }
    }

    let first = &batch.runs[0];
    if args.freeze_scales {
        netir::freeze_scales(&args.manifest, &model, &first.act_scales)?;
    }
    let out = RunOutput {
        schema_version: CONFIG_SCHEMA_VERSION,
        config_sha256: cfg_hash.into(),
        model: model.name.clone(),
        mode: first.mode,
        compressed: first.compressed,
        precision: args.precision.clone().unwrap_or_else(|| "manifest".into()),
        frames: args
            .images
            .iter()
            .zip(&batch.runs)
            .map(|(p, r)| RunFrameRow {
                image: p.display().to_string(),
                argmax: r.argmax,
                outputs: r.outputs.clone(),
                total_cycles: r.total_cycles,
                stall_cycles: r.stall_cycles,
                reprogram_events: r.reprogram_events,
            })
            .collect(),
        aggregate_fps: batch.aggregate_fps,
        network_w: first.power.network_w,
        kfps_per_w: first.power.kfps_per_w,
        act_scales: first.act_scales.clone(),
    };
    emit(&out, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// power
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PowerOutput {
    schema_version: u32,
    config_sha256: String,
    model: String,
    precision: String,
    report: power::PowerReport,
}

fn cmd_power(args: PowerArgs, cfg: &RunConfig, cfg_hash: &str) -> Result<()> {
    cfg.validate()?;
    let mut model = netir::load_model(&args.manifest)?;
    if let Some(spec) = &args.precision {
        model = apply_precision(&model, spec)?;
    }
    let geometry = cfg.geometry()?;
    let plans = mapper::plan_model(&model, &geometry)?;
    let bits: Vec<u8> = plans
        .iter()
        .map(|p| model.layer_bits(p.layer_index))
        .collect();
    let report = power::network_report(&plans, &bits, &cfg.energy(), cfg.reprogram_stall_cycles)?;

    if let Some(path) = &args.csv {
        let mut csv = String::from("layer,component,watts\n");
        for l in &report.layers {
            for (name, watts) in l.watts.as_rows() {
                csv.push_str(&format!("{},{},{:.6e}\n", l.layer_index, name, watts));
            }
        }
        std::fs::write(path, csv)?;
    }
    emit(
        &PowerOutput {
            schema_version: CONFIG_SCHEMA_VERSION,
            config_sha256: cfg_hash.into(),
            model: model.name.clone(),
            precision: args.precision.clone().unwrap_or_else(|| "manifest".into()),
            report,
        },
        args.out.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// compress
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CompressSidecar {
    schema_version: u32,
    config_sha256: String,
    input: String,
    output: String,
    pool_h: usize,
    pool_w: usize,
    fuse_grayscale: bool,
    path: CompressionPath,
    weight_bits: u8,
    out_height: usize,
    out_width: usize,
}

fn cmd_compress(args: CompressArgs, cfg: &RunConfig, cfg_hash: &str) -> Result<()> {
    cfg.validate()?;
    let (ph, pw) = args
        .pool
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .ok_or_else(|| Error::Parse(format!("pool {:?} is not HxW", args.pool)))?;
    let frame = netir::load_image(&args.input)?;
    let fuse = args.fuse || frame.dims.c == 3;
    let spec = CompressionSpec::new(ph, pw, fuse)?;
    let path = match args.path {
        PathArg::Optical => CompressionPath::Optical,
        PathArg::Reference => CompressionPath::Reference,
    };
    let out = compress::compress_frame(&frame, &spec, path, args.bits, &cfg.geometry()?)?;
    // One output channel per plane, stacked vertically for multi-channel maps.
    let mut samples = vec![0u8; out.values.len()];
    for y in 0..out.dims.h {
        for x in 0..out.dims.w {
            for c in 0..out.dims.c {
                samples[(c * out.dims.h + y) * out.dims.w + x] = out.values[out.dims.index(y, x, c)]
                    .round()
                    .clamp(0.0, 255.0)
                    as u8;
            }
        }
    }
    netir::save_pgm(&args.output, out.dims.w, out.dims.h * out.dims.c, &samples)?;
    let sidecar = CompressSidecar {
        schema_version: CONFIG_SCHEMA_VERSION,
        config_sha256: cfg_hash.into(),
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        pool_h: ph,
        pool_w: pw,
        fuse_grayscale: fuse,
        path,
        weight_bits: args.bits,
        out_height: out.dims.h,
        out_width: out.dims.w,
    };
    let sidecar_path = args.output.with_extension("json");
    emit(&sidecar, Some(&sidecar_path))
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CalibratePoint {
    weight_bits: u8,
    watts: f64,
}

#[derive(Serialize)]
struct CalibrateOutput {
    schema_version: u32,
    config_sha256: String,
    alpha: f64,
    beta: f64,
    points: Vec<CalibratePoint>,
    predictions: Vec<CalibratePoint>,
}

fn cmd_calibrate(args: CalibrateArgs, cfg_hash: &str) -> Result<()> {
    let mut points = Vec::new();
    for p in &args.points {
        let (b, w) = p
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("point {p:?} is not BITS:WATTS")))?;
        let bits: u8 = b
            .parse()
            .map_err(|_| Error::Parse(format!("bad bits {b:?}")))?;
        let watts: f64 = w
            .parse()
            .map_err(|_| Error::Parse(format!("bad watts {w:?}")))?;
        points.push((bits, watts));
    }
    let (alpha, beta) = power::calibrate(&points)?;
    let mut predictions = Vec::new();
    for &b in &args.predict {
        predictions.push(CalibratePoint {
            weight_bits: b,
            watts: power::predict(alpha, beta, b)?,
        });
    }
    emit(
        &CalibrateOutput {
            schema_version: CONFIG_SCHEMA_VERSION,
            config_sha256: cfg_hash.into(),
            alpha,
            beta,
            points: points
                .into_iter()
                .map(|(weight_bits, watts)| CalibratePoint { weight_bits, watts })
                .collect(),
            predictions,
        },
        args.out.as_deref(),
    )
}
