//! End-to-end scheduler.
//!
//! A run feeds the acquired frame through the layers in manifest order. The
//! loop-back between layers mirrors the selector in front of the VCSEL
//! drivers: between layers only 4-bit activation codes (plus their scale)
//! travel, never floats. Mapped layers (conv, FC, compressive acquisition)
//! execute on the optical core and produce exact integer accumulators in
//! ideal mode; activation layers run in the electronic domain and requantize
//! to the next layer's 4-bit feed. A mapped layer feeding another mapped
//! layer directly gets a linear clamp-to-positive requantization, the
//! hardware's ReLU-less pre-VCSEL conversion.
//!
//! Activation scales are resolved on the fly from the run's own frame (the
//! default calibration set) unless the manifest carries frozen scales.
//! Because they derive from exact integer accumulators, the simulator and
//! the independent oracle resolve identical scales.
//!
//! [`oracle_inference`] is the verification path: a naive nested-loop
//! integer implementation of every layer that shares only the domain types
//! and quantization helpers with the optical pipeline, none of the core or
//! mapping machinery.

use crate::compress::{self, CompressionSpec};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mapper::{self, MappingPlan};
use crate::netir::{Dims, Frame, Layer, LayerKind, ModelDesc};
use crate::optical_core::{CoreGeometry, DeviceModel, ExecMode};
use crate::power::{self, PowerReport};
use crate::quant::{self, ActivationFn};
use serde::{Deserialize, Serialize};

/// Arithmetic mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Bit-exact integer semantics.
    Ideal,
    /// Analog reconstruction through the photonic models.
    Device,
}

/// Per-run options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    /// Treat the input frame as already compressed and skip a leading
    /// compressive-acquisition layer.
    pub skip_leading_ca: bool,
    pub collect_feature_maps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Ideal,
            skip_leading_ca: false,
            collect_feature_maps: true,
        }
    }
}

/// One layer's output map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub layer_index: usize,
    pub dims: Dims,
    pub levels: Vec<i64>,
    pub scale: f64,
    /// True for 4-bit code maps, false for raw accumulator maps.
    pub is_codes: bool,
}

/// Result of one inference run.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Dequantized final values.
    pub outputs: Vec<f64>,
    pub argmax: usize,
    /// Final integer levels (accumulators or codes).
    pub final_levels: Vec<i64>,
    pub final_scale: f64,
    pub feature_maps: Vec<FeatureMap>,
    /// Resolved input-activation scale per layer (0 where not applicable).
    pub act_scales: Vec<f64>,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    /// MR programming events over the frame.
    pub reprogram_events: u64,
    pub power: PowerReport,
    pub mode: Mode,
    pub compressed: bool,
}

enum Flow {
    Codes {
        codes: Vec<u8>,
        dims: Dims,
        scale: f64,
    },
    Accums {
        accums: Vec<i64>,
        dims: Dims,
        scale: f64,
    },
}

/// Linear requantization of accumulators into 4-bit codes, clamping
/// negatives to zero. The output scale maps the observed maximum onto code
/// 15 unless a frozen target is given.
fn requant_linear(accums: &[i64], accum_scale: f64, target: Option<f64>) -> (Vec<u8>, f64) {
    let out_scale = target.unwrap_or_else(|| {
        let max = accums
            .iter()
            .map(|&a| (a as f64 * accum_scale).max(0.0))
            .fold(0.0_f64, f64::max);
        quant::act_scale_from_max(max)
    });
    let codes = accums
        .iter()
        .map(|&a| quant::quantize_act((a as f64 * accum_scale).max(0.0), out_scale))
        .collect();
    (codes, out_scale)
}

fn frozen_scale(model: &ModelDesc, layer: usize) -> Option<f64> {
    model
        .act_scales
        .as_ref()
        .and_then(|v| v.get(layer).copied())
        .filter(|&s| s > 0.0)
}

/// The layers a run executes and the dims its frame must match.
fn effective_layers<'m>(
    model: &'m ModelDesc,
    opts: &RunOptions,
) -> Result<(Vec<(usize, &'m Layer)>, Dims, bool)> {
    model.validate_chain()?;
    let mut layers: Vec<(usize, &Layer)> = model.layers.iter().enumerate().collect();
    let mut input = model.input;
    let mut skipped = false;
    if opts.skip_leading_ca {
        if let Some((i, first)) = layers.first().copied() {
            if let LayerKind::CompressiveAcquisition { .. } = first.kind {
                input = first.kind.out_dims(i, model.input)?;
                layers.remove(0);
                skipped = true;
            }
        }
        if !skipped {
            return Err(Error::validation(
                "cannot skip compression: the model does not start with an acquisition layer",
            ));
        }
    }
    let has_ca = layers
        .iter()
        .any(|(_, l)| matches!(l.kind, LayerKind::CompressiveAcquisition { .. }));
    Ok((layers, input, has_ca))
}

/// Plan the mapped layers of a run (original layer indices preserved).
fn plan_run(
    layers: &[(usize, &Layer)],
    input: Dims,
    geometry: &CoreGeometry,
) -> Result<(Vec<MappingPlan>, Vec<u8>)> {
    let mut plans = Vec::new();
    let mut bits = Vec::new();
    let mut dims = input;
    let mut first = true;
    for (i, layer) in layers {
        if layer.kind.is_mapped() {
            let mut plan = mapper::plan_layer(*i, &layer.kind, dims, geometry)?;
            if first {
                plan.counts.crc_reads = dims.len() as u64;
                first = false;
            }
            plans.push(plan);
            bits.push(layer.weight_bits.unwrap_or(4));
        }
        dims = layer.kind.out_dims(*i, dims)?;
    }
    Ok((plans, bits))
}

/// Execute a conv or FC layer on the core.
fn execute_mapped(
    layer_index: usize,
    layer: &Layer,
    plan: &MappingPlan,
    codes: &[u8],
    in_dims: Dims,
    geometry: &CoreGeometry,
    mode: &mut ExecMode,
) -> Result<(Vec<i64>, Dims)> {
    let out = layer.kind.out_dims(layer_index, in_dims)?;
    let dot = plan.dot_length;
    let accums: Vec<i64> = match &layer.kind {
        LayerKind::Conv {
            kernel,
            c_in,
            stride,
            padding,
            ..
        } => {
            let wq = layer
                .weights
                .as_ref()
                .ok_or_else(|| Error::validation_at(layer_index, "conv layer has no weights"))?;
            let positions = (out.h * out.w) as u64;
            let (kk, cc, st, pad) = (*kernel, *c_in, *stride, *padding);
            let weight_of = |s: u64, buf: &mut Vec<i32>| {
                let k = (s / positions) as usize;
                buf.extend_from_slice(&wq.levels[k * dot..(k + 1) * dot]);
            };
            let acts_of = |s: u64, buf: &mut Vec<u8>| {
                let pos = s % positions;
                let oy = (pos / out.w as u64) as usize;
                let ox = (pos % out.w as u64) as usize;
                for c in 0..cc {
                    for ky in 0..kk {
                        for kx in 0..kk {
                            let y = (oy * st + ky) as isize - pad as isize;
                            let x = (ox * st + kx) as isize - pad as isize;
                            // Zero padding feeds a dark channel.
                            let code = if y >= 0
                                && (y as usize) < in_dims.h
                                && x >= 0
                                && (x as usize) < in_dims.w
                            {
                                codes[in_dims.index(y as usize, x as usize, c)]
                            } else {
                                0
                            };
                            buf.push(code);
                        }
                    }
                }
            };
            let values = mapper::execute_layer(
                plan,
                geometry,
                mode,
                quant::weight_level_range(layer.weight_bits.unwrap_or(4))?,
                &weight_of,
                &acts_of,
            )?;
            // Stride ids are kernel-major; the feature map is channel-innermost.
            let mut levels = vec![0i64; out.len()];
            for (s, v) in values.iter().enumerate() {
                let k = s / positions as usize;
                let pos = s % positions as usize;
                let oy = pos / out.w;
                let ox = pos % out.w;
                levels[out.index(oy, ox, k)] = v.to_i64();
            }
            levels
        }
        LayerKind::Fc { n_in, .. } => {
            let wq = layer
                .weights
                .as_ref()
                .ok_or_else(|| Error::validation_at(layer_index, "fc layer has no weights"))?;
            debug_assert_eq!(*n_in, codes.len());
            let weight_of = |s: u64, buf: &mut Vec<i32>| {
                buf.extend_from_slice(&wq.levels[s as usize * dot..(s as usize + 1) * dot]);
            };
            let acts_of = |_s: u64, buf: &mut Vec<u8>| buf.extend_from_slice(codes);
            let values = mapper::execute_layer(
                plan,
                geometry,
                mode,
                quant::weight_level_range(layer.weight_bits.unwrap_or(4))?,
                &weight_of,
                &acts_of,
            )?;
            values.iter().map(|v| v.to_i64()).collect()
        }
        _ => unreachable!("execute_mapped called on a non-weighted layer"),
    };
    Ok((accums, out))
}

/// Run a frame through a model.
pub fn run_inference(
    model: &ModelDesc,
    frame: &Frame,
    cfg: &RunConfig,
    opts: &RunOptions,
) -> Result<RunResult> {
    cfg.validate()?;
    let geometry = cfg.geometry()?;
    let (layers, expected_input, has_ca) = effective_layers(model, opts)?;
    if frame.dims != expected_input {
        return Err(Error::validation(format!(
            "frame dims {:?} do not match the model input {:?}",
            frame.dims, expected_input
        )));
    }
    let (plans, bits) = plan_run(&layers, expected_input, &geometry)?;
    let report = power::network_report(&plans, &bits, &cfg.energy(), cfg.reprogram_stall_cycles)?;

    let mut mode = match opts.mode {
        Mode::Ideal => ExecMode::Ideal,
        Mode::Device => ExecMode::Device(DeviceModel::new(
            cfg.device()?,
            cfg.t_top_weight,
            cfg.noise_sigma,
            cfg.noise_seed,
        )?),
    };

    let mut flow = Flow::Codes {
        codes: frame.codes.clone(),
        dims: frame.dims,
        scale: frame.act_scale,
    };
    let mut act_scales = vec![0.0f64; model.layers.len()];
    let mut feature_maps = Vec::new();
    let mut plan_iter = plans.iter();

    for (i, layer) in &layers {
        let i = *i;
        match &layer.kind {
            LayerKind::Activation(f) => {
                let Flow::Accums {
                    accums,
                    dims,
                    scale,
                } = flow
                else {
                    return Err(Error::validation_at(
                        i,
                        "activation layer needs a preceding MAC layer output",
                    ));
                };
                // The requant target is the scale of the codes entering the
                // next layer, frozen in the manifest or calibrated here.
                let target = frozen_scale(model, i + 1);
                let (codes, out_scale) = match f {
                    ActivationFn::Relu => requant_linear(&accums, scale, target),
                    ActivationFn::Sign => (
                        accums
                            .iter()
                            .map(|&a| quant::apply_activation(ActivationFn::Sign, a, scale, 1.0))
                            .collect(),
                        quant::SIGN_OUT_SCALE,
                    ),
                    ActivationFn::Tanh => (
                        accums
                            .iter()
                            .map(|&a| quant::apply_activation(ActivationFn::Tanh, a, scale, 1.0))
                            .collect(),
                        quant::TANH_OUT_SCALE,
                    ),
                };
                if i + 1 < model.layers.len() {
                    act_scales[i + 1] = out_scale;
                }
                if opts.collect_feature_maps {
                    feature_maps.push(FeatureMap {
                        layer_index: i,
                        dims,
                        levels: codes.iter().map(|&c| c as i64).collect(),
                        scale: out_scale,
                        is_codes: true,
                    });
                }
                flow = Flow::Codes {
                    codes,
                    dims,
                    scale: out_scale,
                };
            }
            kind => {
                // Mapped layer: make sure the feed is 4-bit codes.
                let (codes, dims, scale) = match flow {
                    Flow::Codes { codes, dims, scale } => (codes, dims, scale),
                    Flow::Accums {
                        accums,
                        dims,
                        scale,
                    } => {
                        let (codes, out_scale) =
                            requant_linear(&accums, scale, frozen_scale(model, i));
                        (codes, dims, out_scale)
                    }
                };
                act_scales[i] = scale;
                let plan = plan_iter.next().expect("one plan per mapped layer");
                let (accums, out_dims, accum_scale) = match kind {
                    LayerKind::CompressiveAcquisition {
                        pool_h,
                        pool_w,
                        fuse_grayscale,
                    } => {
                        let spec = CompressionSpec::new(*pool_h, *pool_w, *fuse_grayscale)?;
                        let (accums, out_dims, qspec) = compress::compress_codes(
                            &codes,
                            dims,
                            scale,
                            &spec,
                            layer.weight_bits.unwrap_or(4),
                            &geometry,
                            &mut mode,
                        )?;
                        // Channel-major stride order into channel-innermost maps.
                        let per_channel = out_dims.h * out_dims.w;
                        let mut levels = vec![0i64; out_dims.len()];
                        for (s, &a) in accums.iter().enumerate() {
                            let c = s / per_channel;
                            let pos = s % per_channel;
                            levels[out_dims.index(pos / out_dims.w, pos % out_dims.w, c)] = a;
                        }
                        (levels, out_dims, qspec.accum_scale())
                    }
                    _ => {
                        let (accums, out_dims) =
                            execute_mapped(i, layer, plan, &codes, dims, &geometry, &mut mode)?;
                        let w_scale = layer.weights.as_ref().map(|t| t.scale).unwrap_or(1.0);
                        (accums, out_dims, w_scale * scale)
                    }
                };
                if opts.collect_feature_maps {
                    feature_maps.push(FeatureMap {
                        layer_index: i,
                        dims: out_dims,
                        levels: accums.clone(),
                        scale: accum_scale,
                        is_codes: false,
                    });
                }
                flow = Flow::Accums {
                    accums,
                    dims: out_dims,
                    scale: accum_scale,
                };
            }
        }
    }

    let (final_levels, final_scale) = match flow {
        Flow::Accums { accums, scale, .. } => (accums, scale),
        Flow::Codes { codes, scale, .. } => (codes.iter().map(|&c| c as i64).collect(), scale),
    };
    let outputs: Vec<f64> = final_levels
        .iter()
        .map(|&l| l as f64 * final_scale)
        .collect();
    let argmax = outputs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite outputs"))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let compute_cycles: u64 = plans.iter().map(|p| p.cycles).sum();
    let stall_cycles = report.frame_cycles - compute_cycles;
    let reprogram_events: u64 = plans.iter().map(|p| p.mr_writes).sum();
    Ok(RunResult {
        outputs,
        argmax,
        final_levels,
        final_scale,
        feature_maps,
        act_scales,
        compute_cycles,
        stall_cycles,
        total_cycles: report.frame_cycles,
        reprogram_events,
        power: report,
        mode: opts.mode,
        compressed: has_ca && !opts.skip_leading_ca,
    })
}

/// Batch run: independent runs plus the aggregate frame rate.
pub struct BatchResult {
    pub runs: Vec<RunResult>,
    pub aggregate_fps: f64,
}

pub fn run_batch(
    model: &ModelDesc,
    frames: &[Frame],
    cfg: &RunConfig,
    opts: &RunOptions,
) -> Result<BatchResult> {
    if frames.is_empty() {
        return Err(Error::validation("batch needs at least one frame"));
    }
    let mut runs = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let run = run_inference(model, frame, cfg, opts).map_err(|e| match e {
            Error::Validation { layer, message } => Error::Validation {
                layer,
                message: format!("frame {i}: {message}"),
            },
            other => other,
        })?;
        runs.push(run);
    }
    let total_cycles: u64 = runs.iter().map(|r| r.total_cycles).sum();
    let aggregate_fps = cfg.core_clock_hz * runs.len() as f64 / total_cycles as f64;
    Ok(BatchResult {
        runs,
        aggregate_fps,
    })
}

// ---------------------------------------------------------------------------
// Independent oracle
// ---------------------------------------------------------------------------

/// Oracle output: the ground truth for ideal-mode runs.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub final_levels: Vec<i64>,
    pub final_scale: f64,
    pub outputs: Vec<f64>,
    pub argmax: usize,
    pub feature_maps: Vec<FeatureMap>,
}

/// Naive nested-loop integer implementation of every layer. Shares the
/// domain types and quantization helpers with the simulator but none of the
/// core execution or mapping machinery.
pub fn oracle_inference(
    model: &ModelDesc,
    frame: &Frame,
    skip_leading_ca: bool,
) -> Result<OracleResult> {
    let opts = RunOptions {
        skip_leading_ca,
        ..Default::default()
    };
    let (layers, expected_input, _) = effective_layers(model, &opts)?;
    if frame.dims != expected_input {
        return Err(Error::validation(format!(
            "frame dims {:?} do not match the model input {:?}",
            frame.dims, expected_input
        )));
    }

    let mut flow = Flow::Codes {
        codes: frame.codes.clone(),
        dims: frame.dims,
        scale: frame.act_scale,
    };
    let mut feature_maps = Vec::new();

    for (i, layer) in &layers {
        let i = *i;
        match &layer.kind {
            LayerKind::Activation(f) => {
                let Flow::Accums {
                    accums,
                    dims,
                    scale,
                } = flow
                else {
                    return Err(Error::validation_at(
                        i,
                        "activation layer needs a preceding MAC layer output",
                    ));
                };
                let target = frozen_scale(model, i + 1);
                let (codes, out_scale) = match f {
                    ActivationFn::Relu => requant_linear(&accums, scale, target),
                    ActivationFn::Sign => (
                        accums
                            .iter()
                            .map(|&a| quant::apply_activation(ActivationFn::Sign, a, scale, 1.0))
                            .collect(),
                        quant::SIGN_OUT_SCALE,
                    ),
                    ActivationFn::Tanh => (
                        accums
                            .iter()
                            .map(|&a| quant::apply_activation(ActivationFn::Tanh, a, scale, 1.0))
                            .collect(),
                        quant::TANH_OUT_SCALE,
                    ),
                };
                feature_maps.push(FeatureMap {
                    layer_index: i,
                    dims,
                    levels: codes.iter().map(|&c| c as i64).collect(),
                    scale: out_scale,
                    is_codes: true,
                });
                flow = Flow::Codes {
                    codes,
                    dims,
                    scale: out_scale,
                };
            }
            kind => {
                let (codes, dims, scale) = match flow {
                    Flow::Codes { codes, dims, scale } => (codes, dims, scale),
                    Flow::Accums {
                        accums,
                        dims,
                        scale,
                    } => {
                        let (codes, out_scale) =
                            requant_linear(&accums, scale, frozen_scale(model, i));
                        (codes, dims, out_scale)
                    }
                };
                let out_dims = kind.out_dims(i, dims)?;
                let (levels, accum_scale) =
                    match kind {
                        LayerKind::Conv {
                            kernel,
                            c_in,
                            c_out,
                            stride,
                            padding,
                        } => {
                            let wq = layer.weights.as_ref().ok_or_else(|| {
                                Error::validation_at(i, "conv layer has no weights")
                            })?;
                            let mut levels = vec![0i64; out_dims.len()];
                            for co in 0..*c_out {
                                for oy in 0..out_dims.h {
                                    for ox in 0..out_dims.w {
                                        let mut acc = 0i64;
                                        let mut widx = co * c_in * kernel * kernel;
                                        for c in 0..*c_in {
                                            for ky in 0..*kernel {
                                                for kx in 0..*kernel {
                                                    let y = (oy * stride + ky) as isize
                                                        - *padding as isize;
                                                    let x = (ox * stride + kx) as isize
                                                        - *padding as isize;
                                                    if y >= 0
                                                        && (y as usize) < dims.h
                                                        && x >= 0
                                                        && (x as usize) < dims.w
                                                    {
                                                        acc += codes
                                                            [dims.index(y as usize, x as usize, c)]
                                                            as i64
                                                            * wq.levels[widx] as i64;
                                                    }
                                                    widx += 1;
                                                }
                                            }
                                        }
                                        levels[out_dims.index(oy, ox, co)] = acc;
                                    }
                                }
                            }
                            (levels, wq.scale * scale)
                        }
                        LayerKind::Fc { n_in, n_out } => {
                            let wq = layer.weights.as_ref().ok_or_else(|| {
                                Error::validation_at(i, "fc layer has no weights")
                            })?;
                            let mut levels = vec![0i64; *n_out];
                            for (n, level) in levels.iter_mut().enumerate() {
                                let mut acc = 0i64;
                                for j in 0..*n_in {
                                    acc += codes[j] as i64 * wq.levels[n * n_in + j] as i64;
                                }
                                *level = acc;
                            }
                            (levels, wq.scale * scale)
                        }
                        LayerKind::CompressiveAcquisition {
                            pool_h,
                            pool_w,
                            fuse_grayscale,
                        } => {
                            let spec = CompressionSpec::new(*pool_h, *pool_w, *fuse_grayscale)?;
                            let qspec = quant::make_weight_qspec(
                                &spec.coefficients,
                                layer.weight_bits.unwrap_or(4),
                                scale,
                            )?;
                            let wq = quant::quantize_weights(
                                &spec.coefficients,
                                &qspec,
                                vec![spec.dot_length()],
                            )?;
                            let mut levels = vec![0i64; out_dims.len()];
                            for oy in 0..out_dims.h {
                                for ox in 0..out_dims.w {
                                    if *fuse_grayscale {
                                        let mut acc = 0i64;
                                        let mut widx = 0;
                                        for py in 0..*pool_h {
                                            for px in 0..*pool_w {
                                                for c in 0..3 {
                                                    acc += codes[dims.index(
                                                        oy * pool_h + py,
                                                        ox * pool_w + px,
                                                        c,
                                                    )]
                                                        as i64
                                                        * wq.levels[widx] as i64;
                                                    widx += 1;
                                                }
                                            }
                                        }
                                        levels[out_dims.index(oy, ox, 0)] = acc;
                                    } else {
                                        for c in 0..out_dims.c {
                                            let mut acc = 0i64;
                                            let mut widx = 0;
                                            for py in 0..*pool_h {
                                                for px in 0..*pool_w {
                                                    acc += codes[dims.index(
                                                        oy * pool_h + py,
                                                        ox * pool_w + px,
                                                        c,
                                                    )]
                                                        as i64
                                                        * wq.levels[widx] as i64;
                                                    widx += 1;
                                                }
                                            }
                                            levels[out_dims.index(oy, ox, c)] = acc;
                                        }
                                    }
                                }
                            }
                            (levels, qspec.accum_scale())
                        }
                        LayerKind::Activation(_) => unreachable!(),
                    };
                feature_maps.push(FeatureMap {
                    layer_index: i,
                    dims: out_dims,
                    levels: levels.clone(),
                    scale: accum_scale,
                    is_codes: false,
                });
                flow = Flow::Accums {
                    accums: levels,
                    dims: out_dims,
                    scale: accum_scale,
                };
            }
        }
    }

    let (final_levels, final_scale) = match flow {
        Flow::Accums { accums, scale, .. } => (accums, scale),
        Flow::Codes { codes, scale, .. } => (codes.iter().map(|&c| c as i64).collect(), scale),
    };
    let outputs: Vec<f64> = final_levels
        .iter()
        .map(|&l| l as f64 * final_scale)
        .collect();
    let argmax = outputs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite outputs"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(OracleResult {
        final_levels,
        final_scale,
        outputs,
        argmax,
        feature_maps,
    })
}
