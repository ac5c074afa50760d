//! Network intermediate representation, manifest and weight-blob loading,
//! image ingestion, and shape validation.
//!
//! A model is described by a JSON manifest listing layers in execution order.
//! Convolution and fully-connected layers reference raw weight blobs stored
//! as little-endian 32-bit floats in separate files: conv weights are ordered
//! `(c_out, c_in, k_row, k_col)`, FC weights `(n_out, n_in)`. Quantization
//! scales are computed at first load and can be written back into the
//! manifest so subsequent runs reproduce bit for bit.
//!
//! Images come in as binary PPM (P6) or PGM (P5) with 8-bit samples. Each
//! sample passes through the CRC model of the imager, which with the default
//! uniform thresholds reduces to `floor(v / 16)`, yielding the 4-bit codes
//! the rest of the pipeline operates on.

use crate::error::{Error, Result};
use crate::photonics::crc_quantize;
use crate::quant::{self, ActivationFn, QTensor};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Spatial dimensions of a tensor flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(y, x, c)` in row-major, channel-innermost order.
    /// This is also the flattening order FC layers consume.
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.w + x) * self.c + ch
    }
}

/// Layer descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        padding: usize,
    },
    Fc {
        n_in: usize,
        n_out: usize,
    },
    CompressiveAcquisition {
        pool_h: usize,
        pool_w: usize,
        fuse_grayscale: bool,
    },
    Activation(ActivationFn),
}

impl LayerKind {
    /// Short label used in reports and CSV rows.
    pub fn label(&self) -> String {
        match self {
            LayerKind::Conv { kernel, .. } => format!("conv{kernel}x{kernel}"),
            LayerKind::Fc { .. } => "fc".into(),
            LayerKind::CompressiveAcquisition { pool_h, pool_w, .. } => {
                format!("ca{pool_h}x{pool_w}")
            }
            LayerKind::Activation(f) => format!("act_{}", f.name()),
        }
    }

    /// Number of weight values the layer's blob must contain.
    pub fn weight_count(&self) -> usize {
        match self {
            LayerKind::Conv {
                kernel,
                c_in,
                c_out,
                ..
            } => c_out * c_in * kernel * kernel,
            LayerKind::Fc { n_in, n_out } => n_out * n_in,
            _ => 0,
        }
    }

    /// Whether this layer executes on the optical core.
    pub fn is_mapped(&self) -> bool {
        !matches!(self, LayerKind::Activation(_))
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv { .. })
    }

    /// Output dims given input dims, or a located validation error.
    pub fn out_dims(&self, layer: usize, d: Dims) -> Result<Dims> {
        match *self {
            LayerKind::Conv {
                kernel,
                c_in,
                c_out,
                stride,
                padding,
            } => {
                if c_in != d.c {
                    return Err(Error::validation_at(
                        layer,
                        format!("conv expects {c_in} input channels, got {}", d.c),
                    ));
                }
                if stride == 0 {
                    return Err(Error::validation_at(layer, "conv stride must be >= 1"));
                }
                let eff_h = d.h + 2 * padding;
                let eff_w = d.w + 2 * padding;
                if eff_h < kernel || eff_w < kernel {
                    return Err(Error::validation_at(
                        layer,
                        format!("kernel {kernel} does not fit padded input {eff_h}x{eff_w}"),
                    ));
                }
                Ok(Dims::new(
                    (eff_h - kernel) / stride + 1,
                    (eff_w - kernel) / stride + 1,
                    c_out,
                ))
            }
            LayerKind::Fc { n_in, n_out } => {
                if d.len() != n_in {
                    return Err(Error::validation_at(
                        layer,
                        format!("fc expects {n_in} inputs, got {} ({:?})", d.len(), d),
                    ));
                }
                Ok(Dims::new(1, 1, n_out))
            }
            LayerKind::CompressiveAcquisition {
                pool_h,
                pool_w,
                fuse_grayscale,
            } => {
                if pool_h == 0 || pool_w == 0 {
                    return Err(Error::validation_at(layer, "pool dims must be >= 1"));
                }
                if d.h % pool_h != 0 || d.w % pool_w != 0 {
                    return Err(Error::validation_at(
                        layer,
                        format!(
                            "input {}x{} not divisible by pool {pool_h}x{pool_w}",
                            d.h, d.w
                        ),
                    ));
                }
                if fuse_grayscale && d.c != 3 {
                    return Err(Error::validation_at(
                        layer,
                        format!("grayscale fusion needs 3 channels, got {}", d.c),
                    ));
                }
                let c = if fuse_grayscale { 1 } else { d.c };
                Ok(Dims::new(d.h / pool_h, d.w / pool_w, c))
            }
            LayerKind::Activation(_) => Ok(d),
        }
    }
}

/// One layer of a loaded model.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// Weight precision for mapped layers carrying (or deriving) weights.
    pub weight_bits: Option<u8>,
    /// Raw weights as loaded (f32 widened to f64), conv/FC only.
    pub raw_weights: Option<Vec<f64>>,
    /// Quantized weights at `weight_bits`, conv/FC only.
    pub weights: Option<QTensor>,
}

impl Layer {
    pub fn weightless(kind: LayerKind) -> Self {
        Self {
            kind,
            weight_bits: None,
            raw_weights: None,
            weights: None,
        }
    }
}

/// A loaded, validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDesc {
    pub name: String,
    pub input: Dims,
    pub layers: Vec<Layer>,
    /// Per-layer input activation scales, resolved by a calibration pass and
    /// optionally frozen in the manifest. `act_scales[i]` is the scale of the
    /// codes flowing into layer `i`.
    pub act_scales: Option<Vec<f64>>,
}

impl ModelDesc {
    /// Validate the shape chain and return each layer's output dims.
    pub fn validate_chain(&self) -> Result<Vec<Dims>> {
        validate_chain(self, self.input)
    }

    /// Dims flowing into each layer (input of layer i).
    pub fn input_dims(&self) -> Result<Vec<Dims>> {
        let outs = self.validate_chain()?;
        let mut ins = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (i, _) in self.layers.iter().enumerate() {
            ins.push(cur);
            cur = outs[i];
        }
        Ok(ins)
    }

    /// Weight precision per layer with 4 bits assumed where unspecified.
    pub fn layer_bits(&self, i: usize) -> u8 {
        self.layers[i].weight_bits.unwrap_or(4)
    }

    /// Re-quantize every weighted layer at new precisions. `bits_per_layer`
    /// holds one entry per model layer (entries for weightless layers are
    /// ignored). Frozen activation scales are dropped since they were
    /// calibrated at the old precision.
    pub fn with_weight_bits(&self, bits_per_layer: &[u8]) -> Result<ModelDesc> {
        if bits_per_layer.len() != self.layers.len() {
            return Err(Error::validation(format!(
                "precision override has {} entries for {} layers",
                bits_per_layer.len(),
                self.layers.len()
            )));
        }
        let mut out = self.clone();
        out.act_scales = None;
        for (i, layer) in out.layers.iter_mut().enumerate() {
            if !layer.kind.is_mapped() {
                continue;
            }
            let bits = bits_per_layer[i];
            quant::weight_level_range(bits).map_err(|e| Error::validation_at(i, e.to_string()))?;
            layer.weight_bits = Some(bits);
            if let Some(raw) = &layer.raw_weights {
                let spec = quant::make_weight_qspec(raw, bits, 1.0)?;
                let dims = layer
                    .weights
                    .as_ref()
                    .map(|t| t.dims.clone())
                    .unwrap_or(vec![raw.len()]);
                layer.weights = Some(quant::quantize_weights(raw, &spec, dims)?);
            }
        }
        Ok(out)
    }

    /// Uniform precision override across all weighted layers.
    pub fn with_uniform_bits(&self, bits: u8) -> Result<ModelDesc> {
        self.with_weight_bits(&vec![bits; self.layers.len()])
    }

    /// Mixed scheme: the first weighted layer keeps `first`, the rest get `rest`.
    pub fn with_mixed_bits(&self, first: u8, rest: u8) -> Result<ModelDesc> {
        let mut assign = vec![rest; self.layers.len()];
        if let Some(i) = self.layers.iter().position(|l| l.kind.is_mapped()) {
            assign[i] = first;
        }
        self.with_weight_bits(&assign)
    }
}

/// Validate the chain of a model against explicit input dims.
pub fn validate_chain(model: &ModelDesc, input: Dims) -> Result<Vec<Dims>> {
    if model.layers.is_empty() {
        return Err(Error::validation("model has no layers"));
    }
    let mut dims = Vec::with_capacity(model.layers.len());
    let mut cur = input;
    for (i, layer) in model.layers.iter().enumerate() {
        cur = layer.kind.out_dims(i, cur)?;
        dims.push(cur);
    }
    Ok(dims)
}

// ---------------------------------------------------------------------------
// Manifest serialization
// ---------------------------------------------------------------------------

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    name: String,
    input: ManifestDims,
    layers: Vec<ManifestLayer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    act_scales: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDims {
    height: usize,
    width: usize,
    channels: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ManifestLayer {
    Conv {
        kernel: usize,
        c_in: usize,
        c_out: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        weight_bits: u8,
        weights: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        weight_scale: Option<f64>,
    },
    Fc {
        n_in: usize,
        n_out: usize,
        weight_bits: u8,
        weights: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        weight_scale: Option<f64>,
    },
    CompressiveAcquisition {
        pool_h: usize,
        pool_w: usize,
        #[serde(default)]
        fuse_grayscale: bool,
        #[serde(default = "four")]
        weight_bits: u8,
    },
    Activation {
        function: ActivationFn,
    },
}

fn one() -> usize {
    1
}

fn four() -> u8 {
    4
}

fn read_f32_blob(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Parse(format!("cannot read weight blob {}: {e}", path.display())))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Parse(format!(
            "weight blob {} length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

fn write_f32_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Load and fully validate a model manifest, reading and quantizing every
/// referenced weight blob. Deterministic: the same manifest and blobs always
/// produce the same `ModelDesc`.
pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<ModelDesc> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, ml) in manifest.layers.into_iter().enumerate() {
        let layer = match ml {
            ManifestLayer::Conv {
                kernel,
                c_in,
                c_out,
                stride,
                padding,
                weight_bits,
                weights,
                weight_scale,
            } => {
                let kind = LayerKind::Conv {
                    kernel,
                    c_in,
                    c_out,
                    stride,
                    padding,
                };
                load_weighted(i, kind, weight_bits, &weights, weight_scale, base)?
            }
            ManifestLayer::Fc {
                n_in,
                n_out,
                weight_bits,
                weights,
                weight_scale,
            } => {
                let kind = LayerKind::Fc { n_in, n_out };
                load_weighted(i, kind, weight_bits, &weights, weight_scale, base)?
            }
            ManifestLayer::CompressiveAcquisition {
                pool_h,
                pool_w,
                fuse_grayscale,
                weight_bits,
            } => {
                quant::weight_level_range(weight_bits)
                    .map_err(|e| Error::validation_at(i, e.to_string()))?;
                Layer {
                    kind: LayerKind::CompressiveAcquisition {
                        pool_h,
                        pool_w,
                        fuse_grayscale,
                    },
                    weight_bits: Some(weight_bits),
                    raw_weights: None,
                    weights: None,
                }
            }
            ManifestLayer::Activation { function } => {
                Layer::weightless(LayerKind::Activation(function))
            }
        };
        layers.push(layer);
    }

    let model = ModelDesc {
        name: manifest.name,
        input: Dims::new(
            manifest.input.height,
            manifest.input.width,
            manifest.input.channels,
        ),
        layers,
        act_scales: manifest.act_scales,
    };
    model.validate_chain()?;
    if let Some(scales) = &model.act_scales {
        if scales.len() != model.layers.len() {
            return Err(Error::validation(format!(
                "act_scales has {} entries for {} layers",
                scales.len(),
                model.layers.len()
            )));
        }
    }
    Ok(model)
}

fn load_weighted(
    index: usize,
    kind: LayerKind,
    bits: u8,
    blob_ref: &str,
    frozen_scale: Option<f64>,
    base: &Path,
) -> Result<Layer> {
    quant::weight_level_range(bits).map_err(|e| Error::validation_at(index, e.to_string()))?;
    let blob_path = base.join(blob_ref);
    let raw = read_f32_blob(&blob_path).map_err(|e| match e {
        Error::Parse(m) => Error::Validation {
            layer: Some(index),
            message: format!("missing or unreadable blob: {m}"),
        },
        other => other,
    })?;
    let expected = kind.weight_count();
    if raw.len() != expected {
        return Err(Error::validation_at(
            index,
            format!(
                "weight blob {blob_ref} holds {} values, layer needs {expected}",
                raw.len()
            ),
        ));
    }
    let dims = match kind {
        LayerKind::Conv {
            kernel,
            c_in,
            c_out,
            ..
        } => vec![c_out, c_in, kernel, kernel],
        LayerKind::Fc { n_in, n_out } => vec![n_out, n_in],
        _ => unreachable!(),
    };
    let mut spec = quant::make_weight_qspec(&raw, bits, 1.0)?;
    if let Some(s) = frozen_scale {
        if !(s > 0.0) {
            return Err(Error::validation_at(index, "weight_scale must be positive"));
        }
        spec.weight_scale = s;
    }
    let weights = quant::quantize_weights(&raw, &spec, dims)?;
    Ok(Layer {
        kind,
        weight_bits: Some(bits),
        raw_weights: Some(raw),
        weights: Some(weights),
    })
}

/// Write a model as a manifest plus weight blobs under `dir`. The manifest is
/// named `<model name>.json`, blobs live in `blobs/`. Quantization scales are
/// recorded so a reload reproduces the model bit for bit.
pub fn save_model(model: &ModelDesc, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let blob_dir = dir.join("blobs");
    std::fs::create_dir_all(&blob_dir)?;

    let mut layers = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let ml = match &layer.kind {
            LayerKind::Conv {
                kernel,
                c_in,
                c_out,
                stride,
                padding,
            } => {
                let blob_ref = format!("blobs/layer{i}.f32");
                let raw = layer
                    .raw_weights
                    .as_ref()
                    .ok_or_else(|| Error::validation_at(i, "conv layer has no weights"))?;
                write_f32_blob(&dir.join(&blob_ref), raw)?;
                ManifestLayer::Conv {
                    kernel: *kernel,
                    c_in: *c_in,
                    c_out: *c_out,
                    stride: *stride,
                    padding: *padding,
                    weight_bits: layer.weight_bits.unwrap_or(4),
                    weights: blob_ref,
                    weight_scale: layer.weights.as_ref().map(|t| t.scale),
                }
            }
            LayerKind::Fc { n_in, n_out } => {
                let blob_ref = format!("blobs/layer{i}.f32");
                let raw = layer
                    .raw_weights
                    .as_ref()
                    .ok_or_else(|| Error::validation_at(i, "fc layer has no weights"))?;
                write_f32_blob(&dir.join(&blob_ref), raw)?;
                ManifestLayer::Fc {
                    n_in: *n_in,
                    n_out: *n_out,
                    weight_bits: layer.weight_bits.unwrap_or(4),
                    weights: blob_ref,
                    weight_scale: layer.weights.as_ref().map(|t| t.scale),
                }
            }
            LayerKind::CompressiveAcquisition {
                pool_h,
                pool_w,
                fuse_grayscale,
            } => ManifestLayer::CompressiveAcquisition {
                pool_h: *pool_h,
                pool_w: *pool_w,
                fuse_grayscale: *fuse_grayscale,
                weight_bits: layer.weight_bits.unwrap_or(4),
            },
            LayerKind::Activation(f) => ManifestLayer::Activation { function: *f },
        };
        layers.push(ml);
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: model.name.clone(),
        input: ManifestDims {
            height: model.input.h,
            width: model.input.w,
            channels: model.input.c,
        },
        layers,
        act_scales: model.act_scales.clone(),
    };
    let path = dir.join(format!("{}.json", model.name));
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Freeze resolved quantization scales into an existing manifest file.
///
/// Rewrites the manifest in place, setting `act_scales` and each weighted
/// layer's `weight_scale` while leaving blob references untouched, so
/// subsequent loads reproduce the calibrated run bit for bit.
pub fn freeze_scales(
    manifest_path: impl AsRef<Path>,
    model: &ModelDesc,
    act_scales: &[f64],
) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    if act_scales.len() != model.layers.len() {
        return Err(Error::validation("one activation scale per layer required"));
    }
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", manifest_path.display())))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", manifest_path.display())))?;
    let layers = doc
        .get_mut("layers")
        .and_then(|l| l.as_array_mut())
        .ok_or_else(|| Error::Parse("manifest has no layer list".into()))?;
    if layers.len() != model.layers.len() {
        return Err(Error::validation("manifest no longer matches the model"));
    }
    for (entry, layer) in layers.iter_mut().zip(&model.layers) {
        if let (Some(obj), Some(w)) = (entry.as_object_mut(), &layer.weights) {
            if layer.raw_weights.is_some() {
                obj.insert("weight_scale".into(), serde_json::json!(w.scale));
            }
        }
    }
    doc.as_object_mut()
        .ok_or_else(|| Error::Parse("manifest is not an object".into()))?
        .insert("act_scales".into(), serde_json::json!(act_scales));
    let mut out = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?;
    out.push('\n');
    std::fs::write(manifest_path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Frames and images
// ---------------------------------------------------------------------------

/// Activation scale of raw sensor frames: code 15 dequantizes to 255.
pub const FRAME_ACT_SCALE: f64 = 255.0 / 15.0;

/// CRC voltage range used by the imager model.
pub const PIXEL_V_LO: f64 = 0.0;
pub const PIXEL_V_HI: f64 = 1.6;

/// An acquired frame: post-CRC 4-bit codes plus the 8-bit source samples
/// retained for reference-path computations.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub dims: Dims,
    /// 4-bit codes, `(y, x, c)` channel-innermost.
    pub codes: Vec<u8>,
    /// Original 8-bit samples in the same order.
    pub source: Vec<u8>,
    /// Dequantization scale of the codes.
    pub act_scale: f64,
}

impl Frame {
    /// Build a frame from 8-bit source samples through the CRC model.
    pub fn from_source(dims: Dims, source: Vec<u8>) -> Result<Self> {
        if source.len() != dims.len() {
            return Err(Error::validation(format!(
                "frame payload holds {} samples, dims {:?} need {}",
                source.len(),
                dims,
                dims.len()
            )));
        }
        let codes = source.iter().map(|&v| pixel_to_code(v)).collect();
        Ok(Self {
            dims,
            codes,
            source,
            act_scale: FRAME_ACT_SCALE,
        })
    }

    /// Build a frame directly from 4-bit codes; the retained source is the
    /// exact dequantization `code * act_scale`, so reference and optical
    /// paths see the same values.
    pub fn from_codes(dims: Dims, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != dims.len() {
            return Err(Error::validation("code payload does not match dims"));
        }
        if codes.iter().any(|&c| c > 15) {
            return Err(Error::validation("frame codes must be 4-bit"));
        }
        let source = codes
            .iter()
            .map(|&c| (c as f64 * FRAME_ACT_SCALE).round() as u8)
            .collect();
        Ok(Self {
            dims,
            codes,
            source,
            act_scale: FRAME_ACT_SCALE,
        })
    }
}

/// Imager model for one 8-bit sample: linear voltage map into the CRC.
/// With the default uniform thresholds this equals `floor(v / 16)`.
pub fn pixel_to_code(v: u8) -> u8 {
    let v_pd = PIXEL_V_LO + (PIXEL_V_HI - PIXEL_V_LO) * v as f64 / 255.0;
    crc_quantize(v_pd, PIXEL_V_LO, PIXEL_V_HI)
}

fn parse_pnm_header(bytes: &[u8]) -> Result<(String, usize, usize, usize, usize)> {
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated image header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() {
        return Err(Error::Parse("truncated image header".into()));
    }
    pos += 1;
    let magic = tokens[0].clone();
    let w: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad image width {:?}", tokens[1])))?;
    let h: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad image height {:?}", tokens[2])))?;
    let maxval: usize = tokens[3]
        .parse()
        .map_err(|_| Error::Parse(format!("bad image maxval {:?}", tokens[3])))?;
    Ok((magic, w, h, maxval, pos))
}

/// Load a binary PPM (P6, RGB) or PGM (P5, grayscale) image and acquire it
/// through the CRC model.
pub fn load_image(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let (magic, w, h, maxval, payload_at) = parse_pnm_header(&bytes)?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => {
            return Err(Error::Parse(format!(
                "unsupported image magic {other:?} (need binary P5 or P6)"
            )))
        }
    };
    if maxval != 255 {
        return Err(Error::Parse(format!(
            "unsupported maxval {maxval} (need 8-bit, maxval 255)"
        )));
    }
    let dims = Dims::new(h, w, channels);
    let payload = &bytes[payload_at..];
    if payload.len() < dims.len() {
        return Err(Error::Parse(format!(
            "truncated payload: {} bytes for {} samples",
            payload.len(),
            dims.len()
        )));
    }
    Frame::from_source(dims, payload[..dims.len()].to_vec())
}

/// Write an 8-bit binary PGM.
pub fn save_pgm(path: impl AsRef<Path>, w: usize, h: usize, samples: &[u8]) -> Result<()> {
    if samples.len() != w * h {
        return Err(Error::validation("PGM payload does not match dims"));
    }
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(samples);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Write an 8-bit binary PPM (RGB interleaved).
pub fn save_ppm(path: impl AsRef<Path>, w: usize, h: usize, samples: &[u8]) -> Result<()> {
    if samples.len() != w * h * 3 {
        return Err(Error::validation("PPM payload does not match dims"));
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(samples);
    std::fs::write(path, bytes)?;
    Ok(())
}
