//! Compressive acquisition: fused RGB-to-grayscale conversion and average
//! pooling executed as one weighted sum on the optical core.
//!
//! For a pool of `ph x pw` pixels the fused weight of pixel `i`, channel `j`
//! is `(1 / (ph * pw)) * c_j` with `(c_R, c_G, c_B) = (0.299, 0.587, 0.114)`.
//! The coefficients sum to 1, so a constant frame compresses to the same
//! constant. Non-fused compression (plain average pooling, used mid-network
//! as the pooling layer) weights every pixel `1 / (ph * pw)`.
//!
//! Two execution paths exist. The reference path computes the exact float
//! weighted sum of the retained pixel values and exists to measure what the
//! optical path's weight quantization costs. The optical path quantizes the
//! fused weights at the configured precision, maps them onto the acquisition
//! banks, and executes through the core in the integer level domain.

use crate::error::{Error, Result};
use crate::mapper;
use crate::netir::{Dims, Frame, LayerKind};
use crate::optical_core::{CoreGeometry, ExecMode};
use crate::quant::{self, QuantSpec};
use serde::{Deserialize, Serialize};

/// ITU-style luminance coefficients for R, G, B.
pub const GRAY_R: f64 = 0.299;
pub const GRAY_G: f64 = 0.587;
pub const GRAY_B: f64 = 0.114;

/// The grayscale coefficient triple `(R, G, B)`; sums to 1.
pub fn grayscale_coefficients() -> (f64, f64, f64) {
    (GRAY_R, GRAY_G, GRAY_B)
}

/// Fused grayscale of one pixel, written so that `r = g = b = v` returns `v`
/// exactly: algebraically `cR*r + cG*g + (1 - cR - cG)*b`.
#[inline]
pub fn fused_gray(r: f64, g: f64, b: f64) -> f64 {
    b + GRAY_R * (r - b) + GRAY_G * (g - b)
}

/// Compression descriptor plus its derived weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSpec {
    pub pool_h: usize,
    pub pool_w: usize,
    pub fuse_grayscale: bool,
    /// Weight per (pixel row-major, then channel R,G,B) dot-product slot.
    pub coefficients: Vec<f64>,
}

impl CompressionSpec {
    pub fn new(pool_h: usize, pool_w: usize, fuse_grayscale: bool) -> Result<Self> {
        if pool_h == 0 || pool_w == 0 {
            return Err(Error::validation("pool dims must be >= 1"));
        }
        let inv = 1.0 / (pool_h * pool_w) as f64;
        let coefficients = if fuse_grayscale {
            let mut w = Vec::with_capacity(pool_h * pool_w * 3);
            for _ in 0..pool_h * pool_w {
                w.push(inv * GRAY_R);
                w.push(inv * GRAY_G);
                w.push(inv * GRAY_B);
            }
            w
        } else {
            vec![inv; pool_h * pool_w]
        };
        Ok(Self {
            pool_h,
            pool_w,
            fuse_grayscale,
            coefficients,
        })
    }

    pub fn dot_length(&self) -> usize {
        self.coefficients.len()
    }

    pub fn layer_kind(&self) -> LayerKind {
        LayerKind::CompressiveAcquisition {
            pool_h: self.pool_h,
            pool_w: self.pool_w,
            fuse_grayscale: self.fuse_grayscale,
        }
    }
}

/// The fused (or plain pooling) weight vector of a spec.
pub fn fused_weights(spec: &CompressionSpec) -> &[f64] {
    &spec.coefficients
}

/// Which arithmetic path executes the compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionPath {
    Optical,
    Reference,
}

/// A compressed map of real-valued outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFrame {
    pub dims: Dims,
    pub values: Vec<f64>,
}

/// Gather the 4-bit codes of one pool window, (pixel row-major, channels
/// innermost), matching the coefficient ordering.
fn gather_window(
    codes: &[u8],
    dims: Dims,
    oy: usize,
    ox: usize,
    ch: Option<usize>,
    spec: &CompressionSpec,
) -> Vec<u8> {
    let mut acts = Vec::with_capacity(spec.dot_length());
    for py in 0..spec.pool_h {
        for px in 0..spec.pool_w {
            let y = oy * spec.pool_h + py;
            let x = ox * spec.pool_w + px;
            match ch {
                Some(c) => acts.push(codes[dims.index(y, x, c)]),
                None => {
                    for c in 0..3 {
                        acts.push(codes[dims.index(y, x, c)]);
                    }
                }
            }
        }
    }
    acts
}

/// Integer-domain compression of a code map through the mapped optical path.
///
/// Quantizes the fused weights at `weight_bits`, places the windows onto
/// acquisition banks per the stride plan, executes full core cycles, and
/// returns one exact integer accumulator per output (stride order: channel
/// outer for non-fused pooling, then row-major positions) together with the
/// quantization spec used.
pub fn compress_codes(
    codes: &[u8],
    dims: Dims,
    act_scale: f64,
    spec: &CompressionSpec,
    weight_bits: u8,
    geometry: &CoreGeometry,
    mode: &mut ExecMode,
) -> Result<(Vec<i64>, Dims, QuantSpec)> {
    let out_dims = spec.layer_kind().out_dims(0, dims)?;
    let qspec = quant::make_weight_qspec(&spec.coefficients, weight_bits, act_scale)?;
    let wq = quant::quantize_weights(&spec.coefficients, &qspec, vec![spec.dot_length()])?;

    let plan = mapper::plan_layer(0, &spec.layer_kind(), dims, geometry)?;
    // Stride ids are channel-major for plain pooling, position-only when fused.
    let per_channel = (out_dims.h * out_dims.w) as u64;
    let weight_of = |_stride: u64, buf: &mut Vec<i32>| buf.extend_from_slice(&wq.levels);
    let acts_of = |stride: u64, buf: &mut Vec<u8>| {
        let (ch, pos) = if spec.fuse_grayscale {
            (None, stride)
        } else {
            (Some((stride / per_channel) as usize), stride % per_channel)
        };
        let oy = (pos / out_dims.w as u64) as usize;
        let ox = (pos % out_dims.w as u64) as usize;
        buf.extend_from_slice(&gather_window(codes, dims, oy, ox, ch, spec));
    };
    let values = mapper::execute_layer(
        &plan,
        geometry,
        mode,
        qspec.weight_range(),
        &weight_of,
        &acts_of,
    )?;
    Ok((values.iter().map(|v| v.to_i64()).collect(), out_dims, qspec))
}

/// Compress an acquired frame.
///
/// The reference path computes the exact float weighted sum of the frame's
/// retained pixel values. The optical path runs [`compress_codes`] on the
/// 4-bit codes and dequantizes with the derived scales.
pub fn compress_frame(
    frame: &Frame,
    spec: &CompressionSpec,
    path: CompressionPath,
    weight_bits: u8,
    geometry: &CoreGeometry,
) -> Result<CompressedFrame> {
    let out_dims = spec.layer_kind().out_dims(0, frame.dims)?;
    match path {
        CompressionPath::Reference => {
            let d = frame.dims;
            let mut values = Vec::with_capacity(out_dims.len());
            let inv = 1.0 / (spec.pool_h * spec.pool_w) as f64;
            if spec.fuse_grayscale {
                for oy in 0..out_dims.h {
                    for ox in 0..out_dims.w {
                        let mut sum = 0.0;
                        for py in 0..spec.pool_h {
                            for px in 0..spec.pool_w {
                                let y = oy * spec.pool_h + py;
                                let x = ox * spec.pool_w + px;
                                let r = frame.source[d.index(y, x, 0)] as f64;
                                let g = frame.source[d.index(y, x, 1)] as f64;
                                let b = frame.source[d.index(y, x, 2)] as f64;
                                sum += fused_gray(r, g, b);
                            }
                        }
                        values.push(sum * inv);
                    }
                }
            } else {
                for c in 0..out_dims.c {
                    for oy in 0..out_dims.h {
                        for ox in 0..out_dims.w {
                            let mut sum = 0.0;
                            for py in 0..spec.pool_h {
                                for px in 0..spec.pool_w {
                                    let y = oy * spec.pool_h + py;
                                    let x = ox * spec.pool_w + px;
                                    sum += frame.source[d.index(y, x, c)] as f64;
                                }
                            }
                            values.push(sum * inv);
                        }
                    }
                }
            }
            Ok(CompressedFrame {
                dims: out_dims,
                values,
            })
        }
        CompressionPath::Optical => {
            let (accums, dims, qspec) = compress_codes(
                &frame.codes,
                frame.dims,
                frame.act_scale,
                spec,
                weight_bits,
                geometry,
                &mut ExecMode::Ideal,
            )?;
            let scale = qspec.accum_scale();
            Ok(CompressedFrame {
                dims,
                values: accums.iter().map(|&a| a as f64 * scale).collect(),
            })
        }
    }
}

/// Analytic bound on the optical-versus-reference deviation of one output
/// when the frame's pixel values are exactly representable as codes: each of
/// the window's pixel values can be off by at most half a weight step.
pub fn quantization_bound(window_values: &[f64], weight_scale: f64) -> f64 {
    window_values.iter().map(|p| p.abs()).sum::<f64>() * weight_scale / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grayscale_triple() {
        let (r, g, b) = grayscale_coefficients();
        assert_eq!((r, g, b), (0.299, 0.587, 0.114));
        assert!((r + g + b - 1.0).abs() < 1e-12);
        // A white pixel converts to full scale.
        assert_eq!(fused_gray(255.0, 255.0, 255.0), 255.0);
    }

    #[test]
    fn fused_weight_vectors() {
        let spec = CompressionSpec::new(2, 2, true).unwrap();
        assert_eq!(spec.dot_length(), 12);
        for px in 0..4 {
            assert_eq!(spec.coefficients[px * 3], 0.25 * GRAY_R);
            assert_eq!(spec.coefficients[px * 3 + 1], 0.25 * GRAY_G);
            assert_eq!(spec.coefficients[px * 3 + 2], 0.25 * GRAY_B);
        }

        let spec = CompressionSpec::new(1, 1, true).unwrap();
        assert_eq!(spec.coefficients, vec![GRAY_R, GRAY_G, GRAY_B]);

        let spec = CompressionSpec::new(2, 2, false).unwrap();
        assert_eq!(spec.coefficients, vec![0.25; 4]);

        assert!(CompressionSpec::new(0, 2, false).is_err());
    }

    #[test]
    fn constant_frame_identity_is_exact() {
        let g = CoreGeometry::default();
        for v in [0u8, 1, 17, 100, 200, 255] {
            let frame = Frame::from_source(Dims::new(4, 4, 3), vec![v; 48]).unwrap();
            let spec = CompressionSpec::new(2, 2, true).unwrap();
            let out = compress_frame(&frame, &spec, CompressionPath::Reference, 4, &g).unwrap();
            assert_eq!(out.dims, Dims::new(2, 2, 1));
            assert!(
                out.values.iter().all(|&o| o == v as f64),
                "v={v}: {:?}",
                out.values
            );
        }
        // Non-fused pooling preserves constants too, including non-power-of-2 pools.
        let frame = Frame::from_source(Dims::new(6, 6, 1), vec![123; 36]).unwrap();
        let spec = CompressionSpec::new(3, 2, false).unwrap();
        let out = compress_frame(
            &frame,
            &spec,
            CompressionPath::Reference,
            4,
            &CoreGeometry::default(),
        )
        .unwrap();
        assert!(out.values.iter().all(|&o| o == 123.0));
    }

    #[test]
    fn single_pixel_term_structure() {
        // One lit pixel (R=40) in a 2x2 fused window: 0.25 * 0.299 * 40.
        let mut source = vec![0u8; 2 * 2 * 3];
        source[0] = 40;
        let frame = Frame::from_source(Dims::new(2, 2, 3), source).unwrap();
        let spec = CompressionSpec::new(2, 2, true).unwrap();
        let out = compress_frame(
            &frame,
            &spec,
            CompressionPath::Reference,
            4,
            &CoreGeometry::default(),
        )
        .unwrap();
        assert_eq!(out.values.len(), 1);
        assert!((out.values[0] - 2.99).abs() < 1e-12, "{}", out.values[0]);
    }

    #[test]
    fn reference_path_is_linear() {
        let d = Dims::new(4, 4, 3);
        let spec = CompressionSpec::new(2, 2, true).unwrap();
        let g = CoreGeometry::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f1: Vec<u8> = (0..d.len()).map(|_| rng.gen_range(0..=60)).collect();
        let f2: Vec<u8> = (0..d.len()).map(|_| rng.gen_range(0..=60)).collect();
        let sum: Vec<u8> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let c1 = compress_frame(
            &Frame::from_source(d, f1).unwrap(),
            &spec,
            CompressionPath::Reference,
            4,
            &g,
        )
        .unwrap();
        let c2 = compress_frame(
            &Frame::from_source(d, f2).unwrap(),
            &spec,
            CompressionPath::Reference,
            4,
            &g,
        )
        .unwrap();
        let cs = compress_frame(
            &Frame::from_source(d, sum).unwrap(),
            &spec,
            CompressionPath::Reference,
            4,
            &g,
        )
        .unwrap();
        for i in 0..cs.values.len() {
            assert!((cs.values[i] - (c1.values[i] + c2.values[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn optical_path_stays_within_quantization_bound() {
        let g = CoreGeometry::default();
        let d = Dims::new(8, 8, 3);
        let spec = CompressionSpec::new(2, 2, true).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            // Code-aligned frames: pixel values are exact dequantizations, so
            // the only optical error left is weight quantization.
            let codes: Vec<u8> = (0..d.len()).map(|_| rng.gen_range(0..=15)).collect();
            let frame = Frame::from_codes(d, codes).unwrap();
            let optical = compress_frame(&frame, &spec, CompressionPath::Optical, 4, &g).unwrap();
            let reference =
                compress_frame(&frame, &spec, CompressionPath::Reference, 4, &g).unwrap();
            let qspec = quant::make_weight_qspec(&spec.coefficients, 4, frame.act_scale).unwrap();
            for oy in 0..optical.dims.h {
                for ox in 0..optical.dims.w {
                    let i = oy * optical.dims.w + ox;
                    let window: Vec<f64> = gather_window(&frame.codes, d, oy, ox, None, &spec)
                        .iter()
                        .map(|&c| c as f64 * frame.act_scale)
                        .collect();
                    let bound = quantization_bound(&window, qspec.weight_scale) + 1e-9;
                    let dev = (optical.values[i] - reference.values[i]).abs();
                    assert!(dev <= bound, "deviation {dev} exceeds bound {bound}");
                }
            }
        }
    }

    #[test]
    fn dims_must_divide() {
        let frame = Frame::from_source(Dims::new(5, 4, 3), vec![0; 60]).unwrap();
        let spec = CompressionSpec::new(2, 2, true).unwrap();
        let err = compress_frame(
            &frame,
            &spec,
            CompressionPath::Reference,
            4,
            &CoreGeometry::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn mid_network_pooling_matches_plain_average() {
        // Non-fused 2x2 pooling over a 2-channel code map, integer domain.
        let g = CoreGeometry::default();
        let d = Dims::new(4, 4, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let codes: Vec<u8> = (0..d.len()).map(|_| rng.gen_range(0..=15)).collect();
        let spec = CompressionSpec::new(2, 2, false).unwrap();
        let (accums, out_dims, qspec) =
            compress_codes(&codes, d, 1.0, &spec, 4, &g, &mut ExecMode::Ideal).unwrap();
        assert_eq!(out_dims, Dims::new(2, 2, 2));
        // All pooling weights quantize to the same level; the accumulator is
        // level * sum(codes).
        let level = (0.25 / qspec.weight_scale).round() as i64;
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut sum = 0i64;
                    for py in 0..2 {
                        for px in 0..2 {
                            sum += codes[d.index(oy * 2 + py, ox * 2 + px, c)] as i64;
                        }
                    }
                    let got = accums[c * 4 + oy * 2 + ox];
                    assert_eq!(got, level * sum);
                }
            }
        }
    }
}
