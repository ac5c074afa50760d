//! Fixed-point machinery.
//!
//! Weights are quantized symmetrically at 2, 3, or 4 bits into signed levels
//! spanning `-(2^(b-1)-1) ..= 2^(b-1)-1` (the most negative code is unused so
//! every level has an exact differential encoding on the optical rails).
//! Activations are unsigned 4-bit codes `0..=15`. A level dequantizes to
//! `level * scale`. Rounding is half away from zero throughout.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Supported weight precisions.
pub const WEIGHT_BITS: [u8; 3] = [2, 3, 4];

/// Activation precision is fixed by the VCSEL driver and CRC.
pub const ACT_BITS: u8 = 4;

/// Largest unsigned activation level.
pub const ACT_MAX: i32 = 15;

/// Largest weight magnitude at a given precision: `2^(bits-1) - 1`.
pub fn weight_level_range(bits: u8) -> Result<i32> {
    if !WEIGHT_BITS.contains(&bits) {
        return Err(Error::Quant(format!(
            "unsupported weight precision {bits} bits (supported: 2, 3, 4)"
        )));
    }
    Ok((1 << (bits - 1)) - 1)
}

/// Per-layer quantization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub weight_bits: u8,
    pub act_bits: u8,
    /// Dequantization scale of the weight levels.
    pub weight_scale: f64,
    /// Dequantization scale of the layer's input activation codes.
    pub act_scale: f64,
}

impl QuantSpec {
    pub fn new(weight_bits: u8, weight_scale: f64, act_scale: f64) -> Result<Self> {
        weight_level_range(weight_bits)?;
        if !(weight_scale > 0.0) || !(act_scale > 0.0) {
            return Err(Error::Quant(format!(
                "scales must be positive (weight {weight_scale}, act {act_scale})"
            )));
        }
        Ok(Self {
            weight_bits,
            act_bits: ACT_BITS,
            weight_scale,
            act_scale,
        })
    }

    /// Scale of an integer accumulator produced with this spec:
    /// `weight_scale * act_scale`.
    pub fn accum_scale(&self) -> f64 {
        self.weight_scale * self.act_scale
    }

    pub fn weight_range(&self) -> i32 {
        (1 << (self.weight_bits - 1)) - 1
    }
}

/// Weight quantization spec from the data: `scale = max|w| / (2^(b-1)-1)`.
/// A degenerate all-zero tensor gets scale 1 so dequantization stays defined.
pub fn make_weight_qspec(weights: &[f64], bits: u8, act_scale: f64) -> Result<QuantSpec> {
    if weights.is_empty() {
        return Err(Error::Quant(
            "cannot quantize an empty weight tensor".into(),
        ));
    }
    let range = weight_level_range(bits)?;
    let max_abs = weights.iter().fold(0.0_f64, |m, &w| m.max(w.abs()));
    let scale = if max_abs > 0.0 {
        max_abs / range as f64
    } else {
        1.0
    };
    QuantSpec::new(bits, scale, act_scale)
}

/// A quantized tensor: integer levels plus one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTensor {
    pub dims: Vec<usize>,
    pub levels: Vec<i32>,
    pub scale: f64,
    pub signed: bool,
    pub bits: u8,
}

impl QTensor {
    /// Construct with range validation: every level must fit the declared
    /// precision (signed symmetric or unsigned).
    pub fn new(
        dims: Vec<usize>,
        levels: Vec<i32>,
        scale: f64,
        signed: bool,
        bits: u8,
    ) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != levels.len() {
            return Err(Error::Quant(format!(
                "shape {dims:?} holds {n} elements but {} levels given",
                levels.len()
            )));
        }
        let (lo, hi) = if signed {
            let r = weight_level_range(bits)?;
            (-r, r)
        } else {
            (0, (1 << bits) - 1)
        };
        if let Some(bad) = levels.iter().find(|&&l| l < lo || l > hi) {
            return Err(Error::Quant(format!(
                "level {bad} outside declared range [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            dims,
            levels,
            scale,
            signed,
            bits,
        })
    }

    pub fn dequant(&self, i: usize) -> f64 {
        self.levels[i] as f64 * self.scale
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Round half away from zero (the hardware convention used everywhere here).
/// `f64::round` already implements it; the alias documents the intent.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Quantize real values into signed weight levels under a spec.
/// Out-of-range values saturate at the extreme levels.
pub fn quantize_weights(values: &[f64], spec: &QuantSpec, dims: Vec<usize>) -> Result<QTensor> {
    let range = spec.weight_range();
    let levels = values
        .iter()
        .map(|&v| {
            let l = round_half_away(v / spec.weight_scale) as i64;
            l.clamp(-(range as i64), range as i64) as i32
        })
        .collect();
    QTensor::new(dims, levels, spec.weight_scale, true, spec.weight_bits)
}

/// Quantize a non-negative real into a 4-bit activation code.
pub fn quantize_act(value: f64, act_scale: f64) -> u8 {
    let l = round_half_away(value / act_scale) as i64;
    l.clamp(0, ACT_MAX as i64) as u8
}

/// Activation function applied to an integer MAC accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFn {
    Sign,
    Relu,
    Tanh,
}

impl ActivationFn {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationFn::Sign => "sign",
            ActivationFn::Relu => "relu",
            ActivationFn::Tanh => "tanh",
        }
    }
}

/// Apply an activation to an exact integer accumulator and requantize the
/// result to a 4-bit code for the next layer's VCSEL feed.
///
/// * `in_scale` is the accumulator scale of the producing layer
///   (`weight_scale * act_scale`).
/// * `out_scale` is the activation scale the consumer will dequantize with.
///
/// Sign maps strictly positive accumulators to 15 and everything else to 0,
/// so the downstream optical path never needs a signed activation. Tanh maps
/// `tanh(x) in [-1, 1]` linearly onto the 16 codes; the natural `out_scale`
/// for its consumers is `2/15` (codes represent `tanh(x) + 1`).
pub fn apply_activation(kind: ActivationFn, accum: i64, in_scale: f64, out_scale: f64) -> u8 {
    match kind {
        ActivationFn::Sign => {
            if accum > 0 {
                15
            } else {
                0
            }
        }
        ActivationFn::Relu => {
            let real = (accum as f64 * in_scale).max(0.0);
            quantize_act(real, out_scale)
        }
        ActivationFn::Tanh => {
            let t = (accum as f64 * in_scale).tanh();
            let code = round_half_away(ACT_MAX as f64 * (t + 1.0) / 2.0) as i64;
            code.clamp(0, ACT_MAX as i64) as u8
        }
    }
}

/// Output activation scale that maps a measured maximum onto code 15.
/// A non-positive maximum (all-zero feature map) falls back to scale 1.
pub fn act_scale_from_max(max_value: f64) -> f64 {
    if max_value > 0.0 {
        max_value / ACT_MAX as f64
    } else {
        1.0
    }
}

/// Fixed output scale of the Sign activation (codes are 0 or 15, meaning 0 or 1).
pub const SIGN_OUT_SCALE: f64 = 1.0 / 15.0;

/// Fixed output scale of the Tanh activation (codes span `tanh + 1 in [0, 2]`).
pub const TANH_OUT_SCALE: f64 = 2.0 / 15.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_qspec_examples() {
        // max|w| = 0.7 at 4 bits gives scale 0.7/7 = 0.1.
        let spec = make_weight_qspec(&[0.1, -0.7, 0.35], 4, 1.0).unwrap();
        assert!((spec.weight_scale - 0.1).abs() < 1e-12);

        // All-zero weights: scale 1, all levels 0.
        let spec0 = make_weight_qspec(&[0.0, 0.0], 4, 1.0).unwrap();
        assert_eq!(spec0.weight_scale, 1.0);
        let t = quantize_weights(&[0.0, 0.0], &spec0, vec![2]).unwrap();
        assert_eq!(t.levels, vec![0, 0]);

        // 2 bits: levels in {-1, 0, 1}, scale 1 for max 1.0.
        let spec2 = make_weight_qspec(&[1.0, -0.2], 2, 1.0).unwrap();
        assert_eq!(spec2.weight_scale, 1.0);
        assert_eq!(spec2.weight_range(), 1);

        assert!(make_weight_qspec(&[1.0], 5, 1.0).is_err());
        assert!(make_weight_qspec(&[], 4, 1.0).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        // With the scale derived from max 0.7, the quotient 0.35/scale lands
        // at (or a hair above) 3.5 and must round away to 4.
        let spec = make_weight_qspec(&[0.7], 4, 1.0).unwrap();
        let t = quantize_weights(&[0.35, -0.35, 0.0], &spec, vec![3]).unwrap();
        assert_eq!(t.levels, vec![4, -4, 0]);

        // Saturation: 9.9 clamps to the top level.
        let t = quantize_weights(&[9.9, -9.9], &spec, vec![2]).unwrap();
        assert_eq!(t.levels, vec![7, -7]);
    }

    #[test]
    fn quantize_error_bound_and_symmetry() {
        let spec = make_weight_qspec(&[0.9], 4, 1.0).unwrap();
        let mut x = -0.9;
        while x <= 0.9 {
            let t = quantize_weights(&[x, -x], &spec, vec![2]).unwrap();
            let err = (t.dequant(0) - x).abs();
            assert!(
                err <= spec.weight_scale / 2.0 + 1e-12,
                "error {err} beyond scale/2 at {x}"
            );
            assert_eq!(t.levels[0], -t.levels[1], "sign symmetry broken at {x}");
            x += 0.0137;
        }
    }

    #[test]
    fn qtensor_rejects_out_of_range_levels() {
        assert!(QTensor::new(vec![2], vec![7, -8], 1.0, true, 4).is_err());
        assert!(QTensor::new(vec![2], vec![0, 16], 1.0, false, 4).is_err());
        assert!(QTensor::new(vec![3], vec![0, 1], 1.0, false, 4).is_err());
        assert!(QTensor::new(vec![2], vec![7, -7], 1.0, true, 4).is_ok());
    }

    #[test]
    fn activation_examples() {
        assert_eq!(apply_activation(ActivationFn::Sign, 123, 0.1, 1.0), 15);
        assert_eq!(apply_activation(ActivationFn::Sign, 0, 0.1, 1.0), 0);
        assert_eq!(apply_activation(ActivationFn::Sign, -4, 0.1, 1.0), 0);

        assert_eq!(apply_activation(ActivationFn::Relu, -5, 0.3, 1.0), 0);

        // tanh(0) sits mid-range: round(15 * 0.5) = 8 half away from zero.
        assert_eq!(apply_activation(ActivationFn::Tanh, 0, 0.1, 1.0), 8);
    }

    #[test]
    fn activations_monotone_in_accumulator() {
        for kind in [ActivationFn::Relu, ActivationFn::Tanh] {
            let mut prev = 0u8;
            for accum in -200..=200 {
                let c = apply_activation(kind, accum, 0.05, 0.7);
                if accum > -200 {
                    assert!(c >= prev, "{kind:?} not monotone at accum {accum}");
                }
                prev = c;
            }
        }
    }

    #[test]
    fn requantization_linear_map() {
        // Values {0, max/3, max} land on codes {0, 5, 15}.
        let max = 0.84;
        let s = act_scale_from_max(max);
        assert_eq!(quantize_act(0.0, s), 0);
        assert_eq!(quantize_act(max / 3.0, s), 5);
        assert_eq!(quantize_act(max, s), 15);

        // A uniform map calibrates to all-15.
        let s = act_scale_from_max(2.5);
        assert_eq!(quantize_act(2.5, s), 15);

        assert_eq!(act_scale_from_max(0.0), 1.0);
    }
}
