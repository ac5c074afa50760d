//! Deterministic example models, frames, and the shipped calibration
//! profile.
//!
//! The two network fixtures are reconstructions shaped after the classic
//! small CNNs used for MNIST-class and CIFAR-class workloads; their weights
//! are seeded pseudo-random values, so they exercise mapping, execution, and
//! power accounting but carry no trained accuracy.

use crate::config::RunConfig;
use crate::netir::{Dims, Frame, Layer, LayerKind, ModelDesc};
use crate::power::EnergyConfig;
use crate::quant::{self, ActivationFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// The shipped `paper-calibration` profile.
///
/// Device values model a 1548 nm ring with a 0.2 nm linewidth and a 5%
/// through-port floor; channels sit 8 FWHM apart. The energy constants were
/// fitted with the procedure in `examples/derive_calibration.rs` (see that
/// file for the apportionment) so that the bundled CIFAR-class fixture
/// reproduces the reference power and throughput points.
pub fn paper_calibration() -> RunConfig {
    RunConfig {
        schema_version: 1,

        n_eff: 2.4,
        circumference_um: 6.45,
        mode_order: 10,
        fwhm_nm: 0.2,
        t_min: 0.05,
        channel_spacing_nm: 1.6,
        t_top_weight: 0.95,
        noise_sigma: 0.0,
        noise_seed: 0,

        n_banks: 96,
        bank_rows: 12,
        bank_cols: 8,
        arms_per_bank: 6,
        mrs_per_arm: 9,

        e_dac_slice_j: 2.584594031284358e-14,
        e_tune_per_mr_j: 2.095384526074708e-15,
        e_vcsel_per_symbol_j: 2.64253113866502e-14,
        e_crc_per_read_j: 9.337432197605349e-12,
        e_bpd_per_read_j: 3.2532970267749903e-15,
        e_adc_per_conv_j: 1.3916818963699197e-14,
        p_misc_static_w: 6.761883357624584e-3,
        core_clock_hz: 3.04083896074924e9,

        reprogram_stall_cycles: 1,
    }
}

/// Energy slice of the shipped profile.
pub fn paper_calibration_energy() -> EnergyConfig {
    paper_calibration().energy()
}

fn seeded_weights(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rng.gen_range(-1.0f32..=1.0) as f64)
        .collect()
}

fn conv(seed: u64, kernel: usize, c_in: usize, c_out: usize, padding: usize, bits: u8) -> Layer {
    let kind = LayerKind::Conv {
        kernel,
        c_in,
        c_out,
        stride: 1,
        padding,
    };
    weighted(seed, kind, bits)
}

fn fc(seed: u64, n_in: usize, n_out: usize, bits: u8) -> Layer {
    weighted(seed, LayerKind::Fc { n_in, n_out }, bits)
}

fn weighted(seed: u64, kind: LayerKind, bits: u8) -> Layer {
    let raw = seeded_weights(seed, kind.weight_count());
    let spec = quant::make_weight_qspec(&raw, bits, 1.0).expect("fixture weights");
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
    let weights = quant::quantize_weights(&raw, &spec, dims).expect("fixture quantization");
    Layer {
        kind,
        weight_bits: Some(bits),
        raw_weights: Some(raw),
        weights: Some(weights),
    }
}

fn pool(bits: u8) -> Layer {
    Layer {
        kind: LayerKind::CompressiveAcquisition {
            pool_h: 2,
            pool_w: 2,
            fuse_grayscale: false,
        },
        weight_bits: Some(bits),
        raw_weights: None,
        weights: None,
    }
}

fn act(f: ActivationFn) -> Layer {
    Layer::weightless(LayerKind::Activation(f))
}

/// MNIST-class fixture: two 3x3 convolutions with in-core pooling, then
/// three fully-connected layers (784 -> 120 -> 84 -> 10) on a 28x28
/// grayscale input.
pub fn lenet_like() -> ModelDesc {
    let b = 4;
    ModelDesc {
        name: "lenet-like".into(),
        input: Dims::new(28, 28, 1),
        layers: vec![
            conv(0x1e01, 3, 1, 6, 1, b),
            act(ActivationFn::Relu),
            pool(b),
            conv(0x1e02, 3, 6, 16, 1, b),
            act(ActivationFn::Relu),
            pool(b),
            fc(0x1e03, 784, 120, b),
            act(ActivationFn::Relu),
            fc(0x1e04, 120, 84, b),
            act(ActivationFn::Relu),
            fc(0x1e05, 84, 10, b),
        ],
        act_scales: None,
    }
}

/// CIFAR-class fixture: six same-padded 3x3 convolutions in three blocks
/// with in-core pooling, then 4096 -> 1024 -> 10 fully-connected layers on
/// a 32x32 RGB input.
pub fn vgg9_like() -> ModelDesc {
    let b = 4;
    ModelDesc {
        name: "vgg9-like".into(),
        input: Dims::new(32, 32, 3),
        layers: vec![
            conv(0x0901, 3, 3, 64, 1, b),
            act(ActivationFn::Relu),
            conv(0x0902, 3, 64, 64, 1, b),
            act(ActivationFn::Relu),
            pool(b),
            conv(0x0903, 3, 64, 128, 1, b),
            act(ActivationFn::Relu),
            conv(0x0904, 3, 128, 128, 1, b),
            act(ActivationFn::Relu),
            pool(b),
            conv(0x0905, 3, 128, 256, 1, b),
            act(ActivationFn::Relu),
            conv(0x0906, 3, 256, 256, 1, b),
            act(ActivationFn::Relu),
            pool(b),
            fc(0x0907, 4096, 1024, b),
            act(ActivationFn::Relu),
            fc(0x0908, 1024, 10, b),
        ],
        act_scales: None,
    }
}

/// The CIFAR-class fixture with the compressive-acquisition front end
/// enabled: a fused 2x2 grayscale acquisition stage feeds the first
/// convolution, whose input collapses to one channel and whose feature maps
/// (and the first FC fan-in) shrink accordingly. The first conv kernels are
/// the grayscale-weighted channel sums of the base fixture's kernels.
pub fn vgg9_like_ca() -> ModelDesc {
    let b = 4;
    let base = vgg9_like();

    // Collapse conv1 kernels: w'(co, ky, kx) = sum_c gray_c * w(co, c, ky, kx).
    let (gr, gg, gb) = crate::compress::grayscale_coefficients();
    let base_raw = base.layers[0].raw_weights.as_ref().unwrap();
    let mut collapsed = Vec::with_capacity(64 * 9);
    for co in 0..64 {
        for k in 0..9 {
            let at = |c: usize| base_raw[(co * 3 + c) * 9 + k];
            collapsed.push(gr * at(0) + gg * at(1) + gb * at(2));
        }
    }
    let kind = LayerKind::Conv {
        kernel: 3,
        c_in: 1,
        c_out: 64,
        stride: 1,
        padding: 1,
    };
    let spec = quant::make_weight_qspec(&collapsed, b, 1.0).unwrap();
    let weights = quant::quantize_weights(&collapsed, &spec, vec![64, 1, 3, 3]).unwrap();
    let conv1 = Layer {
        kind,
        weight_bits: Some(b),
        raw_weights: Some(collapsed),
        weights: Some(weights),
    };

    let mut layers = vec![
        Layer {
            kind: LayerKind::CompressiveAcquisition {
                pool_h: 2,
                pool_w: 2,
                fuse_grayscale: true,
            },
            weight_bits: Some(b),
            raw_weights: None,
            weights: None,
        },
        conv1,
    ];
    // Everything after conv1 keeps its structure; spatial dims are halved,
    // so the first FC fan-in drops from 4096 to 1024.
    for layer in base.layers.iter().skip(1) {
        match layer.kind {
            LayerKind::Fc { n_in: 4096, n_out } => {
                layers.push(fc(0x0917, 1024, n_out, b));
            }
            _ => layers.push(layer.clone()),
        }
    }
    ModelDesc {
        name: "vgg9-like-ca".into(),
        input: Dims::new(32, 32, 3),
        layers,
        act_scales: None,
    }
}

/// Single 7x7 convolution demo model (one input channel, four kernels).
pub fn conv7_demo() -> ModelDesc {
    ModelDesc {
        name: "conv7-demo".into(),
        input: Dims::new(16, 16, 1),
        layers: vec![conv(0x0707, 7, 1, 4, 0, 4), act(ActivationFn::Relu)],
        act_scales: None,
    }
}

/// A hand-drawn 28x28 grayscale digit (a seven), acquired through the CRC.
pub fn digit_frame() -> Frame {
    let mut img = vec![0u8; 28 * 28];
    let mut put = |y: i32, x: i32, v: u8| {
        if (0..28).contains(&y) && (0..28).contains(&x) {
            img[(y * 28 + x) as usize] = v;
        }
    };
    // Top bar.
    for x in 5..23 {
        for y in 5..8 {
            put(y, x, 230);
        }
    }
    // Diagonal stroke.
    for i in 0..16 {
        let y = 8 + i;
        let x = 21 - (2 * i) / 3;
        for dx in -1..=1 {
            put(y, x + dx, 245);
        }
    }
    Frame::from_source(Dims::new(28, 28, 1), img).expect("digit frame")
}

/// Deterministic 32x32 RGB frame.
pub fn cifar_frame() -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE);
    let d = Dims::new(32, 32, 3);
    let source: Vec<u8> = (0..d.len()).map(|_| rng.gen_range(0..=255)).collect();
    Frame::from_source(d, source).expect("cifar frame")
}

/// Materialize a fixture (manifest plus blobs) under `dir`; returns the
/// manifest path.
pub fn write_fixture(model: &ModelDesc, dir: impl AsRef<Path>) -> crate::error::Result<PathBuf> {
    crate::netir::save_model(model, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_chain() {
        let outs = lenet_like().validate_chain().unwrap();
        assert_eq!(outs.last().unwrap().c, 10);
        let outs = vgg9_like().validate_chain().unwrap();
        assert_eq!(outs.last().unwrap().c, 10);
        let outs = vgg9_like_ca().validate_chain().unwrap();
        assert_eq!(outs.last().unwrap().c, 10);
        conv7_demo().validate_chain().unwrap();
    }

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(lenet_like(), lenet_like());
        assert_eq!(cifar_frame(), cifar_frame());
    }

    #[test]
    fn ca_variant_halves_the_pipeline() {
        let ins = vgg9_like_ca().input_dims().unwrap();
        // The first conv (layer 1) sees the compressed 16x16 single channel.
        assert_eq!(ins[1], Dims::new(16, 16, 1));
    }

    #[test]
    fn fixture_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let model = conv7_demo();
        let path = write_fixture(&model, dir.path()).unwrap();
        let back = crate::netir::load_model(path).unwrap();
        assert_eq!(model, back);
    }
}
