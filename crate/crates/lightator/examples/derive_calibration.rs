//! Derives the `paper-calibration` energy profile from the reference
//! operating points and prints it as config keys.
//!
//! The constants shipped in `fixtures::paper_calibration` come out of this
//! procedure, so they are reproducible rather than hand-tuned. Reference
//! points (CIFAR-class fixture with the compressive front end):
//!
//! * max power 5.28 W at [4:4] and 2.71 W at [3:4], each within 10%;
//! * the two-point slice fit extrapolated to [2:4] within 5% of 1.46 W;
//! * DAC share above 85% in every conv layer at [3:4];
//! * enabling the 2x2 compressive front end cuts the first-layer group
//!   (acquisition + first conv) power by 42.2%;
//! * 61.61 kFPS/W at [4:4], within 15%.
//!
//! Solve order (documented apportionment):
//!
//! 1. Normalize the DAC slice energy to 1 and express every other event
//!    energy in those units; power ratios are invariant to the overall
//!    scale and to the clock, so steps 2..4 work in normalized units.
//! 2. Pin the small contributors to fixed shares of the [3:4] network DAC
//!    power: TUN 0.15%, BPD 0.2%, ADC 0.15%, static MISC 0.3%. These must
//!    stay small because their per-layer incidence varies (tuning writes
//!    concentrate in layers that swap weight images every cycle, static
//!    power in layers with many cycles per multiply), and a large spread
//!    would push some conv layer's DAC share under the floor.
//! 3. Bisect the VCSEL symbol energy so the worst conv layer's DAC share
//!    at [3:4] lands just above the 85% floor (0.8535). Symbols track
//!    multiplies almost exactly, so this intercept loads every layer
//!    uniformly; it is the slice-independent term of the
//!    power-versus-precision line.
//! 4. Bisect the CRC read energy so the first-layer-group reduction from
//!    enabling compressive acquisition is exactly 42.2% at [3:4].
//! 5. Scale everything so the [4:4]/[3:4]/[2:4] points sit centered inside
//!    their tolerance bands, then choose the core clock to land 61.61
//!    kFPS/W at [4:4] and divide the normalized energies by it.

use lightator::config::RunConfig;
use lightator::fixtures;
use lightator::mapper::{plan_model, MappingPlan};
use lightator::power::{network_report, EnergyConfig, PowerReport};
use lightator::CoreGeometry;

const STALL: u64 = 1;

fn report(plans: &[MappingPlan], bits: u8, e: &EnergyConfig) -> PowerReport {
    let b = vec![bits; plans.len()];
    network_report(plans, &b, e, STALL).expect("report")
}

/// Power of the acquisition-plus-first-convolution group.
fn first_group_w(r: &PowerReport) -> f64 {
    let mut total = 0.0;
    for l in &r.layers {
        total += l.total_w;
        if l.is_conv {
            break;
        }
    }
    total
}

fn min_conv_dac_share(r: &PowerReport) -> f64 {
    r.layers
        .iter()
        .filter(|l| l.is_conv)
        .map(|l| l.dac_share)
        .fold(1.0_f64, f64::min)
}

fn main() {
    let geometry = CoreGeometry::default();
    let base = fixtures::vgg9_like();
    let ca = fixtures::vgg9_like_ca();
    let plans_base = plan_model(&base, &geometry).expect("base plan");
    let plans_ca = plan_model(&ca, &geometry).expect("ca plan");

    // Step 1: normalized units. Clock 1 Hz, DAC slice energy 1 J.
    let mut e = EnergyConfig::zero();
    e.e_dac_slice_j = 1.0;

    // Step 2: small event energies as fixed shares of [3:4] network DAC power.
    let dac3_w = report(&plans_ca, 3, &e).network_w;
    let frame_s = |plans: &[MappingPlan]| -> f64 {
        plans
            .iter()
            .map(|p| p.cycles + p.counts.image_swaps * STALL)
            .sum::<u64>() as f64
    };
    let f_ca = frame_s(&plans_ca);
    let totals = |plans: &[MappingPlan]| {
        let mut writes = 0u64;
        let mut symbols = 0u64;
        let mut bpd = 0u64;
        let mut adc = 0u64;
        for p in plans {
            writes += p.mr_writes;
            symbols += p.counts.vcsel_symbols;
            bpd += p.counts.bpd_reads;
            adc += p.counts.adc_conversions;
        }
        (writes, symbols, bpd, adc)
    };
    let (writes, _symbols, bpd, adc) = totals(&plans_ca);
    let share = |theta: f64, count: u64| theta * dac3_w * f_ca / count as f64;
    e.e_tune_per_mr_j = share(0.0015, writes);
    e.e_bpd_per_read_j = share(0.002, bpd);
    e.e_adc_per_conv_j = share(0.0015, adc);
    e.p_misc_static_w = 0.003 * dac3_w;

    // Step 3: VCSEL symbol energy for a worst conv-layer DAC share of
    // 0.8525 at [3:4].
    let target_share = 0.8525;
    let (mut lo, mut hi) = (0.0, dac3_w);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        e.e_vcsel_per_symbol_j = mid;
        if min_conv_dac_share(&report(&plans_ca, 3, &e)) > target_share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    e.e_vcsel_per_symbol_j = lo;

    // Step 4: CRC read energy for a 42.2% first-layer-group reduction.
    let target_reduction = 0.422;
    let (mut lo, mut hi) = (0.0, 1e7);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        e.e_crc_per_read_j = mid;
        let with = first_group_w(&report(&plans_ca, 3, &e));
        let without = first_group_w(&report(&plans_base, 3, &e));
        let reduction = 1.0 - with / without;
        // Reduction falls as the precision-independent CRC grows.
        if reduction > target_reduction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    e.e_crc_per_read_j = 0.5 * (lo + hi);

    // Step 5: absolute scale and clock.
    let r4 = report(&plans_ca, 4, &e);
    let r3 = report(&plans_ca, 3, &e);
    let r2 = report(&plans_ca, 2, &e);
    let (p4, p3, p2) = (
        r4.max_instantaneous_w,
        r3.max_instantaneous_w,
        r2.max_instantaneous_w,
    );
    let alpha = (p4 - p3) / 8.0;
    let pred2 = 3.0 * alpha + (p3 - 7.0 * alpha);
    eprintln!("# normalized: p4={p4:.1} p3={p3:.1} p2={p2:.1} pred2={pred2:.1}");
    eprintln!(
        "#   ratios: p4/p3={:.4} pred2/p3={:.4}",
        p4 / p3,
        pred2 / p3
    );
    eprintln!(
        "# p_misc = {:.1}, e_crc = {:.1}",
        e.p_misc_static_w, e.e_crc_per_read_j
    );
    for l in &r3.layers {
        eprintln!(
            "#   L{:>2} {:<10} share={:.4} inst={:>9.1} total={:>9.1} cyc={} st={}",
            l.layer_index,
            l.label,
            l.dac_share,
            l.instantaneous_w,
            l.total_w,
            l.cycles,
            l.stall_cycles
        );
    }
    // Feasible scale window from each band (targets 5.28, 2.71, 1.46).
    let lo_s = (4.752 / p4).max(2.439 / p3).max(1.387 / pred2);
    let hi_s = (5.808 / p4).min(2.981 / p3).min(1.533 / pred2);
    assert!(
        lo_s < hi_s,
        "tolerance bands do not intersect: [{lo_s}, {hi_s}]"
    );
    let s = 0.5 * (lo_s + hi_s);

    let net4 = r4.network_w * s;
    let clock = 61.61e3 * net4 * f_ca;

    let cfg = RunConfig {
        e_dac_slice_j: s * e.e_dac_slice_j / clock,
        e_tune_per_mr_j: s * e.e_tune_per_mr_j / clock,
        e_vcsel_per_symbol_j: s * e.e_vcsel_per_symbol_j / clock,
        e_crc_per_read_j: s * e.e_crc_per_read_j / clock,
        e_bpd_per_read_j: s * e.e_bpd_per_read_j / clock,
        e_adc_per_conv_j: s * e.e_adc_per_conv_j / clock,
        p_misc_static_w: s * e.p_misc_static_w,
        core_clock_hz: clock,
        ..RunConfig::default()
    };

    // Verify against the reference points before printing.
    let energy = cfg.energy();
    let v4 = report(&plans_ca, 4, &energy);
    let v3 = report(&plans_ca, 3, &energy);
    let v2 = report(&plans_ca, 2, &energy);
    let b4 = report(&plans_base, 3, &energy);
    let reduction = 1.0 - first_group_w(&v3) / first_group_w(&b4);
    println!("# derived paper-calibration profile");
    println!(
        "# max power       [4:4] {:.4} W  (target 5.28 +/- 10%)",
        v4.max_instantaneous_w
    );
    println!(
        "# max power       [3:4] {:.4} W  (target 2.71 +/- 10%)",
        v3.max_instantaneous_w
    );
    println!("# max power       [2:4] {:.4} W", v2.max_instantaneous_w);
    let a = (v4.max_instantaneous_w - v3.max_instantaneous_w) / 8.0;
    let b = v3.max_instantaneous_w - 7.0 * a;
    println!(
        "# fit prediction  [2:4] {:.4} W  (target 1.46 +/- 5%)",
        3.0 * a + b
    );
    println!(
        "# min conv DAC share [3:4]: {:.4}  (floor 0.85)",
        min_conv_dac_share(&v3)
    );
    println!(
        "# first-layer-group reduction: {:.4}  (target 0.422 +/- 0.03)",
        reduction
    );
    println!(
        "# kFPS/W          [4:4] {:.3}  (target 61.61 +/- 15%)",
        v4.kfps_per_w
    );
    println!("# kFPS/W          [3:4] {:.3}", v3.kfps_per_w);
    println!("# kFPS/W          [2:4] {:.3}", v2.kfps_per_w);
    println!();
    println!("e_dac_slice_j = {:e}", cfg.e_dac_slice_j);
    println!("e_tune_per_mr_j = {:e}", cfg.e_tune_per_mr_j);
    println!("e_vcsel_per_symbol_j = {:e}", cfg.e_vcsel_per_symbol_j);
    println!("e_crc_per_read_j = {:e}", cfg.e_crc_per_read_j);
    println!("e_bpd_per_read_j = {:e}", cfg.e_bpd_per_read_j);
    println!("e_adc_per_conv_j = {:e}", cfg.e_adc_per_conv_j);
    println!("p_misc_static_w = {:e}", cfg.p_misc_static_w);
    println!("core_clock_hz = {:e}", cfg.core_clock_hz);

    // The shipped profile must match this derivation.
    let shipped = fixtures::paper_calibration();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);
    let ok = close(cfg.e_dac_slice_j, shipped.e_dac_slice_j)
        && close(cfg.e_tune_per_mr_j, shipped.e_tune_per_mr_j)
        && close(cfg.e_vcsel_per_symbol_j, shipped.e_vcsel_per_symbol_j)
        && close(cfg.e_crc_per_read_j, shipped.e_crc_per_read_j)
        && close(cfg.e_bpd_per_read_j, shipped.e_bpd_per_read_j)
        && close(cfg.e_adc_per_conv_j, shipped.e_adc_per_conv_j)
        && close(cfg.p_misc_static_w, shipped.p_misc_static_w)
        && close(cfg.core_clock_hz, shipped.core_clock_hz);
    if ok {
        println!("# matches the shipped paper-calibration profile");
    } else {
        eprintln!("# MISMATCH against the shipped profile; update fixtures::paper_calibration");
        std::process::exit(1);
    }
}
