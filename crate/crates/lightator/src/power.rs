//! Energy and power model.
//!
//! Six component categories are tracked per layer: ADC (readout
//! conversions), DAC (weight tuning converters), DMVA (CRC reads, VCSELs and
//! their drivers), TUN (thermal tuning writes), BPD (photodetector reads),
//! and MISC (controller static power apportioned by time share).
//!
//! The DAC bank is the dominant consumer: every active MR needs its tuning
//! value held by a binary-weighted current-steering DAC, so DAC energy
//! scales with active MR slots per cycle times the number of powered unit
//! slices, `2^bits - 1`. Power-gating the slices tied to unused precision is
//! what makes 3-bit and 2-bit weights cheaper on the same hardware.
//!
//! Per-layer watts in reports are amortized over the frame period, so layer
//! rows sum to the network total. Instantaneous power (energy over the
//! layer's own active time) is reported alongside; CRC energy is excluded
//! from the instantaneous figure because pixel conversion happens during
//! exposure, not while the core runs the layer.

use crate::error::{Error, Result};
use crate::mapper::MappingPlan;
use crate::quant;
use serde::{Deserialize, Serialize};

/// Per-event energy constants and the operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    /// Energy per powered DAC unit slice per occupied MR slot per cycle (J).
    pub e_dac_slice_j: f64,
    /// Thermal tuning energy per MR programming event (J).
    pub e_tune_per_mr_j: f64,
    /// Energy per modulated VCSEL symbol (J).
    pub e_vcsel_per_symbol_j: f64,
    /// Energy per CRC pixel-channel read (J).
    pub e_crc_per_read_j: f64,
    /// Energy per balanced-photodetector read (J).
    pub e_bpd_per_read_j: f64,
    /// Energy per readout conversion (J).
    pub e_adc_per_conv_j: f64,
    /// Controller and peripheral static power (W).
    pub p_misc_static_w: f64,
    /// Operational cycle rate of the core (Hz).
    pub core_clock_hz: f64,
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<()> {
        let energies = [
            self.e_dac_slice_j,
            self.e_tune_per_mr_j,
            self.e_vcsel_per_symbol_j,
            self.e_crc_per_read_j,
            self.e_bpd_per_read_j,
            self.e_adc_per_conv_j,
            self.p_misc_static_w,
        ];
        if energies.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::validation("energy constants must be >= 0"));
        }
        if !(self.core_clock_hz > 0.0) {
            return Err(Error::validation("core clock must be positive"));
        }
        Ok(())
    }

    /// All-zero energies at 1 Hz; useful as a base for tests.
    pub fn zero() -> Self {
        Self {
            e_dac_slice_j: 0.0,
            e_tune_per_mr_j: 0.0,
            e_vcsel_per_symbol_j: 0.0,
            e_crc_per_read_j: 0.0,
            e_bpd_per_read_j: 0.0,
            e_adc_per_conv_j: 0.0,
            p_misc_static_w: 0.0,
            core_clock_hz: 1.0,
        }
    }
}

impl Default for EnergyConfig {
    /// The shipped calibration profile (see `fixtures::paper_calibration`).
    fn default() -> Self {
        crate::fixtures::paper_calibration_energy()
    }
}

/// Active DAC unit slices at a weight precision: `2^bits - 1`
/// (binary-weighted current steering; unused slices are power-gated).
pub fn dac_slices(weight_bits: u8) -> Result<u32> {
    quant::weight_level_range(weight_bits)?;
    Ok((1u32 << weight_bits) - 1)
}

/// One value per component category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub adc: f64,
    pub dac: f64,
    pub dmva: f64,
    pub tun: f64,
    pub bpd: f64,
    pub misc: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.adc + self.dac + self.dmva + self.tun + self.bpd + self.misc
    }

    fn scale(&self, k: f64) -> Components {
        Components {
            adc: self.adc * k,
            dac: self.dac * k,
            dmva: self.dmva * k,
            tun: self.tun * k,
            bpd: self.bpd * k,
            misc: self.misc * k,
        }
    }

    pub fn as_rows(&self) -> [(&'static str, f64); 6] {
        [
            ("ADC", self.adc),
            ("DAC", self.dac),
            ("DMVA", self.dmva),
            ("TUN", self.tun),
            ("BPD", self.bpd),
            ("MISC", self.misc),
        ]
    }
}

/// Power of one layer within a frame.
#[derive(Debug, Clone, Serialize)]
pub struct LayerPower {
    pub layer_index: usize,
    pub label: String,
    /// Amortized over the frame period; rows sum to the network total.
    pub watts: Components,
    pub total_w: f64,
    /// Energy over the layer's own active time, acquisition (CRC) excluded.
    pub instantaneous_w: f64,
    pub energy_j: f64,
    pub cycles: u64,
    pub stall_cycles: u64,
    pub dac_share: f64,
    pub is_conv: bool,
}

/// Whole-network power report.
#[derive(Debug, Clone, Serialize)]
pub struct PowerReport {
    pub layers: Vec<LayerPower>,
    /// Time-amortized network power (W).
    pub network_w: f64,
    /// Maximum instantaneous layer power (W).
    pub max_instantaneous_w: f64,
    pub fps: f64,
    pub kfps_per_w: f64,
    /// Compute plus reprogramming-stall cycles per frame.
    pub frame_cycles: u64,
    pub frame_energy_j: f64,
}

/// Per-frame energy breakdown of one layer (J).
pub fn layer_energy(
    plan: &MappingPlan,
    weight_bits: u8,
    cfg: &EnergyConfig,
    stall_per_swap: u64,
) -> Result<(Components, u64)> {
    let slices = dac_slices(weight_bits)? as f64;
    let c = &plan.counts;
    let stalls = c.image_swaps * stall_per_swap;
    let t_layer = (plan.cycles + stalls) as f64 / cfg.core_clock_hz;
    let energy = Components {
        adc: c.adc_conversions as f64 * cfg.e_adc_per_conv_j,
        dac: c.mult_slots as f64 * slices * cfg.e_dac_slice_j,
        dmva: c.vcsel_symbols as f64 * cfg.e_vcsel_per_symbol_j
            + c.crc_reads as f64 * cfg.e_crc_per_read_j,
        tun: plan.mr_writes as f64 * cfg.e_tune_per_mr_j,
        bpd: c.bpd_reads as f64 * cfg.e_bpd_per_read_j,
        misc: cfg.p_misc_static_w * t_layer,
    };
    Ok((energy, stalls))
}

/// Amortized component watts of one layer given the frame period.
pub fn layer_power(
    plan: &MappingPlan,
    weight_bits: u8,
    cfg: &EnergyConfig,
    stall_per_swap: u64,
    frame_cycles: u64,
) -> Result<LayerPower> {
    let (energy, stalls) = layer_energy(plan, weight_bits, cfg, stall_per_swap)?;
    let t_frame = frame_cycles as f64 / cfg.core_clock_hz;
    let t_layer = (plan.cycles + stalls) as f64 / cfg.core_clock_hz;
    let watts = energy.scale(1.0 / t_frame);
    let total_w = watts.total();
    let crc_energy = plan.counts.crc_reads as f64 * cfg.e_crc_per_read_j;
    let instantaneous_w = (energy.total() - crc_energy) / t_layer;
    Ok(LayerPower {
        layer_index: plan.layer_index,
        label: plan.label.clone(),
        total_w,
        instantaneous_w,
        energy_j: energy.total(),
        cycles: plan.cycles,
        stall_cycles: stalls,
        dac_share: if total_w > 0.0 {
            watts.dac / total_w
        } else {
            0.0
        },
        is_conv: plan.label.starts_with("conv"),
        watts,
    })
}

/// Assemble the network report from per-layer plans.
///
/// `bits` carries the weight precision of each plan (same order). The frame
/// period covers compute cycles plus one configurable stall per weight-image
/// swap; FPS is the core clock over that period.
pub fn network_report(
    plans: &[MappingPlan],
    bits: &[u8],
    cfg: &EnergyConfig,
    stall_per_swap: u64,
) -> Result<PowerReport> {
    cfg.validate()?;
    if plans.len() != bits.len() {
        return Err(Error::validation(format!(
            "{} precisions given for {} plans",
            bits.len(),
            plans.len()
        )));
    }
    if plans.is_empty() {
        return Err(Error::validation("no layers planned"));
    }
    let frame_cycles: u64 = plans
        .iter()
        .map(|p| p.cycles + p.counts.image_swaps * stall_per_swap)
        .sum();
    let mut layers = Vec::with_capacity(plans.len());
    for (plan, &b) in plans.iter().zip(bits) {
        layers.push(layer_power(plan, b, cfg, stall_per_swap, frame_cycles)?);
    }
    let network_w: f64 = layers.iter().map(|l| l.total_w).sum();
    let max_instantaneous_w = layers
        .iter()
        .map(|l| l.instantaneous_w)
        .fold(0.0_f64, f64::max);
    let fps = cfg.core_clock_hz / frame_cycles as f64;
    let frame_energy_j: f64 = layers.iter().map(|l| l.energy_j).sum();
    Ok(PowerReport {
        layers,
        network_w,
        max_instantaneous_w,
        fps,
        kfps_per_w: fps / 1000.0 / network_w,
        frame_cycles,
        frame_energy_j,
    })
}

/// Fit `P(b) = alpha * (2^b - 1) + beta` to measured (bits, watts) points.
///
/// Two points solve exactly; more run through least squares. Both
/// coefficients are clamped non-negative: a negative intercept refits the
/// slope through the origin, a negative slope degenerates to the flat fit.
pub fn calibrate(points: &[(u8, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::validation("calibration needs at least 2 points"));
    }
    let mut xs = Vec::with_capacity(points.len());
    for &(bits, watts) in points {
        xs.push((dac_slices(bits)? as f64, watts));
    }
    let first = xs[0].0;
    if xs.iter().all(|&(x, _)| x == first) {
        return Err(Error::validation(
            "calibration points share one precision; the fit is degenerate",
        ));
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().map(|p| p.0).sum();
    let sy: f64 = xs.iter().map(|p| p.1).sum();
    let sxx: f64 = xs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = xs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let mut alpha = (n * sxy - sx * sy) / denom;
    let mut beta = (sy - alpha * sx) / n;
    if beta < 0.0 {
        beta = 0.0;
        alpha = (sxy / sxx).max(0.0);
    }
    if alpha < 0.0 {
        alpha = 0.0;
        beta = sy / n;
    }
    Ok((alpha, beta))
}

/// Predicted power at a precision from a fit.
pub fn predict(alpha: f64, beta: f64, weight_bits: u8) -> Result<f64> {
    Ok(alpha * dac_slices(weight_bits)? as f64 + beta)
}
