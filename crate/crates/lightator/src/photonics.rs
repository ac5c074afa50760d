//! Physical models of the optical devices.
//!
//! A microring resonator (MR) sits next to a waveguide and attenuates light
//! near its resonant wavelength. Tuning the resonance changes the through-port
//! transmission seen by a given wavelength channel, which is how a weight is
//! imprinted on that channel. The through port is modeled as a Lorentzian dip:
//!
//! ```text
//! T(dl) = 1 - A / (1 + (2*dl / FWHM)^2),    A = 1 - t_min
//! ```
//!
//! where `dl` is the detuning between the signal wavelength and the ring's
//! resonance. On resonance (`dl = 0`) the transmission bottoms out at `t_min`;
//! far off resonance it approaches 1. The closed form inverts exactly, which
//! the weight programming path relies on.
//!
//! The electrical front end is modeled alongside: a comparator-based reading
//! circuit (CRC) with 15 uniformly spaced thresholds turns a pixel voltage
//! into a 4-bit code without an ADC, and a directly modulated VCSEL turns a
//! 4-bit code back into light intensity through 15 unit current slices plus
//! one always-on bias slice (16 driver transistors in total). Balanced
//! photodetectors (BPDs) subtract two optical rails to recover signed values.

use crate::error::{Error, Result};

/// Wavelength channels multiplexed on one arm (one MR per channel).
pub const WDM_CHANNELS: usize = 9;

/// Largest 4-bit activation code.
pub const MAX_ACT_CODE: u8 = 15;

/// Comparators in one CRC unit.
pub const CRC_COMPARATORS: usize = 15;

/// Driving transistors in one VCSEL driver: 15 unit slices plus one bias.
pub const VCSEL_DRIVER_TRANSISTORS: usize = 16;

/// Physical parameters of one microring resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MRDeviceParams {
    /// Effective refractive index (dimensionless).
    pub n_eff: f64,
    /// Ring circumference in micrometers.
    pub circumference_um: f64,
    /// Order of the resonant mode.
    pub mode_order: u32,
    /// Full width at half maximum of the resonance dip, in nanometers.
    pub fwhm_nm: f64,
    /// Through-port transmission at zero detuning, in `[0, 1)`.
    pub t_min: f64,
}

impl MRDeviceParams {
    pub fn new(
        n_eff: f64,
        circumference_um: f64,
        mode_order: u32,
        fwhm_nm: f64,
        t_min: f64,
    ) -> Result<Self> {
        if !(n_eff > 0.0) {
            return Err(Error::Device(format!("n_eff must be > 0, got {n_eff}")));
        }
        if !(circumference_um > 0.0) {
            return Err(Error::Device(format!(
                "circumference must be > 0 um, got {circumference_um}"
            )));
        }
        if mode_order == 0 {
            return Err(Error::Device("mode order must be >= 1".into()));
        }
        if !(fwhm_nm > 0.0) {
            return Err(Error::Device(format!("FWHM must be > 0 nm, got {fwhm_nm}")));
        }
        if !(0.0..1.0).contains(&t_min) {
            return Err(Error::Device(format!(
                "t_min must lie in [0, 1), got {t_min}"
            )));
        }
        Ok(Self {
            n_eff,
            circumference_um,
            mode_order,
            fwhm_nm,
            t_min,
        })
    }

    /// Resonant wavelength in nanometers: `n_eff * L / m`.
    pub fn resonant_wavelength_nm(&self) -> f64 {
        self.n_eff * self.circumference_um / self.mode_order as f64 * 1000.0
    }

    /// Resonance depth `A = 1 - t_min`.
    fn depth(&self) -> f64 {
        1.0 - self.t_min
    }
}

impl Default for MRDeviceParams {
    /// Default device: 1548 nm resonance, 0.2 nm FWHM, 5% floor.
    fn default() -> Self {
        Self {
            n_eff: 2.4,
            circumference_um: 6.45,
            mode_order: 10,
            fwhm_nm: 0.2,
            t_min: 0.05,
        }
    }
}

/// Through-port transmission at a given detuning (nm) from resonance.
///
/// Symmetric in the detuning, minimal (`t_min`) on resonance, and approaches
/// 1 as the detuning grows.
pub fn through_transmission(detuning_nm: f64, params: &MRDeviceParams) -> f64 {
    let x = 2.0 * detuning_nm / params.fwhm_nm;
    1.0 - params.depth() / (1.0 + x * x)
}

/// Detuning (nm, non-negative) that realizes a target through transmission.
///
/// Inverse of [`through_transmission`]:
/// `dl = (FWHM/2) * sqrt(A / (1 - T) - 1)`.
///
/// Errors if the target lies below `t_min` or at/above 1, neither of which
/// the device can realize.
pub fn detuning_for_transmission(t_target: f64, params: &MRDeviceParams) -> Result<f64> {
    if t_target < params.t_min || t_target >= 1.0 {
        return Err(Error::Device(format!(
            "transmission {t_target} not realizable (valid range [{}, 1))",
            params.t_min
        )));
    }
    let ratio = params.depth() / (1.0 - t_target);
    // ratio >= 1 is guaranteed by the range check above.
    Ok(params.fwhm_nm / 2.0 * (ratio - 1.0).max(0.0).sqrt())
}

/// Convert a pixel voltage to a 4-bit code through the CRC.
///
/// The 15 reference thresholds are spaced uniformly strictly inside
/// `(v_lo, v_hi)`; the code is the number of thresholds strictly below
/// `v_pd`. Inputs outside the range clamp to 0 or 15.
pub fn crc_quantize(v_pd: f64, v_lo: f64, v_hi: f64) -> u8 {
    assert!(v_lo < v_hi, "CRC range must satisfy v_lo < v_hi");
    let step = (v_hi - v_lo) / (CRC_COMPARATORS + 1) as f64;
    let mut code = 0u8;
    for k in 1..=CRC_COMPARATORS {
        if v_lo + k as f64 * step < v_pd {
            code += 1;
        }
    }
    code
}

/// Light emitted by one VCSEL at one wavelength channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalSymbol {
    pub channel: u8,
    /// 4-bit activation code driving the VCSEL.
    pub level: u8,
    /// Normalized optical power, `level / 15`.
    pub intensity: f64,
}

/// Encode a 4-bit code as VCSEL light intensity on a channel.
///
/// Each of the 15 unit slices contributes `1/15` of full intensity; the bias
/// slice keeps the laser above threshold and carries no signal.
pub fn vcsel_encode(channel: u8, code: u8) -> Result<OpticalSymbol> {
    if code > MAX_ACT_CODE {
        return Err(Error::Domain(format!(
            "VCSEL drive code {code} exceeds {MAX_ACT_CODE}"
        )));
    }
    Ok(OpticalSymbol {
        channel,
        level: code,
        intensity: code as f64 / MAX_ACT_CODE as f64,
    })
}

/// Balanced photodetector: difference of two non-negative rail powers.
pub fn bpd_detect(p_plus: f64, p_minus: f64) -> Result<f64> {
    if p_plus < 0.0 || p_minus < 0.0 {
        return Err(Error::Domain(format!(
            "BPD rail powers must be non-negative, got ({p_plus}, {p_minus})"
        )));
    }
    Ok(p_plus - p_minus)
}

/// State of one MR on an arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrState {
    /// Detuned identically on both rails; contributes exactly zero.
    Inactive,
    /// Programmed with a signed integer weight level.
    Active(i32),
}

/// One MR slot of an arm: the wavelength channel it owns and its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MRAssignment {
    pub channel: u8,
    pub state: MrState,
}

impl MRAssignment {
    pub fn inactive(channel: u8) -> Self {
        Self {
            channel,
            state: MrState::Inactive,
        }
    }

    pub fn active(channel: u8, level: i32) -> Self {
        Self {
            channel,
            state: MrState::Active(level),
        }
    }
}

/// Maps signed weight levels onto differential transmission pairs.
///
/// A weight level `w` splits into `max(w, 0)` on the plus rail and
/// `max(-w, 0)` on the minus rail. Each magnitude `k` in `0..=max_level`
/// programs the transmission `t_zero + k * step`, a ladder from `t_min` up to
/// `t_top`. Because the ladder is affine in `k`, the BPD difference of the
/// two rails is exactly `step * w` and the shared baseline cancels.
#[derive(Debug, Clone, Copy)]
pub struct WeightEncoder {
    t_zero: f64,
    step: f64,
    max_level: i32,
}

impl WeightEncoder {
    /// Build the ladder for a layer whose levels span `-max_level..=max_level`.
    ///
    /// `t_top` is the transmission assigned to the largest magnitude and must
    /// satisfy `t_min < t_top < 1`.
    pub fn new(params: &MRDeviceParams, t_top: f64, max_level: i32) -> Result<Self> {
        if max_level < 1 {
            return Err(Error::Device(format!(
                "weight range must be >= 1 level, got {max_level}"
            )));
        }
        if t_top <= params.t_min || t_top >= 1.0 {
            return Err(Error::Device(format!(
                "t_top {t_top} must lie in ({}, 1)",
                params.t_min
            )));
        }
        Ok(Self {
            t_zero: params.t_min,
            step: (t_top - params.t_min) / max_level as f64,
            max_level,
        })
    }

    /// Transmission programmed for a weight magnitude.
    pub fn transmission_for_magnitude(&self, magnitude: i32) -> f64 {
        self.t_zero + self.step * magnitude as f64
    }

    /// Differential `(plus, minus)` transmissions for a signed level.
    pub fn rails(&self, level: i32) -> Result<(f64, f64)> {
        if level.abs() > self.max_level {
            return Err(Error::Device(format!(
                "weight level {level} outside +/-{}",
                self.max_level
            )));
        }
        let plus = self.transmission_for_magnitude(level.max(0));
        let minus = self.transmission_for_magnitude((-level).max(0));
        Ok((plus, minus))
    }

    /// Transmission difference per weight level; the analog-to-integer
    /// rescale factor is its reciprocal.
    pub fn slope(&self) -> f64 {
        self.step
    }

    /// Tuning detunings `(plus, minus)` in nm that realize a level, going
    /// through the Lorentzian inverse. Reprogramming hardware would apply
    /// these; the simulator mostly uses [`WeightEncoder::rails`] directly.
    pub fn detunings(&self, level: i32, params: &MRDeviceParams) -> Result<(f64, f64)> {
        let (tp, tm) = self.rails(level)?;
        Ok((
            detuning_for_transmission(tp, params)?,
            detuning_for_transmission(tm, params)?,
        ))
    }
}
