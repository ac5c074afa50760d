//! Run configuration: a flat, commented key-value file (TOML syntax, all
//! keys top-level). Unknown keys are rejected. The shipped
//! `fixtures/paper-calibration.toml` profile holds the calibrated defaults;
//! [`RunConfig::default`] carries the same values so bare runs reproduce it.

use crate::error::{Error, Result};
use crate::optical_core::CoreGeometry;
use crate::photonics::MRDeviceParams;
use crate::power::EnergyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,

    // MR device.
    pub n_eff: f64,
    pub circumference_um: f64,
    pub mode_order: u32,
    pub fwhm_nm: f64,
    pub t_min: f64,
    /// WDM channel spacing; kept at >= 8 FWHM so inter-channel crosstalk
    /// stays below 0.4% and can be left unmodeled.
    pub channel_spacing_nm: f64,
    /// Transmission programmed for the largest weight magnitude.
    pub t_top_weight: f64,
    /// Standard deviation of the per-arm readout noise (device mode).
    pub noise_sigma: f64,
    pub noise_seed: u64,

    // Core geometry.
    pub n_banks: usize,
    pub bank_rows: usize,
    pub bank_cols: usize,
    pub arms_per_bank: usize,
    pub mrs_per_arm: usize,

    // Energy model.
    pub e_dac_slice_j: f64,
    pub e_tune_per_mr_j: f64,
    pub e_vcsel_per_symbol_j: f64,
    pub e_crc_per_read_j: f64,
    pub e_bpd_per_read_j: f64,
    pub e_adc_per_conv_j: f64,
    pub p_misc_static_w: f64,
    pub core_clock_hz: f64,

    // Scheduling.
    /// Stall cycles charged per full weight-image swap.
    pub reprogram_stall_cycles: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        crate::fixtures::paper_calibration()
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        self.device()?;
        self.geometry()?;
        self.energy().validate()?;
        if self.channel_spacing_nm < 8.0 * self.fwhm_nm {
            return Err(Error::validation(format!(
                "channel spacing {} nm below 8 FWHM ({} nm); crosstalk would not be negligible",
                self.channel_spacing_nm,
                8.0 * self.fwhm_nm
            )));
        }
        if self.t_top_weight <= self.t_min || self.t_top_weight >= 1.0 {
            return Err(Error::validation(format!(
                "t_top_weight {} must lie in (t_min, 1)",
                self.t_top_weight
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::validation("noise_sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn device(&self) -> Result<MRDeviceParams> {
        MRDeviceParams::new(
            self.n_eff,
            self.circumference_um,
            self.mode_order,
            self.fwhm_nm,
            self.t_min,
        )
    }

    pub fn geometry(&self) -> Result<CoreGeometry> {
        CoreGeometry::new(
            self.n_banks,
            self.bank_rows,
            self.bank_cols,
            self.arms_per_bank,
            self.mrs_per_arm,
        )
    }

    pub fn energy(&self) -> EnergyConfig {
        EnergyConfig {
            e_dac_slice_j: self.e_dac_slice_j,
            e_tune_per_mr_j: self.e_tune_per_mr_j,
            e_vcsel_per_symbol_j: self.e_vcsel_per_symbol_j,
            e_crc_per_read_j: self.e_crc_per_read_j,
            e_bpd_per_read_j: self.e_bpd_per_read_j,
            e_adc_per_conv_j: self.e_adc_per_conv_j,
            p_misc_static_w: self.p_misc_static_w,
            core_clock_hz: self.core_clock_hz,
        }
    }
}

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Load and validate a config file. Returns the config together with the
/// hash of the file contents so outputs can embed it.
pub fn load_config(path: impl AsRef<Path>) -> Result<(RunConfig, String)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok((cfg, content_hash(text.as_bytes())))
}

/// Hash of the built-in default profile (used when no config file is given).
pub fn default_config_hash() -> String {
    let text = toml::to_string(&RunConfig::default()).expect("default config serializes");
    content_hash(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "schema_version = 1\nn_eff = 2.4\nnot_a_key = 5\n";
        let parsed: std::result::Result<RunConfig, _> = toml::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn spacing_consistency_enforced() {
        let mut cfg = RunConfig::default();
        cfg.channel_spacing_nm = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(content_hash(b"abc").len(), 64);
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
    }

    #[test]
    fn shipped_profile_file_matches_builtin_defaults() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/paper-calibration.toml"
        );
        let (cfg, _) = load_config(path).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }
}
