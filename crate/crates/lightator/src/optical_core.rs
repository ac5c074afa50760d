//! The optical core execution fabric.
//!
//! The core is an 8x12 array of 96 MVM banks. Each bank has 6 arms, each arm
//! carries 9 MRs (one per WDM channel), for 5184 MRs in total. Activations
//! arrive as VCSEL light intensities, each arm's MRs weight its channels, and
//! a balanced photodetector per arm accumulates the result. A two-stage
//! summation section behind the arms combines partial sums when one dot
//! product spans several arms: stage 1 sums arms {0,1,2} and {3,4,5}, stage 2
//! sums the two group outputs.
//!
//! Two execution modes are provided. Ideal mode computes in the integer level
//! domain (activation code times signed weight level, exact i64 arithmetic),
//! deferring all scaling to the quantization layer, so results can be checked
//! against a plain integer dot product with zero tolerance. Device mode
//! reconstructs every product as VCSEL intensity times the differential
//! transmission pair of the weight rails, detects with the BPD, and rescales
//! at the readout, with an optional zero-mean Gaussian noise term per arm.

use crate::error::{Error, Result};
use crate::photonics::{
    bpd_detect, MRAssignment, MRDeviceParams, MrState, WeightEncoder, MAX_ACT_CODE, WDM_CHANNELS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape of the processing fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreGeometry {
    pub n_banks: usize,
    pub bank_rows: usize,
    pub bank_cols: usize,
    pub arms_per_bank: usize,
    pub mrs_per_arm: usize,
}

impl CoreGeometry {
    pub fn new(
        n_banks: usize,
        bank_rows: usize,
        bank_cols: usize,
        arms_per_bank: usize,
        mrs_per_arm: usize,
    ) -> Result<Self> {
        if n_banks == 0 || arms_per_bank == 0 || mrs_per_arm == 0 {
            return Err(Error::Validation {
                layer: None,
                message: "core geometry dimensions must be positive".into(),
            });
        }
        if bank_rows * bank_cols != n_banks {
            return Err(Error::Validation {
                layer: None,
                message: format!("bank grid {bank_rows}x{bank_cols} does not hold {n_banks} banks"),
            });
        }
        if arms_per_bank % 2 != 0 {
            return Err(Error::Validation {
                layer: None,
                message: "arms per bank must be even to form two summation groups".into(),
            });
        }
        Ok(Self {
            n_banks,
            bank_rows,
            bank_cols,
            arms_per_bank,
            mrs_per_arm,
        })
    }

    /// Total MRs in the core (5184 for the default geometry).
    pub fn total_mrs(&self) -> usize {
        self.n_banks * self.arms_per_bank * self.mrs_per_arm
    }

    /// MRs in one bank.
    pub fn mrs_per_bank(&self) -> usize {
        self.arms_per_bank * self.mrs_per_arm
    }

    /// Arms in one stage-1 summation group (half the bank).
    pub fn group_size(&self) -> usize {
        self.arms_per_bank / 2
    }
}

impl Default for CoreGeometry {
    fn default() -> Self {
        Self {
            n_banks: 96,
            bank_rows: 12,
            bank_cols: 8,
            arms_per_bank: 6,
            mrs_per_arm: WDM_CHANNELS,
        }
    }
}

/// How the summation section behind a bank's arms is configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummationMode {
    /// Summation section inactive; every arm output leaves the bank (6 results).
    Bypass,
    /// First stage only: one sum per 3-arm group (2 results).
    Stage1,
    /// Both stages: one sum over all 6 arms (1 result).
    Stage1And2,
}

/// One arm's worth of weights and activation feed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmLoad {
    /// One assignment per MR slot.
    pub mrs: Vec<MRAssignment>,
    /// Activation level per wavelength channel.
    pub acts: Vec<u8>,
}

impl ArmLoad {
    /// An arm with every MR inactive and a dark feed.
    pub fn idle(mrs_per_arm: usize) -> Self {
        Self {
            mrs: (0..mrs_per_arm)
                .map(|c| MRAssignment::inactive(c as u8))
                .collect(),
            acts: vec![0; mrs_per_arm],
        }
    }
}

/// One cycle's worth of weight and activation assignments for a single bank.
#[derive(Debug, Clone, PartialEq)]
pub struct BankLoad {
    pub arms: Vec<ArmLoad>,
    pub summation: SummationMode,
    /// Largest weight magnitude of the layer occupying this bank; the device
    /// path needs it to build the transmission ladder.
    pub weight_range: i32,
}

impl BankLoad {
    pub fn idle(geometry: &CoreGeometry) -> Self {
        Self {
            arms: (0..geometry.arms_per_bank)
                .map(|_| ArmLoad::idle(geometry.mrs_per_arm))
                .collect(),
            summation: SummationMode::Bypass,
            weight_range: 1,
        }
    }
}

/// A MAC result: exact integer in ideal mode, real number in device mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MacValue {
    Exact(i64),
    Analog(f64),
}

impl MacValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            MacValue::Exact(v) => *v as f64,
            MacValue::Analog(v) => *v,
        }
    }

    /// Integer view: exact in ideal mode, rounded at the readout in device mode.
    pub fn to_i64(&self) -> i64 {
        match self {
            MacValue::Exact(v) => *v,
            MacValue::Analog(v) => v.round() as i64,
        }
    }

    pub fn add(&self, other: &MacValue) -> MacValue {
        match (self, other) {
            (MacValue::Exact(a), MacValue::Exact(b)) => MacValue::Exact(a + b),
            (a, b) => MacValue::Analog(a.as_f64() + b.as_f64()),
        }
    }

    fn zero_like(&self) -> MacValue {
        match self {
            MacValue::Exact(_) => MacValue::Exact(0),
            MacValue::Analog(_) => MacValue::Analog(0.0),
        }
    }
}

/// One stride output with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrideResult {
    pub value: MacValue,
    pub bank: usize,
    pub slot: usize,
}

/// Analog execution model: the MR device, the top of the weight transmission
/// ladder, and per-arm readout noise.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub params: MRDeviceParams,
    pub t_top: f64,
    pub noise_sigma: f64,
    rng: ChaCha8Rng,
    spare_gaussian: Option<f64>,
}

impl DeviceModel {
    pub fn new(params: MRDeviceParams, t_top: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        if noise_sigma < 0.0 {
            return Err(Error::Device(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        // Validate t_top eagerly by building a ladder once.
        WeightEncoder::new(&params, t_top, 1)?;
        Ok(Self {
            params,
            t_top,
            noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_gaussian: None,
        })
    }

    /// Standard normal draw via Box-Muller (deterministic given the seed).
    fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    fn arm_noise(&mut self) -> f64 {
        if self.noise_sigma == 0.0 {
            0.0
        } else {
            self.noise_sigma * self.gaussian()
        }
    }
}

/// Execution mode of the core.
#[derive(Debug, Clone)]
pub enum ExecMode {
    Ideal,
    Device(DeviceModel),
}

impl ExecMode {
    pub fn is_ideal(&self) -> bool {
        matches!(self, ExecMode::Ideal)
    }
}

fn validate_arm(acts: &[u8], mrs: &[MRAssignment], weight_range: i32) -> Result<()> {
    if acts.len() != mrs.len() {
        return Err(Error::Mapping(format!(
            "arm has {} MRs but {} activation levels",
            mrs.len(),
            acts.len()
        )));
    }
    if let Some(bad) = acts.iter().find(|&&a| a > MAX_ACT_CODE) {
        return Err(Error::Mapping(format!(
            "activation level {bad} exceeds {MAX_ACT_CODE}"
        )));
    }
    let mut seen = 0u32;
    for mr in mrs {
        let c = mr.channel as usize;
        if c >= mrs.len() {
            return Err(Error::Mapping(format!(
                "channel {c} outside the arm's {} slots",
                mrs.len()
            )));
        }
        if seen & (1 << c) != 0 {
            return Err(Error::Mapping(format!(
                "channel {c} assigned to more than one MR in the arm"
            )));
        }
        seen |= 1 << c;
        if let MrState::Active(level) = mr.state {
            if level.abs() > weight_range {
                return Err(Error::Mapping(format!(
                    "weight level {level} outside +/-{weight_range}"
                )));
            }
        }
    }
    Ok(())
}

/// Exact integer MAC over one arm: sum of `act[channel] * level` over the
/// active MRs. Inactive MRs contribute exactly zero.
pub fn arm_mac_ideal(acts: &[u8], mrs: &[MRAssignment], weight_range: i32) -> Result<i64> {
    validate_arm(acts, mrs, weight_range)?;
    let mut accum = 0i64;
    for mr in mrs {
        if let MrState::Active(level) = mr.state {
            accum += acts[mr.channel as usize] as i64 * level as i64;
        }
    }
    Ok(accum)
}

/// Analog MAC over one arm, rescaled back to the level domain at the readout.
///
/// Both rails are accumulated in MR slot order 0..N so device-mode results do
/// not depend on any external evaluation order.
pub fn arm_mac_device(
    acts: &[u8],
    mrs: &[MRAssignment],
    weight_range: i32,
    device: &mut DeviceModel,
) -> Result<f64> {
    validate_arm(acts, mrs, weight_range)?;
    let encoder = WeightEncoder::new(&device.params, device.t_top, weight_range)?;
    let mut p_plus = 0.0;
    let mut p_minus = 0.0;
    for mr in mrs {
        let intensity = acts[mr.channel as usize] as f64 / MAX_ACT_CODE as f64;
        match mr.state {
            MrState::Inactive => {
                // Far detuned on both rails: the light passes equally and the
                // BPD cancels it.
                p_plus += intensity;
                p_minus += intensity;
            }
            MrState::Active(level) => {
                let (tp, tm) = encoder.rails(level)?;
                p_plus += intensity * tp;
                p_minus += intensity * tm;
            }
        }
    }
    let differential = bpd_detect(p_plus, p_minus)? + device.arm_noise();
    Ok(differential * MAX_ACT_CODE as f64 / encoder.slope())
}

/// Apply the summation section to a bank's arm outputs.
///
/// Bypass returns the outputs unchanged; Stage1 returns one sum per half;
/// Stage1And2 returns the full sum.
pub fn summation_tree(arm_outputs: &[MacValue], mode: SummationMode) -> Vec<MacValue> {
    let sum = |vals: &[MacValue]| -> MacValue {
        let mut acc = vals[0].zero_like();
        for v in vals {
            acc = acc.add(v);
        }
        acc
    };
    match mode {
        SummationMode::Bypass => arm_outputs.to_vec(),
        SummationMode::Stage1 => {
            let half = arm_outputs.len() / 2;
            vec![sum(&arm_outputs[..half]), sum(&arm_outputs[half..])]
        }
        SummationMode::Stage1And2 => vec![sum(arm_outputs)],
    }
}

/// Execute a single bank: per-arm MACs followed by the summation section.
pub fn execute_bank(
    bank_index: usize,
    load: &BankLoad,
    mode: &mut ExecMode,
) -> Result<Vec<StrideResult>> {
    let mut arm_values = Vec::with_capacity(load.arms.len());
    for arm in &load.arms {
        let value = match mode {
            ExecMode::Ideal => {
                MacValue::Exact(arm_mac_ideal(&arm.acts, &arm.mrs, load.weight_range)?)
            }
            ExecMode::Device(device) => MacValue::Analog(arm_mac_device(
                &arm.acts,
                &arm.mrs,
                load.weight_range,
                device,
            )?),
        };
        arm_values.push(value);
    }
    Ok(summation_tree(&arm_values, load.summation)
        .into_iter()
        .enumerate()
        .map(|(slot, value)| StrideResult {
            value,
            bank: bank_index,
            slot,
        })
        .collect())
}

/// All results of one core cycle plus its multiply count.
#[derive(Debug, Clone)]
pub struct CycleOutput {
    /// Ordered by (bank index, output slot).
    pub results: Vec<StrideResult>,
    /// Scalar multiplies performed: active MRs with a fed activation.
    pub multiplies: u64,
}

/// Execute one operational cycle over at most `n_banks` bank loads.
///
/// Results are ordered by (bank index, output slot) and, in ideal mode, are
/// independent of evaluation order because integer accumulation is exact.
pub fn execute_core_cycle(
    loads: &[BankLoad],
    geometry: &CoreGeometry,
    mode: &mut ExecMode,
) -> Result<CycleOutput> {
    if loads.len() > geometry.n_banks {
        return Err(Error::Capacity(format!(
            "{} bank loads exceed the core's {} banks",
            loads.len(),
            geometry.n_banks
        )));
    }
    let mut results = Vec::new();
    let mut multiplies = 0u64;
    for (bank, load) in loads.iter().enumerate() {
        if load.arms.len() != geometry.arms_per_bank {
            return Err(Error::Mapping(format!(
                "bank {bank} has {} arms, geometry expects {}",
                load.arms.len(),
                geometry.arms_per_bank
            )));
        }
        multiplies += load
            .arms
            .iter()
            .flat_map(|a| a.mrs.iter())
            .filter(|mr| matches!(mr.state, MrState::Active(_)))
            .count() as u64;
        results.extend(execute_bank(bank, load, mode)?);
    }
    Ok(CycleOutput {
        results,
        multiplies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn arm_from(levels: &[Option<i32>], acts: &[u8]) -> ArmLoad {
        let mrs = levels
            .iter()
            .enumerate()
            .map(|(c, l)| match l {
                Some(v) => MRAssignment::active(c as u8, *v),
                None => MRAssignment::inactive(c as u8),
            })
            .collect();
        ArmLoad {
            mrs,
            acts: acts.to_vec(),
        }
    }

    #[test]
    fn geometry_invariants() {
        let g = CoreGeometry::default();
        assert_eq!(g.n_banks, g.bank_rows * g.bank_cols);
        assert_eq!(g.total_mrs(), 5184);
        assert_eq!(g.mrs_per_bank(), 54);
        assert!(CoreGeometry::new(96, 10, 8, 6, 9).is_err());
    }

    #[test]
    fn arm_mac_basics() {
        let acts = [0u8; 9];
        let idle = arm_from(&[None; 9], &acts);
        assert_eq!(arm_mac_ideal(&idle.acts, &idle.mrs, 7).unwrap(), 0);

        // One-hot identity.
        let mut levels = [None; 9];
        levels[0] = Some(1);
        let mut acts = [0u8; 9];
        acts[0] = 15;
        let arm = arm_from(&levels, &acts);
        assert_eq!(arm_mac_ideal(&arm.acts, &arm.mrs, 7).unwrap(), 15);
    }

    #[test]
    fn arm_mac_rejects_bad_inputs() {
        let arm = arm_from(&[Some(3); 9], &[16; 9]);
        assert!(arm_mac_ideal(&arm.acts, &arm.mrs, 7).is_err());

        let arm = arm_from(&[Some(8); 9], &[1; 9]);
        assert!(arm_mac_ideal(&arm.acts, &arm.mrs, 7).is_err());

        // Duplicate channel.
        let mut arm = arm_from(&[Some(1); 9], &[1; 9]);
        arm.mrs[1].channel = 0;
        assert!(arm_mac_ideal(&arm.acts, &arm.mrs, 7).is_err());
    }

    #[test]
    fn arm_mac_matches_scalar_oracle_over_random_trials() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..10_000 {
            let levels: Vec<Option<i32>> = (0..9)
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        Some(rng.gen_range(-7..=7))
                    } else {
                        None
                    }
                })
                .collect();
            let acts: Vec<u8> = (0..9).map(|_| rng.gen_range(0..=15)).collect();
            let arm = arm_from(&levels, &acts);
            let expected: i64 = levels
                .iter()
                .zip(&acts)
                .map(|(l, &a)| l.map_or(0, |w| w as i64 * a as i64))
                .sum();
            assert_eq!(arm_mac_ideal(&arm.acts, &arm.mrs, 7).unwrap(), expected);
        }
    }

    #[test]
    fn device_mode_converges_to_ideal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut device =
            ExecMode::Device(DeviceModel::new(MRDeviceParams::default(), 0.95, 0.0, 1).unwrap());
        for _ in 0..500 {
            let levels: Vec<Option<i32>> = (0..9).map(|_| Some(rng.gen_range(-7..=7))).collect();
            let acts: Vec<u8> = (0..9).map(|_| rng.gen_range(0..=15)).collect();
            let arm = arm_from(&levels, &acts);
            let exact = arm_mac_ideal(&arm.acts, &arm.mrs, 7).unwrap() as f64;
            let analog = match &mut device {
                ExecMode::Device(d) => arm_mac_device(&arm.acts, &arm.mrs, 7, d).unwrap(),
                _ => unreachable!(),
            };
            let tol = 1e-6 * exact.abs().max(1.0);
            assert!(
                (analog - exact).abs() < tol,
                "device {analog} vs ideal {exact}"
            );
        }
    }

    #[test]
    fn device_noise_is_deterministic_per_seed() {
        let arm = arm_from(&[Some(3); 9], &[7; 9]);
        let run = |seed| {
            let mut d = DeviceModel::new(MRDeviceParams::default(), 0.95, 0.01, seed).unwrap();
            arm_mac_device(&arm.acts, &arm.mrs, 7, &mut d).unwrap()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn summation_modes() {
        let vals: Vec<MacValue> = [1i64, 2, 3, 4, 5, 6]
            .iter()
            .map(|&v| MacValue::Exact(v))
            .collect();
        let bypass = summation_tree(&vals, SummationMode::Bypass);
        assert_eq!(bypass.len(), 6);
        assert_eq!(bypass[3], MacValue::Exact(4));

        let vals: Vec<MacValue> = [1i64, 1, 1, 2, 2, 2]
            .iter()
            .map(|&v| MacValue::Exact(v))
            .collect();
        let s1 = summation_tree(&vals, SummationMode::Stage1);
        assert_eq!(s1, vec![MacValue::Exact(3), MacValue::Exact(6)]);
        let s12 = summation_tree(&vals, SummationMode::Stage1And2);
        assert_eq!(s12, vec![MacValue::Exact(9)]);
    }

    /// Build a bank holding `strides` replicas of one kernel of length `dot`,
    /// activations all equal to `act`.
    fn replicated_bank(dot: usize, strides: usize, act: u8, summation: SummationMode) -> BankLoad {
        let arms_per_stride = dot.div_ceil(9);
        let mut arms = Vec::new();
        for _ in 0..strides {
            for a in 0..arms_per_stride {
                let lo = a * 9;
                let hi = ((a + 1) * 9).min(dot);
                let levels: Vec<Option<i32>> = (0..9)
                    .map(|i| if lo + i < hi { Some(1) } else { None })
                    .collect();
                arms.push(arm_from(&levels, &[act; 9]));
            }
        }
        while arms.len() < 6 {
            arms.push(ArmLoad::idle(9));
        }
        BankLoad {
            arms,
            summation,
            weight_range: 7,
        }
    }

    #[test]
    fn bank_stride_counts_per_kernel_size() {
        let mut mode = ExecMode::Ideal;

        // 3x3 kernels: 6 independent strides, summation bypassed.
        let load = replicated_bank(9, 6, 2, SummationMode::Bypass);
        let out = execute_bank(0, &load, &mut mode).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|r| r.value == MacValue::Exact(18)));

        // 5x5 kernel over 3 arms: 2 strides through stage 1.
        let load = replicated_bank(25, 2, 1, SummationMode::Stage1);
        let out = execute_bank(0, &load, &mut mode).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|r| r.value == MacValue::Exact(25)));

        // 7x7 kernel over 6 arms: a single stride through both stages.
        let load = replicated_bank(49, 1, 1, SummationMode::Stage1And2);
        let out = execute_bank(0, &load, &mut mode).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value, MacValue::Exact(49));
    }

    #[test]
    fn full_cycle_capacity_and_counts() {
        let g = CoreGeometry::default();
        let mut mode = ExecMode::Ideal;

        // Fully loaded 3x3 cycle: 5184 multiplies, 576 stride results.
        let loads: Vec<BankLoad> = (0..96)
            .map(|_| replicated_bank(9, 6, 1, SummationMode::Bypass))
            .collect();
        let out = execute_core_cycle(&loads, &g, &mut mode).unwrap();
        assert_eq!(out.multiplies, 5184);
        assert_eq!(out.results.len(), 576);

        // Empty cycle.
        let out = execute_core_cycle(&[], &g, &mut mode).unwrap();
        assert!(out.results.is_empty());
        assert_eq!(out.multiplies, 0);

        // 96 banks of 7x7 loads: 96 results, 96 * 49 multiplies.
        let loads: Vec<BankLoad> = (0..96)
            .map(|_| replicated_bank(49, 1, 1, SummationMode::Stage1And2))
            .collect();
        let out = execute_core_cycle(&loads, &g, &mut mode).unwrap();
        assert_eq!(out.results.len(), 96);
        assert_eq!(out.multiplies, 4704);

        // Capacity error past 96 loads.
        let loads: Vec<BankLoad> = (0..97).map(|_| BankLoad::idle(&g)).collect();
        assert!(matches!(
            execute_core_cycle(&loads, &g, &mut mode),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn results_keep_bank_slot_order() {
        let g = CoreGeometry::default();
        let mut mode = ExecMode::Ideal;
        let loads: Vec<BankLoad> = (0..10)
            .map(|_| replicated_bank(9, 6, 1, SummationMode::Bypass))
            .collect();
        let out = execute_core_cycle(&loads, &g, &mut mode).unwrap();
        for (i, r) in out.results.iter().enumerate() {
            assert_eq!(r.bank, i / 6);
            assert_eq!(r.slot, i % 6);
        }
    }
}
