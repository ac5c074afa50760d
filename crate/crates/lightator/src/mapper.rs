//! Hardware mapping: translates network layers into bank loads.
//!
//! Every output of a conv/FC/CA layer is one *stride*: a dot product of
//! length D. Strides are segmented into arms of 9 MACs. Placement follows
//! the kernel-size regimes of the core:
//!
//! * D <= 9: one arm per stride, summation bypassed, 6 strides per bank.
//! * 2..=3 arms: stage-1 summation. A stride may not straddle the two
//!   summation groups {0,1,2} and {3,4,5}, so each group hosts at most one
//!   stride (2 per bank for both the 2-arm and 3-arm cases).
//! * 4..=6 arms: both summation stages, one stride per bank.
//! * more than 6 arms: the stride spans several banks, each reduced through
//!   both stages, and the per-bank partials are accumulated digitally within
//!   the same cycle. Past 576 arms a single stride does not fit the core at
//!   all and is split across sequential cycles with a digital carry.
//!
//! Within a bank all stride slots replicate the same kernel weight image
//! (different spatial windows); distinct output channels occupy distinct
//! banks. FC layers have per-output weights, so their banks hold distinct
//! weight vectors side by side. Banks fill row-major (bank 0 through 95,
//! arms 0 through 5), and kernels occupy consecutive bank instances so a
//! weight image stays put as long as it has positions left to process.
//!
//! Besides placement, the planner streams the whole per-cycle schedule once
//! to count the quantities the power model charges for: scalar multiplies,
//! VCSEL symbols, BPD reads, readout conversions, MR programming events, and
//! weight-image swaps.

use crate::error::{Error, Result};
use crate::netir::{Dims, LayerKind};
use crate::optical_core::{
    execute_core_cycle, ArmLoad, BankLoad, CoreGeometry, ExecMode, MacValue, SummationMode,
};
use crate::photonics::MRAssignment;
use serde::Serialize;

/// Summation choice for one stride, including the cross-bank regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Bypass,
    Stage1,
    Stage1And2,
    MultiBank,
}

impl Placement {
    /// Core summation mode for the arms of one bank under this placement.
    pub fn summation_mode(&self) -> SummationMode {
        match self {
            Placement::Bypass => SummationMode::Bypass,
            Placement::Stage1 => SummationMode::Stage1,
            Placement::Stage1And2 | Placement::MultiBank => SummationMode::Stage1And2,
        }
    }
}

/// How one stride of a given dot length occupies the fabric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StridePlan {
    pub dot_length: usize,
    pub arms_per_stride: usize,
    pub summation: Placement,
    /// MRs left inactive inside the stride's own arms.
    pub unused_mrs_per_stride: usize,
    /// Banks one stride occupies (1 in the bank-aligned regime).
    pub banks_per_stride: usize,
    /// Sequential cycles one stride needs (1 unless it exceeds the core).
    pub cycle_splits: u64,
}

/// Plan a single stride of dot length D.
pub fn plan_stride(dot_length: usize, geometry: &CoreGeometry) -> Result<StridePlan> {
    if dot_length == 0 {
        return Err(Error::Mapping("empty layer: dot length is zero".into()));
    }
    let mrs = geometry.mrs_per_arm;
    let arms = dot_length.div_ceil(mrs);
    let group = geometry.group_size();
    let summation = if arms == 1 {
        Placement::Bypass
    } else if arms <= group {
        Placement::Stage1
    } else if arms <= geometry.arms_per_bank {
        Placement::Stage1And2
    } else {
        Placement::MultiBank
    };
    let banks_per_stride = arms.div_ceil(geometry.arms_per_bank);
    let cycle_splits = banks_per_stride.div_ceil(geometry.n_banks) as u64;
    Ok(StridePlan {
        dot_length,
        arms_per_stride: arms,
        summation,
        unused_mrs_per_stride: arms * mrs - dot_length,
        banks_per_stride,
        cycle_splits,
    })
}

/// Strides one bank executes per cycle in the bank-aligned regime.
pub fn strides_per_bank(plan: &StridePlan, geometry: &CoreGeometry) -> Result<u64> {
    if plan.summation == Placement::MultiBank {
        return Err(Error::Mapping(format!(
            "{} arms exceed one bank; use plan_multibank",
            plan.arms_per_stride
        )));
    }
    let group = geometry.group_size();
    Ok(match plan.summation {
        Placement::Bypass => geometry.arms_per_bank as u64,
        // One stride per summation group; a stride may not straddle groups.
        Placement::Stage1 => (group / plan.arms_per_stride * 2) as u64,
        Placement::Stage1And2 => 1,
        Placement::MultiBank => unreachable!(),
    })
}

/// Cross-bank placement: banks per stride and strides per full load.
/// Strides needing more arms than the whole core provides are split across
/// `cycle_splits` sequential cycles with a digital carry (never an error).
pub fn plan_multibank(dot_length: usize, geometry: &CoreGeometry) -> Result<(usize, u64, u64)> {
    let plan = plan_stride(dot_length, geometry)?;
    if plan.summation != Placement::MultiBank {
        return Err(Error::Mapping(format!(
            "dot length {dot_length} fits one bank; use strides_per_bank"
        )));
    }
    let strides_per_load = if plan.cycle_splits > 1 {
        1
    } else {
        (geometry.n_banks / plan.banks_per_stride) as u64
    };
    Ok((plan.banks_per_stride, strides_per_load, plan.cycle_splits))
}

/// How strides share weight images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Packing {
    /// All strides of one kernel replicate the same weights (conv, CA).
    Replicated { kernels: u64, positions: u64 },
    /// Every stride carries its own weights (FC).
    Distinct { strides: u64 },
}

/// Per-layer event counts consumed by the power model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CostCounts {
    /// Scalar multiplies: active MRs summed over all loads.
    pub mult_slots: u64,
    /// Modulated VCSEL symbols: driven arms times channels, over all loads.
    pub vcsel_symbols: u64,
    /// Balanced-photodetector reads: driven arms over all loads.
    pub bpd_reads: u64,
    /// Readout conversions of summation outputs.
    pub adc_conversions: u64,
    /// Pixel-channel reads through the CRC; set at network level on the
    /// layer that consumes the sensor frame.
    pub crc_reads: u64,
    /// Loads whose weight image differs from the previous load.
    pub image_swaps: u64,
}

/// Complete placement of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingPlan {
    pub layer_index: usize,
    pub label: String,
    pub dot_length: usize,
    pub stride_plan: StridePlan,
    pub total_strides: u64,
    /// Strides completed by one full core load.
    pub strides_per_full_load: u64,
    /// Core loads for the layer; one operational cycle each.
    pub bank_loads: u64,
    pub cycles: u64,
    /// Active-MR programming events over the whole layer.
    pub mr_writes: u64,
    /// Active MRs of a full load divided by the core's total MRs.
    pub utilization: f64,
    pub counts: CostCounts,
    pub packing: Packing,
}

/// One bank's assignment within one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankAssign {
    pub bank: usize,
    /// Global id of the first stride held (stride ids are kernel-major).
    pub stride_start: u64,
    pub stride_count: u32,
    /// Dot-product segment carried in the multi-bank regime.
    pub segment: u32,
    /// Identity of the weight content, for reprogramming detection.
    pub image_id: u64,
    /// Active MRs in this bank.
    pub active_mrs: usize,
    /// Driven arms in this bank.
    pub arms_used: usize,
    /// Summation outputs read from this bank.
    pub outputs: usize,
}

/// Streams the per-cycle bank assignments of a plan.
pub struct ScheduleCursor<'a> {
    plan: &'a MappingPlan,
    geometry: CoreGeometry,
    cycle: u64,
    buf: Vec<BankAssign>,
}

impl<'a> ScheduleCursor<'a> {
    pub fn new(plan: &'a MappingPlan, geometry: &CoreGeometry) -> Self {
        Self {
            plan,
            geometry: *geometry,
            cycle: 0,
            buf: Vec::new(),
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Assignments of the next cycle, or `None` when the layer is done.
    pub fn next_cycle(&mut self) -> Option<&[BankAssign]> {
        if self.cycle >= self.plan.cycles {
            return None;
        }
        self.buf.clear();
        match self.plan.stride_plan.summation {
            Placement::MultiBank => self.fill_multibank(),
            _ => self.fill_bank_aligned(),
        }
        debug_assert!(self.buf.len() <= self.geometry.n_banks);
        self.cycle += 1;
        Some(&self.buf)
    }

    fn fill_bank_aligned(&mut self) {
        let plan = self.plan;
        let spb = plan.strides_per_full_load / self.geometry.n_banks as u64;
        let dot = plan.dot_length;
        let arms_per_stride = plan.stride_plan.arms_per_stride;
        match plan.packing {
            Packing::Replicated { kernels, positions } => {
                let ipk = positions.div_ceil(spb);
                let total_instances = kernels * ipk;
                let first = self.cycle * self.geometry.n_banks as u64;
                let last = (first + self.geometry.n_banks as u64).min(total_instances);
                for inst in first..last {
                    let kernel = inst / ipk;
                    let offset = (inst % ipk) * spb;
                    let count = spb.min(positions - offset) as u32;
                    self.buf.push(BankAssign {
                        bank: (inst - first) as usize,
                        stride_start: kernel * positions + offset,
                        stride_count: count,
                        segment: 0,
                        image_id: kernel,
                        active_mrs: count as usize * dot,
                        arms_used: count as usize * arms_per_stride,
                        outputs: count as usize,
                    });
                }
            }
            Packing::Distinct { strides } => {
                let total_instances = strides.div_ceil(spb);
                let first = self.cycle * self.geometry.n_banks as u64;
                let last = (first + self.geometry.n_banks as u64).min(total_instances);
                for inst in first..last {
                    let start = inst * spb;
                    let count = spb.min(strides - start) as u32;
                    self.buf.push(BankAssign {
                        bank: (inst - first) as usize,
                        stride_start: start,
                        stride_count: count,
                        segment: 0,
                        image_id: start,
                        active_mrs: count as usize * dot,
                        arms_used: count as usize * arms_per_stride,
                        outputs: count as usize,
                    });
                }
            }
        }
    }

    fn fill_multibank(&mut self) {
        let plan = self.plan;
        let sp = &plan.stride_plan;
        let dot = plan.dot_length;
        let mrs_per_bank = self.geometry.mrs_per_bank();
        let total = match plan.packing {
            Packing::Replicated { kernels, positions } => kernels * positions,
            Packing::Distinct { strides } => strides,
        };
        let image_of = |stride: u64, segment: u64| -> u64 {
            match plan.packing {
                Packing::Replicated { positions, .. } => {
                    (stride / positions) * sp.banks_per_stride as u64 + segment
                }
                Packing::Distinct { .. } => stride * sp.banks_per_stride as u64 + segment,
            }
        };
        if sp.cycle_splits > 1 {
            // One stride monopolizes the core for several cycles.
            let stride = self.cycle / sp.cycle_splits;
            if stride >= total {
                return;
            }
            let chunk = self.cycle % sp.cycle_splits;
            let seg_first = chunk * self.geometry.n_banks as u64;
            let seg_last =
                (seg_first + self.geometry.n_banks as u64).min(sp.banks_per_stride as u64);
            for seg in seg_first..seg_last {
                let lo = seg as usize * mrs_per_bank;
                let here = (dot - lo).min(mrs_per_bank);
                self.buf.push(BankAssign {
                    bank: (seg - seg_first) as usize,
                    stride_start: stride,
                    stride_count: 1,
                    segment: seg as u32,
                    image_id: image_of(stride, seg),
                    active_mrs: here,
                    arms_used: here.div_ceil(self.geometry.mrs_per_arm),
                    outputs: 1,
                });
            }
        } else {
            let spl = plan.strides_per_full_load;
            let first = self.cycle * spl;
            let last = (first + spl).min(total);
            for (j, stride) in (first..last).enumerate() {
                for seg in 0..sp.banks_per_stride {
                    let lo = seg * mrs_per_bank;
                    let here = (dot - lo).min(mrs_per_bank);
                    self.buf.push(BankAssign {
                        bank: j * sp.banks_per_stride + seg,
                        stride_start: stride,
                        stride_count: 1,
                        segment: seg as u32,
                        image_id: image_of(stride, seg as u64),
                        active_mrs: here,
                        arms_used: here.div_ceil(self.geometry.mrs_per_arm),
                        outputs: 1,
                    });
                }
            }
        }
    }
}

/// Dot length, stride count, and packing of a mapped layer.
fn layer_shape(
    index: usize,
    kind: &LayerKind,
    in_dims: Dims,
) -> Result<(usize, u64, Packing, Dims)> {
    let out = kind.out_dims(index, in_dims)?;
    match *kind {
        LayerKind::Conv {
            kernel,
            c_in,
            c_out,
            ..
        } => {
            let dot = kernel * kernel * c_in;
            let positions = (out.h * out.w) as u64;
            Ok((
                dot,
                positions * c_out as u64,
                Packing::Replicated {
                    kernels: c_out as u64,
                    positions,
                },
                out,
            ))
        }
        LayerKind::Fc { n_in, n_out } => Ok((
            n_in,
            n_out as u64,
            Packing::Distinct {
                strides: n_out as u64,
            },
            out,
        )),
        LayerKind::CompressiveAcquisition {
            pool_h,
            pool_w,
            fuse_grayscale,
        } => {
            let dot = pool_h * pool_w * if fuse_grayscale { 3 } else { 1 };
            let strides = out.len() as u64;
            // Pre-set coefficients shared by every window and channel.
            Ok((
                dot,
                strides,
                Packing::Replicated {
                    kernels: 1,
                    positions: strides,
                },
                out,
            ))
        }
        LayerKind::Activation(_) => Err(Error::Mapping(format!(
            "layer {index}: activation layers execute in the electronic domain and are not mapped"
        ))),
    }
}

/// Plan one layer onto the core.
pub fn plan_layer(
    index: usize,
    kind: &LayerKind,
    in_dims: Dims,
    geometry: &CoreGeometry,
) -> Result<MappingPlan> {
    let (dot, total_strides, packing, _out) = layer_shape(index, kind, in_dims)?;
    let sp = plan_stride(dot, geometry)?;

    let (strides_per_full_load, bank_loads) = match sp.summation {
        Placement::MultiBank => {
            let (_bps, spl, splits) = plan_multibank(dot, geometry)?;
            let loads = if splits > 1 {
                total_strides * splits
            } else {
                total_strides.div_ceil(spl)
            };
            (spl, loads)
        }
        _ => {
            let spb = strides_per_bank(&sp, geometry)?;
            let per_load = spb * geometry.n_banks as u64;
            let loads = match packing {
                Packing::Replicated { kernels, positions } => {
                    let instances = kernels * positions.div_ceil(spb);
                    instances.div_ceil(geometry.n_banks as u64)
                }
                Packing::Distinct { strides } => {
                    strides.div_ceil(spb).div_ceil(geometry.n_banks as u64)
                }
            };
            (per_load, loads)
        }
    };

    let utilization = match sp.summation {
        Placement::MultiBank => {
            let active = if sp.cycle_splits > 1 {
                dot.min(geometry.total_mrs())
            } else {
                strides_per_full_load as usize * dot
            };
            active as f64 / geometry.total_mrs() as f64
        }
        _ => (strides_per_full_load as usize * dot) as f64 / geometry.total_mrs() as f64,
    };

    let mut plan = MappingPlan {
        layer_index: index,
        label: kind.label(),
        dot_length: dot,
        stride_plan: sp,
        total_strides,
        strides_per_full_load,
        bank_loads,
        cycles: bank_loads,
        mr_writes: 0,
        utilization,
        counts: CostCounts::default(),
        packing,
    };
    accumulate_counts(&mut plan, geometry);
    Ok(plan)
}

/// Stream the schedule once, filling event counts and programming events.
fn accumulate_counts(plan: &mut MappingPlan, geometry: &CoreGeometry) {
    let mut counts = CostCounts::default();
    let mut mr_writes = 0u64;
    // (image_id, active_mrs) currently programmed per bank.
    let mut programmed: Vec<Option<(u64, usize)>> = vec![None; geometry.n_banks];

    let plan_ref: &MappingPlan = plan;
    let mut cursor = ScheduleCursor::new(plan_ref, geometry);
    while let Some(banks) = cursor.next_cycle() {
        let mut swapped = false;
        for b in banks {
            counts.mult_slots += b.active_mrs as u64;
            counts.vcsel_symbols += (b.arms_used * geometry.mrs_per_arm) as u64;
            counts.bpd_reads += b.arms_used as u64;
            counts.adc_conversions += b.outputs as u64;
            // Banks idle this cycle keep their weights; only changed content
            // costs programming events.
            let new_writes = match programmed[b.bank] {
                Some((image, active)) if image == b.image_id => {
                    b.active_mrs.saturating_sub(active) as u64
                }
                _ => b.active_mrs as u64,
            };
            if new_writes > 0 {
                swapped = true;
            }
            mr_writes += new_writes;
            programmed[b.bank] = Some((b.image_id, b.active_mrs));
        }
        if swapped {
            counts.image_swaps += 1;
        }
    }
    plan.counts = counts;
    plan.mr_writes = mr_writes;
}

/// Execute one planned layer on the core.
///
/// `weight_of` and `acts_of` fill the full dot-length weight levels and
/// activation codes of a given stride id; the executor slices them into
/// arms, pads summation groups, runs full core cycles, and routes results
/// back to stride order. Multi-bank partials (and the sequential chunks of
/// strides larger than the core) are accumulated digitally in bank order.
pub fn execute_layer(
    plan: &MappingPlan,
    geometry: &CoreGeometry,
    mode: &mut ExecMode,
    weight_range: i32,
    weight_of: &dyn Fn(u64, &mut Vec<i32>),
    acts_of: &dyn Fn(u64, &mut Vec<u8>),
) -> Result<Vec<MacValue>> {
    let dot = plan.dot_length;
    let sp = &plan.stride_plan;
    let mrs_per_arm = geometry.mrs_per_arm;
    let mrs_per_bank = geometry.mrs_per_bank();
    let zero = match mode {
        ExecMode::Ideal => MacValue::Exact(0),
        ExecMode::Device(_) => MacValue::Analog(0.0),
    };
    let mut out = vec![zero; plan.total_strides as usize];

    let mut wbuf: Vec<i32> = Vec::with_capacity(dot);
    let mut abuf: Vec<u8> = Vec::with_capacity(dot);
    // Builds the arms covering dot slots [lo, hi) of one stride.
    let build_arms = |arms: &mut Vec<ArmLoad>, wbuf: &[i32], abuf: &[u8], lo: usize, hi: usize| {
        let mut slot = lo;
        while slot < hi {
            let mut mrs = Vec::with_capacity(mrs_per_arm);
            let mut acts = vec![0u8; mrs_per_arm];
            for k in 0..mrs_per_arm {
                if slot + k < hi {
                    mrs.push(MRAssignment::active(k as u8, wbuf[slot + k]));
                    acts[k] = abuf[slot + k];
                } else {
                    mrs.push(MRAssignment::inactive(k as u8));
                }
            }
            arms.push(ArmLoad { mrs, acts });
            slot += mrs_per_arm;
        }
    };

    let summation = sp.summation.summation_mode();
    let mut cursor = ScheduleCursor::new(plan, geometry);
    let mut loads: Vec<BankLoad> = Vec::new();
    let mut routing: Vec<BankAssign> = Vec::new();
    while let Some(banks) = cursor.next_cycle() {
        loads.clear();
        routing.clear();
        for b in banks {
            let mut arms = Vec::with_capacity(geometry.arms_per_bank);
            if sp.summation == Placement::MultiBank {
                wbuf.clear();
                abuf.clear();
                weight_of(b.stride_start, &mut wbuf);
                acts_of(b.stride_start, &mut abuf);
                let lo = b.segment as usize * mrs_per_bank;
                build_arms(&mut arms, &wbuf, &abuf, lo, (lo + mrs_per_bank).min(dot));
            } else {
                for s in 0..b.stride_count as u64 {
                    wbuf.clear();
                    abuf.clear();
                    weight_of(b.stride_start + s, &mut wbuf);
                    acts_of(b.stride_start + s, &mut abuf);
                    build_arms(&mut arms, &wbuf, &abuf, 0, dot);
                    // Strides never straddle the two summation groups.
                    if sp.summation == Placement::Stage1 {
                        while arms.len() % geometry.group_size() != 0 {
                            arms.push(ArmLoad::idle(mrs_per_arm));
                        }
                    }
                }
            }
            while arms.len() < geometry.arms_per_bank {
                arms.push(ArmLoad::idle(mrs_per_arm));
            }
            loads.push(BankLoad {
                arms,
                summation,
                weight_range,
            });
            routing.push(*b);
        }
        let cycle = execute_core_cycle(&loads, geometry, mode)?;
        for r in &cycle.results {
            let b = &routing[r.bank];
            if sp.summation == Placement::MultiBank {
                if r.slot == 0 {
                    let idx = b.stride_start as usize;
                    out[idx] = out[idx].add(&r.value);
                }
            } else if (r.slot as u64) < b.stride_count as u64 {
                out[(b.stride_start + r.slot as u64) as usize] = r.value;
            }
        }
    }
    Ok(out)
}

/// Plan every mapped layer of a model. The layer consuming the sensor frame
/// is charged the CRC read events (one per pixel per channel).
pub fn plan_model(
    model: &crate::netir::ModelDesc,
    geometry: &CoreGeometry,
) -> Result<Vec<MappingPlan>> {
    let ins = model.input_dims()?;
    let mut plans = Vec::new();
    let mut first_mapped = true;
    for (i, layer) in model.layers.iter().enumerate() {
        if !layer.kind.is_mapped() {
            continue;
        }
        let mut plan = plan_layer(i, &layer.kind, ins[i], geometry)?;
        if first_mapped {
            plan.counts.crc_reads = ins[i].len() as u64;
            first_mapped = false;
        }
        plans.push(plan);
    }
    if plans.is_empty() {
        return Err(Error::Mapping("model has no mapped layers".into()));
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netir::ModelDesc;

    fn g() -> CoreGeometry {
        CoreGeometry::default()
    }

    #[test]
    fn paper_count_regression_for_kernel_sizes() {
        // (dot, arms, strides/bank, unused) for K = 3, 5, 7.
        for (k, arms, spb, unused) in [(3usize, 1usize, 6u64, 0usize), (5, 3, 2, 2), (7, 6, 1, 5)] {
            let plan = plan_stride(k * k, &g()).unwrap();
            assert_eq!(plan.arms_per_stride, arms, "K={k}");
            assert_eq!(plan.unused_mrs_per_stride, unused, "K={k}");
            assert_eq!(strides_per_bank(&plan, &g()).unwrap(), spb, "K={k}");
        }
        let p3 = plan_stride(9, &g()).unwrap();
        assert_eq!(p3.summation, Placement::Bypass);
        let p5 = plan_stride(25, &g()).unwrap();
        assert_eq!(p5.summation, Placement::Stage1);
        let p7 = plan_stride(49, &g()).unwrap();
        assert_eq!(p7.summation, Placement::Stage1And2);
    }

    #[test]
    fn empty_dot_rejected() {
        assert!(plan_stride(0, &g()).is_err());
    }

    #[test]
    fn two_arm_strides_respect_summation_groups() {
        // 12 MACs (e.g. fused 2x2 acquisition): 2 arms, stage 1, 6 unused.
        let plan = plan_stride(12, &g()).unwrap();
        assert_eq!(plan.arms_per_stride, 2);
        assert_eq!(plan.summation, Placement::Stage1);
        assert_eq!(plan.unused_mrs_per_stride, 6);
        // One stride per 3-arm group.
        assert_eq!(strides_per_bank(&plan, &g()).unwrap(), 2);
    }

    #[test]
    fn multibank_examples() {
        // 120-input FC: 14 arms, 3 banks per stride, 32 strides per load.
        let (bps, spl, splits) = plan_multibank(120, &g()).unwrap();
        assert_eq!((bps, spl, splits), (3, 32, 1));

        // 54 MACs fill the bank exactly and stay bank-aligned.
        let plan = plan_stride(54, &g()).unwrap();
        assert_eq!(plan.arms_per_stride, 6);
        assert_eq!(plan.summation, Placement::Stage1And2);
        assert_eq!(strides_per_bank(&plan, &g()).unwrap(), 1);
        assert!(plan_multibank(54, &g()).is_err());

        // 5185 MACs need 577 arms, one more than the core holds: the stride
        // splits into 2 sequential cycles.
        let plan = plan_stride(5185, &g()).unwrap();
        assert_eq!(plan.summation, Placement::MultiBank);
        assert_eq!(plan.cycle_splits, 2);
        let (bps, spl, splits) = plan_multibank(5185, &g()).unwrap();
        assert_eq!(bps, 97);
        assert_eq!((spl, splits), (1, 2));
    }

    #[test]
    fn layer_examples() {
        // conv3x3, 1 -> 1, 28x28 valid: 676 strides, 576 per load, 2 cycles.
        let kind = LayerKind::Conv {
            kernel: 3,
            c_in: 1,
            c_out: 1,
            stride: 1,
            padding: 0,
        };
        let plan = plan_layer(0, &kind, Dims::new(28, 28, 1), &g()).unwrap();
        assert_eq!(plan.total_strides, 676);
        assert_eq!(plan.strides_per_full_load, 576);
        assert_eq!(plan.cycles, 2);
        assert_eq!(plan.cycles, plan.bank_loads);

        // conv7x7, 1 -> 1, 32x32 valid: 676 strides, 96 per load, 8 cycles.
        let kind = LayerKind::Conv {
            kernel: 7,
            c_in: 1,
            c_out: 1,
            stride: 1,
            padding: 0,
        };
        let plan = plan_layer(0, &kind, Dims::new(32, 32, 1), &g()).unwrap();
        assert_eq!(plan.total_strides, 676);
        assert_eq!(plan.strides_per_full_load, 96);
        assert_eq!(plan.cycles, 8);

        // Fused 2x2 acquisition of a 256x256 RGB frame: 12-term strides.
        let kind = LayerKind::CompressiveAcquisition {
            pool_h: 2,
            pool_w: 2,
            fuse_grayscale: true,
        };
        let plan = plan_layer(0, &kind, Dims::new(256, 256, 3), &g()).unwrap();
        assert_eq!(plan.dot_length, 12);
        assert_eq!(plan.stride_plan.arms_per_stride, 2);
        assert_eq!(plan.stride_plan.summation, Placement::Stage1);
        assert_eq!(plan.stride_plan.unused_mrs_per_stride, 6);
        assert_eq!(plan.total_strides, 128 * 128);
    }

    #[test]
    fn utilization_per_kernel_size() {
        let conv = |k: usize| LayerKind::Conv {
            kernel: k,
            c_in: 1,
            c_out: 96,
            stride: 1,
            padding: 0,
        };
        let u3 = plan_layer(0, &conv(3), Dims::new(64, 64, 1), &g())
            .unwrap()
            .utilization;
        assert!((u3 - 1.0).abs() < 1e-12);
        let u5 = plan_layer(0, &conv(5), Dims::new(64, 64, 1), &g())
            .unwrap()
            .utilization;
        assert!((u5 - 50.0 / 54.0).abs() < 1e-12);
        let u7 = plan_layer(0, &conv(7), Dims::new(64, 64, 1), &g())
            .unwrap()
            .utilization;
        assert!((u7 - 49.0 / 54.0).abs() < 1e-12);
    }

    #[test]
    fn activation_layers_are_not_mapped() {
        let kind = LayerKind::Activation(crate::quant::ActivationFn::Relu);
        assert!(plan_layer(0, &kind, Dims::new(8, 8, 1), &g()).is_err());
    }

    /// Every stride appears exactly once (or once per segment in the
    /// multi-bank regime), and per-cycle multiplies never exceed the core.
    fn check_coverage(plan: &MappingPlan) {
        let segs = plan.stride_plan.banks_per_stride as u64;
        let mut seen = vec![0u32; (plan.total_strides * segs) as usize];
        let mut cursor = ScheduleCursor::new(plan, &g());
        let mut mult_total = 0u64;
        while let Some(banks) = cursor.next_cycle() {
            let mut cycle_mults = 0u64;
            for b in banks {
                cycle_mults += b.active_mrs as u64;
                if plan.stride_plan.summation == Placement::MultiBank {
                    seen[(b.stride_start * segs + b.segment as u64) as usize] += 1;
                } else {
                    for s in 0..b.stride_count as u64 {
                        seen[(b.stride_start + s) as usize] += 1;
                    }
                }
            }
            assert!(cycle_mults <= g().total_mrs() as u64);
            mult_total += cycle_mults;
        }
        if plan.stride_plan.summation == Placement::MultiBank {
            // Tail segments may carry fewer than a full bank of MACs, but
            // the multiply total is exact.
            assert_eq!(mult_total, plan.total_strides * plan.dot_length as u64);
            assert!(seen.iter().all(|&n| n == 1), "segment coverage broken");
        } else {
            assert_eq!(mult_total, plan.total_strides * plan.dot_length as u64);
            assert!(seen.iter().all(|&n| n == 1), "stride coverage broken");
        }
        assert_eq!(mult_total, plan.counts.mult_slots);
    }

    #[test]
    fn coverage_and_conservation() {
        let cases: Vec<(LayerKind, Dims)> = vec![
            (
                LayerKind::Conv {
                    kernel: 3,
                    c_in: 2,
                    c_out: 5,
                    stride: 1,
                    padding: 1,
                },
                Dims::new(10, 10, 2),
            ),
            (
                LayerKind::Conv {
                    kernel: 5,
                    c_in: 1,
                    c_out: 3,
                    stride: 1,
                    padding: 0,
                },
                Dims::new(13, 13, 1),
            ),
            (
                LayerKind::Fc {
                    n_in: 120,
                    n_out: 84,
                },
                Dims::new(1, 1, 120),
            ),
            (
                LayerKind::Fc {
                    n_in: 7,
                    n_out: 100,
                },
                Dims::new(1, 1, 7),
            ),
            (
                LayerKind::CompressiveAcquisition {
                    pool_h: 2,
                    pool_w: 2,
                    fuse_grayscale: true,
                },
                Dims::new(12, 12, 3),
            ),
            (
                LayerKind::CompressiveAcquisition {
                    pool_h: 3,
                    pool_w: 2,
                    fuse_grayscale: false,
                },
                Dims::new(12, 12, 4),
            ),
        ];
        for (kind, dims) in cases {
            let plan = plan_layer(0, &kind, dims, &g()).unwrap();
            check_coverage(&plan);
        }
    }

    #[test]
    fn huge_stride_splits_and_covers() {
        let kind = LayerKind::Fc {
            n_in: 5185,
            n_out: 3,
        };
        let plan = plan_layer(0, &kind, Dims::new(1, 1, 5185), &g()).unwrap();
        assert_eq!(plan.stride_plan.cycle_splits, 2);
        assert_eq!(plan.cycles, 6);
        check_coverage(&plan);
    }

    #[test]
    fn cycles_monotone_in_output_channels() {
        let mut prev = u64::MAX;
        for c_out in (8..=64).rev().step_by(8) {
            let kind = LayerKind::Conv {
                kernel: 3,
                c_in: 4,
                c_out,
                stride: 1,
                padding: 1,
            };
            let plan = plan_layer(0, &kind, Dims::new(16, 16, 4), &g()).unwrap();
            assert!(plan.cycles <= prev);
            prev = plan.cycles;
        }
    }

    #[test]
    fn replicated_kernels_avoid_rewrites() {
        // One kernel over many positions keeps the same image across loads:
        // writes equal one full-core programming.
        let kind = LayerKind::Conv {
            kernel: 3,
            c_in: 1,
            c_out: 1,
            stride: 1,
            padding: 0,
        };
        let plan = plan_layer(0, &kind, Dims::new(28, 28, 1), &g()).unwrap();
        assert_eq!(plan.cycles, 2);
        // First load programs 96 banks of 6x9; the second reuses them.
        assert_eq!(plan.mr_writes, 96 * 54);
        assert_eq!(plan.counts.image_swaps, 1);

        // Distinct FC weights reprogram on every load.
        let kind = LayerKind::Fc {
            n_in: 9,
            n_out: 2000,
        };
        let plan = plan_layer(0, &kind, Dims::new(1, 1, 9), &g()).unwrap();
        assert_eq!(plan.mr_writes, plan.counts.mult_slots);
        assert_eq!(plan.counts.image_swaps, plan.cycles);
    }

    #[test]
    fn plan_model_charges_crc_to_first_mapped_layer() {
        let model = ModelDesc {
            name: "m".into(),
            input: Dims::new(8, 8, 3),
            layers: vec![
                crate::netir::Layer::weightless(LayerKind::CompressiveAcquisition {
                    pool_h: 2,
                    pool_w: 2,
                    fuse_grayscale: true,
                }),
                crate::netir::Layer::weightless(LayerKind::Fc { n_in: 16, n_out: 4 }),
            ],
            act_scales: None,
        };
        let plans = plan_model(&model, &g()).unwrap();
        assert_eq!(plans[0].counts.crc_reads, 8 * 8 * 3);
        assert_eq!(plans[1].counts.crc_reads, 0);
    }
}
