//! Full decimation chain: a fixed parallel section followed by a
//! configurable serial section.
//!
//! ```text
//! 80 lanes -> CIC(N=5, R=20) -> 4 lanes -> HB -> 2 lanes -> HB -> 1 lane
//!          -> CIC(N=5, R=r) -> HB x h                       (serial)
//! ```
//!
//! Any total factor `80 * r * 2^h` with `r` in `1..=4000` and `h` in
//! `0..=3` is reachable; `r = 1` bypasses the serial CIC.

use std::sync::mpsc::sync_channel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cic::{cic_magnitude, CicConfig, CicError, ParallelCic, SerialCic, RESPONSE_FLOOR_DB};
use crate::fir::{FirDecimator, FixedPoint, FloatPoint};
use crate::halfband::{
    design_halfband, quantize_coeffs, HalfbandAmplitude, HalfbandCoeffs, HalfbandDecimator,
    HalfbandError, HalfbandSpec,
};
use crate::sample::NumericKind;
use crate::stream::{ParallelStream, SerialStream, StreamError};

pub const PARALLEL_LANES: usize = 80;
pub const PARALLEL_CIC_R: u32 = 20;
pub const PARALLEL_FACTOR: u64 = 80;
pub const MAX_SERIAL_R: u64 = 4000;
pub const MAX_HB_STAGES: u32 = 3;
/// Word width between stages.
pub const SAMPLE_WIDTH: u32 = 16;

#[derive(Debug, Error)]
pub enum SrcError {
    #[error("unsupported decimation factor {requested}{}", neighbours(*.lower, *.upper))]
    UnsupportedFactor {
        requested: u64,
        lower: Option<u64>,
        upper: Option<u64>,
    },
    #[error("expected {expected} input lanes, got {got}")]
    LaneMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Cic(#[from] CicError),
    #[error(transparent)]
    Halfband(#[from] HalfbandError),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

fn neighbours(lower: Option<u64>, upper: Option<u64>) -> String {
    match (lower, upper) {
        (Some(l), Some(u)) => format!("; nearest supported: {l} and {u}"),
        (Some(l), None) => format!("; nearest supported: {l}"),
        (None, Some(u)) => format!("; nearest supported: {u}"),
        (None, None) => String::new(),
    }
}

/// Decomposition `total = 80 * serial_cic_r * 2^serial_hb_stages`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorPlan {
    pub total: u64,
    pub parallel_factor: u64,
    pub serial_cic_r: u32,
    pub serial_hb_stages: u32,
}

impl FactorPlan {
    pub fn serial_factor(&self) -> u64 {
        self.serial_cic_r as u64 * (1u64 << self.serial_hb_stages)
    }

    pub fn cic_bypassed(&self) -> bool {
        self.serial_cic_r == 1
    }
}

/// Every reachable total factor, ascending.
pub fn supported_factors() -> Vec<u64> {
    let mut v: Vec<u64> = (0..=MAX_HB_STAGES)
        .flat_map(|h| (1..=MAX_SERIAL_R).map(move |r| PARALLEL_FACTOR * r * (1 << h)))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Plan a total factor, preferring as many halfband stages as possible.
pub fn plan_factor(total: u64) -> Result<FactorPlan, SrcError> {
    for h in (0..=MAX_HB_STAGES).rev() {
        let unit = PARALLEL_FACTOR << h;
        if total.is_multiple_of(unit) {
            let r = total / unit;
            if (1..=MAX_SERIAL_R).contains(&r) {
                return Ok(FactorPlan {
                    total,
                    parallel_factor: PARALLEL_FACTOR,
                    serial_cic_r: r as u32,
                    serial_hb_stages: h,
                });
            }
        }
    }
    let all = supported_factors();
    let idx = all.partition_point(|&f| f < total);
    Err(SrcError::UnsupportedFactor {
        requested: total,
        lower: idx.checked_sub(1).map(|i| all[i]),
        upper: all.get(idx).copied(),
    })
}

/// Complete converter configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrcConfig {
    pub plan: FactorPlan,
    pub lanes: usize,
    pub parallel_cic: CicConfig,
    pub parallel_hb: Vec<HalfbandCoeffs>,
    /// `None` when the plan bypasses the serial CIC.
    pub serial_cic: Option<CicConfig>,
    pub serial_hb: Vec<HalfbandCoeffs>,
    pub numeric: NumericKind,
    /// Passband edge as a fraction of the output rate.
    pub passband_fraction: f64,
}

impl SrcConfig {
    /// Standard chain for `total`: 16-bit data, fifth-order CICs with
    /// `M = 1`, order-122 halfbands in the parallel section and order-238
    /// halfbands in the serial section, coefficients quantized to 16 bits
    /// for fixed-point use.
    pub fn standard(total: u64, numeric: NumericKind) -> Result<Self, SrcError> {
        let plan = plan_factor(total)?;
        let hb = |spec: HalfbandSpec| -> Result<HalfbandCoeffs, SrcError> {
            let c = design_halfband(&spec)?;
            Ok(match numeric {
                NumericKind::Fixed => quantize_coeffs(&c, spec.coeff_width)?,
                NumericKind::Float => c,
            })
        };
        let hb122 = hb(HalfbandSpec::order_122())?;
        let hb238 = if plan.serial_hb_stages > 0 {
            Some(hb(HalfbandSpec::order_238())?)
        } else {
            None
        };
        Ok(Self {
            plan,
            lanes: PARALLEL_LANES,
            parallel_cic: CicConfig::standard(5, PARALLEL_CIC_R)?,
            parallel_hb: vec![hb122.clone(), hb122],
            serial_cic: if plan.cic_bypassed() {
                None
            } else {
                Some(CicConfig::standard(5, plan.serial_cic_r)?)
            },
            serial_hb: hb238
                .map(|c| vec![c; plan.serial_hb_stages as usize])
                .unwrap_or_default(),
            numeric,
            passband_fraction: 0.4,
        })
    }

    pub fn total_factor(&self) -> u64 {
        self.plan.total
    }

    /// Stages in order with the decimation applied before each.
    pub fn stages(&self) -> Vec<(Stage<'_>, u64)> {
        let mut v = Vec::new();
        let mut d = 1u64;
        v.push((Stage::Cic(&self.parallel_cic), d));
        d *= self.parallel_cic.decimation as u64;
        for hb in &self.parallel_hb {
            v.push((Stage::Halfband(hb), d));
            d *= 2;
        }
        if let Some(c) = &self.serial_cic {
            v.push((Stage::Cic(c), d));
            d *= c.decimation as u64;
        }
        for hb in &self.serial_hb {
            v.push((Stage::Halfband(hb), d));
            d *= 2;
        }
        v
    }

    /// Output samples for `n` input samples.
    pub fn output_len(&self, n: usize) -> usize {
        self.stages()
            .iter()
            .fold(n, |len, (s, _)| len.div_ceil(s.factor()))
    }

    /// Input samples until every stage has flushed its zero pre-history.
    pub fn settling_input_samples(&self) -> u64 {
        self.stages()
            .iter()
            .map(|(s, d)| (s.impulse_len() as u64 - 1) * d)
            .sum()
    }

    fn check(&self) -> Result<(), SrcError> {
        let parallel_out = self.lanes.div_ceil(self.parallel_cic.decimation as usize);
        if parallel_out != 1 << self.parallel_hb.len() {
            return Err(StreamError::InvalidFrame {
                expected: 1 << self.parallel_hb.len(),
                got: parallel_out,
            }
            .into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Stage<'a> {
    Cic(&'a CicConfig),
    Halfband(&'a HalfbandCoeffs),
}

impl Stage<'_> {
    pub fn factor(&self) -> usize {
        match self {
            Stage::Cic(c) => c.decimation as usize,
            Stage::Halfband(_) => 2,
        }
    }

    pub fn impulse_len(&self) -> usize {
        match self {
            Stage::Cic(c) => (c.stages as usize) * (c.boxcar_len() as usize - 1) + 1,
            Stage::Halfband(h) => h.spec.tap_count(),
        }
    }
}

/// Streaming fixed-point parallel section: 80-lane frames in, serial
/// samples out.
#[derive(Debug, Clone)]
pub struct ParallelSection {
    cic: ParallelCic,
    hbs: Vec<HalfbandDecimator<FixedPoint>>,
    a: Vec<i64>,
    b: Vec<i64>,
}

impl ParallelSection {
    pub fn new(cfg: &SrcConfig) -> Result<Self, SrcError> {
        cfg.check()?;
        Ok(Self {
            cic: ParallelCic::new(cfg.parallel_cic, cfg.lanes)?,
            hbs: cfg
                .parallel_hb
                .iter()
                .map(|c| HalfbandDecimator::fixed(c, SAMPLE_WIDTH))
                .collect::<Result<_, _>>()?,
            a: Vec::new(),
            b: Vec::new(),
        })
    }

    /// Push whole input frames (flat, a multiple of the lane count).
    pub fn push(&mut self, frames: &[i64], out: &mut Vec<i64>) -> Result<(), SrcError> {
        let lanes = self.cic.in_lanes();
        if !frames.len().is_multiple_of(lanes) {
            return Err(SrcError::LaneMismatch {
                expected: lanes,
                got: frames.len() % lanes,
            });
        }
        self.a.clear();
        for f in frames.chunks_exact(lanes) {
            self.cic.push_frame(f, &mut self.a)?;
        }
        self.halfbands(out)
    }

    /// Flush a partial CIC frame through the halfbands.
    pub fn flush(&mut self, out: &mut Vec<i64>) -> Result<(), SrcError> {
        self.a.clear();
        self.cic.flush(&mut self.a)?;
        self.halfbands(out)
    }

    fn halfbands(&mut self, out: &mut Vec<i64>) -> Result<(), SrcError> {
        let mut lanes = self.cic.out_lanes();
        for hb in &mut self.hbs {
            self.b.clear();
            for f in self.a.chunks_exact(lanes) {
                hb.step_frame(f, &mut self.b)?;
            }
            std::mem::swap(&mut self.a, &mut self.b);
            lanes /= 2;
        }
        out.extend_from_slice(&self.a);
        Ok(())
    }
}

/// Streaming fixed-point serial section.
#[derive(Debug, Clone)]
pub struct SerialSection {
    cic: Option<SerialCic>,
    hbs: Vec<HalfbandDecimator<FixedPoint>>,
    a: Vec<i64>,
    b: Vec<i64>,
}

impl SerialSection {
    pub fn new(cic: Option<&CicConfig>, hbs: &[HalfbandCoeffs]) -> Result<Self, SrcError> {
        Ok(Self {
            cic: cic.map(|c| SerialCic::new(*c)).transpose()?,
            hbs: hbs
                .iter()
                .map(|c| HalfbandDecimator::fixed(c, SAMPLE_WIDTH))
                .collect::<Result<_, _>>()?,
            a: Vec::new(),
            b: Vec::new(),
        })
    }

    pub fn push(&mut self, input: &[i64], out: &mut Vec<i64>) {
        self.a.clear();
        match &mut self.cic {
            Some(c) => c.process(input, &mut self.a),
            None => self.a.extend_from_slice(input),
        }
        for hb in &mut self.hbs {
            self.b.clear();
            hb.process(&self.a, &mut self.b);
            std::mem::swap(&mut self.a, &mut self.b);
        }
        out.extend_from_slice(&self.a);
    }
}

fn check_fixed_input(p: &ParallelStream<i64>, cfg: &SrcConfig) -> Result<(), SrcError> {
    if p.lanes() != cfg.lanes {
        return Err(SrcError::LaneMismatch {
            expected: cfg.lanes,
            got: p.lanes(),
        });
    }
    Ok(())
}

/// Run the fixed-point converter over a whole parallel stream.
pub fn run_src(p: &ParallelStream<i64>, cfg: &SrcConfig) -> Result<SerialStream<i64>, SrcError> {
    check_fixed_input(p, cfg)?;
    cfg.parallel_cic.check_input(p.as_flat())?;
    let mut par = ParallelSection::new(cfg)?;
    let mut mid = Vec::new();
    par.push(p.as_flat(), &mut mid)?;
    par.flush(&mut mid)?;
    let parallel_factor = cfg.stages()[..1 + cfg.parallel_hb.len()]
        .iter()
        .fold(p.len(), |n, (s, _)| n.div_ceil(s.factor()));
    mid.truncate(parallel_factor);
    let mut ser = SerialSection::new(cfg.serial_cic.as_ref(), &cfg.serial_hb)?;
    let mut out = Vec::with_capacity(cfg.output_len(p.len()));
    ser.push(&mid, &mut out);
    Ok(SerialStream::new(
        out,
        p.aggregate_rate_hz() / cfg.total_factor() as f64,
    ))
}

/// As [`run_src`], with the parallel and serial sections on separate
/// threads joined by a bounded queue. Output is identical.
pub fn run_src_pipelined(
    p: &ParallelStream<i64>,
    cfg: &SrcConfig,
    frames_per_chunk: usize,
) -> Result<SerialStream<i64>, SrcError> {
    check_fixed_input(p, cfg)?;
    cfg.parallel_cic.check_input(p.as_flat())?;
    let mut par = ParallelSection::new(cfg)?;
    let mut ser = SerialSection::new(cfg.serial_cic.as_ref(), &cfg.serial_hb)?;
    let keep = cfg.stages()[..1 + cfg.parallel_hb.len()]
        .iter()
        .fold(p.len(), |n, (s, _)| n.div_ceil(s.factor()));
    let chunk = frames_per_chunk.max(1) * cfg.lanes;
    let (tx, rx) = sync_channel::<Vec<i64>>(4);
    let out = std::thread::scope(|scope| -> Result<Vec<i64>, SrcError> {
        // owned here so an early error return closes the queue
        let tx = tx;
        let consumer = scope.spawn(move || {
            let mut out = Vec::new();
            for block in rx {
                ser.push(&block, &mut out);
            }
            out
        });
        let mut sent = 0usize;
        let mut send = |mut block: Vec<i64>| {
            block.truncate(keep.saturating_sub(sent));
            sent += block.len();
            // the receiver only stops once the sender is dropped
            tx.send(block).expect("serial section alive");
        };
        for frames in p.as_flat().chunks(chunk) {
            let mut block = Vec::new();
            par.push(frames, &mut block)?;
            send(block);
        }
        let mut block = Vec::new();
        par.flush(&mut block)?;
        send(block);
        drop(tx);
        Ok(consumer.join().expect("serial section panicked"))
    })?;
    Ok(SerialStream::new(
        out,
        p.aggregate_rate_hz() / cfg.total_factor() as f64,
    ))
}

/// Fully serial reference chain: every stage runs its per-sample form.
pub fn run_src_reference(
    s: &SerialStream<i64>,
    cfg: &SrcConfig,
) -> Result<SerialStream<i64>, SrcError> {
    cfg.parallel_cic.check_input(&s.samples)?;
    let mut front = SerialSection::new(Some(&cfg.parallel_cic), &cfg.parallel_hb)?;
    let mut mid = Vec::new();
    front.push(&s.samples, &mut mid);
    let mut back = SerialSection::new(cfg.serial_cic.as_ref(), &cfg.serial_hb)?;
    let mut out = Vec::new();
    back.push(&mid, &mut out);
    Ok(SerialStream::new(
        out,
        s.sample_rate_hz / cfg.total_factor() as f64,
    ))
}

/// Float chain. Each CIC runs as its non-recursive boxcar-cascade FIR
/// with integer taps and one final division by the DC gain.
pub fn run_src_float(
    s: &SerialStream<f64>,
    cfg: &SrcConfig,
) -> Result<SerialStream<f64>, SrcError> {
    let mut a = s.samples.clone();
    let mut b = Vec::new();
    for (stage, _) in cfg.stages() {
        b.clear();
        match stage {
            Stage::Cic(c) => {
                let taps: Vec<f64> = c.impulse_response().iter().map(|&v| v as f64).collect();
                let arith = FloatPoint {
                    divisor: c.dc_gain() as f64,
                };
                FirDecimator::new(arith, taps, c.decimation as usize).process(&a, &mut b);
            }
            Stage::Halfband(h) => HalfbandDecimator::float(h).process(&a, &mut b),
        }
        std::mem::swap(&mut a, &mut b);
    }
    Ok(SerialStream::new(
        a,
        s.sample_rate_hz / cfg.total_factor() as f64,
    ))
}

/// Evaluation grid for [`cascade_response`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseGrid {
    /// Points in the returned response curve.
    pub display_points: usize,
    /// Display span as a multiple of the output rate (clamped to Nyquist).
    pub display_span: f64,
    /// Points across the passband and across each alias band.
    pub band_points: usize,
    /// Cap on the total number of alias-band evaluations; large factors
    /// have many bands and get fewer points per band.
    pub max_band_evaluations: usize,
}

impl Default for ResponseGrid {
    fn default() -> Self {
        Self {
            display_points: 4001,
            display_span: 4.0,
            band_points: 512,
            max_band_evaluations: 80_000_000,
        }
    }
}

/// Measured cascade response. Frequencies are fractions of the input rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub decimation_factor: u64,
    pub passband_edge: f64,
    pub passband_ripple_db: f64,
    pub stopband_atten_db: f64,
    /// Frequency at which the worst alias-band rejection was found.
    pub worst_alias_freq: f64,
    pub points_per_band: usize,
    #[serde(skip)]
    pub response: Vec<(f64, f64)>,
}

/// Precomputed per-stage evaluators for the cascade magnitude.
#[derive(Debug, Clone)]
pub struct CascadeModel {
    stages: Vec<(StageModel, f64)>,
    // product of the peak bounds of stages i.. (one extra trailing 1.0)
    tail_bound: Vec<f64>,
}

#[derive(Debug, Clone)]
enum StageModel {
    Cic(CicConfig),
    Halfband(HalfbandAmplitude),
}

impl CascadeModel {
    pub fn new(cfg: &SrcConfig) -> Self {
        let stages: Vec<(StageModel, f64)> = cfg
            .stages()
            .into_iter()
            .map(|(s, d)| {
                let m = match s {
                    Stage::Cic(c) => StageModel::Cic(*c),
                    Stage::Halfband(h) => {
                        StageModel::Halfband(HalfbandAmplitude::new(&h.effective_taps()))
                    }
                };
                (m, d as f64)
            })
            .collect();
        let mut tail_bound = vec![1.0; stages.len() + 1];
        for i in (0..stages.len()).rev() {
            let b = match &stages[i].0 {
                StageModel::Cic(_) => 1.0,
                StageModel::Halfband(a) => a.peak_bound(),
            };
            tail_bound[i] = tail_bound[i + 1] * b;
        }
        Self { stages, tail_bound }
    }

    /// Linear magnitude at `f` (fraction of the input rate).
    pub fn magnitude(&self, f: f64) -> f64 {
        self.magnitude_above(f, 0.0).unwrap_or(0.0)
    }

    /// Linear magnitude at `f`, or `None` once it is provably below
    /// `floor`.
    pub fn magnitude_above(&self, f: f64, floor: f64) -> Option<f64> {
        let mut g = 1.0;
        for (i, (s, d)) in self.stages.iter().enumerate() {
            let fs = f * d;
            g *= match s {
                StageModel::Cic(c) => cic_magnitude(c, fs),
                StageModel::Halfband(a) => a.eval(fs).abs(),
            };
            if g * self.tail_bound[i + 1] < floor {
                return None;
            }
            if g == 0.0 {
                break;
            }
        }
        Some(g)
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        let g = self.magnitude(f);
        if g <= 0.0 {
            RESPONSE_FLOOR_DB
        } else {
            (20.0 * g.log10()).max(RESPONSE_FLOOR_DB)
        }
    }
}

const NEAR_BANDS: usize = 64;

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 {
        (hi - lo) / (n - 1) as f64
    } else {
        0.0
    };
    (0..n).map(move |i| lo + step * i as f64)
}

/// Product of the stage responses with each stage's frequency axis
/// rescaled by the decimation in front of it.
///
/// Ripple is peak-to-peak over `[0, p * f_out]`; attenuation is the worst
/// response over the alias bands `k * f_out +- p * f_out` (`k >= 1`,
/// clipped to Nyquist) relative to the DC gain, `p` being the passband
/// fraction.
pub fn cascade_response(cfg: &SrcConfig, grid: &ResponseGrid) -> ResponseReport {
    let model = CascadeModel::new(cfg);
    let f_out = 1.0 / cfg.total_factor() as f64;
    let edge = cfg.passband_fraction * f_out;
    let dc = model.magnitude_db(0.0);

    let (lo, hi) = linspace(0.0, edge, grid.band_points.max(2))
        .map(|f| model.magnitude_db(f))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });

    let bands = (0.5 / f_out + cfg.passband_fraction).floor() as usize;
    let per_band = (grid.max_band_evaluations / bands.max(1)).clamp(9, grid.band_points.max(9));
    let band_worst = |k: usize, floor: f64| {
        let centre = k as f64 * f_out;
        let a = (centre - edge).max(0.0);
        let b = (centre + edge).min(0.5);
        linspace(a, b, per_band)
            .filter_map(|f| model.magnitude_above(f, floor).map(|g| (g, f)))
            .fold((0.0, f64::NAN), |acc, v| if v.0 > acc.0 { v } else { acc })
    };
    let pick = |x: (f64, f64), y: (f64, f64)| {
        if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
            y
        } else {
            x
        }
    };
    // The nearest bands set a floor; the rest only need to beat it, so
    // points whose partial product is provably lower are cut short.
    let near = bands.min(NEAR_BANDS);
    let seed = (1..=near)
        .map(|k| band_worst(k, 0.0))
        .fold((0.0, f64::NAN), pick);
    let (worst_lin, worst_f) = (near + 1..=bands)
        .into_par_iter()
        .map(|k| band_worst(k, seed.0))
        .reduce(|| seed, pick);
    let worst_db = if worst_lin > 0.0 {
        (20.0 * worst_lin.log10()).max(RESPONSE_FLOOR_DB)
    } else {
        RESPONSE_FLOOR_DB
    };

    let span = (grid.display_span * f_out).min(0.5);
    let response = linspace(0.0, span, grid.display_points.max(2))
        .map(|f| (f, model.magnitude_db(f) - dc))
        .collect();

    ResponseReport {
        decimation_factor: cfg.total_factor(),
        passband_edge: edge,
        passband_ripple_db: hi - lo,
        stopband_atten_db: dc - worst_db,
        worst_alias_freq: worst_f,
        points_per_band: per_band,
        response,
    }
}
