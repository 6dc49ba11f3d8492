//! Halfband lowpass design and the two-path decimate-by-two structure.
//!
//! A halfband of length `2N + 1` is indexed here by offset `m = k - N`
//! from the centre: `h_0 = 1/2`, `h_m = 0` for even `m != 0` and
//! `h_m = h_{-m}`. Only the odd offsets `1, 3, ..., <= N` need a
//! multiplier, and the symmetric pair `x(n - N + m) + x(n - N - m)` is
//! pre-added, which is where the multiplier saving comes from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fir::{Arithmetic, FixedPoint, FloatPoint};
use crate::stream::StreamError;

#[derive(Debug, Error, PartialEq)]
pub enum HalfbandError {
    #[error("invalid halfband spec: {0}")]
    InvalidSpec(String),
    #[error(
        "design infeasible: order {order} reaches {achieved_db:.2} dB stopband attenuation, {target_db:.2} dB requested"
    )]
    DesignInfeasible {
        order: usize,
        achieved_db: f64,
        target_db: f64,
    },
    #[error("invalid scaling: centre tap {value} does not fit in {bits} bits")]
    InvalidScaling { value: i64, bits: u32 },
    #[error("coefficients carry no fixed-point taps; quantize them first")]
    NotQuantized,
    #[error("halfband structure violated at tap {index}: {reason}")]
    Structure { index: usize, reason: &'static str },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// Design targets for one halfband stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfbandSpec {
    /// `N`: the filter has `2N + 1` taps and order `2N`.
    pub half_order: usize,
    /// Distance from the quarter-rate midpoint to each band edge, as a
    /// fraction of the sample rate.
    pub transition_width: f64,
    pub stopband_atten_db: f64,
    pub coeff_width: u32,
}

impl HalfbandSpec {
    /// Build from the filter order (`2N`), which must be even and positive.
    pub fn from_order(
        order: usize,
        transition_width: f64,
        stopband_atten_db: f64,
        coeff_width: u32,
    ) -> Result<Self, HalfbandError> {
        if order == 0 || !order.is_multiple_of(2) {
            return Err(HalfbandError::InvalidSpec(format!(
                "order {order} must be even and positive"
            )));
        }
        let spec = Self {
            half_order: order / 2,
            transition_width,
            stopband_atten_db,
            coeff_width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn order(&self) -> usize {
        2 * self.half_order
    }

    pub fn tap_count(&self) -> usize {
        2 * self.half_order + 1
    }

    pub fn validate(&self) -> Result<(), HalfbandError> {
        let bad = |m: String| Err(HalfbandError::InvalidSpec(m));
        if self.half_order == 0 {
            return bad("half order must be at least 1".into());
        }
        if !(self.transition_width > 0.0 && self.transition_width < 0.25) {
            return bad(format!(
                "transition width {} not in (0, 0.25)",
                self.transition_width
            ));
        }
        if !(self.stopband_atten_db > 0.0 && self.stopband_atten_db.is_finite()) {
            return bad(format!(
                "stopband attenuation {} must be positive",
                self.stopband_atten_db
            ));
        }
        if !(2..=32).contains(&self.coeff_width) {
            return bad(format!(
                "coefficient width {} not in 2..=32",
                self.coeff_width
            ));
        }
        Ok(())
    }

    pub fn passband_edge(&self) -> f64 {
        0.25 - self.transition_width
    }

    pub fn stopband_edge(&self) -> f64 {
        0.25 + self.transition_width
    }

    /// 123-tap stage used after the parallel CIC.
    pub fn order_122() -> Self {
        Self::from_order(122, 0.03, 70.0, 16).expect("valid")
    }

    /// 239-tap stage used after the serial CIC.
    pub fn order_238() -> Self {
        Self::from_order(238, 0.015, 70.0, 16).expect("valid")
    }
}

/// Integer taps at a stated scale: real value = `tap / 2^frac_bits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTaps {
    pub bits: u32,
    pub frac_bits: u32,
    pub taps: Vec<i64>,
}

/// Designed halfband coefficients with their measured response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfbandCoeffs {
    pub spec: HalfbandSpec,
    /// All `2N + 1` taps.
    pub h: Vec<f64>,
    pub stopband_atten_db: f64,
    pub passband_ripple_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedTaps>,
}

impl HalfbandCoeffs {
    pub fn half_order(&self) -> usize {
        self.spec.half_order
    }

    /// Taps actually used by a filter of the given numeric kind: the
    /// quantized set scaled back to reals if present, else the float set.
    pub fn effective_taps(&self) -> Vec<f64> {
        match &self.fixed {
            Some(q) => {
                let scale = (1u64 << q.frac_bits) as f64;
                q.taps.iter().map(|&t| t as f64 / scale).collect()
            }
            None => self.h.clone(),
        }
    }

    /// Odd-offset taps `h_1, h_3, ...` (float).
    pub fn odd_taps(&self) -> Vec<f64> {
        odd_offsets(self.half_order())
            .map(|m| self.h[self.half_order() + m])
            .collect()
    }

    /// Real-valued amplitude at normalised frequency `f`, using
    /// [`effective_taps`](Self::effective_taps).
    pub fn amplitude(&self, f: f64) -> f64 {
        HalfbandAmplitude::new(&self.effective_taps()).eval(f)
    }
}

fn odd_offsets(n: usize) -> impl Iterator<Item = usize> {
    (1..=n).step_by(2)
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser's shape parameter for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Symmetric Kaiser window of length `len`.
pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let half = (len - 1) as f64 / 2.0;
    let denom = bessel_i0(beta);
    (0..len)
        .map(|k| {
            let r = (k as f64 - half) / half;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Zero-phase amplitude `A(f) = h_0 + 2 sum_m h_m cos(2 pi f m)` of a
/// symmetric odd-length filter, evaluated by Clenshaw recurrence.
#[derive(Debug, Clone)]
pub struct HalfbandAmplitude {
    // cosine-series coefficients c_0 .. c_N
    c: Vec<f64>,
}

impl HalfbandAmplitude {
    pub fn new(h: &[f64]) -> Self {
        assert!(h.len() % 2 == 1, "symmetric filter must have odd length");
        let n = h.len() / 2;
        let mut c = Vec::with_capacity(n + 1);
        c.push(h[n]);
        for m in 1..=n {
            c.push(2.0 * h[n + m]);
        }
        Self { c }
    }

    pub fn eval(&self, f: f64) -> f64 {
        let x = (2.0 * std::f64::consts::PI * f).cos();
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in self.c[1..].iter().rev() {
            let b0 = ck + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.c[0] + x * b1 - b2
    }

    /// Rigorous upper bound on `|A(f)|` over all `f`: the peak on a
    /// uniform grid plus the Lipschitz slack between grid points.
    pub fn peak_bound(&self) -> f64 {
        const GRID: usize = 1 << 14;
        let step = 0.5 / GRID as f64;
        let lipschitz: f64 = self
            .c
            .iter()
            .enumerate()
            .map(|(m, c)| 2.0 * std::f64::consts::PI * m as f64 * c.abs())
            .sum();
        let peak = (0..=GRID)
            .map(|i| self.eval(i as f64 * step).abs())
            .fold(0.0, f64::max);
        let total: f64 = self.c.iter().map(|c| c.abs()).sum();
        (peak + lipschitz * step / 2.0).min(total)
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        let a = self.eval(f).abs();
        if a == 0.0 {
            crate::cic::RESPONSE_FLOOR_DB
        } else {
            (20.0 * a.log10()).max(crate::cic::RESPONSE_FLOOR_DB)
        }
    }
}

const MEASURE_POINTS: usize = 4096;

/// Worst stopband attenuation and peak-to-peak passband ripple (dB).
pub fn measure_response(h: &[f64], spec: &HalfbandSpec) -> (f64, f64) {
    let amp = HalfbandAmplitude::new(h);
    let grid = |lo: f64, hi: f64| {
        (0..=MEASURE_POINTS).map(move |i| lo + (hi - lo) * i as f64 / MEASURE_POINTS as f64)
    };
    let worst_stop = grid(spec.stopband_edge(), 0.5)
        .map(|f| amp.magnitude_db(f))
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = grid(0.0, spec.passband_edge())
        .map(|f| amp.magnitude_db(f))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    (-worst_stop, hi - lo)
}

/// Kaiser-windowed ideal halfband with the structure forced exactly.
///
/// The odd-offset taps are rescaled so they sum to exactly `1/2`, which
/// makes the DC gain one.
pub fn design_halfband(spec: &HalfbandSpec) -> Result<HalfbandCoeffs, HalfbandError> {
    spec.validate()?;
    let n = spec.half_order;
    let beta = kaiser_beta(spec.stopband_atten_db);
    let w = kaiser_window(2 * n + 1, beta);
    let mut side = vec![0.0; n + 1];
    side[0] = 0.5;
    for m in odd_offsets(n) {
        let ideal =
            (std::f64::consts::FRAC_PI_2 * m as f64).sin() / (std::f64::consts::PI * m as f64);
        side[m] = ideal * w[n + m];
    }
    let odd_sum: f64 = odd_offsets(n).map(|m| side[m]).sum();
    if odd_sum != 0.0 {
        let k = 0.25 / odd_sum;
        for m in odd_offsets(n) {
            side[m] *= k;
        }
    }
    let h = mirror(&side);
    let (atten, ripple) = measure_response(&h, spec);
    if atten < spec.stopband_atten_db {
        return Err(HalfbandError::DesignInfeasible {
            order: spec.order(),
            achieved_db: atten,
            target_db: spec.stopband_atten_db,
        });
    }
    Ok(HalfbandCoeffs {
        spec: *spec,
        h,
        stopband_atten_db: atten,
        passband_ripple_db: ripple,
        fixed: None,
    })
}

/// `[s_N .. s_1, s_0, s_1 .. s_N]`
fn mirror<T: Copy>(side: &[T]) -> Vec<T> {
    side.iter().rev().chain(side[1..].iter()).copied().collect()
}

/// Quantize to `bits`-wide integers with scale `2^(bits - 1)`.
pub fn quantize_coeffs(c: &HalfbandCoeffs, bits: u32) -> Result<HalfbandCoeffs, HalfbandError> {
    if bits < 2 {
        return Err(HalfbandError::InvalidSpec(format!("bits {bits} < 2")));
    }
    quantize_coeffs_scaled(c, bits, bits - 1)
}

/// Quantize with an explicit number of fractional bits.
///
/// Each tap on one side is rounded half-up and then mirrored, so zeros
/// stay zero and symmetry is exact. The rounding residue of the DC gain
/// is folded into the offset-one pair so the odd taps sum to exactly one
/// half of the scale.
pub fn quantize_coeffs_scaled(
    c: &HalfbandCoeffs,
    bits: u32,
    frac_bits: u32,
) -> Result<HalfbandCoeffs, HalfbandError> {
    if !(2..=32).contains(&bits) || !(2..=62).contains(&frac_bits) {
        return Err(HalfbandError::InvalidSpec(format!(
            "bits {bits} / fractional bits {frac_bits} out of range"
        )));
    }
    let n = c.half_order();
    let scale = (1u64 << frac_bits) as f64;
    let max = (1i64 << (bits - 1)) - 1;
    let min = -(1i64 << (bits - 1));
    let mut side = vec![0i64; n + 1];
    side[0] = 1i64 << (frac_bits - 1);
    if side[0] > max {
        return Err(HalfbandError::InvalidScaling {
            value: side[0],
            bits,
        });
    }
    for m in odd_offsets(n) {
        side[m] = (c.h[n + m] * scale + 0.5).floor() as i64;
    }
    if n >= 1 {
        let target = 1i64 << (frac_bits - 2);
        let sum: i64 = odd_offsets(n).map(|m| side[m]).sum();
        side[1] += target - sum;
    }
    if let Some((m, &v)) = side.iter().enumerate().find(|(_, &v)| v > max || v < min) {
        return Err(if m == 0 {
            HalfbandError::InvalidScaling { value: v, bits }
        } else {
            HalfbandError::InvalidSpec(format!("tap at offset {m} = {v} overflows {bits} bits"))
        });
    }
    let taps = mirror(&side);
    let mut out = c.clone();
    out.fixed = Some(FixedTaps {
        bits,
        frac_bits,
        taps,
    });
    let real = out.effective_taps();
    let (atten, ripple) = measure_response(&real, &c.spec);
    out.stopband_atten_db = atten;
    out.passband_ripple_db = ripple;
    Ok(out)
}

/// Check centre, even-offset zeros and symmetry exactly.
pub fn check_structure<T>(h: &[T], centre: T) -> Result<(), HalfbandError>
where
    T: Copy + PartialEq + Default,
{
    if h.len().is_multiple_of(2) {
        return Err(HalfbandError::Structure {
            index: h.len(),
            reason: "even length",
        });
    }
    let n = h.len() / 2;
    if h[n] != centre {
        return Err(HalfbandError::Structure {
            index: n,
            reason: "centre tap is not one half",
        });
    }
    for k in 0..h.len() {
        if k != n && k.abs_diff(n) % 2 == 0 && h[k] != T::default() {
            return Err(HalfbandError::Structure {
                index: k,
                reason: "non-zero tap at even offset",
            });
        }
        if h[k] != h[2 * n - k] {
            return Err(HalfbandError::Structure {
                index: k,
                reason: "asymmetric",
            });
        }
    }
    Ok(())
}

/// Two-path decimate-by-two halfband.
///
/// For every kept input index `n` (even, counting from zero):
/// `y(n) = x(n - N)/2 + sum_{m odd} h_m (x(n - N + m) + x(n - N - m))`.
/// The centre path is a delay and a shift; the symmetric path needs one
/// multiplication per odd offset.
#[derive(Debug, Clone)]
pub struct HalfbandDecimator<A: Arithmetic> {
    arith: A,
    half_order: usize,
    odd: Vec<A::Coeff>,
    // last 2N inputs, then the current block
    buf: Vec<A::Sample>,
    // parity of the next input index
    odd_next: bool,
}

impl<A: Arithmetic> HalfbandDecimator<A> {
    /// `odd` holds `h_1, h_3, ...` for the odd offsets up to `half_order`.
    pub fn new(arith: A, half_order: usize, odd: Vec<A::Coeff>) -> Self {
        assert!(half_order >= 1);
        assert_eq!(odd.len(), half_order.div_ceil(2), "wrong odd-tap count");
        Self {
            arith,
            half_order,
            odd,
            buf: vec![A::Sample::default(); 2 * half_order],
            odd_next: false,
        }
    }

    pub fn half_order(&self) -> usize {
        self.half_order
    }

    pub fn arithmetic(&self) -> &A {
        &self.arith
    }

    /// Coefficient multiplications per output sample.
    pub fn mults_per_output(&self) -> usize {
        self.odd.len()
    }

    #[inline]
    fn eval(&self, pos: usize) -> A::Sample {
        let c = pos - self.half_order;
        let mut acc = self.arith.add_half(self.arith.zero(), self.buf[c]);
        for (i, &h) in self.odd.iter().enumerate() {
            let m = 2 * i + 1;
            acc = self
                .arith
                .mac_pair(acc, self.buf[c + m], self.buf[c - m], h);
        }
        self.arith.finish(acc)
    }

    fn run_block(
        &mut self,
        input: &[A::Sample],
        first: usize,
        stride: usize,
        out: &mut Vec<A::Sample>,
    ) {
        let hist = 2 * self.half_order;
        self.buf.truncate(hist);
        self.buf.extend_from_slice(input);
        let mut n = first;
        while n < input.len() {
            out.push(self.eval(hist + n));
            n += stride;
        }
        let len = self.buf.len();
        self.buf.copy_within(len - hist.., 0);
        self.buf.truncate(hist);
    }

    /// Serial mode: push any number of samples, outputs at even indices.
    pub fn process(&mut self, input: &[A::Sample], out: &mut Vec<A::Sample>) {
        let first = usize::from(self.odd_next);
        self.run_block(input, first, 2, out);
        self.odd_next ^= input.len() % 2 == 1;
    }

    /// Parallel mode: one frame of `L` (even) lanes in, `L / 2` lanes out;
    /// output lane `j` comes from input lane `2j`.
    pub fn step_frame(
        &mut self,
        frame: &[A::Sample],
        out: &mut Vec<A::Sample>,
    ) -> Result<(), HalfbandError> {
        if frame.is_empty() || frame.len() % 2 != 0 || self.odd_next {
            return Err(StreamError::InvalidFrame {
                expected: frame.len() + frame.len() % 2,
                got: frame.len(),
            }
            .into());
        }
        self.run_block(frame, 0, 2, out);
        Ok(())
    }
}

impl HalfbandDecimator<FixedPoint> {
    /// Bit-exact decimator from quantized coefficients, rounding and
    /// saturating to `out_width`.
    pub fn fixed(c: &HalfbandCoeffs, out_width: u32) -> Result<Self, HalfbandError> {
        let q = c.fixed.as_ref().ok_or(HalfbandError::NotQuantized)?;
        let n = c.half_order();
        let odd = odd_offsets(n).map(|m| q.taps[n + m]).collect();
        Ok(Self::new(FixedPoint::new(q.frac_bits, out_width), n, odd))
    }
}

impl HalfbandDecimator<FloatPoint> {
    /// Float decimator using the effective taps (quantized values if the
    /// coefficients were quantized).
    pub fn float(c: &HalfbandCoeffs) -> Self {
        let n = c.half_order();
        let h = c.effective_taps();
        let odd = odd_offsets(n).map(|m| h[n + m]).collect();
        Self::new(FloatPoint::default(), n, odd)
    }
}

/// Full `2N + 1` fixed taps expected by the direct-form oracle.
pub fn fixed_taps(c: &HalfbandCoeffs) -> Result<Vec<i64>, HalfbandError> {
    c.fixed
        .as_ref()
        .map(|q| q.taps.clone())
        .ok_or(HalfbandError::NotQuantized)
}
