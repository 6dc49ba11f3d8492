//! Direct-form and block FIR filtering over a pluggable arithmetic.
//!
//! [`Arithmetic`] abstracts the multiply-accumulate kernel so the same
//! filter code runs bit-exact in fixed point ([`FixedPoint`]) or in
//! compensated double precision ([`FloatPoint`]). [`serial_fir`] is the
//! reference convolution every other filter structure is checked against.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::sample::saturate;
use crate::stream::{SerialStream, StreamError};

/// Multiply-accumulate kernel used by every FIR structure in the crate.
pub trait Arithmetic: Clone + Debug + Send + Sync {
    type Sample: Copy + Default + PartialEq + Debug + Send + Sync + 'static;
    type Coeff: Copy + Debug + Send + Sync + 'static;
    type Acc: Copy;

    fn zero(&self) -> Self::Acc;
    /// `acc + h * x`
    fn mac(&self, acc: Self::Acc, x: Self::Sample, h: Self::Coeff) -> Self::Acc;
    /// `acc + h * (a + b)`: one multiplication after a pre-add.
    fn mac_pair(
        &self,
        acc: Self::Acc,
        a: Self::Sample,
        b: Self::Sample,
        h: Self::Coeff,
    ) -> Self::Acc;
    /// `acc + x / 2`, the multiplier-free centre tap of a halfband.
    fn add_half(&self, acc: Self::Acc, x: Self::Sample) -> Self::Acc;
    fn finish(&self, acc: Self::Acc) -> Self::Sample;
}

/// Integer samples and coefficients with `frac_bits` fractional bits.
///
/// Products accumulate exactly in `i128`; the sum is rounded half-up once
/// and saturated to `out_width` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    pub frac_bits: u32,
    pub out_width: u32,
}

impl FixedPoint {
    pub fn new(frac_bits: u32, out_width: u32) -> Self {
        assert!((1..=62).contains(&frac_bits), "frac_bits out of range");
        assert!((1..=64).contains(&out_width), "out_width out of range");
        Self {
            frac_bits,
            out_width,
        }
    }
}

impl Arithmetic for FixedPoint {
    type Sample = i64;
    type Coeff = i64;
    type Acc = i128;

    #[inline]
    fn zero(&self) -> i128 {
        0
    }

    #[inline]
    fn mac(&self, acc: i128, x: i64, h: i64) -> i128 {
        acc + x as i128 * h as i128
    }

    #[inline]
    fn mac_pair(&self, acc: i128, a: i64, b: i64, h: i64) -> i128 {
        acc + (a as i128 + b as i128) * h as i128
    }

    #[inline]
    fn add_half(&self, acc: i128, x: i64) -> i128 {
        acc + ((x as i128) << (self.frac_bits - 1))
    }

    #[inline]
    fn finish(&self, acc: i128) -> i64 {
        let half = 1i128 << (self.frac_bits - 1);
        saturate((acc + half) >> self.frac_bits, self.out_width)
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Double-precision arithmetic with compensated (twice-working-precision)
/// accumulation, so differently ordered evaluations of the same sum agree
/// to within one unit in the last place.
///
/// `divisor` is applied once to the final sum; it lets integer-valued
/// taps (a CIC boxcar cascade) stay exact during accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatPoint {
    pub divisor: f64,
}

impl Default for FloatPoint {
    fn default() -> Self {
        Self { divisor: 1.0 }
    }
}

impl FloatPoint {
    #[inline]
    fn acc_add(&self, (s, c): (f64, f64), v: f64, e: f64) -> (f64, f64) {
        let (t, err) = two_sum(s, v);
        (t, c + (err + e))
    }
}

impl Arithmetic for FloatPoint {
    type Sample = f64;
    type Coeff = f64;
    type Acc = (f64, f64);

    #[inline]
    fn zero(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    #[inline]
    fn mac(&self, acc: (f64, f64), x: f64, h: f64) -> (f64, f64) {
        let (p, e) = two_prod(h, x);
        self.acc_add(acc, p, e)
    }

    #[inline]
    fn mac_pair(&self, acc: (f64, f64), a: f64, b: f64, h: f64) -> (f64, f64) {
        let (s, se) = two_sum(a, b);
        let (p, e) = two_prod(h, s);
        // h * se is far below the working precision of p, one rounding is enough
        self.acc_add(acc, p, e + h * se)
    }

    #[inline]
    fn add_half(&self, acc: (f64, f64), x: f64) -> (f64, f64) {
        self.acc_add(acc, 0.5 * x, 0.0)
    }

    #[inline]
    fn finish(&self, (s, c): (f64, f64)) -> f64 {
        let v = s + c;
        if self.divisor == 1.0 {
            v
        } else {
            v / self.divisor
        }
    }
}

/// Wraps an arithmetic and counts coefficient multiplications
/// (`mac` and `mac_pair` calls; the centre-tap shift is free).
#[derive(Debug, Clone)]
pub struct Counting<A> {
    pub inner: A,
    count: Arc<AtomicU64>,
}

impl<A> Counting<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            count: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn multiplications(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl<A: Arithmetic> Arithmetic for Counting<A> {
    type Sample = A::Sample;
    type Coeff = A::Coeff;
    type Acc = A::Acc;

    fn zero(&self) -> A::Acc {
        self.inner.zero()
    }

    fn mac(&self, acc: A::Acc, x: A::Sample, h: A::Coeff) -> A::Acc {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.mac(acc, x, h)
    }

    fn mac_pair(&self, acc: A::Acc, a: A::Sample, b: A::Sample, h: A::Coeff) -> A::Acc {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.mac_pair(acc, a, b, h)
    }

    fn add_half(&self, acc: A::Acc, x: A::Sample) -> A::Acc {
        self.inner.add_half(acc, x)
    }

    fn finish(&self, acc: A::Acc) -> A::Sample {
        self.inner.finish(acc)
    }
}

/// `y = sum_k h[k] * buf[pos - k]`.
#[inline]
fn dot_at<A: Arithmetic>(arith: &A, h: &[A::Coeff], buf: &[A::Sample], pos: usize) -> A::Sample {
    let mut acc = arith.zero();
    for (k, &c) in h.iter().enumerate() {
        acc = arith.mac(acc, buf[pos - k], c);
    }
    arith.finish(acc)
}

/// Streaming direct-form FIR. The history starts at zero.
#[derive(Debug, Clone)]
pub struct DirectFir<A: Arithmetic> {
    arith: A,
    taps: Vec<A::Coeff>,
    // last `taps.len() - 1` inputs, oldest first, followed by scratch
    buf: Vec<A::Sample>,
}

impl<A: Arithmetic> DirectFir<A> {
    pub fn new(arith: A, taps: Vec<A::Coeff>) -> Self {
        assert!(!taps.is_empty(), "FIR needs at least one tap");
        let hist = taps.len() - 1;
        Self {
            arith,
            taps,
            buf: vec![A::Sample::default(); hist],
        }
    }

    pub fn taps(&self) -> &[A::Coeff] {
        &self.taps
    }

    pub fn arithmetic(&self) -> &A {
        &self.arith
    }

    pub fn process(&mut self, input: &[A::Sample], out: &mut Vec<A::Sample>) {
        let hist = self.taps.len() - 1;
        self.buf.truncate(hist);
        self.buf.extend_from_slice(input);
        out.reserve(input.len());
        for n in 0..input.len() {
            out.push(dot_at(&self.arith, &self.taps, &self.buf, hist + n));
        }
        let len = self.buf.len();
        self.buf.copy_within(len - hist.., 0);
        self.buf.truncate(hist);
    }
}

/// Direct-form convolution `y(n) = sum_k h(k) x(n - k)` from zero state.
pub fn serial_fir<A: Arithmetic>(
    s: &SerialStream<A::Sample>,
    h: &[A::Coeff],
    arith: &A,
) -> SerialStream<A::Sample> {
    let mut fir = DirectFir::new(arith.clone(), h.to_vec());
    let mut out = Vec::with_capacity(s.len());
    fir.process(&s.samples, &mut out);
    SerialStream::new(out, s.sample_rate_hz)
}

/// Block FIR over frames of `L` lanes: output lane `j` of frame `t` is
/// `sum_k h(k) x(tL + j - k)`.
#[derive(Debug, Clone)]
pub struct BlockFir<A: Arithmetic> {
    inner: DirectFir<A>,
    lanes: usize,
}

impl<A: Arithmetic> BlockFir<A> {
    pub fn new(arith: A, taps: Vec<A::Coeff>, lanes: usize) -> Self {
        assert!(lanes >= 1);
        Self {
            inner: DirectFir::new(arith, taps),
            lanes,
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn step(
        &mut self,
        frame: &[A::Sample],
        out: &mut Vec<A::Sample>,
    ) -> Result<(), StreamError> {
        if frame.len() != self.lanes {
            return Err(StreamError::InvalidFrame {
                expected: self.lanes,
                got: frame.len(),
            });
        }
        self.inner.process(frame, out);
        Ok(())
    }
}

/// Direct-form FIR evaluated only at the kept phase of a decimate-by-`D`
/// (indices `0, D, 2D, ...`).
#[derive(Debug, Clone)]
pub struct FirDecimator<A: Arithmetic> {
    arith: A,
    taps: Vec<A::Coeff>,
    factor: usize,
    phase: usize,
    buf: Vec<A::Sample>,
}

impl<A: Arithmetic> FirDecimator<A> {
    pub fn new(arith: A, taps: Vec<A::Coeff>, factor: usize) -> Self {
        assert!(!taps.is_empty() && factor >= 1);
        let hist = taps.len() - 1;
        Self {
            arith,
            taps,
            factor,
            phase: 0,
            buf: vec![A::Sample::default(); hist],
        }
    }

    pub fn process(&mut self, input: &[A::Sample], out: &mut Vec<A::Sample>) {
        let hist = self.taps.len() - 1;
        self.buf.truncate(hist);
        self.buf.extend_from_slice(input);
        let mut n = (self.factor - self.phase) % self.factor;
        while n < input.len() {
            out.push(dot_at(&self.arith, &self.taps, &self.buf, hist + n));
            n += self.factor;
        }
        self.phase = (self.phase + input.len()) % self.factor;
        let len = self.buf.len();
        self.buf.copy_within(len - hist.., 0);
        self.buf.truncate(hist);
    }
}

/// `|sum_k h(k) e^{-i 2 pi f k}|` in dB at each normalised frequency.
pub fn fir_magnitude_db(h: &[f64], freqs: &[f64]) -> Vec<f64> {
    assert!(!h.is_empty(), "empty impulse response");
    freqs
        .iter()
        .map(|&f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &c) in h.iter().enumerate() {
                let (s, co) = (2.0 * std::f64::consts::PI * f * k as f64).sin_cos();
                re += c * co;
                im -= c * s;
            }
            let mag = (re * re + im * im).sqrt();
            (20.0 * mag.log10()).max(crate::cic::RESPONSE_FLOOR_DB)
        })
        .collect()
}

/// Distance between two doubles in units in the last place.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    fn key(x: f64) -> i64 {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    }
    if a == b {
        return 0;
    }
    key(a).abs_diff(key(b))
}
