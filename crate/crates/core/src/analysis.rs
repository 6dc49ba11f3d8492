//! Test-signal generation, spectrum estimation and the end-to-end
//! anti-aliasing experiments.
//!
//! Experiments run at desk-scale rates (20 MHz standing in for 20 GHz);
//! only normalised frequencies matter to the filters. Spectra are in dB
//! relative to a full-scale sine, with `1.0` as full scale.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{run_src, run_src_float, CascadeModel, SrcConfig, SrcError, SAMPLE_WIDTH};
use crate::sample::{max_for_width, NumericKind};
use crate::stream::{serial_to_parallel, SerialStream};

/// Lowest level reported by [`spectrum`].
pub const SPECTRUM_FLOOR_DB: f64 = -400.0;

/// Desk-scale input rate used by the standard experiments.
pub const DESK_RATE_HZ: f64 = 20e6;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no tones given")]
    EmptyTones,
    #[error("tone at {frequency_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    ToneAboveNyquist { frequency_hz: f64, nyquist_hz: f64 },
    #[error("sample {index} = {value:.4} clips at {width} bits; request headroom scaling")]
    Clip {
        index: usize,
        value: f64,
        width: u32,
    },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("FFT size must be at least 2")]
    InvalidFftSize,
    #[error("desired and alias tones both land at {folded_hz} Hz after decimation")]
    ToneCollision { folded_hz: f64 },
    #[error(transparent)]
    Src(#[from] SrcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub frequency_hz: f64,
    /// Linear amplitude, `1.0` = full scale.
    pub amplitude: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl ToneSpec {
    pub fn new(frequency_hz: f64, amplitude: f64) -> Self {
        Self {
            frequency_hz,
            amplitude,
            phase_rad: 0.0,
        }
    }
}

/// Sum of sinusoids `sum a cos(2 pi f n / rate + phase)`.
pub fn gen_multitone(
    tones: &[ToneSpec],
    rate_hz: f64,
    count: usize,
) -> Result<SerialStream<f64>, AnalysisError> {
    if tones.is_empty() {
        return Err(AnalysisError::EmptyTones);
    }
    if let Some(t) = tones.iter().find(|t| t.frequency_hz.abs() >= rate_hz / 2.0) {
        return Err(AnalysisError::ToneAboveNyquist {
            frequency_hz: t.frequency_hz,
            nyquist_hz: rate_hz / 2.0,
        });
    }
    let samples = (0..count)
        .map(|n| {
            tones
                .iter()
                .map(|t| {
                    // reduce the phase exactly before scaling to radians
                    let cycles = (t.frequency_hz * n as f64 / rate_hz).fract();
                    t.amplitude * (2.0 * PI * cycles + t.phase_rad).cos()
                })
                .sum()
        })
        .collect();
    Ok(SerialStream::new(samples, rate_hz))
}

/// Convert to `width`-bit integers. Without headroom, full scale `1.0`
/// maps to `2^(width-1)` and any clipping sample is an error. With
/// `headroom_db`, the stream is scaled so its peak sits that far below
/// full scale. Returns the samples and the applied gain (integer units
/// per unit of input).
pub fn to_fixed(
    s: &SerialStream<f64>,
    width: u32,
    headroom_db: Option<f64>,
) -> Result<(SerialStream<i64>, f64), AnalysisError> {
    let fs = (1u64 << (width - 1)) as f64;
    let max = max_for_width(width);
    let gain = match headroom_db {
        None => fs,
        Some(db) => {
            let peak = s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                fs
            } else {
                max as f64 * 10f64.powf(-db / 20.0) / peak
            }
        }
    };
    let mut out = Vec::with_capacity(s.len());
    for (index, &v) in s.samples.iter().enumerate() {
        let q = (v * gain + 0.5).floor();
        if q > max as f64 || q < -fs {
            return Err(AnalysisError::Clip {
                index,
                value: v,
                width,
            });
        }
        out.push(q as i64);
    }
    Ok((SerialStream::new(out, s.sample_rate_hz), gain))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Rectangular,
    Hann,
    #[default]
    BlackmanHarris,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let a: &[f64] = match self {
            WindowKind::Rectangular => &[1.0],
            WindowKind::Hann => &[0.5, 0.5],
            WindowKind::BlackmanHarris => &[0.35875, 0.48829, 0.14128, 0.01168],
        };
        (0..n)
            .map(|k| {
                let x = 2.0 * PI * k as f64 / n as f64;
                a.iter()
                    .enumerate()
                    .map(|(i, c)| if i % 2 == 0 { 1.0 } else { -1.0 } * c * (i as f64 * x).cos())
                    .sum()
            })
            .collect()
    }

    /// Bins on each side of a tone that hold its main lobe.
    pub fn main_lobe_half_width(self) -> usize {
        match self {
            WindowKind::Rectangular => 0,
            WindowKind::Hann => 1,
            WindowKind::BlackmanHarris => 3,
        }
    }

    fn hop(self, n: usize) -> usize {
        match self {
            WindowKind::Rectangular => n,
            _ => (n / 2).max(1),
        }
    }
}

/// Averaged periodogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub freqs_hz: Vec<f64>,
    /// dB relative to a full-scale sine at a bin centre.
    pub power_db: Vec<f64>,
    pub window: WindowKind,
    pub fft_size: usize,
    pub segments: usize,
    /// Equivalent noise bandwidth in bins.
    pub enbw_bins: f64,
    pub bin_hz: f64,
}

impl SpectrumReport {
    pub fn peak(&self) -> (f64, f64) {
        self.freqs_hz
            .iter()
            .zip(&self.power_db)
            .fold((0.0, f64::NEG_INFINITY), |acc, (&f, &p)| {
                if p > acc.1 {
                    (f, p)
                } else {
                    acc
                }
            })
    }

    fn linear(&self, k: usize) -> f64 {
        10f64.powf(self.power_db[k] / 10.0)
    }

    /// Power of a tone near `freq_hz` in dB relative to a full-scale
    /// sine: main-lobe bins summed and corrected for the window's noise
    /// bandwidth.
    pub fn tone_power_db(&self, freq_hz: f64) -> f64 {
        let centre = (freq_hz / self.bin_hz).round() as isize;
        let w = self.window.main_lobe_half_width() as isize;
        let last = self.power_db.len() as isize - 1;
        let sum: f64 = (centre - w..=centre + w)
            .filter(|&k| (0..=last).contains(&k))
            .map(|k| self.linear(k as usize))
            .sum();
        let sum = if w == 0 { sum } else { sum / self.enbw_bins };
        db10(sum)
    }

    /// Total power from the spectrum, relative to a full-scale sine.
    pub fn total_power_db(&self) -> f64 {
        let sum: f64 = (0..self.power_db.len()).map(|k| self.linear(k)).sum();
        db10(sum / self.enbw_bins)
    }
}

fn db10(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(SPECTRUM_FLOOR_DB)
    } else {
        SPECTRUM_FLOOR_DB
    }
}

/// Mean-square power relative to a full-scale sine.
pub fn signal_power_db(x: &[f64]) -> f64 {
    if x.is_empty() {
        return SPECTRUM_FLOOR_DB;
    }
    db10(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 / 0.5)
}

/// Welch spectrum: windowed segments of `fft_size` (50 % overlap for
/// tapered windows), averaged power, one-sided.
pub fn spectrum(
    s: &SerialStream<f64>,
    fft_size: usize,
    window: WindowKind,
) -> Result<SpectrumReport, AnalysisError> {
    if fft_size < 2 {
        return Err(AnalysisError::InvalidFftSize);
    }
    if s.len() < fft_size {
        return Err(AnalysisError::InsufficientData {
            needed: fft_size,
            got: s.len(),
        });
    }
    let w = window.coefficients(fft_size);
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let bins = fft_size / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let hop = window.hop(fft_size);
    let mut segments = 0;
    let mut start = 0;
    while start + fft_size <= s.len() {
        for (b, (x, wk)) in buf.iter_mut().zip(s.samples[start..].iter().zip(&w)) {
            *b = Complex::new(x * wk, 0.0);
        }
        fft.process(&mut buf);
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += x.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let norm = sum_w * sum_w * segments as f64;
    let power_db = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (fft_size.is_multiple_of(2) && k == fft_size / 2);
            let c = if edge { 2.0 } else { 4.0 };
            db10(c * p / norm)
        })
        .collect();
    let bin_hz = s.sample_rate_hz / fft_size as f64;
    Ok(SpectrumReport {
        freqs_hz: (0..bins).map(|k| k as f64 * bin_hz).collect(),
        power_db,
        window,
        fft_size,
        segments,
        enbw_bins: fft_size as f64 * sum_w2 / (sum_w * sum_w),
        bin_hz,
    })
}

/// Frequency at which a tone appears after sampling at `rate_hz`.
pub fn fold_frequency(f_hz: f64, rate_hz: f64) -> f64 {
    let r = f_hz.rem_euclid(rate_hz);
    if r > rate_hz / 2.0 {
        rate_hz - r
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub input_rate_hz: f64,
    /// FFT length at the output rate.
    pub fft_size: usize,
    /// Scale fixed-point input to this far below full scale; `None`
    /// rejects clipping instead.
    pub headroom_db: Option<f64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            input_rate_hz: DESK_RATE_HZ,
            fft_size: 1000,
            headroom_db: None,
        }
    }
}

/// Output of a converter run on generated tones, trimmed past the
/// start-up transient.
struct ToneRun {
    output: SerialStream<f64>,
    /// Input amplitude scale actually applied (1.0 for float).
    gain: f64,
}

fn run_tones(
    cfg: &SrcConfig,
    tones: &[ToneSpec],
    opts: &ExperimentOptions,
) -> Result<ToneRun, AnalysisError> {
    let total = cfg.total_factor() as usize;
    let discard = (cfg.settling_input_samples() as usize).div_ceil(total) + 2;
    let count = (discard + opts.fft_size) * total;
    let x = gen_multitone(tones, opts.input_rate_hz, count)?;
    let (out, gain) = match cfg.numeric {
        NumericKind::Float => (run_src_float(&x, cfg)?, 1.0),
        NumericKind::Fixed => {
            let (q, gain) = to_fixed(&x, SAMPLE_WIDTH, opts.headroom_db)?;
            let p = serial_to_parallel(&q, cfg.lanes).map_err(SrcError::from)?;
            let y = run_src(&p, cfg)?;
            let fs = (1u64 << (SAMPLE_WIDTH - 1)) as f64;
            let y = SerialStream::new(
                y.samples.iter().map(|&v| v as f64 / fs).collect(),
                y.sample_rate_hz,
            );
            (y, gain / fs)
        }
    };
    let tail = out.samples[out.len() - opts.fft_size..].to_vec();
    Ok(ToneRun {
        output: SerialStream::new(tail, out.sample_rate_hz),
        gain,
    })
}

fn window_for(freqs: &[f64], bin_hz: f64) -> WindowKind {
    let centred = freqs.iter().all(|f| {
        let b = f / bin_hz;
        (b - b.round()).abs() < 1e-9
    });
    if centred {
        WindowKind::Rectangular
    } else {
        WindowKind::BlackmanHarris
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasReport {
    pub decimation_factor: u64,
    pub numeric: NumericKind,
    pub output_rate_hz: f64,
    pub desired_hz: f64,
    pub alias_hz: f64,
    /// Where the alias lands in the output band.
    pub alias_folded_hz: f64,
    pub desired_out_db: f64,
    pub alias_out_db: f64,
    pub measured_rejection_db: f64,
    pub predicted_rejection_db: f64,
    pub window: WindowKind,
    pub fft_size: usize,
    /// Output spectrum the measurement was taken from.
    #[serde(skip)]
    pub spectrum: Option<SpectrumReport>,
}

/// Inject a desired tone plus an out-of-band tone, run the converter and
/// compare the alias's folded level against the desired tone, both
/// normalised to their input amplitudes. The prediction is the cascade
/// response at the two input frequencies.
pub fn alias_attenuation_experiment(
    cfg: &SrcConfig,
    desired: ToneSpec,
    alias: ToneSpec,
    opts: &ExperimentOptions,
) -> Result<AliasReport, AnalysisError> {
    let out_rate = opts.input_rate_hz / cfg.total_factor() as f64;
    let fd = fold_frequency(desired.frequency_hz, out_rate);
    let fa = fold_frequency(alias.frequency_hz, out_rate);
    let bin_hz = out_rate / opts.fft_size as f64;
    let window = window_for(&[fd, fa], bin_hz);
    let lobe = window.main_lobe_half_width() as f64 + 0.5;
    if (fd - fa).abs() < 2.0 * lobe * bin_hz {
        return Err(AnalysisError::ToneCollision { folded_hz: fa });
    }
    let run = run_tones(cfg, &[desired, alias], opts)?;
    let spec = spectrum(&run.output, opts.fft_size, window)?;
    let amp_db = |t: &ToneSpec| 20.0 * (t.amplitude * run.gain).log10();
    let desired_out_db = spec.tone_power_db(fd);
    let alias_out_db = spec.tone_power_db(fa);
    let measured = (desired_out_db - amp_db(&desired)) - (alias_out_db - amp_db(&alias));
    let model = CascadeModel::new(cfg);
    let norm = |f: f64| model.magnitude_db(f / opts.input_rate_hz);
    Ok(AliasReport {
        decimation_factor: cfg.total_factor(),
        numeric: cfg.numeric,
        output_rate_hz: out_rate,
        desired_hz: desired.frequency_hz,
        alias_hz: alias.frequency_hz,
        alias_folded_hz: fa,
        desired_out_db,
        alias_out_db,
        measured_rejection_db: measured,
        predicted_rejection_db: norm(desired.frequency_hz) - norm(alias.frequency_hz),
        window,
        fft_size: opts.fft_size,
        spectrum: Some(spec),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneResult {
    pub frequency_hz: f64,
    pub out_db: f64,
    /// Output level minus input level.
    pub error_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitoneReport {
    pub decimation_factor: u64,
    pub numeric: NumericKind,
    pub tones: Vec<ToneResult>,
    pub max_abs_error_db: f64,
    pub window: WindowKind,
    #[serde(skip)]
    pub spectrum: Option<SpectrumReport>,
}

/// Pass in-band tones through the converter and report each tone's gain.
pub fn multitone_experiment(
    cfg: &SrcConfig,
    tones: &[ToneSpec],
    opts: &ExperimentOptions,
) -> Result<MultitoneReport, AnalysisError> {
    let out_rate = opts.input_rate_hz / cfg.total_factor() as f64;
    let folded: Vec<f64> = tones
        .iter()
        .map(|t| fold_frequency(t.frequency_hz, out_rate))
        .collect();
    let window = window_for(&folded, out_rate / opts.fft_size as f64);
    let run = run_tones(cfg, tones, opts)?;
    let spec = spectrum(&run.output, opts.fft_size, window)?;
    let results: Vec<ToneResult> = tones
        .iter()
        .zip(&folded)
        .map(|(t, &f)| {
            let out_db = spec.tone_power_db(f);
            ToneResult {
                frequency_hz: t.frequency_hz,
                out_db,
                error_db: out_db - 20.0 * (t.amplitude * run.gain).log10(),
            }
        })
        .collect();
    Ok(MultitoneReport {
        decimation_factor: cfg.total_factor(),
        numeric: cfg.numeric,
        max_abs_error_db: results.iter().fold(0.0, |m, r| m.max(r.error_db.abs())),
        tones: results,
        window,
        spectrum: Some(spec),
    })
}

/// Eight unit-amplitude tones at 10..80 kHz (desk scale), with
/// quadratic phases to keep the crest factor down.
pub fn standard_multitone() -> Vec<ToneSpec> {
    let k = 8.0;
    (1..=8)
        .map(|i| ToneSpec {
            frequency_hz: 10e3 * i as f64,
            amplitude: 1.0,
            phase_rad: -PI * (i * i) as f64 / k,
        })
        .collect()
}

/// Desired tone at 50 kHz and an interferer at 7.04 MHz (desk scale),
/// each at 0.45 of full scale.
pub fn standard_alias_pair() -> (ToneSpec, ToneSpec) {
    (ToneSpec::new(50e3, 0.45), ToneSpec::new(7.04e6, 0.45))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generator_basics() {
        assert!(matches!(
            gen_multitone(&[], 1.0, 4),
            Err(AnalysisError::EmptyTones)
        ));
        assert!(gen_multitone(&[ToneSpec::new(1.0, 1.0)], 10.0, 0)
            .unwrap()
            .is_empty());
        assert!(matches!(
            gen_multitone(&[ToneSpec::new(6.0, 1.0)], 10.0, 4),
            Err(AnalysisError::ToneAboveNyquist { .. })
        ));
        let s = gen_multitone(&[ToneSpec::new(2.5, 1.0)], 10.0, 4).unwrap();
        for (a, b) in s.samples.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_conversion_clips_or_scales() {
        let s = gen_multitone(&standard_multitone(), DESK_RATE_HZ, 4000).unwrap();
        assert!(matches!(
            to_fixed(&s, 16, None),
            Err(AnalysisError::Clip { .. })
        ));
        let (q, gain) = to_fixed(&s, 16, Some(1.0)).unwrap();
        let peak = q.samples.iter().map(|v| v.abs()).max().unwrap();
        assert!(peak <= 32767 && peak > 29000, "{peak}");
        assert!(gain > 0.0);
        let (q, gain) = to_fixed(&SerialStream::new(vec![0.5, -1.0], 1.0), 16, None).unwrap();
        assert_eq!((q.samples, gain), (vec![16384, -32768], 32768.0));
    }

    #[test]
    fn dc_stream_peaks_at_bin_zero() {
        let s = SerialStream::new(vec![0.5; 1024], 1.0);
        let r = spectrum(&s, 256, WindowKind::Hann).unwrap();
        assert_eq!(r.peak().0, 0.0);
    }

    #[test]
    fn bin_centred_tone_reads_its_amplitude() {
        // Oracle: a cosine of amplitude A at a bin centre puts A/2 times
        // the window sum into that bin.
        for window in [
            WindowKind::Rectangular,
            WindowKind::Hann,
            WindowKind::BlackmanHarris,
        ] {
            let n = 512;
            let tone = ToneSpec::new(64.0 * 1000.0 / n as f64, 0.5);
            let s = gen_multitone(&[tone], 1000.0, 4 * n).unwrap();
            let r = spectrum(&s, n, window).unwrap();
            let (f, p) = r.peak();
            assert!((f - tone.frequency_hz).abs() < 1e-9);
            assert!((p - 20.0 * 0.5f64.log10()).abs() < 0.01, "{window:?}: {p}");
            assert!((r.tone_power_db(f) - 20.0 * 0.5f64.log10()).abs() < 0.01);
        }
    }

    #[test]
    fn white_noise_floor_is_flat_and_parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..1 << 18).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let time_db = signal_power_db(&x);
        let s = SerialStream::new(x, 1.0);
        let r = spectrum(&s, 1024, WindowKind::BlackmanHarris).unwrap();
        assert!((r.total_power_db() - time_db).abs() < 0.1);
        // uniform noise, variance 1/12: expected bin level 4 var ENBW / n
        let want = 10.0 * (4.0 / 12.0 * r.enbw_bins / 1024.0f64 / 1.0).log10();
        let interior = &r.power_db[1..r.power_db.len() - 1];
        let mean_lin: f64 =
            interior.iter().map(|p| 10f64.powf(p / 10.0)).sum::<f64>() / interior.len() as f64;
        assert!((10.0 * mean_lin.log10() - want).abs() < 0.1);
        // ~500 overlapped segments: every bin within a few dB of the mean
        assert!(interior.iter().all(|p| (p - want).abs() < 1.5));

        let rect = spectrum(&s, 1024, WindowKind::Rectangular).unwrap();
        assert!((rect.total_power_db() - time_db).abs() < 1e-9);
    }

    #[test]
    fn short_stream_is_insufficient() {
        let s = SerialStream::new(vec![0.0; 10], 1.0);
        assert!(matches!(
            spectrum(&s, 16, WindowKind::Hann),
            Err(AnalysisError::InsufficientData {
                needed: 16,
                got: 10
            })
        ));
    }

    #[test]
    fn folding() {
        assert_eq!(fold_frequency(7.04e6, 250e3), 40e3);
        assert_eq!(fold_frequency(50e3, 250e3), 50e3);
        assert_eq!(fold_frequency(7.0e6, 250e3), 0.0);
        assert_eq!(fold_frequency(200e3, 250e3), 50e3);
    }

    #[test]
    fn alias_experiment_fixed_rejects_by_seventy_db() {
        let cfg = SrcConfig::standard(80, NumericKind::Fixed).unwrap();
        let (d, a) = standard_alias_pair();
        let r = alias_attenuation_experiment(&cfg, d, a, &ExperimentOptions::default()).unwrap();
        assert_eq!(r.alias_folded_hz, 40e3);
        assert_eq!(r.window, WindowKind::Rectangular);
        assert!(r.measured_rejection_db >= 70.0, "{r:?}");
        assert!(r.desired_out_db > -8.0);
    }

    #[test]
    fn alias_at_cic_null_is_deeply_rejected() {
        let cfg = SrcConfig::standard(80, NumericKind::Float).unwrap();
        let d = ToneSpec::new(50e3, 0.45);
        let a = ToneSpec::new(7.0e6, 0.45);
        let r = alias_attenuation_experiment(&cfg, d, a, &ExperimentOptions::default()).unwrap();
        assert_eq!(r.alias_folded_hz, 0.0);
        assert!(r.measured_rejection_db >= 100.0, "{r:?}");
        assert!(r.predicted_rejection_db >= 100.0);
    }

    #[test]
    fn colliding_tones_are_rejected() {
        let cfg = SrcConfig::standard(80, NumericKind::Float).unwrap();
        let d = ToneSpec::new(40e3, 0.4);
        let a = ToneSpec::new(7.04e6, 0.4);
        assert!(matches!(
            alias_attenuation_experiment(&cfg, d, a, &ExperimentOptions::default()),
            Err(AnalysisError::ToneCollision { .. })
        ));
    }
}
