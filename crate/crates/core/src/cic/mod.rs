//! Cascaded integrator-comb decimators.
//!
//! [`serial`] holds the per-sample reference datapath. [`parallel`] holds
//! the frame-based datapath: each integrator stage is an [`AdderMatrix`]
//! (lane prefix sums) plus an accumulator and adder line, followed by a
//! phase-carrying downsampler and frame-wide combs. Both produce the same
//! bits for the same configuration.
//!
//! Internal arithmetic wraps at `input_width + N * ceil(log2(R * M))`
//! bits. The final comb output is normalised by the DC gain `(R * M)^N`
//! and rounded half-up to `output_width`.

mod adder_matrix;
mod parallel;
mod serial;

pub use adder_matrix::{AddSpan, AdderMatrix};
pub use parallel::{
    run_parallel_cic, run_parallel_cic_wide, ParallelCic, ParallelComb, ParallelDownsampler,
    ParallelIntegrator,
};
pub use serial::{run_serial_cic, run_serial_cic_wide, SerialCic};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{max_for_width, min_for_width, saturate};
use crate::stream::StreamError;

/// Response floor reported at exact nulls.
pub const RESPONSE_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CicError {
    #[error("invalid CIC parameter: {0}")]
    InvalidConfig(String),
    #[error("input sample {index} = {value} does not fit in {width} bits")]
    InputOutOfRange {
        index: usize,
        value: i64,
        width: u32,
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    RoundHalfUp,
}

/// CIC parameters: `N` stages, decimation `R`, differential delay `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CicConfig {
    pub stages: u32,
    pub decimation: u32,
    pub diff_delay: u32,
    pub input_width: u32,
    pub output_width: u32,
    #[serde(default)]
    pub rounding: Rounding,
}

fn ceil_log2(v: u64) -> u32 {
    if v <= 1 {
        0
    } else {
        64 - (v - 1).leading_zeros()
    }
}

impl CicConfig {
    pub fn new(
        stages: u32,
        decimation: u32,
        diff_delay: u32,
        input_width: u32,
        output_width: u32,
    ) -> Result<Self, CicError> {
        let cfg = Self {
            stages,
            decimation,
            diff_delay,
            input_width,
            output_width,
            rounding: Rounding::RoundHalfUp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 16-bit in/out, `N` stages, `M = 1`.
    pub fn standard(stages: u32, decimation: u32) -> Result<Self, CicError> {
        Self::new(stages, decimation, 1, 16, 16)
    }

    pub fn validate(&self) -> Result<(), CicError> {
        let bad = |m: String| Err(CicError::InvalidConfig(m));
        if !(1..=16).contains(&self.stages) {
            return bad(format!("stages N = {} not in 1..=16", self.stages));
        }
        if self.decimation == 0 {
            return bad("decimation R must be at least 1".into());
        }
        if self.diff_delay == 0 {
            return bad("differential delay M must be at least 1".into());
        }
        if !(1..=32).contains(&self.input_width) {
            return bad(format!("input width {} not in 1..=32", self.input_width));
        }
        if !(1..=64).contains(&self.output_width) {
            return bad(format!("output width {} not in 1..=64", self.output_width));
        }
        let internal = self.input_width as u64
            + self.stages as u64
                * ceil_log2(self.decimation as u64 * self.diff_delay as u64) as u64;
        if internal > 120 {
            return bad(format!("internal width {internal} exceeds 120 bits"));
        }
        Ok(())
    }

    /// `R * M`, the length of one boxcar stage at the input rate.
    pub fn boxcar_len(&self) -> u64 {
        self.decimation as u64 * self.diff_delay as u64
    }

    /// Hogenauer bit growth `N * ceil(log2(R * M))`.
    pub fn bit_growth(&self) -> u32 {
        self.stages * ceil_log2(self.boxcar_len())
    }

    /// Width at which every integrator and comb wraps.
    pub fn internal_width(&self) -> u32 {
        self.input_width + self.bit_growth()
    }

    /// DC gain `(R * M)^N` of the unrounded datapath.
    pub fn dc_gain(&self) -> i128 {
        (self.boxcar_len() as i128).pow(self.stages)
    }

    /// Output samples produced for `n` inputs (phase-0 samples are kept).
    pub fn output_len(&self, n: usize) -> usize {
        n.div_ceil(self.decimation as usize)
    }

    /// Normalise a full-precision comb output by the DC gain and round
    /// half-up to `output_width`.
    pub fn round_output(&self, v: i128) -> i64 {
        let mut num = v;
        let mut den = self.dc_gain();
        if self.output_width >= self.input_width {
            num <<= self.output_width - self.input_width;
        } else {
            den <<= self.input_width - self.output_width;
        }
        let q = (2 * num + den).div_euclid(2 * den);
        saturate(q, self.output_width)
    }

    pub(crate) fn check_input(&self, xs: &[i64]) -> Result<(), CicError> {
        let (lo, hi) = (
            min_for_width(self.input_width),
            max_for_width(self.input_width),
        );
        match xs.iter().position(|&x| x < lo || x > hi) {
            Some(index) => Err(CicError::InputOutOfRange {
                index,
                value: xs[index],
                width: self.input_width,
            }),
            None => Ok(()),
        }
    }

    /// Impulse response of the equivalent non-recursive filter: `N`
    /// cascaded boxcars of length `R * M`, at the input rate.
    pub fn impulse_response(&self) -> Vec<i128> {
        let len = self.boxcar_len() as usize;
        let mut h = vec![1i128];
        for _ in 0..self.stages {
            // running-window sum of width `len`
            let mut next = vec![0i128; h.len() + len - 1];
            let mut acc = 0i128;
            for (i, slot) in next.iter_mut().enumerate() {
                if i < h.len() {
                    acc += h[i];
                }
                if i >= len {
                    acc -= h[i - len];
                }
                *slot = acc;
            }
            h = next;
        }
        h
    }
}

/// CIC magnitude in dB at normalised frequency `f` (cycles per input
/// sample), referenced to 0 dB at DC. Exact nulls report
/// [`RESPONSE_FLOOR_DB`].
pub fn cic_magnitude_db(cfg: &CicConfig, f: f64) -> f64 {
    let mag = cic_magnitude(cfg, f);
    if mag <= 0.0 {
        RESPONSE_FLOOR_DB
    } else {
        (20.0 * mag.log10()).max(RESPONSE_FLOOR_DB)
    }
}

/// Linear CIC magnitude (unit DC gain) at normalised frequency `f`.
pub fn cic_magnitude(cfg: &CicConfig, f: f64) -> f64 {
    let rm = cfg.boxcar_len() as f64;
    let den = (std::f64::consts::PI * f).sin();
    if den.abs() < 1e-300 {
        return 1.0;
    }
    let num = (std::f64::consts::PI * f * rm).sin();
    (num / (rm * den)).abs().powi(cfg.stages as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_and_gain() {
        let c = CicConfig::standard(5, 20).unwrap();
        assert_eq!(c.bit_growth(), 25);
        assert_eq!(c.internal_width(), 41);
        assert_eq!(c.dc_gain(), 3_200_000);
        let c = CicConfig::standard(5, 4000).unwrap();
        assert_eq!(c.internal_width(), 76);
        let c = CicConfig::standard(1, 1).unwrap();
        assert_eq!(c.internal_width(), 16);
        assert_eq!(c.dc_gain(), 1);
    }

    #[test]
    fn invalid_configs() {
        assert!(CicConfig::new(0, 2, 1, 16, 16).is_err());
        assert!(CicConfig::new(1, 0, 1, 16, 16).is_err());
        assert!(CicConfig::new(1, 2, 0, 16, 16).is_err());
        assert!(CicConfig::new(16, 1 << 20, 1, 16, 16).is_err());
    }

    #[test]
    fn round_half_up_normalisation() {
        let c = CicConfig::standard(1, 4).unwrap();
        // gain 4: 10/4 = 2.5 -> 3, -10/4 = -2.5 -> -2
        assert_eq!(c.round_output(10), 3);
        assert_eq!(c.round_output(-10), -2);
        assert_eq!(c.round_output(4 * 32767), 32767);
        assert_eq!(c.round_output(-4 * 32768), -32768);
        let wider = CicConfig::new(1, 4, 1, 16, 18).unwrap();
        assert_eq!(wider.round_output(4 * 100), 400);
    }

    #[test]
    fn impulse_response_is_boxcar_cascade() {
        let c = CicConfig::new(1, 3, 2, 16, 16).unwrap();
        assert_eq!(c.impulse_response(), vec![1; 6]);
        let c = CicConfig::new(2, 3, 1, 16, 16).unwrap();
        assert_eq!(c.impulse_response(), vec![1, 2, 3, 2, 1]);
        let c = CicConfig::standard(5, 20).unwrap();
        let h = c.impulse_response();
        assert_eq!(h.len(), 5 * 19 + 1);
        assert_eq!(h.iter().sum::<i128>(), c.dc_gain());
    }

    #[test]
    fn magnitude_examples() {
        let c = CicConfig::standard(5, 20).unwrap();
        assert_eq!(cic_magnitude_db(&c, 0.0), 0.0);
        assert_eq!(cic_magnitude_db(&c, 1.0 / 20.0), RESPONSE_FLOOR_DB);
        assert!(cic_magnitude_db(&c, 0.3 / 20.0) < -1.0);
    }

    #[test]
    fn magnitude_matches_dft_of_impulse_response() {
        // Independent route: direct DFT of the boxcar cascade.
        let c = CicConfig::standard(5, 20).unwrap();
        let h = c.impulse_response();
        let f = 0.001;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (k, &v) in h.iter().enumerate() {
            let w = -2.0 * std::f64::consts::PI * f * k as f64;
            re += v as f64 * w.cos();
            im += v as f64 * w.sin();
        }
        let dft_db = 20.0 * ((re * re + im * im).sqrt() / c.dc_gain() as f64).log10();
        assert!((dft_db - cic_magnitude_db(&c, f)).abs() < 1e-9);
    }
}
