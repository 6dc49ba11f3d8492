//! Per-sample reference CIC decimator.

use super::{CicConfig, CicError};
use crate::sample::Word;
use crate::stream::SerialStream;

#[derive(Debug, Clone)]
struct Core<W: Word> {
    width: u32,
    decimation: u32,
    integrators: Vec<W>,
    // one ring of depth M per comb stage, sharing `ring_pos`
    combs: Vec<Vec<W>>,
    ring_pos: usize,
    phase: u32,
}

impl<W: Word> Core<W> {
    fn new(cfg: &CicConfig) -> Self {
        let n = cfg.stages as usize;
        Self {
            width: cfg.internal_width(),
            decimation: cfg.decimation,
            integrators: vec![W::default(); n],
            combs: vec![vec![W::default(); cfg.diff_delay as usize]; n],
            ring_pos: 0,
            phase: 0,
        }
    }

    #[inline]
    fn push(&mut self, x: i64) -> Option<W> {
        let mut v = W::from_i64(x);
        for acc in &mut self.integrators {
            *acc = acc.add(v).wrap(self.width);
            v = *acc;
        }
        let keep = self.phase == 0;
        self.phase += 1;
        if self.phase == self.decimation {
            self.phase = 0;
        }
        if !keep {
            return None;
        }
        for ring in &mut self.combs {
            let delayed = ring[self.ring_pos];
            ring[self.ring_pos] = v;
            v = v.sub(delayed).wrap(self.width);
        }
        self.ring_pos += 1;
        if self.ring_pos == self.combs[0].len() {
            self.ring_pos = 0;
        }
        Some(v)
    }
}

#[derive(Debug, Clone)]
enum Datapath {
    Narrow(Core<i64>),
    Wide(Core<i128>),
}

/// Streaming serial CIC: `N` integrators, keep every `R`-th sample
/// starting with the first, `N` combs of delay `M`.
#[derive(Debug, Clone)]
pub struct SerialCic {
    cfg: CicConfig,
    path: Datapath,
}

impl SerialCic {
    pub fn new(cfg: CicConfig) -> Result<Self, CicError> {
        cfg.validate()?;
        let path = if cfg.internal_width() <= 64 {
            Datapath::Narrow(Core::new(&cfg))
        } else {
            Datapath::Wide(Core::new(&cfg))
        };
        Ok(Self { cfg, path })
    }

    pub fn config(&self) -> &CicConfig {
        &self.cfg
    }

    /// Full-precision (unrounded) outputs; these carry the `(R*M)^N` gain.
    pub fn process_wide(&mut self, input: &[i64], out: &mut Vec<i128>) {
        match &mut self.path {
            Datapath::Narrow(c) => {
                out.extend(input.iter().filter_map(|&x| c.push(x)).map(|v| v as i128))
            }
            Datapath::Wide(c) => out.extend(input.iter().filter_map(|&x| c.push(x))),
        }
    }

    /// Rounded outputs at `output_width`.
    pub fn process(&mut self, input: &[i64], out: &mut Vec<i64>) {
        let cfg = self.cfg;
        match &mut self.path {
            Datapath::Narrow(c) => out.extend(
                input
                    .iter()
                    .filter_map(|&x| c.push(x))
                    .map(|v| cfg.round_output(v as i128)),
            ),
            Datapath::Wide(c) => out.extend(
                input
                    .iter()
                    .filter_map(|&x| c.push(x))
                    .map(|v| cfg.round_output(v)),
            ),
        }
    }
}

/// Bit-exact serial reference: integrate, keep phase-0 samples, comb,
/// normalise and round.
pub fn run_serial_cic(
    s: &SerialStream<i64>,
    cfg: &CicConfig,
) -> Result<SerialStream<i64>, CicError> {
    cfg.check_input(&s.samples)?;
    let mut cic = SerialCic::new(*cfg)?;
    let mut out = Vec::with_capacity(cfg.output_len(s.len()));
    cic.process(&s.samples, &mut out);
    Ok(SerialStream::new(
        out,
        s.sample_rate_hz / cfg.decimation as f64,
    ))
}

/// As [`run_serial_cic`] but returning the unrounded comb outputs.
pub fn run_serial_cic_wide(samples: &[i64], cfg: &CicConfig) -> Result<Vec<i128>, CicError> {
    cfg.check_input(samples)?;
    let mut cic = SerialCic::new(*cfg)?;
    let mut out = Vec::with_capacity(cfg.output_len(samples.len()));
    cic.process_wide(samples, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: N boxcar sums of length R*M in exact
    /// arithmetic, then keep every R-th sample.
    fn boxcar_cascade(x: &[i64], cfg: &CicConfig) -> Vec<i128> {
        let len = cfg.boxcar_len() as usize;
        let mut v: Vec<i128> = x.iter().map(|&s| s as i128).collect();
        for _ in 0..cfg.stages {
            let mut next = vec![0i128; v.len()];
            for n in 0..v.len() {
                let lo = n.saturating_sub(len - 1);
                next[n] = v[lo..=n].iter().sum();
            }
            v = next;
        }
        v.into_iter().step_by(cfg.decimation as usize).collect()
    }

    fn random_i16(n: usize, seed: u64) -> Vec<i64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-32768..=32767)).collect()
    }

    #[test]
    fn unit_config_is_identity() {
        let cfg = CicConfig::standard(1, 1).unwrap();
        let x = SerialStream::new(vec![5, -3, 7, 0, 32767, -32768], 1.0);
        assert_eq!(run_serial_cic(&x, &cfg).unwrap(), x);
    }

    #[test]
    fn dc_gain_before_rounding() {
        for (n, r, m) in [(1, 1, 1), (3, 4, 1), (5, 20, 1), (2, 5, 2)] {
            let cfg = CicConfig::new(n, r, m, 16, 16).unwrap();
            let c = 1234i64;
            let out = run_serial_cic_wide(&vec![c; 2000], &cfg).unwrap();
            assert_eq!(*out.last().unwrap(), c as i128 * cfg.dc_gain());
            let rounded = run_serial_cic(&SerialStream::new(vec![c; 2000], 1.0), &cfg).unwrap();
            assert_eq!(*rounded.samples.last().unwrap(), c);
        }
    }

    #[test]
    fn matches_boxcar_cascade_brute_force() {
        let cfg = CicConfig::standard(5, 20).unwrap();
        let x = random_i16(100_000, 7);
        let got = run_serial_cic_wide(&x, &cfg).unwrap();
        assert_eq!(got, boxcar_cascade(&x, &cfg));
    }

    #[test]
    fn matches_brute_force_with_delay_two_and_wide_words() {
        let cfg = CicConfig::new(3, 5, 2, 16, 16).unwrap();
        let x = random_i16(5_000, 8);
        assert_eq!(
            run_serial_cic_wide(&x, &cfg).unwrap(),
            boxcar_cascade(&x, &cfg)
        );

        // 16 + 5*12 = 76-bit internal width takes the i128 datapath
        let cfg = CicConfig::standard(5, 4000).unwrap();
        let x = random_i16(40_000, 9);
        assert_eq!(
            run_serial_cic_wide(&x, &cfg).unwrap(),
            boxcar_cascade(&x, &cfg)
        );
    }

    #[test]
    fn one_stage_impulse_is_rm_ones() {
        let cfg = CicConfig::new(1, 1, 6, 16, 16).unwrap();
        let mut x = vec![0i64; 20];
        x[0] = 1;
        let out = run_serial_cic_wide(&x, &cfg).unwrap();
        assert_eq!(&out[..6], &[1; 6]);
        assert!(out[6..].iter().all(|&v| v == 0));
    }

    #[test]
    fn wrap_width_is_sufficient_at_full_scale() {
        // 4-bit input, N=3, R=4: internal width 4 + 6 = 10 bits.
        let cfg = CicConfig::new(3, 4, 1, 4, 4).unwrap();
        assert_eq!(cfg.internal_width(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x: Vec<i64> = (0..4000).map(|_| rng.gen_range(-8..=7)).collect();
        x.extend(std::iter::repeat_n(-8, 200));
        x.extend(std::iter::repeat_n(7, 200));
        assert_eq!(
            run_serial_cic_wide(&x, &cfg).unwrap(),
            boxcar_cascade(&x, &cfg)
        );
    }

    #[test]
    fn out_of_range_input_is_rejected() {
        let cfg = CicConfig::standard(2, 2).unwrap();
        let err = run_serial_cic(&SerialStream::new(vec![0, 40000], 1.0), &cfg).unwrap_err();
        assert_eq!(
            err,
            CicError::InputOutOfRange {
                index: 1,
                value: 40000,
                width: 16
            }
        );
    }
}
