//! Frame-based CIC datapath.
//!
//! Every integrator stage computes, for frame `t` and lane `l`,
//! `y(t, l) = A(t-1) + I(t, l)` where `I(t, l)` is the lane prefix sum from
//! the [`AdderMatrix`] and `A` accumulates the last lane of each frame.
//! The downsampler keeps flat indices that are multiples of `R`, carrying
//! its phase across frames and re-packing the kept samples into frames of
//! `ceil(L / R)` lanes. Combs subtract the sample `M` flat positions back,
//! reaching into the previous frames when `l < M`.

use super::{AdderMatrix, CicConfig, CicError};
use crate::sample::Word;
use crate::stream::{ParallelStream, StreamError};

/// One integrator stage: adder matrix, accumulator and adder line.
#[derive(Debug, Clone)]
pub struct ParallelIntegrator<W: Word> {
    matrix: AdderMatrix,
    accum: W,
    width: u32,
}

impl<W: Word> ParallelIntegrator<W> {
    pub fn new(lanes: usize, width: u32) -> Self {
        Self {
            matrix: AdderMatrix::build(lanes),
            accum: W::default(),
            width,
        }
    }

    pub fn lanes(&self) -> usize {
        self.matrix.lanes()
    }

    /// Running total `A(t)` after the last step.
    pub fn accumulator(&self) -> W {
        self.accum
    }

    pub fn step(&mut self, frame: &[W], out: &mut [W]) -> Result<(), StreamError> {
        let lanes = self.lanes();
        if frame.len() != lanes || out.len() != lanes {
            return Err(StreamError::InvalidFrame {
                expected: lanes,
                got: frame.len(),
            });
        }
        out.copy_from_slice(frame);
        self.matrix.apply(out);
        let a = self.accum;
        for v in out.iter_mut() {
            *v = v.add(a).wrap(self.width);
        }
        self.accum = out[lanes - 1];
        Ok(())
    }
}

/// Frame-wide comb `y(k) = x(k) - x(k - M)` over flat indices.
#[derive(Debug, Clone)]
pub struct ParallelComb<W: Word> {
    lanes: usize,
    width: u32,
    // history (last M samples) followed by the current frame
    buf: Vec<W>,
    delay: usize,
}

impl<W: Word> ParallelComb<W> {
    pub fn new(lanes: usize, delay: usize, width: u32) -> Self {
        assert!(lanes >= 1 && delay >= 1);
        Self {
            lanes,
            width,
            buf: vec![W::default(); delay + lanes],
            delay,
        }
    }

    pub fn step(&mut self, frame: &[W], out: &mut [W]) -> Result<(), StreamError> {
        if frame.len() != self.lanes || out.len() != self.lanes {
            return Err(StreamError::InvalidFrame {
                expected: self.lanes,
                got: frame.len(),
            });
        }
        let m = self.delay;
        self.buf[m..].copy_from_slice(frame);
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.buf[m + l].sub(self.buf[l]).wrap(self.width);
        }
        let len = self.buf.len();
        self.buf.copy_within(len - m.., 0);
        Ok(())
    }
}

/// Keeps flat indices `0, R, 2R, ...` and re-packs them into frames of
/// `ceil(L / R)` lanes.
#[derive(Debug, Clone)]
pub struct ParallelDownsampler<W: Word> {
    in_lanes: usize,
    factor: usize,
    out_lanes: usize,
    // lane of the next kept sample within the next input frame
    offset: usize,
    pending: Vec<W>,
}

impl<W: Word> ParallelDownsampler<W> {
    pub fn new(in_lanes: usize, factor: usize) -> Self {
        assert!(in_lanes >= 1 && factor >= 1);
        let out_lanes = in_lanes.div_ceil(factor);
        Self {
            in_lanes,
            factor,
            out_lanes,
            offset: 0,
            pending: Vec::with_capacity(out_lanes),
        }
    }

    pub fn out_lanes(&self) -> usize {
        self.out_lanes
    }

    /// Append every completed output frame to `out` (flat).
    pub fn push(&mut self, frame: &[W], out: &mut Vec<W>) -> Result<(), StreamError> {
        if frame.len() != self.in_lanes {
            return Err(StreamError::InvalidFrame {
                expected: self.in_lanes,
                got: frame.len(),
            });
        }
        let mut j = self.offset;
        while j < self.in_lanes {
            self.pending.push(frame[j]);
            if self.pending.len() == self.out_lanes {
                out.extend_from_slice(&self.pending);
                self.pending.clear();
            }
            j += self.factor;
        }
        self.offset = j - self.in_lanes;
        Ok(())
    }

    /// Emit a zero-padded partial frame if one is pending; returns the
    /// number of valid lanes in it.
    pub fn flush(&mut self, out: &mut Vec<W>) -> usize {
        let valid = self.pending.len();
        if valid > 0 {
            out.extend_from_slice(&self.pending);
            out.extend(std::iter::repeat_n(W::default(), self.out_lanes - valid));
            self.pending.clear();
        }
        valid
    }
}

// Integrators and combs run on full machine words; every operation is a
// ring operation modulo 2^BITS, so reducing to the configured width once
// at the comb output gives the same bits as wrapping after every add.
#[derive(Debug, Clone)]
struct Core<W: Word> {
    width: u32,
    integrators: Vec<ParallelIntegrator<W>>,
    down: ParallelDownsampler<W>,
    combs: Vec<ParallelComb<W>>,
    a: Vec<W>,
    b: Vec<W>,
    emitted: Vec<W>,
    x: Vec<W>,
    y: Vec<W>,
}

impl<W: Word> Core<W> {
    fn new(cfg: &CicConfig, lanes: usize) -> Self {
        let down = ParallelDownsampler::new(lanes, cfg.decimation as usize);
        let out_lanes = down.out_lanes();
        Self {
            width: cfg.internal_width(),
            integrators: (0..cfg.stages)
                .map(|_| ParallelIntegrator::new(lanes, W::BITS))
                .collect(),
            combs: (0..cfg.stages)
                .map(|_| ParallelComb::new(out_lanes, cfg.diff_delay as usize, W::BITS))
                .collect(),
            down,
            a: vec![W::default(); lanes],
            b: vec![W::default(); lanes],
            emitted: Vec::new(),
            x: vec![W::default(); out_lanes],
            y: vec![W::default(); out_lanes],
        }
    }

    fn push(&mut self, frame: &[i64], out: &mut Vec<W>) -> Result<(), StreamError> {
        if frame.len() != self.a.len() {
            return Err(StreamError::InvalidFrame {
                expected: self.a.len(),
                got: frame.len(),
            });
        }
        for (d, &s) in self.a.iter_mut().zip(frame) {
            *d = W::from_i64(s);
        }
        for integ in &mut self.integrators {
            integ.step(&self.a, &mut self.b)?;
            std::mem::swap(&mut self.a, &mut self.b);
        }
        self.emitted.clear();
        self.down.push(&self.a, &mut self.emitted)?;
        self.comb_emitted(out)
    }

    fn flush(&mut self, out: &mut Vec<W>) -> Result<usize, StreamError> {
        self.emitted.clear();
        let valid = self.down.flush(&mut self.emitted);
        self.comb_emitted(out)?;
        Ok(valid)
    }

    fn comb_emitted(&mut self, out: &mut Vec<W>) -> Result<(), StreamError> {
        let w = self.x.len();
        for chunk in self.emitted.chunks_exact(w) {
            self.x.copy_from_slice(chunk);
            for comb in &mut self.combs {
                comb.step(&self.x, &mut self.y)?;
                std::mem::swap(&mut self.x, &mut self.y);
            }
            out.extend(self.x.iter().map(|v| v.wrap(self.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Datapath {
    Narrow(Core<i64>),
    Wide(Core<i128>),
}

/// Streaming parallel CIC: `N` integrator stages, downsampler, `N` combs
/// at the reduced lane count.
#[derive(Debug, Clone)]
pub struct ParallelCic {
    cfg: CicConfig,
    in_lanes: usize,
    out_lanes: usize,
    path: Datapath,
    narrow: Vec<i64>,
    wide: Vec<i128>,
}

impl ParallelCic {
    pub fn new(cfg: CicConfig, lanes: usize) -> Result<Self, CicError> {
        cfg.validate()?;
        if lanes == 0 {
            return Err(StreamError::InvalidLaneCount(0).into());
        }
        let path = if cfg.internal_width() <= 64 {
            Datapath::Narrow(Core::new(&cfg, lanes))
        } else {
            Datapath::Wide(Core::new(&cfg, lanes))
        };
        Ok(Self {
            cfg,
            in_lanes: lanes,
            out_lanes: lanes.div_ceil(cfg.decimation as usize),
            path,
            narrow: Vec::new(),
            wide: Vec::new(),
        })
    }

    pub fn config(&self) -> &CicConfig {
        &self.cfg
    }

    pub fn in_lanes(&self) -> usize {
        self.in_lanes
    }

    pub fn out_lanes(&self) -> usize {
        self.out_lanes
    }

    /// Push one input frame; completed unrounded output frames are appended
    /// to `out`.
    pub fn push_frame_wide(&mut self, frame: &[i64], out: &mut Vec<i128>) -> Result<(), CicError> {
        match &mut self.path {
            Datapath::Narrow(c) => {
                let mut tmp = Vec::new();
                c.push(frame, &mut tmp)?;
                out.extend(tmp.into_iter().map(|v| v as i128));
            }
            Datapath::Wide(c) => c.push(frame, out)?,
        }
        Ok(())
    }

    /// Push one input frame; completed output frames, rounded to the
    /// output width, are appended to `out`.
    pub fn push_frame(&mut self, frame: &[i64], out: &mut Vec<i64>) -> Result<(), CicError> {
        let cfg = self.cfg;
        match &mut self.path {
            Datapath::Narrow(c) => {
                let mut staged = std::mem::take(&mut self.narrow);
                staged.clear();
                c.push(frame, &mut staged)?;
                out.extend(staged.iter().map(|&v| cfg.round_output(v as i128)));
                self.narrow = staged;
            }
            Datapath::Wide(c) => {
                let mut tmp = std::mem::take(&mut self.wide);
                tmp.clear();
                c.push(frame, &mut tmp)?;
                out.extend(tmp.iter().map(|&v| cfg.round_output(v)));
                self.wide = tmp;
            }
        }
        Ok(())
    }

    /// Flush a pending partial output frame (zero padded). Returns the
    /// number of valid lanes in it, zero when nothing was pending.
    pub fn flush(&mut self, out: &mut Vec<i64>) -> Result<usize, CicError> {
        let mut wide = Vec::new();
        let valid = self.flush_wide(&mut wide)?;
        let cfg = self.cfg;
        out.extend(wide.into_iter().map(|v| cfg.round_output(v)));
        Ok(valid)
    }

    pub fn flush_wide(&mut self, out: &mut Vec<i128>) -> Result<usize, CicError> {
        Ok(match &mut self.path {
            Datapath::Narrow(c) => {
                let mut tmp = Vec::new();
                let v = c.flush(&mut tmp)?;
                out.extend(tmp.into_iter().map(|v| v as i128));
                v
            }
            Datapath::Wide(c) => c.flush(out)?,
        })
    }
}

fn run_frames<T: Copy + Default>(
    p: &ParallelStream<i64>,
    cfg: &CicConfig,
    mut push: impl FnMut(&mut ParallelCic, &[i64], &mut Vec<T>) -> Result<(), CicError>,
    mut flush: impl FnMut(&mut ParallelCic, &mut Vec<T>) -> Result<usize, CicError>,
) -> Result<ParallelStream<T>, CicError> {
    cfg.check_input(p.as_flat())?;
    let mut cic = ParallelCic::new(*cfg, p.lanes())?;
    let out_len = cfg.output_len(p.len());
    let mut out = Vec::with_capacity(out_len.div_ceil(cic.out_lanes()) * cic.out_lanes());
    for frame in p.frames() {
        push(&mut cic, frame, &mut out)?;
    }
    flush(&mut cic, &mut out)?;
    let lanes = cic.out_lanes();
    // drop whole frames that hold only samples derived from padding
    out.truncate(out_len.div_ceil(lanes) * lanes);
    Ok(ParallelStream::from_flat(
        lanes,
        p.aggregate_rate_hz() / cfg.decimation as f64,
        out,
        out_len,
    )?)
}

/// Run the parallel CIC over a whole stream, rounding to the output width.
pub fn run_parallel_cic(
    p: &ParallelStream<i64>,
    cfg: &CicConfig,
) -> Result<ParallelStream<i64>, CicError> {
    run_frames(p, cfg, |c, f, o| c.push_frame(f, o), |c, o| c.flush(o))
}

/// Run the parallel CIC over a whole stream without output rounding.
pub fn run_parallel_cic_wide(
    p: &ParallelStream<i64>,
    cfg: &CicConfig,
) -> Result<ParallelStream<i128>, CicError> {
    run_frames(
        p,
        cfg,
        |c, f, o| c.push_frame_wide(f, o),
        |c, o| c.flush_wide(o),
    )
}
