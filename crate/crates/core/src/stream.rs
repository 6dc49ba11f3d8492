//! Serial streams, L-lane parallel frames and the index map between them.
//!
//! Serial sample `k` lives in frame `i = k / L`, lane `j = k % L`. A
//! trailing partial frame is zero padded; the stream remembers how many
//! samples are valid so that the inverse map trims the padding again.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("invalid lane count {0}: must be at least 1")]
    InvalidLaneCount(usize),
    #[error("malformed stream: frame {frame} has {got} lanes, expected {expected}")]
    MalformedStream {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("valid length {valid} exceeds the {capacity} samples held by the frames")]
    ValidLengthTooLong { valid: usize, capacity: usize },
    #[error("invalid frame: expected {expected} lanes, got {got}")]
    InvalidFrame { expected: usize, got: usize },
}

/// Map serial index `k` to `(frame, lane)` for an `lanes`-wide bus.
pub fn serialize_index(k: u64, lanes: usize) -> Result<(u64, usize), StreamError> {
    if lanes == 0 {
        return Err(StreamError::InvalidLaneCount(lanes));
    }
    let l = lanes as u64;
    Ok((k / l, (k % l) as usize))
}

/// Inverse of [`serialize_index`].
pub fn deserialize_index(frame: u64, lane: usize, lanes: usize) -> Result<u64, StreamError> {
    if lanes == 0 {
        return Err(StreamError::InvalidLaneCount(lanes));
    }
    Ok(frame * lanes as u64 + lane as u64)
}

/// A single-lane sample sequence at a known rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialStream<T> {
    pub samples: Vec<T>,
    pub sample_rate_hz: f64,
}

impl<T> SerialStream<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One time step of an L-lane bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelFrame<T> {
    pub time_index: u64,
    pub lanes: Vec<T>,
}

impl<T> ParallelFrame<T> {
    pub fn new(time_index: u64, lanes: Vec<T>) -> Self {
        Self { time_index, lanes }
    }

    pub fn width(&self) -> usize {
        self.lanes.len()
    }
}

/// A sequence of equally wide frames stored contiguously.
///
/// `len` counts valid samples; everything past it in the final frame is
/// zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelStream<T> {
    lanes: usize,
    sample_rate_hz: f64,
    data: Vec<T>,
    len: usize,
}

impl<T: Copy + Default> ParallelStream<T> {
    /// Build from flat frame-major data. `data.len()` must be a multiple of
    /// `lanes` and `len <= data.len()`. `sample_rate_hz` is the aggregate
    /// (serial-equivalent) rate.
    pub fn from_flat(
        lanes: usize,
        sample_rate_hz: f64,
        data: Vec<T>,
        len: usize,
    ) -> Result<Self, StreamError> {
        if lanes == 0 {
            return Err(StreamError::InvalidLaneCount(lanes));
        }
        if !data.len().is_multiple_of(lanes) {
            return Err(StreamError::MalformedStream {
                frame: data.len() / lanes,
                got: data.len() % lanes,
                expected: lanes,
            });
        }
        if len > data.len() {
            return Err(StreamError::ValidLengthTooLong {
                valid: len,
                capacity: data.len(),
            });
        }
        Ok(Self {
            lanes,
            sample_rate_hz,
            data,
            len,
        })
    }

    /// Build from owned frames. Every frame must have the same width.
    /// `valid_len` defaults to every sample being valid.
    pub fn from_frames(
        frames: Vec<ParallelFrame<T>>,
        lane_rate_hz: f64,
        valid_len: Option<usize>,
    ) -> Result<Self, StreamError> {
        let lanes = match frames.first() {
            Some(f) => f.width(),
            None => {
                return Ok(Self {
                    lanes: 1,
                    sample_rate_hz: lane_rate_hz,
                    data: Vec::new(),
                    len: 0,
                })
            }
        };
        let mut data = Vec::with_capacity(lanes * frames.len());
        for (i, f) in frames.into_iter().enumerate() {
            if f.width() != lanes {
                return Err(StreamError::MalformedStream {
                    frame: i,
                    got: f.width(),
                    expected: lanes,
                });
            }
            data.extend(f.lanes);
        }
        let len = valid_len.unwrap_or(data.len());
        Self::from_flat(lanes, lane_rate_hz * lanes as f64, data, len)
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn lane_rate_hz(&self) -> f64 {
        self.sample_rate_hz / self.lanes as f64
    }

    /// Aggregate sample rate, `lanes * lane_rate`.
    pub fn aggregate_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Number of valid samples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.lanes
    }

    /// Valid samples in the last frame (equal to `lanes` when unpadded).
    pub fn tail_valid(&self) -> usize {
        if self.len == 0 {
            0
        } else {
            self.len - (self.frame_count() - 1) * self.lanes
        }
    }

    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.lanes..(i + 1) * self.lanes]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.lanes)
    }

    /// Owned copy of frame `i`.
    pub fn to_frame(&self, i: usize) -> ParallelFrame<T> {
        ParallelFrame::new(i as u64, self.frame(i).to_vec())
    }

    /// Flat frame-major storage including padding.
    pub fn as_flat(&self) -> &[T] {
        &self.data
    }
}

/// Distribute a serial stream over `lanes` lanes, zero padding the tail.
pub fn serial_to_parallel<T: Copy + Default>(
    s: &SerialStream<T>,
    lanes: usize,
) -> Result<ParallelStream<T>, StreamError> {
    if lanes == 0 {
        return Err(StreamError::InvalidLaneCount(lanes));
    }
    let len = s.samples.len();
    let mut data = s.samples.clone();
    data.resize(len.div_ceil(lanes) * lanes, T::default());
    ParallelStream::from_flat(lanes, s.sample_rate_hz, data, len)
}

/// Flatten a parallel stream back to serial order, dropping padding.
pub fn parallel_to_serial<T: Copy + Default>(p: &ParallelStream<T>) -> SerialStream<T> {
    SerialStream::new(p.data[..p.len].to_vec(), p.aggregate_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_examples() {
        assert_eq!(serialize_index(13, 4).unwrap(), (3, 1));
        assert_eq!(serialize_index(0, 8).unwrap(), (0, 0));
        assert_eq!(serialize_index(7, 8).unwrap(), (0, 7));
        assert_eq!(
            serialize_index(3, 0).unwrap_err(),
            StreamError::InvalidLaneCount(0)
        );
    }

    #[test]
    fn to_parallel_examples() {
        let s = SerialStream::new(vec![1, 2, 3, 4, 5, 6], 6.0);
        let p = serial_to_parallel(&s, 2).unwrap();
        let frames: Vec<_> = p.frames().map(|f| f.to_vec()).collect();
        assert_eq!(frames, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(p.lane_rate_hz(), 3.0);
        assert_eq!(p.aggregate_rate_hz(), 6.0);

        let s = SerialStream::new(vec![1, 2, 3], 1.0);
        let p = serial_to_parallel(&s, 2).unwrap();
        let frames: Vec<_> = p.frames().map(|f| f.to_vec()).collect();
        assert_eq!(frames, vec![vec![1, 2], vec![3, 0]]);
        assert_eq!(p.tail_valid(), 1);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn to_serial_examples() {
        let p = ParallelStream::from_frames(
            vec![
                ParallelFrame::new(0, vec![1, 2]),
                ParallelFrame::new(1, vec![3, 4]),
            ],
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(parallel_to_serial(&p).samples, vec![1, 2, 3, 4]);

        let empty: ParallelStream<i64> = ParallelStream::from_frames(vec![], 1.0, None).unwrap();
        assert!(parallel_to_serial(&empty).is_empty());
    }

    #[test]
    fn mismatched_frames_are_malformed() {
        let err = ParallelStream::from_frames(
            vec![
                ParallelFrame::new(0, vec![1, 2]),
                ParallelFrame::new(1, vec![3]),
            ],
            1.0,
            None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            StreamError::MalformedStream {
                frame: 1,
                got: 1,
                expected: 2
            }
        );
    }

    proptest! {
        #[test]
        fn index_map_is_bijective(k in 0u64..1_000_000, lanes in 1usize..200) {
            let (i, j) = serialize_index(k, lanes).unwrap();
            prop_assert!(j < lanes);
            prop_assert_eq!(deserialize_index(i, j, lanes).unwrap(), k);
        }

        #[test]
        fn round_trip_is_identity(xs in proptest::collection::vec(any::<i64>(), 0..300), lanes in 1usize..100) {
            let s = SerialStream::new(xs, 48_000.0);
            let p = serial_to_parallel(&s, lanes).unwrap();
            prop_assert_eq!(p.frame_count(), s.len().div_ceil(lanes));
            for (idx, &x) in s.samples.iter().enumerate() {
                let (i, j) = serialize_index(idx as u64, lanes).unwrap();
                prop_assert_eq!(p.frame(i as usize)[j], x);
            }
            prop_assert_eq!(parallel_to_serial(&p), s);
        }
    }
}
