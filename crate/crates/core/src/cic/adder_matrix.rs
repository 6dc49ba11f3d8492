//! Log-depth lane prefix-sum network.
//!
//! A length-`L` lane integral splits into the integrals of the top and
//! bottom halves, after which the last top-half sum is added to every
//! bottom-half lane. Unrolling that recursion bottom-up gives
//! `ceil(log2 L)` levels; at level `k` every block of `2^k` lanes
//! broadcasts one lane into the `2^(k-1)` lanes below it.
//!
//! Lane counts that are not a power of two use the network for the next
//! power of two with the trailing lanes removed; the remaining outputs
//! never depend on the removed inputs.

use std::ops::Range;

use crate::sample::Word;

/// One broadcast add: `lane[d] += lane[src]` for every `d` in `dst`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddSpan {
    pub src: usize,
    pub dst: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdderMatrix {
    lanes: usize,
    padded: usize,
    levels: Vec<Vec<AddSpan>>,
}

impl AdderMatrix {
    pub fn build(lanes: usize) -> Self {
        assert!(lanes >= 1, "adder matrix needs at least one lane");
        let padded = lanes.next_power_of_two();
        let depth = padded.trailing_zeros() as usize;
        let mut levels = Vec::with_capacity(depth);
        for level in 1..=depth {
            let block = 1usize << level;
            let half = block / 2;
            let spans = (0..padded)
                .step_by(block)
                .filter_map(|start| {
                    let src = start + half - 1;
                    let dst = (start + half)..(start + block).min(lanes);
                    (dst.start < dst.end).then_some(AddSpan { src, dst })
                })
                .collect();
            levels.push(spans);
        }
        Self {
            lanes,
            padded,
            levels,
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    /// Width of the power-of-two network this was cut from.
    pub fn padded_lanes(&self) -> usize {
        self.padded
    }

    pub fn levels(&self) -> &[Vec<AddSpan>] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Adders used on each level.
    pub fn adds_per_level(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|l| l.iter().map(|s| s.dst.len()).sum())
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.adds_per_level().iter().sum()
    }

    /// In-place lane prefix sum: `x[l] <- x[0] + ... + x[l]` (wrapping).
    #[inline]
    pub fn apply<W: Word>(&self, x: &mut [W]) {
        debug_assert_eq!(x.len(), self.lanes);
        for level in &self.levels {
            for span in level {
                let v = x[span.src];
                for d in &mut x[span.dst.clone()] {
                    *d = d.add(v);
                }
            }
        }
    }
}
