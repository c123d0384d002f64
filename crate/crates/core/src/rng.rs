//! Deterministic, splittable random streams.
//!
//! Every participant and every channel element draws from its own ChaCha8
//! stream, keyed by the run seed and a [`StreamId`]. Each round additionally
//! starts at a fixed word offset inside the stream, so the draws a party makes
//! in round `r` never depend on how many draws anyone made in earlier rounds.
//! Adding an eavesdropper or a lossy link therefore leaves the honest parties'
//! randomness untouched.
//!
//! Not cryptographically meaningful: this drives a simulation only.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Direction, Link};

/// 32-bit words reserved per round inside a stream (8192 `f64` draws).
const WORDS_PER_ROUND: u128 = 1 << 14;

/// Label of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamId {
    Alice,
    Bob1,
    Bob2,
    /// Element `index` of the channel stack, on one link and pass direction.
    Channel {
        index: u16,
        link: Link,
        direction: Direction,
    },
    /// Auxiliary draws made by the harness (e.g. random test messages).
    Harness,
}

impl StreamId {
    /// Stable numeric identifier fed to ChaCha's stream selector.
    pub fn as_u64(self) -> u64 {
        match self {
            StreamId::Alice => 1,
            StreamId::Bob1 => 2,
            StreamId::Bob2 => 3,
            StreamId::Harness => 4,
            StreamId::Channel {
                index,
                link,
                direction,
            } => {
                let link = match link {
                    Link::ToBob1 => 0,
                    Link::ToBob2 => 1,
                };
                let dir = match direction {
                    Direction::Forward => 0,
                    Direction::Backward => 1,
                    Direction::Both => 2,
                };
                0x1_0000 | (u64::from(index) << 4) | (link << 2) | dir
            }
        }
    }
}

/// A single-owner pseudorandom stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Stream positioned at the start of its sequence.
    pub fn new(seed: u64, stream_id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id.as_u64());
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream positioned at the block reserved for `round_id`.
    pub fn for_round(seed: u64, stream_id: StreamId, round_id: u64) -> Self {
        let mut stream = Self::new(seed, stream_id);
        stream
            .rng
            .set_word_pos(u128::from(round_id) * WORDS_PER_ROUND);
        stream
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> StreamId {
        self.stream_id
    }

    /// One uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Fair coin, one draw.
    pub fn coin(&mut self) -> bool {
        self.uniform() < 0.5
    }

    /// Uniform index in `0..n`, one draw.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Bernoulli trial with success probability `p`, one draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_configuration_repeats() {
        let mut a = RngStream::new(42, StreamId::Alice);
        let mut b = RngStream::new(42, StreamId::Alice);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, StreamId::Bob1);
        let mut b = RngStream::new(42, StreamId::Bob2);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn rounds_are_independent_of_prior_consumption() {
        let mut r3 = RngStream::for_round(7, StreamId::Alice, 3);
        let first = r3.next_u64();
        let mut r2 = RngStream::for_round(7, StreamId::Alice, 2);
        for _ in 0..5 {
            r2.next_u64();
        }
        let mut again = RngStream::for_round(7, StreamId::Alice, 3);
        assert_eq!(first, again.next_u64());
    }

    #[test]
    fn channel_ids_are_distinct() {
        let mut ids = std::collections::HashSet::new();
        for index in 0..4 {
            for link in [Link::ToBob1, Link::ToBob2] {
                for direction in [Direction::Forward, Direction::Backward, Direction::Both] {
                    assert!(ids.insert(
                        StreamId::Channel {
                            index,
                            link,
                            direction
                        }
                        .as_u64()
                    ));
                }
            }
        }
        for id in [StreamId::Alice, StreamId::Bob1, StreamId::Bob2, StreamId::Harness] {
            assert!(ids.insert(id.as_u64()));
        }
    }

    #[test]
    fn index_is_in_range() {
        let mut s = RngStream::new(1, StreamId::Harness);
        for _ in 0..10_000 {
            assert!(s.index(9) < 9);
        }
    }
}
