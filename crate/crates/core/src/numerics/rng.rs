//! Seeded, stream-addressable random number generation.
//!
//! A stream is addressed by (seed, stream_id). The same address always
//! yields the same draw sequence, regardless of what any other stream has
//! consumed, so parallel code derives one child stream per unit of work
//! and the thread count never changes results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// A deterministic random stream addressed by (seed, stream_id).
#[derive(Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// Child stream at a fixed label. Independent of how far this stream
    /// has been consumed: derivation only reads the (seed, stream_id) address.
    pub fn derive(&self, label: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream_id ^ splitmix64(label)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Fisher-Yates shuffle of indices 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

/// Draws p i.i.d. N(mean, std^2) entries. std = 0 returns the constant
/// mean vector without consuming any draws.
pub fn gaussian_vector(rng: &mut RngStream, p: usize, mean: f64, std: f64) -> Result<ParamVector> {
    if std < 0.0 {
        return Err(Error::Contract(format!("negative std {std}")));
    }
    if std == 0.0 {
        return Ok(ParamVector::constant(p, mean));
    }
    let values = (0..p).map(|_| mean + std * rng.normal()).collect();
    Ok(ParamVector::from_vec(values))
}
