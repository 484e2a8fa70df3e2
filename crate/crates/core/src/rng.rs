//! Labeled, reproducible random streams.
//!
//! Every stochastic step of the simulator draws from its own stream, keyed
//! by the run seed and a role label such as `"station1.polarizer/chunk-3"`.
//! A stream is a ChaCha8 keystream whose key is the SHA-256 digest of the
//! seed and label, so the output depends only on `(seed, label)` and not on
//! platform, thread count or the order in which streams are created.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"eprb-stream/v1";

/// 2^-53
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// A source of uniform variates on the open interval (0, 1).
///
/// The simulator's operations are generic over this trait so that tests can
/// feed scripted values.
pub trait UniformSource {
    fn uniform(&mut self) -> f64;
}

impl<U: UniformSource + ?Sized> UniformSource for &mut U {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
}

/// Deterministic random stream derived from `(seed, label)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
    label: String,
}

/// Derives the stream for `label` under `seed`. Pure: equal inputs give
/// streams with identical output.
pub fn derive_stream(seed: u64, label: &str) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    RngStream {
        inner: ChaCha8Rng::from_seed(key),
        label: label.to_owned(),
    }
}

impl RngStream {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl UniformSource for RngStream {
    /// Midpoint of one of 2^53 equal cells of (0, 1); never 0.0 or 1.0.
    #[inline]
    fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }
}

/// Replays a fixed list of variates, then panics. For tests and examples
/// that need to pin individual draws.
#[derive(Clone, Debug)]
pub struct ScriptedUniforms {
    values: Vec<f64>,
    next: usize,
}

impl ScriptedUniforms {
    pub fn new(values: impl Into<Vec<f64>>) -> Self {
        ScriptedUniforms {
            values: values.into(),
            next: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl UniformSource for ScriptedUniforms {
    fn uniform(&mut self) -> f64 {
        let v = *self.values.get(self.next).expect("scripted uniform source exhausted");
        self.next += 1;
        v
    }
}
