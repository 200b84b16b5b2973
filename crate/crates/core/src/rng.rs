//! Seeded, splittable random streams.
//!
//! Every experiment owns one root seed. Independent consumers (truth generation,
//! sensing matrix, noise, ensemble initialization) draw from named child streams so
//! that adding a consumer never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type SekiRng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for the child stream `name`.
    pub fn fork(&self, name: &str) -> SekiRng {
        let mut rng = SekiRng::seed_from_u64(self.seed);
        rng.set_stream(stream_id(name));
        rng
    }

    /// Child seed stream, for nesting (e.g. one stream per `rho` value).
    pub fn child(&self, name: &str) -> SeedStream {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        SeedStream {
            seed: u64::from_le_bytes(bytes),
        }
    }
}

fn stream_id(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
