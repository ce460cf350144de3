//! RNG handles: an OS-backed source for live keys and a seedable ChaCha
//! stream for simulations and tests. Handles are not shared; every task
//! gets its own.

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Cryptographically strong source for live key material.
pub fn crypto_rng() -> OsRng {
    OsRng
}

/// Deterministic rng for a master seed.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent deterministic stream derived from a master seed. Streams
/// with different ids never overlap, which lets per-entity work proceed in
/// any order without disturbing reproducibility.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Test-only rng that feeds a fixed byte forever; deliberately biased so
/// statistical canary tests have something to reject.
pub struct ConstantRng(pub u8);

impl RngCore for ConstantRng {
    fn next_u32(&mut self) -> u32 {
        u32::from_ne_bytes([self.0; 4])
    }

    fn next_u64(&mut self) -> u64 {
        u64::from_ne_bytes([self.0; 8])
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        dest.fill(self.0);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
