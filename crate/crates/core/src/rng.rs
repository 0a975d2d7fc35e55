//! Counter-based seeding: every random stream is derived from
//! (master seed, cell index, stream id) so replication cells are
//! independent and individually reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream identifiers used by the harness. Keeping them named avoids
/// accidental stream collisions between dataset generation and chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Design = 1,
    Truth = 2,
    Noise = 3,
    Chain = 4,
    Aux = 5,
}

/// Derive a generator from the (master, cell, stream) triple.
pub fn derive(master: u64, cell: u64, stream: Stream) -> ChaCha12Rng {
    derive_raw(master, cell, stream as u64)
}

/// Raw form for callers that need more than the named streams.
pub fn derive_raw(master: u64, cell: u64, stream: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&cell.to_le_bytes());
    seed[16..24].copy_from_slice(&stream.to_le_bytes());
    // Constant tag so a zero triple is still a non-trivial seed.
    seed[24..32].copy_from_slice(&0x5eed_cafe_f00d_babe_u64.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn deterministic_and_distinct() {
        let mut a = derive(7, 3, Stream::Chain);
        let mut b = derive(7, 3, Stream::Chain);
        let mut c = derive(7, 3, Stream::Noise);
        let xa: u64 = a.gen();
        let xb: u64 = b.gen();
        let xc: u64 = c.gen();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }
}
