//! Counter-based random numbers for reproducible parallel Monte Carlo.
//!
//! Every Gaussian increment is a pure function of
//! `(master seed, replicate, stream, step, cell)`, so replicate scheduling,
//! worker count and window tracking cannot change a single draw. The block
//! cipher is Philox4x32-10; one block yields one standard normal via
//! Box-Muller.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mul_hi_lo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox 4x32 keyed permutation, 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mul_hi_lo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mul_hi_lo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

/// One replicate's noise source. Distinct `stream` values give independent
/// noise for coupled fields sharing a replicate (lower field uses stream 0,
/// increment field stream 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    replicate: u32,
    stream: u32,
}

impl NoiseStream {
    pub fn new(seed: u64, replicate: u32, stream: u32) -> Self {
        assert!(
            stream < 16,
            "stream ids share a counter word with draw indices"
        );
        Self {
            seed,
            replicate,
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u32 {
        self.replicate
    }

    pub fn stream(&self) -> u32 {
        self.stream
    }

    #[inline]
    fn block(&self, step: u32, cell: u32, draw: u32) -> [u32; 4] {
        // The stream id occupies the low bits of the fourth counter word and
        // the within-cell draw index the rest; streams stay below 16.
        philox4x32_10(
            [cell, step, self.replicate, self.stream | (draw << 4)],
            [self.seed as u32, (self.seed >> 32) as u32],
        )
    }

    /// Standard normal draw for a (time step, grid cell) pair.
    ///
    /// The cell index is the global grid index, not window-relative, so the
    /// draw does not depend on how far the support has spread.
    #[inline]
    pub fn normal(&self, step: u32, cell: u32) -> f64 {
        normal_from_block(self.block(step, cell, 0))
    }

    /// Sequential draws for one (step, cell) update that needs more than a
    /// single variate (the small-mass branching sampler).
    pub fn cell_rng(&self, step: u32, cell: u32) -> CellRng {
        CellRng {
            stream: *self,
            step,
            cell,
            draw: 1,
        }
    }
}

#[inline]
fn normal_from_block(bits: [u32; 4]) -> f64 {
    let a = (u64::from(bits[0]) << 32) | u64::from(bits[1]);
    let b = (u64::from(bits[2]) << 32) | u64::from(bits[3]);
    // u1 in (0,1] keeps the log finite; u2 in [0,1).
    let u1 = ((a >> 11) as f64 + 1.0) * INV_2_53;
    let u2 = (b >> 11) as f64 * INV_2_53;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Counter-based draw sequence scoped to one (step, cell) update. Draw 0 is
/// the plain `normal` slot, so these start at index 1.
pub struct CellRng {
    stream: NoiseStream,
    step: u32,
    cell: u32,
    draw: u32,
}

impl CellRng {
    #[inline]
    fn next_block(&mut self) -> [u32; 4] {
        let b = self.stream.block(self.step, self.cell, self.draw);
        self.draw += 1;
        b
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let bits = self.next_block();
        let a = (u64::from(bits[0]) << 32) | u64::from(bits[1]);
        ((a >> 11) as f64 + 0.5) * INV_2_53
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        normal_from_block(self.next_block())
    }
}
