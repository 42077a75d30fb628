//! Counter-based deterministic Gaussian streams.
//!
//! Every draw is a pure function of `(seed, stream_id, counter)`, so chains
//! can be advanced particle-by-particle in any order and still reproduce
//! bit-identical trajectories. Synchronous coupling reuses a stream by
//! constructing a second instance with the same fields.

/// A deterministic stream of standard-normal draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// Resume a stream at an explicit counter position.
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    fn keyed(&self, lane: u64) -> u64 {
        // Feed the triple through two rounds of the splitmix finalizer so
        // nearby (stream, counter) keys decorrelate.
        let mut z = self
            .seed
            .wrapping_mul(0xA076_1D64_78BD_642F)
            .wrapping_add(0x9E37_79B9_7F4A_7C15);
        z ^= mix64(self.stream_id.wrapping_add(0xE703_7ED1_A0B4_28DB));
        z = mix64(z);
        z ^= mix64(lane.wrapping_add(0x8EBC_6AF0_9C88_C6E3));
        mix64(z)
    }

    /// Next raw 64-bit word; advances the counter.
    pub fn next_u64(&mut self) -> u64 {
        let w = self.keyed(self.counter << 1);
        self.counter += 1;
        w
    }

    /// Uniform draw in (0, 1]; advances the counter.
    pub fn next_unit(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let bits = self.next_u64() >> 11;
        (bits as f64 + 1.0) * SCALE
    }

    /// One standard-normal draw via Box-Muller; consumes one counter tick
    /// and never reuses bits between draws.
    pub fn standard_normal(&mut self) -> f64 {
        let lane = self.counter << 1;
        let u1 = ((self.keyed(lane) >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (self.keyed(lane | 1) >> 11) as f64 / (1u64 << 53) as f64;
        self.counter += 1;
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fill `out` with independent standard normals.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
