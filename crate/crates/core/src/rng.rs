//! Seeded SplitMix64 generator.
//!
//! Every stochastic routine in the crate takes an explicit `&mut Rng`, so a run
//! is reproduced bit-for-bit by its seed. The stream is SplitMix64: the state
//! advances by the golden-gamma constant and each output is the state passed
//! through the Stafford "mix13" finalizer.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SPLIT_SALT: u64 = 0xd1b5_4a32_d192_ed03;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Independent child stream; advances the parent by one draw.
    pub fn split(&mut self) -> Rng {
        let seed = mix64(self.next_u64() ^ SPLIT_SALT);
        Rng::new(seed)
    }

    /// Child stream keyed by `key`, derived without advancing the parent.
    /// Used where work is farmed out per index (domains, seeds, cells).
    pub fn stream(&self, key: u64) -> Rng {
        let seed =
            mix64(mix64(self.state ^ SPLIT_SALT).wrapping_add(key.wrapping_mul(GOLDEN_GAMMA)));
        Rng::new(seed)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via the Box–Muller transform; the second variate of
    /// each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Categorical draw from nonnegative weights that sum to (roughly) one.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.next_f64() * total;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if u < w {
                    return i;
                }
                u -= w;
                last_positive = i;
            }
        }
        last_positive
    }
}
