//! Counter-based random streams for trajectory simulation.
//!
//! Every variate is a pure function of the key
//! `(seed, trajectory, step, channel, draw)`. Nothing is mutated, so an
//! ensemble produces bit-identical numbers no matter how trajectories are
//! scheduled across threads — the reproducibility contract the filtering and
//! Monte-Carlo layers rely on.

/// splitmix64 output mixing (Steele–Lea–Burrows finalizer).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one random stream: a trajectory/step/channel cell of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Key {
    pub seed: u64,
    pub trajectory: u64,
    pub step: u64,
    pub channel: u64,
}

impl Key {
    pub fn new(seed: u64, trajectory: u64, step: u64, channel: u64) -> Self {
        Key { seed, trajectory, step, channel }
    }

    /// 64 uniform bits for the `draw`-th variate of this stream.
    pub fn raw(&self, draw: u64) -> u64 {
        // Fold the key fields through the mixer with distinct offsets so that
        // (seed, trajectory, step, channel, draw) permutations cannot collide
        // by simple addition.
        let mut h = mix64(self.seed ^ 0x243f_6a88_85a3_08d3);
        h = mix64(h ^ self.trajectory.wrapping_mul(0x1319_8a2e_0370_7344));
        h = mix64(h ^ self.step.wrapping_mul(0xa409_3822_299f_31d0));
        h = mix64(h ^ self.channel.wrapping_mul(0x082e_fa98_ec4e_6c89));
        mix64(h ^ draw.wrapping_mul(0x4528_21e6_38d0_1377))
    }

    /// Uniform in (0, 1] (never zero, so it is safe under `ln`).
    pub fn uniform(&self, draw: u64) -> f64 {
        ((self.raw(draw) >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box–Muller; consumes uniform draws 2k and 2k+1.
    pub fn normal(&self, k: u64) -> f64 {
        let u1 = self.uniform(2 * k);
        let u2 = self.uniform(2 * k + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Bernoulli(p) using uniform draw `k` (offset from the normal draws).
    pub fn bernoulli(&self, p: f64, k: u64) -> bool {
        self.uniform(k) < p
    }
}
