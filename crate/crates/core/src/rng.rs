//! Philox4x32-10 counter-based generator.
//!
//! Every random draw in the crate is a pure function of a 64-bit key and a
//! 128-bit counter, so values can be regenerated in any order and on any
//! thread without carrying generator state around.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Stream tags kept in the high half of the third counter word so that
/// Brownian increments, initial samples and validation draws never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Brownian = 1,
    Initial = 2,
    Validation = 3,
    Quadrature = 4,
}

/// Keyed counter-based source of uniforms and normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: [seed as u32, (seed >> 32) as u32] }
    }

    #[inline]
    fn block(&self, domain: Domain, a: u32, b: u32, c: u16) -> [u32; 4] {
        philox4x32([a, b, (c as u32) | ((domain as u32) << 16), 0], self.key)
    }

    /// Two uniforms in (0, 1] for the slot (a, b, c) of a domain.
    #[inline]
    pub fn uniforms(&self, domain: Domain, a: u32, b: u32, c: u16) -> (f64, f64) {
        let w = self.block(domain, a, b, c);
        let x = ((w[0] as u64) << 32) | w[1] as u64;
        let y = ((w[2] as u64) << 32) | w[3] as u64;
        (unit_open_closed(x), unit_open_closed(y))
    }

    /// Standard normal via Box-Muller (cosine branch) for the slot (a, b, c).
    #[inline]
    pub fn normal(&self, domain: Domain, a: u32, b: u32, c: u16) -> f64 {
        let (u1, u2) = self.uniforms(domain, a, b, c);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[inline]
fn unit_open_closed(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// SplitMix64 finalizer, used to derive per-replication seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 library.
    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0, 0, 0, 0], [0, 0]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(philox4x32([u32::MAX; 4], [u32::MAX; 2]), [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]);
        assert_eq!(
            philox4x32([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn uniforms_stay_in_unit_interval() {
        let rng = CounterRng::new(7);
        for i in 0..10_000 {
            let (u, v) = rng.uniforms(Domain::Brownian, i, 3, 0);
            assert!(u > 0.0 && u <= 1.0 && v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn domains_are_distinct_streams() {
        let rng = CounterRng::new(1);
        assert_ne!(rng.normal(Domain::Brownian, 0, 0, 0), rng.normal(Domain::Initial, 0, 0, 0));
    }
}
