//! Portable multiplicative congruential generator with jump-ahead substreams.
//!
//! `state' = multiplier * state mod modulus`, uniforms are `state' / modulus`.
//! The default constants (modulus `2^31 - 1`, multiplier `630360016`) are the
//! classic portable FORTRAN generator family. Stream `k` of a seed starts
//! `k * STREAM_JUMP` steps ahead of stream 0, so streams are disjoint as long
//! as no stream draws more than `STREAM_JUMP` values.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_MODULUS: u64 = 2_147_483_647;
pub const DEFAULT_MULTIPLIER: u64 = 630_360_016;
pub const STREAM_JUMP: u64 = 100_000;

/// Generator constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lcg {
    pub multiplier: u64,
    pub modulus: u64,
}

impl Default for Lcg {
    fn default() -> Self {
        Self { multiplier: DEFAULT_MULTIPLIER, modulus: DEFAULT_MODULUS }
    }
}

impl Lcg {
    pub fn new(multiplier: u64, modulus: u64) -> Result<Self> {
        let lcg = Self { multiplier, modulus };
        lcg.validate()?;
        Ok(lcg)
    }

    /// Constants keep the state inside `[1, modulus - 1]` only when the
    /// multiplier is a unit modulo `modulus`; products must fit in `u64`.
    pub fn validate(&self) -> Result<()> {
        if self.modulus < 3 || self.modulus > u32::MAX as u64 {
            return Err(Error::invalid(format!("rng.modulus must be in [3, 2^32 - 1], got {}", self.modulus)));
        }
        if self.multiplier < 2 || self.multiplier >= self.modulus {
            return Err(Error::invalid(format!("rng.multiplier must be in [2, modulus - 1], got {}", self.multiplier)));
        }
        if gcd(self.multiplier, self.modulus) != 1 {
            return Err(Error::invalid("rng.multiplier must be coprime to rng.modulus"));
        }
        Ok(())
    }

    /// `multiplier^exp mod modulus`.
    pub fn power(&self, mut exp: u64) -> u64 {
        let m = self.modulus;
        let mut base = self.multiplier % m;
        let mut acc = 1 % m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        acc
    }

    pub fn stream(&self, seed: u64, stream_id: u64) -> Result<RandomStream> {
        self.validate()?;
        if seed == 0 || seed >= self.modulus {
            return Err(Error::invalid(format!("seed must be in [1, {}], got {seed}", self.modulus - 1)));
        }
        if gcd(seed, self.modulus) != 1 {
            return Err(Error::invalid("seed must be coprime to rng.modulus"));
        }
        // The exponent is reduced modulo nothing: `power` handles any u64.
        let jump = self.power(stream_id.wrapping_mul(STREAM_JUMP));
        Ok(RandomStream { lcg: *self, state: jump * seed % self.modulus, stream_id })
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(seed, stream_id)` pair identifying a deterministic substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream_id: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child key `slot` (0..4) of this key. Keys from different parents never
    /// collide.
    pub fn child(&self, slot: u64) -> Self {
        debug_assert!(slot < 4);
        Self { seed: self.seed, stream_id: self.stream_id * 4 + slot }
    }
}

/// Single-owner generator state. Not shared between tasks: hand each worker
/// its own stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    lcg: Lcg,
    state: u64,
    stream_id: u64,
}

/// Stream with the default constants.
pub fn new_stream(seed: u64, stream_id: u64) -> Result<RandomStream> {
    Lcg::default().stream(seed, stream_id)
}

impl RandomStream {
    pub fn from_key(lcg: &Lcg, key: StreamKey) -> Result<Self> {
        lcg.stream(key.seed, key.stream_id)
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform deviate strictly inside (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.state = self.lcg.multiplier * self.state % self.lcg.modulus;
        self.state as f64 / self.lcg.modulus as f64
    }

    /// Standard normal deviate by inversion; consumes exactly one uniform.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }
}

/// Standard normal quantile, Wichura's AS 241 (PPND16). Relative accuracy is
/// about 1e-16 over (0, 1).
#[allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability out of (0,1): {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 1.242_660_947_388_078_4e-3) * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}
