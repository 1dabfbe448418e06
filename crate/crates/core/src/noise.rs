//! Two-sided Brownian increments with absolute grid indexing.
//!
//! Every increment is a pure function of `(master_seed, stream_id, cell,
//! component)`: the 64-bit key is pushed through the SplitMix64 finalizer,
//! the top 53 bits become a uniform in the open interval (0, 1), and the
//! uniform is mapped to a standard normal by Wichura's AS241 inverse normal
//! CDF (relative accuracy about 1e-16). Both steps use only IEEE
//! arithmetic plus `ln`/`sqrt`, so a given key yields the same bits on every
//! platform and regardless of which thread asks for it.

use crate::error::{invalid, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD1B5_4A32_D192_ED03;
const COMPONENT_MUL: u64 = 0xAEF1_7502_108E_F2D9;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in (0, 1) from the top 53 bits; never returns 0 or 1.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse of the standard normal CDF (Wichura 1988, algorithm AS241 PPND16).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_700) * r
                + 45921.953_931_549_871)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545_5 * r + 28729.085_735_721_943) * r + 39307.895_800_092_710) * r
                + 21213.794_301_586_595)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_91)
                * r
                + 42.313_330_701_600_911)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414_1e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_61) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_344_9e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_100_05)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4) * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_3)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_132_6e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_81)
                * r
                + 0.599_832_206_555_887_94)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// A reproducible sample path of `W` on the grid `{k dt : k in Z}`.
///
/// Two sources with equal `(master_seed, stream_id, n, dt)` and the same
/// shift/coarsening produce bit-identical increments; that equality is what
/// "the same omega" means for common-noise ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementSource {
    master_seed: u64,
    stream_id: u64,
    n: usize,
    dt: f64,
    offset: i64,
    aggregate: u32,
    key: u64,
}

impl IncrementSource {
    pub fn new(master_seed: u64, stream_id: u64, n: usize, dt: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "noise dimension must be at least 1"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("need finite dt > 0, got {dt}")));
        }
        let key = mix64(mix64(master_seed ^ GOLDEN) ^ stream_id.wrapping_mul(STREAM_MUL));
        Ok(Self { master_seed, stream_id, n, dt, offset: 0, aggregate: 1, key })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Standard normal attached to base cell `cell`, component `j`.
    #[inline]
    fn base_normal(&self, cell: i64, j: usize) -> f64 {
        let counter = mix64(self.key.wrapping_add((cell as u64).wrapping_mul(GOLDEN)));
        let bits = mix64(counter ^ (j as u64 + 1).wrapping_mul(COMPONENT_MUL));
        normal_quantile(open_unit(bits))
    }

    /// Writes the increment `W((k+1) dt) - W(k dt)` into `out[..n]`.
    #[inline]
    pub fn fill_increment(&self, k: i64, out: &mut [f64]) {
        let out = &mut out[..self.n];
        let shifted = k.wrapping_add(self.offset);
        if self.aggregate == 1 {
            let scale = self.dt.sqrt();
            for (j, o) in out.iter_mut().enumerate() {
                *o = scale * self.base_normal(shifted, j);
            }
        } else {
            let m = self.aggregate as i64;
            let scale = (self.dt / m as f64).sqrt();
            for (j, o) in out.iter_mut().enumerate() {
                let mut sum = 0.0;
                for i in 0..m {
                    sum += scale * self.base_normal(shifted.wrapping_mul(m).wrapping_add(i), j);
                }
                *o = sum;
            }
        }
    }

    pub fn increment(&self, k: i64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.fill_increment(k, &mut out);
        out
    }

    /// The shifted path `theta_s omega`: `shift(s).increment(k) == increment(k + s)`.
    pub fn shift(&self, s_cells: i64) -> Self {
        Self { offset: self.offset.wrapping_add(s_cells), ..*self }
    }

    /// The same Brownian path sampled on a grid `factor` times coarser: each
    /// coarse increment is the sum of the `factor` fine increments it covers.
    /// Only defined on unshifted sources.
    pub fn coarsened(&self, factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("factor", "coarsening factor must be >= 1"));
        }
        if self.offset != 0 {
            return Err(invalid("factor", "coarsen before shifting"));
        }
        Ok(Self { dt: self.dt * factor as f64, aggregate: self.aggregate * factor, ..*self })
    }
}
