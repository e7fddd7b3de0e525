//! Standard normal draws for the membrane-noise loop: a 256-layer ziggurat
//! fed by one xoshiro256++ generator per neuron.
//!
//! Each 64-bit draw of a lane is split into two 32-bit words that serve two
//! consecutive requests of that lane. In a word the low 8 bits pick the layer
//! and the top 23 bits give the signed abscissa. The fast path runs in f32 on
//! eight lanes at once; rejected points are resolved in f64.

use rand::RngCore;
use std::sync::LazyLock;

const LAYERS: usize = 256;
const R: f64 = 3.6541528853610088;
const V: f64 = 4.92867323399e-3;

pub struct Ziggurat {
    x: [f64; LAYERS + 1],
    ratio: [f64; LAYERS],
    /// f32 bits of x (low half) and of the ratio rounded down (high half).
    pair: [u64; LAYERS],
}

static TABLE: LazyLock<Ziggurat> = LazyLock::new(|| {
    let mut x = [0.0; LAYERS + 1];
    let mut f = (-0.5 * R * R).exp();
    x[0] = V / f;
    x[1] = R;
    for i in 2..LAYERS {
        x[i] = (-2.0 * (V / x[i - 1] + f).ln()).sqrt();
        f = (-0.5 * x[i] * x[i]).exp();
    }
    x[LAYERS] = 0.0;
    let mut ratio = [0.0; LAYERS];
    let mut pair = [0; LAYERS];
    for i in 0..LAYERS {
        ratio[i] = x[i + 1] / x[i];
        // Rounding the ratio down keeps the f32 fast path inside the exact
        // rectangle; the f64 slow path accepts the sliver in between.
        let mut r32 = ratio[i] as f32;
        if r32 as f64 > ratio[i] {
            r32 = f32::from_bits(r32.to_bits() - 1);
        }
        pair[i] = (x[i] as f32).to_bits() as u64 | ((r32.to_bits() as u64) << 32);
    }
    Ziggurat { x, ratio, pair }
});

#[inline(always)]
fn mantissa(w: u32) -> f32 {
    f32::from_bits((w >> 9) | 0x3f80_0000)
}

impl Ziggurat {
    pub fn get() -> &'static Ziggurat {
        &TABLE
    }

    #[inline(always)]
    fn fast(&self, w: u32) -> (f32, bool) {
        let p = self.pair[(w & 0xff) as usize];
        let u = 2.0 * mantissa(w) - 3.0;
        (u * f32::from_bits(p as u32), u.abs() < f32::from_bits((p >> 32) as u32))
    }

    /// Finish a draw whose word missed the f32 fast path.
    #[cold]
    fn resolve(&self, mut w: u32, mut next: impl FnMut() -> u64) -> f64 {
        let unit = |b: u64| ((b >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        loop {
            let i = (w & 0xff) as usize;
            let u = 2.0 * mantissa(w) as f64 - 3.0;
            if u.abs() < self.ratio[i] {
                return u * self.x[i];
            }
            if i == 0 {
                // tail beyond R
                loop {
                    let x = unit(next()).ln() / R;
                    let y = unit(next()).ln();
                    if -2.0 * y >= x * x {
                        return if u < 0.0 { x - R } else { R - x };
                    }
                }
            }
            let x = u * self.x[i];
            let f0 = (-0.5 * (self.x[i] * self.x[i] - x * x)).exp();
            let f1 = (-0.5 * (self.x[i + 1] * self.x[i + 1] - x * x)).exp();
            if f1 + unit(next()) * (f0 - f1) < 1.0 {
                return x;
            }
            w = next() as u32;
        }
    }

    /// One draw from an arbitrary generator (uses the low word of each
    /// 64-bit output).
    pub fn sample<Rn: RngCore + ?Sized>(&self, rng: &mut Rn) -> f64 {
        let w = rng.next_u64() as u32;
        match self.fast(w) {
            (z, true) => z as f64,
            _ => self.resolve(w, || rng.next_u64()),
        }
    }
}

/// `L` independent xoshiro256++ generators, stored lane-wise, each producing
/// one standard normal per [`NormalBank::fill`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBank<const L: usize> {
    s: [[u64; L]; 4],
    /// Draws from the high words of the last step, served next.
    stash: [f64; L],
    stashed: bool,
    avx2: bool,
}

impl<const L: usize> NormalBank<L> {
    /// `seed(lane)` gives the 256-bit state of each lane (not all zero).
    pub fn new(mut seed: impl FnMut(usize) -> [u64; 4]) -> Self {
        assert!(L <= 64);
        let mut s = [[0; L]; 4];
        for lane in 0..L {
            let st = seed(lane);
            assert!(st.iter().any(|&w| w != 0), "xoshiro state must not be all zero");
            for k in 0..4 {
                s[k][lane] = st[k];
            }
        }
        #[cfg(target_arch = "x86_64")]
        let avx2 = L % 8 == 0 && std::arch::is_x86_feature_detected!("avx2");
        #[cfg(not(target_arch = "x86_64"))]
        let avx2 = false;
        NormalBank {
            s,
            stash: [0.0; L],
            stashed: false,
            avx2,
        }
    }

    #[inline(always)]
    fn next_lane(&mut self, n: usize) -> u64 {
        let [s0, s1, s2, s3] = [self.s[0][n], self.s[1][n], self.s[2][n], self.s[3][n]];
        let out = s0.wrapping_add(s3).rotate_left(23).wrapping_add(s0);
        let t = s1 << 17;
        let s2 = s2 ^ s0;
        let s3 = s3 ^ s1;
        let s1 = s1 ^ s2;
        let s0 = s0 ^ s3;
        let s2 = s2 ^ t;
        let s3 = s3.rotate_left(45);
        self.s[0][n] = s0;
        self.s[1][n] = s1;
        self.s[2][n] = s2;
        self.s[3][n] = s3;
        out
    }

    /// Raw 64-bit output of lane `n`.
    pub fn next_u64(&mut self, n: usize) -> u64 {
        self.next_lane(n)
    }

    /// One standard normal per lane.
    #[inline]
    pub fn fill(&mut self, out: &mut [f64; L]) {
        if self.stashed {
            *out = self.stash;
            self.stashed = false;
            return;
        }
        let mut words = [0u64; L];
        let mut hi = [0.0; L];
        #[cfg(target_arch = "x86_64")]
        let (miss_lo, miss_hi) = if self.avx2 {
            // SAFETY: the feature was detected at construction.
            unsafe { self.fast_avx2(&mut words, out, &mut hi) }
        } else {
            self.fast_scalar(&mut words, out, &mut hi)
        };
        #[cfg(not(target_arch = "x86_64"))]
        let (miss_lo, miss_hi) = self.fast_scalar(&mut words, out, &mut hi);
        if miss_lo | miss_hi != 0 {
            self.resolve_misses(miss_lo, &words, out, 0);
            self.resolve_misses(miss_hi, &words, &mut hi, 32);
        }
        self.stash = hi;
        self.stashed = true;
    }

    #[cold]
    fn resolve_misses(&mut self, mut mask: u64, words: &[u64; L], out: &mut [f64; L], shift: u32) {
        let zig = Ziggurat::get();
        while mask != 0 {
            let n = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            out[n] = zig.resolve((words[n] >> shift) as u32, || self.next_lane(n));
        }
    }

    fn fast_scalar(&mut self, words: &mut [u64; L], lo: &mut [f64; L], hi: &mut [f64; L]) -> (u64, u64) {
        let zig = Ziggurat::get();
        let (mut miss_lo, mut miss_hi) = (0u64, 0u64);
        for n in 0..L {
            words[n] = self.next_lane(n);
            let (z, ok) = zig.fast(words[n] as u32);
            lo[n] = z as f64;
            miss_lo |= (!ok as u64) << n;
            let (z, ok) = zig.fast((words[n] >> 32) as u32);
            hi[n] = z as f64;
            miss_hi |= (!ok as u64) << n;
        }
        (miss_lo, miss_hi)
    }

    /// Same results as `fast_scalar`, eight lanes at a time.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn fast_avx2(&mut self, words: &mut [u64; L], lo: &mut [f64; L], hi: &mut [f64; L]) -> (u64, u64) {
        use std::arch::x86_64::*;
        let zig = Ziggurat::get();
        let (mut miss_lo, mut miss_hi) = (0u64, 0u64);
        // Macros rather than closures: closures do not inherit the target feature.
        macro_rules! rotl {
            ($x:expr, $k:literal) => {
                _mm256_or_si256(_mm256_slli_epi64::<$k>($x), _mm256_srli_epi64::<{ 64 - $k }>($x))
            };
        }
        macro_rules! step4 {
            ($c:expr) => {{
                let base = self.s.as_mut_ptr();
                macro_rules! p {
                    ($k:expr) => {
                        (*base.add($k)).as_mut_ptr().add($c) as *mut __m256i
                    };
                }
                let (mut s0, mut s1, mut s2, mut s3) = (
                    _mm256_loadu_si256(p!(0)),
                    _mm256_loadu_si256(p!(1)),
                    _mm256_loadu_si256(p!(2)),
                    _mm256_loadu_si256(p!(3)),
                );
                let r = _mm256_add_epi64(rotl!(_mm256_add_epi64(s0, s3), 23), s0);
                let t = _mm256_slli_epi64::<17>(s1);
                s2 = _mm256_xor_si256(s2, s0);
                s3 = _mm256_xor_si256(s3, s1);
                s1 = _mm256_xor_si256(s1, s2);
                s0 = _mm256_xor_si256(s0, s3);
                s2 = _mm256_xor_si256(s2, t);
                s3 = rotl!(s3, 45);
                _mm256_storeu_si256(p!(0), s0);
                _mm256_storeu_si256(p!(1), s1);
                _mm256_storeu_si256(p!(2), s2);
                _mm256_storeu_si256(p!(3), s3);
                _mm256_storeu_si256(words.as_mut_ptr().add($c) as *mut __m256i, r);
                r
            }};
        }
        macro_rules! normals8 {
            ($w:expr, $out:expr, $c:expr) => {{
                let w = $w;
                let mut ix = [0u32; 8];
                _mm256_storeu_si256(ix.as_mut_ptr() as *mut __m256i, _mm256_and_si256(w, _mm256_set1_epi32(0xff)));
                // Scalar loads: vgather is microcoded and slow on CPUs with
                // the gather-data-sampling mitigation.
                let e = |k: usize| zig.pair[ix[k] as usize & 0xff] as i64;
                let q0 = _mm_set_epi64x(e(1), e(0));
                let q1 = _mm_set_epi64x(e(3), e(2));
                let q2 = _mm_set_epi64x(e(5), e(4));
                let q3 = _mm_set_epi64x(e(7), e(6));
                let a = _mm256_castsi256_ps(_mm256_inserti128_si256::<1>(_mm256_castsi128_si256(q0), q2));
                let b = _mm256_castsi256_ps(_mm256_inserti128_si256::<1>(_mm256_castsi128_si256(q1), q3));
                let x = _mm256_shuffle_ps::<0x88>(a, b);
                let ratio = _mm256_shuffle_ps::<0xdd>(a, b);
                let m = _mm256_or_si256(_mm256_srli_epi32::<9>(w), _mm256_set1_epi32(0x3f80_0000));
                let u = _mm256_sub_ps(_mm256_mul_ps(_mm256_set1_ps(2.0), _mm256_castsi256_ps(m)), _mm256_set1_ps(3.0));
                let z = _mm256_mul_ps(u, x);
                let ok = _mm256_cmp_ps::<_CMP_LT_OQ>(_mm256_andnot_ps(_mm256_set1_ps(-0.0), u), ratio);
                _mm256_storeu_pd($out.as_mut_ptr().add($c), _mm256_cvtps_pd(_mm256_castps256_ps128(z)));
                _mm256_storeu_pd($out.as_mut_ptr().add($c + 4), _mm256_cvtps_pd(_mm256_extractf128_ps::<1>(z)));
                ((!_mm256_movemask_ps(ok)) & 0xff) as u64
            }};
        }
        for c in (0..L).step_by(8) {
            let a = _mm256_castsi256_ps(step4!(c));
            let b = _mm256_castsi256_ps(step4!(c + 4));
            // low and high 32-bit words of the eight lanes, in lane order
            let w_lo = _mm256_permute4x64_epi64::<0xd8>(_mm256_castps_si256(_mm256_shuffle_ps::<0x88>(a, b)));
            let w_hi = _mm256_permute4x64_epi64::<0xd8>(_mm256_castps_si256(_mm256_shuffle_ps::<0xdd>(a, b)));
            miss_lo |= normals8!(w_lo, lo, c) << c;
            miss_hi |= normals8!(w_hi, hi, c) << c;
        }
        (miss_lo, miss_hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn ks_distance(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let normal = Normal::standard();
        v.iter()
            .enumerate()
            .map(|(k, &x)| {
                let c = normal.cdf(x);
                (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    fn moments(v: &[f64]) -> (f64, f64, f64) {
        let n = v.len() as f64;
        let m1 = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| x * x).sum::<f64>() / n;
        let m4 = v.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        (m1, m2, m4)
    }

    fn bank_draws(lanes_seed: u64, steps: usize) -> Vec<[f64; 32]> {
        let mut bank = NormalBank::<32>::new(|n| [lanes_seed + n as u64, 2, 3, 4]);
        let mut out = [0.0; 32];
        (0..steps)
            .map(|_| {
                bank.fill(&mut out);
                out
            })
            .collect()
    }

    #[test]
    fn scalar_sampler_moments() {
        let z = Ziggurat::get();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let v: Vec<f64> = (0..2_000_000).map(|_| z.sample(&mut rng)).collect();
        let (m1, m2, m4) = moments(&v);
        assert!(m1.abs() < 4.0 / (v.len() as f64).sqrt());
        assert!((m2 - 1.0).abs() < 0.005);
        assert!((m4 - 3.0).abs() < 0.03);
    }

    #[test]
    fn scalar_sampler_matches_normal_cdf() {
        let z = Ziggurat::get();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let n = 200_000;
        let d = ks_distance((0..n).map(|_| z.sample(&mut rng)).collect());
        // 1.63/sqrt(n) is the 1% critical value
        assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn bank_output_is_standard_normal() {
        let draws = bank_draws(17, 20_000);
        let all: Vec<f64> = draws.iter().flatten().copied().collect();
        let (m1, m2, m4) = moments(&all);
        assert!(m1.abs() < 4.0 / (all.len() as f64).sqrt());
        assert!((m2 - 1.0).abs() < 0.005);
        assert!((m4 - 3.0).abs() < 0.03);
        let d = ks_distance(all.iter().step_by(3).copied().collect());
        assert!(d < 1.63 / ((all.len() / 3) as f64).sqrt(), "KS distance {d}");
        // consecutive draws of one lane come from the two halves of one word
        let lane: Vec<(f64, f64)> = draws.windows(2).map(|w| (w[0][5], w[1][5])).collect();
        let n = lane.len() as f64;
        let corr = lane.iter().map(|(a, b)| a * b).sum::<f64>() / n;
        assert!(corr.abs() < 4.0 / n.sqrt(), "lag-1 correlation {corr}");
    }

    #[test]
    fn tails_are_populated() {
        let all: Vec<f64> = bank_draws(3, 125_000).into_iter().flatten().collect();
        let beyond = all.iter().filter(|z| z.abs() > R).count() as f64 / all.len() as f64;
        // P(|Z| > 3.6542) = 2.58e-4
        assert!((beyond - 2.58e-4).abs() < 0.4e-4, "{beyond}");
    }

    #[test]
    fn lane_generators_are_xoshiro256pp() {
        let states: Vec<[u64; 4]> = (0..8u64).map(|k| [k + 1, 3 * k + 7, k ^ 0xdead, 99]).collect();
        let mut bank = NormalBank::<8>::new(|n| states[n]);
        for (n, st) in states.iter().enumerate() {
            let mut seed = [0u8; 32];
            for k in 0..4 {
                seed[8 * k..8 * k + 8].copy_from_slice(&st[k].to_le_bytes());
            }
            let mut reference = Xoshiro256PlusPlus::from_seed(seed);
            for _ in 0..100 {
                assert_eq!(bank.next_u64(n), reference.next_u64());
            }
        }
    }

    #[test]
    fn vector_and_scalar_paths_agree() {
        let mut a = NormalBank::<32>::new(|n| [n as u64 + 1, 2, 3, 4]);
        let mut b = a.clone();
        b.avx2 = false;
        let (mut x, mut y) = ([0.0; 32], [0.0; 32]);
        for _ in 0..50_000 {
            a.fill(&mut x);
            b.fill(&mut y);
            assert_eq!(x, y);
        }
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn lanes_are_independent() {
        let mut a = NormalBank::<32>::new(|n| [n as u64 + 1, 2, 3, 4]);
        let mut b = NormalBank::<32>::new(|n| if n == 9 { [10, 2, 3, 4] } else { [n as u64 + 100, 7, 7, 7] });
        let (mut x, mut y) = ([0.0; 32], [0.0; 32]);
        for _ in 0..10_000 {
            a.fill(&mut x);
            b.fill(&mut y);
            assert_eq!(x[9], y[9]);
        }
    }
}
