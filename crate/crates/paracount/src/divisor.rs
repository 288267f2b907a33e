//! Divisor-sum machinery for the error analysis: sigma(j), d(j), the
//! truncated divisor sum g(j), the superpolynomial envelope f(j) for d(j),
//! the resonance parameters (q, H, Delta), and the diagnostic sums I, I1,
//! I2 built from `min(2b, 1/dist(2 alpha j / a))`.
//!
//! Membership decisions (j < bH, j >= b, which branch the min takes) are
//! made in exact arithmetic; only the final accumulation is floating point.
//! Per-query functions use trial division; range workloads go through a
//! smallest-prime-factor sieve built once and read concurrently.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::counting::CountingInstance;
use crate::expsum::Kahan;
use crate::kernel::strict_upper_int;
use crate::rat::{big_ratio_to_f64, Rat};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DivisorError {
    #[error("divisor envelope f(j) requires j >= 3, got {j}")]
    EnvelopeDomain { j: f64 },
}

/// Sum of all positive divisors of j, by trial division to sqrt(j).
pub fn sigma(j: u64) -> u64 {
    assert!(j >= 1);
    factored_sigma(&trial_factorize(j))
}

/// The divisor-count function d(j).
pub fn num_divisors(j: u64) -> u64 {
    assert!(j >= 1);
    trial_factorize(j).iter().map(|&(_, e)| e as u64 + 1).product()
}

/// All positive divisors of j, ascending.
pub fn divisors(j: u64) -> Vec<u64> {
    assert!(j >= 1);
    let mut divs = divisors_from_factors(&trial_factorize(j));
    divs.sort_unstable();
    divs
}

/// g(j) = sum of divisors h of j with h < b (strict), for rational b > 1.
pub fn g_trunc(j: u64, b: &Rat) -> u64 {
    assert!(j >= 1);
    let cap = divisor_cap(b);
    divisors_from_factors(&trial_factorize(j))
        .into_iter()
        .filter(|&h| h <= cap)
        .sum()
}

/// Largest integer strictly below b, clamped to >= 0.
fn divisor_cap(b: &Rat) -> u64 {
    let cap = strict_upper_int(b.numer(), b.denom());
    if cap.is_negative() {
        0
    } else {
        cap.to_u64().unwrap_or(u64::MAX)
    }
}

/// The envelope f(j) = exp((1 + eps) ln 2 log j / log log j) that dominates
/// the divisor function; natural logarithms, domain j >= 3.
pub fn divisor_envelope_f(j: f64, epsilon: f64) -> Result<f64, DivisorError> {
    if !(j >= 3.0) {
        return Err(DivisorError::EnvelopeDomain { j });
    }
    let lj = j.ln();
    Ok(((1.0 + epsilon) * std::f64::consts::LN_2 * lj / lj.ln()).exp())
}

fn trial_factorize(mut j: u64) -> Vec<(u64, u32)> {
    let mut factors = Vec::new();
    let mut p = 2u64;
    while p * p <= j {
        if j % p == 0 {
            let mut e = 0u32;
            while j % p == 0 {
                j /= p;
                e += 1;
            }
            factors.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if j > 1 {
        factors.push((j, 1));
    }
    factors
}

fn factored_sigma(factors: &[(u64, u32)]) -> u64 {
    factors
        .iter()
        .map(|&(p, e)| {
            let mut term = 1u64;
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                term += pk;
            }
            term
        })
        .product()
}

fn divisors_from_factors(factors: &[(u64, u32)]) -> Vec<u64> {
    let mut divs = vec![1u64];
    for &(p, e) in factors {
        let prev = divs.len();
        let mut pk = 1u64;
        for _ in 0..e {
            pk *= p;
            for i in 0..prev {
                divs.push(divs[i] * pk);
            }
        }
    }
    divs
}

/// Smallest-prime-factor table for batch divisor work. Construction is
/// single-threaded; lookups take `&self` and are safe to share.
pub struct SpfSieve {
    spf: Vec<u32>,
}

impl SpfSieve {
    pub fn new(limit: u64) -> Self {
        assert!(limit <= u32::MAX as u64, "sieve limit exceeds u32 range");
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut i = 2usize;
        while i * i <= n {
            if spf[i] == 0 {
                let mut k = i * i;
                while k <= n {
                    if spf[k] == 0 {
                        spf[k] = i as u32;
                    }
                    k += i;
                }
            }
            i += 1;
        }
        SpfSieve { spf }
    }

    pub fn limit(&self) -> u64 {
        (self.spf.len() - 1) as u64
    }

    pub fn factorize(&self, mut j: u64) -> Vec<(u64, u32)> {
        assert!(1 <= j && j <= self.limit());
        let mut factors = Vec::new();
        while j > 1 {
            let p = match self.spf[j as usize] {
                0 => j,
                p => p as u64,
            };
            let mut e = 0u32;
            while j % p == 0 {
                j /= p;
                e += 1;
            }
            factors.push((p, e));
        }
        factors
    }

    pub fn sigma(&self, j: u64) -> u64 {
        factored_sigma(&self.factorize(j))
    }

    pub fn num_divisors(&self, j: u64) -> u64 {
        self.factorize(j).iter().map(|&(_, e)| e as u64 + 1).product()
    }

    pub fn divisors(&self, j: u64) -> Vec<u64> {
        divisors_from_factors(&self.factorize(j))
    }

    /// g(j) truncated at the precomputed integer cap (largest integer < b).
    fn g_capped(&self, j: u64, cap: u64) -> u64 {
        if j <= cap {
            return self.sigma(j);
        }
        self.divisors(j).into_iter().filter(|&h| h <= cap).sum()
    }
}

/// The tuning parameters of the error analysis for one instance:
/// q = a/(2 alpha), the harmonic cutoff H = floor(2 sqrt(a) b / (a+b)), and
/// the envelope cap Delta = max(b^2 sqrt(a)/(a+b), 3).
#[derive(Debug, Clone)]
pub struct ProofParameters {
    pub q: Rat,
    pub h_cutoff: u64,
    pub delta_cap: f64,
}

impl ProofParameters {
    pub fn from_instance(inst: &CountingInstance) -> Self {
        let q = inst.a() / (Rat::from(2) * inst.parabola().alpha());
        let h_cutoff = paper_h(inst.a(), inst.b());
        ProofParameters {
            q,
            h_cutoff,
            delta_cap: inst.delta_cap(),
        }
    }
}

/// H = floor(2 sqrt(a) b/(a+b)) decided in exact integer arithmetic: H is
/// the unique integer with H^2 (a+b)^2 <= 4 a b^2 < (H+1)^2 (a+b)^2, which
/// after clearing denominators is an integer square-root comparison. This
/// avoids float misrounding at floor edges (for integer a = b it lands
/// exactly on floor(sqrt(a))).
pub fn paper_h(a: &Rat, b: &Rat) -> u64 {
    let sum = a + b;
    let x = (Rat::from(4) * a * b * b) / (&sum * &sum);
    debug_assert!(x.is_positive());
    // floor(sqrt(n/d)) = floor(floor(sqrt(n d)) / d)
    let nd = x.numer() * x.denom();
    let h = nd.sqrt().div_floor(x.denom());
    let h = h.to_u64().expect("H fits in u64 for supported a, b");
    debug_assert!({
        let hb = Rat::from(h);
        let hb1 = Rat::from(h + 1);
        &hb * &hb * &sum * &sum <= Rat::from(4) * a * b * b
            && Rat::from(4) * a * b * b < &hb1 * &hb1 * &sum * &sum
    });
    h
}

/// The three diagnostic sums in one pass over j (one sieve build, one
/// min-term evaluation per j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ISums {
    pub i: f64,
    pub i1: f64,
    pub i2: f64,
}

impl ISums {
    pub fn compute(inst: &CountingInstance, h_cutoff: u64) -> Self {
        assert!(h_cutoff >= 1, "H must be positive");
        let b = inst.b();
        let bh = b * Rat::from(h_cutoff);
        let j_end = upper_exclusive(&bh); // largest j < bH
        let b_start = b.numer().div_ceil(b.denom()).to_u64().unwrap_or(u64::MAX); // smallest j >= b
        let cap = divisor_cap(b);
        let two_b = Rat::from(2) * b;

        let mut i_acc = Kahan::new();
        let mut i1_acc = Kahan::new();
        let mut i2_acc = Kahan::new();
        if j_end == 0 {
            return ISums { i: 0.0, i1: 0.0, i2: 0.0 };
        }
        let sieve = SpfSieve::new(j_end);
        let min_term = MinTerm::new(inst, &two_b, j_end);
        for j in 1..=j_end {
            let min = min_term.at(j);
            let g = sieve.g_capped(j, cap);
            i_acc.add(min * g as f64 / j as f64);
            if j < b_start {
                i1_acc.add(min);
            } else {
                i2_acc.add(min / j as f64);
            }
        }
        ISums {
            i: i_acc.total(),
            i1: i1_acc.total(),
            i2: i2_acc.total(),
        }
    }
}

/// I = sum_{1<=j<bH} min(2b, dist(2 alpha j/a)^{-1}) g(j)/j, with exact
/// membership and exact min decisions; dist = 0 takes the 2b branch (the
/// min against +infinity).
pub fn i_sum(inst: &CountingInstance, h_cutoff: u64) -> f64 {
    ISums::compute(inst, h_cutoff).i
}

/// I1 = sum_{1<=j<b} min(2b, dist(2 alpha j/a)^{-1}).
pub fn i1_sum(inst: &CountingInstance) -> f64 {
    let b = inst.b();
    let j_end = upper_exclusive(b);
    if j_end == 0 {
        return 0.0;
    }
    let two_b = Rat::from(2) * b;
    let min_term = MinTerm::new(inst, &two_b, j_end);
    let mut acc = Kahan::new();
    for j in 1..=j_end {
        acc.add(min_term.at(j));
    }
    acc.total()
}

/// I2 = sum_{b<=j<bH} min(2b, dist(2 alpha j/a)^{-1}) / j.
pub fn i2_sum(inst: &CountingInstance, h_cutoff: u64) -> f64 {
    assert!(h_cutoff >= 1, "H must be positive");
    let b = inst.b();
    let bh = b * Rat::from(h_cutoff);
    let j_end = upper_exclusive(&bh);
    let b_start = b.numer().div_ceil(b.denom()).to_u64().unwrap_or(u64::MAX);
    if j_end == 0 || b_start > j_end {
        return 0.0;
    }
    let two_b = Rat::from(2) * b;
    let min_term = MinTerm::new(inst, &two_b, j_end);
    let mut acc = Kahan::new();
    for j in b_start..=j_end {
        acc.add(min_term.at(j) / j as f64);
    }
    acc.total()
}

fn upper_exclusive(bound: &Rat) -> u64 {
    let t = strict_upper_int(bound.numer(), bound.denom());
    if t.is_negative() {
        0
    } else {
        t.to_u64().unwrap_or(u64::MAX)
    }
}

/// Evaluates min(2b, dist(j p/q)^{-1}) with exact branch decisions, in
/// machine integers when every product fits and big integers otherwise.
struct MinTerm {
    two_b_f: f64,
    small: Option<MinTermSmall>,
    big: MinTermBig,
}

struct MinTermSmall {
    p: i128,
    q: i128,
    two_b_num: i128,
    two_b_den: i128,
}

struct MinTermBig {
    p: BigInt,
    q: BigInt,
    two_b_num: BigInt,
    two_b_den: BigInt,
}

impl MinTerm {
    fn new(inst: &CountingInstance, two_b: &Rat, j_max: u64) -> Self {
        let u = Rat::from(2) * inst.parabola().alpha() / inst.a();
        let big = MinTermBig {
            p: u.numer().clone(),
            q: u.denom().clone(),
            two_b_num: two_b.numer().clone(),
            two_b_den: two_b.denom().clone(),
        };
        let limit = BigInt::from(i128::MAX / 4);
        let fits = big.p.abs() * BigInt::from(j_max) < limit
            && &big.two_b_num * &big.q < limit
            && &big.two_b_den * &big.q < limit;
        let small = if fits {
            Some(MinTermSmall {
                p: big.p.to_i128().unwrap(),
                q: big.q.to_i128().unwrap(),
                two_b_num: big.two_b_num.to_i128().unwrap(),
                two_b_den: big.two_b_den.to_i128().unwrap(),
            })
        } else {
            None
        };
        MinTerm {
            two_b_f: two_b.to_f64(),
            small,
            big,
        }
    }

    fn at(&self, j: u64) -> f64 {
        match &self.small {
            Some(s) => {
                let r = (s.p * j as i128).rem_euclid(s.q);
                let dmin = r.min(s.q - r);
                // dist = dmin/q; 1/dist >= 2b  <=>  q * two_b_den >= two_b_num * dmin
                if dmin == 0 || s.q * s.two_b_den >= s.two_b_num * dmin {
                    self.two_b_f
                } else {
                    s.q as f64 / dmin as f64
                }
            }
            None => {
                let r = (&self.big.p * BigInt::from(j)).mod_floor(&self.big.q);
                let dmin = (&self.big.q - &r).min(r);
                if dmin.is_zero()
                    || &self.big.q * &self.big.two_b_den >= &self.big.two_b_num * &dmin
                {
                    self.two_b_f
                } else {
                    big_ratio_to_f64(&self.big.q, &dmin)
                }
            }
        }
    }
}
