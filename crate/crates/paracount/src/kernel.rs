//! Exact evaluation engine for quadratic integer-part sums.
//!
//! A counting instance induces f(x) = (c2 x^2 + c1 x + c0)/d with integer
//! coefficients and d > 0. Every floor, fractional-part and nearest-integer
//! decision depends only on the residue N(x) mod d, and the residue walks
//! forward with an add-only recurrence: N(x+1) - N(x) is linear in x, so one
//! step costs two additions and two conditional subtractions, no division.
//! Residues stay in machine words whenever d fits in an `i128` (they are
//! reduced mod d at block entry), with a big-integer walker as fallback.
//!
//! Block sums combine by exact integer addition, so serial and
//! block-partitioned evaluation are bit-identical by construction.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::rat::{big_ratio_to_f64, Rat};

/// f(x) = (c2 x^2 + c1 x + c0) / d with d > 0.
#[derive(Clone, Debug)]
pub(crate) struct PolyKernel {
    c2: BigInt,
    c1: BigInt,
    c0: BigInt,
    d: BigInt,
    d_small: Option<i128>,
}

impl PolyKernel {
    /// Kernel for f(x) = r2 x^2 + r1 x + r0 over the common denominator.
    pub fn from_coeffs(r2: &Rat, r1: &Rat, r0: &Rat) -> Self {
        let d = r2.denom().lcm(r1.denom()).lcm(r0.denom());
        let c2 = r2.numer() * (&d / r2.denom());
        let c1 = r1.numer() * (&d / r1.denom());
        let c0 = r0.numer() * (&d / r0.denom());
        let d_small = d.to_i128();
        PolyKernel { c2, c1, c0, d, d_small }
    }

    /// Kernel for f(x) - xi.
    pub fn offset_by(&self, xi: &Rat) -> Self {
        let d = self.d.lcm(xi.denom());
        let scale = &d / &self.d;
        let c2 = &self.c2 * &scale;
        let c1 = &self.c1 * &scale;
        let c0 = &self.c0 * &scale - xi.numer() * (&d / xi.denom());
        let d_small = d.to_i128();
        PolyKernel { c2, c1, c0, d, d_small }
    }

    pub fn denom(&self) -> &BigInt {
        &self.d
    }

    pub fn value_num_at(&self, x: u64) -> BigInt {
        let x = BigInt::from(x);
        (&self.c2 * &x + &self.c1) * &x + &self.c0
    }

    pub fn value_at(&self, x: u64) -> Rat {
        Rat::new(self.value_num_at(x), self.d.clone())
    }

    /// Sum of the numerator polynomial over `lo..=hi`, by the closed-form
    /// power sums (no loop).
    pub fn poly_sum(&self, lo: u64, hi: u64) -> BigInt {
        debug_assert!(1 <= lo && lo <= hi);
        let s1 = sum_x(hi) - sum_x(lo - 1);
        let s2 = sum_x2(hi) - sum_x2(lo - 1);
        let count = BigInt::from(hi - lo + 1);
        &self.c2 * s2 + &self.c1 * s1 + &self.c0 * count
    }

    /// Sum of N(x) mod d over `lo..=hi`.
    pub fn residue_sum(&self, lo: u64, hi: u64) -> BigInt {
        let mut total = BigInt::zero();
        match self.walker(1, lo) {
            Walk::Small { d, m, st, eps } => {
                let mut partial: u128 = 0;
                let headroom = u128::MAX - d as u128;
                walk_small(d, m, st, eps, hi - lo + 1, |r| {
                    if partial > headroom {
                        total += BigInt::from(partial);
                        partial = 0;
                    }
                    partial += r as u128;
                });
                total += BigInt::from(partial);
            }
            Walk::Big { m, st, eps } => {
                walk_big(&self.d, m, st, eps, hi - lo + 1, |r| total += r);
            }
        }
        total
    }

    /// Exact `sum floor(f(x))` over `lo..=hi`, derived as
    /// (poly_sum - residue_sum)/d with zero divisions in the loop.
    pub fn floor_sum(&self, lo: u64, hi: u64) -> BigInt {
        (self.poly_sum(lo, hi) - self.residue_sum(lo, hi)) / &self.d
    }

    /// Exact `sum psi(f(x))` over `lo..=hi`.
    pub fn psi_sum(&self, lo: u64, hi: u64) -> Rat {
        let count = BigInt::from(hi - lo + 1);
        let num = BigInt::from(2) * self.residue_sum(lo, hi) - count * &self.d;
        Rat::new(num, BigInt::from(2) * &self.d)
    }

    /// Counts x in `lo..=hi` with `min(r, d-r) <= tmax` where r = N(x) mod d.
    /// The caller encodes a strict rational threshold as an inclusive
    /// integer bound.
    pub fn count_near(&self, lo: u64, hi: u64, tmax: &BigInt) -> u64 {
        if tmax.is_negative() {
            return 0;
        }
        let mut count = 0u64;
        match self.walker(1, lo) {
            Walk::Small { d, m, st, eps } => {
                let t = tmax.to_i128().unwrap_or(i128::MAX);
                walk_small(d, m, st, eps, hi - lo + 1, |r| {
                    if r.min(d - r) <= t {
                        count += 1;
                    }
                });
            }
            Walk::Big { m, st, eps } => {
                walk_big(&self.d, m, st, eps, hi - lo + 1, |r| {
                    if (&self.d - r).min(r.clone()) <= *tmax {
                        count += 1;
                    }
                });
            }
        }
        count
    }

    /// Counts x in `lo..=hi` with `1 <= r <= tmax` where r = N(x) mod d,
    /// i.e. fractional parts in the open interval (0, (tmax+1)/d).
    pub fn count_low_open(&self, lo: u64, hi: u64, tmax: &BigInt) -> u64 {
        if tmax.is_negative() || tmax.is_zero() {
            return 0;
        }
        let mut count = 0u64;
        match self.walker(1, lo) {
            Walk::Small { d, m, st, eps } => {
                let t = tmax.to_i128().unwrap_or(i128::MAX);
                walk_small(d, m, st, eps, hi - lo + 1, |r| {
                    if r >= 1 && r <= t {
                        count += 1;
                    }
                });
            }
            Walk::Big { m, st, eps } => {
                let one = BigInt::from(1);
                walk_big(&self.d, m, st, eps, hi - lo + 1, |r| {
                    if *r >= one && r <= tmax {
                        count += 1;
                    }
                });
            }
        }
        count
    }

    /// Visits frac(h * f(x)) for x in `lo..=hi`, each reduced mod 1 in exact
    /// integer arithmetic and only then converted to `f64` in [0, 1).
    pub fn for_each_phase(&self, h: u64, lo: u64, hi: u64, mut visit: impl FnMut(f64)) {
        match self.walker(h, lo) {
            Walk::Small { d, m, st, eps } => {
                let df = d as f64;
                walk_small(d, m, st, eps, hi - lo + 1, |r| visit(r as f64 / df));
            }
            Walk::Big { m, st, eps } => {
                walk_big(&self.d, m, st, eps, hi - lo + 1, |r| {
                    visit(big_ratio_to_f64(r, &self.d))
                });
            }
        }
    }

    /// Initial residue state for the walk of h*N(x) mod d starting at x = lo.
    fn walker(&self, h: u64, lo: u64) -> Walk {
        let h = BigInt::from(h);
        let x = BigInt::from(lo);
        let m = (&h * self.value_num_at(lo)).mod_floor(&self.d);
        let st: BigInt =
            (&h * (&self.c2 * (BigInt::from(2) * &x + 1u32) + &self.c1)).mod_floor(&self.d);
        let eps = (&h * BigInt::from(2) * &self.c2).mod_floor(&self.d);
        match self.d_small {
            Some(d) => Walk::Small {
                d,
                m: m.to_i128().expect("residue < d"),
                st: st.to_i128().expect("residue < d"),
                eps: eps.to_i128().expect("residue < d"),
            },
            None => Walk::Big { m, st, eps },
        }
    }
}

enum Walk {
    Small { d: i128, m: i128, st: i128, eps: i128 },
    Big { m: BigInt, st: BigInt, eps: BigInt },
}

fn walk_small(d: i128, mut m: i128, mut st: i128, eps: i128, count: u64, mut visit: impl FnMut(i128)) {
    for _ in 0..count {
        visit(m);
        m += st;
        if m >= d {
            m -= d;
        }
        st += eps;
        if st >= d {
            st -= d;
        }
    }
}

fn walk_big(d: &BigInt, mut m: BigInt, mut st: BigInt, eps: BigInt, count: u64, mut visit: impl FnMut(&BigInt)) {
    for _ in 0..count {
        visit(&m);
        m += &st;
        if m >= *d {
            m -= d;
        }
        st += &eps;
        if st >= *d {
            st -= d;
        }
    }
}

fn sum_x(m: u64) -> BigInt {
    let m = BigInt::from(m);
    (&m * (&m + 1)) / 2
}

fn sum_x2(m: u64) -> BigInt {
    let m = BigInt::from(m);
    (&m * (&m + 1) * (BigInt::from(2) * &m + 1)) / 6
}

/// Largest integer t with t < num/den (den > 0): the inclusive bound that
/// encodes a strict rational comparison on integers.
pub(crate) fn strict_upper_int(num: &BigInt, den: &BigInt) -> BigInt {
    debug_assert!(den.is_positive());
    num.div_ceil(den) - 1
}
