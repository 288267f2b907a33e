//! Quadratic exponential sums S(h) = sum_x e(h f(x)) and everything built
//! from their moduli: the Vaaler bound on the psi-sum, the Erdos-Turan
//! bound on the discrepancy, and the Weyl-differenced second moment.
//!
//! Phases are reduced mod 1 in exact rational arithmetic before the single
//! transcendental evaluation per term; h*f(x) routinely exceeds 2^60, where
//! a direct floating-point phase retains no positional information mod 1.
//! The [`PhaseMode::Direct`] path exists to demonstrate that failure.
//!
//! Complex values are pairs of doubles accumulated in input order with
//! compensated summation; the error budget is O(x_max * ulp) and all
//! comparisons involving these sums are tolerance-based, never bit-exact.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::counting::CountingInstance;
use crate::kernel::strict_upper_int;
use crate::rat::{big_ratio_to_f64, Rat};

/// How the phase h*f(x) is turned into a point on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// Reduce h*f(x) mod 1 exactly, then evaluate one sin/cos pair.
    ExactReduced,
    /// Evaluate h*f(x) in double precision and exponentiate as-is. Loses
    /// the phase entirely once h*f(x) is large; kept for regression tests.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("discrepancy window must satisfy xi < eta < xi + 1, got xi = {xi}, eta = {eta}")]
    Invalid { xi: Rat, eta: Rat },
}

/// The values S(1), ..., S(H) for one instance.
#[derive(Debug, Clone)]
pub struct ExpSumSeries {
    x_max: u64,
    phase_mode: PhaseMode,
    values: Vec<Complex64>,
}

impl ExpSumSeries {
    /// Computes S(h) for h = 1..=h_max.
    pub fn compute(inst: &CountingInstance, h_max: u64, phase_mode: PhaseMode) -> Self {
        assert!(h_max >= 1, "h_max must be positive");
        let values: Vec<Complex64> = (1..=h_max)
            .map(|h| exp_sum_with_mode(inst, h, phase_mode))
            .collect();
        let slack = inst.x_max() as f64 + 1e-6;
        debug_assert!(values.iter().all(|s| s.norm() <= slack));
        ExpSumSeries {
            x_max: inst.x_max(),
            phase_mode,
            values,
        }
    }

    pub fn h_max(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn x_max(&self) -> u64 {
        self.x_max
    }

    pub fn phase_mode(&self) -> PhaseMode {
        self.phase_mode
    }

    /// S(h) for 1 <= h <= h_max.
    pub fn s(&self, h: u64) -> Complex64 {
        self.values[(h - 1) as usize]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Serializes as an array of [re, im] pairs.
impl Serialize for ExpSumSeries {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.values.len()))?;
        for v in &self.values {
            seq.serialize_element(&[v.re, v.im])?;
        }
        seq.end()
    }
}

/// S(h) = sum_{x=1}^{floor(b)} e(h f(x)) with exact phase reduction.
pub fn exp_sum(inst: &CountingInstance, h: u64) -> Complex64 {
    exp_sum_with_mode(inst, h, PhaseMode::ExactReduced)
}

pub fn exp_sum_with_mode(inst: &CountingInstance, h: u64, mode: PhaseMode) -> Complex64 {
    assert!(h >= 1, "h must be positive");
    let mut acc = KahanComplex::new();
    match mode {
        PhaseMode::ExactReduced => {
            inst.kernel()
                .for_each_phase(h, 1, inst.x_max(), |t| acc.add(e_unit(t)));
        }
        PhaseMode::Direct => {
            let alpha = inst.parabola().alpha().to_f64();
            let beta = inst.parabola().beta().to_f64();
            let gamma = inst.parabola().gamma().to_f64();
            let a = inst.a().to_f64();
            let hf = h as f64;
            for x in 1..=inst.x_max() {
                let xf = x as f64;
                let phase = hf * (alpha * xf * xf / a + beta * xf + gamma * a);
                let (sin, cos) = (std::f64::consts::TAU * phase).sin_cos();
                acc.add(Complex64::new(cos, sin));
            }
        }
    }
    acc.total()
}

/// The Vaaler bound `x_max/(2H+2) + (1 + 1/pi) sum_{h<=H} |S(h)|/h`; an
/// upper bound for |psi_sum| for every H >= 1.
pub fn vaaler_bound(inst: &CountingInstance, h_max: u64) -> f64 {
    vaaler_bound_from(&ExpSumSeries::compute(inst, h_max, PhaseMode::ExactReduced))
}

pub fn vaaler_bound_from(series: &ExpSumSeries) -> f64 {
    vaaler_bound_prefix(series, series.h_max())
}

/// The Vaaler bound truncated to the first `h_max` terms of a longer
/// series, so one series serves a whole sweep of H values.
pub fn vaaler_bound_prefix(series: &ExpSumSeries, h_max: u64) -> f64 {
    series.x_max() as f64 / (2.0 * h_max as f64 + 2.0)
        + (1.0 + 1.0 / std::f64::consts::PI) * weighted_modulus_prefix(series, h_max)
}

/// The Erdos-Turan bound `x_max/(H+1) + 3 sum_{h<=H} |S(h)|/h`; an upper
/// bound for |D(N; xi, eta)| for every H >= 1.
pub fn erdos_turan_bound(inst: &CountingInstance, h_max: u64) -> f64 {
    erdos_turan_bound_from(&ExpSumSeries::compute(inst, h_max, PhaseMode::ExactReduced))
}

pub fn erdos_turan_bound_from(series: &ExpSumSeries) -> f64 {
    erdos_turan_bound_prefix(series, series.h_max())
}

pub fn erdos_turan_bound_prefix(series: &ExpSumSeries, h_max: u64) -> f64 {
    series.x_max() as f64 / (h_max as f64 + 1.0) + 3.0 * weighted_modulus_prefix(series, h_max)
}

/// sum_{h<=H} |S(h)|/h, the weighted first moment shared by both bounds.
pub fn weighted_modulus_sum(series: &ExpSumSeries) -> f64 {
    weighted_modulus_prefix(series, series.h_max())
}

pub fn weighted_modulus_prefix(series: &ExpSumSeries, h_max: u64) -> f64 {
    assert!(1 <= h_max && h_max <= series.h_max(), "prefix length out of range");
    let mut acc = Kahan::new();
    for (i, s) in series.values()[..h_max as usize].iter().enumerate() {
        acc.add(s.norm() / (i + 1) as f64);
    }
    acc.total()
}

/// A window (xi, eta) mod 1 with xi < eta < xi + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscrepancyWindow {
    xi: Rat,
    eta: Rat,
}

impl DiscrepancyWindow {
    pub fn new(xi: Rat, eta: Rat) -> Result<Self, WindowError> {
        if xi < eta && eta < &xi + &Rat::one() {
            Ok(DiscrepancyWindow { xi, eta })
        } else {
            Err(WindowError::Invalid { xi, eta })
        }
    }

    /// The symmetric window (-delta, delta); membership there is exactly
    /// `dist_nearest_int < delta`.
    pub fn symmetric(delta: &Rat) -> Result<Self, WindowError> {
        DiscrepancyWindow::new(-delta, delta.clone())
    }

    pub fn xi(&self) -> &Rat {
        &self.xi
    }

    pub fn eta(&self) -> &Rat {
        &self.eta
    }

    pub fn width(&self) -> Rat {
        &self.eta - &self.xi
    }
}

/// Z(N; xi, eta): how many of f(1), ..., f(x_max) fall in the open window
/// (xi, eta) mod 1. Membership is decided in exact rational arithmetic;
/// both endpoints are excluded.
pub fn z_count(inst: &CountingInstance, window: &DiscrepancyWindow) -> u64 {
    // u in (xi, eta) mod 1  <=>  0 < frac(u - xi) < eta - xi.
    let shifted = inst.kernel().offset_by(window.xi());
    let width = window.width();
    let tmax = strict_upper_int(&(width.numer() * shifted.denom()), width.denom());
    shifted.count_low_open(1, inst.x_max(), &tmax)
}

/// D(N; xi, eta) = Z(N; xi, eta) - (eta - xi) N with N = x_max, computed
/// exactly and rounded once at the end.
pub fn discrepancy(inst: &CountingInstance, window: &DiscrepancyWindow) -> f64 {
    let z = z_count(inst, window);
    (Rat::from(z) - window.width() * Rat::from(inst.x_max())).to_f64()
}

/// sum_{h<=H} |S(h)|^2 / h.
pub fn second_moment_lhs(inst: &CountingInstance, h_max: u64) -> f64 {
    second_moment_lhs_from(&ExpSumSeries::compute(inst, h_max, PhaseMode::ExactReduced))
}

pub fn second_moment_lhs_from(series: &ExpSumSeries) -> f64 {
    second_moment_lhs_prefix(series, series.h_max())
}

pub fn second_moment_lhs_prefix(series: &ExpSumSeries, h_max: u64) -> f64 {
    assert!(1 <= h_max && h_max <= series.h_max(), "prefix length out of range");
    let mut acc = Kahan::new();
    for (i, s) in series.values()[..h_max as usize].iter().enumerate() {
        acc.add(s.norm_sqr() / (i + 1) as f64);
    }
    acc.total()
}

/// The Weyl-differenced form of the second moment:
///
/// sum_{h<=H} (1/h) sum_{|l|<x_max} e(h(alpha l^2/a + beta l))
///                  sum_{1<=y, y+l<=x_max} e(2 alpha h l y / a)
///
/// evaluated with exact phase reduction and the closed-form geometric inner
/// sum. Equal to [`second_moment_lhs`] up to float error; the imaginary
/// residual must stay below 1e-9 * (1 + |result|).
pub fn second_moment_weyl(inst: &CountingInstance, h_max: u64) -> f64 {
    let total = second_moment_weyl_complex(inst, h_max);
    debug_assert!(total.im.abs() < 1e-9 * (1.0 + total.re.abs()));
    total.re
}

pub(crate) fn second_moment_weyl_complex(inst: &CountingInstance, h_max: u64) -> Complex64 {
    assert!(h_max >= 1, "h_max must be positive");
    let ev = WeylEvaluator::new(inst, h_max);
    let mut total = KahanComplex::new();
    for h in 1..=h_max {
        total.add(ev.h_term(h) / h as f64);
    }
    total.total()
}

/// Precomputed phase data for the Weyl double sum; `h_term` evaluates the
/// inner sum over shifts for one h.
pub(crate) struct WeylEvaluator {
    m: u64,
    ca: BigInt,
    cb: BigInt,
    d2: BigInt,
    p: BigInt,
    q: BigInt,
    fast: Option<WeylFast>,
}

impl WeylEvaluator {
    /// `h_max` is the largest h this evaluator will be asked for; the
    /// machine-word fast path is enabled only if every product up to that
    /// multiplier fits.
    pub fn new(inst: &CountingInstance, h_max: u64) -> Self {
        let m = inst.x_max();
        // Shift phase e(h(v l^2 + w l)) with v = alpha/a, w = beta, over the
        // common denominator d2: numerator ca l^2 + cb l.
        let v = inst.parabola().alpha() / inst.a();
        let w = inst.parabola().beta();
        let d2: BigInt = v.denom().lcm(w.denom());
        let ca = v.numer() * (&d2 / v.denom());
        let cb = w.numer() * (&d2 / w.denom());
        // Geometric ratio theta = u * h * l with u = 2 alpha / a = p/q.
        let u = Rat::from(2) * &v;
        let (p, q) = (u.numer().clone(), u.denom().clone());
        let fast = WeylFast::try_new(&ca, &cb, &d2, &p, &q, m, h_max);
        WeylEvaluator { m, ca, cb, d2, p, q, fast }
    }

    pub fn h_term(&self, h: u64) -> Complex64 {
        let m = self.m;
        let mut inner = KahanComplex::new();
        for l in -(m as i64 - 1)..=(m as i64 - 1) {
            let n = m - l.unsigned_abs();
            let shift_k = (-l).max(0) as u64;
            let term = match &self.fast {
                Some(f) => f.term(h, l, n, shift_k),
                None => weyl_term_big(
                    &self.ca, &self.cb, &self.d2, &self.p, &self.q, h, l, n, shift_k,
                ),
            };
            inner.add(term);
        }
        inner.total()
    }
}

/// i128 mirror of the Weyl-sum phase arithmetic, used whenever every
/// intermediate product provably fits.
struct WeylFast {
    ca: i128,
    cb: i128,
    d2: i128,
    p: i128,
    q: i128,
}

impl WeylFast {
    #[allow(clippy::too_many_arguments)]
    fn try_new(
        ca: &BigInt,
        cb: &BigInt,
        d2: &BigInt,
        p: &BigInt,
        q: &BigInt,
        m: u64,
        h_max: u64,
    ) -> Option<Self> {
        let limit = BigInt::from(i128::MAX / 8);
        let mb = BigInt::from(m);
        let hb = BigInt::from(h_max);
        // |h (ca l^2 + cb l)| and |p h l (n+1)| at their extremes.
        let shift_bound = &hb * (ca.abs() * &mb * &mb + cb.abs() * &mb);
        let theta_bound = p.abs() * &hb * &mb * (&mb + 1);
        if shift_bound > limit || theta_bound > limit || *d2 > limit || BigInt::from(2) * q > limit
        {
            return None;
        }
        Some(WeylFast {
            ca: ca.to_i128()?,
            cb: cb.to_i128()?,
            d2: d2.to_i128()?,
            p: p.to_i128()?,
            q: q.to_i128()?,
        })
    }

    fn term(&self, h: u64, l: i64, n: u64, shift_k: u64) -> Complex64 {
        let h = h as i128;
        let l = l as i128;
        let shift_num = h * (self.ca * l * l + self.cb * l);
        let e_shift = e_unit(mod_ratio_i128(shift_num, self.d2));
        let t = self.p * h * l;
        let geom = if t.rem_euclid(self.q) == 0 {
            Complex64::new(n as f64, 0.0)
        } else {
            let q2 = 2 * self.q;
            let centre = e_unit(mod_ratio_i128(t * (n as i128 + 1), q2));
            let s_n = sinpi_ratio_i128((t * n as i128).rem_euclid(q2), self.q);
            let s_1 = sinpi_ratio_i128(t.rem_euclid(q2), self.q);
            centre * (s_n / s_1)
        };
        if shift_k == 0 {
            e_shift * geom
        } else {
            e_shift * e_unit(mod_ratio_i128(t * shift_k as i128, self.q)) * geom
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn weyl_term_big(
    ca: &BigInt,
    cb: &BigInt,
    d2: &BigInt,
    p: &BigInt,
    q: &BigInt,
    h: u64,
    l: i64,
    n: u64,
    shift_k: u64,
) -> Complex64 {
    let h = BigInt::from(h);
    let l = BigInt::from(l);
    let shift_num = &h * (ca * &l * &l + cb * &l);
    let e_shift = e_unit(big_ratio_to_f64(&shift_num.mod_floor(d2), d2));
    let t = p * &h * &l;
    let geom = if t.mod_floor(q).is_zero() {
        Complex64::new(n as f64, 0.0)
    } else {
        let q2 = BigInt::from(2) * q;
        let centre_num = (&t * BigInt::from(n + 1)).mod_floor(&q2);
        let centre = e_unit(big_ratio_to_f64(&centre_num, &q2));
        let s_n = sinpi_ratio_big(&(&t * BigInt::from(n)).mod_floor(&q2), q);
        let s_1 = sinpi_ratio_big(&t.mod_floor(&q2), q);
        centre * (s_n / s_1)
    };
    if shift_k == 0 {
        e_shift * geom
    } else {
        let shift = (&t * BigInt::from(shift_k)).mod_floor(q);
        e_shift * e_unit(big_ratio_to_f64(&shift, q)) * geom
    }
}

/// sum_{y=1}^{n} e(theta y), via the closed form n when theta is an integer
/// (decided exactly) and e(theta (n+1)/2) sin(pi n theta)/sin(pi theta)
/// otherwise — the centred rearrangement of e(theta)(e(n theta) - 1)/
/// (e(theta) - 1), which stays accurate when theta is near an integer.
pub fn geometric_inner_sum(theta: &Rat, n: u64) -> Complex64 {
    assert!(n >= 1, "n must be positive");
    if theta.is_integer() {
        return Complex64::new(n as f64, 0.0);
    }
    let centre = e_frac(&(theta * Rat::new(n as i64 + 1, 2)));
    let s_n = sinpi_rat(&(theta * Rat::from(n)));
    let s_1 = sinpi_rat(theta);
    centre * (s_n / s_1)
}

/// Agreement test for the two second-moment routes at 1e-9 relative
/// tolerance. Both sides are sums of x_max-sized magnitudes, so when they
/// cancel below unit scale the difference is float noise; the unit floor
/// keeps the comparison meaningful there.
pub fn second_moments_agree(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0)
}

/// e(t) for t reduced to [0, 1). A fraction within half an ulp of 1 rounds
/// to exactly 1.0 in the conversion; fold it back to 0.
fn e_unit(t: f64) -> Complex64 {
    let t = if t >= 1.0 { t - 1.0 } else { t };
    debug_assert!((0.0..1.0).contains(&t));
    let (sin, cos) = (std::f64::consts::TAU * t).sin_cos();
    Complex64::new(cos, sin)
}

/// e(frac(t)) with the reduction done in exact arithmetic.
fn e_frac(t: &Rat) -> Complex64 {
    e_unit(t.frac().to_f64())
}

/// sin(pi t) with t reduced mod 2 exactly and folded into [0, 1/2], so the
/// result keeps full relative accuracy near the zeros.
fn sinpi_rat(t: &Rat) -> f64 {
    let two = Rat::from(2);
    let v = t - &(two.clone() * Rat::from_int((t / &two).floor_int()));
    // v in [0, 2)
    let (sign, mut u) = if v >= Rat::one() {
        (-1.0, v - Rat::one())
    } else {
        (1.0, v)
    };
    if u > Rat::one_half() {
        u = Rat::one() - u;
    }
    sign * (std::f64::consts::PI * u.to_f64()).sin()
}

/// sin(pi v/q) for 0 <= v < 2q, folded for accuracy.
fn sinpi_ratio_i128(v: i128, q: i128) -> f64 {
    debug_assert!((0..2 * q).contains(&v));
    let (sign, mut u) = if v >= q { (-1.0, v - q) } else { (1.0, v) };
    if 2 * u > q {
        u = q - u;
    }
    sign * (std::f64::consts::PI * (u as f64 / q as f64)).sin()
}

fn sinpi_ratio_big(v: &BigInt, q: &BigInt) -> f64 {
    let (sign, mut u) = if v >= q { (-1.0, v - q) } else { (1.0, v.clone()) };
    if BigInt::from(2) * &u > *q {
        u = q - u;
    }
    sign * (std::f64::consts::PI * big_ratio_to_f64(&u, q)).sin()
}

fn mod_ratio_i128(num: i128, den: i128) -> f64 {
    num.rem_euclid(den) as f64 / den as f64
}

/// Neumaier-compensated scalar accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Kahan::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanComplex {
    re: Kahan,
    im: Kahan,
}

impl KahanComplex {
    pub fn new() -> Self {
        KahanComplex::default()
    }

    pub fn add(&mut self, v: Complex64) {
        self.re.add(v.re);
        self.im.add(v.im);
    }

    pub fn total(&self) -> Complex64 {
        Complex64::new(self.re.total(), self.im.total())
    }
}
