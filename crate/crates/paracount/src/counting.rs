//! The two counting objects for a dilated parabola: the floor sum with its
//! smooth main term and signed error, and the count of points whose curve
//! value lies within `delta` of an integer.
//!
//! For the parabola y = alpha x^2 + beta x + gamma, the dilation by `a`
//! sends it to y = (alpha/a) x^2 + beta x + gamma a, and all sums run over
//! integers 1 <= x <= floor(b). Evaluation is exact; the only floats in this
//! module are the derived cap `delta_cap`, which feeds the envelope
//! formulas.

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::kernel::{strict_upper_int, PolyKernel};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CountingError {
    #[error("alpha must be nonzero")]
    AlphaZero,
    #[error("dilation parameter a = {a} out of range: {requirement}")]
    InvalidA { a: Rat, requirement: &'static str },
    #[error("range parameter b = {b} out of range: {requirement}")]
    InvalidB { b: Rat, requirement: &'static str },
    #[error("floor(b) exceeds the supported 64-bit range")]
    BTooLarge,
    #[error("x = {x} outside the summation range 1..={x_max}")]
    XOutOfRange { x: u64, x_max: u64 },
    #[error("delta = {delta} outside the open interval (0, 1/2)")]
    DeltaOutOfRange { delta: Rat },
}

/// The parabola y = alpha x^2 + beta x + gamma, with alpha nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parabola {
    alpha: Rat,
    beta: Rat,
    gamma: Rat,
}

impl Parabola {
    pub fn new(alpha: Rat, beta: Rat, gamma: Rat) -> Result<Self, CountingError> {
        if alpha.is_zero() {
            return Err(CountingError::AlphaZero);
        }
        Ok(Parabola { alpha, beta, gamma })
    }

    /// The standard parabola y = x^2.
    pub fn standard() -> Self {
        Parabola {
            alpha: Rat::one(),
            beta: Rat::zero(),
            gamma: Rat::zero(),
        }
    }

    pub fn alpha(&self) -> &Rat {
        &self.alpha
    }

    pub fn beta(&self) -> &Rat {
        &self.beta
    }

    pub fn gamma(&self) -> &Rat {
        &self.gamma
    }

    /// The reflected parabola (-alpha, -beta, -gamma); its exponential sums
    /// are the complex conjugates of this one's.
    pub fn negated(&self) -> Self {
        Parabola {
            alpha: -&self.alpha,
            beta: -&self.beta,
            gamma: -&self.gamma,
        }
    }
}

/// One experiment cell: a parabola together with the dilation `a` and the
/// range `b`, plus the derived summation limit floor(b).
///
/// The theorem hypotheses a > 1, b > 1 are enforced by [`Self::new`];
/// [`Self::relaxed`] admits any a > 0, b >= 1 so that degenerate
/// integer-valued configurations (for instance a = 1) remain available as
/// exact test vectors.
#[derive(Debug, Clone)]
pub struct CountingInstance {
    parabola: Parabola,
    a: Rat,
    b: Rat,
    x_max: u64,
    kernel: PolyKernel,
}

/// The signed error `floor_sum - main_term` and its absolute value.
///
/// Both conventions are in use: the decomposition identity needs the signed
/// quantity, the envelope comparisons the absolute one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorTerm {
    pub signed: Rat,
    pub abs: Rat,
}

impl CountingInstance {
    /// Instance under the theorem hypotheses a > 1, b > 1.
    pub fn new(parabola: Parabola, a: Rat, b: Rat) -> Result<Self, CountingError> {
        if a <= Rat::one() {
            return Err(CountingError::InvalidA { a, requirement: "a > 1" });
        }
        if b <= Rat::one() {
            return Err(CountingError::InvalidB { b, requirement: "b > 1" });
        }
        Self::build(parabola, a, b)
    }

    /// Relaxed instance admitting any a > 0, b >= 1.
    pub fn relaxed(parabola: Parabola, a: Rat, b: Rat) -> Result<Self, CountingError> {
        if !a.is_positive() {
            return Err(CountingError::InvalidA { a, requirement: "a > 0" });
        }
        if b < Rat::one() {
            return Err(CountingError::InvalidB { b, requirement: "b >= 1" });
        }
        Self::build(parabola, a, b)
    }

    fn build(parabola: Parabola, a: Rat, b: Rat) -> Result<Self, CountingError> {
        let x_max = b
            .floor_int()
            .to_u64()
            .ok_or(CountingError::BTooLarge)?;
        debug_assert!(x_max >= 1);
        let r2 = &parabola.alpha / &a;
        let r0 = &parabola.gamma * &a;
        let kernel = PolyKernel::from_coeffs(&r2, parabola.beta(), &r0);
        Ok(CountingInstance { parabola, a, b, x_max, kernel })
    }

    pub fn parabola(&self) -> &Parabola {
        &self.parabola
    }

    pub fn a(&self) -> &Rat {
        &self.a
    }

    pub fn b(&self) -> &Rat {
        &self.b
    }

    /// floor(b), the number of summands.
    pub fn x_max(&self) -> u64 {
        self.x_max
    }

    pub(crate) fn kernel(&self) -> &PolyKernel {
        &self.kernel
    }

    /// The envelope cap `max(b^2 sqrt(a)/(a+b), 3)`, evaluated in floating
    /// point (it only ever feeds logarithms).
    pub fn delta_cap(&self) -> f64 {
        let a = self.a.to_f64();
        let b = self.b.to_f64();
        (b * b * a.sqrt() / (a + b)).max(3.0)
    }

    /// The dilated-parabola value alpha x^2/a + beta x + gamma a, exact.
    pub fn f_value(&self, x: u64) -> Result<Rat, CountingError> {
        self.check_x(x)?;
        Ok(self.kernel.value_at(x))
    }

    fn check_x(&self, x: u64) -> Result<(), CountingError> {
        if x < 1 || x > self.x_max {
            return Err(CountingError::XOutOfRange { x, x_max: self.x_max });
        }
        Ok(())
    }

    /// `sum_{x=1}^{floor(b)} floor(f(x))`, exact.
    pub fn floor_sum(&self) -> BigInt {
        self.floor_sum_range(1, self.x_max)
    }

    /// Block form of [`Self::floor_sum`]; disjoint blocks add up to the full
    /// sum bit-identically.
    pub fn floor_sum_range(&self, lo: u64, hi: u64) -> BigInt {
        assert!(1 <= lo && lo <= hi && hi <= self.x_max, "block out of range");
        self.kernel.floor_sum(lo, hi)
    }

    /// `sum_{x=1}^{floor(b)} (f(x) - 1/2)` by closed-form power sums, exact.
    pub fn main_term(&self) -> Rat {
        let m = self.x_max;
        let poly = self.kernel.poly_sum(1, m);
        Rat::new(poly, self.kernel.denom().clone()) - Rat::new(m, 2u64)
    }

    /// The signed sum `sum_{x=1}^{floor(b)} psi(f(x))`, exact.
    pub fn psi_sum(&self) -> Rat {
        self.psi_sum_range(1, self.x_max)
    }

    /// Block form of [`Self::psi_sum`].
    pub fn psi_sum_range(&self, lo: u64, hi: u64) -> Rat {
        assert!(1 <= lo && lo <= hi && hi <= self.x_max, "block out of range");
        self.kernel.psi_sum(lo, hi)
    }

    /// The error in the floor-sum decomposition:
    /// `signed = floor_sum - main_term = -psi_sum`, plus its absolute value.
    pub fn error_term(&self) -> ErrorTerm {
        let signed = -self.psi_sum();
        let abs = signed.abs();
        ErrorTerm { signed, abs }
    }

    /// Counts 1 <= x <= floor(b) with `dist_nearest_int(f(x)) < delta`
    /// (strict; points at distance exactly delta are excluded).
    pub fn near_count(&self, delta: &Rat) -> Result<u64, CountingError> {
        self.near_count_range(delta, 1, self.x_max)
    }

    /// Block form of [`Self::near_count`].
    pub fn near_count_range(&self, delta: &Rat, lo: u64, hi: u64) -> Result<u64, CountingError> {
        self.check_delta(delta)?;
        assert!(1 <= lo && lo <= hi && hi <= self.x_max, "block out of range");
        // dist < delta  <=>  min(r, d-r) * delta_den < delta_num * d
        let tmax = strict_upper_int(&(delta.numer() * self.kernel.denom()), delta.denom());
        Ok(self.kernel.count_near(lo, hi, &tmax))
    }

    /// `near_count - 2 delta b`, exact (with the real b, not floor(b)).
    pub fn near_count_error(&self, delta: &Rat) -> Result<Rat, CountingError> {
        let count = self.near_count(delta)?;
        Ok(Rat::from(count) - Rat::from(2) * delta * &self.b)
    }

    fn check_delta(&self, delta: &Rat) -> Result<(), CountingError> {
        if !delta.is_positive() || *delta >= Rat::one_half() {
            return Err(CountingError::DeltaOutOfRange { delta: delta.clone() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> Rat {
        s.parse().unwrap()
    }

    fn parabola(alpha: &str, beta: &str, gamma: &str) -> Parabola {
        Parabola::new(rat(alpha), rat(beta), rat(gamma)).unwrap()
    }

    fn strict(alpha: &str, beta: &str, gamma: &str, a: &str, b: &str) -> CountingInstance {
        CountingInstance::new(parabola(alpha, beta, gamma), rat(a), rat(b)).unwrap()
    }

    fn relaxed(alpha: &str, beta: &str, gamma: &str, a: &str, b: &str) -> CountingInstance {
        CountingInstance::relaxed(parabola(alpha, beta, gamma), rat(a), rat(b)).unwrap()
    }

    #[test]
    fn f_value_examples() {
        let inst = strict("1", "0", "0", "2", "3");
        assert_eq!(inst.f_value(3).unwrap(), rat("9/2"));

        let inst = relaxed("1", "1", "1", "1", "2");
        assert_eq!(inst.f_value(2).unwrap(), rat("7"));

        let inst = strict("1/2", "1/3", "0", "3/2", "4");
        assert_eq!(inst.f_value(4).unwrap(), rat("20/3"));
    }

    #[test]
    fn f_value_rejects_out_of_range() {
        let inst = strict("1", "0", "0", "2", "3");
        assert!(matches!(
            inst.f_value(0),
            Err(CountingError::XOutOfRange { x: 0, x_max: 3 })
        ));
        assert!(inst.f_value(4).is_err());
        assert!(inst.f_value(3).is_ok());
    }

    #[test]
    fn floor_sum_examples() {
        assert_eq!(strict("1", "0", "0", "101/100", "3").floor_sum(), BigInt::from(11));
        assert_eq!(strict("1", "0", "0", "2", "3").floor_sum(), BigInt::from(6));
        // x ranges over integers <= b, so b = 3.9 behaves like b = 3.
        assert_eq!(strict("1", "0", "0", "2", "3.9").floor_sum(), BigInt::from(6));
    }

    #[test]
    fn main_term_examples() {
        assert_eq!(strict("1", "0", "0", "2", "3").main_term(), rat("11/2"));
        assert_eq!(relaxed("1", "0", "0", "1", "2").main_term(), rat("4"));
        assert_eq!(strict("2", "1", "0", "2", "2").main_term(), rat("7"));
    }

    #[test]
    fn main_term_matches_loop_evaluation() {
        // The closed-form power sums against term-by-term rational addition.
        let cases = [
            strict("1/2", "1/3", "-2/5", "3/2", "37/3"),
            strict("-3", "7/2", "1/6", "101/100", "25"),
        ];
        for inst in &cases {
            let mut loop_sum = Rat::zero();
            for x in 1..=inst.x_max() {
                loop_sum = loop_sum + inst.f_value(x).unwrap() - Rat::one_half();
            }
            assert_eq!(inst.main_term(), loop_sum);
        }
    }

    #[test]
    fn psi_sum_examples() {
        assert_eq!(relaxed("1", "0", "0", "1", "10").psi_sum(), rat("-5"));
        assert_eq!(strict("1", "0", "0", "2", "4").psi_sum(), rat("-1"));
    }

    #[test]
    fn decomposition_identity() {
        let cases = [
            strict("1", "0", "0", "2", "4"),
            strict("-5/3", "2/7", "9/4", "13/6", "57/2"),
            relaxed("1", "0", "0", "1", "10"),
        ];
        for inst in &cases {
            let floor_sum = Rat::from_int(inst.floor_sum());
            let main = inst.main_term();
            let err = inst.error_term();
            assert_eq!(&main + &err.signed, floor_sum);
            assert_eq!(&err.signed + &inst.psi_sum(), Rat::zero());
            assert_eq!(err.abs, err.signed.abs());
        }
    }

    #[test]
    fn error_term_examples() {
        let err = strict("1", "0", "0", "2", "4").error_term();
        assert_eq!(err.signed, rat("1"));
        assert_eq!(err.abs, rat("1"));
        assert_eq!(relaxed("1", "0", "0", "1", "10").error_term().signed, rat("5"));
    }

    #[test]
    fn near_count_examples() {
        let inst = strict("1", "0", "0", "2", "4");
        assert_eq!(inst.near_count(&rat("1/4")).unwrap(), 2);
        // Distances exactly 1/2 stay excluded arbitrarily close to 1/2.
        assert_eq!(inst.near_count(&rat("499/1000")).unwrap(), 2);

        let inst = relaxed("1", "0", "0", "1", "7");
        assert_eq!(inst.near_count(&rat("1/4")).unwrap(), 7);
        assert_eq!(inst.near_count(&rat("1/1000")).unwrap(), 7);
    }

    #[test]
    fn near_count_rejects_bad_delta() {
        let inst = strict("1", "0", "0", "2", "4");
        assert!(inst.near_count(&rat("0")).is_err());
        assert!(inst.near_count(&rat("1/2")).is_err());
        assert!(inst.near_count(&rat("-1/4")).is_err());
        assert!(inst.near_count(&rat("3/5")).is_err());
    }

    #[test]
    fn near_count_error_examples() {
        let inst = strict("1", "0", "0", "2", "4");
        assert_eq!(inst.near_count_error(&rat("1/4")).unwrap(), Rat::zero());
        let inst = relaxed("1", "0", "0", "1", "7");
        assert_eq!(inst.near_count_error(&rat("1/4")).unwrap(), rat("7/2"));
    }

    #[test]
    fn near_count_error_uses_real_b() {
        // b = 7/2: the main term is 2 * delta * 7/2, not 2 * delta * 3.
        let inst = strict("1", "0", "0", "2", "7/2");
        let count = inst.near_count(&rat("1/4")).unwrap();
        let expected = Rat::from(count) - rat("7/4");
        assert_eq!(inst.near_count_error(&rat("1/4")).unwrap(), expected);
    }

    #[test]
    fn constructors_enforce_hypotheses() {
        let p = Parabola::standard();
        assert!(CountingInstance::new(p.clone(), rat("1"), rat("5")).is_err());
        assert!(CountingInstance::new(p.clone(), rat("2"), rat("1")).is_err());
        assert!(CountingInstance::relaxed(p.clone(), rat("0"), rat("5")).is_err());
        assert!(CountingInstance::relaxed(p.clone(), rat("-2"), rat("5")).is_err());
        assert!(CountingInstance::relaxed(p.clone(), rat("1"), rat("1/2")).is_err());
        assert!(CountingInstance::relaxed(p.clone(), rat("1"), rat("1")).is_ok());
        assert!(Parabola::new(rat("0"), rat("1"), rat("1")).is_err());
    }

    #[test]
    fn delta_cap_floor_at_three() {
        let inst = strict("1", "0", "0", "100", "10");
        assert!((inst.delta_cap() - 100.0 / 11.0).abs() < 1e-12);
        let small = strict("1", "0", "0", "2", "2");
        assert_eq!(small.delta_cap(), 3.0);
    }

    #[test]
    fn near_count_invariant_under_negation() {
        let inst = strict("5/3", "-2/7", "9/5", "7/3", "50");
        let neg = CountingInstance::new(inst.parabola().negated(), rat("7/3"), rat("50")).unwrap();
        for d in ["1/10", "1/4", "2/5"] {
            assert_eq!(
                inst.near_count(&rat(d)).unwrap(),
                neg.near_count(&rat(d)).unwrap()
            );
        }
    }
}
