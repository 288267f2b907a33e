//! Closed-form error envelopes. Each carries a slack exponent `epsilon` and
//! a free multiplicative constant `C`; the harness fits `C` empirically as
//! the largest observed ratio, since the underlying asymptotic statements
//! leave it unspecified.
//!
//! All logarithms are natural. The envelopes need log log of their argument
//! to be positive, hence the domain floors: Delta is capped at 3 by
//! construction, and the three literature envelopes require a >= 16.

use crate::counting::CountingInstance;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("envelope requires a >= 16 (so that log log a > 0), got a = {a}")]
    SmallA { a: f64 },
    #[error("lower-bound envelope requires epsilon < sqrt(2), got {epsilon}")]
    EpsilonTooLarge { epsilon: f64 },
}

/// Slack exponent and fitted constant for an envelope family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub epsilon: f64,
    pub c: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams { epsilon: 0.05, c: 1.0 }
    }
}

impl EnvelopeParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        EnvelopeParams { epsilon, c: 1.0 }
    }
}

/// The two-theorem envelope
/// `C (sqrt(a) + b/sqrt(a)) exp(((ln 2)/2 + eps) log Delta / log log Delta)`
/// with Delta = max(b^2 sqrt(a)/(a + b), 3). The floor at 3 keeps
/// log log Delta positive for every instance.
pub fn theorem1_envelope(inst: &CountingInstance, p: &EnvelopeParams) -> f64 {
    let a = inst.a().to_f64();
    let b = inst.b().to_f64();
    let delta = inst.delta_cap();
    let ld = delta.ln();
    let exponent = (0.5 * std::f64::consts::LN_2 + p.epsilon) * ld / ld.ln();
    p.c * (a.sqrt() + b / a.sqrt()) * exponent.exp()
}

/// `C sqrt(a) exp(((3/4) ln 2 + eps) log a / log log a)`.
pub fn popov_envelope(a: f64, p: &EnvelopeParams) -> Result<f64, EnvelopeError> {
    check_a(a)?;
    let la = a.ln();
    let exponent = (0.75 * std::f64::consts::LN_2 + p.epsilon) * la / la.ln();
    Ok(p.c * a.sqrt() * exponent.exp())
}

/// `C (sqrt(a) log a + b a^{-1/2} exp((2 + eps) (log a)^{1/2} / log log a))`.
pub fn huangli_envelope(a: f64, b: f64, p: &EnvelopeParams) -> Result<f64, EnvelopeError> {
    check_a(a)?;
    let la = a.ln();
    let exponent = (2.0 + p.epsilon) * la.sqrt() / la.ln();
    Ok(p.c * (a.sqrt() * la + b / a.sqrt() * exponent.exp()))
}

/// The lower-bound envelope
/// `C sqrt(a) exp((sqrt(2) - eps) (log a)^{1/2} / log log a)`, attained
/// along infinitely many integers a (not for every a).
pub fn chamizo_pastor_floor(a: f64, p: &EnvelopeParams) -> Result<f64, EnvelopeError> {
    check_a(a)?;
    if p.epsilon >= std::f64::consts::SQRT_2 {
        return Err(EnvelopeError::EpsilonTooLarge { epsilon: p.epsilon });
    }
    let la = a.ln();
    let exponent = (std::f64::consts::SQRT_2 - p.epsilon) * la.sqrt() / la.ln();
    Ok(p.c * a.sqrt() * exponent.exp())
}

fn check_a(a: f64) -> Result<(), EnvelopeError> {
    if a >= 16.0 {
        Ok(())
    } else {
        Err(EnvelopeError::SmallA { a })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::Parabola;
    use crate::rat::Rat;

    fn inst(a: &str, b: &str) -> CountingInstance {
        let parse = |s: &str| s.parse::<Rat>().unwrap();
        CountingInstance::new(Parabola::standard(), parse(a), parse(b)).unwrap()
    }

    #[test]
    fn theorem1_envelope_matches_formula() {
        let i = inst("100", "10");
        let p = EnvelopeParams::default();
        let delta: f64 = 100.0 * 10.0 / 110.0;
        let expect = (10.0 + 10.0 / 10.0)
            * ((0.5 * std::f64::consts::LN_2 + 0.05) * delta.ln() / delta.ln().ln()).exp();
        assert!((theorem1_envelope(&i, &p) - expect).abs() < 1e-9);
    }

    #[test]
    fn theorem1_envelope_at_a_equals_b() {
        // Delta simplifies to a^{3/2}/2 and the prefactor to 2 sqrt(a).
        let i = inst("64", "64");
        let p = EnvelopeParams::with_epsilon(0.0);
        let delta: f64 = 64.0f64.powf(1.5) / 2.0;
        let expect =
            2.0 * 8.0 * (0.5 * std::f64::consts::LN_2 * delta.ln() / delta.ln().ln()).exp();
        assert!((theorem1_envelope(&i, &p) - expect).abs() < 1e-9);
        assert!(theorem1_envelope(&i, &p) >= 8.0);
    }

    #[test]
    fn popov_formula_at_e_to_e_squared() {
        // log a = e^2, log log a = 2.
        let a = (std::f64::consts::E * std::f64::consts::E).exp();
        let p = EnvelopeParams::with_epsilon(0.0);
        let got = popov_envelope(a, &p).unwrap() / a.sqrt();
        let expect =
            (0.75 * std::f64::consts::LN_2 * (std::f64::consts::E * std::f64::consts::E) / 2.0)
                .exp();
        assert!((got / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domains_are_enforced() {
        let p = EnvelopeParams::default();
        assert!(popov_envelope(15.9, &p).is_err());
        assert!(huangli_envelope(10.0, 10.0, &p).is_err());
        assert!(chamizo_pastor_floor(3.0, &p).is_err());
        assert!(matches!(
            chamizo_pastor_floor(100.0, &EnvelopeParams::with_epsilon(1.5)),
            Err(EnvelopeError::EpsilonTooLarge { .. })
        ));
        assert!(popov_envelope(16.0, &p).is_ok());
    }

    #[test]
    fn lower_floor_stays_below_huangli_at_b_equals_a() {
        let p = EnvelopeParams::default();
        let mut a = 16.0f64;
        while a <= 1e6 {
            let cp = chamizo_pastor_floor(a, &p).unwrap();
            let hl = huangli_envelope(a, a, &p).unwrap();
            assert!(cp < hl, "a = {a}: {cp} vs {hl}");
            a *= 1.37;
        }
    }

    #[test]
    fn popov_huangli_crossover_is_far_out() {
        // At b = a the Huang-Li envelope stays above Popov's through 1e6
        // and only drops below it near 2e8.
        let p = EnvelopeParams::default();
        let at = |a: f64| {
            huangli_envelope(a, a, &p).unwrap() / popov_envelope(a, &p).unwrap()
        };
        assert!(at(1e6) > 1.0);
        assert!(at(1e8) > 1.0);
        assert!(at(2.5e8) < 1.0);
        assert!(at(1e9) < 1.0);
    }
}
