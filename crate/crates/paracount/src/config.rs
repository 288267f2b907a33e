//! Flat key-value experiment configuration.
//!
//! One `key = value` pair per line, `#` starts a comment, keys may appear
//! once. Rational values use the exact `num/den` / integer / decimal forms.
//!
//! ```text
//! # example: error grid along the diagonal b = a
//! alpha = 1
//! beta = 0
//! gamma = 0
//! a_grid = 16..2000
//! b_rule = proportional 1
//! delta_grid = 1/10, 1/4, 2/5
//! h_rule = paper
//! epsilon = 0.05
//! seed = 42
//! ```
//!
//! `a_grid` entries are rationals, inclusive integer ranges `lo..hi`, or
//! seeded batches `random <count> in <lo>..<hi> den <maxden>` drawn
//! deterministically from `seed`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counting::Parabola;
use crate::grid::{BRule, ChecksKind, ExperimentSpec, HRule, SpecError};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("key {key}: {message}")]
    InvalidValue { key: &'static str, message: String },
    #[error("invalid experiment: {0}")]
    Spec(#[from] SpecError),
}

/// Everything a CLI run needs: the experiment spec plus the
/// command-specific parameters.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub spec: ExperimentSpec,
    /// Extremal-search range (inclusive).
    pub a_min: u64,
    pub a_max: u64,
}

impl HarnessConfig {
    /// Parses the flat key-value format. The optional `seed_override`
    /// replaces the config seed before any randomized grid is drawn.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, text: raw.to_string() })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            if keys.insert(key.clone(), (line, value)).is_some() {
                return Err(ConfigError::DuplicateKey { line, key });
            }
        }
        let get = |key: &str| keys.get(key).map(|(_, v)| v.as_str());

        let alpha = parse_rat_key(get("alpha"), "alpha", Rat::one())?;
        let beta = parse_rat_key(get("beta"), "beta", Rat::zero())?;
        let gamma = parse_rat_key(get("gamma"), "gamma", Rat::zero())?;
        let parabola = Parabola::new(alpha, beta, gamma).map_err(|e| {
            ConfigError::InvalidValue { key: "alpha", message: e.to_string() }
        })?;

        let seed = match get("seed") {
            Some(v) => v.parse::<u64>().map_err(|_| ConfigError::InvalidValue {
                key: "seed",
                message: format!("expected an unsigned 64-bit integer, got {v:?}"),
            })?,
            None => 0,
        };
        let seed = seed_override.unwrap_or(seed);

        let mut spec = ExperimentSpec::new(parabola);
        spec.seed = seed;
        if let Some(v) = get("a_grid") {
            spec.a_grid = parse_grid(v, seed)?;
        }
        if let Some(v) = get("b_rule") {
            spec.b_rule = parse_b_rule(v)?;
        }
        if let Some(v) = get("delta_grid") {
            spec.delta_grid = parse_rat_list(v, "delta_grid")?;
        }
        if let Some(v) = get("h_rule") {
            spec.h_rule = parse_h_rule(v)?;
        }
        if let Some(v) = get("epsilon") {
            spec.epsilon = v.parse::<f64>().map_err(|_| ConfigError::InvalidValue {
                key: "epsilon",
                message: format!("expected a float, got {v:?}"),
            })?;
        }
        if let Some(v) = get("mode") {
            spec.relaxed = match v {
                "strict" => false,
                "relaxed" => true,
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: "mode",
                        message: format!("expected strict|relaxed, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = get("checks") {
            spec.checks = match v {
                "full" => ChecksKind::Full,
                "envelope-only" => ChecksKind::EnvelopeOnly,
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: "checks",
                        message: format!("expected full|envelope-only, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = get("top_k") {
            spec.top_k = v.parse::<usize>().map_err(|_| ConfigError::InvalidValue {
                key: "top_k",
                message: format!("expected a positive integer, got {v:?}"),
            })?;
        }
        let a_min = parse_u64_key(get("a_min"), "a_min", 16)?;
        let a_max = parse_u64_key(get("a_max"), "a_max", 5000)?;

        spec.validate()?;
        Ok(HarnessConfig { spec, a_min, a_max })
    }
}

const KNOWN_KEYS: &[&str] = &[
    "alpha", "beta", "gamma", "a_grid", "b_rule", "delta_grid", "h_rule", "epsilon", "seed",
    "mode", "checks", "top_k", "a_min", "a_max",
];

fn parse_rat_key(value: Option<&str>, key: &'static str, default: Rat) -> Result<Rat, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| ConfigError::InvalidValue {
            key,
            message: format!("{e}"),
        }),
    }
}

fn parse_u64_key(value: Option<&str>, key: &'static str, default: u64) -> Result<u64, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ConfigError::InvalidValue {
            key,
            message: format!("expected an unsigned integer, got {v:?}"),
        }),
    }
}

fn parse_rat_list(value: &str, key: &'static str) -> Result<Vec<Rat>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e| ConfigError::InvalidValue {
                key,
                message: format!("{e}"),
            })
        })
        .collect()
}

fn parse_grid(value: &str, seed: u64) -> Result<Vec<Rat>, ConfigError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = Vec::new();
    for entry in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(batch) = entry.strip_prefix("random ") {
            grid.extend(parse_random_batch(batch, &mut rng)?);
        } else if let Some((lo, hi)) = parse_int_range(entry) {
            if lo > hi {
                return Err(ConfigError::InvalidValue {
                    key: "a_grid",
                    message: format!("empty range {entry:?}"),
                });
            }
            grid.extend((lo..=hi).map(Rat::from));
        } else {
            grid.push(entry.parse().map_err(|e| ConfigError::InvalidValue {
                key: "a_grid",
                message: format!("{e}"),
            })?);
        }
    }
    Ok(grid)
}

fn parse_int_range(entry: &str) -> Option<(u64, u64)> {
    let (lo, hi) = entry.split_once("..")?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

/// `<count> in <lo>..<hi> den <maxden>`: uniformly drawn denominators in
/// 1..=maxden and numerators spanning [lo, hi].
fn parse_random_batch(batch: &str, rng: &mut ChaCha8Rng) -> Result<Vec<Rat>, ConfigError> {
    let bad = |message: String| ConfigError::InvalidValue { key: "a_grid", message };
    let (count, rest) = batch
        .trim()
        .split_once(" in ")
        .ok_or_else(|| bad(format!("expected `random <n> in <lo>..<hi> den <maxden>`, got {batch:?}")))?;
    let (range, den) = rest
        .split_once(" den ")
        .ok_or_else(|| bad(format!("missing `den <maxden>` in {batch:?}")))?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| bad(format!("bad count in {batch:?}")))?;
    let (lo, hi) =
        parse_int_range(range.trim()).ok_or_else(|| bad(format!("bad range in {batch:?}")))?;
    let maxden: u64 = den
        .trim()
        .parse()
        .map_err(|_| bad(format!("bad maxden in {batch:?}")))?;
    if lo >= hi || maxden < 1 {
        return Err(bad(format!("degenerate random batch {batch:?}")));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let den = rng.gen_range(1..=maxden);
        let num = rng.gen_range(lo * den..=hi * den);
        out.push(Rat::new(num, den));
    }
    Ok(out)
}

fn parse_b_rule(value: &str) -> Result<BRule, ConfigError> {
    let bad = |message: String| ConfigError::InvalidValue { key: "b_rule", message };
    if let Some(v) = value.strip_prefix("fixed ") {
        return Ok(BRule::Fixed(v.trim().parse().map_err(|e| bad(format!("{e}")))?));
    }
    if let Some(v) = value.strip_prefix("proportional ") {
        return Ok(BRule::ProportionalToA(
            v.trim().parse().map_err(|e| bad(format!("{e}")))?,
        ));
    }
    Err(bad(format!(
        "expected `fixed <rat>` or `proportional <rat>`, got {value:?}"
    )))
}

fn parse_h_rule(value: &str) -> Result<HRule, ConfigError> {
    let bad = |message: String| ConfigError::InvalidValue { key: "h_rule", message };
    if value == "paper" {
        return Ok(HRule::Paper);
    }
    if let Some(v) = value.strip_prefix("fixed ") {
        return Ok(HRule::Fixed(v.trim().parse().map_err(|_| {
            bad(format!("bad fixed H in {value:?}"))
        })?));
    }
    if let Some(v) = value.strip_prefix("sweep ") {
        let (lo, hi) = parse_int_range(v.trim()).ok_or_else(|| bad(format!("bad sweep range in {value:?}")))?;
        return Ok(HRule::Sweep(lo, hi));
    }
    Err(bad(format!(
        "expected `paper`, `fixed <n>` or `sweep <lo>..<hi>`, got {value:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> Rat {
        s.parse().unwrap()
    }

    #[test]
    fn parses_a_full_config() {
        let text = "\
# comment line
alpha = 1/2
beta = -1/3   # trailing comment
gamma = 0.25
a_grid = 2..4, 10, 101/100
b_rule = fixed 7/2
delta_grid = 1/10, 1/4
h_rule = sweep 1..5
epsilon = 0.1
seed = 7
checks = envelope-only
mode = strict
top_k = 3
a_min = 20
a_max = 50
";
        let cfg = HarnessConfig::parse(text, None).unwrap();
        assert_eq!(cfg.spec.parabola.alpha(), &rat("1/2"));
        assert_eq!(cfg.spec.parabola.gamma(), &rat("1/4"));
        assert_eq!(
            cfg.spec.a_grid,
            vec![rat("2"), rat("3"), rat("4"), rat("10"), rat("101/100")]
        );
        assert_eq!(cfg.spec.b_rule, BRule::Fixed(rat("7/2")));
        assert_eq!(cfg.spec.h_rule, HRule::Sweep(1, 5));
        assert_eq!(cfg.spec.seed, 7);
        assert_eq!(cfg.spec.checks, ChecksKind::EnvelopeOnly);
        assert_eq!((cfg.a_min, cfg.a_max), (20, 50));
    }

    #[test]
    fn defaults_are_standard_parabola_diagonal() {
        let cfg = HarnessConfig::parse("a_grid = 5", None).unwrap();
        assert_eq!(cfg.spec.parabola.alpha(), &rat("1"));
        assert_eq!(cfg.spec.b_rule, BRule::ProportionalToA(rat("1")));
        assert_eq!(cfg.spec.h_rule, HRule::Paper);
        assert_eq!(cfg.spec.epsilon, 0.05);
        assert_eq!(cfg.spec.seed, 0);
        assert_eq!((cfg.a_min, cfg.a_max), (16, 5000));
    }

    #[test]
    fn random_batches_are_seed_deterministic() {
        let text = "a_grid = random 5 in 2..100 den 20";
        let g1 = HarnessConfig::parse(text, None).unwrap().spec.a_grid;
        let g2 = HarnessConfig::parse(text, None).unwrap().spec.a_grid;
        assert_eq!(g1, g2);
        assert_eq!(g1.len(), 5);
        for a in &g1 {
            assert!(*a >= rat("2") && *a <= rat("100"));
        }
        let g3 = HarnessConfig::parse(text, Some(99)).unwrap().spec.a_grid;
        assert_ne!(g1, g3);
        // seed key in the file behaves like the override
        let g4 = HarnessConfig::parse("seed = 99\na_grid = random 5 in 2..100 den 20", None)
            .unwrap()
            .spec
            .a_grid;
        assert_eq!(g3, g4);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            HarnessConfig::parse("nonsense", None),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            HarnessConfig::parse("bogus_key = 1", None),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            HarnessConfig::parse("seed = 1\nseed = 2", None),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            HarnessConfig::parse("alpha = x", None),
            Err(ConfigError::InvalidValue { key: "alpha", .. })
        ));
        assert!(matches!(
            HarnessConfig::parse("alpha = 0\na_grid = 5", None),
            Err(ConfigError::InvalidValue { key: "alpha", .. })
        ));
        // spec-level validation surfaces as a config error too
        assert!(matches!(
            HarnessConfig::parse("a_grid = 1", None),
            Err(ConfigError::Spec(SpecError::InvalidAEntry { .. }))
        ));
        assert!(matches!(
            HarnessConfig::parse("a_grid = 5\ndelta_grid = 3/5", None),
            Err(ConfigError::Spec(SpecError::InvalidDelta { .. }))
        ));
    }
}
