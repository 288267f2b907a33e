//! Report rows and their serialized forms.
//!
//! The CSV schema is fixed: optional `# fitted_constant` comment lines, one
//! header row, then the columns
//! `instance_id,alpha,beta,gamma,a,b,delta,H,quantity,computed,envelope,ratio,pass`
//! in UTF-8 with LF line endings and `.` as the decimal separator. Rational
//! values are written exactly as `num/den`; floats with 17 significant
//! digits so they round-trip. Identical runs produce byte-identical output.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use serde::{Serialize, Serializer};

use crate::rat::Rat;

/// A computed or envelope value: exact where the library is exact, floating
/// point where the quantity is inherently a float.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Rat(Rat),
    Int(BigInt),
    Float(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Rat(r) => r.to_f64(),
            Value::Int(i) => Rat::from_int(i.clone()).to_f64(),
            Value::Float(x) => *x,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Rat(r) => write!(f, "{r}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", fmt_f64_17(*x)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Rat(r) => serializer.collect_str(r),
            Value::Int(i) => serializer.collect_str(i),
            Value::Float(x) => serializer.serialize_f64(*x),
        }
    }
}

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_f64_17(x: f64) -> String {
    format!("{x:.16e}")
}

/// The kind of check a report row records. Fitted families are judged
/// against the largest ratio observed in the same run (the fitted constant);
/// the others carry their own pass rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    // raw single-value dumps (prove-chain)
    FloorSum,
    MainTerm,
    PsiSum,
    ErrorSigned,
    ResonanceQ,
    HCutoff,
    DeltaCap,
    ExpSumAbs,
    // inequality and identity checks
    ErrorVsEnvelope,
    VaalerPsiBound,
    CauchySchwarz,
    SecondMomentIdentity,
    IDecomposition,
    E22Assembly,
    TrivialBoundPath,
    NearCount,
    NearErrorVsEnvelope,
    ErdosTuranDiscrepancy,
    ZNearCountGap,
    NearCountDeltaMonotone,
    ExtremalNormalizedError,
    ExtremalVsChamizoPastor,
    CellError,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::FloorSum => "floor_sum",
            Quantity::MainTerm => "main_term",
            Quantity::PsiSum => "psi_sum",
            Quantity::ErrorSigned => "error_signed",
            Quantity::ResonanceQ => "resonance_q",
            Quantity::HCutoff => "h_cutoff",
            Quantity::DeltaCap => "delta_cap",
            Quantity::ExpSumAbs => "exp_sum_abs",
            Quantity::ErrorVsEnvelope => "error_vs_envelope",
            Quantity::VaalerPsiBound => "vaaler_psi_bound",
            Quantity::CauchySchwarz => "cauchy_schwarz",
            Quantity::SecondMomentIdentity => "second_moment_identity",
            Quantity::IDecomposition => "i_decomposition",
            Quantity::E22Assembly => "e22_assembly",
            Quantity::TrivialBoundPath => "trivial_bound_path",
            Quantity::NearCount => "near_count",
            Quantity::NearErrorVsEnvelope => "near_error_vs_envelope",
            Quantity::ErdosTuranDiscrepancy => "erdos_turan_discrepancy",
            Quantity::ZNearCountGap => "z_near_count_gap",
            Quantity::NearCountDeltaMonotone => "near_count_delta_monotone",
            Quantity::ExtremalNormalizedError => "extremal_normalized_error",
            Quantity::ExtremalVsChamizoPastor => "extremal_vs_chamizo_pastor",
            Quantity::CellError => "cell_error",
        }
    }

    /// Families whose pass flag is judged against the run's fitted constant.
    pub fn is_fitted_family(self) -> bool {
        matches!(
            self,
            Quantity::ErrorVsEnvelope
                | Quantity::IDecomposition
                | Quantity::E22Assembly
                | Quantity::NearErrorVsEnvelope
                | Quantity::ExtremalNormalizedError
                | Quantity::ExtremalVsChamizoPastor
        )
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// One checked quantity on one experiment cell.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub instance_id: String,
    pub alpha: Rat,
    pub beta: Rat,
    pub gamma: Rat,
    pub a: Rat,
    pub b: Rat,
    pub delta: Option<Rat>,
    pub h: Option<u64>,
    pub quantity: Quantity,
    pub computed: Value,
    pub envelope: Value,
    pub ratio: f64,
    pub pass: bool,
}

/// A finished run: rows plus the fitted constant per fitted family.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub fitted_constants: BTreeMap<&'static str, f64>,
    pub rows: Vec<BoundReport>,
}

impl RunReport {
    /// Fits the per-family constants (largest finite ratio in the run) and
    /// resolves the pass flag of fitted-family rows against them.
    pub(crate) fn finalize(rows: Vec<BoundReport>) -> Self {
        let mut fitted: BTreeMap<&'static str, f64> = BTreeMap::new();
        for row in &rows {
            if row.quantity.is_fitted_family() && row.ratio.is_finite() {
                let c = fitted.entry(row.quantity.as_str()).or_insert(0.0);
                *c = c.max(row.ratio);
            }
        }
        let mut rows = rows;
        for row in &mut rows {
            if row.quantity.is_fitted_family() {
                match fitted.get(row.quantity.as_str()) {
                    Some(c) => row.pass = row.ratio.is_finite() && row.ratio <= c * (1.0 + 1e-12),
                    None => row.pass = false,
                }
            }
        }
        RunReport { fitted_constants: fitted, rows }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (family, c) in &self.fitted_constants {
            out.push_str(&format!("# fitted_constant {family} = {}\n", fmt_f64_17(*c)));
        }
        out.push_str("instance_id,alpha,beta,gamma,a,b,delta,H,quantity,computed,envelope,ratio,pass\n");
        for r in &self.rows {
            let delta = r.delta.as_ref().map(|d| d.to_string()).unwrap_or_default();
            let h = r.h.map(|h| h.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.instance_id,
                r.alpha,
                r.beta,
                r.gamma,
                r.a,
                r.b,
                delta,
                h,
                r.quantity.as_str(),
                r.computed,
                r.envelope,
                fmt_f64_17(r.ratio),
                r.pass
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
