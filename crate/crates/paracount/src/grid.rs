//! Grid experiment runners: the error-term grid, the near-count grid, the
//! extremal search for large normalized errors, and the single-cell chain
//! dump.
//!
//! Every emitted row is re-derivable from the library calls alone; the
//! runners add no arithmetic beyond composition and ratio-taking. Cells are
//! independent work items evaluated on the current rayon pool; per-cell
//! float work is serial and in fixed order, so the row set is identical
//! however many workers run, and a canonical sort fixes the layout.

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::Serialize;

use crate::counting::{CountingInstance, ErrorTerm, Parabola};
use crate::divisor::{divisor_envelope_f, ISums, ProofParameters};
use crate::envelope::{chamizo_pastor_floor, theorem1_envelope, EnvelopeParams};
use crate::expsum::{
    discrepancy, erdos_turan_bound_prefix, second_moment_lhs_prefix, second_moment_weyl,
    second_moments_agree, vaaler_bound_prefix, weighted_modulus_prefix, DiscrepancyWindow,
    ExpSumSeries, Kahan, PhaseMode,
};
use crate::rat::Rat;
use crate::report::{BoundReport, Quantity, RunReport, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("a-grid entry {a} violates the requirement {requirement}")]
    InvalidAEntry { a: Rat, requirement: &'static str },
    #[error("derived b = {b} violates the requirement {requirement}")]
    InvalidBEntry { b: Rat, requirement: &'static str },
    #[error("delta-grid entry {delta} outside the open interval (0, 1/2)")]
    InvalidDelta { delta: Rat },
    #[error("H rule requires H >= 1 (and lo <= hi for sweeps)")]
    InvalidHRule,
    #[error("epsilon must be positive and finite")]
    InvalidEpsilon,
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("near-grid requires a nonempty delta_grid")]
    EmptyDeltaGrid,
    #[error("extremal search requires 16 <= a_min <= a_max, got {a_min}..={a_max}")]
    InvalidExtremalRange { a_min: u64, a_max: u64 },
    #[error("this command requires at least one a-grid entry")]
    EmptyAGrid,
}

/// How b is derived from each a-grid entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BRule {
    Fixed(Rat),
    /// b = factor * a.
    ProportionalToA(Rat),
}

impl BRule {
    pub fn b_for(&self, a: &Rat) -> Rat {
        match self {
            BRule::Fixed(b) => b.clone(),
            BRule::ProportionalToA(f) => f * a,
        }
    }
}

/// Which H values the chain checks run at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HRule {
    /// H = floor(2 sqrt(a) b / (a + b)); cells with H = 0 take the
    /// trivial-bound path.
    Paper,
    Fixed(u64),
    Sweep(u64, u64),
}

/// Whether a grid runs the full per-cell check chain or only the
/// error-vs-envelope ratios (the cheap mode for large ratio scans).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChecksKind {
    #[default]
    Full,
    EnvelopeOnly,
}

/// A grid experiment: one parabola, a list of dilations, a rule deriving b,
/// the near-count windows, the H rule, and the envelope slack.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub parabola: Parabola,
    pub a_grid: Vec<Rat>,
    pub b_rule: BRule,
    pub delta_grid: Vec<Rat>,
    pub h_rule: HRule,
    pub epsilon: f64,
    /// Fully determines any randomized grid generation (recorded even when
    /// the grid is explicit, for reproducibility of the emitted reports).
    pub seed: u64,
    /// Relaxed instances admit a > 0, b >= 1 for degenerate exact cells.
    pub relaxed: bool,
    pub checks: ChecksKind,
    pub top_k: usize,
}

impl ExperimentSpec {
    /// A spec with the standard parabola and default knobs; callers fill in
    /// the grids.
    pub fn new(parabola: Parabola) -> Self {
        ExperimentSpec {
            parabola,
            a_grid: Vec::new(),
            b_rule: BRule::ProportionalToA(Rat::one()),
            delta_grid: Vec::new(),
            h_rule: HRule::Paper,
            epsilon: 0.05,
            seed: 0,
            relaxed: false,
            checks: ChecksKind::Full,
            top_k: 25,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(SpecError::InvalidEpsilon);
        }
        if self.top_k < 1 {
            return Err(SpecError::InvalidTopK);
        }
        match &self.h_rule {
            HRule::Paper => {}
            HRule::Fixed(h) if *h >= 1 => {}
            HRule::Sweep(lo, hi) if 1 <= *lo && lo <= hi => {}
            _ => return Err(SpecError::InvalidHRule),
        }
        for a in &self.a_grid {
            let (a_ok, a_req) = if self.relaxed {
                (a.is_positive(), "a > 0")
            } else {
                (*a > Rat::one(), "a > 1")
            };
            if !a_ok {
                return Err(SpecError::InvalidAEntry { a: a.clone(), requirement: a_req });
            }
            let b = self.b_rule.b_for(a);
            let (b_ok, b_req) = if self.relaxed {
                (b >= Rat::one(), "b >= 1")
            } else {
                (b > Rat::one(), "b > 1")
            };
            if !b_ok {
                return Err(SpecError::InvalidBEntry { b, requirement: b_req });
            }
        }
        for delta in &self.delta_grid {
            if !delta.is_positive() || *delta >= Rat::one_half() {
                return Err(SpecError::InvalidDelta { delta: delta.clone() });
            }
        }
        Ok(())
    }

    fn instance(&self, a: &Rat) -> Result<CountingInstance, crate::counting::CountingError> {
        let b = self.b_rule.b_for(a);
        if self.relaxed {
            CountingInstance::relaxed(self.parabola.clone(), a.clone(), b)
        } else {
            CountingInstance::new(self.parabola.clone(), a.clone(), b)
        }
    }

    /// The H values the chain checks run at; `None` means the paper rule
    /// produced H = 0 and the cell takes the trivial-bound path.
    fn h_values(&self, params: &ProofParameters) -> Option<Vec<u64>> {
        match &self.h_rule {
            HRule::Paper => {
                if params.h_cutoff == 0 {
                    None
                } else {
                    Some(vec![params.h_cutoff])
                }
            }
            HRule::Fixed(h) => Some(vec![*h]),
            HRule::Sweep(lo, hi) => Some((*lo..=*hi).collect()),
        }
    }

    fn envelope_params(&self) -> EnvelopeParams {
        EnvelopeParams::with_epsilon(self.epsilon)
    }
}

/// Stamps the shared cell columns onto rows.
struct RowBase {
    instance_id: String,
    alpha: Rat,
    beta: Rat,
    gamma: Rat,
    a: Rat,
    b: Rat,
}

impl RowBase {
    fn new(instance_id: String, parabola: &Parabola, a: &Rat, b: &Rat) -> Self {
        RowBase {
            instance_id,
            alpha: parabola.alpha().clone(),
            beta: parabola.beta().clone(),
            gamma: parabola.gamma().clone(),
            a: a.clone(),
            b: b.clone(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        quantity: Quantity,
        delta: Option<Rat>,
        h: Option<u64>,
        computed: Value,
        envelope: Value,
        ratio: f64,
        pass: bool,
    ) -> BoundReport {
        BoundReport {
            instance_id: self.instance_id.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            delta,
            h,
            quantity,
            computed,
            envelope,
            ratio,
            pass,
        }
    }

    fn cell_error(&self) -> BoundReport {
        self.row(
            Quantity::CellError,
            None,
            None,
            Value::Float(f64::NAN),
            Value::Float(1.0),
            f64::NAN,
            false,
        )
    }
}

/// x <= y up to 1e-9 relative float slack; used where the inequality is a
/// theorem and only rounding can produce an apparent violation.
fn le_with_slack(x: f64, y: f64) -> bool {
    x <= y + 1e-9 * (1.0 + y.abs())
}

fn ratio_of(computed: f64, envelope: f64) -> f64 {
    if computed == 0.0 && envelope == 0.0 {
        1.0
    } else {
        computed / envelope
    }
}

fn harmonic(h_max: u64) -> f64 {
    let mut acc = Kahan::new();
    for h in 1..=h_max {
        acc.add(1.0 / h as f64);
    }
    acc.total()
}

/// Runs the error-term grid: per cell the error vs the two-theorem
/// envelope, and (in full mode) the chain checks — the Vaaler inequality,
/// the Cauchy-Schwarz step, the second-moment identity, the I
/// decomposition, and the final assembly bound.
pub fn run_error_grid(spec: &ExperimentSpec) -> Result<RunReport, SpecError> {
    spec.validate()?;
    let cells: Vec<(usize, &Rat)> = spec.a_grid.iter().enumerate().collect();
    let mut rows: Vec<BoundReport> = cells
        .par_iter()
        .map(|(idx, a)| error_cell_rows(spec, *idx, a))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    canonical_sort(&mut rows);
    Ok(RunReport::finalize(rows))
}

fn error_cell_rows(spec: &ExperimentSpec, idx: usize, a: &Rat) -> Vec<BoundReport> {
    let b = spec.b_rule.b_for(a);
    let base = RowBase::new(format!("cell-{idx:05}"), &spec.parabola, a, &b);
    let inst = match spec.instance(a) {
        Ok(inst) => inst,
        Err(_) => return vec![base.cell_error()],
    };
    let mut rows = Vec::new();
    let err = inst.error_term();
    let err_f = err.abs.to_f64();
    let env = theorem1_envelope(&inst, &spec.envelope_params());
    rows.push(base.row(
        Quantity::ErrorVsEnvelope,
        None,
        None,
        Value::Rat(err.abs.clone()),
        Value::Float(env),
        ratio_of(err_f, env),
        true, // fitted later
    ));
    if spec.checks == ChecksKind::EnvelopeOnly {
        return rows;
    }
    let params = ProofParameters::from_instance(&inst);
    match spec.h_values(&params) {
        None => rows.push(trivial_bound_row(&base, &err, &inst, None)),
        Some(h_list) => {
            let h_top = *h_list.iter().max().expect("nonempty");
            let series = ExpSumSeries::compute(&inst, h_top, PhaseMode::ExactReduced);
            for &h in &h_list {
                rows.extend(chain_rows_at_h(spec, &base, &inst, &err, &series, h));
            }
        }
    }
    rows
}

/// When b^2 <= a the paper's H vanishes and the error is controlled by the
/// trivial bound |E| <= b; record that and skip the chain.
fn trivial_bound_row(
    base: &RowBase,
    err: &ErrorTerm,
    inst: &CountingInstance,
    delta: Option<Rat>,
) -> BoundReport {
    let b_f = inst.b().to_f64();
    let err_f = err.abs.to_f64();
    base.row(
        Quantity::TrivialBoundPath,
        delta,
        None,
        Value::Rat(err.abs.clone()),
        Value::Float(b_f),
        ratio_of(err_f, b_f),
        err.abs <= *inst.b(),
    )
}

fn chain_rows_at_h(
    spec: &ExperimentSpec,
    base: &RowBase,
    inst: &CountingInstance,
    err: &ErrorTerm,
    series: &ExpSumSeries,
    h: u64,
) -> Vec<BoundReport> {
    let mut rows = Vec::new();
    let err_f = err.abs.to_f64();
    let b_f = inst.b().to_f64();

    // (2.1): |psi_sum| <= Vaaler bound.
    let vb = vaaler_bound_prefix(series, h);
    rows.push(base.row(
        Quantity::VaalerPsiBound,
        None,
        Some(h),
        Value::Rat(err.abs.clone()),
        Value::Float(vb),
        ratio_of(err_f, vb),
        le_with_slack(err_f, vb),
    ));

    // (CS): first moment <= sqrt(harmonic) * sqrt(second moment).
    let cs_lhs = weighted_modulus_prefix(series, h);
    let sm_lhs = second_moment_lhs_prefix(series, h);
    let cs_rhs = harmonic(h).sqrt() * sm_lhs.sqrt();
    rows.push(base.row(
        Quantity::CauchySchwarz,
        None,
        Some(h),
        Value::Float(cs_lhs),
        Value::Float(cs_rhs),
        ratio_of(cs_lhs, cs_rhs),
        le_with_slack(cs_lhs, cs_rhs),
    ));

    // The Weyl-differencing identity for the second moment.
    let sm_weyl = second_moment_weyl(inst, h);
    rows.push(base.row(
        Quantity::SecondMomentIdentity,
        None,
        Some(h),
        Value::Float(sm_lhs),
        Value::Float(sm_weyl),
        ratio_of(sm_lhs, sm_weyl),
        second_moments_agree(sm_lhs, sm_weyl),
    ));

    // I <= C ((log log b) I1 + b f(bH) I2); small arguments are floored at 3
    // exactly like the envelope cap.
    let isums = ISums::compute(inst, h);
    let lnln_b = b_f.max(3.0).ln().ln();
    let f_bh = divisor_envelope_f((b_f * h as f64).max(3.0), spec.epsilon)
        .expect("argument floored at 3");
    let idec_rhs = lnln_b * isums.i1 + b_f * f_bh * isums.i2;
    rows.push(base.row(
        Quantity::IDecomposition,
        None,
        Some(h),
        Value::Float(isums.i),
        Value::Float(idec_rhs),
        ratio_of(isums.i, idec_rhs),
        true, // fitted later
    ));

    // (e2.2): |E| <= b/H + sqrt(log H) sqrt(b log H + I).
    let ln_h = (h as f64).ln();
    let e22_rhs = b_f / h as f64 + ln_h.sqrt() * (b_f * ln_h + isums.i).sqrt();
    rows.push(base.row(
        Quantity::E22Assembly,
        None,
        Some(h),
        Value::Rat(err.abs.clone()),
        Value::Float(e22_rhs),
        ratio_of(err_f, e22_rhs),
        true, // fitted later
    ));
    rows
}

/// Runs the near-count grid: per (cell, delta) the count, its error against
/// 2 delta b with the shared envelope, the Erdos-Turan discrepancy check,
/// and the exact agreement of the window count with the near count; plus a
/// per-cell delta-monotonicity check.
pub fn run_near_grid(spec: &ExperimentSpec) -> Result<RunReport, SpecError> {
    spec.validate()?;
    if spec.delta_grid.is_empty() {
        return Err(SpecError::EmptyDeltaGrid);
    }
    let cells: Vec<(usize, &Rat)> = spec.a_grid.iter().enumerate().collect();
    let mut rows: Vec<BoundReport> = cells
        .par_iter()
        .map(|(idx, a)| near_cell_rows(spec, *idx, a))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    canonical_sort(&mut rows);
    Ok(RunReport::finalize(rows))
}

fn near_cell_rows(spec: &ExperimentSpec, idx: usize, a: &Rat) -> Vec<BoundReport> {
    let b = spec.b_rule.b_for(a);
    let base = RowBase::new(format!("cell-{idx:05}"), &spec.parabola, a, &b);
    let inst = match spec.instance(a) {
        Ok(inst) => inst,
        Err(_) => return vec![base.cell_error()],
    };
    let mut rows = Vec::new();
    let m = inst.x_max();
    let env = theorem1_envelope(&inst, &spec.envelope_params());
    let params = ProofParameters::from_instance(&inst);
    let h_list = spec.h_values(&params);
    let series = match (&h_list, spec.checks) {
        (Some(list), ChecksKind::Full) => {
            let h_top = *list.iter().max().expect("nonempty");
            Some(ExpSumSeries::compute(&inst, h_top, PhaseMode::ExactReduced))
        }
        _ => None,
    };

    let mut counts = Vec::new();
    for delta in &spec.delta_grid {
        let count = match inst.near_count(delta) {
            Ok(c) => c,
            Err(_) => {
                rows.push(base.cell_error());
                continue;
            }
        };
        counts.push((delta.clone(), count));
        rows.push(base.row(
            Quantity::NearCount,
            Some(delta.clone()),
            None,
            Value::Int(BigInt::from(count)),
            Value::Float(m as f64),
            ratio_of(count as f64, m as f64),
            count <= m,
        ));

        let near_err = inst
            .near_count_error(delta)
            .expect("delta validated")
            .abs();
        let near_err_f = near_err.to_f64();
        rows.push(base.row(
            Quantity::NearErrorVsEnvelope,
            Some(delta.clone()),
            None,
            Value::Rat(near_err.clone()),
            Value::Float(env),
            ratio_of(near_err_f, env),
            true, // fitted later
        ));

        if spec.checks == ChecksKind::EnvelopeOnly {
            continue;
        }

        let window = DiscrepancyWindow::symmetric(delta).expect("delta in (0, 1/2)");
        let z = crate::expsum::z_count(&inst, &window);
        let gap = z.abs_diff(count);
        rows.push(base.row(
            Quantity::ZNearCountGap,
            Some(delta.clone()),
            None,
            Value::Float(gap as f64),
            Value::Float(1.0),
            gap as f64,
            gap == 0,
        ));

        match &series {
            None => {
                let near_err_term = ErrorTerm {
                    signed: inst.near_count_error(delta).expect("delta validated"),
                    abs: near_err,
                };
                rows.push(trivial_bound_row(&base, &near_err_term, &inst, Some(delta.clone())));
            }
            Some(series) => {
                let d = discrepancy(&inst, &window).abs();
                for &h in h_list.as_ref().expect("series implies h list") {
                    let et = erdos_turan_bound_prefix(series, h);
                    rows.push(base.row(
                        Quantity::ErdosTuranDiscrepancy,
                        Some(delta.clone()),
                        Some(h),
                        Value::Float(d),
                        Value::Float(et),
                        ratio_of(d, et),
                        le_with_slack(d, et),
                    ));
                }
            }
        }
    }

    // near_count must be nondecreasing along the sorted deltas.
    counts.sort_by(|(d1, _), (d2, _)| d1.cmp(d2));
    let violations = counts.windows(2).filter(|w| w[0].1 > w[1].1).count();
    rows.push(base.row(
        Quantity::NearCountDeltaMonotone,
        None,
        None,
        Value::Float(violations as f64),
        Value::Float(1.0),
        violations as f64,
        violations == 0,
    ));
    rows
}

/// Scans integer a in `a_min..=a_max` with b = a and the standard parabola,
/// ranking cells by |E(a,a)|/sqrt(a) descending and reporting the top_k,
/// each with the normalized-error ratio and the ratio against the
/// lower-bound envelope.
pub fn extremal_search(
    a_min: u64,
    a_max: u64,
    spec: &ExperimentSpec,
) -> Result<RunReport, SpecError> {
    spec.validate()?;
    if a_min < 16 || a_min > a_max {
        return Err(SpecError::InvalidExtremalRange { a_min, a_max });
    }
    let env_params = spec.envelope_params();
    let mut cells: Vec<(u64, Rat, f64, f64)> = (a_min..=a_max)
        .into_par_iter()
        .map(|a| {
            let inst = CountingInstance::new(
                Parabola::standard(),
                Rat::from(a),
                Rat::from(a),
            )
            .expect("a >= 16 satisfies the hypotheses");
            let err = inst.error_term();
            let err_f = err.abs.to_f64();
            let norm_ratio = err_f / (a as f64).sqrt();
            let cp = chamizo_pastor_floor(a as f64, &env_params)
                .expect("a >= 16 and default epsilon < sqrt(2)");
            (a, err.abs, norm_ratio, err_f / cp)
        })
        .collect();
    cells.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .expect("ratios are finite")
            .then(x.0.cmp(&y.0))
    });
    cells.truncate(spec.top_k);

    let mut rows = Vec::new();
    let p0 = Parabola::standard();
    for (a, err_abs, norm_ratio, _) in &cells {
        let a_rat = Rat::from(*a);
        let base = RowBase::new(format!("a-{a:06}"), &p0, &a_rat, &a_rat);
        rows.push(base.row(
            Quantity::ExtremalNormalizedError,
            None,
            None,
            Value::Rat(err_abs.clone()),
            Value::Float((*a as f64).sqrt()),
            *norm_ratio,
            true, // fitted later
        ));
    }
    for (a, err_abs, _, cp_ratio) in &cells {
        let a_rat = Rat::from(*a);
        let base = RowBase::new(format!("a-{a:06}"), &p0, &a_rat, &a_rat);
        let cp = chamizo_pastor_floor(*a as f64, &env_params).expect("validated range");
        rows.push(base.row(
            Quantity::ExtremalVsChamizoPastor,
            None,
            None,
            Value::Rat(err_abs.clone()),
            Value::Float(cp),
            *cp_ratio,
            true, // fitted later
        ));
    }
    Ok(RunReport::finalize(rows))
}

/// Canonical row order: by cell, then window, then H, then check kind.
fn canonical_sort(rows: &mut [BoundReport]) {
    rows.sort_by(|x, y| {
        x.instance_id
            .cmp(&y.instance_id)
            .then_with(|| x.delta.cmp(&y.delta))
            .then_with(|| x.h.cmp(&y.h))
            .then_with(|| x.quantity.cmp(&y.quantity))
    });
}

/// Every intermediate quantity of the error analysis for a single cell.
#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub instance_id: String,
    pub alpha: Rat,
    pub beta: Rat,
    pub gamma: Rat,
    pub a: Rat,
    pub b: Rat,
    pub x_max: u64,
    #[serde(serialize_with = "ser_bigint")]
    pub floor_sum: BigInt,
    pub main_term: Rat,
    pub psi_sum: Rat,
    pub error_signed: Rat,
    pub error_abs: Rat,
    pub q: Rat,
    pub h_cutoff: u64,
    pub delta_cap: f64,
    pub theorem1_envelope: f64,
    /// True when the paper H rule yields 0 (b^2 <= a): the chain is not run
    /// and the trivial bound |E| <= b applies.
    pub trivial_path: bool,
    pub chain: Option<ChainQuantities>,
}

/// The H-dependent part of the chain.
#[derive(Debug, Clone, Serialize)]
pub struct ChainQuantities {
    pub h: u64,
    /// S(1..H) as [re, im] pairs.
    pub series: ExpSumSeries,
    pub vaaler_bound: f64,
    pub cauchy_schwarz_lhs: f64,
    pub cauchy_schwarz_rhs: f64,
    pub second_moment_lhs: f64,
    pub second_moment_weyl: f64,
    pub i_sum: f64,
    pub i1_sum: f64,
    pub i2_sum: f64,
    pub f_bh: f64,
    pub i_decomposition_rhs: f64,
    pub e22_rhs: f64,
}

fn ser_bigint<S: serde::Serializer>(x: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

/// Evaluates the whole chain on the first grid cell.
pub fn prove_chain(spec: &ExperimentSpec) -> Result<ChainReport, SpecError> {
    spec.validate()?;
    let a = spec.a_grid.first().ok_or(SpecError::EmptyAGrid)?;
    let b = spec.b_rule.b_for(a);
    let inst = spec
        .instance(a)
        .map_err(|_| SpecError::InvalidAEntry { a: a.clone(), requirement: "instantiable" })?;
    let err = inst.error_term();
    let params = ProofParameters::from_instance(&inst);
    let env = theorem1_envelope(&inst, &spec.envelope_params());
    let h = match spec.h_values(&params) {
        None => None,
        Some(list) => Some(*list.iter().max().expect("nonempty")),
    };
    let chain = h.map(|h| {
        let series = ExpSumSeries::compute(&inst, h, PhaseMode::ExactReduced);
        let cs_lhs = weighted_modulus_prefix(&series, h);
        let sm_lhs = second_moment_lhs_prefix(&series, h);
        let isums = ISums::compute(&inst, h);
        let b_f = inst.b().to_f64();
        let f_bh = divisor_envelope_f((b_f * h as f64).max(3.0), spec.epsilon)
            .expect("argument floored at 3");
        let ln_h = (h as f64).ln();
        ChainQuantities {
            h,
            vaaler_bound: vaaler_bound_prefix(&series, h),
            cauchy_schwarz_lhs: cs_lhs,
            cauchy_schwarz_rhs: harmonic(h).sqrt() * sm_lhs.sqrt(),
            second_moment_lhs: sm_lhs,
            second_moment_weyl: second_moment_weyl(&inst, h),
            i_sum: isums.i,
            i1_sum: isums.i1,
            i2_sum: isums.i2,
            f_bh,
            i_decomposition_rhs: b_f.max(3.0).ln().ln() * isums.i1 + b_f * f_bh * isums.i2,
            e22_rhs: b_f / h as f64 + ln_h.sqrt() * (b_f * ln_h + isums.i).sqrt(),
            series,
        }
    });
    Ok(ChainReport {
        instance_id: "cell-00000".into(),
        alpha: spec.parabola.alpha().clone(),
        beta: spec.parabola.beta().clone(),
        gamma: spec.parabola.gamma().clone(),
        a: a.clone(),
        b,
        x_max: inst.x_max(),
        floor_sum: inst.floor_sum(),
        main_term: inst.main_term(),
        psi_sum: inst.psi_sum(),
        error_signed: err.signed,
        error_abs: err.abs,
        q: params.q,
        h_cutoff: params.h_cutoff,
        delta_cap: params.delta_cap,
        theorem1_envelope: env,
        trivial_path: h.is_none(),
        chain,
    })
}

impl ChainReport {
    /// The chain as standard report rows (the CSV rendering).
    pub fn to_rows(&self) -> RunReport {
        let parabola = Parabola::new(self.alpha.clone(), self.beta.clone(), self.gamma.clone())
            .expect("alpha was validated");
        let base = RowBase::new(self.instance_id.clone(), &parabola, &self.a, &self.b);
        let raw = |q: Quantity, v: Value| {
            let f = v.to_f64();
            base.row(q, None, None, v, Value::Float(1.0), f, true)
        };
        let mut rows = vec![
            raw(Quantity::FloorSum, Value::Int(self.floor_sum.clone())),
            raw(Quantity::MainTerm, Value::Rat(self.main_term.clone())),
            raw(Quantity::PsiSum, Value::Rat(self.psi_sum.clone())),
            raw(Quantity::ErrorSigned, Value::Rat(self.error_signed.clone())),
            raw(Quantity::ResonanceQ, Value::Rat(self.q.clone())),
            raw(Quantity::HCutoff, Value::Int(BigInt::from(self.h_cutoff))),
            raw(Quantity::DeltaCap, Value::Float(self.delta_cap)),
        ];
        let err_f = self.error_abs.to_f64();
        rows.push(base.row(
            Quantity::ErrorVsEnvelope,
            None,
            None,
            Value::Rat(self.error_abs.clone()),
            Value::Float(self.theorem1_envelope),
            ratio_of(err_f, self.theorem1_envelope),
            true,
        ));
        match &self.chain {
            None => {
                let m_f = self.x_max as f64;
                let b_f = self.b.to_f64();
                rows.push(base.row(
                    Quantity::TrivialBoundPath,
                    None,
                    None,
                    Value::Rat(self.error_abs.clone()),
                    Value::Float(b_f),
                    ratio_of(err_f, b_f),
                    err_f <= m_f,
                ));
            }
            Some(c) => {
                let m_f = self.x_max as f64;
                for (i, s) in c.series.values().iter().enumerate() {
                    let abs = s.norm();
                    rows.push(base.row(
                        Quantity::ExpSumAbs,
                        None,
                        Some(i as u64 + 1),
                        Value::Float(abs),
                        Value::Float(m_f),
                        ratio_of(abs, m_f),
                        abs <= m_f + 1e-6,
                    ));
                }
                rows.push(base.row(
                    Quantity::VaalerPsiBound,
                    None,
                    Some(c.h),
                    Value::Rat(self.error_abs.clone()),
                    Value::Float(c.vaaler_bound),
                    ratio_of(err_f, c.vaaler_bound),
                    le_with_slack(err_f, c.vaaler_bound),
                ));
                rows.push(base.row(
                    Quantity::CauchySchwarz,
                    None,
                    Some(c.h),
                    Value::Float(c.cauchy_schwarz_lhs),
                    Value::Float(c.cauchy_schwarz_rhs),
                    ratio_of(c.cauchy_schwarz_lhs, c.cauchy_schwarz_rhs),
                    le_with_slack(c.cauchy_schwarz_lhs, c.cauchy_schwarz_rhs),
                ));
                rows.push(base.row(
                    Quantity::SecondMomentIdentity,
                    None,
                    Some(c.h),
                    Value::Float(c.second_moment_lhs),
                    Value::Float(c.second_moment_weyl),
                    ratio_of(c.second_moment_lhs, c.second_moment_weyl),
                    second_moments_agree(c.second_moment_lhs, c.second_moment_weyl),
                ));
                rows.push(base.row(
                    Quantity::IDecomposition,
                    None,
                    Some(c.h),
                    Value::Float(c.i_sum),
                    Value::Float(c.i_decomposition_rhs),
                    ratio_of(c.i_sum, c.i_decomposition_rhs),
                    true,
                ));
                rows.push(base.row(
                    Quantity::E22Assembly,
                    None,
                    Some(c.h),
                    Value::Rat(self.error_abs.clone()),
                    Value::Float(c.e22_rhs),
                    ratio_of(err_f, c.e22_rhs),
                    true,
                ));
            }
        }
        RunReport::finalize(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> Rat {
        s.parse().unwrap()
    }

    fn base_spec() -> ExperimentSpec {
        ExperimentSpec::new(Parabola::standard())
    }

    #[test]
    fn single_cell_error_grid_has_six_rows_all_pass() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("2")];
        spec.b_rule = BRule::Fixed(rat("2"));
        let report = run_error_grid(&spec).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.all_pass(), "{:#?}", report.rows);
        let quantities: Vec<&str> = report.rows.iter().map(|r| r.quantity.as_str()).collect();
        assert_eq!(
            quantities,
            vec![
                "error_vs_envelope",
                "vaaler_psi_bound",
                "cauchy_schwarz",
                "second_moment_identity",
                "i_decomposition",
                "e22_assembly"
            ]
        );
    }

    #[test]
    fn empty_grid_gives_empty_report() {
        let spec = base_spec();
        let report = run_error_grid(&spec).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.all_pass());
        assert!(report.fitted_constants.is_empty());
    }

    #[test]
    fn error_grid_is_deterministic() {
        let mut spec = base_spec();
        spec.a_grid = (2..40u64).map(Rat::from).collect();
        spec.b_rule = BRule::ProportionalToA(rat("1"));
        let r1 = run_error_grid(&spec).unwrap();
        let r2 = run_error_grid(&spec).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
    }

    #[test]
    fn serial_and_parallel_rows_agree() {
        let mut spec = base_spec();
        spec.a_grid = (2..30u64).map(Rat::from).collect();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let serial = pool1.install(|| run_error_grid(&spec).unwrap());
        let parallel = pool4.install(|| run_error_grid(&spec).unwrap());
        assert_eq!(serial.to_csv(), parallel.to_csv());
    }

    #[test]
    fn trivial_path_when_b_squared_below_a() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("100")];
        spec.b_rule = BRule::Fixed(rat("3"));
        let report = run_error_grid(&spec).unwrap();
        let kinds: Vec<&str> = report.rows.iter().map(|r| r.quantity.as_str()).collect();
        assert_eq!(kinds, vec!["error_vs_envelope", "trivial_bound_path"]);
        assert!(report.all_pass());
    }

    #[test]
    fn near_grid_example_cell() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("2")];
        spec.b_rule = BRule::Fixed(rat("4"));
        spec.delta_grid = vec![rat("1/4")];
        let report = run_near_grid(&spec).unwrap();
        let count_row = report
            .rows
            .iter()
            .find(|r| r.quantity == Quantity::NearCount)
            .unwrap();
        assert!(matches!(&count_row.computed, Value::Int(i) if *i == BigInt::from(2)));
        let err_row = report
            .rows
            .iter()
            .find(|r| r.quantity == Quantity::NearErrorVsEnvelope)
            .unwrap();
        assert!(matches!(&err_row.computed, Value::Rat(r) if r.is_zero()));
        assert!(report.all_pass(), "{:#?}", report.rows);
    }

    #[test]
    fn near_grid_relaxed_degenerate_cell() {
        let mut spec = base_spec();
        spec.relaxed = true;
        spec.a_grid = vec![rat("1")];
        spec.b_rule = BRule::Fixed(rat("7"));
        spec.delta_grid = vec![rat("1/10"), rat("1/4"), rat("2/5")];
        let report = run_near_grid(&spec).unwrap();
        for row in report.rows.iter().filter(|r| r.quantity == Quantity::NearCount) {
            assert!(matches!(&row.computed, Value::Int(i) if *i == BigInt::from(7)));
        }
        // error = x_max - 2 delta b = 7 - 2 delta 7
        let err_row = report
            .rows
            .iter()
            .find(|r| {
                r.quantity == Quantity::NearErrorVsEnvelope && r.delta == Some(rat("1/4"))
            })
            .unwrap();
        assert!(matches!(&err_row.computed, Value::Rat(v) if *v == rat("7/2")));
        assert!(report.all_pass());
    }

    #[test]
    fn near_grid_requires_deltas() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("2")];
        assert!(matches!(run_near_grid(&spec), Err(SpecError::EmptyDeltaGrid)));
    }

    #[test]
    fn spec_validation_rejects_bad_entries() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("1")];
        assert!(matches!(
            run_error_grid(&spec),
            Err(SpecError::InvalidAEntry { .. })
        ));

        let mut spec = base_spec();
        spec.a_grid = vec![rat("2")];
        spec.delta_grid = vec![rat("1/2")];
        assert!(matches!(
            run_near_grid(&spec),
            Err(SpecError::InvalidDelta { .. })
        ));

        let mut spec = base_spec();
        spec.a_grid = vec![rat("2")];
        spec.h_rule = HRule::Sweep(3, 2);
        assert!(matches!(run_error_grid(&spec), Err(SpecError::InvalidHRule)));

        let mut spec = base_spec();
        spec.epsilon = 0.0;
        assert!(matches!(run_error_grid(&spec), Err(SpecError::InvalidEpsilon)));
    }

    #[test]
    fn extremal_search_sorted_and_bounded() {
        let mut spec = base_spec();
        spec.top_k = 10;
        let report = extremal_search(16, 100, &spec).unwrap();
        let norm: Vec<&BoundReport> = report
            .rows
            .iter()
            .filter(|r| r.quantity == Quantity::ExtremalNormalizedError)
            .collect();
        assert_eq!(norm.len(), 10);
        for w in norm.windows(2) {
            assert!(w[0].ratio >= w[1].ratio);
        }
        // a = 16 has |E| = 4.5, ratio 1.125; it must rank at or near the top.
        assert!(norm[0].ratio >= 1.0);
        assert!(extremal_search(10, 100, &spec).is_err());
        assert!(extremal_search(200, 100, &spec).is_err());
    }

    #[test]
    fn extremal_single_cell_ratio() {
        let mut spec = base_spec();
        spec.top_k = 5;
        let report = extremal_search(16, 16, &spec).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.quantity, Quantity::ExtremalNormalizedError);
        // E(16,16) = 4.5 exactly, sqrt(16) = 4.
        assert!(matches!(&row.computed, Value::Rat(r) if *r == rat("9/2")));
        assert!((row.ratio - 1.125).abs() < 1e-12);
    }

    #[test]
    fn sweep_h_rule_emits_rows_per_h() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("5")];
        spec.b_rule = BRule::Fixed(rat("9"));
        spec.h_rule = HRule::Sweep(1, 3);
        let report = run_error_grid(&spec).unwrap();
        let vaaler_hs: Vec<u64> = report
            .rows
            .iter()
            .filter(|r| r.quantity == Quantity::VaalerPsiBound)
            .map(|r| r.h.unwrap())
            .collect();
        assert_eq!(vaaler_hs, vec![1, 2, 3]);
        assert!(report.all_pass());
    }

    #[test]
    fn envelope_only_skips_chain() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("17"), rat("18")];
        spec.checks = ChecksKind::EnvelopeOnly;
        let report = run_error_grid(&spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report
            .rows
            .iter()
            .all(|r| r.quantity == Quantity::ErrorVsEnvelope));
    }

    #[test]
    fn prove_chain_dumps_everything() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("25")];
        let chain = prove_chain(&spec).unwrap();
        assert!(!chain.trivial_path);
        let c = chain.chain.as_ref().unwrap();
        assert_eq!(c.h, chain.h_cutoff);
        assert!(second_moments_agree(c.second_moment_lhs, c.second_moment_weyl));
        let rows = chain.to_rows();
        assert!(rows.all_pass(), "{:#?}", rows.rows);
        // JSON carries the series as [re, im] pairs.
        let json = serde_json::to_string(&chain).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["chain"]["series"][0].is_array());
        assert_eq!(v["chain"]["series"][0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn prove_chain_trivial_cell() {
        let mut spec = base_spec();
        spec.a_grid = vec![rat("100")];
        spec.b_rule = BRule::Fixed(rat("3"));
        let chain = prove_chain(&spec).unwrap();
        assert!(chain.trivial_path);
        assert!(chain.chain.is_none());
        assert!(chain.to_rows().all_pass());
    }
}
