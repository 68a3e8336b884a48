//! Finite structural-causal-model lab: exact enumeration of hallucination
//! risks, robustness under spurious-variable distribution shifts, and the
//! information-theoretic claims behind causal input refinement.
//!
//! Model: facts `F`, spurious variables `S`, noises `U_X`, `U_Y`, all
//! mutually independent; observed context `X = phi(F, S, U_X)`; true
//! answer `Y* = g(F, Q, U_Y)` with a fixed query `Q`; admissible answer
//! set `A(F, Q)`; refined representation `R = tau(X)`.
//!
//! The Bayes hallucination risk of a witness `W` (either `X` or `R`) is
//!
//! ```text
//! risk(W) = 1 - E_w[ max_y P(Y* = y, y in A(F,Q) | W = w) ]
//! ```
//!
//! i.e. the error of the decision rule that answers the most probable
//! admissible-and-true answer given `W`. The *robust* risk evaluates that
//! same base-distribution rule under every S-shift in the family and takes
//! the worst case: the predictor is fixed while the world moves, which is
//! what makes refinement protective. Re-optimizing the rule per shift
//! would collapse the comparison to equality whenever sufficiency holds.
//!
//! Everything here is exact summation over atom probabilities; sampling
//! appears only as an independent cross-check oracle in tests.

mod family;
mod format;

pub use family::{
    leak_instance, projection_instance, render_matrix, run_theory_suite, LabInstance,
    SeedOutcome, TheorySuiteReport,
};
pub use format::{parse_scm, render_scm};

use std::collections::BTreeSet;

use thiserror::Error;

/// Default cap on the enumeration product |F||S||U_X||U_Y|.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 10_000_000;
/// Prior tables must sum to one within this tolerance.
pub const PRIOR_SUM_TOL: f64 = 1e-12;
/// Equality tolerance for exact quantities (non-expansion margin,
/// invariance distance, Rao-Blackwell equality).
pub const EXACT_TOL: f64 = 1e-12;
/// Inequality tolerance for the divergence-based checks.
pub const INEQUALITY_TOL: f64 = 1e-10;
/// Conditional-independence diagnostics threshold.
pub const ASSUMPTION_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("domain product {size} exceeds enumeration limit {limit}")]
    DomainTooLarge { size: usize, limit: usize },
    #[error("shift family is empty")]
    EmptyShiftFamily,
    #[error("facts are not a function of the observed context")]
    NotRecoverable,
    #[error("assumption diagnostics failed: {0}")]
    AssumptionViolated(String),
    #[error("shifted distribution has mass outside the base support")]
    SupportMismatch,
    #[error("witness length must be positive on the support")]
    ZeroLength,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("bad model document: {0}")]
    Format(String),
}

/// Which information the answerer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Witness {
    /// The raw observed context `X`.
    Observed,
    /// The refined representation `R = tau(X)`.
    Refined,
}

/// Deterministic refinement map from X values to R values; total on the X
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CipTransform {
    pub map: Vec<usize>,
    pub r_card: usize,
}

impl CipTransform {
    pub fn new(map: Vec<usize>, r_card: usize) -> Result<Self, ScmError> {
        if map.iter().any(|r| *r >= r_card) {
            return Err(ScmError::Invalid(
                "transform maps outside the R domain".to_string(),
            ));
        }
        Ok(Self { map, r_card })
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }
}

/// Finite list of alternative S priors; the F, U_X, U_Y priors stay fixed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShiftFamily {
    pub shifts: Vec<Vec<f64>>,
}

impl ShiftFamily {
    pub fn new(shifts: Vec<Vec<f64>>) -> Self {
        Self { shifts }
    }
}

/// Finite SCM with explicit prior and function tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    pub f_card: usize,
    pub s_card: usize,
    pub ux_card: usize,
    pub uy_card: usize,
    pub x_card: usize,
    pub y_card: usize,
    pub p_f: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_ux: Vec<f64>,
    pub p_uy: Vec<f64>,
    /// Row-major (f, s, ux) -> x.
    phi: Vec<usize>,
    /// Row-major (f, uy) -> y, at the fixed query.
    g: Vec<usize>,
    pub query: usize,
    admissible: Vec<BTreeSet<usize>>,
    enumeration_limit: usize,
}

fn check_prior(name: &str, prior: &[f64], card: usize) -> Result<(), ScmError> {
    if prior.len() != card {
        return Err(ScmError::Invalid(format!(
            "{name} prior has {} entries, expected {card}",
            prior.len()
        )));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ScmError::Invalid(format!(
            "{name} prior has negative or non-finite entries"
        )));
    }
    let sum: f64 = prior.iter().sum();
    if (sum - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(ScmError::Invalid(format!(
            "{name} prior sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl DiscreteScm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p_f: Vec<f64>,
        p_s: Vec<f64>,
        p_ux: Vec<f64>,
        p_uy: Vec<f64>,
        x_card: usize,
        y_card: usize,
        phi: Vec<usize>,
        g: Vec<usize>,
        query: usize,
        admissible: Vec<BTreeSet<usize>>,
    ) -> Result<Self, ScmError> {
        let (f_card, s_card, ux_card, uy_card) = (p_f.len(), p_s.len(), p_ux.len(), p_uy.len());
        if f_card == 0 || s_card == 0 || ux_card == 0 || uy_card == 0 || x_card == 0 || y_card == 0
        {
            return Err(ScmError::Invalid("all domains must be non-empty".to_string()));
        }
        check_prior("F", &p_f, f_card)?;
        check_prior("S", &p_s, s_card)?;
        check_prior("U_X", &p_ux, ux_card)?;
        check_prior("U_Y", &p_uy, uy_card)?;
        if phi.len() != f_card * s_card * ux_card {
            return Err(ScmError::Invalid(format!(
                "phi table has {} entries, expected {}",
                phi.len(),
                f_card * s_card * ux_card
            )));
        }
        if phi.iter().any(|x| *x >= x_card) {
            return Err(ScmError::Invalid("phi maps outside the X domain".to_string()));
        }
        if g.len() != f_card * uy_card {
            return Err(ScmError::Invalid(format!(
                "g table has {} entries, expected {}",
                g.len(),
                f_card * uy_card
            )));
        }
        if g.iter().any(|y| *y >= y_card) {
            return Err(ScmError::Invalid("g maps outside the Y domain".to_string()));
        }
        if admissible.len() != f_card {
            return Err(ScmError::Invalid(format!(
                "admissible table has {} entries, expected {f_card}",
                admissible.len()
            )));
        }
        let g_range: BTreeSet<usize> = g.iter().copied().collect();
        for (f, adm) in admissible.iter().enumerate() {
            if adm.is_empty() {
                return Err(ScmError::Invalid(format!(
                    "admissible set for f={f} is empty"
                )));
            }
            if let Some(y) = adm.iter().find(|y| !g_range.contains(y)) {
                return Err(ScmError::Invalid(format!(
                    "admissible answer {y} for f={f} is outside the range of g"
                )));
            }
        }
        Ok(Self {
            f_card,
            s_card,
            ux_card,
            uy_card,
            x_card,
            y_card,
            p_f,
            p_s,
            p_ux,
            p_uy,
            phi,
            g,
            query,
            admissible,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
        })
    }

    pub fn with_enumeration_limit(mut self, limit: usize) -> Self {
        self.enumeration_limit = limit;
        self
    }

    pub fn phi_of(&self, f: usize, s: usize, ux: usize) -> usize {
        self.phi[(f * self.s_card + s) * self.ux_card + ux]
    }

    pub fn g_of(&self, f: usize, uy: usize) -> usize {
        self.g[f * self.uy_card + uy]
    }

    pub fn admissible(&self, f: usize) -> &BTreeSet<usize> {
        &self.admissible[f]
    }

    pub fn phi_table(&self) -> &[usize] {
        &self.phi
    }

    pub fn g_table(&self) -> &[usize] {
        &self.g
    }

    fn ensure_enumerable(&self) -> Result<(), ScmError> {
        let size = self
            .f_card
            .saturating_mul(self.s_card)
            .saturating_mul(self.ux_card)
            .saturating_mul(self.uy_card);
        if size > self.enumeration_limit {
            return Err(ScmError::DomainTooLarge {
                size,
                limit: self.enumeration_limit,
            });
        }
        Ok(())
    }

    fn check_shift(&self, shift: &[f64]) -> Result<(), ScmError> {
        check_prior("shifted S", shift, self.s_card)
    }

    /// Drive `visit` over every positive-probability atom, optionally
    /// under a shifted S prior.
    fn for_each_atom<V: FnMut(Atom)>(
        &self,
        shift: Option<&[f64]>,
        mut visit: V,
    ) -> Result<(), ScmError> {
        self.ensure_enumerable()?;
        if let Some(table) = shift {
            self.check_shift(table)?;
        }
        let p_s = shift.unwrap_or(&self.p_s);
        for f in 0..self.f_card {
            let pf = self.p_f[f];
            if pf == 0.0 {
                continue;
            }
            for (s, &ps) in p_s.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                for ux in 0..self.ux_card {
                    let pux = self.p_ux[ux];
                    if pux == 0.0 {
                        continue;
                    }
                    let x = self.phi_of(f, s, ux);
                    for uy in 0..self.uy_card {
                        let puy = self.p_uy[uy];
                        if puy == 0.0 {
                            continue;
                        }
                        visit(Atom {
                            f,
                            s,
                            x,
                            y: self.g_of(f, uy),
                            p: pf * ps * pux * puy,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// True iff S influences X: some (f, ux) row of phi varies with s.
    pub fn spurious_s_to_x(&self) -> bool {
        for f in 0..self.f_card {
            for ux in 0..self.ux_card {
                let first = self.phi_of(f, 0, ux);
                for s in 1..self.s_card {
                    if self.phi_of(f, s, ux) != first {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn witness_of(&self, x: usize, witness: Witness, tau: &CipTransform) -> usize {
        match witness {
            Witness::Observed => x,
            Witness::Refined => tau.apply(x),
        }
    }

    fn witness_card(&self, witness: Witness, tau: &CipTransform) -> usize {
        match witness {
            Witness::Observed => self.x_card,
            Witness::Refined => tau.r_card,
        }
    }
}

struct Atom {
    f: usize,
    s: usize,
    x: usize,
    y: usize,
    p: f64,
}

/// Exact joint distribution over (F, S, X, Y*), noises marginalized out.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub f_card: usize,
    pub s_card: usize,
    pub x_card: usize,
    pub y_card: usize,
    data: Vec<f64>,
}

impl JointTable {
    fn index(&self, f: usize, s: usize, x: usize, y: usize) -> usize {
        ((f * self.s_card + s) * self.x_card + x) * self.y_card + y
    }

    pub fn prob(&self, f: usize, s: usize, x: usize, y: usize) -> f64 {
        self.data[self.index(f, s, x, y)]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn marginal_f(&self) -> Vec<f64> {
        let block = self.s_card * self.x_card * self.y_card;
        self.data
            .chunks(block)
            .map(|chunk| chunk.iter().sum())
            .collect()
    }
}

/// Enumerate the exact joint over (F, S, X, Y*), optionally under a
/// shifted S prior.
pub fn joint_table(scm: &DiscreteScm, shift: Option<&[f64]>) -> Result<JointTable, ScmError> {
    let mut table = JointTable {
        f_card: scm.f_card,
        s_card: scm.s_card,
        x_card: scm.x_card,
        y_card: scm.y_card,
        data: vec![0.0; scm.f_card * scm.s_card * scm.x_card * scm.y_card],
    };
    scm.for_each_atom(shift, |atom| {
        let idx = table.index(atom.f, atom.s, atom.x, atom.y);
        table.data[idx] += atom.p;
    })?;
    Ok(table)
}

/// Base-distribution decision rule for a witness: for each witness value,
/// the answer maximizing P(Y* = y, y admissible, W = w), ties broken by
/// the smallest answer index.
fn base_rule(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
) -> Result<(Vec<usize>, f64), ScmError> {
    let w_card = scm.witness_card(witness, tau);
    let mut weight = vec![0.0; w_card * scm.y_card];
    scm.for_each_atom(None, |atom| {
        if scm.admissible[atom.f].contains(&atom.y) {
            let w = scm.witness_of(atom.x, witness, tau);
            weight[w * scm.y_card + atom.y] += atom.p;
        }
    })?;
    let mut rule = vec![0usize; w_card];
    let mut value = 0.0;
    for w in 0..w_card {
        let row = &weight[w * scm.y_card..(w + 1) * scm.y_card];
        let mut best = 0usize;
        for y in 1..scm.y_card {
            if row[y] > row[best] {
                best = y;
            }
        }
        rule[w] = best;
        value += row[best];
    }
    Ok((rule, value))
}

/// Risk of a fixed decision rule evaluated under an optionally shifted
/// distribution: probability the rule's answer is wrong or inadmissible.
fn rule_risk(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
    rule: &[usize],
    shift: Option<&[f64]>,
) -> Result<f64, ScmError> {
    let mut success = 0.0;
    scm.for_each_atom(shift, |atom| {
        let w = scm.witness_of(atom.x, witness, tau);
        let answer = rule[w];
        if answer == atom.y && scm.admissible[atom.f].contains(&answer) {
            success += atom.p;
        }
    })?;
    Ok(1.0 - success)
}

/// Exact Bayes hallucination risk under the base distribution.
pub fn bayes_risk(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
) -> Result<f64, ScmError> {
    let (_, value) = base_rule(scm, witness, tau)?;
    Ok(1.0 - value)
}

/// Worst-case risk of the base-distribution rule over the shift family
/// (the identity shift is always included).
pub fn robust_risk(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
    shifts: &ShiftFamily,
) -> Result<f64, ScmError> {
    if shifts.shifts.is_empty() {
        return Err(ScmError::EmptyShiftFamily);
    }
    let (rule, base_value) = base_rule(scm, witness, tau)?;
    let mut worst = 1.0 - base_value;
    for shift in &shifts.shifts {
        let risk = rule_risk(scm, witness, tau, &rule, Some(shift))?;
        worst = worst.max(risk);
    }
    Ok(worst)
}

/// Construct the refinement that recovers F from X, when F is a function
/// of X over the positive-probability atoms.
pub fn oracle_tau(scm: &DiscreteScm) -> Result<CipTransform, ScmError> {
    let mut seen: Vec<Option<usize>> = vec![None; scm.x_card];
    let mut ok = true;
    scm.for_each_atom(None, |atom| match seen[atom.x] {
        None => seen[atom.x] = Some(atom.f),
        Some(f) if f == atom.f => {}
        Some(_) => ok = false,
    })?;
    if !ok {
        return Err(ScmError::NotRecoverable);
    }
    let map = seen.into_iter().map(|f| f.unwrap_or(0)).collect();
    CipTransform::new(map, scm.f_card)
}

/// Conditional-independence diagnostics for a refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// Max deviation of P(y, x | r) from P(y | r) P(x | r).
    pub sufficiency_dev: f64,
    /// Max deviation of P(r, s | f) from P(r | f) P(s | f).
    pub deconfounding_dev: f64,
    /// Max deviation of P(y | do(f)) from P(y | r(f)).
    pub identifiability_dev: f64,
}

impl AssumptionReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.sufficiency_dev <= tol
            && self.deconfounding_dev <= tol
            && self.identifiability_dev <= tol
    }

    pub fn max_dev(&self) -> f64 {
        self.sufficiency_dev
            .max(self.deconfounding_dev)
            .max(self.identifiability_dev)
    }
}

/// Check the three refinement assumptions exactly on the base joint.
pub fn check_assumptions(
    scm: &DiscreteScm,
    tau: &CipTransform,
) -> Result<AssumptionReport, ScmError> {
    let r_card = tau.r_card;
    // Joint over (f, s, x, y) with r derived.
    let mut p_rxy = vec![0.0; r_card * scm.x_card * scm.y_card];
    let mut p_rs_f = vec![0.0; scm.f_card * r_card * scm.s_card];
    let mut p_f = vec![0.0; scm.f_card];
    scm.for_each_atom(None, |atom| {
        let r = tau.apply(atom.x);
        p_rxy[(r * scm.x_card + atom.x) * scm.y_card + atom.y] += atom.p;
        p_rs_f[(atom.f * r_card + r) * scm.s_card + atom.s] += atom.p;
        p_f[atom.f] += atom.p;
    })?;

    // C1: Y independent of X given R.
    let mut sufficiency_dev: f64 = 0.0;
    for r in 0..r_card {
        let slice = |x: usize, y: usize| p_rxy[(r * scm.x_card + x) * scm.y_card + y];
        let pr: f64 = (0..scm.x_card)
            .flat_map(|x| (0..scm.y_card).map(move |y| (x, y)))
            .map(|(x, y)| slice(x, y))
            .sum();
        if pr <= 0.0 {
            continue;
        }
        for x in 0..scm.x_card {
            let px: f64 = (0..scm.y_card).map(|y| slice(x, y)).sum::<f64>() / pr;
            for y in 0..scm.y_card {
                let py: f64 = (0..scm.x_card).map(|x2| slice(x2, y)).sum::<f64>() / pr;
                let joint = slice(x, y) / pr;
                sufficiency_dev = sufficiency_dev.max((joint - px * py).abs());
            }
        }
    }

    // C2: R independent of S given F.
    let mut deconfounding_dev: f64 = 0.0;
    for f in 0..scm.f_card {
        if p_f[f] <= 0.0 {
            continue;
        }
        let slice = |r: usize, s: usize| p_rs_f[(f * r_card + r) * scm.s_card + s] / p_f[f];
        for r in 0..r_card {
            let pr: f64 = (0..scm.s_card).map(|s| slice(r, s)).sum();
            for s in 0..scm.s_card {
                let ps: f64 = (0..r_card).map(|r2| slice(r2, s)).sum();
                deconfounding_dev = deconfounding_dev.max((slice(r, s) - pr * ps).abs());
            }
        }
    }

    // C3: interventional answer distribution matches conditioning on R.
    // Requires R to be degenerate given F (implied by exact C2 when R is
    // built from the F-determined part of X).
    let mut identifiability_dev: f64 = 0.0;
    let mut p_ry = vec![0.0; r_card * scm.y_card];
    scm.for_each_atom(None, |atom| {
        let r = tau.apply(atom.x);
        p_ry[r * scm.y_card + atom.y] += atom.p;
    })?;
    for f in 0..scm.f_card {
        if p_f[f] <= 0.0 {
            continue;
        }
        // The R value this f maps to; non-degenerate mapping is maximal
        // deviation.
        let row = &p_rs_f[f * r_card * scm.s_card..(f + 1) * r_card * scm.s_card];
        let mut r_of_f = None;
        for r in 0..r_card {
            let mass: f64 = row[r * scm.s_card..(r + 1) * scm.s_card].iter().sum();
            if mass > 0.0 {
                if r_of_f.is_some() {
                    identifiability_dev = 1.0;
                    r_of_f = None;
                    break;
                }
                r_of_f = Some(r);
            }
        }
        let Some(r) = r_of_f else { continue };
        let pr: f64 = (0..scm.y_card).map(|y| p_ry[r * scm.y_card + y]).sum();
        if pr <= 0.0 {
            continue;
        }
        for y in 0..scm.y_card {
            let do_f: f64 = (0..scm.uy_card)
                .filter(|uy| scm.g_of(f, *uy) == y)
                .map(|uy| scm.p_uy[uy])
                .sum();
            let cond_r = p_ry[r * scm.y_card + y] / pr;
            identifiability_dev = identifiability_dev.max((do_f - cond_r).abs());
        }
    }

    Ok(AssumptionReport {
        sufficiency_dev,
        deconfounding_dev,
        identifiability_dev,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonExpansionReport {
    pub robust_risk_refined: f64,
    pub robust_risk_observed: f64,
    pub holds: bool,
    pub margin: f64,
    /// True when a spurious S -> X path exists and the margin is strictly
    /// positive.
    pub strict: bool,
}

/// Verify that refinement does not expand the robust risk:
/// `robust(R) <= robust(X)`, with a strictly positive margin expected when
/// a spurious S -> X path exists.
pub fn verify_nonexpansion(
    scm: &DiscreteScm,
    tau: &CipTransform,
    shifts: &ShiftFamily,
) -> Result<NonExpansionReport, ScmError> {
    let diag = check_assumptions(scm, tau)?;
    if !diag.ok(ASSUMPTION_TOL) {
        return Err(ScmError::AssumptionViolated(format!(
            "max deviation {:.3e}",
            diag.max_dev()
        )));
    }
    let robust_risk_refined = robust_risk(scm, Witness::Refined, tau, shifts)?;
    let robust_risk_observed = robust_risk(scm, Witness::Observed, tau, shifts)?;
    let margin = robust_risk_observed - robust_risk_refined;
    Ok(NonExpansionReport {
        robust_risk_refined,
        robust_risk_observed,
        holds: robust_risk_refined <= robust_risk_observed + EXACT_TOL,
        margin,
        strict: scm.spurious_s_to_x() && margin > EXACT_TOL,
    })
}

/// Max total-variation distance, over the shift family, between the
/// shifted and base conditionals P(Y* | R). Zero (within 1e-12) when the
/// refinement assumptions hold; errors with `AssumptionViolated` when the
/// diagnostics fail, since the invariance lemma is conditional on them.
pub fn verify_invariance(
    scm: &DiscreteScm,
    tau: &CipTransform,
    shifts: &ShiftFamily,
) -> Result<f64, ScmError> {
    let diag = check_assumptions(scm, tau)?;
    if !diag.ok(ASSUMPTION_TOL) {
        return Err(ScmError::AssumptionViolated(format!(
            "max deviation {:.3e}",
            diag.max_dev()
        )));
    }
    invariance_distance(scm, tau, shifts)
}

/// The raw invariance distance with no assumption gate, for measuring how
/// far a deliberately broken refinement drifts.
pub fn invariance_distance(
    scm: &DiscreteScm,
    tau: &CipTransform,
    shifts: &ShiftFamily,
) -> Result<f64, ScmError> {
    let conditional = |shift: Option<&[f64]>| -> Result<Vec<Option<Vec<f64>>>, ScmError> {
        let mut p_ry = vec![0.0; tau.r_card * scm.y_card];
        scm.for_each_atom(shift, |atom| {
            p_ry[tau.apply(atom.x) * scm.y_card + atom.y] += atom.p;
        })?;
        Ok((0..tau.r_card)
            .map(|r| {
                let row = &p_ry[r * scm.y_card..(r + 1) * scm.y_card];
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    Some(row.iter().map(|p| p / mass).collect())
                } else {
                    None
                }
            })
            .collect())
    };

    let base = conditional(None)?;
    let mut distance: f64 = 0.0;
    for shift in &shifts.shifts {
        let shifted = conditional(Some(shift))?;
        for r in 0..tau.r_card {
            if let (Some(b), Some(s)) = (&base[r], &shifted[r]) {
                let tv = 0.5 * b.iter().zip(s).map(|(pb, ps)| (pb - ps).abs()).sum::<f64>();
                distance = distance.max(tv);
            }
        }
    }
    Ok(distance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpiReport {
    pub kl_before: f64,
    pub kl_after: f64,
    pub holds: bool,
}

fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, ScmError> {
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return Err(ScmError::SupportMismatch);
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Data-processing inequality on (X, Y) -> (tau(X), Y): the KL divergence
/// between shifted and base joints never grows under the pushforward.
pub fn dpi_check(
    scm: &DiscreteScm,
    tau: &CipTransform,
    shift: &[f64],
) -> Result<DpiReport, ScmError> {
    let collect = |shift: Option<&[f64]>| -> Result<(Vec<f64>, Vec<f64>), ScmError> {
        let mut xy = vec![0.0; scm.x_card * scm.y_card];
        let mut ry = vec![0.0; tau.r_card * scm.y_card];
        scm.for_each_atom(shift, |atom| {
            xy[atom.x * scm.y_card + atom.y] += atom.p;
            ry[tau.apply(atom.x) * scm.y_card + atom.y] += atom.p;
        })?;
        Ok((xy, ry))
    };
    let (base_xy, base_ry) = collect(None)?;
    let (shift_xy, shift_ry) = collect(Some(shift))?;
    let kl_before = kl_divergence(&shift_xy, &base_xy)?;
    let kl_after = kl_divergence(&shift_ry, &base_ry)?;
    Ok(DpiReport {
        kl_before,
        kl_after,
        holds: kl_after <= kl_before + INEQUALITY_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaoBlackwellReport {
    pub risk_observed: f64,
    pub risk_refined: f64,
    pub equal: bool,
}

/// Pure-prediction Bayes risks (0-1 loss on Y* alone, no admissibility)
/// for X and R. Equal within 1e-12 under exact sufficiency; a refinement
/// that discards answer-relevant facts makes the refined risk strictly
/// larger.
pub fn rao_blackwell_check(
    scm: &DiscreteScm,
    tau: &CipTransform,
) -> Result<RaoBlackwellReport, ScmError> {
    let prediction_risk = |witness: Witness| -> Result<f64, ScmError> {
        let w_card = scm.witness_card(witness, tau);
        let mut weight = vec![0.0; w_card * scm.y_card];
        scm.for_each_atom(None, |atom| {
            let w = scm.witness_of(atom.x, witness, tau);
            weight[w * scm.y_card + atom.y] += atom.p;
        })?;
        let mut value = 0.0;
        for w in 0..w_card {
            let row = &weight[w * scm.y_card..(w + 1) * scm.y_card];
            value += row.iter().cloned().fold(0.0, f64::max);
        }
        Ok(1.0 - value)
    };
    let risk_observed = prediction_risk(Witness::Observed)?;
    let risk_refined = prediction_risk(Witness::Refined)?;
    Ok(RaoBlackwellReport {
        risk_observed,
        risk_refined,
        equal: (risk_observed - risk_refined).abs() <= EXACT_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinskerReport {
    pub risk: f64,
    pub bound: f64,
    /// Risk with the facts revealed; the floor of the bound.
    pub informed_risk: f64,
    pub divergence_term: f64,
    pub holds: bool,
}

/// Pinsker-derived excess-risk bound. With `pi_f` the per-fact
/// admissible-answer distribution and `pi_w` its posterior mixture given
/// the witness,
///
/// ```text
/// risk(W) <= risk(F-informed) + E_{(f,w)}[ sqrt(2 KL(pi_f || pi_w)) ]
/// ```
///
/// Both sides are computed exactly. The divergence term vanishes when the
/// witness determines the facts, giving risk(R) = informed risk; an
/// uninformative witness over identical per-fact answer distributions
/// makes the bound tight at equality.
pub fn pinsker_check(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
) -> Result<PinskerReport, ScmError> {
    let risk = bayes_risk(scm, witness, tau)?;

    // pi_f over answers plus a reject symbol holding the inadmissible or
    // wrong mass, so each pi_f is a probability distribution.
    let n_sym = scm.y_card + 1;
    let mut pi_f = vec![0.0; scm.f_card * n_sym];
    for f in 0..scm.f_card {
        let mut mass = 0.0;
        for uy in 0..scm.uy_card {
            let y = scm.g_of(f, uy);
            if scm.admissible[f].contains(&y) {
                pi_f[f * n_sym + y] += scm.p_uy[uy];
                mass += scm.p_uy[uy];
            }
        }
        pi_f[f * n_sym + scm.y_card] = (1.0 - mass).max(0.0);
    }

    let mut informed_value = 0.0;
    for f in 0..scm.f_card {
        let best = pi_f[f * n_sym..f * n_sym + scm.y_card]
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        informed_value += self_weight(&scm.p_f, f) * best;
    }
    let informed_risk = 1.0 - informed_value;

    // Joint P(f, w).
    let w_card = scm.witness_card(witness, tau);
    let mut p_fw = vec![0.0; scm.f_card * w_card];
    scm.for_each_atom(None, |atom| {
        let w = scm.witness_of(atom.x, witness, tau);
        p_fw[atom.f * w_card + w] += atom.p;
    })?;
    let mut p_w = vec![0.0; w_card];
    for f in 0..scm.f_card {
        for w in 0..w_card {
            p_w[w] += p_fw[f * w_card + w];
        }
    }

    let mut divergence_term = 0.0;
    for w in 0..w_card {
        if p_w[w] <= 0.0 {
            continue;
        }
        // Posterior mixture pi_w = sum_f P(f|w) pi_f.
        let mut mix = vec![0.0; n_sym];
        for f in 0..scm.f_card {
            let weight = p_fw[f * w_card + w] / p_w[w];
            for c in 0..n_sym {
                mix[c] += weight * pi_f[f * n_sym + c];
            }
        }
        for f in 0..scm.f_card {
            let pfw = p_fw[f * w_card + w];
            if pfw <= 0.0 {
                continue;
            }
            let kl = kl_divergence(&pi_f[f * n_sym..(f + 1) * n_sym], &mix)?;
            divergence_term += pfw * (2.0 * kl).sqrt();
        }
    }

    let bound = informed_risk + divergence_term;
    Ok(PinskerReport {
        risk,
        bound,
        informed_risk,
        divergence_term,
        holds: risk <= bound + INEQUALITY_TOL,
    })
}

fn self_weight(prior: &[f64], i: usize) -> f64 {
    prior[i]
}

/// Exact effective information density: I(F; W | Q) / E[|W|] in nats,
/// with the query fixed so the conditioning is implicit. `lengths` gives
/// the size of each witness value and must be positive on the support.
pub fn eid_exact(
    scm: &DiscreteScm,
    witness: Witness,
    tau: &CipTransform,
    lengths: &[f64],
) -> Result<f64, ScmError> {
    let w_card = scm.witness_card(witness, tau);
    if lengths.len() != w_card {
        return Err(ScmError::Invalid(format!(
            "expected {} length entries, got {}",
            w_card,
            lengths.len()
        )));
    }
    let mut p_fw = vec![0.0; scm.f_card * w_card];
    scm.for_each_atom(None, |atom| {
        let w = scm.witness_of(atom.x, witness, tau);
        p_fw[atom.f * w_card + w] += atom.p;
    })?;
    let mut p_w = vec![0.0; w_card];
    let mut p_f = vec![0.0; scm.f_card];
    for f in 0..scm.f_card {
        for w in 0..w_card {
            p_w[w] += p_fw[f * w_card + w];
            p_f[f] += p_fw[f * w_card + w];
        }
    }
    let mut mutual_information = 0.0;
    for f in 0..scm.f_card {
        for w in 0..w_card {
            let joint = p_fw[f * w_card + w];
            if joint > 0.0 {
                mutual_information += joint * (joint / (p_f[f] * p_w[w])).ln();
            }
        }
    }
    let mut expected_length = 0.0;
    for w in 0..w_card {
        if p_w[w] > 0.0 {
            if lengths[w] <= 0.0 {
                return Err(ScmError::ZeroLength);
            }
            expected_length += p_w[w] * lengths[w];
        }
    }
    if expected_length <= 0.0 {
        return Err(ScmError::ZeroLength);
    }
    Ok(mutual_information.max(0.0) / expected_length)
}
