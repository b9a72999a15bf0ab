//! Design criteria: the single criteria `D_S`, `(DP)_S`, `A_S`, `(AP)_S`,
//! `I`, `(IP)`, `I_D`, `(I_DP)`, their weighted compound combination, and
//! efficiency tables over sets of competing designs.
//!
//! Everything here is larger-is-better, so one maximizer serves every
//! configuration. A design scores zero under a criterion whenever its
//! information matrix is singular, and under the interval (`P`) criteria
//! whenever it has no pure error degrees of freedom.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{df_accounting, Design, ModelSpec};
use crate::numerics::{f_upper_quantile, SymFactor};
use crate::region::{prediction_moment_matrix, Region};
use crate::scalar::Scalar;

/// Indices into [`CriterionConfig::kappas`].
///
/// The weight order matches the compound criterion: determinant point and
/// interval weights, weighted-trace (`L`) interval and point weights, the
/// degrees-of-freedom weight, then the four prediction weights.
pub mod kappa {
    /// `D_S`: point estimation, determinant scale.
    pub const DS: usize = 0;
    /// `(DP)_S`: interval estimation, determinant scale.
    pub const DPS: usize = 1;
    /// `(AP)_S`: interval estimation, weighted-trace scale.
    pub const APS: usize = 2;
    /// `A_S`: point estimation, weighted-trace scale.
    pub const AS: usize = 3;
    /// Degrees-of-freedom factor `(n - d)`.
    pub const DF: usize = 4;
    /// `I`: point prediction of responses.
    pub const I: usize = 5;
    /// `(IP)`: interval prediction of responses.
    pub const IP: usize = 6;
    /// `I_D`: point prediction of differences from the center.
    pub const ID: usize = 7;
    /// `(I_DP)`: interval prediction of differences from the center.
    pub const IDP: usize = 8;
}

/// Indices into [`CriterionConfig::alphas`].
pub mod alpha {
    pub const DP: usize = 0;
    pub const AP: usize = 1;
    pub const IP: usize = 2;
    pub const IDP: usize = 3;
}

/// Weights and significance levels defining a (possibly compound) criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig<S: Scalar = f64> {
    /// Nonnegative weights summing to one; see [`kappa`] for the order.
    pub kappas: [S; 9],
    /// Significance levels for the four interval adjustments; see [`alpha`].
    pub alphas: [S; 4],
    /// Diagonal of the `W` weight matrix for the `L`-type criteria, one
    /// entry per model term; the intercept entry must be zero.
    pub w: Vec<S>,
}

impl<S: Scalar> CriterionConfig<S> {
    /// Default `W` diagonal: weight 1 for linear and interaction terms, 1/4
    /// for pure quadratics, 0 for the intercept. This is the usual
    /// coded-units scale adjustment; override it via the public field.
    pub fn default_w(model: &ModelSpec) -> Vec<S> {
        model
            .terms()
            .iter()
            .map(|t| match t {
                crate::model::Term::Intercept => S::zero(),
                crate::model::Term::Quadratic(_) => S::of_f64(0.25),
                _ => S::one(),
            })
            .collect()
    }

    pub fn new(kappas: [S; 9], alphas: [S; 4], w: Vec<S>) -> Self {
        CriterionConfig { kappas, alphas, w }
    }

    /// Single-criterion configuration: weight one on `kind`, defaults
    /// everywhere else (`alpha = 0.05`, standard `W`).
    pub fn single(kind: CriterionKind, model: &ModelSpec) -> Self {
        let mut kappas = [S::zero(); 9];
        kappas[kind.kappa_index()] = S::one();
        CriterionConfig {
            kappas,
            alphas: [S::of_f64(0.05); 4],
            w: Self::default_w(model),
        }
    }

    /// Check the configuration against a model with `p` terms.
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut sum = S::zero();
        for &k in &self.kappas {
            if k < S::zero() || !k.finite() {
                return Err(Error::invalid("criterion weights must be nonnegative"));
            }
            sum += k;
        }
        if (sum - S::one()).abs() > S::of_f64(1e-9) {
            return Err(Error::invalid("criterion weights must sum to 1"));
        }
        for &a in &self.alphas {
            if a <= S::zero() || a >= S::one() {
                return Err(Error::invalid("significance levels must lie in (0, 1)"));
            }
        }
        if self.w.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: self.w.len(),
            });
        }
        if self.w.iter().any(|&w| w < S::zero() || !w.finite()) {
            return Err(Error::invalid("W weights must be nonnegative"));
        }
        if self.w[0] != S::zero() {
            return Err(Error::invalid("the intercept W weight must be zero"));
        }
        Ok(())
    }
}

/// The eight named single criteria, in efficiency-table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    Ds,
    Dps,
    As,
    Aps,
    I,
    Ip,
    Id,
    Idp,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 8] = [
        CriterionKind::Ds,
        CriterionKind::Dps,
        CriterionKind::As,
        CriterionKind::Aps,
        CriterionKind::I,
        CriterionKind::Ip,
        CriterionKind::Id,
        CriterionKind::Idp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CriterionKind::Ds => "D_S",
            CriterionKind::Dps => "(DP)_S",
            CriterionKind::As => "A_S",
            CriterionKind::Aps => "(AP)_S",
            CriterionKind::I => "I",
            CriterionKind::Ip => "(IP)",
            CriterionKind::Id => "I_D",
            CriterionKind::Idp => "(I_DP)",
        }
    }

    /// Short machine-friendly name used in CSV headers and CLI flags.
    pub fn key(self) -> &'static str {
        match self {
            CriterionKind::Ds => "ds",
            CriterionKind::Dps => "dps",
            CriterionKind::As => "as",
            CriterionKind::Aps => "aps",
            CriterionKind::I => "i",
            CriterionKind::Ip => "ip",
            CriterionKind::Id => "id",
            CriterionKind::Idp => "idp",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        CriterionKind::ALL.into_iter().find(|k| k.key() == key)
    }

    fn kappa_index(self) -> usize {
        match self {
            CriterionKind::Ds => kappa::DS,
            CriterionKind::Dps => kappa::DPS,
            CriterionKind::As => kappa::AS,
            CriterionKind::Aps => kappa::APS,
            CriterionKind::I => kappa::I,
            CriterionKind::Ip => kappa::IP,
            CriterionKind::Id => kappa::ID,
            CriterionKind::Idp => kappa::IDP,
        }
    }
}

/// Value of a (compound) criterion at one design, with the factor breakdown
/// for audit output.
#[derive(Debug, Clone)]
pub struct CriterionValue<S: Scalar = f64> {
    /// Larger-is-better score; zero when undefined.
    pub value: S,
    /// `false` when the information matrix is singular or an active interval
    /// component has no pure error degrees of freedom.
    pub defined: bool,
    /// Named factors entering the compound expression.
    pub components: Vec<(&'static str, S)>,
}

impl<S: Scalar> CriterionValue<S> {
    fn undefined(components: Vec<(&'static str, S)>) -> Self {
        CriterionValue {
            value: S::zero(),
            defined: false,
            components,
        }
    }
}

/// Precomputed `F` quantiles indexed by pure error degrees of freedom, so
/// the exchange loop never touches the global quantile memo.
#[derive(Debug, Clone)]
pub struct FTable<S: Scalar = f64> {
    dp: Vec<S>,
    ap: Vec<S>,
    ip: Vec<S>,
    idp: Vec<S>,
}

impl<S: Scalar> FTable<S> {
    fn build_column(df1: usize, max_d: usize, alpha: S) -> Result<Vec<S>> {
        (0..=max_d)
            .map(|d| f_upper_quantile(df1, d, alpha))
            .collect()
    }

    pub fn build(cfg: &CriterionConfig<S>, p: usize, max_d: usize) -> Result<Self> {
        Ok(FTable {
            dp: Self::build_column(p - 1, max_d, cfg.alphas[alpha::DP])?,
            ap: Self::build_column(1, max_d, cfg.alphas[alpha::AP])?,
            ip: Self::build_column(1, max_d, cfg.alphas[alpha::IP])?,
            idp: Self::build_column(1, max_d, cfg.alphas[alpha::IDP])?,
        })
    }
}

/// Shared state for evaluating one criterion configuration over many
/// designs: the model, the region's prediction moment matrices and the
/// validated configuration. Construction is the only fallible step; the
/// evaluator itself is immutable and safe to share across threads.
pub struct Evaluator<S: Scalar = f64> {
    model: ModelSpec,
    cfg: CriterionConfig<S>,
    m_pred: DMatrix<S>,
    m_pred0: DMatrix<S>,
}

impl<S: Scalar> Evaluator<S> {
    pub fn new(model: &ModelSpec, region: &Region<S>, cfg: CriterionConfig<S>) -> Result<Self> {
        cfg.validate(model.p())?;
        if region.q() != model.q() {
            return Err(Error::DimensionMismatch {
                expected: model.q(),
                got: region.q(),
            });
        }
        let m_pred = prediction_moment_matrix(region, model)?;
        let m_pred0 = m_pred.zero_intercept();
        Ok(Evaluator {
            model: model.clone(),
            cfg,
            m_pred: m_pred.into_matrix(),
            m_pred0: m_pred0.into_matrix(),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &CriterionConfig<S> {
        &self.cfg
    }

    /// Prediction moment matrix used by the `I`-family components.
    pub fn prediction_moments(&self) -> &DMatrix<S> {
        &self.m_pred
    }

    /// Build the quantile table covering designs of up to `n` runs.
    pub fn f_table(&self, n: usize) -> Result<FTable<S>> {
        FTable::build(&self.cfg, self.model.p(), n)
    }

    /// Gram matrix `X'X` plus run and pure-error counts for a design.
    pub fn gram(&self, design: &Design<S>) -> Result<(DMatrix<S>, usize, usize)> {
        let x = self.model.model_matrix(design)?;
        let a = x.transpose() * &x;
        let (d, _) = df_accounting(design, &self.model);
        Ok((a, design.n(), d))
    }

    /// Evaluate the compound criterion for a design.
    pub fn evaluate(&self, design: &Design<S>) -> Result<CriterionValue<S>> {
        let (a, n, d) = self.gram(design)?;
        let ft = self.f_table(n)?;
        Ok(self.evaluate_gram(&a, n, d, &ft))
    }

    /// `|X0' Q X0|` as a log-determinant, from the full Gram matrix: the
    /// centered non-intercept Gram is the Schur complement of the run count
    /// in `X'X`.
    fn centered_logdet(&self, a: &DMatrix<S>, n: usize) -> Option<S> {
        let p = self.model.p();
        if p < 2 {
            return None;
        }
        let inv_n = S::one() / S::of_usize(n);
        let mut b = a.view((1, 1), (p - 1, p - 1)).into_owned();
        for i in 0..(p - 1) {
            for j in 0..(p - 1) {
                b[(i, j)] -= a[(i + 1, 0)] * a[(0, j + 1)] * inv_n;
            }
        }
        SymFactor::new(&b).ok().map(|f| f.logdet())
    }

    /// Core compound evaluation from a precomputed Gram matrix. Components
    /// with zero weight are skipped, so an inactive interval factor cannot
    /// zero the value of a design with `d = 0`.
    pub fn evaluate_gram(
        &self,
        a: &DMatrix<S>,
        n: usize,
        d: usize,
        ft: &FTable<S>,
    ) -> CriterionValue<S> {
        let k = &self.cfg.kappas;
        let p = self.model.p();
        let mut components: Vec<(&'static str, S)> = Vec::new();

        let factor = match SymFactor::new(a) {
            Ok(f) => f,
            Err(_) => return CriterionValue::undefined(vec![("singular", S::one())]),
        };

        components.push(("pure_error_df", S::of_usize(d)));
        components.push(("distinct_runs", S::of_usize(n - d)));

        let mut log_value = S::zero();
        let mut defined = true;

        let det_weight = k[kappa::DS] + k[kappa::DPS];
        if det_weight > S::zero() {
            match self.centered_logdet(a, n) {
                Some(logdet) => {
                    let ds = (logdet / S::of_usize(p - 1)).exp();
                    components.push(("ds", ds));
                    log_value += logdet * det_weight / S::of_usize(p - 1);
                }
                None => return CriterionValue::undefined(components),
            }
        }

        // interval adjustments: quantile factors enter with negative weight
        let mut apply_f = |weight: S, table: &[S], name: &'static str| -> bool {
            if weight <= S::zero() {
                return true;
            }
            let f = table[d];
            components.push((name, f));
            if !f.finite() {
                return false; // d = 0: no interval exists
            }
            log_value -= weight * f.ln();
            true
        };
        defined &= apply_f(k[kappa::DPS], &ft.dp, "f_dp");
        defined &= apply_f(k[kappa::APS], &ft.ap, "f_ap");
        defined &= apply_f(k[kappa::IP], &ft.ip, "f_ip");
        defined &= apply_f(k[kappa::IDP], &ft.idp, "f_idp");
        if !defined {
            return CriterionValue::undefined(components);
        }

        if k[kappa::DF] > S::zero() {
            log_value += k[kappa::DF] * S::of_usize(n - d).ln();
        }

        let mut apply_trace = |weight: S, m: &DMatrix<S>, name: &'static str| -> bool {
            if weight <= S::zero() {
                return true;
            }
            let tr = factor.trace_prod_inv(m);
            components.push((name, tr));
            if tr <= S::zero() || !tr.finite() {
                return false;
            }
            log_value -= weight * tr.ln();
            true
        };

        let w_weight = k[kappa::APS] + k[kappa::AS];
        if w_weight > S::zero() {
            let w_mat = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                p,
                self.cfg.w.iter().copied(),
            ));
            if !apply_trace(w_weight, &w_mat, "trace_w_inv") {
                return CriterionValue::undefined(components);
            }
        }
        if !apply_trace(k[kappa::I] + k[kappa::IP], &self.m_pred, "trace_m_inv") {
            return CriterionValue::undefined(components);
        }
        if !apply_trace(k[kappa::ID] + k[kappa::IDP], &self.m_pred0, "trace_m0_inv") {
            return CriterionValue::undefined(components);
        }

        CriterionValue {
            value: log_value.exp(),
            defined: true,
            components,
        }
    }

    /// All eight single-criterion values at once (efficiency-table rows).
    /// Singular designs score zero everywhere; `d = 0` zeroes the interval
    /// columns.
    pub fn single_values(&self, design: &Design<S>) -> Result<[S; 8]> {
        let (a, n, d) = self.gram(design)?;
        self.single_values_gram(&a, n, d)
    }

    pub(crate) fn single_values_gram(&self, a: &DMatrix<S>, n: usize, d: usize) -> Result<[S; 8]> {
        let p = self.model.p();
        let factor = match SymFactor::new(a) {
            Ok(f) => f,
            Err(_) => return Ok([S::zero(); 8]),
        };
        let ds = match self.centered_logdet(a, n) {
            Some(logdet) => (logdet / S::of_usize(p - 1)).exp(),
            None => S::zero(),
        };
        let inv = factor.inverse();
        let trace_w: S = self
            .cfg
            .w
            .iter()
            .enumerate()
            .map(|(i, &w)| w * inv[(i, i)])
            .fold(S::zero(), |acc, v| acc + v);
        let a_s = if trace_w > S::zero() {
            S::one() / trace_w
        } else {
            S::zero()
        };
        let trace_m = self.m_pred.dot(&inv);
        let i_val = if trace_m > S::zero() {
            S::one() / trace_m
        } else {
            S::zero()
        };
        let trace_m0 = self.m_pred0.dot(&inv);
        let id_val = if trace_m0 > S::zero() {
            S::one() / trace_m0
        } else {
            S::zero()
        };

        let penalty = |v: S, df1: usize, alpha: S| -> Result<S> {
            let f = f_upper_quantile::<S>(df1, d, alpha)?;
            Ok(if f.finite() { v / f } else { S::zero() })
        };
        Ok([
            ds,
            penalty(ds, p - 1, self.cfg.alphas[alpha::DP])?,
            a_s,
            penalty(a_s, 1, self.cfg.alphas[alpha::AP])?,
            i_val,
            penalty(i_val, 1, self.cfg.alphas[alpha::IP])?,
            id_val,
            penalty(id_val, 1, self.cfg.alphas[alpha::IDP])?,
        ])
    }
}

fn single_value<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: CriterionConfig<S>,
    kind: CriterionKind,
) -> Result<S> {
    let ev = Evaluator::new(model, region, cfg)?;
    Ok(ev.single_values(design)?[CriterionKind::ALL.iter().position(|k| *k == kind).unwrap()])
}

/// `D_S` value `|X0' Q X0|^(1/(p-1))`; zero for singular designs.
pub fn ds_value<S: Scalar>(design: &Design<S>, model: &ModelSpec) -> Result<S> {
    // region is irrelevant for the determinant criteria
    let region = Region::cube(model.q());
    single_value(
        design,
        model,
        &region,
        CriterionConfig::single(CriterionKind::Ds, model),
        CriterionKind::Ds,
    )
}

/// `(DP)_S` value: `ds / F_{p-1, d; 1-alpha1}`; zero when `d = 0`.
pub fn dps_value<S: Scalar>(design: &Design<S>, model: &ModelSpec, alpha1: S) -> Result<S> {
    let region = Region::cube(model.q());
    let mut cfg = CriterionConfig::single(CriterionKind::Dps, model);
    cfg.alphas[alpha::DP] = alpha1;
    single_value(design, model, &region, cfg, CriterionKind::Dps)
}

/// `A_S` value `1 / trace(W (X'X)^-1)`.
pub fn as_value<S: Scalar>(design: &Design<S>, model: &ModelSpec, w: &[S]) -> Result<S> {
    let region = Region::cube(model.q());
    let mut cfg = CriterionConfig::single(CriterionKind::As, model);
    cfg.w = w.to_vec();
    single_value(design, model, &region, cfg, CriterionKind::As)
}

/// `(AP)_S` value: `as / F_{1, d; 1-alpha2}`; zero when `d = 0`.
pub fn aps_value<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    w: &[S],
    alpha2: S,
) -> Result<S> {
    let region = Region::cube(model.q());
    let mut cfg = CriterionConfig::single(CriterionKind::Aps, model);
    cfg.w = w.to_vec();
    cfg.alphas[alpha::AP] = alpha2;
    single_value(design, model, &region, cfg, CriterionKind::Aps)
}

/// `I` value `1 / trace(M (X'X)^-1)` with the region's prediction measure.
pub fn i_value<S: Scalar>(design: &Design<S>, model: &ModelSpec, region: &Region<S>) -> Result<S> {
    single_value(
        design,
        model,
        region,
        CriterionConfig::single(CriterionKind::I, model),
        CriterionKind::I,
    )
}

/// `(IP)` value: `i / F_{1, d; 1-alpha3}`; zero when `d = 0`.
pub fn ip_value<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    alpha3: S,
) -> Result<S> {
    let mut cfg = CriterionConfig::single(CriterionKind::Ip, model);
    cfg.alphas[alpha::IP] = alpha3;
    single_value(design, model, region, cfg, CriterionKind::Ip)
}

/// `I_D` value `1 / trace(M0 (X'X)^-1)`.
pub fn id_value<S: Scalar>(design: &Design<S>, model: &ModelSpec, region: &Region<S>) -> Result<S> {
    single_value(
        design,
        model,
        region,
        CriterionConfig::single(CriterionKind::Id, model),
        CriterionKind::Id,
    )
}

/// `(I_DP)` value: `id / F_{1, d; 1-alpha4}`; zero when `d = 0`.
pub fn idp_value<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    alpha4: S,
) -> Result<S> {
    let mut cfg = CriterionConfig::single(CriterionKind::Idp, model);
    cfg.alphas[alpha::IDP] = alpha4;
    single_value(design, model, region, cfg, CriterionKind::Idp)
}

/// Full compound criterion with factor breakdown.
pub fn compound_value<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &CriterionConfig<S>,
) -> Result<CriterionValue<S>> {
    Evaluator::new(model, region, cfg.clone())?.evaluate(design)
}

/// One design's row of an efficiency table.
#[derive(Debug, Clone)]
pub struct EfficiencyRow<S: Scalar = f64> {
    pub label: String,
    pub n: usize,
    pub pure_error_df: usize,
    pub lack_of_fit_df: i64,
    /// Raw criterion values in [`CriterionKind::ALL`] order.
    pub values: [S; 8],
    /// `100 * value / best`, where best is the reference optimum or the
    /// in-set maximum; zero columns stay zero.
    pub efficiencies: [S; 8],
}

/// Efficiencies of a set of designs under all eight criteria.
#[derive(Debug, Clone)]
pub struct EfficiencyTable<S: Scalar = f64> {
    pub rows: Vec<EfficiencyRow<S>>,
    /// The per-criterion best values the efficiencies are relative to.
    pub reference: [S; 8],
}

/// Build the efficiency table for a set of labeled designs.
///
/// `reference` optionally pins per-criterion optimum values (raw criterion
/// scale); any entry left `None` falls back to the maximum over the supplied
/// set. `D_S`-family values already carry the `1/(p-1)` determinant root, so
/// plain ratios reproduce the conventional per-parameter efficiency scale;
/// the trace-based criteria are plain value ratios.
pub fn efficiency_table<S: Scalar>(
    designs: &[(String, Design<S>)],
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &CriterionConfig<S>,
    reference: Option<[Option<S>; 8]>,
) -> Result<EfficiencyTable<S>> {
    if designs.is_empty() {
        return Err(Error::invalid("efficiency table needs at least one design"));
    }
    let ev = Evaluator::new(model, region, cfg.clone())?;
    let mut rows = Vec::with_capacity(designs.len());
    for (label, design) in designs {
        if design.q() != model.q() {
            return Err(Error::DimensionMismatch {
                expected: model.q(),
                got: design.q(),
            });
        }
        let values = ev.single_values(design)?;
        let (d, lof) = df_accounting(design, model);
        rows.push(EfficiencyRow {
            label: label.clone(),
            n: design.n(),
            pure_error_df: d,
            lack_of_fit_df: lof,
            values,
            efficiencies: [S::zero(); 8],
        });
    }
    let mut best = [S::zero(); 8];
    for (k, slot) in best.iter_mut().enumerate() {
        let in_set =
            rows.iter()
                .map(|r| r.values[k])
                .fold(S::zero(), |acc, v| if v > acc { v } else { acc });
        *slot = reference.as_ref().and_then(|r| r[k]).unwrap_or(in_set);
    }
    for row in &mut rows {
        for (k, eff) in row.efficiencies.iter_mut().enumerate() {
            *eff = if best[k] > S::zero() {
                S::of_f64(100.0) * row.values[k] / best[k]
            } else {
                S::zero()
            };
        }
    }
    Ok(EfficiencyTable {
        rows,
        reference: best,
    })
}

impl<S: Scalar> EfficiencyTable<S> {
    /// CSV rendering: label, run counts, df split, one efficiency column per
    /// criterion, then the raw values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("design,n,pe_df,lof_df");
        for k in CriterionKind::ALL {
            out.push_str(&format!(",eff_{}", k.key()));
        }
        for k in CriterionKind::ALL {
            out.push_str(&format!(",value_{}", k.key()));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                r.label, r.n, r.pure_error_df, r.lack_of_fit_df
            ));
            for v in r.efficiencies {
                out.push_str(&format!(",{:.2}", v.as_f64()));
            }
            for v in r.values {
                out.push_str(&format!(",{:.9e}", v.as_f64()));
            }
            out.push('\n');
        }
        out
    }
}

impl<S: Scalar> fmt::Display for EfficiencyTable<S> {
    /// Aligned plain-text table of efficiencies.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label_width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(6)
            .max(6);
        write!(
            f,
            "{:label_width$}  {:>4} {:>9}",
            "design", "n", "df(PE,LoF)"
        )?;
        for k in CriterionKind::ALL {
            write!(f, " {:>8}", k.label())?;
        }
        writeln!(f)?;
        for r in &self.rows {
            let df = format!("({},{})", r.pure_error_df, r.lack_of_fit_df);
            write!(f, "{:label_width$}  {:>4} {:>9}", r.label, r.n, df)?;
            for v in r.efficiencies {
                write!(f, " {:>8.2}", v.as_f64())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl<S: Scalar> fmt::Display for CriterionValue<S> {
    /// Key-value audit rendering of the factor breakdown.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "value = {:.9e}", self.value.as_f64())?;
        writeln!(f, "defined = {}", self.defined)?;
        for (name, v) in &self.components {
            writeln!(f, "{} = {:.9e}", name, v.as_f64())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactorPoint;
    use approx::assert_relative_eq;

    fn face_centered_ccd_q2(extra_centers: usize) -> Design {
        let mut rows = vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.0, 1.0],
        ];
        for _ in 0..=extra_centers {
            rows.push(vec![0.0, 0.0]);
        }
        Design::from_rows(rows)
    }

    #[test]
    fn synthetic_gram_closed_forms() {
        // X'X = n I: A_S with identity weights (zero intercept) is n/(p-1),
        // I value is n / trace(M).
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let p = model.p();
        let n = 12usize;
        let mut cfg = CriterionConfig::<f64>::single(CriterionKind::As, &model);
        let mut w = vec![1.0; p];
        w[0] = 0.0;
        cfg.w = w;
        let ev = Evaluator::new(&model, &region, cfg).unwrap();
        let a = DMatrix::<f64>::identity(p, p) * n as f64;
        let vals = ev.single_values_gram(&a, n, 0).unwrap();
        assert_relative_eq!(vals[2], n as f64 / (p - 1) as f64, epsilon = 1e-12);
        let m = ev.prediction_moments();
        assert_relative_eq!(vals[4], n as f64 / m.trace(), epsilon = 1e-12);
        // interval columns are zero at d = 0
        assert_eq!(vals[1], 0.0);
        assert_eq!(vals[3], 0.0);
        assert_eq!(vals[5], 0.0);
        assert_eq!(vals[7], 0.0);
    }

    #[test]
    fn singular_design_scores_zero() {
        let model = ModelSpec::full_quadratic(2);
        // 6 runs on a line: quadratic model inestimable
        let design = Design::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-0.5, -0.5],
            vec![0.0, 0.0],
            vec![0.25, 0.25],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ]);
        assert_eq!(ds_value(&design, &model).unwrap(), 0.0);
        let region = Region::cube(2);
        assert_eq!(i_value(&design, &model, &region).unwrap(), 0.0);
        let cv = compound_value(
            &design,
            &model,
            &region,
            &CriterionConfig::single(CriterionKind::Id, &model),
        )
        .unwrap();
        assert!(!cv.defined);
        assert_eq!(cv.value, 0.0);
    }

    /// The determinant criterion computed from the explicit centering
    /// projector `Q = I - 11'/n` agrees with the Schur-complement route used
    /// internally.
    #[test]
    fn ds_matches_explicit_centering_projector() {
        use crate::model::centering_projector;
        use crate::numerics::logdet_psd;
        let model = ModelSpec::full_quadratic(2);
        let design = face_centered_ccd_q2(2);
        let x0 = model.model_matrix_no_intercept(&design).unwrap();
        let q = centering_projector::<f64>(design.n());
        let b = x0.transpose() * q * &x0;
        let explicit = (logdet_psd(&b).unwrap() / (model.p() - 1) as f64).exp();
        let ds = ds_value(&design, &model).unwrap();
        assert_relative_eq!(ds, explicit, max_relative = 1e-10);
    }

    #[test]
    fn duplicating_every_run_doubles_ds() {
        let model = ModelSpec::full_quadratic(2);
        let design = face_centered_ccd_q2(1);
        let mut doubled_rows: Vec<Vec<f64>> = Vec::new();
        for pt in design.points() {
            doubled_rows.push(pt.coords().to_vec());
            doubled_rows.push(pt.coords().to_vec());
        }
        let doubled = Design::from_rows(doubled_rows);
        let v1 = ds_value(&design, &model).unwrap();
        let v2 = ds_value(&doubled, &model).unwrap();
        assert_relative_eq!(v2, 2.0 * v1, max_relative = 1e-10);
    }

    #[test]
    fn interval_values_rise_with_pure_error_df() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        // identical support, growing center replication; d = 0 gives ratio 0
        let mut prev_ratio = -1.0;
        for extra in 0..4 {
            let design = face_centered_ccd_q2(extra);
            let dps = dps_value(&design, &model, 0.05).unwrap();
            let ds = ds_value(&design, &model).unwrap();
            let ratio = dps / ds; // 1/F, strictly increasing in d
            assert!(ratio > prev_ratio);
            prev_ratio = ratio;
            let ip = ip_value(&design, &model, &region, 0.05).unwrap();
            if extra == 0 {
                assert_eq!(ip, 0.0); // no pure error df yet
            } else {
                assert!(ip > 0.0);
            }
        }
    }

    #[test]
    fn zero_pure_error_zeroes_interval_criteria() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = Design::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ]);
        assert!(ds_value(&design, &model).unwrap() > 0.0);
        assert_eq!(dps_value(&design, &model, 0.05).unwrap(), 0.0);
        assert_eq!(ip_value(&design, &model, &region, 0.05).unwrap(), 0.0);
        assert_eq!(idp_value(&design, &model, &region, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn compound_df_weight_counts_distinct_runs() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = face_centered_ccd_q2(2); // 11 runs, 9 distinct
        let mut kappas = [0.0; 9];
        kappas[kappa::DF] = 1.0;
        let cfg =
            CriterionConfig::new(kappas, [0.05; 4], CriterionConfig::<f64>::default_w(&model));
        let cv = compound_value(&design, &model, &region, &cfg).unwrap();
        assert!(cv.defined);
        assert_relative_eq!(cv.value, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn compound_single_weight_matches_single_criterion_ranking() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let designs = [face_centered_ccd_q2(0), face_centered_ccd_q2(2), {
            let mut rows: Vec<Vec<f64>> = face_centered_ccd_q2(0)
                .points()
                .iter()
                .map(|p| p.coords().to_vec())
                .collect();
            rows[4] = vec![0.0, 0.0];
            Design::from_rows(rows)
        }];
        for kind in [
            CriterionKind::Ds,
            CriterionKind::Dps,
            CriterionKind::Id,
            CriterionKind::Ip,
        ] {
            let cfg = CriterionConfig::single(kind, &model);
            let col = CriterionKind::ALL.iter().position(|k| *k == kind).unwrap();
            let mut singles: Vec<f64> = Vec::new();
            let mut compounds: Vec<f64> = Vec::new();
            let ev = Evaluator::new(&model, &region, cfg.clone()).unwrap();
            for d in &designs {
                singles.push(ev.single_values(d).unwrap()[col]);
                compounds.push(compound_value(d, &model, &region, &cfg).unwrap().value);
            }
            let rank = |v: &[f64]| -> Vec<usize> {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
                idx
            };
            assert_eq!(rank(&singles), rank(&compounds), "ranking for {kind:?}");
        }
    }

    #[test]
    fn compound_rejects_bad_weights() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = face_centered_ccd_q2(1);
        let mut kappas = [0.0; 9];
        kappas[kappa::DS] = 0.9; // sums to 0.9
        let cfg =
            CriterionConfig::new(kappas, [0.05; 4], CriterionConfig::<f64>::default_w(&model));
        assert!(compound_value(&design, &model, &region, &cfg).is_err());
    }

    #[test]
    fn inactive_interval_factor_does_not_zero_d0_designs() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        // 9 distinct runs, d = 0
        let design = Design::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, -1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ]);
        let cfg = CriterionConfig::single(CriterionKind::Ds, &model);
        let cv = compound_value(&design, &model, &region, &cfg).unwrap();
        assert!(cv.defined);
        assert!(cv.value > 0.0);
    }

    #[test]
    fn row_permutation_leaves_criteria_unchanged() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = face_centered_ccd_q2(2);
        let mut rows: Vec<Vec<f64>> = design
            .points()
            .iter()
            .map(|p| p.coords().to_vec())
            .collect();
        rows.reverse();
        rows.swap(1, 5);
        let permuted = Design::from_rows(rows);
        let ev = Evaluator::new(
            &model,
            &region,
            CriterionConfig::single(CriterionKind::Idp, &model),
        )
        .unwrap();
        let a = ev.single_values(&design).unwrap();
        let b = ev.single_values(&permuted).unwrap();
        for k in 0..8 {
            assert_relative_eq!(a[k], b[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn factor_relabeling_leaves_criteria_unchanged() {
        let model = ModelSpec::full_quadratic(3);
        let region = Region::sphere_through_corners(3);
        let base = crate::model::central_composite(3, 3.0f64.sqrt(), 3, false);
        let swapped = Design::new(
            base.points()
                .iter()
                .map(|p| {
                    let c = p.coords();
                    FactorPoint::new(vec![c[2], c[0], c[1]])
                })
                .collect(),
        );
        let ev = Evaluator::new(
            &model,
            &region,
            CriterionConfig::single(CriterionKind::Id, &model),
        )
        .unwrap();
        let a = ev.single_values(&base).unwrap();
        let b = ev.single_values(&swapped).unwrap();
        for k in 0..8 {
            assert_relative_eq!(a[k], b[k], max_relative = 1e-10);
        }
    }

    #[test]
    fn efficiency_table_self_comparison_is_100() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = face_centered_ccd_q2(2);
        let cfg = CriterionConfig::single(CriterionKind::Id, &model);
        let table =
            efficiency_table(&[("only".to_string(), design)], &model, &region, &cfg, None).unwrap();
        for (k, eff) in table.rows[0].efficiencies.iter().enumerate() {
            if table.rows[0].values[k] > 0.0 {
                assert_relative_eq!(*eff, 100.0, epsilon = 1e-9);
            } else {
                assert_eq!(*eff, 0.0);
            }
        }
        assert!(efficiency_table::<f64>(&[], &model, &region, &cfg, None).is_err());
    }

    #[test]
    fn external_reference_rescales_efficiencies() {
        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = face_centered_ccd_q2(2);
        let cfg = CriterionConfig::single(CriterionKind::Ds, &model);
        let base = efficiency_table(
            &[("d".to_string(), design.clone())],
            &model,
            &region,
            &cfg,
            None,
        )
        .unwrap();
        let ds = base.rows[0].values[0];
        let mut reference = [None; 8];
        reference[0] = Some(2.0 * ds);
        let scaled = efficiency_table(
            &[("d".to_string(), design)],
            &model,
            &region,
            &cfg,
            Some(reference),
        )
        .unwrap();
        assert_relative_eq!(scaled.rows[0].efficiencies[0], 50.0, epsilon = 1e-9);
    }
}
