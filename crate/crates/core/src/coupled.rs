//! Coupling two L-functional estimates: point estimate, delta weight,
//! optional bias term, asymptotic variance, and confidence intervals.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::bridge::{self, BridgeSimConfig, MeasureFamily, VarianceMode};
use crate::error::{Error, Result};
use crate::lstat::{estimate_l, LEstimate};
use crate::measure::MeasureSpec;
use crate::numeric::standard_normal_quantile;
use crate::sample::Sample;

type CoupleFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type PartialsFn = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// A smooth map combining two L-functionals into one risk measure.
#[derive(Clone)]
pub enum Coupling {
    /// H(x, y) = x: the first measure alone.
    First,
    /// H(x, y) = x / y.
    Ratio,
    /// H_p(x, y) = 1 - 1/p + (y/x)/p; p = 1 reduces to y/x.
    Zenga { p: f64 },
    Custom(CustomCoupling),
}

#[derive(Clone)]
pub struct CustomCoupling {
    eval: CoupleFn,
    partials: Option<PartialsFn>,
    label: String,
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::First => write!(f, "First"),
            Coupling::Ratio => write!(f, "Ratio"),
            Coupling::Zenga { p } => write!(f, "Zenga {{ p: {p} }}"),
            Coupling::Custom(c) => write!(f, "Custom {{ label: {:?} }}", c.label),
        }
    }
}

impl Coupling {
    pub fn zenga(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::ArgumentOutOfRange(format!(
                "Zenga level p must lie in (0, 1], got {p}"
            )));
        }
        Ok(Coupling::Zenga { p })
    }

    pub fn custom(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        partials: Option<Box<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>>,
        label: impl Into<String>,
    ) -> Self {
        Coupling::Custom(CustomCoupling {
            eval: Arc::new(eval),
            partials: partials.map(|p| Arc::from(p) as PartialsFn),
            label: label.into(),
        })
    }

    /// Parse `first`, `ratio`, or `zenga:p=0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "first" => return Ok(Coupling::First),
            "ratio" => return Ok(Coupling::Ratio),
            _ => {}
        }
        if let Some(args) = s.strip_prefix("zenga:") {
            for pair in args.split(',') {
                if let Some((k, v)) = pair.split_once('=') {
                    if k.trim() == "p" {
                        let p = v.trim().parse::<f64>().map_err(|e| {
                            Error::ArgumentOutOfRange(format!("bad p value {v:?}: {e}"))
                        })?;
                        return Coupling::zenga(p);
                    }
                }
            }
            return Err(Error::ArgumentOutOfRange(
                "zenga coupling needs p=<value>".into(),
            ));
        }
        Err(Error::ArgumentOutOfRange(format!(
            "unknown coupling {s:?} (expected first, ratio, zenga:p=..)"
        )))
    }

    pub fn label(&self) -> String {
        match self {
            Coupling::First => "first".into(),
            Coupling::Ratio => "ratio".into(),
            Coupling::Zenga { p } => format!("zenga:p={p}"),
            Coupling::Custom(c) => format!("custom:{}", c.label),
        }
    }
}

/// Value of the coupling and its first partial derivatives at (x, y).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingValue {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Evaluate a coupling with closed-form partials for the built-ins and
/// central finite differences (step 1e-6 * max(1, |arg|)) for custom
/// couplings without declared partials.
pub fn couple_eval(c: &Coupling, x: f64, y: f64) -> Result<CouplingValue> {
    match c {
        Coupling::First => Ok(CouplingValue {
            value: x,
            dx: 1.0,
            dy: 0.0,
        }),
        Coupling::Ratio => {
            if y == 0.0 {
                return Err(Error::DivisionByZero { x, y });
            }
            Ok(CouplingValue {
                value: x / y,
                dx: 1.0 / y,
                dy: -x / (y * y),
            })
        }
        Coupling::Zenga { p } => {
            if x == 0.0 {
                return Err(Error::DivisionByZero { x, y });
            }
            Ok(CouplingValue {
                value: 1.0 - 1.0 / p + (y / x) / p,
                dx: -(y / (x * x)) / p,
                dy: (1.0 / x) / p,
            })
        }
        Coupling::Custom(cc) => {
            let value = (cc.eval)(x, y);
            if !value.is_finite() {
                return Err(Error::DivisionByZero { x, y });
            }
            let (dx, dy) = match &cc.partials {
                Some(p) => p(x, y),
                None => {
                    let hx = 1e-6 * x.abs().max(1.0);
                    let hy = 1e-6 * y.abs().max(1.0);
                    (
                        ((cc.eval)(x + hx, y) - (cc.eval)(x - hx, y)) / (2.0 * hx),
                        ((cc.eval)(x, y + hy) - (cc.eval)(x, y - hy)) / (2.0 * hy),
                    )
                }
            };
            Ok(CouplingValue { value, dx, dy })
        }
    }
}

/// Finite-sample plug-in of the limiting mixing weight: d1 / (d1 + d2).
pub fn delta_weight(d1: f64, d2: f64) -> Result<f64> {
    if d1 < 0.0 || d2 < 0.0 {
        return Err(Error::ArgumentOutOfRange(format!(
            "normalization constants must be non-negative, got ({d1}, {d2})"
        )));
    }
    if d1 + d2 == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(d1 / (d1 + d2))
}

/// Second-order inputs for the bias term. `b_i` is the limit of
/// sqrt(k) A_i(n/k), `omega_i <= 0` the second-order parameter of measure i.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BiasInputs {
    pub b1: f64,
    pub omega1: f64,
    pub b2: f64,
    pub omega2: f64,
}

/// Bias lambda = delta hx (-b1 d1 / omega1) + (1-delta) hy (-b2 d2 / omega2)
/// with d_i = omega_i / (1/rho_i - gamma_i - omega_i). Each term collapses
/// to -b_i / (1/rho_i - gamma_i - omega_i), and vanishes when b_i = 0.
#[allow(clippy::too_many_arguments)]
pub fn bias_lambda(
    inputs: &BiasInputs,
    gamma1: f64,
    rho1_eff: f64,
    gamma2: f64,
    rho2_eff: f64,
    delta: f64,
    hx: f64,
    hy: f64,
) -> Result<f64> {
    let term = |b: f64, omega: f64, gamma: f64, rho_eff: f64| -> Result<f64> {
        if b == 0.0 {
            return Ok(0.0);
        }
        if omega == 0.0 {
            return Err(Error::UndefinedBias(b));
        }
        if omega > 0.0 {
            return Err(Error::ArgumentOutOfRange(format!(
                "second-order parameter must be <= 0, got {omega}"
            )));
        }
        let denom = 1.0 / rho_eff - gamma - omega;
        if denom <= 0.0 {
            return Err(Error::TailDivergence(format!(
                "bias term needs 1/rho - gamma - omega > 0, got {denom}"
            )));
        }
        Ok(-b / denom)
    };
    let t1 = term(inputs.b1, inputs.omega1, gamma1, rho1_eff)?;
    let t2 = term(inputs.b2, inputs.omega2, gamma2, rho2_eff)?;
    Ok(delta * hx * t1 + (1.0 - delta) * hy * t2)
}

/// Diagnostic flags accumulated during estimation. They never change exit
/// codes; they explain downgraded or unusual output.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Warning {
    /// gamma_hat of the named measure left (1/2, 1); interval output
    /// suppressed.
    OutOfTheoryRange(String),
    /// The Hill threshold ties with the sample maximum.
    DegenerateTail(String),
    /// No variance machinery for this measure combination.
    VarianceUnavailable(String),
    /// Both coupling partials vanish at the estimate; the limit is
    /// degenerate.
    BothPartialsZero,
    /// The cross-basis moment came from a bridge simulation (finite tail
    /// mass, MC error attached).
    SimulatedCrossMoment(String),
    /// At rho_eff != 1 the closed-form variance and the kernel quadratic
    /// form disagree; the quadratic form was used.
    VarianceRouteGap(String),
    /// The second measure failed to estimate under First coupling and was
    /// dropped from the report.
    SecondMeasureDropped(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::OutOfTheoryRange(s) => write!(f, "out_of_theory_range: {s}"),
            Warning::DegenerateTail(s) => write!(f, "degenerate_tail: {s}"),
            Warning::VarianceUnavailable(s) => write!(f, "variance_unavailable: {s}"),
            Warning::BothPartialsZero => write!(f, "both_partials_zero"),
            Warning::SimulatedCrossMoment(s) => write!(f, "simulated_cross_moment: {s}"),
            Warning::VarianceRouteGap(s) => write!(f, "variance_route_gap: {s}"),
            Warning::SecondMeasureDropped(s) => write!(f, "second_measure_dropped: {s}"),
        }
    }
}

/// A coupled estimate with its normalization, variance, and interval.
#[derive(Debug, Clone)]
pub struct CoupledEstimate {
    /// Point estimate H(L1, L2).
    pub point: f64,
    pub l1: LEstimate,
    /// Absent only under First coupling when the inert second measure could
    /// not be estimated.
    pub l2: Option<LEstimate>,
    /// D1 / (D1 + D2); forced to 1 under First coupling.
    pub delta_hat: f64,
    /// (dH/dx, dH/dy) at (L1, L2).
    pub partials: (f64, f64),
    /// Variance of the leading bridge functional; None when unavailable.
    pub sigma2: Option<f64>,
    /// Bias term; zero unless second-order inputs were supplied.
    pub lambda: f64,
    /// Half-width scale w = (D1 + D2) / sqrt(k); the interval is
    /// point - lambda w -+ z sigma w.
    pub half_width_scale: f64,
    /// Two-sided confidence interval at the requested level, when the
    /// variance machinery applies.
    pub ci: Option<(f64, f64)>,
    pub alpha: f64,
    pub warnings: Vec<Warning>,
}

/// Estimate the coupled risk measure on a shared sample with one shared
/// threshold rank k. Each measure gets its own Hill fit on its own
/// H-transformed data; the coupling is evaluated at the two totals; the
/// variance comes from the joint bridge calculus with plug-in
/// (gamma_hat_1, gamma_hat_2, delta_hat, partials).
pub fn estimate_coupled(
    s: &Sample,
    spec1: &MeasureSpec,
    spec2: &MeasureSpec,
    coupling: &Coupling,
    k: usize,
    alpha: f64,
    bias: Option<BiasInputs>,
) -> Result<CoupledEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ArgumentOutOfRange(format!(
            "confidence level alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut warnings = Vec::new();

    let l1 = estimate_l(s, spec1, k)?;
    let is_first = matches!(coupling, Coupling::First);
    let l2 = match estimate_l(s, spec2, k) {
        Ok(e) => Some(e),
        Err(e) if is_first => {
            warnings.push(Warning::SecondMeasureDropped(e.to_string()));
            None
        }
        Err(e) => return Err(e),
    };

    let x = l1.total;
    let y = l2.as_ref().map(|e| e.total).unwrap_or(0.0);
    let cv = couple_eval(coupling, x, y)?;

    // First coupling bypasses the second normalization entirely
    let (delta_hat, d_total) = if is_first {
        (1.0, l1.d_hat)
    } else {
        let l2 = l2.as_ref().expect("l2 required for non-first couplings");
        (
            delta_weight(l1.d_hat, l2.d_hat)?,
            l1.d_hat + l2.d_hat,
        )
    };
    let half_width_scale = d_total / (k as f64).sqrt();

    if cv.dx == 0.0 && cv.dy == 0.0 {
        warnings.push(Warning::BothPartialsZero);
    }

    for (name, fit) in [("measure1", &l1.fit)]
        .into_iter()
        .chain(l2.as_ref().map(|e| ("measure2", &e.fit)))
    {
        if fit.is_degenerate() {
            warnings.push(Warning::DegenerateTail(format!(
                "{name}: threshold ties with the sample maximum ({} tied top values)",
                fit.tied_top
            )));
        }
    }

    // variance machinery: families must be built-in, gammas in theory range
    let fam1 = MeasureFamily::of(&spec1.psi);
    let fam2 = l2
        .as_ref()
        .map(|e| MeasureFamily::of(&e.spec.psi))
        .unwrap_or(Some(MeasureFamily::Mean));

    let mut sigma2 = None;
    let relevant_fits: Vec<(&str, &crate::tail::TailFit)> = if is_first {
        vec![("measure1", &l1.fit)]
    } else {
        vec![
            ("measure1", &l1.fit),
            ("measure2", &l2.as_ref().expect("present").fit),
        ]
    };
    let mut in_range = true;
    for (name, fit) in &relevant_fits {
        if !fit.in_theory_range {
            in_range = false;
            warnings.push(Warning::OutOfTheoryRange(format!(
                "{name}: gamma_hat = {:.6} outside (0.5, 1)",
                fit.gamma_hat
            )));
        }
    }

    match (fam1, fam2) {
        (Some(f1), Some(f2)) if in_range => {
            let g1 = l1.fit.gamma_hat;
            let (g2, rho2) = if is_first {
                (g1, f1.rho_eff())
            } else {
                (l2.as_ref().expect("present").fit.gamma_hat, f2.rho_eff())
            };
            let rho1 = f1.rho_eff();
            let (hx, hy) = if is_first { (1.0, 0.0) } else { (cv.dx, cv.dy) };
            let mode = if (rho1 - rho2).abs() <= 1e-12 {
                VarianceMode::ClosedForm
            } else {
                VarianceMode::BridgeSim(BridgeSimConfig::default())
            };
            match bridge::variance_coupled(g1, rho1, g2, rho2, delta_hat, hx, hy, &mode) {
                Ok(v) => {
                    sigma2 = Some(v.value);
                    if let Some(se) = v.cross_se {
                        warnings.push(Warning::SimulatedCrossMoment(format!(
                            "E[W1(rho1) W1(rho2)] from bridge simulation at tail mass {} \
                             (MC se {se:.2e})",
                            BridgeSimConfig::default().k_over_n
                        )));
                    }
                    // surface the closed-form route when it disagrees
                    for (fam, g) in [(f1, g1)].into_iter().chain(if is_first {
                        None
                    } else {
                        Some((f2, g2))
                    }) {
                        if let (Ok(c), Ok(q)) = (
                            bridge::asymptotic_variance(fam, g),
                            bridge::asymptotic_variance_quadratic(fam, g),
                        ) {
                            if ((c - q) / c).abs() > 1e-9 {
                                warnings.push(Warning::VarianceRouteGap(format!(
                                    "closed form {c:.6} vs kernel quadratic form {q:.6} \
                                     at gamma_hat = {g:.6}, rho_eff = {}",
                                    fam.rho_eff()
                                )));
                            }
                        }
                    }
                }
                Err(Error::VarianceUndefined(msg)) => {
                    warnings.push(Warning::OutOfTheoryRange(msg));
                }
                Err(Error::TailDivergence(msg)) => {
                    warnings.push(Warning::VarianceUnavailable(msg));
                }
                Err(e) => return Err(e),
            }
        }
        (None, _) | (_, None) => {
            warnings.push(Warning::VarianceUnavailable(
                "custom measure has no supported bridge coefficients".into(),
            ));
        }
        _ => {}
    }

    let lambda = match &bias {
        Some(b) => {
            let g1 = l1.fit.gamma_hat;
            let rho1 = fam1.map(|f| f.rho_eff()).unwrap_or(1.0);
            let (g2, rho2) = l2
                .as_ref()
                .map(|e| {
                    (
                        e.fit.gamma_hat,
                        MeasureFamily::of(&e.spec.psi)
                            .map(|f| f.rho_eff())
                            .unwrap_or(1.0),
                    )
                })
                .unwrap_or((g1, rho1));
            let (hx, hy) = if is_first { (1.0, 0.0) } else { (cv.dx, cv.dy) };
            bias_lambda(b, g1, rho1, g2, rho2, delta_hat, hx, hy)?
        }
        None => 0.0,
    };

    let ci = sigma2.map(|s2| {
        let z = standard_normal_quantile(1.0 - alpha / 2.0);
        let center = cv.value - lambda * half_width_scale;
        let half = z * s2.sqrt() * half_width_scale;
        (center - half, center + half)
    });

    Ok(CoupledEstimate {
        point: cv.value,
        l1,
        l2,
        delta_hat,
        partials: (cv.dx, cv.dy),
        sigma2,
        lambda,
        half_width_scale,
        ci,
        alpha,
        warnings,
    })
}

/// Single-measure confidence interval, computed directly (not through the
/// coupling machinery): total -+ z sigma(gamma_hat) D_hat / sqrt(k).
pub fn estimate_single(
    s: &Sample,
    spec: &MeasureSpec,
    k: usize,
    alpha: f64,
) -> Result<(LEstimate, Option<(f64, f64)>)> {
    let est = estimate_l(s, spec, k)?;
    let fam = MeasureFamily::of(&spec.psi);
    let ci = match fam {
        Some(f) if est.fit.in_theory_range => {
            match bridge::asymptotic_variance_quadratic(f, est.fit.gamma_hat) {
                Ok(s2) => {
                    let z = standard_normal_quantile(1.0 - alpha / 2.0);
                    let w = est.d_hat / (k as f64).sqrt();
                    Some((est.total - z * s2.sqrt() * w, est.total + z * s2.sqrt() * w))
                }
                Err(_) => None,
            }
        }
        _ => None,
    };
    Ok((est, ci))
}
