//! Distortion functions, loss transforms, and the building blocks of an
//! L-functional risk measure: discrete coefficients c_(j,n) and the tail
//! integral int_{1-u}^1 (1-s)^{-gamma} dPsi(s).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{integrate, KahanSum};

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A non-decreasing, right-continuous distortion Psi on [0, 1].
///
/// Built-ins carry exact closed forms:
/// - `Identity`: Psi(s) = s (net premium / mean weights)
/// - `Pht { rho }`: Psi(s) = -(1-s)^(1/rho), rho >= 1 (proportional hazards)
/// - `Cte { t }`: Psi(s) = (s-t)_+ / (1-t), 0 <= t < 1 (tail value at risk)
#[derive(Clone)]
pub enum Distortion {
    Identity,
    Pht { rho: f64 },
    Cte { t: f64 },
    Custom(CustomDistortion),
}

/// User-supplied distortion: an evaluator plus the declared regular-variation
/// index of its tail integral s -> int_s^1 (1-t)^{-gamma} dPsi(t) at 1.
///
/// The index is recorded for diagnostics only; it cannot be verified from an
/// evaluator alone. Monotonicity is spot-checked on a 1001-point grid at
/// construction.
#[derive(Clone)]
pub struct CustomDistortion {
    eval: EvalFn,
    /// Optional cancellation-free tail evaluator v -> Psi(1) - Psi(1-v).
    /// Without it, tail evaluation near s = 1 is limited by the f64
    /// resolution of 1 - v.
    tail_gap: Option<EvalFn>,
    tail_rv_index: f64,
    label: String,
}

impl fmt::Debug for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distortion::Identity => write!(f, "Identity"),
            Distortion::Pht { rho } => write!(f, "Pht {{ rho: {rho} }}"),
            Distortion::Cte { t } => write!(f, "Cte {{ t: {t} }}"),
            Distortion::Custom(c) => write!(
                f,
                "Custom {{ label: {:?}, tail_rv_index: {} }}",
                c.label, c.tail_rv_index
            ),
        }
    }
}

impl Distortion {
    pub fn pht(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 1.0) {
            return Err(Error::ArgumentOutOfRange(format!(
                "PHT parameter rho must satisfy rho >= 1, got {rho}"
            )));
        }
        Ok(Distortion::Pht { rho })
    }

    pub fn cte(t: f64) -> Result<Self> {
        if !(t.is_finite() && (0.0..1.0).contains(&t)) {
            return Err(Error::ArgumentOutOfRange(format!(
                "CTE threshold t must lie in [0, 1), got {t}"
            )));
        }
        Ok(Distortion::Cte { t })
    }

    pub fn custom(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tail_rv_index: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::custom_impl(Arc::new(eval), None, tail_rv_index, label.into())
    }

    /// Custom distortion with an exact tail evaluator
    /// `tail_gap(v) = Psi(1) - Psi(1-v)`, which keeps tail integrals
    /// accurate for v far below the f64 resolution of 1 - v.
    pub fn custom_with_tail(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tail_gap: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tail_rv_index: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::custom_impl(
            Arc::new(eval),
            Some(Arc::new(tail_gap) as EvalFn),
            tail_rv_index,
            label.into(),
        )
    }

    fn custom_impl(
        eval: EvalFn,
        tail_gap: Option<EvalFn>,
        tail_rv_index: f64,
        label: String,
    ) -> Result<Self> {
        // spot-check monotonicity on a 1001-point grid
        let mut last = eval(0.0);
        for i in 1..=1000 {
            let s = i as f64 / 1000.0;
            let v = eval(s);
            if !v.is_finite() || v < last - 1e-12 * (1.0 + last.abs()) {
                return Err(Error::ArgumentOutOfRange(format!(
                    "custom distortion is not non-decreasing near s = {s}"
                )));
            }
            last = v;
        }
        Ok(Distortion::Custom(CustomDistortion {
            eval,
            tail_gap,
            tail_rv_index,
            label,
        }))
    }

    /// Parse a CLI-style measure string: `mean`, `pht:rho=1.2`, `cte:t=0.9`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a)),
            None => (s, None),
        };
        let one_arg = |args: Option<&str>, key: &str| -> Result<f64> {
            let args = args.ok_or_else(|| {
                Error::ArgumentOutOfRange(format!("measure {head:?} needs {key}=<value>"))
            })?;
            for pair in args.split(',') {
                if let Some((k, v)) = pair.split_once('=') {
                    if k.trim() == key {
                        return v.trim().parse::<f64>().map_err(|e| {
                            Error::ArgumentOutOfRange(format!("bad {key} value {v:?}: {e}"))
                        });
                    }
                }
            }
            Err(Error::ArgumentOutOfRange(format!(
                "measure {head:?} needs {key}=<value>"
            )))
        };
        match head {
            "mean" | "identity" => Ok(Distortion::Identity),
            "pht" => Distortion::pht(one_arg(args, "rho")?),
            "cte" | "tvar" => Distortion::cte(one_arg(args, "t")?),
            other => Err(Error::ArgumentOutOfRange(format!(
                "unknown measure {other:?} (expected mean, pht:rho=.., cte:t=..)"
            ))),
        }
    }

    /// Display string used in reports.
    pub fn label(&self) -> String {
        match self {
            Distortion::Identity => "mean".into(),
            Distortion::Pht { rho } => format!("pht:rho={rho}"),
            Distortion::Cte { t } => format!("cte:t={t}"),
            Distortion::Custom(c) => format!("custom:{}", c.label),
        }
    }

    /// Effective rho in the Brownian-bridge coefficient calculus:
    /// PHT(rho) -> rho, mean and CTE -> 1, custom -> unknown.
    pub fn rho_eff(&self) -> Option<f64> {
        match self {
            Distortion::Identity | Distortion::Cte { .. } => Some(1.0),
            Distortion::Pht { rho } => Some(*rho),
            Distortion::Custom(_) => None,
        }
    }

    /// Evaluate Psi(s) for s in [0, 1].
    pub fn psi(&self, s: f64) -> Result<f64> {
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            return Err(Error::ArgumentOutOfRange(format!(
                "distortion argument {s} outside [0, 1]"
            )));
        }
        Ok(match self {
            Distortion::Identity => s,
            Distortion::Pht { rho } => -(1.0 - s).powf(1.0 / rho),
            Distortion::Cte { t } => (s - t).max(0.0) / (1.0 - t),
            Distortion::Custom(c) => (c.eval)(s),
        })
    }

    /// Tail gap Psi(1) - Psi(1-v), evaluated without forming 1 - v where a
    /// closed form exists. This is the quantity all tail integrals reduce
    /// to; computing it through `psi(1-v)` would lose v below 2^-53.
    pub fn psi_tail_gap(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match self {
            Distortion::Identity => v,
            Distortion::Pht { rho } => v.powf(1.0 / rho),
            Distortion::Cte { t } => (v / (1.0 - t)).min(1.0),
            Distortion::Custom(c) => match &c.tail_gap {
                Some(g) => g(v),
                None => (c.eval)(1.0) - (c.eval)(1.0 - v),
            },
        }
    }

    /// Discrete L-statistic coefficient c_(j,n) = Psi(j/n) - Psi((j-1)/n).
    pub fn coefficient(&self, n: usize, j: usize) -> Result<f64> {
        if j == 0 || j > n {
            return Err(Error::RankOutOfRange { rank: j, max: n });
        }
        let hi = self.psi(j as f64 / n as f64)?;
        let lo = self.psi((j - 1) as f64 / n as f64)?;
        Ok(hi - lo)
    }

    /// Tail integral int_{1-u}^1 (1-s)^{-gamma} dPsi(s) for tail mass u.
    ///
    /// Closed forms for the built-ins; adaptive quadrature (relative
    /// tolerance 1e-10) for custom distortions. Divergent parameter
    /// combinations are rejected: PHT needs 1/rho - gamma > 0, mean and CTE
    /// need gamma < 1, and CTE additionally needs u < 1 - t.
    pub fn tail_integral(&self, gamma: f64, u: f64) -> Result<f64> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::ArgumentOutOfRange(format!(
                "tail index {gamma} must be finite and non-negative"
            )));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        match self {
            Distortion::Identity => {
                if gamma >= 1.0 {
                    return Err(Error::TailDivergence(format!(
                        "mean tail integral needs gamma < 1, got gamma = {gamma}"
                    )));
                }
                Ok(u.powf(1.0 - gamma) / (1.0 - gamma))
            }
            Distortion::Pht { rho } => {
                let a = 1.0 / rho - gamma;
                if a <= 0.0 {
                    return Err(Error::TailDivergence(format!(
                        "PHT tail integral needs rho * gamma < 1, got rho = {rho}, gamma = {gamma}"
                    )));
                }
                Ok((1.0 / rho) * u.powf(a) / a)
            }
            Distortion::Cte { t } => {
                if gamma >= 1.0 {
                    return Err(Error::TailDivergence(format!(
                        "CTE tail integral needs gamma < 1, got gamma = {gamma}"
                    )));
                }
                if u >= 1.0 - t {
                    return Err(Error::ThresholdConflict { u, avail: 1.0 - t });
                }
                Ok(u.powf(1.0 - gamma) / ((1.0 - gamma) * (1.0 - t)))
            }
            Distortion::Custom(_) => self.tail_integral_quadrature(gamma, u, 1e-10),
        }
    }

    /// Quadrature route for the tail integral, valid for any distortion.
    ///
    /// Uses integration by parts with G(s) = Psi(1) - Psi(s):
    ///   int_{1-u}^1 (1-s)^{-gamma} dPsi(s)
    ///     = u^{-gamma} G(1-u) + gamma * int_0^u G(1-v) v^{-gamma-1} dv,
    /// then substitutes v = u w^m (m = 8) so the power singularity at the
    /// endpoint is integrable for the adaptive rule.
    pub fn tail_integral_quadrature(&self, gamma: f64, u: f64, rel_tol: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        let boundary = u.powf(-gamma) * self.psi_tail_gap(u);
        if !boundary.is_finite() {
            return Err(Error::TailDivergence(format!(
                "tail integral boundary term is not finite at gamma = {gamma}, u = {u}"
            )));
        }
        let m = 8.0;
        // gamma * int_0^u G(v) v^{-gamma-1} dv with v = u w^m, where
        // G(v) = Psi(1) - Psi(1-v)
        let inner = integrate(
            |w: f64| {
                let v = u * w.powf(m);
                if v <= 0.0 {
                    return 0.0;
                }
                self.psi_tail_gap(v) * w.powf(-m * gamma - 1.0)
            },
            0.0,
            1.0,
            rel_tol,
        );
        let value = boundary + gamma * m * u.powf(-gamma) * inner;
        if !value.is_finite() {
            return Err(Error::TailDivergence(format!(
                "tail integral quadrature did not converge at gamma = {gamma}, u = {u}"
            )));
        }
        Ok(value)
    }

    /// Declared regular-variation index for custom distortions.
    pub fn declared_tail_rv_index(&self) -> Option<f64> {
        match self {
            Distortion::Custom(c) => Some(c.tail_rv_index),
            _ => None,
        }
    }
}

/// A non-decreasing transform H applied to losses before weighting.
#[derive(Clone)]
pub enum Transform {
    Identity,
    Power { beta: f64 },
    Custom(CustomTransform),
}

#[derive(Clone)]
pub struct CustomTransform {
    eval: EvalFn,
    label: String,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "Identity"),
            Transform::Power { beta } => write!(f, "Power {{ beta: {beta} }}"),
            Transform::Custom(c) => write!(f, "Custom {{ label: {:?} }}", c.label),
        }
    }
}

impl Transform {
    pub fn power(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::ArgumentOutOfRange(format!(
                "power transform exponent must be positive, got {beta}"
            )));
        }
        Ok(Transform::Power { beta })
    }

    pub fn custom(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Self {
        Transform::Custom(CustomTransform {
            eval: Arc::new(eval),
            label: label.into(),
        })
    }

    /// Parse `identity` or `power:beta=2`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            None => match s {
                "identity" | "id" => Ok(Transform::Identity),
                other => Err(Error::ArgumentOutOfRange(format!(
                    "unknown transform {other:?} (expected identity or power:beta=..)"
                ))),
            },
            Some(("power", args)) => {
                for pair in args.split(',') {
                    if let Some((k, v)) = pair.split_once('=') {
                        if k.trim() == "beta" {
                            let beta = v.trim().parse::<f64>().map_err(|e| {
                                Error::ArgumentOutOfRange(format!("bad beta value {v:?}: {e}"))
                            })?;
                            return Transform::power(beta);
                        }
                    }
                }
                Err(Error::ArgumentOutOfRange(
                    "power transform needs beta=<value>".into(),
                ))
            }
            Some((other, _)) => Err(Error::ArgumentOutOfRange(format!(
                "unknown transform {other:?}"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Transform::Identity => "identity".into(),
            Transform::Power { beta } => format!("power:beta={beta}"),
            Transform::Custom(c) => format!("custom:{}", c.label),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Power { beta } => x.powf(*beta),
            Transform::Custom(c) => (c.eval)(x),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Transform::Identity)
    }
}

/// One L-functional: a distortion Psi and a transform H.
#[derive(Debug, Clone)]
pub struct MeasureSpec {
    pub psi: Distortion,
    pub h: Transform,
    pub label: String,
}

impl MeasureSpec {
    pub fn new(psi: Distortion, h: Transform) -> Self {
        let label = format!("{} / {}", psi.label(), h.label());
        Self { psi, h, label }
    }

    pub fn mean() -> Self {
        Self::new(Distortion::Identity, Transform::Identity)
    }

    pub fn pht(rho: f64) -> Result<Self> {
        Ok(Self::new(Distortion::pht(rho)?, Transform::Identity))
    }

    pub fn cte(t: f64) -> Result<Self> {
        Ok(Self::new(Distortion::cte(t)?, Transform::Identity))
    }
}

/// Sum of the first `upto` coefficients, compensated.
pub fn coefficient_sum(d: &Distortion, n: usize, upto: usize) -> Result<f64> {
    let mut acc = KahanSum::new();
    for j in 1..=upto {
        acc.add(d.coefficient(n, j)?);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psi_closed_forms() {
        let pht2 = Distortion::pht(2.0).unwrap();
        assert_eq!(pht2.psi(1.0).unwrap(), 0.0);
        assert_eq!(pht2.psi(0.0).unwrap(), -1.0);
        let cte = Distortion::cte(0.5).unwrap();
        assert_eq!(cte.psi(0.4).unwrap(), 0.0);
        assert!((cte.psi(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!(pht2.psi(1.5).is_err());
        assert!(pht2.psi(-0.1).is_err());
    }

    #[test]
    fn coefficient_examples() {
        let id = Distortion::Identity;
        for j in 1..=10 {
            assert!((id.coefficient(10, j).unwrap() - 0.1).abs() < 1e-15);
        }
        // 1 - sqrt(3/4), direct arithmetic
        let pht2 = Distortion::pht(2.0).unwrap();
        let expect = 1.0 - (0.75f64).sqrt();
        assert!((pht2.coefficient(4, 1).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.1339746).abs() < 1e-7);
        // ((0.6-0.5) - (0.5-0.5)) / 0.5
        let cte = Distortion::cte(0.5).unwrap();
        assert!((cte.coefficient(10, 6).unwrap() - 0.2).abs() < 1e-15);
        assert!(cte.coefficient(10, 0).is_err());
        assert!(cte.coefficient(10, 11).is_err());
    }

    #[test]
    fn cte_coefficients_vanish_below_threshold() {
        let cte = Distortion::cte(0.37).unwrap();
        let n = 100;
        let cutoff = (n as f64 * 0.37).floor() as usize;
        for j in 1..=cutoff {
            assert_eq!(cte.coefficient(n, j).unwrap(), 0.0, "j = {j}");
        }
        assert!(cte.coefficient(n, cutoff + 1).unwrap() > 0.0);
    }

    #[test]
    fn tail_integral_frozen_values() {
        // oracle: adaptive quadrature of the same Stieltjes integral
        let id = Distortion::Identity;
        let v = id.tail_integral(0.6, 0.01).unwrap();
        assert!((v - 0.3962233).abs() / 0.3962233 < 1e-6, "got {v}");

        let pht = Distortion::pht(1.2).unwrap();
        let v = pht.tail_integral(0.6, 0.01).unwrap();
        assert!((v - 1.219482).abs() / 1.219482 < 2e-6, "got {v}");

        let cte = Distortion::cte(0.9).unwrap();
        let v = cte.tail_integral(0.75, 0.05).unwrap();
        assert!((v - 18.9148).abs() / 18.9148 < 1e-5, "got {v}");
    }

    #[test]
    fn tail_integral_closed_vs_quadrature_grid() {
        // closed forms against the independent quadrature path
        let cases: Vec<(Distortion, f64)> = vec![
            (Distortion::Identity, 0.55),
            (Distortion::Identity, 0.9),
            (Distortion::pht(1.2).unwrap(), 0.6),
            (Distortion::pht(1.05).unwrap(), 0.9),
            (Distortion::pht(1.5).unwrap(), 0.55),
            (Distortion::cte(0.5).unwrap(), 0.75),
            (Distortion::cte(0.9).unwrap(), 0.6),
            (Distortion::cte(0.99).unwrap(), 0.55),
        ];
        for (d, gamma) in &cases {
            for &u in &[0.001, 0.005, 0.05] {
                if let Distortion::Cte { t } = d {
                    if u >= 1.0 - t {
                        continue;
                    }
                }
                let closed = d.tail_integral(*gamma, u).unwrap();
                let quad = d.tail_integral_quadrature(*gamma, u, 1e-12).unwrap();
                let rel = ((closed - quad) / closed).abs();
                assert!(rel < 1e-8, "{d:?} gamma={gamma} u={u}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn tail_integral_divergence_guards() {
        let pht2 = Distortion::pht(2.0).unwrap();
        assert!(matches!(
            pht2.tail_integral(0.6, 0.01),
            Err(Error::TailDivergence(_))
        ));
        assert!(matches!(
            Distortion::Identity.tail_integral(1.0, 0.01),
            Err(Error::TailDivergence(_))
        ));
        let cte = Distortion::cte(0.9).unwrap();
        assert!(matches!(
            cte.tail_integral(0.6, 0.2),
            Err(Error::ThresholdConflict { .. })
        ));
    }

    #[test]
    fn custom_distortion_matches_pht() {
        let rho = 1.3;
        let custom = Distortion::custom_with_tail(
            move |s: f64| -(1.0 - s).powf(1.0 / rho),
            move |v: f64| v.powf(1.0 / rho),
            1.0 / rho - 0.6,
            "pht-clone",
        )
        .unwrap();
        let exact = Distortion::pht(rho).unwrap();
        for &(g, u) in &[(0.6, 0.01), (0.55, 0.005), (0.7, 0.03)] {
            let a = custom.tail_integral(g, u).unwrap();
            let b = exact.tail_integral(g, u).unwrap();
            assert!(((a - b) / b).abs() < 1e-9, "g={g} u={u}: {a} vs {b}");
        }

        // without a tail evaluator the route bottoms out at the f64
        // resolution of 1 - v; still good to a few parts in 1e3
        let plain = Distortion::custom(
            move |s: f64| -(1.0 - s).powf(1.0 / rho),
            1.0 / rho - 0.6,
            "pht-clone-plain",
        )
        .unwrap();
        let a = plain.tail_integral(0.6, 0.01).unwrap();
        let b = exact.tail_integral(0.6, 0.01).unwrap();
        assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
    }

    #[test]
    fn custom_rejects_decreasing() {
        assert!(Distortion::custom(|s: f64| -s, 0.3, "bad").is_err());
    }

    #[test]
    fn parse_measure_strings() {
        assert!(matches!(Distortion::parse("mean").unwrap(), Distortion::Identity));
        match Distortion::parse("pht:rho=1.2").unwrap() {
            Distortion::Pht { rho } => assert_eq!(rho, 1.2),
            other => panic!("{other:?}"),
        }
        match Distortion::parse("cte:t=0.9").unwrap() {
            Distortion::Cte { t } => assert_eq!(t, 0.9),
            other => panic!("{other:?}"),
        }
        assert!(Distortion::parse("pht:rho=0.5").is_err());
        assert!(Distortion::parse("nope").is_err());
        match Transform::parse("power:beta=2").unwrap() {
            Transform::Power { beta } => assert_eq!(beta, 2.0),
            other => panic!("{other:?}"),
        }
        assert!(Transform::parse("power:beta=-1").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn telescoping(n in 4usize..500, which in 0usize..3, rho in 1.0f64..5.0, t in 0.0f64..0.99) {
            let d = match which {
                0 => Distortion::Identity,
                1 => Distortion::pht(rho).unwrap(),
                _ => Distortion::cte(t).unwrap(),
            };
            let total = coefficient_sum(&d, n, n).unwrap();
            let expect = d.psi(1.0).unwrap() - d.psi(0.0).unwrap();
            prop_assert!((total - expect).abs() < 1e-12, "{} vs {}", total, expect);
        }

        #[test]
        fn pht_rho_one_equals_identity(n in 4usize..200, j in 1usize..200) {
            prop_assume!(j <= n);
            let pht1 = Distortion::pht(1.0).unwrap();
            let a = pht1.coefficient(n, j).unwrap();
            let b = Distortion::Identity.coefficient(n, j).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }
}
