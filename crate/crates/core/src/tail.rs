//! Tail index estimation (Hill) and high-quantile extrapolation (Weissman).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::Transform;
use crate::sample::Sample;

/// Result of a Hill fit at threshold rank k.
#[derive(Debug, Clone)]
pub struct TailFit {
    /// Hill estimate of the tail index, always >= 0.
    pub gamma_hat: f64,
    /// Threshold rank: the top k transformed values enter the log-excess sum.
    pub k: usize,
    pub n: usize,
    /// H(X_(n-k:n)), the transformed threshold.
    pub threshold_value: f64,
    /// Number of tied values among the top k+1 transformed observations.
    /// Ties at the threshold degrade the estimator.
    pub tied_top: usize,
    /// Whether gamma_hat lies in (1/2, 1), the range the asymptotic
    /// variance calculus requires. Outside it, estimation still proceeds
    /// but interval output is downgraded to point estimates.
    pub in_theory_range: bool,
}

impl TailFit {
    /// The threshold equals the sample maximum (all log-excesses zero).
    pub fn is_degenerate(&self) -> bool {
        self.gamma_hat == 0.0
    }

    /// Tail mass k/n.
    pub fn tail_mass(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Hill estimator of the tail index on H-transformed data:
/// gamma_hat = (1/k) sum_{j=1..k} log( H(X_(n-j+1:n)) / H(X_(n-k:n)) ).
pub fn hill(s: &Sample, h: &Transform, k: usize) -> Result<TailFit> {
    let n = s.n();
    if k == 0 || k > n - 1 {
        return Err(Error::RankOutOfRange { rank: k, max: n - 1 });
    }
    let values = s.values();
    let threshold = h.apply(values[n - k - 1]);
    if !(threshold > 0.0) {
        return Err(Error::ZeroThreshold(threshold));
    }
    let mut sum = 0.0;
    for j in 1..=k {
        let top = h.apply(values[n - j]);
        sum += (top / threshold).ln();
    }
    let gamma_hat = sum / k as f64;

    let mut tied_top = 0;
    let mut prev = h.apply(values[n - k - 1]);
    let mut run = 1usize;
    for j in (0..k).rev() {
        let v = h.apply(values[n - 1 - j]);
        if v == prev {
            run += 1;
        } else {
            if run > 1 {
                tied_top += run;
            }
            prev = v;
            run = 1;
        }
    }
    if run > 1 {
        tied_top += run;
    }

    Ok(TailFit {
        gamma_hat,
        k,
        n,
        threshold_value: threshold,
        tied_top,
        in_theory_range: gamma_hat > 0.5 && gamma_hat < 1.0,
    })
}

/// Weissman extrapolated quantile of the transformed loss at level s:
/// (k/n)^gamma_hat * H(X_(n-k:n)) * (1-s)^{-gamma_hat}.
///
/// Valid on [1 - k/n, 1); at the left endpoint the factors cancel and the
/// threshold is returned exactly.
pub fn weissman_quantile(fit: &TailFit, s: f64) -> Result<f64> {
    let u = fit.tail_mass();
    if !(s < 1.0 && s + 1e-12 >= 1.0 - u) {
        return Err(Error::ProbabilityOutOfRange(s));
    }
    if s <= 1.0 - u {
        return Ok(fit.threshold_value);
    }
    Ok(u.powf(fit.gamma_hat) * fit.threshold_value * (1.0 - s).powf(-fit.gamma_hat))
}

/// Threshold-rank selection policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KPolicy {
    /// k = clamp(floor(c * n), 2, n-2)
    FixedFraction(f64),
    /// k = clamp(floor(n^a), 2, n-2)
    PowerLaw(f64),
    /// k minimizing the moving standard deviation of gamma_hat over windows
    /// of 10 consecutive ranks in [floor(n^0.3), floor(n^0.6)].
    StabilityScan,
}

impl ParsedK {
    /// Parse `auto`, `scan`, `pow:0.45`, `frac:0.1`, or an explicit integer
    /// (returned as a fixed rank via `Explicit`).
    pub fn parse(s: &str) -> Result<ParsedK> {
        let s = s.trim();
        if s == "auto" {
            return Ok(ParsedK::Policy(KPolicy::PowerLaw(0.45)));
        }
        if s == "scan" {
            return Ok(ParsedK::Policy(KPolicy::StabilityScan));
        }
        if let Some(rest) = s.strip_prefix("pow:") {
            let a: f64 = rest.parse().map_err(|e| {
                Error::ArgumentOutOfRange(format!("bad power-law exponent {rest:?}: {e}"))
            })?;
            return Ok(ParsedK::Policy(KPolicy::PowerLaw(a)));
        }
        if let Some(rest) = s.strip_prefix("frac:") {
            let c: f64 = rest.parse().map_err(|e| {
                Error::ArgumentOutOfRange(format!("bad fraction {rest:?}: {e}"))
            })?;
            return Ok(ParsedK::Policy(KPolicy::FixedFraction(c)));
        }
        let k: usize = s.parse().map_err(|e| {
            Error::ArgumentOutOfRange(format!(
                "bad k {s:?} (expected auto, scan, pow:<a>, frac:<c>, or an integer): {e}"
            ))
        })?;
        Ok(ParsedK::Explicit(k))
    }
}

/// Either a policy or an explicit user-chosen rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedK {
    Policy(KPolicy),
    Explicit(usize),
}

impl ParsedK {
    pub fn resolve(&self, s: &Sample, h: &Transform) -> Result<usize> {
        match self {
            ParsedK::Policy(p) => select_k(s, h, *p),
            ParsedK::Explicit(k) => Ok(*k),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ParsedK::Policy(KPolicy::PowerLaw(a)) => format!("pow:{a}"),
            ParsedK::Policy(KPolicy::FixedFraction(c)) => format!("frac:{c}"),
            ParsedK::Policy(KPolicy::StabilityScan) => "scan".into(),
            ParsedK::Explicit(k) => k.to_string(),
        }
    }
}

fn clamp_k(k: usize, n: usize) -> usize {
    k.clamp(2, n - 2)
}

/// Select the threshold rank per policy. The transform is only consulted by
/// `StabilityScan`, which scans Hill estimates of the transformed data.
pub fn select_k(s: &Sample, h: &Transform, policy: KPolicy) -> Result<usize> {
    let n = s.n();
    if n < 4 {
        return Err(Error::TooFewObservations(n));
    }
    match policy {
        KPolicy::FixedFraction(c) => {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::ArgumentOutOfRange(format!(
                    "fixed fraction must be positive, got {c}"
                )));
            }
            Ok(clamp_k((c * n as f64).floor() as usize, n))
        }
        KPolicy::PowerLaw(a) => {
            if !(a.is_finite() && a > 0.0 && a < 1.0) {
                return Err(Error::ArgumentOutOfRange(format!(
                    "power-law exponent must lie in (0, 1), got {a}"
                )));
            }
            Ok(clamp_k((n as f64).powf(a).floor() as usize, n))
        }
        KPolicy::StabilityScan => {
            let lo = clamp_k((n as f64).powf(0.3).floor() as usize, n);
            let hi = clamp_k((n as f64).powf(0.6).floor() as usize, n);
            let ks: Vec<usize> = (lo..=hi.max(lo)).collect();
            let gammas: Vec<f64> = ks
                .iter()
                .map(|&k| hill(s, h, k).map(|f| f.gamma_hat))
                .collect::<Result<_>>()?;
            let window = ks.len().min(10).max(2);
            if gammas.len() < window {
                return Ok(clamp_k((n as f64).powf(0.45).floor() as usize, n));
            }
            let mut best = (f64::INFINITY, ks[0]);
            for start in 0..=(gammas.len() - window) {
                let slice = &gammas[start..start + window];
                let mean = slice.iter().sum::<f64>() / window as f64;
                let var =
                    slice.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / window as f64;
                let sd = var.sqrt();
                let center_k = ks[start + window / 2];
                if sd < best.0 {
                    best = (sd, center_k);
                }
            }
            Ok(best.1)
        }
    }
}

/// Hill estimates for every rank in `k_range`, ascending. Computed in
/// parallel; output order is by rank regardless of scheduling.
pub fn hill_trajectory(
    s: &Sample,
    h: &Transform,
    k_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<TailFit>> {
    let ks: Vec<usize> = k_range.collect();
    ks.par_iter().map(|&k| hill(s, h, k)).collect()
}
