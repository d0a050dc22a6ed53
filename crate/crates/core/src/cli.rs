//! Command implementations behind the `tailcouple` binary. Each command
//! returns its full output as a string; the binary writes it once at the
//! end, to stdout or a file.

use std::path::Path;

use serde::Serialize;

use crate::bridge::{
    self, kernel_cross_moment_at, kernel_moments_at, simulate_bridge_moments, BridgeSimConfig,
};
use crate::coupled::{estimate_coupled, BiasInputs, Coupling};
use crate::error::Result;
use crate::lstat::LEstimate;
use crate::measure::{Distortion, MeasureSpec, Transform};
use crate::numeric::derive_seed;
use crate::sample::Sample;
use crate::simlab::{self, DistributionModel, ExperimentConfig};
use crate::tail::{hill_trajectory, ParsedK};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct MeasureReport {
    label: String,
    transform: String,
    gamma_hat: f64,
    in_theory_range: bool,
    tied_top: usize,
    trunc: f64,
    tail: f64,
    total: f64,
    d_hat: f64,
    sqrt_nk_d: f64,
}

impl MeasureReport {
    fn from_estimate(e: &LEstimate) -> Self {
        Self {
            label: e.spec.psi.label(),
            transform: e.spec.h.label(),
            gamma_hat: e.fit.gamma_hat,
            in_theory_range: e.fit.in_theory_range,
            tied_top: e.fit.tied_top,
            trunc: e.trunc_part,
            tail: e.tail_part,
            total: e.total,
            d_hat: e.d_hat,
            sqrt_nk_d: e.sqrt_nk_d(),
        }
    }
}

#[derive(Serialize)]
struct CoupledReport {
    coupling: String,
    point: f64,
    delta_hat: f64,
    sigma2: Option<f64>,
    lambda: f64,
    half_width_scale: f64,
    alpha: f64,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct EstimateReport {
    schema: u32,
    n: usize,
    k: usize,
    measure1: MeasureReport,
    measure2: Option<MeasureReport>,
    coupled: CoupledReport,
}

/// Parsed measure configuration shared by `estimate` and `simulate`.
pub struct MeasurePair {
    pub spec1: MeasureSpec,
    pub spec2: MeasureSpec,
    pub coupling: Coupling,
}

pub fn parse_measures(
    measure1: &str,
    measure2: &str,
    transform1: &str,
    transform2: &str,
    coupling: &str,
) -> Result<MeasurePair> {
    Ok(MeasurePair {
        spec1: MeasureSpec::new(Distortion::parse(measure1)?, Transform::parse(transform1)?),
        spec2: MeasureSpec::new(Distortion::parse(measure2)?, Transform::parse(transform2)?),
        coupling: Coupling::parse(coupling)?,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_estimate(
    sample: &Sample,
    measures: &MeasurePair,
    k_spec: &str,
    alpha: f64,
    bias: Option<BiasInputs>,
) -> Result<String> {
    let parsed_k = ParsedK::parse(k_spec)?;
    let k = parsed_k.resolve(sample, &measures.spec1.h)?;
    let est = estimate_coupled(
        sample,
        &measures.spec1,
        &measures.spec2,
        &measures.coupling,
        k,
        alpha,
        bias,
    )?;
    let report = EstimateReport {
        schema: SCHEMA_VERSION,
        n: sample.n(),
        k,
        measure1: MeasureReport::from_estimate(&est.l1),
        measure2: est.l2.as_ref().map(MeasureReport::from_estimate),
        coupled: CoupledReport {
            coupling: measures.coupling.label(),
            point: est.point,
            delta_hat: est.delta_hat,
            sigma2: est.sigma2,
            lambda: est.lambda,
            half_width_scale: est.half_width_scale,
            alpha: est.alpha,
            ci_low: est.ci.map(|c| c.0),
            ci_high: est.ci.map(|c| c.1),
            warnings: est.warnings.iter().map(|w| w.to_string()).collect(),
        },
    };
    Ok(serde_json::to_string_pretty(&report).expect("report serialization"))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    model: &str,
    measures: &MeasurePair,
    n: usize,
    reps: usize,
    k_spec: &str,
    alpha: f64,
    seed: u64,
    emit_sample: Option<&Path>,
) -> Result<String> {
    let model = DistributionModel::parse(model)?;
    let config = ExperimentConfig {
        model,
        spec1: measures.spec1.clone(),
        spec2: measures.spec2.clone(),
        coupling: measures.coupling.clone(),
        k: ParsedK::parse(k_spec)?,
        alpha,
        n,
        replicates: reps,
        seed,
        bias: None,
    };
    if let Some(path) = emit_sample {
        // the first replicate's sample, written with round-trip precision
        let s = simlab::sample_from(&model, n, derive_seed(seed, 0))?;
        let mut text = String::from("loss\n");
        for v in s.values() {
            text.push_str(&format!("{v}\n"));
        }
        std::fs::write(path, text)?;
    }
    let report = simlab::run_experiment(&config)?;
    let mut value = serde_json::to_value(&report).expect("report serialization");
    value
        .as_object_mut()
        .expect("object report")
        .insert("schema".into(), SCHEMA_VERSION.into());
    Ok(serde_json::to_string_pretty(&value).expect("report serialization"))
}

/// CSV rows `k,gamma_hat,in_theory_range`, ascending k, no header.
pub fn cmd_scan_k(sample: &Sample, transform: &str, from: usize, to: usize) -> Result<String> {
    let h = Transform::parse(transform)?;
    let fits = hill_trajectory(sample, &h, from..=to)?;
    let mut out = String::new();
    for fit in fits {
        out.push_str(&format!("{},{},{}\n", fit.k, fit.gamma_hat, fit.in_theory_range));
    }
    Ok(out)
}

#[derive(Serialize)]
struct BridgeEntry {
    pair: String,
    empirical: f64,
    se: f64,
    limit: Option<f64>,
    finite_u: Option<f64>,
    /// Alternative closed form of E[W1 W2] recorded alongside the
    /// kernel-resolved limit.
    printed_limit: Option<f64>,
}

#[derive(Serialize)]
struct BridgeReport {
    schema: u32,
    gamma: f64,
    rho_list: Vec<f64>,
    k_over_n: f64,
    grid: usize,
    reps: usize,
    seed: u64,
    entries: Vec<BridgeEntry>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bridge_check(
    gamma: f64,
    rho: f64,
    rho2: Option<f64>,
    k_over_n: f64,
    grid: usize,
    reps: usize,
    seed: u64,
) -> Result<String> {
    let mut rho_list = vec![rho];
    if let Some(r2) = rho2 {
        rho_list.push(r2);
    }
    let config = BridgeSimConfig {
        k_over_n,
        grid,
        reps,
        seed,
    };
    let sim = simulate_bridge_moments(gamma, &rho_list, config)?;

    let nrho = rho_list.len();
    let nv = nrho + 2;
    let mut entries = Vec::new();
    for i in 0..nv {
        for j in i..nv {
            let pair = format!("{} * {}", sim.labels[i], sim.labels[j]);
            let (limit, finite_u, printed) = analytic_entry(gamma, &rho_list, k_over_n, i, j);
            entries.push(BridgeEntry {
                pair,
                empirical: sim.moments[i][j],
                se: sim.std_errors[i][j],
                limit,
                finite_u,
                printed_limit: printed,
            });
        }
    }
    let report = BridgeReport {
        schema: SCHEMA_VERSION,
        gamma,
        rho_list,
        k_over_n,
        grid,
        reps,
        seed,
        entries,
    };
    Ok(serde_json::to_string_pretty(&report).expect("report serialization"))
}

fn analytic_entry(
    gamma: f64,
    rho_list: &[f64],
    u: f64,
    i: usize,
    j: usize,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    let nrho = rho_list.len();
    let w2 = nrho;
    let w3 = nrho + 1;
    // W2/W3 block
    if i >= nrho && j >= nrho {
        return match (i == w2, j == w2, i == w3, j == w3) {
            (true, true, _, _) => (Some(1.0), Some(1.0 - u), None),
            (_, _, true, true) => (Some(2.0), Some(2.0 - u), None),
            _ => (Some(1.0), Some(1.0 - u), None), // W2*W3
        };
    }
    // at least one W1
    if i < nrho && j < nrho {
        if i == j {
            let limit = bridge::w_moment_table(gamma, rho_list[i]).ok().map(|t| t.e11);
            let finite = kernel_moments_at(gamma, rho_list[i], u).ok().map(|t| t.e11);
            return (limit, finite, None);
        }
        let limit =
            bridge::kernel_cross_limit(gamma, rho_list[i], gamma, rho_list[j]).ok();
        let finite =
            kernel_cross_moment_at(gamma, rho_list[i], gamma, rho_list[j], u).ok();
        return (limit, finite, None);
    }
    // W1 x (W2 | W3)
    let r = rho_list[i.min(j)];
    let other = i.max(j);
    let table = bridge::w_moment_table(gamma, r).ok();
    let finite = kernel_moments_at(gamma, r, u).ok();
    if other == w2 {
        (
            table.map(|t| t.e12),
            finite.map(|t| t.e12),
            table.map(|t| t.e12_printed),
        )
    } else {
        (table.map(|t| t.e13), finite.map(|t| t.e13), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_sample(n: usize, gamma: f64) -> Sample {
        let raw: Vec<f64> = (1..=n)
            .map(|j| (1.0 - j as f64 / (n as f64 + 1.0)).powf(-gamma))
            .collect();
        Sample::from_values(&raw, "grid").unwrap()
    }

    #[test]
    fn estimate_report_shape() {
        let s = grid_sample(2000, 0.6);
        let m = parse_measures("pht:rho=1.2", "mean", "identity", "identity", "first").unwrap();
        let out = cmd_estimate(&s, &m, "auto", 0.05, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["n"], 2000);
        assert!(v["k"].as_u64().unwrap() >= 2);
        assert!(v["measure1"]["gamma_hat"].is_f64());
        assert!(v["measure1"]["sqrt_nk_d"].is_f64());
        // first coupling: point equals the first measure's total
        let point = v["coupled"]["point"].as_f64().unwrap();
        let total = v["measure1"]["total"].as_f64().unwrap();
        assert_eq!(point, total);
        assert_eq!(v["coupled"]["delta_hat"], 1.0);
    }

    #[test]
    fn estimate_ratio_relation() {
        let s = grid_sample(3000, 0.6);
        let m = parse_measures("cte:t=0.9", "mean", "identity", "identity", "ratio").unwrap();
        let out = cmd_estimate(&s, &m, "auto", 0.05, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let point = v["coupled"]["point"].as_f64().unwrap();
        let t1 = v["measure1"]["total"].as_f64().unwrap();
        let t2 = v["measure2"]["total"].as_f64().unwrap();
        assert!((point - t1 / t2).abs() < 1e-12);
    }

    #[test]
    fn scan_k_row_count() {
        let s = grid_sample(500, 0.7);
        let out = cmd_scan_k(&s, "identity", 10, 200).unwrap();
        let rows: Vec<&str> = out.lines().collect();
        assert_eq!(rows.len(), 191);
        assert!(rows[0].starts_with("10,"));
        assert!(rows[190].starts_with("200,"));
        for row in rows {
            assert_eq!(row.split(',').count(), 3);
        }
    }

    #[test]
    fn bridge_check_has_analytics() {
        let out = cmd_bridge_check(0.6, 1.0, None, 0.005, 10_000, 1000, 7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let entries = v["entries"].as_array().unwrap();
        assert_eq!(entries.len(), 6);
        let w1w2 = entries
            .iter()
            .find(|e| e["pair"] == "W1(rho=1) * W2")
            .unwrap();
        assert_eq!(w1w2["limit"], 1.0);
        assert_eq!(w1w2["printed_limit"], -1.0);
        assert!(w1w2["finite_u"].as_f64().unwrap() < 1.0);
    }
}
