//! Text rendering of reports. JSON output uses the serde derives directly.

use std::fmt::Write;

use serde::Serialize;
use siws_core::assumptions::{AssumptionCheck, AssumptionReport, Offender};
use siws_core::stability::{Certificate, KappaBound, Reason, ReproductionComparison, SlowVariationConstants, Witness};

use crate::experiments::{Bundle, Calibration, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

/// Serde name of a unit enum variant.
fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn sig(v: f64) -> String {
    format!("{v:.6e}")
}

fn offender(o: &Offender) -> String {
    let mut s = tag(&o.quantity);
    let mut at = Vec::new();
    if let Some(v) = o.virus {
        at.push(format!("virus {}", v + 1));
    }
    if let Some(f) = o.frame {
        at.push(format!("frame {}", f + 1));
    }
    if let Some(k) = o.instant {
        at.push(format!("k = {k}"));
    }
    match o.column {
        Some(c) => at.push(format!("entry ({}, {})", o.index + 1, c + 1)),
        None => at.push(format!("index {}", o.index + 1)),
    }
    let _ = write!(s, " [{}] = {}", at.join(", "), sig(o.value));
    s
}

fn check_line(out: &mut String, c: &AssumptionCheck) {
    let status = if c.passed { "PASS" } else { "FAIL" };
    let _ = write!(out, "  {status}  {}", c.id);
    if let Some(m) = c.margin {
        let _ = write!(out, "  (margin {})", sig(m));
    }
    if let Some(min) = c.required_minimum {
        let _ = write!(out, "  (smallest admissible value {})", sig(min));
    }
    out.push('\n');
    for o in &c.offenders {
        let _ = writeln!(out, "        {}", offender(o));
    }
    if c.offender_count > c.offenders.len() {
        let _ = writeln!(out, "        ... {} more", c.offender_count - c.offenders.len());
    }
}

pub fn assumptions_text(report: &AssumptionReport) -> String {
    let mut out = String::from("Well-posedness checks\n");
    for c in &report.checks {
        check_line(&mut out, c);
    }
    let _ = writeln!(out, "  overall: {}", if report.passed() { "PASS" } else { "FAIL" });
    out
}

fn reason(r: &Reason) -> String {
    match r {
        Reason::AssumptionsFailed { failed } => {
            let names: Vec<String> = failed.iter().map(ToString::to_string).collect();
            format!("failed checks: {}", names.join("; "))
        }
        Reason::ScheduleVaries => "parameters vary in time".into(),
        Reason::SpectralRadius { rho } => format!("spectral radius {} is not below 1", sig(*rho)),
        Reason::Structure { failed } => {
            let names: Vec<String> = failed.iter().map(tag).collect();
            format!("structural conditions fail: {}", names.join(", "))
        }
        Reason::VariationBound { kappa_obs, kappa_star } => {
            format!(
                "observed variation {} exceeds the budget {}",
                sig(*kappa_obs),
                sig(*kappa_star)
            )
        }
        Reason::DiagonalWitnessFallback { lambda_max } => {
            format!(
                "diagonal witness rejected (gap {}); series solution used",
                sig(*lambda_max)
            )
        }
        Reason::WitnessUnverified { lambda_max } => format!("witness not verified (gap {})", sig(*lambda_max)),
    }
}

fn witness(w: &Witness) -> String {
    match w {
        Witness::Diagonal { p, lambda_max } => format!(
            "diagonal P (min {}, max {}), max eig(MᵀPM − P) = {}",
            sig(p.iter().copied().fold(f64::INFINITY, f64::min)),
            sig(p.iter().copied().fold(0.0, f64::max)),
            sig(*lambda_max)
        ),
        Witness::Identity { lambda_max } => format!("P = I, max eig(MᵀM − I) = {}", sig(*lambda_max)),
        Witness::Lyapunov { solutions, lambda_max } => format!(
            "series Lyapunov solutions for {} frame(s), max eig(MᵀPM − P) = {}",
            solutions.iter().flatten().count(),
            sig(*lambda_max)
        ),
    }
}

pub fn slow_text(out: &mut String, c: &SlowVariationConstants, indent: &str) {
    let _ = writeln!(
        out,
        "{indent}alpha1 = {}, L = {}, kappa_obs = {}",
        sig(c.alpha1),
        sig(c.l),
        sig(c.kappa_obs)
    );
    match &c.bound {
        Some(b) => {
            let _ = writeln!(
                out,
                "{indent}kappa* = {} (log10 {:.2}), sigma = {}",
                sig(b.kappa_star),
                b.log10_kappa_star(),
                c.sigma
            );
        }
        None => {
            let _ = writeln!(out, "{indent}kappa* undefined (alpha1 >= 1)");
        }
    }
    if let Some(lc) = c.log10_conservatism {
        let _ = writeln!(out, "{indent}log10(kappa_obs / kappa*) = {lc:.2}");
    }
}

pub fn certificate_text(c: &Certificate) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "virus {}: {} certificate: {}", c.virus + 1, c.kind, c.verdict);
    if let Some(s) = &c.spectral {
        let per: Vec<String> = s.per_frame.iter().map(|r| format!("{r:.6}")).collect();
        let _ = writeln!(
            out,
            "    rho = {:.10} (margin {}), per frame [{}]",
            s.rho,
            sig(s.margin),
            per.join(", ")
        );
    }
    if let Some(st) = &c.structure {
        let failed = st.failed();
        if failed.is_empty() {
            out.push_str("    structural conditions hold\n");
        } else {
            let names: Vec<String> = failed.iter().map(tag).collect();
            let _ = writeln!(out, "    structural conditions failing: {}", names.join(", "));
        }
    }
    if let Some(sv) = &c.slow {
        slow_text(&mut out, sv, "    ");
    }
    if let Some(w) = &c.witness {
        let _ = writeln!(out, "    witness: {}", witness(w));
    }
    for r in &c.reasons {
        let _ = writeln!(out, "    reason: {}", reason(r));
    }
    out
}

/// Attempts per virus; the last attempt of each carries the verdict.
pub fn certificates_text(attempts: &[Vec<Certificate>]) -> String {
    let mut out = String::new();
    for list in attempts {
        for (i, c) in list.iter().enumerate() {
            if i + 1 < list.len() {
                out.push_str("  (attempt) ");
            } else {
                out.push_str("  ");
            }
            out.push_str(&certificate_text(c));
        }
    }
    out
}

/// Whether the observed variation is within the budget (`α₁ < 1` and
/// `κ_obs ≤ κ*`).
pub fn within_budget(c: &SlowVariationConstants) -> bool {
    c.bound.as_ref().is_some_and(|b| c.kappa_obs <= b.kappa_star)
}

pub fn kappa_text(rows: &[(usize, SlowVariationConstants)]) -> String {
    let mut out = String::from(
        "virus  alpha1        L             kappa_obs     kappa*        log10 kappa*  log10 ratio  certified\n",
    );
    for (r, c) in rows {
        let (ks, lks) = c
            .bound
            .as_ref()
            .map(|b: &KappaBound| (sig(b.kappa_star), format!("{:.2}", b.log10_kappa_star())))
            .unwrap_or_else(|| ("undefined".into(), "-".into()));
        let ratio = c
            .log10_conservatism
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<6} {:<13} {:<13} {:<13} {:<13} {:<13} {:<12} {}",
            r + 1,
            sig(c.alpha1),
            sig(c.l),
            sig(c.kappa_obs),
            ks,
            lks,
            ratio,
            if within_budget(c) { "yes" } else { "no" }
        );
    }
    out
}

pub fn r0_text(rows: &[(usize, ReproductionComparison)]) -> String {
    let mut out = String::from("virus  rho(M_f)       rho(M)         irreducible  rho(M_f) > rho(M)\n");
    for (r, c) in rows {
        let _ = writeln!(
            out,
            "{:<6} {:<14.10} {:<14.10} {:<12} {}",
            r + 1,
            c.rho_full,
            c.rho_individual,
            c.irreducible,
            c.ordering_holds
        );
    }
    out
}

pub fn summary_text(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Simulation: {} steps (h = {}){}",
        s.steps,
        s.h,
        if s.stopped_early {
            ", stopped once certified viruses decayed"
        } else {
            ""
        }
    );
    for v in &s.viruses {
        let _ = write!(
            out,
            "  virus {}: {} ({}); xbar {} -> {}, wbar {} -> {}",
            v.virus,
            if v.certified { "certified" } else { "not certified" },
            v.certificate,
            sig(v.xbar_initial),
            sig(v.xbar_final),
            sig(v.wbar_initial),
            sig(v.wbar_final)
        );
        if let Some(g) = v.fitted_gamma {
            let _ = write!(out, ", fitted gamma {g:.9}");
        }
        let state = if v.eradicated {
            "eradicated"
        } else if v.persistent {
            "persistent"
        } else {
            "decaying"
        };
        let _ = write!(out, ", {state}");
        if let (Some(e), Some(ok)) = (v.expected, v.matches_expected) {
            let _ = write!(out, ", expected {} [{}]", tag(&e), if ok { "OK" } else { "MISMATCH" });
        }
        out.push('\n');
    }
    if let Some(ok) = s.expectations_met {
        let _ = writeln!(out, "  expectations: {}", if ok { "met" } else { "NOT met" });
    }
    out
}

pub fn calibration_text(c: &Calibration) -> String {
    if c.rows.is_empty() {
        return String::new();
    }
    let mut out = String::from("Calibration against reference values\n");
    if let Some(t) = &c.topology {
        let _ = writeln!(out, "  topology: {t}");
    }
    out.push_str("  virus  quantity    relation  reference     computed      discrepancy   status\n");
    for r in &c.rows {
        let _ = writeln!(
            out,
            "  {:<6} {:<11} {:<9} {:<13.6} {:<13.6} {:<13} {}",
            r.virus,
            tag(&r.quantity),
            tag(&r.relation),
            r.reference,
            r.computed,
            sig(r.discrepancy),
            if r.consistent { "consistent" } else { "DISCREPANT" }
        );
    }
    out
}

pub fn bundle_text(b: &Bundle) -> String {
    let mut out = format!("== {} (seed {}) ==\n", b.name, b.seed);
    out.push_str(&assumptions_text(&b.assumptions));
    if !b.certificates.is_empty() {
        out.push_str("Certificates\n");
        out.push_str(&certificates_text(&b.certificates));
    }
    if let Some(s) = &b.summary {
        out.push_str(&summary_text(s));
    }
    out.push_str(&calibration_text(&b.calibration));
    out
}
