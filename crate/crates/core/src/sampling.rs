//! Frequency-response datasets: the only input of the data-driven path.
//!
//! Only positive-node samples are stored; values at mirrored negative nodes
//! follow from `H(-i w) = conj(H(i w))` and are reconstructed downstream.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::SecondOrderSystem;
use crate::quadrature::{check_disjoint, QuadratureRule, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySampleSet {
    pub p_rule: QuadratureRule,
    pub q_rule: QuadratureRule,
    /// `H(i zeta_j)` at the positive P nodes.
    pub p_values: Vec<Complex64>,
    /// `H(i omega_k)` at the positive Q nodes.
    pub q_values: Vec<Complex64>,
    pub alpha: f64,
    pub beta: f64,
    pub provenance: String,
}

impl FrequencySampleSet {
    pub fn new(
        p_rule: QuadratureRule,
        q_rule: QuadratureRule,
        p_values: Vec<Complex64>,
        q_values: Vec<Complex64>,
        alpha: f64,
        beta: f64,
        provenance: String,
    ) -> Result<Self> {
        if p_values.len() != p_rule.nu() || q_values.len() != q_rule.nu() {
            return Err(Error::DimensionMismatch(format!(
                "value counts ({}, {}) do not match positive node counts ({}, {})",
                p_values.len(),
                q_values.len(),
                p_rule.nu(),
                q_rule.nu()
            )));
        }
        let collisions = check_disjoint(&p_rule, &q_rule);
        if !collisions.is_empty() {
            return Err(Error::DisjointnessViolation(collisions.len()));
        }
        Ok(FrequencySampleSet {
            p_rule,
            q_rule,
            p_values,
            q_values,
            alpha,
            beta,
            provenance,
        })
    }
}

/// Evaluate `H` at `i * node` for every positive node of both rules.
pub fn sample_model(
    sys: &SecondOrderSystem,
    p_rule: &QuadratureRule,
    q_rule: &QuadratureRule,
) -> Result<FrequencySampleSet> {
    let (alpha, beta) = sys.damping.ok_or(Error::MissingDamping)?;
    let to_imag = |nodes: &[f64]| -> Vec<Complex64> {
        nodes.iter().map(|&x| Complex64::new(0.0, x)).collect()
    };
    let p_values = sys.eval_transfer_batch(&to_imag(&p_rule.positive_nodes))?;
    let q_values = sys.eval_transfer_batch(&to_imag(&q_rule.positive_nodes))?;
    FrequencySampleSet::new(
        p_rule.clone(),
        q_rule.clone(),
        p_values,
        q_values,
        alpha,
        beta,
        "model".into(),
    )
}

#[derive(Debug, Clone, Default)]
pub struct ClosureReport {
    pub structural_ok: bool,
    pub conjugate_checked: bool,
    pub max_deviation: f64,
    pub messages: Vec<String>,
}

impl ClosureReport {
    pub fn ok(&self) -> bool {
        self.structural_ok && (!self.conjugate_checked || self.max_deviation <= 1e-12)
    }
}

/// Check rule symmetry invariants, and when a ground-truth system is given,
/// spot-check `H(-i w) = conj(H(i w))` on up to 10 nodes per side.
pub fn validate_conjugate_closure(
    set: &FrequencySampleSet,
    sys: Option<&SecondOrderSystem>,
) -> ClosureReport {
    let mut report = ClosureReport {
        structural_ok: true,
        ..Default::default()
    };
    for rule in [&set.p_rule, &set.q_rule] {
        if let Err(e) = QuadratureRule::new(
            rule.side,
            rule.positive_nodes.clone(),
            rule.weights.clone(),
        ) {
            report.structural_ok = false;
            report.messages.push(format!("invalid rule: {e}"));
        }
    }
    if !check_disjoint(&set.p_rule, &set.q_rule).is_empty() {
        report.structural_ok = false;
        report.messages.push("P/Q nodes not disjoint".into());
    }
    if let Some(sys) = sys {
        report.conjugate_checked = true;
        let sides = [
            (&set.p_rule.positive_nodes, &set.p_values),
            (&set.q_rule.positive_nodes, &set.q_values),
        ];
        for (nodes, values) in sides {
            let stride = (nodes.len() / 10).max(1);
            for (i, (&x, &h)) in nodes.iter().zip(values.iter()).enumerate().step_by(stride) {
                if let Ok(h_neg) = sys.eval_transfer(Complex64::new(0.0, -x)) {
                    let dev = (h_neg - h.conj()).norm() / h.norm().max(1.0);
                    if dev > report.max_deviation {
                        report.max_deviation = dev;
                        if dev > 1e-12 {
                            report
                                .messages
                                .push(format!("closure deviation {dev:.3e} at node index {i}"));
                        }
                    }
                }
            }
        }
    }
    report
}

pub fn serialize_samples(set: &FrequencySampleSet) -> String {
    let mut out = String::new();
    let source = if set.provenance.is_empty() {
        "unknown".to_string()
    } else {
        set.provenance.replace(char::is_whitespace, "_")
    };
    writeln!(
        out,
        "so-samples v1 alpha={:.17e} beta={:.17e} source={source}",
        set.alpha, set.beta
    )
    .unwrap();
    for (label, rule, values) in [
        ("P", &set.p_rule, &set.p_values),
        ("Q", &set.q_rule, &set.q_values),
    ] {
        writeln!(out, "{label}:").unwrap();
        for ((&node, &weight), value) in rule
            .positive_nodes
            .iter()
            .zip(rule.weights.iter())
            .zip(values.iter())
        {
            writeln!(
                out,
                "{node:.17e} {weight:.17e} {:.17e} {:.17e}",
                value.re, value.im
            )
            .unwrap();
        }
    }
    out
}

pub fn deserialize_samples(text: &str) -> Result<FrequencySampleSet> {
    let perr = |line: usize, message: String| Error::ParseError { line: line + 1, message };
    let mut lines = text.lines().enumerate();
    let (hline, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| perr(0, "empty sample file".into()))?;
    if !header.trim().starts_with("so-samples v1 ") {
        return Err(perr(hline, "expected header `so-samples v1 ...`".into()));
    }
    let field = |key: &str| -> Result<String> {
        header
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
            .map(|s| s.to_string())
            .ok_or_else(|| perr(hline, format!("header missing field `{key}`")))
    };
    let alpha: f64 = field("alpha")?
        .parse()
        .map_err(|e| perr(hline, format!("bad alpha: {e}")))?;
    let beta: f64 = field("beta")?
        .parse()
        .map_err(|e| perr(hline, format!("bad beta: {e}")))?;
    let source = field("source").unwrap_or_default();

    let mut sections: Vec<(String, Vec<(f64, f64, Complex64)>)> = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(label) = line.strip_suffix(':') {
            sections.push((label.to_string(), Vec::new()));
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(perr(i, format!("expected 4 fields per record, got {}", fields.len())));
        }
        let mut vals = [0.0f64; 4];
        for (slot, f) in vals.iter_mut().zip(fields.iter()) {
            *slot = f
                .parse()
                .map_err(|e| perr(i, format!("bad number `{f}`: {e}")))?;
        }
        sections
            .last_mut()
            .ok_or_else(|| perr(i, "record before any section header".into()))?
            .1
            .push((vals[0], vals[1], Complex64::new(vals[2], vals[3])));
    }
    let take = |label: &str, side: Side| -> Result<(QuadratureRule, Vec<Complex64>)> {
        let section = sections
            .iter()
            .find(|(l, _)| l == label)
            .ok_or_else(|| perr(0, format!("missing section `{label}:`")))?;
        let nodes: Vec<f64> = section.1.iter().map(|r| r.0).collect();
        let weights: Vec<f64> = section.1.iter().map(|r| r.1).collect();
        let values: Vec<Complex64> = section.1.iter().map(|r| r.2).collect();
        let rule = QuadratureRule::new(side, nodes, weights).map_err(|e| match e {
            Error::NotIncreasing { position } => Error::InvariantViolation(format!(
                "section {label}: nodes not strictly increasing at record {position}"
            )),
            other => other,
        })?;
        Ok((rule, values))
    };
    let (p_rule, p_values) = take("P", Side::P)?;
    let (q_rule, q_values) = take("Q", Side::Q)?;
    FrequencySampleSet::new(p_rule, q_rule, p_values, q_values, alpha, beta, source)
}

pub fn export_samples(set: &FrequencySampleSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_samples(set))?;
    Ok(())
}

pub fn import_samples(path: impl AsRef<Path>) -> Result<FrequencySampleSet> {
    deserialize_samples(&std::fs::read_to_string(path)?)
}
