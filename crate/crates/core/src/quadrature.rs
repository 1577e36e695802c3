//! Symmetric frequency quadrature rules for the velocity-Gramian
//! approximations.
//!
//! Weights follow the square-root convention: a stored weight `w` satisfies
//! `w^2 = t / (2 pi)` where `t` is the composite trapezoid weight of the node
//! on the positive half grid. Mirrored negative nodes reuse the weight of
//! their positive partner, so the full symmetric sum approximates the
//! two-sided integral with its `1/(2 pi)` factor already absorbed.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Controllability side, nodes `zeta_j` with weights `rho_j`.
    P,
    /// Observability side, nodes `omega_k` with weights `phi_k`.
    Q,
}

/// A symmetric rule stored by its positive half: `nu` strictly increasing
/// positive nodes and their (square-root convention) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub side: Side,
    pub positive_nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(side: Side, positive_nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positive_nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "rule has {} nodes but {} weights",
                positive_nodes.len(),
                weights.len()
            )));
        }
        if positive_nodes.first().map_or(true, |&x| x <= 0.0) {
            return Err(Error::InvariantViolation("nodes must be positive".into()));
        }
        for i in 1..positive_nodes.len() {
            if positive_nodes[i] <= positive_nodes[i - 1] {
                return Err(Error::NotIncreasing { position: i });
            }
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvariantViolation("weights must be positive".into()));
        }
        Ok(QuadratureRule {
            side,
            positive_nodes,
            weights,
        })
    }

    /// Number of positive nodes (half the full symmetric count).
    pub fn nu(&self) -> usize {
        self.positive_nodes.len()
    }

    /// Full node count after symmetrization.
    pub fn len(&self) -> usize {
        2 * self.nu()
    }

    pub fn is_empty(&self) -> bool {
        self.positive_nodes.is_empty()
    }

    /// Signed nodes in conjugate-pair order `(x_1, -x_1, x_2, -x_2, ...)`.
    pub fn interleaved_nodes(&self) -> Vec<f64> {
        self.positive_nodes
            .iter()
            .flat_map(|&x| [x, -x])
            .collect()
    }

    /// Weights matching [`interleaved_nodes`](Self::interleaved_nodes).
    pub fn interleaved_weights(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|&w| [w, w]).collect()
    }
}

/// `nu` geometrically spaced nodes from `lo` to `hi` inclusive.
pub fn logspace_nodes(lo: f64, hi: f64, nu: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || nu < 2 {
        return Err(Error::BadInterval { lo, hi, nu });
    }
    let llo = lo.ln();
    let lhi = hi.ln();
    let mut nodes: Vec<f64> = (0..nu)
        .map(|i| (llo + (lhi - llo) * i as f64 / (nu - 1) as f64).exp())
        .collect();
    // pin the endpoints exactly
    nodes[0] = lo;
    nodes[nu - 1] = hi;
    Ok(nodes)
}

/// Square-root convention trapezoid weights on a strictly increasing grid.
pub fn trapezoid_weights(nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() < 2 {
        return Err(Error::BadInterval {
            lo: nodes.first().copied().unwrap_or(0.0),
            hi: nodes.last().copied().unwrap_or(0.0),
            nu: nodes.len(),
        });
    }
    for i in 1..nodes.len() {
        if nodes[i] <= nodes[i - 1] {
            return Err(Error::NotIncreasing { position: i });
        }
    }
    let n = nodes.len();
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i == 0 {
            (nodes[1] - nodes[0]) / 2.0
        } else if i == n - 1 {
            (nodes[n - 1] - nodes[n - 2]) / 2.0
        } else {
            (nodes[i + 1] - nodes[i - 1]) / 2.0
        };
        w.push((t / (2.0 * std::f64::consts::PI)).sqrt());
    }
    Ok(w)
}

/// Log-spaced symmetric rule on `[lo, hi]` with trapezoid weights.
pub fn make_symmetric_rule(side: Side, lo: f64, hi: f64, nu: usize) -> Result<QuadratureRule> {
    let nodes = logspace_nodes(lo, hi, nu)?;
    let weights = trapezoid_weights(&nodes)?;
    QuadratureRule::new(side, nodes, weights)
}

/// Default disjoint P/Q pair on `[lo, hi]`: the Q grid sits on the interval,
/// the P grid is offset by the geometric half step so the two never collide.
pub fn make_offset_pair(lo: f64, hi: f64, nu: usize) -> Result<(QuadratureRule, QuadratureRule)> {
    let q_rule = make_symmetric_rule(Side::Q, lo, hi, nu)?;
    let half_step = ((hi / lo).powf(1.0 / (nu - 1) as f64)).sqrt();
    let p_rule = make_symmetric_rule(Side::P, lo * half_step, hi * half_step, nu)?;
    Ok((p_rule, q_rule))
}

/// Every `(k, j)` pair of numerically coincident positive nodes.
pub fn check_disjoint(p_rule: &QuadratureRule, q_rule: &QuadratureRule) -> Vec<(usize, usize)> {
    let mut violations = Vec::new();
    for (k, &omega) in q_rule.positive_nodes.iter().enumerate() {
        for (j, &zeta) in p_rule.positive_nodes.iter().enumerate() {
            if (omega - zeta).abs() <= 1e-12 * omega.abs().max(zeta.abs()) {
                violations.push((k, j));
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn logspace_geometric() {
        let nodes = logspace_nodes(1.0, 100.0, 3).unwrap();
        assert_relative_eq!(nodes[0], 1.0);
        assert_relative_eq!(nodes[1], 10.0, epsilon = 1e-12);
        assert_relative_eq!(nodes[2], 100.0);
        assert_eq!(logspace_nodes(1e-2, 1e4, 50).unwrap().len(), 50);
        assert!(matches!(
            logspace_nodes(1.0, 1.0, 3),
            Err(Error::BadInterval { .. })
        ));
    }

    #[test]
    fn trapezoid_convention() {
        let w = trapezoid_weights(&[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(w[0], (0.5 / (2.0 * PI)).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[1], (1.0 / (2.0 * PI)).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[2], (0.5 / (2.0 * PI)).sqrt(), epsilon = 1e-15);

        let w2 = trapezoid_weights(&[1.0, 2.0]).unwrap();
        assert_relative_eq!(w2[0], (0.5 / (2.0 * PI)).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w2[1], (0.5 / (2.0 * PI)).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn trapezoid_reproduces_interval_length() {
        // oracle: for f = 1 the raw trapezoid weights must sum to hi - lo
        let nodes = logspace_nodes(0.5, 73.0, 40).unwrap();
        let w = trapezoid_weights(&nodes).unwrap();
        let total: f64 = w.iter().map(|&x| x * x * 2.0 * PI).sum();
        assert_relative_eq!(total, 72.5, epsilon = 1e-14 * 72.5);
    }

    #[test]
    fn symmetric_rule_interleaving() {
        let rule = make_symmetric_rule(Side::P, 1.0, 10.0, 2).unwrap();
        assert_eq!(rule.interleaved_nodes(), vec![1.0, -1.0, 10.0, -10.0]);
        assert_eq!(rule.len(), 4);
        let iw = rule.interleaved_weights();
        assert_eq!(iw[0], iw[1]);
        assert_eq!(iw[2], iw[3]);

        let big = make_symmetric_rule(Side::P, 1e-1, 1e4, 200).unwrap();
        assert_eq!(big.nu(), 200);
        assert!(big.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn disjointness_report() {
        let p = QuadratureRule::new(Side::P, vec![1.0, 10.0], vec![1.0, 1.0]).unwrap();
        let q = QuadratureRule::new(Side::Q, vec![2.0, 20.0], vec![1.0, 1.0]).unwrap();
        assert!(check_disjoint(&p, &q).is_empty());

        let q_bad = QuadratureRule::new(Side::Q, vec![2.0, 10.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(check_disjoint(&p, &q_bad), vec![(1, 1)]);
    }

    #[test]
    fn offset_pair_is_disjoint() {
        let (p, q) = make_offset_pair(1e-2, 1e4, 50).unwrap();
        assert!(check_disjoint(&p, &q).is_empty());
        assert_eq!(p.nu(), 50);
        assert_eq!(q.nu(), 50);
    }

    #[test]
    fn canonical_form_under_reversal() {
        let rule = make_symmetric_rule(Side::Q, 0.3, 900.0, 17).unwrap();
        let mut pairs: Vec<(f64, f64)> = rule
            .positive_nodes
            .iter()
            .cloned()
            .zip(rule.weights.iter().cloned())
            .rev()
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let rebuilt = QuadratureRule::new(
            Side::Q,
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
        .unwrap();
        assert_eq!(rule, rebuilt);
    }
}
