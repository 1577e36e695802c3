//! Velocity Gramian factors (exact Lyapunov and frequency quadrature) and
//! the intrusive velocity balanced truncation baseline.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, psd_factor, CMatrix};
use crate::model::{Method, Provenance, ReducedModel, SecondOrderSystem};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Exact,
    Quadrature,
}

/// Square-root factors of the velocity Gramians: `P_v ~= U U^H`,
/// `Q_v ~= L L^H`.
#[derive(Debug, Clone)]
pub struct GramianFactors {
    pub u: CMatrix,
    pub l: CMatrix,
    pub kind: FactorKind,
}

impl GramianFactors {
    /// Real factors spanning the same Gramians.
    ///
    /// Exact factors are real already. Quadrature factors come in conjugate
    /// column pairs; the fixed 2x2 unitary pair transform turns each pair
    /// `(v, +-conj(v))` into `(sqrt(2) Re v, sqrt(2) Im v)` without changing
    /// the Gram product.
    pub fn realified(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self.kind {
            FactorKind::Exact => (self.u.map(|z| z.re), self.l.map(|z| z.re)),
            FactorKind::Quadrature => (realify_pairs(&self.u), realify_pairs(&self.l)),
        }
    }
}

fn realify_pairs(m: &CMatrix) -> DMatrix<f64> {
    let (n, cols) = m.shape();
    assert!(cols % 2 == 0, "conjugate-pair factor must have even width");
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = DMatrix::zeros(n, cols);
    for pair in 0..cols / 2 {
        for i in 0..n {
            let v = m[(i, 2 * pair)];
            out[(i, 2 * pair)] = sqrt2 * v.re;
            out[(i, 2 * pair + 1)] = sqrt2 * v.im;
        }
    }
    out
}

/// Exact velocity Gramian factors from the Lyapunov equations of the
/// first-order realization.
pub fn lyapunov_velocity_gramians(sys: &SecondOrderSystem) -> Result<GramianFactors> {
    let n = sys.n;
    let fo = sys.to_first_order();
    let e_lu = fo.e.clone().lu();
    let a_std = e_lu.solve(&fo.a).ok_or_else(|| {
        Error::InvariantViolation("first-order E is singular".into())
    })?;
    let eigs = a_std.complex_eigenvalues();
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if let Some(bad) = eigs.iter().find(|z| z.re >= -1e-9 * (1.0 + scale)) {
        return Err(Error::UnstableSystem { eigenvalue: *bad });
    }
    let b_std = e_lu
        .solve(&fo.b)
        .ok_or_else(|| Error::InvariantViolation("first-order E is singular".into()))?;

    // A P + P A^T + B B^T = 0
    let p = linalg::lyapunov_dense(&a_std, &(&b_std * b_std.transpose()))?;
    // A^T Qh + Qh A + C^T C = 0 with Qh = E^T Q E
    let qh = linalg::lyapunov_dense(&a_std.transpose(), &(fo.c.transpose() * &fo.c))?;
    let e_inv = fo
        .e
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvariantViolation("first-order E is singular".into()))?;
    let q = e_inv.transpose() * qh * &e_inv;

    let p_v = p.view((n, n), (n, n)).clone_owned();
    let q_v = q.view((n, n), (n, n)).clone_owned();
    let mut factors = Vec::with_capacity(2);
    for g in [&p_v, &q_v] {
        let (f, clipped) = psd_factor(g, 1e-12);
        let limit = 1e-6 * g.trace().abs().max(f64::MIN_POSITIVE);
        if clipped > limit {
            return Err(Error::IndefiniteGramian { clipped, limit });
        }
        factors.push(f);
    }
    let l = factors.pop().unwrap();
    let u = factors.pop().unwrap();
    Ok(GramianFactors {
        u: linalg::to_complex(&u),
        l: linalg::to_complex(&l),
        kind: FactorKind::Exact,
    })
}

/// Quadrature factors over all `2 nu` symmetric nodes:
/// `U` columns `rho_j zeta_j G(i zeta_j) B`, `L^H` rows `phi_k C G(i omega_k)`.
pub fn quad_gramian_factors(
    sys: &SecondOrderSystem,
    p_rule: &QuadratureRule,
    q_rule: &QuadratureRule,
) -> Result<GramianFactors> {
    let n = sys.n;
    let mut u = CMatrix::zeros(n, p_rule.len());
    for (j, (&zeta, &rho)) in p_rule
        .positive_nodes
        .iter()
        .zip(p_rule.weights.iter())
        .enumerate()
    {
        let s = Complex64::new(0.0, zeta);
        let b = sys.input.map(|x| Complex64::new(x, 0.0));
        let x = linalg::solve_complex(&sys.pencil(s), &b)?;
        let col_pos = &x * Complex64::new(rho * zeta, 0.0);
        // node -zeta: rho (-zeta) G(-i zeta) B = -rho zeta conj(G(i zeta) B)
        for i in 0..n {
            u[(i, 2 * j)] = col_pos[i];
            u[(i, 2 * j + 1)] = -col_pos[i].conj();
        }
    }
    let mut l = CMatrix::zeros(n, q_rule.len());
    for (k, (&omega, &phi)) in q_rule
        .positive_nodes
        .iter()
        .zip(q_rule.weights.iter())
        .enumerate()
    {
        let s = Complex64::new(0.0, omega);
        // row phi C G(i omega): solve the transposed pencil against C^T
        let ct = sys.output.transpose().map(|x| Complex64::new(x, 0.0));
        let z = linalg::solve_complex(&sys.pencil(s).transpose(), &ct)?;
        // stored as the corresponding column of L = (L^H)^H
        for i in 0..n {
            let row_entry = z[i] * phi; // (C G(i omega))_i * phi
            l[(i, 2 * k)] = row_entry.conj();
            l[(i, 2 * k + 1)] = row_entry;
        }
    }
    Ok(GramianFactors {
        u,
        l,
        kind: FactorKind::Quadrature,
    })
}

pub(crate) struct TruncatedSvd {
    pub z1: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub s1_inv_sqrt: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Rank-`r` partition of an SVD with the degenerate-plateau warning and the
/// `sigma_r > 1e-14 sigma_1` rank guard.
pub(crate) fn truncate_svd(m: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = sv.first().cloned().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > 1e-14 * smax).count();
    if r == 0 || r > rank {
        return Err(Error::RankDeficient { r, rank });
    }
    let mut warnings = Vec::new();
    if r < sv.len() && (sv[r - 1] - sv[r]).abs() <= 1e-12 * smax {
        warnings.push(format!(
            "degenerate truncation: sigma_{r} and sigma_{} agree to 1e-12 relative",
            r + 1
        ));
    }
    let z1 = u.columns(0, r).clone_owned();
    let y1 = vt.rows(0, r).transpose();
    let s1_inv_sqrt = DMatrix::from_diagonal(
        &nalgebra::DVector::from_iterator(r, sv.iter().take(r).map(|s| 1.0 / s.sqrt())),
    );
    Ok(TruncatedSvd {
        z1,
        y1,
        s1_inv_sqrt,
        singular_values: sv,
        warnings,
    })
}

/// Velocity balanced truncation from Gramian square-root factors.
pub fn bt_reduce(sys: &SecondOrderSystem, factors: &GramianFactors, r: usize) -> Result<ReducedModel> {
    let (u, l) = factors.realified();
    let core = l.transpose() * &sys.mass * &u;
    let t = truncate_svd(&core, r)?;
    let w_r = &l * &t.z1 * &t.s1_inv_sqrt;
    let v_r = &u * &t.y1 * &t.s1_inv_sqrt;
    let m_r = w_r.transpose() * &sys.mass * &v_r;
    let d_r = w_r.transpose() * &sys.damping_mat * &v_r;
    let k_r = w_r.transpose() * &sys.stiffness * &v_r;
    let b_r = w_r.transpose() * &sys.input;
    let c_r = &sys.output * &v_r;
    let damping = sys.damping.filter(|&(alpha, beta)| {
        let dev = (&d_r - (&m_r * alpha + &k_r * beta)).norm();
        dev <= crate::model::DAMPING_TOL * (d_r.norm() + 1.0)
    });
    let system = SecondOrderSystem::new(m_r, d_r, k_r, b_r, c_r, damping)?;
    Ok(ReducedModel {
        system,
        provenance: Provenance {
            method: Method::BtSopd,
            rank: r,
            singular_values: t.singular_values,
            nu_p: None,
            nu_q: None,
            krylov_m: None,
            residual: None,
        },
        warnings: t.warnings,
    })
}

/// Remark-style singular-value perturbation diagnostic.
#[derive(Debug, Clone)]
pub struct SvBoundReport {
    pub premise_met: bool,
    pub premise_gap_p: f64,
    pub premise_gap_q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub compared: usize,
    pub exact_remainder: usize,
}

/// Compare exact and quadrature velocity singular values against the bound
/// `sqrt(sum (sigma_k - sigma~_k)^2) <= 2 delta ||M||_2 ||L||_2 ||U||_2`,
/// whose premise requires both Gramian errors below
/// `delta/(1+delta) * sigma_min`.
pub fn sv_perturbation_bound(
    mass: &DMatrix<f64>,
    exact: &GramianFactors,
    quad: &GramianFactors,
    delta: f64,
) -> SvBoundReport {
    let (u, l) = exact.realified();
    let (ut, lt) = quad.realified();
    let sigma = (l.transpose() * mass * &u).singular_values();
    let sigma_t = (lt.transpose() * mass * &ut).singular_values();
    let compared = sigma.len().min(sigma_t.len());
    let lhs = (0..compared)
        .map(|k| (sigma[k] - sigma_t[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    let spec_norm = |m: &DMatrix<f64>| m.singular_values().max();
    let rhs = 2.0 * delta * spec_norm(mass) * spec_norm(&l) * spec_norm(&u);

    let premise = |f: &DMatrix<f64>, ft: &DMatrix<f64>| -> f64 {
        let g = f * f.transpose();
        let gt = ft * ft.transpose();
        let err = (&g - &gt).norm();
        let sv = g.singular_values();
        let sigma_min = sv[sv.len() - 1];
        // gap > 0 means the premise holds with margin
        delta / (1.0 + delta) * sigma_min - err
    };
    let premise_gap_p = premise(&u, &ut);
    let premise_gap_q = premise(&l, &lt);
    SvBoundReport {
        premise_met: premise_gap_p >= 0.0 && premise_gap_q >= 0.0,
        premise_gap_p,
        premise_gap_q,
        lhs,
        rhs,
        compared,
        exact_remainder: sigma.len().saturating_sub(compared),
    }
}
