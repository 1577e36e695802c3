//! Data-driven balanced truncation from frequency samples.
//!
//! Builds the sample-space counterparts of the balancing products by closed
//! forms, checks the defining linear equations, transforms everything to real
//! arithmetic over conjugate-pair blocks, and truncates.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gramian::truncate_svd;
use crate::linalg::{imag_residue, CMatrix, CVector};
use crate::model::{Method, Provenance, ReducedModel, SecondOrderSystem};
use crate::quadrature::QuadratureRule;
use crate::sampling::FrequencySampleSet;

/// `alpha(x) = -x^2 + i x alpha` on a signed node.
pub(crate) fn alpha_poly(x: f64, alpha: f64) -> Complex64 {
    Complex64::new(-x * x, x * alpha)
}

/// `beta(x) = i x beta + 1` on a signed node.
pub(crate) fn beta_poly(x: f64, beta: f64) -> Complex64 {
    Complex64::new(1.0, x * beta)
}

/// Sample value at a signed node: negative nodes by conjugation.
fn signed_value(values: &[Complex64], idx: usize) -> Complex64 {
    let v = values[idx / 2];
    if idx % 2 == 0 {
        v
    } else {
        v.conj()
    }
}

/// Sample-space balancing products over all `2 nu` signed nodes in
/// conjugate-pair order.
#[derive(Debug, Clone)]
pub struct LoewnerQuantities {
    pub mt: CMatrix,
    pub dt: CMatrix,
    pub kt: CMatrix,
    pub bt: CVector,
    pub ct: RowDVector<Complex64>,
    pub p_rule: QuadratureRule,
    pub q_rule: QuadratureRule,
    pub alpha: f64,
    pub beta: f64,
}

/// Real counterparts in conjugate-pair block layout.
#[derive(Debug, Clone)]
pub struct RealLoewnerQuantities {
    pub mt: DMatrix<f64>,
    pub dt: DMatrix<f64>,
    pub kt: DMatrix<f64>,
    pub bt: DVector<f64>,
    pub ct: RowDVector<f64>,
    pub p_rule: QuadratureRule,
    pub q_rule: QuadratureRule,
    pub alpha: f64,
    pub beta: f64,
}

/// Coefficients of the defining linear equations.
#[derive(Debug, Clone)]
pub struct Prop1Operands {
    /// `diag(i zeta)` over signed P nodes.
    pub lambda_p: CVector,
    /// `diag(i omega)` over signed Q nodes.
    pub lambda_q: CVector,
    /// Weight row `phi_k` over signed Q nodes.
    pub phi_q: RowDVector<f64>,
    /// Weight row `rho_j zeta_j` (signed) over P nodes.
    pub xi_p: RowDVector<f64>,
    /// Weighted sample row `rho_j zeta_j H(i zeta_j)`.
    pub h_zeta: RowDVector<Complex64>,
    /// Weighted sample row `phi_k H(i omega_k)`.
    pub h_omega: RowDVector<Complex64>,
}

pub fn prop1_operands(samples: &FrequencySampleSet) -> Prop1Operands {
    let p_nodes = samples.p_rule.interleaved_nodes();
    let q_nodes = samples.q_rule.interleaved_nodes();
    let p_w = samples.p_rule.interleaved_weights();
    let q_w = samples.q_rule.interleaved_weights();
    let lambda_p = CVector::from_iterator(
        p_nodes.len(),
        p_nodes.iter().map(|&x| Complex64::new(0.0, x)),
    );
    let lambda_q = CVector::from_iterator(
        q_nodes.len(),
        q_nodes.iter().map(|&x| Complex64::new(0.0, x)),
    );
    let phi_q = RowDVector::from_iterator(q_w.len(), q_w.iter().cloned());
    let xi_p = RowDVector::from_iterator(
        p_nodes.len(),
        p_nodes.iter().zip(p_w.iter()).map(|(&x, &w)| w * x),
    );
    let h_zeta = RowDVector::from_iterator(
        p_nodes.len(),
        (0..p_nodes.len()).map(|j| signed_value(&samples.p_values, j) * xi_p[j]),
    );
    let h_omega = RowDVector::from_iterator(
        q_nodes.len(),
        (0..q_nodes.len()).map(|k| signed_value(&samples.q_values, k) * phi_q[k]),
    );
    Prop1Operands {
        lambda_p,
        lambda_q,
        phi_q,
        xi_p,
        h_zeta,
        h_omega,
    }
}

/// Weighted sample vectors over all signed nodes: `B~_k = phi_k H(i omega_k)`,
/// `C~_j = rho_j zeta_j H(i zeta_j)`.
pub fn build_bc(samples: &FrequencySampleSet) -> (CVector, RowDVector<Complex64>) {
    let ops = prop1_operands(samples);
    (ops.h_omega.transpose(), ops.h_zeta)
}

fn degenerate_check(
    d1: Complex64,
    d2: Complex64,
    s1: f64,
    s2: f64,
    k: usize,
    j: usize,
) -> Result<()> {
    if d1.norm() <= 1e-12 * s1.max(1.0) || d2.norm() <= 1e-12 * s2.max(1.0) {
        return Err(Error::DegenerateDenominator { k, j });
    }
    Ok(())
}

/// One closed-form entry pair `(M~_{k,j}, K~_{k,j})` at signed nodes
/// `omega`, `zeta` with weights `phi`, `rho`.
fn mk_entry(
    omega: f64,
    zeta: f64,
    phi: f64,
    rho: f64,
    h_omega: Complex64,
    h_zeta: Complex64,
    alpha: f64,
    beta: f64,
    k: usize,
    j: usize,
) -> Result<(Complex64, Complex64)> {
    let aw = alpha_poly(omega, alpha);
    let az = alpha_poly(zeta, alpha);
    let bw = beta_poly(omega, beta);
    let bz = beta_poly(zeta, beta);
    let d1 = aw - az;
    let d2 = aw * bz - az * bw;
    degenerate_check(
        d1,
        d2,
        aw.norm() + az.norm(),
        (aw * bz).norm() + (az * bw).norm(),
        k,
        j,
    )?;
    let w = Complex64::new(phi * rho * zeta, 0.0);
    let num = aw * h_omega - az * h_zeta;
    let k_entry = w * num / d2;
    let m_entry = w * (h_zeta - h_omega) / d1 + w * (bz - bw) * num / (d1 * d2);
    Ok((m_entry, k_entry))
}

/// Closed-form assembly of the complex quantities over all signed node pairs.
pub fn build_mdk_closed_form(samples: &FrequencySampleSet) -> Result<LoewnerQuantities> {
    let p_nodes = samples.p_rule.interleaved_nodes();
    let q_nodes = samples.q_rule.interleaved_nodes();
    let p_w = samples.p_rule.interleaved_weights();
    let q_w = samples.q_rule.interleaved_weights();
    let (nq, np) = (q_nodes.len(), p_nodes.len());
    let mut mt = CMatrix::zeros(nq, np);
    let mut kt = CMatrix::zeros(nq, np);
    for k in 0..nq {
        let h_w = signed_value(&samples.q_values, k);
        for j in 0..np {
            let h_z = signed_value(&samples.p_values, j);
            let (m, kk) = mk_entry(
                q_nodes[k],
                p_nodes[j],
                q_w[k],
                p_w[j],
                h_w,
                h_z,
                samples.alpha,
                samples.beta,
                k,
                j,
            )?;
            mt[(k, j)] = m;
            kt[(k, j)] = kk;
        }
    }
    let dt = &mt * Complex64::new(samples.alpha, 0.0) + &kt * Complex64::new(samples.beta, 0.0);
    let (bt, ct) = build_bc(samples);
    Ok(LoewnerQuantities {
        mt,
        dt,
        kt,
        bt,
        ct,
        p_rule: samples.p_rule.clone(),
        q_rule: samples.q_rule.clone(),
        alpha: samples.alpha,
        beta: samples.beta,
    })
}

/// Frobenius residuals of the two defining linear equations, relative to
/// `max(||K~||_F, 1)`.
pub fn prop1_residual(q: &LoewnerQuantities, ops: &Prop1Operands) -> (f64, f64) {
    let lam_q = CMatrix::from_diagonal(&ops.lambda_q);
    let lam_p = CMatrix::from_diagonal(&ops.lambda_p);
    let phi: CVector = CVector::from_iterator(
        ops.phi_q.len(),
        ops.phi_q.iter().map(|&w| Complex64::new(w, 0.0)),
    );
    let rhs1 = &phi * &ops.h_zeta;
    let rhs2 = ops.h_omega.transpose()
        * RowDVector::from_iterator(
            ops.xi_p.len(),
            ops.xi_p.iter().map(|&w| Complex64::new(w, 0.0)),
        );
    let scale = q.kt.norm().max(1.0);
    let res1 = (&lam_q * &lam_q * &q.mt + &lam_q * &q.dt + &q.kt - rhs1).norm() / scale;
    let res2 = (&q.mt * &lam_p * &lam_p + &q.dt * &lam_p + &q.kt - rhs2).norm() / scale;
    (res1, res2)
}

/// `F1 = (1/sqrt(2)) [[1, -1], [i, i]]`.
pub(crate) fn f1() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(s, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(0.0, s),
            Complex64::new(0.0, s),
        ],
    )
}

/// `F2 = (1/sqrt(2)) [[1, 1], [i, -i]]`.
pub(crate) fn f2() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.0, s),
            Complex64::new(0.0, -s),
        ],
    )
}

/// Apply the pair transform `(I x F2) A (I x F1^H)` and strip the imaginary
/// residue, which must vanish by conjugate symmetry.
pub(crate) fn realify_block_matrix(a: &CMatrix) -> Result<DMatrix<f64>> {
    let f1h = f1().adjoint();
    let f2m = f2();
    let (nq, np) = a.shape();
    assert!(nq % 2 == 0 && np % 2 == 0);
    let mut out = CMatrix::zeros(nq, np);
    for bk in 0..nq / 2 {
        for bj in 0..np / 2 {
            let block = a.view((2 * bk, 2 * bj), (2, 2)).clone_owned();
            out.view_mut((2 * bk, 2 * bj), (2, 2))
                .copy_from(&(&f2m * block * &f1h));
        }
    }
    let residue = imag_residue(&out);
    if residue > 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "pair transform left imaginary residue {residue:.3e}"
        )));
    }
    Ok(out.map(|z| z.re))
}

/// Real quantities over conjugate-pair blocks: the closed forms evaluated on
/// each signed pair, transformed blockwise, plus the direct real vectors
/// `B~R_k = sqrt(2) phi_k [Re H; -Im H]`, `C~R_j = sqrt(2) rho_j zeta_j [Re H, Im H]`.
pub fn build_real_quantities(samples: &FrequencySampleSet) -> Result<RealLoewnerQuantities> {
    let q = build_mdk_closed_form(samples)?;
    let mt = realify_block_matrix(&q.mt)?;
    let kt = realify_block_matrix(&q.kt)?;
    let dt = &mt * samples.alpha + &kt * samples.beta;
    let (bt, ct) = build_bc_real(samples);
    Ok(RealLoewnerQuantities {
        mt,
        dt,
        kt,
        bt,
        ct,
        p_rule: samples.p_rule.clone(),
        q_rule: samples.q_rule.clone(),
        alpha: samples.alpha,
        beta: samples.beta,
    })
}

/// Real weighted sample vectors in pair-block layout:
/// `B~R_k = sqrt(2) phi_k [Re H(i omega_k); -Im H(i omega_k)]`,
/// `C~R_j = sqrt(2) rho_j zeta_j [Re H(i zeta_j), Im H(i zeta_j)]`.
pub fn build_bc_real(samples: &FrequencySampleSet) -> (DVector<f64>, RowDVector<f64>) {
    let sqrt2 = std::f64::consts::SQRT_2;
    let nu_q = samples.q_rule.nu();
    let nu_p = samples.p_rule.nu();
    let mut bt = DVector::zeros(2 * nu_q);
    for k in 0..nu_q {
        let phi = samples.q_rule.weights[k];
        let h = samples.q_values[k];
        bt[2 * k] = sqrt2 * phi * h.re;
        bt[2 * k + 1] = -sqrt2 * phi * h.im;
    }
    let mut ct = RowDVector::zeros(2 * nu_p);
    for j in 0..nu_p {
        let rz = samples.p_rule.weights[j] * samples.p_rule.positive_nodes[j];
        let h = samples.p_values[j];
        ct[2 * j] = sqrt2 * rz * h.re;
        ct[2 * j + 1] = sqrt2 * rz * h.im;
    }
    (bt, ct)
}

/// Smallest rank whose tail satisfies `sigma_{r+1} / sigma_1 < 1e-8`.
pub(crate) fn default_rank(sv: &[f64]) -> usize {
    let smax = sv.first().cloned().unwrap_or(0.0);
    if smax <= 0.0 {
        return 1;
    }
    for r in 1..sv.len() {
        if sv[r] / smax < 1e-8 {
            return r;
        }
    }
    sv.len()
}

pub(crate) fn reduce_from_real(
    real: &RealLoewnerQuantities,
    r: Option<usize>,
    method: Method,
    krylov_m: Option<usize>,
    residual: Option<f64>,
) -> Result<ReducedModel> {
    let svd = real.mt.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let r = r.unwrap_or_else(|| default_rank(&sv));
    let t = truncate_svd(&real.mt, r)?;
    let project = |a: &DMatrix<f64>| -> DMatrix<f64> {
        &t.s1_inv_sqrt * t.z1.transpose() * a * &t.y1 * &t.s1_inv_sqrt
    };
    let m_r = DMatrix::identity(r, r);
    let k_r = project(&real.kt);
    let mut d_r = project(&real.dt);
    let mut warnings = t.warnings.clone();
    let damped = &m_r * real.alpha + &k_r * real.beta;
    let dev = (&d_r - &damped).norm();
    let damping = if dev <= 1e-10 * (d_r.norm() + 1.0) {
        d_r = damped;
        Some((real.alpha, real.beta))
    } else {
        warnings.push(format!(
            "reduced damping deviates from the proportional identity by {dev:.3e}"
        ));
        None
    };
    let b_r = &t.s1_inv_sqrt * t.z1.transpose() * &real.bt;
    let c_r = &real.ct * &t.y1 * &t.s1_inv_sqrt;
    let system = SecondOrderSystem::new(m_r, d_r, k_r, b_r, c_r, damping)?;
    Ok(ReducedModel {
        system,
        provenance: Provenance {
            method,
            rank: r,
            singular_values: t.singular_values,
            nu_p: Some(real.p_rule.nu()),
            nu_q: Some(real.q_rule.nu()),
            krylov_m,
            residual,
        },
        warnings,
    })
}

/// Data-driven balanced truncation: real quantities, SVD of the
/// mass-product matrix, rank-`r` projection. With `r = None` the rank is the
/// smallest one whose relative singular-value tail drops below `1e-8`.
pub fn databt_reduce(samples: &FrequencySampleSet, r: Option<usize>) -> Result<ReducedModel> {
    let real = build_real_quantities(samples)?;
    reduce_from_real(&real, r, Method::DataBtSopd, None, None)
}
