//! Sylvester-equation route to the real sample-space quantities.
//!
//! The real mass and stiffness products satisfy Sylvester equations with
//! block-diagonal coefficients (2x2 blocks) and rank-2 right-hand sides. This
//! module assembles those equations, solves them densely as an oracle, and
//! solves them cheaply by extended block Krylov projection.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::databt::{alpha_poly, beta_poly, build_bc_real, default_rank};
use crate::error::{Error, Result};
use crate::gramian::truncate_svd;
use crate::linalg;
use crate::model::{Method, Provenance, ReducedModel, SecondOrderSystem};
use crate::sampling::FrequencySampleSet;

/// Block-diagonal real matrix with 2x2 blocks of the rotation-scaling form
/// `a I + b J`, `J = [[0, 1], [-1, 0]]`, stored as the complex number
/// `a + i b`. The blocks commute and multiply like complex numbers.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    pub blocks: Vec<Complex64>,
}

impl BlockDiag {
    pub fn dim(&self) -> usize {
        2 * self.blocks.len()
    }

    /// Transposed matrix: `(a I + b J)^T = a I - b J`.
    pub fn transpose(&self) -> BlockDiag {
        BlockDiag {
            blocks: self.blocks.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn inverse(&self) -> Result<BlockDiag> {
        let scale = self.blocks.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, z) in self.blocks.iter().enumerate() {
            if z.norm() <= 1e-14 * scale.max(1.0) {
                return Err(Error::SingularBlock { index: i });
            }
            blocks.push(z.inv());
        }
        Ok(BlockDiag { blocks })
    }

    /// Left action on a dense matrix.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.dim());
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, z) in self.blocks.iter().enumerate() {
            let (a, b) = (z.re, z.im);
            for c in 0..m.ncols() {
                let x1 = m[(2 * i, c)];
                let x2 = m[(2 * i + 1, c)];
                out[(2 * i, c)] = a * x1 + b * x2;
                out[(2 * i + 1, c)] = -b * x1 + a * x2;
            }
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, z) in self.blocks.iter().enumerate() {
            m[(2 * i, 2 * i)] = z.re;
            m[(2 * i, 2 * i + 1)] = z.im;
            m[(2 * i + 1, 2 * i)] = -z.im;
            m[(2 * i + 1, 2 * i + 1)] = z.re;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SylvesterTarget {
    M,
    K,
}

/// `Z X - X Y = E F^T` with block-diagonal `Z`, `Y` and rank-2 factors.
#[derive(Debug, Clone)]
pub struct SylvesterProblem {
    pub z: BlockDiag,
    pub y: BlockDiag,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub target: SylvesterTarget,
}

/// Assemble the Sylvester equation whose solution is the real mass product
/// (target `M`) or stiffness product (target `K`).
pub fn assemble_sylvester(
    samples: &FrequencySampleSet,
    target: SylvesterTarget,
) -> Result<SylvesterProblem> {
    let (alpha, beta) = (samples.alpha, samples.beta);
    let nu_q = samples.q_rule.nu();
    let nu_p = samples.p_rule.nu();

    // per-node polynomial blocks: a(x) = -x^2 + i x alpha, b(x) = 1 + i x beta
    let a_q: Vec<Complex64> = samples
        .q_rule
        .positive_nodes
        .iter()
        .map(|&w| alpha_poly(w, alpha))
        .collect();
    let b_q: Vec<Complex64> = samples
        .q_rule
        .positive_nodes
        .iter()
        .map(|&w| beta_poly(w, beta))
        .collect();
    let a_p: Vec<Complex64> = samples
        .p_rule
        .positive_nodes
        .iter()
        .map(|&z| alpha_poly(z, alpha))
        .collect();
    let b_p: Vec<Complex64> = samples
        .p_rule
        .positive_nodes
        .iter()
        .map(|&z| beta_poly(z, beta))
        .collect();

    // left divisor on the Q side and right divisor on the P side
    let (div_q, div_p) = match target {
        SylvesterTarget::M => (BlockDiag { blocks: b_q.clone() }, BlockDiag { blocks: b_p.clone() }),
        SylvesterTarget::K => (BlockDiag { blocks: a_q.clone() }, BlockDiag { blocks: a_p.clone() }),
    };
    let div_q_inv = div_q.inverse()?;
    let div_p_inv = div_p.inverse()?;
    let z = BlockDiag {
        blocks: (0..nu_q)
            .map(|k| match target {
                SylvesterTarget::M => a_q[k] * div_q_inv.blocks[k],
                SylvesterTarget::K => b_q[k] * div_q_inv.blocks[k],
            })
            .collect(),
    };
    let y = BlockDiag {
        blocks: (0..nu_p)
            .map(|j| match target {
                SylvesterTarget::M => a_p[j] * div_p_inv.blocks[j],
                SylvesterTarget::K => b_p[j] * div_p_inv.blocks[j],
            })
            .collect(),
    };

    // E = [div_q^{-1} Delta_l e_omega | Delta_l l_omega]
    let mut e = DMatrix::zeros(2 * nu_q, 2);
    for k in 0..nu_q {
        let two_phi = 2.0 * samples.q_rule.weights[k];
        let inv = div_q_inv.blocks[k];
        // block^{-1} acting on [1; 0] is [Re inv; -Im inv] scaled by 2 phi
        e[(2 * k, 0)] = two_phi * inv.re;
        e[(2 * k + 1, 0)] = -two_phi * inv.im;
        let h = samples.q_values[k];
        e[(2 * k, 1)] = two_phi * h.re;
        e[(2 * k + 1, 1)] = -two_phi * h.im;
    }
    // F = [Delta_r l_zeta | -div_p^{-T} Delta_r e_zeta]
    let mut f = DMatrix::zeros(2 * nu_p, 2);
    for j in 0..nu_p {
        let rz = samples.p_rule.weights[j] * samples.p_rule.positive_nodes[j];
        let h = samples.p_values[j];
        f[(2 * j, 0)] = rz * h.re;
        f[(2 * j + 1, 0)] = rz * h.im;
        // (a I + b J)^{-T} [1; 0] = [Re inv; Im inv]
        let inv = div_p_inv.blocks[j];
        f[(2 * j, 1)] = -rz * inv.re;
        f[(2 * j + 1, 1)] = -rz * inv.im;
    }
    Ok(SylvesterProblem { z, y, e, f, target })
}

/// Direct dense solve of the assembled problem (oracle path).
pub fn dense_sylvester_solve(problem: &SylvesterProblem) -> Result<DMatrix<f64>> {
    let rhs = &problem.e * problem.f.transpose();
    linalg::sylvester_dense(&problem.z.dense(), &problem.y.dense(), &rhs)
}

/// Orthonormal basis of the extended block Krylov subspace with its projected
/// coefficient matrix.
#[derive(Debug, Clone)]
pub struct ExtendedKrylovBasis {
    pub v: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub m: usize,
    pub deflations: Vec<String>,
}

/// Stepwise extended block Arnoldi state over a block-diagonal operator.
pub(crate) struct ExtendedArnoldi<'a> {
    g: &'a BlockDiag,
    g_inv: BlockDiag,
    v: DMatrix<f64>,
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
    m: usize,
    deflations: Vec<String>,
}

impl<'a> ExtendedArnoldi<'a> {
    pub fn new(g: &'a BlockDiag, j: &DMatrix<f64>) -> Result<Self> {
        if j.norm() == 0.0 {
            return Err(Error::Breakdown { dimension: 0 });
        }
        Ok(ExtendedArnoldi {
            g,
            g_inv: g.inverse()?,
            v: DMatrix::zeros(g.dim(), 0),
            forward: j.clone(),
            inverse: j.clone(),
            m: 0,
            deflations: Vec::new(),
        })
    }

    /// Orthogonalize candidate columns against the basis (twice) and among
    /// themselves; returns the surviving orthonormal columns.
    fn absorb(&mut self, cand: DMatrix<f64>, label: &str) -> DMatrix<f64> {
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for c in 0..cand.ncols() {
            let mut w = cand.column(c).clone_owned();
            let pre = w.norm().max(1e-300);
            for _ in 0..2 {
                for k in 0..self.v.ncols() {
                    let basis = self.v.column(k);
                    let proj = basis.dot(&w);
                    w -= basis * proj;
                }
                for prev in &kept {
                    let proj = prev.dot(&w);
                    w -= prev * proj;
                }
            }
            let post = w.norm();
            if post > 1e-10 * pre {
                kept.push(w / post);
            } else {
                self.deflations
                    .push(format!("iteration {}: {label} column {c} deflated", self.m + 1));
            }
        }
        if kept.is_empty() {
            return DMatrix::zeros(self.v.nrows(), 0);
        }
        let new_cols = DMatrix::from_columns(&kept);
        self.v = DMatrix::from_columns(
            &self
                .v
                .column_iter()
                .chain(new_cols.column_iter())
                .map(|c| c.clone_owned())
                .collect::<Vec<_>>(),
        );
        new_cols
    }

    /// One iteration: extend by the next forward and inverse directions.
    /// Errors with `Breakdown` when every new direction deflates.
    pub fn step(&mut self) -> Result<()> {
        let (f_cand, g_cand) = if self.m == 0 {
            (self.forward.clone(), self.g_inv.apply(&self.inverse))
        } else {
            (self.g.apply(&self.forward), self.g_inv.apply(&self.inverse))
        };
        let f_new = if f_cand.ncols() > 0 {
            self.absorb(f_cand, "forward")
        } else {
            DMatrix::zeros(self.v.nrows(), 0)
        };
        let g_new = if g_cand.ncols() > 0 {
            self.absorb(g_cand, "inverse")
        } else {
            DMatrix::zeros(self.v.nrows(), 0)
        };
        self.m += 1;
        if f_new.ncols() == 0 && g_new.ncols() == 0 {
            return Err(Error::Breakdown {
                dimension: self.v.ncols(),
            });
        }
        self.forward = f_new;
        self.inverse = g_new;
        Ok(())
    }

    pub fn finish(self) -> ExtendedKrylovBasis {
        let t = self.v.transpose() * self.g.apply(&self.v);
        ExtendedKrylovBasis {
            v: self.v,
            t,
            m: self.m,
            deflations: self.deflations,
        }
    }
}

/// Run `m` iterations of the extended block Arnoldi process.
pub fn extended_block_arnoldi(
    g: &BlockDiag,
    j: &DMatrix<f64>,
    m: usize,
) -> Result<ExtendedKrylovBasis> {
    let mut state = ExtendedArnoldi::new(g, j)?;
    for _ in 0..m {
        state.step()?;
    }
    Ok(state.finish())
}

/// Factored Galerkin solution of a Sylvester problem.
#[derive(Debug, Clone)]
pub struct KrylovSolution {
    pub vz: DMatrix<f64>,
    pub vy: DMatrix<f64>,
    pub sm: DMatrix<f64>,
    pub residual_history: Vec<f64>,
    pub breakdown: bool,
    pub deflations: Vec<String>,
}

impl KrylovSolution {
    pub fn assemble(&self) -> DMatrix<f64> {
        &self.vz * &self.sm * self.vy.transpose()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().cloned().unwrap_or(f64::NAN)
    }
}

/// Frobenius norm of `Z X_m - X_m Y - E F^T` in factored form: QR both outer
/// factors and take the norm of the small triangular product.
fn factored_residual(
    problem: &SylvesterProblem,
    vz: &DMatrix<f64>,
    vy: &DMatrix<f64>,
    sm: &DMatrix<f64>,
) -> f64 {
    let zvz = problem.z.apply(vz);
    let wy = problem.y.transpose().apply(vy);
    let ky = vy.ncols();
    let n_left = vz.nrows();
    let mut left = DMatrix::zeros(n_left, 2 * ky + 2);
    left.view_mut((0, 0), (n_left, ky)).copy_from(&(zvz * sm));
    left.view_mut((0, ky), (n_left, ky)).copy_from(&(vz * sm));
    left.view_mut((0, 2 * ky), (n_left, 2)).copy_from(&problem.e);
    let n_right = vy.nrows();
    let mut right = DMatrix::zeros(n_right, 2 * ky + 2);
    right.view_mut((0, 0), (n_right, ky)).copy_from(vy);
    right.view_mut((0, ky), (n_right, ky)).copy_from(&(-wy));
    right
        .view_mut((0, 2 * ky), (n_right, 2))
        .copy_from(&(-&problem.f));
    let r1 = left.qr().r();
    let r2 = right.qr().r();
    (r1 * r2.transpose()).norm()
}

/// Galerkin solution over the paired extended Krylov subspaces, stopping when
/// the relative factored residual drops below `tol` or after `m` iterations.
pub fn krylov_sylvester_solve(
    problem: &SylvesterProblem,
    m: usize,
    tol: f64,
) -> Result<KrylovSolution> {
    let yt = problem.y.transpose();
    let mut arn_z = ExtendedArnoldi::new(&problem.z, &problem.e)?;
    let mut arn_y = ExtendedArnoldi::new(&yt, &problem.f)?;
    let rhs_norm = {
        let g1 = problem.e.transpose() * &problem.e;
        let g2 = problem.f.transpose() * &problem.f;
        (g1 * g2).trace().max(0.0).sqrt()
    };
    let mut history = Vec::new();
    let mut best: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> = None;
    let mut breakdown = false;
    for _ in 0..m {
        let grew_z = match arn_z.step() {
            Ok(()) => true,
            Err(Error::Breakdown { .. }) => false,
            Err(e) => return Err(e),
        };
        let grew_y = match arn_y.step() {
            Ok(()) => true,
            Err(Error::Breakdown { .. }) => false,
            Err(e) => return Err(e),
        };
        if !grew_z && !grew_y && best.is_some() {
            breakdown = true;
            break;
        }
        let vz = arn_z.v.clone();
        let vy = arn_y.v.clone();
        let tz = vz.transpose() * problem.z.apply(&vz);
        let ty = (vy.transpose() * yt.apply(&vy)).transpose();
        let em = vz.transpose() * &problem.e;
        let fm = vy.transpose() * &problem.f;
        let sm = linalg::sylvester_dense(&tz, &ty, &(em * fm.transpose()))?;
        let res = factored_residual(problem, &vz, &vy, &sm) / rhs_norm.max(1e-300);
        history.push(res);
        let improved = best.as_ref().map_or(true, |(.., b)| res <= *b);
        if improved {
            best = Some((vz, vy, sm, res));
        }
        if res <= tol {
            break;
        }
        if !grew_z && !grew_y {
            breakdown = true;
            break;
        }
    }
    let (vz, vy, sm, _) = best.ok_or(Error::Breakdown { dimension: 0 })?;
    let mut deflations = arn_z.deflations.clone();
    deflations.extend(arn_y.deflations.iter().cloned());
    Ok(KrylovSolution {
        vz,
        vy,
        sm,
        residual_history: history,
        breakdown,
        deflations,
    })
}

/// Low-rank data-driven balanced truncation: solve the target-M and target-K
/// Sylvester equations by extended Krylov projection and truncate through the
/// SVD of the small projected solution.
pub fn krydatabt_reduce(
    samples: &FrequencySampleSet,
    r: Option<usize>,
    m: usize,
) -> Result<ReducedModel> {
    let prob_m = assemble_sylvester(samples, SylvesterTarget::M)?;
    let prob_k = assemble_sylvester(samples, SylvesterTarget::K)?;
    let sol_m = krylov_sylvester_solve(&prob_m, m, 1e-12)?;
    let sol_k = krylov_sylvester_solve(&prob_k, m, 1e-12)?;

    let svd_sm = sol_m.sm.clone().svd(true, true);
    let sv: Vec<f64> = svd_sm.singular_values.iter().cloned().collect();
    let r = r.unwrap_or_else(|| default_rank(&sv));
    let t = truncate_svd(&sol_m.sm, r)?;
    let mut warnings = t.warnings.clone();
    if sol_m.breakdown || sol_k.breakdown {
        warnings.push("extended Krylov subspace became invariant before m iterations".into());
    }

    let (bt_r, ct_r) = build_bc_real(samples);
    // left factor L = S^{-1/2} U1^T (V_Z^M)^T, right factor R = V_Y^M W1 S^{-1/2}
    let left = &t.s1_inv_sqrt * t.z1.transpose() * sol_m.vz.transpose();
    let right = &sol_m.vy * &t.y1 * &t.s1_inv_sqrt;
    // K~R in factored form: V_Z^K S^K (V_Y^K)^T
    let k_r = &left * &sol_k.vz * &sol_k.sm * sol_k.vy.transpose() * &right;
    let m_r = DMatrix::identity(r, r);
    let d_r = &m_r * samples.alpha + &k_r * samples.beta;
    let b_r = &left * &bt_r;
    let c_r = &ct_r * &right;
    let system = SecondOrderSystem::new(
        m_r,
        d_r,
        k_r,
        b_r,
        c_r,
        Some((samples.alpha, samples.beta)),
    )?;
    Ok(ReducedModel {
        system,
        provenance: Provenance {
            method: Method::KryDataBtSopd,
            rank: r,
            singular_values: sv,
            nu_p: Some(samples.p_rule.nu()),
            nu_q: Some(samples.q_rule.nu()),
            krylov_m: Some(m),
            residual: Some(sol_m.final_residual()),
        },
        warnings,
    })
}
