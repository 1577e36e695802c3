//! Dense linear-algebra kernels shared by the Gramian and Sylvester modules.
//!
//! The Sylvester solver is Bartels-Stewart on the complex Schur forms of the
//! coefficients: triangularize both sides, back-substitute column by column,
//! transform back. The Lyapunov solver is a thin wrapper over it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Largest imaginary-part magnitude relative to the matrix scale.
pub fn imag_residue(m: &CMatrix) -> f64 {
    let scale = m.norm().max(1e-300);
    let imag: f64 = m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    imag / scale
}

/// Solve `a x = b` by LU with partial pivoting, with a cheap condition
/// estimate from the diagonal of U. Errors out when the estimate exceeds
/// `1/eps`.
pub fn solve_complex(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let lu = a.clone().lu();
    let u = lu.u();
    let n = u.nrows();
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        let d = u[(i, i)].norm();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let cond = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };
    if cond > 1.0 / f64::EPSILON {
        return Err(Error::SingularPencil {
            s: Complex64::new(f64::NAN, f64::NAN),
            cond,
            node_index: None,
        });
    }
    lu.solve(b).ok_or(Error::SingularPencil {
        s: Complex64::new(f64::NAN, f64::NAN),
        cond: f64::INFINITY,
        node_index: None,
    })
}

/// Solve the triangular Sylvester equation `tz x - x ty = c` with both
/// coefficients upper triangular, by forward column substitution.
fn triangular_sylvester(tz: &CMatrix, ty: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let n = tz.nrows();
    let p = ty.nrows();
    let mut x = CMatrix::zeros(n, p);
    // minimum eigenvalue separation check
    let mut sep = f64::INFINITY;
    let mut scale = 0.0f64;
    for i in 0..n {
        scale = scale.max(tz[(i, i)].norm());
        for j in 0..p {
            sep = sep.min((tz[(i, i)] - ty[(j, j)]).norm());
        }
    }
    for j in 0..p {
        scale = scale.max(ty[(j, j)].norm());
    }
    if sep < 1e-15 * scale.max(1.0) {
        return Err(Error::SpectraOverlap { separation: sep });
    }
    // Clamp near-singular denominators instead of failing: Galerkin
    // projections of interlaced spectra produce spurious Ritz collisions whose
    // right-hand-side components are projection noise, and a truncated solve
    // in the Schur basis suppresses them without disturbing well-separated
    // directions.
    let clamp = 1e-12 * scale.max(1.0);
    for j in 0..p {
        // rhs_j = c_j + sum_{k<j} x_k ty[k, j]
        let mut rhs = c.column(j).clone_owned();
        for k in 0..j {
            let t = ty[(k, j)];
            if t != Complex64::new(0.0, 0.0) {
                rhs += x.column(k) * t;
            }
        }
        // (tz - ty[j,j] I) x_j = rhs, upper triangular back substitution
        let shift = ty[(j, j)];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..n {
                s -= tz[(i, k)] * x[(k, j)];
            }
            let mut d = tz[(i, i)] - shift;
            if d.norm() < clamp {
                d = if d.norm() == 0.0 {
                    Complex64::new(clamp, 0.0)
                } else {
                    d / d.norm() * clamp
                };
            }
            x[(i, j)] = s / d;
        }
    }
    Ok(x)
}

/// Solve the real Sylvester equation `z x - x y = r` densely.
pub fn sylvester_dense(z: &DMatrix<f64>, y: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = sylvester_dense_complex(&to_complex(z), &to_complex(y), &to_complex(r))?;
    Ok(x.map(|v| v.re))
}

pub fn sylvester_dense_complex(z: &CMatrix, y: &CMatrix, r: &CMatrix) -> Result<CMatrix> {
    let (qz, tz) = z.clone().schur().unpack();
    let (qy, ty) = y.clone().schur().unpack();
    let c = qz.adjoint() * r * &qy;
    let xt = triangular_sylvester(&tz, &ty, &c)?;
    Ok(&qz * xt * qy.adjoint())
}

/// Solve the continuous Lyapunov equation `a p + p a^T + c = 0` for symmetric
/// `c`. The result is symmetrized.
pub fn lyapunov_dense(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // a p - p (-a^T) = -c
    let p = sylvester_dense(a, &(-a.transpose()), &(-c))?;
    Ok((&p + p.transpose()) * 0.5)
}

/// Symmetric positive semidefinite square root factor: returns `f` with
/// `p ~= f f^T`, dropping eigenvalues below `clip_rel * lambda_max` and
/// reporting the total clipped negative mass.
pub fn psd_factor(p: &DMatrix<f64>, clip_rel: f64) -> (DMatrix<f64>, f64) {
    let n = p.nrows();
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = clip_rel * lmax.max(f64::MIN_POSITIVE);
    let mut cols = Vec::new();
    let mut clipped = 0.0f64;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            cols.push(eig.eigenvectors.column(i) * lam.sqrt());
        } else if lam < 0.0 {
            clipped += -lam;
        }
    }
    if cols.is_empty() {
        return (DMatrix::zeros(n, 0), clipped);
    }
    let f = DMatrix::from_columns(&cols);
    (f, clipped)
}
