//! Second-order LTI systems: transfer evaluation, first-order realization,
//! synthetic benchmarks, and the plain-text model file format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CVector};

/// `M q'' + D q' + K q = B u`, `y = C q`, SISO.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSystem {
    pub n: usize,
    pub mass: DMatrix<f64>,
    pub damping_mat: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub input: DVector<f64>,
    pub output: RowDVector<f64>,
    /// `(alpha, beta)` when `D = alpha M + beta K` holds.
    pub damping: Option<(f64, f64)>,
}

/// First-order companion form `E x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone)]
pub struct FirstOrderRealization {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    BtSopd,
    DataBtSopd,
    KryDataBtSopd,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::BtSopd => "BT-SOPD",
            Method::DataBtSopd => "Data-BT-SOPD",
            Method::KryDataBtSopd => "KryData-BT-SOPD",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Method> {
        match tag {
            "BT-SOPD" => Some(Method::BtSopd),
            "Data-BT-SOPD" => Some(Method::DataBtSopd),
            "KryData-BT-SOPD" => Some(Method::KryDataBtSopd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub method: Method,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub nu_p: Option<usize>,
    pub nu_q: Option<usize>,
    pub krylov_m: Option<usize>,
    pub residual: Option<f64>,
}

/// Reduced coefficients plus how they were obtained.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub system: SecondOrderSystem,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

pub(crate) const DAMPING_TOL: f64 = 1e-12;

impl SecondOrderSystem {
    pub fn new(
        mass: DMatrix<f64>,
        damping_mat: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        input: DVector<f64>,
        output: RowDVector<f64>,
        damping: Option<(f64, f64)>,
    ) -> Result<Self> {
        let n = mass.nrows();
        if mass.ncols() != n
            || damping_mat.shape() != (n, n)
            || stiffness.shape() != (n, n)
            || input.len() != n
            || output.len() != n
        {
            return Err(Error::DimensionMismatch(format!(
                "expected square n x n coefficients with n = {n}, got M {:?}, D {:?}, K {:?}, B len {}, C len {}",
                mass.shape(),
                damping_mat.shape(),
                stiffness.shape(),
                input.len(),
                output.len()
            )));
        }
        if !mass.clone().lu().is_invertible() {
            return Err(Error::InvariantViolation(
                "mass matrix M is singular".into(),
            ));
        }
        if let Some((alpha, beta)) = damping {
            let dev = (&damping_mat - (&mass * alpha + &stiffness * beta)).norm();
            if dev > DAMPING_TOL * (damping_mat.norm() + 1.0) {
                return Err(Error::InvariantViolation(format!(
                    "declared damping pair violated: ||D - (alpha M + beta K)|| = {dev:.3e}"
                )));
            }
        }
        Ok(SecondOrderSystem {
            n,
            mass,
            damping_mat,
            stiffness,
            input,
            output,
            damping,
        })
    }

    /// `s^2 M + s D + K` as a complex matrix.
    pub fn pencil(&self, s: Complex64) -> linalg::CMatrix {
        let mut p = linalg::to_complex(&self.stiffness);
        let m = linalg::to_complex(&self.mass);
        let d = linalg::to_complex(&self.damping_mat);
        p += m * (s * s);
        p += d * s;
        p
    }

    /// `H(s) = C (s^2 M + s D + K)^{-1} B`.
    pub fn eval_transfer(&self, s: Complex64) -> Result<Complex64> {
        let b: CVector = self.input.map(|x| Complex64::new(x, 0.0));
        let x = linalg::solve_complex(&self.pencil(s), &b).map_err(|e| match e {
            Error::SingularPencil { cond, .. } => Error::SingularPencil {
                s,
                cond,
                node_index: None,
            },
            other => other,
        })?;
        let c = self.output.map(|x| Complex64::new(x, 0.0));
        Ok((c * x)[(0, 0)])
    }

    /// Elementwise [`eval_transfer`](Self::eval_transfer) over `nodes`,
    /// order preserved. On failure the offending node index is attached.
    pub fn eval_transfer_batch(&self, nodes: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(nodes.len());
        for (i, &s) in nodes.iter().enumerate() {
            match self.eval_transfer(s) {
                Ok(v) => out.push(v),
                Err(Error::SingularPencil { s, cond, .. }) => {
                    return Err(Error::SingularPencil {
                        s,
                        cond,
                        node_index: Some(i),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    pub fn to_first_order(&self) -> FirstOrderRealization {
        let n = self.n;
        let mut e = DMatrix::zeros(2 * n, 2 * n);
        e.view_mut((0, 0), (n, n)).fill_with_identity();
        e.view_mut((n, n), (n, n)).copy_from(&self.mass);
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n)).copy_from(&(-&self.stiffness));
        a.view_mut((n, n), (n, n)).copy_from(&(-&self.damping_mat));
        let mut b = DVector::zeros(2 * n);
        b.rows_mut(n, n).copy_from(&self.input);
        let mut c = RowDVector::zeros(2 * n);
        c.columns_mut(0, n).copy_from(&self.output);
        FirstOrderRealization { e, a, b, c }
    }

    /// Eigenvalues of the first-order pencil `(A, E)`.
    pub fn pole_spectrum(&self) -> Vec<Complex64> {
        let fo = self.to_first_order();
        let a_std = fo.e.clone().lu().solve(&fo.a).expect("M nonsingular");
        a_std.complex_eigenvalues().iter().cloned().collect()
    }

    /// All first-order eigenvalues strictly in the open left half plane.
    pub fn is_stable(&self) -> bool {
        let eigs = self.pole_spectrum();
        let scale = eigs.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        eigs.iter().all(|z| z.re < -1e-9 * (1.0 + scale))
    }
}

impl FirstOrderRealization {
    /// `C (s E - A)^{-1} B`.
    pub fn eval_transfer(&self, s: Complex64) -> Result<Complex64> {
        let pencil = linalg::to_complex(&self.e) * s - linalg::to_complex(&self.a);
        let b: CVector = self.b.map(|x| Complex64::new(x, 0.0));
        let x = linalg::solve_complex(&pencil, &b)?;
        let c = self.c.map(|x| Complex64::new(x, 0.0));
        Ok((c * x)[(0, 0)])
    }
}

/// Build a proportionally damped system `D = alpha M + beta K`.
pub fn build_proportional(
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    input: DVector<f64>,
    output: RowDVector<f64>,
    alpha: f64,
    beta: f64,
) -> Result<SecondOrderSystem> {
    if alpha < 0.0 || beta < 0.0 {
        return Err(Error::NegativeCoefficient { alpha, beta });
    }
    let d = &mass * alpha + &stiffness * beta;
    SecondOrderSystem::new(mass, d, stiffness, input, output, Some((alpha, beta)))
}

/// Mass-spring-damper chain with both ends anchored.
///
/// `stiffnesses[j]` is the spring between node `j-1` and node `j` (node 0 is
/// the left wall); the right-wall spring reuses the last entry. For `n = 1`
/// the system is the plain single-spring oscillator.
pub fn synth_msd_chain(
    n: usize,
    masses: &[f64],
    stiffnesses: &[f64],
    alpha: f64,
    beta: f64,
    input_node: usize,
    output_node: usize,
) -> Result<SecondOrderSystem> {
    if n == 0 || masses.len() != n || stiffnesses.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "chain needs n >= 1 masses and stiffnesses (n = {n}, masses = {}, stiffnesses = {})",
            masses.len(),
            stiffnesses.len()
        )));
    }
    if masses.iter().any(|&m| m <= 0.0) || stiffnesses.iter().any(|&k| k <= 0.0) {
        return Err(Error::InvariantViolation(
            "chain masses and stiffnesses must be positive".into(),
        ));
    }
    if input_node >= n {
        return Err(Error::IndexOutOfRange { index: input_node, n });
    }
    if output_node >= n {
        return Err(Error::IndexOutOfRange { index: output_node, n });
    }
    let mass = DMatrix::from_diagonal(&DVector::from_row_slice(masses));
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let left = stiffnesses[j];
        let right = if j + 1 < n {
            stiffnesses[j + 1]
        } else if n > 1 {
            stiffnesses[n - 1]
        } else {
            0.0
        };
        k[(j, j)] = left + right;
        if j + 1 < n {
            k[(j, j + 1)] = -stiffnesses[j + 1];
            k[(j + 1, j)] = -stiffnesses[j + 1];
        }
    }
    let mut b = DVector::zeros(n);
    b[input_node] = 1.0;
    let mut c = RowDVector::zeros(n);
    c[output_node] = 1.0;
    build_proportional(mass, k, b, c, alpha, beta)
}

/// Uniform chain with optional seeded relative jitter on masses and springs.
pub fn synth_uniform_chain(
    n: usize,
    alpha: f64,
    beta: f64,
    jitter: f64,
    seed: u64,
    input_node: usize,
    output_node: usize,
) -> Result<SecondOrderSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        if jitter > 0.0 {
            1.0 + jitter * rng.gen_range(-1.0..1.0)
        } else {
            1.0
        }
    };
    let masses: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
    let stiffnesses: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
    synth_msd_chain(n, &masses, &stiffnesses, alpha, beta, input_node, output_node)
}

fn fmt_value(x: f64) -> String {
    format!("{x:.17e}")
}

fn serialize_matrix(out: &mut String, label: &str, rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) {
    writeln!(out, "{label}:").unwrap();
    for i in 0..rows {
        let row: Vec<String> = (0..cols).map(|j| fmt_value(get(i, j))).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

pub fn serialize_model(sys: &SecondOrderSystem) -> String {
    serialize_with_provenance(sys, None)
}

fn serialize_with_provenance(sys: &SecondOrderSystem, prov: Option<&Provenance>) -> String {
    let mut out = String::new();
    let (alpha, beta) = match sys.damping {
        Some((a, b)) => (fmt_value(a), fmt_value(b)),
        None => ("none".into(), "none".into()),
    };
    writeln!(out, "so-model v1 n={} alpha={} beta={}", sys.n, alpha, beta).unwrap();
    if let Some(p) = prov {
        let sv = p
            .singular_values
            .iter()
            .map(|v| format!("{v:.17e}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut line = format!("# method={} r={}", p.method.tag(), p.rank);
        if let (Some(np), Some(nq)) = (p.nu_p, p.nu_q) {
            write!(line, " nu_p={np} nu_q={nq}").unwrap();
        }
        if let Some(m) = p.krylov_m {
            write!(line, " m={m}").unwrap();
        }
        if let Some(res) = p.residual {
            write!(line, " residual={res:.6e}").unwrap();
        }
        write!(line, " sv={sv}").unwrap();
        writeln!(out, "{line}").unwrap();
    }
    let n = sys.n;
    serialize_matrix(&mut out, "M", n, n, |i, j| sys.mass[(i, j)]);
    serialize_matrix(&mut out, "D", n, n, |i, j| sys.damping_mat[(i, j)]);
    serialize_matrix(&mut out, "K", n, n, |i, j| sys.stiffness[(i, j)]);
    serialize_matrix(&mut out, "B", n, 1, |i, _| sys.input[i]);
    serialize_matrix(&mut out, "C", 1, n, |_, j| sys.output[j]);
    out
}

pub fn serialize_reduced(model: &ReducedModel) -> String {
    serialize_with_provenance(&model.system, Some(&model.provenance))
}

struct ModelParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> ModelParser<'a> {
    fn err(line: usize, message: impl Into<String>) -> Error {
        Error::ParseError {
            line: line + 1,
            message: message.into(),
        }
    }

    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.lines.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i, t));
            }
        }
        None
    }

    fn parse_rows(&mut self, label: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let (i, header) = self
            .next_content()
            .ok_or_else(|| Self::err(usize::MAX - 1, format!("missing block {label}:")))?;
        if header != format!("{label}:") {
            return Err(Self::err(i, format!("expected block `{label}:`, got `{header}`")));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (i, line) = self
                .next_content()
                .ok_or_else(|| Self::err(usize::MAX - 1, format!("truncated block {label}")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != cols {
                return Err(Self::err(
                    i,
                    format!("block {label}: expected {cols} values per row, got {}", fields.len()),
                ));
            }
            for f in fields {
                values.push(
                    f.parse::<f64>()
                        .map_err(|e| Self::err(i, format!("block {label}: bad number `{f}`: {e}")))?,
                );
            }
        }
        Ok(values)
    }
}

fn parse_header_field(line: usize, text: &str, key: &str) -> Result<String> {
    let prefix = format!("{key}=");
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&prefix))
        .map(|s| s.to_string())
        .ok_or_else(|| ModelParser::err(line, format!("header missing field `{key}`")))
}

fn parse_provenance(line_no: usize, line: &str) -> Result<Provenance> {
    let body = line.trim_start_matches('#').trim();
    let get = |key: &str| parse_header_field(line_no, body, key);
    let method_tag = get("method")?;
    let method = Method::from_tag(&method_tag)
        .ok_or_else(|| ModelParser::err(line_no, format!("unknown method `{method_tag}`")))?;
    let rank: usize = get("r")?
        .parse()
        .map_err(|e| ModelParser::err(line_no, format!("bad r: {e}")))?;
    let singular_values = match get("sv") {
        Ok(sv) if !sv.is_empty() => sv
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| ModelParser::err(line_no, format!("bad singular value `{v}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?,
        _ => Vec::new(),
    };
    let opt_usize = |key: &str| get(key).ok().and_then(|v| v.parse::<usize>().ok());
    let opt_f64 = |key: &str| get(key).ok().and_then(|v| v.parse::<f64>().ok());
    Ok(Provenance {
        method,
        rank,
        singular_values,
        nu_p: opt_usize("nu_p"),
        nu_q: opt_usize("nu_q"),
        krylov_m: opt_usize("m"),
        residual: opt_f64("residual"),
    })
}

fn deserialize_inner(text: &str) -> Result<(SecondOrderSystem, Option<Provenance>)> {
    let mut provenance = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim_start().starts_with("# method=") {
            provenance = Some(parse_provenance(i, line)?);
        }
    }
    let mut parser = ModelParser {
        lines: text.lines().enumerate(),
    };
    let (hline, header) = parser
        .next_content()
        .ok_or_else(|| ModelParser::err(0, "empty model file"))?;
    if !header.starts_with("so-model v1 ") {
        return Err(ModelParser::err(hline, "expected header `so-model v1 ...`"));
    }
    let n: usize = parse_header_field(hline, header, "n")?
        .parse()
        .map_err(|e| ModelParser::err(hline, format!("bad dimension: {e}")))?;
    let alpha = parse_header_field(hline, header, "alpha")?;
    let beta = parse_header_field(hline, header, "beta")?;
    let damping = if alpha == "none" || beta == "none" {
        None
    } else {
        Some((
            alpha
                .parse::<f64>()
                .map_err(|e| ModelParser::err(hline, format!("bad alpha: {e}")))?,
            beta.parse::<f64>()
                .map_err(|e| ModelParser::err(hline, format!("bad beta: {e}")))?,
        ))
    };
    if n == 0 {
        return Err(ModelParser::err(hline, "dimension n must be positive"));
    }
    let m = DMatrix::from_row_slice(n, n, &parser.parse_rows("M", n, n)?);
    let d = DMatrix::from_row_slice(n, n, &parser.parse_rows("D", n, n)?);
    let k = DMatrix::from_row_slice(n, n, &parser.parse_rows("K", n, n)?);
    let b = DVector::from_vec(parser.parse_rows("B", n, 1)?);
    let c = RowDVector::from_vec(parser.parse_rows("C", 1, n)?);
    let sys = SecondOrderSystem::new(m, d, k, b, c, damping)?;
    Ok((sys, provenance))
}

pub fn deserialize_model(text: &str) -> Result<SecondOrderSystem> {
    Ok(deserialize_inner(text)?.0)
}

pub fn deserialize_reduced(text: &str) -> Result<ReducedModel> {
    let (system, provenance) = deserialize_inner(text)?;
    let provenance = provenance.ok_or_else(|| Error::ParseError {
        line: 1,
        message: "reduced model file carries no `# method=` provenance block".into(),
    })?;
    Ok(ReducedModel {
        system,
        provenance,
        warnings: Vec::new(),
    })
}

pub fn save_model(sys: &SecondOrderSystem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_model(sys))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SecondOrderSystem> {
    deserialize_model(&std::fs::read_to_string(path)?)
}

pub fn save_reduced(model: &ReducedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_reduced(model))?;
    Ok(())
}

pub fn load_reduced(path: impl AsRef<Path>) -> Result<ReducedModel> {
    deserialize_reduced(&std::fs::read_to_string(path)?)
}
