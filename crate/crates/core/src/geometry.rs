//! Signed paraboloids, model curves, normals, transversality volumes,
//! Wronskians, and principal curvatures of hyperplane sections.
//!
//! All types here are plain value types and every operation is a pure
//! function, so everything is safe to share across threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// Coefficient vector of the quadratic form defining a signed paraboloid
/// graph over the base box `[-1/2, 1/2]^(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    entries: Vec<f64>,
}

impl Signature {
    /// Every entry must be a nonzero finite real; the ambient dimension is
    /// one more than the number of entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Contract("signature needs at least one entry".into()));
        }
        if entries.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::Contract(format!(
                "signature entries must be nonzero finite reals, got {entries:?}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Dimension of the base box.
    pub fn base_dim(&self) -> usize {
        self.entries.len()
    }

    /// Dimension of the ambient frequency space.
    pub fn ambient_dim(&self) -> usize {
        self.entries.len() + 1
    }

    /// Minimum of the positive and negative entry counts.  Zero for the
    /// elliptic case; for mixed signs it equals the dimension of the largest
    /// flat subspace contained in the graph (for matched-magnitude entries).
    pub fn hyperbolic_index(&self) -> usize {
        let pos = self.entries.iter().filter(|v| **v > 0.0).count();
        let neg = self.entries.len() - pos;
        pos.min(neg)
    }

    pub fn is_elliptic(&self) -> bool {
        self.hyperbolic_index() == 0
    }

    /// Value of the defining quadratic form at a base point.
    pub fn quadratic(&self, base: &[f64]) -> f64 {
        self.entries
            .iter()
            .zip(base)
            .map(|(v, b)| v * b * b)
            .sum()
    }

    /// Graph lift `(base, sum v_i b_i^2)`.  The base point must lie in the
    /// closed unit box.
    pub fn lift(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.check_base(base)?;
        let mut out = base.to_vec();
        out.push(self.quadratic(base));
        Ok(out)
    }

    /// Upward unit normal of the graph at a base point: the normalization of
    /// `(-2 v_1 b_1, ..., -2 v_{n-1} b_{n-1}, 1)`.
    pub fn unit_normal(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.check_base(base)?;
        let mut v: Vec<f64> = self
            .entries
            .iter()
            .zip(base)
            .map(|(vi, bi)| -2.0 * vi * bi)
            .collect();
        v.push(1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }

    fn check_base(&self, base: &[f64]) -> Result<()> {
        if base.len() != self.base_dim() {
            return Err(Error::Contract(format!(
                "base point dimension {} does not match signature base dimension {}",
                base.len(),
                self.base_dim()
            )));
        }
        if base.iter().any(|b| b.abs() > 0.5) {
            return Err(Error::Domain(format!(
                "base point {base:?} outside [-1/2, 1/2]^{}",
                self.base_dim()
            )));
        }
        Ok(())
    }
}

/// `d(v) = min(#positive, #negative)` entries of the signature.
pub fn signature_d(s: &Signature) -> usize {
    s.hyperbolic_index()
}

/// Volume of the parallelepiped spanned by `n` unit vectors in `R^n`.
///
/// Computed by Laplace expansion along the first row.  This keeps structured
/// cancellations exact: normals drawn from a flat line inside a hyperbolic
/// paraboloid produce a determinant of exactly 0.0, with no pivoting residue.
pub fn transversality_volume(normals: &[Vec<f64>]) -> Result<f64> {
    let n = normals.len();
    if n == 0 {
        return Err(Error::Contract("no normals supplied".into()));
    }
    for v in normals {
        if v.len() != n {
            return Err(Error::Contract(format!(
                "expected {n} vectors of length {n}, got one of length {}",
                v.len()
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Contract(format!(
                "normal {v:?} has norm {norm} (must be 1 within {UNIT_TOL:e})"
            )));
        }
    }
    let cols: Vec<usize> = (0..n).collect();
    Ok(laplace_det(normals, 0, &cols).abs())
}

fn laplace_det(rows: &[Vec<f64>], row: usize, cols: &[usize]) -> f64 {
    if cols.len() == 1 {
        return rows[row][cols[0]];
    }
    if cols.len() == 2 {
        return rows[row][cols[0]] * rows[row + 1][cols[1]]
            - rows[row][cols[1]] * rows[row + 1][cols[0]];
    }
    let mut det = 0.0;
    let mut sub: Vec<usize> = Vec::with_capacity(cols.len() - 1);
    for (j, &c) in cols.iter().enumerate() {
        sub.clear();
        sub.extend(cols.iter().filter(|&&x| x != c));
        let minor = laplace_det(rows, row + 1, &sub);
        let term = rows[row][c] * minor;
        if j % 2 == 0 {
            det += term;
        } else {
            det -= term;
        }
    }
    det
}

/// Affine hyperplane in the base space, stored by unit normal and offset:
/// `{ x : normal . x = offset }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Contract("hyperplane normal must be nonzero".into()));
        }
        Ok(Self {
            normal: normal.iter().map(|x| x / norm).collect(),
            offset: offset / norm,
        })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed distance of a point from the plane.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

/// Orthonormal basis of the orthogonal complement of a unit vector,
/// by Gram-Schmidt against the coordinate frame.
fn orthonormal_complement(unit: &[f64]) -> Vec<Vec<f64>> {
    let n = unit.len();
    let mut basis: Vec<Vec<f64>> = vec![unit.to_vec()];
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for b in &basis {
            let dot: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

/// How steep the lifted section chart may get before we declare the
/// configuration tangent/degenerate.  The chart Jacobian has condition
/// number `sqrt(1 + |grad|^2)`.
const SECTION_COND_LIMIT: f64 = 1e8;

/// Principal curvatures of the hyperplane section of a signed paraboloid.
///
/// The section `{ x on the graph : base(x) in E }` is itself the graph of a
/// quadratic over `E`, viewed inside the lifted hyperplane `E x R`.  Its
/// shape operator is assembled in closed form from the restricted Hessian
/// and gradient, so zero curvatures come out exact instead of noisy.
///
/// Returns the `n-2` principal curvatures sorted by increasing magnitude.
pub fn section_curvatures(s: &Signature, plane: &Hyperplane, base: &[f64]) -> Result<Vec<f64>> {
    let n = s.ambient_dim();
    if n < 3 {
        return Err(Error::Domain("hyperplane sections need ambient dimension >= 3".into()));
    }
    if plane.dim() != s.base_dim() {
        return Err(Error::Contract(format!(
            "hyperplane lives in R^{}, base space is R^{}",
            plane.dim(),
            s.base_dim()
        )));
    }
    s.check_base(base)?;
    if plane.distance(base).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "query point is off the hyperplane by {:e}",
            plane.distance(base).abs()
        )));
    }

    let m = s.base_dim() - 1; // dimension of the section
    let tangent = orthonormal_complement(plane.normal());
    debug_assert_eq!(tangent.len(), m);

    // Gradient of the restricted quadratic at the query point: 2 U^T D xi.
    let grad: Vec<f64> = tangent
        .iter()
        .map(|u| {
            u.iter()
                .zip(s.entries())
                .zip(base)
                .map(|((ui, vi), bi)| 2.0 * ui * vi * bi)
                .sum()
        })
        .collect();
    let g2: f64 = grad.iter().map(|x| x * x).sum();
    if (1.0 + g2).sqrt() > SECTION_COND_LIMIT {
        return Err(Error::Degenerate(format!(
            "section chart is tangent: condition number {:e}",
            (1.0 + g2).sqrt()
        )));
    }

    // Restricted Hessian: 2 U^T D U.
    let mut hess = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = tangent[i]
                .iter()
                .zip(&tangent[j])
                .zip(s.entries())
                .map(|((a, b), d)| 2.0 * a * b * d)
                .sum();
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }

    // Shape operator eigenvalues via the symmetric reduction
    // I^{-1/2} H I^{-1/2} / sqrt(1+|g|^2) with I = Id + g g^T.
    let scale = 1.0 / (1.0 + g2).sqrt();
    let half_inv = if g2 > 1e-30 {
        let coeff = (scale - 1.0) / g2;
        let g = DVector::from_column_slice(&grad);
        DMatrix::identity(m, m) + coeff * (&g * g.transpose())
    } else {
        DMatrix::identity(m, m)
    };
    let sym = (&half_inv * hess * &half_inv) * scale;
    let mut curvatures: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    curvatures.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    Ok(curvatures)
}

/// Counts of principal curvatures that are large-positive, large-negative,
/// and small, together with `d = r + min(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionCounts {
    /// Curvatures `>= threshold`.
    pub pos: usize,
    /// Curvatures `<= -threshold`.
    pub neg: usize,
    /// Curvatures strictly inside `(-threshold, threshold)`.
    pub small: usize,
    /// `small + min(pos, neg)`.
    pub d: usize,
}

pub fn section_signature_counts(curvatures: &[f64], threshold: f64) -> Result<SectionCounts> {
    if !(threshold > 0.0) {
        return Err(Error::Contract("threshold must be positive".into()));
    }
    let pos = curvatures.iter().filter(|c| **c >= threshold).count();
    let neg = curvatures.iter().filter(|c| **c <= -threshold).count();
    let small = curvatures.len() - pos - neg;
    Ok(SectionCounts { pos, neg, small, d: small + pos.min(neg) })
}

/// Polynomial model curve with upper-triangular coefficient table:
/// component `i` is `C_{i,i} t^i + ... + C_{i,n} t^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurve {
    dim: usize,
    /// `coeffs[i][j - i]` is the coefficient of `t^(j+1)` in component `i+1`
    /// (both indices 1-based in the math, 0-based here).
    coeffs: Vec<Vec<f64>>,
    kappa: f64,
}

impl ModelCurve {
    /// Builds a model curve, checking `kappa <= |C_{i,i}| <= 1/kappa` and
    /// `|C_{i,j}| <= 1/kappa` for `i < j` (with a small floating slack).
    pub fn new(dim: usize, coeffs: Vec<Vec<f64>>, kappa: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("curve dimension must be positive".into()));
        }
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Contract(format!("kappa must lie in (0, 1], got {kappa}")));
        }
        if coeffs.len() != dim || coeffs.iter().enumerate().any(|(i, row)| row.len() != dim - i) {
            return Err(Error::Contract(
                "coefficient table must be upper triangular with rows of length n-i".into(),
            ));
        }
        let slack = 1.0 + 1e-9;
        let inv = 1.0 / kappa;
        for (i, row) in coeffs.iter().enumerate() {
            let diag = row[0].abs();
            if diag < kappa / slack || diag > inv * slack {
                return Err(Error::Contract(format!(
                    "diagonal coefficient C_{{{},{}}} = {} violates kappa = {kappa}",
                    i + 1,
                    i + 1,
                    row[0]
                )));
            }
            for (off, c) in row.iter().enumerate().skip(1) {
                if c.abs() > inv * slack {
                    return Err(Error::Contract(format!(
                        "coefficient C_{{{},{}}} = {c} exceeds 1/kappa",
                        i + 1,
                        i + 1 + off
                    )));
                }
            }
        }
        Ok(Self { dim, coeffs, kappa })
    }

    /// The moment curve `(t, t^2, ..., t^n)`.
    pub fn moment(dim: usize) -> Self {
        let coeffs = (0..dim)
            .map(|i| {
                let mut row = vec![0.0; dim - i];
                row[0] = 1.0;
                row
            })
            .collect();
        Self { dim, coeffs, kappa: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Coefficient `C_{i,j}` (1-based, `i <= j`).
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i - 1][j - i]
    }

    /// Evaluates the curve; the parameter must lie in `[0, 1]`.
    pub fn point(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("curve parameter {t} outside [0, 1]")));
        }
        Ok(self.point_unchecked(t))
    }

    pub(crate) fn point_unchecked(&self, t: f64) -> Vec<f64> {
        (1..=self.dim)
            .map(|i| {
                let mut acc = 0.0;
                // Horner over powers t^i .. t^n.
                for j in (i..=self.dim).rev() {
                    acc = acc * t + self.coeff(i, j);
                }
                acc * t.powi(i as i32)
            })
            .collect()
    }

    /// Analytic derivative of the given order at `t`.
    pub fn derivative(&self, t: f64, order: usize) -> Vec<f64> {
        (1..=self.dim)
            .map(|i| {
                let mut acc = 0.0;
                for j in i..=self.dim {
                    if j >= order {
                        acc += self.coeff(i, j) * falling_factorial(j, order) * t.powi((j - order) as i32);
                    }
                }
                acc
            })
            .collect()
    }

    /// Wronskian of the component derivatives: the determinant of the matrix
    /// with rows `Phi'(t), Phi''(t), ..., Phi^(n)(t)`.
    pub fn wronskian(&self, t: f64) -> f64 {
        let rows: Vec<Vec<f64>> = (1..=self.dim).map(|k| self.derivative(t, k)).collect();
        wronskian_from_derivatives(&rows)
    }
}

fn falling_factorial(j: usize, order: usize) -> f64 {
    ((j - order + 1)..=j).map(|v| v as f64).product()
}

/// Wronskian from explicit derivative rows `Phi'(t), ..., Phi^(n)(t)`;
/// entry point for curves that are only available through samples.
pub fn wronskian_from_derivatives(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    assert!(rows.iter().all(|r| r.len() == n), "derivative rows must be square");
    DMatrix::from_fn(n, n, |i, j| rows[i][j]).determinant()
}

/// A curve that can report points and derivatives of any order; model curves
/// and their rigid motions both qualify.
pub trait Curve {
    fn dim(&self) -> usize;
    fn point(&self, t: f64) -> Vec<f64>;
    fn derivative(&self, t: f64, order: usize) -> Vec<f64>;
}

impl Curve for ModelCurve {
    fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, t: f64) -> Vec<f64> {
        self.point_unchecked(t)
    }

    fn derivative(&self, t: f64, order: usize) -> Vec<f64> {
        ModelCurve::derivative(self, t, order)
    }
}

/// Result of normalizing a curve at a parameter: the rigid motion
/// `x -> rotation * (x - shift)` and the local coefficient table it induces.
#[derive(Debug, Clone)]
pub struct FrenetNormalization {
    pub rotation: DMatrix<f64>,
    pub shift: Vec<f64>,
    pub curve: ModelCurve,
    /// Largest orthogonality-ladder residual `|(Q^T Phi^(j))_i|` for `i > j`,
    /// relative to the column scale.
    pub ladder_residual: f64,
}

/// Rotation + translation taking `Phi(t0)` to the origin and aligning the
/// derivative flag with the coordinate flag, together with the Taylor
/// coefficients of the transformed curve through degree `n`.
///
/// The rotation is the Gram-Schmidt frame of `Phi'(t0), ..., Phi^(n)(t0)`
/// (last column flipped if needed to keep determinant +1), so the output
/// table is upper triangular with positive diagonal up to that final flip.
pub fn frenet_normalize(curve: &dyn Curve, t0: f64) -> Result<FrenetNormalization> {
    let n = curve.dim();
    let derivs: Vec<Vec<f64>> = (1..=n).map(|k| curve.derivative(t0, k)).collect();

    // Modified Gram-Schmidt on the derivative columns.
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(n);
    for d in &derivs {
        let mut v = DVector::from_column_slice(d);
        for b in &q {
            let dot = b.dot(&v);
            v -= b * dot;
        }
        let norm = v.norm();
        let col_scale = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        if norm <= 1e-12 * col_scale {
            return Err(Error::Degenerate(
                "derivative flag is rank deficient (vanishing Wronskian)".into(),
            ));
        }
        q.push(v / norm);
    }
    let mut rotation = DMatrix::from_columns(&q).transpose();
    if rotation.determinant() < 0.0 {
        // Flip the last row so the map is a proper rotation.
        let last = n - 1;
        for j in 0..n {
            rotation[(last, j)] = -rotation[(last, j)];
        }
    }

    let shift = curve.point(t0);
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut ladder: f64 = 0.0;
    let mut fact = 1.0;
    let mut rotated: Vec<DVector<f64>> = Vec::with_capacity(n);
    for (j, d) in derivs.iter().enumerate() {
        fact *= (j + 1) as f64;
        rotated.push(&rotation * DVector::from_column_slice(d) / fact);
    }
    for i in 0..n {
        let mut row = Vec::with_capacity(n - i);
        for j in 0..n {
            let v = rotated[j][i];
            if j >= i {
                row.push(v);
            } else {
                let scale = rotated[j].norm().max(1.0);
                ladder = ladder.max(v.abs() / scale);
            }
        }
        table.push(row);
    }

    let min_diag = table
        .iter()
        .map(|row| row[0].abs())
        .fold(f64::INFINITY, f64::min);
    let max_entry = table
        .iter()
        .flat_map(|row| row.iter().map(|c| c.abs()))
        .fold(0.0f64, f64::max);
    if min_diag <= 1e-12 {
        return Err(Error::Degenerate("normalized curve has a vanishing diagonal coefficient".into()));
    }
    let kappa = min_diag.min(1.0 / max_entry).min(1.0);
    let curve = ModelCurve::new(n, table, kappa)?;
    Ok(FrenetNormalization { rotation, shift, curve, ladder_residual: ladder })
}
