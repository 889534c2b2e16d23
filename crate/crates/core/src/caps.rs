//! Dyadic cap partitions of frequency neighborhoods and the exact rescaling
//! maps for curves and paraboloids.
//!
//! Partitions are exact disjoint half-open tilings rather than finitely
//! overlapping covers, so `f = sum_caps f_cap` is an identity for atoms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ModelCurve, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapKind {
    /// Frequency box of base side `delta^(1/2)` over the unit box.
    HypersurfaceBox,
    /// Dyadic parameter arc of length `delta^(1/n)`.
    CurveArc,
}

/// One cap of a partition: a half-open base region `[lower, lower + side)`
/// per axis (a single interval for curve arcs).
#[derive(Debug, Clone, PartialEq)]
pub struct Cap {
    pub kind: CapKind,
    pub index: usize,
    pub lower: Vec<f64>,
    pub side: f64,
    pub scale: f64,
}

impl Cap {
    /// Center of the base region.
    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().map(|l| l + self.side * 0.5).collect()
    }
}

/// Surface a partition belongs to.
#[derive(Debug, Clone)]
pub enum SurfaceRef {
    Hypersurface(Signature),
    Curve(ModelCurve),
}

/// Immutable cap partition at a dyadic scale.
#[derive(Debug, Clone)]
pub struct CapPartition {
    pub surface: SurfaceRef,
    pub scale: f64,
    caps: Vec<Cap>,
    per_axis: usize,
    side: f64,
}

/// Exact dyadic checks: `delta = 2^(-2k)` for boxes, `delta = 2^(-nk)` for arcs.
fn dyadic_exponent(delta: f64, divisor: u32, what: &'static str) -> Result<u32> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::NonDyadicScale(delta, what));
    }
    let log = -delta.log2();
    let rounded = log.round();
    if (log - rounded).abs() > 1e-9 || rounded < 0.0 {
        return Err(Error::NonDyadicScale(delta, what));
    }
    let e = rounded as u32;
    if e % divisor != 0 {
        return Err(Error::NonDyadicScale(delta, what));
    }
    // The tiling must be exact, so require bit-exact equality.
    if delta != 2f64.powi(-(e as i32)) {
        return Err(Error::NonDyadicScale(delta, what));
    }
    Ok(e / divisor)
}

/// Partition of the scale-`delta` neighborhood of a signed paraboloid into
/// `delta^-(n-1)/2` half-open boxes of side `delta^(1/2)`.
pub fn partition_hypersurface(s: &Signature, delta: f64) -> Result<CapPartition> {
    let k = dyadic_exponent(delta, 2, "hypersurface partitions need delta = 4^-k")?;
    let side = 2f64.powi(-(k as i32));
    let per_axis = 1usize << k;
    let d = s.base_dim();
    let count = per_axis.pow(d as u32);
    let mut caps = Vec::with_capacity(count);
    for index in 0..count {
        let mut rem = index;
        let mut lower = vec![0.0; d];
        for ax in (0..d).rev() {
            lower[ax] = -0.5 + (rem % per_axis) as f64 * side;
            rem /= per_axis;
        }
        caps.push(Cap { kind: CapKind::HypersurfaceBox, index, lower, side, scale: delta });
    }
    Ok(CapPartition {
        surface: SurfaceRef::Hypersurface(s.clone()),
        scale: delta,
        caps,
        per_axis,
        side,
    })
}

/// Partition of the scale-`delta` neighborhood of an `n`-dimensional model
/// curve into the `delta^(-1/n)` dyadic arcs of `[0, 1]`.
pub fn partition_curve(curve: &ModelCurve, delta: f64) -> Result<CapPartition> {
    let k = dyadic_exponent(delta, curve.dim() as u32, "curve partitions need delta^(1/n) = 2^-k")?;
    let side = 2f64.powi(-(k as i32));
    let per_axis = 1usize << k;
    let caps = (0..per_axis)
        .map(|index| Cap {
            kind: CapKind::CurveArc,
            index,
            lower: vec![index as f64 * side],
            side,
            scale: delta,
        })
        .collect();
    Ok(CapPartition {
        surface: SurfaceRef::Curve(curve.clone()),
        scale: delta,
        caps,
        per_axis,
        side,
    })
}

impl CapPartition {
    pub fn caps(&self) -> &[Cap] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    fn axis_index(&self, x: f64, origin: f64, extent: f64) -> Result<usize> {
        if x < origin || x > origin + extent {
            return Err(Error::Domain(format!("coordinate {x} outside [{origin}, {}]", origin + extent)));
        }
        // Half-open tiles; the very last tile also absorbs the right
        // endpoint of the closed domain.
        let i = ((x - origin) / self.side).floor() as usize;
        Ok(i.min(self.per_axis - 1))
    }

    /// Index of the unique cap whose half-open base region contains the point.
    pub fn locate_base(&self, base: &[f64]) -> Result<usize> {
        match &self.surface {
            SurfaceRef::Hypersurface(s) => {
                if base.len() != s.base_dim() {
                    return Err(Error::Contract("base point has wrong dimension".into()));
                }
                let mut index = 0;
                for &b in base {
                    index = index * self.per_axis + self.axis_index(b, -0.5, 1.0)?;
                }
                Ok(index)
            }
            SurfaceRef::Curve(_) => self.axis_index(base[0], 0.0, 1.0),
        }
    }

    /// Assigns a frequency atom to its cap.
    ///
    /// Hypersurface atoms must lie within vertical distance `delta` of the
    /// graph; curve atoms within distance `delta` of the curve.  Violations
    /// are rejected with the measured deviation.
    pub fn assign_atom(&self, xi: &[f64]) -> Result<&Cap> {
        match &self.surface {
            SurfaceRef::Hypersurface(s) => {
                if xi.len() != s.ambient_dim() {
                    return Err(Error::Contract("atom has wrong dimension".into()));
                }
                let base = &xi[..s.base_dim()];
                let deviation = (xi[s.base_dim()] - s.quadratic(base)).abs();
                if deviation > self.scale * (1.0 + 1e-9) {
                    return Err(Error::AtomRejected { deviation, scale: self.scale });
                }
                Ok(&self.caps[self.locate_base(base)?])
            }
            SurfaceRef::Curve(curve) => {
                let (t, dist) = nearest_parameter(curve, xi);
                if dist > self.scale * (1.0 + 1e-9) {
                    return Err(Error::AtomRejected { deviation: dist, scale: self.scale });
                }
                Ok(&self.caps[self.axis_index(t, 0.0, 1.0)?])
            }
        }
    }
}

/// Nearest parameter of a model curve to a point: coarse scan plus golden
/// section refinement.  Good to ~1e-12 in the parameter for smooth curves.
fn nearest_parameter(curve: &ModelCurve, xi: &[f64]) -> (f64, f64) {
    let dist2 = |t: f64| -> f64 {
        curve
            .point_unchecked(t)
            .iter()
            .zip(xi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let coarse = 512;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..=coarse {
        let t = i as f64 / coarse as f64;
        let d = dist2(t);
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let mut lo = ((best_i as f64 - 1.0) / coarse as f64).max(0.0);
    let mut hi = ((best_i as f64 + 1.0) / coarse as f64).min(1.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (dist2(a), dist2(b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = dist2(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = dist2(b);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, dist2(t).sqrt())
}

/// Invertible affine map `x -> matrix x + shift`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != shift.len() {
            return Err(Error::Contract("affine map needs a square matrix matching the shift".into()));
        }
        if matrix.clone().lu().determinant().abs() < 1e-300 {
            return Err(Error::Contract("affine map matrix must be invertible".into()));
        }
        Ok(Self { matrix, shift })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(x) + &self.shift;
        v.iter().copied().collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Rescaling of a moment-curve arc `[a, a + delta^(1/(n+1))]` to unit scale.
///
/// Output coordinate `k` is `(sum_{j<=k} C(k,j) (-a)^(k-j) xi_j) / delta^(k/(n+1))`
/// with `xi_0 = 1` supplying the constant term, so for the moment curve the
/// map sends `Phi(a + s delta^(1/(n+1)))` to `Phi(s)` exactly.
pub fn curve_rescale(a: f64, delta: f64, n: usize) -> Result<AffineMap> {
    let root = delta.powf(1.0 / (n as f64 + 1.0));
    if !(0.0..=1.0).contains(&a) || a > 1.0 - root + 1e-12 {
        return Err(Error::Domain(format!("left endpoint {a} incompatible with delta = {delta:e}")));
    }
    let mut matrix = DMatrix::zeros(n, n);
    let mut shift = DVector::zeros(n);
    for k in 1..=n {
        let denom = root.powi(k as i32);
        shift[k - 1] = (-a).powi(k as i32) / denom;
        for j in 1..=k {
            matrix[(k - 1, j - 1)] = binomial(k, j) * (-a).powi((k - j) as i32) / denom;
        }
    }
    AffineMap::new(matrix, shift)
}

/// Parabolic rescaling sending the graph over the `sigma`-box at `c` onto the
/// graph over the unit box: base coordinates `(xi_i - c_i)/sigma`, last
/// coordinate `(xi_n - 2 sum v_i c_i xi_i + sum v_i c_i^2)/sigma^2`.
/// Points of the paraboloid map to points of the paraboloid exactly.
pub fn parabolic_rescale(s: &Signature, center: &[f64], sigma: f64) -> Result<AffineMap> {
    let d = s.base_dim();
    if center.len() != d {
        return Err(Error::Contract("cap center has wrong dimension".into()));
    }
    if center.iter().any(|c| c.abs() > 0.5) {
        return Err(Error::Domain("cap center outside the base box".into()));
    }
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Domain(format!("cap scale sigma = {sigma} outside (0, 1]")));
    }
    let n = d + 1;
    let mut matrix = DMatrix::zeros(n, n);
    let mut shift = DVector::zeros(n);
    for i in 0..d {
        matrix[(i, i)] = 1.0 / sigma;
        shift[i] = -center[i] / sigma;
    }
    let s2 = sigma * sigma;
    for i in 0..d {
        matrix[(d, i)] = -2.0 * s.entries()[i] * center[i] / s2;
    }
    matrix[(d, d)] = 1.0 / s2;
    shift[d] = s.quadratic(center) / s2;
    AffineMap::new(matrix, shift)
}
