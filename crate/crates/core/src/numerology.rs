//! Exact computation of the explicit constants, critical indices, recursions,
//! and thresholds behind the measured exponents.  All closed forms use exact
//! rational arithmetic; only the deep-iteration evaluations drop to floating
//! point, and those are cross-checked against closed forms.

use num::rational::Ratio;
use num::{One, ToPrimitive, Zero};

use crate::decoupling::{fit_exponent, ExponentFit};
use crate::error::{Error, Result};
use crate::sums::{extension_resolution_hint, fold_rows_in, unit_ball_volume, Atom, GridSpec};

pub type Rational = Ratio<i64>;

/// Shorthand rational constructor.
pub fn q(num: i64, den: i64) -> Rational {
    Rational::new(num, den)
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Critical index `2(n+1)/(n-1)` of the elliptic theory.
pub fn critical_index(n: u32) -> Result<Rational> {
    if n < 2 {
        return Err(Error::Domain("need n >= 2".into()));
    }
    Ok(q(2 * (n as i64 + 1), n as i64 - 1))
}

/// Signed critical index `2(n+1-d)/(n-1-d)`.
pub fn critical_index_signed(n: u32, d: u32) -> Result<Rational> {
    if n < 2 || d as i64 >= n as i64 - 1 {
        return Err(Error::Domain(format!("need d < n - 1, got n = {n}, d = {d}")));
    }
    Ok(q(2 * (n as i64 + 1 - d as i64), n as i64 - 1 - d as i64))
}

/// The two bootstrap iteration rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationConstants {
    /// Exponent contraction rate `2 / ((p-2)(n-1))`; strictly below 1/2 for
    /// supercritical `p`.
    pub xi: Rational,
    /// Per-step loss `n(np - 2n - p - 2) / (2p(n-1)^2(p-2))`.
    pub eta: Rational,
}

pub fn iteration_constants(n: u32, p: Rational) -> Result<IterationConstants> {
    if n < 2 {
        return Err(Error::Domain("need n >= 2".into()));
    }
    let crit = critical_index(n)?;
    if p <= crit {
        return Err(Error::Domain(format!(
            "p = {p} must exceed the critical index {crit}"
        )));
    }
    let nn = rat(n as i64);
    let one = Rational::one();
    let xi = rat(2) / ((p - rat(2)) * (nn - one));
    assert!(xi < q(1, 2), "supercritical p must give xi < 1/2");
    let eta = nn * (nn * p - rat(2) * nn - p - rat(2))
        / (rat(2) * p * (nn - one) * (nn - one) * (p - rat(2)));
    Ok(IterationConstants { xi, eta })
}

/// Exponent of the base multilinear estimate:
/// `(n-1)/4 - (n^2+n)/(2p(n-1))`.
pub fn multilinear_base_exponent(n: u32, p: Rational) -> Result<Rational> {
    if n < 2 || p <= Rational::zero() {
        return Err(Error::Domain("need n >= 2 and p > 0".into()));
    }
    let nn = rat(n as i64);
    Ok((nn - rat(1)) / rat(4) - (nn * nn + nn) / (rat(2) * p * (nn - rat(1))))
}

/// Inputs for the bootstrap recursion.
#[derive(Debug, Clone)]
pub struct BootstrapParams {
    pub n: u32,
    pub p: Rational,
    pub constants: IterationConstants,
    /// Working decoupling exponent being bootstrapped against.
    pub gamma: f64,
    /// Base exponent, the s = 0 value of the recursion.
    pub psi_one: f64,
}

impl BootstrapParams {
    pub fn new(n: u32, p: Rational, gamma: f64) -> Result<Self> {
        let constants = iteration_constants(n, p)?;
        let psi_one = multilinear_base_exponent(n, p)?.to_f64().unwrap();
        Ok(Self { n, p, constants, gamma, psi_one })
    }
}

/// Recursive evaluation of the iterated exponent:
/// `psi(next) = psi(prev)/2 + (gamma/2)(1 - xi^(s+1)) + eta xi^s`.
pub fn psi_recursive(params: &BootstrapParams, s: u32) -> f64 {
    let xi = params.constants.xi.to_f64().unwrap();
    let eta = params.constants.eta.to_f64().unwrap();
    let mut psi = params.psi_one;
    let mut xi_pow = 1.0; // xi^s at step s
    for _ in 0..s {
        psi = 0.5 * psi + 0.5 * params.gamma * (1.0 - xi_pow * xi) + eta * xi_pow;
        xi_pow *= xi;
    }
    psi
}

/// Closed form of the same iteration:
/// `psi(s) = 2^-s psi(1) + gamma(1 - 2^-s) + 2(eta/xi - gamma/2)(2^-s - xi^s)/(1/xi - 2)`.
pub fn psi_closed_form(params: &BootstrapParams, s: u32) -> f64 {
    let xi = params.constants.xi.to_f64().unwrap();
    let eta = params.constants.eta.to_f64().unwrap();
    let half_pow = 0.5f64.powi(s as i32);
    let xi_pow = xi.powi(s as i32);
    half_pow * params.psi_one
        + params.gamma * (1.0 - half_pow)
        + 2.0 * (eta / xi - 0.5 * params.gamma) * (half_pow - xi_pow) / (1.0 / xi - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapVerdict {
    /// The strict inequality holds, ruling out the assumed excess alpha.
    Contradiction,
    /// No contradiction derivable at these parameters.
    Consistent,
}

/// Both sides of the bootstrap endgame comparison.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapComparison {
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: BootstrapVerdict,
}

/// Evaluates the endgame comparison for `gamma = (n-1)/4 - (n+1)/(2p) + alpha`:
///
/// `gamma ((1-xi) - xi(2xi)^s0)/(1-2xi)` against
/// `psi(1) + eps_nu + (2 eta/(1-2xi))(1-(2xi)^s0) + (n/((n-1)p))(2xi)^s0`.
///
/// `eps_nu` is the aggregate transversality loss, treated as an opaque input
/// that already includes any iteration amplification.  A verdict of
/// `Contradiction` means the assumed excess `alpha > 0` cannot stand.
pub fn bootstrap_consistency(
    n: u32,
    p: Rational,
    alpha: f64,
    s0: u32,
    eps_nu: f64,
) -> Result<BootstrapComparison> {
    let constants = iteration_constants(n, p)?;
    let xi = constants.xi.to_f64().unwrap();
    let eta = constants.eta.to_f64().unwrap();
    let psi_one = multilinear_base_exponent(n, p)?.to_f64().unwrap();
    let nf = n as f64;
    let pf = p.to_f64().unwrap();
    let gamma = (nf - 1.0) / 4.0 - (nf + 1.0) / (2.0 * pf) + alpha;
    let two_xi_pow = (2.0 * xi).powi(s0 as i32);
    let lhs = gamma * ((1.0 - xi) - xi * two_xi_pow) / (1.0 - 2.0 * xi);
    let rhs = psi_one
        + eps_nu
        + (2.0 * eta / (1.0 - 2.0 * xi)) * (1.0 - two_xi_pow)
        + nf / ((nf - 1.0) * pf) * two_xi_pow;
    let verdict =
        if lhs > rhs { BootstrapVerdict::Contradiction } else { BootstrapVerdict::Consistent };
    Ok(BootstrapComparison { lhs, rhs, verdict })
}

/// Interpolation weight `kappa_p` solving `n/p = (1-kappa)/2 + kappa/p`,
/// i.e. `(p - 2n)/(p - 2)`.
pub fn interpolation_weight(n: u32, p: Rational) -> Result<Rational> {
    if p == rat(2) {
        return Err(Error::Domain("kappa is undefined at p = 2".into()));
    }
    if p < rat(2) {
        return Err(Error::Domain("need p > 2".into()));
    }
    Ok((p - rat(2 * n as i64)) / (p - rat(2)))
}

/// Upper bound for the growth exponent of the curve decoupling constant:
/// `(p - 4n + 2)/(2n(p - 2n))` for `p > 4n - 2`, and 0 on `2n < p <= 4n - 2`
/// (the value of `(2 kappa - 1)/(2n kappa)` at `p = 4n - 2`).
pub fn growth_exponent_bound(n: u32, p: Rational) -> Result<Rational> {
    let two_n = rat(2 * n as i64);
    if p <= two_n {
        return Err(Error::Domain(format!("need p > 2n = {two_n}")));
    }
    let corner = rat(4 * n as i64 - 2);
    if p <= corner {
        return Ok(Rational::zero());
    }
    Ok((p - corner) / (rat(2 * n as i64) * (p - two_n)))
}

/// Finite-depth version of the same bound: the self-consistent value of the
/// growth exponent after `s` halving steps, with the tail modeled as
/// `c (1-kappa)^s`.  Tends to [`growth_exponent_bound`] as `s` grows, for
/// any `c`.
pub fn growth_bound_finite_iteration(n: u32, p: Rational, s: u32, c: f64) -> Result<f64> {
    let corner = rat(4 * n as i64 - 2);
    if p <= corner {
        return Err(Error::Domain("finite iteration needs p > 4n - 2".into()));
    }
    let kappa = interpolation_weight(n, p)?.to_f64().unwrap();
    let nf = n as f64;
    // Smallest j0 with 2^-j0 <= 1/n.
    let j0 = (nf.log2()).ceil().max(1.0) as i32;
    let s = s as i32;
    if s < j0 + 1 {
        return Err(Error::Domain("iteration depth too small for this dimension".into()));
    }
    let steps = s - j0 + 1;
    let decay = 1.0 - kappa;
    let a_s = (1.0 - decay.powi(steps))
        - kappa * nf * 0.5f64.powi(s) * (1.0 - (2.0 * decay).powi(steps)) / (2.0 * kappa - 1.0);
    let b_s = 0.5f64.powi(s + 1) + c * decay.powi(s);
    Ok(b_s / (1.0 - a_s))
}

/// Largest integer `l` with `1/(l+1) < alpha <= 1/l`, capped at `n` for
/// `alpha < 1/n`, together with the threshold `2(n-l)/alpha + l(l+1)` above
/// which no decoupling of that strength can hold.
pub fn no_decoupling_threshold(n: u32, alpha: Rational) -> Result<(u32, Rational)> {
    if alpha <= Rational::zero() || alpha > Rational::one() {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1]")));
    }
    let l = if alpha < q(1, n as i64) {
        n as i64
    } else {
        (Rational::one() / alpha).floor().to_integer()
    };
    let threshold = rat(2) * (rat(n as i64) - rat(l)) / alpha + rat(l * (l + 1));
    Ok((l as u32, threshold))
}

/// Exact branches of the predicted `l^2` decoupling exponent.
pub fn l2_branch_elliptic(n: u32, p: Rational) -> Rational {
    let nn = rat(n as i64);
    -(nn - rat(1)) / rat(4) + (nn + rat(1)) / (rat(2) * p)
}

pub fn l2_branch_subspace(d: u32, p: Rational) -> Rational {
    rat(d as i64) * (-q(1, 4) + Rational::one() / (rat(2) * p))
}

/// Piecewise `l^2` exponent with the regime change at the signed critical
/// index, in exact arithmetic.
pub fn l2_decoupling_exponent(n: u32, d: u32, p: Rational) -> Result<Rational> {
    if p < rat(2) {
        return Err(Error::Domain("need p >= 2".into()));
    }
    let crit = critical_index_signed(n, d)?;
    if p >= crit {
        Ok(l2_branch_elliptic(n, p))
    } else {
        Ok(l2_branch_subspace(d, p))
    }
}

/// Exact `l^p` exponent `n/p - (n-1)/2` for supercritical `p`.
pub fn lp_decoupling_exponent(n: u32, p: Rational) -> Result<Rational> {
    if p < critical_index(n)? {
        return Err(Error::Domain("p below the critical index; use the l^2 exponent".into()));
    }
    let nn = rat(n as i64);
    Ok(nn / p - (nn - rat(1)) / rat(2))
}

/// One row of the interpolation-failure measurement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WitnessRow {
    pub scale: u64,
    /// Normalized weighted `L^(3n)` norm of the geometric mean of the `n`
    /// transverse extension fields with unit density.
    pub lhs_norm: f64,
    /// Normalized weighted `L^6` norm of the full-interval extension field.
    pub cap_norm: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct InterpolationWitness {
    pub rows: Vec<WitnessRow>,
    pub lhs_fit: ExponentFit,
    pub cap_fit: ExponentFit,
}

/// Measures the two sides of the failed-interpolation example: the geometric
/// mean of `n` transverse unit-density extension fields in `L^(3n)` (which
/// stays above ~ `N^(-1/3)`) against the full-interval field in `L^6` (which
/// decays like ~ `N^(-4/9)`), both across a dyadic sweep of ball radii.
/// The gap between the fitted exponents is the reported witness.
pub fn interpolation_failure_witness(dim: u32, scales: &[u64]) -> Result<InterpolationWitness> {
    if dim < 3 {
        return Err(Error::Domain("the witness needs dimension >= 3".into()));
    }
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        if !scale.is_power_of_two() {
            return Err(Error::NonDyadicScale(scale as f64, "witness scales must be dyadic"));
        }
        let (lhs, cap) = witness_at_scale(dim as usize, scale)?;
        rows.push(WitnessRow { scale, lhs_norm: lhs, cap_norm: cap });
    }
    let lhs_fit =
        fit_exponent(&rows.iter().map(|r| (r.scale as f64, r.lhs_norm)).collect::<Vec<_>>())?;
    let cap_fit =
        fit_exponent(&rows.iter().map(|r| (r.scale as f64, r.cap_norm)).collect::<Vec<_>>())?;
    Ok(InterpolationWitness { rows, lhs_fit, cap_fit })
}

/// Pairwise nonadjacent dyadic intervals for the transverse family.
fn transverse_intervals(m: usize) -> Vec<(f64, f64)> {
    let mut k = 1usize;
    while (1usize << k) < 2 * m {
        k += 1;
    }
    let len = 1.0 / (1u64 << k) as f64;
    (0..m).map(|i| (2.0 * i as f64 * len, (2.0 * i as f64 + 1.0) * len)).collect()
}

fn moment_curve_atoms(interval: (f64, f64), dim: usize, cells: usize) -> Vec<Atom> {
    let (a, b) = interval;
    let dt = (b - a) / cells as f64;
    (0..cells)
        .map(|j| {
            let t = a + (j as f64 + 0.5) * dt;
            let xi: Vec<f64> = (1..=dim).map(|k| t.powi(k as i32)).collect();
            Atom::new(xi, num_complex::Complex64::new(dt, 0.0))
        })
        .collect()
}

/// One scale of the witness: streams the `n + 1` fields over the ball grid
/// and returns the two normalized weighted norms, refined until stable.
fn witness_at_scale(dim: usize, scale: u64) -> Result<(f64, f64)> {
    let radius = scale as f64;
    let m = ((2.0 * radius) / 0.25).round() as usize; // h = 1/4
    let grid = GridSpec::ball(vec![0.0; dim], radius, m)?;
    let base_cells = extension_resolution_hint(dim, radius) / 8;
    let mut cells = base_cells.max(32);
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..=4 {
        let value = witness_norms(dim, &grid, cells)?;
        if let Some((pl, pc)) = prev {
            if (value.0 - pl).abs() <= 5e-3 * value.0.abs()
                && (value.1 - pc).abs() <= 5e-3 * value.1.abs()
            {
                return Ok(value);
            }
        }
        prev = Some(value);
        cells *= 2;
    }
    Err(Error::QuadratureDiverged(4))
}

fn witness_norms(dim: usize, grid: &GridSpec, cells: usize) -> Result<(f64, f64)> {
    let intervals = transverse_intervals(dim);
    let mut groups: Vec<Vec<Atom>> = intervals
        .iter()
        .map(|iv| {
            let sub = ((iv.1 - iv.0) * cells as f64).ceil() as usize;
            moment_curve_atoms(*iv, dim, sub.max(8))
        })
        .collect();
    groups.push(moment_curve_atoms((0.0, 1.0), dim, cells));
    let group_refs: Vec<&[Atom]> = groups.iter().map(|g| g.as_slice()).collect();

    let p_lhs = 3.0 * dim as f64;
    let radius = grid.weight_radius();
    let d = grid.dim();
    let center = grid.center.clone();
    // Unit densities are real, so the fields satisfy F(-x) = conj(F(x)) and
    // their moduli are even: evaluate only the half grid x_0 > 0 and double.
    // Rows are indexed with axis 0 slowest, so that is the top half.
    let row_count = grid.total() / grid.samples[d - 1];
    let partials = fold_rows_in(&group_refs, grid, row_count / 2..row_count, |ctx, rows| {
        debug_assert!(ctx.x_prefix[0] > center[0]);
        let mut lhs = 0.0f64;
        let mut cap = 0.0f64;
        let pre_d2: f64 = ctx
            .x_prefix
            .iter()
            .zip(&center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        let full = &rows[rows.len() - 1];
        for j in 0..ctx.x_last.len() {
            let dx = ctx.x_last[j] - center[d - 1];
            let dist = (pre_d2 + dx * dx).sqrt();
            // Clipped weight: 1 on the ball, polynomial decay outside, the
            // same normalization the decoupling denominators use.
            let w = if dist <= radius {
                1.0
            } else {
                (dist / radius).powi(-10 * d as i32)
            };
            let mut geo = 1.0f64;
            for row in &rows[..rows.len() - 1] {
                geo *= row[j].norm_sqr();
            }
            lhs += geo.powf(0.5 * p_lhs / dim as f64) * w;
            cap += full[j].norm_sqr().powi(3) * w;
        }
        (2.0 * lhs, 2.0 * cap)
    });

    let mut lhs_sum = 0.0;
    let mut cap_sum = 0.0;
    for (l, c) in &partials {
        lhs_sum += l;
        cap_sum += c;
    }
    let measure = grid.cell_measure();
    let volume = unit_ball_volume(d) * radius.powi(d as i32);
    let lhs = (lhs_sum * measure / volume).powf(1.0 / p_lhs);
    let cap = (cap_sum * measure / volume).powf(1.0 / 6.0);
    Ok((lhs, cap))
}
