//! Spectral Schrödinger evolution with a signed (possibly irrational)
//! quadratic symbol, and space-time norm sweeps.
//!
//! The propagated sum is `sum_modes a(xi) e(x.xi + t sum_i v_i xi_i^2)` over
//! integer modes in the cutoff box.  Integer frequencies make every factor
//! 1-periodic in space, so spatial quadrature runs on the unit cell; the
//! signature magnitudes `|v_i|` are kept as the modeled torus periods.  Mass
//! conservation and the `p = 2` identities then hold to machine precision
//! for every signature, rational or not.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::decoupling::predicted_l2_exponent;
use crate::error::{Error, Result};
use crate::geometry::Signature;
use crate::sums::{eval_exp_sum, unit_phase, Atom, Field, FrequencySet, GridSpec, NdInverseDft};

/// Torus evolution setup: signature (phase coefficients) and frequency cutoff.
#[derive(Debug, Clone)]
pub struct TorusSpec {
    signature: Signature,
    cutoff: i64,
}

impl TorusSpec {
    pub fn new(signature: Signature, cutoff: i64) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::Contract("frequency cutoff must be >= 1".into()));
        }
        Ok(Self { signature, cutoff })
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn spatial_dim(&self) -> usize {
        self.signature.base_dim()
    }

    /// Periods `|v_i|` of the modeled spatial torus.
    pub fn periods(&self) -> Vec<f64> {
        self.signature.entries().iter().map(|v| v.abs()).collect()
    }

    /// Phase symbol `sum_i v_i xi_i^2` of a mode.
    pub fn phase_symbol(&self, mode: &[i64]) -> f64 {
        self.signature
            .entries()
            .iter()
            .zip(mode)
            .map(|(v, k)| v * (*k as f64) * (*k as f64))
            .sum()
    }
}

/// Fourier data: integer modes with complex coefficients.
#[derive(Debug, Clone)]
pub struct ModeSet {
    modes: Vec<(Vec<i64>, Complex64)>,
}

impl ModeSet {
    pub fn new(modes: Vec<(Vec<i64>, Complex64)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Contract("mode set needs at least one mode".into()));
        }
        let dim = modes[0].0.len();
        if modes.iter().any(|(m, a)| m.len() != dim || !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Contract("modes must share one dimension with finite coefficients".into()));
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[(Vec<i64>, Complex64)] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.modes[0].0.len()
    }

    /// `(sum |a|^2)^(1/2)`.
    pub fn l2_norm(&self) -> f64 {
        self.modes.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_support(spec: &TorusSpec, data: &ModeSet) -> Result<()> {
    if data.dim() != spec.spatial_dim() {
        return Err(Error::Contract(format!(
            "modes have dimension {}, spec expects {}",
            data.dim(),
            spec.spatial_dim()
        )));
    }
    for (m, _) in data.modes() {
        if m.iter().any(|k| k.abs() > spec.cutoff()) {
            return Err(Error::Domain(format!(
                "mode {m:?} outside the cutoff box [-{0}, {0}]",
                spec.cutoff()
            )));
        }
    }
    Ok(())
}

/// Samples of the evolution at time `t` on a spatial grid: coefficients are
/// phase-multiplied and handed to the exponential-sum engine (which takes
/// the lattice fast path when the grid is a full period cell).
pub fn evolve(spec: &TorusSpec, data: &ModeSet, t: f64, grid: &GridSpec) -> Result<Field> {
    check_support(spec, data)?;
    let atoms: Vec<Atom> = data
        .modes()
        .iter()
        .map(|(m, a)| {
            let xi: Vec<f64> = m.iter().map(|k| *k as f64).collect();
            Atom::new(xi, a * unit_phase(t * spec.phase_symbol(m)))
        })
        .collect();
    let set = FrequencySet::with_lattice(atoms, 1.0)?;
    eval_exp_sum(&set, grid)
}

/// Unit coefficients on the lattice points of a `d(v)`-dimensional flat
/// subspace of the graph, available when the signature entries all have
/// magnitude one and mixed signs.  Every selected mode has zero phase
/// symbol, so the evolution is stationary on this data.
pub fn subspace_initial_data(spec: &TorusSpec) -> Result<ModeSet> {
    let s = spec.signature();
    let d = s.hyperbolic_index();
    if d == 0 {
        return Err(Error::Unsupported(
            "signature has a definite sign, so the graph contains no flat subspace".into(),
        ));
    }
    if s.entries().iter().any(|v| (v.abs() - 1.0).abs() > 1e-12) {
        return Err(Error::Unsupported(
            "flat lattice data needs unit-magnitude entries in matched pairs; \
             rationally independent magnitudes admit no such lattice subspace"
                .into(),
        ));
    }
    let pos: Vec<usize> = (0..s.base_dim()).filter(|&i| s.entries()[i] > 0.0).collect();
    let neg: Vec<usize> = (0..s.base_dim()).filter(|&i| s.entries()[i] < 0.0).collect();
    let pairs: Vec<(usize, usize)> = pos.iter().zip(&neg).map(|(a, b)| (*a, *b)).collect();
    debug_assert_eq!(pairs.len(), d);

    let n = spec.cutoff();
    let side = (2 * n + 1) as usize;
    let total = side.pow(d as u32);
    let mut modes = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut mode = vec![0i64; s.base_dim()];
        for (i, j) in &pairs {
            let k = (rem % side) as i64 - n;
            rem /= side;
            mode[*i] = k;
            mode[*j] = k;
        }
        modes.push((mode, Complex64::new(1.0, 0.0)));
    }
    ModeSet::new(modes)
}

/// Exponent of the cutoff in the predicted space-time bound: substitute
/// `delta = N^-2` into the predicted `l^2` decoupling exponent.
pub fn predicted_strichartz_exponent(n: u32, p: f64, s: &Signature) -> Result<f64> {
    Ok(-2.0 * predicted_l2_exponent(n, p, s)?)
}

/// Sampling policy for space-time norms: per-axis initial resolutions are
/// doubled, one axis at a time, until no axis moves the reported norm by
/// more than `tol`; caps keep the refinement finite.
#[derive(Debug, Clone, Copy)]
pub struct SpaceTimeSampling {
    pub space_samples: usize,
    pub time_samples: usize,
    pub tol: f64,
    pub space_cap: usize,
    pub time_cap: usize,
    pub max_doublings: u32,
}

impl SpaceTimeSampling {
    /// Adaptive defaults for a given cutoff and exponent: start at
    /// `min(4N+4, 64)` per axis and let the halving rule drive each axis up
    /// independently.  For even integer `p` the space axis is capped at its
    /// Nyquist-exact resolution `pN + 2`, beyond which probing is pointless.
    pub fn defaults_for(cutoff: i64, p: f64) -> Self {
        let n = cutoff.max(1) as usize;
        let start = (4 * n + 4).min(64).max(16);
        let space_cap = match even_integer(p) {
            Some(pe) => (pe as usize * n + 2).max(start),
            None => (8 * n + 8).next_power_of_two().max(256),
        };
        Self {
            space_samples: start,
            time_samples: start,
            tol: 5e-3,
            space_cap,
            time_cap: (16 * n * n + 8).max(256),
            max_doublings: 48,
        }
    }

    /// Nyquist-exact sampling for even integer `p`: the integrand
    /// `|u|^p` is band-limited to `pN` per space axis and to
    /// `(p/2)(max symbol - min symbol)` in time, so midpoint quadrature just
    /// past those bands is exact and no refinement is needed.  Meets the
    /// `space >= 4N`, `time >= 4N^2` grid floors for `p >= 4` and unit-size
    /// symbols.
    pub fn nyquist_exact(
        spec: &TorusSpec,
        data: &ModeSet,
        p: f64,
        interval: f64,
    ) -> Result<Self> {
        let pe = even_integer(p).ok_or_else(|| {
            Error::Unsupported(format!("exact sampling needs an even integer p, got {p}"))
        })?;
        let n = spec.cutoff() as usize;
        let space = pe as usize * n + 2;
        let mut sig_min = f64::INFINITY;
        let mut sig_max = f64::NEG_INFINITY;
        for (m, _) in data.modes() {
            let s = spec.phase_symbol(m);
            sig_min = sig_min.min(s);
            sig_max = sig_max.max(s);
        }
        let band = 0.5 * pe as f64 * (sig_max - sig_min) * interval;
        let time = (band.ceil() as usize + 2).max(4);
        Ok(Self {
            space_samples: space,
            time_samples: time,
            tol: 5e-3,
            space_cap: space,
            time_cap: time,
            max_doublings: 0,
        })
    }
}

fn even_integer(p: f64) -> Option<u64> {
    let r = p.round();
    if (p - r).abs() < 1e-12 && r >= 2.0 && (r as u64) % 2 == 0 {
        Some(r as u64)
    } else {
        None
    }
}

/// Sampling policy for cutoff sweeps: Nyquist-exact quadrature whenever its
/// time grid stays within `exact_budget` slices, the adaptive halving rule
/// otherwise.
pub fn sweep_sampling(
    spec: &TorusSpec,
    data: &ModeSet,
    p: f64,
    interval: f64,
    exact_budget: usize,
) -> SpaceTimeSampling {
    if let Ok(exact) = SpaceTimeSampling::nyquist_exact(spec, data, p, interval) {
        if exact.time_samples <= exact_budget {
            return exact;
        }
    }
    SpaceTimeSampling::defaults_for(spec.cutoff(), p)
}

/// Result of one space-time norm measurement.
#[derive(Debug, Clone)]
pub struct StrichartzMeasurement {
    pub norm: f64,
    pub data_l2: f64,
    /// `norm / ||data||_2`, the quantity whose growth in the cutoff is fitted.
    pub ratio: f64,
    pub space_samples: usize,
    pub time_samples: usize,
}

/// Space-time `L^p` norm of the evolution over `[0, interval)` by midpoint
/// quadrature on the unit spatial cell, refined per the sampling policy.
/// Time slices are evaluated independently in parallel and reduced in slice
/// order, so results do not depend on the worker count.
pub fn strichartz_norm(
    spec: &TorusSpec,
    data: &ModeSet,
    p: f64,
    interval: f64,
    sampling: SpaceTimeSampling,
) -> Result<StrichartzMeasurement> {
    check_support(spec, data)?;
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p = {p} must be >= 1")));
    }
    if !(interval >= 1.0) {
        return Err(Error::Domain(format!("time interval {interval} must be >= 1")));
    }

    let mut m_space = sampling.space_samples.max(4);
    let mut m_time = sampling.time_samples.max(4);
    let mut norm = space_time_lp(spec, data, p, interval, m_space, m_time);
    let mut doublings = 0u32;
    loop {
        let mut moved = false;
        // Time axis first: it is the cheap direction to test at small space.
        if 2 * m_time <= sampling.time_cap {
            let candidate = space_time_lp(spec, data, p, interval, m_space, 2 * m_time);
            doublings += 1;
            if (candidate - norm).abs() > sampling.tol * norm {
                m_time *= 2;
                norm = candidate;
                moved = true;
            }
        }
        if 2 * m_space <= sampling.space_cap {
            let candidate = space_time_lp(spec, data, p, interval, 2 * m_space, m_time);
            doublings += 1;
            if (candidate - norm).abs() > sampling.tol * norm {
                m_space *= 2;
                norm = candidate;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        if doublings > sampling.max_doublings {
            return Err(Error::QuadratureDiverged(sampling.max_doublings as usize));
        }
    }

    let data_l2 = data.l2_norm();
    Ok(StrichartzMeasurement {
        norm,
        data_l2,
        ratio: norm / data_l2,
        space_samples: m_space,
        time_samples: m_time,
    })
}

/// One full space-time quadrature at fixed resolutions.
fn space_time_lp(
    spec: &TorusSpec,
    data: &ModeSet,
    p: f64,
    interval: f64,
    m_space: usize,
    m_time: usize,
) -> f64 {
    let sd = spec.spatial_dim();
    let dims = vec![m_space; sd];
    let total: usize = dims.iter().product();
    let h_s = 1.0 / m_space as f64;
    let x0 = 0.5 * h_s;
    let h_t = interval / m_time as f64;
    let fft = NdInverseDft::new(&dims);

    // Embedded index, static phase (coefficient times e(xi . x0)), and symbol.
    let embedded: Vec<(usize, Complex64, f64)> = data
        .modes()
        .iter()
        .map(|(m, a)| {
            let mut idx = 0usize;
            let mut dot = 0.0;
            for &k in m {
                idx = idx * m_space + k.rem_euclid(m_space as i64) as usize;
                dot += k as f64 * x0;
            }
            (idx, a * unit_phase(dot), spec.phase_symbol(m))
        })
        .collect();

    let cell = h_s.powi(sd as i32);
    let slice_sums: Vec<f64> = (0..m_time)
        .into_par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); total],
            |buf, j| {
                let t = (j as f64 + 0.5) * h_t;
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (idx, phase, sigma) in &embedded {
                    buf[*idx] += phase * unit_phase(t * sigma);
                }
                fft.process(buf);
                let sum: f64 = if p == 4.0 {
                    buf.iter().map(|z| { let s = z.norm_sqr(); s * s }).sum()
                } else if p == 2.0 {
                    buf.iter().map(|z| z.norm_sqr()).sum()
                } else if p == 6.0 {
                    buf.iter().map(|z| { let s = z.norm_sqr(); s * s * s }).sum()
                } else {
                    buf.iter().map(|z| z.norm_sqr().powf(0.5 * p)).sum()
                };
                sum * cell
            },
        )
        .collect();

    let mut acc = 0.0;
    for s in &slice_sums {
        acc += s;
    }
    (acc * h_t).powf(1.0 / p)
}
