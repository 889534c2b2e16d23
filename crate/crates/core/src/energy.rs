//! Additive `k`-energy counting: the number of `2k`-tuples whose first and
//! second halves have equal sums.
//!
//! Three routes compute the same number for integer atoms: a single-threaded
//! brute-force oracle (the trust anchor), a hashed multiset of `k`-fold sums
//! built by repeated pairwise merges, and an exact torus moment integral via
//! dense polynomial self-convolution.  All integer arithmetic is exact.

use std::collections::BTreeMap;

use num::{BigUint, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Enumeration guard for the brute-force oracle.
const ORACLE_BUDGET: f64 = 1e8;
/// Entry guard for hashed sum maps and convolution grids.
const MAP_BUDGET: f64 = 3e7;

fn check_atoms(atoms: &[Vec<i64>]) -> Result<usize> {
    if atoms.is_empty() {
        return Err(Error::Contract("energy needs at least one atom".into()));
    }
    let dim = atoms[0].len();
    if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
        return Err(Error::Contract("atoms must share one nonzero dimension".into()));
    }
    Ok(dim)
}

/// Exact `k`-energy by full enumeration of all `2k`-tuples.
/// Single-threaded trust anchor; refuses instances beyond `|atoms|^(2k) = 1e8`.
pub fn energy_bruteforce(atoms: &[Vec<i64>], k: u32) -> Result<u128> {
    let dim = check_atoms(atoms)?;
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let size = (atoms.len() as f64).powi(2 * k as i32);
    if size > ORACLE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "brute force would enumerate {size:e} tuples; use the hashed path"
        )));
    }
    let mut count = 0u128;
    let mut sum = vec![0i64; dim];
    enumerate(atoms, k, 0, &mut sum, &mut count);
    Ok(count)
}

fn enumerate(atoms: &[Vec<i64>], k: u32, depth: u32, sum: &mut [i64], count: &mut u128) {
    if depth == 2 * k {
        if sum.iter().all(|v| *v == 0) {
            *count += 1;
        }
        return;
    }
    let sign: i64 = if depth < k { 1 } else { -1 };
    for atom in atoms {
        for (s, a) in sum.iter_mut().zip(atom) {
            *s += sign * a;
        }
        enumerate(atoms, k, depth + 1, sum, count);
        for (s, a) in sum.iter_mut().zip(atom) {
            *s -= sign * a;
        }
    }
}

/// Multiset of `j`-fold ordered sums, keyed by the exact sum vector.
type SumMap = BTreeMap<Vec<i64>, u128>;

/// Merge a sum map with the atom list, sharded by leading key ranges; the
/// shard results are folded in order, so the outcome is deterministic and
/// independent of the worker count.
fn merge_with_atoms(map: &SumMap, atoms: &[Vec<i64>]) -> Result<SumMap> {
    let estimated = map.len() as f64 * atoms.len() as f64;
    if estimated > MAP_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "sum map would reach ~{estimated:e} entries"
        )));
    }
    let entries: Vec<(&Vec<i64>, &u128)> = map.iter().collect();
    let shard_size = (entries.len() / (4 * rayon::current_num_threads().max(1))).max(256);
    let shards: Vec<SumMap> = entries
        .par_chunks(shard_size)
        .map(|chunk| {
            let mut local = SumMap::new();
            for (key, mult) in chunk {
                for atom in atoms {
                    let sum: Vec<i64> = key.iter().zip(atom).map(|(a, b)| a + b).collect();
                    *local.entry(sum).or_insert(0) += **mult;
                }
            }
            local
        })
        .collect();
    let mut out = SumMap::new();
    for shard in shards {
        for (key, mult) in shard {
            *out.entry(key).or_insert(0) += mult;
        }
    }
    Ok(out)
}

fn k_fold_sums(atoms: &[Vec<i64>], k: u32) -> Result<SumMap> {
    let mut map = SumMap::new();
    for atom in atoms {
        *map.entry(atom.clone()).or_insert(0) += 1;
    }
    for _ in 1..k {
        map = merge_with_atoms(&map, atoms)?;
    }
    Ok(map)
}

/// Exact `k`-energy through the hashed multiset of `k`-fold sums:
/// the energy equals the sum of squared multiplicities.
pub fn energy_hashed(atoms: &[Vec<i64>], k: u32) -> Result<u128> {
    check_atoms(atoms)?;
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let map = k_fold_sums(atoms, k)?;
    Ok(map.values().map(|m| m * m).sum())
}

/// Result of counting with quantized real atoms.
#[derive(Debug, Clone, Copy)]
pub struct QuantizedEnergy {
    pub value: u128,
    /// Quantization scale used for the keys.
    pub quantization: f64,
    /// Largest per-coordinate rounding error over the atoms.
    pub max_rounding: f64,
}

/// `k`-energy of real atoms, quantized at `quantization` (default: one
/// hundredth of the minimal pairwise sup-distance).  Aborts with the
/// offending pair if two sums more than 3/4 of a cell apart land on one key.
pub fn energy_hashed_real(
    atoms: &[Vec<f64>],
    k: u32,
    quantization: Option<f64>,
) -> Result<QuantizedEnergy> {
    if atoms.is_empty() || atoms[0].is_empty() {
        return Err(Error::Contract("energy needs nonempty atoms".into()));
    }
    let dim = atoms[0].len();
    if atoms.iter().any(|a| a.len() != dim) {
        return Err(Error::Contract("atoms must share one dimension".into()));
    }
    let scale = match quantization {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::Contract(format!("quantization {s} must be positive"))),
        None => {
            let mut min_gap = f64::INFINITY;
            for i in 0..atoms.len() {
                for j in i + 1..atoms.len() {
                    let gap = atoms[i]
                        .iter()
                        .zip(&atoms[j])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap > 0.0 {
                        min_gap = min_gap.min(gap);
                    }
                }
            }
            if !min_gap.is_finite() {
                1e-9
            } else {
                min_gap / 100.0
            }
        }
    };

    let mut max_rounding = 0.0f64;
    let quantized: Vec<Vec<i64>> = atoms
        .iter()
        .map(|a| {
            a.iter()
                .map(|x| {
                    let q = (x / scale).round();
                    max_rounding = max_rounding.max((x - q * scale).abs());
                    q as i64
                })
                .collect()
        })
        .collect();

    // Build k-fold sums over quantized keys while tracking the true sums per
    // key; a key receiving two true sums further apart than 3/4 of a cell is
    // a collision and aborts the count.
    let mut map: BTreeMap<Vec<i64>, (u128, Vec<f64>)> = BTreeMap::new();
    for (qa, ta) in quantized.iter().zip(atoms) {
        audit_insert(&mut map, qa.clone(), ta.clone(), 1, scale)?;
    }
    let mut current = map;
    for _ in 1..k {
        let mut next: BTreeMap<Vec<i64>, (u128, Vec<f64>)> = BTreeMap::new();
        if current.len() as f64 * quantized.len() as f64 > MAP_BUDGET {
            return Err(Error::BudgetExceeded("quantized sum map too large".into()));
        }
        for (key, (mult, true_sum)) in &current {
            for (qa, ta) in quantized.iter().zip(atoms) {
                let nk: Vec<i64> = key.iter().zip(qa).map(|(a, b)| a + b).collect();
                let nt: Vec<f64> = true_sum.iter().zip(ta).map(|(a, b)| a + b).collect();
                audit_insert(&mut next, nk, nt, *mult, scale)?;
            }
        }
        current = next;
    }
    let value = current.values().map(|(m, _)| m * m).sum();
    Ok(QuantizedEnergy { value, quantization: scale, max_rounding })
}

fn audit_insert(
    map: &mut BTreeMap<Vec<i64>, (u128, Vec<f64>)>,
    key: Vec<i64>,
    true_sum: Vec<f64>,
    mult: u128,
    scale: f64,
) -> Result<()> {
    match map.entry(key) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert((mult, true_sum));
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            let (count, repr) = o.get_mut();
            let gap = repr
                .iter()
                .zip(&true_sum)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap > 0.75 * scale {
                return Err(Error::KeyCollision { a: repr.clone(), b: true_sum, scale });
            }
            *count += mult;
        }
    }
    Ok(())
}

/// Exact moment integral of the exponential sum over the torus:
/// the `2k`-th power integral equals the sum of squared coefficients of the
/// `k`-fold self-convolution of the atom indicator, all in integer
/// arithmetic (with a big-integer fallback on overflow).  Equals the
/// `k`-energy identically.
pub fn moment_integral_torus(atoms: &[Vec<i64>], k: u32) -> Result<u128> {
    let dim = check_atoms(atoms)?;
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for a in atoms {
        for d in 0..dim {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(a[d]);
        }
    }
    let kk = k as i64;
    let dims: Vec<usize> =
        (0..dim).map(|d| (kk * (hi[d] - lo[d]) + 1) as usize).collect();
    let cells: f64 = dims.iter().map(|&x| x as f64).product();
    if cells > MAP_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "convolution grid would need {cells:e} cells"
        )));
    }
    let total: usize = dims.iter().product();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * dims[d + 1];
        }
        s
    };
    // Atom offsets relative to the lower corner.
    let offsets: Vec<usize> = atoms
        .iter()
        .map(|a| (0..dim).map(|d| (a[d] - lo[d]) as usize * strides[d]).sum())
        .collect();

    match convolve_u128(total, &offsets, k) {
        Some(sum) => Ok(sum),
        None => {
            // Overflowed u128 somewhere: redo with big integers.
            let sum = convolve_big(total, &offsets, k);
            sum.to_u128()
                .ok_or_else(|| Error::BudgetExceeded("moment integral exceeds u128".into()))
        }
    }
}

fn convolve_u128(total: usize, offsets: &[usize], k: u32) -> Option<u128> {
    // The grid spans the full k-fold sum range per axis, so flat offsets add
    // without carrying between axes.
    let mut current = vec![0u128; total];
    for &off in offsets {
        current[off] = current[off].checked_add(1)?;
    }
    for _ in 1..k {
        let mut next = vec![0u128; total];
        for (idx, &mult) in current.iter().enumerate() {
            if mult == 0 {
                continue;
            }
            for &off in offsets {
                let slot = &mut next[idx + off];
                *slot = slot.checked_add(mult)?;
            }
        }
        current = next;
    }
    let mut sum = 0u128;
    for m in current {
        sum = sum.checked_add(m.checked_mul(m)?)?;
    }
    Some(sum)
}

fn convolve_big(total: usize, offsets: &[usize], k: u32) -> BigUint {
    let mut current = vec![BigUint::zero(); total];
    for &off in offsets {
        current[off] += 1u32;
    }
    for _ in 1..k {
        let mut next = vec![BigUint::zero(); total];
        for (idx, mult) in current.iter().enumerate() {
            if mult.is_zero() {
                continue;
            }
            for &off in offsets {
                next[idx + off] += mult;
            }
        }
        current = next;
    }
    current.iter().map(|m| m * m).sum()
}

/// Integer moment-curve points `(l, l^2, ..., l^n)` for `l = 1..=count`.
pub fn moment_curve_lattice(count: u64, dim: u32) -> Result<Vec<Vec<i64>>> {
    if count == 0 || dim == 0 {
        return Err(Error::Contract("need count >= 1 and dim >= 1".into()));
    }
    let mut atoms = Vec::with_capacity(count as usize);
    for l in 1..=count as i64 {
        let mut point = Vec::with_capacity(dim as usize);
        let mut power = 1i64;
        for _ in 0..dim {
            power = power.checked_mul(l).ok_or_else(|| {
                Error::BudgetExceeded(format!("moment coordinate {l}^{dim} overflows i64"))
            })?;
            point.push(power);
        }
        atoms.push(point);
    }
    Ok(atoms)
}

/// `k`-energy of the integer moment curve `{(l, ..., l^n) : l <= count}`,
/// via the hashed path with exact arithmetic.  The per-merge map guard in
/// the hashed path bounds the real memory use; this coarse pre-check only
/// rejects hopeless instances early.
pub fn vinogradov_energy(count: u64, dim: u32, k: u32) -> Result<u128> {
    let size = (count as f64).powi(k as i32);
    if size > 1e12 {
        return Err(Error::BudgetExceeded(format!(
            "Vinogradov instance would build ~{size:e} ordered sums"
        )));
    }
    energy_hashed(&moment_curve_lattice(count, dim)?, k)
}
