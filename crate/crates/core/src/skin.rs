//! Left-edge skin eigenstates of the semi-infinite lattice.
//!
//! At an energy with `W(E0) < 0` the decaying solutions `beta^{-n} v` of the
//! bulk equation (roots with `|beta| > 1`) outnumber the boundary conditions
//! by `|W|`. A skin mode is a combination that vanishes on the `s` virtual
//! sites `0, -1, ..., 1 - s` to the left of the edge.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlochModel, TruncatedHamiltonian};
use crate::spectra::winding_roots;

/// Singular values below this fraction of the largest span the nullspace.
pub const NULLSPACE_REL_TOL: f64 = 1e-10;

/// Block nullvectors are rejected when the second-smallest singular value of
/// `H(beta) - E0` falls below this fraction of the largest.
pub const NULLVECTOR_GAP_TOL: f64 = 1e-6;

/// Normalization convention carried by every mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Unit Euclidean norm over the sampled sites, first significant
    /// amplitude real and positive.
    UnitNormFirstRealPositive,
}

/// Amplitudes below this magnitude are skipped when fixing the phase.
const PHASE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SkinMode {
    pub energy: Complex64,
    pub winding: i32,
    /// Roots with `|beta| > 1`, ascending modulus.
    pub roots_used: Vec<Complex64>,
    /// Per-root band vectors (length `bands`, unit norm).
    pub vectors: Vec<Vec<Complex64>>,
    pub coefficients: Vec<Complex64>,
    pub n_sites: usize,
    pub bands: usize,
    /// State vector on sites `1..=n_sites`, index `(n - 1) * bands + band`.
    pub amplitudes: Vec<Complex64>,
    pub normalization: Normalization,
}

impl SkinMode {
    /// Amplitude at site `n` (1-based) and `band`, from the closed form.
    pub fn amplitude(&self, n: usize, band: usize) -> Complex64 {
        evaluate(&self.roots_used, &self.vectors, &self.coefficients, n, band)
    }

    /// Smallest outer-root modulus; `|psi_{n+1}| / |psi_n| -> 1 / min_modulus`.
    pub fn min_root_modulus(&self) -> f64 {
        self.roots_used.iter().map(|b| b.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Euclidean norm of the band components at site `n` (1-based).
    pub fn site_norm(&self, n: usize) -> f64 {
        let b = self.bands;
        self.amplitudes[(n - 1) * b..n * b]
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn evaluate(
    roots: &[Complex64],
    vectors: &[Vec<Complex64>],
    coefficients: &[Complex64],
    n: usize,
    band: usize,
) -> Complex64 {
    let nf = n as f64;
    roots
        .iter()
        .zip(vectors)
        .zip(coefficients)
        .map(|((beta, v), c)| c * v[band] * (-nf * beta.ln()).exp())
        .sum()
}

/// Unit vector spanning the nullspace of `H(beta) - E0`.
fn band_nullvector<M: BlochModel + ?Sized>(model: &M, beta: Complex64, e0: Complex64) -> Result<Vec<Complex64>> {
    let b = model.bands();
    if b == 1 {
        return Ok(vec![Complex64::new(1.0, 0.0)]);
    }
    let mut h = model.bloch_matrix(beta)?;
    for i in 0..b {
        h[(i, i)] -= e0;
    }
    let svd = h.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let smax = svd.singular_values[order[b - 1]];
    let second = svd.singular_values[order[1]];
    if second < NULLVECTOR_GAP_TOL * smax {
        return Err(Error::Degenerate(format!(
            "H(beta) - E0 has a multi-dimensional nullspace at beta = {beta} (sigma_2 / sigma_max = {:.3e})",
            second / smax
        )));
    }
    let row = v_t.row(order[0]);
    Ok(row.iter().map(|z| z.conj()).collect())
}

/// All `|W(E0)|` skin modes at `e0`, sampled on `n_sites` sites and
/// orthonormalized over them.
pub fn build_skin_modes<M: BlochModel + ?Sized>(model: &M, e0: Complex64, n_sites: usize) -> Result<Vec<SkinMode>> {
    if n_sites == 0 {
        return Err(Error::InvalidArgument("need at least one site".into()));
    }
    let winding = winding_roots(model, e0)?;
    if winding >= 0 {
        return Err(Error::NotSkinEnergy { energy: e0, winding });
    }
    let b = model.bands();
    let s = model.right_range();
    let rs = model.char_roots(e0)?;
    let outer: Vec<Complex64> = rs.roots.iter().copied().filter(|x| x.norm() > 1.0).collect();
    let expected = (b * s) as i64 - winding as i64;
    if outer.len() as i64 != expected {
        return Err(Error::Degenerate(format!(
            "found {} decaying roots, expected {expected}",
            outer.len()
        )));
    }
    for i in 0..outer.len() {
        for j in 0..i {
            let scale = outer[i].norm().max(outer[j].norm());
            if (outer[i] - outer[j]).norm() < crate::laurent::DEGENERACY_TOL * scale {
                return Err(Error::Degenerate(format!("repeated decaying root near {}", outer[i])));
            }
        }
    }
    let vectors: Vec<Vec<Complex64>> = outer
        .iter()
        .map(|&beta| band_nullvector(model, beta, e0))
        .collect::<Result<_>>()?;

    // constraint rows: sum_i c_i v_i[a] beta_i^j = 0, j = 0..s-1, a = 0..b-1,
    // zero-padded to a square matrix so the SVD returns a full right basis
    let k = outer.len();
    let rows = b * s;
    let mut cm = DMatrix::<Complex64>::zeros(k.max(rows), k);
    for j in 0..s {
        for a in 0..b {
            for (i, beta) in outer.iter().enumerate() {
                cm[(j * b + a, i)] = vectors[i][a] * beta.powi(j as i32);
            }
        }
    }
    let svd = cm.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<Vec<Complex64>> = (0..k)
        .filter(|&i| svd.singular_values[i] < NULLSPACE_REL_TOL * smax)
        .map(|i| v_t.row(i).iter().map(|z| z.conj()).collect())
        .collect();
    if null.len() != winding.unsigned_abs() as usize {
        return Err(Error::Degenerate(format!(
            "constraint nullspace has dimension {}, expected |W| = {}",
            null.len(),
            winding.unsigned_abs()
        )));
    }

    let sample = |coeffs: &[Complex64]| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(n_sites * b);
        for n in 1..=n_sites {
            for a in 0..b {
                out.push(evaluate(&outer, &vectors, coeffs, n, a));
            }
        }
        out
    };
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(a, b)| a.conj() * b).sum() };

    // Gram-Schmidt in the sampled inner product, carrying coefficients along
    let mut modes: Vec<(Vec<Complex64>, Vec<Complex64>)> = Vec::new();
    for c in null {
        let mut coeffs = c;
        let mut amp = sample(&coeffs);
        for (qc, qa) in &modes {
            let p = dot(qa, &amp);
            for (x, y) in coeffs.iter_mut().zip(qc) {
                *x -= p * y;
            }
            for (x, y) in amp.iter_mut().zip(qa) {
                *x -= p * y;
            }
        }
        let norm = dot(&amp, &amp).re.sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("skin mode vanishes on the sampled sites".into()));
        }
        let anchor = amp
            .iter()
            .find(|z| z.norm() > PHASE_FLOOR * norm)
            .copied()
            .unwrap_or(Complex64::new(norm, 0.0));
        let scale = anchor.norm() / (anchor * norm);
        coeffs.iter_mut().for_each(|x| *x *= scale);
        amp.iter_mut().for_each(|x| *x *= scale);
        modes.push((coeffs, amp));
    }
    Ok(modes
        .into_iter()
        .map(|(coefficients, amplitudes)| SkinMode {
            energy: e0,
            winding,
            roots_used: outer.clone(),
            vectors: vectors.clone(),
            coefficients,
            n_sites,
            bands: b,
            amplitudes,
            normalization: Normalization::UnitNormFirstRealPositive,
        })
        .collect())
}

/// The first skin mode at `e0` (the only one when `W(E0) = -1`).
pub fn build_skin_mode<M: BlochModel + ?Sized>(model: &M, e0: Complex64, n_sites: usize) -> Result<SkinMode> {
    Ok(build_skin_modes(model, e0, n_sites)?.swap_remove(0))
}

/// Sites `1..=N - max(r, s)`: every row of the open truncation that does not
/// touch the cut right edge.
pub fn interior_window(h: &TruncatedHamiltonian) -> RangeInclusive<usize> {
    1..=h.sites() - h.max_range()
}

/// `||(H psi - E0 psi)|_window|| / ||psi|_window||` on the sites of `window`
/// (1-based, inclusive).
pub fn eigen_residual(
    h: &TruncatedHamiltonian,
    psi: &[Complex64],
    e0: Complex64,
    window: RangeInclusive<usize>,
) -> Result<f64> {
    if window.is_empty() || *window.start() == 0 || *window.end() > h.sites() {
        return Err(Error::InvalidArgument(format!(
            "residual window {window:?} not inside 1..={}",
            h.sites()
        )));
    }
    if psi.len() != h.dim() {
        return Err(Error::InvalidArgument(format!(
            "state length {} does not match dimension {}",
            psi.len(),
            h.dim()
        )));
    }
    let b = h.bands();
    let mut y = vec![Complex64::new(0.0, 0.0); h.dim()];
    h.apply(psi, &mut y);
    let lo = (window.start() - 1) * b;
    let hi = window.end() * b;
    let num: f64 = (lo..hi).map(|i| (y[i] - e0 * psi[i]).norm_sqr()).sum();
    let den: f64 = (lo..hi).map(|i| psi[i].norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("state vanishes on the residual window".into()));
    }
    Ok((num / den).sqrt())
}

/// Residual of a mode on its own sampled lattice, interior window.
pub fn mode_residual(h: &TruncatedHamiltonian, mode: &SkinMode) -> Result<f64> {
    eigen_residual(h, &mode.amplitudes, mode.energy, interior_window(h))
}

/// Least-squares slope of `ln |psi_n|` (site norm) against `n` over `sites`.
pub fn log_decay_slope(mode: &SkinMode, sites: RangeInclusive<usize>) -> f64 {
    let pts: Vec<(f64, f64)> = sites.map(|n| (n as f64, mode.site_norm(n).ln())).collect();
    crate::evolution::least_squares_slope(&pts)
}
