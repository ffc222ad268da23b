//! Laurent symbols of banded Toeplitz operators and their characteristic roots.
//!
//! A single-band lattice with hoppings `t_l` (`-r <= l <= s`) has the symbol
//! `P(beta) = sum_l t_l beta^l`. Solving `P(beta) = E` for `beta` is the same as
//! finding the zeros of the degree-`(r + s)` polynomial `beta^r (P(beta) - E)`,
//! which is done here through the eigenvalues of its companion matrix.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Two moduli closer than this (relative) are treated as tied when ordering
/// roots; ties are then ordered by phase.
pub const MODULUS_TIE_REL: f64 = 1e-12;

/// Roots closer than this (relative to their size) are flagged as near-degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Laurent symbol `P(beta) = sum_{l=-r}^{s} t_l beta^l` of a single-band lattice.
///
/// `r` and `s` are tight: `t_{-r}` and `t_s` are nonzero, and both are at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentSymbol {
    // coeffs[l + r] = t_l
    coeffs: Vec<Complex64>,
    r: usize,
    s: usize,
}

impl LaurentSymbol {
    /// Builds a symbol from `(offset, amplitude)` pairs.
    ///
    /// Offsets may appear at most once. The smallest and largest offsets fix
    /// `-r` and `s`, and their amplitudes must be nonzero. Interior offsets that
    /// are not listed are zero.
    pub fn new<I>(hops: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i32, Complex64)>,
    {
        let mut hops: Vec<(i32, Complex64)> = hops.into_iter().collect();
        if hops.is_empty() {
            return Err(Error::InvalidSymbol("no hoppings given".into()));
        }
        hops.sort_by_key(|&(l, _)| l);
        for w in hops.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidSymbol(format!("offset {} listed twice", w[0].0)));
            }
        }
        for &(l, t) in &hops {
            if !(t.re.is_finite() && t.im.is_finite()) {
                return Err(Error::InvalidSymbol(format!("t_{l} is not finite")));
            }
        }
        let (lmin, tmin) = hops[0];
        let (lmax, tmax) = hops[hops.len() - 1];
        if lmin > -1 {
            return Err(Error::InvalidSymbol(format!(
                "need a left hop (r >= 1), smallest offset is {lmin}"
            )));
        }
        if lmax < 1 {
            return Err(Error::InvalidSymbol(format!(
                "need a right hop (s >= 1), largest offset is {lmax}"
            )));
        }
        if tmin == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidSymbol(format!("t_{lmin} = 0 at the declared left range")));
        }
        if tmax == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidSymbol(format!("t_{lmax} = 0 at the declared right range")));
        }
        let r = (-lmin) as usize;
        let s = lmax as usize;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); r + s + 1];
        for (l, t) in hops {
            coeffs[(l + r as i32) as usize] = t;
        }
        Ok(Self { coeffs, r, s })
    }

    /// Convenience constructor for real amplitudes.
    pub fn from_real(hops: &[(i32, f64)]) -> Result<Self> {
        Self::new(hops.iter().map(|&(l, t)| (l, Complex64::new(t, 0.0))))
    }

    /// Largest left-hop order.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Largest right-hop order.
    pub fn s(&self) -> usize {
        self.s
    }

    /// `t_l`, zero outside `[-r, s]`.
    pub fn coeff(&self, l: i32) -> Complex64 {
        let idx = l + self.r as i32;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[idx as usize]
        }
    }

    /// All `(l, t_l)` pairs in `[-r, s]`, including interior zeros.
    pub fn hops(&self) -> impl Iterator<Item = (i32, Complex64)> + '_ {
        let r = self.r as i32;
        self.coeffs.iter().enumerate().map(move |(i, &t)| (i as i32 - r, t))
    }

    /// Largest hopping magnitude.
    pub fn max_abs_hop(&self) -> f64 {
        self.coeffs.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    /// Sum of hopping magnitudes, an upper bound on `|P(beta)|` on the unit circle.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|t| t.norm()).sum()
    }

    /// `P(beta)`.
    pub fn eval(&self, beta: Complex64) -> Result<Complex64> {
        if beta == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroBeta);
        }
        // Horner on beta^r P(beta), then divide out beta^r.
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * beta + c;
        }
        Ok(acc / beta.powi(self.r as i32))
    }

    /// Coefficients of `beta^r (P(beta) - E)` in ascending powers of `beta`.
    pub fn char_poly(&self, energy: Complex64) -> Vec<Complex64> {
        let mut c = self.coeffs.clone();
        c[self.r] -= energy;
        c
    }

    /// All `r + s` roots of `P(beta) = E`, sorted by ascending modulus.
    pub fn char_roots(&self, energy: Complex64) -> Result<RootSet> {
        let poly = self.char_poly(energy);
        let mut roots = companion_roots(&poly, energy)?;
        for b in roots.iter_mut() {
            *b = polish_root(&poly, *b);
        }
        Ok(RootSet::new(roots, energy))
    }
}

/// Characteristic roots at a fixed energy, sorted by ascending modulus with
/// phase tie-breaking.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    pub roots: Vec<Complex64>,
    pub energy: Complex64,
    /// Some pair of roots lies closer than [`DEGENERACY_TOL`].
    pub near_degenerate: bool,
}

impl RootSet {
    pub fn new(mut roots: Vec<Complex64>, energy: Complex64) -> Self {
        sort_by_modulus(&mut roots);
        let near_degenerate = has_near_degenerate(&roots);
        Self {
            roots,
            energy,
            near_degenerate,
        }
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// The `index`-th root by ascending modulus, 1-based.
    pub fn modulus_rank(&self, index: usize) -> Result<Complex64> {
        if index == 0 || index > self.roots.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.roots.len(),
            });
        }
        Ok(self.roots[index - 1])
    }

    /// Number of roots strictly inside the circle of the given radius.
    pub fn count_inside(&self, radius: f64) -> usize {
        self.roots.iter().filter(|b| b.norm() < radius).count()
    }

    /// Distance of the root moduli from 1, minimized over roots.
    pub fn min_unit_distance(&self) -> f64 {
        self.roots
            .iter()
            .map(|b| (b.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn phase(b: &Complex64) -> f64 {
    let p = b.arg();
    if p < 0.0 {
        p + TAU
    } else {
        p
    }
}

/// Sorts by modulus; moduli equal up to [`MODULUS_TIE_REL`] are ordered by
/// phase in `[0, 2 pi)`.
pub fn sort_by_modulus(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(Ordering::Equal));
    let mut start = 0;
    while start < roots.len() {
        let mut end = start + 1;
        while end < roots.len() {
            let (m0, m1) = (roots[end - 1].norm(), roots[end].norm());
            if (m1 - m0) > MODULUS_TIE_REL * m1.max(f64::MIN_POSITIVE) {
                break;
            }
            end += 1;
        }
        if end - start > 1 {
            roots[start..end]
                .sort_by(|a, b| phase(a).partial_cmp(&phase(b)).unwrap_or(Ordering::Equal));
        }
        start = end;
    }
}

fn has_near_degenerate(roots: &[Complex64]) -> bool {
    for i in 0..roots.len() {
        for j in 0..i {
            let scale = roots[i].norm().max(roots[j].norm()).max(1.0);
            if (roots[i] - roots[j]).norm() < DEGENERACY_TOL * scale {
                return true;
            }
        }
    }
    false
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub(crate) fn eigenvalues(m: DMatrix<Complex64>, energy: Complex64) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000)
        .ok_or(Error::EigenSolver { energy })?;
    let (_, t) = schur.unpack();
    let ev: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    if ev.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::EigenSolver { energy });
    }
    Ok(ev)
}

/// Roots of `sum_j c_j beta^j` (ascending coefficients, nonzero leading term)
/// from the companion matrix of the monic form.
pub fn companion_roots(coeffs: &[Complex64], energy: Complex64) -> Result<Vec<Complex64>> {
    let d = coeffs.len() - 1;
    let lead = coeffs[d];
    if lead == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidSymbol("vanishing leading coefficient".into()));
    }
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for j in 0..d {
        m[(0, j)] = -coeffs[d - 1 - j] / lead;
    }
    for i in 1..d {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    eigenvalues(m, energy)
}

fn horner_with_derivative(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// A few guarded Newton steps; a step is kept only if it lowers the residual.
fn polish_root(coeffs: &[Complex64], mut x: Complex64) -> Complex64 {
    let (mut fx, mut dfx) = horner_with_derivative(coeffs, x);
    for _ in 0..3 {
        if dfx.norm() == 0.0 || fx.norm() == 0.0 {
            break;
        }
        let y = x - fx / dfx;
        let (fy, dfy) = horner_with_derivative(coeffs, y);
        if fy.norm() < fx.norm() {
            x = y;
            fx = fy;
            dfx = dfy;
        } else {
            break;
        }
    }
    x
}
