//! Spectra under periodic, open and semi-infinite boundary conditions.
//!
//! * The PBC spectrum is the image of the unit circle under the Bloch matrix.
//! * The point-gap winding number `W(E)` is computed twice: by counting
//!   characteristic roots inside the unit circle (argument principle) and by
//!   integrating the phase of `det(H(e^{ik}) - E)` around the Brillouin zone.
//! * The OBC spectrum and the generalized Brillouin zone are found on a grid in
//!   the complex energy plane as the locus where the `M`-th and `(M+1)`-th
//!   roots by modulus are tied, `M` being the pole order of the characteristic
//!   determinant.
//! * The self-healing threshold `E_m = max(E_m1, E_m2)` is assembled from the
//!   GBZ energies and the positive-winding region.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{eigenvalues, RootSet};
use crate::model::BlochModel;

/// A root modulus within this distance of 1 puts `E` on the PBC loop.
pub const ON_LOOP_TOL: f64 = 1e-8;

/// `|Im(E0) - E_m|` below this makes a self-healing prediction indeterminate.
/// It reflects the sampling resolution of `E_m1` on the default grid.
pub const VERDICT_TOL: f64 = 1e-3;

/// Relative modulus gap accepted for an emitted GBZ pair.
pub const GBZ_TIE_TOL: f64 = 1e-6;

/// One sample of the PBC spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbcSample {
    pub k: f64,
    pub energy: Complex64,
    pub band: usize,
}

/// PBC spectrum sampled on a uniform `k` mesh, grouped by tracked band.
#[derive(Debug, Clone, PartialEq)]
pub struct PbcLoop {
    pub bands: usize,
    pub k_samples: usize,
    /// Ordered by band, then by `k`.
    pub samples: Vec<PbcSample>,
}

impl PbcLoop {
    /// Energies of one tracked band in `k` order.
    pub fn band(&self, band: usize) -> Vec<Complex64> {
        self.samples
            .iter()
            .filter(|p| p.band == band)
            .map(|p| p.energy)
            .collect()
    }

    /// `(re_min, re_max, im_min, im_max)` over all samples.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.samples {
            bb.0 = bb.0.min(p.energy.re);
            bb.1 = bb.1.max(p.energy.re);
            bb.2 = bb.2.min(p.energy.im);
            bb.3 = bb.3.max(p.energy.im);
        }
        bb
    }

    /// Smallest distance from `e` to the sampled loop (polyline segments).
    pub fn distance_to(&self, e: Complex64) -> f64 {
        let mut best = f64::INFINITY;
        for b in 0..self.bands {
            let pts = self.band(b);
            for i in 0..pts.len() {
                let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
                best = best.min(point_segment_distance(e, p, q));
            }
        }
        best
    }
}

fn point_segment_distance(e: Complex64, p: Complex64, q: Complex64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (e - p).norm();
    }
    let t = (((e - p) * d.conj()).re / len2).clamp(0.0, 1.0);
    (e - (p + d * t)).norm()
}

/// Permutation `perm` minimizing `max_i |prev[i] - cur[perm[i]]|` (brute force,
/// fine for the handful of bands used here).
fn best_permutation(prev: &[Complex64], cur: &[Complex64]) -> Vec<usize> {
    fn rec(
        i: usize,
        prev: &[Complex64],
        cur: &[Complex64],
        used: &mut Vec<bool>,
        perm: &mut Vec<usize>,
        cost: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if cost >= best.0 {
            return;
        }
        if i == prev.len() {
            *best = (cost, perm.clone());
            return;
        }
        for j in 0..cur.len() {
            if !used[j] {
                used[j] = true;
                perm.push(j);
                rec(i + 1, prev, cur, used, perm, cost + (prev[i] - cur[j]).norm_sqr(), best);
                perm.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, (0..cur.len()).collect());
    rec(0, prev, cur, &mut vec![false; cur.len()], &mut Vec::new(), 0.0, &mut best);
    best.1
}

fn bloch_eigenvalues<M: BlochModel + ?Sized>(model: &M, k: f64) -> Result<Vec<Complex64>> {
    let h = model.bloch_matrix(Complex64::from_polar(1.0, k))?;
    eigenvalues(h, Complex64::new(0.0, 0.0))
}

/// PBC spectrum on `k_samples` uniformly spaced `k` in `[-pi, pi)`. For
/// multiband models the eigenvalue branches are tracked by continuity.
pub fn pbc_spectrum<M: BlochModel + ?Sized>(model: &M, k_samples: usize) -> Result<PbcLoop> {
    if k_samples < 64 {
        return Err(Error::InvalidArgument(format!("need K >= 64, got {k_samples}")));
    }
    let b = model.bands();
    let mut tracks: Vec<Vec<(f64, Complex64)>> = vec![Vec::with_capacity(k_samples); b];
    let mut prev: Option<Vec<Complex64>> = None;
    for j in 0..k_samples {
        let k = -PI + TAU * j as f64 / k_samples as f64;
        let mut ev = bloch_eigenvalues(model, k)?;
        if let Some(p) = &prev {
            let perm = best_permutation(p, &ev);
            ev = perm.iter().map(|&i| ev[i]).collect();
        } else {
            ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
        }
        for (band, e) in ev.iter().enumerate() {
            tracks[band].push((k, *e));
        }
        prev = Some(ev);
    }
    let samples = tracks
        .into_iter()
        .enumerate()
        .flat_map(|(band, t)| t.into_iter().map(move |(k, energy)| PbcSample { k, energy, band }))
        .collect();
    Ok(PbcLoop {
        bands: b,
        k_samples,
        samples,
    })
}

/// Number of proper crossings between non-adjacent segments of a closed polyline.
pub fn count_self_intersections(points: &[Complex64]) -> usize {
    fn cross(a: Complex64, b: Complex64) -> f64 {
        a.re * b.im - a.im * b.re
    }
    let n = points.len();
    let mut count = 0;
    for i in 0..n {
        let (p1, p2) = (points[i], points[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (q1, q2) = (points[j], points[(j + 1) % n]);
            let d1 = cross(p2 - p1, q1 - p1);
            let d2 = cross(p2 - p1, q2 - p1);
            let d3 = cross(q2 - q1, p1 - q1);
            let d4 = cross(q2 - q1, p2 - q1);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                count += 1;
            }
        }
    }
    count
}

fn winding_from_roots<M: BlochModel + ?Sized>(model: &M, rs: &RootSet) -> Result<i32> {
    let d = rs.min_unit_distance();
    if d < ON_LOOP_TOL {
        let modulus = rs
            .roots
            .iter()
            .map(|b| b.norm())
            .min_by(|a, b| (a - 1.0).abs().partial_cmp(&(b - 1.0).abs()).unwrap())
            .unwrap_or(1.0);
        return Err(Error::OnPbcLoop {
            energy: rs.energy,
            modulus,
            tol: ON_LOOP_TOL,
        });
    }
    Ok(rs.count_inside(1.0) as i32 - model.pole_order() as i32)
}

/// `W(E)` by the argument principle: roots inside the unit circle minus the
/// pole order of `det(H(beta) - E)` at the origin.
pub fn winding_roots<M: BlochModel + ?Sized>(model: &M, energy: Complex64) -> Result<i32> {
    let rs = model.char_roots(energy)?;
    winding_from_roots(model, &rs)
}

/// `W(E)` by unwrapping the phase of `det(H(e^{ik}) - E)` over `k` in
/// `[-pi, pi]`. Steps whose phase jump exceeds `pi/2` are subdivided.
pub fn winding_integral<M: BlochModel + ?Sized>(model: &M, energy: Complex64, k_steps: usize) -> Result<i32> {
    if k_steps < 256 {
        return Err(Error::InvalidArgument(format!("need K >= 256, got {k_steps}")));
    }
    const MAX_DEPTH: u32 = 40;
    let det = |k: f64| -> Result<Complex64> {
        let d = model.char_det(Complex64::from_polar(1.0, k), energy)?;
        if d.norm() == 0.0 {
            return Err(Error::OnPbcLoop {
                energy,
                modulus: 1.0,
                tol: 0.0,
            });
        }
        Ok(d)
    };
    fn segment(
        det: &dyn Fn(f64) -> Result<Complex64>,
        ka: f64,
        da: Complex64,
        kb: f64,
        db: Complex64,
        depth: u32,
        energy: Complex64,
        k_steps: usize,
    ) -> Result<f64> {
        let step = (db / da).arg();
        if step.abs() <= PI / 2.0 {
            return Ok(step);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::RefineK { energy, k: k_steps });
        }
        let km = 0.5 * (ka + kb);
        let dm = det(km)?;
        Ok(segment(det, ka, da, km, dm, depth + 1, energy, k_steps)?
            + segment(det, km, dm, kb, db, depth + 1, energy, k_steps)?)
    }
    let mut total = 0.0;
    let mut ka = -PI;
    let mut da = det(ka)?;
    let d_start = da;
    for j in 1..=k_steps {
        let kb = -PI + TAU * j as f64 / k_steps as f64;
        let db = if j == k_steps { d_start } else { det(kb)? };
        total += segment(&det, ka, da, kb, db, 0, energy, k_steps)?;
        ka = kb;
        da = db;
    }
    let w = total / TAU;
    let rounded = w.round();
    let residual = (w - rounded).abs();
    if residual > 0.05 {
        return Err(Error::NonIntegerWinding { energy, residual });
    }
    Ok(rounded as i32)
}

/// Rectangular grid of cells in the complex energy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// Cells along the real axis.
    pub nx: usize,
    /// Cells along the imaginary axis.
    pub ny: usize,
}

impl ScanGrid {
    pub const DEFAULT_CELLS: usize = 400;

    /// Bounding box of the PBC loop, half-widths inflated by 10%.
    pub fn around_loop(pbc: &PbcLoop, cells: usize) -> Self {
        let (x0, x1, y0, y1) = pbc.bounding_box();
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let mut hx = 0.5 * (x1 - x0);
        let mut hy = 0.5 * (y1 - y0);
        if hx <= 0.0 && hy <= 0.0 {
            hx = 1.0;
            hy = 1.0;
        }
        if hy <= 1e-3 * hx {
            hy = 0.1 * hx;
        }
        if hx <= 1e-3 * hy {
            hx = 0.1 * hy;
        }
        hx *= 1.1;
        hy *= 1.1;
        Self {
            re_min: cx - hx,
            re_max: cx + hx,
            im_min: cy - hy,
            im_max: cy + hy,
            nx: cells,
            ny: cells,
        }
    }

    /// Default scan grid for a model: 400 x 400 cells around its PBC loop.
    pub fn default_for<M: BlochModel + ?Sized>(model: &M) -> Result<Self> {
        Ok(Self::around_loop(&pbc_spectrum(model, 1024)?, Self::DEFAULT_CELLS))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.re_min.is_finite()
            && self.re_max.is_finite()
            && self.im_min.is_finite()
            && self.im_max.is_finite()
            && self.re_max > self.re_min
            && self.im_max > self.im_min
            && self.nx >= 1
            && self.ny >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("degenerate scan grid {self:?}")))
        }
    }

    /// Node `(i, j)`, `0 <= i <= nx`, `0 <= j <= ny`.
    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(
            self.re_min + (self.re_max - self.re_min) * i as f64 / self.nx as f64,
            self.im_min + (self.im_max - self.im_min) * j as f64 / self.ny as f64,
        )
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Row-major node index (rows are lines of constant `Im E`).
    fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
}

/// Root identities continued from `ea` to `eb`, in the order of `ra`.
fn continue_roots<M: BlochModel + ?Sized>(
    model: &M,
    ea: Complex64,
    ra: &[Complex64],
    eb: Complex64,
    rb: Option<&[Complex64]>,
    depth: u32,
) -> Result<Vec<Complex64>> {
    let owned;
    let rb = match rb {
        Some(r) => r,
        None => {
            owned = model.char_roots(eb)?.roots;
            &owned
        }
    };
    let n = ra.len();
    let min_sep = |r: &[Complex64]| {
        let mut m = f64::INFINITY;
        for i in 0..r.len() {
            for j in 0..i {
                m = m.min((r[i] - r[j]).norm());
            }
        }
        m
    };
    let mut assign = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut displacement: f64 = 0.0;
    let mut unique = true;
    for i in 0..n {
        let (j, d) = rb
            .iter()
            .enumerate()
            .map(|(j, b)| (j, (ra[i] - b).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if used[j] {
            unique = false;
        }
        used[j] = true;
        assign[i] = j;
        displacement = displacement.max(d);
    }
    let sep = min_sep(ra).min(min_sep(rb));
    if unique && displacement < 0.25 * sep {
        return Ok(assign.iter().map(|&j| rb[j]).collect());
    }
    if depth >= 30 {
        // unresolved branch point: fall back to the optimal assignment
        let perm = best_permutation(ra, rb);
        return Ok(perm.iter().map(|&j| rb[j]).collect());
    }
    let em = 0.5 * (ea + eb);
    let rm = continue_roots(model, ea, ra, em, None, depth + 1)?;
    continue_roots(model, em, &rm, eb, Some(rb), depth + 1)
}

/// Signed gap: outermost root of the original inner set minus innermost of
/// the original outer set. Negative before a GBZ crossing, positive after.
fn signed_gap(tracked: &[Complex64], m: usize) -> f64 {
    let inner = tracked[..m].iter().map(|b| b.norm()).fold(0.0, f64::max);
    let outer = tracked[m..].iter().map(|b| b.norm()).fold(f64::INFINITY, f64::min);
    inner - outer
}

/// A GBZ sample: `beta` on the GBZ and its OBC energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbzPoint {
    pub beta: Complex64,
    pub energy: Complex64,
}

/// Generalized Brillouin zone sampled where grid edges cross the OBC arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct GbzSet {
    pub points: Vec<GbzPoint>,
    pub grid: ScanGrid,
    pub tol: f64,
    /// Grid edges on which a crossing was located.
    pub crossings: usize,
    /// Crossings dropped because the refined pair failed the tie check.
    pub rejected: usize,
}

impl GbzSet {
    /// OBC spectrum: one energy per located crossing.
    pub fn obc_energies(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::with_capacity(self.points.len() / 2);
        for p in &self.points {
            if out.last() != Some(&p.energy) {
                out.push(p.energy);
            }
        }
        out
    }

    pub fn min_beta_modulus(&self) -> f64 {
        self.points.iter().map(|p| p.beta.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_beta_modulus(&self) -> f64 {
        self.points.iter().map(|p| p.beta.norm()).fold(0.0, f64::max)
    }

    /// Largest imaginary part over the OBC energies.
    pub fn max_im_energy(&self) -> f64 {
        self.points.iter().map(|p| p.energy.im).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn roots_on_grid<M: BlochModel + ?Sized>(model: &M, grid: &ScanGrid) -> Result<Vec<Vec<Complex64>>> {
    (0..grid.node_count())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % (grid.nx + 1), idx / (grid.nx + 1));
            model.char_roots(grid.node(i, j)).map(|r| r.roots)
        })
        .collect()
}

/// Locates the crossing on the edge `ea -> eb` (if any) to tolerance `tol`.
fn edge_crossing<M: BlochModel + ?Sized>(
    model: &M,
    m: usize,
    ea: Complex64,
    ra: &[Complex64],
    eb: Complex64,
    rb: &[Complex64],
    tol: f64,
) -> Result<Option<Complex64>> {
    let tracked_b = continue_roots(model, ea, ra, eb, Some(rb), 0)?;
    let g_a = signed_gap(ra, m);
    let g_b = signed_gap(&tracked_b, m);
    if g_b <= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (ea, eb);
    let (mut r_lo, mut g_lo, mut g_hi) = (ra.to_vec(), g_a, g_b);
    while (hi - lo).norm() > tol {
        let mid = 0.5 * (lo + hi);
        let r_mid = continue_roots(model, lo, &r_lo, mid, None, 0)?;
        let g_mid = signed_gap(&r_mid, m);
        if g_mid <= 0.0 {
            lo = mid;
            r_lo = r_mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    // one secant step inside the final bracket
    let w = if g_hi - g_lo > 0.0 { -g_lo / (g_hi - g_lo) } else { 0.5 };
    Ok(Some(lo + (hi - lo) * w.clamp(0.0, 1.0)))
}

/// Samples the GBZ and the OBC spectrum on `grid`.
///
/// The gap field `|beta_{M+1}| - |beta_M|` is non-negative and vanishes on the
/// OBC arcs, so the sign change is taken from the root identities instead:
/// roots are continued along every grid edge, and the edge crosses an arc when
/// the `M` innermost roots at its start are no longer the innermost at its end.
/// The crossing is then bisected to `tol` and both tied roots are emitted.
pub fn obc_gbz_scan<M: BlochModel + ?Sized>(model: &M, grid: &ScanGrid, tol: f64) -> Result<GbzSet> {
    grid.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
    }
    let m = model.pole_order();
    let roots = roots_on_grid(model, grid)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let h_edges = nx * (ny + 1);
    let v_edges = (nx + 1) * ny;
    let edge = |e: usize| -> (usize, usize) {
        if e < h_edges {
            let (i, j) = (e % nx, e / nx);
            (grid.index(i, j), grid.index(i + 1, j))
        } else {
            let e = e - h_edges;
            let (i, j) = (e % (nx + 1), e / (nx + 1));
            (grid.index(i, j), grid.index(i, j + 1))
        }
    };
    let node_e = |idx: usize| grid.node(idx % (nx + 1), idx / (nx + 1));
    let found: Vec<Option<Complex64>> = (0..h_edges + v_edges)
        .into_par_iter()
        .map(|e| {
            let (a, b) = edge(e);
            let (ea, eb) = (node_e(a), node_e(b));
            // try both orientations so a crossing is seen whichever side is "inside"
            if let Some(x) = edge_crossing(model, m, ea, &roots[a], eb, &roots[b], tol)? {
                return Ok(Some(x));
            }
            edge_crossing(model, m, eb, &roots[b], ea, &roots[a], tol)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut crossings = 0;
    let mut rejected = 0;
    for e in found.into_iter().flatten() {
        crossings += 1;
        let rs = model.char_roots(e)?;
        let (b1, b2) = (rs.roots[m - 1], rs.roots[m]);
        let gap = (b2.norm() - b1.norm()).abs();
        if gap > GBZ_TIE_TOL * 0.5 * (b1.norm() + b2.norm()) {
            rejected += 1;
            continue;
        }
        points.push(GbzPoint { beta: b1, energy: e });
        points.push(GbzPoint { beta: b2, energy: e });
    }
    if points.is_empty() {
        let gaps: Vec<f64> = roots.iter().map(|r| r[m].norm() - r[m - 1].norm()).collect();
        return Err(Error::EmptyGbz {
            f_min: gaps.iter().cloned().fold(f64::INFINITY, f64::min),
            f_max: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(GbzSet {
        points,
        grid: *grid,
        tol,
        crossings,
        rejected,
    })
}

/// Where an energy sits with respect to the semi-infinite lattice spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "region")]
pub enum SibcRegion {
    OnPbcLoop,
    /// `W < 0`: left-edge skin eigenvalue of multiplicity `|W|`.
    SkinNegative { multiplicity: u32 },
    /// `W > 0`: inside the loop, no left-edge eigenstate.
    InteriorPositive { winding: u32 },
    Exterior,
}

pub fn sibc_classify<M: BlochModel + ?Sized>(model: &M, energy: Complex64) -> Result<SibcRegion> {
    match winding_roots(model, energy) {
        Ok(w) if w < 0 => Ok(SibcRegion::SkinNegative {
            multiplicity: w.unsigned_abs(),
        }),
        Ok(w) if w > 0 => Ok(SibcRegion::InteriorPositive { winding: w as u32 }),
        Ok(_) => Ok(SibcRegion::Exterior),
        Err(Error::OnPbcLoop { .. }) => Ok(SibcRegion::OnPbcLoop),
        Err(e) => Err(e),
    }
}

/// Winding numbers on the grid nodes, row-major; `None` on the PBC loop.
#[derive(Debug, Clone, PartialEq)]
pub struct WindingMap {
    pub grid: ScanGrid,
    pub values: Vec<Option<i32>>,
}

impl WindingMap {
    pub fn get(&self, i: usize, j: usize) -> Option<i32> {
        self.values[self.grid.index(i, j)]
    }
}

pub fn winding_map<M: BlochModel + ?Sized>(model: &M, grid: &ScanGrid) -> Result<WindingMap> {
    grid.validate()?;
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|idx| {
            let e = grid.node(idx % (grid.nx + 1), idx / (grid.nx + 1));
            match winding_roots(model, e) {
                Ok(w) => Ok(Some(w)),
                Err(Error::OnPbcLoop { .. }) => Ok(None),
                Err(err) => Err(err),
            }
        })
        .collect::<Result<_>>()?;
    Ok(WindingMap { grid: *grid, values })
}

/// Self-healing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(rename = "E_m1")]
    pub e_m1: f64,
    #[serde(rename = "E_m2")]
    pub e_m2: Option<f64>,
    #[serde(rename = "E_m")]
    pub e_m: f64,
    pub bloch_points_present: bool,
    pub gbz_points: usize,
    pub min_beta_modulus: f64,
    pub max_beta_modulus: f64,
}

/// Modulus tolerance for deciding that the GBZ touches the unit circle.
pub const BLOCH_POINT_TOL: f64 = 1e-6;

/// `E_m1` from the GBZ energies; if the GBZ reaches the unit circle, `E_m2` as
/// the top of the `W > 0` region, located on the grid columns and bisected.
pub fn compute_threshold<M: BlochModel + ?Sized>(model: &M, gbz: &GbzSet, grid: &ScanGrid) -> Result<ThresholdReport> {
    if gbz.points.is_empty() {
        return Err(Error::InvalidArgument("empty GBZ".into()));
    }
    let e_m1 = gbz.max_im_energy();
    let (bmin, bmax) = (gbz.min_beta_modulus(), gbz.max_beta_modulus());
    let bloch = bmin <= 1.0 + BLOCH_POINT_TOL && bmax >= 1.0 - BLOCH_POINT_TOL;
    let e_m2 = if bloch { positive_region_top(model, grid, gbz.tol)? } else { None };
    let e_m = match e_m2 {
        Some(x) => e_m1.max(x),
        None => e_m1,
    };
    Ok(ThresholdReport {
        e_m1,
        e_m2,
        e_m,
        bloch_points_present: bloch,
        gbz_points: gbz.points.len(),
        min_beta_modulus: bmin,
        max_beta_modulus: bmax,
    })
}

fn positive_region_top<M: BlochModel + ?Sized>(model: &M, grid: &ScanGrid, tol: f64) -> Result<Option<f64>> {
    let map = winding_map(model, grid)?;
    let positive = |e: Complex64| -> Result<bool> {
        match winding_roots(model, e) {
            Ok(w) => Ok(w > 0),
            Err(Error::OnPbcLoop { .. }) => Ok(false),
            Err(err) => Err(err),
        }
    };
    let tops: Vec<Option<f64>> = (0..=grid.nx)
        .into_par_iter()
        .map(|i| {
            let Some(j) = (0..=grid.ny).rev().find(|&j| matches!(map.get(i, j), Some(w) if w > 0)) else {
                return Ok(None);
            };
            let mut lo = grid.node(i, j);
            if j == grid.ny {
                return Ok(Some(lo.im));
            }
            let mut hi = grid.node(i, j + 1);
            while (hi - lo).norm() > tol {
                let mid = 0.5 * (lo + hi);
                if positive(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(Some(lo.im))
        })
        .collect::<Result<_>>()?;
    Ok(tops.into_iter().flatten().reduce(f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedVerdict {
    SelfHealing,
    NotSelfHealing,
    NotASkinMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub verdict: PredictedVerdict,
    /// `None` when `E0` lies on the PBC loop.
    pub winding: Option<i32>,
    /// `Im(E0) - E_m`.
    pub margin: f64,
    pub indeterminate: bool,
}

/// Theory verdict: a left-edge skin mode (`W(E0) < 0`) self-heals iff
/// `Im(E0) > E_m`.
pub fn predict_self_healing<M: BlochModel + ?Sized>(
    model: &M,
    e0: Complex64,
    threshold: &ThresholdReport,
) -> Result<Prediction> {
    let winding = match winding_roots(model, e0) {
        Ok(w) => Some(w),
        Err(Error::OnPbcLoop { .. }) => None,
        Err(e) => return Err(e),
    };
    let margin = e0.im - threshold.e_m;
    let verdict = match winding {
        Some(w) if w < 0 => {
            if margin > 0.0 {
                PredictedVerdict::SelfHealing
            } else {
                PredictedVerdict::NotSelfHealing
            }
        }
        _ => PredictedVerdict::NotASkinMode,
    };
    Ok(Prediction {
        verdict,
        winding,
        margin,
        indeterminate: verdict != PredictedVerdict::NotASkinMode && margin.abs() < VERDICT_TOL,
    })
}
