//! Lattice models: single-band Toeplitz lattices and the two-chain ladder.
//!
//! Every model is a block Laurent polynomial `H(beta) = sum_l A_l beta^l` with
//! `bands x bands` blocks `A_l`, `-r <= l <= s`. In real space the lattice
//! Hamiltonian has blocks `H_{n,m} = A_{n-m}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{eigenvalues, LaurentSymbol, RootSet};

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Common interface of all lattice models.
pub trait BlochModel: Send + Sync {
    fn bands(&self) -> usize;

    /// Largest left-hop order `r`.
    fn left_range(&self) -> usize;

    /// Largest right-hop order `s`.
    fn right_range(&self) -> usize;

    /// Hopping block `A_l` (zero outside `[-r, s]`).
    fn hop_block(&self, l: i32) -> DMatrix<Complex64>;

    fn max_range(&self) -> usize {
        self.left_range().max(self.right_range())
    }

    /// Number of characteristic roots, `bands * (r + s)`.
    fn root_count(&self) -> usize {
        self.bands() * (self.left_range() + self.right_range())
    }

    /// Order of the pole of `det(H(beta) - E)` at `beta = 0`.
    fn pole_order(&self) -> usize {
        self.bands() * self.left_range()
    }

    /// Largest single matrix-element magnitude over all hop blocks.
    fn max_abs_hop(&self) -> f64 {
        let (r, s) = (self.left_range() as i32, self.right_range() as i32);
        (-r..=s)
            .flat_map(|l| self.hop_block(l).iter().map(|z| z.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// Bloch matrix `H(beta)`; on the unit circle `beta = e^{ik}`.
    fn bloch_matrix(&self, beta: Complex64) -> Result<DMatrix<Complex64>> {
        if beta == czero() {
            return Err(Error::ZeroBeta);
        }
        let b = self.bands();
        let mut h = DMatrix::<Complex64>::zeros(b, b);
        let (r, s) = (self.left_range() as i32, self.right_range() as i32);
        for l in -r..=s {
            h += self.hop_block(l) * beta.powi(l);
        }
        Ok(h)
    }

    /// `det(H(beta) - E)`.
    fn char_det(&self, beta: Complex64, energy: Complex64) -> Result<Complex64> {
        let mut h = self.bloch_matrix(beta)?;
        for i in 0..self.bands() {
            h[(i, i)] -= energy;
        }
        Ok(h.determinant())
    }

    /// The `bands * (r + s)` roots of `beta^{bands r} det(H(beta) - E)`,
    /// sorted by modulus.
    fn char_roots(&self, energy: Complex64) -> Result<RootSet> {
        block_char_roots(self, energy)
    }
}

/// Roots of the matrix polynomial `Q(beta) = beta^r (H(beta) - E)` via its block
/// companion linearization.
pub fn block_char_roots<M: BlochModel + ?Sized>(model: &M, energy: Complex64) -> Result<RootSet> {
    let b = model.bands();
    let (r, s) = (model.left_range(), model.right_range());
    let d = r + s;
    let lead = model.hop_block(s as i32);
    let lead_inv = lead
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("leading hop block is singular".into()))?;
    // coefficient blocks M_j of beta^j, j = 0..d
    let blocks: Vec<DMatrix<Complex64>> = (0..=d)
        .map(|j| {
            let mut m = model.hop_block(j as i32 - r as i32);
            if j == r {
                for i in 0..b {
                    m[(i, i)] -= energy;
                }
            }
            m
        })
        .collect();
    let n = b * d;
    let mut c = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..d - 1 {
        for i in 0..b {
            c[(j * b + i, (j + 1) * b + i)] = Complex64::new(1.0, 0.0);
        }
    }
    for (j, mj) in blocks.iter().take(d).enumerate() {
        let bj = -(&lead_inv * mj);
        c.view_mut(((d - 1) * b, j * b), (b, b)).copy_from(&bj);
    }
    let mut roots = eigenvalues(c, energy)?;
    for x in roots.iter_mut() {
        *x = polish_block_root(&blocks, *x);
    }
    Ok(RootSet::new(roots, energy))
}

fn eval_matrix_poly(blocks: &[DMatrix<Complex64>], x: Complex64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let b = blocks[0].nrows();
    let mut q = DMatrix::<Complex64>::zeros(b, b);
    let mut dq = DMatrix::<Complex64>::zeros(b, b);
    for m in blocks.iter().rev() {
        dq = &dq * x + &q;
        q = &q * x + m;
    }
    (q, dq)
}

/// Guarded Newton steps on `det Q(beta)`, using `det'/det = tr(Q^{-1} Q')`.
fn polish_block_root(blocks: &[DMatrix<Complex64>], mut x: Complex64) -> Complex64 {
    let (q, _) = eval_matrix_poly(blocks, x);
    let mut fx = q.determinant().norm();
    for _ in 0..3 {
        let (q, dq) = eval_matrix_poly(blocks, x);
        let lu = q.lu();
        let Some(sol) = lu.solve(&dq) else { break };
        let tr = sol.trace();
        if tr.norm() == 0.0 || !tr.re.is_finite() || !tr.im.is_finite() {
            break;
        }
        let y = x - tr.inv();
        let (qy, _) = eval_matrix_poly(blocks, y);
        let fy = qy.determinant().norm();
        if fy < fx {
            x = y;
            fx = fy;
        } else {
            break;
        }
    }
    x
}

/// Single-band lattice `H_{n,l} = t_{n-l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleBandModel {
    pub symbol: LaurentSymbol,
}

impl SingleBandModel {
    pub fn new(symbol: LaurentSymbol) -> Self {
        Self { symbol }
    }
}

impl BlochModel for SingleBandModel {
    fn bands(&self) -> usize {
        1
    }

    fn left_range(&self) -> usize {
        self.symbol.r()
    }

    fn right_range(&self) -> usize {
        self.symbol.s()
    }

    fn hop_block(&self, l: i32) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, self.symbol.coeff(l))
    }

    fn max_abs_hop(&self) -> f64 {
        self.symbol.max_abs_hop()
    }

    fn bloch_matrix(&self, beta: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(DMatrix::from_element(1, 1, self.symbol.eval(beta)?))
    }

    fn char_det(&self, beta: Complex64, energy: Complex64) -> Result<Complex64> {
        Ok(self.symbol.eval(beta)? - energy)
    }

    fn char_roots(&self, energy: Complex64) -> Result<RootSet> {
        self.symbol.char_roots(energy)
    }
}

/// Two side-coupled Hatano-Nelson chains `a` and `b`.
///
/// Chain `a` (`b`) hops with `t1 + delta` to the left and `t1 - delta` to the
/// right, carries on-site energy `+v` (`-v`), and the chains are coupled
/// site-by-site by `t0`. The Bloch Hamiltonian is
/// `d0 sigma_0 + t0 sigma_x + [v + i (delta_b - delta_a) sin k] sigma_z`
/// with `d0 = 2 t1 cos k - i (delta_a + delta_b) sin k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoChainModel {
    pub t1: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub t0: f64,
    pub v: f64,
}

impl TwoChainModel {
    pub fn new(t1: f64, delta_a: f64, delta_b: f64, t0: f64, v: f64) -> Result<Self> {
        let m = Self {
            t1,
            delta_a,
            delta_b,
            t0,
            v,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t1, self.delta_a, self.delta_b, self.t0, self.v];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        let left = [self.t1 + self.delta_a, self.t1 + self.delta_b];
        let right = [self.t1 - self.delta_a, self.t1 - self.delta_b];
        if left.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidModel("no left hopping (r = 0)".into()));
        }
        if right.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidModel("no right hopping (s = 0)".into()));
        }
        Ok(())
    }

    /// Bloch matrix written directly from the Pauli decomposition at real `k`.
    pub fn bloch_matrix_k(&self, k: f64) -> DMatrix<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let d0 = 2.0 * self.t1 * k.cos() - i * (self.delta_a + self.delta_b) * k.sin();
        let dz = self.v + i * (self.delta_b - self.delta_a) * k.sin();
        let t0 = Complex64::new(self.t0, 0.0);
        DMatrix::from_row_slice(2, 2, &[d0 + dz, t0, t0, d0 - dz])
    }
}

impl BlochModel for TwoChainModel {
    fn bands(&self) -> usize {
        2
    }

    fn left_range(&self) -> usize {
        1
    }

    fn right_range(&self) -> usize {
        1
    }

    fn hop_block(&self, l: i32) -> DMatrix<Complex64> {
        let c = |x: f64| Complex64::new(x, 0.0);
        match l {
            -1 => DMatrix::from_row_slice(
                2,
                2,
                &[c(self.t1 + self.delta_a), czero(), czero(), c(self.t1 + self.delta_b)],
            ),
            0 => DMatrix::from_row_slice(2, 2, &[c(self.v), c(self.t0), c(self.t0), c(-self.v)]),
            1 => DMatrix::from_row_slice(
                2,
                2,
                &[c(self.t1 - self.delta_a), czero(), czero(), c(self.t1 - self.delta_b)],
            ),
            _ => DMatrix::zeros(2, 2),
        }
    }
}

/// Any supported model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    SingleBand(SingleBandModel),
    TwoChain(TwoChainModel),
}

impl Model {
    pub fn as_dyn(&self) -> &dyn BlochModel {
        match self {
            Model::SingleBand(m) => m,
            Model::TwoChain(m) => m,
        }
    }
}

impl BlochModel for Model {
    fn bands(&self) -> usize {
        self.as_dyn().bands()
    }
    fn left_range(&self) -> usize {
        self.as_dyn().left_range()
    }
    fn right_range(&self) -> usize {
        self.as_dyn().right_range()
    }
    fn hop_block(&self, l: i32) -> DMatrix<Complex64> {
        self.as_dyn().hop_block(l)
    }
    fn max_abs_hop(&self) -> f64 {
        self.as_dyn().max_abs_hop()
    }
    fn bloch_matrix(&self, beta: Complex64) -> Result<DMatrix<Complex64>> {
        self.as_dyn().bloch_matrix(beta)
    }
    fn char_det(&self, beta: Complex64, energy: Complex64) -> Result<Complex64> {
        self.as_dyn().char_det(beta, energy)
    }
    fn char_roots(&self, energy: Complex64) -> Result<RootSet> {
        self.as_dyn().char_roots(energy)
    }
}

impl From<SingleBandModel> for Model {
    fn from(m: SingleBandModel) -> Self {
        Model::SingleBand(m)
    }
}

impl From<TwoChainModel> for Model {
    fn from(m: TwoChainModel) -> Self {
        Model::TwoChain(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Banded real-space Hamiltonian on `n` sites, state index `site * bands + band`.
#[derive(Debug, Clone)]
pub struct TruncatedHamiltonian {
    n: usize,
    bands: usize,
    boundary: Boundary,
    r: usize,
    s: usize,
    // nonzero hop blocks (l, row-major bands x bands)
    hops: Vec<(i32, Vec<Complex64>)>,
}

/// Real-space truncation of `model` on `n` sites.
pub fn build_truncated<M: BlochModel + ?Sized>(
    model: &M,
    n: usize,
    boundary: Boundary,
) -> Result<TruncatedHamiltonian> {
    let min = 2 * model.max_range();
    if n <= min {
        return Err(Error::LatticeTooSmall { n, min });
    }
    let b = model.bands();
    let (r, s) = (model.left_range(), model.right_range());
    let mut hops = Vec::new();
    for l in -(r as i32)..=(s as i32) {
        let blk = model.hop_block(l);
        if blk.iter().all(|z| *z == czero()) {
            continue;
        }
        let mut flat = Vec::with_capacity(b * b);
        for i in 0..b {
            for j in 0..b {
                flat.push(blk[(i, j)]);
            }
        }
        hops.push((l, flat));
    }
    Ok(TruncatedHamiltonian {
        n,
        bands: b,
        boundary,
        r,
        s,
        hops,
    })
}

impl TruncatedHamiltonian {
    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dim(&self) -> usize {
        self.n * self.bands
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn max_range(&self) -> usize {
        self.r.max(self.s)
    }

    fn source_site(&self, n: usize, l: i32) -> Option<usize> {
        let m = n as i64 - l as i64;
        match self.boundary {
            Boundary::Open => (0..self.n as i64).contains(&m).then_some(m as usize),
            Boundary::Periodic => Some(m.rem_euclid(self.n as i64) as usize),
        }
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let b = self.bands;
        y.iter_mut().for_each(|z| *z = czero());
        if b == 1 && self.boundary == Boundary::Open {
            let n = self.n;
            for (l, blk) in &self.hops {
                let t = blk[0];
                let l = *l as i64;
                // y[i] += t x[i - l] for 0 <= i - l < n
                let lo = l.max(0) as usize;
                let hi = (n as i64 + l).min(n as i64) as usize;
                for i in lo..hi {
                    y[i] += t * x[(i as i64 - l) as usize];
                }
            }
            return;
        }
        for site in 0..self.n {
            for (l, blk) in &self.hops {
                let Some(m) = self.source_site(site, *l) else { continue };
                for a in 0..b {
                    let mut acc = czero();
                    for c in 0..b {
                        acc += blk[a * b + c] * x[m * b + c];
                    }
                    y[site * b + a] += acc;
                }
            }
        }
    }

    /// Matrix element between state indices.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let b = self.bands;
        let (n, a) = (row / b, row % b);
        let (m, c) = (col / b, col % b);
        let mut acc = czero();
        for (l, blk) in &self.hops {
            if self.source_site(n, *l) == Some(m) {
                acc += blk[a * b + c];
            }
        }
        acc
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.entry(i, j))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let b = self.bands;
        let mut worst: f64 = 0.0;
        // interior rows dominate; every row sum is bounded by the full stencil
        for a in 0..b {
            let mut acc = 0.0;
            for (_, blk) in &self.hops {
                for c in 0..b {
                    acc += blk[a * b + c].norm();
                }
            }
            worst = worst.max(acc);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn five_term() -> SingleBandModel {
        SingleBandModel::new(
            LaurentSymbol::from_real(&[(-2, 1.0), (-1, 1.0), (0, 0.0), (1, 0.7), (2, 0.8)]).unwrap(),
        )
    }

    fn two_chain() -> TwoChainModel {
        TwoChainModel::new(0.75, 0.25, -0.15, 0.05, 0.8).unwrap()
    }

    #[test]
    fn single_band_bloch_at_one() {
        let h = five_term().bloch_matrix(c(1.0, 0.0)).unwrap();
        assert_eq!(h.shape(), (1, 1));
        assert!((h[(0, 0)] - c(3.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn two_chain_bloch_at_k0() {
        let h = two_chain().bloch_matrix(c(1.0, 0.0)).unwrap();
        let want = [[2.3, 0.05], [0.05, 0.7]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - c(want[i][j], 0.0)).norm() < 1e-14, "{i}{j}");
            }
        }
    }

    #[test]
    fn two_chain_block_form_matches_pauli_form() {
        let m = two_chain();
        for j in 0..17 {
            let k = -PI + 2.0 * PI * j as f64 / 17.0;
            let a = m.bloch_matrix(Complex64::from_polar(1.0, k)).unwrap();
            let b = m.bloch_matrix_k(k);
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn bloch_matrix_is_periodic_in_k() {
        let models: Vec<Model> = vec![five_term().into(), two_chain().into()];
        for m in &models {
            for j in 0..9 {
                let k = 0.37 * j as f64;
                let a = m.bloch_matrix(Complex64::from_polar(1.0, k)).unwrap();
                let b = m.bloch_matrix(Complex64::from_polar(1.0, k + 2.0 * PI)).unwrap();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bloch_matrix_rejects_zero() {
        assert!(two_chain().bloch_matrix(c(0.0, 0.0)).is_err());
        assert!(five_term().bloch_matrix(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn tridiagonal_open_and_periodic() {
        let m = SingleBandModel::new(LaurentSymbol::from_real(&[(-1, 1.0), (1, 1.0)]).unwrap());
        let open = build_truncated(&m, 4, Boundary::Open).unwrap().to_dense();
        let per = build_truncated(&m, 4, Boundary::Periodic).unwrap().to_dense();
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i as i32 - j as i32).abs() == 1 { 1.0 } else { 0.0 };
                assert_eq!(open[(i, j)], c(want, 0.0));
            }
        }
        let diff = &per - &open;
        assert_eq!(diff[(0, 3)], c(1.0, 0.0));
        assert_eq!(diff[(3, 0)], c(1.0, 0.0));
        assert_eq!(diff.iter().filter(|z| z.norm() > 0.0).count(), 2);
    }

    #[test]
    fn open_truncation_is_toeplitz_and_banded() {
        let m = five_term();
        let h = build_truncated(&m, 12, Boundary::Open).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let l = i as i32 - j as i32;
                assert_eq!(h.entry(i, j), m.symbol.coeff(l));
                if l.abs() > 2 {
                    assert_eq!(h.entry(i, j), c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn periodic_differs_only_in_corners() {
        let m = two_chain();
        let n = 7;
        let open = build_truncated(&m, n, Boundary::Open).unwrap().to_dense();
        let per = build_truncated(&m, n, Boundary::Periodic).unwrap().to_dense();
        let b = 2;
        for i in 0..n * b {
            for j in 0..n * b {
                let (si, sj) = (i / b, j / b);
                let corner = (si == 0 && sj == n - 1) || (si == n - 1 && sj == 0);
                if !corner {
                    assert_eq!(open[(i, j)], per[(i, j)]);
                }
            }
        }
        assert!((&per - &open).norm() > 0.0);
    }

    #[test]
    fn too_small_lattice_rejected() {
        assert_eq!(
            build_truncated(&five_term(), 4, Boundary::Open).unwrap_err(),
            Error::LatticeTooSmall { n: 4, min: 4 }
        );
    }

    #[test]
    fn apply_matches_dense() {
        let models: Vec<Model> = vec![five_term().into(), two_chain().into()];
        for m in &models {
            for boundary in [Boundary::Open, Boundary::Periodic] {
                let h = build_truncated(m, 9, boundary).unwrap();
                let x: Vec<Complex64> = (0..h.dim()).map(|i| c((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
                let mut y = vec![c(0.0, 0.0); h.dim()];
                h.apply(&x, &mut y);
                let dense = h.to_dense() * nalgebra::DVector::from_vec(x.clone());
                for i in 0..h.dim() {
                    assert!((y[i] - dense[i]).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn hermitian_controls_are_self_adjoint() {
        let chain = SingleBandModel::new(LaurentSymbol::from_real(&[(-2, 0.3), (-1, 1.0), (1, 1.0), (2, 0.3)]).unwrap());
        let ladder = TwoChainModel::new(0.75, 0.0, 0.0, 0.05, 0.8).unwrap();
        for h in [
            build_truncated(&chain, 20, Boundary::Open).unwrap().to_dense(),
            build_truncated(&ladder, 20, Boundary::Open).unwrap().to_dense(),
            build_truncated(&ladder, 20, Boundary::Periodic).unwrap().to_dense(),
        ] {
            assert!((&h - h.adjoint()).norm() < 1e-15);
        }
    }

    #[test]
    fn decoupled_hermitian_chains_double_root_at_band_edge() {
        let t1 = 0.75;
        let m = TwoChainModel::new(t1, 0.0, 0.0, 0.0, 0.0).unwrap();
        let rs = m.char_roots(c(2.0 * t1, 0.0)).unwrap();
        assert_eq!(rs.len(), 4);
        // fourfold root: eigenvalue perturbation scales like eps^(1/4)
        let near_one = rs.roots.iter().filter(|b| (*b - c(1.0, 0.0)).norm() < 1e-3).count();
        assert_eq!(near_one, 4);
    }

    #[test]
    fn two_chain_root_count_at_skin_energy() {
        let rs = two_chain().char_roots(c(1.0, 0.4)).unwrap();
        assert_eq!(rs.len(), 4);
        assert_eq!(rs.roots.iter().filter(|b| b.norm() > 1.0).count(), 3);
        for b in &rs.roots {
            assert!(two_chain().char_det(*b, c(1.0, 0.4)).unwrap().norm() < 1e-10);
        }
    }
}
