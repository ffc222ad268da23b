//! Time evolution `i d/dt psi = (H + V(t)) psi` on the open truncation, the
//! deviation `eps(t) = <xi|xi> / <phi|phi>` with `xi = psi - phi`, and the
//! empirical healing classifier.
//!
//! For a skin-mode initial state `phi(t) = phi0 e^{-i E0 t}` is known in closed
//! form on the semi-infinite lattice. The default formulation integrates the
//! deviation in the frame co-moving with `phi`,
//!
//! ```text
//! i d/dt eta = (H + V - E0) eta + V phi0,   eta(0) = 0,
//! psi = e^{-i E0 t} (phi0 + eta),           xi = e^{-i E0 t} eta,
//! ```
//!
//! so the right cut of the truncation only enters through `eta`, which stays
//! exponentially small there until the scattered wave arrives. The edge guard
//! watches exactly that.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_truncated, BlochModel, Boundary, TruncatedHamiltonian};
use crate::skin::SkinMode;

/// Guard-band amplitude (relative to the largest amplitude) that invalidates a run.
pub const EDGE_GUARD_TOL: f64 = 1e-8;

/// `eps` below this everywhere is treated as identically zero.
pub const EPS_MACHINE_FLOOR: f64 = 1e-20;

const RESCALE_HIGH: f64 = 1e64;
const RESCALE_LOW: f64 = 1e-64;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// On-site potential `value` on sites `n_min..=n_max` (1-based) and the listed
/// bands, switched on for `t_on <= t < t_off`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBox {
    pub n_min: usize,
    pub n_max: usize,
    pub band_mask: Vec<usize>,
    pub t_on: f64,
    pub t_off: f64,
    pub value: Complex64,
}

impl PotentialBox {
    pub fn all_bands(n_min: usize, n_max: usize, bands: usize, t_on: f64, t_off: f64, value: Complex64) -> Self {
        Self {
            n_min,
            n_max,
            band_mask: (0..bands).collect(),
            t_on,
            t_off,
            value,
        }
    }

    fn active(&self, t: f64) -> bool {
        self.t_on <= t && t < self.t_off
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub boxes: Vec<PotentialBox>,
}

impl PotentialSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        for (i, b) in self.boxes.iter().enumerate() {
            let bad = |msg: &str| Err(Error::InvalidArgument(format!("potential box {i}: {msg}")));
            if b.n_min == 0 || b.n_max < b.n_min {
                return bad("need 1 <= n_min <= n_max");
            }
            if !(b.t_on.is_finite() && b.t_off.is_finite() && b.t_on < b.t_off) {
                return bad("need finite t_on < t_off");
            }
            if !(b.value.re.is_finite() && b.value.im.is_finite()) {
                return bad("non-finite value");
            }
            if b.band_mask.is_empty() || b.band_mask.iter().any(|&m| m >= bands) {
                return bad("band mask must list bands in 0..bands");
            }
        }
        Ok(())
    }

    /// Bound on `max |V_n(t)|`.
    pub fn max_abs(&self) -> f64 {
        self.boxes.iter().map(|b| b.value.norm()).sum()
    }

    /// Largest site touched, `L`.
    pub fn extent(&self) -> usize {
        self.boxes.iter().map(|b| b.n_max).max().unwrap_or(0)
    }

    /// Switch-off time of the last box, `T`.
    pub fn switch_off(&self) -> f64 {
        self.boxes.iter().map(|b| b.t_off).fold(0.0, f64::max)
    }
}

/// `V_n(t)` for site `n` (1-based) and `band`.
pub fn potential_at(spec: &PotentialSpec, n: usize, band: usize, t: f64) -> Complex64 {
    spec.boxes
        .iter()
        .filter(|b| b.active(t) && (b.n_min..=b.n_max).contains(&n) && b.band_mask.contains(&band))
        .map(|b| b.value)
        .sum()
}

/// Right-hand side `-i [(H + V(t) - shift) x + scale V(t) src]`.
struct Rhs<'a> {
    h: &'a TruncatedHamiltonian,
    spec: &'a PotentialSpec,
    shift: Complex64,
    src: Option<&'a [Complex64]>,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, x: &[Complex64], scale: f64, out: &mut [Complex64]) {
        self.h.apply(x, out);
        if self.shift != czero() {
            for (o, xi) in out.iter_mut().zip(x) {
                *o -= self.shift * xi;
            }
        }
        let b = self.h.bands();
        let n = self.h.sites();
        for bx in self.spec.boxes.iter().filter(|bx| bx.active(t)) {
            for site in bx.n_min..=bx.n_max.min(n) {
                for &band in &bx.band_mask {
                    let i = (site - 1) * b + band;
                    out[i] += bx.value * x[i];
                    if let Some(src) = self.src {
                        out[i] += bx.value * src[i] * scale;
                    }
                }
            }
        }
        for o in out.iter_mut() {
            *o = Complex64::new(o.im, -o.re);
        }
    }
}

struct Workspace {
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![czero(); dim]),
            tmp: vec![czero(); dim],
        }
    }
}

fn rk4_in_place(rhs: &Rhs, t: f64, dt: f64, scale: f64, x: &mut [Complex64], ws: &mut Workspace) {
    let half = 0.5 * dt;
    let Workspace { k, tmp } = ws;
    let [k1, k2, k3, k4] = k;
    rhs.eval(t, x, scale, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + k1[i] * half;
    }
    rhs.eval(t + half, tmp, scale, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + k2[i] * half;
    }
    rhs.eval(t + half, tmp, scale, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + k3[i] * dt;
    }
    rhs.eval(t + dt, tmp, scale, k4);
    let w = dt / 6.0;
    for i in 0..x.len() {
        x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

fn check_stability(h: &TruncatedHamiltonian, spec: &PotentialSpec, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let bound = dt * (h.inf_norm() + spec.max_abs());
    if bound >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "dt * (||H||_inf + max|V|) = {bound:.3} violates the stability bound 1"
        )));
    }
    Ok(())
}

/// One classical RK4 step of `i d/dt psi = (H + V(t)) psi`.
pub fn rk4_step(
    h: &TruncatedHamiltonian,
    spec: &PotentialSpec,
    psi: &[Complex64],
    t: f64,
    dt: f64,
) -> Result<Vec<Complex64>> {
    if psi.len() != h.dim() {
        return Err(Error::InvalidArgument(format!(
            "state length {} does not match dimension {}",
            psi.len(),
            h.dim()
        )));
    }
    check_stability(h, spec, dt.abs())?;
    let rhs = Rhs {
        h,
        spec,
        shift: czero(),
        src: None,
    };
    let mut x = psi.to_vec();
    rk4_in_place(&rhs, t, dt, 1.0, &mut x, &mut Workspace::new(psi.len()));
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::BlowUp { step: 0, time: t });
    }
    Ok(x)
}

/// How a skin-mode run is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkinFormulation {
    /// Integrate `eta` in the frame co-moving with `phi` (default).
    #[default]
    Deviation,
    /// Integrate `psi` itself and compare with the closed-form `phi(t)`.
    Direct,
}

pub enum InitialState<'a> {
    /// Constructed skin mode: `phi(t)` is taken in closed form.
    Mode(&'a SkinMode),
    /// Arbitrary state: `phi(t)` is co-integrated with `V = 0`.
    Vector(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveParams {
    pub n_sites: usize,
    pub dt: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub guard_band: usize,
    pub formulation: SkinFormulation,
}

impl EvolveParams {
    /// `N = 300`, `dt = 1e-3`, `t_end = 20`, records every 0.01, guard band
    /// `10 max(r, s)`.
    pub fn defaults_for<M: BlochModel + ?Sized>(model: &M) -> Self {
        Self {
            n_sites: 300,
            dt: 1e-3,
            t_end: 20.0,
            record_interval: 0.01,
            snapshot_times: Vec::new(),
            guard_band: 10 * model.max_range(),
            formulation: SkinFormulation::Deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// `psi / ||psi||`.
    pub psi: Vec<Complex64>,
    /// `xi / ||phi||`.
    pub xi: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// `ln ||psi||^2`.
    pub norm_sq_log: Vec<f64>,
    pub eps: Vec<f64>,
    /// `ln ||xi||^2` (`-inf` while `xi = 0`).
    pub xi_norm_log: Vec<f64>,
    /// Largest guard-band amplitude relative to the largest amplitude.
    pub edge_guard: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub first_breach: Option<f64>,
    pub n_sites: usize,
    pub bands: usize,
    pub dt: f64,
    /// Ballistic spreading estimate `2 max(r, s) max|t_l|`.
    pub lightcone_velocity: f64,
    /// Switch-off time `T` and spatial extent `L` of the potential.
    pub potential_off: f64,
    pub potential_extent: usize,
}

impl EvolutionTrace {
    pub fn run_valid(&self) -> bool {
        self.first_breach.is_none()
    }

    pub fn eps_max(&self) -> f64 {
        self.eps.iter().cloned().fold(0.0, f64::max)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 0.5 * self.dt)
    }

    /// `ln ||xi||` series.
    pub fn xi_norm_half_log(&self) -> Vec<f64> {
        self.xi_norm_log.iter().map(|x| 0.5 * x).collect()
    }
}

fn norm_sq(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn max_abs(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rescales `x` into a safe range, returning the log of the removed factor.
fn renormalize(x: &mut [Complex64]) -> f64 {
    let m = max_abs(x);
    if m > RESCALE_HIGH || (m > 0.0 && m < RESCALE_LOW) {
        let inv = 1.0 / m;
        x.iter_mut().for_each(|z| *z *= inv);
        m.ln()
    } else {
        0.0
    }
}

struct Sample {
    norm_sq_log: f64,
    eps: f64,
    xi_norm_log: f64,
    edge_guard: f64,
}

/// Integrates from `initial` over `[0, t_end]` on the open `n_sites` lattice.
pub fn evolve<M: BlochModel + ?Sized>(
    model: &M,
    initial: InitialState,
    spec: &PotentialSpec,
    params: &EvolveParams,
) -> Result<EvolutionTrace> {
    let h = build_truncated(model, params.n_sites, Boundary::Open)?;
    let b = model.bands();
    let dim = h.dim();
    spec.validate(b)?;
    check_stability(&h, spec, params.dt)?;
    if !(params.t_end > 0.0 && params.t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {}", params.t_end)));
    }
    if params.guard_band == 0 || params.guard_band >= params.n_sites {
        return Err(Error::InvalidArgument(format!(
            "guard band {} must lie in 1..{}",
            params.guard_band, params.n_sites
        )));
    }
    let steps = (params.t_end / params.dt).round() as usize;
    let record_every = ((params.record_interval / params.dt).round() as usize).max(1);
    let mut snap_steps: Vec<usize> = Vec::with_capacity(params.snapshot_times.len());
    for &ts in &params.snapshot_times {
        if !(0.0..=params.t_end).contains(&ts) {
            return Err(Error::InvalidArgument(format!("snapshot time {ts} outside [0, t_end]")));
        }
        snap_steps.push((ts / params.dt).round() as usize);
    }
    let guard_lo = (params.n_sites - params.guard_band) * b;

    let mut trace = EvolutionTrace {
        times: Vec::new(),
        norm_sq_log: Vec::new(),
        eps: Vec::new(),
        xi_norm_log: Vec::new(),
        edge_guard: Vec::new(),
        snapshots: Vec::new(),
        first_breach: None,
        n_sites: params.n_sites,
        bands: b,
        dt: params.dt,
        lightcone_velocity: 2.0 * model.max_range() as f64 * model.max_abs_hop(),
        potential_off: spec.switch_off(),
        potential_extent: spec.extent(),
    };

    let mut ws = Workspace::new(dim);
    let (e0, phi0, formulation) = match &initial {
        InitialState::Mode(m) => (m.energy, m.amplitudes.clone(), Some(params.formulation)),
        InitialState::Vector(v) => (czero(), v.clone(), None),
    };
    if phi0.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "initial state length {} does not match N * bands = {dim}",
            phi0.len()
        )));
    }
    let phi_norm_sq = norm_sq(&phi0);
    if !(phi_norm_sq > 0.0) {
        return Err(Error::InvalidArgument("initial state vanishes".into()));
    }

    // primary state x = e^{lam} x_hat, plus the co-integrated reference when needed
    let mut x: Vec<Complex64> = match formulation {
        Some(SkinFormulation::Deviation) => vec![czero(); dim],
        _ => phi0.clone(),
    };
    let mut lam: f64 = 0.0;
    let mut refv = phi0.clone();
    let mut lam_ref: f64 = 0.0;
    let no_v = PotentialSpec::none();
    let rhs_main = match formulation {
        Some(SkinFormulation::Deviation) => Rhs {
            h: &h,
            spec,
            shift: e0,
            src: Some(&phi0),
        },
        _ => Rhs {
            h: &h,
            spec,
            shift: czero(),
            src: None,
        },
    };
    let rhs_ref = Rhs {
        h: &h,
        spec: &no_v,
        shift: czero(),
        src: None,
    };

    let mut w = vec![czero(); dim];
    let mut u = vec![czero(); dim];
    let mut snap_cursor = 0;
    let mut order: Vec<usize> = (0..snap_steps.len()).collect();
    order.sort_by_key(|&i| snap_steps[i]);

    for k in 0..=steps {
        let t = k as f64 * params.dt;
        let record = k % record_every == 0 || k == steps;
        let snap = snap_cursor < order.len() && snap_steps[order[snap_cursor]] == k;
        if record || snap {
            // w: deviation, u: full state, both in a common frame; (log) scale factors
            let (ln_psi_sq, ln_xi_scale, phase) = match formulation {
                Some(SkinFormulation::Deviation) => {
                    let a = lam.exp();
                    for i in 0..dim {
                        w[i] = x[i] * a;
                        u[i] = phi0[i] + w[i];
                    }
                    (2.0 * e0.im * t + norm_sq(&u).ln(), 2.0 * e0.im * t, -e0.re * t)
                }
                Some(SkinFormulation::Direct) => {
                    let a = Complex64::from_polar((lam - e0.im * t).exp(), e0.re * t);
                    for i in 0..dim {
                        u[i] = x[i] * a;
                        w[i] = u[i] - phi0[i];
                    }
                    (2.0 * lam + norm_sq(&x).ln(), 2.0 * e0.im * t, -e0.re * t)
                }
                None => {
                    let a = (lam - lam_ref).exp();
                    for i in 0..dim {
                        u[i] = x[i] * a;
                        w[i] = u[i] - refv[i];
                    }
                    (2.0 * lam + norm_sq(&x).ln(), 2.0 * lam_ref, 0.0)
                }
            };
            let ref_norm_sq = match formulation {
                Some(_) => phi_norm_sq,
                None => norm_sq(&refv),
            };
            let w_sq = norm_sq(&w);
            let guard_src = if formulation.is_some() { &w } else { &u };
            let s = Sample {
                norm_sq_log: ln_psi_sq,
                eps: w_sq / ref_norm_sq,
                xi_norm_log: ln_xi_scale + w_sq.ln(),
                edge_guard: max_abs(&guard_src[guard_lo..]) / max_abs(&u),
            };
            if record {
                if s.edge_guard > EDGE_GUARD_TOL && trace.first_breach.is_none() {
                    trace.first_breach = Some(t);
                }
                trace.times.push(t);
                trace.norm_sq_log.push(s.norm_sq_log);
                trace.eps.push(s.eps);
                trace.xi_norm_log.push(s.xi_norm_log);
                trace.edge_guard.push(s.edge_guard);
            }
            while snap_cursor < order.len() && snap_steps[order[snap_cursor]] == k {
                let rot = Complex64::from_polar(1.0, phase);
                let un = norm_sq(&u).sqrt();
                let rn = ref_norm_sq.sqrt();
                trace.snapshots.push(Snapshot {
                    t,
                    psi: u.iter().map(|z| z * rot / un).collect(),
                    xi: w.iter().map(|z| z * rot / rn).collect(),
                });
                snap_cursor += 1;
            }
        }
        if k == steps {
            break;
        }
        rk4_in_place(&rhs_main, t, params.dt, (-lam).exp(), &mut x, &mut ws);
        if formulation.is_none() {
            rk4_in_place(&rhs_ref, t, params.dt, 1.0, &mut refv, &mut ws);
            lam_ref += renormalize(&mut refv);
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::BlowUp {
                step: k + 1,
                time: t + params.dt,
            });
        }
        lam += renormalize(&mut x);
    }
    Ok(trace)
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Slope of an already-logarithmic series over `window`.
pub fn log_growth_rate(times: &[f64], log_values: &[f64], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(log_values)
        .filter(|(t, y)| **t >= window.0 && **t <= window.1 && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "only {} samples in window [{}, {}], need 10",
            pts.len(),
            window.0,
            window.1
        )));
    }
    Ok(least_squares_slope(&pts))
}

/// Least-squares slope of `ln value` over `window`; values must be positive.
pub fn growth_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("growth_rate needs positive values".into()));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    log_growth_rate(times, &logs, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub pass: bool,
    /// No tail sites above the floating-point floor.
    pub vacuous: bool,
    /// First site of the fitted tail.
    pub first_site: usize,
    /// Fitted slope of `ln |xi_n|` against `n` (`NaN` when vacuous).
    pub slope: f64,
}

/// Smallest amplitude treated as resolved.
const TAIL_FLOOR: f64 = 1e-290;

/// Checks that the site profile `|xi_n|` decays at least like `e^{-h n}` from
/// `first_site` on.
pub fn tail_check_profile(xi: &[Complex64], bands: usize, first_site: usize, rate_h: f64) -> TailCheck {
    let n_sites = xi.len() / bands;
    let pts: Vec<(f64, f64)> = (first_site.max(1)..=n_sites)
        .filter_map(|n| {
            let a = xi[(n - 1) * bands..n * bands].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            (a > TAIL_FLOOR).then(|| (n as f64, a.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return TailCheck {
            pass: true,
            vacuous: true,
            first_site,
            slope: f64::NAN,
        };
    }
    let slope = least_squares_slope(&pts);
    TailCheck {
        pass: slope <= -rate_h,
        vacuous: false,
        first_site,
        slope,
    }
}

/// Tail of the deviation at time `t` beyond the light cone `L + v t`.
pub fn deviation_tail_check(trace: &EvolutionTrace, t: f64, extent: usize, rate_h: f64) -> Result<TailCheck> {
    let snap = trace
        .snapshot_at(t)
        .ok_or_else(|| Error::InvalidArgument(format!("no snapshot at t = {t}")))?;
    let first = (extent as f64 + trace.lightcone_velocity * t).ceil() as usize + 1;
    Ok(tail_check_profile(&snap.xi, trace.bands, first, rate_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    pub eps_floor: f64,
    pub slope_eta: f64,
    /// Trailing fraction of the run used for the final slope.
    pub final_window: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            eps_floor: 1e-3,
            slope_eta: 0.05,
            final_window: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedVerdict {
    Healed,
    NotHealed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: ObservedVerdict,
    /// `eps` never rose above the machine floor.
    pub trivial: bool,
    pub eps_max: f64,
    pub eps_final: f64,
    pub final_slope: f64,
}

pub fn classify_healing(trace: &EvolutionTrace, th: &ClassifierThresholds) -> Classification {
    let eps_max = trace.eps_max();
    let eps_final = trace.eps.last().copied().unwrap_or(0.0);
    let t_end = trace.times.last().copied().unwrap_or(0.0);
    let lo = t_end * (1.0 - th.final_window);
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.eps)
        .filter(|(t, e)| **t >= lo && **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    let final_slope = if pts.len() >= 2 { least_squares_slope(&pts) } else { f64::NAN };
    let mut out = Classification {
        verdict: ObservedVerdict::Inconclusive,
        trivial: false,
        eps_max,
        eps_final,
        final_slope,
    };
    if !trace.run_valid() {
        return out;
    }
    if eps_max < EPS_MACHINE_FLOOR {
        out.verdict = ObservedVerdict::Healed;
        out.trivial = true;
        return out;
    }
    out.verdict = if eps_final < th.eps_floor * eps_max && final_slope < -th.slope_eta {
        ObservedVerdict::Healed
    } else if final_slope > th.slope_eta || eps_final > 0.3 * eps_max {
        ObservedVerdict::NotHealed
    } else {
        ObservedVerdict::Inconclusive
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::LaurentSymbol;
    use crate::model::SingleBandModel;
    use crate::skin::build_skin_mode;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chain(hops: &[(i32, f64)]) -> SingleBandModel {
        SingleBandModel::new(LaurentSymbol::from_real(hops).unwrap())
    }

    fn five_term() -> SingleBandModel {
        chain(&[(-2, 1.0), (-1, 1.0), (0, 0.0), (1, 0.7), (2, 0.8)])
    }

    fn obstacle() -> PotentialSpec {
        PotentialSpec {
            boxes: vec![PotentialBox::all_bands(1, 10, 1, 2.0, 4.0, c(0.0, -10.0))],
        }
    }

    #[test]
    fn potential_lookup() {
        let v = obstacle();
        assert_eq!(potential_at(&v, 5, 0, 3.0), c(0.0, -10.0));
        assert_eq!(potential_at(&v, 11, 0, 3.0), c(0.0, 0.0));
        assert_eq!(potential_at(&v, 5, 0, 4.0), c(0.0, 0.0));
        assert_eq!(potential_at(&v, 5, 0, 2.0), c(0.0, -10.0));
        let two = PotentialSpec {
            boxes: vec![PotentialBox::all_bands(1, 10, 2, 4.0, 8.0, c(0.0, 10.0))],
        };
        assert_eq!(potential_at(&two, 5, 0, 6.0), c(0.0, 10.0));
        assert_eq!(potential_at(&two, 5, 1, 6.0), c(0.0, 10.0));
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        // hops far below the floating-point resolution decouple the sites
        let m = chain(&[(-1, 1e-300), (1, 1e-300)]);
        let h = build_truncated(&m, 3, Boundary::Open).unwrap();
        let v = PotentialSpec {
            boxes: vec![PotentialBox::all_bands(1, 3, 1, 0.0, 10.0, c(0.0, -10.0))],
        };
        let dt = 1e-3;
        let mut psi = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        for k in 0..1000 {
            psi = rk4_step(&h, &v, &psi, k as f64 * dt, dt).unwrap();
        }
        let exact = (-10.0f64).exp();
        assert!((psi[0].norm() - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn stability_bound_enforced() {
        let h = build_truncated(&five_term(), 20, Boundary::Open).unwrap();
        let psi = vec![c(1.0, 0.0); 20];
        assert!(rk4_step(&h, &obstacle(), &psi, 0.0, 0.1).is_err());
    }

    #[test]
    fn eigenstate_single_step_phase() {
        let m = five_term();
        let mode = build_skin_mode(&m, c(0.0, 0.35), 300).unwrap();
        let h = build_truncated(&m, 300, Boundary::Open).unwrap();
        let dt = 1e-3;
        let next = rk4_step(&h, &PotentialSpec::none(), &mode.amplitudes, 0.0, dt).unwrap();
        let f = (c(0.0, -1.0) * mode.energy * dt).exp();
        // compare away from the cut right edge
        for i in 0..250 {
            assert!((next[i] - f * mode.amplitudes[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn growth_rates() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        assert!((growth_rate(&t, &v, (0.0, 10.0)).unwrap() + 1.0).abs() < 1e-12);
        assert!(growth_rate(&t, &v, (0.0, 0.5)).is_err());
    }

    #[test]
    fn unperturbed_mode_norm_grows_at_twice_im_energy() {
        let m = five_term();
        let mode = build_skin_mode(&m, c(0.0, 0.35), 300).unwrap();
        let mut p = EvolveParams::defaults_for(&m);
        p.t_end = 2.0;
        let tr = evolve(&m, InitialState::Mode(&mode), &PotentialSpec::none(), &p).unwrap();
        let slope = log_growth_rate(&tr.times, &tr.norm_sq_log, (0.0, 2.0)).unwrap();
        assert!((slope - 0.70).abs() < 1e-9);
        assert!(tr.eps.iter().all(|e| *e == 0.0));
        let cls = classify_healing(&tr, &ClassifierThresholds::default());
        assert_eq!(cls.verdict, ObservedVerdict::Healed);
        assert!(cls.trivial);
    }

    #[test]
    fn formulations_agree_before_edge_effects() {
        let m = five_term();
        let mode = build_skin_mode(&m, c(0.0, 0.35), 300).unwrap();
        let mut p = EvolveParams::defaults_for(&m);
        p.t_end = 5.0;
        let dev = evolve(&m, InitialState::Mode(&mode), &obstacle(), &p).unwrap();
        p.formulation = SkinFormulation::Direct;
        let dir = evolve(&m, InitialState::Mode(&mode), &obstacle(), &p).unwrap();
        let i = dev.times.iter().position(|t| (*t - 4.0).abs() < 1e-9).unwrap();
        let rel = (dev.eps[i] - dir.eps[i]).abs() / dev.eps[i];
        assert!(rel < 1e-3, "{} vs {}", dev.eps[i], dir.eps[i]);
    }

    #[test]
    fn arbitrary_state_without_potential_has_zero_deviation() {
        let m = five_term();
        let mut p = EvolveParams::defaults_for(&m);
        p.n_sites = 60;
        p.t_end = 1.0;
        let psi0: Vec<Complex64> = (0..60).map(|i| c((-(i as f64) / 5.0).exp(), 0.0)).collect();
        let tr = evolve(&m, InitialState::Vector(psi0), &PotentialSpec::none(), &p).unwrap();
        assert!(tr.eps.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn tail_check_counterexample_and_zero() {
        let xi: Vec<Complex64> = (1..=200).map(|n| c(0.99f64.powi(n), 0.0)).collect();
        let r = tail_check_profile(&xi, 1, 20, 1.0);
        assert!(!r.pass && !r.vacuous);
        assert!((r.slope - 0.99f64.ln()).abs() < 1e-12);
        let zero = vec![c(0.0, 0.0); 200];
        let r = tail_check_profile(&zero, 1, 20, 1.0);
        assert!(r.pass && r.vacuous);
    }

    #[test]
    fn invalid_run_is_inconclusive() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
        let mut tr = EvolutionTrace {
            eps: times.iter().map(|t| (-t).exp()).collect(),
            norm_sq_log: vec![0.0; 101],
            xi_norm_log: vec![0.0; 101],
            edge_guard: vec![0.0; 101],
            times,
            snapshots: vec![],
            first_breach: Some(1.0),
            n_sites: 10,
            bands: 1,
            dt: 1e-3,
            lightcone_velocity: 1.0,
            potential_off: 0.0,
            potential_extent: 0,
        };
        let th = ClassifierThresholds::default();
        assert_eq!(classify_healing(&tr, &th).verdict, ObservedVerdict::Inconclusive);
        tr.first_breach = None;
        assert_eq!(classify_healing(&tr, &th).verdict, ObservedVerdict::Healed);
    }
}
