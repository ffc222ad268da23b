//! Experiment subcommands shared by the `skinheal` binary and the tests.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{emit_config, InitialConfig, RunConfig};
use crate::error::{Error, Result};
use crate::evolution::{classify_healing, evolve, Classification, EvolutionTrace, InitialState, ObservedVerdict};
use crate::model::{build_truncated, Boundary, Model};
use crate::output::{fmt_f64, write_atomic, write_json, Csv};
use crate::skin::{build_skin_modes, mode_residual, SkinMode};
use crate::spectra::{
    compute_threshold, obc_gbz_scan, pbc_spectrum, predict_self_healing, winding_map, GbzSet, PredictedVerdict,
    Prediction, ThresholdReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Gbz,
    WindingMap,
    Threshold,
    SkinMode,
    Evolve,
    HealTest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Gbz => "gbz",
            Command::WindingMap => "winding-map",
            Command::Threshold => "threshold",
            Command::SkinMode => "skin-mode",
            Command::Evolve => "evolve",
            Command::HealTest => "heal-test",
        }
    }
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub e0: Option<Complex64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let bad = |path: &str, msg: String| Error::Config {
            path: path.into(),
            message: msg,
        };
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(bad("--dt", format!("must be positive, got {dt}")));
            }
            cfg.integrate.dt = dt;
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad("--t-end", format!("must be positive, got {t}")));
            }
            cfg.integrate.t_end = t;
            cfg.integrate.snapshot_times.retain(|s| *s <= t);
        }
        if let Some(e0) = self.e0 {
            cfg.initial = Some(match cfg.initial {
                Some(InitialConfig::SkinMode { mode_index, .. }) => InitialConfig::SkinMode { e0, mode_index },
                None => InitialConfig::SkinMode { e0, mode_index: 0 },
            });
        }
        Ok(())
    }
}

fn c_pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn require_initial(cfg: &RunConfig) -> Result<(Complex64, usize)> {
    match cfg.initial {
        Some(InitialConfig::SkinMode { e0, mode_index }) => Ok((e0, mode_index)),
        None => Err(Error::Config {
            path: "initial".into(),
            message: "this subcommand needs an initial skin-mode energy E0".into(),
        }),
    }
}

fn pick_mode(model: &Model, cfg: &RunConfig) -> Result<SkinMode> {
    let (e0, index) = require_initial(cfg)?;
    let mut modes = build_skin_modes(model, e0, cfg.lattice.n)?;
    if index >= modes.len() {
        return Err(Error::IndexOutOfRange {
            index: index + 1,
            len: modes.len(),
        });
    }
    Ok(modes.swap_remove(index))
}

fn write_pbc(model: &Model, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let pbc = pbc_spectrum(model, cfg.scan.pbc_k)?;
    let mut csv = Csv::new(&["k", "ReE", "ImE", "band"]);
    for p in &pbc.samples {
        csv.row(&[fmt_f64(p.k), fmt_f64(p.energy.re), fmt_f64(p.energy.im), p.band.to_string()]);
    }
    csv.write(out, "pbc.csv")
}

fn write_gbz(gbz: &GbzSet, out: &Path) -> Result<PathBuf> {
    let mut csv = Csv::new(&["Rebeta", "Imbeta", "ReE", "ImE"]);
    for p in &gbz.points {
        csv.row(&[
            fmt_f64(p.beta.re),
            fmt_f64(p.beta.im),
            fmt_f64(p.energy.re),
            fmt_f64(p.energy.im),
        ]);
    }
    csv.write(out, "gbz.csv")
}

fn threshold(model: &Model, cfg: &RunConfig) -> Result<(GbzSet, ThresholdReport)> {
    let gbz = obc_gbz_scan(model, &cfg.scan.grid, cfg.scan.tol)?;
    let th = compute_threshold(model, &gbz, &cfg.scan.grid)?;
    Ok((gbz, th))
}

#[derive(Serialize)]
struct ModeJson {
    #[serde(rename = "E0")]
    e0: [f64; 2],
    roots: Vec<[f64; 2]>,
    #[serde(rename = "W")]
    w: i32,
    residual: f64,
    coefficients: Vec<[f64; 2]>,
    normalization: crate::skin::Normalization,
    #[serde(rename = "N")]
    n: usize,
    bands: usize,
}

fn write_mode(model: &Model, mode: &SkinMode, out: &Path) -> Result<Vec<PathBuf>> {
    let h = build_truncated(model, mode.n_sites, Boundary::Open)?;
    let residual = mode_residual(&h, mode)?;
    let mut csv = Csv::new(&["n", "band", "Repsi", "Impsi"]);
    for n in 1..=mode.n_sites {
        for b in 0..mode.bands {
            let z = mode.amplitudes[(n - 1) * mode.bands + b];
            csv.row(&[n.to_string(), b.to_string(), fmt_f64(z.re), fmt_f64(z.im)]);
        }
    }
    let meta = ModeJson {
        e0: c_pair(mode.energy),
        roots: mode.roots_used.iter().map(|z| c_pair(*z)).collect(),
        w: mode.winding,
        residual,
        coefficients: mode.coefficients.iter().map(|z| c_pair(*z)).collect(),
        normalization: mode.normalization,
        n: mode.n_sites,
        bands: mode.bands,
    };
    Ok(vec![csv.write(out, "mode.csv")?, write_json(out, "mode.json", &meta)?])
}

fn write_trace(trace: &EvolutionTrace, out: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = Csv::new(&["t", "norm_sq_log", "eps", "xi_norm_log", "edge_guard"]);
    for i in 0..trace.times.len() {
        csv.row(&[
            fmt_f64(trace.times[i]),
            fmt_f64(trace.norm_sq_log[i]),
            fmt_f64(trace.eps[i]),
            fmt_f64(trace.xi_norm_log[i]),
            fmt_f64(trace.edge_guard[i]),
        ]);
    }
    let mut snaps = Csv::new(&["t", "n", "band", "Repsi", "Impsi"]);
    let mut devs = Csv::new(&["t", "n", "band", "Rexi", "Imxi"]);
    let b = trace.bands;
    for s in &trace.snapshots {
        for (i, (p, x)) in s.psi.iter().zip(&s.xi).enumerate() {
            let (n, band) = ((i / b + 1).to_string(), (i % b).to_string());
            snaps.row(&[fmt_f64(s.t), n.clone(), band.clone(), fmt_f64(p.re), fmt_f64(p.im)]);
            devs.row(&[fmt_f64(s.t), n, band, fmt_f64(x.re), fmt_f64(x.im)]);
        }
    }
    Ok(vec![
        csv.write(out, "trace.csv")?,
        snaps.write(out, "snapshots.csv")?,
        devs.write(out, "deviation.csv")?,
    ])
}

/// Theory vs simulation for one skin-mode run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HealReport {
    pub predicted: PredictedVerdict,
    pub observed: ObservedVerdict,
    pub margin: f64,
    pub run_valid: bool,
    #[serde(rename = "E0")]
    pub e0: [f64; 2],
    #[serde(rename = "W")]
    pub winding: Option<i32>,
    #[serde(rename = "E_m")]
    pub e_m: f64,
    pub indeterminate: bool,
    pub agree: bool,
    pub first_breach: Option<f64>,
    pub eps_max: f64,
    pub eps_final: f64,
    pub final_slope: f64,
    pub trivial: bool,
}

impl HealReport {
    pub fn new(e0: Complex64, th: &ThresholdReport, pred: &Prediction, trace: &EvolutionTrace, cls: &Classification) -> Self {
        let agree = matches!(
            (pred.verdict, cls.verdict),
            (PredictedVerdict::SelfHealing, ObservedVerdict::Healed)
                | (PredictedVerdict::NotSelfHealing, ObservedVerdict::NotHealed)
        );
        Self {
            predicted: pred.verdict,
            observed: cls.verdict,
            margin: pred.margin,
            run_valid: trace.run_valid(),
            e0: c_pair(e0),
            winding: pred.winding,
            e_m: th.e_m,
            indeterminate: pred.indeterminate,
            agree,
            first_breach: trace.first_breach,
            eps_max: cls.eps_max,
            eps_final: cls.eps_final,
            final_slope: cls.final_slope,
            trivial: cls.trivial,
        }
    }
}

/// Prediction, mode construction, evolution and classification for the
/// configured initial energy.
pub fn heal_test(model: &Model, cfg: &RunConfig, th: &ThresholdReport) -> Result<(HealReport, EvolutionTrace)> {
    let (e0, _) = require_initial(cfg)?;
    let pred = predict_self_healing(model, e0, th)?;
    let mode = pick_mode(model, cfg)?;
    let trace = evolve(
        model,
        InitialState::Mode(&mode),
        &cfg.potential_spec(),
        &cfg.evolve_params(),
    )?;
    let cls = classify_healing(&trace, &cfg.classifier);
    Ok((HealReport::new(e0, th, &pred, &trace, &cls), trace))
}

/// Runs `cmd` and writes its artifacts (plus the resolved config) to `out`.
pub fn run_subcommand(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let model = cfg.model()?;
    let mut files = vec![write_atomic(out, "config.resolved.toml", emit_config(cfg)?.as_bytes())?];
    match cmd {
        Command::Spectrum => files.push(write_pbc(&model, cfg, out)?),
        Command::Gbz => {
            let gbz = obc_gbz_scan(&model, &cfg.scan.grid, cfg.scan.tol)?;
            files.push(write_gbz(&gbz, out)?);
        }
        Command::WindingMap => {
            let map = winding_map(&model, &cfg.scan.grid)?;
            let g = &map.grid;
            let mut csv = Csv::new(&["ReE", "ImE", "W"]);
            for j in 0..=g.ny {
                for i in 0..=g.nx {
                    let e = g.node(i, j);
                    let w = map.get(i, j).map_or_else(|| "nan".to_string(), |w| w.to_string());
                    csv.row(&[fmt_f64(e.re), fmt_f64(e.im), w]);
                }
            }
            files.push(csv.write(out, "winding.csv")?);
        }
        Command::Threshold => {
            let (gbz, th) = threshold(&model, cfg)?;
            files.push(write_gbz(&gbz, out)?);
            files.push(write_json(out, "threshold.json", &th)?);
        }
        Command::SkinMode => {
            let mode = pick_mode(&model, cfg)?;
            files.extend(write_mode(&model, &mode, out)?);
        }
        Command::Evolve => {
            let mode = pick_mode(&model, cfg)?;
            let trace = evolve(
                &model,
                InitialState::Mode(&mode),
                &cfg.potential_spec(),
                &cfg.evolve_params(),
            )?;
            files.extend(write_trace(&trace, out)?);
        }
        Command::HealTest => {
            let (_, th) = threshold(&model, cfg)?;
            let (report, trace) = heal_test(&model, cfg, &th)?;
            files.push(write_json(out, "threshold.json", &th)?);
            files.extend(write_trace(&trace, out)?);
            files.push(write_json(out, "verdict.json", &report)?);
        }
    }
    Ok(files)
}

/// Machine-readable error document.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

/// Parses `re,im` (or a single real number).
pub fn parse_complex(text: &str) -> std::result::Result<Complex64, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re,im`, got `{text}`")),
    }
}
