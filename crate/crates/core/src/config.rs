//! Run configuration: TOML as the canonical format, JSON as a mirror.
//!
//! Documents are parsed strictly into a raw form with optional fields, then
//! resolved into [`RunConfig`] where every default is written out. Emitting a
//! resolved config and parsing it back yields the same value.

use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{ClassifierThresholds, EvolveParams, PotentialBox, PotentialSpec, SkinFormulation};
use crate::laurent::LaurentSymbol;
use crate::model::{BlochModel, Model, SingleBandModel, TwoChainModel};
use crate::spectra::{pbc_spectrum, ScanGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    SingleBand {
        /// `(l, [re, im])` pairs.
        hops: Vec<(i32, Complex64)>,
    },
    TwoChain {
        t1: f64,
        delta_a: f64,
        delta_b: f64,
        t0: f64,
        #[serde(rename = "V")]
        v: f64,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        Ok(match self {
            ModelConfig::SingleBand { hops } => {
                SingleBandModel::new(LaurentSymbol::new(hops.iter().copied())?).into()
            }
            ModelConfig::TwoChain {
                t1,
                delta_a,
                delta_b,
                t0,
                v,
            } => TwoChainModel::new(*t1, *delta_a, *delta_b, *t0, *v)?.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub guard_band: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub formulation: SkinFormulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    SkinMode {
        #[serde(rename = "E0")]
        e0: Complex64,
        /// Which basis mode to use when `|W(E0)| > 1`.
        mode_index: usize,
    },
}

impl InitialConfig {
    pub fn energy(&self) -> Complex64 {
        match self {
            InitialConfig::SkinMode { e0, .. } => *e0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub grid: ScanGrid,
    pub tol: f64,
    pub pbc_k: usize,
    pub winding_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub lattice: LatticeConfig,
    pub integrate: IntegrateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub potential: Vec<PotentialBox>,
    pub scan: ScanConfig,
    pub classifier: ClassifierThresholds,
}

impl RunConfig {
    pub fn model(&self) -> Result<Model> {
        self.model.build()
    }

    pub fn potential_spec(&self) -> PotentialSpec {
        PotentialSpec {
            boxes: self.potential.clone(),
        }
    }

    pub fn evolve_params(&self) -> EvolveParams {
        EvolveParams {
            n_sites: self.lattice.n,
            dt: self.integrate.dt,
            t_end: self.integrate.t_end,
            record_interval: self.integrate.record_interval,
            snapshot_times: self.integrate.snapshot_times.clone(),
            guard_band: self.lattice.guard_band,
            formulation: self.integrate.formulation,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    #[serde(rename = "N")]
    n: Option<usize>,
    guard_band: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrate {
    dt: Option<f64>,
    t_end: Option<f64>,
    record_interval: Option<f64>,
    snapshot_times: Option<Vec<f64>>,
    formulation: Option<SkinFormulation>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawInitial {
    SkinMode {
        #[serde(rename = "E0")]
        e0: Complex64,
        mode_index: Option<usize>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    n_min: usize,
    n_max: usize,
    band_mask: Option<Vec<usize>>,
    t_on: f64,
    t_off: f64,
    value: Complex64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    grid: Option<RawGrid>,
    resolution: Option<usize>,
    tol: Option<f64>,
    pbc_k: Option<usize>,
    winding_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassifier {
    eps_floor: Option<f64>,
    slope_eta: Option<f64>,
    final_window: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelConfig,
    #[serde(default)]
    lattice: RawLattice,
    #[serde(default)]
    integrate: RawIntegrate,
    initial: Option<RawInitial>,
    #[serde(default)]
    potential: Vec<RawBox>,
    #[serde(default)]
    scan: RawScan,
    #[serde(default)]
    classifier: RawClassifier,
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(cfg_err(path, format!("must be positive and finite, got {x}")))
    }
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let model = raw.model.build().map_err(|e| cfg_err("model", e.to_string()))?;
    let bands = model.bands();
    let range = model.max_range();

    let n = raw.lattice.n.unwrap_or(300);
    if n <= 2 * range {
        return Err(cfg_err("lattice.N", format!("need N > 2 max(r, s) = {}", 2 * range)));
    }
    let guard_band = raw.lattice.guard_band.unwrap_or(10 * range);
    if guard_band == 0 || guard_band >= n {
        return Err(cfg_err("lattice.guard_band", format!("must lie in 1..{n}")));
    }

    let mut potential = Vec::with_capacity(raw.potential.len());
    for (i, b) in raw.potential.into_iter().enumerate() {
        let pb = PotentialBox {
            n_min: b.n_min,
            n_max: b.n_max,
            band_mask: b.band_mask.unwrap_or_else(|| (0..bands).collect()),
            t_on: b.t_on,
            t_off: b.t_off,
            value: b.value,
        };
        PotentialSpec { boxes: vec![pb.clone()] }
            .validate(bands)
            .map_err(|e| cfg_err(&format!("potential[{i}]"), e.to_string()))?;
        potential.push(pb);
    }

    let dt = positive("integrate.dt", raw.integrate.dt.unwrap_or(1e-3))?;
    let t_end = positive("integrate.t_end", raw.integrate.t_end.unwrap_or(20.0))?;
    let record_interval = positive("integrate.record_interval", raw.integrate.record_interval.unwrap_or(0.01))?;
    let snapshot_times = match raw.integrate.snapshot_times {
        Some(v) => v,
        None => {
            let off = PotentialSpec {
                boxes: potential.clone(),
            }
            .switch_off();
            if off > 0.0 && off < t_end {
                vec![off, t_end]
            } else {
                vec![t_end]
            }
        }
    };
    if let Some(t) = snapshot_times.iter().find(|t| !(0.0..=t_end).contains(*t)) {
        return Err(cfg_err("integrate.snapshot_times", format!("{t} outside [0, t_end]")));
    }

    let initial = raw.initial.map(|r| match r {
        RawInitial::SkinMode { e0, mode_index } => InitialConfig::SkinMode {
            e0,
            mode_index: mode_index.unwrap_or(0),
        },
    });

    let pbc_k = raw.scan.pbc_k.unwrap_or(1024);
    if pbc_k < 64 {
        return Err(cfg_err("scan.pbc_k", "need at least 64 samples"));
    }
    let winding_k = raw.scan.winding_k.unwrap_or(1024);
    if winding_k < 256 {
        return Err(cfg_err("scan.winding_k", "need at least 256 samples"));
    }
    let tol = positive("scan.tol", raw.scan.tol.unwrap_or(1e-8))?;
    let cells = raw.scan.resolution.unwrap_or(ScanGrid::DEFAULT_CELLS);
    let grid = match raw.scan.grid {
        Some(g) => ScanGrid {
            re_min: g.re_min,
            re_max: g.re_max,
            im_min: g.im_min,
            im_max: g.im_max,
            nx: g.nx.unwrap_or(cells),
            ny: g.ny.unwrap_or(cells),
        },
        None => {
            let pbc = pbc_spectrum(&model, pbc_k).map_err(|e| cfg_err("scan", e.to_string()))?;
            ScanGrid::around_loop(&pbc, cells)
        }
    };
    grid.validate().map_err(|e| cfg_err("scan.grid", e.to_string()))?;

    let d = ClassifierThresholds::default();
    let classifier = ClassifierThresholds {
        eps_floor: positive("classifier.eps_floor", raw.classifier.eps_floor.unwrap_or(d.eps_floor))?,
        slope_eta: positive("classifier.slope_eta", raw.classifier.slope_eta.unwrap_or(d.slope_eta))?,
        final_window: raw.classifier.final_window.unwrap_or(d.final_window),
    };
    if !(classifier.final_window > 0.0 && classifier.final_window <= 1.0) {
        return Err(cfg_err("classifier.final_window", "must lie in (0, 1]"));
    }

    Ok(RunConfig {
        model: raw.model,
        lattice: LatticeConfig { n, guard_band },
        integrate: IntegrateConfig {
            dt,
            t_end,
            record_interval,
            snapshot_times,
            formulation: raw.integrate.formulation.unwrap_or_default(),
        },
        initial,
        potential,
        scan: ScanConfig {
            grid,
            tol,
            pbc_k,
            winding_k,
        },
        classifier,
    })
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    cfg_err(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
}

fn from_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| cfg_err("<root>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(path_error)
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(path_error)
}

/// Parses a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    resolve(from_toml(text)?)
}

/// Parses the JSON mirror of a run configuration.
pub fn parse_config_json(text: &str) -> Result<RunConfig> {
    resolve(from_json(text)?)
}

/// Reads a config file; `.json` selects the JSON mirror, anything else TOML.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(&path.display().to_string(), e.to_string()))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_config_json(&text)
    } else {
        parse_config(&text)
    }
}

/// Canonical TOML with every default written out.
pub fn emit_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| cfg_err("<root>", e.to_string()))
}

pub fn emit_config_json(cfg: &RunConfig) -> Result<String> {
    serde_json::to_string_pretty(cfg).map_err(|e| cfg_err("<root>", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
[model]
type = "single_band"
hops = [[-2, [1.0, 0.0]], [-1, [1.0, 0.0]], [0, [0.0, 0.0]], [1, [0.7, 0.0]], [2, [0.8, 0.0]]]

[initial]
type = "skin_mode"
E0 = [0.0, 0.35]

[[potential]]
n_min = 1
n_max = 10
t_on = 2.0
t_off = 4.0
value = [0.0, -10.0]
"#;

    #[test]
    fn defaults_are_resolved() {
        let cfg = parse_config(FIG2).unwrap();
        assert_eq!(cfg.lattice.n, 300);
        assert_eq!(cfg.lattice.guard_band, 20);
        assert_eq!(cfg.integrate.dt, 1e-3);
        assert_eq!(cfg.integrate.t_end, 20.0);
        assert_eq!(cfg.integrate.snapshot_times, vec![4.0, 20.0]);
        assert_eq!(cfg.potential[0].band_mask, vec![0]);
        assert_eq!(cfg.scan.grid.nx, 400);
        assert_eq!(cfg.initial.unwrap().energy(), Complex64::new(0.0, 0.35));
        let m = cfg.model().unwrap();
        assert_eq!((m.left_range(), m.right_range()), (2, 2));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = parse_config(FIG2).unwrap();
        let text = emit_config(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn json_mirror_round_trip() {
        let cfg = parse_config(FIG2).unwrap();
        let text = emit_config_json(&cfg).unwrap();
        assert_eq!(parse_config_json(&text).unwrap(), cfg);
    }

    #[test]
    fn two_chain_model() {
        let cfg = parse_config(
            "[model]\ntype = \"two_chain\"\nt1 = 0.75\ndelta_a = 0.25\ndelta_b = -0.15\nt0 = 0.05\nV = 0.8\n",
        )
        .unwrap();
        assert!(matches!(cfg.model().unwrap(), Model::TwoChain(_)));
        assert_eq!(cfg.lattice.guard_band, 10);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = parse_config(&FIG2.replace("n_max = 10", "n_max = 10\nwidth = 3")).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(path.starts_with("potential"), "{path}");
                assert!(message.contains("width"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn loose_symbol_rejected() {
        let err = parse_config("[model]\ntype = \"single_band\"\nhops = [[-1, [1.0, 0.0]], [1, [0.0, 0.0]]]\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "model"));
    }

    #[test]
    fn small_lattice_rejected() {
        let err = parse_config(&format!("{FIG2}\n[lattice]\nN = 4\n")).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "lattice.N"));
    }
}
