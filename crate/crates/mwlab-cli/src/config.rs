//! Experiment configuration: one JSON document plus optional weight and
//! basis files it points to.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mwlab::characteristics::ScanSpec;
use mwlab::exponent::{Exponent, ExponentPair};
use mwlab::extrapolation::{PairOperator, DEFAULT_ORDER};
use mwlab::geometry::{BasisKind, BoxBasis, EnumerationCaps, EnumerationMode, Grid};
use mwlab::maximal::ProbeSpec;
use mwlab::weights::{sample_weight, MatrixWeightField, WeightFamilySpec};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub grid: GridConfig,
    #[serde(default)]
    pub bases: Vec<BasisConfig>,
    #[serde(default)]
    pub weights: Vec<WeightConfig>,
    #[serde(default)]
    pub exponents: Vec<PairConfig>,
    /// Explicit (weight, basis) cells; all combinations when absent.
    #[serde(default)]
    pub cells: Option<Vec<CellRef>>,
    #[serde(default)]
    pub mesh_size: Option<usize>,
    /// Enumeration caps for bases that do not set their own.
    #[serde(default)]
    pub caps: Option<EnumerationCaps>,
    /// Atom pairs per box above which double averages are subsampled.
    #[serde(default)]
    pub pair_cap: Option<usize>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub formats: Option<Vec<Format>>,
    #[serde(default)]
    pub suites: Option<Vec<Suite>>,
    #[serde(default)]
    pub convex: ConvexConfig,
    #[serde(default)]
    pub multiparam: MultiparamConfig,
    #[serde(default)]
    pub extrapolation: Option<ExtrapolationConfig>,
    #[serde(default)]
    pub triviality: TrivialityConfig,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub level: u32,
    #[serde(default)]
    pub alpha: Option<Vec<usize>>,
    #[serde(default)]
    pub atom_cap: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub id: String,
    #[serde(default)]
    pub kind: Option<BasisKind>,
    #[serde(default)]
    pub caps: Option<EnumerationCaps>,
    /// Basis JSON file, relative to the config file.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub id: String,
    #[serde(default)]
    pub spec: Option<WeightFamilySpec>,
    /// Weight JSON file, relative to the config file.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub p: Exponent,
    pub q: Exponent,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRef {
    pub weight: String,
    pub basis: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Relations,
    Convex,
    Extrapolation,
    Multiparam,
    Triviality,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Relations, Suite::Convex, Suite::Extrapolation, Suite::Multiparam, Suite::Triviality];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Relations => "relations",
            Suite::Convex => "convex",
            Suite::Extrapolation => "extrapolation",
            Suite::Multiparam => "multiparam",
            Suite::Triviality => "triviality",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexConfig {
    /// Random body fields per cell.
    pub instances: usize,
}

impl Default for ConvexConfig {
    fn default() -> Self {
        ConvexConfig { instances: 3 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiparamConfig {
    pub instances: usize,
    /// Exponent of the slice check.
    pub p: Exponent,
}

impl Default for MultiparamConfig {
    fn default() -> Self {
        MultiparamConfig { instances: 3, p: Exponent::int(2) }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrivialityConfig {
    pub p: Exponent,
}

impl Default for TrivialityConfig {
    fn default() -> Self {
        TrivialityConfig { p: Exponent::int(2) }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrapolationConfig {
    pub cases: Vec<CaseConfig>,
    pub operators: Vec<PairOperator>,
    #[serde(default = "one")]
    pub instances: usize,
    /// Weights to run; every nondegenerate weight when absent.
    #[serde(default)]
    pub weights: Option<Vec<String>>,
    /// Bases to run; every non-multiparameter basis when absent.
    #[serde(default)]
    pub bases: Option<Vec<String>>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub p0: Exponent,
    pub q0: Exponent,
    pub p: Exponent,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub p: Exponent,
    pub q: Exponent,
    #[serde(default)]
    pub kappas: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default)]
    pub control_amplitudes: Option<Vec<f64>>,
    /// Operator-norm lower bounds over the configured cells.
    #[serde(default)]
    pub kp: Option<KpSweep>,
}

impl ScanConfig {
    pub fn spec(&self) -> ScanSpec {
        let d = ScanSpec::default();
        ScanSpec {
            kappas: self.kappas.clone().unwrap_or(d.kappas),
            amplitudes: self.amplitudes.clone().unwrap_or(d.amplitudes),
            levels: self.levels.clone().unwrap_or(d.levels),
            control_amplitudes: self.control_amplitudes.clone().unwrap_or(d.control_amplitudes),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpSweep {
    pub p: Vec<f64>,
    #[serde(default)]
    pub probes: Option<ProbeSpec>,
}

/// A validated config with every weight and basis materialized.
pub struct Experiment {
    pub config: ExperimentConfig,
    /// The parsed document, echoed into reports.
    pub echo: Value,
    raw: String,
    pub grid: Grid,
    pub weights: Vec<(String, MatrixWeightField)>,
    pub bases: Vec<(String, BoxBasis)>,
    pub pairs: Vec<ExponentPair>,
    /// Indices into `weights` and `bases`.
    pub cells: Vec<(usize, usize)>,
}

/// 1-based line of the first occurrence of `needle` in `raw`.
fn line_of(raw: &str, needle: &str) -> Option<usize> {
    raw.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn at(raw: &str, needle: &str, msg: String) -> CliError {
    match line_of(raw, needle) {
        Some(l) => CliError::config(format!("line {l}: {msg}")),
        None => CliError::config(msg),
    }
}

fn library(raw: &str, needle: &str, what: &str, e: mwlab::Error) -> CliError {
    let msg = format!("{what}: {}: {e}", crate::error_name(&e));
    at(raw, needle, msg)
}

fn read_json(base: &Path, file: &Path) -> Result<Value, CliError> {
    let path = base.join(file);
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Experiment, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Experiment::parse(&raw, base)
    }

    /// Parses and validates `raw`; relative files resolve against `base`.
    pub fn parse(raw: &str, base: &Path) -> Result<Experiment, CliError> {
        let echo: Value = serde_json::from_str(raw).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
        let config: ExperimentConfig =
            serde_json::from_str(raw).map_err(|e| CliError::config(format!("schema violation: {e}")))?;
        let g = &config.grid;
        let grid = match g.atom_cap {
            Some(cap) => Grid::with_cap(g.n, g.level, g.alpha.clone(), cap),
            None => Grid::new(g.n, g.level, g.alpha.clone()),
        }
        .map_err(|e| library(raw, "\"grid\"", "grid", e))?;

        let mut seen = BTreeSet::new();
        let mut bases = Vec::new();
        for b in &config.bases {
            let needle = format!("\"{}\"", b.id);
            if !seen.insert(("basis", b.id.clone())) {
                return Err(at(raw, &needle, format!("duplicate basis id '{}'", b.id)));
            }
            let basis = match (&b.kind, &b.file) {
                (Some(kind), None) => {
                    let mut caps = b.caps.or(config.caps).unwrap_or_default();
                    if b.caps.is_none() && config.caps.is_none() {
                        caps.seed = config.seed.unwrap_or(0);
                    }
                    BoxBasis::enumerate(&grid, *kind, &caps)
                }
                (None, Some(file)) => BoxBasis::from_json(&read_json(base, file)?),
                _ => return Err(at(raw, &needle, format!("basis '{}' needs exactly one of kind, file", b.id))),
            }
            .map_err(|e| library(raw, &needle, &format!("basis '{}'", b.id), e))?;
            if !basis.grid().same_atoms(&grid) {
                return Err(at(raw, &needle, format!("basis '{}' lives on a different grid", b.id)));
            }
            if basis.mode() == EnumerationMode::Sampled && config.seed.is_none() {
                return Err(at(raw, &needle, format!("basis '{}' is sampled; a seed is required", b.id)));
            }
            bases.push((b.id.clone(), basis));
        }

        let mut weights = Vec::new();
        for w in &config.weights {
            let needle = format!("\"{}\"", w.id);
            if !seen.insert(("weight", w.id.clone())) {
                return Err(at(raw, &needle, format!("duplicate weight id '{}'", w.id)));
            }
            let field = match (&w.spec, &w.file) {
                (Some(spec), None) => sample_weight(spec, &grid),
                (None, Some(file)) => MatrixWeightField::from_json(&read_json(base, file)?),
                _ => return Err(at(raw, &needle, format!("weight '{}' needs exactly one of spec, file", w.id))),
            }
            .map_err(|e| library(raw, &needle, &format!("weight '{}'", w.id), e))?;
            if !field.grid().same_atoms(&grid) {
                return Err(at(raw, &needle, format!("weight '{}' lives on a different grid", w.id)));
            }
            weights.push((w.id.clone(), field));
        }

        let mut pairs = Vec::new();
        for e in &config.exponents {
            let pair = ExponentPair::new(e.p, e.q)
                .map_err(|err| at(raw, "\"exponents\"", format!("exponents ({}, {}): {err}", e.p, e.q)))?;
            if e.p.is_one() && e.q.is_infinite() {
                return Err(at(raw, "\"exponents\"", "the pair (1, inf) has no characteristic".into()));
            }
            pairs.push(pair);
        }

        let find_w = |id: &str| weights.iter().position(|(w, _)| w == id);
        let find_b = |id: &str| bases.iter().position(|(b, _)| b == id);
        let cells = match &config.cells {
            Some(list) => {
                let mut cells = Vec::new();
                for c in list {
                    let w = find_w(&c.weight).ok_or_else(|| {
                        at(raw, &format!("\"{}\"", c.weight), format!("unknown weight id '{}'", c.weight))
                    })?;
                    let b = find_b(&c.basis).ok_or_else(|| {
                        at(raw, &format!("\"{}\"", c.basis), format!("unknown basis id '{}'", c.basis))
                    })?;
                    cells.push((w, b));
                }
                cells
            }
            None => (0..weights.len()).flat_map(|w| (0..bases.len()).map(move |b| (w, b))).collect(),
        };

        if let Some(ex) = &config.extrapolation {
            for id in ex.weights.iter().flatten() {
                find_w(id).ok_or_else(|| at(raw, &format!("\"{id}\""), format!("unknown weight id '{id}'")))?;
            }
            for id in ex.bases.iter().flatten() {
                find_b(id).ok_or_else(|| at(raw, &format!("\"{id}\""), format!("unknown basis id '{id}'")))?;
            }
        }
        if config.suites.as_ref().is_some_and(|s| s.contains(&Suite::Extrapolation)) && config.extrapolation.is_none() {
            return Err(at(raw, "\"suites\"", "suite extrapolation needs an extrapolation section".into()));
        }
        if config.pair_cap.is_some() && config.seed.is_none() {
            return Err(at(raw, "\"pair_cap\"", "pair sampling needs a seed".into()));
        }
        if let Some(0) = config.mesh_size {
            return Err(at(raw, "\"mesh_size\"", "mesh_size must be positive".into()));
        }
        if config.order == 0 {
            return Err(at(raw, "\"order\"", "truncation order must be positive".into()));
        }
        Ok(Experiment { config, echo, raw: raw.to_string(), grid, weights, bases, pairs, cells })
    }

    /// Suites that draw random instances need an explicit seed.
    pub fn require_seed(&self, suites: &[Suite]) -> Result<(), CliError> {
        let random = [Suite::Convex, Suite::Multiparam, Suite::Extrapolation];
        match suites.iter().find(|s| random.contains(s)) {
            Some(s) if self.config.seed.is_none() => {
                Err(at(&self.raw, "\"grid\"", format!("suite {} samples random inputs; a seed is required", s.name())))
            }
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    pub fn suites(&self) -> Vec<Suite> {
        let mut s = self.config.suites.clone().unwrap_or_else(|| {
            let mut all = Suite::ALL.to_vec();
            if self.config.extrapolation.is_none() {
                all.retain(|s| *s != Suite::Extrapolation);
            }
            all
        });
        s.sort();
        s.dedup();
        s
    }

    pub fn writes(&self, f: Format) -> bool {
        self.config.formats.as_ref().is_none_or(|fs| fs.contains(&f))
    }
}
