//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [system]
//! dim = 2
//! hamiltonian = [0.5, 0]
//!               [0, -0.5]
//! coupling = [1, 0]
//!            [0, -1]
//! initial_state = [0.7071067811865476, 0.7071067811865476]
//!
//! [bath]
//! temperature = 0
//! modes = [0.0625, 1]        # one row [g, omega] per mode
//! ```
//!
//! Section headers start in the first column. A line that begins with
//! whitespace followed by `[` continues the matrix of the previous entry.
//! Complex numbers are written `a+bi`, `a-bi`, `bi` or `a`. Unknown sections
//! and keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ensemble::{ComparisonTarget, EnsembleConfig, DEFAULT_ORACLE_SAMPLES};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{markov_reference_bath, BathMode, BathModel, SystemModel};
use crate::noise::NoiseStrategy;
use crate::numerics::{check_hermitian, ComplexMatrix, SpaceLayout, StateVector, C64};
use crate::solver::ClosureKind;

/// Allowed deviation of the initial state's norm from 1.
pub const INITIAL_NORM_TOL: f64 = 1e-9;
/// Default sample count for noise validation.
pub const DEFAULT_NOISE_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSection {
    pub dim: usize,
    pub hamiltonian: ComplexMatrix,
    pub coupling: ComplexMatrix,
    pub initial_state: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BathSpec {
    /// Explicit `(g, omega)` pairs.
    Modes(Vec<(f64, f64)>),
    /// White-noise comb with rate `gamma`.
    Markov { gamma: f64, modes: usize, omega_max: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BathSection {
    pub temperature: f64,
    pub spec: BathSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSection {
    pub strategy: NoiseStrategy,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSection {
    pub closure: ClosureKind,
    pub fock_cutoffs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSection {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub oracle_samples: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: None, formats: vec![OutputFormat::Csv, OutputFormat::Json] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub bath: BathSection,
    pub grid: GridSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub ensemble: EnsembleSection,
    pub output: OutputSection,
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigSchema { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn system_model(&self) -> Result<SystemModel> {
        SystemModel::new(self.system.hamiltonian.clone(), self.system.coupling.clone())
    }

    pub fn bath_model(&self) -> Result<BathModel> {
        match &self.bath.spec {
            BathSpec::Modes(modes) => BathModel::new(
                modes.iter().map(|&(g, w)| BathMode::new(g, w)).collect::<Result<_>>()?,
                self.bath.temperature,
            ),
            BathSpec::Markov { gamma, modes, omega_max } => markov_reference_bath(*gamma, *modes, *omega_max),
        }
    }

    pub fn n_modes(&self) -> usize {
        match &self.bath.spec {
            BathSpec::Modes(m) => m.len(),
            BathSpec::Markov { modes, .. } => *modes,
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t_max, self.grid.dt)
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        if self.solver.fock_cutoffs.len() != self.n_modes() {
            return Err(schema(
                "solver.fock_cutoffs",
                format!("{} cutoffs for {} modes", self.solver.fock_cutoffs.len(), self.n_modes()),
            ));
        }
        SpaceLayout::new(self.system.dim, self.solver.fock_cutoffs.clone())
    }

    pub fn noise_samples(&self) -> usize {
        self.noise.samples.unwrap_or(DEFAULT_NOISE_SAMPLES)
    }

    pub fn ensemble_config(&self, targets: Vec<ComparisonTarget>) -> Result<EnsembleConfig> {
        let mut cfg = EnsembleConfig::new(
            self.ensemble.n_trajectories,
            self.ensemble.master_seed,
            self.solver.closure,
            self.noise.strategy,
            self.time_grid()?,
        );
        cfg.fock_cutoffs = self.solver.fock_cutoffs.clone();
        cfg.targets = targets;
        cfg.oracle_samples = self.ensemble.oracle_samples.unwrap_or(DEFAULT_ORACLE_SAMPLES);
        if let Some(w) = self.ensemble.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }

    /// Semantic checks beyond the syntax: Hermiticity, shapes, grid
    /// divisibility and section consistency.
    pub fn validate(&self) -> Result<()> {
        let d = self.system.dim;
        for (name, m) in [("system.hamiltonian", &self.system.hamiltonian), ("system.coupling", &self.system.coupling)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(schema(name, format!("expected {d}x{d}, got {}x{}", m.nrows(), m.ncols())));
            }
            check_hermitian(m, name)?;
        }
        if self.system.initial_state.len() != d {
            return Err(schema(
                "system.initial_state",
                format!("expected {d} amplitudes, got {}", self.system.initial_state.len()),
            ));
        }
        let norm = self.system.initial_state.norm();
        if (norm - 1.0).abs() > INITIAL_NORM_TOL {
            return Err(schema("system.initial_state", format!("must be normalized (norm {norm})")));
        }
        if !(self.bath.temperature >= 0.0 && self.bath.temperature.is_finite()) {
            return Err(schema("bath.temperature", "must be finite and non-negative"));
        }
        if matches!(self.bath.spec, BathSpec::Markov { .. }) && self.bath.temperature != 0.0 {
            return Err(schema("bath.temperature", "the Markov comb is defined at zero temperature"));
        }
        self.bath_model().map_err(|e| schema("bath", e.to_string()))?;
        self.time_grid().map_err(|e| schema("grid.dt", e.to_string()))?;
        if !self.solver.fock_cutoffs.is_empty() || self.solver.closure == ClosureKind::BargmannExact {
            self.layout().map_err(|e| match e {
                Error::ConfigSchema { .. } => e,
                other => schema("solver.fock_cutoffs", other.to_string()),
            })?;
        }
        if self.ensemble.n_trajectories < 2 {
            return Err(schema("ensemble.n_trajectories", "must be at least 2"));
        }
        if self.ensemble.workers == Some(0) {
            return Err(schema("ensemble.workers", "must be positive"));
        }
        if self.ensemble.oracle_samples == Some(0) {
            return Err(schema("ensemble.oracle_samples", "must be positive"));
        }
        if self.noise.samples == Some(0) {
            return Err(schema("noise.samples", "must be positive"));
        }
        Ok(())
    }

    /// Text form accepted by [`parse_config`]; floats are written with
    /// enough digits to round-trip exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[system]");
        let _ = writeln!(s, "dim = {}", self.system.dim);
        write_matrix(&mut s, "hamiltonian", &self.system.hamiltonian);
        write_matrix(&mut s, "coupling", &self.system.coupling);
        let _ = writeln!(
            s,
            "initial_state = [{}]",
            self.system.initial_state.iter().map(|z| fmt_complex(*z)).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(s, "\n[bath]");
        let _ = writeln!(s, "temperature = {:?}", self.bath.temperature);
        match &self.bath.spec {
            BathSpec::Modes(modes) if modes.is_empty() => {
                let _ = writeln!(s, "modes = []");
            }
            BathSpec::Modes(modes) => {
                for (i, (g, w)) in modes.iter().enumerate() {
                    if i == 0 {
                        let _ = writeln!(s, "modes = [{g:?}, {w:?}]");
                    } else {
                        let _ = writeln!(s, "        [{g:?}, {w:?}]");
                    }
                }
            }
            BathSpec::Markov { gamma, modes, omega_max } => {
                let _ = writeln!(s, "markov_gamma = {gamma:?}");
                let _ = writeln!(s, "markov_modes = {modes}");
                let _ = writeln!(s, "markov_omega_max = {omega_max:?}");
            }
        }
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "t_max = {:?}", self.grid.t_max);
        let _ = writeln!(s, "dt = {:?}", self.grid.dt);
        let _ = writeln!(s, "\n[noise]");
        let _ = writeln!(s, "strategy = {}", self.noise.strategy.name());
        if let Some(n) = self.noise.samples {
            let _ = writeln!(s, "samples = {n}");
        }
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "closure = {}", self.solver.closure.name());
        let _ = writeln!(
            s,
            "fock_cutoffs = [{}]",
            self.solver.fock_cutoffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(s, "\n[ensemble]");
        let _ = writeln!(s, "n_trajectories = {}", self.ensemble.n_trajectories);
        let _ = writeln!(s, "master_seed = {}", self.ensemble.master_seed);
        if let Some(n) = self.ensemble.oracle_samples {
            let _ = writeln!(s, "oracle_samples = {n}");
        }
        if let Some(n) = self.ensemble.workers {
            let _ = writeln!(s, "workers = {n}");
        }
        let _ = writeln!(s, "\n[output]");
        if let Some(dir) = &self.output.directory {
            let _ = writeln!(s, "directory = {dir}");
        }
        let _ = writeln!(
            s,
            "formats = [{}]",
            self.output.formats.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
        );
        s
    }
}

fn fmt_complex(z: C64) -> String {
    if z.im == 0.0 && z.im.is_sign_positive() {
        format!("{:?}", z.re)
    } else {
        format!("{:?}{:+?}i", z.re, z.im)
    }
}

fn write_matrix(s: &mut String, key: &str, m: &ComplexMatrix) {
    let indent = " ".repeat(key.len() + 3);
    for r in 0..m.nrows() {
        let row = (0..m.ncols()).map(|c| fmt_complex(m[(r, c)])).collect::<Vec<_>>().join(", ");
        if r == 0 {
            let _ = writeln!(s, "{key} = [{row}]");
        } else {
            let _ = writeln!(s, "{indent}[{row}]");
        }
    }
}

/// Parses `a`, `bi`, `a+bi`, `a-bi` (with optional exponents).
pub fn parse_complex(text: &str) -> Option<C64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let Some(body) = t.strip_suffix('i') else {
        return parse_real(t).map(|re| C64::new(re, 0.0));
    };
    // split at the last sign that is not leading and not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (parse_real(&body[..k])?, parse_imag(&body[k..])?),
        None => (0.0, parse_imag(body)?),
    };
    Some(C64::new(re, im))
}

fn parse_imag(text: &str) -> Option<f64> {
    match text {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        t => parse_real(t),
    }
}

fn parse_real(text: &str) -> Option<f64> {
    // reject forms like "inf" and "nan" that f64::from_str accepts
    if !text.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Bracketed rows of a list or matrix value, one `Vec` per line.
type Rows = Vec<Vec<String>>;

/// A value as written: either one scalar token or bracketed rows.
#[derive(Clone, Debug)]
enum RawValue {
    Scalar(String),
    Rows(Rows),
}

#[derive(Clone, Debug)]
struct RawEntry {
    line: usize,
    value: RawValue,
}

type RawSection = BTreeMap<String, RawEntry>;

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_row(text: &str, line: usize) -> Result<Vec<String>> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::ConfigSyntax { line, message: format!("expected a bracketed row, got `{text}`") })?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            if item.is_empty() {
                Err(Error::ConfigSyntax { line, message: "empty list element".into() })
            } else {
                Ok(item.to_string())
            }
        })
        .collect()
}

fn parse_raw(text: &str) -> Result<BTreeMap<String, RawSection>> {
    let mut sections: BTreeMap<String, RawSection> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut last_key: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indented = content.starts_with(char::is_whitespace);
        if !indented && trimmed.starts_with('[') {
            let name = trimmed
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .filter(|n| is_identifier(n))
                .ok_or_else(|| Error::ConfigSyntax { line, message: format!("malformed section header `{trimmed}`") })?;
            if sections.contains_key(name) {
                return Err(Error::ConfigSyntax { line, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.to_string(), RawSection::new());
            current = Some(name.to_string());
            last_key = None;
            continue;
        }
        let section = current
            .as_ref()
            .ok_or_else(|| Error::ConfigSyntax { line, message: "entry before any section header".into() })?;
        let entries = sections.get_mut(section).expect("section exists");
        if indented && trimmed.starts_with('[') {
            let key = last_key
                .as_ref()
                .ok_or_else(|| Error::ConfigSyntax { line, message: "continuation row without an entry".into() })?;
            let row = parse_row(trimmed, line)?;
            match &mut entries.get_mut(key).expect("entry exists").value {
                RawValue::Rows(rows) => rows.push(row),
                RawValue::Scalar(_) => {
                    return Err(Error::ConfigSyntax { line, message: format!("`{key}` is a scalar and cannot take rows") })
                }
            }
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::ConfigSyntax { line, message: format!("expected `key = value`, got `{trimmed}`") })?;
        let key = key.trim();
        let value = value.trim();
        if !is_identifier(key) {
            return Err(Error::ConfigSyntax { line, message: format!("invalid key `{key}`") });
        }
        if value.is_empty() {
            return Err(Error::ConfigSyntax { line, message: format!("missing value for `{key}`") });
        }
        if entries.contains_key(key) {
            return Err(Error::ConfigSyntax { line, message: format!("duplicate key `{key}`") });
        }
        let value = if value.starts_with('[') {
            RawValue::Rows(vec![parse_row(value, line)?])
        } else {
            RawValue::Scalar(value.to_string())
        };
        entries.insert(key.to_string(), RawEntry { line, value });
        last_key = Some(key.to_string());
    }
    Ok(sections)
}

/// Typed access to one section, tracking which keys were consumed.
struct SectionReader<'a> {
    name: &'static str,
    entries: Option<&'a RawSection>,
    used: Vec<&'static str>,
}

impl<'a> SectionReader<'a> {
    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a RawEntry> {
        self.used.push(key);
        self.entries.and_then(|e| e.get(key))
    }

    fn require(&mut self, key: &'static str) -> Result<&'a RawEntry> {
        let path = self.path(key);
        self.raw(key).ok_or_else(|| schema(&path, "missing required key"))
    }

    fn scalar_of(&self, key: &str, entry: &'a RawEntry) -> Result<&'a str> {
        match &entry.value {
            RawValue::Scalar(s) => Ok(s),
            RawValue::Rows(_) => Err(schema(&self.path(key), format!("expected a scalar (line {})", entry.line))),
        }
    }

    fn parse_with<T>(&self, key: &str, entry: &RawEntry, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T> {
        let text = self.scalar_of(key, entry)?;
        f(text).ok_or_else(|| schema(&self.path(key), format!("expected {what}, got `{text}` (line {})", entry.line)))
    }

    fn float(&mut self, key: &'static str) -> Result<f64> {
        let e = self.require(key)?;
        self.parse_with(key, e, "a finite number", parse_real)
    }

    fn opt_float(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key) {
            Some(e) => self.parse_with(key, e, "a finite number", parse_real).map(Some),
            None => Ok(None),
        }
    }

    fn uint<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<T> {
        let e = self.require(key)?;
        self.parse_with(key, e, "a non-negative integer", |s| s.parse().ok())
    }

    fn opt_uint<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<Option<T>> {
        match self.raw(key) {
            Some(e) => self.parse_with(key, e, "a non-negative integer", |s| s.parse().ok()).map(Some),
            None => Ok(None),
        }
    }

    fn word(&mut self, key: &'static str) -> Result<&'a str> {
        let e = self.require(key)?;
        self.scalar_of(key, e)
    }

    fn rows(&mut self, key: &'static str) -> Result<Option<(usize, &'a Rows)>> {
        let path = self.path(key);
        match self.raw(key) {
            None => Ok(None),
            Some(RawEntry { line, value: RawValue::Rows(r) }) => Ok(Some((*line, r))),
            Some(RawEntry { line, .. }) => Err(schema(&path, format!("expected a bracketed list (line {line})"))),
        }
    }

    fn complex_rows(&mut self, key: &'static str) -> Result<Vec<Vec<C64>>> {
        let path = self.path(key);
        let (line, rows) = self.rows(key)?.ok_or_else(|| schema(&path, "missing required key"))?;
        rows.iter()
            .map(|row| {
                row.iter()
                    .map(|item| {
                        parse_complex(item).ok_or_else(|| {
                            schema(&path, format!("expected a complex number, got `{item}` (entry at line {line})"))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    fn matrix(&mut self, key: &'static str) -> Result<ComplexMatrix> {
        let path = self.path(key);
        let rows = self.complex_rows(key)?;
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(schema(&path, "rows have different lengths"));
        }
        Ok(ComplexMatrix::from_fn(rows.len(), n_cols, |r, c| rows[r][c]))
    }

    fn finish(self) -> Result<()> {
        if let Some(entries) = self.entries {
            if let Some((key, entry)) = entries.iter().find(|(k, _)| !self.used.contains(&k.as_str())) {
                return Err(schema(&self.path(key), format!("unknown key (line {})", entry.line)));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 7] = ["system", "bath", "grid", "noise", "solver", "ensemble", "output"];

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = parse_raw(text)?;
    if let Some(name) = raw.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(schema(name, "unknown section"));
    }
    let section = |name: &'static str, required: bool| -> Result<SectionReader<'_>> {
        let entries = raw.get(name);
        if required && entries.is_none() {
            return Err(schema(name, "missing section"));
        }
        Ok(SectionReader { name, entries, used: Vec::new() })
    };

    let mut sys = section("system", true)?;
    let dim: usize = sys.uint("dim")?;
    let hamiltonian = sys.matrix("hamiltonian")?;
    let coupling = sys.matrix("coupling")?;
    let state_rows = sys.complex_rows("initial_state")?;
    if state_rows.len() != 1 {
        return Err(schema("system.initial_state", "expected a single row"));
    }
    let initial_state = StateVector::from_vec(state_rows.into_iter().next().expect("one row"));
    sys.finish()?;

    let mut bath_r = section("bath", true)?;
    let temperature = bath_r.float("temperature")?;
    let modes = bath_r.rows("modes")?;
    let gamma = bath_r.opt_float("markov_gamma")?;
    let markov_modes: Option<usize> = bath_r.opt_uint("markov_modes")?;
    let omega_max = bath_r.opt_float("markov_omega_max")?;
    let spec = match (modes, gamma, markov_modes, omega_max) {
        (Some((line, rows)), None, None, None) => BathSpec::Modes(
            rows.iter()
                .filter(|r| !r.is_empty() || rows.len() > 1)
                .map(|r| match r.as_slice() {
                    [g, w] => match (parse_real(g), parse_real(w)) {
                        (Some(g), Some(w)) => Ok((g, w)),
                        _ => Err(schema("bath.modes", format!("expected real [g, omega], got [{g}, {w}] (line {line})"))),
                    },
                    _ => Err(schema("bath.modes", format!("each row must be [g, omega] (entry at line {line})"))),
                })
                .collect::<Result<_>>()?,
        ),
        (None, Some(gamma), Some(modes), Some(omega_max)) => BathSpec::Markov { gamma, modes, omega_max },
        (None, None, None, None) => {
            return Err(schema("bath.modes", "missing: give `modes` or the markov_* keys"));
        }
        (Some(_), ..) => return Err(schema("bath.modes", "cannot be combined with markov_* keys")),
        _ => {
            return Err(schema(
                "bath.markov_gamma",
                "markov_gamma, markov_modes and markov_omega_max must be given together",
            ))
        }
    };
    bath_r.finish()?;

    let mut grid_r = section("grid", true)?;
    let grid = GridSection { t_max: grid_r.float("t_max")?, dt: grid_r.float("dt")? };
    grid_r.finish()?;

    let mut noise_r = section("noise", true)?;
    let strategy_name = noise_r.word("strategy")?;
    let strategy = NoiseStrategy::from_name(strategy_name)
        .ok_or_else(|| schema("noise.strategy", format!("unknown strategy `{strategy_name}`")))?;
    let samples = noise_r.opt_uint("samples")?;
    noise_r.finish()?;

    let mut solver_r = section("solver", true)?;
    let closure_name = solver_r.word("closure")?;
    let closure = ClosureKind::from_name(closure_name)
        .ok_or_else(|| schema("solver.closure", format!("unknown closure `{closure_name}`")))?;
    let fock_cutoffs = match solver_r.rows("fock_cutoffs")? {
        None => Vec::new(),
        Some((line, rows)) if rows.len() == 1 => rows[0]
            .iter()
            .map(|c| {
                c.parse::<usize>()
                    .map_err(|_| schema("solver.fock_cutoffs", format!("expected integers, got `{c}` (line {line})")))
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(schema("solver.fock_cutoffs", "expected a single row")),
    };
    solver_r.finish()?;

    let mut ens_r = section("ensemble", true)?;
    let ensemble = EnsembleSection {
        n_trajectories: ens_r.uint("n_trajectories")?,
        master_seed: ens_r.uint("master_seed")?,
        oracle_samples: ens_r.opt_uint("oracle_samples")?,
        workers: ens_r.opt_uint("workers")?,
    };
    ens_r.finish()?;

    let mut out_r = section("output", false)?;
    let mut output = OutputSection::default();
    if let Some(e) = out_r.raw("directory") {
        output.directory = Some(out_r.scalar_of("directory", e)?.to_string());
    }
    if let Some((line, rows)) = out_r.rows("formats")? {
        if rows.len() != 1 {
            return Err(schema("output.formats", "expected a single row"));
        }
        output.formats = rows[0]
            .iter()
            .map(|f| match f.as_str() {
                "csv" => Ok(OutputFormat::Csv),
                "json" => Ok(OutputFormat::Json),
                other => Err(schema("output.formats", format!("unknown format `{other}` (line {line})"))),
            })
            .collect::<Result<_>>()?;
    }
    out_r.finish()?;

    let config = ExperimentConfig {
        system: SystemSection { dim, hamiltonian, coupling, initial_state },
        bath: BathSection { temperature, spec },
        grid,
        noise: NoiseSection { strategy, samples },
        solver: SolverSection { closure, fock_cutoffs },
        ensemble,
        output,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "\
[system]
dim = 2
hamiltonian = [0.5, 0]
              [0, -0.5]
coupling = [1, 0]   # sigma_z
           [0, -1]
initial_state = [0.6, 0.8i]

[bath]
temperature = 0
modes = [0.0625, 1.0]

[grid]
t_max = 1.0
dt = 0.01

[noise]
strategy = mode_sum

[solver]
closure = dephasing_exact
fock_cutoffs = [10]

[ensemble]
n_trajectories = 100
master_seed = 42
";

    #[test]
    fn minimal_config_parses() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.system.dim, 2);
        assert_eq!(c.system.hamiltonian[(1, 1)], C64::new(-0.5, 0.0));
        assert_eq!(c.system.initial_state[1], C64::new(0.0, 0.8));
        assert_eq!(c.bath.spec, BathSpec::Modes(vec![(0.0625, 1.0)]));
        assert_eq!(c.noise.strategy, NoiseStrategy::ModeSum);
        assert_eq!(c.solver.fock_cutoffs, vec![10]);
        assert_eq!(c.ensemble.master_seed, 42);
        assert_eq!(c.output, OutputSection::default());
        assert_eq!(c.time_grid().unwrap().n_steps(), 100);
        assert_eq!(c.layout().unwrap().total_dim(), 22);
    }

    #[test]
    fn complex_literals() {
        let cases = [
            ("1", C64::new(1.0, 0.0)),
            ("-2.5", C64::new(-2.5, 0.0)),
            ("i", C64::new(0.0, 1.0)),
            ("-i", C64::new(0.0, -1.0)),
            ("3i", C64::new(0.0, 3.0)),
            ("1+2i", C64::new(1.0, 2.0)),
            ("1-i", C64::new(1.0, -1.0)),
            ("-1e-3+4.5e+2i", C64::new(-1e-3, 450.0)),
            ("2E3-1E-2i", C64::new(2000.0, -0.01)),
        ];
        for (text, z) in cases {
            assert_eq!(parse_complex(text), Some(z), "{text}");
        }
        for bad in ["", "x", "1+", "nan", "inf", "1+2j", "1++2i"] {
            assert_eq!(parse_complex(bad), None, "{bad}");
        }
    }

    fn expect_schema(text: &str, path: &str) {
        match parse_config(text) {
            Err(Error::ConfigSchema { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected schema error at {path}, got {other:?}"),
        }
    }

    #[test]
    fn missing_grid_section_is_named() {
        let text = MINIMAL.replace("[grid]\nt_max = 1.0\ndt = 0.01\n", "");
        expect_schema(&text, "grid");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("grid"));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        expect_schema(&MINIMAL.replace("dt = 0.01", "dt = 0.01\ndtt = 0.02"), "grid.dtt");
        expect_schema(&format!("{MINIMAL}\n[plot]\nx = 1\n"), "plot");
        expect_schema(&MINIMAL.replace("strategy = mode_sum", "strategy = fft"), "noise.strategy");
    }

    #[test]
    fn non_hermitian_hamiltonian_is_reported() {
        let text = MINIMAL.replace("hamiltonian = [0.5, 0]", "hamiltonian = [0.5, 0.25]");
        match parse_config(&text) {
            Err(Error::NotHermitian { name, asymmetry }) => {
                assert_eq!(name, "system.hamiltonian");
                assert!((asymmetry - 0.25).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse_config(&MINIMAL.replace("dim = 2", "dim 2")) {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_config(&MINIMAL.replace("[bath]", "[bath")) {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("dim = 2"), Err(Error::ConfigSyntax { line: 1, .. })));
    }

    #[test]
    fn semantic_checks() {
        expect_schema(&MINIMAL.replace("dt = 0.01", "dt = 0.3"), "grid.dt");
        expect_schema(&MINIMAL.replace("fock_cutoffs = [10]", "fock_cutoffs = [10, 3]"), "solver.fock_cutoffs");
        expect_schema(&MINIMAL.replace("[0.6, 0.8i]", "[1, 1]"), "system.initial_state");
        expect_schema(&MINIMAL.replace("n_trajectories = 100", "n_trajectories = 1"), "ensemble.n_trajectories");
        expect_schema(
            &MINIMAL.replace("modes = [0.0625, 1.0]", "modes = [0.0625, 1.0]\nmarkov_gamma = 0.1"),
            "bath.modes",
        );
        expect_schema(&MINIMAL.replace("modes = [0.0625, 1.0]", "modes = [0.0625, -1.0]"), "bath");
    }

    #[test]
    fn markov_bath_section() {
        let text = MINIMAL
            .replace("modes = [0.0625, 1.0]", "markov_gamma = 0.4\nmarkov_modes = 64\nmarkov_omega_max = 50")
            .replace("fock_cutoffs = [10]\n", "");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.bath.spec, BathSpec::Markov { gamma: 0.4, modes: 64, omega_max: 50.0 });
        assert_eq!(c.bath_model().unwrap().modes().len(), 64);
        assert_eq!(parse_config(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn minimal_round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.serialize()).unwrap(), c);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e3..1e3f64, Just(0.0), Just(-0.0), 1e-300..1e-290f64]
    }

    prop_compose! {
        fn arb_config()(
            dim in 1usize..4,
            seed in any::<u64>(),
            n in 2usize..100_000,
            entries in proptest::collection::vec((finite(), finite()), 16),
            couplings in proptest::collection::vec(finite(), 16),
            phase in 0.0..std::f64::consts::TAU,
            modes in proptest::collection::vec((1e-4..10.0f64, 1e-3..100.0f64), 0..4),
            temperature in prop_oneof![Just(0.0), 1e-3..5.0f64],
            steps in 1usize..1000,
            dt in 1e-4..0.1f64,
            strategy in 0usize..3,
            closure in 0usize..3,
            samples in proptest::option::of(100usize..1_000_000),
            workers in proptest::option::of(1usize..16),
            directory in proptest::option::of("[a-z][a-z0-9_/]{0,12}"),
        ) -> ExperimentConfig {
            let hamiltonian = ComplexMatrix::from_fn(dim, dim, |r, c| {
                let (re, im) = entries[r.min(c) * 4 + r.max(c)];
                if r == c { C64::new(re, 0.0) } else if r < c { C64::new(re, im) } else { C64::new(re, -im) }
            });
            let coupling = ComplexMatrix::from_fn(dim, dim, |r, c| {
                if r == c { C64::new(couplings[r], 0.0) } else { C64::new(0.0, 0.0) }
            });
            let mut state = StateVector::from_fn(dim, |k, _| C64::from_polar(1.0, phase * (k + 1) as f64));
            state /= C64::new(state.norm(), 0.0);
            let n_modes = modes.len();
            ExperimentConfig {
                system: SystemSection { dim, hamiltonian, coupling, initial_state: state },
                bath: BathSection { temperature, spec: BathSpec::Modes(modes) },
                grid: GridSection { t_max: dt * steps as f64, dt },
                noise: NoiseSection { strategy: NoiseStrategy::ALL[strategy], samples },
                solver: SolverSection { closure: ClosureKind::ALL[closure], fock_cutoffs: vec![3; n_modes] },
                ensemble: EnsembleSection { n_trajectories: n, master_seed: seed, oracle_samples: samples, workers },
                output: OutputSection { directory, formats: vec![OutputFormat::Json] },
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn serialize_parse_round_trip(config in arb_config()) {
            // validation may reject some draws (e.g. dt not dividing t_max after rounding)
            if config.validate().is_ok() {
                let text = config.serialize();
                let parsed = parse_config(&text).unwrap();
                prop_assert_eq!(parsed, config);
            }
        }
    }
}
