//! Monte Carlo reconstruction of the reduced density operator.
//!
//! Trajectory `k` (1-based) always draws its noise from
//! `RngStream(master_seed, k)`. Trajectories are grouped into fixed blocks of
//! [`BLOCK_SIZE`]; each block keeps running means and second moments, and
//! blocks are merged by a pairwise tree over the block index. The result is
//! therefore bit-identical for any number of workers.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{tabulate_kernel, BathModel, SystemModel};
use crate::noise::{NoiseSampler, NoiseStrategy, RngStream};
use crate::numerics::{
    hermitian_asymmetry, hermitize, outer, trace_distance, ComplexMatrix, SpaceLayout, StateVector, C64,
};
use crate::oracle::{
    analytic_dephasing, bargmann_project, lindblad_solve, propagate_total, reduced_density,
    thermal_oracle, CoherentSample, TotalState,
};
use crate::noise::standard_circular;
use crate::solver::{
    closure_bargmann, closure_born, closure_dephasing, for_each_state, ClosureKind, ClosureScratch,
    KernelSource, MemoryClosure, FOCK_LEAK_WARN,
};

/// Trajectories per accumulation block.
pub const BLOCK_SIZE: usize = 64;
/// Largest tolerated anti-Hermitian part of a mean density.
pub const ASYMMETRY_LIMIT: f64 = 1e-9;
/// Default number of thermal initial-state draws for the finite-T oracle.
pub const DEFAULT_ORACLE_SAMPLES: usize = 10_000;

/// Reference dynamics an ensemble can be compared against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ComparisonTarget {
    /// Exact propagation of the truncated total state (thermal-sampled at T > 0).
    Oracle,
    /// Lindblad dephasing at rate `gamma`.
    Lindblad { gamma: f64 },
    /// Closed-form dephasing (diagonal coupling commuting with `H`).
    AnalyticDephasing,
}

impl ComparisonTarget {
    pub fn name(&self) -> &'static str {
        match self {
            ComparisonTarget::Oracle => "oracle",
            ComparisonTarget::Lindblad { .. } => "lindblad",
            ComparisonTarget::AnalyticDephasing => "analytic_dephasing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub closure: ClosureKind,
    pub noise: NoiseStrategy,
    pub grid: TimeGrid,
    /// Fock cutoffs per mode; used by the exact closure and the oracle.
    pub fock_cutoffs: Vec<usize>,
    pub targets: Vec<ComparisonTarget>,
    /// Thermal draws for the finite-temperature oracle.
    pub oracle_samples: usize,
    pub workers: usize,
}

impl EnsembleConfig {
    pub fn new(n_trajectories: usize, master_seed: u64, closure: ClosureKind, noise: NoiseStrategy, grid: TimeGrid) -> Self {
        Self {
            n_trajectories,
            master_seed,
            closure,
            noise,
            grid,
            fock_cutoffs: Vec::new(),
            targets: Vec::new(),
            oracle_samples: DEFAULT_ORACLE_SAMPLES,
            workers: default_workers(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(Error::InvalidParameter(format!(
                "an ensemble needs at least 2 trajectories, got {}",
                self.n_trajectories
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("worker count must be positive".into()));
        }
        if self.closure == ClosureKind::BargmannExact && self.noise != NoiseStrategy::ModeSum {
            return Err(Error::Incompatible(format!(
                "bargmann_exact needs mode_sum noise, got {}",
                self.noise.name()
            )));
        }
        Ok(())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Trajectory-norm and truncation diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    /// Largest squared norm of any trajectory at any time.
    pub max_norm_sq: f64,
    /// Median squared norm at the final time.
    pub median_final_norm_sq: f64,
    /// Trajectories whose top Fock level exceeded the warning threshold.
    pub fock_leak_warnings: usize,
    /// Largest anti-Hermitian part of the mean before symmetrization.
    pub max_asymmetry: f64,
}

/// Per-time distance to one reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub target: ComparisonTarget,
    pub reference: Vec<ComplexMatrix>,
    pub distances: Vec<f64>,
}

impl Comparison {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// Mean density over the first `n_trajectories` trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixMean {
    pub n_trajectories: usize,
    pub rho_mean: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub times: Vec<f64>,
    pub rho_mean: Vec<ComplexMatrix>,
    /// Standard error of each element, real and imaginary parts combined in
    /// quadrature.
    pub rho_stderr: Vec<nalgebra::DMatrix<f64>>,
    pub trace_mean: Vec<f64>,
    pub trace_stderr: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub comparisons: Vec<Comparison>,
    /// Block-aligned prefixes near N/4, N/2 and N.
    pub prefixes: Vec<PrefixMean>,
}

impl EnsembleResult {
    /// `½√d·‖stderr‖_F` at grid index `j`: a scale for the trace distance
    /// that sampling noise alone produces.
    pub fn aggregate_stderr(&self, j: usize) -> f64 {
        let s = &self.rho_stderr[j];
        0.5 * (s.nrows() as f64).sqrt() * s.norm()
    }

    pub fn comparison(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.target.name() == name)
    }

    /// Largest `|Tr ρ − 1| / stderr(Tr)` over all times (exact agreement
    /// with zero stderr counts as 0).
    pub fn max_trace_z(&self) -> f64 {
        self.trace_mean
            .iter()
            .zip(&self.trace_stderr)
            .map(|(m, s)| z_score((m - 1.0).abs(), *s))
            .fold(0.0, f64::max)
    }
}

fn z_score(deviation: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        deviation / stderr
    } else if deviation <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Running first and second moments of projectors and norms at every time.
#[derive(Clone, Debug)]
struct Accumulator {
    dim: usize,
    count: usize,
    mean: Vec<C64>,
    m2: Vec<f64>,
    trace_mean: Vec<f64>,
    trace_m2: Vec<f64>,
    final_norms: Vec<f64>,
    max_norm_sq: f64,
    leak_warnings: usize,
}

impl Accumulator {
    fn new(n_times: usize, dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![C64::new(0.0, 0.0); n_times * dim * dim],
            m2: vec![0.0; n_times * dim * dim],
            trace_mean: vec![0.0; n_times],
            trace_m2: vec![0.0; n_times],
            final_norms: Vec::new(),
            max_norm_sq: 0.0,
            leak_warnings: 0,
        }
    }

    fn n_times(&self) -> usize {
        self.trace_mean.len()
    }

    fn begin(&mut self) {
        self.count += 1;
    }

    /// Adds `|ψ⟩⟨ψ|` at grid index `j` for the current trajectory.
    fn add(&mut self, j: usize, psi: &StateVector) {
        let n = self.count as f64;
        let d = self.dim;
        let base = j * d * d;
        for r in 0..d {
            for c in 0..d {
                let x = psi[r] * psi[c].conj();
                let idx = base + r * d + c;
                let delta = x - self.mean[idx];
                self.mean[idx] += delta / n;
                self.m2[idx] += delta.norm_sqr() * (n - 1.0) / n;
            }
        }
        let norm = psi.norm_squared();
        let delta = norm - self.trace_mean[j];
        self.trace_mean[j] += delta / n;
        self.trace_m2[j] += delta * delta * (n - 1.0) / n;
        self.max_norm_sq = self.max_norm_sq.max(norm);
        if j + 1 == self.n_times() {
            self.final_norms.push(norm);
        }
    }

    fn merge(a: &Self, b: &Self) -> Self {
        if a.count == 0 {
            return b.clone();
        }
        if b.count == 0 {
            return a.clone();
        }
        let (na, nb) = (a.count as f64, b.count as f64);
        let n = na + nb;
        let mut out = a.clone();
        out.count = a.count + b.count;
        for i in 0..a.mean.len() {
            let delta = b.mean[i] - a.mean[i];
            out.mean[i] = a.mean[i] + delta * (nb / n);
            out.m2[i] = a.m2[i] + b.m2[i] + delta.norm_sqr() * na * nb / n;
        }
        for j in 0..a.trace_mean.len() {
            let delta = b.trace_mean[j] - a.trace_mean[j];
            out.trace_mean[j] = a.trace_mean[j] + delta * (nb / n);
            out.trace_m2[j] = a.trace_m2[j] + b.trace_m2[j] + delta * delta * na * nb / n;
        }
        out.final_norms.extend_from_slice(&b.final_norms);
        out.max_norm_sq = a.max_norm_sq.max(b.max_norm_sq);
        out.leak_warnings = a.leak_warnings + b.leak_warnings;
        out
    }

    fn reduce(blocks: &[Self]) -> Self {
        match blocks.len() {
            0 => unreachable!("reduce over no blocks"),
            1 => blocks[0].clone(),
            len => {
                let (left, right) = blocks.split_at(len / 2);
                Self::merge(&Self::reduce(left), &Self::reduce(right))
            }
        }
    }

    fn mean_matrix(&self, j: usize) -> ComplexMatrix {
        let d = self.dim;
        ComplexMatrix::from_fn(d, d, |r, c| self.mean[j * d * d + r * d + c])
    }

    fn stderr_matrix(&self, j: usize) -> nalgebra::DMatrix<f64> {
        let d = self.dim;
        let n = self.count as f64;
        nalgebra::DMatrix::from_fn(d, d, |r, c| {
            if self.count < 2 {
                0.0
            } else {
                (self.m2[j * d * d + r * d + c] / (n - 1.0) / n).sqrt()
            }
        })
    }
}

/// Runs `per_item(k, acc)` for `k = 1..=n` in fixed blocks on `workers`
/// threads and returns the block accumulators in index order.
fn accumulate_blocks<F>(n: usize, n_times: usize, dim: usize, workers: usize, per_item: F) -> Result<Vec<Accumulator>>
where
    F: Fn(u64, &mut Accumulator) -> Result<()> + Sync,
{
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<Accumulator>> = pool.install(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = Accumulator::new(n_times, dim);
                let end = ((b + 1) * BLOCK_SIZE).min(n);
                for k in (b * BLOCK_SIZE + 1)..=end {
                    per_item(k as u64, &mut acc)
                        .map_err(|e| Error::Trajectory { index: k as u64, source: Box::new(e) })?;
                }
                Ok(acc)
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Block counts for the convergence prefixes (≈ N/4, N/2, N).
fn prefix_blocks(n: usize) -> Vec<usize> {
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let mut out: Vec<usize> = [4, 2]
        .iter()
        .map(|f| ((n / f) as f64 / BLOCK_SIZE as f64).round().clamp(1.0, n_blocks as f64) as usize)
        .collect();
    out.push(n_blocks);
    out.dedup();
    out
}

fn finish(blocks: &[Accumulator], times: Vec<f64>, master_seed: u64) -> Result<EnsembleResult> {
    let total = Accumulator::reduce(blocks);
    let n_times = total.n_times();
    let mut max_asymmetry: f64 = 0.0;
    let mut rho_mean = Vec::with_capacity(n_times);
    for j in 0..n_times {
        let raw = total.mean_matrix(j);
        max_asymmetry = max_asymmetry.max(hermitian_asymmetry(&raw));
        rho_mean.push(hermitize(&raw));
    }
    if max_asymmetry > ASYMMETRY_LIMIT {
        return Err(Error::NotHermitian { name: "ensemble mean density".into(), asymmetry: max_asymmetry });
    }
    log::debug!("hermitized ensemble mean (asymmetry before: {max_asymmetry:.3e})");
    let mut norms = total.final_norms.clone();
    norms.sort_by(f64::total_cmp);
    let median = if norms.is_empty() {
        f64::NAN
    } else if norms.len() % 2 == 1 {
        norms[norms.len() / 2]
    } else {
        0.5 * (norms[norms.len() / 2 - 1] + norms[norms.len() / 2])
    };
    let n = total.count as f64;
    let prefixes = prefix_blocks(total.count)
        .into_iter()
        .map(|m| {
            let part = Accumulator::reduce(&blocks[..m]);
            PrefixMean {
                n_trajectories: part.count,
                rho_mean: (0..n_times).map(|j| hermitize(&part.mean_matrix(j))).collect(),
            }
        })
        .collect();
    Ok(EnsembleResult {
        n_trajectories: total.count,
        master_seed,
        times,
        rho_stderr: (0..n_times).map(|j| total.stderr_matrix(j)).collect(),
        rho_mean,
        trace_mean: total.trace_mean.clone(),
        trace_stderr: total
            .trace_m2
            .iter()
            .map(|m2| if total.count < 2 { 0.0 } else { (m2 / (n - 1.0) / n).sqrt() })
            .collect(),
        diagnostics: Diagnostics {
            max_norm_sq: total.max_norm_sq,
            median_final_norm_sq: median,
            fock_leak_warnings: total.leak_warnings,
            max_asymmetry,
        },
        comparisons: Vec::new(),
        prefixes,
    })
}

/// Closure and noise sampler for a configuration.
pub fn prepare(sys: &SystemModel, bath: &BathModel, config: &EnsembleConfig) -> Result<(MemoryClosure, NoiseSampler)> {
    config.validate()?;
    let grid = &config.grid;
    let kernel = match (config.closure, config.noise) {
        (ClosureKind::BornWeakCoupling, _) | (_, NoiseStrategy::GridFactorization) => Some(tabulate_kernel(bath, grid)?),
        _ => None,
    };
    let sampler = match config.noise {
        NoiseStrategy::GridFactorization => NoiseSampler::from_kernel(kernel.as_ref().expect("kernel tabulated"))?,
        strategy => NoiseSampler::new(strategy, bath, &grid.refined())?,
    };
    let closure = match config.closure {
        ClosureKind::DephasingExact => closure_dephasing(sys, KernelSource::Bath(bath))?,
        ClosureKind::BornWeakCoupling => closure_born(sys, kernel.as_ref().expect("kernel tabulated")),
        ClosureKind::BargmannExact => {
            let layout = SpaceLayout::new(sys.dim(), config.fock_cutoffs.clone())?;
            closure_bargmann(sys, bath, &layout)?
        }
    };
    Ok((closure, sampler))
}

/// Averages `|ψ_k(t)⟩⟨ψ_k(t)|` over `config.n_trajectories` trajectories and
/// compares the mean with every requested target.
pub fn run_ensemble(sys: &SystemModel, bath: &BathModel, psi0: &StateVector, config: &EnsembleConfig) -> Result<EnsembleResult> {
    let (closure, sampler) = prepare(sys, bath, config)?;
    let grid = config.grid;
    let blocks = accumulate_blocks(config.n_trajectories, grid.len(), sys.dim(), config.workers, |k, acc| {
        let noise = sampler.sample(&RngStream::new(config.master_seed, k));
        acc.begin();
        let mut j = 0;
        let mut leaked = false;
        for_each_state(sys, &closure, &noise, &grid, psi0, |state| {
            if let ClosureScratch::Bargmann { top_level, .. } = &state.scratch {
                leaked |= *top_level > FOCK_LEAK_WARN;
            }
            acc.add(j, &state.psi);
            j += 1;
            Ok(())
        })?;
        acc.leak_warnings += usize::from(leaked);
        Ok(())
    })?;
    let mut result = finish(&blocks, grid.times(), config.master_seed)?;
    for target in &config.targets {
        let reference = reference_densities(sys, bath, psi0, config, *target)?;
        let distances = result
            .rho_mean
            .iter()
            .zip(&reference)
            .map(|(a, b)| trace_distance(a, b))
            .collect::<Result<Vec<_>>>()?;
        result.comparisons.push(Comparison { target: *target, reference, distances });
    }
    Ok(result)
}

/// Reference reduced densities on `config.grid`.
pub fn reference_densities(
    sys: &SystemModel,
    bath: &BathModel,
    psi0: &StateVector,
    config: &EnsembleConfig,
    target: ComparisonTarget,
) -> Result<Vec<ComplexMatrix>> {
    let grid = &config.grid;
    match target {
        ComparisonTarget::Oracle => {
            let layout = SpaceLayout::new(sys.dim(), config.fock_cutoffs.clone())?;
            if bath.is_zero_temperature() {
                reduced_density(&propagate_total(sys, bath, &layout, psi0, grid)?)
            } else {
                let mut rng = RngStream::new(config.master_seed, 0).rng();
                Ok(thermal_oracle(sys, bath, &layout, psi0, grid, config.oracle_samples, &mut rng)?.rhos)
            }
        }
        ComparisonTarget::Lindblad { gamma } => lindblad_solve(sys, gamma, &outer(psi0), grid),
        ComparisonTarget::AnalyticDephasing => analytic_dephasing(sys, bath, &outer(psi0), &grid.times()),
    }
}

/// Averages the projectors of `bargmann_project(Ψ(t), a, rotate = true)`
/// over `n_samples` draws of `a` from the Gaussian measure; sample `k` uses
/// `RngStream(seed, k)`.
pub fn bargmann_measure_average(
    states: &[TotalState],
    bath: &BathModel,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<EnsembleResult> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n_samples}")));
    }
    let dim = states.first().map_or(0, |s| s.layout.system_dim());
    let blocks = accumulate_blocks(n_samples, states.len(), dim, workers, |k, acc| {
        let mut rng = RngStream::new(seed, k).rng();
        let a = CoherentSample::new(bath.modes().iter().map(|_| standard_circular(&mut rng)).collect())?;
        acc.begin();
        for (j, state) in states.iter().enumerate() {
            acc.add(j, &bargmann_project(state, &a, bath, true)?);
        }
        Ok(())
    })?;
    finish(&blocks, states.iter().map(|s| s.t).collect(), seed)
}

/// Weighted mean of projectors, Hermitized, with element-wise standard
/// errors. Weights default to `1/N`; a single trajectory has stderr 0.
pub fn average_density(
    trajectories: &[StateVector],
    weights: Option<&[f64]>,
) -> Result<(ComplexMatrix, nalgebra::DMatrix<f64>)> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot average an empty set of trajectories".into()))?;
    let d = first.len();
    if trajectories.iter().any(|t| t.len() != d) {
        return Err(Error::DimensionMismatch("trajectories have different dimensions".into()));
    }
    let n = trajectories.len();
    let uniform = vec![1.0 / n as f64; n];
    let w = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::DimensionMismatch(format!("{} weights for {n} trajectories", w.len())))
        }
        Some(w) => w,
        None => &uniform,
    };
    let projectors: Vec<ComplexMatrix> = trajectories.iter().map(outer).collect();
    let mut mean = ComplexMatrix::zeros(d, d);
    for (p, wk) in projectors.iter().zip(w) {
        mean += p * C64::new(*wk, 0.0);
    }
    let mut stderr = nalgebra::DMatrix::<f64>::zeros(d, d);
    if n > 1 {
        for (p, wk) in projectors.iter().zip(w) {
            stderr += (p - &mean).map(|x| x.norm_sqr() * wk * wk);
        }
        stderr = stderr.map(|v| (v * n as f64 / (n - 1) as f64).sqrt());
    }
    Ok((hermitize(&mean), stderr))
}

/// Agreement of an ensemble with a reference series.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub distances: Vec<f64>,
    pub max_distance: f64,
    /// Largest `|mean − target| / stderr` over elements and times.
    pub max_z: f64,
    /// `(N, time-averaged trace distance)` for each prefix.
    pub prefix_distances: Vec<(usize, f64)>,
    /// Least-squares slope of log distance against log N.
    pub slope: Option<f64>,
}

pub fn convergence_report(result: &EnsembleResult, target: &[ComplexMatrix]) -> Result<ConvergenceReport> {
    if target.len() != result.rho_mean.len() {
        return Err(Error::Incompatible(format!(
            "target has {} times, ensemble has {}",
            target.len(),
            result.rho_mean.len()
        )));
    }
    let distances = result
        .rho_mean
        .iter()
        .zip(target)
        .map(|(a, b)| trace_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut max_z: f64 = 0.0;
    for ((mean, se), tgt) in result.rho_mean.iter().zip(&result.rho_stderr).zip(target) {
        for (idx, s) in se.iter().enumerate() {
            max_z = max_z.max(z_score((mean[idx] - tgt[idx]).norm(), *s));
        }
    }
    let prefix_distances = result
        .prefixes
        .iter()
        .map(|p| {
            let total = p
                .rho_mean
                .iter()
                .zip(target)
                .map(|(a, b)| trace_distance(a, b))
                .sum::<Result<f64>>()?;
            Ok((p.n_trajectories, total / target.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = fit_slope(&prefix_distances);
    Ok(ConvergenceReport {
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        distances,
        max_z,
        prefix_distances,
        slope,
    })
}

fn fit_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, d)| *d > 0.0)
        .map(|(n, d)| ((*n as f64).ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// CSV: `t`, Re/Im of every element, per-element stderr, trace, and one
/// trace-distance column per comparison.
pub fn write_ensemble_csv<W: Write>(out: &mut W, result: &EnsembleResult) -> Result<()> {
    use crate::io::fmt_f64;
    let d = result.rho_mean.first().map_or(0, |r| r.nrows());
    let mut header = vec!["t".to_string()];
    for r in 0..d {
        for c in 0..d {
            header.push(format!("re_rho_{r}_{c}"));
            header.push(format!("im_rho_{r}_{c}"));
        }
    }
    for r in 0..d {
        for c in 0..d {
            header.push(format!("stderr_rho_{r}_{c}"));
        }
    }
    header.push("trace".into());
    header.push("trace_stderr".into());
    for cmp in &result.comparisons {
        header.push(format!("distance_{}", cmp.target.name()));
    }
    writeln!(out, "{}", header.join(","))?;
    for j in 0..result.times.len() {
        let rho = &result.rho_mean[j];
        let mut row = vec![fmt_f64(result.times[j])];
        for r in 0..d {
            for c in 0..d {
                row.push(fmt_f64(rho[(r, c)].re));
                row.push(fmt_f64(rho[(r, c)].im));
            }
        }
        for r in 0..d {
            for c in 0..d {
                row.push(fmt_f64(result.rho_stderr[j][(r, c)]));
            }
        }
        row.push(fmt_f64(result.trace_mean[j]));
        row.push(fmt_f64(result.trace_stderr[j]));
        for cmp in &result.comparisons {
            row.push(fmt_f64(cmp.distances[j]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
