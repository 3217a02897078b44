use std::collections::BTreeMap;
use std::time::Instant;

use clap::ValueEnum;
use nmsse::config::{BathSpec, ExperimentConfig};
use nmsse::ensemble::{prepare, run_ensemble, write_ensemble_csv, ComparisonTarget, EnsembleResult};
use nmsse::io::{fmt_f64, write_density_csv};
use nmsse::model::{markov_comb_horizon, BathModel, SystemModel};
use nmsse::noise::{validate_strategy, NoiseStatsReport, RngStream};
use nmsse::numerics::{commutator, hermitian_asymmetry, max_abs, StateVector};
use nmsse::oracle::{analytic_dephasing, bargmann_project, propagate_total, CoherentSample};
use nmsse::solver::{run_trajectory, write_trajectory_csv, ClosureKind, FOCK_LEAK_ERROR, FOCK_LEAK_WARN};

use crate::error::CliError;
use crate::manifest::Check;

const Z_LIMIT: f64 = 4.0;
const ORACLE_TOL: f64 = 0.02;
const FINITE_T_ORACLE_TOL: f64 = 0.03;
const LINDBLAD_TOL: f64 = 0.05;
const ANALYTIC_TOL: f64 = 0.02;
const ASYMMETRY_TOL: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-6;
const ORACLE_TRACE_TOL: f64 = 1e-9;
const ORACLE_ANALYTIC_TOL: f64 = 1e-6;
/// Upper bound on identity samples; `--trajectories` can lower it.
const IDENTITY_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    ValidateNoise,
    Trajectory,
    Ensemble,
    Oracle,
    MarkovLimit,
    BargmannIdentity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ValidateNoise => "validate-noise",
            Experiment::Trajectory => "trajectory",
            Experiment::Ensemble => "ensemble",
            Experiment::Oracle => "oracle",
            Experiment::MarkovLimit => "markov-limit",
            Experiment::BargmannIdentity => "bargmann-identity",
        }
    }
}

/// What an experiment produced: named CSV bodies, checks and phase timings.
#[derive(Default)]
pub struct Outcome {
    pub tables: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
    pub timings: BTreeMap<String, f64>,
}

impl Outcome {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(format!("{phase}_seconds"), start.elapsed().as_secs_f64());
        out
    }

    fn table(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> nmsse::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.tables.push((name.to_string(), buf));
        Ok(())
    }
}

struct Setup {
    sys: SystemModel,
    bath: BathModel,
    psi0: StateVector,
}

fn setup(config: &ExperimentConfig) -> Result<Setup, CliError> {
    config.validate().map_err(CliError::Config)?;
    Ok(Setup {
        sys: config.system_model().map_err(CliError::Config)?,
        bath: config.bath_model().map_err(CliError::Config)?,
        psi0: config.system.initial_state.clone(),
    })
}

pub fn run(experiment: Experiment, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(config)?;
    match experiment {
        Experiment::ValidateNoise => validate_noise(config, &s),
        Experiment::Trajectory => trajectory(config, &s),
        Experiment::Ensemble => ensemble(config, &s),
        Experiment::Oracle => oracle(config, &s),
        Experiment::MarkovLimit => markov_limit(config, &s),
        Experiment::BargmannIdentity => bargmann_identity(config, &s),
    }
}

fn validate_noise(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let report = out.time("sampling", || {
        validate_strategy(
            config.noise.strategy,
            &s.bath,
            &s.bath,
            config.grid.t_max,
            config.noise_samples(),
            config.ensemble.master_seed,
        )
    })?;
    out.table("noise_stats.csv", |w| write_noise_csv(w, &report))?;
    let detail = format!(
        "{} samples of {}: mean z {:.2}, pseudo-covariance z {:.2}, covariance z {:.2}",
        report.n_samples,
        config.noise.strategy.name(),
        report.max_z_mean(),
        report.max_z_pseudo_covariance(),
        report.max_z_covariance()
    );
    out.checks.push(Check::below("noise_max_z", report.max_z(), Z_LIMIT, detail));
    Ok(out)
}

fn write_noise_csv(w: &mut Vec<u8>, report: &NoiseStatsReport) -> nmsse::Result<()> {
    use std::io::Write;
    writeln!(w, "moment,t_first,t_second,re_empirical,im_empirical,re_target,im_target,stderr,z_score")?;
    for (moment, c) in report.checks() {
        let fields = [c.t_first, c.t_second, c.empirical.re, c.empirical.im, c.target.re, c.target.im, c.stderr, c.z_score];
        let row: Vec<String> = fields.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{moment},{}", row.join(","))?;
    }
    Ok(())
}

/// The first ensemble member: trajectory index 1 of the master seed.
fn trajectory(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let cfg = config.ensemble_config(vec![]).map_err(CliError::Config)?;
    let states = out.time("trajectory", || -> nmsse::Result<_> {
        let (closure, sampler) = prepare(&s.sys, &s.bath, &cfg)?;
        let noise = sampler.sample(&RngStream::new(cfg.master_seed, 1));
        run_trajectory(&s.sys, &closure, &noise, &cfg.grid, &s.psi0)
    })?;
    out.table("trajectory.csv", |w| write_trajectory_csv(w, &states))?;
    let final_norm = states.last().map_or(f64::NAN, |st| st.psi.norm_squared());
    out.checks.push(Check::flag(
        "trajectory_finite",
        final_norm.is_finite(),
        format!("{} states, final squared norm {final_norm:.6}", states.len()),
    ));
    Ok(out)
}

/// References an ensemble can be compared with under this configuration.
fn targets_for(config: &ExperimentConfig, s: &Setup) -> Vec<ComparisonTarget> {
    let mut targets = Vec::new();
    if !config.solver.fock_cutoffs.is_empty() {
        targets.push(ComparisonTarget::Oracle);
    }
    if let BathSpec::Markov { gamma, .. } = config.bath.spec {
        targets.push(ComparisonTarget::Lindblad { gamma });
    }
    if analytic_applies(s) {
        targets.push(ComparisonTarget::AnalyticDephasing);
    }
    targets
}

fn analytic_applies(s: &Setup) -> bool {
    let l = s.sys.coupling();
    let diagonal = (0..l.nrows()).all(|j| (0..l.ncols()).all(|k| j == k || l[(j, k)].norm() == 0.0));
    diagonal && max_abs(&commutator(s.sys.hamiltonian(), l)) <= 1e-12 * max_abs(s.sys.hamiltonian()).max(1.0)
}

fn target_tolerance(target: ComparisonTarget, bath: &BathModel) -> f64 {
    match target {
        ComparisonTarget::Oracle if bath.is_zero_temperature() => ORACLE_TOL,
        ComparisonTarget::Oracle => FINITE_T_ORACLE_TOL,
        ComparisonTarget::Lindblad { .. } => LINDBLAD_TOL,
        ComparisonTarget::AnalyticDephasing => ANALYTIC_TOL,
    }
}

fn ensemble_checks(out: &mut Outcome, result: &EnsembleResult, closure: ClosureKind, bath: &BathModel) {
    let z = result.max_trace_z();
    let trace_detail = format!("max |mean trace − 1| / stderr over {} times", result.times.len());
    if closure.is_exact() {
        out.checks.push(Check::below("trace_z", z, Z_LIMIT, trace_detail));
    } else {
        // the weak-coupling closure conserves the mean trace only to its own order
        log::info!("trace z {z:.2} ({trace_detail}); not checked for {}", closure.name());
    }
    out.checks.push(Check::below(
        "hermitian_asymmetry",
        result.diagnostics.max_asymmetry,
        ASYMMETRY_TOL,
        "largest anti-Hermitian part of the mean",
    ));
    for c in &result.comparisons {
        out.checks.push(Check::below(
            &format!("trace_distance_{}", c.target.name()),
            c.max_distance(),
            target_tolerance(c.target, bath),
            format!("max over t of trace distance to {}", c.target.name()),
        ));
    }
    if result.diagnostics.fock_leak_warnings > 0 {
        log::warn!(
            "{} trajectories exceeded top-level population {FOCK_LEAK_WARN:e}",
            result.diagnostics.fock_leak_warnings
        );
    }
}

fn ensemble(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let cfg = config.ensemble_config(targets_for(config, s)).map_err(CliError::Config)?;
    let result = out.time("ensemble", || run_ensemble(&s.sys, &s.bath, &s.psi0, &cfg))?;
    out.table("ensemble.csv", |w| write_ensemble_csv(w, &result))?;
    ensemble_checks(&mut out, &result, cfg.closure, &s.bath);
    Ok(out)
}

fn oracle(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    if config.solver.fock_cutoffs.is_empty() {
        return Err(CliError::Usage("the oracle needs solver.fock_cutoffs".into()));
    }
    let cfg = config.ensemble_config(vec![]).map_err(CliError::Config)?;
    let rhos = out.time("oracle", || {
        nmsse::ensemble::reference_densities(&s.sys, &s.bath, &s.psi0, &cfg, ComparisonTarget::Oracle)
    })?;
    out.table("oracle.csv", |w| write_density_csv(w, &cfg.grid.times(), &rhos))?;
    let trace_gap = rhos.iter().map(|r| (r.trace().re - 1.0).abs()).fold(0.0, f64::max);
    out.checks.push(Check::below("oracle_trace", trace_gap, ORACLE_TRACE_TOL, "max |Tr ρ − 1|"));
    let asym = rhos.iter().map(hermitian_asymmetry).fold(0.0, f64::max);
    out.checks.push(Check::below("oracle_hermitian", asym, ASYMMETRY_TOL, "max anti-Hermitian part"));
    if s.bath.is_zero_temperature() && analytic_applies(s) {
        let exact = analytic_dephasing(&s.sys, &s.bath, &nmsse::numerics::outer(&s.psi0), &cfg.grid.times())?;
        let gap = rhos.iter().zip(&exact).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max);
        out.checks.push(Check::below(
            "oracle_vs_closed_form",
            gap,
            ORACLE_ANALYTIC_TOL,
            "max element difference to the closed-form dephasing solution",
        ));
    }
    Ok(out)
}

fn markov_limit(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    let BathSpec::Markov { gamma, modes, omega_max } = config.bath.spec else {
        return Err(CliError::Usage("markov-limit needs a bath given by markov_gamma/markov_modes/markov_omega_max".into()));
    };
    let horizon = markov_comb_horizon(modes, omega_max);
    if config.grid.t_max > horizon {
        return Err(CliError::Usage(format!(
            "grid.t_max = {} exceeds the comb's white-noise horizon {horizon}",
            config.grid.t_max
        )));
    }
    if config.solver.closure != ClosureKind::DephasingExact {
        return Err(CliError::Usage(format!(
            "markov-limit requires the dephasing_exact closure, got {}",
            config.solver.closure.name()
        )));
    }
    let mut out = Outcome::default();
    let cfg = config.ensemble_config(vec![ComparisonTarget::Lindblad { gamma }]).map_err(CliError::Config)?;
    let result = out.time("ensemble", || run_ensemble(&s.sys, &s.bath, &s.psi0, &cfg))?;
    out.table("markov_limit.csv", |w| write_ensemble_csv(w, &result))?;
    ensemble_checks(&mut out, &result, cfg.closure, &s.bath);
    Ok(out)
}

fn bargmann_identity(config: &ExperimentConfig, s: &Setup) -> Result<Outcome, CliError> {
    if config.solver.closure != ClosureKind::BargmannExact {
        return Err(CliError::Usage(format!(
            "bargmann-identity requires the bargmann_exact closure, got {}",
            config.solver.closure.name()
        )));
    }
    if !s.bath.is_zero_temperature() {
        return Err(CliError::Usage("bargmann-identity is defined at zero temperature".into()));
    }
    let mut out = Outcome::default();
    let cfg = config.ensemble_config(vec![]).map_err(CliError::Config)?;
    let layout = config.layout().map_err(CliError::Config)?;
    let states = out.time("oracle", || propagate_total(&s.sys, &s.bath, &layout, &s.psi0, &cfg.grid))?;
    let n = IDENTITY_SAMPLES.min(cfg.n_trajectories);
    let gaps = out.time("trajectories", || -> nmsse::Result<Vec<f64>> {
        let (closure, sampler) = prepare(&s.sys, &s.bath, &cfg)?;
        (1..=n as u64)
            .map(|k| {
                let noise = sampler.sample(&RngStream::new(cfg.master_seed, k));
                let amplitudes = noise.coherent_amplitudes().expect("mode-sum noise carries amplitudes");
                let a = CoherentSample::new(amplitudes.to_vec())?;
                let traj = run_trajectory(&s.sys, &closure, &noise, &cfg.grid, &s.psi0)?;
                let mut gap: f64 = 0.0;
                for (st, total) in traj.iter().zip(&states) {
                    let projected = bargmann_project(total, &a, &s.bath, true)?;
                    gap = gap.max((&st.psi - projected).iter().map(|z| z.norm()).fold(0.0, f64::max));
                }
                Ok(gap)
            })
            .collect()
    })?;
    out.table("bargmann_identity.csv", |w| {
        use std::io::Write;
        writeln!(w, "trajectory,max_abs_difference")?;
        for (k, g) in gaps.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, fmt_f64(*g))?;
        }
        Ok(())
    })?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    out.checks.push(Check::below(
        "bargmann_identity",
        worst,
        IDENTITY_TOL,
        format!("max |ψ − projected oracle state| over {n} realizations"),
    ));
    let top = states
        .iter()
        .flat_map(|st| layout.top_level_populations(&st.psi))
        .fold(0.0, f64::max);
    out.checks.push(Check::below("oracle_fock_leak", top, FOCK_LEAK_ERROR, "max top-level population"));
    Ok(out)
}
