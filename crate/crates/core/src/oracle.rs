//! Exact references: propagation of the truncated system ⊗ bath state,
//! reduced densities, Bargmann projections, thermal initial states and a
//! Lindblad integrator for the white-noise limit.
//!
//! Propagation diagonalizes the total Hamiltonian once and evolves in its
//! eigenbasis, so the oracle carries no time-discretization error.

use rand::Rng;

use crate::bargmann;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{build_total_hamiltonian, BathModel, SystemModel};
use crate::noise::standard_circular;
use crate::numerics::{
    reduced_density_of_state, ComplexMatrix, HermitianSpectrum, SpaceLayout, StateVector, C64, I,
    ONE,
};
use crate::solver::{FOCK_LEAK_ERROR, FOCK_LEAK_WARN};

/// Full system ⊗ Fock state at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalState {
    pub layout: SpaceLayout,
    pub psi: StateVector,
    pub t: f64,
}

/// One coherent amplitude per bath mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentSample {
    amplitudes: Vec<C64>,
}

impl CoherentSample {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("coherent amplitudes".into()));
        }
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
}

/// `ψ_sys ⊗ φ_env` in the layout's ordering (system index outermost).
pub fn product_state(psi_sys: &StateVector, env: &StateVector) -> StateVector {
    psi_sys.kronecker(env)
}

/// The bath vacuum of `layout`.
pub fn vacuum(layout: &SpaceLayout) -> StateVector {
    let mut v = StateVector::zeros(layout.env_dim());
    v[0] = ONE;
    v
}

/// Spectral propagator of the truncated total Hamiltonian.
#[derive(Clone, Debug)]
pub struct TotalPropagator {
    layout: SpaceLayout,
    spectrum: HermitianSpectrum,
}

impl TotalPropagator {
    pub fn new(sys: &SystemModel, bath: &BathModel, layout: &SpaceLayout) -> Result<Self> {
        let h = build_total_hamiltonian(sys, bath, layout)?;
        Ok(Self { layout: layout.clone(), spectrum: HermitianSpectrum::new(&h) })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn spectrum(&self) -> &HermitianSpectrum {
        &self.spectrum
    }

    /// Evolves `initial` to every grid time, checking the Fock truncation.
    pub fn propagate(&self, initial: &StateVector, grid: &TimeGrid) -> Result<Vec<TotalState>> {
        if initial.len() != self.layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state of length {} for total dimension {}",
                initial.len(),
                self.layout.total_dim()
            )));
        }
        let coeffs = self.spectrum.vectors.adjoint() * initial;
        let mut worst: f64 = 0.0;
        let states = grid
            .times()
            .into_iter()
            .map(|t| {
                let psi = self.spectrum.evolve_coefficients(&coeffs, t);
                worst = worst.max(check_leak(&self.layout.top_level_populations(&psi))?);
                Ok(TotalState { layout: self.layout.clone(), psi, t })
            })
            .collect::<Result<Vec<_>>>()?;
        warn_leak(worst, &self.layout);
        Ok(states)
    }
}

fn check_leak(top: &[f64]) -> Result<f64> {
    let (mode, population) = top
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
    if population > FOCK_LEAK_ERROR {
        return Err(Error::FockLeak { mode, population, limit: FOCK_LEAK_ERROR });
    }
    Ok(population)
}

fn warn_leak(worst: f64, layout: &SpaceLayout) {
    if worst > FOCK_LEAK_WARN {
        log::warn!("oracle top Fock population reached {worst:.3e} (cutoffs {:?})", layout.mode_cutoffs());
    }
}

/// Propagates `ψ₀ ⊗ |vacuum⟩` under the total Hamiltonian.
pub fn propagate_total(
    sys: &SystemModel,
    bath: &BathModel,
    layout: &SpaceLayout,
    psi0: &StateVector,
    grid: &TimeGrid,
) -> Result<Vec<TotalState>> {
    if psi0.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for system dimension {}",
            psi0.len(),
            sys.dim()
        )));
    }
    TotalPropagator::new(sys, bath, layout)?.propagate(&product_state(psi0, &vacuum(layout)), grid)
}

/// Partial traces over the bath.
pub fn reduced_density(states: &[TotalState]) -> Result<Vec<ComplexMatrix>> {
    states.iter().map(|s| reduced_density_of_state(&s.psi, &s.layout)).collect()
}

/// `Σ_n Ψ(s, n) Π_i ā_i^{n_i}/√(n_i!)` with `ā_i = a_i*`, or
/// `ā_i = (a_i e^{−iω_i t})*` when `rotate` is set.
pub fn bargmann_project(
    state: &TotalState,
    a: &CoherentSample,
    bath: &BathModel,
    rotate: bool,
) -> Result<StateVector> {
    if a.amplitudes.len() != bath.modes().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes for {} bath modes",
            a.amplitudes.len(),
            bath.modes().len()
        )));
    }
    let z: Vec<C64> = a
        .amplitudes
        .iter()
        .zip(bath.modes())
        .map(|(ai, m)| {
            if rotate {
                (ai * C64::from_polar(1.0, -m.omega() * state.t)).conj()
            } else {
                ai.conj()
            }
        })
        .collect();
    bargmann::evaluate(&state.psi, &state.layout, &z)
}

/// Normalized coherent state `|b⟩` truncated at `cutoff`.
pub fn truncated_coherent_state(b: C64, cutoff: usize) -> StateVector {
    let mut v = StateVector::zeros(cutoff + 1);
    let mut term = ONE;
    v[0] = term;
    for n in 1..=cutoff {
        term = term * b / (n as f64).sqrt();
        v[n] = term;
    }
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// One draw of the Glauber–Sudarshan representation of the thermal state.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalDraw {
    pub sample: CoherentSample,
    /// Environment factor `⊗_i |b_i⟩`, each truncated and renormalized.
    pub bath_state: StateVector,
    /// Draws rejected because some `|b_i|²` exceeded half the cutoff.
    pub resamples: usize,
}

/// Upper bound on rejections before giving up on a cutoff.
pub const MAX_THERMAL_RESAMPLES: usize = 10_000;

/// Draws `b_i` with `E|b_i|² = n̄_i` and returns the product of truncated
/// coherent states.
pub fn sample_thermal_initial<R: Rng + ?Sized>(
    bath: &BathModel,
    layout: &SpaceLayout,
    rng: &mut R,
) -> Result<ThermalDraw> {
    if layout.n_modes() != bath.modes().len() {
        return Err(Error::DimensionMismatch(format!(
            "layout has {} modes but the bath has {}",
            layout.n_modes(),
            bath.modes().len()
        )));
    }
    let scales: Vec<f64> = bath.occupations().iter().map(|n| n.sqrt()).collect();
    let mut resamples = 0;
    loop {
        let b: Vec<C64> = scales.iter().map(|s| standard_circular(rng) * *s).collect();
        let ok = b
            .iter()
            .zip(layout.mode_cutoffs())
            .all(|(bi, &c)| bi.norm_sqr() <= 0.5 * c as f64);
        if ok {
            if resamples > 0 {
                log::warn!("thermal draw needed {resamples} resamples for cutoffs {:?}", layout.mode_cutoffs());
            }
            let bath_state = b
                .iter()
                .zip(layout.mode_cutoffs())
                .fold(StateVector::from_element(1, ONE), |acc, (bi, &c)| {
                    acc.kronecker(&truncated_coherent_state(*bi, c))
                });
            return Ok(ThermalDraw { sample: CoherentSample::new(b)?, bath_state, resamples });
        }
        resamples += 1;
        if resamples >= MAX_THERMAL_RESAMPLES {
            return Err(Error::InvalidParameter(format!(
                "Fock cutoffs {:?} too small for the thermal occupations",
                layout.mode_cutoffs()
            )));
        }
    }
}

/// Reduced dynamics from a mixed initial state.
#[derive(Clone, Debug)]
pub struct MixedOracle {
    pub times: Vec<f64>,
    pub rhos: Vec<ComplexMatrix>,
    /// Largest top-level Fock population seen at the checked times.
    pub max_top_population: f64,
    pub resamples: usize,
}

/// Number of evenly spaced times at which the mixed oracle checks the Fock
/// truncation.
const LEAK_PROBES: usize = 101;

/// `Σ_pq u_p P_pq conj(u_q)`
fn quadratic_form(u: &StateVector, p: &ComplexMatrix) -> C64 {
    let w = p * u.map(|x| x.conj());
    u.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
}

/// Reduced densities for the initial total density `ψ₀ψ₀† ⊗ ρ_env`.
///
/// Works in the eigenbasis of the total Hamiltonian: with `ρ̃ = V†ρ(0)V` and
/// `u_p = e^{−iE_p t}`, each reduced element is `uᵀ P ū` for a fixed matrix
/// `P = ρ̃ ⊙ (V_iᵀ conj V_j)`, where `V_i` holds the rows of system level `i`.
pub fn mixed_oracle(
    propagator: &TotalPropagator,
    psi0: &StateVector,
    rho_env: &ComplexMatrix,
    grid: &TimeGrid,
) -> Result<MixedOracle> {
    let layout = propagator.layout();
    let d = layout.system_dim();
    let env = layout.env_dim();
    if psi0.len() != d || rho_env.nrows() != env || rho_env.ncols() != env {
        return Err(Error::DimensionMismatch(format!(
            "initial factors ({}, {}×{}) do not match layout (system {d}, environment {env})",
            psi0.len(),
            rho_env.nrows(),
            rho_env.ncols()
        )));
    }
    let v = &propagator.spectrum().vectors;
    let total = layout.total_dim();
    let blocks: Vec<ComplexMatrix> = (0..d).map(|s| v.rows(s * env, env).into_owned()).collect();

    // ρ̃ = Y† ρ_env Y with Y = Σ_s conj(ψ_s) V_s
    let mut y = ComplexMatrix::zeros(env, total);
    for (s, block) in blocks.iter().enumerate() {
        y += block * psi0[s].conj();
    }
    let rho_t = y.adjoint() * (rho_env * &y);

    let mut forms = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            let overlap = blocks[i].transpose() * blocks[j].map(|x| x.conj());
            forms.push((i, j, rho_t.component_mul(&overlap)));
        }
    }
    let occ = layout.occupation_table();
    let m = layout.n_modes();
    let leak_forms: Vec<ComplexMatrix> = (0..m)
        .map(|mode| {
            let rows: Vec<usize> = (0..total)
                .filter(|r| occ[(r % env) * m + mode] == layout.mode_cutoffs()[mode])
                .collect();
            let top = v.select_rows(rows.iter());
            rho_t.component_mul(&(top.transpose() * top.map(|x| x.conj())))
        })
        .collect();
    let probes = grid.probe_indices(LEAK_PROBES);

    let energies = &propagator.spectrum().energies;
    let mut worst: f64 = 0.0;
    let mut rhos = Vec::with_capacity(grid.len());
    for (idx, t) in grid.times().into_iter().enumerate() {
        let u = StateVector::from_iterator(total, energies.iter().map(|e| C64::from_polar(1.0, -e * t)));
        let mut rho = ComplexMatrix::zeros(d, d);
        for (i, j, p) in &forms {
            let value = quadratic_form(&u, p);
            rho[(*i, *j)] = value;
            rho[(*j, *i)] = value.conj();
        }
        for i in 0..d {
            rho[(i, i)] = C64::new(rho[(i, i)].re, 0.0);
        }
        if probes.binary_search(&idx).is_ok() {
            let top: Vec<f64> = leak_forms.iter().map(|q| quadratic_form(&u, q).re).collect();
            worst = worst.max(check_leak(&top)?);
        }
        rhos.push(rho);
    }
    warn_leak(worst, layout);
    Ok(MixedOracle { times: grid.times(), rhos, max_top_population: worst, resamples: 0 })
}

/// Finite-temperature reference: the thermal bath state is replaced by the
/// average of `n_samples` coherent-state projectors drawn by
/// [`sample_thermal_initial`].
pub fn thermal_oracle<R: Rng + ?Sized>(
    sys: &SystemModel,
    bath: &BathModel,
    layout: &SpaceLayout,
    psi0: &StateVector,
    grid: &TimeGrid,
    n_samples: usize,
    rng: &mut R,
) -> Result<MixedOracle> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("thermal oracle needs at least one sample".into()));
    }
    let env = layout.env_dim();
    let mut columns = ComplexMatrix::zeros(env, n_samples);
    let mut resamples = 0;
    for k in 0..n_samples {
        let draw = sample_thermal_initial(bath, layout, rng)?;
        resamples += draw.resamples;
        columns.set_column(k, &draw.bath_state);
    }
    let rho_env = (&columns * columns.adjoint()) / C64::new(n_samples as f64, 0.0);
    let propagator = TotalPropagator::new(sys, bath, layout)?;
    let mut result = mixed_oracle(&propagator, psi0, &rho_env, grid)?;
    result.resamples = resamples;
    Ok(result)
}

/// Integrates `dρ/dt = −i[H, ρ] + γ(LρL − ½{L², ρ})` by RK4 on `grid`.
pub fn lindblad_solve(
    sys: &SystemModel,
    gamma: f64,
    rho0: &ComplexMatrix,
    grid: &TimeGrid,
) -> Result<Vec<ComplexMatrix>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if rho0.nrows() != sys.dim() || rho0.ncols() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial density {}×{} for system dimension {}",
            rho0.nrows(),
            rho0.ncols(),
            sys.dim()
        )));
    }
    let h = sys.hamiltonian();
    let l = sys.coupling();
    let l2_half = (l * l) * C64::new(0.5, 0.0);
    let rhs = |rho: &ComplexMatrix| -> ComplexMatrix {
        let unitary = (h * rho - rho * h) * (-I);
        let dissipator = l * rho * l - &l2_half * rho - rho * &l2_half;
        unitary + dissipator * C64::new(gamma, 0.0)
    };
    let dt = grid.dt();
    let mut rho = rho0.clone();
    let mut out = Vec::with_capacity(grid.len());
    out.push(rho.clone());
    for _ in 0..grid.n_steps() {
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1 * C64::new(0.5 * dt, 0.0)));
        let k3 = rhs(&(&rho + &k2 * C64::new(0.5 * dt, 0.0)));
        let k4 = rhs(&(&rho + &k3 * C64::new(dt, 0.0)));
        rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        out.push(rho.clone());
    }
    Ok(out)
}

/// Reduced density of the dephasing model in closed form, valid when `L` is
/// diagonal and commutes with `H`:
/// `ρ_jk(t) = [e^{−iHt}ρ₀e^{iHt}]_jk · exp(−(l_j − l_k)(l_j B(t) − l_k B(t)*))`
/// with `B(t) = ∫₀ᵗ A`.
pub fn analytic_dephasing(sys: &SystemModel, bath: &BathModel, rho0: &ComplexMatrix, times: &[f64]) -> Result<Vec<ComplexMatrix>> {
    let l = sys.coupling();
    let d = sys.dim();
    let off_diagonal = (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).filter(|(j, k)| j != k);
    let leak: f64 = off_diagonal.map(|(j, k)| l[(j, k)].norm()).fold(0.0, f64::max);
    let diag_scale = (0..d).map(|j| l[(j, j)].norm()).fold(0.0, f64::max).max(1.0);
    if leak > 1e-12 * diag_scale {
        return Err(Error::Incompatible("closed-form dephasing needs a diagonal coupling".into()));
    }
    crate::solver::closure_dephasing(sys, crate::solver::KernelSource::Bath(bath))?;
    let ls: Vec<C64> = (0..d).map(|j| l[(j, j)]).collect();
    let spectrum = HermitianSpectrum::new(sys.hamiltonian());
    Ok(times
        .iter()
        .map(|&t| {
            let u = spectrum.propagator(t);
            let free = &u * rho0 * u.adjoint();
            let b = crate::model::memory_double_integral(bath, t);
            ComplexMatrix::from_fn(d, d, |j, k| {
                let exponent = -(ls[j] - ls[k]) * (ls[j] * b - ls[k] * b.conj());
                free[(j, k)] * exponent.exp()
            })
        })
        .collect())
}
