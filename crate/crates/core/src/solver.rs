//! Fixed-step integration of the linear non-Markovian stochastic
//! Schrödinger equation
//!
//! ```text
//! dψ/dt = −iH ψ + i L Z(t) ψ + i L ∫₀ᵗ α(t,s) δψ(t)/δZ(s) ds
//! ```
//!
//! for one noise path. The functional derivative is supplied by a
//! [`MemoryClosure`]:
//!
//! * `dephasing_exact`: `δψ(t)/δZ(s) = iLψ(t)`, exact when `[L, H] = 0`;
//!   the memory term is `−L² A(t) ψ` with `A(t) = ∫₀ᵗ α(t,s) ds`.
//! * `born_weak_coupling`: `δψ(t)/δZ(s) ≈ i L̃(s−t) ψ(t)` with
//!   `L̃(τ) = e^{iHτ} L e^{−iHτ}`; the memory term is `−L D(t) ψ` with
//!   `D(t) = ∫₀ᵗ α(t,s) L̃(s−t) ds` by trapezoid quadrature.
//! * `bargmann_exact`: integrates the coherent-state representation of the
//!   total state in the truncated Fock basis and evaluates it at the
//!   coherent sample behind the noise. Requires a zero-temperature mode-sum
//!   noise path.
//!
//! States are never normalized.

use std::io::Write;

use crate::bargmann;
use crate::error::{Error, Result};
use crate::grid::{Alignment, TimeGrid};
use crate::model::{memory_integral, BathModel, KernelGrid, SystemModel};
use crate::numerics::{
    check_finite_vector, commutator, operator_norm, ComplexMatrix, HermitianSpectrum, SpaceLayout,
    StateVector, C64, I, ZERO,
};
use crate::noise::NoiseRealization;

/// Top-level Fock population that triggers a warning.
pub const FOCK_LEAK_WARN: f64 = 1e-6;
/// Top-level Fock population that aborts the run.
pub const FOCK_LEAK_ERROR: f64 = 1e-3;
/// Relative tolerance on `‖[L, H]‖` for the dephasing closure.
pub const COMMUTATOR_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClosureKind {
    DephasingExact,
    BornWeakCoupling,
    BargmannExact,
}

impl ClosureKind {
    pub const ALL: [ClosureKind; 3] =
        [ClosureKind::DephasingExact, ClosureKind::BornWeakCoupling, ClosureKind::BargmannExact];

    pub fn name(self) -> &'static str {
        match self {
            ClosureKind::DephasingExact => "dephasing_exact",
            ClosureKind::BornWeakCoupling => "born_weak_coupling",
            ClosureKind::BargmannExact => "bargmann_exact",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Whether ensembles built on this closure reproduce the reduced
    /// dynamics without approximation (up to discretization).
    pub fn is_exact(self) -> bool {
        !matches!(self, ClosureKind::BornWeakCoupling)
    }
}

/// Where a closure takes its memory kernel from.
#[derive(Clone, Copy, Debug)]
pub enum KernelSource<'a> {
    /// Closed-form integrals of a discrete-mode bath.
    Bath(&'a BathModel),
    /// Trapezoid integrals of a tabulated kernel.
    Grid(&'a KernelGrid),
}

#[derive(Clone, Debug)]
enum DephasingMemory {
    ClosedForm(BathModel),
    Tabulated { grid: TimeGrid, values: Vec<C64> },
}

#[derive(Clone, Debug)]
struct BargmannData {
    layout: SpaceLayout,
    kappas: Vec<f64>,
    omegas: Vec<f64>,
    occupations: Vec<usize>,
    strides: Vec<usize>,
    /// `√n` for `n = 0..=max cutoff`
    sqrt: Vec<f64>,
}

#[derive(Clone, Debug)]
enum ClosureData {
    Dephasing { coupling_sq: ComplexMatrix, memory: DephasingMemory },
    Born { coupling: ComplexMatrix, grid: TimeGrid, d: Vec<ComplexMatrix> },
    Bargmann(BargmannData),
}

/// A computable replacement for the functional derivative in the memory term.
#[derive(Clone, Debug)]
pub struct MemoryClosure {
    data: ClosureData,
}

impl MemoryClosure {
    pub fn kind(&self) -> ClosureKind {
        match self.data {
            ClosureData::Dephasing { .. } => ClosureKind::DephasingExact,
            ClosureData::Born { .. } => ClosureKind::BornWeakCoupling,
            ClosureData::Bargmann(_) => ClosureKind::BargmannExact,
        }
    }

    /// `A(t)` of the dephasing closure at an arbitrary time (closed form) or
    /// at a tabulated grid index.
    pub fn dephasing_memory(&self, t: f64) -> Option<C64> {
        match &self.data {
            ClosureData::Dephasing { memory: DephasingMemory::ClosedForm(bath), .. } => {
                Some(memory_integral(bath, t))
            }
            ClosureData::Dephasing { memory: DephasingMemory::Tabulated { grid, values }, .. } => {
                let j = (t / grid.dt()).round() as usize;
                values.get(j).copied()
            }
            _ => None,
        }
    }

    /// `D(t_j)` of the Born closure on its kernel grid.
    pub fn born_memory(&self) -> Option<&[ComplexMatrix]> {
        match &self.data {
            ClosureData::Born { d, .. } => Some(d),
            _ => None,
        }
    }

    pub fn layout(&self) -> Option<&SpaceLayout> {
        match &self.data {
            ClosureData::Bargmann(b) => Some(&b.layout),
            _ => None,
        }
    }
}

/// Dephasing closure; rejects couplings that do not commute with `H`.
pub fn closure_dephasing(sys: &SystemModel, source: KernelSource<'_>) -> Result<MemoryClosure> {
    let h = sys.hamiltonian();
    let l = sys.coupling();
    let norm = operator_norm(&commutator(l, h));
    let limit = COMMUTATOR_RTOL * operator_norm(l) * operator_norm(h);
    if norm > limit {
        return Err(Error::NonCommuting { norm, limit });
    }
    let memory = match source {
        KernelSource::Bath(bath) => DephasingMemory::ClosedForm(bath.clone()),
        KernelSource::Grid(kernel) => DephasingMemory::Tabulated {
            grid: *kernel.grid(),
            values: kernel.memory_integrals(),
        },
    };
    Ok(MemoryClosure { data: ClosureData::Dephasing { coupling_sq: l * l, memory } })
}

/// Born (lowest-order) closure from a tabulated kernel.
pub fn closure_born(sys: &SystemModel, kernel: &KernelGrid) -> MemoryClosure {
    let grid = *kernel.grid();
    let h = grid.dt();
    let l = sys.coupling();
    let spectrum = HermitianSpectrum::new(sys.hamiltonian());
    // L̃(−m·h) = e^{−iHmh} L e^{iHmh}
    let rotated: Vec<ComplexMatrix> = (0..grid.len())
        .map(|m| {
            let u = spectrum.propagator(m as f64 * h);
            &u * l * u.adjoint()
        })
        .collect();
    let dim = sys.dim();
    let d = (0..grid.len())
        .map(|j| {
            let mut acc = ComplexMatrix::zeros(dim, dim);
            if j == 0 {
                return acc;
            }
            for k in 0..=j {
                let w = if k == 0 || k == j { 0.5 * h } else { h };
                acc += &rotated[j - k] * (kernel.alpha(j, k) * w);
            }
            acc
        })
        .collect();
    MemoryClosure { data: ClosureData::Born { coupling: l.clone(), grid, d } }
}

/// Exact closure through the coherent-state representation of the bath.
pub fn closure_bargmann(sys: &SystemModel, bath: &BathModel, layout: &SpaceLayout) -> Result<MemoryClosure> {
    if !bath.is_zero_temperature() {
        return Err(Error::Incompatible(format!(
            "the Bargmann closure needs a zero-temperature bath (T = {})",
            bath.temperature()
        )));
    }
    if layout.n_modes() != bath.modes().len() || layout.system_dim() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "layout ({} modes, system {}) does not match bath ({} modes) and system ({})",
            layout.n_modes(),
            layout.system_dim(),
            bath.modes().len(),
            sys.dim()
        )));
    }
    let max_cutoff = layout.mode_cutoffs().iter().copied().max().unwrap_or(0);
    Ok(MemoryClosure {
        data: ClosureData::Bargmann(BargmannData {
            layout: layout.clone(),
            kappas: bath.modes().iter().map(|m| m.kappa()).collect(),
            omegas: bath.modes().iter().map(|m| m.omega()).collect(),
            occupations: layout.occupation_table(),
            strides: layout.mode_strides(),
            sqrt: (0..=max_cutoff + 1).map(|n| (n as f64).sqrt()).collect(),
        }),
    })
}

/// Closure-specific data recorded alongside each state.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosureScratch {
    /// `A(t)`
    Dephasing(C64),
    /// `D(t)`
    Born(ComplexMatrix),
    /// Full system ⊗ Fock state and its largest relative top-level population.
    Bargmann { fock: StateVector, top_level: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    /// System state (unnormalized).
    pub psi: StateVector,
    pub scratch: ClosureScratch,
}

impl TrajectoryState {
    pub fn norm_sqr(&self) -> f64 {
        self.psi.norm_squared()
    }
}

/// `a·x + b·y` over series aligned with the integration grid.
fn interpolate<T: Clone>(series: &[T], alignment: Alignment, step: usize, sub: usize, combine: impl Fn(&T, f64, &T, f64) -> T) -> T {
    let [(i0, w0), (i1, w1)] = alignment.sample(step, sub);
    if w1 == 0.0 {
        series[i0].clone()
    } else {
        combine(&series[i0], w0, &series[i1], w1)
    }
}

fn noise_at(noise: &[C64], alignment: Alignment, step: usize, sub: usize) -> C64 {
    interpolate(noise, alignment, step, sub, |a, wa, b, wb| a * wa + b * wb)
}

/// Prepared integration of one trajectory.
struct Integrator<'a> {
    sys: &'a SystemModel,
    closure: &'a MemoryClosure,
    noise: &'a NoiseRealization,
    grid: TimeGrid,
    noise_alignment: Alignment,
    memory_alignment: Option<Alignment>,
}

impl<'a> Integrator<'a> {
    fn new(sys: &'a SystemModel, closure: &'a MemoryClosure, noise: &'a NoiseRealization, grid: &TimeGrid) -> Result<Self> {
        let noise_alignment = Alignment::detect(grid, noise.grid())?;
        let memory_alignment = match &closure.data {
            ClosureData::Dephasing { memory: DephasingMemory::Tabulated { grid: kg, .. }, .. }
            | ClosureData::Born { grid: kg, .. } => Some(Alignment::detect(grid, kg)?),
            _ => None,
        };
        let closure_dim = match &closure.data {
            ClosureData::Dephasing { coupling_sq, .. } => coupling_sq.nrows(),
            ClosureData::Born { coupling, .. } => coupling.nrows(),
            ClosureData::Bargmann(b) => b.layout.system_dim(),
        };
        if closure_dim != sys.dim() {
            return Err(Error::DimensionMismatch(format!(
                "closure built for dimension {closure_dim}, system has {}",
                sys.dim()
            )));
        }
        if let ClosureData::Bargmann(b) = &closure.data {
            match noise.coherent_amplitudes() {
                Some(a) if a.len() == b.kappas.len() => {}
                Some(a) => {
                    return Err(Error::Incompatible(format!(
                        "noise carries {} coherent amplitudes, closure has {} modes",
                        a.len(),
                        b.kappas.len()
                    )))
                }
                None => {
                    return Err(Error::Incompatible(
                        "the Bargmann closure needs mode-sum noise with its coherent sample".into(),
                    ))
                }
            }
        }
        Ok(Self { sys, closure, noise, grid: *grid, noise_alignment, memory_alignment })
    }

    /// Generator `−iH + iZL − M` at substep `sub` of `step`, plus the memory
    /// scratch at that point.
    fn generator(&self, step: usize, sub: usize) -> (ComplexMatrix, ClosureScratch) {
        let z = noise_at(self.noise.values(), self.noise_alignment, step, sub);
        let l = self.sys.coupling();
        let mut g = self.sys.hamiltonian() * (-I) + l * (I * z);
        let scratch = match &self.closure.data {
            ClosureData::Dephasing { coupling_sq, memory } => {
                let a = match memory {
                    DephasingMemory::ClosedForm(bath) => {
                        let t = self.grid.time(step) + 0.5 * sub as f64 * self.grid.dt();
                        memory_integral(bath, t)
                    }
                    DephasingMemory::Tabulated { values, .. } => {
                        noise_at(values, self.memory_alignment.expect("tabulated alignment"), step, sub)
                    }
                };
                g -= coupling_sq * a;
                ClosureScratch::Dephasing(a)
            }
            ClosureData::Born { coupling, d, .. } => {
                let dt = interpolate(d, self.memory_alignment.expect("born alignment"), step, sub, |a, wa, b, wb| {
                    a * C64::new(wa, 0.0) + b * C64::new(wb, 0.0)
                });
                g -= coupling * &dt;
                ClosureScratch::Born(dt)
            }
            ClosureData::Bargmann(_) => unreachable!("Bargmann closure has no system generator"),
        };
        (g, scratch)
    }

    /// Runs the integration, handing every grid-point state to `visit`.
    fn run(&self, psi0: &StateVector, mut visit: impl FnMut(TrajectoryState) -> Result<()>) -> Result<()> {
        if psi0.len() != self.sys.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has length {}, system dimension is {}",
                psi0.len(),
                self.sys.dim()
            )));
        }
        match &self.closure.data {
            ClosureData::Bargmann(b) => self.run_bargmann(b, psi0, visit),
            _ => {
                let h = self.grid.dt();
                let (mut g0, scratch0) = self.generator(0, 0);
                let mut psi = psi0.clone();
                visit(TrajectoryState { t: 0.0, psi: psi.clone(), scratch: scratch0 })?;
                for step in 0..self.grid.n_steps() {
                    let (g1, _) = self.generator(step, 1);
                    let (g2, scratch2) = self.generator(step, 2);
                    let k1 = &g0 * &psi;
                    let k2 = &g1 * (&psi + &k1 * C64::new(0.5 * h, 0.0));
                    let k3 = &g1 * (&psi + &k2 * C64::new(0.5 * h, 0.0));
                    let k4 = &g2 * (&psi + &k3 * C64::new(h, 0.0));
                    psi += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
                    check_finite_vector(&psi, &format!("trajectory state at step {}", step + 1))?;
                    visit(TrajectoryState { t: self.grid.time(step + 1), psi: psi.clone(), scratch: scratch2 })?;
                    g0 = g2;
                }
                Ok(())
            }
        }
    }

    fn run_bargmann(&self, b: &BargmannData, psi0: &StateVector, mut visit: impl FnMut(TrajectoryState) -> Result<()>) -> Result<()> {
        let layout = &b.layout;
        let env = layout.env_dim();
        let amplitudes = self.noise.coherent_amplitudes().expect("checked at construction");
        let conj: Vec<C64> = amplitudes.iter().map(|a| a.conj()).collect();
        let weights = bargmann::monomial_weights(layout, &conj)?;

        let mut fock = StateVector::zeros(layout.total_dim());
        for s in 0..layout.system_dim() {
            fock[s * env] = psi0[s];
        }
        let h = self.grid.dt();
        let mut worst_leak: f64 = 0.0;
        let mut emit = |t: f64, fock: &StateVector, worst_leak: &mut f64| -> Result<()> {
            let top = layout.top_level_populations(fock).into_iter().enumerate().fold((0, 0.0), |acc, (i, p)| {
                if p > acc.1 {
                    (i, p)
                } else {
                    acc
                }
            });
            if top.1 > FOCK_LEAK_ERROR {
                return Err(Error::FockLeak { mode: top.0, population: top.1, limit: FOCK_LEAK_ERROR });
            }
            *worst_leak = worst_leak.max(top.1);
            visit(TrajectoryState {
                t,
                psi: bargmann::evaluate_with_weights(fock, layout, &weights),
                scratch: ClosureScratch::Bargmann { fock: fock.clone(), top_level: top.1 },
            })
        };
        emit(0.0, &fock, &mut worst_leak)?;

        let mut k = [
            StateVector::zeros(fock.len()),
            StateVector::zeros(fock.len()),
            StateVector::zeros(fock.len()),
            StateVector::zeros(fock.len()),
        ];
        let mut stage = StateVector::zeros(fock.len());
        let mut scratch = StateVector::zeros(fock.len());
        for step in 0..self.grid.n_steps() {
            let t = self.grid.time(step);
            self.apply_fock(b, t, &fock, &mut k[0], &mut scratch);
            stage.copy_from(&fock);
            stage.axpy(C64::new(0.5 * h, 0.0), &k[0], ONE_C);
            self.apply_fock(b, t + 0.5 * h, &stage, &mut k[1], &mut scratch);
            stage.copy_from(&fock);
            stage.axpy(C64::new(0.5 * h, 0.0), &k[1], ONE_C);
            self.apply_fock(b, t + 0.5 * h, &stage, &mut k[2], &mut scratch);
            stage.copy_from(&fock);
            stage.axpy(C64::new(h, 0.0), &k[2], ONE_C);
            self.apply_fock(b, t + h, &stage, &mut k[3], &mut scratch);
            fock.axpy(C64::new(h / 6.0, 0.0), &k[0], ONE_C);
            fock.axpy(C64::new(h / 3.0, 0.0), &k[1], ONE_C);
            fock.axpy(C64::new(h / 3.0, 0.0), &k[2], ONE_C);
            fock.axpy(C64::new(h / 6.0, 0.0), &k[3], ONE_C);
            check_finite_vector(&fock, &format!("Fock state at step {}", step + 1))?;
            emit(self.grid.time(step + 1), &fock, &mut worst_leak)?;
        }
        if worst_leak > FOCK_LEAK_WARN {
            log::warn!("top Fock level population reached {worst_leak:.3e} (cutoffs {:?})", layout.mode_cutoffs());
        }
        Ok(())
    }

    /// `out = −i(H⊗1)ψ + i Σ_i κ_i (e^{iω_i t} a_i† + e^{−iω_i t} a_i)(L⊗1)ψ`
    fn apply_fock(&self, b: &BargmannData, t: f64, psi: &StateVector, out: &mut StateVector, coupled: &mut StateVector) {
        let layout = &b.layout;
        let d = layout.system_dim();
        let env = layout.env_dim();
        let m = layout.n_modes();
        let h_sys = self.sys.hamiltonian();
        let l = self.sys.coupling();
        out.fill(ZERO);
        coupled.fill(ZERO);
        for s in 0..d {
            for s2 in 0..d {
                let hs = h_sys[(s, s2)] * (-I);
                let ls = l[(s, s2)];
                if hs == ZERO && ls == ZERO {
                    continue;
                }
                for e in 0..env {
                    let v = psi[s2 * env + e];
                    out[s * env + e] += hs * v;
                    coupled[s * env + e] += ls * v;
                }
            }
        }
        for i in 0..m {
            let up = I * C64::from_polar(b.kappas[i], b.omegas[i] * t);
            let down = I * C64::from_polar(b.kappas[i], -b.omegas[i] * t);
            let stride = b.strides[i];
            let cutoff = layout.mode_cutoffs()[i];
            for s in 0..d {
                let base = s * env;
                for e in 0..env {
                    let v = coupled[base + e];
                    if v == ZERO {
                        continue;
                    }
                    let n = b.occupations[e * m + i];
                    if n < cutoff {
                        out[base + e + stride] += up * (v * b.sqrt[n + 1]);
                    }
                    if n > 0 {
                        out[base + e - stride] += down * (v * b.sqrt[n]);
                    }
                }
            }
        }
    }
}

const ONE_C: C64 = C64::new(1.0, 0.0);

/// Integrates one trajectory by classical RK4 with step `grid.dt()` and
/// returns the state at every grid point.
///
/// The noise must live either on `grid` (half steps use the neighbour
/// average) or on `grid.refined()`.
pub fn run_trajectory(
    sys: &SystemModel,
    closure: &MemoryClosure,
    noise: &NoiseRealization,
    grid: &TimeGrid,
    psi0: &StateVector,
) -> Result<Vec<TrajectoryState>> {
    let integrator = Integrator::new(sys, closure, noise, grid)?;
    let mut states = Vec::with_capacity(grid.len());
    integrator.run(psi0, |s| {
        states.push(s);
        Ok(())
    })?;
    Ok(states)
}

/// Like [`run_trajectory`] but streams states to `visit` without storing them.
pub fn for_each_state(
    sys: &SystemModel,
    closure: &MemoryClosure,
    noise: &NoiseRealization,
    grid: &TimeGrid,
    psi0: &StateVector,
    visit: impl FnMut(TrajectoryState) -> Result<()>,
) -> Result<()> {
    Integrator::new(sys, closure, noise, grid)?.run(psi0, visit)
}

/// CSV: `t`, real and imaginary part of every amplitude, squared norm.
pub fn write_trajectory_csv<W: Write>(out: &mut W, states: &[TrajectoryState]) -> Result<()> {
    let dim = states.first().map_or(0, |s| s.psi.len());
    let mut header = vec!["t".to_string()];
    for k in 0..dim {
        header.push(format!("re_psi_{k}"));
        header.push(format!("im_psi_{k}"));
    }
    header.push("norm_sq".into());
    writeln!(out, "{}", header.join(","))?;
    for s in states {
        let mut row = vec![crate::io::fmt_f64(s.t)];
        for z in s.psi.iter() {
            row.push(crate::io::fmt_f64(z.re));
            row.push(crate::io::fmt_f64(z.im));
        }
        row.push(crate::io::fmt_f64(s.norm_sqr()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
