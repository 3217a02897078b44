//! System, bath and memory-kernel definitions.
//!
//! The bath is a finite set of harmonic modes coupled linearly to a
//! Hermitian system operator `L`:
//!
//! ```text
//! H_tot = H_sys ⊗ 1 − Σ_i κ_i L ⊗ (a_i + a_i†) + Σ_i ω_i 1 ⊗ a_i†a_i
//! ```
//!
//! Each mode is parameterized by its kernel weight `g_i = κ_i²` and its
//! frequency `ω_i`. The bath correlation function is
//!
//! ```text
//! α(t, s) = Σ_i g_i [ (n̄_i + 1) e^{−iω_i (t−s)} + n̄_i e^{+iω_i (t−s)} ]
//! ```
//!
//! with Bose occupation `n̄_i = 1 / (e^{ω_i/T} − 1)` (zero at `T = 0`).
//! Units: ħ = k_B = 1. Zero-point energies are dropped everywhere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::numerics::{check_hermitian, ComplexMatrix, SpaceLayout, C64, DEFAULT_DIM_CAP, ZERO};

/// Relative clipping tolerance for negative kernel eigenvalues.
pub const PSD_CLIP_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    hamiltonian: ComplexMatrix,
    coupling: ComplexMatrix,
}

impl SystemModel {
    pub fn new(hamiltonian: ComplexMatrix, coupling: ComplexMatrix) -> Result<Self> {
        check_hermitian(&hamiltonian, "hamiltonian")?;
        check_hermitian(&coupling, "coupling")?;
        if hamiltonian.shape() != coupling.shape() {
            return Err(Error::DimensionMismatch(format!(
                "hamiltonian is {:?} but coupling is {:?}",
                hamiltonian.shape(),
                coupling.shape()
            )));
        }
        if hamiltonian.nrows() == 0 {
            return Err(Error::InvalidParameter("system dimension must be positive".into()));
        }
        Ok(Self { hamiltonian, coupling })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    /// The coupling operator `L` (position-like in the textbook model).
    pub fn coupling(&self) -> &ComplexMatrix {
        &self.coupling
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathMode {
    g: f64,
    omega: f64,
}

impl BathMode {
    pub fn new(g: f64, omega: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter(format!("mode weight g must be positive, got {g}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mode frequency must be positive, got {omega}"
            )));
        }
        Ok(Self { g, omega })
    }

    /// Kernel weight `χ²/(2mω)`.
    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Coupling amplitude `κ = √g`.
    pub fn kappa(&self) -> f64 {
        self.g.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BathModel {
    modes: Vec<BathMode>,
    temperature: f64,
}

impl BathModel {
    pub fn new(modes: Vec<BathMode>, temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be nonnegative, got {temperature}"
            )));
        }
        Ok(Self { modes, temperature })
    }

    pub fn zero_temperature(modes: Vec<BathMode>) -> Self {
        Self { modes, temperature: 0.0 }
    }

    pub fn modes(&self) -> &[BathMode] {
        &self.modes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.temperature == 0.0
    }

    /// Same modes with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let modes = self
            .modes
            .iter()
            .map(|m| BathMode::new(m.g * factor, m.omega))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes, self.temperature)
    }

    /// Bose–Einstein occupation of `mode` at the bath temperature.
    pub fn mean_occupation(&self, mode: &BathMode) -> f64 {
        if self.temperature == 0.0 {
            0.0
        } else {
            1.0 / (mode.omega / self.temperature).exp_m1()
        }
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.modes.iter().map(|m| self.mean_occupation(m)).collect()
    }
}

/// `α(t, s)`; depends on `t − s` only.
pub fn kernel_alpha(bath: &BathModel, t: f64, s: f64) -> C64 {
    let tau = t - s;
    bath.modes()
        .iter()
        .map(|m| {
            let nbar = bath.mean_occupation(m);
            let phase = C64::from_polar(1.0, -m.omega * tau);
            // coth(ω/2T)·cos(ωτ) − i·sin(ωτ)
            C64::new((2.0 * nbar + 1.0) * phase.re, phase.im) * m.g
        })
        .sum()
}

/// `∫₀ᵗ e^{−iωu} du`
fn phase_integral(omega: f64, t: f64) -> C64 {
    let x = omega * t;
    if x.abs() < 1e-3 {
        // t · Σ (−ix)^k / (k+1)!
        let z = C64::new(0.0, -x);
        let series = C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0 + z * z * z * z / 120.0;
        return series * t;
    }
    (C64::new(1.0, 0.0) - C64::from_polar(1.0, -x)) / C64::new(0.0, omega)
}

/// `∫₀ᵗ dτ ∫₀^τ e^{−iωu} du`
fn double_phase_integral(omega: f64, t: f64) -> C64 {
    let x = omega * t;
    if x.abs() < 1e-3 {
        let z = C64::new(0.0, -x);
        let series = C64::new(0.5, 0.0) + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z * z * z * z / 720.0;
        return series * t * t;
    }
    (C64::new(t, 0.0) - phase_integral(omega, t)) / C64::new(0.0, omega)
}

/// Memory half-integral `A(t) = ∫₀ᵗ α(t, s) ds` in closed form.
pub fn memory_integral(bath: &BathModel, t: f64) -> C64 {
    bath.modes()
        .iter()
        .map(|m| {
            let nbar = bath.mean_occupation(m);
            (phase_integral(m.omega, t) * (nbar + 1.0) + phase_integral(-m.omega, t) * nbar) * m.g
        })
        .sum()
}

/// `B(t) = ∫₀ᵗ A(τ) dτ` in closed form.
pub fn memory_double_integral(bath: &BathModel, t: f64) -> C64 {
    bath.modes()
        .iter()
        .map(|m| {
            let nbar = bath.mean_occupation(m);
            (double_phase_integral(m.omega, t) * (nbar + 1.0)
                + double_phase_integral(-m.omega, t) * nbar)
                * m.g
        })
        .sum()
}

/// Correlation kernel tabulated on a uniform grid: `values[(j, k)] = α(t_j, t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelGrid {
    grid: TimeGrid,
    values: ComplexMatrix,
}

impl KernelGrid {
    /// Validates shape, Hermiticity (`α(t,s) = α(s,t)*`) and positivity.
    pub fn new(grid: TimeGrid, values: ComplexMatrix) -> Result<Self> {
        if values.nrows() != grid.len() || values.ncols() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel values are {}x{} for a grid of {} points",
                values.nrows(),
                values.ncols(),
                grid.len()
            )));
        }
        check_hermitian(&values, "kernel")?;
        let eig = values.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -PSD_CLIP_RTOL * max.max(0.0) {
            return Err(Error::NotPositiveSemidefinite { min, max });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &ComplexMatrix {
        &self.values
    }

    pub fn alpha(&self, j: usize, k: usize) -> C64 {
        self.values[(j, k)]
    }

    /// The noise covariance `C[j][k] = α(t_j, t_k)*`.
    pub fn covariance(&self) -> ComplexMatrix {
        self.values.map(|z| z.conj())
    }

    /// Trapezoid estimate of `A(t_j) = ∫₀^{t_j} α(t_j, s) ds` at every grid point.
    pub fn memory_integrals(&self) -> Vec<C64> {
        let h = self.grid.dt();
        (0..self.grid.len())
            .map(|j| {
                if j == 0 {
                    return ZERO;
                }
                let mut sum = (self.values[(j, 0)] + self.values[(j, j)]) * 0.5;
                for k in 1..j {
                    sum += self.values[(j, k)];
                }
                sum * h
            })
            .collect()
    }
}

/// Tabulates `kernel_alpha` on `grid` and validates the result.
pub fn tabulate_kernel(bath: &BathModel, grid: &TimeGrid) -> Result<KernelGrid> {
    let times = grid.times();
    let n = times.len();
    let values = ComplexMatrix::from_fn(n, n, |j, k| kernel_alpha(bath, times[j], times[k]));
    KernelGrid::new(*grid, values)
}

/// Builds the truncated total Hamiltonian on `layout`.
pub fn build_total_hamiltonian(
    sys: &SystemModel,
    bath: &BathModel,
    layout: &SpaceLayout,
) -> Result<ComplexMatrix> {
    if layout.n_modes() != bath.modes().len() {
        return Err(Error::DimensionMismatch(format!(
            "layout has {} modes but the bath has {}",
            layout.n_modes(),
            bath.modes().len()
        )));
    }
    if layout.system_dim() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "layout system dimension {} differs from model dimension {}",
            layout.system_dim(),
            sys.dim()
        )));
    }
    let total = layout.total_dim();
    if total > DEFAULT_DIM_CAP {
        return Err(Error::DimensionCap { dim: total, cap: DEFAULT_DIM_CAP });
    }
    let d = sys.dim();
    let env = layout.env_dim();
    let m = layout.n_modes();
    let occ = layout.occupation_table();
    let strides = layout.mode_strides();
    let cutoffs = layout.mode_cutoffs();
    let h_sys = sys.hamiltonian();
    let l = sys.coupling();

    let mut h = ComplexMatrix::zeros(total, total);
    for s in 0..d {
        for s2 in 0..d {
            let hs = h_sys[(s, s2)];
            if hs != ZERO {
                for e in 0..env {
                    h[(s * env + e, s2 * env + e)] += hs;
                }
            }
        }
    }
    for e in 0..env {
        let energy: f64 = (0..m).map(|i| bath.modes()[i].omega * occ[e * m + i] as f64).sum();
        for s in 0..d {
            h[(s * env + e, s * env + e)] += energy;
        }
    }
    for (i, mode) in bath.modes().iter().enumerate() {
        let kappa = mode.kappa();
        for e in 0..env {
            let n = occ[e * m + i];
            if n == cutoffs[i] {
                continue;
            }
            // ⟨n+1| a† |n⟩ = √(n+1)
            let amp = kappa * ((n + 1) as f64).sqrt();
            let up = e + strides[i];
            for s in 0..d {
                for s2 in 0..d {
                    let c = l[(s, s2)] * amp;
                    if c != ZERO {
                        h[(s * env + up, s2 * env + e)] -= c;
                        h[(s * env + e, s2 * env + up)] -= c;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Zero-temperature comb approximating a white-noise kernel of rate `gamma`.
///
/// Frequencies sit at the midpoints `ω_k = (k − ½)Δω`, `k = 1..=n_modes`,
/// `Δω = omega_max / n_modes`, with weights `g_k = γΔω/π`. Then
/// `Re A(t) = (γ/π) Σ_k sin(ω_k t)/(k − ½)Δω`, a square-wave series equal to
/// `γ/2` for `1/omega_max ≪ t < 2π/Δω`; the comb recurs at `4π/Δω`.
pub fn markov_reference_bath(gamma: f64, n_modes: usize, omega_max: f64) -> Result<BathModel> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if n_modes == 0 {
        return Err(Error::InvalidParameter("comb needs at least one mode".into()));
    }
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "omega_max must be positive, got {omega_max}"
        )));
    }
    let spacing = omega_max / n_modes as f64;
    let g = gamma * spacing / PI;
    let modes = (1..=n_modes)
        .map(|k| BathMode::new(g, (k as f64 - 0.5) * spacing))
        .collect::<Result<Vec<_>>>()?;
    Ok(BathModel::zero_temperature(modes))
}

/// Latest time at which a comb from [`markov_reference_bath`] still
/// behaves as white noise (half the plateau length `2π/Δω`).
pub fn markov_comb_horizon(n_modes: usize, omega_max: f64) -> f64 {
    PI * n_modes as f64 / omega_max
}
