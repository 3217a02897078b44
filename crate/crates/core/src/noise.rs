//! Colored complex Gaussian driving noise.
//!
//! Every strategy produces a circular process: `E[Z] = 0`, `E[Z(t)Z(s)] = 0`
//! and `E[Z(t)Z(s)*] = α(t,s)*`. Three constructions are provided:
//!
//! * **mode sum** (zero temperature): `Z(t) = Σ_i κ_i a_i* e^{iω_i t}` with the
//!   coherent amplitudes `a_i` drawn from the Gaussian measure `e^{−|a|²}d²a/π`;
//! * **thermal mode sum**: two independent fields per mode carrying the
//!   `(n̄+1)` and `n̄` branches of the finite-temperature kernel;
//! * **grid factorization**: `Z = Lξ` with `LL† = C`, `C = conj(K)`, for any
//!   tabulated kernel.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{tabulate_kernel, BathModel, KernelGrid, PSD_CLIP_RTOL};
use crate::numerics::{ComplexMatrix, StateVector, C64, ZERO};

/// Minimum ensemble size accepted by [`validate_statistics`].
pub const MIN_VALIDATION_SAMPLES: usize = 100;

/// Maximum number of probe times per axis in [`validate_statistics`].
pub const MAX_PROBES: usize = 20;

/// Identifies one reproducible random stream: ChaCha8 seeded with `seed`,
/// positioned on stream `stream`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Standard circular complex normal: `E|z|² = 1`, variance ½ per quadrature.
pub fn standard_circular<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseStrategy {
    ModeSum,
    ThermalModeSum,
    GridFactorization,
}

impl NoiseStrategy {
    pub const ALL: [NoiseStrategy; 3] =
        [NoiseStrategy::ModeSum, NoiseStrategy::ThermalModeSum, NoiseStrategy::GridFactorization];

    pub fn name(self) -> &'static str {
        match self {
            NoiseStrategy::ModeSum => "mode_sum",
            NoiseStrategy::ThermalModeSum => "thermal_mode_sum",
            NoiseStrategy::GridFactorization => "grid_factorization",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseProvenance {
    /// The coherent sample `a` behind a zero-temperature mode sum.
    ModeSum { amplitudes: Vec<C64> },
    ThermalModeSum { a: Vec<C64>, b: Vec<C64> },
    GridFactorization,
}

/// One sampled path `Z(t_j)` on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    grid: TimeGrid,
    values: Vec<C64>,
    provenance: NoiseProvenance,
}

impl NoiseRealization {
    pub fn new(grid: TimeGrid, values: Vec<C64>, provenance: NoiseProvenance) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("noise realization".into()));
        }
        Ok(Self { grid, values, provenance })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn provenance(&self) -> &NoiseProvenance {
        &self.provenance
    }

    /// Coherent amplitudes when the path came from a zero-temperature mode sum.
    pub fn coherent_amplitudes(&self) -> Option<&[C64]> {
        match &self.provenance {
            NoiseProvenance::ModeSum { amplitudes } => Some(amplitudes),
            _ => None,
        }
    }
}

/// `e^{iω_i t_j}` for every mode and grid point (mode-major).
#[derive(Clone, Debug)]
pub struct PhaseTable {
    len: usize,
    phases: Vec<C64>,
}

impl PhaseTable {
    fn new(omegas: &[f64], times: &[f64]) -> Self {
        let phases = omegas
            .iter()
            .flat_map(|&w| times.iter().map(move |&t| C64::from_polar(1.0, w * t)))
            .collect();
        Self { len: times.len(), phases }
    }

    fn row(&self, mode: usize) -> &[C64] {
        &self.phases[mode * self.len..(mode + 1) * self.len]
    }
}

/// `Σ_i κ_i a_i* e^{iω_i t}` for arbitrary `(κ_i, ω_i)` pairs.
#[cfg(test)]
pub(crate) fn mode_sum_values(couplings: &[(f64, f64)], amplitudes: &[C64], times: &[f64]) -> Vec<C64> {
    let omegas: Vec<f64> = couplings.iter().map(|c| c.1).collect();
    let table = PhaseTable::new(&omegas, times);
    let mut values = vec![ZERO; times.len()];
    for (i, (&(kappa, _), a)) in couplings.iter().zip(amplitudes).enumerate() {
        let weight = a.conj() * kappa;
        for (z, p) in values.iter_mut().zip(table.row(i)) {
            *z += weight * p;
        }
    }
    values
}

/// Precomputed sampler; cheap to share across threads.
#[derive(Clone, Debug)]
pub enum NoiseSampler {
    ModeSum { grid: TimeGrid, kappas: Vec<f64>, table: PhaseTable },
    ThermalModeSum { grid: TimeGrid, upper: Vec<f64>, lower: Vec<f64>, table: PhaseTable },
    GridFactorization(GridFactorization),
}

impl NoiseSampler {
    pub fn new(strategy: NoiseStrategy, bath: &BathModel, grid: &TimeGrid) -> Result<Self> {
        let omegas: Vec<f64> = bath.modes().iter().map(|m| m.omega()).collect();
        let times = grid.times();
        match strategy {
            NoiseStrategy::ModeSum => {
                if !bath.is_zero_temperature() {
                    return Err(Error::Incompatible(format!(
                        "the mode-sum strategy needs a zero-temperature bath (T = {})",
                        bath.temperature()
                    )));
                }
                Ok(NoiseSampler::ModeSum {
                    grid: *grid,
                    kappas: bath.modes().iter().map(|m| m.kappa()).collect(),
                    table: PhaseTable::new(&omegas, &times),
                })
            }
            NoiseStrategy::ThermalModeSum => {
                let (upper, lower) = bath
                    .modes()
                    .iter()
                    .map(|m| {
                        let nbar = bath.mean_occupation(m);
                        ((m.g() * (nbar + 1.0)).sqrt(), (m.g() * nbar).sqrt())
                    })
                    .unzip();
                Ok(NoiseSampler::ThermalModeSum {
                    grid: *grid,
                    upper,
                    lower,
                    table: PhaseTable::new(&omegas, &times),
                })
            }
            NoiseStrategy::GridFactorization => {
                let kernel = crate::model::tabulate_kernel(bath, grid)?;
                Ok(NoiseSampler::GridFactorization(GridFactorization::new(&kernel)?))
            }
        }
    }

    pub fn from_kernel(kernel: &KernelGrid) -> Result<Self> {
        Ok(NoiseSampler::GridFactorization(GridFactorization::new(kernel)?))
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            NoiseSampler::ModeSum { grid, .. } | NoiseSampler::ThermalModeSum { grid, .. } => grid,
            NoiseSampler::GridFactorization(f) => &f.grid,
        }
    }

    pub fn strategy(&self) -> NoiseStrategy {
        match self {
            NoiseSampler::ModeSum { .. } => NoiseStrategy::ModeSum,
            NoiseSampler::ThermalModeSum { .. } => NoiseStrategy::ThermalModeSum,
            NoiseSampler::GridFactorization(_) => NoiseStrategy::GridFactorization,
        }
    }

    pub fn sample(&self, stream: &RngStream) -> NoiseRealization {
        let mut rng = stream.rng();
        match self {
            NoiseSampler::ModeSum { kappas, .. } => {
                let a: Vec<C64> = kappas.iter().map(|_| standard_circular(&mut rng)).collect();
                self.mode_sum(a)
            }
            NoiseSampler::ThermalModeSum { upper, .. } => {
                let a: Vec<C64> = upper.iter().map(|_| standard_circular(&mut rng)).collect();
                let b: Vec<C64> = upper.iter().map(|_| standard_circular(&mut rng)).collect();
                self.thermal(a, b)
            }
            NoiseSampler::GridFactorization(f) => f.sample_with(&mut rng),
        }
    }

    fn mode_sum(&self, amplitudes: Vec<C64>) -> NoiseRealization {
        let NoiseSampler::ModeSum { grid, kappas, table } = self else {
            unreachable!("mode_sum called on another sampler")
        };
        let mut values = vec![ZERO; grid.len()];
        for (i, (kappa, a)) in kappas.iter().zip(&amplitudes).enumerate() {
            let weight = a.conj() * *kappa;
            for (z, p) in values.iter_mut().zip(table.row(i)) {
                *z += weight * p;
            }
        }
        NoiseRealization { grid: *grid, values, provenance: NoiseProvenance::ModeSum { amplitudes } }
    }

    fn thermal(&self, a: Vec<C64>, b: Vec<C64>) -> NoiseRealization {
        let NoiseSampler::ThermalModeSum { grid, upper, lower, table } = self else {
            unreachable!("thermal called on another sampler")
        };
        let mut values = vec![ZERO; grid.len()];
        for i in 0..upper.len() {
            let wa = a[i].conj() * upper[i];
            let wb = b[i].conj() * lower[i];
            for (z, p) in values.iter_mut().zip(table.row(i)) {
                *z += wa * p;
                *z += wb * p.conj();
            }
        }
        NoiseRealization { grid: *grid, values, provenance: NoiseProvenance::ThermalModeSum { a, b } }
    }
}

/// Draws a zero-temperature mode-sum path and records the coherent sample.
pub fn sample_mode_sum_t0(bath: &BathModel, grid: &TimeGrid, rng: &RngStream) -> Result<NoiseRealization> {
    Ok(NoiseSampler::new(NoiseStrategy::ModeSum, bath, grid)?.sample(rng))
}

/// Mode-sum path for a prescribed coherent sample `a`.
pub fn mode_sum_from_amplitudes(bath: &BathModel, grid: &TimeGrid, amplitudes: &[C64]) -> Result<NoiseRealization> {
    if amplitudes.len() != bath.modes().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes for {} modes",
            amplitudes.len(),
            bath.modes().len()
        )));
    }
    Ok(NoiseSampler::new(NoiseStrategy::ModeSum, bath, grid)?.mode_sum(amplitudes.to_vec()))
}

pub fn sample_thermal_mode_sum(bath: &BathModel, grid: &TimeGrid, rng: &RngStream) -> NoiseRealization {
    NoiseSampler::new(NoiseStrategy::ThermalModeSum, bath, grid)
        .expect("thermal sampler accepts every bath")
        .sample(rng)
}

/// Thermal mode-sum path for prescribed amplitudes `a` (upper branch) and `b`.
pub fn thermal_mode_sum_from_amplitudes(
    bath: &BathModel,
    grid: &TimeGrid,
    a: &[C64],
    b: &[C64],
) -> Result<NoiseRealization> {
    let n = bath.modes().len();
    if a.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} / {} amplitudes for {n} modes",
            a.len(),
            b.len()
        )));
    }
    Ok(NoiseSampler::new(NoiseStrategy::ThermalModeSum, bath, grid)?.thermal(a.to_vec(), b.to_vec()))
}

pub fn sample_grid_factorization(kernel: &KernelGrid, rng: &RngStream) -> Result<NoiseRealization> {
    Ok(GridFactorization::new(kernel)?.sample(rng))
}

/// `C = LL†` factor of the noise covariance of a tabulated kernel.
#[derive(Clone, Debug)]
pub struct GridFactorization {
    grid: TimeGrid,
    factor: ComplexMatrix,
}

impl GridFactorization {
    pub fn new(kernel: &KernelGrid) -> Result<Self> {
        let eig = kernel.covariance().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_CLIP_RTOL * max.max(0.0) {
            return Err(Error::NotPositiveSemidefinite { min, max });
        }
        let mut factor = eig.eigenvectors;
        for (k, mut col) in factor.column_iter_mut().enumerate() {
            col *= C64::new(eig.eigenvalues[k].max(0.0).sqrt(), 0.0);
        }
        Ok(Self { grid: *kernel.grid(), factor })
    }

    pub fn factor(&self) -> &ComplexMatrix {
        &self.factor
    }

    pub fn sample(&self, stream: &RngStream) -> NoiseRealization {
        self.sample_with(&mut stream.rng())
    }

    fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseRealization {
        let n = self.grid.len();
        let xi = StateVector::from_iterator(n, (0..n).map(|_| standard_circular(rng)));
        let z = &self.factor * xi;
        NoiseRealization {
            grid: self.grid,
            values: z.iter().copied().collect(),
            provenance: NoiseProvenance::GridFactorization,
        }
    }
}

/// One empirical moment at a probe pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentCheck {
    pub t_first: f64,
    pub t_second: f64,
    pub empirical: C64,
    pub target: C64,
    pub stderr: f64,
    /// `|empirical − target| / stderr`
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStatsReport {
    pub n_samples: usize,
    pub probe_times: Vec<f64>,
    /// `E[Z(t)]` against 0.
    pub mean: Vec<MomentCheck>,
    /// `E[Z(t)Z(s)]` against 0.
    pub pseudo_covariance: Vec<MomentCheck>,
    /// `E[Z(t)Z(s)*]` against `α(t,s)*`.
    pub covariance: Vec<MomentCheck>,
}

impl NoiseStatsReport {
    fn worst(checks: &[MomentCheck]) -> f64 {
        checks.iter().fold(0.0, |acc, c| acc.max(c.z_score))
    }

    pub fn max_z_mean(&self) -> f64 {
        Self::worst(&self.mean)
    }

    pub fn max_z_pseudo_covariance(&self) -> f64 {
        Self::worst(&self.pseudo_covariance)
    }

    pub fn max_z_covariance(&self) -> f64 {
        Self::worst(&self.covariance)
    }

    pub fn max_z(&self) -> f64 {
        self.max_z_mean().max(self.max_z_pseudo_covariance()).max(self.max_z_covariance())
    }

    pub fn checks(&self) -> impl Iterator<Item = (&'static str, &MomentCheck)> {
        self.mean
            .iter()
            .map(|c| ("mean", c))
            .chain(self.pseudo_covariance.iter().map(|c| ("pseudo_covariance", c)))
            .chain(self.covariance.iter().map(|c| ("covariance", c)))
    }
}

fn moment_check(products: impl Iterator<Item = C64> + Clone, n: usize, target: C64, t: (f64, f64)) -> MomentCheck {
    let nf = n as f64;
    let mean: C64 = products.clone().sum::<C64>() / nf;
    let spread: f64 = products.map(|p| (p - mean).norm_sqr()).sum();
    let stderr = (spread / (nf - 1.0) / nf).sqrt();
    let deviation = (mean - target).norm();
    let z_score = if stderr > 0.0 {
        deviation / stderr
    } else if deviation == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    MomentCheck { t_first: t.0, t_second: t.1, empirical: mean, target, stderr, z_score }
}

/// Compares first and second empirical moments of `samples` with the targets
/// `0`, `0` and `α*` at up to [`MAX_PROBES`] probe times per axis.
pub fn validate_statistics(samples: &[NoiseRealization], kernel: &KernelGrid) -> Result<NoiseStatsReport> {
    if samples.len() < MIN_VALIDATION_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_VALIDATION_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let grid = kernel.grid();
    if let Some(k) = samples.iter().position(|s| s.grid() != grid) {
        return Err(Error::Incompatible(format!(
            "sample {k} is on a different grid than the kernel"
        )));
    }
    let n = samples.len();
    let probes = grid.probe_indices(MAX_PROBES);
    let times: Vec<f64> = probes.iter().map(|&j| grid.time(j)).collect();

    let mean = probes
        .iter()
        .zip(&times)
        .map(|(&p, &t)| moment_check(samples.iter().map(|s| s.values[p]), n, ZERO, (t, t)))
        .collect();

    let mut pseudo_covariance = Vec::with_capacity(probes.len() * probes.len());
    let mut covariance = Vec::with_capacity(probes.len() * probes.len());
    for (&p, &tp) in probes.iter().zip(&times) {
        for (&q, &tq) in probes.iter().zip(&times) {
            pseudo_covariance.push(moment_check(
                samples.iter().map(|s| s.values[p] * s.values[q]),
                n,
                ZERO,
                (tp, tq),
            ));
            covariance.push(moment_check(
                samples.iter().map(|s| s.values[p] * s.values[q].conj()),
                n,
                kernel.alpha(p, q).conj(),
                (tp, tq),
            ));
        }
    }
    Ok(NoiseStatsReport { n_samples: n, probe_times: times, mean, pseudo_covariance, covariance })
}

/// Grid of at most [`MAX_PROBES`] points spanning `[0, t_max]`.
pub fn probe_grid(t_max: f64) -> Result<TimeGrid> {
    let steps = MAX_PROBES - 1;
    TimeGrid::from_steps(t_max / steps as f64, steps)
}

/// Draws `n_samples` paths of `strategy` on the probe grid of `[0, t_max]`
/// (sample `k` from `RngStream(seed, k)`) and checks them against the
/// kernel of `reference`. Passing `bath` itself as `reference` is the
/// validation; any other bath is a control that should fail.
pub fn validate_strategy(
    strategy: NoiseStrategy,
    bath: &BathModel,
    reference: &BathModel,
    t_max: f64,
    n_samples: usize,
    seed: u64,
) -> Result<NoiseStatsReport> {
    let grid = probe_grid(t_max)?;
    let kernel = tabulate_kernel(bath, &grid)?;
    let sampler = match strategy {
        NoiseStrategy::GridFactorization => NoiseSampler::from_kernel(&kernel)?,
        other => NoiseSampler::new(other, bath, &grid)?,
    };
    let samples: Vec<NoiseRealization> =
        (0..n_samples).map(|k| sampler.sample(&RngStream::new(seed, k as u64))).collect();
    validate_statistics(&samples, &tabulate_kernel(reference, &grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tabulate_kernel, BathMode};
    use crate::numerics::max_abs;

    fn single(g: f64, omega: f64, temperature: f64) -> BathModel {
        BathModel::new(vec![BathMode::new(g, omega).unwrap()], temperature).unwrap()
    }

    fn draw(sampler: &NoiseSampler, n: usize, seed: u64) -> Vec<NoiseRealization> {
        (0..n).map(|k| sampler.sample(&RngStream::new(seed, k as u64))).collect()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in NoiseStrategy::ALL {
            assert_eq!(NoiseStrategy::from_name(s.name()), Some(s));
        }
        assert_eq!(NoiseStrategy::from_name("fft"), None);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let bath = single(0.3, 1.0, 0.0);
        let a = sample_mode_sum_t0(&bath, &grid, &RngStream::new(7, 3)).unwrap();
        let b = sample_mode_sum_t0(&bath, &grid, &RngStream::new(7, 3)).unwrap();
        let c = sample_mode_sum_t0(&bath, &grid, &RngStream::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn empty_bath_gives_zero_noise() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let bath = BathModel::zero_temperature(vec![]);
        let z = sample_mode_sum_t0(&bath, &grid, &RngStream::new(1, 1)).unwrap();
        assert!(z.values().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn forced_amplitude_mode_sum() {
        let grid = TimeGrid::new(3.0, 0.25).unwrap();
        let bath = single(0.25, 1.0, 0.0);
        let z = mode_sum_from_amplitudes(&bath, &grid, &[C64::new(1.0, 0.0)]).unwrap();
        for (t, v) in grid.times().iter().zip(z.values()) {
            assert!((v - C64::from_polar(0.5, *t)).norm() < 1e-15);
        }
        assert_eq!(z.coherent_amplitudes(), Some(&[C64::new(1.0, 0.0)][..]));
    }

    #[test]
    fn zero_frequency_term_is_constant() {
        let times: Vec<f64> = (0..10).map(|j| 0.3 * j as f64).collect();
        let values = mode_sum_values(&[(0.5, 0.0)], &[C64::new(0.2, -0.7)], &times);
        assert!(values.iter().all(|v| *v == values[0]));
        assert!((values[0] - C64::new(0.1, 0.35)).norm() < 1e-15);
    }

    #[test]
    fn mode_sum_rejects_finite_temperature() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let err = sample_mode_sum_t0(&single(0.2, 1.0, 0.5), &grid, &RngStream::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
    }

    #[test]
    fn thermal_reduces_to_mode_sum_at_zero_temperature() {
        let grid = TimeGrid::new(2.0, 0.1).unwrap();
        let bath = BathModel::zero_temperature(vec![
            BathMode::new(0.2, 1.0).unwrap(),
            BathMode::new(0.05, 2.5).unwrap(),
        ]);
        for k in 0..5 {
            let stream = RngStream::new(11, k);
            let t0 = sample_mode_sum_t0(&bath, &grid, &stream).unwrap();
            let th = sample_thermal_mode_sum(&bath, &grid, &stream);
            assert_eq!(t0.values(), th.values());
        }
    }

    #[test]
    fn forced_thermal_substitution() {
        // n̄ = 1  ⇔  T = ω / ln 2
        let bath = single(1.0, 1.0, 1.0 / std::f64::consts::LN_2);
        let grid = TimeGrid::new(2.0, 0.5).unwrap();
        let one = [C64::new(1.0, 0.0)];
        let z = thermal_mode_sum_from_amplitudes(&bath, &grid, &one, &one).unwrap();
        for (t, v) in grid.times().iter().zip(z.values()) {
            let expected = C64::from_polar(2f64.sqrt(), *t) + C64::from_polar(1.0, -*t);
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_covariance_factor() {
        let grid = TimeGrid::from_steps(1.0, 3).unwrap();
        let kernel = KernelGrid::new(grid, ComplexMatrix::identity(4, 4)).unwrap();
        let f = GridFactorization::new(&kernel).unwrap();
        let ll = f.factor() * f.factor().adjoint();
        assert!(max_abs(&(ll - ComplexMatrix::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn scalar_grid_factorization() {
        let grid = TimeGrid::from_steps(1.0, 0).unwrap();
        let kernel = KernelGrid::new(grid, ComplexMatrix::from_element(1, 1, C64::new(4.0, 0.0))).unwrap();
        let f = GridFactorization::new(&kernel).unwrap();
        assert!((f.factor()[(0, 0)].norm() - 2.0).abs() < 1e-15);
        let n = 20_000;
        let second: f64 = (0..n)
            .map(|k| f.sample(&RngStream::new(5, k)).values()[0].norm_sqr())
            .sum::<f64>()
            / n as f64;
        // E|Z|² = 4, stderr ≈ 4/√n
        assert!((second - 4.0).abs() < 4.0 * 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn zero_samples_against_zero_kernel() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let kernel = tabulate_kernel(&BathModel::zero_temperature(vec![]), &grid).unwrap();
        let samples: Vec<_> = (0..100)
            .map(|_| NoiseRealization::new(grid, vec![ZERO; grid.len()], NoiseProvenance::GridFactorization).unwrap())
            .collect();
        let report = validate_statistics(&samples, &kernel).unwrap();
        assert_eq!(report.max_z(), 0.0);
    }

    #[test]
    fn validation_rejects_small_or_mismatched_ensembles() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let bath = single(0.2, 1.0, 0.0);
        let kernel = tabulate_kernel(&bath, &grid).unwrap();
        let sampler = NoiseSampler::new(NoiseStrategy::ModeSum, &bath, &grid).unwrap();
        assert!(validate_statistics(&draw(&sampler, 50, 1), &kernel).is_err());
        let other = TimeGrid::new(2.0, 0.1).unwrap();
        let other_sampler = NoiseSampler::new(NoiseStrategy::ModeSum, &bath, &other).unwrap();
        assert!(matches!(
            validate_statistics(&draw(&other_sampler, 200, 1), &kernel),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn single_mode_statistics_and_negative_control() {
        let grid = TimeGrid::new(5.0, 0.25).unwrap();
        let bath = single(0.3, 1.2, 0.0);
        let kernel = tabulate_kernel(&bath, &grid).unwrap();
        let sampler = NoiseSampler::new(NoiseStrategy::ModeSum, &bath, &grid).unwrap();
        let samples = draw(&sampler, 100_000, 42);
        let report = validate_statistics(&samples, &kernel).unwrap();
        assert!(report.max_z() < 4.0, "max z = {}", report.max_z());

        let wrong = tabulate_kernel(&bath.scaled(2.0).unwrap(), &grid).unwrap();
        let control = validate_statistics(&samples, &wrong).unwrap();
        assert!(control.max_z_covariance() > 100.0);
    }

    #[test]
    fn thermal_covariance_matches_kernel() {
        let grid = TimeGrid::new(4.0, 0.2).unwrap();
        let bath = BathModel::new(
            vec![BathMode::new(0.3, 1.0).unwrap(), BathMode::new(0.1, 2.0).unwrap()],
            0.7,
        )
        .unwrap();
        let kernel = tabulate_kernel(&bath, &grid).unwrap();
        let sampler = NoiseSampler::new(NoiseStrategy::ThermalModeSum, &bath, &grid).unwrap();
        let report = validate_statistics(&draw(&sampler, 100_000, 9), &kernel).unwrap();
        assert!(report.max_z() < 4.0, "max z = {}", report.max_z());
    }

    #[test]
    fn grid_factorization_agrees_with_mode_sum() {
        let grid = TimeGrid::new(3.0, 0.25).unwrap();
        let bath = single(0.5, 0.8, 0.0);
        let kernel = tabulate_kernel(&bath, &grid).unwrap();
        let mode_sum = NoiseSampler::new(NoiseStrategy::ModeSum, &bath, &grid).unwrap();
        let factored = NoiseSampler::from_kernel(&kernel).unwrap();
        let n = 50_000;
        let a = draw(&mode_sum, n, 1);
        let b = draw(&factored, n, 2);
        // two-sample comparison of E[Z_p Z_q*]
        let report_a = validate_statistics(&a, &kernel).unwrap();
        let report_b = validate_statistics(&b, &kernel).unwrap();
        for (ca, cb) in report_a.covariance.iter().zip(&report_b.covariance) {
            let se = (ca.stderr.powi(2) + cb.stderr.powi(2)).sqrt();
            assert!((ca.empirical - cb.empirical).norm() < 4.0 * se + 1e-12);
        }
        assert!(report_b.max_z() < 4.0);
    }
}
