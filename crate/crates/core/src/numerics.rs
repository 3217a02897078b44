//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Operators are stored as [`ComplexMatrix`] and states as [`StateVector`].
//! Composite spaces follow the [`SpaceLayout`] convention: the system index
//! varies slowest, followed by the bath modes in declaration order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

/// Largest composite dimension accepted by default.
pub const DEFAULT_DIM_CAP: usize = 10_000;

/// Relative Hermiticity tolerance (asymmetry against the largest entry).
pub const HERMITIAN_RTOL: f64 = 1e-9;

/// Eigenvalues below this magnitude are treated as zero in trace distances.
const EIGEN_CLIP: f64 = 1e-14;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Truncated system ⊗ bath-modes Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceLayout {
    system_dim: usize,
    mode_cutoffs: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(system_dim: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        Self::with_cap(system_dim, mode_cutoffs, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(system_dim: usize, mode_cutoffs: Vec<usize>, cap: usize) -> Result<Self> {
        if system_dim == 0 {
            return Err(Error::InvalidParameter("system dimension must be positive".into()));
        }
        if let Some(i) = mode_cutoffs.iter().position(|&c| c == 0) {
            return Err(Error::InvalidParameter(format!(
                "Fock cutoff of mode {i} must be positive"
            )));
        }
        let mut dim = system_dim;
        for &c in &mode_cutoffs {
            dim = dim
                .checked_mul(c + 1)
                .filter(|&d| d <= cap)
                .ok_or(Error::DimensionCap { dim: usize::MAX, cap })?;
        }
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(Self { system_dim, mode_cutoffs })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn mode_cutoffs(&self) -> &[usize] {
        &self.mode_cutoffs
    }

    pub fn n_modes(&self) -> usize {
        self.mode_cutoffs.len()
    }

    pub fn env_dim(&self) -> usize {
        self.mode_cutoffs.iter().map(|c| c + 1).product()
    }

    pub fn total_dim(&self) -> usize {
        self.system_dim * self.env_dim()
    }

    /// Index stride of each mode inside the environment index.
    pub fn mode_strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.mode_cutoffs.len()];
        for i in (0..self.mode_cutoffs.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (self.mode_cutoffs[i + 1] + 1);
        }
        strides
    }

    /// Occupation numbers of every environment basis state, row-major
    /// (`env_dim` rows of `n_modes` entries).
    pub fn occupation_table(&self) -> Vec<usize> {
        let m = self.n_modes();
        let strides = self.mode_strides();
        let mut table = Vec::with_capacity(self.env_dim() * m);
        for e in 0..self.env_dim() {
            for (i, &c) in self.mode_cutoffs.iter().enumerate() {
                table.push((e / strides[i]) % (c + 1));
            }
        }
        table
    }

    /// Population of the top Fock level of each mode, relative to the norm.
    pub fn top_level_populations(&self, psi: &StateVector) -> Vec<f64> {
        let env = self.env_dim();
        let occ = self.occupation_table();
        let m = self.n_modes();
        let mut top = vec![0.0; m];
        let mut norm = 0.0;
        for (idx, amp) in psi.iter().enumerate() {
            let p = amp.norm_sqr();
            norm += p;
            let e = idx % env;
            for i in 0..m {
                if occ[e * m + i] == self.mode_cutoffs[i] {
                    top[i] += p;
                }
            }
        }
        if norm > 0.0 {
            top.iter_mut().for_each(|t| *t /= norm);
        }
        top
    }
}

/// Kronecker product with the default dimension cap.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    tensor_product_with_cap(a, b, DEFAULT_DIM_CAP)
}

pub fn tensor_product_with_cap(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    cap: usize,
) -> Result<ComplexMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= cap && c <= cap => Ok(a.kronecker(b)),
        (r, c) => Err(Error::DimensionCap {
            dim: r.unwrap_or(usize::MAX).max(c.unwrap_or(usize::MAX)),
            cap,
        }),
    }
}

/// Traces out every bath mode of `m`, leaving a `system_dim`-square matrix.
pub fn partial_trace_env(m: &ComplexMatrix, layout: &SpaceLayout) -> Result<ComplexMatrix> {
    let total = layout.total_dim();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, layout expects {total}x{total}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = layout.system_dim();
    let env = layout.env_dim();
    Ok(ComplexMatrix::from_fn(d, d, |i, j| {
        (0..env).map(|e| m[(i * env + e, j * env + e)]).sum()
    }))
}

/// Reduced system density of a pure composite state without forming |Ψ⟩⟨Ψ|.
pub fn reduced_density_of_state(psi: &StateVector, layout: &SpaceLayout) -> Result<ComplexMatrix> {
    if psi.len() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, layout expects {}",
            psi.len(),
            layout.total_dim()
        )));
    }
    let d = layout.system_dim();
    let env = layout.env_dim();
    Ok(ComplexMatrix::from_fn(d, d, |i, j| {
        (0..env)
            .map(|e| psi[i * env + e] * psi[j * env + e].conj())
            .sum()
    }))
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry of `m − m†`.
pub fn hermitian_asymmetry(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn check_hermitian(m: &ComplexMatrix, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite_matrix(m, name)?;
    let asymmetry = hermitian_asymmetry(m);
    if asymmetry > HERMITIAN_RTOL * max_abs(m) {
        return Err(Error::NotHermitian { name: name.to_string(), asymmetry });
    }
    Ok(())
}

pub fn check_finite_matrix(m: &ComplexMatrix, name: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

pub fn check_finite_vector(v: &StateVector, name: &str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// `(m + m†) / 2`
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// Spectral (largest singular value) norm.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn outer(psi: &StateVector) -> ComplexMatrix {
    psi * psi.adjoint()
}

/// Half the trace norm of `a − b` for Hermitian inputs.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let scale = max_abs(a).max(max_abs(b));
    for (m, name) in [(a, "first operand"), (b, "second operand")] {
        check_finite_matrix(m, name)?;
        let asymmetry = hermitian_asymmetry(m);
        if asymmetry > HERMITIAN_RTOL * scale {
            return Err(Error::NotHermitian { name: name.to_string(), asymmetry });
        }
    }
    let diff = hermitize(&(a - b));
    let eigenvalues = diff.symmetric_eigenvalues();
    Ok(0.5
        * eigenvalues
            .iter()
            .map(|l| if l.abs() < EIGEN_CLIP { 0.0 } else { l.abs() })
            .sum::<f64>())
}

/// Eigendecomposition of a Hermitian operator, reused for exact propagation.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    pub energies: DVector<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn new(h: &ComplexMatrix) -> Self {
        let eig = hermitize(h).symmetric_eigen();
        Self { energies: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `e^{−iHt}`
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        let phases = self.energies.map(|e| C64::from_polar(1.0, -e * t));
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[k];
        }
        scaled * self.vectors.adjoint()
    }

    /// `e^{−iHt} ψ`
    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        let coeffs = self.vectors.adjoint() * psi;
        self.evolve_coefficients(&coeffs, t)
    }

    /// Evolves eigenbasis coefficients and maps back to the original basis.
    pub fn evolve_coefficients(&self, coeffs: &StateVector, t: f64) -> StateVector {
        let rotated = StateVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(self.energies.iter())
                .map(|(c, e)| c * C64::from_polar(1.0, -e * t)),
        );
        &self.vectors * rotated
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn real_diagonal(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&StateVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(n: usize, seed: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |i, j| {
            let k = (i * n + j) % seed.len();
            C64::new(seed[k], seed[(k + 1) % seed.len()] - 0.3 * (i as f64))
        })
    }

    fn random_density(n: usize, seed: &[f64]) -> ComplexMatrix {
        let a = random_matrix(n, seed);
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    #[test]
    fn identity_kronecker() {
        let p = tensor_product(&ComplexMatrix::identity(2, 2), &ComplexMatrix::identity(3, 3)).unwrap();
        assert_eq!(p, ComplexMatrix::identity(6, 6));
    }

    #[test]
    fn diagonal_kronecker() {
        let p = tensor_product(&real_diagonal(&[1.0, 2.0]), &ComplexMatrix::identity(2, 2)).unwrap();
        assert_eq!(p, real_diagonal(&[1.0, 1.0, 2.0, 2.0]));
    }

    #[test]
    fn sigma_x_squared_kronecker_is_identity() {
        let xx = tensor_product(&pauli_x(), &pauli_x()).unwrap();
        assert_eq!(&xx * &xx, ComplexMatrix::identity(4, 4));
    }

    #[test]
    fn kronecker_respects_cap() {
        let a = ComplexMatrix::identity(50, 50);
        let err = tensor_product_with_cap(&a, &a, 1000).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { dim: 2500, cap: 1000 }));
    }

    #[test]
    fn layout_dimensions_and_cap() {
        let layout = SpaceLayout::new(2, vec![3, 1]).unwrap();
        assert_eq!(layout.env_dim(), 8);
        assert_eq!(layout.total_dim(), 16);
        assert_eq!(layout.mode_strides(), vec![2, 1]);
        assert_eq!(&layout.occupation_table()[..6], &[0, 0, 0, 1, 1, 0]);
        assert!(matches!(
            SpaceLayout::new(2, vec![100, 100]),
            Err(Error::DimensionCap { .. })
        ));
        assert!(SpaceLayout::new(2, vec![0]).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let rho_s = random_density(2, &[0.3, 0.1, 0.7, 0.2]);
        let rho_e = random_density(3, &[0.9, 0.4, 0.5]);
        let layout = SpaceLayout::new(2, vec![2]).unwrap();
        let joint = tensor_product(&rho_s, &rho_e).unwrap();
        let reduced = partial_trace_env(&joint, &layout).unwrap();
        assert!(max_abs(&(reduced - rho_s)) < 1e-14);
    }

    #[test]
    fn partial_trace_of_maximally_mixed() {
        let layout = SpaceLayout::new(2, vec![1, 2]).unwrap();
        let n = layout.total_dim();
        let m = ComplexMatrix::identity(n, n) / C64::new(n as f64, 0.0);
        let reduced = partial_trace_env(&m, &layout).unwrap();
        assert!(max_abs(&(reduced - ComplexMatrix::identity(2, 2).scale(0.5))) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_shape() {
        let layout = SpaceLayout::new(2, vec![1]).unwrap();
        let m = ComplexMatrix::identity(3, 3);
        assert!(matches!(partial_trace_env(&m, &layout), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn reduced_density_matches_partial_trace() {
        let layout = SpaceLayout::new(2, vec![2]).unwrap();
        let psi = StateVector::from_fn(6, |i, _| C64::new(0.1 * i as f64, 0.3 - 0.05 * i as f64));
        let direct = reduced_density_of_state(&psi, &layout).unwrap();
        let via = partial_trace_env(&outer(&psi), &layout).unwrap();
        assert!(max_abs(&(direct - via)) < 1e-15);
    }

    #[test]
    fn trace_distance_examples() {
        let rho = random_density(2, &[0.2, 0.5, 0.1]);
        assert_eq!(trace_distance(&rho, &rho).unwrap(), 0.0);
        let d = trace_distance(&real_diagonal(&[1.0, 0.0]), &real_diagonal(&[0.0, 1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let d = trace_distance(&real_diagonal(&[0.5, 0.5]), &real_diagonal(&[1.0, 0.0])).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trace_distance_rejects_non_hermitian() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(
            trace_distance(&a, &ComplexMatrix::identity(2, 2)),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn check_hermitian_reports_asymmetry() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[ONE, C64::new(0.5, 0.0), ZERO, ONE]);
        match check_hermitian(&a, "hamiltonian") {
            Err(Error::NotHermitian { name, asymmetry }) => {
                assert_eq!(name, "hamiltonian");
                assert!((asymmetry - 0.5).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spectrum_propagator_is_unitary_exponential() {
        let h = pauli_x().scale(0.7) + pauli_z().scale(0.2);
        let spec = HermitianSpectrum::new(&h);
        let u = spec.propagator(1.3);
        assert!(max_abs(&(&u * u.adjoint() - ComplexMatrix::identity(2, 2))) < 1e-14);
        // compare against a Taylor series
        let mut term = ComplexMatrix::identity(2, 2);
        let mut sum = term.clone();
        let gen = h * C64::new(0.0, -1.3);
        for k in 1..40 {
            term = &term * &gen / C64::new(k as f64, 0.0);
            sum += &term;
        }
        assert!(max_abs(&(u - sum)) < 1e-13);
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
            ComplexMatrix::from_fn(n, n, |i, j| C64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]))
        })
    }

    fn arb_density(n: usize) -> impl Strategy<Value = ComplexMatrix> {
        arb_matrix(n).prop_map(|a| {
            let rho = &a * a.adjoint() + ComplexMatrix::identity(a.nrows(), a.nrows()).scale(1e-3);
            let tr = rho.trace();
            rho / tr
        })
    }

    proptest! {
        #[test]
        fn mixed_product_property(a in arb_matrix(2), b in arb_matrix(3), c in arb_matrix(2), d in arb_matrix(3)) {
            let lhs = tensor_product(&a, &b).unwrap() * tensor_product(&c, &d).unwrap();
            let rhs = tensor_product(&(&a * &c), &(&b * &d)).unwrap();
            prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
        }

        #[test]
        fn kronecker_associative(a in arb_matrix(2), b in arb_matrix(2), c in arb_matrix(3)) {
            let left = tensor_product(&tensor_product(&a, &b).unwrap(), &c).unwrap();
            let right = tensor_product(&a, &tensor_product(&b, &c).unwrap()).unwrap();
            prop_assert!(max_abs(&(left - right)) < 1e-14);
        }

        #[test]
        fn partial_trace_linear_and_trace_preserving(a in arb_matrix(6), b in arb_matrix(6), s in -2.0f64..2.0) {
            let layout = SpaceLayout::new(2, vec![2]).unwrap();
            let ha = hermitize(&a);
            let hb = hermitize(&b);
            let combo = &ha + hb.scale(s);
            let lhs = partial_trace_env(&combo, &layout).unwrap();
            let rhs = partial_trace_env(&ha, &layout).unwrap() + partial_trace_env(&hb, &layout).unwrap().scale(s);
            prop_assert!(max_abs(&(lhs.clone() - rhs)) < 1e-12);
            prop_assert!((lhs.trace() - combo.trace()).norm() < 1e-12);
        }

        #[test]
        fn partial_trace_keeps_positivity(rho in arb_density(6)) {
            let layout = SpaceLayout::new(3, vec![1]).unwrap();
            let reduced = partial_trace_env(&rho, &layout).unwrap();
            let min = hermitize(&reduced).symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10);
        }

        #[test]
        fn trace_distance_metric(a in arb_density(3), b in arb_density(3), c in arb_density(3)) {
            let ab = trace_distance(&a, &b).unwrap();
            let ba = trace_distance(&b, &a).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            let ac = trace_distance(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
        }
    }
}
