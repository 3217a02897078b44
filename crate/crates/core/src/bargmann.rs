//! Unnormalized Bargmann coherent-state projections of Fock-space states.
//!
//! `⟨a|n⟩ = (a*)ⁿ/√(n!)`, so projecting a composite state onto `⟨a|` for every
//! mode is a polynomial evaluation in the conjugated amplitudes.

use crate::error::{Error, Result};
use crate::numerics::{SpaceLayout, StateVector, C64, ONE};

/// `Π_i z_i^{n_i}/√(n_i!)` for every environment basis state.
pub fn monomial_weights(layout: &SpaceLayout, z: &[C64]) -> Result<Vec<C64>> {
    if z.len() != layout.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes for {} modes",
            z.len(),
            layout.n_modes()
        )));
    }
    // per-mode power tables z^n / √(n!)
    let tables: Vec<Vec<C64>> = layout
        .mode_cutoffs()
        .iter()
        .zip(z)
        .map(|(&cutoff, &zi)| {
            let mut row = Vec::with_capacity(cutoff + 1);
            let mut term = ONE;
            row.push(term);
            for n in 1..=cutoff {
                term = term * zi / (n as f64).sqrt();
                row.push(term);
            }
            row
        })
        .collect();
    let m = layout.n_modes();
    let occ = layout.occupation_table();
    Ok((0..layout.env_dim())
        .map(|e| (0..m).fold(ONE, |acc, i| acc * tables[i][occ[e * m + i]]))
        .collect())
}

/// `Σ_n Ψ(s, n) Π_i z_i^{n_i}/√(n_i!)`; pass `z_i = a_i*` for `⟨a|Ψ⟩`.
pub fn evaluate(psi: &StateVector, layout: &SpaceLayout, z: &[C64]) -> Result<StateVector> {
    if psi.len() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for layout of dimension {}",
            psi.len(),
            layout.total_dim()
        )));
    }
    let weights = monomial_weights(layout, z)?;
    Ok(evaluate_with_weights(psi, layout, &weights))
}

pub(crate) fn evaluate_with_weights(psi: &StateVector, layout: &SpaceLayout, weights: &[C64]) -> StateVector {
    let env = layout.env_dim();
    StateVector::from_fn(layout.system_dim(), |s, _| {
        psi.rows(s * env, env).iter().zip(weights).map(|(p, w)| p * w).sum()
    })
}

/// Applies the annihilation operator of `mode` to a composite state.
pub fn lower(psi: &StateVector, layout: &SpaceLayout, mode: usize) -> StateVector {
    let env = layout.env_dim();
    let m = layout.n_modes();
    let occ = layout.occupation_table();
    let stride = layout.mode_strides()[mode];
    let mut out = StateVector::zeros(psi.len());
    for idx in 0..psi.len() {
        let n = occ[(idx % env) * m + mode];
        if n > 0 {
            out[idx - stride] += psi[idx] * (n as f64).sqrt();
        }
    }
    out
}
