//! Plain-text output helpers shared by the solver, oracle and ensemble.

use std::io::Write;

use crate::error::Result;
use crate::numerics::ComplexMatrix;

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t` followed by the real and imaginary part of every density
/// matrix entry in row-major order.
pub fn write_density_csv<W: Write>(out: &mut W, times: &[f64], rhos: &[ComplexMatrix]) -> Result<()> {
    let dim = rhos.first().map_or(0, |r| r.nrows());
    let mut header = vec!["t".to_string()];
    for j in 0..dim {
        for k in 0..dim {
            header.push(format!("re_rho_{j}_{k}"));
            header.push(format!("im_rho_{j}_{k}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (t, rho) in times.iter().zip(rhos) {
        let mut row = vec![fmt_f64(*t)];
        for j in 0..dim {
            for k in 0..dim {
                row.push(fmt_f64(rho[(j, k)].re));
                row.push(fmt_f64(rho[(j, k)].im));
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
