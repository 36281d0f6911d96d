use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Matrix exponential `e^{tA}` by scaling-and-squaring with Padé
/// approximants, order selected from the scaled norm.
///
/// Relative accuracy is at the 1e-12 level for the moderate norms used here;
/// the semigroup property and closed-form cases are enforced by tests.
pub fn expm(a: &RealMatrix, t: f64) -> Result<RealMatrix> {
    if !a.is_square() {
        return Err(Error::dimension(
            "expm",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if !t.is_finite() {
        return Err(Error::Domain {
            context: format!("expm: t = {t} is not finite"),
        });
    }
    if a.nrows() == 0 {
        return Ok(RealMatrix::zeros(0, 0));
    }
    Ok((a * t).exp())
}
