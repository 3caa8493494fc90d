use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, frob_sq, CMatrix};

/// `|X - X_ref|_F / |X_ref|_F`.
pub fn nrmse(x: &CMatrix, reference: &CMatrix) -> Result<f64> {
    check_same_shape(x, reference, "nrmse")?;
    let r = frob_sq(reference);
    if r == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((frob_sq(&(x - reference)) / r).sqrt())
}

/// Normalized squared distance to the limit, `|X_k - X_inf|^2 / |X_inf|^2`.
pub fn dist_to_limit(x: &CMatrix, limit: &CMatrix) -> Result<f64> {
    check_same_shape(x, limit, "dist_to_limit")?;
    let r = frob_sq(limit);
    if r == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(frob_sq(&(x - limit)) / r)
}
