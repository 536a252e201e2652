//! Dense linear algebra, random streams and weight initialisation.

mod matrix;
mod rng;
mod scalar;

pub use matrix::{dot, norm, Matrix};
pub use rng::RngState;
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// `fan_out × fan_in` matrix with entries drawn from N(0, 2/fan_in).
pub fn kaiming_normal<T: Scalar>(rng: &mut RngState, fan_in: usize, fan_out: usize) -> Result<Matrix<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::arg(format!(
            "kaiming_normal needs positive fans, got in={fan_in} out={fan_out}"
        )));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let data = rng
        .gaussian(fan_in * fan_out)
        .into_iter()
        .map(|z| T::lit(z * std))
        .collect();
    Matrix::from_vec(fan_out, fan_in, data)
}
