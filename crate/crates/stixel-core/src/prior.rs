//! Segmentation prior: model-complexity cost and hard consistency checks.

use crate::model::{ModelParams, StixelColumn};
use crate::scalar::{cast, Scalar};

/// Complexity energy of a column with `n_stixels` stixels:
/// `mc_cost * (n_stixels - 1)`. A single stixel costs nothing.
pub fn complexity_energy<T: Scalar>(n_stixels: usize, params: &ModelParams<T>) -> T {
    if n_stixels == 0 {
        return T::zero();
    }
    params.mc_cost * cast::<T>((n_stixels - 1) as f64)
}

/// Checks the hard consistency constraints of a column segmentation:
/// stixels tile rows `1..=h` bottom to top without gaps or overlaps.
///
/// Returns a description of the first violation, or `Ok` for a well-formed
/// column.
pub fn consistency_check<T: Scalar>(
    column: &StixelColumn<T>,
    h: usize,
) -> Result<(), String> {
    if column.stixels.is_empty() {
        return Err(format!("column {}: no stixels", column.column));
    }
    let mut expected_bottom = 1usize;
    for (i, s) in column.stixels.iter().enumerate() {
        if s.bottom > s.top {
            return Err(format!(
                "column {}: stixel {i} is empty (bottom {} > top {})",
                column.column, s.bottom, s.top
            ));
        }
        if s.bottom != expected_bottom {
            return Err(format!(
                "column {}: non-contiguous at stixel {i} (bottom {}, expected {})",
                column.column, s.bottom, expected_bottom
            ));
        }
        expected_bottom = s.top + 1;
    }
    if expected_bottom != h + 1 {
        return Err(format!(
            "column {}: top stixel ends at {}, expected {h}",
            column.column,
            expected_bottom - 1
        ));
    }
    Ok(())
}
