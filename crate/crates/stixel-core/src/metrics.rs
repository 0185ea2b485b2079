//! Evaluation metrics: outlier rate, per-class and mean IoU, compression
//! rate.
//!
//! All three compare a stixel world point-wise against the scan it was
//! computed from (and, for IoU, against reference per-point labels), so
//! they are independent of how the world was produced.

use crate::model::{Distance, Scan, StixelWorld, StructuralClass};
use crate::model::ClassSet;
use crate::prior::consistency_check;
use crate::scalar::Scalar;
use thiserror::Error;

/// Reference label per scan cell; `None` marks unlabeled points which are
/// excluded from IoU counting. Shape mirrors the scan (columns of rows,
/// bottom to top).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointLabels {
    pub columns: Vec<Vec<Option<usize>>>,
}

impl PointLabels {
    pub fn height(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Which population the outlier rate is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutlierDenominator {
    /// Valid returns only (the default).
    #[default]
    ValidPoints,
    /// Every measurement, including invalid ones.
    AllPoints,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scan has no points")]
    EmptyScan,
    #[error("world does not cover scan: {0}")]
    ShapeMismatch(String),
    #[error("column {column} row {row}: label index {label} out of range (only {len} labels)")]
    UnknownLabel { column: usize, row: usize, label: usize, len: usize },
}

/// Full evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub outlier_rate: T,
    /// (label name, IoU) for every class present in reference or
    /// prediction, in class-set order.
    pub iou_per_class: Vec<(String, T)>,
    pub mean_iou: T,
    pub compression_rate: T,
    pub points: usize,
    pub valid_points: usize,
    pub stixels: usize,
}

/// Checks that `world` has one stixel column per scan column, each exactly
/// covering the scan's rows.
fn check_cover<T: Scalar>(scan: &Scan<T>, world: &StixelWorld<T>) -> Result<(), MetricsError> {
    if scan.columns.len() != world.columns.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} scan columns vs {} world columns",
            scan.columns.len(),
            world.columns.len()
        )));
    }
    let h = scan.height();
    if world.height != h {
        return Err(MetricsError::ShapeMismatch(format!(
            "scan height {h} vs world height {}",
            world.height
        )));
    }
    for (i, (sc, wc)) in scan.columns.iter().zip(&world.columns).enumerate() {
        if sc.cells.len() != h {
            return Err(MetricsError::ShapeMismatch(format!(
                "column {i}: scan column height {} vs {}",
                sc.cells.len(),
                h
            )));
        }
        consistency_check(wc, h)
            .map_err(|e| MetricsError::ShapeMismatch(format!("column {i}: {e}")))?;
    }
    Ok(())
}

/// Fraction of points whose range deviates more than `threshold`
/// (relative) from their covering stixel.
///
/// Object stixels compare slant ranges: |r_j − r̂| / r_j. Ground stixels
/// compare the point's horizontal ground distance against the ground-plane
/// prediction at the point's elevation (`sensor_height / tan(−elevation)`);
/// upward-looking valid points under a ground stixel have no plane
/// prediction and count as outliers, as do valid points covered by sky
/// stixels. Invalid measurements are never outliers. Returns 0 when the
/// selected denominator is empty.
pub fn outlier_rate<T: Scalar>(
    scan: &Scan<T>,
    world: &StixelWorld<T>,
    threshold: T,
    sensor_height: T,
    denominator: OutlierDenominator,
) -> Result<T, MetricsError> {
    check_cover(scan, world)?;
    let mut outliers = 0usize;
    let mut valid = 0usize;
    let mut total = 0usize;
    for (sc, wc) in scan.columns.iter().zip(&world.columns) {
        for s in &wc.stixels {
            for row in s.bottom..=s.top {
                total += 1;
                let d = &sc.cells[row - 1].depth;
                let r = match d.range {
                    Some(r) => r,
                    None => continue,
                };
                valid += 1;
                let is_outlier = match s.sclass {
                    StructuralClass::Sky => true,
                    StructuralClass::Object => match s.distance {
                        Distance::Finite(rhat) => (r - rhat).abs() / r > threshold,
                        Distance::Infinite => true,
                    },
                    StructuralClass::Ground => {
                        if d.elevation < T::zero() {
                            let g_pred = sensor_height / (-d.elevation).tan();
                            let g = r * d.elevation.cos();
                            (g - g_pred).abs() / g > threshold
                        } else {
                            true
                        }
                    }
                };
                outliers += usize::from(is_outlier);
            }
        }
    }
    let denom = match denominator {
        OutlierDenominator::ValidPoints => valid,
        OutlierDenominator::AllPoints => total,
    };
    if denom == 0 {
        return Ok(T::zero());
    }
    Ok(crate::scalar::cast::<T>(outliers as f64) / crate::scalar::cast::<T>(denom as f64))
}

/// Per-class and mean IoU of the world's point-wise labels against
/// reference labels. A point's prediction is its covering stixel's label;
/// unlabeled reference points are excluded. The mean runs over every class
/// that appears in the reference or the prediction of a counted point.
pub fn iou<T: Scalar>(
    reference: &PointLabels,
    world: &StixelWorld<T>,
    class_set: &ClassSet,
) -> Result<(Vec<(String, T)>, T), MetricsError> {
    let n = class_set.len();
    if reference.columns.len() != world.columns.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} label columns vs {} world columns",
            reference.columns.len(),
            world.columns.len()
        )));
    }
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut fne = vec![0usize; n];
    for (i, (lc, wc)) in reference.columns.iter().zip(&world.columns).enumerate() {
        consistency_check(wc, lc.len())
            .map_err(|e| MetricsError::ShapeMismatch(format!("column {i}: {e}")))?;
        for s in &wc.stixels {
            if s.label >= n {
                return Err(MetricsError::UnknownLabel {
                    column: i,
                    row: s.bottom,
                    label: s.label,
                    len: n,
                });
            }
            for row in s.bottom..=s.top {
                let truth = match lc[row - 1] {
                    Some(l) => l,
                    None => continue,
                };
                if truth >= n {
                    return Err(MetricsError::UnknownLabel {
                        column: i,
                        row,
                        label: truth,
                        len: n,
                    });
                }
                if truth == s.label {
                    tp[truth] += 1;
                } else {
                    fne[truth] += 1;
                    fp[s.label] += 1;
                }
            }
        }
    }
    let mut per_class = Vec::new();
    let mut sum = T::zero();
    for c in 0..n {
        let support = tp[c] + fp[c] + fne[c];
        if support == 0 {
            continue;
        }
        let v = crate::scalar::cast::<T>(tp[c] as f64) / crate::scalar::cast::<T>(support as f64);
        per_class.push((class_set.name(c).to_string(), v));
        sum = sum + v;
    }
    let mean = if per_class.is_empty() {
        T::zero()
    } else {
        sum / crate::scalar::cast::<T>(per_class.len() as f64)
    };
    Ok((per_class, mean))
}

/// 1 − n_stixels / n_points, where points include invalid measurements.
pub fn compression_rate<T: Scalar>(
    world: &StixelWorld<T>,
    scan: &Scan<T>,
) -> Result<T, MetricsError> {
    let n_points = scan.point_count();
    if n_points == 0 {
        return Err(MetricsError::EmptyScan);
    }
    check_cover(scan, world)?;
    let n_stixels = world.stixel_count();
    Ok(T::one()
        - crate::scalar::cast::<T>(n_stixels as f64) / crate::scalar::cast::<T>(n_points as f64))
}

/// Computes the full evaluation triple in one pass.
pub fn evaluate<T: Scalar>(
    scan: &Scan<T>,
    world: &StixelWorld<T>,
    reference: &PointLabels,
    threshold: T,
    sensor_height: T,
    denominator: OutlierDenominator,
) -> Result<EvalReport<T>, MetricsError> {
    let outlier = outlier_rate(scan, world, threshold, sensor_height, denominator)?;
    let (iou_per_class, mean_iou) = iou(reference, world, &scan.class_sets.stixel)?;
    let compression = compression_rate(world, scan)?;
    Ok(EvalReport {
        outlier_rate: outlier,
        iou_per_class,
        mean_iou,
        compression_rate: compression,
        points: scan.point_count(),
        valid_points: scan
            .columns
            .iter()
            .flat_map(|c| &c.cells)
            .filter(|m| m.depth.is_valid())
            .count(),
        stixels: world.stixel_count(),
    })
}
