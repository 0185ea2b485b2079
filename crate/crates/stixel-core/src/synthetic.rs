//! Seed-driven synthetic scene generation with exact ground truth.
//!
//! A scene is a flat ground plane plus "box" obstacles, ray-cast on a
//! cylindrical grid. Boxes are curved walls at constant slant range, so a
//! noiseless object return equals the box range exactly; this keeps the
//! generator's ground truth analytically exact rather than approximate.
//! All randomness (range noise, outliers, dropout) flows from one seeded
//! generator, so a spec reproduces bit-identical output.

use crate::metrics::PointLabels;
use crate::model::{
    ClassSets, Distance, Measurement, PolarDepth, Scan, ScanColumn, SemanticDistribution, Stixel,
    StixelColumn, StixelWorld, StructuralClass,
};
use crate::scalar::{cast, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Evenly spaced samples over `[lo, hi]` (inclusive ends; a single-sample
/// band sits at `lo`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridBand<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
}

impl<T: Scalar> GridBand<T> {
    pub fn new(lo: T, hi: T, count: usize) -> Self {
        GridBand { lo, hi, count }
    }

    pub fn samples(&self) -> Vec<T> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / cast::<T>((self.count - 1) as f64);
        (0..self.count).map(|i| self.lo + step * cast::<T>(i as f64)).collect()
    }
}

/// An obstacle: a wall at constant slant range `range`, standing on the
/// ground plane and rising `height` meters, spanning the given azimuth
/// interval. A ray at azimuth θ and elevation α hits it iff θ lies in the
/// span and `range·sin(α)` lies between the plane and the wall top.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxObstacle<T> {
    pub azimuth_lo: T,
    pub azimuth_hi: T,
    pub range: T,
    pub height: T,
    pub label: String,
    /// Class the box's points look like to the LiDAR-domain classifier;
    /// defaults to `label`. Lets a scene model a systematically misleading
    /// modality while the ground truth stays `label`.
    pub lidar_appearance: Option<String>,
    /// Camera-domain counterpart of `lidar_appearance`.
    pub cam_appearance: Option<String>,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec<T> {
    pub seed: u64,
    pub sensor_height: T,
    /// Concatenated bottom-to-top elevation bands; must be strictly
    /// increasing overall.
    pub elevation_bands: Vec<GridBand<T>>,
    /// Azimuth sweep defining the columns.
    pub azimuth: GridBand<T>,
    /// Maximum ground distance with a ground return; flat ground beyond it
    /// gives no return.
    pub ground_extent: T,
    /// Label of ground returns.
    pub ground_label: String,
    pub boxes: Vec<BoxObstacle<T>>,
    /// Range noise on object returns (std dev, meters).
    pub sigma_range: T,
    /// Height noise on ground returns (std dev, meters).
    pub sigma_height: T,
    /// Probability that a return's range is replaced by a uniform draw
    /// from (0, outlier_range_max].
    pub outlier_rate: T,
    pub outlier_range_max: T,
    /// Probability that a return is dropped (becomes invalid).
    pub dropout_rate: T,
    /// Semantic mass moved off the true class, split evenly over the other
    /// classes; per domain.
    pub epsilon_lidar: T,
    pub epsilon_cam: T,
    /// Camera field of view; columns outside carry no camera semantics.
    pub cam_fov_lo: T,
    pub cam_fov_hi: T,
    pub classes: ClassSets,
}

impl<T: Scalar> Default for SceneSpec<T> {
    /// A small street scene: ground, a parked vehicle, a person, a wall
    /// and a pole, with mild noise. Used by the CLI when no spec is given.
    fn default() -> Self {
        let b = |lo: f64, hi: f64, r: f64, h: f64, label: &str| BoxObstacle {
            azimuth_lo: cast::<T>(lo),
            azimuth_hi: cast::<T>(hi),
            lidar_appearance: None,
            cam_appearance: None,
            range: cast::<T>(r),
            height: cast::<T>(h),
            label: label.to_string(),
        };
        SceneSpec {
            seed: 7,
            sensor_height: cast::<T>(1.7),
            elevation_bands: vec![
                GridBand::new(cast::<T>(-0.45), cast::<T>(-0.06), 40),
                GridBand::new(cast::<T>(0.04), cast::<T>(0.35), 24),
            ],
            azimuth: GridBand::new(cast::<T>(-0.6), cast::<T>(0.6), 96),
            ground_extent: cast::<T>(60.0),
            ground_label: "road".to_string(),
            boxes: vec![
                b(-0.45, -0.15, 12.0, 1.5, "small_vehicle"),
                b(-0.02, 0.02, 6.0, 5.0, "pole"),
                b(0.05, 0.12, 8.0, 1.8, "person"),
                b(0.25, 0.55, 20.0, 4.0, "construction"),
            ],
            sigma_range: cast::<T>(0.02),
            sigma_height: cast::<T>(0.02),
            outlier_rate: cast::<T>(0.005),
            dropout_rate: cast::<T>(0.02),
            outlier_range_max: cast::<T>(100.0),
            epsilon_lidar: cast::<T>(0.05),
            epsilon_cam: cast::<T>(0.05),
            cam_fov_lo: cast::<T>(-0.3),
            cam_fov_hi: cast::<T>(0.6),
            classes: ClassSets::all_default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene: {0}")]
    Invalid(String),
    #[error("scene: label '{0}' not in the {1} class set")]
    UnknownLabel(String, &'static str),
}

/// Generated data: the noisy scan plus exact ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene<T> {
    pub scan: Scan<T>,
    pub truth_world: StixelWorld<T>,
    pub truth_labels: PointLabels,
}

impl<T: Scalar> SceneSpec<T> {
    pub fn validate(&self) -> Result<(), SceneError> {
        let err = |m: String| Err(SceneError::Invalid(m));
        if !(self.sensor_height > T::zero() && self.sensor_height.is_finite()) {
            return err("sensor_height must be positive and finite".into());
        }
        if self.elevation_bands.is_empty() {
            return err("no elevation bands".into());
        }
        let rows = self.elevation_rows();
        if rows.is_empty() {
            return err("elevation grid is empty".into());
        }
        let half_pi = T::FRAC_PI_2();
        for w in rows.windows(2) {
            if !(w[0] < w[1]) {
                return err(format!("elevations must increase strictly ({} then {})", w[0], w[1]));
            }
        }
        if rows[0] < -half_pi || *rows.last().unwrap() > half_pi {
            return err("elevations must lie within [-pi/2, pi/2]".into());
        }
        if self.azimuth.count == 0 {
            return err("azimuth grid is empty".into());
        }
        if !(self.azimuth.lo <= self.azimuth.hi) {
            return err("azimuth band is reversed".into());
        }
        if self.azimuth.lo <= -T::PI() || self.azimuth.hi > T::PI() {
            return err("azimuths must lie within (-pi, pi]".into());
        }
        if !(self.ground_extent > T::zero()) {
            return err("ground_extent must be positive".into());
        }
        for (what, v) in [("sigma_range", self.sigma_range), ("sigma_height", self.sigma_height)] {
            if !(v >= T::zero() && v.is_finite()) {
                return err(format!("{what} must be non-negative and finite"));
            }
        }
        for (what, v) in [
            ("outlier_rate", self.outlier_rate),
            ("dropout_rate", self.dropout_rate),
            ("epsilon_lidar", self.epsilon_lidar),
            ("epsilon_cam", self.epsilon_cam),
        ] {
            if !(v >= T::zero() && v < T::one()) {
                return err(format!("{what} must lie in [0, 1)"));
            }
        }
        if !(self.outlier_range_max > T::zero() && self.outlier_range_max.is_finite()) {
            return err("outlier_range_max must be positive and finite".into());
        }
        if !(self.cam_fov_lo <= self.cam_fov_hi) {
            return err("camera field of view is reversed".into());
        }
        self.label_indices(&self.ground_label)?;
        if self.classes.stixel.structural_of(
            self.classes
                .stixel
                .index_of(&self.ground_label)
                .expect("checked above"),
        ) != StructuralClass::Ground
        {
            return err(format!("ground_label '{}' is not a ground class", self.ground_label));
        }
        if self.classes.stixel.index_of("sky").is_none() {
            return err("stixel class set must contain 'sky'".into());
        }
        for b in &self.boxes {
            if !(b.azimuth_lo <= b.azimuth_hi) {
                return err(format!("box '{}' azimuth span is reversed", b.label));
            }
            if b.azimuth_lo < self.azimuth.lo || b.azimuth_hi > self.azimuth.hi {
                return err(format!("box '{}' azimuth span leaves the scan", b.label));
            }
            if !(b.range > T::zero() && b.range.is_finite()) {
                return err(format!("box '{}' range must be positive", b.label));
            }
            if !(b.height > T::zero() && b.height.is_finite()) {
                return err(format!("box '{}' height must be positive", b.label));
            }
            self.label_indices(&b.label)?;
            if let Some(name) = &b.lidar_appearance {
                if self.classes.lidar.index_of(name).is_none() {
                    return Err(SceneError::UnknownLabel(name.clone(), "lidar"));
                }
            }
            if let Some(name) = &b.cam_appearance {
                if self.classes.camera.index_of(name).is_none() {
                    return Err(SceneError::UnknownLabel(name.clone(), "camera"));
                }
            }
        }
        Ok(())
    }

    /// Bottom-to-top elevation samples of all bands.
    pub fn elevation_rows(&self) -> Vec<T> {
        self.elevation_bands.iter().flat_map(GridBand::samples).collect()
    }

    /// Resolves a label name in all three class sets.
    fn label_indices(&self, name: &str) -> Result<(usize, usize, usize), SceneError> {
        let lidar = self
            .classes
            .lidar
            .index_of(name)
            .ok_or_else(|| SceneError::UnknownLabel(name.to_string(), "lidar"))?;
        let cam = self
            .classes
            .camera
            .index_of(name)
            .ok_or_else(|| SceneError::UnknownLabel(name.to_string(), "camera"))?;
        let stixel = self
            .classes
            .stixel
            .index_of(name)
            .ok_or_else(|| SceneError::UnknownLabel(name.to_string(), "stixel"))?;
        Ok((lidar, cam, stixel))
    }
}

/// What a noiseless ray hits.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Hit<T> {
    Ground { range: T },
    Object { range: T, box_index: usize },
    Nothing,
}

/// Noiseless ray cast for one direction; the nearest surface wins.
fn cast_ray<T: Scalar>(spec: &SceneSpec<T>, azimuth: T, elevation: T) -> Hit<T> {
    let mut best: Option<(T, Option<usize>)> = None;
    if elevation < T::zero() {
        let g = spec.sensor_height / (-elevation).tan();
        if g <= spec.ground_extent {
            best = Some((spec.sensor_height / (-elevation).sin(), None));
        }
    }
    for (i, b) in spec.boxes.iter().enumerate() {
        if azimuth < b.azimuth_lo || azimuth > b.azimuth_hi {
            continue;
        }
        let z = b.range * elevation.sin();
        if z >= -spec.sensor_height && z <= b.height - spec.sensor_height {
            if best.map_or(true, |(r, _)| b.range < r) {
                best = Some((b.range, Some(i)));
            }
        }
    }
    match best {
        Some((r, Some(i))) => Hit::Object { range: r, box_index: i },
        Some((r, None)) => Hit::Ground { range: r },
        None => Hit::Nothing,
    }
}

/// Distribution with `1 − ε` on the true class and `ε` split evenly over
/// the rest.
fn confused<T: Scalar>(truth: usize, n: usize, epsilon: T) -> SemanticDistribution<T> {
    if n == 1 || epsilon == T::zero() {
        return SemanticDistribution::delta(truth, n);
    }
    let off = epsilon / cast::<T>((n - 1) as f64);
    let probs = (0..n).map(|i| if i == truth { T::one() - epsilon } else { off }).collect();
    SemanticDistribution::new(probs)
}

/// Generates the scan and its ground truth. Deterministic for a fixed
/// spec (including the seed).
pub fn generate<T: Scalar>(spec: &SceneSpec<T>) -> Result<SyntheticScene<T>, SceneError> {
    spec.validate()?;
    let elevations = spec.elevation_rows();
    let azimuths = spec.azimuth.samples();
    let h = elevations.len();
    let n_lidar = spec.classes.lidar.len();
    let n_cam = spec.classes.camera.len();
    let sky_stixel = spec.classes.stixel.index_of("sky").expect("validated");
    let (ground_lidar, ground_cam, ground_stixel) = spec.label_indices(&spec.ground_label)?;
    let box_idx: Vec<(usize, usize, usize)> = spec
        .boxes
        .iter()
        .map(|b| {
            let (mut l, mut c, s) = spec.label_indices(&b.label)?;
            if let Some(name) = &b.lidar_appearance {
                l = spec
                    .classes
                    .lidar
                    .index_of(name)
                    .ok_or_else(|| SceneError::UnknownLabel(name.clone(), "lidar"))?;
            }
            if let Some(name) = &b.cam_appearance {
                c = spec
                    .classes
                    .camera
                    .index_of(name)
                    .ok_or_else(|| SceneError::UnknownLabel(name.clone(), "camera"))?;
            }
            Ok((l, c, s))
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut columns = Vec::with_capacity(azimuths.len());
    let mut world_columns = Vec::with_capacity(azimuths.len());
    let mut label_columns = Vec::with_capacity(azimuths.len());

    for (ci, &az) in azimuths.iter().enumerate() {
        let in_fov = az >= spec.cam_fov_lo && az <= spec.cam_fov_hi;
        let mut cells = Vec::with_capacity(h);
        let mut truth_rows: Vec<(StructuralClass, usize, Distance<T>)> = Vec::with_capacity(h);
        let mut point_labels = Vec::with_capacity(h);

        for &el in &elevations {
            let hit = cast_ray(spec, az, el);
            // Ground truth is recorded before any corruption.
            let (truth_stixel_row, lidar_label, cam_label) = match hit {
                Hit::Ground { range } => {
                    let g = range * el.cos();
                    (
                        (StructuralClass::Ground, ground_stixel, Distance::Finite(g)),
                        Some(ground_lidar),
                        Some(ground_cam),
                    )
                }
                Hit::Object { range, box_index } => {
                    let (l, c, s) = box_idx[box_index];
                    (
                        (StructuralClass::Object, s, Distance::Finite(range)),
                        Some(l),
                        Some(c),
                    )
                }
                Hit::Nothing => {
                    ((StructuralClass::Sky, sky_stixel, Distance::Infinite), None, None)
                }
            };
            truth_rows.push(truth_stixel_row);
            point_labels.push(Some(truth_stixel_row.1));

            // Corrupt the measurement: dropout, else outlier, else noise.
            let clean_range = match hit {
                Hit::Ground { range } | Hit::Object { range, .. } => Some(range),
                Hit::Nothing => None,
            };
            let depth = match clean_range {
                None => PolarDepth::invalid(az, el),
                Some(r0) => {
                    if spec.dropout_rate > T::zero()
                        && cast::<T>(rng.gen::<f64>()) < spec.dropout_rate
                    {
                        PolarDepth::invalid(az, el)
                    } else {
                        let r = if spec.outlier_rate > T::zero()
                            && cast::<T>(rng.gen::<f64>()) < spec.outlier_rate
                        {
                            // Uniform over (0, R_max].
                            spec.outlier_range_max * cast::<T>(1.0 - rng.gen::<f64>())
                        } else {
                            let (sigma, floor) = match hit {
                                Hit::Object { .. } => (spec.sigma_range, cast::<T>(0.05) * r0),
                                _ => {
                                    // Height noise, applied along the ray.
                                    (spec.sigma_height / (-el).sin(), cast::<T>(0.05) * r0)
                                }
                            };
                            if sigma > T::zero() {
                                let n: f64 = rng.sample(StandardNormal);
                                (r0 + sigma * cast::<T>(n)).max(floor)
                            } else {
                                r0
                            }
                        };
                        PolarDepth::valid(r, az, el)
                    }
                }
            };
            let (lidar_sem, cam_sem) = if depth.is_valid() {
                (
                    lidar_label.map(|l| confused(l, n_lidar, spec.epsilon_lidar)),
                    if in_fov {
                        cam_label.map(|l| confused(l, n_cam, spec.epsilon_cam))
                    } else {
                        None
                    },
                )
            } else {
                (None, None)
            };
            // An outlier ray still originated from a real surface, so its
            // semantics (and truth label) remain those of the surface.
            let lidar_sem = if depth.is_valid() && lidar_sem.is_none() {
                // Valid depth requires a lidar distribution; this can only
                // happen if a sky ray were made valid, which we never do.
                unreachable!("valid return without a surface")
            } else {
                lidar_sem
            };
            cells.push(Measurement { depth, lidar_sem, cam_sem });
        }

        world_columns.push(StixelColumn { column: ci, stixels: group_rows(&truth_rows) });
        label_columns.push(point_labels);
        columns.push(ScanColumn { azimuth: az, cells });
    }

    Ok(SyntheticScene {
        scan: Scan { columns, class_sets: spec.classes.clone() },
        truth_world: StixelWorld { height: h, columns: world_columns },
        truth_labels: PointLabels { columns: label_columns },
    })
}

/// Groups per-row truth into maximal contiguous stixels. Ground rows merge
/// regardless of per-row distance (the stixel keeps the topmost row's
/// distance); object rows merge only at the same label and range.
fn group_rows<T: Scalar>(rows: &[(StructuralClass, usize, Distance<T>)]) -> Vec<Stixel<T>> {
    let mut out: Vec<Stixel<T>> = Vec::new();
    for (j, &(sclass, label, distance)) in rows.iter().enumerate() {
        let row = j + 1;
        if let Some(last) = out.last_mut() {
            let merge = last.sclass == sclass
                && last.label == label
                && match sclass {
                    StructuralClass::Ground => true,
                    _ => last.distance == distance,
                };
            if merge {
                last.top = row;
                if sclass == StructuralClass::Ground {
                    last.distance = distance;
                }
                continue;
            }
        }
        out.push(Stixel { bottom: row, top: row, distance, label, sclass });
    }
    out
}
