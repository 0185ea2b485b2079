//! Core data types: measurements, scans, class sets, stixels, parameters.
//!
//! Row indexing convention: rows are numbered `1..=h` from the bottom of a
//! column upward, matching the on-disk formats. Elevation angles strictly
//! increase with the row index.

use crate::scalar::{cast, Scalar};
use thiserror::Error;

/// Structural class of a stixel: what kind of surface it explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructuralClass {
    Ground,
    Object,
    Sky,
}

impl StructuralClass {
    /// Lower-case name used by the text formats.
    pub fn name(self) -> &'static str {
        match self {
            StructuralClass::Ground => "ground",
            StructuralClass::Object => "object",
            StructuralClass::Sky => "sky",
        }
    }

    /// Parses the format token produced by [`StructuralClass::name`].
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "ground" => Some(StructuralClass::Ground),
            "object" => Some(StructuralClass::Object),
            "sky" => Some(StructuralClass::Sky),
            _ => None,
        }
    }
}

/// One polar depth measurement: range plus beam direction.
///
/// `range` is `None` for invalid returns (dropouts, absorbing surfaces, or
/// beams that never hit anything). Angles are radians; `elevation` is
/// positive above the horizontal sensor plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarDepth<T> {
    pub range: Option<T>,
    pub azimuth: T,
    pub elevation: T,
}

impl<T: Scalar> PolarDepth<T> {
    pub fn valid(range: T, azimuth: T, elevation: T) -> Self {
        PolarDepth { range: Some(range), azimuth, elevation }
    }

    pub fn invalid(azimuth: T, elevation: T) -> Self {
        PolarDepth { range: None, azimuth, elevation }
    }

    pub fn is_valid(&self) -> bool {
        self.range.is_some()
    }
}

/// Discrete class distribution over some class set.
///
/// Entries are probabilities in `[0, 1]` summing to 1 (within 1e-6, checked
/// by [`validate_scan`]). The owning class set is implied by context: LiDAR
/// distributions use the scan's LiDAR class set, camera distributions the
/// camera class set.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDistribution<T> {
    pub probs: Vec<T>,
}

impl<T: Scalar> SemanticDistribution<T> {
    pub fn new(probs: Vec<T>) -> Self {
        SemanticDistribution { probs }
    }

    /// Distribution with all mass on one class.
    pub fn delta(index: usize, len: usize) -> Self {
        let mut probs = vec![T::zero(); len];
        probs[index] = T::one();
        SemanticDistribution { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// One cell of a scan column: depth plus optional per-modality semantics.
///
/// The LiDAR semantic head runs on valid returns, so `lidar_sem` is present
/// whenever `depth` is valid. `cam_sem` is absent outside the camera field
/// of view or when no image is available.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T> {
    pub depth: PolarDepth<T>,
    pub lidar_sem: Option<SemanticDistribution<T>>,
    pub cam_sem: Option<SemanticDistribution<T>>,
}

/// A vertical scan column: `cells[0]` is the bottom row (row 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanColumn<T> {
    pub azimuth: T,
    pub cells: Vec<Measurement<T>>,
}

impl<T> ScanColumn<T> {
    /// Number of rows h.
    pub fn height(&self) -> usize {
        self.cells.len()
    }
}

/// The three class sets a scan carries: one per semantic domain plus the
/// stixel output vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSets {
    pub lidar: ClassSet,
    pub camera: ClassSet,
    pub stixel: ClassSet,
}

impl ClassSets {
    /// All three domains use the default 13-label vocabulary.
    pub fn all_default() -> Self {
        ClassSets {
            lidar: ClassSet::default_thirteen(),
            camera: ClassSet::default_thirteen(),
            stixel: ClassSet::default_thirteen(),
        }
    }
}

/// A full range-image scan: columns ordered by azimuth plus the class sets
/// its semantic channels refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan<T> {
    pub columns: Vec<ScanColumn<T>>,
    pub class_sets: ClassSets,
}

impl<T> Scan<T> {
    /// Column height h; 0 for an empty scan.
    pub fn height(&self) -> usize {
        self.columns.first().map_or(0, |c| c.cells.len())
    }

    /// Total number of cells, valid or not.
    pub fn point_count(&self) -> usize {
        self.columns.iter().map(|c| c.cells.len()).sum()
    }
}

/// Named semantic labels together with their structural classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSet {
    names: Vec<String>,
    structural: Vec<StructuralClass>,
}

/// Names of the default 13-label vocabulary, in canonical order.
pub const DEFAULT_LABELS: [&str; 13] = [
    "road",
    "sidewalk",
    "person",
    "rider",
    "small_vehicle",
    "large_vehicle",
    "two_wheeler",
    "construction",
    "pole",
    "traffic_sign",
    "vegetation",
    "terrain",
    "sky",
];

impl ClassSet {
    /// Builds a class set from explicit label/structural pairs.
    pub fn new(
        labels: impl IntoIterator<Item = (String, StructuralClass)>,
    ) -> Result<Self, ModelError> {
        let mut names = Vec::new();
        let mut structural = Vec::new();
        for (name, class) in labels {
            if name.is_empty() || name.split_whitespace().count() != 1 {
                return Err(ModelError::BadLabelName(name));
            }
            if names.contains(&name) {
                return Err(ModelError::DuplicateLabel(name));
            }
            names.push(name);
            structural.push(class);
        }
        if names.is_empty() {
            return Err(ModelError::EmptyClassSet);
        }
        Ok(ClassSet { names, structural })
    }

    /// Builds a class set using the default structural rule: `road`,
    /// `sidewalk` and `terrain` are ground, `sky` is sky, everything else
    /// is an object.
    pub fn with_default_structure(
        names: impl IntoIterator<Item = String>,
    ) -> Result<Self, ModelError> {
        ClassSet::new(names.into_iter().map(|n| {
            let class = match n.as_str() {
                "road" | "sidewalk" | "terrain" => StructuralClass::Ground,
                "sky" => StructuralClass::Sky,
                _ => StructuralClass::Object,
            };
            (n, class)
        }))
    }

    /// The default 13-label vocabulary.
    pub fn default_thirteen() -> Self {
        ClassSet::with_default_structure(DEFAULT_LABELS.iter().map(|s| s.to_string()))
            .expect("default class set is well formed")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn structural_of(&self, index: usize) -> StructuralClass {
        self.structural[index]
    }

    /// Indices of all labels with the given structural class, in set order.
    pub fn labels_of(&self, class: StructuralClass) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.structural[i] == class)
    }
}

/// Distance carried by a stixel.
///
/// Sky stixels use the dedicated `Infinite` sentinel so serialization stays
/// unambiguous; ground and object stixels always carry a finite positive
/// value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distance<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Distance<T> {
    pub fn as_finite(&self) -> Option<T> {
        match self {
            Distance::Finite(v) => Some(*v),
            Distance::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Distance::Infinite)
    }
}

/// One stixel: a contiguous row interval `[bottom, top]` (1-based,
/// inclusive) with a structural class, a semantic label (index into the
/// stixel class set), and a distance.
///
/// For object stixels the distance is the estimated range to the sensor;
/// for ground stixels it is the horizontal ground distance of the topmost
/// valid measurement; sky stixels carry `Distance::Infinite`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stixel<T> {
    pub bottom: usize,
    pub top: usize,
    pub distance: Distance<T>,
    pub label: usize,
    pub sclass: StructuralClass,
}

impl<T: Scalar> Stixel<T> {
    /// Number of rows covered.
    pub fn rows(&self) -> usize {
        self.top - self.bottom + 1
    }

    /// True if the 1-based row lies inside this stixel.
    pub fn covers(&self, row: usize) -> bool {
        self.bottom <= row && row <= self.top
    }
}

/// All stixels of one column, ordered bottom to top.
#[derive(Debug, Clone, PartialEq)]
pub struct StixelColumn<T> {
    pub column: usize,
    pub stixels: Vec<Stixel<T>>,
}

/// Stixel segmentation of a whole scan.
#[derive(Debug, Clone, PartialEq)]
pub struct StixelWorld<T> {
    /// Column height h shared by every column.
    pub height: usize,
    pub columns: Vec<StixelColumn<T>>,
}

impl<T> StixelWorld<T> {
    pub fn stixel_count(&self) -> usize {
        self.columns.iter().map(|c| c.stixels.len()).sum()
    }
}

/// Row-stochastic map from a semantic domain's class set onto the stixel
/// class set.
///
/// `Identity` requires equal cardinality and passes distributions through
/// untouched; `Matrix` holds one row per input class, each row summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassMap<T> {
    Identity,
    Matrix(Vec<Vec<T>>),
}

impl<T: Scalar> ClassMap<T> {
    /// Maps a distribution over the input class set to one over the stixel
    /// class set with `n_out` labels. The identity map is an exact
    /// passthrough (no arithmetic).
    pub fn apply(&self, probs: &[T], n_out: usize) -> Vec<T> {
        match self {
            ClassMap::Identity => {
                debug_assert_eq!(probs.len(), n_out);
                probs.to_vec()
            }
            ClassMap::Matrix(rows) => {
                let mut out = vec![T::zero(); n_out];
                for (p, row) in probs.iter().zip(rows) {
                    for (o, w) in out.iter_mut().zip(row) {
                        *o = *o + *p * *w;
                    }
                }
                out
            }
        }
    }

    /// Checks shape (`n_in` rows of `n_out` entries) and row-stochasticity
    /// within 1e-6.
    pub fn validate(&self, n_in: usize, n_out: usize) -> Result<(), ModelError> {
        match self {
            ClassMap::Identity => {
                if n_in != n_out {
                    return Err(ModelError::ClassMapShape {
                        expected: (n_in, n_out),
                        got: (n_in, n_in),
                    });
                }
            }
            ClassMap::Matrix(rows) => {
                if rows.len() != n_in || rows.iter().any(|r| r.len() != n_out) {
                    let got_cols = rows.first().map_or(0, |r| r.len());
                    return Err(ModelError::ClassMapShape {
                        expected: (n_in, n_out),
                        got: (rows.len(), got_cols),
                    });
                }
                let tol = cast::<T>(1e-6);
                for (i, row) in rows.iter().enumerate() {
                    if row.iter().any(|w| *w < T::zero()) {
                        return Err(ModelError::ClassMapRow { row: i });
                    }
                    let sum = row.iter().fold(T::zero(), |a, w| a + *w);
                    if (sum - T::one()).abs() > tol {
                        return Err(ModelError::ClassMapRow { row: i });
                    }
                }
            }
        }
        Ok(())
    }
}

/// All tunable parameters of the energy model.
///
/// Angles are radians, distances meters. Weights scale whole modalities in
/// the per-measurement energy; `mc_cost` is the model-complexity price per
/// additional stixel in a column.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// Weight of the geometric energy (distance + gradient + sensor terms).
    pub w_geo: T,
    /// Weight of the LiDAR-domain semantic energy.
    pub w_sem_lidar: T,
    /// Weight of the camera-domain semantic energy.
    pub w_sem_cam: T,
    /// Complexity prior: cost per stixel beyond the first in a column.
    pub mc_cost: T,
    /// Range noise std-dev for the object distance residual.
    pub sigma_range: T,
    /// Height noise std-dev for the ground plane residual.
    pub sigma_height: T,
    /// Outlier mixture weight in the distance model, in `[0, 1)`.
    pub outlier_rate: T,
    /// Support of the uniform outlier component, meters.
    pub outlier_range_max: T,
    /// Gradient-to-object steepness (1/radian).
    pub grad_steep: T,
    /// Gradient angle at which ground and object are equally likely.
    pub grad_shift: T,
    /// Sensor-model steepness over elevation (1/radian).
    pub sens_scale: T,
    /// Sensor-model elevation shift.
    pub sens_shift: T,
    /// Height of the sensor above the ideal ground plane, meters.
    pub sensor_height: T,
    /// Map from the LiDAR class set onto the stixel class set.
    pub lidar_class_map: ClassMap<T>,
    /// Map from the camera class set onto the stixel class set.
    pub cam_class_map: ClassMap<T>,
}

/// Floor applied to mapped semantic probabilities before taking `-ln`.
pub const SEMANTIC_PROB_FLOOR: f64 = 1e-6;

impl<T: Scalar> Default for ModelParams<T> {
    /// Defaults tuned for vehicle-mounted scans (sensor ~1.7 m above
    /// ground) with roughly equal modality weighting.
    fn default() -> Self {
        ModelParams {
            w_geo: T::one(),
            w_sem_lidar: T::one(),
            w_sem_cam: T::one(),
            mc_cost: cast(12.0),
            sigma_range: cast(0.05),
            sigma_height: cast(0.05),
            outlier_rate: cast(0.1),
            outlier_range_max: cast(100.0),
            grad_steep: cast(8.0),
            grad_shift: cast(0.4),
            sens_scale: cast(30.0),
            sens_shift: cast(0.02),
            sensor_height: cast(1.7),
            lidar_class_map: ClassMap::Identity,
            cam_class_map: ClassMap::Identity,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Validates parameter ranges alone (no class-set shapes).
    pub fn validate(&self) -> Result<(), ModelError> {
        fn finite<T: Scalar>(name: &'static str, v: T) -> Result<(), ModelError> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::Param { name, reason: "must be finite" })
            }
        }
        fn positive<T: Scalar>(name: &'static str, v: T) -> Result<(), ModelError> {
            finite(name, v)?;
            if v > T::zero() {
                Ok(())
            } else {
                Err(ModelError::Param { name, reason: "must be positive" })
            }
        }
        fn non_negative<T: Scalar>(name: &'static str, v: T) -> Result<(), ModelError> {
            finite(name, v)?;
            if v >= T::zero() {
                Ok(())
            } else {
                Err(ModelError::Param { name, reason: "must be non-negative" })
            }
        }

        non_negative("w_geo", self.w_geo)?;
        non_negative("w_sem_lidar", self.w_sem_lidar)?;
        non_negative("w_sem_cam", self.w_sem_cam)?;
        non_negative("mc_cost", self.mc_cost)?;
        positive("sigma_range", self.sigma_range)?;
        positive("sigma_height", self.sigma_height)?;
        finite("outlier_rate", self.outlier_rate)?;
        if self.outlier_rate < T::zero() || self.outlier_rate >= T::one() {
            return Err(ModelError::Param { name: "outlier_rate", reason: "must be in [0, 1)" });
        }
        positive("outlier_range_max", self.outlier_range_max)?;
        positive("grad_steep", self.grad_steep)?;
        finite("grad_shift", self.grad_shift)?;
        positive("sens_scale", self.sens_scale)?;
        finite("sens_shift", self.sens_shift)?;
        positive("sensor_height", self.sensor_height)?;
        Ok(())
    }

    /// Validates ranges plus class-map shapes against the given class sets.
    pub fn validate_for(&self, sets: &ClassSets) -> Result<(), ModelError> {
        self.validate()?;
        self.lidar_class_map
            .validate(sets.lidar.len(), sets.stixel.len())
            .map_err(|e| e.in_map("lidar"))?;
        self.cam_class_map
            .validate(sets.camera.len(), sets.stixel.len())
            .map_err(|e| e.in_map("cam"))?;
        Ok(())
    }
}

/// Errors from constructing or validating model data.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("class label {0:?} is not a single non-empty token")]
    BadLabelName(String),
    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),
    #[error("class set has no labels")]
    EmptyClassSet,
    #[error("class map has shape {got:?}, expected {expected:?}")]
    ClassMapShape { expected: (usize, usize), got: (usize, usize) },
    #[error("class map row {row} is not a probability row summing to 1")]
    ClassMapRow { row: usize },
    #[error("{domain} class map: {source}")]
    ClassMapDomain { domain: &'static str, source: Box<ModelError> },
    #[error("parameter {name} {reason}")]
    Param { name: &'static str, reason: &'static str },
}

impl ModelError {
    fn in_map(self, domain: &'static str) -> ModelError {
        ModelError::ClassMapDomain { domain, source: Box::new(self) }
    }
}

/// Checks every scan invariant and returns one human-readable description
/// per violation (empty means the scan is well formed). Descriptions name
/// the offending column and row where applicable.
pub fn validate_scan<T: Scalar>(scan: &Scan<T>) -> Vec<String> {
    let mut out = Vec::new();
    let h = scan.height();
    let pi = T::PI();
    let half_pi = pi / cast::<T>(2.0);
    let sum_tol = cast::<T>(1e-6);

    let check_dist = |out: &mut Vec<String>,
                      col: usize,
                      row: usize,
                      what: &str,
                      dist: &SemanticDistribution<T>,
                      expected_len: usize| {
        if dist.len() != expected_len {
            out.push(format!(
                "column {col} row {row}: {what} has {} entries, class set has {expected_len}",
                dist.len()
            ));
            return;
        }
        let mut sum = T::zero();
        for (i, p) in dist.probs.iter().enumerate() {
            if !p.is_finite() || *p < T::zero() || *p > T::one() {
                out.push(format!(
                    "column {col} row {row}: {what} entry {i} is outside [0, 1]"
                ));
                return;
            }
            sum = sum + *p;
        }
        if (sum - T::one()).abs() > sum_tol {
            out.push(format!(
                "column {col} row {row}: SemanticDistribution sum is {sum}, expected 1 ({what})"
            ));
        }
    };

    for (ci, col) in scan.columns.iter().enumerate() {
        if col.cells.is_empty() {
            out.push(format!("column {ci}: has no rows"));
            continue;
        }
        if col.cells.len() != h {
            out.push(format!(
                "column {ci}: height {} differs from column 0 height {h}",
                col.cells.len()
            ));
        }
        if !col.azimuth.is_finite() || col.azimuth <= -pi || col.azimuth > pi {
            out.push(format!("column {ci}: azimuth outside (-pi, pi]"));
        }
        let mut prev_elev: Option<T> = None;
        for (ri0, cell) in col.cells.iter().enumerate() {
            let row = ri0 + 1;
            let d = &cell.depth;
            if !d.elevation.is_finite() || d.elevation < -half_pi || d.elevation > half_pi {
                out.push(format!("column {ci} row {row}: elevation outside [-pi/2, pi/2]"));
            }
            if !d.azimuth.is_finite() || d.azimuth <= -pi || d.azimuth > pi {
                out.push(format!("column {ci} row {row}: azimuth outside (-pi, pi]"));
            }
            if let Some(p) = prev_elev {
                if d.elevation <= p {
                    out.push(format!(
                        "column {ci} row {row}: elevation not strictly increasing"
                    ));
                }
            }
            prev_elev = Some(d.elevation);
            if let Some(r) = d.range {
                if !r.is_finite() || r <= T::zero() {
                    out.push(format!(
                        "column {ci} row {row}: valid range must be finite and positive"
                    ));
                }
                if cell.lidar_sem.is_none() {
                    out.push(format!(
                        "column {ci} row {row}: lidar_sem absent on a valid measurement"
                    ));
                }
            }
            if let Some(sem) = &cell.lidar_sem {
                check_dist(&mut out, ci, row, "lidar_sem", sem, scan.class_sets.lidar.len());
            }
            if let Some(sem) = &cell.cam_sem {
                check_dist(&mut out, ci, row, "cam_sem", sem, scan.class_sets.camera.len());
            }
        }
    }
    out
}
