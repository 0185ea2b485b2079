//! Exact column-wise MAP solver.
//!
//! Each column is segmented independently by dynamic programming over all
//! contiguous segmentations and all (structural class, label) assignments.
//! A [`SegmentCostTable`] turns segment-energy queries into O(1) prefix-sum
//! lookups, except for the object distance estimate which is maintained
//! incrementally (see below), so a column of height `h` with `L` labels
//! solves in `O(h^2 * (L + K))` where `K` caps the per-segment distance
//! candidates.
//!
//! Object segments estimate their range by evaluating the mixture cost at
//! candidate ranges taken from the segment's own valid measurements. All
//! candidates are kept while a segment holds at most
//! [`SolveOptions::distance_candidate_cap`] of them; beyond that the
//! candidate list is thinned deterministically (every other candidate is
//! dropped and the admission stride doubles), keeping candidates evenly
//! spread over the segment.

use crate::likelihood::{
    gradient_energy_of_phi, invalid_sensor_energy, measurement_energy, mixture_energy,
    semantic_energy, SemanticDomain, StixelHypothesis,
};
use crate::model::{
    ClassSet, Distance, ModelError, ModelParams, Scan, ScanColumn, Stixel, StixelColumn,
    StixelWorld, StructuralClass,
};
use crate::prior::complexity_energy;
use crate::projection::gradient;
use crate::scalar::Scalar;
use thiserror::Error;

/// Runtime knobs for the solver; none of them change the model itself.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Worker threads for [`solve_scan`]; 0 or 1 solves sequentially.
    /// Results are bit-identical regardless of this setting.
    pub threads: usize,
    /// Maximum distance candidates kept per segment (minimum 2). Segments
    /// with at most this many valid rows are solved over all their
    /// measured ranges.
    pub distance_candidate_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { threads: 1, distance_candidate_cap: 32 }
    }
}

/// Work counters used to verify the solver's complexity experimentally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Mixture evaluations spent maintaining distance candidates.
    pub candidate_evals: u64,
    /// Per-(segment, label) energy evaluations.
    pub label_evals: u64,
}

impl SolveStats {
    pub fn total(&self) -> u64 {
        self.candidate_evals + self.label_evals
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("column {column} has no rows")]
    EmptyColumn { column: usize },
    #[error("invalid parameters: {0}")]
    Params(#[from] ModelError),
    #[error("column {column}: height {got} differs from column 0 height {expected}")]
    RaggedScan { column: usize, got: usize, expected: usize },
    #[error("column {column}: no feasible segmentation")]
    Infeasible { column: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Result of solving a whole scan.
#[derive(Debug, Clone)]
pub struct SolvedScan<T> {
    pub world: StixelWorld<T>,
    /// Optimal energy per column, same order as the world's columns.
    pub energies: Vec<T>,
}

/// One distance candidate of an open segment window.
#[derive(Debug, Clone, Copy)]
struct Cand<T> {
    range: T,
    /// Accumulated mixture cost over the window's rows so far.
    acc: T,
    /// Ordinal of the candidate among the window's valid rows.
    ord: u32,
}

/// Candidate bookkeeping for all segments starting at one fixed bottom row.
#[derive(Debug, Clone)]
struct Window<T> {
    stride: u32,
    cands: Vec<Cand<T>>,
    best: Option<(T, u32, T)>, // (acc, ord, range)
}

impl<T: Scalar> Window<T> {
    fn new() -> Self {
        Window { stride: 1, cands: Vec::new(), best: None }
    }

    fn rescan_best(&mut self) {
        self.best = None;
        for c in &self.cands {
            match self.best {
                Some((acc, _, _)) if acc <= c.acc => {}
                _ => self.best = Some((c.acc, c.ord, c.range)),
            }
        }
    }

    /// Doubles the admission stride and drops candidates that no longer
    /// fall on it.
    fn halve(&mut self) {
        self.stride *= 2;
        let stride = self.stride;
        self.cands.retain(|c| c.ord % stride == 0);
        self.rescan_best();
    }
}

/// Precomputed per-column energy tables.
///
/// Built once per (column, parameters); afterwards any segment/label energy
/// is a constant-time query. Row arguments on the public methods are
/// 1-based like [`Stixel`] bounds.
#[derive(Debug, Clone)]
pub struct SegmentCostTable<T> {
    h: usize,
    sclass_of: Vec<StructuralClass>,
    w_geo: T,
    /// Prefix count of valid cells.
    n_valid: Vec<usize>,
    /// Prefix sums of per-cell geometric energy under each structural
    /// class (distance + gradient + sensor terms, unweighted).
    geo_ground: Vec<T>,
    geo_object: Vec<T>,
    geo_sky: Vec<T>,
    /// Prefix sums of the weighted semantic energy, one row per label.
    sem: Vec<T>,
    /// Min object mixture cost and arg-min range per (bottom, top) pair.
    dmin: Vec<Option<(T, T)>>,
    /// Index of the last valid cell at or below each prefix position.
    last_valid: Vec<Option<usize>>,
    /// Horizontal ground distance per cell (0 where invalid).
    ground_dist: Vec<T>,
    elevations: Vec<T>,
    sensor_height: T,
    r_max: T,
    /// Work spent building the table.
    pub stats: SolveStats,
}

impl<T: Scalar> SegmentCostTable<T> {
    /// Builds the table for one column. `column_index` is only used in
    /// error messages.
    pub fn build(
        column: &ScanColumn<T>,
        column_index: usize,
        stixel_classes: &ClassSet,
        params: &ModelParams<T>,
        options: &SolveOptions,
    ) -> Result<Self, SolveError> {
        let h = column.cells.len();
        if h == 0 {
            return Err(SolveError::EmptyColumn { column: column_index });
        }
        let n_labels = stixel_classes.len();
        let cap = options.distance_candidate_cap.max(2);
        let mut stats = SolveStats::default();

        let sclass_of: Vec<StructuralClass> =
            (0..n_labels).map(|l| stixel_classes.structural_of(l)).collect();

        let mut n_valid = vec![0usize; h + 1];
        let mut geo_ground = vec![T::zero(); h + 1];
        let mut geo_object = vec![T::zero(); h + 1];
        let mut geo_sky = vec![T::zero(); h + 1];
        let mut sem = vec![T::zero(); n_labels * (h + 1)];
        let mut last_valid = vec![None; h + 1];
        let mut ground_dist = vec![T::zero(); h];
        let mut elevations = vec![T::zero(); h];

        for (j, cell) in column.cells.iter().enumerate() {
            let d = &cell.depth;
            elevations[j] = d.elevation;
            let valid = d.is_valid();
            n_valid[j + 1] = n_valid[j] + usize::from(valid);
            last_valid[j + 1] = if valid { Some(j) } else { last_valid[j] };
            if let Some(r) = d.range {
                ground_dist[j] = r * d.elevation.cos();
            }

            // Gradient energies against the row below (column-level
            // predecessor, independent of segment boundaries).
            let (mut eg_g, mut eg_o) = (T::zero(), T::zero());
            if j > 0 {
                if let Some(phi) = gradient(&column.cells[j - 1].depth, d) {
                    eg_g = gradient_energy_of_phi(StructuralClass::Ground, phi, params);
                    eg_o = gradient_energy_of_phi(StructuralClass::Object, phi, params);
                }
            }

            // Sensor energies; the valid-cell sky case is handled through
            // the valid-count prefix instead of an infinite summand.
            let (es_g, es_o, es_s) = if valid {
                (T::zero(), T::zero(), T::zero())
            } else {
                (
                    invalid_sensor_energy(StructuralClass::Ground, d.elevation, params),
                    invalid_sensor_energy(StructuralClass::Object, d.elevation, params),
                    invalid_sensor_energy(StructuralClass::Sky, d.elevation, params),
                )
            };

            // Ground-plane distance residual (range-independent).
            let dist_g = if let Some(r) = d.range {
                let rho = r * d.elevation.sin() + params.sensor_height;
                mixture_energy(rho, params.sigma_height, params.outlier_rate, params.outlier_range_max)
            } else {
                T::zero()
            };

            geo_ground[j + 1] = geo_ground[j] + dist_g + eg_g + es_g;
            geo_object[j + 1] = geo_object[j] + eg_o + es_o;
            geo_sky[j + 1] = geo_sky[j] + es_s;

            for l in 0..n_labels {
                let hyp = StixelHypothesis { sclass: sclass_of[l], label: l, distance: None };
                let mut e = T::zero();
                if params.w_sem_lidar > T::zero() {
                    e = e + params.w_sem_lidar
                        * semantic_energy(&hyp, cell.lidar_sem.as_ref(), SemanticDomain::Lidar, params);
                }
                if params.w_sem_cam > T::zero() {
                    e = e + params.w_sem_cam
                        * semantic_energy(&hyp, cell.cam_sem.as_ref(), SemanticDomain::Camera, params);
                }
                sem[l * (h + 1) + j + 1] = sem[l * (h + 1) + j] + e;
            }
        }

        // Object distance candidates, maintained per bottom row as the top
        // row sweeps upward.
        let mut dmin: Vec<Option<(T, T)>> = vec![None; h * h];
        let mut windows: Vec<Window<T>> = Vec::with_capacity(h);
        let (sig, pout, rmax) =
            (params.sigma_range, params.outlier_rate, params.outlier_range_max);
        for t in 0..h {
            windows.push(Window::new());
            if let Some(r_t) = column.cells[t].depth.range {
                // Fold the new row into every open window's candidates.
                for w in windows.iter_mut().take(t) {
                    let mut best: Option<(T, u32, T)> = None;
                    for c in w.cands.iter_mut() {
                        c.acc = c.acc + mixture_energy(r_t - c.range, sig, pout, rmax);
                        stats.candidate_evals += 1;
                        match best {
                            Some((acc, _, _)) if acc <= c.acc => {}
                            _ => best = Some((c.acc, c.ord, c.range)),
                        }
                    }
                    w.best = best;
                }
                // Offer the new row's range as a candidate to every window,
                // accumulating its cost over the window's rows on the way
                // down.
                let mut acc = T::zero();
                for b in (0..=t).rev() {
                    if let Some(r_b) = column.cells[b].depth.range {
                        acc = acc + mixture_energy(r_b - r_t, sig, pout, rmax);
                        stats.candidate_evals += 1;
                    }
                    let ord = (n_valid[t + 1] - n_valid[b] - 1) as u32;
                    let w = &mut windows[b];
                    if ord % w.stride == 0 {
                        if w.cands.len() >= cap {
                            w.halve();
                        }
                        if ord % w.stride == 0 {
                            w.cands.push(Cand { range: r_t, acc, ord });
                            match w.best {
                                Some((bacc, _, _)) if bacc <= acc => {}
                                _ => w.best = Some((acc, ord, r_t)),
                            }
                        }
                    }
                }
            }
            for (b, w) in windows.iter().enumerate() {
                dmin[b * h + t] = w.best.map(|(acc, _, range)| (acc, range));
            }
        }

        Ok(SegmentCostTable {
            h,
            sclass_of,
            w_geo: params.w_geo,
            n_valid,
            geo_ground,
            geo_object,
            geo_sky,
            sem,
            dmin,
            last_valid,
            ground_dist,
            elevations,
            sensor_height: params.sensor_height,
            r_max: params.outlier_range_max,
            stats,
        })
    }

    /// Column height.
    pub fn height(&self) -> usize {
        self.h
    }

    /// Number of labels.
    pub fn label_count(&self) -> usize {
        self.sclass_of.len()
    }

    /// Energy of covering rows `b..=t` (1-based, inclusive) with the given
    /// label, together with the distance estimate: the arg-min candidate
    /// range for objects, the topmost valid measurement's ground distance
    /// for ground, the infinite sentinel for sky. `None` when a ground or
    /// object segment contains no valid measurement.
    pub fn segment_cost(&self, b: usize, t: usize, label: usize) -> (T, Option<Distance<T>>) {
        assert!(1 <= b && b <= t && t <= self.h, "segment rows out of range");
        self.eval(b - 1, t - 1, label)
    }

    /// Zero-based internal version of [`SegmentCostTable::segment_cost`].
    fn eval(&self, b: usize, t: usize, label: usize) -> (T, Option<Distance<T>>) {
        let any_valid = self.n_valid[t + 1] > self.n_valid[b];
        let sem = self.sem[label * (self.h + 1) + t + 1] - self.sem[label * (self.h + 1) + b];
        let scaled = |geo: T| {
            if self.w_geo > T::zero() {
                self.w_geo * geo
            } else {
                T::zero()
            }
        };
        match self.sclass_of[label] {
            StructuralClass::Ground => {
                let geo = self.geo_ground[t + 1] - self.geo_ground[b];
                let rhat = match self.last_valid[t + 1] {
                    Some(j) if j >= b => Some(Distance::Finite(self.ground_dist[j])),
                    _ => None,
                };
                (scaled(geo) + sem, rhat)
            }
            StructuralClass::Object => {
                let mut geo = self.geo_object[t + 1] - self.geo_object[b];
                let rhat = match self.dmin[b * self.h + t] {
                    Some((cost, range)) => {
                        geo = geo + cost;
                        Some(Distance::Finite(range))
                    }
                    None => None,
                };
                (scaled(geo) + sem, rhat)
            }
            StructuralClass::Sky => {
                if any_valid && self.w_geo > T::zero() {
                    (T::infinity(), Some(Distance::Infinite))
                } else {
                    let geo = self.geo_sky[t + 1] - self.geo_sky[b];
                    (scaled(geo) + sem, Some(Distance::Infinite))
                }
            }
        }
    }

    /// Best label for rows `b..=t` (0-based): minimum energy, ties broken
    /// by class-set order.
    fn eval_best(&self, b: usize, t: usize, stats: &mut SolveStats) -> (T, usize, Option<Distance<T>>) {
        let mut best: Option<(T, usize, Option<Distance<T>>)> = None;
        for label in 0..self.sclass_of.len() {
            let (e, rhat) = self.eval(b, t, label);
            stats.label_evals += 1;
            match &best {
                Some((be, _, _)) if *be <= e => {}
                _ => best = Some((e, label, rhat)),
            }
        }
        best.expect("class set is non-empty")
    }

    /// Fallback finite distance for ground/object stixels without any
    /// valid measurement: the plane-predicted ground distance at the top
    /// row where one exists, otherwise the outlier range cap.
    fn fallback_distance(&self, sclass: StructuralClass, t: usize) -> T {
        if sclass == StructuralClass::Ground {
            let el = self.elevations[t];
            if el < T::zero() {
                return (self.sensor_height / (-el).tan()).min(self.r_max);
            }
        }
        self.r_max
    }
}

/// DP node: best segmentation of the rows from some bottom row upward.
#[derive(Debug, Clone, Copy)]
struct Node<T> {
    energy: T,
    count: u32,
    t: usize,
    label: usize,
    rhat: Option<Distance<T>>,
}

/// Solves one column exactly, returning its stixels and optimal energy.
///
/// Ties are broken deterministically: fewer stixels first, then the
/// lexicographically earliest cut pattern (bottom-up), then class-set label
/// order.
pub fn solve_column<T: Scalar>(
    column: &ScanColumn<T>,
    column_index: usize,
    stixel_classes: &ClassSet,
    params: &ModelParams<T>,
    options: &SolveOptions,
) -> Result<(StixelColumn<T>, T), SolveError> {
    let (col, energy, _) =
        solve_column_with_stats(column, column_index, stixel_classes, params, options)?;
    Ok((col, energy))
}

/// [`solve_column`] plus work counters.
pub fn solve_column_with_stats<T: Scalar>(
    column: &ScanColumn<T>,
    column_index: usize,
    stixel_classes: &ClassSet,
    params: &ModelParams<T>,
    options: &SolveOptions,
) -> Result<(StixelColumn<T>, T, SolveStats), SolveError> {
    params.validate()?;
    let table = SegmentCostTable::build(column, column_index, stixel_classes, params, options)?;
    let mut stats = table.stats;
    let h = table.h;
    let mc = params.mc_cost;

    // Suffix DP: best[b] covers rows b..h-1 (0-based). Candidates are
    // compared by (energy, stixel count, first segment top) so the stated
    // tie-break falls out of the recursion.
    let mut best: Vec<Option<Node<T>>> = vec![None; h + 1];
    for b in (0..h).rev() {
        let mut chosen: Option<Node<T>> = None;
        for t in b..h {
            let (seg_e, label, rhat) = table.eval_best(b, t, &mut stats);
            if seg_e.is_infinite() {
                continue;
            }
            let (energy, count) = if t + 1 < h {
                match &best[t + 1] {
                    Some(tail) => (seg_e + mc + tail.energy, 1 + tail.count),
                    None => continue,
                }
            } else {
                (seg_e, 1)
            };
            debug_assert!(!energy.is_nan());
            let better = match &chosen {
                None => true,
                Some(c) => {
                    energy < c.energy
                        || (energy == c.energy
                            && (count < c.count || (count == c.count && t < c.t)))
                }
            };
            if better {
                chosen = Some(Node { energy, count, t, label, rhat });
            }
        }
        best[b] = chosen;
    }

    let head = best[0].ok_or(SolveError::Infeasible { column: column_index })?;
    let mut stixels = Vec::with_capacity(head.count as usize);
    let mut b = 0usize;
    loop {
        let node = best[b].expect("reachable node");
        let sclass = table.sclass_of[node.label];
        let distance = match node.rhat {
            Some(d) => d,
            None => Distance::Finite(table.fallback_distance(sclass, node.t)),
        };
        stixels.push(Stixel {
            bottom: b + 1,
            top: node.t + 1,
            distance,
            label: node.label,
            sclass,
        });
        if node.t + 1 >= h {
            break;
        }
        b = node.t + 1;
    }
    Ok((StixelColumn { column: column_index, stixels }, head.energy, stats))
}

/// Solves every column of a scan. With `options.threads >= 2` columns are
/// solved on a local thread pool; the output is bit-identical to the
/// sequential path.
pub fn solve_scan<T: Scalar>(
    scan: &Scan<T>,
    params: &ModelParams<T>,
    options: &SolveOptions,
) -> Result<SolvedScan<T>, SolveError> {
    params.validate_for(&scan.class_sets)?;
    let h = scan.height();
    for (i, col) in scan.columns.iter().enumerate() {
        if col.cells.len() != h {
            return Err(SolveError::RaggedScan { column: i, got: col.cells.len(), expected: h });
        }
    }

    let solve_one = |(i, col): (usize, &ScanColumn<T>)| {
        solve_column(col, i, &scan.class_sets.stixel, params, options)
    };

    let results: Vec<Result<(StixelColumn<T>, T), SolveError>> = if options.threads >= 2 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| SolveError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            scan.columns.par_iter().enumerate().map(solve_one).collect()
        })
    } else {
        scan.columns.iter().enumerate().map(solve_one).collect()
    };

    let mut columns = Vec::with_capacity(results.len());
    let mut energies = Vec::with_capacity(results.len());
    for res in results {
        let (col, e) = res?;
        columns.push(col);
        energies.push(e);
    }
    Ok(SolvedScan { world: StixelWorld { height: h, columns }, energies })
}

/// Recomputes the full energy of a column segmentation directly from the
/// per-measurement terms plus the complexity prior, without any of the
/// solver's prefix tables. Used to audit solver results.
pub fn segmentation_energy<T: Scalar>(
    column: &ScanColumn<T>,
    stixels: &StixelColumn<T>,
    params: &ModelParams<T>,
) -> T {
    let mut total = complexity_energy(stixels.stixels.len(), params);
    for s in &stixels.stixels {
        let hyp = match s.sclass {
            StructuralClass::Object => {
                let r = s.distance.as_finite().unwrap_or(params.outlier_range_max);
                StixelHypothesis::object(s.label, r)
            }
            StructuralClass::Ground => StixelHypothesis::ground(s.label),
            StructuralClass::Sky => StixelHypothesis::sky(s.label),
        };
        for row in s.bottom..=s.top {
            let m = &column.cells[row - 1];
            let d_prev = if row >= 2 { Some(&column.cells[row - 2].depth) } else { None };
            let e = measurement_energy(&hyp, m, d_prev, params);
            if e.is_infinite() {
                return T::infinity();
            }
            total = total + e;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassSets, Measurement, PolarDepth, SemanticDistribution};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_sets() -> ClassSets {
        ClassSets::all_default()
    }

    /// Measurement of a flat ground plane at the given elevation.
    fn ground_cell(el: f64, params: &ModelParams<f64>, sets: &ClassSets) -> Measurement<f64> {
        let r = params.sensor_height / (-el).sin();
        Measurement {
            depth: PolarDepth::valid(r, 0.0, el),
            lidar_sem: Some(SemanticDistribution::delta(0, sets.lidar.len())),
            cam_sem: None,
        }
    }

    /// Measurement of a vertical face at slant range `r`.
    fn object_cell(r: f64, el: f64, label: usize, sets: &ClassSets) -> Measurement<f64> {
        Measurement {
            depth: PolarDepth::valid(r, 0.0, el),
            lidar_sem: Some(SemanticDistribution::delta(label, sets.lidar.len())),
            cam_sem: None,
        }
    }

    fn sky_cell(el: f64) -> Measurement<f64> {
        Measurement { depth: PolarDepth::invalid(0.0, el), lidar_sem: None, cam_sem: None }
    }

    /// Ground (rows 1..=4), construction wall at 10 m (5..=9), sky (10..=12).
    fn three_part_column(params: &ModelParams<f64>, sets: &ClassSets) -> ScanColumn<f64> {
        let mut cells = Vec::new();
        for i in 0..4 {
            cells.push(ground_cell(-0.42 + 0.05 * i as f64, params, sets));
        }
        for i in 0..5 {
            let el = -0.16 + 0.042 * i as f64;
            cells.push(object_cell(10.0, el, 7, sets));
        }
        for i in 0..3 {
            cells.push(sky_cell(0.1 + 0.08 * i as f64));
        }
        ScanColumn { azimuth: 0.0, cells }
    }

    fn random_column(rng: &mut ChaCha8Rng, h: usize, sets: &ClassSets) -> ScanColumn<f64> {
        let n = sets.lidar.len();
        let mut cells = Vec::with_capacity(h);
        let mut el = -0.45;
        for _ in 0..h {
            el += rng.gen_range(0.005..0.02);
            let depth = if rng.gen_bool(0.75) {
                PolarDepth::valid(rng.gen_range(2.0..40.0), 0.0, el)
            } else {
                PolarDepth::invalid(0.0, el)
            };
            let lidar_sem = depth.is_valid().then(|| {
                let mut probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= sum);
                SemanticDistribution::new(probs)
            });
            let cam_sem = rng.gen_bool(0.6).then(|| {
                let mut probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= sum);
                SemanticDistribution::new(probs)
            });
            cells.push(Measurement { depth, lidar_sem, cam_sem });
        }
        ScanColumn { azimuth: 0.0, cells }
    }

    #[test]
    fn single_ground_row_yields_one_ground_stixel() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let col = ScanColumn { azimuth: 0.0, cells: vec![ground_cell(-0.4, &params, &sets)] };
        let (out, energy) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        assert_eq!(out.stixels.len(), 1);
        let s = &out.stixels[0];
        assert_eq!((s.bottom, s.top), (1, 1));
        assert_eq!(s.sclass, StructuralClass::Ground);
        assert_eq!(sets.stixel.name(s.label), "road");
        assert!(energy < 1.0, "clean ground should be near-free, got {energy}");
        let r = s.distance.as_finite().unwrap();
        assert_relative_eq!(r, params.sensor_height / (0.4f64).tan(), max_relative = 1e-9);
    }

    #[test]
    fn all_invalid_high_column_yields_single_sky_stixel() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let cells = (0..6).map(|i| sky_cell(0.1 + 0.05 * i as f64)).collect();
        let col = ScanColumn { azimuth: 0.0, cells };
        let (out, _) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        assert_eq!(out.stixels.len(), 1);
        assert_eq!(out.stixels[0].sclass, StructuralClass::Sky);
        assert!(out.stixels[0].distance.is_infinite());
    }

    #[test]
    fn ground_object_sky_column_is_recovered() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let col = three_part_column(&params, &sets);
        let (out, energy) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        assert_eq!(out.stixels.len(), 3, "{:?}", out.stixels);
        let [g, o, s] = [&out.stixels[0], &out.stixels[1], &out.stixels[2]];
        assert_eq!((g.bottom, g.top, g.sclass), (1, 4, StructuralClass::Ground));
        assert_eq!((o.bottom, o.top, o.sclass), (5, 9, StructuralClass::Object));
        assert_eq!((s.bottom, s.top, s.sclass), (10, 12, StructuralClass::Sky));
        assert_eq!(sets.stixel.name(o.label), "construction");
        assert_relative_eq!(o.distance.as_finite().unwrap(), 10.0, max_relative = 1e-12);
        // Audit: the reported energy equals a direct recomputation.
        let audit = segmentation_energy(&col, &out, &params);
        assert_relative_eq!(energy, audit, epsilon = 1e-9);
    }

    #[test]
    fn table_matches_direct_summation() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let col = random_column(&mut rng, 10, &sets);
        let table =
            SegmentCostTable::build(&col, 0, &sets.stixel, &params, &SolveOptions::default())
                .unwrap();
        for b in 1..=10usize {
            for t in b..=10usize {
                for label in 0..sets.stixel.len() {
                    let (got, rhat) = table.segment_cost(b, t, label);
                    // Direct evaluation through the per-measurement terms.
                    let sclass = sets.stixel.structural_of(label);
                    let direct = |hyp: &StixelHypothesis<f64>| -> f64 {
                        (b..=t)
                            .map(|row| {
                                let d_prev =
                                    (row >= 2).then(|| &col.cells[row - 2].depth);
                                measurement_energy(hyp, &col.cells[row - 1], d_prev, &params)
                            })
                            .sum()
                    };
                    let want = match sclass {
                        StructuralClass::Object => {
                            let cands: Vec<f64> = (b..=t)
                                .filter_map(|row| col.cells[row - 1].depth.range)
                                .collect();
                            if cands.is_empty() {
                                direct(&StixelHypothesis {
                                    sclass,
                                    label,
                                    distance: None,
                                })
                            } else {
                                cands
                                    .iter()
                                    .map(|&r| direct(&StixelHypothesis::object(label, r)))
                                    .fold(f64::INFINITY, f64::min)
                            }
                        }
                        StructuralClass::Ground => direct(&StixelHypothesis::ground(label)),
                        StructuralClass::Sky => direct(&StixelHypothesis::sky(label)),
                    };
                    if want.is_infinite() {
                        assert!(got.is_infinite(), "b={b} t={t} label={label}");
                    } else {
                        assert_relative_eq!(got, want, epsilon = 1e-9, max_relative = 1e-9);
                    }
                    // Distance estimates: objects return one of the
                    // measured ranges, sky the infinite sentinel.
                    match sclass {
                        StructuralClass::Sky => assert_eq!(rhat, Some(Distance::Infinite)),
                        StructuralClass::Object => {
                            if let Some(Distance::Finite(r)) = rhat {
                                assert!((b..=t).any(|row| col.cells[row - 1].depth.range
                                    == Some(r)));
                            }
                        }
                        StructuralClass::Ground => {}
                    }
                }
            }
        }
    }

    #[test]
    fn solver_energy_matches_audit_on_random_columns() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let col = random_column(&mut rng, 24, &sets);
            let (out, energy) =
                solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
            crate::prior::consistency_check(&out, 24).unwrap();
            let audit = segmentation_energy(&col, &out, &params);
            assert_relative_eq!(energy, audit, epsilon = 1e-9, max_relative = 1e-9);
            // Hard constraint: no sky stixel covers a valid measurement.
            for s in &out.stixels {
                if s.sclass == StructuralClass::Sky {
                    for row in s.bottom..=s.top {
                        assert!(!col.cells[row - 1].depth.is_valid());
                    }
                }
            }
        }
    }

    #[test]
    fn increasing_complexity_cost_never_adds_stixels() {
        let sets = default_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = random_column(&mut rng, 20, &sets);
        let mut last = usize::MAX;
        for mc in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let mut params = ModelParams::<f64>::default();
            params.mc_cost = mc;
            let (out, _) =
                solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
            assert!(out.stixels.len() <= last, "mc={mc}: {} > {last}", out.stixels.len());
            last = out.stixels.len();
        }
    }

    #[test]
    fn zero_weights_tie_break_prefers_one_stixel_and_first_label() {
        let mut params = ModelParams::<f64>::default();
        params.w_geo = 0.0;
        params.w_sem_lidar = 0.0;
        params.w_sem_cam = 0.0;
        params.mc_cost = 0.0;
        let sets = default_sets();
        let col = three_part_column(&params, &sets);
        let (out, energy) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        assert_eq!(energy, 0.0);
        assert_eq!(out.stixels.len(), 1);
        assert_eq!(out.stixels[0].label, 0, "ties resolve to the first label in set order");
    }

    #[test]
    fn object_distance_comes_from_measured_ranges() {
        // Two close returns and one far outlier: the reported distance is
        // one of the near measured ranges (candidates are drawn from the
        // data, not from a continuous grid), and it achieves the candidate
        // minimum.
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let ranges = [10.0, 10.1, 30.0];
        let cells = ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| object_cell(r, 0.3 + 0.01 * i as f64, 7, &sets))
            .collect();
        let col = ScanColumn { azimuth: 0.0, cells };
        let table =
            SegmentCostTable::build(&col, 0, &sets.stixel, &params, &SolveOptions::default())
                .unwrap();
        let label = sets.stixel.index_of("construction").unwrap();
        let (_, rhat) = table.segment_cost(1, 3, label);
        let r = match rhat {
            Some(Distance::Finite(r)) => r,
            other => panic!("expected finite distance, got {other:?}"),
        };
        assert!(r == 10.0 || r == 10.1, "got {r}");
        let cost_of = |hat: f64| -> f64 {
            ranges
                .iter()
                .map(|&m| {
                    mixture_energy(
                        m - hat,
                        params.sigma_range,
                        params.outlier_rate,
                        params.outlier_range_max,
                    )
                })
                .sum()
        };
        let best_cand = ranges.iter().map(|&m| cost_of(m)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(cost_of(r), best_cand, max_relative = 1e-12);
    }

    #[test]
    fn all_invalid_ground_stixel_gets_finite_fallback_distance() {
        // Low-elevation invalid cells are absorbed as ground; the stixel
        // still carries a finite positive distance.
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let cells = (0..4)
            .map(|i| Measurement {
                depth: PolarDepth::<f64>::invalid(0.0, -0.4 + 0.05 * i as f64),
                lidar_sem: None,
                cam_sem: None,
            })
            .collect();
        let col = ScanColumn { azimuth: 0.0, cells };
        let (out, _) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        for s in &out.stixels {
            if s.sclass != StructuralClass::Sky {
                let r = s.distance.as_finite().expect("finite distance");
                assert!(r > 0.0 && r.is_finite());
            }
        }
    }

    #[test]
    fn work_counters_grow_quadratically_with_height() {
        // Cap small enough to bind at every size; all-valid columns are
        // the worst case for candidate maintenance.
        let sets = default_sets();
        let params = ModelParams::<f64>::default();
        let options = SolveOptions { threads: 1, distance_candidate_cap: 8 };
        let mut totals = Vec::new();
        for h in [16usize, 32, 64] {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut col = random_column(&mut rng, h, &sets);
            for cell in &mut col.cells {
                if !cell.depth.is_valid() {
                    cell.depth.range = Some(10.0);
                    cell.lidar_sem =
                        Some(SemanticDistribution::delta(7, sets.lidar.len()));
                }
            }
            let (_, _, stats) =
                solve_column_with_stats(&col, 0, &sets.stixel, &params, &options).unwrap();
            totals.push(stats.total() as f64);
        }
        let r1 = totals[1] / totals[0];
        let r2 = totals[2] / totals[1];
        assert!(r1 < 6.5, "16->32 growth {r1} suggests worse than quadratic");
        assert!(r2 < 5.5, "32->64 growth {r2} suggests worse than quadratic");
        assert!(r1 > 2.5 && r2 > 2.5, "growth below quadratic is suspicious: {r1} {r2}");
    }

    #[test]
    fn parallel_scan_is_bit_identical_to_sequential() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let columns: Vec<_> = (0..12).map(|_| random_column(&mut rng, 16, &sets)).collect();
        let scan = Scan { columns, class_sets: sets };
        let seq = solve_scan(&scan, &params, &SolveOptions { threads: 1, ..Default::default() })
            .unwrap();
        let par = solve_scan(&scan, &params, &SolveOptions { threads: 4, ..Default::default() })
            .unwrap();
        assert_eq!(seq.world, par.world);
        assert_eq!(seq.energies, par.energies);
    }

    #[test]
    fn empty_scan_yields_empty_world() {
        let params = ModelParams::<f64>::default();
        let scan = Scan::<f64> { columns: vec![], class_sets: default_sets() };
        let out = solve_scan(&scan, &params, &SolveOptions::default()).unwrap();
        assert_eq!(out.world.columns.len(), 0);
        assert_eq!(out.world.height, 0);
    }

    #[test]
    fn empty_column_is_an_error() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let col = ScanColumn::<f64> { azimuth: 0.0, cells: vec![] };
        let err = solve_column(&col, 3, &sets.stixel, &params, &SolveOptions::default());
        assert!(matches!(err, Err(SolveError::EmptyColumn { column: 3 })));
    }

    #[test]
    fn ragged_scan_is_an_error() {
        let params = ModelParams::<f64>::default();
        let sets = default_sets();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scan = Scan {
            columns: vec![random_column(&mut rng, 8, &sets), random_column(&mut rng, 9, &sets)],
            class_sets: sets,
        };
        assert!(matches!(
            solve_scan(&scan, &params, &SolveOptions::default()),
            Err(SolveError::RaggedScan { column: 1, .. })
        ));
    }

    #[test]
    fn semantics_only_solve_runs_without_geometry() {
        let mut params = ModelParams::<f64>::default();
        params.w_geo = 0.0;
        let sets = default_sets();
        let col = three_part_column(&params, &sets);
        let (out, energy) =
            solve_column(&col, 0, &sets.stixel, &params, &SolveOptions::default()).unwrap();
        assert!(energy.is_finite());
        crate::prior::consistency_check(&out, col.height()).unwrap();
    }
}
