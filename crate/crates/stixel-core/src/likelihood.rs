//! Per-measurement energy terms of the stixel model.
//!
//! A stixel hypothesis explains each measurement it covers through three
//! geometric terms (distance residual, vertical gradient, sensor model) and
//! one semantic term per modality. All terms are negative log-likelihoods:
//! non-negative, and finite except for the single hard constraint that a
//! sky stixel can never cover a valid measurement.
//!
//! Saturated probabilities are evaluated through `softplus` identities so
//! that extreme gradients or elevations still yield finite energies; the
//! probability functions themselves return the plain closed forms.

use crate::model::{
    ClassMap, Measurement, ModelParams, PolarDepth, SemanticDistribution, StructuralClass,
    SEMANTIC_PROB_FLOOR,
};
use crate::projection::gradient;
use crate::scalar::{cast, sigmoid, softplus, Scalar};

/// Which semantic modality a distribution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticDomain {
    Lidar,
    Camera,
}

/// One candidate explanation for a segment: structural class, semantic
/// label (index into the stixel class set) and, for objects, a range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StixelHypothesis<T> {
    pub sclass: StructuralClass,
    pub label: usize,
    /// Candidate range to the sensor; `Some` for object hypotheses.
    pub distance: Option<T>,
}

impl<T: Scalar> StixelHypothesis<T> {
    pub fn ground(label: usize) -> Self {
        StixelHypothesis { sclass: StructuralClass::Ground, label, distance: None }
    }

    pub fn object(label: usize, distance: T) -> Self {
        StixelHypothesis { sclass: StructuralClass::Object, label, distance: Some(distance) }
    }

    pub fn sky(label: usize) -> Self {
        StixelHypothesis { sclass: StructuralClass::Sky, label, distance: None }
    }
}

/// Probability that the gradient `phi` was produced by an object face
/// rather than ground: `(1 + tanh(steep * (phi - shift))) / 2`.
pub fn object_probability<T: Scalar>(phi: T, params: &ModelParams<T>) -> T {
    let two = cast::<T>(2.0);
    (T::one() + (params.grad_steep * (phi - params.grad_shift)).tanh()) / two
}

/// Probability that a beam at the given elevation escapes into the sky.
pub fn sky_probability<T: Scalar>(elevation: T, params: &ModelParams<T>) -> T {
    let two = cast::<T>(2.0);
    (T::one() + (params.sens_scale * (elevation - params.sens_shift)).tanh()) / two
}

/// Probability that a beam at the given elevation is absorbed by the
/// ground: the sky probability mirrored around zero elevation.
pub fn ground_probability<T: Scalar>(elevation: T, params: &ModelParams<T>) -> T {
    sky_probability(-elevation, params)
}

/// Gradient energy of a measurement given the class of the stixel covering
/// it and the measurement directly below it in the column.
///
/// `d_prev` is `None` for the bottom row, which contributes 0. Undefined
/// gradients (either measurement invalid, or no geometric offset at all)
/// and sky hypotheses also contribute 0.
pub fn ground_gradient_energy<T: Scalar>(
    hyp: &StixelHypothesis<T>,
    d_j: &PolarDepth<T>,
    d_prev: Option<&PolarDepth<T>>,
    params: &ModelParams<T>,
) -> T {
    let prev = match d_prev {
        Some(p) => p,
        None => return T::zero(),
    };
    let phi = match gradient(prev, d_j) {
        Some(phi) => phi,
        None => return T::zero(),
    };
    gradient_energy_of_phi(hyp.sclass, phi, params)
}

/// Gradient energy for a known gradient angle; see
/// [`ground_gradient_energy`].
///
/// With `x = steep * (phi - shift)` the object probability is
/// `sigmoid(2x)`, so `-ln(P_ob) = softplus(-2x)` and
/// `-ln(1 - P_ob) = softplus(2x)`; both stay finite when tanh saturates.
pub fn gradient_energy_of_phi<T: Scalar>(
    sclass: StructuralClass,
    phi: T,
    params: &ModelParams<T>,
) -> T {
    let two = cast::<T>(2.0);
    let x2 = two * params.grad_steep * (phi - params.grad_shift);
    match sclass {
        StructuralClass::Ground => softplus(x2),
        StructuralClass::Object => softplus(-x2),
        StructuralClass::Sky => T::zero(),
    }
}

/// Sensor-model energy: how plausible validity or invalidity of the return
/// is under the hypothesized class.
///
/// A valid return under a sky hypothesis is the model's one hard
/// constraint and yields positive infinity.
pub fn sensor_energy<T: Scalar>(
    hyp: &StixelHypothesis<T>,
    d_j: &PolarDepth<T>,
    params: &ModelParams<T>,
) -> T {
    if d_j.is_valid() {
        return match hyp.sclass {
            StructuralClass::Sky => T::infinity(),
            _ => T::zero(),
        };
    }
    invalid_sensor_energy(hyp.sclass, d_j.elevation, params)
}

/// Sensor energy of an invalid return at the given elevation.
pub fn invalid_sensor_energy<T: Scalar>(
    sclass: StructuralClass,
    elevation: T,
    params: &ModelParams<T>,
) -> T {
    let two = cast::<T>(2.0);
    // P_sky = sigmoid(ys), P_ground = sigmoid(yg).
    let ys = two * params.sens_scale * (elevation - params.sens_shift);
    let yg = two * params.sens_scale * (-elevation - params.sens_shift);
    match sclass {
        StructuralClass::Sky => softplus(-ys),
        StructuralClass::Ground => softplus(-yg),
        StructuralClass::Object => {
            // 1 - (P_sky + P_ground) = sigmoid(-ys) - sigmoid(yg); clamp so
            // the blockage probability never reaches 1 and the energy stays
            // finite.
            let floor = cast::<T>(1e-9).max(T::epsilon());
            let rest = (sigmoid(-ys) - sigmoid(yg)).max(floor);
            -rest.ln()
        }
    }
}

/// Distance-residual energy under a Gaussian + uniform-outlier mixture,
/// shifted so a zero residual costs exactly 0.
///
/// Object hypotheses compare the measured range against the hypothesis
/// range with `sigma_range`; ground hypotheses compare the measurement's
/// height against the ideal ground plane with `sigma_height`. Invalid
/// returns and sky hypotheses contribute 0.
pub fn distance_energy<T: Scalar>(
    hyp: &StixelHypothesis<T>,
    d_j: &PolarDepth<T>,
    params: &ModelParams<T>,
) -> T {
    let r = match d_j.range {
        Some(r) => r,
        None => return T::zero(),
    };
    match hyp.sclass {
        StructuralClass::Object => {
            let rho = match hyp.distance {
                Some(hat) => r - hat,
                None => return T::zero(),
            };
            mixture_energy(rho, params.sigma_range, params.outlier_rate, params.outlier_range_max)
        }
        StructuralClass::Ground => {
            let rho = r * d_j.elevation.sin() + params.sensor_height;
            mixture_energy(rho, params.sigma_height, params.outlier_rate, params.outlier_range_max)
        }
        StructuralClass::Sky => T::zero(),
    }
}

/// `-ln` of the Gaussian + uniform mixture density at residual `rho`,
/// normalized so the value at `rho = 0` is exactly 0.
pub fn mixture_energy<T: Scalar>(rho: T, sigma: T, p_out: T, r_max: T) -> T {
    let x = rho * rho / (cast::<T>(2.0) * sigma * sigma);
    if p_out == T::zero() {
        // Pure Gaussian: the shifted energy is the exponent itself, exact
        // and finite for any residual.
        return x;
    }
    let a = (T::one() - p_out) / (sigma * (cast::<T>(2.0) * T::PI()).sqrt());
    let c = p_out / r_max;
    let z = (a + c).ln();
    if x > cast::<T>(700.0) {
        // The Gaussian component underflows to zero; only the uniform
        // plateau remains.
        return z - c.ln();
    }
    z - (a * (-x).exp() + c).ln()
}

/// Semantic energy: `-ln` of the mapped probability of the hypothesis
/// label, floored at 1e-6. Absent distributions contribute 0.
pub fn semantic_energy<T: Scalar>(
    hyp: &StixelHypothesis<T>,
    sem: Option<&SemanticDistribution<T>>,
    domain: SemanticDomain,
    params: &ModelParams<T>,
) -> T {
    let sem = match sem {
        Some(s) => s,
        None => return T::zero(),
    };
    let map = match domain {
        SemanticDomain::Lidar => &params.lidar_class_map,
        SemanticDomain::Camera => &params.cam_class_map,
    };
    let q = project_label(map, &sem.probs, hyp.label);
    -q.max(cast::<T>(SEMANTIC_PROB_FLOOR)).ln()
}

/// Mapped probability of a single output label; the identity map reads the
/// entry directly so no rounding is introduced.
fn project_label<T: Scalar>(map: &ClassMap<T>, probs: &[T], label: usize) -> T {
    match map {
        ClassMap::Identity => probs[label],
        ClassMap::Matrix(rows) => probs
            .iter()
            .zip(rows)
            .fold(T::zero(), |acc, (p, row)| acc + *p * row[label]),
    }
}

/// Full weighted energy of one measurement under a hypothesis: the
/// geometric terms scaled by `w_geo` plus both semantic terms scaled by
/// their modality weights.
///
/// A zero `w_geo` disables the geometric modality entirely, including the
/// sky hard constraint.
pub fn measurement_energy<T: Scalar>(
    hyp: &StixelHypothesis<T>,
    m: &Measurement<T>,
    d_prev: Option<&PolarDepth<T>>,
    params: &ModelParams<T>,
) -> T {
    let mut total = T::zero();
    if params.w_geo > T::zero() {
        let geo = distance_energy(hyp, &m.depth, params)
            + ground_gradient_energy(hyp, &m.depth, d_prev, params)
            + sensor_energy(hyp, &m.depth, params);
        if geo.is_infinite() {
            return T::infinity();
        }
        total = total + params.w_geo * geo;
    }
    if params.w_sem_lidar > T::zero() {
        total = total
            + params.w_sem_lidar
                * semantic_energy(hyp, m.lidar_sem.as_ref(), SemanticDomain::Lidar, params);
    }
    if params.w_sem_cam > T::zero() {
        total = total
            + params.w_sem_cam
                * semantic_energy(hyp, m.cam_sem.as_ref(), SemanticDomain::Camera, params);
    }
    total
}
