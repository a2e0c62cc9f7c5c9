//! Bayes decision between the lane and vehicle components.

use thiserror::Error;

use crate::features::FeatureVector;
use crate::gmm::{log_density, log_sum_exp, ClassTag, GmmModel};

/// Slot-0 means closer than this cannot be told apart when tagging.
pub const TAG_AMBIGUITY: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("model components carry no lane/vehicle tags")]
    Untagged,
    #[error("components have the same mean entropy ({0}); cannot tell vehicle from lane")]
    AmbiguousTags(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Lane,
    Vehicle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDecision {
    pub label: Label,
    pub discriminant: f64,
    pub posterior_vehicle: f64,
}

fn tagged(model: &GmmModel) -> Result<(usize, usize), ClassifyError> {
    match (
        model.component_with_tag(ClassTag::Vehicle),
        model.component_with_tag(ClassTag::Lane),
    ) {
        (Some(v), Some(l)) if v != l => Ok((v, l)),
        _ => Err(ClassifyError::Untagged),
    }
}

/// `(P(vehicle | x), P(lane | x))`.
pub fn posterior(x: &FeatureVector, model: &GmmModel) -> Result<(f64, f64), ClassifyError> {
    let (v, l) = tagged(model)?;
    let lv = model.priors[v].ln() + log_density(x, &model.components[v]);
    let ll = model.priors[l].ln() + log_density(x, &model.components[l]);
    let norm = log_sum_exp(lv, ll);
    let pv = (lv - norm).exp();
    Ok((pv, 1.0 - pv))
}

/// Log posterior ratio `log P(vehicle | x) - log P(lane | x)`:
///
/// ```text
/// f(x) = 1/2 log(|S_l| / |S_v|) + log(P_v / P_l)
///      + 1/2 (x - m_l)' S_l^-1 (x - m_l) - 1/2 (x - m_v)' S_v^-1 (x - m_v)
/// ```
pub fn discriminant(x: &FeatureVector, model: &GmmModel) -> Result<f64, ClassifyError> {
    let (v, l) = tagged(model)?;
    let (cv, cl) = (&model.components[v], &model.components[l]);
    Ok(0.5 * (cl.log_det() - cv.log_det())
        + (model.priors[v].ln() - model.priors[l].ln())
        + 0.5 * cl.mahalanobis_sq(x)
        - 0.5 * cv.mahalanobis_sq(x))
}

/// Vehicle iff the discriminant is strictly positive; ties go to lane.
pub fn classify(x: &FeatureVector, model: &GmmModel) -> Result<ClassDecision, ClassifyError> {
    let discriminant = discriminant(x, model)?;
    let (posterior_vehicle, _) = posterior(x, model)?;
    let label = if discriminant > 0.0 {
        Label::Vehicle
    } else {
        Label::Lane
    };
    Ok(ClassDecision {
        label,
        discriminant,
        posterior_vehicle,
    })
}

/// Tags the component with the higher mean entropy feature as vehicle.
pub fn assign_class_tags(model: &GmmModel) -> Result<GmmModel, ClassifyError> {
    let e0 = model.components[0].mean[FeatureVector::ENTROPY];
    let e1 = model.components[1].mean[FeatureVector::ENTROPY];
    if (e0 - e1).abs() <= TAG_AMBIGUITY {
        return Err(ClassifyError::AmbiguousTags(e0));
    }
    let mut out = model.clone();
    let vehicle = if e0 > e1 { 0 } else { 1 };
    out.components[vehicle].tag = ClassTag::Vehicle;
    out.components[1 - vehicle].tag = ClassTag::Lane;
    Ok(out)
}
