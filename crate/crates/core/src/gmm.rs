//! Two-component Gaussian mixture with diagonal covariances.
//!
//! Batch EM fits the mixture from a K-means start; afterwards each new sample
//! is folded in with a single online EM step. The online step caps every
//! accumulated mass at `1/lambda` so a fresh sample always keeps a weight of
//! at least `lambda / (1 + lambda)` times its responsibility.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::clustering::{KmeansResult, CLUSTERS};
use crate::features::{FeatureVector, FEATURE_DIM};

/// Lower bound on every diagonal variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Responsibility mass below which a component counts as collapsed.
pub const COLLAPSE_MASS: f64 = 1e-8;

/// Minimum K-means cluster size accepted by [`fit_em`].
pub const MIN_CLUSTER_POINTS: usize = 10;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, PartialEq)]
pub enum GmmError {
    #[error("component {component} collapsed (mass {mass:e})")]
    Collapse { component: usize, mass: f64 },
    #[error("k-means cluster {cluster} has {count} points, need at least {MIN_CLUSTER_POINTS}")]
    TooFewPoints { cluster: usize, count: usize },
    #[error("{points} points but {rows} responsibility rows")]
    Shape { points: usize, rows: usize },
    #[error("model text line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassTag {
    Unassigned,
    Lane,
    Vehicle,
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassTag::Unassigned => "unassigned",
            ClassTag::Lane => "lane",
            ClassTag::Vehicle => "vehicle",
        })
    }
}

impl FromStr for ClassTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unassigned" => Ok(ClassTag::Unassigned),
            "lane" => Ok(ClassTag::Lane),
            "vehicle" => Ok(ClassTag::Vehicle),
            other => Err(format!("unknown class tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: FeatureVector,
    pub var: [f64; FEATURE_DIM],
    pub tag: ClassTag,
}

impl GaussianComponent {
    pub fn new(mean: FeatureVector, var: [f64; FEATURE_DIM]) -> Self {
        Self {
            mean,
            var: var.map(|v| v.max(VARIANCE_FLOOR)),
            tag: ClassTag::Unassigned,
        }
    }

    /// Sum of log variances, i.e. `log |Sigma|`.
    pub fn log_det(&self) -> f64 {
        self.var.iter().map(|v| v.ln()).sum()
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &FeatureVector) -> f64 {
        x.0.iter()
            .zip(&self.mean.0)
            .zip(&self.var)
            .map(|((xi, mi), vi)| (xi - mi).powi(2) / vi)
            .sum()
    }
}

/// `log N(x; mean, diag(var))`.
pub fn log_density(x: &FeatureVector, comp: &GaussianComponent) -> f64 {
    -0.5 * (FEATURE_DIM as f64 * LOG_2PI + comp.log_det() + comp.mahalanobis_sq(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: [GaussianComponent; CLUSTERS],
    pub priors: [f64; CLUSTERS],
    pub masses: [f64; CLUSTERS],
    pub sample_count: u64,
}

pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

impl GmmModel {
    /// `log Phi_c + log N(x; mu_c, Sigma_c)` for both components.
    pub fn log_joint(&self, x: &FeatureVector) -> [f64; CLUSTERS] {
        std::array::from_fn(|c| self.priors[c].ln() + log_density(x, &self.components[c]))
    }

    /// Posterior component memberships of `x`, normalized in log space.
    pub fn responsibilities(&self, x: &FeatureVector) -> [f64; CLUSTERS] {
        let lj = self.log_joint(x);
        let norm = log_sum_exp(lj[0], lj[1]);
        // Exponentiate the less likely side only; the result then does not
        // depend on component order and each row sums to one.
        if lj[0] <= lj[1] {
            let r0 = (lj[0] - norm).exp();
            [r0, 1.0 - r0]
        } else {
            let r1 = (lj[1] - norm).exp();
            [1.0 - r1, r1]
        }
    }

    pub fn log_likelihood(&self, x: &FeatureVector) -> f64 {
        let lj = self.log_joint(x);
        log_sum_exp(lj[0], lj[1])
    }

    pub fn mean_log_likelihood(&self, points: &[FeatureVector]) -> f64 {
        points.iter().map(|x| self.log_likelihood(x)).sum::<f64>() / points.len() as f64
    }

    pub fn component_with_tag(&self, tag: ClassTag) -> Option<usize> {
        self.components.iter().position(|c| c.tag == tag)
    }

    /// Folds one sample into the model with a capped-mass online EM step.
    ///
    /// Responsibilities come from the current parameters. Each component mass
    /// and the sample count are first limited to `1/lambda`; the mean update
    /// is a convex combination of the old mean and `x`, and the variance
    /// update uses the already updated mean.
    pub fn update_online(&mut self, x: &FeatureVector, lambda: f64) {
        let resp = self.responsibilities(x);
        let cap = 1.0 / lambda;
        let m_eff = (self.sample_count as f64).min(cap);
        for (c, &w) in resp.iter().enumerate() {
            let mass = self.masses[c].min(cap);
            let new_mass = mass + w;
            if new_mass > 0.0 {
                let comp = &mut self.components[c];
                for d in 0..FEATURE_DIM {
                    let mean = (comp.mean[d] * mass + w * x[d]) / new_mass;
                    let var = (comp.var[d] * mass + w * (x[d] - mean).powi(2)) / new_mass;
                    comp.mean[d] = mean;
                    comp.var[d] = var.max(VARIANCE_FLOOR);
                }
            }
            self.masses[c] = new_mass;
            self.priors[c] = (self.priors[c] * m_eff + w) / (m_eff + 1.0);
        }
        let total: f64 = self.priors.iter().sum();
        self.priors.iter_mut().for_each(|p| *p /= total);
        self.sample_count += 1;
    }

    /// Returns the same model with components in the opposite order.
    pub fn swapped(&self) -> GmmModel {
        GmmModel {
            components: [self.components[1].clone(), self.components[0].clone()],
            priors: [self.priors[1], self.priors[0]],
            masses: [self.masses[1], self.masses[0]],
            sample_count: self.sample_count,
        }
    }

    /// Line-oriented text form; floats carry 17 significant digits so a
    /// round trip is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "sample_count {}", self.sample_count);
        for c in 0..CLUSTERS {
            let comp = &self.components[c];
            let _ = writeln!(out, "component {}", comp.tag);
            let _ = writeln!(out, "prior {:.16e}", self.priors[c]);
            let _ = writeln!(out, "mass {:.16e}", self.masses[c]);
            let _ = writeln!(out, "mean {}", join(&comp.mean.0));
            let _ = writeln!(out, "var {}", join(&comp.var));
        }
        out
    }

    /// Parses the output of [`GmmModel::to_text`]. `first_line` offsets the
    /// line numbers in error messages.
    pub fn from_text(text: &str, first_line: usize) -> Result<GmmModel, GmmError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + first_line, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |key: &str| -> Result<(usize, String), GmmError> {
            let (line, l) = lines.next().ok_or(GmmError::Parse {
                line: first_line,
                message: format!("missing `{key}`"),
            })?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok((line, v.trim().to_string())),
                _ => Err(GmmError::Parse {
                    line,
                    message: format!("expected `{key}`"),
                }),
            }
        };
        let bad = |line: usize, what: &str| GmmError::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let float = |line: usize, v: &str| v.parse::<f64>().map_err(|_| bad(line, "number"));
        let vector = |line: usize, v: &str| -> Result<[f64; FEATURE_DIM], GmmError> {
            let vals: Vec<f64> = v.split(',').map(|s| float(line, s)).collect::<Result<_, _>>()?;
            vals.try_into().map_err(|_| bad(line, "vector length"))
        };

        let (line, v) = next("sample_count")?;
        let sample_count = v.parse().map_err(|_| bad(line, "sample count"))?;
        let mut comps = Vec::with_capacity(CLUSTERS);
        let mut priors = [0.0; CLUSTERS];
        let mut masses = [0.0; CLUSTERS];
        for c in 0..CLUSTERS {
            let (line, v) = next("component")?;
            let tag = v.parse::<ClassTag>().map_err(|m| GmmError::Parse { line, message: m })?;
            let (line, v) = next("prior")?;
            priors[c] = float(line, &v)?;
            let (line, v) = next("mass")?;
            masses[c] = float(line, &v)?;
            let (line, v) = next("mean")?;
            let mean = FeatureVector(vector(line, &v)?);
            let (line, v) = next("var")?;
            let var = vector(line, &v)?;
            comps.push(GaussianComponent { mean, var, tag });
        }
        let [a, b]: [GaussianComponent; CLUSTERS] = comps.try_into().expect("two components");
        Ok(GmmModel {
            components: [a, b],
            priors,
            masses,
            sample_count,
        })
    }
}

/// Free-function form of [`GmmModel::update_online`].
pub fn online_update(model: &GmmModel, x: &FeatureVector, lambda: f64) -> GmmModel {
    let mut next = model.clone();
    next.update_online(x, lambda);
    next
}

pub fn e_step(points: &[FeatureVector], model: &GmmModel) -> Vec<[f64; CLUSTERS]> {
    points.iter().map(|x| model.responsibilities(x)).collect()
}

/// Weighted maximum-likelihood parameters for the given responsibilities.
pub fn m_step(points: &[FeatureVector], resp: &[[f64; CLUSTERS]]) -> Result<GmmModel, GmmError> {
    if points.len() != resp.len() {
        return Err(GmmError::Shape {
            points: points.len(),
            rows: resp.len(),
        });
    }
    let m = points.len() as f64;
    let mut masses = [0.0; CLUSTERS];
    let mut sums = [[0.0; FEATURE_DIM]; CLUSTERS];
    for (x, r) in points.iter().zip(resp) {
        for c in 0..CLUSTERS {
            masses[c] += r[c];
            for d in 0..FEATURE_DIM {
                sums[c][d] += r[c] * x[d];
            }
        }
    }
    for (c, &mass) in masses.iter().enumerate() {
        if mass.is_nan() || mass < COLLAPSE_MASS {
            return Err(GmmError::Collapse { component: c, mass });
        }
    }
    let means: [FeatureVector; CLUSTERS] =
        std::array::from_fn(|c| FeatureVector(sums[c].map(|s| s / masses[c])));
    let mut sq = [[0.0; FEATURE_DIM]; CLUSTERS];
    for (x, r) in points.iter().zip(resp) {
        for c in 0..CLUSTERS {
            for d in 0..FEATURE_DIM {
                sq[c][d] += r[c] * (x[d] - means[c][d]).powi(2);
            }
        }
    }
    Ok(GmmModel {
        components: std::array::from_fn(|c| {
            GaussianComponent::new(means[c], sq[c].map(|s| s / masses[c]))
        }),
        priors: masses.map(|mass| mass / m),
        masses,
        sample_count: points.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Mean log-likelihood of the starting model followed by one entry per
    /// iteration.
    pub log_likelihood: Vec<f64>,
}

/// Starting point for batch EM: equal priors, K-means centroids as means and
/// identity covariances.
pub fn initial_model(points: &[FeatureVector], init: &KmeansResult) -> GmmModel {
    let half = points.len() as f64 / 2.0;
    GmmModel {
        components: init
            .centroids
            .map(|mean| GaussianComponent::new(mean, [1.0; FEATURE_DIM])),
        priors: [0.5; CLUSTERS],
        masses: [half; CLUSTERS],
        sample_count: points.len() as u64,
    }
}

pub fn fit_em(points: &[FeatureVector], init: &KmeansResult, opts: &EmOptions) -> Result<EmFit, GmmError> {
    for cluster in 0..CLUSTERS {
        let count = init.labels.iter().filter(|&&l| l == cluster).count();
        if count < MIN_CLUSTER_POINTS {
            return Err(GmmError::TooFewPoints { cluster, count });
        }
    }
    let mut model = initial_model(points, init);
    let mut trace = vec![model.mean_log_likelihood(points)];
    for _ in 0..opts.max_iter {
        let resp = e_step(points, &model);
        model = m_step(points, &resp)?;
        let ll = model.mean_log_likelihood(points);
        let prev = *trace.last().expect("non-empty trace");
        debug_assert!(ll >= prev - 1e-9, "EM log-likelihood decreased: {prev} -> {ll}");
        trace.push(ll);
        if ll - prev < opts.tol {
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
    })
}
