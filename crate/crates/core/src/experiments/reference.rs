//! Reference minimizers with an on-disk cache keyed by a content hash.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::forward::io::{load_vector, save_vector};
use crate::forward::LinearModel;
use crate::regularizer::Regularizer;
use crate::solver::{ista_solve, Reference};

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceMethod {
    /// ISTA with `h = h_factor / L` until the fixed-point residual is below `tol`.
    Ista { h_factor: f64, tol: f64, max_iter: usize },
    /// Sub-GD with `h_k = h0 / (k+1)^p` from `x0`.
    SubGd {
        h0: f64,
        p: f64,
        iterations: usize,
        x0: DVector<f64>,
    },
}

impl ReferenceMethod {
    pub fn describe(&self) -> String {
        match self {
            ReferenceMethod::Ista { h_factor, tol, max_iter } => {
                format!("ista(h={h_factor}/L,tol={tol:e},max_iter={max_iter})")
            }
            ReferenceMethod::SubGd { h0, p, iterations, .. } => {
                format!("subgd(h0={h0:e},p={p},iterations={iterations})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: DVector<f64>,
    pub objective: f64,
    pub method: String,
    /// ISTA fixed-point residual, or the length of the last Sub-GD step.
    pub residual: f64,
    /// Set when the method stopped at its iteration cap short of its tolerance.
    pub warning: Option<String>,
    pub cache_file: Option<PathBuf>,
}

impl ReferenceSolution {
    pub fn as_reference(&self) -> Reference {
        Reference {
            x_star: self.x_star.clone(),
            objective: self.objective,
        }
    }
}

fn feed_vector(h: &mut Sha256, v: &[f64]) {
    h.update((v.len() as u64).to_le_bytes());
    for x in v {
        h.update(x.to_le_bytes());
    }
}

/// Hex SHA-256 of the model data, the regularizer and the method.
pub fn content_hash(method: &ReferenceMethod, model: &LinearModel, reg: &Regularizer) -> String {
    let mut h = Sha256::new();
    h.update(method.describe().as_bytes());
    if let ReferenceMethod::SubGd { x0, .. } = method {
        feed_vector(&mut h, x0.as_slice());
    }
    h.update((model.a().nrows() as u64).to_le_bytes());
    feed_vector(&mut h, model.a().as_slice());
    feed_vector(&mut h, model.y().as_slice());
    feed_vector(&mut h, model.gamma().to_dense().as_slice());
    h.update(serde_json::to_string(reg).expect("regularizer serializes").as_bytes());
    hex::encode(h.finalize())
}

fn subgd_solve(model: &LinearModel, reg: &Regularizer, h0: f64, p: f64, iterations: usize, x0: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = x0.clone();
    for k in 0..iterations {
        let h = h0 / ((k + 1) as f64).powf(p);
        let g = model.misfit_gradient(&x)? + reg.subgradient(&x)?;
        x -= g * h;
    }
    Ok(x)
}

fn diagnose(method: &ReferenceMethod, model: &LinearModel, reg: &Regularizer, x: &DVector<f64>) -> Result<(f64, Option<String>)> {
    Ok(match method {
        ReferenceMethod::Ista { h_factor, tol, max_iter } => {
            let h = h_factor / model.spectral_bounds().l;
            let step = reg.prox(&(x - model.misfit_gradient(x)? * h), h)?;
            let r = (step - x).norm();
            let warn = (r > *tol).then(|| format!("ISTA stopped at {max_iter} iterations with residual {r:e}"));
            (r, warn)
        }
        ReferenceMethod::SubGd { h0, p, iterations, .. } => {
            let h = h0 / (*iterations.max(&1) as f64).powf(*p);
            let g = model.misfit_gradient(x)? + reg.subgradient(x)?;
            (h * g.norm(), None)
        }
    })
}

/// Solves for the reference minimizer, reusing `<cache_dir>/reference_<hash>.bin` when
/// present. Diagnostics are recomputed from the returned point either way.
pub fn compute_reference(
    method: &ReferenceMethod,
    model: &LinearModel,
    reg: &Regularizer,
    cache_dir: Option<&Path>,
) -> Result<ReferenceSolution> {
    let path = cache_dir.map(|d| d.join(format!("reference_{}.bin", content_hash(method, model, reg))));
    let cached = match &path {
        Some(p) if p.exists() => load_vector(p).ok().filter(|v| v.len() == model.dim()),
        _ => None,
    };
    let x_star = match cached {
        Some(x) => x,
        None => {
            let x = match method {
                ReferenceMethod::Ista { h_factor, tol, max_iter } => {
                    let h = h_factor / model.spectral_bounds().l;
                    ista_solve(model, reg, h, &DVector::zeros(model.dim()), *tol, *max_iter)?.x
                }
                ReferenceMethod::SubGd { h0, p, iterations, x0 } => subgd_solve(model, reg, *h0, *p, *iterations, x0)?,
            };
            if let Some(p) = &path {
                if let Some(dir) = p.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                save_vector(p, &x)?;
            }
            x
        }
    };
    let (residual, warning) = diagnose(method, model, reg, &x_star)?;
    let objective = model.misfit_value(&x_star)? + reg.value(&x_star)?;
    Ok(ReferenceSolution {
        x_star,
        objective,
        method: method.describe(),
        residual,
        warning,
        cache_file: path,
    })
}
