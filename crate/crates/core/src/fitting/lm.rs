//! Levenberg–Marquardt least squares with box bounds.
//!
//! Bounded parameters are optimised in an unconstrained internal variable:
//! `lo + (hi − lo)(sin u + 1)/2` for two-sided bounds and
//! `lo − 1 + √(u² + 1)` (mirrored for an upper bound) for one-sided ones.
//! The Jacobian is a central difference in the internal variables; the
//! reported covariance is re-evaluated in the external parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::result::{Convergence, FitFlag, FitParameter, FitResult};
use crate::error::{Error, Result};

/// One model parameter: start value, bounds and whether it floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub init: f64,
    pub lo: f64,
    pub hi: f64,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: &str, unit: &str, init: f64) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            init,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            fixed: false,
        }
    }

    pub fn bounded(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn fixed(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }

    fn to_internal(&self, p: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                let z = (2.0 * (p - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                // keep a start on the bound away from the flat point of sin
                z.asin().clamp(-1.5, 1.5)
            }
            (true, false) => ((p - lo + 1.0).max(1.0 + 1e-3).powi(2) - 1.0).sqrt(),
            (false, true) => ((hi - p + 1.0).max(1.0 + 1e-3).powi(2) - 1.0).sqrt(),
            (false, false) => p,
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + 0.5 * (hi - lo) * (u.sin() + 1.0),
            (true, false) => lo - 1.0 + (u * u + 1.0).sqrt(),
            (false, true) => hi + 1.0 - (u * u + 1.0).sqrt(),
            (false, false) => u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when χ² improves by less than this fraction.
    pub ftol: f64,
    /// Stop when no internal parameter moves by more than this (relative).
    pub xtol: f64,
    pub initial_damping: f64,
    /// Relative central-difference step.
    pub diff_step: f64,
    /// Scale the covariance by the reduced χ² (use when σ are only relative).
    pub scale_covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            ftol: 1e-14,
            xtol: 1e-13,
            initial_damping: 1e-3,
            diff_step: 6e-6,
            scale_covariance: false,
        }
    }
}

/// Observations with one-sigma errors. `x` is only passed through to the
/// model, so joint fits may use it as an index.
#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Data {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || y.len() != sigma.len() {
            return Err(Error::Config("x, y and sigma must have equal lengths".into()));
        }
        if let Some(i) = sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Data {
                index: i,
                message: format!("sigma {} must be positive and finite", sigma[i]),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                index: i,
                message: "non-finite observation".into(),
            });
        }
        Ok(Self { x, y, sigma })
    }

    /// Unit errors.
    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let sigma = vec![1.0; y.len()];
        Self::new(x, y, sigma)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

struct Problem<'a, F> {
    model: &'a F,
    data: &'a Data,
    specs: &'a [ParamSpec],
    free: Vec<usize>,
    evaluations: usize,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fn external(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut p: Vec<f64> = self.specs.iter().map(|s| s.init).collect();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = self.specs[i].to_external(u[k]);
        }
        p
    }

    fn residuals_at(&mut self, p: &[f64]) -> Option<DVector<f64>> {
        self.evaluations += 1;
        let f = (self.model)(p, &self.data.x);
        assert_eq!(f.len(), self.data.len(), "model returned the wrong number of values");
        let r = DVector::from_iterator(
            f.len(),
            (0..f.len()).map(|i| (self.data.y[i] - f[i]) / self.data.sigma[i]),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn residuals(&mut self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let p = self.external(u);
        self.residuals_at(&p)
    }

    /// ∂f/∂u / σ by central differences (the negative of ∂r/∂u).
    fn jacobian(&mut self, u: &DVector<f64>, step: f64) -> Option<DMatrix<f64>> {
        let n = self.data.len();
        let mut j = DMatrix::zeros(n, u.len());
        for k in 0..u.len() {
            let h = step * u[k].abs().max(1.0);
            let mut up = u.clone();
            up[k] += h;
            let mut dn = u.clone();
            dn[k] -= h;
            let rp = self.residuals(&up)?;
            let rm = self.residuals(&dn)?;
            j.set_column(k, &((rm - rp) / (2.0 * h)));
        }
        Some(j)
    }

    /// Same, in the external parameters of the free set.
    fn external_jacobian(&mut self, p: &[f64], step: f64) -> Option<DMatrix<f64>> {
        let n = self.data.len();
        let mut j = DMatrix::zeros(n, self.free.len());
        for (k, &i) in self.free.clone().iter().enumerate() {
            let h = step * p[i].abs().max(1e-3 * (self.specs[i].hi - self.specs[i].lo).min(1.0)).max(1e-12);
            let mut up = p.to_vec();
            up[i] += h;
            let mut dn = p.to_vec();
            dn[i] -= h;
            let rp = self.residuals_at(&up)?;
            let rm = self.residuals_at(&dn)?;
            j.set_column(k, &((rm - rp) / (2.0 * h)));
        }
        Some(j)
    }
}

/// Weighted nonlinear least squares.
///
/// `model(params, x)` returns the prediction for every `x`. Deterministic for
/// given inputs. Fails with [`Error::Fit`] (carrying the best parameters
/// found) when the iteration cap is reached or the model cannot be
/// evaluated at the start point.
pub fn least_squares<F>(
    model_id: &str,
    model: F,
    data: &Data,
    specs: &[ParamSpec],
    options: &LmOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let free: Vec<usize> = (0..specs.len()).filter(|&i| !specs[i].fixed).collect();
    if data.len() < free.len() {
        return Err(Error::Config(format!(
            "{} points cannot constrain {} parameters",
            data.len(),
            free.len()
        )));
    }
    for s in specs {
        if !(s.lo < s.hi) || !s.init.is_finite() {
            return Err(Error::Config(format!("parameter `{}` has invalid bounds or start", s.name)));
        }
    }
    let mut prob = Problem {
        model: &model,
        data,
        specs,
        free: free.clone(),
        evaluations: 0,
    };
    let mut u = DVector::from_iterator(free.len(), free.iter().map(|&i| specs[i].to_internal(specs[i].init)));
    let fit_error = |message: String, iterations: usize, best: Vec<f64>| Error::Fit {
        model: model_id.into(),
        message,
        iterations,
        best,
    };
    let mut r = prob
        .residuals(&u)
        .ok_or_else(|| fit_error("model is not finite at the start point".into(), 0, prob.external(&u)))?;
    let mut chi2 = r.norm_squared();
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut converged = free.is_empty() || chi2 == 0.0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let Some(j) = prob.jacobian(&u, options.diff_step) else {
            return Err(fit_error("model not finite near the current point".into(), iterations, prob.external(&u)));
        };
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let diag = DVector::from_iterator(jtj.nrows(), (0..jtj.nrows()).map(|i| jtj[(i, i)].max(1e-300)));
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &u + &step;
            match prob.residuals(&trial) {
                Some(rt) if rt.norm_squared() < chi2 => {
                    let chi2_new = rt.norm_squared();
                    let small_gain = chi2 - chi2_new <= options.ftol * chi2;
                    let small_step = step
                        .iter()
                        .zip(u.iter())
                        .all(|(s, x)| s.abs() <= options.xtol * x.abs().max(1.0));
                    u = trial;
                    r = rt;
                    chi2 = chi2_new;
                    lambda = (lambda / 10.0).max(1e-15);
                    improved = true;
                    if small_gain || small_step || chi2 == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            // no downhill step at any damping: a numerical minimum
            converged = true;
        }
    }
    if !converged {
        return Err(fit_error(
            format!("no convergence within {} iterations (chi2 = {chi2:.6e})", options.max_iterations),
            iterations,
            prob.external(&u),
        ));
    }

    let p = prob.external(&u);
    let points = data.len();
    let dof = points.saturating_sub(free.len());
    let reduced = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    let mut flags = Vec::new();
    let n = specs.len();
    let mut covariance = vec![vec![0.0; n]; n];
    if !free.is_empty() {
        let jac = prob.external_jacobian(&p, options.diff_step);
        let cov_free = jac.map(|j| {
            let jtj = j.transpose() * &j;
            match jtj.clone().cholesky() {
                Some(c) => c.inverse(),
                None => {
                    flags.push(FitFlag::SingularCovariance);
                    jtj.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(free.len(), free.len()))
                }
            }
        });
        let cov_free = cov_free.unwrap_or_else(|| {
            flags.push(FitFlag::SingularCovariance);
            DMatrix::zeros(free.len(), free.len())
        });
        let factor = if options.scale_covariance && dof > 0 { reduced } else { 1.0 };
        for (a, &i) in free.iter().enumerate() {
            for (b, &k) in free.iter().enumerate() {
                let v = 0.5 * (cov_free[(a, b)] + cov_free[(b, a)]) * factor;
                covariance[i][k] = if v.is_finite() { v } else { 0.0 };
            }
        }
    }
    let parameters = specs
        .iter()
        .enumerate()
        .map(|(i, s)| FitParameter {
            name: s.name.clone(),
            unit: s.unit.clone(),
            value: p[i],
            uncertainty: covariance[i][i].max(0.0).sqrt(),
            fixed: s.fixed,
        })
        .collect();
    Ok(FitResult {
        model: model_id.into(),
        parameters,
        covariance,
        residual_sum: chi2,
        reduced_chi_square: reduced,
        points,
        degrees_of_freedom: dof,
        convergence: Convergence {
            iterations,
            evaluations: prob.evaluations,
            final_damping: lambda,
            converged,
        },
        derived: Default::default(),
        curves: Default::default(),
        flags,
        provenance: None,
    })
}

/// Central-difference Jacobian ∂model/∂p of the free parameters at `params`,
/// one row per data point, computed exactly as for the reported covariance.
pub fn model_jacobian<F>(
    model: F,
    data: &Data,
    specs: &[ParamSpec],
    params: &[f64],
    step: f64,
) -> Option<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let free: Vec<usize> = (0..specs.len()).filter(|&i| !specs[i].fixed).collect();
    let mut prob = Problem {
        model: &model,
        data,
        specs,
        free,
        evaluations: 0,
    };
    let j = prob.external_jacobian(params, step)?;
    Some(
        (0..j.nrows())
            .map(|r| (0..j.ncols()).map(|c| j[(r, c)] * data.sigma[r]).collect())
            .collect(),
    )
}

/// First-order error propagation of `f(parameters)` through the covariance.
pub fn propagate<G>(result: &FitResult, f: G) -> (f64, f64)
where
    G: Fn(&[f64]) -> f64,
{
    let p = result.values();
    let value = f(&p);
    let n = p.len();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        if result.parameters[i].fixed || result.covariance[i][i] <= 0.0 {
            continue;
        }
        let h = 1e-3 * result.covariance[i][i].sqrt();
        let mut up = p.clone();
        up[i] += h;
        let mut dn = p.clone();
        dn[i] -= h;
        grad[i] = (f(&up) - f(&dn)) / (2.0 * h);
    }
    let mut var = 0.0;
    for i in 0..n {
        for k in 0..n {
            var += grad[i] * result.covariance[i][k] * grad[k];
        }
    }
    (value, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms_round_trip() {
        let specs = [
            ParamSpec::new("a", "", 0.3).bounded(0.0, 1.0),
            ParamSpec::new("b", "", 5.0).bounded(2.0, f64::INFINITY),
            ParamSpec::new("c", "", -5.0).bounded(f64::NEG_INFINITY, 2.0),
            ParamSpec::new("d", "", 7.0),
        ];
        for s in &specs {
            assert!((s.to_external(s.to_internal(s.init)) - s.init).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 - 0.5 * x).collect();
        let data = Data::unweighted(x, y).unwrap();
        let fit = least_squares(
            "line",
            |p, x| x.iter().map(|x| p[0] + p[1] * x).collect(),
            &data,
            &[ParamSpec::new("a", "", 0.0), ParamSpec::new("b", "", 0.0)],
            &LmOptions::default(),
        )
        .unwrap();
        assert!((fit.values()[0] - 3.0).abs() < 1e-10);
        assert!((fit.values()[1] + 0.5).abs() < 1e-10);
        assert!(fit.residual_sum < 1e-18);
    }

    #[test]
    fn bounds_hold_and_fixed_stay() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 * (-1.5 * x).exp()).collect();
        let data = Data::unweighted(x, y).unwrap();
        let model = |p: &[f64], x: &[f64]| x.iter().map(|x| p[0] * (-p[1] * x).exp()).collect();
        let fit = least_squares(
            "exp",
            model,
            &data,
            &[
                ParamSpec::new("a", "", 1.0).fixed(true),
                ParamSpec::new("k", "", 0.5).bounded(0.0, 1.0),
            ],
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.values()[0], 1.0);
        assert!(fit.values()[1] <= 1.0);
        assert_eq!(fit.parameters[0].uncertainty, 0.0);
    }

    #[test]
    fn too_few_points() {
        let data = Data::unweighted(vec![1.0], vec![1.0]).unwrap();
        assert!(least_squares(
            "m",
            |p, _| vec![p[0] + p[1]],
            &data,
            &[ParamSpec::new("a", "", 0.0), ParamSpec::new("b", "", 0.0)],
            &LmOptions::default()
        )
        .is_err());
        assert!(Data::new(vec![1.0], vec![1.0], vec![0.0]).is_err());
    }
}
