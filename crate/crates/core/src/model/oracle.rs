//! Brute-force evaluation of the two-photon interference probability.
//!
//! The joint-click probability ¼|ξ₁(t+τ−Δτ)ξ₂(t) − ξ₁(t−Δτ)ξ₂(t+τ)|² is
//! integrated over t and Δτ with composite Gauss–Legendre quadrature and
//! averaged over the random phases Φ₁, Φ₂ on an equispaced grid. The
//! integrand is a trigonometric polynomial of degree two in each phase, so
//! four phase points per photon average it exactly.
//!
//! Nothing here reuses the closed form; it is the reference the closed form
//! is tested against.

use nalgebra::Complex;

use super::emitter::EmitterParams;
use super::hom::{Polarization, ScatteringMix};
use crate::error::{check_positive, check_unit_interval, Error, Result};
use crate::units::HBAR_UEV_NS;

/// Quadrature settings for [`brute_force_hom_prob`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationGrid {
    /// Upper integration limit in units of the longest amplitude decay time.
    pub truncation: f64,
    /// Panel width in units of the shortest amplitude decay time.
    pub panel_width: f64,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Largest acceptable probability mass beyond the truncation.
    pub tolerance: f64,
    /// Phase samples per photon.
    pub phase_points: usize,
}

impl Default for IntegrationGrid {
    fn default() -> Self {
        Self {
            truncation: 12.0,
            panel_width: 1.0,
            order: 10,
            tolerance: 1e-6,
            phase_points: 4,
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule on [a, b] split into panels no wider than `width`.
fn composite(a: f64, b: f64, width: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    if b <= a {
        return Vec::new();
    }
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * gl.0.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in gl.0.iter().zip(&gl.1) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

struct ModeFunction {
    alpha: f64,
    beta: Complex<f64>,
    t1: f64,
    t2: f64,
    omega: f64,
}

impl ModeFunction {
    fn at(&self, t: f64) -> Complex<f64> {
        if t < 0.0 {
            return Complex::new(0.0, 0.0);
        }
        let inelastic = self.alpha * (2.0 / self.t1).sqrt() * (-t / self.t1).exp();
        let elastic = self.beta * (2.0 / self.t2).sqrt() * (-t / self.t2).exp();
        let carrier = Complex::from_polar(1.0, -self.omega * t);
        (Complex::new(inelastic, 0.0) + elastic) * carrier
    }
}

/// Numerical two-photon interference probability at detection delay `tau`
/// for the configured mode overlap (a mixture of indistinguishable and
/// distinguishable pairs).
pub fn brute_force_hom_prob(
    tau: f64,
    mix: &ScatteringMix,
    params: &EmitterParams,
    polarization: Polarization,
    overlap: f64,
    grid: &IntegrationGrid,
) -> Result<f64> {
    mix.validate()?;
    params.validate()?;
    check_unit_interval("overlap", overlap)?;
    check_positive("truncation", grid.truncation)?;
    check_positive("panel_width", grid.panel_width)?;
    if !mix.laser_coherence_time.is_finite() {
        return Err(Error::ParameterDomain {
            name: "laser_coherence_time",
            value: mix.laser_coherence_time,
            reason: "quadrature needs a normalisable elastic mode function",
        });
    }
    if grid.phase_points < 3 {
        return Err(Error::ParameterDomain {
            name: "phase_points",
            value: grid.phase_points as f64,
            reason: "at least 3 points are needed to average degree-2 phase terms",
        });
    }
    let t1 = params.t1;
    let t2 = mix.laser_coherence_time;
    let longest = t1.max(t2);
    let shortest = t1.min(t2);
    let limit = grid.truncation * longest;
    // |ξ|² decays at twice the amplitude rate.
    let tail_mass = 2.0 * (-2.0 * limit / longest).exp();
    if tail_mass > grid.tolerance {
        return Err(Error::Accuracy {
            tail_mass,
            tolerance: grid.tolerance,
        });
    }

    let tau = tau.abs();
    let gl = gauss_legendre(grid.order);
    let width = grid.panel_width * shortest;
    // Both integration variables live on [−τ, 0] ∪ [0, limit]; the integrand
    // has kinks only at the panel boundaries.
    let mut nodes = composite(-tau, 0.0, width, &gl);
    nodes.extend(composite(0.0, limit, width, &gl));

    let omega = params.transition_energy.unwrap_or(0.0) / HBAR_UEV_NS;
    let alpha = mix.inelastic_fraction().sqrt();
    let beta_mag = mix.elastic_fraction().sqrt();
    let m = grid.phase_points;
    let phases: Vec<f64> = (0..m)
        .map(|k| std::f64::consts::TAU * k as f64 / m as f64)
        .collect();

    let mut indist = 0.0;
    let mut dist = 0.0;
    for &phi1 in &phases {
        let xi1 = ModeFunction {
            alpha,
            beta: Complex::from_polar(beta_mag, phi1),
            t1,
            t2,
            omega,
        };
        // s = t − Δτ
        let a: Vec<_> = nodes.iter().map(|&(s, _)| xi1.at(s + tau)).collect();
        let b: Vec<_> = nodes.iter().map(|&(s, _)| xi1.at(s)).collect();
        for &phi2 in &phases {
            let xi2 = ModeFunction {
                alpha,
                beta: Complex::from_polar(beta_mag, phi2),
                t1,
                t2,
                omega,
            };
            let c: Vec<_> = nodes.iter().map(|&(t, _)| xi2.at(t)).collect();
            let d: Vec<_> = nodes.iter().map(|&(t, _)| xi2.at(t + tau)).collect();
            for (i, &(_, ws)) in nodes.iter().enumerate() {
                let mut row_i = 0.0;
                let mut row_d = 0.0;
                for (j, &(_, wt)) in nodes.iter().enumerate() {
                    let first = a[i] * c[j];
                    let second = b[i] * d[j];
                    row_i += wt * (first - second).norm_sqr();
                    row_d += wt * (first.norm_sqr() + second.norm_sqr());
                }
                indist += ws * row_i;
                dist += ws * row_d;
            }
        }
    }
    let combos = (m * m) as f64;
    let indist = 0.25 * indist / combos;
    let dist = 0.25 * dist / combos;
    Ok(match polarization {
        Polarization::Cross => dist,
        Polarization::Co => overlap * indist + (1.0 - overlap) * dist,
    })
}

/// [`brute_force_hom_prob`] over a set of delays, evaluated in parallel
/// when the `parallel` feature is enabled.
pub fn brute_force_hom_sweep(
    taus: &[f64],
    mix: &ScatteringMix,
    params: &EmitterParams,
    polarization: Polarization,
    overlap: f64,
    grid: &IntegrationGrid,
) -> Result<Vec<f64>> {
    crate::par::map_indexed(taus.len(), |i| {
        brute_force_hom_prob(taus[i], mix, params, polarization, overlap, grid)
    })
    .into_iter()
    .collect()
}
