use statrs::function::erf::erf;

/// Result of convolving a sampled curve with a Gaussian instrument response.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfConvolution {
    pub values: Vec<f64>,
    /// The grid step exceeds σ/2, so the kernel is poorly resolved.
    pub coarse_grid: bool,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Kernel weights for offsets −K..=K. Each weight is the Gaussian mass of
/// one grid cell, so a step between two cells is mapped onto the exact
/// error-function profile.
pub(crate) fn gaussian_cell_kernel(step: f64, sigma: f64) -> Vec<f64> {
    let half = (6.0 * sigma / step).ceil() as i64;
    let mut w: Vec<f64> = (-half..=half)
        .map(|k| {
            let lo = (k as f64 - 0.5) * step / sigma;
            let hi = (k as f64 + 0.5) * step / sigma;
            std_normal_cdf(hi) - std_normal_cdf(lo)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Discrete Gaussian convolution on a uniform grid with spacing `step`.
///
/// The kernel is truncated at ±6σ and renormalised to unit mass; near the
/// ends of the grid it is renormalised over the samples that exist, so
/// constant curves are preserved everywhere. `sigma == 0` is the identity.
pub fn irf_convolve(values: &[f64], step: f64, sigma: f64) -> IrfConvolution {
    assert!(step > 0.0, "grid step must be positive");
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 || values.is_empty() {
        return IrfConvolution {
            values: values.to_vec(),
            coarse_grid: false,
        };
    }
    let coarse_grid = step > 0.5 * sigma;
    if coarse_grid {
        log::warn!("IRF grid step {step} is coarser than sigma/2 = {}", 0.5 * sigma);
    }
    let kernel = gaussian_cell_kernel(step, sigma);
    let half = (kernel.len() / 2) as isize;
    let n = values.len() as isize;
    let out = (0..n)
        .map(|i| {
            let lo = (i - half).max(0);
            let hi = (i + half).min(n - 1);
            let mut acc = 0.0;
            let mut mass = 0.0;
            for j in lo..=hi {
                let w = kernel[(j - i + half) as usize];
                acc += w * values[j as usize];
                mass += w;
            }
            acc / mass
        })
        .collect();
    IrfConvolution {
        values: out,
        coarse_grid,
    }
}
