//! Damped least-squares engine and the per-measurement fitters built on it.

mod binned;
mod hbt;
mod hom;
mod lm;
mod lorentzian;
mod michelson;
mod power;
mod result;

pub use hbt::{fit_g2_hbt, BackgroundMode, HbtFitOptions};
pub use hom::{fit_hom_joint, BootstrapOptions, HomFitOptions};
pub use lm::{least_squares, model_jacobian, propagate, Data, LmOptions, ParamSpec};
pub use lorentzian::{fit_lorentzian, fit_lorentzian_doublet, lorentzian};
pub use michelson::{fit_michelson, MichelsonFitMode};
pub use power::{
    fit_coherent_fraction, fit_power_laws, CoherentFractionFit, PowerFitOptions, PowerFits,
    PowerSweep, Series,
};
pub use result::{Convergence, Curve, DerivedValue, FitFlag, FitParameter, FitResult, Provenance};
