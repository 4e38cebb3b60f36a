//! Closed-form models of the driven emitter and of the interferometers that
//! probe it. Everything here is a pure function of immutable inputs.

mod dip;
mod emitter;
mod hom;
mod irf;
mod michelson;
pub mod oracle;
mod power;

pub use dip::{
    copol_normalization, dip_depth_from_inelastic, inelastic_from_dip_depth, HomNormalization,
    IDEAL_DIP_DEPTH,
};
pub use emitter::{
    g2_from_shape, mollow_g2, mollow_g2_with, rabi_shape, rabi_shape_with, solve_t1_rabi,
    solve_t1_rabi_with, EmitterParams, MuConvention, RabiShape, DEFAULT_FOURIER_SLACK,
};
pub use hom::{
    hom_g2, hom_interference_prob, hom_visibility, p_hom_copolarized, HomCorrelationModel,
    InterferometerConfig, PhaseModel, Polarization, ScatteringMix,
};
pub use irf::{irf_convolve, IrfConvolution};
pub use michelson::{michelson_visibility, MichelsonModel};
pub use power::{
    coherent_fraction, polynomial_eval, power_curves, signal_fraction_from_g2zero, PowerCurveParams,
    PowerCurvePoint, SignalBackground,
};
