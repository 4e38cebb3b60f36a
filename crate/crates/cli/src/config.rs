//! Run configuration: one TOML file per experiment.
//!
//! Every physical quantity has a default at the scale of the characterised
//! quantum dot, so a file naming only the experiment kind, a seed and the
//! experiment's own table reproduces a realistic run. Unknown keys are
//! rejected to catch typos.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rrs_core::fitting::MichelsonFitMode;
use rrs_core::model::{EmitterParams, InterferometerConfig, MuConvention, Polarization, ScatteringMix};
use rrs_core::simulate::{DetectorConfig, FibreConfig, PairSamplerConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Autocorrelation (Hanbury Brown–Twiss) at one or more drive powers.
    Hbt,
    /// Two-photon interference with a short arm delay.
    Hom,
    /// Short-delay interference followed by the same run with a fibre spool
    /// in the long arm.
    HomFibre,
    /// First-order visibility versus path delay.
    Michelson,
    /// Resonant visibility curves at several powers and the coherent
    /// fraction they imply.
    PowerSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Hbt => "hbt",
            ExperimentKind::Hom => "hom",
            ExperimentKind::HomFibre => "hom-fibre",
            ExperimentKind::Michelson => "michelson",
            ExperimentKind::PowerSweep => "power-sweep",
        }
    }

    /// Whether the experiment produces time tags (and so histograms).
    pub fn uses_tags(self) -> bool {
        matches!(self, ExperimentKind::Hbt | ExperimentKind::Hom | ExperimentKind::HomFibre)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    /// Master seed; every random stage derives its own stream from it.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory. Not part of the configuration hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub emitter: EmitterBlock,
    #[serde(default)]
    pub mix: MixBlock,
    #[serde(default)]
    pub interferometer: InterferometerBlock,
    #[serde(default)]
    pub detector: DetectorBlock,
    #[serde(default)]
    pub histogram: HistogramBlock,
    #[serde(default)]
    pub fibre: Option<FibreBlock>,
    #[serde(default)]
    pub hbt: Option<HbtBlock>,
    #[serde(default)]
    pub hom: Option<HomBlock>,
    #[serde(default)]
    pub michelson: Option<MichelsonBlock>,
    #[serde(default)]
    pub power_sweep: Option<PowerSweepBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterBlock {
    /// Radiative lifetime T₁, ns.
    pub t1: f64,
    /// Coherence time T₂, ns.
    pub t2: f64,
    /// Rabi frequency at unit relative power, rad/ns. At relative power P
    /// the drive is Ω·√P.
    pub rabi: f64,
}

impl Default for EmitterBlock {
    fn default() -> Self {
        Self {
            t1: 1.0,
            t2: 1.8,
            rabi: 1.5,
        }
    }
}

impl EmitterBlock {
    pub fn params_at(&self, power: f64) -> EmitterParams {
        EmitterParams::new(self.t1, self.t2, self.rabi * power.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixBlock {
    /// Inelastically scattered fraction |α|².
    pub inelastic_fraction: f64,
    /// Laser coherence time, ns; absent means effectively infinite.
    pub laser_coherence_time_ns: Option<f64>,
}

impl Default for MixBlock {
    fn default() -> Self {
        Self {
            inelastic_fraction: 0.5,
            laser_coherence_time_ns: None,
        }
    }
}

impl MixBlock {
    pub fn mix(&self) -> rrs_core::Result<ScatteringMix> {
        ScatteringMix::new(self.inelastic_fraction, self.laser_coherence_time_ns.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerBlock {
    /// Arm delay Δτ of the free-space interferometer, ns.
    pub delay_ns: f64,
    pub transmission_short: f64,
    pub transmission_long: f64,
    /// Residual wavepacket overlap at the second beamsplitter.
    pub mode_overlap: f64,
}

impl Default for InterferometerBlock {
    fn default() -> Self {
        Self {
            delay_ns: 12.5,
            transmission_short: 1.0,
            transmission_long: 1.0,
            mode_overlap: 0.77,
        }
    }
}

impl InterferometerBlock {
    pub fn config(&self) -> InterferometerConfig {
        InterferometerConfig {
            transmission_short: self.transmission_short,
            transmission_long: self.transmission_long,
            mode_overlap: self.mode_overlap,
            ..InterferometerConfig::balanced(self.delay_ns, Polarization::Co)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorBlock {
    pub efficiency: f64,
    /// Gaussian timing jitter per detector, ps.
    pub jitter_ps: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    pub dead_time_ps: f64,
}

impl Default for DetectorBlock {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            jitter_ps: 35.0,
            dark_rate: 0.0,
            dead_time_ps: 0.0,
        }
    }
}

impl DetectorBlock {
    pub fn config(&self) -> DetectorConfig {
        DetectorConfig {
            efficiency: self.efficiency,
            jitter: self.jitter_ps,
            dark_rate: self.dark_rate,
            dead_time: self.dead_time_ps,
        }
    }

    /// IRF width of a two-detector coincidence, ns.
    pub fn irf_sigma_ns(&self) -> f64 {
        self.jitter_ps * 1e-3 * std::f64::consts::SQRT_2
    }
}

/// Histogram binning. Absent fields fall back to values suited to the
/// experiment kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramBlock {
    pub bin_width_ps: Option<i64>,
    /// The histogram covers [−half_window, half_window), ns.
    pub half_window_ns: Option<f64>,
    /// Baseline ranges as |τ| intervals in ns, mirrored to both signs.
    pub baseline_ns: Option<Vec<[f64; 2]>>,
    /// Only bins with |τ| below this enter the fit, ns.
    pub fit_window_ns: Option<f64>,
}

/// Resolved binning in integer picoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub bin_width: i64,
    pub half_window: i64,
    pub baseline: Vec<(i64, i64)>,
    pub fit_window_ns: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibreBlock {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub group_index: f64,
    /// Measured transit delay replacing the computed one, ns.
    pub delay_ns: Option<f64>,
    /// Measured relative loss of the fibre arm including connectors and
    /// switches, dB; absent means the spool loss alone.
    pub arm_loss_db: Option<f64>,
    /// Overlap retained by photons emitted one fibre delay apart.
    pub overlap_factor: f64,
}

impl Default for FibreBlock {
    fn default() -> Self {
        let spool = FibreConfig::default();
        Self {
            length_km: spool.length,
            attenuation_db_per_km: spool.attenuation,
            group_index: spool.group_index,
            delay_ns: spool.override_delay,
            arm_loss_db: Some(5.8),
            overlap_factor: 0.935,
        }
    }
}

impl FibreBlock {
    pub fn spool(&self) -> FibreConfig {
        FibreConfig {
            length: self.length_km,
            attenuation: self.attenuation_db_per_km,
            group_index: self.group_index,
            override_delay: self.delay_ns,
        }
    }

    pub fn arm_loss_db(&self) -> f64 {
        self.arm_loss_db.unwrap_or_else(|| self.spool().loss_db())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbtBlock {
    /// Relative drive powers; Ω scales with √P.
    pub powers: Vec<f64>,
    /// Acquisition time per power, ns.
    pub duration_ns: f64,
    /// Beamsplitter reflectivity towards detector A.
    pub split: f64,
    /// Convention linking (η, μ) to (T₁, T₂, Ω) for the derived values.
    pub mu_convention: MuConvention,
}

impl Default for HbtBlock {
    fn default() -> Self {
        Self {
            powers: vec![16.0, 9.0, 4.0],
            duration_ns: 1e7,
            split: 0.5,
            mu_convention: MuConvention::Bloch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomBlock {
    /// Acquisition time per polarisation setting, ns.
    pub duration_ns: f64,
    /// Correlated click pairs per second.
    pub pair_rate: f64,
    /// Uncorrelated clicks per second and detector.
    pub singles_rate: f64,
    /// Bootstrap resamples of V_max; zero disables.
    pub bootstrap_samples: usize,
}

impl Default for HomBlock {
    fn default() -> Self {
        Self {
            duration_ns: 1e10,
            pair_rate: 1e5,
            singles_rate: 4e3,
            bootstrap_samples: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MichelsonMode {
    Resonant,
    NonResonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MichelsonBlock {
    pub mode: MichelsonMode,
    /// Non-resonant coherence time T_c, ns.
    pub coherence_time_ns: f64,
    /// Fine structure splitting, µeV.
    pub fss_uev: f64,
    /// Intensity share of the first fine-structure line.
    pub line_ratio: f64,
    /// Resonant coherent fraction A; the inelastic part decays with T₂.
    pub coherent_amplitude: f64,
    /// Known laser breakthrough removed before a resonant fit.
    pub laser_breakthrough: Option<f64>,
    /// Delay grid, ns. Defaults depend on the mode.
    pub delay_stop_ns: Option<f64>,
    pub delay_step_ns: Option<f64>,
    /// Gaussian noise on every visibility point.
    pub noise: f64,
}

impl Default for MichelsonBlock {
    fn default() -> Self {
        Self {
            mode: MichelsonMode::NonResonant,
            coherence_time_ns: 0.447,
            fss_uev: 26.3,
            line_ratio: 0.35,
            coherent_amplitude: 0.6,
            laser_breakthrough: None,
            delay_stop_ns: None,
            delay_step_ns: None,
            noise: 0.01,
        }
    }
}

impl MichelsonBlock {
    pub fn delays(&self) -> Vec<f64> {
        let (stop, step) = match self.mode {
            MichelsonMode::NonResonant => (1.5, 0.01),
            MichelsonMode::Resonant => (15.0, 0.1),
        };
        delay_grid(self.delay_stop_ns.unwrap_or(stop), self.delay_step_ns.unwrap_or(step))
    }

    pub fn fit_mode(&self) -> MichelsonFitMode {
        match self.mode {
            MichelsonMode::NonResonant => MichelsonFitMode::NonResonant,
            MichelsonMode::Resonant => MichelsonFitMode::Resonant {
                laser_breakthrough: self.laser_breakthrough,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSweepBlock {
    /// Relative drive powers.
    pub powers: Vec<f64>,
    /// Power at which half the light is coherently scattered (γ/k).
    pub gamma_over_k: f64,
    pub delay_stop_ns: f64,
    pub delay_step_ns: f64,
    pub noise: f64,
}

impl Default for PowerSweepBlock {
    fn default() -> Self {
        Self {
            powers: vec![0.2, 0.5, 1.0, 2.0, 4.0],
            gamma_over_k: 1.0,
            delay_stop_ns: 15.0,
            delay_step_ns: 0.1,
            noise: 0.01,
        }
    }
}

impl PowerSweepBlock {
    pub fn delays(&self) -> Vec<f64> {
        delay_grid(self.delay_stop_ns, self.delay_step_ns)
    }
}

fn delay_grid(stop: f64, step: f64) -> Vec<f64> {
    let n = (stop / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn require<T>(block: &Option<T>, name: &str, kind: ExperimentKind) -> Result<(), CliError> {
    match block {
        Some(_) => Ok(()),
        None => Err(CliError::Config(format!(
            "kind `{}` needs a [{name}] table (it may be empty to take the defaults)",
            kind.name()
        ))),
    }
}

fn positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be finite and > 0, got {value}")))
    }
}

fn powers(name: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config(format!("`{name}` is empty")));
    }
    for &p in values {
        positive(name, p)?;
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The master seed. Runs never fall back to entropy.
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed: set `seed` in the config or pass --seed".into()))
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serialises");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serialises")
    }

    pub fn hbt(&self) -> HbtBlock {
        self.hbt.clone().unwrap_or_default()
    }

    pub fn hom(&self) -> HomBlock {
        self.hom.unwrap_or_default()
    }

    pub fn fibre(&self) -> FibreBlock {
        self.fibre.unwrap_or_default()
    }

    pub fn michelson(&self) -> MichelsonBlock {
        self.michelson.unwrap_or_default()
    }

    pub fn power_sweep(&self) -> PowerSweepBlock {
        self.power_sweep.clone().unwrap_or_default()
    }

    /// Binning with kind-specific defaults filled in.
    pub fn binning(&self) -> Binning {
        let h = &self.histogram;
        let delay = self.interferometer.delay_ns;
        let (half_ns, baseline_ns, fit_window): (f64, Vec<[f64; 2]>, Option<f64>) = match self.kind {
            ExperimentKind::Hbt => (20.0, vec![[12.0, 20.0]], Some(8.0)),
            _ => (
                delay + 5.0,
                vec![[0.4 * delay, 0.6 * delay]],
                None,
            ),
        };
        let ps = |ns: f64| (ns * 1e3).round() as i64;
        let half_window = ps(h.half_window_ns.unwrap_or(half_ns));
        let mut baseline = Vec::new();
        for [lo, hi] in h.baseline_ns.clone().unwrap_or(baseline_ns) {
            baseline.push((-ps(hi), -ps(lo)));
            baseline.push((ps(lo), ps(hi)));
        }
        baseline.sort_unstable();
        Binning {
            bin_width: h.bin_width_ps.unwrap_or(50),
            half_window,
            baseline,
            fit_window_ns: h.fit_window_ns.or(fit_window),
        }
    }

    /// Pair-sampler settings for an interference run; the sampler window
    /// reaches 1 ns past the histogram so jitter does not clip its edge.
    pub fn sampler(&self) -> PairSamplerConfig {
        let hom = self.hom();
        PairSamplerConfig {
            pair_rate: hom.pair_rate,
            singles_rate: hom.singles_rate,
            duration: hom.duration_ns,
            window: self.binning().half_window as f64 * 1e-3 + 1.0,
        }
    }

    /// Short-delay interferometer (co-polarised).
    pub fn short_interferometer(&self) -> InterferometerConfig {
        let mut cfg = self.interferometer.config();
        cfg.fibre_overlap_factor = self.fibre.map_or(1.0, |f| f.overlap_factor);
        cfg
    }

    /// Interferometer with the fibre spool in the long arm (co-polarised).
    pub fn fibre_interferometer(&self) -> InterferometerConfig {
        let fibre = self.fibre();
        let mut cfg = self.short_interferometer();
        cfg.fibre_delay = Some(fibre.spool().delay());
        cfg.fibre_attenuation_db = Some(fibre.arm_loss_db());
        cfg.fibre_overlap_factor = fibre.overlap_factor;
        cfg
    }

    /// Checks everything a run will need before any file is written.
    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        let e = &self.emitter;
        EmitterParams::new(e.t1, e.t2, e.rabi).validate().map_err(invalid)?;
        self.mix.mix().map_err(invalid)?;
        self.detector.config().validate().map_err(invalid)?;

        match self.kind {
            ExperimentKind::Hbt => {
                require(&self.hbt, "hbt", self.kind)?;
                let hbt = self.hbt();
                powers("hbt.powers", &hbt.powers)?;
                positive("hbt.duration_ns", hbt.duration_ns)?;
                if !(0.0..=1.0).contains(&hbt.split) {
                    return Err(CliError::Config(format!("`hbt.split` = {} outside [0, 1]", hbt.split)));
                }
            }
            ExperimentKind::Hom | ExperimentKind::HomFibre => {
                require(&self.hom, "hom", self.kind)?;
                if self.kind == ExperimentKind::HomFibre {
                    require(&self.fibre, "fibre", self.kind)?;
                    let fibre = self.fibre();
                    fibre.spool().validate().map_err(invalid)?;
                    self.fibre_interferometer().validate().map_err(invalid)?;
                }
                positive("hom.duration_ns", self.hom().duration_ns)?;
                self.short_interferometer().validate().map_err(invalid)?;
                self.sampler().validate().map_err(invalid)?;
                let b = self.binning();
                if b.half_window as f64 * 1e-3 <= self.interferometer.delay_ns {
                    return Err(CliError::Config(format!(
                        "histogram half window {} ns does not reach past the arm delay {} ns",
                        b.half_window as f64 * 1e-3,
                        self.interferometer.delay_ns
                    )));
                }
            }
            ExperimentKind::Michelson => {
                require(&self.michelson, "michelson", self.kind)?;
                let m = self.michelson();
                let model = match m.mode {
                    MichelsonMode::NonResonant => rrs_core::model::MichelsonModel::NonResonant {
                        coherence_time: m.coherence_time_ns,
                        fss: m.fss_uev,
                        line_ratio: m.line_ratio,
                    },
                    MichelsonMode::Resonant => {
                        rrs_core::model::MichelsonModel::resonant(m.coherent_amplitude, self.emitter.t2)
                    }
                };
                model.validate().map_err(invalid)?;
                positive("michelson.noise", m.noise)?;
                if let Some(f) = m.laser_breakthrough {
                    if !(0.0..1.0).contains(&f) {
                        return Err(CliError::Config(format!("`michelson.laser_breakthrough` = {f} outside [0, 1)")));
                    }
                }
                self.check_delays(&m.delays())?;
            }
            ExperimentKind::PowerSweep => {
                require(&self.power_sweep, "power_sweep", self.kind)?;
                let s = self.power_sweep();
                powers("power_sweep.powers", &s.powers)?;
                positive("power_sweep.gamma_over_k", s.gamma_over_k)?;
                positive("power_sweep.noise", s.noise)?;
                positive("power_sweep.delay_step_ns", s.delay_step_ns)?;
                self.check_delays(&s.delays())?;
            }
        }
        if self.kind.uses_tags() {
            self.check_binning()?;
        }
        Ok(())
    }

    fn check_delays(&self, delays: &[f64]) -> Result<(), CliError> {
        if delays.len() < 4 {
            return Err(CliError::Config(format!(
                "the delay grid has {} points; at least 4 are needed",
                delays.len()
            )));
        }
        Ok(())
    }

    fn check_binning(&self) -> Result<(), CliError> {
        let b = self.binning();
        if b.bin_width <= 0 {
            return Err(CliError::Config(format!("`histogram.bin_width_ps` = {} must be > 0", b.bin_width)));
        }
        if b.half_window <= 0 || (2 * b.half_window) % b.bin_width != 0 {
            return Err(CliError::Config(format!(
                "the histogram span {} ps is not a positive multiple of the bin width {} ps",
                2 * b.half_window,
                b.bin_width
            )));
        }
        for &(lo, hi) in &b.baseline {
            if lo >= hi || lo < -b.half_window || hi > b.half_window {
                return Err(CliError::Config(format!(
                    "baseline range [{lo}, {hi}) ps is empty or outside the histogram"
                )));
            }
        }
        if let Some(w) = b.fit_window_ns {
            positive("histogram.fit_window_ns", w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_kind_tables_take_defaults() {
        let cfg = RunConfig::parse("kind = \"hbt\"\nseed = 1\n[hbt]\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.hbt().powers, [16.0, 9.0, 4.0]);
        let b = cfg.binning();
        assert_eq!((b.bin_width, b.half_window), (50, 20_000));
        assert_eq!(b.baseline, [(-20_000, -12_000), (12_000, 20_000)]);
        assert_eq!(b.fit_window_ns, Some(8.0));
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = RunConfig::parse("kind = \"michelson\"\nseed = 1\n[michelson]\n").unwrap();
        let b = RunConfig::parse("kind = \"michelson\"\nseed = 1\noutput_dir = \"x\"\n[michelson]\n").unwrap();
        let c = RunConfig::parse("kind = \"michelson\"\nseed = 2\n[michelson]\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn bad_binning_is_rejected() {
        let cfg = RunConfig::parse("kind = \"hom\"\nseed = 1\n[hom]\n[histogram]\nbin_width_ps = 300\n").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
