//! The four stages. Each reads the previous stage's files from the output
//! directory, so stages can be run one at a time or chained by `pipeline`.
//!
//! Layout of the output directory:
//!
//! ```text
//! config.json              resolved configuration and its hash
//! tags/<label>.bin         simulated time tags (tag-based kinds)
//! data/<label>.csv         simulated visibility points (Michelson kinds)
//! histograms/<label>.csv   coincidence histogram, plus a .json sidecar
//! fits/<name>.json         fit results with provenance
//! report/*.csv|json        plot panels (x, y, y_err, model_y) and tables
//! ```

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use rrs_core::correlator::{correlate, extract_dip_depth, poisson_normalize, CorrelationHistogram, Window};
use rrs_core::fitting::{
    fit_coherent_fraction, fit_g2_hbt, fit_hom_joint, fit_michelson, BootstrapOptions, CoherentFractionFit,
    FitResult, HbtFitOptions, HomFitOptions, MichelsonFitMode, Provenance,
};
use rrs_core::model::{hom_g2, michelson_visibility, InterferometerConfig, MichelsonModel, Polarization};
use rrs_core::simulate::io::{read_binary, write_binary_annotated};
use rrs_core::simulate::{
    apply_detector, derive_seed, route_hbt, sample_hom_coincidences, simulate_emission, StreamMetadata,
    TimeTagStream, CHANNEL_A, CHANNEL_B,
};

use crate::config::{ExperimentKind, MichelsonMode, RunConfig};
use crate::error::{CliError, Stage};
use crate::output::{Cell, Input, Outputs, Panel, PanelRow, Table};

/// Seed labels, fixed so that adding a stage never reshuffles another.
const SEED_HBT: u64 = 100;
const SEED_HOM: u64 = 200;
const SEED_VISIBILITY: u64 = 300;
const SEED_BOOTSTRAP: u64 = 400;

pub struct Run {
    pub config: RunConfig,
    pub seed: u64,
    pub out: Outputs,
}

/// Runs `f` over `items`, in parallel when the feature is on. Results keep
/// the input order, and the first error by position wins, so outcomes do not
/// depend on scheduling.
fn for_each<T, R, F>(items: &[T], f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R, CliError> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let results: Vec<Result<R, CliError>> = {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<R, CliError>> = items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    results.into_iter().collect()
}

/// One simulated HOM acquisition.
#[derive(Clone, Copy)]
struct HomSetting {
    label: &'static str,
    interferometer: InterferometerConfig,
}

impl Run {
    fn hom_settings(&self) -> Vec<HomSetting> {
        let short = self.config.short_interferometer();
        let cross = Polarization::Cross;
        match self.config.kind {
            ExperimentKind::Hom => vec![
                HomSetting { label: "co", interferometer: short },
                HomSetting { label: "cross", interferometer: short.with_polarization(cross) },
            ],
            ExperimentKind::HomFibre => {
                let fibre = self.config.fibre_interferometer();
                vec![
                    HomSetting { label: "short_co", interferometer: short },
                    HomSetting { label: "short_cross", interferometer: short.with_polarization(cross) },
                    HomSetting { label: "fibre_co", interferometer: fibre },
                    HomSetting { label: "fibre_cross", interferometer: fibre.with_polarization(cross) },
                ]
            }
            _ => Vec::new(),
        }
    }

    /// Labels of the tag files (and histograms) of this experiment.
    fn tag_labels(&self) -> Vec<String> {
        match self.config.kind {
            ExperimentKind::Hbt => (0..self.config.hbt().powers.len()).map(|i| format!("hbt_p{i}")).collect(),
            ExperimentKind::Hom | ExperimentKind::HomFibre => {
                self.hom_settings().iter().map(|s| s.label.to_string()).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Labels of the visibility data sets.
    fn data_labels(&self) -> Vec<String> {
        match self.config.kind {
            ExperimentKind::Michelson => vec!["michelson".into()],
            ExperimentKind::PowerSweep => {
                (0..self.config.power_sweep().powers.len()).map(|i| format!("power_p{i}")).collect()
            }
            _ => Vec::new(),
        }
    }

    fn provenance(&self, inputs: &[&Input]) -> Provenance {
        Provenance {
            input_hashes: inputs.iter().map(|i| (i.name.clone(), i.sha256.clone())).collect(),
            config: self.config.to_json(),
            config_hash: Some(self.out.config_hash().to_string()),
            seed: Some(self.seed),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write_config(&self, stage: Stage) -> Result<(), CliError> {
        self.out.write_json(stage, "config.json", &self.config.to_json())
    }

    pub fn execute(&self, stage: Stage) -> Result<(), CliError> {
        log::info!("{stage}: {} run, output in {}", self.config.kind.name(), self.out.root().display());
        match stage {
            Stage::Simulate => self.simulate(),
            Stage::Correlate => self.correlate(),
            Stage::Fit => self.fit(),
            Stage::Report => self.report(),
        }
    }

    // -----------------------------------------------------------------------
    // simulate
    // -----------------------------------------------------------------------

    fn simulate(&self) -> Result<(), CliError> {
        let stage = Stage::Simulate;
        let err = CliError::stage(stage);
        let cfg = &self.config;
        let detector = cfg.detector.config();
        match cfg.kind {
            ExperimentKind::Hbt => {
                let hbt = cfg.hbt();
                let labels = self.tag_labels();
                for_each(&hbt.powers, |i, &power| {
                    let seed = derive_seed(self.seed, SEED_HBT + i as u64);
                    let params = cfg.emitter.params_at(power);
                    let emissions = simulate_emission(&params, hbt.duration_ns, derive_seed(seed, 0)).map_err(&err)?;
                    let (a, b) =
                        route_hbt(&emissions, &detector, &detector, hbt.split, derive_seed(seed, 1)).map_err(&err)?;
                    log::info!("simulate: P = {power}: {} + {} clicks", a.len(), b.len());
                    self.write_tags(&labels[i], &[a, b])
                })?;
            }
            ExperimentKind::Hom | ExperimentKind::HomFibre => {
                let params = cfg.emitter.params_at(1.0);
                let mix = cfg.mix.mix().map_err(&err)?;
                let sampler = cfg.sampler();
                for_each(&self.hom_settings(), |i, setting| {
                    let seed = derive_seed(self.seed, SEED_HOM + i as u64);
                    let (a, b) = sample_hom_coincidences(&params, &mix, &setting.interferometer, &sampler, seed)
                        .map_err(&err)?;
                    let detect = |s: &TimeTagStream, label| {
                        apply_detector(s.tags(), s.duration(), s.channel(), &detector, derive_seed(seed, label))
                    };
                    let (a, b) = (detect(&a, 1).map_err(&err)?, detect(&b, 2).map_err(&err)?);
                    log::info!("simulate: {}: {} + {} clicks", setting.label, a.len(), b.len());
                    self.write_tags(setting.label, &[a, b])
                })?;
            }
            ExperimentKind::Michelson => {
                let m = cfg.michelson();
                let model = match m.mode {
                    MichelsonMode::NonResonant => MichelsonModel::NonResonant {
                        coherence_time: m.coherence_time_ns,
                        fss: m.fss_uev,
                        line_ratio: m.line_ratio,
                    },
                    MichelsonMode::Resonant => MichelsonModel::resonant(m.coherent_amplitude, cfg.emitter.t2),
                };
                let floor = m.laser_breakthrough.unwrap_or(0.0);
                self.write_visibility("michelson", &m.delays(), m.noise, SEED_VISIBILITY, |t| {
                    michelson_visibility(t, &model).map(|v| floor + (1.0 - floor) * v)
                })?;
            }
            ExperimentKind::PowerSweep => {
                let s = cfg.power_sweep();
                let labels = self.data_labels();
                for_each(&s.powers, |i, &p| {
                    let model = MichelsonModel::resonant(1.0 / (1.0 + p / s.gamma_over_k), cfg.emitter.t2);
                    self.write_visibility(&labels[i], &s.delays(), s.noise, SEED_VISIBILITY + i as u64, |t| {
                        michelson_visibility(t, &model)
                    })
                })?;
            }
        }
        Ok(())
    }

    fn write_tags(&self, label: &str, streams: &[TimeTagStream]) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write_binary_annotated(&mut bytes, streams, &self.out.tag_annotation(label))
            .map_err(CliError::stage(Stage::Simulate))?;
        self.out.write(Stage::Simulate, &format!("tags/{label}.bin"), &bytes)
    }

    fn write_visibility<F>(&self, label: &str, delays: &[f64], noise: f64, seed_label: u64, model: F) -> Result<(), CliError>
    where
        F: Fn(f64) -> rrs_core::Result<f64>,
    {
        let err = CliError::stage(Stage::Simulate);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, seed_label));
        let normal = Normal::new(0.0, noise).map_err(|e| CliError::Config(e.to_string()))?;
        let mut text = self.out.csv_stamp();
        text.push_str("delay_ns,visibility,sigma\n");
        for &t in delays {
            let v = model(t).map_err(&err)? + normal.sample(&mut rng);
            text.push_str(&format!("{t},{v},{noise}\n"));
        }
        self.out.write(Stage::Simulate, &format!("data/{label}.csv"), text.as_bytes())
    }

    // -----------------------------------------------------------------------
    // correlate
    // -----------------------------------------------------------------------

    fn correlate(&self) -> Result<(), CliError> {
        if !self.config.kind.uses_tags() {
            log::info!("correlate: {} data carry no time tags; nothing to do", self.config.kind.name());
            return Ok(());
        }
        let stage = Stage::Correlate;
        let err = CliError::stage(stage);
        let binning = self.config.binning();
        for_each(&self.tag_labels(), |_, label| {
            let rel = format!("tags/{label}.bin");
            let input = self.out.read(stage, &rel, Stage::Simulate)?;
            let file = read_binary(input.bytes.as_slice()).map_err(&err)?;
            let found = file
                .annotation
                .split_whitespace()
                .find_map(|w| w.strip_prefix("config_hash="));
            self.out.check_hash(stage, &rel, found)?;
            let channel = |c| {
                file.channel(c)
                    .cloned()
                    .unwrap_or_else(|| TimeTagStream::empty(c, file.duration, StreamMetadata::default()))
            };
            let (a, b) = (channel(CHANNEL_A), channel(CHANNEL_B));
            let raw = correlate(&a, &b, binning.bin_width, Window::symmetric(binning.half_window)).map_err(&err)?;
            let hist = poisson_normalize(&raw, &binning.baseline).map_err(&err)?;
            if hist.normalization().baseline_flagged {
                log::warn!("correlate: {label}: baseline scatter exceeds shot noise");
            }
            log::info!("correlate: {label}: {} pairs in {} bins", hist.total_pairs(), hist.len());
            self.write_histogram(label, &hist, &input)
        })?;
        Ok(())
    }

    fn write_histogram(&self, label: &str, hist: &CorrelationHistogram, source: &Input) -> Result<(), CliError> {
        let err = CliError::stage(Stage::Correlate);
        let mut csv = self.out.csv_stamp().into_bytes();
        hist.write_csv(&mut csv).map_err(&err)?;
        self.out.write(Stage::Correlate, &format!("histograms/{label}.csv"), &csv)?;
        let mut sidecar = Vec::new();
        hist.write_sidecar(&mut sidecar).map_err(&err)?;
        let mut sidecar: serde_json::Map<String, Value> =
            serde_json::from_slice(&sidecar).map_err(|e| err(e.into()))?;
        sidecar.insert(
            "source".into(),
            serde_json::json!({ "file": source.name, "sha256": source.sha256 }),
        );
        self.out.write_json(Stage::Correlate, &format!("histograms/{label}.json"), &sidecar)
    }

    fn read_histogram(&self, stage: Stage, label: &str) -> Result<(CorrelationHistogram, Input), CliError> {
        let err = CliError::stage(stage);
        let csv_rel = format!("histograms/{label}.csv");
        let json_rel = format!("histograms/{label}.json");
        let csv = self.out.read(stage, &csv_rel, Stage::Correlate)?;
        let sidecar = self.out.read(stage, &json_rel, Stage::Correlate)?;
        let text = String::from_utf8_lossy(&csv.bytes);
        self.out.check_hash(stage, &csv_rel, Outputs::csv_hash(&text))?;
        let side: Value = serde_json::from_slice(&sidecar.bytes).map_err(|e| err(e.into()))?;
        self.out.check_hash(stage, &json_rel, side.get("config_hash").and_then(Value::as_str))?;
        let body: Vec<u8> = csv
            .bytes
            .as_slice()
            .lines()
            .map_while(Result::ok)
            .filter(|l| !l.starts_with('#'))
            .flat_map(|l| (l + "\n").into_bytes())
            .collect();
        let hist = CorrelationHistogram::read(body.as_slice(), sidecar.bytes.as_slice()).map_err(&err)?;
        Ok((hist, csv))
    }

    fn read_visibility(&self, stage: Stage, label: &str) -> Result<(VisibilityData, Input), CliError> {
        let rel = format!("data/{label}.csv");
        let input = self.out.read(stage, &rel, Stage::Simulate)?;
        let text = String::from_utf8_lossy(&input.bytes).into_owned();
        self.out.check_hash(stage, &rel, Outputs::csv_hash(&text))?;
        let mut data = VisibilityData::default();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.starts_with("delay_ns") || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Stage {
                    stage,
                    source: rrs_core::Error::Data {
                        index: n,
                        message: format!("{rel}: {e}"),
                    },
                })?;
            if fields.len() != 3 {
                return Err(CliError::Stage {
                    stage,
                    source: rrs_core::Error::Data {
                        index: n,
                        message: format!("{rel}: expected 3 columns, found {}", fields.len()),
                    },
                });
            }
            data.delay.push(fields[0]);
            data.visibility.push(fields[1]);
            data.sigma.push(fields[2]);
        }
        Ok((data, input))
    }

    // -----------------------------------------------------------------------
    // fit
    // -----------------------------------------------------------------------

    fn write_fit(&self, name: &str, mut fit: FitResult, inputs: &[&Input]) -> Result<FitResult, CliError> {
        fit.provenance = Some(self.provenance(inputs));
        self.out.write_json(Stage::Fit, &format!("fits/{name}.json"), &fit)?;
        Ok(fit)
    }

    fn read_fit(&self, stage: Stage, name: &str) -> Result<(FitResult, Input), CliError> {
        let rel = format!("fits/{name}.json");
        let input = self.out.read(stage, &rel, Stage::Fit)?;
        let fit: FitResult = serde_json::from_slice(&input.bytes).map_err(|e| CliError::Stage {
            stage,
            source: e.into(),
        })?;
        let found = fit.provenance.as_ref().and_then(|p| p.config_hash.as_deref());
        self.out.check_hash(stage, &rel, found)?;
        Ok((fit, input))
    }

    fn hom_fit_options(&self) -> HomFitOptions {
        let cfg = &self.config;
        let i = &cfg.interferometer;
        let hom = cfg.hom();
        HomFitOptions {
            irf_sigma: cfg.detector.irf_sigma_ns(),
            laser_coherence_time: cfg.mix.laser_coherence_time_ns,
            transmission_short: i.transmission_short,
            transmission_long: i.transmission_long,
            fit_window: cfg.binning().fit_window_ns,
            bootstrap: (hom.bootstrap_samples > 0).then(|| BootstrapOptions {
                samples: hom.bootstrap_samples,
                seed: derive_seed(self.seed, SEED_BOOTSTRAP),
            }),
            ..HomFitOptions::balanced(i.delay_ns, cfg.emitter.t2)
        }
    }

    fn fit(&self) -> Result<(), CliError> {
        let stage = Stage::Fit;
        let err = CliError::stage(stage);
        let cfg = &self.config;
        match cfg.kind {
            ExperimentKind::Hbt => {
                let hbt = cfg.hbt();
                let options = HbtFitOptions {
                    irf_sigma: cfg.detector.irf_sigma_ns(),
                    t2: Some(cfg.emitter.t2),
                    fit_window: cfg.binning().fit_window_ns,
                    convention: hbt.mu_convention,
                    ..Default::default()
                };
                for_each(&self.tag_labels(), |_, label| {
                    let (hist, input) = self.read_histogram(stage, label)?;
                    let fit = fit_g2_hbt(&hist, &options).map_err(&err)?;
                    log::info!(
                        "fit: {label}: eta = {:.4}, mu = {:.4}",
                        fit.value("eta").unwrap_or(f64::NAN),
                        fit.value("mu").unwrap_or(f64::NAN)
                    );
                    self.write_fit(label, fit, &[&input])
                })?;
            }
            ExperimentKind::Hom => {
                let (co, co_in) = self.read_histogram(stage, "co")?;
                let (cross, cross_in) = self.read_histogram(stage, "cross")?;
                let fit = fit_hom_joint(&co, &cross, &self.hom_fit_options()).map_err(&err)?;
                log::info!("fit: V_max = {:.4}", fit.value("v_max").unwrap_or(f64::NAN));
                self.write_fit("hom", fit, &[&co_in, &cross_in])?;
            }
            ExperimentKind::HomFibre => {
                let options = self.hom_fit_options();
                let (co, co_in) = self.read_histogram(stage, "short_co")?;
                let (cross, cross_in) = self.read_histogram(stage, "short_cross")?;
                let short = fit_hom_joint(&co, &cross, &options).map_err(&err)?;
                log::info!("fit: short delay V_max = {:.4}", short.value("v_max").unwrap_or(f64::NAN));
                self.write_fit("short", short, &[&co_in, &cross_in])?;
                // the fibre run has no side dips in view: delay, loss and |α|²
                // come from the configuration and the short-delay fit
                let (short, short_in) = self.read_fit(stage, "short")?;
                let long_cfg = cfg.fibre_interferometer();
                let fibre_options = HomFitOptions {
                    delay: long_cfg.effective_delay(),
                    fix_delay: true,
                    transmission_long: long_cfg.effective_transmission_long(),
                    inelastic_fraction: short.value("inelastic_fraction"),
                    ..options
                };
                let (co, co_in) = self.read_histogram(stage, "fibre_co")?;
                let (cross, cross_in) = self.read_histogram(stage, "fibre_cross")?;
                let fibre = fit_hom_joint(&co, &cross, &fibre_options).map_err(&err)?;
                log::info!("fit: fibre V_max = {:.4}", fibre.value("v_max").unwrap_or(f64::NAN));
                self.write_fit("fibre", fibre, &[&co_in, &cross_in, &short_in])?;
            }
            ExperimentKind::Michelson => {
                let (data, input) = self.read_visibility(stage, "michelson")?;
                let fit = fit_michelson(&data.delay, &data.visibility, &data.sigma, cfg.michelson().fit_mode())
                    .map_err(&err)?;
                self.write_fit("michelson", fit, &[&input])?;
            }
            ExperimentKind::PowerSweep => {
                let labels = self.data_labels();
                let fits = for_each(&labels, |_, label| {
                    let (data, input) = self.read_visibility(stage, label)?;
                    let mode = MichelsonFitMode::Resonant { laser_breakthrough: None };
                    let fit = fit_michelson(&data.delay, &data.visibility, &data.sigma, mode).map_err(&err)?;
                    let fit = self.write_fit(label, fit, &[&input])?;
                    let input = self.out.read(stage, &format!("fits/{label}.json"), Stage::Fit)?;
                    Ok((fit, input))
                })?;
                let amplitude = |f: &FitResult| f.value("coherent_amplitude").unwrap_or(f64::NAN);
                let sigma = |f: &FitResult| f.uncertainty("coherent_amplitude").unwrap_or(f64::NAN);
                let a: Vec<f64> = fits.iter().map(|(f, _)| amplitude(f)).collect();
                let s: Vec<f64> = fits.iter().map(|(f, _)| sigma(f)).collect();
                let fit = fit_coherent_fraction(&cfg.power_sweep().powers, &a, &s, CoherentFractionFit::GammaOverK)
                    .map_err(&err)?;
                log::info!(
                    "fit: gamma/k = {:.4}, lack-of-fit p = {:.3}",
                    fit.value("gamma_over_k").unwrap_or(f64::NAN),
                    fit.lack_of_fit_p_value()
                );
                let inputs: Vec<&Input> = fits.iter().map(|(_, i)| i).collect();
                self.write_fit("coherent_fraction", fit, &inputs)?;
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // report
    // -----------------------------------------------------------------------

    fn report(&self) -> Result<(), CliError> {
        let stage = Stage::Report;
        let cfg = &self.config;
        match cfg.kind {
            ExperimentKind::Hbt => {
                let hbt = cfg.hbt();
                let mut table = Table::new(&[
                    "power", "rabi", "eta", "eta_err", "mu", "mu_err", "g2_zero", "g2_zero_err", "t1", "t1_err",
                    "rabi_fit", "rabi_fit_err", "reduced_chi_square", "flags",
                ]);
                for (i, label) in self.tag_labels().iter().enumerate() {
                    let (hist, _) = self.read_histogram(stage, label)?;
                    let (fit, _) = self.read_fit(stage, label)?;
                    let panel = histogram_panel(&hist, fit.curves.get("model"), "tau_ns", "g2");
                    self.out.write_panel(&format!("report/g2_p{i}"), &panel)?;
                    let v = |n: &str| Cell::from(fit.value(n));
                    let u = |n: &str| Cell::from(fit.uncertainty(n));
                    let power = hbt.powers[i];
                    table.push(vec![
                        power.into(),
                        cfg.emitter.params_at(power).rabi.into(),
                        v("eta"),
                        u("eta"),
                        v("mu"),
                        u("mu"),
                        v("g2_zero"),
                        u("g2_zero"),
                        v("t1"),
                        u("t1"),
                        v("rabi"),
                        u("rabi"),
                        fit.reduced_chi_square.into(),
                        flags(&fit),
                    ]);
                }
                self.out.write_table("report/eta_mu_vs_power", &table)?;
            }
            ExperimentKind::Hom => {
                let fit = self.hom_panels(stage, "co", "cross", "hom", "")?;
                let mut table = Table::new(&["quantity", "value", "uncertainty"]);
                for name in [
                    "v_max", "g2_cross_zero", "d", "d_cross", "inelastic_fraction", "inelastic_fraction_from_dips",
                    "overlap", "delay", "t1", "v_max_bootstrap",
                ] {
                    if fit.value(name).is_some() {
                        table.push(vec![name.into(), fit.value(name).into(), fit.uncertainty(name).into()]);
                    }
                }
                table.push(vec!["reduced_chi_square".into(), fit.reduced_chi_square.into(), Cell::Missing]);
                self.out.write_table("report/hom_summary", &table)?;
            }
            ExperimentKind::HomFibre => {
                let short = self.hom_panels(stage, "short_co", "short_cross", "short", "_short")?;
                let fibre = self.hom_panels(stage, "fibre_co", "fibre_cross", "fibre", "_fibre")?;
                self.zero_delay_table(stage, &short, &fibre)?;

                let mut table = Table::new(&["quantity", "value", "uncertainty"]);
                let (vs, ss) = (short.value("v_max").unwrap_or(f64::NAN), short.uncertainty("v_max").unwrap_or(f64::NAN));
                let (vf, sf) = (fibre.value("v_max").unwrap_or(f64::NAN), fibre.uncertainty("v_max").unwrap_or(f64::NAN));
                let drop = 1.0 - vf / vs;
                let drop_err = (vf / vs) * ((ss / vs).powi(2) + (sf / vf).powi(2)).sqrt();
                table.push(vec!["v_max_short".into(), vs.into(), ss.into()]);
                table.push(vec!["v_max_fibre".into(), vf.into(), sf.into()]);
                table.push(vec!["relative_drop".into(), drop.into(), drop_err.into()]);
                table.push(vec![
                    "configured_drop".into(),
                    (1.0 - cfg.fibre().overlap_factor).into(),
                    Cell::Missing,
                ]);
                self.out.write_table("report/visibility_summary", &table)?;
            }
            ExperimentKind::Michelson => {
                let (data, _) = self.read_visibility(stage, "michelson")?;
                let (fit, _) = self.read_fit(stage, "michelson")?;
                let m = cfg.michelson();
                let model = fitted_michelson(&fit, m.mode);
                let floor = match m.mode {
                    MichelsonMode::Resonant => m.laser_breakthrough.unwrap_or(0.0),
                    MichelsonMode::NonResonant => 0.0,
                };
                self.out.write_panel("report/visibility", &visibility_panel(&data, model, floor))?;
                self.out.write_table("report/parameters", &parameter_table(&fit))?;
            }
            ExperimentKind::PowerSweep => {
                let s = cfg.power_sweep();
                let mut table = Table::new(&[
                    "power", "coherent_amplitude", "uncertainty", "configured", "tau2", "tau2_err", "flags",
                ]);
                let mut panel = Panel {
                    x_label: "power".into(),
                    y_label: "coherent_amplitude".into(),
                    rows: Vec::new(),
                };
                let (cf, _) = self.read_fit(stage, "coherent_fraction")?;
                let gk = cf.value("gamma_over_k").unwrap_or(f64::NAN);
                for (i, label) in self.data_labels().iter().enumerate() {
                    let (data, _) = self.read_visibility(stage, label)?;
                    let (fit, _) = self.read_fit(stage, label)?;
                    let model = fitted_michelson(&fit, MichelsonMode::Resonant);
                    self.out.write_panel(&format!("report/visibility_p{i}"), &visibility_panel(&data, model, 0.0))?;
                    let p = s.powers[i];
                    table.push(vec![
                        p.into(),
                        fit.value("coherent_amplitude").into(),
                        fit.uncertainty("coherent_amplitude").into(),
                        (1.0 / (1.0 + p / s.gamma_over_k)).into(),
                        fit.value("tau2").into(),
                        fit.uncertainty("tau2").into(),
                        flags(&fit),
                    ]);
                    panel.rows.push(PanelRow {
                        x: p,
                        y: fit.value("coherent_amplitude").unwrap_or(f64::NAN),
                        y_err: fit.uncertainty("coherent_amplitude").unwrap_or(f64::NAN),
                        model_y: Some(1.0 / (1.0 + p / gk)),
                    });
                }
                self.out.write_panel("report/coherent_fraction", &panel)?;
                self.out.write_table("report/amplitudes", &table)?;
                let mut params = parameter_table(&cf);
                params.push(vec![
                    "lack_of_fit_p".into(),
                    cf.lack_of_fit_p_value().into(),
                    Cell::Missing,
                    "".into(),
                ]);
                self.out.write_table("report/coherent_fraction_fit", &params)?;
            }
        }
        Ok(())
    }

    /// Writes the co, cross and visibility panels of one HOM fit.
    fn hom_panels(&self, stage: Stage, co: &str, cross: &str, fit_name: &str, suffix: &str) -> Result<FitResult, CliError> {
        let (co_hist, _) = self.read_histogram(stage, co)?;
        let (cross_hist, _) = self.read_histogram(stage, cross)?;
        let (fit, _) = self.read_fit(stage, fit_name)?;
        let co_panel = histogram_panel(&co_hist, fit.curves.get("model_co"), "tau_ns", "g2_co");
        let cross_panel = histogram_panel(&cross_hist, fit.curves.get("model_cross"), "tau_ns", "g2_cross");
        self.out.write_panel(&format!("report/{co}"), &co_panel)?;
        self.out.write_panel(&format!("report/{cross}"), &cross_panel)?;

        // V(τ) = 1 − g²_co/g²_cross per bin
        let rows = co_panel
            .rows
            .iter()
            .zip(&cross_panel.rows)
            .filter(|(_, c)| c.y > 0.0)
            .map(|(a, c)| {
                let ratio = a.y / c.y;
                PanelRow {
                    x: a.x,
                    y: 1.0 - ratio,
                    y_err: ratio.abs() * ((a.y_err / a.y).powi(2) + (c.y_err / c.y).powi(2)).sqrt(),
                    model_y: a.model_y.zip(c.model_y).map(|(m, n)| 1.0 - m / n),
                }
            })
            .collect();
        let panel = Panel {
            x_label: "tau_ns".into(),
            y_label: "visibility".into(),
            rows,
        };
        self.out.write_panel(&format!("report/visibility{suffix}"), &panel)?;
        Ok(fit)
    }

    /// Zero-delay cross-polarised coincidences: model, simulation and fit
    /// for both arm configurations.
    fn zero_delay_table(&self, stage: Stage, short: &FitResult, fibre: &FitResult) -> Result<(), CliError> {
        let cfg = &self.config;
        let params = cfg.emitter.params_at(1.0);
        let mix = cfg.mix.mix().map_err(CliError::stage(stage))?;
        let binning = cfg.binning();
        let local_max: Vec<(i64, i64)> = binning.baseline.clone();
        let mut table = Table::new(&["configuration", "arm_loss_db", "source", "g2_cross_zero", "uncertainty"]);
        for (name, label, interferometer, fit) in [
            ("short", "short_cross", cfg.short_interferometer(), short),
            ("fibre", "fibre_cross", cfg.fibre_interferometer(), fibre),
        ] {
            let cross_cfg = interferometer.with_polarization(Polarization::Cross);
            let ts = cross_cfg.transmission_short;
            let r = cross_cfg.effective_transmission_long() / ts;
            // rounded so that 10^(-x/10) round trips print as the configured dB
            let loss = (-10.0 * r.log10() * 1e9).round() / 1e9 + 0.0;
            let model = hom_g2(0.0, &params, &mix, &cross_cfg).map_err(CliError::stage(stage))?;
            table.push(vec![name.into(), loss.into(), "model".into(), model.into(), Cell::Missing]);
            table.push(vec![
                name.into(),
                loss.into(),
                "two_arm_formula".into(),
                (2.0 * r / (1.0 + r).powi(2)).into(),
                Cell::Missing,
            ]);
            let (hist, _) = self.read_histogram(stage, label)?;
            match extract_dip_depth(&hist, 0, 400, &local_max) {
                Ok(dip) => table.push(vec![
                    name.into(),
                    loss.into(),
                    "simulated".into(),
                    dip.minimum.into(),
                    dip.minimum_error.into(),
                ]),
                Err(e) => log::warn!("report: no zero-delay minimum for {label}: {e}"),
            }
            table.push(vec![
                name.into(),
                loss.into(),
                "fit".into(),
                fit.value("g2_cross_zero").into(),
                fit.uncertainty("g2_cross_zero").into(),
            ]);
        }
        self.out.write_table("report/zero_delay_cross", &table)
    }
}

#[derive(Debug, Default)]
struct VisibilityData {
    delay: Vec<f64>,
    visibility: Vec<f64>,
    sigma: Vec<f64>,
}

fn flags(fit: &FitResult) -> Cell {
    let names: Vec<String> = fit
        .flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    Cell::Text(names.join(";"))
}

fn parameter_table(fit: &FitResult) -> Table {
    let mut table = Table::new(&["parameter", "value", "uncertainty", "unit"]);
    for p in &fit.parameters {
        table.push(vec![p.name.as_str().into(), p.value.into(), p.uncertainty.into(), p.unit.as_str().into()]);
    }
    let derived: BTreeMap<_, _> = fit.derived.iter().collect();
    for (name, d) in derived {
        table.push(vec![name.as_str().into(), d.value.into(), d.uncertainty.into(), d.unit.as_str().into()]);
    }
    table.push(vec!["reduced_chi_square".into(), fit.reduced_chi_square.into(), Cell::Missing, "".into()]);
    table
}

/// Histogram bins with the fitted curve where the fit covered them.
fn histogram_panel(
    hist: &CorrelationHistogram,
    model: Option<&rrs_core::fitting::Curve>,
    x_label: &str,
    y_label: &str,
) -> Panel {
    let centers = hist.centers_ns();
    let lookup = |x: f64| {
        let curve = model?;
        let i = curve.x.partition_point(|&c| c < x - 1e-9);
        (i < curve.x.len() && (curve.x[i] - x).abs() <= 1e-9).then(|| curve.y[i])
    };
    let rows = centers
        .iter()
        .zip(hist.normalized())
        .zip(hist.errors())
        .map(|((&x, y), y_err)| PanelRow {
            x,
            y,
            y_err,
            model_y: lookup(x),
        })
        .collect();
    Panel {
        x_label: x_label.into(),
        y_label: y_label.into(),
        rows,
    }
}

fn fitted_michelson(fit: &FitResult, mode: MichelsonMode) -> Option<MichelsonModel> {
    let model = match mode {
        MichelsonMode::NonResonant => MichelsonModel::NonResonant {
            coherence_time: fit.value("coherence_time")?,
            fss: fit.value("fss")?,
            line_ratio: fit.value("line_ratio")?,
        },
        MichelsonMode::Resonant => MichelsonModel::resonant(fit.value("coherent_amplitude")?, fit.value("tau2")?),
    };
    model.validate().ok().map(|_| model)
}

/// Data points with the fitted model; `floor` is a laser breakthrough the
/// fit removed, added back so model and data share one scale.
fn visibility_panel(data: &VisibilityData, model: Option<MichelsonModel>, floor: f64) -> Panel {
    let rows = data
        .delay
        .iter()
        .zip(&data.visibility)
        .zip(&data.sigma)
        .map(|((&x, &y), &y_err)| PanelRow {
            x,
            y,
            y_err,
            model_y: model.and_then(|m| michelson_visibility(x, &m).ok()).map(|v| floor + (1.0 - floor) * v),
        })
        .collect();
    Panel {
        x_label: "delay_ns".into(),
        y_label: "visibility".into(),
        rows,
    }
}
