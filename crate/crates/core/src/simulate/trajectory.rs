use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Result};
use crate::model::EmitterParams;
use crate::units::ns_to_ps;

/// Emission times of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emissions {
    /// Non-decreasing emission times, ps.
    pub times: Vec<i64>,
    /// ps
    pub duration: i64,
    pub seed: u64,
    /// T₂ exceeded 2T₁; pure dephasing was clamped to zero.
    pub dephasing_clamped: bool,
}

impl Emissions {
    pub fn mean_rate_per_ns(&self) -> f64 {
        self.times.len() as f64 / (self.duration as f64 / 1e3)
    }
}

/// Distribution of the time between consecutive emissions.
///
/// After every jump the emitter is back in its ground state, so the waiting
/// times are independent and identically distributed. Their survival
/// function is the trace of the conditional density matrix evolved without
/// jumps; it is tabulated once and inverted by interpolation.
#[derive(Debug, Clone)]
pub struct WaitingTimeDistribution {
    step: f64,
    survival: Vec<f64>,
    /// Exponential decay rate of the survival beyond the table, 1/ns.
    tail_rate: f64,
    pub dephasing_clamped: bool,
}

const MAX_TABLE: usize = 4_000_000;
const SURVIVAL_FLOOR: f64 = 1e-13;

impl WaitingTimeDistribution {
    /// Tabulates the survival function up to `horizon` ns at most.
    pub fn new(params: &EmitterParams, horizon: f64) -> Result<Self> {
        params.validate_with_slack(f64::INFINITY)?;
        check_positive("horizon", horizon)?;
        let gamma = 1.0 / params.t1;
        let raw_dephasing = params.pure_dephasing_rate();
        let dephasing_clamped = raw_dephasing < 0.0;
        if dephasing_clamped {
            log::warn!(
                "T2 = {} ns exceeds 2*T1 = {} ns; pure dephasing clamped to zero",
                params.t2,
                2.0 * params.t1
            );
        }
        // coherence decay rate 1/T₂ = Γ/2 + γ_φ
        let coherence_rate = 0.5 * gamma + raw_dephasing.max(0.0);
        let rabi = params.rabi;

        let fastest = gamma.max(coherence_rate).max(rabi);
        let step = (0.0025 / fastest).min(horizon / 16.0);

        // Conditional evolution: ρee, ρgg and y = Im ρeg (Re ρeg stays 0).
        let deriv = |s: [f64; 3]| -> [f64; 3] {
            let [pe, pg, y] = s;
            [
                -rabi * y - gamma * pe,
                rabi * y,
                0.5 * rabi * (pe - pg) - coherence_rate * y,
            ]
        };
        let mut state = [0.0, 1.0, 0.0];
        let mut survival = vec![1.0];
        let max_len = ((horizon / step).ceil() as usize + 1).min(MAX_TABLE);
        while survival.len() < max_len {
            let k1 = deriv(state);
            let k2 = deriv(add(state, k1, 0.5 * step));
            let k3 = deriv(add(state, k2, 0.5 * step));
            let k4 = deriv(add(state, k3, step));
            for i in 0..3 {
                state[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let s = (state[0] + state[1]).clamp(0.0, 1.0);
            survival.push(s.min(*survival.last().unwrap()));
            if s < SURVIVAL_FLOOR {
                break;
            }
        }
        let n = survival.len();
        let back = (n / 10).max(1);
        let (s_end, s_prev) = (survival[n - 1], survival[n - 1 - back]);
        let tail_rate = if s_end > 0.0 && s_prev > s_end {
            (s_prev / s_end).ln() / (back as f64 * step)
        } else {
            0.0
        };
        Ok(Self {
            step,
            survival,
            tail_rate,
            dephasing_clamped,
        })
    }

    pub fn survival(&self, t: f64) -> f64 {
        let x = t / self.step;
        let i = x.floor() as usize;
        if i + 1 >= self.survival.len() {
            let end = (self.survival.len() - 1) as f64 * self.step;
            return self.survival.last().unwrap() * (-self.tail_rate * (t - end)).exp();
        }
        let f = x - i as f64;
        self.survival[i] * (1.0 - f) + self.survival[i + 1] * f
    }

    /// Waiting time (ns) whose survival equals `u`; infinite for an
    /// emitter that never emits.
    pub fn invert(&self, u: f64) -> f64 {
        let last = *self.survival.last().unwrap();
        if u < last || u <= 0.0 {
            if self.tail_rate <= 0.0 || last <= 0.0 {
                return f64::INFINITY;
            }
            let end = (self.survival.len() - 1) as f64 * self.step;
            return end + (last / u).ln() / self.tail_rate;
        }
        // first index whose survival drops below u
        let i = self.survival.partition_point(|&s| s >= u);
        if i == 0 {
            return 0.0;
        }
        let (s0, s1) = (self.survival[i - 1], self.survival[i]);
        let f = if s0 > s1 { (s0 - u) / (s0 - s1) } else { 0.0 };
        (i as f64 - 1.0 + f) * self.step
    }

    pub fn mean(&self) -> f64 {
        // ∫ S(t) dt by the trapezoid rule plus the exponential tail
        let body: f64 = self
            .survival
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.step)
            .sum();
        let tail = if self.tail_rate > 0.0 {
            self.survival.last().unwrap() / self.tail_rate
        } else if *self.survival.last().unwrap() > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        body + tail
    }
}

fn add(s: [f64; 3], k: [f64; 3], h: f64) -> [f64; 3] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

/// Quantum-jump trajectory of the resonantly driven emitter over `duration`
/// ns, starting in the ground state at t = 0.
pub fn simulate_emission(params: &EmitterParams, duration: f64, seed: u64) -> Result<Emissions> {
    check_positive("duration", duration)?;
    let waits = WaitingTimeDistribution::new(params, duration)?;
    let mut rng = super::rng(seed);
    let mut t = 0.0;
    let mut times = Vec::with_capacity((duration / waits.mean().max(1e-9)).min(1e8) as usize + 16);
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        t += waits.invert(u);
        if !(t <= duration) {
            break;
        }
        times.push(ns_to_ps(t));
    }
    Ok(Emissions {
        times,
        duration: ns_to_ps(duration),
        seed,
        dephasing_clamped: waits.dephasing_clamped,
    })
}
