//! Unit conventions: times in ns (time tags in integer ps), rates in 1/ns,
//! energies in µeV.

/// Planck constant in µeV·ns.
pub const PLANCK_UEV_NS: f64 = 4.1357;

/// Reduced Planck constant in µeV·ns.
pub const HBAR_UEV_NS: f64 = PLANCK_UEV_NS / std::f64::consts::TAU;

pub const PS_PER_NS: f64 = 1_000.0;

/// Vacuum speed of light in km/ns.
pub const SPEED_OF_LIGHT_KM_PER_NS: f64 = 2.997_924_58e-4;

pub fn ns_to_ps(t_ns: f64) -> i64 {
    (t_ns * PS_PER_NS).round() as i64
}

pub fn ps_to_ns(t_ps: i64) -> f64 {
    t_ps as f64 / PS_PER_NS
}

/// Angular rate (rad/ns) corresponding to an energy in µeV.
pub fn energy_to_angular_rate(energy_uev: f64) -> f64 {
    energy_uev / HBAR_UEV_NS
}

/// Energy in µeV corresponding to an angular rate in rad/ns.
pub fn angular_rate_to_energy(rate: f64) -> f64 {
    rate * HBAR_UEV_NS
}

/// Linear transmission for an attenuation in dB.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmission_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Laser attenuator setting (dB) to a linear power relative to the
/// unattenuated laser.
pub fn attenuation_db_to_linear_power(db: f64) -> f64 {
    db_to_transmission(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for db in [0.0, 3.0, 4.325, 5.8, 23.0] {
            assert!((transmission_to_db(db_to_transmission(db)) - db).abs() < 1e-12);
        }
        assert!((db_to_transmission(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn energy_rate_conversion() {
        // 1 µeV ↔ 1/ħ rad/ns
        let r = energy_to_angular_rate(1.0);
        assert!((r - 1.0 / HBAR_UEV_NS).abs() < 1e-12);
        assert!((angular_rate_to_energy(r) - 1.0).abs() < 1e-12);
    }
}
