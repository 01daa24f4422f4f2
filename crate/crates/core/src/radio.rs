//! Broadcast downlink and OFDMA uplink rates.
//!
//! Rates use the natural logarithm, `W ln(1 + SNR)`, so they are in
//! nats per second. Payload sizes are still counted in bits; the conversion
//! factor is absorbed into the free bandwidth parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear power in watts for a level in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Total bandwidth `W`, Hz.
    pub bandwidth_hz: f64,
    /// Noise power `σ₀²`, W.
    pub noise_power_w: f64,
    /// Path-loss exponent `γ`.
    pub pathloss_exp: f64,
    /// Channel gain of the edge server's downlink, `h_r`.
    pub ec_gain: f64,
    /// Edge server transmit power `φ_r`, W.
    pub ec_power_w: f64,
    /// Distances below this are clamped before applying `d^{-γ}`.
    pub min_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2e7,
            noise_power_w: dbm_to_watts(-100.0),
            pathloss_exp: 3.0,
            ec_gain: 1.0,
            ec_power_w: dbm_to_watts(40.0),
            min_distance_m: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("pathloss_exp", self.pathloss_exp),
            ("ec_gain", self.ec_gain),
            ("ec_power_w", self.ec_power_w),
            ("min_distance_m", self.min_distance_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("channel.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn path_gain(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) {
            return Err(Error::invalid(format!("distance must be > 0, got {distance_m}")));
        }
        Ok(distance_m.max(self.min_distance_m).powf(-self.pathloss_exp))
    }

    /// `h·φ·d^{-γ}/σ₀²` per watt of transmit power, i.e. the SNR slope.
    pub fn snr_per_watt(&self, gain: f64, distance_m: f64) -> Result<f64> {
        Ok(gain * self.path_gain(distance_m)? / self.noise_power_w)
    }

    /// `ln(1 + h φ d^{-γ} / σ₀²)`, nats per second per hertz.
    pub fn spectral_efficiency(&self, gain: f64, power_w: f64, distance_m: f64) -> Result<f64> {
        if !(power_w >= 0.0) {
            return Err(Error::invalid(format!("transmit power must be >= 0, got {power_w}")));
        }
        Ok((self.snr_per_watt(gain, distance_m)? * power_w).ln_1p())
    }
}

/// Broadcast rate, set by the worst vehicle in the set.
pub fn downlink_rate(ch: &ChannelParams, distances_m: &[f64]) -> Result<f64> {
    if distances_m.is_empty() {
        return Err(Error::EmptyVehicleSet);
    }
    let mut worst = f64::INFINITY;
    for &d in distances_m {
        let r = ch.bandwidth_hz * ch.spectral_efficiency(ch.ec_gain, ch.ec_power_w, d)?;
        worst = worst.min(r);
    }
    Ok(worst)
}

/// OFDMA uplink rate of one vehicle holding a `share` of the band.
pub fn uplink_rate(
    ch: &ChannelParams,
    gain: f64,
    power_w: f64,
    distance_m: f64,
    share: f64,
) -> Result<f64> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(Error::invalid(format!("bandwidth share must be in (0, 1], got {share}")));
    }
    Ok(share * ch.bandwidth_hz * ch.spectral_efficiency(gain, power_w, distance_m)?)
}
