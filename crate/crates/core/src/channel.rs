//! THz propagation and directional-antenna physics.
//!
//! Everything here works in linear SI units (W, Hz, m, rad). Decibel values
//! are only converted at the configuration boundary via [`db_to_linear`] and
//! friends.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances below this are treated as co-located vehicles and rejected.
pub const MIN_DISTANCE_M: f64 = 0.1;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_linear(dbm) / 1000.0
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    linear_to_db(watt * 1000.0)
}

/// Physical-layer constants shared by every link in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Carrier frequency, Hz.
    pub carrier_frequency: f64,
    /// Speed of light, m/s.
    pub light_speed: f64,
    /// Overall molecular absorption coefficient of the medium, 1/m.
    pub absorption_coefficient: f64,
    /// Johnson-Nyquist noise power, W.
    pub noise_floor: f64,
    /// Channel bandwidth, Hz.
    pub bandwidth: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_frequency: 1.05e12,
            light_speed: 3.0e8,
            absorption_coefficient: 0.07512,
            noise_floor: dbm_to_watt(-77.0),
            bandwidth: 5.0e9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.carrier_frequency > 0.0
            && self.light_speed > 0.0
            && self.absorption_coefficient >= 0.0
            && self.noise_floor > 0.0
            && self.bandwidth > 0.0
            && [
                self.carrier_frequency,
                self.light_speed,
                self.absorption_coefficient,
                self.noise_floor,
                self.bandwidth,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid channel parameters: {self:?}")))
        }
    }

    /// Transmittance τ(d) = e^{-φ(f) d} of a path of length `distance`.
    pub fn transmittance(&self, distance: f64) -> f64 {
        (-self.absorption_coefficient * distance).exp()
    }
}

/// Beam shape of a directional antenna.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    /// Horizontal beamwidth θ, rad.
    pub horizontal_beamwidth: f64,
    /// Vertical beamwidth φ, rad.
    pub vertical_beamwidth: f64,
    /// Ratio of side-lobe to main-lobe power ε.
    pub sidelobe_power_ratio: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        Self {
            horizontal_beamwidth: 10f64.to_radians(),
            vertical_beamwidth: 10f64.to_radians(),
            sidelobe_power_ratio: 0.1,
        }
    }
}

impl AntennaPattern {
    pub fn new(horizontal_beamwidth: f64, vertical_beamwidth: f64, sidelobe_power_ratio: f64) -> Result<Self> {
        let pattern = Self {
            horizontal_beamwidth,
            vertical_beamwidth,
            sidelobe_power_ratio,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    /// Beam solid angle Ω(θ, φ) = 4·arcsin(tan(θ/2)·tan(φ/2)), sr.
    ///
    /// Returns NaN when the product of tangents exceeds one.
    pub fn solid_angle(&self) -> f64 {
        let s = (self.horizontal_beamwidth / 2.0).tan() * (self.vertical_beamwidth / 2.0).tan();
        4.0 * s.asin()
    }

    pub fn validate(&self) -> Result<()> {
        let (theta, phi, eps) = (
            self.horizontal_beamwidth,
            self.vertical_beamwidth,
            self.sidelobe_power_ratio,
        );
        if !(theta > 0.0 && theta < PI) || !(phi > 0.0 && phi < PI) {
            return Err(Error::Domain(format!(
                "beamwidths must lie in (0, π): θ = {theta}, φ = {phi}"
            )));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Domain(format!("side-lobe ratio ε = {eps} outside [0, 1)")));
        }
        self.check_solid_angle()
    }

    fn check_solid_angle(&self) -> Result<()> {
        let omega = self.solid_angle();
        if omega > 0.0 && omega < 4.0 * PI {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "solid angle Ω = {omega} outside (0, 4π) for pattern {self:?}"
            )))
        }
    }
}

/// Main-lobe gain G^M = 4π / ((ε+1)·Ω).
pub fn mainlobe_gain(pattern: &AntennaPattern) -> Result<f64> {
    pattern.check_solid_angle()?;
    if !(pattern.sidelobe_power_ratio >= 0.0) {
        return Err(Error::Domain("negative side-lobe ratio".into()));
    }
    let omega = pattern.solid_angle();
    Ok(4.0 * PI / ((pattern.sidelobe_power_ratio + 1.0) * omega))
}

/// Side-lobe gain G^S = 4πε / ((ε+1)·(4π−Ω)).
pub fn sidelobe_gain(pattern: &AntennaPattern) -> Result<f64> {
    pattern.check_solid_angle()?;
    let eps = pattern.sidelobe_power_ratio;
    if !(eps >= 0.0) {
        return Err(Error::Domain("negative side-lobe ratio".into()));
    }
    let omega = pattern.solid_angle();
    Ok(4.0 * PI * eps / ((eps + 1.0) * (4.0 * PI - omega)))
}

/// Molecular absorption loss L^A = 1/τ(d) = e^{φ(f)·d}.
pub fn absorption_loss(params: &ChannelParams, distance: f64) -> Result<f64> {
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!("distance {distance} must be finite and ≥ 0")));
    }
    Ok((params.absorption_coefficient * distance).exp())
}

/// Free-space spreading loss L^F = (4π f d / c)².
pub fn spreading_loss(params: &ChannelParams, distance: f64) -> Result<f64> {
    check_link_distance(distance)?;
    let x = 4.0 * PI * params.carrier_frequency * distance / params.light_speed;
    Ok(x * x)
}

/// Received power S = P·Gᵀ·Gᴿ / (L^A·L^F), W.
pub fn received_power(tx_power: f64, tx_gain: f64, rx_gain: f64, params: &ChannelParams, distance: f64) -> Result<f64> {
    let la = absorption_loss(params, distance)?;
    let lf = spreading_loss(params, distance)?;
    Ok(tx_power * tx_gain * rx_gain / (la * lf))
}

/// One interfering emission reaching the victim receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererPath {
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub distance: f64,
}

/// Noise at a receiver: thermal floor N₀ plus the power molecules absorb
/// from interfering emissions and re-radiate, Σ P·Gᵀ·Gᴿ·(1−τ(d))/L^F.
pub fn molecular_absorption_noise<I>(params: &ChannelParams, interferers: I) -> Result<f64>
where
    I: IntoIterator<Item = InterfererPath>,
{
    let mut noise = params.noise_floor;
    for path in interferers {
        let lf = spreading_loss(params, path.distance)?;
        let absorbed = 1.0 - params.transmittance(path.distance);
        noise += path.tx_power * path.tx_gain * path.rx_gain * absorbed / lf;
    }
    Ok(noise)
}

pub(crate) fn check_link_distance(distance: f64) -> Result<()> {
    if distance.is_finite() && distance >= MIN_DISTANCE_M {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "link distance {distance} m below the {MIN_DISTANCE_M} m minimum"
        )))
    }
}
