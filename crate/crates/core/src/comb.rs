//! Kerr soliton comb source model.
//!
//! The comb is an exact frequency grid `f_N = f_0 + N·Δf` under a smooth
//! squared-hyperbolic-secant spectral envelope, the stationary single-soliton
//! spectrum. Line powers are deterministic; the envelope is parameterized by
//! its 3-dB bandwidth and clamped at a flat noise floor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::{acosh, ln_cosh, real, Real};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Converts a vacuum wavelength in nm to an optical frequency in Hz,
/// rounded to the nearest hertz.
///
/// Rounding keeps grid arithmetic exact: integer-hertz frequencies below
/// 2^53 add and subtract without floating-point error.
pub fn frequency_hz_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    (SPEED_OF_LIGHT_M_PER_S / (wavelength_nm * 1e-9)).round()
}

/// Parameters of the soliton comb spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CombSpec<R: Real> {
    /// Frequency of the pump line (comb index 0), Hz.
    pub pump_frequency_hz: R,
    /// Comb line spacing (resonator free spectral range), Hz.
    pub comb_spacing_hz: R,
    /// Full width of the envelope at its half-power points, Hz.
    pub bandwidth_3db_hz: R,
    /// Power of the strongest line, dBm.
    pub peak_power_dbm: R,
    /// Flat background level, dBm.
    pub noise_floor_dbm: R,
}

/// One comb line: grid index, exact frequency, clamped power and SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CombLine<R: Real> {
    /// Signed grid index, 0 at the pump.
    pub index: i32,
    /// `pump_frequency_hz + index · comb_spacing_hz`, Hz.
    pub frequency_hz: R,
    /// Line power after clamping at the noise floor, dBm.
    pub power_dbm: R,
    /// `power_dbm − noise_floor_dbm`, dB.
    pub snr_db: R,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombError {
    #[error("comb spec invalid: {0}")]
    Invalid(&'static str),
}

impl<R: Real> Default for CombSpec<R> {
    /// Spectrum of the demonstrated single-soliton state: 49 GHz spacing,
    /// 3.2 THz 3-dB bandwidth, 1556.09 nm pump, peak 20 dB above the floor.
    /// Absolute peak power is not pinned by measurement; 0 dBm is a
    /// configuration default.
    fn default() -> Self {
        Self {
            pump_frequency_hz: real(frequency_hz_from_wavelength_nm(1556.09)),
            comb_spacing_hz: real(49e9),
            bandwidth_3db_hz: real(3.2e12),
            peak_power_dbm: real(0.0),
            noise_floor_dbm: real(-20.0),
        }
    }
}

impl<R: Real> CombSpec<R> {
    pub fn validate(&self) -> Result<(), CombError> {
        if !(self.comb_spacing_hz > R::zero()) {
            return Err(CombError::Invalid("comb_spacing_hz must be positive"));
        }
        if !(self.bandwidth_3db_hz > R::zero()) {
            return Err(CombError::Invalid("bandwidth_3db_hz must be positive"));
        }
        if !(self.peak_power_dbm > self.noise_floor_dbm) {
            return Err(CombError::Invalid(
                "peak_power_dbm must exceed noise_floor_dbm",
            ));
        }
        if !(self.pump_frequency_hz > R::zero()) {
            return Err(CombError::Invalid("pump_frequency_hz must be positive"));
        }
        Ok(())
    }

    /// Frequency of line `index`, computed from the index so the grid stays
    /// exact (no iterative accumulation).
    pub fn line_frequency(&self, index: i32) -> R {
        self.pump_frequency_hz + real::<R>(index as f64) * self.comb_spacing_hz
    }

    /// Envelope scale: `sech²((f−f₀)/B)` reaches half power at
    /// `bandwidth_3db_hz / 2`, so `B = (bw/2)/arccosh(√2)`.
    pub fn envelope_scale_hz(&self) -> R {
        let half = self.bandwidth_3db_hz / real(2.0);
        half / acosh(real::<R>(2.0).sqrt())
    }

    /// Envelope attenuation relative to the peak, dB (non-positive, 0 at the pump).
    pub fn envelope_db(&self, offset_hz: R) -> R {
        if offset_hz == R::zero() {
            return R::zero();
        }
        let x = offset_hz.abs() / self.envelope_scale_hz();
        // 10·log10(sech²(x)) = −20·ln(cosh x)/ln 10
        -real::<R>(20.0) * ln_cosh(x) / R::LN_10()
    }

    /// Envelope power of line `index` before clamping, dBm.
    fn unclamped_line_power_dbm(&self, index: i32) -> R {
        let offset = real::<R>(index as f64) * self.comb_spacing_hz;
        self.peak_power_dbm + self.envelope_db(offset)
    }

    /// Line power clamped at the noise floor, dBm.
    pub fn line_power_dbm(&self, index: i32) -> R {
        self.unclamped_line_power_dbm(index).max(self.noise_floor_dbm)
    }

    /// Full description of line `index`.
    pub fn line(&self, index: i32) -> CombLine<R> {
        let power_dbm = self.line_power_dbm(index);
        CombLine {
            index,
            frequency_hz: self.line_frequency(index),
            power_dbm,
            snr_db: power_dbm - self.noise_floor_dbm,
        }
    }

    /// All lines whose envelope power sits at least `snr_threshold_db` above
    /// the noise floor, in ascending index order (symmetric about the pump).
    ///
    /// The filter uses the unclamped envelope, so a threshold of 0 dB selects
    /// exactly the lines that genuinely reach the floor rather than every
    /// clamped line.
    pub fn usable_lines(&self, snr_threshold_db: R) -> Vec<CombLine<R>> {
        assert!(
            snr_threshold_db >= R::zero(),
            "snr_threshold_db must be non-negative"
        );
        let headroom_db = self.peak_power_dbm - self.noise_floor_dbm - snr_threshold_db;
        if headroom_db < R::zero() {
            return Vec::new();
        }
        // Invert the envelope: sech²(x) ≥ 10^(−d/10) ⟺ x ≤ arccosh(10^(d/20)).
        let x_max = acosh(real::<R>(10.0).powf(headroom_db / real(20.0)));
        let offset_max = x_max * self.envelope_scale_hz();
        let mut n = (offset_max / self.comb_spacing_hz)
            .floor()
            .to_i64()
            .unwrap_or(0)
            .max(0) as i32;
        // Guard the boundary against rounding in the inversion.
        let passes = |idx: i32| {
            self.unclamped_line_power_dbm(idx) - self.noise_floor_dbm >= snr_threshold_db
        };
        while passes(n + 1) {
            n += 1;
        }
        while n > 0 && !passes(n) {
            n -= 1;
        }
        (-n..=n).map(|idx| self.line(idx)).collect()
    }
}
