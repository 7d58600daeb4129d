//! Link budget and closed-form detection model.
//!
//! The end-to-end transmittance composes fiber attenuation, MUX/DEMUX
//! insertion loss and detector efficiency. Gains and QBERs of weak coherent
//! pulses follow the standard Poissonian detection model
//! `Q_λ = 1 − (1−p_bg)·e^(−ηλ)` and `E_λ·Q_λ = p_bg/2 + e_d·(1 − e^(−ηλ))`,
//! which double as oracles for the photon-level Monte Carlo.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::{db_to_linear, real, Real};
use crate::keyrate::{ClassGain, GainSet};
use crate::protocol::{IntensitySet, ReceiverKind};
use crate::wdm::{ChannelId, ChannelPlan, WdmError};

/// Physical parameters of one quantum channel, transmitter output to
/// detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct LinkBudget<R: Real> {
    pub fiber_length_km: R,
    /// Fiber loss coefficient, dB/km.
    pub attenuation_db_per_km: R,
    /// MUX+DEMUX round-trip insertion loss of the carrying channel, dB.
    pub mux_demux_insertion_db: R,
    /// Detector efficiency η_det.
    pub detector_efficiency: R,
    /// Dark count probability per detector per gate.
    pub dark_count_prob_per_gate: R,
    /// Interferometer fringe visibility V; the intrinsic misalignment error
    /// is e_d = (1−V)/2.
    pub visibility: R,
    /// Per-slot probability that leaked light from other channels produces a
    /// background photon at the decoder input (0 for a solo channel).
    pub crosstalk_background_prob: R,
}

impl<R: Real> Default for LinkBudget<R> {
    /// The demonstrated 25 km link at worst-case insertion loss, ideal
    /// visibility, and the default dark count placeholder.
    fn default() -> Self {
        Self {
            fiber_length_km: real(25.0),
            attenuation_db_per_km: real(0.2),
            mux_demux_insertion_db: real(5.2),
            detector_efficiency: real(0.15),
            dark_count_prob_per_gate: real(1.5e-6),
            visibility: R::one(),
            crosstalk_background_prob: R::zero(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("invalid link budget: {0}")]
    Invalid(String),
    #[error(
        "target QBER {target} is unachievable: below the background-induced floor {floor}"
    )]
    Unachievable { target: f64, floor: f64 },
    #[error(
        "target QBER {target} is unachievable: above the maximum {max} reached at e_d = 1/2"
    )]
    AboveMaximum { target: f64, max: f64 },
}

impl<R: Real> LinkBudget<R> {
    pub fn validate(&self) -> Result<(), LinkError> {
        let unit = |x: R| x >= R::zero() && x <= R::one();
        if !(self.fiber_length_km >= R::zero()) {
            return Err(LinkError::Invalid("fiber_length_km must be >= 0".into()));
        }
        if !(self.attenuation_db_per_km >= R::zero()) {
            return Err(LinkError::Invalid(
                "attenuation_db_per_km must be >= 0".into(),
            ));
        }
        if !(self.mux_demux_insertion_db >= R::zero()) {
            return Err(LinkError::Invalid(
                "mux_demux_insertion_db must be >= 0".into(),
            ));
        }
        if !(self.detector_efficiency > R::zero() && self.detector_efficiency <= R::one()) {
            return Err(LinkError::Invalid(
                "detector_efficiency must lie in (0, 1]".into(),
            ));
        }
        if !unit(self.dark_count_prob_per_gate) {
            return Err(LinkError::Invalid(
                "dark_count_prob_per_gate must lie in [0, 1]".into(),
            ));
        }
        if !unit(self.visibility) {
            return Err(LinkError::Invalid("visibility must lie in [0, 1]".into()));
        }
        if !unit(self.crosstalk_background_prob) {
            return Err(LinkError::Invalid(
                "crosstalk_background_prob must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// End-to-end transmittance `η = η_det · 10^(−(α·L + IL)/10)`.
    pub fn transmittance(&self) -> R {
        let loss_db = self.attenuation_db_per_km * self.fiber_length_km
            + self.mux_demux_insertion_db;
        self.detector_efficiency * db_to_linear(-loss_db)
    }

    /// Intrinsic misalignment error `e_d = (1 − V)/2`.
    pub fn misalignment_error(&self) -> R {
        (R::one() - self.visibility) / real(2.0)
    }

    /// Replaces the visibility so the misalignment error becomes `e_d`.
    pub fn with_misalignment_error(mut self, e_d: R) -> Self {
        self.visibility = R::one() - real::<R>(2.0) * e_d;
        self
    }

    /// Transmittance as seen by the decoder output the receiver actually
    /// monitors: the single-SPD receiver watches one of two ports, halving
    /// the conclusive-detection efficiency.
    pub fn effective_eta(&self, receiver: ReceiverKind) -> R {
        match receiver {
            ReceiverKind::DoubleSpd => self.transmittance(),
            ReceiverKind::SingleSpd => self.transmittance() / real(2.0),
        }
    }

    /// Per-slot probability of at least one background (non-signal) click:
    /// dark counts on every detector plus leaked crosstalk light, which
    /// splits evenly between the decoder ports.
    pub fn background_click_prob(&self, receiver: ReceiverKind) -> R {
        let dark = self.dark_count_prob_per_gate;
        let xt = self.crosstalk_background_prob;
        match receiver {
            // 1 − (1−d)²(1−xt), expanded to avoid cancellation at tiny d
            ReceiverKind::DoubleSpd => {
                let dark_any = dark * (real::<R>(2.0) - dark);
                dark_any + xt * (R::one() - dark_any)
            }
            // 1 − (1−d)(1−xt/2): only half the leaked light reaches the
            // single monitored port
            ReceiverKind::SingleSpd => {
                let half_xt = xt / real(2.0);
                dark + half_xt * (R::one() - dark)
            }
        }
    }
}

/// Gain of a weak coherent pulse of mean photon number `lambda`:
/// `Q_λ = 1 − (1−p_bg)·e^(−ηλ)`.
pub fn analytic_gain<R: Real>(lambda: R, eta: R, background_prob: R) -> R {
    // equivalently p_bg + (1−p_bg)·(1 − e^(−ηλ)), stable for small ηλ
    let signal = -(-(eta * lambda)).exp_m1();
    background_prob + (R::one() - background_prob) * signal
}

/// QBER of a weak coherent pulse, from
/// `E_λ·Q_λ = p_bg/2 + e_d·(1 − e^(−ηλ))`.
///
/// Returns `None` when the gain vanishes (no detections to be wrong about).
pub fn analytic_qber<R: Real>(
    lambda: R,
    eta: R,
    background_prob: R,
    misalignment: R,
) -> Option<R> {
    let gain = analytic_gain(lambda, eta, background_prob);
    if gain == R::zero() {
        return None;
    }
    let signal = -(-(eta * lambda)).exp_m1(); // 1 − e^(−ηλ)
    Some((background_prob / real(2.0) + misalignment * signal) / gain)
}

/// Closed-form gain/QBER pairs for all three intensity classes of one
/// receiver, the analytic counterpart of a Monte Carlo run.
pub fn analytic_gain_set<R: Real>(
    link: &LinkBudget<R>,
    receiver: ReceiverKind,
    intensities: &IntensitySet<R>,
) -> GainSet<R> {
    let eta = link.effective_eta(receiver);
    let p_bg = link.background_click_prob(receiver);
    let e_d = link.misalignment_error();
    let class = |lambda: R| ClassGain {
        gain: analytic_gain(lambda, eta, p_bg),
        qber: analytic_qber(lambda, eta, p_bg, e_d).unwrap_or(R::zero()),
    };
    GainSet {
        mu: class(intensities.mu),
        nu1: class(intensities.nu1),
        nu2: class(intensities.nu2),
    }
}

/// Conclusive-detection probability for one photon reaching the decoder in a
/// matched-basis slot. The two-detector receiver always fires some port; the
/// one-detector receiver watches the right port half the time regardless of
/// visibility, which is the 3 dB efficiency sacrifice.
pub fn matched_basis_detection_prob<R: Real>(receiver: ReceiverKind, _visibility: R) -> R {
    match receiver {
        ReceiverKind::DoubleSpd => R::one(),
        ReceiverKind::SingleSpd => real(0.5),
    }
}

/// Solves `E_μ(e_d) = target` for the misalignment error by monotone
/// bisection on [0, 1/2], holding the background probability fixed.
///
/// Returns `(e_d, p_bg)`; the QBER is matched to within 1e−6 absolute.
pub fn calibrate<R: Real>(
    target_qber: R,
    link: &LinkBudget<R>,
    receiver: ReceiverKind,
    lambda_mu: R,
) -> Result<(R, R), LinkError> {
    let eta = link.effective_eta(receiver);
    let p_bg = link.background_click_prob(receiver);
    if analytic_gain(lambda_mu, eta, p_bg) == R::zero() {
        return Err(LinkError::Invalid(
            "gain vanishes (eta·lambda and p_bg both zero); nothing to calibrate".into(),
        ));
    }
    let tolerance = real::<R>(1e-6);
    let qber_at = |e_d: R| {
        analytic_qber(lambda_mu, eta, p_bg, e_d)
            .expect("gain is positive whenever eta*lambda > 0 or p_bg > 0")
    };

    let mut lo = R::zero();
    let mut hi = real::<R>(0.5);
    let floor = qber_at(lo);
    let ceiling = qber_at(hi);
    if target_qber < floor - tolerance {
        return Err(LinkError::Unachievable {
            target: target_qber.to_f64().unwrap_or(f64::NAN),
            floor: floor.to_f64().unwrap_or(f64::NAN),
        });
    }
    if target_qber > ceiling + tolerance {
        return Err(LinkError::AboveMaximum {
            target: target_qber.to_f64().unwrap_or(f64::NAN),
            max: ceiling.to_f64().unwrap_or(f64::NAN),
        });
    }
    if (floor - target_qber).abs() <= tolerance {
        return Ok((lo, p_bg));
    }
    if (ceiling - target_qber).abs() <= tolerance {
        return Ok((hi, p_bg));
    }
    for _ in 0..200 {
        let mid = (lo + hi) / real(2.0);
        let val = qber_at(mid);
        if (val - target_qber).abs() <= tolerance {
            return Ok((mid, p_bg));
        }
        if val < target_qber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(((lo + hi) / real(2.0), p_bg))
}

/// Per-slot probability that light leaked from the active aggressor channels
/// produces a background photon at the victim receiver's decoder input.
///
/// Each aggressor contributes its DEMUX leakage fraction times its average
/// transmitted photon number, attenuated by the victim's full optical path
/// (fiber + insertion loss + detector efficiency) since the channels
/// co-propagate, and scaled by the temporal overlap of the asynchronous
/// aggressor pulses with the victim's detection gate.
pub fn crosstalk_click_prob<R: Real>(
    plan: &ChannelPlan<R>,
    victim: ChannelId,
    aggressors: &[(ChannelId, R)],
    link: &LinkBudget<R>,
    gate_overlap: R,
) -> Result<R, WdmError> {
    let mut leaked_photons = R::zero();
    for &(chan, mean_photons) in aggressors {
        if chan == victim {
            continue;
        }
        let suppression = plan.suppression_db(victim, chan)?;
        leaked_photons += db_to_linear(-suppression) * mean_photons;
    }
    Ok(leaked_photons * link.transmittance() * gate_overlap)
}
