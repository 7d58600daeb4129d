//! Asymptotic two-decoy-state analysis and secret key rate.
//!
//! From the measured gains and QBERs of the signal and two decoy classes,
//! bound the vacuum yield, the single-photon yield and the single-photon
//! error rate, then evaluate the standard asymptotic rate
//! `r = q·p(μ)·[Q₁(1 − H₂(e₁)) − Q_μ·f·H₂(E_μ)]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::{real, Real};
use crate::protocol::{IntensityClass, IntensitySet, ProtocolParams};

/// Binary Shannon entropy in bits, `H₂(x) = −x·log₂x − (1−x)·log₂(1−x)`,
/// extended by continuity to `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy<R: Real>(x: R) -> Result<R, EntropyError> {
    if !(x >= R::zero() && x <= R::one()) {
        return Err(EntropyError::Domain(x.to_f64().unwrap_or(f64::NAN)));
    }
    if x == R::zero() || x == R::one() {
        return Ok(R::zero());
    }
    let complement = R::one() - x;
    Ok(-x * x.log2() - complement * complement.log2())
}

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("binary entropy argument {0} outside [0, 1]")]
    Domain(f64),
}

/// Gain and QBER of one intensity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ClassGain<R: Real> {
    /// Q_λ: probability per sent pulse of a conclusive detection.
    pub gain: R,
    /// E_λ: error fraction among basis-matched conclusive detections.
    pub qber: R,
}

/// Measured (or model-generated) gains for all three classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct GainSet<R: Real> {
    pub mu: ClassGain<R>,
    pub nu1: ClassGain<R>,
    pub nu2: ClassGain<R>,
}

impl<R: Real> GainSet<R> {
    pub fn class(&self, class: IntensityClass) -> ClassGain<R> {
        match class {
            IntensityClass::Mu => self.mu,
            IntensityClass::Nu1 => self.nu1,
            IntensityClass::Nu2 => self.nu2,
        }
    }
}

/// Decoy-state bounds extracted from a [`GainSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct YieldBounds<R: Real> {
    /// Lower bound on the vacuum (background) yield Y₀.
    pub y0_lower: R,
    /// Lower bound on the single-photon yield Y₁.
    pub y1_lower: R,
    /// Upper bound on the single-photon error rate e₁.
    pub e1_upper: R,
}

#[derive(Debug, Error, PartialEq)]
pub enum DecoyError {
    #[error(
        "degenerate intensities: mu·nu1 − mu·nu2 − nu1² + nu2² = {denominator} \
         must be positive (requires nu2 < nu1 and nu1 + nu2 < mu)"
    )]
    DegenerateIntensities { denominator: f64 },
    #[error(
        "single-photon yield lower bound {y1_lower} is not positive; \
         the secret key rate is forced to zero"
    )]
    VanishingYield { y1_lower: f64 },
}

/// Two-weak-decoy bounds on (Y₀, Y₁, e₁), clamped to [0, 1].
///
/// With Q·e^λ an exact Poisson mixture of per-photon-number yields, the
/// returned `y1_lower` never exceeds the true Y₁ and `e1_upper` never falls
/// below the true e₁.
pub fn decoy_bounds<R: Real>(
    gains: &GainSet<R>,
    intensities: &IntensitySet<R>,
) -> Result<YieldBounds<R>, DecoyError> {
    let (mu, nu1, nu2) = (intensities.mu, intensities.nu1, intensities.nu2);
    let denominator = mu * nu1 - mu * nu2 - nu1 * nu1 + nu2 * nu2;
    if !(denominator > R::zero()) {
        return Err(DecoyError::DegenerateIntensities {
            denominator: denominator.to_f64().unwrap_or(f64::NAN),
        });
    }
    let unit = |x: R| x.max(R::zero()).min(R::one());

    let q_mu_e = gains.mu.gain * mu.exp();
    let q_nu1_e = gains.nu1.gain * nu1.exp();
    let q_nu2_e = gains.nu2.gain * nu2.exp();

    let y0_raw = (nu1 * q_nu2_e - nu2 * q_nu1_e) / (nu1 - nu2);
    let y0_lower = unit(y0_raw);

    let y1_raw = (mu / denominator)
        * (q_nu1_e - q_nu2_e - ((nu1 * nu1 - nu2 * nu2) / (mu * mu)) * (q_mu_e - y0_lower));
    if !(y1_raw > R::zero()) {
        return Err(DecoyError::VanishingYield {
            y1_lower: y1_raw.to_f64().unwrap_or(f64::NAN),
        });
    }
    let y1_lower = y1_raw.min(R::one());

    let e1_raw = (gains.nu1.qber * q_nu1_e - gains.nu2.qber * q_nu2_e)
        / ((nu1 - nu2) * y1_lower);
    Ok(YieldBounds {
        y0_lower,
        y1_lower,
        e1_upper: unit(e1_raw),
    })
}

/// Post-processing parameters of the rate formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct RateParams<R: Real> {
    /// Error-correction inefficiency f_ec ≥ 1.
    pub error_correction_inefficiency: R,
    /// Basis-sift factor q (1/2 for balanced bases).
    pub sift_factor: R,
    /// Fraction of wall-clock time producing key after all overheads.
    pub duty_factor: R,
}

impl<R: Real> Default for RateParams<R> {
    fn default() -> Self {
        Self {
            error_correction_inefficiency: real(1.16),
            sift_factor: real(0.5),
            duty_factor: R::one(),
        }
    }
}

/// Decoy bounds plus the resulting secret fraction and key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct KeyRateReport<R: Real> {
    pub y0_lower: R,
    pub y1_lower: R,
    pub e1_upper: R,
    /// Lower bound on the single-photon gain Q₁ = Y₁·μ·e^(−μ).
    pub q1_lower: R,
    /// Secret bits per transmitted pulse (clamped at 0).
    pub r_per_pulse: R,
    /// Secret key rate at the configured clock and duty factor, bits/s.
    pub skr_bps: R,
}

impl<R: Real> KeyRateReport<R> {
    /// Report for a channel that yields no key.
    pub fn zero(bounds: Option<YieldBounds<R>>) -> Self {
        let b = bounds.unwrap_or(YieldBounds {
            y0_lower: R::zero(),
            y1_lower: R::zero(),
            e1_upper: R::one(),
        });
        Self {
            y0_lower: b.y0_lower,
            y1_lower: b.y1_lower,
            e1_upper: b.e1_upper,
            q1_lower: R::zero(),
            r_per_pulse: R::zero(),
            skr_bps: R::zero(),
        }
    }
}

/// Evaluates the asymptotic secret key rate from bounds already in hand.
///
/// `r = q·p(μ)·[Q₁(1 − H₂(e₁)) − Q_μ·f_ec·H₂(E_μ)]`, clamped at zero;
/// `skr = r · clock · duty`. A signal QBER or single-photon error bound at
/// or above 1/2 forces the corresponding term to its worthless limit.
pub fn secret_key_rate<R: Real>(
    gains: &GainSet<R>,
    bounds: &YieldBounds<R>,
    params: &ProtocolParams<R>,
    rate: &RateParams<R>,
) -> KeyRateReport<R> {
    let mu = params.intensities.mu;
    let half = real::<R>(0.5);
    let q1_lower = bounds.y1_lower * mu * (-mu).exp();

    let e_mu = gains.mu.qber;
    let r_per_pulse = if e_mu >= half {
        R::zero()
    } else {
        let single_photon_term = if bounds.e1_upper < half {
            let h1 = binary_entropy(bounds.e1_upper).expect("bound clamped to [0,1]");
            q1_lower * (R::one() - h1)
        } else {
            R::zero()
        };
        let h_mu = binary_entropy(e_mu).expect("QBER in [0, 1/2)");
        let leak = gains.mu.gain * rate.error_correction_inefficiency * h_mu;
        let p_mu = params.intensities.send_probability(IntensityClass::Mu);
        (rate.sift_factor * p_mu * (single_photon_term - leak)).max(R::zero())
    };

    KeyRateReport {
        y0_lower: bounds.y0_lower,
        y1_lower: bounds.y1_lower,
        e1_upper: bounds.e1_upper,
        q1_lower,
        r_per_pulse,
        skr_bps: r_per_pulse * params.clock_hz * rate.duty_factor,
    }
}

/// Full pipeline: bounds then rate, with a vanishing single-photon yield
/// collapsing to a zero-rate report rather than an error.
pub fn key_rate_report<R: Real>(
    gains: &GainSet<R>,
    params: &ProtocolParams<R>,
    rate: &RateParams<R>,
) -> Result<KeyRateReport<R>, DecoyError> {
    match decoy_bounds(gains, &params.intensities) {
        Ok(bounds) => Ok(secret_key_rate(gains, &bounds, params, rate)),
        Err(DecoyError::VanishingYield { .. }) => Ok(KeyRateReport::zero(None)),
        Err(err) => Err(err),
    }
}

/// Input schema of the `keyrate` CLI subcommand: hand-entered or
/// simulation-produced gains plus the rate parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct KeyRateInput<R: Real> {
    pub intensities: IntensitySet<R>,
    pub gains: GainSet<R>,
    #[serde(default = "default_clock_hz")]
    pub clock_hz: R,
    #[serde(default = "default_basis_probability_x")]
    pub basis_probability_x: R,
    #[serde(default = "default_f_ec")]
    pub error_correction_inefficiency: R,
    #[serde(default = "default_duty")]
    pub duty_factor: R,
}

fn default_clock_hz<R: Real>() -> R {
    real(1e9)
}
fn default_basis_probability_x<R: Real>() -> R {
    real(0.5)
}
fn default_f_ec<R: Real>() -> R {
    real(1.16)
}
fn default_duty<R: Real>() -> R {
    R::one()
}

impl<R: Real> KeyRateInput<R> {
    pub fn evaluate(&self) -> Result<KeyRateReport<R>, DecoyError> {
        let params = ProtocolParams {
            intensities: self.intensities,
            basis_probability_x: self.basis_probability_x,
            clock_hz: self.clock_hz,
            receiver: crate::protocol::ReceiverKind::DoubleSpd,
        };
        let rate = RateParams {
            error_correction_inefficiency: self.error_correction_inefficiency,
            sift_factor: params.sift_factor(),
            duty_factor: self.duty_factor,
        };
        key_rate_report(&self.gains, &params, &rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{analytic_gain, analytic_gain_set, LinkBudget};
    use crate::protocol::ReceiverKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_fixed_points() {
        assert_eq!(binary_entropy(0.5f64).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0f64).unwrap(), 0.0);
        // oracle: mpmath, 30 digits
        assert_abs_diff_eq!(
            binary_entropy(0.11f64).unwrap(),
            0.499915958164528,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            binary_entropy(0.25f64).unwrap(),
            0.811278124459133,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_rejects_out_of_domain() {
        assert!(binary_entropy(-0.1f64).is_err());
        assert!(binary_entropy(1.1f64).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    fn true_single_photon(eta: f64, p_bg: f64, e_d: f64) -> (f64, f64) {
        let y1 = 1.0 - (1.0 - p_bg) * (1.0 - eta);
        let e1 = (0.5 * p_bg + e_d * eta) / y1;
        (y1, e1)
    }

    fn model_gains(eta: f64, p_bg: f64, e_d: f64, set: &IntensitySet<f64>) -> GainSet<f64> {
        let link_free = |lambda: f64| {
            let gain = analytic_gain(lambda, eta, p_bg);
            let signal = 1.0 - (-eta * lambda).exp();
            ClassGain {
                gain,
                qber: (0.5 * p_bg + e_d * signal) / gain,
            }
        };
        GainSet {
            mu: link_free(set.mu),
            nu1: link_free(set.nu1),
            nu2: link_free(set.nu2),
        }
    }

    #[test]
    fn bounds_sandwich_the_analytic_truth() {
        let set = IntensitySet::<f64>::transmitter1();
        let (eta, p_bg, e_d) = (0.014324888790321539, 3e-6, 0.0264009249904665);
        let gains = model_gains(eta, p_bg, e_d, &set);
        let bounds = decoy_bounds(&gains, &set).unwrap();
        let (y1_true, e1_true) = true_single_photon(eta, p_bg, e_d);
        assert!(bounds.y1_lower <= y1_true);
        assert!(bounds.y1_lower >= 0.9 * y1_true, "bound too loose");
        assert!(bounds.e1_upper >= e1_true);
        assert!(bounds.y0_lower <= p_bg);
        assert!((0.0..=1.0).contains(&bounds.y0_lower));
        assert!((0.0..=1.0).contains(&bounds.e1_upper));
    }

    #[test]
    fn perfect_channel_bounds() {
        let set = IntensitySet::<f64>::transmitter1();
        let gains = model_gains(1.0, 0.0, 0.0, &set);
        let bounds = decoy_bounds(&gains, &set).unwrap();
        assert!(bounds.y1_lower <= 1.0);
        assert_abs_diff_eq!(bounds.e1_upper, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_intensities_are_rejected() {
        let mut set = IntensitySet::<f64>::transmitter1();
        // nu1 + nu2 > mu makes the denominator (nu1−nu2)(mu−nu1−nu2) negative
        set.mu = 0.17;
        set.nu1 = 0.16;
        set.nu2 = 0.15;
        let gains = model_gains(0.01, 1e-6, 0.02, &IntensitySet::transmitter1());
        let err = decoy_bounds(&gains, &set).unwrap_err();
        assert!(matches!(err, DecoyError::DegenerateIntensities { .. }));
    }

    #[test]
    fn vanishing_yield_reported_and_mapped_to_zero_rate() {
        let set = IntensitySet::<f64>::transmitter1();
        // decoy gains far below the signal gain collapse the Y1 bound
        let gains = GainSet {
            mu: ClassGain { gain: 1e-2, qber: 0.02 },
            nu1: ClassGain { gain: 1e-9, qber: 0.02 },
            nu2: ClassGain { gain: 1e-6, qber: 0.02 },
        };
        assert!(matches!(
            decoy_bounds(&gains, &set),
            Err(DecoyError::VanishingYield { .. })
        ));
        let params = ProtocolParams::new(set, ReceiverKind::DoubleSpd);
        let report = key_rate_report(&gains, &params, &RateParams::default()).unwrap();
        assert_eq!(report.skr_bps, 0.0);
        assert_eq!(report.r_per_pulse, 0.0);
    }

    #[test]
    fn rate_clamps_at_high_qber() {
        let set = IntensitySet::<f64>::transmitter1();
        let params = ProtocolParams::new(set, ReceiverKind::DoubleSpd);
        let mut gains = model_gains(0.0143, 3e-6, 0.02, &set);
        gains.mu.qber = 0.5;
        let report = key_rate_report(&gains, &params, &RateParams::default()).unwrap();
        assert_eq!(report.skr_bps, 0.0);
    }

    #[test]
    fn noiseless_rate_reduces_to_single_photon_gain() {
        // e1 = E_mu = 0, p_bg = 0 → r = q·p(μ)·Q₁
        let set = IntensitySet::<f64>::transmitter1();
        let params = ProtocolParams::new(set, ReceiverKind::DoubleSpd);
        let gains = model_gains(0.0143, 0.0, 0.0, &set);
        let bounds = decoy_bounds(&gains, &set).unwrap();
        let report = secret_key_rate(&gains, &bounds, &params, &RateParams::default());
        let expected = 0.5 * (29.0 / 32.0) * report.q1_lower;
        assert_abs_diff_eq!(report.r_per_pulse, expected, epsilon = 1e-18);
    }

    #[test]
    fn paper_scale_rate_lands_in_sanity_band() {
        let link = LinkBudget::<f64>::default().with_misalignment_error(0.0264);
        let set = IntensitySet::<f64>::transmitter1();
        let params = ProtocolParams::new(set, ReceiverKind::SingleSpd);
        let gains = analytic_gain_set(&link, ReceiverKind::SingleSpd, &set);
        let report = key_rate_report(&gains, &params, &RateParams::default()).unwrap();
        assert!(report.skr_bps > 1e5 && report.skr_bps < 1e7);
    }

    #[test]
    fn keyrate_input_round_trips_and_evaluates() {
        let set = IntensitySet::<f64>::transmitter1();
        let gains = model_gains(0.0143, 3e-6, 0.0264, &set);
        let input = KeyRateInput {
            intensities: set,
            gains,
            clock_hz: 1e9,
            basis_probability_x: 0.5,
            error_correction_inefficiency: 1.16,
            duty_factor: 0.5,
        };
        let json = serde_json::to_string(&input).unwrap();
        let parsed: KeyRateInput<f64> = serde_json::from_str(&json).unwrap();
        let a = input.evaluate().unwrap();
        let b = parsed.evaluate().unwrap();
        assert_eq!(a, b);
        assert!(a.skr_bps > 0.0);
    }
}
