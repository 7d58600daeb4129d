//! Phase-encoded decoy-state BB84: transmitter encoding, interferometric
//! click statistics, receiver decoding, and sifting.
//!
//! States live in two mutually unbiased bases X and Y realized as relative
//! phases between the short- and long-path pulses of the encoder
//! interferometer. The four encoder phases {0, π/2, π, 3π/2} map bijectively
//! to (basis, bit); receivers apply their own phase and observe interference.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::{real, Real};
use crate::montecarlo::TallyCounters;

/// Preparation/measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
}

/// Transmitted intensity class of the decoy-state protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityClass {
    /// Signal state μ.
    Mu,
    /// Stronger decoy ν₁.
    Nu1,
    /// Weaker decoy ν₂.
    Nu2,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [Self::Mu, Self::Nu1, Self::Nu2];

    pub fn index(self) -> usize {
        match self {
            Self::Mu => 0,
            Self::Nu1 => 1,
            Self::Nu2 => 2,
        }
    }
}

/// Modulator phase, one of {0, π/2, π, 3π/2}, stored as quarter turns so
/// phase differences have exact cosines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Zero,
    HalfPi,
    Pi,
    ThreeHalvesPi,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Self::Zero, Self::HalfPi, Self::Pi, Self::ThreeHalvesPi];

    pub fn quarter_turns(self) -> u8 {
        match self {
            Self::Zero => 0,
            Self::HalfPi => 1,
            Self::Pi => 2,
            Self::ThreeHalvesPi => 3,
        }
    }

    pub fn from_quarter_turns(turns: u8) -> Self {
        match turns % 4 {
            0 => Self::Zero,
            1 => Self::HalfPi,
            2 => Self::Pi,
            _ => Self::ThreeHalvesPi,
        }
    }

    pub fn radians<R: Real>(self) -> R {
        R::FRAC_PI_2() * real(self.quarter_turns() as f64)
    }

    /// Encoder mapping: (X,0)→0, (X,1)→π, (Y,0)→π/2, (Y,1)→3π/2.
    pub fn encode(basis: Basis, bit: bool) -> Self {
        let basis_turns = match basis {
            Basis::X => 0,
            Basis::Y => 1,
        };
        Self::from_quarter_turns(basis_turns + if bit { 2 } else { 0 })
    }

    /// Basis component of the bijective mapping.
    pub fn basis(self) -> Basis {
        if self.quarter_turns().is_multiple_of(2) {
            Basis::X
        } else {
            Basis::Y
        }
    }

    /// Bit component of the bijective mapping.
    pub fn bit(self) -> bool {
        self.quarter_turns() >= 2
    }

    /// Exact cosine of the phase difference `self − other`: +1, 0 or −1.
    pub fn cos_difference(self, other: Phase) -> i8 {
        match (self.quarter_turns() + 4 - other.quarter_turns()) % 4 {
            0 => 1,
            2 => -1,
            _ => 0,
        }
    }
}

/// Receiver architecture: one shared decoder structure, differing only in
/// how many single-photon detectors watch its output ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    /// One detector on one port; the decoder phase cycles through all four
    /// values, so the phase choice fixes both basis and expected bit. Costs
    /// half the detection efficiency relative to the two-detector receiver.
    SingleSpd,
    /// Two detectors, one per port; the decoder phase only selects the basis
    /// ({0, π/2}) and the firing port reveals the bit.
    DoubleSpd,
}

impl ReceiverKind {
    pub fn detector_count(self) -> usize {
        match self {
            Self::SingleSpd => 1,
            Self::DoubleSpd => 2,
        }
    }

    /// Decoder phases this receiver modulates over.
    pub fn phase_choices(self) -> &'static [Phase] {
        match self {
            Self::SingleSpd => &Phase::ALL,
            Self::DoubleSpd => &[Phase::Zero, Phase::HalfPi],
        }
    }

    /// Uniform draw over the receiver's phase set.
    pub fn draw_phase<G: Rng + ?Sized>(self, rng: &mut G) -> Phase {
        let choices = self.phase_choices();
        choices[rng.random_range(0..choices.len())]
    }
}

/// The three mean photon numbers of the decoy protocol plus their sending
/// ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct IntensitySet<R: Real> {
    /// Signal state mean photon number λ_μ.
    pub mu: R,
    /// Stronger decoy mean photon number λ_ν₁.
    pub nu1: R,
    /// Weaker decoy mean photon number λ_ν₂.
    pub nu2: R,
    /// Integer sending ratio μ : ν₁ : ν₂.
    pub send_weights: [u32; 3],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("click pattern arity does not match receiver kind {kind:?}")]
    InvalidClickPattern { kind: ReceiverKind },
    #[error(
        "pulse/detection streams misaligned at position {position}: \
         sent slot {sent_slot:?}, received slot {received_slot:?}"
    )]
    SlotMisalignment {
        position: usize,
        sent_slot: Option<u64>,
        received_slot: Option<u64>,
    },
    #[error("invalid protocol parameters: {0}")]
    Invalid(String),
}

impl<R: Real> IntensitySet<R> {
    /// The demonstrated first system: μ=0.50, ν₁=0.16, ν₂=0.008 at 29:2:1.
    pub fn transmitter1() -> Self {
        Self {
            mu: real(0.50),
            nu1: real(0.16),
            nu2: real(0.008),
            send_weights: [29, 2, 1],
        }
    }

    /// The demonstrated second system: μ=0.60, ν₁=0.06, ν₂=0.008 at 29:2:1.
    pub fn transmitter2() -> Self {
        Self {
            mu: real(0.60),
            nu1: real(0.06),
            nu2: real(0.008),
            send_weights: [29, 2, 1],
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.mu > self.nu1 && self.nu1 > self.nu2 && self.nu2 >= R::zero()) {
            return Err(ProtocolError::Invalid(
                "intensities must satisfy mu > nu1 > nu2 >= 0".into(),
            ));
        }
        if !(self.nu1 + self.nu2 < self.mu) {
            return Err(ProtocolError::Invalid(
                "two-decoy analysis requires nu1 + nu2 < mu".into(),
            ));
        }
        if self.send_weights.contains(&0) {
            return Err(ProtocolError::Invalid(
                "send_weights must all be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn mean_photon_number(&self, class: IntensityClass) -> R {
        match class {
            IntensityClass::Mu => self.mu,
            IntensityClass::Nu1 => self.nu1,
            IntensityClass::Nu2 => self.nu2,
        }
    }

    pub fn total_weight(&self) -> u32 {
        self.send_weights.iter().sum()
    }

    /// Probability of sending `class` under the configured ratio.
    pub fn send_probability(&self, class: IntensityClass) -> R {
        real::<R>(self.send_weights[class.index()] as f64)
            / real(self.total_weight() as f64)
    }

    /// Weighted mean photon number over all classes, the average load a
    /// transmitter puts on the fiber.
    pub fn average_photon_number(&self) -> R {
        let total = real::<R>(self.total_weight() as f64);
        (real::<R>(self.send_weights[0] as f64) * self.mu
            + real::<R>(self.send_weights[1] as f64) * self.nu1
            + real::<R>(self.send_weights[2] as f64) * self.nu2)
            / total
    }
}

/// Picks an intensity class with probabilities given by the integer sending
/// ratio (exactly 29/32, 2/32, 1/32 under the default weights).
pub fn choose_intensity<R: Real, G: Rng + ?Sized>(
    intensities: &IntensitySet<R>,
    rng: &mut G,
) -> IntensityClass {
    let draw = rng.random_range(0..intensities.total_weight());
    let [w_mu, w_nu1, _] = intensities.send_weights;
    if draw < w_mu {
        IntensityClass::Mu
    } else if draw < w_mu + w_nu1 {
        IntensityClass::Nu1
    } else {
        IntensityClass::Nu2
    }
}

/// Transmitter and receiver configuration shared by one QKD system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ProtocolParams<R: Real> {
    pub intensities: IntensitySet<R>,
    /// Probability of choosing the X basis; Y gets the complement, so
    /// `p_x + p_y = 1` holds by construction.
    pub basis_probability_x: R,
    /// Pulse repetition rate, Hz.
    pub clock_hz: R,
    pub receiver: ReceiverKind,
}

impl<R: Real> ProtocolParams<R> {
    pub fn new(intensities: IntensitySet<R>, receiver: ReceiverKind) -> Self {
        Self {
            intensities,
            basis_probability_x: real(0.5),
            clock_hz: real(1e9),
            receiver,
        }
    }

    pub fn basis_probability_y(&self) -> R {
        R::one() - self.basis_probability_x
    }

    /// Probability that transmitter and receiver pick the same basis,
    /// the sifting factor q (1/2 at p_x = p_y = 1/2).
    pub fn sift_factor(&self) -> R {
        let px = self.basis_probability_x;
        let py = self.basis_probability_y();
        px * px + py * py
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.intensities.validate()?;
        if !(self.basis_probability_x >= R::zero() && self.basis_probability_x <= R::one()) {
            return Err(ProtocolError::Invalid(
                "basis_probability_x must lie in [0, 1]".into(),
            ));
        }
        if !(self.clock_hz > R::zero()) {
            return Err(ProtocolError::Invalid("clock_hz must be positive".into()));
        }
        Ok(())
    }
}

/// One transmitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub slot: u64,
    pub intensity_class: IntensityClass,
    pub basis: Basis,
    pub bit: bool,
    pub encoder_phase: Phase,
}

/// Detector click pattern for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clicks {
    /// Single-detector receiver: did the monitored port fire?
    One { port0: bool },
    /// Two-detector receiver: per-port flags.
    Two { port0: bool, port1: bool },
}

impl Clicks {
    pub fn any(self) -> bool {
        match self {
            Self::One { port0 } => port0,
            Self::Two { port0, port1 } => port0 || port1,
        }
    }

    pub fn is_double(self) -> bool {
        matches!(self, Self::Two { port0: true, port1: true })
    }
}

/// One receiver slot: decoder setting, observed clicks, decode outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub slot: u64,
    pub receiver_phase: Phase,
    pub clicks: Clicks,
    pub decoded_bit: Option<bool>,
    pub receiver_basis: Basis,
}

/// Draws one pulse: intensity class, basis, bit, and the mapped phase.
///
/// Consumes exactly three RNG draws in the order (intensity, basis, bit).
pub fn encode_pulse<R: Real, G: Rng + ?Sized>(
    params: &ProtocolParams<R>,
    slot: u64,
    rng: &mut G,
) -> PulseRecord {
    let intensity_class = choose_intensity(&params.intensities, rng);
    let basis = if real::<R>(rng.random::<f64>()) < params.basis_probability_x {
        Basis::X
    } else {
        Basis::Y
    };
    let bit = rng.random::<bool>();
    PulseRecord {
        slot,
        intensity_class,
        basis,
        bit,
        encoder_phase: Phase::encode(basis, bit),
    }
}

/// Output-port probabilities for one photon reaching the decoder, given the
/// encoder/decoder phases and fringe visibility `v`.
///
/// `p_port0 = (1 + v·cos Δφ)/2`; the pair always sums to exactly 1.
pub fn click_distribution<R: Real>(
    encoder_phase: Phase,
    receiver_phase: Phase,
    visibility: R,
) -> (R, R) {
    debug_assert!(visibility >= R::zero() && visibility <= R::one());
    let half = real::<R>(0.5);
    let p0 = match encoder_phase.cos_difference(receiver_phase) {
        1 => half * (R::one() + visibility),
        -1 => half * (R::one() - visibility),
        _ => half,
    };
    (p0, R::one() - p0)
}

/// Decodes a click pattern under the given receiver.
///
/// Double-SPD: port 0 carries the bit named by the decoder phase, port 1 its
/// complement, and simultaneous clicks squash to a uniformly random bit.
/// Single-SPD: a click means the received state matched the decoder phase,
/// whose (basis, bit) reading is the outcome.
pub fn decode<G: Rng + ?Sized>(
    clicks: Clicks,
    kind: ReceiverKind,
    receiver_phase: Phase,
    rng: &mut G,
) -> Result<Option<bool>, ProtocolError> {
    match (kind, clicks) {
        (ReceiverKind::SingleSpd, Clicks::One { port0 }) => {
            Ok(port0.then(|| receiver_phase.bit()))
        }
        (ReceiverKind::DoubleSpd, Clicks::Two { port0, port1 }) => Ok(match (port0, port1) {
            (false, false) => None,
            (true, false) => Some(receiver_phase.bit()),
            (false, true) => Some(!receiver_phase.bit()),
            (true, true) => Some(rng.random::<bool>()),
        }),
        _ => Err(ProtocolError::InvalidClickPattern { kind }),
    }
}

/// Basis-reconciles aligned pulse/detection streams into per-class tallies.
///
/// Counts every pulse as sent, every conclusive decode as detected, and —
/// for slots where the bases agree — sifted bits and errors.
pub fn sift(
    sent: &[PulseRecord],
    received: &[DetectionEvent],
) -> Result<TallyCounters, ProtocolError> {
    if sent.len() != received.len() {
        let position = sent.len().min(received.len());
        return Err(ProtocolError::SlotMisalignment {
            position,
            sent_slot: sent.get(position).map(|p| p.slot),
            received_slot: received.get(position).map(|e| e.slot),
        });
    }
    let mut tallies = TallyCounters::default();
    for (position, (pulse, event)) in sent.iter().zip(received).enumerate() {
        if pulse.slot != event.slot {
            return Err(ProtocolError::SlotMisalignment {
                position,
                sent_slot: Some(pulse.slot),
                received_slot: Some(event.slot),
            });
        }
        tallies.record_sent(pulse.intensity_class);
        if let Some(bit) = event.decoded_bit {
            tallies.record_detection(pulse.intensity_class, event.clicks.is_double());
            if event.receiver_basis == pulse.basis {
                tallies.record_sifted(pulse.intensity_class, bit != pulse.bit);
            }
        }
    }
    Ok(tallies)
}
