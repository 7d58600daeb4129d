//! Photon-level Monte Carlo of one quantum channel.
//!
//! Per slot: encode a pulse, draw its Poissonian photon number, thin each
//! photon through the channel transmittance, route survivors through the
//! decoder interference, add dark counts and leaked-crosstalk background,
//! decode and sift. Every stochastic ingredient draws from its own
//! channel-keyed ChaCha stream, so runs are bit-reproducible and independent
//! channels can execute in parallel with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::float::Real;
use crate::keyrate::{ClassGain, GainSet};
use crate::link::{crosstalk_click_prob, LinkBudget, LinkError};
use crate::protocol::{
    decode, encode_pulse, click_distribution, Clicks, DetectionEvent, IntensityClass,
    ProtocolError, ProtocolParams, PulseRecord, ReceiverKind,
};
use crate::wdm::{ChannelId, ChannelPlan, WdmError};

/// Counters for one intensity class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    /// Pulses sent in this class.
    pub sent: u64,
    /// Conclusive detections (any decoded bit, before basis reconciliation).
    pub detected: u64,
    /// Conclusive detections with matching bases.
    pub sifted: u64,
    /// Sifted bits that disagree with the transmitted bit.
    pub errors: u64,
}

/// Per-class tallies plus receiver-level click totals for one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyCounters {
    pub classes: [ClassTally; 3],
    /// Slots with at least one detector click.
    pub clicks: u64,
    /// Slots where both detectors of a double-SPD receiver fired.
    pub double_clicks: u64,
    /// Clicky slots with zero surviving signal photons (dark or crosstalk only).
    pub dark_only_clicks: u64,
}

impl TallyCounters {
    pub fn class(&self, class: IntensityClass) -> &ClassTally {
        &self.classes[class.index()]
    }

    pub fn record_sent(&mut self, class: IntensityClass) {
        self.classes[class.index()].sent += 1;
    }

    pub fn record_detection(&mut self, class: IntensityClass, double_click: bool) {
        self.classes[class.index()].detected += 1;
        self.clicks += 1;
        if double_click {
            self.double_clicks += 1;
        }
    }

    pub fn record_sifted(&mut self, class: IntensityClass, error: bool) {
        let tally = &mut self.classes[class.index()];
        tally.sifted += 1;
        if error {
            tally.errors += 1;
        }
    }

    /// Folds one simulated slot into the counters.
    pub fn record_slot(&mut self, outcome: &SlotOutcome) {
        self.record_sent(outcome.pulse.intensity_class);
        if let Some(bit) = outcome.event.decoded_bit {
            self.record_detection(
                outcome.pulse.intensity_class,
                outcome.event.clicks.is_double(),
            );
            if outcome.surviving_photons == 0 {
                self.dark_only_clicks += 1;
            }
            if outcome.event.receiver_basis == outcome.pulse.basis {
                self.record_sifted(outcome.pulse.intensity_class, bit != outcome.pulse.bit);
            }
        }
    }

    pub fn merge(&mut self, other: &TallyCounters) {
        for (mine, theirs) in self.classes.iter_mut().zip(&other.classes) {
            mine.sent += theirs.sent;
            mine.detected += theirs.detected;
            mine.sifted += theirs.sifted;
            mine.errors += theirs.errors;
        }
        self.clicks += other.clicks;
        self.double_clicks += other.double_clicks;
        self.dark_only_clicks += other.dark_only_clicks;
    }

    pub fn total_sent(&self) -> u64 {
        self.classes.iter().map(|c| c.sent).sum()
    }

    /// Empirical gain `detected/sent` for one class (0 when nothing was sent).
    pub fn gain<R: Real>(&self, class: IntensityClass) -> R {
        let t = self.class(class);
        ratio(t.detected, t.sent)
    }

    /// Empirical QBER `errors/sifted` for one class (0 when nothing sifted).
    pub fn qber<R: Real>(&self, class: IntensityClass) -> R {
        let t = self.class(class);
        ratio(t.errors, t.sifted)
    }

    /// Empirical gains and QBERs for all classes.
    pub fn gain_set<R: Real>(&self) -> GainSet<R> {
        let class = |c: IntensityClass| ClassGain {
            gain: self.gain(c),
            qber: self.qber(c),
        };
        GainSet {
            mu: class(IntensityClass::Mu),
            nu1: class(IntensityClass::Nu1),
            nu2: class(IntensityClass::Nu2),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (i, c) in self.classes.iter().enumerate() {
            if !(c.errors <= c.sifted && c.sifted <= c.detected && c.detected <= c.sent) {
                return Err(SimError::InvalidConfig(format!(
                    "inconsistent tallies for class {i}: {c:?}"
                )));
            }
        }
        Ok(())
    }
}

fn ratio<R: Real>(numerator: u64, denominator: u64) -> R {
    if denominator == 0 {
        R::zero()
    } else {
        R::from_u64(numerator).unwrap() / R::from_u64(denominator).unwrap()
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub pulse: PulseRecord,
    pub event: DetectionEvent,
    /// Signal photons that survived the channel.
    pub surviving_photons: u32,
}

/// Another transmitter whose light leaks into the simulated channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct AggressorTraffic<R: Real> {
    pub channel: ChannelId,
    /// Average photon number per pulse the aggressor launches.
    pub mean_photon_number: R,
}

/// Independent random streams of one channel simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngLane {
    /// Pulse encoding, receiver phases, photon statistics, port routing.
    Protocol = 0,
    /// Detector dark counts.
    Dark = 1,
    /// Crosstalk background clicks.
    Crosstalk = 2,
    /// Double-click squashing.
    Decode = 3,
}

/// Deterministic per-(seed, channel, lane) stream.
pub fn derive_rng(master_seed: u64, channel: ChannelId, lane: RngLane) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"soliton-qkd.stream.v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(channel.0.to_le_bytes());
    hasher.update([lane as u8]);
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Wdm(#[from] WdmError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// Resumable Monte Carlo of one channel; [`run`](Self::run) may be called
/// repeatedly (e.g. per QBER block) and tallies merged.
pub struct ChannelSimulator<R: Real> {
    params: ProtocolParams<R>,
    receiver: ReceiverKind,
    poisson: [Option<Poisson<f64>>; 3],
    eta: f64,
    dark_prob: f64,
    crosstalk_prob: f64,
    visibility: f64,
    effective_link: LinkBudget<R>,
    slot: u64,
    rng_protocol: ChaCha12Rng,
    rng_dark: ChaCha12Rng,
    rng_crosstalk: ChaCha12Rng,
    rng_decode: ChaCha12Rng,
}

impl<R: Real> ChannelSimulator<R> {
    /// Builds a simulator for `channel` of `plan`.
    ///
    /// `link.mux_demux_insertion_db` must already reflect the carrying
    /// channel; the crosstalk background probability is derived here from
    /// the plan's suppression matrix and the active aggressors (plus any
    /// explicitly configured baseline in the link).
    pub fn new(
        plan: &ChannelPlan<R>,
        channel: ChannelId,
        link: &LinkBudget<R>,
        params: &ProtocolParams<R>,
        master_seed: u64,
        aggressors: &[AggressorTraffic<R>],
        gate_overlap: R,
    ) -> Result<Self, SimError> {
        plan.channel(channel)?;
        link.validate()?;
        params.validate()?;
        if !(gate_overlap >= R::zero() && gate_overlap <= R::one()) {
            return Err(SimError::InvalidConfig(
                "gate_overlap must lie in [0, 1]".into(),
            ));
        }
        let pairs: Vec<(ChannelId, R)> = aggressors
            .iter()
            .map(|a| (a.channel, a.mean_photon_number))
            .collect();
        let derived = crosstalk_click_prob(plan, channel, &pairs, link, gate_overlap)?;
        let crosstalk_total = link.crosstalk_background_prob + derived;
        if !(crosstalk_total >= R::zero() && crosstalk_total < R::one()) {
            return Err(SimError::InvalidConfig(format!(
                "crosstalk background probability {crosstalk_total} outside [0, 1)"
            )));
        }
        let mut effective_link = *link;
        effective_link.crosstalk_background_prob = crosstalk_total;

        let set = &params.intensities;
        let lambdas = [
            set.mu.to_f64().unwrap(),
            set.nu1.to_f64().unwrap(),
            set.nu2.to_f64().unwrap(),
        ];
        let mut poisson: [Option<Poisson<f64>>; 3] = [None, None, None];
        for (dist, &lambda) in poisson.iter_mut().zip(&lambdas) {
            if lambda > 0.0 {
                *dist = Some(Poisson::new(lambda).map_err(|e| {
                    SimError::InvalidConfig(format!("invalid mean photon number {lambda}: {e}"))
                })?);
            }
        }

        Ok(Self {
            params: *params,
            receiver: params.receiver,
            poisson,
            eta: link.transmittance().to_f64().unwrap(),
            dark_prob: link.dark_count_prob_per_gate.to_f64().unwrap(),
            crosstalk_prob: crosstalk_total.to_f64().unwrap(),
            visibility: link.visibility.to_f64().unwrap(),
            effective_link,
            slot: 0,
            rng_protocol: derive_rng(master_seed, channel, RngLane::Protocol),
            rng_dark: derive_rng(master_seed, channel, RngLane::Dark),
            rng_crosstalk: derive_rng(master_seed, channel, RngLane::Crosstalk),
            rng_decode: derive_rng(master_seed, channel, RngLane::Decode),
        })
    }

    /// Link budget with the derived crosstalk background filled in.
    pub fn effective_link(&self) -> &LinkBudget<R> {
        &self.effective_link
    }

    /// Per-slot crosstalk background click probability in effect.
    pub fn crosstalk_prob(&self) -> f64 {
        self.crosstalk_prob
    }

    /// Simulates one slot end to end.
    pub fn step(&mut self) -> SlotOutcome {
        let pulse = encode_pulse(&self.params, self.slot, &mut self.rng_protocol);
        let receiver_phase = self.receiver.draw_phase(&mut self.rng_protocol);

        // Source photon number, then per-photon channel survival.
        let class = pulse.intensity_class.index();
        let emitted: u64 = match &self.poisson[class] {
            Some(dist) => dist.sample(&mut self.rng_protocol) as u64,
            None => 0,
        };
        let mut survivors = 0u32;
        for _ in 0..emitted {
            if self.rng_protocol.random::<f64>() < self.eta {
                survivors += 1;
            }
        }

        // Interferometric port routing of the survivors.
        let (p_port0, _) =
            click_distribution::<f64>(pulse.encoder_phase, receiver_phase, self.visibility);
        let mut port0_photons = 0u32;
        let mut port1_photons = 0u32;
        for _ in 0..survivors {
            if self.rng_protocol.random::<f64>() < p_port0 {
                port0_photons += 1;
            } else {
                port1_photons += 1;
            }
        }

        // Background: dark counts per detector, then leaked crosstalk light
        // choosing a decoder port at random.
        let dark0 = self.rng_dark.random::<f64>() < self.dark_prob;
        let dark1 = match self.receiver {
            ReceiverKind::DoubleSpd => self.rng_dark.random::<f64>() < self.dark_prob,
            ReceiverKind::SingleSpd => false,
        };
        let (xt0, xt1) = if self.crosstalk_prob > 0.0
            && self.rng_crosstalk.random::<f64>() < self.crosstalk_prob
        {
            if self.rng_crosstalk.random_range(0..2u8) == 0 {
                (true, false)
            } else {
                (false, true)
            }
        } else {
            (false, false)
        };

        let port0 = port0_photons > 0 || dark0 || xt0;
        let clicks = match self.receiver {
            ReceiverKind::SingleSpd => Clicks::One { port0 },
            ReceiverKind::DoubleSpd => Clicks::Two {
                port0,
                port1: port1_photons > 0 || dark1 || xt1,
            },
        };
        let decoded_bit = decode(clicks, self.receiver, receiver_phase, &mut self.rng_decode)
            .expect("click pattern built for this receiver");

        let event = DetectionEvent {
            slot: pulse.slot,
            receiver_phase,
            clicks,
            decoded_bit,
            receiver_basis: receiver_phase.basis(),
        };
        self.slot += 1;
        SlotOutcome {
            pulse,
            event,
            surviving_photons: survivors,
        }
    }

    /// Runs `pulses` slots and returns their tallies (mergeable across calls).
    pub fn run(&mut self, pulses: u64) -> TallyCounters {
        let mut tallies = TallyCounters::default();
        for _ in 0..pulses {
            let outcome = self.step();
            tallies.record_slot(&outcome);
        }
        tallies
    }
}

/// One-shot convenience wrapper around [`ChannelSimulator`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_channel<R: Real>(
    plan: &ChannelPlan<R>,
    channel: ChannelId,
    link: &LinkBudget<R>,
    params: &ProtocolParams<R>,
    pulses: u64,
    master_seed: u64,
    aggressors: &[AggressorTraffic<R>],
    gate_overlap: R,
) -> Result<TallyCounters, SimError> {
    if pulses == 0 {
        return Err(SimError::InvalidConfig("pulses must be at least 1".into()));
    }
    let mut sim = ChannelSimulator::new(
        plan,
        channel,
        link,
        params,
        master_seed,
        aggressors,
        gate_overlap,
    )?;
    Ok(sim.run(pulses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb::CombSpec;
    use crate::protocol::IntensitySet;
    use crate::wdm::assign_channels;
    use approx::assert_abs_diff_eq;

    fn test_plan() -> ChannelPlan<f64> {
        let spec = CombSpec::<f64>::default();
        let lines = spec.usable_lines(0.0);
        assign_channels(&lines, 100e9, 5, spec.pump_frequency_hz).unwrap()
    }

    fn tr1_params() -> ProtocolParams<f64> {
        ProtocolParams::new(IntensitySet::transmitter1(), ReceiverKind::SingleSpd)
    }

    #[test]
    fn identical_seeds_give_identical_tallies() {
        let plan = test_plan();
        let link = LinkBudget::default().with_misalignment_error(0.0264);
        let params = tr1_params();
        let a = simulate_channel(&plan, ChannelId(1), &link, &params, 50_000, 99, &[], 0.5)
            .unwrap();
        let b = simulate_channel(&plan, ChannelId(1), &link, &params, 50_000, 99, &[], 0.5)
            .unwrap();
        assert_eq!(a, b);
        let c = simulate_channel(&plan, ChannelId(1), &link, &params, 50_000, 100, &[], 0.5)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blockwise_run_equals_single_run() {
        let plan = test_plan();
        let link = LinkBudget::default().with_misalignment_error(0.0264);
        let params = tr1_params();
        let whole = simulate_channel(&plan, ChannelId(1), &link, &params, 30_000, 7, &[], 0.5)
            .unwrap();
        let mut sim =
            ChannelSimulator::new(&plan, ChannelId(1), &link, &params, 7, &[], 0.5).unwrap();
        let mut merged = TallyCounters::default();
        for _ in 0..3 {
            merged.merge(&sim.run(10_000));
        }
        assert_eq!(whole, merged);
    }

    #[test]
    fn noiseless_saturated_channel_never_errs() {
        let plan = test_plan();
        let link = LinkBudget::<f64> {
            fiber_length_km: 0.0,
            mux_demux_insertion_db: 0.0,
            detector_efficiency: 1.0,
            dark_count_prob_per_gate: 0.0,
            visibility: 1.0,
            crosstalk_background_prob: 0.0,
            ..LinkBudget::default()
        };
        let mut params = tr1_params();
        params.receiver = ReceiverKind::DoubleSpd;
        params.intensities.mu = 40.0; // saturate: every pulse detected
        params.intensities.nu1 = 20.0;
        params.intensities.nu2 = 10.0;
        // mu > nu1 > nu2 and nu1 + nu2 < mu still hold
        let tallies =
            simulate_channel(&plan, ChannelId(1), &link, &params, 20_000, 3, &[], 0.5).unwrap();
        for class in IntensityClass::ALL {
            let t = tallies.class(class);
            assert_eq!(t.errors, 0, "errors in class {class:?}");
            assert_eq!(t.detected, t.sent, "late slot undetected in {class:?}");
        }
        // sift rate equals the basis-match rate statistically
        let sifted: u64 = IntensityClass::ALL.iter().map(|&c| tallies.class(c).sifted).sum();
        let total = tallies.total_sent();
        let sigma = (0.25 / total as f64).sqrt();
        assert!(((sifted as f64 / total as f64) - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn sift_reproduces_simulator_tallies() {
        let plan = test_plan();
        let link = LinkBudget::default().with_misalignment_error(0.03);
        let params = tr1_params();
        let mut sim =
            ChannelSimulator::new(&plan, ChannelId(1), &link, &params, 21, &[], 0.5).unwrap();
        let mut pulses = Vec::new();
        let mut events = Vec::new();
        let mut direct = TallyCounters::default();
        for _ in 0..20_000 {
            let outcome = sim.step();
            direct.record_slot(&outcome);
            pulses.push(outcome.pulse);
            events.push(outcome.event);
        }
        let sifted = crate::protocol::sift(&pulses, &events).unwrap();
        assert_eq!(sifted.classes, direct.classes);
        assert_eq!(sifted.clicks, direct.clicks);
        assert_eq!(sifted.double_clicks, direct.double_clicks);
    }

    #[test]
    fn thinning_matches_direct_poisson_detection() {
        // Route A: k ~ Poisson(λ), thin each photon with η.
        // Route B: m ~ Poisson(ηλ) directly. Same detection statistics.
        let lambda = 0.6;
        let eta = 0.2;
        let n = 2_000_000u64;
        let mut rng_a = derive_rng(1234, ChannelId(1), RngLane::Protocol);
        let mut rng_b = derive_rng(5678, ChannelId(1), RngLane::Protocol);
        let full = Poisson::new(lambda).unwrap();
        let thinned = Poisson::new(eta * lambda).unwrap();

        let stats = |m: u32, acc: &mut [u64; 3]| {
            acc[0] += m as u64;
            acc[1] += (m >= 1) as u64;
            acc[2] += (m >= 2) as u64;
        };
        let mut a = [0u64; 3];
        let mut b = [0u64; 3];
        for _ in 0..n {
            let k = full.sample(&mut rng_a) as u32;
            let mut m = 0u32;
            for _ in 0..k {
                m += (rng_a.random::<f64>() < eta) as u32;
            }
            stats(m, &mut a);
            stats(thinned.sample(&mut rng_b) as u32, &mut b);
        }
        // both routes must match the analytic Poisson(ηλ) law within 4σ
        let x = eta * lambda;
        let p_any = 1.0 - (-x).exp();
        let p_two = 1.0 - (-x).exp() * (1.0 + x);
        for (acc, label) in [(a, "thinned"), (b, "direct")] {
            let mean = acc[0] as f64 / n as f64;
            let sigma_mean = (x / n as f64).sqrt();
            assert!((mean - x).abs() < 4.0 * sigma_mean, "{label} mean {mean} vs {x}");
            for (count, p) in [(acc[1], p_any), (acc[2], p_two)] {
                let observed = count as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!(
                    (observed - p).abs() < 4.0 * sigma,
                    "{label}: observed {observed} expected {p}"
                );
            }
        }
    }

    #[test]
    fn dark_only_clicks_track_dark_probability() {
        let plan = test_plan();
        let link = LinkBudget::<f64> {
            fiber_length_km: 200.0, // essentially kill the signal
            dark_count_prob_per_gate: 2e-4,
            ..LinkBudget::default()
        };
        let mut params = tr1_params();
        params.receiver = ReceiverKind::DoubleSpd;
        let n = 2_000_000u64;
        let tallies =
            simulate_channel(&plan, ChannelId(1), &link, &params, n, 17, &[], 0.5).unwrap();
        let expected = 1.0 - (1.0 - 2e-4f64).powi(2);
        let observed = tallies.dark_only_clicks as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (observed - expected).abs() < 5.0 * sigma,
            "dark-only rate {observed} vs {expected}"
        );
    }

    #[test]
    fn zero_pulses_is_rejected() {
        let plan = test_plan();
        let link = LinkBudget::default();
        let err = simulate_channel(&plan, ChannelId(1), &link, &tr1_params(), 0, 1, &[], 0.5)
            .unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig(_)));
    }

    #[test]
    fn unknown_channel_is_rejected() {
        let plan = test_plan();
        let link = LinkBudget::default();
        let err = simulate_channel(&plan, ChannelId(77), &link, &tr1_params(), 10, 1, &[], 0.5)
            .unwrap_err();
        assert!(matches!(err, SimError::Wdm(WdmError::UnknownChannel(_))));
    }

    #[test]
    fn aggressor_raises_background() {
        let plan = test_plan();
        let link = LinkBudget::default();
        let aggressor = AggressorTraffic {
            channel: ChannelId(2),
            mean_photon_number: 0.54775,
        };
        let sim = ChannelSimulator::new(
            &plan,
            ChannelId(1),
            &link,
            &tr1_params(),
            1,
            &[aggressor],
            0.5,
        )
        .unwrap();
        // leakage 1e−2 · λ̄ · η · overlap
        let expected = 0.01 * 0.54775 * link.transmittance() * 0.5;
        assert_abs_diff_eq!(sim.crosstalk_prob(), expected, epsilon = 1e-18);
        let solo =
            ChannelSimulator::new(&plan, ChannelId(1), &link, &tr1_params(), 1, &[], 0.5)
                .unwrap();
        assert_eq!(solo.crosstalk_prob(), 0.0);
    }

    #[test]
    fn tally_ratios_handle_empty_counters() {
        let t = TallyCounters::default();
        assert_eq!(t.gain::<f64>(IntensityClass::Mu), 0.0);
        assert_eq!(t.qber::<f64>(IntensityClass::Nu2), 0.0);
        t.validate().unwrap();
    }
}
