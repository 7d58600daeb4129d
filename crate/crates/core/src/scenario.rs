//! Scenario configuration: TOML schema, validation, and the bundled
//! reference scenarios.
//!
//! A scenario file fully determines a run: the comb source, the channel
//! plan, one or more QKD systems with their links and rate parameters, and
//! the execution settings (pulse count, seed, solo/parallel mode). See the
//! repository README for the documented schema; the bundled files under
//! `scenarios/` are the canonical examples.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comb::{frequency_hz_from_wavelength_nm, CombSpec};
use crate::float::{real, Real};
use crate::link::LinkBudget;
use crate::protocol::{IntensitySet, ProtocolParams, ReceiverKind};
use crate::wdm::{
    assign_channels, interpolated_insertion_loss, ChannelId, ChannelPlan, WdmError,
    DEFAULT_ADJACENT_SUPPRESSION_DB, DEFAULT_NONADJACENT_SUPPRESSION_DB,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario validation error: {field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Wdm(#[from] WdmError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

/// Comb source section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct CombConfig<R: Real> {
    /// Pump line frequency, Hz. Exactly one of this and
    /// `pump_wavelength_nm` must be given.
    #[serde(default)]
    pub pump_frequency_hz: Option<R>,
    /// Pump vacuum wavelength, nm (converted and rounded to integer hertz).
    #[serde(default)]
    pub pump_wavelength_nm: Option<f64>,
    #[serde(default = "default_comb_spacing")]
    pub comb_spacing_hz: R,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_3db_hz: R,
    #[serde(default = "default_peak_power")]
    pub peak_power_dbm: R,
    #[serde(default = "default_noise_floor")]
    pub noise_floor_dbm: R,
    /// SNR threshold for usable comb lines, dB above the noise floor.
    #[serde(default)]
    pub snr_threshold_db: Option<R>,
}

fn default_comb_spacing<R: Real>() -> R {
    real(49e9)
}
fn default_bandwidth<R: Real>() -> R {
    real(3.2e12)
}
fn default_peak_power<R: Real>() -> R {
    R::zero()
}
fn default_noise_floor<R: Real>() -> R {
    real(-20.0)
}

impl<R: Real> Default for CombConfig<R> {
    fn default() -> Self {
        Self {
            pump_frequency_hz: None,
            pump_wavelength_nm: Some(1556.09),
            comb_spacing_hz: default_comb_spacing(),
            bandwidth_3db_hz: default_bandwidth(),
            peak_power_dbm: default_peak_power(),
            noise_floor_dbm: default_noise_floor(),
            snr_threshold_db: None,
        }
    }
}

/// One directed crosstalk override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct CrosstalkOverride<R: Real> {
    pub victim: ChannelId,
    pub aggressor: ChannelId,
    pub suppression_db: R,
}

/// Channel plan section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct PlanConfig<R: Real> {
    #[serde(default = "default_channel_count")]
    pub channel_count: usize,
    #[serde(default = "default_grid_spacing")]
    pub grid_spacing_hz: R,
    /// First grid slot center, Hz; defaults to the pump frequency.
    #[serde(default)]
    pub start_frequency_hz: Option<R>,
    /// Insertion loss endpoints interpolated across channels.
    #[serde(default)]
    pub insertion_loss_range_db: Option<(f64, f64)>,
    /// Explicit per-channel insertion losses (overrides the range).
    #[serde(default)]
    pub insertion_loss_db: Option<Vec<R>>,
    #[serde(default = "default_adjacent")]
    pub adjacent_suppression_db: R,
    #[serde(default = "default_nonadjacent")]
    pub nonadjacent_suppression_db: R,
    #[serde(default)]
    pub crosstalk_overrides: Vec<CrosstalkOverride<R>>,
}

fn default_channel_count() -> usize {
    5
}
fn default_grid_spacing<R: Real>() -> R {
    real(100e9)
}
fn default_adjacent<R: Real>() -> R {
    real(DEFAULT_ADJACENT_SUPPRESSION_DB)
}
fn default_nonadjacent<R: Real>() -> R {
    real(DEFAULT_NONADJACENT_SUPPRESSION_DB)
}

impl<R: Real> Default for PlanConfig<R> {
    fn default() -> Self {
        Self {
            channel_count: default_channel_count(),
            grid_spacing_hz: default_grid_spacing(),
            start_frequency_hz: None,
            insertion_loss_range_db: None,
            insertion_loss_db: None,
            adjacent_suppression_db: default_adjacent(),
            nonadjacent_suppression_db: default_nonadjacent(),
            crosstalk_overrides: Vec::new(),
        }
    }
}

/// Execution mode: `solo` runs each system without aggressors; `parallel`
/// treats every other system as an active aggressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Solo,
    Parallel,
}

/// Execution section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default = "default_pulses")]
    pub pulses: u64,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Slots per QBER time-series block.
    #[serde(default = "default_block_size")]
    pub qber_block_size: u64,
}

fn default_pulses() -> u64 {
    10_000_000
}
fn default_seed() -> u64 {
    7
}
fn default_block_size() -> u64 {
    1_000_000
}

/// Per-system link section (insertion loss comes from the carrying channel
/// unless overridden here).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct SystemLinkConfig<R: Real> {
    #[serde(default = "default_fiber_length")]
    pub fiber_length_km: R,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: R,
    #[serde(default = "default_detector_efficiency")]
    pub detector_efficiency: R,
    #[serde(default = "default_dark_prob")]
    pub dark_count_prob_per_gate: R,
    /// Fringe visibility; mutually exclusive with `target_qber`.
    #[serde(default)]
    pub visibility: Option<R>,
    /// Signal-state QBER to calibrate the visibility against (solo link).
    #[serde(default)]
    pub target_qber: Option<R>,
    /// Temporal overlap of asynchronous aggressor pulses with this
    /// receiver's detection gate.
    #[serde(default = "default_gate_overlap")]
    pub crosstalk_gate_overlap: R,
    #[serde(default)]
    pub insertion_loss_db: Option<R>,
}

fn default_fiber_length<R: Real>() -> R {
    real(25.0)
}
fn default_attenuation<R: Real>() -> R {
    real(0.2)
}
fn default_detector_efficiency<R: Real>() -> R {
    real(0.15)
}
fn default_dark_prob<R: Real>() -> R {
    real(1.5e-6)
}
fn default_gate_overlap<R: Real>() -> R {
    real(0.5)
}

impl<R: Real> Default for SystemLinkConfig<R> {
    fn default() -> Self {
        Self {
            fiber_length_km: default_fiber_length(),
            attenuation_db_per_km: default_attenuation(),
            detector_efficiency: default_detector_efficiency(),
            dark_count_prob_per_gate: default_dark_prob(),
            visibility: None,
            target_qber: None,
            crosstalk_gate_overlap: default_gate_overlap(),
            insertion_loss_db: None,
        }
    }
}

/// Per-system rate section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct SystemRateConfig<R: Real> {
    #[serde(default = "default_f_ec")]
    pub error_correction_inefficiency: R,
    #[serde(default = "default_duty")]
    pub duty_factor: R,
}

fn default_f_ec<R: Real>() -> R {
    real(1.16)
}
fn default_duty<R: Real>() -> R {
    R::one()
}

impl<R: Real> Default for SystemRateConfig<R> {
    fn default() -> Self {
        Self {
            error_correction_inefficiency: default_f_ec(),
            duty_factor: default_duty(),
        }
    }
}

/// One QKD system (transmitter + receiver pair) in the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct SystemConfig<R: Real> {
    pub name: String,
    pub channel: ChannelId,
    pub receiver: ReceiverKind,
    #[serde(default = "default_clock")]
    pub clock_hz: R,
    #[serde(default = "default_basis_probability_x")]
    pub basis_probability_x: R,
    /// Decoy intensity set; required for any run.
    #[serde(default)]
    pub intensities: Option<IntensitySet<R>>,
    #[serde(default)]
    pub link: SystemLinkConfig<R>,
    #[serde(default)]
    pub rate: SystemRateConfig<R>,
}

fn default_clock<R: Real>() -> R {
    real(1e9)
}
fn default_basis_probability_x<R: Real>() -> R {
    real(0.5)
}

/// A fully described experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real", deny_unknown_fields)]
pub struct Scenario<R: Real> {
    #[serde(default)]
    pub comb: CombConfig<R>,
    #[serde(default)]
    pub plan: PlanConfig<R>,
    pub run: RunConfig,
    pub systems: Vec<SystemConfig<R>>,
}

impl<R: Real> Scenario<R> {
    /// Parses and validates a scenario from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario<R> = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Reads, parses and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The comb source described by the `[comb]` section.
    pub fn comb_spec(&self) -> CombSpec<R> {
        let pump = match (self.comb.pump_frequency_hz, self.comb.pump_wavelength_nm) {
            (Some(f), _) => f,
            (None, Some(nm)) => real(frequency_hz_from_wavelength_nm(nm)),
            (None, None) => real(frequency_hz_from_wavelength_nm(1556.09)),
        };
        CombSpec {
            pump_frequency_hz: pump,
            comb_spacing_hz: self.comb.comb_spacing_hz,
            bandwidth_3db_hz: self.comb.bandwidth_3db_hz,
            peak_power_dbm: self.comb.peak_power_dbm,
            noise_floor_dbm: self.comb.noise_floor_dbm,
        }
    }

    pub fn snr_threshold_db(&self) -> R {
        self.comb.snr_threshold_db.unwrap_or(R::zero())
    }

    /// Builds the channel plan: usable lines, grid assignment, insertion
    /// losses and the crosstalk matrix with overrides applied.
    pub fn build_plan(&self) -> Result<ChannelPlan<R>, ScenarioError> {
        let spec = self.comb_spec();
        let lines = spec.usable_lines(self.snr_threshold_db());
        if lines.is_empty() {
            return Err(invalid(
                "comb.snr_threshold_db",
                "no comb line clears the SNR threshold",
            ));
        }
        let start = self
            .plan
            .start_frequency_hz
            .unwrap_or(spec.pump_frequency_hz);
        let mut plan = assign_channels(
            &lines,
            self.plan.grid_spacing_hz,
            self.plan.channel_count,
            start,
        )?;
        if let Some(explicit) = &self.plan.insertion_loss_db {
            for (channel, &loss) in plan.channels.iter_mut().zip(explicit) {
                channel.insertion_loss_db = loss;
            }
        } else if let Some(range) = self.plan.insertion_loss_range_db {
            let count = plan.channels.len();
            for (slot, channel) in plan.channels.iter_mut().enumerate() {
                channel.insertion_loss_db = interpolated_insertion_loss(slot, count, range);
            }
        }
        plan.set_uniform_suppression(
            self.plan.adjacent_suppression_db,
            self.plan.nonadjacent_suppression_db,
        );
        for o in &self.plan.crosstalk_overrides {
            plan.set_suppression_db(o.victim, o.aggressor, o.suppression_db)?;
        }
        Ok(plan)
    }

    /// Protocol parameters of one system (intensities must have validated).
    pub fn protocol_params(&self, system: &SystemConfig<R>) -> ProtocolParams<R> {
        ProtocolParams {
            intensities: system
                .intensities
                .expect("validated scenario has intensities"),
            basis_probability_x: system.basis_probability_x,
            clock_hz: system.clock_hz,
            receiver: system.receiver,
        }
    }

    /// Link budget of one system before visibility resolution, with the
    /// insertion loss taken from its carrying channel.
    pub fn link_budget(
        &self,
        system: &SystemConfig<R>,
        plan: &ChannelPlan<R>,
    ) -> Result<LinkBudget<R>, ScenarioError> {
        let channel_loss = plan.channel(system.channel)?.insertion_loss_db;
        Ok(LinkBudget {
            fiber_length_km: system.link.fiber_length_km,
            attenuation_db_per_km: system.link.attenuation_db_per_km,
            mux_demux_insertion_db: system.link.insertion_loss_db.unwrap_or(channel_loss),
            detector_efficiency: system.link.detector_efficiency,
            dark_count_prob_per_gate: system.link.dark_count_prob_per_gate,
            visibility: system.link.visibility.unwrap_or(R::one()),
            crosstalk_background_prob: R::zero(),
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (self.comb.pump_frequency_hz, self.comb.pump_wavelength_nm) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "comb",
                    "give either pump_frequency_hz or pump_wavelength_nm, not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "comb",
                    "one of pump_frequency_hz or pump_wavelength_nm is required",
                ))
            }
            _ => {}
        }
        self.comb_spec()
            .validate()
            .map_err(|e| invalid("comb", e.to_string()))?;
        if let Some(t) = self.comb.snr_threshold_db {
            if t < R::zero() {
                return Err(invalid("comb.snr_threshold_db", "must be >= 0"));
            }
        }

        if self.plan.channel_count == 0 {
            return Err(invalid("plan.channel_count", "must be at least 1"));
        }
        if !(self.plan.grid_spacing_hz > R::zero()) {
            return Err(invalid("plan.grid_spacing_hz", "must be positive"));
        }
        if self.plan.insertion_loss_db.is_some() && self.plan.insertion_loss_range_db.is_some() {
            return Err(invalid(
                "plan",
                "give either insertion_loss_db or insertion_loss_range_db, not both",
            ));
        }
        if let Some(expl) = &self.plan.insertion_loss_db {
            if expl.len() != self.plan.channel_count {
                return Err(invalid(
                    "plan.insertion_loss_db",
                    format!(
                        "expected {} entries, got {}",
                        self.plan.channel_count,
                        expl.len()
                    ),
                ));
            }
        }
        if self.plan.adjacent_suppression_db < R::zero()
            || self.plan.nonadjacent_suppression_db < R::zero()
        {
            return Err(invalid("plan", "suppression values must be >= 0"));
        }

        if self.run.pulses == 0 {
            return Err(invalid("run.pulses", "must be at least 1"));
        }
        if self.run.qber_block_size == 0 {
            return Err(invalid("run.qber_block_size", "must be at least 1"));
        }

        if self.systems.is_empty() {
            return Err(invalid("systems", "at least one system is required"));
        }
        for (i, system) in self.systems.iter().enumerate() {
            let field = |suffix: &str| format!("systems[{i}].{suffix}");
            let intensities = system
                .intensities
                .ok_or_else(|| invalid(field("intensities"), "IntensitySet is required"))?;
            intensities
                .validate()
                .map_err(|e| invalid(field("intensities"), e.to_string()))?;
            if !(system.basis_probability_x >= R::zero()
                && system.basis_probability_x <= R::one())
            {
                return Err(invalid(field("basis_probability_x"), "must lie in [0, 1]"));
            }
            if !(system.clock_hz > R::zero()) {
                return Err(invalid(field("clock_hz"), "must be positive"));
            }
            if system.channel.0 == 0 || system.channel.0 as usize > self.plan.channel_count {
                return Err(invalid(
                    field("channel"),
                    format!(
                        "channel {} outside the plan's 1..={}",
                        system.channel, self.plan.channel_count
                    ),
                ));
            }
            let link = &system.link;
            if link.visibility.is_some() && link.target_qber.is_some() {
                return Err(invalid(
                    field("link"),
                    "give either visibility or target_qber, not both",
                ));
            }
            if let Some(v) = link.visibility {
                if !(v >= R::zero() && v <= R::one()) {
                    return Err(invalid(field("link.visibility"), "must lie in [0, 1]"));
                }
            }
            if let Some(t) = link.target_qber {
                if !(t >= R::zero() && t < real(0.5)) {
                    return Err(invalid(field("link.target_qber"), "must lie in [0, 0.5)"));
                }
            }
            if !(link.crosstalk_gate_overlap >= R::zero()
                && link.crosstalk_gate_overlap <= R::one())
            {
                return Err(invalid(
                    field("link.crosstalk_gate_overlap"),
                    "must lie in [0, 1]",
                ));
            }
            if !(link.detector_efficiency > R::zero() && link.detector_efficiency <= R::one()) {
                return Err(invalid(
                    field("link.detector_efficiency"),
                    "must lie in (0, 1]",
                ));
            }
            if !(link.dark_count_prob_per_gate >= R::zero()
                && link.dark_count_prob_per_gate <= R::one())
            {
                return Err(invalid(
                    field("link.dark_count_prob_per_gate"),
                    "must lie in [0, 1]",
                ));
            }
            if !(link.fiber_length_km >= R::zero() && link.attenuation_db_per_km >= R::zero()) {
                return Err(invalid(field("link"), "lengths and losses must be >= 0"));
            }
            let rate = &system.rate;
            if !(rate.error_correction_inefficiency >= R::one()) {
                return Err(invalid(
                    field("rate.error_correction_inefficiency"),
                    "must be >= 1",
                ));
            }
            if !(rate.duty_factor > R::zero() && rate.duty_factor <= R::one()) {
                return Err(invalid(field("rate.duty_factor"), "must lie in (0, 1]"));
            }
        }

        let mut names: Vec<&str> = self.systems.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("systems", "system names must be unique"));
        }

        if self.run.mode == RunMode::Parallel {
            let mut channels: Vec<ChannelId> =
                self.systems.iter().map(|s| s.channel).collect();
            channels.sort_unstable();
            if channels.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(
                    "systems",
                    "parallel mode requires distinct channels per system",
                ));
            }
        }
        Ok(())
    }
}

/// The bundled reference scenarios, embedded so `reproduce-paper` works
/// from any working directory.
pub mod bundled {
    /// First system alone on CH1.
    pub const TR1_SOLO: &str = include_str!("../../../scenarios/tr1_solo.toml");
    /// Second system alone on CH2.
    pub const TR2_SOLO: &str = include_str!("../../../scenarios/tr2_solo.toml");
    /// Both systems on adjacent channels (CH1 + CH2).
    pub const PARALLEL_ADJACENT: &str =
        include_str!("../../../scenarios/parallel_adjacent.toml");
    /// Both systems on non-adjacent channels (CH1 + CH3).
    pub const PARALLEL_NONADJACENT: &str =
        include_str!("../../../scenarios/parallel_nonadjacent.toml");

    /// `(name, toml)` pairs in reproduction order (solo first, so parallel
    /// rows can be compared against their solo baselines).
    pub fn all() -> [(&'static str, &'static str); 4] {
        [
            ("tr1_solo", TR1_SOLO),
            ("tr2_solo", TR2_SOLO),
            ("parallel_adjacent", PARALLEL_ADJACENT),
            ("parallel_nonadjacent", PARALLEL_NONADJACENT),
        ]
    }
}
