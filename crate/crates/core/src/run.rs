//! Scenario execution and reporting.
//!
//! [`run`] executes every system of a scenario (serially or with worker
//! threads), producing per-system tallies, gains, key rates via both the
//! Monte Carlo and the closed-form route, and a per-block QBER time series.
//! Results depend only on the scenario contents: random streams are keyed
//! by (master seed, channel), so serial and concurrent execution agree
//! bit for bit. [`reproduce_paper`] runs the bundled scenarios and scores
//! them against the published figures.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::comb::CombSpec;
use crate::float::Real;
use crate::keyrate::{key_rate_report, DecoyError, GainSet, KeyRateReport, RateParams};
use crate::link::{analytic_gain_set, calibrate, LinkError};
use crate::montecarlo::{AggressorTraffic, ChannelSimulator, SimError, TallyCounters};
use crate::protocol::{IntensityClass, ReceiverKind};
use crate::scenario::{bundled, RunMode, Scenario, ScenarioError, SystemConfig};
use crate::wdm::{ChannelId, ChannelPlan};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Decoy(#[from] DecoyError),
    #[error("system {system} (channel {channel}): {source}")]
    System {
        system: String,
        channel: ChannelId,
        #[source]
        source: Box<RunError>,
    },
}

/// Per-class statistics of one QBER time-series block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct BlockClassStats<R: Real> {
    pub class: IntensityClass,
    pub sent: u64,
    pub sifted: u64,
    pub errors: u64,
    pub qber: R,
}

/// One block of the per-run QBER time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct QberBlock<R: Real> {
    pub index: u64,
    pub classes: [BlockClassStats<R>; 3],
}

impl<R: Real> QberBlock<R> {
    fn from_tallies(index: u64, tallies: &TallyCounters) -> Self {
        let class = |c: IntensityClass| {
            let t = tallies.class(c);
            BlockClassStats {
                class: c,
                sent: t.sent,
                sifted: t.sifted,
                errors: t.errors,
                qber: tallies.qber(c),
            }
        };
        Self {
            index,
            classes: [
                class(IntensityClass::Mu),
                class(IntensityClass::Nu1),
                class(IntensityClass::Nu2),
            ],
        }
    }
}

/// Resolved channel physics of one system as actually simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct EffectiveChannel<R: Real> {
    pub insertion_loss_db: R,
    pub transmittance: R,
    pub effective_eta: R,
    pub visibility: R,
    pub misalignment_error: R,
    pub background_click_prob: R,
    pub crosstalk_click_prob: R,
}

/// Everything measured and derived for one system in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct SystemReport<R: Real> {
    pub name: String,
    pub channel: ChannelId,
    pub receiver: ReceiverKind,
    pub effective: EffectiveChannel<R>,
    pub tallies: TallyCounters,
    /// Gains and QBERs estimated from the Monte Carlo tallies.
    pub gains_mc: GainSet<R>,
    /// Gains and QBERs from the closed-form channel model.
    pub gains_analytic: GainSet<R>,
    /// Decoy bounds and key rate fed by the Monte Carlo gains.
    pub keyrate_mc: KeyRateReport<R>,
    /// Decoy bounds and key rate fed by the analytic gains.
    pub keyrate_analytic: KeyRateReport<R>,
    pub qber_blocks: Vec<QberBlock<R>>,
}

impl<R: Real> SystemReport<R> {
    /// Analytic secret-key throughput before the duty factor, bits/s.
    pub fn pre_duty_rate_bps(&self, clock_hz: R) -> R {
        self.keyrate_analytic.r_per_pulse * clock_hz
    }
}

/// Full result of executing one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct RunReport<R: Real> {
    pub config_hash: String,
    pub mode: RunMode,
    pub master_seed: u64,
    pub pulses: u64,
    pub systems: Vec<SystemReport<R>>,
    /// Wall-clock duration of the run; excluded from
    /// [`numeric_digest`](Self::numeric_digest).
    pub wall_clock_ms: u128,
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the validated scenario's semantic content: identical for files
/// differing only in formatting or comments.
pub fn config_hash<R: Real>(scenario: &Scenario<R>) -> String {
    let canonical = serde_json::to_vec(scenario).expect("scenario serializes");
    hex_digest(&canonical)
}

impl<R: Real> RunReport<R> {
    pub fn system(&self, name: &str) -> Option<&SystemReport<R>> {
        self.systems.iter().find(|s| s.name == name)
    }

    /// Digest over every reproducible field (wall clock excluded); equal
    /// digests mean numerically identical payloads.
    pub fn numeric_digest(&self) -> String {
        #[derive(Serialize)]
        #[serde(bound = "R: Real")]
        struct Payload<'a, R: Real> {
            config_hash: &'a str,
            mode: RunMode,
            master_seed: u64,
            pulses: u64,
            systems: &'a [SystemReport<R>],
        }
        let payload = Payload {
            config_hash: &self.config_hash,
            mode: self.mode,
            master_seed: self.master_seed,
            pulses: self.pulses,
            systems: &self.systems,
        };
        hex_digest(&serde_json::to_vec(&payload).expect("report serializes"))
    }
}

fn run_system<R: Real>(
    scenario: &Scenario<R>,
    plan: &ChannelPlan<R>,
    system: &SystemConfig<R>,
) -> Result<SystemReport<R>, RunError> {
    let params = scenario.protocol_params(system);
    let mut link = scenario.link_budget(system, plan)?;

    // Calibration targets the isolated link: the misalignment error is an
    // intrinsic interferometer property, measured without aggressors.
    if let Some(target) = system.link.target_qber {
        let (e_d, _p_bg) = calibrate(target, &link, system.receiver, params.intensities.mu)?;
        link = link.with_misalignment_error(e_d);
    }

    let aggressors: Vec<AggressorTraffic<R>> = match scenario.run.mode {
        RunMode::Solo => Vec::new(),
        RunMode::Parallel => scenario
            .systems
            .iter()
            .filter(|other| other.name != system.name)
            .map(|other| AggressorTraffic {
                channel: other.channel,
                mean_photon_number: other
                    .intensities
                    .expect("validated scenario has intensities")
                    .average_photon_number(),
            })
            .collect(),
    };

    let mut sim = ChannelSimulator::new(
        plan,
        system.channel,
        &link,
        &params,
        scenario.run.master_seed,
        &aggressors,
        system.link.crosstalk_gate_overlap,
    )?;
    let effective_link = *sim.effective_link();

    let mut totals = TallyCounters::default();
    let mut qber_blocks = Vec::new();
    let mut remaining = scenario.run.pulses;
    let mut index = 0u64;
    while remaining > 0 {
        let chunk = remaining.min(scenario.run.qber_block_size);
        let block = sim.run(chunk);
        qber_blocks.push(QberBlock::from_tallies(index, &block));
        totals.merge(&block);
        remaining -= chunk;
        index += 1;
    }

    let rate = RateParams {
        error_correction_inefficiency: system.rate.error_correction_inefficiency,
        sift_factor: params.sift_factor(),
        duty_factor: system.rate.duty_factor,
    };
    let gains_mc = totals.gain_set();
    let keyrate_mc = key_rate_report(&gains_mc, &params, &rate)?;
    let gains_analytic = analytic_gain_set(&effective_link, system.receiver, &params.intensities);
    let keyrate_analytic = key_rate_report(&gains_analytic, &params, &rate)?;

    Ok(SystemReport {
        name: system.name.clone(),
        channel: system.channel,
        receiver: system.receiver,
        effective: EffectiveChannel {
            insertion_loss_db: effective_link.mux_demux_insertion_db,
            transmittance: effective_link.transmittance(),
            effective_eta: effective_link.effective_eta(system.receiver),
            visibility: effective_link.visibility,
            misalignment_error: effective_link.misalignment_error(),
            background_click_prob: effective_link.background_click_prob(system.receiver),
            crosstalk_click_prob: effective_link.crosstalk_background_prob,
        },
        tallies: totals,
        gains_mc,
        gains_analytic,
        keyrate_mc,
        keyrate_analytic,
        qber_blocks,
    })
}

/// Executes a scenario with up to `jobs` concurrent system simulations.
///
/// `jobs <= 1` runs serially; results are identical either way.
pub fn run<R: Real>(scenario: &Scenario<R>, jobs: usize) -> Result<RunReport<R>, RunError> {
    scenario.validate()?;
    let started = Instant::now();
    let plan = scenario.build_plan()?;
    let hash = config_hash(scenario);

    let with_context = |system: &SystemConfig<R>| {
        run_system(scenario, &plan, system).map_err(|source| RunError::System {
            system: system.name.clone(),
            channel: system.channel,
            source: Box::new(source),
        })
    };

    let n = scenario.systems.len();
    let systems: Vec<SystemReport<R>> = if jobs <= 1 || n <= 1 {
        scenario
            .systems
            .iter()
            .map(with_context)
            .collect::<Result<_, _>>()?
    } else {
        type Slots<R> = Mutex<Vec<Option<Result<SystemReport<R>, RunError>>>>;
        let slots: Slots<R> = Mutex::new((0..n).map(|_| None).collect());
        let cursor = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(n) {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let result = with_context(&scenario.systems[i]);
                    slots.lock().expect("worker poisoned the slots")[i] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|slot| slot.expect("every system simulated"))
            .collect::<Result<_, _>>()?
    };

    Ok(RunReport {
        config_hash: hash,
        mode: scenario.run.mode,
        master_seed: scenario.run.master_seed,
        pulses: scenario.run.pulses,
        systems,
        wall_clock_ms: started.elapsed().as_millis(),
    })
}

/// Published average secret key rates the bundled scenarios reproduce.
pub fn paper_skr_bps(system_name: &str) -> Option<f64> {
    match system_name {
        "TR1" => Some(78_764.0),
        "TR2" => Some(195_360.0),
        _ => None,
    }
}

/// Maximum acceptable QBER shift between solo and parallel operation.
pub const QBER_SHIFT_LIMIT: f64 = 0.005;
/// Order-of-magnitude sanity band for the pre-duty secret-key throughput.
pub const PRE_DUTY_BAND_BPS: (f64, f64) = (1e5, 1e7);
/// Relative tolerance of the frozen-duty SKR regression.
pub const SKR_RELATIVE_TOLERANCE: f64 = 0.01;

/// One acceptance check of a summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

/// One (scenario, system) line of the reproduction summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct SummaryRow<R: Real> {
    pub scenario: String,
    pub system: String,
    pub channel: Option<ChannelId>,
    pub qber_mu: Option<R>,
    pub skr_bps: Option<R>,
    pub pre_duty_bps: Option<R>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Result table of [`reproduce_paper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct PaperSummary<R: Real> {
    pub rows: Vec<SummaryRow<R>>,
    pub all_pass: bool,
}

impl<R: Real> PaperSummary<R> {
    /// Aligned-column text table for terminals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:<6} {:<4} {:>9} {:>12} {:>14}  {:<6} checks\n",
            "scenario", "system", "ch", "E_mu[%]", "SKR[kbps]", "preduty[kbps]", "result"
        ));
        for row in &self.rows {
            let fmt_opt = |v: Option<R>, scale: f64| match v {
                Some(x) => format!("{:.4}", x.to_f64().unwrap_or(f64::NAN) * scale),
                None => "-".to_string(),
            };
            let checks = row
                .checks
                .iter()
                .map(|c| format!("{}[{}]", c.name, if c.pass { "ok" } else { "FAIL" }))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!(
                "{:<22} {:<6} {:<4} {:>9} {:>12} {:>14}  {:<6} {}\n",
                row.scenario,
                row.system,
                row.channel
                    .map(|c| c.to_string())
                    .unwrap_or_else(|| "-".into()),
                fmt_opt(row.qber_mu, 100.0),
                fmt_opt(row.skr_bps, 1e-3),
                fmt_opt(row.pre_duty_bps, 1e-3),
                if row.pass { "PASS" } else { "FAIL" },
                checks,
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.all_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn solo_row_checks<R: Real>(
    system: &SystemReport<R>,
    target_qber: Option<R>,
    clock_hz: R,
) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    if let Some(target) = target_qber {
        let t = system.tallies.class(IntensityClass::Mu);
        let observed = system.gains_mc.mu.qber.to_f64().unwrap_or(f64::NAN);
        let target = target.to_f64().unwrap_or(f64::NAN);
        let sigma = (target * (1.0 - target) / (t.sifted.max(1) as f64)).sqrt();
        let deviation = (observed - target).abs();
        checks.push(CheckResult {
            name: "qber-4sigma".into(),
            detail: format!(
                "observed {:.4}% vs {:.2}% +/- {:.4}% (4 sigma over {} sifted)",
                observed * 100.0,
                target * 100.0,
                4.0 * sigma * 100.0,
                t.sifted
            ),
            pass: deviation <= 4.0 * sigma,
        });
    }
    if let Some(paper) = paper_skr_bps(&system.name) {
        let skr = system.keyrate_analytic.skr_bps.to_f64().unwrap_or(f64::NAN);
        let relative = (skr - paper).abs() / paper;
        checks.push(CheckResult {
            name: "skr-regression".into(),
            detail: format!(
                "analytic {:.3} kbps vs published {:.3} kbps ({:+.3}%)",
                skr / 1e3,
                paper / 1e3,
                relative * 100.0
            ),
            pass: relative <= SKR_RELATIVE_TOLERANCE,
        });
    }
    let pre_duty = system
        .pre_duty_rate_bps(clock_hz)
        .to_f64()
        .unwrap_or(f64::NAN);
    checks.push(CheckResult {
        name: "pre-duty-band".into(),
        detail: format!(
            "{:.3e} bps inside [{:.0e}, {:.0e}]",
            pre_duty, PRE_DUTY_BAND_BPS.0, PRE_DUTY_BAND_BPS.1
        ),
        pass: pre_duty >= PRE_DUTY_BAND_BPS.0 && pre_duty <= PRE_DUTY_BAND_BPS.1,
    });
    checks
}

/// Runs the bundled scenarios and scores each system against the published
/// QBER and SKR figures; parallel rows are additionally checked for QBER
/// parity against the solo baselines from the same invocation.
pub fn reproduce_paper<R: Real>(
    pulses_override: Option<u64>,
    seed_override: Option<u64>,
    jobs: usize,
) -> PaperSummary<R> {
    let mut rows = Vec::new();
    let mut solo_qber: Vec<(String, R)> = Vec::new();

    for (name, text) in bundled::all() {
        let scenario = match Scenario::<R>::from_toml(text) {
            Ok(mut s) => {
                if let Some(p) = pulses_override {
                    s.run.pulses = p;
                }
                if let Some(seed) = seed_override {
                    s.run.master_seed = seed;
                }
                s
            }
            Err(err) => {
                rows.push(SummaryRow {
                    scenario: name.to_string(),
                    system: "-".into(),
                    channel: None,
                    qber_mu: None,
                    skr_bps: None,
                    pre_duty_bps: None,
                    checks: vec![CheckResult {
                        name: "load".into(),
                        detail: err.to_string(),
                        pass: false,
                    }],
                    pass: false,
                });
                continue;
            }
        };
        let report = match run(&scenario, jobs) {
            Ok(r) => r,
            Err(err) => {
                rows.push(SummaryRow {
                    scenario: name.to_string(),
                    system: "-".into(),
                    channel: None,
                    qber_mu: None,
                    skr_bps: None,
                    pre_duty_bps: None,
                    checks: vec![CheckResult {
                        name: "run".into(),
                        detail: err.to_string(),
                        pass: false,
                    }],
                    pass: false,
                });
                continue;
            }
        };

        for (config, system) in scenario.systems.iter().zip(&report.systems) {
            let mut checks = match scenario.run.mode {
                RunMode::Solo => {
                    solo_qber.push((system.name.clone(), system.gains_mc.mu.qber));
                    solo_row_checks(system, config.link.target_qber, config.clock_hz)
                }
                RunMode::Parallel => Vec::new(),
            };
            if scenario.run.mode == RunMode::Parallel {
                let baseline = solo_qber
                    .iter()
                    .find(|(n, _)| n == &system.name)
                    .map(|(_, q)| *q);
                match baseline {
                    Some(solo) => {
                        let shift = (system.gains_mc.mu.qber - solo)
                            .to_f64()
                            .unwrap_or(f64::NAN)
                            .abs();
                        checks.push(CheckResult {
                            name: "qber-shift".into(),
                            detail: format!(
                                "|{:.4}% - {:.4}%| = {:.4} pp < {:.2} pp",
                                system.gains_mc.mu.qber.to_f64().unwrap_or(f64::NAN) * 100.0,
                                solo.to_f64().unwrap_or(f64::NAN) * 100.0,
                                shift * 100.0,
                                QBER_SHIFT_LIMIT * 100.0
                            ),
                            pass: shift < QBER_SHIFT_LIMIT,
                        });
                    }
                    None => checks.push(CheckResult {
                        name: "qber-shift".into(),
                        detail: "no solo baseline available".into(),
                        pass: false,
                    }),
                }
            }
            let pass = checks.iter().all(|c| c.pass);
            rows.push(SummaryRow {
                scenario: name.to_string(),
                system: system.name.clone(),
                channel: Some(system.channel),
                qber_mu: Some(system.gains_mc.mu.qber),
                skr_bps: Some(system.keyrate_analytic.skr_bps),
                pre_duty_bps: Some(system.pre_duty_rate_bps(config.clock_hz)),
                checks,
                pass,
            });
        }
    }

    let all_pass = !rows.is_empty() && rows.iter().all(|r| r.pass);
    PaperSummary { rows, all_pass }
}

/// CSV spectrum of a comb: `index,frequency_hz,power_dbm,snr_db`.
pub fn comb_csv<R: Real>(spec: &CombSpec<R>, snr_threshold_db: R) -> String {
    let mut out = String::from("index,frequency_hz,power_dbm,snr_db\n");
    for line in spec.usable_lines(snr_threshold_db) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            line.index, line.frequency_hz, line.power_dbm, line.snr_db
        ));
    }
    out
}

/// CSV of the per-block QBER series:
/// `system,channel,block,class,sent,sifted,errors,qber`.
pub fn qber_csv<R: Real>(report: &RunReport<R>) -> String {
    let mut out = String::from("system,channel,block,class,sent,sifted,errors,qber\n");
    for system in &report.systems {
        for block in &system.qber_blocks {
            for stats in &block.classes {
                out.push_str(&format!(
                    "{},{},{},{:?},{},{},{},{}\n",
                    system.name,
                    system.channel,
                    block.index,
                    stats.class,
                    stats.sent,
                    stats.sifted,
                    stats.errors,
                    stats.qber
                ));
            }
        }
    }
    out
}
