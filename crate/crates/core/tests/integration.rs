//! End-to-end integration checks beyond the acceptance criteria: negative
//! controls, Monte Carlo / closed-form consistency at scale, crosstalk
//! linearity, basis symmetry, random-stream isolation, and file loading.

use soliton_qkd::montecarlo::{simulate_channel, AggressorTraffic};
use soliton_qkd::protocol::ProtocolParams;
use soliton_qkd::run::run;
use soliton_qkd::scenario::bundled;
use soliton_qkd::wdm::assign_channels;
use soliton_qkd::{
    ChannelId, ChannelPlan, CombSpec, IntensityClass, IntensitySet, LinkBudget, ReceiverKind,
    Scenario,
};

fn scenario(text: &str, pulses: u64) -> Scenario {
    let mut s = Scenario::from_toml(text).unwrap();
    s.run.pulses = pulses;
    s
}

fn single_channel_plan() -> ChannelPlan {
    let spec = CombSpec::default();
    assign_channels(&spec.usable_lines(0.0), 100e9, 2, spec.pump_frequency_hz).unwrap()
}

/// Forcing a grossly wrong misalignment must blow the QBER acceptance band
/// (the negative control for the reproduction pipeline).
#[test]
fn negative_control_misalignment_fails_qber_band() {
    let mut s = scenario(bundled::TR1_SOLO, 1_000_000);
    s.systems[0].link.target_qber = None;
    s.systems[0].link.visibility = Some(0.80); // e_d = 0.10
    let report = run(&s, 1).unwrap();
    let system = &report.systems[0];
    let observed = system.gains_mc.mu.qber;
    let sifted = system.tallies.class(IntensityClass::Mu).sifted;
    let sigma = (0.0266f64 * (1.0 - 0.0266) / sifted as f64).sqrt();
    assert!(
        (observed - 0.0266).abs() > 4.0 * sigma,
        "forced e_d = 0.10 still landed in the band: {observed}"
    );
    assert!(observed > 0.08, "expected ~10% QBER, got {observed}");
}

/// Forcing 3 dB adjacent suppression must blow the multi-channel parity
/// band (the negative control for the crosstalk model).
#[test]
fn negative_control_crosstalk_fails_parity_band() {
    let solo = scenario(bundled::TR1_SOLO, 1_000_000);
    let solo_qber = run(&solo, 1).unwrap().systems[0].gains_mc.mu.qber;

    let mut par = scenario(bundled::PARALLEL_ADJACENT, 1_000_000);
    par.plan.adjacent_suppression_db = 3.0;
    let report = run(&par, 1).unwrap();
    let par_qber = report.system("TR1").unwrap().gains_mc.mu.qber;
    let shift = par_qber - solo_qber;
    assert!(
        shift > 0.005,
        "3 dB suppression should shift QBER above 0.5 pp, got {:.4} pp",
        shift * 100.0
    );
}

/// Feeding Monte Carlo tallies (1e8 slots) instead of analytic gains moves
/// the secret key rate by less than 5% relative at 25 km.
#[test]
fn skr_from_tallies_consistent_with_analytic_at_1e8() {
    let s = scenario(bundled::TR1_SOLO, 100_000_000);
    let report = run(&s, 1).unwrap();
    let system = &report.systems[0];
    let mc = system.keyrate_mc.skr_bps;
    let analytic = system.keyrate_analytic.skr_bps;
    let relative = (mc - analytic).abs() / analytic;
    assert!(
        relative < 0.05,
        "skr_mc {mc} vs analytic {analytic}: {:.2}% relative",
        relative * 100.0
    );
}

/// The empirical background click rate grows linearly with the leakage
/// fraction (slope constant to 5% over three settings).
#[test]
fn crosstalk_background_scales_linearly_with_leakage() {
    let mut plan = single_channel_plan();
    let link = LinkBudget {
        fiber_length_km: 0.0,
        mux_demux_insertion_db: 0.0,
        detector_efficiency: 1.0,
        dark_count_prob_per_gate: 0.0,
        visibility: 1.0,
        ..LinkBudget::default()
    };
    let params = ProtocolParams::new(IntensitySet::transmitter2(), ReceiverKind::DoubleSpd);
    let aggressor = AggressorTraffic {
        channel: ChannelId(2),
        mean_photon_number: 0.6,
    };
    let n = 4_000_000u64;
    let mut slopes = Vec::new();
    for k in 1..=3u32 {
        let leakage = 0.01 * k as f64;
        plan.set_suppression_db(ChannelId(1), ChannelId(2), -10.0 * leakage.log10())
            .unwrap();
        let tallies = simulate_channel(
            &plan,
            ChannelId(1),
            &link,
            &params,
            n,
            555,
            &[aggressor],
            1.0,
        )
        .unwrap();
        let rate = tallies.dark_only_clicks as f64 / n as f64;
        slopes.push(rate / leakage);
    }
    let max = slopes.iter().cloned().fold(f64::MIN, f64::max);
    let min = slopes.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        max / min < 1.05,
        "background/leakage slopes not constant to 5%: {slopes:?}"
    );
}

/// Swapping the roles of the X and Y bases (forcing all traffic into one or
/// the other) leaves gains and QBERs statistically unchanged.
#[test]
fn basis_symmetry_between_x_and_y() {
    let plan = single_channel_plan();
    let link = LinkBudget::default().with_misalignment_error(0.0264);
    let n = 2_000_000u64;
    let mut results = Vec::new();
    for p_x in [1.0, 0.0] {
        let mut params = ProtocolParams::new(IntensitySet::transmitter1(), ReceiverKind::DoubleSpd);
        params.basis_probability_x = p_x;
        let tallies =
            simulate_channel(&plan, ChannelId(1), &link, &params, n, 99, &[], 0.5).unwrap();
        let t = tallies.class(IntensityClass::Mu);
        results.push((t.sent, t.sifted, t.errors));
    }
    let (sent_x, sifted_x, errors_x) = results[0];
    let (sent_y, sifted_y, errors_y) = results[1];
    // sift rates agree within 4 sigma
    let p = 0.5 * (sifted_x as f64 / sent_x as f64 + sifted_y as f64 / sent_y as f64);
    let sigma = (p * (1.0 - p) * (1.0 / sent_x as f64 + 1.0 / sent_y as f64)).sqrt();
    let gap = (sifted_x as f64 / sent_x as f64 - sifted_y as f64 / sent_y as f64).abs();
    assert!(gap < 4.0 * sigma, "sift rate asymmetry: {gap} vs sigma {sigma}");
    // error rates agree within 4 sigma
    let ex = errors_x as f64 / sifted_x as f64;
    let ey = errors_y as f64 / sifted_y as f64;
    let e = 0.5 * (ex + ey);
    let sigma_e =
        (e * (1.0 - e) * (1.0 / sifted_x as f64 + 1.0 / sifted_y as f64)).sqrt();
    assert!(
        (ex - ey).abs() < 4.0 * sigma_e,
        "error rate asymmetry: {ex} vs {ey} (sigma {sigma_e})"
    );
}

/// Errors among hypothetically kept basis-mismatched events sit at 1/2.
#[test]
fn mismatched_basis_outcomes_are_coin_flips() {
    let plan = single_channel_plan();
    let link = LinkBudget::default().with_misalignment_error(0.0264);
    let params = ProtocolParams::new(IntensitySet::transmitter1(), ReceiverKind::DoubleSpd);
    let mut sim = soliton_qkd::montecarlo::ChannelSimulator::new(
        &plan,
        ChannelId(1),
        &link,
        &params,
        246,
        &[],
        0.5,
    )
    .unwrap();
    let mut kept = 0u64;
    let mut wrong = 0u64;
    for _ in 0..2_000_000 {
        let outcome = sim.step();
        if let Some(bit) = outcome.event.decoded_bit {
            if outcome.event.receiver_basis != outcome.pulse.basis {
                kept += 1;
                wrong += (bit != outcome.pulse.bit) as u64;
            }
        }
    }
    assert!(kept > 1000, "too few mismatched detections: {kept}");
    let rate = wrong as f64 / kept as f64;
    let sigma = (0.25 / kept as f64).sqrt();
    assert!(
        (rate - 0.5).abs() < 3.0 * sigma,
        "mismatched-basis error rate {rate} not 1/2 (sigma {sigma})"
    );
}

/// An aggressor behind essentially infinite suppression produces tallies
/// bit-identical to the solo run: the crosstalk stream never perturbs the
/// signal or dark streams.
#[test]
fn crosstalk_stream_is_isolated_from_signal_streams() {
    let solo = scenario(bundled::TR1_SOLO, 500_000);
    let solo_report = run(&solo, 1).unwrap();

    let mut muted = scenario(bundled::PARALLEL_ADJACENT, 500_000);
    muted.plan.adjacent_suppression_db = 300.0;
    muted.plan.nonadjacent_suppression_db = 300.0;
    let muted_report = run(&muted, 1).unwrap();

    assert_eq!(
        solo_report.system("TR1").unwrap().tallies,
        muted_report.system("TR1").unwrap().tallies,
    );
}

/// In parallel mode each channel's result is independent of the other
/// channels' configuration details (streams are channel-keyed).
#[test]
fn channel_results_do_not_depend_on_sibling_internals() {
    let base = scenario(bundled::PARALLEL_ADJACENT, 300_000);
    let a = run(&base, 1).unwrap();
    let mut tweaked = base.clone();
    // changing TR2's receiver kind must not move TR1's photons
    tweaked.systems[1].receiver = ReceiverKind::SingleSpd;
    let b = run(&tweaked, 1).unwrap();
    assert_eq!(
        a.system("TR1").unwrap().tallies,
        b.system("TR1").unwrap().tallies
    );
}

/// The secret key rate never improves with a longer fiber or a worse
/// interferometer.
#[test]
fn skr_is_monotone_in_length_and_misalignment() {
    let set = IntensitySet::transmitter1();
    let params = ProtocolParams::new(set, ReceiverKind::SingleSpd);
    let rate_params = soliton_qkd::RateParams::default();
    let skr_at = |length_km: f64, e_d: f64| {
        let link = LinkBudget {
            fiber_length_km: length_km,
            ..LinkBudget::default()
        }
        .with_misalignment_error(e_d);
        let gains = soliton_qkd::link::analytic_gain_set(&link, ReceiverKind::SingleSpd, &set);
        soliton_qkd::keyrate::key_rate_report(&gains, &params, &rate_params)
            .unwrap()
            .skr_bps
    };
    let mut prev = f64::INFINITY;
    for length in [0.0, 10.0, 25.0, 50.0, 80.0, 120.0] {
        let skr = skr_at(length, 0.0264);
        assert!(skr <= prev, "skr rose from {prev} to {skr} at {length} km");
        prev = skr;
    }
    let mut prev = f64::INFINITY;
    for e_d in [0.0, 0.01, 0.0264, 0.05, 0.08, 0.12] {
        let skr = skr_at(25.0, e_d);
        assert!(skr <= prev, "skr rose from {prev} to {skr} at e_d {e_d}");
        prev = skr;
    }
    assert_eq!(skr_at(25.0, 0.3), 0.0, "heavy misalignment must clamp to 0");
}

/// The whole pipeline instantiates at `f32` through the generic scalar.
#[test]
fn pipeline_runs_at_f32() {
    use soliton_qkd::keyrate::{binary_entropy, key_rate_report, RateParams};
    use soliton_qkd::link::{analytic_gain_set, LinkBudget as GenericLink};
    use soliton_qkd::protocol::{IntensitySet as GenericSet, ProtocolParams as GenericParams};

    assert_eq!(binary_entropy(0.5f32).unwrap(), 1.0f32);

    let set = GenericSet::<f32>::transmitter1();
    let link = GenericLink::<f32>::default().with_misalignment_error(0.0264);
    let params = GenericParams::new(set, ReceiverKind::SingleSpd);
    let gains = analytic_gain_set(&link, ReceiverKind::SingleSpd, &set);
    let report = key_rate_report(&gains, &params, &RateParams::default()).unwrap();
    assert!(report.skr_bps > 1e5 && report.skr_bps < 1e7);

    let mut scenario: soliton_qkd::scenario::Scenario<f32> =
        soliton_qkd::scenario::Scenario::from_toml(bundled::PARALLEL_ADJACENT).unwrap();
    scenario.run.pulses = 30_000;
    let run_report = soliton_qkd::run::run(&scenario, 2).unwrap();
    assert_eq!(run_report.systems.len(), 2);
    assert_eq!(run_report.systems[0].tallies.total_sent(), 30_000);
}

#[test]
fn scenario_loads_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.toml");
    std::fs::write(&path, bundled::TR1_SOLO).unwrap();
    let from_file = Scenario::load(&path).unwrap();
    let from_text = Scenario::from_toml(bundled::TR1_SOLO).unwrap();
    assert_eq!(from_file, from_text);

    let missing = Scenario::load(dir.path().join("nope.toml"));
    assert!(matches!(
        missing.unwrap_err(),
        soliton_qkd::scenario::ScenarioError::Io { .. }
    ));

    std::fs::write(&path, "not = [toml").unwrap();
    assert!(matches!(
        Scenario::load(&path).unwrap_err(),
        soliton_qkd::scenario::ScenarioError::Parse(_)
    ));
}

/// The frozen duty factors in the bundled scenarios are exactly the values
/// that map the analytic pre-duty rate onto the published SKRs.
#[test]
fn frozen_duty_factors_match_analytic_fit() {
    for text in [bundled::TR1_SOLO, bundled::TR2_SOLO] {
        let mut s = Scenario::from_toml(text).unwrap();
        s.run.pulses = 1;
        let frozen = s.systems[0].rate.duty_factor;
        let clock = s.systems[0].clock_hz;
        let report = run(&s, 1).unwrap();
        let system = &report.systems[0];
        let target = soliton_qkd::run::paper_skr_bps(&system.name).unwrap();
        let fit = target / system.pre_duty_rate_bps(clock);
        assert!(
            (fit - frozen).abs() / frozen < 1e-12,
            "{}: frozen duty {frozen} drifted from fit {fit}",
            system.name
        );
    }
}

/// Reproduction summary renders a table with one row per (scenario, system).
#[test]
fn reproduce_paper_summary_has_expected_rows() {
    // tiny pulse count: exercises structure, not statistics
    let summary = soliton_qkd::run::reproduce_paper::<f64>(Some(50_000), None, 2);
    assert_eq!(summary.rows.len(), 6);
    let table = summary.table();
    assert!(table.contains("tr1_solo"));
    assert!(table.contains("parallel_nonadjacent"));
    assert!(table.lines().count() >= 8);
    for name in ["TR1", "TR2"] {
        assert!(table.contains(name));
    }
}
