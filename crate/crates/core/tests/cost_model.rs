//! Round costs recomputed by hand from the channel and workload formulas.

use proptest::prelude::*;

use asfv_core::cost::{phase_costs, round_costs, vehicle_round_cost, Allocation, RoundScenario};
use asfv_core::harness::Scenario;
use asfv_core::mobility::VehicleState;
use asfv_core::profile::CutLayerProfile;
use asfv_core::radio::ChannelParams;

fn vehicle(id: usize, distance_m: f64, samples: usize) -> VehicleState {
    VehicleState {
        id,
        entry_distance_m: 100.0,
        distance_to_ec_m: distance_m,
        speed_mps: 20.0,
        cpu_hz: 1.5e10,
        tx_power_w: 10f64.powf(2.5) / 1e3,
        gain: 1.0,
        dataset_size: samples,
        capacitance: 1e-28,
    }
}

fn scenario(vehicles: Vec<VehicleState>) -> RoundScenario {
    let sc = Scenario::default();
    let profile = sc.load_profile().unwrap();
    sc.round_scenario(&profile, vehicles)
}

/// `(t, e)` of one vehicle, written out term by term.
fn by_hand(v: &VehicleState, a: &Allocation, ch: &ChannelParams, p: &CutLayerProfile, f_ec: f64, r_dl: f64) -> (f64, f64) {
    let row = &p.layers[a.cut];
    let n = v.dataset_size as f64;
    let snr = v.gain * a.power_w * v.distance_to_ec_m.powf(-ch.pathloss_exp) / ch.noise_power_w;
    let r_ul = a.beta * ch.bandwidth_hz * (1.0 + snr).ln();
    let cycles_v = n * 3.0 * row.fwd_vehicle_flops / 16.0;
    let cycles_s = n * 3.0 * row.fwd_server_flops / 16.0;
    let up_bits = n * row.smashed_bits + row.vehicle_model_bits;
    let down_bits = n * row.smashed_grad_bits + row.vehicle_model_bits;
    let t = cycles_v / a.cpu_hz + up_bits / r_ul + cycles_s / f_ec + down_bits / r_dl;
    let e = 0.5 * v.capacitance * a.cpu_hz * a.cpu_hz * cycles_v + a.power_w * up_bits / r_ul;
    (t, e)
}

#[test]
fn single_vehicle_matches_hand_computation() {
    let sc = scenario(vec![vehicle(0, 200.0, 640)]);
    let row = &sc.profile.layers[4];
    assert_eq!(row.smashed_bits, 128.0 * 16.0 * 16.0 * 32.0);
    assert_eq!(sc.profile.flops_per_cycle, 16.0);
    assert_eq!(sc.profile.bwd_factor, 2.0);

    let a = Allocation { cut: 4, beta: 0.2, cpu_hz: 1.5e10, power_w: 10f64.powf(2.5) / 1e3 };
    let ch = &sc.channel;
    let snr_dl = ch.ec_gain * ch.ec_power_w * 200f64.powf(-ch.pathloss_exp) / ch.noise_power_w;
    let r_dl = ch.bandwidth_hz * (1.0 + snr_dl).ln();
    assert!((sc.downlink_rate().unwrap() - r_dl).abs() <= 1e-12 * r_dl);

    let (t, e) = by_hand(&sc.vehicles[0], &a, ch, &sc.profile, sc.ec_cpu_hz, r_dl);
    let (t2, e2) = vehicle_round_cost(&sc.vehicles[0], &a, &sc.profile, ch, r_dl, sc.ec_cpu_hz).unwrap();
    assert!((t - t2).abs() <= 1e-12 * t, "{t} vs {t2}");
    assert!((e - e2).abs() <= 1e-12 * e, "{e} vs {e2}");

    let b = round_costs(&sc, &[a]).unwrap();
    assert!((b.round_time - t).abs() <= 1e-12 * t);
    assert!((b.comm_delay() + b.comp_delay() - t).abs() <= 1e-12 * t);
    assert!((b.comm_energy() + b.comp_energy() - e).abs() <= 1e-12 * e);
}

#[test]
fn round_time_is_parallel_maximum_plus_serial_sum() {
    let sc = scenario(vec![vehicle(0, 150.0, 500), vehicle(1, 400.0, 800), vehicle(2, 60.0, 300)]);
    let allocs = [
        Allocation { cut: 2, beta: 0.5, cpu_hz: 1.2e10, power_w: 0.2 },
        Allocation { cut: 6, beta: 0.3, cpu_hz: 2.0e10, power_w: 0.8 },
        Allocation { cut: 8, beta: 0.2, cpu_hz: 1.0e10, power_w: 0.5 },
    ];
    let r_dl = sc.downlink_rate().unwrap();
    let phases: Vec<_> = sc
        .vehicles
        .iter()
        .zip(&allocs)
        .map(|(v, a)| phase_costs(v, a, &sc.profile, &sc.channel, r_dl, sc.ec_cpu_hz).unwrap())
        .collect();
    let parallel = phases.iter().map(|p| p.t_e + p.t_s + p.t_u + p.t_w).fold(0.0, f64::max);
    let serial: f64 = phases.iter().map(|p| p.t_d + p.t_r + p.t_g).sum();
    let b = round_costs(&sc, &allocs).unwrap();
    assert!((b.round_time - (parallel + serial)).abs() <= 1e-12 * b.round_time);
    for (v, a) in sc.vehicles.iter().zip(&allocs) {
        let (t, e) = by_hand(v, a, &sc.channel, &sc.profile, sc.ec_cpu_hz, r_dl);
        let got = b.vehicles.iter().find(|c| c.vehicle == v.id).unwrap();
        assert!((got.time - t).abs() <= 1e-12 * t);
        assert!((got.energy - e).abs() <= 1e-12 * e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn time_falls_and_energy_rises_with_resources(
        cut in 1usize..=8,
        beta in 0.01f64..0.9,
        f in 1e10f64..1.9e10,
        phi in 0.1f64..0.9,
        d in 20.0f64..500.0,
        samples in 50usize..1000,
    ) {
        let sc = scenario(vec![vehicle(0, d, samples)]);
        let v = &sc.vehicles[0];
        let r_dl = sc.downlink_rate().unwrap();
        let cost = |a: Allocation| vehicle_round_cost(v, &a, &sc.profile, &sc.channel, r_dl, sc.ec_cpu_hz).unwrap();
        let a = Allocation { cut, beta, cpu_hz: f, power_w: phi };
        let (t, e) = cost(a);
        let phases = phase_costs(v, &a, &sc.profile, &sc.channel, r_dl, sc.ec_cpu_hz).unwrap();
        prop_assert!((phases.total_time() - t).abs() <= 1e-12 * t);
        prop_assert!((phases.total_energy() - e).abs() <= 1e-12 * e);

        let (t_f, e_f) = cost(Allocation { cpu_hz: f * 1.05, ..a });
        prop_assert!(t_f < t && e_f > e);
        let (t_b, e_b) = cost(Allocation { beta: beta * 1.1, ..a });
        prop_assert!(t_b < t && e_b < e);
        let (t_p, _) = cost(Allocation { power_w: phi * 1.1, ..a });
        prop_assert!(t_p < t);
    }
}
