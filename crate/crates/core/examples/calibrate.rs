//! Prints the energy budget under which a given fraction of random vehicles
//! can run cut layer 2 at full frequency and power with an equal share of
//! the band.
//!
//! `cargo run --release --example calibrate -- [fraction] [vehicles] [seed]`

use asfv_core::cost::{vehicle_round_cost, Allocation};
use asfv_core::harness::Scenario;
use asfv_core::mobility::spawn_fleet;
use asfv_core::radio::downlink_rate;
use asfv_core::seed::SeedStream;

fn main() -> asfv_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fraction: f64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(0.8);
    let share_of: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let seed: u64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(1);

    let sc = Scenario::default();
    let mobility = sc.mobility_config();
    let channel = sc.channel_params();
    let profile = sc.load_profile()?;
    let bounds = mobility.bounds();
    let mut rng = SeedStream::new(seed).child("calibrate").rng();
    let fleet = spawn_fleet(&mobility, 20_000, &mut rng)?;
    let mut energies = Vec::with_capacity(fleet.len());
    for v in &fleet {
        let r_dl = downlink_rate(&channel, &[v.distance_to_ec_m])?;
        let a = Allocation {
            cut: 2,
            beta: 1.0 / share_of as f64,
            cpu_hz: bounds.cpu_hz.max,
            power_w: bounds.power_w.max,
        };
        let (_, e) = vehicle_round_cost(v, &a, &profile, &channel, r_dl, sc.ec.cpu_hz)?;
        energies.push(e);
    }
    energies.sort_by(f64::total_cmp);
    let idx = ((fraction * energies.len() as f64).ceil() as usize).clamp(1, energies.len()) - 1;
    println!("vehicles={} share=1/{share_of} fraction={fraction}", energies.len());
    println!("median energy {:.4} J", energies[energies.len() / 2]);
    println!("energy budget {:.4} J", energies[idx]);
    Ok(())
}
