//! CSV results, gnuplot-style columnar files and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cost::Scheme;
use crate::error::{Error, Result};

use super::sweep::{CutBreakdown, SweepResults};
use super::Scenario;

/// Write `rows` as CSV with a header taken from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct DelayRow {
    vehicles: usize,
    scenario: usize,
    scheme: String,
    comm_delay: f64,
    comp_delay: f64,
    overall_delay: f64,
}

#[derive(Serialize)]
struct EnergyRow {
    vehicles: usize,
    scenario: usize,
    scheme: String,
    comm_energy: f64,
    comp_energy: f64,
    total_energy: f64,
    max_energy: f64,
}

#[derive(Serialize)]
struct TraceRow {
    vehicles: usize,
    scenario: usize,
    sweep: usize,
    objective: f64,
}

#[derive(Serialize)]
struct BreakdownRow {
    vehicles: usize,
    scenario: usize,
    cut: usize,
    vehicle_comp: f64,
    smashed_comm: f64,
    uplink_comm: f64,
    downlink_comm: f64,
    server_comp: f64,
}

/// Delay, energy, objective-trace and cut-breakdown CSVs. Returns the paths
/// written.
pub fn write_sweep(results: &SweepResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let (mut delay, mut energy, mut trace, mut breakdown) = (vec![], vec![], vec![], vec![]);
    for p in &results.points {
        for c in &p.comparison.costs {
            delay.push(DelayRow {
                vehicles: p.vehicles,
                scenario: p.scenario,
                scheme: c.scheme.to_string(),
                comm_delay: c.comm_delay,
                comp_delay: c.comp_delay,
                overall_delay: c.overall_delay(),
            });
            energy.push(EnergyRow {
                vehicles: p.vehicles,
                scenario: p.scenario,
                scheme: c.scheme.to_string(),
                comm_energy: c.comm_energy,
                comp_energy: c.comp_energy,
                total_energy: c.total_energy(),
                max_energy: c.max_energy,
            });
        }
        if let Some(r) = &p.comparison.report {
            for (i, &objective) in r.objective_trace.iter().enumerate() {
                trace.push(TraceRow {
                    vehicles: p.vehicles,
                    scenario: p.scenario,
                    sweep: i + 1,
                    objective,
                });
            }
        }
        for &row in &p.breakdown {
            let CutBreakdown { cut, vehicle_comp, smashed_comm, uplink_comm, downlink_comm, server_comp } = row;
            breakdown.push(BreakdownRow {
                vehicles: p.vehicles,
                scenario: p.scenario,
                cut,
                vehicle_comp,
                smashed_comm,
                uplink_comm,
                downlink_comm,
                server_comp,
            });
        }
    }
    let paths = ["sweep_delay.csv", "sweep_energy.csv", "sweep_trace.csv", "cut_breakdown.csv"].map(|n| dir.join(n));
    write_csv(&paths[0], &delay)?;
    write_csv(&paths[1], &energy)?;
    write_csv(&paths[2], &trace)?;
    write_csv(&paths[3], &breakdown)?;
    Ok(paths.to_vec())
}

/// Mean over scenarios of `value`, keyed by vehicle count then scheme.
fn means(results: &SweepResults, value: impl Fn(&crate::cost::SchemeCost) -> f64) -> BTreeMap<usize, Vec<(Scheme, f64)>> {
    let mut acc: BTreeMap<usize, Vec<(Scheme, f64, usize)>> = BTreeMap::new();
    for p in &results.points {
        let row = acc.entry(p.vehicles).or_default();
        for c in &p.comparison.costs {
            match row.iter_mut().find(|(s, _, _)| *s == c.scheme) {
                Some(e) => {
                    e.1 += value(c);
                    e.2 += 1;
                }
                None => row.push((c.scheme, value(c), 1)),
            }
        }
    }
    acc.into_iter()
        .map(|(n, row)| (n, row.into_iter().map(|(s, v, k)| (s, v / k as f64)).collect()))
        .collect()
}

fn scheme_table(title: &str, table: &BTreeMap<usize, Vec<(Scheme, f64)>>) -> String {
    let mut out = String::new();
    let schemes: Vec<Scheme> = table.values().next().map(|r| r.iter().map(|(s, _)| *s).collect()).unwrap_or_default();
    let _ = writeln!(out, "# {title}");
    let _ = write!(out, "# vehicles");
    for s in &schemes {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    for (n, row) in table {
        let _ = write!(out, "{n}");
        for (_, v) in row {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

/// Sum two tables cell by cell.
fn add(a: &BTreeMap<usize, Vec<(Scheme, f64)>>, b: &BTreeMap<usize, Vec<(Scheme, f64)>>) -> BTreeMap<usize, Vec<(Scheme, f64)>> {
    a.iter()
        .map(|(n, row)| {
            let other = &b[n];
            (*n, row.iter().zip(other).map(|((s, x), (_, y))| (*s, x + y)).collect())
        })
        .collect()
}

/// Whitespace-separated plot data: `cut_breakdown` (per-cut delay
/// breakdown), `bcd_trace` (objective per sweep), `delay_*` and `energy_*`
/// (communication, computation and overall, per scheme and vehicle count).
pub fn emit_plot_data(results: &SweepResults, dir: &Path) -> Result<Vec<PathBuf>> {
    if results.points.is_empty() || results.points.iter().all(|p| p.comparison.costs.is_empty()) {
        return Err(Error::MissingResults("no sweep points to plot".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write_text(&path, &text)?;
        files.push(path);
        Ok(())
    };

    let mut cuts: BTreeMap<usize, ([f64; 5], usize)> = BTreeMap::new();
    for b in results.points.iter().flat_map(|p| &p.breakdown) {
        let e = cuts.entry(b.cut).or_insert(([0.0; 5], 0));
        for (acc, v) in e.0.iter_mut().zip([b.vehicle_comp, b.smashed_comm, b.uplink_comm, b.downlink_comm, b.server_comp]) {
            *acc += v;
        }
        e.1 += 1;
    }
    let mut breakdown = String::from("# mean per-vehicle delay by cut layer, s\n# cut vehicle_comp smashed_comm uplink_comm downlink_comm server_comp\n");
    for (cut, (sums, k)) in &cuts {
        let _ = write!(breakdown, "{cut}");
        for s in sums {
            let _ = write!(breakdown, " {}", s / *k as f64);
        }
        breakdown.push('\n');
    }
    put("cut_breakdown.dat", breakdown)?;

    let mut traces: BTreeMap<usize, &[f64]> = BTreeMap::new();
    for p in &results.points {
        if let Some(r) = &p.comparison.report {
            traces.entry(p.vehicles).or_insert(&r.objective_trace);
        }
    }
    if !traces.is_empty() {
        let longest = traces.values().map(|t| t.len()).max().unwrap_or(0);
        let mut trace = String::from("# round-time objective after each sweep (first scenario; converged value repeated)\n# sweep");
        for n in traces.keys() {
            let _ = write!(trace, " N{n}");
        }
        trace.push('\n');
        for i in 0..longest {
            let _ = write!(trace, "{}", i + 1);
            for t in traces.values() {
                let _ = write!(trace, " {}", t[i.min(t.len() - 1)]);
            }
            trace.push('\n');
        }
        put("bcd_trace.dat", trace)?;
    }

    let comm = means(results, |c| c.comm_delay);
    let comp = means(results, |c| c.comp_delay);
    put("delay_comm.dat", scheme_table("communication delay, s", &comm))?;
    put("delay_comp.dat", scheme_table("computation delay, s", &comp))?;
    put("delay_overall.dat", scheme_table("overall delay, s", &add(&comm, &comp)))?;
    let comm_e = means(results, |c| c.comm_energy);
    let comp_e = means(results, |c| c.comp_energy);
    put("energy_comm.dat", scheme_table("communication energy, J", &comm_e))?;
    put("energy_comp.dat", scheme_table("computation energy, J", &comp_e))?;
    put("energy_overall.dat", scheme_table("overall energy, J", &add(&comm_e, &comp_e)))?;
    Ok(files)
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    outputs: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Write `config.json` (the effective scenario) and `manifest.json` listing
/// every output with its SHA-256, relative to `dir`.
pub fn write_manifest(dir: &Path, sc: &Scenario, command: &str, outputs: &[PathBuf]) -> Result<PathBuf> {
    let config = dir.join("config.json");
    write_text(&config, &(serde_json::to_string_pretty(sc)? + "\n"))?;
    let mut entries = Vec::with_capacity(outputs.len() + 1);
    for p in outputs.iter().chain(std::iter::once(&config)) {
        let name = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
        entries.push(ManifestEntry {
            file: name,
            sha256: sha256_file(p)?,
        });
    }
    let manifest = Manifest {
        command,
        seed: sc.seed,
        config_hash: sc.config_hash()?,
        outputs: entries,
    };
    let path = dir.join("manifest.json");
    write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(path)
}
