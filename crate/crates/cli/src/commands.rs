use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use covtrace::accounting::{
    ga_triggered_cost, ga_triggered_windowed_cost, megabytes, measured_tracing_cost, privacy, reconcile,
    score_phase_cost, trajectory_tracing_cost, user_triggered_cost, write_fig2_csv, write_fig3_csv,
    write_reconcile_csv, fig3_sweep, Fig2Row,
};
use covtrace::mobility::{ground_truth, simulate as run_simulation, SimConfig, Trajectory};
use covtrace::protocol::{run_protocol, RunReport};

use crate::config::{resolve, Profile, Resolved};
use crate::manifest::{self, RunManifest};
use crate::{Common, Failure};

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

/// Creates `out/name` and hands a buffered writer to `f`.
fn emit<F>(out: &Path, name: &str, outputs: &mut Vec<String>, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> covtrace::Result<()>,
{
    let path = out.join(name);
    let file = File::create(&path).map_err(|e| Failure::io(&path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Failure::io(&path, e))?;
    w.flush().map_err(|e| Failure::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(())
}

fn emit_rows<R: Serialize>(out: &Path, name: &str, outputs: &mut Vec<String>, rows: &[R]) -> Result<(), Failure> {
    let path = out.join(name);
    let mut w = csv_writer(&path)?;
    for r in rows {
        w.serialize(r).map_err(|e| Failure::io(&path, e))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(())
}

/// Writes the header row even when there are no records.
fn emit_with_header<R: Serialize>(
    out: &Path,
    name: &str,
    header: &[&str],
    outputs: &mut Vec<String>,
    rows: &[R],
) -> Result<(), Failure> {
    if !rows.is_empty() {
        return emit_rows(out, name, outputs, rows);
    }
    let path = out.join(name);
    let mut w = csv_writer(&path)?;
    w.write_record(header).map_err(|e| Failure::io(&path, e))?;
    w.flush().map_err(|e| Failure::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(())
}

fn prepare_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))
}

fn finish(out: &Path, command: &str, cfg: &Resolved, inputs: &[(String, Vec<u8>)], outputs: Vec<String>) -> Result<(), Failure> {
    let m = RunManifest {
        command,
        seed: cfg.seed,
        input_hash: manifest::content_hash(command, cfg, inputs)?,
        outputs,
        config: cfg,
    };
    manifest::write(out, &m)
}

#[derive(Serialize)]
struct ContactRow {
    t: usize,
    user_i: u32,
    user_j: u32,
}

pub fn simulate(common: &Common) -> Result<(), Failure> {
    let cfg = resolve(common)?;
    let traj = run_simulation(&cfg.simulation).map_err(Failure::from_core)?;
    let gt = ground_truth(&traj, cfg.session.th, cfg.simulation.cell_size_l).map_err(Failure::from_core)?;
    prepare_out(&common.out)?;
    let mut outputs = Vec::new();
    emit(&common.out, "trajectories.csv", &mut outputs, |w| traj.write_csv(w))?;
    let contacts: Vec<ContactRow> = gt
        .contacts
        .iter()
        .enumerate()
        .flat_map(|(t, pairs)| pairs.iter().map(move |&(i, j)| ContactRow { t, user_i: i, user_j: j }))
        .collect();
    emit_with_header(&common.out, "ground_truth.csv", &["t", "user_i", "user_j"], &mut outputs, &contacts)?;
    finish(&common.out, "simulate", &cfg, &[], outputs)?;
    println!(
        "users {}, instants {}, contacts {}, positives {}",
        traj.n_users(),
        traj.n_instants(),
        gt.contact_count(),
        traj.positive.iter().filter(|&&p| p).count()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow {
    user_id: u32,
    mo_id: u16,
    revealed_score: u64,
    expected_score: u64,
}

#[derive(Serialize)]
struct LocRow {
    user_id: u32,
    t: usize,
    cell_x: u32,
    cell_y: u32,
    revealed: u64,
    expected: u64,
}

#[derive(Serialize)]
struct IdentifiedRow {
    user_id: u32,
    mo_id: u16,
    row: u32,
    score: u64,
    window_lo: usize,
    window_hi: usize,
    identity: String,
}

#[derive(Serialize)]
struct ChargeRow {
    round: u32,
    cell_x: i64,
    cell_y: i64,
    mo_a: u16,
    mo_b: u16,
    pairs: u64,
    bits: u64,
}

#[derive(Serialize)]
struct Summary {
    users: usize,
    instants: usize,
    positives: usize,
    contacts: usize,
    cross_contacts: usize,
    local_contacts: usize,
    chi: u64,
    identified: usize,
    windowed: bool,
    eta: u64,
    privacy: f64,
    score_mismatches: usize,
    loc_mismatches: usize,
    identity_mismatches: usize,
    ot_invocations: usize,
    plaintext_status_to_mo: usize,
    plaintext_coordinate_to_ga: usize,
    reconstructable_share_pairs: usize,
    correct: bool,
}

fn summary(traj: &Trajectory, cfg: &Resolved, report: &RunReport) -> Summary {
    let s = &cfg.session;
    let n_k_max = (0..s.k as u16)
        .map(|m| traj.mo.iter().filter(|&&x| x == m).count() as u64)
        .max()
        .unwrap_or(0);
    let eta = if s.windowed { s.eta() } else { n_k_max }.max(1);
    Summary {
        users: traj.n_users(),
        instants: traj.n_instants(),
        positives: traj.positive.iter().filter(|&&p| p).count(),
        contacts: report.ground_truth.contact_count(),
        cross_contacts: report.cross_contacts,
        local_contacts: report.local_contacts,
        chi: s.chi,
        identified: report.identified.len(),
        windowed: s.windowed,
        eta,
        privacy: privacy(eta),
        score_mismatches: report.score_mismatches(),
        loc_mismatches: report.loc_mismatches(),
        identity_mismatches: report.identity_mismatches(s.chi),
        ot_invocations: report.audit.ot_invocations,
        plaintext_status_to_mo: report.audit.plaintext_status_to_mo,
        plaintext_coordinate_to_ga: report.audit.plaintext_coordinate_to_ga,
        reconstructable_share_pairs: report.audit.reconstructable_share_pairs,
        correct: report.is_correct(s.chi) && report.audit.is_clean(),
    }
}

fn printable_identity(bytes: &[u8]) -> String {
    let end = bytes.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    String::from_utf8_lossy(&bytes[..end]).into_owned()
}

pub fn protocol(common: &Common, trajectories: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = resolve(common)?;
    if cfg.profile == Profile::PaperAccounting {
        return Err(Failure::Config(
            "the paper-accounting profile is analytical only; run `protocol` under the desk profile".into(),
        ));
    }
    let mut inputs = Vec::new();
    let traj = match trajectories {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let traj = Trajectory::read_csv(bytes.as_slice())
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            inputs.push(("trajectories".to_string(), bytes));
            if traj.n_users() > 0 {
                let k = traj.n_mos().max(2);
                cfg.simulation.k_mos = k;
                cfg.session.k = k;
            }
            traj
        }
        None => run_simulation(&cfg.simulation).map_err(Failure::from_core)?,
    };
    info!("running the protocol over {} users and {} instants", traj.n_users(), traj.n_instants());
    let report = run_protocol(&traj, &cfg.session, cfg.seed).map_err(Failure::from_core)?;

    let out = &common.out;
    prepare_out(out)?;
    let mut outputs = Vec::new();
    let scores: Vec<ScoreRow> = (0..traj.n_users())
        .map(|u| ScoreRow {
            user_id: u as u32,
            mo_id: traj.mo[u],
            revealed_score: report.revealed[u],
            expected_score: report.ground_truth.scores[u],
        })
        .collect();
    emit_with_header(out, "scores.csv", &["user_id", "mo_id", "revealed_score", "expected_score"], &mut outputs, &scores)?;
    let locs: Vec<LocRow> = report
        .loc_checks
        .iter()
        .map(|c| LocRow {
            user_id: c.user,
            t: c.t,
            cell_x: c.cell.0,
            cell_y: c.cell.1,
            revealed: c.revealed,
            expected: c.expected,
        })
        .collect();
    emit_with_header(
        out,
        "loc_scores.csv",
        &["user_id", "t", "cell_x", "cell_y", "revealed", "expected"],
        &mut outputs,
        &locs,
    )?;
    let mut identified: Vec<IdentifiedRow> = report
        .identified
        .iter()
        .zip(&report.identified_users)
        .map(|(id, &u)| IdentifiedRow {
            user_id: u,
            mo_id: id.mo,
            row: id.index,
            score: id.score,
            window_lo: id.window.0,
            window_hi: id.window.1,
            identity: printable_identity(&id.identity),
        })
        .collect();
    identified.sort_by_key(|r| r.user_id);
    emit_with_header(
        out,
        "identified.csv",
        &["user_id", "mo_id", "row", "score", "window_lo", "window_hi", "identity"],
        &mut outputs,
        &identified,
    )?;
    emit(out, "ledger.csv", &mut outputs, |w| report.bus.write_csv(w))?;
    let charges: Vec<ChargeRow> = report
        .bus
        .charges()
        .iter()
        .map(|c| ChargeRow {
            round: c.round,
            cell_x: c.cell.0,
            cell_y: c.cell.1,
            mo_a: c.mo_a,
            mo_b: c.mo_b,
            pairs: c.pairs,
            bits: c.bits,
        })
        .collect();
    emit_with_header(
        out,
        "charges.csv",
        &["round", "cell_x", "cell_y", "mo_a", "mo_b", "pairs", "bits"],
        &mut outputs,
        &charges,
    )?;
    let rows = reconcile(&report.ledger(), &report.model);
    emit(out, "reconcile.csv", &mut outputs, |w| write_reconcile_csv(&rows, w))?;
    let measured = measured_tracing_cost(report.bus.charges(), cfg.session.k, report.tracing.occupied_cells);
    let fig2 = [Fig2Row {
        l: cfg.session.cell_size_l,
        k: cfg.session.k,
        avg_modeled: report.tracing.avg_bits,
        avg_measured: Some(measured.avg_bits),
        max_modeled: report.tracing.max_bits,
        max_measured: Some(measured.max_bits),
    }];
    emit(out, "tracing.csv", &mut outputs, |w| write_fig2_csv(&fig2, w))?;
    let s = summary(&traj, &cfg, &report);
    let path = out.join("summary.toml");
    fs::write(&path, toml::to_string(&s).map_err(|e| Failure::Config(e.to_string()))?)
        .map_err(|e| Failure::io(&path, e))?;
    outputs.push("summary.toml".into());
    finish(out, "protocol", &cfg, &inputs, outputs)?;

    println!(
        "users {}, contacts {}, identified {} at chi={}, privacy {:.4}, correct {}",
        s.users, s.contacts, s.identified, s.chi, s.privacy, s.correct
    );
    if !s.correct {
        return Err(Failure::Oracle(format!(
            "{} score, {} loc-score and {} identity mismatches; audit clean: {}",
            s.score_mismatches,
            s.loc_mismatches,
            s.identity_mismatches,
            report.audit.is_clean()
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct TracingRecord {
    l: u32,
    k: usize,
    metric: String,
    measured_bits: Option<f64>,
}

/// Measured per-area overhead from earlier protocol runs, keyed by `(l, k)`.
fn measured_points(runs: &[PathBuf], inputs: &mut Vec<(String, Vec<u8>)>) -> BTreeMap<(u32, usize), (f64, u64)> {
    let mut points = BTreeMap::new();
    for (i, dir) in runs.iter().enumerate() {
        let path = dir.join("tracing.csv");
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let mut avg = None;
        let mut max = None;
        let mut key = None;
        for rec in csv::Reader::from_reader(bytes.as_slice()).deserialize::<TracingRecord>() {
            match rec {
                Ok(r) => {
                    key = Some((r.l, r.k));
                    match r.metric.as_str() {
                        "avg" => avg = r.measured_bits,
                        "max" => max = r.measured_bits.map(|v| v as u64),
                        _ => {}
                    }
                }
                Err(e) => warn!("{}: {e}", path.display()),
            }
        }
        match (key, avg, max) {
            (Some(key), Some(a), Some(m)) => {
                points.insert(key, (a, m));
            }
            _ => warn!("{} holds no measured overhead", path.display()),
        }
        inputs.push((format!("run{i}"), bytes));
    }
    points
}

#[derive(Serialize)]
struct PhaseRow {
    quantity: String,
    bits: u64,
    megabytes: String,
}

fn phase_row(quantity: String, bits: u64) -> PhaseRow {
    PhaseRow {
        quantity,
        bits,
        megabytes: format!("{:.6}", megabytes(bits)),
    }
}

fn sweep_population(cfg: &Resolved, k: usize) -> SimConfig {
    let mut sim = SimConfig {
        k_mos: k,
        ..cfg.simulation.clone()
    };
    if cfg.profile == Profile::PaperAccounting {
        // one snapshot keeps the full population in memory
        sim.duration = sim.timestep;
    }
    sim
}

pub fn report(common: &Common, runs: &[PathBuf]) -> Result<(), Failure> {
    let cfg = resolve(common)?;
    let r = &cfg.report;
    let b = cfg.session.b as u64;
    let mut inputs = Vec::new();
    let measured = measured_points(runs, &mut inputs);

    let mut fig2: BTreeMap<(u32, usize), Fig2Row> = BTreeMap::new();
    let mut base_traj = None;
    for &k in &r.k_values {
        let traj = run_simulation(&sweep_population(&cfg, k)).map_err(Failure::from_core)?;
        for &l in &r.l_values {
            let cost = trajectory_tracing_cost(&traj, l, b).map_err(Failure::from_core)?;
            let m = measured.get(&(l, k));
            fig2.insert(
                (l, k),
                Fig2Row {
                    l,
                    k,
                    avg_modeled: cost.avg_bits,
                    avg_measured: m.map(|m| m.0),
                    max_modeled: cost.max_bits,
                    max_measured: m.map(|m| m.1),
                },
            );
        }
        if k == cfg.simulation.k_mos {
            base_traj = Some(traj);
        }
    }
    let gaps: Vec<String> = fig2
        .values()
        .filter(|row| row.avg_measured.is_none())
        .map(|row| format!("(l={}, k={})", row.l, row.k))
        .collect();
    if !gaps.is_empty() {
        warn!("no measured overhead for {} sweep points: {}", gaps.len(), gaps.join(" "));
    }
    for key in measured.keys().filter(|key| !fig2.contains_key(key)) {
        warn!("measured run at (l={}, k={}) lies outside the sweep and is ignored", key.0, key.1);
    }
    let fig2: Vec<Fig2Row> = fig2.into_values().collect();

    let n_users = cfg.simulation.n_users as u64;
    let n_k = n_users / cfg.simulation.k_mos as u64;
    let n_chi = if r.n_chi.is_empty() {
        let traj = match base_traj {
            Some(t) if cfg.profile == Profile::Desk => t,
            _ => run_simulation(&SimConfig {
                duration: if cfg.profile == Profile::Desk {
                    cfg.simulation.duration
                } else {
                    cfg.simulation.timestep
                },
                ..cfg.simulation.clone()
            })
            .map_err(Failure::from_core)?,
        };
        let gt = ground_truth(&traj, cfg.session.th, cfg.simulation.cell_size_l).map_err(Failure::from_core)?;
        r.chis
            .iter()
            .map(|&chi| gt.scores.iter().filter(|&&s| s >= chi).count() as u64)
            .collect()
    } else {
        r.n_chi.clone()
    };
    let chis: Vec<(u64, u64)> = r.chis.iter().copied().zip(n_chi.iter().copied()).collect();
    let mut etas: Vec<u64> = r.etas.iter().copied().filter(|&e| e < n_k).collect();
    etas.push(n_k.max(1));
    let fig3 = fig3_sweep(n_users, b, &chis, &etas);

    let mut phases = vec![
        phase_row("score_ga_to_mos".into(), score_phase_cost(n_users, r.cipher_bits, 0).ga_to_mos_bits),
        phase_row("user_triggered_per_user".into(), user_triggered_cost(r.cipher_bits, 0)),
    ];
    for &(chi, n) in &chis {
        phases.push(phase_row(format!("ga_triggered_chi{chi}"), ga_triggered_cost(n, n_k, b, n_users)));
        let eta = cfg.session.eta().min(n_k).max(1);
        phases.push(phase_row(
            format!("ga_triggered_chi{chi}_eta{eta}"),
            ga_triggered_windowed_cost(n, eta, b, n_users),
        ));
    }

    let out = &common.out;
    prepare_out(out)?;
    let mut outputs = Vec::new();
    emit(out, "fig2.csv", &mut outputs, |w| write_fig2_csv(&fig2, w))?;
    emit(out, "fig3.csv", &mut outputs, |w| write_fig3_csv(&fig3, w))?;
    emit_rows(out, "phases.csv", &mut outputs, &phases)?;
    finish(out, "report", &cfg, &inputs, outputs)?;
    println!(
        "fig2: {} rows over {} cell sizes; fig3: {} rows; {} measured runs",
        2 * fig2.len(),
        r.l_values.len(),
        fig3.len(),
        measured.len()
    );
    Ok(())
}
