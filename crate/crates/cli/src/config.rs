//! Run configuration: a profile's defaults, overridden by an optional TOML
//! file, overridden in turn by command-line flags.
//!
//! ```toml
//! profile = "desk"
//! seed = 7
//!
//! [simulation]
//! n_users = 2000
//!
//! [session]
//! chi = 5
//! windowed = true
//!
//! [report]
//! l_values = [10, 60, 110]
//! ```

use std::fs;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use covtrace::mobility::{SimConfig, CELL_SIZES};
use covtrace::paillier::PAPER_KEY_BITS;
use covtrace::protocol::SessionConfig;

use crate::{Common, Failure};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 10,000 users over 15 instants with 1024-bit test keys.
    #[default]
    Desk,
    /// Full population, analytical accounting only.
    PaperAccounting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub l_values: Vec<u32>,
    pub k_values: Vec<usize>,
    pub etas: Vec<u64>,
    pub chis: Vec<u64>,
    /// Users at or above each `chis` entry; derived from the simulated ground truth when empty.
    pub n_chi: Vec<u64>,
    pub cipher_bits: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            l_values: CELL_SIZES.to_vec(),
            k_values: vec![2, 5],
            etas: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000],
            chis: vec![5, 10],
            n_chi: Vec::new(),
            cipher_bits: 2 * covtrace::paillier::TEST_KEY_BITS as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub profile: Profile,
    pub seed: u64,
    pub simulation: SimConfig,
    pub session: SessionConfig,
    pub report: ReportConfig,
}

fn defaults(profile: Profile) -> (SimConfig, SessionConfig, ReportConfig) {
    match profile {
        Profile::Desk => (SimConfig::desk(), SessionConfig::default(), ReportConfig::default()),
        Profile::PaperAccounting => (
            SimConfig::paper(),
            SessionConfig {
                key_bits: PAPER_KEY_BITS,
                duration: 3600.0,
                ..SessionConfig::default()
            },
            ReportConfig {
                etas: vec![1, 10, 100, 200, 1000, 10_000, 100_000],
                chis: vec![10],
                n_chi: vec![14],
                cipher_bits: 2 * PAPER_KEY_BITS as u64,
                ..ReportConfig::default()
            },
        ),
    }
}

const TOP_LEVEL: [&str; 5] = ["profile", "seed", "simulation", "session", "report"];
/// Shared with the simulation section, which owns them.
const DERIVED_SESSION_KEYS: [&str; 4] = ["k", "timestep", "duration", "cell_size_l"];

/// Applies `section`'s keys over `base`, naming the first offending key on failure.
fn merge<T: Serialize + DeserializeOwned>(base: T, section: &str, table: Option<&toml::Value>) -> Result<T, Failure> {
    let Some(table) = table else { return Ok(base) };
    let table = table
        .as_table()
        .ok_or_else(|| Failure::Config(format!("[{section}] must be a table")))?;
    let mut merged = toml::Value::try_from(&base).map_err(|e| Failure::Config(e.to_string()))?;
    let dest = merged.as_table_mut().expect("config structs serialize to tables");
    for (key, value) in table {
        let mut single = dest.clone();
        single.insert(key.clone(), value.clone());
        if let Err(e) = toml::Value::Table(single).try_into::<T>() {
            return Err(Failure::Config(format!("[{section}].{key}: {}", e.message().trim())));
        }
        dest.insert(key.clone(), value.clone());
    }
    merged
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Config(format!("[{section}]: {}", e.message().trim())))
}

pub fn resolve(common: &Common) -> Result<Resolved, Failure> {
    let file: toml::Table = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            text.parse()
                .map_err(|e: toml::de::Error| Failure::Config(format!("{}: {}", path.display(), e.message().trim())))?
        }
        None => toml::Table::new(),
    };
    if let Some(key) = file.keys().find(|k| !TOP_LEVEL.contains(&k.as_str())) {
        return Err(Failure::Config(format!("unknown key `{key}`, expected one of {TOP_LEVEL:?}")));
    }

    let file_profile = file
        .get("profile")
        .map(|v| Profile::deserialize(v.clone()).map_err(|e| Failure::Config(format!("profile: {}", e.message().trim()))))
        .transpose()?;
    let profile = common.profile.or(file_profile).unwrap_or_default();
    let file_seed = file
        .get("seed")
        .map(|v| {
            v.as_integer()
                .and_then(|s| u64::try_from(s).ok())
                .ok_or_else(|| Failure::Config("seed: expected a non-negative integer".into()))
        })
        .transpose()?;
    let seed = common.seed.or(file_seed).unwrap_or(1);

    if let Some(session) = file.get("session").and_then(|s| s.as_table()) {
        if let Some(key) = session.keys().find(|k| DERIVED_SESSION_KEYS.contains(&k.as_str())) {
            return Err(Failure::Config(format!(
                "[session].{key}: set by the [simulation] section (k_mos, timestep, duration, cell_size_l)"
            )));
        }
    }

    let (sim, session, report) = defaults(profile);
    let mut simulation = merge(sim, "simulation", file.get("simulation"))?;
    let mut session = merge(session, "session", file.get("session"))?;
    let mut report = merge(report, "report", file.get("report"))?;

    if let Some(l) = common.l {
        simulation.cell_size_l = l;
        report.l_values = vec![l];
    }
    if let Some(k) = common.k {
        simulation.k_mos = k;
        report.k_values = vec![k];
    }
    if let Some(chi) = common.chi {
        session.chi = chi;
        if !report.chis.contains(&chi) {
            report.chis = vec![chi];
            report.n_chi.clear();
        }
    }
    if let Some(eta) = common.eta {
        session.windowed = true;
        session.eta_minus = eta / 2;
        session.eta_plus = eta - eta / 2;
        if !report.etas.contains(&eta) {
            report.etas.push(eta);
            report.etas.sort_unstable();
        }
    }

    simulation.seed = seed;
    session.k = simulation.k_mos;
    session.timestep = simulation.timestep;
    session.duration = simulation.duration;
    session.cell_size_l = simulation.cell_size_l;

    fn section(s: &'static str) -> impl Fn(covtrace::Error) -> Failure {
        move |e| Failure::Config(format!("[{s}] {e}"))
    }
    simulation.validate().map_err(section("simulation"))?;
    session.validate().map_err(section("session"))?;
    validate_report(&report)?;
    Ok(Resolved {
        profile,
        seed,
        simulation,
        session,
        report,
    })
}

fn validate_report(r: &ReportConfig) -> Result<(), Failure> {
    let bad = |key: &str, why: &str| Err(Failure::Config(format!("[report].{key}: {why}")));
    if r.l_values.is_empty() || r.l_values.contains(&0) {
        return bad("l_values", "needs at least one positive cell size");
    }
    if r.k_values.is_empty() || r.k_values.iter().any(|&k| k < 2) {
        return bad("k_values", "needs at least one entry, each at least 2");
    }
    if r.etas.contains(&0) {
        return bad("etas", "window sizes must be at least 1");
    }
    if !r.n_chi.is_empty() && r.n_chi.len() != r.chis.len() {
        return bad("n_chi", "must be empty or match chis in length");
    }
    if r.cipher_bits == 0 {
        return bad("cipher_bits", "must be positive");
    }
    Ok(())
}
