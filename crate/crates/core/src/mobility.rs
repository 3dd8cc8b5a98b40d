//! Synthetic population, Gauss-Markov mobility, grid partitioning and the
//! plaintext ground-truth oracle.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{contact_plain, PlanePoint};
use crate::rng;

pub const PAPER_USERS: usize = 1_500_000;
pub const PAPER_SIGMA_M: f64 = 3800.0;
pub const PAPER_AREA_KM2: f64 = 1900.0;

/// Sub-area sizes swept for the tracing-overhead figure: 10, 35, ..., 285 m.
pub const CELL_SIZES: [u32; 12] = [10, 35, 60, 85, 110, 135, 160, 185, 210, 235, 260, 285];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedClass {
    pub fraction: f64,
    pub mean_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    /// Standard deviation of the signed radial coordinate, meters.
    pub sigma_r: f64,
    pub region_area_km2: f64,
    pub k_mos: usize,
    pub positive_frac: f64,
    pub timestep: f64,
    pub duration: f64,
    pub cell_size_l: u32,
    pub speed_classes: Vec<SpeedClass>,
    pub gm_alpha: f64,
    /// Std-dev of the speed innovation as a fraction of the class mean speed.
    pub speed_noise: f64,
    /// Std-dev of the direction innovation, radians.
    pub direction_noise: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Population scaled down to `n_users` with users/km² preserved.
    pub fn density_matched(n_users: usize) -> Self {
        let scale = n_users as f64 / PAPER_USERS as f64;
        Self {
            n_users,
            sigma_r: PAPER_SIGMA_M * scale.sqrt(),
            region_area_km2: PAPER_AREA_KM2 * scale,
            k_mos: 2,
            positive_frac: 0.01,
            timestep: 20.0,
            duration: 300.0,
            cell_size_l: 10,
            speed_classes: vec![
                SpeedClass { fraction: 0.4, mean_speed: 0.01 },
                SpeedClass { fraction: 0.4, mean_speed: 1.0 },
                SpeedClass { fraction: 0.2, mean_speed: 14.0 },
            ],
            gm_alpha: 0.75,
            speed_noise: 0.2,
            direction_noise: 0.5,
            seed: 1,
        }
    }

    /// 10,000 users over 15 instants.
    pub fn desk() -> Self {
        Self::density_matched(10_000)
    }

    /// 1.5M users over one hour, for accounting-only runs.
    pub fn paper() -> Self {
        Self {
            duration: 3600.0,
            ..Self::density_matched(PAPER_USERS)
        }
    }

    pub fn n_instants(&self) -> usize {
        if self.timestep <= 0.0 {
            return 0;
        }
        (self.duration / self.timestep).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Usage(format!("{field}: {why}")));
        if self.k_mos < 2 {
            return bad("k_mos", "at least two operators are required");
        }
        if !(0.0..=1.0).contains(&self.positive_frac) {
            return bad("positive_frac", "must lie in [0, 1]");
        }
        if self.speed_classes.is_empty() {
            return bad("speed_classes", "at least one class is required");
        }
        let total: f64 = self.speed_classes.iter().map(|c| c.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("speed_classes", "fractions must sum to 1");
        }
        if self.speed_classes.iter().any(|c| c.fraction < 0.0 || c.mean_speed < 0.0) {
            return bad("speed_classes", "fractions and speeds must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gm_alpha) {
            return bad("gm_alpha", "must lie in [0, 1]");
        }
        if self.sigma_r < 0.0 || self.speed_noise < 0.0 || self.direction_noise < 0.0 {
            return bad("sigma_r", "spreads must be non-negative");
        }
        if self.timestep <= 0.0 || self.duration < 0.0 {
            return bad("timestep", "timestep must be positive and duration non-negative");
        }
        if self.cell_size_l == 0 {
            return bad("cell_size_l", "must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    /// Radians in `[0, 2π)`.
    pub direction: f64,
    pub speed_class: usize,
    /// Long-run mean direction of the Gauss-Markov process.
    pub mean_direction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub mo: Vec<u16>,
    pub positive: Vec<bool>,
    pub states: Vec<MobilityState>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Class sizes `⌊f·N⌋`, with the rounding remainder given to the leading classes.
fn class_sizes(classes: &[SpeedClass], n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = classes.iter().map(|c| (c.fraction * n as f64).floor() as usize).collect();
    let mut rest = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut() {
        if rest == 0 {
            break;
        }
        *s += 1;
        rest -= 1;
    }
    sizes
}

pub fn gen_population(cfg: &SimConfig) -> Result<Population> {
    cfg.validate()?;
    let n = cfg.n_users;
    let mut rng = rng::stream(cfg.seed, "population");
    let radial = Normal::new(0.0, cfg.sigma_r).map_err(|e| Error::Usage(e.to_string()))?;
    let angle = Uniform::new(0.0, TAU);

    let mut classes: Vec<usize> = class_sizes(&cfg.speed_classes, n)
        .into_iter()
        .enumerate()
        .flat_map(|(k, size)| std::iter::repeat(k).take(size))
        .collect();
    classes.shuffle(&mut rng);

    let states = classes
        .iter()
        .map(|&class| {
            let r = radial.sample(&mut rng);
            let theta = angle.sample(&mut rng);
            MobilityState {
                x: r * theta.cos(),
                y: r * theta.sin(),
                speed: cfg.speed_classes[class].mean_speed,
                direction: theta,
                speed_class: class,
                mean_direction: theta,
            }
        })
        .collect();

    let n_pos = (cfg.positive_frac * n as f64).floor() as usize;
    let mut positive = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, n_pos.min(n)) {
        positive[i] = true;
    }
    let mo = (0..n).map(|i| (i % cfg.k_mos) as u16).collect();
    Ok(Population { mo, positive, states })
}

/// One Gauss-Markov update. Position advances with the current velocity,
/// then speed and direction relax towards their means with memory `α`.
pub fn step<R: Rng + ?Sized>(state: &MobilityState, cfg: &SimConfig, rng: &mut R) -> MobilityState {
    let alpha = cfg.gm_alpha;
    let mean_speed = cfg.speed_classes[state.speed_class].mean_speed;
    let innovation = (1.0 - alpha * alpha).sqrt();
    let gs: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * cfg.speed_noise * mean_speed;
    let gd: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * cfg.direction_noise;

    let x = state.x + state.speed * state.direction.cos() * cfg.timestep;
    let y = state.y + state.speed * state.direction.sin() * cfg.timestep;
    let speed = (alpha * state.speed + (1.0 - alpha) * mean_speed + innovation * gs).max(0.0);
    // unwrap the mean so the relaxation goes the short way round
    let mut mean_dir = state.mean_direction;
    while mean_dir - state.direction > std::f64::consts::PI {
        mean_dir -= TAU;
    }
    while state.direction - mean_dir > std::f64::consts::PI {
        mean_dir += TAU;
    }
    let direction = (alpha * state.direction + (1.0 - alpha) * mean_dir + innovation * gd).rem_euclid(TAU);
    MobilityState {
        x,
        y,
        speed,
        direction,
        ..*state
    }
}

pub type CellId = (u32, u32);

/// Quantized positions of every user at every instant, in a non-negative frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub mo: Vec<u16>,
    pub positive: Vec<bool>,
    /// `positions[t][user]`.
    pub positions: Vec<Vec<PlanePoint>>,
}

impl Trajectory {
    pub fn n_users(&self) -> usize {
        self.mo.len()
    }

    pub fn n_instants(&self) -> usize {
        self.positions.len()
    }

    pub fn n_mos(&self) -> usize {
        self.mo.iter().map(|&m| m as usize + 1).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["user_id", "t", "x", "y", "mo_id", "status"])?;
        for (t, row) in self.positions.iter().enumerate() {
            for (u, p) in row.iter().enumerate() {
                out.write_record([
                    u.to_string(),
                    t.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    self.mo[u].to_string(),
                    (self.positive[u] as u8).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            user_id: usize,
            t: usize,
            x: u32,
            y: u32,
            mo_id: u16,
            status: u8,
        }
        let mut reader = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in reader.deserialize() {
            let row: Row = rec?;
            if row.status > 1 {
                return Err(Error::Usage(format!("status {} is not a bit", row.status)));
            }
            rows.push(row);
        }
        let n_users = rows.iter().map(|r| r.user_id + 1).max().unwrap_or(0);
        let n_instants = rows.iter().map(|r| r.t + 1).max().unwrap_or(0);
        let mut mo = vec![None; n_users];
        let mut positive = vec![None; n_users];
        let mut positions = vec![vec![None; n_users]; n_instants];
        for r in rows {
            let same = |slot: &mut Option<_>, v| match slot {
                Some(old) if *old != v => false,
                _ => {
                    *slot = Some(v);
                    true
                }
            };
            if !same(&mut mo[r.user_id], r.mo_id as u32) || !same(&mut positive[r.user_id], r.status as u32) {
                return Err(Error::Usage(format!("user {} changes operator or status", r.user_id)));
            }
            if positions[r.t][r.user_id].replace(PlanePoint::new(r.x, r.y)).is_some() {
                return Err(Error::Usage(format!("duplicate row for user {} at t={}", r.user_id, r.t)));
            }
        }
        let missing = || Error::Usage("trajectory has gaps".into());
        Ok(Self {
            mo: mo.into_iter().map(|m| m.map(|v| v as u16).ok_or_else(missing)).collect::<Result<_>>()?,
            positive: positive.into_iter().map(|s| s.map(|v| v == 1).ok_or_else(missing)).collect::<Result<_>>()?,
            positions: positions
                .into_iter()
                .map(|row| row.into_iter().map(|p| p.ok_or_else(missing)).collect::<Result<_>>())
                .collect::<Result<_>>()?,
        })
    }
}

/// Runs the population forward for `cfg.n_instants()` samples (the first is
/// the initial placement), then translates and rounds to integer meters.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    let pop = gen_population(cfg)?;
    let n_instants = cfg.n_instants();
    let mut rngs: Vec<_> = (0..pop.len())
        .map(|u| rng::substream(cfg.seed, "mobility", u as u64))
        .collect();
    let mut states = pop.states.clone();
    let mut raw: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n_instants);
    for t in 0..n_instants {
        if t > 0 {
            for (s, r) in states.iter_mut().zip(rngs.iter_mut()) {
                *s = step(s, cfg, r);
            }
        }
        raw.push(states.iter().map(|s| (s.x, s.y)).collect());
    }
    let min_x = raw.iter().flatten().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let min_y = raw.iter().flatten().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let positions = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(x, y)| PlanePoint::new((x - min_x).round() as u32, (y - min_y).round() as u32))
                .collect()
        })
        .collect();
    Ok(Trajectory {
        mo: pop.mo,
        positive: pop.positive,
        positions,
    })
}

pub fn cell_of(p: PlanePoint, l: u32) -> CellId {
    (p.x / l, p.y / l)
}

/// Cell-relative coordinates.
pub fn relative_in_cell(p: PlanePoint, l: u32) -> PlanePoint {
    PlanePoint::new(p.x % l, p.y % l)
}

/// Users grouped by `(⌊x/l⌋, ⌊y/l⌋)`, in ascending user order within a cell.
pub fn partition(positions: &[PlanePoint], l: u32) -> Result<BTreeMap<CellId, Vec<u32>>> {
    if l == 0 {
        return Err(Error::Usage("cell size must be positive".into()));
    }
    let mut cells: BTreeMap<CellId, Vec<u32>> = BTreeMap::new();
    for (u, &p) in positions.iter().enumerate() {
        cells.entry(cell_of(p, l)).or_default().push(u as u32);
    }
    Ok(cells)
}

/// Per-cell subscriber counts for each operator at one instant.
pub fn cell_populations(positions: &[PlanePoint], mo: &[u16], n_mos: usize, l: u32) -> Result<Vec<Vec<u64>>> {
    Ok(partition(positions, l)?
        .into_values()
        .map(|users| {
            let mut counts = vec![0u64; n_mos];
            for u in users {
                counts[mo[u as usize] as usize] += 1;
            }
            counts
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    /// `contacts[t]`: pairs `(i, j)` with `i < j`, sorted.
    pub contacts: Vec<Vec<(u32, u32)>>,
    pub scores: Vec<u64>,
}

impl GroundTruth {
    pub fn contact_count(&self) -> usize {
        self.contacts.iter().map(Vec::len).sum()
    }
}

/// Exhaustive per-cell evaluation of the contact predicate and the exposure score.
pub fn ground_truth(traj: &Trajectory, th: u32, l: u32) -> Result<GroundTruth> {
    let mut scores = vec![0u64; traj.n_users()];
    let mut contacts = Vec::with_capacity(traj.n_instants());
    for row in &traj.positions {
        let mut at_t = Vec::new();
        for users in partition(row, l)?.values() {
            for (a, &i) in users.iter().enumerate() {
                for &j in &users[a + 1..] {
                    if contact_plain(row[i as usize], row[j as usize], th).0 {
                        at_t.push((i, j));
                        scores[i as usize] += traj.positive[j as usize] as u64;
                        scores[j as usize] += traj.positive[i as usize] as u64;
                    }
                }
            }
        }
        at_t.sort_unstable();
        contacts.push(at_t);
    }
    Ok(GroundTruth { contacts, scores })
}

/// Positives other than `user` inside `cell` at instant `t`.
pub fn loc_count(traj: &Trajectory, user: u32, cell: CellId, t: usize, l: u32) -> u64 {
    traj.positions[t]
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j as u32 != user && cell_of(p, l) == cell && traj.positive[j])
        .count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn paper_spread(n: usize) -> SimConfig {
        SimConfig {
            n_users: n,
            sigma_r: PAPER_SIGMA_M,
            ..SimConfig::desk()
        }
    }

    #[test]
    fn empty_population() {
        let pop = gen_population(&paper_spread(0)).unwrap();
        assert!(pop.is_empty());
        let traj = simulate(&paper_spread(0)).unwrap();
        assert_eq!(traj.n_users(), 0);
    }

    #[test]
    fn population_statistics() {
        let cfg = paper_spread(10_000);
        let pop = gen_population(&cfg).unwrap();
        // signed radius recovered from the sampled position and its angle
        let radii: Vec<f64> = pop
            .states
            .iter()
            .map(|s| {
                let r = s.x.hypot(s.y);
                if (s.x * s.direction.cos() + s.y * s.direction.sin()) < 0.0 { -r } else { r }
            })
            .collect();
        let var = radii.iter().map(|r| r * r).sum::<f64>() / radii.len() as f64;
        assert!((var.sqrt() - 3800.0).abs() < 0.05 * 3800.0, "std {}", var.sqrt());

        let mean_abs = radii.iter().map(|r| r.abs()).sum::<f64>() / radii.len() as f64;
        let expected = (2.0 / std::f64::consts::PI).sqrt() * 3800.0;
        assert!((mean_abs - expected).abs() < 0.05 * expected);

        let mut counts = [0usize; 3];
        for s in &pop.states {
            counts[s.speed_class] += 1;
        }
        assert_eq!(counts, [4000, 4000, 2000]);
        assert_eq!(pop.positive.iter().filter(|&&p| p).count(), 100);
        for k in 0..2u16 {
            assert_eq!(pop.mo.iter().filter(|&&m| m == k).count(), 5000);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SimConfig { n_users: 500, ..SimConfig::desk() };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 2, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    fn one_class(alpha: f64, noise: f64) -> SimConfig {
        SimConfig {
            speed_classes: vec![SpeedClass { fraction: 1.0, mean_speed: 1.0 }],
            gm_alpha: alpha,
            speed_noise: noise,
            direction_noise: noise,
            ..SimConfig::desk()
        }
    }

    fn start() -> MobilityState {
        MobilityState {
            x: 0.0,
            y: 0.0,
            speed: 1.0,
            direction: 0.5,
            speed_class: 0,
            mean_direction: 0.5,
        }
    }

    #[test]
    fn full_memory_without_noise_is_straight_line() {
        let cfg = one_class(1.0, 0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut s = start();
        for k in 1..=10 {
            s = step(&s, &cfg, &mut rng);
            let d = k as f64 * 20.0;
            assert!((s.x - d * 0.5f64.cos()).abs() < 1e-9);
            assert!((s.y - d * 0.5f64.sin()).abs() < 1e-9);
            assert_eq!(s.speed, 1.0);
        }
    }

    fn lag_one_autocorrelation(alpha: f64) -> f64 {
        let cfg = one_class(alpha, 0.2);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut s = start();
        let speeds: Vec<f64> = (0..10_000)
            .map(|_| {
                s = step(&s, &cfg, &mut rng);
                s.speed
            })
            .collect();
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let var = speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let cov = speeds.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        cov / var
    }

    #[test]
    fn memoryless_limit_decorrelates() {
        assert!(lag_one_autocorrelation(0.0).abs() < 0.05);
        assert!(lag_one_autocorrelation(0.75) > 0.6);
    }

    #[test]
    fn long_run_mean_speed_per_class() {
        let cfg = SimConfig::desk();
        for (k, class) in cfg.speed_classes.iter().enumerate() {
            let mut rng = ChaCha20Rng::seed_from_u64(3 + k as u64);
            let mut s = MobilityState { speed_class: k, speed: class.mean_speed, ..start() };
            let mut total = 0.0;
            for _ in 0..10_000 {
                s = step(&s, &cfg, &mut rng);
                total += s.speed;
                assert!(s.speed >= 0.0 && (0.0..TAU).contains(&s.direction));
            }
            let mean = total / 10_000.0;
            assert!((mean - class.mean_speed).abs() < 0.05 * class.mean_speed, "class {k}: {mean}");
        }
    }

    #[test]
    fn partition_rules() {
        let pts = [PlanePoint::new(0, 0), PlanePoint::new(9, 9), PlanePoint::new(10, 3)];
        let cells = partition(&pts, 10).unwrap();
        assert_eq!(cells[&(0, 0)], vec![0, 1]);
        // x = l belongs to the next cell
        assert_eq!(cells[&(1, 0)], vec![2]);
        assert_eq!(partition(&pts[..2], 10).unwrap().len(), 1);
        assert!(partition(&pts, 0).is_err());
    }

    #[test]
    fn partition_conserves_users() {
        let traj = simulate(&SimConfig { n_users: 2000, ..SimConfig::desk() }).unwrap();
        for row in &traj.positions {
            for l in [10, 85, 285] {
                let cells = partition(row, l).unwrap();
                assert_eq!(cells.values().map(Vec::len).sum::<usize>(), row.len());
            }
        }
    }

    /// Four users, two operators, three instants; user 3 is positive.
    pub(crate) fn hand_scenario() -> Trajectory {
        let p = PlanePoint::new;
        Trajectory {
            mo: vec![0, 1, 0, 1],
            positive: vec![false, false, false, true],
            positions: vec![
                // 0 meets 3, 1 and 2 are alone
                vec![p(5, 5), p(30, 30), p(50, 50), p(6, 5)],
                // 0, 1 and 3 together; 2 alone
                vec![p(5, 5), p(5, 6), p(50, 50), p(6, 6)],
                // 2 meets 3 across the cell boundary at x = 10: not a contact
                vec![p(5, 5), p(30, 30), p(9, 40), p(10, 40)],
            ],
        }
    }

    #[test]
    fn hand_built_ground_truth() {
        let traj = hand_scenario();
        let gt = ground_truth(&traj, 2, 10).unwrap();
        assert_eq!(gt.contacts[0], vec![(0, 3)]);
        assert_eq!(gt.contacts[1], vec![(0, 1), (0, 3), (1, 3)]);
        assert!(gt.contacts[2].is_empty());
        assert_eq!(gt.scores, vec![2, 1, 0, 0]);
        assert_eq!(loc_count(&traj, 0, (0, 0), 1, 10), 1);
        assert_eq!(loc_count(&traj, 3, (0, 0), 1, 10), 0);
    }

    #[test]
    fn no_positives_no_scores() {
        let mut traj = hand_scenario();
        traj.positive = vec![false; 4];
        assert!(ground_truth(&traj, 2, 10).unwrap().scores.iter().all(|&s| s == 0));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let traj = hand_scenario();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"user_id,t,x,y,mo_id,status\n"));
        assert_eq!(Trajectory::read_csv(&buf[..]).unwrap(), traj);
        let bad = b"user_id,t,x,y,mo_id,status\n0,0,1,1,0,0\n0,1,1,1,1,0\n";
        assert!(Trajectory::read_csv(&bad[..]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::desk();
        cfg.speed_classes[0].fraction = 0.5;
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { k_mos: 1, ..SimConfig::desk() };
        assert!(cfg.validate().is_err());
        assert_eq!(SimConfig::desk().n_instants(), 15);
        assert_eq!(SimConfig::paper().n_instants(), 180);
    }
}
