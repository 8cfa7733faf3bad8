//! Discrete-day SEIR agent-based model on a contact graph.
//!
//! Each day: boundary update (every `boundary_interval_days`), then the
//! exposure events due that day fire, then E→I and I→R transitions run. An
//! agent turning infectious on day D with duration d sends its exposures on
//! days D+1..=D+d and recovers on day D+d after that day's events.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::netgen::{ContactGraph, Layer};
use crate::placement::{Home, Population};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Outside agents face the in-population all-cause exposure rate.
    #[default]
    AllCause,
    /// Placeholders face the home-layer rate, outside workers the work-layer rate.
    LayerSpecific,
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub p_transmit: f64,
    pub exposed_days: u32,
    pub infectious_min_days: u32,
    pub infectious_max_days: u32,
    pub n_seeds: usize,
    pub horizon_days: u32,
    pub boundary_interval_days: u32,
    pub replicates: usize,
    pub boundary_mode: BoundaryMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            p_transmit: 0.15,
            exposed_days: 5,
            infectious_min_days: 8,
            infectious_max_days: 12,
            n_seeds: 300,
            horizon_days: 600,
            boundary_interval_days: 10,
            replicates: 10,
            boundary_mode: BoundaryMode::AllCause,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_transmit) {
            return bad("p_transmit must lie in [0, 1]");
        }
        if self.infectious_min_days == 0 || self.infectious_min_days > self.infectious_max_days {
            return bad("infectious duration range must be non-empty and positive");
        }
        if self.exposed_days == 0 {
            return bad("exposed_days must be positive");
        }
        if self.boundary_interval_days == 0 {
            return bad("boundary_interval_days must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disease {
    S,
    E,
    I,
    R,
}

/// Per-vertex role relative to the region boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentInfo {
    /// Lives outside the region (no household network).
    pub placeholder: bool,
    /// Works outside the region (no workplace network).
    pub works_outside: bool,
    /// Has an in-region workplace network.
    pub works_inside: bool,
}

pub fn agent_info(pop: &Population) -> Vec<AgentInfo> {
    pop.persons
        .iter()
        .map(|p| {
            let outside = p.workplace.is_some_and(|w| pop.places[w].is_outside_workplace());
            AgentInfo {
                placeholder: p.home == Home::Placeholder,
                works_outside: outside,
                works_inside: p.workplace.is_some() && !outside,
            }
        })
        .collect()
}

const HOME_BIT: u8 = 1;
const WORK_BIT: u8 = 2;

fn layer_bit(l: Layer) -> u8 {
    match l {
        Layer::Home => HOME_BIT,
        Layer::Work => WORK_BIT,
        Layer::School => 4,
        Layer::Gq => 8,
        Layer::Random => 16,
    }
}

/// Distinct neighbours per vertex, sorted, with the layers joining them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors(pub Vec<Vec<(u32, u8)>>);

impl Neighbors {
    pub fn new(g: &ContactGraph) -> Self {
        let mut adj: Vec<Vec<(u32, u8)>> = vec![Vec::new(); g.n_vertices];
        for &(u, v, l) in &g.edges {
            let b = layer_bit(l);
            adj[u as usize].push((v, b));
            adj[v as usize].push((u, b));
        }
        for a in &mut adj {
            a.sort_unstable();
            let mut merged: Vec<(u32, u8)> = Vec::with_capacity(a.len());
            for &(v, b) in a.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 |= b,
                    _ => merged.push((v, b)),
                }
            }
            *a = merged;
        }
        Neighbors(adj)
    }
}

#[derive(Debug, Clone, Default)]
struct Window {
    susceptible: u64,
    exposed: u64,
    work_susceptible: u64,
    home_exposed: u64,
    work_exposed: u64,
}

#[derive(Debug, Clone)]
pub struct SimState<'a> {
    cfg: &'a SimConfig,
    nb: &'a Neighbors,
    info: &'a [AgentInfo],
    pub state: Vec<Disease>,
    /// Day each agent entered its current state.
    pub since: Vec<u32>,
    /// Exposure events `(target, layers)` per day.
    calendar: Vec<Vec<(u32, u8)>>,
    /// Agents changing state on each day.
    transitions: Vec<Vec<u32>>,
    pub day: u32,
    pub seeds: usize,
    pub ever_infected: usize,
    /// Cumulative infections at the end of each day, seeds included.
    pub trace: Vec<usize>,
    window: Window,
    rng: StreamRng,
}

impl<'a> SimState<'a> {
    fn len_days(&self) -> usize {
        self.cfg.horizon_days as usize + 1
    }

    fn schedule_transition(&mut self, day: u32, agent: u32) {
        if (day as usize) < self.len_days() {
            self.transitions[day as usize].push(agent);
        }
    }

    /// Agent becomes infectious on `day`; draws its duration and exposures.
    fn become_infectious(&mut self, agent: u32, day: u32) {
        let a = agent as usize;
        self.state[a] = Disease::I;
        self.since[a] = day;
        let d = self
            .rng
            .random_range(self.cfg.infectious_min_days..=self.cfg.infectious_max_days);
        self.schedule_transition(day + d, agent);
        let p = self.cfg.p_transmit;
        for &(v, bits) in &self.nb.0[a] {
            if p > 0.0 && (p >= 1.0 || self.rng.random::<f64>() < p) {
                let t = day + self.rng.random_range(1..=d);
                if (t as usize) < self.len_days() {
                    self.calendar[t as usize].push((v, bits));
                }
            }
        }
    }

    fn expose(&mut self, agent: u32, day: u32, bits: u8) {
        let a = agent as usize;
        if self.state[a] != Disease::S {
            return;
        }
        self.state[a] = Disease::E;
        self.since[a] = day;
        self.ever_infected += 1;
        if !self.info[a].placeholder {
            self.window.exposed += 1;
            if bits & HOME_BIT != 0 {
                self.window.home_exposed += 1;
            } else if bits & WORK_BIT != 0 && self.info[a].works_inside {
                self.window.work_exposed += 1;
            }
        }
        self.schedule_transition(day + self.cfg.exposed_days, agent);
    }

    fn open_window(&mut self) {
        let mut w = Window::default();
        for (s, i) in self.state.iter().zip(self.info) {
            if *s == Disease::S && !i.placeholder {
                w.susceptible += 1;
                if i.works_inside {
                    w.work_susceptible += 1;
                }
            }
        }
        self.window = w;
    }

    pub fn cumulative_excluding_seeds(&self) -> usize {
        self.ever_infected - self.seeds
    }
}

/// Seed `n_seeds` uniformly chosen non-placeholder agents as infectious on day 0.
pub fn init_sim<'a>(
    nb: &'a Neighbors,
    info: &'a [AgentInfo],
    cfg: &'a SimConfig,
    mut rng: StreamRng,
) -> Result<SimState<'a>> {
    cfg.validate()?;
    let n = nb.0.len();
    if info.len() != n {
        return Err(Error::LengthMismatch(info.len(), n));
    }
    let eligible: Vec<u32> = (0..n as u32).filter(|&v| !info[v as usize].placeholder).collect();
    if cfg.n_seeds > eligible.len() {
        return Err(Error::InvalidParameter(format!(
            "{} seeds requested but only {} eligible agents",
            cfg.n_seeds,
            eligible.len()
        )));
    }
    let picks = sample(&mut rng, eligible.len(), cfg.n_seeds);
    let days = cfg.horizon_days as usize + 1;
    let mut s = SimState {
        cfg,
        nb,
        info,
        state: vec![Disease::S; n],
        since: vec![0; n],
        calendar: vec![Vec::new(); days],
        transitions: vec![Vec::new(); days],
        day: 0,
        seeds: cfg.n_seeds,
        ever_infected: cfg.n_seeds,
        trace: Vec::with_capacity(days),
        window: Window::default(),
        rng,
    };
    let mut seeds: Vec<u32> = picks.into_iter().map(|i| eligible[i]).collect();
    seeds.sort_unstable();
    for v in seeds {
        s.become_infectious(v, 0);
    }
    s.open_window();
    s.trace.push(s.ever_infected);
    Ok(s)
}

/// Expose susceptible outside agents at the rate seen inside the region
/// over the last interval, then start a new interval.
pub fn boundary_update(s: &mut SimState<'_>) {
    let w = &s.window;
    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { (num as f64 / den as f64).min(1.0) };
    let all = rate(w.exposed, w.susceptible);
    let (q_home, q_work) = match s.cfg.boundary_mode {
        BoundaryMode::AllCause => (all, all),
        BoundaryMode::LayerSpecific => (rate(w.home_exposed, w.susceptible), rate(w.work_exposed, w.work_susceptible)),
    };
    let day = s.day;
    for v in 0..s.state.len() {
        if s.state[v] != Disease::S {
            continue;
        }
        let i = s.info[v];
        let q = if i.placeholder {
            q_home
        } else if i.works_outside {
            q_work
        } else {
            continue;
        };
        if q > 0.0 && (q >= 1.0 || s.rng.random::<f64>() < q) {
            let bits = if i.placeholder { HOME_BIT } else { WORK_BIT };
            s.expose(v as u32, day, bits);
        }
    }
    s.open_window();
}

/// Advance one day. Returns false once the horizon is reached.
pub fn step_day(s: &mut SimState<'_>) -> bool {
    if s.day >= s.cfg.horizon_days {
        return false;
    }
    s.day += 1;
    let d = s.day;
    if d.is_multiple_of(s.cfg.boundary_interval_days) {
        boundary_update(s);
    }
    let events = std::mem::take(&mut s.calendar[d as usize]);
    for (v, bits) in events {
        s.expose(v, d, bits);
    }
    let due = std::mem::take(&mut s.transitions[d as usize]);
    for v in due {
        match s.state[v as usize] {
            Disease::E => s.become_infectious(v, d),
            Disease::I => {
                s.state[v as usize] = Disease::R;
                s.since[v as usize] = d;
            }
            Disease::S | Disease::R => unreachable!("no transition scheduled for S or R"),
        }
    }
    s.trace.push(s.ever_infected);
    true
}

/// Run one replicate to the horizon; returns cumulative infections per day
/// (seeds included).
pub fn run_one(nb: &Neighbors, info: &[AgentInfo], cfg: &SimConfig, rng: StreamRng) -> Result<Vec<usize>> {
    let mut s = init_sim(nb, info, cfg, rng)?;
    while step_day(&mut s) {}
    Ok(s.trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub seeds: usize,
    /// `traces[replicate][day]`, seeds included.
    pub traces: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaySummary {
    pub day: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ReplicateRun {
    /// Mean and 95% t-interval of cumulative infections per day.
    pub fn summary(&self) -> Vec<DaySummary> {
        let r = self.traces.len();
        let days = self.traces.first().map_or(0, Vec::len);
        let t = if r > 1 {
            StudentsT::new(0.0, 1.0, (r - 1) as f64).map_or(0.0, |d| d.inverse_cdf(0.975))
        } else {
            0.0
        };
        (0..days)
            .map(|day| {
                let xs: Vec<f64> = self.traces.iter().map(|tr| tr[day] as f64).collect();
                let mean = xs.iter().sum::<f64>() / r as f64;
                let half = if r > 1 {
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
                    t * (var / r as f64).sqrt()
                } else {
                    0.0
                };
                DaySummary {
                    day,
                    mean,
                    ci_low: mean - half,
                    ci_high: mean + half,
                }
            })
            .collect()
    }
}

/// Independent replicates in parallel, each with its own stream.
pub fn run_replicates(g: &ContactGraph, info: &[AgentInfo], cfg: &SimConfig, master_seed: u64) -> Result<ReplicateRun> {
    let nb = Neighbors::new(g);
    let traces = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_one(&nb, info, cfg, rng::stream(master_seed, "epiabm", r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateRun {
        seeds: cfg.n_seeds,
        traces,
    })
}

/// First day cumulative infections reach `fraction` of `n`.
pub fn day_reaching(trace: &[usize], fraction: f64, n: usize) -> Option<usize> {
    let target = fraction * n as f64;
    trace.iter().position(|&c| c as f64 >= target)
}

pub fn write_traces(path: &Path, run: &ReplicateRun) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "replicate,day,cumulative_infections,cumulative_excluding_seeds")?;
        for (r, tr) in run.traces.iter().enumerate() {
            for (d, &c) in tr.iter().enumerate() {
                writeln!(f, "{r},{d},{c},{}", c - run.seeds)?;
            }
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

pub fn write_summary(path: &Path, run: &ReplicateRun) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "day,mean,ci_low,ci_high")?;
        for s in run.summary() {
            writeln!(f, "{},{},{},{}", s.day, s.mean, s.ci_low, s.ci_high)?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64, seeds: usize, horizon: u32) -> SimConfig {
        SimConfig {
            p_transmit: p,
            n_seeds: seeds,
            horizon_days: horizon,
            ..Default::default()
        }
    }

    fn path(n: u32) -> ContactGraph {
        ContactGraph::from_edges(n as usize, (0..n - 1).map(|i| (i, i + 1)), Layer::Random)
    }

    #[test]
    fn everyone_seeded() {
        let g = path(5);
        let nb = Neighbors::new(&g);
        let info = vec![AgentInfo::default(); 5];
        let c = cfg(0.5, 5, 10);
        let s = init_sim(&nb, &info, &c, rng::stream(1, "t", 0)).unwrap();
        assert!(s.state.iter().all(|&d| d == Disease::I));
    }

    #[test]
    fn too_many_seeds() {
        let g = path(3);
        let nb = Neighbors::new(&g);
        let info = vec![AgentInfo::default(); 3];
        let c = cfg(0.5, 4, 10);
        assert!(init_sim(&nb, &info, &c, rng::stream(1, "t", 0)).is_err());
    }

    #[test]
    fn no_seeds_no_infections() {
        let g = path(50);
        let info = vec![AgentInfo::default(); 50];
        let run = run_replicates(&g, &info, &cfg(1.0, 0, 100), 3).unwrap();
        assert!(run.traces.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn zero_transmission_stays_at_seeds() {
        let g = path(50);
        let info = vec![AgentInfo::default(); 50];
        let run = run_replicates(&g, &info, &cfg(0.0, 7, 100), 3).unwrap();
        assert!(run.traces.iter().flatten().all(|&c| c == 7));
    }

    #[test]
    fn chain_timing() {
        // A-B with p=1: B exposed inside A's window and infectious 5 days later
        let g = path(2);
        let nb = Neighbors::new(&g);
        let info = vec![AgentInfo::default(); 2];
        let c = cfg(1.0, 1, 60);
        for seed in 0..50 {
            let mut s = init_sim(&nb, &info, &c, rng::stream(seed, "t", 0)).unwrap();
            let (a, b) = if s.state[0] == Disease::I { (0, 1) } else { (1, 0) };
            let mut exposed_on = None;
            let mut infectious_on = None;
            let mut recovered_a = None;
            while step_day(&mut s) {
                if exposed_on.is_none() && s.state[b] != Disease::S {
                    exposed_on = Some(s.day);
                }
                if infectious_on.is_none() && s.state[b] == Disease::I {
                    infectious_on = Some(s.day);
                }
                if recovered_a.is_none() && s.state[a] == Disease::R {
                    recovered_a = Some(s.day);
                }
            }
            let (e, i, r) = (exposed_on.unwrap(), infectious_on.unwrap(), recovered_a.unwrap());
            assert!((1..=r).contains(&e) && (8..=12).contains(&r));
            assert_eq!(i, e + 5);
        }
    }

    #[test]
    fn duplicate_layers_single_check() {
        let mut g = ContactGraph::new(2);
        g.extend([(0, 1)], Layer::Home);
        g.extend([(0, 1)], Layer::Work);
        g.finalize();
        let nb = Neighbors::new(&g);
        assert_eq!(nb.0[0], vec![(1, HOME_BIT | WORK_BIT)]);
    }

    #[test]
    fn boundary_rates() {
        let g = ContactGraph::new(6);
        let nb = Neighbors::new(&g);
        let mut info = vec![AgentInfo::default(); 6];
        info[4].placeholder = true;
        info[5].placeholder = true;
        let c = cfg(0.0, 0, 30);
        let mut s = init_sim(&nb, &info, &c, rng::stream(1, "t", 0)).unwrap();
        // no exposures in the window: q = 0
        boundary_update(&mut s);
        assert_eq!(s.ever_infected, 0);
        // all four in-population susceptibles exposed: q = 1
        for v in 0..4 {
            s.expose(v, 0, HOME_BIT);
        }
        boundary_update(&mut s);
        assert_eq!(s.state[4], Disease::E);
        assert_eq!(s.state[5], Disease::E);
    }

    #[test]
    fn boundary_binomial_rate() {
        let n_in = 1000;
        let n_ph = 2000;
        let g = ContactGraph::new(n_in + n_ph);
        let nb = Neighbors::new(&g);
        let info: Vec<AgentInfo> = (0..n_in + n_ph)
            .map(|v| AgentInfo {
                placeholder: v >= n_in,
                ..Default::default()
            })
            .collect();
        let c = cfg(0.0, 0, 30);
        let mut s = init_sim(&nb, &info, &c, rng::stream(4, "t", 0)).unwrap();
        for v in 0..100 {
            s.expose(v, 0, HOME_BIT);
        }
        boundary_update(&mut s);
        let hit = (n_in..n_in + n_ph).filter(|&v| s.state[v] == Disease::E).count() as f64;
        // Binomial(2000, 0.1): mean 200, sd ~13.4
        assert!((hit - 200.0).abs() < 4.0 * 13.5, "{hit}");
    }

    #[test]
    fn replicates_are_reproducible() {
        let g = ContactGraph::from_edges(200, (0..200u32).flat_map(|i| [(i, (i + 1) % 200), (i, (i + 7) % 200)]), Layer::Random);
        let info = vec![AgentInfo::default(); 200];
        let c = SimConfig {
            replicates: 4,
            ..cfg(0.3, 5, 120)
        };
        let a = run_replicates(&g, &info, &c, 11).unwrap();
        let b = run_replicates(&g, &info, &c, 11).unwrap();
        assert_eq!(a, b);
        let sum = a.summary();
        assert_eq!(sum.len(), 121);
        assert!(sum.iter().all(|d| d.ci_low <= d.mean && d.mean <= d.ci_high));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn seir_invariants(n in 2u32..60, extra in proptest::collection::vec((0u32..60, 0u32..60), 0..120),
                           p in 0.0f64..=1.0, seeds in 1usize..4, seed in 0u64..1000) {
            let mut g = ContactGraph::new(n as usize);
            g.extend(extra.iter().map(|&(a, b)| (a % n, b % n)), Layer::Random);
            g.finalize();
            let nb = Neighbors::new(&g);
            let info = vec![AgentInfo::default(); n as usize];
            let c = cfg(p, seeds.min(n as usize), 80);
            let mut s = init_sim(&nb, &info, &c, rng::stream(seed, "p", 0)).unwrap();
            let seeded: Vec<usize> = (0..n as usize).filter(|&v| s.state[v] == Disease::I).collect();
            let mut prev = s.state.clone();
            let mut prev_cum = s.ever_infected;
            while step_day(&mut s) {
                for (a, b) in prev.iter().zip(&s.state) {
                    let legal = matches!((a, b),
                        (Disease::S, Disease::S | Disease::E) | (Disease::E, Disease::E | Disease::I)
                        | (Disease::I, Disease::I | Disease::R) | (Disease::R, Disease::R));
                    proptest::prop_assert!(legal, "{a:?} -> {b:?}");
                }
                proptest::prop_assert!(s.ever_infected >= prev_cum);
                proptest::prop_assert_eq!(s.ever_infected, s.state.iter().filter(|&&d| d != Disease::S).count());
                prev_cum = s.ever_infected;
                prev = s.state.clone();
            }
            // p = 1 on a connected component reaches every member by the horizon
            if p == 1.0 {
                let sg = crate::netstats::SimpleGraph::from_contact(&g);
                let mut seen = vec![false; n as usize];
                let mut stack = seeded.clone();
                for &v in &stack { seen[v] = true; }
                while let Some(v) = stack.pop() {
                    for &u in &sg.adj[v] {
                        if !seen[u as usize] { seen[u as usize] = true; stack.push(u as usize); }
                    }
                }
                for v in 0..n as usize {
                    proptest::prop_assert_eq!(seen[v], s.state[v] != Disease::S);
                }
            }
        }
    }

    #[test]
    fn reaching_day() {
        assert_eq!(day_reaching(&[1, 3, 5, 9], 0.5, 10), Some(2));
        assert_eq!(day_reaching(&[1, 3], 0.5, 10), None);
    }
}
