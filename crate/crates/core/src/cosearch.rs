//! Simulated-annealing selection of microdata households per CBG.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::ingest::{derive_targets, GeoRecord, MicroHousehold, RegionInputs, Targets, COL_HOUSEHOLDS};
use crate::rng;
use crate::scalar::Real;

pub const TEMP_FLOOR: f64 = 1e-12;
/// Steps between from-scratch checks of the running sums.
const VERIFY_EVERY: usize = 4096;

/// E = Σ (√o − √e)².
pub fn ft2_cost<T: Real>(o: &[T], e: &[T]) -> Result<T> {
    if o.len() != e.len() {
        return Err(Error::LengthMismatch(o.len(), e.len()));
    }
    if o.iter().chain(e).any(|v| *v < T::zero()) {
        return Err(Error::InvalidParameter("cost inputs must be non-negative".into()));
    }
    Ok(o.iter()
        .zip(e)
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .fold(T::zero(), |s, v| s + v))
}

/// Metropolis acceptance: 1 for improvements, exp(−ΔE/T) otherwise.
pub fn acceptance_probability<T: Real>(delta_e: T, temp: T) -> Result<T> {
    if !(temp > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {}",
            temp.to_f64_lossy()
        )));
    }
    Ok(if delta_e < T::zero() {
        T::one()
    } else {
        (-delta_e / temp).exp()
    })
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub cost_cutoff: f64,
    pub max_steps_per_level: usize,
    /// Cooling multiplier per ladder level.
    pub cooling: Vec<f64>,
    pub start_temp_fraction: f64,
    /// Urban-percentage window for the widest pool level.
    pub urban_threshold: f64,
    /// Chi-square quantile used for the pass flag.
    pub pass_quantile: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            cost_cutoff: 15.0,
            max_steps_per_level: 200_000,
            cooling: vec![0.99, 0.99, 0.99, 0.995],
            start_temp_fraction: 0.5,
            urban_threshold: 20.0,
            pass_quantile: 0.95,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cooling.len() != LEVELS {
            return bad(format!("cooling needs {LEVELS} multipliers, got {}", self.cooling.len()));
        }
        if self.cooling.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return bad("cooling multipliers must lie in (0, 1)".into());
        }
        if !(self.cost_cutoff > 0.0) {
            return bad("cost_cutoff must be positive".into());
        }
        if !(self.start_temp_fraction > 0.0) {
            return bad("start_temp_fraction must be positive".into());
        }
        if !(self.pass_quantile > 0.0 && self.pass_quantile < 1.0) {
            return bad("pass_quantile must lie in (0, 1)".into());
        }
        if !(self.urban_threshold >= 0.0) {
            return bad("urban_threshold must be non-negative".into());
        }
        Ok(())
    }
}

pub const LEVELS: usize = 4;

/// Households eligible at one ladder level (indices into the microdata list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePool {
    pub level: usize,
    pub households: Vec<usize>,
}

/// PUMA-level lookups used to build pools.
#[derive(Debug, Clone, Default)]
pub struct PoolIndex {
    by_puma: BTreeMap<String, Vec<usize>>,
    puma_urban: BTreeMap<String, f64>,
    county_pumas: BTreeMap<String, BTreeSet<String>>,
    cbsa_pumas: BTreeMap<String, BTreeSet<String>>,
}

impl PoolIndex {
    pub fn new<'a>(geo: impl IntoIterator<Item = &'a GeoRecord>, pums: &[MicroHousehold]) -> Self {
        let mut idx = PoolIndex::default();
        for (i, h) in pums.iter().enumerate() {
            idx.by_puma.entry(h.puma.clone()).or_default().push(i);
        }
        let mut urban: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for g in geo {
            let Some(puma) = g.puma.as_ref().filter(|p| !p.is_empty()) else {
                continue;
            };
            let u = urban.entry(puma.clone()).or_default();
            u.0 += g.urban_pct;
            u.1 += 1.0;
            idx.county_pumas.entry(g.county.clone()).or_default().insert(puma.clone());
            if let Some(c) = &g.cbsa {
                idx.cbsa_pumas.entry(c.clone()).or_default().insert(puma.clone());
            }
        }
        idx.puma_urban = urban.into_iter().map(|(p, (s, n))| (p, s / n)).collect();
        idx
    }

    fn households(&self, pumas: &BTreeSet<String>) -> Vec<usize> {
        let mut out: Vec<usize> = pumas
            .iter()
            .filter_map(|p| self.by_puma.get(p))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// PUMAs reachable at `level` (cumulative over lower levels).
    pub fn pumas(&self, cbg: &GeoRecord, level: usize, urban_threshold: f64) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        if let Some(p) = cbg.puma.as_ref().filter(|p| !p.is_empty()) {
            set.insert(p.clone());
        }
        if level >= 1 {
            set.extend(self.county_pumas.get(&cbg.county).into_iter().flatten().cloned());
        }
        if level >= 2 {
            if let Some(c) = &cbg.cbsa {
                set.extend(self.cbsa_pumas.get(c).into_iter().flatten().cloned());
            }
        }
        if level >= 3 {
            set.extend(
                self.puma_urban
                    .iter()
                    .filter(|(_, &u)| (u - cbg.urban_pct).abs() <= urban_threshold)
                    .map(|(p, _)| p.clone()),
            );
        }
        set
    }
}

/// Eligible households for a CBG at one ladder level.
pub fn pool_ladder(cbg: &GeoRecord, level: usize, index: &PoolIndex, urban_threshold: f64) -> SamplePool {
    SamplePool {
        level,
        households: index.households(&index.pumas(cbg, level, urban_threshold)),
    }
}

/// All four levels for a CBG.
pub fn pools_for(cbg: &GeoRecord, index: &PoolIndex, urban_threshold: f64) -> Vec<SamplePool> {
    (0..LEVELS).map(|l| pool_ladder(cbg, l, index, urban_threshold)).collect()
}

/// Running state of one search: selected households, their summed
/// contributions `o`, the census targets `e`, and the cost.
#[derive(Debug, Clone)]
pub struct AnnealState<'a, T> {
    contributions: &'a [Targets<T>],
    sqrt_e: Vec<T>,
    pub selection: Vec<usize>,
    pub o: Vec<T>,
    pub e: &'a [T],
    pub cost: T,
    pub temp: T,
    pub steps: usize,
}

impl<'a, T: Real> AnnealState<'a, T> {
    pub fn new(contributions: &'a [Targets<T>], e: &'a [T], selection: Vec<usize>) -> Result<Self> {
        let o = sum_contributions(contributions, &selection, e.len())?;
        let cost = ft2_cost(&o, e)?;
        Ok(AnnealState {
            contributions,
            sqrt_e: e.iter().map(|v| v.sqrt()).collect(),
            selection,
            o,
            e,
            cost,
            temp: T::zero(),
            steps: 0,
        })
    }

    /// Cost after replacing the household in `slot` by `household`.
    pub fn swap_cost(&self, slot: usize, household: usize) -> T {
        let old = &self.contributions[self.selection[slot]].0;
        let new = &self.contributions[household].0;
        let mut cost = T::zero();
        for j in 0..self.o.len() {
            let v = (self.o[j] - old[j] + new[j]).max(T::zero());
            let d = v.sqrt() - self.sqrt_e[j];
            cost += d * d;
        }
        cost
    }

    pub fn apply_swap(&mut self, slot: usize, household: usize, new_cost: T) {
        let old = &self.contributions[self.selection[slot]].0;
        let new = &self.contributions[household].0;
        for j in 0..self.o.len() {
            self.o[j] = self.o[j] - old[j] + new[j];
        }
        self.selection[slot] = household;
        self.cost = new_cost;
    }

    /// Recompute `o` from the selection; true when the running sums matched.
    pub fn verify(&mut self) -> bool {
        let fresh = sum_contributions(self.contributions, &self.selection, self.o.len())
            .expect("widths checked at construction");
        let ok = fresh == self.o;
        if !ok {
            self.o = fresh;
            self.cost = ft2_cost(&self.o, self.e).expect("widths checked at construction");
        }
        ok
    }
}

fn sum_contributions<T: Real>(contributions: &[Targets<T>], selection: &[usize], width: usize) -> Result<Vec<T>> {
    let mut o = vec![T::zero(); width];
    for &h in selection {
        let c = &contributions[h].0;
        if c.len() != width {
            return Err(Error::LengthMismatch(c.len(), width));
        }
        for (a, &b) in o.iter_mut().zip(c) {
            *a += b;
        }
    }
    Ok(o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome<T> {
    pub selection: Vec<usize>,
    pub final_cost: T,
    pub level_used: usize,
    /// Steps taken over all levels tried.
    pub steps: usize,
    pub below_cutoff: bool,
}

fn random_selection<R: Rng>(pool: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Anneal one CBG through the pool ladder, stopping at the first level that
/// reaches the cutoff.
pub fn anneal_cbg<T: Real, R: Rng>(
    e: &[T],
    n_households: usize,
    pools: &[SamplePool],
    contributions: &[Targets<T>],
    cfg: &AnnealConfig,
    rng: &mut R,
) -> Result<AnnealOutcome<T>> {
    if n_households == 0 {
        return Err(Error::InvalidParameter("annealing needs at least one household".into()));
    }
    if pools.iter().all(|p| p.households.is_empty()) {
        return Err(Error::EmptyPools("every pool level is empty".into()));
    }
    let cutoff = T::from_f64_lossy(cfg.cost_cutoff);
    let floor = T::from_f64_lossy(TEMP_FLOOR);
    let mut best: Option<AnnealOutcome<T>> = None;
    let mut total_steps = 0;

    for pool in pools {
        if pool.households.is_empty() {
            warn!("sample pool at level {} is empty; skipping", pool.level);
            continue;
        }
        let cooling = T::from_f64_lossy(cfg.cooling.get(pool.level).copied().unwrap_or(0.99));
        let init = random_selection(&pool.households, n_households, rng);
        let mut state = AnnealState::new(contributions, e, init)?;
        state.temp = (T::from_f64_lossy(cfg.start_temp_fraction) * state.cost).max(floor);
        let mut level_best = (state.cost, state.selection.clone());

        while state.cost > cutoff && state.steps < cfg.max_steps_per_level {
            let slot = rng.random_range(0..n_households);
            let h = pool.households[rng.random_range(0..pool.households.len())];
            let new_cost = state.swap_cost(slot, h);
            let p = acceptance_probability(new_cost - state.cost, state.temp)?;
            let u: f64 = rng.random();
            if p >= T::one() || u < p.to_f64_lossy() {
                state.apply_swap(slot, h, new_cost);
                if state.cost < level_best.0 {
                    level_best = (state.cost, state.selection.clone());
                }
            }
            state.temp = (state.temp * cooling).max(floor);
            state.steps += 1;
            if state.steps % VERIFY_EVERY == 0 && !state.verify() {
                warn!("running sums drifted and were re-derived at step {}", state.steps);
            }
        }
        total_steps += state.steps;
        if state.cost <= cutoff {
            return Ok(AnnealOutcome {
                selection: state.selection,
                final_cost: state.cost,
                level_used: pool.level,
                steps: total_steps,
                below_cutoff: true,
            });
        }
        if best.as_ref().is_none_or(|b| level_best.0 < b.final_cost) {
            best = Some(AnnealOutcome {
                selection: level_best.1,
                final_cost: level_best.0,
                level_used: pool.level,
                steps: 0,
                below_cutoff: false,
            });
        }
    }
    let mut out = best.expect("at least one non-empty pool");
    out.steps = total_steps;
    Ok(out)
}

/// Critical value of 4E for the pass flag: the `quantile` of χ²(k − 1).
pub fn pass_threshold(width: usize, quantile: f64) -> Option<f64> {
    if width < 2 {
        return None;
    }
    ChiSquared::new((width - 1) as f64).ok().map(|d| d.inverse_cdf(quantile))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub cbg: String,
    pub n_households: usize,
    pub final_cost: f64,
    pub level_used: usize,
    pub steps: usize,
    pub pass: bool,
    pub random_baseline_cost: f64,
}

impl FitRecord {
    pub fn ln_cost(&self) -> f64 {
        self.final_cost.ln()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RegionSelection {
    /// Selected microdata indices per CBG.
    pub selections: BTreeMap<String, Vec<usize>>,
    pub report: Vec<FitRecord>,
    pub failures: Vec<(String, String)>,
}

/// Summed contributions of a selection under any schema.
pub fn selection_targets(selection: &[usize], pums: &[MicroHousehold], schema: &crate::ingest::TargetSchema) -> Targets<f64> {
    let mut o = Targets::zeros(schema.width());
    for &h in selection {
        o.add_assign(&schema.contribution(&pums[h].view()));
    }
    o
}

/// Run the search for every retained CBG in parallel. Each CBG draws from
/// its own stream, so the result does not depend on the thread count.
pub fn synthesize_region(
    region: &RegionInputs,
    retained: &BTreeSet<String>,
    cfg: &AnnealConfig,
    master_seed: u64,
) -> Result<RegionSelection> {
    cfg.validate()?;
    let index = PoolIndex::new(region.geo.values(), &region.pums);
    let contributions: Vec<Targets<f64>> = region.pums.iter().map(|h| h.contribution.clone()).collect();
    let width = region.schema.width();
    let threshold = pass_threshold(width, cfg.pass_quantile);
    let cbgs: Vec<&String> = retained.iter().collect();

    let results: Vec<(String, Result<(Vec<usize>, FitRecord)>)> = cbgs
        .par_iter()
        .map(|&cbg| {
            let run = || -> Result<(Vec<usize>, FitRecord)> {
                let row = &region.cbg_table[cbg];
                let geo = region.geo.get(cbg).ok_or_else(|| Error::DanglingCbg {
                    file: "geo.csv".into(),
                    line: 0,
                    cbg: cbg.clone(),
                })?;
                let e: Targets<f64> = derive_targets(cbg, row, &region.schema)?;
                let n = row.get(COL_HOUSEHOLDS).copied().unwrap_or(0.0).round().max(0.0) as usize;
                let passes = |cost: f64| match threshold {
                    Some(t) => 4.0 * cost < t,
                    None => cost <= cfg.cost_cutoff,
                };
                if n == 0 {
                    let cost = ft2_cost(&vec![0.0; width], &e.0)?;
                    return Ok((
                        Vec::new(),
                        FitRecord {
                            cbg: cbg.clone(),
                            n_households: 0,
                            final_cost: cost,
                            level_used: 0,
                            steps: 0,
                            pass: passes(cost),
                            random_baseline_cost: cost,
                        },
                    ));
                }
                let pools = pools_for(geo, &index, cfg.urban_threshold);
                let id = rng::key(cbg);
                let mut search_rng = rng::stream(master_seed, "cosearch", id);
                let out = anneal_cbg(&e.0, n, &pools, &contributions, cfg, &mut search_rng)
                    .map_err(|err| match err {
                        Error::EmptyPools(_) => Error::EmptyPools(format!("CBG {cbg}: every pool level is empty")),
                        other => other,
                    })?;
                let first = pools
                    .iter()
                    .find(|p| !p.households.is_empty())
                    .expect("anneal_cbg succeeded");
                let mut base_rng = rng::stream(master_seed, "baseline", id);
                let base = random_selection(&first.households, n, &mut base_rng);
                let base_cost = ft2_cost(&sum_contributions(&contributions, &base, width)?, &e.0)?;
                Ok((
                    out.selection,
                    FitRecord {
                        cbg: cbg.clone(),
                        n_households: n,
                        final_cost: out.final_cost,
                        level_used: out.level_used,
                        steps: out.steps,
                        pass: passes(out.final_cost),
                        random_baseline_cost: base_cost,
                    },
                ))
            };
            (cbg.clone(), run())
        })
        .collect();

    let mut out = RegionSelection::default();
    for (cbg, r) in results {
        match r {
            Ok((sel, rec)) => {
                if !rec.pass {
                    warn!("CBG {cbg}: final cost {} fails the fit criterion", rec.final_cost);
                }
                out.selections.insert(cbg, sel);
                out.report.push(rec);
            }
            Err(e) => {
                warn!("CBG {cbg}: {e}");
                out.failures.push((cbg, e.to_string()));
            }
        }
    }
    info!(
        "annealed {} CBGs ({} failed, {} below cutoff)",
        out.report.len(),
        out.failures.len(),
        out.report.iter().filter(|r| r.final_cost <= cfg.cost_cutoff).count()
    );
    Ok(out)
}

pub fn write_fit_report(path: &Path, report: &[FitRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "cbg,n_households,final_cost,ln_cost,level_used,steps,pass_flag,random_baseline_cost")?;
        for r in report {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                r.cbg,
                r.n_households,
                r.final_cost,
                r.ln_cost(),
                r.level_used,
                r.steps,
                u8::from(r.pass),
                r.random_baseline_cost
            )?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cost_examples() {
        assert_eq!(ft2_cost(&[1.0, 4.0, 9.0], &[4.0, 4.0, 4.0]).unwrap(), 2.0);
        assert_eq!(ft2_cost(&[0.0, 0.0], &[4.0, 9.0]).unwrap(), 13.0);
        assert_eq!(ft2_cost(&[3.0f32, 7.0], &[3.0, 7.0]).unwrap(), 0.0);
        assert!(matches!(ft2_cost(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn acceptance_examples() {
        assert_eq!(acceptance_probability(-3.0, 0.1).unwrap(), 1.0);
        assert_eq!(acceptance_probability(0.0, 2.0).unwrap(), 1.0);
        assert!((acceptance_probability(1.7, 1.7).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(acceptance_probability(1.0, 0.0).is_err());
    }

    fn geo(cbg: &str, puma: &str, county: &str, cbsa: Option<&str>, urban: f64) -> GeoRecord {
        GeoRecord {
            cbg: cbg.into(),
            x: 0.0,
            y: 0.0,
            puma: Some(puma.into()),
            county: county.into(),
            cbsa: cbsa.map(String::from),
            urban_pct: urban,
        }
    }

    fn hh(puma: &str) -> MicroHousehold {
        MicroHousehold {
            id: String::new(),
            puma: puma.into(),
            income: 0,
            snap: false,
            members: vec![],
            contribution: Targets(vec![]),
        }
    }

    #[test]
    fn ladder_levels() {
        let g = vec![
            geo("a", "P1", "C1", Some("M"), 100.0),
            geo("b", "P2", "C1", None, 90.0),
            geo("c", "P3", "C2", Some("M"), 50.0),
            geo("d", "P4", "C3", None, 85.0),
            geo("e", "P5", "C4", None, 10.0),
        ];
        let pums: Vec<MicroHousehold> = ["P1", "P2", "P3", "P4", "P5"].iter().map(|p| hh(p)).collect();
        let idx = PoolIndex::new(&g, &pums);
        let lv = |cbg: &GeoRecord, l| pool_ladder(cbg, l, &idx, 20.0).households;
        assert_eq!(lv(&g[0], 0), vec![0]);
        assert_eq!(lv(&g[0], 1), vec![0, 1]);
        assert_eq!(lv(&g[0], 2), vec![0, 1, 2]);
        // urban 100: only PUMAs with urban >= 80 join
        assert_eq!(lv(&g[0], 3), vec![0, 1, 2, 3]);
        // no CBSA: level 2 equals level 1
        assert_eq!(lv(&g[1], 2), lv(&g[1], 1));
        for c in &g {
            let pools = pools_for(c, &idx, 20.0);
            for w in pools.windows(2) {
                let hi: BTreeSet<_> = w[1].households.iter().collect();
                assert!(w[0].households.iter().all(|h| hi.contains(h)));
            }
        }
    }

    fn toy() -> (Vec<Targets<f64>>, Vec<f64>) {
        let c = vec![
            Targets(vec![1.0, 0.0, 2.0]),
            Targets(vec![0.0, 1.0, 1.0]),
            Targets(vec![2.0, 1.0, 0.0]),
            Targets(vec![1.0, 1.0, 1.0]),
        ];
        (c, vec![4.0, 2.0, 3.0])
    }

    #[test]
    fn infinite_cutoff_returns_initial_selection() {
        let (c, e) = toy();
        let cfg = AnnealConfig {
            cost_cutoff: f64::INFINITY,
            ..Default::default()
        };
        let pools = vec![SamplePool { level: 0, households: vec![0, 1, 2, 3] }];
        let out = anneal_cbg(&e, 3, &pools, &c, &cfg, &mut rng::stream(1, "t", 0)).unwrap();
        assert_eq!(out.steps, 0);
        assert!(out.below_cutoff);
    }

    #[test]
    fn finds_exact_selection() {
        let (c, e) = toy();
        let cfg = AnnealConfig {
            cost_cutoff: 1e-9,
            max_steps_per_level: 20_000,
            ..Default::default()
        };
        let pools = vec![SamplePool { level: 0, households: vec![0, 1, 2, 3] }];
        let out = anneal_cbg(&e, 3, &pools, &c, &cfg, &mut rng::stream(9, "t", 0)).unwrap();
        assert!(out.below_cutoff);
        assert_eq!(out.final_cost, 0.0);
    }

    #[test]
    fn errors_on_degenerate_input() {
        let (c, e) = toy();
        let cfg = AnnealConfig::default();
        let pools = vec![SamplePool { level: 0, households: vec![0] }];
        assert!(anneal_cbg(&e, 0, &pools, &c, &cfg, &mut rng::stream(1, "t", 0)).is_err());
        let empty = vec![SamplePool { level: 0, households: vec![] }; 4];
        assert!(matches!(
            anneal_cbg(&e, 2, &empty, &c, &cfg, &mut rng::stream(1, "t", 0)),
            Err(Error::EmptyPools(_))
        ));
    }

    #[test]
    fn level_used_skips_empty_levels() {
        let (c, e) = toy();
        let cfg = AnnealConfig {
            cost_cutoff: 1e-9,
            max_steps_per_level: 20_000,
            ..Default::default()
        };
        let pools = vec![
            SamplePool { level: 0, households: vec![] },
            SamplePool { level: 1, households: vec![0, 1, 2, 3] },
        ];
        let out = anneal_cbg(&e, 3, &pools, &c, &cfg, &mut rng::stream(2, "t", 0)).unwrap();
        assert_eq!(out.level_used, 1);
    }

    #[test]
    fn pass_threshold_matches_known_quantile() {
        // χ²(84) 0.95 quantile ≈ 106.39
        let t = pass_threshold(85, 0.95).unwrap();
        assert!((t - 106.395).abs() < 0.01, "{t}");
        assert!(4.0 * 15.0 < t);
    }

    proptest! {
        #[test]
        fn running_sums_stay_exact(swaps in prop::collection::vec((0usize..5, 0usize..4), 0..200)) {
            let (c, e) = toy();
            let mut s = AnnealState::new(&c, &e, vec![0, 1, 2, 3, 0]).unwrap();
            for (slot, h) in swaps {
                let nc = s.swap_cost(slot, h);
                s.apply_swap(slot, h, nc);
                prop_assert!((s.cost - ft2_cost(&s.o, &e).unwrap()).abs() < 1e-12);
            }
            prop_assert!(s.verify());
        }

        #[test]
        fn acceptance_monotone_in_temperature(d in 0.0f64..50.0, t1 in 1e-3f64..100.0, t2 in 1e-3f64..100.0) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(acceptance_probability(d, lo).unwrap() <= acceptance_probability(d, hi).unwrap());
        }

        #[test]
        fn greedy_limit_never_increases_cost(seed in 0u64..1000) {
            let (c, e) = toy();
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = AnnealState::new(&c, &e, vec![0, 0, 0]).unwrap();
            s.temp = TEMP_FLOOR;
            for _ in 0..200 {
                let slot = r.random_range(0..3);
                let h = r.random_range(0..4);
                let nc = s.swap_cost(slot, h);
                let p = acceptance_probability(nc - s.cost, s.temp).unwrap();
                let before = s.cost;
                if p >= 1.0 || r.random::<f64>() < p {
                    s.apply_swap(slot, h, nc);
                }
                prop_assert!(s.cost <= before + 1e-9);
            }
        }

        #[test]
        fn cost_nonnegative(o in prop::collection::vec(0.0f64..100.0, 5), e in prop::collection::vec(0.0f64..100.0, 5)) {
            prop_assert!(ft2_cost(&o, &e).unwrap() >= 0.0);
        }
    }
}
