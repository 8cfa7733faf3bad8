//! End-to-end orchestration, run configuration and the fixture generator.
//!
//! Directory layout of a run:
//!
//! ```text
//! <run>/people.csv places.csv households.csv fit_report.csv
//! <run>/network/graphs.csv <name>_edges.csv agents.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;

use crate::apportion::largest_remainder;
use crate::attrs::{Grade, Industry, PersonAttrs, Race, Relationship, Sex};
use crate::cosearch::{ft2_cost, pools_for, synthesize_region, write_fit_report, AnnealConfig, FitRecord, PoolIndex};
use crate::epiabm::{self, day_reaching, AgentInfo, ReplicateRun, SimConfig};
use crate::error::{Error, Result};
use crate::ingest::{
    derive_gq_counts, derive_targets, emp_column, filter_cbgs, fit_employer_sizes, load_region_inputs, p43_column,
    p43_proportions, prepare_schools, AgeBand, CbgRow, EmployerBin, GqType, LognormalParams, RawCatalog, RegionInputs,
    SchoolRankings, TargetSchema, Targets, COL_GQ_65PLUS, COL_GQ_TOTAL, COL_HOUSEHOLDS, COL_HOUSEHOLD_ADULTS,
    COL_TOTAL_ADULTS, FILE_CBG, FILE_CBP, FILE_GEO, FILE_GQ_INDUSTRY, FILE_OD, FILE_PUMS_HOUSEHOLDS,
    FILE_PUMS_PERSONS, FILE_SCHEMA, FILE_SCHOOLS, FILE_WAC, OUTSIDE,
};
use crate::ipf::{commute_matrix, industry_residence_matrix, CommuteMatrix, ResidenceCounts, WacIndex};
use crate::netgen::{assemble_network, read_edges, reference_graph, write_edges, ContactGraph, NetworkParams, ReferenceKind};
use crate::netstats::{stats_report, write_stats, StatsReport};
use crate::placement::{
    assign_commutes, assign_gq_staff, assign_students, assign_teachers, build_workplaces, inbound_commuters,
    instantiate_population, read_population, write_households, write_people, write_places, GqPlan, Population,
    GQ_KINDS,
};
use crate::rng::{self, StreamRng};

pub const FILE_PEOPLE: &str = "people.csv";
pub const FILE_PLACES: &str = "places.csv";
pub const FILE_HOUSEHOLDS: &str = "households.csv";
pub const FILE_FIT_REPORT: &str = "fit_report.csv";
pub const FILE_GRAPHS: &str = "graphs.csv";
pub const FILE_AGENTS: &str = "agents.csv";
pub const NETWORK_DIR: &str = "network";
pub const SYNTHETIC: &str = "synthetic";

/// Fallback employer sizes when no county has a usable fit.
const DEFAULT_EMPLOYER_SIZES: LognormalParams = LognormalParams { mu: 1.5, sigma: 1.2 };

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceParams {
    pub scale_free_gamma: f64,
    pub small_world_beta: f64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams {
            scale_free_gamma: 2.5,
            small_world_beta: 0.25,
        }
    }
}

impl ReferenceParams {
    pub fn kinds(&self) -> [ReferenceKind; 4] {
        [
            ReferenceKind::BarabasiAlbert,
            ReferenceKind::ErdosRenyi,
            ReferenceKind::StaticScaleFree {
                gamma: self.scale_free_gamma,
            },
            ReferenceKind::WattsStrogatz {
                beta: self.small_world_beta,
            },
        ]
    }
}

/// Everything a run needs besides its directories. Loaded from TOML with
/// `[anneal]`, `[network]`, `[reference]` and `[sim]` sections.
#[derive(Debug, Clone, PartialEq, Default, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub anneal: AnnealConfig,
    pub network: NetworkParams,
    pub reference: ReferenceParams,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.anneal.validate()?;
        self.sim.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads: must be at least 1".into()));
        }
        let n = &self.network;
        if !(n.work_k >= 0.0 && n.school_k >= 0.0) {
            return Err(Error::Config("network.work_k / network.school_k: must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&n.work_alpha) || !(0.0..=1.0).contains(&n.school_alpha) {
            return Err(Error::Config("network.work_alpha / network.school_alpha: must lie in [0, 1]".into()));
        }
        if !n.gq_k.is_multiple_of(2) {
            return Err(Error::Config("network.gq_k: must be even".into()));
        }
        if !(0.0..=1.0).contains(&n.gq_beta) || !(0.0..=1.0).contains(&self.reference.small_world_beta) {
            return Err(Error::Config("rewiring probabilities must lie in [0, 1]".into()));
        }
        if self.reference.scale_free_gamma <= 2.0 {
            return Err(Error::Config("reference.scale_free_gamma: must exceed 2".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// synthesize

fn get(row: &CbgRow, col: &str) -> f64 {
    row.get(col).copied().unwrap_or(0.0).max(0.0)
}

fn employment(row: &CbgRow) -> [f64; Industry::COUNT] {
    let mut e = [0.0; Industry::COUNT];
    for ind in Industry::ALL {
        e[ind.index()] = get(row, &emp_column(ind));
    }
    e
}

fn integer_row(row: &[f64]) -> [u64; Industry::COUNT] {
    let total: f64 = row.iter().sum();
    let mut out = [0; Industry::COUNT];
    if total > 0.0 {
        out.copy_from_slice(&largest_remainder(row, total.round() as u64));
    }
    out
}

/// Fit industry × residence per retained CBG. Returns GQ plans and the
/// census employment vectors, and replaces the employment columns of
/// `region` with the household row so the search targets household workers.
fn residence_split(
    region: &mut RegionInputs,
    retained: &BTreeSet<String>,
) -> (BTreeMap<String, GqPlan>, BTreeMap<String, [f64; Industry::COUNT]>) {
    let mut plans = BTreeMap::new();
    let mut census = BTreeMap::new();
    for cbg in retained {
        let row = &region.cbg_table[cbg];
        let emp = employment(row);
        let counts = derive_gq_counts(cbg, row, &p43_proportions(row));
        let total_adults = get(row, COL_TOTAL_ADULTS);
        let residence = ResidenceCounts {
            household_share: if total_adults > 0.0 {
                (get(row, COL_HOUSEHOLD_ADULTS) / total_adults).min(1.0)
            } else {
                1.0
            },
            civilian_gq_18_64: counts.get(AgeBand::Adult18To64, GqType::CivilianNoninst) as f64,
            military_gq: counts.get(AgeBand::Adult18To64, GqType::Military) as f64,
        };
        let mut plan = GqPlan {
            counts,
            ..Default::default()
        };
        match industry_residence_matrix(cbg, &emp, &residence, &region.gq_industry) {
            Ok(fit) => {
                plan.civilian_industries = integer_row(&fit.matrix[1]);
                plan.military_industries = integer_row(&fit.matrix[2]);
                let row = region.cbg_table.get_mut(cbg).expect("retained CBG");
                for ind in Industry::ALL {
                    row.insert(emp_column(ind), fit.matrix[0][ind.index()]);
                }
            }
            Err(e) => warn!("CBG {cbg}: industry x residence fit failed ({e}); GQ residents get no jobs"),
        }
        plans.insert(cbg.clone(), plan);
        census.insert(cbg.clone(), emp);
    }
    (plans, census)
}

fn commute_matrices(
    region: &RegionInputs,
    retained: &BTreeSet<String>,
    census: &BTreeMap<String, [f64; Industry::COUNT]>,
    wac: &WacIndex,
) -> BTreeMap<String, CommuteMatrix> {
    let mut od: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &region.od {
        if retained.contains(&r.home) {
            *od.entry(r.home.as_str()).or_default().entry(r.work.clone()).or_default() += r.count;
        }
    }
    let fitted: Vec<(String, Result<CommuteMatrix>)> = retained
        .par_iter()
        .filter_map(|cbg| {
            od.get(cbg.as_str())
                .map(|row| (cbg.clone(), commute_matrix(cbg, &census[cbg], row, wac)))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (cbg, m) in fitted {
        match m {
            Ok(m) => {
                if !m.converged {
                    warn!("commute fit for {cbg} stopped at error {:e}", m.error);
                }
                out.insert(cbg, m);
            }
            Err(e) => warn!("no commute matrix for {cbg}: {e}"),
        }
    }
    out
}

/// Per-county employer-size fits with a pooled fallback.
fn employer_params(region: &RegionInputs) -> (BTreeMap<String, LognormalParams>, LognormalParams) {
    let mut fits = BTreeMap::new();
    let mut pooled: BTreeMap<(u64, Option<u64>), f64> = BTreeMap::new();
    for (county, bins) in &region.cbp {
        for b in bins {
            *pooled
                .entry((b.bin_min as u64, b.bin_max.map(|m| m as u64)))
                .or_default() += b.count;
        }
        match fit_employer_sizes(bins) {
            Ok(p) => {
                fits.insert(county.clone(), p);
            }
            Err(e) => warn!("county {county}: employer-size fit failed ({e})"),
        }
    }
    let pooled: Vec<EmployerBin> = pooled
        .into_iter()
        .map(|((lo, hi), count)| EmployerBin {
            bin_min: lo as f64,
            bin_max: hi.map(|h| h as f64),
            count,
        })
        .collect();
    let fallback = fit_employer_sizes(&pooled).unwrap_or_else(|e| {
        warn!("pooled employer-size fit failed ({e}); using defaults");
        DEFAULT_EMPLOYER_SIZES
    });
    (fits, fallback)
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub population: Population,
    pub report: Vec<FitRecord>,
    /// Selected microdata indices per CBG.
    pub selections: BTreeMap<String, Vec<usize>>,
    pub dropped: Vec<String>,
    pub commute_matrices: BTreeMap<String, CommuteMatrix>,
    pub gq_plans: BTreeMap<String, GqPlan>,
}

/// ingest → IPF → search → placement, in memory.
pub fn synthesize_population(region: &RegionInputs, cfg: &RunConfig) -> Result<Synthesis> {
    let seed = cfg.master_seed;
    let filter = filter_cbgs(region);
    let retained = filter.retained;
    let mut region = region.clone();
    let (gq_plans, census) = residence_split(&mut region, &retained);

    let selection = synthesize_region(&region, &retained, &cfg.anneal, seed)?;
    if !retained.is_empty() && selection.failures.len() == retained.len() {
        return Err(Error::EmptyPools(format!(
            "search failed in every CBG; first: {} ({})",
            selection.failures[0].0, selection.failures[0].1
        )));
    }
    let stage = |k: u64| rng::stream(seed, "placement", k);

    let mut pop = instantiate_population(
        retained.iter().cloned(),
        &selection.selections,
        &region.pums,
        &gq_plans,
        &mut stage(0),
    )?;
    let schools = prepare_schools(&region.schools);
    pop.add_schools(&schools, &region.geo);
    let rankings = SchoolRankings::build(retained.iter().filter_map(|c| region.geo.get(c)), &schools);
    assign_students(&mut pop, &rankings, &mut stage(1));

    let wac = WacIndex::new(&region.wac);
    let matrices = commute_matrices(&region, &retained, &census, &wac);
    assign_commutes(&mut pop, &matrices, &mut stage(2));
    assign_teachers(&mut pop, &region.geo, &mut stage(3));
    assign_gq_staff(&mut pop, &region.geo, &mut stage(4));

    let inbound = inbound_commuters(&region.od, &wac, &pop);
    let (fits, fallback) = employer_params(&region);
    let geo = &region.geo;
    build_workplaces(
        &mut pop,
        &inbound,
        |cbg| {
            geo.get(cbg)
                .and_then(|g| fits.get(&g.county))
                .copied()
                .unwrap_or(fallback)
        },
        &mut stage(5),
    );
    pop.canonicalize();
    info!(
        "population: {} persons ({} placeholders), {} households, {} places",
        pop.persons.len(),
        pop.report.placeholders,
        pop.households.len(),
        pop.places.len()
    );
    Ok(Synthesis {
        population: pop,
        report: selection.report,
        selections: selection.selections,
        dropped: filter.dropped.into_iter().map(|(c, _)| c).collect(),
        commute_matrices: matrices,
        gq_plans,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `synthesize` command: reads an input directory, writes people, places,
/// households and the fit report into `out`.
pub fn synthesize(input: &Path, out: &Path, cfg: &RunConfig) -> Result<Synthesis> {
    let region = load_region_inputs(input)?;
    let s = synthesize_population(&region, cfg)?;
    create_dir(out)?;
    write_people(&out.join(FILE_PEOPLE), &s.population)?;
    write_places(&out.join(FILE_PLACES), &s.population)?;
    write_households(&out.join(FILE_HOUSEHOLDS), &s.population)?;
    write_fit_report(&out.join(FILE_FIT_REPORT), &s.report)?;
    Ok(s)
}

pub fn load_population(run: &Path) -> Result<Population> {
    read_population(&run.join(FILE_PEOPLE), &run.join(FILE_PLACES), &run.join(FILE_HOUSEHOLDS))
}

// ---------------------------------------------------------------------------
// network

/// One row of the graph manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEntry {
    pub name: String,
    /// Edge list, relative to the manifest directory.
    pub file: String,
    pub n_vertices: usize,
    /// Per-vertex boundary roles, relative to the manifest directory.
    pub agents: Option<String>,
}

pub fn write_manifest(path: &Path, entries: &[GraphEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "file", "n_vertices", "agents"])?;
    for e in entries {
        w.write_record([
            e.name.as_str(),
            &e.file,
            &e.n_vertices.to_string(),
            e.agents.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<GraphEntry>> {
    let t = crate::table::Table::read(path)?;
    t.require(&["name", "file", "n_vertices"])?;
    t.rows()
        .map(|r| {
            Ok(GraphEntry {
                name: r.str("name")?.to_string(),
                file: r.str("file")?.to_string(),
                n_vertices: r.parse("n_vertices")?,
                agents: r.opt_str("agents").map(String::from),
            })
        })
        .collect()
}

pub fn write_agents(path: &Path, info: &[AgentInfo]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "vertex,placeholder,works_outside,works_inside")?;
        for (v, a) in info.iter().enumerate() {
            writeln!(
                f,
                "{v},{},{},{}",
                u8::from(a.placeholder),
                u8::from(a.works_outside),
                u8::from(a.works_inside)
            )?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

pub fn read_agents(path: &Path, n: usize) -> Result<Vec<AgentInfo>> {
    let t = crate::table::Table::read(path)?;
    t.require(&["vertex", "placeholder", "works_outside", "works_inside"])?;
    let mut out = vec![AgentInfo::default(); n];
    for r in t.rows() {
        let v: usize = r.parse("vertex")?;
        let slot = out
            .get_mut(v)
            .ok_or_else(|| r.error("vertex", format!("vertex {v} out of range")))?;
        *slot = AgentInfo {
            placeholder: r.flag("placeholder")?,
            works_outside: r.flag("works_outside")?,
            works_inside: r.flag("works_inside")?,
        };
    }
    Ok(out)
}

/// A loaded manifest entry.
pub struct LoadedGraph {
    pub name: String,
    pub graph: ContactGraph,
    pub agents: Vec<AgentInfo>,
}

pub fn load_graph(manifest: &Path, entry: &GraphEntry) -> Result<LoadedGraph> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let graph = read_edges(&dir.join(&entry.file), entry.n_vertices)?;
    let agents = match &entry.agents {
        Some(a) => read_agents(&dir.join(a), entry.n_vertices)?,
        None => vec![AgentInfo::default(); entry.n_vertices],
    };
    Ok(LoadedGraph {
        name: entry.name.clone(),
        graph,
        agents,
    })
}

/// Mean degree of the layer-collapsed graph.
pub fn mean_degree(g: &ContactGraph) -> f64 {
    let m = g.simple_neighbors().iter().map(Vec::len).sum::<usize>() as f64;
    m / g.n_vertices.max(1) as f64
}

/// Mean degree a reference graph is built with: Erdős–Rényi matches
/// `synthetic_mean`, the others use the largest integer not exceeding it.
pub fn reference_mean_degree(kind: ReferenceKind, synthetic_mean: f64) -> f64 {
    match kind {
        ReferenceKind::ErdosRenyi => synthetic_mean,
        _ => synthetic_mean.floor(),
    }
}

/// Reference graphs with `n` vertices, sized against `synthetic_mean`.
pub fn reference_graphs(
    n: usize,
    synthetic_mean: f64,
    params: &ReferenceParams,
    seed: u64,
) -> Result<Vec<(String, ContactGraph)>> {
    params
        .kinds()
        .into_par_iter()
        .enumerate()
        .map(|(i, kind)| {
            let mut r = rng::stream(seed, "reference", i as u64);
            let mean = reference_mean_degree(kind, synthetic_mean);
            Ok((kind.name().to_string(), reference_graph(kind, n, mean, &mut r)?))
        })
        .collect()
}

/// `network` command: synthetic network from a synthesized run plus the
/// reference graphs, written under `<run>/network`.
pub fn network(run: &Path, cfg: &RunConfig) -> Result<Vec<GraphEntry>> {
    let pop = load_population(run)?;
    let g = assemble_network(&pop, &cfg.network, cfg.master_seed)?;
    let dir = run.join(NETWORK_DIR);
    create_dir(&dir)?;
    let n = g.n_vertices;
    let mut entries = vec![GraphEntry {
        name: SYNTHETIC.into(),
        file: format!("{SYNTHETIC}_edges.csv"),
        n_vertices: n,
        agents: Some(FILE_AGENTS.into()),
    }];
    write_edges(&dir.join(&entries[0].file), &g)?;
    write_agents(&dir.join(FILE_AGENTS), &epiabm::agent_info(&pop))?;
    let mean = mean_degree(&g);
    for (name, rg) in reference_graphs(n, mean, &cfg.reference, cfg.master_seed)? {
        let file = format!("{name}_edges.csv");
        write_edges(&dir.join(&file), &rg)?;
        entries.push(GraphEntry {
            name,
            file,
            n_vertices: n,
            agents: None,
        });
    }
    write_manifest(&dir.join(FILE_GRAPHS), &entries)?;
    Ok(entries)
}

/// `stats` command over every graph in a manifest.
pub fn stats(manifest: &Path, out: &Path) -> Result<Vec<StatsReport>> {
    let rows = read_manifest(manifest)?
        .iter()
        .map(|e| load_graph(manifest, e).map(|g| stats_report(&g.name, &g.graph)))
        .collect::<Result<Vec<_>>>()?;
    write_stats(out, &rows)?;
    Ok(rows)
}

/// `simulate` command: replicates over one graph; writes trace and summary.
pub fn simulate(graph: &LoadedGraph, cfg: &RunConfig, out: &Path) -> Result<ReplicateRun> {
    let run = epiabm::run_replicates(&graph.graph, &graph.agents, &cfg.sim, cfg.master_seed)?;
    create_dir(out)?;
    epiabm::write_traces(&out.join("trace.csv"), &run)?;
    epiabm::write_summary(&out.join("summary.csv"), &run)?;
    Ok(run)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub name: String,
    pub n_vertices: usize,
    pub run: ReplicateRun,
}

impl Comparison {
    /// Day each replicate reaches `fraction` of the vertices.
    pub fn takeoff_days(&self, fraction: f64) -> Vec<Option<usize>> {
        self.run
            .traces
            .iter()
            .map(|t| day_reaching(t, fraction, self.n_vertices))
            .collect()
    }
}

pub const TAKEOFF_FRACTION: f64 = 0.25;

/// `compare` command: identical replicate streams over every graph in the
/// manifest. Writes `compare_summary.csv` (curves) and `compare_takeoff.csv`.
pub fn compare(manifest: &Path, cfg: &RunConfig, out: &Path) -> Result<Vec<Comparison>> {
    let mut results = Vec::new();
    for e in read_manifest(manifest)? {
        let g = load_graph(manifest, &e)?;
        let run = epiabm::run_replicates(&g.graph, &g.agents, &cfg.sim, cfg.master_seed)?;
        results.push(Comparison {
            name: e.name,
            n_vertices: e.n_vertices,
            run,
        });
    }
    create_dir(out)?;
    let path = out.join("compare_summary.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "network,day,mean,ci_low,ci_high,mean_fraction")?;
        for c in &results {
            for s in c.run.summary() {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    c.name,
                    s.day,
                    s.mean,
                    s.ci_low,
                    s.ci_high,
                    s.mean / c.n_vertices as f64
                )?;
            }
        }
        f.flush()
    };
    w().map_err(|e| Error::io(&path, e))?;
    let path = out.join("compare_takeoff.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "network,replicate,takeoff_day,final_cumulative")?;
        for c in &results {
            for (r, d) in c.takeoff_days(TAKEOFF_FRACTION).into_iter().enumerate() {
                let fin = c.run.traces[r].last().copied().unwrap_or(0);
                let day = d.map_or_else(|| "NA".to_string(), |d| d.to_string());
                writeln!(f, "{},{r},{day},{fin}", c.name)?;
            }
        }
        f.flush()
    };
    w().map_err(|e| Error::io(&path, e))?;
    Ok(results)
}

// ---------------------------------------------------------------------------
// fit checks

/// Cost of optimized and random selections for one CBG under some schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FitComparison {
    pub cbg: String,
    pub optimized: f64,
    pub random: f64,
}

/// Score a run's household selections against `schema` (for example
/// columns left out of the search), next to a same-size random draw from
/// each CBG's first pool.
pub fn fit_check(input: &Path, run: &Path, schema: &TargetSchema, cfg: &RunConfig) -> Result<Vec<FitComparison>> {
    let region = load_region_inputs(input)?;
    let pop = load_population(run)?;
    let by_id: BTreeMap<&str, usize> = region.pums.iter().enumerate().map(|(i, h)| (h.id.as_str(), i)).collect();
    let mut selections: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for h in &pop.households {
        let idx = *by_id
            .get(h.source.as_str())
            .ok_or_else(|| Error::InvalidParameter(format!("household source {} not in microdata", h.source)))?;
        selections.entry(pop.cbg(h.cbg)).or_default().push(idx);
    }
    let index = PoolIndex::new(region.geo.values(), &region.pums);
    let contribution = |sel: &[usize]| -> Vec<f64> {
        let mut o = Targets::<f64>::zeros(schema.width());
        for &i in sel {
            o.add_assign(&schema.contribution(&region.pums[i].view()));
        }
        o.0
    };
    let mut out = Vec::new();
    for (cbg, sel) in selections {
        let e: Targets<f64> = derive_targets(cbg, &region.cbg_table[cbg], schema)?;
        let pools = pools_for(&region.geo[cbg], &index, cfg.anneal.urban_threshold);
        let Some(pool) = pools.iter().find(|p| !p.households.is_empty()) else {
            continue;
        };
        let mut r = rng::stream(cfg.master_seed, "fit_check", rng::key(cbg));
        let random: Vec<usize> = (0..sel.len())
            .map(|_| pool.households[r.random_range(0..pool.households.len())])
            .collect();
        out.push(FitComparison {
            cbg: cbg.to_string(),
            optimized: ft2_cost(&contribution(&sel), &e.0)?,
            random: ft2_cost(&contribution(&random), &e.0)?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// fixture

/// Shape of a generated test region.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_cbgs: usize,
    pub households_per_cbg: usize,
    /// Columns of the default schema used as search targets.
    pub schema_width: usize,
    pub n_schools: usize,
    pub industries: Vec<Industry>,
    /// Chance that a CBG hosts a group quarters.
    pub gq_fraction: f64,
    /// Extra microdata households per truth household.
    pub decoy_ratio: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_cbgs: 50,
            households_per_cbg: 150,
            schema_width: 60,
            n_schools: 12,
            industries: Industry::ALL.to_vec(),
            gq_fraction: 0.1,
            decoy_ratio: 1.0,
            seed: 1,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let width = TargetSchema::default_schema().width();
        if self.n_cbgs == 0 || self.households_per_cbg < 20 || self.n_schools == 0 || self.industries.is_empty() {
            return Err(Error::InvalidParameter(
                "fixture needs n_cbgs >= 1, households_per_cbg >= 20, n_schools >= 1 and industries".into(),
            ));
        }
        if self.schema_width == 0 || self.schema_width > width {
            return Err(Error::InvalidParameter(format!("schema_width must be in 1..={width}")));
        }
        if !(0.0..=1.0).contains(&self.gq_fraction) || !(self.decoy_ratio >= 0.0) {
            return Err(Error::InvalidParameter("gq_fraction in [0, 1] and decoy_ratio >= 0 required".into()));
        }
        Ok(())
    }
}

/// Schema columns used as targets for a given width: a fixed stride
/// through the default schema so every attribute group is represented.
pub fn fixture_schema_columns(width: usize) -> Vec<usize> {
    let total = TargetSchema::default_schema().width();
    let mut cols: Vec<usize> = (0..width).map(|i| (i * 47) % total).collect();
    cols.sort_unstable();
    cols
}

const SPACING: f64 = 1000.0;
const OUTSIDE_WORK_SHARE: f64 = 0.06;
const INBOUND_SHARE: f64 = 0.08;
// Every tenth CBG is an employment centre.
const CENTRE_EVERY: usize = 10;
const CENTRE_PULL: f64 = 200.0;

struct Profile {
    income_mu: f64,
    sizes: WeightedIndex<f64>,
    senior: f64,
    family: f64,
    employment: f64,
    races: WeightedIndex<f64>,
    industries: WeightedIndex<f64>,
}

fn profile(spec: &FixtureSpec, r: &mut StreamRng) -> Profile {
    let noise: Normal<f64> = Normal::new(0.0, 0.5).expect("valid");
    let base_sizes = [0.24, 0.32, 0.17, 0.15, 0.08, 0.025, 0.015];
    let sizes: Vec<f64> = base_sizes.iter().map(|w| w * noise.sample(r).exp()).collect();
    let races: Vec<f64> = [0.5, 0.25, 0.12, 0.08, 0.05]
        .iter()
        .map(|w| w * (2.0 * noise.sample(r)).exp())
        .collect();
    let industries: Vec<f64> = spec.industries.iter().map(|_| (1.5 * noise.sample(r)).exp()).collect();
    Profile {
        income_mu: r.random_range(10.8..11.8),
        sizes: WeightedIndex::new(sizes).expect("positive"),
        senior: r.random_range(0.05..0.4),
        family: r.random_range(0.7..0.95),
        employment: r.random_range(0.7..0.9),
        races: WeightedIndex::new(races).expect("positive"),
        industries: WeightedIndex::new(industries).expect("positive"),
    }
}

struct FixtureHousehold {
    income: i64,
    snap: bool,
    members: Vec<PersonAttrs>,
}

fn fixture_household(spec: &FixtureSpec, p: &Profile, r: &mut StreamRng) -> FixtureHousehold {
    let size = p.sizes.sample(r) + 1;
    let income = LogNormal::new(p.income_mu, 0.7).expect("valid").sample(r).round().min(2e6) as i64;
    let race = Race::ALL[p.races.sample(r)];
    let sex = |r: &mut StreamRng| if r.random_bool(0.5) { Sex::Male } else { Sex::Female };
    let head_age: u8 = if r.random_bool(p.senior) {
        r.random_range(65..=92)
    } else {
        r.random_range(19..=64)
    };
    let mut people = vec![(head_age, Relationship::Householder)];
    let family = size >= 2 && r.random_bool(p.family);
    for k in 1..size {
        let member = if !family {
            (r.random_range(19..=70).min(head_age.saturating_add(15)).max(18), Relationship::NonRelative)
        } else if k == 1 && r.random_bool(0.6) {
            let rel = if r.random_bool(0.8) {
                Relationship::Spouse
            } else {
                Relationship::Partner
            };
            let age = (i16::from(head_age) + r.random_range(-6..=6)).clamp(18, 95) as u8;
            (age, rel)
        } else {
            match r.random_range(0..20) {
                0 if head_age < 70 => (r.random_range(60..=95).max(head_age + 15), Relationship::Parent),
                1 if head_age >= 45 => (r.random_range(0..=17), Relationship::Grandchild),
                2 => (r.random_range(5..=80), Relationship::OtherRelative),
                _ if head_age < 62 => (r.random_range(0..=17.min(head_age - 16)), Relationship::Child),
                _ => (r.random_range(18..=40), Relationship::Child),
            }
        };
        people.push(member);
    }
    let members = people
        .into_iter()
        .map(|(age, relationship)| {
            let rate = match age {
                16..=17 => 0.15,
                18..=64 => p.employment,
                65..=74 => 0.2,
                _ => 0.0,
            };
            let industry = r
                .random_bool(rate)
                .then(|| spec.industries[p.industries.sample(r)]);
            let grade = match age {
                4 => r.random_bool(0.5).then_some(Grade::PK),
                5..=17 => r.random_bool(0.96).then(|| Grade::typical_for_age(age)).flatten(),
                _ => None,
            };
            PersonAttrs {
                age,
                sex: sex(r),
                race: if r.random_bool(0.9) { race } else { Race::ALL[r.random_range(0..5)] },
                relationship,
                industry,
                income,
                grade,
                is_worker: industry.is_some(),
            }
        })
        .collect();
    FixtureHousehold {
        income,
        snap: income < 30_000 && r.random_bool(0.5),
        members,
    }
}

/// Paths written by [`generate_fixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureLayout {
    pub input_dir: PathBuf,
    pub truth_dir: PathBuf,
    pub cbgs: Vec<String>,
    /// Default-schema columns not used as targets.
    pub off_target: TargetSchema,
}

pub fn fixture_cbg_id(i: usize, n: usize) -> String {
    let county = if i < n.div_ceil(2) { "001" } else { "003" };
    format!("24{county}{:06}{}", 100 + i / 4, 1 + i % 4)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fabricate a consistent region under `dir/inputs` with ground truth in
/// `dir/truth`.
pub fn generate_fixture(spec: &FixtureSpec, dir: &Path) -> Result<FixtureLayout> {
    spec.validate()?;
    let input_dir = dir.join("inputs");
    let truth_dir = dir.join("truth");
    create_dir(&input_dir)?;
    create_dir(&truth_dir)?;
    let n = spec.n_cbgs;
    let side = (n as f64).sqrt().ceil() as usize;
    let cbgs: Vec<String> = (0..n).map(|i| fixture_cbg_id(i, n)).collect();
    let xy: Vec<(f64, f64)> = (0..n)
        .map(|i| ((i % side) as f64 * SPACING, (i / side) as f64 * SPACING))
        .collect();
    let puma_of = |i: usize| format!("{:05}", 100 + i / 10);
    let center = ((side - 1) as f64 * SPACING / 2.0, ((n - 1) / side) as f64 * SPACING / 2.0);

    let mut r = rng::stream(spec.seed, "fixture", 0);
    let profiles: Vec<Profile> = (0..n).map(|_| profile(spec, &mut r)).collect();

    // truth households, then decoys from neighbouring profiles in the same PUMA
    let mut pool: Vec<(String, FixtureHousehold, Option<usize>)> = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        for _ in 0..spec.households_per_cbg {
            pool.push((puma_of(i), fixture_household(spec, p, &mut r), Some(i)));
        }
    }
    let n_decoys = (spec.decoy_ratio * pool.len() as f64).round() as usize;
    for _ in 0..n_decoys {
        let i = r.random_range(0..n);
        pool.push((puma_of(i), fixture_household(spec, &profiles[i], &mut r), None));
    }
    pool.shuffle(&mut r);
    let ids: Vec<String> = (0..pool.len()).map(|k| format!("H{k:07}")).collect();

    // group quarters
    let mut gq: Vec<Vec<(AgeBand, GqType, u64)>> = vec![Vec::new(); n];
    for g in gq.iter_mut() {
        if r.random_bool(spec.gq_fraction) {
            let (band, ty) = GQ_KINDS[r.random_range(0..GQ_KINDS.len())];
            g.push((band, ty, r.random_range(25..=70)));
        }
    }

    // microdata
    let path = input_dir.join(FILE_PUMS_HOUSEHOLDS);
    let mut hw = csv_writer(&path)?;
    hw.write_record(["hh_id", "puma", "income", "snap"])?;
    let ppath = input_dir.join(FILE_PUMS_PERSONS);
    let mut pw = csv_writer(&ppath)?;
    pw.write_record(["hh_id", "age", "sex", "race", "relationship", "industry", "grade", "worker"])?;
    for (id, (puma, h, _)) in ids.iter().zip(&pool) {
        hw.write_record([id, puma, &h.income.to_string(), &u8::from(h.snap).to_string()])?;
        for m in &h.members {
            pw.write_record([
                id.as_str(),
                &m.age.to_string(),
                &m.sex.to_string(),
                m.race.code(),
                m.relationship.code(),
                &m.industry.map_or_else(String::new, |i| i.to_string()),
                &m.grade.map_or_else(String::new, |g| g.to_string()),
                &u8::from(m.is_worker).to_string(),
            ])?;
        }
    }
    finish(hw, &path)?;
    finish(pw, &ppath)?;

    // marginals
    let catalog = RawCatalog::bundled();
    let mut raw = vec![vec![0.0; catalog.columns.len()]; n];
    let mut adults = vec![0u64; n];
    let mut truth_members: Vec<Vec<&PersonAttrs>> = vec![Vec::new(); n];
    for (_, h, cbg) in &pool {
        let Some(i) = *cbg else { continue };
        let view = crate::ingest::HouseholdView {
            members: &h.members,
            income: h.income,
            snap: h.snap,
        };
        for (acc, c) in raw[i].iter_mut().zip(catalog.counts(&view)) {
            *acc += c as f64;
        }
        adults[i] += h.members.iter().filter(|m| m.age >= 18).count() as u64;
        truth_members[i].extend(&h.members);
    }
    let adm = catalog
        .columns
        .iter()
        .position(|c| c.name == emp_column(Industry::AdmMil))
        .expect("catalog has employment columns");
    let path = input_dir.join(FILE_CBG);
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = vec!["cbg".into()];
    header.extend(catalog.columns.iter().map(|c| c.name.clone()));
    header.extend([COL_HOUSEHOLDS, COL_TOTAL_ADULTS, COL_HOUSEHOLD_ADULTS, COL_GQ_TOTAL, COL_GQ_65PLUS].map(String::from));
    let p43: Vec<(AgeBand, GqType)> = AgeBand::ALL
        .into_iter()
        .flat_map(|b| GqType::ALL.into_iter().map(move |t| (b, t)))
        .collect();
    header.extend(p43.iter().map(|&(b, t)| p43_column(b, t)));
    w.write_record(&header)?;
    for i in 0..n {
        let count = |band: Option<AgeBand>, ty: Option<GqType>| -> u64 {
            gq[i]
                .iter()
                .filter(|g| band.is_none_or(|b| b == g.0) && ty.is_none_or(|t| t == g.1))
                .map(|g| g.2)
                .sum()
        };
        let mut row = raw[i].clone();
        // military residents all work in the armed forces
        row[adm] += count(None, Some(GqType::Military)) as f64;
        let gq_adults = count(Some(AgeBand::Adult18To64), None) + count(Some(AgeBand::Senior65Plus), None);
        let mut rec: Vec<String> = vec![cbgs[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.extend(
            [
                spec.households_per_cbg as u64,
                adults[i] + gq_adults,
                adults[i],
                count(None, None),
                count(Some(AgeBand::Senior65Plus), None),
            ]
            .map(|v| v.to_string()),
        );
        rec.extend(p43.iter().map(|&(b, t)| count(Some(b), Some(t)).to_string()));
        w.write_record(&rec)?;
    }
    finish(w, &path)?;

    // geography
    let path = input_dir.join(FILE_GEO);
    let mut w = csv_writer(&path)?;
    w.write_record(["cbg", "x", "y", "puma", "county", "cbsa", "urban_pct"])?;
    let max_d = center.0.hypot(center.1).max(1.0);
    for i in 0..n {
        let d = (xy[i].0 - center.0).hypot(xy[i].1 - center.1);
        let urban = (95.0 * (1.0 - d / max_d)).clamp(0.0, 100.0);
        w.write_record([
            cbgs[i].as_str(),
            &xy[i].0.to_string(),
            &xy[i].1.to_string(),
            &puma_of(i),
            &cbgs[i][2..5],
            "12580",
            &format!("{urban:.1}"),
        ])?;
    }
    finish(w, &path)?;

    // commutes: every truth worker picks a destination by distance decay
    // weighted toward employment centres
    let decay: Vec<WeightedIndex<f64>> = (0..n)
        .map(|i| {
            WeightedIndex::new((0..n).map(|j| {
                let d = (xy[i].0 - xy[j].0).hypot(xy[i].1 - xy[j].1);
                let pull = if j % CENTRE_EVERY == 0 { CENTRE_PULL } else { 1.0 };
                pull * (-d / (1.5 * SPACING)).exp()
            }))
            .expect("positive")
        })
        .collect();
    let mut od: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut jobs: Vec<[u64; Industry::COUNT]> = vec![[0; Industry::COUNT]; n];
    for i in 0..n {
        let mil = gq[i]
            .iter()
            .filter(|g| g.1 == GqType::Military)
            .map(|g| g.2)
            .sum::<u64>();
        if mil > 0 {
            *od.entry((cbgs[i].clone(), cbgs[i].clone())).or_default() += mil;
            jobs[i][Industry::AdmMil.index()] += mil;
        }
        for m in &truth_members[i] {
            let Some(ind) = m.industry else { continue };
            let dest = if r.random_bool(OUTSIDE_WORK_SHARE) {
                OUTSIDE.to_string()
            } else {
                let j = decay[i].sample(&mut r);
                jobs[j][ind.index()] += 1;
                cbgs[j].clone()
            };
            *od.entry((cbgs[i].clone(), dest)).or_default() += 1;
        }
    }
    for j in 0..n {
        let local: u64 = jobs[j].iter().sum();
        let inbound = (INBOUND_SHARE * local as f64).round() as u64;
        if inbound == 0 {
            continue;
        }
        let mix: Vec<f64> = jobs[j].iter().map(|&c| c as f64).collect();
        for (k, c) in largest_remainder(&mix, inbound).into_iter().enumerate() {
            jobs[j][k] += c;
        }
        *od.entry((OUTSIDE.to_string(), cbgs[j].clone())).or_default() += inbound;
    }
    let path = input_dir.join(FILE_OD);
    let mut w = csv_writer(&path)?;
    w.write_record(["home_cbg", "work_cbg", "count"])?;
    for ((h, d), c) in &od {
        w.write_record([h.as_str(), d, &c.to_string()])?;
    }
    finish(w, &path)?;
    let path = input_dir.join(FILE_WAC);
    let mut w = csv_writer(&path)?;
    w.write_record(["work_cbg", "industry", "count"])?;
    for j in 0..n {
        for ind in Industry::ALL {
            let c = jobs[j][ind.index()];
            if c > 0 {
                w.write_record([cbgs[j].as_str(), ind.code(), &c.to_string()])?;
            }
        }
    }
    finish(w, &path)?;

    // employer sizes per county
    let path = input_dir.join(FILE_CBP);
    let mut w = csv_writer(&path)?;
    w.write_record(["county", "bin_min", "bin_max", "count"])?;
    let bins: [(u64, Option<u64>); 9] = [
        (1, Some(4)),
        (5, Some(9)),
        (10, Some(19)),
        (20, Some(49)),
        (50, Some(99)),
        (100, Some(249)),
        (250, Some(499)),
        (500, Some(999)),
        (1000, None),
    ];
    for (k, county) in ["001", "003"].iter().enumerate() {
        let sizes = LogNormal::new(2.6 + 0.2 * k as f64, 1.1).expect("valid");
        let mut counts = [0u64; 9];
        for _ in 0..600 {
            let s = sizes.sample(&mut r).floor().max(1.0) as u64;
            let b = bins
                .iter()
                .position(|&(lo, hi)| s >= lo && hi.is_none_or(|h| s <= h))
                .expect("bins cover all sizes");
            counts[b] += 1;
        }
        for ((lo, hi), c) in bins.iter().zip(counts) {
            w.write_record([
                *county,
                &lo.to_string(),
                &hi.map_or_else(String::new, |h| h.to_string()),
                &c.to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    // schools: elementary, middle and high in rotation
    let year = |n| Grade::year(n).expect("valid grade");
    let spans = [(Grade::PK, year(5)), (year(6), year(8)), (year(9), Grade::TWELFTH)];
    let students: Vec<u64> = spans
        .iter()
        .map(|&(lo, hi)| {
            truth_members
                .iter()
                .flatten()
                .filter(|m| m.grade.is_some_and(|g| (lo..=hi).contains(&g)))
                .count() as u64
        })
        .collect();
    let per_type: Vec<usize> = (0..3)
        .map(|t| (0..spec.n_schools).filter(|k| k % 3 == t).count())
        .collect();
    let path = input_dir.join(FILE_SCHOOLS);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "school_id",
        "x",
        "y",
        "low_grade",
        "high_grade",
        "n_students",
        "n_teachers",
        "active",
        "regular",
    ])?;
    let extent = ((side - 1) as f64 * SPACING, ((n - 1) / side) as f64 * SPACING);
    for k in 0..=spec.n_schools {
        let t = k % 3;
        let (lo, hi) = spans[t];
        let cap = (1.15 * students[t] as f64 / per_type[t].max(1) as f64).ceil() as u64 + 5;
        let teachers = cap.div_ceil(15);
        let active = k < spec.n_schools;
        w.write_record([
            format!("S{k:04}"),
            format!("{:.1}", r.random_range(0.0..=extent.0)),
            format!("{:.1}", r.random_range(0.0..=extent.1)),
            lo.to_string(),
            hi.to_string(),
            cap.to_string(),
            // one school leaves its staff count blank to exercise mean fill
            if k == 1 { String::new() } else { teachers.to_string() },
            u8::from(active).to_string(),
            "1".into(),
        ])?;
    }
    finish(w, &path)?;

    // civilian GQ residents do not work in the fixture
    let path = input_dir.join(FILE_GQ_INDUSTRY);
    let mut w = csv_writer(&path)?;
    w.write_record(["industry", "proportion"])?;
    for ind in Industry::ALL {
        w.write_record([ind.code(), "0"])?;
    }
    finish(w, &path)?;

    let default = TargetSchema::default_schema();
    let cols = fixture_schema_columns(spec.schema_width);
    default.subset(&cols).write_csv(&input_dir.join(FILE_SCHEMA))?;
    let rest: Vec<usize> = (0..default.width()).filter(|c| !cols.contains(c)).collect();
    let off_target = default.subset(&rest);
    off_target.write_csv(&truth_dir.join("off_target_schema.csv"))?;

    let path = truth_dir.join("households.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["hh_id", "cbg"])?;
    for (id, (_, _, cbg)) in ids.iter().zip(&pool) {
        if let Some(i) = cbg {
            w.write_record([id.as_str(), &cbgs[*i]])?;
        }
    }
    finish(w, &path)?;
    let path = truth_dir.join("gq.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["cbg", "age_band", "gq_type", "residents"])?;
    for (i, g) in gq.iter().enumerate() {
        for &(b, t, c) in g {
            w.write_record([cbgs[i].as_str(), b.code(), t.code(), &c.to_string()])?;
        }
    }
    finish(w, &path)?;

    info!("fixture: {n} CBGs, {} microdata households", pool.len());
    Ok(FixtureLayout {
        input_dir,
        truth_dir,
        cbgs,
        off_target,
    })
}
