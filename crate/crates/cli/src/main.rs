use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use synthnet_core::attrs::Industry;
use synthnet_core::epiabm::BoundaryMode;
use synthnet_core::netgen::read_edges;
use synthnet_core::pipeline::{self, FixtureSpec, GraphEntry, LoadedGraph, RunConfig};
use synthnet_core::{Error, Result};

#[derive(Parser)]
#[command(name = "synthnet", version, about = "Synthetic population, contact network and SEIR runs")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config file.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test region with ground truth.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        cbgs: usize,
        #[arg(long, default_value_t = 150)]
        households: usize,
        #[arg(long, default_value_t = 60)]
        width: usize,
        #[arg(long, default_value_t = 12)]
        schools: usize,
        #[arg(long, default_value_t = 0.1)]
        gq_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        decoy_ratio: f64,
        /// Comma-separated industry codes; all by default.
        #[arg(long, value_delimiter = ',')]
        industries: Vec<Industry>,
    },
    /// Select households and place people for a region.
    Synthesize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the contact network and reference graphs for a run.
    Network {
        #[arg(long)]
        run: PathBuf,
    },
    /// Network statistics for every graph in a manifest, or one edge list.
    Stats {
        #[command(flatten)]
        graphs: GraphArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// SEIR replicates over one graph.
    Simulate {
        #[command(flatten)]
        graphs: GraphArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// SEIR replicates over every graph in a manifest.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GraphArgs {
    /// Graph manifest written by `network`.
    #[arg(long, conflicts_with = "edges")]
    manifest: Option<PathBuf>,
    /// Graph name within the manifest (`simulate` only; default synthetic).
    #[arg(long, requires = "manifest")]
    name: Option<String>,
    /// A bare `u,v,layer` edge list.
    #[arg(long, requires = "vertices")]
    edges: Option<PathBuf>,
    /// Vertex count for `--edges`.
    #[arg(long)]
    vertices: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    p_transmit: Option<f64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long, value_parser = parse_mode)]
    boundary_mode: Option<BoundaryMode>,
}

fn parse_mode(s: &str) -> std::result::Result<BoundaryMode, String> {
    match s {
        "all_cause" => Ok(BoundaryMode::AllCause),
        "layer_specific" => Ok(BoundaryMode::LayerSpecific),
        _ => Err(format!("expected all_cause or layer_specific, got `{s}`")),
    }
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.sim;
        if let Some(p) = self.p_transmit {
            s.p_transmit = p;
        }
        if let Some(n) = self.n_seeds {
            s.n_seeds = n;
        }
        if let Some(r) = self.replicates {
            s.replicates = r;
        }
        if let Some(h) = self.horizon {
            s.horizon_days = h;
        }
        if let Some(m) = self.boundary_mode {
            s.boundary_mode = m;
        }
    }
}

fn single_graph(args: &GraphArgs) -> Result<LoadedGraph> {
    match (&args.manifest, &args.edges, args.vertices) {
        (Some(m), _, _) => {
            let name = args.name.as_deref().unwrap_or(pipeline::SYNTHETIC);
            let entry = pipeline::read_manifest(m)?
                .into_iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::InvalidParameter(format!("no graph `{name}` in {}", m.display())))?;
            pipeline::load_graph(m, &entry)
        }
        (None, Some(e), Some(n)) => Ok(LoadedGraph {
            name: edge_name(e),
            graph: read_edges(e, n)?,
            agents: vec![Default::default(); n],
        }),
        _ => Err(Error::InvalidParameter("pass --manifest or --edges with --vertices".into())),
    }
}

fn edge_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().trim_end_matches("_edges").to_string())
        .unwrap_or_else(|| "graph".into())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Command::Simulate { sim, .. } | Command::Compare { sim, .. } = &cli.command {
        sim.apply(&mut cfg);
    }
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }

    match cli.command {
        Command::Fixture {
            out,
            cbgs,
            households,
            width,
            schools,
            gq_fraction,
            decoy_ratio,
            industries,
        } => {
            let spec = FixtureSpec {
                n_cbgs: cbgs,
                households_per_cbg: households,
                schema_width: width,
                n_schools: schools,
                industries: if industries.is_empty() {
                    Industry::ALL.to_vec()
                } else {
                    industries
                },
                gq_fraction,
                decoy_ratio,
                seed: cfg.master_seed,
            };
            let layout = pipeline::generate_fixture(&spec, &out)?;
            println!("inputs: {}", layout.input_dir.display());
            println!("truth: {}", layout.truth_dir.display());
        }
        Command::Synthesize { input, out } => {
            let s = pipeline::synthesize(&input, &out, &cfg)?;
            let pass = s.report.iter().filter(|r| r.pass).count();
            println!(
                "{} CBGs fitted ({pass} pass), {} dropped, {} persons",
                s.report.len(),
                s.dropped.len(),
                s.population.persons.len()
            );
        }
        Command::Network { run } => {
            let entries = pipeline::network(&run, &cfg)?;
            for GraphEntry { name, file, .. } in entries {
                println!("{name}: {file}");
            }
        }
        Command::Stats { graphs, out } => {
            let rows = match &graphs.manifest {
                Some(m) => pipeline::stats(m, &out)?,
                None => {
                    let g = single_graph(&graphs)?;
                    let rows = vec![synthnet_core::netstats::stats_report(&g.name, &g.graph)];
                    synthnet_core::netstats::write_stats(&out, &rows)?;
                    rows
                }
            };
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Simulate { graphs, out, .. } => {
            let g = single_graph(&graphs)?;
            let run = pipeline::simulate(&g, &cfg, &out)?;
            println!("{} replicates of {} written to {}", run.traces.len(), g.name, out.display());
        }
        Command::Compare { manifest, out, .. } => {
            for c in pipeline::compare(&manifest, &cfg, &out)? {
                let days: Vec<String> = c
                    .takeoff_days(pipeline::TAKEOFF_FRACTION)
                    .iter()
                    .map(|d| d.map_or_else(|| "-".into(), |d| d.to_string()))
                    .collect();
                println!("{}: day reaching 25% per replicate [{}]", c.name, days.join(" "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
