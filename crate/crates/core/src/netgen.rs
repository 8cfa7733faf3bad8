//! Layered contact networks: household cliques, block-model workplaces and
//! schools, small-world group quarters, plus reference random graphs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::placement::{PersonId, PlaceKind, Population};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Home,
    Work,
    School,
    Gq,
    /// Edges of generated reference graphs.
    Random,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Home, Layer::Work, Layer::School, Layer::Gq, Layer::Random];

    pub fn code(self) -> &'static str {
        match self {
            Layer::Home => "home",
            Layer::Work => "work",
            Layer::School => "school",
            Layer::Gq => "gq",
            Layer::Random => "random",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Layer {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Layer::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| format!("unknown layer `{s}`"))
    }
}

pub type Edge = (u32, u32);

/// Undirected multi-layer graph over `0..n_vertices`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContactGraph {
    pub n_vertices: usize,
    /// `(u, v, layer)` with `u < v`, sorted by `(layer, u, v)` once finalized.
    pub edges: Vec<(u32, u32, Layer)>,
}

impl ContactGraph {
    pub fn new(n_vertices: usize) -> Self {
        ContactGraph {
            n_vertices,
            edges: Vec::new(),
        }
    }

    pub fn from_edges(n_vertices: usize, edges: impl IntoIterator<Item = Edge>, layer: Layer) -> Self {
        let mut g = ContactGraph::new(n_vertices);
        g.extend(edges, layer);
        g.finalize();
        g
    }

    /// Add edges; self-loops are dropped.
    pub fn extend(&mut self, edges: impl IntoIterator<Item = Edge>, layer: Layer) {
        self.edges.extend(
            edges
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| (u.min(v), u.max(v), layer)),
        );
    }

    /// Sort by `(layer, u, v)` and drop duplicates within a layer.
    pub fn finalize(&mut self) {
        self.edges.sort_unstable_by_key(|&(u, v, l)| (l, u, v));
        self.edges.dedup();
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn layer_edges(&self, layer: Layer) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().filter(move |e| e.2 == layer).map(|&(u, v, _)| (u, v))
    }

    pub fn layer_degrees(&self, layer: Layer) -> Vec<usize> {
        let mut d = vec![0; self.n_vertices];
        for (u, v) in self.layer_edges(layer) {
            d[u as usize] += 1;
            d[v as usize] += 1;
        }
        d
    }

    /// Sorted, de-duplicated neighbour lists over all layers.
    pub fn simple_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(u, v, _) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Complete graph within each household.
pub fn household_cliques<'a>(households: impl IntoIterator<Item = &'a [PersonId]>) -> Vec<Edge> {
    let mut out = Vec::new();
    for h in households {
        for (i, &a) in h.iter().enumerate() {
            for &b in &h[i + 1..] {
                out.push((a.min(b) as u32, a.max(b) as u32));
            }
        }
    }
    out
}

/// Mean number of neighbours in block j for a vertex in block i:
/// `αK·[i = j] + (1 − α)K·N_j/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDegreeTable<T> {
    pub sizes: Vec<usize>,
    pub k: Vec<Vec<T>>,
}

impl<T: Scalar> BlockDegreeTable<T> {
    pub fn new(sizes: &[usize], k: T, alpha: T) -> Result<Self> {
        if alpha < T::zero() || alpha > T::one() || k < T::zero() {
            return Err(Error::InvalidParameter("need K >= 0 and 0 <= alpha <= 1".into()));
        }
        let n: usize = sizes.iter().sum();
        if n == 0 {
            return Err(Error::InvalidParameter("block model needs at least one member".into()));
        }
        let total = T::from_count(n);
        let mixed = (T::one() - alpha.clone()) * k.clone();
        let table = (0..sizes.len())
            .map(|i| {
                (0..sizes.len())
                    .map(|j| {
                        let share = mixed.clone() * T::from_count(sizes[j]) / total.clone();
                        if i == j {
                            alpha.clone() * k.clone() + share
                        } else {
                            share
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(BlockDegreeTable {
            sizes: sizes.to_vec(),
            k: table,
        })
    }

    pub fn row_sum(&self, i: usize) -> T {
        self.k[i].iter().fold(T::zero(), |a, b| a + b.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelSpec {
    pub members: Vec<PersonId>,
    /// Block label per member, parallel to `members`.
    pub block_of: Vec<usize>,
    pub k: f64,
    pub alpha: f64,
}

/// Call `emit(a, b)` for each pair `b < a < n` kept with probability `p`,
/// skipping geometrically between successes.
fn bernoulli_within<R: Rng>(n: u64, p: f64, rng: &mut R, mut emit: impl FnMut(u64, u64)) {
    if n < 2 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for a in 1..n {
            for b in 0..a {
                emit(a, b);
            }
        }
        return;
    }
    let lq = (1.0 - p).ln();
    let (mut v, mut w): (u64, i64) = (1, -1);
    while v < n {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / lq).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            emit(v, w as u64);
        }
    }
}

/// Call `emit(a, b)` for each pair in `[0, na) x [0, nb)` kept with probability `p`.
fn bernoulli_cross<R: Rng>(na: u64, nb: u64, p: f64, rng: &mut R, mut emit: impl FnMut(u64, u64)) {
    let total = na * nb;
    if total == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for i in 0..total {
            emit(i / nb, i % nb);
        }
        return;
    }
    let lq = (1.0 - p).ln();
    let mut idx: i64 = -1;
    loop {
        let r: f64 = rng.random();
        let skip = ((1.0 - r).ln() / lq).floor();
        if skip >= (total as i64 - idx) as f64 {
            break;
        }
        idx += 1 + skip as i64;
        if idx >= total as i64 {
            break;
        }
        let i = idx as u64;
        emit(i / nb, i % nb);
    }
}

fn clamp_probability(p: f64, what: &str) -> f64 {
    if p > 1.0 {
        debug!("{what}: edge probability {p:.3} clamped to 1");
        1.0
    } else {
        p.max(0.0)
    }
}

/// Block-model graph: each pair is an independent Bernoulli draw with
/// `p_ij = K_ij / N_j` (`K_ii / (N_i − 1)` within a block).
pub fn sbm_generate<R: Rng>(spec: &BlockModelSpec, rng: &mut R) -> Result<Vec<Edge>> {
    if spec.members.len() != spec.block_of.len() {
        return Err(Error::LengthMismatch(spec.members.len(), spec.block_of.len()));
    }
    if spec.members.len() < 2 {
        return Ok(Vec::new());
    }
    let n_blocks = spec.block_of.iter().max().map_or(0, |m| m + 1);
    let mut blocks: Vec<Vec<PersonId>> = vec![Vec::new(); n_blocks];
    for (&m, &b) in spec.members.iter().zip(&spec.block_of) {
        blocks[b].push(m);
    }
    let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let table = BlockDegreeTable::<f64>::new(&sizes, spec.k, spec.alpha)?;
    for i in 0..n_blocks {
        debug_assert!((table.row_sum(i) - spec.k).abs() <= 1e-9 * (1.0 + spec.k));
    }
    let mut edges = Vec::new();
    for i in 0..n_blocks {
        if sizes[i] == 0 {
            continue;
        }
        if sizes[i] == 1 && table.k[i][i] > 0.0 && spec.alpha > 0.0 {
            debug!("single-member block cannot realize within-block degree {:.2}", table.k[i][i]);
        }
        if sizes[i] >= 2 {
            let p = clamp_probability(table.k[i][i] / (sizes[i] - 1) as f64, "within-block");
            let bi = &blocks[i];
            bernoulli_within(sizes[i] as u64, p, rng, |a, b| {
                edges.push((bi[a as usize] as u32, bi[b as usize] as u32));
            });
        }
        for j in i + 1..n_blocks {
            if sizes[j] == 0 {
                continue;
            }
            let p = clamp_probability(table.k[i][j] / sizes[j] as f64, "cross-block");
            let (bi, bj) = (&blocks[i], &blocks[j]);
            bernoulli_cross(sizes[i] as u64, sizes[j] as u64, p, rng, |a, b| {
                edges.push((bi[a as usize] as u32, bj[b as usize] as u32));
            });
        }
    }
    Ok(edges
        .into_iter()
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect())
}

/// Ring lattice with `k/2` neighbours per side, each lattice edge rewired
/// with probability `beta` to a uniform new endpoint.
pub fn watts_strogatz<R: Rng>(members: &[PersonId], k: usize, beta: f64, rng: &mut R) -> Result<Vec<Edge>> {
    let n = members.len();
    if !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("small-world degree must be even, got {k}")));
    }
    if n <= k {
        return Err(Error::InvalidParameter(format!(
            "small-world graph needs more than {k} members, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("rewiring probability {beta} outside [0, 1]")));
    }
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * k / 2);
    for j in 1..=k / 2 {
        for i in 0..n {
            let v = (i + j) % n;
            adj[i].insert(v);
            adj[v].insert(i);
            edges.push((i, v));
        }
    }
    for e in edges.iter_mut() {
        let (u, v) = *e;
        if !rng.random_bool(beta) || adj[u].len() >= n - 1 {
            continue;
        }
        let w = loop {
            let w = rng.random_range(0..n);
            if w != u && !adj[u].contains(&w) {
                break w;
            }
        };
        adj[u].remove(&v);
        adj[v].remove(&u);
        adj[u].insert(w);
        adj[w].insert(u);
        *e = (u, w);
    }
    Ok(edges
        .into_iter()
        .map(|(a, b)| {
            let (a, b) = (members[a] as u32, members[b] as u32);
            (a.min(b), a.max(b))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    BarabasiAlbert,
    ErdosRenyi,
    /// Goh-style static scale-free graph with degree exponent `gamma`.
    StaticScaleFree { gamma: f64 },
    WattsStrogatz { beta: f64 },
}

impl ReferenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::BarabasiAlbert => "barabasi_albert",
            ReferenceKind::ErdosRenyi => "erdos_renyi",
            ReferenceKind::StaticScaleFree { .. } => "static_scale_free",
            ReferenceKind::WattsStrogatz { .. } => "watts_strogatz",
        }
    }
}

fn barabasi_albert<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Vec<Edge>> {
    if m == 0 || n <= m {
        return Err(Error::InvalidParameter(format!("preferential attachment needs n > m >= 1 (n={n}, m={m})")));
    }
    let mut edges = Vec::with_capacity(n * m);
    // endpoint list: each vertex appears once per incident edge
    let mut ends: Vec<u32> = Vec::with_capacity(2 * n * m);
    for a in 0..=m {
        for b in a + 1..=m {
            edges.push((a as u32, b as u32));
            ends.push(a as u32);
            ends.push(b as u32);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in (m + 1)..n {
        chosen.clear();
        while chosen.len() < m {
            let t = ends[rng.random_range(0..ends.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            edges.push((t, v as u32));
            ends.push(t);
            ends.push(v as u32);
        }
    }
    Ok(edges)
}

fn erdos_renyi<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<Edge> {
    let mut edges = Vec::new();
    bernoulli_within(n as u64, p, rng, |a, b| edges.push((b as u32, a as u32)));
    edges
}

fn static_scale_free<R: Rng>(n: usize, mean_degree: f64, gamma: f64, rng: &mut R) -> Result<Vec<Edge>> {
    if gamma <= 2.0 {
        return Err(Error::InvalidParameter(format!("scale-free exponent must exceed 2, got {gamma}")));
    }
    let target = (n as f64 * mean_degree / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    if target > max_edges / 2 {
        return Err(Error::InvalidParameter("static scale-free graph too dense".into()));
    }
    let a = 1.0 / (gamma - 1.0);
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-a)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut seen: HashSet<Edge> = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target {
        attempts += 1;
        if attempts > 100 * target + 1000 {
            warn!("static scale-free generator stopped at {} of {target} edges", edges.len());
            break;
        }
        let (u, v) = (dist.sample(rng) as u32, dist.sample(rng) as u32);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    Ok(edges)
}

/// Reference graph with the requested mean degree: BA uses
/// `m = floor(mean/2)`, WS the even degree `2·floor(mean/2)`, ER
/// `p = mean/(n − 1)`.
pub fn reference_graph<R: Rng>(kind: ReferenceKind, n: usize, mean_degree: f64, rng: &mut R) -> Result<ContactGraph> {
    if !(mean_degree >= 0.0) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "reference graph needs n >= 2 and mean degree >= 0 (n={n}, mean={mean_degree})"
        )));
    }
    let half = (mean_degree / 2.0).floor() as usize;
    let edges = match kind {
        ReferenceKind::BarabasiAlbert => barabasi_albert(n, half, rng)?,
        ReferenceKind::ErdosRenyi => {
            let p = mean_degree / (n - 1) as f64;
            if p > 1.0 {
                return Err(Error::InvalidParameter(format!("mean degree {mean_degree} too large for n={n}")));
            }
            erdos_renyi(n, p, rng)
        }
        ReferenceKind::StaticScaleFree { gamma } => static_scale_free(n, mean_degree, gamma, rng)?,
        ReferenceKind::WattsStrogatz { beta } => {
            let all: Vec<PersonId> = (0..n).collect();
            watts_strogatz(&all, 2 * half, beta, rng)?
        }
    };
    Ok(ContactGraph::from_edges(n, edges, Layer::Random))
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    pub work_k: f64,
    pub work_alpha: f64,
    pub school_k: f64,
    pub school_alpha: f64,
    pub gq_k: usize,
    pub gq_beta: f64,
    /// Household income at or above this is the high-income work block.
    pub income_split: i64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            work_k: 8.0,
            work_alpha: 0.9,
            school_k: 12.0,
            school_alpha: 0.9,
            gq_k: 12,
            gq_beta: 0.25,
            income_split: 40_000,
        }
    }
}

fn place_edges(pop: &Population, place: usize, params: &NetworkParams, seed: u64) -> Result<(Layer, Vec<Edge>)> {
    let p = &pop.places[place];
    let mut rng = rng::stream(seed, "netgen", place as u64);
    match &p.kind {
        PlaceKind::Workplace { outside: true, .. } => Ok((Layer::Work, Vec::new())),
        PlaceKind::Workplace { .. } => {
            let members: Vec<PersonId> = p.members.iter().chain(&p.staff).copied().collect();
            let block_of = members
                .iter()
                .map(|&m| match pop.persons[m].income() {
                    Some(i) if i >= params.income_split => 1,
                    _ => 0,
                })
                .collect();
            let spec = BlockModelSpec {
                members,
                block_of,
                k: params.work_k,
                alpha: params.work_alpha,
            };
            Ok((Layer::Work, sbm_generate(&spec, &mut rng)?))
        }
        PlaceKind::School { .. } => {
            let grades: Vec<u8> = p
                .members
                .iter()
                .map(|&m| pop.persons[m].grade().map_or(0, |g| g.level()))
                .collect();
            let mut labels: BTreeMap<u8, usize> = BTreeMap::new();
            for &g in &grades {
                let next = labels.len();
                labels.entry(g).or_insert(next);
            }
            let mut block_of: Vec<usize> = grades.iter().map(|g| labels[g]).collect();
            // teachers join grade blocks in proportion to enrolment
            for _ in &p.staff {
                block_of.push(if grades.is_empty() {
                    0
                } else {
                    labels[&grades[rng.random_range(0..grades.len())]]
                });
            }
            let spec = BlockModelSpec {
                members: p.members.iter().chain(&p.staff).copied().collect(),
                block_of,
                k: params.school_k,
                alpha: params.school_alpha,
            };
            Ok((Layer::School, sbm_generate(&spec, &mut rng)?))
        }
        PlaceKind::Gq { .. } => {
            let members: Vec<PersonId> = p.members.iter().chain(&p.staff).copied().collect();
            if members.len() <= params.gq_k {
                Ok((Layer::Gq, household_cliques([members.as_slice()])))
            } else {
                Ok((Layer::Gq, watts_strogatz(&members, params.gq_k, params.gq_beta, &mut rng)?))
            }
        }
    }
}

/// Contact network over every person: household cliques plus one
/// generated network per workplace, school and GQ. Places are generated in
/// parallel from per-place streams and merged in place order.
pub fn assemble_network(pop: &Population, params: &NetworkParams, seed: u64) -> Result<ContactGraph> {
    let mut g = ContactGraph::new(pop.persons.len());
    g.extend(household_cliques(pop.household_members()), Layer::Home);
    let per_place: Vec<(Layer, Vec<Edge>)> = (0..pop.places.len())
        .into_par_iter()
        .map(|i| place_edges(pop, i, params, seed))
        .collect::<Result<_>>()?;
    for (layer, edges) in per_place {
        g.extend(edges, layer);
    }
    g.finalize();
    Ok(g)
}

pub fn write_edges(path: &Path, g: &ContactGraph) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "u,v,layer")?;
        for &(u, v, l) in &g.edges {
            writeln!(f, "{u},{v},{l}")?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

pub fn read_edges(path: &Path, n_vertices: usize) -> Result<ContactGraph> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut g = ContactGraph::new(n_vertices);
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |column: &str, message: String| Error::Malformed {
            file: name.clone(),
            line: i as u64 + 1,
            column: column.into(),
            message,
        };
        let mut parts = line.split(',');
        let mut next = |c: &str| parts.next().map(str::trim).ok_or_else(|| bad(c, "missing field".into()));
        let u: u32 = next("u")?.parse().map_err(|e| bad("u", format!("{e}")))?;
        let v: u32 = next("v")?.parse().map_err(|e| bad("v", format!("{e}")))?;
        let layer: Layer = next("layer")?.parse().map_err(|e| bad("layer", e))?;
        if u.max(v) as usize >= n_vertices {
            return Err(bad("v", format!("vertex outside 0..{n_vertices}")));
        }
        g.extend([(u, v)], layer);
    }
    g.finalize();
    Ok(g)
}
