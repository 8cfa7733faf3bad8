//! Iterative proportional fitting of two-way tables, and its two uses:
//! industry × residence-type worker counts and per-origin industry ×
//! destination commute matrices.

use std::collections::BTreeMap;

use log::warn;

use crate::attrs::Industry;
use crate::error::{Error, Result};
use crate::ingest::{WacRecord, OUTSIDE};
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct IpfProblem<T> {
    /// Row-major `r x c` seed.
    pub seed: Vec<Vec<T>>,
    pub row_targets: Vec<T>,
    pub col_targets: Vec<T>,
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> IpfProblem<T> {
    pub fn new(seed: Vec<Vec<T>>, row_targets: Vec<T>, col_targets: Vec<T>) -> Self {
        IpfProblem {
            seed,
            row_targets,
            col_targets,
            tol: T::from_f64_lossy(DEFAULT_TOL),
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfSolution<T> {
    pub matrix: Vec<Vec<T>>,
    pub converged: bool,
    /// Completed row+column sweeps.
    pub iterations: usize,
    /// Final max relative margin error.
    pub error: T,
}

fn rel_err<T: Real>(sum: T, target: T) -> T {
    if target > T::zero() {
        (sum - target).abs() / target
    } else {
        sum.abs()
    }
}

fn row_sums<T: Real>(m: &[Vec<T>]) -> Vec<T> {
    m.iter().map(|r| r.iter().fold(T::zero(), |a, &b| a + b)).collect()
}

fn col_sums<T: Real>(m: &[Vec<T>], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for r in m {
        for (o, &v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

/// Max relative error over both margins.
pub fn margin_error<T: Real>(m: &[Vec<T>], rows: &[T], cols: &[T]) -> T {
    let rs = row_sums(m);
    let cs = col_sums(m, cols.len());
    rs.iter()
        .zip(rows)
        .chain(cs.iter().zip(cols))
        .map(|(&s, &t)| rel_err(s, t))
        .fold(T::zero(), T::max)
}

/// Alternate row and column scaling until both margins match within `tol`.
/// Zero seed cells stay zero.
pub fn ipf_fit<T: Real>(problem: &IpfProblem<T>) -> Result<IpfSolution<T>> {
    let r = problem.seed.len();
    let c = problem.col_targets.len();
    if problem.row_targets.len() != r || problem.seed.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidParameter(format!(
            "IPF seed is not {r}x{c} matching its margins"
        )));
    }
    let bad = |v: &T| !(v.is_finite() && *v >= T::zero());
    if problem.seed.iter().flatten().any(bad)
        || problem.row_targets.iter().any(bad)
        || problem.col_targets.iter().any(bad)
    {
        return Err(Error::InvalidParameter("IPF inputs must be finite and non-negative".into()));
    }
    if !(problem.tol > T::zero()) || problem.max_iters == 0 {
        return Err(Error::InvalidParameter("IPF needs tol > 0 and max_iters > 0".into()));
    }

    let rows = problem.row_targets.clone();
    let mut cols = problem.col_targets.clone();
    let row_total = rows.iter().fold(T::zero(), |a, &b| a + b);
    let col_total = cols.iter().fold(T::zero(), |a, &b| a + b);
    if rel_err(col_total, row_total) > T::from_f64_lossy(1e-6)
        && col_total > T::zero() {
            warn!(
                "IPF margin totals differ ({} vs {}); column targets rescaled to the row total",
                row_total.to_f64_lossy(),
                col_total.to_f64_lossy()
            );
            let f = row_total / col_total;
            cols.iter_mut().for_each(|v| *v *= f);
        }

    let seed_rows = row_sums(&problem.seed);
    let seed_cols = col_sums(&problem.seed, c);
    for (i, (&s, &t)) in seed_rows.iter().zip(&rows).enumerate() {
        if s == T::zero() && t > T::zero() {
            return Err(Error::IpfInfeasible {
                axis: "row",
                index: i,
                target: t.to_f64_lossy(),
            });
        }
    }
    for (j, (&s, &t)) in seed_cols.iter().zip(&cols).enumerate() {
        if s == T::zero() && t > T::zero() {
            return Err(Error::IpfInfeasible {
                axis: "column",
                index: j,
                target: t.to_f64_lossy(),
            });
        }
    }

    let mut m = problem.seed.clone();
    let mut error = margin_error(&m, &rows, &cols);
    let mut iterations = 0;
    while error >= problem.tol && iterations < problem.max_iters {
        let rs = row_sums(&m);
        for (row, (&s, &t)) in m.iter_mut().zip(rs.iter().zip(&rows)) {
            if s > T::zero() {
                let f = t / s;
                row.iter_mut().for_each(|v| *v *= f);
            }
        }
        let cs = col_sums(&m, c);
        for row in m.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                if cs[j] > T::zero() {
                    *v *= cols[j] / cs[j];
                }
            }
        }
        iterations += 1;
        error = margin_error(&m, &rows, &cols);
    }
    Ok(IpfSolution {
        matrix: m,
        converged: error < problem.tol,
        iterations,
        error,
    })
}

/// Residence types of the industry × residence table, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residence {
    Household = 0,
    CivilianGq = 1,
    MilitaryGq = 2,
}

/// Per-CBG inputs to the industry × residence fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidenceCounts {
    /// Share of the CBG population living in households.
    pub household_share: f64,
    /// Civilian non-institutional GQ residents aged 18-64.
    pub civilian_gq_18_64: f64,
    /// Military GQ residents.
    pub military_gq: f64,
}

/// Workers by residence type (rows: household, civilian GQ, military GQ)
/// × industry (columns), fitted to census industry counts.
pub fn industry_residence_matrix(
    cbg: &str,
    employment: &[f64; Industry::COUNT],
    residence: &ResidenceCounts,
    gq_industry_props: &[f64; Industry::COUNT],
) -> Result<IpfSolution<f64>> {
    let adm = Industry::AdmMil.index();
    let household: Vec<f64> = employment.iter().map(|e| e * residence.household_share).collect();
    let civilian: Vec<f64> = gq_industry_props
        .iter()
        .map(|p| p * residence.civilian_gq_18_64)
        .collect();
    let mut military = vec![0.0; Industry::COUNT];
    military[adm] = residence.military_gq;

    let total: f64 = employment.iter().sum();
    let mil_target = residence.military_gq.min(employment[adm]);
    let civ_target = civilian.iter().sum::<f64>().min(total - mil_target).max(0.0);
    let hh_target = (total - mil_target - civ_target).max(0.0);
    if mil_target < residence.military_gq {
        warn!("CBG {cbg}: fewer armed-forces workers than military GQ residents; military row capped");
    }
    let problem = IpfProblem::new(
        vec![household, civilian, military],
        vec![hh_target, civ_target, mil_target],
        employment.to_vec(),
    );
    ipf_fit(&problem)
}

/// Industry × destination expected worker counts for one origin CBG.
#[derive(Debug, Clone, PartialEq)]
pub struct CommuteMatrix {
    pub origin: String,
    /// Destination CBG ids (may include [`OUTSIDE`]), in column order.
    pub destinations: Vec<String>,
    /// `cells[industry][destination]`.
    pub cells: Vec<Vec<f64>>,
    pub converged: bool,
    pub error: f64,
}

impl CommuteMatrix {
    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    pub fn row(&self, industry: Industry) -> &[f64] {
        &self.cells[industry.index()]
    }
}

/// Industry proportions per work destination from WAC counts.
#[derive(Debug, Clone, Default)]
pub struct WacIndex {
    mix: BTreeMap<String, [f64; Industry::COUNT]>,
}

impl WacIndex {
    pub fn new(records: &[WacRecord]) -> Self {
        let mut mix: BTreeMap<String, [f64; Industry::COUNT]> = BTreeMap::new();
        for r in records {
            mix.entry(r.work_cbg.clone()).or_insert([0.0; Industry::COUNT])[r.industry.index()] += r.count;
        }
        for m in mix.values_mut() {
            let t: f64 = m.iter().sum();
            if t > 0.0 {
                m.iter_mut().for_each(|v| *v /= t);
            }
        }
        WacIndex { mix }
    }

    /// Industry proportions at a destination, if it has any WAC mass.
    pub fn proportions(&self, dest: &str) -> Option<&[f64; Industry::COUNT]> {
        self.mix.get(dest).filter(|m| m.iter().any(|v| *v > 0.0))
    }
}

/// Fit the industry × destination matrix for one origin.
///
/// `od_row` holds raw OD counts to each destination; only proportions are
/// used. The OUTSIDE column (no WAC) is seeded with the origin's own
/// industry mix.
pub fn commute_matrix(
    origin: &str,
    industry_counts: &[f64; Industry::COUNT],
    od_row: &BTreeMap<String, f64>,
    wac: &WacIndex,
) -> Result<CommuteMatrix> {
    let total_workers: f64 = industry_counts.iter().sum();
    let od_total: f64 = od_row.values().sum();
    let destinations: Vec<String> = od_row
        .iter()
        .filter(|(_, &c)| c > 0.0)
        .map(|(d, _)| d.clone())
        .collect();
    if destinations.is_empty() || od_total <= 0.0 {
        return Err(Error::InvalidParameter(format!("origin {origin} has no OD flows")));
    }
    let to_dest: Vec<f64> = destinations
        .iter()
        .map(|d| total_workers * od_row[d] / od_total)
        .collect();
    let origin_mix: Vec<f64> = if total_workers > 0.0 {
        industry_counts.iter().map(|c| c / total_workers).collect()
    } else {
        vec![0.0; Industry::COUNT]
    };
    let seed: Vec<Vec<f64>> = (0..Industry::COUNT)
        .map(|i| {
            destinations
                .iter()
                .zip(&to_dest)
                .map(|(d, &w)| match wac.proportions(d) {
                    Some(p) => p[i] * w,
                    None if d == OUTSIDE => origin_mix[i] * w,
                    None => 0.0,
                })
                .collect()
        })
        .collect();

    let fit = |seed: Vec<Vec<f64>>| ipf_fit(&IpfProblem::new(seed, industry_counts.to_vec(), to_dest.clone()));
    let solution = match fit(seed) {
        Ok(s) => s,
        Err(Error::IpfInfeasible { .. }) => {
            warn!("commute IPF infeasible for origin {origin}; retrying with a uniform seed");
            let ones: Vec<Vec<f64>> = (0..Industry::COUNT)
                .map(|_| {
                    destinations
                        .iter()
                        .map(|d| if d == OUTSIDE || wac.proportions(d).is_some() { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            fit(ones)?
        }
        Err(e) => return Err(e),
    };
    if !solution.converged {
        warn!("commute IPF for origin {origin} stopped at error {}", solution.error);
    }
    Ok(CommuteMatrix {
        origin: origin.to_string(),
        destinations,
        cells: solution.matrix,
        converged: solution.converged,
        error: solution.error,
    })
}
