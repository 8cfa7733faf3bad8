//! Lognormal employer-size distribution fitted to binned employer counts.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// One size class: employers with `bin_min..=bin_max` employees
/// (`bin_max = None` is the open top class).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmployerBin {
    pub bin_min: f64,
    pub bin_max: Option<f64>,
    pub count: f64,
}

impl EmployerBin {
    /// Continuous size interval covered by the bin: `[bin_min, bin_max + 1)`,
    /// with the lowest class reaching down to zero.
    fn edges(&self) -> (f64, f64) {
        let lo = if self.bin_min <= 1.0 { 0.0 } else { self.bin_min };
        let hi = self.bin_max.map_or(f64::INFINITY, |m| m + 1.0);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalParams {
    pub mu: f64,
    /// Natural-log scale, always > 0.
    pub sigma: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

fn bin_probability(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    let z = |x: f64| {
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else if x.is_infinite() {
            f64::INFINITY
        } else {
            (x.ln() - mu) / sigma
        }
    };
    // upper tail difference is more accurate for bins far above the median
    let (zl, zh) = (z(lo), z(hi));
    if zl > 0.0 {
        std_normal_cdf(-zl) - std_normal_cdf(-zh)
    } else {
        std_normal_cdf(zh) - std_normal_cdf(zl)
    }
}

/// Soft upper bound on ln σ; keeps unidentified fits (e.g. two bins) from
/// drifting to infinite spread.
const MAX_LOG_SIGMA: f64 = 3.0;

fn neg_log_likelihood(bins: &[(f64, f64, f64)], mu: f64, log_sigma: f64) -> f64 {
    let sigma = log_sigma.exp();
    let nll: f64 = bins
        .iter()
        .map(|&(lo, hi, n)| -n * bin_probability(lo, hi, mu, sigma).max(1e-300).ln())
        .sum();
    nll + 1e3 * (log_sigma - MAX_LOG_SIGMA).max(0.0).powi(2)
}

/// Minimise a 2-D function with the Nelder-Mead simplex method.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> [f64; 2] {
    let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut values = simplex.map(&f);
    for _ in 0..2000 {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, mid, worst) = (idx[0], idx[1], idx[2]);
        if (values[worst] - values[best]).abs() <= 1e-12 * (1.0 + values[best].abs())
            && (0..2).all(|k| (simplex[worst][k] - simplex[best][k]).abs() < 1e-9)
        {
            break;
        }
        let centroid = [
            0.5 * (simplex[best][0] + simplex[mid][0]),
            0.5 * (simplex[best][1] + simplex[mid][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[worst][0] - centroid[0]),
                centroid[1] + t * (simplex[worst][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[best] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[mid] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] { along(-0.5) } else { along(0.5) };
            let fc = f(contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for i in [mid, worst] {
                    for k in 0..2 {
                        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    }
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best]
}

/// Maximum-likelihood lognormal parameters for binned employer sizes; the
/// open top bin is treated as right-censored.
pub fn fit_employer_sizes(bins: &[EmployerBin]) -> Result<LognormalParams> {
    let data: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter(|b| b.count > 0.0)
        .map(|b| {
            let (lo, hi) = b.edges();
            (lo, hi, b.count)
        })
        .collect();
    if data.len() < 2 {
        return Err(Error::DegenerateBins(format!(
            "{} bin(s) with positive count",
            data.len()
        )));
    }
    // start from a representative log size per bin
    let total: f64 = data.iter().map(|d| d.2).sum();
    let rep = |&(lo, hi, _): &(f64, f64, f64)| -> f64 {
        let lo = lo.max(1.0);
        if hi.is_infinite() {
            (2.0 * lo).ln()
        } else {
            (0.5 * (lo + hi)).ln()
        }
    };
    let mean = data.iter().map(|d| d.2 * rep(d)).sum::<f64>() / total;
    let var = data.iter().map(|d| d.2 * (rep(d) - mean).powi(2)).sum::<f64>() / total;
    let start = [mean, var.sqrt().max(0.3).ln()];
    let mut best = nelder_mead(|p| neg_log_likelihood(&data, p[0], p[1]), start, [0.5, 0.3]);
    // restart once from the optimum to shake off a collapsed simplex
    best = nelder_mead(|p| neg_log_likelihood(&data, p[0], p[1]), best, [0.1, 0.1]);
    Ok(LognormalParams {
        mu: best[0],
        sigma: best[1].exp(),
    })
}
