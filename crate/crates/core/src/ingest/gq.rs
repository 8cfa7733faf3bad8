//! Group-quarters resident counts per age band and GQ type.

use log::warn;

use super::schema::CbgRow;
use super::{COL_GQ_65PLUS, COL_GQ_TOTAL, COL_HOUSEHOLD_ADULTS, COL_TOTAL_ADULTS};
use crate::apportion::largest_remainder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    Under18,
    Adult18To64,
    Senior65Plus,
}

impl AgeBand {
    pub const ALL: [AgeBand; 3] = [AgeBand::Under18, AgeBand::Adult18To64, AgeBand::Senior65Plus];

    pub fn code(self) -> &'static str {
        match self {
            AgeBand::Under18 => "u18",
            AgeBand::Adult18To64 => "18_64",
            AgeBand::Senior65Plus => "65p",
        }
    }

    pub fn ages(self) -> std::ops::RangeInclusive<u8> {
        match self {
            AgeBand::Under18 => 0..=17,
            AgeBand::Adult18To64 => 18..=64,
            AgeBand::Senior65Plus => 65..=95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GqType {
    Institutional,
    CivilianNoninst,
    Military,
}

impl GqType {
    pub const ALL: [GqType; 3] = [GqType::Institutional, GqType::CivilianNoninst, GqType::Military];

    pub fn code(self) -> &'static str {
        match self {
            GqType::Institutional => "inst",
            GqType::CivilianNoninst => "civ",
            GqType::Military => "mil",
        }
    }

    pub fn is_institutional(self) -> bool {
        self == GqType::Institutional
    }
}

impl std::str::FromStr for AgeBand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgeBand::ALL
            .into_iter()
            .find(|b| b.code() == s)
            .ok_or_else(|| format!("unknown age band `{s}`"))
    }
}

impl std::str::FromStr for GqType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GqType::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| format!("unknown GQ type `{s}`"))
    }
}

/// Column name of the decennial GQ-by-type count for a band and type.
pub fn p43_column(band: AgeBand, ty: GqType) -> String {
    format!("p43_{}_{}", band.code(), ty.code())
}

/// Per band, the split across (institutional, civilian, military).
pub type P43Proportions = [[f64; 3]; 3];

/// Residents per band x type, indexed `[band][type]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GqCounts(pub [[u64; 3]; 3]);

impl GqCounts {
    pub fn get(&self, band: AgeBand, ty: GqType) -> u64 {
        self.0[band as usize][ty as usize]
    }

    pub fn band_total(&self, band: AgeBand) -> u64 {
        self.0[band as usize].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }
}

/// Proportions from the `p43_*` columns of a CBG row.
///
/// Only five GQ kinds exist: the under-18 and 65+ bands are institutional
/// only, and only the 18-64 band is split three ways. A band without any
/// mass falls back to all-institutional.
pub fn p43_proportions(row: &CbgRow) -> P43Proportions {
    let mut out = [[1.0, 0.0, 0.0]; 3];
    let band = AgeBand::Adult18To64;
    let counts: Vec<f64> = GqType::ALL
        .iter()
        .map(|&t| row.get(&p43_column(band, t)).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for (k, c) in counts.iter().enumerate() {
            out[band as usize][k] = c / total;
        }
    }
    out
}

fn col(row: &CbgRow, name: &str) -> f64 {
    row.get(name).copied().unwrap_or(0.0)
}

fn clamp(cbg: &str, what: &str, v: f64) -> u64 {
    if v < 0.0 {
        warn!("CBG {cbg}: derived {what} = {v} is negative; clamped to 0");
        0
    } else {
        v.round() as u64
    }
}

/// GQ residents by age band and type from adult/household/GQ totals.
pub fn derive_gq_counts(cbg: &str, row: &CbgRow, props: &P43Proportions) -> GqCounts {
    let total_adults = col(row, COL_TOTAL_ADULTS);
    let household_adults = col(row, COL_HOUSEHOLD_ADULTS);
    let total_gq = col(row, COL_GQ_TOTAL);
    let gq_65 = col(row, COL_GQ_65PLUS);

    let gq_adults = total_adults - household_adults;
    let bands = [
        clamp(cbg, "under-18 GQ residents", total_gq - gq_adults.max(0.0)),
        clamp(cbg, "18-64 GQ residents", gq_adults - gq_65),
        clamp(cbg, "65+ GQ residents", gq_65),
    ];
    let mut out = GqCounts::default();
    for (b, &n) in bands.iter().enumerate() {
        let mut p = props[b];
        if b != AgeBand::Adult18To64 as usize {
            p = [1.0, 0.0, 0.0];
        }
        if p.iter().sum::<f64>() <= 0.0 {
            p = [1.0, 0.0, 0.0];
        }
        let split = largest_remainder(&p, n);
        out.0[b].copy_from_slice(&split);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(total_adults: f64, household_adults: f64, gq_65: f64, total_gq: f64) -> CbgRow {
        let mut r = CbgRow::new();
        r.insert(COL_TOTAL_ADULTS.into(), total_adults);
        r.insert(COL_HOUSEHOLD_ADULTS.into(), household_adults);
        r.insert(COL_GQ_65PLUS.into(), gq_65);
        r.insert(COL_GQ_TOTAL.into(), total_gq);
        r
    }

    #[test]
    fn band_identities() {
        let g = derive_gq_counts("x", &row(1000.0, 900.0, 30.0, 120.0), &[[1.0, 0.0, 0.0]; 3]);
        assert_eq!(g.band_total(AgeBand::Under18), 20);
        assert_eq!(g.band_total(AgeBand::Adult18To64), 70);
        assert_eq!(g.band_total(AgeBand::Senior65Plus), 30);
        assert_eq!(g.total(), 120);
    }

    #[test]
    fn adult_band_split() {
        let props = [[1.0, 0.0, 0.0], [0.5, 0.3, 0.2], [1.0, 0.0, 0.0]];
        let g = derive_gq_counts("x", &row(1000.0, 900.0, 30.0, 120.0), &props);
        assert_eq!(g.0[1], [35, 21, 14]);
        // military only in 18-64
        assert_eq!(g.get(AgeBand::Under18, GqType::Military), 0);
        assert_eq!(g.get(AgeBand::Senior65Plus, GqType::Military), 0);
    }

    #[test]
    fn zero_gq() {
        let g = derive_gq_counts("x", &row(500.0, 500.0, 0.0, 0.0), &[[0.2, 0.4, 0.4]; 3]);
        assert_eq!(g, GqCounts::default());
    }

    #[test]
    fn negative_intermediates_clamp() {
        let g = derive_gq_counts("x", &row(100.0, 120.0, 5.0, 0.0), &[[1.0, 0.0, 0.0]; 3]);
        assert_eq!(g.band_total(AgeBand::Adult18To64), 0);
        assert_eq!(g.band_total(AgeBand::Under18), 0);
    }

    #[test]
    fn proportions_from_columns() {
        let mut r = CbgRow::new();
        r.insert(p43_column(AgeBand::Adult18To64, GqType::Institutional), 10.0);
        r.insert(p43_column(AgeBand::Adult18To64, GqType::Military), 30.0);
        let p = p43_proportions(&r);
        assert_eq!(p[1], [0.25, 0.0, 0.75]);
        assert_eq!(p[0], [1.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn conserves_total_gq(hh_adults in 0u32..5000, gq_adults in 0u32..500, gq_65_frac in 0.0f64..1.0,
                              kids in 0u32..200, p in prop::array::uniform3(0.0f64..10.0)) {
            let gq_65 = (f64::from(gq_adults) * gq_65_frac).floor();
            let total_gq = f64::from(gq_adults + kids);
            let r = row(f64::from(hh_adults + gq_adults), f64::from(hh_adults), gq_65, total_gq);
            let g = derive_gq_counts("x", &r, &[p, p, p]);
            prop_assert_eq!(g.total() as f64, total_gq);
        }
    }
}
