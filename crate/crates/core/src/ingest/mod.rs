//! Region input loading and preprocessing.

mod employers;
mod gq;
mod schema;
mod schools;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{info, warn};

use crate::attrs::{Grade, Industry, PersonAttrs};
use crate::error::{Error, Result};
use crate::table::Table;

pub use employers::{fit_employer_sizes, EmployerBin, LognormalParams};
pub use gq::{derive_gq_counts, p43_column, p43_proportions, AgeBand, GqCounts, GqType, P43Proportions};
pub use schema::{
    derive_targets, Aggregation, CbgRow, ColumnDef, HouseholdView, RawCatalog, TargetSchema, Targets, Unit,
    DEFAULT_SCHEMA_CSV, RAW_COLUMNS_CSV,
};
pub use schools::{nearest_schools, prepare_schools, School, SchoolRankings, SchoolRecord, MAX_RANKED};

/// Out-of-region origin/destination sentinel.
pub const OUTSIDE: &str = "OUTSIDE";

pub const COL_HOUSEHOLDS: &str = "households";
pub const COL_TOTAL_ADULTS: &str = "total_adults";
pub const COL_HOUSEHOLD_ADULTS: &str = "household_adults";
pub const COL_GQ_TOTAL: &str = "gq_total";
pub const COL_GQ_65PLUS: &str = "gq_65plus";

/// Raw census employment column for an industry (all residents).
pub fn emp_column(industry: Industry) -> String {
    format!("emp_{}", industry.code())
}

pub const FILE_CBG: &str = "cbg_marginals.csv";
pub const FILE_PUMS_HOUSEHOLDS: &str = "pums_households.csv";
pub const FILE_PUMS_PERSONS: &str = "pums_persons.csv";
pub const FILE_OD: &str = "od.csv";
pub const FILE_WAC: &str = "wac.csv";
pub const FILE_CBP: &str = "cbp.csv";
pub const FILE_SCHOOLS: &str = "schools.csv";
pub const FILE_GEO: &str = "geo.csv";
pub const FILE_SCHEMA: &str = "schema.csv";
pub const FILE_GQ_INDUSTRY: &str = "gq_industry.csv";

pub type TargetVector = Targets<f64>;

/// A sampled microdata household with its precomputed contribution vector.
#[derive(Debug, Clone)]
pub struct MicroHousehold {
    pub id: String,
    pub puma: String,
    pub income: i64,
    pub snap: bool,
    pub members: Vec<PersonAttrs>,
    pub contribution: TargetVector,
}

impl MicroHousehold {
    pub fn view(&self) -> HouseholdView<'_> {
        HouseholdView {
            members: &self.members,
            income: self.income,
            snap: self.snap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRecord {
    pub cbg: String,
    pub x: f64,
    pub y: f64,
    pub puma: Option<String>,
    pub county: String,
    pub cbsa: Option<String>,
    pub urban_pct: f64,
}

impl GeoRecord {
    /// Census tract: the first 11 characters of a 12-character block group
    /// GEOID; otherwise the CBG itself.
    pub fn tract(&self) -> &str {
        if self.cbg.len() == 12 {
            &self.cbg[..11]
        } else {
            &self.cbg
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdRecord {
    pub home: String,
    pub work: String,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WacRecord {
    pub work_cbg: String,
    pub industry: Industry,
    pub count: f64,
}

#[derive(Debug, Clone)]
pub struct RegionInputs {
    pub schema: TargetSchema,
    pub cbg_table: BTreeMap<String, CbgRow>,
    pub pums: Vec<MicroHousehold>,
    pub od: Vec<OdRecord>,
    pub wac: Vec<WacRecord>,
    pub cbp: BTreeMap<String, Vec<EmployerBin>>,
    pub schools: Vec<SchoolRecord>,
    pub geo: BTreeMap<String, GeoRecord>,
    /// Industry proportions of civilian non-institutional GQ residents.
    pub gq_industry: [f64; Industry::COUNT],
}

fn table(dir: &Path, name: &str) -> Result<Table> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingFile {
            name: name.into(),
            dir: dir.to_path_buf(),
        });
    }
    Table::read(&path)
}

fn load_geo(dir: &Path) -> Result<BTreeMap<String, GeoRecord>> {
    let t = table(dir, FILE_GEO)?;
    t.require(&["cbg", "x", "y", "puma", "county", "cbsa", "urban_pct"])?;
    let mut geo = BTreeMap::new();
    for r in t.rows() {
        let rec = GeoRecord {
            cbg: r.str("cbg")?.to_string(),
            x: r.parse("x")?,
            y: r.parse("y")?,
            puma: r.opt_str("puma").map(String::from),
            county: r.str("county")?.to_string(),
            cbsa: r.opt_str("cbsa").map(String::from),
            urban_pct: r.parse("urban_pct")?,
        };
        if !(0.0..=100.0).contains(&rec.urban_pct) {
            return Err(r.error("urban_pct", "must be within 0..=100"));
        }
        geo.insert(rec.cbg.clone(), rec);
    }
    Ok(geo)
}

fn load_cbg_table(dir: &Path, geo: &BTreeMap<String, GeoRecord>) -> Result<BTreeMap<String, CbgRow>> {
    let t = table(dir, FILE_CBG)?;
    t.require(&["cbg", COL_HOUSEHOLDS])?;
    let mut out = BTreeMap::new();
    for r in t.rows() {
        let cbg = r.str("cbg")?.to_string();
        if !geo.contains_key(&cbg) {
            return Err(Error::DanglingCbg {
                file: FILE_CBG.into(),
                line: r.line,
                cbg,
            });
        }
        let mut row = CbgRow::new();
        for h in t.header_names.iter().filter(|h| *h != "cbg") {
            row.insert(h.clone(), r.count(h)?);
        }
        out.insert(cbg, row);
    }
    Ok(out)
}

fn load_pums(dir: &Path, schema: &TargetSchema) -> Result<Vec<MicroHousehold>> {
    let ht = table(dir, FILE_PUMS_HOUSEHOLDS)?;
    ht.require(&["hh_id", "puma", "income", "snap"])?;
    let pt = table(dir, FILE_PUMS_PERSONS)?;
    pt.require(&["hh_id", "age", "sex", "race", "relationship", "industry", "grade", "worker"])?;

    let mut order = Vec::new();
    let mut households: BTreeMap<String, (String, i64, bool, Vec<PersonAttrs>)> = BTreeMap::new();
    for r in ht.rows() {
        let id = r.str("hh_id")?.to_string();
        let rec = (r.str("puma")?.to_string(), r.parse("income")?, r.flag("snap")?, Vec::new());
        if households.insert(id.clone(), rec).is_some() {
            return Err(r.error("hh_id", format!("duplicate household `{id}`")));
        }
        order.push(id);
    }
    for r in pt.rows() {
        let id = r.str("hh_id")?;
        let income = households
            .get(id)
            .map(|h| h.1)
            .ok_or_else(|| r.error("hh_id", format!("person references unknown household `{id}`")))?;
        let industry = match r.opt_str("industry") {
            None => None,
            Some(s) => Some(s.parse::<Industry>().map_err(|e| r.error("industry", e))?),
        };
        let grade = match r.opt_str("grade") {
            None => None,
            Some(s) => Some(s.parse::<Grade>().map_err(|e| r.error("grade", e))?),
        };
        let p = PersonAttrs {
            age: r.parse("age")?,
            sex: r.parse("sex")?,
            race: r.parse("race")?,
            relationship: r.parse("relationship")?,
            industry,
            income,
            grade,
            is_worker: r.flag("worker")?,
        };
        households.get_mut(id).expect("checked above").3.push(p);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (puma, income, snap, members) = households.remove(&id).expect("present");
        if members.is_empty() {
            warn!("PUMS household {id} has no persons; skipped");
            continue;
        }
        let view = HouseholdView {
            members: &members,
            income,
            snap,
        };
        let contribution = schema.contribution(&view);
        out.push(MicroHousehold {
            id,
            puma,
            income,
            snap,
            members,
            contribution,
        });
    }
    Ok(out)
}

fn check_cbg(geo: &BTreeMap<String, GeoRecord>, file: &str, line: u64, cbg: &str) -> Result<()> {
    if cbg == OUTSIDE || geo.contains_key(cbg) {
        Ok(())
    } else {
        Err(Error::DanglingCbg {
            file: file.into(),
            line,
            cbg: cbg.into(),
        })
    }
}

fn load_od(dir: &Path, geo: &BTreeMap<String, GeoRecord>) -> Result<Vec<OdRecord>> {
    let t = table(dir, FILE_OD)?;
    t.require(&["home_cbg", "work_cbg", "count"])?;
    t.rows()
        .map(|r| {
            let rec = OdRecord {
                home: r.str("home_cbg")?.to_string(),
                work: r.str("work_cbg")?.to_string(),
                count: r.count("count")?,
            };
            check_cbg(geo, FILE_OD, r.line, &rec.home)?;
            check_cbg(geo, FILE_OD, r.line, &rec.work)?;
            Ok(rec)
        })
        .collect()
}

fn load_wac(dir: &Path, geo: &BTreeMap<String, GeoRecord>) -> Result<Vec<WacRecord>> {
    let t = table(dir, FILE_WAC)?;
    t.require(&["work_cbg", "industry", "count"])?;
    t.rows()
        .map(|r| {
            let rec = WacRecord {
                work_cbg: r.str("work_cbg")?.to_string(),
                industry: r.parse("industry")?,
                count: r.count("count")?,
            };
            check_cbg(geo, FILE_WAC, r.line, &rec.work_cbg)?;
            Ok(rec)
        })
        .collect()
}

fn load_cbp(dir: &Path) -> Result<BTreeMap<String, Vec<EmployerBin>>> {
    let t = table(dir, FILE_CBP)?;
    t.require(&["county", "bin_min", "bin_max", "count"])?;
    let mut out: BTreeMap<String, Vec<EmployerBin>> = BTreeMap::new();
    for r in t.rows() {
        let bin = EmployerBin {
            bin_min: r.parse("bin_min")?,
            bin_max: r.parse_opt("bin_max")?,
            count: r.count("count")?,
        };
        if bin.bin_min < 1.0 || bin.bin_max.is_some_and(|m| m < bin.bin_min) {
            return Err(r.error("bin_min", "bins need 1 <= bin_min <= bin_max"));
        }
        out.entry(r.str("county")?.to_string()).or_default().push(bin);
    }
    Ok(out)
}

fn load_schools(dir: &Path) -> Result<Vec<SchoolRecord>> {
    let t = table(dir, FILE_SCHOOLS)?;
    t.require(&[
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
    t.rows()
        .map(|r| {
            let grade = |c: &str| -> Result<Option<Grade>> {
                match r.opt_str(c) {
                    None => Ok(None),
                    Some(s) => s.parse::<Grade>().map(Some).map_err(|e| r.error(c, e)),
                }
            };
            let low = grade("low_grade")?;
            let high = grade("high_grade")?;
            if let (Some(l), Some(h)) = (low, high) {
                if l > h {
                    return Err(r.error("low_grade", "low_grade exceeds high_grade"));
                }
            }
            Ok(SchoolRecord {
                id: r.str("school_id")?.to_string(),
                x: r.parse("x")?,
                y: r.parse("y")?,
                low_grade: low,
                high_grade: high,
                n_students: r.parse_opt("n_students")?,
                n_teachers: r.parse_opt("n_teachers")?,
                active: r.flag("active")?,
                regular: r.flag("regular")?,
            })
        })
        .collect()
}

fn load_gq_industry(dir: &Path, pums: &[MicroHousehold]) -> Result<[f64; Industry::COUNT]> {
    let mut props = [0.0; Industry::COUNT];
    if dir.join(FILE_GQ_INDUSTRY).exists() {
        let t = table(dir, FILE_GQ_INDUSTRY)?;
        t.require(&["industry", "proportion"])?;
        for r in t.rows() {
            let ind: Industry = r.parse("industry")?;
            props[ind.index()] = r.count("proportion")?;
        }
        let total: f64 = props.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::Malformed {
                file: FILE_GQ_INDUSTRY.into(),
                line: 1,
                column: "proportion".into(),
                message: format!("proportions sum to {total} > 1"),
            });
        }
    } else {
        // fall back to employed 18-64 microdata persons
        let mut n = 0.0;
        for p in pums.iter().flat_map(|h| &h.members).filter(|p| (18..65).contains(&p.age)) {
            n += 1.0;
            if let Some(i) = p.industry {
                props[i.index()] += 1.0;
            }
        }
        if n > 0.0 {
            props.iter_mut().for_each(|p| *p /= n);
        }
    }
    Ok(props)
}

/// Load and validate every input table of a region directory.
pub fn load_region_inputs(dir: &Path) -> Result<RegionInputs> {
    for name in [
        FILE_CBG,
        FILE_PUMS_HOUSEHOLDS,
        FILE_PUMS_PERSONS,
        FILE_OD,
        FILE_WAC,
        FILE_CBP,
        FILE_SCHOOLS,
        FILE_GEO,
    ] {
        if !dir.join(name).exists() {
            return Err(Error::MissingFile {
                name: name.into(),
                dir: dir.to_path_buf(),
            });
        }
    }
    let schema = if dir.join(FILE_SCHEMA).exists() {
        TargetSchema::load(&dir.join(FILE_SCHEMA))?
    } else {
        TargetSchema::default_schema()
    };
    let geo = load_geo(dir)?;
    let cbg_table = load_cbg_table(dir, &geo)?;
    let pums = load_pums(dir, &schema)?;
    let od = load_od(dir, &geo)?;
    let wac = load_wac(dir, &geo)?;
    let cbp = load_cbp(dir)?;
    let schools = load_schools(dir)?;
    let gq_industry = load_gq_industry(dir, &pums)?;
    info!(
        "loaded region: {} CBGs, {} microdata households, {} schools, schema width {}",
        cbg_table.len(),
        pums.len(),
        schools.len(),
        schema.width()
    );
    Ok(RegionInputs {
        schema,
        cbg_table,
        pums,
        od,
        wac,
        cbp,
        schools,
        geo,
        gq_industry,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    TooSmall { households: u64, gq: u64 },
    NoPuma,
}

#[derive(Debug, Clone, Default)]
pub struct CbgFilter {
    pub retained: BTreeSet<String>,
    pub dropped: Vec<(String, DropReason)>,
}

pub const MIN_HOUSEHOLDS: f64 = 20.0;
pub const MIN_GQ_RESIDENTS: u64 = 20;

/// Keep CBGs with at least 20 households or 20 GQ residents and a PUMA.
pub fn filter_cbgs(region: &RegionInputs) -> CbgFilter {
    let mut out = CbgFilter::default();
    for (cbg, row) in &region.cbg_table {
        let households = row.get(COL_HOUSEHOLDS).copied().unwrap_or(0.0);
        let gq = derive_gq_counts(cbg, row, &p43_proportions(row)).total();
        let has_puma = region
            .geo
            .get(cbg)
            .and_then(|g| g.puma.as_deref())
            .is_some_and(|p| !p.is_empty());
        let reason = if households < MIN_HOUSEHOLDS && gq < MIN_GQ_RESIDENTS {
            Some(DropReason::TooSmall {
                households: households as u64,
                gq,
            })
        } else if !has_puma {
            Some(DropReason::NoPuma)
        } else {
            None
        };
        match reason {
            Some(r) => {
                info!("dropping CBG {cbg}: {r:?}");
                out.dropped.push((cbg.clone(), r));
            }
            None => {
                out.retained.insert(cbg.clone());
            }
        }
    }
    out
}
