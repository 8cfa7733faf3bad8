//! Target schema: named household/person aggregations matched against
//! census marginal columns.
//!
//! A column is defined by a unit (`household` or `person`), a conjunction of
//! filter clauses, and the `+`-separated raw census columns that sum to its
//! census-side value. Filter clauses are whitespace separated:
//!
//! * `key=v` or `key=lo..hi` (inclusive, either bound may be omitted) for
//!   numeric keys,
//! * `key=a|b|c` for categorical keys.
//!
//! Household keys: `size income workers kids kids_u6 kids_6_17 own_kids
//! seniors relatives nonrelatives family couple married cohab snap hh_age
//! hh_race hh_sex`. Person keys: `age worker employed race sex rel industry
//! grade` (`grade=any` / `grade=none` test presence).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::attrs::{Grade, Industry, PersonAttrs, Race, Relationship, Sex};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SCHEMA_CSV: &str = include_str!("../../data/default_schema.csv");
pub const RAW_COLUMNS_CSV: &str = include_str!("../../data/raw_columns.csv");

/// Ordered non-negative counts, one per schema column.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets<T>(pub Vec<T>);

impl<T: Scalar> Targets<T> {
    pub fn zeros(width: usize) -> Self {
        Targets(vec![T::zero(); width])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Targets<T>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = a.clone() + b.clone();
        }
    }

    pub fn sub_assign(&mut self, other: &Targets<T>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = a.clone() - b.clone();
        }
    }

    pub fn select(&self, columns: &[usize]) -> Targets<T> {
        Targets(columns.iter().map(|&c| self.0[c].clone()).collect())
    }
}

/// A household as the filters see it.
#[derive(Debug, Clone, Copy)]
pub struct HouseholdView<'a> {
    pub members: &'a [PersonAttrs],
    pub income: i64,
    pub snap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Household,
    Person,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HhNum {
    Size,
    Income,
    Workers,
    Kids,
    KidsUnder6,
    Kids6To17,
    OwnKids,
    Seniors,
    Relatives,
    NonRelatives,
    Family,
    Couple,
    Married,
    Cohab,
    Snap,
    HouseholderAge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PersonNum {
    Age,
    Worker,
    Employed,
}

#[derive(Debug, Clone, PartialEq)]
enum Clause {
    Hh { key: HhNum, lo: i64, hi: i64 },
    Person { key: PersonNum, lo: i64, hi: i64 },
    HouseholderRace(Vec<Race>),
    HouseholderSex(Sex),
    Race(Vec<Race>),
    Sex(Sex),
    Rel(Vec<Relationship>),
    Industry(Vec<Industry>),
    GradePresent(bool),
    Grade(Vec<Grade>),
}

impl Clause {
    fn is_person_level(&self) -> bool {
        matches!(
            self,
            Clause::Person { .. }
                | Clause::Race(_)
                | Clause::Sex(_)
                | Clause::Rel(_)
                | Clause::Industry(_)
                | Clause::GradePresent(_)
                | Clause::Grade(_)
        )
    }
}

fn parse_range(v: &str) -> std::result::Result<(i64, i64), String> {
    let parse = |s: &str| s.trim().parse::<i64>().map_err(|e| format!("`{s}`: {e}"));
    match v.split_once("..") {
        Some((a, b)) => {
            let lo = if a.is_empty() { i64::MIN } else { parse(a)? };
            let hi = if b.is_empty() { i64::MAX } else { parse(b)? };
            if lo > hi {
                return Err(format!("empty range `{v}`"));
            }
            Ok((lo, hi))
        }
        None => {
            let x = parse(v)?;
            Ok((x, x))
        }
    }
}

fn parse_list<X: FromStr<Err = String>>(v: &str) -> std::result::Result<Vec<X>, String> {
    v.split('|').map(X::from_str).collect()
}

fn parse_clause(text: &str) -> std::result::Result<Clause, String> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| format!("clause `{text}` is not key=value"))?;
    let hh = |key| parse_range(value).map(|(lo, hi)| Clause::Hh { key, lo, hi });
    let person = |key| parse_range(value).map(|(lo, hi)| Clause::Person { key, lo, hi });
    match key {
        "size" => hh(HhNum::Size),
        "income" => hh(HhNum::Income),
        "workers" => hh(HhNum::Workers),
        "kids" => hh(HhNum::Kids),
        "kids_u6" => hh(HhNum::KidsUnder6),
        "kids_6_17" => hh(HhNum::Kids6To17),
        "own_kids" => hh(HhNum::OwnKids),
        "seniors" => hh(HhNum::Seniors),
        "relatives" => hh(HhNum::Relatives),
        "nonrelatives" => hh(HhNum::NonRelatives),
        "family" => hh(HhNum::Family),
        "couple" => hh(HhNum::Couple),
        "married" => hh(HhNum::Married),
        "cohab" => hh(HhNum::Cohab),
        "snap" => hh(HhNum::Snap),
        "hh_age" => hh(HhNum::HouseholderAge),
        "hh_race" => parse_list(value).map(Clause::HouseholderRace),
        "hh_sex" => Sex::from_str(value).map(Clause::HouseholderSex),
        "age" => person(PersonNum::Age),
        "worker" => person(PersonNum::Worker),
        "employed" => person(PersonNum::Employed),
        "race" => parse_list(value).map(Clause::Race),
        "sex" => Sex::from_str(value).map(Clause::Sex),
        "rel" => parse_list(value).map(Clause::Rel),
        "industry" => parse_list(value).map(Clause::Industry),
        "grade" => match value {
            "any" => Ok(Clause::GradePresent(true)),
            "none" => Ok(Clause::GradePresent(false)),
            _ => parse_list(value).map(Clause::Grade),
        },
        _ => Err(format!("unknown filter key `{key}`")),
    }
}

fn householder<'a>(h: &HouseholdView<'a>) -> Option<&'a PersonAttrs> {
    h.members
        .iter()
        .find(|p| p.relationship == Relationship::Householder)
        .or_else(|| h.members.first())
}

fn count(h: &HouseholdView<'_>, pred: impl Fn(&PersonAttrs) -> bool) -> i64 {
    h.members.iter().filter(|p| pred(p)).count() as i64
}

fn hh_value(key: HhNum, h: &HouseholdView<'_>) -> i64 {
    let any = |r: Relationship| h.members.iter().any(|p| p.relationship == r) as i64;
    match key {
        HhNum::Size => h.members.len() as i64,
        HhNum::Income => h.income,
        HhNum::Workers => count(h, |p| p.is_worker),
        HhNum::Kids => count(h, |p| p.age < 18),
        HhNum::KidsUnder6 => count(h, |p| p.age < 6),
        HhNum::Kids6To17 => count(h, |p| (6..18).contains(&p.age)),
        HhNum::OwnKids => count(h, |p| p.relationship == Relationship::Child && p.age < 18),
        HhNum::Seniors => count(h, |p| p.age >= 65),
        HhNum::Relatives => count(h, |p| p.relationship.is_relative()),
        HhNum::NonRelatives => count(h, |p| p.relationship == Relationship::NonRelative),
        HhNum::Family => h.members.iter().any(|p| p.relationship.is_relative()) as i64,
        HhNum::Couple => (any(Relationship::Spouse) == 1 || any(Relationship::Partner) == 1) as i64,
        HhNum::Married => any(Relationship::Spouse),
        HhNum::Cohab => any(Relationship::Partner),
        HhNum::Snap => h.snap as i64,
        HhNum::HouseholderAge => householder(h).map_or(-1, |p| i64::from(p.age)),
    }
}

fn person_value(key: PersonNum, p: &PersonAttrs) -> i64 {
    match key {
        PersonNum::Age => i64::from(p.age),
        PersonNum::Worker => p.is_worker as i64,
        PersonNum::Employed => p.employed() as i64,
    }
}

fn household_clause_holds(c: &Clause, h: &HouseholdView<'_>) -> bool {
    match c {
        Clause::Hh { key, lo, hi } => (*lo..=*hi).contains(&hh_value(*key, h)),
        Clause::HouseholderRace(races) => householder(h).is_some_and(|p| races.contains(&p.race)),
        Clause::HouseholderSex(sex) => householder(h).is_some_and(|p| p.sex == *sex),
        _ => true,
    }
}

fn person_clause_holds(c: &Clause, p: &PersonAttrs) -> bool {
    match c {
        Clause::Person { key, lo, hi } => (*lo..=*hi).contains(&person_value(*key, p)),
        Clause::Race(r) => r.contains(&p.race),
        Clause::Sex(s) => p.sex == *s,
        Clause::Rel(r) => r.contains(&p.relationship),
        Clause::Industry(i) => p.industry.is_some_and(|x| i.contains(&x)),
        Clause::GradePresent(present) => p.grade.is_some() == *present,
        Clause::Grade(g) => p.grade.is_some_and(|x| g.contains(&x)),
        _ => true,
    }
}

/// A conjunction of filter clauses with its aggregation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub unit: Unit,
    clauses: Vec<Clause>,
}

impl Aggregation {
    pub fn parse(unit: &str, filter: &str) -> std::result::Result<Self, String> {
        let unit = match unit.trim() {
            "household" => Unit::Household,
            "person" => Unit::Person,
            other => return Err(format!("unknown unit `{other}`")),
        };
        let clauses = filter
            .split_whitespace()
            .map(parse_clause)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if unit == Unit::Household && clauses.iter().any(Clause::is_person_level) {
            return Err("person-level clause in a household-unit column".into());
        }
        Ok(Aggregation { unit, clauses })
    }

    /// Household-level count: 0/1 for household units, number of matching
    /// members for person units.
    pub fn evaluate(&self, h: &HouseholdView<'_>) -> usize {
        if !self.clauses.iter().all(|c| household_clause_holds(c, h)) {
            return 0;
        }
        match self.unit {
            Unit::Household => 1,
            Unit::Person => h
                .members
                .iter()
                .filter(|p| self.clauses.iter().all(|c| person_clause_holds(c, p)))
                .count(),
        }
    }

    /// The industry when this aggregation is exactly "persons employed in X".
    pub fn sole_industry(&self) -> Option<Industry> {
        match (self.unit, self.clauses.as_slice()) {
            (Unit::Person, [Clause::Industry(v)]) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub aggregation: Aggregation,
    pub census_columns: Vec<String>,
}

/// Ordered target column definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSchema {
    pub columns: Vec<ColumnDef>,
}

#[derive(serde::Deserialize)]
struct SchemaRow {
    name: String,
    unit: String,
    filter: String,
    #[serde(default)]
    census_columns: Option<String>,
}

fn parse_defs(text: &str, source: &str, need_census: bool) -> Result<Vec<ColumnDef>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SchemaRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Malformed {
            file: source.into(),
            line,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let aggregation = Aggregation::parse(&row.unit, &row.filter).map_err(|message| Error::Malformed {
            file: source.into(),
            line,
            column: "filter".into(),
            message,
        })?;
        let census_columns: Vec<String> = row
            .census_columns
            .as_deref()
            .unwrap_or("")
            .split('+')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let census_columns = if census_columns.is_empty() {
            if need_census {
                return Err(Error::Malformed {
                    file: source.into(),
                    line,
                    column: "census_columns".into(),
                    message: "no census columns".into(),
                });
            }
            vec![row.name.clone()]
        } else {
            census_columns
        };
        out.push(ColumnDef {
            name: row.name,
            aggregation,
            census_columns,
        });
    }
    Ok(out)
}

impl TargetSchema {
    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let columns = parse_defs(text, source, true)?;
        if columns.is_empty() {
            return Err(Error::Schema(format!("{source}: schema has no columns")));
        }
        Ok(TargetSchema { columns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    /// The shipped 85-column schema.
    pub fn default_schema() -> Self {
        Self::parse_csv(DEFAULT_SCHEMA_CSV, "default_schema.csv").expect("bundled schema parses")
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn subset(&self, indices: &[usize]) -> TargetSchema {
        TargetSchema {
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "unit", "filter", "census_columns"])?;
        for c in &self.columns {
            w.write_record([
                c.name.as_str(),
                match c.aggregation.unit {
                    Unit::Household => "household",
                    Unit::Person => "person",
                },
                &filter_text(&c.aggregation),
                &c.census_columns.join("+"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Household-level sums for every column.
    pub fn contribution<T: Scalar>(&self, h: &HouseholdView<'_>) -> Targets<T> {
        Targets(
            self.columns
                .iter()
                .map(|c| T::from_count(c.aggregation.evaluate(h)))
                .collect(),
        )
    }

    /// Columns that count persons employed in a single industry.
    pub fn industry_columns(&self) -> Vec<(usize, Industry)> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.aggregation.sole_industry().map(|ind| (i, ind)))
            .collect()
    }
}

fn filter_text(a: &Aggregation) -> String {
    // Only used to round-trip schemas that were parsed from text, so
    // re-render from the canonical clause form.
    a.clauses.iter().map(clause_text).collect::<Vec<_>>().join(" ")
}

fn range_text(lo: i64, hi: i64) -> String {
    match (lo == i64::MIN, hi == i64::MAX) {
        _ if lo == hi => lo.to_string(),
        (true, true) => "..".into(),
        (true, false) => format!("..{hi}"),
        (false, true) => format!("{lo}.."),
        (false, false) => format!("{lo}..{hi}"),
    }
}

fn join<X: std::fmt::Display>(v: &[X]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("|")
}

fn clause_text(c: &Clause) -> String {
    let hh_key = |k: HhNum| match k {
        HhNum::Size => "size",
        HhNum::Income => "income",
        HhNum::Workers => "workers",
        HhNum::Kids => "kids",
        HhNum::KidsUnder6 => "kids_u6",
        HhNum::Kids6To17 => "kids_6_17",
        HhNum::OwnKids => "own_kids",
        HhNum::Seniors => "seniors",
        HhNum::Relatives => "relatives",
        HhNum::NonRelatives => "nonrelatives",
        HhNum::Family => "family",
        HhNum::Couple => "couple",
        HhNum::Married => "married",
        HhNum::Cohab => "cohab",
        HhNum::Snap => "snap",
        HhNum::HouseholderAge => "hh_age",
    };
    match c {
        Clause::Hh { key, lo, hi } => format!("{}={}", hh_key(*key), range_text(*lo, *hi)),
        Clause::Person { key, lo, hi } => {
            let k = match key {
                PersonNum::Age => "age",
                PersonNum::Worker => "worker",
                PersonNum::Employed => "employed",
            };
            format!("{k}={}", range_text(*lo, *hi))
        }
        Clause::HouseholderRace(r) => format!("hh_race={}", join(r)),
        Clause::HouseholderSex(s) => format!("hh_sex={s}"),
        Clause::Race(r) => format!("race={}", join(r)),
        Clause::Sex(s) => format!("sex={s}"),
        Clause::Rel(r) => format!("rel={}", join(r)),
        Clause::Industry(i) => format!("industry={}", join(i)),
        Clause::GradePresent(true) => "grade=any".into(),
        Clause::GradePresent(false) => "grade=none".into(),
        Clause::Grade(g) => format!("grade={}", join(g)),
    }
}

/// Raw census column definitions used to fabricate marginal tables.
#[derive(Debug, Clone)]
pub struct RawCatalog {
    pub columns: Vec<ColumnDef>,
}

impl RawCatalog {
    pub fn bundled() -> Self {
        RawCatalog {
            columns: parse_defs(RAW_COLUMNS_CSV, "raw_columns.csv", false).expect("bundled catalog parses"),
        }
    }

    pub fn counts(&self, h: &HouseholdView<'_>) -> Vec<usize> {
        self.columns.iter().map(|c| c.aggregation.evaluate(h)).collect()
    }
}

/// One CBG's raw marginal counts keyed by column name.
pub type CbgRow = BTreeMap<String, f64>;

/// Census-side target vector: each schema column is the sum of its raw
/// census columns.
pub fn derive_targets<T: Scalar>(cbg: &str, row: &CbgRow, schema: &TargetSchema) -> Result<Targets<T>> {
    schema
        .columns
        .iter()
        .map(|c| {
            c.census_columns.iter().try_fold(0.0, |acc, name| {
                row.get(name)
                    .map(|v| acc + v.max(0.0))
                    .ok_or_else(|| Error::MissingColumn {
                        cbg: cbg.to_string(),
                        column: name.clone(),
                    })
            })
        })
        .map(|r| r.map(T::from_f64_lossy))
        .collect::<Result<Vec<T>>>()
        .map(Targets)
}
