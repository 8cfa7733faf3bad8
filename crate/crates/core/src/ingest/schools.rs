//! School directory cleanup and per-CBG nearest-school rankings.

use std::collections::BTreeMap;

use log::warn;

use super::GeoRecord;
use crate::attrs::Grade;

pub const MAX_RANKED: usize = 5;

/// A school directory row as read from `schools.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchoolRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub low_grade: Option<Grade>,
    pub high_grade: Option<Grade>,
    pub n_students: Option<f64>,
    pub n_teachers: Option<f64>,
    pub active: bool,
    pub regular: bool,
}

/// An eligible school with filled-in capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct School {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub low_grade: Grade,
    pub high_grade: Grade,
    pub n_students: u64,
    pub n_teachers: u64,
}

impl School {
    pub fn offers(&self, grade: Grade) -> bool {
        (self.low_grade..=self.high_grade).contains(&grade)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SchoolType {
    Elementary,
    Middle,
    High,
}

fn school_type(high: Grade) -> SchoolType {
    match high.level() {
        0..=6 => SchoolType::Elementary,
        7..=9 => SchoolType::Middle,
        _ => SchoolType::High,
    }
}

/// Keep active regular schools with reported grades; missing student or
/// teacher counts are filled with the mean for the school's type in the
/// area (region-wide mean when the type has no reported values).
pub fn prepare_schools(records: &[SchoolRecord]) -> Vec<School> {
    let eligible: Vec<&SchoolRecord> = records
        .iter()
        .filter(|r| r.active && r.regular && r.low_grade.is_some() && r.high_grade.is_some())
        .collect();

    let mean_by = |get: fn(&SchoolRecord) -> Option<f64>| {
        let mut by_type: BTreeMap<SchoolType, (f64, f64)> = BTreeMap::new();
        let mut all = (0.0, 0.0);
        for r in &eligible {
            if let Some(v) = get(r) {
                let e = by_type.entry(school_type(r.high_grade.unwrap())).or_default();
                e.0 += v;
                e.1 += 1.0;
                all.0 += v;
                all.1 += 1.0;
            }
        }
        let region = if all.1 > 0.0 { all.0 / all.1 } else { 0.0 };
        move |ty: SchoolType| by_type.get(&ty).map_or(region, |(s, n)| s / n)
    };
    let students_mean = mean_by(|r| r.n_students);
    let teachers_mean = mean_by(|r| r.n_teachers);

    eligible
        .into_iter()
        .map(|r| {
            let ty = school_type(r.high_grade.unwrap());
            let n_students = r.n_students.unwrap_or_else(|| {
                warn!("school {}: missing student count filled with type mean", r.id);
                students_mean(ty)
            });
            let n_teachers = r.n_teachers.unwrap_or_else(|| {
                warn!("school {}: missing teacher count filled with type mean", r.id);
                teachers_mean(ty)
            });
            School {
                id: r.id.clone(),
                x: r.x,
                y: r.y,
                low_grade: r.low_grade.unwrap(),
                high_grade: r.high_grade.unwrap(),
                n_students: n_students.round().max(0.0) as u64,
                n_teachers: n_teachers.round().max(0.0) as u64,
            }
        })
        .collect()
}

/// Up to five schools offering `grade`, nearest first (ties by id).
/// Returned values are indices into `schools`.
pub fn nearest_schools(geo: &GeoRecord, grade: Grade, schools: &[School]) -> Vec<usize> {
    let mut cands: Vec<(f64, &str, usize)> = schools
        .iter()
        .enumerate()
        .filter(|(_, s)| s.offers(grade))
        .map(|(i, s)| ((s.x - geo.x).hypot(s.y - geo.y), s.id.as_str(), i))
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    cands.into_iter().take(MAX_RANKED).map(|c| c.2).collect()
}

/// Precomputed rankings for every (CBG, grade).
#[derive(Debug, Clone, Default)]
pub struct SchoolRankings {
    by_cbg: BTreeMap<String, Vec<Vec<usize>>>,
}

impl SchoolRankings {
    pub fn build<'a>(cbgs: impl IntoIterator<Item = &'a GeoRecord>, schools: &[School]) -> Self {
        let by_cbg = cbgs
            .into_iter()
            .map(|g| {
                let per_grade = Grade::all().map(|gr| nearest_schools(g, gr, schools)).collect();
                (g.cbg.clone(), per_grade)
            })
            .collect();
        SchoolRankings { by_cbg }
    }

    pub fn get(&self, cbg: &str, grade: Grade) -> &[usize] {
        self.by_cbg
            .get(cbg)
            .map_or(&[][..], |v| v[grade.level() as usize].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn school(id: &str, x: f64, low: &str, high: &str) -> School {
        School {
            id: id.into(),
            x,
            y: 0.0,
            low_grade: low.parse().unwrap(),
            high_grade: high.parse().unwrap(),
            n_students: 100,
            n_teachers: 10,
        }
    }

    fn origin() -> GeoRecord {
        GeoRecord {
            cbg: "o".into(),
            x: 0.0,
            y: 0.0,
            puma: None,
            county: "c".into(),
            cbsa: None,
            urban_pct: 0.0,
        }
    }

    #[test]
    fn ranks_by_distance() {
        let s = vec![school("c", 3.0, "KG", "5"), school("a", 1.0, "KG", "5"), school("b", 2.0, "KG", "5")];
        assert_eq!(nearest_schools(&origin(), Grade::year(3).unwrap(), &s), vec![1, 2, 0]);
    }

    #[test]
    fn keeps_five_nearest() {
        let s: Vec<School> = (0..7).map(|i| school(&format!("s{i}"), 7.0 - i as f64, "9", "12")).collect();
        let r = nearest_schools(&origin(), Grade::year(10).unwrap(), &s);
        assert_eq!(r, vec![6, 5, 4, 3, 2]);
    }

    #[test]
    fn equidistant_lower_id_first() {
        let s = vec![school("b", 2.0, "PK", "5"), school("a", -2.0, "PK", "5")];
        assert_eq!(nearest_schools(&origin(), Grade::PK, &s), vec![1, 0]);
    }

    #[test]
    fn grade_filter_and_empty() {
        let s = vec![school("a", 1.0, "9", "12")];
        assert!(nearest_schools(&origin(), Grade::KG, &s).is_empty());
    }

    #[test]
    fn distances_non_decreasing() {
        let s: Vec<School> = (0..20)
            .map(|i| school(&format!("{i:02}"), ((i * 7919) % 23) as f64 - 11.0, "PK", "12"))
            .collect();
        let r = nearest_schools(&origin(), Grade::KG, &s);
        let d: Vec<f64> = r.iter().map(|&i| s[i].x.abs()).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fill_missing_counts_by_type_mean() {
        let rec = |id: &str, hi: &str, n: Option<f64>, active| SchoolRecord {
            id: id.into(),
            x: 0.0,
            y: 0.0,
            low_grade: Some("KG".parse().unwrap()),
            high_grade: Some(hi.parse().unwrap()),
            n_students: n,
            n_teachers: Some(10.0),
            active,
            regular: true,
        };
        let schools = prepare_schools(&[
            rec("a", "5", Some(200.0), true),
            rec("b", "5", Some(400.0), true),
            rec("c", "5", None, true),
            rec("d", "12", None, true),
            rec("e", "5", Some(9999.0), false),
        ]);
        assert_eq!(schools.len(), 4);
        assert_eq!(schools[2].n_students, 300);
        // no high school reports a count: region-wide mean
        assert_eq!(schools[3].n_students, 300);
    }
}
