//! Concrete persons, households, group quarters, schools and workplaces.
//!
//! Stages run in order: [`instantiate_population`], [`assign_students`],
//! [`assign_commutes`], [`assign_teachers`], [`assign_gq_staff`],
//! [`build_workplaces`]. Teachers and GQ staff are drawn from commuting
//! workers before ordinary workplaces are generated for everyone left.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::apportion::largest_remainder;
use crate::attrs::{Grade, Industry, PersonAttrs, Race, Relationship, Sex};
use crate::error::{Error, Result};
use crate::table::Table;
use crate::ingest::{
    AgeBand, GeoRecord, GqCounts, GqType, LognormalParams, MicroHousehold, OdRecord, School, SchoolRankings, OUTSIDE,
};
use crate::ipf::{CommuteMatrix, WacIndex};

pub type PersonId = usize;
pub type CbgIdx = u32;

/// Minimum residents of one GQ kind for the GQ to exist.
pub const MIN_GQ_RESIDENTS: u64 = 20;
pub const STUDENT_FIRST_CHOICE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Home {
    Household(usize),
    Gq(usize),
    /// Commuter from outside the region; belongs to a workplace only.
    Placeholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WorkLoc {
    Cbg(CbgIdx),
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub id: PersonId,
    pub home: Home,
    /// `None` for placeholders.
    pub home_cbg: Option<CbgIdx>,
    /// Microdata attributes; `None` for placeholders.
    pub attrs: Option<PersonAttrs>,
    pub industry: Option<Industry>,
    pub school: Option<usize>,
    pub workplace: Option<usize>,
    pub work_loc: Option<WorkLoc>,
}

impl Person {
    pub fn is_placeholder(&self) -> bool {
        self.home == Home::Placeholder
    }

    pub fn grade(&self) -> Option<Grade> {
        self.attrs.as_ref().and_then(|a| a.grade)
    }

    pub fn income(&self) -> Option<i64> {
        self.attrs.as_ref().map(|a| a.income)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub id: usize,
    pub cbg: CbgIdx,
    /// Microdata household this one was cloned from.
    pub source: String,
    pub members: Vec<PersonId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlaceKind {
    School {
        school_id: String,
        low: Grade,
        high: Grade,
        n_teachers: u64,
    },
    Workplace {
        industry: Industry,
        /// Single-person stand-in for a job outside the region.
        outside: bool,
    },
    Gq {
        band: AgeBand,
        gq_type: GqType,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: usize,
    pub kind: PlaceKind,
    pub cbg: Option<CbgIdx>,
    /// Students for schools, drawn size for workplaces, residents for GQs.
    pub capacity: usize,
    /// Students, workers or residents.
    pub members: Vec<PersonId>,
    /// Teachers or GQ staff.
    pub staff: Vec<PersonId>,
}

impl Place {
    pub fn is_outside_workplace(&self) -> bool {
        matches!(self.kind, PlaceKind::Workplace { outside: true, .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlacementReport {
    pub unassigned_students: usize,
    pub overfilled_schools: BTreeSet<usize>,
    pub teacher_deficit: u64,
    pub staff_deficit: u64,
    /// Workers sent OUTSIDE because their industry had no matrix row.
    pub outside_fallbacks: usize,
    pub placeholders: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Population {
    pub cbgs: Vec<String>,
    pub cbg_index: BTreeMap<String, CbgIdx>,
    pub persons: Vec<Person>,
    pub households: Vec<Household>,
    pub places: Vec<Place>,
    /// Place id of each prepared school, parallel to the school list.
    pub school_places: Vec<usize>,
    pub report: PlacementReport,
}

impl Population {
    pub fn new(cbgs: impl IntoIterator<Item = String>) -> Self {
        let mut cbgs: Vec<String> = cbgs.into_iter().collect();
        cbgs.sort();
        cbgs.dedup();
        let cbg_index = cbgs.iter().enumerate().map(|(i, c)| (c.clone(), i as CbgIdx)).collect();
        Population {
            cbgs,
            cbg_index,
            ..Default::default()
        }
    }

    pub fn cbg(&self, idx: CbgIdx) -> &str {
        &self.cbgs[idx as usize]
    }

    fn push_person(&mut self, home: Home, home_cbg: Option<CbgIdx>, attrs: Option<PersonAttrs>) -> PersonId {
        let id = self.persons.len();
        let industry = attrs.as_ref().and_then(|a| a.industry);
        self.persons.push(Person {
            id,
            home,
            home_cbg,
            attrs,
            industry,
            school: None,
            workplace: None,
            work_loc: None,
        });
        id
    }

    fn push_place(&mut self, kind: PlaceKind, cbg: Option<CbgIdx>, capacity: usize) -> usize {
        let id = self.places.len();
        self.places.push(Place {
            id,
            kind,
            cbg,
            capacity,
            members: Vec::new(),
            staff: Vec::new(),
        });
        id
    }

    /// Create one school place per prepared school, located at its nearest CBG.
    pub fn add_schools(&mut self, schools: &[School], geo: &BTreeMap<String, GeoRecord>) {
        for s in schools {
            let cbg = nearest_cbg(s.x, s.y, geo).and_then(|c| self.cbg_index.get(c).copied());
            let id = self.push_place(
                PlaceKind::School {
                    school_id: s.id.clone(),
                    low: s.low_grade,
                    high: s.high_grade,
                    n_teachers: s.n_teachers,
                },
                cbg,
                s.n_students as usize,
            );
            self.school_places.push(id);
        }
    }

    /// Household members for the contact network, in household order.
    pub fn household_members(&self) -> impl Iterator<Item = &[PersonId]> {
        self.households.iter().map(|h| h.members.as_slice())
    }
}

/// Integer industries for GQ residents, per CBG.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GqPlan {
    pub counts: GqCounts,
    /// Workers among civilian non-institutional 18-64 residents.
    pub civilian_industries: [u64; Industry::COUNT],
    /// Workers among military residents.
    pub military_industries: [u64; Industry::COUNT],
}

/// The five GQ kinds that exist.
pub const GQ_KINDS: [(AgeBand, GqType); 5] = [
    (AgeBand::Under18, GqType::Institutional),
    (AgeBand::Adult18To64, GqType::Institutional),
    (AgeBand::Adult18To64, GqType::CivilianNoninst),
    (AgeBand::Adult18To64, GqType::Military),
    (AgeBand::Senior65Plus, GqType::Institutional),
];

/// Clone selected microdata households into persons, then create group
/// quarters with at least [`MIN_GQ_RESIDENTS`] residents.
pub fn instantiate_population<R: Rng>(
    cbgs: impl IntoIterator<Item = String>,
    selections: &BTreeMap<String, Vec<usize>>,
    pums: &[MicroHousehold],
    gq_plans: &BTreeMap<String, GqPlan>,
    rng: &mut R,
) -> Result<Population> {
    let mut pop = Population::new(cbgs);
    for (cbg, sel) in selections {
        let ci = *pop
            .cbg_index
            .get(cbg)
            .ok_or_else(|| Error::InvalidParameter(format!("selection for unknown CBG {cbg}")))?;
        for &h in sel {
            let src = pums
                .get(h)
                .ok_or_else(|| Error::InvalidParameter(format!("selection index {h} out of range")))?;
            let hid = pop.households.len();
            let members: Vec<PersonId> = src
                .members
                .iter()
                .map(|m| pop.push_person(Home::Household(hid), Some(ci), Some(m.clone())))
                .collect();
            pop.households.push(Household {
                id: hid,
                cbg: ci,
                source: src.id.clone(),
                members,
            });
        }
    }

    // race mix of household persons per CBG, for GQ residents
    let mut races: BTreeMap<CbgIdx, Vec<Race>> = BTreeMap::new();
    for p in &pop.persons {
        if let (Some(c), Some(a)) = (p.home_cbg, &p.attrs) {
            races.entry(c).or_default().push(a.race);
        }
    }

    for (cbg, plan) in gq_plans {
        let Some(&ci) = pop.cbg_index.get(cbg) else {
            warn!("GQ counts for unknown CBG {cbg} ignored");
            continue;
        };
        for (band, ty) in GQ_KINDS {
            let n = plan.counts.get(band, ty);
            if n < MIN_GQ_RESIDENTS {
                if n > 0 {
                    debug!("CBG {cbg}: {n} {}/{} GQ residents below threshold", band.code(), ty.code());
                }
                continue;
            }
            let gq = pop.push_place(PlaceKind::Gq { band, gq_type: ty }, Some(ci), n as usize);
            let jobs = match (band, ty) {
                (AgeBand::Adult18To64, GqType::CivilianNoninst) => Some(&plan.civilian_industries),
                (AgeBand::Adult18To64, GqType::Military) => Some(&plan.military_industries),
                _ => None,
            };
            let mut industries: Vec<Option<Industry>> = jobs
                .map(|j| {
                    Industry::ALL
                        .iter()
                        .flat_map(|&i| std::iter::repeat_n(Some(i), j[i.index()] as usize))
                        .collect()
                })
                .unwrap_or_default();
            industries.truncate(n as usize);
            industries.resize(n as usize, None);
            industries.shuffle(rng);
            let mix = races.get(&ci);
            for industry in industries {
                let ages = band.ages();
                let attrs = PersonAttrs {
                    age: rng.random_range(ages),
                    sex: if rng.random_bool(0.5) { Sex::Male } else { Sex::Female },
                    race: mix.map_or(Race::WhiteNh, |m| m[rng.random_range(0..m.len())]),
                    relationship: Relationship::NonRelative,
                    industry,
                    income: 0,
                    grade: None,
                    is_worker: industry.is_some(),
                };
                let pid = pop.push_person(Home::Gq(gq), Some(ci), Some(attrs));
                pop.places[gq].members.push(pid);
            }
        }
    }
    Ok(pop)
}

/// School choice for one student given the ranked schools' current loads.
///
/// Returns the chosen rank position and whether it overfills.
pub fn choose_school<R: Rng>(ranked_full: &[bool], rng: &mut R) -> Option<(usize, bool)> {
    if ranked_full.is_empty() {
        return None;
    }
    let open: Vec<usize> = (0..ranked_full.len()).filter(|&i| !ranked_full[i]).collect();
    let first = rng.random_bool(STUDENT_FIRST_CHOICE);
    if open.is_empty() {
        let k = if first || ranked_full.len() == 1 { 0 } else { 1 };
        Some((k, true))
    } else {
        let k = if first || open.len() == 1 { open[0] } else { open[1] };
        Some((k, false))
    }
}

/// Assign every household student to one of the five nearest schools
/// offering their grade, visiting students in random order.
pub fn assign_students<R: Rng>(pop: &mut Population, rankings: &SchoolRankings, rng: &mut R) {
    let mut students: Vec<PersonId> = pop
        .persons
        .iter()
        .filter(|p| matches!(p.home, Home::Household(_)) && p.grade().is_some())
        .map(|p| p.id)
        .collect();
    students.shuffle(rng);
    for pid in students {
        let grade = pop.persons[pid].grade().expect("filtered");
        let cbg = pop.persons[pid].home_cbg.expect("household member");
        let ranked: Vec<usize> = rankings
            .get(pop.cbg(cbg), grade)
            .iter()
            .map(|&s| pop.school_places[s])
            .collect();
        let full: Vec<bool> = ranked
            .iter()
            .map(|&pl| pop.places[pl].members.len() >= pop.places[pl].capacity)
            .collect();
        match choose_school(&full, rng) {
            None => pop.report.unassigned_students += 1,
            Some((k, over)) => {
                let place = ranked[k];
                if over {
                    pop.report.overfilled_schools.insert(place);
                }
                pop.places[place].members.push(pid);
                pop.persons[pid].school = Some(place);
            }
        }
    }
    if pop.report.unassigned_students > 0 {
        warn!("{} students had no school offering their grade", pop.report.unassigned_students);
    }
}

/// Split shuffled workers across destinations by integer counts.
pub fn split_workers<R: Rng>(mut workers: Vec<PersonId>, counts: &[u64], rng: &mut R) -> Vec<Vec<PersonId>> {
    workers.shuffle(rng);
    let mut it = workers.into_iter();
    counts
        .iter()
        .map(|&c| it.by_ref().take(c as usize).collect())
        .collect()
}

/// Send each employed resident to a work destination, conserving the
/// number of workers per (origin, industry) exactly.
pub fn assign_commutes<R: Rng>(pop: &mut Population, matrices: &BTreeMap<String, CommuteMatrix>, rng: &mut R) {
    let mut groups: BTreeMap<(CbgIdx, Industry), Vec<PersonId>> = BTreeMap::new();
    for p in &pop.persons {
        if let (Some(c), Some(i), false) = (p.home_cbg, p.industry, p.is_placeholder()) {
            if p.work_loc.is_none() {
                groups.entry((c, i)).or_default().push(p.id);
            }
        }
    }
    for ((origin, industry), workers) in groups {
        let n = workers.len() as u64;
        let m = matrices.get(pop.cbg(origin));
        // an industry absent from the census row follows the origin's overall flows
        let row: Option<Vec<f64>> = m.and_then(|m| {
            let own = m.row(industry);
            if own.iter().sum::<f64>() > 0.0 {
                Some(own.to_vec())
            } else {
                let all: Vec<f64> = (0..m.destinations.len())
                    .map(|d| m.cells.iter().map(|r| r[d]).sum())
                    .collect();
                (all.iter().sum::<f64>() > 0.0).then_some(all)
            }
        });
        let (dests, counts): (Vec<WorkLoc>, Vec<u64>) = match (m, row) {
            (Some(m), Some(row)) => {
                if (row.iter().sum::<f64>() - n as f64).abs() > 0.5 {
                    debug!(
                        "origin {} {industry}: matrix row {} vs {n} workers; rescaled",
                        pop.cbg(origin),
                        row.iter().sum::<f64>()
                    );
                }
                let dests = m
                    .destinations
                    .iter()
                    .map(|d| match pop.cbg_index.get(d) {
                        Some(&c) => WorkLoc::Cbg(c),
                        None => {
                            if d != OUTSIDE {
                                warn!("destination {d} is not a region CBG; treated as OUTSIDE");
                            }
                            WorkLoc::Outside
                        }
                    })
                    .collect();
                (dests, largest_remainder(&row, n))
            }
            _ => {
                warn!("origin {} has no commute row for {industry}; {n} workers sent OUTSIDE", pop.cbg(origin));
                pop.report.outside_fallbacks += n as usize;
                (vec![WorkLoc::Outside], vec![n])
            }
        };
        for (dest, ws) in dests.iter().zip(split_workers(workers, &counts, rng)) {
            for w in ws {
                pop.persons[w].work_loc = Some(*dest);
            }
        }
    }
}

/// Closest CBG centroid to a point, ties broken by id.
pub fn nearest_cbg(x: f64, y: f64, geo: &BTreeMap<String, GeoRecord>) -> Option<&str> {
    geo.values()
        .map(|g| ((g.x - x).hypot(g.y - y), g.cbg.as_str()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, c)| c)
}

/// Search tiers around a CBG: itself, the rest of its tract, the rest of
/// its county.
fn tiers(pop: &Population, center: CbgIdx, geo: &BTreeMap<String, GeoRecord>) -> [Vec<CbgIdx>; 3] {
    let Some(g) = geo.get(pop.cbg(center)) else {
        return [vec![center], vec![], vec![]];
    };
    let mut tract = Vec::new();
    let mut county = Vec::new();
    for (i, c) in pop.cbgs.iter().enumerate() {
        let i = i as CbgIdx;
        if i == center {
            continue;
        }
        let Some(o) = geo.get(c) else { continue };
        if o.tract() == g.tract() {
            tract.push(i);
        } else if o.county == g.county {
            county.push(i);
        }
    }
    [vec![center], tract, county]
}

/// Workers of one industry without a job yet, keyed by work CBG.
fn available_by_dest(pop: &Population, industry: Industry) -> BTreeMap<CbgIdx, Vec<PersonId>> {
    let mut out: BTreeMap<CbgIdx, Vec<PersonId>> = BTreeMap::new();
    for p in &pop.persons {
        if p.industry == Some(industry) && p.workplace.is_none() && !p.is_placeholder() {
            if let Some(WorkLoc::Cbg(c)) = p.work_loc {
                out.entry(c).or_default().push(p.id);
            }
        }
    }
    out
}

/// Draw up to `need` workers tier by tier; returns those drawn.
fn draw_by_tier<R: Rng>(
    pop: &Population,
    avail: &mut BTreeMap<CbgIdx, Vec<PersonId>>,
    tiers: &[Vec<CbgIdx>; 3],
    need: usize,
    exclude: &BTreeSet<PersonId>,
    rng: &mut R,
) -> Vec<PersonId> {
    let mut drawn = Vec::new();
    for tier in tiers {
        if drawn.len() >= need {
            break;
        }
        let mut cands: Vec<PersonId> = tier
            .iter()
            .filter_map(|c| avail.get(c))
            .flatten()
            .copied()
            .filter(|p| pop.persons[*p].workplace.is_none() && !exclude.contains(p))
            .collect();
        cands.sort_unstable();
        cands.shuffle(rng);
        cands.truncate(need - drawn.len());
        drawn.extend(cands);
    }
    let taken: BTreeSet<PersonId> = drawn.iter().copied().collect();
    for v in avail.values_mut() {
        v.retain(|p| !taken.contains(p));
    }
    drawn
}

/// Staff each school with education workers commuting to the school's
/// nearest CBG, then its tract, then its county.
pub fn assign_teachers<R: Rng>(pop: &mut Population, geo: &BTreeMap<String, GeoRecord>, rng: &mut R) {
    let mut avail = available_by_dest(pop, Industry::Edu);
    let none = BTreeSet::new();
    for k in 0..pop.school_places.len() {
        let place = pop.school_places[k];
        let PlaceKind::School { n_teachers, ref school_id, .. } = pop.places[place].kind else {
            unreachable!("school place");
        };
        let Some(cbg) = pop.places[place].cbg else {
            warn!("school {school_id} has no nearby CBG; no teachers");
            pop.report.teacher_deficit += n_teachers;
            continue;
        };
        let t = tiers(pop, cbg, geo);
        let drawn = draw_by_tier(pop, &mut avail, &t, n_teachers as usize, &none, rng);
        if (drawn.len() as u64) < n_teachers {
            warn!(
                "school {}: {} of {n_teachers} teachers found",
                school_id,
                drawn.len()
            );
            pop.report.teacher_deficit += n_teachers - drawn.len() as u64;
        }
        for &p in &drawn {
            pop.persons[p].workplace = Some(place);
        }
        pop.places[place].staff.extend(drawn);
    }
}

/// Staff for a GQ: a tenth of residents (institutional) or a fiftieth
/// (non-institutional), rounded half up.
pub fn gq_staff_count(ty: GqType, residents: usize) -> usize {
    if ty.is_institutional() {
        (residents + 5) / 10
    } else {
        (residents + 25) / 50
    }
}

/// Staff every GQ with public-administration workers commuting nearby.
pub fn assign_gq_staff<R: Rng>(pop: &mut Population, geo: &BTreeMap<String, GeoRecord>, rng: &mut R) {
    let mut avail = available_by_dest(pop, Industry::AdmMil);
    let gqs: Vec<usize> = pop
        .places
        .iter()
        .filter(|p| matches!(p.kind, PlaceKind::Gq { .. }))
        .map(|p| p.id)
        .collect();
    for gq in gqs {
        let PlaceKind::Gq { gq_type, .. } = pop.places[gq].kind else {
            unreachable!()
        };
        let need = gq_staff_count(gq_type, pop.places[gq].members.len());
        if need == 0 {
            continue;
        }
        let cbg = pop.places[gq].cbg.expect("GQs are located");
        let residents: BTreeSet<PersonId> = pop.places[gq].members.iter().copied().collect();
        let t = tiers(pop, cbg, geo);
        let drawn = draw_by_tier(pop, &mut avail, &t, need, &residents, rng);
        if drawn.len() < need {
            warn!("GQ {gq} in {}: {} of {need} staff found", pop.cbg(cbg), drawn.len());
            pop.report.staff_deficit += (need - drawn.len()) as u64;
        }
        for &p in &drawn {
            pop.persons[p].workplace = Some(gq);
        }
        pop.places[gq].staff.extend(drawn);
    }
}

/// Employer sizes `round(exp(N(mu, sigma)))`, at least 1, drawn until they
/// cover `jobs`.
pub fn draw_workplace_sizes<R: Rng>(jobs: usize, params: &LognormalParams, rng: &mut R) -> Vec<usize> {
    let normal = Normal::new(params.mu, params.sigma.max(0.0)).ok();
    let mut sizes = Vec::new();
    let mut total = 0;
    while total < jobs {
        let z = normal.as_ref().map_or(params.mu, |n| n.sample(rng));
        let s = z.exp().round().clamp(1.0, 1e9) as usize;
        sizes.push(s);
        total += s;
    }
    sizes
}

/// Create workplaces for one (destination, industry): resident workers and
/// `inbound` outside commuters fill randomly chosen slots; slots left over
/// become placeholder persons. Returns the new place ids.
pub fn generate_workplaces<R: Rng>(
    pop: &mut Population,
    dest: CbgIdx,
    industry: Industry,
    workers: Vec<PersonId>,
    inbound: usize,
    params: &LognormalParams,
    rng: &mut R,
) -> Vec<usize> {
    let sizes = draw_workplace_sizes(workers.len() + inbound, params, rng);
    let slots: usize = sizes.iter().sum();
    let mut labels: Vec<Option<PersonId>> = workers.into_iter().map(Some).collect();
    labels.resize(slots, None);
    labels.shuffle(rng);
    let mut it = labels.into_iter();
    let mut ids = Vec::with_capacity(sizes.len());
    for s in sizes {
        let place = pop.push_place(PlaceKind::Workplace { industry, outside: false }, Some(dest), s);
        for slot in it.by_ref().take(s) {
            let pid = match slot {
                Some(p) => p,
                None => {
                    pop.report.placeholders += 1;
                    let p = pop.push_person(Home::Placeholder, None, None);
                    pop.persons[p].industry = Some(industry);
                    pop.persons[p].work_loc = Some(WorkLoc::Cbg(dest));
                    p
                }
            };
            pop.persons[pid].workplace = Some(place);
            pop.places[place].members.push(pid);
        }
        ids.push(place);
    }
    ids
}

/// Outside-region commuters into each (destination, industry), split by
/// the destination's WAC industry mix.
pub fn inbound_commuters(od: &[OdRecord], wac: &WacIndex, pop: &Population) -> BTreeMap<(CbgIdx, Industry), usize> {
    let mut per_dest: BTreeMap<CbgIdx, f64> = BTreeMap::new();
    for r in od.iter().filter(|r| r.home == OUTSIDE) {
        if let Some(&c) = pop.cbg_index.get(&r.work) {
            *per_dest.entry(c).or_default() += r.count;
        }
    }
    let mut out = BTreeMap::new();
    for (c, n) in per_dest {
        let Some(mix) = wac.proportions(pop.cbg(c)) else {
            warn!("no WAC mix for {}; {n} inbound commuters dropped", pop.cbg(c));
            continue;
        };
        for (i, k) in largest_remainder(mix, n.round() as u64).into_iter().enumerate() {
            if k > 0 {
                out.insert((c, Industry::ALL[i]), k as usize);
            }
        }
    }
    out
}

/// Generate workplaces for every worker still without one. Residents
/// working outside the region get single-person placeholder workplaces.
pub fn build_workplaces<R: Rng>(
    pop: &mut Population,
    inbound: &BTreeMap<(CbgIdx, Industry), usize>,
    params: impl Fn(&str) -> LognormalParams,
    rng: &mut R,
) {
    let mut groups: BTreeMap<(CbgIdx, Industry), Vec<PersonId>> = inbound.keys().map(|&k| (k, Vec::new())).collect();
    let mut outside = Vec::new();
    for p in &pop.persons {
        if p.workplace.is_some() || p.is_placeholder() {
            continue;
        }
        match (p.industry, p.work_loc) {
            (Some(i), Some(WorkLoc::Cbg(c))) => groups.entry((c, i)).or_default().push(p.id),
            (Some(i), Some(WorkLoc::Outside)) => outside.push((p.id, i)),
            _ => {}
        }
    }
    for ((dest, industry), workers) in groups {
        let extra = inbound.get(&(dest, industry)).copied().unwrap_or(0);
        let params = params(pop.cbg(dest));
        generate_workplaces(pop, dest, industry, workers, extra, &params, rng);
    }
    for (pid, industry) in outside {
        let place = pop.push_place(PlaceKind::Workplace { industry, outside: true }, None, 1);
        pop.places[place].members.push(pid);
        pop.persons[pid].workplace = Some(place);
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_people(path: &Path, pop: &Population) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(
            f,
            "person_id,home_cbg,household_id,gq_id,age,sex,race,relationship,income,industry,grade,school_id,workplace_id,work_cbg,worker,placeholder_flag"
        )?;
        for p in &pop.persons {
            let (hh, gq) = match p.home {
                Home::Household(h) => (Some(h), None),
                Home::Gq(g) => (None, Some(g)),
                Home::Placeholder => (None, None),
            };
            let a = p.attrs.as_ref();
            let work = p.work_loc.map(|w| match w {
                WorkLoc::Cbg(c) => pop.cbg(c).to_string(),
                WorkLoc::Outside => OUTSIDE.to_string(),
            });
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.id,
                p.home_cbg.map_or(OUTSIDE, |c| pop.cbg(c)),
                opt(hh),
                opt(gq),
                opt(a.map(|a| a.age)),
                opt(a.map(|a| a.sex)),
                opt(a.map(|a| a.race)),
                opt(a.map(|a| a.relationship)),
                opt(a.map(|a| a.income)),
                opt(p.industry),
                opt(p.grade()),
                opt(p.school),
                opt(p.workplace),
                opt(work),
                opt(a.map(|a| u8::from(a.is_worker))),
                u8::from(p.is_placeholder())
            )?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

pub fn write_places(path: &Path, pop: &Population) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(
            f,
            "place_id,kind,cbg,capacity,n_members,n_staff,industry,gq_type,age_band,school_id,low_grade,high_grade,n_teachers,outside_flag"
        )?;
        for p in &pop.places {
            let cbg = p.cbg.map_or(OUTSIDE, |c| pop.cbg(c));
            let head = format!("{},{{}},{cbg},{},{},{}", p.id, p.capacity, p.members.len(), p.staff.len());
            let (kind, rest) = match &p.kind {
                PlaceKind::School {
                    school_id,
                    low,
                    high,
                    n_teachers,
                } => ("school", format!(",,,{school_id},{low},{high},{n_teachers},0")),
                PlaceKind::Workplace { industry, outside } => {
                    ("workplace", format!("{industry},,,,,,,{}", u8::from(*outside)))
                }
                PlaceKind::Gq { band, gq_type } => ("gq", format!(",{},{},,,,,0", gq_type.code(), band.code())),
            };
            writeln!(f, "{},{rest}", head.replacen("{}", kind, 1))?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

pub fn write_households(path: &Path, pop: &Population) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "household_id,cbg,source_id,size")?;
        for h in &pop.households {
            writeln!(f, "{},{},{},{}", h.id, pop.cbg(h.cbg), h.source, h.members.len())?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

impl Population {
    /// Sort place members and staff by person id so the population is
    /// independent of the order in which places were filled.
    pub fn canonicalize(&mut self) {
        for p in &mut self.places {
            p.members.sort_unstable();
            p.staff.sort_unstable();
        }
    }
}

/// Rebuild a canonical population from `people.csv`, `places.csv` and
/// `households.csv`. The placement report is not stored and comes back empty.
pub fn read_population(people: &Path, places: &Path, households: &Path) -> Result<Population> {
    let pt = Table::read(people)?;
    pt.require(&[
        "person_id",
        "home_cbg",
        "household_id",
        "gq_id",
        "age",
        "sex",
        "race",
        "relationship",
        "income",
        "industry",
        "grade",
        "school_id",
        "workplace_id",
        "work_cbg",
        "worker",
        "placeholder_flag",
    ])?;
    let lt = Table::read(places)?;
    lt.require(&[
        "place_id", "kind", "cbg", "capacity", "industry", "gq_type", "age_band", "school_id", "low_grade",
        "high_grade", "n_teachers", "outside_flag",
    ])?;
    let ht = Table::read(households)?;
    ht.require(&["household_id", "cbg", "source_id"])?;

    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut note = |c: Option<&str>| {
        if let Some(c) = c.filter(|c| *c != OUTSIDE) {
            names.insert(c.to_string());
        }
    };
    for r in pt.rows() {
        note(r.opt_str("home_cbg"));
        note(r.opt_str("work_cbg"));
    }
    for r in lt.rows() {
        note(r.opt_str("cbg"));
    }
    for r in ht.rows() {
        note(r.opt_str("cbg"));
    }
    let mut pop = Population::new(names);
    let idx = |pop: &Population, c: Option<&str>| c.and_then(|c| pop.cbg_index.get(c).copied());

    for r in ht.rows() {
        let id: usize = r.parse("household_id")?;
        if id != pop.households.len() {
            return Err(r.error("household_id", "household ids must be dense and ordered"));
        }
        let cbg = idx(&pop, r.opt_str("cbg")).ok_or_else(|| r.error("cbg", "household needs a CBG"))?;
        pop.households.push(Household {
            id,
            cbg,
            source: r.str("source_id")?.to_string(),
            members: Vec::new(),
        });
    }

    for r in lt.rows() {
        let id: usize = r.parse("place_id")?;
        if id != pop.places.len() {
            return Err(r.error("place_id", "place ids must be dense and ordered"));
        }
        let kind = match r.str("kind")? {
            "school" => PlaceKind::School {
                school_id: r.str("school_id")?.to_string(),
                low: r.parse("low_grade")?,
                high: r.parse("high_grade")?,
                n_teachers: r.parse("n_teachers")?,
            },
            "workplace" => PlaceKind::Workplace {
                industry: r.parse("industry")?,
                outside: r.flag("outside_flag")?,
            },
            "gq" => PlaceKind::Gq {
                band: r.parse("age_band")?,
                gq_type: r.parse("gq_type")?,
            },
            other => return Err(r.error("kind", format!("unknown place kind `{other}`"))),
        };
        if matches!(kind, PlaceKind::School { .. }) {
            pop.school_places.push(id);
        }
        let cbg = idx(&pop, r.opt_str("cbg"));
        pop.push_place(kind, cbg, r.parse("capacity")?);
    }

    for r in pt.rows() {
        let id: usize = r.parse("person_id")?;
        if id != pop.persons.len() {
            return Err(r.error("person_id", "person ids must be dense and ordered"));
        }
        let hh: Option<usize> = r.parse_opt("household_id")?;
        let gq: Option<usize> = r.parse_opt("gq_id")?;
        let home = match (hh, gq, r.flag("placeholder_flag")?) {
            (Some(h), None, false) if h < pop.households.len() => Home::Household(h),
            (None, Some(g), false) if g < pop.places.len() => Home::Gq(g),
            (None, None, true) => Home::Placeholder,
            _ => return Err(r.error("household_id", "inconsistent home columns")),
        };
        let industry: Option<Industry> = r.parse_opt("industry")?;
        let attrs = if home == Home::Placeholder {
            None
        } else {
            Some(PersonAttrs {
                age: r.parse("age")?,
                sex: r.parse("sex")?,
                race: r.parse("race")?,
                relationship: r.parse("relationship")?,
                industry,
                income: r.parse("income")?,
                grade: r.parse_opt("grade")?,
                is_worker: r.flag("worker")?,
            })
        };
        let home_cbg = idx(&pop, r.opt_str("home_cbg"));
        let pid = pop.push_person(home, home_cbg, attrs);
        let school: Option<usize> = r.parse_opt("school_id")?;
        let workplace: Option<usize> = r.parse_opt("workplace_id")?;
        for (col, p) in [("school_id", school), ("workplace_id", workplace)] {
            if p.is_some_and(|p| p >= pop.places.len()) {
                return Err(r.error(col, "unknown place"));
            }
        }
        let work_loc = match r.opt_str("work_cbg") {
            None => None,
            Some(OUTSIDE) => Some(WorkLoc::Outside),
            Some(c) => Some(WorkLoc::Cbg(pop.cbg_index[c])),
        };
        let person = &mut pop.persons[pid];
        person.industry = industry;
        person.school = school;
        person.workplace = workplace;
        person.work_loc = work_loc;
        match home {
            Home::Household(h) => pop.households[h].members.push(pid),
            Home::Gq(g) => pop.places[g].members.push(pid),
            Home::Placeholder => {}
        }
        if let Some(s) = school {
            pop.places[s].members.push(pid);
        }
        if let Some(w) = workplace {
            match pop.places[w].kind {
                PlaceKind::Workplace { .. } => pop.places[w].members.push(pid),
                _ => pop.places[w].staff.push(pid),
            }
        }
    }
    pop.report.placeholders = pop.persons.iter().filter(|p| p.is_placeholder()).count();
    Ok(pop)
}
