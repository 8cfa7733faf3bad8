//! Person and household attribute vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Industry groups recoded from the census employment tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Industry {
    #[serde(rename = "AGR_EXT")]
    AgrExt,
    #[serde(rename = "CON")]
    Con,
    #[serde(rename = "MFG")]
    Mfg,
    #[serde(rename = "WHL")]
    Whl,
    #[serde(rename = "RET")]
    Ret,
    #[serde(rename = "TRN_UTL")]
    TrnUtl,
    #[serde(rename = "INF")]
    Inf,
    #[serde(rename = "FIN")]
    Fin,
    #[serde(rename = "PRF")]
    Prf,
    #[serde(rename = "EDU")]
    Edu,
    #[serde(rename = "MED")]
    Med,
    #[serde(rename = "ENT_art")]
    EntArt,
    #[serde(rename = "ENT_food")]
    EntFood,
    #[serde(rename = "SRV")]
    Srv,
    #[serde(rename = "ADM_MIL")]
    AdmMil,
}

impl Industry {
    pub const COUNT: usize = 15;

    pub const ALL: [Industry; 15] = [
        Industry::AgrExt,
        Industry::Con,
        Industry::Mfg,
        Industry::Whl,
        Industry::Ret,
        Industry::TrnUtl,
        Industry::Inf,
        Industry::Fin,
        Industry::Prf,
        Industry::Edu,
        Industry::Med,
        Industry::EntArt,
        Industry::EntFood,
        Industry::Srv,
        Industry::AdmMil,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Industry::AgrExt => "AGR_EXT",
            Industry::Con => "CON",
            Industry::Mfg => "MFG",
            Industry::Whl => "WHL",
            Industry::Ret => "RET",
            Industry::TrnUtl => "TRN_UTL",
            Industry::Inf => "INF",
            Industry::Fin => "FIN",
            Industry::Prf => "PRF",
            Industry::Edu => "EDU",
            Industry::Med => "MED",
            Industry::EntArt => "ENT_art",
            Industry::EntFood => "ENT_food",
            Industry::Srv => "SRV",
            Industry::AdmMil => "ADM_MIL",
        }
    }
}

impl fmt::Display for Industry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Industry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Industry::ALL
            .iter()
            .copied()
            .find(|i| i.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown industry `{s}`"))
    }
}

/// School grade level, PK through 12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grade(u8);

impl Grade {
    pub const PK: Grade = Grade(0);
    pub const KG: Grade = Grade(1);
    pub const TWELFTH: Grade = Grade(13);
    pub const COUNT: usize = 14;

    pub fn from_level(level: u8) -> Option<Grade> {
        (level <= 13).then_some(Grade(level))
    }

    /// Grade 1..=12 as a school year number.
    pub fn year(n: u8) -> Option<Grade> {
        (1..=12).contains(&n).then_some(Grade(n + 1))
    }

    /// Ordinal 0 (PK) ..= 13 (grade 12).
    pub fn level(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Grade> {
        (0..=13).map(Grade)
    }

    /// Customary grade for a child of the given age (PK at 4, KG at 5).
    pub fn typical_for_age(age: u8) -> Option<Grade> {
        match age {
            4 => Some(Grade::PK),
            5 => Some(Grade::KG),
            6..=17 => Grade::year(age - 5),
            _ => None,
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("PK"),
            1 => f.write_str("KG"),
            n => write!(f, "{}", n - 1),
        }
    }
}

impl FromStr for Grade {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "PK" | "-1" => Ok(Grade::PK),
            "KG" | "K" | "0" => Ok(Grade::KG),
            other => other
                .parse::<u8>()
                .ok()
                .and_then(Grade::year)
                .ok_or_else(|| format!("unknown grade `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" | "1" => Ok(Sex::Male),
            "F" | "f" | "2" => Ok(Sex::Female),
            _ => Err(format!("unknown sex `{s}`")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "M",
            Sex::Female => "F",
        })
    }
}

/// Race/ethnicity category. Carried through, not analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Race {
    WhiteNh,
    Black,
    Hispanic,
    Asian,
    Other,
}

impl Race {
    pub const ALL: [Race; 5] = [Race::WhiteNh, Race::Black, Race::Hispanic, Race::Asian, Race::Other];

    pub fn code(self) -> &'static str {
        match self {
            Race::WhiteNh => "white_nh",
            Race::Black => "black",
            Race::Hispanic => "hispanic",
            Race::Asian => "asian",
            Race::Other => "other",
        }
    }
}

impl FromStr for Race {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Race::ALL
            .iter()
            .copied()
            .find(|r| r.code() == s.trim())
            .ok_or_else(|| format!("unknown race/ethnicity `{s}`"))
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Relationship to the householder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relationship {
    Householder,
    Spouse,
    Partner,
    Child,
    Grandchild,
    Parent,
    OtherRelative,
    NonRelative,
}

impl Relationship {
    pub const ALL: [Relationship; 8] = [
        Relationship::Householder,
        Relationship::Spouse,
        Relationship::Partner,
        Relationship::Child,
        Relationship::Grandchild,
        Relationship::Parent,
        Relationship::OtherRelative,
        Relationship::NonRelative,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Relationship::Householder => "householder",
            Relationship::Spouse => "spouse",
            Relationship::Partner => "partner",
            Relationship::Child => "child",
            Relationship::Grandchild => "grandchild",
            Relationship::Parent => "parent",
            Relationship::OtherRelative => "other_relative",
            Relationship::NonRelative => "nonrelative",
        }
    }

    /// Related to the householder by blood, marriage or adoption.
    pub fn is_relative(self) -> bool {
        matches!(
            self,
            Relationship::Spouse
                | Relationship::Child
                | Relationship::Grandchild
                | Relationship::Parent
                | Relationship::OtherRelative
        )
    }
}

impl FromStr for Relationship {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relationship::ALL
            .iter()
            .copied()
            .find(|r| r.code() == s.trim())
            .ok_or_else(|| format!("unknown relationship `{s}`"))
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Attributes of one microdata person.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonAttrs {
    pub age: u8,
    pub sex: Sex,
    pub race: Race,
    pub relationship: Relationship,
    /// `None` means not employed.
    pub industry: Option<Industry>,
    /// Annual income of the person's household, in dollars.
    pub income: i64,
    pub grade: Option<Grade>,
    pub is_worker: bool,
}

impl PersonAttrs {
    pub fn employed(&self) -> bool {
        self.industry.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_text_round_trip() {
        for g in Grade::all() {
            assert_eq!(g.to_string().parse::<Grade>().unwrap(), g);
        }
        assert_eq!("K".parse::<Grade>().unwrap(), Grade::KG);
        assert!("13".parse::<Grade>().is_err());
    }

    #[test]
    fn industry_codes_parse() {
        for i in Industry::ALL {
            assert_eq!(i.code().parse::<Industry>().unwrap(), i);
            assert_eq!(Industry::ALL[i.index()], i);
        }
    }

    #[test]
    fn typical_grade() {
        assert_eq!(Grade::typical_for_age(4), Some(Grade::PK));
        assert_eq!(Grade::typical_for_age(17).unwrap().to_string(), "12");
        assert_eq!(Grade::typical_for_age(18), None);
    }
}
