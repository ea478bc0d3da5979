use serde::{Deserialize, Serialize};

/// Colony type as adjudicated by ground truth or an expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColonyClass {
    Bacteria,
    Mold,
}

impl ColonyClass {
    pub const ALL: [ColonyClass; 2] = [ColonyClass::Bacteria, ColonyClass::Mold];

    pub fn index(self) -> usize {
        match self {
            ColonyClass::Bacteria => 0,
            ColonyClass::Mold => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColonyClass::Bacteria => "bacteria",
            ColonyClass::Mold => "mold",
        }
    }
}

/// Class carried by a detection box; `Unknown` until a classifier has run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxClass {
    Bacteria,
    Mold,
    #[default]
    Unknown,
}

impl From<ColonyClass> for BoxClass {
    fn from(c: ColonyClass) -> Self {
        match c {
            ColonyClass::Bacteria => BoxClass::Bacteria,
            ColonyClass::Mold => BoxClass::Mold,
        }
    }
}

/// Per-class tallies, as exported and as entered by reviewers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub bacteria: u32,
    pub mold: u32,
}

impl ClassCounts {
    pub fn total(&self) -> u32 {
        self.bacteria + self.mold
    }

    pub fn add(&mut self, class: BoxClass) {
        match class {
            BoxClass::Bacteria => self.bacteria += 1,
            BoxClass::Mold => self.mold += 1,
            BoxClass::Unknown => {}
        }
    }

    /// Majority class, `None` when empty or tied.
    pub fn dominant(&self) -> Option<ColonyClass> {
        use std::cmp::Ordering::*;
        match self.bacteria.cmp(&self.mold) {
            Greater => Some(ColonyClass::Bacteria),
            Less => Some(ColonyClass::Mold),
            Equal => None,
        }
    }
}
