use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};

/// Attack taxonomy code. `0` is bona fide, `1..=7` are the presentation attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AttackType(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackFamily {
    Genuine,
    Print,
    Replay,
    PaperMask,
}

impl AttackType {
    pub const GENUINE: AttackType = AttackType(0);
    pub const MAX_CODE: u8 = 7;

    pub fn new(code: u8) -> Result<Self> {
        if code > Self::MAX_CODE {
            return Err(PadError::Manifest(format!("attack code {code} outside 0..=7")));
        }
        Ok(Self(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn is_genuine(self) -> bool {
        self.0 == 0
    }

    pub fn label(self) -> Label {
        if self.is_genuine() {
            Label::Genuine
        } else {
            Label::Attack
        }
    }

    pub fn family(self) -> AttackFamily {
        match self.0 {
            0 => AttackFamily::Genuine,
            1 | 2 => AttackFamily::Print,
            3 | 4 => AttackFamily::Replay,
            _ => AttackFamily::PaperMask,
        }
    }

    pub fn description(self) -> &'static str {
        match self.0 {
            0 => "Genuine (bona fide)",
            1 => "Still printed paper",
            2 => "Quivering printed paper",
            3 => "Video which records a Lenovo LCD display",
            4 => "Video which records a Mac LCD display",
            5 => "Paper mask with two eyes and mouth cropped out",
            6 => "Paper mask without cropping",
            _ => "Paper mask with the upper part cut in the middle",
        }
    }

    /// All attack codes (genuine excluded).
    pub fn all_attacks() -> impl Iterator<Item = AttackType> {
        (1..=Self::MAX_CODE).map(AttackType)
    }
}

impl TryFrom<u8> for AttackType {
    type Error = PadError;
    fn try_from(code: u8) -> Result<Self> {
        AttackType::new(code)
    }
}

impl From<AttackType> for u8 {
    fn from(a: AttackType) -> u8 {
        a.0
    }
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    Attack,
}

impl Label {
    /// Binary head index: genuine = 0, attack = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Genuine => 0,
            Label::Attack => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Crop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    RoseYoutu,
    Nuaa,
    ReplayAttack,
    Synthetic,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = PadError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(PadError::Manifest(format!(
                        concat!("invalid ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Label { Genuine => "genuine", Attack => "attack" });
text_enum!(Variant { Full => "full", Crop => "crop" });
text_enum!(Split { Train => "train", Test => "test" });
text_enum!(DatasetName {
    RoseYoutu => "rose_youtu",
    Nuaa => "nuaa",
    ReplayAttack => "replay_attack",
    Synthetic => "synthetic",
});

/// One image instance with its provenance and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: String,
    pub subject_id: u32,
    pub video_id: String,
    pub frame_index: u32,
    pub label: Label,
    pub attack_type: AttackType,
    pub variant: Variant,
    pub split: Split,
}

impl SampleRecord {
    /// Pairing key shared by a full frame and its face crop.
    pub fn key(&self) -> (u32, &str, u32) {
        (self.subject_id, self.video_id.as_str(), self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: DatasetName,
    pub records: Vec<SampleRecord>,
    pub attack_codes_present: BTreeSet<u8>,
}

impl DatasetManifest {
    pub fn new(name: DatasetName, records: Vec<SampleRecord>) -> Self {
        let attack_codes_present = records.iter().map(|r| r.attack_type.code()).collect();
        Self { name, records, attack_codes_present }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn subjects(&self, split: Split) -> BTreeSet<u32> {
        self.split(split).map(|r| r.subject_id).collect()
    }

    /// Checks the record-level and manifest-level invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if (r.label == Label::Genuine) != r.attack_type.is_genuine() {
                return Err(PadError::Manifest(format!(
                    "{}: label {} inconsistent with attack code {}",
                    r.path, r.label, r.attack_type
                )));
            }
            if !self.attack_codes_present.contains(&r.attack_type.code()) {
                return Err(PadError::Manifest(format!(
                    "{}: attack code {} not listed as present",
                    r.path, r.attack_type
                )));
            }
            if !seen.insert((r.video_id.as_str(), r.variant, r.frame_index)) {
                return Err(PadError::Manifest(format!(
                    "duplicate frame {} in video {} ({})",
                    r.frame_index, r.video_id, r.variant
                )));
            }
        }
        let train = self.subjects(Split::Train);
        let test = self.subjects(Split::Test);
        if let Some(s) = train.intersection(&test).next() {
            return Err(PadError::Manifest(format!("subject {s} appears in both train and test")));
        }
        Ok(())
    }
}
