//! The gap taxonomy tree and the second-level label algebra.
//!
//! Categories are numbered the same way annotators and detectors refer to
//! them: `0` means "no gaps", `1`–`3` are the second-level categories that
//! labels are expressed in, and `5`–`14` are the leaves. Id `4` is reserved
//! for the unnumbered extrinsic grouping node.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label list is empty")]
    Empty,
    #[error("label {0} is outside 0-3")]
    OutOfRange(i64),
    #[error("label 0 (no gaps) cannot be combined with gap labels 1-3")]
    Exclusivity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown gap category id {0}")]
pub struct UnknownCategory(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    RootLevel,
    SecondLevel,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    None,
    Intrinsic,
    Extrinsic,
}

/// One node of the taxonomy tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GapCategory {
    pub id: u8,
    pub name: &'static str,
    /// `None` for nodes hanging directly off the virtual root.
    pub parent: Option<u8>,
    pub tier: Tier,
    pub branch: Branch,
    pub is_hallucination: bool,
}

const fn cat(
    id: u8,
    name: &'static str,
    parent: Option<u8>,
    tier: Tier,
    branch: Branch,
    is_hallucination: bool,
) -> GapCategory {
    GapCategory {
        id,
        name,
        parent,
        tier,
        branch,
        is_hallucination,
    }
}

/// Id of the internal extrinsic node that groups target mismatch and
/// citation content mismatch. It is not a category.
pub const EXTRINSIC_NODE: u8 = 4;

static CATEGORIES: [GapCategory; 14] = [
    cat(0, "no gaps", None, Tier::RootLevel, Branch::None, false),
    cat(
        1,
        "intrinsic gaps",
        None,
        Tier::SecondLevel,
        Branch::Intrinsic,
        true,
    ),
    cat(
        2,
        "target mismatch",
        Some(EXTRINSIC_NODE),
        Tier::SecondLevel,
        Branch::Extrinsic,
        false,
    ),
    cat(
        3,
        "citation content mismatch",
        Some(EXTRINSIC_NODE),
        Tier::SecondLevel,
        Branch::Extrinsic,
        true,
    ),
    cat(
        5,
        "redundancy",
        Some(1),
        Tier::Leaf,
        Branch::Intrinsic,
        true,
    ),
    cat(
        6,
        "citation format mismatch",
        Some(1),
        Tier::Leaf,
        Branch::Intrinsic,
        true,
    ),
    cat(
        7,
        "stylistic mismatch",
        Some(1),
        Tier::Leaf,
        Branch::Intrinsic,
        true,
    ),
    cat(
        8,
        "structural mismatch",
        Some(1),
        Tier::Leaf,
        Branch::Intrinsic,
        true,
    ),
    cat(
        9,
        "claim hallucination",
        Some(3),
        Tier::Leaf,
        Branch::Extrinsic,
        true,
    ),
    cat(
        10,
        "citation hallucination",
        Some(3),
        Tier::Leaf,
        Branch::Extrinsic,
        true,
    ),
    cat(
        11,
        "retrieval inaccuracy",
        Some(3),
        Tier::Leaf,
        Branch::Extrinsic,
        true,
    ),
    cat(
        12,
        "chain vs. parallel",
        Some(2),
        Tier::Leaf,
        Branch::Extrinsic,
        false,
    ),
    cat(
        13,
        "agree vs. disagree",
        Some(2),
        Tier::Leaf,
        Branch::Extrinsic,
        false,
    ),
    cat(
        14,
        "compound cite",
        Some(2),
        Tier::Leaf,
        Branch::Extrinsic,
        false,
    ),
];

static EXTRINSIC: GapCategory = cat(
    EXTRINSIC_NODE,
    "extrinsic gaps",
    None,
    Tier::RootLevel,
    Branch::Extrinsic,
    false,
);

/// The fourteen numbered categories in id order.
pub fn categories() -> &'static [GapCategory] {
    &CATEGORIES
}

/// All fifteen tree nodes: the numbered categories plus the extrinsic
/// grouping node.
pub fn tree_nodes() -> impl Iterator<Item = &'static GapCategory> {
    CATEGORIES.iter().chain(std::iter::once(&EXTRINSIC))
}

pub fn category_info(id: i64) -> Result<&'static GapCategory, UnknownCategory> {
    CATEGORIES
        .iter()
        .find(|c| i64::from(c.id) == id)
        .ok_or(UnknownCategory(id))
}

fn node(id: u8) -> &'static GapCategory {
    if id == EXTRINSIC_NODE {
        &EXTRINSIC
    } else {
        &CATEGORIES[CATEGORIES
            .iter()
            .position(|c| c.id == id)
            .expect("static tree")]
    }
}

/// Ancestors of `id`, nearest first. The last entry hangs off the virtual
/// root. The extrinsic grouping node appears for G2, G3 and their leaves.
pub fn ancestors(id: i64) -> Result<Vec<&'static GapCategory>, UnknownCategory> {
    let mut out = Vec::new();
    let mut cur = category_info(id)?;
    while let Some(parent) = cur.parent {
        cur = node(parent);
        out.push(cur);
    }
    Ok(out)
}

/// A second-level label, one coordinate of a [`GapLabelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    NoGaps = 0,
    Intrinsic = 1,
    TargetMismatch = 2,
    CitationContent = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::NoGaps,
        Label::Intrinsic,
        Label::TargetMismatch,
        Label::CitationContent,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    /// Short column name such as `G2`.
    pub fn code(self) -> &'static str {
        ["G0", "G1", "G2", "G3"][self.index()]
    }

    pub fn name(self) -> &'static str {
        CATEGORIES[self.index()].name
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Validated multi-hot vector over (G0, G1, G2, G3).
///
/// At least one bit is set and G0 never co-occurs with a gap label. The
/// canonical serialized form is a sorted integer array such as `[1,3]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct GapLabelSet {
    bits: u8,
}

impl GapLabelSet {
    pub const NO_GAPS: GapLabelSet = GapLabelSet { bits: 0b0001 };

    pub fn parse(raw: &[i64]) -> Result<Self, LabelError> {
        if raw.is_empty() {
            return Err(LabelError::Empty);
        }
        let mut bits = 0u8;
        for &v in raw {
            if !(0..=3).contains(&v) {
                return Err(LabelError::OutOfRange(v));
            }
            bits |= 1 << v;
        }
        Self::from_bits(bits)
    }

    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Result<Self, LabelError> {
        let bits = labels.into_iter().fold(0u8, |acc, l| acc | 1 << l.index());
        Self::from_bits(bits)
    }

    /// Builds a set from the low four bits, index 0 being G0.
    pub fn from_bits(bits: u8) -> Result<Self, LabelError> {
        if bits & !0b1111 != 0 {
            return Err(LabelError::OutOfRange(i64::from(7 - bits.leading_zeros())));
        }
        if bits == 0 {
            return Err(LabelError::Empty);
        }
        if bits & 1 != 0 && bits != 1 {
            return Err(LabelError::Exclusivity);
        }
        Ok(GapLabelSet { bits })
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn contains(self, label: Label) -> bool {
        self.bits & (1 << label.index()) != 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn labels(self) -> impl Iterator<Item = Label> {
        Label::ALL.into_iter().filter(move |l| self.contains(*l))
    }

    pub fn to_vec(self) -> Vec<u8> {
        self.labels().map(|l| l.index() as u8).collect()
    }

    /// 0/1 coordinates in (G0, G1, G2, G3) order.
    pub fn as_vector(self) -> [u8; 4] {
        let mut v = [0u8; 4];
        for l in self.labels() {
            v[l.index()] = 1;
        }
        v
    }

    pub fn intersection_len(self, other: GapLabelSet) -> usize {
        (self.bits & other.bits).count_ones() as usize
    }

    pub fn has_hallucination(self) -> bool {
        self.contains(Label::Intrinsic) || self.contains(Label::CitationContent)
    }

    pub fn has_gap(self) -> bool {
        !self.contains(Label::NoGaps)
    }

    /// Every valid set: `{G0}` plus the seven non-empty subsets of {G1,G2,G3}.
    pub fn all_valid() -> Vec<GapLabelSet> {
        (1u8..16)
            .filter_map(|b| GapLabelSet::from_bits(b).ok())
            .collect()
    }
}

/// Parses a raw integer label list into a set, collapsing duplicates.
pub fn parse_label_list(raw: &[i64]) -> Result<GapLabelSet, LabelError> {
    GapLabelSet::parse(raw)
}

/// A generation is acceptable when it has no gaps or only target mismatch.
pub fn is_acceptable(labels: GapLabelSet) -> bool {
    !labels.has_hallucination()
}

impl fmt::Debug for GapLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.labels()).finish()
    }
}

impl fmt::Display for GapLabelSet {
    /// Python-list rendering, e.g. `[1, 3]`, as used inside prompts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, l) in self.labels().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", l.index())?;
        }
        f.write_str("]")
    }
}

impl Serialize for GapLabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GapLabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<i64>::deserialize(deserializer)?;
        GapLabelSet::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// One value per second-level label, serialized as a `G0`..`G3` keyed map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerLabel<T> {
    #[serde(rename = "G0")]
    pub g0: T,
    #[serde(rename = "G1")]
    pub g1: T,
    #[serde(rename = "G2")]
    pub g2: T,
    #[serde(rename = "G3")]
    pub g3: T,
}

impl<T> PerLabel<T> {
    pub fn from_fn(mut f: impl FnMut(Label) -> T) -> Self {
        PerLabel {
            g0: f(Label::NoGaps),
            g1: f(Label::Intrinsic),
            g2: f(Label::TargetMismatch),
            g3: f(Label::CitationContent),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &T)> {
        Label::ALL
            .into_iter()
            .zip([&self.g0, &self.g1, &self.g2, &self.g3])
    }
}

impl<T> std::ops::Index<Label> for PerLabel<T> {
    type Output = T;

    fn index(&self, l: Label) -> &T {
        match l {
            Label::NoGaps => &self.g0,
            Label::Intrinsic => &self.g1,
            Label::TargetMismatch => &self.g2,
            Label::CitationContent => &self.g3,
        }
    }
}

impl<T> std::ops::IndexMut<Label> for PerLabel<T> {
    fn index_mut(&mut self, l: Label) -> &mut T {
        match l {
            Label::NoGaps => &mut self.g0,
            Label::Intrinsic => &mut self.g1,
            Label::TargetMismatch => &mut self.g2,
            Label::CitationContent => &mut self.g3,
        }
    }
}
