//! Domain records shared by the simulator, the ranker and the metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary sensitive attribute of an item. `Subgroup` is the audited group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    NotSubgroup = 0,
    Subgroup = 1,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::NotSubgroup, Group::Subgroup];

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Group::NotSubgroup),
            1 => Ok(Group::Subgroup),
            other => Err(Error::invalid(format!("group must be 0 or 1, got {other}"))),
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Group {
        match self {
            Group::NotSubgroup => Group::Subgroup,
            Group::Subgroup => Group::NotSubgroup,
        }
    }

    /// `s` as a real number, for residual arithmetic.
    pub fn value(self) -> f64 {
        f64::from(self.bit())
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.bit()
    }
}

impl TryFrom<u8> for Group {
    type Error = Error;
    fn try_from(bit: u8) -> Result<Self> {
        Group::from_bit(bit)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::NotSubgroup => f.write_str("not_subgroup"),
            Group::Subgroup => f.write_str("subgroup"),
        }
    }
}

/// One recommendation request: user features plus context features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: u64,
    pub user_features: Vec<f64>,
    pub context_features: Vec<f64>,
}

impl Query {
    pub fn feature_len(&self) -> usize {
        self.user_features.len() + self.context_features.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: u64,
    pub features: Vec<f64>,
    pub group: Group,
}

/// A logged (query, item) impression with its click and post-click engagement.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub query: Query,
    pub item_id: u64,
    pub clicked: bool,
    pub engagement: f64,
}

impl Interaction {
    pub fn new(query: Query, item_id: u64, clicked: bool, engagement: f64) -> Result<Self> {
        let it = Interaction {
            query,
            item_id,
            clicked,
            engagement,
        };
        it.validate()?;
        Ok(it)
    }

    pub fn label(&self) -> f64 {
        if self.clicked {
            1.0
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.engagement.is_finite() || self.engagement < 0.0 {
            return Err(Error::invalid(format!(
                "engagement must be finite and nonnegative, got {}",
                self.engagement
            )));
        }
        if !self.clicked && self.engagement != 0.0 {
            return Err(Error::invalid(format!(
                "unclicked impression of item {} in query {} carries engagement {}",
                self.item_id, self.query.query_id, self.engagement
            )));
        }
        Ok(())
    }
}

/// Which stored member of a pair a field refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

pub type ClickedSide = Side;

/// One recorded trial of the randomized pair experiment: two candidates for
/// the same query were shown in slots two and three, and exactly one was
/// clicked.
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservation {
    pub query: Query,
    pub item_a: u64,
    pub item_b: u64,
    pub clicked: Side,
    pub engagement: f64,
    pub group_a: Group,
    pub group_b: Group,
    /// The member shown in slot two.
    pub slate_order: Side,
}

impl PairObservation {
    pub fn validate(&self) -> Result<()> {
        if self.item_a == self.item_b {
            return Err(Error::invalid(format!(
                "pair in query {} repeats item {}",
                self.query.query_id, self.item_a
            )));
        }
        if !self.engagement.is_finite() || self.engagement < 0.0 {
            return Err(Error::invalid(format!(
                "engagement must be finite and nonnegative, got {}",
                self.engagement
            )));
        }
        Ok(())
    }

    pub fn item(&self, side: Side) -> u64 {
        match side {
            Side::A => self.item_a,
            Side::B => self.item_b,
        }
    }

    pub fn group(&self, side: Side) -> Group {
        match side {
            Side::A => self.group_a,
            Side::B => self.group_b,
        }
    }

    pub fn clicked_item(&self) -> u64 {
        self.item(self.clicked)
    }

    pub fn unclicked_item(&self) -> u64 {
        self.item(self.clicked.flip())
    }

    pub fn clicked_group(&self) -> Group {
        self.group(self.clicked)
    }

    pub fn unclicked_group(&self) -> Group {
        self.group(self.clicked.flip())
    }

    pub fn is_intergroup(&self) -> bool {
        self.group_a != self.group_b
    }

    /// The same observation with the storage order of the two items exchanged.
    pub fn swapped(&self) -> PairObservation {
        PairObservation {
            query: self.query.clone(),
            item_a: self.item_b,
            item_b: self.item_a,
            clicked: self.clicked.flip(),
            engagement: self.engagement,
            group_a: self.group_b,
            group_b: self.group_a,
            slate_order: self.slate_order.flip(),
        }
    }
}

/// Pointwise training log `D`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new(records: Vec<Interaction>) -> Self {
        InteractionLog { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.records.iter().try_for_each(Interaction::validate)
    }

    pub fn click_count(&self) -> usize {
        self.records.iter().filter(|r| r.clicked).count()
    }
}

/// Pair-experiment dataset `P`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairDataset {
    pub records: Vec<PairObservation>,
}

impl PairDataset {
    pub fn new(records: Vec<PairObservation>) -> Self {
        PairDataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.records.iter().try_for_each(PairObservation::validate)
    }

    /// Number of records whose clicked item belongs to `group`.
    pub fn clicked_count(&self, group: Group) -> usize {
        self.records.iter().filter(|r| r.clicked_group() == group).count()
    }
}
