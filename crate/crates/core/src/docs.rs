//! Dense document ordinals shared by every engine of an app.
//!
//! Ordinals are assigned in ascending `doc_id` order, so sorting by ordinal is
//! the same as the `doc_id` tie-break used throughout.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

#[derive(Debug, Clone, Default)]
pub struct DocTable {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl DocTable {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort_unstable();
        ids.dedup();
        let lookup = ids.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Self { ids, lookup }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.lookup.get(doc_id).copied()
    }

    pub fn id(&self, ordinal: u32) -> &str {
        &self.ids[ordinal as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Builds a set from doc ids, ignoring unknown ones.
    pub fn set_of<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> DocSet {
        DocSet::from_unsorted(self.len(), ids.into_iter().filter_map(|id| self.ordinal(id)).collect())
    }
}

/// A set of document ordinals: sorted members plus a membership bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocSet {
    members: Vec<u32>,
    bits: FixedBitSet,
}

impl DocSet {
    /// `members` must be sorted ascending and duplicate-free.
    pub fn from_sorted(universe: usize, members: Vec<u32>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        let mut bits = FixedBitSet::with_capacity(universe);
        for &m in &members {
            bits.insert(m as usize);
        }
        Self { members, bits }
    }

    pub fn from_unsorted(universe: usize, mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self::from_sorted(universe, members)
    }

    pub fn full(universe: usize) -> Self {
        Self::from_sorted(universe, (0..universe as u32).collect())
    }

    pub fn contains(&self, ordinal: u32) -> bool {
        self.bits.contains(ordinal as usize)
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn into_members(self) -> Vec<u32> {
        self.members
    }
}
