//! Shared data model: the sparse ratings matrix, sensitive-attribute schema,
//! per-user attribute assignments, and demographic group partitions.
//!
//! All types are immutable after construction and safe to share across
//! threads. User and item identifiers are opaque strings mapped to dense
//! indices at build time; the mapping tables stay part of the model so
//! reports can speak in original ids.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate rating for user `{user}`, item `{item}`")]
    DuplicateRating { user: String, item: String },
    #[error("rating {value} for user `{user}`, item `{item}` outside ]0, {max_raw}]")]
    RatingOutOfRange {
        user: String,
        item: String,
        value: f64,
        max_raw: f64,
    },
    #[error("max raw rating must be positive, got {0}")]
    InvalidMaxRaw(f64),
    #[error("ratings matrix has no entries")]
    EmptyMatrix,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown class `{class}` for attribute `{attribute}`")]
    UnknownClass { attribute: String, class: String },
    #[error("duplicate class `{class}` declared for attribute `{attribute}`")]
    DuplicateClass { attribute: String, class: String },
    #[error("attribute schema must declare at least one attribute")]
    EmptySchema,
    #[error("partition requires at least one key attribute")]
    NoKeyAttributes,
    #[error("duplicate user id `{0}`")]
    DuplicateUser(String),
}

/// Dense index of a user inside one [`RatingsMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserIdx(pub u32);

/// Dense index of an item inside one [`RatingsMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemIdx(pub u32);

/// Bidirectional id <-> dense index map. Indices are assigned in first-seen
/// order, which makes construction deterministic for a fixed input order.
#[derive(Debug, Clone, Default)]
pub(crate) struct IdIndex {
    names: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdIndex {
    pub fn get_or_insert(&mut self, id: &str) -> u32 {
        if let Some(&ix) = self.lookup.get(id) {
            return ix;
        }
        let ix = self.names.len() as u32;
        self.names.push(id.to_owned());
        self.lookup.insert(id.to_owned(), ix);
        ix
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn name(&self, ix: u32) -> &str {
        &self.names[ix as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }
}

/// Sparse user x item matrix of normalized ratings in ]0, 1].
///
/// Stored twice, row-major and column-major, so both per-user and per-item
/// scans are cache-friendly. `max_raw` is the normalization divisor: every
/// stored value is `raw / max_raw` exactly.
#[derive(Debug, Clone)]
pub struct RatingsMatrix {
    users: IdIndex,
    items: IdIndex,
    by_user: Vec<Vec<(ItemIdx, f64)>>,
    by_item: Vec<Vec<(UserIdx, f64)>>,
    max_raw: f64,
    delta_r: f64,
    n_entries: usize,
}

impl RatingsMatrix {
    /// Builds a matrix from raw (unnormalized) entries. Ratings must lie in
    /// ]0, max_raw]; at most one entry per (user, item) pair.
    pub fn from_raw_entries<I, U, T>(entries: I, max_raw: f64) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        if !(max_raw > 0.0) {
            return Err(ModelError::InvalidMaxRaw(max_raw));
        }
        let mut users = IdIndex::default();
        let mut items = IdIndex::default();
        let mut by_user: Vec<Vec<(ItemIdx, f64)>> = Vec::new();
        let mut n_entries = 0usize;
        for (user, item, raw) in entries {
            let (user, item) = (user.as_ref(), item.as_ref());
            if !(raw > 0.0 && raw <= max_raw) {
                return Err(ModelError::RatingOutOfRange {
                    user: user.to_owned(),
                    item: item.to_owned(),
                    value: raw,
                    max_raw,
                });
            }
            let u = users.get_or_insert(user) as usize;
            let i = items.get_or_insert(item);
            if by_user.len() <= u {
                by_user.resize_with(u + 1, Vec::new);
            }
            if by_user[u].iter().any(|&(ix, _)| ix.0 == i) {
                return Err(ModelError::DuplicateRating {
                    user: user.to_owned(),
                    item: item.to_owned(),
                });
            }
            by_user[u].push((ItemIdx(i), raw / max_raw));
            n_entries += 1;
        }
        if n_entries == 0 {
            return Err(ModelError::EmptyMatrix);
        }
        Ok(Self::assemble(users, items, by_user, max_raw, n_entries))
    }

    fn assemble(
        users: IdIndex,
        items: IdIndex,
        mut by_user: Vec<Vec<(ItemIdx, f64)>>,
        max_raw: f64,
        n_entries: usize,
    ) -> Self {
        by_user.resize_with(users.len(), Vec::new);
        let mut by_item: Vec<Vec<(UserIdx, f64)>> = vec![Vec::new(); items.len()];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (u, row) in by_user.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(ix, _)| ix);
            for &(i, r) in row.iter() {
                by_item[i.0 as usize].push((UserIdx(u as u32), r));
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        // by_item rater lists come out sorted by user index already.
        let delta_r = if n_entries == 0 { 0.0 } else { hi - lo };
        Self {
            users,
            items,
            by_user,
            by_item,
            max_raw,
            delta_r,
            n_entries,
        }
    }

    /// Copy of this matrix with extra users appended (attack injection).
    /// New ratings are already-normalized values over the existing item
    /// universe; the original entries are shared untouched.
    pub fn with_additional_users(
        &self,
        additions: &[(String, Vec<(ItemIdx, f64)>)],
    ) -> Result<Self, ModelError> {
        let mut users = self.users.clone();
        let mut by_user = self.by_user.clone();
        let mut n_entries = self.n_entries;
        for (id, ratings) in additions {
            if users.get(id).is_some() {
                return Err(ModelError::DuplicateUser(id.clone()));
            }
            let u = users.get_or_insert(id);
            debug_assert_eq!(u as usize, by_user.len());
            let mut row = ratings.clone();
            row.sort_unstable_by_key(|&(ix, _)| ix);
            for win in row.windows(2) {
                if win[0].0 == win[1].0 {
                    return Err(ModelError::DuplicateRating {
                        user: id.clone(),
                        item: self.items.name(win[0].0 .0).to_owned(),
                    });
                }
            }
            for &(i, r) in &row {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(ModelError::RatingOutOfRange {
                        user: id.clone(),
                        item: self.items.name(i.0).to_owned(),
                        value: r,
                        max_raw: 1.0,
                    });
                }
            }
            n_entries += row.len();
            by_user.push(row);
        }
        Ok(Self::assemble(
            users,
            self.items.clone(),
            by_user,
            self.max_raw,
            n_entries,
        ))
    }

    /// Splits the entry set by a predicate over entry ordinals (user-major,
    /// item-ascending order). Both halves keep the full user/item universe.
    pub(crate) fn partition_entries<F>(&self, mut in_first: F) -> (Self, Self)
    where
        F: FnMut(usize) -> bool,
    {
        let mut first: Vec<Vec<(ItemIdx, f64)>> = vec![Vec::new(); self.users.len()];
        let mut second: Vec<Vec<(ItemIdx, f64)>> = vec![Vec::new(); self.users.len()];
        let mut n_first = 0usize;
        let mut ordinal = 0usize;
        for (u, row) in self.by_user.iter().enumerate() {
            for &(i, r) in row {
                if in_first(ordinal) {
                    first[u].push((i, r));
                    n_first += 1;
                } else {
                    second[u].push((i, r));
                }
                ordinal += 1;
            }
        }
        let n_second = self.n_entries - n_first;
        (
            Self::assemble(self.users.clone(), self.items.clone(), first, self.max_raw, n_first),
            Self::assemble(
                self.users.clone(),
                self.items.clone(),
                second,
                self.max_raw,
                n_second,
            ),
        )
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn max_raw_rating(&self) -> f64 {
        self.max_raw
    }

    /// Max minus min stored normalized rating.
    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    pub fn user_id(&self, u: UserIdx) -> &str {
        self.users.name(u.0)
    }

    pub fn item_id(&self, i: ItemIdx) -> &str {
        self.items.name(i.0)
    }

    pub fn user_idx(&self, id: &str) -> Option<UserIdx> {
        self.users.get(id).map(UserIdx)
    }

    pub fn item_idx(&self, id: &str) -> Option<ItemIdx> {
        self.items.get(id).map(ItemIdx)
    }

    /// Items rated by `u` with their normalized ratings, ascending item index.
    pub fn ratings_of(&self, u: UserIdx) -> &[(ItemIdx, f64)] {
        &self.by_user[u.0 as usize]
    }

    /// Users that rated `i` with their normalized ratings, ascending user index.
    pub fn raters_of(&self, i: ItemIdx) -> &[(UserIdx, f64)] {
        &self.by_item[i.0 as usize]
    }

    /// All entries in user-major, item-ascending order.
    pub fn entries(&self) -> impl Iterator<Item = (UserIdx, ItemIdx, f64)> + '_ {
        self.by_user.iter().enumerate().flat_map(|(u, row)| {
            row.iter().map(move |&(i, r)| (UserIdx(u as u32), i, r))
        })
    }

    /// Users with no stored ratings (possible after a holdout split).
    pub fn users_without_ratings(&self) -> usize {
        self.by_user.iter().filter(|r| r.is_empty()).count()
    }

    /// Recovers the raw rating; exact for whole-star inputs.
    pub fn denormalize(&self, normalized: f64) -> f64 {
        normalized * self.max_raw
    }
}

/// Ordered set of sensitive attributes, each with its ordered class labels.
#[derive(Debug, Clone)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

#[derive(Debug, Clone)]
pub struct Attribute {
    pub name: String,
    pub classes: Vec<String>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<(String, Vec<String>)>) -> Result<Self, ModelError> {
        if attributes.is_empty() {
            return Err(ModelError::EmptySchema);
        }
        let mut out = Vec::with_capacity(attributes.len());
        for (name, classes) in attributes {
            for (k, c) in classes.iter().enumerate() {
                if classes[..k].contains(c) {
                    return Err(ModelError::DuplicateClass {
                        attribute: name,
                        class: c.clone(),
                    });
                }
            }
            out.push(Attribute { name, classes });
        }
        Ok(Self { attributes: out })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn class_index(&self, attr: usize, label: &str) -> Option<u16> {
        self.attributes[attr]
            .classes
            .iter()
            .position(|c| c == label)
            .map(|p| p as u16)
    }

    pub fn class_label(&self, attr: usize, class: u16) -> &str {
        &self.attributes[attr].classes[class as usize]
    }
}

/// Per-user class assignment, one slot per schema attribute; `None` marks a
/// missing value. Keyed by original user id so profiles survive matrix
/// rebuilds (splits, attack injection).
#[derive(Debug, Clone, Default)]
pub struct UserProfiles {
    rows: HashMap<String, Vec<Option<u16>>>,
}

impl UserProfiles {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: &str, classes: Vec<Option<u16>>) {
        self.rows.insert(user.to_owned(), classes);
    }

    /// Inserts by class label, validating against the schema.
    pub fn insert_labels(
        &mut self,
        schema: &AttributeSchema,
        user: &str,
        labels: &[Option<&str>],
    ) -> Result<(), ModelError> {
        let mut classes = vec![None; schema.len()];
        for (j, label) in labels.iter().enumerate().take(schema.len()) {
            if let Some(label) = label {
                let ix = schema.class_index(j, label).ok_or_else(|| ModelError::UnknownClass {
                    attribute: schema.attributes()[j].name.clone(),
                    class: (*label).to_owned(),
                })?;
                classes[j] = Some(ix);
            }
        }
        self.rows.insert(user.to_owned(), classes);
        Ok(())
    }

    pub fn class_of(&self, user: &str, attr: usize) -> Option<u16> {
        self.rows.get(user).and_then(|row| row.get(attr).copied().flatten())
    }

    pub fn contains(&self, user: &str) -> bool {
        self.rows.contains_key(user)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Disjoint user groups keyed by tuples of class indices, one per key
/// attribute. Group order is the lexicographic order of the key tuples,
/// i.e. the cartesian product in declared class order.
#[derive(Debug, Clone)]
pub struct GroupPartition {
    key_attributes: Vec<String>,
    key_attr_indices: Vec<usize>,
    groups: BTreeMap<Vec<u16>, Vec<UserIdx>>,
    min_group_size: usize,
    excluded_missing: usize,
    excluded_small_group: usize,
}

impl GroupPartition {
    pub fn key_attributes(&self) -> &[String] {
        &self.key_attributes
    }

    pub fn key_attr_indices(&self) -> &[usize] {
        &self.key_attr_indices
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> impl Iterator<Item = (&[u16], &[UserIdx])> {
        self.groups.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    pub fn members(&self, key: &[u16]) -> Option<&[UserIdx]> {
        self.groups.get(key).map(|v| v.as_slice())
    }

    pub fn min_group_size(&self) -> usize {
        self.min_group_size
    }

    /// Matrix users skipped because a key attribute value was missing.
    pub fn excluded_missing(&self) -> usize {
        self.excluded_missing
    }

    /// Matrix users skipped because their group fell under `min_group_size`.
    pub fn excluded_small_group(&self) -> usize {
        self.excluded_small_group
    }

    pub fn covered_users(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    /// Group key rendered with schema class labels.
    pub fn key_labels<'a>(&self, schema: &'a AttributeSchema, key: &[u16]) -> Vec<&'a str> {
        key.iter()
            .zip(&self.key_attr_indices)
            .map(|(&c, &a)| schema.class_label(a, c))
            .collect()
    }
}

/// Partitions the matrix users into demographic groups keyed by the given
/// attributes. Users missing any key attribute, and groups smaller than
/// `min_group_size`, are excluded (their counts are retained for reporting).
pub fn build_partition(
    matrix: &RatingsMatrix,
    schema: &AttributeSchema,
    profiles: &UserProfiles,
    attrs: &[String],
    min_group_size: usize,
) -> Result<GroupPartition, ModelError> {
    if attrs.is_empty() {
        return Err(ModelError::NoKeyAttributes);
    }
    let mut key_attr_indices = Vec::with_capacity(attrs.len());
    for name in attrs {
        let ix = schema
            .attribute_index(name)
            .ok_or_else(|| ModelError::UnknownAttribute(name.clone()))?;
        key_attr_indices.push(ix);
    }
    let mut groups: BTreeMap<Vec<u16>, Vec<UserIdx>> = BTreeMap::new();
    let mut excluded_missing = 0usize;
    for u in 0..matrix.n_users() {
        let user = UserIdx(u as u32);
        let id = matrix.user_id(user);
        let key: Option<Vec<u16>> = key_attr_indices
            .iter()
            .map(|&a| profiles.class_of(id, a))
            .collect();
        match key {
            Some(key) => groups.entry(key).or_default().push(user),
            None => excluded_missing += 1,
        }
    }
    let mut excluded_small_group = 0usize;
    groups.retain(|_, members| {
        if members.len() >= min_group_size.max(1) {
            true
        } else {
            excluded_small_group += members.len();
            false
        }
    });
    Ok(GroupPartition {
        key_attributes: attrs.to_vec(),
        key_attr_indices,
        groups,
        min_group_size,
        excluded_missing,
        excluded_small_group,
    })
}
