use std::collections::BTreeMap;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SplitSpec;
use crate::sparse::BinaryInteractionMatrix;

/// One `(user, item, rating)` record as read from disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
}

/// Seeded reservoir subsampling applied during preprocessing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub max_users: Option<usize>,
    pub max_items: Option<usize>,
}

/// Binarized interactions with dense indices and the raw id of each row and
/// column (both sorted ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub matrix: BinaryInteractionMatrix,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

impl Preprocessed {
    pub fn user_index(&self, raw: u64) -> Option<usize> {
        self.user_ids.binary_search(&raw).ok()
    }

    pub fn item_index(&self, raw: u64) -> Option<usize> {
        self.item_ids.binary_search(&raw).ok()
    }
}

const USER_STREAM: u64 = 0x5eed_0001;
const ITEM_STREAM: u64 = 0x5eed_0002;

fn reservoir(ids: impl Iterator<Item = u64>, keep: usize, seed: u64, stream: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut kept = ids.choose_multiple(&mut rng, keep);
    kept.sort_unstable();
    kept
}

/// Keeps ratings strictly above the threshold, optionally subsamples items,
/// drops users with fewer than `min_user_interactions` remaining items,
/// optionally subsamples users, and re-indexes both axes by raw id.
pub fn preprocess(
    raw: &[RawInteraction],
    spec: &SplitSpec,
    subsample: &Subsample,
) -> Result<Preprocessed> {
    let mut pairs: Vec<(u64, u64)> = raw
        .iter()
        .filter(|r| r.rating > spec.rating_threshold)
        .map(|r| (r.user, r.item))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    if let Some(max_items) = subsample.max_items {
        let mut items: Vec<u64> = pairs.iter().map(|p| p.1).collect();
        items.sort_unstable();
        items.dedup();
        if items.len() > max_items {
            let kept = reservoir(items.into_iter(), max_items, spec.seed, ITEM_STREAM);
            pairs.retain(|p| kept.binary_search(&p.1).is_ok());
        }
    }

    let mut per_user: BTreeMap<u64, usize> = BTreeMap::new();
    for &(u, _) in &pairs {
        *per_user.entry(u).or_default() += 1;
    }
    let mut users: Vec<u64> = per_user
        .into_iter()
        .filter(|&(_, n)| n >= spec.min_user_interactions)
        .map(|(u, _)| u)
        .collect();
    if let Some(max_users) = subsample.max_users {
        if users.len() > max_users {
            users = reservoir(users.into_iter(), max_users, spec.seed, USER_STREAM);
        }
    }
    pairs.retain(|p| users.binary_search(&p.0).is_ok());
    if pairs.is_empty() {
        return Err(Error::Empty("no interactions left after filtering".into()));
    }

    let mut items: Vec<u64> = pairs.iter().map(|p| p.1).collect();
    items.sort_unstable();
    items.dedup();
    let coords = pairs.iter().map(|&(u, i)| {
        (
            users.binary_search(&u).unwrap(),
            items.binary_search(&i).unwrap(),
        )
    });
    let matrix = BinaryInteractionMatrix::from_coordinates(users.len(), items.len(), coords)?;
    Ok(Preprocessed {
        matrix,
        user_ids: users,
        item_ids: items,
    })
}
