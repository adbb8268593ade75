use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Preprocessed;
use crate::sparse::BinaryInteractionMatrix;

/// Default held-out users per role: 10 000 per 136 677 users, capped at 10 000.
const REFERENCE_USERS: f64 = 136_677.0;
const REFERENCE_HELDOUT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// `None` picks [`default_heldout_users`].
    pub n_heldout_users_val: Option<usize>,
    pub n_heldout_users_test: Option<usize>,
    pub fold_in_fraction: f64,
    /// Ratings strictly above this count as positives.
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_heldout_users_val: None,
            n_heldout_users_test: None,
            fold_in_fraction: 0.8,
            rating_threshold: 3.0,
            min_user_interactions: 5,
            seed: 0,
        }
    }
}

/// `min(10000, floor(n_users · 10000 / 136677))`, at least 1.
pub fn default_heldout_users(n_users: usize) -> usize {
    let scaled = (n_users as f64 * REFERENCE_HELDOUT as f64 / REFERENCE_USERS).floor() as usize;
    scaled.clamp(1, REFERENCE_HELDOUT)
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fold_in_fraction > 0.0 && self.fold_in_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fold_in_fraction must be in (0, 1), got {}",
                self.fold_in_fraction
            )));
        }
        if !self.rating_threshold.is_finite() {
            return Err(Error::InvalidParameter(
                "rating_threshold must be finite".into(),
            ));
        }
        Ok(())
    }

    /// `(validation, test)` held-out user counts for a corpus of `n_users`.
    pub fn heldout_counts(&self, n_users: usize) -> (usize, usize) {
        let d = default_heldout_users(n_users);
        (
            self.n_heldout_users_val.unwrap_or(d),
            self.n_heldout_users_test.unwrap_or(d),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

/// A user outside the training matrix. Item indices refer to the training
/// matrix's columns and both lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldOutUser {
    /// Row of the preprocessed matrix.
    pub user: usize,
    pub fold_in: Vec<usize>,
    pub held_out: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSplit {
    /// Training users only, restricted to items they interacted with.
    pub train: BinaryInteractionMatrix,
    /// Row of the preprocessed matrix for each training row.
    pub train_users: Vec<usize>,
    /// Column of the preprocessed matrix for each training column.
    pub item_ids: Vec<usize>,
    pub val: Vec<HeldOutUser>,
    pub test: Vec<HeldOutUser>,
}

impl EvalSplit {
    pub fn users(&self, role: Role) -> &[HeldOutUser] {
        match role {
            Role::Val => &self.val,
            Role::Test => &self.test,
            Role::Train => &[],
        }
    }
}

/// Number of fold-in items for a user with `n` items: `floor(n·f)` kept in
/// `[1, n − 1]`.
fn fold_in_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return n;
    }
    ((n as f64 * fraction + 1e-9).floor() as usize).clamp(1, n - 1)
}

fn restrict_items(
    x: &BinaryInteractionMatrix,
    train_users: &[usize],
) -> (BinaryInteractionMatrix, Vec<usize>, Vec<Option<usize>>) {
    let mut present = vec![false; x.n_items()];
    for &u in train_users {
        for &i in x.row(u) {
            present[i] = true;
        }
    }
    let item_ids: Vec<usize> = (0..x.n_items()).filter(|&i| present[i]).collect();
    let mut to_train = vec![None; x.n_items()];
    for (k, &i) in item_ids.iter().enumerate() {
        to_train[i] = Some(k);
    }
    let coords = train_users
        .iter()
        .enumerate()
        .flat_map(|(r, &u)| x.row(u).iter().map(move |&i| (r, i)))
        .map(|(r, i)| (r, to_train[i].expect("present")));
    let train = BinaryInteractionMatrix::from_coordinates(
        train_users.len(),
        item_ids.len(),
        coords.collect::<Vec<_>>(),
    )
    .expect("indices in range");
    (train, item_ids, to_train)
}

/// Seeded strong-generalization split: shuffled users, the last `n_test`
/// become test users and the `n_val` before them validation users; each
/// held-out user's items (restricted to items seen in training) are split
/// into fold-in and held-out parts.
pub fn make_split(x: &BinaryInteractionMatrix, spec: &SplitSpec) -> Result<EvalSplit> {
    spec.validate()?;
    let n = x.n_users();
    let (n_val, n_test) = spec.heldout_counts(n);
    if n_val + n_test >= n {
        return Err(Error::InvalidParameter(format!(
            "{n_val} validation + {n_test} test users leave no training users out of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let n_train = n - n_val - n_test;
    let mut train_users = perm[..n_train].to_vec();
    let mut val_users = perm[n_train..n_train + n_val].to_vec();
    let mut test_users = perm[n_train + n_val..].to_vec();
    train_users.sort_unstable();
    val_users.sort_unstable();
    test_users.sort_unstable();

    let (train, item_ids, to_train) = restrict_items(x, &train_users);
    let mut held_out = |users: &[usize]| -> Vec<HeldOutUser> {
        users
            .iter()
            .map(|&u| {
                let mut items: Vec<usize> = x.row(u).iter().filter_map(|&i| to_train[i]).collect();
                items.shuffle(&mut rng);
                let k = fold_in_count(items.len(), spec.fold_in_fraction);
                let mut rest = items.split_off(k);
                items.sort_unstable();
                rest.sort_unstable();
                HeldOutUser {
                    user: u,
                    fold_in: items,
                    held_out: rest,
                }
            })
            .collect()
    };
    let val = held_out(&val_users);
    let test = held_out(&test_users);
    Ok(EvalSplit {
        train,
        train_users,
        item_ids,
        val,
        test,
    })
}

const MANIFEST_HEADER: &str = "# wmf-lab split manifest v1";

fn join_ids(ids: impl Iterator<Item = u64>) -> String {
    ids.map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// One line per user: `raw user id`, role, fold-in raw item ids and
/// held-out raw item ids, tab separated (item lists are empty for training
/// users).
pub fn write_manifest<W: Write>(mut w: W, split: &EvalSplit, data: &Preprocessed) -> Result<()> {
    writeln!(w, "{MANIFEST_HEADER}")?;
    let raw_item = |k: &usize| data.item_ids[split.item_ids[*k]];
    for &u in &split.train_users {
        writeln!(w, "{}\ttrain\t\t", data.user_ids[u])?;
    }
    for (role, users) in [(Role::Val, &split.val), (Role::Test, &split.test)] {
        for h in users {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                data.user_ids[h.user],
                role.name(),
                join_ids(h.fold_in.iter().map(raw_item)),
                join_ids(h.held_out.iter().map(raw_item)),
            )?;
        }
    }
    Ok(())
}

/// Rebuilds a split from a manifest against the same preprocessed data.
pub fn read_manifest<R: BufRead>(r: R, data: &Preprocessed) -> Result<EvalSplit> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == MANIFEST_HEADER => {}
        _ => return Err(Error::Format("missing split manifest header".into())),
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };
    let mut train_users = Vec::new();
    let mut pending: Vec<(Role, usize, Vec<u64>, Vec<u64>, usize)> = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                ln,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let raw_user: u64 = fields[0]
            .parse()
            .map_err(|e| parse_err(ln, format!("bad user id {:?}: {e}", fields[0])))?;
        let user = data
            .user_index(raw_user)
            .ok_or_else(|| parse_err(ln, format!("user {raw_user} not in the data")))?;
        let ids = |s: &str| -> Result<Vec<u64>> {
            s.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|e| parse_err(ln, format!("bad item id {t:?}: {e}")))
                })
                .collect()
        };
        match fields[1] {
            "train" => train_users.push(user),
            "val" => pending.push((Role::Val, user, ids(fields[2])?, ids(fields[3])?, ln)),
            "test" => pending.push((Role::Test, user, ids(fields[2])?, ids(fields[3])?, ln)),
            other => return Err(parse_err(ln, format!("unknown role {other:?}"))),
        }
    }
    train_users.sort_unstable();
    if train_users.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Format("duplicate training user in manifest".into()));
    }
    let (train, item_ids, to_train) = restrict_items(&data.matrix, &train_users);
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (role, user, fold_in, held_out, ln) in pending {
        if train_users.binary_search(&user).is_ok() {
            return Err(parse_err(
                ln,
                "held-out user also listed for training".into(),
            ));
        }
        let map = |raw: &[u64]| -> Result<Vec<usize>> {
            let mut out = raw
                .iter()
                .map(|&i| {
                    data.item_index(i)
                        .and_then(|k| to_train[k])
                        .ok_or_else(|| parse_err(ln, format!("item {i} is not a training item")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        let h = HeldOutUser {
            user,
            fold_in: map(&fold_in)?,
            held_out: map(&held_out)?,
        };
        if h.fold_in
            .iter()
            .any(|i| h.held_out.binary_search(i).is_ok())
        {
            return Err(parse_err(ln, "fold-in and held-out items overlap".into()));
        }
        match role {
            Role::Val => val.push(h),
            _ => test.push(h),
        }
    }
    val.sort_by_key(|h| h.user);
    test.sort_by_key(|h| h.user);
    Ok(EvalSplit {
        train,
        train_users,
        item_ids,
        val,
        test,
    })
}
