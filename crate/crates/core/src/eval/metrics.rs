use std::cmp::Ordering;

/// Items for one user in descending score order, excluded items removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedList(pub Vec<usize>);

impl RankedList {
    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Descending score, then ascending index. NaN ranks last.
fn order(scores: &[f64], a: usize, b: usize) -> Ordering {
    let (sa, sb) = (scores[a], scores[b]);
    match (sa.is_nan(), sb.is_nan()) {
        (true, true) => a.cmp(&b),
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => sb
            .partial_cmp(&sa)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b)),
    }
}

/// Top `k` items by score with `excluded` (sorted ascending) left out.
pub fn rank_top_k(scores: &[f64], excluded: &[usize], k: usize) -> RankedList {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| excluded.binary_search(i).is_err())
        .collect();
    let cmp = |a: &usize, b: &usize| order(scores, *a, *b);
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    RankedList(candidates)
}

/// Hits in the top `k` divided by `min(k, |held_out|)`; `held_out` sorted.
pub fn recall_at_k(ranked: &RankedList, held_out: &[usize], k: usize) -> f64 {
    debug_assert!(
        held_out.windows(2).all(|w| w[0] < w[1]),
        "held_out must be sorted"
    );
    if held_out.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = ranked
        .items()
        .iter()
        .take(k)
        .filter(|i| held_out.binary_search(i).is_ok())
        .count();
    hits as f64 / k.min(held_out.len()) as f64
}

/// Binary-relevance nDCG truncated at `k`; `held_out` sorted.
pub fn ndcg_at_k(ranked: &RankedList, held_out: &[usize], k: usize) -> f64 {
    debug_assert!(
        held_out.windows(2).all(|w| w[0] < w[1]),
        "held_out must be sorted"
    );
    if held_out.is_empty() || k == 0 {
        return 0.0;
    }
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = ranked
        .items()
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| held_out.binary_search(i).is_ok())
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..k.min(held_out.len())).map(discount).sum();
    dcg / idcg
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
