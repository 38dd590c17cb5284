//! Level-wise frequent itemset mining over integer-coded transactions.

use std::collections::{BTreeMap, HashMap, HashSet};

/// Itemsets (sorted item codes) mapped to their absolute counts.
pub type ItemsetCounts = BTreeMap<Vec<u32>, usize>;

/// All non-empty itemsets contained in at least `min_count` transactions,
/// with their counts. Transactions must be sorted and duplicate-free.
///
/// `max_len` caps the size of the itemsets explored. A `min_count` of 0 is
/// treated as 1: itemsets that never occur are not reported.
pub fn frequent_itemsets(
    transactions: &[Vec<u32>],
    min_count: usize,
    max_len: Option<usize>,
) -> ItemsetCounts {
    let min_count = min_count.max(1);
    let max_len = max_len.unwrap_or(usize::MAX);
    let mut result = ItemsetCounts::new();
    if max_len == 0 {
        return result;
    }

    let mut singles: HashMap<u32, usize> = HashMap::new();
    for t in transactions {
        for &item in t {
            *singles.entry(item).or_default() += 1;
        }
    }
    let mut level: Vec<Vec<u32>> = singles
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(item, c)| {
            result.insert(vec![item], c);
            vec![item]
        })
        .collect();
    level.sort_unstable();

    let mut size = 1;
    while !level.is_empty() && size < max_len {
        let candidates = join_and_prune(&level);
        if candidates.is_empty() {
            break;
        }
        size += 1;
        let counts = count_candidates(transactions, &candidates, size);
        level = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(set, c)| {
                result.insert(set.clone(), c);
                set
            })
            .collect();
        level.sort_unstable();
    }
    result
}

/// Candidates of size k+1 from sorted frequent k-itemsets: join pairs that
/// share their first k-1 items, then drop any candidate with an infrequent
/// k-subset.
fn join_and_prune(level: &[Vec<u32>]) -> HashSet<Vec<u32>> {
    let frequent: HashSet<&[u32]> = level.iter().map(Vec::as_slice).collect();
    let k = level[0].len();
    let mut out = HashSet::new();
    for (i, a) in level.iter().enumerate() {
        for b in &level[i + 1..] {
            if a[..k - 1] != b[..k - 1] {
                break;
            }
            let mut candidate = a.clone();
            candidate.push(b[k - 1]);
            let all_subsets_frequent = (0..candidate.len()).all(|skip| {
                let subset: Vec<u32> = candidate
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != skip)
                    .map(|(_, &x)| x)
                    .collect();
                frequent.contains(subset.as_slice())
            });
            if all_subsets_frequent {
                out.insert(candidate);
            }
        }
    }
    out
}

fn count_candidates(
    transactions: &[Vec<u32>],
    candidates: &HashSet<Vec<u32>>,
    size: usize,
) -> HashMap<Vec<u32>, usize> {
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut buf = Vec::with_capacity(size);
    for t in transactions {
        if t.len() < size {
            continue;
        }
        for_each_combination(t, size, &mut buf, &mut |combo| {
            if candidates.contains(combo) {
                *counts.entry(combo.to_vec()).or_default() += 1;
            }
        });
    }
    counts
}

/// Counts how many transactions contain each of `itemsets`. The empty
/// itemset, if present, is contained in every transaction.
pub fn count_itemsets<'a>(
    transactions: impl IntoIterator<Item = &'a Vec<u32>>,
    itemsets: &HashSet<Vec<u32>>,
) -> HashMap<Vec<u32>, usize> {
    let mut by_size: BTreeMap<usize, HashSet<Vec<u32>>> = BTreeMap::new();
    for set in itemsets {
        by_size.entry(set.len()).or_default().insert(set.clone());
    }
    let mut counts: HashMap<Vec<u32>, usize> = itemsets.iter().map(|s| (s.clone(), 0)).collect();
    let mut buf = Vec::new();
    for t in transactions {
        for (&size, sets) in &by_size {
            if size > t.len() {
                break;
            }
            for_each_combination(t, size, &mut buf, &mut |combo| {
                if let Some(c) = sets.get(combo).and_then(|s| counts.get_mut(s)) {
                    *c += 1;
                }
            });
        }
    }
    counts
}

fn for_each_combination(items: &[u32], size: usize, buf: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    fn recurse(
        items: &[u32],
        start: usize,
        size: usize,
        buf: &mut Vec<u32>,
        f: &mut impl FnMut(&[u32]),
    ) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let needed = size - buf.len();
        for i in start..=items.len() - needed {
            buf.push(items[i]);
            recurse(items, i + 1, size, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    recurse(items, 0, size, buf, f);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(transactions: &[Vec<u32>], universe: u32, min_count: usize) -> ItemsetCounts {
        let mut out = ItemsetCounts::new();
        for mask in 1u32..(1 << universe) {
            let set: Vec<u32> = (0..universe).filter(|i| mask & (1 << i) != 0).collect();
            let count = transactions
                .iter()
                .filter(|t| set.iter().all(|x| t.contains(x)))
                .count();
            if count >= min_count.max(1) {
                out.insert(set, count);
            }
        }
        out
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let transactions = vec![
            vec![0, 1, 2],
            vec![0, 2],
            vec![1, 2, 3],
            vec![0, 1, 2, 3],
            vec![3],
            vec![0, 3],
        ];
        for min_count in 0..=5 {
            assert_eq!(
                frequent_itemsets(&transactions, min_count, None),
                brute_force(&transactions, 4, min_count),
                "min_count {min_count}"
            );
        }
    }

    #[test]
    fn max_len_caps_itemset_size() {
        let transactions = vec![vec![0, 1, 2], vec![0, 1, 2]];
        let sets = frequent_itemsets(&transactions, 1, Some(2));
        assert!(sets.keys().all(|s| s.len() <= 2));
        assert_eq!(sets.len(), 6);
        assert!(frequent_itemsets(&transactions, 1, Some(0)).is_empty());
    }

    #[test]
    fn counts_arbitrary_itemsets() {
        let transactions = vec![vec![0, 1, 2], vec![0, 2], vec![1]];
        let wanted: HashSet<Vec<u32>> = [vec![], vec![0, 2], vec![1], vec![0, 1, 2]].into();
        let counts = count_itemsets(&transactions, &wanted);
        assert_eq!(counts[&vec![]], 3);
        assert_eq!(counts[&vec![0, 2]], 2);
        assert_eq!(counts[&vec![1]], 2);
        assert_eq!(counts[&vec![0, 1, 2]], 1);
    }
}
