use std::collections::BTreeMap;

use super::{BenchmarkError, EvaluationRecord};

/// Mid-ranks: rank 1 goes to the smallest value (or the largest when
/// `descending`), tied values share the mean of the ranks they cover.
pub fn mid_ranks(values: &[f64], descending: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Ranks records by `best_y` within each (instance, budget) group.
pub fn rank_algorithms(records: &mut [EvaluationRecord]) -> Result<(), BenchmarkError> {
    let mut groups: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.instance.clone(), r.budget)).or_default().push(i);
    }
    for ((instance, budget), idx) in &groups {
        let mut seen = std::collections::BTreeSet::new();
        for &i in idx {
            if !seen.insert(records[i].pipeline.as_str()) {
                return Err(BenchmarkError::DuplicatePipelineInGroup {
                    pipeline: records[i].pipeline.clone(),
                    instance: instance.clone(),
                    budget: *budget,
                });
            }
        }
        let values: Vec<f64> = idx.iter().map(|&i| records[i].best_y).collect();
        for (&i, r) in idx.iter().zip(mid_ranks(&values, false)) {
            records[i].rank = Some(r);
        }
    }
    Ok(())
}
