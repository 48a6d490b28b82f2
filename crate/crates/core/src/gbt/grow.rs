//! Level-wise exact greedy tree growth on presorted feature columns.
//!
//! Every level makes one pass per feature over the rows in ascending feature
//! order, accumulating gradient statistics for each open node. Features are
//! scanned in parallel; the per-node reduction runs in feature order, so the
//! grown tree does not depend on the number of worker threads.

use rayon::prelude::*;

use super::tree::{Node, RegressionTree};
use crate::dataset::FeatureMatrix;

const INACTIVE: u32 = u32::MAX;

/// Rows of every feature column, sorted by `(value, row index)`.
pub(crate) struct SortedColumns {
    columns: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub(crate) fn new(x: &FeatureMatrix) -> Self {
        let columns = (0..x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .total_cmp(&x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { columns }
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    pub min_split_gain: f64,
}

#[derive(Clone, Copy, Default)]
struct NodeTotals {
    grad: f64,
    hess: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

/// Loss reduction of splitting `(gl, hl) | (gr, hr)` out of `(g, h)`.
#[inline]
pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)
}

#[inline]
pub(crate) fn leaf_weight(grad: f64, hess: f64, lambda: f64) -> f64 {
    -grad / (hess + lambda)
}

/// Grows one tree over the rows flagged in `active`.
pub(crate) fn grow_tree(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    grad: &[f64],
    hess: &[f64],
    active: &[bool],
    params: &GrowParams,
) -> RegressionTree {
    let n = x.n_rows();
    // Slot of each row among the open nodes of the current level.
    let mut slot_of: Vec<u32> = active.iter().map(|&a| if a { 0 } else { INACTIVE }).collect();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open: Vec<usize> = vec![0];

    for depth in 0..=params.max_depth {
        let totals = slot_totals(&slot_of, grad, hess, open.len());
        let best = if depth < params.max_depth {
            best_splits(x, sorted, grad, hess, &slot_of, &totals, params)
        } else {
            vec![None; open.len()]
        };

        let mut next_open = Vec::new();
        // Per open slot: (left slot, right slot, feature, threshold) for split nodes.
        let mut routing: Vec<Option<(u32, u32, usize, f64)>> = vec![None; open.len()];
        for (slot, &node_id) in open.iter().enumerate() {
            let t = totals[slot];
            match best[slot] {
                Some((feature, cand)) if cand.gain > params.min_split_gain => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[node_id] = Node::Split {
                        feature,
                        threshold: cand.threshold,
                        gain: cand.gain,
                        left,
                        right: left + 1,
                    };
                    let l_slot = next_open.len() as u32;
                    next_open.push(left);
                    next_open.push(left + 1);
                    routing[slot] = Some((l_slot, l_slot + 1, feature, cand.threshold));
                }
                _ => {
                    nodes[node_id] = Node::Leaf {
                        value: leaf_weight(t.grad, t.hess, params.lambda),
                    };
                }
            }
        }
        if next_open.is_empty() {
            break;
        }
        for (row, slot) in slot_of.iter_mut().enumerate().take(n) {
            if *slot == INACTIVE {
                continue;
            }
            *slot = match routing[*slot as usize] {
                Some((l, r, feature, threshold)) => {
                    if x.get(row, feature) < threshold {
                        l
                    } else {
                        r
                    }
                }
                None => INACTIVE,
            };
        }
        open = next_open;
    }
    RegressionTree { nodes }
}

fn slot_totals(slot_of: &[u32], grad: &[f64], hess: &[f64], n_slots: usize) -> Vec<NodeTotals> {
    let mut totals = vec![NodeTotals::default(); n_slots];
    for (row, &slot) in slot_of.iter().enumerate() {
        if slot != INACTIVE {
            let t = &mut totals[slot as usize];
            t.grad += grad[row];
            t.hess += hess[row];
            t.count += 1;
        }
    }
    totals
}

/// Best `(feature, candidate)` per open slot. Ties prefer the lower feature
/// index, then the lower threshold.
fn best_splits(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    grad: &[f64],
    hess: &[f64],
    slot_of: &[u32],
    totals: &[NodeTotals],
    params: &GrowParams,
) -> Vec<Option<(usize, Candidate)>> {
    let per_feature: Vec<Vec<Option<Candidate>>> = (0..x.n_cols())
        .into_par_iter()
        .map(|f| scan_feature(x, f, &sorted.columns[f], grad, hess, slot_of, totals, params))
        .collect();

    let mut best: Vec<Option<(usize, Candidate)>> = vec![None; totals.len()];
    for (f, cands) in per_feature.iter().enumerate() {
        for (slot, cand) in cands.iter().enumerate() {
            if let Some(c) = cand {
                let better = match best[slot] {
                    None => true,
                    Some((_, b)) => c.gain > b.gain,
                };
                if better {
                    best[slot] = Some((f, *c));
                }
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &FeatureMatrix,
    feature: usize,
    order: &[u32],
    grad: &[f64],
    hess: &[f64],
    slot_of: &[u32],
    totals: &[NodeTotals],
    params: &GrowParams,
) -> Vec<Option<Candidate>> {
    struct Scan {
        left: NodeTotals,
        last: f64,
        best: Option<Candidate>,
    }
    let mut scans: Vec<Scan> = totals
        .iter()
        .map(|_| Scan {
            left: NodeTotals::default(),
            last: f64::NEG_INFINITY,
            best: None,
        })
        .collect();
    let min_leaf = params.min_samples_leaf.max(1);

    for &row in order {
        let row = row as usize;
        let slot = slot_of[row];
        if slot == INACTIVE {
            continue;
        }
        let total = totals[slot as usize];
        let s = &mut scans[slot as usize];
        let v = x.get(row, feature);
        if s.left.count >= min_leaf && v > s.last && total.count - s.left.count >= min_leaf {
            let gl = s.left.grad;
            let hl = s.left.hess;
            let gain = split_gain(gl, hl, total.grad - gl, total.hess - hl, params.lambda);
            if s.best.is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (s.last + v);
                if threshold <= s.last {
                    threshold = v;
                }
                s.best = Some(Candidate { gain, threshold });
            }
        }
        s.left.grad += grad[row];
        s.left.hess += hess[row];
        s.left.count += 1;
        s.last = v;
    }
    scans.into_iter().map(|s| s.best).collect()
}
