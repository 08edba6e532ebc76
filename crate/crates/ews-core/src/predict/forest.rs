//! Random forest of Gini-split classification trees with out-of-bag
//! (k, M) selection and mean-decrease-accuracy importance.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_labels, dense_matrix, ImportanceEntry, ImportanceTable};
use crate::classify::CrisisLabels;
use crate::frame::FactorPanel;
use crate::{EwsError, Result};

/// The paper's reference default for features-per-split before the search
/// loop: n/3 (at least 1).
pub fn default_k(n_features: usize) -> usize {
    (n_features / 3).max(1)
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        prob: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf { prob } => *prob,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Tree {
    root: Node,
    /// Row indices never drawn into this tree's bootstrap sample.
    oob: Vec<usize>,
}

/// A fitted forest: the best (k, M) found by the out-of-bag search.
#[derive(Debug, Clone)]
pub struct RandomForestModel {
    pub feature_names: Vec<String>,
    trees: Vec<Tree>,
    /// Candidate features per split.
    pub k: usize,
    /// Number of trees kept.
    pub m: usize,
    pub oob_error: f64,
    pub seed: u64,
    majority: f64,
}

fn mix_seed(seed: u64, k: usize, tree: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((tree as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

fn grow_tree(
    rows: &[Vec<f64>],
    y: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = rows.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut in_bag = vec![false; n];
    for &i in &sample {
        in_bag[i] = true;
    }
    let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
    let root = grow_node(rows, y, &sample, k, rng);
    Tree { root, oob }
}

fn grow_node(
    rows: &[Vec<f64>],
    y: &[f64],
    idx: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let n = idx.len();
    let pos: f64 = idx.iter().map(|&i| y[i]).sum();
    let prob = pos / n as f64;
    if n < 2 || prob == 0.0 || prob == 1.0 {
        return Node::Leaf { prob };
    }

    let n_features = rows[0].len();
    let mut candidates: Vec<usize> = (0..n_features).collect();
    candidates.shuffle(rng);
    candidates.truncate(k.min(n_features));
    candidates.sort_unstable(); // deterministic evaluation order

    let parent_gini = gini(pos, n as f64);
    let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
    for &f in &candidates {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            rows[a][f]
                .partial_cmp(&rows[b][f])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut left_n = 0.0;
        let mut left_pos = 0.0;
        for w in 0..n - 1 {
            let i = order[w];
            left_n += 1.0;
            left_pos += y[i];
            let (a, b) = (rows[order[w]][f], rows[order[w + 1]][f]);
            if a == b {
                continue;
            }
            let right_n = n as f64 - left_n;
            let right_pos = pos - left_pos;
            let weighted = (left_n * gini(left_pos, left_n)
                + right_n * gini(right_pos, right_n))
                / n as f64;
            let decrease = parent_gini - weighted;
            if decrease > 1e-12 && best.map_or(true, |(d, _, _)| decrease > d) {
                best = Some((decrease, f, 0.5 * (a + b)));
            }
        }
    }

    match best {
        None => Node::Leaf { prob },
        Some((_, feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| rows[i][feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow_node(rows, y, &left_idx, k, rng)),
                right: Box::new(grow_node(rows, y, &right_idx, k, rng)),
            }
        }
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

/// OOB majority-vote error of the first `m` trees; rows never out-of-bag
/// fall back to the majority class.
fn oob_error(trees: &[Tree], rows: &[Vec<f64>], y: &[f64], m: usize, majority: f64) -> f64 {
    let n = rows.len();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for tree in &trees[..m] {
        for &i in &tree.oob {
            sum[i] += tree.root.predict(&rows[i]);
            cnt[i] += 1;
        }
    }
    let wrong = (0..n)
        .filter(|&i| {
            let p = if cnt[i] == 0 { majority } else { sum[i] / cnt[i] as f64 };
            f64::from(p >= 0.5) != y[i]
        })
        .count();
    wrong as f64 / n as f64
}

/// Grows forests for every k in 1..=(n_features-1) (1 when only one feature
/// exists), tracks out-of-bag error as trees accumulate in steps of 10 up to
/// `m_max`, and keeps the (k, M) with minimal error (ties to smaller k, then
/// smaller M).
pub fn fit_random_forest(
    features: &FactorPanel,
    labels: &CrisisLabels,
    m_max: usize,
    seed: u64,
) -> Result<RandomForestModel> {
    let y = check_labels(features, labels)?;
    let (rows, names) = dense_matrix(features, &[])?;
    if rows.len() < 20 {
        return Err(EwsError::TooShort {
            need: 20,
            got: rows.len(),
        });
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(EwsError::DegenerateData("single-class labels".into()));
    }
    let m_max = m_max.max(10);
    let majority = {
        let pos: f64 = y.iter().sum();
        f64::from(pos * 2.0 >= y.len() as f64)
    };

    let k_hi = if names.len() > 1 { names.len() - 1 } else { 1 };
    let per_k: Vec<(Vec<Tree>, usize, f64)> = (1..=k_hi)
        .into_par_iter()
        .map(|k| {
            let trees: Vec<Tree> = (0..m_max)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k, i));
                    grow_tree(&rows, &y, k, &mut rng)
                })
                .collect();
            let mut best_m = 10;
            let mut best_err = f64::INFINITY;
            let mut m = 10;
            while m <= m_max {
                let err = oob_error(&trees, &rows, &y, m, majority);
                if err < best_err {
                    best_err = err;
                    best_m = m;
                }
                m += 10;
            }
            (trees, best_m, best_err)
        })
        .collect();

    let (mut best_k, mut best_m, mut best_err) = (1usize, 10usize, f64::INFINITY);
    for (i, (_, m, err)) in per_k.iter().enumerate() {
        if *err < best_err {
            best_k = i + 1;
            best_m = *m;
            best_err = *err;
        }
    }
    let trees = per_k.into_iter().nth(best_k - 1).expect("k in range").0;

    Ok(RandomForestModel {
        feature_names: names,
        trees: trees.into_iter().take(best_m).collect(),
        k: best_k,
        m: best_m,
        oob_error: best_err,
        seed,
        majority,
    })
}

impl RandomForestModel {
    pub fn probabilities(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        Ok(rows
            .iter()
            .map(|row| {
                self.trees.iter().map(|t| t.root.predict(row)).sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect())
    }

    /// OOB majority-vote predictions on the training panel.
    pub fn oob_predictions(&self, features: &FactorPanel) -> Result<Vec<f64>> {
        let (rows, _) = dense_matrix(features, &self.feature_names)?;
        let n = rows.len();
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for tree in &self.trees {
            for &i in &tree.oob {
                if i < n {
                    sum[i] += tree.root.predict(&rows[i]);
                    cnt[i] += 1;
                }
            }
        }
        Ok((0..n)
            .map(|i| {
                if cnt[i] == 0 {
                    self.majority
                } else {
                    sum[i] / cnt[i] as f64
                }
            })
            .collect())
    }
}

/// Mean decrease accuracy: per tree, OOB accuracy minus OOB accuracy after
/// permuting the feature among the tree's OOB rows, averaged over trees and
/// scaled to percentage points.
pub fn rf_importance(
    model: &RandomForestModel,
    features: &FactorPanel,
    labels: &CrisisLabels,
) -> Result<ImportanceTable> {
    rf_importance_impl(model, features, labels, false)
}

pub(crate) fn rf_importance_impl(
    model: &RandomForestModel,
    features: &FactorPanel,
    labels: &CrisisLabels,
    identity_permutation: bool,
) -> Result<ImportanceTable> {
    let y = check_labels(features, labels)?;
    let (rows, _) = dense_matrix(features, &model.feature_names)?;

    let mut mda = vec![0.0; model.feature_names.len()];
    for (t_idx, tree) in model.trees.iter().enumerate() {
        if tree.oob.is_empty() {
            continue;
        }
        let base_acc = tree
            .oob
            .iter()
            .filter(|&&i| f64::from(tree.root.predict(&rows[i]) >= 0.5) == y[i])
            .count() as f64
            / tree.oob.len() as f64;

        for f in 0..model.feature_names.len() {
            let mut perm: Vec<usize> = (0..tree.oob.len()).collect();
            if !identity_permutation {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(model.seed, f + 1_000_000, t_idx));
                perm.shuffle(&mut rng);
            }
            let acc = tree
                .oob
                .iter()
                .enumerate()
                .filter(|&(pos, &i)| {
                    let mut row = rows[i].clone();
                    row[f] = rows[tree.oob[perm[pos]]][f];
                    f64::from(tree.root.predict(&row) >= 0.5) == y[i]
                })
                .count() as f64
                / tree.oob.len() as f64;
            mda[f] += base_acc - acc;
        }
    }

    let entries = model
        .feature_names
        .iter()
        .zip(&mda)
        .map(|(name, &total)| ImportanceEntry {
            feature: name.clone(),
            score: Some(100.0 * total / model.trees.len() as f64),
            method: "mda".into(),
        })
        .collect();
    Ok(ImportanceTable::new(entries))
}
