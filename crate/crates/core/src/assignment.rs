//! Exact maximum-weight perfect assignment on small square matrices.
//!
//! Used to harden a relaxed (row-softmax) mapping matrix into an exact
//! permutation. A greedy argmax can produce non-bijections, so hardening
//! always goes through this solver.

use crate::mat::Mat;

/// Returns the row -> column assignment maximizing the total weight.
///
/// Implemented as the shortest-augmenting-path Hungarian algorithm (O(n^3))
/// on the negated weights. Weights must be finite.
pub fn max_weight_assignment(weights: &Mat) -> Vec<usize> {
    assert_eq!(
        weights.rows(),
        weights.cols(),
        "assignment needs a square matrix"
    );
    let n = weights.rows();
    debug_assert!(weights.is_finite(), "assignment weights must be finite");
    if n == 0 {
        return Vec::new();
    }

    // Minimize cost = -weight. Column index n is a virtual start column.
    let cost = |i: usize, j: usize| -weights.get(i, j);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    // row_of[j] = row currently assigned to column j (n = unassigned).
    let mut row_of = vec![n; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 0..n {
        row_of[n] = i;
        let mut j0 = n;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < min_slack[j] {
                        min_slack[j] = cur;
                        way[j] = j0;
                    }
                    if min_slack[j] < delta {
                        delta = min_slack[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == n {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 0..n {
        if row_of[j] != n {
            assignment[row_of[j]] = j;
        }
    }
    debug_assert!(assignment.iter().all(|&j| j != usize::MAX));
    assignment
}
