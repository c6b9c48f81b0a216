//! One-to-one assignment between two index sets under a cost matrix with
//! forbidden pairs. The solver maximizes the number of matched pairs first,
//! then minimizes their total cost — the behaviour both the tracker's gated
//! association and the per-frame metric matching rely on.

/// Result of an assignment: matched `(row, col)` pairs (sorted by row) and
/// the summed cost of those pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Minimum-total-cost one-to-one assignment. `f64::INFINITY` marks a
/// forbidden pair; among assignments with the maximum number of allowed
/// pairs, the cheapest is returned. Hungarian algorithm with potentials,
/// O(n^3) on the padded square matrix.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: vec![],
            total_cost: 0.0,
        };
    }
    let n = rows.max(cols);

    // A single forbidden edge must cost more than every real assignment
    // combined, so the solver sheds forbidden edges before anything else.
    let max_finite = cost
        .iter()
        .flatten()
        .copied()
        .filter(|c| c.is_finite())
        .fold(0.0_f64, f64::max);
    let big = (max_finite + 1.0) * (n as f64 + 1.0) * 1e6;

    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols && cost[i][j].is_finite() {
            cost[i][j]
        } else {
            big
        }
    };

    // Potentials u (rows), v (cols); way[j] remembers the augmenting path.
    // Classic shortest-augmenting-path formulation, 1-based in col 0.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0_usize; n + 1]; // p[j] = row matched to col j (1-based)
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols && cost[i - 1][j - 1].is_finite() {
            pairs.push((i - 1, j - 1));
            total += cost[i - 1][j - 1];
        }
    }
    pairs.sort_unstable();
    Assignment {
        pairs,
        total_cost: total,
    }
}

/// Nearest-first greedy assignment: repeatedly take the cheapest remaining
/// allowed pair. Ties break on (row, col) so the result is deterministic.
pub fn greedy_assignment(cost: &[Vec<f64>]) -> Assignment {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c.is_finite() {
                edges.push((i, j));
            }
        }
    }
    edges.sort_by(|&(ai, aj), &(bi, bj)| {
        cost[ai][aj]
            .partial_cmp(&cost[bi][bj])
            .expect("finite costs compare")
            .then(ai.cmp(&bi))
            .then(aj.cmp(&bj))
    });
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, j) in edges {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
            total += cost[i][j];
        }
    }
    pairs.sort_unstable();
    Assignment {
        pairs,
        total_cost: total,
    }
}
