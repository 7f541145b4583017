//! One-to-one step matching.

/// Maximum-cardinality matching that, among those, maximizes total weight.
///
/// `weights[i][j]` is `Some(w)` with `0 <= w <= 1` when row `i` may pair with
/// column `j`. Returns `(row, col)` pairs sorted by row.
pub fn best_matching(weights: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    // Each eligible pair is worth `big` plus its weight; `big` exceeds any
    // achievable weight total, so pair count dominates.
    let big = n as f64 + 1.0;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match weights.get(i).and_then(|r| r.get(j)).copied().flatten() {
                    Some(w) => -(big + w),
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let mut out: Vec<(usize, usize)> = assignment
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows && j < cols && weights[i][j].is_some())
        .collect();
    out.sort_unstable();
    out
}

/// Minimum-cost perfect assignment on a square matrix; `result[row] = col`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut result = vec![0; n];
    for j in 1..=n {
        result[p[j] - 1] = j - 1;
    }
    result
}
