//! Minimum-cost bipartite assignment (Kuhn-Munkres with potentials, O(n^3)).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optimal assignment of the smaller side of a dense `rows x cols` cost
/// matrix (row-major, `rows <= cols`). Returns the column of each row.
fn solve(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Optimal total cost over the given row and column subsets, assigning
/// `min(rows, cols)` pairs.
fn optimal_cost(cost: &[f64], stride: usize, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let transpose = rows.len() > cols.len();
    let (a, b) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut sub = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            let (r, c) = if transpose { (y, x) } else { (x, y) };
            sub.push(cost[r * stride + c]);
        }
    }
    let assign = solve(&sub, a.len(), b.len());
    assign
        .iter()
        .enumerate()
        .map(|(i, &j)| sub[i * b.len() + j])
        .sum()
}

/// Minimum-cost matching between the rows and columns of an `n x m` cost
/// matrix, returning `min(n, m)` `(row, col)` pairs sorted by row. Among
/// optimal assignments the lexicographically smallest pair sequence wins.
pub fn hungarian_match(cost: &Tensor) -> Result<Vec<(usize, usize)>> {
    let (n, m) = cost.matrix_dims()?;
    if let Some(v) = cost.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "assignment costs must be finite, found {v}"
        )));
    }
    let c: Vec<f64> = cost.data().iter().map(|&v| f64::from(v)).collect();
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let target = optimal_cost(&c, m, &all_rows, &all_cols);
    let scale: f64 = c.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let tol = 1e-9 * scale;

    // Fix pairs greedily in lexicographic order, keeping each choice only if
    // the rest can still complete an optimal assignment.
    let mut pairs = Vec::with_capacity(n.min(m));
    let mut free_cols = all_cols;
    let mut spent = 0.0;
    for r in 0..n {
        let later_rows: Vec<usize> = (r + 1..n).collect();
        let mut chosen = None;
        for (idx, &col) in free_cols.iter().enumerate() {
            let rest: Vec<usize> = free_cols
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != idx)
                .map(|(_, &c)| c)
                .collect();
            // Taking this pair must still leave a full assignment possible.
            let remaining_pairs = later_rows.len().min(rest.len());
            if pairs.len() + 1 + remaining_pairs < n.min(m) {
                continue;
            }
            let total = spent + c[r * m + col] + optimal_cost(&c, m, &later_rows, &rest);
            if total <= target + tol {
                chosen = Some((idx, col));
                break;
            }
        }
        if let Some((idx, col)) = chosen {
            spent += c[r * m + col];
            pairs.push((r, col));
            free_cols.remove(idx);
            if pairs.len() == n.min(m) {
                break;
            }
        }
    }
    Ok(pairs)
}

pub fn assignment_cost(cost: &Tensor, pairs: &[(usize, usize)]) -> f64 {
    let m = cost.dims()[1];
    pairs
        .iter()
        .map(|&(r, c)| f64::from(cost.data()[r * m + c]))
        .sum()
}
