//! Maximum-weight bipartite matching on a dense non-negative weight matrix.
//!
//! Shortest-augmenting-path Hungarian method, `O(n^2 m)` for an `n x m` matrix
//! with `n <= m` (the matrix is transposed otherwise). Zero-weight pairs are never
//! reported as matched.

/// Solves `min sum cost[i][assign[i]]` for `rows <= cols`; returns the column of each row.
fn min_cost_rows(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // owner[j]: 1-based row matched to column j, 0 = free
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

    let mut assign = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Weight matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "weight matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Matching of maximum total weight, as `(row, col)` pairs sorted by row.
///
/// Only strictly positive pairs are returned. Among exactly tied optima the
/// result is pushed towards the lexicographically smallest pair list by
/// pairwise exchanges, which resolves duplicated rows or columns deterministically.
pub fn max_weight_matching(weights: &WeightMatrix) -> Vec<(usize, usize)> {
    let (rows, cols) = (weights.rows, weights.cols);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, usize)> = if rows <= cols {
        let cost: Vec<f64> = weights.data.iter().map(|w| -w).collect();
        min_cost_rows(&cost, rows, cols)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let mut cost = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                cost.push(-weights.get(i, j));
            }
        }
        min_cost_rows(&cost, cols, rows)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    };
    pairs.retain(|&(i, j)| weights.get(i, j) > 0.0);
    canonicalize_ties(weights, &mut pairs);
    pairs
}

fn canonicalize_ties(w: &WeightMatrix, pairs: &mut Vec<(usize, usize)>) {
    loop {
        pairs.sort_unstable();
        if !improve_once(w, pairs) {
            break;
        }
        pairs.retain(|&(i, j)| w.get(i, j) > 0.0);
    }
}

fn improve_once(w: &WeightMatrix, pairs: &mut [(usize, usize)]) -> bool {
    let mut row_used = vec![false; w.rows];
    let mut col_used = vec![false; w.cols];
    for &(i, j) in pairs.iter() {
        row_used[i] = true;
        col_used[j] = true;
    }
    for idx in 0..pairs.len() {
        let (i, a) = pairs[idx];
        // same row, smaller free column
        if let Some(b) = (0..a).find(|&b| !col_used[b] && w.get(i, b) == w.get(i, a)) {
            pairs[idx].1 = b;
            return true;
        }
        // same column, smaller free row
        if let Some(k) = (0..i).find(|&k| !row_used[k] && w.get(k, a) == w.get(i, a)) {
            pairs[idx].0 = k;
            return true;
        }
        for other in idx + 1..pairs.len() {
            let (k, b) = pairs[other];
            if b < a && w.get(i, b) + w.get(k, a) == w.get(i, a) + w.get(k, b) {
                pairs[idx].1 = b;
                pairs[other].1 = a;
                return true;
            }
        }
    }
    false
}
