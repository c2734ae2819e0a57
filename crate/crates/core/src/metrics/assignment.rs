//! Dense linear sum assignment.
//!
//! [`solve`] is the Jonker–Volgenant method: column reduction, two rounds of
//! augmenting row reduction, then shortest augmenting paths for the rows that
//! are still free. [`solve_hungarian`] is the plain shortest-augmenting-path
//! Hungarian method, kept as an independent cross-check.

const UNASSIGNED: usize = usize::MAX;

/// Returns `assign` with row `i` matched to column `assign[i]`, minimising
/// `Σ_i cost[i * n + assign[i]]` over all permutations.
pub fn solve(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    let mut x = vec![UNASSIGNED; n];
    let mut y = vec![UNASSIGNED; n];
    let mut v = vec![0.0f64; n];
    let mut free_rows = vec![0usize; n];

    let mut n_free = column_reduction(n, cost, &mut free_rows, &mut x, &mut y, &mut v);
    for _ in 0..2 {
        if n_free == 0 {
            break;
        }
        n_free = augmenting_row_reduction(n, cost, n_free, &mut free_rows, &mut x, &mut y, &mut v);
    }
    if n_free > 0 {
        augment(n, cost, &free_rows[..n_free], &mut x, &mut y, &mut v);
    }
    x
}

fn column_reduction(n: usize, cost: &[f64], free_rows: &mut [usize], x: &mut [usize], y: &mut [usize], v: &mut [f64]) -> usize {
    v.iter_mut().for_each(|e| *e = f64::INFINITY);
    y.iter_mut().for_each(|e| *e = 0);
    for i in 0..n {
        let row = &cost[i * n..(i + 1) * n];
        for j in 0..n {
            if row[j] < v[j] {
                v[j] = row[j];
                y[j] = i;
            }
        }
    }
    let mut unique = vec![true; n];
    for j in (0..n).rev() {
        let i = y[j];
        if x[i] == UNASSIGNED {
            x[i] = j;
        } else {
            unique[i] = false;
            y[j] = UNASSIGNED;
        }
    }
    let mut n_free = 0;
    for i in 0..n {
        if x[i] == UNASSIGNED {
            free_rows[n_free] = i;
            n_free += 1;
        } else if unique[i] {
            let j = x[i];
            let row = &cost[i * n..(i + 1) * n];
            let mut min = f64::INFINITY;
            for j2 in 0..n {
                if j2 != j {
                    min = min.min(row[j2] - v[j2]);
                }
            }
            v[j] -= min;
        }
    }
    n_free
}

fn augmenting_row_reduction(
    n: usize,
    cost: &[f64],
    n_free: usize,
    free_rows: &mut [usize],
    x: &mut [usize],
    y: &mut [usize],
    v: &mut [f64],
) -> usize {
    let mut current = 0usize;
    let mut new_free = 0usize;
    let mut rr_count = 0usize;
    while current < n_free {
        rr_count += 1;
        let free_i = free_rows[current];
        current += 1;
        let row = &cost[free_i * n..(free_i + 1) * n];
        let (mut j1, mut v1) = (0usize, row[0] - v[0]);
        let (mut j2, mut v2) = (UNASSIGNED, f64::INFINITY);
        for j in 1..n {
            let c = row[j] - v[j];
            if c < v2 {
                if c >= v1 {
                    v2 = c;
                    j2 = j;
                } else {
                    v2 = v1;
                    v1 = c;
                    j2 = j1;
                    j1 = j;
                }
            }
        }
        let mut i0 = y[j1];
        let v1_new = v[j1] - (v2 - v1);
        let v1_lowers = v1_new < v[j1];
        if rr_count < current * n {
            if v1_lowers {
                v[j1] = v1_new;
            } else if i0 != UNASSIGNED && j2 != UNASSIGNED {
                j1 = j2;
                i0 = y[j2];
            }
            if i0 != UNASSIGNED {
                if v1_lowers {
                    current -= 1;
                    free_rows[current] = i0;
                } else {
                    free_rows[new_free] = i0;
                    new_free += 1;
                }
            }
        } else if i0 != UNASSIGNED {
            free_rows[new_free] = i0;
            new_free += 1;
        }
        x[free_i] = j1;
        y[j1] = free_i;
    }
    new_free
}

fn augment(n: usize, cost: &[f64], free_rows: &[usize], x: &mut [usize], y: &mut [usize], v: &mut [f64]) {
    let mut pred = vec![0usize; n];
    let mut cols = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    for &free_i in free_rows {
        let mut j = shortest_path(n, cost, free_i, y, v, &mut pred, &mut cols, &mut dist);
        loop {
            let i = pred[j];
            y[j] = i;
            std::mem::swap(&mut j, &mut x[i]);
            if i == free_i {
                break;
            }
        }
    }
}

/// Dijkstra over reduced costs from `start`; returns the first free column
/// reached and updates the column duals of the settled set.
#[allow(clippy::too_many_arguments)]
fn shortest_path(
    n: usize,
    cost: &[f64],
    start: usize,
    y: &[usize],
    v: &mut [f64],
    pred: &mut [usize],
    cols: &mut [usize],
    dist: &mut [f64],
) -> usize {
    let row = &cost[start * n..(start + 1) * n];
    for j in 0..n {
        cols[j] = j;
        pred[j] = start;
        dist[j] = row[j] - v[j];
    }
    // cols[..lo] settled, cols[lo..hi] at the current minimum, cols[hi..] unexplored
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut n_ready = 0usize;
    let mut final_j = UNASSIGNED;
    let mut block_min = f64::INFINITY;
    while final_j == UNASSIGNED {
        if lo == hi {
            n_ready = lo;
            hi = lo + 1;
            let mut min = dist[cols[lo]];
            for k in hi..n {
                let j = cols[k];
                if dist[j] <= min {
                    if dist[j] < min {
                        hi = lo;
                        min = dist[j];
                    }
                    cols[k] = cols[hi];
                    cols[hi] = j;
                    hi += 1;
                }
            }
            block_min = min;
            for &j in &cols[lo..hi] {
                if y[j] == UNASSIGNED {
                    final_j = j;
                }
            }
        }
        if final_j == UNASSIGNED {
            // scan
            while lo != hi {
                let j = cols[lo];
                lo += 1;
                let i = y[j];
                let min = dist[j];
                let row = &cost[i * n..(i + 1) * n];
                let h = row[j] - v[j] - min;
                let mut k = hi;
                while k < n {
                    let jj = cols[k];
                    let reduced = row[jj] - v[jj] - h;
                    if reduced < dist[jj] {
                        dist[jj] = reduced;
                        pred[jj] = i;
                        if reduced == min {
                            if y[jj] == UNASSIGNED {
                                final_j = jj;
                                break;
                            }
                            cols[k] = cols[hi];
                            cols[hi] = jj;
                            hi += 1;
                        }
                    }
                    k += 1;
                }
                if final_j != UNASSIGNED {
                    break;
                }
            }
        }
    }
    for &j in &cols[..n_ready] {
        v[j] += dist[j] - block_min;
    }
    final_j
}

/// Hungarian method with row/column potentials; `cost(i, j)` is queried lazily.
pub fn solve_hungarian<F>(n: usize, cost: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    // 1-based arrays; index 0 is the virtual source column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        min_slack.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - ui0 - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assign[col_owner[j] - 1] = j - 1;
        }
    }
    assign
}
