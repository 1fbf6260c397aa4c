use crate::error::{Error, Result};

/// Minimum-cost perfect assignment of a square matrix (potentials method).
/// Returns the column chosen for each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based with a dummy column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = INF;
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
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[owner[j] - 1] = j - 1;
    }
    col_of
}

fn best_mass(m: &[Vec<i64>], rows: &[usize], cols: &[usize]) -> i64 {
    let cost: Vec<Vec<i64>> = rows.iter().map(|&r| cols.iter().map(|&c| -m[r][c]).collect()).collect();
    min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| m[rows[i]][cols[j]])
        .sum()
}

/// Maximum-weight one-to-one matching of rows to columns.
///
/// Among optimal matchings the lexicographically smallest permutation
/// (compared row by row) is returned. Each row is fixed to the smallest
/// column that still admits an optimal completion, which costs one
/// assignment solve per candidate.
pub fn kuhn_munkres(m: &[Vec<i64>]) -> Result<Vec<usize>> {
    let n = m.len();
    if let Some(row) = m.iter().find(|r| r.len() != n) {
        return Err(Error::NonSquare { rows: n, cols: row.len() });
    }
    let target = best_mass(m, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let mut perm = Vec::with_capacity(n);
    let mut free: Vec<usize> = (0..n).collect();
    let mut fixed = 0i64;
    for r in 0..n {
        let rest: Vec<usize> = (r + 1..n).collect();
        let pick = free
            .iter()
            .position(|&c| {
                let others: Vec<usize> = free.iter().copied().filter(|&o| o != c).collect();
                fixed + m[r][c] + best_mass(m, &rest, &others) == target
            })
            .expect("an optimal completion always exists");
        let c = free.remove(pick);
        fixed += m[r][c];
        perm.push(c);
    }
    Ok(perm)
}
