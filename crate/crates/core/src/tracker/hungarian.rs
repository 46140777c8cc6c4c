//! Minimum-cost linear assignment (Kuhn-Munkres with row/column potentials).

use crate::error::{Error, Result};

/// Solves the rectangular assignment problem for a row-major cost matrix.
///
/// Returns `min(rows, cols)` pairs `(row, col)` sorted by row. Column scans
/// run in ascending order and only strictly smaller reduced costs replace
/// the incumbent, so among equal reduced costs the lowest index wins and the
/// result is fully deterministic.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = cost.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    let cols = cost[0].len();
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::Validation("cost matrix rows differ in length".into()));
    }
    for (i, row) in cost.iter().enumerate() {
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("cost[{i}][{j}] = {}", row[j])));
        }
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    if rows <= cols {
        Ok(solve(rows, cols, |i, j| cost[i][j]))
    } else {
        let mut pairs: Vec<(usize, usize)> = solve(cols, rows, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

/// Total cost of an assignment, summed in row order.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}

// n <= m. 1-based internally; index 0 is the virtual source.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&c, &a), 2.0);
    }

    #[test]
    fn single_cell() {
        assert_eq!(hungarian(&[vec![5.0]]).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]];
        let a = hungarian(&wide).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(assignment_cost(&wide, &a), 3.0);

        let tall: Vec<Vec<f64>> = (0..3).map(|j| wide.iter().map(|r| r[j]).collect()).collect();
        let b = hungarian(&tall).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(assignment_cost(&tall, &b), 3.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(hungarian(&[vec![1.0, f64::NAN]]).is_err());
        assert!(hungarian(&[vec![f64::INFINITY]]).is_err());
    }

    #[test]
    fn empty_inputs() {
        assert!(hungarian(&[]).unwrap().is_empty());
        assert!(hungarian(&[vec![], vec![]]).unwrap().is_empty());
    }

    #[test]
    fn ties_are_deterministic() {
        let c = vec![vec![1.0; 3]; 3];
        let a = hungarian(&c).unwrap();
        assert_eq!(a, hungarian(&c).unwrap());
        assert_eq!(a.len(), 3);
    }
}
