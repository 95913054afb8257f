//! Brute-force total unimodularity check for small matrices.

use crate::rational::Rational;

/// Largest matrix (rows * columns) the brute-force check accepts.
pub const TU_CHECK_CAP: usize = 144;

pub type Matrix = Vec<Vec<Rational>>;

/// Exact determinant of a small integer matrix by Bareiss elimination.
fn det(mut a: Vec<Vec<i64>>) -> i64 {
    let n = a.len();
    let mut sign = 1i64;
    let mut prev = 1i64;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Whether every square submatrix has determinant in {-1, 0, 1}.
///
/// Entries outside {-1, 0, 1} make the answer `false` at once. Returns `None`
/// when the matrix is larger than [`TU_CHECK_CAP`] cells.
pub fn is_totally_unimodular(m: &Matrix) -> Option<bool> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows * cols > TU_CHECK_CAP {
        return None;
    }
    let mut ints = Vec::with_capacity(rows);
    for row in m {
        let mut r = Vec::with_capacity(cols);
        for v in row {
            if *v == 0 {
                r.push(0);
            } else if *v == 1 {
                r.push(1);
            } else if *v == -1 {
                r.push(-1);
            } else {
                return Some(false);
            }
        }
        ints.push(r);
    }
    for k in 2..=rows.min(cols) {
        let row_sets = subsets(rows, k);
        let col_sets = subsets(cols, k);
        for rs in &row_sets {
            for cs in &col_sets {
                let sub: Vec<Vec<i64>> = rs
                    .iter()
                    .map(|&i| cs.iter().map(|&j| ints[i][j]).collect())
                    .collect();
                if det(sub).abs() > 1 {
                    return Some(false);
                }
            }
        }
    }
    Some(true)
}
