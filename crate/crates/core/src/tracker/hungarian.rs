//! Minimum-cost rectangular assignment (Kuhn–Munkres with potentials, O(n²m)).

/// Optimal assignment for a row-major `rows × cols` cost matrix. Returns, for each
/// row, the assigned column (`None` only when there are more rows than columns).
pub fn solve(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(cost.len(), rows * cols, "cost matrix shape");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = cost[r * cols + c];
            }
        }
        let by_col = solve(&t, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    let (n, m) = (rows, cols);
    let a = |i: usize, j: usize| cost[(i - 1) * m + (j - 1)];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // p[j]: row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(cost: &[f64], cols: usize, a: &[Option<usize>]) -> f64 {
        a.iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| cost[r * cols + c]))
            .sum()
    }

    fn brute(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn rec(cost: &[f64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>) -> f64 {
            if r == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[r * cols + c] + rec(cost, rows, cols, r + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, rows, cols, 0, &mut vec![false; cols])
    }

    #[test]
    fn beats_greedy_on_crossed_costs() {
        // greedy takes (0,0)=0.1 then is forced into (1,1)=0.9; optimum is 0.2+0.3
        let cost = [0.1, 0.2, 0.3, 0.9];
        let a = solve(&cost, 2, 2);
        assert_eq!(a, vec![Some(1), Some(0)]);
        assert!((total(&cost, 2, &a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rectangular_shapes() {
        let cost = [5.0, 1.0, 3.0];
        assert_eq!(solve(&cost, 1, 3), vec![Some(1)]);
        assert_eq!(solve(&cost, 3, 1), vec![None, Some(0), None]);
        assert!(solve(&[], 0, 4).is_empty());
        assert_eq!(solve(&[], 2, 0), vec![None, None]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(rows in 1usize..5, cols in 1usize..5, seed in prop::collection::vec(0.0f64..1.0, 16)) {
            let cost: Vec<f64> = (0..rows * cols).map(|i| seed[i]).collect();
            let a = solve(&cost, rows, cols);
            let k = rows.min(cols);
            prop_assert_eq!(a.iter().filter(|x| x.is_some()).count(), k);
            let best = if rows <= cols {
                brute(&cost, rows, cols)
            } else {
                let mut t = vec![0.0; rows * cols];
                for r in 0..rows { for c in 0..cols { t[c * rows + r] = cost[r * cols + c]; } }
                brute(&t, cols, rows)
            };
            prop_assert!((total(&cost, cols, &a) - best).abs() < 1e-9);
        }
    }
}
