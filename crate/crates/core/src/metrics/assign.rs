/// Minimum-cost assignment between rows and columns of a rectangular cost
/// matrix (`costs[r][c]`). Returns `min(rows, cols)` pairs `(row, col)`
/// sorted by row.
pub fn hungarian(costs: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // the potential-based algorithm wants rows <= cols
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| costs[r][c]).collect()).collect();
        let mut pairs: Vec<(usize, usize)> = hungarian(&t).into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return pairs;
    }
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row assigned to column j (1-based, 0 = none)
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
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

/// Cells up to this size per side are matched by enumeration.
pub const ENUMERATION_LIMIT: usize = 6;

const TIE_TOL: f64 = 1e-9;

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    for k in 0..3 {
        if a[k] < b[k] - TIE_TOL {
            return true;
        }
        if a[k] > b[k] + TIE_TOL {
            return false;
        }
    }
    false
}

/// Exhaustive search for the injective assignment minimising the
/// lexicographic sum of `cost(row, col)`. The first strictly smaller total
/// in enumeration order wins.
pub fn enumerate_assignment(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> [f64; 3]) -> Vec<(usize, usize)> {
    struct Search<'a, F> {
        rows: usize,
        cols: usize,
        cost: &'a F,
        used: Vec<bool>,
        cur: Vec<(usize, usize)>,
        best: Option<([f64; 3], Vec<(usize, usize)>)>,
    }
    impl<F: Fn(usize, usize) -> [f64; 3]> Search<'_, F> {
        // rows are the smaller side here; `swap` restores orientation
        fn rec(&mut self, r: usize, acc: [f64; 3], swap: bool) {
            if r == self.rows {
                if self.best.as_ref().is_none_or(|(b, _)| lex_less(&acc, b)) {
                    self.best = Some((acc, self.cur.clone()));
                }
                return;
            }
            for c in 0..self.cols {
                if self.used[c] {
                    continue;
                }
                let k = if swap { (self.cost)(c, r) } else { (self.cost)(r, c) };
                self.used[c] = true;
                self.cur.push(if swap { (c, r) } else { (r, c) });
                self.rec(r + 1, [acc[0] + k[0], acc[1] + k[1], acc[2] + k[2]], swap);
                self.cur.pop();
                self.used[c] = false;
            }
        }
    }
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let swap = rows > cols;
    let (small, large) = if swap { (cols, rows) } else { (rows, cols) };
    let mut s = Search {
        rows: small,
        cols: large,
        cost: &cost,
        used: vec![false; large],
        cur: Vec::with_capacity(small),
        best: None,
    };
    s.rec(0, [0.0; 3], swap);
    let mut pairs = s.best.map(|b| b.1).unwrap_or_default();
    pairs.sort_unstable();
    pairs
}
