use super::AttentionError;

/// Minimum-cost perfect matching. `matching[row] = column`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub matching: Vec<usize>,
    /// Minimum total cost.
    pub total: f64,
}

/// Row-major square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, AttentionError> {
        if data.len() != n * n {
            return Err(AttentionError::NotSquare { n, len: data.len() });
        }
        if let Some(&bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AttentionError::BadCost(bad));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AttentionError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(AttentionError::NotSquare { n, len: r.len() });
        }
        Self::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// O(n³) shortest-augmenting-path solver with row/column potentials over the
/// rows in `rows` and columns in `cols`. Returns `(row, col)` pairs.
fn solve(c: &Quantized, rows: &[usize], cols: &[usize]) -> Vec<(usize, usize)> {
    let n = rows.len();
    let cost = |i: usize, j: usize| c.at(rows[i - 1], cols[j - 1]);
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i128::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i128::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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
    (1..=n).map(|j| (rows[owner[j] - 1], cols[j - 1])).collect()
}

/// Costs rounded onto a grid `2^-shift` chosen from the largest entry, so
/// every entry keeps about 80 significant bits and all sums are exact.
struct Quantized {
    n: usize,
    data: Vec<i128>,
    shift: i32,
}

impl Quantized {
    fn new(c: &CostMatrix) -> Self {
        let max = c.data.iter().copied().fold(0.0, f64::max);
        let shift = if max > 0.0 { (80 - max.log2().floor() as i32).clamp(-1000, 1000) } else { 0 };
        let scale = 2f64.powi(shift);
        let data = c.data.iter().map(|&v| (v * scale).round() as i128).collect();
        Self { n: c.n, data, shift }
    }

    fn at(&self, i: usize, j: usize) -> i128 {
        self.data[i * self.n + j]
    }

    fn sum(&self, pairs: impl IntoIterator<Item = (usize, usize)>) -> i128 {
        pairs.into_iter().map(|(i, j)| self.at(i, j)).sum()
    }

    fn to_f64(&self, total: i128) -> f64 {
        total as f64 * 2f64.powi(-self.shift)
    }
}

/// Optimal assignment; among optimal matchings, the lexicographically
/// smallest `matching` vector is returned.
///
/// The search runs in exact integer arithmetic on the quantized costs, so
/// permuting rows or columns, or transposing, gives a bit-identical total.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let n = cost.size();
    let q = Quantized::new(cost);
    let all: Vec<usize> = (0..n).collect();
    let best = q.sum(solve(&q, &all, &all));

    // Fix rows in order, each to the smallest column that still admits an
    // optimal completion.
    let mut matching = Vec::with_capacity(n);
    let mut fixed = 0i128;
    let mut free_cols = all;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let pos = (0..free_cols.len())
            .find(|&pos| {
                let mut rest_cols = free_cols.clone();
                let col = rest_cols.remove(pos);
                fixed + q.at(row, col) + q.sum(solve(&q, &rest_rows, &rest_cols)) == best
            })
            .expect("an optimal completion exists");
        let col = free_cols.remove(pos);
        fixed += q.at(row, col);
        matching.push(col);
    }
    Assignment {
        matching,
        total: q.to_f64(best),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_zero() {
        let c = CostMatrix::from_rows(&[vec![0.0, 9.0, 9.0], vec![9.0, 0.0, 9.0], vec![9.0, 9.0, 0.0]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.matching, vec![0, 1, 2]);
        assert_eq!(a.total, 0.0);
    }

    #[test]
    fn three_by_three() {
        let c = CostMatrix::from_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.total, 5.0);
        assert_eq!(a.matching, vec![1, 0, 2]);
    }

    #[test]
    fn ties_pick_lowest_indices() {
        let c = CostMatrix::new(3, vec![1.0; 9]).unwrap();
        assert_eq!(hungarian(&c).matching, vec![0, 1, 2]);
        let c = CostMatrix::from_rows(&[vec![2.0, 1.0, 1.0], vec![1.0, 2.0, 1.0], vec![1.0, 1.0, 2.0]]).unwrap();
        assert_eq!(hungarian(&c).matching, vec![1, 2, 0]);
    }

    #[test]
    fn totals_ignore_row_order_and_transposition() {
        // Costs |x_i - y_j| with every x above every y: all matchings tie in
        // exact arithmetic but not in naive floating-point sums.
        let xs: [f64; 4] = [0.41439865913314, 0.49846180811616, 0.74952599679642, 0.75444339420793];
        let ys = [0.35642580116349, 0.30753224767166, 0.45083573310877, 0.1024307470994];
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| (x - y).abs()).collect()).collect();
        let base = hungarian(&CostMatrix::from_rows(&rows).unwrap()).total;
        let transposed: Vec<Vec<f64>> = (0..4).map(|j| (0..4).map(|i| rows[i][j]).collect()).collect();
        assert_eq!(hungarian(&CostMatrix::from_rows(&transposed).unwrap()).total, base);
        for shift in 1..4 {
            let rotated: Vec<Vec<f64>> = (0..4).map(|i| rows[(i + shift) % 4].clone()).collect();
            assert_eq!(hungarian(&CostMatrix::from_rows(&rotated).unwrap()).total, base);
        }
    }

    #[test]
    fn validation() {
        assert!(matches!(CostMatrix::new(2, vec![0.0; 3]), Err(AttentionError::NotSquare { .. })));
        assert!(matches!(CostMatrix::new(1, vec![-1.0]), Err(AttentionError::BadCost(_))));
        assert!(matches!(CostMatrix::new(1, vec![f64::NAN]), Err(AttentionError::BadCost(_))));
        assert!(CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert_eq!(hungarian(&CostMatrix::new(0, vec![]).unwrap()).total, 0.0);
    }
}
