//! Bottleneck assignment: choose a pursuer → target permutation minimising
//! the largest assigned cost.
//!
//! [`solve_bap`] searches over the sorted distinct entries of the matrix for
//! the smallest threshold whose admissible pairs contain a perfect matching.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost used for pairs that cannot be intercepted, s.
pub const T_INF: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
    sentinel: f64,
}

impl CostMatrix {
    /// Builds a matrix from rows; every entry must be finite, nonnegative and
    /// no larger than `sentinel`.
    pub fn new(rows: Vec<Vec<f64>>, sentinel: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("cost matrix must have at least one row"));
        }
        if !(sentinel.is_finite() && sentinel > 0.0) {
            return Err(Error::invalid(format!("sentinel must be positive and finite, got {sentinel}")));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            entries.extend(row);
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0 && **v <= sentinel)) {
            return Err(Error::invalid(format!("cost entry {bad} outside [0, {sentinel}]")));
        }
        Ok(Self { n, entries, sentinel })
    }

    pub fn from_fn(n: usize, sentinel: f64, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let rows = (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect();
        Self::new(rows, sentinel)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn is_sentinel(&self, i: usize, j: usize) -> bool {
        self.get(i, j) >= self.sentinel
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n)
    }

    /// Same shape and sentinel, entries mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(self.n, self.sentinel, |i, j| {
            let v = self.get(i, j);
            if v >= self.sentinel {
                self.sentinel
            } else {
                f(v)
            }
        })
    }

    /// Writes one CSV row per pursuer, sentinel written literally.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, sentinel: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::invalid(format!("cost matrix CSV: {e}")))?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid(format!("cost matrix CSV: {e}")))?;
            rows.push(row);
        }
        Self::new(rows, sentinel)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| Error::csv(path, e))
    }
}

/// Pursuer `i` is assigned target `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub perm: Vec<usize>,
}

impl Assignment {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect() }
    }

    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &j in &perm {
            if j >= perm.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self { perm })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckResult {
    pub assignment: Assignment,
    pub value: f64,
    /// `(pursuer, target)` attaining `value`.
    pub bottleneck_pair: (usize, usize),
}

impl BottleneckResult {
    /// `{perm, value, bottleneck: [i, j]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "perm": self.assignment.perm,
            "value": self.value,
            "bottleneck": [self.bottleneck_pair.0, self.bottleneck_pair.1],
        })
    }
}

fn evaluate(c: &CostMatrix, a: &Assignment) -> (f64, (usize, usize)) {
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for (i, &j) in a.perm.iter().enumerate() {
        let v = c.get(i, j);
        if v > best.0 {
            best = (v, (i, j));
        }
    }
    best
}

/// Largest assigned cost.
pub fn bottleneck_cost(c: &CostMatrix, a: &Assignment) -> Result<f64> {
    if a.len() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: c.n(),
            actual: a.len(),
        });
    }
    Ok(evaluate(c, a).0)
}

/// Kuhn's augmenting-path matching. `match_of_col[j]` receives the row
/// matched to column `j`.
fn kuhn(n: usize, adj: impl Fn(usize, usize) -> bool, match_of_col: &mut [Option<usize>]) -> usize {
    fn augment(
        i: usize,
        n: usize,
        adj: &dyn Fn(usize, usize) -> bool,
        visited: &mut [bool],
        match_of_col: &mut [Option<usize>],
    ) -> bool {
        for j in 0..n {
            if adj(i, j) && !visited[j] {
                visited[j] = true;
                if match_of_col[j].map_or(true, |k| augment(k, n, adj, visited, match_of_col)) {
                    match_of_col[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    match_of_col.iter_mut().for_each(|m| *m = None);
    let mut visited = vec![false; n];
    let mut size = 0;
    for i in 0..n {
        visited.iter_mut().for_each(|v| *v = false);
        if augment(i, n, &adj, &mut visited, match_of_col) {
            size += 1;
        }
    }
    size
}

/// Size of a maximum matching in a square bipartite graph given as a row-major
/// adjacency matrix.
pub fn max_bipartite_matching(adj: &[Vec<bool>]) -> Result<usize> {
    let n = adj.len();
    if let Some(row) = adj.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: row.len(),
        });
    }
    let mut m = vec![None; n];
    Ok(kuhn(n, |i, j| adj[i][j], &mut m))
}

/// Exact bottleneck assignment by thresholding.
pub fn solve_bap(c: &CostMatrix) -> BottleneckResult {
    let n = c.n();
    let mut values: Vec<f64> = c.entries.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut match_of_col = vec![None; n];
    let feasible = |t: f64, m: &mut [Option<usize>]| kuhn(n, |i, j| c.get(i, j) <= t, m) == n;

    // The largest value always admits every pair.
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(values[mid], &mut match_of_col) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let ok = feasible(values[lo], &mut match_of_col);
    debug_assert!(ok);
    let mut perm = vec![0; n];
    for (j, m) in match_of_col.iter().enumerate() {
        perm[m.expect("perfect matching")] = j;
    }
    let assignment = Assignment { perm };
    let (value, pair) = evaluate(c, &assignment);
    BottleneckResult {
        assignment,
        value,
        bottleneck_pair: pair,
    }
}

/// Exhaustive search over all permutations, for `n ≤ 8`.
pub fn brute_force_bap(c: &CostMatrix) -> Result<BottleneckResult> {
    let n = c.n();
    if n > 8 {
        return Err(Error::invalid(format!("brute force limited to n <= 8, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    // Heap's algorithm
    let mut stack = vec![0usize; n];
    let mut consider = |p: &[usize]| {
        let v = (0..n).map(|i| c.get(i, p[i])).fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, p.to_vec()));
        }
    };
    consider(&perm);
    let mut i = 0;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            consider(&perm);
            stack[i] += 1;
            i = 0;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    let assignment = Assignment { perm };
    let (value, pair) = evaluate(c, &assignment);
    Ok(BottleneckResult {
        assignment,
        value,
        bottleneck_pair: pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::new(rows.iter().map(|r| r.to_vec()).collect(), T_INF).unwrap()
    }

    #[test]
    fn bottleneck_cost_examples() {
        let c = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(bottleneck_cost(&c, &Assignment::identity(2)).unwrap(), 4.0);
        assert_eq!(bottleneck_cost(&c, &Assignment::new(vec![1, 0]).unwrap()).unwrap(), 3.0);
        assert_eq!(bottleneck_cost(&m(&[&[5.0]]), &Assignment::identity(1)).unwrap(), 5.0);
        assert!(bottleneck_cost(&c, &Assignment::identity(3)).is_err());
    }

    #[test]
    fn matching_examples() {
        let all = vec![vec![true; 3]; 3];
        assert_eq!(max_bipartite_matching(&all).unwrap(), 3);
        let eye: Vec<Vec<bool>> = (0..3).map(|i| (0..3).map(|j| i == j).collect()).collect();
        assert_eq!(max_bipartite_matching(&eye).unwrap(), 3);
        let mut hole = all.clone();
        hole[1] = vec![false; 3];
        assert_eq!(max_bipartite_matching(&hole).unwrap(), 2);
    }

    #[test]
    fn solve_examples() {
        let c = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let r = solve_bap(&c);
        assert_eq!(r.value, 3.0);
        assert_eq!(r.assignment.perm, vec![1, 0]);
        assert_eq!(r.bottleneck_pair, (1, 0));
        assert_eq!(brute_force_bap(&c).unwrap().value, 3.0);

        let flat = CostMatrix::from_fn(4, T_INF, |_, _| 7.0).unwrap();
        assert_eq!(solve_bap(&flat).value, 7.0);

        let col = CostMatrix::from_fn(3, T_INF, |_, j| if j == 2 { T_INF } else { 1.0 }).unwrap();
        let r = solve_bap(&col);
        assert_eq!(r.value, T_INF);
        assert_eq!(r.bottleneck_pair.1, 2);
    }

    #[test]
    fn rejects_malformed_matrices() {
        assert!(CostMatrix::new(vec![], T_INF).is_err());
        assert!(CostMatrix::new(vec![vec![1.0, 2.0]], T_INF).is_err());
        assert!(CostMatrix::new(vec![vec![-1.0]], T_INF).is_err());
        assert!(CostMatrix::new(vec![vec![2.0 * T_INF]], T_INF).is_err());
        assert!(Assignment::new(vec![0, 0]).is_err());
        let big = CostMatrix::from_fn(9, T_INF, |i, j| (i + j) as f64).unwrap();
        assert!(brute_force_bap(&big).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = m(&[&[1.5, T_INF], &[0.25, 3.0]]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("1000000"));
        assert_eq!(CostMatrix::read_csv(buf.as_slice(), T_INF).unwrap(), c);
    }

    #[test]
    fn json_shape() {
        let r = solve_bap(&m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let v = r.to_json();
        assert_eq!(v["perm"], serde_json::json!([1, 0]));
        assert_eq!(v["value"], serde_json::json!(3.0));
        assert_eq!(v["bottleneck"], serde_json::json!([1, 0]));
    }

    fn matrix_strategy() -> impl Strategy<Value = CostMatrix> {
        (2usize..=7).prop_flat_map(|n| {
            // small integer pool forces duplicates; 0 encodes the sentinel
            proptest::collection::vec(0u8..12, n * n).prop_map(move |cells| {
                CostMatrix::from_fn(n, T_INF, |i, j| match cells[i * n + j] {
                    0 => T_INF,
                    v => f64::from(v) * 0.5,
                })
                .unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn threshold_matches_enumeration(c in matrix_strategy()) {
            let fast = solve_bap(&c);
            let slow = brute_force_bap(&c).unwrap();
            prop_assert_eq!(fast.value, slow.value);
            prop_assert_eq!(bottleneck_cost(&c, &fast.assignment).unwrap(), fast.value);
            prop_assert_eq!(c.get(fast.bottleneck_pair.0, fast.bottleneck_pair.1), fast.value);
        }

        #[test]
        fn monotone_transform_preserves_optimal_assignment(c in matrix_strategy()) {
            let f = |v: f64| (v + 1.0).ln() * 3.0 + v * v;
            let t = c.map(f).unwrap();
            let r = solve_bap(&c);
            let rt = solve_bap(&t);
            let expect = if r.value >= T_INF { T_INF } else { f(r.value) };
            prop_assert_eq!(rt.value, expect);
            prop_assert_eq!(bottleneck_cost(&t, &r.assignment).unwrap(), rt.value);
        }

        #[test]
        fn any_assignment_is_no_better(c in matrix_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..c.n()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = Assignment::new(perm).unwrap();
            prop_assert!(bottleneck_cost(&c, &a).unwrap() >= solve_bap(&c).value);
        }
    }
}
