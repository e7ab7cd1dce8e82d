//! Missing-structure matrices: monotone detection and rearrangement,
//! pattern decomposition, the per-pattern propriety condition (H1), the
//! strict containment order on structures, and the Harris-ergodicity
//! witness search used before running an imputation chain.
//!
//! A structure is *monotone* when (i) observing entry (i, j) forces every
//! entry above and to the right to be observed, and (ii) the last response
//! column is fully observed. Rows then sort into d staircase patterns:
//! pattern l observes exactly columns l..d.

use nalgebra::DMatrix;

use crate::data::{Dataset, Prior};
use crate::error::{Error, Result};
use crate::linalg;

/// An n x d observation mask; `true` marks an observed response entry.
/// Every row must contain at least one observed entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingStructure {
    mask: DMatrix<bool>,
}

impl MissingStructure {
    pub fn new(mask: DMatrix<bool>) -> Result<Self> {
        if mask.nrows() == 0 || mask.ncols() == 0 {
            return Err(Error::Structure("empty mask".into()));
        }
        for i in 0..mask.nrows() {
            if !(0..mask.ncols()).any(|j| mask[(i, j)]) {
                return Err(Error::Structure(format!(
                    "row {i} has no observed entry"
                )));
            }
        }
        Ok(MissingStructure { mask })
    }

    /// The fully observed structure.
    pub fn all_observed(n: usize, d: usize) -> Self {
        MissingStructure {
            mask: DMatrix::from_element(n, d, true),
        }
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        MissingStructure {
            mask: data.mask().clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.mask.nrows()
    }

    pub fn d(&self) -> usize {
        self.mask.ncols()
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    /// Number of observed entries in row `i`.
    pub fn observed_count(&self, i: usize) -> usize {
        (0..self.d()).filter(|&j| self.mask[(i, j)]).count()
    }

    pub fn min_observed(&self) -> usize {
        (0..self.n()).map(|i| self.observed_count(i)).min().unwrap()
    }

    /// Entries observed here but not in `other` (both shapes must match).
    pub fn difference(&self, other: &MissingStructure) -> Result<DMatrix<bool>> {
        if self.mask.shape() != other.mask.shape() {
            return Err(Error::Structure("shape mismatch in difference".into()));
        }
        Ok(DMatrix::from_fn(self.n(), self.d(), |i, j| {
            self.mask[(i, j)] && !other.mask[(i, j)]
        }))
    }
}

/// True when the mask is monotone as laid out (no permutation applied).
pub fn is_monotone(ms: &MissingStructure) -> bool {
    monotone_patterns(ms.mask()).is_some()
}

/// If the mask is monotone, return the pattern index (1-based) of each row;
/// otherwise `None`. Row i belongs to pattern l when it observes exactly
/// columns l..d; pattern indices must be nondecreasing down the rows.
fn monotone_patterns(mask: &DMatrix<bool>) -> Option<Vec<usize>> {
    let (n, d) = mask.shape();
    let mut patterns = Vec::with_capacity(n);
    let mut prev = 1usize;
    for i in 0..n {
        if !mask[(i, d - 1)] {
            return None;
        }
        // leading missing run determines the candidate pattern
        let l = (0..d).position(|j| mask[(i, j)])? + 1;
        // the row must observe the full suffix l..d
        if (l - 1..d).any(|j| !mask[(i, j)]) {
            return None;
        }
        if l < prev {
            return None;
        }
        prev = l;
        patterns.push(l);
    }
    Some(patterns)
}

/// A monotone arrangement of a structure: per-row patterns, pattern counts,
/// cumulative counts, and the permutations that produced it.
///
/// `row_permutation[i]` / `column_permutation[j]` give the original row /
/// column sitting at position i / j of the arranged mask.
#[derive(Debug, Clone)]
pub struct MonotoneDecomposition {
    pub pattern_of_row: Vec<usize>,
    pub n_per_pattern: Vec<usize>,
    pub cumulative: Vec<usize>,
    pub row_permutation: Vec<usize>,
    pub column_permutation: Vec<usize>,
}

impl MonotoneDecomposition {
    fn from_patterns(
        patterns: Vec<usize>,
        d: usize,
        row_permutation: Vec<usize>,
        column_permutation: Vec<usize>,
    ) -> Self {
        let mut n_per_pattern = vec![0usize; d];
        for &l in &patterns {
            n_per_pattern[l - 1] += 1;
        }
        let mut cumulative = vec![0usize; d];
        let mut acc = 0;
        for l in 0..d {
            acc += n_per_pattern[l];
            cumulative[l] = acc;
        }
        MonotoneDecomposition {
            pattern_of_row: patterns,
            n_per_pattern,
            cumulative,
            row_permutation,
            column_permutation,
        }
    }

    pub fn n(&self) -> usize {
        self.pattern_of_row.len()
    }

    pub fn d(&self) -> usize {
        self.n_per_pattern.len()
    }

    pub fn is_identity(&self) -> bool {
        self.row_permutation.iter().enumerate().all(|(i, &r)| i == r)
            && self.column_permutation.iter().enumerate().all(|(j, &c)| j == c)
    }

    /// Response block for pattern `l` (1-based): the first `cumulative[l-1]`
    /// arranged rows restricted to arranged columns l..d.
    pub fn block_y(&self, data: &Dataset, l: usize) -> DMatrix<f64> {
        let rows = self.cumulative[l - 1];
        let cols = self.d() - l + 1;
        DMatrix::from_fn(rows, cols, |i, j| {
            data.y()[(self.row_permutation[i], self.column_permutation[l - 1 + j])]
        })
    }

    /// Design block for pattern `l`: the first `cumulative[l-1]` arranged rows.
    pub fn block_x(&self, data: &Dataset, l: usize) -> DMatrix<f64> {
        let rows = self.cumulative[l - 1];
        DMatrix::from_fn(rows, data.p(), |i, j| {
            data.x()[(self.row_permutation[i], j)]
        })
    }

    /// The arranged mask this decomposition describes.
    pub fn arranged_mask(&self) -> DMatrix<bool> {
        let (n, d) = (self.n(), self.d());
        DMatrix::from_fn(n, d, |i, j| j + 1 >= self.pattern_of_row[i])
    }

    /// The same staircase mask expressed in original coordinates.
    pub fn mask_in_original_frame(&self) -> DMatrix<bool> {
        let (n, d) = (self.n(), self.d());
        let arranged = self.arranged_mask();
        let mut mask = DMatrix::from_element(n, d, false);
        for i in 0..n {
            for j in 0..d {
                if arranged[(i, j)] {
                    mask[(self.row_permutation[i], self.column_permutation[j])] = true;
                }
            }
        }
        mask
    }
}

/// Decompose an already-monotone structure (identity permutations).
pub fn decompose(ms: &MissingStructure) -> Result<MonotoneDecomposition> {
    let patterns = monotone_patterns(ms.mask())
        .ok_or_else(|| Error::Structure("structure is not monotone".into()))?;
    Ok(MonotoneDecomposition::from_patterns(
        patterns,
        ms.d(),
        (0..ms.n()).collect(),
        (0..ms.d()).collect(),
    ))
}

fn patterns_under_column_order(mask: &DMatrix<bool>, cols: &[usize]) -> Option<Vec<usize>> {
    let (n, d) = mask.shape();
    let mut patterns = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = None;
        for (pos, &c) in cols.iter().enumerate() {
            if mask[(i, c)] {
                l = Some(pos + 1);
                break;
            }
        }
        let l = l?;
        // every column from position l-1 on must be observed
        if cols[l - 1..].iter().any(|&c| !mask[(i, c)]) {
            return None;
        }
        patterns.push(l);
    }
    if !(0..n).all(|i| mask[(i, cols[d - 1])]) {
        return None;
    }
    Some(patterns)
}

fn sort_rows_by_pattern(patterns: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..patterns.len()).collect();
    order.sort_by_key(|&i| (patterns[i], i));
    let sorted = order.iter().map(|&i| patterns[i]).collect();
    (order, sorted)
}

/// Search for row and column permutations that make the structure monotone.
///
/// Strategy: greedy first (columns sorted by observed count ascending, ties
/// by original index; rows sorted by pattern). If the greedy arrangement is
/// not monotone and d <= 8, fall back to exhaustive column permutations with
/// rows re-sorted per permutation. Beyond d = 8 the search gives up; `None`
/// reports that no arrangement was found, not that none exists.
pub fn try_monotonize(ms: &MissingStructure) -> Option<MonotoneDecomposition> {
    let mask = ms.mask();
    let (n, d) = mask.shape();

    let mut col_order: Vec<usize> = (0..d).collect();
    let observed_per_col: Vec<usize> = (0..d)
        .map(|j| (0..n).filter(|&i| mask[(i, j)]).count())
        .collect();
    col_order.sort_by_key(|&j| (observed_per_col[j], j));

    let greedy = patterns_under_column_order(mask, &col_order).map(|patterns| {
        let (row_order, sorted) = sort_rows_by_pattern(&patterns);
        MonotoneDecomposition::from_patterns(sorted, d, row_order, col_order.clone())
    });
    if greedy.is_some() {
        return greedy;
    }
    if d > 8 {
        return None;
    }

    let mut cols: Vec<usize> = (0..d).collect();
    permute_search(mask, &mut cols, 0)
}

fn permute_search(
    mask: &DMatrix<bool>,
    cols: &mut Vec<usize>,
    k: usize,
) -> Option<MonotoneDecomposition> {
    let d = cols.len();
    if k == d {
        return patterns_under_column_order(mask, cols).map(|patterns| {
            let (row_order, sorted) = sort_rows_by_pattern(&patterns);
            MonotoneDecomposition::from_patterns(sorted, d, row_order, cols.clone())
        });
    }
    for i in k..d {
        cols.swap(k, i);
        if let Some(found) = permute_search(mask, cols, k + 1) {
            return Some(found);
        }
        cols.swap(k, i);
    }
    None
}

/// Per-pattern report for the propriety condition H1.
#[derive(Debug, Clone, serde::Serialize)]
pub struct H1Pattern {
    /// 1-based pattern index.
    pub pattern: usize,
    /// Cumulative row count available to this pattern.
    pub rows: usize,
    pub required_rank: usize,
    pub rank: usize,
    pub rank_ok: bool,
    pub count_ok: bool,
    /// Chi-square degrees of freedom this pattern would contribute.
    pub df: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct H1Report {
    pub patterns: Vec<H1Pattern>,
    pub pass: bool,
}

/// Condition H1 for a monotone arrangement: for every pattern l, the stacked
/// block `[y_(l) : x_(l)]` has full column rank `p + d - l + 1`, and the
/// cumulative row count exceeds `p + d - m + l - 1` strictly. The reported
/// `df = N_l - l + m - p - d + 1` is positive exactly when the count check
/// passes.
pub fn check_h1(dec: &MonotoneDecomposition, data: &Dataset, prior: &Prior) -> H1Report {
    let d = dec.d();
    let p = data.p();
    let m = prior.m;
    let mut patterns = Vec::with_capacity(d);
    let mut pass = true;
    for l in 1..=d {
        let rows = dec.cumulative[l - 1];
        let required_rank = p + d - l + 1;
        let yb = dec.block_y(data, l);
        let xb = dec.block_x(data, l);
        let mut joined = DMatrix::zeros(rows, yb.ncols() + p);
        joined.view_mut((0, 0), (rows, yb.ncols())).copy_from(&yb);
        joined.view_mut((0, yb.ncols()), (rows, p)).copy_from(&xb);
        let rank = linalg::rank(&joined);
        let rank_ok = rank == required_rank;
        let df = rows as f64 - l as f64 + m - p as f64 - d as f64 + 1.0;
        let count_ok = (rows as f64) > (p + d) as f64 - m + l as f64 - 1.0;
        pass &= rank_ok && count_ok;
        patterns.push(H1Pattern {
            pattern: l,
            rows,
            required_rank,
            rank,
            rank_ok,
            count_ok,
            df,
        });
    }
    H1Report { patterns, pass }
}

/// Full-data variant of the propriety condition: `rank([y : x]) = p + d` and
/// `n > p + 2d - m - 1`. The response must be complete (observed or imputed).
pub fn check_h1_full(y: &DMatrix<f64>, x: &DMatrix<f64>, prior: &Prior) -> bool {
    let (n, d) = y.shape();
    let p = x.ncols();
    let count_ok = (n as f64) > (p + 2 * d) as f64 - prior.m - 1.0;
    if !count_ok {
        return false;
    }
    let mut joined = DMatrix::zeros(n, d + p);
    joined.view_mut((0, 0), (n, d)).copy_from(y);
    joined.view_mut((0, d), (n, p)).copy_from(x);
    linalg::rank(&joined) == p + d
}

/// Strict containment of observed entries: `k1` precedes `k2` when the two
/// differ and every entry observed under `k1` is observed under `k2`.
pub fn precedes(k1: &MissingStructure, k2: &MissingStructure) -> Result<bool> {
    if k1.mask().shape() != k2.mask().shape() {
        return Err(Error::Structure("shape mismatch in precedes".into()));
    }
    let mut equal = true;
    for i in 0..k1.n() {
        for j in 0..k1.d() {
            if k1.is_observed(i, j) && !k2.is_observed(i, j) {
                return Ok(false);
            }
            equal &= k1.is_observed(i, j) == k2.is_observed(i, j);
        }
    }
    Ok(!equal)
}

/// A monotone substructure certifying that the per-pattern propriety
/// condition holds for any monotone superstructure of the base mask, no
/// matter what values are imputed.
#[derive(Debug, Clone)]
pub struct HarrisWitness {
    /// Witness mask in the original row/column coordinates.
    pub mask: MissingStructure,
    /// Its monotone arrangement.
    pub decomposition: MonotoneDecomposition,
    /// The H1 report evaluated on the truly observed values under the witness.
    pub h1: H1Report,
}

/// Look for a monotone substructure of `k` (the dataset's own mask) whose H1
/// check passes on observed data alone. Strategy: arrange columns greedily
/// (ascending observed count), give each row the deepest staircase pattern
/// its observed suffix supports, sort rows by pattern, and test H1 once.
///
/// A `None` result means the greedy search found nothing; it does not prove
/// that no witness exists.
pub fn find_harris_witness(data: &Dataset, prior: &Prior) -> Option<HarrisWitness> {
    let ms = MissingStructure::from_dataset(data);
    let mask = ms.mask();
    let (n, d) = mask.shape();

    let mut col_order: Vec<usize> = (0..d).collect();
    let observed_per_col: Vec<usize> = (0..d)
        .map(|j| (0..n).filter(|&i| mask[(i, j)]).count())
        .collect();
    col_order.sort_by_key(|&j| (observed_per_col[j], j));

    // The last arranged column must be observed everywhere.
    let last = *col_order.last().unwrap();
    if observed_per_col[last] != n {
        return None;
    }

    // Deepest suffix each row supports under this column order.
    let mut patterns = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = d; // pattern d is always available: last column observed
        for pos in (0..d - 1).rev() {
            if mask[(i, col_order[pos])] {
                l = pos + 1;
            } else {
                break;
            }
        }
        patterns.push(l);
    }
    let (row_order, sorted) = sort_rows_by_pattern(&patterns);
    let dec = MonotoneDecomposition::from_patterns(sorted, d, row_order, col_order);

    let witness_mask = dec.mask_in_original_frame();
    let witness = MissingStructure::new(witness_mask).ok()?;
    let h1 = check_h1(&dec, data, prior);
    if h1.pass {
        Some(HarrisWitness {
            mask: witness,
            decomposition: dec,
            h1,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn staircase(n: usize, d: usize, counts: &[usize]) -> MissingStructure {
        assert_eq!(counts.iter().sum::<usize>(), n);
        let mut mask = DMatrix::from_element(n, d, false);
        let mut row = 0;
        for (l, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                for j in l..d {
                    mask[(row, j)] = true;
                }
                row += 1;
            }
        }
        MissingStructure::new(mask).unwrap()
    }

    #[test]
    fn all_observed_is_monotone() {
        for (n, d) in [(1, 1), (3, 2), (5, 4)] {
            assert!(is_monotone(&MissingStructure::all_observed(n, d)));
        }
    }

    #[test]
    fn staircase_is_monotone() {
        let ms = staircase(6, 3, &[3, 2, 1]);
        assert!(is_monotone(&ms));
    }

    #[test]
    fn missing_in_last_column_is_not_monotone() {
        let mut mask = DMatrix::from_element(3, 2, true);
        mask[(1, 1)] = false;
        let ms = MissingStructure::new(mask).unwrap();
        assert!(!is_monotone(&ms));
    }

    #[test]
    fn decompose_single_pattern() {
        let ms = MissingStructure::all_observed(4, 2);
        let dec = decompose(&ms).unwrap();
        assert_eq!(dec.n_per_pattern, vec![4, 0]);
        assert_eq!(dec.cumulative, vec![4, 4]);
        assert!(dec.is_identity());
    }

    #[test]
    fn decompose_cumulative_counts() {
        let ms = staircase(3, 2, &[2, 1]);
        let dec = decompose(&ms).unwrap();
        assert_eq!(dec.pattern_of_row, vec![1, 1, 2]);
        assert_eq!(dec.cumulative, vec![2, 3]);
    }

    #[test]
    fn decompose_block_shapes_match_pattern_layout() {
        // 45 complete rows, 5 rows observing only the second column
        let ms = staircase(50, 2, &[45, 5]);
        let dec = decompose(&ms).unwrap();
        let y = DMatrix::from_fn(50, 2, |i, j| (i * 2 + j) as f64);
        let x = DMatrix::from_fn(50, 2, |i, j| (i + j) as f64);
        let data = crate::data::Dataset::new(y, x, ms.mask().clone()).unwrap();
        assert_eq!(dec.block_y(&data, 1).shape(), (45, 2));
        assert_eq!(dec.block_y(&data, 2).shape(), (50, 1));
        assert_eq!(dec.block_x(&data, 2).shape(), (50, 2));
    }

    #[test]
    fn decompose_rejects_non_monotone() {
        let mask = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        // row 0 misses the last column: invalid as monotone
        let ms = MissingStructure::new(mask).unwrap();
        assert!(decompose(&ms).is_err());
    }

    #[test]
    fn monotonize_identity_on_monotone_input() {
        let ms = staircase(5, 3, &[2, 2, 1]);
        let dec = try_monotonize(&ms).expect("monotone input must succeed");
        assert!(dec.is_identity(), "expected identity permutations");
    }

    #[test]
    fn monotonize_recovers_shuffled_rows() {
        let ms = staircase(5, 3, &[2, 2, 1]);
        let order = [4usize, 0, 3, 1, 2];
        let shuffled = DMatrix::from_fn(5, 3, |i, j| ms.mask()[(order[i], j)]);
        let ms2 = MissingStructure::new(shuffled).unwrap();
        let dec = try_monotonize(&ms2).expect("row shuffle must be recoverable");
        assert_eq!(dec.pattern_of_row, vec![1, 1, 2, 2, 3]);
    }

    #[test]
    fn anti_diagonal_mask_cannot_be_monotonized() {
        let mask = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        let ms = MissingStructure::new(mask).unwrap();
        assert!(try_monotonize(&ms).is_none());

        // exhaustive oracle over all 2! x 2! arrangements
        let m = ms.mask();
        for rows in [[0usize, 1], [1, 0]] {
            for cols in [[0usize, 1], [1, 0]] {
                let arranged =
                    DMatrix::from_fn(2, 2, |i, j| m[(rows[i], cols[j])]);
                let candidate = MissingStructure::new(arranged).unwrap();
                assert!(!is_monotone(&candidate));
            }
        }
    }

    #[test]
    fn monotonize_property_recovery_after_scramble() {
        let mut rng = StdRng::seed_from_u64(20240229);
        for case in 0..200 {
            let n = rng.random_range(1..=12);
            let d = rng.random_range(1..=5);
            let mut counts = vec![0usize; d];
            for _ in 0..n {
                counts[rng.random_range(0..d)] += 1;
            }
            let ms = staircase(n, d, &counts);
            // scramble rows and columns
            let mut rows: Vec<usize> = (0..n).collect();
            let mut cols: Vec<usize> = (0..d).collect();
            for i in (1..n).rev() {
                rows.swap(i, rng.random_range(0..=i));
            }
            for j in (1..d).rev() {
                cols.swap(j, rng.random_range(0..=j));
            }
            let scrambled = DMatrix::from_fn(n, d, |i, j| ms.mask()[(rows[i], cols[j])]);
            let ms2 = MissingStructure::new(scrambled.clone()).unwrap();
            let dec = try_monotonize(&ms2)
                .unwrap_or_else(|| panic!("case {case}: scrambled staircase not recovered"));
            // verify the arrangement really is monotone
            let arranged = DMatrix::from_fn(n, d, |i, j| {
                scrambled[(dec.row_permutation[i], dec.column_permutation[j])]
            });
            assert!(
                is_monotone(&MissingStructure::new(arranged).unwrap()),
                "case {case}: arrangement is not monotone"
            );
        }
    }

    #[test]
    fn precedes_is_a_strict_partial_order() {
        let k0 = MissingStructure::all_observed(3, 2);
        let mut m1 = k0.mask().clone();
        m1[(2, 0)] = false;
        let k1 = MissingStructure::new(m1).unwrap();
        assert!(precedes(&k1, &k0).unwrap());
        assert!(!precedes(&k0, &k1).unwrap());
        assert!(!precedes(&k1, &k1).unwrap(), "irreflexive");

        // incomparable pair
        let a = MissingStructure::new(DMatrix::from_row_slice(
            2,
            2,
            &[true, false, true, true],
        ))
        .unwrap();
        let b = MissingStructure::new(DMatrix::from_row_slice(
            2,
            2,
            &[false, true, true, true],
        ))
        .unwrap();
        assert!(!precedes(&a, &b).unwrap());
        assert!(!precedes(&b, &a).unwrap());

        // transitivity on random triples
        let mut rng = StdRng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 50 {
            let base = DMatrix::from_fn(4, 3, |_, j| j == 2 || rng.random::<bool>());
            let m_c = MissingStructure::new(base.clone()).unwrap();
            let mut mb = base.clone();
            let mut ma = base.clone();
            for i in 0..4 {
                for j in 0..2 {
                    if mb[(i, j)] && rng.random::<bool>() {
                        mb[(i, j)] = false;
                    }
                }
            }
            for i in 0..4 {
                for j in 0..2 {
                    if mb[(i, j)] && rng.random::<bool>() {
                        ma[(i, j)] = false;
                    } else {
                        ma[(i, j)] = mb[(i, j)];
                    }
                }
            }
            let m_b = MissingStructure::new(mb).unwrap();
            let m_a = MissingStructure::new(ma).unwrap();
            if precedes(&m_a, &m_b).unwrap() && precedes(&m_b, &m_c).unwrap() {
                assert!(precedes(&m_a, &m_c).unwrap(), "transitivity violated");
                checked += 1;
            }
        }
    }

    fn simulated_data(ms: &MissingStructure, seed: u64) -> Dataset {
        let mut rng = StdRng::seed_from_u64(seed);
        let (n, d) = (ms.n(), ms.d());
        let p = 2;
        let x = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random::<f64>() * 2.0 - 1.0
            }
        });
        let y = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        Dataset::new(y, x, ms.mask().clone()).unwrap()
    }

    #[test]
    fn h1_passes_on_generic_staircase_data() {
        let ms = staircase(50, 2, &[45, 5]);
        let data = simulated_data(&ms, 1);
        let prior = Prior::zero(2.0, 2);
        let dec = decompose(&ms).unwrap();
        let report = check_h1(&dec, &data, &prior);
        assert!(report.pass, "report: {report:?}");
        // count checks: N_1 = 45 > 2, N_2 = 50 > 3 with p = d = m = 2
        assert_eq!(report.patterns[0].required_rank, 4);
        assert_eq!(report.patterns[1].required_rank, 3);
        assert!(report.patterns.iter().all(|p| p.df >= 1.0));
    }

    #[test]
    fn h1_count_boundary_is_strict() {
        // With p = 2, d = 2, m = 2: pattern 1 needs N_1 > 2. Take N_1 = 2.
        let ms = staircase(3, 2, &[2, 1]);
        let data = simulated_data(&ms, 2);
        let prior = Prior::zero(2.0, 2);
        let dec = decompose(&ms).unwrap();
        let report = check_h1(&dec, &data, &prior);
        assert!(!report.patterns[0].count_ok);
        assert!((report.patterns[0].df - 0.0).abs() < 1e-12);
        assert!(!report.pass);
    }

    #[test]
    fn h1_detects_rank_deficiency() {
        let ms = staircase(10, 2, &[8, 2]);
        let mut data = simulated_data(&ms, 3);
        // duplicate predictor column
        let x = data.x().clone();
        let dup = DMatrix::from_fn(10, 2, |i, j| if j == 0 { x[(i, 1)] } else { x[(i, 1)] });
        data = Dataset::new(data.y().clone(), dup, ms.mask().clone()).unwrap();
        let dec = decompose(&ms).unwrap();
        let report = check_h1(&dec, &data, &Prior::zero(2.0, 2));
        assert!(report.patterns.iter().any(|p| !p.rank_ok));
        assert!(!report.pass);
    }

    #[test]
    fn h1_pass_implies_positive_integer_df() {
        // integral m: count_ok coincides with df >= 1
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..50 {
            let d = rng.random_range(1..=3);
            let n = rng.random_range(d.max(2)..=15);
            let mut counts = vec![0usize; d];
            for _ in 0..n {
                counts[rng.random_range(0..d)] += 1;
            }
            let ms = staircase(n, d, &counts);
            let data = simulated_data(&ms, rng.random());
            let prior = Prior::zero(2.0, d);
            let dec = decompose(&ms).unwrap();
            let report = check_h1(&dec, &data, &prior);
            for p in &report.patterns {
                assert_eq!(p.count_ok, p.df > 0.0);
                if p.count_ok {
                    assert!(p.df >= 1.0 - 1e-12);
                }
            }
            if report.pass {
                assert!(report.patterns.iter().all(|p| p.df >= 1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn h1_full_count_boundary() {
        let prior = Prior::zero(2.0, 2);
        // n > p + 2d - m - 1 = 3 with p = 2, d = 2, m = 2
        let mut rng = StdRng::seed_from_u64(5);
        let make = |n: usize, rng: &mut StdRng| {
            let y = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let x = DMatrix::from_fn(n, 2, |_, j| {
                if j == 0 {
                    1.0
                } else {
                    rng.random::<f64>()
                }
            });
            (y, x)
        };
        let (y, x) = make(50, &mut rng);
        assert!(check_h1_full(&y, &x, &prior));
        let (y, x) = make(3, &mut rng);
        assert!(!check_h1_full(&y, &x, &prior), "boundary n = 3 must fail");
        // collinear columns
        let (y, _) = make(10, &mut rng);
        let x = DMatrix::from_fn(10, 2, |i, _| y[(i, 0)]);
        let y2 = DMatrix::from_fn(10, 2, |i, j| if j == 0 { y[(i, 0)] } else { y[(i, 1)] });
        assert!(!check_h1_full(&y2, &x, &prior));
    }

    #[test]
    fn witness_is_input_when_already_monotone_and_h1_holds() {
        let ms = staircase(50, 2, &[45, 5]);
        let data = simulated_data(&ms, 7);
        let witness = find_harris_witness(&data, &Prior::zero(2.0, 2)).expect("witness");
        assert_eq!(witness.mask.mask(), ms.mask());
        assert!(witness.h1.pass);
    }

    #[test]
    fn witness_found_inside_non_monotone_mask() {
        // 45 complete rows, then two rows whose observed sets conflict in
        // the first two columns (one sees {0,2}, the other {1,2}), then
        // rows seeing only the last column. No row/column arrangement is
        // monotone, but dropping one entry leaves a passing staircase.
        let mut mask = DMatrix::from_element(50, 3, false);
        for i in 0..45 {
            for j in 0..3 {
                mask[(i, j)] = true;
            }
        }
        mask[(45, 0)] = true;
        mask[(45, 2)] = true;
        mask[(46, 1)] = true;
        mask[(46, 2)] = true;
        for i in 47..50 {
            mask[(i, 2)] = true;
        }
        let ms2 = MissingStructure::new(mask.clone()).unwrap();
        assert!(!is_monotone(&ms2));
        assert!(try_monotonize(&ms2).is_none());
        let data = simulated_data(&ms2, 8);
        let witness = find_harris_witness(&data, &Prior::zero(2.0, 3)).expect("witness");
        // witness must be a (non-strict) substructure of the data mask
        let mut strictly_smaller = false;
        for i in 0..50 {
            for j in 0..3 {
                if witness.mask.is_observed(i, j) {
                    assert!(mask[(i, j)]);
                } else {
                    strictly_smaller |= mask[(i, j)];
                }
            }
        }
        assert!(strictly_smaller, "witness should drop the conflicting entry");
        assert!(is_monotone(&MissingStructure::new(witness.decomposition.arranged_mask()).unwrap()));
        assert!(witness.h1.pass);
    }

    #[test]
    fn witness_absent_when_counts_cannot_pass() {
        let ms = staircase(2, 2, &[1, 1]);
        let data = simulated_data(&ms, 9);
        assert!(find_harris_witness(&data, &Prior::zero(2.0, 2)).is_none());
    }
}
