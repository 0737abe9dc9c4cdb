//! Alpha-permanents by exhaustive permutation enumeration, and the
//! repeated-row expansion `C(k)`.
//!
//! `|M|_alpha = sum over permutations pi of alpha^{c(pi)} prod_i M[i, pi(i)]`
//! where `c(pi)` counts cycles (fixed points included). At `alpha = 1` this
//! is the permanent and at `alpha = -1` it is `(-1)^m det(M)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// Largest matrix handed to the float enumerator (11! terms).
pub const PERMANENT_CAP: usize = 11;

/// Largest matrix handed to the exact rational enumerator.
pub const EXACT_PERMANENT_CAP: usize = 7;

/// A vector `k` of nonnegative counts, one per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(k: Vec<u32>) -> Self {
        Self(k)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut k = vec![0; n];
        k[i] = 1;
        Self(k)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|k|`, the total degree.
    pub fn total(&self) -> usize {
        self.0.iter().map(|&x| x as usize).sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// `prod_i k_i!`
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&k| factorial(k as usize)).product()
    }

    /// Every multi-index of length `n` with total degree `degree`, in
    /// lexicographic order.
    pub fn with_total(n: usize, degree: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill_compositions(&mut cur, 0, degree, &mut out);
        out
    }
}

fn fill_compositions(cur: &mut Vec<u32>, pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining as u32;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v as u32;
        fill_compositions(cur, pos + 1, remaining - v, out);
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(k: Vec<u32>) -> Self {
        Self(k)
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = u32;

    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Number of cycles of a permutation given as its image vector.
pub fn cycle_count(perm: &[usize]) -> Result<usize> {
    let m = perm.len();
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || seen[p] {
            return Err(Error::InvalidPermutation(p));
        }
        seen[p] = true;
    }
    seen.iter_mut().for_each(|s| *s = false);
    Ok(count_cycles(perm, &mut seen))
}

#[inline]
fn count_cycles(perm: &[usize], visited: &mut [bool]) -> usize {
    visited.iter_mut().for_each(|v| *v = false);
    let mut cycles = 0;
    for start in 0..perm.len() {
        if visited[start] {
            continue;
        }
        cycles += 1;
        let mut i = start;
        while !visited[i] {
            visited[i] = true;
            i = perm[i];
        }
    }
    cycles
}

/// Advances `p` to the next permutation in lexicographic order; returns
/// false after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let m = p.len();
    if m < 2 {
        return false;
    }
    let mut i = m - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = m - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Kahan-compensated accumulator.
#[derive(Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// `|M|_alpha` by enumeration of all `m!` permutations in lexicographic order.
pub fn alpha_permanent(m: &SquareMatrix, alpha: f64) -> Result<f64> {
    let size = m.n();
    if size > PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(size));
    }
    if size == 0 {
        return Ok(1.0);
    }
    let powers: Vec<f64> = (0..=size).map(|c| alpha.powi(c as i32)).collect();
    let mut perm: Vec<usize> = (0..size).collect();
    let mut visited = vec![false; size];
    let mut acc = KahanSum::default();
    loop {
        let mut prod = 1.0;
        for (i, &p) in perm.iter().enumerate() {
            prod *= m[(i, p)];
            if prod == 0.0 {
                break;
            }
        }
        if prod != 0.0 {
            acc.add(powers[count_cycles(&perm, &mut visited)] * prod);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(acc.value())
}

/// Exact `|M|_alpha` over the rationals, for `m <= EXACT_PERMANENT_CAP`.
pub fn alpha_permanent_exact(m: &[Vec<BigRational>], alpha: &BigRational) -> Result<BigRational> {
    let size = m.len();
    if let Some(row) = m.iter().find(|r| r.len() != size) {
        return Err(Error::LengthMismatch {
            expected: size,
            found: row.len(),
        });
    }
    if size > EXACT_PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(size));
    }
    if size == 0 {
        return Ok(BigRational::one());
    }
    let mut powers = vec![BigRational::one()];
    for c in 1..=size {
        powers.push(&powers[c - 1] * alpha);
    }
    let mut perm: Vec<usize> = (0..size).collect();
    let mut visited = vec![false; size];
    let mut acc = BigRational::zero();
    loop {
        let mut prod = BigRational::one();
        for (i, &p) in perm.iter().enumerate() {
            prod *= &m[i][p];
            if prod.is_zero() {
                break;
            }
        }
        if !prod.is_zero() {
            acc += &powers[count_cycles(&perm, &mut visited)] * prod;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(acc)
}

/// Rational `p / q` as a `BigRational`.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// The row/column expansion `C(k)`: coordinate `i` repeated `k_i` times.
pub fn expand(c: &SquareMatrix, k: &MultiIndex) -> Result<SquareMatrix> {
    if k.len() != c.n() {
        return Err(Error::LengthMismatch {
            expected: c.n(),
            found: k.len(),
        });
    }
    let labels = expansion_labels(k);
    if labels.is_empty() {
        return Ok(SquareMatrix::empty());
    }
    Ok(SquareMatrix::from_fn(labels.len(), |p, q| {
        c[(labels[p], labels[q])]
    }))
}

/// Original coordinate of each row of `C(k)`.
pub fn expansion_labels(k: &MultiIndex) -> Vec<usize> {
    k.as_slice()
        .iter()
        .enumerate()
        .flat_map(|(i, &ki)| std::iter::repeat_n(i, ki as usize))
        .collect()
}

/// `|C(k)|_alpha`.
pub fn expanded_permanent(c: &SquareMatrix, k: &MultiIndex, alpha: f64) -> Result<f64> {
    if k.total() > PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(k.total()));
    }
    alpha_permanent(&expand(c, k)?, alpha)
}

/// `alpha (alpha + 1) ... (alpha + m - 1)`, the alpha-permanent of the
/// all-ones `m x m` matrix.
pub fn constant_block_permanent(m: usize, alpha: f64) -> f64 {
    (0..m).map(|l| alpha + l as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
        SquareMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn cycle_count_examples() {
        assert_eq!(cycle_count(&[0, 1, 2, 3]).unwrap(), 4);
        assert_eq!(cycle_count(&[1, 0]).unwrap(), 1);
        assert_eq!(cycle_count(&[1, 2, 0]).unwrap(), 1);
        assert_eq!(cycle_count(&[1, 0, 2]).unwrap(), 2);
        assert!(matches!(
            cycle_count(&[0, 0]),
            Err(Error::InvalidPermutation(0))
        ));
        assert!(matches!(
            cycle_count(&[0, 5]),
            Err(Error::InvalidPermutation(5))
        ));
    }

    #[test]
    fn enumerates_all_permutations_lexicographically() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
    }

    #[test]
    fn small_permanent_examples() {
        assert_eq!(alpha_permanent(&m(&[&[3.0]]), 0.7).unwrap(), 0.7 * 3.0);
        let (a, b, c, d, al) = (1.5, -2.0, 0.25, 4.0, 0.3);
        let v = alpha_permanent(&m(&[&[a, b], &[c, d]]), al).unwrap();
        assert!((v - (al * al * a * d + al * b * c)).abs() < 1e-15);
        let ones = SquareMatrix::from_fn(3, |_, _| 1.0);
        assert!((alpha_permanent(&ones, 0.5).unwrap() - 15.0 / 8.0).abs() < 1e-15);
        assert_eq!(alpha_permanent(&SquareMatrix::empty(), 2.0).unwrap(), 1.0);
    }

    #[test]
    fn dimension_cap() {
        let big = SquareMatrix::identity(PERMANENT_CAP + 1);
        assert!(matches!(
            alpha_permanent(&big, 1.0),
            Err(Error::DimensionTooLarge(12))
        ));
    }

    #[test]
    fn expand_matches_displayed_example() {
        let c = SquareMatrix::from_fn(3, |i, j| (10 * (i + 1) + (j + 1)) as f64);
        let e = expand(&c, &MultiIndex::new(vec![0, 2, 3])).unwrap();
        assert_eq!(e.n(), 5);
        let row2 = [22., 22., 23., 23., 23.];
        let row3 = [32., 32., 33., 33., 33.];
        for p in 0..2 {
            assert_eq!(e.row(p), row2);
        }
        for p in 2..5 {
            assert_eq!(e.row(p), row3);
        }
        // entry (4,1) in one-based indexing is c_{3,2}
        assert_eq!(e[(3, 0)], 32.0);
    }

    #[test]
    fn expand_edge_cases() {
        let c = SquareMatrix::from_fn(3, |i, j| (i * 3 + j) as f64);
        assert_eq!(expand(&c, &MultiIndex::new(vec![1, 1, 1])).unwrap(), c);
        let e = expand(&c, &MultiIndex::zeros(3)).unwrap();
        assert_eq!(e.n(), 0);
        assert_eq!(alpha_permanent(&e, 0.3).unwrap(), 1.0);
        assert!(matches!(
            expand(&c, &MultiIndex::zeros(2)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn constant_block_examples() {
        assert_eq!(constant_block_permanent(0, 0.3), 1.0);
        assert_eq!(constant_block_permanent(3, 0.5), 15.0 / 8.0);
        assert_eq!(constant_block_permanent(4, 1.0), 24.0);
        let ones = SquareMatrix::from_fn(4, |_, _| 1.0);
        assert_eq!(alpha_permanent(&ones, 1.0).unwrap(), 24.0);
    }

    #[test]
    fn exact_path_matches_closed_form() {
        for m in 0..=EXACT_PERMANENT_CAP {
            for (p, q) in [(1, 2), (1, 1), (2, 1)] {
                let alpha = ratio(p, q);
                let ones = vec![vec![BigRational::one(); m]; m];
                let got = alpha_permanent_exact(&ones, &alpha).unwrap();
                let mut want = BigRational::one();
                for l in 0..m {
                    want *= &alpha + BigRational::from_integer(BigInt::from(l));
                }
                assert_eq!(got, want, "m={m} alpha={p}/{q}");
            }
        }
    }

    #[test]
    fn determinant_at_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..200 {
            let size = 2 + trial % 5;
            let a = random_matrix(size, &mut rng);
            let perm = alpha_permanent(&a, -1.0).unwrap();
            let det = a.determinant() * if size % 2 == 0 { 1.0 } else { -1.0 };
            assert!((perm - det).abs() <= 1e-9 * det.abs().max(1e-3), "{perm} {det}");
        }
    }

    #[test]
    fn conjugation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(5, &mut rng);
        let base = alpha_permanent(&a, 0.7).unwrap();
        let sigma = [3, 0, 4, 1, 2];
        let b = SquareMatrix::from_fn(5, |i, j| a[(sigma[i], sigma[j])]);
        assert!(rel_err(alpha_permanent(&b, 0.7).unwrap(), base) < 1e-12);
    }

    #[test]
    fn row_multilinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(4, &mut rng);
        let row: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut split1 = a.clone();
        let mut split2 = a.clone();
        let mut joined = a.clone();
        for j in 0..4 {
            split2[(1, j)] = row[j];
            joined[(1, j)] = a[(1, j)] + 2.5 * row[j];
        }
        split1[(0, 0)] = a[(0, 0)];
        let lhs = alpha_permanent(&joined, 1.7).unwrap();
        let rhs = alpha_permanent(&split1, 1.7).unwrap() + 2.5 * alpha_permanent(&split2, 1.7).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn single_coordinate_expansion() {
        let c = m(&[&[0.8]]);
        for k in 0..=8u32 {
            let v = expanded_permanent(&c, &MultiIndex::new(vec![k]), 1.3).unwrap();
            let want = 0.8f64.powi(k as i32) * constant_block_permanent(k as usize, 1.3);
            assert!(rel_err(v, want) < 1e-12);
        }
    }

    #[test]
    fn compositions_in_lex_order() {
        let ks = MultiIndex::with_total(3, 2);
        let raw: Vec<Vec<u32>> = ks.iter().map(|k| k.as_slice().to_vec()).collect();
        assert_eq!(
            raw,
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
    }
}
