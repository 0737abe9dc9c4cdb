//! The permanental model built from an M-matrix and the law of its latent
//! count vector `Z`.
//!
//! `P(Z = k) = |Abar|^alpha |Bbar(k)|_alpha / prod_i k_i!`. Single
//! probabilities come from the brute-force alpha-permanent. Whole tables use
//! the fact that these probabilities are the Taylor coefficients of
//! `|Abar|^alpha det(I - Bbar T)^{-alpha}` in `T = diag(t)`: the determinant is
//! multi-affine in `t`, so the coefficients obey a short exact recurrence and
//! tables can run to any degree.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{certify_m_matrix, decompose, Decomposition, SquareMatrix};
use crate::permanent::{expanded_permanent, KahanSum, MultiIndex};
use crate::report::VerificationReport;

/// Above this Perron root of `Bbar` table growth is impractical.
pub const NEAR_CRITICAL_RHO: f64 = 0.9;

/// Hard limits on table construction.
pub const MAX_TABLE_DEGREE: usize = 600;
pub const MAX_TABLE_ENTRIES: usize = 30_000_000;

#[derive(Debug, Clone)]
pub struct PermanentalModel {
    a: SquareMatrix,
    r: SquareMatrix,
    decomp: Decomposition,
    alpha: f64,
    det_a: f64,
    det_abar: f64,
}

impl PermanentalModel {
    pub fn new(a: SquareMatrix, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        let cert = certify_m_matrix(&a)?;
        let decomp = decompose(&a)?;
        let det_abar = decomp.abar.determinant();
        if det_abar > 1.0 + 1e-12 || det_abar <= 0.0 {
            return Err(Error::HypothesisViolated(format!(
                "det(I - Bbar) = {det_abar} outside (0, 1]"
            )));
        }
        Ok(Self {
            a,
            r: cert.inverse,
            decomp,
            alpha,
            det_a: cert.det,
            det_abar,
        })
    }

    /// Same matrix, different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        Ok(Self {
            alpha,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> &SquareMatrix {
        &self.a
    }

    /// `R = A^{-1}`.
    pub fn r(&self) -> &SquareMatrix {
        &self.r
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomp
    }

    /// Diagonal `(a_1, ..., a_n)` of `A`.
    pub fn diag(&self) -> &[f64] {
        &self.decomp.d
    }

    pub fn bbar(&self) -> &SquareMatrix {
        &self.decomp.bbar
    }

    pub fn abar(&self) -> &SquareMatrix {
        &self.decomp.abar
    }

    pub fn rho(&self) -> f64 {
        self.decomp.rho
    }

    pub fn det_a(&self) -> f64 {
        self.det_a
    }

    pub fn det_abar(&self) -> f64 {
        self.det_abar
    }

    /// `P(Z = 0) = |Abar|^alpha`.
    pub fn p_zero(&self) -> f64 {
        self.det_abar.powf(self.alpha)
    }

    /// `Rbar = R D_A = Abar^{-1}`.
    pub fn rbar(&self) -> SquareMatrix {
        self.r.scale_cols(self.diag())
    }

    /// `Rbar_ii = a_i R_ii`.
    pub fn rbar_diag(&self, i: usize) -> f64 {
        self.decomp.d[i] * self.r[(i, i)]
    }

    pub fn is_near_critical(&self) -> bool {
        self.rho() > NEAR_CRITICAL_RHO
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            })
        }
    }
}

pub fn build_model(a: &SquareMatrix, alpha: f64) -> Result<PermanentalModel> {
    PermanentalModel::new(a.clone(), alpha)
}

/// `P(Z = k)` from the brute-force alpha-permanent of `Bbar(k)`.
pub fn z_pmf(model: &PermanentalModel, k: &MultiIndex) -> Result<f64> {
    if k.len() != model.n() {
        return Err(Error::LengthMismatch {
            expected: model.n(),
            found: k.len(),
        });
    }
    let perm = expanded_permanent(model.bbar(), k, model.alpha())?;
    let p = model.p_zero() * perm / k.factorial_product();
    Ok(p.max(0.0))
}

/// The same probability written with `A` and `B` instead of `Abar` and `Bbar`:
/// `|A|^alpha / prod a_i^alpha * |B(k)|_alpha / prod (a_i^{k_i} k_i!)`.
pub fn z_pmf_unnormalized(model: &PermanentalModel, k: &MultiIndex) -> Result<f64> {
    let alpha = model.alpha();
    let d = model.diag();
    let prefactor = model.det_a().powf(alpha) / d.iter().map(|x| x.powf(alpha)).product::<f64>();
    let perm = expanded_permanent(&model.decomposition().b, k, alpha)?;
    let scale: f64 = d
        .iter()
        .zip(k.as_slice())
        .map(|(a, &ki)| a.powi(ki as i32))
        .product();
    Ok(prefactor * perm / (scale * k.factorial_product()))
}

/// Stopping rule for [`ZPmfTable::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Target for the missing mass `1 - sum of table`.
    pub epsilon: f64,
    /// When positive, also keep going until the tail of `sum |k|^d P(Z = k)`
    /// is estimated below `moment_rtol` times the partial sum.
    pub moment_degree: u32,
    pub moment_rtol: f64,
}

impl Truncation {
    pub fn mass(epsilon: f64) -> Self {
        Self {
            epsilon,
            moment_degree: 0,
            moment_rtol: 0.0,
        }
    }

    pub fn moments(epsilon: f64, degree: u32, rtol: f64) -> Self {
        Self {
            epsilon,
            moment_degree: degree,
            moment_rtol: rtol,
        }
    }
}

/// Binomial coefficients `C(a, b)` for `b <= n`.
#[derive(Debug, Clone)]
struct Binomials {
    n: usize,
    rows: Vec<Vec<u64>>,
}

impl Binomials {
    fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![vec![1]],
        }
    }

    fn ensure(&mut self, a: usize) {
        while self.rows.len() <= a {
            let prev = self.rows.last().unwrap();
            let len = (prev.len() + 1).min(self.n + 1);
            let mut row = vec![1u64; len];
            for b in 1..len {
                let left = prev.get(b - 1).copied().unwrap_or(0);
                let right = prev.get(b).copied().unwrap_or(0);
                row[b] = left.saturating_add(right);
            }
            self.rows.push(row);
        }
    }

    fn get(&self, a: isize, b: usize) -> u64 {
        if a < 0 {
            return 0;
        }
        let row = &self.rows[a as usize];
        row.get(b).copied().unwrap_or(0)
    }
}

/// Truncated table of `P(Z = k)` over every `k` with `|k| <= K`, stored in
/// order of increasing total degree and lexicographically within a degree.
#[derive(Debug, Clone)]
pub struct ZPmfTable {
    n: usize,
    alpha: f64,
    keys: Vec<u32>,
    probs: Vec<f64>,
    shell_offsets: Vec<usize>,
    max_total_degree: usize,
    mass_deficit: f64,
    clipped: usize,
    binom: Binomials,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableSummary {
    pub n: usize,
    pub max_total_degree: usize,
    pub entries: usize,
    pub mass_deficit: f64,
    pub clipped: usize,
}

impl ZPmfTable {
    pub fn build(model: &PermanentalModel, trunc: Truncation) -> Result<Self> {
        if !(trunc.epsilon > 0.0 && trunc.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1), got {}",
                trunc.epsilon
            )));
        }
        let n = model.n();
        let alpha = model.alpha();
        let terms = determinant_terms(model.bbar());
        let mut table = Self {
            n,
            alpha,
            keys: vec![0; n],
            probs: vec![model.p_zero()],
            shell_offsets: vec![0, 1],
            max_total_degree: 0,
            mass_deficit: 0.0,
            clipped: 0,
            binom: Binomials::new(n),
        };
        table.binom.ensure(n + 1);
        let mut mass = KahanSum::default();
        mass.add(model.p_zero());
        table.mass_deficit = 1.0 - mass.value();
        if terms.is_empty() {
            // Bbar = 0: Z is identically zero.
            return Ok(table);
        }

        let window = shell_window(n);
        let weighted = trunc.moment_degree > 0;
        let mut weighted_shells: Vec<f64> = vec![0.0];
        let mut weighted_total = 0.0;
        let mut scratch = vec![0u32; n];

        for degree in 1.. {
            if table.mass_deficit <= trunc.epsilon {
                if !weighted {
                    break;
                }
                if degree > 2 * window
                    && weighted_tail_small(&weighted_shells, window, weighted_total, trunc.moment_rtol)
                {
                    break;
                }
            }
            if degree > MAX_TABLE_DEGREE {
                return Err(Error::TruncationCapExceeded {
                    degree: degree - 1,
                    deficit: table.mass_deficit,
                });
            }
            table.binom.ensure(degree + n);
            let shell_len = table.binom.get((degree + n - 1) as isize, n - 1) as usize;
            if table.probs.len() + shell_len > MAX_TABLE_ENTRIES {
                return Err(Error::TruncationCapExceeded {
                    degree: degree - 1,
                    deficit: table.mass_deficit,
                });
            }
            let mut shell_mass = KahanSum::default();
            let kf = degree as f64;
            for k in MultiIndex::with_total(n, degree) {
                let k = k.as_slice();
                let mut acc = 0.0;
                for term in &terms {
                    if term.mask.iter().zip(k).any(|(&in_s, &ki)| in_s && ki == 0) {
                        continue;
                    }
                    for (s, (&ki, &in_s)) in scratch.iter_mut().zip(k.iter().zip(&term.mask)) {
                        *s = ki - in_s as u32;
                    }
                    let prev = table.probs[table.rank(&scratch, degree - term.size)];
                    acc += term.coef * ((1.0 - alpha) * term.size as f64 - kf) * prev;
                }
                let mut p = acc / kf;
                if p < 0.0 {
                    table.clipped += 1;
                    p = 0.0;
                }
                table.keys.extend_from_slice(k);
                table.probs.push(p);
                shell_mass.add(p);
                mass.add(p);
            }
            table.shell_offsets.push(table.probs.len());
            table.max_total_degree = degree;
            table.mass_deficit = 1.0 - mass.value();
            let w = kf.powi(trunc.moment_degree as i32) * shell_mass.value();
            weighted_shells.push(w);
            weighted_total += w;
        }
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_total_degree(&self) -> usize {
        self.max_total_degree
    }

    /// `1 - sum of probabilities` (may be a round-off negative near zero).
    pub fn mass_deficit(&self) -> f64 {
        self.mass_deficit
    }

    /// Entries that came out slightly negative from round-off and were set to 0.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn key(&self, idx: usize) -> &[u32] {
        &self.keys[idx * self.n..(idx + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.key(i), p))
    }

    /// Range of entry positions with total degree `degree`.
    pub fn shell(&self, degree: usize) -> std::ops::Range<usize> {
        self.shell_offsets[degree]..self.shell_offsets[degree + 1]
    }

    /// Position of `k` in the table (lexicographic rank within its shell).
    fn rank(&self, k: &[u32], degree: usize) -> usize {
        let mut idx = self.shell_offsets[degree];
        let mut remaining = degree as isize;
        let n = self.n;
        for (i, &ki) in k.iter().enumerate().take(n - 1) {
            let r = (n - i) as isize;
            let ki = ki as isize;
            idx += (self.binom.get(remaining + r - 1, (r - 1) as usize)
                - self.binom.get(remaining - ki + r - 1, (r - 1) as usize)) as usize;
            remaining -= ki;
        }
        idx
    }

    /// `P(Z = k)` from the table, `None` beyond the truncation degree.
    pub fn get(&self, k: &[u32]) -> Option<f64> {
        if k.len() != self.n {
            return None;
        }
        let degree: usize = k.iter().map(|&x| x as usize).sum();
        if degree > self.max_total_degree {
            return None;
        }
        Some(self.probs[self.rank(k, degree)])
    }

    /// Sum of probabilities in the table.
    pub fn mass(&self) -> f64 {
        let mut s = KahanSum::default();
        for &p in &self.probs {
            s.add(p);
        }
        s.value()
    }

    /// `sum_k f(k) P(Z = k)` over the table.
    pub fn expect(&self, mut f: impl FnMut(&[u32]) -> f64) -> f64 {
        let mut s = KahanSum::default();
        for (k, p) in self.iter() {
            if p != 0.0 {
                s.add(f(k) * p);
            }
        }
        s.value()
    }

    /// Law of `|Z|` restricted to the table, indexed by total degree.
    pub fn total_degree_pmf(&self) -> Vec<f64> {
        (0..=self.max_total_degree)
            .map(|d| {
                let mut s = KahanSum::default();
                for &p in &self.probs[self.shell(d)] {
                    s.add(p);
                }
                s.value()
            })
            .collect()
    }

    /// `sum_k exp(-<s, k>) P(Z = k)` over the table.
    pub fn laplace(&self, s: &[f64]) -> f64 {
        self.expect(|k| {
            let dot: f64 = k.iter().zip(s).map(|(&ki, si)| ki as f64 * si).sum();
            (-dot).exp()
        })
    }

    pub fn summary(&self) -> TableSummary {
        TableSummary {
            n: self.n,
            max_total_degree: self.max_total_degree,
            entries: self.len(),
            mass_deficit: self.mass_deficit,
            clipped: self.clipped,
        }
    }
}

/// Nonzero terms `coef * prod_{i in S} t_i` of `det(I - Bbar T)`, i.e.
/// `coef = (-1)^{|S|} det(Bbar_S)`, excluding `S = {}`.
#[derive(Debug, Clone)]
struct DetTerm {
    mask: Vec<bool>,
    size: usize,
    coef: f64,
}

fn determinant_terms(bbar: &SquareMatrix) -> Vec<DetTerm> {
    let n = bbar.n();
    assert!(n < 24, "dimension too large for subset expansion");
    let mut terms = Vec::new();
    for bits in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        let sub = SquareMatrix::from_fn(idx.len(), |p, q| bbar[(idx[p], idx[q])]);
        let minor = sub.determinant();
        let coef = if idx.len() % 2 == 0 { minor } else { -minor };
        if coef != 0.0 {
            terms.push(DetTerm {
                mask: (0..n).map(|i| bits >> i & 1 == 1).collect(),
                size: idx.len(),
                coef,
            });
        }
    }
    terms
}

/// Number of consecutive shells compared when estimating the tail; a
/// multiple of every possible cycle period `<= n`.
fn shell_window(n: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    (1..=n.min(6)).fold(1, |l, k| l / gcd(l, k) * k)
}

fn weighted_tail_small(shells: &[f64], window: usize, total: f64, rtol: f64) -> bool {
    let len = shells.len();
    let last: f64 = shells[len - window..].iter().sum();
    let prev: f64 = shells[len - 2 * window..len - window].iter().sum();
    if last == 0.0 {
        return prev == 0.0;
    }
    if prev <= 0.0 {
        return false;
    }
    let ratio = last / prev;
    if ratio >= 0.95 {
        return false;
    }
    last * ratio / (1.0 - ratio) <= rtol * total
}

pub fn z_pmf_table(model: &PermanentalModel, epsilon: f64) -> Result<ZPmfTable> {
    ZPmfTable::build(model, Truncation::mass(epsilon))
}

fn check_laplace_point(model: &PermanentalModel, s: &[f64]) -> Result<()> {
    if s.len() != model.n() {
        return Err(Error::LengthMismatch {
            expected: model.n(),
            found: s.len(),
        });
    }
    if let Some(x) = s.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "Laplace argument must be nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// `E exp(-<s, Z>) = |Abar|^alpha / det(I - Bbar E(s))^alpha`, `E(s) = diag(e^{-s_i})`.
pub fn z_laplace_closed(model: &PermanentalModel, s: &[f64]) -> Result<f64> {
    check_laplace_point(model, s)?;
    let e: Vec<f64> = s.iter().map(|x| (-x).exp()).collect();
    let n = model.n();
    let bbar = model.bbar();
    let m = SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 } - bbar[(i, j)] * e[j]);
    Ok((model.det_abar() / m.determinant()).powf(model.alpha()))
}

/// Series form of the Laplace transform summed over a truncated table.
pub fn z_laplace_series(model: &PermanentalModel, s: &[f64], epsilon: f64) -> Result<f64> {
    check_laplace_point(model, s)?;
    Ok(z_pmf_table(model, epsilon)?.laplace(s))
}

/// Compares the table at `alpha + beta` with the convolution of the tables
/// at `alpha` and `beta` over every `k` all three tables cover.
pub fn z_convolve_check(
    model_a: &PermanentalModel,
    model_b: &PermanentalModel,
    epsilon: f64,
) -> Result<VerificationReport> {
    if model_a.a() != model_b.a() {
        return Err(Error::ModelMismatch);
    }
    let sum_model = model_a.with_alpha(model_a.alpha() + model_b.alpha())?;
    let ta = z_pmf_table(model_a, epsilon)?;
    let tb = z_pmf_table(model_b, epsilon)?;
    let tab = z_pmf_table(&sum_model, epsilon)?;
    let degree = ta
        .max_total_degree()
        .min(tb.max_total_degree())
        .min(tab.max_total_degree());
    let max_diff = convolution_discrepancy(&ta, &tb, &tab, degree);
    Ok(VerificationReport::equality(
        "infinite_divisibility",
        "Z(alpha+beta) has the law of Z(alpha) + Z(beta), same Bbar",
        max_diff,
        0.0,
        10.0 * epsilon,
    )
    .with_witness(serde_json::json!({
        "alpha": model_a.alpha(),
        "beta": model_b.alpha(),
        "compared_degree": degree,
    })))
}

/// `max_{|k| <= degree} |P_ab(k) - sum_{j <= k} P_a(j) P_b(k - j)|`.
pub fn convolution_discrepancy(ta: &ZPmfTable, tb: &ZPmfTable, tab: &ZPmfTable, degree: usize) -> f64 {
    let n = tab.n();
    let mut max_diff = 0.0f64;
    let mut j = vec![0u32; n];
    let mut rest = vec![0u32; n];
    for idx in 0..tab.shell_offsets[degree + 1] {
        let k = tab.key(idx);
        j.iter_mut().for_each(|x| *x = 0);
        let mut conv = KahanSum::default();
        'odometer: loop {
            let pa = ta.get(&j).unwrap_or(0.0);
            if pa != 0.0 {
                for ((r, &ki), &ji) in rest.iter_mut().zip(k).zip(&j) {
                    *r = ki - ji;
                }
                conv.add(pa * tb.get(&rest).unwrap_or(0.0));
            }
            for pos in 0..n {
                if j[pos] < k[pos] {
                    j[pos] += 1;
                    continue 'odometer;
                }
                j[pos] = 0;
            }
            break;
        }
        max_diff = max_diff.max((conv.value() - tab.probs[idx]).abs());
    }
    max_diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_m_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn canonical(alpha: f64) -> PermanentalModel {
        let a = SquareMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        PermanentalModel::new(a, alpha).unwrap()
    }

    fn k(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn build_model_examples() {
        assert!((canonical(1.0).det_abar() - 0.75).abs() < 1e-15);
        let diag = SquareMatrix::from_diagonal(&[2.0, 5.0, 0.5]);
        assert_eq!(PermanentalModel::new(diag, 0.4).unwrap().det_abar(), 1.0);
        let a = SquareMatrix::from_rows(&[[3.0, -1.0], [-2.0, 3.0]]).unwrap();
        let m = PermanentalModel::new(a, 0.5).unwrap();
        assert!((m.det_abar() - 7.0 / 9.0).abs() < 1e-15);
        let m = canonical(1.0);
        assert!(m.r().matmul(m.a()).max_abs_diff(&SquareMatrix::identity(2)) < 1e-10);
    }

    #[test]
    fn build_model_rejects_bad_input() {
        let a = SquareMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        assert!(matches!(
            PermanentalModel::new(a.clone(), 0.0),
            Err(Error::NonPositiveAlpha(_))
        ));
        assert!(matches!(
            PermanentalModel::new(a, -1.0),
            Err(Error::NonPositiveAlpha(_))
        ));
        let bad = SquareMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            PermanentalModel::new(bad, 1.0),
            Err(Error::NotMMatrix(_))
        ));
    }

    #[test]
    fn pmf_examples() {
        let m = canonical(1.0);
        assert!((z_pmf(&m, &k(&[0, 0])).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(z_pmf(&m, &k(&[1, 0])).unwrap(), 0.0);
        assert!((z_pmf(&m, &k(&[1, 1])).unwrap() - 0.1875).abs() < 1e-15);
        assert!(matches!(
            z_pmf(&m, &k(&[6, 6])),
            Err(Error::DimensionTooLarge(12))
        ));
    }

    #[test]
    fn table_examples() {
        let m = canonical(1.0);
        let t = z_pmf_table(&m, 1e-8).unwrap();
        assert!(t.mass_deficit() <= 1e-8);
        assert!((t.get(&[0, 0]).unwrap() - 0.75).abs() < 1e-15);
        assert!((t.mass() + t.mass_deficit() - 1.0).abs() < 1e-12);

        let diag = PermanentalModel::new(SquareMatrix::from_diagonal(&[1.0, 2.0]), 1.5).unwrap();
        let t = z_pmf_table(&diag, 1e-8).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.max_total_degree(), 0);
        assert_eq!(t.get(&[0, 0]), Some(1.0));
        assert_eq!(t.mass_deficit(), 0.0);
    }

    #[test]
    fn canonical_pair_counts_are_negative_binomial() {
        // Z1 = Z2 = W with W negative binomial(alpha, 1/4).
        let alpha = 1.7;
        let t = z_pmf_table(&canonical(alpha), 1e-12).unwrap();
        let mut nb = 0.75f64.powf(alpha);
        for w in 0..20u32 {
            let got = t.get(&[w, w]).unwrap();
            assert!((got - nb).abs() <= 1e-14 + 1e-12 * nb, "w={w}: {got} vs {nb}");
            assert_eq!(t.get(&[w + 1, w]).unwrap(), 0.0);
            nb *= (alpha + w as f64) / (w as f64 + 1.0) * 0.25;
        }
    }

    #[test]
    fn table_matches_brute_force_permanents() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..12 {
            let n = 2 + trial % 3;
            let alpha = [0.5, 1.0, 2.5][trial % 3];
            let model = PermanentalModel::new(random_m_matrix(n, 0.6, &mut rng), alpha).unwrap();
            let t = z_pmf_table(&model, 1e-6).unwrap();
            let top = t.max_total_degree().min(8);
            for degree in 0..=top {
                for kk in MultiIndex::with_total(n, degree) {
                    let brute = z_pmf(&model, &kk).unwrap();
                    let tab = t.get(kk.as_slice()).unwrap();
                    assert!(
                        (brute - tab).abs() <= 1e-13 + 1e-10 * brute,
                        "{kk:?}: {brute} vs {tab}"
                    );
                }
            }
        }
    }

    #[test]
    fn rank_is_consistent_with_storage_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = PermanentalModel::new(random_m_matrix(4, 0.5, &mut rng), 1.0).unwrap();
        let t = z_pmf_table(&model, 1e-4).unwrap();
        for idx in 0..t.len() {
            let key = t.key(idx).to_vec();
            let degree = key.iter().map(|&x| x as usize).sum();
            assert_eq!(t.rank(&key, degree), idx);
        }
    }

    #[test]
    fn deficit_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = PermanentalModel::new(random_m_matrix(3, 0.7, &mut rng), 2.5).unwrap();
        let t = z_pmf_table(&model, 1e-8).unwrap();
        let shells = t.total_degree_pmf();
        let mut cum = 0.0;
        let mut last_deficit = 1.0;
        for q in shells {
            assert!(q >= 0.0);
            cum += q;
            let deficit = 1.0 - cum;
            assert!(deficit <= last_deficit + 1e-15);
            last_deficit = deficit;
        }
    }

    #[test]
    fn unnormalized_display_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = PermanentalModel::new(random_m_matrix(3, 0.6, &mut rng), 0.8).unwrap();
        for degree in 0..=5 {
            for kk in MultiIndex::with_total(3, degree) {
                let a = z_pmf(&model, &kk).unwrap();
                let b = z_pmf_unnormalized(&model, &kk).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.max(1e-300), "{kk:?}");
            }
        }
    }

    #[test]
    fn laplace_examples() {
        let m = canonical(1.0);
        assert!((z_laplace_closed(&m, &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let ln2 = std::f64::consts::LN_2;
        assert!((z_laplace_closed(&m, &[ln2, ln2]).unwrap() - 0.8).abs() < 1e-14);
        let series = z_laplace_series(&m, &[ln2, ln2], 1e-8).unwrap();
        assert!((series - 0.8).abs() < 1e-7);
        let far = z_laplace_series(&m, &[50.0, 50.0], 1e-8).unwrap();
        assert!((far - 0.75).abs() < 1e-15);

        let t = z_pmf_table(&m, 1e-8).unwrap();
        assert!((t.laplace(&[0.0, 0.0]) - (1.0 - t.mass_deficit())).abs() < 1e-15);

        let one = PermanentalModel::new(SquareMatrix::from_diagonal(&[2.0]), 0.3).unwrap();
        assert_eq!(z_laplace_closed(&one, &[3.0]).unwrap(), 1.0);

        assert!(z_laplace_closed(&m, &[-1.0, 0.0]).is_err());
        assert!(z_laplace_closed(&m, &[0.0]).is_err());
    }

    #[test]
    fn convolution_examples() {
        let r = z_convolve_check(&canonical(0.5), &canonical(0.5), 1e-8).unwrap();
        assert!(r.pass && r.lhs <= 1e-7, "{r:?}");

        let diag = SquareMatrix::from_diagonal(&[1.0, 3.0]);
        let a = PermanentalModel::new(diag.clone(), 0.5).unwrap();
        let b = PermanentalModel::new(diag, 1.5).unwrap();
        let r = z_convolve_check(&a, &b, 1e-8).unwrap();
        assert!(r.pass && r.lhs == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = PermanentalModel::new(random_m_matrix(3, 0.6, &mut rng), 1.0).unwrap();
        let r = z_convolve_check(&base, &base.with_alpha(2.0).unwrap(), 1e-8).unwrap();
        assert!(r.pass, "{r:?}");

        let other = canonical(1.0);
        let twin = PermanentalModel::new(SquareMatrix::from_rows(&[[2.0, -1.0], [-1.0, 3.0]]).unwrap(), 1.0).unwrap();
        assert!(matches!(z_convolve_check(&other, &twin, 1e-8), Err(Error::ModelMismatch)));

        // the discrepancy is not vacuous: a wrong target table is caught
        let ta = z_pmf_table(&canonical(0.5), 1e-8).unwrap();
        let wrong = z_pmf_table(&canonical(1.2), 1e-8).unwrap();
        let d = ta.max_total_degree().min(wrong.max_total_degree());
        assert!(convolution_discrepancy(&ta, &ta, &wrong, d) > 1e-2);
    }

    #[test]
    fn invalid_epsilon() {
        assert!(z_pmf_table(&canonical(1.0), 0.0).is_err());
        assert!(z_pmf_table(&canonical(1.0), 1.0).is_err());
    }

    #[test]
    fn near_critical_hits_cap() {
        let a = SquareMatrix::from_rows(&[[1.0, -0.9999], [-0.9999, 1.0]]).unwrap();
        let m = PermanentalModel::new(a, 1.0).unwrap();
        assert!(m.is_near_critical());
        assert!(matches!(
            z_pmf_table(&m, 1e-12),
            Err(Error::TruncationCapExceeded { .. })
        ));
    }
}
