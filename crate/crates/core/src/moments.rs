//! Moments of `Z` and `X`: the two composition formulas for `E(Z_p^m)`,
//! mixed moments of `X` as alpha-permanents, factorial-moment identities,
//! covariances and the l1-norm mean.
//!
//! Throughout, `Rbar_pp = a_p R_pp` and `R(m)` is the expansion of `R`.

use crate::error::{Error, Result};
use crate::permanent::{constant_block_permanent, expand, alpha_permanent, MultiIndex, PERMANENT_CAP};
use crate::report::VerificationReport;
use crate::zdist::{PermanentalModel, Truncation, ZPmfTable};

/// Largest single-coordinate moment order handled by the composition formulas.
pub const MAX_MOMENT_ORDER: usize = 12;

/// Relative tail allowance used when building tables for moment checks.
pub const MOMENT_TAIL_RTOL: f64 = 1e-13;

/// One composition `(j_0, ..., j_l)` appearing in a moment formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionTerm {
    pub l: usize,
    pub j: Vec<u32>,
}

impl CompositionTerm {
    /// `alpha^{j_0} (alpha + 1)^{j_1} ... (alpha + l)^{j_l}`
    pub fn rising_weight(&self, alpha: f64) -> f64 {
        self.j
            .iter()
            .enumerate()
            .map(|(i, &e)| (alpha + i as f64).powi(e as i32))
            .product()
    }
}

/// Compositions of `m` into `parts` parts, lexicographic. The first
/// `parts - 1` parts are at least 1; the last is at least `last_min`.
fn compositions(m: u32, parts: usize, last_min: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if parts == 0 {
        return out;
    }
    // explicit stack of (prefix, remaining)
    let mut stack: Vec<(Vec<u32>, u32)> = vec![(Vec::with_capacity(parts), m)];
    while let Some((prefix, remaining)) = stack.pop() {
        if prefix.len() == parts - 1 {
            if remaining >= last_min {
                let mut full = prefix;
                full.push(remaining);
                out.push(full);
            }
            continue;
        }
        // reserve at least 1 for every later non-final part plus last_min
        let later = (parts - 2 - prefix.len()) as u32 + last_min;
        if remaining < 1 + later {
            continue;
        }
        for v in (1..=remaining - later).rev() {
            let mut next = prefix.clone();
            next.push(v);
            stack.push((next, remaining - v));
        }
    }
    out
}

/// Terms of the cumulative formula: `j_0 + ... + j_l = m`, all `j_i >= 1`,
/// `l = 0, ..., m - 1`.
pub fn cumulative_terms(m: usize) -> Vec<CompositionTerm> {
    (0..m)
        .flat_map(|l| {
            compositions(m as u32, l + 1, 1)
                .into_iter()
                .map(move |j| CompositionTerm { l, j })
        })
        .collect()
}

/// Terms of the `J_m(l)` formula: `j_0, ..., j_{l-1} >= 1`, `j_l >= 0`,
/// summing to `m`, for `l = 0, ..., m`.
pub fn jset_terms(m: usize) -> Vec<CompositionTerm> {
    (0..=m)
        .flat_map(|l| {
            compositions(m as u32, l + 1, 0)
                .into_iter()
                .map(move |j| CompositionTerm { l, j })
        })
        .collect()
}

fn check_order(m: usize) -> Result<()> {
    if m == 0 || m > MAX_MOMENT_ORDER {
        return Err(Error::InvalidArgument(format!(
            "moment order must lie in 1..={MAX_MOMENT_ORDER}, got {m}"
        )));
    }
    Ok(())
}

fn sign(e: usize) -> f64 {
    if e % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `E(Z_p^m)` as a signed sum over compositions with every part positive,
/// each term carrying the factor `Rbar_pp^l (Rbar_pp - 1)`.
pub fn z_moment_cumulative(model: &PermanentalModel, p: usize, m: usize) -> Result<f64> {
    model.check_index(p)?;
    check_order(m)?;
    let alpha = model.alpha();
    let rbar = model.rbar_diag(p);
    Ok(cumulative_terms(m)
        .iter()
        .map(|t| sign(t.l + m + 1) * t.rising_weight(alpha) * rbar.powi(t.l as i32) * (rbar - 1.0))
        .sum())
}

/// `E(Z_p^m)` as a signed sum over `J_m(l)`, `l = 0, ..., m`.
pub fn z_moment_jset(model: &PermanentalModel, p: usize, m: usize) -> Result<f64> {
    model.check_index(p)?;
    check_order(m)?;
    let alpha = model.alpha();
    let rbar = model.rbar_diag(p);
    Ok(jset_terms(m)
        .iter()
        .map(|t| sign(t.l + m) * t.rising_weight(alpha) * rbar.powi(t.l as i32))
        .sum())
}

/// The two explicit fourth-moment polynomials in `(Rbar_pp, alpha)`, the
/// first expanded in powers of `Rbar_pp`, the second grouped by
/// `Rbar_pp^l (Rbar_pp - 1)`.
pub fn z_moment_example_fourth(model: &PermanentalModel, p: usize) -> Result<(f64, f64)> {
    model.check_index(p)?;
    let a = model.alpha();
    let r = model.rbar_diag(p);
    let (a1, a2, a3) = (a + 1.0, a + 2.0, a + 3.0);

    let expanded = a * a1 * a2 * a3 * r.powi(4)
        - (a * a * a1 * a2 + a * a1 * a1 * a2 + a * a1 * a2 * a2 + a * a1 * a2 * a3) * r.powi(3)
        + (a * a * a1 * a2
            + a * a1 * a1 * a2
            + a * a1 * a2 * a2
            + a.powi(3) * a1
            + a * a * a1 * a1
            + a * a1.powi(3))
            * r.powi(2)
        - (a.powi(3) * a1 + a * a * a1 * a1 + a * a1.powi(3) + a.powi(4)) * r
        + a.powi(4);

    let grouped = a * a1 * a2 * a3 * r.powi(3) * (r - 1.0)
        - (a * a * a1 * a2 + a * a1 * a1 * a2 + a * a1 * a2 * a2) * r.powi(2) * (r - 1.0)
        + (a.powi(3) * a1 + a * a * a1 * a1 + a * a1.powi(3)) * r * (r - 1.0)
        - a.powi(4) * (r - 1.0);

    Ok((expanded, grouped))
}

/// `E(prod_j X_j^{m_j}) = |R(m)|_alpha`.
pub fn mixed_moment_x(model: &PermanentalModel, m: &MultiIndex) -> Result<f64> {
    if m.total() > PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(m.total()));
    }
    alpha_permanent(&expand(model.r(), m)?, model.alpha())
}

/// `|Rbar(m)|_alpha` computed as `|R(m)|_alpha prod_j a_j^{m_j}`.
pub fn scaled_mixed_moment(model: &PermanentalModel, m: &MultiIndex) -> Result<f64> {
    let scale: f64 = model
        .diag()
        .iter()
        .zip(m.as_slice())
        .map(|(a, &mj)| a.powi(mj as i32))
        .product();
    Ok(mixed_moment_x(model, m)? * scale)
}

/// `prod_j prod_{l < m_j} (alpha + z_j + l)`
pub fn rising_product(alpha: f64, z: &[u32], m: &[u32]) -> f64 {
    z.iter()
        .zip(m)
        .map(|(&zj, &mj)| constant_block_permanent(mj as usize, alpha + zj as f64))
        .product()
}

/// Table suitable for moments of total degree up to `degree`.
pub fn moment_table(model: &PermanentalModel, epsilon: f64, degree: u32) -> Result<ZPmfTable> {
    ZPmfTable::build(model, Truncation::moments(epsilon, degree, MOMENT_TAIL_RTOL))
}

/// Tolerance for identities whose right side is a table expectation.
pub fn table_tolerance(magnitude: f64, table: &ZPmfTable) -> f64 {
    1e-7 + magnitude.abs() * (table.mass_deficit().max(0.0) + MOMENT_TAIL_RTOL)
}

/// `sum_k k_p^m P(Z = k)`
pub fn table_moment(table: &ZPmfTable, p: usize, m: usize) -> f64 {
    table.expect(|k| (k[p] as f64).powi(m as i32))
}

pub fn table_covariance(table: &ZPmfTable, i: usize, j: usize) -> f64 {
    let ei = table.expect(|k| k[i] as f64);
    let ej = table.expect(|k| k[j] as f64);
    table.expect(|k| (k[i] as f64 - ei) * (k[j] as f64 - ej))
}

/// `|Rbar(m)|_alpha = E prod_j prod_{l < m_j} (alpha + Z_j + l)` against `table`.
pub fn factorial_moment_report(model: &PermanentalModel, table: &ZPmfTable, m: &MultiIndex) -> Result<VerificationReport> {
    let lhs = scaled_mixed_moment(model, m)?;
    let alpha = model.alpha();
    let rhs = table.expect(|k| rising_product(alpha, k, m.as_slice()));
    Ok(VerificationReport::equality(
        "factorial_moment",
        "|Rbar(m)|_alpha = E prod_j prod_{l<m_j} (alpha + Z_j + l)",
        lhs,
        rhs,
        table_tolerance(lhs, table),
    )
    .with_witness(serde_json::json!({ "m": m.as_slice() })))
}

pub fn factorial_moment_identity(model: &PermanentalModel, m: &MultiIndex, epsilon: f64) -> Result<VerificationReport> {
    if m.len() != model.n() {
        return Err(Error::LengthMismatch {
            expected: model.n(),
            found: m.len(),
        });
    }
    let table = moment_table(model, epsilon, m.total() as u32)?;
    factorial_moment_report(model, &table, m)
}

/// `Rbar_jj^m = E prod_{l < m} (alpha + Z_j + l) / (alpha + l)` against `table`.
pub fn power_identity_report(model: &PermanentalModel, table: &ZPmfTable, j: usize, m: usize) -> Result<VerificationReport> {
    model.check_index(j)?;
    check_order(m)?;
    let alpha = model.alpha();
    let lhs = model.rbar_diag(j).powi(m as i32);
    let denom = constant_block_permanent(m, alpha);
    let rhs = table.expect(|k| constant_block_permanent(m, alpha + k[j] as f64) / denom);
    Ok(VerificationReport::equality(
        "power_identity",
        "Rbar_jj^m = E prod_{l<m} (alpha + Z_j + l)/(alpha + l)",
        lhs,
        rhs,
        table_tolerance(lhs, table),
    )
    .with_witness(serde_json::json!({ "j": j, "m": m })))
}

pub fn power_identity(model: &PermanentalModel, j: usize, m: usize, epsilon: f64) -> Result<VerificationReport> {
    check_order(m)?;
    let table = moment_table(model, epsilon, m as u32)?;
    power_identity_report(model, &table, j, m)
}

/// `Cov(Z_i, Z_j) = alpha a_i a_j R_ij R_ji` for `i != j`.
pub fn z_covariance(model: &PermanentalModel, i: usize, j: usize) -> Result<f64> {
    model.check_index(i)?;
    model.check_index(j)?;
    if i == j {
        return Err(Error::DiagonalCovarianceUnsupported(i));
    }
    let d = model.diag();
    let r = model.r();
    Ok(model.alpha() * d[i] * d[j] * r[(i, j)] * r[(j, i)])
}

/// `E ||Z||_1 = alpha (sum_i Rbar_ii - n)`.
pub fn z_l1_mean(model: &PermanentalModel) -> f64 {
    let n = model.n();
    model.alpha() * ((0..n).map(|i| model.rbar_diag(i)).sum::<f64>() - n as f64)
}

/// Every multi-index of length `n` with `1 <= |m| <= max_total`.
pub fn orders_up_to(n: usize, max_total: usize) -> Vec<MultiIndex> {
    (1..=max_total)
        .flat_map(|d| MultiIndex::with_total(n, d))
        .collect()
}

fn rel_tol(x: f64, rtol: f64) -> f64 {
    rtol * x.abs().max(1e-300)
}

/// All moment checks for one model against a single table: composition
/// formulas vs table for `m <= max_order`, the fourth-moment displays,
/// factorial moments for `|m| <= max_mixed`, power identities, covariances
/// and the l1 mean.
pub fn moment_reports(
    model: &PermanentalModel,
    epsilon: f64,
    max_order: usize,
    max_mixed: usize,
) -> Result<Vec<VerificationReport>> {
    let n = model.n();
    let degree = max_order.max(max_mixed).max(2) as u32;
    let table = moment_table(model, epsilon, degree)?;
    let mut out = Vec::new();

    for p in 0..n {
        for m in 1..=max_order {
            let cum = z_moment_cumulative(model, p, m)?;
            let jset = z_moment_jset(model, p, m)?;
            let tab = table_moment(&table, p, m);
            let witness = serde_json::json!({ "p": p, "m": m });
            out.push(
                VerificationReport::equality(
                    "moment_formulas_agree",
                    "E Z_p^m: all-positive compositions = J_m(l) compositions",
                    cum,
                    jset,
                    rel_tol(cum, 1e-9) + 1e-12,
                )
                .with_witness(witness.clone()),
            );
            out.push(
                VerificationReport::equality(
                    "moment_formula_vs_table",
                    "E Z_p^m from compositions = sum_k k_p^m P(Z=k)",
                    cum,
                    tab,
                    rel_tol(cum, 1e-9) + table_tolerance(cum, &table) - 1e-7 + 1e-12,
                )
                .with_witness(witness),
            );
        }
        let (e1, e2) = z_moment_example_fourth(model, p)?;
        let m4 = z_moment_jset(model, p, 4)?;
        out.push(
            VerificationReport::equality(
                "fourth_moment_displays",
                "expanded and grouped fourth-moment polynomials agree",
                e1,
                e2,
                rel_tol(m4, 1e-9) + 1e-12,
            )
            .with_witness(serde_json::json!({ "p": p })),
        );
        out.push(
            VerificationReport::equality(
                "fourth_moment_display_vs_formula",
                "expanded fourth-moment polynomial = J_m(l) formula at m = 4",
                e1,
                m4,
                rel_tol(m4, 1e-9) + 1e-12,
            )
            .with_witness(serde_json::json!({ "p": p })),
        );
        for m in 1..=max_order {
            out.push(power_identity_report(model, &table, p, m)?);
        }
        out.push(
            VerificationReport::inequality(
                "rbar_diagonal_at_least_one",
                "a_p R_pp >= 1 (E Z_p >= 0)",
                model.rbar_diag(p),
                1.0,
                1e-10,
            )
            .with_witness(serde_json::json!({ "p": p })),
        );
    }

    for m in orders_up_to(n, max_mixed) {
        out.push(factorial_moment_report(model, &table, &m)?);
    }

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let formula = z_covariance(model, i, j)?;
            let tab = table_covariance(&table, i, j);
            out.push(
                VerificationReport::equality(
                    "covariance_formula_vs_table",
                    "Cov(Z_i, Z_j) = alpha a_i a_j R_ij R_ji, i != j",
                    formula,
                    tab,
                    1e-8,
                )
                .with_witness(serde_json::json!({ "i": i, "j": j })),
            );
        }
    }

    let l1 = z_l1_mean(model);
    let l1_tab = table.expect(|k| k.iter().map(|&x| x as f64).sum());
    out.push(VerificationReport::equality(
        "l1_mean",
        "E ||Z||_1 = alpha (sum_i Rbar_ii - n)",
        l1,
        l1_tab,
        table_tolerance(l1, &table),
    ));
    Ok(out)
}
