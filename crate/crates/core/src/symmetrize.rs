//! Symmetrization `A_sym = D - S(B)`, where `S(C)_ij = sqrt(c_ij c_ji)`, and
//! checks of the inequalities comparing `X` with its symmetrized partner
//! `X~`.

use rand::Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::matrix::{certify_m_matrix, decompose, spectral_radius, SquareMatrix};
use crate::permanent::{alpha_permanent, expand, MultiIndex, PERMANENT_CAP};
use crate::report::VerificationReport;
use crate::sampler::{mc_estimates, McConfig, ZSampler, MC_SIGMAS};
use crate::zdist::{z_pmf_table, PermanentalModel};

/// Quantile levels of `max_i X~_i` used as thresholds.
pub const QUANTILE_GRID: [f64; 5] = [0.5, 0.75, 0.9, 0.95, 0.99];

/// Entrywise `sqrt(c_ij c_ji)`.
pub fn geometric_symmetrize(c: &SquareMatrix) -> Result<SquareMatrix> {
    let n = c.n();
    for i in 0..n {
        for j in 0..n {
            if c[(i, j)] < 0.0 {
                return Err(Error::NegativeEntry(i, j));
            }
        }
    }
    Ok(SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            c[(i, i)]
        } else {
            (c[(i, j)] * c[(j, i)]).sqrt()
        }
    }))
}

#[derive(Debug, Clone)]
pub struct SymmetrizationPair {
    pub original: PermanentalModel,
    pub symmetrized: PermanentalModel,
    /// `|Abar|^alpha / |Abar_sym|^alpha`
    pub ratio: f64,
}

/// `A_sym = D - S(B)` with the same `alpha`. Failure to certify `A_sym`
/// is reported as `CertificationFailed`.
pub fn build_sym_pair(model: &PermanentalModel) -> Result<SymmetrizationPair> {
    let d = model.diag();
    let s = geometric_symmetrize(&model.decomposition().b)?;
    let n = model.n();
    let a_sym = SquareMatrix::from_fn(n, |i, j| if i == j { d[i] } else { -s[(i, j)] });
    certify_m_matrix(&a_sym).map_err(|e| match e {
        Error::NotMMatrix(v) => Error::CertificationFailed(v),
        other => other,
    })?;
    let symmetrized = PermanentalModel::new(a_sym, model.alpha())?;
    let ratio = (model.det_abar() / symmetrized.det_abar()).powf(model.alpha());
    Ok(SymmetrizationPair {
        original: model.clone(),
        symmetrized,
        ratio,
    })
}

/// `|A_sym| >= |A|`, `|Abar_sym| >= |Abar|`, and both normalised
/// determinants at most 1.
pub fn det_inequalities_check(pair: &SymmetrizationPair) -> Vec<VerificationReport> {
    let (o, s) = (&pair.original, &pair.symmetrized);
    let scale: f64 = o.diag().iter().product();
    vec![
        VerificationReport::inequality("det_sym_ge_det", "|A_sym| >= |A|", s.det_a(), o.det_a(), 1e-10 * scale),
        VerificationReport::inequality(
            "det_abar_sym_ge_det_abar",
            "|Abar_sym| >= |Abar|",
            s.det_abar(),
            o.det_abar(),
            1e-10,
        ),
        VerificationReport::inequality("det_abar_le_one", "|Abar| <= 1", 1.0, o.det_abar(), 1e-12),
        VerificationReport::inequality("det_abar_sym_le_one", "|Abar_sym| <= 1", 1.0, s.det_abar(), 1e-12),
        VerificationReport::inequality(
            "ratio_in_unit_interval",
            "0 < |Abar|^alpha / |Abar_sym|^alpha <= 1",
            1.0,
            pair.ratio,
            1e-12,
        )
        .with_witness(json!({ "ratio": pair.ratio })),
    ]
}

/// `|S(C)|_alpha <= |C|_alpha` and `|S(C)(k)|_alpha <= |C(k)|_alpha`.
pub fn permanent_inequality_check(c: &SquareMatrix, alpha: f64, k: &MultiIndex) -> Result<Vec<VerificationReport>> {
    if c.n() > PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(c.n()));
    }
    if k.total() > PERMANENT_CAP {
        return Err(Error::DimensionTooLarge(k.total()));
    }
    let s = geometric_symmetrize(c)?;
    let plain = (alpha_permanent(c, alpha)?, alpha_permanent(&s, alpha)?);
    let expanded = (
        alpha_permanent(&expand(c, k)?, alpha)?,
        alpha_permanent(&expand(&s, k)?, alpha)?,
    );
    let witness = json!({ "alpha": alpha, "k": k.as_slice(), "n": c.n() });
    Ok(vec![
        VerificationReport::inequality(
            "permanent_sym_le",
            "|S(C)|_alpha <= |C|_alpha",
            plain.0,
            plain.1,
            1e-10 * plain.0.abs().max(plain.1.abs()),
        )
        .with_witness(witness.clone()),
        VerificationReport::inequality(
            "permanent_sym_le_expanded",
            "|S(C)(k)|_alpha <= |C(k)|_alpha",
            expanded.0,
            expanded.1,
            1e-10 * expanded.0.abs().max(expanded.1.abs()),
        )
        .with_witness(witness),
    ])
}

fn min_entry(m: &SquareMatrix) -> f64 {
    m.as_slice().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Given `Bbar' >= Bbar`: `Abar' <= Abar` and `Abar^{-1} <= Abar'^{-1}`
/// entrywise.
pub fn monotonicity_check(a: &SquareMatrix, a_prime: &SquareMatrix) -> Result<Vec<VerificationReport>> {
    let d = decompose(a)?;
    let dp = decompose(a_prime)?;
    if d.bbar.n() != dp.bbar.n() {
        return Err(Error::ShapeMismatch {
            expected: d.bbar.n(),
            found: dp.bbar.n(),
        });
    }
    let gap = min_entry(&dp.bbar.sub(&d.bbar));
    if gap < -1e-12 {
        return Err(Error::HypothesisViolated(format!(
            "Bbar' >= Bbar fails by {}",
            -gap
        )));
    }
    let inv = d.abar.inverse()?;
    let inv_p = dp.abar.inverse()?;
    let slack_abar = min_entry(&d.abar.sub(&dp.abar));
    let slack_inv = min_entry(&inv_p.sub(&inv));
    Ok(vec![
        VerificationReport::inequality(
            "monotone_abar",
            "Bbar' >= Bbar implies Abar' <= Abar entrywise (min of Abar - Abar')",
            slack_abar,
            0.0,
            1e-10,
        ),
        VerificationReport::inequality(
            "monotone_abar_inverse",
            "Bbar' >= Bbar implies Abar^{-1} <= Abar'^{-1} entrywise (min of difference)",
            slack_inv,
            0.0,
            1e-10,
        ),
    ])
}

/// A partner `A' = D (I - Bbar - E)` with `E >= 0`, zero diagonal, scaled so
/// that `rho(Bbar + E) <= (1 + rho(Bbar)) / 2`.
pub fn monotone_partner<R: Rng + ?Sized>(a: &SquareMatrix, rng: &mut R) -> Result<SquareMatrix> {
    let dec = decompose(a)?;
    let n = a.n();
    let target = (1.0 + dec.rho) / 2.0;
    let e = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random::<f64>() });
    let mut t = 1.0;
    for _ in 0..60 {
        let bp = SquareMatrix::from_fn(n, |i, j| dec.bbar[(i, j)] + t * e[(i, j)]);
        if spectral_radius(&bp)? <= target {
            return Ok(SquareMatrix::from_fn(n, |i, j| {
                dec.d[i] * (if i == j { 1.0 } else { 0.0 } - bp[(i, j)])
            }));
        }
        t /= 2.0;
    }
    Ok(a.clone())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Empirical quantile (lower order statistic).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

fn max_coord(x: &[f64]) -> f64 {
    x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Monte Carlo checks of `E f(X) >= ratio E f(X~)` for the fixed family
/// (indicators of `max > t` on a quantile grid of `X~`, `||x||_1`,
/// `exp(-||x||_1)`), the two-sided bound
/// `ratio P(g(X~) in B) <= P(g(X) in B) <= 1 - ratio + ratio P(g(X~) in B)`
/// for `g = max`, and the complement implication at a far threshold.
///
/// Streams used: `base`, `base + 1` for `X` and `X~`, `base + 2` for the
/// pilot run that fixes the thresholds.
pub fn distribution_bounds_check(pair: &SymmetrizationPair, cfg: &McConfig, epsilon: f64, base: u64) -> Result<Vec<VerificationReport>> {
    let (o, s) = (&pair.original, &pair.symmetrized);
    let to = z_pmf_table(o, epsilon)?;
    let ts = z_pmf_table(s, epsilon)?;
    let so = ZSampler::new(&to)?;
    let ss = ZSampler::new(&ts)?;

    // pilot run on X~ fixes the thresholds
    let pilot_n = cfg.n_draws.min(100_000);
    let pilot_cfg = McConfig {
        n_draws: pilot_n,
        ..cfg.with_stream(base + 2)
    };
    let pilot = crate::sampler::sample_batch(s, &ss, pilot_n, pilot_cfg.stream, cfg.workers)?;
    let maxima = sorted(pilot.rows().map(max_coord).collect());
    let mut thresholds: Vec<f64> = QUANTILE_GRID.iter().map(|&q| quantile(&maxima, q)).collect();
    // far threshold for the complement implication
    let far = maxima[maxima.len() - 1] * 2.0;
    thresholds.push(far);

    let k = thresholds.len() + 2;
    let family = |x: &[f64], _: &[u32], out: &mut [f64]| {
        let m = max_coord(x);
        for (o, t) in out.iter_mut().zip(&thresholds) {
            *o = (m > *t) as u8 as f64;
        }
        let l1: f64 = x.iter().sum();
        out[k - 2] = l1;
        out[k - 1] = (-l1).exp();
    };
    let ex = mc_estimates(o, &so, &cfg.with_stream(base), k, family)?;
    let es = mc_estimates(s, &ss, &cfg.with_stream(base + 1), k, family)?;
    let r = pair.ratio;
    let mut names: Vec<String> = QUANTILE_GRID.iter().map(|q| format!("1{{max > q{q}}}")).collect();
    names.push("1{max > far}".into());
    names.push("l1".into());
    names.push("exp(-l1)".into());

    let mut out = vec![VerificationReport::inequality(
        "domination_constant",
        "f = 1: 1 >= ratio",
        1.0,
        r,
        0.0,
    )];
    for c in 0..k {
        let tol = MC_SIGMAS * ex[c].stderr.hypot(r * es[c].stderr);
        out.push(
            VerificationReport::inequality(
                "domination_lower",
                "E f(X) >= ratio E f(X~) for positive f",
                ex[c].mean,
                r * es[c].mean,
                tol,
            )
            .with_witness(json!({ "f": names[c], "ratio": r })),
        );
    }
    for c in 0..QUANTILE_GRID.len() {
        let tol = MC_SIGMAS * ex[c].stderr.hypot(r * es[c].stderr);
        out.push(
            VerificationReport::inequality(
                "two_sided_upper",
                "P(g(X) in B) <= 1 - ratio + ratio P(g(X~) in B), g = max",
                1.0 - r + r * es[c].mean,
                ex[c].mean,
                tol,
            )
            .with_witness(json!({ "t": thresholds[c], "q": QUANTILE_GRID[c] })),
        );
    }
    // P(g(X) in B^c) ~ 0 forces P(g(X~) in B^c) <= P(g(X) in B^c) / ratio ~ 0
    let c = QUANTILE_GRID.len();
    let n = cfg.n_draws as f64;
    let upper = (ex[c].mean + MC_SIGMAS * ex[c].stderr + 16.0 / n) / r;
    out.push(
        VerificationReport::inequality(
            "complement_implication",
            "P(g(X) in B^c) = 0 forces P(g(X~) in B^c) = 0 (g = max, far threshold)",
            upper,
            es[c].mean,
            MC_SIGMAS * es[c].stderr,
        )
        .with_witness(json!({ "t": far, "p_x": ex[c].mean, "p_sym": es[c].mean })),
    );
    Ok(out)
}
