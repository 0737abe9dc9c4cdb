//! Exact simulation of `X` through its gamma-mixture representation, and
//! Monte Carlo checks of the distributional identities.
//!
//! `Z` is drawn by inverse CDF over a truncated pmf table (renormalised),
//! then `X_i ~ Gamma(alpha + Z_i, rate a_i)` independently.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde_json::json;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::moments::{self, moment_table, rising_product, table_tolerance};
use crate::permanent::{constant_block_permanent, MultiIndex};
use crate::report::VerificationReport;
use crate::rng::{map_blocks, pairwise_reduce, BlockRng, RandomStream, Welford};
use crate::zdist::{PermanentalModel, ZPmfTable};

/// Tables used for sampling must be at least this complete.
pub const MAX_SAMPLING_DEFICIT: f64 = 1e-8;
pub const MIN_DRAWS: usize = 1_000;
pub const DEFAULT_DRAWS: usize = 1_000_000;
/// Width of the acceptance band in standard errors.
pub const MC_SIGMAS: f64 = 4.0;

/// One draw from the density `v^u x^{u-1} e^{-vx} / Gamma(u)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Inverse-CDF sampler over a pmf table in its enumeration order.
#[derive(Debug, Clone)]
pub struct ZSampler<'a> {
    table: &'a ZPmfTable,
    cdf: Vec<f64>,
}

impl<'a> ZSampler<'a> {
    pub fn new(table: &'a ZPmfTable) -> Result<Self> {
        if table.mass_deficit() > MAX_SAMPLING_DEFICIT {
            return Err(Error::DeficitTooLarge(table.mass_deficit()));
        }
        let mut acc = 0.0;
        let cdf = table
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { table, cdf })
    }

    pub fn table(&self) -> &'a ZPmfTable {
        self.table
    }

    /// Position in the table of one draw from the renormalised table.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MultiIndex {
        MultiIndex::new(self.table.key(self.sample_index(rng)).to_vec())
    }
}

/// One draw of `Z`. Builds the cumulative table each call; use [`ZSampler`]
/// for repeated draws.
pub fn sample_z<R: Rng + ?Sized>(table: &ZPmfTable, rng: &mut R) -> Result<MultiIndex> {
    Ok(ZSampler::new(table)?.sample(rng))
}

fn check_sampler(model: &PermanentalModel, sampler: &ZSampler) -> Result<()> {
    let t = sampler.table();
    if t.n() != model.n() || t.alpha() != model.alpha() {
        return Err(Error::ModelMismatch);
    }
    Ok(())
}

/// Draw `Z` then the gammas into `x`; returns the table position of `Z`.
fn draw_into<R: Rng + ?Sized>(model: &PermanentalModel, sampler: &ZSampler, rng: &mut R, x: &mut [f64]) -> Result<usize> {
    let idx = sampler.sample_index(rng);
    let z = sampler.table().key(idx);
    let alpha = model.alpha();
    for ((xi, &zi), &ai) in x.iter_mut().zip(z).zip(model.diag()) {
        *xi = sample_gamma(alpha + zi as f64, ai, rng)?;
    }
    Ok(idx)
}

pub fn sample_x<R: Rng + ?Sized>(model: &PermanentalModel, sampler: &ZSampler, rng: &mut R) -> Result<Vec<f64>> {
    check_sampler(model, sampler)?;
    let mut x = vec![0.0; model.n()];
    draw_into(model, sampler, rng, &mut x)?;
    Ok(x)
}

/// How many draws, from which stream, on how many threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_draws: usize,
    pub stream: RandomStream,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_draws: usize, seed: u64, stream_id: u64, workers: usize) -> Self {
        Self {
            n_draws,
            stream: RandomStream::new(seed, stream_id),
            workers,
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            stream: self.stream.with_stream(stream_id),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_draws < MIN_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_DRAWS} draws, got {}",
                self.n_draws
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl From<Welford> for Estimate {
    fn from(w: Welford) -> Self {
        Self {
            mean: w.mean,
            stderr: w.stderr(),
        }
    }
}

/// `sqrt(a^2 + b^2)` for two independent estimates.
pub fn joint_stderr(a: &Estimate, b: &Estimate) -> f64 {
    a.stderr.hypot(b.stderr)
}

fn merge_all(a: Vec<Welford>, b: Vec<Welford>) -> Vec<Welford> {
    a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect()
}

/// Means and standard errors of `k` statistics of `(X, Z)`. `f(x, z, out)`
/// writes the statistics of one draw into `out`.
pub fn mc_estimates<F>(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig, k: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &[u32], &mut [f64]) + Sync,
{
    cfg.validate()?;
    check_sampler(model, sampler)?;
    let n = model.n();
    let blocks = map_blocks(cfg.stream, cfg.n_draws, cfg.workers, |range, rng: &mut BlockRng| {
        let mut acc = vec![Welford::default(); k];
        let mut x = vec![0.0; n];
        let mut out = vec![0.0; k];
        for _ in range {
            let idx = draw_into(model, sampler, rng, &mut x)?;
            f(&x, sampler.table().key(idx), &mut out);
            acc.iter_mut().zip(&out).for_each(|(a, &v)| a.push(v));
        }
        Ok(acc)
    })?;
    let total = pairwise_reduce(blocks, merge_all).unwrap_or_else(|| vec![Welford::default(); k]);
    Ok(total.into_iter().map(Estimate::from).collect())
}

/// Same as [`mc_estimates`] for independent `Gamma(alpha, a_i)` coordinates.
pub fn independent_estimates<F>(model: &PermanentalModel, cfg: &McConfig, k: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    cfg.validate()?;
    let n = model.n();
    let alpha = model.alpha();
    let blocks = map_blocks(cfg.stream, cfg.n_draws, cfg.workers, |range, rng: &mut BlockRng| {
        let mut acc = vec![Welford::default(); k];
        let mut x = vec![0.0; n];
        let mut out = vec![0.0; k];
        for _ in range {
            for (xi, &ai) in x.iter_mut().zip(model.diag()) {
                *xi = sample_gamma(alpha, ai, rng)?;
            }
            f(&x, &mut out);
            acc.iter_mut().zip(&out).for_each(|(a, &v)| a.push(v));
        }
        Ok(acc)
    })?;
    let total = pairwise_reduce(blocks, merge_all).unwrap_or_else(|| vec![Welford::default(); k]);
    Ok(total.into_iter().map(Estimate::from).collect())
}

/// Sample mean and standard error of `f(X)`.
pub fn mc_expectation<F>(f: F, model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let est = mc_estimates(model, sampler, cfg, 1, |x, _, out| out[0] = f(x))?;
    Ok(est[0])
}

/// `N` draws of `X`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n: usize,
    pub n_draws: usize,
    pub draws: Vec<f64>,
    pub fingerprint: String,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks(self.n.max(1))
    }
}

/// FNV-1a over the bits of `alpha` and `A`.
pub fn model_fingerprint(model: &PermanentalModel) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let words = std::iter::once(model.n() as u64)
        .chain(std::iter::once(model.alpha().to_bits()))
        .chain(model.a().as_slice().iter().map(|x| x.to_bits()));
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

pub fn sample_batch(model: &PermanentalModel, sampler: &ZSampler, n_draws: usize, stream: RandomStream, workers: usize) -> Result<SampleBatch> {
    check_sampler(model, sampler)?;
    let n = model.n();
    let blocks = map_blocks(stream, n_draws, workers, |range, rng: &mut BlockRng| {
        let mut out = vec![0.0; range.len() * n];
        for row in out.chunks_mut(n.max(1)) {
            draw_into(model, sampler, rng, row)?;
        }
        Ok(out)
    })?;
    Ok(SampleBatch {
        n,
        n_draws,
        draws: blocks.concat(),
        fingerprint: model_fingerprint(model),
    })
}

fn mc_report(identity: &str, anchor: &str, analytic: f64, est: &Estimate, bias: f64) -> VerificationReport {
    VerificationReport::equality(identity, anchor, est.mean, analytic, MC_SIGMAS * est.stderr + bias)
        .with_witness(json!({ "stderr": est.stderr }))
}

/// `E Gamma(x + p) / Gamma(x)` with `x = K + shift`, `K = ||Z||_1`, from a table.
pub fn gamma_ratio_expectation(table: &ZPmfTable, shift: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p >= 0.0 {
        let m = p as usize;
        return table.expect(|k| constant_block_permanent(m, shift + k.iter().sum::<u32>() as f64));
    }
    table.expect(|k| {
        let x = shift + k.iter().sum::<u32>() as f64;
        (ln_gamma(x + p) - ln_gamma(x)).exp()
    })
}

/// First three moments of `||Y||_1 = sum a_i X_i` against
/// `E Gamma(||Z||_1 + n alpha + p) / Gamma(||Z||_1 + n alpha)`.
pub fn l1_norm_law_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig) -> Result<Vec<VerificationReport>> {
    let a = model.diag().to_vec();
    let est = mc_estimates(model, sampler, cfg, 3, |x, _, out| {
        let y: f64 = x.iter().zip(&a).map(|(xi, ai)| xi * ai).sum();
        out[0] = y;
        out[1] = y * y;
        out[2] = y * y * y;
    })?;
    let table = moment_table(model, 1e-12, 3)?;
    let shift = model.n() as f64 * model.alpha();
    Ok((1..=3)
        .map(|p| {
            let analytic = gamma_ratio_expectation(&table, shift, p as f64);
            mc_report(
                "l1_norm_law",
                "E ||Y||_1^p = E Gamma(||Z||_1 + n alpha + p)/Gamma(||Z||_1 + n alpha)",
                analytic,
                &est[p - 1],
                table_tolerance(analytic, &table) - 1e-7,
            )
            .with_witness(json!({ "p": p, "stderr": est[p - 1].stderr }))
        })
        .collect())
}

/// Squared Gaussian case: `eta ~ N(0, R)`, `sum a_i eta_i^2 / 2` has the
/// law of `||Y||_1` at `alpha = 1/2`. Checks `p = 1, 2` and `p = 1/2`.
pub fn gaussian_l2_check(model: &PermanentalModel, cfg: &McConfig) -> Result<Vec<VerificationReport>> {
    cfg.validate()?;
    if !model.a().is_symmetric(1e-12) {
        return Err(Error::NotSymmetric);
    }
    let half = model.with_alpha(0.5)?;
    let l = model.r().cholesky()?;
    let n = model.n();
    let a = model.diag().to_vec();
    let blocks = map_blocks(cfg.stream, cfg.n_draws, cfg.workers, |range, rng: &mut BlockRng| {
        let mut acc = vec![Welford::default(); 3];
        let mut g = vec![0.0; n];
        for _ in range {
            g.iter_mut().for_each(|gi| *gi = rng.sample(StandardNormal));
            let mut y = 0.0;
            for i in 0..n {
                let eta: f64 = (0..=i).map(|j| l[(i, j)] * g[j]).sum();
                y += a[i] * eta * eta / 2.0;
            }
            acc[0].push(y);
            acc[1].push(y * y);
            acc[2].push(y.sqrt());
        }
        Ok(acc)
    })?;
    let est: Vec<Estimate> = pairwise_reduce(blocks, merge_all)
        .unwrap_or_default()
        .into_iter()
        .map(Estimate::from)
        .collect();
    let table = moment_table(&half, 1e-12, 2)?;
    let shift = n as f64 / 2.0;
    let anchor = "sum a_i eta_i^2 / 2 has the law of Gamma(n/2 + ||Z||_1, 1) at alpha = 1/2";
    Ok([(1.0, 0), (2.0, 1), (0.5, 2)]
        .into_iter()
        .map(|(p, i)| {
            let analytic = gamma_ratio_expectation(&table, shift, p);
            mc_report("gaussian_l2_law", anchor, analytic, &est[i], table_tolerance(analytic, &table) - 1e-7)
                .with_witness(json!({ "p": p, "stderr": est[i].stderr }))
        })
        .collect())
}

/// `Cov(Z_i, Z_j)` and `Cov(a_i X_i, a_j X_j)` for `i < j` against
/// `alpha a_i a_j R_ij R_ji`. Centred at the exact means.
pub fn covariance_mc_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig) -> Result<Vec<VerificationReport>> {
    let n = model.n();
    let alpha = model.alpha();
    let a = model.diag().to_vec();
    let rbar: Vec<f64> = (0..n).map(|i| model.rbar_diag(i)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let est = mc_estimates(model, sampler, cfg, 2 * pairs.len(), |x, z, out| {
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let zi = z[i] as f64 - alpha * (rbar[i] - 1.0);
            let zj = z[j] as f64 - alpha * (rbar[j] - 1.0);
            out[2 * c] = zi * zj;
            let yi = a[i] * x[i] - alpha * rbar[i];
            let yj = a[j] * x[j] - alpha * rbar[j];
            out[2 * c + 1] = yi * yj;
        }
    })?;
    let mut reports = Vec::new();
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let formula = moments::z_covariance(model, i, j)?;
        reports.push(
            mc_report("covariance_z_mc", "Cov(Z_i, Z_j) = alpha a_i a_j R_ij R_ji, i != j", formula, &est[2 * c], 0.0)
                .with_witness(json!({ "i": i, "j": j, "stderr": est[2 * c].stderr })),
        );
        reports.push(
            mc_report("covariance_x_mc", "Cov(a_i X_i, a_j X_j) = alpha a_i a_j R_ij R_ji, i != j", formula, &est[2 * c + 1], 0.0)
                .with_witness(json!({ "i": i, "j": j, "stderr": est[2 * c + 1].stderr })),
        );
    }
    Ok(reports)
}

/// `E prod_j X_j^{m_j} = |R(m)|_alpha` for every `1 <= |m| <= max_total`.
pub fn mixed_moment_mc_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig, max_total: usize) -> Result<Vec<VerificationReport>> {
    let orders = moments::orders_up_to(model.n(), max_total);
    let est = mc_estimates(model, sampler, cfg, orders.len(), |x, _, out| {
        for (o, m) in out.iter_mut().zip(&orders) {
            *o = x.iter().zip(m.as_slice()).map(|(xi, &mi)| xi.powi(mi as i32)).product();
        }
    })?;
    orders
        .iter()
        .zip(&est)
        .map(|(m, e)| {
            let exact = moments::mixed_moment_x(model, m)?;
            Ok(mc_report("mixed_moment_mc", "E prod_j X_j^{m_j} = |R(m)|_alpha", exact, e, 0.0)
                .with_witness(json!({ "m": m.as_slice(), "stderr": e.stderr })))
        })
        .collect()
}

/// `E prod_j prod_{l<m_j} (alpha + Z_j + l)` by simulation of `Z` for `|m| <= 2`.
pub fn factorial_moment_mc_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig) -> Result<Vec<VerificationReport>> {
    let orders = moments::orders_up_to(model.n(), 2);
    let alpha = model.alpha();
    let est = mc_estimates(model, sampler, cfg, orders.len(), |_, z, out| {
        for (o, m) in out.iter_mut().zip(&orders) {
            *o = rising_product(alpha, z, m.as_slice());
        }
    })?;
    orders
        .iter()
        .zip(&est)
        .map(|(m, e)| {
            let exact = moments::scaled_mixed_moment(model, m)?;
            Ok(mc_report(
                "factorial_moment_mc",
                "|Rbar(m)|_alpha = E prod_j prod_{l<m_j} (alpha + Z_j + l)",
                exact,
                e,
                0.0,
            )
            .with_witness(json!({ "m": m.as_slice(), "stderr": e.stderr })))
        })
        .collect()
}

/// Empirical frequencies of the first `cells` table entries against the
/// table, band `3 sqrt(ln(2/delta) / 2N)` with `delta = 1e-3`.
pub fn z_frequency_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig, cells: usize) -> Result<VerificationReport> {
    cfg.validate()?;
    check_sampler(model, sampler)?;
    let table = sampler.table();
    let cells = cells.min(table.len());
    let blocks = map_blocks(cfg.stream, cfg.n_draws, cfg.workers, |range, rng: &mut BlockRng| {
        let mut counts = vec![0u64; cells];
        for _ in range {
            let idx = sampler.sample_index(rng);
            if idx < cells {
                counts[idx] += 1;
            }
        }
        Ok(counts)
    })?;
    let counts = pairwise_reduce(blocks, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap_or_default();
    let total = table.mass();
    let nd = cfg.n_draws as f64;
    let (worst, worst_idx) = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| ((c as f64 / nd - table.probs()[i] / total).abs(), i))
        .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
    let band = 3.0 * ((2.0f64 / 1e-3).ln() / (2.0 * nd)).sqrt();
    Ok(VerificationReport::inequality(
        "z_empirical_pmf",
        "empirical pmf of sampled Z within a DKW-type band of the table",
        band,
        worst,
        0.0,
    )
    .with_witness(json!({ "cells": cells, "worst_cell": table.key(worst_idx) })))
}

/// Increasing test functions: coordinate sum, maximum, log-sum-exp.
pub const INCREASING_FAMILY: [&str; 3] = ["sum", "max", "logsumexp"];

fn increasing_family(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out[0] = x.iter().sum();
    out[1] = max;
    out[2] = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
}

/// `E f(X) >= E f(xi)` for the fixed increasing family, `xi` independent
/// `Gamma(alpha, a_i)`. A finite family; it cannot certify all increasing `f`.
pub fn increasing_function_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig, indep_stream: u64) -> Result<Vec<VerificationReport>> {
    let k = INCREASING_FAMILY.len();
    let dep = mc_estimates(model, sampler, cfg, k, |x, _, out| increasing_family(x, out))?;
    let ind = independent_estimates(model, &cfg.with_stream(indep_stream), k, increasing_family)?;
    Ok(INCREASING_FAMILY
        .iter()
        .enumerate()
        .map(|(c, name)| {
            VerificationReport::inequality(
                "increasing_function_domination",
                "E f(X) >= E f(independent Gamma(alpha, a_i)) for increasing f",
                dep[c].mean,
                ind[c].mean,
                MC_SIGMAS * joint_stderr(&dep[c], &ind[c]),
            )
            .with_witness(json!({ "f": name }))
        })
        .collect())
}

/// Mean of each coordinate against `alpha R_ii`.
pub fn mean_check(model: &PermanentalModel, sampler: &ZSampler, cfg: &McConfig) -> Result<Vec<VerificationReport>> {
    let n = model.n();
    let est = mc_estimates(model, sampler, cfg, n, |x, _, out| out.copy_from_slice(x))?;
    Ok(est
        .iter()
        .enumerate()
        .map(|(i, e)| {
            mc_report("mean_x_mc", "E X_i = alpha R_ii", model.alpha() * model.r()[(i, i)], e, 0.0)
                .with_witness(json!({ "i": i, "stderr": e.stderr }))
        })
        .collect())
}

/// Cholesky factor helper used by the CLI.
pub fn gaussian_factor(model: &PermanentalModel) -> Result<SquareMatrix> {
    if !model.a().is_symmetric(1e-12) {
        return Err(Error::NotSymmetric);
    }
    model.r().cholesky()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zdist::z_pmf_table;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn canonical(alpha: f64) -> PermanentalModel {
        let a = SquareMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        PermanentalModel::new(a, alpha).unwrap()
    }

    fn cfg(n: usize, stream: u64) -> McConfig {
        McConfig::new(n, 2024, stream, 1)
    }

    #[test]
    fn gamma_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = Welford::default();
        let mut sq = Welford::default();
        for _ in 0..200_000 {
            let x = sample_gamma(2.5, 1.0, &mut rng).unwrap();
            assert!(x >= 0.0);
            w.push(x);
        }
        assert!((w.mean - 2.5).abs() < 3.0 * w.stderr() + 1e-3);
        for _ in 0..200_000 {
            let x = sample_gamma(1.5, 1.0, &mut rng).unwrap();
            sq.push(x * x);
        }
        // Gamma(3.5)/Gamma(1.5) = 3.75
        assert!((sq.mean - 3.75).abs() < 3.0 * sq.stderr(), "{}", sq.mean);
    }

    #[test]
    fn gamma_small_shape_and_rate_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Welford::default();
        let mut b = Welford::default();
        for _ in 0..200_000 {
            a.push(3.0 * sample_gamma(0.3, 3.0, &mut rng).unwrap());
            b.push(sample_gamma(0.3, 1.0, &mut rng).unwrap());
        }
        assert!((a.mean - 0.3).abs() < 4.0 * a.stderr());
        assert!((a.mean - b.mean).abs() < 4.0 * a.stderr().hypot(b.stderr()));
        assert!((a.variance() - 0.3).abs() < 0.02);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn deficit_guard() {
        let m = canonical(1.0);
        let t = z_pmf_table(&m, 1e-4).unwrap();
        assert!(matches!(ZSampler::new(&t), Err(Error::DeficitTooLarge(_))));
    }

    #[test]
    fn diagonal_model_draws_zero() {
        let m = PermanentalModel::new(SquareMatrix::from_diagonal(&[1.0, 2.0]), 0.5).unwrap();
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng).as_slice(), &[0, 0]);
        }
    }

    #[test]
    fn canonical_z_draws() {
        let m = canonical(1.0);
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let est = mc_estimates(&m, &s, &cfg(200_000, 0), 2, |_, z, out| {
            out[0] = (z == [0, 0]) as u8 as f64;
            out[1] = (z[0] + z[1]) as f64;
        })
        .unwrap();
        assert!((est[0].mean - 0.75).abs() < 3.0 * est[0].stderr);
        assert!((est[1].mean - 2.0 / 3.0).abs() < 3.0 * est[1].stderr);
    }

    #[test]
    fn canonical_x_moments() {
        let m = canonical(1.0);
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let est = mc_estimates(&m, &s, &cfg(200_000, 1), 4, |x, _, out| {
            out[0] = x[0];
            out[1] = x[1];
            out[2] = x[0] * x[1];
            out[3] = 2.0 * x[0] + 2.0 * x[1];
        })
        .unwrap();
        for (e, target) in est.iter().zip([2.0 / 3.0, 2.0 / 3.0, 5.0 / 9.0, 8.0 / 3.0]) {
            assert!((e.mean - target).abs() < 4.0 * e.stderr, "{e:?} vs {target}");
        }
        let one = mc_expectation(|_| 1.0, &m, &s, &cfg(1000, 2)).unwrap();
        assert_eq!((one.mean, one.stderr), (1.0, 0.0));
        assert!(mc_expectation(|_| 1.0, &m, &s, &cfg(10, 2)).is_err());
    }

    #[test]
    fn batches_are_reproducible_and_nonnegative() {
        let m = canonical(0.5);
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let st = RandomStream::new(7, 0);
        let a = sample_batch(&m, &s, 5000, st, 1).unwrap();
        let b = sample_batch(&m, &s, 5000, st, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows().count(), 5000);
        assert!(a.draws.iter().all(|&x| x >= 0.0));
        let c = sample_batch(&m, &s, 5000, RandomStream::new(8, 0), 1).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn model_mismatch_rejected() {
        let t = z_pmf_table(&canonical(1.0), 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(sample_x(&canonical(2.0), &s, &mut rng), Err(Error::ModelMismatch)));
    }

    #[test]
    fn statistical_checks_pass_on_canonical() {
        let m = canonical(1.0);
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let c = cfg(200_000, 10);
        let mut reports = l1_norm_law_check(&m, &s, &c).unwrap();
        assert!((reports[0].rhs - 8.0 / 3.0).abs() < 1e-9);
        reports.extend(covariance_mc_check(&m, &s, &c.with_stream(11)).unwrap());
        reports.extend(gaussian_l2_check(&m, &c.with_stream(12)).unwrap());
        reports.extend(increasing_function_check(&m, &s, &c.with_stream(13), 14).unwrap());
        reports.extend(mixed_moment_mc_check(&m, &s, &c.with_stream(15), 2).unwrap());
        reports.extend(factorial_moment_mc_check(&m, &s, &c.with_stream(16)).unwrap());
        reports.extend(mean_check(&m, &s, &c.with_stream(17)).unwrap());
        reports.push(z_frequency_check(&m, &s, &c.with_stream(18), 50).unwrap());
        for r in &reports {
            assert!(r.pass, "{}", r.to_json_line());
        }
    }

    #[test]
    fn gaussian_check_values() {
        let m = canonical(1.0);
        let half = m.with_alpha(0.5).unwrap();
        let t = moment_table(&half, 1e-12, 1).unwrap();
        assert!((gamma_ratio_expectation(&t, 1.0, 1.0) - 4.0 / 3.0).abs() < 1e-10);

        let one = PermanentalModel::new(SquareMatrix::from_diagonal(&[4.0]), 1.0).unwrap();
        let r = gaussian_l2_check(&one, &cfg(100_000, 5)).unwrap();
        assert!(r.iter().all(|r| r.pass));
        // Gamma(1)/Gamma(1/2) for p = 1/2
        assert!((r[2].rhs - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);

        let a = SquareMatrix::from_rows(&[[3.0, -1.0], [-2.0, 3.0]]).unwrap();
        let nonsym = PermanentalModel::new(a, 1.0).unwrap();
        assert!(matches!(gaussian_l2_check(&nonsym, &cfg(1000, 5)), Err(Error::NotSymmetric)));
    }

    #[test]
    fn diagonal_l1_law_is_gamma() {
        let m = PermanentalModel::new(SquareMatrix::from_diagonal(&[1.0, 5.0, 0.5]), 0.7).unwrap();
        let t = z_pmf_table(&m, 1e-8).unwrap();
        let s = ZSampler::new(&t).unwrap();
        let r = l1_norm_law_check(&m, &s, &cfg(100_000, 6)).unwrap();
        // n alpha = 2.1
        assert!((r[0].rhs - 2.1).abs() < 1e-12);
        assert!((r[1].rhs - 2.1 * 3.1).abs() < 1e-12);
        assert!(r.iter().all(|r| r.pass));
    }
}
