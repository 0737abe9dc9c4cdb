//! Runs every check for one input matrix and streams the reports.
//!
//! Each Monte Carlo check owns a fixed stream id, so the output depends only
//! on `(A, alpha, epsilon, n_draws, seed)` and never on the worker count.

use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::moments;
use crate::permanent::{alpha_permanent, constant_block_permanent, MultiIndex};
use crate::report::VerificationReport;
use crate::rng::RandomStream;
use crate::sampler::{self, McConfig, ZSampler, DEFAULT_DRAWS, MIN_DRAWS};
use crate::symmetrize::{self, build_sym_pair};
use crate::zdist::{self, z_pmf, z_pmf_table, PermanentalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Exact,
    Mc,
    Sym,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "exact" => Ok(Suite::Exact),
            "mc" => Ok(Suite::Mc),
            "sym" => Ok(Suite::Sym),
            other => Err(Error::InvalidArgument(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    /// Target mass deficit of pmf tables.
    pub epsilon: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub suite: Suite,
    pub workers: usize,
    /// Where a falsified symmetrization inequality is written.
    pub witness_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 1e-8,
            n_draws: DEFAULT_DRAWS,
            seed: 0,
            suite: Suite::All,
            workers: 1,
            witness_path: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.n_draws < MIN_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_DRAWS} draws, got {}",
                self.n_draws
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn mc(&self, stream_id: u64) -> McConfig {
        McConfig::new(self.n_draws, self.seed, stream_id, self.workers)
    }
}

// Stream ids, one per Monte Carlo check.
const S_MEAN: u64 = 1;
const S_MIXED: u64 = 2;
const S_FACTORIAL: u64 = 3;
const S_COV: u64 = 4;
const S_L1: u64 = 5;
const S_FREQ: u64 = 6;
const S_INCR: u64 = 7;
const S_INCR_INDEP: u64 = 8;
const S_GAUSS: u64 = 9;
const S_SYM_RANDOM: u64 = 100;
const S_SYM_BOUNDS: u64 = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifySummary {
    pub total: usize,
    pub failed: usize,
    /// The symmetrization suite stopped at a falsified inequality.
    pub aborted: bool,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && !self.aborted
    }
}

struct Sink<'a> {
    out: &'a mut dyn FnMut(&VerificationReport),
    summary: VerifySummary,
}

impl Sink<'_> {
    fn emit(&mut self, r: VerificationReport) -> bool {
        self.summary.total += 1;
        if !r.pass {
            self.summary.failed += 1;
        }
        (self.out)(&r);
        r.pass
    }

    fn emit_all(&mut self, rs: Vec<VerificationReport>) {
        for r in rs {
            self.emit(r);
        }
    }

    fn emit_result(&mut self, identity: &str, anchor: &str, rs: Result<Vec<VerificationReport>>) {
        match rs {
            Ok(rs) => self.emit_all(rs),
            Err(e) => {
                self.emit(VerificationReport::failure(identity, anchor, e));
            }
        }
    }
}

/// Run the configured suites on `a`, passing each report to `out` as soon
/// as it is ready.
pub fn verify(a: &SquareMatrix, cfg: &RunConfig, out: &mut dyn FnMut(&VerificationReport)) -> Result<VerifySummary> {
    cfg.validate()?;
    let model = PermanentalModel::new(a.clone(), cfg.alpha)?;
    let mut sink = Sink {
        out,
        summary: VerifySummary::default(),
    };
    if cfg.suite.includes(Suite::Exact) {
        exact_suite(&model, cfg, &mut sink);
    }
    if cfg.suite.includes(Suite::Mc) {
        mc_suite(&model, cfg, &mut sink);
    }
    if cfg.suite.includes(Suite::Sym) {
        sym_suite(&model, cfg, &mut sink)?;
    }
    Ok(sink.summary)
}

/// Same as [`verify`], collecting the reports.
pub fn verify_collect(a: &SquareMatrix, cfg: &RunConfig) -> Result<(Vec<VerificationReport>, VerifySummary)> {
    let mut all = Vec::new();
    let summary = verify(a, cfg, &mut |r| all.push(r.clone()))?;
    Ok((all, summary))
}

/// Points `s` at which the two Laplace transforms are compared.
pub fn laplace_points(n: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = [0.0, 0.1, 0.5, std::f64::consts::LN_2, 2.0]
        .iter()
        .map(|&t| vec![t; n])
        .collect();
    pts.push((0..n).map(|i| 0.25 * (i + 1) as f64).collect());
    pts.push((0..n).map(|i| if i % 2 == 0 { 0.0 } else { 1.5 }).collect());
    pts
}

fn exact_suite(model: &PermanentalModel, cfg: &RunConfig, sink: &mut Sink) {
    let n = model.n();
    let alpha = model.alpha();
    let det = model.det_a();

    sink.emit(VerificationReport::inequality(
        "spectral_radius_below_one",
        "rho(Bbar) < 1",
        1.0,
        model.rho(),
        0.0,
    ));

    // alpha-permanent sanity on the input itself
    if n <= crate::permanent::PERMANENT_CAP {
        match alpha_permanent(model.a(), -1.0) {
            Ok(p) => {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sink.emit(VerificationReport::equality(
                    "permanent_minus_one_is_determinant",
                    "|A|_{-1} = (-1)^n det(A)",
                    p,
                    sign * det,
                    1e-9 * det.abs().max(1.0),
                ));
            }
            Err(e) => {
                sink.emit(VerificationReport::failure("permanent_minus_one_is_determinant", "", e));
            }
        }
    }
    for m in 1..=7 {
        let ones = SquareMatrix::from_fn(m, |_, _| 1.0);
        let closed = constant_block_permanent(m, alpha);
        match alpha_permanent(&ones, alpha) {
            Ok(p) => sink.emit(
                VerificationReport::equality(
                    "all_ones_permanent",
                    "|E_m|_alpha = prod_{l<m} (alpha + l)",
                    p,
                    closed,
                    1e-10 * closed.abs(),
                )
                .with_witness(json!({ "m": m })),
            ),
            Err(e) => sink.emit(VerificationReport::failure("all_ones_permanent", "", e)),
        };
    }

    let table = match z_pmf_table(model, cfg.epsilon) {
        Ok(t) => t,
        Err(e) => {
            sink.emit(VerificationReport::failure("normalization", "sum_k P(Z = k) = 1", e));
            return;
        }
    };
    sink.emit(
        VerificationReport::inequality(
            "normalization",
            "sum_k P(Z = k) = 1: table deficit below epsilon",
            cfg.epsilon,
            table.mass_deficit(),
            0.0,
        )
        .with_witness(json!({ "max_total_degree": table.max_total_degree(), "entries": table.len(), "clipped": table.clipped() })),
    );
    let p0 = table.get(&vec![0; n]).unwrap_or(f64::NAN);
    sink.emit(VerificationReport::equality(
        "p_zero",
        "P(Z = 0) = |Abar|^alpha",
        p0,
        model.p_zero(),
        1e-14,
    ));

    // table entries against direct alpha-permanents
    let brute_degree = 6.min(crate::permanent::PERMANENT_CAP);
    let mut worst: f64 = 0.0;
    let mut worst_k = vec![0; n];
    let mut brute_ok = true;
    'outer: for d in 0..=brute_degree.min(table.max_total_degree()) {
        for k in MultiIndex::with_total(n, d) {
            match z_pmf(model, &k) {
                Ok(p) => {
                    let t = table.get(k.as_slice()).unwrap_or(f64::NAN);
                    let diff = (p - t).abs();
                    if !(diff <= worst) {
                        worst = diff;
                        worst_k = k.as_slice().to_vec();
                    }
                }
                Err(e) => {
                    sink.emit(VerificationReport::failure("pmf_table_vs_permanent", "", e));
                    brute_ok = false;
                    break 'outer;
                }
            }
        }
    }
    if brute_ok {
        sink.emit(
            VerificationReport::equality(
                "pmf_table_vs_permanent",
                "P(Z = k) = |Abar|^alpha |Bbar(k)|_alpha / k! on low shells",
                worst,
                0.0,
                1e-12,
            )
            .with_witness(json!({ "max_total": brute_degree, "worst_k": worst_k })),
        );
    }

    for s in laplace_points(n) {
        let closed = zdist::z_laplace_closed(model, &s);
        match closed {
            Ok(c) => {
                let series = table.laplace(&s);
                sink.emit(
                    VerificationReport::equality(
                        "laplace_closed_vs_series",
                        "E e^{-<s,Z>} = |Abar|^alpha / |I - Bbar E(s)|^alpha",
                        c,
                        series,
                        table.mass_deficit().max(0.0) + 1e-10,
                    )
                    .with_witness(json!({ "s": s })),
                );
            }
            Err(e) => {
                sink.emit(VerificationReport::failure("laplace_closed_vs_series", "", e));
            }
        }
    }

    for frac in [0.5, 1.0 / 3.0] {
        let split = (model.with_alpha(alpha * frac), model.with_alpha(alpha * (1.0 - frac)));
        let r = match split {
            (Ok(ma), Ok(mb)) => zdist::z_convolve_check(&ma, &mb, cfg.epsilon)
                .map(|r| r.with_witness(json!({ "alpha": alpha * frac, "beta": alpha * (1.0 - frac) }))),
            (Err(e), _) | (_, Err(e)) => Err(e),
        };
        match r {
            Ok(r) => sink.emit(r),
            Err(e) => sink.emit(VerificationReport::failure("infinite_divisibility", "", e)),
        };
    }

    let max_order = if n <= 3 { 5 } else { 4 };
    sink.emit_result(
        "moments",
        "moment identities",
        moments::moment_reports(model, cfg.epsilon.min(1e-10), max_order, 3),
    );
}

fn mc_suite(model: &PermanentalModel, cfg: &RunConfig, sink: &mut Sink) {
    let table = match z_pmf_table(model, cfg.epsilon.min(sampler::MAX_SAMPLING_DEFICIT)) {
        Ok(t) => t,
        Err(e) => {
            sink.emit(VerificationReport::failure("mc_setup", "pmf table for sampling", e));
            return;
        }
    };
    let zs = match ZSampler::new(&table) {
        Ok(s) => s,
        Err(e) => {
            sink.emit(VerificationReport::failure("mc_setup", "pmf table for sampling", e));
            return;
        }
    };
    sink.emit_result("mean_x_mc", "", sampler::mean_check(model, &zs, &cfg.mc(S_MEAN)));
    sink.emit_result("mixed_moment_mc", "", sampler::mixed_moment_mc_check(model, &zs, &cfg.mc(S_MIXED), 2));
    sink.emit_result("factorial_moment_mc", "", sampler::factorial_moment_mc_check(model, &zs, &cfg.mc(S_FACTORIAL)));
    sink.emit_result("covariance_mc", "", sampler::covariance_mc_check(model, &zs, &cfg.mc(S_COV)));
    sink.emit_result("l1_norm_law", "", sampler::l1_norm_law_check(model, &zs, &cfg.mc(S_L1)));
    sink.emit_result(
        "z_empirical_pmf",
        "",
        sampler::z_frequency_check(model, &zs, &cfg.mc(S_FREQ), 200).map(|r| vec![r]),
    );
    sink.emit_result(
        "increasing_function_domination",
        "",
        sampler::increasing_function_check(model, &zs, &cfg.mc(S_INCR), S_INCR_INDEP),
    );
    if model.a().is_symmetric(1e-12) {
        sink.emit_result("gaussian_l2_law", "", sampler::gaussian_l2_check(model, &cfg.mc(S_GAUSS)));
    }
}

/// Write the failing instance next to the reports.
fn write_witness(model: &PermanentalModel, cfg: &RunConfig, report: &VerificationReport, extra: serde_json::Value) -> Result<()> {
    let path = match &cfg.witness_path {
        Some(p) => p.clone(),
        None => return Ok(()),
    };
    let doc = json!({
        "report": serde_json::from_str::<serde_json::Value>(&report.to_json_line()).unwrap_or_default(),
        "n": model.n(),
        "matrix": model.a().rows(),
        "alpha": model.alpha(),
        "seed": cfg.seed,
        "instance": extra,
    });
    let text = serde_json::to_string_pretty(&doc).expect("witness serialisation");
    std::fs::write(&path, text).map_err(|e| Error::InvalidArgument(format!("writing {}: {e}", path.display())))
}

/// Emits reports until the first failure; a failure is written to the
/// witness file and the suite stops.
fn sym_suite(model: &PermanentalModel, cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let emit_or_abort = |sink: &mut Sink, rs: Vec<VerificationReport>, extra: serde_json::Value| -> Result<bool> {
        for r in rs {
            let failed = !r.pass;
            let copy = if failed { Some(r.clone()) } else { None };
            sink.emit(r);
            if let Some(r) = copy {
                write_witness(model, cfg, &r, extra)?;
                sink.summary.aborted = true;
                return Ok(false);
            }
        }
        Ok(true)
    };
    let fail = |sink: &mut Sink, identity: &str, e: Error| {
        sink.emit(VerificationReport::failure(identity, "", e));
        sink.summary.aborted = true;
    };

    let pair = match build_sym_pair(model) {
        Ok(p) => p,
        Err(e) => {
            let r = VerificationReport::failure("sym_certifies", "A_sym is a nonsingular M-matrix", &e);
            write_witness(model, cfg, &r, json!(null))?;
            sink.emit(r);
            sink.summary.aborted = true;
            return Ok(());
        }
    };
    let sym_rows = json!({ "a_sym": pair.symmetrized.a().rows() });
    if !emit_or_abort(sink, symmetrize::det_inequalities_check(&pair), sym_rows.clone())? {
        return Ok(());
    }

    let alpha = model.alpha();
    let mut rng = RandomStream::new(cfg.seed, S_SYM_RANDOM).rng();
    // B and Bbar of the input, then random nonnegative C, each with a few expansions
    let mut cs = vec![model.decomposition().b.clone(), model.bbar().clone()];
    for t in 0..20 {
        let m = 2 + t % 4;
        cs.push(SquareMatrix::from_fn(m, |_, _| {
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random::<f64>() * 2.0
            }
        }));
    }
    for c in &cs {
        let m = c.n();
        let mut ks = vec![MultiIndex::new(vec![1; m])];
        for _ in 0..2 {
            let mut k = vec![0u32; m];
            for _ in 0..rng.random_range(1..=7usize) {
                k[rng.random_range(0..m)] += 1;
            }
            ks.push(MultiIndex::new(k));
        }
        for k in ks {
            match symmetrize::permanent_inequality_check(c, alpha, &k) {
                Ok(rs) => {
                    if !emit_or_abort(sink, rs, json!({ "c": c.rows(), "k": k.as_slice() }))? {
                        return Ok(());
                    }
                }
                Err(e) => {
                    fail(sink, "permanent_sym_le", e);
                    return Ok(());
                }
            }
        }
    }

    for _ in 0..3 {
        let partner = match symmetrize::monotone_partner(model.a(), &mut rng) {
            Ok(p) => p,
            Err(e) => {
                fail(sink, "monotone_abar", e);
                return Ok(());
            }
        };
        match symmetrize::monotonicity_check(model.a(), &partner) {
            Ok(rs) => {
                if !emit_or_abort(sink, rs, json!({ "a_prime": partner.rows() }))? {
                    return Ok(());
                }
            }
            Err(e) => {
                fail(sink, "monotone_abar", e);
                return Ok(());
            }
        }
    }
    match symmetrize::distribution_bounds_check(&pair, &cfg.mc(S_SYM_BOUNDS), cfg.epsilon.min(1e-8), S_SYM_BOUNDS) {
        Ok(rs) => {
            emit_or_abort(sink, rs, sym_rows)?;
        }
        Err(e) => fail(sink, "domination_lower", e),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> SquareMatrix {
        SquareMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap()
    }

    #[test]
    fn suite_parsing_and_config_validation() {
        assert_eq!("mc".parse::<Suite>().unwrap(), Suite::Mc);
        assert!("bogus".parse::<Suite>().is_err());
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
        let c = RunConfig { n_draws: 10, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { alpha: 0.0, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(Error::NonPositiveAlpha(_))));
    }

    #[test]
    fn canonical_exact_suite_passes() {
        let cfg = RunConfig { suite: Suite::Exact, ..RunConfig::default() };
        let (reports, summary) = verify_collect(&canonical(), &cfg).unwrap();
        for r in &reports {
            assert!(r.pass, "{}", r.to_json_line());
        }
        assert!(summary.all_passed() && summary.total == reports.len());
        let spot = reports
            .iter()
            .find(|r| r.identity == "laplace_closed_vs_series" && r.witness.as_ref().unwrap()["s"][0] == std::f64::consts::LN_2)
            .unwrap();
        assert!((spot.lhs - 0.8).abs() < 1e-14);
    }

    #[test]
    fn mc_suite_is_worker_independent() {
        let base = RunConfig {
            suite: Suite::Mc,
            n_draws: 20_000,
            seed: 7,
            ..RunConfig::default()
        };
        let lines = |workers| {
            let cfg = RunConfig { workers, ..base.clone() };
            let (r, s) = verify_collect(&canonical(), &cfg).unwrap();
            assert!(s.all_passed(), "{:?}", r.iter().filter(|r| !r.pass).collect::<Vec<_>>());
            r.iter().map(|r| r.to_json_line()).collect::<Vec<_>>()
        };
        assert_eq!(lines(1), lines(3));
    }

    #[test]
    fn sym_suite_reports_strict_determinant() {
        let a = SquareMatrix::from_rows(&[[3.0, -1.0, 0.0], [0.0, 3.0, -1.0], [-1.0, 0.0, 3.0]]).unwrap();
        let cfg = RunConfig {
            suite: Suite::Sym,
            n_draws: 50_000,
            seed: 1,
            ..RunConfig::default()
        };
        let (reports, summary) = verify_collect(&a, &cfg).unwrap();
        assert!(summary.all_passed(), "{:?}", reports.iter().filter(|r| !r.pass).collect::<Vec<_>>());
        let det = reports.iter().find(|r| r.identity == "det_sym_ge_det").unwrap();
        assert!((det.lhs - 27.0).abs() < 1e-12 && (det.rhs - 26.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_m_matrix() {
        let a = SquareMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(verify_collect(&a, &RunConfig::default()), Err(Error::NotMMatrix(_))));
    }
}
