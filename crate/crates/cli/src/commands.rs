use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use permanental::moments::{moment_reports, MAX_MOMENT_ORDER};
use permanental::permanent::expanded_permanent;
use permanental::report::{format_f64, raw_f64, report_schema};
use permanental::rng::RandomStream;
use permanental::sampler::sample_batch;
use permanental::{
    alpha_permanent, build_sym_pair, certify_m_matrix, decompose, det_inequalities_check, z_pmf_table,
    Error, MultiIndex, PermanentalModel, RunConfig, VerificationReport, ZSampler,
};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::input::{matrix_json, read_matrix};
use crate::{Cli, CliError, Command, Format};

type CmdResult = Result<u8, CliError>;

fn io_err(e: io::Error) -> CliError {
    CliError::Usage(format!("I/O: {e}"))
}

pub fn schema(_cli: &Cli) -> CmdResult {
    let text = serde_json::to_string_pretty(&report_schema()).expect("schema");
    writeln!(io::stdout().lock(), "{text}").map_err(io_err)?;
    Ok(0)
}

pub fn run(cli: &Cli, cmd: &Command) -> CmdResult {
    match cmd {
        Command::Check { path } => cmd_check(cli, path),
        Command::Verify { path } => cmd_verify(cli, path),
        Command::Zpmf { path } => cmd_zpmf(cli, path),
        Command::Perm { path, k } => cmd_perm(cli, path, k.as_deref()),
        Command::Moments { path } => cmd_moments(cli, path),
        Command::Sample { path } => cmd_sample(cli, path),
        Command::Symmetrize { path } => cmd_symmetrize(cli, path),
    }
}

fn model(cli: &Cli, path: &Path) -> Result<PermanentalModel, CliError> {
    let a = read_matrix(path)?;
    let m = PermanentalModel::new(a, cli.alpha)?;
    if m.is_near_critical() {
        eprintln!(
            "warning: rho(Bbar) = {:.6} is close to 1; tables will be large",
            m.rho()
        );
    }
    Ok(m)
}

fn write_report(out: &mut impl Write, r: &VerificationReport, format: Format) -> io::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", r.to_json_line()),
        Format::Text => {
            let status = if r.pass { "PASS" } else { "FAIL" };
            write!(
                out,
                "{status} {:<36} lhs={} rhs={} tol={}",
                r.identity,
                format_f64(r.lhs),
                format_f64(r.rhs),
                format_f64(r.tol)
            )?;
            if let Some(w) = &r.witness {
                write!(out, " {w}")?;
            }
            writeln!(out)
        }
    }
}

fn emit_reports(cli: &Cli, reports: &[VerificationReport]) -> CmdResult {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in reports {
        write_report(&mut out, r, cli.format).map_err(io_err)?;
    }
    Ok(if reports.iter().all(|r| r.pass) { 0 } else { 1 })
}

#[derive(Serialize)]
struct Certificate {
    certified: bool,
    n: usize,
    rho: Box<RawValue>,
    det: Box<RawValue>,
    det_abar: Box<RawValue>,
    offdiag_max: Box<RawValue>,
    inverse_min: Box<RawValue>,
    diagonal: Vec<Box<RawValue>>,
}

#[derive(Serialize)]
struct Violation {
    certified: bool,
    reason: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    index: Option<[usize; 2]>,
    message: String,
}

fn cmd_check(cli: &Cli, path: &Path) -> CmdResult {
    let a = read_matrix(path)?;
    let outcome = certify_m_matrix(&a).and_then(|c| decompose(&a).map(|d| (c, d)));
    match outcome {
        Ok((cert, dec)) => {
            let det_abar = dec.abar.determinant();
            match cli.format {
                Format::Json => {
                    let c = Certificate {
                        certified: true,
                        n: a.n(),
                        rho: raw_f64(dec.rho),
                        det: raw_f64(cert.det),
                        det_abar: raw_f64(det_abar),
                        offdiag_max: raw_f64(cert.offdiag_max),
                        inverse_min: raw_f64(cert.inverse_min),
                        diagonal: dec.d.iter().map(|&x| raw_f64(x)).collect(),
                    };
                    println!("{}", serde_json::to_string(&c).expect("certificate"));
                }
                Format::Text => {
                    println!("certified M-matrix, n = {}", a.n());
                    println!("rho(Bbar)   = {}", format_f64(dec.rho));
                    println!("det A       = {}", format_f64(cert.det));
                    println!("det Abar    = {}", format_f64(det_abar));
                    println!("min inverse = {}", format_f64(cert.inverse_min));
                }
            }
            Ok(0)
        }
        Err(Error::NotMMatrix(v)) => {
            let msg = Error::NotMMatrix(v).to_string();
            match cli.format {
                Format::Json => {
                    let out = Violation {
                        certified: false,
                        reason: v.name(),
                        index: v.index().map(|(i, j)| [i, j]),
                        message: msg.clone(),
                    };
                    println!("{}", serde_json::to_string(&out).expect("violation"));
                }
                Format::Text => println!("not certified: {msg}"),
            }
            eprintln!("{msg}");
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_verify(cli: &Cli, path: &Path) -> CmdResult {
    let a = read_matrix(path)?;
    let cfg = RunConfig {
        alpha: cli.alpha,
        epsilon: cli.epsilon,
        n_draws: cli.n_draws,
        seed: cli.seed,
        suite: cli.suite.into(),
        workers: cli.workers,
        witness_path: Some(cli.out.clone().unwrap_or_else(|| "sym_witness.json".into())),
    };
    let m = PermanentalModel::new(a.clone(), cli.alpha)?;
    if m.is_near_critical() {
        eprintln!("warning: rho(Bbar) = {:.6} is close to 1; tables will be large", m.rho());
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut io_error = None;
    let summary = permanental::verify(&a, &cfg, &mut |r| {
        if io_error.is_none() {
            if let Err(e) = write_report(&mut out, r, cli.format).and_then(|_| out.flush()) {
                io_error = Some(e);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(io_err(e));
    }
    if summary.aborted {
        eprintln!(
            "symmetrization suite stopped at a falsified inequality; witness written to {}",
            cfg.witness_path.as_ref().unwrap().display()
        );
    }
    Ok(if summary.all_passed() { 0 } else { 1 })
}

#[derive(Serialize)]
struct PmfLine<'a> {
    k: &'a [u32],
    p: Box<RawValue>,
}

#[derive(Serialize)]
struct PmfTrailer {
    deficit: Box<RawValue>,
    #[serde(rename = "K")]
    k: usize,
    entries: usize,
    clipped: usize,
}

fn cmd_zpmf(cli: &Cli, path: &Path) -> CmdResult {
    let m = model(cli, path)?;
    let table = z_pmf_table(&m, cli.epsilon)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (k, p) in table.iter() {
        match cli.format {
            Format::Json => {
                let line = PmfLine { k, p: raw_f64(p) };
                writeln!(out, "{}", serde_json::to_string(&line).expect("pmf line")).map_err(io_err)?;
            }
            Format::Text => {
                let ks: Vec<String> = k.iter().map(u32::to_string).collect();
                writeln!(out, "{} {}", ks.join(" "), format_f64(p)).map_err(io_err)?;
            }
        }
    }
    let trailer = PmfTrailer {
        deficit: raw_f64(table.mass_deficit()),
        k: table.max_total_degree(),
        entries: table.len(),
        clipped: table.clipped(),
    };
    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string(&trailer).expect("trailer")),
        Format::Text => writeln!(
            out,
            "# deficit {} K {} entries {}",
            format_f64(table.mass_deficit()),
            trailer.k,
            trailer.entries
        ),
    }
    .map_err(io_err)?;
    Ok(0)
}

#[derive(Serialize)]
struct PermOut {
    alpha: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<Vec<u32>>,
    value: Box<RawValue>,
}

fn cmd_perm(cli: &Cli, path: &Path, k: Option<&[u32]>) -> CmdResult {
    let a = read_matrix(path)?;
    let value = match k {
        Some(k) => expanded_permanent(&a, &MultiIndex::new(k.to_vec()), cli.alpha)?,
        None => alpha_permanent(&a, cli.alpha)?,
    };
    match cli.format {
        Format::Json => {
            let out = PermOut {
                alpha: raw_f64(cli.alpha),
                k: k.map(<[u32]>::to_vec),
                value: raw_f64(value),
            };
            println!("{}", serde_json::to_string(&out).expect("perm"));
        }
        Format::Text => println!("{value}"),
    }
    Ok(0)
}

fn cmd_moments(cli: &Cli, path: &Path) -> CmdResult {
    let m = model(cli, path)?;
    let max_order = if m.n() <= 3 { 5 } else { 4 }.min(MAX_MOMENT_ORDER);
    let reports = moment_reports(&m, cli.epsilon.min(1e-10), max_order, 3)?;
    emit_reports(cli, &reports)
}

fn cmd_sample(cli: &Cli, path: &Path) -> CmdResult {
    let m = model(cli, path)?;
    if cli.n_draws == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let table = z_pmf_table(&m, cli.epsilon.min(1e-8))?;
    let sampler = ZSampler::new(&table)?;
    let batch = sample_batch(&m, &sampler, cli.n_draws, RandomStream::new(cli.seed, 0), cli.workers)?;
    let sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(File::create(p).map_err(io_err)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(sink));
    let header: Vec<String> = (1..=batch.n).map(|i| format!("x{i}")).collect();
    w.write_record(&header).map_err(|e| CliError::Usage(e.to_string()))?;
    for row in batch.rows() {
        w.write_record(row.iter().map(|&x| format_f64(x)))
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(io_err)?;
    Ok(0)
}

fn cmd_symmetrize(cli: &Cli, path: &Path) -> CmdResult {
    let m = model(cli, path)?;
    let pair = build_sym_pair(&m)?;
    let doc = matrix_json(pair.symmetrized.a());
    match &cli.out {
        Some(p) => std::fs::write(p, format!("{doc}\n")).map_err(io_err)?,
        None => println!("{doc}"),
    }
    emit_reports(cli, &det_inequalities_check(&pair))
}
