#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bubbelator::equilibria::{find_z_for_mass, general_equilibrium};
use bubbelator::hopf::{find_hopf, table1, table1_csv, table1_text, HopfSeed};
use bubbelator::roots::{kappa_j0, q_root_curve, spectrum_via_f, tan_eq_t_roots};
use bubbelator::sim::{integrate, oscillation_metrics, trajectory_csv, IntegrateOptions};
use bubbelator::{Complex64, Error, ModelParams, StateVector};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod verify;

#[derive(Parser, Debug)]
#[command(
    name = "bubbelator",
    version,
    about = "Becker–Döring with linear atomization: spectra, Hopf points, simulation"
)]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Run the invariant checks for this command's inputs; exit 1 if any fail.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the nonlinear system; trajectory CSV.
    Simulate(SimulateArgs),
    /// Equilibrium profile for a monomer density or a total mass; JSON.
    Equilibrium(EquilibriumArgs),
    /// Eigenvalues of the linearization from the characteristic function; JSON.
    Spectrum(SpectrumArgs),
    /// Roots of tan t = t, crossing values kappa_j^0 and zero curves of Q; CSV.
    Qroots(QrootsArgs),
    /// Locate one Hopf point kappa_j(M); JSON.
    Hopf(HopfArgs),
    /// First Hopf point for several M; CSV on the output, aligned text on stderr.
    Table1(Table1Args),
}

#[derive(Args, Debug, Clone, Copy)]
struct SizeArgs {
    /// Largest cluster size M.
    #[arg(long = "M", value_parser = parse_size)]
    m: usize,
    /// Atomization rate K.
    #[arg(long = "K", conflicts_with = "kappa", required_unless_present = "kappa")]
    k: Option<f64>,
    /// Scaled rate kappa = K sqrt(M).
    #[arg(long)]
    kappa: Option<f64>,
}

impl SizeArgs {
    fn params(&self) -> Result<ModelParams, Error> {
        match (self.k, self.kappa) {
            (Some(k), None) => ModelParams::new(self.m, k),
            (None, Some(kap)) => {
                let p = ModelParams::from_kappa(self.m, kap)?;
                eprintln!("kappa = {kap} with M = {} gives K = {}", self.m, p.k());
                Ok(p)
            }
            _ => Err(Error::Usage("give exactly one of --K and --kappa".into())),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    size: SizeArgs,
    /// Initial monomer density (default 1 + K).
    #[arg(long)]
    n1: Option<f64>,
    /// Initial density of every size l >= 2 (default 1 + K).
    #[arg(long)]
    fill: Option<f64>,
    #[arg(long = "t-end")]
    t_end: f64,
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    atol: f64,
    /// Keep the full state every this many accepted steps.
    #[arg(long, default_value_t = 100)]
    stride: usize,
    /// Sample the full state on this uniform time grid instead.
    #[arg(long = "sample-interval")]
    sample_interval: Option<f64>,
    /// Write the summary JSON (oscillation metrics, drift, step counts) here
    /// instead of stderr.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "target")]
struct EquilibriumTarget {
    /// Monomer density.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
    /// Total mass sum l n_l.
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<f64>,
}

#[derive(Args, Debug)]
struct EquilibriumArgs {
    #[command(flatten)]
    size: SizeArgs,
    #[command(flatten)]
    target: EquilibriumTarget,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    size: SizeArgs,
}

#[derive(Args, Debug)]
struct QrootsArgs {
    /// Number of roots t_j.
    #[arg(long = "k-max", default_value_t = 5)]
    k_max: usize,
    /// Follow the zero curves over these kappa values (comma separated).
    #[arg(long = "kappa-grid", value_delimiter = ',')]
    kappa_grid: Vec<f64>,
}

#[derive(Args, Debug)]
struct HopfArgs {
    #[arg(long = "M", value_parser = parse_size)]
    m: usize,
    /// Branch index.
    #[arg(long, default_value_t = 1)]
    j: usize,
    /// Seed z as `re,im`; needs --seed-kappa.
    #[arg(long = "seed-z", value_delimiter = ',', num_args = 2, requires = "seed_kappa")]
    seed_z: Option<Vec<f64>>,
    #[arg(long = "seed-kappa", requires = "seed_z")]
    seed_kappa: Option<f64>,
}

#[derive(Args, Debug)]
struct Table1Args {
    /// Sizes, comma separated; `1e4` style is accepted.
    #[arg(long = "M", value_delimiter = ',', value_parser = parse_size, required = true)]
    ms: Vec<usize>,
}

fn parse_size(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a size: {s}"))?;
    if x.fract() == 0.0 && (0.0..1e15).contains(&x) {
        Ok(x as usize)
    } else {
        Err(format!("not a whole number: {s}"))
    }
}

#[derive(Serialize)]
struct SpectrumEntry {
    lambda: Complex64,
    phi: Option<Complex64>,
    simple: bool,
    residual: f64,
}

#[derive(Serialize)]
struct SpectrumOut {
    m: usize,
    k: f64,
    kappa: f64,
    complete: bool,
    expected: usize,
    found: usize,
    unstable_pairs: usize,
    zero_count: usize,
    real_negative: usize,
    nonreal_pairs: usize,
    eigenvalues: Vec<SpectrumEntry>,
}

#[derive(Serialize)]
struct SimulateSummary {
    t_end: f64,
    mass0: f64,
    max_mass_drift: f64,
    min_density: f64,
    accepted: usize,
    rejected: usize,
    min_dt: f64,
    max_dt: f64,
    oscillation: Option<bubbelator::OscillationMetrics>,
}

enum Failure {
    Lib(Error),
    Verify(Vec<String>),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(Error::Internal(e.to_string()))
    }
}

fn emit(path: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn checked(problems: Vec<String>) -> Result<(), Failure> {
    if problems.is_empty() {
        eprintln!("verify: ok");
        Ok(())
    } else {
        Err(Failure::Verify(problems))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => {
            let p = a.size.params()?;
            let s0 = StateVector::monomer_excess(&p, a.n1.unwrap_or(p.a()), a.fill.unwrap_or(p.a()));
            let opts = IntegrateOptions {
                rtol: a.rtol,
                atol: a.atol,
                snapshot_stride: a.stride,
                sample_interval: a.sample_interval,
                ..Default::default()
            };
            let tr = integrate(&p, &s0, a.t_end, &opts)?;
            emit(&cli.output, &trajectory_csv(&tr))?;
            let summary = SimulateSummary {
                t_end: a.t_end,
                mass0: tr.mass0,
                max_mass_drift: tr.max_mass_drift(),
                min_density: tr.min_density,
                accepted: tr.step_stats.accepted,
                rejected: tr.step_stats.rejected,
                min_dt: tr.step_stats.min_dt,
                max_dt: tr.step_stats.max_dt,
                oscillation: oscillation_metrics(&tr).ok(),
            };
            let text = json(&summary)?;
            match &a.summary {
                Some(path) => fs::write(path, text)?,
                None => eprint!("{text}"),
            }
            if cli.verify {
                checked(verify::trajectory(&tr, opts.mass_drift_bound))?;
            }
        }
        Command::Equilibrium(a) => {
            let p = a.size.params()?;
            let z = match (a.target.z, a.target.mass) {
                (Some(z), _) => z,
                (None, Some(m)) => find_z_for_mass(&p, m)?,
                (None, None) => return Err(Error::Usage("give --z or --mass".into()).into()),
            };
            let eq = general_equilibrium(&p, z)?;
            emit(&cli.output, &json(&eq)?)?;
            if cli.verify {
                checked(verify::equilibrium(&p, &eq, a.target.mass))?;
            }
        }
        Command::Spectrum(a) => {
            let p = a.size.params()?;
            let s = spectrum_via_f(&p)?;
            if !s.complete {
                eprintln!(
                    "warning: spectrum incomplete, {} of {} eigenvalues recovered",
                    s.eigenvalues.len(),
                    s.expected
                );
            }
            let out = SpectrumOut {
                m: p.m(),
                k: p.k(),
                kappa: p.kappa(),
                complete: s.complete,
                expected: s.expected,
                found: s.eigenvalues.len(),
                unstable_pairs: s.unstable_pairs,
                zero_count: s.zero_count,
                real_negative: s.real_negative,
                nonreal_pairs: s.nonreal_pairs(),
                eigenvalues: s
                    .eigenvalues
                    .iter()
                    .map(|e| SpectrumEntry {
                        lambda: e.lambda,
                        phi: e.phi,
                        simple: e.simple,
                        residual: e.residual,
                    })
                    .collect(),
            };
            emit(&cli.output, &json(&out)?)?;
            if cli.verify {
                checked(verify::spectrum(&p, &s))?;
            }
        }
        Command::Qroots(a) => {
            let ts = tan_eq_t_roots(a.k_max)?;
            let mut csv = String::new();
            if a.kappa_grid.is_empty() {
                csv.push_str("j,t_j,kappa_j0\n");
                for (i, t) in ts.iter().enumerate() {
                    csv.push_str(&format!("{},{:.16e},{:.16e}\n", i + 1, t, kappa_j0(i + 1)?));
                }
            } else {
                csv.push_str("j,kappa,re_z,im_z,re_dz_dkappa,im_dz_dkappa\n");
                for j in 1..=a.k_max {
                    let c = q_root_curve(j, &a.kappa_grid)?;
                    for (k, z, dz) in &c.samples {
                        csv.push_str(&format!(
                            "{j},{k:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                            z.re, z.im, dz.re, dz.im
                        ));
                    }
                }
            }
            emit(&cli.output, &csv)?;
            if cli.verify {
                checked(verify::qroots(a.k_max, &a.kappa_grid)?)?;
            }
        }
        Command::Hopf(a) => {
            let seed = match (a.seed_z, a.seed_kappa) {
                (Some(z), Some(kappa)) => Some(HopfSeed {
                    z: Complex64::new(z[0], z[1]),
                    kappa,
                }),
                _ => None,
            };
            let h = find_hopf(a.m, a.j, seed)?;
            emit(&cli.output, &json(&h)?)?;
            if cli.verify {
                checked(verify::hopf(&h))?;
            }
        }
        Command::Table1(a) => {
            for m in &a.ms {
                if *m < bubbelator::hopf::MIN_M {
                    return Err(Error::Usage(format!(
                        "table1 needs M >= {}, got {m}",
                        bubbelator::hopf::MIN_M
                    ))
                    .into());
                }
            }
            let rows = table1(&a.ms);
            emit(&cli.output, &table1_csv(&rows))?;
            eprint!("{}", table1_text(&rows));
            let failed: Vec<String> = rows
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| format!("M = {}: {e}", r.m)))
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Lib(Error::NotFound(failed.join("; "))));
            }
            if cli.verify {
                checked(verify::table(&rows))?;
            }
        }
    }
    Ok(())
}

fn init_threads() {
    if let Ok(v) = std::env::var("BUBBELATOR_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists, which cannot happen here
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("ignoring BUBBELATOR_THREADS={v}: not a positive integer"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e @ (Error::Usage(_) | Error::Domain(_)))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verify(problems)) => {
            for p in problems {
                eprintln!("verify: FAIL {p}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
