//! Command-line pipeline over the summation library. One subcommand per
//! stage so runs can be chained:
//! validate -> solve -> borel -> fixedpoint -> covering -> sum -> classify,
//! plus the two curve-fitting utilities. All file outputs are byte-stable.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gevrey_core::borel::{borel_transform, inverse_borel, relative_table_diff, BorelTable};
use gevrey_core::fixed_point::picard_solve;
use gevrey_core::geometry::{
    build_good_covering, covering_check, covering_from_json, covering_to_json, default_time_sector,
};
use gevrey_core::instance::{instance_from_json, report_to_json, ProblemInstance};
use gevrey_core::mode_space::{set_compensated_accumulation, ModeGrid};
use gevrey_core::series::{read_table_csv, solve_recursion, write_table_csv};
use gevrey_core::summation::{classify_pairs, decay_fit, evaluate_u, gevrey_fit, QuadratureSpec};
use gevrey_core::C64;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const EXIT_VALIDATION: i32 = 2;
const EXIT_CERTIFICATION: i32 = 3;
const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(name = "gevrey", version, about = "Borel-Laplace summation toolkit for two-time singular Cauchy problems")]
struct Cli {
    /// worker threads (falls back to GEVREY_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// floating accumulation mode
    #[arg(long, global = true, value_enum, default_value_t = Precision::Double)]
    precision: Precision,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    Double,
    /// Kahan-compensated inner summation
    Extended,
}

#[derive(Args)]
struct GridArgs {
    /// mode grid half-width (default: from the decay profile of the instance)
    #[arg(long)]
    mmax: Option<f64>,
    /// number of mode grid nodes (odd)
    #[arg(long)]
    npoints: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check every structural condition of an instance file
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Solve the coefficient recursion and write the table as CSV
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// perturbation parameter as RE,IM
        #[arg(long)]
        eps: String,
        /// truncation orders as N1,N2
        #[arg(long)]
        order: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Rescale a table CSV to the Borel plane (or back with --inverse)
    Borel {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        #[arg(long)]
        k1: u32,
        #[arg(long)]
        k2: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        inverse: bool,
        /// epsilon recorded in the table (RE,IM)
        #[arg(long, default_value = "0.1,0")]
        eps: String,
    },
    /// Solve the Borel-plane fixed point; optionally cross-check against the
    /// recursion route and fail on mismatch
    Fixedpoint {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        order: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// "recursion" replays the coefficient matching and compares
        #[arg(long, value_name = "ORACLE")]
        check_against: Option<String>,
        /// relative tolerance for the cross-check
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Generate a good covering with admissible multidirections
    Covering {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        s1: usize,
        #[arg(long)]
        s2: usize,
        /// sector opening, e.g. 70deg or 1.22rad
        #[arg(long)]
        opening: String,
        #[arg(long)]
        out: PathBuf,
        /// verify the generated covering at this angular step (degrees)
        #[arg(long, default_value_t = 0.1)]
        check_step_deg: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Evaluate the sectorial solution at one point
    Sum {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        cov: PathBuf,
        /// covering cell as P1,P2
        #[arg(long)]
        cell: String,
        #[arg(long)]
        t1: String,
        #[arg(long)]
        t2: String,
        #[arg(long)]
        z: String,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value = "10,10")]
        order: String,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Classify covering-cell pairs into difference-decay classes
    Classify {
        #[arg(long)]
        cov: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a Gevrey order to a norm sequence (CSV columns n,value)
    FitGevrey {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Fit a decay level to difference samples (CSV columns eps,diff)
    FitDecay {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn parse_complex(s: &str) -> anyhow::Result<C64> {
    let mut it = s.split(',');
    let re: f64 = it
        .next()
        .ok_or_else(|| anyhow!("expected RE,IM"))?
        .trim()
        .parse()
        .context("bad real part")?;
    let im: f64 = it.next().unwrap_or("0").trim().parse().context("bad imaginary part")?;
    if it.next().is_some() {
        bail!("expected RE,IM");
    }
    Ok(C64::new(re, im))
}

fn parse_order(s: &str) -> anyhow::Result<(usize, usize)> {
    let mut it = s.split(',');
    let n1: usize = it.next().ok_or_else(|| anyhow!("expected N1,N2"))?.trim().parse()?;
    let n2: usize = it.next().ok_or_else(|| anyhow!("expected N1,N2"))?.trim().parse()?;
    if it.next().is_some() || n1 == 0 || n2 == 0 || n1 > 64 || n2 > 64 {
        bail!("orders must be 1..=64 as N1,N2");
    }
    Ok((n1, n2))
}

fn parse_angle(s: &str) -> anyhow::Result<f64> {
    let t = s.trim();
    if let Some(v) = t.strip_suffix("deg") {
        Ok(v.trim().parse::<f64>()?.to_radians())
    } else if let Some(v) = t.strip_suffix("rad") {
        Ok(v.trim().parse::<f64>()?)
    } else {
        Ok(t.parse::<f64>()?)
    }
}

fn parse_cell(s: &str) -> anyhow::Result<(usize, usize)> {
    let mut it = s.split(',');
    let p1: usize = it.next().ok_or_else(|| anyhow!("expected P1,P2"))?.trim().parse()?;
    let p2: usize = it.next().ok_or_else(|| anyhow!("expected P1,P2"))?.trim().parse()?;
    Ok((p1, p2))
}

fn load_instance(path: &Path) -> anyhow::Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(instance_from_json(&text)?)
}

fn make_grid(inst: &ProblemInstance, g: &GridArgs) -> anyhow::Result<Arc<ModeGrid>> {
    let grid = match (g.mmax, g.npoints) {
        (Some(m), Some(n)) => ModeGrid::new(m, n)?,
        (Some(m), None) => ModeGrid::new(m, 257)?,
        (None, n) => {
            let auto = ModeGrid::for_space(inst.space.beta, inst.space.mu)?;
            match n {
                Some(np) => ModeGrid::new(auto.m_max, np)?,
                None => auto,
            }
        }
    };
    Ok(grid)
}

fn read_csv_pairs(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split(',');
        let a = it.next().map(str::trim).unwrap_or("");
        let b = it.next().map(str::trim).unwrap_or("");
        let (Ok(x), Ok(y)) = (a.parse::<f64>(), b.parse::<f64>()) else {
            if i == 0 {
                continue; // header
            }
            bail!("line {}: expected two numeric columns", i + 1);
        };
        out.push((x, y));
    }
    Ok(out)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::Validate { instance, out, grid } => {
            let inst = load_instance(&instance)?;
            let g = make_grid(&inst, &grid)?;
            let rep = gevrey_core::instance::validate_instance(&inst, &g)?;
            let json = report_to_json(&rep)?;
            write_or_print(out.as_deref(), &json)?;
            if rep.pass {
                eprintln!("validate: pass");
                Ok(0)
            } else {
                eprintln!("validate: FAIL {:?}", rep.failed_labels());
                Ok(EXIT_VALIDATION)
            }
        }
        Cmd::Solve { instance, eps, order, out, grid } => {
            let inst = load_instance(&instance)?;
            let g = make_grid(&inst, &grid)?;
            let eps = parse_complex(&eps)?;
            let (n1, n2) = parse_order(&order)?;
            let table = solve_recursion(&inst, eps, n1, n2, &g)?;
            let mut buf = Vec::new();
            write_table_csv(&mut buf, &table, None)?;
            std::fs::write(&out, buf)?;
            eprintln!("solve: wrote {}", out.display());
            Ok(0)
        }
        Cmd::Borel { input, k1, k2, out, inverse, eps } => {
            let eps = parse_complex(&eps)?;
            let file = std::fs::File::open(&input)?;
            let (table, ks) = read_table_csv(std::io::BufReader::new(file), eps)?;
            let mut buf = Vec::new();
            if inverse {
                let (k1, k2) = ks.unwrap_or((k1, k2));
                let w = BorelTable { table, k1, k2 };
                let u = inverse_borel(&w);
                write_table_csv(&mut buf, &u, None)?;
            } else {
                let w = borel_transform(&table, k1, k2);
                write_table_csv(&mut buf, &w.table, Some((k1, k2)))?;
            }
            std::fs::write(&out, buf)?;
            Ok(0)
        }
        Cmd::Fixedpoint { instance, eps, order, out, check_against, tol, grid } => {
            let inst = load_instance(&instance)?;
            let g = make_grid(&inst, &grid)?;
            let eps = parse_complex(&eps)?;
            let (n1, n2) = parse_order(&order)?;
            let pic = picard_solve(&inst, eps, n1, n2, &g)?;
            eprintln!(
                "fixedpoint: stabilized after {} sweeps, contraction estimate {:.3e}",
                pic.iterations, pic.contraction_estimate
            );
            if let Some(p) = &out {
                let mut buf = Vec::new();
                write_table_csv(&mut buf, &pic.omega.table, Some((pic.omega.k1, pic.omega.k2)))?;
                std::fs::write(p, buf)?;
            }
            if let Some(oracle) = check_against {
                if oracle != "recursion" {
                    bail!("unknown oracle {oracle:?}; only \"recursion\" is supported");
                }
                let rec = solve_recursion(&inst, eps, n1, n2, &g)?;
                let w = borel_transform(&rec, inst.exponents.k1, inst.exponents.k2);
                let diff = relative_table_diff(&pic.omega.table, &w.table);
                if diff <= tol {
                    eprintln!("fixedpoint: oracle agreement {diff:.3e} within {tol:.1e}");
                } else {
                    eprintln!("fixedpoint: ORACLE MISMATCH {diff:.3e} exceeds {tol:.1e}");
                    return Ok(EXIT_CERTIFICATION);
                }
            }
            Ok(0)
        }
        Cmd::Covering { instance, s1, s2, opening, out, check_step_deg, grid } => {
            let inst = load_instance(&instance)?;
            let g = make_grid(&inst, &grid)?;
            let opening = parse_angle(&opening)?;
            let tsec = default_time_sector();
            let cov = build_good_covering(&inst, s1, s2, inst.space.eps0, opening, tsec.clone(), tsec, &g)?;
            let rep = covering_check(&cov, check_step_deg.to_radians());
            std::fs::write(&out, covering_to_json(&cov)?)?;
            if rep.pass {
                eprintln!("covering: pass ({} cells)", cov.cells.len());
                Ok(0)
            } else {
                eprintln!("covering: generated but FAILED verification: {rep:?}");
                Ok(EXIT_CERTIFICATION)
            }
        }
        Cmd::Sum { instance, cov, cell, t1, t2, z, eps, order, grid } => {
            let inst = load_instance(&instance)?;
            let g = make_grid(&inst, &grid)?;
            let cov = covering_from_json(&std::fs::read_to_string(&cov)?)?;
            let cell = parse_cell(&cell)?;
            let (t1, t2, z, eps) =
                (parse_complex(&t1)?, parse_complex(&t2)?, parse_complex(&z)?, parse_complex(&eps)?);
            let (n1, n2) = parse_order(&order)?;
            let pic = picard_solve(&inst, eps, n1, n2, &g)?;
            let q = QuadratureSpec::for_instance(&inst);
            match evaluate_u(&inst, &pic.omega, &cov, cell, t1, t2, z, eps, &q) {
                Ok(v) => {
                    println!(
                        "{{\"re\": {}, \"im\": {}}}",
                        gevrey_core::fmt_f64(v.re),
                        gevrey_core::fmt_f64(v.im)
                    );
                    Ok(0)
                }
                Err(e @ gevrey_core::Error::OutsideCertifiedDomain { .. }) => {
                    eprintln!("sum: {e}");
                    Ok(EXIT_CERTIFICATION)
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Classify { cov, out } => {
            let cov = covering_from_json(&std::fs::read_to_string(&cov)?)?;
            let cls = classify_pairs(&cov);
            let json = serde_json::to_string_pretty(&cls)?;
            write_or_print(out.as_deref(), &json)?;
            Ok(0)
        }
        Cmd::FitGevrey { csv } => {
            let rows = read_csv_pairs(&csv)?;
            let mut rows = rows;
            rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let norms: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let fit = gevrey_fit(&norms)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(0)
        }
        Cmd::FitDecay { csv } => {
            let rows = read_csv_pairs(&csv)?;
            let fit = decay_fit(&rows)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(0)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap renders help/version as "errors" too; keep exit 0 for those
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("GEVREY_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    if matches!(cli.precision, Precision::Extended) {
        set_compensated_accumulation(true);
    }
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
