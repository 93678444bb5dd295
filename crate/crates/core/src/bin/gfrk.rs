use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gfrk::harness::{load_config, run_coarsening, run_max_stable_dt, run_refinement, run_single};
use gfrk::tableau::{
    by_name, check_order_conditions, order_condition_residuals, stability_report, ButcherTableau,
};
use gfrk::Error;

#[derive(Parser)]
#[command(
    name = "gfrk",
    version,
    about = "Energy-stable Runge-Kutta runs for gradient flows"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation, writing the configured series and snapshots.
    Run { config: PathBuf },
    /// Time-step refinement against the manufactured solution.
    Refine {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dts: Vec<f64>,
        /// Exit with status 4 unless the fitted L2 order is within --tol of this.
        #[arg(long)]
        expect_order: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        tol: f64,
        /// Write the `dt,l2,linf` table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest step size that stays within a relative deviation of a fine reference.
    Maxdt {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dts: Vec<f64>,
        #[arg(long)]
        ref_dt: f64,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
    /// Power-law fit of energy and roughness over a time window.
    Coarsen {
        config: PathBuf,
        /// `start,end`
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
    },
    /// Tableau diagnostics.
    Tableau {
        #[command(subcommand)]
        cmd: TableauCmd,
    },
    /// Print a config with every default filled in.
    PrintConfig { config: PathBuf },
}

#[derive(Subcommand)]
enum TableauCmd {
    /// Algebraic stability and order-4 conditions of a built-in name or a file.
    Check { tableau: String },
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_solver_failure() { 3 } else { 2 })
}

fn load_tableau(spec: &str) -> gfrk::Result<ButcherTableau> {
    match by_name(spec) {
        Some(t) => Ok(t),
        None => ButcherTableau::from_file(Path::new(spec)),
    }
}

fn tableau_check(spec: &str) -> gfrk::Result<()> {
    let t = load_tableau(spec)?;
    let rep = stability_report(&t, 1e-14);
    println!("{t}");
    println!("kind: {:?}", t.kind());
    println!("M max |entry|: {:.3e}", rep.m_max_abs());
    println!("M eigenvalues: {:?}", rep.m_eigenvalues);
    println!("weights nonnegative: {}", rep.weights_nonneg);
    println!("algebraically stable: {}", rep.algebraically_stable);
    println!("A positive semi-definite: {}", rep.a_psd);
    println!("diagonal positive: {}", rep.diag_positive);
    let res = order_condition_residuals(&t, 4);
    let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    println!(
        "order 4 conditions: {} (max residual {worst:.3e})",
        check_order_conditions(&t, 4)?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: gfrk::Result<ExitCode> = (|| match cli.cmd {
        Cmd::Run { config } => {
            let cfg = load_config(&config)?;
            let series = run_single(&cfg)?;
            let last = series.last().expect("series has the initial sample");
            println!(
                "t = {} after {} steps: energy {:.10e}, quadratized {:.10e}, mass {:.10e}, roughness {:.10e}",
                last.t,
                series.len() - 1,
                last.energy,
                last.energy_eq,
                last.mass,
                last.roughness
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Refine {
            config,
            dts,
            expect_order,
            tol,
            out,
        } => {
            let cfg = load_config(&config)?;
            let r = run_refinement(&cfg, &dts)?;
            println!("{:>12} {:>14} {:>14}", "dt", "l2", "linf");
            for i in 0..r.dts.len() {
                println!(
                    "{:>12.6e} {:>14.6e} {:>14.6e}",
                    r.dts[i], r.l2_errors[i], r.linf_errors[i]
                );
            }
            println!(
                "fitted order: l2 {:.4}, linf {:.4}",
                r.fitted_order_l2, r.fitted_order_linf
            );
            if let Some(path) = out {
                let f = std::fs::File::create(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                r.write_csv(std::io::BufWriter::new(f))
                    .map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
            }
            match expect_order {
                Some(p) if (r.fitted_order_l2 - p).abs() > tol => {
                    eprintln!(
                        "fitted order {:.4} is outside {p} +- {tol}",
                        r.fitted_order_l2
                    );
                    Ok(ExitCode::from(4))
                }
                _ => Ok(ExitCode::SUCCESS),
            }
        }
        Cmd::Maxdt {
            config,
            dts,
            ref_dt,
            threshold,
        } => {
            let cfg = load_config(&config)?;
            let table = run_max_stable_dt(&cfg, &dts, ref_dt, threshold)?;
            println!("reference dt {ref_dt:e}, threshold {threshold}");
            for row in &table.rows {
                let verdict = if row.correct { "correct" } else { "wrong" };
                match &row.failure {
                    None => println!("{:>12.6e} {:>12.4e} {verdict}", row.dt, row.deviation),
                    Some(msg) => println!("{:>12.6e} {:>12} {verdict} ({msg})", row.dt, "failed"),
                }
            }
            match table.largest_correct() {
                Some(dt) => println!("largest correct dt: {dt:e}"),
                None => println!("largest correct dt: none"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Coarsen { config, window } => {
            let cfg = load_config(&config)?;
            let r = run_coarsening(&cfg, window)?;
            println!(
                "energy slope {:.4}, roughness slope {:.4} over [{}, {}]",
                r.energy_slope, r.roughness_slope, window.0, window.1
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Tableau {
            cmd: TableauCmd::Check { tableau },
        } => {
            tableau_check(&tableau)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::PrintConfig { config } => {
            print!("{}", load_config(&config)?.to_text());
            Ok(ExitCode::SUCCESS)
        }
    })();
    result.unwrap_or_else(|e| exit_for(&e))
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `start,end`")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(a)?, num(b)?))
}
