use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hpband::adapt::{loop_log_csv, run_hp};
use hpband::bands::BandProvider;
use hpband::config::RunConfig;
use hpband::fekete::{interior_fekete, node_table_text, DEFAULT_SEEDS};
use hpband::harness::export::{study_csv, write_study, Series};
use hpband::harness::{
    baseline_study, convergence_study, loglog_slope, matched_comparison, Baseline, ReferenceGrid,
};
use hpband::{WaveVector, MAX_DEGREE};

#[derive(Parser)]
#[command(name = "hpband", version, about = "hp-adaptive band structure interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interior Fekete node tables.
    Fekete {
        #[command(subcommand)]
        action: FeketeCmd,
    },
    /// Adaptive interpolation runs.
    Hp {
        #[command(subcommand)]
        action: HpCmd,
    },
    /// Direct provider queries.
    Bands {
        #[command(subcommand)]
        action: BandsCmd,
    },
    /// Convergence studies.
    Study {
        #[command(subcommand)]
        action: StudyCmd,
    },
}

#[derive(Subcommand)]
enum FeketeCmd {
    /// Optimise interior node sets and write the table.
    Compute {
        /// A single degree; all degrees 3..=10 when absent.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum HpCmd {
    /// Run the adaptive loop and dump the loop log and interpolants.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Overrides `outputDir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BandsCmd {
    /// Eigenvalues, frequencies and frequency gradients at one wave vector.
    Eval {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, num_args = 2, value_names = ["K1", "K2"], allow_negative_numbers = true)]
        k: Vec<f64>,
    },
    /// Eigenvalues on the reference grid of the domain, as CSV.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Points per domain edge; defaults to `grid` from the config.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Error against reference values for loops 1..=nMax, plus an optional
    /// uniform baseline.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        baseline: Option<Baseline>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(arg: &ConfigArg) -> Result<(RunConfig, Box<dyn BandProvider>)> {
    let cfg = RunConfig::load(&arg.config)
        .with_context(|| format!("reading {}", arg.config.display()))?;
    let provider = cfg.build_provider()?;
    Ok((cfg, provider))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn fekete_compute(degree: Option<usize>, seeds: usize, out: Option<&Path>) -> Result<()> {
    let degrees = match degree {
        Some(m) => m..=m,
        None => 3..=MAX_DEGREE,
    };
    let mut sets = Vec::new();
    for m in degrees {
        let set = interior_fekete(m, seeds)?;
        log::info!("degree {m}: min barycentric {:.3e}", set.min_barycentric());
        sets.push(set);
    }
    write_or_print(out, &node_table_text(&sets))
}

fn hp_run(arg: &ConfigArg, out: Option<PathBuf>) -> Result<()> {
    let (cfg, provider) = load(arg)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let run = run_hp(&provider, &cfg.adapt)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("loops.csv"), loop_log_csv(&run.adapt.log))?;
    for (j, gi) in run.interpolants.iter().enumerate() {
        std::fs::write(dir.join(format!("interpolant_band_{}.txt", j + 1)), gi.to_text())?;
    }
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    std::fs::write(
        dir.join("final_mesh.svg"),
        run.state.mesh.to_svg(&run.state.report.marked),
    )?;
    print!("{}", loop_log_csv(&run.adapt.log));
    println!(
        "elements={} marked={} N={} output={}",
        run.state.mesh.num_elements(),
        run.state.report.marked.len(),
        run.n,
        dir.display()
    );
    Ok(())
}

fn fmt_grad(g: Option<[f64; 2]>) -> String {
    match g {
        Some([a, b]) => format!("{a:.10e},{b:.10e}"),
        None => ",".into(),
    }
}

fn bands_eval(arg: &ConfigArg, k: &[f64]) -> Result<()> {
    let (_, provider) = load(arg)?;
    let s = provider.sample(WaveVector::new(k[0], k[1]))?;
    println!("band,lambda,omega,domega_dk1,domega_dk2");
    for q in 0..s.lambda.len() {
        println!(
            "{},{:.12e},{:.12e},{}",
            q + 1,
            s.lambda[q],
            s.omega[q],
            fmt_grad(s.grad_omega[q])
        );
    }
    Ok(())
}

fn bands_sweep(arg: &ConfigArg, grid: Option<usize>, out: Option<&Path>) -> Result<()> {
    let (cfg, provider) = load(arg)?;
    let grid = ReferenceGrid::new(cfg.adapt.domain, grid.unwrap_or(cfg.grid))?;
    let mut csv = String::from("k1,k2");
    for q in 1..=provider.num_bands() {
        csv.push_str(&format!(",lambda_{q}"));
    }
    csv.push('\n');
    for &k in &grid.points {
        let lambda = provider.eigenvalues(k)?;
        csv.push_str(&format!("{:.12e},{:.12e}", k.k1, k.k2));
        for l in lambda {
            csv.push_str(&format!(",{l:.12e}"));
        }
        csv.push('\n');
    }
    write_or_print(out, &csv)
}

fn baseline_name(b: Baseline) -> &'static str {
    match b {
        Baseline::UniformH => "uniform-h",
        Baseline::UniformP => "uniform-p",
    }
}

fn study_run(arg: &ConfigArg, baseline: Option<Baseline>, out: Option<PathBuf>) -> Result<()> {
    let (cfg, provider) = load(arg)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let grid = ReferenceGrid::new(cfg.adapt.domain, cfg.grid)?;
    let rb = cfg.report_bands();
    let study = convergence_study(&provider, &cfg.adapt, cfg.adapt.n_max, &grid, rb)?;
    let budget = study.rows.last().map_or(0, |r| r.n);
    let base = match baseline {
        Some(b) => Some((b, baseline_study(&provider, b, &cfg.adapt, budget, &grid, rb)?)),
        None => None,
    };
    let series: Vec<Series> = base
        .iter()
        .map(|(b, rows)| Series {
            name: baseline_name(*b),
            rows,
        })
        .collect();
    let last = study.reports.last().context("empty study")?;
    write_study(&dir, &study.run, &study.rows, last, &grid, &series)?;
    if let Some((b, rows)) = &base {
        std::fs::write(
            dir.join(format!("baseline_{}.csv", baseline_name(*b))),
            study_csv(rows),
        )?;
    }
    print!("{}", study_csv(&study.rows));
    if study.rows.len() >= 2 {
        let fit = loglog_slope(&study.rows)?;
        println!("slope={:.4} r2={:.4}", fit.slope, fit.r2);
    }
    if let Some((b, rows)) = &base {
        match matched_comparison(&study.rows, rows) {
            Some(m) => println!(
                "{} at N={}: adaptive={:.4e} baseline={:.4e} ratio={:.4}",
                baseline_name(*b),
                m.n,
                m.adaptive,
                m.baseline,
                m.adaptive / m.baseline
            ),
            None => println!("{}: no overlapping N range", baseline_name(*b)),
        }
    }
    println!("output={}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Fekete {
            action: FeketeCmd::Compute { degree, seeds, out },
        } => fekete_compute(degree, seeds, out.as_deref()),
        Command::Hp {
            action: HpCmd::Run { cfg, out },
        } => hp_run(&cfg, out),
        Command::Bands { action } => match action {
            BandsCmd::Eval { cfg, k } => bands_eval(&cfg, &k),
            BandsCmd::Sweep { cfg, grid, out } => bands_sweep(&cfg, grid, out.as_deref()),
        },
        Command::Study {
            action: StudyCmd::Run { cfg, baseline, out },
        } => study_run(&cfg, baseline, out),
    }
}
