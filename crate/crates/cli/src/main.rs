use clap::{Args, Parser, Subcommand};
use otfs_isac::config::{load_config, ExperimentConfig};
use otfs_isac::experiments::{
    cdf_summary, mc_validate_se, run_bandwidth_sweep, run_cdf_experiment, run_scenario, run_table4,
    run_tradeoff_sweep, tradeoff_summary, with_threads, Instance, allocate,
};
use otfs_isac::output::OutputDir;
use otfs_isac::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Cell-free OTFS ISAC simulator.
#[derive(Parser)]
#[command(name = "otfs-isac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the Monte Carlo realization count.
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Place one scenario and write it as JSON, with its max-min convergence trace.
    Scenario(Common),
    /// Compare the closed-form SE with Monte Carlo.
    ValidateSe(Common),
    /// Per-user SE samples for the CDF comparison.
    Cdf(Common),
    /// Min-SE against the sensing requirement.
    Tradeoff(Common),
    /// OTFS and OFDM SE across subcarrier spacings.
    Bandwidth(Common),
    /// Cyclic-prefix overhead table.
    Table4(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Scenario(c)
            | Command::ValidateSe(c)
            | Command::Cdf(c)
            | Command::Tradeoff(c)
            | Command::Bandwidth(c)
            | Command::Table4(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Scenario(_) => "scenario",
            Command::ValidateSe(_) => "validate-se",
            Command::Cdf(_) => "cdf",
            Command::Tradeoff(_) => "tradeoff",
            Command::Bandwidth(_) => "bandwidth",
            Command::Table4(_) => "table4",
        }
    }
}

fn resolve(common: &Common) -> otfs_isac::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(r) = common.realizations {
        cfg.realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: &Command, cfg: &ExperimentConfig) -> otfs_isac::Result<()> {
    let mut out = OutputDir::create(&command.common().out)?;
    match command {
        Command::Scenario(_) => {
            out.json("scenario.json", &run_scenario(cfg, 0)?)?;
            let inst = Instance::build(cfg, 0)?;
            let alloc = allocate(cfg, &inst.model, &inst.stats)?;
            match alloc.optimized {
                Some((_, state)) => {
                    out.json_lines("convergence.jsonl", &state.trace)?;
                }
                None => {
                    let best = alloc.coeffs.max_sensing_sinr();
                    out.finish(command.name(), cfg)?;
                    return Err(Error::Infeasible { required: cfg.gamma_s(), achievable: best });
                }
            }
        }
        Command::ValidateSe(_) => {
            let reports = mc_validate_se(cfg, cfg.seed, cfg.realizations)?;
            let rows: Vec<_> = reports
                .iter()
                .map(|r| McRow {
                    user: r.user,
                    mc_se: r.mc_se,
                    closed_se: r.closed_se,
                    rel_error: r.rel_error,
                    ds2_mc: r.ds2.mean,
                    ds2_se: r.ds2.std_err,
                    ds2_closed: r.closed.ds2,
                    bu_mc: r.bu.mean,
                    bu_se: r.bu.std_err,
                    bu_closed: r.closed.bu,
                    isi_mc: r.isi.mean,
                    isi_se: r.isi.std_err,
                    isi_closed: r.closed.isi,
                    iui_mc: r.iui.mean,
                    iui_se: r.iui.std_err,
                    iui_closed: r.closed.iui,
                    realizations: r.ds2.count,
                })
                .collect();
            out.csv("validate_se.csv", &rows)?;
        }
        Command::Cdf(_) => {
            let rows = run_cdf_experiment(cfg)?;
            out.csv("cdf.csv", &rows)?;
            out.csv("cdf_summary.csv", &cdf_summary(&rows))?;
        }
        Command::Tradeoff(_) => {
            let rows = run_tradeoff_sweep(cfg, &cfg.gamma_sweep_db)?;
            out.csv("tradeoff.csv", &rows)?;
            out.csv("tradeoff_summary.csv", &tradeoff_summary(&rows, &cfg.gamma_sweep_db))?;
        }
        Command::Bandwidth(_) => {
            out.csv("bandwidth.csv", &run_bandwidth_sweep(cfg, &cfg.delta_f_sweep_hz)?)?;
        }
        Command::Table4(_) => {
            out.csv("table4.csv", &run_table4(cfg)?)?;
        }
    }
    out.finish(command.name(), cfg)
}

#[derive(serde::Serialize)]
struct McRow {
    user: usize,
    mc_se: f64,
    closed_se: f64,
    rel_error: f64,
    ds2_mc: f64,
    ds2_se: f64,
    ds2_closed: f64,
    bu_mc: f64,
    bu_se: f64,
    bu_closed: f64,
    isi_mc: f64,
    isi_se: f64,
    isi_closed: f64,
    iui_mc: f64,
    iui_se: f64,
    iui_closed: f64,
    realizations: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(cli.command.common()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match with_threads(cfg.threads, || run(&cli.command, &cfg)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) | Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
