use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mmwave_bf::beamformers::{Architecture, Link};
use mmwave_bf::experiments::{
    dbw_to_w, sweep, validate_asymptotics, AsymptoticPzfGee, Axis, MonteCarloGee, ScenarioConfig,
};
use mmwave_bf::optimize::{alternating_gee_max, AlternatingOptions};

#[derive(Parser)]
#[command(name = "mmwave-bf", version, about = "Multiuser mmWave beamforming: ASE and GEE simulations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base seed of all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// JSON file overriding scenario fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; a JSON companion is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated architectures, e.g. CM-FD,PZF-FD,AN.
    #[arg(long, global = true, value_delimiter = ',')]
    arch: Option<Vec<String>>,
    /// Simulate the uplink instead of the downlink.
    #[arg(long, global = true)]
    uplink: bool,
    /// Streams per user.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Number of users.
    #[arg(long, global = true)]
    users: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// ASE and GEE versus the number of transmit antennas.
    SweepNt {
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100,120,140,160,180,200")]
        values: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        n_r: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        p_t_dbw: f64,
    },
    /// ASE and GEE versus the number of receive antennas.
    SweepNr {
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
        values: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        n_t: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        p_t_dbw: f64,
    },
    /// ASE and GEE versus the transmit power (dBW); runs M = 1 and M = 3
    /// unless --m is given.
    SweepPt {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-30,-25,-20,-15,-10,-5,0,5,10")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        n_t: usize,
        #[arg(long, default_value_t = 30)]
        n_r: usize,
    },
    /// Exact versus large-array ASE along a ladder of array sizes.
    ValidateAsymptotics {
        /// Array that grows: nt or nr.
        #[arg(long, default_value = "nt")]
        axis: String,
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
        #[arg(long, default_value_t = 30)]
        n_r: usize,
        #[arg(long, default_value_t = 50)]
        n_t: usize,
    },
    /// Alternating GEE maximization over N_T, N_R and P_T.
    OptimizeGee {
        #[arg(long, value_delimiter = ',', default_value = "16,32,48,64,80,96,112,128,160,192,256")]
        nt_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,24,32,48,64")]
        nr_grid: Vec<usize>,
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        p_min_dbw: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        p_max_dbw: f64,
        /// Use the large-array PZF-FD formula instead of Monte Carlo.
        #[arg(long)]
        asymptotic: bool,
    },
}

fn scenario(common: &Common, figure: impl FnOnce(&mut ScenarioConfig)) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    figure(&mut cfg);
    if let Some(path) = &common.config {
        cfg = cfg.merged_with_file(path)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(m) = common.m {
        cfg.m_streams = m;
    }
    if let Some(k) = common.users {
        cfg.k_users = k;
    }
    if common.uplink {
        cfg.link = Link::Uplink;
    }
    if let Some(list) = &common.arch {
        cfg.architectures = list
            .iter()
            .map(|s| s.parse::<Architecture>())
            .collect::<mmwave_bf::Result<_>>()?;
    }
    Ok(cfg)
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn run_sweep(cfg: &ScenarioConfig, axis: Axis, values: &[f64], out: Option<&Path>) -> Result<()> {
    let result = sweep(cfg, axis, values)?;
    result.write_csv(open_out(out)?)?;
    if let Some(p) = out {
        write_json(&p.with_extension("json"), &result.to_json(cfg))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = &cli.common;
    let out = common.out.as_deref();
    match &cli.command {
        Command::SweepNt { values, n_r, p_t_dbw } => {
            let cfg = scenario(common, |c| {
                c.n_r = *n_r;
                c.p_t_dbw = *p_t_dbw;
            })?;
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            run_sweep(&cfg, Axis::NT, &v, out)
        }
        Command::SweepNr { values, n_t, p_t_dbw } => {
            let cfg = scenario(common, |c| {
                c.n_t = *n_t;
                c.p_t_dbw = *p_t_dbw;
            })?;
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            run_sweep(&cfg, Axis::NR, &v, out)
        }
        Command::SweepPt { values, n_t, n_r } => {
            let streams = match common.m {
                Some(m) => vec![m],
                None => vec![1, 3],
            };
            for m in streams {
                let cfg = scenario(common, |c| {
                    c.n_t = *n_t;
                    c.n_r = *n_r;
                    c.m_streams = m;
                })?;
                let path = match (out, common.m) {
                    (Some(p), None) => Some(with_suffix(p, &format!("_m{m}"), "csv")),
                    (p, _) => p.map(Path::to_path_buf),
                };
                if path.is_none() && common.m.is_none() {
                    println!("# M = {m}");
                }
                run_sweep(&cfg, Axis::PT, values, path.as_deref())?;
            }
            Ok(())
        }
        Command::ValidateAsymptotics { axis, ladder, n_r, n_t } => {
            let axis = match axis.to_ascii_lowercase().as_str() {
                "nt" | "n_t" => Axis::NT,
                "nr" | "n_r" => Axis::NR,
                other => bail!("unknown axis '{other}', expected nt or nr"),
            };
            let cfg = scenario(common, |c| {
                c.n_r = *n_r;
                c.n_t = *n_t;
            })?;
            let ladder = ladder.clone().unwrap_or_else(|| match axis {
                Axis::NR => vec![16, 32, 64, 128, 256],
                _ => vec![32, 64, 128, 256],
            });
            let report = validate_asymptotics(&cfg, axis, &ladder)?;
            report.write_csv(open_out(out)?)?;
            if let Some(p) = out {
                write_json(
                    &p.with_extension("json"),
                    &serde_json::json!({ "config": cfg, "config_hash": cfg.hash(), "report": report }),
                )?;
            }
            Ok(())
        }
        Command::OptimizeGee { nt_grid, nr_grid, p_min_dbw, p_max_dbw, asymptotic } => {
            let cfg = scenario(common, |c| {
                c.n_t = 100;
                c.n_r = 30;
            })?;
            let range = (dbw_to_w(*p_min_dbw), dbw_to_w(*p_max_dbw));
            let opts = AlternatingOptions::default();
            let mut results = Vec::new();
            if *asymptotic {
                let obj = AsymptoticPzfGee::new(&cfg)?;
                let r = alternating_gee_max(&obj, nt_grid, nr_grid, range, &opts)?;
                results.push(serde_json::json!({ "arch": "PZF-FD (large-array)", "result": r }));
            } else {
                for &kind in &cfg.architectures {
                    let obj = MonteCarloGee::new(&cfg, kind)?;
                    match alternating_gee_max(&obj, nt_grid, nr_grid, range, &opts) {
                        Ok(r) => results.push(serde_json::json!({ "arch": kind.label(), "result": r })),
                        Err(e) => results.push(serde_json::json!({ "arch": kind.label(), "error": e.to_string() })),
                    }
                }
            }
            let doc = serde_json::json!({ "config": cfg, "config_hash": cfg.hash(), "optima": results });
            let mut w = open_out(out)?;
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
            Ok(())
        }
    }
}
