use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::json;

use subharmonic::combinatorics::NecklaceTable;
use subharmonic::config::{parse_pairs, RunConfig, KEYS};
use subharmonic::experiment::{export_csv, run_experiment, weight_report, Experiment};
use subharmonic::periodic::{minimal_order, newton_shoot, NewtonOptions};
use subharmonic::spectral::{principal_eigenvalue, verify_morse};

const GATE_FAILED: u8 = 2;

/// Failure that should exit with the validation code.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config").long("config").value_name("FILE").help("flat key = value config file")];
    args.extend(KEYS.iter().map(|k| Arg::new(*k).long(*k).value_name("VALUE").allow_hyphen_values(true)));
    args
}

fn cli() -> Command {
    let y0 = Arg::new("y0").long("y0").value_name("U,UP").help("initial state at the section time");
    Command::new("subharmonic")
        .about("Positive periodic and subharmonic solutions of u'' + (a+ - mu a-) g(u) = 0")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(Command::new("weight-report").about("Hump structure, mu#, mean value and hypothesis checks").args(config_args()))
        .subcommand(
            Command::new("solve")
                .about("Newton solve for a kT-periodic orbit from one initial state")
                .args(config_args())
                .arg(y0.clone().required(true))
                .arg(Arg::new("csv").long("csv").value_name("PATH")),
        )
        .subcommand(Command::new("subharmonics").about("Full search with manifest and CSV output").args(config_args()))
        .subcommand(
            Command::new("eigen")
                .about("Principal periodic eigenvalue of the weight, Dirichlet eigenvalues per hump, optionally lambda0 along an orbit")
                .args(config_args())
                .arg(y0),
        )
        .subcommand(
            Command::new("count")
                .about("Table of S_n(k), the number of aperiodic necklaces")
                .arg(Arg::new("n").long("n").default_value("2").value_parser(clap::value_parser!(u64)))
                .arg(Arg::new("k-min").long("k-min").default_value("1").value_parser(clap::value_parser!(u64)))
                .arg(Arg::new("k-max").long("k-max").default_value("10").value_parser(clap::value_parser!(u64)))
                .arg(Arg::new("words").long("words").action(ArgAction::SetTrue).help("also list Lyndon words")),
        )
        .subcommand(
            Command::new("reproduce")
                .about("Run a builtin preset")
                .arg(Arg::new("preset").required(true).value_parser(["fig1", "fig2"]))
                .args(config_args()),
        )
}

fn load_config(m: &ArgMatches, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        cfg.apply(&parse_pairs(&text)?)?;
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_y0(m: &ArgMatches) -> Result<Option<[f64; 2]>> {
    let Some(s) = m.get_one::<String>("y0") else { return Ok(None) };
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| Invalid(format!("--y0: cannot parse '{s}'")))?;
    match v[..] {
        [u, up] => Ok(Some([u, up])),
        _ => Err(Invalid(format!("--y0 expects two numbers, got '{s}'")).into()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn summarize(exp: &Experiment) {
    let m = &exp.manifest;
    println!(
        "k = {}, m = {}, r = {:?}, R = {:?}, mu# = {:.6}, gate {}",
        m.search.k,
        m.search.m,
        m.search.r,
        m.search.big_r,
        m.weight.mu_sharp,
        if m.weight.gate_ok { "ok" } else { "FAILED (mean value >= 0)" }
    );
    println!("{:>3} {:>12} {:>6} {:>11} {:>9} {:>7} {:>12}", "#", "string", "class", "residual", "minimal", "det-1", "lambda0");
    for o in &m.orbits {
        println!(
            "{:>3} {:>12} {:>6} {:>11.3e} {:>9} {:>7.0e} {:>12}",
            o.index,
            o.string,
            o.class_id,
            o.residual,
            o.minimal,
            o.monodromy_det - 1.0,
            o.lambda0.map_or("-".into(), |l| format!("{l:.6}"))
        );
    }
    println!("{} orbits, {} classes (at least {} predicted for the order-k count)", m.orbits.len(), m.classes.len(), m.search.predicted_classes);
    for e in &m.oscillation {
        match (e.zero_count, e.winding) {
            (Some(z), Some(w)) => println!("  orbit {} vs reference {}: {} zeros, winding {:.6}", e.orbit, e.reference, z, w),
            _ => println!("  orbit {} vs reference {}: {}", e.orbit, e.reference, e.error.as_deref().unwrap_or("n/a")),
        }
    }
}

fn experiment(cfg: RunConfig) -> Result<u8> {
    let exp = run_experiment(&cfg)?;
    summarize(&exp);
    if let Some(dir) = &cfg.output_dir {
        println!("wrote {}", dir.join("manifest.json").display());
    }
    Ok(if exp.manifest.weight.gate_ok { 0 } else { GATE_FAILED })
}

fn dispatch(matches: &ArgMatches) -> Result<u8> {
    match matches.subcommand() {
        Some(("weight-report", m)) => {
            let cfg = load_config(m, RunConfig::default())?;
            let report = weight_report(&cfg)?;
            let hyp = subharmonic::nonlinearity::check_hypotheses(&cfg.nonlinearity()?, Default::default());
            print_json(&json!({ "weight": report, "hypotheses": hyp }))?;
            Ok(if report.gate_ok { 0 } else { GATE_FAILED })
        }
        Some(("solve", m)) => {
            let cfg = load_config(m, RunConfig::default())?;
            let y0 = parse_y0(m)?.expect("required");
            let field = cfg.field()?;
            let opts = NewtonOptions { tol: cfg.newton_tol, max_iter: cfg.max_iter, integration_tol: cfg.integration_tol };
            let orbit = newton_shoot(&field, y0, cfg.k, &opts)?;
            let minimal = minimal_order(&orbit, field.weight.period, 10.0 * cfg.newton_tol);
            if let Some(path) = m.get_one::<String>("csv") {
                export_csv(&orbit, &PathBuf::from(path), cfg.csv_stride())?;
            }
            print_json(&json!({
                "y0": orbit.y0,
                "section": orbit.section,
                "k": orbit.order_k,
                "residual": orbit.residual,
                "iterations": orbit.iterations,
                "minimal": minimal,
                "max_per_hump": orbit.max_per_hump,
                "monodromy": orbit.monodromy,
            }))?;
            Ok(0)
        }
        Some(("subharmonics", m)) => experiment(load_config(m, RunConfig::default())?),
        Some(("eigen", m)) => {
            let cfg = load_config(m, RunConfig::default())?;
            let w = cfg.weight_spec()?;
            let report = weight_report(&cfg)?;
            let q = |t: f64| w.eval(t);
            let hill = principal_eigenvalue(&q, w.period)?;
            let mut out = json!({ "lambda0_weight": hill.lambda0, "lambda1_per_hump": report.lambda1_per_hump });
            if let Some(y0) = parse_y0(m)? {
                let field = cfg.field()?;
                let opts = NewtonOptions { tol: cfg.newton_tol, max_iter: cfg.max_iter, integration_tol: cfg.integration_tol };
                let orbit = newton_shoot(&field, y0, 1, &opts)?;
                let (l, neg) = verify_morse(&orbit, &field)?;
                out["orbit"] = json!({ "y0": orbit.y0, "lambda0": l, "negative": neg });
            }
            print_json(&out)?;
            Ok(0)
        }
        Some(("count", m)) => {
            let n = *m.get_one::<u64>("n").expect("default");
            let (lo, hi) = (*m.get_one::<u64>("k-min").expect("default"), *m.get_one::<u64>("k-max").expect("default"));
            if n < 1 || lo < 1 || hi < lo {
                bail!(Invalid(format!("need n >= 1 and 1 <= k-min <= k-max, got n = {n}, k = {lo}..{hi}")));
            }
            let words = m.get_flag("words");
            println!("{:>4} {:>24}", "k", format!("S_{n}(k)"));
            for k in lo..=hi {
                let t = NecklaceTable::build(n, k, words)?;
                println!("{:>4} {:>24}", k, t.count);
                if let Some(ws) = t.words {
                    println!("     {}", ws.join(" "));
                }
            }
            Ok(0)
        }
        Some(("reproduce", m)) => {
            let name = m.get_one::<String>("preset").expect("required");
            let mut base = RunConfig::preset(name)?;
            base.output_dir = Some(PathBuf::from("out").join(name));
            experiment(load_config(m, base)?)
        }
        _ => unreachable!("subcommand required"),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match e.downcast_ref::<subharmonic::Error>() {
        Some(err) if err.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match dispatch(&matches) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
