//! Subcommand implementations and the exit-code policy.
//!
//! 0 success, 1 verification discrepancy, 2 bad input, 3 non-convergence,
//! 4 infeasible, 5 enumeration guard. A solver run that completes but ends
//! on an infeasible portfolio still writes its outputs, then exits 4.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use dmpt_core::continuous::{round_to_lots, solve_continuous, utility_continuous};
use dmpt_core::discrete::{
    check_feasible, naive_weights, portfolio_point, utility_discrete_unchecked, DiscreteProblem,
    EsgConstraint, PortfolioPoint,
};
use dmpt_core::esg::d_esg_stocks;
use dmpt_core::frontier::{envelope, frontier_gap, sample_cloud, write_cloud_csv, write_envelope_csv, CloudMode, DEFAULT_BINS};
use dmpt_core::market::{synthesize_market, EsgTable, MarketStats};
use dmpt_core::qubo::{encode, PenaltyWeights};
use dmpt_core::solvers::{calibrate_ntot, solve, SamplerChoice, SamplerConfig};
use dmpt_core::Error;

use crate::docs::{
    to_json_bytes, BaselineDoc, CalibrationDoc, ContinuousDoc, DiscreteDoc, EsgCapDoc, GapsDoc,
    ResultDoc, RoundedDoc,
};
use crate::inputs;
use crate::manifest::{self, ManifestInputs, RunManifest, Stages};
use crate::{
    Cli, Command, ContinuousArgs, DiscreteArgs, FrontierArgs, Mode, OptimizeCommand, SweepArgs,
    SynthArgs, VerifyArgs,
};

pub struct Fail {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::NoConvergence { .. } => 3,
            Error::Infeasible(_) => 4,
            Error::GuardExceeded { .. } => 5,
            _ => 2,
        };
        Fail {
            code,
            message: err.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Fail {
    Fail {
        code: 2,
        message: message.into(),
    }
}

pub fn dispatch(argv: Vec<String>) -> Result<u8, Fail> {
    let mut full = Vec::with_capacity(argv.len() + 1);
    full.push("dmpt".to_string());
    full.extend(argv.iter().cloned());
    let cli = match Cli::try_parse_from(&full) {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints its own usage text; --help and --version land here
            // too and carry exit code 0.
            let code = u8::try_from(err.exit_code()).unwrap_or(2);
            let _ = err.print();
            return Ok(code);
        }
    };
    match (cli.from_manifest, cli.command) {
        (Some(path), None) => replay(&path),
        (None, Some(command)) => execute(command, &argv),
        (Some(_), Some(_)) => Err(usage(
            "--from-manifest replaces the subcommand; give one or the other",
        )),
        (None, None) => Err(usage("give a subcommand or --from-manifest; see --help")),
    }
}

fn replay(path: &Path) -> Result<u8, Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let recorded: RunManifest = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: not a run manifest: {e}", path.display())))?;
    if recorded.argv.iter().any(|a| a == "--from-manifest") {
        return Err(usage("manifest records another replay; refusing to chain"));
    }
    dispatch(recorded.argv)
}

fn execute(command: Command, argv: &[String]) -> Result<u8, Fail> {
    match command {
        Command::Optimize(OptimizeCommand::Continuous(args)) => run_continuous(&args, argv),
        Command::Optimize(OptimizeCommand::Discrete(args)) => run_discrete(&args, argv),
        Command::Frontier(args) => run_frontier(&args, argv),
        Command::Sweep(args) => run_sweep(&args, argv),
        Command::Verify(args) => run_verify(&args),
        Command::Synth(args) => run_synth(&args, argv),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Fail> {
    std::fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn emit_manifest(
    command: &str,
    argv: &[String],
    config: serde_json::Value,
    penalty_weights: Option<PenaltyWeights>,
    outputs: Vec<PathBuf>,
    requested: Option<&PathBuf>,
    stages: Stages,
) -> Result<PathBuf, Fail> {
    let path = requested
        .cloned()
        .unwrap_or_else(|| manifest::default_path(&outputs[0]));
    let doc = manifest::build(ManifestInputs {
        command,
        argv,
        config,
        penalty_weights,
        outputs,
        stages,
    });
    write_bytes(&path, &to_json_bytes(&doc))?;
    Ok(path)
}

fn config_echo<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("flags serialize")
}

fn check_phi(phi: f64) -> Result<(), Fail> {
    if !(phi.is_finite() && phi > 0.0) {
        return Err(usage("phi must be positive"));
    }
    Ok(())
}

fn run_continuous(args: &ContinuousArgs, argv: &[String]) -> Result<u8, Fail> {
    let mut stages = Stages::start();
    check_phi(args.phi)?;
    let (tickers, stats) =
        inputs::load_stats(&args.prices, args.tickers.as_deref(), args.periods_per_year)?;
    stages.mark("load");

    let solution = solve_continuous(&stats, args.phi, args.tol)?;
    let point = portfolio_point(&solution.weights, &stats)?;
    let rounded = match args.budget {
        Some(budget) => {
            let r = round_to_lots(&solution.weights, &stats, budget)?;
            Some(RoundedDoc {
                n_tot: r.total_lots(),
                lots: r.lots,
                spent: r.spent,
                budget: r.budget,
                violation: r.violation,
            })
        }
        None => None,
    };
    stages.mark("solve");

    let doc = ResultDoc::Continuous(ContinuousDoc {
        tickers,
        phi: args.phi,
        tol: args.tol,
        weights: solution.weights,
        utility: solution.utility,
        iterations: solution.iterations,
        residual: solution.residual,
        point,
        rounded,
    });
    write_bytes(&args.out, &to_json_bytes(&doc))?;
    stages.mark("write");
    let manifest_path = emit_manifest(
        "optimize continuous",
        argv,
        config_echo(args),
        None,
        vec![args.out.clone()],
        args.manifest.as_ref(),
        stages,
    )?;
    println!("wrote {} and {}", args.out.display(), manifest_path.display());
    Ok(0)
}

enum LotPlan {
    Fixed(u64),
    Calibrate { budget: f64, slack_tol: f64 },
}

fn lot_plan(args: &DiscreteArgs) -> Result<LotPlan, Fail> {
    match (args.ntot, args.calibrate) {
        (Some(0), _) => Err(usage("ntot must be positive")),
        (Some(n), false) => Ok(LotPlan::Fixed(n)),
        (None, true) => match args.budget {
            Some(budget) => Ok(LotPlan::Calibrate {
                budget,
                slack_tol: args.slack_tol,
            }),
            None => Err(usage("--calibrate requires --budget")),
        },
        (Some(_), true) => Err(usage("give --ntot or --calibrate, not both")),
        (None, false) => Err(usage("give --ntot or --calibrate")),
    }
}

fn load_cap(
    esg: Option<&PathBuf>,
    max_distance: Option<f64>,
    order: f64,
    tickers: &[String],
) -> Result<Option<EsgConstraint>, Fail> {
    match (esg, max_distance) {
        (Some(path), Some(d)) => {
            let table = inputs::load_scores(path, tickers)?;
            Ok(Some(EsgConstraint {
                max_distance: d,
                order,
                table,
            }))
        }
        (None, None) => Ok(None),
        _ => Err(usage("--esg and --esg-max-distance go together")),
    }
}

fn run_discrete(args: &DiscreteArgs, argv: &[String]) -> Result<u8, Fail> {
    let mut stages = Stages::start();
    check_phi(args.phi)?;
    let plan = lot_plan(args)?;
    if !args.rescale_phi.is_on() && args.calibrate {
        return Err(usage("--rescale-phi off needs a fixed --ntot"));
    }
    if args.compare_rounding && args.budget.is_none() {
        return Err(usage("--compare-rounding requires --budget"));
    }
    let sampler = args.sampler.choice();
    let config = SamplerConfig {
        seed: args.seed,
        restarts: args.restarts,
        sweeps: args.sweeps,
        t_hi: None,
        t_lo: None,
    };
    config.validate()?;

    let (tickers, stats) =
        inputs::load_stats(&args.prices, args.tickers.as_deref(), args.periods_per_year)?;
    let cap = load_cap(
        args.esg.as_ref(),
        args.esg_max_distance,
        args.esg_order,
        &tickers,
    )?;
    stages.mark("load");

    let (n_tot, effective_phi, result, calibration) = match plan {
        LotPlan::Fixed(n) => {
            let effective = if args.rescale_phi.is_on() {
                args.phi
            } else {
                args.phi * n as f64
            };
            let problem =
                DiscreteProblem::new(stats.clone(), effective, n, args.budget, cap.clone())?;
            let result = solve(sampler, &problem, &config)?;
            (n, effective, result, None)
        }
        LotPlan::Calibrate { budget, slack_tol } => {
            let cal = calibrate_ntot(
                &stats,
                args.phi,
                budget,
                cap.clone(),
                sampler,
                slack_tol,
                &config,
            )?;
            let doc = CalibrationDoc {
                n_tot: cal.n_tot,
                trace: cal.trace,
            };
            (cal.n_tot, args.phi, cal.result, Some(doc))
        }
    };
    stages.mark("solve");

    let weights = naive_weights(&result.best, n_tot)?;
    let point = portfolio_point(&weights, &stats)?;

    let (baseline, gaps) = if args.compare_rounding {
        let budget = args.budget.expect("checked above");
        let continuous = solve_continuous(&stats, args.phi, 1e-8)?;
        let rounded = round_to_lots(&continuous.weights, &stats, budget)?;
        let base_n = rounded.total_lots();
        if base_n == 0 {
            return Err(Fail::from(Error::Infeasible(
                "rounded baseline holds no lots".into(),
            )));
        }
        let base_phi = if args.rescale_phi.is_on() {
            args.phi
        } else {
            args.phi * base_n as f64
        };
        let base_weights = naive_weights(&rounded.lots, base_n)?;
        let base_point = portfolio_point(&base_weights, &stats)?;
        let baseline = BaselineDoc {
            utility: utility_discrete_unchecked(&rounded.lots, &stats, base_phi, base_n),
            lots: rounded.lots,
            n_tot: base_n,
            spent: rounded.spent,
            violation: rounded.violation,
            point: base_point,
        };
        let cloud = sample_cloud(&stats, args.samples, CloudMode::Continuous, args.seed)?;
        let gaps = GapsDoc {
            solution: frontier_gap(&point, &cloud.envelope)?,
            baseline: frontier_gap(&base_point, &cloud.envelope)?,
        };
        (Some(baseline), Some(gaps))
    } else {
        (None, None)
    };

    let penalty_weights = if sampler == SamplerChoice::SaQubo {
        let problem =
            DiscreteProblem::new(stats.clone(), effective_phi, n_tot, args.budget, cap.clone())?;
        Some(encode(&problem, None)?.penalty_weights)
    } else {
        None
    };

    let feasible = result.feasible;
    let doc = ResultDoc::Discrete(DiscreteDoc {
        tickers,
        phi: args.phi,
        rescale_phi: args.rescale_phi.is_on(),
        effective_phi_c: effective_phi,
        n_tot,
        budget: args.budget,
        esg: cap.as_ref().map(|c| EsgCapDoc {
            max_distance: c.max_distance,
            order: c.order,
        }),
        sampler: sampler.as_str().to_string(),
        result,
        weights,
        point,
        calibration,
        baseline,
        gaps,
    });
    write_bytes(&args.out, &to_json_bytes(&doc))?;
    stages.mark("write");
    let manifest_path = emit_manifest(
        "optimize discrete",
        argv,
        config_echo(args),
        penalty_weights,
        vec![args.out.clone()],
        args.manifest.as_ref(),
        stages,
    )?;
    println!("wrote {} and {}", args.out.display(), manifest_path.display());
    if feasible {
        Ok(0)
    } else {
        eprintln!("result violates its constraints; see {}", args.out.display());
        Ok(4)
    }
}

/// Volatility-return coordinates stored in a result document.
fn marked_point(doc: &ResultDoc) -> PortfolioPoint {
    match doc {
        ResultDoc::Continuous(c) => c.point,
        ResultDoc::Discrete(d) => d.point,
    }
}

fn read_result(path: &Path) -> Result<ResultDoc, Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: not a result file: {e}", path.display())))
}

fn run_frontier(args: &FrontierArgs, argv: &[String]) -> Result<u8, Fail> {
    let mut stages = Stages::start();
    if args.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    if args.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let mode = match args.mode {
        Mode::Continuous => CloudMode::Continuous,
        Mode::Discrete => match args.ntot {
            Some(n) if n > 0 => CloudMode::Discrete { n_tot: n },
            _ => return Err(usage("--mode discrete requires --ntot ≥ 1")),
        },
    };
    let (_, stats) =
        inputs::load_stats(&args.prices, args.tickers.as_deref(), args.periods_per_year)?;
    stages.mark("load");

    let cloud = sample_cloud(&stats, args.samples, mode, args.seed)?;
    let knots = if args.bins == DEFAULT_BINS {
        cloud.envelope.clone()
    } else {
        envelope(&cloud.points, args.bins)
    };
    stages.mark("sample");

    let cloud_csv = write_cloud_csv(Vec::new(), &cloud)?;
    write_bytes(&args.out_cloud, &cloud_csv)?;
    let envelope_csv = write_envelope_csv(Vec::new(), &knots)?;
    write_bytes(&args.out_envelope, &envelope_csv)?;
    let mut outputs = vec![args.out_cloud.clone(), args.out_envelope.clone()];

    if !args.mark.is_empty() {
        let mut table = String::from("file,volatility,return,gap\n");
        for path in &args.mark {
            let doc = read_result(path)?;
            let point = marked_point(&doc);
            let gap = frontier_gap(&point, &knots)?;
            let _ = writeln!(
                table,
                "{},{},{},{gap}",
                path.display(),
                point.volatility,
                point.expected_return
            );
        }
        write_bytes(&args.out_gaps, table.as_bytes())?;
        outputs.push(args.out_gaps.clone());
    }
    stages.mark("write");

    let manifest_path = emit_manifest(
        "frontier",
        argv,
        config_echo(args),
        None,
        outputs.clone(),
        args.manifest.as_ref(),
        stages,
    )?;
    println!(
        "wrote {} ({} rows), {} ({} knots), and {}",
        args.out_cloud.display(),
        cloud.points.len(),
        args.out_envelope.display(),
        knots.len(),
        manifest_path.display()
    );
    Ok(0)
}

struct SweepCase {
    label: String,
    n_tot: u64,
    effective_phi: f64,
    cap: Option<EsgConstraint>,
}

fn sweep_cases(args: &SweepArgs, table: Option<&EsgTable>) -> Result<Vec<SweepCase>, Fail> {
    let raw: Vec<&str> = args
        .values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if raw.is_empty() {
        return Err(usage("value list is empty"));
    }
    let fixed_cap = |d: Option<f64>| -> Option<EsgConstraint> {
        match (table, d) {
            (Some(t), Some(d)) => Some(EsgConstraint {
                max_distance: d,
                order: args.esg_order,
                table: t.clone(),
            }),
            _ => None,
        }
    };
    let mut cases = Vec::with_capacity(raw.len());
    match args.axis {
        crate::Axis::Ntot => {
            let phi = args.phi.ok_or_else(|| usage("--axis ntot requires --phi"))?;
            check_phi(phi)?;
            for v in raw {
                let n: u64 = v
                    .parse()
                    .map_err(|_| usage(format!("bad lot count {v:?}")))?;
                if n == 0 {
                    return Err(usage("ntot must be positive"));
                }
                let effective = if args.rescale_phi.is_on() {
                    phi
                } else {
                    phi * n as f64
                };
                cases.push(SweepCase {
                    label: v.to_string(),
                    n_tot: n,
                    effective_phi: effective,
                    cap: fixed_cap(args.esg_max_distance),
                });
            }
        }
        crate::Axis::EsgDistance => {
            let phi = args
                .phi
                .ok_or_else(|| usage("--axis esg-distance requires --phi"))?;
            check_phi(phi)?;
            let n = args
                .ntot
                .filter(|&n| n > 0)
                .ok_or_else(|| usage("--axis esg-distance requires --ntot ≥ 1"))?;
            if table.is_none() {
                return Err(usage("--axis esg-distance requires --esg"));
            }
            if args.esg_max_distance.is_some() {
                return Err(usage("the esg-distance axis supplies the cap; drop --esg-max-distance"));
            }
            let effective = if args.rescale_phi.is_on() {
                phi
            } else {
                phi * n as f64
            };
            for v in raw {
                let d: f64 = v
                    .parse()
                    .map_err(|_| usage(format!("bad distance cap {v:?}")))?;
                cases.push(SweepCase {
                    label: v.to_string(),
                    n_tot: n,
                    effective_phi: effective,
                    cap: fixed_cap(Some(d)),
                });
            }
        }
        crate::Axis::Phi => {
            let n = args
                .ntot
                .filter(|&n| n > 0)
                .ok_or_else(|| usage("--axis phi requires --ntot ≥ 1"))?;
            for v in raw {
                let phi: f64 = v
                    .parse()
                    .map_err(|_| usage(format!("bad risk aversion {v:?}")))?;
                check_phi(phi)?;
                let effective = if args.rescale_phi.is_on() {
                    phi
                } else {
                    phi * n as f64
                };
                cases.push(SweepCase {
                    label: v.to_string(),
                    n_tot: n,
                    effective_phi: effective,
                    cap: fixed_cap(args.esg_max_distance),
                });
            }
        }
    }
    Ok(cases)
}

fn run_sweep(args: &SweepArgs, argv: &[String]) -> Result<u8, Fail> {
    let mut stages = Stages::start();
    let (tickers, stats) =
        inputs::load_stats(&args.prices, args.tickers.as_deref(), args.periods_per_year)?;
    let table = match &args.esg {
        Some(path) => Some(inputs::load_scores(path, &tickers)?),
        None => None,
    };
    let cases = sweep_cases(args, table.as_ref())?;
    let sampler = args.sampler.choice();
    let config = SamplerConfig {
        seed: args.seed,
        restarts: args.restarts,
        sweeps: args.sweeps,
        t_hi: None,
        t_lo: None,
    };
    config.validate()?;
    stages.mark("load");

    let cloud = sample_cloud(&stats, args.samples, CloudMode::Continuous, args.seed)?;
    stages.mark("sample");

    let mut csv = String::from(
        "value,n_tot,spent,d_esg,utility,volatility,expected_return,frontier_gap,lots\n",
    );
    for case in &cases {
        let problem = DiscreteProblem::new(
            stats.clone(),
            case.effective_phi,
            case.n_tot,
            args.budget,
            case.cap.clone(),
        )?;
        let result = solve(sampler, &problem, &config)?;
        let weights = naive_weights(&result.best, case.n_tot)?;
        let point = portfolio_point(&weights, &stats)?;
        let gap = frontier_gap(&point, &cloud.envelope)?;
        let d_esg = match &table {
            Some(t) if result.report.lot_sum_residual == 0 => Some(d_esg_stocks(
                &result.best,
                case.n_tot,
                t,
                args.esg_order,
            )?),
            _ => None,
        };
        let d_esg = d_esg.map(|d| d.to_string()).unwrap_or_default();
        let lots = result
            .best
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            case.label,
            case.n_tot,
            result.report.spent,
            d_esg,
            result.utility,
            point.volatility,
            point.expected_return,
            gap,
            lots
        );
    }
    stages.mark("solve");

    write_bytes(&args.out, csv.as_bytes())?;
    stages.mark("write");
    let manifest_path = emit_manifest(
        "sweep",
        argv,
        config_echo(args),
        None,
        vec![args.out.clone()],
        args.manifest.as_ref(),
        stages,
    )?;
    println!(
        "wrote {} ({} rows) and {}",
        args.out.display(),
        cases.len(),
        manifest_path.display()
    );
    Ok(0)
}

fn run_synth(args: &SynthArgs, argv: &[String]) -> Result<u8, Fail> {
    let mut stages = Stages::start();
    let (history, table) = synthesize_market(args.seed, args.assets, args.rows)?;
    stages.mark("generate");

    let mut prices = String::from("date,ticker,close\n");
    for (row, date) in history.dates.iter().enumerate() {
        for (col, ticker) in history.tickers.iter().enumerate() {
            let _ = writeln!(prices, "{date},{ticker},{}", history.closes[row][col]);
        }
    }
    write_bytes(&args.out_prices, prices.as_bytes())?;

    let mut scores = String::from("ticker,score,best,worst\n");
    for (i, ticker) in table.tickers.iter().enumerate() {
        let _ = writeln!(
            scores,
            "{ticker},{},{},{}",
            table.scores[i], table.best[i], table.worst[i]
        );
    }
    write_bytes(&args.out_esg, scores.as_bytes())?;
    stages.mark("write");

    let manifest_path = emit_manifest(
        "synth",
        argv,
        config_echo(args),
        None,
        vec![args.out_prices.clone(), args.out_esg.clone()],
        args.manifest.as_ref(),
        stages,
    )?;
    println!(
        "wrote {} ({} rows x {} assets), {}, and {}",
        args.out_prices.display(),
        history.dates.len(),
        history.tickers.len(),
        args.out_esg.display(),
        manifest_path.display()
    );
    Ok(0)
}

struct Audit {
    tol: f64,
    checked: usize,
    discrepancies: Vec<String>,
}

impl Audit {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            checked: 0,
            discrepancies: Vec::new(),
        }
    }

    fn number(&mut self, name: &str, stored: f64, recomputed: f64) {
        self.checked += 1;
        let agree = (stored - recomputed).abs() <= self.tol
            || (stored.is_nan() && recomputed.is_nan());
        if !agree {
            self.discrepancies.push(format!(
                "{name}: stored {stored} but recomputed {recomputed}"
            ));
        }
    }

    fn exact<T: PartialEq + std::fmt::Debug>(&mut self, name: &str, stored: &T, recomputed: &T) {
        self.checked += 1;
        if stored != recomputed {
            self.discrepancies.push(format!(
                "{name}: stored {stored:?} but recomputed {recomputed:?}"
            ));
        }
    }
}

fn verify_continuous(doc: &ContinuousDoc, stats: &MarketStats, audit: &mut Audit) -> Result<(), Fail> {
    let weight_sum: f64 = doc.weights.iter().sum();
    audit.number("weight sum", weight_sum, 1.0);
    let utility = utility_continuous(&doc.weights, stats, doc.phi)?;
    audit.number("utility", doc.utility, utility);
    let point = portfolio_point(&doc.weights, stats)?;
    audit.number("volatility", doc.point.volatility, point.volatility);
    audit.number(
        "expected return",
        doc.point.expected_return,
        point.expected_return,
    );
    if let Some(rounded) = &doc.rounded {
        let spent: f64 = rounded
            .lots
            .iter()
            .zip(&stats.prices)
            .map(|(&l, &p)| l as f64 * p)
            .sum();
        audit.number("rounded spent", rounded.spent, spent);
        audit.number(
            "rounded violation",
            rounded.violation,
            (spent - rounded.budget).max(0.0),
        );
        audit.exact(
            "rounded lot total",
            &rounded.n_tot,
            &rounded.lots.iter().sum::<u64>(),
        );
    }
    Ok(())
}

fn verify_discrete(
    doc: &DiscreteDoc,
    stats: &MarketStats,
    table: Option<EsgTable>,
    audit: &mut Audit,
) -> Result<(), Fail> {
    let effective = if doc.rescale_phi {
        doc.phi
    } else {
        doc.phi * doc.n_tot as f64
    };
    audit.number("effective risk aversion", doc.effective_phi_c, effective);
    let cap = match (&doc.esg, table) {
        (Some(cap), Some(table)) => Some(EsgConstraint {
            max_distance: cap.max_distance,
            order: cap.order,
            table,
        }),
        (Some(_), None) => {
            return Err(usage("result used a score cap; pass --esg"));
        }
        (None, _) => None,
    };
    let problem = DiscreteProblem::new(stats.clone(), effective, doc.n_tot, doc.budget, cap)?;

    let utility =
        utility_discrete_unchecked(&doc.result.best, stats, effective, doc.n_tot);
    audit.number("utility", doc.result.utility, utility);
    let report = check_feasible(&doc.result.best, &problem)?;
    audit.exact(
        "lot-sum residual",
        &doc.result.report.lot_sum_residual,
        &report.lot_sum_residual,
    );
    audit.number("spent", doc.result.report.spent, report.spent);
    match (doc.result.report.budget_slack, report.budget_slack) {
        (Some(stored), Some(recomputed)) => audit.number("budget slack", stored, recomputed),
        (stored, recomputed) => audit.exact("budget slack presence", &stored, &recomputed),
    }
    match (doc.result.report.esg_distance, report.esg_distance) {
        (Some(stored), Some(recomputed)) => audit.number("score distance", stored, recomputed),
        (stored, recomputed) => audit.exact("score distance presence", &stored, &recomputed),
    }
    audit.exact(
        "feasible flag",
        &doc.result.feasible,
        &report.feasible(&problem),
    );

    let weights = naive_weights(&doc.result.best, doc.n_tot)?;
    for (i, (stored, recomputed)) in doc.weights.iter().zip(&weights).enumerate() {
        audit.number(&format!("weight {i}"), *stored, *recomputed);
    }
    let point = portfolio_point(&weights, stats)?;
    audit.number("volatility", doc.point.volatility, point.volatility);
    audit.number(
        "expected return",
        doc.point.expected_return,
        point.expected_return,
    );

    if let Some(baseline) = &doc.baseline {
        let base_phi = if doc.rescale_phi {
            doc.phi
        } else {
            doc.phi * baseline.n_tot as f64
        };
        audit.number(
            "baseline utility",
            baseline.utility,
            utility_discrete_unchecked(&baseline.lots, stats, base_phi, baseline.n_tot),
        );
        let spent: f64 = baseline
            .lots
            .iter()
            .zip(&stats.prices)
            .map(|(&l, &p)| l as f64 * p)
            .sum();
        audit.number("baseline spent", baseline.spent, spent);
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<u8, Fail> {
    let doc = read_result(&args.result)?;
    let (tickers, stats) =
        inputs::load_stats(&args.prices, args.tickers.as_deref(), args.periods_per_year)?;
    let mut audit = Audit::new(args.tol);
    match &doc {
        ResultDoc::Continuous(c) => {
            audit.exact("tickers", &c.tickers, &tickers);
            verify_continuous(c, &stats, &mut audit)?;
        }
        ResultDoc::Discrete(d) => {
            audit.exact("tickers", &d.tickers, &tickers);
            let table = match &args.esg {
                Some(path) => Some(inputs::load_scores(path, &tickers)?),
                None => None,
            };
            verify_discrete(d, &stats, table, &mut audit)?;
        }
    }
    for line in &audit.discrepancies {
        println!("mismatch {line}");
    }
    println!(
        "checked {} values, {} discrepancies",
        audit.checked,
        audit.discrepancies.len()
    );
    if audit.discrepancies.is_empty() {
        Ok(0)
    } else {
        Ok(1)
    }
}
