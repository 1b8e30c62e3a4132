use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tontine_core::bootstrap::{bundled_fixture, evaluate_policy_bootstrap, load_file, BootstrapConfig, ReturnSeries};
use tontine_core::config::RunConfig;
use tontine_core::objective::{frontier_csv, optimize_wstar, pareto_filter, sweep_kappa, WstarSearch};
use tontine_core::pide::ControlPolicy;
use tontine_core::simulator::{export_heatmaps, simulate_constant, simulate_policy, Band, GroupGainMode, Market, SimOptions, SimStats};
use tontine_core::{Error, Kappa, Result, Scenario};

/// Decumulation controls with a tontine overlay: solve, simulate and bootstrap.
#[derive(Parser)]
#[command(name = "tontine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone)]
struct Flags {
    /// TOML run configuration; defaults reproduce the reference scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Nodes per dimension of the solver grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// One value, or a comma-separated list for `frontier`; `inf` drops the withdrawal reward.
    #[arg(long, global = true, value_delimiter = ',')]
    kappa: Option<Vec<Kappa>>,
    /// Expected bootstrap block length in years.
    #[arg(long, global = true)]
    blocksize: Option<f64>,
    #[arg(long, global = true)]
    no_tontine: bool,
    /// Random group gain with this standard deviation.
    #[arg(long = "random-g", global = true, value_name = "SD")]
    random_g: Option<f64>,
    #[arg(long = "fee-bps", global = true)]
    fee_bps: Option<f64>,
    /// Stored policy file for `simulate`, `bootstrap` and `heatmaps`.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize `W*` for one kappa and store the policy.
    Solve,
    /// Solve a list of kappas and emit the Pareto frontier.
    Frontier,
    /// Constant stock fraction and withdrawal, no tontine.
    Baseline,
    /// Solver results across a grid ladder next to Monte Carlo checks.
    Convergence,
    /// Monte Carlo statistics and percentile bands of a policy.
    Simulate,
    /// Evaluate a policy on bootstrap resamples of historical returns.
    Bootstrap,
    /// Control heat maps of a stored policy.
    Heatmaps,
}

struct Ctx {
    cfg: RunConfig,
    scenario: Scenario,
    out: PathBuf,
    header: String,
}

impl Ctx {
    fn new(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = flags.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = flags.paths {
            cfg.run.paths = v;
        }
        if let Some(v) = flags.grid {
            cfg.solver.grid = v;
        }
        if let Some(v) = &flags.kappa {
            cfg.run.kappas = v.clone();
            cfg.scenario.kappa = v[0];
        }
        if let Some(v) = flags.blocksize {
            cfg.run.blocksize = v;
            cfg.run.bootstrap = true;
        }
        if flags.no_tontine {
            cfg.scenario.tontine = false;
        }
        if let Some(v) = flags.random_g {
            cfg.run.random_g = v;
        }
        if let Some(v) = flags.fee_bps {
            cfg.scenario.fee_bps = v;
        }
        if let Some(v) = &flags.out {
            cfg.run.out = v.clone();
        }
        if let Some(v) = &flags.policy {
            cfg.run.policy = Some(v.clone());
        }
        cfg.validate()?;
        let scenario = cfg.scenario()?;
        let out = cfg.run.out.clone();
        fs::create_dir_all(&out)?;
        let header = format!("# config {} seed {} percentiles nearest-rank\n", cfg.fingerprint(), cfg.run.seed);
        Ok(Self { cfg, scenario, out, header })
    }

    fn sim_options(&self, bands: bool) -> SimOptions {
        let g = if self.cfg.run.random_g > 0.0 { GroupGainMode::Random(self.cfg.run.random_g) } else { GroupGainMode::Unit };
        SimOptions { paths: self.cfg.run.paths, seed: self.cfg.run.seed, group_gain: g, bands }
    }

    fn series(&self) -> Result<ReturnSeries> {
        match &self.cfg.run.data_file {
            Some(p) => load_file(p),
            None => Ok(bundled_fixture()),
        }
    }

    fn block(&self) -> BootstrapConfig {
        BootstrapConfig::years(self.cfg.run.blocksize)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, format!("{}{}", self.header, body))?;
        Ok(path)
    }

    fn solve(&self, kappa: Kappa) -> Result<WstarSearch> {
        let sc = Scenario { kappa, ..self.scenario.clone() };
        let s = optimize_wstar(&sc, &self.cfg.model, &self.cfg.solver_config(), kappa)?;
        if s.multimodal {
            eprintln!("warning: value is not unimodal in W* for kappa {kappa}; kept the best of the top three brackets");
        }
        Ok(s)
    }

    /// The stored policy if one was given, otherwise a fresh solve at the first kappa.
    fn policy(&self) -> Result<ControlPolicy> {
        match &self.cfg.run.policy {
            Some(p) => ControlPolicy::load(p),
            None => Ok(self.solve(self.scenario.kappa)?.output.policy),
        }
    }

    fn evaluate(&self, policy: &ControlPolicy, sc: &Scenario, bands: bool) -> Result<SimStats> {
        if self.cfg.run.bootstrap {
            evaluate_policy_bootstrap(policy, sc, &self.series()?, &self.block(), self.cfg.model.mu_c_b, &self.sim_options(bands))
        } else {
            simulate_policy(policy, sc, &self.cfg.model, &self.sim_options(bands))
        }
    }
}

fn kappa_tag(k: Kappa) -> String {
    format!("k{k}")
}

fn stats_csv(st: &SimStats) -> String {
    format!(
        "paths,EW_per_year,EW_se,ES,ES_se,median_WT,median_se,mean_WT,interior_withdrawals,in_debt_at_end\n{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6}\n",
        st.paths, st.ew_per_year, st.ew_se, st.es, st.es_se, st.median_wt, st.median_se, st.mean_wt, st.interior_withdrawals, st.in_debt_at_end
    )
}

fn bands_csv(b: &[Band]) -> String {
    let mut s = String::from("date,p5,p50,p95\n");
    for x in b {
        let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", x.date, x.p5, x.p50, x.p95);
    }
    s
}

fn write_stats(ctx: &Ctx, prefix: &str, st: &SimStats) -> Result<()> {
    ctx.write(&format!("{prefix}_stats.csv"), &stats_csv(st))?;
    if let Some(b) = &st.bands {
        ctx.write(&format!("{prefix}_wealth_pct.csv"), &bands_csv(&b.wealth))?;
        ctx.write(&format!("{prefix}_withdrawal_pct.csv"), &bands_csv(&b.withdrawal))?;
        ctx.write(&format!("{prefix}_stock_fraction_pct.csv"), &bands_csv(&b.stock_fraction))?;
    }
    print!("{}", stats_csv(st));
    Ok(())
}

fn cmd_solve(ctx: &Ctx) -> Result<()> {
    let k = ctx.scenario.kappa;
    let s = ctx.solve(k)?;
    let path = ctx.out.join(format!("policy_{}.txt", kappa_tag(k)));
    s.output.policy.save(&path)?;
    let st = s.output.stats.expect("final solve tracks expectations");
    let body = format!(
        "kappa,value,Wstar,EW_per_year,ES,expected_WT\n{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        k, s.value, s.wstar, st.ew_per_year, st.es, st.expected_wt
    );
    ctx.write(&format!("solve_{}.csv", kappa_tag(k)), &body)?;
    print!("{body}");
    eprintln!("policy written to {}", path.display());
    Ok(())
}

fn cmd_frontier(ctx: &Ctx) -> Result<()> {
    let entries = sweep_kappa(&ctx.scenario, &ctx.cfg.model, &ctx.cfg.solver_config(), &ctx.cfg.run.kappas, |pol, sc| ctx.evaluate(pol, sc, false))?;
    let mut points = Vec::new();
    for e in entries {
        match e.result {
            Ok((p, pol)) => {
                pol.save(&ctx.out.join(format!("policy_{}.txt", kappa_tag(e.kappa))))?;
                points.push(p);
            }
            Err(err) => eprintln!("kappa {}: failed: {err}", e.kappa),
        }
    }
    let csv = frontier_csv(&pareto_filter(&points));
    ctx.write("frontier.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_baseline(ctx: &Ctx) -> Result<()> {
    let series = if ctx.cfg.run.bootstrap { Some(ctx.series()?) } else { None };
    let block = ctx.block();
    let market = match &series {
        Some(s) => Market::Bootstrap { series: s, config: &block },
        None => Market::Synthetic(&ctx.cfg.model),
    };
    let q = ctx.cfg.run.q_const;
    let mut body = String::from("p,q,EW_per_year,ES,ES_se,median_WT,median_se\n");
    for &p in &ctx.cfg.run.p_list {
        let st = simulate_constant(&ctx.scenario, market, ctx.cfg.model.mu_c_b, p, q, &ctx.sim_options(false))?;
        let _ = writeln!(body, "{p},{q},{:.4},{:.4},{:.4},{:.4},{:.4}", st.ew_per_year, st.es, st.es_se, st.median_wt, st.median_se);
    }
    ctx.write("baseline.csv", &body)?;
    print!("{body}");
    Ok(())
}

fn cmd_convergence(ctx: &Ctx) -> Result<()> {
    let k = ctx.scenario.kappa;
    let mut body = String::from("grid,value,Wstar,DP_EW,DP_ES,MC_EW,MC_ES,MC_ES_se\n");
    for &n in &ctx.cfg.run.grids {
        let mut cfg = ctx.cfg.clone();
        cfg.solver.grid = n;
        let cfg_solver = cfg.solver_config();
        cfg_solver.validate()?;
        let t = Instant::now();
        let sc = Scenario { kappa: k, ..ctx.scenario.clone() };
        let s = optimize_wstar(&sc, &ctx.cfg.model, &cfg_solver, k)?;
        let dp = s.output.stats.expect("final solve tracks expectations");
        let mc = simulate_policy(s.policy(), &sc, &ctx.cfg.model, &ctx.sim_options(false))?;
        let row = format!("{n},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}", s.value, s.wstar, dp.ew_per_year, dp.es, mc.ew_per_year, mc.es, mc.es_se);
        eprintln!("grid {n}: {:.0}s", t.elapsed().as_secs_f64());
        println!("{row}");
        let _ = writeln!(body, "{row}");
    }
    ctx.write(&format!("convergence_{}.csv", kappa_tag(k)), &body)?;
    Ok(())
}

fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let pol = ctx.policy()?;
    let st = simulate_policy(&pol, &ctx.scenario, &ctx.cfg.model, &ctx.sim_options(true))?;
    write_stats(ctx, &format!("simulate_{}", kappa_tag(pol.kappa)), &st)
}

fn cmd_bootstrap(ctx: &Ctx) -> Result<()> {
    let pol = ctx.policy()?;
    let opts = ctx.sim_options(true);
    let st = evaluate_policy_bootstrap(&pol, &ctx.scenario, &ctx.series()?, &ctx.block(), ctx.cfg.model.mu_c_b, &opts)?;
    write_stats(ctx, &format!("bootstrap_{}_b{}", kappa_tag(pol.kappa), ctx.cfg.run.blocksize), &st)
}

fn cmd_heatmaps(ctx: &Ctx) -> Result<()> {
    let pol = ctx.policy()?;
    let cells = export_heatmaps(&pol, 0.0, 2000.0, 201, 0..pol.m());
    let mut p = String::from("date,wealth,stock_fraction\n");
    let mut q = String::from("date,wealth,withdrawal_normalized\n");
    for c in &cells {
        let _ = writeln!(p, "{},{:.4},{:.6}", c.date, c.wealth, c.stock_fraction);
        let _ = writeln!(q, "{},{:.4},{:.6}", c.date, c.wealth, c.withdrawal);
    }
    let tag = kappa_tag(pol.kappa);
    let a = ctx.write(&format!("heatmap_p_{tag}.csv"), &p)?;
    let b = ctx.write(&format!("heatmap_q_{tag}.csv"), &q)?;
    eprintln!("wrote {} and {}", a.display(), b.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.flags)?;
    match cli.command {
        Command::Solve => cmd_solve(&ctx),
        Command::Frontier => cmd_frontier(&ctx),
        Command::Baseline => cmd_baseline(&ctx),
        Command::Convergence => cmd_convergence(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Bootstrap => cmd_bootstrap(&ctx),
        Command::Heatmaps => cmd_heatmaps(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Config(_) = e {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
