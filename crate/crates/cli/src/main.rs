use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use jumprev::config::{Document, KernelDoc};
use jumprev::csvfmt::{num, writer};
use jumprev::entropy::{path_log_likelihood, relative_entropy, tilt_process};
use jumprev::marginals::{default_binning, empirical_marginals, master_equation_marginals, uniform_grid, MarginalFlow};
use jumprev::model::{DriftField, JumpKernel, ProcessSpec, StateSpace};
use jumprev::reversal::{
    continuity_reports, levy_reverse, write_continuity_csv, BackwardCharacteristics, ReversalOptions,
};
use jumprev::simulate::{simulate_forward, PathEnsemble, SimulationOptions};
use jumprev::verify::{compare_reversal, estimate_backward_intensity, CompareOptions};
use jumprev::Error;

const DEMOS: &[(&str, &str, &[Step])] = &[
    ("poisson", include_str!("../demos/poisson.toml"), &[Step::Simulate, Step::Reverse, Step::Verify]),
    ("cycle3", include_str!("../demos/cycle3.toml"), &[Step::Simulate, Step::Reverse, Step::Verify]),
    ("reversible", include_str!("../demos/reversible.toml"), &[Step::Simulate, Step::Reverse, Step::Verify]),
    ("levy", include_str!("../demos/levy.toml"), &[Step::Simulate]),
    ("tilt", include_str!("../demos/tilt.toml"), &[Step::Entropy]),
    ("poisson-perturbed", include_str!("../demos/poisson-perturbed.toml"), &[Step::Reverse, Step::Verify]),
    ("zero-support", include_str!("../demos/zero-support.toml"), &[Step::Reverse]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Simulate,
    Marginals,
    Reverse,
    Verify,
    Entropy,
}

/// Simulation, time reversal and verification of Markov jump processes.
#[derive(Parser)]
#[command(name = "jumprev", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use a bundled demo configuration instead of --config.
    #[arg(long, global = true)]
    demo: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "JUMPREV_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate forward paths: ensemble.jsonl and summary.csv.
    Simulate,
    /// Marginal flow on the time grid: marginals.csv.
    Marginals,
    /// Backward kernel and drift: backward_kernel.csv, backward_drift.csv, absolute_continuity.csv.
    Reverse,
    /// Compare reversed paths with the backward kernel: intensity.csv, reversal_report.csv.
    Verify,
    /// Relative entropy of the tilted process: entropy.csv.
    Entropy,
    /// Run a bundled demo end to end.
    Demo { name: String },
    /// List the bundled demos.
    Demos,
}

enum Failure {
    Config(String),
    Math(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::Expression(_)
            | Error::Config(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => Failure::Config(e.to_string()),
            _ => Failure::Math(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

struct Context {
    doc: Document,
    spec: ProcessSpec,
    out: PathBuf,
}

impl Context {
    fn seed(&self) -> Outcome<u64> {
        self.doc.run.seed.ok_or_else(|| Failure::Config("a seed is required (--seed or run.seed)".into()))
    }

    fn create(&self, name: &str) -> Outcome<BufWriter<File>> {
        let path = self.out.join(name);
        println!("wrote {}", path.display());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn grid(&self) -> Outcome<Vec<f64>> {
        if self.doc.run.time_points < 2 {
            return Err(Failure::Config("time_points must be at least 2".into()));
        }
        Ok(uniform_grid(self.spec.horizon, self.doc.run.time_points))
    }

    fn sim_options(&self) -> SimulationOptions {
        let run = &self.doc.run;
        SimulationOptions { epsilon: run.epsilon, max_jumps: run.max_jumps, ode_steps: run.ode_steps, ..Default::default() }
    }

    fn simulate(&self, spec: &ProcessSpec) -> Outcome<PathEnsemble> {
        Ok(simulate_forward(spec, self.doc.run.n_paths, self.seed()?, &self.sim_options())?)
    }

    /// Master-equation marginals on finite spaces, histograms otherwise.
    fn marginals_of(&self, spec: &ProcessSpec, ensemble: Option<&PathEnsemble>) -> Outcome<MarginalFlow> {
        let times = self.grid()?;
        if matches!(spec.space, StateSpace::Finite { .. }) {
            return Ok(master_equation_marginals(spec, &times)?);
        }
        let owned;
        let ens = match ensemble {
            Some(e) => e,
            None => {
                owned = self.simulate(spec)?;
                &owned
            }
        };
        let bins = match &self.doc.run.bins {
            Some(b) => b.embedding()?,
            None => default_binning(ens, &times, &spec.space)?,
        };
        Ok(empirical_marginals(ens, &times, &bins, self.doc.run.smooth)?)
    }
}

fn load(cli: &Cli, demo: Option<&str>) -> Outcome<Context> {
    let text = match (demo.or(cli.demo.as_deref()), &cli.config) {
        (Some(name), _) => DEMOS
            .iter()
            .find(|d| d.0 == name)
            .map(|d| d.1.to_string())
            .ok_or_else(|| Failure::Config(format!("unknown demo {name}")))?,
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, None) => return Err(Failure::Config("pass --config PATH or --demo NAME".into())),
    };
    let mut doc = Document::parse(&text)?;
    if let Some(seed) = cli.seed {
        doc.run.seed = Some(seed);
    }
    if let Some(n) = cli.paths {
        doc.run.n_paths = n;
    }
    if doc.run.n_paths == 0 {
        return Err(Failure::Config("n_paths must be positive".into()));
    }
    let spec = doc.spec()?;
    spec.validate()?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    Ok(Context { doc, spec, out: cli.out.clone() })
}

fn write_summary(ctx: &Context, ens: &PathEnsemble) -> Outcome {
    let dim = ctx.spec.dimension();
    let mut header = vec!["n_paths".to_string(), "total_jumps".into(), "mean_jumps".into(), "max_jumps".into()];
    header.extend((0..dim).map(|d| format!("mean_terminal_{d}")));
    let mut w = writer(ctx.create("summary.csv")?, &header)?;
    let total: usize = ens.paths.iter().map(|p| p.n_jumps()).sum();
    let max = ens.paths.iter().map(|p| p.n_jumps()).max().unwrap_or(0);
    let n = ens.len() as f64;
    let mut row = vec![ens.len().to_string(), total.to_string(), num(total as f64 / n), max.to_string()];
    row.extend((0..dim).map(|d| num(ens.paths.iter().map(|p| p.terminal_state[d]).sum::<f64>() / n)));
    w.write_record(&row).map_err(Error::from)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LevySidecar {
    drift: Vec<f64>,
    kernel: KernelDoc,
}

fn write_levy_sidecar(ctx: &Context) -> Outcome {
    let JumpKernel::Levy(measure) = &ctx.spec.kernel else { return Ok(()) };
    let b = match &ctx.spec.drift {
        DriftField::Zero(d) => vec![0.0; *d],
        DriftField::Constant(v) => v.clone(),
        _ => return Ok(()),
    };
    let (drift, reversed) = levy_reverse(&b, measure);
    let sidecar = LevySidecar { drift, kernel: KernelDoc::from_kernel(&JumpKernel::Levy(reversed))? };
    let text = toml::to_string(&sidecar).map_err(|e| Failure::Config(e.to_string()))?;
    ctx.create("levy_reversal.toml")?.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_simulate(ctx: &Context) -> Outcome<PathEnsemble> {
    let ens = ctx.simulate(&ctx.spec)?;
    ens.write_jsonl(ctx.create("ensemble.jsonl")?)?;
    write_summary(ctx, &ens)?;
    write_levy_sidecar(ctx)?;
    println!("simulated {} paths", ens.len());
    Ok(ens)
}

fn cmd_marginals(ctx: &Context, ens: Option<&PathEnsemble>) -> Outcome<MarginalFlow> {
    let flow = ctx.marginals_of(&ctx.spec, ens)?;
    flow.write_csv(ctx.create("marginals.csv")?)?;
    Ok(flow)
}

fn cmd_reverse(ctx: &Context, ens: Option<&PathEnsemble>) -> Outcome<(MarginalFlow, BackwardCharacteristics)> {
    let flow = cmd_marginals(ctx, ens)?;
    let opts =
        ReversalOptions { tolerance: ctx.doc.run.tolerance, include_initial_time: ctx.doc.run.include_initial_time };
    let bc = match BackwardCharacteristics::solve(&ctx.spec, &flow, &opts) {
        Ok(bc) => bc,
        Err(e @ Error::AbsoluteContinuityViolation { .. }) => {
            let reports = continuity_reports(&ctx.spec, &flow, &opts)?;
            let state = if flow.support.is_grid() { "bin" } else { "state" };
            write_continuity_csv(&reports, state, ctx.create("absolute_continuity.csv")?)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    bc.write_kernel_csv(ctx.create("backward_kernel.csv")?)?;
    bc.write_drift_csv(ctx.create("backward_drift.csv")?)?;
    bc.write_continuity_csv(ctx.create("absolute_continuity.csv")?)?;
    Ok((flow, bc))
}

fn cmd_verify(ctx: &Context, prior: Option<(&PathEnsemble, &BackwardCharacteristics)>) -> Outcome {
    let owned;
    let (ens, bc) = match prior {
        Some(p) => p,
        None => {
            let ens = ctx.simulate(&ctx.spec)?;
            let bc = {
                let flow = ctx.marginals_of(&ctx.spec, Some(&ens))?;
                let opts = ReversalOptions {
                    tolerance: ctx.doc.run.tolerance,
                    include_initial_time: ctx.doc.run.include_initial_time,
                };
                BackwardCharacteristics::solve(&ctx.spec, &flow, &opts)?
            };
            owned = (ens, bc);
            (&owned.0, &owned.1)
        }
    };
    let run = &ctx.doc.run;
    if run.time_bins == 0 {
        return Err(Failure::Config("time_bins must be positive".into()));
    }
    let edges = uniform_grid(ctx.spec.horizon, run.time_bins + 1);
    let estimate = estimate_backward_intensity(ens, &edges, &bc.support)?;
    estimate.write_csv(ctx.create("intensity.csv")?)?;
    let opts = CompareOptions {
        exclude_time_below: run.exclude_time_below,
        min_count: run.min_count,
        theory_scale: run.theory_scale,
    };
    let report = compare_reversal(&estimate, bc, &opts)?;
    report.write_csv(ctx.create("reversal_report.csv")?)?;
    println!(
        "usable cells: {}, within 3 sigma: {:.4}, within 4 sigma: {:.4}",
        report.n_usable, report.within_3, report.within_4
    );
    if let Some(w) = &report.worst {
        println!(
            "worst cell: t in [{:.3}, {:.3}], {} -> {}, empirical {:.6}, theoretical {:.6}, z = {:.3}",
            w.t_lo, w.t_hi, w.from, w.to, w.empirical, w.theoretical, w.z
        );
    }
    if report.pass {
        println!("VERDICT: PASS");
        Ok(())
    } else {
        println!("VERDICT: FAIL");
        Err(Failure::Verification)
    }
}

fn cmd_entropy(ctx: &Context) -> Outcome {
    let tilt = ctx.doc.run.tilt.clone().ok_or_else(|| Failure::Config("entropy needs run.tilt".into()))?;
    let tilted = tilt_process(&ctx.spec, &tilt)?;
    let flow = ctx.marginals_of(&tilted, None)?;
    let report = relative_entropy(&ctx.spec, &tilt, &flow, 0.0)?;
    report.write_csv(ctx.create("entropy.csv")?)?;
    println!("relative entropy {:.12} (quadrature error {:.3e})", report.total, report.error);
    if ctx.doc.run.seed.is_some() && !ctx.spec.kernel.has_density() {
        let ens = ctx.simulate(&tilted)?;
        let values = ens
            .paths
            .iter()
            .map(|p| path_log_likelihood(&ctx.spec, &tilt, p))
            .collect::<Result<Vec<f64>, Error>>()?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let se = (var / n).sqrt();
        let header = ["n_paths", "mean_log_likelihood", "standard_error"].map(String::from);
        let mut w = writer(ctx.create("entropy_mc.csv")?, &header)?;
        w.write_record([ens.len().to_string(), num(mean), num(se)]).map_err(Error::from)?;
        w.flush()?;
        println!("pathwise log-likelihood mean {mean:.6} ± {se:.6} over {} paths", ens.len());
    }
    Ok(())
}

fn run_steps(ctx: &Context, steps: &[Step]) -> Outcome {
    let mut ens = None;
    let mut bc = None;
    for step in steps {
        match step {
            Step::Simulate => ens = Some(cmd_simulate(ctx)?),
            Step::Marginals => {
                cmd_marginals(ctx, ens.as_ref())?;
            }
            Step::Reverse => bc = Some(cmd_reverse(ctx, ens.as_ref())?.1),
            Step::Verify => {
                if ens.is_none() {
                    ens = Some(ctx.simulate(&ctx.spec)?);
                }
                let prior = ens.as_ref().zip(bc.as_ref());
                cmd_verify(ctx, prior)?;
            }
            Step::Entropy => cmd_entropy(ctx)?,
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let step = match &cli.command {
        Command::Demos => {
            for (name, ..) in DEMOS {
                println!("{name}");
            }
            return Ok(());
        }
        Command::Demo { name } => {
            let steps = DEMOS
                .iter()
                .find(|d| d.0 == name)
                .map(|d| d.2)
                .ok_or_else(|| Failure::Config(format!("unknown demo {name}")))?;
            let ctx = load(cli, Some(name))?;
            return run_steps(&ctx, steps);
        }
        Command::Simulate => Step::Simulate,
        Command::Marginals => Step::Marginals,
        Command::Reverse => Step::Reverse,
        Command::Verify => Step::Verify,
        Command::Entropy => Step::Entropy,
    };
    let ctx = load(cli, None)?;
    if matches!(step, Step::Simulate | Step::Verify) {
        ctx.seed()?;
    }
    match step {
        Step::Verify => cmd_verify(&ctx, None),
        other => run_steps(&ctx, &[other]),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Math(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Verification) => ExitCode::from(4),
    }
}
