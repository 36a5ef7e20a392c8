//! `viab`: stochastic viability solver.

mod cache;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use viab_core::io;
use viab_core::kernel::{kernel_slice, select_feedback, TieBreak};
use viab_core::mc::{derive_seed, estimate_probability, simulate, Trajectory};
use viab_core::model::{three_state_example_def, Model, ModelDef};
use viab_core::oracle_example::ExampleMatrix;

use crate::cache::SolveCache;

#[derive(Parser)]
#[command(
    name = "viab",
    version,
    about = "Stochastic viability kernels and viable feedbacks"
)]
struct Cli {
    /// Directory for cached solve results (default: $VIAB_CACHE_DIR or the system temp dir).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Always solve from scratch.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the three-state example model file.
    Example {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        horizon: i64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        t0: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a model file and list every violation.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Solve by backward induction; writes value.csv and argmax.csv into --out.
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print V(t, x) for one stage.
    Value {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        time: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// Also write the full value CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Members of the viability kernel {x : V(t, x) >= beta}.
    Kernel {
        /// Value CSV written by `solve`.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        values: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        time: i64,
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export one feedback selected from the argmax sets.
    Policy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Rule::Smallest)]
        tie_break: Rule,
    },
    /// Simulate closed-loop trajectories under the selected feedback.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 9)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory CSV (long format).
        #[arg(long)]
        out: PathBuf,
        /// Also write a wide CSV (one column per path) for plotting.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Rule::Smallest)]
        tie_break: Rule,
    },
    /// Monte Carlo estimate of the success probability with a 95% Wilson interval.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Rule::Smallest)]
        tie_break: Rule,
    },
    /// Closed-form values (and kernel class) of the three-state example.
    Oracle {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        horizon: i64,
        #[arg(long, allow_negative_numbers = true)]
        time: Option<i64>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long, value_enum, default_value_t = MatrixKind::Reference)]
        matrix: MatrixKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Smallest,
    Largest,
}

impl From<Rule> for TieBreak {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Smallest => TieBreak::Smallest,
            Rule::Largest => TieBreak::Largest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    /// Middle row (p, 1-2p, 0).
    Reference,
    /// Transition matrix of x+u+w, middle row (1-2p, p, 0).
    Dynamics,
}

struct Loaded {
    model: Model,
    bytes: Vec<u8>,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text =
        std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let model = Model::from_json(text).with_context(|| format!("loading {}", path.display()))?;
    Ok(Loaded { model, bytes })
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_x0(model: &Model, spec: &str) -> Result<usize> {
    let coords = spec
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| anyhow!("--x0 `{spec}` is not a comma-separated list of numbers"))?;
    model
        .states()
        .find(&coords)
        .ok_or_else(|| anyhow!("--x0 `{spec}` is not a grid state"))
}

fn fmt_coords(c: &[f64]) -> String {
    c.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn run(cli: Cli) -> Result<()> {
    let cache = SolveCache::new(cli.cache_dir, !cli.no_cache);
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Example {
            p,
            horizon,
            t0,
            out,
        } => {
            let def = three_state_example_def(p, t0, horizon)?;
            fs::write(&out, def.to_json())
                .with_context(|| format!("cannot write {}", out.display()))?;
        }
        Command::Validate { model } => {
            let text = fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let def = ModelDef::from_json(&text)?;
            let violations = def.validate();
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("{v}");
                }
                bail!("{} violation(s) in {}", violations.len(), model.display());
            }
            writeln!(stdout, "valid")?;
        }
        Command::Solve { model, out } => {
            let loaded = load_model(&model)?;
            let m = &loaded.model;
            let (vf, argmax) = cache.solve(m, &loaded.bytes)?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            io::write_value_csv(create(&out.join("value.csv"))?, m, &vf)?;
            io::write_argmax_csv(create(&out.join("argmax.csv"))?, m, &argmax)?;
            for x in 0..m.n_states() {
                writeln!(
                    stdout,
                    "V({}, {}) = {}",
                    m.t0(),
                    fmt_coords(m.coords(x).expect("grid state")),
                    io::fmt_value(vf.value(m.t0(), x))
                )?;
            }
        }
        Command::Value {
            model,
            time,
            x0,
            out,
        } => {
            let loaded = load_model(&model)?;
            let m = &loaded.model;
            let (vf, _) = cache.solve(m, &loaded.bytes)?;
            let t = time.unwrap_or(m.t0());
            let slice = vf.slice(t)?;
            let states: Vec<usize> = match x0 {
                Some(spec) => vec![parse_x0(m, &spec)?],
                None => (0..m.n_states()).collect(),
            };
            for x in states {
                writeln!(
                    stdout,
                    "{t} {x} {} {}",
                    fmt_coords(m.coords(x).expect("grid state")),
                    io::fmt_value(slice.values[x])
                )?;
            }
            if let Some(out) = out {
                io::write_value_csv(create(&out)?, m, &vf)?;
            }
        }
        Command::Kernel {
            values,
            model,
            time,
            beta,
            out,
        } => {
            if !(beta > 0.0 && beta <= 1.0) {
                bail!("--beta {beta} is outside (0, 1]");
            }
            let table = match (values, model) {
                (Some(path), _) => {
                    let file = fs::File::open(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    io::read_value_csv(file)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(path)) => {
                    let loaded = load_model(&path)?;
                    let (valuefn, _) = cache.solve(&loaded.model, &loaded.bytes)?;
                    io::ValueTable {
                        valuefn,
                        points: loaded.model.states().points.clone(),
                    }
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let kernel = kernel_slice(&table.valuefn, time, beta)?;
            for &x in &kernel.members {
                writeln!(stdout, "{}", fmt_coords(&table.points[x]))?;
            }
            if let Some(out) = out {
                io::write_kernel_csv(create(&out)?, &table.points, &kernel)?;
            }
        }
        Command::Policy {
            model,
            out,
            tie_break,
        } => {
            let loaded = load_model(&model)?;
            let (_, argmax) = cache.solve(&loaded.model, &loaded.bytes)?;
            let policy = select_feedback(&argmax, &tie_break.into());
            io::write_policy_csv(create(&out)?, &loaded.model, &policy)?;
        }
        Command::Simulate {
            model,
            x0,
            samples,
            seed,
            out,
            plot,
            tie_break,
        } => {
            let loaded = load_model(&model)?;
            let m = &loaded.model;
            let x0 = parse_x0(m, &x0)?;
            let (_, argmax) = cache.solve(m, &loaded.bytes)?;
            let policy = select_feedback(&argmax, &tie_break.into());
            let paths = (0..samples)
                .map(|i| simulate(m, &policy, x0, derive_seed(seed, i)))
                .collect::<viab_core::Result<Vec<Trajectory>>>()?;
            io::write_trajectories_csv(create(&out)?, m, &paths)?;
            if let Some(plot) = plot {
                io::write_plot_csv(create(&plot)?, m, &paths)?;
            }
            let ok = paths.iter().filter(|p| p.success).count();
            writeln!(
                stdout,
                "{ok} of {samples} trajectories viable, {} violate (success fraction {})",
                samples as usize - ok,
                ok as f64 / samples.max(1) as f64
            )?;
        }
        Command::Estimate {
            model,
            x0,
            samples,
            seed,
            out,
            tie_break,
        } => {
            let loaded = load_model(&model)?;
            let m = &loaded.model;
            let x0 = parse_x0(m, &x0)?;
            let (_, argmax) = cache.solve(m, &loaded.bytes)?;
            let policy = select_feedback(&argmax, &tie_break.into());
            let est = estimate_probability(m, &policy, x0, samples, seed)?;
            let line = est.report_line();
            writeln!(stdout, "{line}")?;
            if let Some(out) = out {
                fs::write(&out, format!("{line}\n"))
                    .with_context(|| format!("cannot write {}", out.display()))?;
            }
        }
        Command::Oracle {
            p,
            horizon,
            time,
            beta,
            matrix,
        } => {
            let mat = match matrix {
                MatrixKind::Reference => ExampleMatrix::new(p)?,
                MatrixKind::Dynamics => ExampleMatrix::from_dynamics(p)?,
            };
            let t = time.unwrap_or(0);
            if t > horizon {
                bail!("--time {t} is past --horizon {horizon}");
            }
            let steps = (horizon - t) as usize;
            for x in -1..=1 {
                writeln!(stdout, "{x} {}", io::fmt_value(mat.value(steps, x)))?;
            }
            if let Some(beta) = beta {
                let class = mat.kernel(steps, beta)?;
                let members: Vec<String> =
                    class.members().iter().map(ToString::to_string).collect();
                writeln!(stdout, "kernel {:?} {{{}}}", class, members.join(","))?;
            }
        }
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
