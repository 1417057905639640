use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use heisen::fracint::{bump_family, frac_apply, theorem14_sweep, FracPlan};
use heisen::harness::{config_from, run_experiment};
use heisen::heatkernel::{
    heat_kernel_free, kato_trotter_residual, schrodinger_kernel_column, KernelSample, SplittingPlan, DEFAULT_TAU_MAX,
};
use heisen::hgroup::{geometric_ladder, GridFn, GridSpec, HPoint};
use heisen::oracle::{kde_density, simulate_paths, McPlan};
use heisen::poisson::{poisson_apply, poisson_bound_fit, SubordinationRule, DEFAULT_A_MIN};
use heisen::potential::{aux_rho, rh_verify, BallSampler, PotentialModel, RH_CAP};
use heisen::spaces::{bmo_norm, hardy_norm, hl_maximal, lp_norm, nontangential_max, BmoSampler, ConeParams};
use heisen::{Error, Result};

#[derive(Parser)]
#[command(name = "heisen", version, about = "Schrödinger semigroups on the Heisenberg group")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

/// Shared numerical options. JSON arguments accept either inline JSON or `@path`.
#[derive(Args, Clone)]
struct Numerics {
    /// Potential model as JSON, e.g. '{"kind":"Constant","c":1}'.
    #[arg(long, default_value = r#"{"kind":"Constant","c":0}"#)]
    potential: String,
    /// Longest splitting step.
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    tau_max: f64,
    /// Subordination nodes.
    #[arg(long, default_value_t = 24)]
    nodes: usize,
    /// Smallest subordination variable.
    #[arg(long, default_value_t = DEFAULT_A_MIN)]
    a_min: f64,
}

#[derive(Copy, Clone, ValueEnum)]
enum MaximalKind {
    Hl,
    Cone,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification experiment and write report.json and tables/*.csv.
    Verify {
        /// dirichlet(-free-bump), dirichlet-const-bump, dirichlet-bump-potential,
        /// dirichlet-koranyi-power, semigroup(-free), semigroup-const,
        /// semigroup-bump-potential, max-principle, max-principle-negative,
        /// vanishing(-free), vanishing-const
        experiment: String,
        /// JSON object merged over the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Sampled reverse Hölder constant.
    RhCheck {
        #[arg(long)]
        potential: String,
        #[arg(long)]
        q: f64,
        /// `half_x,half_t,per_axis`.
        #[arg(long, default_value = "1,1,3")]
        centers_box: String,
        /// `min,max,levels`.
        #[arg(long, default_value = "0.1,4,8")]
        radii: String,
        #[arg(long, default_value_t = RH_CAP)]
        cap: f64,
    },
    /// Critical radius ρ at a point.
    Rho {
        #[arg(long)]
        potential: String,
        /// `x_1,…,x_2n,t`.
        #[arg(long)]
        point: String,
    },
    /// Heat kernel values: free at a point, or a Schrödinger column as CSV.
    Kernel {
        #[arg(long, conflicts_with = "schrodinger")]
        free: bool,
        #[arg(long)]
        schrodinger: bool,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        num: Numerics,
    },
    /// Residual of the Duhamel identity between the free and Schrödinger kernels.
    KatoTrotter {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        g: String,
        #[arg(long)]
        h: String,
        #[arg(long)]
        grid: String,
        /// Quadrature nodes in the time variable.
        #[arg(long, default_value_t = 16)]
        time_nodes: usize,
        #[command(flatten)]
        num: Numerics,
    },
    /// Poisson extension of a grid function.
    Poisson {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        num: Numerics,
    },
    /// Fit of the Poisson kernel envelope constant.
    PoissonBounds {
        #[arg(long = "N")]
        order: f64,
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long)]
        grid: String,
        /// Heights, comma separated.
        #[arg(long, default_value = "0.25,0.5,1")]
        heights: String,
        /// Points `g`, separated by `;`; the pole is the identity.
        #[arg(long, default_value = "0,0,0;0.5,0,0;1,0.5,0.25;0,1,-0.5")]
        points: String,
        #[command(flatten)]
        num: Numerics,
    },
    /// Hardy–Littlewood or nontangential maximal function.
    Maximal {
        #[arg(long, value_enum)]
        kind: MaximalKind,
        #[arg(long)]
        input: PathBuf,
        /// Radii (hl) as `min,max,levels`.
        #[arg(long, default_value = "0.25,2,6")]
        radii: String,
        /// Cone heights as `s_min,s_max,levels,per_level`.
        #[arg(long, default_value = "0.001,0.5,8,32")]
        cone: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        num: Numerics,
    },
    /// `‖f‖_{H^p_L}` through the nontangential maximal function.
    HardyNorm {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "0.001,0.5,8,32")]
        cone: String,
        #[command(flatten)]
        num: Numerics,
    },
    /// Sampled `BMO_L` norm.
    BmoNorm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        potential: Option<String>,
    },
    /// Fractional integral `L^{−α/2} f`.
    Frac {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        num: Numerics,
    },
    /// `‖I_α f‖_{BMO_L} / ‖f‖_{L^{Q/α}}` over a family of dilated bumps.
    FracBmoSweep {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        grid: String,
        /// Bump radii, comma separated.
        #[arg(long, default_value = "0.5,0.75,1")]
        scales: String,
        #[command(flatten)]
        num: Numerics,
    },
    /// Monte Carlo estimate of the heat kernel at a point.
    McOracle {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        at: String,
        #[arg(long)]
        potential: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_arg(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => Ok(fs::read_to_string(path)?),
        None => Ok(arg.to_string()),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, arg: &str) -> Result<T> {
    serde_json::from_str(&read_arg(arg)?).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn floats(what: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("{what}: '{v}': {e}")))).collect()
}

fn point(what: &str, s: &str) -> Result<HPoint> {
    HPoint::from_slice(&floats(what, s)?).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn potential(arg: &str) -> Result<PotentialModel> {
    let v: PotentialModel = parse_json("potential", arg)?;
    v.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(v)
}

fn grid_fn(path: &Path) -> Result<GridFn> {
    let f: GridFn =
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("input: {e}")))?;
    GridFn::new(f.spec, f.values.clone()).map_err(|e| Error::Config(e.to_string()))?;
    Ok(f)
}

fn grid_spec(arg: &str) -> Result<GridSpec> {
    let g: GridSpec = parse_json("grid", arg)?;
    g.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(g)
}

fn cone(s: &str) -> Result<ConeParams> {
    match floats("cone", s)?[..] {
        [s_min, s_max, levels, per_level] => {
            Ok(ConeParams { s_min, s_max, levels: levels as usize, per_level: per_level as usize })
        }
        _ => Err(Error::Config("cone expects s_min,s_max,levels,per_level".into())),
    }
}

impl Numerics {
    fn potential(&self) -> Result<PotentialModel> {
        potential(&self.potential)
    }

    fn rule(&self) -> Result<SubordinationRule> {
        SubordinationRule::log_trapezoid(self.nodes, self.a_min)
    }

    fn plan(&self, s: f64) -> Result<SplittingPlan> {
        SplittingPlan::strang(s, self.tau_max)
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Verify { experiment, config, out } => {
            let overrides = config.as_deref().map(fs::read_to_string).transpose()?;
            let cfg = config_from(&experiment, overrides.as_deref())?;
            let report = run_experiment(&cfg)?;
            report.write(&out)?;
            for c in &report.criteria {
                println!(
                    "{} {}: {:.3e} (threshold {:.3e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            return Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::RhCheck { potential: v, q, centers_box, radii, cap } => {
            let v = potential(&v)?;
            let (b, r) = (floats("centers-box", &centers_box)?, floats("radii", &radii)?);
            if b.len() != 3 || r.len() != 3 {
                return Err(Error::Config("centers-box and radii take three values each".into()));
            }
            let n = match &v {
                PotentialModel::Bump { center, .. } => center.n(),
                PotentialModel::Tabulated { grid } => grid.spec.n,
                _ => 1,
            };
            let sampler = BallSampler {
                n,
                center_half_x: b[0],
                center_half_t: b[1],
                centers_per_axis: b[2] as usize,
                r_min: r[0],
                r_max: r[1],
                radii: r[2] as usize,
            };
            emit(&serde_json::to_value(rh_verify(&v, q, &sampler, cap)?)?, None)?;
        }
        Command::Rho { potential: v, point: p } => {
            println!("{}", aux_rho(&potential(&v)?, &point("point", &p)?)?);
        }
        Command::Kernel { free, schrodinger, s, point: p, column, grid, num } => {
            if free || !schrodinger {
                let p = p.ok_or_else(|| Error::Config("--free needs --point".into()))?;
                println!("{}", heat_kernel_free(s, &point("point", &p)?)?);
            } else {
                let col = column.ok_or_else(|| Error::Config("--schrodinger needs --column".into()))?;
                let spec = grid_spec(&grid.ok_or_else(|| Error::Config("--schrodinger needs --grid".into()))?)?;
                let k = schrodinger_kernel_column(&num.potential()?, s, &point("column", &col)?, spec, &num.plan(s)?)?;
                let mut out = std::io::BufWriter::new(std::io::stdout().lock());
                let d = spec.dims();
                let cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["t".into(), "value".into()]).collect();
                writeln!(out, "{}", cols.join(","))?;
                for (idx, v) in k.values.iter().enumerate() {
                    let g = spec.point(idx);
                    let row: Vec<String> = g.x.iter().chain([&g.t, v]).map(|c| c.to_string()).collect();
                    writeln!(out, "{}", row.join(","))?;
                }
            }
        }
        Command::KatoTrotter { s, g, h, grid, time_nodes, num } => {
            let r = kato_trotter_residual(
                &num.potential()?,
                s,
                &point("g", &g)?,
                &point("h", &h)?,
                time_nodes,
                grid_spec(&grid)?,
                &num.plan(s)?,
            )?;
            emit(&serde_json::to_value(r)?, None)?;
        }
        Command::Poisson { s, input, out, num } => {
            let u = poisson_apply(&grid_fn(&input)?, &num.potential()?, s, &num.rule()?, &num.plan(1.0)?)?;
            emit(&serde_json::to_value(u)?, out.as_deref())?;
        }
        Command::PoissonBounds { order, m, grid, heights, points, num } => {
            let spec = grid_spec(&grid)?;
            let h = HPoint::identity(spec.n);
            let mut sample = Vec::new();
            for s in floats("heights", &heights)? {
                for p in points.split(';') {
                    sample.push(KernelSample { g: point("points", p)?, h: h.clone(), s });
                }
            }
            let fit = poisson_bound_fit(&num.potential()?, order, m, &sample, spec, &num.rule()?, &num.plan(1.0)?)?;
            emit(&serde_json::to_value(fit)?, None)?;
        }
        Command::Maximal { kind, input, radii, cone: c, out, num } => {
            let f = grid_fn(&input)?;
            let field = match kind {
                MaximalKind::Hl => {
                    let r = floats("radii", &radii)?;
                    if r.len() != 3 {
                        return Err(Error::Config("radii expects min,max,levels".into()));
                    }
                    hl_maximal(&f, &geometric_ladder(r[0], r[1], r[2] as usize))?
                }
                MaximalKind::Cone => {
                    nontangential_max(&f, &num.potential()?, &cone(&c)?, &num.rule()?, &num.plan(1.0)?)?.field
                }
            };
            let (arg, witness) =
                field
                    .values
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
            let summary = json!({
                "sup": witness,
                "witness": field.spec.point(arg),
                "l1": lp_norm(&field, 1.0)?,
                "l2": lp_norm(&field, 2.0)?,
            });
            if let Some(path) = out {
                emit(&serde_json::to_value(&field)?, Some(&path))?;
            }
            emit(&summary, None)?;
        }
        Command::HardyNorm { p, input, cone: c, num } => {
            let f = grid_fn(&input)?;
            let norm = hardy_norm(&f, &num.potential()?, p, &cone(&c)?, &num.rule()?, &num.plan(1.0)?)?;
            emit(&json!({ "p": p, "norm": norm }), None)?;
        }
        Command::BmoNorm { input, potential: v } => {
            let f = grid_fn(&input)?;
            let v = match v {
                Some(v) => potential(&v)?,
                None => PotentialModel::Constant { c: 0.0 },
            };
            let r = bmo_norm(&f, &v, &BmoSampler::default_for(&f.spec))?;
            emit(&serde_json::to_value(r)?, None)?;
        }
        Command::Frac { alpha, input, out, num } => {
            let r = frac_apply(&grid_fn(&input)?, &num.potential()?, &FracPlan::new(alpha), &num.plan(1.0)?)?;
            log::info!("tails: small {:.3e}, large {:.3e}", r.tail_small, r.tail_large);
            emit(&serde_json::to_value(r.value)?, out.as_deref())?;
        }
        Command::FracBmoSweep { alpha, grid, scales, num } => {
            let spec = grid_spec(&grid)?;
            let family = bump_family(spec, &floats("scales", &scales)?)?;
            let r = theorem14_sweep(
                &num.potential()?,
                &family,
                &BmoSampler::default_for(&spec),
                &FracPlan::new(alpha),
                &num.plan(1.0)?,
            )?;
            emit(&serde_json::to_value(r)?, None)?;
        }
        Command::McOracle { s, at, potential: v, paths, steps, seed } => {
            let at = point("at", &at)?;
            let v = v.map(|v| potential(&v)).transpose()?;
            let plan = McPlan { paths, steps, ..McPlan::new(at.n(), s, seed) };
            let sample = simulate_paths(&plan, v.as_ref())?;
            let k = kde_density(&sample, &at)?;
            emit(
                &json!({ "estimate": k.estimate, "stderr": k.stderr, "effective_samples": k.effective_samples, "warning": k.warning }),
                None,
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.sequential {
        heisen::exec::set_execution(heisen::exec::Execution::Sequential);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
