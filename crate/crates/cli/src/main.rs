use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use voi_core::baselines::{aoi_reward_fn, exhaustive_oracle, ShortestPathOptions, ShortestPathPolicy};
use voi_core::env::{ActionSequence, EpisodeTrace, Env, RewardScale};
use voi_core::experiments::{run_case_study, run_sweep, SweepSpec, CASE_STUDY_EPISODES};
use voi_core::learner::{env_reward, export_table, greedy_policy, import_table, train, QTable};
use voi_core::plot::{emit_plot, plot_data_from_csv};
use voi_core::scenario::{generate_random, load, save, GeneratorParams, LearnerConfig, Scenario};

/// Value-of-information driven trajectory and scheduling simulator.
#[derive(Parser, Debug)]
#[command(name = "voi", version)]
struct Cli {
    /// Seed for scenario generation and learning.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of training episodes (the ε schedule is rescaled to match).
    #[arg(long, global = true)]
    episodes: Option<u64>,
    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Reward units used by the learners.
    #[arg(long, global = true, value_enum, default_value_t = Scale::Spectral)]
    reward_scale: Scale,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Scale {
    Spectral,
    Raw,
}

impl From<Scale> for RewardScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Spectral => RewardScale::Spectral,
            Scale::Raw => RewardScale::Raw,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Objective {
    Voi,
    Aoi,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PolicyArg {
    VoiOptimal,
    AoiOptimal,
    ShortestPath,
    Oracle,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a scenario file, either random or the fixed three-node case study.
    Gen(GenArgs),
    /// Train a Q-table on a scenario file.
    Train {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Objective::Voi)]
        objective: Objective,
        #[arg(long, default_value = "qtable.json")]
        output: String,
    },
    /// Roll out one policy on a scenario and write the per-slot trace.
    Eval {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::VoiOptimal)]
        policy: PolicyArg,
        /// Reuse a trained table instead of training a fresh one.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Use the greedy nearest-node tour when exact search is too large.
        #[arg(long)]
        greedy_fallback: bool,
        #[arg(long, default_value = "trace.csv")]
        output: String,
    },
    /// Compare the three schemes on the fixed three-node layout.
    CaseStudy {
        /// Training seeds, comma separated. Defaults to 0..5 offset by --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Scenario file to use instead of the built-in layout.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run a parameter sweep described by a JSON file.
    Sweep {
        spec: PathBuf,
        /// Override the number of instances per sweep value.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, default_value = "sweep")]
        name: String,
    },
    /// Render a sweep or case-study CSV as an SVG line chart.
    Plot {
        table: PathBuf,
        #[arg(long)]
        output: Option<String>,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    case_study: bool,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    grid: i32,
    #[arg(long, default_value_t = 0.5)]
    rho_center: f64,
    #[arg(long, default_value_t = 0.5)]
    rho_halfwidth: f64,
    #[arg(long, default_value_t = 30)]
    horizon: usize,
    /// Transmit power in watts.
    #[arg(long, default_value_t = 1.0)]
    power: f64,
    #[arg(long, default_value_t = 1)]
    initial_aoi: u32,
    #[arg(long, default_value = "scenario.json")]
    output: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let scale = RewardScale::from(cli.reward_scale);
    match &cli.command {
        Command::Gen(args) => gen(&cli, args),
        Command::Train { scenario, objective, output } => {
            let (scenario, config) = read_scenario(&cli, scenario)?;
            let env = Env::new(scenario.clone(), config.penalty).with_reward_scale(scale);
            let (q, report) = match objective {
                Objective::Voi => train(&env, &config, &env_reward)?,
                Objective::Aoi => train(&env, &config, &aoi_reward_fn(config.penalty))?,
            };
            let name = match objective {
                Objective::Voi => "voi",
                Objective::Aoi => "aoi",
            };
            write(&cli, output, export_table(&q, &scenario, &config, name))?;
            println!("trained {} episodes, {} table entries", report.episodes_run, report.q_entries);
            Ok(())
        }
        Command::Eval { scenario, policy, table, greedy_fallback, output } => {
            let (scenario, config) = read_scenario(&cli, scenario)?;
            let env = Env::new(scenario.clone(), config.penalty).with_reward_scale(scale);
            let trace = eval(&env, &config, *policy, table.as_deref(), *greedy_fallback)?;
            let mut buf = Vec::new();
            trace.write_csv(scenario.node_count(), &mut buf)?;
            write(&cli, output, String::from_utf8(buf)?)?;
            println!(
                "time-average min VoI {:.6} bits/s, mean VoI {:.6} bits/s",
                trace.time_avg_min_voi(),
                trace.time_avg_mean_voi()
            );
            Ok(())
        }
        Command::CaseStudy { seeds, scenario } => {
            let (scenario, mut config) = match scenario {
                Some(path) => read_scenario(&cli, path)?,
                None => {
                    let base = LearnerConfig::default().with_episodes(CASE_STUDY_EPISODES);
                    (Scenario::case_study(), learner_overrides(&cli, base))
                }
            };
            let seeds = if seeds.is_empty() {
                (0..5).map(|i| config.rng_seed.wrapping_add(i)).collect()
            } else {
                seeds.clone()
            };
            config.rng_seed = seeds[0];
            let study = run_case_study(&scenario, &config, &seeds, scale)?;
            let mut buf = Vec::new();
            study.write_csv(&mut buf)?;
            write(&cli, "case_study.csv", String::from_utf8(buf)?)?;
            write(&cli, "case_study.svg", emit_plot(&study.plot_data())?)?;
            for s in &study.series {
                let mut buf = Vec::new();
                s.traces[0].write_csv(scenario.node_count(), &mut buf)?;
                write(&cli, &format!("trace_{}.csv", s.policy.name()), String::from_utf8(buf)?)?;
                println!(
                    "{:<14} time-average mean VoI {:.6} bits/s, min VoI {:.6} bits/s",
                    s.policy.name(),
                    s.time_avg_mean_voi(),
                    s.time_avg_min_voi()
                );
            }
            Ok(())
        }
        Command::Sweep { spec, instances, name } => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut spec = SweepSpec::from_json(&text)?;
            if let Some(n) = instances {
                spec.instances_per_point = *n;
                spec.seeds.clear();
            }
            spec.learner = learner_overrides(&cli, spec.learner);
            let table = run_sweep(&spec, scale)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write(&cli, &format!("{name}.csv"), String::from_utf8(buf)?)?;
            let mut buf = Vec::new();
            table.write_instances_csv(&mut buf)?;
            write(&cli, &format!("{name}_instances.csv"), String::from_utf8(buf)?)?;
            write(&cli, &format!("{name}.svg"), emit_plot(&table.plot_data())?)?;
            Ok(())
        }
        Command::Plot { table, output } => {
            let text = fs::read_to_string(table).with_context(|| format!("reading {}", table.display()))?;
            let svg = emit_plot(&plot_data_from_csv(&text)?)?;
            let name = match output {
                Some(o) => o.clone(),
                None => {
                    let stem = table.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
                    format!("{stem}.svg")
                }
            };
            write(&cli, &name, svg)
        }
    }
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let config = learner_overrides(cli, LearnerConfig::default());
    let scenario = if args.case_study {
        Scenario::case_study()
    } else {
        let params = GeneratorParams {
            node_count: args.nodes,
            grid_extent: args.grid,
            rho_center: args.rho_center,
            rho_halfwidth: args.rho_halfwidth,
            horizon: args.horizon,
            tx_power: args.power,
            initial_aoi: args.initial_aoi,
        };
        generate_random(&params, cli.seed.unwrap_or(0))?
    };
    write(cli, &args.output, save(&scenario, &config))
}

fn eval(
    env: &Env,
    config: &LearnerConfig,
    policy: PolicyArg,
    table: Option<&Path>,
    greedy_fallback: bool,
) -> Result<EpisodeTrace> {
    let horizon = env.scenario().horizon;
    let learned = |objective: &str| -> Result<QTable> {
        if let Some(path) = table {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let stored = import_table(&text, env.scenario())?;
            if stored.objective != objective {
                bail!("table was trained for objective `{}`, not `{objective}`", stored.objective);
            }
            return Ok(stored.table);
        }
        Ok(match objective {
            "voi" => train(env, config, &env_reward)?.0,
            _ => train(env, config, &aoi_reward_fn(config.penalty))?.0,
        })
    };
    let trace = match policy {
        PolicyArg::VoiOptimal => env.rollout(&mut greedy_policy(&learned("voi")?), horizon)?,
        PolicyArg::AoiOptimal => env.rollout(&mut greedy_policy(&learned("aoi")?), horizon)?,
        PolicyArg::ShortestPath => {
            let mut p = ShortestPathPolicy::new(env.scenario(), ShortestPathOptions { greedy_fallback })?;
            env.rollout(&mut p, horizon)?
        }
        PolicyArg::Oracle => {
            let best = exhaustive_oracle(env, horizon, config.discount, &env_reward)?;
            env.rollout(&mut ActionSequence::new(best.actions), horizon)?
        }
    };
    Ok(trace)
}

fn learner_overrides(cli: &Cli, mut config: LearnerConfig) -> LearnerConfig {
    if let Some(e) = cli.episodes {
        config = config.with_episodes(e);
    }
    if let Some(s) = cli.seed {
        config = config.with_seed(s);
    }
    config
}

fn read_scenario(cli: &Cli, path: &Path) -> Result<(Scenario, LearnerConfig)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (scenario, config) = load(&text).with_context(|| format!("loading {}", path.display()))?;
    Ok((scenario, learner_overrides(cli, config)))
}

fn write(cli: &Cli, name: &str, contents: String) -> Result<()> {
    let path = cli.out_dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
