//! Config-driven sweeps: one solver run per (horizon, seed) cell, a trace
//! CSV per run, a per-horizon summary CSV and an optional rate-slope fit.

use nalgebra::DVector;
use rayon::prelude::*;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use saddle_core::amdp::{
    comida_mdp_run, gain_and_bias, mdp_from_json, optimal_policy_oracle, random_ergodic_mdp,
    tune_theorem3, write_mdp_trace_csv, GenerativeSimulator, MdpPlannerConfig, TabularMdp,
};
use saddle_core::problems::{
    exact_saddle, game_from_json, BilinearGame, NoiseModel, Saddle, SubBilinearProblem,
};
use saddle_core::solvers::{
    cogda_run, comida_run, power_of_two_checkpoints, sgda_run, tune_corollary1, tune_theorem1,
    write_trace_csv, GapMetric, GeometryPair, SolverParams, TuningFragment,
};

use crate::config::{ExperimentConfig, ManualParams, ProblemSource, Scenario, Tuning};
use crate::error::{HarnessError, Result};
use crate::slope::fit_rate_slope;

/// Environment variable selecting the sweep parallelism degree.
pub const THREADS_ENV: &str = "SADDLE_BENCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub horizon: usize,
    pub seed: u64,
    /// Final gap (bilinear scenarios), suboptimality (planner scenario) or
    /// max-iterate-norm ratio (divergence contrast).
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonStats {
    pub horizon: usize,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub scenario: Scenario,
    pub cells: Vec<CellResult>,
    pub per_horizon: Vec<HorizonStats>,
    /// (slope, intercept) of the log-log rate fit; absent with fewer than
    /// three usable horizons.
    pub slope: Option<(f64, f64)>,
}

enum ResolvedProblem {
    Bilinear {
        game: BilinearGame,
        noise: NoiseModel,
        /// Gap-restriction radius, derived from the exact saddle.
        radius: f64,
    },
    Mdp(TabularMdp),
    MdpGenerator { s: usize, a: usize, seed: u64 },
}

fn load_document(source: &ProblemSource) -> Result<String> {
    match source {
        ProblemSource::Path(path) => fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display()))),
        ProblemSource::Inline(value) => Ok(value.to_string()),
        ProblemSource::Generator(_) => unreachable!("generator sources carry no document"),
    }
}

fn resolve_problem(config: &ExperimentConfig) -> Result<ResolvedProblem> {
    if config.scenario.is_bilinear() {
        let doc = load_document(&config.problem)?;
        let (game, noise) = game_from_json(&doc)?;
        let saddle = match exact_saddle(&game) {
            Saddle::Unique { x, y } => (x, y),
            Saddle::NoUniqueSaddle => {
                return Err(HarnessError::Config(
                    "the game has no unique saddle point; sweeps need an invertible square M"
                        .into(),
                ))
            }
        };
        let radius = 2.0 * saddle.0.norm().max(saddle.1.norm()).max(1.0);
        Ok(ResolvedProblem::Bilinear { game, noise, radius })
    } else {
        match &config.problem {
            ProblemSource::Generator(spec) => Ok(ResolvedProblem::MdpGenerator {
                s: spec.s,
                a: spec.a,
                seed: spec.seed,
            }),
            source => {
                let doc = load_document(source)?;
                Ok(ResolvedProblem::Mdp(mdp_from_json(&doc)?))
            }
        }
    }
}

fn manual_fragment(params: &ManualParams) -> TuningFragment {
    TuningFragment {
        eta_x: params.eta_x.expect("validated"),
        eta_y: params.eta_y.expect("validated"),
        rho_x: params.rho_x.expect("validated"),
        rho_y: params.rho_y.expect("validated"),
    }
}

fn bilinear_params(
    config: &ExperimentConfig,
    game: &BilinearGame,
    noise: &NoiseModel,
    horizon: usize,
) -> Result<SolverParams> {
    let x_init = DVector::zeros(game.dim_x());
    let y_init = DVector::zeros(game.dim_y());
    let fragment = match &config.tuning {
        Tuning::Theorem1 => tune_theorem1(noise.l_m, horizon)?,
        Tuning::Corollary1 => {
            let problem = SubBilinearProblem::from_bilinear(game, noise, &x_init, &y_init);
            tune_corollary1(problem.noise_growth, 1.0, 1.0, horizon)?
        }
        Tuning::Manual(manual) => manual_fragment(manual),
        Tuning::Theorem3 => unreachable!("validated"),
    };
    Ok(fragment.into_params(horizon, x_init, y_init)?)
}

fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn trace_path(output: &Path, label: &str, horizon: usize, seed: u64) -> PathBuf {
    output.join(format!("trace_{label}T{horizon}_seed{seed}.csv"))
}

fn run_cell(
    config: &ExperimentConfig,
    problem: &ResolvedProblem,
    horizon: usize,
    seed: u64,
) -> Result<CellResult> {
    let value = match problem {
        ResolvedProblem::Bilinear { game, noise, radius } => {
            let params = bilinear_params(config, game, noise, horizon)?;
            let gap = GapMetric::BallRestricted { radius: *radius };
            match config.scenario {
                Scenario::BilinearCogda => {
                    let run = cogda_run(game, noise, &params, gap, seed)?;
                    let mut buf = Vec::new();
                    write_trace_csv(&run, &mut buf)?;
                    write_atomically(&trace_path(&config.output, "", horizon, seed), &buf)?;
                    run.trace.last().expect("horizon checkpoint").gap_running_avg
                }
                Scenario::BilinearComida => {
                    let problem =
                        SubBilinearProblem::from_bilinear(game, noise, &params.x_init, &params.y_init);
                    let geom = GeometryPair::euclidean(game.dim_x(), game.dim_y());
                    let run = comida_run(&problem, &geom, &params, gap, seed)?;
                    let mut buf = Vec::new();
                    write_trace_csv(&run, &mut buf)?;
                    write_atomically(&trace_path(&config.output, "", horizon, seed), &buf)?;
                    run.trace.last().expect("horizon checkpoint").gap_running_avg
                }
                Scenario::BilinearSgdaContrast => {
                    let baseline = sgda_run(game, noise, &params, gap, seed)?;
                    let stabilized = cogda_run(game, noise, &params, gap, seed)?;
                    let mut buf = Vec::new();
                    write_trace_csv(&baseline, &mut buf)?;
                    write_atomically(&trace_path(&config.output, "sgda_", horizon, seed), &buf)?;
                    buf.clear();
                    write_trace_csv(&stabilized, &mut buf)?;
                    write_atomically(&trace_path(&config.output, "cogda_", horizon, seed), &buf)?;
                    baseline.max_iterate_norm / stabilized.max_iterate_norm.max(f64::MIN_POSITIVE)
                }
                Scenario::AmdpPlan => unreachable!("bilinear problems run bilinear scenarios"),
            }
        }
        ResolvedProblem::Mdp(_) | ResolvedProblem::MdpGenerator { .. } => {
            let owned;
            let mdp = match problem {
                ResolvedProblem::Mdp(mdp) => mdp,
                ResolvedProblem::MdpGenerator { s, a, seed: base } => {
                    owned = random_ergodic_mdp(*s, *a, base.wrapping_add(seed));
                    &owned
                }
                ResolvedProblem::Bilinear { .. } => unreachable!(),
            };
            let planner = match &config.tuning {
                Tuning::Theorem3 => {
                    let tuning = tune_theorem3(mdp.num_states(), mdp.num_actions(), horizon)?;
                    MdpPlannerConfig::tuned(tuning, horizon, seed)
                }
                Tuning::Manual(manual) => MdpPlannerConfig {
                    eta_v: manual.eta_v.expect("validated"),
                    eta_mu: manual.eta_mu.expect("validated"),
                    rho_v: manual.rho_v.expect("validated"),
                    horizon,
                    mu_init: None,
                    checkpoints: Vec::new(),
                    seed,
                },
                _ => unreachable!("validated"),
            }
            .with_checkpoints(power_of_two_checkpoints(horizon));
            let mut sim = GenerativeSimulator::new(mdp, seed);
            let run = comida_mdp_run(&mut sim, &planner)?;
            let mut buf = Vec::new();
            write_mdp_trace_csv(&run, &mut buf)?;
            write_atomically(&trace_path(&config.output, "", horizon, seed), &buf)?;
            let (_, rho_star, _) = optimal_policy_oracle(mdp)?;
            rho_star - gain_and_bias(mdp, &run.policy)?.rho
        }
    };
    Ok(CellResult {
        horizon,
        seed,
        value,
    })
}

fn aggregate(cells: &[CellResult], horizons: &[usize]) -> Vec<HorizonStats> {
    horizons
        .iter()
        .map(|&horizon| {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.horizon == horizon)
                .map(|c| c.value)
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std_err = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            HorizonStats {
                horizon,
                mean,
                std_err,
                count: values.len(),
            }
        })
        .collect()
}

/// Executes the configured sweep: one run per (horizon, seed), one trace CSV
/// per run, one summary CSV, and a rate-slope fit when at least three
/// horizons are available. Deterministic given the configuration.
pub fn run_scenario(config: &ExperimentConfig) -> Result<SweepSummary> {
    config.validate()?;
    fs::create_dir_all(&config.output)?;
    let problem = resolve_problem(config)?;
    let mut horizons = config.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let cells_spec: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&t| config.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let run_all = || -> Result<Vec<CellResult>> {
        cells_spec
            .par_iter()
            .map(|&(t, s)| run_cell(config, &problem, t, s))
            .collect()
    };
    let cells = match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(threads) if threads > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))?
            .install(run_all),
        _ => run_all(),
    }?;
    let per_horizon = aggregate(&cells, &horizons);
    let slope = if horizons.len() >= 3 && config.scenario != Scenario::BilinearSgdaContrast {
        let points: Vec<(f64, f64)> = per_horizon
            .iter()
            .map(|h| (h.horizon as f64, h.mean))
            .collect();
        match fit_rate_slope(&points) {
            Ok(fit) => Some(fit),
            Err(e) => {
                eprintln!("warning: rate fit unavailable: {e}");
                None
            }
        }
    } else {
        None
    };
    let mut summary = String::from("T,mean,std_err,n\n");
    for h in &per_horizon {
        summary.push_str(&format!("{},{},{},{}\n", h.horizon, h.mean, h.std_err, h.count));
    }
    write_atomically(&config.output.join("summary.csv"), summary.as_bytes())?;
    Ok(SweepSummary {
        scenario: config.scenario,
        cells,
        per_horizon,
        slope,
    })
}

/// The scenario-specific acceptance property used by `run --gate`:
/// rate scenarios need a fitted slope ≤ −0.4; the divergence contrast needs
/// every cell's max-norm ratio ≥ 10; the planner additionally needs the
/// largest-horizon median suboptimality ≤ 0.1.
pub fn gate_summary(summary: &SweepSummary) -> std::result::Result<String, String> {
    match summary.scenario {
        Scenario::BilinearSgdaContrast => {
            let worst = summary
                .cells
                .iter()
                .map(|c| c.value)
                .fold(f64::INFINITY, f64::min);
            if worst >= 10.0 {
                Ok(format!("min divergence ratio {worst:.2} >= 10"))
            } else {
                Err(format!("min divergence ratio {worst:.2} < 10"))
            }
        }
        Scenario::AmdpPlan => {
            let last = summary.per_horizon.last().expect("nonempty horizons");
            let mut values: Vec<f64> = summary
                .cells
                .iter()
                .filter(|c| c.horizon == last.horizon)
                .map(|c| c.value)
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = values[values.len() / 2];
            if median > 0.1 {
                return Err(format!(
                    "median suboptimality {median:.4} at T={} exceeds 0.1",
                    last.horizon
                ));
            }
            match summary.slope {
                Some((slope, _)) if slope > -0.4 => {
                    Err(format!("rate slope {slope:.3} is above -0.4"))
                }
                _ => Ok(format!(
                    "median suboptimality {median:.4} at T={}",
                    last.horizon
                )),
            }
        }
        _ => match summary.slope {
            Some((slope, _)) if slope <= -0.4 => Ok(format!("rate slope {slope:.3} <= -0.4")),
            Some((slope, _)) => Err(format!("rate slope {slope:.3} is above -0.4")),
            None => Err("no rate slope available (need >= 3 horizons with positive mean gaps)".into()),
        },
    }
}
