use super::{
    collect_profiles, fit_profile_model, param_names, quality_names, ArtifactWriter, Check, CheckOp, Clock,
    CycleTiming, ModelSummary, ScenarioConfig, ScenarioKind, ScenarioResults, SearchSummary,
};
use crate::control::{
    collect_cycles, compare_scores, fit_forward, fit_inverse, generate_hidden_defect_stream, grid_search_oracle,
    held_out_split, label_cycle, random_support, regulate_profile, run_inverse_loop_timed, score_parts,
    train_classifier, train_regulator, Measurement, ModelSpec, Regulator, Tolerances,
};
use crate::doe::{decode, factorial_design, fisher_screen, pb_design, write_design_csv, DesignMatrix};
use crate::error::{Error, Result};
use crate::nnet::{topology_search, Dataset, Network};
use crate::plant::{
    nominal_quality, CycleRecord, ParamKind, PartQuality, Plant, ProcessParams, QualityComponent,
};
use crate::rng::{SeedTree, Stream};

pub(super) struct ScenarioRun {
    pub results: ScenarioResults,
    pub checks: Vec<Check>,
    pub cycles: Vec<CycleTiming>,
}

impl ScenarioRun {
    fn new(results: ScenarioResults, checks: Vec<Check>) -> Self {
        ScenarioRun {
            results,
            checks,
            cycles: Vec::new(),
        }
    }
}

pub(super) fn run(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    match cfg.kind {
        ScenarioKind::Screen => screen(cfg, out, clock),
        ScenarioKind::TrainForward => train_forward(cfg, out, clock),
        ScenarioKind::TrainInverse => train_inverse(cfg, out, clock).map(|(run, _)| run),
        ScenarioKind::TuneTopology => tune(cfg, out, clock),
        ScenarioKind::ClosedLoop => closed_loop(cfg, out, clock),
        ScenarioKind::Regulate => regulate(cfg, out, clock),
        ScenarioKind::SpcCompare => spc_compare(cfg, out, clock),
    }
}

fn measurement(cfg: &ScenarioConfig) -> Result<Measurement> {
    Measurement::new(cfg.metrology.station.clone(), cfg.metrology.window)
}

fn n_cycles(cfg: &ScenarioConfig) -> usize {
    cfg.n_cycles.expect("resolved config")
}

fn spec(cfg: &ScenarioConfig, seeds: &SeedTree) -> ModelSpec {
    let mut s = cfg.network.clone().expect("resolved config");
    s.train.seed = seeds.seed(Stream::Nnet, 0);
    s
}

fn observed(rec: &CycleRecord) -> &PartQuality {
    rec.measured_quality.as_ref().unwrap_or(&rec.true_quality)
}

fn s(x: f64) -> String {
    x.to_string()
}

fn named(design: DesignMatrix, specs: &[crate::doe::FactorSpec]) -> Result<DesignMatrix> {
    let names: Vec<&str> = specs.iter().map(|f| f.name.as_str()).collect();
    design.with_factor_names(&names)
}

fn write_cycles(out: &mut ArtifactWriter, name: &str, file: &str, cycles: &[CycleRecord]) -> Result<()> {
    let mut header = vec!["cycle".to_string()];
    header.extend(ParamKind::ALL.iter().map(|k| k.name().to_string()));
    header.extend(QualityComponent::ALL.iter().map(|c| format!("true_{}", c.name())));
    header.extend(QualityComponent::ALL.iter().map(|c| format!("measured_{}", c.name())));
    let rows: Vec<Vec<String>> = cycles
        .iter()
        .map(|r| {
            let mut row = vec![r.cycle_index.to_string()];
            row.extend(ParamKind::ALL.iter().map(|&k| s(r.params.get(k))));
            row.extend(QualityComponent::ALL.iter().map(|&c| s(r.true_quality.get(c))));
            row.extend(
                QualityComponent::ALL
                    .iter()
                    .map(|&c| r.measured_quality.map_or(String::new(), |q| s(q.get(c)))),
            );
            row
        })
        .collect();
    out.write_rows(name, file, &header, &rows)
}

/// Held-out rows of a fitted model: inputs, targets and predictions.
fn write_held_out(
    out: &mut ArtifactWriter,
    network: &Network,
    spec: &ModelSpec,
    inputs: &[String],
    outputs: &[String],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
) -> Result<()> {
    let (test, _) = held_out_split(xs.len(), spec);
    let mut header = vec!["index".to_string()];
    header.extend(inputs.iter().map(|n| format!("input_{n}")));
    header.extend(outputs.iter().map(|n| format!("target_{n}")));
    header.extend(outputs.iter().map(|n| format!("predicted_{n}")));
    let mut rows = Vec::with_capacity(test.len());
    for i in test {
        let mut row = vec![i.to_string()];
        row.extend(xs[i].iter().map(|&v| s(v)));
        row.extend(ys[i].iter().map(|&v| s(v)));
        row.extend(network.forward(&xs[i])?.into_iter().map(s));
        rows.push(row);
    }
    out.write_rows("held_out", "held_out.csv", &header, &rows)
}

fn write_network(out: &mut ArtifactWriter, name: &str, file: &str, net: &Network) -> Result<()> {
    out.write_with(name, file, |w| net.write_json(w))
}

fn screen(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let d = &cfg.design;
    let seeds = cfg.seeds();
    let plant = Plant::new(cfg.plant.clone());
    let design = named(pb_design(d.screen_factors.len())?, &d.screen_factors)?;
    let params = decode(&design, &d.screen_factors, &ProcessParams::NOMINAL)?;
    let m = measurement(cfg)?;
    let reps = d.screen_replicates;
    if reps < 1 {
        return Err(Error::Config("design.screen_replicates must be at least 1".into()));
    }
    let cycles = collect_cycles(&plant, Some(&m), &params, reps, 0, &seeds)?;
    clock.lap("plant");
    let n = design.n_runs();
    let responses: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..reps).map(|r| observed(&cycles[r * n + i]).get(d.screen_response)).collect())
        .collect();
    let report = fisher_screen(&design, &responses, d.alpha)?;
    clock.lap("screen");
    out.write_with("design", "design.csv", |w| {
        write_design_csv(w, &design, &params, d.screen_response.name(), &responses)
    })?;
    out.write_with("screening", "screening.csv", |w| report.write_csv(w))?;
    let significant: Vec<String> = report.significant_factors().into_iter().map(String::from).collect();
    let mut got = significant.clone();
    got.sort();
    let mut want = d.expected_active.clone();
    want.sort();
    let checks = vec![Check::new(
        "flags_exactly_expected",
        f64::from(u8::from(got == want)),
        CheckOp::Eq,
        1.0,
    )];
    Ok(ScenarioRun::new(
        ScenarioResults::Screen {
            response: d.screen_response,
            significant,
            screening: report,
        },
        checks,
    ))
}

fn correlation_checks(model: &ModelSummary, min: f64) -> Vec<Check> {
    model
        .outputs
        .iter()
        .zip(&model.held_out_correlation)
        .map(|(o, &c)| Check::new(&format!("held_out_correlation_{o}"), c, CheckOp::Ge, min))
        .collect()
}

fn factorial_cycles(cfg: &ScenarioConfig, seeds: &SeedTree) -> Result<Vec<CycleRecord>> {
    let d = &cfg.design;
    let design = named(factorial_design(d.factorial_factors.len(), 3)?, &d.factorial_factors)?;
    let params = decode(&design, &d.factorial_factors, &ProcessParams::NOMINAL)?;
    let plant = Plant::new(cfg.plant.clone());
    collect_cycles(&plant, Some(&measurement(cfg)?), &params, d.factorial_replicates, 0, seeds)
}

fn train_forward(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let seeds = cfg.seeds();
    let cycles = factorial_cycles(cfg, &seeds)?;
    clock.lap("plant");
    let spec = spec(cfg, &seeds);
    let model = fit_forward(&cycles, &spec)?;
    clock.lap("train");
    let xs: Vec<Vec<f64>> = cycles.iter().map(|r| spec.params.iter().map(|&k| r.params.get(k)).collect()).collect();
    let ys: Vec<Vec<f64>> = cycles.iter().map(|r| spec.quality.iter().map(|&c| observed(r).get(c)).collect()).collect();
    let summary = ModelSummary {
        inputs: param_names(&model.params),
        outputs: quality_names(&model.quality),
        topology: model.network.topology.describe(),
        held_out_correlation: model.held_out_correlation.clone(),
        n_cycles: cycles.len(),
        n_train: model.n_train,
        n_test: model.n_test,
    };
    write_cycles(out, "cycles", "cycles.csv", &cycles)?;
    write_held_out(out, &model.network, &spec, &summary.inputs, &summary.outputs, &xs, &ys)?;
    write_network(out, "network", "forward_network.json", &model.network)?;
    let checks = correlation_checks(&summary, 0.9);
    Ok(ScenarioRun::new(ScenarioResults::TrainForward { model: summary }, checks))
}

/// Seed offset for inverse training cycles, keeping their noise apart from
/// the closed-loop cycles that start at index 0.
const TRAINING_FIRST_CYCLE: usize = 1000;

fn train_inverse(
    cfg: &ScenarioConfig,
    out: &mut ArtifactWriter,
    clock: &mut Clock,
) -> Result<(ScenarioRun, crate::control::InverseModel)> {
    let seeds = cfg.seeds();
    let plant = Plant::new(cfg.plant.clone());
    let ranges: Vec<(ParamKind, f64, f64)> = cfg.design.support.iter().map(|r| (r.param, r.low, r.high)).collect();
    let support = random_support(&ProcessParams::NOMINAL, &ranges, n_cycles(cfg), &seeds)?;
    let cycles = collect_cycles(&plant, Some(&measurement(cfg)?), &support, 1, TRAINING_FIRST_CYCLE, &seeds)?;
    clock.lap("plant");
    let spec = spec(cfg, &seeds);
    let model = fit_inverse(&cycles, &spec)?;
    clock.lap("train");
    let xs: Vec<Vec<f64>> = cycles.iter().map(|r| spec.quality.iter().map(|&c| observed(r).get(c)).collect()).collect();
    let ys: Vec<Vec<f64>> = cycles.iter().map(|r| spec.params.iter().map(|&k| r.params.get(k)).collect()).collect();
    let summary = ModelSummary {
        inputs: quality_names(&model.quality),
        outputs: param_names(&model.params),
        topology: model.network.topology.describe(),
        held_out_correlation: model.held_out_correlation.clone(),
        n_cycles: cycles.len(),
        n_train: model.n_train,
        n_test: model.n_test,
    };
    write_cycles(out, "training_cycles", "training_cycles.csv", &cycles)?;
    write_held_out(out, &model.network, &spec, &summary.inputs, &summary.outputs, &xs, &ys)?;
    write_network(out, "network", "inverse_network.json", &model.network)?;
    Ok((ScenarioRun::new(ScenarioResults::TrainInverse { model: summary }, Vec::new()), model))
}

fn closed_loop(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let (trained, inverse) = train_inverse(cfg, out, clock)?;
    let ScenarioResults::TrainInverse { model } = trained.results else {
        unreachable!("train_inverse returns inverse results")
    };
    let seeds = cfg.seeds();
    let plant = Plant::new(cfg.plant.clone());
    let c = &cfg.control;
    let target = nominal_quality(&plant);
    let start = ProcessParams::NOMINAL
        .with(ParamKind::HoldPressure, c.start_hold)?
        .with(ParamKind::MeltTemp, c.start_melt)?;

    let range_of = |k: ParamKind| {
        cfg.design
            .support
            .iter()
            .find(|r| r.param == k)
            .map_or(k.range(), |r| (r.low, r.high))
    };
    let oracle = grid_search_oracle(
        &plant.clone().with_noise(false),
        &target,
        &start,
        &c.loop_.components,
        &c.loop_.tolerances,
        range_of(ParamKind::HoldPressure),
        range_of(ParamKind::MeltTemp),
        c.oracle_steps,
    )?;
    clock.lap("oracle");

    let m = measurement(cfg)?;
    let disturbance = cfg.disturbance.expect("resolved config").state_at(0);
    let mut steps = Vec::new();
    let log = run_inverse_loop_timed(&plant, &m, &inverse, &target, &start, &disturbance, &c.loop_, &seeds, &mut steps)?;
    clock.lap("loop");
    let measure_s = m.plan.total_duration();
    let cycles = steps
        .iter()
        .map(|t| CycleTiming {
            cycle: t.iteration,
            measure_s,
            infer_s: t.infer_s,
            adjust_s: t.adjust_s,
        })
        .collect();

    out.write_with("control_log", "control_log.csv", |w| log.write_csv(w))?;
    out.write_with("control_log_json", "control_log.json", |w| log.write_json(w))?;
    let traj = log.rms_trajectory();
    let limit = c.loop_.rms_threshold;
    let iterations_to_threshold = traj.iter().position(|&r| r <= limit);
    let best_within = traj.iter().take(c.loop_.max_iters + 1).copied().fold(f64::INFINITY, f64::min);
    let mut checks = trained.checks;
    checks.push(Check::new("oracle_best_rms", oracle.best_rms, CheckOp::Le, 0.05));
    checks.push(Check::new("rms_within_max_iters", best_within, CheckOp::Le, limit));
    let final_params = log.entries.last().map_or(start, |e| e.action.new);
    Ok(ScenarioRun {
        results: ScenarioResults::ClosedLoop {
            model,
            oracle,
            start,
            rms_trajectory: traj,
            iterations_to_threshold,
            final_params,
            warnings: log.warnings().map(String::from).collect(),
        },
        checks,
        cycles,
    })
}

fn regulate(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let seeds = cfg.seeds();
    let plant = Plant::new(cfg.plant.clone());
    let c = &cfg.control;
    let n = n_cycles(cfg);
    let disturbance = cfg.disturbance.expect("resolved config");
    let reference = plant.run_cycle(
        0,
        &ProcessParams::NOMINAL,
        &crate::plant::DisturbanceState::NONE,
        seeds.child(Stream::Control, 2).seed(Stream::Plant, 0),
    )?;
    let m0 = reference.true_quality.mass;
    let regulator = if c.use_fallback {
        Regulator::Fallback(c.fallback.clone())
    } else {
        let r = train_regulator(&plant, &ProcessParams::NOMINAL, &c.regulator, &seeds.child(Stream::Control, 1))?;
        write_network(out, "regulator", "regulator_network.json", &r.network)?;
        Regulator::Trained(r)
    };
    clock.lap("train");

    let open = plant.run_sequence(
        &ProcessParams::NOMINAL,
        n,
        &disturbance,
        |_| Ok(()),
        None::<fn(&[CycleRecord]) -> Result<Option<ProcessParams>>>,
        &seeds,
    )?;
    let log = regulate_profile(&plant, &reference, &ProcessParams::NOMINAL, n, &disturbance, &regulator, &c.regulation, &seeds)?;
    clock.lap("regulate");

    let open_rows: Vec<Vec<String>> = open
        .iter()
        .map(|r| {
            vec![
                r.cycle_index.to_string(),
                s(r.disturbance.melt_temp_offset),
                s(r.disturbance.viscosity_factor),
                s(r.disturbance.checkring_leak),
                s(r.true_quality.mass),
            ]
        })
        .collect();
    let header: Vec<String> = ["cycle", "melt_temp_offset", "viscosity_factor", "checkring_leak", "mass"]
        .map(String::from)
        .to_vec();
    out.write_rows("open_loop", "open_loop.csv", &header, &open_rows)?;
    out.write_with("control_log", "control_log.csv", |w| log.write_csv(w))?;

    let k = steady_cycles(n);
    let open_masses: Vec<f64> = open.iter().map(|r| r.true_quality.mass).collect();
    let reg_masses: Vec<f64> = log.entries.iter().map(|e| e.measured.mass).collect();
    let open_dev = steady_deviation(&open_masses, m0, k);
    let reg_dev = steady_deviation(&reg_masses, m0, k);
    let last = log.entries.last().expect("n >= 1");
    let ratio = open_dev.abs() / reg_dev.abs();
    let checks = vec![
        Check::new("regulated_abs_deviation", reg_dev.abs(), CheckOp::Le, 0.00127),
        Check::new("rejection_ratio", ratio, CheckOp::Ge, 10.0),
    ];
    Ok(ScenarioRun::new(
        ScenarioResults::Regulate {
            regulator: match regulator {
                Regulator::Trained(_) => "trained".into(),
                Regulator::Fallback(_) => "fallback".into(),
            },
            reference_mass: m0,
            steady_cycles: k,
            open_loop_deviation: open_dev,
            regulated_deviation: reg_dev,
            rejection_ratio: ratio,
            final_params: last.action.new,
        },
        checks,
    ))
}

/// Cycles averaged for a steady-state deviation: the last five, or all of
/// them in shorter runs.
pub(super) fn steady_cycles(n: usize) -> usize {
    n.min(5)
}

/// Relative deviation of the mean of the last `k` masses from `reference`.
pub(super) fn steady_deviation(masses: &[f64], reference: f64, k: usize) -> f64 {
    let tail = &masses[masses.len() - k..];
    (tail.iter().sum::<f64>() / k as f64 - reference) / reference
}

/// Evaluation cycles start here so they never share noise with training.
const EVAL_FIRST_CYCLE: usize = 100_000;

fn spc_compare(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let seeds = cfg.seeds();
    let plant = Plant::new(cfg.plant.clone());
    let cl = &cfg.classifier;
    let target = nominal_quality(&plant);
    let tol = Tolerances::default();
    let window = cl.model.window;
    let label = |recs: Vec<CycleRecord>| -> Result<Vec<_>> {
        recs.iter().map(|r| label_cycle(r, window, &tol, &target)).collect()
    };
    let train = label(generate_hidden_defect_stream(
        &plant,
        &ProcessParams::NOMINAL,
        0,
        cl.n_train,
        &cl.stream,
        &seeds,
    )?)?;
    let baseline: Vec<f64> = train
        .iter()
        .filter(|c| c.conforming == Some(true))
        .take(cl.baseline_n)
        .map(|c| c.peak_pressure)
        .collect();
    let mut mc = cl.model.clone();
    mc.train.seed = seeds.seed(Stream::Nnet, 0);
    let net = train_classifier(&train, &mc)?;
    clock.lap("train");

    let eval = label(generate_hidden_defect_stream(
        &plant,
        &ProcessParams::NOMINAL,
        EVAL_FIRST_CYCLE,
        n_cycles(cfg),
        &cl.stream,
        &seeds,
    )?)?;
    let (nn, spc) = score_parts(&net, &baseline, &eval)?;
    let bad: Vec<bool> = eval.iter().map(|c| c.conforming == Some(false)).collect();
    let comparison = compare_scores(&nn, &spc, &bad, cl.model.detection_target)?;
    clock.lap("classify");

    let header: Vec<String> = ["cycle", "nonconforming", "nn_score", "spc_abs_z"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = (0..eval.len())
        .map(|i| {
            vec![
                (EVAL_FIRST_CYCLE + i).to_string(),
                u8::from(bad[i]).to_string(),
                s(nn[i]),
                s(spc[i]),
            ]
        })
        .collect();
    out.write_rows("scores", "scores.csv", &header, &rows)?;
    out.write_json("comparison", "comparison.json", &comparison)?;
    write_network(out, "classifier", "classifier_network.json", &net)?;

    let ratio = comparison.matched_fp_ratio();
    let det = comparison
        .nn_matched
        .as_ref()
        .and_then(|m| m.detection_rate)
        .unwrap_or(0.0);
    let checks = vec![
        Check::new("nn_matched_detection", det, CheckOp::Ge, cl.model.detection_target),
        Check::new("matched_fp_ratio", ratio.unwrap_or(f64::INFINITY), CheckOp::Le, 0.5),
    ];
    Ok(ScenarioRun::new(
        ScenarioResults::SpcCompare {
            comparison,
            matched_fp_ratio: ratio,
        },
        checks,
    ))
}

fn tune(cfg: &ScenarioConfig, out: &mut ArtifactWriter, clock: &mut Clock) -> Result<ScenarioRun> {
    let seeds = cfg.seeds();
    let t = &cfg.tune;
    let cycles = factorial_cycles(cfg, &seeds)?;
    let spec = spec(cfg, &seeds);
    let data = Dataset::new(
        cycles.iter().map(|r| spec.params.iter().map(|&k| r.params.get(k)).collect()).collect(),
        cycles.iter().map(|r| spec.quality.iter().map(|&c| observed(r).get(c)).collect()).collect(),
    )?;
    clock.lap("plant");
    let mut sc = t.search.clone();
    sc.train.seed = seeds.seed(Stream::Nnet, 1);
    let (topology, report) = topology_search(&data, t.max_hidden, &sc)?;
    clock.lap("search");

    let plant = Plant::new(cfg.plant.clone());
    let profiles = collect_profiles(&plant, n_cycles(cfg), t.profile.window, &seeds.child(Stream::Control, 3))?;
    let (net, profile, predictions) = fit_profile_model(&profiles, &t.profile, &seeds.child(Stream::Nnet, 2))?;
    clock.lap("profile");

    let header: Vec<String> = ["hidden", "train_mse", "validation_mse"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .sizes
        .iter()
        .map(|z| vec![z.hidden.to_string(), s(z.train_mse), s(z.validation_mse)])
        .collect();
    out.write_rows("search_sizes", "search_sizes.csv", &header, &rows)?;
    write_network(out, "search_network", "search_network.json", &report.network)?;
    let header: Vec<String> = ["cycle", "step", "target", "predicted"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = predictions
        .iter()
        .map(|p| vec![p.cycle.to_string(), p.step.to_string(), s(p.target), s(p.predicted)])
        .collect();
    out.write_rows("profile_predictions", "profile_predictions.csv", &header, &rows)?;
    write_network(out, "profile_network", "profile_network.json", &net)?;

    let samples = crate::plant::samples_for(plant.cycle_time(&ProcessParams::NOMINAL));
    let checks = vec![
        Check::new("profile_nrmse", profile.nrmse, CheckOp::Lt, 0.1),
        Check::new(
            "points_per_profile",
            profile.points_per_profile as f64,
            CheckOp::Eq,
            (samples / t.profile.window) as f64,
        ),
    ];
    Ok(ScenarioRun::new(
        ScenarioResults::TuneTopology {
            search: SearchSummary {
                sizes: report.sizes,
                selected_hidden: report.selected_hidden,
                rounds: report.rounds,
                final_hidden: report.final_hidden,
                depth_comparison: report.depth_comparison,
                topology: topology.describe(),
            },
            profile,
        },
        checks,
    ))
}
