use std::fmt::Write as _;

use dcf_core::data::{make_windows, split_dataset, write_pairs_csv, write_windows, NormalizationSpec, Window, WindowFile};
use dcf_core::distill::{
    alpha_sweep, cv_score, encode, random_search, time_order, train_kdnn, train_student_plain, train_teacher,
    DistillConfig, Encoded, TrainConfig, Trained,
};
use dcf_core::eval::{
    closed_loop_rollout, compute_csv, compute_metering, observed_min_ttc, peak_rss_kb, speed_profile_export,
    ComputeRow, EvalReport, GippsModel, NeuralModel, SpeedModel,
};
use dcf_core::gipps::{generate_synthetic_dataset, GippsPredictor, ScenarioPreset};
use dcf_core::nn::{NetworkSpec, Weights};
use dcf_core::stats::{moment_table, plot_data, speed_variability, summaries_csv, summarize_table1};
use dcf_core::{Error, Result};
use ndarray::Array2;
use serde::Serialize;

use crate::run::{Prepared, Run};

pub fn synth(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let n: usize = cfg.parse("synth.pairs")?;
    let duration: f64 = cfg.parse("synth.duration")?;
    let noise: f64 = cfg.parse("synth.noise_std")?;
    let presets: Vec<ScenarioPreset> = ScenarioPreset::defaults()
        .into_iter()
        .map(|p| ScenarioPreset {
            duration,
            noise_std: noise,
            ..p
        })
        .collect();
    let pairs = generate_synthetic_dataset(&presets, n, run.stage_seed("synth")?)?;
    let path = run.path("pairs.csv");
    write_pairs_csv(&path, &pairs)?;
    run.identify_input_at(&path)?;
    run.note_artifact("pairs.csv");
    run.record("pairs", pairs.len());
    run.record("pairs_per_class", n);
    Ok(())
}

pub fn ingest(run: &mut Run) -> Result<()> {
    let pairs = run.load_input()?;
    let (segments, report) = run.filter(&pairs)?;
    eprintln!("{report}");
    let history: f64 = run.cfg.parse("data.history")?;
    let dt: f64 = run.cfg.parse("data.dt")?;
    let windows = make_windows(&segments, history, dt)?;
    let split = split_dataset(&windows, run.stage_seed("split")?)?;
    let norm = NormalizationSpec::fit(&split.train)?;

    let steps = windows.first().map_or(0, Window::steps);
    let file = WindowFile { dt, steps, windows };
    let path = run.path("windows.dcfw");
    write_windows(&path, &file)?;
    run.note_artifact("windows.dcfw");

    let mut split_csv = String::from("pair_id,role\n");
    for (id, role) in &split.assignment {
        let _ = writeln!(split_csv, "{id},{}", role.label());
    }
    run.write("split.csv", split_csv)?;
    run.write("norm.txt", norm.to_text())?;
    run.write_json("filter_report.json", &report)?;
    run.write_dataset_record()?;

    run.record("windows", file.windows.len());
    run.record("train_windows", split.train.len());
    run.record("validation_windows", split.validation.len());
    run.record("test_windows", split.test.len());
    run.record("filter", &report);
    Ok(())
}

pub fn analyze(run: &mut Run) -> Result<()> {
    let pairs = run.load_input()?;
    let var_bins = run.cfg.bins("stats.variability_edges")?;
    let cat_bins = run.cfg.bins("stats.category_edges")?;
    let variable = run.cfg.moment_variable()?;

    let variability = speed_variability(&pairs, &var_bins);
    run.write("fig1_speed_variability.csv", summaries_csv(&var_bins, &variability))?;
    run.write("fig1_plot.csv", plot_data(&var_bins, &variability, |g| g.std))?;

    let moments = moment_table(&pairs, &var_bins, variable);
    run.write("fig2_moments.csv", summaries_csv(&var_bins, &moments))?;
    run.write("fig2_skewness_plot.csv", plot_data(&var_bins, &moments, |g| g.skewness))?;
    run.write("fig2_kurtosis_plot.csv", plot_data(&var_bins, &moments, |g| g.kurtosis))?;

    let table = summarize_table1(&pairs, &cat_bins)?;
    run.write("table1.csv", table.rows_csv())?;
    run.write("table1_anova.csv", table.anova_csv())?;
    run.record("pairs", pairs.len());
    run.record("moment_variable", variable.name());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Teacher,
    Student,
    Both,
}

struct Encodings {
    train: Encoded,
    validation: Option<Encoded>,
    test: Encoded,
}

fn encodings(p: &Prepared) -> Result<Encodings> {
    let validation = if p.split.validation.is_empty() {
        None
    } else {
        Some(encode(&p.split.validation, &p.norm)?)
    };
    Ok(Encodings {
        train: encode(&p.split.train, &p.norm)?,
        validation,
        test: encode(&p.split.test, &p.norm)?,
    })
}

fn rmse_ms(weights: &Weights, data: &Encoded) -> Result<f64> {
    Ok(dcf_core::distill::evaluate_mse(weights, data)?.sqrt() * data.target_scale)
}

fn teacher_config(run: &Run) -> Result<TrainConfig> {
    Ok(TrainConfig {
        spec: NetworkSpec::Lstm(run.cfg.teacher_spec()?),
        optimizer: run.cfg.teacher_optimizer()?,
        seed: run.stage_seed("teacher")?,
    })
}

fn student_config(run: &Run) -> Result<TrainConfig> {
    Ok(TrainConfig {
        spec: NetworkSpec::Mlp(run.cfg.student_spec()?),
        optimizer: run.cfg.student_optimizer()?,
        seed: run.stage_seed("student")?,
    })
}

/// Random search over expanding-window folds of the time-ordered training
/// windows, then the chosen candidate applied to `base`.
fn searched(run: &mut Run, name: &str, base: TrainConfig, prepared: &Prepared) -> Result<TrainConfig> {
    let space = run.cfg.search_space(matches!(base.spec, NetworkSpec::Lstm(_)))?;
    let order = time_order(&prepared.split.train);
    let ordered: Vec<Window> = order.iter().map(|&i| prepared.split.train[i].clone()).collect();
    let data = encode(&ordered, &prepared.norm)?;
    let result = random_search(&space, run.stage_seed("search")?, |c| {
        cv_score(&c.apply(&base), &data, space.folds)
    })?;
    if !result.best_score.is_finite() {
        return Err(Error::Divergence { epoch: 0, batch: 0 });
    }
    run.write_json(&format!("search_{name}.json"), &result)?;
    Ok(result.best.apply(&base))
}

fn write_trained(run: &mut Run, name: &str, trained: &Trained, enc: &Encodings) -> Result<()> {
    run.save_weights(&format!("{name}.dcfn"), &trained.weights)?;
    run.write(&format!("{name}_log.csv"), trained.log.to_csv())?;
    run.record(&format!("{name}_architecture"), trained.weights.spec().descriptor());
    run.record(&format!("{name}_test_rmse"), rmse_ms(&trained.weights, &enc.test)?);
    Ok(())
}

pub fn train(run: &mut Run, which: Which, search: bool) -> Result<()> {
    let prepared = run.prepared()?;
    let enc = encodings(&prepared)?;
    if matches!(which, Which::Teacher | Which::Both) {
        let mut cfg = teacher_config(run)?;
        if search {
            cfg = searched(run, "teacher", cfg, &prepared)?;
        }
        let trained = train_teacher(&cfg, &enc.train, enc.validation.as_ref())?;
        write_trained(run, "teacher", &trained, &enc)?;
    }
    if matches!(which, Which::Student | Which::Both) {
        let mut cfg = student_config(run)?;
        if search {
            cfg = searched(run, "student", cfg, &prepared)?;
        }
        let trained = train_student_plain(&cfg, &enc.train, enc.validation.as_ref())?;
        write_trained(run, "student", &trained, &enc)?;
    }
    Ok(())
}

/// The distilled student shares the plain student's seed, so at alpha = 1
/// the two are identical.
fn distill_config<'a>(run: &Run, teacher: &'a Weights, alpha: f64) -> Result<DistillConfig<'a>> {
    Ok(DistillConfig {
        alpha,
        teacher,
        student: run.cfg.student_spec()?,
        optimizer: run.cfg.student_optimizer()?,
        seed: run.stage_seed("student")?,
        cache_teacher: run.cfg.flag("distill.cache_teacher")?,
    })
}

pub fn distill(run: &mut Run) -> Result<()> {
    let teacher = run.load_weights("teacher.dcfn", "train --model teacher")?;
    let prepared = run.prepared()?;
    let enc = encodings(&prepared)?;
    let alpha: f64 = run.cfg.parse("distill.alpha")?;
    let cfg = distill_config(run, &teacher, alpha)?;
    let trained = train_kdnn(&cfg, &enc.train, enc.validation.as_ref())?;
    write_trained(run, "kdnn", &trained, &enc)?;
    run.record("alpha", alpha);
    Ok(())
}

pub fn sweep(run: &mut Run) -> Result<()> {
    let teacher = run.load_weights("teacher.dcfn", "train --model teacher")?;
    let student = run.load_weights("student.dcfn", "train --model student")?;
    let prepared = run.prepared()?;
    let enc = encodings(&prepared)?;
    let alphas = run.cfg.alphas()?;
    let base = distill_config(run, &teacher, alphas[0])?;
    let (report, models) = alpha_sweep(&base, &alphas, &enc.train, enc.validation.as_ref(), &enc.test, &student)?;
    run.write("table2.csv", report.to_csv())?;
    run.write_json("sweep.json", &report)?;
    let best = alphas
        .iter()
        .position(|&a| a == report.best_alpha)
        .expect("best alpha comes from the grid");
    run.save_weights("kdnn_best.dcfn", &models[best].weights)?;
    run.write("kdnn_best_log.csv", models[best].log.to_csv())?;
    run.record("best_alpha", report.best_alpha);
    run.record("best_rmse", report.best_rmse);
    run.record("teacher_rmse", report.teacher_rmse);
    run.record("student_rmse", report.student_rmse);
    Ok(())
}

/// The distilled model from `sweep` if present, else the one from `distill`.
fn load_kdnn(run: &Run) -> Result<Weights> {
    if run.path("kdnn_best.dcfn").is_file() {
        run.load_weights("kdnn_best.dcfn", "sweep")
    } else {
        run.load_weights("kdnn.dcfn", "distill` or `dcf sweep")
    }
}

fn neural_models(run: &Run, norm: &NormalizationSpec) -> Result<Vec<NeuralModel>> {
    let model = |name: &str, weights: Weights| NeuralModel {
        name: name.to_string(),
        weights,
        norm: norm.clone(),
    };
    Ok(vec![
        model("teacher", run.load_weights("teacher.dcfn", "train --model teacher")?),
        model("student", run.load_weights("student.dcfn", "train --model student")?),
        model("kdnn", load_kdnn(run)?),
    ])
}

fn gipps_model(run: &Run, prepared: &Prepared) -> Result<GippsModel> {
    let predictor = GippsPredictor::fit(&prepared.split.test, run.cfg.gipps()?)?;
    predictor.validate()?;
    Ok(GippsModel {
        name: "gipps".into(),
        predictor,
    })
}

pub fn evaluate(run: &mut Run) -> Result<()> {
    let prepared = run.prepared()?;
    let segments = run.test_segments(&prepared)?;
    let neural = neural_models(run, &prepared.norm)?;
    let gipps = gipps_model(run, &prepared)?;
    let mut models: Vec<&dyn SpeedModel> = neural.iter().map(|m| m as &dyn SpeedModel).collect();
    models.push(&gipps);

    let mut report = EvalReport::build(&models, &prepared.split.test, &segments)?;
    report.warnings.extend(gipps.predictor.warnings());
    let manifest_hash = crate::run::sha256_hex(run.manifest_text()?.as_bytes());
    let name = format!("eval_report_{}.json", &manifest_hash[..12]);
    run.write_json(&name, &report)?;
    run.write("fig3_rmse_by_class.csv", report.rmse_by_class_csv())?;
    run.write("table3_rmse_by_pair.csv", report.pair_table_csv())?;
    run.write("fig4_min_ttc.csv", report.min_ttc_csv())?;
    run.write_json("gipps_fits.json", &gipps.predictor)?;

    let per_class: usize = run.cfg.parse("eval.profile_pairs")?;
    let mut chosen = Vec::new();
    for class in dcf_core::data::PairClass::ALL {
        chosen.extend(segments.iter().filter(|p| p.class == class).take(per_class).cloned());
    }
    for series in speed_profile_export(&models, &chosen)? {
        let name = format!("profiles/{}_s{}_{}.csv", series.pair_id, series.segment, series.model);
        run.write(&name, series.to_csv())?;
    }

    for m in &report.models {
        run.record(&format!("{}_rmse", m.name), m.overall_rmse);
    }
    run.record("report", name);
    run.record("warnings", report.warnings.len());
    Ok(())
}

fn ttc_cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

pub fn rollout(run: &mut Run) -> Result<()> {
    let prepared = run.prepared()?;
    let segments = run.test_segments(&prepared)?;
    let neural = neural_models(run, &prepared.norm)?;
    let gipps = gipps_model(run, &prepared)?;
    let mut models: Vec<&dyn SpeedModel> = neural.iter().map(|m| m as &dyn SpeedModel).collect();
    models.push(&gipps);
    let horizon = match run.cfg.parse::<usize>("eval.horizon")? {
        0 => None,
        h => Some(h),
    };

    let mut summary = String::from("model,pair,segment,class,simulated_steps,min_ttc,collision,observed_min_ttc\n");
    let mut collisions = 0usize;
    for m in &models {
        for pair in segments.iter().filter(|p| p.len() > dcf_core::eval::WARMUP_STEPS) {
            let r = closed_loop_rollout(pair, horizon, |_, w| Ok(m.predict(std::slice::from_ref(w))?[0]))?;
            let mut csv = String::from("t,foll_pos,foll_speed,spacing\n");
            for k in 0..r.t.len() {
                let _ = writeln!(csv, "{},{},{},{}", r.t[k], r.foll_pos[k], r.foll_speed[k], r.spacing[k]);
            }
            run.write(&format!("rollouts/{}/{}_s{}.csv", m.name(), pair.pair_id, pair.segment), csv)?;
            collisions += usize::from(r.collision);
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{},{}",
                m.name(),
                pair.pair_id,
                pair.segment,
                pair.class,
                r.simulated_steps(),
                ttc_cell(r.min_ttc),
                r.collision,
                ttc_cell(observed_min_ttc(pair, horizon))
            );
        }
    }
    run.write("rollout_summary.csv", summary)?;
    run.record("collisions", collisions);
    run.record("segments", segments.len());
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    rows: Vec<ComputeRow>,
    multiply_add_ratio_teacher_student: f64,
    peak_rss_kb: Option<u64>,
}

pub fn bench(run: &mut Run) -> Result<()> {
    let prepared = run.prepared()?;
    let neural = neural_models(run, &prepared.norm)?;
    let n: usize = run.cfg.parse("bench.batch")?;
    let reps: usize = run.cfg.parse("bench.repetitions")?;
    let source = if prepared.split.test.is_empty() {
        &prepared.split.train
    } else {
        &prepared.split.test
    };
    if source.is_empty() || n == 0 {
        return Err(Error::Data("no windows to benchmark on".into()));
    }
    let enc = encode(source, &prepared.norm)?;
    let width = enc.x.ncols();
    let batch = Array2::from_shape_fn((n, width), |(i, j)| enc.x[[i % enc.len(), j]]);

    let mut rows = Vec::new();
    for m in &neural {
        let metering = compute_metering(&m.weights, batch.view(), reps)?;
        eprintln!("{}: {:.3} ms / 10k inferences (median)", m.name, metering.median_ms_per_10k);
        rows.push(ComputeRow {
            model: m.name.clone(),
            metering,
        });
    }
    let ratio = rows[0].metering.multiply_adds as f64 / rows[1].metering.multiply_adds as f64;
    run.write("bench.csv", compute_csv(&rows))?;
    run.write_json(
        "bench.json",
        &BenchReport {
            rows,
            multiply_add_ratio_teacher_student: ratio,
            peak_rss_kb: peak_rss_kb(),
        },
    )?;
    run.record("multiply_add_ratio_teacher_student", ratio);
    Ok(())
}
