use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use tod_core::controller::{build_model_bank, BankDocument, PlsModelBank, PredictivePlan};
use tod_core::delay::{write_rates_csv, DayDelay, DelayTable, IntersectionConfig};
use tod_core::evaluation::{evaluate_day, nominal_plan, DayOutcome, EvalConfig};
use tod_core::flowdata::{center, filter_days, load_csv, mean_profile, FlowDataset, FlowSeries};
use tod_core::lowrank::{explained_variance, fit_pca};
use tod_core::pls::{fit_split, loocv, summarize, write_loocv_csv};
use tod_core::segmentation::{optimal_segmentation, PlanDocument, SegmentationPlan};
use tod_core::synth::generate;
use tod_core::{clock_label, Error, Result};

use crate::config::RunConfig;
use crate::manifest::{sha256_hex, Artifact, ArtifactWriter, InputFile, RunManifest};

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Globals {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

/// `flows.csv` → `flows.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

struct Loaded {
    ds: FlowDataset,
    inputs: Vec<InputFile>,
}

fn load_input(g: &Globals) -> Result<Loaded> {
    let path = g
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --input <flows.csv>".into()))?;
    let sidecar = sidecar_path(path);
    let mut inputs = vec![InputFile::read(path)?];
    let ds = if sidecar.is_file() {
        inputs.push(InputFile::read(&sidecar)?);
        FlowDataset::load(path, &sidecar)?
    } else {
        let loaded = load_csv(path, g.config.interval_minutes)?;
        for date in &loaded.dropped_dates {
            warn!("dropped incomplete day {date}");
        }
        loaded.dataset
    };
    let ds = match &g.config.weekdays {
        Some(days) => filter_days(&ds, &days.iter().copied().collect::<BTreeSet<_>>())?,
        None => ds,
    };
    info!(
        "loaded {} days x {} columns",
        ds.n_days(),
        ds.flows().ncols()
    );
    Ok(Loaded { ds, inputs })
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn writer(
    command: &str,
    g: &Globals,
    inputs: Vec<InputFile>,
    arguments: Vec<(String, String)>,
) -> Result<ArtifactWriter> {
    let mut manifest = RunManifest::new(command, &g.config, &g.out_dir);
    manifest.inputs = inputs;
    manifest.arguments = arguments;
    ArtifactWriter::new(manifest)
}

fn arg(name: &str, value: impl ToString) -> (String, String) {
    (name.to_string(), value.to_string())
}

pub fn cmd_synth(g: &Globals) -> Result<Vec<Artifact>> {
    let out = generate(&g.config.synth)?;
    let mut w = writer("synth", g, Vec::new(), Vec::new())?;
    let flows = csv_bytes(|b| out.dataset.write_csv(b))?;
    w.write_bytes("flows.csv", &flows)?;
    w.write_json("flows.meta.json", &out.dataset.metadata())?;
    w.write_json("truth.json", &out.truth)?;
    w.finish()
}

pub fn cmd_pca(g: &Globals, components: Option<usize>) -> Result<Vec<Artifact>> {
    let Loaded { ds, inputs } = load_input(g)?;
    let n = components.unwrap_or(g.config.pca_components);
    if n == 0 || n + 1 > ds.n_days() {
        return Err(Error::Range(format!(
            "{n} components for {} days (must lie in 1..={})",
            ds.n_days(),
            ds.n_days().saturating_sub(1)
        )));
    }
    let model = fit_pca(&center(&ds)?, n)?.with_component_scale(g.config.component_scale)?;
    let mut w = writer("pca", g, inputs, vec![arg("components", n)])?;
    w.write_json("pca_model.json", &model.to_document())?;

    let fractions = explained_variance(&model);
    let variance = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        out.write_record(["component", "singular_value", "fraction"])?;
        for (i, (s, f)) in model.singular_values().iter().zip(&fractions).enumerate() {
            out.write_record([(i + 1).to_string(), s.to_string(), f.to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    w.write_bytes("explained_variance.csv", &variance)?;

    let weights = model.scaled_weights();
    let scatter = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        let mut header = vec!["date".to_string(), "weekday".to_string()];
        header.extend((1..=n).map(|i| format!("w{i}")));
        out.write_record(&header)?;
        for (d, day) in ds.days().iter().enumerate() {
            let mut row = vec![day.date.clone(), day.weekday.to_string()];
            row.extend(weights.row(d).iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    w.write_bytes("weights.csv", &scatter)?;
    w.finish()
}

#[derive(Serialize)]
struct PredictionSummary {
    date: String,
    held_out: bool,
    components: usize,
    e_pred: f64,
    e_base: f64,
    decrease: f64,
}

pub fn cmd_predict(
    g: &Globals,
    date: Option<&str>,
    sample: Option<&Path>,
    components: Option<usize>,
) -> Result<Vec<Artifact>> {
    let Loaded { ds, mut inputs } = load_input(g)?;
    let spec = g.config.split;
    let n = components.unwrap_or(g.config.pls_components);
    let (label, row, model, held_out) = match (date, sample) {
        (Some(date), None) => {
            let d = ds
                .day_index(date)
                .ok_or_else(|| Error::UnknownDate(date.to_string()))?;
            let model = fit_split(&ds.without_day(d), &spec, n)?;
            (date.to_string(), ds.day_vector(d), model, true)
        }
        (None, Some(path)) => {
            inputs.push(InputFile::read(path)?);
            let loaded = load_csv(path, ds.interval_minutes())?;
            let day = loaded.dataset.with_movement_order(ds.movements())?;
            if day.n_days() != 1 {
                return Err(Error::Validation(format!(
                    "sample file must hold exactly one complete day, found {}",
                    day.n_days()
                )));
            }
            let model = fit_split(&ds, &spec, n)?;
            (day.days()[0].date.clone(), day.day_vector(0), model, false)
        }
        _ => {
            return Err(Error::Config(
                "predict needs exactly one of --date or --sample".into(),
            ))
        }
    };
    let m = ds.n_movements();
    let (z, y) = spec.split_row(&row, ds.intervals_per_day(), m);
    let predicted = model.predict(&DVector::from_vec(z))?;
    let mean = model.mean_y();
    let per_movement = spec.predicted_intervals() / spec.predicted_stride;

    let mut arguments = vec![arg("components", n)];
    match sample {
        Some(p) => arguments.push(arg("sample", p.display())),
        None => arguments.push(arg("date", &label)),
    }
    let mut w = writer("predict", g, inputs, arguments)?;
    let table = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        out.write_record(["movement", "interval", "actual", "predicted", "mean"])?;
        for (k, name) in ds.movements().iter().enumerate() {
            for j in 0..per_movement {
                let i = k * per_movement + j;
                let interval = spec.predict_from + j * spec.predicted_stride;
                out.write_record([
                    name.clone(),
                    interval.to_string(),
                    y[i].to_string(),
                    predicted[i].to_string(),
                    mean[i].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    w.write_bytes("prediction.csv", &table)?;
    let e_pred: f64 = y
        .iter()
        .zip(predicted.iter())
        .map(|(a, p)| (a - p).abs())
        .sum();
    let e_base: f64 = y.iter().zip(mean.iter()).map(|(a, p)| (a - p).abs()).sum();
    w.write_json(
        "prediction_summary.json",
        &PredictionSummary {
            date: label,
            held_out,
            components: model.n_components(),
            e_pred,
            e_base,
            decrease: if e_base > 0.0 {
                (e_base - e_pred) / e_base
            } else {
                0.0
            },
        },
    )?;
    w.finish()
}

pub fn cmd_segment(
    g: &Globals,
    periods: Option<usize>,
    penalty: Option<f64>,
    date: Option<&str>,
) -> Result<Vec<Artifact>> {
    let Loaded { ds, inputs } = load_input(g)?;
    let s = periods.unwrap_or(g.config.n_periods);
    let mut fit = g.config.fit;
    if let Some(c) = penalty {
        fit.overflow_penalty = c;
    }
    fit.validate()?;
    let series = match date {
        Some(date) => {
            let d = ds
                .day_index(date)
                .ok_or_else(|| Error::UnknownDate(date.to_string()))?;
            ds.day_series(d)
        }
        None => FlowSeries::from_day_vector(
            mean_profile(&ds).as_slice(),
            ds.intervals_per_day(),
            ds.n_movements(),
        ),
    };
    let plan = optimal_segmentation(&series, s, &fit)?;
    let mut arguments = vec![
        arg("periods", s),
        arg("overflow_penalty", fit.overflow_penalty),
    ];
    arguments.push(arg("profile", date.unwrap_or("mean")));
    let mut w = writer("segment", g, inputs, arguments)?;
    w.write_json(
        "plan.json",
        &plan.to_document(ds.interval_minutes(), ds.movements()),
    )?;
    w.finish()
}

pub fn cmd_loocv(g: &Globals, components: Option<usize>) -> Result<Vec<Artifact>> {
    let Loaded { ds, inputs } = load_input(g)?;
    let n = components.unwrap_or(g.config.pls_components);
    let records = loocv(&ds, &g.config.split, n)?;
    let mut w = writer("loocv", g, inputs, vec![arg("components", n)])?;
    w.write_bytes("loocv.csv", &csv_bytes(|b| write_loocv_csv(&records, b))?)?;
    w.write_json("loocv_summary.json", &summarize(&records))?;
    w.finish()
}

/// Identifies a model bank: the data it was fitted on and what it covers.
#[derive(Serialize)]
struct BankKey<'a> {
    inputs: &'a [InputFile],
    weekdays: &'a Option<Vec<tod_core::flowdata::Weekday>>,
    held_out: Option<&'a str>,
    plan: &'a SegmentationPlan,
    window_halfwidth: usize,
    components: usize,
}

fn cached_bank(
    cache_dir: &Path,
    key: &BankKey<'_>,
    train: &FlowDataset,
    nominal: &SegmentationPlan,
    cfg: &EvalConfig,
) -> Result<PlsModelBank> {
    let digest = sha256_hex(&serde_json::to_vec(key)?);
    let path = cache_dir.join(format!("bank-{}.json", &digest[..16]));
    if path.is_file() {
        info!("using cached model bank {}", path.display());
        let doc: BankDocument = serde_json::from_slice(&fs::read(&path)?)?;
        return PlsModelBank::from_document(&doc);
    }
    let bank = build_model_bank(train, nominal, &cfg.controller, cfg.n_components)?;
    fs::create_dir_all(cache_dir)?;
    fs::write(&path, serde_json::to_vec(&bank.to_document())?)?;
    Ok(bank)
}

#[derive(Serialize)]
struct DayPlans<'a> {
    date: &'a str,
    predictive_seg: &'a PredictivePlan,
    predictive_seg_clock: Vec<String>,
    predictive_seg_params: &'a PredictivePlan,
    predictive_seg_params_clock: Vec<String>,
}

#[derive(Serialize)]
struct PlansReport<'a> {
    scope: &'a str,
    nominal: PlanDocument,
    days: Vec<DayPlans<'a>>,
}

#[derive(Serialize)]
struct DayTotals<'a> {
    date: &'a str,
    nominal: f64,
    predictive_seg: f64,
    predictive_seg_params: f64,
    lower_bound: f64,
    improvement_seg: f64,
    improvement_seg_params: f64,
    saturated: bool,
}

impl<'a> DayTotals<'a> {
    fn of(d: &'a DayDelay) -> Self {
        DayTotals {
            date: &d.date,
            nominal: d.nominal.total,
            predictive_seg: d.predictive_seg.total,
            predictive_seg_params: d.predictive_seg_params.total,
            lower_bound: d.lower_bound.total,
            improvement_seg: d.improvement_seg(),
            improvement_seg_params: d.improvement_seg_params(),
            saturated: d.nominal.saturated
                || d.predictive_seg.saturated
                || d.predictive_seg_params.saturated,
        }
    }
}

#[derive(Serialize)]
struct DelayReport<'a> {
    scope: &'a str,
    table: DelayTable,
    days: Vec<DayTotals<'a>>,
}

pub struct ControlArgs<'a> {
    /// A date, or `all` for every day with an in-sample model bank.
    pub date: &'a str,
    pub plan: Option<&'a Path>,
    pub halfwidth: Option<usize>,
    pub components: Option<usize>,
}

pub fn cmd_control(g: &Globals, args: &ControlArgs<'_>) -> Result<Vec<Artifact>> {
    let Loaded { ds, mut inputs } = load_input(g)?;
    let mut cfg = EvalConfig {
        n_periods: g.config.n_periods,
        fit: g.config.fit,
        controller: g.config.controller,
        n_components: args.components.unwrap_or(g.config.pls_components),
    };
    if let Some(h) = args.halfwidth {
        cfg.controller.window_halfwidth = h;
    }
    let ic = match &g.config.intersection {
        Some(ic) => {
            ic.validate(ds.n_movements())?;
            ic.clone()
        }
        None => IntersectionConfig::four_phase(ds.movements(), ds.interval_minutes())?,
    };
    let given_plan = match args.plan {
        Some(path) => {
            inputs.push(InputFile::read(path)?);
            let doc: PlanDocument = serde_json::from_slice(&fs::read(path)?)?;
            if doc.movements != ds.movements() {
                return Err(Error::Validation(
                    "plan movements differ from the dataset".into(),
                ));
            }
            Some(doc.into_plan()?)
        }
        None => None,
    };

    let all = args.date.eq_ignore_ascii_case("all");
    let (train, held_out, days): (FlowDataset, Option<&str>, Vec<usize>) = if all {
        (ds.clone(), None, (0..ds.n_days()).collect())
    } else {
        let d = ds
            .day_index(args.date)
            .ok_or_else(|| Error::UnknownDate(args.date.to_string()))?;
        (ds.without_day(d), Some(args.date), vec![d])
    };
    let nominal = match given_plan {
        Some(p) => p,
        None => nominal_plan(&train, cfg.n_periods, &cfg.fit)?,
    };
    let key = BankKey {
        inputs: &inputs,
        weekdays: &g.config.weekdays,
        held_out,
        plan: &nominal,
        window_halfwidth: cfg.controller.window_halfwidth,
        components: cfg.n_components,
    };
    let bank = cached_bank(&g.out_dir.join("cache"), &key, &train, &nominal, &cfg)?;

    let outcomes: Vec<DayOutcome> = days
        .par_iter()
        .map(|&d| {
            evaluate_day(
                &ds.days()[d].date,
                &ds.day_series(d),
                &nominal,
                &bank,
                &cfg,
                &ic,
            )
        })
        .collect::<Result<_>>()?;

    let scope = if all { "in_sample" } else { "held_out" };
    let mut arguments = vec![
        arg("date", args.date),
        arg("window_halfwidth", cfg.controller.window_halfwidth),
    ];
    arguments.push(arg("components", cfg.n_components));
    if let Some(p) = args.plan {
        arguments.push(arg("plan", p.display()));
    }
    let mut w = writer("control", g, inputs, arguments)?;

    let minutes = ds.interval_minutes();
    let clock = |p: &PredictivePlan| {
        p.switch_times
            .iter()
            .map(|&t| clock_label(t, minutes))
            .collect()
    };
    let plans = PlansReport {
        scope,
        nominal: nominal.to_document(minutes, ds.movements()),
        days: outcomes
            .iter()
            .map(|o| DayPlans {
                date: &o.date,
                predictive_seg: &o.predictive_seg,
                predictive_seg_clock: clock(&o.predictive_seg),
                predictive_seg_params: &o.predictive_seg_params,
                predictive_seg_params_clock: clock(&o.predictive_seg_params),
            })
            .collect(),
    };
    w.write_json("predictive_plans.json", &plans)?;

    let delays: Vec<DayDelay> = outcomes.iter().map(|o| o.delay.clone()).collect();
    let table = DelayTable::from_days(&delays);
    let table_csv = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        out.write_record(["scenario", "mean_delay_veh_hr"])?;
        for (name, v) in [
            ("nominal", table.nominal),
            ("predictive_seg", table.predictive_seg),
            ("predictive_seg_params", table.predictive_seg_params),
            ("lower_bound", table.lower_bound),
            ("improvement_seg", table.improvement_seg),
            ("improvement_seg_params", table.improvement_seg_params),
        ] {
            out.write_record([name.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    w.write_bytes("delay_table.csv", &table_csv)?;
    let days_csv = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        out.write_record([
            "date",
            "nominal",
            "predictive_seg",
            "predictive_seg_params",
            "lower_bound",
            "improvement_seg",
            "improvement_seg_params",
        ])?;
        for d in &delays {
            out.write_record([
                d.date.clone(),
                d.nominal.total.to_string(),
                d.predictive_seg.total.to_string(),
                d.predictive_seg_params.total.to_string(),
                d.lower_bound.total.to_string(),
                d.improvement_seg().to_string(),
                d.improvement_seg_params().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    w.write_bytes("delay_days.csv", &days_csv)?;
    w.write_bytes(
        "delay_rates.csv",
        &csv_bytes(|b| write_rates_csv(&delays, 1, b))?,
    )?;
    w.write_json(
        "delay_report.json",
        &DelayReport {
            scope,
            table,
            days: delays.iter().map(DayTotals::of).collect(),
        },
    )?;
    w.finish()
}
