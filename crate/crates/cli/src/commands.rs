use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use hrt_core::ablation::{ablate_step, AblationRow, DatasetSource};
use hrt_core::boost::{fit_boost, gamma_bound_check};
use hrt_core::dataset::{write_csv, Standardizer};
use hrt_core::hinge::{find_optimal_split, partition, select_split_with_runs, SplitOutcome};
use hrt_core::metrics::{boost_complexity, boost_inference_flops, hrt_complexity, hrt_inference_flops, Complexity};
use hrt_core::persist::AnyModel;
use hrt_core::{build_tree, evaluate, EvalReport, FlopsMode, FlopsReport, HingeKind, Subset};

use crate::config::{CsvArgs, HyperArgs, Resolver};
use crate::failure::{CliResult, Failure, EXIT_BOUND};
use crate::io::{self, LoadedData, ModelFile};
use crate::{Cli, Command, ModelKind, VariantArg};

pub fn run(cli: Cli) -> CliResult<u8> {
    let r = Resolver::new(cli.config.as_deref(), cli.seed, cli.flops_mode.clone())?;
    let json = cli.json.as_deref();
    match cli.command {
        Command::Train { data, kind, csv, hyper, out, diagnostics, standardize } => {
            train(&r, json, &data, kind, &csv, &hyper, out.as_deref(), diagnostics, standardize)
        }
        Command::Eval { model, data, csv } => eval(&r, json, &model, &data, &csv),
        Command::Predict { model, data, csv, out } => predict(&r, json, &model, &data, &csv, out.as_deref()),
        Command::AblateStep { data, mu, repeats, csv, hyper, diagnostics, out } => {
            ablate(&r, json, &data, &mu, repeats, &csv, &hyper, diagnostics, out.as_deref())
        }
        Command::BoostDiagnose { model } => boost_diagnose(json, &model),
        Command::TraceNode { data, variant, csv, hyper, out } => {
            trace_node(&r, json, &data, variant, &csv, &hyper, out.as_deref())
        }
        Command::Synth { spec, out } => synth(&r, json, &spec, out.as_deref()),
    }
}

fn load(r: &Resolver, data: &str, csv: &CsvArgs) -> CliResult<LoadedData> {
    io::load_data(data, &r.target(csv), r.header(csv))
}

/// The dataset argument as echoed in outputs: synthetic specs are written
/// out in full so defaulted keys are visible.
fn data_label(loaded: &LoadedData, raw: &str) -> String {
    loaded.synthetic.map(|s| s.to_string()).unwrap_or_else(|| raw.to_string())
}

fn csv_echo(r: &Resolver, loaded: &LoadedData, csv: &CsvArgs) -> Value {
    if loaded.synthetic.is_some() {
        Value::Null
    } else {
        json!({ "target": loaded.data.target_name(), "header": r.header(csv) })
    }
}

fn print_report(label: &str, e: &EvalReport) {
    let r2 = if e.r2_defined { format!("{:.6}", e.r2) } else { "undefined".into() };
    println!("{label}: n={} rmse={:.6} mae={:.6} r2={r2}", e.n, e.rmse, e.mae);
}

fn print_model_summary(c: &Complexity, flops: &FlopsReport, mode: FlopsMode) {
    match c {
        Complexity::Hrt { depth, leaves } => println!("complexity: depth={depth} leaves={leaves}"),
        Complexity::Boost { total_leaves, max_depth, stages } => {
            println!("complexity: stages={stages} total_leaves={total_leaves} max_depth={max_depth}")
        }
    }
    println!(
        "flops ({mode}): per_sample={:.3} parameters={}",
        flops.inference_flops_per_sample, flops.total_parameters
    );
}

fn summarize(model: &AnyModel, mode: FlopsMode) -> (Complexity, FlopsReport) {
    match model {
        AnyModel::Hrt(m) => (hrt_complexity(m), hrt_inference_flops(m, mode)),
        AnyModel::Boost(m) => (boost_complexity(m), boost_inference_flops(m, mode)),
    }
}

fn emit_json<T: Serialize>(json: Option<&Path>, command: &str, value: &T) -> CliResult<()> {
    match json {
        Some(p) => io::write_json(p, command, value),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn train(
    r: &Resolver,
    json: Option<&Path>,
    data: &str,
    kind: ModelKind,
    csv: &CsvArgs,
    hyper: &HyperArgs,
    out: Option<&Path>,
    diagnostics: bool,
    standardize_flag: bool,
) -> CliResult<u8> {
    let mode = r.flops_mode()?;
    let loaded = load(r, data, csv)?;
    let standardize = r.standardize(standardize_flag);
    let (train_data, standardizer) = if standardize {
        let s = Standardizer::fit(loaded.data.x());
        (s.apply_dataset(&loaded.data), Some(s))
    } else {
        (loaded.data.clone(), None)
    };

    let mut run_config = json!({
        "command": "train",
        "data": data_label(&loaded, data),
        "csv": csv_echo(r, &loaded, csv),
        "kind": match kind { ModelKind::Hrt => "hrt", ModelKind::Boost => "boost" },
        "seed": r.seed(),
        "standardize": standardize,
        "flops_mode": mode,
    });

    let mut diag = Value::Null;
    let model = match kind {
        ModelKind::Hrt => {
            let mut cfg = r.tree(Resolver::base_tree(loaded.function()), hyper)?;
            cfg.keep_traces = diagnostics;
            run_config["tree"] = serde_json::to_value(&cfg)?;
            let m = build_tree(train_data.x(), train_data.y(), &cfg)?;
            if diagnostics {
                diag = tree_diagnostics(&m.stats);
            }
            AnyModel::Hrt(m)
        }
        ModelKind::Boost => {
            let cfg = r.boost(hyper)?;
            run_config["boost"] = serde_json::to_value(&cfg)?;
            let m = fit_boost(&train_data, &cfg)?;
            if diagnostics {
                diag = boost_diagnostics(&m);
            }
            AnyModel::Boost(m)
        }
    };

    let pred: Vec<f64> = train_data.x().iter_rows().map(|x| model.predict(x)).collect();
    let report = evaluate(&pred, train_data.y())?;
    let (complexity, flops) = summarize(&model, mode);

    println!("config: {}", serde_json::to_string(&run_config)?);
    print_report("train", &report);
    print_model_summary(&complexity, &flops, mode);
    let stats = match &model {
        AnyModel::Hrt(m) => {
            let s = &m.stats;
            println!(
                "splits={} fallbacks={} fallback_rate={:.4}% avg_iters={:.3}",
                s.n_splits,
                s.n_fallbacks,
                100.0 * s.fallback_rate(),
                s.avg_iterations()
            );
            json!({
                "n_leaves": s.n_leaves,
                "depth": s.depth,
                "n_splits": s.n_splits,
                "n_fallbacks": s.n_fallbacks,
                "fallback_rate": s.fallback_rate(),
                "avg_iterations": s.avg_iterations(),
            })
        }
        AnyModel::Boost(m) => {
            let kept = m.stage_retained.iter().filter(|&&k| k).count();
            println!("stages={} retained={kept} final_loss={:.6e}", m.stages(), m.loss_trace.last().copied().unwrap_or(0.0));
            json!({ "stages": m.stages(), "retained": kept, "loss_trace": m.loss_trace, "gamma_trace": m.gamma_trace })
        }
    };
    if diagnostics {
        print_diagnostics(&diag);
    }

    if let Some(path) = out {
        ModelFile { model, standardizer }.save(path, &run_config)?;
        info!("model written to {}", path.display());
    }
    emit_json(
        json,
        "train",
        &json!({
            "config": run_config,
            "train": report,
            "complexity": complexity,
            "flops": flops,
            "stats": stats,
            "diagnostics": diag,
        }),
    )?;
    Ok(0)
}

fn tree_diagnostics(stats: &hrt_core::TrainStats) -> Value {
    let nodes: Vec<Value> = stats
        .per_node_traces
        .iter()
        .flatten()
        .map(|t| {
            json!({
                "depth": t.depth,
                "n": t.n,
                "kind": t.kind,
                "converged": t.converged,
                "used_fallback": t.used_fallback,
                "iterations": t.objective_trace.len().saturating_sub(1),
                "v_initial": t.objective_trace.first(),
                "v_final": t.objective_trace.last(),
            })
        })
        .collect();
    json!({ "nodes": nodes })
}

fn boost_diagnostics(m: &hrt_core::BoostModel) -> Value {
    let stages: Vec<Value> = (0..m.stages())
        .map(|i| {
            json!({
                "stage": i + 1,
                "retained": m.stage_retained[i],
                "gamma": m.gamma_trace.get(i),
                "loss": m.loss_trace.get(i + 1),
            })
        })
        .collect();
    json!({ "stages": stages })
}

fn print_diagnostics(diag: &Value) {
    let fmt = |v: &Value| match v.as_f64() {
        Some(x) => format!("{x:.6e}"),
        None => "-".into(),
    };
    if let Some(nodes) = diag.get("nodes").and_then(Value::as_array) {
        println!("depth,n,kind,converged,fallback,iterations,v_initial,v_final");
        for n in nodes {
            println!(
                "{},{},{},{},{},{},{},{}",
                n["depth"],
                n["n"],
                n["kind"].as_str().unwrap_or("-"),
                n["converged"],
                n["used_fallback"],
                n["iterations"],
                fmt(&n["v_initial"]),
                fmt(&n["v_final"])
            );
        }
    }
    if let Some(stages) = diag.get("stages").and_then(Value::as_array) {
        println!("stage,retained,gamma,loss");
        for s in stages {
            println!("{},{},{},{}", s["stage"], s["retained"], fmt(&s["gamma"]), fmt(&s["loss"]));
        }
    }
}

fn eval(r: &Resolver, json: Option<&Path>, model_path: &Path, data: &str, csv: &CsvArgs) -> CliResult<u8> {
    let mode = r.flops_mode()?;
    let file = ModelFile::load(model_path)?;
    let loaded = load(r, data, csv)?;
    let pred = file.predict(loaded.data.x())?;
    let report = evaluate(&pred, loaded.data.y())?;
    let (complexity, flops) = summarize(&file.model, mode);
    let run_config = json!({
        "command": "eval",
        "model": model_path,
        "data": data_label(&loaded, data),
        "csv": csv_echo(r, &loaded, csv),
        "flops_mode": mode,
    });
    println!("config: {}", serde_json::to_string(&run_config)?);
    print_report("eval", &report);
    print_model_summary(&complexity, &flops, mode);
    emit_json(json, "eval", &json!({ "config": run_config, "eval": report, "complexity": complexity, "flops": flops }))?;
    Ok(0)
}

fn predict(
    r: &Resolver,
    json: Option<&Path>,
    model_path: &Path,
    data: &str,
    csv: &CsvArgs,
    out: Option<&Path>,
) -> CliResult<u8> {
    let file = ModelFile::load(model_path)?;
    let x = match r.explicit_target(csv) {
        Some(target) => io::load_data(data, &target, r.header(csv))?.data.x().clone(),
        None => io::load_features(data, r.header(csv))?,
    };
    let pred = file.predict(&x)?;
    let mut w = io::output(out)?;
    writeln!(w, "prediction")?;
    for p in &pred {
        writeln!(w, "{p:?}")?;
    }
    w.flush()?;
    let run_config = json!({
        "command": "predict",
        "model": model_path,
        "data": data,
        "target": csv.target.as_deref().or(r.file.target.as_deref()),
        "header": r.header(csv),
        "out": out,
    });
    emit_json(json, "predict", &json!({ "config": run_config, "n": pred.len() }))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn ablate(
    r: &Resolver,
    json: Option<&Path>,
    data: &str,
    mu: &[String],
    repeats: Option<usize>,
    csv: &CsvArgs,
    hyper: &HyperArgs,
    diagnostics: bool,
    out: Option<&Path>,
) -> CliResult<u8> {
    if hyper.step.is_some() {
        return Err(Failure::flag("--step", "ablate-step takes its step sizes from --mu"));
    }
    let steps = r.mu_list(mu)?;
    let repeats = r.repeats(repeats)?;
    let loaded = load(r, data, csv)?;
    let base = r.tree(Resolver::base_tree(loaded.function()), hyper)?;
    let source = match loaded.synthetic {
        Some(spec) => DatasetSource::Synthetic(spec),
        None => DatasetSource::Fixed(loaded.data.clone()),
    };
    let rows = ablate_step(&source, &base, &steps, repeats, r.seed())?;

    let run_config = json!({
        "command": "ablate-step",
        "data": data_label(&loaded, data),
        "csv": csv_echo(r, &loaded, csv),
        "mu": steps.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "repeats": repeats,
        "seed": r.seed(),
        "tree": base,
    });
    println!("config: {}", serde_json::to_string(&run_config)?);
    println!("# fit time covers tree construction only (no data generation, splitting or evaluation)");
    println!(
        "{:>6} {:>10} {:>8} {:>10} {:>11} {:>10} {:>8} {:>16}",
        "mu", "rmse", "leaves", "avg_iters", "fit_time_s", "fallbacks", "splits", "fallback_rate_%"
    );
    for row in &rows {
        println!(
            "{:>6} {:>10.6} {:>8.1} {:>10.2} {:>11.4} {:>10.2} {:>8.2} {:>16.2}",
            row.mu,
            row.rmse,
            row.leaves,
            row.avg_iters,
            row.fit_time_s,
            row.fallbacks,
            row.splits,
            100.0 * row.fallback_rate
        );
        if diagnostics {
            for run in &row.runs {
                println!(
                    "    seed={} rmse={:.6} leaves={} avg_iters={:.2} fit_time_s={:.4} fallbacks={} splits={}",
                    run.seed, run.rmse, run.leaves, run.avg_iters, run.fit_time_s, run.fallbacks, run.splits
                );
            }
        }
    }
    if let Some(path) = out {
        write_ablation_csv(path, &rows)?;
    }
    emit_json(json, "ablate-step", &json!({ "config": run_config, "rows": rows }))?;
    Ok(0)
}

fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> CliResult<()> {
    let mut w = io::output(Some(path))?;
    writeln!(w, "mu,rmse,leaves,avg_iters,fit_time_s,fallbacks,splits,fallback_rate")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.mu, r.rmse, r.leaves, r.avg_iters, r.fit_time_s, r.fallbacks, r.splits, r.fallback_rate
        )?;
    }
    w.flush()?;
    Ok(())
}

fn boost_diagnose(json: Option<&Path>, model_path: &Path) -> CliResult<u8> {
    let file = ModelFile::load(model_path)?;
    let AnyModel::Boost(model) = file.model else {
        return Err(Failure::config(format!("{}: not a boosted model", model_path.display())));
    };
    if model.stages() > 0 && model.gamma_trace.is_empty() {
        return Err(Failure::config(format!(
            "{}: the model was trained without recording per-stage coefficients",
            model_path.display()
        )));
    }
    let rows = gamma_bound_check(&model);

    let l0 = model.loss_trace.first().copied().unwrap_or(0.0);
    let product: f64 = model.gamma_trace.iter().map(|g| 1.0 - model.eta * g.max(0.0)).product();
    let final_loss = model.loss_trace.last().copied().unwrap_or(0.0);
    let product_rhs = l0 * product + 1e-9 * l0;
    let product_ok = final_loss <= product_rhs;
    let all_ok = product_ok && rows.iter().all(|r| r.ok);

    println!("stage,gamma,loss,bound,ok");
    for row in &rows {
        println!("{},{:.6e},{:.6e},{:.6e},{}", row.stage, row.gamma, row.lhs, row.rhs, row.ok);
    }
    println!("product bound: final_loss={final_loss:.6e} rhs={product_rhs:.6e} ok={product_ok}");
    emit_json(
        json,
        "boost-diagnose",
        &json!({
            "config": { "command": "boost-diagnose", "model": model_path },
            "rows": rows,
            "product_bound": { "final_loss": final_loss, "rhs": product_rhs, "ok": product_ok },
            "all_ok": all_ok,
        }),
    )?;
    if all_ok {
        Ok(0)
    } else {
        eprintln!("error: risk-reduction bound violated");
        Ok(EXIT_BOUND)
    }
}

fn trace_node(
    r: &Resolver,
    json: Option<&Path>,
    data: &str,
    variant: VariantArg,
    csv: &CsvArgs,
    hyper: &HyperArgs,
    out: Option<&Path>,
) -> CliResult<u8> {
    let loaded = load(r, data, csv)?;
    let cfg = r.tree(Resolver::base_tree(loaded.function()), hyper)?.split;
    let (x, y) = (loaded.data.x(), loaded.data.y());
    let rows: Vec<usize> = (0..x.rows()).collect();
    let subset = Subset::new(x, y, &rows)?;
    let outcome: SplitOutcome = match variant {
        VariantArg::Best => select_split_with_runs(&subset, &cfg)?.chosen,
        VariantArg::Max => find_optimal_split(&subset, HingeKind::Max, &cfg)?,
        VariantArg::Min => find_optimal_split(&subset, HingeKind::Min, &cfg)?,
    };

    // Row k pairs V after k updates with the partition that state induces.
    let (f1, f2) = partition(&subset, &outcome.theta1, &outcome.theta2, outcome.kind);
    let final_sizes = (f1.len(), f2.len());
    let mut w = io::output(out)?;
    writeln!(w, "iteration,V,mu,n1,n2")?;
    for (k, v) in outcome.objective_trace.iter().enumerate() {
        let mu = if k == 0 { String::new() } else { format!("{:?}", outcome.step_sizes[k - 1]) };
        let (n1, n2) = outcome.partition_sizes.get(k).copied().unwrap_or(final_sizes);
        writeln!(w, "{k},{v:?},{mu},{n1},{n2}")?;
    }
    w.flush()?;
    info!(
        "variant={:?} converged={} iterations={}",
        outcome.kind, outcome.converged, outcome.iterations
    );

    let run_config = json!({
        "command": "trace-node",
        "data": data_label(&loaded, data),
        "csv": csv_echo(r, &loaded, csv),
        "variant": format!("{variant:?}").to_lowercase(),
        "split": cfg,
    });
    emit_json(
        json,
        "trace-node",
        &json!({
            "config": run_config,
            "kind": outcome.kind,
            "converged": outcome.converged,
            "iterations": outcome.iterations,
            "objective_trace": outcome.objective_trace,
            "step_sizes": outcome.step_sizes,
            "partition_sizes": outcome.partition_sizes,
        }),
    )?;
    Ok(0)
}

fn synth(r: &Resolver, json: Option<&Path>, spec: &str, out: Option<&Path>) -> CliResult<u8> {
    let mut parsed = match io::synthetic_spec(spec)? {
        Some(s) => s,
        None => return Err(Failure::config(format!("`{spec}` is not a synthetic spec"))),
    };
    if r.seed_was_given() {
        parsed = parsed.with_seed(r.seed());
    }
    let data = parsed.generate()?;
    let mut w = io::output(out)?;
    write_csv(&data, &mut w)?;
    w.flush()?;
    emit_json(
        json,
        "synth",
        &json!({ "config": { "command": "synth", "spec": parsed.to_string(), "out": out.map(PathBuf::from) }, "n": data.n(), "d": data.d() }),
    )?;
    Ok(0)
}
