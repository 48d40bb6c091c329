use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::Value;
use tvnet::changepoint::{detect_on_curve, DetectOptions};
use tvnet::clime::{classify, stability_select_lambda, tv_clime_at, Region, StabilityOptions};
use tvnet::eval::{
    graph_distance_matrix, roc_auc, roc_csv, roc_sweep, run_cp_experiment, CpExperiment, RocOptions,
};
use tvnet::panel::write_matrix_csv;
use tvnet::rates::{rate_calculator, RateTarget};
use tvnet::{
    build_sim_design, scan, support, ChangePointReport, GraphEstimate, KernelSpec, ScanCurve,
    SimDesign, Threshold, TimeSeriesPanel,
};

use crate::config::{Auto, Input, Lambda, PipelineConfig, SimSettings};
use crate::svg::{line_plot, Series};

struct Loaded {
    panel: TimeSeriesPanel,
    design: Option<SimDesign>,
}

fn load(cfg: &PipelineConfig) -> anyhow::Result<Loaded> {
    match &cfg.input {
        Input::Csv(path) => {
            let file =
                fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let panel = TimeSeriesPanel::read_csv(file)
                .with_context(|| format!("reading panel {}", path.display()))?;
            Ok(Loaded {
                panel,
                design: None,
            })
        }
        Input::Simulated(sim) => {
            let design = design_for(sim, cfg.seed)?;
            Ok(Loaded {
                panel: design.simulate_panel()?,
                design: Some(design),
            })
        }
    }
}

fn design_for(sim: &SimSettings, seed: u64) -> anyhow::Result<SimDesign> {
    Ok(build_sim_design(sim.n, sim.p, sim.delta0, seed)?)
}

fn out_dir(cfg: &PipelineConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(&cfg.output_dir)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn time_tag(t: f64) -> String {
    format!("t{t:.3}")
}

pub fn simulate(cfg: &PipelineConfig) -> anyhow::Result<String> {
    let Input::Simulated(sim) = &cfg.input else {
        bail!("simulate needs simulation settings (--n, --p, --delta0), not a CSV input");
    };
    let design = design_for(sim, cfg.seed)?;
    let panel = design.simulate_panel()?;
    let dir = out_dir(cfg)?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    write(dir, "panel.csv", buf)?;
    write(dir, "design.json", to_json(&design)?)?;
    Ok(format!(
        "simulated {} x {} panel, change points {:?}",
        panel.n(),
        panel.p(),
        design.change_points
    ))
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    config: &'a PipelineConfig,
    h: f64,
    report: &'a ChangePointReport,
}

fn run_detection(
    cfg: &PipelineConfig,
    panel: &TimeSeriesPanel,
) -> anyhow::Result<(ScanCurve, ChangePointReport)> {
    let h = cfg.resolved_h(panel.n());
    let curve = scan(panel, h)?;
    let nu = match cfg.nu {
        Auto::Auto => Threshold::Auto,
        Auto::Value(v) => Threshold::Fixed(v),
    };
    let opts = DetectOptions {
        exclusion_factor: cfg.exclusion_factor,
    };
    let report = detect_on_curve(&curve, nu, &opts);
    report.check_invariants()?;
    Ok((curve, report))
}

pub fn detect(cfg: &PipelineConfig) -> anyhow::Result<String> {
    let data = load(cfg)?;
    cfg.validate(data.panel.n())?;
    let (curve, report) = run_detection(cfg, &data.panel)?;
    let dir = out_dir(cfg)?;
    let out = DetectOutput {
        config: cfg,
        h: curve.h,
        report: &report,
    };
    write(dir, "report.json", to_json(&out)?)?;
    write(dir, "scan.csv", curve.to_csv())?;
    if cfg.plots {
        let pts: Vec<(f64, f64)> = curve
            .grid
            .iter()
            .zip(&curve.scores)
            .map(|(&s, &v)| (s as f64, v))
            .collect();
        let top = curve.scores.iter().copied().fold(0.0, f64::max);
        let marks: Vec<f64> = report.indices().iter().map(|&i| i as f64).collect();
        let svg = line_plot(
            &format!("max-norm scan, h = {:.3}", curve.h),
            (0.0, curve.n as f64),
            (0.0, top),
            &[Series {
                label: "scan".into(),
                points: &pts,
            }],
            &marks,
        );
        write(dir, "scan.svg", svg)?;
    }
    Ok(format!(
        "detected {} change point(s) at {:?}",
        report.iota_hat,
        report.indices()
    ))
}

/// Accepts either a `detect` output document or a bare report.
fn read_report(path: &Path) -> anyhow::Result<ChangePointReport> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text)?;
    let inner = v.get_mut("report").map(Value::take).unwrap_or(v);
    serde_json::from_value(inner).with_context(|| format!("parsing report {}", path.display()))
}

fn report_for(cfg: &PipelineConfig, panel: &TimeSeriesPanel) -> anyhow::Result<ChangePointReport> {
    let report = match &cfg.report {
        Some(path) => read_report(path)?,
        None => run_detection(cfg, panel)?.1,
    };
    if report.n != panel.n() {
        bail!(
            "report is for n = {} but the panel has n = {}",
            report.n,
            panel.n()
        );
    }
    Ok(report)
}

#[derive(Serialize)]
struct LambdaChoice {
    lambda: f64,
    cap_exceeded: Option<bool>,
    instability: Option<Vec<f64>>,
}

fn choose_lambda(
    cfg: &PipelineConfig,
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
) -> tvnet::Result<LambdaChoice> {
    match cfg.lambda {
        Lambda::Value(l) => Ok(LambdaChoice {
            lambda: l,
            cap_exceeded: None,
            instability: None,
        }),
        Lambda::Stability => {
            let opts = StabilityOptions {
                n_subsamples: cfg.n_subsamples,
                subsample_fraction: cfg.subsample_fraction,
                instability_cap: cfg.instability_cap,
                seed: cfg.seed,
            };
            let sel = stability_select_lambda(panel, t, spec, &cfg.lambda_grid, &opts)?;
            Ok(LambdaChoice {
                lambda: sel.lambda,
                cap_exceeded: Some(sel.cap_exceeded),
                instability: Some(sel.instability),
            })
        }
    }
}

#[derive(Serialize)]
struct EstimatePoint {
    t: f64,
    region: &'static str,
    lambda: Option<LambdaChoice>,
    reliable: Option<bool>,
    edges: Option<usize>,
    feasibility_gap: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    config: &'a PipelineConfig,
    change_points: Vec<usize>,
    points: Vec<EstimatePoint>,
    /// Pairwise edge-difference counts between the graphs at successful grid points.
    distance_times: Vec<f64>,
    distances: Vec<Vec<usize>>,
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Smooth => "smooth",
        Region::Boundary => "boundary",
        Region::Unreliable => "unreliable",
    }
}

pub fn estimate(cfg: &PipelineConfig) -> anyhow::Result<String> {
    let data = load(cfg)?;
    let panel = &data.panel;
    cfg.validate(panel.n())?;
    let report = report_for(cfg, panel)?;
    let spec = KernelSpec::new(cfg.kernel, cfg.b)?;
    let dir = out_dir(cfg)?;

    let mut points = Vec::new();
    let mut graphs: Vec<GraphEstimate> = Vec::new();
    let mut first_error: Option<(f64, tvnet::Error)> = None;
    for &t in &cfg.grid {
        let region = region_name(classify(t, panel.n(), cfg.b, &report));
        let fitted = choose_lambda(cfg, panel, t, &spec).and_then(|choice| {
            tv_clime_at(panel, t, &spec, choice.lambda, &report).map(|est| (choice, est))
        });
        match fitted {
            Ok((choice, est)) => {
                let tag = time_tag(t);
                let graph = support(&est, cfg.u);
                let mut buf = Vec::new();
                write_matrix_csv(&est.omega, &mut buf)?;
                write(dir, &format!("precision_{tag}.csv"), buf)?;
                write(
                    dir,
                    &format!("precision_{tag}.json"),
                    est.sidecar_json() + "\n",
                )?;
                let mut buf = Vec::new();
                graph.write_edge_list(&est.omega, &mut buf)?;
                write(dir, &format!("edges_{tag}.csv"), buf)?;
                let mut buf = Vec::new();
                graph.write_adjacency_csv(&mut buf)?;
                write(dir, &format!("adjacency_{tag}.csv"), buf)?;
                points.push(EstimatePoint {
                    t,
                    region,
                    lambda: Some(choice),
                    reliable: Some(est.reliable),
                    edges: Some(graph.edges().len()),
                    feasibility_gap: Some(est.feasibility_gap),
                    error: None,
                });
                graphs.push(graph);
            }
            Err(e) => {
                eprintln!("t = {t}: {e}");
                points.push(EstimatePoint {
                    t,
                    region,
                    lambda: None,
                    reliable: None,
                    edges: None,
                    feasibility_gap: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert((t, e));
            }
        }
    }
    let distances = graph_distance_matrix(&graphs)?;
    let out = EstimateOutput {
        config: cfg,
        change_points: report.indices(),
        distance_times: graphs.iter().map(|g| g.t).collect(),
        distances,
        points,
    };
    write(dir, "estimate.json", to_json(&out)?)?;
    if let Some((t, e)) = first_error {
        return Err(anyhow::Error::new(e).context(format!("estimation failed at t = {t}")));
    }
    Ok(format!(
        "estimated {} graph(s), change points {:?}",
        graphs.len(),
        report.indices()
    ))
}

#[derive(Serialize)]
struct CpRow {
    p: usize,
    delta0: f64,
    h: f64,
    mean_count: f64,
    mean_abs_distance: f64,
    replications: usize,
}

#[derive(Serialize)]
struct RocRow {
    t: f64,
    lambda: f64,
    reliable: bool,
    auc: f64,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config: &'a PipelineConfig,
    true_change_points: Vec<usize>,
    changepoints: Vec<CpRow>,
    roc: Vec<RocRow>,
}

pub fn evaluate(cfg: &PipelineConfig) -> anyhow::Result<String> {
    let Input::Simulated(sim) = &cfg.input else {
        bail!("evaluate needs a simulated input so the truth is known");
    };
    let data = load(cfg)?;
    let panel = &data.panel;
    let design = data.design.expect("simulated input carries its design");
    cfg.validate(panel.n())?;
    let h = cfg.resolved_h(panel.n());
    let dir = out_dir(cfg)?;

    let mut rows = Vec::new();
    if cfg.replications > 0 {
        let (summary, _) = run_cp_experiment(&CpExperiment {
            n: sim.n,
            p: sim.p,
            delta0: sim.delta0,
            h,
            replications: cfg.replications,
            seed: cfg.seed,
            exclusion_factor: cfg.exclusion_factor,
        })?;
        rows.push(CpRow {
            p: sim.p,
            delta0: sim.delta0,
            h,
            mean_count: summary.mean_count,
            mean_abs_distance: summary.mean_abs_distance,
            replications: summary.replications,
        });
    }

    let report = report_for(cfg, panel)?;
    let spec = KernelSpec::new(cfg.kernel, cfg.b)?;
    let opts = RocOptions {
        include_diagonal: cfg.include_diagonal,
        ..RocOptions::default()
    };
    let mut roc_rows = Vec::new();
    let mut csv = String::new();
    let mut curves = Vec::new();
    for &t in &cfg.grid {
        let lambda = choose_lambda(cfg, panel, t, &spec)?.lambda;
        let pts = roc_sweep(
            panel,
            t,
            &spec,
            lambda,
            &cfg.u_grid,
            &design,
            &report,
            &opts,
        )?;
        let body = roc_csv(&pts);
        if csv.is_empty() {
            csv.push_str(&body);
        } else {
            csv.extend(body.lines().skip(1).map(|l| format!("{l}\n")));
        }
        roc_rows.push(RocRow {
            t,
            lambda,
            reliable: classify(t, panel.n(), cfg.b, &report) != Region::Unreliable,
            auc: roc_auc(&pts),
        });
        let mut xy: Vec<(f64, f64)> = pts
            .iter()
            .map(|r| (r.one_minus_specificity, r.sensitivity))
            .collect();
        xy.push((0.0, 0.0));
        xy.push((1.0, 1.0));
        xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        curves.push((t, xy));
    }
    write(dir, "roc.csv", csv)?;
    if cfg.plots {
        let series: Vec<Series<'_>> = curves
            .iter()
            .map(|(t, xy)| Series {
                label: format!("t = {t:.2}"),
                points: xy,
            })
            .collect();
        let svg = line_plot(
            "ROC, sensitivity vs 1 - specificity",
            (0.0, 1.0),
            (0.0, 1.0),
            &series,
            &[],
        );
        write(dir, "roc.svg", svg)?;
    }
    let out = EvaluateOutput {
        config: cfg,
        true_change_points: design.change_points.clone(),
        changepoints: rows,
        roc: roc_rows,
    };
    write(dir, "tables.json", to_json(&out)?)?;
    let cp = out
        .changepoints
        .first()
        .map(|r| {
            format!(
                "mean count {:.3}, mean distance {:.3}; ",
                r.mean_count, r.mean_abs_distance
            )
        })
        .unwrap_or_default();
    let aucs: Vec<String> = out.roc.iter().map(|r| format!("{:.3}", r.auc)).collect();
    Ok(format!("{cp}AUC per grid point [{}]", aucs.join(", ")))
}

#[derive(Serialize)]
struct RatesOutput {
    inputs: tvnet::rates::RateInputs,
    varpi: f64,
    j: f64,
    rates: serde_json::Map<String, Value>,
}

pub fn rates(cfg: &PipelineConfig) -> anyhow::Result<String> {
    cfg.rates.validate()?;
    let mut map = serde_json::Map::new();
    for target in RateTarget::ALL {
        let v = rate_calculator(&cfg.rates, target)?;
        map.insert(target.name().to_string(), Value::from(v));
    }
    let out = RatesOutput {
        inputs: cfg.rates,
        varpi: cfg.rates.varpi(cfg.rates.n as f64),
        j: cfg.rates.j(),
        rates: map,
    };
    let text = to_json(&out)?;
    let dir = out_dir(cfg)?;
    write(dir, "rates.json", &text)?;
    Ok(text.trim_end().to_string())
}

/// simulate, detect, estimate and, for simulated input, evaluate, all into one directory.
pub fn pipeline(cfg: &PipelineConfig) -> anyhow::Result<String> {
    let mut lines = Vec::new();
    let simulated = matches!(cfg.input, Input::Simulated(_));
    if simulated {
        lines.push(simulate(cfg)?);
    }
    lines.push(detect(cfg)?);
    lines.push(estimate(cfg)?);
    if simulated {
        lines.push(evaluate(cfg)?);
    }
    Ok(lines.join("\n"))
}
