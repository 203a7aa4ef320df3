use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use obfair::datagen::{gen_cont_y, gen_loan};
use obfair::experiment::{beta_sweep, evaluate as run_evaluation, sweep_tsv, Evaluation, Pipeline};
use obfair::io::{read_dataset, read_json, write_dataset, write_json, Sidecar};
use obfair::{Dataset, ExperimentConfig, Method};
use serde_json::json;

use crate::config::{Generator, PipelineConfig, TransformMethod};
use crate::error::CliError;

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn summary(path: &Path, ds: &Dataset) -> serde_json::Value {
    json!({
        "file": path,
        "rows": ds.nrows(),
        "sensitive": ds.b.col_names(),
        "features": ds.a.ncols(),
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

pub fn generate(mut cfg: PipelineConfig) -> Result<(), CliError> {
    cfg.apply_seed();
    let generator = cfg
        .generator
        .ok_or_else(|| CliError::new("Config", "no generator selected (use --generator loan|cont-y)"))?;
    let mut files = Vec::new();
    let mut datasets = Vec::new();
    let parts = match generator {
        Generator::Loan => vec![("loan", gen_loan(&cfg.loan)?)],
        Generator::ContY => {
            let d = gen_cont_y(&cfg.cont_y)?;
            vec![("train", d.train), ("test", d.test), ("cf", d.counterfactual_test)]
        }
    };
    for (name, ds) in &parts {
        let path = cfg.out.join(format!("{name}.csv"));
        files.extend(write_dataset(&path, ds)?);
        datasets.push(summary(&path, ds));
    }
    print_json(&json!({ "generator": generator, "datasets": datasets, "files": files }));
    Ok(())
}

/// Column roles from flags when `--sensitive` is given, else the sidecar
/// next to each CSV.
fn flag_sidecar(cfg: &PipelineConfig) -> Option<Sidecar> {
    if cfg.sensitive.is_empty() {
        return None;
    }
    Some(Sidecar {
        sensitive: cfg.sensitive.clone(),
        categorical: cfg.categorical.clone(),
        outcome: cfg.outcome.clone().unwrap_or_else(|| "Y".into()),
        outcome_kind: None,
        features: None,
        noise_file: None,
        scm: None,
    })
}

fn read_input(path: &Path, sidecar: Option<&Sidecar>) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::new("Io", format!("{}: no such file", path.display())));
    }
    Ok(read_dataset(path, sidecar)?)
}

struct Splits {
    train: Dataset,
    test: Option<Dataset>,
    counterfactual: Option<Dataset>,
}

fn load(cfg: &PipelineConfig, split: bool) -> Result<Splits, CliError> {
    let sidecar = flag_sidecar(cfg);
    if !cfg.input.is_empty() {
        let first = read_input(&cfg.input[0], sidecar.as_ref())?;
        let counterfactual = cfg
            .counterfactual
            .as_deref()
            .map(|p| read_input(p, sidecar.as_ref()))
            .transpose()?;
        let (train, test) = match cfg.input.get(1) {
            Some(p) => (first, Some(read_input(p, sidecar.as_ref())?)),
            None if split => {
                let (tr, te) = first.split(cfg.split, cfg.split_seed())?;
                (tr, Some(te))
            }
            None => (first, None),
        };
        return Ok(Splits {
            train,
            test,
            counterfactual,
        });
    }
    match cfg.generator {
        Some(Generator::Loan) => {
            let ds = gen_loan(&cfg.loan)?;
            let (train, test) = ds.split(cfg.split, cfg.split_seed())?;
            Ok(Splits {
                train,
                test: Some(test),
                counterfactual: None,
            })
        }
        Some(Generator::ContY) => {
            let d = gen_cont_y(&cfg.cont_y)?;
            Ok(Splits {
                train: d.train,
                test: Some(d.test),
                counterfactual: Some(d.counterfactual_test),
            })
        }
        None => Err(CliError::new("Config", "no --input given and no generator selected")),
    }
}

pub fn transform(mut cfg: PipelineConfig) -> Result<(), CliError> {
    cfg.apply_seed();
    let data = load(&cfg, false)?;
    let out = cfg.out.join("transformed.csv");
    let report_path = cfg.out.join("transform_report.json");
    let method = match cfg.transform {
        TransformMethod::None => {
            let mut ds = data.train.clone();
            ds.noise = None;
            ds.scm = None;
            write_dataset(&out, &ds)?;
            let report = json!({ "method": "none", "rows": ds.nrows(), "features": ds.a.col_names() });
            write_json(&report_path, &report)?;
            print_json(&json!({ "files": [out, report_path], "report": report }));
            return Ok(());
        }
        TransformMethod::Ob => Method::Ob2,
        TransformMethod::Sob => Method::Sob2,
    };
    let exp = ExperimentConfig {
        methods: vec![method],
        ..cfg.experiment.clone()
    };
    let (pipeline, features) = Pipeline::fit(&data.train, &exp)?;
    let processed = match cfg.transform {
        TransformMethod::Sob => features.sob,
        _ => features.ob,
    }
    .expect("pipeline fitted the requested transform");

    let to_dataset = |a, src: &Dataset| Dataset {
        a,
        b: src.b.clone(),
        categorical: src.categorical.clone(),
        y: src.y.clone(),
        outcome: src.outcome,
        noise: None,
        scm: None,
    };
    let mut files = write_dataset(&out, &to_dataset(processed, &data.train))?;
    if let Some(test) = &data.test {
        let f = pipeline.features(&test.a, &test.b)?;
        let a = match cfg.transform {
            TransformMethod::Sob => f.sob,
            _ => f.ob,
        }
        .expect("fitted");
        files.extend(write_dataset(
            &cfg.out.join("transformed_test.csv"),
            &to_dataset(a, test),
        )?);
    }
    // Inputs are always standardized first; the parameters are recorded so
    // the processed features can be mapped back.
    let report = json!({
        "method": cfg.transform,
        "diagnostics": pipeline.diagnostics,
        "standardization": { "a": pipeline.a_params, "b": pipeline.b_params },
        "encoding": pipeline.encoding,
    });
    write_json(&report_path, &report)?;
    files.push(report_path);
    print_json(&json!({ "files": files, "diagnostics": pipeline.diagnostics }));
    Ok(())
}

pub fn evaluate(mut cfg: PipelineConfig) -> Result<(), CliError> {
    cfg.apply_seed();
    let data = load(&cfg, true)?;
    let test = data.test.as_ref().expect("split requested");
    let ev = run_evaluation(&data.train, test, data.counterfactual.as_ref(), &cfg.experiment)?;
    let json_path = cfg.out.join("metrics.json");
    let tsv_path = cfg.out.join("metrics.tsv");
    write_json(&json_path, &ev)?;
    write_text(&tsv_path, &ev.to_tsv())?;
    print!("{}", ev.to_tsv());
    Ok(())
}

pub fn sweep(mut cfg: PipelineConfig) -> Result<(), CliError> {
    cfg.apply_seed();
    let rows = beta_sweep(&cfg.grid, &cfg.loan, &cfg.experiment, cfg.seeds)?;
    let path = cfg.out.join("sweep.tsv");
    let tsv = sweep_tsv(&rows);
    write_text(&path, &tsv)?;
    print_json(&json!({ "file": path, "rows": rows.len(), "grid": cfg.grid, "seeds": cfg.seeds }));
    Ok(())
}

pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut tsv = String::from("source\tmethod\tmetric\tvalue\n");
    for path in inputs {
        let ev: Evaluation = read_json(path)?;
        for m in &ev.methods {
            for e in &m.metrics.entries {
                let _ = writeln!(tsv, "{}\t{}\t{}\t{}", path.display(), m.method.name(), e.name, e.value);
            }
        }
    }
    match out {
        Some(p) => write_text(p, &tsv),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}
