//! The five pipeline stages. Each reads only the artifacts written by the
//! stages before it and checks their provenance against the current
//! configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use romcp::conformal::{
    calibrate, calibration_residuals, fit_method, Calibration, CpData, CpMethod, FittedMethod, UqTarget,
    CALIBRATION_KIND,
};
use romcp::container::sha256_file;
use romcp::dataset::{filter_by_mass, generate_dataset, Dataset, DATASET_KIND, LIQUID_WATER_THRESHOLD};
use romcp::metrics::{
    empirical_coverage, render_line_chart, write_coverage_csv, write_file, write_summary_csv, write_width_csv, Line,
    Panel, WidthKind, WidthSeries,
};
use romcp::rom::{RomModel, MODEL_KIND};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_container, Layout, Provenance, SplitRecord};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{level_label, method_label, render_report, target_label};

/// Contents of `provenance.json` in an evaluation directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub provenance: Provenance,
    pub on_calibration: bool,
    /// SHA-256 of each output file, by file name.
    pub outputs: BTreeMap<String, String>,
}

fn reset_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn generate(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let start = Instant::now();
    let ds = generate_dataset(&cfg.generator(), cfg.dataset.bin_grid, cfg.dataset.time_grid)?;
    let prov = Provenance::new("generate", cfg, cfg.dataset_digest());
    let path = layout.dataset();
    ds.to_container(prov.to_json()).write(&path)?;
    let kept = filter_by_mass(&ds.trajectories).len();
    println!(
        "generated {} trajectories ({} steps x {} bins) in {:.1?} -> {}",
        ds.len(),
        ds.time_grid.n_steps,
        ds.bin_grid.n_bins,
        start.elapsed(),
        path.display()
    );
    println!(
        "liquid-water filter (initial mass >= {LIQUID_WATER_THRESHOLD:e}): kept {kept}, dropped {}",
        ds.len() - kept
    );
    Ok(())
}

fn load_dataset(cfg: &RunConfig, layout: &Layout) -> Result<(Dataset, String), CliError> {
    let path = layout.dataset();
    let (c, sha) = read_container(&path, DATASET_KIND, "generate")?;
    Provenance::of(&c, &path)?.check(&path, &cfg.dataset_digest(), &[], "generate")?;
    Ok((Dataset::from_container(&c)?, sha))
}

fn log_sindy(label: &str, model: &RomModel) -> Result<(), CliError> {
    let sindy = model.sindy()?;
    let names: Vec<String> = (1..=model.shape_dim()).map(|i| format!("z{i}")).collect();
    let support: usize = sindy.support().iter().flatten().filter(|s| **s).count();
    log::info!(
        "{label}: SINDy support {support} of {} terms (z{} is the scaled mass)",
        sindy.coefficients.len(),
        model.shape_dim() + 1
    );
    for eq in sindy.equations(&names) {
        log::info!("{label}:   {eq}");
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let (ds, ds_sha) = load_dataset(cfg, layout)?;
    for method in cfg.methods() {
        let start = Instant::now();
        let scheme = method.default_scheme();
        let data = CpData::prepare(&ds, scheme, cfg.seed)?;
        let fitted = fit_method(&data, method, &cfg.rom)?;
        log_sindy(&method.to_string(), &fitted.model)?;
        for (i, m) in fitted.fold_models.iter().enumerate() {
            log::debug!("{method} fold {} trained", i + 1);
            if log::log_enabled!(log::Level::Debug) {
                log_sindy(&format!("{method} fold {}", i + 1), m)?;
            }
        }

        let path = layout.model(method);
        reset_dir(path.parent().expect("model path has a parent"))?;
        let mut prov = Provenance::new("train", cfg, cfg.train_digest()).with_input("dataset", &ds_sha);
        prov.split = Some(SplitRecord {
            scheme,
            kept: data.kept.clone(),
            split: data.split.clone(),
        });
        fitted.model.to_container(prov.to_json())?.write(&path)?;
        let fold_prov = Provenance::new("train", cfg, cfg.train_digest()).with_input("dataset", &ds_sha);
        for (i, m) in fitted.fold_models.iter().enumerate() {
            m.to_container(fold_prov.to_json())?.write(layout.fold_model(method, i + 1))?;
        }
        println!(
            "{method}: trained {} model(s) on {} training samples in {:.1?}",
            1 + fitted.fold_models.len(),
            data.split.train.len(),
            start.elapsed()
        );
    }
    Ok(())
}

struct LoadedMethod {
    fitted: FittedMethod,
    data: CpData,
    /// SHA-256 of the model files by role (`model`, `fold_NN`).
    shas: BTreeMap<String, String>,
}

fn load_model(
    cfg: &RunConfig,
    path: &Path,
    ds_sha: &str,
) -> Result<(RomModel, Provenance, String), CliError> {
    let (c, sha) = read_container(path, MODEL_KIND, "train")?;
    let prov = Provenance::of(&c, path)?;
    prov.check(path, &cfg.train_digest(), &[("dataset", ds_sha)], "train")?;
    Ok((RomModel::from_container(&c)?, prov, sha))
}

fn load_method(
    cfg: &RunConfig,
    layout: &Layout,
    ds: &Dataset,
    ds_sha: &str,
    method: CpMethod,
    with_folds: bool,
) -> Result<LoadedMethod, CliError> {
    let path = layout.model(method);
    let (model, prov, sha) = load_model(cfg, &path, ds_sha)?;
    let record = prov
        .split
        .ok_or_else(|| CliError::Data(format!("{} does not record its data split", path.display())))?;
    let data = CpData::with_split(ds, record.kept, record.split)?;
    if data.mass_scale.to_bits() != model.mass_scale.to_bits() {
        return Err(CliError::stale(path.display(), "train"));
    }
    let mut shas = BTreeMap::from([("model".to_string(), sha)]);
    let mut fold_models = Vec::new();
    if let (CpMethod::CvPlus { k }, true) = (method, with_folds) {
        for f in 1..=k {
            let (m, _, s) = load_model(cfg, &layout.fold_model(method, f), ds_sha)?;
            fold_models.push(m);
            shas.insert(format!("fold_{f:02}"), s);
        }
    }
    Ok(LoadedMethod {
        fitted: FittedMethod {
            method,
            model,
            fold_models,
        },
        data,
        shas,
    })
}

pub fn calibrate_all(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let (ds, ds_sha) = load_dataset(cfg, layout)?;
    for method in cfg.methods() {
        let loaded = load_method(cfg, layout, &ds, &ds_sha, method, true)?;
        let mut prov = Provenance::new("calibrate", cfg, cfg.calibrate_digest()).with_input("dataset", &ds_sha);
        for (role, sha) in &loaded.shas {
            prov = prov.with_input(role.clone(), sha.clone());
        }
        reset_dir(&layout.calibration_dir(method))?;
        for &target in &cfg.cp.targets {
            let residuals = calibration_residuals(&loaded.fitted, &loaded.data, target)?;
            for &alpha in &cfg.cp.alphas {
                let cal = calibrate(&residuals, method, alpha, loaded.data.time_grid)?;
                cal.to_container(prov.to_json()).write(layout.calibration(method, target, alpha))?;
            }
            println!(
                "{method} {target}: calibrated on {} samples ({} excluded as diverged) at {} alpha level(s)",
                residuals.n_samples(),
                residuals.excluded.len(),
                cfg.cp.alphas.len()
            );
        }
    }
    Ok(())
}

fn load_calibration(
    cfg: &RunConfig,
    path: &Path,
    ds_sha: &str,
    model_sha: &str,
) -> Result<(Calibration, String), CliError> {
    let (c, sha) = read_container(path, CALIBRATION_KIND, "calibrate")?;
    Provenance::of(&c, path)?.check(
        path,
        &cfg.calibrate_digest(),
        &[("dataset", ds_sha), ("model", model_sha)],
        "calibrate",
    )?;
    Ok((Calibration::from_container(&c)?, sha))
}

/// Mean scaled mass of the given rows at each timestep.
fn mean_scaled_mass(data: &CpData, rows: &[usize]) -> Vec<f64> {
    (0..data.time_grid.n_steps)
        .map(|t| rows.iter().map(|&i| data.trajectories[i].scaled_mass[t]).sum::<f64>() / rows.len() as f64)
        .collect()
}

fn width_chart(method: CpMethod, targets: &[UqTarget], widths: &[WidthSeries]) -> String {
    let panels: Vec<Panel> = targets
        .iter()
        .map(|&target| {
            let kind = if target.uses_ellipsoid() {
                WidthKind::EllipsoidVolume
            } else {
                WidthKind::BandIntegral
            };
            Panel {
                title: target_label(target).to_string(),
                x_label: "time (s)".into(),
                y_label: if target.uses_ellipsoid() {
                    "ellipsoid volume".into()
                } else {
                    "band width integral".into()
                },
                lines: widths
                    .iter()
                    .filter(|w| w.method == method && w.target == target && w.kind == kind)
                    .map(|w| Line {
                        label: format!("{}%", level_label(w.alpha)),
                        x: w.times.clone(),
                        y: w.values.clone(),
                    })
                    .collect(),
            }
        })
        .collect();
    render_line_chart(
        &format!("Prediction-set size vs. time: {}", method_label(method)),
        &panels,
    )
}

pub fn evaluate(cfg: &RunConfig, layout: &Layout, on_calibration: bool) -> Result<(), CliError> {
    let (ds, ds_sha) = load_dataset(cfg, layout)?;
    let mut prov = Provenance::new("evaluate", cfg, cfg.calibrate_digest()).with_input("dataset", &ds_sha);
    let mut reports = Vec::new();
    let mut widths = Vec::new();
    for method in cfg.methods() {
        let loaded = load_method(cfg, layout, &ds, &ds_sha, method, false)?;
        let model_sha = &loaded.shas["model"];
        prov = prov.with_input(format!("models/{method}/model.romcp"), model_sha.clone());
        for &target in &cfg.cp.targets {
            for &alpha in &cfg.cp.alphas {
                let path = layout.calibration(method, target, alpha);
                let (cal, cal_sha) = load_calibration(cfg, &path, &ds_sha, model_sha)?;
                let rel = path.strip_prefix(&layout.root).unwrap_or(&path);
                prov = prov.with_input(rel.to_string_lossy().into_owned(), cal_sha);
                let rows = if on_calibration {
                    cal.calibration_indices.clone()
                } else {
                    loaded.data.split.test.clone()
                };
                let report =
                    empirical_coverage(&cal, &loaded.fitted.model, &loaded.data.trajectories, &rows, on_calibration)?;
                let s = report.summary();
                println!(
                    "{method:>8} {target:>16} {:>5}%: coverage mean {:.4} std {:.4} median {:.4} (n = {}, excluded {})",
                    level_label(alpha),
                    s.mean,
                    s.std,
                    s.median,
                    report.n_test,
                    report.n_excluded
                );
                let mass = mean_scaled_mass(&loaded.data, &rows);
                widths.extend(romcp::metrics::width_series(&cal, &loaded.data.bin_grid, Some(&mass))?);
                reports.push(report);
            }
        }
    }

    let dir = layout.evaluation_dir(on_calibration);
    reset_dir(&dir)?;
    let mut outputs = BTreeMap::new();
    let mut emit = |name: String, f: &dyn Fn(&mut Vec<u8>) -> romcp::Result<()>| -> Result<(), CliError> {
        let path = dir.join(&name);
        write_file(&path, |buf| f(buf))?;
        outputs.insert(name, sha256_file(&path)?);
        Ok(())
    };
    emit("coverage.csv".into(), &|b| write_coverage_csv(b, &reports))?;
    emit("summary.csv".into(), &|b| write_summary_csv(b, &reports))?;
    emit("widths.csv".into(), &|b| write_width_csv(b, &widths))?;
    for method in cfg.methods() {
        let svg = width_chart(method, &cfg.cp.targets, &widths);
        emit(format!("widths_{method}.svg"), &|b| {
            b.extend_from_slice(svg.as_bytes());
            Ok(())
        })?;
    }
    let record = EvaluationRecord {
        provenance: prov,
        on_calibration,
        outputs,
    };
    let mut json = serde_json::to_vec_pretty(&record)?;
    json.push(b'\n');
    fs::write(dir.join("provenance.json"), json)?;
    println!("wrote {} coverage summaries to {}", reports.len(), dir.display());
    Ok(())
}

pub fn report(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let dir = layout.evaluation_dir(false);
    let prov_path = dir.join("provenance.json");
    if !prov_path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `romcp evaluate` first",
            prov_path.display()
        )));
    }
    let record: EvaluationRecord = serde_json::from_slice(&fs::read(&prov_path)?)?;
    record
        .provenance
        .check(&prov_path, &cfg.calibrate_digest(), &[], "evaluate")?;
    for (name, sha) in &record.outputs {
        let path = dir.join(name);
        if !path.exists() || sha256_file(&path)? != *sha {
            return Err(CliError::stale(path.display(), "evaluate"));
        }
    }
    let summary = romcp::metrics::read_summary_csv(fs::File::open(dir.join("summary.csv"))?)?;
    let widths = romcp::metrics::read_width_csv(fs::File::open(dir.join("widths.csv"))?)?;
    let text = render_report(cfg, &record, &summary, &widths);
    let out = layout.report_dir().join("report.md");
    write_file(&out, |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    print!("{text}");
    println!("wrote {}", out.display());
    Ok(())
}
