//! One function per subcommand. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use residuum::classifiers::{fit_forest, fit_logreg, select_l2, ClassifierModel, LogRegParams};
use residuum::dataspec::{
    content_hash, decode_embx, encode_embx, make_split_with, read_manifest, write_manifest,
    SplitOptions,
};
use residuum::metrics::{evaluate, EvalReport, CSV_HEADER};
use residuum::projection::{export_projection_with_meta, pca2, tsne2, write_svg, Method};
use residuum::regression::{extract_residuals, fit_ridge_cv};
use residuum::synthgen::generate;
use residuum::{par, EmbeddingMatrix, Manifest, ManifestMeta, SplitPlan};

use crate::config::{EmbeddingKind, FitOn, ModelKind, RunConfig};
use crate::error::{io_err, CliError};
use crate::report;

pub type Outputs = Vec<PathBuf>;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path, hint: &str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path, hint));
    }
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn synth(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let mut sc = cfg.synth.clone();
    sc.seed = cfg.seed;
    let data = generate(&sc)?;
    create_dir(&cfg.out)?;

    let text_bytes = encode_embx(&data.text)?;
    let speech_bytes = encode_embx(&data.speech)?;
    let mut manifest = data.manifest;
    let meta = manifest.meta.get_or_insert_with(ManifestMeta::default);
    meta.content_hash = Some(content_hash(&[&speech_bytes, &text_bytes]));

    let paths = vec![
        cfg.out.join("text.embx"),
        cfg.out.join("speech.embx"),
        cfg.out.join("manifest.jsonl"),
    ];
    write_file(&paths[0], &text_bytes)?;
    write_file(&paths[1], &speech_bytes)?;
    write_manifest(&manifest, &paths[2])?;
    info!(
        "synthesized {} rows ({} sentences x {} tones)",
        manifest.len(),
        sc.n_sentences,
        sc.n_tones
    );
    Ok(paths)
}

/// Text, speech and manifest, checked for row alignment and, when the
/// manifest records one, the content hash.
pub struct Dataset {
    pub text: EmbeddingMatrix,
    pub speech: EmbeddingMatrix,
    pub manifest: Manifest,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let hint = "run `synth` first or pass --text/--speech/--manifest";
    let (tp, sp, mp) = (cfg.text_path(), cfg.speech_path(), cfg.manifest_path());
    let text_bytes = read_file(&tp, hint)?;
    let speech_bytes = read_file(&sp, hint)?;
    if !mp.exists() {
        return Err(CliError::missing(&mp, hint));
    }
    let manifest = read_manifest(&mp)?;
    if let Some(expected) = manifest
        .meta
        .as_ref()
        .and_then(|m| m.content_hash.as_deref())
    {
        let found = content_hash(&[&speech_bytes, &text_bytes]);
        if found != expected {
            return Err(CliError::Data(format!(
                "content hash mismatch: manifest records {expected}, files hash to {found}"
            )));
        }
    }
    let text =
        decode_embx(&text_bytes).map_err(|e| CliError::Data(format!("{}: {e}", tp.display())))?;
    let speech =
        decode_embx(&speech_bytes).map_err(|e| CliError::Data(format!("{}: {e}", sp.display())))?;
    if text.rows() != manifest.len() || speech.rows() != manifest.len() {
        return Err(CliError::Data(format!(
            "row mismatch: text {} rows, speech {} rows, manifest {} entries",
            text.rows(),
            speech.rows(),
            manifest.len()
        )));
    }
    Ok(Dataset {
        text,
        speech,
        manifest,
    })
}

fn split_options(cfg: &RunConfig) -> SplitOptions {
    SplitOptions {
        ratio: cfg.split.ratio,
        seed: cfg.stage_seed("split"),
        stratified: cfg.split.stratified,
        group_by_transcript: cfg.split.group_by_transcript,
    }
}

fn split_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("split.json")
}

/// The split written by `residualize`, or a fresh one from the same options.
pub fn load_or_make_split(cfg: &RunConfig, manifest: &Manifest) -> Result<SplitPlan, CliError> {
    let path = split_path(cfg);
    let plan = if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    } else {
        debug!(
            "{} not found, deriving the split from options",
            path.display()
        );
        make_split_with(manifest, &split_options(cfg))?
    };
    plan.validate(manifest.len())?;
    if plan.train_indices.len() + plan.test_indices.len() != manifest.len() {
        return Err(CliError::Data(format!(
            "{} does not cover the {} rows of the dataset",
            path.display(),
            manifest.len()
        )));
    }
    Ok(plan)
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn residualize(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.out)?;
    let plan = make_split_with(&ds.manifest, &split_options(cfg))?;
    for w in &plan.warnings {
        warn!("{w}");
    }

    let (text, speech) = if cfg.ridge.normalize {
        (ds.text.l2_normalized(), ds.speech.l2_normalized())
    } else {
        (ds.text, ds.speech)
    };
    let (fit_text, fit_speech) = match cfg.ridge.fit_on {
        FitOn::Train => (
            text.select_rows(&plan.train_indices),
            speech.select_rows(&plan.train_indices),
        ),
        FitOn::All => (text.clone(), speech.clone()),
    };
    let (model, report) = fit_ridge_cv(
        &fit_text,
        &fit_speech,
        &cfg.ridge.lambda_grid,
        cfg.ridge.folds,
        cfg.stage_seed("ridge_cv"),
    )?;
    info!(
        "ridge: chosen lambda {} (rank {})",
        report.chosen_lambda, report.rank
    );
    let residual = extract_residuals(&model, &text, &speech)?;

    let paths = vec![
        split_path(cfg),
        cfg.out.join("residual.embx"),
        cfg.out.join("residual_model.rsdm"),
        cfg.out.join("fit_report.json"),
    ];
    write_file(&paths[0], pretty(&plan)?)?;
    write_file(&paths[1], encode_embx(&residual)?)?;
    model.to_container()?.write(&paths[2])?;
    write_file(&paths[3], pretty(&report)?)?;
    Ok(paths)
}

fn features(
    cfg: &RunConfig,
    ds: &Dataset,
    emb: EmbeddingKind,
) -> Result<EmbeddingMatrix, CliError> {
    match emb {
        EmbeddingKind::Text => Ok(ds.text.clone()),
        EmbeddingKind::Audio => Ok(ds.speech.clone()),
        EmbeddingKind::Residual => {
            let path = cfg.out.join("residual.embx");
            let m = decode_embx(&read_file(&path, "run `residualize` first")?)?;
            if m.rows() != ds.manifest.len() {
                return Err(CliError::Data(format!(
                    "{} has {} rows but the manifest has {}",
                    path.display(),
                    m.rows(),
                    ds.manifest.len()
                )));
            }
            Ok(m)
        }
    }
}

fn run_stem(emb: EmbeddingKind, model: ModelKind) -> String {
    format!("{}_{}", emb.as_str(), model.as_str())
}

/// Trains on the train split, evaluates on the test split and writes
/// `classify/{embedding}_{model}.{json,csv,rsdm}`.
pub fn classify_with(
    cfg: &RunConfig,
    ds: &Dataset,
    plan: &SplitPlan,
    emb: EmbeddingKind,
    model_kind: ModelKind,
) -> Result<(EvalReport, Outputs), CliError> {
    let x = features(cfg, ds, emb)?;
    let y = ds.manifest.tone_indices();
    let classes = ds.manifest.label_set();
    let x_train = x.select_rows(&plan.train_indices);
    let y_train: Vec<usize> = plan.train_indices.iter().map(|&i| y[i]).collect();
    let x_test = x.select_rows(&plan.test_indices);
    let y_test: Vec<usize> = plan.test_indices.iter().map(|&i| y[i]).collect();

    let dir = cfg.out.join("classify");
    create_dir(&dir)?;
    let stem = run_stem(emb, model_kind);
    let mut paths = Vec::new();

    let model = match model_kind {
        ModelKind::Logreg => {
            let mut params: LogRegParams = cfg.logreg.params();
            if cfg.logreg.cv {
                let sel = select_l2(
                    &x_train,
                    &y_train,
                    classes,
                    &cfg.logreg.l2_grid,
                    &params,
                    cfg.logreg.cv_folds,
                    cfg.stage_seed(&format!("logreg_cv:{}", emb.as_str())),
                )?;
                info!("{stem}: cross-validated l2 = {}", sel.chosen_l2);
                params.l2 = sel.chosen_l2;
                let p = dir.join(format!("{stem}_cv.json"));
                write_file(&p, pretty(&sel)?)?;
                paths.push(p);
            }
            let m = fit_logreg(&x_train, &y_train, classes, &params)?;
            if !m.converged {
                warn!(
                    "{stem}: logistic regression stopped after {} iterations without converging",
                    m.iterations
                );
            }
            ClassifierModel::LogReg(m)
        }
        ModelKind::Forest => {
            let params = cfg
                .forest
                .params(cfg.stage_seed(&format!("forest:{}", emb.as_str())));
            ClassifierModel::Forest(fit_forest(&x_train, &y_train, classes, &params)?)
        }
    };
    let predictions = model.predict(&x_test)?;
    let report = evaluate(&y_test, &predictions, classes)?;
    info!("{stem}: accuracy {:.4}", report.accuracy);

    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    let rsdm = dir.join(format!("{stem}.rsdm"));
    write_file(&json, pretty(&report)?)?;
    write_file(
        &csv,
        format!(
            "{CSV_HEADER}\n{}\n",
            report.csv_row(emb.as_str(), model_kind.as_str())
        ),
    )?;
    model.to_container()?.write(&rsdm)?;
    paths.extend([json, csv, rsdm]);
    Ok((report, paths))
}

pub fn classify(
    cfg: &RunConfig,
    emb: EmbeddingKind,
    model: ModelKind,
) -> Result<Outputs, CliError> {
    let ds = load_dataset(cfg)?;
    let plan = load_or_make_split(cfg, &ds.manifest)?;
    Ok(classify_with(cfg, &ds, &plan, emb, model)?.1)
}

/// All six embedding × model runs, in parallel.
pub fn classify_all(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ds = load_dataset(cfg)?;
    let plan = load_or_make_split(cfg, &ds.manifest)?;
    let jobs: Vec<(EmbeddingKind, ModelKind)> = ModelKind::ALL
        .iter()
        .flat_map(|&m| EmbeddingKind::ALL.iter().map(move |&e| (e, m)))
        .collect();
    let results = par::map_range(jobs.len(), |k| {
        classify_with(cfg, &ds, &plan, jobs[k].0, jobs[k].1)
    });
    let mut paths = Vec::new();
    for r in results {
        paths.extend(r?.1);
    }
    Ok(paths)
}

pub fn project(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ds = load_dataset(cfg)?;
    let dir = cfg.out.join("projections");
    create_dir(&dir)?;
    let mut paths = Vec::new();
    for emb in EmbeddingKind::ALL {
        let x = features(cfg, &ds, emb)?;
        let seed = cfg.stage_seed(&format!("tsne:{}", emb.as_str()));
        let pca = pca2(&x)?;
        let tsne = tsne2(&x, &cfg.projection.tsne_params(seed))?;
        for p in [pca, tsne] {
            let stem = format!("{}_{}", emb.as_str(), p.method.as_str());
            let csv = dir.join(format!("{stem}.csv"));
            export_projection_with_meta(&p, &ds.manifest, &csv)?;
            paths.push(csv);
            if cfg.projection.svg {
                let svg = dir.join(format!("{stem}.svg"));
                let method = match p.method {
                    Method::Pca => "PCA",
                    Method::Tsne => "t-SNE",
                };
                write_svg(
                    &p,
                    &ds.manifest,
                    &format!("{} embeddings, {method}", emb.as_str()),
                    &svg,
                )?;
                paths.push(svg);
            }
            if let Some(kl) = p.kl_final {
                info!("{stem}: KL {kl:.4}");
            }
        }
    }
    Ok(paths)
}

pub fn report(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let dir = cfg.out.join("classify");
    let md = report::render(&report::collect(&dir)?);
    let path = cfg.out.join("report.md");
    write_file(&path, md)?;
    Ok(vec![path])
}

/// synth (unless inputs were given), residualize, the six classify runs,
/// project and report.
pub fn pipeline(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let mut paths = Vec::new();
    let given = &cfg.inputs;
    if given.text.is_none() && given.speech.is_none() && given.manifest.is_none() {
        paths.extend(synth(cfg)?);
    }
    paths.extend(residualize(cfg)?);
    paths.extend(classify_all(cfg)?);
    paths.extend(project(cfg)?);
    paths.extend(report(cfg)?);
    Ok(paths)
}
