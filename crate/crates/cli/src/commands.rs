use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;

use heatlens::explain::{self, Baseline, ExplainMetadata};
use heatlens::fsutil::write_atomic;
use heatlens::image::{self, RgbImage};
use heatlens::lrp::{self, RuleAssignment};
use heatlens::metrics;
use heatlens::network::{self, Prediction};
use heatlens::saliency::render_heatmap;
use heatlens::selftest::{self, Fault};
use heatlens::weights::{self, WeightStore};
use heatlens::{Error, NetworkDef, Result, SaliencyMap, Scalar, Tensor};

use crate::config::{InputRule, Method, Precision, RunConfig};

const DEFAULT_OUTPUT_DIR: &str = "heatlens-out";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Writes every file only after all of them have been produced.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        write_atomic(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn load_model(cfg: &RunConfig) -> Result<(NetworkDef, WeightStore<f32>)> {
    let weights_path = cfg.require_weights()?;
    let net = cfg.network(cfg.class_labels()?)?;
    let store = weights::load_weights(weights_path)?;
    store.validate(&net)?;
    Ok((net, store))
}

/// Decodes, resizes to the network's input extent and normalises.
fn load_image(net: &NetworkDef, path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let img = image::decode_image(&bytes)?;
    let [c, h, w] = net.input_shape();
    if c != 3 {
        return Err(Error::Dimension {
            op: "load_image",
            axis: "input channels".into(),
            expected: c.to_string(),
            actual: "3 (RGB image)".into(),
        });
    }
    if (img.height(), img.width()) == (h, w) {
        Ok(img)
    } else {
        image::resize_bilinear(&img, h, w)
    }
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    image: &'a Path,
    precision: &'static str,
    predictions: Vec<Prediction>,
}

pub fn classify(cfg: &RunConfig, image_path: &Path, top_k: usize, json: bool) -> Result<ExitCode> {
    if top_k == 0 {
        return Err(Error::Argument("--top-k must be at least 1".into()));
    }
    let (net, store) = load_model(cfg)?;
    if top_k > net.num_classes() {
        return Err(Error::Argument(format!(
            "--top-k {top_k} exceeds the {} configured classes",
            net.num_classes()
        )));
    }
    let img = load_image(&net, image_path)?;
    let predictions = match cfg.precision.unwrap_or_default() {
        Precision::F32 => network::classify(
            &net,
            &store,
            &image::to_input_tensor::<f32>(&img, &cfg.normalization),
            top_k,
        )?,
        Precision::F64 => network::classify(
            &net,
            &store.cast::<f64>(),
            &image::to_input_tensor::<f64>(&img, &cfg.normalization),
            top_k,
        )?,
    };
    if json {
        let out = ClassifyOutput {
            image: image_path,
            precision: precision_name(cfg),
            predictions,
        };
        println!("{}", to_json(&out));
    } else {
        println!("rank\tclass\tscore\tprobability");
        for (rank, p) in predictions.iter().enumerate() {
            println!(
                "{}\t{}\t{:.6}\t{:.6}",
                rank + 1,
                p.label,
                p.score,
                p.probability
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn precision_name(cfg: &RunConfig) -> &'static str {
    match cfg.precision.unwrap_or_default() {
        Precision::F32 => f32::NAME,
        Precision::F64 => f64::NAME,
    }
}

struct Explanation {
    map: SaliencyMap,
    metadata: ExplainMetadata,
    extra: Vec<(String, Vec<u8>)>,
}

fn explain_with<T: Scalar>(
    cfg: &RunConfig,
    net: &NetworkDef,
    store: &WeightStore<T>,
    input: &Tensor<T>,
) -> Result<Explanation> {
    let e = &cfg.explain;
    let trace = network::forward(net, store, input)?;
    let class_scores = network::class_scores(trace.scores())?;
    let target = match e.target {
        Some(t) if t >= net.num_classes() => {
            return Err(Error::Argument(format!(
                "target class {t} out of range for {} classes",
                net.num_classes()
            )))
        }
        Some(t) => t,
        None => network::rank_scores(net.classes(), &class_scores, 1)?[0].index,
    };
    let score = explain::target_score(trace.scores(), target)?;
    drop(trace);

    let method = e.method.name();
    let mut parameters: Vec<(String, String)> = vec![("precision".into(), T::NAME.into())];
    let mut seed = None;
    let mut extra = Vec::new();
    let map = match e.method {
        Method::Lrp => {
            let rules = match e.input_rule {
                InputRule::Zb => RuleAssignment::standard(
                    net,
                    e.epsilon,
                    cfg.normalization.lower_bounds().to_vec(),
                    cfg.normalization.upper_bounds().to_vec(),
                )?,
                InputRule::Z => RuleAssignment::uniform(net, e.epsilon),
            };
            parameters.push(("epsilon".into(), format!("{:e}", e.epsilon)));
            parameters.push((
                "input_rule".into(),
                format!("{:?}", e.input_rule).to_lowercase(),
            ));
            let relevance = lrp::lrp(net, store, input, target, &rules)?;
            extra.push((
                "lrp_summary.txt".to_string(),
                relevance.summary().into_bytes(),
            ));
            if e.export_layers {
                for (name, bytes) in lrp::render_relevance_layers(&relevance, e.clip_percentile)? {
                    extra.push((format!("lrp_layers/{name}"), bytes));
                }
            }
            lrp::pixel_relevance(&relevance)?
        }
        Method::Gradcam => {
            let layer = match &e.layer {
                Some(l) => l.clone(),
                None => explain::default_gradcam_layer(net)?.to_string(),
            };
            parameters.push(("layer".into(), layer.clone()));
            explain::grad_cam(net, store, input, target, &layer)?
        }
        Method::Occlusion => {
            parameters.push(("patch".into(), e.patch.to_string()));
            parameters.push(("stride".into(), e.stride.to_string()));
            parameters.push(("baseline".into(), e.baseline.to_string()));
            let occ = explain::occlusion(
                net,
                store,
                input,
                target,
                e.patch,
                e.stride,
                &Baseline::Scalar(e.baseline),
            )?;
            extra.push((
                "occlusion_grid.txt".to_string(),
                occ.grid.to_text().into_bytes(),
            ));
            occ.pixels
        }
        Method::Smoothgrad => {
            let sigma = e
                .sigma
                .unwrap_or_else(|| explain::default_sigma(&cfg.normalization));
            parameters.push(("samples".into(), e.samples.to_string()));
            parameters.push(("sigma".into(), format!("{sigma:e}")));
            seed = Some(e.seed);
            explain::smoothgrad(net, store, input, target, e.samples, sigma, e.seed)?
        }
    };
    parameters.push(("clip_percentile".into(), e.clip_percentile.to_string()));
    parameters.push(("map_height".into(), map.height().to_string()));
    parameters.push(("map_width".into(), map.width().to_string()));
    Ok(Explanation {
        map,
        metadata: ExplainMetadata {
            method: method.into(),
            parameters,
            seed,
            target_class: target,
            target_label: net.classes()[target].clone(),
            score,
        },
        extra,
    })
}

#[derive(Serialize)]
struct ExplainOutput {
    method: String,
    target_class: usize,
    target_label: String,
    score: f64,
    map_height: usize,
    map_width: usize,
    files: Vec<PathBuf>,
}

pub fn explain(cfg: &RunConfig, image_path: &Path, json: bool) -> Result<ExitCode> {
    let (net, store) = load_model(cfg)?;
    let img = load_image(&net, image_path)?;
    let result = match cfg.precision.unwrap_or_default() {
        Precision::F32 => {
            let input = image::to_input_tensor::<f32>(&img, &cfg.normalization);
            explain_with(cfg, &net, &store, &input)?
        }
        Precision::F64 => drop_then_explain_f64(cfg, &net, store, &img)?,
    };
    let method = result.metadata.method.clone();
    let full = result.map.upsample(img.height(), img.width())?;
    let heat = render_heatmap(&full, cfg.explain.clip_percentile)?;
    let blended = image::overlay(&img, &heat, cfg.explain.overlay_alpha)?;
    let mut files = vec![
        (format!("{method}_heatmap.ppm"), image::encode_ppm(&heat)),
        (format!("{method}_overlay.ppm"), image::encode_ppm(&blended)),
        (
            format!("{method}_map.txt"),
            result.map.to_text().into_bytes(),
        ),
        (
            format!("{method}_meta.txt"),
            result.metadata.to_text().into_bytes(),
        ),
    ];
    files.extend(result.extra);
    let written = write_outputs(&output_dir(cfg), &files)?;
    if json {
        let out = ExplainOutput {
            method,
            target_class: result.metadata.target_class,
            target_label: result.metadata.target_label.clone(),
            score: result.metadata.score,
            map_height: result.map.height(),
            map_width: result.map.width(),
            files: written,
        };
        println!("{}", to_json(&out));
    } else {
        println!(
            "{method}: class {} ({}), score {:e}, map {}x{}",
            result.metadata.target_class,
            result.metadata.target_label,
            result.metadata.score,
            result.map.height(),
            result.map.width()
        );
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Converts the store to f64 and frees the f32 copy before explaining.
fn drop_then_explain_f64(
    cfg: &RunConfig,
    net: &NetworkDef,
    store: WeightStore<f32>,
    img: &RgbImage,
) -> Result<Explanation> {
    let wide = store.cast::<f64>();
    drop(store);
    let input = image::to_input_tensor::<f64>(img, &cfg.normalization);
    explain_with(cfg, net, &wide, &input)
}

pub fn evaluate(cfg: &RunConfig, csv: &Path, threshold: f64, json: bool) -> Result<ExitCode> {
    if !threshold.is_finite() {
        return Err(Error::Argument(format!(
            "threshold {threshold} must be finite"
        )));
    }
    let mut evaluation = metrics::evaluate_csv(csv, threshold)?;
    if cfg.classes.is_some() {
        let labels = cfg.class_labels()?;
        if labels.len() != 2 {
            return Err(Error::Config(format!(
                "evaluation is binary but the class manifest lists {} classes",
                labels.len()
            )));
        }
        evaluation = evaluation.relabel(labels)?;
    }
    let text = evaluation.to_text();
    let structured = to_json(&evaluation);
    write_outputs(
        &output_dir(cfg),
        &[
            ("evaluation.txt".into(), text.clone().into_bytes()),
            ("evaluation.json".into(), structured.clone().into_bytes()),
        ],
    )?;
    if json {
        println!("{structured}");
    } else {
        print!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn selftest(seed: u64, inject_fault: bool, json: bool) -> ExitCode {
    let report = selftest::run(seed, inject_fault.then_some(Fault::PerturbConvKernel));
    if json {
        println!("{}", to_json(&report));
    } else {
        print!("{}", report.to_text());
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

pub fn weights_inspect(path: &Path, json: bool) -> Result<ExitCode> {
    let manifest = weights::inspect_weights(path)?;
    if json {
        println!("{}", to_json(&manifest));
        return Ok(ExitCode::SUCCESS);
    }
    let width = manifest
        .records
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(0)
        .max(5);
    println!(
        "{:<width$}  {:<18}  {:>6}  {:>12}",
        "layer", "kernel", "bias", "parameters"
    );
    for r in &manifest.records {
        let shape = r
            .kernel_shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        println!(
            "{:<width$}  {:<18}  {:>6}  {:>12}",
            r.name,
            shape,
            r.bias_len,
            r.parameter_count()
        );
    }
    let total = manifest.parameter_count();
    println!(
        "total parameters {total} ({:.1} MB as f32)",
        (4 * total) as f64 / 1e6
    );
    println!("blob {} ({} bytes)", manifest.blob, manifest.blob_bytes);
    println!("checksum crc32 {} ok", manifest.checksum);
    println!("provenance {}", manifest.provenance);
    Ok(ExitCode::SUCCESS)
}

pub fn weights_init(cfg: &RunConfig, path: &Path, seed: u64) -> Result<ExitCode> {
    let net = cfg.network(cfg.class_labels()?)?;
    let store = WeightStore::<f32>::random(&net, seed);
    let manifest = weights::save_weights(&store, &net, path)?;
    println!(
        "wrote {} ({} layers, {} parameters)",
        path.display(),
        manifest.records.len(),
        manifest.parameter_count()
    );
    Ok(ExitCode::SUCCESS)
}
