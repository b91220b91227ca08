use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use apot::analysis::{
    clipping_ratio_curve, default_grid, lloyd_levels, max_slope, qem_search, weight_level_set,
};
use apot::shiftadd::cost::{builtin_table, cost_report, parse_layer_table, CostModel};
use apot::train::{
    checkpoint, data, evaluate, evaluate_shiftadd, progressive_init, train_epochs, Dataset,
    MlpModel, ModelSpec, SgdConfig, SgdState, TrainOptions,
};
use apot::{build_levels, normalize, pot_term_exponents, tensor_io, Error, QuantConfig, Quantizer};
use serde_json::json;

use crate::args::*;
use crate::output::{csv_bytes, json_bytes, report_bytes, Emit};

/// Command failures with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Lib(Error::Usage(_)) => 2,
            Failure::Lib(Error::Config(_)) => 3,
            Failure::Lib(Error::Input(_) | Error::Format(_)) => 4,
            Failure::Lib(Error::Io(_)) => 5,
            Failure::Lib(Error::Arithmetic(_)) | Failure::Diverged(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Lib(Error::Usage(_)) => "usage",
            Failure::Lib(Error::Config(_)) => "config",
            Failure::Lib(Error::Input(_)) => "input",
            Failure::Lib(Error::Format(_)) => "format",
            Failure::Lib(Error::Io(_)) => "io",
            Failure::Lib(Error::Arithmetic(_)) => "arithmetic",
            Failure::Diverged(_) => "divergence",
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Diverged(m) => m.clone(),
        }
    }
}

type Res<T> = Result<T, Failure>;

pub fn run(cli: &Cli) -> Res<Emit> {
    let (fmt, seed) = (cli.format, cli.seed);
    match &cli.command {
        Command::Levels(a) => levels(a, fmt),
        Command::Quantize(a) => quantize(a, fmt),
        Command::Gradcheck(a) => gradcheck(a, fmt, seed),
        Command::Analyze(a) => analyze(a, fmt),
        Command::Cost(a) => cost(a, fmt),
        Command::Train(a) => train(a, fmt, seed),
        Command::Simulate(a) => simulate(a, fmt, seed),
        Command::Rerun(_) => Err(Error::Usage("rerun cannot be nested".into()).into()),
    }
}

fn read_input(path: &Path, emit: &mut Emit) -> Res<Vec<u8>> {
    emit.inputs.push(path.to_path_buf());
    fs::read(path).map_err(|e| Failure::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn read_tensor(path: &Path, emit: &mut Emit) -> Res<Vec<f64>> {
    let bytes = read_input(path, emit)?;
    Ok(tensor_io::decode(&bytes)?.into_iter().map(f64::from).collect())
}

fn levels(a: &LevelsArgs, fmt: Format) -> Res<Emit> {
    let scheme = a.scheme.scheme.resolve(a.scheme.base);
    let ls = build_levels(scheme, a.alpha, a.bits, a.signed)?;
    let mut rows = Vec::with_capacity(ls.len());
    for i in 0..ls.len() {
        rows.push((i, ls.value(i), pot_term_exponents(i, &ls)?));
    }
    let bytes = match fmt {
        Format::Csv => csv_bytes(
            &["index", "value", "terms"],
            rows.iter().map(|(i, v, terms)| {
                let t: Vec<String> = terms
                    .iter()
                    .map(|t| format!("{}2^{}", if t.sign < 0 { '-' } else { '+' }, t.exponent))
                    .collect();
                vec![i.to_string(), v.to_string(), if t.is_empty() { "0".into() } else { t.join(" ") }]
            }),
        )?,
        Format::Json => json_bytes(&json!({
            "scheme": scheme,
            "bits": a.bits,
            "signed": a.signed,
            "alpha": a.alpha,
            "gamma": ls.gamma(),
            "levels": rows.iter().map(|(i, v, t)| json!({"index": i, "value": v, "terms": t})).collect::<Vec<_>>(),
        }))?,
    };
    let mut emit = Emit { summary: Some(json!({ "count": ls.len(), "gamma": ls.gamma() })), ..Emit::default() };
    emit.primary(a.out.as_deref(), bytes);
    Ok(emit)
}

fn quantize(a: &QuantizeArgs, fmt: Format) -> Res<Emit> {
    let mut emit = Emit::default();
    let x = read_tensor(&a.input, &mut emit)?;
    let cfg = QuantConfig {
        scheme: a.scheme.scheme.resolve(a.scheme.base),
        weight_norm: a.weight_norm,
        ..QuantConfig::default()
    }
    .with_bits(a.bits, a.bits);
    let q = Quantizer::new(cfg)?;
    let (path, out, clipped, idx): (&str, Vec<f64>, Vec<bool>, Vec<u32>) = if a.activations {
        let (y, c) = q.quantize_activations(&x, a.alpha)?;
        ("activations", y, c.clipped_mask().to_vec(), c.indices().to_vec())
    } else {
        let (y, c) = q.quantize_weights(&x, a.alpha)?;
        ("weights", y, c.clipped_mask().to_vec(), c.indices().to_vec())
    };
    let f32s: Vec<f32> = out.iter().map(|&v| v as f32).collect();
    emit.primary(Some(&a.out), tensor_io::encode(&f32s)?);
    let n = x.len().max(1) as f64;
    let clipped = clipped.iter().filter(|&&c| c).count();
    let summary = json!({
        "path": path,
        "elements": x.len(),
        "clipped": clipped,
        "clipped_ratio": clipped as f64 / n,
        "levels_used": idx.iter().collect::<BTreeSet<_>>().len(),
        "mse": x.iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n,
    });
    emit.stdout = report_bytes(fmt, &summary)?;
    emit.summary = Some(summary);
    Ok(emit)
}

fn gradcheck(a: &GradcheckArgs, fmt: Format, seed: u64) -> Res<Emit> {
    let unit = weight_level_set(a.scheme.scheme.resolve(a.scheme.base), a.bits)?;
    let report = apot::gradcheck::rcf_gradcheck(&unit, a.alpha, a.samples, seed)?;
    let mut emit = Emit { summary: Some(json!(report)), ..Emit::default() };
    emit.primary(a.out.as_deref(), report_bytes(fmt, &report)?);
    Ok(emit)
}

fn analyze(a: &AnalyzeArgs, fmt: Format) -> Res<Emit> {
    let mut emit = Emit::default();
    let mut w = read_tensor(&a.input, &mut emit)?;
    if a.weight_norm {
        w = normalize(&w)?.0;
    }
    let scheme = a.scheme.scheme.resolve(a.scheme.base);
    let unit = weight_level_set(scheme, a.bits)?;
    let grid = default_grid(&w, a.points)?;
    let (bytes, summary) = match a.mode() {
        Analysis::Qem => {
            let r = qem_search(&w, &unit, &grid)?;
            let summary = json!({ "alpha": r.alpha, "best": r.best });
            let bytes = match fmt {
                Format::Csv => csv_bytes(
                    &["alpha", "delta_clip", "delta_proj", "delta"],
                    r.curve.iter().map(|(al, d)| {
                        vec![al.to_string(), d.delta_clip.to_string(), d.delta_proj.to_string(), d.delta.to_string()]
                    }),
                )?,
                Format::Json => json_bytes(&r)?,
            };
            (bytes, summary)
        }
        Analysis::Lloyd => {
            let r = lloyd_levels(&w, unit.len(), a.max_iters, 1e-9)?;
            let scheme_best = qem_search(&w, &unit, &grid)?;
            let summary = json!({
                "levels": r.levels.len(),
                "lloyd_mse": r.mse(),
                "iterations": r.iterations,
                "reseeds": r.reseeds,
                "scheme_min_delta": scheme_best.best.delta,
            });
            let bytes = match fmt {
                Format::Csv => csv_bytes(
                    &["index", "level"],
                    r.levels.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()]),
                )?,
                Format::Json => json_bytes(&r)?,
            };
            (bytes, summary)
        }
        Analysis::Clipcurve => {
            let curve = clipping_ratio_curve(&w, &grid)?;
            let summary = json!({ "points": curve.len(), "max_slope": max_slope(&curve) });
            let bytes = match fmt {
                Format::Csv => csv_bytes(
                    &["alpha", "ratio"],
                    curve.iter().map(|(al, r)| vec![al.to_string(), r.to_string()]),
                )?,
                Format::Json => json_bytes(&json!({ "curve": curve, "max_slope": max_slope(&curve) }))?,
            };
            (bytes, summary)
        }
    };
    emit.summary = Some(summary);
    emit.primary(a.out.as_deref(), bytes);
    Ok(emit)
}

fn cost(a: &CostArgs, fmt: Format) -> Res<Emit> {
    let mut emit = Emit::default();
    let path = Path::new(&a.net);
    let text = if path.is_file() {
        String::from_utf8(read_input(path, &mut emit)?)
            .map_err(|_| Error::Input(format!("{} is not UTF-8", a.net)))?
    } else {
        builtin_table(&a.net)
            .ok_or_else(|| Error::Input(format!("no layer table file or built-in table named `{}`", a.net)))?
            .to_string()
    };
    let defs = parse_layer_table(&text)?;
    let model = CostModel {
        edge_bits: (a.edge_bits > 0).then_some(a.edge_bits),
        ..CostModel::new(a.wbits, a.abits, a.scheme.resolve(a.base))
    };
    let report = cost_report(&model.shapes(&defs)?)?;
    let totals = json!({
        "total_macs": report.total_macs,
        "total_fixops": report.total_fixops,
        "model_size_bytes": report.model_size_bytes,
        "model_size_mb": report.model_size_mb(),
        "shift_add_count": report.shift_add_count,
    });
    match fmt {
        Format::Csv => {
            let bytes = csv_bytes(
                &["name", "macs", "weight_bits", "act_bits", "fixops", "bytes", "shift_adds"],
                report.layers.iter().map(|l| {
                    vec![
                        l.name.clone(),
                        l.macs.to_string(),
                        l.weight_bits.to_string(),
                        l.act_bits.to_string(),
                        l.fixops.to_string(),
                        l.bytes.to_string(),
                        l.shift_adds.to_string(),
                    ]
                }),
            )?;
            emit.primary(a.out.as_deref(), bytes);
            if let Some(out) = &a.out {
                let mut p = out.as_os_str().to_owned();
                p.push(".totals.json");
                emit.file(Path::new(&p), json_bytes(&totals)?);
            }
        }
        Format::Json => {
            let bytes = json_bytes(&json!({ "layers": report.layers, "totals": totals }))?;
            emit.primary(a.out.as_deref(), bytes);
        }
    }
    emit.summary = Some(totals);
    Ok(emit)
}

fn load_data(a: &DataArgs, seed: u64, emit: &mut Emit) -> Res<Dataset> {
    let mut d = match &a.data {
        Some(p) => {
            let bytes = read_input(p, emit)?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Input(format!("{} is not UTF-8", p.display())))?;
            data::from_csv(&text)?
        }
        None => match a.dataset {
            Synthetic::Clusters => data::two_clusters(a.samples, a.noise, seed)?,
            Synthetic::Moons => data::two_moons(a.samples, a.noise, seed)?,
            Synthetic::Blobs => data::gaussian_blobs(a.samples, a.dim, a.classes, a.noise, seed)?,
        },
    };
    d.fit_scaler().apply(&mut d)?;
    Ok(d)
}

fn load_model(path: &Path, emit: &mut Emit) -> Res<MlpModel> {
    Ok(checkpoint::from_bytes(&read_input(path, emit)?)?)
}

fn train(a: &TrainArgs, fmt: Format, seed: u64) -> Res<Emit> {
    let mut emit = Emit::default();
    let d = load_data(&a.data, seed, &mut emit)?;
    let quant = (a.bits < 32).then(|| {
        QuantConfig {
            scheme: a.scheme.scheme.resolve(a.scheme.base),
            alpha_w: a.alpha_w,
            alpha_x: a.alpha_x,
            ste_mode: a.ste.into(),
            weight_norm: !a.no_weight_norm,
            ..QuantConfig::default()
        }
        .with_bits(a.bits, a.abits.unwrap_or(a.bits))
    });
    let spec = ModelSpec { hidden: a.hidden, ..ModelSpec::new(d.dim, d.classes, quant) };
    let mut model = MlpModel::new(spec, seed)?;
    if let Some(p) = &a.init_from {
        let prev = load_model(p, &mut emit)?;
        model = progressive_init(&model, &prev)?;
    }
    let mut sgd = SgdState::new(SgdConfig {
        lr_w: a.lr,
        lr_alpha_w: a.lr_alpha_w,
        lr_alpha_x: a.lr_alpha_x,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        ..SgdConfig::default()
    })?;
    let opts = TrainOptions { epochs: a.epochs, batch_size: a.batch_size, seed };
    let log = train_epochs(&mut model, &d, &mut sgd, &opts)?;
    if let Some(div) = &log.divergence {
        return Err(Failure::Diverged(format!(
            "training diverged at epoch {} step {}: {}",
            div.epoch, div.step, div.reason
        )));
    }
    let eval = evaluate(&model, &d)?;
    let bytes = match fmt {
        Format::Csv => {
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            csv_bytes(
                &["epoch", "loss", "accuracy", "alpha_w", "alpha_x"],
                log.epochs.iter().map(|e| {
                    vec![e.epoch.to_string(), e.loss.to_string(), e.accuracy.to_string(), join(&e.alpha_w), join(&e.alpha_x)]
                }),
            )?
        }
        Format::Json => json_bytes(&log)?,
    };
    emit.primary(a.log.as_deref(), bytes);
    if let Some(p) = &a.save {
        emit.file(p, checkpoint::to_bytes(&model)?);
    }
    emit.summary = Some(json!({
        "samples": d.len(),
        "epochs": log.epochs.len(),
        "train_accuracy": eval.accuracy,
        "train_loss": eval.loss,
        "alpha_w": model.alphas_w(),
        "alpha_x": model.alphas_x(),
    }));
    Ok(emit)
}

fn simulate(a: &SimulateArgs, fmt: Format, seed: u64) -> Res<Emit> {
    let mut emit = Emit::default();
    let model = load_model(&a.model, &mut emit)?;
    let d = load_data(&a.data, seed, &mut emit)?;
    let report = evaluate_shiftadd(&model, &d)?;
    emit.primary(a.out.as_deref(), report_bytes(fmt, &report)?);
    emit.summary = Some(json!(report));
    Ok(emit)
}
