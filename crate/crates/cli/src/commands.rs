use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use hhseg_core::distance::{load_vector_field, VectorField};
use hhseg_core::io::{load_any_image, load_labeling, load_scribbles, overlay_png, save_image, save_labeling, save_scribbles};
use hhseg_core::metrics::{compute_metrics, SegMetrics};
use hhseg_core::optimizer::{segment as run_segment, write_log_jsonl, EnergyBreakdown, SolverConfig};
use hhseg_core::synthetic::{generate_synthetic, SyntheticKind, SyntheticParams};
use hhseg_core::{Error, LabelId};

use crate::args::{EvalArgs, GenArgs, SegmentArgs};
use crate::failure::Failure;

const OVERLAY_ALPHA: f64 = 0.45;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn solver_config(a: &SegmentArgs) -> Result<SolverConfig, Error> {
    let mut config = match &a.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        }
        None => SolverConfig::default(),
    };
    if let Some(theta) = a.theta {
        config.theta = theta;
    }
    if let Some(lambda) = a.lambda {
        config.lambda = lambda;
    }
    if let Some(n) = a.neighborhood {
        config.neighborhood = Some(n);
    }
    if let Some(k) = a.gmm_k {
        config.gmm_components = k;
    }
    if let Some(n) = a.max_iterations {
        config.max_outer_iterations = n;
    }
    if let Some(bg) = a.background {
        config.background = LabelId(bg);
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if a.no_prune {
        config.constraints.prune = false;
    }
    if a.no_cone_fix {
        config.constraints.empty_cone_fix = false;
    }
    if a.unconstrained {
        config.constrained_labels = Some(Vec::new());
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Serialize)]
struct Inputs<'a> {
    image: &'a Path,
    scribbles: &'a Path,
    truth: Option<&'a Path>,
    fields: &'a BTreeMap<LabelId, PathBuf>,
}

#[derive(Debug, Serialize)]
struct Timing {
    load_ms: f64,
    solve_ms: f64,
    total_ms: f64,
}

#[derive(Debug, Serialize)]
struct SegmentReport<'a> {
    inputs: Inputs<'a>,
    config: &'a SolverConfig,
    dims: &'a [usize],
    labels: &'a [LabelId],
    energy: EnergyBreakdown,
    outer_iterations: usize,
    moves: usize,
    constraint_edges: BTreeMap<LabelId, usize>,
    pixel_counts: BTreeMap<LabelId, usize>,
    metrics: Option<SegMetrics>,
    timing: Timing,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn print_metrics(m: &SegMetrics) {
    for (label, s) in &m.labels {
        println!(
            "label {label}: precision {:.4} recall {:.4} f1 {:.4}",
            s.precision, s.recall, s.f1
        );
    }
}

pub fn segment(a: SegmentArgs, field_paths: BTreeMap<LabelId, PathBuf>) -> Result<(), Failure> {
    let start = Instant::now();
    let config = solver_config(&a)?;
    let image = load_any_image(&a.image)?;
    let scribbles = load_scribbles(&a.scribbles, image.grid())?;
    let truth = match &a.truth {
        Some(path) => Some(load_labeling(path, config.background)?),
        None => None,
    };
    let fields = field_paths
        .iter()
        .map(|(&label, path)| Ok((label, load_vector_field(path)?)))
        .collect::<Result<BTreeMap<LabelId, VectorField>, Error>>()?;
    let load_ms = ms(start);

    let solve_start = Instant::now();
    let out = run_segment(&image, &scribbles, &config, &fields)?;
    let solve_ms = ms(solve_start);

    save_labeling(&out.labeling, &a.out)?;
    if let Some(path) = &a.overlay {
        let png = overlay_png(&image, &out.labeling, OVERLAY_ALPHA)?;
        fs::write(path, png).map_err(|e| io_error(path, e))?;
    }
    if let Some(path) = &a.log {
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = BufWriter::new(file);
        write_log_jsonl(&out.log, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_error(path, e))?;
    }
    let metrics = truth
        .as_ref()
        .map(|t| compute_metrics(&out.labeling, t))
        .transpose()?;

    println!(
        "energy {:.6} (data {:.6}, smoothness {:.6}) after {} outer iteration(s), {solve_ms:.0} ms",
        out.energy.total, out.energy.data, out.energy.smoothness, out.outer_iterations
    );
    if let Some(m) = &metrics {
        print_metrics(m);
    }
    if let Some(path) = &a.report {
        let labels = out.labeling.labels();
        let report = SegmentReport {
            inputs: Inputs {
                image: &a.image,
                scribbles: &a.scribbles,
                truth: a.truth.as_deref(),
                fields: &field_paths,
            },
            config: &config,
            dims: image.grid().dims(),
            labels,
            energy: out.energy,
            outer_iterations: out.outer_iterations,
            moves: out.log.len(),
            constraint_edges: out.constraints.iter().map(|(l, e)| (l, e.len())).collect(),
            pixel_counts: labels.iter().map(|&l| (l, out.labeling.count(l))).collect(),
            metrics,
            timing: Timing {
                load_ms,
                solve_ms,
                total_ms: ms(start),
            },
        };
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn gen(a: GenArgs) -> Result<(), Failure> {
    let kind: SyntheticKind = a.kind.parse()?;
    if a.dims.len() != 2 {
        return Err(Failure::Usage(format!("--dims takes rows,cols, got {} value(s)", a.dims.len())));
    }
    let params = SyntheticParams {
        dims: a.dims,
        noise_std: a.noise,
        distractors: !a.no_distractors,
        seed: a.seed,
    };
    let inst = generate_synthetic(kind, &params)?;
    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let grid = inst.image.grid();
    let mut written = vec![a.out.join("image.png"), a.out.join("scribbles.png"), a.out.join("truth.png")];
    save_image(&inst.image, &written[0])?;
    save_scribbles(&inst.scribbles, grid, &written[1])?;
    save_labeling(&inst.truth, &written[2])?;
    for (label, field) in &inst.fields {
        let path = a.out.join(format!("field-{label}.hhvf"));
        field.save(&path)?;
        written.push(path);
    }
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport<'a> {
    result: &'a Path,
    truth: &'a Path,
    metrics: &'a SegMetrics,
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let background = LabelId(a.background);
    let result = load_labeling(&a.result, background)?;
    let truth = load_labeling(&a.truth, background)?;
    let metrics = compute_metrics(&result, &truth)?;
    print_metrics(&metrics);
    if let Some(path) = &a.report {
        write_json(
            path,
            &EvalReport {
                result: &a.result,
                truth: &a.truth,
                metrics: &metrics,
            },
        )?;
    }
    Ok(())
}
