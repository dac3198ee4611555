use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use hhseg_core::LabelId;

#[derive(Debug, Parser)]
#[command(name = "hhseg", version, about = "Multi-object segmentation with hedgehog shape priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment an image from scribbles.
    ///
    /// A prescribed vector field for label N is given with `--field-N <path>`;
    /// it replaces the field derived from that label's scribble.
    Segment(SegmentArgs),
    /// Write a synthetic instance (image, scribbles, truth, fields).
    Gen(GenArgs),
    /// Score a label map against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// PNG image, or a JSON volume header.
    #[arg(long)]
    pub image: PathBuf,
    /// Indexed label PNG (index = label id, 0 = no scribble), or a JSON volume header.
    #[arg(long)]
    pub scribbles: PathBuf,
    /// Ground-truth label map; enables metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output label map.
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-step energy log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Overlay PNG of the result on the image (2D only).
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Solver configuration JSON; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cone half-angle in radians, within [0, pi/2].
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// 4, 8, 16 or 32 in 2D; 6 or 26 in 3D.
    #[arg(long)]
    pub neighborhood: Option<usize>,
    /// Mixture components per color model.
    #[arg(long = "gmm-k")]
    pub gmm_k: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub background: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep conflicting constraint edges.
    #[arg(long)]
    pub no_prune: bool,
    /// Skip the fallback edge for pixels whose cone admits no neighbor.
    #[arg(long)]
    pub no_cone_fix: bool,
    /// Plain Potts model: no shape constraints on any label.
    #[arg(long)]
    pub unconstrained: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// stars, lungs, disk, octagon or rotating-field.
    pub kind: String,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid size as rows,cols.
    #[arg(long, value_delimiter = ',', default_values_t = [128, 128])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub no_distractors: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub background: u8,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Pulls `--field-<label> <path>` and `--field-<label>=<path>` out of argv,
/// since their names are not known up front.
pub fn split_field_flags(
    args: impl IntoIterator<Item = OsString>,
) -> Result<(Vec<OsString>, BTreeMap<LabelId, PathBuf>), String> {
    let mut rest = Vec::new();
    let mut fields = BTreeMap::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(tail) = arg.to_str().and_then(|s| s.strip_prefix("--field-")) else {
            rest.push(arg);
            continue;
        };
        let (label, inline) = match tail.split_once('=') {
            Some((l, p)) => (l.to_string(), Some(PathBuf::from(p))),
            None => (tail.to_string(), None),
        };
        let id: u8 = label
            .parse()
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| format!("--field-{label}: label must be an integer in 1..=255"))?;
        let path = match inline {
            Some(p) => p,
            None => it
                .next()
                .map(PathBuf::from)
                .ok_or_else(|| format!("--field-{label} needs a path"))?,
        };
        if fields.insert(LabelId(id), path).is_some() {
            return Err(format!("--field-{label} given twice"));
        }
    }
    Ok((rest, fields))
}
