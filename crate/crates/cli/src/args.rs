//! Command-line definitions and config-file merging.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "signsplit", version, about = "Signer clustering, leakage-free splits and sign detection")]
pub struct Cli {
    /// Worker threads for data-parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Root seed; stages derive their own seeds from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (or directory for the synth commands).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    pub fn out(&self) -> anyhow::Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => bail!("--out is required"),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_signers: Option<usize>,
    #[arg(long)]
    pub videos_per_signer: Option<usize>,
    #[arg(long)]
    pub gallery_size: Option<usize>,
    #[arg(long)]
    pub gallery_noise_sigma: Option<f64>,
    #[arg(long)]
    pub center_separation: Option<f64>,
    #[arg(long)]
    pub n_frames: Option<usize>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub mean_bout_s: Option<f64>,
    #[arg(long)]
    pub idle_gesture_rate: Option<f64>,
    #[arg(long)]
    pub style_offset: Option<f64>,
    #[arg(long)]
    pub signing_speed: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub hidden_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Synthetic face-embedding corpus: manifest.jsonl and embeddings.jsonl.
    SynthEmbeddings {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Synthetic pose corpus: manifest.jsonl (with annotations) and poses.jsonl.
    SynthPoses {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// DBSCAN over gallery embeddings and per-video vote into an assignment.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.36)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        min_pts: usize,
        /// Subsample this many gallery rows per video before clustering.
        #[arg(long)]
        gallery_size: Option<usize>,
    },
    /// Clustering accuracy over an epsilon grid (and optionally gallery sizes).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.24,0.28,0.32,0.36,0.4,0.44,0.48,0.52")]
        eps_grid: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        min_pts: usize,
        #[arg(long, value_delimiter = ',')]
        gallery_sizes: Vec<usize>,
    },
    /// Signer overlap of a split, or video overlap of a segment split.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "segment_split")]
        split: Option<PathBuf>,
        #[arg(long, required_unless_present = "segment_split")]
        assignment: Option<PathBuf>,
        #[arg(long, required_unless_present = "segment_split")]
        manifest: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["split", "assignment", "manifest"])]
        segment_split: Option<PathBuf>,
    },
    /// Signer-disjoint, video-disjoint or (leaky) segment-shuffle split.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "signer")]
        method: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        /// Segment file, for the segment-shuffle method.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.6,0.2,0.2")]
        ratios: Vec<f64>,
        #[arg(long, default_value = "train-only")]
        garbage_policy: String,
    },
    /// Divides the test partition by whether its signers appear in train.
    SplitTestByOverlap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Normalized landmark flow and frame labels for every video.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        poses: PathBuf,
    },
    /// Fixed-length windows over frame features.
    Segments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20)]
        length: usize,
        #[arg(long, default_value_t = 20)]
        stride: usize,
    },
    /// Trains a detector on the split's train partition, selecting on dev.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "segments", conflicts_with = "segments")]
        features: Option<PathBuf>,
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        split: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluates a checkpoint on one partition (or one test subdivision part).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required_unless_present = "segments", conflicts_with = "segments")]
        features: Option<PathBuf>,
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long, required_unless_present = "subdivision")]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        partition: String,
        /// Output of split-test-by-overlap; use with --part.
        #[arg(long, requires = "part")]
        subdivision: Option<PathBuf>,
        /// with_overlap or no_overlap.
        #[arg(long)]
        part: Option<String>,
    },
    /// Overlap effect: video-random vs signer-disjoint training, over seeds.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// `default` to generate synthetic corpora (synth flags apply).
        #[arg(long, conflicts_with_all = ["manifest", "poses", "assignment"])]
        synth: Option<String>,
        #[arg(long, requires_all = ["poses", "assignment"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[command(flatten)]
        synth_args: SynthArgs,
        #[arg(long)]
        hidden_size: Option<usize>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// frame or segment.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Renders line-record outputs as tables and Venn summaries.
    Report {
        #[command(flatten)]
        common: Common,
        /// Record files written by other subcommands.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, found {raw:?}", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if let Some(v) = a.strip_prefix("--config=") {
            Some(PathBuf::from(v))
        } else if a == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            None
        }
    })
}

fn has_flag(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&prefix))
}

/// Appends `--key value` for every config entry whose flag is not already
/// on the command line, so explicit flags win.
pub fn merge_config(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = signsplit::data::io::read_text(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut merged = argv;
    let mut extra = Vec::new();
    for (key, value) in parse_config(&text)? {
        if key == "config" || has_flag(&merged, &key) {
            continue;
        }
        extra.push(format!("--{key}={value}"));
    }
    merged.extend(extra);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn config_lines() {
        let kv = parse_config("# c\nepsilon = 0.4\n\nmin_pts=5\n").unwrap();
        assert_eq!(kv, vec![("epsilon".into(), "0.4".into()), ("min-pts".into(), "5".into())]);
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "epsilon = 0.5\nmin-pts = 4\n").unwrap();
        let args = argv(&format!("signsplit cluster --epsilon 0.3 --config {}", cfg.display()));
        let merged = merge_config(args.clone()).unwrap();
        assert_eq!(merged[..args.len()], args[..]);
        assert_eq!(merged[args.len()..], ["--min-pts=4".to_string()]);
    }
}
