//! `lhst`: file-based front end to the label engine and the simulator.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lhst_core::lhpg::{bridge_vocabulary, Embedder, EmbeddingTable, DEFAULT_TEMPLATE};
use lhst_core::loss::{lhst_objective, FixedDetectionLoss, ObjectiveConfig, Reduction, WeakSample};
use lhst_core::matrix_io::{label_rows, labels_to_matrix, matrix_to_labels, single_row, write_matrix};
use lhst_core::pseudo::{
    generate_weighted_labels, ImageReduction, ImageScoreVector, PredictionMatrix, PseudoLabelConfig,
    WeightedBoxLabels, WeightedImageLabel,
};
use lhst_core::sim::{generate_world, threshold_sweep, train, SimConfig, CONFIG_KEYS};
use lhst_core::{hierarchy::expand_labels_with_depth, HierarchyGraph, LabelVector, Vocabulary};
use ndarray::Array2;

use io::{read_input, read_matrix, write_output, CliError};

const HIERARCHY_FORMAT: &str = "\
HIERARCHY FILE
  One record per line; `#` starts a comment line.
    N <synset_id> <lemma>[,<lemma>...]   declare a synset and its lemmas
    E <child_id> <parent_id>             hyponym -> hypernym edge
  Lemmas are trimmed, lowercased and `_` becomes a space. Edges may only
  name declared synsets and must not form a cycle.";

const VOCAB_FORMAT: &str = "\
VOCABULARY FILE
  One class per line, in column order: `<class name>[<TAB><synset_id>]`.
  Classes without a synset keep their own bit and are never expanded.";

const MATRIX_FORMAT: &str = "\
MATRIX FILE
  A header `N C` followed by N rows of C whitespace-separated numbers.
  A file may hold several matrices; a `# <name>` line before a header names
  the block. Select a block with `path#name`; without a name the first
  block is used.";

#[derive(Parser)]
#[command(name = "lhst", version, about = "Hierarchy-aware weak-label engine and self-training simulator")]
struct Cli {
    /// Print a short note about what was written to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArg {
    /// Write here instead of standard output. The file is replaced
    /// atomically, and only when the command succeeds.
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand label vectors over the hypernym/hyponym closure.
    #[command(after_long_help = format!(
        "{HIERARCHY_FORMAT}\n\n{VOCAB_FORMAT}\n\n{MATRIX_FORMAT}\n\n\
         LABELS: an N x C matrix of 0/1, one label vector per row.\n\
         OUTPUT: the expanded N x C matrix as block `expanded`."
    ))]
    Expand {
        /// Hierarchy file (format below).
        #[arg(long, value_name = "PATH")]
        hierarchy: PathBuf,
        /// Vocabulary file; its line order fixes the class columns.
        #[arg(long, value_name = "PATH")]
        vocab: PathBuf,
        /// Label matrix (`path` or `path#block`).
        #[arg(long, value_name = "PATH")]
        labels: String,
        /// Follow at most this many edges from each seed.
        #[arg(long, value_name = "N")]
        max_depth: Option<usize>,
        #[command(flatten)]
        out: OutputArg,
    },

    /// Filter, merge and weight proposal predictions for one image.
    #[command(name = "pseudo-label", after_long_help = format!(
        "{HIERARCHY_FORMAT}\n\n{VOCAB_FORMAT}\n\n{MATRIX_FORMAT}\n\n\
         INPUTS: --preds is N x C proposal probabilities; --labels is the 1 x C\n\
         image label; --image-scores is an optional 1 x C image score vector.\n\
         OUTPUT blocks: box_labels (K x C), box_weights (K x C), kept_indices\n\
         (K x 1, original proposal rows), kept_predictions (K x C), image_label\n\
         (1 x C), image_weights (1 x C), image_scores (1 x C, the scores used)."
    ))]
    PseudoLabel {
        /// Hierarchy file (format below).
        #[arg(long, value_name = "PATH")]
        hierarchy: PathBuf,
        /// Vocabulary file; its line order fixes the class columns.
        #[arg(long, value_name = "PATH")]
        vocab: PathBuf,
        /// Proposal probability matrix (`path` or `path#block`).
        #[arg(long, value_name = "PATH")]
        preds: String,
        /// Image label (`1 x C`).
        #[arg(long, value_name = "PATH")]
        labels: String,
        /// Image-level scores; reduced from the proposals when absent.
        #[arg(long, value_name = "PATH")]
        image_scores: Option<String>,
        /// Confidence threshold in [0, 1].
        #[arg(short, long, default_value_t = 0.75)]
        t: f64,
        /// Rows of --preds are softmax outputs and must sum to 1.
        #[arg(long)]
        normalized: bool,
        /// Reduction used when --image-scores is absent.
        #[arg(long, value_enum, default_value_t = ReductionArg::Max)]
        image_reduction: ReductionArg,
        /// Expanded classes confirmed by a row's own argmax get weight 1.
        #[arg(long)]
        confirm_pseudo: bool,
        /// Follow at most this many edges from each seed.
        #[arg(long, value_name = "N")]
        max_depth: Option<usize>,
        #[command(flatten)]
        out: OutputArg,
    },

    /// Evaluate the weighted objective for one image.
    #[command(after_long_help = format!(
        "{MATRIX_FORMAT}\n\n\
         INPUTS: --preds, --labels and --weights are K x C matrices over the kept\n\
         proposals (for example `out.txt#kept_predictions`, `out.txt#box_labels`,\n\
         `out.txt#box_weights`). The image term needs all three of\n\
         --image-scores, --image-label and --image-weights (1 x C each).\n\
         OUTPUT: lines `det_loss`, `box_loss`, `image_loss`, `total`, each\n\
         followed by a TAB and the value."
    ))]
    Loss {
        /// Kept proposal probabilities (`path` or `path#block`).
        #[arg(long, value_name = "PATH")]
        preds: String,
        /// Box label matrix.
        #[arg(long, value_name = "PATH")]
        labels: String,
        /// Box weight matrix.
        #[arg(long, value_name = "PATH")]
        weights: String,
        /// Image score vector.
        #[arg(long, value_name = "PATH", requires_all = ["image_label", "image_weights"])]
        image_scores: Option<String>,
        /// Image label vector.
        #[arg(long, value_name = "PATH", requires_all = ["image_scores", "image_weights"])]
        image_label: Option<String>,
        /// Image weight vector.
        #[arg(long, value_name = "PATH", requires_all = ["image_scores", "image_label"])]
        image_weights: Option<String>,
        /// Supervised detection term, added as is.
        #[arg(long, default_value_t = 0.0)]
        det_loss: f64,
        /// Multiplier on the detection term.
        #[arg(long, default_value_t = 1.0)]
        det_scale: f64,
        /// Multiplier on the box term.
        #[arg(long, default_value_t = 1.0)]
        box_scale: f64,
        /// Multiplier on the image term.
        #[arg(long, default_value_t = 1.0)]
        image_scale: f64,
        #[command(flatten)]
        out: OutputArg,
    },

    /// Map test-vocabulary names to their nearest synsets and emit prompts.
    #[command(after_long_help = format!(
        "{HIERARCHY_FORMAT}\n\n\
         TEST VOCABULARY: one name per line, matched exactly as written. Blank\n\
         lines and lines starting with `#` are skipped.\n\n\
         EMBEDDINGS: one entry per line, `<string><TAB><v1> <v2> ...`; vectors\n\
         are normalized on load. Without --embeddings, deterministic mock\n\
         vectors are derived from --mock-seed. With both, mock vectors fill in\n\
         strings missing from the table.\n\n\
         OUTPUT: a `#` header, then one TAB-separated row per name:\n\
         test_name, synset, lemma, similarity, prompt."
    ))]
    Bridge {
        /// Names to bridge, one per line.
        #[arg(long, value_name = "PATH")]
        test_vocab: PathBuf,
        /// Hierarchy file (format below).
        #[arg(long, value_name = "PATH")]
        hierarchy: PathBuf,
        /// Embedding table (format below).
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Seed for deterministic mock embeddings.
        #[arg(long, value_name = "SEED")]
        mock_seed: Option<u64>,
        /// Mock vector dimension (ignored with --embeddings).
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Prompt template with exactly one `{}`.
        #[arg(long, default_value = DEFAULT_TEMPLATE)]
        template: String,
        #[command(flatten)]
        out: OutputArg,
    },

    /// Run one seeded self-training simulation.
    #[command(after_long_help = config_help(
        "OUTPUT: a TAB-separated trace `iter det_loss box_loss image_loss total`\n\
         under a `#` header, then a `# summary` block of `key<TAB>value` lines."
    ))]
    Simulate {
        /// Simulation config file (keys below).
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Extra `key=value` settings, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[command(flatten)]
        out: OutputArg,
    },

    /// Final lhst accuracy for each threshold, all else fixed.
    #[command(after_long_help = config_help(
        "The `method` and `t` keys are ignored.\n\
         OUTPUT: a `# t<TAB>accuracy` header, then one row per threshold."
    ))]
    Sweep {
        /// Simulation config file (keys below).
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Extra `key=value` settings, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', default_value = "0.65,0.70,0.75,0.80,0.85")]
        t: Vec<f64>,
        #[command(flatten)]
        out: OutputArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Max,
    Mean,
}

fn config_help(output: &str) -> String {
    let mut help = String::from(
        "CONFIG FILE\n  `key = value` lines; `#` starts a comment; unset keys keep defaults.\n",
    );
    for (key, what) in CONFIG_KEYS {
        help.push_str(&format!("    {key:<16} {what}\n"));
    }
    help.push('\n');
    help.push_str(output);
    help
}

fn load_hierarchy(path: &Path) -> Result<HierarchyGraph, CliError> {
    HierarchyGraph::parse_str(&read_input(path)?).map_err(|e| CliError::at(path, e))
}

fn load_vocab(path: &Path, graph: &HierarchyGraph) -> Result<Vocabulary, CliError> {
    Vocabulary::parse_str(&read_input(path)?, graph).map_err(|e| CliError::at(path, e))
}

fn load_sim_config(path: &Path, overrides: &[String]) -> Result<SimConfig, CliError> {
    let mut text = read_input(path)?;
    for o in overrides {
        text.push('\n');
        text.push_str(o);
    }
    SimConfig::parse_str(&text).map_err(|e| CliError::at(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (text, out) = match cli.command {
        Command::Expand {
            hierarchy,
            vocab,
            labels,
            max_depth,
            out,
        } => {
            let graph = load_hierarchy(&hierarchy)?;
            let vocab = load_vocab(&vocab, &graph)?;
            let rows = label_rows(&read_matrix(&labels)?)?;
            let mut expanded = Array2::from_elem((rows.len(), vocab.len()), false);
            for (i, y) in rows.iter().enumerate() {
                let e = expand_labels_with_depth(&graph, &vocab, y, max_depth)?;
                expanded.row_mut(i).assign(&ndarray::Array1::from(e.bits().to_vec()));
            }
            let mut text = String::new();
            write_matrix(&mut text, Some("expanded"), &labels_to_matrix(&expanded));
            (text, out)
        }

        Command::PseudoLabel {
            hierarchy,
            vocab,
            preds,
            labels,
            image_scores,
            t,
            normalized,
            image_reduction,
            confirm_pseudo,
            max_depth,
            out,
        } => {
            let graph = load_hierarchy(&hierarchy)?;
            let vocab = load_vocab(&vocab, &graph)?;
            let preds = PredictionMatrix::new(read_matrix(&preds)?, normalized)?;
            let y_cls = LabelVector::new(matrix_to_labels(&read_matrix(&labels)?)?.row(0).to_vec());
            let p_image = match &image_scores {
                Some(p) => Some(ImageScoreVector::new(single_row(&read_matrix(p)?, "image scores")?)?),
                None => None,
            };
            let cfg = PseudoLabelConfig {
                threshold: t,
                image_reduction: match image_reduction {
                    ReductionArg::Max => ImageReduction::Max,
                    ReductionArg::Mean => ImageReduction::Mean,
                },
                confirm_pseudo,
                max_depth,
            };
            let generated = generate_weighted_labels(&preds, &y_cls, &graph, &vocab, p_image.as_ref(), &cfg)?;
            let used_scores = match p_image {
                Some(p) => p,
                None => lhst_core::pseudo::image_score_from_proposals(&preds, cfg.image_reduction)?,
            };
            let boxes = &generated.boxes;
            let c = vocab.len();
            let kept = Array2::from_shape_fn((boxes.rows(), 1), |(i, _)| boxes.kept_indices[i] as f64);
            let kept_preds = preds.probs().select(ndarray::Axis(0), &boxes.kept_indices);
            let row = |v: Vec<f64>| Array2::from_shape_vec((1, c), v).expect("length C");
            let mut text = String::new();
            write_matrix(&mut text, Some("box_labels"), &labels_to_matrix(&boxes.labels));
            write_matrix(&mut text, Some("box_weights"), &boxes.weights);
            write_matrix(&mut text, Some("kept_indices"), &kept);
            write_matrix(&mut text, Some("kept_predictions"), &kept_preds);
            write_matrix(
                &mut text,
                Some("image_label"),
                &row(generated.image.label.bits().iter().map(|&b| f64::from(u8::from(b))).collect()),
            );
            write_matrix(&mut text, Some("image_weights"), &row(generated.image.weights.clone()));
            write_matrix(&mut text, Some("image_scores"), &row(used_scores.probs().to_vec()));
            (text, out)
        }

        Command::Loss {
            preds,
            labels,
            weights,
            image_scores,
            image_label,
            image_weights,
            det_loss,
            det_scale,
            box_scale,
            image_scale,
            out,
        } => {
            let preds = PredictionMatrix::new(read_matrix(&preds)?, false)?;
            let labels = matrix_to_labels(&read_matrix(&labels)?)?;
            let boxes = WeightedBoxLabels {
                kept_indices: (0..labels.nrows()).collect(),
                weights: read_matrix(&weights)?,
                labels,
            };
            let c = preds.classes();
            let (p_image, image) = match (image_scores, image_label, image_weights) {
                (Some(s), Some(l), Some(w)) => (
                    ImageScoreVector::new(single_row(&read_matrix(&s)?, "image scores")?)?,
                    WeightedImageLabel {
                        label: LabelVector::new(matrix_to_labels(&read_matrix(&l)?)?.row(0).to_vec()),
                        weights: single_row(&read_matrix(&w)?, "image weights")?,
                    },
                ),
                // clap enforces all-or-none; a zero-weight image term adds nothing
                _ => (
                    ImageScoreVector::new(vec![0.5; c])?,
                    WeightedImageLabel {
                        label: LabelVector::zeros(c),
                        weights: vec![0.0; c],
                    },
                ),
            };
            let sample = WeakSample {
                preds: &preds,
                p_image: &p_image,
                boxes: &boxes,
                image: &image,
            };
            let config = ObjectiveConfig {
                det_scale,
                box_scale,
                image_scale,
                reduction: Reduction::Sum,
            };
            let b = lhst_objective(&FixedDetectionLoss(det_loss), &[sample], &config)?;
            let fmt = lhst_core::matrix_io::format_value;
            let text = format!(
                "det_loss\t{}\nbox_loss\t{}\nimage_loss\t{}\ntotal\t{}\n",
                fmt(b.det_loss),
                fmt(b.box_loss),
                fmt(b.image_loss),
                fmt(b.total)
            );
            (text, out)
        }

        Command::Bridge {
            test_vocab,
            hierarchy,
            embeddings,
            mock_seed,
            dim,
            template,
            out,
        } => {
            let names: Vec<String> = read_input(&test_vocab)?
                .lines()
                .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect();
            let graph = load_hierarchy(&hierarchy)?;
            let embedder = match &embeddings {
                Some(path) => {
                    let table = EmbeddingTable::parse_str(&read_input(path)?).map_err(|e| CliError::at(path, e))?;
                    let embedder = Embedder::from_table(table);
                    match mock_seed {
                        Some(seed) => embedder.with_mock_fallback(seed),
                        None => embedder,
                    }
                }
                None => Embedder::mock(dim, mock_seed.unwrap_or(0))?,
            };
            let result = bridge_vocabulary(&names, &graph, &embedder, &template)?;
            (result.to_tsv(), out)
        }

        Command::Simulate { config, overrides, out } => {
            let cfg = load_sim_config(&config, &overrides)?;
            let (world, data) = generate_world(&cfg.world)?;
            (train(&world, &data, &cfg.train)?.to_tsv(), out)
        }

        Command::Sweep {
            config,
            overrides,
            t,
            out,
        } => {
            let cfg = load_sim_config(&config, &overrides)?;
            let (world, data) = generate_world(&cfg.world)?;
            let mut text = String::from("# t\taccuracy\n");
            for (t, acc) in threshold_sweep(&world, &data, &t, &cfg.train)? {
                let fmt = lhst_core::matrix_io::format_value;
                text.push_str(&format!("{}\t{}\n", fmt(t), fmt(acc)));
            }
            (text, out)
        }
    };
    write_output(out.output.as_deref(), &text)?;
    if cli.verbose {
        let target = out
            .output
            .as_ref()
            .map_or_else(|| "standard output".to_string(), |p| p.display().to_string());
        eprintln!("wrote {} lines to {target}", text.lines().count());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
