use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use momalign_core::knowledge::{default_stoplist, ConceptBasis};
use momalign_core::objective::{diversity_entropy, diversity_std};
use momalign_core::pipeline::{
    generate_synthetic, instance_embeddings, similarity_matrix, train, write_metrics_csv,
    Checkpoint, PairedDataset, Split, SyntheticConfig,
};

use crate::config::ConfigArgs;
use crate::embeddings::{read_rows, similarities, write_rows, EmbeddingRow, Role};

#[derive(Parser, Debug)]
#[command(
    name = "momalign",
    version,
    about = "Diversity-sensitive momentum contrastive image-text alignment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded synthetic paired dataset (train.jsonl, val.jsonl).
    GenData(GenDataArgs),
    /// Build the concept vocabulary and co-occurrence graph from captions.
    BuildConcepts(BuildConceptsArgs),
    /// Train a model; writes checkpoint.json, metrics.csv and config.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset; writes eval.json.
    Eval(EvalArgs),
    /// Embed a dataset with a checkpoint; writes embeddings.jsonl and rankings.csv.
    Infer(InferArgs),
    /// Per-anchor spread, entropy and diversity scores of an embeddings file.
    DiversityReport(DiversityArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Total images; the last --val-images go to val.jsonl.
    #[arg(long, default_value_t = 600)]
    pub n_images: usize,
    #[arg(long, default_value_t = 100)]
    pub val_images: usize,
    #[arg(long, default_value_t = 1)]
    pub captions_per_image: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
}

#[derive(Args, Debug)]
pub struct BuildConceptsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training split (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Validation split; enables per-epoch recalls and best-epoch selection.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Concept basis from build-concepts; built from --data when omitted.
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Similarity blend; defaults to the checkpoint's evaluation blend.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Captions listed per image in rankings.csv.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiversityArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::BuildConcepts(a) => build_concepts(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Infer(a) => infer(&a),
        Command::DiversityReport(a) => diversity_report(&a),
    }
}

fn out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}

fn load_data(path: &Path, split: Split) -> Result<PairedDataset> {
    PairedDataset::load(path, split)
        .with_context(|| format!("cannot load dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn check_beta(beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        bail!("invalid config: beta must lie in [0, 1], got {beta}");
    }
    Ok(beta)
}

fn gen_data(a: &GenDataArgs) -> Result<String> {
    if a.val_images >= a.n_images {
        bail!(
            "--val-images ({}) must be smaller than --n-images ({})",
            a.val_images,
            a.n_images
        );
    }
    let cfg = SyntheticConfig {
        n_images: a.n_images,
        r: a.captions_per_image,
        latent_classes: a.classes,
        noise: a.noise,
        seed: a.seed,
        image_dim: a.feature_dim,
        caption_dim: a.feature_dim,
        ..SyntheticConfig::default()
    };
    cfg.validate().context("invalid config")?;
    out_dir(&a.out)?;
    let data = generate_synthetic(&cfg)?;
    let (tr, va) =
        data.dataset
            .split_images(a.n_images - a.val_images, Split::Train, Split::Val)?;
    tr.save(&a.out.join("train.jsonl"))?;
    va.save(&a.out.join("val.jsonl"))?;
    Ok(format!(
        "gen-data: {} train / {} val captions ({} images, seed {}) -> {}",
        tr.len(),
        va.len(),
        a.n_images,
        a.seed,
        a.out.display()
    ))
}

fn build_concepts(a: &BuildConceptsArgs) -> Result<String> {
    let cfg = a.cfg.resolve()?;
    let data = load_data(&a.data, Split::Train)?;
    out_dir(&a.out)?;
    let basis = ConceptBasis::build(
        &data.corpus(),
        cfg.g_concepts,
        &default_stoplist(),
        cfg.dim,
        cfg.seed,
        cfg.eps_t,
    )?;
    let path = a.out.join("concepts.json");
    basis.save(&path)?;
    let edges = basis.hsc.data().iter().filter(|&&v| v != 0.0).count();
    Ok(format!(
        "build-concepts: {} concepts, {edges} graph edges (eps_t {}) -> {}",
        basis.len(),
        cfg.eps_t,
        path.display()
    ))
}

fn train_cmd(a: &TrainArgs) -> Result<String> {
    let cfg = a.cfg.resolve()?;
    let data = load_data(&a.data, Split::Train)?;
    let val = a
        .val
        .as_deref()
        .map(|p| load_data(p, Split::Val))
        .transpose()?;
    let basis = match &a.concepts {
        Some(p) => Some(
            ConceptBasis::load(p)
                .with_context(|| format!("cannot load concepts {}", p.display()))?,
        ),
        None => None,
    };
    out_dir(&a.out)?;
    std::fs::write(
        a.out.join("config.json"),
        serde_json::to_string_pretty(&cfg)?,
    )?;
    let outcome = train(&cfg, &data, val.as_ref(), basis)?;
    write_metrics_csv(&a.out.join("metrics.csv"), &outcome.log)?;
    let ckpt = Checkpoint::new(
        cfg.clone(),
        outcome.best_epoch,
        outcome.best,
        outcome.state.basis,
    )?;
    ckpt.save(&a.out.join("checkpoint.json"))?;
    let mut summary = format!("train: {} epochs, seed {}", cfg.epochs, cfg.seed);
    if let Some(e) = outcome.log.last() {
        write!(summary, ", final loss {:.6}", e.losses.total)?;
        if let Some(r) = e.eval {
            write!(
                summary,
                ", val R@1 {:.1}/{:.1}, R@sum {:.1}",
                r.r1_t, r.r1_i, r.rsum
            )?;
        }
    }
    write!(
        summary,
        ", best epoch {} -> {}",
        outcome.best_epoch,
        a.out.display()
    )?;
    Ok(summary)
}

fn eval(a: &EvalArgs) -> Result<String> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let beta = check_beta(a.beta.unwrap_or(ckpt.config.eval_beta()))?;
    let data = load_data(&a.data, Split::Test)?;
    out_dir(&a.out)?;
    let r = ckpt.evaluate(&data, beta)?;
    std::fs::write(a.out.join("eval.json"), serde_json::to_string_pretty(&r)?)?;
    Ok(format!(
        "eval: R@1/5/10 text {:.1}/{:.1}/{:.1} image {:.1}/{:.1}/{:.1} R@sum {:.1} (beta {beta})",
        r.r1_t, r.r5_t, r.r10_t, r.r1_i, r.r5_i, r.r10_i, r.rsum
    ))
}

fn infer(a: &InferArgs) -> Result<String> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let beta = check_beta(a.beta.unwrap_or(ckpt.config.eval_beta()))?;
    let data = load_data(&a.data, Split::Test)?;
    out_dir(&a.out)?;

    let (v, w) = instance_embeddings(&ckpt.model, &data)?;
    let records = data.records();
    let mut first_caption = vec![None; data.image_count()];
    for (j, &img) in data.caption_image().iter().enumerate() {
        first_caption[img].get_or_insert(j);
    }
    let mut rows = Vec::with_capacity(data.image_count() + data.len());
    for (img, first) in first_caption.iter().enumerate() {
        let j = first.expect("every image has a caption");
        rows.push(EmbeddingRow {
            id: data.image_id(img).to_string(),
            role: Role::Anchor,
            embedding: v.row(j).to_vec(),
            positive: Some(records[j].pair_id.clone()),
        });
    }
    for (j, r) in records.iter().enumerate() {
        rows.push(EmbeddingRow {
            id: r.pair_id.clone(),
            role: Role::Candidate,
            embedding: w.row(j).to_vec(),
            positive: None,
        });
    }
    write_rows(&a.out.join("embeddings.jsonl"), &rows)?;

    let sim = similarity_matrix(&ckpt.model, &ckpt.basis, &data, beta)?;
    let mut csv = String::from("image_id,rank,pair_id,score\n");
    for img in 0..sim.rows() {
        let row = sim.row(img);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        for (rank, &j) in order.iter().take(a.top_k).enumerate() {
            writeln!(
                csv,
                "{},{},{},{}",
                data.image_id(img),
                rank + 1,
                records[j].pair_id,
                row[j]
            )?;
        }
    }
    std::fs::write(a.out.join("rankings.csv"), csv)?;
    Ok(format!(
        "infer: {} images x {} captions (beta {beta}) -> {}",
        data.image_count(),
        data.len(),
        a.out.display()
    ))
}

fn diversity_report(a: &DiversityArgs) -> Result<String> {
    let cfg = a.cfg.resolve()?;
    let rows = read_rows(&a.embeddings)?;
    let (ids, s) = similarities(&rows)?;
    let sd = diversity_std(&s, cfg.eps_div)?;
    let ent = diversity_entropy(&s, cfg.eps_div)?;
    out_dir(&a.out)?;
    let mut csv = String::from("anchor_id,sd,div_std,entropy_bits,div_ent\n");
    for (i, id) in ids.iter().enumerate() {
        writeln!(
            csv,
            "{id},{},{},{},{}",
            sd.spread[i], sd.normalized[i], ent.spread[i], ent.normalized[i]
        )?;
    }
    let path = a.out.join("diversity.csv");
    std::fs::write(&path, csv)?;
    let min = sd.normalized.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "diversity-report: {} anchors, min div_std {min:.6} (eps {}) -> {}",
        ids.len(),
        cfg.eps_div,
        path.display()
    ))
}
