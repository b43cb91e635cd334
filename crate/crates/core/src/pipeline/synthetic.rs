//! Seeded synthetic paired data.
//!
//! Every token (class attribute, per-image detail, stopword) has a latent
//! vector. An image is the set of its tokens' latents pushed through a fixed
//! image projection, one region per token plus one background region; each
//! caption lists the same tokens, shuffled and mixed with stopwords, pushed
//! through a fixed text projection. Gaussian noise is added independently to
//! every feature row.

use serde::{Deserialize, Serialize};

use super::{PairRecord, PairedDataset, Split};
use crate::error::{invalid, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::representation::FeatureSequence;

const OBJECTS: &[&str] = &[
    "dog", "cat", "horse", "bird", "car", "boat", "train", "plane", "chair", "table", "clock",
    "kite", "bench", "tree", "house", "bridge",
];
const ATTRIBUTES: &[&str] = &[
    "red", "blue", "green", "yellow", "black", "white", "small", "large", "old", "young", "wooden",
    "metal", "striped", "spotted", "shiny", "dusty",
];
const DETAILS: &[&str] = &[
    "grass", "water", "sky", "road", "snow", "sand", "wall", "fence", "window", "door", "street",
    "field", "beach", "river", "hill", "cloud", "light", "shadow", "rock", "flower", "leaf",
    "pole", "sign", "roof", "ball", "frisbee", "umbrella", "bag", "hat", "person", "child",
    "crowd", "sun", "moon", "lamp", "rug", "mirror", "shelf", "book", "bottle", "cup", "plate",
    "bowl", "fruit", "cake", "pizza", "phone", "laptop",
];
const STOPWORDS: &[&str] = &["a", "the", "with", "near", "and", "of", "on"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_images: usize,
    /// Captions per image.
    pub r: usize,
    pub latent_classes: usize,
    /// Standard deviation of the per-component Gaussian noise.
    pub noise: f64,
    pub seed: u64,
    pub image_dim: usize,
    pub caption_dim: usize,
    pub latent_dim: usize,
    pub details_per_image: usize,
    pub detail_vocab: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_images: 600,
            r: 1,
            latent_classes: 8,
            noise: 0.2,
            seed: 7,
            image_dim: 32,
            caption_dim: 32,
            latent_dim: 32,
            details_per_image: 3,
            detail_vocab: 48,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_classes < 2 {
            return Err(invalid("synthetic data needs at least 2 latent classes"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(invalid(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        if self.n_images == 0 || self.r == 0 {
            return Err(invalid("n_images and r must be positive"));
        }
        if self.image_dim == 0 || self.caption_dim == 0 || self.latent_dim == 0 {
            return Err(invalid("feature dimensions must be positive"));
        }
        if self.details_per_image > self.detail_vocab {
            return Err(invalid("details_per_image exceeds detail_vocab"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub dataset: PairedDataset,
    /// Latent class of each image, in image order.
    pub image_classes: Vec<usize>,
}

fn word(list: &[&str], i: usize, prefix: &str) -> String {
    list.get(i)
        .map_or_else(|| format!("{prefix}{i}"), |w| w.to_string())
}

struct Vocabulary {
    words: Vec<String>,
    latents: Matrix,
    classes: usize,
    details: usize,
}

impl Vocabulary {
    fn class_tokens(&self, c: usize) -> [usize; 2] {
        [2 * c, 2 * c + 1]
    }

    fn detail_token(&self, d: usize) -> usize {
        2 * self.classes + d
    }

    fn stopword_token(&self, s: usize) -> usize {
        2 * self.classes + self.details + s
    }
}

fn features(
    latents: &[Vec<f64>],
    projection: &Matrix,
    noise: f64,
    rng: &mut SeededRng,
) -> Result<FeatureSequence> {
    let clean = Matrix::from_rows(latents)?.matmul(projection)?;
    let noisy = if noise > 0.0 {
        clean.add(&rng.normal_matrix(clean.rows(), clean.cols(), noise))?
    } else {
        clean
    };
    FeatureSequence::new(noisy)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut tables = SeededRng::fork(cfg.seed, 0);
    let mut words = Vec::new();
    for c in 0..cfg.latent_classes {
        words.push(word(ATTRIBUTES, c, "attribute"));
        words.push(word(OBJECTS, c, "object"));
    }
    words.extend((0..cfg.detail_vocab).map(|d| word(DETAILS, d, "detail")));
    words.extend(STOPWORDS.iter().map(|s| s.to_string()));
    let vocab = Vocabulary {
        latents: tables.unit_rows(words.len(), cfg.latent_dim),
        words,
        classes: cfg.latent_classes,
        details: cfg.detail_vocab,
    };
    let image_proj = tables.normal_matrix(cfg.latent_dim, cfg.image_dim, 1.0);
    let caption_proj = tables.normal_matrix(cfg.latent_dim, cfg.caption_dim, 1.0);

    let mut rng = SeededRng::fork(cfg.seed, 1);
    let mut records = Vec::with_capacity(cfg.n_images * cfg.r);
    let mut image_classes = Vec::with_capacity(cfg.n_images);
    for img in 0..cfg.n_images {
        let class = rng.below(cfg.latent_classes);
        image_classes.push(class);
        let mut details: Vec<usize> = (0..cfg.detail_vocab).collect();
        rng.shuffle(&mut details);
        details.truncate(cfg.details_per_image);

        let mut content: Vec<usize> = vocab.class_tokens(class).to_vec();
        content.extend(details.iter().map(|&d| vocab.detail_token(d)));

        let mut regions: Vec<Vec<f64>> = content
            .clone()
            .into_iter()
            .map(|t| vocab.latents.row(t).to_vec())
            .collect();
        rng.shuffle(&mut regions);
        regions.push(rng.unit_rows(1, cfg.latent_dim).row(0).to_vec());
        let image_features = features(&regions, &image_proj, cfg.noise, &mut rng)?;
        let image_id = format!("img{img:05}");

        for k in 0..cfg.r {
            let mut order = content.clone();
            rng.shuffle(&mut order);
            let mut tokens = vec![vocab.stopword_token(0)];
            for (i, t) in order.into_iter().enumerate() {
                if i > 0 && rng.uniform() < 0.5 {
                    tokens.push(vocab.stopword_token(1 + rng.below(STOPWORDS.len() - 1)));
                }
                tokens.push(t);
            }
            let latents: Vec<Vec<f64>> = tokens
                .iter()
                .map(|&t| vocab.latents.row(t).to_vec())
                .collect();
            records.push(PairRecord {
                pair_id: format!("{image_id}_{k}"),
                image_id: image_id.clone(),
                image_features: image_features.clone(),
                caption_tokens: tokens.iter().map(|&t| vocab.words[t].clone()).collect(),
                caption_features: features(&latents, &caption_proj, cfg.noise, &mut rng)?,
            });
        }
    }
    Ok(SyntheticData {
        dataset: PairedDataset::new(records, Split::Train)?,
        image_classes,
    })
}
