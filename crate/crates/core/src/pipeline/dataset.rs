//! Paired image/caption records and the JSONL dataset format.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::representation::FeatureSequence;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

/// One caption together with the image it describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_id: String,
    pub image_features: FeatureSequence,
    pub caption_tokens: Vec<String>,
    pub caption_features: FeatureSequence,
}

#[derive(Deserialize)]
struct RawRecord {
    pair_id: Option<String>,
    image_id: Option<String>,
    image_features: Option<Vec<Vec<f64>>>,
    caption_tokens: Option<Vec<String>>,
    caption_features: Option<Vec<Vec<f64>>>,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<PairRecord> {
        let pair_id = self.pair_id.ok_or_else(|| Error::InvalidRecord {
            record: format!("line {line}"),
            message: "missing pair_id".into(),
        })?;
        let fail = |message: String| Error::InvalidRecord {
            record: pair_id.clone(),
            message,
        };
        let image_id = self
            .image_id
            .ok_or_else(|| fail("missing image_id".into()))?;
        let caption_tokens = self
            .caption_tokens
            .ok_or_else(|| fail("missing caption_tokens".into()))?;
        let sequence = |rows: Option<Vec<Vec<f64>>>, field: &str| -> Result<FeatureSequence> {
            let rows = rows.ok_or_else(|| fail(format!("missing {field}")))?;
            let m = Matrix::from_rows(&rows).map_err(|e| fail(format!("{field}: {e}")))?;
            FeatureSequence::new(m).map_err(|e| fail(format!("{field}: {e}")))
        };
        let image_features = sequence(self.image_features, "image_features")?;
        let caption_features = sequence(self.caption_features, "caption_features")?;
        Ok(PairRecord {
            pair_id,
            image_id,
            image_features,
            caption_tokens,
            caption_features,
        })
    }
}

/// Caption-level records grouped by image.
///
/// Images are numbered in order of first appearance; several captions may
/// share one image.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    records: Vec<PairRecord>,
    split: Split,
    image_first_record: Vec<usize>,
    caption_image: Vec<usize>,
}

impl PairedDataset {
    pub fn new(records: Vec<PairRecord>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut image_index: HashMap<&str, usize> = HashMap::new();
        let mut image_first_record: Vec<usize> = Vec::new();
        let mut caption_image = Vec::with_capacity(records.len());
        let dims = records
            .first()
            .map(|r| (r.image_features.dim(), r.caption_features.dim()));
        for (i, r) in records.iter().enumerate() {
            let fail = |message: String| Error::InvalidRecord {
                record: r.pair_id.clone(),
                message,
            };
            if !seen.insert(r.pair_id.as_str()) {
                return Err(fail("duplicate pair_id".into()));
            }
            if Some((r.image_features.dim(), r.caption_features.dim())) != dims {
                return Err(fail(
                    "feature dimensions differ from the first record".into(),
                ));
            }
            let img = match image_index.get(r.image_id.as_str()) {
                Some(&img) => {
                    if records[image_first_record[img]].image_features != r.image_features {
                        return Err(fail(format!(
                            "image '{}' has conflicting features",
                            r.image_id
                        )));
                    }
                    img
                }
                None => {
                    image_index.insert(&r.image_id, image_first_record.len());
                    image_first_record.push(i);
                    image_first_record.len() - 1
                }
            };
            caption_image.push(img);
        }
        Ok(PairedDataset {
            records,
            split,
            image_first_record,
            caption_image,
        })
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn image_count(&self) -> usize {
        self.image_first_record.len()
    }

    /// Image index of every caption record.
    pub fn caption_image(&self) -> &[usize] {
        &self.caption_image
    }

    pub fn image_features(&self, image: usize) -> &FeatureSequence {
        &self.records[self.image_first_record[image]].image_features
    }

    pub fn image_id(&self, image: usize) -> &str {
        &self.records[self.image_first_record[image]].image_id
    }

    /// Average number of captions per image.
    pub fn captions_per_image(&self) -> f64 {
        if self.image_count() == 0 {
            0.0
        } else {
            self.len() as f64 / self.image_count() as f64
        }
    }

    /// `(image_dim, caption_dim)`, or `None` when empty.
    pub fn feature_dims(&self) -> Option<(usize, usize)> {
        self.records
            .first()
            .map(|r| (r.image_features.dim(), r.caption_features.dim()))
    }

    /// Caption token lists, one per record.
    pub fn corpus(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| r.caption_tokens.clone())
            .collect()
    }

    /// Splits by image: the first `n_images` images (with all their captions)
    /// go to the first dataset, the rest to the second.
    pub fn split_images(
        &self,
        n_images: usize,
        first: Split,
        second: Split,
    ) -> Result<(Self, Self)> {
        if n_images > self.image_count() {
            return Err(Error::InvalidParameter(format!(
                "cannot take {n_images} images from a dataset of {}",
                self.image_count()
            )));
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (r, &img) in self.records.iter().zip(&self.caption_image) {
            if img < n_images {
                a.push(r.clone());
            } else {
                b.push(r.clone());
            }
        }
        Ok((
            PairedDataset::new(a, first)?,
            PairedDataset::new(b, second)?,
        ))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Reads JSONL records; blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(input: R, split: Split) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(raw.validate(i + 1)?);
        }
        PairedDataset::new(records, split)
    }

    pub fn load(path: &Path, split: Split) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        PairedDataset::read_jsonl(BufReader::new(file), split)
    }
}
