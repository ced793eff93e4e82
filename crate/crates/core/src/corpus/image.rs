use std::io::Read;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};

use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Fixed-width feature vectors in [0, 1] with class labels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    permutation: Option<Vec<usize>>,
}

impl ImageDataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Input(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("feature value {v} outside [0, 1]")));
        }
        Ok(ImageDataset { features, dim, labels, permutation: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref()
    }

    pub fn select(&self, indices: &[usize]) -> ImageDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.example(i));
        }
        ImageDataset {
            features,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            permutation: self.permutation.clone(),
        }
    }

    /// Split into the first `count` examples and the rest.
    pub fn split_at(&self, count: usize) -> (ImageDataset, ImageDataset) {
        let count = count.min(self.len());
        let head: Vec<usize> = (0..count).collect();
        let tail: Vec<usize> = (count..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Undo a previously applied pixel permutation.
    pub fn unpermute(&self) -> ImageDataset {
        let Some(perm) = &self.permutation else { return self.clone() };
        let mut features = vec![0.0; self.features.len()];
        for (src, dst) in self.features.chunks(self.dim).zip(features.chunks_mut(self.dim)) {
            for (j, &p) in perm.iter().enumerate() {
                dst[p] = src[j];
            }
        }
        ImageDataset { features, dim: self.dim, labels: self.labels.clone(), permutation: None }
    }

    /// Read an IDX image file (u8, rank 3) and its label file (u8, rank 1).
    pub fn load_idx(images: &Path, labels: &Path) -> Result<Self> {
        let (dims, pixels) = read_idx(images)?;
        if dims.len() != 3 {
            return Err(Error::Format(format!("image file has rank {}, expected 3", dims.len())));
        }
        let (ldims, lbytes) = read_idx(labels)?;
        if ldims.len() != 1 || ldims[0] != dims[0] {
            return Err(Error::Format("label file does not match image count".into()));
        }
        let dim = dims[1] * dims[2];
        let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
        ImageDataset::new(features, dim, lbytes.iter().map(|&l| l as usize).collect())
    }

    /// Write as IDX, quantizing features to bytes. `side` squared must equal the
    /// feature width.
    pub fn save_idx(&self, images: &Path, labels: &Path, side: usize) -> Result<()> {
        if side * side != self.dim {
            return Err(Error::Input(format!("width {} is not {side} squared", self.dim)));
        }
        if self.labels.iter().any(|&l| l > 255) {
            return Err(Error::Input("label does not fit in a byte".into()));
        }
        let pixels: Vec<u8> = self.features.iter().map(|&v| (v * 255.0).round() as u8).collect();
        write_idx(images, &[self.len(), side, side], &pixels)?;
        let lbytes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        write_idx(labels, &[self.len()], &lbytes)
    }
}

fn read_idx(path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |why: &str| Error::Format(format!("{}: {why}", path.display()));
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("missing IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(bad("only unsigned byte IDX data is supported"));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let total: usize = dims.iter().product();
    if bytes.len() != header + total {
        return Err(bad("payload length does not match dimensions"));
    }
    bytes.drain(..header);
    Ok((dims, bytes))
}

fn write_idx(path: &Path, dims: &[usize], data: &[u8]) -> Result<()> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    std::fs::write(path, out)?;
    Ok(())
}

/// Apply one seeded pixel permutation to every example. A dataset that is
/// already permuted gets the composition.
pub fn permute_pixels(data: &ImageDataset, seed: u64) -> ImageDataset {
    let mut perm: Vec<usize> = (0..data.dim).collect();
    perm.shuffle(&mut seeded(seed));
    let mut features = vec![0.0; data.features.len()];
    for (src, dst) in data.features.chunks(data.dim).zip(features.chunks_mut(data.dim)) {
        for (j, &p) in perm.iter().enumerate() {
            dst[j] = src[p];
        }
    }
    // feature j now holds original pixel perm[j]
    let composed = match &data.permutation {
        Some(prev) => perm.iter().map(|&p| prev[p]).collect(),
        None => perm,
    };
    ImageDataset { features, dim: data.dim, labels: data.labels.clone(), permutation: Some(composed) }
}

/// Image analogue of text rehearsal: all user examples plus
/// `m (1 - lambda) / lambda` general examples drawn uniformly, then shuffled.
pub fn mix_rehearsal_images(
    user: &ImageDataset,
    general: &ImageDataset,
    lambda: f64,
    rng: &mut Rng,
) -> Result<ImageDataset> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("rehearsal lambda {lambda} outside (0, 1]")));
    }
    if user.dim != general.dim {
        return Err(Error::Layout(format!("feature widths {} and {} differ", user.dim, general.dim)));
    }
    if lambda == 1.0 {
        return Ok(user.clone());
    }
    if general.is_empty() {
        return Err(Error::Input("general dataset is empty".into()));
    }
    let extra = (user.len() as f64 * (1.0 - lambda) / lambda).round() as usize;
    let pool: Vec<usize> = (0..general.len()).collect();
    let mut rows: Vec<(&[f64], usize)> = (0..user.len()).map(|i| (user.example(i), user.labels[i])).collect();
    for _ in 0..extra {
        let &i = pool.choose(rng).expect("non-empty pool");
        rows.push((general.example(i), general.labels[i]));
    }
    rows.shuffle(rng);
    let mut features = Vec::with_capacity(rows.len() * user.dim);
    let mut labels = Vec::with_capacity(rows.len());
    for (x, y) in rows {
        features.extend_from_slice(x);
        labels.push(y);
    }
    Ok(ImageDataset { features, dim: user.dim, labels, permutation: user.permutation.clone() })
}
