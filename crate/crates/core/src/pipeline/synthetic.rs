//! Synthetic multilingual fixtures with planted analogy structure.
//!
//! A shared latent space is built first. Every language sees it through its
//! own random rotation, optionally with Gaussian noise, and words with the
//! same latent index are translations of each other.
//!
//! Latent vectors are unit length and come in antipodal pairs, so the space
//! is already centered and normalized. Each category has an offset `o`; its
//! pairs are `(b, b + o)` with `b · o = −|o|²/2`, which keeps `b + o` on the
//! unit sphere. Every planted analogy is therefore an exact parallelogram
//! that survives `-c`, `-u` and `-cu` unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{dictionary_key, ExperimentConfig};
use crate::analogy_bench::{AnalogyCorpus, BilingualDictionary, Category};
use crate::embedding_store::SemanticSpace;
use crate::error::{Error, Result};

/// Length of the per-category offset vector.
const OFFSET_NORM: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct SynthParams {
    /// Vocabulary size per language (rounded down to an even number).
    pub n_words: usize,
    pub dim: usize,
    pub n_languages: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub noise: f64,
    pub seed: u64,
    /// Number of analogy categories, taken in corpus order.
    pub categories: usize,
    /// Upper bound on planted pairs per category.
    pub max_pairs: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_words: 1000,
            dim: 16,
            n_languages: 3,
            noise: 0.0,
            seed: 0,
            categories: 3,
            max_pairs: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub languages: Vec<String>,
    pub n_words: usize,
    pub pairs_per_category: usize,
}

pub fn language_code(i: usize) -> String {
    format!("l{i}")
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `axis`.
fn unit_orthogonal(rng: &mut impl Rng, axis: &[f64]) -> Vec<f64> {
    loop {
        let mut v = unit(rng, axis.len());
        let proj: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(axis).for_each(|(x, a)| *x -= proj * a);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn random_rotation(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Writes spaces, dictionaries, an analogy corpus and an experiment config
/// into `out_dir`.
pub fn generate_synthetic(out_dir: &Path, params: &SynthParams) -> Result<SynthOutput> {
    let SynthParams {
        n_words,
        dim,
        n_languages,
        noise,
        seed,
        categories,
        max_pairs,
    } = *params;
    if n_languages == 0 {
        return Err(Error::InvalidArgument("need at least one language".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    if categories == 0 || categories > Category::ALL.len() {
        return Err(Error::InvalidArgument(format!(
            "number of categories must be between 1 and {}",
            Category::ALL.len()
        )));
    }
    if n_words < 4 * categories {
        return Err(Error::InvalidArgument(format!(
            "{n_words} words cannot hold {categories} categories (need at least 4 words per category)"
        )));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n_words / 2;
    let pairs_per_category = (n_words / (4 * categories)).min(max_pairs.max(1));

    // Latent rows: planted pairs, then fillers; the second half mirrors the first.
    let mut latent: Vec<Vec<f64>> = Vec::with_capacity(2 * half);
    let mut planted: Vec<(Category, Vec<(usize, usize)>)> = Vec::new();
    let beta = (1.0 - OFFSET_NORM * OFFSET_NORM / 4.0).sqrt();
    for &category in &Category::ALL[..categories] {
        let axis = unit(&mut rng, dim);
        let mut pairs = Vec::with_capacity(pairs_per_category);
        for _ in 0..pairs_per_category {
            let w = unit_orthogonal(&mut rng, &axis);
            let base: Vec<f64> = axis
                .iter()
                .zip(&w)
                .map(|(a, w)| -OFFSET_NORM / 2.0 * a + beta * w)
                .collect();
            let shifted: Vec<f64> = base.iter().zip(&axis).map(|(b, a)| b + OFFSET_NORM * a).collect();
            pairs.push((latent.len(), latent.len() + 1));
            latent.push(base);
            latent.push(shifted);
        }
        planted.push((category, pairs));
    }
    while latent.len() < half {
        latent.push(unit(&mut rng, dim));
    }
    let mirrored: Vec<Vec<f64>> = latent.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
    latent.extend(mirrored);
    let total = latent.len();
    let latent = DMatrix::from_fn(total, dim, |i, j| latent[i][j]);

    let languages: Vec<String> = (0..n_languages).map(language_code).collect();
    let word = |lang: &str, id: usize| format!("{lang}_{id}");

    for sub in ["spaces", "dicts", "corpus"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    }

    let mut config = ExperimentConfig {
        pivot: languages[0].clone(),
        seed,
        dictionary_size: total,
        output_dir: PathBuf::from("results"),
        ..ExperimentConfig::default()
    };

    // Frequency order of latent ids per language.
    let mut orders: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for lang in &languages {
        let rotation = random_rotation(&mut rng, dim);
        let mut vectors = &latent * rotation;
        if noise > 0.0 {
            vectors.iter_mut().for_each(|x| *x += noise * rng.sample::<f64, _>(StandardNormal));
        }
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);

        let vocab = order.iter().map(|&id| word(lang, id)).collect();
        let matrix = Array2::from_shape_fn((total, dim), |(r, c)| vectors[(order[r], c)]);
        let space = SemanticSpace::new(lang.clone(), vocab, matrix)?;
        let rel = PathBuf::from("spaces").join(format!("{lang}.vec"));
        space.save(out_dir.join(&rel))?;
        config.spaces.insert(lang.clone(), rel);
        orders.insert(lang.clone(), order);
    }

    for a in &languages {
        for b in &languages {
            if a == b {
                continue;
            }
            let pairs = orders[a].iter().map(|&id| (word(a, id), word(b, id))).collect();
            let dict = BilingualDictionary::new(a, b, pairs);
            let rel = PathBuf::from("dicts").join(format!("{a}-{b}.tsv"));
            let path = out_dir.join(&rel);
            let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
            dict.write_tsv(std::io::BufWriter::new(file))?;
            config.dictionaries.insert(dictionary_key(a, b), rel);
        }
    }

    let mut corpus = AnalogyCorpus::new();
    for lang in &languages {
        for (category, pairs) in &planted {
            corpus.insert_pairs(
                *category,
                lang,
                pairs.iter().map(|&(x, y)| (word(lang, x), word(lang, y))),
            );
        }
    }
    for lang in &languages {
        let rel = PathBuf::from("corpus").join(format!("{lang}.txt"));
        let path = out_dir.join(&rel);
        let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
        corpus.write_file(std::io::BufWriter::new(file), lang)?;
        config.corpus.insert(lang.clone(), rel);
    }

    let config_path = out_dir.join("experiment.toml");
    fs::write(&config_path, config.to_toml()?).map_err(|e| Error::file(&config_path, e))?;
    config.resolve_paths(out_dir);

    Ok(SynthOutput {
        config_path,
        config,
        languages,
        n_words: total,
        pairs_per_category,
    })
}
