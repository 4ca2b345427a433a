//! End-to-end experiments: post-process spaces, fit maps, build bilingual and
//! multilingual spaces, evaluate every language pair and write reports.

mod config;
mod report;
mod synthetic;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use config::{dictionary_key, ExperimentConfig, ExperimentTag, Mode};
pub use report::{CellResult, GridSummary, SweepPoint};
pub use synthetic::{generate_synthetic, SynthParams, SynthOutput};

use crate::analogy_bench::{evaluate, parse_corpus, parse_dictionary, AnalogyCorpus, BilingualDictionary, EvalReport, EvalSettings};
use crate::embedding_store::{load_space, LoadOptions, PostProcessing, SemanticSpace};
use crate::error::{Error, Result};
use crate::linear_maps::{apply_map, build_aligned, fit, LinearMap, Method};

/// Loaded inputs of an experiment: raw spaces, corpus and configuration.
pub struct Experiment {
    config: ExperimentConfig,
    spaces: BTreeMap<String, SemanticSpace>,
    corpus: AnalogyCorpus,
    file_hashes: BTreeMap<PathBuf, String>,
}

/// Post-processed spaces of every language for one variant.
pub type SpaceSet = BTreeMap<String, SemanticSpace>;

impl Experiment {
    /// Validates the configuration and loads every space and corpus file.
    pub fn load(config: ExperimentConfig) -> Result<Experiment> {
        config.validate()?;
        let options = LoadOptions {
            limit: config.space_limit,
            lowercase: config.lowercase,
        };
        let mut spaces = BTreeMap::new();
        for (lang, path) in &config.spaces {
            log::info!("loading {lang} space from {}", path.display());
            let space = load_space(path, lang, &options)?;
            spaces.insert(lang.clone(), space);
        }
        let corpus = parse_corpus(&config.corpus)?;

        let mut file_hashes = BTreeMap::new();
        if config.cache {
            for path in config.spaces.values().chain(config.dictionaries.values()) {
                file_hashes.insert(path.clone(), hash_file(path)?);
            }
        }
        Ok(Experiment {
            config,
            spaces,
            corpus,
            file_hashes,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn corpus(&self) -> &AnalogyCorpus {
        &self.corpus
    }

    pub fn languages(&self) -> Vec<String> {
        self.spaces.keys().cloned().collect()
    }

    pub fn raw_space(&self, language: &str) -> Option<&SemanticSpace> {
        self.spaces.get(language)
    }

    /// Applies the same post-processing to every space.
    pub fn processed_spaces(&self, post: PostProcessing) -> Result<SpaceSet> {
        self.spaces
            .iter()
            .map(|(lang, space)| Ok((lang.clone(), space.postprocess(post)?)))
            .collect()
    }

    /// The first `n` pairs of the configured `source → target` dictionary.
    pub fn dictionary(&self, source: &str, target: &str, n: usize) -> Result<BilingualDictionary> {
        let path = self
            .config
            .dictionary_path(source, target)
            .ok_or_else(|| Error::Config(format!("no dictionary configured for {source}→{target}")))?;
        parse_dictionary(path, source, target, Some(n))
    }

    fn cache_path(&self, source: &str, target: &str, method: Method, post: PostProcessing, n: usize) -> Option<PathBuf> {
        if !self.config.cache {
            return None;
        }
        let dict = self.config.dictionary_path(source, target)?;
        let mut hasher = Sha256::new();
        for path in [&self.config.spaces[source], &self.config.spaces[target], &dict.to_path_buf()] {
            hasher.update(self.file_hashes.get(path)?.as_bytes());
            hasher.update([0]);
        }
        hasher.update(
            format!(
                "{source}\0{target}\0{}\0{post}\0{n}\0{:e}\0{:?}\0{}",
                method.file_name(),
                self.config.cca_epsilon,
                self.config.space_limit,
                self.config.lowercase
            )
            .as_bytes(),
        );
        let key = hex(&hasher.finalize());
        Some(self.config.output_dir.join("cache").join(format!("{key}.map")))
    }

    /// Fits `source → target` on post-processed spaces with the first `n`
    /// dictionary pairs, reusing a cached map when the inputs are unchanged.
    pub fn fit_map(&self, spaces: &SpaceSet, source: &str, target: &str, method: Method, n: usize) -> Result<LinearMap> {
        let src = space_of(spaces, source)?;
        let tgt = space_of(spaces, target)?;
        let post = src.postprocessing();
        let cache = self.cache_path(source, target, method, post, n);
        if let Some(path) = cache.as_ref().filter(|p| p.is_file()) {
            match LinearMap::load(path) {
                Ok(map) if map.method == method && map.postprocessing == post && map.dim() == src.dim() => {
                    log::debug!("reusing cached map {}", path.display());
                    return Ok(map);
                }
                _ => log::warn!("ignoring unreadable cache entry {}", path.display()),
            }
        }

        let dict = self.dictionary(source, target, n)?;
        let aligned = build_aligned(src, tgt, &dict)?;
        let map = fit(&aligned, method, self.config.cca_epsilon)?;

        if let Some(path) = cache {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
            }
            map.save(&path)?;
        }
        Ok(map)
    }

    /// Maps `source` onto `target` and returns the map with the mapped
    /// source space.
    pub fn build_bilingual(
        &self,
        spaces: &SpaceSet,
        source: &str,
        target: &str,
        method: Method,
        n: usize,
    ) -> Result<(LinearMap, SemanticSpace)> {
        let run = || {
            let map = self.fit_map(spaces, source, target, method, n)?;
            let mapped = apply_map(&map, space_of(spaces, source)?)?;
            Ok((map, mapped))
        };
        run().map_err(|e: Error| e.context(format!("{source}→{target} ({method})")))
    }

    /// Maps every non-pivot space onto the pivot; the pivot passes through.
    pub fn build_multilingual(&self, spaces: &SpaceSet, method: Method, n: usize) -> Result<SpaceSet> {
        let pivot = self.config.pivot.as_str();
        let mut out = BTreeMap::new();
        out.insert(pivot.to_owned(), space_of(spaces, pivot)?.clone());
        for lang in spaces.keys().filter(|l| l.as_str() != pivot) {
            if self.config.dictionary_path(lang, pivot).is_none() {
                return Err(Error::Config(format!("no dictionary configured for {lang}→{pivot}")));
            }
            let (_, mapped) = self.build_bilingual(spaces, lang, pivot, method, n)?;
            out.insert(lang.clone(), mapped);
        }
        Ok(out)
    }

    fn settings(&self, label: String) -> EvalSettings {
        EvalSettings {
            k: self.config.top_k,
            search_limit: self.config.search_limit,
            tag: label,
        }
    }

    /// Evaluates every ordered language pair of one cell with dictionaries of
    /// size `n`. Failures are recorded per pair; the cell carries on.
    pub fn run_cell(&self, tag: ExperimentTag, n: usize) -> CellResult {
        let mut result = CellResult::new(tag, n);
        let languages = self.languages();
        let spaces = match self.processed_spaces(tag.postprocessing) {
            Ok(s) => s,
            Err(e) => {
                result.fail_all(&languages, &e);
                return result;
            }
        };
        let settings = self.settings(tag.to_string());

        match tag.mode {
            Mode::Bilingual => {
                for a in &languages {
                    for b in &languages {
                        let report = if a == b {
                            evaluate(&spaces[a], &spaces[a], &self.corpus, a, a, &settings)
                        } else {
                            self.build_bilingual(&spaces, a, b, tag.method, n)
                                .and_then(|(_, mapped)| evaluate(&mapped, &spaces[b], &self.corpus, a, b, &settings))
                        };
                        result.record(a, b, report.map_err(|e| e.context(tag.to_string())));
                    }
                }
            }
            Mode::Multilingual => {
                let mapped = match self.build_multilingual(&spaces, tag.method, n) {
                    Ok(m) => m,
                    Err(e) => {
                        result.fail_all(&languages, &e.context(tag.to_string()));
                        return result;
                    }
                };
                for a in &languages {
                    for b in &languages {
                        let report = evaluate(&mapped[a], &mapped[b], &self.corpus, a, b, &settings);
                        result.record(a, b, report.map_err(|e| e.context(tag.to_string())));
                    }
                }
            }
        }
        result
    }

    /// Evaluates one ordered language pair of a cell.
    pub fn evaluate_pair(&self, tag: ExperimentTag, a: &str, b: &str) -> Result<EvalReport> {
        for lang in [a, b] {
            if !self.spaces.contains_key(lang) {
                return Err(Error::Config(format!("no semantic space configured for '{lang}'")));
            }
        }
        let n = self.config.dictionary_size;
        let spaces = self.processed_spaces(tag.postprocessing)?;
        let settings = self.settings(tag.to_string());
        match tag.mode {
            Mode::Bilingual if a == b => evaluate(&spaces[a], &spaces[a], &self.corpus, a, a, &settings),
            Mode::Bilingual => {
                let (_, mapped) = self.build_bilingual(&spaces, a, b, tag.method, n)?;
                evaluate(&mapped, &spaces[b], &self.corpus, a, b, &settings)
            }
            Mode::Multilingual => {
                let mapped = self.build_multilingual(&spaces, tag.method, n)?;
                evaluate(&mapped[a], &mapped[b], &self.corpus, a, b, &settings)
            }
        }
    }

    /// Runs the given cells (all configured cells when `tags` is empty) and
    /// writes per-pair, per-category and summary reports.
    pub fn run_grid(&self, tags: &[ExperimentTag]) -> Result<GridSummary> {
        let tags = if tags.is_empty() { self.config.tags() } else { tags.to_vec() };
        let out_dir = &self.config.output_dir;
        fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;

        let mut cells = Vec::new();
        for tag in tags {
            log::info!("running {tag}");
            let cell = self.run_cell(tag, self.config.dictionary_size);
            for ((a, b), message) in &cell.failures {
                log::error!("{tag} {a}→{b}: {message}");
            }
            report::write_cell(&out_dir.join(tag.to_string()), &cell, &self.languages(), self.config.top_k)?;
            cells.push(cell);
        }
        let summary = GridSummary::from_cells(&cells);
        report::write_summary(out_dir, &summary, self.config.top_k)?;
        Ok(summary)
    }

    /// Accuracy per target language as the dictionary size varies, averaged
    /// over all source languages other than the target.
    pub fn sweep_dictionary(&self, tag: ExperimentTag, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
        let mut points = Vec::new();
        let mut failed = 0;
        for &n in sizes {
            log::info!("sweep {tag}: n = {n}");
            let cell = self.run_cell(tag, n);
            failed += cell.failures.keys().filter(|(a, b)| a != b).count();
            for target in self.languages() {
                let reports: Vec<&EvalReport> = cell
                    .reports
                    .iter()
                    .filter(|((a, b), _)| *b == target && *a != target)
                    .map(|(_, r)| r)
                    .collect();
                if reports.is_empty() {
                    continue;
                }
                let count = reports.len() as f64;
                points.push(SweepPoint {
                    dictionary_size: n,
                    target,
                    sources: reports.len(),
                    acc1: reports.iter().map(|r| r.acc1).sum::<f64>() / count,
                    acck: reports.iter().map(|r| r.acck).sum::<f64>() / count,
                });
            }
        }
        let out_dir = &self.config.output_dir;
        fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
        report::write_sweep(&out_dir.join(format!("sweep-{tag}.tsv")), &points, self.config.top_k)?;
        if failed > 0 {
            return Err(Error::Eval(format!("{failed} sweep evaluations failed")));
        }
        Ok(points)
    }
}

fn space_of<'a>(spaces: &'a SpaceSet, language: &str) -> Result<&'a SemanticSpace> {
    spaces
        .get(language)
        .ok_or_else(|| Error::Config(format!("no semantic space for '{language}'")))
}

fn hash_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut hasher = Sha256::new();
    io::copy(&mut file, &mut hasher).map_err(|e| Error::file(path, e))?;
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
