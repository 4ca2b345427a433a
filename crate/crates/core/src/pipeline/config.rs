//! Experiment configuration and experiment naming.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analogy_bench::{DEFAULT_DICTIONARY_SIZE, DEFAULT_SEARCH_LIMIT, DEFAULT_TOP_K};
use crate::embedding_store::PostProcessing;
use crate::error::{Error, Result};
use crate::linear_maps::{Method, DEFAULT_CCA_EPSILON};

/// How cross-lingual spaces are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Each source space is mapped directly onto each target space.
    #[serde(rename = "B")]
    Bilingual,
    /// Every space is mapped onto the pivot space.
    #[serde(rename = "M")]
    Multilingual,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Bilingual => "B",
            Mode::Multilingual => "M",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" => Ok(Mode::Bilingual),
            "M" | "m" => Ok(Mode::Multilingual),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}' (expected B or M)"))),
        }
    }
}

/// One experiment cell, named like `B-OT-cu` or `M-CCA` (no post-processing).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExperimentTag {
    pub mode: Mode,
    pub method: Method,
    pub postprocessing: PostProcessing,
}

impl ExperimentTag {
    pub fn new(mode: Mode, method: Method, postprocessing: PostProcessing) -> Self {
        ExperimentTag {
            mode,
            method,
            postprocessing,
        }
    }

    /// Every mode/method/post-processing combination.
    pub fn all() -> Vec<ExperimentTag> {
        let mut out = Vec::new();
        for mode in [Mode::Bilingual, Mode::Multilingual] {
            for method in Method::ALL {
                for post in PostProcessing::ALL {
                    out.push(ExperimentTag::new(mode, method, post));
                }
            }
        }
        out
    }
}

impl fmt::Display for ExperimentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.mode, self.method)?;
        if self.postprocessing != PostProcessing::None {
            write!(f, "-{}", self.postprocessing)?;
        }
        Ok(())
    }
}

impl FromStr for ExperimentTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        let bad = || Error::InvalidArgument(format!("malformed experiment tag '{s}' (expected e.g. B-OT-cu)"));
        let (mode, method, post) = match parts.as_slice() {
            [mode, method] => (*mode, *method, PostProcessing::None),
            [mode, method, post] => {
                let post: PostProcessing = post.parse()?;
                if post == PostProcessing::None {
                    return Err(bad());
                }
                (*mode, *method, post)
            }
            _ => return Err(bad()),
        };
        if !matches!(method, "LS" | "OT" | "CCA") {
            return Err(bad());
        }
        Ok(ExperimentTag::new(mode.parse()?, method.parse()?, post))
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Orthogonal]
}
fn default_modes() -> Vec<Mode> {
    vec![Mode::Bilingual]
}
fn default_postprocessing() -> Vec<PostProcessing> {
    vec![PostProcessing::Cu]
}
fn default_dictionary_size() -> usize {
    DEFAULT_DICTIONARY_SIZE
}
fn default_search_limit() -> usize {
    DEFAULT_SEARCH_LIMIT
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_pivot() -> String {
    "en".into()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_cca_epsilon() -> f64 {
    DEFAULT_CCA_EPSILON
}
fn default_true() -> bool {
    true
}

/// Declarative experiment description, read from TOML.
///
/// ```toml
/// methods = ["OT", "CCA"]        # LS | OT | CCA
/// modes = ["B", "M"]             # B = bilingual, M = multilingual
/// postprocessing = ["none", "cu"] # none | c | u | cu
/// dictionary_size = 20000
/// search_limit = 300000
/// top_k = 5
/// pivot = "en"
/// output_dir = "results"
/// cca_epsilon = 1e-8
/// seed = 0
/// # space_limit = 300000   # optional: read only the most frequent words
/// lowercase = true
/// cache = true             # reuse fitted maps from <output_dir>/cache
///
/// [spaces]
/// en = "vectors/wiki.en.vec"
/// de = "vectors/wiki.de.vec"
///
/// [corpus]
/// en = "analogies/en.txt"
/// de = "analogies/de.txt"
///
/// [dictionaries]            # "<source>-<target>" = TSV file
/// de-en = "dicts/de-en.tsv"
/// en-de = "dicts/en-de.tsv"
/// ```
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub spaces: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub corpus: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub dictionaries: BTreeMap<String, PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_postprocessing")]
    pub postprocessing: Vec<PostProcessing>,
    #[serde(default = "default_dictionary_size")]
    pub dictionary_size: usize,
    #[serde(default = "default_search_limit")]
    pub search_limit: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_pivot")]
    pub pivot: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_cca_epsilon")]
    pub cca_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub space_limit: Option<usize>,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default = "default_true")]
    pub cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spaces: BTreeMap::new(),
            corpus: BTreeMap::new(),
            dictionaries: BTreeMap::new(),
            methods: default_methods(),
            modes: default_modes(),
            postprocessing: default_postprocessing(),
            dictionary_size: default_dictionary_size(),
            search_limit: default_search_limit(),
            top_k: default_top_k(),
            pivot: default_pivot(),
            output_dir: default_output_dir(),
            cca_epsilon: default_cca_epsilon(),
            seed: 0,
            space_limit: None,
            lowercase: true,
            cache: true,
        }
    }
}

/// Key under which the dictionary for `source → target` is configured.
pub fn dictionary_key(source: &str, target: &str) -> String {
    format!("{source}-{target}")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.spaces.values_mut().for_each(resolve);
        self.corpus.values_mut().for_each(resolve);
        self.dictionaries.values_mut().for_each(resolve);
        resolve(&mut self.output_dir);
    }

    /// Languages with a configured space, in sorted order.
    pub fn languages(&self) -> Vec<String> {
        self.spaces.keys().cloned().collect()
    }

    pub fn dictionary_path(&self, source: &str, target: &str) -> Option<&Path> {
        self.dictionaries.get(&dictionary_key(source, target)).map(PathBuf::as_path)
    }

    /// The cells selected by `methods × modes × postprocessing`.
    pub fn tags(&self) -> Vec<ExperimentTag> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &method in &self.methods {
                for &post in &self.postprocessing {
                    out.push(ExperimentTag::new(mode, method, post));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.spaces.is_empty() {
            return Err(Error::Config("no semantic spaces configured".into()));
        }
        if self.dictionary_size == 0 || self.search_limit == 0 || self.top_k == 0 {
            return Err(Error::Config(
                "dictionary_size, search_limit and top_k must be positive".into(),
            ));
        }
        if !(self.cca_epsilon >= 0.0) {
            return Err(Error::Config("cca_epsilon must be non-negative".into()));
        }
        if self.space_limit == Some(0) {
            return Err(Error::Config("space_limit must be positive".into()));
        }
        for lang in self.spaces.keys() {
            if !self.corpus.contains_key(lang) {
                return Err(Error::Config(format!("no analogy corpus configured for '{lang}'")));
            }
        }
        for lang in self.corpus.keys() {
            if !self.spaces.contains_key(lang) {
                return Err(Error::Config(format!("no semantic space configured for '{lang}'")));
            }
        }
        if self.modes.contains(&Mode::Multilingual) && !self.spaces.contains_key(&self.pivot) {
            return Err(Error::Config(format!(
                "multilingual mode requires a space for the pivot language '{}'",
                self.pivot
            )));
        }
        for key in self.dictionaries.keys() {
            let ok = key
                .split_once('-')
                .is_some_and(|(a, b)| self.spaces.contains_key(a) && self.spaces.contains_key(b) && a != b);
            if !ok {
                return Err(Error::Config(format!(
                    "dictionary key '{key}' must be '<source>-<target>' for two configured languages"
                )));
            }
        }
        let files = self
            .spaces
            .values()
            .chain(self.corpus.values())
            .chain(self.dictionaries.values());
        for path in files {
            if !path.is_file() {
                return Err(Error::Config(format!("file not found: {}", path.display())));
            }
        }
        Ok(())
    }
}
