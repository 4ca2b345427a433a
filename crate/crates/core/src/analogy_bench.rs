//! Cross-lingual word analogies: corpus and dictionary files, question
//! generation, 3CosAdd answering by cosine search and accuracy reports.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding_store::{SemanticSpace, DEGENERATE_NORM};
use crate::error::{Error, Result};

pub const DEFAULT_DICTIONARY_SIZE: usize = 20_000;
pub const DEFAULT_SEARCH_LIMIT: usize = 300_000;
pub const DEFAULT_TOP_K: usize = 5;

/// Recorded in every report: excluded words are removed before the ranked
/// list is cut to `k` entries.
pub const EXCLUSION_POLICY: &str = "exclude-then-truncate";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CategoryKind {
    Semantic,
    Syntactic,
}

/// The nine analogy types shared by all corpus languages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Family,
    StateCurrency,
    CapitalCommonCountries,
    StateAdjective,
    AdjectiveComparative,
    AdjectiveSuperlative,
    AdjectiveOpposite,
    NounPlural,
    VerbPastTense,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Family,
        Category::StateCurrency,
        Category::CapitalCommonCountries,
        Category::StateAdjective,
        Category::AdjectiveComparative,
        Category::AdjectiveSuperlative,
        Category::AdjectiveOpposite,
        Category::NounPlural,
        Category::VerbPastTense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Family => "family",
            Category::StateCurrency => "state-currency",
            Category::CapitalCommonCountries => "capital-common-countries",
            Category::StateAdjective => "state-adjective",
            Category::AdjectiveComparative => "adjective-comparative",
            Category::AdjectiveSuperlative => "adjective-superlative",
            Category::AdjectiveOpposite => "adjective-opposite",
            Category::NounPlural => "noun-plural",
            Category::VerbPastTense => "verb-past-tense",
        }
    }

    pub fn kind(self) -> CategoryKind {
        match self {
            Category::Family | Category::StateCurrency | Category::CapitalCommonCountries => CategoryKind::Semantic,
            _ => CategoryKind::Syntactic,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown analogy category '{s}'")))
    }
}

/// Ordered translation pairs used to fit a map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BilingualDictionary {
    pub source_language: String,
    pub target_language: String,
    pub pairs: Vec<(String, String)>,
    /// Lines dropped because a side contained more than one token.
    pub skipped_multiword: usize,
}

impl BilingualDictionary {
    pub fn new(source_language: &str, target_language: &str, pairs: Vec<(String, String)>) -> Self {
        BilingualDictionary {
            source_language: source_language.to_owned(),
            target_language: target_language.to_owned(),
            pairs,
            skipped_multiword: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The first `n` pairs.
    pub fn truncated(&self, n: usize) -> BilingualDictionary {
        BilingualDictionary {
            pairs: self.pairs.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    /// Writes `source<TAB>target` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b) in &self.pairs {
            writeln!(w, "{a}\t{b}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn parse_dictionary(
    path: impl AsRef<Path>,
    source_language: &str,
    target_language: &str,
    max_pairs: Option<usize>,
) -> Result<BilingualDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_dictionary(
        BufReader::new(file),
        &path.display().to_string(),
        source_language,
        target_language,
        max_pairs,
    )
}

/// Reads `source<TAB>target` lines, keeping at most `max_pairs` single-token
/// pairs. Words are lowercased.
pub fn read_dictionary<R: BufRead>(
    reader: R,
    source_name: &str,
    source_language: &str,
    target_language: &str,
    max_pairs: Option<usize>,
) -> Result<BilingualDictionary> {
    let limit = max_pairs.unwrap_or(usize::MAX);
    let mut pairs = Vec::new();
    let mut skipped = 0;
    let mut line_no = 0;
    for line in reader.lines() {
        if pairs.len() >= limit {
            break;
        }
        line_no += 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected \"source<TAB>target\", found {} fields", fields.len()),
            ));
        }
        let (a, b) = (fields[0].trim(), fields[1].trim());
        if a.is_empty() || b.is_empty() || a.contains(char::is_whitespace) || b.contains(char::is_whitespace) {
            skipped += 1;
            continue;
        }
        pairs.push((a.to_lowercase(), b.to_lowercase()));
    }
    if pairs.is_empty() {
        return Err(Error::parse(source_name, line_no.max(1), "empty dictionary"));
    }
    if skipped > 0 {
        log::info!("{source_name}: skipped {skipped} multi-word entries");
    }
    Ok(BilingualDictionary {
        source_language: source_language.to_owned(),
        target_language: target_language.to_owned(),
        pairs,
        skipped_multiword: skipped,
    })
}

/// Word pairs per category and language.
#[derive(Clone, Debug, Default)]
pub struct AnalogyCorpus {
    categories: BTreeMap<Category, BTreeMap<String, Vec<(String, String)>>>,
    languages: BTreeSet<String>,
    duplicates_removed: usize,
}

impl AnalogyCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.iter().map(String::as_str)
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        self.categories.keys().copied()
    }

    pub fn pairs(&self, category: Category, language: &str) -> Option<&[(String, String)]> {
        self.categories
            .get(&category)
            .and_then(|langs| langs.get(language))
            .map(Vec::as_slice)
    }

    /// True when the category is missing in at least one corpus language.
    pub fn is_partial(&self, category: Category) -> bool {
        match self.categories.get(&category) {
            Some(langs) => self.languages.iter().any(|l| !langs.contains_key(l)),
            None => true,
        }
    }

    pub fn duplicates_removed(&self) -> usize {
        self.duplicates_removed
    }

    /// Adds pairs for one (category, language), dropping duplicates.
    pub fn insert_pairs(&mut self, category: Category, language: &str, pairs: impl IntoIterator<Item = (String, String)>) {
        self.languages.insert(language.to_owned());
        let list = self
            .categories
            .entry(category)
            .or_default()
            .entry(language.to_owned())
            .or_default();
        let mut seen: HashSet<(String, String)> = list.iter().cloned().collect();
        for pair in pairs {
            if seen.insert(pair.clone()) {
                list.push(pair);
            } else {
                log::warn!("{language}/{category}: duplicate pair {} {} removed", pair.0, pair.1);
                self.duplicates_removed += 1;
            }
        }
    }

    /// Keeps only the given categories.
    pub fn restricted(&self, keep: &[Category]) -> AnalogyCorpus {
        let mut out = AnalogyCorpus {
            languages: self.languages.clone(),
            ..AnalogyCorpus::default()
        };
        for (cat, langs) in &self.categories {
            if keep.contains(cat) {
                out.categories.insert(*cat, langs.clone());
            }
        }
        out
    }

    /// Reads one language file: `: category` headers followed by `word1 word2` lines.
    pub fn read_file<R: BufRead>(&mut self, reader: R, source_name: &str, language: &str) -> Result<()> {
        self.languages.insert(language.to_owned());
        let mut current: Option<Category> = None;
        let mut sections: Vec<(Category, Vec<(String, String)>)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix(':') {
                let name = name.trim();
                let category = name
                    .parse::<Category>()
                    .map_err(|_| Error::parse(source_name, line_no, format!("unknown category '{name}'")))?;
                current = Some(category);
                sections.push((category, Vec::new()));
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected 2 words, found {}", tokens.len()),
                ));
            }
            if current.is_none() {
                return Err(Error::parse(source_name, line_no, "word pair before any ': category' header"));
            }
            let (_, pairs) = sections.last_mut().expect("section opened");
            pairs.push((tokens[0].to_lowercase(), tokens[1].to_lowercase()));
        }
        for (category, pairs) in sections {
            self.insert_pairs(category, language, pairs);
        }
        Ok(())
    }

    /// Writes one language in the corpus file layout.
    pub fn write_file<W: Write>(&self, mut w: W, language: &str) -> Result<()> {
        for (cat, langs) in &self.categories {
            if let Some(pairs) = langs.get(language) {
                writeln!(w, ": {cat}")?;
                for (a, b) in pairs {
                    writeln!(w, "{a} {b}")?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses one corpus file per language.
pub fn parse_corpus<P: AsRef<Path>>(paths: &BTreeMap<String, P>) -> Result<AnalogyCorpus> {
    let mut corpus = AnalogyCorpus::new();
    for (language, path) in paths {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        corpus.read_file(BufReader::new(file), &path.display().to_string(), language)?;
    }
    for cat in corpus.categories() {
        if corpus.is_partial(cat) {
            log::warn!("category {cat} is missing in some languages");
        }
    }
    Ok(corpus)
}

/// "w1 is to w2 (language a) as w3 is to w4 (language b)".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub category: Category,
    pub source_language: String,
    pub target_language: String,
    pub w1: String,
    pub w2: String,
    pub w3: String,
    pub w4: String,
}

impl AnalogyQuestion {
    pub fn is_monolingual(&self) -> bool {
        self.source_language == self.target_language
    }
}

/// All combinations of a source-language pair with a target-language pair.
/// In the monolingual case a pair is never combined with itself.
pub fn generate_questions(
    corpus: &AnalogyCorpus,
    lang_a: &str,
    lang_b: &str,
    category: Category,
) -> Result<Vec<AnalogyQuestion>> {
    let missing = |lang: &str| Error::InvalidArgument(format!("category {category} is absent for language '{lang}'"));
    let pairs_a = corpus.pairs(category, lang_a).ok_or_else(|| missing(lang_a))?;
    let pairs_b = corpus.pairs(category, lang_b).ok_or_else(|| missing(lang_b))?;
    let monolingual = lang_a == lang_b;

    let mut out = Vec::with_capacity(pairs_a.len() * pairs_b.len());
    for (i, (w1, w2)) in pairs_a.iter().enumerate() {
        for (j, (w3, w4)) in pairs_b.iter().enumerate() {
            if monolingual && i == j {
                continue;
            }
            out.push(AnalogyQuestion {
                category,
                source_language: lang_a.to_owned(),
                target_language: lang_b.to_owned(),
                w1: w1.clone(),
                w2: w2.clone(),
                w3: w3.clone(),
                w4: w4.clone(),
            });
        }
    }
    Ok(out)
}

/// Marker for questions with a word missing from a vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutOfVocabulary;

/// Query vector `S(w2) − S(w1) + S(w3)` plus the vocabulary indices that must
/// not be returned.
fn query(
    src: &SemanticSpace,
    tgt: &SemanticSpace,
    q: &AnalogyQuestion,
) -> std::result::Result<(Array1<f64>, Vec<usize>), OutOfVocabulary> {
    let i1 = src.resolve(&q.w1).ok_or(OutOfVocabulary)?;
    let i2 = src.resolve(&q.w2).ok_or(OutOfVocabulary)?;
    let i3 = tgt.resolve(&q.w3).ok_or(OutOfVocabulary)?;
    tgt.resolve(&q.w4).ok_or(OutOfVocabulary)?;

    let v = &src.row(i2) - &src.row(i1) + &tgt.row(i3);
    let mut excluded = vec![i3];
    if q.is_monolingual() {
        excluded.extend(tgt.resolve(&q.w1));
        excluded.extend(tgt.resolve(&q.w2));
    }
    Ok((v, excluded))
}

/// Top-`k` indices by cosine to `v` among the first `search_limit` rows of
/// `space`, skipping `excluded` and zero rows. Equal scores rank the lower
/// index first.
pub fn nearest(space: &SemanticSpace, v: &Array1<f64>, k: usize, search_limit: usize, excluded: &[usize]) -> Vec<usize> {
    let v_norm = v.dot(v).sqrt();
    if k == 0 || !(v_norm > 0.0) {
        return Vec::new();
    }
    let norms = space.norms();
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..search_limit.min(space.len()) {
        if norms[i] < DEGENERATE_NORM || excluded.contains(&i) {
            continue;
        }
        let score = space.row(i).dot(v) / (norms[i] * v_norm);
        if best.len() == k && score <= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(s, _)| s >= score);
        best.insert(pos, (score, i));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// Ranked candidate indices in `tgt`, or the OOV signal.
pub fn rank_answers(
    src: &SemanticSpace,
    tgt: &SemanticSpace,
    q: &AnalogyQuestion,
    k: usize,
    search_limit: usize,
) -> std::result::Result<Vec<usize>, OutOfVocabulary> {
    let (v, excluded) = query(src, tgt, q)?;
    Ok(nearest(tgt, &v, k, search_limit, &excluded))
}

/// Answers a question with up to `k` words of `tgt`, best first.
///
/// `src` holds the (mapped) vectors for `w1` and `w2`, `tgt` the vectors for
/// `w3` and the candidates. Cross-lingual questions exclude only `w3` from the
/// search; monolingual ones exclude all three question words.
pub fn answer_analogy(
    src: &SemanticSpace,
    tgt: &SemanticSpace,
    q: &AnalogyQuestion,
    k: usize,
    search_limit: usize,
) -> std::result::Result<Vec<String>, OutOfVocabulary> {
    let ranked = rank_answers(src, tgt, q, k, search_limit)?;
    Ok(ranked.into_iter().map(|i| tgt.vocab()[i].clone()).collect())
}

/// Settings shared by every evaluation in a run.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub k: usize,
    pub search_limit: usize,
    /// Experiment label, e.g. "B-OT-cu".
    pub tag: String,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            k: DEFAULT_TOP_K,
            search_limit: DEFAULT_SEARCH_LIMIT,
            tag: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub category: Category,
    pub questions: usize,
    pub correct_at_1: usize,
    pub correct_at_k: usize,
    /// Questions with an out-of-vocabulary word; scored as incorrect.
    pub oov: usize,
}

impl CategoryCounts {
    fn empty(category: Category) -> Self {
        CategoryCounts {
            category,
            questions: 0,
            correct_at_1: 0,
            correct_at_k: 0,
            oov: 0,
        }
    }

    fn add(&mut self, other: &CategoryCounts) {
        self.questions += other.questions;
        self.correct_at_1 += other.correct_at_1;
        self.correct_at_k += other.correct_at_k;
        self.oov += other.oov;
    }

    pub fn acc1(&self) -> f64 {
        percent(self.correct_at_1, self.questions)
    }

    pub fn acck(&self) -> f64 {
        percent(self.correct_at_k, self.questions)
    }
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_language: String,
    pub target_language: String,
    pub tag: String,
    pub k: usize,
    pub search_limit: usize,
    pub exclusion_policy: String,
    pub categories: Vec<CategoryCounts>,
    /// Macro-averaged accuracies in percent.
    pub acc1: f64,
    pub acck: f64,
    pub questions: usize,
    pub oov: usize,
    pub oov_rate: f64,
}

impl EvalReport {
    fn assemble(source_language: &str, target_language: &str, settings: &EvalSettings, categories: Vec<CategoryCounts>) -> Self {
        let n = categories.len().max(1) as f64;
        let acc1 = categories.iter().map(CategoryCounts::acc1).sum::<f64>() / n;
        let acck = categories.iter().map(CategoryCounts::acck).sum::<f64>() / n;
        let questions = categories.iter().map(|c| c.questions).sum();
        let oov = categories.iter().map(|c| c.oov).sum();
        EvalReport {
            source_language: source_language.to_owned(),
            target_language: target_language.to_owned(),
            tag: settings.tag.clone(),
            k: settings.k,
            search_limit: settings.search_limit,
            exclusion_policy: EXCLUSION_POLICY.to_owned(),
            categories,
            acc1,
            acck,
            questions,
            oov,
            oov_rate: percent(oov, questions),
        }
    }

    pub fn category(&self, category: Category) -> Option<&CategoryCounts> {
        self.categories.iter().find(|c| c.category == category)
    }

    /// Adds counters category by category and recomputes the macro averages.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        let mut by_cat: BTreeMap<Category, CategoryCounts> = BTreeMap::new();
        for c in self.categories.iter().chain(&other.categories) {
            by_cat.entry(c.category).or_insert_with(|| CategoryCounts::empty(c.category)).add(c);
        }
        let settings = EvalSettings {
            k: self.k,
            search_limit: self.search_limit,
            tag: self.tag.clone(),
        };
        EvalReport::assemble(&self.source_language, &self.target_language, &settings, by_cat.into_values().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Tab-separated table, one row per category plus an `average` row.
    /// Accuracies are printed with one decimal.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("category\tn_questions\tacc1\tacc{}\toov\n", self.k);
        for c in &self.categories {
            out.push_str(&format!(
                "{}\t{}\t{:.1}\t{:.1}\t{}\n",
                c.category,
                c.questions,
                c.acc1(),
                c.acck(),
                c.oov
            ));
        }
        out.push_str(&format!(
            "average\t{}\t{:.1}\t{:.1}\t{}\n",
            self.questions, self.acc1, self.acck, self.oov
        ));
        out
    }
}

#[derive(Clone, Copy)]
enum Outcome {
    Oov,
    Rank(Option<usize>),
}

/// Answers every question of every category shared by `lang_a` and `lang_b`
/// and macro-averages the per-category accuracies.
///
/// `src` supplies vectors for the source-language pair (mapped into the
/// target space for cross-lingual runs); `tgt` supplies `w3` and the
/// candidates.
pub fn evaluate(
    src: &SemanticSpace,
    tgt: &SemanticSpace,
    corpus: &AnalogyCorpus,
    lang_a: &str,
    lang_b: &str,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if src.postprocessing() != tgt.postprocessing() {
        return Err(Error::InvalidArgument(format!(
            "post-processing differs between source ('{}') and target ('{}')",
            src.postprocessing(),
            tgt.postprocessing()
        )));
    }
    if src.dim() != tgt.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension differs between source ({}) and target ({})",
            src.dim(),
            tgt.dim()
        )));
    }
    if settings.k == 0 || settings.search_limit == 0 {
        return Err(Error::InvalidArgument("k and search_limit must be positive".into()));
    }

    let mut categories = Vec::new();
    for category in corpus.categories() {
        if corpus.pairs(category, lang_a).is_none() || corpus.pairs(category, lang_b).is_none() {
            continue;
        }
        let questions = generate_questions(corpus, lang_a, lang_b, category)?;
        if questions.is_empty() {
            continue;
        }
        let outcomes: Vec<Outcome> = questions
            .par_iter()
            .map(|q| match rank_answers(src, tgt, q, settings.k, settings.search_limit) {
                Err(OutOfVocabulary) => Outcome::Oov,
                Ok(ranked) => {
                    let gold = tgt.resolve(&q.w4);
                    Outcome::Rank(ranked.iter().position(|&i| Some(i) == gold))
                }
            })
            .collect();

        let mut counts = CategoryCounts::empty(category);
        counts.questions = outcomes.len();
        for outcome in outcomes {
            match outcome {
                Outcome::Oov => counts.oov += 1,
                Outcome::Rank(Some(rank)) => {
                    counts.correct_at_k += 1;
                    if rank == 0 {
                        counts.correct_at_1 += 1;
                    }
                }
                Outcome::Rank(None) => {}
            }
        }
        categories.push(counts);
    }

    if categories.is_empty() {
        return Err(Error::Eval(format!("no analogy questions for {lang_a}→{lang_b}")));
    }
    Ok(EvalReport::assemble(lang_a, lang_b, settings, categories))
}
