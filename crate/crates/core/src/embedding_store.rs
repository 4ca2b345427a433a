//! Monolingual semantic spaces: loading, lookup and global post-processing.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows whose norm falls below this are treated as zero vectors.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Global post-processing applied to a semantic space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostProcessing {
    #[default]
    None,
    /// Column-wise mean centering.
    C,
    /// Unit-length rows.
    U,
    /// Centering followed by unit-length rows.
    Cu,
}

impl PostProcessing {
    pub const ALL: [PostProcessing; 4] = [
        PostProcessing::None,
        PostProcessing::C,
        PostProcessing::U,
        PostProcessing::Cu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PostProcessing::None => "none",
            PostProcessing::C => "c",
            PostProcessing::U => "u",
            PostProcessing::Cu => "cu",
        }
    }

    pub fn is_centered(self) -> bool {
        matches!(self, PostProcessing::C | PostProcessing::Cu)
    }

    pub fn is_unit(self) -> bool {
        matches!(self, PostProcessing::U | PostProcessing::Cu)
    }
}

impl fmt::Display for PostProcessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PostProcessing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "" | "-" => Ok(PostProcessing::None),
            "c" => Ok(PostProcessing::C),
            "u" => Ok(PostProcessing::U),
            "cu" => Ok(PostProcessing::Cu),
            other => Err(Error::InvalidArgument(format!(
                "unknown post-processing '{other}' (expected none, c, u or cu)"
            ))),
        }
    }
}

/// Options for reading word2vec text files.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Keep at most this many (distinct) words.
    pub limit: Option<usize>,
    /// Lowercase every token before insertion.
    pub lowercase: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            limit: None,
            lowercase: true,
        }
    }
}

/// A frequency-ordered vocabulary paired with a dense row-per-word matrix.
///
/// Spaces are immutable: post-processing returns a new space.
#[derive(Clone, Debug)]
pub struct SemanticSpace {
    language: String,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
    norms: Vec<f64>,
    postprocessing: PostProcessing,
    degenerate: Vec<usize>,
}

impl SemanticSpace {
    /// Builds a space from a vocabulary and a matrix with one row per word.
    pub fn new(language: impl Into<String>, vocab: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        Self::with_postprocessing(language, vocab, matrix, PostProcessing::None)
    }

    pub(crate) fn with_postprocessing(
        language: impl Into<String>,
        vocab: Vec<String>,
        matrix: Array2<f64>,
        postprocessing: PostProcessing,
    ) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::InvalidArgument("empty vocabulary".into()));
        }
        if matrix.nrows() != vocab.len() {
            return Err(Error::InvalidArgument(format!(
                "matrix has {} rows but vocabulary has {} words",
                matrix.nrows(),
                vocab.len()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, word) in vocab.iter().enumerate() {
            if index.insert(word.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word '{word}' in vocabulary")));
            }
        }
        let norms = row_norms(&matrix);
        Ok(SemanticSpace {
            language: language.into(),
            vocab,
            index,
            matrix,
            norms,
            postprocessing,
            degenerate: Vec::new(),
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn postprocessing(&self) -> PostProcessing {
        self.postprocessing
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Euclidean norm of every row, in vocabulary order.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Indices of rows that were left as zero vectors by normalization.
    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    /// Exact index lookup, no case folding.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Resolves a query word, lowercasing it first.
    pub fn resolve(&self, word: &str) -> Option<usize> {
        match self.index.get(word) {
            Some(&i) => Some(i),
            None => self.index.get(&word.to_lowercase()).copied(),
        }
    }

    /// Vector for `word` (lowercased before lookup).
    pub fn lookup(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.resolve(word).map(|i| self.matrix.row(i))
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(index)
    }

    /// Returns a copy with the given language label.
    pub fn relabeled(&self, language: impl Into<String>) -> SemanticSpace {
        SemanticSpace {
            language: language.into(),
            ..self.clone()
        }
    }

    /// Replaces the matrix while keeping vocabulary, label and post-processing tag.
    pub(crate) fn with_matrix(&self, language: String, matrix: Array2<f64>) -> SemanticSpace {
        debug_assert_eq!(matrix.nrows(), self.vocab.len());
        let norms = row_norms(&matrix);
        SemanticSpace {
            language,
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            matrix,
            norms,
            postprocessing: self.postprocessing,
            degenerate: self.degenerate.clone(),
        }
    }

    /// Column-wise mean centering.
    pub fn center(&self) -> Result<SemanticSpace> {
        if self.postprocessing != PostProcessing::None {
            return Err(Error::InvalidState(format!(
                "cannot center a space already post-processed with '{}'",
                self.postprocessing
            )));
        }
        let mut matrix = self.matrix.clone();
        center_columns(&mut matrix);
        let mut out = self.with_matrix(self.language.clone(), matrix);
        out.postprocessing = PostProcessing::C;
        Ok(out)
    }

    /// Scales every row to unit Euclidean norm. Rows with norm below
    /// [`DEGENERATE_NORM`] stay zero and are recorded in [`Self::degenerate`].
    pub fn normalize(&self) -> Result<SemanticSpace> {
        let next = match self.postprocessing {
            PostProcessing::None => PostProcessing::U,
            PostProcessing::C => PostProcessing::Cu,
            other => {
                return Err(Error::InvalidState(format!(
                    "cannot normalize a space already post-processed with '{other}'"
                )))
            }
        };
        let mut matrix = self.matrix.clone();
        let mut degenerate = Vec::new();
        for (i, mut row) in matrix.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm < DEGENERATE_NORM {
                row.fill(0.0);
                degenerate.push(i);
            } else {
                row /= norm;
            }
        }
        if !degenerate.is_empty() {
            log::warn!(
                "{}: {} zero-norm rows left as zero vectors",
                self.language,
                degenerate.len()
            );
        }
        let mut out = self.with_matrix(self.language.clone(), matrix);
        out.postprocessing = next;
        out.degenerate = degenerate;
        Ok(out)
    }

    /// Applies a post-processing variant to a raw space.
    pub fn postprocess(&self, variant: PostProcessing) -> Result<SemanticSpace> {
        match variant {
            PostProcessing::None => {
                if self.postprocessing != PostProcessing::None {
                    return Err(Error::InvalidState(
                        "post-processing can only be applied to a raw space".into(),
                    ));
                }
                Ok(self.clone())
            }
            PostProcessing::C => self.center(),
            PostProcessing::U => self.normalize(),
            PostProcessing::Cu => self.center()?.normalize(),
        }
    }

    /// Keeps only the first `limit` words.
    pub fn truncated(&self, limit: usize) -> SemanticSpace {
        if limit >= self.len() {
            return self.clone();
        }
        let limit = limit.max(1);
        let vocab = self.vocab[..limit].to_vec();
        let matrix = self.matrix.slice(ndarray::s![..limit, ..]).to_owned();
        let mut out = SemanticSpace::with_postprocessing(self.language.clone(), vocab, matrix, self.postprocessing)
            .expect("prefix of a valid space is valid");
        out.degenerate = self.degenerate.iter().copied().filter(|&i| i < limit).collect();
        out
    }

    /// Writes the space in word2vec text format.
    pub fn write_word2vec<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dim())?;
        for (word, row) in self.vocab.iter().zip(self.matrix.axis_iter(Axis(0))) {
            write!(writer, "{word}")?;
            for v in row {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_word2vec(std::io::BufWriter::new(file))
    }
}

/// Subtracts the column means in place.
pub fn center_columns(matrix: &mut Array2<f64>) {
    if matrix.nrows() == 0 {
        return;
    }
    let means: Array1<f64> = matrix.mean_axis(Axis(0)).expect("non-empty matrix");
    *matrix -= &means;
}

fn row_norms(matrix: &Array2<f64>) -> Vec<f64> {
    matrix.axis_iter(Axis(0)).map(|row| row.dot(&row).sqrt()).collect()
}

/// Loads a word2vec text file.
pub fn load_space(path: impl AsRef<Path>, language: &str, options: &LoadOptions) -> Result<SemanticSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_space(BufReader::new(file), &path.display().to_string(), language, options)
}

/// Reads word2vec text format: a "count dim" header, then one token and
/// `dim` numbers per line, most frequent word first.
///
/// Duplicate words (after lowercasing) keep their first occurrence.
pub fn read_space<R: BufRead>(
    reader: R,
    source_name: &str,
    language: &str,
    options: &LoadOptions,
) -> Result<SemanticSpace> {
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::parse(source_name, 1, "missing header")),
    };
    let (count, dim) = parse_header(header.trim_end_matches('\r'))
        .map_err(|message| Error::parse(source_name, 1, message))?;
    if count == 0 {
        return Err(Error::parse(source_name, 1, "empty vocabulary"));
    }

    let wanted = options.limit.map_or(count, |l| l.min(count));
    if wanted == 0 {
        return Err(Error::parse(source_name, 1, "limit must be positive"));
    }

    let mut vocab = Vec::with_capacity(wanted);
    let mut seen = HashMap::with_capacity(wanted);
    let mut values = Vec::with_capacity(wanted * dim);
    let mut entries = 0usize;
    let mut duplicates = 0usize;

    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if entries == count {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("more entries than the {count} declared in the header"),
            ));
        }
        entries += 1;

        let mut fields = line.split_ascii_whitespace();
        let token = fields.next().expect("non-empty line has a token");
        let start = values.len();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("invalid number '{field}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(source_name, line_no, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        let found = values.len() - start;
        if found != dim {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected {dim} values, found {found}"),
            ));
        }

        let word = if options.lowercase {
            token.to_lowercase()
        } else {
            token.to_owned()
        };
        if seen.contains_key(&word) {
            values.truncate(start);
            duplicates += 1;
        } else {
            seen.insert(word.clone(), vocab.len());
            vocab.push(word);
            if options.limit.is_some() && vocab.len() == wanted {
                break;
            }
        }
    }

    if vocab.len() < wanted && entries < count {
        return Err(Error::parse(
            source_name,
            entries + 2,
            format!("header declares {count} entries but file ends after {entries}"),
        ));
    }
    if vocab.is_empty() {
        return Err(Error::parse(source_name, 1, "empty vocabulary"));
    }
    if duplicates > 0 {
        log::warn!("{source_name}: dropped {duplicates} duplicate words");
    }

    let matrix = Array2::from_shape_vec((vocab.len(), dim), values).expect("row count matches");
    SemanticSpace::new(language, vocab, matrix)
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize), String> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 2 {
        return Err(format!("malformed header '{line}', expected \"count dim\""));
    }
    let count: i64 = fields[0]
        .parse()
        .map_err(|_| format!("invalid word count '{}'", fields[0]))?;
    let dim: i64 = fields[1]
        .parse()
        .map_err(|_| format!("invalid dimension '{}'", fields[1]))?;
    if count < 0 {
        return Err(format!("negative word count {count}"));
    }
    if dim <= 0 {
        return Err(format!("dimension must be positive, got {dim}"));
    }
    Ok((count as usize, dim as usize))
}
