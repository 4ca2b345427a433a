//! Linear transformations between semantic spaces, fitted from aligned
//! dictionary rows: least squares, orthogonal (Procrustes) and CCA.
//!
//! Vectors are row vectors throughout, so a mapped vector is `x · T`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analogy_bench::BilingualDictionary;
use crate::embedding_store::{PostProcessing, SemanticSpace};
use crate::error::{Error, Result};

/// Default ridge added to the CCA covariance diagonals.
pub const DEFAULT_CCA_EPSILON: f64 = 1e-8;

/// Relative cutoff for treating singular values as zero in the pseudo-inverse.
const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

const SVD_MAX_ITERATIONS: usize = 10_000;

/// Number of consecutive loss increases that counts as divergence.
const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LS")]
    LeastSquares,
    #[serde(rename = "OT")]
    Orthogonal,
    #[serde(rename = "CCA")]
    Cca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LeastSquares, Method::Orthogonal, Method::Cca];

    /// Short tag used in experiment names.
    pub fn tag(self) -> &'static str {
        match self {
            Method::LeastSquares => "LS",
            Method::Orthogonal => "OT",
            Method::Cca => "CCA",
        }
    }

    /// Name used in the map file header.
    pub fn file_name(self) -> &'static str {
        match self {
            Method::LeastSquares => "least_squares",
            Method::Orthogonal => "orthogonal",
            Method::Cca => "cca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LS" | "ls" | "least_squares" => Ok(Method::LeastSquares),
            "OT" | "ot" | "orthogonal" => Ok(Method::Orthogonal),
            "CCA" | "cca" => Ok(Method::Cca),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected LS, OT or CCA)"
            ))),
        }
    }
}

/// Row-aligned source and target vectors for the dictionary pairs found in
/// both vocabularies.
#[derive(Clone, Debug)]
pub struct AlignedMatrices {
    pub source: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub pairs_used: Vec<(String, String)>,
    pub skipped: usize,
    pub source_language: String,
    pub target_language: String,
    pub postprocessing: PostProcessing,
}

impl AlignedMatrices {
    /// Wraps raw matrices, e.g. for synthetic problems.
    pub fn from_matrices(source: DMatrix<f64>, target: DMatrix<f64>) -> Result<Self> {
        if source.shape() != target.shape() {
            return Err(Error::InvalidArgument(format!(
                "aligned matrices differ in shape: {:?} vs {:?}",
                source.shape(),
                target.shape()
            )));
        }
        if source.nrows() == 0 || source.ncols() == 0 {
            return Err(Error::InvalidArgument("aligned matrices are empty".into()));
        }
        let pairs_used = (0..source.nrows()).map(|i| (i.to_string(), i.to_string())).collect();
        Ok(AlignedMatrices {
            source,
            target,
            pairs_used,
            skipped: 0,
            source_language: "src".into(),
            target_language: "tgt".into(),
            postprocessing: PostProcessing::None,
        })
    }

    /// Number of aligned rows.
    pub fn len(&self) -> usize {
        self.source.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.source.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.source.ncols()
    }
}

/// Collects the vectors of every dictionary pair present in both spaces, in
/// dictionary order. Duplicate pairs yield duplicate rows.
pub fn build_aligned(
    src: &SemanticSpace,
    tgt: &SemanticSpace,
    dict: &BilingualDictionary,
) -> Result<AlignedMatrices> {
    let d = src.dim();
    if tgt.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: source {d}, target {}",
            tgt.dim()
        )));
    }
    if src.postprocessing() != tgt.postprocessing() {
        return Err(Error::InvalidArgument(format!(
            "post-processing mismatch: source '{}', target '{}'",
            src.postprocessing(),
            tgt.postprocessing()
        )));
    }

    let mut rows = Vec::new();
    let mut pairs_used = Vec::new();
    let mut skipped = 0;
    for (a, b) in &dict.pairs {
        match (src.resolve(a), tgt.resolve(b)) {
            (Some(i), Some(j)) => {
                rows.push((i, j));
                pairs_used.push((a.clone(), b.clone()));
            }
            _ => skipped += 1,
        }
    }
    let n = rows.len();
    if n < d {
        return Err(Error::FitInfeasible(format!(
            "only {n} of {} dictionary pairs found in both vocabularies; need at least {d}",
            dict.pairs.len()
        )));
    }
    if skipped > 0 {
        log::info!(
            "{}→{}: {skipped} dictionary pairs skipped (out of vocabulary)",
            src.language(),
            tgt.language()
        );
    }

    let source = DMatrix::from_fn(n, d, |r, c| src.matrix()[[rows[r].0, c]]);
    let target = DMatrix::from_fn(n, d, |r, c| tgt.matrix()[[rows[r].1, c]]);
    Ok(AlignedMatrices {
        source,
        target,
        pairs_used,
        skipped,
        source_language: src.language().to_owned(),
        target_language: tgt.language().to_owned(),
        postprocessing: src.postprocessing(),
    })
}

/// A fitted d×d map `T`; a source row `x` maps to `x · T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
    pub method: Method,
    pub source_language: String,
    pub target_language: String,
    pub postprocessing: PostProcessing,
}

impl LinearMap {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The identity map of dimension `d`.
    pub fn identity(d: usize, method: Method, language: &str, postprocessing: PostProcessing) -> LinearMap {
        LinearMap {
            matrix: DMatrix::identity(d, d),
            method,
            source_language: language.to_owned(),
            target_language: language.to_owned(),
            postprocessing,
        }
    }

    /// Writes the header line `d method src tgt postproc` followed by `d`
    /// rows of `d` numbers at full precision.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for label in [&self.source_language, &self.target_language] {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("language label '{label}' is not a single token")));
            }
        }
        let d = self.dim();
        writeln!(
            w,
            "{d} {} {} {} {}",
            self.method.file_name(),
            self.source_language,
            self.target_language,
            self.postprocessing
        )?;
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| format!("{:.17e}", self.matrix[(i, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R, source_name: &str) -> Result<LinearMap> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(source_name, 1, "missing header"))?;
        let fields: Vec<&str> = header.split_ascii_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                source_name,
                1,
                "expected header \"d method src tgt postproc\"",
            ));
        }
        let d: usize = fields[0]
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::parse(source_name, 1, format!("invalid dimension '{}'", fields[0])))?;
        let method: Method = fields[1]
            .parse()
            .map_err(|e: Error| Error::parse(source_name, 1, e.to_string()))?;
        let postprocessing: PostProcessing = fields[4]
            .parse()
            .map_err(|e: Error| Error::parse(source_name, 1, e.to_string()))?;

        let mut values = Vec::with_capacity(d * d);
        for i in 0..d {
            let line_no = i + 2;
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::parse(source_name, line_no, format!("expected {d} matrix rows")))?;
            let row: Vec<f64> = line
                .split_ascii_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(source_name, line_no, "invalid number"))?;
            if row.len() != d {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected {d} values, found {}", row.len()),
                ));
            }
            values.extend(row);
        }
        Ok(LinearMap {
            matrix: DMatrix::from_row_slice(d, d, &values),
            method,
            source_language: fields[2].to_owned(),
            target_language: fields[3].to_owned(),
            postprocessing,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_text(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LinearMap> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        LinearMap::read_text(BufReader::new(file), &path.display().to_string())
    }
}

fn new_map(am: &AlignedMatrices, matrix: DMatrix<f64>, method: Method) -> LinearMap {
    LinearMap {
        matrix,
        method,
        source_language: am.source_language.clone(),
        target_language: am.target_language.clone(),
        postprocessing: am.postprocessing,
    }
}

fn svd(m: DMatrix<f64>, what: &str) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!("{what} contains non-finite values")));
    }
    let mut svd = m
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::Fit(format!("SVD of {what} did not converge")))?;
    svd.sort_by_singular_values();
    Ok(svd)
}

/// Moore–Penrose pseudo-inverse via SVD. Returns the pseudo-inverse and the
/// numerical rank.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let (rows, cols) = m.shape();
    let svd = svd(m.clone(), "matrix")?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rows.max(cols) as f64 * sigma_max * PINV_RELATIVE_CUTOFF;

    let mut rank = 0;
    let inv_sigma = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| {
            if s > cutoff {
                rank += 1;
                1.0 / s
            } else {
                0.0
            }
        }),
    );
    let pinv = v_t.transpose() * DMatrix::from_diagonal(&inv_sigma) * u.transpose();
    Ok((pinv, rank))
}

/// Least-squares map `T = pinv(X_a) · X_b`.
///
/// A rank-deficient source matrix yields the minimum-norm solution and a
/// warning.
pub fn fit_least_squares(am: &AlignedMatrices) -> Result<LinearMap> {
    let (n, d) = am.source.shape();
    if n < d {
        return Err(Error::FitInfeasible(format!("least squares needs n >= d, got n={n}, d={d}")));
    }
    let (pinv, rank) = pseudo_inverse(&am.source)?;
    if rank < d {
        log::warn!(
            "{}→{}: source matrix has rank {rank} < {d}; using the minimum-norm solution",
            am.source_language,
            am.target_language
        );
    }
    Ok(new_map(am, pinv * &am.target, Method::LeastSquares))
}

/// Mean squared residual `‖X_b − X_a·T‖²_F / n`.
pub fn least_squares_loss(am: &AlignedMatrices, t: &DMatrix<f64>) -> f64 {
    let residual = &am.target - &am.source * t;
    residual.norm_squared() / am.len() as f64
}

/// Plain gradient descent on the mean squared residual, starting from `T = 0`.
pub fn fit_least_squares_gd(am: &AlignedMatrices, steps: usize, learning_rate: f64) -> Result<LinearMap> {
    if am.is_empty() {
        return Err(Error::FitInfeasible("no aligned rows".into()));
    }
    let n = am.len() as f64;
    let d = am.dim();
    let gram = am.source.transpose() * &am.source;
    let cross = am.source.transpose() * &am.target;

    let target_energy = am.target.norm_squared();
    // ‖Y − XT‖² = ‖Y‖² − 2⟨XᵀY, T⟩ + ⟨T, XᵀX·T⟩
    let loss_of = |t: &DMatrix<f64>| (target_energy - 2.0 * cross.dot(t) + t.dot(&(&gram * t))) / n;

    let mut t = DMatrix::<f64>::zeros(d, d);
    let mut loss = loss_of(&t);
    let mut increases = 0;
    for step in 1..=steps {
        // ∇ = (2/n)·(XᵀX·T − XᵀY)
        let grad = (&gram * &t - &cross) * (2.0 / n);
        t -= grad * learning_rate;
        let next = loss_of(&t);
        if !next.is_finite() {
            return Err(Error::Diverged { steps: step, last_loss: next });
        }
        if next > loss {
            increases += 1;
            if increases >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged { steps: step, last_loss: next });
            }
        } else {
            increases = 0;
        }
        loss = next;
    }
    Ok(new_map(am, t, Method::LeastSquares))
}

/// Orthogonal map minimizing `‖X_b − X_a·T‖_F` subject to `TᵀT = I`.
///
/// With `X_bᵀ·X_a = U·Σ·Vᵀ` the optimum is `T = V·Uᵀ`.
pub fn fit_orthogonal(am: &AlignedMatrices) -> Result<LinearMap> {
    let cross = am.target.transpose() * &am.source;
    let svd = svd(cross, "cross-covariance")?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    Ok(new_map(am, v_t.transpose() * u.transpose(), Method::Orthogonal))
}

/// Canonical directions for both sides, one per column.
#[derive(Clone, Debug)]
pub struct CcaBases {
    pub source: DMatrix<f64>,
    pub target: DMatrix<f64>,
    /// Canonical correlations, non-increasing, clipped to `[0, 1]`.
    pub correlations: Vec<f64>,
}

fn column_centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// `Σ^{-1/2}` of a symmetric positive definite matrix.
fn inverse_sqrt(sigma: DMatrix<f64>, side: &str) -> Result<DMatrix<f64>> {
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sigma, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::Fit(format!("eigendecomposition of {side} covariance did not converge")))?;
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-14 {
        return Err(Error::Fit(format!(
            "{side} covariance is singular (eigenvalues in [{min:e}, {max:e}]); \
             increase the CCA regularization"
        )));
    }
    let q = &eig.eigenvectors;
    let inv = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    Ok(q * DMatrix::from_diagonal(&inv) * q.transpose())
}

/// Canonical correlation analysis, returning the composed map
/// `T = C_a · C_b⁻¹` and the canonical bases.
///
/// Both sides are column-centered internally. `regularization` is added to
/// the diagonals of both auto-covariances.
pub fn fit_cca(am: &AlignedMatrices, regularization: f64) -> Result<(LinearMap, CcaBases)> {
    let (n, d) = am.source.shape();
    if n <= d {
        return Err(Error::FitInfeasible(format!("CCA needs n > d, got n={n}, d={d}")));
    }
    if !(regularization >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "CCA regularization must be non-negative, got {regularization}"
        )));
    }
    let xa = column_centered(&am.source);
    let xb = column_centered(&am.target);
    let nf = n as f64;
    let ridge = DMatrix::<f64>::identity(d, d) * regularization;
    let sigma_aa = xa.transpose() * &xa / nf + &ridge;
    let sigma_bb = xb.transpose() * &xb / nf + &ridge;
    let sigma_ab = xa.transpose() * &xb / nf;

    let aa_inv_sqrt = inverse_sqrt(sigma_aa, "source")?;
    let bb_inv_sqrt = inverse_sqrt(sigma_bb, "target")?;

    let m = &aa_inv_sqrt * sigma_ab * &bb_inv_sqrt;
    let svd = svd(m, "whitened cross-covariance")?;
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();

    let mut ca = &aa_inv_sqrt * u;
    let mut cb = &bb_inv_sqrt * &v;

    // Flip column pairs so the largest-magnitude entry of each source column is positive.
    for k in 0..d {
        let col = ca.column(k);
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            ca.column_mut(k).neg_mut();
            cb.column_mut(k).neg_mut();
        }
    }

    // Pearson correlation of each pair of canonical variates, descending.
    let pa = &xa * &ca;
    let pb = &xb * &cb;
    let mut correlations: Vec<(usize, f64)> = (0..d)
        .map(|k| {
            let (u, v) = (pa.column(k), pb.column(k));
            let denom = u.norm() * v.norm();
            let r = if denom > 0.0 { u.dot(&v) / denom } else { 0.0 };
            (k, r.clamp(0.0, 1.0))
        })
        .collect();
    correlations.sort_by(|x, y| y.1.total_cmp(&x.1));
    let order: Vec<usize> = correlations.iter().map(|&(k, _)| k).collect();
    let ca = ca.select_columns(&order);
    let cb = cb.select_columns(&order);
    let correlations = correlations.into_iter().map(|(_, r)| r).collect();

    let cb_inv = cb
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("target canonical basis is singular; increase the CCA regularization".into()))?;
    let check = &cb * &cb_inv - DMatrix::<f64>::identity(d, d);
    if check.norm() > 1e-6 * (d as f64) {
        return Err(Error::Fit(format!(
            "target canonical basis is ill-conditioned (‖C_b·C_b⁻¹ − I‖ = {:e}); increase the CCA regularization",
            check.norm()
        )));
    }

    let map = new_map(am, &ca * cb_inv, Method::Cca);
    Ok((
        map,
        CcaBases {
            source: ca,
            target: cb,
            correlations,
        },
    ))
}

/// Fits a map with the given method.
pub fn fit(am: &AlignedMatrices, method: Method, cca_regularization: f64) -> Result<LinearMap> {
    match method {
        Method::LeastSquares => fit_least_squares(am),
        Method::Orthogonal => fit_orthogonal(am),
        Method::Cca => fit_cca(am, cca_regularization).map(|(map, _)| map),
    }
}

/// Right-multiplies every row of `space` by the map. The result is labelled
/// `src→tgt` and keeps the source vocabulary.
pub fn apply_map(map: &LinearMap, space: &SemanticSpace) -> Result<SemanticSpace> {
    if space.language() != map.source_language {
        return Err(Error::InvalidArgument(format!(
            "map expects source language '{}', space is '{}'",
            map.source_language,
            space.language()
        )));
    }
    if space.postprocessing() != map.postprocessing {
        return Err(Error::InvalidArgument(format!(
            "map was fitted on '{}' spaces, space is '{}'",
            map.postprocessing,
            space.postprocessing()
        )));
    }
    if space.dim() != map.dim() {
        return Err(Error::InvalidArgument(format!(
            "map dimension {} does not match space dimension {}",
            map.dim(),
            space.dim()
        )));
    }
    let t = to_ndarray(&map.matrix);
    let mapped = space.matrix().dot(&t);
    Ok(space.with_matrix(format!("{}→{}", map.source_language, map.target_language), mapped))
}

pub fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)])
}

pub fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}
