//! Report assembly and file output for grid runs and dictionary sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentTag;
use crate::analogy_bench::{Category, EvalReport};
use crate::error::{Error, Result};

/// Reports for every ordered language pair of one cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub tag: ExperimentTag,
    pub dictionary_size: usize,
    pub reports: BTreeMap<(String, String), EvalReport>,
    pub failures: BTreeMap<(String, String), String>,
}

impl CellResult {
    pub(crate) fn new(tag: ExperimentTag, dictionary_size: usize) -> Self {
        CellResult {
            tag,
            dictionary_size,
            reports: BTreeMap::new(),
            failures: BTreeMap::new(),
        }
    }

    pub(crate) fn record(&mut self, a: &str, b: &str, report: Result<EvalReport>) {
        let key = (a.to_owned(), b.to_owned());
        match report {
            Ok(r) => {
                self.reports.insert(key, r);
            }
            Err(e) => {
                self.failures.insert(key, e.to_string());
            }
        }
    }

    pub(crate) fn fail_all(&mut self, languages: &[String], error: &Error) {
        for a in languages {
            for b in languages {
                self.failures.insert((a.clone(), b.clone()), error.to_string());
            }
        }
    }

    pub fn report(&self, a: &str, b: &str) -> Option<&EvalReport> {
        self.reports.get(&(a.to_owned(), b.to_owned()))
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    fn mean(&self, cross: bool, pick: impl Fn(&EvalReport) -> f64) -> Option<f64> {
        let values: Vec<f64> = self
            .reports
            .iter()
            .filter(|((a, b), _)| (a != b) == cross)
            .map(|(_, r)| pick(r))
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn summary(&self) -> CellSummary {
        CellSummary {
            tag: self.tag.to_string(),
            dictionary_size: self.dictionary_size,
            monolingual_acc1: self.mean(false, |r| r.acc1),
            monolingual_acck: self.mean(false, |r| r.acck),
            cross_lingual_acc1: self.mean(true, |r| r.acc1),
            cross_lingual_acck: self.mean(true, |r| r.acck),
            pairs_evaluated: self.reports.len(),
            pairs_failed: self.failures.len(),
        }
    }
}

/// Averages of one cell. Cross-lingual averages cover pairs with distinct
/// source and target languages only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub tag: String,
    pub dictionary_size: usize,
    pub monolingual_acc1: Option<f64>,
    pub monolingual_acck: Option<f64>,
    pub cross_lingual_acc1: Option<f64>,
    pub cross_lingual_acck: Option<f64>,
    pub pairs_evaluated: usize,
    pub pairs_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub cells: Vec<CellSummary>,
}

impl GridSummary {
    pub fn from_cells(cells: &[CellResult]) -> Self {
        GridSummary {
            cells: cells.iter().map(CellResult::summary).collect(),
        }
    }

    pub fn failed_pairs(&self) -> usize {
        self.cells.iter().map(|c| c.pairs_failed).sum()
    }
}

/// One point of a dictionary-size sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub dictionary_size: usize,
    pub target: String,
    /// Number of source languages averaged.
    pub sources: usize,
    pub acc1: f64,
    pub acck: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

/// Square matrix with source languages as rows and target languages as columns.
fn pair_matrix(languages: &[String], value: impl Fn(&str, &str) -> Option<f64>) -> String {
    let mut out = String::from("source\\target");
    for b in languages {
        out.push('\t');
        out.push_str(b);
    }
    out.push('\n');
    for a in languages {
        out.push_str(a);
        for b in languages {
            out.push('\t');
            out.push_str(&fmt_opt(value(a, b)));
        }
        out.push('\n');
    }
    out
}

/// Writes per-pair reports, pair matrices and per-category matrices of one cell.
pub(crate) fn write_cell(dir: &Path, cell: &CellResult, languages: &[String], k: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;

    for ((a, b), report) in &cell.reports {
        write_file(&dir.join(format!("{a}-{b}.json")), &report.to_json()?)?;
        write_file(&dir.join(format!("{a}-{b}.tsv")), &report.to_tsv())?;
    }

    let lookup = |a: &str, b: &str| cell.report(a, b);
    write_file(
        &dir.join("pairs-acc1.tsv"),
        &pair_matrix(languages, |a, b| lookup(a, b).map(|r| r.acc1)),
    )?;
    write_file(
        &dir.join(format!("pairs-acc{k}.tsv")),
        &pair_matrix(languages, |a, b| lookup(a, b).map(|r| r.acck)),
    )?;

    for category in Category::ALL {
        if !cell.reports.values().any(|r| r.category(category).is_some()) {
            continue;
        }
        let value = |a: &str, b: &str, at1: bool| {
            lookup(a, b)
                .and_then(|r| r.category(category))
                .map(|c| if at1 { c.acc1() } else { c.acck() })
        };
        write_file(
            &dir.join(format!("category-{category}-acc1.tsv")),
            &pair_matrix(languages, |a, b| value(a, b, true)),
        )?;
        write_file(
            &dir.join(format!("category-{category}-acc{k}.tsv")),
            &pair_matrix(languages, |a, b| value(a, b, false)),
        )?;
    }

    if !cell.failures.is_empty() {
        let mut text = String::new();
        for ((a, b), message) in &cell.failures {
            let _ = writeln!(text, "{a}\t{b}\t{message}");
        }
        write_file(&dir.join("failures.tsv"), &text)?;
    }
    Ok(())
}

pub(crate) fn summary_tsv(summary: &GridSummary, k: usize) -> String {
    let mut out = format!("tag\tmono_acc1\tmono_acc{k}\tcross_acc1\tcross_acc{k}\tpairs\tfailed\n");
    for c in &summary.cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.tag,
            fmt_opt(c.monolingual_acc1),
            fmt_opt(c.monolingual_acck),
            fmt_opt(c.cross_lingual_acc1),
            fmt_opt(c.cross_lingual_acck),
            c.pairs_evaluated,
            c.pairs_failed
        );
    }
    out
}

pub(crate) fn write_summary(dir: &Path, summary: &GridSummary, k: usize) -> Result<()> {
    write_file(&dir.join("summary.tsv"), &summary_tsv(summary, k))?;
    write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(summary)?)
}

pub(crate) fn sweep_tsv(points: &[SweepPoint], k: usize) -> String {
    let mut out = format!("dictionary_size\ttarget\tsources\tacc1\tacc{k}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.1}\t{:.1}",
            p.dictionary_size, p.target, p.sources, p.acc1, p.acck
        );
    }
    out
}

pub(crate) fn write_sweep(path: &Path, points: &[SweepPoint], k: usize) -> Result<()> {
    write_file(path, &sweep_tsv(points, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layout() {
        let langs = vec!["de".to_owned(), "en".to_owned()];
        let text = pair_matrix(&langs, |a, b| (a != "de" || b != "en").then_some(12.345));
        assert_eq!(text, "source\\target\tde\ten\nde\t12.3\t-\nen\t12.3\t12.3\n");
    }

    #[test]
    fn sweep_layout() {
        let points = vec![SweepPoint {
            dictionary_size: 1000,
            target: "en".into(),
            sources: 5,
            acc1: 40.04,
            acck: 55.56,
        }];
        assert_eq!(
            sweep_tsv(&points, 5),
            "dictionary_size\ttarget\tsources\tacc1\tacc5\n1000\ten\t5\t40.0\t55.6\n"
        );
    }
}
