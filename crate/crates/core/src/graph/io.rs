//! Dataset directory format.
//!
//! ```text
//! <dir>/edges.tsv            "u<TAB>v" per line (any whitespace accepted)
//! <dir>/features.tsv         one node per line, F tab-separated decimals
//! <dir>/labels.tsv           one integer per line, -1 for unknown
//! <dir>/meta.json            optional {"num_classes": C}
//! <dir>/splits/split_<k>.json {"train": [...], "val": [...], "test": [...]}
//! ```
//!
//! All indices are 0-based. When `splits/` is absent, ten random splits are
//! generated with seeds `0..10`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{random_splits, Graph, SplitSet};
use crate::tensor::Matrix;

/// Number of random splits generated for datasets that ship without any.
pub const DEFAULT_SPLIT_COUNT: usize = 10;

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub splits: Vec<SplitSet>,
    /// Non-blank lines in `edges.tsv`, before symmetrisation and deduplication.
    pub edge_records: usize,
    /// Whether the splits were generated rather than read from disk.
    pub generated_splits: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_classes: usize,
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Lines of a file with trailing blank lines dropped; line numbers are 1-based.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.trim_end().lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parse_features(path: &Path) -> Result<Matrix> {
    let text = read(path)?;
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (ln, line) in lines(&text) {
        let before = data.len();
        for tok in line.split('\t') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, ln, format!("not a decimal: {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, ln, "non-finite feature value"));
            }
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(f) if f != w => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {f} columns, found {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, width.unwrap_or(0), data)
}

fn parse_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let text = read(path)?;
    lines(&text)
        .map(|(ln, line)| {
            let v: i64 = line
                .trim()
                .parse()
                .map_err(|_| parse_err(path, ln, format!("not an integer: {line:?}")))?;
            match v {
                -1 => Ok(None),
                v if v >= 0 => Ok(Some(v as usize)),
                v => Err(parse_err(path, ln, format!("negative label {v}"))),
            }
        })
        .collect()
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, line) in lines(&text) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = cols
                .next()
                .ok_or_else(|| parse_err(path, ln, "expected two columns"))?;
            tok.parse()
                .map_err(|_| parse_err(path, ln, format!("not a node id: {tok:?}")))
        };
        let (u, v) = (next()?, next()?);
        if cols.next().is_some() {
            return Err(parse_err(path, ln, "expected two columns"));
        }
        if u >= n || v >= n {
            return Err(parse_err(
                path,
                ln,
                format!("endpoint out of range: ({u}, {v}) with {n} nodes"),
            ));
        }
        out.push((u, v));
    }
    Ok(out)
}

fn split_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name
            .strip_prefix("split_")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            files.push((k, entry.path()));
        }
    }
    files.sort();
    Ok(files)
}

/// Loads a dataset directory; see the module docs for the layout.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let features_path = dir.join("features.tsv");
    let labels_path = dir.join("labels.tsv");
    let edges_path = dir.join("edges.tsv");
    for p in [&edges_path, &features_path, &labels_path] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let features = parse_features(&features_path)?;
    let labels = parse_labels(&labels_path)?;
    let n = features.rows();
    if labels.len() != n {
        return Err(parse_err(
            &labels_path,
            labels.len().min(n) + 1,
            format!("{} labels but {} feature rows", labels.len(), n),
        ));
    }
    let max_label = labels.iter().flatten().copied().max();
    let meta_path = dir.join("meta.json");
    let num_classes = if meta_path.exists() {
        let meta: Meta = serde_json::from_str(&read(&meta_path)?)?;
        if let Some((i, y)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, y)| y.filter(|&y| y >= meta.num_classes).map(|y| (i, y)))
        {
            return Err(parse_err(
                &labels_path,
                i + 1,
                format!("label id {y} >= num_classes {}", meta.num_classes),
            ));
        }
        meta.num_classes
    } else {
        max_label.map_or(1, |m| m + 1)
    };
    let raw_edges = parse_edges(&edges_path, n)?;
    let edge_records = raw_edges.len();
    let graph = Graph::new(n, raw_edges, features, labels, num_classes)?;

    let split_dir = dir.join("splits");
    let (splits, generated_splits) = if split_dir.is_dir() {
        let files = split_files(&split_dir)?;
        if files.is_empty() {
            return Err(Error::MissingFile(split_dir.join("split_0.json")));
        }
        let mut splits = Vec::with_capacity(files.len());
        for (k, path) in files {
            let mut s: SplitSet = serde_json::from_str(&read(&path)?)
                .map_err(|e| parse_err(&path, e.line(), e.to_string()))?;
            s.split_id = k;
            s.validate(&graph)?;
            splits.push(s);
        }
        (splits, false)
    } else {
        (random_splits(&graph, DEFAULT_SPLIT_COUNT, 0)?, true)
    };
    Ok(Dataset {
        graph,
        splits,
        edge_records,
        generated_splits,
    })
}

/// Writes a graph and its splits in the directory format read by [`load_dataset`].
pub fn write_dataset(dir: impl AsRef<Path>, g: &Graph, splits: &[SplitSet]) -> Result<()> {
    let dir = dir.as_ref();
    let split_dir = dir.join("splits");
    fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
    let write =
        |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| Error::io(&path, e));

    let mut edges = String::new();
    for (u, v) in g.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write(dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    for row in g.features().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        feats.push_str(&cells.join("\t"));
        feats.push('\n');
    }
    write(dir.join("features.tsv"), feats)?;

    let mut labels = String::new();
    for y in g.labels() {
        match y {
            Some(y) => labels.push_str(&format!("{y}\n")),
            None => labels.push_str("-1\n"),
        }
    }
    write(dir.join("labels.tsv"), labels)?;
    write(
        dir.join("meta.json"),
        serde_json::to_string(&Meta {
            num_classes: g.num_classes(),
        })?,
    )?;
    for s in splits {
        write(
            split_dir.join(format!("split_{}.json", s.split_id)),
            serde_json::to_string(s)?,
        )?;
    }
    Ok(())
}
