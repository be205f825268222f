//! Dataset ingestion and embedding files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: node id {id} out of range for {n} nodes")]
    OutOfRange { path: PathBuf, line: usize, id: usize, n: usize },
    #[error("{path}: no label for node {node}")]
    MissingLabel { path: PathBuf, node: usize },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

pub type IoResult<T> = Result<T, IoError>;

/// What `load_graph` discarded or inferred.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edges: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    /// Class names in id order when labels were not integers.
    pub label_names: Option<Vec<String>>,
}

fn read(path: &Path) -> IoResult<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, contents: &str) -> IoResult<()> {
    std::fs::write(path, contents).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty lines that are not `#` or `%` comments, with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with('%'))
}

/// Whitespace-separated `u v` pairs.
pub fn parse_edges(text: &str, path: &Path) -> IoResult<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: format!("expected two node ids, got {l:?}"),
            });
        };
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| IoError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: format!("invalid node id {s:?}"),
            })
        };
        out.push((line, parse(a)?, parse(b)?));
    }
    Ok(out)
}

/// Comma-separated numeric rows; a first row that does not parse is a header.
pub fn parse_features(text: &str, path: &Path) -> IoResult<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, (line, l)) in content_lines(text).enumerate() {
        let parsed: Result<Vec<f64>, _> = l.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) if r.iter().all(|v| v.is_finite()) => {
                if let Some(first) = rows.first() {
                    if first.len() != r.len() {
                        return Err(IoError::Malformed {
                            path: path.to_path_buf(),
                            line,
                            msg: format!("row has {} values, expected {}", r.len(), first.len()),
                        });
                    }
                }
                rows.push(r)
            }
            Err(_) if k == 0 => continue,
            _ => {
                return Err(IoError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    msg: "feature row is not a list of finite numbers".into(),
                })
            }
        }
    }
    Ok(rows)
}

/// Parsed label rows `(line, node, class)` and the class names when labels were strings.
pub type LabelRows = (Vec<(usize, usize, String)>, Option<Vec<String>>);

/// `id,label` rows, with an optional header. Integer labels are used as class
/// ids; anything else is mapped to ids in sorted name order.
pub fn parse_labels(text: &str, path: &Path) -> IoResult<LabelRows> {
    let mut raw = Vec::new();
    for (k, (line, l)) in content_lines(text).enumerate() {
        let Some((id, label)) = l.split_once(',') else {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: "expected id,label".into(),
            });
        };
        let (id, label) = (id.trim(), label.trim());
        match id.parse::<usize>() {
            Ok(id) if !label.is_empty() => raw.push((line, id, label.to_string())),
            Err(_) if k == 0 => continue,
            _ => {
                return Err(IoError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("invalid label row {l:?}"),
                })
            }
        }
    }
    if raw.iter().all(|(_, _, s)| s.parse::<usize>().is_ok()) {
        return Ok((raw, None));
    }
    let names: Vec<String> = raw
        .iter()
        .map(|(_, _, s)| s.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows = raw
        .into_iter()
        .map(|(line, id, s)| {
            let c = names.binary_search(&s).expect("name present");
            (line, id, c.to_string())
        })
        .collect();
    Ok((rows, Some(names)))
}

/// Loads an undirected graph. Node ids are taken literally; the node count is
/// the feature row count when features are given, else one past the largest
/// id in the edge and label files.
pub fn load_graph(edges: &Path, features: Option<&Path>, labels: Option<&Path>) -> IoResult<(Graph, LoadReport)> {
    let edge_rows = parse_edges(&read(edges)?, edges)?;
    let feats = match features {
        Some(p) => Some((p, parse_features(&read(p)?, p)?)),
        None => None,
    };
    let labs = match labels {
        Some(p) => Some((p, parse_labels(&read(p)?, p)?)),
        None => None,
    };
    let n = match &feats {
        Some((_, rows)) => rows.len(),
        None => {
            let e = edge_rows.iter().map(|&(_, u, v)| u.max(v) + 1).max().unwrap_or(0);
            let l = labs
                .as_ref()
                .map_or(0, |(_, (rows, _))| rows.iter().map(|r| r.1 + 1).max().unwrap_or(0));
            e.max(l)
        }
    };
    if n == 0 {
        return Err(GraphError::Empty.into());
    }
    for &(line, u, v) in &edge_rows {
        for id in [u, v] {
            if id >= n {
                return Err(IoError::OutOfRange {
                    path: edges.to_path_buf(),
                    line,
                    id,
                    n,
                });
            }
        }
    }
    let pairs: Vec<(usize, usize)> = edge_rows.iter().map(|&(_, u, v)| (u, v)).collect();
    let (mut graph, stats) = Graph::build(n, &pairs)?;
    if let Some((_, rows)) = feats {
        graph = graph.with_features(rows)?;
    }
    let mut label_names = None;
    if let Some((p, (rows, names))) = labs {
        let mut out: Vec<Option<usize>> = vec![None; n];
        for (line, id, class) in rows {
            if id >= n {
                return Err(IoError::OutOfRange {
                    path: p.to_path_buf(),
                    line,
                    id,
                    n,
                });
            }
            out[id] = Some(class.parse().expect("class ids are integers"));
        }
        let labels = out
            .into_iter()
            .enumerate()
            .map(|(node, c)| {
                c.ok_or_else(|| IoError::MissingLabel {
                    path: p.to_path_buf(),
                    node,
                })
            })
            .collect::<IoResult<Vec<_>>>()?;
        graph = graph.with_labels(labels)?;
        label_names = names;
    }
    let report = LoadReport {
        nodes: n,
        edges: graph.n_edges(),
        self_loops: stats.self_loops,
        duplicates: stats.duplicates,
        label_names,
    };
    Ok((graph, report))
}

/// `u v` lines for a graph's edges.
pub fn edges_to_string(graph: &Graph) -> String {
    let mut s = String::new();
    for &(u, v) in graph.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

/// Shortest representation that parses back to the same `f64`, which never
/// needs more than 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// CSV with header `node_id,c0,…,c{d-1}`.
pub fn embeddings_to_csv(points: &[Vec<f64>]) -> String {
    let d = points.first().map_or(0, |p| p.len());
    let mut s = String::from("node_id");
    for k in 0..d {
        let _ = write!(s, ",c{k}");
    }
    s.push('\n');
    for (i, p) in points.iter().enumerate() {
        let _ = write!(s, "{i}");
        for &x in p {
            s.push(',');
            s.push_str(&fmt_f64(x));
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`embeddings_to_csv`]; rows must list nodes `0, 1, …` in order.
pub fn embeddings_from_csv(text: &str, path: &Path) -> IoResult<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    let malformed = |line: usize, msg: String| IoError::Malformed {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"node_id") || cols[1..].iter().enumerate().any(|(k, c)| *c != format!("c{k}")) {
        return Err(malformed(1, format!("unexpected header {header:?}")));
    }
    let d = cols.len() - 1;
    let mut out = Vec::new();
    for (i, l) in lines {
        if l.is_empty() {
            continue;
        }
        let mut it = l.split(',');
        let id = it.next().and_then(|s| s.parse::<usize>().ok());
        if id != Some(out.len()) {
            return Err(malformed(i + 1, format!("expected node id {}", out.len())));
        }
        let row: Vec<f64> = it
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(i + 1, e.to_string()))?;
        if row.len() != d {
            return Err(malformed(i + 1, format!("{} coordinates, expected {d}", row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, points: &[Vec<f64>]) -> IoResult<()> {
    write(path, &embeddings_to_csv(points))
}

pub fn read_embeddings(path: &Path) -> IoResult<Vec<Vec<f64>>> {
    embeddings_from_csv(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn edge_parsing() {
        assert_eq!(parse_edges("0 1\n1 2", p()).unwrap(), vec![(1, 0, 1), (2, 1, 2)]);
        assert_eq!(parse_edges("# c\n\n3\t4\n", p()).unwrap(), vec![(3, 3, 4)]);
        assert!(matches!(parse_edges("0 1 2", p()), Err(IoError::Malformed { line: 1, .. })));
        assert!(matches!(parse_edges("0 x", p()), Err(IoError::Malformed { .. })));
        assert!(matches!(parse_edges("0 -1", p()), Err(IoError::Malformed { .. })));
    }

    #[test]
    fn labels_by_name_are_sorted() {
        let (rows, names) = parse_labels("id,label\n0,b\n1,a\n2,b\n", p()).unwrap();
        assert_eq!(names.unwrap(), vec!["a", "b"]);
        assert_eq!(rows.iter().map(|r| r.2.as_str()).collect::<Vec<_>>(), vec!["1", "0", "1"]);
        let (_, names) = parse_labels("0,3\n1,0\n", p()).unwrap();
        assert!(names.is_none());
    }

    #[test]
    fn feature_header_is_skipped() {
        let rows = parse_features("a,b\n1,2\n3,4.5\n", p()).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.5]]);
        assert!(parse_features("1,2\n3\n", p()).is_err());
        assert!(parse_features("1,2\nx,y\n", p()).is_err());
    }

    #[test]
    fn embeddings_round_trip_bits() {
        let pts = vec![vec![0.1, -1.0 / 3.0, 1e-300], vec![f64::MAX, 5e-324, -0.0]];
        let csv = embeddings_to_csv(&pts);
        assert!(csv.starts_with("node_id,c0,c1,c2\n0,"));
        let back = embeddings_from_csv(&csv, p()).unwrap();
        for (a, b) in pts.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
