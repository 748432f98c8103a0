//! Graph file formats.
//!
//! Edge list (UTF-8, one-based ids, `#` starts a comment):
//!
//! ```text
//! N 3
//! 1 2 1.0
//! 2 3 0.5 -0.25
//! ```
//!
//! Each edge line is `i j re [im]`. The JSON form is
//! `{"n": 3, "edges": [[1, 2, 1.0, 0.0], [2, 3, 0.5]]}` with an optional
//! `"removed"` list of tombstoned ids.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::WeightedDigraph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeRecord {
    Complex(usize, usize, f64, f64),
    Real(usize, usize, f64),
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    removed: Vec<usize>,
}

fn one_based(id: usize, n: usize, line: usize) -> Result<usize> {
    if id == 0 || id > n {
        return Err(Error::Parse {
            line,
            msg: format!("vertex id {id} outside 1..={n}"),
        });
    }
    Ok(id - 1)
}

pub fn parse_edge_list(text: &str) -> Result<WeightedDigraph> {
    let mut graph: Option<WeightedDigraph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        match graph.as_mut() {
            None => {
                if fields.len() != 2 || fields[0] != "N" {
                    return Err(parse_err("expected header `N <count>`".into()));
                }
                let n: usize = fields[1]
                    .parse()
                    .map_err(|e| parse_err(format!("bad vertex count: {e}")))?;
                graph = Some(WeightedDigraph::new(n));
            }
            Some(g) => {
                if !(3..=4).contains(&fields.len()) {
                    return Err(parse_err("expected `i j re [im]`".into()));
                }
                let n = g.capacity();
                let id = |s: &str| -> Result<usize> {
                    let v: usize = s
                        .parse()
                        .map_err(|e| parse_err(format!("bad vertex id `{s}`: {e}")))?;
                    one_based(v, n, line_no)
                };
                let num = |s: &str| -> Result<f64> {
                    s.parse()
                        .map_err(|e| parse_err(format!("bad number `{s}`: {e}")))
                };
                let i = id(fields[0])?;
                let j = id(fields[1])?;
                let re = num(fields[2])?;
                let im = if fields.len() == 4 {
                    num(fields[3])?
                } else {
                    0.0
                };
                g.add_edge(i, j, Complex64::new(re, im))
                    .map_err(|e| parse_err(e.to_string()))?;
            }
        }
    }
    graph.ok_or(Error::Parse {
        line: 0,
        msg: "missing header `N <count>`".into(),
    })
}

/// Edge-list text. Graphs with tombstones must be compacted first.
pub fn to_edge_list(graph: &WeightedDigraph) -> Result<String> {
    if graph.has_tombstones() {
        return Err(Error::invalid(
            "edge list cannot represent removed vertices; compact the graph or use JSON",
        ));
    }
    let mut out = format!("N {}\n", graph.capacity());
    for (i, j, w) in graph.edges() {
        if w.im == 0.0 {
            writeln!(out, "{} {} {:?}", i + 1, j + 1, w.re).unwrap();
        } else {
            writeln!(out, "{} {} {:?} {:?}", i + 1, j + 1, w.re, w.im).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_json(text: &str) -> Result<WeightedDigraph> {
    let doc: GraphJson = serde_json::from_str(text)?;
    let mut g = WeightedDigraph::new(doc.n);
    for (k, rec) in doc.edges.iter().enumerate() {
        let (i, j, w) = match *rec {
            EdgeRecord::Complex(i, j, re, im) => (i, j, Complex64::new(re, im)),
            EdgeRecord::Real(i, j, re) => (i, j, Complex64::new(re, 0.0)),
        };
        let i = one_based(i, doc.n, k + 1)?;
        let j = one_based(j, doc.n, k + 1)?;
        g.add_edge(i, j, w)?;
    }
    for &v in &doc.removed {
        g.remove_vertex(one_based(v, doc.n, 0)?)?;
    }
    Ok(g)
}

pub fn to_json(graph: &WeightedDigraph) -> String {
    let doc = GraphJson {
        n: graph.capacity(),
        edges: graph
            .edges()
            .map(|(i, j, w)| EdgeRecord::Complex(i + 1, j + 1, w.re, w.im))
            .collect(),
        removed: (0..graph.capacity())
            .filter(|&v| !graph.is_alive(v))
            .map(|v| v + 1)
            .collect(),
    };
    serde_json::to_string(&doc).expect("graph serialization cannot fail")
}

/// Parses either format; JSON is recognised by a leading `{`.
pub fn parse_graph(text: &str) -> Result<WeightedDigraph> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_edge_list(text)
    }
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<WeightedDigraph> {
    parse_graph(&std::fs::read_to_string(path)?)
}

/// Writes JSON when the extension is `.json`, otherwise an edge list.
pub fn write_graph(path: impl AsRef<Path>, graph: &WeightedDigraph) -> Result<()> {
    let path = path.as_ref();
    let text = if path.extension().is_some_and(|e| e == "json") {
        to_json(graph)
    } else {
        to_edge_list(graph)?
    };
    std::fs::write(path, text)?;
    Ok(())
}
