//! Whitespace-separated edge lists: `u v [attr ...]` per line, `#` starts a
//! comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::snapshots::{read_text, with_path};

/// Parses an edge list. The node count is one more than the largest index
/// unless `n_nodes` is given, in which case it must cover every index.
pub fn parse_edge_list(text: &str, n_nodes: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut attrs: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut max_node = None::<usize>;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        let Some(first) = fields.next() else { continue };
        let parse_node = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                path: None,
                line: Some(line),
                message: format!("`{s}` is not a node index"),
            })
        };
        let u = parse_node(first)?;
        let v = match fields.next() {
            Some(s) => parse_node(s)?,
            None => {
                return Err(Error::Parse {
                    path: None,
                    line: Some(line),
                    message: "expected two node indices".into(),
                })
            }
        };
        if u == v {
            return Err(Error::SelfLoop { node: u, line });
        }
        let row = fields
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    path: None,
                    line: Some(line),
                    message: format!("`{s}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: None,
                    line: Some(line),
                    message: format!("{} attribute columns, earlier lines have {w}", row.len()),
                })
            }
            Some(_) => {}
        }
        max_node = max_node.max(Some(u.max(v)));
        edges.push((u, v));
        attrs.push(row);
    }
    let Some(max_node) = max_node else {
        return Err(Error::Parse {
            path: None,
            line: None,
            message: "edge list contains no edges".into(),
        });
    };
    let n = match n_nodes {
        Some(n) if n <= max_node => {
            return Err(Error::invalid(
                "n_nodes",
                format!("{n} nodes but the edge list references node {max_node}"),
            ))
        }
        Some(n) => n,
        None => max_node + 1,
    };
    let attrs = (width.unwrap_or(0) > 0).then_some(attrs);
    Graph::with_attrs(n, &edges, attrs)
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    parse_edge_list(&read_text(path)?, None).map_err(|e| with_path(e, path))
}

/// Renders `u v [attrs]` lines with `u < v`; attributes are printed in the
/// shortest form that parses back to the same value.
pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (i, &(u, v)) in g.edges().iter().enumerate() {
        let _ = write!(out, "{u} {v}");
        if let Some(a) = g.edge_attrs() {
            for x in &a[i] {
                let _ = write!(out, " {x:?}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_edge_list(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_edge_list(g)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let g = parse_edge_list("0 1\n1 2\n", None).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn self_loop_and_dedup() {
        assert!(matches!(
            parse_edge_list("# header\n0 0\n", None),
            Err(Error::SelfLoop { node: 0, line: 2 })
        ));
        let g = parse_edge_list("1 0\n0 1\n", None).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn attributes_and_comments() {
        let g = parse_edge_list("0 1 0.5 2 # road\n\n  # blank\n2 1 1e-3 -4\n", None).unwrap();
        assert_eq!(g.edge_attrs().unwrap(), &[vec![0.5, 2.0], vec![1e-3, -4.0]]);
        let again = parse_edge_list(&format_edge_list(&g), None).unwrap();
        assert_eq!(again, g);
        assert!(matches!(
            parse_edge_list("0 1 0.5\n1 2\n", None),
            Err(Error::Parse { line: Some(2), .. })
        ));
        assert!(matches!(
            parse_edge_list("0 x\n", None),
            Err(Error::Parse { line: Some(1), .. })
        ));
        assert!(parse_edge_list("# nothing\n", None).is_err());
        assert!(parse_edge_list("0 1\n", Some(1)).is_err());
        assert_eq!(parse_edge_list("0 1\n", Some(4)).unwrap().n_nodes(), 4);
    }
}
