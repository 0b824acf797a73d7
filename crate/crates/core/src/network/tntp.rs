//! Reader for the TNTP tabular network format (`*_net.tntp` / `*_node.tntp`).
//!
//! Link files start with `<KEY> value` metadata lines terminated by
//! `<END OF METADATA>`, followed by a `~`-prefixed column header and one
//! whitespace-separated row per directed link, optionally ending in `;`.
//! Node files have a header line (`Node X Y ;`) and one row per node.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_road_network, euclidean, LinkSpec, NetworkError, Node, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IngestOptions {
    /// Seed for synthetic link values when the link file has no `value` column.
    pub seed: u64,
    /// Use straight-line distances between normalized coordinates as link lengths.
    pub euclidean_lengths: bool,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated fields of a data row with their 1-based columns; a
/// trailing `;` terminator is dropped.
fn fields(raw: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in raw.char_indices() {
        if ch.is_whitespace() || ch == ';' {
            if let Some(s) = start.take() {
                out.push((s + 1, &raw[s..i]));
            }
            if ch == ';' {
                break;
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &raw[s..]));
    }
    out
}

fn number<T: std::str::FromStr>(line: usize, (col, s): (usize, &str)) -> Result<T, NetworkError> {
    s.parse()
        .map_err(|_| parse_err(line, col, format!("expected a number, found {s:?}")))
}

struct Metadata {
    entries: HashMap<String, String>,
    body_start: usize,
}

fn read_metadata(lines: &[&str]) -> Result<Metadata, NetworkError> {
    let mut entries = HashMap::new();
    let starts_with_meta = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('<'));
    if !starts_with_meta {
        return Ok(Metadata { entries, body_start: 0 });
    }
    for (idx, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if !line.starts_with('<') {
            return Err(parse_err(idx + 1, 1, "expected <END OF METADATA> before data rows"));
        }
        let close = line
            .find('>')
            .ok_or_else(|| parse_err(idx + 1, line.len() + 1, "unterminated metadata tag"))?;
        let key = line[1..close].trim().to_ascii_uppercase();
        if key == "END OF METADATA" {
            return Ok(Metadata {
                entries,
                body_start: idx + 1,
            });
        }
        entries.insert(key, line[close + 1..].trim().to_string());
    }
    Err(parse_err(lines.len(), 1, "missing <END OF METADATA>"))
}

fn declared_count(meta: &Metadata, key: &str) -> Result<Option<usize>, NetworkError> {
    match meta.entries.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| parse_err(0, 1, format!("<{key}> is not an integer: {v:?}"))),
    }
}

struct RawNode {
    id: u32,
    x: f64,
    y: f64,
}

fn parse_nodes(text: &str) -> Result<Vec<RawNode>, NetworkError> {
    let lines: Vec<&str> = text.lines().collect();
    let meta = read_metadata(&lines)?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in lines.iter().enumerate().skip(meta.body_start) {
        let lineno = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('~') {
            continue;
        }
        let f = fields(raw);
        if !header_seen {
            header_seen = true;
            if f.first().is_some_and(|(_, s)| s.parse::<f64>().is_err()) {
                let names: Vec<String> = f.iter().map(|(_, s)| s.to_ascii_lowercase()).collect();
                if names.len() < 3 || names[0] != "node" || names[1] != "x" || names[2] != "y" {
                    return Err(parse_err(lineno, 1, "node header must read `Node X Y`"));
                }
                continue;
            }
        }
        if f.len() < 3 {
            let col = f.last().map_or(1, |(c, s)| c + s.len());
            return Err(parse_err(lineno, col, "node row needs id, x and y"));
        }
        out.push(RawNode {
            id: number(lineno, f[0])?,
            x: number(lineno, f[1])?,
            y: number(lineno, f[2])?,
        });
    }
    if let Some(n) = declared_count(&meta, "NUMBER OF NODES")? {
        if n != out.len() {
            return Err(parse_err(0, 1, format!("declared {n} nodes, found {}", out.len())));
        }
    }
    Ok(out)
}

struct RawArc {
    from: u32,
    to: u32,
    length: f64,
    value: Option<f64>,
}

fn parse_links(text: &str) -> Result<(Vec<RawArc>, Option<usize>), NetworkError> {
    let lines: Vec<&str> = text.lines().collect();
    let meta = read_metadata(&lines)?;
    let mut length_col = 3;
    let mut value_col = None;
    let mut out = Vec::new();
    for (idx, raw) in lines.iter().enumerate().skip(meta.body_start) {
        let lineno = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('~') {
            // Column names are tab-separated and may contain spaces.
            let names: Vec<String> = header
                .split(['\t', ';'])
                .map(|s| s.trim().to_ascii_lowercase())
                .filter(|s| !s.is_empty())
                .collect();
            if let Some(i) = names.iter().position(|n| n == "length") {
                length_col = i;
            }
            value_col = names.iter().position(|n| n == "value" || n == "information value");
            continue;
        }
        let f = fields(raw);
        let needed = length_col.max(value_col.unwrap_or(0)) + 1;
        if f.len() < needed.max(2) {
            let col = f.last().map_or(1, |(c, s)| c + s.len());
            return Err(parse_err(
                lineno,
                col,
                format!("link row needs at least {needed} columns"),
            ));
        }
        out.push(RawArc {
            from: number(lineno, f[0])?,
            to: number(lineno, f[1])?,
            length: number(lineno, f[length_col])?,
            value: value_col.map(|c| number(lineno, f[c])).transpose()?,
        });
    }
    if let Some(n) = declared_count(&meta, "NUMBER OF LINKS")? {
        if n != out.len() {
            return Err(parse_err(0, 1, format!("declared {n} links, found {}", out.len())));
        }
    }
    let declared_nodes = declared_count(&meta, "NUMBER OF NODES")?;
    Ok((out, declared_nodes))
}

/// Reads a TNTP node/link pair into a normalized [`RoadNetwork`].
///
/// Coordinates are min-max normalized with one shared scale so the aspect
/// ratio is kept; link lengths are divided by the same scale. Reverse arcs
/// (j, i) of an already-seen (i, j) collapse into the first occurrence.
pub fn ingest_tntp(node_text: &str, link_text: &str, opts: IngestOptions) -> Result<RoadNetwork, NetworkError> {
    let raw_nodes = parse_nodes(node_text)?;
    let (arcs, declared_nodes) = parse_links(link_text)?;
    if let Some(n) = declared_nodes {
        if n != raw_nodes.len() {
            return Err(parse_err(
                0,
                1,
                format!("link file declares {n} nodes, node file has {}", raw_nodes.len()),
            ));
        }
    }
    if raw_nodes.is_empty() {
        return Err(NetworkError::Empty);
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for n in &raw_nodes {
        if !(n.x.is_finite() && n.y.is_finite()) {
            return Err(parse_err(0, 1, format!("node {} has non-finite coordinates", n.id)));
        }
        xmin = xmin.min(n.x);
        xmax = xmax.max(n.x);
        ymin = ymin.min(n.y);
        ymax = ymax.max(n.y);
    }
    let scale = (xmax - xmin).max(ymax - ymin);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let nodes: Vec<Node> = raw_nodes
        .iter()
        .map(|n| Node {
            id: n.id,
            x: ((n.x - xmin) / scale).clamp(0.0, 1.0),
            y: ((n.y - ymin) / scale).clamp(0.0, 1.0),
        })
        .collect();
    let coord: HashMap<u32, (f64, f64)> = nodes.iter().map(|n| (n.id, (n.x, n.y))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seen = HashMap::new();
    let mut links = Vec::new();
    for arc in arcs {
        let key = (arc.from.min(arc.to), arc.from.max(arc.to));
        if seen.contains_key(&key) {
            continue;
        }
        seen.insert(key, ());
        let length = if opts.euclidean_lengths {
            let a = coord.get(&arc.from).ok_or(NetworkError::UnknownNode(arc.from as u64))?;
            let b = coord.get(&arc.to).ok_or(NetworkError::UnknownNode(arc.to as u64))?;
            euclidean(*a, *b)
        } else {
            arc.length / scale
        };
        let value = match arc.value {
            Some(v) => v,
            None => rng.gen_range(0.1..=1.0),
        };
        links.push(LinkSpec {
            from: arc.from,
            to: arc.to,
            length,
            value,
        });
    }
    build_road_network(nodes, links)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: &str = "Node\tX\tY\t;\n1\t0\t0\t;\n2\t200\t0\t;\n";
    const LINKS: &str = "<NUMBER OF ZONES> 0\n<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n\n\
~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \t;\n\t1\t2\t9000\t100\t1.0\t;\n";

    #[test]
    fn minimal_two_node_file() {
        let net = ingest_tntp(NODES, LINKS, IngestOptions::default()).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.link_count(), 1);
        assert_eq!(net.nodes()[1].x, 1.0);
        assert_eq!(net.links()[0].length, 0.5);
        let v = net.links()[0].value;
        assert!((0.1..=1.0).contains(&v));
    }

    #[test]
    fn reverse_arcs_collapse() {
        let links = LINKS.replace("<NUMBER OF LINKS> 1", "<NUMBER OF LINKS> 2") + "\t2\t1\t9000\t100\t1.0\t;\n";
        let net = ingest_tntp(NODES, &links, IngestOptions::default()).unwrap();
        assert_eq!(net.link_count(), 1);
    }

    #[test]
    fn value_column_is_used_when_present() {
        let links = "<END OF METADATA>\n~ init\tterm\tcapacity\tlength\tvalue\t;\n1\t2\t1\t100\t0.42\t;\n";
        let net = ingest_tntp(NODES, links, IngestOptions::default()).unwrap();
        assert_eq!(net.links()[0].value, 0.42);
    }

    #[test]
    fn malformed_header_is_rejected() {
        let bad = "<NUMBER OF NODES 2\n<END OF METADATA>\n";
        assert!(matches!(
            ingest_tntp(NODES, bad, IngestOptions::default()),
            Err(NetworkError::Parse { line: 1, .. })
        ));
        let missing_end = "<NUMBER OF NODES> 2\n1 2 3 4 ;\n";
        assert!(matches!(
            ingest_tntp(NODES, missing_end, IngestOptions::default()),
            Err(NetworkError::Parse { line: 2, .. })
        ));
        let bad_nodes = "Vertex\tLat\tLon\n1\t0\t0\n";
        assert!(matches!(
            ingest_tntp(bad_nodes, LINKS, IngestOptions::default()),
            Err(NetworkError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn bad_number_reports_column() {
        let links = "<END OF METADATA>\n~ a\tb\tc\tlength\t;\n1\t2\t9000\tabc\t;\n";
        match ingest_tntp(NODES, links, IngestOptions::default()) {
            Err(NetworkError::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnected_input() {
        let nodes = "Node X Y ;\n1 0 0 ;\n2 1 0 ;\n3 0 1 ;\n";
        let links = "<END OF METADATA>\n~ a\tb\tc\tlength\t;\n1 2 0 1 ;\n";
        assert!(matches!(
            ingest_tntp(nodes, links, IngestOptions::default()),
            Err(NetworkError::DisconnectedGraph { .. })
        ));
    }

    #[test]
    fn declared_link_count_mismatch() {
        let links = LINKS.replace("<NUMBER OF LINKS> 1", "<NUMBER OF LINKS> 3");
        assert!(matches!(
            ingest_tntp(NODES, &links, IngestOptions::default()),
            Err(NetworkError::Parse { .. })
        ));
    }
}
