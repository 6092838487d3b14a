//! TNTP network files: a `<KEY> value` metadata header closed by
//! `<END OF METADATA>`, then one semicolon-terminated row per link.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseErrorKind as Kind, Result};
use crate::net::{CongestionFn, Network, NodeId, RoadSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct TntpMetadata {
    pub number_of_zones: Option<usize>,
    pub number_of_nodes: usize,
    pub number_of_links: usize,
    pub first_thru_node: usize,
    /// Any other header entries, in file order.
    pub other: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TntpRow {
    pub init_node: NodeId,
    pub term_node: NodeId,
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TntpNetworkFile {
    pub metadata: TntpMetadata,
    pub rows: Vec<TntpRow>,
}

const KEY_ZONES: &str = "NUMBER OF ZONES";
const KEY_NODES: &str = "NUMBER OF NODES";
const KEY_LINKS: &str = "NUMBER OF LINKS";
const KEY_THRU: &str = "FIRST THRU NODE";
const KEY_END: &str = "END OF METADATA";

fn number<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, Kind::NonNumeric, format!("{what} {field:?}")))
}

pub fn parse_tntp(text: &str) -> Result<TntpNetworkFile> {
    let mut zones = None;
    let mut nodes = None;
    let mut links = None;
    let mut thru = None;
    let mut other = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let n_lines = text.lines().count();

    let mut end_line = None;
    for (no, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let Some(rest) = line.strip_prefix('<') else {
            return Err(Error::parse(no, Kind::MissingEndOfMetadata, "link data before <END OF METADATA>"));
        };
        let (key, value) = rest
            .split_once('>')
            .ok_or_else(|| Error::parse(no, Kind::BadMetadata, format!("unterminated key in {line:?}")))?;
        let key = key.trim().to_ascii_uppercase();
        let value = value.trim();
        let count = |what: &str| number::<usize>(no, value, what);
        match key.as_str() {
            KEY_END => {
                end_line = Some(no);
                break;
            }
            KEY_ZONES => zones = Some(count("zone count")?),
            KEY_NODES => nodes = Some(count("node count")?),
            KEY_LINKS => links = Some(count("link count")?),
            KEY_THRU => thru = Some(count("first thru node")?),
            _ => other.push((key, value.to_string())),
        }
    }
    let end_line = end_line.ok_or_else(|| {
        Error::parse(n_lines + 1, Kind::MissingEndOfMetadata, "file ends inside the header")
    })?;
    let missing = |key: &str| Error::parse(end_line, Kind::MissingMetadata, format!("<{key}>"));
    let metadata = TntpMetadata {
        number_of_zones: zones,
        number_of_nodes: nodes.ok_or_else(|| missing(KEY_NODES))?,
        number_of_links: links.ok_or_else(|| missing(KEY_LINKS))?,
        first_thru_node: thru.ok_or_else(|| missing(KEY_THRU))?,
        other,
    };

    let mut rows = Vec::with_capacity(metadata.number_of_links);
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let Some((data, _comment)) = line.split_once(';') else {
            return Err(Error::parse(no, Kind::MalformedRow, "row is not terminated by ';'"));
        };
        let fields: Vec<&str> = data.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::parse(
                no,
                Kind::MalformedRow,
                format!("expected 10 fields, found {}", fields.len()),
            ));
        }
        let row = TntpRow {
            init_node: number(no, fields[0], "init_node")?,
            term_node: number(no, fields[1], "term_node")?,
            capacity: number(no, fields[2], "capacity")?,
            length: number(no, fields[3], "length")?,
            free_flow_time: number(no, fields[4], "free_flow_time")?,
            b: number(no, fields[5], "b")?,
            power: number(no, fields[6], "power")?,
            speed: number(no, fields[7], "speed")?,
            toll: number(no, fields[8], "toll")?,
            link_type: number(no, fields[9], "link_type")?,
        };
        for node in [row.init_node, row.term_node] {
            if node < 1 || node as usize > metadata.number_of_nodes {
                return Err(Error::parse(
                    no,
                    Kind::NodeOutOfRange,
                    format!("node {node} outside 1..={}", metadata.number_of_nodes),
                ));
            }
        }
        rows.push(row);
    }
    if rows.len() != metadata.number_of_links {
        return Err(Error::parse(
            n_lines + 1,
            Kind::RowCountMismatch,
            format!("header declares {} links, found {}", metadata.number_of_links, rows.len()),
        ));
    }
    Ok(TntpNetworkFile { metadata, rows })
}

pub fn read_tntp(path: &Path) -> Result<TntpNetworkFile> {
    parse_tntp(&std::fs::read_to_string(path)?)
}

/// Writes a file that [`parse_tntp`] reads back to the same value.
pub fn serialize_tntp(file: &TntpNetworkFile) -> String {
    let m = &file.metadata;
    let mut out = String::new();
    if let Some(z) = m.number_of_zones {
        let _ = writeln!(out, "<{KEY_ZONES}> {z}");
    }
    let _ = writeln!(out, "<{KEY_NODES}> {}", m.number_of_nodes);
    let _ = writeln!(out, "<{KEY_THRU}> {}", m.first_thru_node);
    let _ = writeln!(out, "<{KEY_LINKS}> {}", m.number_of_links);
    for (k, v) in &m.other {
        let _ = writeln!(out, "<{k}> {v}");
    }
    let _ = writeln!(out, "<{KEY_END}>");
    out.push('\n');
    out.push_str("~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;\n");
    for r in &file.rows {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
            r.init_node,
            r.term_node,
            r.capacity,
            r.length,
            r.free_flow_time,
            r.b,
            r.power,
            r.speed,
            r.toll,
            r.link_type
        );
    }
    out
}

impl TntpNetworkFile {
    /// Road links with BPR costs: `t0` is the free-flow time, `alpha = b`,
    /// `beta = power`, and the capacity becomes a share of `n0` vehicles.
    pub fn road_specs(&self, n0: f64) -> Vec<RoadSpec> {
        self.rows
            .iter()
            .map(|r| {
                RoadSpec::new(
                    r.init_node,
                    r.term_node,
                    CongestionFn::bpr(r.free_flow_time, r.b, r.power, r.capacity / n0),
                )
                .labeled(format!("{}-{}", r.init_node, r.term_node))
            })
            .collect()
    }

    pub fn to_network(&self, n0: f64) -> Result<Network> {
        Network::from_roads(self.road_specs(n0))
    }
}
