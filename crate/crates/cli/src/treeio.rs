//! Tree files: TSV edge lists (canonical), JSON, DOT and GraphML.
//!
//! Labels and types are 1-based in every format. A TSV row is
//! `child parent child_type edge`, where `edge` is `parent` for a
//! parent-child edge and `rootedge` for the non-parental edge joining two
//! roots. Header comments carry `n`, `types`, `roots` and `root_types`, so
//! roots without a parent keep their type.

use std::fmt::Write as _;

use cmrt::gen::Model;
use cmrt::tree::RecursiveTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("{0}")]
    File(String),
}

fn row_err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Row { line, msg: msg.into() }
}

/// Provenance written into headers; readers ignore it.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub model: Option<Model>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Tsv,
    Dot,
    Graphml,
    Json,
}

pub fn write_tree(tree: &RecursiveTree, prov: &Provenance, format: Format) -> String {
    match format {
        Format::Tsv => to_tsv(tree, prov),
        Format::Json => to_json(tree, prov),
        Format::Dot => to_dot(tree),
        Format::Graphml => to_graphml(tree),
    }
}

/// Reads any format written by [`write_tree`], sniffing it from the content.
pub fn read_tree(text: &str) -> Result<RecursiveTree, ParseError> {
    let head = text.trim_start();
    if head.starts_with('{') {
        from_json(text)
    } else if head.starts_with("<?xml") || head.starts_with("<graphml") {
        from_graphml(text)
    } else if head.starts_with("digraph") {
        from_dot(text)
    } else {
        from_tsv(text)
    }
}

struct Edge {
    child: usize,
    parent: usize,
    root_edge: bool,
}

/// Edges in child order; each root edge is listed under its younger end.
fn edges(tree: &RecursiveTree) -> Vec<Edge> {
    let mut out = Vec::with_capacity(tree.len());
    let mut root_edges: Vec<(usize, usize)> =
        tree.root_edges().iter().map(|&(a, b)| (a.max(b) as usize, a.min(b) as usize)).collect();
    root_edges.sort_unstable();
    let mut next = root_edges.iter().peekable();
    for v in 0..tree.len() {
        while let Some(&&(c, p)) = next.peek() {
            if c != v {
                break;
            }
            out.push(Edge { child: c, parent: p, root_edge: true });
            next.next();
        }
        if let Some(p) = tree.parent(v) {
            out.push(Edge { child: v, parent: p, root_edge: false });
        }
    }
    out
}

fn root_types(tree: &RecursiveTree) -> String {
    (0..tree.num_roots()).map(|v| (tree.vtype(v) + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn to_tsv(tree: &RecursiveTree, prov: &Provenance) -> String {
    let mut s = String::from("# cmrt tree\n");
    if let Some(model) = &prov.model {
        let _ = writeln!(s, "# model: {}", serde_json::to_string(model).unwrap_or_default());
    }
    if let Some(seed) = prov.seed {
        let _ = writeln!(s, "# seed: {seed}");
    }
    let _ = writeln!(s, "# n: {}", tree.len());
    let _ = writeln!(s, "# types: {}", tree.num_types());
    let _ = writeln!(s, "# roots: {}", tree.num_roots());
    let _ = writeln!(s, "# root_types: {}", root_types(tree));
    s.push_str("child\tparent\tchild_type\tedge\n");
    for e in edges(tree) {
        let kind = if e.root_edge { "rootedge" } else { "parent" };
        let _ = writeln!(s, "{}\t{}\t{}\t{kind}", e.child + 1, e.parent + 1, tree.vtype(e.child) + 1);
    }
    s
}

/// Accumulates vertices from any row-based format and checks them.
#[derive(Default)]
struct Builder {
    n: Option<usize>,
    types: Option<u16>,
    roots: Option<usize>,
    root_types: Vec<u16>,
    parent: Vec<Option<usize>>,
    vtype: Vec<Option<u16>>,
    root_edges: Vec<(usize, usize)>,
    max_label: usize,
}

impl Builder {
    fn grow(&mut self, label: usize) {
        if label > self.parent.len() {
            self.parent.resize(label, None);
            self.vtype.resize(label, None);
        }
        self.max_label = self.max_label.max(label);
    }

    fn set_type(&mut self, line: usize, label: usize, ty: u16) -> Result<(), ParseError> {
        if ty == 0 {
            return Err(row_err(line, "types are 1-based"));
        }
        self.grow(label);
        match self.vtype[label - 1] {
            Some(old) if old != ty => Err(row_err(line, format!("vertex {label} has type {old} and {ty}"))),
            _ => {
                self.vtype[label - 1] = Some(ty);
                Ok(())
            }
        }
    }

    fn edge(&mut self, line: usize, child: usize, parent: usize, ty: Option<u16>, root_edge: bool) -> Result<(), ParseError> {
        if child == 0 || parent == 0 {
            return Err(row_err(line, "labels are 1-based"));
        }
        if let Some(n) = self.n {
            if child > n || parent > n {
                return Err(row_err(line, format!("label {} exceeds n = {n}", child.max(parent))));
            }
        }
        if root_edge {
            if parent == child {
                return Err(row_err(line, "root edge joins a vertex to itself"));
            }
            self.grow(child.max(parent));
            self.root_edges.push((parent - 1, child - 1));
        } else {
            if parent >= child {
                return Err(row_err(line, format!("parent {parent} is not smaller than child {child}")));
            }
            self.grow(child);
            if self.parent[child - 1].is_some() {
                return Err(row_err(line, format!("vertex {child} has a second parent")));
            }
            self.parent[child - 1] = Some(parent - 1);
        }
        if let Some(ty) = ty {
            self.set_type(line, child, ty)?;
        }
        Ok(())
    }

    fn header(&mut self, line: usize, key: &str, value: &str) -> Result<(), ParseError> {
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| row_err(line, format!("bad {key} value {v:?}")));
        match key {
            "n" => self.n = Some(num(value)?),
            "types" => self.types = Some(num(value)? as u16),
            "roots" => self.roots = Some(num(value)?),
            "root_types" => {
                self.root_types = value
                    .split_whitespace()
                    .map(|t| t.parse::<u16>().map_err(|_| row_err(line, format!("bad root type {t:?}"))))
                    .collect::<Result<_, _>>()?;
            }
            _ => {}
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RecursiveTree, ParseError> {
        let n = self.n.unwrap_or(self.max_label.max(1));
        if self.max_label > n {
            return Err(ParseError::File(format!("label {} exceeds n = {n}", self.max_label)));
        }
        self.grow(n);
        for (v, &ty) in self.root_types.clone().iter().enumerate() {
            if v >= n {
                return Err(ParseError::File(format!("root_types lists {} roots but n = {n}", self.root_types.len())));
            }
            self.set_type(0, v + 1, ty).map_err(|e| ParseError::File(format!("root_types: {e}")))?;
        }
        let roots = match self.roots {
            Some(r) => r,
            None => self.parent.iter().take_while(|p| p.is_none()).count(),
        };
        let vtype: Vec<u16> = self.vtype.iter().map(|t| t.unwrap_or(1) - 1).collect();
        let seen = vtype.iter().copied().max().unwrap_or(0) + 1;
        let types = self.types.unwrap_or(seen);
        RecursiveTree::from_parts(self.parent, vtype, types, roots, self.root_edges).map_err(|e| ParseError::File(relabel(&e.to_string())))
    }
}

/// Error messages from the core count vertices from 0.
fn relabel(msg: &str) -> String {
    format!("{msg} (0-based vertex indices)")
}

fn from_tsv(text: &str) -> Result<RecursiveTree, ParseError> {
    let mut b = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        if let Some(comment) = row.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                b.header(line, key.trim(), value)?;
            }
            continue;
        }
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.first() == Some(&"child") {
            continue;
        }
        if !(3..=4).contains(&fields.len()) {
            return Err(row_err(line, format!("expected 3 or 4 columns, found {}", fields.len())));
        }
        let label = |s: &str, what: &str| s.parse::<usize>().map_err(|_| row_err(line, format!("bad {what} {s:?}")));
        let child = label(fields[0], "child")?;
        let parent = label(fields[1], "parent")?;
        let ty = fields[2].parse::<u16>().map_err(|_| row_err(line, format!("bad child_type {:?}", fields[2])))?;
        let root_edge = match fields.get(3).copied().unwrap_or("parent") {
            "parent" => false,
            "rootedge" => true,
            other => return Err(row_err(line, format!("edge must be parent or rootedge, found {other:?}"))),
        };
        b.edge(line, child, parent, Some(ty), root_edge)?;
    }
    b.finish()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    n: usize,
    types: u16,
    roots: usize,
    /// `parent[v - 1]` for label `v`; `null` for parentless roots.
    parent: Vec<Option<usize>>,
    #[serde(rename = "type")]
    vtype: Vec<u16>,
    root_edges: Vec<[usize; 2]>,
}

fn to_json(tree: &RecursiveTree, prov: &Provenance) -> String {
    let doc = TreeJson {
        model: prov.model.clone(),
        seed: prov.seed,
        n: tree.len(),
        types: tree.num_types() as u16,
        roots: tree.num_roots(),
        parent: (0..tree.len()).map(|v| tree.parent(v).map(|u| u + 1)).collect(),
        vtype: tree.types().iter().map(|&t| t + 1).collect(),
        root_edges: tree.root_edges().iter().map(|&(a, b)| [a as usize + 1, b as usize + 1]).collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("tree json");
    s.push('\n');
    s
}

fn from_json(text: &str) -> Result<RecursiveTree, ParseError> {
    let doc: TreeJson = serde_json::from_str(text).map_err(|e| ParseError::File(format!("tree json: {e}")))?;
    if doc.parent.len() != doc.n || doc.vtype.len() != doc.n {
        return Err(ParseError::File(format!("tree json: n = {} but {} parents and {} types", doc.n, doc.parent.len(), doc.vtype.len())));
    }
    let mut b = Builder { n: Some(doc.n), types: Some(doc.types), roots: Some(doc.roots), ..Builder::default() };
    for (v, (&parent, &ty)) in doc.parent.iter().zip(&doc.vtype).enumerate() {
        let line = v + 1;
        match parent {
            Some(p) => b.edge(line, v + 1, p, Some(ty), false),
            None => b.set_type(line, v + 1, ty),
        }
        .map_err(|e| ParseError::File(format!("tree json vertex {e}")))?;
    }
    for [a, c] in doc.root_edges {
        b.edge(0, c, a, None, true).map_err(|e| ParseError::File(format!("tree json root edge: {e}")))?;
    }
    b.finish()
}

fn to_dot(tree: &RecursiveTree) -> String {
    let mut s = String::from("digraph cmrt {\n");
    let _ = writeln!(s, "  graph [n={}, types={}, roots={}];", tree.len(), tree.num_types(), tree.num_roots());
    for v in 0..tree.len() {
        let _ = writeln!(s, "  {} [type={}];", v + 1, tree.vtype(v) + 1);
    }
    for e in edges(tree) {
        if e.root_edge {
            let _ = writeln!(s, "  {} -> {} [kind=rootedge, style=dashed, dir=none];", e.parent + 1, e.child + 1);
        } else {
            let _ = writeln!(s, "  {} -> {};", e.parent + 1, e.child + 1);
        }
    }
    s.push_str("}\n");
    s
}

/// `key=value` pairs inside the first `[...]` of a DOT statement.
fn dot_attrs(stmt: &str) -> Vec<(&str, &str)> {
    let Some(open) = stmt.find('[') else { return Vec::new() };
    let close = stmt.rfind(']').unwrap_or(stmt.len());
    stmt[open + 1..close]
        .split(',')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim().trim_matches('"')))
        .collect()
}

fn from_dot(text: &str) -> Result<RecursiveTree, ParseError> {
    let mut b = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stmt = raw.trim().trim_end_matches(';').trim();
        if stmt.is_empty() || stmt.starts_with("digraph") || stmt == "}" || stmt.starts_with("//") {
            continue;
        }
        let attrs = dot_attrs(stmt);
        let get = |key: &str| attrs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let head = stmt.split('[').next().unwrap_or("").trim();
        let num = |s: &str| s.trim().trim_matches('"').parse::<usize>().map_err(|_| row_err(line, format!("bad node id {s:?}")));
        if head == "graph" {
            for (k, v) in &attrs {
                b.header(line, k, v)?;
            }
        } else if let Some((from, to)) = head.split_once("->") {
            let root_edge = get("kind") == Some("rootedge");
            b.edge(line, num(to)?, num(from)?, None, root_edge)?;
        } else {
            let label = num(head)?;
            if label == 0 {
                return Err(row_err(line, "labels are 1-based"));
            }
            b.grow(label);
            if let Some(ty) = get("type") {
                let ty = ty.parse::<u16>().map_err(|_| row_err(line, format!("bad type {ty:?}")))?;
                b.set_type(line, label, ty)?;
            }
        }
    }
    b.finish()
}

fn to_graphml(tree: &RecursiveTree) -> String {
    let mut s = String::from(concat!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
        "  <key id=\"n\" for=\"graph\" attr.name=\"n\" attr.type=\"int\"/>\n",
        "  <key id=\"types\" for=\"graph\" attr.name=\"types\" attr.type=\"int\"/>\n",
        "  <key id=\"roots\" for=\"graph\" attr.name=\"roots\" attr.type=\"int\"/>\n",
        "  <key id=\"type\" for=\"node\" attr.name=\"type\" attr.type=\"int\"/>\n",
        "  <key id=\"kind\" for=\"edge\" attr.name=\"kind\" attr.type=\"string\"/>\n",
        "  <graph id=\"cmrt\" edgedefault=\"directed\">\n",
    ));
    let _ = writeln!(s, "    <data key=\"n\">{}</data>", tree.len());
    let _ = writeln!(s, "    <data key=\"types\">{}</data>", tree.num_types());
    let _ = writeln!(s, "    <data key=\"roots\">{}</data>", tree.num_roots());
    for v in 0..tree.len() {
        let _ = writeln!(s, "    <node id=\"v{}\"><data key=\"type\">{}</data></node>", v + 1, tree.vtype(v) + 1);
    }
    for e in edges(tree) {
        let kind = if e.root_edge { "rootedge" } else { "parent" };
        let _ = writeln!(
            s,
            "    <edge source=\"v{}\" target=\"v{}\"><data key=\"kind\">{kind}</data></edge>",
            e.parent + 1,
            e.child + 1
        );
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

fn xml_attr<'a>(elem: &'a str, name: &str) -> Option<&'a str> {
    let pat = format!("{name}=\"");
    let start = elem.find(&pat)? + pat.len();
    let len = elem[start..].find('"')?;
    Some(&elem[start..start + len])
}

fn xml_data<'a>(elem: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("<data key=\"{key}\">");
    let start = elem.find(&pat)? + pat.len();
    let len = elem[start..].find("</data>")?;
    Some(elem[start..start + len].trim())
}

/// Reads the line-per-element GraphML this module writes.
fn from_graphml(text: &str) -> Result<RecursiveTree, ParseError> {
    let mut b = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let elem = raw.trim();
        let id = |s: Option<&str>| {
            s.and_then(|s| s.strip_prefix('v'))
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| row_err(line, "node ids must look like v<label>"))
        };
        if elem.starts_with("<node") {
            let label = id(xml_attr(elem, "id"))?;
            if label == 0 {
                return Err(row_err(line, "labels are 1-based"));
            }
            b.grow(label);
            if let Some(ty) = xml_data(elem, "type") {
                let ty = ty.parse::<u16>().map_err(|_| row_err(line, format!("bad type {ty:?}")))?;
                b.set_type(line, label, ty)?;
            }
        } else if elem.starts_with("<edge") {
            let parent = id(xml_attr(elem, "source"))?;
            let child = id(xml_attr(elem, "target"))?;
            b.edge(line, child, parent, None, xml_data(elem, "kind") == Some("rootedge"))?;
        } else if elem.starts_with("<data") {
            for key in ["n", "types", "roots"] {
                if let Some(v) = xml_data(elem, key) {
                    b.header(line, key, v)?;
                }
            }
        }
    }
    b.finish()
}
