//! Parsed document values and their canonical text form.

use std::fmt;

/// A leaf value. Quoted input always resolves to `Str`; plain input is
/// resolved to the most specific of null/bool/int/float/string.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

/// A document node: scalar, sequence, or mapping. These three kinds are the
/// whole of the safe data model.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Scalar(Scalar),
    Sequence(Vec<Node>),
    Mapping(Vec<(Scalar, Node)>),
}

impl Node {
    pub fn str(s: impl Into<String>) -> Node {
        Node::Scalar(Scalar::Str(s.into()))
    }

    pub fn int(v: i64) -> Node {
        Node::Scalar(Scalar::Int(v))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Node::Scalar(Scalar::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Node::Scalar(Scalar::Int(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Node::Scalar(Scalar::Float(v)) => Some(*v),
            Node::Scalar(Scalar::Int(v)) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Node::Scalar(Scalar::Bool(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[Node]> {
        match self {
            Node::Sequence(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_mapping(&self) -> Option<&[(Scalar, Node)]> {
        match self {
            Node::Mapping(entries) => Some(entries),
            _ => None,
        }
    }

    /// Looks up a mapping entry by string key.
    pub fn get(&self, key: &str) -> Option<&Node> {
        match self {
            Node::Mapping(entries) => entries.iter().find_map(|(k, v)| match k {
                Scalar::Str(s) if s == key => Some(v),
                _ => None,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&scalar_repr(self))
    }
}

fn plain_safe(s: &str) -> bool {
    if s.is_empty() {
        return false;
    }
    let mut chars = s.chars();
    let first = chars.next().unwrap();
    if !(first.is_ascii_alphabetic() || first == '_' || first == '/') {
        return false;
    }
    if !s
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
    {
        return false;
    }
    // Must not re-resolve to a non-string scalar.
    !matches!(
        crate::parser::resolve_plain(s),
        Scalar::Null | Scalar::Bool(_) | Scalar::Int(_) | Scalar::Float(_)
    )
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn scalar_repr(s: &Scalar) -> String {
    match s {
        Scalar::Null => "null".to_string(),
        Scalar::Bool(true) => "true".to_string(),
        Scalar::Bool(false) => "false".to_string(),
        Scalar::Int(v) => v.to_string(),
        Scalar::Float(v) => format!("{:?}", v),
        Scalar::Str(v) => {
            if plain_safe(v) {
                v.clone()
            } else {
                quote(v)
            }
        }
    }
}

// A sequence renders in flow style only if nothing inside it is a mapping.
fn flow_safe(node: &Node) -> bool {
    match node {
        Node::Scalar(_) => true,
        Node::Sequence(items) => items.iter().all(flow_safe),
        Node::Mapping(_) => false,
    }
}

fn flow_repr(node: &Node) -> String {
    match node {
        Node::Scalar(s) => scalar_repr(s),
        Node::Sequence(items) => {
            let inner: Vec<String> = items.iter().map(flow_repr).collect();
            format!("[{}]", inner.join(", "))
        }
        Node::Mapping(_) => unreachable!("mappings never render in flow style"),
    }
}

fn write_block(node: &Node, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match node {
        Node::Scalar(s) => {
            out.push_str(&pad);
            out.push_str(&scalar_repr(s));
            out.push('\n');
        }
        Node::Sequence(items) if flow_safe(node) => {
            out.push_str(&pad);
            out.push_str(&flow_repr(node));
            out.push('\n');
        }
        Node::Sequence(items) => {
            for item in items {
                if flow_safe(item) {
                    out.push_str(&pad);
                    out.push_str("- ");
                    out.push_str(&flow_repr(item));
                    out.push('\n');
                } else {
                    out.push_str(&pad);
                    out.push_str("-\n");
                    write_block(item, indent + 2, out);
                }
            }
        }
        Node::Mapping(entries) if entries.is_empty() => {
            out.push_str(&pad);
            out.push_str("{}\n");
        }
        Node::Mapping(entries) => {
            for (key, value) in entries {
                out.push_str(&pad);
                out.push_str(&scalar_repr(key));
                out.push(':');
                match value {
                    v if flow_safe(v) => {
                        out.push(' ');
                        out.push_str(&flow_repr(v));
                        out.push('\n');
                    }
                    Node::Mapping(e) if e.is_empty() => {
                        out.push_str(" {}\n");
                    }
                    v => {
                        out.push('\n');
                        write_block(v, indent + 2, out);
                    }
                }
            }
        }
    }
}

/// Renders a node back to document text. Reparsing the output in safe mode
/// yields an equal node.
pub fn serialize(node: &Node) -> String {
    let mut out = String::new();
    write_block(node, 0, &mut out);
    out
}
