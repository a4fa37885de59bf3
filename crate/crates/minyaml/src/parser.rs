//! Line-oriented recursive-descent parser for the supported subset:
//! block mappings, block sequences, flow sequences, plain and quoted
//! scalars, comments, and (in unsafe mode only) `!!obj/apply:<name>` tags.
//!
//! No anchors, aliases, multi-document streams, or block scalars.

use crate::error::ParseError;
use crate::gadget::{GadgetCall, GadgetRegistry};
use crate::value::{Node, Scalar};

/// Result of an unsafe parse. `invoked` lists every gadget call made while
/// parsing, in document order; nested calls are substituted into the tree as
/// placeholder scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeParse<E> {
    pub root: UnsafeNode<E>,
    pub invoked: Vec<GadgetCall<E>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnsafeNode<E> {
    Plain(Node),
    Gadget(GadgetCall<E>),
}

impl<E> UnsafeNode<E> {
    pub fn as_plain(&self) -> Option<&Node> {
        match self {
            UnsafeNode::Plain(n) => Some(n),
            UnsafeNode::Gadget(_) => None,
        }
    }
}

/// Parses in safe mode: scalars, sequences, and mappings only. Any tag
/// anywhere in the document is rejected with `ForbiddenTag`.
pub fn parse_safe(text: &str) -> Result<Node, ParseError> {
    let mut sink = NoGadgets;
    let root = Parser::new(text, &mut sink)?.parse_document()?;
    match root {
        Parsed::Plain(node) => Ok(node),
        Parsed::Gadget(..) => unreachable!("safe mode rejects every tag"),
    }
}

/// Parses with the tagged-object extension enabled. A `!!obj/apply:<name>`
/// node resolves `name` in `registry` and invokes it with the parsed
/// arguments; parsing alone triggers the effect.
pub fn parse_unsafe<E: Clone>(
    text: &str,
    registry: &GadgetRegistry<E>,
) -> Result<UnsafeParse<E>, ParseError> {
    let mut sink = Collector {
        registry,
        invoked: Vec::new(),
    };
    let root = Parser::new(text, &mut sink)?.parse_document()?;
    let root = match root {
        Parsed::Plain(node) => UnsafeNode::Plain(node),
        Parsed::Gadget(idx, _) => UnsafeNode::Gadget(sink.invoked[idx].clone()),
    };
    Ok(UnsafeParse {
        root,
        invoked: sink.invoked,
    })
}

// --- tag handling strategy -------------------------------------------------

// The parser is shared between modes; the sink decides what a tag means.
// `check_tag` runs before any argument is parsed, so safe mode rejects
// without side effects and unsafe mode validates the tag form. `apply_tag`
// invokes the gadget and returns (call index, placeholder node).
trait TagSink {
    fn check_tag(&self, tag: &str, line: usize, col: usize) -> Result<(), ParseError>;
    fn apply_tag(
        &mut self,
        tag: &str,
        args: Vec<Node>,
        line: usize,
        col: usize,
    ) -> Result<(usize, Node), ParseError>;
}

struct NoGadgets;

impl TagSink for NoGadgets {
    fn check_tag(&self, tag: &str, line: usize, col: usize) -> Result<(), ParseError> {
        Err(ParseError::ForbiddenTag {
            tag: tag.to_string(),
            line,
            col,
        })
    }

    fn apply_tag(
        &mut self,
        tag: &str,
        _args: Vec<Node>,
        line: usize,
        col: usize,
    ) -> Result<(usize, Node), ParseError> {
        self.check_tag(tag, line, col).map(|_| unreachable!())
    }
}

struct Collector<'r, E> {
    registry: &'r GadgetRegistry<E>,
    invoked: Vec<GadgetCall<E>>,
}

const GADGET_TAG_PREFIX: &str = "!!obj/apply:";

fn gadget_name(tag: &str, line: usize, col: usize) -> Result<&str, ParseError> {
    let name = tag
        .strip_prefix(GADGET_TAG_PREFIX)
        .ok_or_else(|| ParseError::syntax(line, col, format!("unsupported tag {:?}", tag)))?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ParseError::syntax(
            line,
            col,
            format!("malformed gadget name {:?}", name),
        ));
    }
    Ok(name)
}

impl<'r, E> TagSink for Collector<'r, E> {
    fn check_tag(&self, tag: &str, line: usize, col: usize) -> Result<(), ParseError> {
        gadget_name(tag, line, col).map(|_| ())
    }

    fn apply_tag(
        &mut self,
        tag: &str,
        args: Vec<Node>,
        line: usize,
        col: usize,
    ) -> Result<(usize, Node), ParseError> {
        let name = gadget_name(tag, line, col)?;
        let call = self.registry.invoke(name, args)?;
        let placeholder = Node::str(format!("<gadget:{}>", name));
        self.invoked.push(call);
        Ok((self.invoked.len() - 1, placeholder))
    }
}

// A parsed node: either plain data, or a gadget call plus the placeholder
// that stands in for it when it is nested inside plain data.
enum Parsed {
    Plain(Node),
    Gadget(usize, Node),
}

impl Parsed {
    fn into_node(self) -> Node {
        match self {
            Parsed::Plain(node) => node,
            Parsed::Gadget(_, placeholder) => placeholder,
        }
    }
}

// --- line preparation --------------------------------------------------------

struct Line {
    number: usize,
    indent: usize,
    content: String,
}

// Strips a trailing comment: '#' preceded by whitespace (or at content
// start), outside quotes.
fn strip_comment(s: &str) -> &str {
    let bytes = s.as_bytes();
    let mut in_single = false;
    let mut in_double = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        let c = b as char;
        if in_double {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
            continue;
        }
        if in_single {
            if c == '\'' {
                in_single = false;
            }
            continue;
        }
        match c {
            '"' => in_double = true,
            '\'' => in_single = true,
            '#' if i == 0 || bytes[i - 1] == b' ' => {
                return &s[..i];
            }
            _ => {}
        }
    }
    s
}

fn prepare_lines(text: &str) -> Result<Vec<Line>, ParseError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        if raw.contains('\t') {
            return Err(ParseError::syntax(number, 1, "tabs are not allowed"));
        }
        let without_comment = strip_comment(raw);
        let trimmed_end = without_comment.trim_end();
        let indent = trimmed_end.len() - trimmed_end.trim_start().len();
        let content = trimmed_end.trim_start().to_string();
        if content.is_empty() {
            continue;
        }
        lines.push(Line {
            number,
            indent,
            content,
        });
    }
    Ok(lines)
}

// --- the parser ----------------------------------------------------------------

struct Parser<'s, S: TagSink> {
    lines: Vec<Line>,
    pos: usize,
    sink: &'s mut S,
}

impl<'s, S: TagSink> Parser<'s, S> {
    fn new(text: &str, sink: &'s mut S) -> Result<Self, ParseError> {
        Ok(Parser {
            lines: prepare_lines(text)?,
            pos: 0,
            sink,
        })
    }

    fn parse_document(mut self) -> Result<Parsed, ParseError> {
        if self.lines.is_empty() {
            return Err(ParseError::syntax(1, 1, "empty document"));
        }
        let indent = self.lines[0].indent;
        let root = self.parse_node(indent)?;
        if self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            return Err(ParseError::syntax(
                line.number,
                line.indent + 1,
                "trailing content after document root",
            ));
        }
        Ok(root)
    }

    fn peek(&self) -> Option<&Line> {
        self.lines.get(self.pos)
    }

    fn parse_node(&mut self, indent: usize) -> Result<Parsed, ParseError> {
        let line = match self.peek() {
            Some(l) if l.indent == indent => l,
            Some(l) => {
                return Err(ParseError::syntax(
                    l.number,
                    l.indent + 1,
                    format!("expected indent {}, found {}", indent, l.indent),
                ))
            }
            None => return Err(ParseError::syntax(0, 0, "unexpected end of document")),
        };
        if line.content == "-" || line.content.starts_with("- ") {
            Ok(Parsed::Plain(self.parse_sequence(indent)?))
        } else if split_mapping_line(&line.content).is_some() {
            Ok(Parsed::Plain(self.parse_mapping(indent)?))
        } else {
            // Single inline node; nothing else may follow at this level.
            let number = line.number;
            let col = line.indent + 1;
            let content = line.content.clone();
            self.pos += 1;
            if let Some(next) = self.peek() {
                if next.indent >= indent {
                    return Err(ParseError::syntax(
                        next.number,
                        next.indent + 1,
                        "unexpected content after scalar node",
                    ));
                }
            }
            self.parse_inline(&content, number, col)
        }
    }

    fn parse_sequence(&mut self, indent: usize) -> Result<Node, ParseError> {
        let mut items = Vec::new();
        while let Some(line) = self.peek() {
            if line.indent != indent {
                if line.indent > indent {
                    return Err(ParseError::syntax(
                        line.number,
                        line.indent + 1,
                        "unexpected deeper indent in sequence",
                    ));
                }
                break;
            }
            if line.content == "-" {
                let number = line.number;
                self.pos += 1;
                let child_indent = match self.peek() {
                    Some(next) if next.indent > indent => next.indent,
                    _ => {
                        return Err(ParseError::syntax(
                            number,
                            indent + 1,
                            "sequence item has no value",
                        ))
                    }
                };
                items.push(self.parse_node(child_indent)?.into_node());
            } else if let Some(rest) = line.content.strip_prefix("- ") {
                if rest.starts_with(' ') {
                    return Err(ParseError::syntax(
                        line.number,
                        indent + 3,
                        "exactly one space after '-'",
                    ));
                }
                let rest = rest.to_string();
                if split_mapping_line(&rest).is_some() || rest == "-" || rest.starts_with("- ") {
                    // Compact form: rewrite this line as the first line of a
                    // nested block node at indent+2 and recurse.
                    let l = &mut self.lines[self.pos];
                    l.indent = indent + 2;
                    l.content = rest;
                    items.push(self.parse_node(indent + 2)?.into_node());
                } else {
                    let number = line.number;
                    let col = indent + 3;
                    self.pos += 1;
                    items.push(self.parse_inline(&rest, number, col)?.into_node());
                }
            } else {
                break;
            }
        }
        Ok(Node::Sequence(items))
    }

    fn parse_mapping(&mut self, indent: usize) -> Result<Node, ParseError> {
        let mut entries: Vec<(Scalar, Node)> = Vec::new();
        while let Some(line) = self.peek() {
            if line.indent != indent {
                if line.indent > indent {
                    return Err(ParseError::syntax(
                        line.number,
                        line.indent + 1,
                        "unexpected deeper indent in mapping",
                    ));
                }
                break;
            }
            let number = line.number;
            let (key_part, value_part) = match split_mapping_line(&line.content) {
                Some(parts) => parts,
                None => break,
            };
            let key = parse_key(&key_part, number, indent + 1)?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(ParseError::syntax(
                    number,
                    indent + 1,
                    format!("duplicate mapping key {:?}", key_part),
                ));
            }
            self.pos += 1;
            let value = if value_part.is_empty() {
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let child = next.indent;
                        self.parse_node(child)?.into_node()
                    }
                    _ => Node::Scalar(Scalar::Null),
                }
            } else {
                let col = indent + key_part.len() + 3;
                self.parse_inline(&value_part, number, col)?.into_node()
            };
            entries.push((key, value));
        }
        Ok(Node::Mapping(entries))
    }

    // Inline content: tag, flow sequence, `{}`, quoted scalar, plain scalar.
    fn parse_inline(&mut self, s: &str, line: usize, col: usize) -> Result<Parsed, ParseError> {
        let s = s.trim();
        if let Some(tag_end) = tag_token(s) {
            let (tag, rest) = s.split_at(tag_end);
            let rest = rest.trim_start();
            self.sink.check_tag(tag, line, col)?;
            if !rest.starts_with('[') {
                return Err(ParseError::syntax(
                    line,
                    col,
                    "gadget arguments must be a flow sequence",
                ));
            }
            let (args_node, consumed) = parse_flow(rest, line, col + tag_end, self.sink)?;
            if !rest[consumed..].trim().is_empty() {
                return Err(ParseError::syntax(
                    line,
                    col,
                    "trailing content after gadget arguments",
                ));
            }
            let args = match args_node {
                Node::Sequence(items) => items,
                _ => unreachable!("parse_flow returns a sequence"),
            };
            let (idx, placeholder) = self.sink.apply_tag(tag, args, line, col)?;
            return Ok(Parsed::Gadget(idx, placeholder));
        }
        if s.starts_with('[') {
            let (node, consumed) = parse_flow(s, line, col, self.sink)?;
            if !s[consumed..].trim().is_empty() {
                return Err(ParseError::syntax(
                    line,
                    col + consumed,
                    "trailing content after flow sequence",
                ));
            }
            return Ok(Parsed::Plain(node));
        }
        if s == "{}" {
            return Ok(Parsed::Plain(Node::Mapping(Vec::new())));
        }
        if s.starts_with('"') || s.starts_with('\'') {
            let (scalar, consumed) = parse_quoted(s, line, col)?;
            if !s[consumed..].trim().is_empty() {
                return Err(ParseError::syntax(
                    line,
                    col + consumed,
                    "trailing content after quoted scalar",
                ));
            }
            return Ok(Parsed::Plain(Node::Scalar(scalar)));
        }
        Ok(Parsed::Plain(Node::Scalar(resolve_plain(s))))
    }
}

// Length of a leading tag token, if any. A tag starts with '!' and runs to
// the first whitespace.
fn tag_token(s: &str) -> Option<usize> {
    if !s.starts_with('!') {
        return None;
    }
    Some(s.find(char::is_whitespace).unwrap_or(s.len()))
}

// Splits "key: value" / "key:" at the first top-level colon, outside quotes.
// The colon must be followed by a space or end the line.
fn split_mapping_line(content: &str) -> Option<(String, String)> {
    let bytes = content.as_bytes();
    let mut in_single = false;
    let mut in_double = false;
    let mut escaped = false;
    for i in 0..bytes.len() {
        let c = bytes[i] as char;
        if in_double {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
            continue;
        }
        if in_single {
            if c == '\'' {
                in_single = false;
            }
            continue;
        }
        match c {
            '"' if i == 0 => in_double = true,
            '\'' if i == 0 => in_single = true,
            ':' => {
                if i + 1 == bytes.len() {
                    return Some((content[..i].trim_end().to_string(), String::new()));
                }
                if bytes[i + 1] == b' ' {
                    return Some((
                        content[..i].trim_end().to_string(),
                        content[i + 1..].trim().to_string(),
                    ));
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_key(key_part: &str, line: usize, col: usize) -> Result<Scalar, ParseError> {
    let s = key_part.trim();
    if s.is_empty() {
        return Err(ParseError::syntax(line, col, "empty mapping key"));
    }
    if s.starts_with('"') || s.starts_with('\'') {
        let (scalar, consumed) = parse_quoted(s, line, col)?;
        if !s[consumed..].trim().is_empty() {
            return Err(ParseError::syntax(line, col, "trailing content after key"));
        }
        return Ok(scalar);
    }
    if s.starts_with('!') {
        return Err(ParseError::syntax(line, col, "tags are not valid keys"));
    }
    Ok(resolve_plain(s))
}

// Parses a single-line flow sequence starting at s[0]=='['. Returns the node
// and the number of bytes consumed.
fn parse_flow<S: TagSink>(
    s: &str,
    line: usize,
    col: usize,
    sink: &mut S,
) -> Result<(Node, usize), ParseError> {
    debug_assert!(s.starts_with('['));
    let bytes = s.as_bytes();
    let mut i = 1;
    let mut items = Vec::new();
    loop {
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(ParseError::syntax(
                line,
                col + i,
                "unterminated flow sequence",
            ));
        }
        if bytes[i] == b']' {
            return Ok((Node::Sequence(items), i + 1));
        }
        let c = bytes[i] as char;
        if c == '[' {
            let (node, used) = parse_flow(&s[i..], line, col + i, sink)?;
            items.push(node);
            i += used;
        } else if c == '"' || c == '\'' {
            let (scalar, used) = parse_quoted(&s[i..], line, col + i)?;
            items.push(Node::Scalar(scalar));
            i += used;
        } else if c == '!' {
            let token_len = tag_token(&s[i..]).unwrap();
            let tag = &s[i..i + token_len];
            // Safe mode raises ForbiddenTag here; unsafe mode does not
            // support tags in flow context.
            sink.check_tag(tag, line, col + i)?;
            return Err(ParseError::syntax(
                line,
                col + i,
                "tags are not supported inside flow sequences",
            ));
        } else {
            let start = i;
            while i < bytes.len() && bytes[i] != b',' && bytes[i] != b']' {
                i += 1;
            }
            let text = s[start..i].trim();
            if text.is_empty() {
                return Err(ParseError::syntax(line, col + start, "empty flow item"));
            }
            items.push(Node::Scalar(resolve_plain(text)));
        }
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(ParseError::syntax(
                line,
                col + i,
                "unterminated flow sequence",
            ));
        }
        match bytes[i] {
            b',' => i += 1,
            b']' => return Ok((Node::Sequence(items), i + 1)),
            _ => {
                return Err(ParseError::syntax(
                    line,
                    col + i,
                    "expected ',' or ']' in flow sequence",
                ))
            }
        }
    }
}

// Parses a quoted scalar at s[0] in {'"', '\''}. Returns scalar + bytes used.
fn parse_quoted(s: &str, line: usize, col: usize) -> Result<(Scalar, usize), ParseError> {
    let mut chars = s.char_indices();
    let (_, quote) = chars.next().unwrap();
    let mut out = String::new();
    if quote == '\'' {
        let mut prev_quote = false;
        for (i, c) in chars {
            if prev_quote {
                if c == '\'' {
                    // '' is an escaped quote.
                    out.push('\'');
                    prev_quote = false;
                    continue;
                }
                return Ok((Scalar::Str(out), i));
            }
            if c == '\'' {
                prev_quote = true;
            } else {
                out.push(c);
            }
        }
        if prev_quote {
            return Ok((Scalar::Str(out), s.len()));
        }
        return Err(ParseError::syntax(line, col, "unterminated single quote"));
    }
    // Double-quoted with escapes.
    let mut escaped = false;
    let mut pending_unicode: Option<(usize, String)> = None;
    for (i, c) in chars {
        if let Some((need, mut hex)) = pending_unicode.take() {
            hex.push(c);
            if hex.len() < need {
                pending_unicode = Some((need, hex));
                continue;
            }
            let cp = u32::from_str_radix(&hex, 16)
                .map_err(|_| ParseError::syntax(line, col + i, "bad unicode escape"))?;
            let ch = char::from_u32(cp)
                .ok_or_else(|| ParseError::syntax(line, col + i, "bad unicode escape"))?;
            out.push(ch);
            continue;
        }
        if escaped {
            escaped = false;
            match c {
                '"' => out.push('"'),
                '\\' => out.push('\\'),
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                '0' => out.push('\0'),
                'u' => pending_unicode = Some((4, String::new())),
                other => {
                    return Err(ParseError::syntax(
                        line,
                        col + i,
                        format!("unsupported escape \\{}", other),
                    ))
                }
            }
            continue;
        }
        match c {
            '\\' => escaped = true,
            '"' => return Ok((Scalar::Str(out), i + 1)),
            c => out.push(c),
        }
    }
    Err(ParseError::syntax(line, col, "unterminated double quote"))
}

/// Resolves a plain (unquoted) scalar token to its typed value.
pub(crate) fn resolve_plain(s: &str) -> Scalar {
    match s {
        "" | "~" | "null" => return Scalar::Null,
        "true" => return Scalar::Bool(true),
        "false" => return Scalar::Bool(false),
        _ => {}
    }
    if let Ok(v) = s.parse::<i64>() {
        return Scalar::Int(v);
    }
    let first = s.chars().next().unwrap();
    if matches!(first, '0'..='9' | '+' | '-' | '.') {
        if let Ok(v) = s.parse::<f64>() {
            return Scalar::Float(v);
        }
    }
    Scalar::Str(s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> GadgetRegistry<String> {
        let mut r = GadgetRegistry::new();
        r.register("spawn_shell", |args: &[Node]| {
            Ok(format!("shell:{}", args.len()))
        });
        r
    }

    #[test]
    fn flow_sequence_of_ints() {
        let node = parse_safe("[1, 2]").unwrap();
        assert_eq!(node, Node::Sequence(vec![Node::int(1), Node::int(2)]));
    }

    #[test]
    fn two_entry_mapping() {
        let node = parse_safe("a: 1\nb: x").unwrap();
        assert_eq!(
            node,
            Node::Mapping(vec![
                (Scalar::Str("a".into()), Node::int(1)),
                (Scalar::Str("b".into()), Node::str("x")),
            ])
        );
    }

    #[test]
    fn safe_mode_rejects_tags() {
        let err = parse_safe("!!obj/apply:spawn_shell [x]").unwrap_err();
        match err {
            ParseError::ForbiddenTag { tag, .. } => {
                assert_eq!(tag, "!!obj/apply:spawn_shell");
            }
            other => panic!("expected ForbiddenTag, got {:?}", other),
        }
    }

    #[test]
    fn safe_mode_rejects_nested_tags() {
        for doc in [
            "a: !!obj/apply:spawn_shell [1]",
            "- !!obj/apply:spawn_shell [1]",
            "a:\n  - !!obj/apply:spawn_shell []",
            "[1, !!obj/apply:spawn_shell, 2]",
            "a:\n  !!obj/apply:spawn_shell []",
            "!custom x",
        ] {
            assert!(
                matches!(parse_safe(doc), Err(ParseError::ForbiddenTag { .. })),
                "doc {:?} not rejected",
                doc
            );
        }
    }

    #[test]
    fn unsafe_root_gadget() {
        let r = reg();
        let parsed = parse_unsafe("!!obj/apply:spawn_shell ['17.0.0.30', 4444]", &r).unwrap();
        match &parsed.root {
            UnsafeNode::Gadget(call) => {
                assert_eq!(call.name, "spawn_shell");
                assert_eq!(call.args.len(), 2);
                assert_eq!(call.args[0], Node::str("17.0.0.30"));
                assert_eq!(call.args[1], Node::int(4444));
                assert_eq!(call.effect, "shell:2");
            }
            other => panic!("expected gadget, got {:?}", other),
        }
        assert_eq!(parsed.invoked.len(), 1);
    }

    #[test]
    fn unsafe_unknown_gadget() {
        let r = reg();
        let err = parse_unsafe("!!obj/apply:nope []", &r).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownGadget {
                name: "nope".into()
            }
        );
    }

    #[test]
    fn unsafe_tag_free_matches_safe() {
        let r = reg();
        let doc = "a: 1";
        let safe = parse_safe(doc).unwrap();
        let parsed = parse_unsafe(doc, &r).unwrap();
        assert_eq!(parsed.root, UnsafeNode::Plain(safe));
        assert!(parsed.invoked.is_empty());
    }

    #[test]
    fn unsafe_nested_gadget_invoked() {
        let r = reg();
        let parsed = parse_unsafe("mode: !!obj/apply:spawn_shell [1, 2, 3]", &r).unwrap();
        assert_eq!(parsed.invoked.len(), 1);
        assert_eq!(parsed.invoked[0].effect, "shell:3");
        let root = parsed.root.as_plain().unwrap();
        assert_eq!(root.get("mode"), Some(&Node::str("<gadget:spawn_shell>")));
    }

    #[test]
    fn unsafe_malformed_args_do_not_invoke() {
        let r = reg();
        let err = parse_unsafe("!!obj/apply:spawn_shell x", &r).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn comments_and_blanks() {
        let doc = "# heading\na: 1  # trailing\n\nb: 2\n";
        let node = parse_safe(doc).unwrap();
        assert_eq!(node.get("a"), Some(&Node::int(1)));
        assert_eq!(node.get("b"), Some(&Node::int(2)));
    }

    #[test]
    fn nested_blocks() {
        let doc = "outer:\n  inner:\n    - 1\n    - [2, 3]\nnext: ok\n";
        let node = parse_safe(doc).unwrap();
        let inner = node.get("outer").unwrap().get("inner").unwrap();
        assert_eq!(
            inner,
            &Node::Sequence(vec![
                Node::int(1),
                Node::Sequence(vec![Node::int(2), Node::int(3)]),
            ])
        );
        assert_eq!(node.get("next"), Some(&Node::str("ok")));
    }

    #[test]
    fn compact_sequence_of_mappings() {
        let doc = "- name: a\n  level: 1\n- name: b\n  level: 2\n";
        let node = parse_safe(doc).unwrap();
        let items = node.as_sequence().unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].get("name"), Some(&Node::str("a")));
        assert_eq!(items[1].get("level"), Some(&Node::int(2)));
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(matches!(
            parse_safe("a: 1\na: 2"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn quoted_scalars() {
        let node = parse_safe("a: \"x: y\"\nb: 'it''s'\nc: \"line\\nbreak\"").unwrap();
        assert_eq!(node.get("a"), Some(&Node::str("x: y")));
        assert_eq!(node.get("b"), Some(&Node::str("it's")));
        assert_eq!(node.get("c"), Some(&Node::str("line\nbreak")));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_safe("a: [1, 2").unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {:?}", other),
        }
    }
}
