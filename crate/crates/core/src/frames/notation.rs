//! Parser and renderer for the frame notation.
//!
//! Grammar, one construct per line:
//!
//! * `#CONCEPT.n` starts a frame (column 0, or indented inside a group).
//! * `Label.n` at column 0 opens a group such as `Plan.1`.
//! * `<slot> <filler>` on an indented line adds a slot.
//! * `*name "text"` on an indented line adds a directive; the string may
//!   continue over several physical lines.
//! * `//` starts a comment. `\textbf{..}` / `\textcolor{c}{..}` wrappers are
//!   unwrapped and `\hfill` starts a trailing annotation, so listings copied
//!   from typeset documents parse as-is.
//!
//! Fillers: `#X.n`, `->X.n`, `@X`, `lo<>hi`, `<v` / `<=v` / `>v` / `>=v`,
//! numbers, bare words and `"quoted text"`.

use std::collections::HashSet;

use thiserror::Error;

use super::{CmpOp, Filler, FrameDocument, FrameId, FrameInstance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate instance #{id} at line {line}")]
    Duplicate { id: FrameId, line: usize },
    #[error("dangling reference #{id} at line {line}")]
    Dangling { id: FrameId, line: usize },
}

/// Instance ids that may be referenced without being defined in the
/// document. The discourse participants are always in scope.
#[derive(Clone, Debug)]
pub struct ParseOptions {
    pub externals: Vec<FrameId>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            externals: vec![FrameId::new("HUMAN", 1), FrameId::new("LEIA", 1)],
        }
    }
}

impl ParseOptions {
    pub fn with_context(mut self, doc: &FrameDocument) -> Self {
        self.externals.extend(doc.frames.iter().map(|f| f.id.clone()));
        self
    }
}

pub fn parse_frames(text: &str) -> Result<FrameDocument, FrameError> {
    parse_frames_with(text, &ParseOptions::default())
}

struct LogicalLine {
    line: usize,
    indent: usize,
    code: String,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FrameError {
    FrameError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Strips comments and typesetting markup outside string literals and joins
/// physical lines while a string literal is open.
fn logical_lines(text: &str) -> Result<Vec<LogicalLine>, FrameError> {
    let mut out = Vec::new();
    let mut pending: Option<LogicalLine> = None;
    let mut in_string = false;
    let mut last_line = 0;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        last_line = line_no;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        let mut code = String::new();
        // closing braces to drop, one per unwrapped markup group
        let mut drop_braces = 0usize;

        if in_string {
            // continuation: leading whitespace folds into one space
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            code.push(' ');
        }

        while i < chars.len() {
            let c = chars[i];
            if in_string {
                code.push(c);
                if c == '\\' && i + 1 < chars.len() {
                    code.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if c == '"' {
                    in_string = false;
                }
                i += 1;
                continue;
            }
            let rest: String = chars[i..].iter().collect();
            if rest.starts_with("//") || rest.starts_with("\\hfill") {
                break;
            }
            if rest.starts_with("\\textbf{") {
                i += "\\textbf{".len();
                drop_braces += 1;
                continue;
            }
            if rest.starts_with("\\textcolor{") {
                let close = rest
                    .find("}{")
                    .ok_or_else(|| syntax(line_no, i + 1, "malformed \\textcolor"))?;
                i += rest[..close + 2].chars().count();
                drop_braces += 1;
                continue;
            }
            if c == '}' && drop_braces > 0 {
                drop_braces -= 1;
                i += 1;
                continue;
            }
            if c == '"' {
                in_string = true;
            }
            code.push(c);
            i += 1;
        }

        match pending.as_mut() {
            Some(p) => {
                let trimmed = code.trim_end();
                p.code = format!("{}{}", p.code.trim_end(), trimmed);
            }
            None => {
                let indent = code.chars().take_while(|c| *c == ' ' || *c == '\t').count();
                let trimmed = code.trim_end().to_string();
                pending = Some(LogicalLine {
                    line: line_no,
                    indent,
                    code: trimmed,
                });
            }
        }
        if !in_string {
            let done = pending.take().unwrap();
            if !done.code.trim().is_empty() {
                out.push(done);
            }
        }
    }
    if in_string {
        let line = pending.map(|p| p.line).unwrap_or(last_line);
        return Err(syntax(line, 1, "unterminated string literal"));
    }
    Ok(out)
}

fn is_concept_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-')
}

pub(crate) fn is_slot_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

/// `//` inside a word would read back as a comment.
fn is_bare_word(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '/'))
        && !s.contains("//")
}

fn is_group_label(s: &str) -> bool {
    match s.rsplit_once('.') {
        Some((name, idx)) => {
            !idx.is_empty()
                && idx.chars().all(|c| c.is_ascii_digit())
                && matches!(name.chars().next(), Some(c) if c.is_ascii_alphabetic())
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
        }
        None => false,
    }
}

fn parse_frame_id(s: &str) -> Option<FrameId> {
    let (concept, idx) = s.rsplit_once('.')?;
    if !is_concept_name(concept) || idx.is_empty() || !idx.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(FrameId::new(concept, idx.parse().ok()?))
}

fn parse_number(s: &str) -> Option<f64> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    s.parse().ok()
}

/// Reads a string literal starting at the opening quote. Returns the decoded
/// text and the number of bytes consumed.
fn read_string(s: &str) -> Option<(String, usize)> {
    let mut chars = s.char_indices();
    if chars.next()?.1 != '"' {
        return None;
    }
    let mut out = String::new();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Some((out, i + 1)),
            '\\' => match chars.next()?.1 {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                other => out.push(other),
            },
            other => out.push(other),
        }
    }
    None
}

pub(crate) fn parse_filler(token: &str) -> Result<Filler, String> {
    let t = token.trim();
    if t.is_empty() {
        return Err("missing filler".into());
    }
    if let Some(rest) = t.strip_prefix("->") {
        return parse_frame_id(rest)
            .map(Filler::CoRef)
            .ok_or_else(|| format!("malformed coreference `{t}`"));
    }
    if let Some(rest) = t.strip_prefix('#') {
        return parse_frame_id(rest)
            .map(Filler::Instance)
            .ok_or_else(|| format!("malformed instance reference `{t}`"));
    }
    if let Some(rest) = t.strip_prefix('@') {
        return if is_concept_name(rest) {
            Ok(Filler::Concept(rest.to_string()))
        } else {
            Err(format!("malformed concept reference `{t}`"))
        };
    }
    if t.starts_with('"') {
        return match read_string(t) {
            Some((text, used)) if used == t.len() => Ok(Filler::Text(text)),
            _ => Err(format!("malformed string `{t}`")),
        };
    }
    for (sym, op) in [("<=", CmpOp::Le), (">=", CmpOp::Ge), ("<", CmpOp::Lt), (">", CmpOp::Gt)] {
        if let Some(rest) = t.strip_prefix(sym) {
            if rest.starts_with('>') {
                break;
            }
            return parse_number(rest)
                .map(|value| Filler::Compare { op, value })
                .ok_or_else(|| format!("malformed comparison `{t}`"));
        }
    }
    if let Some((lo, hi)) = t.split_once("<>") {
        let (lo, hi) = parse_number(lo)
            .zip(parse_number(hi))
            .ok_or_else(|| format!("malformed range `{t}`"))?;
        if lo > hi {
            return Err(format!("range `{t}` has lo > hi"));
        }
        return Ok(Filler::Range { lo, hi });
    }
    if let Some(n) = parse_number(t) {
        return Ok(Filler::Number(n));
    }
    if is_bare_word(t) {
        return Ok(Filler::Text(t.to_string()));
    }
    Err(format!("unrecognized filler `{t}`"))
}

pub fn parse_frames_with(text: &str, options: &ParseOptions) -> Result<FrameDocument, FrameError> {
    let lines = logical_lines(text)?;
    let mut doc = FrameDocument::new();
    let mut lines_of: Vec<usize> = Vec::new();
    let mut group: Option<String> = None;

    for ll in &lines {
        let body = ll.code.trim();
        let col = ll.indent + 1;
        if let Some(rest) = body.strip_prefix('#') {
            let id = parse_frame_id(rest.trim())
                .ok_or_else(|| syntax(ll.line, col, format!("malformed frame header `{body}`")))?;
            if ll.indent == 0 {
                group = None;
            }
            if doc.frames.iter().any(|f| f.id == id) {
                return Err(FrameError::Duplicate { id, line: ll.line });
            }
            let mut frame = FrameInstance::new(id);
            frame.group = group.clone();
            doc.frames.push(frame);
            lines_of.push(ll.line);
            continue;
        }
        if ll.indent == 0 {
            if is_group_label(body) {
                group = Some(body.to_string());
                continue;
            }
            return Err(syntax(ll.line, col, format!("expected frame header, found `{body}`")));
        }
        let frame = doc
            .frames
            .last_mut()
            .ok_or_else(|| syntax(ll.line, col, "slot outside of any frame"))?;
        if let Some(rest) = body.strip_prefix('*') {
            let (name, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            if !is_slot_name(name) {
                return Err(syntax(ll.line, col, format!("malformed directive name `{name}`")));
            }
            let tail = tail.trim();
            let text = match read_string(tail) {
                Some((text, used)) if used == tail.len() => text,
                _ => return Err(syntax(ll.line, col, "directive expects one quoted string")),
            };
            frame.slots.push((name.to_string(), Filler::Directive(text)));
            continue;
        }
        let (slot, tail) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        if !is_slot_name(slot) {
            return Err(syntax(ll.line, col, format!("malformed slot name `{slot}`")));
        }
        let filler_col = col + body.len() - body[slot.len()..].trim_start().len();
        let filler = parse_filler(tail).map_err(|m| syntax(ll.line, filler_col, m))?;
        if frame.slots.iter().any(|(s, _)| s == slot) {
            return Err(syntax(ll.line, col, format!("duplicate slot `{slot}`")));
        }
        frame.slots.push((slot.to_string(), filler));
    }

    let defined: HashSet<&FrameId> = doc
        .frames
        .iter()
        .map(|f| &f.id)
        .chain(options.externals.iter())
        .collect();
    for (frame, line) in doc.frames.iter().zip(&lines_of) {
        for (_, filler) in &frame.slots {
            if let Filler::Instance(id) = filler {
                if !defined.contains(id) {
                    return Err(FrameError::Dangling {
                        id: id.clone(),
                        line: *line,
                    });
                }
            }
        }
    }
    Ok(doc)
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

pub fn render_filler(filler: &Filler) -> String {
    match filler {
        Filler::Instance(id) => format!("#{id}"),
        Filler::CoRef(id) => format!("->{id}"),
        Filler::Concept(c) => format!("@{c}"),
        Filler::Range { lo, hi } => format!("{lo}<>{hi}"),
        Filler::Compare { op, value } => format!("{}{value}", op.symbol()),
        Filler::Number(n) => format!("{n}"),
        Filler::Text(t) => {
            if is_bare_word(t) && parse_number(t).is_none() {
                t.clone()
            } else {
                quote(t)
            }
        }
        Filler::Directive(t) => quote(t),
    }
}

/// Canonical rendering: frames in order, slots indented two spaces below
/// their header, grouped frames indented one more level under the label.
pub fn render_frames(doc: &FrameDocument) -> String {
    let mut out = String::new();
    let mut group: Option<&str> = None;
    for frame in &doc.frames {
        let this = frame.group.as_deref();
        if this != group {
            if let Some(label) = this {
                out.push_str(label);
                out.push('\n');
            }
            group = this;
        }
        let pad = if this.is_some() { "  " } else { "" };
        out.push_str(&format!("{pad}#{}\n", frame.id));
        for (slot, filler) in &frame.slots {
            match filler {
                Filler::Directive(_) => out.push_str(&format!("{pad}  *{slot} {}\n", render_filler(filler))),
                _ => out.push_str(&format!("{pad}  {slot} {}\n", render_filler(filler))),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_document() {
        assert!(parse_frames("").unwrap().is_empty());
        assert_eq!(render_frames(&FrameDocument::new()), "");
    }

    #[test]
    fn fillers_parse_by_shape() {
        assert_eq!(
            parse_filler("0.0001<>0.1").unwrap(),
            Filler::Range { lo: 0.0001, hi: 0.1 }
        );
        assert_eq!(
            parse_filler("<0.7").unwrap(),
            Filler::Compare {
                op: CmpOp::Lt,
                value: 0.7
            }
        );
        assert_eq!(
            parse_filler(">=2").unwrap(),
            Filler::Compare {
                op: CmpOp::Ge,
                value: 2.0
            }
        );
        assert_eq!(parse_filler("@PIPE").unwrap(), Filler::Concept("PIPE".into()));
        assert_eq!(
            parse_filler("->ENGINE.1").unwrap(),
            Filler::CoRef(FrameId::new("ENGINE", 1))
        );
        assert_eq!(parse_filler("EPISTEMIC").unwrap(), Filler::Text("EPISTEMIC".into()));
        assert_eq!(parse_filler("-3").unwrap(), Filler::Number(-3.0));
        assert!(parse_filler("0.5<>0.1").is_err());
        assert!(parse_filler("#lower.1").is_err());
    }

    #[test]
    fn dangling_and_duplicate_are_errors() {
        let err = parse_frames("#A.1\n  theme #B.1\n").unwrap_err();
        assert!(matches!(err, FrameError::Dangling { line: 1, .. }));
        let err = parse_frames("#A.1\n#A.1\n").unwrap_err();
        assert!(matches!(err, FrameError::Duplicate { line: 2, .. }));
    }

    #[test]
    fn syntax_error_reports_location() {
        let err = parse_frames("#A.1\n  theme %%\n").unwrap_err();
        match err {
            FrameError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiline_directive_is_joined() {
        let doc = parse_frames(
            "#PLAN-STEP.1\n  *take-this-action \"search ontology for causes;\n                    report.\"\n",
        )
        .unwrap();
        assert_eq!(
            doc.frames[0].get("take-this-action"),
            Some(&Filler::Directive("search ontology for causes; report.".into()))
        );
    }

    #[test]
    fn text_that_looks_like_a_number_is_quoted() {
        let mut doc = FrameDocument::new();
        doc.push(FrameInstance::new(FrameId::new("X", 1)).with("v", Filler::Text("0.5".into())));
        let text = render_frames(&doc);
        assert!(text.contains("\"0.5\""));
        assert_eq!(parse_frames(&text).unwrap(), doc);
    }

    #[test]
    fn text_containing_a_comment_marker_is_quoted() {
        let mut doc = FrameDocument::new();
        doc.push(FrameInstance::new(FrameId::new("X", 1)).with("v", Filler::Text("a//b".into())));
        let text = render_frames(&doc);
        assert!(text.contains("\"a//b\""));
        assert_eq!(parse_frames(&text).unwrap(), doc);
    }
}
