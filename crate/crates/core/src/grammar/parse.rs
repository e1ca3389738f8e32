use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A parsed tool invocation such as `caption("what color is the car?", visual[0])`.
///
/// Equality ignores `raw`: two calls are equal when they name the same tool with
/// the same query and resources, however they were spelled.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct ActionCall {
    pub tool: String,
    pub query: Option<String>,
    pub resources: Vec<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw: String,
}

impl PartialEq for ActionCall {
    fn eq(&self, other: &Self) -> bool {
        self.tool == other.tool && self.query == other.query && self.resources == other.resources
    }
}

impl ActionCall {
    pub fn new(tool: impl Into<String>, query: Option<&str>, resources: Vec<usize>) -> Self {
        let mut call = Self {
            tool: tool.into(),
            query: query.map(str::to_string),
            resources,
            raw: String::new(),
        };
        call.raw = render_action(&call);
        call
    }

    pub fn render(&self) -> String {
        render_action(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

impl ParseError {
    fn new(position: usize, expected: impl Into<String>) -> Self {
        Self {
            position,
            expected: expected.into(),
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.eat(c) {
            Ok(())
        } else {
            Err(ParseError::new(self.pos, format!("'{c}'")))
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(&self.src[start..self.pos])
    }
}

/// Parses one action in the code-style template.
///
/// ```text
/// call          := name "(" (quoted_string | "None") "," resource_list ")"
/// resource_list := "[]" | visual_ref | "[" visual_ref ("," visual_ref)* "]"
/// visual_ref    := "visual[" int "]"
/// ```
///
/// Whitespace between tokens is ignored. Inside a quoted string `\"` and `\\`
/// are the only escapes.
pub fn parse_action(text: &str) -> Result<ActionCall, ParseError> {
    let mut cur = Cursor { src: text, pos: 0 };
    cur.skip_ws();

    let name_start = cur.pos;
    let tool = match cur.ident() {
        Some(name) if super::registry::is_tool_name(name) => name.to_string(),
        _ => return Err(ParseError::new(name_start, "tool name matching [a-z][a-z0-9_]*")),
    };

    cur.expect('(')?;
    cur.skip_ws();
    let query = parse_query(&mut cur)?;
    cur.expect(',')?;
    cur.skip_ws();
    let resources = parse_resource_list(&mut cur)?;
    cur.expect(')')?;
    cur.skip_ws();
    if cur.peek().is_some() {
        return Err(ParseError::new(cur.pos, "end of input"));
    }

    Ok(ActionCall {
        tool,
        query,
        resources,
        raw: text.trim().to_string(),
    })
}

fn parse_query(cur: &mut Cursor<'_>) -> Result<Option<String>, ParseError> {
    let start = cur.pos;
    if cur.rest().starts_with("None") {
        let save = cur.pos;
        cur.ident();
        if &cur.src[save..cur.pos] == "None" {
            return Ok(None);
        }
        cur.pos = save;
    }
    if !cur.eat('"') {
        return Err(ParseError::new(start, "quoted string or None"));
    }
    let mut out = String::new();
    loop {
        let at = cur.pos;
        match cur.bump() {
            None => return Err(ParseError::new(at, "closing quote")),
            Some('"') => return Ok(Some(out)),
            Some('\\') => match cur.bump() {
                Some(c @ ('"' | '\\')) => out.push(c),
                _ => return Err(ParseError::new(at, "escape \\\" or \\\\")),
            },
            Some(c) => out.push(c),
        }
    }
}

fn parse_visual_ref(cur: &mut Cursor<'_>) -> Result<usize, ParseError> {
    let start = cur.pos;
    if cur.ident() != Some("visual") {
        cur.pos = start;
        return Err(ParseError::new(start, "visual[i]"));
    }
    cur.expect('[')?;
    cur.skip_ws();
    let digits_start = cur.pos;
    while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
        cur.bump();
    }
    let digits = &cur.src[digits_start..cur.pos];
    if digits.is_empty() {
        return Err(ParseError::new(digits_start, "resource index"));
    }
    let index = digits
        .parse::<usize>()
        .map_err(|_| ParseError::new(digits_start, "resource index in range"))?;
    cur.expect(']')?;
    Ok(index)
}

fn parse_resource_list(cur: &mut Cursor<'_>) -> Result<Vec<usize>, ParseError> {
    let start = cur.pos;
    if cur.eat('[') {
        cur.skip_ws();
        if cur.eat(']') {
            return Ok(Vec::new());
        }
        let mut out = vec![parse_visual_ref(cur)?];
        loop {
            cur.skip_ws();
            if cur.eat(']') {
                return Ok(out);
            }
            if !cur.eat(',') {
                return Err(ParseError::new(cur.pos, "',' or ']'"));
            }
            cur.skip_ws();
            out.push(parse_visual_ref(cur)?);
        }
    }
    parse_visual_ref(cur)
        .map(|i| vec![i])
        .map_err(|_| ParseError::new(start, "resource list ([] or visual[i])"))
}

/// Canonical surface form of a call. A single resource renders as `visual[i]`,
/// none as `[]`, several as `[visual[i], visual[j]]`.
pub fn render_action(call: &ActionCall) -> String {
    let mut out = String::with_capacity(call.tool.len() + 32);
    out.push_str(&call.tool);
    out.push('(');
    match &call.query {
        None => out.push_str("None"),
        Some(q) => {
            out.push('"');
            for c in q.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
    }
    out.push_str(", ");
    match call.resources.as_slice() {
        [] => out.push_str("[]"),
        [one] => {
            let _ = write!(out, "visual[{one}]");
        }
        many => {
            out.push('[');
            for (i, idx) in many.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "visual[{idx}]");
            }
            out.push(']');
        }
    }
    out.push(')');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_caption_example() {
        let call = parse_action(r#"caption("what color is the car?", visual[0])"#).unwrap();
        assert_eq!(call.tool, "caption");
        assert_eq!(call.query.as_deref(), Some("what color is the car?"));
        assert_eq!(call.resources, vec![0]);
    }

    #[test]
    fn parses_none_query() {
        let call = parse_action("text_detect(None, visual[2])").unwrap();
        assert_eq!(call.query, None);
        assert_eq!(call.resources, vec![2]);
    }

    #[test]
    fn parses_empty_resource_list() {
        let call = parse_action(r#"knowledge_reason("capital of France?", [])"#).unwrap();
        assert_eq!(call.query.as_deref(), Some("capital of France?"));
        assert!(call.resources.is_empty());
    }

    #[test]
    fn missing_query_argument_fails_at_first_argument() {
        let err = parse_action("caption(visual[0])").unwrap_err();
        assert_eq!(err.position, 8);
        assert!(err.expected.contains("quoted string or None"));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_action("  caption ( \"x\" ,visual [ 3 ] )  ").unwrap();
        assert_eq!(a, ActionCall::new("caption", Some("x"), vec![3]));
        let b = parse_action("knowledge_reason(\"q\", [ ])").unwrap();
        assert!(b.resources.is_empty());
    }

    #[test]
    fn multi_resource_form() {
        let call = parse_action("caption(\"q\", [visual[0], visual[4]])").unwrap();
        assert_eq!(call.resources, vec![0, 4]);
        assert_eq!(call.render(), "caption(\"q\", [visual[0], visual[4]])");
        // a one-element list normalizes to the bare form
        let one = parse_action("caption(\"q\", [visual[1]])").unwrap();
        assert_eq!(one.render(), "caption(\"q\", visual[1])");
    }

    #[test]
    fn renders_none_query() {
        let call = ActionCall::new("asr", None, vec![1]);
        assert_eq!(render_action(&call), "asr(None, visual[1])");
    }

    #[test]
    fn renders_empty_list() {
        let call = ActionCall::new("knowledge_reason", Some("why?"), vec![]);
        assert_eq!(render_action(&call), "knowledge_reason(\"why?\", [])");
    }

    #[test]
    fn escaped_quotes_round_trip() {
        let call = ActionCall::new("caption", Some(r#"the "red" sign \ here"#), vec![0]);
        let text = render_action(&call);
        assert_eq!(text, r#"caption("the \"red\" sign \\ here", visual[0])"#);
        assert_eq!(parse_action(&text).unwrap(), call);
    }

    #[test]
    fn quoted_none_is_text() {
        let call = parse_action("caption(\"None\", visual[0])").unwrap();
        assert_eq!(call.query.as_deref(), Some("None"));
    }

    #[test]
    fn rejections() {
        for bad in [
            "",
            "Caption(\"x\", visual[0])",
            "caption(\"x\" visual[0])",
            "caption(\"x\", visual[])",
            "caption(\"x\", visual[0]",
            "caption(\"x\", visual[0]) trailing",
            "caption(\"unterminated, visual[0])",
            "caption(\"bad \\n escape\", visual[0])",
            "caption(Nonesuch, visual[0])",
            "caption(\"x\", image[0])",
            "caption(\"x\", [visual[0],])",
            "caption(\"x\", visual[99999999999999999999999])",
        ] {
            assert!(parse_action(bad).is_err(), "accepted {bad:?}");
        }
    }
}
