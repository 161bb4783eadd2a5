//! A small indentation-based key-value tree format, parsed into
//! `serde_json::Value` so configs can be written either way and deserialize
//! through the same serde types.
//!
//! Supported syntax:
//!
//! ```text
//! study:
//!   current:
//!     n: 30
//!     ybar: 0.0
//!     sigma2: 1.0
//!   historical:
//!     - n: 50
//!       ybar: 0.0
//!       sigma2: 1.0
//! models:
//!   - bnpp
//!   - inpp
//! ```
//!
//! Scalars are parsed as bool, integer, float, and finally string; `#`
//! starts a comment. Files whose first non-space character is `{` are
//! treated as JSON.

use serde_json::{Map, Value};

pub fn parse_config_text(text: &str) -> Result<Value, String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(text).map_err(|e| format!("invalid JSON config: {e}"));
    }
    let lines = collect_lines(text);
    let (value, next) = parse_block(&lines, 0, 0)?;
    if next != lines.len() {
        return Err(format!("unexpected content at line {}", lines[next].number));
    }
    Ok(value)
}

struct Line {
    indent: usize,
    content: String,
    number: usize,
}

fn collect_lines(text: &str) -> Vec<Line> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let without_comment = match raw.find('#') {
            Some(pos) if !raw[..pos].contains('"') => &raw[..pos],
            _ => raw,
        };
        if without_comment.trim().is_empty() {
            continue;
        }
        let indent = without_comment.len() - without_comment.trim_start().len();
        out.push(Line {
            indent,
            content: without_comment.trim().to_string(),
            number: i + 1,
        });
    }
    out
}

/// Parse a block of lines at the given indentation; returns the value and
/// the index of the first unconsumed line.
fn parse_block(lines: &[Line], start: usize, indent: usize) -> Result<(Value, usize), String> {
    if start >= lines.len() {
        return Ok((Value::Null, start));
    }
    if lines[start].content.starts_with('-') {
        parse_list(lines, start, indent)
    } else {
        parse_map(lines, start, indent)
    }
}

fn parse_map(lines: &[Line], start: usize, indent: usize) -> Result<(Value, usize), String> {
    let mut map = Map::new();
    let mut i = start;
    while i < lines.len() {
        let line = &lines[i];
        if line.indent < indent {
            break;
        }
        if line.indent > indent {
            return Err(format!("unexpected indentation at line {}", line.number));
        }
        let (key, rest) = line
            .content
            .split_once(':')
            .ok_or_else(|| format!("expected `key: value` at line {}", line.number))?;
        let key = key.trim().to_string();
        let rest = rest.trim();
        if rest.is_empty() {
            // Nested block (or empty value when nothing deeper follows).
            if i + 1 < lines.len() && lines[i + 1].indent > indent {
                let (value, next) = parse_block(lines, i + 1, lines[i + 1].indent)?;
                map.insert(key, value);
                i = next;
            } else {
                map.insert(key, Value::Null);
                i += 1;
            }
        } else {
            map.insert(key, parse_scalar(rest));
            i += 1;
        }
    }
    Ok((Value::Object(map), i))
}

fn parse_list(lines: &[Line], start: usize, indent: usize) -> Result<(Value, usize), String> {
    let mut items = Vec::new();
    let mut i = start;
    while i < lines.len() {
        let line = &lines[i];
        if line.indent != indent || !line.content.starts_with('-') {
            if line.indent >= indent && line.content.starts_with('-') {
                return Err(format!("inconsistent list indentation at line {}", line.number));
            }
            break;
        }
        let rest = line.content[1..].trim();
        if rest.is_empty() {
            // Item body on the following deeper lines.
            if i + 1 < lines.len() && lines[i + 1].indent > indent {
                let (value, next) = parse_block(lines, i + 1, lines[i + 1].indent)?;
                items.push(value);
                i = next;
            } else {
                items.push(Value::Null);
                i += 1;
            }
        } else if rest.contains(':') && !looks_like_scalar(rest) {
            // `- key: value` starts an inline map item; its remaining keys
            // sit on the following lines, aligned two columns deeper.
            let item_indent = indent + 2;
            let mut synthetic = vec![Line {
                indent: item_indent,
                content: rest.to_string(),
                number: line.number,
            }];
            // Everything indented deeper than the dash belongs to this item
            // (including nested lists); the next sibling dash or parent key
            // sits at or before `indent`.
            let mut j = i + 1;
            while j < lines.len() && lines[j].indent > indent {
                synthetic.push(Line {
                    indent: lines[j].indent,
                    content: lines[j].content.clone(),
                    number: lines[j].number,
                });
                j += 1;
            }
            let (value, consumed) = parse_map(&synthetic, 0, item_indent)?;
            if consumed != synthetic.len() {
                return Err(format!("could not parse list item at line {}", line.number));
            }
            items.push(value);
            i = j;
        } else {
            items.push(parse_scalar(rest));
            i += 1;
        }
    }
    Ok((Value::Array(items), i))
}

fn looks_like_scalar(text: &str) -> bool {
    // Times like "12:30" would be scalars, but our configs never use them;
    // treat any `key: value` shape as a map entry.
    text.starts_with('"') && text.ends_with('"')
}

fn parse_scalar(text: &str) -> Value {
    let text = text.trim();
    if let Some(stripped) = text.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        return Value::String(stripped.to_string());
    }
    match text {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        "null" | "~" => return Value::Null,
        _ => {}
    }
    if let Ok(i) = text.parse::<i64>() {
        return Value::Number(i.into());
    }
    if let Ok(f) = text.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(f) {
            return Value::Number(n);
        }
    }
    Value::String(text.to_string())
}
