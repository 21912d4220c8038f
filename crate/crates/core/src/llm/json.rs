//! Locating a JSON object inside free-form model output.

use serde_json::{Map, Value};

/// Finds the single JSON object a reply carries: the whole text, a fenced
/// block, or the first balanced `{...}` span.
pub fn extract_object(text: &str) -> Option<Map<String, Value>> {
    let trimmed = strip_think(text).trim();
    if let Some(obj) = parse_object(trimmed) {
        return Some(obj);
    }
    if let Some(block) = fenced_block(trimmed) {
        if let Some(obj) = parse_object(block.trim()) {
            return Some(obj);
        }
    }
    let mut from = 0;
    while let Some(offset) = trimmed[from..].find('{') {
        let start = from + offset;
        if let Some(end) = balanced_end(&trimmed[start..]) {
            if let Some(obj) = parse_object(&trimmed[start..start + end]) {
                return Some(obj);
            }
        }
        from = start + 1;
    }
    None
}

fn parse_object(text: &str) -> Option<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

fn strip_think(text: &str) -> &str {
    match (text.find("<think>"), text.find("</think>")) {
        (Some(s), Some(e)) if s < e => &text[e + "</think>".len()..],
        _ => text,
    }
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Byte length of the balanced object starting at `text[0] == '{'`.
fn balanced_end(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_object() {
        assert_eq!(extract_object(r#"{"done": true}"#).unwrap()["done"], Value::Bool(true));
    }

    #[test]
    fn fenced_object() {
        let text = "Here you go:\n```json\n{\"a\": 1}\n```\nthanks";
        assert_eq!(extract_object(text).unwrap()["a"], 1);
    }

    #[test]
    fn embedded_object_with_braces_in_strings() {
        let text = r#"Sure. {"note": "use {x} here", "n": 2} done"#;
        assert_eq!(extract_object(text).unwrap()["n"], 2);
    }

    #[test]
    fn prose_and_arrays_rejected() {
        assert!(extract_object("I think the answer is yes.").is_none());
        assert!(extract_object("[1, 2]").is_none());
    }
}
