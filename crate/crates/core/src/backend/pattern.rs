use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};

/// Whole-string text pattern with `{name}` captures, e.g.
/// `Send a message to {contact} saying "{body}"`. `{_}` matches anything
/// without capturing. Everything else is literal.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    re: Regex,
    names: Vec<String>,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self, String> {
        let mut re = String::from("^");
        let mut names = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}').map(|c| c + open) else {
                break;
            };
            let name = &rest[open + 1..close];
            let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            re.push_str(&regex::escape(&rest[..open]));
            if !valid {
                re.push_str(&regex::escape(&rest[open..=close]));
            } else if name == "_" {
                re.push_str(".*?");
            } else {
                if names.iter().any(|n| n == name) {
                    return Err(format!("capture `{name}` repeated in `{source}`"));
                }
                re.push_str(&format!("(?P<{name}>.*?)"));
                names.push(name.to_string());
            }
            rest = &rest[close + 1..];
        }
        re.push_str(&regex::escape(rest));
        re.push('$');
        let re = RegexBuilder::new(&re)
            .dot_matches_new_line(true)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            source: source.to_string(),
            re,
            names,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn captures(&self, text: &str) -> Option<BTreeMap<String, String>> {
        let caps = self.re.captures(text.trim())?;
        Some(
            self.names
                .iter()
                .map(|n| (n.clone(), caps.name(n).map_or("", |m| m.as_str()).to_string()))
                .collect(),
        )
    }
}

pub fn match_pattern(pattern: &str, text: &str) -> Option<BTreeMap<String, String>> {
    Pattern::new(pattern).ok()?.captures(text)
}

/// Replace `{key}` with `lookup(key)` wherever it resolves; leave other braces alone.
pub(crate) fn fill(template: &str, lookup: &dyn Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        match after.find('}') {
            Some(close) => match lookup(&after[1..close]) {
                Some(v) => {
                    out.push_str(&v);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = &after[1..];
                }
            },
            None => {
                out.push_str(after);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_named_parts() {
        let caps = match_pattern(
            r#"Send a message to {contact} saying "{body}""#,
            r#"Send a message to Yuan saying "milk, eggs""#,
        )
        .unwrap();
        assert_eq!(caps["contact"], "Yuan");
        assert_eq!(caps["body"], "milk, eggs");
    }

    #[test]
    fn literal_must_match_whole() {
        assert!(match_pattern("Turn on wifi", "Turn on wifi now").is_none());
        assert!(match_pattern("Turn on {x}", "Turn on wifi now").is_some());
        assert!(match_pattern("a.b", "axb").is_none());
    }

    #[test]
    fn anonymous_wildcard() {
        assert_eq!(match_pattern("{_}", "anything at all").unwrap().len(), 0);
    }

    #[test]
    fn fill_leaves_unknown_keys() {
        let out = fill("to {who} re {what} {", &|k| (k == "who").then(|| "Bob".to_string()));
        assert_eq!(out, "to Bob re {what} {");
    }
}
