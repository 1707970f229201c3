use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_TYPE_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// Device input alphabet. There is deliberately no "open app" action:
/// apps launch by tapping their home-screen icon.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Tap(String),
    Type(String),
    Swipe(Direction),
    Back,
    Home,
    /// Final answer; recorded into the `system` data store.
    Stop(Option<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable action `{0}`")]
pub struct ActionParseError(pub String);

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Parse a double-quoted string with `\"`, `\\` and `\n` escapes.
/// Returns the decoded string and the remainder after the closing quote.
pub(crate) fn unquote(s: &str) -> Option<(String, &str)> {
    let rest = s.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = rest.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Some((out, &rest[i + 1..])),
            '\\' => match chars.next()?.1 {
                'n' => out.push('\n'),
                other => out.push(other),
            },
            c => out.push(c),
        }
    }
    None
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tap(id) => write!(f, "Tap({id})"),
            Action::Type(text) => write!(f, "Type({})", quote(text)),
            Action::Swipe(d) => write!(f, "Swipe({})", d.as_str()),
            Action::Back => f.write_str("Back"),
            Action::Home => f.write_str("Home"),
            Action::Stop(Some(a)) => write!(f, "Answer({})", quote(a)),
            Action::Stop(None) => f.write_str("Answer()"),
        }
    }
}

fn call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.trim())
}

fn quoted_arg(inner: &str) -> Option<String> {
    let (text, rest) = unquote(inner)?;
    rest.trim().is_empty().then_some(text)
}

impl FromStr for Action {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || ActionParseError(s.to_string());
        match s {
            "Back" => return Ok(Action::Back),
            "Home" => return Ok(Action::Home),
            _ => {}
        }
        if let Some(id) = call(s, "Tap") {
            let valid = !id.is_empty()
                && id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
            return if valid {
                Ok(Action::Tap(id.to_string()))
            } else {
                Err(err())
            };
        }
        if let Some(inner) = call(s, "Type") {
            let text = quoted_arg(inner).ok_or_else(err)?;
            if text.chars().count() > MAX_TYPE_LEN {
                return Err(err());
            }
            return Ok(Action::Type(text));
        }
        if let Some(dir) = call(s, "Swipe") {
            let d = match dir.to_ascii_lowercase().as_str() {
                "up" => Direction::Up,
                "down" => Direction::Down,
                "left" => Direction::Left,
                "right" => Direction::Right,
                _ => return Err(err()),
            };
            return Ok(Action::Swipe(d));
        }
        if let Some(inner) = call(s, "Answer") {
            if inner.is_empty() {
                return Ok(Action::Stop(None));
            }
            return quoted_arg(inner).map(|a| Action::Stop(Some(a))).ok_or_else(err);
        }
        Err(err())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grammar() {
        assert_eq!("Tap(note_0)".parse(), Ok(Action::Tap("note_0".into())));
        assert_eq!(" Swipe( UP ) ".parse(), Ok(Action::Swipe(Direction::Up)));
        assert_eq!(r#"Type("say \"hi\"")"#.parse(), Ok(Action::Type("say \"hi\"".into())));
        assert_eq!("Home".parse(), Ok(Action::Home));
        assert_eq!(r#"Answer("2")"#.parse(), Ok(Action::Stop(Some("2".into()))));
        assert!("Tap()".parse::<Action>().is_err());
        assert!("Tap(a b)".parse::<Action>().is_err());
        assert!(r#"Type("unterminated)"#.parse::<Action>().is_err());
        assert!("open_app(Notes)".parse::<Action>().is_err());
    }

    #[test]
    fn overlong_type_rejected() {
        let long = format!("Type({})", quote(&"x".repeat(MAX_TYPE_LEN + 1)));
        assert!(long.parse::<Action>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for a in [
            Action::Tap("save_note".into()),
            Action::Type("line\nwith \\ and \"q\"".into()),
            Action::Swipe(Direction::Left),
            Action::Back,
            Action::Home,
            Action::Stop(Some("143.5".into())),
            Action::Stop(None),
        ] {
            assert_eq!(a.to_string().parse::<Action>(), Ok(a));
        }
    }
}
