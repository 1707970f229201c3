use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskKind {
    Act,
    Think,
    Tool,
}

impl SubtaskKind {
    pub fn tag(self) -> &'static str {
        match self {
            SubtaskKind::Act => "ACT",
            SubtaskKind::Think => "THINK",
            SubtaskKind::Tool => "TOOL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: u32,
    pub kind: SubtaskKind,
    pub instruction: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Done,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub subtasks: Vec<Subtask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
}

impl Plan {
    pub fn head(&self) -> Option<&Subtask> {
        self.subtasks.first()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.terminal {
            Some(Terminal::Done) => return f.write_str("DONE"),
            Some(Terminal::Infeasible) => return f.write_str("INFEASIBLE"),
            None => {}
        }
        for (i, s) in self.subtasks.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{}. [{}] {}", s.id, s.kind.tag(), s.instruction)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("malformed plan line `{line}`: {reason}")]
    MalformedPlan { line: String, reason: String },
}

fn malformed(line: &str, reason: &str) -> PlanError {
    PlanError::MalformedPlan {
        line: line.to_string(),
        reason: reason.to_string(),
    }
}

/// Parse planner output.
///
/// ```text
/// 1. [ACT] open Notes and read note 'groceries'
/// 2. [THINK] extract the item list
/// ```
///
/// or a lone `DONE` / `INFEASIBLE`. Blank lines are ignored.
pub fn parse_plan(text: &str) -> Result<Plan, PlanError> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() {
        return Err(malformed("", "empty plan"));
    }
    if let [only] = lines[..] {
        let terminal = match only.to_ascii_uppercase().as_str() {
            "DONE" => Some(Terminal::Done),
            "INFEASIBLE" => Some(Terminal::Infeasible),
            _ => None,
        };
        if let Some(terminal) = terminal {
            return Ok(Plan {
                subtasks: Vec::new(),
                terminal: Some(terminal),
            });
        }
    }
    let mut subtasks = Vec::with_capacity(lines.len());
    for line in lines {
        let Some((num, rest)) = line.split_once('.') else {
            return Err(malformed(line, "expected `N. [KIND] instruction`"));
        };
        let id: u32 = num
            .trim()
            .parse()
            .map_err(|_| malformed(line, "expected a subtask number"))?;
        if id != subtasks.len() as u32 + 1 {
            return Err(malformed(
                line,
                &format!("expected subtask number {}", subtasks.len() + 1),
            ));
        }
        let rest = rest.trim_start();
        let Some((tag, instruction)) = rest.strip_prefix('[').and_then(|r| r.split_once(']')) else {
            return Err(malformed(line, "expected a [ACT], [THINK] or [TOOL] tag"));
        };
        let kind = match tag.trim().to_ascii_uppercase().as_str() {
            "ACT" => SubtaskKind::Act,
            "THINK" => SubtaskKind::Think,
            "TOOL" => SubtaskKind::Tool,
            _ => return Err(malformed(line, "unknown subtask tag")),
        };
        let instruction = instruction.trim();
        if instruction.is_empty() {
            return Err(malformed(line, "empty instruction"));
        }
        subtasks.push(Subtask {
            id,
            kind,
            instruction: instruction.to_string(),
        });
    }
    Ok(Plan {
        subtasks,
        terminal: None,
    })
}

const DANGLING: [&str; 8] = [
    "the result above",
    "the above",
    "the previous result",
    "the result from before",
    "that result",
    "the answer above",
    "as mentioned earlier",
    "from the last step",
];

/// Warnings for instructions that lean on context the executor will not see.
pub fn lint_subtask(subtask: &Subtask) -> Vec<String> {
    let lower = subtask.instruction.to_lowercase();
    DANGLING
        .iter()
        .filter(|p| lower.contains(*p))
        .map(|p| format!("instruction refers to `{p}`, which the executor cannot resolve"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_subtasks() {
        let p = parse_plan("1. [ACT] open Notes and read note 'groceries'\n2. [THINK] extract the item list").unwrap();
        assert_eq!(p.subtasks.len(), 2);
        assert_eq!(p.subtasks[1].kind, SubtaskKind::Think);
        assert_eq!(p.subtasks[0].instruction, "open Notes and read note 'groceries'");
        assert_eq!(p.terminal, None);
    }

    #[test]
    fn terminals() {
        assert_eq!(parse_plan("DONE").unwrap().terminal, Some(Terminal::Done));
        assert_eq!(
            parse_plan("  infeasible \n").unwrap().terminal,
            Some(Terminal::Infeasible)
        );
        assert!(parse_plan("DONE").unwrap().subtasks.is_empty());
    }

    #[test]
    fn rejects_prose() {
        assert!(matches!(
            parse_plan("step one: do stuff"),
            Err(PlanError::MalformedPlan { line, .. }) if line == "step one: do stuff"
        ));
        assert!(parse_plan("").is_err());
        assert!(parse_plan("1. [ACT] a\nDONE").is_err());
        assert!(parse_plan("2. [ACT] a").is_err());
        assert!(parse_plan("1. [ACT] a\n1. [ACT] b").is_err());
        assert!(parse_plan("1. [RUN] a").is_err());
    }

    #[test]
    fn whitespace_and_case() {
        let p = parse_plan("\n  1.   [act]   go home  \n\n 2. [Tool] HOME\n").unwrap();
        assert_eq!(p.subtasks[0].kind, SubtaskKind::Act);
        assert_eq!(p.subtasks[0].instruction, "go home");
        assert_eq!(p.subtasks[1].kind, SubtaskKind::Tool);
    }

    #[test]
    fn display_round_trip() {
        let text = "1. [ACT] a\n2. [THINK] b\n3. [TOOL] HOME";
        assert_eq!(parse_plan(text).unwrap().to_string(), text);
    }

    #[test]
    fn lint_flags_dangling_reference() {
        let s = Subtask {
            id: 1,
            kind: SubtaskKind::Act,
            instruction: "Send the result above to Yuan".into(),
        };
        assert_eq!(lint_subtask(&s).len(), 1);
    }
}
