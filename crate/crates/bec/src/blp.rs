//! `.blp` problem files.
//!
//! ```text
//! [problem]
//! n = 1
//! m = 1
//! gamma = 0.2
//! rho_f = 2
//! f_convexity = jointly-weakly-convex
//! g_convexity = jointly-quasiconvex
//!
//! [upper]
//! objective = "(x1-y1)^2"
//! constraints =
//!
//! [lower]
//! objective = "-(x1-y1)^2"
//! constraints = "y1-x1-1" ; "x1-y1-1"
//! ```

use std::path::Path;

use bec_core::{BilevelProblem, ConstraintConvexity, ModelError, ObjectiveConvexity, ProblemSpec};

#[derive(Debug, thiserror::Error)]
pub enum BlpError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing key `{key}` in [{section}]")]
    Missing { section: &'static str, key: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Problem,
    Upper,
    Lower,
}

#[derive(Default)]
struct Level {
    objective: Option<String>,
    constraints: Option<Vec<String>>,
}

fn syntax(line: usize, msg: impl Into<String>) -> BlpError {
    BlpError::Syntax { line, msg: msg.into() }
}

/// Drops a trailing `#` comment that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses `"a" ; "b" ; ...`, possibly empty.
fn quoted_list(value: &str, line: usize) -> Result<Vec<String>, BlpError> {
    let mut out = Vec::new();
    let mut rest = value.trim();
    while !rest.is_empty() {
        let body = rest
            .strip_prefix('"')
            .ok_or_else(|| syntax(line, format!("expected a quoted expression at `{rest}`")))?;
        let end = body.find('"').ok_or_else(|| syntax(line, "unterminated quote"))?;
        out.push(body[..end].to_string());
        rest = body[end + 1..].trim_start();
        if rest.is_empty() {
            break;
        }
        rest = rest
            .strip_prefix(';')
            .ok_or_else(|| syntax(line, format!("expected `;` at `{rest}`")))?
            .trim_start();
        if rest.is_empty() {
            return Err(syntax(line, "trailing `;`"));
        }
    }
    Ok(out)
}

fn quoted(value: &str, line: usize) -> Result<String, BlpError> {
    let mut v = quoted_list(value, line)?;
    if v.len() != 1 {
        return Err(syntax(line, "expected exactly one quoted expression"));
    }
    Ok(v.remove(0))
}

fn number<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T, BlpError> {
    value
        .parse()
        .map_err(|_| syntax(line, format!("`{key}` has invalid value `{value}`")))
}

/// Reads the textual problem without building expressions.
pub fn parse_spec(text: &str) -> Result<ProblemSpec, BlpError> {
    let mut section = Section::None;
    let (mut n, mut m, mut gamma, mut rho_f) = (None, None, None, None);
    let (mut fc, mut gc) = (None, None);
    let (mut upper, mut lower) = (Level::default(), Level::default());

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "problem" => Section::Problem,
                "upper" => Section::Upper,
                "lower" => Section::Lower,
                other => return Err(syntax(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| syntax(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let dup = |set: bool| if set { Err(syntax(line, format!("duplicate key `{key}`"))) } else { Ok(()) };
        match section {
            Section::None => return Err(syntax(line, "key outside of a section")),
            Section::Problem => match key {
                "n" => {
                    dup(n.is_some())?;
                    n = Some(number::<usize>(value, line, key)?);
                }
                "m" => {
                    dup(m.is_some())?;
                    m = Some(number::<usize>(value, line, key)?);
                }
                "gamma" => {
                    dup(gamma.is_some())?;
                    gamma = Some(number::<f64>(value, line, key)?);
                }
                "rho_f" => {
                    dup(rho_f.is_some())?;
                    rho_f = Some(number::<f64>(value, line, key)?);
                }
                "f_convexity" => {
                    dup(fc.is_some())?;
                    fc = Some(
                        ObjectiveConvexity::parse(value)
                            .ok_or_else(|| syntax(line, format!("unknown f_convexity `{value}`")))?,
                    );
                }
                "g_convexity" => {
                    dup(gc.is_some())?;
                    gc = Some(
                        ConstraintConvexity::parse(value)
                            .ok_or_else(|| syntax(line, format!("unknown g_convexity `{value}`")))?,
                    );
                }
                _ => return Err(syntax(line, format!("unknown key `{key}` in [problem]"))),
            },
            Section::Upper | Section::Lower => {
                let level = if section == Section::Upper { &mut upper } else { &mut lower };
                match key {
                    "objective" => {
                        dup(level.objective.is_some())?;
                        level.objective = Some(quoted(value, line)?);
                    }
                    "constraints" => {
                        dup(level.constraints.is_some())?;
                        level.constraints = Some(quoted_list(value, line)?);
                    }
                    _ => return Err(syntax(line, format!("unknown key `{key}`"))),
                }
            }
        }
    }

    let need = |section, key| BlpError::Missing { section, key };
    Ok(ProblemSpec {
        n: n.ok_or_else(|| need("problem", "n"))?,
        m: m.ok_or_else(|| need("problem", "m"))?,
        gamma: gamma.ok_or_else(|| need("problem", "gamma"))?,
        rho_f: rho_f.ok_or_else(|| need("problem", "rho_f"))?,
        f_convexity: fc.unwrap_or(ObjectiveConvexity::None),
        g_convexity: gc.unwrap_or(ConstraintConvexity::None),
        upper_objective: upper.objective.ok_or_else(|| need("upper", "objective"))?,
        upper_constraints: upper.constraints.unwrap_or_default(),
        lower_objective: lower.objective.ok_or_else(|| need("lower", "objective"))?,
        lower_constraints: lower.constraints.unwrap_or_default(),
    })
}

/// Parses and validates a problem; gamma is checked against the conservative
/// bound `gamma < 1/(2 rho_f)`.
pub fn load_problem(text: &str) -> Result<BilevelProblem, BlpError> {
    Ok(BilevelProblem::from_spec(&parse_spec(text)?)?)
}

pub fn read_problem(path: &Path) -> Result<(BilevelProblem, String), BlpError> {
    let text = std::fs::read_to_string(path).map_err(|source| BlpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((load_problem(&text)?, text))
}

pub fn save_spec(spec: &ProblemSpec) -> String {
    let list = |v: &[String]| v.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(" ; ");
    let mut out = String::new();
    out.push_str("[problem]\n");
    out.push_str(&format!("n = {}\nm = {}\n", spec.n, spec.m));
    out.push_str(&format!("gamma = {}\nrho_f = {}\n", spec.gamma, spec.rho_f));
    out.push_str(&format!("f_convexity = {}\n", spec.f_convexity.as_str()));
    out.push_str(&format!("g_convexity = {}\n", spec.g_convexity.as_str()));
    out.push_str("\n[upper]\n");
    out.push_str(&format!("objective = \"{}\"\n", spec.upper_objective));
    out.push_str(&format!("constraints = {}\n", list(&spec.upper_constraints)).replace("= \n", "=\n"));
    out.push_str("\n[lower]\n");
    out.push_str(&format!("objective = \"{}\"\n", spec.lower_objective));
    out.push_str(&format!("constraints = {}\n", list(&spec.lower_constraints)).replace("= \n", "=\n"));
    out
}

/// Canonical text of a problem. Loading it gives back an equal problem.
pub fn save_problem(prob: &BilevelProblem) -> String {
    save_spec(&prob.to_spec())
}

/// Hex SHA-256 of the canonical text.
pub fn digest(prob: &BilevelProblem) -> String {
    use sha2::{Digest, Sha256};
    let hash = Sha256::digest(save_problem(prob).as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX51: &str = include_str!("../fixtures/ex51.blp");

    #[test]
    fn reads_worked_example() {
        let spec = parse_spec(EX51).unwrap();
        assert_eq!((spec.n, spec.m), (1, 1));
        assert_eq!(spec.gamma, 0.2);
        assert_eq!(spec.lower_constraints, vec!["y1-x1-1", "x1-y1-1"]);
        assert!(spec.upper_constraints.is_empty());
        assert_eq!(spec.f_convexity, ObjectiveConvexity::JointlyWeaklyConvex);
        load_problem(EX51).unwrap();
    }

    #[test]
    fn save_then_load_is_identity() {
        let prob = load_problem(EX51).unwrap();
        let text = save_problem(&prob);
        let back = load_problem(&text).unwrap();
        assert_eq!(back, prob);
        assert_eq!(save_problem(&back), text);
        assert_eq!(digest(&back), digest(&prob));
    }

    #[test]
    fn comments_and_quotes() {
        let text = EX51.replace("objective = \"(x1-y1)^2\"", "objective = \"(x1-y1)^2\"  # F");
        assert_eq!(parse_spec(&text).unwrap().upper_objective, "(x1-y1)^2");
        assert_eq!(quoted_list(r#""a#b" ; "c""#, 1).unwrap(), vec!["a#b", "c"]);
        assert_eq!(strip_comment(r#"k = "a#b" # c"#), r#"k = "a#b" "#);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(parse_spec("n = 1"), Err(BlpError::Syntax { line: 1, .. })));
        assert!(matches!(
            parse_spec(&EX51.replace("gamma = 0.2", "Gamma = 0.2")),
            Err(BlpError::Syntax { .. })
        ));
        assert!(matches!(
            parse_spec(&EX51.replace("gamma = 0.2\n", "")),
            Err(BlpError::Missing { key: "gamma", .. })
        ));
        assert!(matches!(
            parse_spec(&EX51.replace("\"y1-x1-1\" ;", "\"y1-x1-1\"")),
            Err(BlpError::Syntax { .. })
        ));
        assert!(matches!(
            load_problem(&EX51.replace("gamma = 0.2", "gamma = 0.3")),
            Err(BlpError::Model(ModelError::GammaOutOfRange { .. }))
        ));
        assert!(matches!(
            load_problem(&EX51.replace("y1-x1-1", "y3-x1-1")),
            Err(BlpError::Model(ModelError::Dimension(_) | ModelError::Parse { .. }))
        ));
    }
}
