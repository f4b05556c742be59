//! `{{placeholder}}` substitution for the SQL templates.

use crate::error::{Error, Result};
use crate::sqlgen::Dialect;

pub(crate) const QT: &str = include_str!("templates/QT.sql");
pub(crate) const QMT: &str = include_str!("templates/QMT.sql");
pub(crate) const QMT_FEATURE: &str = include_str!("templates/QMT_FEATURE.sql");
pub(crate) const M: &str = include_str!("templates/M.sql");
pub(crate) const MAJ: &str = include_str!("templates/MAJ.sql");
pub(crate) const QE: &str = include_str!("templates/QE.sql");
pub(crate) const QE_IX: &str = include_str!("templates/QE_IX.sql");
pub(crate) const P: &str = include_str!("templates/P.sql");
pub(crate) const RANK: &str = include_str!("templates/RANK.sql");
pub(crate) const EXPORT1D: &str = include_str!("templates/EXPORT1D.sql");
pub(crate) const EXPORT2D: &str = include_str!("templates/EXPORT2D.sql");
pub(crate) const EVAL: &str = include_str!("templates/EVAL.sql");

/// Replaces every `{{name}}` in `template`.
///
/// Names are looked up in `vars`; a name of the form `q_<ident>` that is
/// not in `vars` expands to `<ident>` quoted for `dialect`. Anything else
/// unresolved is an error. The trailing newline of the file is dropped.
pub(crate) fn fill(template: &str, vars: &[(&str, &str)], dialect: &Dialect) -> Result<String> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| Error::Template("unterminated placeholder".into()))?;
        let name = after[..end].trim();
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, v)) => out.push_str(v),
            None => match name.strip_prefix("q_") {
                Some(ident) if !ident.is_empty() => out.push_str(&dialect.quote(ident)),
                _ => return Err(Error::Template(format!("unresolved placeholder `{name}`"))),
            },
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    while out.ends_with('\n') {
        out.pop();
    }
    Ok(out)
}
