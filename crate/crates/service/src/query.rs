use std::collections::HashSet;

use patexpand_core::corpus::normalize_term;

/// Parenthesized OR query over the base term and the selected terms.
///
/// Terms are normalized, empty ones dropped and repeats removed keeping the
/// first occurrence; multiword terms are double-quoted. Returns `None` when
/// the base term is empty after normalization.
pub fn search_string<S: AsRef<str>>(base_term: &str, selected: &[S]) -> Option<String> {
    let base = normalize_term(base_term);
    if base.is_empty() {
        return None;
    }
    let mut seen = HashSet::new();
    let parts: Vec<String> = std::iter::once(base)
        .chain(selected.iter().map(|s| normalize_term(s.as_ref())))
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .map(|t| if t.contains(' ') { format!("\"{t}\"") } else { t })
        .collect();
    Some(format!("({})", parts.join(" OR ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembles_or_query() {
        assert_eq!(search_string("lens", &["optic", "microlens"]).unwrap(), "(lens OR optic OR microlens)");
        assert_eq!(search_string::<&str>("lens", &[]).unwrap(), "(lens)");
        assert_eq!(
            search_string("assay", &["Binding Assay", "elisa"]).unwrap(),
            "(assay OR \"binding assay\" OR elisa)"
        );
        assert_eq!(search_string("Lens", &["lens", "optic", "OPTIC"]).unwrap(), "(lens OR optic)");
        assert_eq!(search_string::<&str>("  ", &[]), None);
    }
}
