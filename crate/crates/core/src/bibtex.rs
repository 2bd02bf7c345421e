//! Turn a document's bibliography into BibTeX entries.
//!
//! Journal sources become `@article`, everything else `@misc`. Author order
//! is kept exactly as stored; names arriving as "Given Family" are inverted
//! to "Family, Given", names already carrying a comma are left alone.
//! Non-ASCII bytes pass through unmodified.

use std::collections::BTreeSet;

use crate::model::{Source, XsamsDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Article,
    Misc,
}

impl EntryKind {
    fn tag(self) -> &'static str {
        match self {
            EntryKind::Article => "article",
            EntryKind::Misc => "misc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BibEntry {
    pub kind: EntryKind,
    pub key: String,
    pub fields: Vec<(String, String)>,
}

impl BibEntry {
    pub fn render(&self) -> String {
        let mut out = format!("@{}{{{},\n", self.kind.tag(), self.key);
        let last = self.fields.len().saturating_sub(1);
        for (i, (name, value)) in self.fields.iter().enumerate() {
            out.push_str(&format!("  {name} = {{{value}}}"));
            if i != last {
                out.push(',');
            }
            out.push('\n');
        }
        out.push('}');
        out
    }
}

/// All sources in document order, deduplicated by identifier.
pub fn sources_of(doc: &XsamsDocument) -> Vec<&Source> {
    let mut seen = BTreeSet::new();
    doc.sources
        .iter()
        .filter(|s| seen.insert(s.source_id.as_str()))
        .collect()
}

/// A node's self-reference entry: the database-and-query record stamped
/// onto an extraction, recognizable by its category and production date.
pub fn is_self_reference(source: &Source) -> bool {
    source.category == "database" && source.production_date.is_some()
}

/// Family-name part of a stored author name.
fn family_name(name: &str) -> &str {
    if let Some((family, _)) = name.split_once(',') {
        return family.trim();
    }
    match name.trim().rsplit_once(' ') {
        Some((_, family)) => family,
        None => name.trim(),
    }
}

/// "Given Family" becomes "Family, Given"; inverted names stay as they are.
fn invert_name(name: &str) -> String {
    let trimmed = name.trim();
    if trimmed.contains(',') {
        return trimmed.to_string();
    }
    match trimmed.rsplit_once(' ') {
        Some((given, family)) => format!("{family}, {given}"),
        None => trimmed.to_string(),
    }
}

fn alnum(text: &str) -> String {
    text.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

/// Citation key: first author's family token, year, and a short suffix
/// taken from the source identifier.
fn citation_key(source: &Source) -> String {
    let family = source
        .authors
        .first()
        .map(|a| alnum(family_name(a)))
        .filter(|f| !f.is_empty())
        .unwrap_or_else(|| "anon".to_string());
    let digits: String = source
        .source_id
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let suffix = if digits.is_empty() {
        alnum(&source.source_id).to_lowercase()
    } else {
        digits
    };
    format!("{family}{}-{suffix}", source.year)
}

/// Collapse runs of whitespace; used on single-valued fields that may have
/// been wrapped over several lines in the XML.
fn tidy(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn entry_for(source: &Source) -> BibEntry {
    let kind = if source.category == "journal" {
        EntryKind::Article
    } else {
        EntryKind::Misc
    };
    let mut fields: Vec<(String, String)> = Vec::new();
    if !source.authors.is_empty() {
        let authors: Vec<String> = source.authors.iter().map(|a| invert_name(a)).collect();
        fields.push(("author".into(), authors.join(" and ")));
    }
    let title = source
        .title
        .as_deref()
        .filter(|t| !t.trim().is_empty())
        .or(source.source_name.as_deref().filter(|_| kind == EntryKind::Misc));
    if let Some(title) = title {
        fields.push(("title".into(), tidy(title)));
    }
    match kind {
        EntryKind::Article => {
            if let Some(journal) = &source.source_name {
                fields.push(("journal".into(), tidy(journal)));
            }
            fields.push(("year".into(), source.year.to_string()));
            if let Some(volume) = &source.volume {
                fields.push(("volume".into(), tidy(volume)));
            }
            match (&source.page_begin, &source.page_end) {
                (Some(begin), Some(end)) => {
                    fields.push(("pages".into(), format!("{}--{}", tidy(begin), tidy(end))))
                }
                (Some(begin), None) => fields.push(("pages".into(), tidy(begin))),
                _ => {}
            }
            if let Some(doi) = &source.doi {
                fields.push(("doi".into(), tidy(doi)));
            }
            if let Some(uri) = &source.uri {
                fields.push(("url".into(), tidy(uri)));
            }
        }
        EntryKind::Misc => {
            if let Some(uri) = &source.uri {
                fields.push(("howpublished".into(), tidy(uri)));
            }
            fields.push(("year".into(), source.year.to_string()));
            if let Some(doi) = &source.doi {
                fields.push(("doi".into(), tidy(doi)));
            }
            let mut note_parts: Vec<String> = Vec::new();
            if let Some(comments) = &source.comments {
                note_parts.push(comments.clone());
            }
            if let Some(date) = &source.production_date {
                note_parts.push(format!("Production date: {date}"));
            }
            if !note_parts.is_empty() {
                fields.push(("note".into(), note_parts.join("; ")));
            }
        }
    }
    BibEntry {
        kind,
        key: citation_key(source),
        fields,
    }
}

/// Single BibTeX entry for one source.
pub fn to_bibtex(source: &Source) -> String {
    entry_for(source).render()
}

/// All entries for a document, blank-line separated, in document order.
pub fn doc_to_bibtex(doc: &XsamsDocument) -> String {
    doc_to_bibtex_filtered(doc, true)
}

/// Same, optionally suppressing node self-reference sources: the extraction
/// itself is better cited through its dataset identifier.
pub fn doc_to_bibtex_filtered(doc: &XsamsDocument, include_self: bool) -> String {
    let sources = sources_of(doc);
    let mut used_keys: BTreeSet<String> = BTreeSet::new();
    let mut entries = Vec::new();
    for source in sources {
        if !include_self && is_self_reference(source) {
            continue;
        }
        let mut entry = entry_for(source);
        if !used_keys.insert(entry.key.clone()) {
            entry.key = format!("{}-{}", entry.key, alnum(&source.source_id).to_lowercase());
            used_keys.insert(entry.key.clone());
        }
        entries.push(entry.render());
    }
    entries.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(id: &str, category: &str, year: i32) -> Source {
        Source {
            source_id: id.into(),
            category: category.into(),
            source_name: None,
            year,
            authors: Vec::new(),
            title: None,
            volume: None,
            page_begin: None,
            page_end: None,
            uri: None,
            doi: None,
            production_date: None,
            comments: None,
        }
    }

    #[test]
    fn name_inversion() {
        assert_eq!(invert_name("N. Balakrishnan"), "Balakrishnan, N.");
        assert_eq!(invert_name("M.-L. Dubernet"), "Dubernet, M.-L.");
        assert_eq!(invert_name("Winnewisser, G."), "Winnewisser, G.");
        assert_eq!(invert_name("N.N."), "N.N.");
        assert_eq!(family_name("M.-L. Dubernet"), "Dubernet");
        assert_eq!(family_name("Winnewisser, G."), "Winnewisser");
    }

    #[test]
    fn journal_source_renders_article() {
        let mut s = source("BBAS849", "journal", 2002);
        s.source_name = Some("apj".into());
        s.authors = vec![
            "N. Balakrishnan".into(),
            "A. Dalgarno".into(),
            "C. Cecchi-Pestellini".into(),
            "E. Bodo".into(),
        ];
        s.volume = Some("571".into());
        s.page_begin = Some("1015".into());
        s.page_end = Some("1020".into());
        let text = to_bibtex(&s);
        assert!(text.starts_with("@article{Balakrishnan2002-849,"));
        assert!(text.contains("journal = {apj}"));
        assert!(text.contains("year = {2002}"));
        assert!(text.contains("volume = {571}"));
        assert!(text.contains("pages = {1015--1020}"));
        assert!(text.contains(
            "author = {Balakrishnan, N. and Dalgarno, A. and Cecchi-Pestellini, C. and Bodo, E.}"
        ));
    }

    #[test]
    fn minimal_database_source_renders_misc() {
        let s = source("X1", "database", 2015);
        let text = to_bibtex(&s);
        assert!(text.starts_with("@misc{anon2015-1,"), "{text}");
        assert!(text.contains("year = {2015}"));
    }

    #[test]
    fn self_reference_detection() {
        let mut s = source("BBAS0", "database", 2015);
        assert!(!is_self_reference(&s));
        s.production_date = Some("2015-12-03".into());
        assert!(is_self_reference(&s));
    }
}
