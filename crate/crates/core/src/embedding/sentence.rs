use crate::error::{Error, Result};
use crate::ingest::{ColumnProfile, ColumnRef, TableMetadata};

/// Character budget of a value sentence (about one 512-token window).
pub const MAX_SENTENCE_CHARS: usize = 2500;

/// Values kept in the frequent-value sentences used by the semantic criteria.
pub const FREQUENT_VALUES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataSentence {
    pub column: ColumnRef,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueSentence {
    pub column: ColumnRef,
    pub text: String,
}

/// Describes a column through its table's metadata. Absent fields are left
/// out together with their labels; the sibling list is always present.
pub fn metadata_sentence(meta: &TableMetadata, column: &str) -> Result<MetadataSentence> {
    if !meta.column_names.iter().any(|c| c == column) {
        return Err(Error::UnknownColumn {
            table: meta.table_id.clone(),
            column: column.to_owned(),
        });
    }
    let mut parts = Vec::with_capacity(7);
    let table = meta.table_name.as_deref().unwrap_or(&meta.table_id);
    parts.push(format!("table: {table}."));
    if let Some(description) = &meta.description {
        parts.push(format!("description: {description}."));
    }
    if let Some(source) = &meta.source {
        parts.push(format!("source: {source}."));
    }
    if !meta.tags.is_empty() {
        parts.push(format!("tags: {}.", meta.tags.join(", ")));
    }
    parts.push(format!("column: {column}."));
    if let Some(description) = meta.column_description(column) {
        parts.push(format!("column description: {description}."));
    }
    let siblings: Vec<&str> = meta
        .column_names
        .iter()
        .map(String::as_str)
        .filter(|c| *c != column)
        .collect();
    parts.push(format!("sibling columns: {}.", siblings.join(", ")));

    Ok(MetadataSentence {
        column: ColumnRef::new(&meta.table_id, column),
        text: parts.join(" "),
    })
}

/// All distinct values of the column, most frequent first.
pub fn value_sentence(profile: &ColumnProfile) -> Result<ValueSentence> {
    if profile.is_empty() {
        return Err(Error::EmptyColumn(profile.column.clone()));
    }
    Ok(ValueSentence {
        column: profile.column.clone(),
        text: render_values(profile.value_counts.iter().map(|(v, &n)| (v.as_str(), n)), None),
    })
}

/// The column's [`FREQUENT_VALUES`] most frequent values.
pub fn frequent_values_sentence(profile: &ColumnProfile) -> Result<ValueSentence> {
    if profile.is_empty() {
        return Err(Error::EmptyColumn(profile.column.clone()));
    }
    Ok(ValueSentence {
        column: profile.column.clone(),
        text: render_values(
            profile.value_counts.iter().map(|(v, &n)| (v.as_str(), n)),
            Some(FREQUENT_VALUES),
        ),
    })
}

/// Joins values with `", "` in descending count order (ties lexicographic),
/// keeping at most `limit` values and cutting at a value boundary so the
/// result stays within [`MAX_SENTENCE_CHARS`]. A single oversized value is
/// truncated mid-value rather than dropped.
pub fn render_values<'a, I>(counts: I, limit: Option<usize>) -> String
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let mut ordered: Vec<(&str, u64)> = counts.into_iter().collect();
    ordered.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if let Some(limit) = limit {
        ordered.truncate(limit);
    }

    let mut out = String::new();
    let mut chars = 0;
    for (i, (value, _)) in ordered.iter().enumerate() {
        let len = value.chars().count();
        if i == 0 {
            if len > MAX_SENTENCE_CHARS {
                return value.chars().take(MAX_SENTENCE_CHARS).collect();
            }
        } else {
            if chars + 2 + len > MAX_SENTENCE_CHARS {
                break;
            }
            out.push_str(", ");
            chars += 2;
        }
        out.push_str(value);
        chars += len;
    }
    out
}
