//! Sentence-pair corpora: query/title relevance rows and discourse pairs.

use std::fs;
use std::path::Path;

use super::{tokenize, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrRecord {
    pub query: Vec<Token>,
    pub title: Vec<Token>,
    /// 0 strong (clicked), 1 weak (shown, not clicked), 2 irrelevant.
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscourseRecord {
    pub first: Vec<Token>,
    pub second: Vec<Token>,
    pub relation: String,
}

fn tsv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        rows.push((n + 1, cols));
    }
    Ok(rows)
}

fn nonempty(path: &Path, line: usize, text: &str) -> Result<Vec<Token>> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "empty text column".into(),
        });
    }
    Ok(toks)
}

/// `query \t title \t label` rows.
pub fn load_ir_pairs(path: impl AsRef<Path>) -> Result<Vec<IrRecord>> {
    let path = path.as_ref();
    tsv_rows(path)?
        .into_iter()
        .map(|(line, cols)| {
            let label: i64 = cols[2].trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("label `{}` is not an integer", cols[2]),
            })?;
            if !(0..=2).contains(&label) {
                return Err(Error::InvalidRelevanceLabel(label));
            }
            Ok(IrRecord {
                query: nonempty(path, line, &cols[0])?,
                title: nonempty(path, line, &cols[1])?,
                label: label as u32,
            })
        })
        .collect()
}

/// `sentence1 \t sentence2 \t relation` rows.
pub fn load_discourse_pairs(path: impl AsRef<Path>) -> Result<Vec<DiscourseRecord>> {
    let path = path.as_ref();
    tsv_rows(path)?
        .into_iter()
        .map(|(line, cols)| {
            Ok(DiscourseRecord {
                first: nonempty(path, line, &cols[0])?,
                second: nonempty(path, line, &cols[1])?,
                relation: cols[2].trim().to_string(),
            })
        })
        .collect()
}

/// Relation names sorted lexicographically; the position is the label id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelationVocab {
    names: Vec<String>,
}

impl RelationVocab {
    pub fn build<'a>(relations: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = relations.into_iter().map(str::to_string).collect();
        names.sort();
        names.dedup();
        RelationVocab { names }
    }

    pub fn from_records(records: &[DiscourseRecord]) -> Self {
        RelationVocab::build(records.iter().map(|r| r.relation.as_str()))
    }

    pub fn id(&self, relation: &str) -> Result<u32> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(relation))
            .map(|i| i as u32)
            .map_err(|_| Error::UnknownRelation(relation.to_string()))
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn relation_ids_round_trip() {
        let v = RelationVocab::build(["result", "contrast", "result", "elaboration"]);
        assert_eq!(v.names(), ["contrast", "elaboration", "result"]);
        for (i, name) in v.names().iter().enumerate() {
            assert_eq!(v.id(name).unwrap(), i as u32);
            assert_eq!(v.name(i as u32), Some(name.as_str()));
        }
        assert!(matches!(v.id("purpose"), Err(Error::UnknownRelation(_))));
    }

    #[test]
    fn ir_file_parsing() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cheap flights\tCheap flights to Rome\t0").unwrap();
        writeln!(f, "cheap flights\tHotel deals\t1").unwrap();
        let rows = load_ir_pairs(f.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].label, 1);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "q\tt\t3").unwrap();
        assert!(matches!(load_ir_pairs(f.path()), Err(Error::InvalidRelevanceLabel(3))));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "q\tt").unwrap();
        assert!(matches!(load_ir_pairs(f.path()), Err(Error::Parse { line: 1, .. })));
    }
}
