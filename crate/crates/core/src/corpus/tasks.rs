use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusTag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossLevel {
    Token,
    Sentence,
}

/// The seven self-supervised pre-training tasks. The discriminant is the
/// task id fed to the task embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    KnowledgeMasking = 0,
    Capitalization = 1,
    TokenDocumentRelation = 2,
    SentenceReordering = 3,
    SentenceDistance = 4,
    DiscourseRelation = 5,
    IrRelevance = 6,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::KnowledgeMasking,
        TaskKind::Capitalization,
        TaskKind::TokenDocumentRelation,
        TaskKind::SentenceReordering,
        TaskKind::SentenceDistance,
        TaskKind::DiscourseRelation,
        TaskKind::IrRelevance,
    ];

    pub fn id(self) -> u16 {
        self as u16
    }

    pub fn from_id(id: u16) -> Option<Self> {
        TaskKind::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::KnowledgeMasking => "knowledge_masking",
            TaskKind::Capitalization => "capitalization",
            TaskKind::TokenDocumentRelation => "token_document_relation",
            TaskKind::SentenceReordering => "sentence_reordering",
            TaskKind::SentenceDistance => "sentence_distance",
            TaskKind::DiscourseRelation => "discourse_relation",
            TaskKind::IrRelevance => "ir_relevance",
        }
    }

    pub fn level(self) -> LossLevel {
        match self {
            TaskKind::KnowledgeMasking | TaskKind::Capitalization | TaskKind::TokenDocumentRelation => LossLevel::Token,
            _ => LossLevel::Sentence,
        }
    }

    /// Corpora this task can be built from.
    pub fn corpora(self) -> &'static [CorpusTag] {
        const TEXT: &[CorpusTag] = &[
            CorpusTag::Encyclopedia,
            CorpusTag::Books,
            CorpusTag::News,
            CorpusTag::Dialog,
        ];
        match self {
            TaskKind::DiscourseRelation => &[CorpusTag::Discourse],
            TaskKind::IrRelevance => &[CorpusTag::IrRelevance],
            _ => TEXT,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// A registered pre-training task: identity, loss level and head arity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub arity: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, arity: usize) -> Self {
        TaskSpec { kind, arity }
    }

    pub fn task_id(&self) -> u16 {
        self.kind.id()
    }

    pub fn level(&self) -> LossLevel {
        self.kind.level()
    }

    pub fn corpora(&self) -> &'static [CorpusTag] {
        self.kind.corpora()
    }
}

/// Tasks a corpus of the given kind can feed.
pub fn applicable_tasks(tag: CorpusTag) -> Vec<TaskKind> {
    TaskKind::ALL
        .into_iter()
        .filter(|t| t.corpora().contains(&tag))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(t.name().parse::<TaskKind>().unwrap(), t);
            assert_eq!(TaskKind::from_id(t.id()), Some(t));
        }
        assert!("dance".parse::<TaskKind>().is_err());
    }

    #[test]
    fn encyclopedia_feeds_five_tasks() {
        let tasks = applicable_tasks(CorpusTag::Encyclopedia);
        assert_eq!(tasks.len(), 5);
        assert!(!tasks.contains(&TaskKind::DiscourseRelation));
        assert!(!tasks.contains(&TaskKind::IrRelevance));
    }

    #[test]
    fn pair_corpora_feed_one_task() {
        assert_eq!(applicable_tasks(CorpusTag::IrRelevance), [TaskKind::IrRelevance]);
        assert_eq!(applicable_tasks(CorpusTag::Discourse), [TaskKind::DiscourseRelation]);
    }
}
