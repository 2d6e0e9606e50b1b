use serde::{Deserialize, Serialize};

use crate::corpus::{LossLevel, TaskKind};
use crate::error::{Error, Result};

/// One output head. Token-level heads score every position; sentence-level
/// heads read only the `[CLS]` position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    /// Pre-training task served by this head, if any.
    pub task_id: Option<u16>,
    pub level: LossLevel,
    pub arity: usize,
    /// Output projection shares the token embedding table (arity must equal
    /// the vocabulary size).
    #[serde(default)]
    pub tied: bool,
}

impl HeadSpec {
    pub fn for_task(kind: TaskKind, arity: usize) -> Self {
        HeadSpec {
            name: kind.name().to_string(),
            task_id: Some(kind.id()),
            level: kind.level(),
            arity,
            tied: false,
        }
    }

    pub fn classifier(name: &str, arity: usize) -> Self {
        HeadSpec {
            name: name.to_string(),
            task_id: None,
            level: LossLevel::Sentence,
            arity,
            tied: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub max_segments: usize,
    pub task_count: usize,
    pub output_heads: Vec<HeadSpec>,
}

impl ModelConfig {
    /// 2 layers, 4 attention heads, width 64, feed-forward 256, 64 positions.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            max_seq_len: 64,
            vocab_size,
            max_segments: 3,
            task_count: TaskKind::ALL.len(),
            output_heads: Vec::new(),
        }
    }

    /// Registers the head for `kind`. Knowledge masking ties its output
    /// projection to the token embeddings.
    pub fn with_task_head(mut self, kind: TaskKind, arity: usize) -> Self {
        let mut head = HeadSpec::for_task(kind, arity);
        head.tied = kind == TaskKind::KnowledgeMasking && arity == self.vocab_size;
        self.output_heads.push(head);
        self
    }

    pub fn head(&self, name: &str) -> Result<&HeadSpec> {
        self.output_heads
            .iter()
            .find(|h| h.name == name)
            .ok_or_else(|| Error::UnknownHead(name.to_string()))
    }

    pub fn head_for_task(&self, task_id: u16) -> Result<&HeadSpec> {
        self.output_heads
            .iter()
            .find(|h| h.task_id == Some(task_id))
            .ok_or_else(|| Error::UnknownHead(format!("task {task_id}")))
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layers, heads, d_model and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.max_seq_len < 2 || self.vocab_size < 6 || self.max_segments == 0 {
            return bad("max_seq_len >= 2, vocab_size >= 6 and max_segments >= 1 required".into());
        }
        if self.task_count == 0 {
            return bad("task_count must be positive".into());
        }
        let mut names = std::collections::HashSet::new();
        for h in &self.output_heads {
            if !names.insert(h.name.as_str()) {
                return bad(format!("duplicate head `{}`", h.name));
            }
            if h.arity == 0 {
                return bad(format!("head `{}` has zero arity", h.name));
            }
            if h.tied && (h.arity != self.vocab_size || h.level != LossLevel::Token) {
                return bad(format!(
                    "tied head `{}` must be token-level over the vocabulary",
                    h.name
                ));
            }
            if let Some(t) = h.task_id {
                if t as usize >= self.task_count {
                    return bad(format!("head `{}` task id {t} >= task_count", h.name));
                }
            }
        }
        Ok(())
    }

    /// Names the first architectural field that differs, ignoring heads.
    pub fn architecture_mismatch(&self, other: &ModelConfig) -> Option<String> {
        let fields = [
            ("layers", self.layers, other.layers),
            ("heads", self.heads, other.heads),
            ("d_model", self.d_model, other.d_model),
            ("d_ff", self.d_ff, other.d_ff),
            ("max_seq_len", self.max_seq_len, other.max_seq_len),
            ("vocab_size", self.vocab_size, other.vocab_size),
            ("max_segments", self.max_segments, other.max_segments),
            ("task_count", self.task_count, other.task_count),
        ];
        fields
            .iter()
            .find(|(_, a, b)| a != b)
            .map(|(name, a, b)| format!("{name}: {a} vs {b}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid() {
        let c = ModelConfig::desk(100)
            .with_task_head(TaskKind::KnowledgeMasking, 100)
            .with_task_head(TaskKind::SentenceDistance, 3);
        c.validate().unwrap();
        assert!(c.head("knowledge_masking").unwrap().tied);
        assert_eq!(c.head_for_task(4).unwrap().arity, 3);
    }

    #[test]
    fn rejects_indivisible_width() {
        let mut c = ModelConfig::desk(100);
        c.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mismatch_names_field() {
        let a = ModelConfig::desk(100);
        let mut b = a.clone();
        b.d_model = 32;
        assert_eq!(a.architecture_mismatch(&b).unwrap(), "d_model: 64 vs 32");
    }
}
