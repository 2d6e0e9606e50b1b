use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{CLS, PAD, SEP};
use super::{LossLevel, TaskKind};
use crate::error::{Error, Result};

pub const INSTANCE_MAGIC: [u8; 4] = *b"SWTI";
pub const INSTANCE_VERSION: u8 = 1;

/// One training example.
///
/// `token_labels` maps a token-level task id to per-position targets
/// (`None` = not scored). `loss_mask` marks the positions scored by the
/// instance's own task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: u16,
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u16>,
    pub position_ids: Vec<u16>,
    pub attention_length: usize,
    #[serde(default)]
    pub token_labels: BTreeMap<u16, Vec<Option<u32>>>,
    #[serde(default)]
    pub sentence_label: Option<u32>,
    pub loss_mask: Vec<bool>,
}

impl TaskInstance {
    /// `[CLS] seg0 [SEP] seg1 [SEP] ...`, with segment ids counting segments.
    pub fn from_segments(task_id: u16, segments: &[&[u32]]) -> Self {
        let mut token_ids = vec![CLS];
        let mut segment_ids = vec![0];
        for (s, seg) in segments.iter().enumerate() {
            token_ids.extend_from_slice(seg);
            token_ids.push(SEP);
            segment_ids.extend(std::iter::repeat_n(s as u16, seg.len() + 1));
        }
        let len = token_ids.len();
        TaskInstance {
            task_id,
            position_ids: (0..len as u16).collect(),
            segment_ids,
            attention_length: len,
            token_labels: BTreeMap::new(),
            sentence_label: None,
            loss_mask: vec![false; len],
            token_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn kind(&self) -> Option<TaskKind> {
        TaskKind::from_id(self.task_id)
    }

    /// Whether position `i` holds a real (non-special, non-pad) token.
    pub fn is_real(&self, i: usize) -> bool {
        i < self.attention_length && !matches!(self.token_ids[i], CLS | SEP | PAD)
    }

    /// Appends `[PAD]` up to `len`.
    pub fn pad_to(&mut self, len: usize) {
        while self.token_ids.len() < len {
            let last_seg = *self.segment_ids.last().unwrap_or(&0);
            self.token_ids.push(PAD);
            self.segment_ids.push(last_seg);
            self.position_ids.push(self.position_ids.len() as u16);
            self.loss_mask.push(false);
            for labels in self.token_labels.values_mut() {
                labels.push(None);
            }
        }
    }

    /// Positions scored for the instance's own task.
    pub fn scored_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.loss_mask[i]).collect()
    }

    pub fn validate(&self, max_seq_len: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let n = self.token_ids.len();
        if n < 2 || n > max_seq_len {
            return bad(format!("length {n} outside 2..={max_seq_len}"));
        }
        if self.segment_ids.len() != n || self.position_ids.len() != n || self.loss_mask.len() != n {
            return bad("sequence lengths differ".into());
        }
        if self.token_ids[0] != CLS {
            return bad("position 0 is not [CLS]".into());
        }
        let real = self.attention_length;
        if real < 2 || real > n || self.token_ids[real - 1] != SEP {
            return bad(format!("attention length {real} does not end at [SEP]"));
        }
        if self.token_ids[real..].iter().any(|&t| t != PAD) {
            return bad("non-pad token after attention length".into());
        }
        if self.token_ids[..real].contains(&PAD) {
            return bad("[PAD] inside attended region".into());
        }
        for i in 1..real {
            let (prev, cur) = (self.segment_ids[i - 1], self.segment_ids[i]);
            let after_sep = self.token_ids[i - 1] == SEP;
            if cur != prev && !(after_sep && cur == prev + 1) {
                return bad(format!("segment id changes at {i} without a [SEP]"));
            }
        }
        if self.position_ids.iter().enumerate().any(|(i, &p)| p as usize != i) {
            return bad("position ids are not 0..len".into());
        }
        for labels in self.token_labels.values() {
            if labels.len() != n {
                return bad("token label length differs".into());
            }
            if (0..n).any(|i| labels[i].is_some() && !self.is_real(i)) {
                return bad("label on a special or pad position".into());
            }
        }
        if (0..n).any(|i| self.loss_mask[i] && !self.is_real(i)) {
            return bad("loss mask on a special or pad position".into());
        }
        if self.token_labels.is_empty() && self.sentence_label.is_none() {
            return bad("instance carries no labels".into());
        }
        let kind = self
            .kind()
            .ok_or_else(|| Error::InvalidInstance(format!("unknown task id {}", self.task_id)))?;
        match kind.level() {
            LossLevel::Token => {
                let labels = self
                    .token_labels
                    .get(&self.task_id)
                    .ok_or_else(|| Error::InvalidInstance("token task without its own labels".into()))?;
                if (0..n).any(|i| labels[i].is_some() != self.loss_mask[i]) {
                    return bad("loss mask disagrees with labels".into());
                }
            }
            LossLevel::Sentence => {
                if self.sentence_label.is_none() {
                    return bad("sentence task without a sentence label".into());
                }
            }
        }
        Ok(())
    }

    /// Binary payload (without the length prefix).
    pub fn encode(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(16 + n * 13);
        out.extend_from_slice(&self.task_id.to_le_bytes());
        out.extend_from_slice(&(n as u16).to_le_bytes());
        out.extend_from_slice(&(self.attention_length as u16).to_le_bytes());
        for &t in &self.token_ids {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for &s in &self.segment_ids {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for &p in &self.position_ids {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend(self.loss_mask.iter().map(|&m| m as u8));
        out.push(self.sentence_label.is_some() as u8);
        out.extend_from_slice(&self.sentence_label.unwrap_or(0).to_le_bytes());
        out.push(self.token_labels.len() as u8);
        for (&head, labels) in &self.token_labels {
            out.extend_from_slice(&head.to_le_bytes());
            for l in labels {
                let v: i32 = l.map_or(-1, |x| x as i32);
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let task_id = r.u16()?;
        let n = r.u16()? as usize;
        let attention_length = r.u16()? as usize;
        let token_ids = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
        let segment_ids = (0..n).map(|_| r.u16()).collect::<Result<_>>()?;
        let position_ids = (0..n).map(|_| r.u16()).collect::<Result<_>>()?;
        let loss_mask = (0..n).map(|_| r.u8().map(|b| b != 0)).collect::<Result<_>>()?;
        let has_label = r.u8()? != 0;
        let label = r.u32()?;
        let heads = r.u8()?;
        let mut token_labels = BTreeMap::new();
        for _ in 0..heads {
            let head = r.u16()?;
            let labels = (0..n)
                .map(|_| r.i32().map(|v| u32::try_from(v).ok()))
                .collect::<Result<_>>()?;
            token_labels.insert(head, labels);
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidInstance("trailing bytes in record".into()));
        }
        Ok(TaskInstance {
            task_id,
            token_ids,
            segment_ids,
            position_ids,
            attention_length,
            token_labels,
            sentence_label: has_label.then_some(label),
            loss_mask,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::InvalidInstance("truncated record".into()))?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFormat {
    Binary,
    /// One JSON object per line.
    Text,
}

pub fn encode_instances(instances: &[TaskInstance], format: InstanceFormat) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        InstanceFormat::Binary => {
            out.extend_from_slice(&INSTANCE_MAGIC);
            out.push(INSTANCE_VERSION);
            for inst in instances {
                let payload = inst.encode();
                out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
                out.extend_from_slice(&payload);
            }
        }
        InstanceFormat::Text => {
            for inst in instances {
                serde_json::to_writer(&mut out, inst)?;
                out.push(b'\n');
            }
        }
    }
    Ok(out)
}

pub fn decode_instances(bytes: &[u8]) -> Result<Vec<TaskInstance>> {
    if bytes.starts_with(&INSTANCE_MAGIC) {
        if bytes.get(4) != Some(&INSTANCE_VERSION) {
            return Err(Error::InvalidInstance(format!(
                "unsupported instance file version {:?}",
                bytes.get(4)
            )));
        }
        let mut pos = 5;
        let mut out = Vec::new();
        while pos < bytes.len() {
            let len_bytes = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| Error::InvalidInstance("truncated length prefix".into()))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let payload = bytes
                .get(pos..pos + len)
                .ok_or_else(|| Error::InvalidInstance("truncated record".into()))?;
            out.push(TaskInstance::decode(payload)?);
            pos += len;
        }
        Ok(out)
    } else {
        let mut out = Vec::new();
        for line in BufReader::new(bytes).lines() {
            let line = line.map_err(|e| Error::InvalidInstance(e.to_string()))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[TaskInstance], format: InstanceFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_instances(instances, format)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads either format, detected by the magic bytes.
pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<TaskInstance>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_instances(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TaskInstance {
        let mut inst = TaskInstance::from_segments(TaskKind::Capitalization.id(), &[&[7, 8, 9]]);
        let labels: Vec<_> = (0..inst.len()).map(|i| inst.is_real(i).then_some(1)).collect();
        inst.loss_mask = labels.iter().map(Option::is_some).collect();
        inst.token_labels.insert(inst.task_id, labels);
        inst
    }

    #[test]
    fn from_segments_layout() {
        let inst = TaskInstance::from_segments(4, &[&[10, 11], &[12]]);
        assert_eq!(inst.token_ids, vec![CLS, 10, 11, SEP, 12, SEP]);
        assert_eq!(inst.segment_ids, vec![0, 0, 0, 0, 1, 1]);
        assert_eq!(inst.position_ids, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn validate_catches_violations() {
        let inst = sample();
        inst.validate(16).unwrap();
        assert!(inst.validate(4).is_err());
        let mut bad = inst.clone();
        bad.loss_mask[0] = true;
        assert!(bad.validate(16).is_err());
        let mut bad = inst.clone();
        bad.token_labels.clear();
        assert!(bad.validate(16).is_err());
        let mut padded = inst;
        padded.pad_to(8);
        padded.validate(16).unwrap();
    }

    #[test]
    fn bad_magic_version_rejected() {
        let mut bytes = encode_instances(&[sample()], InstanceFormat::Binary).unwrap();
        bytes[4] = 9;
        assert!(decode_instances(&bytes).is_err());
        let bytes = encode_instances(&[sample()], InstanceFormat::Binary).unwrap();
        assert!(decode_instances(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(
            ids in proptest::collection::vec(5u32..500, 1..20),
            label in proptest::option::of(0u32..9),
            pad in 0usize..4,
        ) {
            let mut inst = TaskInstance::from_segments(3, &[&ids]);
            let toks: Vec<_> = (0..inst.len()).map(|i| inst.is_real(i).then_some(i as u32)).collect();
            inst.token_labels.insert(1, toks);
            inst.sentence_label = label;
            inst.pad_to(inst.len() + pad);
            for format in [InstanceFormat::Binary, InstanceFormat::Text] {
                let bytes = encode_instances(std::slice::from_ref(&inst), format).unwrap();
                prop_assert_eq!(&decode_instances(&bytes).unwrap(), &vec![inst.clone()]);
            }
        }
    }
}
