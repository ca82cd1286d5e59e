use std::path::Path;

use super::instance::PerLMInstance;
use crate::error::Result;
use crate::jsonl;

/// One JSON object per line, keys named after the instance fields.
pub fn serialize_instance(inst: &PerLMInstance) -> String {
    jsonl::to_line(inst)
}

pub fn deserialize_instance(line: &str) -> Result<PerLMInstance> {
    jsonl::parse_line(line, 1)
}

pub fn write_instances<'a>(path: impl AsRef<Path>, instances: impl IntoIterator<Item = &'a PerLMInstance>) -> Result<()> {
    jsonl::write_jsonl(path, instances)
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<PerLMInstance>> {
    jsonl::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::super::instance::RowKind;
    use super::*;
    use crate::error::Error;

    fn sample() -> PerLMInstance {
        PerLMInstance {
            input_ids: vec![2, 6, 5, 3, 0],
            segment_ids: vec![0, 0, 0, 0, 0],
            pad_mask: vec![false, false, false, false, true],
            pred_positions: vec![1, 2],
            position_targets: vec![2, 1],
            vocab_targets: vec![5, 6],
            original_ids: vec![2, 5, 6, 3, 0],
            row_kinds: vec![RowKind::Shuffled, RowKind::Shuffled],
        }
    }

    #[test]
    fn round_trip() {
        let inst = sample();
        let line = serialize_instance(&inst);
        assert!(line.contains("\"position_targets\":[2,1]"));
        assert!(!line.contains('\n'));
        assert_eq!(deserialize_instance(&line).unwrap(), inst);
    }

    #[test]
    fn truncated_line_reports_offset() {
        let line = serialize_instance(&sample());
        let cut = &line[..line.len() / 2];
        match deserialize_instance(cut) {
            Err(Error::Parse { line, offset, .. }) => {
                assert_eq!(line, 1);
                assert!(offset <= cut.len());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let line = serialize_instance(&sample()).replacen('{', "{\"extra\":1,", 1);
        assert!(deserialize_instance(&line).is_err());
    }
}
