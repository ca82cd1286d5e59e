use std::fmt::Write as _;

use super::instance::{PerLMInstance, RowKind};
use crate::error::{Error, Result};
use crate::tokenizer::Vocab;

const SUBSCRIPTS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];

fn subscript(n: usize) -> String {
    n.to_string().chars().map(|c| SUBSCRIPTS[c as usize - '0' as usize]).collect()
}

/// `Pos₂ → Pos₃`
pub fn format_arrow(from: usize, to: usize) -> String {
    format!("Pos{} → Pos{}", subscript(from), subscript(to))
}

/// Every `Pos_i → Pos_j` arrow in `text`, in order.
pub fn parse_arrows(text: &str) -> Vec<(usize, usize)> {
    let digit = |c: char| SUBSCRIPTS.iter().position(|&s| s == c);
    let number = |s: &str| -> Option<(usize, usize)> {
        let mut n = 0usize;
        let mut used = 0;
        for c in s.chars() {
            match digit(c) {
                Some(d) => {
                    n = n * 10 + d;
                    used += c.len_utf8();
                }
                None => break,
            }
        }
        (used > 0).then_some((n, used))
    };
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find("Pos") {
        rest = &rest[i + 3..];
        let Some((from, used)) = number(rest) else { continue };
        let after = &rest[used..];
        let Some(tail) = after.strip_prefix(" → Pos") else { continue };
        if let Some((to, used2)) = number(tail) {
            out.push((from, to));
            rest = &tail[used2..];
        }
    }
    out
}

fn tokens(ids: &[u32], pad_mask: &[bool], vocab: Option<&Vocab>) -> String {
    ids.iter()
        .zip(pad_mask)
        .filter(|(_, pad)| !**pad)
        .map(|(&id, _)| vocab.and_then(|v| v.token(id)).map_or_else(|| id.to_string(), String::from))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Original and permuted text followed by one arrow per prediction row.
/// Without a vocabulary ids are printed.
pub fn render_instance(inst: &PerLMInstance, vocab: Option<&Vocab>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "original: {}", tokens(&inst.original_ids, &inst.pad_mask, vocab));
    let _ = writeln!(s, "permuted: {}", tokens(&inst.input_ids, &inst.pad_mask, vocab));
    let _ = writeln!(s, "targets ({} rows, N_real {}):", inst.num_rows(), inst.n_real());
    for ((&p, &t), kind) in inst.pred_positions.iter().zip(&inst.position_targets).zip(&inst.row_kinds) {
        let tag = match kind {
            RowKind::Shuffled => "",
            RowKind::Negative => "  (kept)",
            RowKind::Context => "  (context)",
        };
        let _ = writeln!(s, "  {}{tag}", format_arrow(p, t));
    }
    s
}

/// Fetches instance `index`, reporting the valid range on failure.
pub fn instance_at(instances: &[PerLMInstance], index: usize) -> Result<&PerLMInstance> {
    instances.get(index).ok_or(Error::Index {
        what: "instance file",
        row: 0,
        index,
        limit: instances.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrows_round_trip() {
        assert_eq!(format_arrow(2, 3), "Pos₂ → Pos₃");
        assert_eq!(format_arrow(13, 140), "Pos₁₃ → Pos₁₄₀");
        let text = format!("x {}\n{} y Pos", format_arrow(0, 10), format_arrow(13, 13));
        assert_eq!(parse_arrows(&text), vec![(0, 10), (13, 13)]);
    }
}
