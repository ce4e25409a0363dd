//! Triple TSV: one `head<TAB>relation<TAB>tail` line per triple, sorted
//! lexicographically so the same graph always produces the same bytes.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use super::KnowledgeGraph;
use crate::error::{Error, Result};

pub fn serialize_kg(kg: &KnowledgeGraph) -> Vec<u8> {
    let mut lines: Vec<String> = kg
        .triples()
        .iter()
        .map(|t| {
            format!(
                "{}\t{}\t{}",
                kg.entity_label(t.head),
                kg.relation_label(t.relation),
                kg.entity_label(t.tail)
            )
        })
        .collect();
    lines.sort_unstable();
    let mut out = Vec::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for line in lines {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn deserialize_kg(reader: impl BufRead) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        kg.insert(fields[0], fields[1], fields[2]).map_err(|e| match e {
            Error::InvalidLabel(l) => Error::parse(line_no, format!("invalid label {l:?}")),
            other => other,
        })?;
    }
    Ok(kg)
}

pub fn write_kg(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize_kg(kg))?;
    Ok(())
}

pub fn read_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let file = fs::File::open(path)?;
    deserialize_kg(std::io::BufReader::new(file))
}

/// `label<TAB>kind` lines, entities first, each group in handle order.
pub fn write_vocab(kg: &KnowledgeGraph, mut out: impl Write) -> Result<()> {
    for label in kg.entities().labels() {
        writeln!(out, "{label}\tentity")?;
    }
    for label in kg.relations().labels() {
        writeln!(out, "{label}\trelation")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        let kg = KnowledgeGraph::new();
        let bytes = serialize_kg(&kg);
        assert!(bytes.is_empty());
        assert_eq!(deserialize_kg(&bytes[..]).unwrap(), kg);
    }

    #[test]
    fn single_triple_round_trip() {
        let mut kg = KnowledgeGraph::new();
        kg.insert("alg:modDE_0000", "solved", "problem:f1_i1_d5").unwrap();
        let back = deserialize_kg(&serialize_kg(&kg)[..]).unwrap();
        assert_eq!(back, kg);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "a\tr\tb\na\tr\n";
        match deserialize_kg(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "a\tr\tb\tc\n";
        assert!(matches!(deserialize_kg(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(deserialize_kg("\tr\tb\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn vocab_dump_lists_kinds() {
        let mut kg = KnowledgeGraph::new();
        kg.insert("a", "r", "b").unwrap();
        let mut out = Vec::new();
        write_vocab(&kg, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("a\tentity\nb\tentity\n"));
        assert!(text.contains("r\trelation\n"));
        assert!(text.contains("solved\trelation\n"));
    }

    proptest! {
        #[test]
        fn serialization_is_a_fixed_point(edges in prop::collection::vec((0u16..40, 0u8..5, 0u16..40), 100)) {
            let mut kg = KnowledgeGraph::new();
            for (h, r, t) in &edges {
                kg.insert(&format!("entity:{h}"), &format!("rel_{r}"), &format!("entity:{t}")).unwrap();
            }
            let first = serialize_kg(&kg);
            let back = deserialize_kg(&first[..]).unwrap();
            prop_assert!(back == kg);
            prop_assert_eq!(serialize_kg(&back), first.clone());
            prop_assert_eq!(serialize_kg(&kg), first);
        }
    }
}
