//! Property suites for chunking, record parsing, graph merging, similarity
//! and the alias stand-in.

use std::collections::BTreeSet;

use casegraph_core::entity::canonical_name;
use casegraph_core::extraction::{
    parse_records, serialize_records, Delimiters, RawEntityRecord, RawRelationshipRecord,
};
use casegraph_core::gateway::{mock_alias_resolver, AliasTable};
use casegraph_core::graph::{build_graph, KnowledgeGraph};
use casegraph_core::ingest::{chunk_spans, chunk_text};
use casegraph_core::metrics::{cluster_duplicates, duplicate_count, partial_ratio, Overrides};
use casegraph_core::runner::ConfigId;
use casegraph_core::EntityType;
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Oracles

/// Insert/delete edit distance by the textbook quadratic table.
fn indel_table(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = if a[i - 1] == b[j - 1] {
                d[i - 1][j - 1]
            } else {
                1 + d[i - 1][j].min(d[i][j - 1])
            };
        }
    }
    d[a.len()][b.len()]
}

/// Max over every non-empty substring of the longer string (both directions
/// when lengths tie).
fn partial_oracle(a: &str, b: &str) -> f64 {
    let a: Vec<char> = canonical_name(a).chars().collect();
    let b: Vec<char> = canonical_name(b).chars().collect();
    let one = |s: &[char], l: &[char]| -> f64 {
        if s.is_empty() {
            return 100.0;
        }
        let mut best = 0.0f64;
        for i in 0..l.len() {
            for j in i + 1..=l.len() {
                let t = s.len() + (j - i);
                let d = indel_table(s, &l[i..j]);
                best = best.max(100.0 * (1.0 - d as f64 / t as f64));
            }
        }
        best
    };
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => one(&a, &b),
        std::cmp::Ordering::Greater => one(&b, &a),
        std::cmp::Ordering::Equal => one(&a, &b).max(one(&b, &a)),
    }
}

/// Components by repeated relabeling over all qualifying pairs.
fn components_oracle(g: &KnowledgeGraph, threshold: f64) -> usize {
    let keys: Vec<_> = g.nodes.keys().collect();
    let mut label: Vec<usize> = (0..keys.len()).collect();
    loop {
        let mut changed = false;
        for i in 0..keys.len() {
            for j in 0..keys.len() {
                if i != j
                    && keys[i].node_type == keys[j].node_type
                    && partial_oracle(&keys[i].name, &keys[j].name) >= threshold
                    && label[j] < label[i]
                {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let distinct: BTreeSet<usize> = label.iter().copied().collect();
    keys.len() - distinct.len()
}

// ---------------------------------------------------------------------------
// Generators

const NAMES: [&str; 8] = [
    "San Antonio",
    "Antonio",
    "Richard Stone",
    "Stone",
    "Laredo",
    "I-35",
    "Nissan Maxima",
    "Gulf Cartel",
];

fn entity_type() -> impl Strategy<Value = EntityType> {
    prop::sample::select(EntityType::ALL.to_vec())
}

fn entity() -> impl Strategy<Value = RawEntityRecord> {
    (prop::sample::select(NAMES.to_vec()), entity_type(), "[a-z]{1,6}", 0usize..4)
        .prop_map(|(n, t, d, c)| RawEntityRecord::new(n, t, &d, c))
}

fn relationship() -> impl Strategy<Value = RawRelationshipRecord> {
    (
        prop::sample::select(NAMES.to_vec()),
        prop::sample::select(NAMES.to_vec()),
        "[a-z]{1,6}",
        prop::option::of(0u8..=10),
        0usize..4,
    )
        .prop_map(|(s, t, d, w, c)| RawRelationshipRecord::new(s, t, &d, w.map(f64::from), c))
}

fn records() -> impl Strategy<Value = (Vec<RawEntityRecord>, Vec<RawRelationshipRecord>)> {
    (prop::collection::vec(entity(), 0..25), prop::collection::vec(relationship(), 0..25))
}

fn build(e: &[RawEntityRecord], r: &[RawRelationshipRecord]) -> KnowledgeGraph {
    build_graph(e, r, "case01", ConfigId::Corekg)
}

fn same_graph(a: &KnowledgeGraph, b: &KnowledgeGraph) -> bool {
    a.nodes == b.nodes && a.edges == b.edges
}

fn word() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{0,7}"
}

fn clean_name() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

fn clean_desc() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,8}", 1..6).prop_map(|w| w.join(" "))
}

// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunk_spans_cover_and_stride(n in 0usize..3000, size in 1usize..400, frac in 0.0f64..1.0) {
        let overlap = ((size as f64) * frac) as usize % size;
        let spans = chunk_spans(n, size, overlap).unwrap();
        if n == 0 {
            prop_assert!(spans.is_empty());
            return Ok(());
        }
        prop_assert_eq!(spans[0].start, 0);
        prop_assert_eq!(spans.last().unwrap().end, n);
        for w in spans.windows(2) {
            prop_assert_eq!(w[1].start - w[0].start, size - overlap);
            prop_assert_eq!(w[0].len(), size);
            prop_assert_eq!(w[0].end - w[1].start, overlap);
        }
        for s in &spans {
            prop_assert!(!s.is_empty() && s.len() <= size);
        }
    }

    #[test]
    fn chunk_text_matches_tokens(words in prop::collection::vec("[a-z]{1,5}", 0..80), size in 2usize..20) {
        let text = words.join("  ");
        let chunks = chunk_text(&text, size, size / 2).unwrap();
        for c in &chunks {
            let toks: Vec<&str> = c.text.split_whitespace().collect();
            prop_assert_eq!(&toks[..], &words[c.start..c.end]);
        }
    }

    #[test]
    fn parser_is_total(text in ".{0,300}", chunk in 0usize..5) {
        let out = parse_records(&text, &Delimiters::default(), chunk);
        for e in &out.entities {
            prop_assert_eq!(e.chunk_id, chunk);
            prop_assert!(!e.normalized_name.is_empty());
        }
        for r in &out.relationships {
            prop_assert!(r.source_normalized != r.target_normalized);
        }
    }

    #[test]
    fn parser_is_total_on_record_noise(
        parts in prop::collection::vec(prop::sample::select(vec![
            "(", ")", "\"entity\"", "\"relationship\"", "<|>", "##", "<|COMPLETE|>", "PERSON", "Stone", "x", " ", "\n", "1.5",
        ]), 0..60),
    ) {
        let text: String = parts.concat();
        let out = parse_records(&text, &Delimiters::default(), 0);
        prop_assert!(out.record_count() <= text.matches("##").count() + 1);
    }

    #[test]
    fn serialize_parse_round_trip(
        ents in prop::collection::vec((clean_name(), entity_type(), clean_desc()), 0..8),
        rels in prop::collection::vec((clean_name(), clean_name(), clean_desc(), prop::option::of(0u8..=10)), 0..8),
    ) {
        let chunk = 3;
        let ents: Vec<_> = ents.iter().map(|(n, t, d)| RawEntityRecord::new(n, *t, d, chunk)).collect();
        let rels: Vec<_> = rels
            .iter()
            .filter(|(s, t, _, _)| canonical_name(s) != canonical_name(t))
            .map(|(s, t, d, w)| RawRelationshipRecord::new(s, t, d, w.map(f64::from), chunk))
            .collect();
        let d = Delimiters::default();
        let out = parse_records(&serialize_records(&ents, &rels, &d), &d, chunk);
        prop_assert!(out.warnings.is_empty(), "{:?}", out.warnings);
        prop_assert_eq!(out.entities, ents);
        prop_assert_eq!(out.relationships, rels);
    }

    #[test]
    fn merge_is_idempotent((e, r) in records()) {
        let g = build(&e, &r);
        let (e2, r2) = g.to_records();
        prop_assert!(same_graph(&g, &build(&e2, &r2)));
    }

    #[test]
    fn merge_ignores_input_order(
        (e, r) in records().prop_flat_map(|(e, r)| (Just(e).prop_shuffle(), Just(r).prop_shuffle())),
    ) {
        let mut e_sorted = e.clone();
        e_sorted.sort_by(|a, b| (a.chunk_id, &a.name, &a.description).cmp(&(b.chunk_id, &b.name, &b.description)));
        let mut r_rev = r.clone();
        r_rev.reverse();
        prop_assert!(same_graph(&build(&e, &r), &build(&e_sorted, &r_rev)));
    }

    #[test]
    fn degrees_sum_to_twice_edges((e, r) in records()) {
        let g = build(&e, &r);
        let total: usize = g.nodes.values().map(|n| n.degree).sum();
        prop_assert_eq!(total, 2 * g.edge_count());
        for edge in &g.edges {
            prop_assert!(edge.source != edge.target);
            prop_assert!(g.nodes.contains_key(&edge.source) && g.nodes.contains_key(&edge.target));
        }
    }

    #[test]
    fn one_node_per_name_and_type((e, r) in records()) {
        let g = build(&e, &r);
        let keys: BTreeSet<_> = e.iter().map(|x| (x.normalized_name.clone(), x.entity_type)).collect();
        let typed = g.nodes.values().filter(|n| !n.is_placeholder()).count();
        prop_assert_eq!(typed, keys.len());
    }

    #[test]
    fn partial_ratio_matches_oracle(a in "[AB C]{0,12}", b in "[AB C]{0,12}") {
        prop_assert_eq!(partial_ratio(&a, &b), partial_oracle(&a, &b));
    }

    #[test]
    fn duplicates_match_component_oracle(
        names in prop::collection::vec(("[ABC]{1,6}", 0usize..2), 1..12),
        threshold in prop::sample::select(vec![60.0, 75.0, 90.0]),
    ) {
        let e: Vec<_> = names
            .iter()
            .map(|(n, t)| RawEntityRecord::new(n, EntityType::ALL[*t], "d", 0))
            .collect();
        let g = build(&e, &[]);
        let clusters = cluster_duplicates(&g, threshold, &Overrides::default()).unwrap();
        prop_assert_eq!(duplicate_count(&clusters), components_oracle(&g, threshold));
    }

    #[test]
    fn alias_resolution_is_idempotent(
        words in prop::collection::vec(prop::sample::select(vec!["stone", "the driver", "laredo", "x", "Stone", "THE DRIVER"]), 0..20),
        map in prop::collection::vec((prop::sample::select(vec!["stone", "the driver", "laredo"]), 0usize..3), 0..4),
    ) {
        let mut table = AliasTable::new();
        for (surface, k) in &map {
            table.insert(EntityType::Person, surface, &format!("Canonical{k}"));
        }
        let text = words.join(" ");
        let once = mock_alias_resolver(&text, &table, EntityType::Person);
        let twice = mock_alias_resolver(&once, &table, EntityType::Person);
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn substring_names_stay_distinct_nodes() {
    let e = vec![
        RawEntityRecord::new("SAN ANTONIO", EntityType::Location, "city", 0),
        RawEntityRecord::new("ANTONIO", EntityType::Location, "short form", 1),
        RawEntityRecord::new("San  Antonio ", EntityType::Location, "again", 2),
    ];
    let g = build(&e, &[]);
    assert_eq!(g.node_count(), 2);
    let sa = g.nodes.keys().find(|k| k.name == "SAN ANTONIO").unwrap();
    assert_eq!(g.nodes[sa].mentions.len(), 2);
}
