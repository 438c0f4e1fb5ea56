use mdocr_core::md_struct::{
    extract_structure, parse_markdown, parse_markdown_bytes, serialize_markdown, structure_accuracy, Block,
    Inline, MarkdownDoc, SpanStyle, StructSeq, StructTag,
};
use proptest::prelude::*;

const TAGS: [StructTag; 4] = [StructTag::H1, StructTag::BulletItem, StructTag::OrderedItem, StructTag::Paragraph];

fn text_piece() -> impl Strategy<Value = String> {
    // Arabic letters and harakat, markup characters, digits and whitespace.
    prop::collection::vec(
        prop::sample::select(vec![
            "ك", "ت", "ا", "ب", "َ", "ّ", "أ", "ة", "*", "\\", "#", ">", "-", "+", "1", "9", ".", ")", " ", "  ",
            "\t", "x", "_", "`", "!",
        ]),
        0..12,
    )
    .prop_map(|parts| parts.concat())
}

fn inline() -> impl Strategy<Value = Inline> {
    prop::collection::vec(
        (prop::sample::select(vec![SpanStyle::Plain, SpanStyle::Bold, SpanStyle::Italic]), text_piece()),
        0..4,
    )
    .prop_map(|spans| Inline::from_spans(spans.iter().map(|(s, t)| (*s, t.as_str()))))
}

fn block() -> impl Strategy<Value = Block> {
    prop_oneof![
        (1u8..=6, inline()).prop_map(|(l, t)| Block::heading(l, t)),
        inline().prop_map(Block::paragraph),
        (0usize..4, inline()).prop_map(|(d, t)| Block::bullet(d, t)),
        (0usize..4, inline()).prop_map(|(d, t)| Block::ordered(d, t)),
        inline().prop_map(Block::blockquote),
    ]
}

fn doc() -> impl Strategy<Value = MarkdownDoc> {
    prop::collection::vec(block(), 0..10).prop_map(MarkdownDoc::new)
}

fn markdownish() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "# ", "## ", "####### ", "- ", "* ", "1. ", "2) ", "> ", "  ", "\t", "\n", "\n\n", "**", "*", "\\", "\\*",
            "كتاب", "نص", "word", "#", "-", "1.", ">", " ", "\r\n",
        ]),
        0..40,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialize_then_parse_gives_normal_form(d in doc()) {
        let text = serialize_markdown(&d);
        prop_assert_eq!(parse_markdown(&text), d.normalized());
    }

    #[test]
    fn parse_is_idempotent_through_serialize(s in markdownish()) {
        let once = parse_markdown(&s);
        let twice = parse_markdown(&serialize_markdown(&once));
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(serialize_markdown(&twice), serialize_markdown(&once));
    }

    #[test]
    fn parsed_documents_are_normalized(s in markdownish()) {
        let d = parse_markdown(&s);
        prop_assert_eq!(d.normalized(), d);
    }

    #[test]
    fn bytes_entry_point_matches_str(s in markdownish()) {
        prop_assert_eq!(parse_markdown_bytes(s.as_bytes()).unwrap(), parse_markdown(&s));
    }

    #[test]
    fn sa_ignores_inline_text(d in doc(), replacement in inline()) {
        let d = d.normalized();
        let rewritten = MarkdownDoc::new(
            d.blocks
                .iter()
                .map(|b| {
                    let t = if replacement.is_empty() { Inline::plain("x") } else { replacement.clone() };
                    match b {
                        Block::Heading { level, .. } => Block::heading(*level, t),
                        Block::Paragraph(_) => Block::paragraph(t),
                        Block::ListItem { kind, depth, .. } => Block::ListItem { kind: *kind, depth: *depth, text: t },
                        Block::Blockquote(_) => Block::blockquote(t),
                    }
                })
                .collect(),
        );
        let a = extract_structure(&d);
        let b = extract_structure(&rewritten);
        prop_assert_eq!(structure_accuracy(&a, &b), 1.0);
    }

    #[test]
    fn sa_bounds_symmetry_identity(
        a in prop::collection::vec(prop::sample::select(TAGS.to_vec()), 0..12),
        b in prop::collection::vec(prop::sample::select(TAGS.to_vec()), 0..12),
    ) {
        let a: StructSeq = a.into_iter().collect();
        let b: StructSeq = b.into_iter().collect();
        let ab = structure_accuracy(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, structure_accuracy(&b, &a));
        prop_assert_eq!(structure_accuracy(&a, &a), 1.0);
    }
}

#[test]
fn invalid_utf8_reports_offset() {
    let mut bytes = "# عنوان\n".as_bytes().to_vec();
    let offset = bytes.len();
    bytes.extend_from_slice(&[0xff, b'a']);
    let err = parse_markdown_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains(&offset.to_string()), "{err}");
}

#[test]
fn struct_seq_serializes_as_tag_names() {
    let seq = extract_structure(&parse_markdown("# a\n\n- b\n1. c\n\n> d\n\ne"));
    let json = serde_json::to_string(&seq).unwrap();
    assert_eq!(json, r#"["H1","BULLET_ITEM","ORDERED_ITEM","BLOCKQUOTE","PARAGRAPH"]"#);
}
