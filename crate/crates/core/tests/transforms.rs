use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use serde_json::{json, Map, Value};
use vizseq::corpus::{backward_transform, forward_transform, infer_schema, normalize_spec, Dataset, FieldKind};

fn field_name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z_ .:/\\\\\"é数-]{1,10}",
        (prop_oneof![Just("num"), Just("str")], 0u8..120).prop_map(|(p, i)| format!("{p}{i}")),
    ]
}

fn value(numeric: bool) -> BoxedStrategy<Value> {
    if numeric {
        prop_oneof![Just(Value::Null), (-10_000i64..10_000).prop_map(|v| json!(v)), "-?[0-9]{1,4}".prop_map(Value::String)]
            .boxed()
    } else {
        prop_oneof![Just(Value::Null), "[a-z ]{0,6}x".prop_map(Value::String)].boxed()
    }
}

fn dataset() -> impl Strategy<Value = Dataset> {
    btree_set(field_name(), 1..=100)
        .prop_flat_map(|names| {
            let names: Vec<String> = names.into_iter().collect();
            (vec(any::<bool>(), names.len()), Just(names), 1usize..4)
        })
        .prop_flat_map(|(kinds, names, rows)| {
            let row = kinds.iter().map(|&k| value(k)).collect::<Vec<_>>();
            (Just(names), vec(row, rows))
        })
        .prop_map(|(names, rows)| {
            let records: Vec<Map<String, Value>> =
                rows.into_iter().map(|vals| names.iter().cloned().zip(vals).collect()).collect();
            Dataset::new("prop", records).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn record_round_trips(ds in dataset()) {
        let schema = infer_schema(&ds).unwrap();
        for rec in &ds.records {
            let (source, mapping) = forward_transform(rec, &schema).unwrap();
            prop_assert!(mapping.is_bijective());
            let back: Value = serde_json::from_str(&backward_transform(&source, &mapping)).unwrap();
            prop_assert_eq!(back, Value::Object(rec.clone()));
        }
    }

    #[test]
    fn spec_field_names_round_trip(ds in dataset(), pick in vec(any::<prop::sample::Index>(), 1..8)) {
        let schema = infer_schema(&ds).unwrap();
        let (_, mapping) = forward_transform(&ds.records[0], &schema).unwrap();
        let encoding: Map<String, Value> = pick
            .iter()
            .enumerate()
            .map(|(i, ix)| {
                let f = ix.get(&schema);
                let ty = if f.kind == FieldKind::Numeric { "quantitative" } else { "nominal" };
                (format!("ch{i}"), json!({"field": f.name, "type": ty}))
            })
            .collect();
        let spec = json!({"mark": "bar", "encoding": encoding});
        let normalized = normalize_spec(&spec, &mapping);
        for def in normalized["encoding"].as_object().unwrap().values() {
            let p = def["field"].as_str().unwrap();
            prop_assert!(mapping.original_for(p).is_some(), "{p} is not a placeholder");
        }
        let text = serde_json::to_string(&normalized).unwrap();
        let back: Value = serde_json::from_str(&backward_transform(&text, &mapping)).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn placeholders_are_indexed_per_kind(ds in dataset()) {
        let schema = infer_schema(&ds).unwrap();
        let (_, mapping) = forward_transform(&ds.records[0], &schema).unwrap();
        let strings = schema.iter().filter(|f| f.kind == FieldKind::String).count();
        for (i, (original, placeholder)) in mapping.pairs.iter().enumerate() {
            let kind = schema.iter().find(|f| &f.name == original).unwrap().kind;
            let expected = if i < strings { format!("str{i}") } else { format!("num{}", i - strings) };
            prop_assert_eq!(kind == FieldKind::String, i < strings);
            prop_assert_eq!(placeholder, &expected);
        }
    }
}
