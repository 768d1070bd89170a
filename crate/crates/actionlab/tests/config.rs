use std::collections::BTreeMap;

use actionlab::config::{ConfigError, Value};
use actionlab::{find, Params};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-1e6f64..1e6).prop_map(Value::Number),
        "[a-z][a-z0-9 _]{0,8}".prop_map(Value::Text),
    ]
}

proptest! {
    #[test]
    fn rendered_files_parse_back(entries in prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", value(), 0..6)) {
        let mut text = String::from("# generated\n\n");
        for (k, v) in &entries {
            text.push_str(&format!("{k} = {v}   # trailing\n"));
        }
        let parsed = Params::parse(&text).unwrap();
        let back: BTreeMap<String, Value> = parsed.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        prop_assert_eq!(back, entries);
    }
}

#[test]
fn hash_inside_quotes_is_text() {
    let p = Params::parse("V = \"cos#1\" # comment").unwrap();
    assert_eq!(p.get("V"), Some(&Value::Text("cos#1".into())));
}

#[test]
fn duplicates_are_rejected() {
    let err = Params::parse("n = 1\nn = 2\n").unwrap_err();
    assert_eq!(err, ConfigError::Duplicate { key: "n".into() });
}

#[test]
fn overrides_win_over_the_file() {
    let file = Params::parse("n = 64\nV = \"sin\"\n").unwrap();
    let cli = Params::from_overrides(&["n=16"]).unwrap();
    let merged = file.merged(&cli);
    let resolved = find("tonelli_pendulum").unwrap().resolve(&merged).unwrap();
    let rendered = resolved.rendered();
    assert_eq!(rendered["n"], "16");
    assert_eq!(rendered["V"], "sin");
}

#[test]
fn out_of_range_counts_name_the_key() {
    let p = Params::from_overrides(&["n=2"]).unwrap();
    let err = find("exact_form").unwrap().resolve(&p).unwrap_err();
    assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "n"), "{err}");
}
