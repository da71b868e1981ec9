//! The checked-in instance files must stay in sync with the built-in
//! examples.

use gevrey_core::instance::{examples, instance_from_json};

#[test]
fn instance_files_match_builtin_examples() {
    for (name, inst) in [
        ("inst_a", examples::inst_a()),
        ("inst_a0", examples::inst_a0()),
        ("inst_b", examples::inst_b()),
    ] {
        let path = format!("{}/../../instances/{}.json", env!("CARGO_MANIFEST_DIR"), name);
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
        let parsed = instance_from_json(&text).unwrap();
        assert_eq!(parsed, inst, "{name} drifted from the built-in example");
    }
}
