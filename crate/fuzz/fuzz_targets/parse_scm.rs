#![no_main]
use causal_prompt::scm::{joint_table, parse_scm, render_scm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scm) = parse_scm(text) {
        // A validated model round-trips and its joint sums to one.
        let reparsed = parse_scm(&render_scm(&scm)).expect("rendered model reparses");
        assert_eq!(reparsed, scm);
        if let Ok(joint) = joint_table(&scm, None) {
            assert!((joint.total() - 1.0).abs() < 1e-9);
        }
    }
});
