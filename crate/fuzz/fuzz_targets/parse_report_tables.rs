#![no_main]
use causal_prompt::harness::{
    parse_latency_table, parse_quality_table, render_latency_table, render_quality_table,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_quality_table(text) {
        let rendered = render_quality_table(&rows);
        let reparsed = parse_quality_table(&rendered).expect("rendered table reparses");
        assert_eq!(reparsed.len(), rows.len());
    }
    if let Ok(rows) = parse_latency_table(text) {
        let rendered = render_latency_table(&rows);
        let reparsed = parse_latency_table(&rendered).expect("rendered table reparses");
        assert_eq!(reparsed.len(), rows.len());
    }
});
