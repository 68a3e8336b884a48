#![no_main]
use causal_prompt::graph::{parse_graph, serialize_graph, ParseMode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Neither mode may panic on arbitrary input.
    let _ = parse_graph(text, ParseMode::Strict);
    if let Ok(graph) = parse_graph(text, ParseMode::Lenient) {
        // Anything the lenient parser accepts must survive the canonical
        // serialize -> strict-parse round trip unchanged.
        let document = serialize_graph(&graph);
        let reparsed = parse_graph(&document, ParseMode::Strict)
            .expect("serialized graph must reparse strictly");
        assert_eq!(reparsed, graph, "round trip changed the graph");
    }
});
