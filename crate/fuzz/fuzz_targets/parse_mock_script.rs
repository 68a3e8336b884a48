#![no_main]
use causal_prompt::backend::MockChatBackend;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut mock = MockChatBackend::strict();
    if mock.load_script(text).is_ok() {
        // A loaded script must re-render to a loadable script.
        let rendered = mock.render_script();
        let mut reloaded = MockChatBackend::strict();
        reloaded.load_script(&rendered).expect("rendered script reloads");
    }
});
