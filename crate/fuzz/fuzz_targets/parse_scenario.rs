#![no_main]

use libfuzzer_sys::fuzz_target;
use polytube::scenario::{parse_scenario, validate_inputs};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_scenario(text) {
        let _ = validate_inputs(&s);
        let round = serde_json::to_string(&s).expect("scenario serializes");
        assert_eq!(parse_scenario(&round).expect("round trip parses"), s);
    }
});
