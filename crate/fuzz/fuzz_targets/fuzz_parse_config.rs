//! Fuzz the experiment-config parser: arbitrary bytes must either fail with
//! an error or produce a config whose canonical echo is a fixed point and
//! whose validation returns instead of panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;
use stepadapt::config::{parse_config, validate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = parse_config(text) else {
        return;
    };

    // canonical echo must reparse and re-echo identically
    let echo = config.to_canonical_toml();
    let reparsed = parse_config(&echo).expect("canonical echo must reparse");
    assert_eq!(
        echo,
        reparsed.to_canonical_toml(),
        "echo is not a fixed point"
    );

    // validation may reject, but never panic (force skips the A5/A6 gate so
    // deeper construction paths get exercised)
    let _ = validate(&config, true);
    let _ = validate(&config, false);
});
