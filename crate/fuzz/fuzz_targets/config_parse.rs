#![no_main]

use f4tele::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ConfigFile::parse(text) else { return };
    // Whatever parses must print to text that parses back to the same print.
    let printed = cfg.to_string();
    let again = ConfigFile::parse(&printed).expect("printed config parses");
    assert_eq!(printed, again.to_string());
    let _ = cfg.build();
});
