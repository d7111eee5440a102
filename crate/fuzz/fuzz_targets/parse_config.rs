#![no_main]

use cellfree_fl::cli::load::{parse_and_validate, to_toml};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for json in [false, true] {
        if let Ok(config) = parse_and_validate(Some((text, json)), &[], None) {
            let again = parse_and_validate(Some((&to_toml(&config), false)), &[], None)
                .expect("serialized config reparses");
            assert_eq!(again, config);
        }
    }
});
