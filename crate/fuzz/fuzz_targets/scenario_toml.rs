#![no_main]
use libfuzzer_sys::fuzz_target;
use optipromp::scenario::ScenarioFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = ScenarioFile::parse(text) {
            // Only builtin chains resolve from an empty base directory.
            let _ = file.resolve(std::path::Path::new(""));
        }
    }
});
