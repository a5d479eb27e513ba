#![no_main]
use libfuzzer_sys::fuzz_target;
use optipromp::scene::{ClassFilter, SceneFile};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scene) = SceneFile::parse_scene(text) {
            let goal = scene.goal.position();
            let _ = scene.sdf(&goal, ClassFilter::ALL);
            for i in 0..scene.pushables.len() {
                let _ = scene.drift_side(i);
            }
        }
    }
});
