#![no_main]
use libfuzzer_sys::fuzz_target;
use optipromp::kinematics::ChainFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(chain) = ChainFile::parse_chain(text) {
            let q = chain.clamp(&nalgebra::DVector::zeros(chain.dof()));
            let _ = chain.fk(&q);
        }
    }
});
