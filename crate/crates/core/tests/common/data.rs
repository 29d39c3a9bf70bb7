use std::path::PathBuf;

use kedge_core::attenuation::ElementLibrary;

pub fn elements_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/elements")
}

pub fn library() -> ElementLibrary {
    ElementLibrary::load(&elements_dir()).expect("vendored element tables load")
}
