//! Scene documents: JSON with a format tag and schema version.

use std::path::Path;

use chanex_core::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

pub const FORMAT: &str = "chanex-scene";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    scene: Scene,
}

pub fn to_json(scene: &Scene) -> Result<String> {
    let doc = Document { format: FORMAT.into(), version: VERSION, scene: scene.clone() };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::format("scene", e.to_string()))
}

pub fn from_json(text: &str) -> Result<Scene> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::format("scene", e.to_string()))?;
    if doc.format != FORMAT {
        return Err(Error::format("scene", format!("format is {:?}, expected {FORMAT:?}", doc.format)));
    }
    if doc.version != VERSION {
        return Err(Error::format("scene", format!("unsupported schema version {}", doc.version)));
    }
    Ok(doc.scene)
}

pub fn write(path: &Path, scene: &Scene) -> Result<()> {
    fsutil::write_atomic(path, to_json(scene)?.as_bytes())
}

pub fn read(path: &Path) -> Result<Scene> {
    from_json(&fsutil::read_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chanex_core::scene::{generate_scene, SceneParams};

    #[test]
    fn round_trip() {
        let scene = generate_scene(4, &SceneParams { num_terminals: 5, ..SceneParams::default() }).unwrap();
        assert_eq!(from_json(&to_json(&scene).unwrap()).unwrap(), scene);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let scene = generate_scene(4, &SceneParams { num_terminals: 1, ..SceneParams::default() }).unwrap();
        let text = to_json(&scene).unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(from_json(&text).is_err());
    }
}
