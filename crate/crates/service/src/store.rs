use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use coverdx::kb::load_kb_value;
use coverdx::{KeyPolicy, KnowledgeBase, Violation};
use serde_json::Value;

use crate::ServiceError;

/// Knowledge bases keyed by name, backed by `<name>.json` files.
#[derive(Debug)]
pub struct KbStore {
    dir: PathBuf,
    kbs: RwLock<BTreeMap<String, Arc<KnowledgeBase>>>,
}

pub fn valid_kb_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !name.starts_with('.')
}

impl KbStore {
    /// Loads every `*.json` file in `dir`. Any invalid file aborts the load.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        let mut kbs = BTreeMap::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| ServiceError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let Some(name) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            if !valid_kb_name(&name) {
                tracing::warn!(path = %path.display(), "skipping KB file with an unusable name");
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| ServiceError::io(&path, e))?;
            let loaded = serde_json::from_str::<Value>(&text)
                .map_err(|e| coverdx::Error::Parse(e.to_string()))
                .and_then(|v| load_kb_value(v, KeyPolicy::Strict))
                .map_err(|source| ServiceError::InvalidKb { name: name.clone(), source })?;
            for w in &loaded.warnings {
                tracing::warn!(kb = %name, location = %w.location, "{}", w.message);
            }
            kbs.insert(name, Arc::new(loaded.kb));
        }
        if kbs.is_empty() {
            return Err(ServiceError::NoKnowledgeBase(dir.to_path_buf()));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            kbs: RwLock::new(kbs),
        })
    }

    pub fn get(&self, name: &str) -> Option<Arc<KnowledgeBase>> {
        self.kbs.read().expect("kb store lock").get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.kbs.read().expect("kb store lock").keys().cloned().collect()
    }

    /// Validates, writes and installs a document. Sessions already running
    /// keep the snapshot they started with.
    pub fn put(&self, name: &str, document: Value) -> Result<Vec<Violation>, coverdx::Error> {
        let loaded = load_kb_value(document, KeyPolicy::Strict)?;
        let path = self.dir.join(format!("{name}.json"));
        let tmp = self.dir.join(format!(".{name}.json.tmp"));
        fs::write(&tmp, loaded.kb.to_json())?;
        fs::rename(&tmp, &path)?;
        self.kbs
            .write()
            .expect("kb store lock")
            .insert(name.to_owned(), Arc::new(loaded.kb));
        Ok(loaded.warnings)
    }
}
