use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::model::ResourceId;

use super::QueryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

/// What a request touches, for authorization.
#[derive(Debug, Clone)]
pub enum Access<'a> {
    Directory,
    Resource(&'a ResourceId),
    /// Every resource, e.g. an unfiltered subscription.
    AllResources,
}

#[derive(Debug, Clone)]
enum Scope {
    All,
    Only(HashSet<ResourceId>),
}

/// Static API-key allow-list.
#[derive(Debug, Clone, Default)]
pub struct KeyTable {
    keys: HashMap<String, Scope>,
}

#[derive(Deserialize)]
struct KeyFile {
    #[serde(default, rename = "key")]
    keys: Vec<KeyEntry>,
}

#[derive(Deserialize)]
struct KeyEntry {
    key: String,
    /// Resource ids, or `["*"]` for every resource.
    resources: Vec<String>,
}

impl KeyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse a TOML key table:
    ///
    /// ```toml
    /// [[key]]
    /// key = "secret"
    /// resources = ["*"]
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self, QueryError> {
        let file: KeyFile = toml::from_str(s).map_err(|e| QueryError::Config(e.to_string()))?;
        let mut t = KeyTable::new();
        for k in file.keys {
            if k.resources.iter().any(|r| r == "*") {
                t.allow_all(&k.key);
            } else {
                let ids = k
                    .resources
                    .iter()
                    .map(ResourceId::new)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| QueryError::Config(e.to_string()))?;
                t.allow(&k.key, ids);
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, QueryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QueryError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn allow_all(&mut self, key: &str) {
        self.keys.insert(key.to_string(), Scope::All);
    }

    pub fn allow(&mut self, key: &str, resources: impl IntoIterator<Item = ResourceId>) {
        match self.keys.entry(key.to_string()).or_insert_with(|| Scope::Only(HashSet::new())) {
            Scope::All => {}
            Scope::Only(set) => set.extend(resources),
        }
    }

    pub fn authorize(&self, api_key: &str, request: Access<'_>) -> Decision {
        match (self.keys.get(api_key), request) {
            (None, _) => Decision::Deny,
            (Some(_), Access::Directory) => Decision::Allow,
            (Some(Scope::All), _) => Decision::Allow,
            (Some(Scope::Only(set)), Access::Resource(id)) if set.contains(id) => Decision::Allow,
            _ => Decision::Deny,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allow_list() {
        let t = KeyTable::from_toml_str(
            r#"
            [[key]]
            key = "teacher"
            resources = ["r1"]
            [[key]]
            key = "admin"
            resources = ["*"]
            "#,
        )
        .unwrap();
        let r1 = ResourceId::new("r1").unwrap();
        let r2 = ResourceId::new("r2").unwrap();
        assert_eq!(t.authorize("teacher", Access::Resource(&r1)), Decision::Allow);
        assert_eq!(t.authorize("teacher", Access::Resource(&r2)), Decision::Deny);
        assert_eq!(t.authorize("nobody", Access::Resource(&r1)), Decision::Deny);
        assert_eq!(t.authorize("nobody", Access::Directory), Decision::Deny);
        assert_eq!(t.authorize("admin", Access::Resource(&r2)), Decision::Allow);
        assert_eq!(t.authorize("admin", Access::AllResources), Decision::Allow);
        assert_eq!(t.authorize("teacher", Access::AllResources), Decision::Deny);
    }
}
