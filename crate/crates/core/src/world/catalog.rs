use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scene::WorldError;

/// Object split; the three splits partition the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectSplit {
    Seen,
    ValUnseen,
    TestUnseen,
}

impl ObjectSplit {
    pub const ALL: [ObjectSplit; 3] = [ObjectSplit::Seen, ObjectSplit::ValUnseen, ObjectSplit::TestUnseen];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectSplit::Seen => "seen",
            ObjectSplit::ValUnseen => "val-unseen",
            ObjectSplit::TestUnseen => "test-unseen",
        }
    }
}

impl fmt::Display for ObjectSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seen" => Ok(ObjectSplit::Seen),
            "val-unseen" => Ok(ObjectSplit::ValUnseen),
            "test-unseen" => Ok(ObjectSplit::TestUnseen),
            other => Err(format!("unknown object split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectCategory {
    pub name: String,
    pub high_level: String,
    pub split: ObjectSplit,
}

/// Object catalog file: `{"objects": [{"name", "high_level", "split"}]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub objects: Vec<ObjectCategory>,
}

impl Catalog {
    pub fn new(objects: Vec<ObjectCategory>) -> Result<Self, WorldError> {
        let catalog = Self { objects };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), WorldError> {
        let mut names = BTreeSet::new();
        for obj in &self.objects {
            if !names.insert(obj.name.as_str()) {
                return Err(WorldError::Validation(format!("object category {:?} listed twice", obj.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ObjectCategory> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn in_split(&self, split: ObjectSplit) -> impl Iterator<Item = &ObjectCategory> + '_ {
        self.objects.iter().filter(move |o| o.split == split)
    }

    pub fn names_in(&self, split: ObjectSplit) -> BTreeSet<String> {
        self.in_split(split).map(|o| o.name.clone()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let catalog: Catalog = serde_json::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}
