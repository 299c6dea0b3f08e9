//! Dataset manifests:
//!
//! ```text
//! name: ncbi-disease
//! task: NER
//! train: ncbi/train.tsv
//! test: ncbi/test.tsv
//! entity_types: Disease
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{parse_conll, parse_re_rows, CorpusError, Dataset, DatasetName, ReRowFormat, ReSchema, Split, Task};
use crate::kv::KvDocument;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: DatasetName,
    pub task: Task,
    pub paths: BTreeMap<Split, PathBuf>,
    pub entity_types: Vec<String>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let doc = KvDocument::parse(text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
        let m = |e: String| CorpusError::Manifest(e);
        let name: DatasetName = doc
            .require("", "name")
            .map_err(|e| m(e.to_string()))?
            .parse()
            .map_err(m)?;
        let task: Task = doc
            .require("", "task")
            .map_err(|e| m(e.to_string()))?
            .parse()
            .map_err(m)?;
        if let Some(expected) = name.task() {
            if expected != task {
                return Err(CorpusError::TaskMismatch { name, task });
            }
        }
        let mut paths = BTreeMap::new();
        for split in [Split::Train, Split::Test, Split::SeedPool] {
            let value = doc
                .get("", split.as_str())
                .or_else(|| (split == Split::SeedPool).then(|| doc.get("", "seed_pool")).flatten());
            if let Some(p) = value {
                paths.insert(split, base_dir.join(p));
            }
        }
        if paths.is_empty() {
            return Err(m("no train, test or seed-pool path given".into()));
        }
        let entity_types = doc
            .get("", "entity_types")
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        Ok(DatasetManifest {
            name,
            task,
            paths,
            entity_types,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn path(&self, split: Split) -> Option<&Path> {
        self.paths.get(&split).map(PathBuf::as_path)
    }

    /// Load one split. The `|`-delimited RE row form is accepted only for
    /// the seed pool.
    pub fn load_split(&self, split: Split) -> Result<Dataset, CorpusError> {
        let path = self
            .path(split)
            .ok_or_else(|| CorpusError::Manifest(format!("no path for split {split}")))?;
        let bytes = fs::read(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let dataset = match self.task {
            Task::Ner => parse_conll(&bytes)?,
            Task::Re => {
                let rows = parse_re_rows(&bytes, &ReSchema::default())?;
                if split != Split::SeedPool {
                    if let Some(pos) = rows.iter().position(|(_, f)| *f == ReRowFormat::Pipe) {
                        return Err(CorpusError::MalformedLine {
                            line: pos + 1,
                            column: 1,
                            reason: "`|`-delimited rows are only accepted in seed pools".into(),
                        });
                    }
                }
                Dataset::re(rows.into_iter().map(|(e, _)| e).collect())
            }
        };
        dataset.relabel(self.name, split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_paths_relative_to_base() {
        let m = DatasetManifest::parse(
            "name: gad\ntask: RE\ntrain: gad/train.tsv\nseed-pool: gad/seeds.txt\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m.path(Split::Train), Some(Path::new("/data/gad/train.tsv")));
        assert_eq!(m.path(Split::SeedPool), Some(Path::new("/data/gad/seeds.txt")));
        assert_eq!(m.path(Split::Test), None);
    }

    #[test]
    fn entity_types_list() {
        let m = DatasetManifest::parse(
            "name: custom\ntask: NER\ntrain: t\nentity_types: Disease, Chemical\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(m.entity_types, ["Disease", "Chemical"]);
    }

    #[test]
    fn rejects_inconsistent_task() {
        assert!(matches!(
            DatasetManifest::parse("name: gad\ntask: NER\ntrain: x\n", Path::new(".")),
            Err(CorpusError::TaskMismatch { .. })
        ));
        assert!(matches!(
            DatasetManifest::parse("name: gad\ntask: RE\n", Path::new(".")),
            Err(CorpusError::Manifest(_))
        ));
    }

    #[test]
    fn pipe_rows_only_in_seed_pool() {
        let dir = tempfile::tempdir().unwrap();
        let row = "| @GENE$ causes @DISEASE$ | Yes |\n";
        fs::write(dir.path().join("seeds.txt"), row).unwrap();
        fs::write(dir.path().join("train.tsv"), row).unwrap();
        let m = DatasetManifest::parse(
            "name: gad\ntask: RE\ntrain: train.tsv\nseed-pool: seeds.txt\n",
            dir.path(),
        )
        .unwrap();
        assert_eq!(m.load_split(Split::SeedPool).unwrap().len(), 1);
        assert!(matches!(
            m.load_split(Split::Train),
            Err(CorpusError::MalformedLine { line: 1, .. })
        ));
    }
}
