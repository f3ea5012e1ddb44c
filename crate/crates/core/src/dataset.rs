//! Class-directory ingestion and the manifest CSV.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::load_image;

/// Grade names in class-index order; also the expected subdirectory names.
pub const CLASS_NAMES: [&str; 5] = ["No_DR", "Mild", "Moderate", "Severe", "Proliferative_DR"];

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    /// Relative to the manifest root, `/`-separated.
    pub path: String,
    pub class_index: usize,
    pub class_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn class_names(&self) -> [&'static str; 5] {
        CLASS_NAMES
    }

    pub fn full_path(&self, r: &Record) -> PathBuf {
        r.path.split('/').fold(self.root.clone(), |p, part| p.join(part))
    }

    /// `(id, class)` pairs for splitting.
    pub fn labels(&self) -> Vec<(u64, usize)> {
        self.records.iter().map(|r| (r.id, r.class_index)).collect()
    }

    /// A manifest of placeholder records with the given class sizes.
    pub fn synthetic(class_sizes: [usize; 5]) -> Self {
        let mut records = Vec::new();
        for (c, &n) in class_sizes.iter().enumerate() {
            for i in 0..n {
                records.push(Record {
                    id: records.len() as u64,
                    path: format!("{}/synthetic_{i:05}.png", CLASS_NAMES[c]),
                    class_index: c,
                    class_name: CLASS_NAMES[c].to_string(),
                });
            }
        }
        Self { root: PathBuf::from("."), records }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Manifest(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_csv()?)
    }

    /// Parses a manifest; relative paths resolve against `root`, which
    /// defaults to the manifest's directory.
    pub fn read_csv(path: &Path, root: Option<&Path>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let root = match root {
            Some(r) => r.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        Self::parse_csv(&bytes, root)
    }

    pub fn parse_csv(bytes: &[u8], root: PathBuf) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(bytes);
        let header = rd.headers().map_err(|e| Error::Manifest(e.to_string()))?;
        if header != vec!["id", "path", "class_index", "class_name"] {
            return Err(Error::Manifest(format!("unexpected header {header:?}")));
        }
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for row in rd.deserialize::<Record>() {
            let r = row.map_err(|e| Error::Manifest(e.to_string()))?;
            if CLASS_NAMES.get(r.class_index) != Some(&r.class_name.as_str()) {
                return Err(Error::Manifest(format!(
                    "record {}: class index {} does not match name `{}`",
                    r.id, r.class_index, r.class_name
                )));
            }
            if !seen.insert(r.id) {
                return Err(Error::Manifest(format!("duplicate id {}", r.id)));
            }
            records.push(r);
        }
        Ok(Self { root, records })
    }
}

fn has_image_extension(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Enumerates `root/<class>/*.{png,jpg,jpeg}`. Records are ordered by class,
/// then by the raw bytes of the file name; undecodable files are logged and
/// skipped.
pub fn ingest(root: &Path) -> Result<DatasetManifest> {
    let mut candidates = Vec::new();
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(name);
        if !dir.is_dir() {
            return Err(Error::MissingClassDirectory(dir));
        }
        let mut files: Vec<_> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && has_image_extension(p))
            .collect();
        files.sort_by(|a, b| {
            let key = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec()).unwrap_or_default();
            key(a).cmp(&key(b))
        });
        candidates.extend(files.into_iter().map(|f| (class, f)));
    }
    let decodable: Vec<bool> = candidates
        .par_iter()
        .map(|(_, p)| match load_image(p) {
            Ok(_) => true,
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                false
            }
        })
        .collect();
    let mut records = Vec::new();
    for ((class, path), ok) in candidates.into_iter().zip(decodable) {
        if !ok {
            continue;
        }
        let file = path.file_name().unwrap_or_default().to_string_lossy();
        records.push(Record {
            id: records.len() as u64,
            path: format!("{}/{file}", CLASS_NAMES[class]),
            class_index: class,
            class_name: CLASS_NAMES[class].to_string(),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetManifest { root: root.to_path_buf(), records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::RasterImage;

    fn make_tree(counts: [usize; 5]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (c, name) in CLASS_NAMES.iter().enumerate() {
            fs::create_dir_all(dir.path().join(name)).unwrap();
            for i in 0..counts[c] {
                RasterImage::filled(4, 4, &[i as u8, 9, 9]).unwrap().save_png(dir.path().join(name).join(format!("b{i}.png"))).unwrap();
            }
        }
        dir
    }

    #[test]
    fn ingest_orders_and_numbers() {
        let dir = make_tree([2, 1, 1, 1, 1]);
        fs::write(dir.path().join("Mild/notes.txt"), "x").unwrap();
        fs::write(dir.path().join("Mild/broken.png"), b"\x89PNG\r\n").unwrap();
        let m = ingest(dir.path()).unwrap();
        assert_eq!(m.records.len(), 6);
        assert_eq!(m.records.iter().map(|r| r.id).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        assert_eq!(m.records[0].path, "No_DR/b0.png");
        assert_eq!(m.records[1].path, "No_DR/b1.png");
        assert_eq!(m.records[2].class_name, "Mild");
        assert!(m.full_path(&m.records[5]).is_file());
        assert_eq!(ingest(dir.path()).unwrap().to_csv().unwrap(), m.to_csv().unwrap());
    }

    #[test]
    fn missing_class_dir() {
        let dir = make_tree([1; 5]);
        fs::remove_dir_all(dir.path().join("Severe")).unwrap();
        match ingest(dir.path()) {
            Err(Error::MissingClassDirectory(p)) => assert!(p.ends_with("Severe")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_dataset() {
        let dir = make_tree([0; 5]);
        assert!(matches!(ingest(dir.path()), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = DatasetManifest::synthetic([2, 0, 1, 0, 1]);
        let csv = m.to_csv().unwrap();
        assert!(csv.starts_with(b"id,path,class_index,class_name\n0,No_DR/synthetic_00000.png,0,No_DR\n"));
        let back = DatasetManifest::parse_csv(&csv, PathBuf::from(".")).unwrap();
        assert_eq!(back, m);
        let bad = b"id,path,class_index,class_name\n0,a.png,1,No_DR\n";
        assert!(matches!(DatasetManifest::parse_csv(bad, PathBuf::new()), Err(Error::Manifest(_))));
        let dup = b"id,path,class_index,class_name\n0,a.png,0,No_DR\n0,b.png,0,No_DR\n";
        assert!(matches!(DatasetManifest::parse_csv(dup, PathBuf::new()), Err(Error::Manifest(_))));
    }
}
