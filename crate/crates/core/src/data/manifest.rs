//! Plain-text dataset manifest.
//!
//! One dataset per line:
//!
//! ```text
//! # name   key=value ...
//! ijcnn1   path=ijcnn1.tr test=ijcnn1.t format=libsvm split=fixed
//! letter   path=letter.scale format=libsvm split=random_half
//! ```
//!
//! Relative paths resolve against the manifest's directory. When `test` is
//! present the two files are used as-is; otherwise `path` is split.

use std::path::{Path, PathBuf};

use super::{parse_csv, parse_libsvm, split, Dataset, SplitMode, SplitSpec};
use crate::error::{Error, Result};

/// Environment variable naming the manifest file.
pub const MANIFEST_ENV: &str = "KAIMC_MANIFEST";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Libsvm,
    Csv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(DatasetFormat::Libsvm),
            "csv" => Ok(DatasetFormat::Csv),
            _ => Err(Error::unknown("dataset format", s)),
        }
    }
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Libsvm,
        }
    }

    pub fn load(self, path: &Path, name: &str) -> Result<Dataset> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        match self {
            DatasetFormat::Libsvm => parse_libsvm(&bytes, name),
            DatasetFormat::Csv => parse_csv(&bytes, name),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    pub test: Option<PathBuf>,
    pub format: DatasetFormat,
    pub split: SplitMode,
}

impl DatasetEntry {
    /// Loads the train/test pair (unstandardised).
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let data = self.format.load(&self.path, &self.name)?;
        match &self.test {
            Some(test) => {
                let test = self.format.load(test, &self.name)?;
                if test.dim() > data.dim() {
                    return Err(Error::DimensionMismatch { expected: data.dim(), got: test.dim() });
                }
                Ok((data, test))
            }
            None => split(&data, SplitSpec { mode: self.split, seed }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<DatasetEntry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let name = toks.next().expect("nonempty").trim_end_matches(':').to_string();
            let mut path = None;
            let mut test = None;
            let mut format = None;
            let mut split_mode = SplitMode::RandomHalf;
            for tok in toks {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, format!("expected key=value, got `{tok}`")))?;
                match k {
                    "path" | "train" => path = Some(base.join(v)),
                    "test" => test = Some(base.join(v)),
                    "format" => format = Some(v.parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?),
                    "split" => split_mode = v.parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?,
                    _ => return Err(Error::parse(lineno, format!("unknown key `{k}`"))),
                }
            }
            let path = path.ok_or_else(|| Error::parse(lineno, "missing path"))?;
            let format = format.unwrap_or_else(|| DatasetFormat::from_path(&path));
            entries.push(DatasetEntry { name, path, test, format, split: split_mode });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, name: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries() {
        let m = Manifest::parse(
            "# comment\nijcnn1 path=a.tr test=a.t format=libsvm split=fixed\nletter: path=l.csv\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m.entries.len(), 2);
        let e = m.get("ijcnn1").unwrap();
        assert_eq!(e.path, PathBuf::from("/data/a.tr"));
        assert_eq!(e.test, Some(PathBuf::from("/data/a.t")));
        assert_eq!(e.split, SplitMode::Fixed);
        let l = m.get("letter").unwrap();
        assert_eq!(l.format, DatasetFormat::Csv);
        assert_eq!(l.split, SplitMode::RandomHalf);
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(Manifest::parse("x path=a color=red", Path::new(".")).is_err());
        assert!(Manifest::parse("x format=libsvm", Path::new(".")).is_err());
    }
}
