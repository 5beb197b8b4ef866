use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One source video. Relative paths resolve against the manifest's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub name: String,
    /// Folder of frame PNGs, processed in file-name order.
    pub frames: PathBuf,
    /// Keypoint text file, one line per frame.
    pub keypoints: PathBuf,
    /// Folder of label PNGs matching `frames` by file name.
    pub parsing: PathBuf,
    pub background: PathBuf,
    /// Overrides the highest-confidence frame when present.
    #[serde(default)]
    pub appearance_index: Option<usize>,
    pub width: usize,
    pub height: usize,
    pub split: Split,
}

/// JSON dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<VideoEntry>,
}

fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// PNG files of a folder in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    pngs_in(dir)
}

impl DatasetManifest {
    /// Reads the manifest and makes every path absolute relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut m.videos {
            for p in [&mut v.frames, &mut v.keypoints, &mut v.parsing, &mut v.background] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        let mut names: Vec<&str> = m.videos.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate video names in manifest"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

impl VideoEntry {
    /// Frame and parsing files, checked to exist and pair up by name.
    pub fn files(&self) -> Result<Vec<(PathBuf, PathBuf)>> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::invalid(format!("bad video name {:?}", self.name)));
        }
        for p in [&self.keypoints, &self.background] {
            if !p.is_file() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing input")));
            }
        }
        let frames = pngs_in(&self.frames)?;
        if frames.is_empty() {
            return Err(Error::invalid(format!("{}: no frames", self.name)));
        }
        frames
            .into_iter()
            .map(|f| {
                let p = self.parsing.join(f.file_name().unwrap());
                if p.is_file() {
                    Ok((f, p))
                } else {
                    Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing parsing map")))
                }
            })
            .collect()
    }
}
