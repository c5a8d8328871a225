//! OTB-style sequences: `img/` with one image per frame and `groundtruth_rect.txt`.

use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::Frame;
use crate::tracker::BBox;

const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "bmp", "JPG"];

/// Frame storage: image files on disk or frames already in memory.
#[derive(Clone, Debug)]
pub enum Frames {
    Paths(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

impl Frames {
    pub fn len(&self) -> usize {
        match self {
            Frames::Paths(p) => p.len(),
            Frames::Memory(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Result<Cow<'_, Frame>> {
        match self {
            Frames::Paths(p) => {
                let path = p
                    .get(index)
                    .ok_or_else(|| Error::invalid(format!("frame {index} out of range")))?;
                Ok(Cow::Owned(Frame::load(path)?))
            }
            Frames::Memory(f) => f
                .get(index)
                .map(Cow::Borrowed)
                .ok_or_else(|| Error::invalid(format!("frame {index} out of range"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    pub frames: Frames,
    pub boxes: Vec<BBox>,
    pub attributes: Vec<String>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Frames, boxes: Vec<BBox>) -> Result<Self> {
        let name = name.into();
        if frames.len() != boxes.len() {
            return Err(Error::invalid(format!(
                "sequence {name}: {} frames but {} ground-truth boxes",
                frames.len(),
                boxes.len()
            )));
        }
        if frames.is_empty() {
            return Err(Error::invalid(format!("sequence {name} has no frames")));
        }
        Ok(Self {
            name,
            frames,
            boxes,
            attributes: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Parse ground truth: one `x,y,w,h` box per non-empty line, separated by commas, tabs
/// or spaces, in 1-indexed pixel coordinates. Boxes are returned 0-indexed.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split([',', '\t', ' '])
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|e| err(format!("invalid number {f:?}: {e}")))?;
        }
        let b = BBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]);
        if !b.is_valid() {
            return Err(err(format!("box must have positive size, got {line:?}")));
        }
        boxes.push(b);
    }
    Ok(boxes)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Load one sequence directory.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();
    let gt_path = dir.join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let boxes = parse_groundtruth(&text, &gt_path)?;
    let frames = list_images(&dir.join("img"))?;
    let mut seq = Sequence::new(name, Frames::Paths(frames), boxes)?;
    let attr_path = dir.join("attributes.txt");
    if let Ok(text) = fs::read_to_string(&attr_path) {
        seq.attributes = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
    }
    Ok(seq)
}

/// Every subdirectory holding a `groundtruth_rect.txt`, sorted by name. A directory that
/// is itself a sequence is returned alone.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sequence>> {
    if dir.join("groundtruth_rect.txt").is_file() {
        return Ok(vec![load_sequence(dir)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("groundtruth_rect.txt").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!(
            "no sequences found under {}",
            dir.display()
        )));
    }
    dirs.iter().map(|d| load_sequence(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_separators() {
        let p = Path::new("gt.txt");
        let a = parse_groundtruth("10,20,30,40\n", p).unwrap();
        assert_eq!(a, vec![BBox::new(9.0, 19.0, 30.0, 40.0)]);
        assert_eq!(parse_groundtruth("10\t20\t30\t40", p).unwrap(), a);
        assert_eq!(parse_groundtruth("10 20 30 40\n\n", p).unwrap(), a);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_groundtruth("1,2,3,4\n1,2,x,4\n", Path::new("gt.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_groundtruth("1,2,3\n", Path::new("gt.txt")).is_err());
        assert!(parse_groundtruth("1,2,0,4\n", Path::new("gt.txt")).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let frames = Frames::Memory(vec![Frame::new(1, 1, 1, vec![0]).unwrap(); 3]);
        let boxes = vec![BBox::new(0.0, 0.0, 1.0, 1.0); 2];
        assert!(Sequence::new("s", frames, boxes).is_err());
    }
}
