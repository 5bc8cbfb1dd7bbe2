//! Dataset index: one `key=value` record per line, `#` starts a comment.
//!
//! ```text
//! rgb=rgb/0000.ppm depth=depth/0000.pfm split=train
//! rgb=rgb/0032.ppm depth=depth/0032.pfm split=test protocol=bicubic scale=4 noise_var=0
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{Degradation, Protocol};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub split: Split,
    /// Degradation to apply, when the record pins one.
    pub degradation: Option<Degradation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn parse_line(line: &str, lineno: usize) -> Result<ManifestEntry> {
    let bad = |msg: String| Error::Invalid(format!("manifest line {lineno}: {msg}"));
    let (mut rgb, mut depth, mut split) = (None, None, None);
    let (mut protocol, mut scale, mut noise) = (None, None, None);
    for field in line.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {field:?}")))?;
        match k {
            "rgb" => rgb = Some(PathBuf::from(v)),
            "depth" => depth = Some(PathBuf::from(v)),
            "split" => split = Some(v.parse()?),
            "protocol" => protocol = Some(v.parse::<Protocol>()?),
            "scale" => scale = Some(v.parse::<usize>().map_err(|_| bad(format!("bad scale {v:?}")))?),
            "noise_var" => noise = Some(v.parse::<f64>().map_err(|_| bad(format!("bad noise_var {v:?}")))?),
            _ => return Err(bad(format!("unknown key {k:?}"))),
        }
    }
    let degradation = match (protocol, scale, noise) {
        (None, None, None) => None,
        (p, s, n) => {
            let d = Degradation::default();
            Some(Degradation {
                protocol: p.unwrap_or(d.protocol),
                scale: s.unwrap_or(d.scale),
                noise_var: n.unwrap_or(d.noise_var),
            })
        }
    };
    Ok(ManifestEntry {
        rgb: rgb.ok_or_else(|| bad("missing rgb".into()))?,
        depth: depth.ok_or_else(|| bad("missing depth".into()))?,
        split: split.unwrap_or(Split::Train),
        degradation,
    })
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                entries.push(parse_line(line, i + 1)?);
            }
        }
        Ok(Manifest { entries })
    }

    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            let rgb = e.rgb.to_string_lossy();
            let depth = e.depth.to_string_lossy();
            if rgb.contains(char::is_whitespace) || depth.contains(char::is_whitespace) {
                return Err(Error::Invalid(format!("manifest paths may not contain spaces: {rgb:?}")));
            }
            out.push_str(&format!("rgb={rgb} depth={depth} split={}", e.split));
            if let Some(d) = e.degradation {
                out.push_str(&format!(" protocol={} scale={} noise_var={}", d.protocol, d.scale, d.noise_var));
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Load and resolve relative paths against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Manifest::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            e.rgb = base.join(&e.rgb);
            e.depth = base.join(&e.depth);
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()?).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Manifest {
            entries: vec![
                ManifestEntry {
                    rgb: "rgb/0.ppm".into(),
                    depth: "depth/0.pfm".into(),
                    split: Split::Train,
                    degradation: None,
                },
                ManifestEntry {
                    rgb: "rgb/1.ppm".into(),
                    depth: "depth/1.pfm".into(),
                    split: Split::Test,
                    degradation: Some(Degradation {
                        protocol: Protocol::NearestRb,
                        scale: 8,
                        noise_var: 0.005,
                    }),
                },
            ],
        };
        assert_eq!(Manifest::parse(&m.render().unwrap()).unwrap(), m);
    }

    #[test]
    fn comments_and_blank_lines() {
        let m = Manifest::parse("# header\n\nrgb=a.ppm depth=b.pfm # trailing\n").unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].split, Split::Train);
    }

    #[test]
    fn errors_name_the_line() {
        let err = Manifest::parse("rgb=a depth=b\nrgb=a colour=b\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(Manifest::parse("depth=b").is_err());
    }
}
