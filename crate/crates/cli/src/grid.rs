//! The sweep of window sizes, label families and arities a command covers.

use std::path::Path;

use anyhow::Context;
use chronogaze::{LabelFamily, LabelSpec};
use serde::Deserialize;

use crate::UsageError;

/// Window sizes of the full sweep.
pub const FULL_WINDOWS: [f64; 9] = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub windows: Vec<f64>,
    pub labels: Vec<LabelSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingsFile {
    tw: Vec<f64>,
    #[serde(default = "default_families")]
    families: Vec<String>,
    #[serde(default = "default_classes")]
    classes: Vec<u8>,
}

fn default_families() -> Vec<String> {
    vec!["duration".into()]
}

fn default_classes() -> Vec<u8> {
    vec![2]
}

impl Grid {
    /// Every window size with both families at both arities.
    pub fn full() -> Self {
        let labels = LabelFamily::ALL
            .iter()
            .flat_map(|&f| {
                [2, 3].map(|n| LabelSpec {
                    family: f,
                    n_classes: n,
                })
            })
            .collect();
        Grid {
            windows: FULL_WINDOWS.to_vec(),
            labels,
        }
    }

    pub fn new(windows: &[f64], families: &[LabelFamily], classes: &[u8]) -> Result<Self, UsageError> {
        if windows.is_empty() {
            return Err(UsageError("no window sizes given (use --tw or --settings)".into()));
        }
        if let Some(t) = windows.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(UsageError(format!("window size {t} must be positive")));
        }
        let mut w = windows.to_vec();
        w.sort_by(f64::total_cmp);
        w.dedup();
        let mut labels = Vec::new();
        for &family in families {
            for &n in classes {
                let spec = LabelSpec::new(family, n).map_err(|e| UsageError(e.to_string()))?;
                if !labels.contains(&spec) {
                    labels.push(spec);
                }
            }
        }
        if labels.is_empty() {
            return Err(UsageError("no label family or class count given".into()));
        }
        Ok(Grid { windows: w, labels })
    }

    /// `full` or a TOML file with `tw`, `families` and `classes` arrays.
    pub fn from_settings(arg: &str) -> anyhow::Result<Self> {
        if arg == "full" {
            return Ok(Self::full());
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).with_context(|| format!("reading settings {}", path.display()))?;
        let file: SettingsFile =
            toml::from_str(&text).with_context(|| format!("parsing settings {}", path.display()))?;
        let families = file
            .families
            .iter()
            .map(|f| f.parse::<LabelFamily>().map_err(anyhow::Error::msg))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(Self::new(&file.tw, &families, &file.classes)?)
    }
}

/// `10` for whole seconds, `0.5` otherwise.
pub fn tw_label(t_w: f64) -> String {
    format!("{t_w}")
}

pub fn features_file(t_w: f64) -> String {
    format!("features_tw{}.csv", tw_label(t_w))
}

/// File stem shared by every artifact of one setting, e.g. `duration2_tw10`.
pub fn setting_stem(labels: LabelSpec, t_w: f64) -> String {
    format!("{}_tw{}", labels.tag(), tw_label(t_w))
}

pub fn labels_file(labels: LabelSpec, t_w: f64) -> String {
    format!("labels_{}.csv", setting_stem(labels, t_w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_shape() {
        let g = Grid::full();
        assert_eq!(g.windows.len() * g.labels.len(), 36);
    }

    #[test]
    fn names() {
        let s = LabelSpec::new(LabelFamily::Ppot, 3).unwrap();
        assert_eq!(setting_stem(s, 10.0), "ppot3_tw10");
        assert_eq!(features_file(0.5), "features_tw0.5.csv");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Grid::new(&[0.0], &[LabelFamily::Ppot], &[2]).is_err());
        assert!(Grid::new(&[1.0], &[LabelFamily::Ppot], &[4]).is_err());
        assert!(Grid::new(&[], &[LabelFamily::Ppot], &[2]).is_err());
        let g = Grid::new(&[10.0, 2.0, 10.0], &[LabelFamily::Ppot], &[2, 2]).unwrap();
        assert_eq!(g.windows, vec![2.0, 10.0]);
        assert_eq!(g.labels.len(), 1);
    }

    #[test]
    fn settings_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.toml");
        std::fs::write(&p, "tw = [2, 10]\nfamilies = [\"duration\", \"ppot\"]\nclasses = [3]\n").unwrap();
        let g = Grid::from_settings(p.to_str().unwrap()).unwrap();
        assert_eq!(g.windows, vec![2.0, 10.0]);
        assert_eq!(g.labels.len(), 2);
        std::fs::write(&p, "tw = [2]\nwindows = 3\n").unwrap();
        assert!(Grid::from_settings(p.to_str().unwrap()).is_err());
    }
}
