use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabelSpace, DEFAULT_IGNORE};

fn default_ignore() -> u16 {
    DEFAULT_IGNORE
}

fn default_scale() -> usize {
    4
}

fn default_mask_dim() -> usize {
    28
}

/// Per-dataset class table and defaults.
///
/// ```toml
/// class_names = ["top", "skirt", "dress"]
/// ignore_label = 255            # optional, default 255
/// background_in_metrics = true  # optional, default true
/// scale = 4                     # optional, default 4
/// mask_height = 28              # optional, default 28
/// mask_width = 28               # optional, default 28
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub class_names: Vec<String>,
    #[serde(default = "default_ignore")]
    pub ignore_label: u16,
    #[serde(default = "default_true")]
    pub background_in_metrics: bool,
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default = "default_mask_dim")]
    pub mask_height: usize,
    #[serde(default = "default_mask_dim")]
    pub mask_width: usize,
}

fn default_true() -> bool {
    true
}

impl DatasetConfig {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        let cfg = DatasetConfig {
            class_names,
            ignore_label: DEFAULT_IGNORE,
            background_in_metrics: true,
            scale: default_scale(),
            mask_height: default_mask_dim(),
            mask_width: default_mask_dim(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let source_name = path.display().to_string();
        let cfg: DatasetConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| super::detections::parse_error(&source_name, &text, &e))?
        } else {
            toml::from_str(&text).map_err(|e| {
                let offset = e.span().map(|s| s.start).unwrap_or(0);
                let (line, column) = line_col(&text, offset);
                Error::Parse {
                    source_name,
                    line,
                    column,
                    offset,
                    message: e.message().to_string(),
                }
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::InvalidSpec("class_names must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.class_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate class name {name:?}")));
            }
        }
        if self.scale == 0 || self.mask_height == 0 || self.mask_width == 0 {
            return Err(Error::InvalidSpec(
                "scale and mask dims must be at least 1".into(),
            ));
        }
        self.label_space().map(|_| ())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        let c = u16::try_from(self.class_names.len())
            .map_err(|_| Error::InvalidSpec(format!("{} classes", self.class_names.len())))?;
        LabelSpace::new(c, self.ignore_label)
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    pub fn mask_dims(&self) -> (usize, usize) {
        (self.mask_height, self.mask_width)
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}
