//! Flat `key = value` experiment configuration.
//!
//! One pair per line, dotted section prefixes (`problem.field.variant`),
//! `#` starts a comment. Every error names the line and the key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    /// 1-based line; 0 when the key is absent from the file.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "key '{}': {}", self.key, self.message)
        } else {
            write!(f, "line {}: key '{}': {}", self.line, self.key, self.message)
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "problem.manifold",
    "problem.x0",
    "problem.field.variant",
    "problem.field.dim",
    "problem.field.matrix",
    "problem.field.schedule",
    "problem.field.sigma_min",
    "problem.field.x1",
    "problem.field.weights",
    "problem.field.seed",
    "problem.field.hidden",
    "problem.field.scale",
    "problem.field.omega",
    "problem.field.target",
    "problem.reward.variant",
    "problem.reward.base",
    "problem.reward.target",
    "problem.reward.weights",
    "problem.reward.lambda",
    "problem.reward.prior",
    "optimizer.mode",
    "optimizer.beta",
    "optimizer.eta",
    "optimizer.gamma",
    "optimizer.alpha",
    "optimizer.n_steps",
    "optimizer.n_controls",
    "optimizer.max_iters",
    "optimizer.seed",
    "optimizer.dflow_step",
    "optimizer.early_stop",
    "optimizer.scheme",
    "output.report",
    "output.curves",
    "output.trajectory",
    "output.trajectory_path",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
    /// Directory that relative paths resolve against.
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError { line, key: content.into(), message: "expected 'key = value'".into() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError { line, key: String::new(), message: "empty key".into() });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError { line, key: key.into(), message: "unknown key".into() });
            }
            if let Some((prev, _)) = entries.get(key) {
                return Err(ConfigError { line, key: key.into(), message: format!("duplicate of line {prev}") });
            }
            entries.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Config { entries, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: 0,
            key: path.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line_of(key), key: key.into(), message: message.into() }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| self.error(key, "missing required key"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.error(key, format!("cannot parse '{v}': {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| self.error(key, "missing required key"))
    }

    /// Comma- or whitespace-separated numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| self.error(key, format!("cannot parse '{s}': {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn require_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.list(key)?.ok_or_else(|| self.error(key, "missing required key"))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(other) => Err(self.error(key, format!("expected a boolean, got '{other}'"))),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|p| self.base_dir.join(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let text =
            "# header\nproblem.manifold = euclidean  # trailing\n\noptimizer.n_steps=50\nproblem.x0 = 0, 1.5 2\n";
        let c = Config::parse(text, Path::new("/tmp")).unwrap();
        assert_eq!(c.raw("problem.manifold"), Some("euclidean"));
        assert_eq!(c.require::<usize>("optimizer.n_steps").unwrap(), 50);
        assert_eq!(c.list("problem.x0").unwrap().unwrap(), vec![0.0, 1.5, 2.0]);
        assert_eq!(c.path("output.report"), None);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = Config::parse("problem.manifold = so3\nbogus.key = 1\n", Path::new(".")).unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (2, "bogus.key"));
        assert!(e.to_string().contains("line 2") && e.to_string().contains("bogus.key"));

        let e = Config::parse("problem.manifold so3\n", Path::new(".")).unwrap_err();
        assert_eq!(e.line, 1);

        let c = Config::parse("\n\noptimizer.n_steps = ten\n", Path::new(".")).unwrap();
        let e = c.require::<usize>("optimizer.n_steps").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (3, "optimizer.n_steps"));

        let e = c.require::<usize>("optimizer.max_iters").unwrap_err();
        assert_eq!(e.line, 0);
        assert!(e.to_string().contains("optimizer.max_iters"));

        let e = Config::parse("optimizer.seed = 1\noptimizer.seed = 2\n", Path::new(".")).unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn booleans() {
        let c = Config::parse("output.trajectory = on\noptimizer.early_stop = maybe\n", Path::new(".")).unwrap();
        assert!(c.bool_or("output.trajectory", false).unwrap());
        assert!(c.bool_or("optimizer.early_stop", false).is_err());
        assert!(!c.bool_or("missing", false).unwrap());
    }
}
