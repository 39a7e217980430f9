//! `key = value` tracker configuration files.
//!
//! Blank lines and `#` comments are ignored. Recognised keys: `model`, `c`,
//! `start`, `refractory`, `lr_final_when_unreliable`, `lr_anchor`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::{LrAnchor, Model, TrackerConfig};

/// Settings present in a configuration source; absent keys stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub model: Option<Model>,
    pub c: Option<usize>,
    pub start: Option<usize>,
    pub refractory: Option<usize>,
    pub lr_final_when_unreliable: Option<bool>,
    pub lr_anchor: Option<LrAnchor>,
}

impl ConfigOverrides {
    /// Writes the present settings into `cfg`.
    pub fn apply(&self, cfg: &mut TrackerConfig) {
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(s) = self.start {
            cfg.start = s;
        }
        if let Some(r) = self.refractory {
            cfg.refractory = r;
        }
        if let Some(b) = self.lr_final_when_unreliable {
            cfg.lr_final_when_unreliable = b;
        }
        if let Some(a) = self.lr_anchor {
            cfg.lr_anchor = a;
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub fn parse_config(text: &str) -> Result<ConfigOverrides> {
    let mut out = ConfigOverrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("config", line_no, format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::parse("config", line_no, format!("invalid {what} for {key}: {value:?}"));
        let dup = |present: bool| {
            if present {
                Err(Error::parse("config", line_no, format!("duplicate key {key}")))
            } else {
                Ok(())
            }
        };
        match key {
            "model" => {
                dup(out.model.is_some())?;
                out.model = Some(value.parse().map_err(|_| bad("model"))?);
            }
            "c" => {
                dup(out.c.is_some())?;
                let c: usize = value.parse().map_err(|_| bad("integer"))?;
                if c < 2 {
                    return Err(bad("window (must be at least 2)"));
                }
                out.c = Some(c);
            }
            "start" => {
                dup(out.start.is_some())?;
                out.start = Some(value.parse().map_err(|_| bad("integer"))?);
            }
            "refractory" => {
                dup(out.refractory.is_some())?;
                out.refractory = Some(value.parse().map_err(|_| bad("integer"))?);
            }
            "lr_final_when_unreliable" => {
                dup(out.lr_final_when_unreliable.is_some())?;
                out.lr_final_when_unreliable = Some(parse_bool(value).ok_or_else(|| bad("boolean"))?);
            }
            "lr_anchor" => {
                dup(out.lr_anchor.is_some())?;
                out.lr_anchor = Some(value.parse().map_err(|_| bad("anchor"))?);
            }
            _ => return Err(Error::parse("config", line_no, format!("unknown key {key:?}"))),
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<ConfigOverrides> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "# tracker\nmodel = joltw\nc=2000\nstart = 10 # comment\nrefractory=5\n\
                    lr_final_when_unreliable = yes\nlr_anchor = literal\n";
        let o = parse_config(text).unwrap();
        let mut cfg = TrackerConfig::default();
        o.apply(&mut cfg);
        assert_eq!(cfg.model, Model::Joltw);
        assert_eq!((cfg.c, cfg.start, cfg.refractory), (2000, 10, 5));
        assert!(cfg.lr_final_when_unreliable);
        assert_eq!(cfg.lr_anchor, LrAnchor::Literal);
    }

    #[test]
    fn empty_source_changes_nothing() {
        let mut cfg = TrackerConfig::default();
        parse_config("\n# nothing\n").unwrap().apply(&mut cfg);
        assert_eq!(cfg, TrackerConfig::default());
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("c = 10\nbogus = 1\n", 2),
            ("model = fast\n", 1),
            ("\n\nc = x\n", 3),
            ("c = 1\n", 1),
            ("start 3\n", 1),
            ("c = 10\nc = 20\n", 2),
            ("lr_anchor = maybe\n", 1),
        ] {
            match parse_config(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
