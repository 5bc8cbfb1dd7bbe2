//! Plain-text `key=value` blocks used for config files, checkpoint headers and reports.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One pair per line; blank lines and `#` comments are ignored. Later keys win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Invalid(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn render_kv(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_comments() {
        let m = parse_kv("# c\n a = 1 \n\nb=x=y\n").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x=y");
        assert_eq!(parse_kv(&render_kv(&m)).unwrap(), m);
        assert!(parse_kv("novalue\n").is_err());
    }
}
