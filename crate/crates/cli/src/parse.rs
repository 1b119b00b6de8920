//! Parsers for list-valued flags.

use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub fn list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} {t:?}: {e}")))
        .collect()
}

/// `start:stop:step` with `stop` included when reached, or a plain list.
pub fn sizes(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [_] => list(s, "size"),
        [a, b, c] => {
            let num = |t: &str| t.trim().parse::<usize>().with_context(|| format!("bad size bound {t:?}"));
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if step == 0 || start == 0 || start > stop {
                bail!("size range {s:?} must satisfy 0 < start <= stop and step > 0");
            }
            Ok((start..=stop).step_by(step).collect())
        }
        _ => bail!("sizes must be start:stop:step or a comma-separated list, got {s:?}"),
    }
}

/// `a..b` (half-open) or a plain list.
pub fn seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        if a >= b {
            bail!("seed range {s:?} is empty");
        }
        return Ok((a..b).collect());
    }
    list(s, "seed")
}
