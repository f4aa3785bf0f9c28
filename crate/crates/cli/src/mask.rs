use crate::CliError;

/// Parses `"a-b,c,d-e"` (inclusive ranges of frozen positions) into a mask
/// of length `len`.
pub fn parse_mask(spec: &str, len: usize) -> Result<Vec<bool>, CliError> {
    let mut mask = vec![false; len];
    let bad = |msg: String| CliError::Input(format!("mask {spec:?}: {msg}"));
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: usize = lo.parse().map_err(|_| bad(format!("bad position {lo:?}")))?;
        let hi: usize = hi.parse().map_err(|_| bad(format!("bad position {hi:?}")))?;
        if lo > hi {
            return Err(bad(format!("range {lo}-{hi} is reversed")));
        }
        if hi >= len {
            return Err(bad(format!("position {hi} is out of range for length {len}")));
        }
        mask[lo..=hi].iter_mut().for_each(|m| *m = true);
    }
    Ok(mask)
}
