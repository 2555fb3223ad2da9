//! CSV exchange of preference matrices, caching policies and link matrices.
//!
//! Every table has one row per user. The header is `user` followed by the
//! column ids (`0..M` for files, `0..K` for link partners). Numbers are
//! written in Rust's shortest round-trip form, so reading back is exact.

use std::io::{Read, Write};

use crate::channel::LinkProbabilityMatrix;
use crate::error::{Error, Result};
use crate::optimizer::CachingPolicy;
use crate::preference::PreferenceMatrix;

fn write_table<'a, W: Write>(
    out: W,
    n_cols: usize,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user".to_string()];
    header.extend((0..n_cols).map(|c| c.to_string()));
    w.write_record(&header)?;
    for (k, row) in rows.enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<R: Read>(input: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let n_cols = r
        .headers()?
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::param("empty CSV header"))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::param(format!("row {i}: '{s}' is not a number ({e})")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((n_cols, rows))
}

pub fn write_preferences<W: Write>(prefs: &PreferenceMatrix, out: W) -> Result<()> {
    write_table(out, prefs.n_files(), prefs.rows())
}

pub fn read_preferences<R: Read>(input: R) -> Result<PreferenceMatrix> {
    let (m, rows) = read_table(input)?;
    PreferenceMatrix::from_rows(m, rows)
}

pub fn write_policy<W: Write>(policy: &CachingPolicy, out: W) -> Result<()> {
    write_table(out, policy.n_files(), policy.rows())
}

pub fn read_policy<R: Read>(input: R) -> Result<CachingPolicy> {
    let (m, rows) = read_table(input)?;
    CachingPolicy::from_rows(m, rows)
}

pub fn write_links<W: Write>(links: &LinkProbabilityMatrix, out: W) -> Result<()> {
    write_table(
        out,
        links.n_users(),
        (0..links.n_users()).map(|k| links.row(k)),
    )
}

pub fn read_links<R: Read>(input: R) -> Result<LinkProbabilityMatrix> {
    let (_, rows) = read_table(input)?;
    LinkProbabilityMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::{generate_preferences, GeneratorParams};

    #[test]
    fn preferences_round_trip_exactly() {
        let p = generate_preferences(4, 9, &GeneratorParams::default()).unwrap();
        let mut buf = Vec::new();
        write_preferences(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user,0,1,2"));
        assert_eq!(read_preferences(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn policy_and_links_round_trip() {
        let pol = CachingPolicy::from_cached_files(5, &[vec![0, 3], vec![], vec![4, 1]]).unwrap();
        let mut buf = Vec::new();
        write_policy(&pol, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .contains("\n0,1,0,0,1,0\n"));
        assert_eq!(read_policy(buf.as_slice()).unwrap(), pol);

        let l = LinkProbabilityMatrix::from_rows(vec![vec![1.0, 0.25], vec![0.25, 1.0]]).unwrap();
        let mut buf = Vec::new();
        write_links(&l, &mut buf).unwrap();
        assert_eq!(read_links(buf.as_slice()).unwrap(), l);
    }

    #[test]
    fn bad_numbers_are_parameter_errors() {
        let text = "user,0,1\n0,0.5,abc\n";
        assert_eq!(
            read_preferences(text.as_bytes()).unwrap_err().category(),
            "parameter"
        );
    }
}
