//! Trace files.
//!
//! One trace per file. The first line is `# noisefid-trace v1 ` followed by a
//! JSON header; the rest is CSV with columns `index,dX,dQV`:
//!
//! ```text
//! # noisefid-trace v1 {"realization":3,"dt":1e-6,"params":{"kind":"WN",...}}
//! index,dX,dQV
//! 0,0.0041713,3.6e-5
//! ```
//!
//! Floats are written in shortest round-trip form, so a trace read back is
//! bit-identical to the one written.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NoiseParams, NoiseTrace};
use crate::error::{Error, Result};

const MAGIC: &str = "# noisefid-trace v1 ";

#[derive(Serialize, Deserialize)]
struct Header {
    realization: u64,
    dt: f64,
    params: NoiseParams,
}

pub fn trace_file_name(realization: u64) -> String {
    format!("realization_{realization:06}.csv")
}

pub fn write_trace(path: &Path, realization: u64, trace: &NoiseTrace) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        realization,
        dt: trace.dt,
        params: trace.params,
    };
    let io = |e| Error::io(path, e);
    writeln!(w, "{MAGIC}{}", serde_json::to_string(&header)?).map_err(io)?;
    writeln!(w, "index,dX,dQV").map_err(io)?;
    for (i, (dx, q)) in trace.dx.iter().zip(&trace.dqv).enumerate() {
        writeln!(w, "{i},{dx:?},{q:?}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a trace file, returning its realization id and the trace.
pub fn read_trace(path: &Path) -> Result<(u64, NoiseTrace)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let json = first
        .trim_end()
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("{}: missing trace header", path.display())))?;
    let header: Header = serde_json::from_str(json)?;

    let mut rdr = csv::Reader::from_reader(reader);
    let mut dx = Vec::new();
    let mut dqv = Vec::new();
    for (expected, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::Format(format!("{}: short row {expected}", path.display())))
        };
        let idx: usize = field(0)?
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad index in row {expected}", path.display())))?;
        if idx != expected {
            return Err(Error::Format(format!("{}: index {idx} out of order", path.display())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("{}: bad number {s:?}", path.display())))
        };
        dx.push(parse(field(1)?)?);
        dqv.push(parse(field(2)?)?);
    }
    Ok((
        header.realization,
        NoiseTrace {
            params: header.params,
            dt: header.dt,
            dx,
            dqv,
        },
    ))
}

/// Write each `(realization, trace)` pair into `dir` using [`trace_file_name`].
pub fn write_trace_dir<'a>(dir: &Path, traces: impl IntoIterator<Item = (u64, &'a NoiseTrace)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    traces
        .into_iter()
        .map(|(id, t)| {
            let path = dir.join(trace_file_name(id));
            write_trace(&path, id, t).map(|_| path)
        })
        .collect()
}

/// Load every trace file in `dir`, keyed by realization id.
pub fn read_trace_dir(dir: &Path) -> Result<BTreeMap<u64, NoiseTrace>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("realization_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    for p in paths {
        let (id, trace) = read_trace(&p)?;
        if out.insert(id, trace).is_some() {
            return Err(Error::Format(format!("duplicate realization id {id} in {}", dir.display())));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{generate_trace, NoiseKind};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for kind in NoiseKind::ALL {
            let gamma = if kind == NoiseKind::Bm { 4.2e5 } else { 6.0 };
            let p = NoiseParams::new(kind, gamma, 5e3, 50e-6, 17).with_fine_dt(1e-6);
            let t = generate_trace(&p).unwrap();
            let path = dir.path().join(trace_file_name(7));
            write_trace(&path, 7, &t).unwrap();
            let (id, back) = read_trace(&path).unwrap();
            assert_eq!(id, 7);
            assert_eq!(back, t);
        }
    }

    #[test]
    fn directory_listing_keys_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = NoiseParams::new(NoiseKind::Wn, 6.0, 0.0, 10e-6, 0).with_fine_dt(1e-6);
        let traces: Vec<_> = (0..3).map(|i| generate_trace(&p.with_seed(i)).unwrap()).collect();
        write_trace_dir(dir.path(), traces.iter().enumerate().map(|(i, t)| (i as u64 + 10, t))).unwrap();
        let map = read_trace_dir(dir.path()).unwrap();
        assert_eq!(map.keys().copied().collect::<Vec<_>>(), vec![10, 11, 12]);
        assert_eq!(map[&11], traces[1]);
    }

    #[test]
    fn missing_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "index,dX,dQV\n0,1,0\n").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }
}
