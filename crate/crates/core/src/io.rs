//! CSV formats for clouds, embeddings and experiment reports.
//!
//! All files are UTF-8 with LF line endings and a header row. Floats are
//! written in shortest round-trip form, so reading a file back yields the
//! exact values that were written. Clouds and embeddings carry `# key: value`
//! metadata lines before the header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::embed::{Embedding, Method};
use crate::error::{Error, Result};
use crate::harness::ExperimentReport;
use crate::kernel::{KernelMatrix, PointCloud};

pub const REPORT_HEADER: [&str; 7] = ["method", "k", "p", "mean_logL", "std_logL", "collapse_count", "trials"];
pub const RAW_HEADER: [&str; 6] = ["trial", "method", "k", "p", "logL", "collapsed"];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_matrix<W: Write>(mut w: W, meta: &[(&str, String)], prefix: char, m: &DMatrix<f64>) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    let mut out = writer(w);
    out.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.row_iter() {
        out.write_record(row.iter().map(|&v| fmt(v)))?;
    }
    out.flush()?;
    Ok(())
}

type Meta = Vec<(String, String)>;

fn read_matrix<R: Read>(mut r: R) -> Result<(Meta, DMatrix<f64>)> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut meta = Vec::new();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else { break };
        body_start += line.len();
        if let Some((k, v)) = rest.split_once(':') {
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[body_start..]);
    let width = rdr.headers()?.len();
    if width == 0 {
        return Err(Error::Format("empty header".into()));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: '{field}' is not a number", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("no data rows".into()));
    }
    Ok((meta, DMatrix::from_row_slice(rows, width, &data)))
}

fn meta_get<'a>(meta: &'a Meta, key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn seed_str(seed: Option<u64>) -> String {
    seed.map_or_else(|| "none".to_string(), |s| s.to_string())
}

fn parse_seed(s: Option<&str>) -> Result<Option<u64>> {
    match s {
        None | Some("none") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("bad seed '{v}'"))),
    }
}

pub fn write_cloud<W: Write>(cloud: &PointCloud, w: W) -> Result<()> {
    let meta = [("label", cloud.label().to_string()), ("seed", seed_str(cloud.seed()))];
    write_matrix(w, &meta, 'x', cloud.points())
}

pub fn read_cloud<R: Read>(r: R) -> Result<PointCloud> {
    let (meta, m) = read_matrix(r)?;
    let label = meta_get(&meta, "label").unwrap_or("").to_string();
    let seed = parse_seed(meta_get(&meta, "seed"))?;
    Ok(PointCloud::from_matrix(m, label)?.with_seed(seed))
}

pub fn write_embedding<W: Write>(e: &Embedding, w: W) -> Result<()> {
    let meta = [
        ("method", e.method.to_string()),
        ("k", e.dim().to_string()),
        ("power", fmt(e.power)),
        ("seed", seed_str(e.seed)),
    ];
    write_matrix(w, &meta, 'y', &e.coords)
}

pub fn read_embedding<R: Read>(r: R) -> Result<Embedding> {
    let (meta, coords) = read_matrix(r)?;
    let method: Method = meta_get(&meta, "method")
        .ok_or_else(|| Error::Format("missing method".into()))?
        .parse()?;
    let power = meta_get(&meta, "power")
        .ok_or_else(|| Error::Format("missing power".into()))?
        .parse()
        .map_err(|_| Error::Format("bad power".into()))?;
    let seed = parse_seed(meta_get(&meta, "seed"))?;
    Ok(Embedding {
        coords,
        method,
        power,
        seed,
    })
}

/// Writes a kernel as a square CSV with a normalization tag.
pub fn write_kernel<W: Write>(k: &KernelMatrix, w: W) -> Result<()> {
    let mut meta = vec![("normalization", k.normalization().to_string())];
    if let Some(eps) = k.scale_eps() {
        meta.push(("eps", fmt(eps)));
    }
    write_matrix(w, &meta, 'c', k.entries())
}

pub fn write_report<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        out.write_record([
            r.method.to_string(),
            r.k.to_string(),
            r.p.to_string(),
            fmt(r.mean_log_l),
            fmt(r.std_log_l),
            r.collapse_count.to_string(),
            r.trials.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_raw<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(RAW_HEADER)?;
    for o in &report.outcomes {
        out.write_record([
            o.trial.to_string(),
            o.method.to_string(),
            o.k.to_string(),
            o.p.to_string(),
            fmt(o.log_l),
            o.collapsed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn report_to_string(report: &ExperimentReport) -> Result<String> {
    let mut buf = Vec::new();
    write_report(report, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}
