//! On-disk formats: transmission matrices (JSON / CSV), click-pattern text
//! files, GCP and report JSON / CSV, and the debug ensemble dump.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faker::{PatternSet, PatternSource};
use crate::gcp::GcpDistribution;
use crate::network::{CMatrix, TransmissionMatrix};
use crate::sampler::{PhaseSpaceEnsemble, Representation, Stage};
use crate::stats::TestReport;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    m: usize,
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn matrix_to_json(t: &TransmissionMatrix) -> String {
    let entries = t.row_major();
    let doc = MatrixJson {
        m: t.dim_out(),
        n: t.dim_in(),
        re: entries.iter().map(|z| z.re).collect(),
        im: entries.iter().map(|z| z.im).collect(),
    };
    serde_json::to_string(&doc).expect("matrix serializes")
}

pub fn matrix_from_json(text: &str) -> Result<TransmissionMatrix> {
    let doc: MatrixJson =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("matrix JSON: {e}")))?;
    if doc.re.len() != doc.m * doc.n || doc.im.len() != doc.m * doc.n {
        return Err(Error::mismatch(
            doc.m * doc.n,
            format!("{} / {} entries", doc.re.len(), doc.im.len()),
        ));
    }
    let entries = CMatrix::from_fn(doc.m, doc.n, |i, j| {
        let k = i * doc.n + j;
        Complex64::new(doc.re[k], doc.im[k])
    });
    TransmissionMatrix::from_matrix(entries)
}

/// One row per output mode, `re,im` pairs per column.
pub fn matrix_to_csv(t: &TransmissionMatrix) -> String {
    let mut out = String::new();
    for i in 0..t.dim_out() {
        let row: Vec<String> = (0..t.dim_in())
            .flat_map(|j| {
                let z = t.entries()[(i, j)];
                [z.re.to_string(), z.im.to_string()]
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<TransmissionMatrix> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: "<matrix csv>".into(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if !vals.len().is_multiple_of(2) {
            return Err(Error::Parse {
                path: "<matrix csv>".into(),
                line: lineno + 1,
                msg: "odd number of columns; expected re,im pairs".into(),
            });
        }
        rows.push(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
    }
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Data(format!(
            "matrix CSV row {} has {} columns, expected {n}",
            bad + 1,
            rows[bad].len()
        )));
    }
    TransmissionMatrix::from_matrix(CMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Reads a matrix, choosing JSON or CSV by extension.
pub fn read_matrix(path: &Path) -> Result<TransmissionMatrix> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => matrix_from_csv(&text),
        _ => matrix_from_json(&text),
    }
}

pub fn write_matrix(path: &Path, t: &TransmissionMatrix) -> Result<()> {
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => matrix_to_csv(t),
        _ => matrix_to_json(t),
    };
    write_bytes(path, text.as_bytes())
}

/// Parses the pattern text format: one `0`/`1` row per line, `#` header
/// lines ignored. `modes` pins the expected length; otherwise the first
/// pattern sets it.
pub fn parse_patterns(
    reader: impl BufRead,
    modes: Option<usize>,
    origin: &str,
) -> Result<PatternSet> {
    let mut set: Option<PatternSet> = None;
    let mut metadata = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        if let Some(c) = line.chars().find(|c| *c != '0' && *c != '1') {
            return Err(parse_err(format!(
                "unexpected character {c:?}; patterns contain only '0' and '1'"
            )));
        }
        let width = line.len();
        let target = match &set {
            Some(s) => s.modes(),
            None => modes.unwrap_or(width),
        };
        if width != target {
            return Err(parse_err(format!(
                "pattern has {width} modes, expected {target}"
            )));
        }
        let s = match &mut set {
            Some(s) => s,
            None => set.insert(PatternSet::new(target, PatternSource::Experiment)?),
        };
        s.push_bits(line.bytes().map(|b| b == b'1'));
    }
    let mut set = set.ok_or_else(|| Error::Data(format!("{origin}: no patterns found")))?;
    set.metadata.extend(metadata);
    Ok(set)
}

pub fn load_patterns(path: &Path, modes: Option<usize>) -> Result<PatternSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_patterns(BufReader::new(file), modes, &path.display().to_string())
}

/// Writes patterns as text. `header` lines come first, then the set's
/// metadata, each as `# key=value`.
pub fn write_patterns(path: &Path, p: &PatternSet, header: &[(String, String)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for (k, v) in header.iter().map(|(k, v)| (k, v)).chain(p.metadata.iter()) {
            writeln!(w, "# {k}={v}")?;
        }
        let mut line = vec![b'0'; p.modes() + 1];
        line[p.modes()] = b'\n';
        for words in p.iter_words() {
            for (j, byte) in line[..p.modes()].iter_mut().enumerate() {
                *byte = if words[j / 64] >> (j % 64) & 1 == 1 {
                    b'1'
                } else {
                    b'0'
                };
            }
            w.write_all(&line)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// GCP JSON with a provenance hash.
#[derive(Serialize, Deserialize)]
struct GcpDocument {
    config_hash: Option<String>,
    #[serde(flatten)]
    gcp: GcpDistribution,
}

pub fn gcp_to_json(g: &GcpDistribution, config_hash: Option<&str>) -> String {
    let doc = GcpDocument {
        config_hash: config_hash.map(str::to_string),
        gcp: g.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("gcp serializes")
}

pub fn gcp_from_json(text: &str) -> Result<GcpDistribution> {
    let doc: GcpDocument =
        serde_json::from_str(text).map_err(|e| Error::Data(format!("GCP JSON: {e}")))?;
    let g = doc.gcp;
    g.spec.validate()?;
    let bins = g.spec.bins();
    if g.shape != g.spec.shape() || g.probabilities.len() != bins || g.sigma.len() != bins {
        return Err(Error::Data(
            "GCP JSON arrays do not match the subset grid".into(),
        ));
    }
    if g.raw_counts.as_ref().is_some_and(|c| c.len() != bins) {
        return Err(Error::Data(
            "GCP JSON raw_counts do not match the subset grid".into(),
        ));
    }
    Ok(g)
}

/// One row per bin: grid indices, probability, sigma, counts.
pub fn gcp_to_csv(g: &GcpDistribution, config_hash: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = config_hash {
        out.push_str(&format!("# config_hash={h}\n"));
    }
    let d = g.shape.len();
    let mut head: Vec<String> = (1..=d).map(|j| format!("m{j}")).collect();
    head.extend(["probability", "sigma", "counts"].map(String::from));
    out.push_str(&head.join(","));
    out.push('\n');
    for (flat, (p, s)) in g.probabilities.iter().zip(&g.sigma).enumerate() {
        let mut row: Vec<String> = g
            .spec
            .grid_index(flat)
            .iter()
            .map(|m| m.to_string())
            .collect();
        row.push(p.to_string());
        row.push(s.to_string());
        row.push(
            g.raw_counts
                .as_ref()
                .map_or(String::new(), |c| c[flat].to_string()),
        );
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_gcp(
    dir: &Path,
    stem: &str,
    g: &GcpDistribution,
    config_hash: Option<&str>,
) -> Result<()> {
    write_bytes(
        &dir.join(format!("{stem}.json")),
        gcp_to_json(g, config_hash).as_bytes(),
    )?;
    write_bytes(
        &dir.join(format!("{stem}.csv")),
        gcp_to_csv(g, config_hash).as_bytes(),
    )
}

pub fn read_gcp(path: &Path) -> Result<GcpDistribution> {
    gcp_from_json(&read_text(path)?)
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    config_hash: Option<&'a str>,
    name: String,
    #[serde(flatten)]
    report: &'a TestReport,
}

pub fn report_to_json(r: &TestReport, config_hash: Option<&str>) -> String {
    let doc = ReportDocument {
        config_hash,
        name: r.name(),
        report: r,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

pub fn write_report(path: &Path, r: &TestReport, config_hash: Option<&str>) -> Result<()> {
    write_bytes(path, report_to_json(r, config_hash).as_bytes())
}

const ENSEMBLE_MAGIC: &[u8; 8] = b"GCPENS01";

/// Debug dump: magic, `E_S`, `M` (u64 LE), representation and stage bytes,
/// seed (u64 LE), then α and β as row-major `(re, im)` f64 LE pairs.
pub fn write_ensemble(path: &Path, e: &PhaseSpaceEnsemble) -> Result<()> {
    let file = fs::File::create(path).map_err(|err| Error::io(path, err))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        w.write_all(&(e.trajectories() as u64).to_le_bytes())?;
        w.write_all(&(e.modes() as u64).to_le_bytes())?;
        w.write_all(&[
            (e.representation() == Representation::DiagonalP) as u8,
            (e.stage() == Stage::Output) as u8,
        ])?;
        w.write_all(&e.seed().to_le_bytes())?;
        for z in e.alpha().iter().chain(e.beta()) {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(|err| Error::io(path, err))
}

pub fn read_ensemble(path: &Path) -> Result<PhaseSpaceEnsemble> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|err| Error::io(path, err))?;
    let bad = || Error::Data(format!("{}: not an ensemble dump", path.display()));
    if bytes.len() < 34 || &bytes[..8] != ENSEMBLE_MAGIC {
        return Err(bad());
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (n, m) = (u64_at(8) as usize, u64_at(16) as usize);
    let representation = if bytes[24] == 1 {
        Representation::DiagonalP
    } else {
        Representation::PositiveP
    };
    let stage = if bytes[25] == 1 {
        Stage::Output
    } else {
        Stage::Input
    };
    let seed = u64_at(26);
    let body = &bytes[34..];
    if body.len() != 2 * n * m * 16 {
        return Err(bad());
    }
    let values: Vec<Complex64> = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let (alpha, beta) = values.split_at(n * m);
    PhaseSpaceEnsemble::from_parts(
        representation,
        stage,
        m,
        alpha.to_vec(),
        beta.to_vec(),
        seed,
    )
}
