//! Text and CSV formats: clouds, vectors, packings, trees, traces.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! format here parses back to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use starmm_core::estimator::TraversalTrace;
use starmm_core::geometry::PackingResult;
use starmm_core::tree::{PrunedTree, TreeParams};
use starmm_core::PointCloud;

use crate::error::{Error, Result};

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(source: &str, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(source, line, format!("not a number: {s:?}")))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `content`, creating parent directories.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn csv_row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

/// Numeric CSV rows; `#` lines and blank lines are skipped.
pub fn parse_rows(text: &str, source: &str) -> Result<Vec<Vec<f64>>> {
    parse_rows_with(text, source, false)
}

/// Like [`parse_rows`] but rows may differ in length.
pub fn parse_ragged_rows(text: &str, source: &str) -> Result<Vec<Vec<f64>>> {
    parse_rows_with(text, source, true)
}

fn parse_rows_with(text: &str, source: &str, ragged: bool) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| parse_f64(source, line, f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()).filter(|_| !ragged) {
            if row.len() != first {
                return Err(parse_err(
                    source,
                    line,
                    format!("expected {first} columns, found {}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One vector per row.
pub fn parse_cloud(text: &str, source: &str) -> Result<PointCloud> {
    let rows = parse_rows(text, source)?;
    let dim = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| parse_err(source, 0, "cloud is empty"))?;
    Ok(PointCloud::from_rows(dim, &rows)?)
}

pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut s = String::new();
    for p in cloud.iter() {
        s += &csv_row(p);
        s.push('\n');
    }
    s
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    parse_cloud(&read_text(path)?, &path.display().to_string())
}

/// A single vector, given either as one row or as one value per line.
pub fn parse_vector(text: &str, source: &str) -> Result<Vec<f64>> {
    let rows = parse_rows(text, source)?;
    match rows.as_slice() {
        [] => Err(parse_err(source, 0, "no values")),
        [row] => Ok(row.clone()),
        _ if rows.iter().all(|r| r.len() == 1) => Ok(rows.into_iter().map(|r| r[0]).collect()),
        _ => Err(parse_err(
            source,
            0,
            "expected a single row or a single column",
        )),
    }
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read_text(path)?, &path.display().to_string())
}

/// `# separation=<f> ball_radius=<f>` followed by one center per row.
pub fn format_packing(p: &PackingResult) -> String {
    let mut s = format!("# separation={} ball_radius={}\n", p.radius, p.ball_radius);
    for c in &p.centers {
        s += &csv_row(c);
        s.push('\n');
    }
    s
}

/// Parsed packing file: `(separation, ball_radius, centers)`.
pub fn parse_packing(text: &str, source: &str) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let header = text
        .lines()
        .next()
        .ok_or_else(|| parse_err(source, 1, "empty packing file"))?;
    let kv = header
        .strip_prefix('#')
        .map(parse_header_fields)
        .ok_or_else(|| parse_err(source, 1, "missing `# separation=` header"))?;
    let get = |k: &str| -> Result<f64> {
        let v = kv
            .iter()
            .find(|(key, _)| key == k)
            .ok_or_else(|| parse_err(source, 1, format!("header lacks {k}")))?;
        parse_f64(source, 1, &v.1)
    };
    Ok((
        get("separation")?,
        get("ball_radius")?,
        parse_rows(text, source)?,
    ))
}

fn parse_header_fields(s: &str) -> Vec<(String, String)> {
    s.split_whitespace()
        .filter_map(|t| t.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// One live node per line, `id level parent_ids coords…`, under a
/// `# params d=<f> c=<f> jmax=<n>` header. Parent ids are comma separated,
/// `-` for the root. Nodes are listed level by level in lexicographic order.
pub fn format_tree(tree: &PrunedTree) -> String {
    let p = tree.params();
    let mut s = format!("# params d={} c={} jmax={}\n", p.d, p.c, p.jmax);
    for k in 1..=tree.depth() {
        for &id in tree.level(k) {
            let parents = tree.parents(id);
            write!(s, "{id} {k} ").unwrap();
            if parents.is_empty() {
                s.push('-');
            } else {
                for (i, q) in parents.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    write!(s, "{q}").unwrap();
                }
            }
            for x in tree.point(id) {
                write!(s, " {x}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn parse_tree(text: &str, source: &str) -> Result<PrunedTree> {
    let mut params: Option<TreeParams> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(fields) = rest.strip_prefix("params") {
                let kv = parse_header_fields(fields);
                let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
                let num = |k: &str| -> Result<f64> {
                    parse_f64(
                        source,
                        ln,
                        get(k).ok_or_else(|| parse_err(source, ln, format!("params lack {k}")))?,
                    )
                };
                let jmax = match get("jmax") {
                    Some(v) => v
                        .parse()
                        .map_err(|_| parse_err(source, ln, "jmax is not an integer"))?,
                    None => 0,
                };
                params = Some(TreeParams {
                    d: num("d")?,
                    c: num("c")?,
                    jmax,
                });
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let mut int = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| parse_err(source, ln, format!("missing {what}")))?
                .parse()
                .map_err(|_| parse_err(source, ln, format!("{what} is not an integer")))
        };
        let id = int("id")?;
        let level = int("level")?;
        let ps = it
            .next()
            .ok_or_else(|| parse_err(source, ln, "missing parent ids"))?;
        let parents = if ps == "-" {
            Vec::new()
        } else {
            ps.split(',')
                .map(|p| {
                    p.parse()
                        .map_err(|_| parse_err(source, ln, format!("bad parent id {p:?}")))
                })
                .collect::<Result<Vec<usize>>>()?
        };
        let coords = it
            .map(|x| parse_f64(source, ln, x))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, level, parents, coords));
    }
    let mut params = params.ok_or_else(|| parse_err(source, 1, "missing `# params` header"))?;
    let depth = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if params.jmax == 0 {
        params.jmax = depth;
    }
    Ok(PrunedTree::from_nodes(params, &rows)?)
}

pub fn read_tree(path: &Path) -> Result<PrunedTree> {
    parse_tree(&read_text(path)?, &path.display().to_string())
}

/// `step J eps_J chosen_id H_min n_offspring` per step.
pub fn format_trace(trace: &TraversalTrace) -> String {
    let mut s = String::from("# step J eps_J chosen_id H_min n_offspring\n");
    for t in &trace.path {
        writeln!(
            s,
            "{} {} {} {} {} {}",
            t.step,
            t.level,
            t.eps,
            t.chosen,
            t.h_min,
            t.scores.len()
        )
        .unwrap();
    }
    s
}
