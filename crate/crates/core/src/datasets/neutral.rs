//! Plain-text node-classification layout.
//!
//! ```text
//! <dir>/meta.json   {"name", "num_nodes", "num_features", "num_classes"}
//! <dir>/x.csv       one comma-separated feature row per node
//! <dir>/edges.csv   one "src,dst" pair per line, 0-based
//! <dir>/y.csv       one class id per node, -1 when unlabeled
//! <dir>/split.json  {"train": [...], "val": [...], "test": [...]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

/// Train, validation and test index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Checks that the three sets are disjoint and below `bound`.
    pub fn validate(&self, bound: usize) -> std::result::Result<(), String> {
        let mut owner = vec![None; bound];
        for (set, name) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for &i in set {
                let slot = owner
                    .get_mut(i)
                    .ok_or_else(|| format!("{name} index {i} is out of range for {bound} items"))?;
                if let Some(other) = slot.replace(name) {
                    return Err(format!("index {i} appears in both {other} and {name}"));
                }
            }
        }
        Ok(())
    }
}

/// Contents of a neutral directory exactly as written on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawNodeData {
    pub meta: Meta,
    /// Row-major, `num_nodes × num_features`.
    pub x: Vec<f32>,
    pub edges: Vec<(usize, usize)>,
    pub y: Vec<i64>,
    pub split: SplitSpec,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Reads and validates a neutral directory without transforming anything.
pub fn read_neutral(dir: &Path) -> Result<RawNodeData> {
    let meta: Meta = read_json(&dir.join("meta.json"))?;
    let (n, d) = (meta.num_nodes, meta.num_features);

    let x_path = dir.join("x.csv");
    let mut x = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line_no, line) in open_lines(&x_path)? {
        let line = line.map_err(|e| Error::io(&x_path, e))?;
        if line.is_empty() {
            continue;
        }
        let before = x.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(&x_path, line_no, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(&x_path, line_no, "non-finite feature value"));
            }
            x.push(v);
        }
        if x.len() - before != d {
            return Err(parse_err(
                &x_path,
                line_no,
                format!("{} features, meta.json declares {d}", x.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::dataset(
            &x_path,
            format!("{rows} rows, meta.json declares {n} nodes"),
        ));
    }

    let e_path = dir.join("edges.csv");
    let mut edges = Vec::new();
    for (line_no, line) in open_lines(&e_path)? {
        let line = line.map_err(|e| Error::io(&e_path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(|f| f.trim().parse::<usize>());
        let pair = match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(s)), Some(Ok(t)), None) => (s, t),
            _ => {
                return Err(parse_err(
                    &e_path,
                    line_no,
                    format!("expected \"src,dst\", got {line:?}"),
                ))
            }
        };
        if pair.0 >= n || pair.1 >= n {
            return Err(parse_err(
                &e_path,
                line_no,
                format!("endpoint out of range for {n} nodes"),
            ));
        }
        edges.push(pair);
    }

    let y_path = dir.join("y.csv");
    let mut y = Vec::with_capacity(n);
    for (line_no, line) in open_lines(&y_path)? {
        let line = line.map_err(|e| Error::io(&y_path, e))?;
        if line.is_empty() {
            continue;
        }
        let label: i64 = line
            .trim()
            .parse()
            .map_err(|_| parse_err(&y_path, line_no, format!("not an integer label: {line:?}")))?;
        if label < -1 || label >= meta.num_classes as i64 {
            return Err(parse_err(
                &y_path,
                line_no,
                format!("label {label} outside -1..{}", meta.num_classes),
            ));
        }
        y.push(label);
    }
    if y.len() != n {
        return Err(Error::dataset(
            &y_path,
            format!("{} labels, meta.json declares {n} nodes", y.len()),
        ));
    }

    let s_path = dir.join("split.json");
    let split: SplitSpec = read_json(&s_path)?;
    split.validate(n).map_err(|m| Error::dataset(&s_path, m))?;
    for &i in split.train.iter().chain(&split.val) {
        if y[i] < 0 {
            return Err(Error::dataset(&s_path, format!("split node {i} has no label")));
        }
    }

    Ok(RawNodeData {
        meta,
        x,
        edges,
        y,
        split,
    })
}

/// Validates converter output: everything [`read_neutral`] checks, plus
/// both directions of every edge present exactly once.
pub fn check_converted(dir: &Path) -> Result<RawNodeData> {
    let data = read_neutral(dir)?;
    let path = dir.join("edges.csv");
    let mut sorted = data.edges.clone();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::dataset(&path, format!("duplicate edge {},{}", w[0].0, w[0].1)));
    }
    if let Some(&(s, t)) = sorted.iter().find(|&&(s, t)| sorted.binary_search(&(t, s)).is_err()) {
        return Err(Error::dataset(&path, format!("edge {s},{t} has no reverse {t},{s}")));
    }
    Ok(data)
}

/// Writes `data` into `dir`, creating it if needed. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_neutral(dir: &Path, data: &RawNodeData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    };
    write("meta.json", &|w| {
        serde_json::to_writer(&mut *w, &data.meta)?;
        writeln!(w)
    })?;
    let d = data.meta.num_features;
    write("x.csv", &|w| {
        if d == 0 {
            return (0..data.meta.num_nodes).try_for_each(|_| writeln!(w));
        }
        for row in data.x.chunks(d) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    w.write_all(b",")?;
                }
                write!(w, "{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write("edges.csv", &|w| {
        data.edges.iter().try_for_each(|(s, t)| writeln!(w, "{s},{t}"))
    })?;
    write("y.csv", &|w| data.y.iter().try_for_each(|v| writeln!(w, "{v}")))?;
    write("split.json", &|w| {
        serde_json::to_writer(&mut *w, &data.split)?;
        writeln!(w)
    })
}

pub(crate) fn cache_dir(root: &Path, name: &str) -> PathBuf {
    root.join(".cache").join(name)
}
