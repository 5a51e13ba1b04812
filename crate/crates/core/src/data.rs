//! Dataset loading, canonical file formats, and synthetic graph generation.
//!
//! A dataset directory holds three files:
//!
//! ```text
//! <name>/edges.txt          whitespace/comma separated `src dst` pairs, 0-based
//! <name>/features.{csv|bin} dense node features, one row per node
//! <name>/labels.{csv|bin}   one class index per node
//! ```
//!
//! The binary format is `DRLB` magic, a version byte, a dtype byte
//! (1 = f32, 2 = i32), two reserved bytes, u64 LE rows, u64 LE cols, then
//! row-major little-endian values. It round-trips bit-exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Labels, NodeFeatures};

const MAGIC: &[u8; 4] = b"DRLB";
const FORMAT_VERSION: u8 = 1;
const DTYPE_F32: u8 = 1;
const DTYPE_I32: u8 = 2;

/// What the loader cleaned out of a raw edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

/// Parse a `src dst` edge list. Blank lines and `#` comments are skipped.
pub fn parse_edge_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split(|c: char| c == ',' || c.is_whitespace());
        let mut next_index = || -> Result<usize> {
            let tok = parts
                .by_ref()
                .find(|t| !t.is_empty())
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: "expected `src dst`".to_string(),
                })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("invalid node index `{tok}`"),
            })
        };
        let src = next_index()?;
        let dst = next_index()?;
        edges.push((src, dst));
    }
    Ok(edges)
}

/// Deduplicate edges and drop self-loops, counting both.
pub fn clean_edges(raw: &[(usize, usize)]) -> (Vec<(usize, usize)>, LoadReport) {
    let mut report = LoadReport::default();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw.len());
    for &(i, j) in raw {
        if i == j {
            report.self_loops += 1;
        } else {
            edges.push((i, j));
        }
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    report.duplicate_edges = before - edges.len();
    (edges, report)
}

/// Load a dataset from explicit file paths. The node count comes from the
/// feature matrix; out-of-range edge indices and row-count mismatches are
/// rejected.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
) -> Result<(DirectedGraph, NodeFeatures, Labels, LoadReport)> {
    let x = read_features(feature_path)?;
    let n = x.nrows();
    let y = read_labels(label_path)?;
    if y.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {} feature rows",
            y.len(),
            n
        )));
    }
    let raw = parse_edge_file(edge_path)?;
    if let Some(&(i, j)) = raw.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::graph(format!(
            "edge ({i}, {j}) out of range for n={n} in {}",
            edge_path.display()
        )));
    }
    let (edges, report) = clean_edges(&raw);
    let g = DirectedGraph::new(n, &edges)?;
    let features = NodeFeatures::new(x)?;
    let labels = Labels::from_vec(y);
    Ok((g, features, labels, report))
}

fn resolve(dir: &Path, stem: &str) -> Result<PathBuf> {
    let bin = dir.join(format!("{stem}.bin"));
    if bin.exists() {
        return Ok(bin);
    }
    let csv = dir.join(format!("{stem}.csv"));
    if csv.exists() {
        return Ok(csv);
    }
    Err(Error::MissingPrerequisite(format!(
        "neither {stem}.bin nor {stem}.csv found in {}; expected layout \
         <dataset>/edges.txt, <dataset>/features.{{csv|bin}}, <dataset>/labels.{{csv|bin}}",
        dir.display()
    )))
}

/// Load a dataset directory (`edges.txt` + `features.*` + `labels.*`).
pub fn load_dataset(dir: &Path) -> Result<(DirectedGraph, NodeFeatures, Labels, LoadReport)> {
    let edges = dir.join("edges.txt");
    if !edges.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; expected layout <dataset>/edges.txt, \
             <dataset>/features.{{csv|bin}}, <dataset>/labels.{{csv|bin}}",
            edges.display()
        )));
    }
    load_graph(&edges, &resolve(dir, "features")?, &resolve(dir, "labels")?)
}

/// Write a dataset directory in the canonical binary layout.
pub fn write_dataset(
    dir: &Path,
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_edges(&dir.join("edges.txt"), g)?;
    write_matrix_f32(&dir.join("features.bin"), x.matrix())?;
    write_labels_i32(&dir.join("labels.bin"), y.as_slice())?;
    Ok(())
}

pub fn write_edges(path: &Path, g: &DirectedGraph) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, j) in g.edges() {
        writeln!(w, "{i} {j}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_matrix_f32(path),
        _ => read_matrix_csv(path),
    }
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let raw: Vec<i64> = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_labels_i32(path)?.into_iter().map(i64::from).collect(),
        _ => {
            let file = fs::File::open(path)?;
            let mut out = Vec::new();
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                out.push(t.parse::<i64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("invalid label `{t}`"),
                })?);
            }
            out
        }
    };
    raw.into_iter()
        .map(|v| {
            usize::try_from(v).map_err(|_| Error::config(format!("negative label {v}")))
        })
        .collect()
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = fs::File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("invalid float `{tok}`"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("ragged row: {} cols, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::shape(format!("csv matrix: {e}")))
}

fn write_header(w: &mut impl Write, dtype: u8, rows: u64, cols: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[FORMAT_VERSION, dtype, 0, 0])?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<(u8, usize, usize)> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "truncated binary header".to_string(),
    })?;
    if &head[0..4] != MAGIC {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "bad magic; not a DRLB binary file".to_string(),
        });
    }
    if head[4] != FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("unsupported version {}", head[4]),
        });
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    Ok((head[5], rows, cols))
}

pub fn write_matrix_f32(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_header(&mut w, DTYPE_F32, m.nrows() as u64, m.ncols() as u64)?;
    for &v in m.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_f32(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let (dtype, rows, cols) = read_header(&mut r, path)?;
    if dtype != DTYPE_F32 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("expected f32 payload, found dtype {dtype}"),
        });
    }
    let mut buf = vec![0u8; rows.checked_mul(cols).and_then(|c| c.checked_mul(4)).ok_or_else(
        || Error::shape("matrix too large".to_string()),
    )?];
    r.read_exact(&mut buf).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "truncated f32 payload".to_string(),
    })?;
    let data: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::shape(e.to_string()))
}

pub fn write_labels_i32(path: &Path, y: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_header(&mut w, DTYPE_I32, y.len() as u64, 1)?;
    for &v in y {
        w.write_all(&(v as i32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_i32(path: &Path) -> Result<Vec<i32>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let (dtype, rows, cols) = read_header(&mut r, path)?;
    if dtype != DTYPE_I32 || cols != 1 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "expected i32 column vector".to_string(),
        });
    }
    let mut buf = vec![0u8; rows * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "truncated i32 payload".to_string(),
    })?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Synthetic directed stochastic block model with class-informative sparse
/// binary features, for network-free testing.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SbmConfig {
    pub nodes: usize,
    pub classes: usize,
    /// Expected out-degree per node.
    pub avg_out_degree: f64,
    /// Fraction of a node's out-edges that stay within its class.
    pub homophily: f64,
    pub feature_dim: usize,
    /// Active (set-to-one) features per node.
    pub active_features: usize,
    /// Probability that an active feature is drawn outside the class block.
    pub feature_noise: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            nodes: 400,
            classes: 4,
            avg_out_degree: 5.0,
            homophily: 0.85,
            feature_dim: 64,
            active_features: 8,
            feature_noise: 0.1,
        }
    }
}

/// Generate a directed SBM graph. Deterministic for a fixed seed.
pub fn generate_sbm(cfg: &SbmConfig, seed: u64) -> Result<(DirectedGraph, NodeFeatures, Labels)> {
    if cfg.classes == 0 || cfg.nodes < cfg.classes {
        return Err(Error::config("sbm: need at least one node per class"));
    }
    if !(0.0..=1.0).contains(&cfg.homophily) || !(0.0..=1.0).contains(&cfg.feature_noise) {
        return Err(Error::config("sbm: homophily and feature_noise must be in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.nodes;

    // Balanced class assignment, shuffled.
    let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.classes).collect();
    labels.shuffle(&mut rng);

    let class_size = n / cfg.classes;
    let p_in = (cfg.homophily * cfg.avg_out_degree / (class_size.max(2) as f64 - 1.0)).min(1.0);
    let p_out = ((1.0 - cfg.homophily) * cfg.avg_out_degree
        / ((n - class_size).max(1) as f64))
        .min(1.0);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let g = DirectedGraph::new(n, &edges)?;

    let block = (cfg.feature_dim / cfg.classes).max(1);
    let mut x = Array2::<f64>::zeros((n, cfg.feature_dim));
    for i in 0..n {
        let class_lo = (labels[i] * block).min(cfg.feature_dim - 1);
        let class_hi = (class_lo + block).min(cfg.feature_dim);
        for _ in 0..cfg.active_features {
            let f = if rng.random::<f64>() < cfg.feature_noise {
                rng.random_range(0..cfg.feature_dim)
            } else {
                rng.random_range(class_lo..class_hi)
            };
            x[[i, f]] = 1.0;
        }
    }

    Ok((g, NodeFeatures::new(x)?, Labels::new(labels, cfg.classes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_edges_counts_dups_and_loops() {
        // {(0,1),(1,2),(0,1)} -> m=2 after dedup.
        let (edges, report) = clean_edges(&[(0, 1), (1, 2), (0, 1), (3, 3)]);
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
        assert_eq!(report.duplicate_edges, 1);
        assert_eq!(report.self_loops, 1);
    }

    #[test]
    fn dataset_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = DirectedGraph::new(3, &[(0, 1), (2, 1)]).unwrap();
        let x = NodeFeatures::new(
            Array2::from_shape_vec((3, 2), vec![0.5, 1.0, -2.25, 0.0, 3.5, 7.0]).unwrap(),
        )
        .unwrap();
        let y = Labels::new(vec![0, 1, 0], 2).unwrap();
        write_dataset(dir.path(), &g, &x, &y).unwrap();
        let (g2, x2, y2, report) = load_dataset(dir.path()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(x.matrix(), x2.matrix());
        assert_eq!(y.as_slice(), y2.as_slice());
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn csv_matrix_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edges.txt"), "0,1\n1 2\n").unwrap();
        std::fs::write(dir.path().join("features.csv"), "1.0,0.0\n0.0,1.0\n1.0,1.0\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "0\n1\n1\n").unwrap();
        let (g, x, y, _) = load_dataset(dir.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(x.dim(), 2);
        assert_eq!(y.num_classes(), 2);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edges.txt"), "0 9\n").unwrap();
        std::fs::write(dir.path().join("features.csv"), "1.0\n0.0\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "0\n1\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn label_row_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edges.txt"), "0 1\n").unwrap();
        std::fs::write(dir.path().join("features.csv"), "1.0\n0.0\n").unwrap();
        std::fs::write(dir.path().join("labels.csv"), "0\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn sbm_is_deterministic() {
        let cfg = SbmConfig {
            nodes: 60,
            classes: 3,
            ..SbmConfig::default()
        };
        let (g1, x1, y1) = generate_sbm(&cfg, 7).unwrap();
        let (g2, x2, y2) = generate_sbm(&cfg, 7).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(x1.matrix(), x2.matrix());
        assert_eq!(y1.as_slice(), y2.as_slice());
        assert!(g1.num_edges() > 0);
    }
}
