//! On-disk formats.
//!
//! Matrix blocks: 16-byte header (`b"ATTMAT\0\x01"`, rows as u32 LE, cols as
//! u32 LE) followed by `rows * cols` little-endian f64 values, row-major.
//!
//! Dataset directory:
//!
//! | file          | contents                                               |
//! |---------------|--------------------------------------------------------|
//! | `config.txt`  | generator config as `key = value` lines                |
//! | `vocab.bin`   | `m × d` matrix block                                   |
//! | `products.bin`| `n_products × d` matrix block                          |
//! | `queries.tsv` | per query: product id, then trigram ids, tab-separated |
//! | `edges.tsv`   | one `u\tv` line per undirected edge, `u < v`           |
//!
//! Checkpoint: 24-byte header (`b"ATTCKPT\0"`, version, m, d, N as u32 LE),
//! then the embedding and attention matrix blocks.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::embedder::AttentionModel;
use crate::error::{Error, Result};
use crate::genmodel::SyntheticDataset;
use crate::kv::{fmt_f64, fmt_list, KeyValues};
use crate::linalg::Matrix;
use crate::types::{GeneratorConfig, Query, QueryGraph};

pub const MATRIX_MAGIC: [u8; 8] = *b"ATTMAT\0\x01";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"ATTCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub const DATASET_FILES: [&str; 5] = [
    "config.txt",
    "vocab.bin",
    "products.bin",
    "queries.tsv",
    "edges.tsv",
];

fn to_u32(x: usize, what: &'static str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::format(what, format!("{x} does not fit in u32")))
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&to_u32(m.rows(), "matrix")?.to_le_bytes())?;
    w.write_all(&to_u32(m.cols(), "matrix")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.as_slice().len() * 8);
    for x in m.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Matrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MATRIX_MAGIC {
        return Err(Error::format("matrix", "bad magic"));
    }
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn config_to_kv(c: &GeneratorConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("dim", c.dim);
    kv.set("vocab_size", c.vocab_size);
    kv.set("max_len", c.max_len);
    kv.set("lambda", fmt_f64(c.lambda));
    kv.set("alphas", fmt_list(&c.alphas));
    kv.set("betas", fmt_list(&c.betas));
    kv.set("epsilon_p", fmt_f64(c.epsilon_p));
    kv.set("n_products", c.n_products);
    kv.set("n_queries", c.n_queries);
    kv.set("seed", c.seed);
    kv
}

pub const CONFIG_KEYS: [&str; 10] = [
    "dim",
    "vocab_size",
    "max_len",
    "lambda",
    "alphas",
    "betas",
    "epsilon_p",
    "n_products",
    "n_queries",
    "seed",
];

/// Every key is required. A single-element `alphas`/`betas` list is
/// broadcast to all `max_len` positions.
pub fn config_from_kv(kv: &KeyValues) -> Result<GeneratorConfig> {
    kv.reject_unknown(&CONFIG_KEYS)?;
    let max_len: usize = kv.require("max_len")?;
    let broadcast = |key: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = kv.require_list(key)?;
        Ok(if v.len() == 1 { vec![v[0]; max_len] } else { v })
    };
    let config = GeneratorConfig {
        dim: kv.require("dim")?,
        vocab_size: kv.require("vocab_size")?,
        max_len,
        lambda: kv.require("lambda")?,
        alphas: broadcast("alphas")?,
        betas: broadcast("betas")?,
        epsilon_p: kv.require("epsilon_p")?,
        n_products: kv.require("n_products")?,
        n_queries: kv.require("n_queries")?,
        seed: kv.require("seed")?,
    };
    config.validate()?;
    Ok(config)
}

pub fn write_queries<W: Write>(w: &mut W, queries: &[Query]) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&q.product_id.to_string());
        for t in &q.trigram_ids {
            out.push('\t');
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn parse_queries(text: &str) -> Result<Vec<Query>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let mut fields = line.split('\t').map(|f| {
                f.parse::<usize>()
                    .map_err(|_| Error::format("queries", format!("line {}: bad field {f:?}", i + 1)))
            });
            let product = fields
                .next()
                .ok_or_else(|| Error::format("queries", format!("line {}: empty", i + 1)))??;
            let ids = fields.collect::<Result<Vec<_>>>()?;
            Ok(Query::new(ids, product))
        })
        .collect()
}

pub fn write_edges<W: Write>(w: &mut W, graph: &QueryGraph) -> Result<()> {
    let mut out = String::new();
    for (u, v) in graph.edges() {
        out.push_str(&format!("{u}\t{v}\n"));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn parse_edges(text: &str) -> Result<Vec<(usize, usize)>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format("edges", format!("line {}: {line:?}", i + 1));
            let (u, v) = line.split_once('\t').ok_or_else(bad)?;
            let u: usize = u.parse().map_err(|_| bad())?;
            let v: usize = v.parse().map_err(|_| bad())?;
            if u >= v {
                return Err(bad());
            }
            Ok((u, v))
        })
        .collect()
}

pub fn save_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), config_to_kv(&ds.config).to_text())?;
    let mut buf = Vec::new();
    write_matrix(&mut buf, &ds.vocab)?;
    fs::write(dir.join("vocab.bin"), &buf)?;
    buf.clear();
    write_matrix(&mut buf, &ds.products)?;
    fs::write(dir.join("products.bin"), &buf)?;
    buf.clear();
    write_queries(&mut buf, &ds.queries)?;
    fs::write(dir.join("queries.tsv"), &buf)?;
    buf.clear();
    write_edges(&mut buf, &ds.graph)?;
    fs::write(dir.join("edges.tsv"), &buf)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<SyntheticDataset> {
    let config = config_from_kv(&KeyValues::parse(&fs::read_to_string(dir.join("config.txt"))?)?)?;
    let vocab = read_matrix(&mut fs::File::open(dir.join("vocab.bin"))?)?;
    let products = read_matrix(&mut fs::File::open(dir.join("products.bin"))?)?;
    let queries = parse_queries(&fs::read_to_string(dir.join("queries.tsv"))?)?;
    let edges = parse_edges(&fs::read_to_string(dir.join("edges.tsv"))?)?;
    let purchases = queries.iter().map(|q| vec![(q.product_id, 1)]).collect();
    let graph = QueryGraph::from_edges(queries.len(), edges, purchases)?;
    let ds = SyntheticDataset {
        config,
        vocab,
        products,
        queries,
        graph,
    };
    ds.check_invariants()?;
    Ok(ds)
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &AttentionModel) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    for x in [
        CHECKPOINT_VERSION,
        to_u32(model.vocab_size(), "checkpoint")?,
        to_u32(model.dim(), "checkpoint")?,
        to_u32(model.max_len(), "checkpoint")?,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    write_matrix(w, &model.emb)?;
    write_matrix(w, &model.attn)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<AttentionModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let m = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    let n = read_u32(r)? as usize;
    let emb = read_matrix(r)?;
    let attn = read_matrix(r)?;
    if emb.rows() != m || emb.cols() != d || attn.rows() != n || attn.cols() != d {
        return Err(Error::format("checkpoint", "matrix shapes disagree with header"));
    }
    AttentionModel::from_parts(emb, attn)
}

pub fn save_checkpoint(model: &AttentionModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AttentionModel> {
    read_checkpoint(&mut fs::File::open(path)?)
}
