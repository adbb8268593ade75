//! Model files: a flat little-endian binary container plus a plain-text
//! sidecar.
//!
//! Layout: magic `WMFLAB01`, kind tag (u8), `n_users`, `n_items`, `rank`
//! (u64), `alpha`, `lambda` (f64), `seed` (u64), then each factor's entries
//! as column-major f64: `U` then `V` for factor models, `B` for full rank.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::train::{FactorModel, FullRankModel, Hyperparameters, Model, ModelKind};

const MAGIC: &[u8; 8] = b"WMFLAB01";

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let h = model.hyper();
    w.write_all(MAGIC)?;
    w.write_all(&[model.kind().tag()])?;
    for v in [
        model.n_users() as u64,
        model.n_items() as u64,
        h.rank as u64,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&h.alpha.to_le_bytes())?;
    w.write_all(&h.lambda.to_le_bytes())?;
    w.write_all(&h.seed.to_le_bytes())?;
    let factors: Vec<&DenseMatrix> = match model {
        Model::Factor(m) => vec![&m.u, &m.v],
        Model::FullRank(m) => vec![&m.b],
    };
    for f in factors {
        let mut buf = Vec::with_capacity(f.as_slice().len() * 8);
        for x in f.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_matrix<R: Read>(r: &mut R, n_rows: usize, n_cols: usize) -> Result<DenseMatrix> {
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Error::Format("factor size overflows".into()))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_column_major(n_rows, n_cols, data)
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let kind = ModelKind::from_tag(tag[0])
        .ok_or_else(|| Error::Format(format!("unknown kind tag {}", tag[0])))?;
    let n_users = read_u64(&mut r)? as usize;
    let n_items = read_u64(&mut r)? as usize;
    let rank = read_u64(&mut r)? as usize;
    let alpha = read_f64(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let hyper = Hyperparameters {
        alpha,
        lambda,
        rank,
        seed,
    };
    let model = match kind {
        ModelKind::FullRank => Model::FullRank(FullRankModel {
            b: read_matrix(&mut r, n_items, n_items)?,
            n_users,
            hyper,
        }),
        kind => {
            let u_rows = if kind == ModelKind::Wmf {
                n_users
            } else {
                n_items
            };
            let u = read_matrix(&mut r, u_rows, rank)?;
            let v = read_matrix(&mut r, n_items, rank)?;
            Model::Factor(FactorModel {
                kind,
                u,
                v,
                n_users,
                hyper,
            })
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after factors".into()));
    }
    Ok(model)
}

/// Key-value description written next to the binary file.
pub fn metadata_text(model: &Model) -> String {
    let h = model.hyper();
    let mut s = String::new();
    s.push_str("format = WMFLAB01\n");
    s.push_str(&format!("kind = {}\n", model.kind()));
    s.push_str(&format!("n_users = {}\n", model.n_users()));
    s.push_str(&format!("n_items = {}\n", model.n_items()));
    s.push_str(&format!("rank = {}\n", h.rank));
    s.push_str(&format!("alpha = {}\n", h.alpha));
    s.push_str(&format!("lambda = {}\n", h.lambda));
    s.push_str(&format!("seed = {}\n", h.seed));
    match model {
        Model::Factor(m) => {
            s.push_str(&format!("u_shape = {}x{}\n", m.u.n_rows(), m.u.n_cols()));
            s.push_str(&format!("v_shape = {}x{}\n", m.v.n_rows(), m.v.n_cols()));
        }
        Model::FullRank(m) => s.push_str(&format!("b_shape = {}x{}\n", m.b.n_rows(), m.b.n_cols())),
    }
    s.push_str("layout = column-major little-endian f64\n");
    s
}

fn sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.txt");
    PathBuf::from(p)
}

/// Writes `path` and `path.meta.txt`.
pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    fs::write(path, buf)?;
    fs::write(sidecar(path), metadata_text(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(fs::File::open(path)?)
}
