//! Plain-text exchange formats for the standalone preconditioning
//! workflow: a sparse matrix file and a block-spec sidecar.
//!
//! Matrix file: a header line `rows cols nnz`, then one `i j value` triplet
//! per line with 1-based indices in row-major order. Values use Rust's
//! shortest round-trip float formatting, so a write/read cycle reproduces
//! the matrix bit-exactly.
//!
//! Block-spec sidecar: a header line `fields tag:count ...` describing the
//! index layout, then one line per block: the field tag followed by the
//! block's sorted global indices (1-based). Singleton indices are the
//! complement and are not listed.

use crate::cbas::{assemble_cbas, build_mixed, BlockSpec, CbasError};
use crate::sparse::{CooBuilder, SparseMatrix};
use crate::spline::FieldLayout;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed {what} at line {line}")]
    Malformed { what: &'static str, line: usize },
    #[error("inconsistent field layout: {0}")]
    BadLayout(String),
    #[error(transparent)]
    Preconditioner(#[from] CbasError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldTag {
    Scalar,
    VelocityX,
    VelocityY,
    Pressure,
}

impl FieldTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldTag::Scalar => "s",
            FieldTag::VelocityX => "u0",
            FieldTag::VelocityY => "u1",
            FieldTag::Pressure => "p",
        }
    }

    fn parse(s: &str) -> Option<FieldTag> {
        match s {
            "s" => Some(FieldTag::Scalar),
            "u0" => Some(FieldTag::VelocityX),
            "u1" => Some(FieldTag::VelocityY),
            "p" => Some(FieldTag::Pressure),
            _ => None,
        }
    }
}

/// In-memory form of the block sidecar; indices are 0-based here and
/// 1-based in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFile {
    pub fields: Vec<(FieldTag, usize)>,
    pub blocks: Vec<(FieldTag, Vec<usize>)>,
}

impl BlockFile {
    pub fn total_dim(&self) -> usize {
        self.fields.iter().map(|(_, n)| n).sum()
    }

    /// Layout of a mixed file (u0, u1, p).
    pub fn mixed_layout(&self) -> Result<FieldLayout, ExchangeError> {
        let get = |tag: FieldTag| {
            self.fields
                .iter()
                .find(|(t, _)| *t == tag)
                .map(|(_, n)| *n)
                .ok_or_else(|| ExchangeError::BadLayout(format!("missing field {}", tag.as_str())))
        };
        let u0 = get(FieldTag::VelocityX)?;
        let u1 = get(FieldTag::VelocityY)?;
        let p = get(FieldTag::Pressure)?;
        if u0 != u1 {
            return Err(ExchangeError::BadLayout(
                "velocity components have different sizes".into(),
            ));
        }
        Ok(FieldLayout { n_u: u0, n_p: p })
    }
}

pub fn write_matrix(w: &mut impl Write, m: &SparseMatrix) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix(r: &mut impl BufRead) -> Result<SparseMatrix, ExchangeError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(ExchangeError::Malformed { what: "matrix header", line: 1 })?;
    let header = header?;
    let mut it = header.split_whitespace();
    let mut parse_dim = |line: usize| {
        it.next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or(ExchangeError::Malformed { what: "matrix header", line })
    };
    let rows = parse_dim(1)?;
    let cols = parse_dim(1)?;
    let nnz = parse_dim(1)?;
    let mut b = CooBuilder::new(rows, cols);
    let mut read = 0usize;
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || ExchangeError::Malformed { what: "matrix triplet", line: k + 1 };
        let mut it = line.split_whitespace();
        let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let j: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(bad());
        }
        b.push(i - 1, j - 1, v);
        read += 1;
    }
    if read != nnz {
        return Err(ExchangeError::Malformed { what: "matrix nnz count", line: 1 });
    }
    Ok(b.build())
}

pub fn write_blocks(w: &mut impl Write, file: &BlockFile) -> std::io::Result<()> {
    write!(w, "fields")?;
    for (tag, n) in &file.fields {
        write!(w, " {}:{}", tag.as_str(), n)?;
    }
    writeln!(w)?;
    for (tag, block) in &file.blocks {
        write!(w, "{}", tag.as_str())?;
        for &i in block {
            write!(w, " {}", i + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_blocks(r: &mut impl BufRead) -> Result<BlockFile, ExchangeError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(ExchangeError::Malformed { what: "block header", line: 1 })?;
    let header = header?;
    let mut it = header.split_whitespace();
    if it.next() != Some("fields") {
        return Err(ExchangeError::Malformed { what: "block header", line: 1 });
    }
    let mut fields = Vec::new();
    for tok in it {
        let (tag, count) = tok
            .split_once(':')
            .ok_or(ExchangeError::Malformed { what: "block header", line: 1 })?;
        let tag = FieldTag::parse(tag).ok_or(ExchangeError::Malformed { what: "block header", line: 1 })?;
        let count: usize = count
            .parse()
            .map_err(|_| ExchangeError::Malformed { what: "block header", line: 1 })?;
        fields.push((tag, count));
    }
    let mut blocks = Vec::new();
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it
            .next()
            .and_then(FieldTag::parse)
            .ok_or(ExchangeError::Malformed { what: "block line", line: k + 1 })?;
        let mut idx = Vec::new();
        for tok in it {
            let i: usize = tok
                .parse()
                .map_err(|_| ExchangeError::Malformed { what: "block line", line: k + 1 })?;
            if i == 0 {
                return Err(ExchangeError::Malformed { what: "block line", line: k + 1 });
            }
            idx.push(i - 1);
        }
        blocks.push((tag, idx));
    }
    Ok(BlockFile { fields, blocks })
}

/// Rebuilds the preconditioner from an ingested matrix and block sidecar:
/// the single-field construction when the file declares one scalar field,
/// the mixed Schur construction when it declares u0/u1/p.
pub fn preconditioner_from_exchange(
    matrix: &SparseMatrix,
    blocks: &BlockFile,
    rescale: bool,
) -> Result<SparseMatrix, ExchangeError> {
    if blocks.total_dim() != matrix.n_rows() {
        return Err(ExchangeError::BadLayout(format!(
            "matrix dimension {} against field total {}",
            matrix.n_rows(),
            blocks.total_dim()
        )));
    }
    let scalar_only = blocks.fields.len() == 1 && blocks.fields[0].0 == FieldTag::Scalar;
    if scalar_only {
        let n = blocks.fields[0].1;
        let raw: Vec<Vec<usize>> = blocks.blocks.iter().map(|(_, b)| b.clone()).collect();
        let spec = BlockSpec::new(n, raw)?;
        let mut s = assemble_cbas(matrix, &spec, matrix)?;
        if rescale {
            s = crate::cbas::multiplicity_rescale(&s);
        }
        Ok(s.matrix)
    } else {
        let layout = blocks.mixed_layout()?;
        let n_v = layout.velocity_total();
        let total = layout.total();
        let a_vu = matrix.extract_sparse(0..n_v, 0..n_v);
        let a_vp = matrix.extract_sparse(0..n_v, n_v..total);
        let a_qu = matrix.extract_sparse(n_v..total, 0..n_v);
        let mut vel_blocks = Vec::new();
        let mut pres_blocks = Vec::new();
        for (tag, b) in &blocks.blocks {
            match tag {
                FieldTag::VelocityX | FieldTag::VelocityY => vel_blocks.push(b.clone()),
                FieldTag::Pressure => pres_blocks.push(b.iter().map(|&i| i - n_v).collect()),
                FieldTag::Scalar => {
                    return Err(ExchangeError::BadLayout("scalar block in a mixed file".into()))
                }
            }
        }
        let vspec = BlockSpec::new(n_v, vel_blocks)?;
        let pspec = BlockSpec::new(layout.n_p, pres_blocks)?;
        let m = build_mixed(&a_vu, &a_vp, &a_qu, &vspec, &pspec, &layout, rescale)?;
        Ok(m.as_sparse())
    }
}
