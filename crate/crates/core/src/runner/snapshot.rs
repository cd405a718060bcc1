//! Self-describing binary snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "ZKCYSNAP"
//! version   u32
//! hlen      u64      length of the JSON header
//! header    hlen bytes of UTF-8 JSON
//! count     u64      number of f64 values (N·M)
//! payload   count × f64 LE, x-major: all transverse values of x_0, then x_1, ...
//! checksum  32 bytes SHA-256 of everything above
//! ```

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SimConfig;
use crate::dynamics::{Discretization, Field};
use crate::error::{Result, ZkError};
use crate::par::Execution;
use crate::spectral::TorusGrid;
use crate::transverse::RadialLayout;

pub const MAGIC: &[u8; 8] = b"ZKCYSNAP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub rho0: f64,
    pub rho1: f64,
    pub n_inner: usize,
    pub n_outer: usize,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

impl GridMeta {
    pub fn of(disc: &Discretization) -> Self {
        let l = disc.layout();
        Self {
            l: disc.grid.l,
            n: disc.grid.n,
            rho0: l.rho0,
            rho1: l.rho1,
            n_inner: l.n_inner,
            n_outer: l.n_outer,
            x: disc.grid.nodes.clone(),
            rho: l.physical_rho.clone(),
        }
    }

    pub fn discretization(&self, exec: Execution) -> Result<Arc<Discretization>> {
        let grid = TorusGrid::new(self.l, self.n)?;
        let layout = RadialLayout::new(self.rho0, self.rho1, self.n_inner, self.n_outer)?;
        Ok(Discretization::new(grid, layout, exec))
    }

    /// Names of the scalar parameters that differ, with both values.
    pub fn differences(&self, other: &GridMeta) -> Vec<String> {
        let mut out = vec![];
        let mut cmp = |name: &str, a: String, b: String| {
            if a != b {
                out.push(format!("{name}: {a} vs {b}"));
            }
        };
        cmp("L", self.l.to_string(), other.l.to_string());
        cmp("N", self.n.to_string(), other.n.to_string());
        cmp("rho0", self.rho0.to_string(), other.rho0.to_string());
        cmp("rho1", self.rho1.to_string(), other.rho1.to_string());
        cmp("n_inner", self.n_inner.to_string(), other.n_inner.to_string());
        cmp("n_outer", self.n_outer.to_string(), other.n_outer.to_string());
        out
    }

    /// Refuses any difference in grid or layout.
    pub fn ensure_same(&self, other: &GridMeta) -> Result<()> {
        let diff = self.differences(other);
        if diff.is_empty() {
            Ok(())
        } else {
            Err(ZkError::GridMismatch(diff.join("; ")))
        }
    }
}

/// What a snapshot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotKind {
    State,
    GroundState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub kind: SnapshotKind,
    pub t: f64,
    pub step: usize,
    /// L∞ of the run's initial data, the blow-up detector's reference.
    pub linf_reference: f64,
    /// Ground-state residual max-norm; absent for evolution states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    pub config: SimConfig,
    pub grid: GridMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    /// N × M values, rows indexed by x.
    pub values: DMatrix<f64>,
}

fn corrupt(msg: impl Into<String>) -> ZkError {
    ZkError::Snapshot(msg.into())
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated snapshot"))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn read_u64(bytes: &[u8], at: &mut usize) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, at, 8)?.try_into().expect("8 bytes")))
}

impl Snapshot {
    pub fn from_field(field: &Field, header: SnapshotHeader) -> Result<Self> {
        let meta = GridMeta::of(&field.disc);
        header.grid.ensure_same(&meta)?;
        Ok(Self {
            header,
            values: field.values.clone(),
        })
    }

    pub fn field(&self, exec: Execution) -> Result<Field> {
        let disc = self.header.grid.discretization(exec)?;
        self.field_on(&disc)
    }

    /// The values on an existing discretization of the same shape.
    pub fn field_on(&self, disc: &Arc<Discretization>) -> Result<Field> {
        self.header.grid.ensure_same(&GridMeta::of(disc))?;
        Field::from_values(disc, self.values.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)
            .map_err(|e| corrupt(format!("cannot encode header: {e}")))?;
        let count = self.values.len();
        let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 + 8 * count + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for row in self.values.row_iter() {
            for v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 + 8 {
            return Err(corrupt("file too short"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(body);
        if digest.as_slice() != sum {
            return Err(corrupt(format!(
                "checksum mismatch: stored {}, computed {}",
                hex(sum),
                hex(&digest)
            )));
        }
        let mut at = 0;
        if take(body, &mut at, 8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(take(body, &mut at, 4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let hlen = read_u64(body, &mut at)? as usize;
        let header: SnapshotHeader = serde_json::from_slice(take(body, &mut at, hlen)?)
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let count = read_u64(body, &mut at)? as usize;
        let (n, m) = (header.grid.x.len(), header.grid.rho.len());
        if count != n * m || n != header.grid.n || m != header.grid.n_inner + header.grid.n_outer + 2 {
            return Err(corrupt(format!("payload of {count} values does not match a {n}×{m} grid")));
        }
        let payload = take(body, &mut at, 8 * count)?;
        if at != body.len() {
            return Err(corrupt("trailing bytes before checksum"));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            header,
            values: DMatrix::from_row_slice(n, m, &data),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            ZkError::Snapshot(m) => corrupt(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
