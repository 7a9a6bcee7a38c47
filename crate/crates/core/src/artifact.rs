//! On-disk artifacts: a columnar binary bundle for the solver's field
//! stacks (time-major, row-major slices, little-endian f64), CSV slice
//! exports for plotting, and the JSON run manifest that makes every output
//! directory reproducible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldStack, GridSpec, Mat, Surface};
use crate::params::{ModelParams, Pair};
use crate::pde::{CflReport, HamiltonianMode};
use crate::sim::PolicyKind;

const MAGIC: &[u8; 4] = b"CRMK";
const VERSION: u32 = 1;
const KIND_FIELDS: u32 = 1;
const KIND_SURFACE: u32 = 2;

pub const FIELDS_FILE: &str = "fields.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything the scenario engine needs to run without re-solving.
#[derive(Debug, Clone)]
pub struct SolveArtifacts {
    pub grid: GridSpec,
    pub horizon: f64,
    pub x0: Pair,
    pub reservation_meur: f64,
    pub z_c: FieldStack,
    pub z_d: FieldStack,
    pub alpha_hat: FieldStack,
    pub alpha_pc: FieldStack,
}

fn write_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_header(w: &mut impl Write, kind: u32, g: &GridSpec, horizon: f64) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    write_u64(w, g.n_c as u64)?;
    write_u64(w, g.n_d as u64)?;
    write_u64(w, g.n_t as u64)?;
    for v in [g.x_c_min, g.x_c_max, g.x_d_min, g.x_d_max, horizon] {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, expect_kind: u32) -> Result<(GridSpec, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Artifact("bad magic; not a field bundle".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Artifact(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let kind = u32::from_le_bytes(word);
    if kind != expect_kind {
        return Err(Error::Artifact(format!("unexpected artifact kind {kind}")));
    }
    let n_c = read_u64(r)? as usize;
    let n_d = read_u64(r)? as usize;
    let n_t = read_u64(r)? as usize;
    let x_c_min = read_f64(r)?;
    let x_c_max = read_f64(r)?;
    let x_d_min = read_f64(r)?;
    let x_d_max = read_f64(r)?;
    let horizon = read_f64(r)?;
    Ok((GridSpec { x_c_min, x_c_max, x_d_min, x_d_max, n_c, n_d, n_t }, horizon))
}

fn write_stack(w: &mut impl Write, stack: &FieldStack) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(1 << 16);
    for m in stack {
        buf.clear();
        for &v in &m.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_stack(r: &mut impl Read, g: &GridSpec) -> Result<FieldStack> {
    let per_slice = (g.n_c + 1) * (g.n_d + 1);
    let mut stack = Vec::with_capacity(g.n_t + 1);
    let mut buf = vec![0u8; per_slice * 8];
    for _ in 0..=g.n_t {
        r.read_exact(&mut buf)?;
        let mut m = Mat::for_grid(g);
        for (dst, chunk) in m.data.iter_mut().zip(buf.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        stack.push(m);
    }
    Ok(stack)
}

/// Write the field bundle (`z_c`, `z_d`, recommended effort, stand-alone
/// effort) with its grid metadata.
pub fn write_fields(path: &Path, a: &SolveArtifacts) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, KIND_FIELDS, &a.grid, a.horizon)?;
    for v in [a.x0.c, a.x0.d, a.reservation_meur] {
        write_f64(&mut w, v)?;
    }
    for stack in [&a.z_c, &a.z_d, &a.alpha_hat, &a.alpha_pc] {
        write_stack(&mut w, stack)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<SolveArtifacts> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?,
    );
    let (grid, horizon) = read_header(&mut r, KIND_FIELDS)?;
    let x0 = Pair::new(read_f64(&mut r)?, read_f64(&mut r)?);
    let reservation_meur = read_f64(&mut r)?;
    let z_c = read_stack(&mut r, &grid)?;
    let z_d = read_stack(&mut r, &grid)?;
    let alpha_hat = read_stack(&mut r, &grid)?;
    let alpha_pc = read_stack(&mut r, &grid)?;
    Ok(SolveArtifacts { grid, horizon, x0, reservation_meur, z_c, z_d, alpha_hat, alpha_pc })
}

/// Full value-surface dump (optional; large).
pub fn write_surface(path: &Path, s: &Surface, horizon: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, KIND_SURFACE, &s.grid, horizon)?;
    write_stack(&mut w, &s.slices)?;
    w.flush()?;
    Ok(())
}

pub fn read_surface(path: &Path) -> Result<Surface> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?,
    );
    let (grid, _horizon) = read_header(&mut r, KIND_SURFACE)?;
    let slices = read_stack(&mut r, &grid)?;
    Ok(Surface { grid, slices })
}

/// One grid slice as CSV (`x_c_gw, x_d_gw, value`), for external plotting.
pub fn write_slice_csv(path: &Path, m: &Mat, g: &GridSpec, value_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x_c_gw", "x_d_gw", value_name])?;
    for i in 0..=g.n_c {
        for j in 0..=g.n_d {
            w.write_record([g.x_c(i).to_string(), g.x_d(j).to_string(), m.at(i, j).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reproducibility manifest written next to every output. Contains
/// everything needed to regenerate the directory byte for byte. No
/// timestamps by design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: ModelParams,
    pub grid: GridSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_file_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveManifest {
    pub hamiltonian: HamiltonianMode,
    pub cfl: CflReport,
    pub reservation_meur: f64,
    pub surfaces_dumped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub master_seed: u64,
    pub n_paths: usize,
    pub policies: Vec<PolicyKind>,
    pub interpolate: bool,
}

impl RunManifest {
    pub fn new(command: &str, params: &ModelParams, grid: &GridSpec) -> Self {
        RunManifest {
            tool: "crmkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            params: params.clone(),
            grid: *grid,
            params_file_sha256: None,
            solve: None,
            simulate: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Artifact(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Artifact(format!("manifest parse: {e}")))
    }
}
