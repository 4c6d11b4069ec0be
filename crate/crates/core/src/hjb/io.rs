//! Binary solution files: an 8-byte magic, a little-endian `u64` header
//! length, a JSON header, then per level the value, gradient and standard
//! error tensors as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridValueFunction, HJBSolution, HjbOptions, McSpec, TensorGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LVYHJB01";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    grid: TensorGrid,
    times: Vec<f64>,
    residual_history: Vec<f64>,
    c1gamma_norm: f64,
    mc: McSpec,
    options: HjbOptions,
    converged: bool,
    radius: f64,
    gamma_smooth: f64,
    hamiltonian_lipschitz: f64,
    clipped_fraction: f64,
    schedule: String,
    /// Tensor order per level.
    layout: Vec<String>,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated tensor data: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl HJBSolution {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid_fn;
        let header = Header {
            format: "levy-hjb solution v1".into(),
            grid: g.grid.clone(),
            times: g.times.clone(),
            residual_history: self.residual_history.clone(),
            c1gamma_norm: self.c1gamma_norm,
            mc: self.mc,
            options: self.options,
            converged: self.converged,
            radius: self.radius,
            gamma_smooth: self.gamma_smooth,
            hamiltonian_lipschitz: self.hamiltonian_lipschitz,
            clipped_fraction: self.clipped_fraction,
            schedule: self.schedule.clone(),
            layout: vec!["values".into(), "gradients".into(), "std_errors".into()],
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for k in 0..g.times.len() {
            write_f64s(&mut w, &g.values[k])?;
            write_f64s(&mut w, &g.gradients[k])?;
            write_f64s(&mut w, &self.std_errors[k])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short for a solution header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a levy-hjb solution file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| Error::Format("missing header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Format(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)
            .map_err(|_| Error::Format("truncated header".into()))?;
        let h: Header = serde_json::from_slice(&json)?;
        let grid = TensorGrid::new(h.grid.dim, h.grid.nodes_per_axis, h.grid.half_width)?;
        if h.times.len() < 2 {
            return Err(Error::Format("solution needs at least two time levels".into()));
        }
        let n = grid.len();
        let (mut values, mut gradients, mut std_errors) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..h.times.len() {
            values.push(read_f64s(&mut r, n)?);
            gradients.push(read_f64s(&mut r, n * grid.dim)?);
            std_errors.push(read_f64s(&mut r, n)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after tensor data".into()));
        }
        Ok(Self {
            grid_fn: GridValueFunction {
                grid,
                times: h.times,
                values,
                gradients,
            },
            residual_history: h.residual_history,
            c1gamma_norm: h.c1gamma_norm,
            mc: h.mc,
            options: h.options,
            converged: h.converged,
            radius: h.radius,
            gamma_smooth: h.gamma_smooth,
            hamiltonian_lipschitz: h.hamiltonian_lipschitz,
            std_errors,
            clipped_fraction: h.clipped_fraction,
            schedule: h.schedule,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// CSV of one level: `x_1..x_N, u, du_1..du_N, std_error`.
    pub fn write_level_csv<W: Write>(&self, level: usize, mut w: W) -> Result<()> {
        let g = &self.grid_fn;
        if level >= g.times.len() {
            return Err(Error::ParameterOutOfRange {
                name: "level",
                value: level as f64,
                bound: format!("must be < {}", g.times.len()),
            });
        }
        let d = g.grid.dim;
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.push("u".into());
        header.extend((1..=d).map(|i| format!("du_{i}")));
        header.push("std_error".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, x) in g.grid.nodes().iter().enumerate() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", g.values[level][i]));
            row.extend(g.gradients[level][i * d..(i + 1) * d].iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.std_errors[level][i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
