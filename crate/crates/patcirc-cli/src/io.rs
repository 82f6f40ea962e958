//! RVL1 volumes, manifests and the metrics CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use patcirc::grid::Axis;
use sha2::{Digest, Sha256};

use crate::CliError;

const MAGIC: &[u8; 4] = b"RVL1";

/// Row-major array (last axis fastest) with one uniform axis per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl Volume {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, CliError> {
        let n: usize = axes.iter().map(|a| a.len).product();
        if n != values.len() {
            return Err(CliError::Format(format!("{} values for dims of {n} samples", values.len())));
        }
        Ok(Volume { axes, values })
    }

    pub fn payload(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn checksum(&self) -> String {
        sha256_hex(&self.payload())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 20 * self.axes.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.axes.len() as u32).to_le_bytes());
        for a in &self.axes {
            out.extend_from_slice(&(a.len as u32).to_le_bytes());
        }
        for a in &self.axes {
            out.extend_from_slice(&a.start.to_le_bytes());
        }
        for a in &self.axes {
            out.extend_from_slice(&a.step.to_le_bytes());
        }
        out.extend(self.payload());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], CliError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| CliError::Format("truncated volume file".into()))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(CliError::Format("missing RVL1 magic".into()));
        }
        let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if rank == 0 || rank > 16 {
            return Err(CliError::Format(format!("unsupported rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let mut f64s = |n: usize| -> Result<Vec<f64>, CliError> {
            (0..n).map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap()))).collect()
        };
        let starts = f64s(rank)?;
        let steps = f64s(rank)?;
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| CliError::Format("dims overflow".into()))?;
        let values = f64s(total)?;
        if pos != bytes.len() {
            return Err(CliError::Format(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let axes = (0..rank)
            .map(|a| Axis { start: starts[a], step: steps[a], len: dims[a] })
            .collect();
        Ok(Volume { axes, values })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::from_bytes(&fs::read(path).map_err(|e| io_err(path, e))?)
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `key=value` lines, written sorted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut m = Manifest::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Format(format!("manifest line {}: no '='", n + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    /// Fails unless `payload.sha256` matches the volume.
    pub fn verify(&self, vol: &Volume) -> Result<(), CliError> {
        let want = self.get("payload.sha256").ok_or_else(|| CliError::Format("manifest has no payload.sha256".into()))?;
        let got = vol.checksum();
        if want != got {
            return Err(CliError::Checksum { expected: want.to_string(), actual: got });
        }
        Ok(())
    }
}

/// One row of `stage,name,value,units,wall_ms`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub units: String,
    pub wall_ms: f64,
}

impl Metric {
    pub fn new(stage: &str, name: &str, value: f64, units: &str, wall_ms: f64) -> Self {
        Metric { stage: stage.into(), name: name.into(), value, units: units.into(), wall_ms }
    }
}

pub fn write_metrics(path: &Path, rows: &[Metric]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(["stage", "name", "value", "units", "wall_ms"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.stage.clone(), r.name.clone(), format!("{:e}", r.value), r.units.clone(), format!("{:.3}", r.wall_ms)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<Metric>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Format(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| CliError::Format(format!("metrics column {i}: {e}")));
        out.push(Metric { stage: rec[0].into(), name: rec[1].into(), value: num(2)?, units: rec[3].into(), wall_ms: num(4)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol() -> Volume {
        let axes = vec![Axis::new(-1.0, 0.5, 3).unwrap(), Axis::new(0.0, 0.25, 4).unwrap()];
        Volume::new(axes, (0..12).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap()
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let v = vol();
        let b = v.to_bytes();
        assert_eq!(&b[..4], b"RVL1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(b.len(), 8 + 2 * 4 + 2 * 8 + 2 * 8 + 12 * 8);
        let back = Volume::from_bytes(&b).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_bytes(), b);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let b = vol().to_bytes();
        assert!(Volume::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Volume::from_bytes(&bad).is_err());
        let mut long = b;
        long.push(0);
        assert!(Volume::from_bytes(&long).is_err());
    }

    #[test]
    fn zero_payload_checksum() {
        let v = Volume::new(vec![Axis::new(0.0, 1.0, 2).unwrap()], vec![0.0; 2]).unwrap();
        assert_eq!(v.checksum(), sha256_hex(&[0u8; 16]));
    }

    #[test]
    fn manifest_verifies() {
        let v = vol();
        let mut m = Manifest::default();
        m.set("payload.sha256", v.checksum());
        m.set("geometry.kind", "cylinder");
        let m2 = Manifest::parse(&m.to_text()).unwrap();
        assert_eq!(m2, m);
        m2.verify(&v).unwrap();
        let mut w = v.clone();
        w.values[3] += 1e-12;
        assert!(matches!(m2.verify(&w), Err(CliError::Checksum { .. })));
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![Metric::new("invert", "rel_l2_error", 0.0625, "1", 12.5)];
        write_metrics(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("stage,name,value,units,wall_ms\n"));
        assert_eq!(read_metrics(&p).unwrap(), rows);
    }
}
