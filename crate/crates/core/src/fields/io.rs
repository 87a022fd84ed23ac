//! Field files: flat little-endian f64 payload (`<stem>.bin`) plus a JSON
//! sidecar (`<stem>.json`) describing the layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{Grid2, PhaseField, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSidecar {
    pub nx: usize,
    pub ny: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    /// `[xmin, ymin, xmax, ymax]`
    pub bbox: [f64; 4],
    /// `"scalar"` or `"phase"`.
    pub kind: String,
    /// Axis order of the payload, slowest first.
    pub layout: String,
}

pub fn sidecar_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

pub fn payload_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

fn encode(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!("payload length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_pair(stem: &Path, meta: &FieldSidecar, values: &[f64]) -> Result<Vec<PathBuf>> {
    let bin = payload_path(stem);
    let json = sidecar_path(stem);
    fs::write(&bin, encode(values))?;
    fs::write(&json, serde_json::to_string_pretty(meta)?)?;
    Ok(vec![bin, json])
}

fn read_pair(stem: &Path) -> Result<(FieldSidecar, Vec<f64>)> {
    let meta: FieldSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(stem))?)?;
    let values = decode(&fs::read(payload_path(stem))?)?;
    Ok((meta, values))
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn write_scalar_field(stem: &Path, f: &ScalarField) -> Result<Vec<PathBuf>> {
    let meta = FieldSidecar {
        nx: f.grid.nx,
        ny: f.grid.ny,
        n_theta: None,
        bbox: f.grid.bbox,
        kind: "scalar".into(),
        layout: "y,x".into(),
    };
    write_pair(stem, &meta, &f.values)
}

pub fn write_phase_field(stem: &Path, f: &PhaseField) -> Result<Vec<PathBuf>> {
    let meta = FieldSidecar {
        nx: f.grid.nx,
        ny: f.grid.ny,
        n_theta: Some(f.n_theta),
        bbox: f.grid.bbox,
        kind: "phase".into(),
        layout: "theta,y,x".into(),
    };
    write_pair(stem, &meta, &f.values)
}

pub fn read_scalar_field(stem: &Path) -> Result<ScalarField> {
    let (meta, values) = read_pair(stem)?;
    if meta.kind != "scalar" {
        return Err(Error::Format(format!("expected a scalar field, sidecar says {:?}", meta.kind)));
    }
    ScalarField::from_values(Grid2::new(meta.nx, meta.ny, meta.bbox)?, values)
}

pub fn read_phase_field(stem: &Path) -> Result<PhaseField> {
    let (meta, values) = read_pair(stem)?;
    let n_theta = match (meta.kind.as_str(), meta.n_theta) {
        ("phase", Some(n)) => n,
        _ => return Err(Error::Format("expected a phase field with n_theta".into())),
    };
    PhaseField::from_values(Grid2::new(meta.nx, meta.ny, meta.bbox)?, n_theta, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Circle, Vec2};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn scalar_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 35)) {
            let dir = tempfile::tempdir().unwrap();
            let grid = Grid2::new(5, 7, [-1.3, -0.1, 0.7, 2.0 / 3.0]).unwrap();
            let f = ScalarField::from_values(grid, vals).unwrap();
            let stem = dir.path().join("f");
            write_scalar_field(&stem, &f).unwrap();
            let back = read_scalar_field(&stem).unwrap();
            prop_assert_eq!(back.grid, f.grid);
            let same = back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn phase_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2::covering(&Circle::new(Vec2::ZERO, 1.3).unwrap(), 6).unwrap();
        let u = PhaseField::from_fn(grid, 4, |p, t| p.x * t.sin() + 0.1).unwrap();
        let stem = dir.path().join("u");
        write_phase_field(&stem, &u).unwrap();
        assert_eq!(read_phase_field(&stem).unwrap(), u);
        assert!(read_scalar_field(&stem).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2::new(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let stem = dir.path().join("g");
        write_scalar_field(&stem, &ScalarField::zeros(grid)).unwrap();
        fs::write(payload_path(&stem), [0u8; 12]).unwrap();
        assert!(read_scalar_field(&stem).is_err());
    }
}
