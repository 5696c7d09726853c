//! CSV point files (`q_index,x0,x1[,x2]`) with a JSON sidecar holding the
//! provenance of the configuration.

use super::law::DisplacementLaw;
use super::sampler::PointConfiguration;
use crate::error::{Result, TrapError};
use crate::geometry::Aabb;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSidecar {
    pub law: DisplacementLaw,
    pub window: Aabb,
    pub seed: u64,
    pub stream: u64,
    pub truncation_radius: f64,
    pub tail_bound: f64,
    pub site_lo: Vec<i64>,
    pub site_dims: Vec<usize>,
    pub far_field: bool,
    pub scale: f64,
}

pub fn write_points_csv<W: Write>(c: &PointConfiguration, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["q_index".to_string()];
    header.extend((0..c.d).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in c.points().enumerate() {
        let mut rec = vec![c.site_index[i].to_string()];
        // Display for f64 is the shortest representation that round-trips.
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> TrapError {
    TrapError::Format(format!("csv: {e}"))
}

/// Parse a points CSV into (site indices, flat coordinates, d).
pub fn read_points_csv<R: Read>(input: R) -> Result<(Vec<i64>, Vec<f64>, usize)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let d = headers.len().saturating_sub(1);
    if !(2..=3).contains(&d) || &headers[0] != "q_index" {
        return Err(TrapError::Format(
            "expected header q_index,x0,x1[,x2]".into(),
        ));
    }
    let mut idx = Vec::new();
    let mut coords = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        idx.push(
            rec[0]
                .parse::<i64>()
                .map_err(|e| TrapError::Format(format!("q_index: {e}")))?,
        );
        for k in 0..d {
            coords.push(
                rec[k + 1]
                    .parse::<f64>()
                    .map_err(|e| TrapError::Format(format!("x{k}: {e}")))?,
            );
        }
    }
    Ok((idx, coords, d))
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_configuration(c: &PointConfiguration, csv_path: &Path) -> Result<()> {
    let f = std::fs::File::create(csv_path)?;
    write_points_csv(c, std::io::BufWriter::new(f))?;
    let meta = ConfigSidecar {
        law: c.law,
        window: c.window.clone(),
        seed: c.seed,
        stream: c.stream,
        truncation_radius: c.truncation_radius,
        tail_bound: c.tail_bound,
        site_lo: c.site_lo.clone(),
        site_dims: c.site_dims.clone(),
        far_field: c.far_field,
        scale: c.scale,
    };
    std::fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_configuration(csv_path: &Path) -> Result<PointConfiguration> {
    let meta: ConfigSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
    let (site_index, coords, d) = read_points_csv(std::fs::File::open(csv_path)?)?;
    if d != meta.law.d {
        return Err(TrapError::Data("sidecar dimension differs from CSV".into()));
    }
    Ok(PointConfiguration {
        d,
        law: meta.law,
        window: meta.window,
        coords,
        site_index,
        site_lo: meta.site_lo,
        site_dims: meta.site_dims,
        seed: meta.seed,
        stream: meta.stream,
        truncation_radius: meta.truncation_radius,
        tail_bound: meta.tail_bound,
        far_field: meta.far_field,
        scale: meta.scale,
    })
}
