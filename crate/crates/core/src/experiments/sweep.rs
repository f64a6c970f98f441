//! Grid files: one `key = v1 | v2 | ...` line per swept key, `#` comments.

use std::path::Path;

use super::config::ExperimentConfig;
use super::runner::{run_single, write_manifest, ManifestEntry};
use crate::{Error, Result};

pub const DEFAULT_MAX_GRID_POINTS: usize = 256;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grid {
    /// Swept keys with their distinct values, in file order.
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, vs) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("grid line {}: expected `key = v1 | v2`", n + 1))
            })?;
            let k = k.trim().to_string();
            if axes.iter().any(|(a, _)| *a == k) {
                return Err(Error::Config(format!(
                    "grid line {}: duplicate key {k:?}",
                    n + 1
                )));
            }
            let mut values: Vec<String> = Vec::new();
            for v in vs.split('|').map(str::trim) {
                if v.is_empty() {
                    return Err(Error::Config(format!(
                        "grid line {}: empty value for {k:?}",
                        n + 1
                    )));
                }
                if !values.iter().any(|x| x == v) {
                    values.push(v.to_string());
                }
            }
            axes.push((k, values));
        }
        Ok(Self { axes })
    }

    pub fn cardinality(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Cartesian product, last axis varying fastest. An empty grid is one
    /// point with no overrides.
    pub fn points(&self, max_points: usize) -> Result<Vec<Vec<(String, String)>>> {
        let n = self.cardinality();
        if n > max_points {
            return Err(Error::GridTooLarge {
                points: n,
                limit: max_points,
            });
        }
        let mut out = vec![Vec::new()];
        for (k, vals) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p: Vec<(String, String)>| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((k.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

fn point_name(point: &[(String, String)]) -> String {
    if point.is_empty() {
        "base".into()
    } else {
        point
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// One run per grid point in `out/point_NNN/`, indexed by `out/manifest.tsv`.
/// Every point config is validated before the first run starts.
pub fn sweep(
    grid: &Grid,
    base: &ExperimentConfig,
    out: &Path,
    max_points: usize,
) -> Result<Vec<ManifestEntry>> {
    let points = grid.points(max_points)?;
    let configs = points
        .iter()
        .map(|p| {
            let mut c = base.clone();
            for (k, v) in p {
                c.set(k, v)?;
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Vec::new();
    for (i, (p, c)) in points.iter().zip(&configs).enumerate() {
        let dir = out.join(format!("point_{i:03}"));
        let status = match run_single(c, Some(&dir)) {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("failed: {e}"),
        };
        manifest.push(ManifestEntry {
            name: point_name(p),
            path: dir,
            seed: c.train.seed,
            status,
        });
        write_manifest(&out.join("manifest.tsv"), &manifest)?;
    }
    if manifest.is_empty() {
        write_manifest(&out.join("manifest.tsv"), &manifest)?;
    }
    Ok(manifest)
}
