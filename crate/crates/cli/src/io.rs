use std::path::Path;

use anyhow::Context;
use lesionloc::fsutil::write_atomic;
use lesionloc::sector_map::{SectorCell, SectorGrid, VoxelRegion};
use lesionloc::volume::{load_volume, Volume3D, VolumeKind};
use serde::Serialize;

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

pub fn print_json<T: Serialize>(value: &T) {
    print!("{}", to_json(value));
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_text(path, &to_json(value))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Loads any volume and treats nonzero voxels as foreground.
pub fn load_mask(path: &Path) -> anyhow::Result<Volume3D> {
    let v = load_volume(path, None).with_context(|| format!("loading {}", path.display()))?;
    Ok(Volume3D::from_mask(v.dims(), v.spacing(), &v.nonzero())?)
}

pub fn load_probability(path: &Path) -> anyhow::Result<Volume3D> {
    load_volume(path, Some(VolumeKind::ProbabilityMap)).with_context(|| format!("loading {}", path.display()))
}

#[derive(Serialize)]
pub struct SectorsOutput<'a> {
    grid: &'a SectorGrid,
    cells: Vec<CellOutput>,
}

#[derive(Serialize)]
struct CellOutput {
    #[serde(flatten)]
    cell: SectorCell,
    region: VoxelRegion,
}

impl<'a> SectorsOutput<'a> {
    pub fn new(grid: &'a SectorGrid) -> Self {
        let cells = grid.cells().into_iter().map(|(cell, region)| CellOutput { cell, region }).collect();
        Self { grid, cells }
    }
}
