//! Labelled images and their on-disk layout.
//!
//! A dataset directory holds `meta.json` plus, for sample `i` (1-based),
//! `{i:06}.pgm` and a sidecar `{i:06}.json` with the true state.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scene::{render_circle, CircleSceneConfig, Image};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    /// How the states were produced.
    pub description: String,
    pub scene: CircleSceneConfig,
    /// Measurement matrix extracting the rendered position from a state.
    #[serde(with = "crate::serde_mat")]
    pub c: DMatrix<f64>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionDataset {
    pub meta: DatasetMeta,
    pub states: Vec<DVector<f64>>,
    pub images: Vec<Image>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    index: usize,
    state: Vec<f64>,
    position: Vec<f64>,
}

impl PerceptionDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `C x_d` for sample `i`.
    pub fn position(&self, i: usize) -> DVector<f64> {
        &self.meta.c * &self.states[i]
    }

    pub fn positions(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(fs::File::create(dir.join("meta.json"))?), &self.meta)?;
        for (i, (x, img)) in self.states.iter().zip(&self.images).enumerate() {
            let stem = format!("{:06}", i + 1);
            img.write_pgm(&mut BufWriter::new(fs::File::create(dir.join(format!("{stem}.pgm")))?))?;
            let side = Sidecar { index: i + 1, state: x.as_slice().to_vec(), position: self.position(i).as_slice().to_vec() };
            serde_json::to_writer(BufWriter::new(fs::File::create(dir.join(format!("{stem}.json")))?), &side)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_reader(BufReader::new(fs::File::open(dir.join("meta.json"))?))?;
        let mut states = Vec::with_capacity(meta.len);
        let mut images = Vec::with_capacity(meta.len);
        for i in 1..=meta.len {
            let stem = format!("{i:06}");
            let side: Sidecar = serde_json::from_reader(BufReader::new(fs::File::open(dir.join(format!("{stem}.json")))?))?;
            if side.index != i || side.state.len() != meta.c.ncols() {
                return Err(Error::InvalidArgument(format!("sidecar {stem}.json does not match meta.json")));
            }
            states.push(DVector::from_vec(side.state));
            let img = Image::read_pgm(&mut BufReader::new(fs::File::open(dir.join(format!("{stem}.pgm")))?))?;
            if img.width != meta.scene.width || img.height != meta.scene.height {
                return Err(Error::Dimension(format!("{stem}.pgm has the wrong size")));
            }
            images.push(img);
        }
        Ok(Self { meta, states, images })
    }
}

/// Renders one image per state at the position `C x`.
pub fn generate_dataset(
    states: &[DVector<f64>],
    c: &DMatrix<f64>,
    scene: &CircleSceneConfig,
    seed: u64,
    description: &str,
) -> Result<PerceptionDataset> {
    scene.validate()?;
    if c.nrows() != 2 {
        return Err(Error::Dimension(format!("the scene renders 2-D positions, C has {} rows", c.nrows())));
    }
    if let Some(x) = states.iter().find(|x| x.len() != c.ncols()) {
        return Err(Error::Dimension(format!("state of length {} for C with {} columns", x.len(), c.ncols())));
    }
    let images = states.iter().map(|x| render_circle(&(c * x), scene)).collect();
    Ok(PerceptionDataset {
        meta: DatasetMeta { seed, description: description.to_string(), scene: *scene, c: c.clone(), len: states.len() },
        states: states.to_vec(),
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    #[test]
    fn empty_and_duplicate_states() {
        let cfg = crate::perception::CircleSceneConfig { window: crate::perception::Window::centered(2.0), ..Default::default() };
        let ds = generate_dataset(&[], &c2(), &cfg, 0, "none").unwrap();
        assert!(ds.is_empty());
        let x = DVector::from_vec(vec![0.4, 1.0, -0.2, 3.0]);
        let ds = generate_dataset(&[x.clone(), x], &c2(), &cfg, 0, "dup").unwrap();
        assert_eq!(ds.images[0], ds.images[1]);
        assert_eq!(ds.position(0).as_slice(), &[0.4, -0.2]);
    }

    #[test]
    fn disk_round_trip() {
        let cfg = crate::perception::CircleSceneConfig { window: crate::perception::Window::centered(2.0), ..Default::default() };
        let states: Vec<_> = (0..3).map(|i| DVector::from_vec(vec![0.1 * i as f64, 0.0, -0.3, 0.5])).collect();
        let ds = generate_dataset(&states, &c2(), &cfg, 7, "line").unwrap();
        let dir = std::env::temp_dir().join(format!("percept-dataset-{}", std::process::id()));
        ds.save(&dir).unwrap();
        assert!(dir.join("000001.pgm").exists() && dir.join("000003.json").exists());
        let back = PerceptionDataset::load(&dir).unwrap();
        fs::remove_dir_all(&dir).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn wrong_state_length_rejected() {
        let cfg = crate::perception::CircleSceneConfig { window: crate::perception::Window::centered(2.0), ..Default::default() };
        assert!(generate_dataset(&[DVector::zeros(3)], &c2(), &cfg, 0, "").is_err());
    }
}
