use std::fs;
use std::path::{Path, PathBuf};

use geometry::rig::{FAR, NEAR};
use geometry::Camera;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::io;
use crate::rng;
use crate::sample_scenes::sample_scene;
use crate::scene::SceneSpec;
use crate::sdf::{render_ground_truth, GtImages};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub train_scenes: usize,
    pub heldout_scenes: usize,
    pub n_keyframes: usize,
    pub n_views_train: usize,
    pub n_views_eval: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_scenes: 200,
            heldout_scenes: 32,
            n_keyframes: 16,
            n_views_train: 8,
            n_views_eval: 4,
            image_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub id: String,
    pub split: String,
    pub spec: SceneSpec,
    pub n_views_train: usize,
    pub n_views_eval: usize,
    pub image_size: usize,
}

impl SceneManifest {
    pub fn n_views(&self) -> usize {
        self.n_views_train + self.n_views_eval
    }
}

/// Writes the dataset layout
/// `root/{scene_id}/{k:03}/{view:02}.{rgb.png,depth.pfm,mask.png,xyz.pfm,cam.json}`
/// with a per-scene `manifest.json`. Deterministic in `config.seed`:
/// the same seed produces byte-identical trees.
pub fn generate_dataset(config: &DatasetConfig, root: &Path) -> Result<()> {
    if config.n_keyframes < 2 {
        return Err(SynthError::Domain("need at least 2 keyframes".into()));
    }
    fs::create_dir_all(root).map_err(|e| SynthError::Io(e.to_string()))?;
    let total = config.train_scenes + config.heldout_scenes;
    let jobs: Vec<usize> = (0..total).collect();
    let results: Vec<Result<()>> = jobs
        .par_iter()
        .map(|&idx| generate_scene(config, root, idx))
        .collect();
    for r in results {
        r?;
    }
    Ok(())
}

pub fn scene_id(idx: usize) -> String {
    format!("scene_{idx:04}")
}

fn generate_scene(config: &DatasetConfig, root: &Path, idx: usize) -> Result<()> {
    let id = scene_id(idx);
    let split = if idx < config.train_scenes { "train" } else { "heldout" };
    let mut scene_rng = rng::stream(config.seed, &format!("scene/{id}"));
    let spec = sample_scene(&mut scene_rng, config.n_keyframes);
    let mut rig_rng = rng::stream(config.seed, &format!("rig/{id}"));
    let n_views = config.n_views_train + config.n_views_eval;
    let samples: Vec<(f64, f64)> =
        (0..n_views).map(|_| (rig_rng.gen::<f64>(), rig_rng.gen::<f64>())).collect();
    let cameras = geometry::rig::rig_from_samples(&samples, config.image_size, config.image_size)
        .map_err(|e| SynthError::Domain(e.to_string()))?;

    let scene_dir = root.join(&id);
    fs::create_dir_all(&scene_dir).map_err(|e| SynthError::Io(e.to_string()))?;
    let manifest = SceneManifest {
        id: id.clone(),
        split: split.to_string(),
        spec: spec.clone(),
        n_views_train: config.n_views_train,
        n_views_eval: config.n_views_eval,
        image_size: config.image_size,
    };
    let mjson = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SynthError::Io(e.to_string()))?;
    fs::write(scene_dir.join("manifest.json"), mjson).map_err(|e| SynthError::Io(e.to_string()))?;

    for k in 1..=config.n_keyframes {
        let kdir = scene_dir.join(format!("{k:03}"));
        fs::create_dir_all(&kdir).map_err(|e| SynthError::Io(e.to_string()))?;
        for (v, cam) in cameras.iter().enumerate() {
            let gt = render_ground_truth(&spec, k as f64, cam, NEAR, FAR)?;
            write_view(&kdir, v, cam, &gt)?;
        }
    }
    Ok(())
}

fn write_view(kdir: &Path, view: usize, cam: &Camera, gt: &GtImages) -> Result<()> {
    let base = |ext: &str| kdir.join(format!("{view:02}.{ext}"));
    io::write_rgb_png(&base("rgb.png"), &gt.rgb, gt.height, gt.width)?;
    io::write_mask_png(&base("mask.png"), &gt.mask, gt.height, gt.width)?;
    io::write_pfm(&base("depth.pfm"), &gt.depth, gt.height, gt.width, 1)?;
    let xyz: Vec<f64> = gt.canonical.iter().flatten().copied().collect();
    io::write_pfm(&base("xyz.pfm"), &xyz, gt.height, gt.width, 3)?;
    fs::write(base("cam.json"), cam.to_json()).map_err(|e| SynthError::Io(e.to_string()))?;
    Ok(())
}

/// One loaded view: images plus the camera.
#[derive(Debug, Clone)]
pub struct Observation {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub canonical: Vec<[f64; 3]>,
    pub camera: Camera,
    pub height: usize,
    pub width: usize,
}

/// Dataset handle: scene manifests indexed by split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub scenes: Vec<SceneManifest>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let mut ids: Vec<String> = fs::read_dir(root)
            .map_err(|e| SynthError::Io(format!("{}: {e}", root.display())))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().to_string())
            .collect();
        ids.sort();
        let mut scenes = Vec::with_capacity(ids.len());
        for id in ids {
            let mpath = root.join(&id).join("manifest.json");
            let raw = fs::read_to_string(&mpath)
                .map_err(|e| SynthError::Io(format!("{}: {e}", mpath.display())))?;
            let m: SceneManifest =
                serde_json::from_str(&raw).map_err(|e| SynthError::Io(e.to_string()))?;
            scenes.push(m);
        }
        Ok(Dataset { root: root.to_path_buf(), scenes })
    }

    pub fn split(&self, split: &str) -> Vec<&SceneManifest> {
        self.scenes.iter().filter(|s| s.split == split).collect()
    }

    pub fn load_view(&self, scene: &str, k: usize, view: usize) -> Result<Observation> {
        let kdir = self.root.join(scene).join(format!("{k:03}"));
        let base = |ext: &str| kdir.join(format!("{view:02}.{ext}"));
        let (rgb, h, w) = io::read_rgb_png(&base("rgb.png"))?;
        let (mask, mh, mw) = io::read_mask_png(&base("mask.png"))?;
        let (depth, dh, dw, dc) = io::read_pfm(&base("depth.pfm"))?;
        let (xyz, xh, xw, xc) = io::read_pfm(&base("xyz.pfm"))?;
        if (mh, mw) != (h, w) || (dh, dw) != (h, w) || (xh, xw) != (h, w) || dc != 1 || xc != 3 {
            return Err(SynthError::Io(format!("inconsistent maps for {scene}/{k}/{view}")));
        }
        let cam_raw = fs::read_to_string(base("cam.json"))
            .map_err(|e| SynthError::Io(e.to_string()))?;
        let camera = Camera::from_json(&cam_raw).map_err(|e| SynthError::Io(e.to_string()))?;
        let canonical = xyz.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Observation { rgb, depth, mask, canonical, camera, height: h, width: w })
    }
}
