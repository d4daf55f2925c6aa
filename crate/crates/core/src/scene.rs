//! Seeded scattering scenes and single-bounce multipath tracing.
//!
//! A [`Scene`] holds point scatterers, the base-station and RIS array
//! positions, and the terminal population. [`trace_paths`] resolves the rays
//! between two points: the line-of-sight ray plus one bounce per scatterer.
//! At mmWave the scatterers flagged `blocks_mmwave` drop out and the
//! line-of-sight ray is lost whenever any scatterer sits inside the blockage
//! corridor around the direct segment, so mmWave path sets are always a
//! subset of the sub-6 GHz ones.

use alloc::vec::Vec;
use core::f64::consts::PI;

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::geometry::{Aabb, Point3};
use crate::rng;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Sub6,
    MmWave,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point3,
    pub reflection_gain_sub6: Complex64,
    pub reflection_gain_mmwave: Complex64,
    pub blocks_mmwave: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub id: u32,
    pub position: Point3,
    pub group_id: Option<u32>,
}

/// A disc-shaped terminal cluster, used to build scenes whose terminals
/// share local scattering environments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalCluster {
    pub center: Point3,
    /// Horizontal radius of the disc, meters.
    pub radius: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub num_scatterers: usize,
    pub num_terminals: usize,
    pub bounds: Aabb,
    pub mmwave_block_prob: f64,
    /// Radius of the corridor around the direct segment in which any
    /// scatterer blocks the mmWave line of sight, meters.
    pub blockage_radius: f64,
    pub bs_position: Point3,
    pub ris_position: Point3,
    /// Region for uniformly placed terminals; the scene bounds when unset.
    pub terminal_region: Option<Aabb>,
    /// Region for scatterers; the scene bounds when unset.
    pub scatterer_region: Option<Aabb>,
    /// When non-empty, terminals are placed in these clusters instead of
    /// uniformly and the counts must add up to `num_terminals`.
    pub terminal_clusters: Vec<TerminalCluster>,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            num_scatterers: 8,
            num_terminals: 100,
            bounds: Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(60.0, 60.0, 10.0)),
            mmwave_block_prob: 0.3,
            blockage_radius: 0.5,
            bs_position: Point3::new(0.0, 30.0, 6.0),
            ris_position: Point3::new(0.0, 20.0, 5.0),
            terminal_region: None,
            scatterer_region: None,
            terminal_clusters: Vec::new(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_scatterers == 0 {
            bail!(Config, "scene needs at least one scatterer");
        }
        if !self.bounds.has_volume() {
            bail!(Config, "scene bounds have zero volume or are not finite");
        }
        if !(0.0..=1.0).contains(&self.mmwave_block_prob) {
            bail!(Config, "mmwave_block_prob must lie in [0, 1]");
        }
        if !(self.blockage_radius >= 0.0 && self.blockage_radius.is_finite()) {
            bail!(Config, "blockage_radius must be a finite non-negative length");
        }
        for (name, p) in [("bs_position", self.bs_position), ("ris_position", self.ris_position)] {
            if !self.bounds.contains(p) {
                bail!(Config, "{name} lies outside the scene bounds");
            }
        }
        for (name, region) in [
            ("terminal_region", self.terminal_region),
            ("scatterer_region", self.scatterer_region),
        ] {
            if let Some(r) = region {
                if !r.is_ordered() || !self.bounds.contains(r.min) || !self.bounds.contains(r.max) {
                    bail!(Config, "{name} must be an ordered box inside the scene bounds");
                }
            }
        }
        if !self.terminal_clusters.is_empty() {
            let total: usize = self.terminal_clusters.iter().map(|c| c.count).sum();
            if total != self.num_terminals {
                bail!(
                    Config,
                    "terminal cluster counts sum to {total}, expected num_terminals = {}",
                    self.num_terminals
                );
            }
            for c in &self.terminal_clusters {
                if !(c.radius >= 0.0 && c.radius.is_finite()) || !self.bounds.contains(c.center) {
                    bail!(Config, "terminal cluster must have a finite radius and a center inside the bounds");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub bounds: Aabb,
    pub scatterers: Vec<Scatterer>,
    pub bs_position: Point3,
    pub ris_position: Point3,
    pub terminals: Vec<Terminal>,
    pub blockage_radius: f64,
}

impl Scene {
    pub fn terminal(&self, id: u32) -> Option<&Terminal> {
        self.terminals.iter().find(|t| t.id == id)
    }
}

fn unit3<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Builds the scene for `(seed, params)`. Deterministic.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let scatter_box = params.scatterer_region.unwrap_or(params.bounds);

    let mut pos_rng = rng::stream(seed, "scene.scatterer.position");
    let mut gain_rng = rng::stream(seed, "scene.scatterer.gain");
    let mut mm_rng = rng::stream(seed, "scene.scatterer.mmwave_scale");
    let mut block_rng = rng::stream(seed, "scene.scatterer.blocks_mmwave");
    let scatterers = (0..params.num_scatterers)
        .map(|_| {
            let position = scatter_box.lerp(unit3(&mut pos_rng));
            let magnitude = gain_rng.random_range(0.3..1.0);
            let phase = gain_rng.random_range(-PI..PI);
            let sub6 = Complex64::from_polar(magnitude, phase);
            let mm_scale: f64 = mm_rng.random_range(0.1..0.5);
            Scatterer {
                position,
                reflection_gain_sub6: sub6,
                reflection_gain_mmwave: sub6 * mm_scale,
                blocks_mmwave: block_rng.random_bool(params.mmwave_block_prob),
            }
        })
        .collect();

    let mut term_rng = rng::stream(seed, "scene.terminal.position");
    let mut terminals = Vec::with_capacity(params.num_terminals);
    if params.terminal_clusters.is_empty() {
        let region = params.terminal_region.unwrap_or(params.bounds);
        for id in 0..params.num_terminals {
            terminals.push(Terminal {
                id: id as u32,
                position: region.lerp(unit3(&mut term_rng)),
                group_id: None,
            });
        }
    } else {
        for cluster in &params.terminal_clusters {
            for _ in 0..cluster.count {
                // Uniform over the disc, then clipped into the bounds.
                let radius = cluster.radius * term_rng.random::<f64>().sqrt();
                let angle = term_rng.random_range(-PI..PI);
                let p = cluster.center + Point3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
                let position = Point3::new(
                    p.x.clamp(params.bounds.min.x, params.bounds.max.x),
                    p.y.clamp(params.bounds.min.y, params.bounds.max.y),
                    p.z,
                );
                terminals.push(Terminal { id: terminals.len() as u32, position, group_id: None });
            }
        }
    }

    Ok(Scene {
        seed,
        bounds: params.bounds,
        scatterers,
        bs_position: params.bs_position,
        ris_position: params.ris_position,
        terminals,
        blockage_radius: params.blockage_radius,
    })
}

/// One resolved propagation path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Index of the scatterer the path bounces off; `None` for line of sight.
    pub scatterer: Option<usize>,
    pub complex_gain: Complex64,
    /// Propagation delay, seconds.
    pub delay: f64,
    pub aod_az: f64,
    pub aod_el: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Path> {
        self.paths.iter()
    }

    /// Scatterer indices of all bounce paths, in path order.
    pub fn scatterer_ids(&self) -> Vec<usize> {
        self.paths.iter().filter_map(|p| p.scatterer).collect()
    }

    pub fn has_line_of_sight(&self) -> bool {
        self.paths.iter().any(|p| p.scatterer.is_none())
    }

    /// Largest path delay, seconds; zero for an empty set.
    pub fn max_delay(&self) -> f64 {
        self.paths.iter().map(|p| p.delay).fold(0.0, f64::max)
    }

    /// Rounds every delay to the nearest multiple of `1 / bandwidth`.
    pub fn quantize_delays(&mut self, bandwidth: f64) {
        for p in &mut self.paths {
            p.delay = (p.delay * bandwidth).round() / bandwidth;
        }
    }

    pub fn concat(&self, other: &PathSet) -> PathSet {
        let mut paths = self.paths.clone();
        paths.extend_from_slice(&other.paths);
        PathSet { paths }
    }
}

/// Resolves the line-of-sight and single-bounce paths from `tx` to `rx`.
pub fn trace_paths(scene: &Scene, tx: Point3, rx: Point3, band: Band) -> Result<PathSet> {
    if tx == rx {
        bail!(Domain, "transmitter and receiver coincide");
    }
    if !tx.is_finite() || !rx.is_finite() {
        bail!(Domain, "transmitter or receiver position is not finite");
    }
    let mut paths = Vec::with_capacity(scene.scatterers.len() + 1);

    let los_blocked = band == Band::MmWave
        && scene
            .scatterers
            .iter()
            .any(|s| s.position.distance_to_segment(tx, rx) < scene.blockage_radius);
    if !los_blocked {
        let d = tx.distance(rx);
        let (aod_az, aod_el) = (rx - tx).direction_angles();
        let (aoa_az, aoa_el) = (tx - rx).direction_angles();
        paths.push(Path {
            scatterer: None,
            complex_gain: Complex64::new(1.0 / d, 0.0),
            delay: d / SPEED_OF_LIGHT,
            aod_az,
            aod_el,
            aoa_az,
            aoa_el,
        });
    }

    for (idx, s) in scene.scatterers.iter().enumerate() {
        let reflection = match band {
            Band::Sub6 => s.reflection_gain_sub6,
            Band::MmWave if s.blocks_mmwave => continue,
            Band::MmWave => s.reflection_gain_mmwave,
        };
        let d1 = tx.distance(s.position);
        let d2 = s.position.distance(rx);
        let length = d1 + d2;
        let (aod_az, aod_el) = (s.position - tx).direction_angles();
        let (aoa_az, aoa_el) = (s.position - rx).direction_angles();
        paths.push(Path {
            scatterer: Some(idx),
            complex_gain: reflection / length,
            delay: length / SPEED_OF_LIGHT,
            aod_az,
            aod_el,
            aoa_az,
            aoa_el,
        });
    }

    // Stable sort keeps scatterer order among equal delays.
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(PathSet { paths })
}
