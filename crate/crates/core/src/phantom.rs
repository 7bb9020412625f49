//! Seeded synthetic OCT volumes with exact ground truth.
//!
//! Surfaces are smooth sums of sinusoids that drift slowly across B-scans, so
//! neighbouring B-scans share anatomy but carry independent speckle. Fluid
//! pockets are dark ellipses strictly inside the retina that cast an
//! attenuation shadow on the rows below them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{class, ClassScheme, LabelMap, LayerSurfaces, OctVolume, SurfacePair};
use crate::error::{Error, Result};

/// Minimum thickness of any layer, in pixels.
pub const MIN_LAYER_PX: f64 = 3.0;

/// Speckle is `1 + s·(G − 1)` with `G ~ Gamma(k = 4, θ = 1/4)`.
const SPECKLE_SHAPE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidAxes {
    /// Semi-axis range along rows (min, max), pixels.
    pub rows: [f64; 2],
    /// Semi-axis range along columns (min, max), pixels.
    pub cols: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    pub num_bscans: usize,
    /// Mean ILM depth as a fraction of the height.
    pub ilm_depth_frac: f64,
    /// Mean thickness of ILM-NFL … IOS-BM as fractions of the height.
    pub layer_thickness_frac: [f64; 5],
    /// Largest smooth undulation of the retina, pixels.
    pub surface_amplitude_px: f64,
    /// Mean intensity of the five layer regions.
    pub layer_mean_intensities: [f64; 5],
    /// Mean intensity above ILM and below BM.
    pub background_intensities: [f64; 2],
    /// 0 disables speckle; also scales a smooth lateral brightness ripple.
    pub speckle_strength: f64,
    pub fluid_probability: f64,
    pub fluid_axes_px: FluidAxes,
    pub fluid_intensity: f64,
    /// Multiplier applied below a fluid pocket, in [0, 1].
    pub shadow_attenuation: f64,
    pub spacing_um: [f64; 3],
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 500,
            width: 245,
            num_bscans: 8,
            ilm_depth_frac: 0.25,
            layer_thickness_frac: [0.06, 0.10, 0.09, 0.12, 0.06],
            surface_amplitude_px: 24.0,
            layer_mean_intensities: [0.75, 0.45, 0.40, 0.20, 0.85],
            background_intensities: [0.03, 0.30],
            speckle_strength: 0.5,
            fluid_probability: 0.3,
            fluid_axes_px: FluidAxes { rows: [8.0, 24.0], cols: [10.0, 30.0] },
            fluid_intensity: 0.05,
            shadow_attenuation: 0.6,
            spacing_um: [5.0, 12.2, 12.2],
            seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Defaults rescaled to a smaller B-scan size.
    pub fn scaled(height: usize, width: usize) -> Self {
        let d = Self::default();
        let (sh, sw) = (height as f64 / d.height as f64, width as f64 / d.width as f64);
        Self {
            height,
            width,
            surface_amplitude_px: d.surface_amplitude_px * sh,
            fluid_axes_px: FluidAxes {
                rows: d.fluid_axes_px.rows.map(|v| (v * sh).max(1.5)),
                cols: d.fluid_axes_px.cols.map(|v| (v * sw).max(1.5)),
            },
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.height < crate::data::MIN_DIM || self.width < crate::data::MIN_DIM {
            return fail(format!("phantom B-scans must be at least 16x16, got {}x{}", self.height, self.width));
        }
        if self.num_bscans == 0 {
            return fail("num_bscans must be positive".into());
        }
        let h = self.height as f64;
        for (i, f) in self.layer_thickness_frac.iter().enumerate() {
            if f * h < MIN_LAYER_PX {
                return fail(format!(
                    "layer {} would be {:.2} px thick; at least {MIN_LAYER_PX} px required",
                    i + 1,
                    f * h
                ));
            }
        }
        let top = self.ilm_depth_frac * h - self.surface_amplitude_px;
        let bottom = (self.ilm_depth_frac + self.layer_thickness_frac.iter().sum::<f64>()) * h
            + self.surface_amplitude_px
            + deviation_budget(self, h);
        if top < 1.0 || bottom > h - 2.0 {
            return fail(format!("retina spans rows {top:.1}..{bottom:.1}, outside the {}-row B-scan", self.height));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let intensities = self.layer_mean_intensities.iter().chain(&self.background_intensities);
        if !intensities.copied().all(unit) || !unit(self.fluid_intensity) {
            return fail("mean intensities must lie in [0, 1]".into());
        }
        if !unit(self.fluid_probability) || !unit(self.shadow_attenuation) {
            return fail("fluid_probability and shadow_attenuation must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.speckle_strength) || self.surface_amplitude_px < 0.0 {
            return fail("speckle_strength must be in [0, 1] and the amplitude non-negative".into());
        }
        let ax = &self.fluid_axes_px;
        if !(ax.rows[0] >= 1.0 && ax.rows[0] <= ax.rows[1] && ax.cols[0] >= 1.0 && ax.cols[0] <= ax.cols[1]) {
            return fail("fluid axes need 1 <= min <= max".into());
        }
        Ok(())
    }
}

/// Amplitude reserved for per-surface deviations from the shared undulation.
fn deviation_budget(cfg: &PhantomConfig, h: f64) -> f64 {
    let thinnest = cfg.layer_thickness_frac.iter().fold(f64::INFINITY, |a, &b| a.min(b)) * h;
    (0.25 * thinnest).min(cfg.surface_amplitude_px)
}

/// Ground truth for one B-scan.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomBscan {
    pub labels: LabelMap,
    pub surfaces: LayerSurfaces,
    pub fluid: Vec<bool>,
}

impl PhantomBscan {
    pub fn surface_pair(&self) -> SurfacePair {
        self.surfaces.surface_pair(self.labels.height()).expect("generator keeps ILM above BM")
    }

    pub fn has_fluid(&self) -> bool {
        self.fluid.iter().any(|&f| f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub volume: OctVolume,
    pub bscans: Vec<PhantomBscan>,
}

impl Phantom {
    pub fn labels(&self) -> Vec<LabelMap> {
        self.bscans.iter().map(|b| b.labels.clone()).collect()
    }
}

/// A smooth function of (column, B-scan): Σ a·sin(2π f x / W + φ + ω b).
#[derive(Clone, Debug)]
struct Undulation {
    terms: [(f64, f64, f64, f64); 3],
}

impl Undulation {
    fn random<R: Rng + ?Sized>(amplitude: f64, rng: &mut R) -> Self {
        let mut terms = [(0.0, 0.0, 0.0, 0.0); 3];
        for t in &mut terms {
            *t = (
                rng.random_range(0.2..1.0),
                rng.random_range(0.3..2.0),
                rng.random_range(0.0..core::f64::consts::TAU),
                rng.random_range(-0.15..0.15),
            );
        }
        let total: f64 = terms.iter().map(|t| t.0).sum();
        let scale = amplitude * rng.random_range(0.5..1.0) / total;
        for t in &mut terms {
            t.0 *= scale;
        }
        Self { terms }
    }

    fn at(&self, x: f64, width: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, phi, drift)| a * Float::sin(core::f64::consts::TAU * f * x / width + phi + drift * b))
            .sum()
    }
}

/// Fills a stage-2 map from integer boundaries: class = number of surfaces at or above the row.
pub fn rasterize_surfaces(surfaces: &LayerSurfaces, height: usize) -> Result<LabelMap> {
    let w = surfaces.width();
    let mut labels = vec![0u8; height * w];
    for y in 0..height {
        for x in 0..w {
            labels[y * w + x] = surfaces.rows.iter().filter(|r| r[x] <= y).count() as u8;
        }
    }
    LabelMap::new(height, w, ClassScheme::Stage2, labels)
}

pub fn generate_phantom(config: &PhantomConfig) -> Result<Phantom> {
    generate_phantom_indexed(config, 0)
}

/// Volume `index` of a corpus; each index draws from its own RNG stream.
pub fn generate_phantom_indexed(config: &PhantomConfig, index: u64) -> Result<Phantom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let (h, w, n) = (config.height, config.width, config.num_bscans);
    let hf = h as f64;

    let shared = Undulation::random(config.surface_amplitude_px, &mut rng);
    let dev_amp = deviation_budget(config, hf);
    let deviations: Vec<Undulation> =
        (0..LayerSurfaces::COUNT).map(|_| Undulation::random(dev_amp, &mut rng)).collect();
    let mut base = [0.0; LayerSurfaces::COUNT];
    base[0] = config.ilm_depth_frac * hf;
    for k in 1..LayerSurfaces::COUNT {
        base[k] = base[k - 1] + config.layer_thickness_frac[k - 1] * hf;
    }

    let speckle = Gamma::new(SPECKLE_SHAPE, 1.0 / SPECKLE_SHAPE).expect("valid gamma parameters");
    let mut voxels = Vec::with_capacity(n * h * w);
    let mut bscans = Vec::with_capacity(n);
    for b in 0..n {
        let bf = b as f64;
        let mut rows = vec![vec![0usize; w]; LayerSurfaces::COUNT];
        for x in 0..w {
            let xf = x as f64;
            let u = shared.at(xf, w as f64, bf);
            let mut prev: Option<usize> = None;
            for k in 0..LayerSurfaces::COUNT {
                let raw = Float::round(base[k] + u + deviations[k].at(xf, w as f64, bf));
                let mut r = raw.clamp(1.0, hf - 2.0) as usize;
                if let Some(p) = prev {
                    r = r.max(p + MIN_LAYER_PX as usize);
                }
                rows[k][x] = r.min(h - 2);
                prev = Some(rows[k][x]);
            }
        }
        let surfaces = LayerSurfaces { rows };
        let mut labels = rasterize_surfaces(&surfaces, h)?;

        let mut fluid = vec![false; h * w];
        if rng.random_bool(config.fluid_probability) {
            place_fluid(config, &surfaces, &mut fluid, &mut rng);
        }
        for (l, &f) in labels.labels_mut().iter_mut().zip(&fluid) {
            if f {
                *l = class::FLUID;
            }
        }

        // Lowest fluid row per column; everything below is shadowed.
        let mut shadow_from = vec![usize::MAX; w];
        for y in 0..h {
            for x in 0..w {
                if fluid[y * w + x] {
                    shadow_from[x] = y + 1;
                }
            }
        }

        let ripple_f = rng.random_range(0.5..1.5);
        let ripple_phi = rng.random_range(0.0..core::f64::consts::TAU);
        let s = config.speckle_strength;
        for y in 0..h {
            for x in 0..w {
                let l = labels.at(y, x);
                let mean = match l {
                    class::ABOVE_ILM => config.background_intensities[0],
                    class::BELOW_BM => config.background_intensities[1],
                    class::FLUID => config.fluid_intensity,
                    k => config.layer_mean_intensities[k as usize - 1],
                };
                let mut v = mean;
                if s > 0.0 {
                    let ripple = 1.0
                        + 0.2 * s * Float::sin(core::f64::consts::TAU * ripple_f * x as f64 / w as f64 + ripple_phi);
                    v *= ripple * (1.0 + s * (speckle.sample(&mut rng) - 1.0));
                }
                if y >= shadow_from[x] {
                    v *= config.shadow_attenuation;
                }
                voxels.push(v.clamp(0.0, 1.0) as f32);
            }
        }
        bscans.push(PhantomBscan { labels, surfaces, fluid });
    }
    let volume = OctVolume::new(n, h, w, voxels, config.spacing_um)?;
    Ok(Phantom { volume, bscans })
}

/// Marks one elliptical pocket strictly between ILM and BM.
fn place_fluid<R: Rng + ?Sized>(cfg: &PhantomConfig, s: &LayerSurfaces, fluid: &mut [bool], rng: &mut R) {
    let w = cfg.width;
    let ax = &cfg.fluid_axes_px;
    for _ in 0..32 {
        let ar = rng.random_range(ax.rows[0]..=ax.rows[1]);
        let ac = rng.random_range(ax.cols[0]..=ax.cols[1]).min((w as f64 - 1.0) / 2.0);
        let cx = rng.random_range(ac..=(w as f64 - 1.0 - ac));
        let col = Float::round(cx) as usize;
        let (top, bottom) = (s.rows[0][col] as f64, s.rows[5][col] as f64);
        let (lo, hi) = (top + ar + 1.0, bottom - ar - 1.0);
        if lo > hi {
            continue;
        }
        let cy = rng.random_range(lo..=hi);
        let mut any = false;
        let x0 = Float::floor(cx - ac).max(0.0) as usize;
        let x1 = (Float::ceil(cx + ac) as usize).min(w - 1);
        for x in x0..=x1 {
            let (ilm, bm) = (s.rows[0][x], s.rows[5][x]);
            for y in ilm + 1..bm {
                let (dy, dx) = ((y as f64 - cy) / ar, (x as f64 - cx) / ac);
                if dy * dy + dx * dx <= 1.0 {
                    fluid[y * w + x] = true;
                    any = true;
                }
            }
        }
        if any {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labelmap_to_surfaces;

    fn small() -> PhantomConfig {
        PhantomConfig { num_bscans: 4, ..PhantomConfig::scaled(64, 64) }
    }

    #[test]
    fn same_seed_same_phantom() {
        let a = generate_phantom(&small()).unwrap();
        let b = generate_phantom(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&PhantomConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.volume, c.volume);
        assert_ne!(generate_phantom_indexed(&small(), 1).unwrap().volume, a.volume);
    }

    #[test]
    fn no_fluid_when_probability_zero() {
        let p = generate_phantom(&PhantomConfig { fluid_probability: 0.0, num_bscans: 12, ..small() }).unwrap();
        assert!(p.bscans.iter().all(|b| !b.labels.contains(class::FLUID)));
    }

    #[test]
    fn noise_free_layers_have_exact_means() {
        let cfg = PhantomConfig { speckle_strength: 0.0, surface_amplitude_px: 0.0, fluid_probability: 0.0, ..small() };
        let p = generate_phantom(&cfg).unwrap();
        for (b, gt) in p.bscans.iter().enumerate() {
            let img = p.volume.bscan(b);
            for (i, &l) in gt.labels.labels().iter().enumerate() {
                let want = match l {
                    0 => cfg.background_intensities[0],
                    6 => cfg.background_intensities[1],
                    k => cfg.layer_mean_intensities[k as usize - 1],
                };
                assert_eq!(img[i], want as f32);
            }
        }
    }

    #[test]
    fn labels_match_surfaces_and_fluid_stays_inside() {
        let p = generate_phantom(&PhantomConfig { fluid_probability: 1.0, num_bscans: 6, ..small() }).unwrap();
        for b in &p.bscans {
            assert!(b.has_fluid());
            let (h, w) = (b.labels.height(), b.labels.width());
            for x in 0..w {
                for k in 1..6 {
                    assert!(b.surfaces.rows[k][x] >= b.surfaces.rows[k - 1][x] + 3);
                }
                for y in 0..h {
                    if b.fluid[y * w + x] {
                        assert!(y > b.surfaces.rows[0][x] && y < b.surfaces.rows[5][x]);
                    }
                }
            }
            let mut dry = b.labels.clone();
            let raster = rasterize_surfaces(&b.surfaces, h).unwrap();
            dry.labels_mut().copy_from_slice(raster.labels());
            assert_eq!(labelmap_to_surfaces(&dry).unwrap(), b.surfaces);
        }
    }

    #[test]
    fn fluid_fraction_tracks_probability() {
        let cfg = PhantomConfig { num_bscans: 10, fluid_probability: 0.5, ..PhantomConfig::scaled(64, 32) };
        let (mut wet, mut total) = (0, 0);
        for i in 0..60 {
            for b in generate_phantom_indexed(&cfg, i).unwrap().bscans {
                wet += b.has_fluid() as usize;
                total += 1;
            }
        }
        let frac = wet as f64 / total as f64;
        assert!(total >= 500 && (frac - 0.5).abs() <= 0.05, "{wet}/{total}");
    }

    #[test]
    fn sparse_fluid_hits_the_weight_ceiling() {
        let cfg = PhantomConfig { num_bscans: 16, fluid_probability: 0.3, ..PhantomConfig::scaled(128, 128) };
        let labels = generate_phantom(&cfg).unwrap().labels();
        let fluid: usize = labels.iter().map(|l| l.labels().iter().filter(|&&v| v == class::FLUID).count()).sum();
        let total: usize = labels.iter().map(|l| l.labels().len()).sum();
        let w = crate::losses::class_weights(&labels).unwrap();
        assert!(fluid > 0 && fluid * 100 < total, "{fluid}/{total}");
        assert_eq!(w.0[class::FLUID as usize], 10.0);
        assert!(w.0.iter().all(|&v| (0.1..=10.0).contains(&v)));
    }

    #[test]
    fn thin_layers_are_a_config_error() {
        let cfg = PhantomConfig { layer_thickness_frac: [0.01, 0.1, 0.1, 0.1, 0.1], ..small() };
        assert!(matches!(generate_phantom(&cfg), Err(Error::Config(_))));
    }
}
