use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sampler::mix_seed;
use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Candidates drawn per class when placing means.
const PLACEMENT_CANDIDATES: usize = 64;
const PLACEMENT_SEED: u64 = 0x006d_6561_6e73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_spread: f64,
    pub within_class_std: f64,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            classes: 50,
            dim: 16,
            per_class: 200,
            class_spread: 4.0,
            within_class_std: 1.0,
            seed: 0,
        }
    }
}

fn unit_gaussian_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::nn::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Class means on the sphere of radius `radius`, independent of any data
/// seed. In two dimensions they sit at equal angles starting from the
/// positive x-axis; otherwise each mean is the best of a fixed set of
/// candidates by distance to the means already placed.
pub fn class_means(classes: usize, d: usize, radius: f64) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..classes)
            .map(|c| {
                let a = std::f64::consts::TAU * c as f64 / classes as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(PLACEMENT_SEED, d as u64));
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..PLACEMENT_CANDIDATES {
            let cand = unit_gaussian_direction(d, &mut rng);
            let score = means
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(&cand)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, cand));
            }
        }
        means.push(best.unwrap().1);
    }
    means
        .into_iter()
        .map(|m| m.into_iter().map(|v| v * radius).collect())
        .collect()
}

/// Isotropic Gaussian classes around [`class_means`]. Samples are stored
/// class by class.
pub fn gen_gaussian_mixture(spec: &MixtureSpec) -> Result<DomainDataset> {
    if spec.classes < 2 || spec.dim < 2 {
        return Err(Error::Config(
            "mixture needs at least 2 classes and 2 dimensions".into(),
        ));
    }
    if spec.per_class == 0 {
        return Err(Error::Config("empty dataset: per_class is 0".into()));
    }
    if !(spec.class_spread > 0.0 && spec.within_class_std >= 0.0)
        || !spec.class_spread.is_finite()
        || !spec.within_class_std.is_finite()
    {
        return Err(Error::Config(
            "class spread must be positive and std non-negative".into(),
        ));
    }
    let means = class_means(spec.classes, spec.dim, spec.class_spread);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spec.within_class_std * z);
            }
            labels.push(c);
        }
    }
    DomainDataset::new(
        Tensor2::from_vec(n, spec.dim, data)?,
        labels,
        spec.classes,
        Domain::Source,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationMode {
    /// Rotate only the plane of the first two coordinates.
    Plane,
    /// Rotate every coordinate pair `(2i, 2i+1)`; an odd last one is kept.
    BlockDiagonal,
}

/// `x ← R·x + t + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Radians.
    pub angle: f64,
    pub mode: RotationMode,
    /// Empty means no translation.
    pub translation: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
}

impl ShiftSpec {
    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            mode: RotationMode::BlockDiagonal,
            translation: Vec::new(),
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn rotation_degrees(degrees: f64, noise: f64, seed: u64) -> Self {
        Self {
            angle: degrees.to_radians(),
            noise,
            seed,
            ..Self::identity()
        }
    }
}

/// Moves a dataset to the target domain. Labels are copied verbatim.
pub fn apply_domain_shift(dataset: &DomainDataset, spec: &ShiftSpec) -> Result<DomainDataset> {
    let d = dataset.dim();
    if !spec.translation.is_empty() && spec.translation.len() != d {
        return Err(Error::shape(
            "apply_domain_shift translation",
            d,
            spec.translation.len(),
        ));
    }
    if !spec.angle.is_finite() || !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Config(
            "shift angle and noise must be finite, noise ≥ 0".into(),
        ));
    }
    let (sin, cos) = spec.angle.sin_cos();
    let pairs = match spec.mode {
        RotationMode::Plane => 1.min(d / 2),
        RotationMode::BlockDiagonal => d / 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = dataset.samples.clone();
    for r in 0..samples.rows() {
        let row = samples.row_mut(r);
        for p in 0..pairs {
            let (a, b) = (row[2 * p], row[2 * p + 1]);
            row[2 * p] = cos * a - sin * b;
            row[2 * p + 1] = sin * a + cos * b;
        }
        for (i, v) in row.iter_mut().enumerate() {
            if let Some(t) = spec.translation.get(i) {
                *v += t;
            }
            if spec.noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += spec.noise * z;
            }
        }
    }
    DomainDataset::new(
        samples,
        dataset.labels.clone(),
        dataset.classes,
        Domain::Target,
    )
}

/// Source set and shifted target set for one seed. The target is an
/// independent draw from the same mixture moved by `shift`; `spec.seed`
/// drives both draws and the shift noise, `shift.seed` is ignored.
pub fn gen_shifted_pair(
    spec: &MixtureSpec,
    shift: &ShiftSpec,
) -> Result<(DomainDataset, DomainDataset)> {
    let source = gen_gaussian_mixture(&MixtureSpec {
        seed: mix_seed(spec.seed, 10),
        ..spec.clone()
    })?;
    let fresh = gen_gaussian_mixture(&MixtureSpec {
        seed: mix_seed(spec.seed, 11),
        ..spec.clone()
    })?;
    let target = apply_domain_shift(
        &fresh,
        &ShiftSpec {
            seed: mix_seed(spec.seed, 12),
            ..shift.clone()
        },
    )?;
    Ok((source, target))
}

fn moons(n: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let outer = n - n / 2;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.gen_range(0.0..=std::f64::consts::PI);
        let (x, y, l) = if i < outer {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        let (nx, ny) = if noise > 0.0 {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            (noise * a, noise * b)
        } else {
            (0.0, 0.0)
        };
        data.push(x + nx);
        data.push(y + ny);
        labels.push(l);
    }
    (data, labels)
}

/// Interleaved half-circles. The target is an independent draw rotated by
/// `rotation` radians about the centre `(0.5, 0.25)`.
pub fn gen_two_moons(
    n: usize,
    noise: f64,
    rotation: f64,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if n < 2 {
        return Err(Error::Config("two moons needs n ≥ 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (src, src_labels) = moons(n, noise, &mut rng);
    let (mut tgt, tgt_labels) = moons(n, noise, &mut rng);
    let (sin, cos) = rotation.sin_cos();
    for p in tgt.chunks_exact_mut(2) {
        let (x, y) = (p[0] - 0.5, p[1] - 0.25);
        p[0] = cos * x - sin * y + 0.5;
        p[1] = sin * x + cos * y + 0.25;
    }
    Ok((
        DomainDataset::new(Tensor2::from_vec(n, 2, src)?, src_labels, 2, Domain::Source)?,
        DomainDataset::new(Tensor2::from_vec(n, 2, tgt)?, tgt_labels, 2, Domain::Target)?,
    ))
}
