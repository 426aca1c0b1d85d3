use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{Dataset, LikelihoodKernel, PotentialTarget};
use crate::tensor::Tensor;

/// Two-moons density on the plane,
/// `exp(-((|θ| - r)/w_r)^2 / 2) · [exp(-((θ_1 - c)/w_m)^2 / 2) + exp(-((θ_1 + c)/w_m)^2 / 2)]`
/// with `r = radius · separation` and `c = offset · separation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoMoonsSpec {
    pub radius: f64,
    pub radial_width: f64,
    pub offset: f64,
    pub mode_width: f64,
    pub separation: f64,
}

impl Default for TwoMoonsSpec {
    fn default() -> Self {
        Self {
            radius: 2.0,
            radial_width: 0.2,
            offset: 2.0,
            mode_width: 0.3,
            separation: 1.0,
        }
    }
}

impl TwoMoonsSpec {
    pub fn with_separation(separation: f64) -> Self {
        Self {
            separation,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radial_width > 0.0
            && self.mode_width > 0.0
            && self.separation > 0.0
            && self.radius >= 0.0)
        {
            return Err(Error::contract(format!("invalid two-moons spec {self:?}")));
        }
        Ok(())
    }

    /// Unnormalised density at `(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let r = (x * x + y * y).sqrt();
        let ring = (-0.5 * ((r - self.radius * self.separation) / self.radial_width).powi(2)).exp();
        let c = self.offset * self.separation;
        let modes = (-0.5 * ((x - c) / self.mode_width).powi(2)).exp()
            + (-0.5 * ((x + c) / self.mode_width).powi(2)).exp();
        ring * modes
    }
}

/// `count` draws from the two-moons density by rejection from an isotropic
/// Gaussian proposal.
pub fn two_moons_sample<R: Rng + ?Sized>(
    spec: &TwoMoonsSpec,
    count: usize,
    rng: &mut R,
) -> Result<Tensor> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::contract("two-moons sample needs count >= 1"));
    }
    let big_r = spec.radius * spec.separation;
    let w = spec.radial_width;
    let sigma = (big_r.max(spec.offset * spec.separation)).max(3.0 * w);
    // envelope: density <= max_modes * ring(|θ|); bound ring / q over the radius
    // on either half-plane one mode term is at most 1 and the other at most its value at θ_1 = 0
    let max_modes = 1.0 + (-0.5 * (spec.offset * spec.separation / spec.mode_width).powi(2)).exp();
    let norm_q = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
    let r_hi = big_r + 40.0 * w;
    let steps = 20_000;
    let mut log_ratio_max = f64::NEG_INFINITY;
    for s in 0..=steps {
        let r = r_hi * s as f64 / steps as f64;
        let lr = -0.5 * ((r - big_r) / w).powi(2) + r * r / (2.0 * sigma * sigma);
        log_ratio_max = log_ratio_max.max(lr);
    }
    // grid slack: the log-ratio moves by at most |d/dr| * dr / 2 between nodes
    let slope = (r_hi / (w * w)) + r_hi / (sigma * sigma);
    let log_c = log_ratio_max + slope * r_hi / steps as f64 + max_modes.ln() - norm_q.ln();

    let mut out = Vec::with_capacity(count * 2);
    let mut tried = 0usize;
    let mut accepted = 0usize;
    while accepted < count {
        let x: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        let y: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        tried += 1;
        let log_q = norm_q.ln() - (x * x + y * y) / (2.0 * sigma * sigma);
        let f = spec.density(x, y);
        let u: f64 = rng.random();
        if f > 0.0 && u.ln() < f.ln() - log_c - log_q {
            out.push(x);
            out.push(y);
            accepted += 1;
        }
        if tried >= 10_000 && (accepted as f64) < 1e-3 * tried as f64 {
            return Err(Error::domain(
                "two_moons_sample",
                accepted,
                format!(
                    "acceptance rate {:.2e} below 1e-3 for {spec:?}",
                    accepted as f64 / tried as f64
                ),
            ));
        }
    }
    Tensor::matrix(count, 2, out)
}

/// Mixing distribution of the location parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MixingSpec {
    /// All mass at one point.
    PointMass { at: Vec<f64> },
    /// Two-moons on the plane.
    TwoMoons(TwoMoonsSpec),
    /// Two-moons on the first two coordinates, independent standard normals on the rest.
    TwoMoonsTimesNormal { moons: TwoMoonsSpec, extra: usize },
    /// Uniform over the listed atoms.
    Atoms { atoms: Vec<Vec<f64>> },
}

impl MixingSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::PointMass { at } => at.len(),
            Self::TwoMoons(_) => 2,
            Self::TwoMoonsTimesNormal { extra, .. } => 2 + extra,
            Self::Atoms { atoms } => atoms.first().map_or(0, Vec::len),
        }
    }

    /// `count × dim` draws.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Tensor> {
        match self {
            Self::PointMass { at } => Tensor::from_rows(&vec![at.clone(); count]),
            Self::TwoMoons(spec) => two_moons_sample(spec, count, rng),
            Self::TwoMoonsTimesNormal { moons, extra } => {
                let m = two_moons_sample(moons, count, rng)?;
                let d = 2 + extra;
                let mut data = Vec::with_capacity(count * d);
                for i in 0..count {
                    data.extend_from_slice(m.row_slice(i));
                    for _ in 0..*extra {
                        data.push(rng.sample(StandardNormal));
                    }
                }
                Tensor::matrix(count, d, data)
            }
            Self::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::contract("atom mixing needs at least one atom"));
                }
                let rows: Vec<Vec<f64>> = (0..count)
                    .map(|_| atoms[rng.random_range(0..atoms.len())].clone())
                    .collect();
                Tensor::from_rows(&rows)
            }
        }
    }
}

/// Draws `theta_i ~ P*` then `X_i | theta_i ~ p(· | theta_i)`.
///
/// For the location-scale kernel each variance coordinate is an independent
/// chi-square with one degree of freedom; the returned parameters hold
/// `(mu, log sigma^2)` to match the kernel's parametrisation.
pub fn mixture_data_gen<R: Rng + ?Sized>(
    mixing: &MixingSpec,
    kernel: LikelihoodKernel,
    n: usize,
    rng: &mut R,
) -> Result<(Dataset, Tensor)> {
    if n == 0 {
        return Err(Error::contract("mixture data needs n >= 1"));
    }
    let mu = mixing.sample(n, rng)?;
    let d = mu.cols();
    match kernel {
        LikelihoodKernel::GaussianLocation => {
            let mut x = mu.clone();
            for v in x.data_mut() {
                *v += rng.sample::<f64, _>(StandardNormal);
            }
            Ok((Dataset::new(x)?, mu))
        }
        LikelihoodKernel::GaussianLocationScale => {
            let mut x = Vec::with_capacity(n * d);
            let mut theta = Vec::with_capacity(n * 2 * d);
            for i in 0..n {
                let row = mu.row_slice(i);
                let mut logv = Vec::with_capacity(d);
                for &m in row {
                    let z: f64 = rng.sample(StandardNormal);
                    let var = (z * z).max(f64::MIN_POSITIVE);
                    let e: f64 = rng.sample(StandardNormal);
                    x.push(m + var.sqrt() * e);
                    logv.push(var.ln());
                }
                theta.extend_from_slice(row);
                theta.extend_from_slice(&logv);
            }
            Ok((
                Dataset::new(Tensor::matrix(n, d, x)?)?,
                Tensor::matrix(n, 2 * d, theta)?,
            ))
        }
    }
}

/// Exact sampler for `pi ∝ exp(-||θ||^{2α} / (2α))` in `d` dimensions:
/// radius by inverse CDF of `r^{d-1} exp(-r^{2α}/(2α))` on a tabulated
/// grid, direction uniform on the sphere.
#[derive(Clone, Debug)]
pub struct RadialTargetSampler {
    dim: usize,
    radii: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialTargetSampler {
    pub fn new(potential: &PotentialTarget, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("radial sampler needs d >= 1"));
        }
        let a = potential.alpha();
        // beyond r_max the log-density is below -60
        let r_max = (2.0 * a * (60.0 + 4.0 * dim as f64)).powf(1.0 / (2.0 * a)) + 1.0;
        let steps = 200_000;
        let h = r_max / steps as f64;
        let radii: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        let dens: Vec<f64> = radii
            .iter()
            .map(|&r| r.powi(dim as i32 - 1) * (-r.powf(2.0 * a) / (2.0 * a)).exp())
            .collect();
        let mut cdf = vec![0.0; radii.len()];
        for i in 1..radii.len() {
            cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        }
        let total = cdf[cdf.len() - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { dim, radii, cdf })
    }

    fn radius(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.radii[i - 1] + t * (self.radii[i] - self.radii[i - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Tensor {
        let d = self.dim;
        let mut data = Vec::with_capacity(count * d);
        for _ in 0..count {
            let r = self.radius(rng.random());
            let mut z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = z
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            z.iter_mut().for_each(|v| *v *= r / norm);
            data.extend(z);
        }
        Tensor::matrix(count, d, data).expect("sized")
    }

    /// Randomised quasi-Monte Carlo draws on the plane: a Halton point set
    /// in bases 2 and 3 under a uniform random shift modulo 1, mapped to
    /// radius and angle. Each point is marginally exact, and the set covers
    /// the target far more evenly than independent draws.
    pub fn sample_quasi<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Tensor> {
        if self.dim != 2 {
            return Err(Error::contract(format!(
                "quasi sampling is planar only, sampler has d = {}",
                self.dim
            )));
        }
        let shift: [f64; 2] = [rng.random(), rng.random()];
        let mut data = Vec::with_capacity(count * 2);
        for i in 0..count {
            let u = (radical_inverse(i as u64 + 1, 2) + shift[0]).fract();
            let v = (radical_inverse(i as u64 + 1, 3) + shift[1]).fract();
            let r = self.radius(u);
            let phi = 2.0 * std::f64::consts::PI * v;
            data.push(r * phi.cos());
            data.push(r * phi.sin());
        }
        Tensor::matrix(count, 2, data)
    }

    /// `log Z` of `pi`, from the tabulated radial integral and the sphere area.
    pub fn log_normalizer(potential: &PotentialTarget, dim: usize) -> f64 {
        let a = potential.alpha();
        let d = dim as f64;
        // int_0^inf r^{d-1} e^{-r^{2a}/(2a)} dr = (2a)^{d/(2a) - 1} Γ(d/(2a))
        let radial = (d / (2.0 * a) - 1.0) * (2.0 * a).ln() + ln_gamma(d / (2.0 * a));
        let sphere =
            std::f64::consts::LN_2 + 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d);
        radial + sphere
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_normaliser() {
        let p = PotentialTarget::new(1.0).unwrap();
        let lz = RadialTargetSampler::log_normalizer(&p, 2);
        assert!((lz - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn point_mass_mixing_gives_plain_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, theta) = mixture_data_gen(
            &MixingSpec::PointMass { at: vec![0.0, 0.0] },
            LikelihoodKernel::GaussianLocation,
            10,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.len(), 10);
        assert!(theta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn location_scale_parameters_have_log_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, theta) = mixture_data_gen(
            &MixingSpec::PointMass {
                at: vec![1.0, -1.0],
            },
            LikelihoodKernel::GaussianLocationScale,
            20,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(theta.cols(), 4);
    }
}
