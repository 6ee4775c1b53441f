use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{check_rows, require_positive, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::vecmath::{dist, norm};

/// Membership oracle and sampler for a subset of `R^n`.
pub trait Region: Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    /// Draws a point of the region.
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Euclidean diameter, exact or a lower bound from a finite cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameter {
    pub value: f64,
    pub exact: bool,
}

/// A star-shaped set `K`: oracle, star center, diameter and candidate cloud.
#[derive(Clone)]
pub struct ConstraintSet {
    region: Arc<dyn Region>,
    star_center: Vec<f64>,
    diameter: Diameter,
    cloud: PointCloud,
    resolution: Option<f64>,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("dim", &self.dim())
            .field("diameter", &self.diameter)
            .field("cloud_len", &self.cloud.len())
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl ConstraintSet {
    /// Assembles a set from parts whose diameter is known exactly. The star
    /// center must be a member and every cloud point must be a member.
    pub fn from_parts(
        region: Arc<dyn Region>,
        star_center: Vec<f64>,
        diameter: Diameter,
        cloud: PointCloud,
        resolution: Option<f64>,
    ) -> Result<Self> {
        let n = region.dim();
        check_rows(n, star_center.len())?;
        check_rows(n, cloud.dim())?;
        if !region.contains(&star_center) {
            return Err(Error::NotInSet);
        }
        if cloud.iter().any(|p| !region.contains(p)) {
            return Err(invalid("cloud contains a point outside the set"));
        }
        Ok(Self {
            region,
            star_center,
            diameter,
            cloud,
            resolution,
        })
    }

    /// A user-supplied oracle. The diameter is the largest pairwise distance
    /// over the cloud and the star center, flagged as a lower bound.
    pub fn from_oracle(
        region: impl Region + 'static,
        star_center: Vec<f64>,
        cloud: PointCloud,
    ) -> Result<Self> {
        let mut pts: Vec<&[f64]> = cloud.iter().collect();
        pts.push(&star_center);
        let mut d = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(dist(pts[i], pts[j]));
            }
        }
        let diameter = Diameter {
            value: d,
            exact: false,
        };
        Self::from_parts(Arc::new(region), star_center, diameter, cloud, None)
    }

    /// The one-point set `{p}`.
    pub fn singleton(p: Vec<f64>) -> Result<Self> {
        let mut cloud = PointCloud::new(p.len());
        cloud.push(&p)?;
        let region = SingletonRegion { point: p.clone() };
        Self::from_parts(
            Arc::new(region),
            p,
            Diameter {
                value: 0.0,
                exact: true,
            },
            cloud,
            None,
        )
    }

    /// The segment `[a, b]` with star center `a` and an equispaced cloud of
    /// spacing at most `resolution` (endpoints included).
    pub fn segment(a: Vec<f64>, b: Vec<f64>, resolution: f64) -> Result<Self> {
        check_rows(a.len(), b.len())?;
        require_positive("resolution", resolution)?;
        let len = dist(&a, &b);
        if len == 0.0 {
            return Self::singleton(a);
        }
        let steps = libm::ceil(len / resolution - 1e-9).max(1.0) as usize;
        let region = SegmentRegion::new(a.clone(), b)?;
        let mut cloud = PointCloud::new(a.len());
        for k in 0..=steps {
            cloud.push(&region.at(k as f64 / steps as f64))?;
        }
        Self::from_parts(
            Arc::new(region),
            a,
            Diameter {
                value: len,
                exact: true,
            },
            cloud,
            Some(len / steps as f64),
        )
    }

    /// Replaces the candidate cloud; every point must be a member.
    pub fn with_cloud(mut self, cloud: PointCloud) -> Result<Self> {
        check_rows(self.dim(), cloud.dim())?;
        if let Some(i) = cloud.iter().position(|p| !self.region.contains(p)) {
            return Err(invalid(alloc::format!("cloud row {i} is outside the set")));
        }
        if !self.diameter.exact {
            let mut d = self.diameter.value;
            for p in cloud.iter() {
                for q in cloud.iter() {
                    d = d.max(dist(p, q));
                }
            }
            self.diameter.value = d;
        }
        self.cloud = cloud;
        self.resolution = None;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.region.contains(x)
    }

    pub fn star_center(&self) -> &[f64] {
        &self.star_center
    }

    pub fn diameter(&self) -> Diameter {
        self.diameter
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    pub fn region(&self) -> &Arc<dyn Region> {
        &self.region
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.region.sample(rng)
    }

    /// Spot-checks star-shapedness: for `count` random pairs `(x, t)` with `x`
    /// drawn from the sampler, `(1 − t)·x₀ + t·x` must be a member. Returns
    /// the first failing point.
    pub fn star_spot_check(&self, count: usize, seed: u64) -> core::result::Result<(), Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let x = self.sample(&mut rng);
            let t: f64 = rng.random();
            let p: Vec<f64> = self
                .star_center
                .iter()
                .zip(&x)
                .map(|(c, xi)| (1.0 - t) * c + t * xi)
                .collect();
            if !self.contains(&p) {
                return Err(p);
            }
        }
        Ok(())
    }
}

/// `{p}`.
#[derive(Debug, Clone)]
pub struct SingletonRegion {
    pub point: Vec<f64>,
}

impl Region for SingletonRegion {
    fn dim(&self) -> usize {
        self.point.len()
    }
    fn contains(&self, x: &[f64]) -> bool {
        x == self.point.as_slice()
    }
    fn sample(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.point.clone()
    }
}

/// The closed segment between two points. Membership allows a relative
/// tolerance of `1e-9` off the line to absorb rounding in cloud points.
#[derive(Debug, Clone)]
pub struct SegmentRegion {
    a: Vec<f64>,
    b: Vec<f64>,
    len2: f64,
}

impl SegmentRegion {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_rows(a.len(), b.len())?;
        let len2 = crate::dist2(&a, &b);
        if len2 == 0.0 {
            return Err(invalid("segment endpoints coincide"));
        }
        Ok(Self { a, b, len2 })
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| x + t * (y - x))
            .collect()
    }
}

impl Region for SegmentRegion {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.a.len() {
            return false;
        }
        let dot: f64 = x
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .map(|(xi, (ai, bi))| (xi - ai) * (bi - ai))
            .sum();
        let t = dot / self.len2;
        let tol = 1e-9;
        if t < -tol || t > 1.0 + tol {
            return false;
        }
        let resid: Vec<f64> = self.at(t).iter().zip(x).map(|(p, q)| p - q).collect();
        norm(&resid) <= tol * (1.0 + libm::sqrt(self.len2))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.at(rng.random())
    }
}

/// Region given by closures; used for user oracles.
pub struct FnRegion<C, S> {
    pub dim: usize,
    pub contains: C,
    pub sample: S,
}

impl<C, S> Region for FnRegion<C, S>
where
    C: Fn(&[f64]) -> bool + Send + Sync,
    S: Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn contains(&self, x: &[f64]) -> bool {
        (self.contains)(x)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (self.sample)(rng)
    }
}

impl<C, S> FnRegion<C, S> {
    pub fn boxed(dim: usize, contains: C, sample: S) -> Box<Self> {
        Box::new(Self {
            dim,
            contains,
            sample,
        })
    }
}
