//! Rotated half-space domains.
//!
//! A domain with angle θ draws points uniformly from `[−1, 1] × [0, 1]`,
//! labels each point 1 when its first coordinate is non-negative (0
//! otherwise), then rotates every point by θ. Domains with nearby angles
//! have nearby marginals and nearby decision boundaries.

use std::f64::consts::PI;

use rand::Rng;

pub use crate::dataset::DomainDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{self, NS_TEST_DOMAINS, NS_TRAIN_DOMAINS};

pub const TEST_DOMAINS: usize = 44;
pub const TEST_EXAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub num_domains: usize,
    pub examples_per_domain: usize,
    pub seed: u64,
}

/// `[[cos θ, −sin θ], [sin θ, cos θ]] · p`
pub fn rotate(p: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

pub fn generate_domain<R: Rng + ?Sized>(
    domain_id: impl Into<String>,
    theta: f64,
    n: usize,
    rng: &mut R,
) -> Result<DomainDataset> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "theta {theta} is outside [0, pi]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "a domain needs at least one point".into(),
        ));
    }
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p = [rng.gen_range(-1.0..=1.0), rng.gen_range(0.0..=1.0)];
        labels.push(usize::from(p[0] >= 0.0));
        data.extend_from_slice(&rotate(p, theta));
    }
    Ok(DomainDataset {
        domain_id: domain_id.into(),
        features: Matrix::from_vec(n, 2, data)?,
        labels: Some(labels),
        theta: Some(theta),
    })
}

fn suite(
    seed: u64,
    namespace: u64,
    prefix: char,
    domains: usize,
    n: usize,
) -> Result<Vec<DomainDataset>> {
    if domains == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "domain and example counts must be >= 1".into(),
        ));
    }
    (0..domains)
        .map(|k| {
            let mut r = rng::stream(seed, namespace, k as u64);
            let theta = r.gen_range(0.0..=PI);
            generate_domain(format!("{prefix}{k:03}"), theta, n, &mut r)
        })
        .collect()
}

/// Training domains. Domain `k` depends only on `(seed, k)`, so smaller suites
/// are prefixes of larger ones.
pub fn generate_suite(spec: &SynthSpec) -> Result<Vec<DomainDataset>> {
    suite(
        spec.seed,
        NS_TRAIN_DOMAINS,
        'd',
        spec.num_domains,
        spec.examples_per_domain,
    )
}

/// The fixed evaluation suite: 44 domains of 1024 points, drawn from a seed
/// namespace disjoint from training suites.
pub fn test_suite(seed: u64) -> Vec<DomainDataset> {
    suite(seed, NS_TEST_DOMAINS, 't', TEST_DOMAINS, TEST_EXAMPLES).expect("fixed counts are valid")
}
