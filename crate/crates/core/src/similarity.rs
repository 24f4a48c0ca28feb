//! Domain-to-domain similarity.
//!
//! Estimated similarity compares learned embeddings,
//! `S[p][q] = exp(−‖d_p − d_q‖² / σ²)`; known similarity compares the
//! generating rotation angles, `exp(−|θ_p − θ_q|² / σ²)`. The default
//! bandwidth is the median heuristic, `σ² = median` of the squared pairwise
//! distances over `p < q`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DomainEmbedding;
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub domain_ids: Vec<String>,
    pub values: Matrix,
    /// Bandwidth used; `None` for the random baseline.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Median,
    Fixed(f64),
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" || s == "median" {
            return Ok(Bandwidth::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
            _ => Err(format!("sigma `{s}` must be `auto` or a positive number")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub pearson: f64,
    pub spearman: f64,
    pub pairs: usize,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pairwise_sq(points: &[&[f64]]) -> Matrix {
    let m = points.len();
    let mut d = Matrix::zeros(m, m);
    for p in 0..m {
        for q in p + 1..m {
            let v = squared_distance(points[p], points[q]);
            d.set(p, q, v);
            d.set(q, p, v);
        }
    }
    d
}

fn upper_triangle(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            out.push(m.get(p, q));
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    })
}

/// `σ = sqrt(median of squared pairwise distances)`.
pub fn median_heuristic(sq_distances: &Matrix) -> Result<f64> {
    let med = median(upper_triangle(sq_distances))
        .ok_or_else(|| Error::Similarity("median heuristic needs at least two domains".into()))?;
    if med.is_nan() || med <= 0.0 {
        return Err(Error::Similarity(
            "median squared distance is zero; pass an explicit sigma".into(),
        ));
    }
    Ok(med.sqrt())
}

fn kernel_matrix(ids: Vec<String>, sq: &Matrix, sigma: f64) -> Result<SimilarityMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Similarity(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let m = sq.rows();
    let s2 = sigma * sigma;
    let mut values = Matrix::identity(m);
    for p in 0..m {
        for q in p + 1..m {
            // stay inside (0, 1] if the exponential underflows
            let v = (-sq.get(p, q) / s2).exp().max(f64::MIN_POSITIVE);
            values.set(p, q, v);
            values.set(q, p, v);
        }
    }
    Ok(SimilarityMatrix {
        domain_ids: ids,
        values,
        sigma: Some(sigma),
    })
}

fn embedding_sq(embeddings: &[DomainEmbedding]) -> Result<Matrix> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::Similarity("no embeddings given".into()))?;
    if let Some(bad) = embeddings
        .iter()
        .find(|e| e.vector.len() != first.vector.len())
    {
        return Err(Error::Similarity(format!(
            "embedding {} has dimension {}, expected {}",
            bad.domain_id,
            bad.vector.len(),
            first.vector.len()
        )));
    }
    let vs: Vec<&[f64]> = embeddings.iter().map(|e| e.vector.as_slice()).collect();
    Ok(pairwise_sq(&vs))
}

fn resolve(bandwidth: Bandwidth, sq: &Matrix) -> Result<f64> {
    match bandwidth {
        Bandwidth::Median => median_heuristic(sq),
        Bandwidth::Fixed(s) => Ok(s),
    }
}

pub fn estimated_similarity(
    embeddings: &[DomainEmbedding],
    sigma: f64,
) -> Result<SimilarityMatrix> {
    estimated_similarity_with(embeddings, Bandwidth::Fixed(sigma))
}

pub fn estimated_similarity_with(
    embeddings: &[DomainEmbedding],
    bandwidth: Bandwidth,
) -> Result<SimilarityMatrix> {
    let sq = embedding_sq(embeddings)?;
    let sigma = resolve(bandwidth, &sq)?;
    let ids = embeddings.iter().map(|e| e.domain_id.clone()).collect();
    kernel_matrix(ids, &sq, sigma)
}

pub fn known_similarity(
    domain_ids: &[String],
    thetas: &[f64],
    sigma: f64,
) -> Result<SimilarityMatrix> {
    known_similarity_with(domain_ids, thetas, Bandwidth::Fixed(sigma))
}

pub fn known_similarity_with(
    domain_ids: &[String],
    thetas: &[f64],
    bandwidth: Bandwidth,
) -> Result<SimilarityMatrix> {
    if domain_ids.len() != thetas.len() || thetas.is_empty() {
        return Err(Error::Similarity(format!(
            "{} ids for {} angles",
            domain_ids.len(),
            thetas.len()
        )));
    }
    if let Some(t) = thetas
        .iter()
        .find(|t| !(0.0..=std::f64::consts::PI).contains(*t))
    {
        return Err(Error::Similarity(format!("theta {t} is outside [0, pi]")));
    }
    let rows: Vec<[f64; 1]> = thetas.iter().map(|&t| [t]).collect();
    let vs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
    let sq = pairwise_sq(&vs);
    let sigma = resolve(bandwidth, &sq)?;
    kernel_matrix(domain_ids.to_vec(), &sq, sigma)
}

/// Symmetric matrix with unit diagonal and i.i.d. uniform off-diagonal entries in (0, 1].
pub fn random_similarity<R: Rng + ?Sized>(domain_ids: &[String], rng: &mut R) -> SimilarityMatrix {
    let m = domain_ids.len();
    let mut values = Matrix::identity(m);
    for p in 0..m {
        for q in p + 1..m {
            let v = 1.0 - rng.gen::<f64>();
            values.set(p, q, v);
            values.set(q, p, v);
        }
    }
    SimilarityMatrix {
        domain_ids: domain_ids.to_vec(),
        values,
        sigma: None,
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties share their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Pearson and Spearman correlation over the strict upper triangles.
pub fn compare(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<Agreement> {
    if a.domain_ids != b.domain_ids {
        return Err(Error::Similarity(
            "matrices cover different domains or a different order".into(),
        ));
    }
    let xa = upper_triangle(&a.values);
    let xb = upper_triangle(&b.values);
    let degenerate = || Error::Similarity("zero variance among off-diagonal entries".into());
    let p = pearson(&xa, &xb).ok_or_else(degenerate)?;
    let s = pearson(&ranks(&xa), &ranks(&xb)).ok_or_else(degenerate)?;
    Ok(Agreement {
        pearson: p,
        spearman: s,
        pairs: xa.len(),
    })
}

/// Indices sorting domains by ascending angle.
pub fn theta_order(thetas: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..thetas.len()).collect();
    idx.sort_by(|&i, &j| thetas[i].total_cmp(&thetas[j]));
    idx
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.domain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain_ids.is_empty()
    }

    /// Rows and columns reordered consistently.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let m = order.len();
        let mut values = Matrix::zeros(m, m);
        for (i, &p) in order.iter().enumerate() {
            for (j, &q) in order.iter().enumerate() {
                values.set(i, j, self.values.get(p, q));
            }
        }
        Self {
            domain_ids: order.iter().map(|&i| self.domain_ids[i].clone()).collect(),
            values,
            sigma: self.sigma,
        }
    }

    /// Header of domain ids, then one row of values per domain.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Similarity(e.to_string());
        w.write_record(&self.domain_ids).map_err(io)?;
        for r in 0..self.len() {
            w.write_record(self.values.row(r).iter().map(|v| v.to_string()))
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary 8-bit PGM, pixel = `floor(255·S + 0.5)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let m = self.len();
        let mut out = format!("P5\n{m} {m}\n255\n").into_bytes();
        out.extend(
            self.values
                .as_slice()
                .iter()
                .map(|&v| (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("d{i}")).collect()
    }

    fn emb(id: &str, v: &[f64]) -> DomainEmbedding {
        DomainEmbedding {
            domain_id: id.into(),
            vector: v.to_vec(),
        }
    }

    #[test]
    fn unit_distance_gives_inverse_e() {
        let e = [
            emb("a", &[0.0, 0.0]),
            emb("b", &[0.6, 0.8]),
            emb("c", &[0.0, 0.0]),
        ];
        let s = estimated_similarity(&e, 1.0).unwrap();
        assert!((s.values.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(s.values.get(0, 2), 1.0);
        assert_eq!(s.values.get(1, 1), 1.0);
    }

    #[test]
    fn three_embeddings_match_hand_values() {
        let e = [
            emb("a", &[1.0, 0.0]),
            emb("b", &[0.0, 2.0]),
            emb("c", &[-1.0, -1.0]),
        ];
        let s = estimated_similarity(&e, 2.0).unwrap();
        // ‖a−b‖² = 5, ‖a−c‖² = 5, ‖b−c‖² = 10; σ² = 4
        let expect = [
            [1.0, (-1.25f64).exp(), (-1.25f64).exp()],
            [(-1.25f64).exp(), 1.0, (-2.5f64).exp()],
            [(-1.25f64).exp(), (-2.5f64).exp(), 1.0],
        ];
        for (p, row) in expect.iter().enumerate() {
            for (q, want) in row.iter().enumerate() {
                assert!((s.values.get(p, q) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn known_similarity_by_hand() {
        let s = known_similarity(&ids(2), &[0.0, PI], PI).unwrap();
        assert!((s.values.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        let thetas = [0.0, 0.5, 1.0, 2.0, 3.0];
        let sigma = 1.5;
        let s = known_similarity(&ids(5), &thetas, sigma).unwrap();
        for p in 0..5 {
            for q in 0..5 {
                let d: f64 = thetas[p] - thetas[q];
                let expect = (-(d * d) / (sigma * sigma)).exp();
                assert!((s.values.get(p, q) - expect).abs() < 1e-12);
            }
        }
        assert!(known_similarity(&ids(1), &[4.0], 1.0).is_err());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let e = [emb("a", &[1.0]), emb("b", &[0.0, 2.0])];
        assert!(estimated_similarity(&e, 1.0).is_err());
        let e = [emb("a", &[1.0]), emb("b", &[2.0])];
        assert!(estimated_similarity(&e, 0.0).is_err());
        assert!(estimated_similarity(&e, -1.0).is_err());
        assert!(estimated_similarity(&[], 1.0).is_err());
    }

    #[test]
    fn median_heuristic_on_even_and_odd_counts() {
        // squared distances 1, 4, 9 → median 4 → σ = 2
        let e = [emb("a", &[0.0]), emb("b", &[1.0]), emb("c", &[3.0])];
        let s = estimated_similarity_with(&e, Bandwidth::Median).unwrap();
        assert!((s.sigma.unwrap() - 2.0).abs() < 1e-15);
        let same = [emb("a", &[1.0]), emb("b", &[1.0])];
        assert!(estimated_similarity_with(&same, Bandwidth::Median).is_err());
        assert!(estimated_similarity_with(&e[..1], Bandwidth::Median).is_err());
    }

    #[test]
    fn random_matrix_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = random_similarity(&ids(1), &mut rng);
        assert_eq!(one.values.as_slice(), &[1.0]);
        let r = random_similarity(&ids(100), &mut rng);
        let mut sum = 0.0;
        for p in 0..100 {
            assert_eq!(r.values.get(p, p), 1.0);
            for q in 0..100 {
                assert_eq!(r.values.get(p, q), r.values.get(q, p));
                assert!(r.values.get(p, q) > 0.0 && r.values.get(p, q) <= 1.0);
                if p != q {
                    sum += r.values.get(p, q);
                }
            }
        }
        let mean = sum / (100.0 * 99.0);
        assert!((mean - 0.5).abs() < 0.03, "{mean}");
    }

    #[test]
    fn compare_self_and_degenerate() {
        let thetas = [0.1, 0.9, 2.0, 2.5];
        let k = known_similarity(&ids(4), &thetas, 1.0).unwrap();
        let a = compare(&k, &k).unwrap();
        assert!((a.pearson - 1.0).abs() < 1e-12 && (a.spearman - 1.0).abs() < 1e-12);
        let mut flat = k.clone();
        flat.values = Matrix::from_vec(4, 4, vec![0.5; 16]).unwrap();
        assert!(compare(&k, &flat).is_err());
        let mut renamed = k.clone();
        renamed.domain_ids.swap(0, 1);
        assert!(compare(&k, &renamed).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn pgm_layout_and_rounding() {
        let s = SimilarityMatrix {
            domain_ids: ids(2),
            values: Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap(),
            sigma: Some(1.0),
        };
        let pgm = s.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        // 127.5 rounds half up to 128
        assert_eq!(&pgm[pgm.len() - 4..], &[255, 128, 128, 255]);
    }

    #[test]
    fn theta_ordering_permutes_consistently() {
        let thetas = [2.0, 0.5, 1.0];
        let k = known_similarity(&ids(3), &thetas, 1.0).unwrap();
        let order = theta_order(&thetas);
        assert_eq!(order, vec![1, 2, 0]);
        let p = k.permuted(&order);
        assert_eq!(p.domain_ids, vec!["d1", "d2", "d0"]);
        assert_eq!(p.values.get(0, 2), k.values.get(1, 0));
    }
}
