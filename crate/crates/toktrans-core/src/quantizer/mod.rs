//! Vector quantization: a k-means codebook over frame embeddings, with
//! tokenize/reconstruct round trips.

mod source;

pub use source::{
    expansion_factor, generate_corpus, symbol_centroid, synthesize_frames, SourceConfig,
    Utterance,
};

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Fitted codebook: `k` centroids plus the fit diagnostics.
#[derive(Debug, Clone)]
pub struct Codebook {
    centroids: Tensor,
    inertia: f64,
    iters: usize,
}

impl Codebook {
    /// Wraps existing centroids, for checkpoint loads and tests. Inertia
    /// and iteration count are zero since no fit produced them.
    pub fn from_centroids(centroids: Tensor) -> Result<Self> {
        if centroids.rank() != 2 || centroids.rows() == 0 {
            return Err(CoreError::EmptyInput("codebook centroids"));
        }
        Ok(Self { centroids, inertia: 0.0, iters: 0 })
    }

    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }

    pub fn len(&self) -> usize {
        self.centroids.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Sum of squared distances from each training point to its centroid.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Lloyd iterations performed before convergence or the cap.
    pub fn iters(&self) -> usize {
        self.iters
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Index of the nearest centroid; ties resolve to the lower index.
fn nearest(centroids: &Tensor, point: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(centroids.row(c), point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Fits `k` centroids to `points` with k-means++ seeding and Lloyd
/// iterations. Deterministic in `seed` and point order. Clusters that end
/// an iteration empty are reseeded at the point farthest from its current
/// centroid, which never increases inertia.
pub fn kmeans_fit(points: &Tensor, k: usize, max_iters: usize, seed: u64) -> Result<Codebook> {
    if points.rank() != 2 || points.rows() == 0 {
        return Err(CoreError::EmptyInput("k-means points"));
    }
    let n = points.rows();
    let dim = points.cols();
    if k == 0 || k > n {
        return Err(CoreError::Invalid(alloc::format!(
            "cannot place {k} centroids over {n} points"
        )));
    }
    let mut rng = Rng::new(seed);

    // Farthest-point seeding: after a random first pick, each next
    // centroid is the point farthest from the chosen set. When the data
    // falls in well-separated clumps this covers every clump before
    // placing a second seed in any of them.
    let mut centroids = Tensor::zeros(&[k, dim]);
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let pick = d2
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }

    let mut assign = alloc::vec![0usize; n];
    let mut iters = 0usize;
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(&centroids, points.row(i));
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed && iters > 0 {
            break;
        }
        iters += 1;

        let mut sums = Tensor::zeros(&[k, dim]);
        let mut counts = alloc::vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            let row = sums.row_mut(assign[i]);
            for (s, x) in row.iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut member_d2: Vec<f64> =
            (0..n).map(|i| sq_dist(points.row(i), centroids.row(assign[i]))).collect();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                let src: Vec<f64> = sums.row(c).iter().map(|s| s * inv).collect();
                centroids.row_mut(c).copy_from_slice(&src);
            } else {
                // Reseed on the globally farthest point; zeroing its
                // distance keeps later empty clusters from reusing it.
                let far = member_d2
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(points.row(far));
                member_d2[far] = 0.0;
            }
        }
    }
    // Final assignment pass so the reported inertia matches the returned
    // centroids even when the iteration cap cut the loop.
    let inertia = (0..n).map(|i| nearest(&centroids, points.row(i)).1).sum();
    Ok(Codebook { centroids, inertia, iters })
}

/// Nearest-centroid index per frame; ties resolve to the lower index.
pub fn tokenize(codebook: &Codebook, frames: &Tensor) -> Result<Vec<usize>> {
    if frames.rank() != 2 || frames.cols() != codebook.dim() {
        return Err(CoreError::ShapeMismatch {
            op: "tokenize frames",
            lhs: alloc::vec![frames.rows(), codebook.dim()],
            rhs: frames.shape().to_vec(),
        });
    }
    Ok((0..frames.rows()).map(|i| nearest(&codebook.centroids, frames.row(i)).0).collect())
}

/// Centroid lookup per token: the `[L, D]` reconstruction.
pub fn reconstruct(codebook: &Codebook, tokens: &[usize]) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[tokens.len().max(1), codebook.dim()]);
    if tokens.is_empty() {
        return Err(CoreError::EmptyInput("tokens"));
    }
    for (i, &tok) in tokens.iter().enumerate() {
        if tok >= codebook.len() {
            return Err(CoreError::TokenOutOfRange { token: tok, vocab: codebook.len() });
        }
        out.row_mut(i).copy_from_slice(codebook.centroids.row(tok));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_two_separated_pairs() {
        // Exhaustive oracle over all 2-part labelings puts the optimal
        // centroids at the pair midpoints with total inertia 1.
        let points = Tensor::new(&[4, 1], alloc::vec![0.0, 1.0, 10.0, 11.0]);
        let fit = kmeans_fit(&points, 2, 50, 7).unwrap();
        let mut got = alloc::vec![fit.centroids().at2(0, 0), fit.centroids().at2(1, 0)];
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.5).abs() < 1e-9);
        assert!((got[1] - 10.5).abs() < 1e-9);
        assert!((fit.inertia() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tokenize_breaks_ties_toward_lower_index() {
        let centroids = Tensor::new(&[2, 2], alloc::vec![1.0, 0.0, 1.0, 0.0]);
        let book = Codebook::from_centroids(centroids).unwrap();
        let frames = Tensor::new(&[1, 2], alloc::vec![3.0, 4.0]);
        assert_eq!(tokenize(&book, &frames).unwrap(), alloc::vec![0]);
    }

    #[test]
    fn reconstruct_rejects_out_of_range() {
        let book =
            Codebook::from_centroids(Tensor::new(&[2, 1], alloc::vec![0.0, 1.0])).unwrap();
        assert!(matches!(
            reconstruct(&book, &[2]),
            Err(CoreError::TokenOutOfRange { token: 2, vocab: 2 })
        ));
    }

    #[test]
    fn empty_cluster_reseeds_to_cover_all_locations() {
        // Eight coincident points at two spots with k = 3: whatever the
        // seeding picks, reseeding must still leave both spots covered.
        let mut data = alloc::vec![];
        for _ in 0..4 {
            data.extend_from_slice(&[0.0, 0.0]);
        }
        for _ in 0..4 {
            data.extend_from_slice(&[5.0, 5.0]);
        }
        let points = Tensor::new(&[8, 2], data);
        let fit = kmeans_fit(&points, 3, 50, 3).unwrap();
        assert!(fit.inertia() < 1e-12);
    }
}
