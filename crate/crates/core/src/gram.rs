//! Gram and cross-Gram assembly over bags, and Gram spectra.
//!
//! Assembly goes through an [`EmbeddingTable`]: the symmetric matrix of embedding
//! inner products `⟨μ_i, μ_j⟩` plus each bag's inner product with the tilt
//! reference. Outer kernel values are then pure functions of table entries, so one
//! table serves the training Gram, validation blocks and test cross-Grams of an
//! experiment. Entries are computed in parallel into disjoint slots; the result
//! does not depend on the thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{embed_inner, Bag, EmbeddingKernelSpec};
use crate::error::{Error, Result};
use crate::outer_kernel::{KernelPair, OuterKernelSpec, PairGeometry, SYMMETRY_TOL};

fn check_bags(espec: &EmbeddingKernelSpec, bags: &[Bag]) -> Result<()> {
    for b in bags {
        if b.dim() != espec.dim {
            return Err(Error::input(format!(
                "bag '{}' has dimension {} but the embedding kernel expects {}",
                b.id,
                b.dim(),
                espec.dim
            )));
        }
    }
    Ok(())
}

/// Cached embedding inner products over a fixed list of bags.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    inner: DMatrix<f64>,
    ref_inner: Vec<f64>,
    ids: Vec<String>,
}

impl EmbeddingTable {
    pub fn compute(kernel: &KernelPair, bags: &[Bag]) -> Result<Self> {
        let espec = &kernel.embedding;
        check_bags(espec, bags)?;
        let n = bags.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| embed_inner(espec, &bags[i], &bags[j]))
            .collect::<Result<Vec<f64>>>()?;
        let mut inner = DMatrix::zeros(n, n);
        for (&(i, j), v) in pairs.iter().zip(values) {
            inner[(i, j)] = v;
            inner[(j, i)] = v;
        }
        let ref_inner = bags
            .par_iter()
            .map(|b| kernel.reference_inner(b))
            .collect::<Result<Vec<f64>>>()?;
        Ok(EmbeddingTable {
            inner,
            ref_inner,
            ids: bags.iter().map(|b| b.id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn inner_products(&self) -> &DMatrix<f64> {
        &self.inner
    }

    /// Outer kernel block with entry `(r, c) = K(bag rows[r], bag cols[c])`.
    pub fn block(&self, outer: &OuterKernelSpec, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            let (i, j) = (rows[r], cols[c]);
            outer.eval_geometry(PairGeometry {
                aa: self.inner[(i, i)],
                bb: self.inner[(j, j)],
                ab: self.inner[(i, j)],
                a_ref: self.ref_inner[i],
            })
        })
    }

    /// Training Gram over a subset of the table's bags.
    pub fn gram(&self, kernel: &KernelPair, idx: &[usize]) -> GramMatrix {
        let ids: Vec<String> = idx.iter().map(|&i| self.ids[i].clone()).collect();
        GramMatrix {
            values: self.block(&kernel.outer, idx, idx),
            row_ids: ids.clone(),
            col_ids: ids,
            kernel_fingerprint: Some(kernel.fingerprint()),
            kernel: Some(kernel.clone()),
        }
    }
}

/// Training Gram matrix `K̂_m` with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub kernel_fingerprint: Option<String>,
    /// `None` for matrices supplied directly rather than assembled from bags.
    pub kernel: Option<KernelPair>,
}

impl GramMatrix {
    /// Wraps a matrix that was not assembled from bags (ids are row/column indices).
    pub fn precomputed(values: DMatrix<f64>) -> Self {
        let row_ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        let col_ids = (0..values.ncols()).map(|i| i.to_string()).collect();
        GramMatrix {
            values,
            row_ids,
            col_ids,
            kernel_fingerprint: None,
            kernel: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_square(&self) -> bool {
        self.values.is_square()
    }

    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_asymmetry() <= SYMMETRY_TOL
    }
}

/// `[K(bag_i, bag_j)]`; upper triangle of the inner products is computed and mirrored.
pub fn build_gram(
    kspec: &OuterKernelSpec,
    espec: &EmbeddingKernelSpec,
    bags: &[Bag],
) -> Result<GramMatrix> {
    if bags.is_empty() {
        return Err(Error::input("cannot build a Gram matrix over zero bags"));
    }
    let kernel = KernelPair::new(kspec.clone(), *espec)?;
    let table = EmbeddingTable::compute(&kernel, bags)?;
    let all: Vec<usize> = (0..bags.len()).collect();
    Ok(table.gram(&kernel, &all))
}

/// Test-versus-train block with entry `(t, i) = K(test_t, train_i)`.
pub fn build_cross_gram(
    kspec: &OuterKernelSpec,
    espec: &EmbeddingKernelSpec,
    test_bags: &[Bag],
    train_bags: &[Bag],
) -> Result<DMatrix<f64>> {
    if test_bags.is_empty() || train_bags.is_empty() {
        return Err(Error::input(
            "cross Gram needs nonempty test and train bag lists",
        ));
    }
    let kernel = KernelPair::new(kspec.clone(), *espec)?;
    cross_gram_with(&kernel, test_bags, train_bags)
}

pub(crate) fn cross_gram_with(
    kernel: &KernelPair,
    test_bags: &[Bag],
    train_bags: &[Bag],
) -> Result<DMatrix<f64>> {
    let espec = &kernel.embedding;
    check_bags(espec, test_bags)?;
    check_bags(espec, train_bags)?;
    let self_inner = |bags: &[Bag]| -> Result<Vec<f64>> {
        bags.par_iter().map(|b| embed_inner(espec, b, b)).collect()
    };
    let test_self = self_inner(test_bags)?;
    let train_self = self_inner(train_bags)?;
    let test_ref = test_bags
        .par_iter()
        .map(|b| kernel.reference_inner(b))
        .collect::<Result<Vec<f64>>>()?;
    let (nt, m) = (test_bags.len(), train_bags.len());
    let values = (0..nt * m)
        .into_par_iter()
        .map(|k| {
            let (t, i) = (k / m, k % m);
            let ab = embed_inner(espec, &test_bags[t], &train_bags[i])?;
            Ok(kernel.outer.eval_geometry(PairGeometry {
                aa: test_self[t],
                bb: train_self[i],
                ab,
                a_ref: test_ref[t],
            }))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DMatrix::from_row_slice(nt, m, &values))
}

/// Singular values (and eigenvalues, when symmetric) of `(1/m) K̂_m`.
///
/// These are empirical proxies for the spectrum of the integral operator of `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub eigenvalues: Option<Vec<f64>>,
    pub m: usize,
    pub scale_note: String,
}

impl SpectrumReport {
    /// Report built directly from a list of singular values (sorted on entry).
    pub fn from_singular_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let m = values.len();
        SpectrumReport {
            singular_values: values,
            eigenvalues: None,
            m,
            scale_note: "supplied".into(),
        }
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

pub fn spectrum(g: &GramMatrix) -> Result<SpectrumReport> {
    if !g.is_square() {
        return Err(Error::input(format!(
            "spectrum needs a square matrix, got {}x{}",
            g.values.nrows(),
            g.values.ncols()
        )));
    }
    let m = g.dim();
    if m == 0 {
        return Err(Error::input("spectrum of an empty matrix"));
    }
    let scaled = &g.values / m as f64;
    let mut singular_values: Vec<f64> = scaled
        .clone()
        .singular_values()
        .iter()
        .map(|s| s.max(0.0))
        .collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let eigenvalues = g.is_symmetric().then(|| {
        let sym = (&scaled + scaled.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    });
    Ok(SpectrumReport {
        singular_values,
        eigenvalues,
        m,
        scale_note: format!(
            "spectrum of (1/m)·K with m = {m}; empirical proxy for the integral operator"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outer_kernel::outer_eval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bags(seed: u64, count: usize, n: usize) -> Vec<Bag> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let c: f64 = rng.random();
                let pts = (0..n)
                    .map(|_| vec![c + 0.1 * rng.random::<f64>()])
                    .collect();
                Bag::new(format!("b{i}"), pts, None).unwrap()
            })
            .collect()
    }

    fn espec() -> EmbeddingKernelSpec {
        EmbeddingKernelSpec::gaussian(0.3, 1).unwrap()
    }

    #[test]
    fn single_bag_gram() {
        let b = Bag::new("x", vec![vec![0.5]], None).unwrap();
        let g = build_gram(
            &OuterKernelSpec::GaussianOnEmbedding { sigma: 1.0 },
            &espec(),
            &[b],
        )
        .unwrap();
        assert_eq!(g.values, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(g.row_ids, vec!["x".to_string()]);
    }

    #[test]
    fn identical_bags_under_dog_give_zero_matrix() {
        let b = random_bags(1, 1, 4).pop().unwrap();
        let dog = OuterKernelSpec::DogIndefinite {
            sigma1: 1.0,
            sigma2: 2.0,
            c: 1.0,
        };
        let g = build_gram(&dog, &espec(), &[b.clone(), b]).unwrap();
        assert_eq!(g.values, DMatrix::zeros(2, 2));
    }

    #[test]
    fn gram_matches_scalar_path() {
        let bags = random_bags(7, 5, 6);
        let reference = Some(random_bags(8, 1, 6).pop().unwrap());
        for k in [
            OuterKernelSpec::GaussianOnEmbedding { sigma: 0.5 },
            OuterKernelSpec::DogIndefinite {
                sigma1: 0.3,
                sigma2: 0.6,
                c: 0.9,
            },
            OuterKernelSpec::TiltedAsymmetric {
                sigma: 0.5,
                tilt: 1.0,
                reference,
            },
        ] {
            let g = build_gram(&k, &espec(), &bags).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let oracle = outer_eval(&k, &espec(), &bags[i], &bags[j]).unwrap();
                    assert!((g.values[(i, j)] - oracle).abs() <= 1e-12);
                }
            }
            assert_eq!(g.is_symmetric(), k.symmetric());
        }
    }

    #[test]
    fn cross_gram_contracts() {
        let bags = random_bags(9, 4, 5);
        let g = OuterKernelSpec::GaussianOnEmbedding { sigma: 0.5 };
        let full = build_gram(&g, &espec(), &bags).unwrap();
        let cross = build_cross_gram(&g, &espec(), &bags, &bags).unwrap();
        assert_eq!(cross, full.values);

        let row = build_cross_gram(&g, &espec(), &bags[..1], &bags).unwrap();
        assert_eq!(row[(0, 0)], 1.0);
        assert_eq!(row.shape(), (1, 4));

        let reference = Some(random_bags(10, 1, 5).pop().unwrap());
        let tilted = OuterKernelSpec::TiltedAsymmetric {
            sigma: 0.5,
            tilt: 1.0,
            reference,
        };
        let (a, b) = (&bags[..2], &bags[2..]);
        let ab = build_cross_gram(&tilted, &espec(), a, b).unwrap();
        let ba = build_cross_gram(&tilted, &espec(), b, a).unwrap();
        assert!((ab - ba.transpose()).abs().max() > 0.0);

        assert!(build_cross_gram(&g, &espec(), &[], &bags).is_err());
        let wrong = Bag::new("w", vec![vec![0.0, 0.0]], None).unwrap();
        assert!(matches!(
            build_cross_gram(&g, &espec(), &[wrong], &bags),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn spectrum_of_diagonal_matrices() {
        let s = spectrum(&GramMatrix::precomputed(DMatrix::identity(3, 3))).unwrap();
        for v in &s.singular_values {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let d =
            GramMatrix::precomputed(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                1.0, 3.0, 2.0,
            ])));
        let s = spectrum(&d).unwrap();
        let expect = [1.0, 2.0 / 3.0, 1.0 / 3.0];
        for (v, e) in s.singular_values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
        assert_eq!(s.eigenvalues.as_ref().unwrap().len(), 3);
        assert!(spectrum(&GramMatrix::precomputed(DMatrix::zeros(2, 3))).is_err());
    }

    #[test]
    fn spectrum_matches_eigen_oracle_and_trace() {
        let bags = random_bags(20, 20, 8);
        let g = build_gram(
            &OuterKernelSpec::GaussianOnEmbedding { sigma: 0.3 },
            &espec(),
            &bags,
        )
        .unwrap();
        let s = spectrum(&g).unwrap();
        // independent route: absolute eigenvalues of the symmetric matrix
        let mut oracle: Vec<f64> = SymmetricEigen::new(g.values.clone() / 20.0)
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s.singular_values.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8);
        }
        let ev = s.eigenvalues.unwrap();
        let trace = g.values.trace() / 20.0;
        assert!((ev.iter().sum::<f64>() - trace).abs() <= 1e-8);
        assert!(ev[19] >= -1e-8 * ev[0]);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let bags = random_bags(31, 12, 10);
        let k = OuterKernelSpec::DogIndefinite {
            sigma1: 0.3,
            sigma2: 0.6,
            c: 0.9,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_gram(&k, &espec(), &bags).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert!(one
            .values
            .iter()
            .zip(four.values.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
