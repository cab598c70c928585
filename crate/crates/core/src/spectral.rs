//! Graph Laplacians, symmetric eigendecomposition, proto-value functions,
//! GraphWave embeddings and the Laplacian smoothness functional.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::graph::StateGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplacianKind {
    /// `L = D - W`
    Combinatorial,
    /// `L = I - D^{-1/2} W D^{-1/2}`
    #[default]
    Normalized,
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, each
/// eigenvector's first entry with `|x| > 1e-12` made positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    pub laplacian_kind: Option<LaplacianKind>,
}

impl SpectralDecomposition {
    /// Largest `||M u_i - lambda_i u_i||_2` over all pairs.
    pub fn max_residual(&self, m: &DMatrix<f64>) -> f64 {
        (0..self.eigenvalues.len())
            .map(|i| {
                let u = self.eigenvectors.column(i);
                (m * u - u * self.eigenvalues[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `U diag(lambda) U^T`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let scaled = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * self.eigenvalues[c]);
        scaled * u.transpose()
    }
}

fn combinatorial_unchecked(g: &StateGraph) -> DMatrix<f64> {
    let mut l = -g.dense_weights();
    for u in 0..g.n_nodes() {
        l[(u, u)] = g.degree(u);
    }
    l
}

pub fn laplacian(g: &StateGraph, kind: LaplacianKind) -> Result<DMatrix<f64>> {
    if g.n_nodes() == 0 {
        return Err(Error::DegenerateGraph("graph has no nodes".into()));
    }
    g.check_no_isolated()?;
    Ok(match kind {
        LaplacianKind::Combinatorial => combinatorial_unchecked(g),
        LaplacianKind::Normalized => {
            let n = g.n_nodes();
            let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / g.degree(u).sqrt()).collect();
            let mut l = DMatrix::identity(n, n);
            for (u, v, w) in g.edges() {
                let x = w * inv_sqrt[u] * inv_sqrt[v];
                l[(u, v)] = -x;
                l[(v, u)] = -x;
            }
            l
        }
    })
}

fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Pairs are ordered by eigenvalue; eigenvalues within `1e-9 * max(1, ||M||_F)`
/// of each other are ordered by lexicographic comparison of their
/// (sign-fixed) eigenvectors.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Contract(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    for r in 0..n {
        for c in r + 1..n {
            if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                return Err(Error::Contract(format!("matrix is not symmetric at ({r}, {c})")));
            }
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            (eig.eigenvalues[i], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let tie = 1e-9 * m.norm().max(1.0);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[end - 1].0 <= tie {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| lexicographic(&a.1, &b.1));
        start = end;
    }

    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| pairs[c].1[r]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors, laplacian_kind: None })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

pub fn laplacian_spectrum(g: &StateGraph, kind: LaplacianKind) -> Result<SpectralDecomposition> {
    let mut dec = eig_sym(&laplacian(g, kind)?)?;
    dec.laplacian_kind = Some(kind);
    Ok(dec)
}

/// Proto-value functions: the `d` smoothest Laplacian eigenvectors.
pub fn pvf_basis(g: &StateGraph, d: usize, kind: LaplacianKind) -> Result<BasisMatrix> {
    if d == 0 || d > g.n_nodes() {
        return Err(Error::Dimension(format!("PVF dimension {d} must lie in 1..={}", g.n_nodes())));
    }
    let dec = laplacian_spectrum(g, kind)?;
    BasisMatrix::new(dec.eigenvectors.columns(0, d).into_owned(), g.node_to_state().to_vec())
}

/// Sum of `w_uv (v_u - v_v)^2` over edges. The quadratic form `v^T L v` on
/// the combinatorial Laplacian is evaluated as a cross-check.
pub fn smoothness(v: &[f64], g: &StateGraph) -> Result<f64> {
    if v.len() != g.n_nodes() {
        return Err(Error::Dimension(format!("{} values for {} nodes", v.len(), g.n_nodes())));
    }
    let edgewise: f64 = g.edges().map(|(a, b, w)| w * (v[a] - v[b]).powi(2)).sum();
    let quadratic = quadratic_form(v, g);
    if (edgewise - quadratic).abs() > 1e-9 * edgewise.abs().max(quadratic.abs()).max(1e-300) {
        return Err(Error::Contract(format!("smoothness paths disagree: {edgewise} vs {quadratic}")));
    }
    Ok(edgewise)
}

/// `v^T (D - W) v`
pub fn quadratic_form(v: &[f64], g: &StateGraph) -> f64 {
    (0..g.n_nodes())
        .map(|u| {
            let lv: f64 = g.degree(u) * v[u] - g.neighbors(u).iter().map(|&(x, w)| w * v[x]).sum::<f64>();
            v[u] * lv
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaveletScale {
    Fixed(f64),
    /// `s = -ln(0.9) / lambda_2`, so the slowest non-trivial mode keeps 90%
    /// of its energy.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphWaveConfig {
    pub scale: WaveletScale,
    pub n_sample_points: usize,
    pub t_max: f64,
}

impl GraphWaveConfig {
    pub fn for_dim(d: usize) -> Self {
        GraphWaveConfig { scale: WaveletScale::Fixed(1.0), n_sample_points: d / 2, t_max: 100.0 }
    }
}

/// Heat-kernel wavelet matrix `U diag(exp(-s lambda)) U^T`; column `u` is the
/// wavelet centred at node `u`.
pub fn heat_wavelets(dec: &SpectralDecomposition, scale: f64) -> DMatrix<f64> {
    let u = &dec.eigenvectors;
    let filtered = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * (-scale * dec.eigenvalues[c]).exp());
    filtered * u.transpose()
}

/// GraphWave structural embeddings: the empirical characteristic function of
/// each node's heat wavelet, sampled at `d / 2` points evenly spaced over
/// `[0, t_max]`, real and imaginary parts interleaved.
pub fn graphwave_embed(g: &StateGraph, d: usize, cfg: &GraphWaveConfig) -> Result<BasisMatrix> {
    if d == 0 || !d.is_multiple_of(2) || d != 2 * cfg.n_sample_points {
        return Err(Error::Dimension(format!(
            "GraphWave dimension {d} must be even and equal 2 x {} sample points",
            cfg.n_sample_points
        )));
    }
    let dec = laplacian_spectrum(g, LaplacianKind::Combinatorial)?;
    let scale = match cfg.scale {
        WaveletScale::Fixed(s) => s,
        WaveletScale::Auto => {
            let l2 = dec.eigenvalues.get(1).copied().unwrap_or(1.0);
            -(0.9f64).ln() / l2.max(1e-12)
        }
    };
    let psi = heat_wavelets(&dec, scale);
    let n = g.n_nodes();
    let k = cfg.n_sample_points;
    let ts: Vec<f64> = (0..k).map(|i| if k == 1 { 0.0 } else { cfg.t_max * i as f64 / (k - 1) as f64 }).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let col = psi.column(u);
            ts.iter()
                .flat_map(|&t| {
                    let (re, im) = col.iter().fold((0.0, 0.0), |(re, im), &x| {
                        let (s, c) = (t * x).sin_cos();
                        (re + c, im + s)
                    });
                    [re / n as f64, im / n as f64]
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    BasisMatrix::new(DMatrix::from_row_slice(n, d, &flat), g.node_to_state().to_vec())
}
