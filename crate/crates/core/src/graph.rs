//! Weighted spatio-temporal graphs over the pedestrians of a window.
//!
//! At every step `t` each pair of pedestrians gets an edge weight from a
//! kernel of their distance. The per-step matrix is then symmetrically
//! normalized as `Λ^{-1/2} (A + I) Λ^{-1/2}`, where `Λ` holds the row sums
//! of `A + I`. The raw matrix keeps a zero diagonal; self-loops only enter
//! through the `+ I`.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trajdata::{Point, Track};

pub const DEFAULT_EXP_SIGMA: f64 = 1.0;
pub const DEFAULT_SIM_EPS: f64 = 0.2;

/// Edge-weight function of the distance `d` between two pedestrians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `1/d`, or 0 for coincident points.
    Sim,
    /// `d`.
    L2,
    /// `exp(−d)/σ`.
    Exp { sigma: f64 },
    /// `1/(d + ε)`.
    SimEps { epsilon: f64 },
    /// Every pair weighted 1.
    Ones,
}

impl Default for KernelKind {
    fn default() -> Self {
        KernelKind::Sim
    }
}

impl KernelKind {
    pub const NAMES: [&'static str; 5] = ["sim", "l2", "exp", "sim_eps", "ones"];

    pub fn parse(name: &str, sigma: f64, epsilon: f64) -> Result<Self> {
        let kind = match name {
            "sim" => KernelKind::Sim,
            "l2" => KernelKind::L2,
            "exp" => KernelKind::Exp { sigma },
            "sim_eps" => KernelKind::SimEps { epsilon },
            "ones" => KernelKind::Ones,
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel `{other}` (expected one of {})",
                    Self::NAMES.join("|")
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    /// All five kinds with default constants.
    pub fn all() -> [KernelKind; 5] {
        [
            KernelKind::L2,
            KernelKind::Exp {
                sigma: DEFAULT_EXP_SIGMA,
            },
            KernelKind::SimEps {
                epsilon: DEFAULT_SIM_EPS,
            },
            KernelKind::Ones,
            KernelKind::Sim,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Sim => "sim",
            KernelKind::L2 => "l2",
            KernelKind::Exp { .. } => "exp",
            KernelKind::SimEps { .. } => "sim_eps",
            KernelKind::Ones => "ones",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelKind::Exp { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("exp kernel sigma must be positive, got {sigma}")))
            }
            KernelKind::SimEps { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => Err(Error::Config(
                format!("sim_eps kernel epsilon must be positive, got {epsilon}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Exp { sigma } => write!(f, "exp(sigma={sigma})"),
            KernelKind::SimEps { epsilon } => write!(f, "sim_eps(eps={epsilon})"),
            other => f.write_str(other.name()),
        }
    }
}

pub fn kernel(kind: KernelKind, vi: Point, vj: Point) -> f64 {
    let d = (vi[0] - vj[0]).hypot(vi[1] - vj[1]);
    match kind {
        KernelKind::Sim => {
            if d != 0.0 {
                1.0 / d
            } else {
                0.0
            }
        }
        KernelKind::L2 => d,
        KernelKind::Exp { sigma } => (-d).exp() / sigma,
        KernelKind::SimEps { epsilon } => 1.0 / (d + epsilon),
        KernelKind::Ones => 1.0,
    }
}

/// Raw `N×N` adjacency (row-major) with zero diagonal.
pub fn build_adjacency(positions: &[Point], kind: KernelKind) -> Vec<f64> {
    let n = positions.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w = kernel(kind, positions[i], positions[j]);
            a[i * n + j] = w;
            a[j * n + i] = w;
        }
    }
    a
}

/// `Λ^{-1/2} (A + I) Λ^{-1/2}` for a symmetric nonnegative `N×N` matrix
/// with zero diagonal.
pub fn normalize_adjacency(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n, "adjacency must be N×N");
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            // summed in sorted order so the degree is independent of
            // pedestrian ordering, bit for bit
            let mut row = a[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            let deg = 1.0 + row.iter().sum::<f64>();
            1.0 / deg.sqrt()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let hat = a[i * n + j] + if i == j { 1.0 } else { 0.0 };
            out[i * n + j] = inv_sqrt_deg[i] * hat * inv_sqrt_deg[j];
        }
    }
    out
}

/// Vertex features and per-step adjacency for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalGraph {
    pub t: usize,
    pub n: usize,
    /// `T×N×2` vertex attributes.
    pub vertices: Vec<f64>,
    /// `T×N×N` normalized adjacency.
    pub adjacency: Vec<f64>,
    /// `T×N×N` kernel weights before normalization.
    pub raw_adjacency: Vec<f64>,
}

impl SpatioTemporalGraph {
    pub fn vertices_tensor(&self) -> Tensor {
        Tensor::new(vec![self.t, self.n, 2], self.vertices.clone()).expect("consistent shape")
    }

    pub fn adjacency_tensor(&self) -> Tensor {
        Tensor::new(vec![self.t, self.n, self.n], self.adjacency.clone()).expect("consistent shape")
    }

    pub fn normalized_at(&self, t: usize) -> &[f64] {
        &self.adjacency[t * self.n * self.n..(t + 1) * self.n * self.n]
    }

    pub fn raw_at(&self, t: usize) -> &[f64] {
        &self.raw_adjacency[t * self.n * self.n..(t + 1) * self.n * self.n]
    }
}

/// Builds the graph from `N × T × 2` features. The vertex set is fixed;
/// edge weights vary per step with the kernel.
pub fn build_st_graph(features: &[Track], kind: KernelKind) -> Result<SpatioTemporalGraph> {
    let n = features.len();
    let t = features.first().map_or(0, Vec::len);
    if n == 0 || t == 0 {
        return Err(Error::shape("build_st_graph", &[n, t, 2], &[1, 1, 2]));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != t) {
        return Err(Error::shape("build_st_graph", &[n, t, 2], &[n, bad.len(), 2]));
    }
    kind.validate()?;
    let mut vertices = Vec::with_capacity(t * n * 2);
    let mut adjacency = Vec::with_capacity(t * n * n);
    let mut raw_adjacency = Vec::with_capacity(t * n * n);
    for step in 0..t {
        let positions: Vec<Point> = features.iter().map(|track| track[step]).collect();
        vertices.extend(positions.iter().flatten());
        let raw = build_adjacency(&positions, kind);
        adjacency.extend(normalize_adjacency(&raw, n));
        raw_adjacency.extend(raw);
    }
    Ok(SpatioTemporalGraph {
        t,
        n,
        vertices,
        adjacency,
        raw_adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ORIGIN: Point = [0.0, 0.0];
    const P34: Point = [3.0, 4.0];

    #[test]
    fn kernel_values() {
        assert!((kernel(KernelKind::Sim, ORIGIN, P34) - 0.2).abs() < 1e-15);
        assert_eq!(kernel(KernelKind::Sim, P34, P34), 0.0);
        assert_eq!(kernel(KernelKind::L2, ORIGIN, P34), 5.0);
        assert_eq!(kernel(KernelKind::Exp { sigma: 1.0 }, P34, P34), 1.0);
        assert!((kernel(KernelKind::SimEps { epsilon: 1.0 }, ORIGIN, P34) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(kernel(KernelKind::Ones, ORIGIN, P34), 1.0);
    }

    #[test]
    fn kernel_parse_and_validate() {
        assert_eq!(KernelKind::parse("sim", 1.0, 0.2).unwrap(), KernelKind::Sim);
        assert!(KernelKind::parse("exp", 0.0, 0.2).is_err());
        assert!(KernelKind::parse("sim_eps", 1.0, -1.0).is_err());
        assert!(KernelKind::parse("cosine", 1.0, 0.2).is_err());
    }

    #[test]
    fn adjacency_small_cases() {
        assert_eq!(build_adjacency(&[ORIGIN], KernelKind::Sim), vec![0.0]);
        let a = build_adjacency(&[ORIGIN, P34], KernelKind::Sim);
        assert_eq!(a, vec![0.0, 0.2, 0.2, 0.0]);
    }

    #[test]
    fn normalize_small_cases() {
        assert_eq!(normalize_adjacency(&[0.0], 1), vec![1.0]);
        let out = normalize_adjacency(&[0.0, 1.0, 1.0, 0.0], 2);
        for v in out {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let eye = normalize_adjacency(&[0.0; 9], 3);
        assert_eq!(eye, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn st_graph_shapes_and_ones_kernel() {
        let features: Vec<Track> = (0..3)
            .map(|i| (0..8).map(|t| [t as f64 * 0.3 + i as f64, (i * t) as f64 * 0.1]).collect())
            .collect();
        let g = build_st_graph(&features, KernelKind::Sim).unwrap();
        assert_eq!((g.t, g.n), (8, 3));
        assert_eq!(g.adjacency_tensor().shape(), &[8, 3, 3]);
        assert_eq!(g.vertices_tensor().shape(), &[8, 3, 2]);
        let ones = build_st_graph(&features, KernelKind::Ones).unwrap();
        for t in 1..8 {
            assert_eq!(ones.normalized_at(t), ones.normalized_at(0));
        }
    }

    #[test]
    fn st_graph_rejects_ragged_input() {
        let features = vec![vec![[0.0; 2]; 8], vec![[0.0; 2]; 7]];
        assert!(build_st_graph(&features, KernelKind::Sim).is_err());
    }

    fn point() -> impl Strategy<Value = Point> {
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| [x, y])
    }

    fn kind() -> impl Strategy<Value = KernelKind> {
        prop_oneof![
            Just(KernelKind::Sim),
            Just(KernelKind::L2),
            (0.1f64..5.0).prop_map(|sigma| KernelKind::Exp { sigma }),
            (0.01f64..2.0).prop_map(|epsilon| KernelKind::SimEps { epsilon }),
            Just(KernelKind::Ones),
        ]
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(k in kind(), a in point(), b in point()) {
            prop_assert_eq!(kernel(k, a, b), kernel(k, b, a));
            prop_assert!(kernel(k, a, b) >= 0.0);
        }

        #[test]
        fn adjacency_symmetric_zero_diagonal(k in kind(), pts in prop::collection::vec(point(), 1..8)) {
            let n = pts.len();
            let a = build_adjacency(&pts, k);
            for i in 0..n {
                prop_assert_eq!(a[i * n + i], 0.0);
                for j in 0..n {
                    prop_assert_eq!(a[i * n + j], a[j * n + i]);
                }
            }
        }

        #[test]
        fn sim_weights_scale_inversely(pts in prop::collection::vec(point(), 2..6), c in 0.1f64..10.0) {
            let n = pts.len();
            let scaled: Vec<Point> = pts.iter().map(|p| [p[0] * c, p[1] * c]).collect();
            let (a, b) = (build_adjacency(&pts, KernelKind::Sim), build_adjacency(&scaled, KernelKind::Sim));
            for i in 0..n * n {
                prop_assert!((b[i] - a[i] / c).abs() <= 1e-9 * a[i].abs().max(1.0));
            }
        }

        #[test]
        fn st_graph_permutation(pts in prop::collection::vec(prop::collection::vec(point(), 4), 2..6), seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = pts.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Track> = perm.iter().map(|&i| pts[i].clone()).collect();
            let g = build_st_graph(&pts, KernelKind::Sim).unwrap();
            let gp = build_st_graph(&permuted, KernelKind::Sim).unwrap();
            for t in 0..4 {
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(gp.normalized_at(t)[i * n + j], g.normalized_at(t)[perm[i] * n + perm[j]]);
                    }
                }
            }
        }
    }
}
