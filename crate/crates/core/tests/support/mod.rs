//! Independent oracles shared by the core integration tests and the
//! acceptance target.
#![allow(dead_code)]

use hexrem::graph::{build_tile_graph, normalized_adjacency, NormalizedAdjacency, TileGraph};
use hexrem::hexgrid::{k_ring, HexCellId};
use hexrem::nn::{
    loss_and_grad, Architecture, LabelSet, Matrix, Network, Targets, Task, N_CLASSES,
};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

/// Random tile subset of the radius-`reach` hexagon around the origin.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, reach: i64, k_level: u32) -> TileGraph {
    let mut pool = k_ring(HexCellId::new(0, 0), reach).unwrap();
    assert!(n <= pool.len());
    pool.shuffle(rng);
    build_tile_graph(&pool[..n], k_level).unwrap()
}

/// `D^{-1/2} (A + I) D^{-1/2}` built densely from the edge list.
pub fn dense_adjacency(g: &TileGraph) -> DMatrix<f64> {
    let n = g.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for &(i, j) in &g.edges {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt())
}

/// Largest absolute eigenvalue from a dense symmetric eigensolve.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub fn max_abs_diff(adj: &NormalizedAdjacency, dense: &DMatrix<f64>) -> f64 {
    let sparse = adj.matrix.to_dense();
    let mut worst: f64 = 0.0;
    for i in 0..dense.nrows() {
        for j in 0..dense.ncols() {
            worst = worst.max((sparse.get(i, j) - dense[(i, j)]).abs());
        }
    }
    worst
}

pub struct GradProblem {
    pub net: Network,
    pub adj: Option<NormalizedAdjacency>,
    pub x: Matrix,
    pub labels: LabelSet,
}

/// Small random network, graph, inputs and partially masked labels.
pub fn grad_problem(arch: Architecture, task: Task, seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10;
    let in_dim = 5;
    let g = random_graph(&mut rng, n, 2, 1);
    let adj = (arch == Architecture::Gcn).then(|| normalized_adjacency(&g));
    let net = Network::init(arch, task, in_dim, &[7, 6], &mut rng);
    let x = Matrix::from_vec(
        n,
        in_dim,
        (0..n * in_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    mask[0] = true;
    let targets = match task {
        Task::Regression => {
            Targets::Continuous((0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        }
        Task::Classification => {
            Targets::Classes((0..n).map(|_| rng.random_range(0..N_CLASSES)).collect())
        }
    };
    GradProblem {
        net,
        adj,
        x,
        labels: LabelSet::new(targets, mask).unwrap(),
    }
}

/// Sign pattern of every hidden pre-activation.
fn relu_pattern(p: &GradProblem, net: &Network) -> Vec<bool> {
    let mut h = p.x.clone();
    let mut pattern = Vec::new();
    for layer in &net.layers[..net.layers.len() - 1] {
        let mut z = h.matmul(&layer.weight).unwrap();
        if let Some(a) = &p.adj {
            z = a.matrix.matmul_dense(&z).unwrap();
        }
        z.add_row_vector(&layer.bias);
        pattern.extend(z.data().iter().map(|&v| v > 0.0));
        h = z.map(|v| v.max(0.0));
    }
    pattern
}

fn loss(p: &GradProblem, net: &Network) -> f64 {
    let out = net.output(p.adj.as_ref().map(|a| &a.matrix), &p.x).unwrap();
    loss_and_grad(net.task, &out, &p.labels).unwrap().0
}

pub struct GradCheck {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`.
    pub rel_error: f64,
    pub n_params: usize,
    /// Parameters left out because a ±h step flips a ReLU.
    pub n_kinked: usize,
}

/// Central differences of step [`FD_STEP`] against the analytic gradient,
/// over every parameter whose perturbation keeps the ReLU pattern fixed.
pub fn gradient_check(p: &GradProblem) -> GradCheck {
    let adj = p.adj.as_ref().map(|a| &a.matrix);
    let (out, cache) = p.net.forward::<ChaCha8Rng>(adj, &p.x, None).unwrap();
    let (_, g_out) = loss_and_grad(p.net.task, &out, &p.labels).unwrap();
    let grads = p.net.backward(adj, &cache, &g_out).unwrap();
    let base = relu_pattern(p, &p.net);

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut n_kinked = 0;
    let mut probe = p.net.clone();
    let mut visit = |a: f64, get: &dyn Fn(&mut Network) -> &mut f64| {
        let orig = *get(&mut probe);
        *get(&mut probe) = orig + FD_STEP;
        let (up, up_pat) = (loss(p, &probe), relu_pattern(p, &probe));
        *get(&mut probe) = orig - FD_STEP;
        let (down, down_pat) = (loss(p, &probe), relu_pattern(p, &probe));
        *get(&mut probe) = orig;
        if up_pat != base || down_pat != base {
            n_kinked += 1;
        } else {
            analytic.push(a);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    };
    for (l, lg) in grads.iter().enumerate() {
        for k in 0..lg.weight.data().len() {
            visit(lg.weight.data()[k], &|n: &mut Network| {
                &mut n.layers[l].weight.data_mut()[k]
            });
        }
        for k in 0..lg.bias.len() {
            visit(lg.bias[k], &|n: &mut Network| &mut n.layers[l].bias[k]);
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    GradCheck {
        rel_error: norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-300),
        n_params: analytic.len() + n_kinked,
        n_kinked,
    }
}
