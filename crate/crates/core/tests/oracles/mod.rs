//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Nothing here calls the code under test except
//! to obtain the values being compared.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use symconn_core::conndata::Connectome;
use symconn_core::graphmetrics::{self, BinaryGraph};
use symconn_core::losses;
use symconn_core::netarch::{self, ArchConfig, Discriminator, Generator, HeadVars};
use symconn_core::symdiffusion::{self, build_schedule, sample_symmetric_noise, Denoiser, NoiseSchedule};
use symconn_core::tensorgrad::gradcheck::{gradient_pair, max_rel_error};
use symconn_core::tensorgrad::{BoundParams, Tape, Tensor, Var};
use symconn_core::{Result, TimeSeriesPanel};

// ---------------------------------------------------------------- graphs

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> BinaryGraph {
    let p: f64 = rng.random_range(0.1..0.9);
    let mut g = BinaryGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                g.add_edge(i, j);
            }
        }
    }
    g
}

fn simple_paths(g: &BinaryGraph, at: usize, t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if at == t {
        out.push(path.clone());
        return;
    }
    for w in g.neighbors(at).collect::<Vec<_>>() {
        if !path.contains(&w) {
            path.push(w);
            simple_paths(g, w, t, path, out);
            path.pop();
        }
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Betweenness from every simple path between every unordered pair, kept
/// only at the minimum length. Pair contributions (through/total) are
/// summed as exact rationals and rounded to f64 once, after normalizing by
/// (n−1)(n−2)/2.
pub fn betweenness_by_enumeration(g: &BinaryGraph) -> Vec<f64> {
    let n = g.n();
    if n < 3 {
        return vec![0.0; n];
    }
    let mut bc: Vec<(u128, u128)> = vec![(0, 1); n];
    for s in 0..n {
        for t in s + 1..n {
            let mut all = Vec::new();
            simple_paths(g, s, t, &mut vec![s], &mut all);
            let Some(shortest) = all.iter().map(Vec::len).min() else {
                continue;
            };
            let kept: Vec<&Vec<usize>> = all.iter().filter(|p| p.len() == shortest).collect();
            for (v, b) in bc.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                let through = kept.iter().filter(|p| p.contains(&v)).count() as u128;
                let total = kept.len() as u128;
                let (num, den) = (b.0 * total + through * b.1, b.1 * total);
                let k = gcd(num, den);
                *b = (num / k, den / k);
            }
        }
    }
    let norm = ((n - 1) * (n - 2) / 2) as u128;
    bc.iter().map(|&(num, den)| num as f64 / (den * norm) as f64).collect()
}

pub fn floyd_warshall(g: &BinaryGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.n();
    let mut d: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(0)
                    } else if g.has_edge(i, j) {
                        Some(1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Closed triples through i over all unordered neighbor pairs, by scanning
/// every node pair rather than the neighbor list.
pub fn clustering_by_triples(g: &BinaryGraph) -> Vec<f64> {
    let n = g.n();
    (0..n)
        .map(|i| {
            let (mut pairs, mut closed) = (0usize, 0usize);
            for u in 0..n {
                for v in u + 1..n {
                    if u != i && v != i && g.has_edge(i, u) && g.has_edge(i, v) {
                        pairs += 1;
                        closed += g.has_edge(u, v) as usize;
                    }
                }
            }
            if pairs == 0 {
                0.0
            } else {
                closed as f64 / pairs as f64
            }
        })
        .collect()
}

fn efficiency_from(d: &[Vec<Option<usize>>]) -> f64 {
    let n = d.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += d[i][j].map_or(0.0, |h| 1.0 / h as f64);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Naive eight-metric report: every quantity from the oracles above and
/// plain loops, sharing only `binarize` with the code under test.
pub fn naive_metric_report(pred: &Connectome, emp: &Connectome, density: f64) -> [f64; 8] {
    let n = pred.n();
    let (gp, ge) = (
        graphmetrics::binarize(pred, density).unwrap(),
        graphmetrics::binarize(emp, density).unwrap(),
    );
    let mad = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let (mut pu, mut eu) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            pu.push(pred.get(i, j));
            eu.push(emp.get(i, j));
        }
    }
    let k = pu.len() as f64;
    let (mp, me) = (pu.iter().sum::<f64>() / k, eu.iter().sum::<f64>() / k);
    let cov: f64 = pu.iter().zip(&eu).map(|(a, b)| (a - mp) * (b - me)).sum();
    let vp: f64 = pu.iter().map(|a| (a - mp).powi(2)).sum();
    let ve: f64 = eu.iter().map(|b| (b - me).powi(2)).sum();
    let deg = |g: &BinaryGraph| {
        (0..n)
            .map(|i| (0..n).filter(|&j| g.has_edge(i, j)).count() as f64)
            .collect::<Vec<_>>()
    };
    let stren = |a: &Connectome| (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect::<Vec<f64>>();
    let local = |g: &BinaryGraph| {
        (0..n)
            .map(|i| {
                let nb: Vec<usize> = (0..n).filter(|&j| g.has_edge(i, j)).collect();
                if nb.len() < 2 {
                    0.0
                } else {
                    efficiency_from(&floyd_warshall(&g.induced(&nb)))
                }
            })
            .collect::<Vec<_>>()
    };
    [
        mad(&pu, &eu),
        cov / (vp * ve).sqrt(),
        mad(&deg(&gp), &deg(&ge)),
        mad(&stren(pred), &stren(emp)),
        mad(&clustering_by_triples(&gp), &clustering_by_triples(&ge)),
        mad(&betweenness_by_enumeration(&gp), &betweenness_by_enumeration(&ge)),
        mad(&local(&gp), &local(&ge)),
        (efficiency_from(&floyd_warshall(&gp)) - efficiency_from(&floyd_warshall(&ge))).abs(),
    ]
}

/// Brandes vs enumeration, BFS vs Floyd–Warshall and clustering vs triples
/// on `cases` random graphs with 2 ≤ n ≤ 7. Returns the first mismatch.
/// Betweenness is compared to 1e-12 against the exact rational: Brandes
/// accumulates floating-point quotients, so agreement is up to rounding.
pub fn graph_oracle_suite(cases: usize, seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(2..=7);
        let g = random_graph(&mut rng, n);
        let (bc, bc_ref) = (graphmetrics::betweenness(&g), betweenness_by_enumeration(&g));
        for v in 0..n {
            if (bc[v] - bc_ref[v]).abs() > 1e-12 {
                return Err(format!("case {case}: betweenness[{v}] {} vs {}", bc[v], bc_ref[v]));
            }
        }
        if graphmetrics::hop_distances(&g) != floyd_warshall(&g) {
            return Err(format!("case {case}: BFS and Floyd–Warshall distances differ"));
        }
        if graphmetrics::clustering(&g) != clustering_by_triples(&g) {
            return Err(format!("case {case}: clustering differs from triple enumeration"));
        }
    }
    Ok(())
}

/// K_n → 1 for global and local efficiency; the 4-node path → 13/18.
pub fn efficiency_hand_cases() -> std::result::Result<(), String> {
    for n in 3..=7 {
        let k = BinaryGraph::complete(n);
        let e = graphmetrics::global_efficiency(&k);
        if (e - 1.0).abs() > 1e-12 {
            return Err(format!("K_{n} global efficiency {e}"));
        }
        if graphmetrics::local_efficiency(&k)
            .iter()
            .any(|l| (l - 1.0).abs() > 1e-12)
        {
            return Err(format!("K_{n} local efficiency is not 1"));
        }
    }
    let path = BinaryGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
    let e = graphmetrics::global_efficiency(&path);
    if (e - 13.0 / 18.0).abs() > 1e-12 {
        return Err(format!("4-path global efficiency {e}"));
    }
    Ok(())
}

// ------------------------------------------------------------- diffusion

pub struct MomentCheck {
    pub t: usize,
    /// Worst |mean − √η̃·A_0| / |√η̃·A_0| over off-diagonal entries.
    pub mean_rel: f64,
    /// Worst |var − (1−η̃)/2| / ((1−η̃)/2).
    pub var_rel: f64,
    /// Worst |mean − √η̃·A_0| in units of the analytic standard error.
    pub mean_z: f64,
}

pub fn desk_schedule() -> NoiseSchedule {
    build_schedule(100, 1e-4, 0.02).unwrap()
}

/// Monte Carlo of diffuse_to at step t with A_0 fixed, one fresh noise
/// draw per sample.
pub fn diffusion_moments(a0: &Connectome, t: usize, draws: usize, seed: u64) -> MomentCheck {
    let sched = desk_schedule();
    let n = a0.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n * n];
    let mut sum_sq = vec![0.0; n * n];
    for _ in 0..draws {
        let eps = sample_symmetric_noise(n, &mut rng);
        let a = symdiffusion::diffuse_to(a0, t, &eps, &sched).unwrap();
        for (k, v) in a.values().iter().enumerate() {
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let eb = sched.eta_bar(t);
    let var_expect = (1.0 - eb) / 2.0;
    let m = draws as f64;
    let se = (var_expect / m).sqrt();
    let (mut mean_rel, mut var_rel, mut mean_z) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i * n + j;
            let mean = sum[k] / m;
            let var = (sum_sq[k] - m * mean * mean) / (m - 1.0);
            let mean_expect = eb.sqrt() * a0.get(i, j);
            mean_rel = mean_rel.max((mean - mean_expect).abs() / mean_expect.abs());
            var_rel = var_rel.max((var - var_expect).abs() / var_expect);
            mean_z = mean_z.max((mean - mean_expect).abs() / se);
        }
    }
    MomentCheck {
        t,
        mean_rel,
        var_rel,
        mean_z,
    }
}

/// Pooled off-diagonal sample variance of S = (ε + εᵀ)/2.
pub fn noise_variance(n: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2, mut k) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let eps = sample_symmetric_noise(n, &mut rng);
        for v in eps.0.upper() {
            s += v;
            s2 += v * v;
            k += 1.0;
        }
    }
    let mean = s / k;
    (s2 - k * mean * mean) / (k - 1.0)
}

// ------------------------------------------------ structural invariants

pub fn is_structural(a: &Connectome) -> bool {
    let n = a.n();
    let v = a.values();
    (0..n).all(|i| v[i * n + i] == 0.0 && (0..n).all(|j| v[i * n + j] == v[j * n + i]))
}

fn tensor_is_structural(t: &Tensor) -> bool {
    let n = t.rows();
    let v = t.data();
    (0..n).all(|i| v[i * n + i] == 0.0 && (0..n).all(|j| v[i * n + j] == v[j * n + i]))
}

pub fn random_sc(rng: &mut ChaCha8Rng, n: usize) -> Connectome {
    let up: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random()).collect();
    Connectome::from_upper(n, &up).unwrap()
}

pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, s: usize) -> TimeSeriesPanel {
    TimeSeriesPanel::new(n, s, (0..n * s).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

pub fn small_arch(n: usize, s: usize) -> ArchConfig {
    ArchConfig {
        n,
        series_len: s,
        model_dim: 8,
        heads: 2,
        layers: 2,
        t_max: 100,
        d: 10,
        residual: true,
    }
}

/// Checks symmetry and the zero diagonal, bit for bit, on every matrix the
/// diffusion and sampling code produces along `trajectories` seeded runs.
/// Returns the number of matrices inspected.
pub fn structural_suite(trajectories: usize, seed: u64) -> std::result::Result<usize, String> {
    let sched = desk_schedule();
    let mut checked = 0;
    let mut check = |what: &str, k: usize, ok: bool| -> std::result::Result<(), String> {
        checked += 1;
        if ok {
            Ok(())
        } else {
            Err(format!("trajectory {k}: {what} broke symmetry or the zero diagonal"))
        }
    };
    for k in 0..trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let n = rng.random_range(4..=10);
        let a0 = random_sc(&mut rng, n);
        let mut a = a0.clone();
        for t in 1..=sched.t_max() {
            let eps = sample_symmetric_noise(n, &mut rng);
            check("noise", k, is_structural(&eps.0))?;
            a = symdiffusion::diffuse_step(&a, t, &eps, &sched).map_err(|e| e.to_string())?;
            check("diffuse_step", k, is_structural(&a))?;
        }
        for t in [0, 1, 37, 100] {
            let eps = sample_symmetric_noise(n, &mut rng);
            let at = symdiffusion::diffuse_to(&a0, t, &eps, &sched).map_err(|e| e.to_string())?;
            check("diffuse_to", k, is_structural(&at))?;
            let r = symdiffusion::renoise_prediction(&a0, t, &eps, &sched).map_err(|e| e.to_string())?;
            check("renoise_prediction", k, is_structural(&r))?;
        }
        let mut tape = Tape::new();
        let f = tape.constant(gaussian_tensor(&mut rng, n, 5, 1.0));
        let p = netarch::pcd(&mut tape, f).map_err(|e| e.to_string())?;
        check("pcd", k, tensor_is_structural(tape.value(p)))?;

        let s = 2 * n;
        let g = Generator::new(small_arch(n, s), &mut rng).map_err(|e| e.to_string())?;
        let panel = random_panel(&mut rng, n, s);
        let mut all_ok = true;
        let out = symdiffusion::sample_sc_with(&g, &panel, &sched, 10, &mut rng, |_, m| {
            all_ok &= is_structural(m);
        })
        .map_err(|e| e.to_string())?;
        check("sample_sc intermediate", k, all_ok)?;
        check("sample_sc", k, is_structural(&out))?;
    }
    Ok(checked)
}

/// Stub generator that ignores its inputs and emits a fixed matrix.
pub struct Oracle(pub Connectome);

impl Denoiser for Oracle {
    fn predict(&self, _a_next: &Connectome, _f: &TimeSeriesPanel, _t: usize) -> Result<Connectome> {
        Ok(self.0.clone())
    }
}

// ------------------------------------------------------------ gradients

pub fn gaussian_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c)
            .map(|_| {
                let m: f64 = rng.random_range(0.05..1.0);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
}

/// Σ out ⊙ W for a fixed random W, so every output entry gets its own
/// upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, w: &Tensor) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(out, wv)?;
    Ok(tape.sum(p))
}

fn upper_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, 1.0);
        }
    }
    m
}

/// Symmetric zero-diagonal matrix built on the tape from a free matrix's
/// strict upper triangle.
fn symmetric_from(tape: &mut Tape, free: Var) -> Result<Var> {
    let n = tape.value(free).rows();
    let mask = tape.constant(upper_mask(n));
    let u = tape.mul(free, mask)?;
    let ut = tape.transpose(u)?;
    tape.add(u, ut)
}

pub const FD_STEP: f64 = 1e-5;

type Case = (Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

/// One seeded case for the named operation: inputs plus a scalar loss.
fn gradient_case(op: &str, rng: &mut ChaCha8Rng) -> Case {
    let r = rng.random_range(2..=5);
    let c = rng.random_range(2..=5);
    let k = rng.random_range(2..=5);
    let w_rc = gaussian_tensor(rng, r, c, 1.0);
    let unary = |f: fn(&mut Tape, Var) -> Result<Var>, w: Tensor| -> Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>> {
        Box::new(move |tape, v| {
            let o = f(tape, v[0])?;
            weighted_sum(tape, o, &w)
        })
    };
    match op {
        "matmul" => {
            let w = gaussian_tensor(rng, r, c, 1.0);
            (
                vec![gaussian_tensor(rng, r, k, 1.0), gaussian_tensor(rng, k, c, 1.0)],
                Box::new(move |tape, v| {
                    let o = tape.matmul(v[0], v[1])?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "matmul_nt" => {
            let w = gaussian_tensor(rng, r, c, 1.0);
            (
                vec![gaussian_tensor(rng, r, k, 1.0), gaussian_tensor(rng, c, k, 1.0)],
                Box::new(move |tape, v| {
                    let o = tape.matmul_nt(v[0], v[1])?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "add" | "sub" | "mul" => {
            let op = op.to_string();
            (
                vec![gaussian_tensor(rng, r, c, 1.0), gaussian_tensor(rng, r, c, 1.0)],
                Box::new(move |tape, v| {
                    let o = match op.as_str() {
                        "add" => tape.add(v[0], v[1])?,
                        "sub" => tape.sub(v[0], v[1])?,
                        _ => tape.mul(v[0], v[1])?,
                    };
                    weighted_sum(tape, o, &w_rc)
                }),
            )
        }
        "scale" => {
            let s: f64 = rng.random_range(-2.0..2.0);
            (
                vec![gaussian_tensor(rng, r, c, 1.0)],
                Box::new(move |tape, v| {
                    let o = tape.scale(v[0], s);
                    weighted_sum(tape, o, &w_rc)
                }),
            )
        }
        "relu" => (vec![away_from_zero(rng, r, c)], unary(|t, x| Ok(t.relu(x)), w_rc)),
        "sigmoid" => (
            vec![gaussian_tensor(rng, r, c, 2.0)],
            unary(|t, x| Ok(t.sigmoid(x)), w_rc),
        ),
        "transpose" => {
            let w = gaussian_tensor(rng, c, r, 1.0);
            (vec![gaussian_tensor(rng, r, c, 1.0)], unary(|t, x| t.transpose(x), w))
        }
        "mean" | "sum" => {
            let mean = op == "mean";
            (
                vec![gaussian_tensor(rng, r, c, 1.0)],
                Box::new(move |tape, v| {
                    let sq = tape.mul(v[0], v[0])?;
                    Ok(if mean { tape.mean(sq) } else { tape.sum(sq) })
                }),
            )
        }
        "bias_add" => (
            vec![gaussian_tensor(rng, r, c, 1.0), gaussian_tensor(rng, 1, c, 1.0)],
            Box::new(move |tape, v| {
                let o = tape.bias_add(v[0], v[1])?;
                weighted_sum(tape, o, &w_rc)
            }),
        ),
        "mean_rows" => {
            let w = gaussian_tensor(rng, 1, c, 1.0);
            (vec![gaussian_tensor(rng, r, c, 1.0)], unary(|t, x| t.mean_rows(x), w))
        }
        "row_select" => {
            let row = rng.random_range(0..r);
            let w = gaussian_tensor(rng, 1, c, 1.0);
            (
                vec![gaussian_tensor(rng, r, c, 1.0)],
                Box::new(move |tape, v| {
                    let o = tape.row_select(v[0], row)?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "masked_softmax" => {
            let mask: Vec<bool> = (0..r * r).map(|_| rng.random::<f64>() < 0.6).collect();
            let w = gaussian_tensor(rng, r, r, 1.0);
            (
                vec![gaussian_tensor(rng, r, r, 2.0)],
                Box::new(move |tape, v| {
                    let o = tape.masked_softmax(v[0], &mask)?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "gcn_normalize" => {
            let n = r + 1;
            let a = random_sc(rng, n).to_tensor();
            let w = gaussian_tensor(rng, n, n, 1.0);
            (
                vec![a],
                Box::new(move |tape, v| {
                    let s = symmetric_from(tape, v[0])?;
                    let o = tape.gcn_normalize(s)?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "pearson" => {
            let n = r + 2;
            (
                vec![gaussian_tensor(rng, n, n, 1.0), gaussian_tensor(rng, n, n, 1.0)],
                Box::new(move |tape, v| tape.pearson(v[0], v[1])),
            )
        }
        "gcn_layer" => {
            let n = r + 1;
            let a = random_sc(rng, n).to_tensor();
            let w = gaussian_tensor(rng, n, c, 1.0);
            (
                vec![
                    gaussian_tensor(rng, n, k, 1.0),
                    gaussian_tensor(rng, k, c, 1.0),
                    gaussian_tensor(rng, 1, c, 1.0),
                ],
                Box::new(move |tape, v| {
                    let av = tape.constant(a.clone());
                    let a_hat = tape.gcn_normalize(av)?;
                    let o = netarch::gcn_layer(tape, v[0], a_hat, v[1], v[2])?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "generator_block" => {
            let n = r + 2;
            let m = c + 1;
            let a = random_sc(rng, n).to_tensor();
            let w = gaussian_tensor(rng, n, m, 1.0);
            let mut inputs = vec![gaussian_tensor(rng, n, m, 1.0)];
            for _ in 0..3 {
                inputs.push(gaussian_tensor(rng, m, m, 0.7));
            }
            inputs.push(gaussian_tensor(rng, 1, m, 0.5));
            inputs.push(gaussian_tensor(rng, 1, m, 0.5));
            (
                inputs,
                Box::new(move |tape, v| {
                    let av = tape.constant(a.clone());
                    let a_hat = tape.gcn_normalize(av)?;
                    let o = netarch::generator_block(tape, v[0], a_hat, v[1], v[2], v[3], v[4], v[5])?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "dmsa" => {
            let n = r + 2;
            let m = 2 * k;
            let hd = k;
            let a = random_sc(rng, n);
            let part = netarch::partition_neighbors(&a);
            let heads = 2;
            let w = gaussian_tensor(rng, n, m, 1.0);
            let mut inputs = vec![gaussian_tensor(rng, n, m, 1.0)];
            for _ in 0..heads {
                for _ in 0..4 {
                    inputs.push(gaussian_tensor(rng, m, hd, 0.5));
                }
                inputs.push(gaussian_tensor(rng, hd, m, 0.5));
            }
            (
                inputs,
                Box::new(move |tape, v| {
                    let hv: Vec<HeadVars> = (0..heads)
                        .map(|h| {
                            let b = 1 + 5 * h;
                            HeadVars {
                                q: v[b],
                                k1: v[b + 1],
                                k2: v[b + 2],
                                v: v[b + 3],
                                o: v[b + 4],
                            }
                        })
                        .collect();
                    let o = netarch::dmsa_forward(tape, v[0], &part, &hv)?;
                    weighted_sum(tape, o, &w)
                }),
            )
        }
        "pcd" => {
            let n = r + 1;
            let w = gaussian_tensor(rng, n, n, 1.0);
            (vec![gaussian_tensor(rng, n, c, 0.7)], unary(netarch::pcd, w))
        }
        "disc_loss" | "gen_adv_loss" => {
            let b = r;
            let scale: f64 = rng.random_range(0.05..1.0);
            let disc = op == "disc_loss";
            let inputs: Vec<Tensor> = (0..2 * b).map(|_| gaussian_tensor(rng, 1, 1, 1.0)).collect();
            (
                inputs,
                Box::new(move |tape, v| {
                    if disc {
                        losses::disc_loss(tape, &v[..b], &v[b..], scale)
                    } else {
                        losses::gen_adv_loss(tape, &v[b..], scale)
                    }
                }),
            )
        }
        "recon_loss" => {
            let n = r + 2;
            let target = random_sc(rng, n).to_tensor();
            (
                vec![random_sc(rng, n).to_tensor()],
                Box::new(move |tape, v| {
                    let p = symmetric_from(tape, v[0])?;
                    let t = tape.constant(target.clone());
                    losses::recon_loss(tape, p, t, 0.1)
                }),
            )
        }
        "scc_loss" => {
            let n = r + 3;
            let target = random_sc(rng, n);
            (
                vec![random_sc(rng, n).to_tensor()],
                Box::new(move |tape, v| {
                    let p = symmetric_from(tape, v[0])?;
                    Ok(losses::scc_loss(tape, p, &target, 0.1, 0.2)?.0)
                }),
            )
        }
        "generator" => {
            let n = rng.random_range(4..=6);
            let s = 2 * n;
            let mut g = Generator::new(small_arch(n, s), rng).unwrap();
            // Larger weights keep every path active enough to be checked.
            for i in 0..g.params.len() {
                let shape = g.params.values()[i].shape().to_vec();
                *g.params.value_mut(i) = gaussian_tensor(rng, shape[0], shape[1], 0.4);
            }
            let x = g.input(&random_panel(rng, n, s)).unwrap();
            let a = random_sc(rng, n);
            let a0 = random_sc(rng, n).to_tensor();
            let t = 10 * rng.random_range(0..10);
            let inputs = g.params.values().to_vec();
            (
                inputs,
                Box::new(move |tape, v| {
                    let bound = BoundParams::from_vars(v.to_vec());
                    let xv = tape.constant(x.clone());
                    let pred = g.forward(tape, &bound, &a, xv, t)?;
                    let target = tape.constant(a0.clone());
                    let diff = tape.sub(pred, target)?;
                    let sq = tape.mul(diff, diff)?;
                    Ok(tape.mean(sq))
                }),
            )
        }
        "discriminator" => {
            let n = rng.random_range(4..=6);
            let d = Discriminator::new(small_arch(n, 2 * n), rng).unwrap();
            let mut inputs = d.params.values().to_vec();
            inputs.push(random_sc(rng, n).to_tensor());
            let t = 10 * rng.random_range(0..10);
            let target: f64 = rng.random_range(-1.0..1.0);
            (
                inputs,
                Box::new(move |tape, v| {
                    let last = v.len() - 1;
                    let bound = BoundParams::from_vars(v[..last].to_vec());
                    let a = symmetric_from(tape, v[last])?;
                    let s = d.forward(tape, &bound, a, t)?;
                    let c = tape.constant(Tensor::matrix(1, 1, vec![target]));
                    let diff = tape.sub(s, c)?;
                    let sq = tape.mul(diff, diff)?;
                    Ok(tape.sum(sq))
                }),
            )
        }
        other => panic!("no gradient case for {other}"),
    }
}

pub const GRADIENT_OPS: [&str; 27] = [
    "matmul",
    "matmul_nt",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "sigmoid",
    "transpose",
    "mean",
    "sum",
    "bias_add",
    "mean_rows",
    "row_select",
    "masked_softmax",
    "gcn_normalize",
    "pearson",
    "gcn_layer",
    "generator_block",
    "dmsa",
    "pcd",
    "disc_loss",
    "gen_adv_loss",
    "recon_loss",
    "scc_loss",
    "generator",
    "discriminator",
];

/// Worst relative error over `cases` seeded cases of `op`, and how many
/// draws were rejected. A draw is rejected when central differences at h
/// and h/2 disagree, which means the stencil straddles a ReLU kink or a
/// partition change and the numeric side is not a derivative there.
pub fn gradient_worst(op: &str, cases: usize, seed: u64) -> Result<(f64, usize)> {
    let (mut worst, mut rejected) = (0.0f64, 0usize);
    for case in 0..cases {
        let mut attempt = 0u64;
        loop {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(case as u64 + 1000 * attempt);
            let (inputs, f) = gradient_case(op, &mut rng);
            let (analytic, numeric) = gradient_pair(&inputs, FD_STEP, &f)?;
            let (_, half) = gradient_pair(&inputs, FD_STEP / 2.0, &f)?;
            if max_rel_error(&numeric, &half) > 1e-5 && attempt < 10 {
                rejected += 1;
                attempt += 1;
                continue;
            }
            worst = worst.max(max_rel_error(&analytic, &numeric));
            break;
        }
    }
    Ok((worst, rejected))
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
