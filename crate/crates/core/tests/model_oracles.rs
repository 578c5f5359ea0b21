//! Model checks against independent oracles: a naive forward pass, central
//! finite differences and Monte-Carlo diagonal estimates.

use esgd_core::estimators::{estimate_diagonal, CurvatureKind, ProbeDistribution, ProbeSampler};
use esgd_core::linalg::{dot, DenseMatrix};
use esgd_core::model::{self, Batch, LossKind, MlpObjective, MlpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOSSES: [LossKind; 3] = [
    LossKind::SoftmaxCrossEntropy,
    LossKind::SigmoidBinaryCrossEntropy,
    LossKind::LinearMse,
];

fn random_batch(spec: &MlpSpec, m: usize, rng: &mut ChaCha8Rng) -> Batch {
    let d_in = spec.input_dim();
    let d_out = spec.output_dim();
    let x: Vec<f64> = (0..m * d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut t = vec![0.0; m * d_out];
    for n in 0..m {
        match spec.loss {
            LossKind::SoftmaxCrossEntropy => t[n * d_out + rng.random_range(0..d_out)] = 1.0,
            LossKind::SigmoidBinaryCrossEntropy => {
                for k in 0..d_out {
                    t[n * d_out + k] = rng.random_range(0.0..1.0);
                }
            }
            LossKind::LinearMse => {
                for k in 0..d_out {
                    t[n * d_out + k] = rng.random_range(-1.0..1.0);
                }
            }
        }
    }
    Batch::new(
        DenseMatrix::new(m, d_in, x).unwrap(),
        DenseMatrix::new(m, d_out, t).unwrap(),
    )
    .unwrap()
}

fn random_params(spec: &MlpSpec, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..spec.num_params()).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// Straightforward re-implementation of the loss with nested vectors.
fn naive_loss(spec: &MlpSpec, params: &[f64], batch: &Batch) -> f64 {
    let sizes = &spec.layer_sizes;
    let mut total = 0.0;
    for n in 0..batch.len() {
        let mut a: Vec<f64> = batch.inputs.row(n).to_vec();
        let mut offset = 0;
        for l in 0..sizes.len() - 1 {
            let (fi, fo) = (sizes[l], sizes[l + 1]);
            let w: Vec<Vec<f64>> = (0..fo)
                .map(|o| params[offset + o * fi..offset + (o + 1) * fi].to_vec())
                .collect();
            let b = &params[offset + fi * fo..offset + fi * fo + fo];
            offset += fi * fo + fo;
            let z: Vec<f64> = (0..fo).map(|o| dot(&w[o], &a) + b[o]).collect();
            a = if l + 2 < sizes.len() {
                z.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect()
            } else {
                z
            };
        }
        let t = batch.targets.row(n);
        total += match spec.loss {
            LossKind::SoftmaxCrossEntropy => {
                let s: f64 = a.iter().map(|x| x.exp()).sum();
                -(0..a.len()).map(|k| t[k] * (a[k].exp() / s).ln()).sum::<f64>()
            }
            LossKind::SigmoidBinaryCrossEntropy => (0..a.len())
                .map(|k| {
                    let p = 1.0 / (1.0 + (-a[k]).exp());
                    -t[k] * p.ln() - (1.0 - t[k]) * (1.0 - p).ln()
                })
                .sum(),
            LossKind::LinearMse => (0..a.len()).map(|k| (a[k] - t[k]).powi(2)).sum(),
        };
    }
    total / batch.len() as f64
}

fn perturbed(params: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    params.iter().zip(v).map(|(p, d)| p + h * d).collect()
}

#[test]
fn loss_matches_naive_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for loss in LOSSES {
        for sizes in [vec![4, 3], vec![5, 10, 3], vec![3, 6, 4, 2]] {
            let spec = MlpSpec::new(sizes, loss).unwrap();
            let batch = random_batch(&spec, 7, &mut rng);
            let params = random_params(&spec, 1.0, &mut rng);
            let a = model::loss(&spec, &params, &batch).unwrap();
            let b = naive_loss(&spec, &params, &batch);
            assert!((a - b).abs() < 1e-12, "{loss:?}: {a} vs {b}");
            assert!(a >= 0.0);
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    for loss in LOSSES {
        let spec = MlpSpec::new(vec![5, 10, 3], loss).unwrap();
        let batch = random_batch(&spec, 6, &mut rng);
        let params = random_params(&spec, 1.0, &mut rng);
        let g = model::gradient(&spec, &params, &batch).unwrap();
        let mut e = vec![0.0; params.len()];
        for i in 0..params.len() {
            e[i] = 1.0;
            let fp = model::loss(&spec, &perturbed(&params, &e, h), &batch).unwrap();
            let fm = model::loss(&spec, &perturbed(&params, &e, -h), &batch).unwrap();
            e[i] = 0.0;
            let fd = (fp - fm) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-4);
            assert!((g[i] - fd).abs() / scale < 1e-6, "{loss:?} coord {i}: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn gradient_is_invariant_to_batch_duplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let spec = MlpSpec::new(vec![4, 5, 3], LossKind::SoftmaxCrossEntropy).unwrap();
    let batch = random_batch(&spec, 5, &mut rng);
    let params = random_params(&spec, 1.0, &mut rng);
    let g1 = model::gradient(&spec, &params, &batch).unwrap();
    let g2 = model::gradient(&spec, &params, &batch.duplicated()).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn hvp_zero_direction_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-5;
    for loss in LOSSES {
        let spec = MlpSpec::new(vec![5, 10, 3], loss).unwrap();
        let batch = random_batch(&spec, 8, &mut rng);
        let params = random_params(&spec, 1.0, &mut rng);
        let zero = model::hvp(&spec, &params, &batch, &vec![0.0; params.len()]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let v: Vec<f64> = (0..params.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = model::hvp(&spec, &params, &batch, &v).unwrap();
        let gp = model::gradient(&spec, &perturbed(&params, &v, h), &batch).unwrap();
        let gm = model::gradient(&spec, &perturbed(&params, &v, -h), &batch).unwrap();
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let err: f64 = hv.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 1e-5, "{loss:?}: rel err {}", err / norm);
    }
}

#[test]
fn hvp_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let spec = MlpSpec::new(vec![4, 6, 3], LossKind::SigmoidBinaryCrossEntropy).unwrap();
    let batch = random_batch(&spec, 5, &mut rng);
    let params = random_params(&spec, 1.0, &mut rng);
    let n = params.len();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (alpha, beta) = (1.7, -0.4);
    let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
    let hu = model::hvp(&spec, &params, &batch, &u).unwrap();
    let hv = model::hvp(&spec, &params, &batch, &v).unwrap();
    let hw = model::hvp(&spec, &params, &batch, &w).unwrap();
    for i in 0..n {
        let combo = alpha * hu[i] + beta * hv[i];
        assert!((hw[i] - combo).abs() <= 1e-9 * combo.abs().max(1.0));
    }
}

#[test]
fn assembled_hessian_is_symmetric_and_consistent_with_rayleigh_numerator() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for loss in LOSSES {
        let spec = MlpSpec::new(vec![3, 5, 3], loss).unwrap();
        let batch = random_batch(&spec, 6, &mut rng);
        let params = random_params(&spec, 1.0, &mut rng);
        let n = params.len();
        let mut raw = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = model::hvp(&spec, &params, &batch, &e).unwrap();
            e[i] = 0.0;
            for (j, x) in col.into_iter().enumerate() {
                raw[(j, i)] = x;
            }
        }
        let asym = raw.sub(&raw.transpose()).unwrap().max_abs();
        assert!(asym < 1e-8, "{loss:?} asym {asym}");

        let h = model::exact_hessian(&spec, &params, &batch).unwrap();
        assert!(h.sub(&h.transpose()).unwrap().max_abs() <= 1e-8 * h.frobenius_norm());

        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = model::hvp(&spec, &params, &batch, &v).unwrap();
        let via_matrix = dot(&v, &h.matvec(&v).unwrap());
        assert!((dot(&v, &hv) - via_matrix).abs() < 1e-8 * via_matrix.abs().max(1.0));
    }
}

#[test]
fn linear_mse_hessian_is_constant_in_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let spec = MlpSpec::new(vec![4, 3], LossKind::LinearMse).unwrap();
    let batch = random_batch(&spec, 9, &mut rng);
    let p1 = random_params(&spec, 1.0, &mut rng);
    let p2 = random_params(&spec, 5.0, &mut rng);
    let h1 = model::exact_hessian(&spec, &p1, &batch).unwrap();
    let h2 = model::exact_hessian(&spec, &p2, &batch).unwrap();
    assert!(h1.sub(&h2).unwrap().max_abs() < 1e-10);
}

#[test]
fn hessian_diagonal_matches_rademacher_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let spec = MlpSpec::new(vec![3, 4, 2], LossKind::SoftmaxCrossEntropy).unwrap();
    let batch = random_batch(&spec, 10, &mut rng);
    let params = random_params(&spec, 1.5, &mut rng);
    let h = model::exact_hessian(&spec, &params, &batch).unwrap();
    let n = params.len();
    let samples = 10_000;

    // Per-sample values from the exact matrix give the standard errors.
    let mut sampler = ProbeSampler::new(5, ProbeDistribution::Rademacher);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..samples {
        let p = sampler.next_probe(n);
        let hv = model::hvp(&spec, &params, &batch, &p.v).unwrap();
        for i in 0..n {
            let x = p.v[i] * hv[i];
            sum[i] += x;
            sum_sq[i] += x * x;
        }
    }
    let s = samples as f64;
    for i in 0..n {
        let mean = sum[i] / s;
        let var = (sum_sq[i] / s - mean * mean).max(0.0) * s / (s - 1.0);
        let se = (var / s).sqrt();
        assert!((mean - h[(i, i)]).abs() <= 3.0 * se + 1e-12, "coord {i}: {mean} vs {}", h[(i, i)]);
    }

    // Same probes through the estimator API give the same mean.
    let objective = MlpObjective::new(&spec, &batch);
    let oracle = objective.at(&params);
    let mut sampler = ProbeSampler::new(5, ProbeDistribution::Rademacher);
    let acc = estimate_diagonal(CurvatureKind::Jacobi, &oracle, &mut sampler, samples).unwrap();
    for (a, b) in acc.estimate().unwrap().iter().zip(&sum) {
        assert!((a - b / s).abs() < 1e-12);
    }
}

#[test]
fn gauss_newton_equals_hessian_diagonal_for_convex_linear_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for loss in LOSSES {
        let spec = MlpSpec::new(vec![4, 3], loss).unwrap();
        let batch = random_batch(&spec, 12, &mut rng);
        let params = random_params(&spec, 1.0, &mut rng);
        let gn = model::gauss_newton_diag(&spec, &params, &batch).unwrap();
        let h = model::exact_hessian(&spec, &params, &batch).unwrap();
        for (g, d) in gn.iter().zip(h.diag()) {
            assert!((g - d.abs()).abs() < 1e-8, "{loss:?}: {g} vs {d}");
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let spec = MlpSpec::new(vec![5, 7, 4], LossKind::SigmoidBinaryCrossEntropy).unwrap();
    let batch = random_batch(&spec, 11, &mut rng);
    let params = random_params(&spec, 1.0, &mut rng);
    let v = random_params(&spec, 1.0, &mut rng);
    assert_eq!(
        model::loss_and_gradient(&spec, &params, &batch).unwrap(),
        model::loss_and_gradient(&spec, &params, &batch).unwrap()
    );
    assert_eq!(
        model::hvp(&spec, &params, &batch, &v).unwrap(),
        model::hvp(&spec, &params, &batch, &v).unwrap()
    );
}
