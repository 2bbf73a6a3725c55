use nalgebra::DMatrix;
use prior_forge::experiments::{reference_mixture, ten_bins};
use prior_forge::fisher::{hyper_fisher, FisherSource};
use prior_forge::likelihood::{alpha_hat_from, alpha_mle, dirichlet_logpdf, fitted_probabilities, joint_loglik, sample_judgements};
use prior_forge::model::bin_probabilities;
use prior_forge::models::{GaussianMixtureModel, ProbitGlmModel};
use prior_forge::partition::validate_partition;
use prior_forge::*;
use proptest::prelude::*;

fn edges_from(mut inner: Vec<f64>) -> Vec<f64> {
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut e = vec![f64::NEG_INFINITY];
    e.extend(inner);
    e.push(f64::INFINITY);
    e
}

fn mixture_params() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (prop::collection::vec(-4.0..4.0f64, 2), prop::collection::vec(0.05..4.0f64, 2), 0.05..0.95f64)
}

fn mixture(means: &[f64], vars: &[f64], w: f64) -> (GaussianMixtureModel, HyperParams) {
    let m = GaussianMixtureModel::with_fixed_noise(2, 1.0);
    let p = m.params(means, 1.0, vars, &[w, 1.0 - w]).unwrap();
    (m, p)
}

fn one_judgement(alpha: f64, seed: u64) -> (GaussianMixtureModel, HyperParams, JudgementSet) {
    let (m, truth) = reference_mixture();
    let js = sample_judgements(alpha, &truth, &m, &[(CovariateSet::empty(), ten_bins())], seed, &MonteCarlo::default()).unwrap();
    (m, truth, js)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_bins_sum_to_one((means, vars, w) in mixture_params(), inner in prop::collection::vec(-8.0..8.0f64, 1..20)) {
        let (m, p) = mixture(&means, &vars, w);
        let part = Partition::from_edges(&edges_from(inner));
        let probs = bin_probabilities(&m, &p, &CovariateSet::empty(), &part, true, &MonteCarlo::default()).unwrap();
        prop_assert!((probs.total() - 1.0).abs() < 1e-10);
        let jac = probs.jacobian.unwrap();
        for c in 0..jac.ncols() {
            prop_assert!(jac.column(c).sum().abs() < 1e-8, "column {} sums to {}", c, jac.column(c).sum());
        }
    }

    #[test]
    fn merging_adjacent_bins_adds_probabilities(
        (means, vars, w) in mixture_params(),
        inner in prop::collection::vec(-8.0..8.0f64, 2..15),
        pick in any::<prop::sample::Index>(),
    ) {
        let (m, p) = mixture(&means, &vars, w);
        let edges = edges_from(inner);
        prop_assume!(edges.len() >= 4);
        let drop = 1 + pick.index(edges.len() - 2);
        let mut merged = edges.clone();
        merged.remove(drop);
        let x = CovariateSet::empty();
        let fine = bin_probabilities(&m, &p, &x, &Partition::from_edges(&edges), false, &MonteCarlo::default()).unwrap();
        let coarse = bin_probabilities(&m, &p, &x, &Partition::from_edges(&merged), false, &MonteCarlo::default()).unwrap();
        let joined = fine.values[drop - 1] + fine.values[drop];
        prop_assert!((coarse.values[drop - 1] - joined).abs() < 1e-12);
    }

    #[test]
    fn sorted_edges_validate_and_gaps_do_not(inner in prop::collection::vec(-10.0..10.0f64, 1..12), shuffle in any::<u64>()) {
        let edges = edges_from(inner);
        let part = Partition::from_edges(&edges);
        let space = SampleSpace::Real { dim: 1 };
        prop_assert!(validate_partition(&part, &space).is_ok());

        let n = part.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.rotate_left((shuffle % n as u64) as usize);
        let checked = validate_partition(&part.permuted(&order), &space).unwrap();
        prop_assert_eq!(&checked.partition, &part);

        if n >= 3 {
            let keep: Vec<usize> = (0..n).filter(|&i| i != 1).collect();
            let gapped = part.permuted(&keep);
            let is_gap = matches!(validate_partition(&gapped, &space), Err(Error::CoverageGap { .. }));
            prop_assert!(is_gap);
        }
    }

    #[test]
    fn joint_loglik_ignores_bin_and_judgement_order(seed in any::<u64>(), shift in 1usize..10, alpha in 5.0..500.0f64) {
        let (m, truth) = reference_mixture();
        let design = vec![(CovariateSet::new(vec![], "a"), ten_bins()), (CovariateSet::new(vec![], "b"), ten_bins())];
        let js = sample_judgements(alpha, &truth, &m, &design, seed, &MonteCarlo::default()).unwrap();
        let base = joint_loglik(&js, alpha, &truth, &m, &MonteCarlo::default()).unwrap();

        let mut permuted = js.clone();
        for j in &mut permuted.judgements {
            let mut order: Vec<usize> = (0..j.p.len()).collect();
            order.rotate_left(shift);
            j.partition = j.partition.permuted(&order);
            j.p = order.iter().map(|&i| j.p[i]).collect();
        }
        permuted.judgements.reverse();
        let other = joint_loglik(&permuted, alpha, &truth, &m, &MonteCarlo::default()).unwrap();
        prop_assert!((base - other).abs() <= 1e-9 * base.abs().max(1.0), "{} vs {}", base, other);
    }

    #[test]
    fn probit_success_rises_with_mean_along_positive_x(
        mean in prop::collection::vec(-2.0..2.0f64, 3),
        vars in prop::collection::vec(0.1..3.0f64, 3),
        x in prop::collection::vec(-2.0..2.0f64, 3),
        d in 0usize..3,
        bump in 0.01..2.0f64,
    ) {
        prop_assume!(x[d] > 0.05);
        let m = ProbitGlmModel::new(3);
        let corr = DMatrix::identity(3, 3);
        let lo = m.unpack(&m.params(&mean, &vars, &corr).unwrap()).unwrap();
        let mut raised = mean.clone();
        raised[d] += bump;
        let hi = m.unpack(&m.params(&raised, &vars, &corr).unwrap()).unwrap();
        let p0 = m.success_probability(&lo, &x, false).unwrap().p;
        let p1 = m.success_probability(&hi, &x, false).unwrap().p;
        prop_assert!(p1 > p0 || (p0 > 1.0 - 1e-15), "{} then {}", p0, p1);
    }

    #[test]
    fn hyper_fisher_is_symmetric_psd((means, vars, w) in mixture_params(), alpha in 1.0..1e4f64, bins in 2usize..4) {
        let (m, p) = mixture(&means, &vars, w);
        let design: Vec<(CovariateSet, Partition)> =
            (0..bins).map(|j| (CovariateSet::new(vec![], format!("c{j}")), Partition::from_edges(&edges_from(vec![-2.0 + j as f64, 0.5, 3.0])))).collect();
        let fitted: Vec<BinProbabilities> = design
            .iter()
            .map(|(x, part)| bin_probabilities(&m, &p, x, part, true, &MonteCarlo::default()).unwrap())
            .collect();
        let h = hyper_fisher(alpha, &fitted, FisherSource::ClosedForm).unwrap();
        let asym = (&h.matrix - h.matrix.transpose()).abs().max();
        prop_assert!(asym <= 1e-9 * h.matrix.abs().max().max(1.0));
        prop_assert!(h.min_eigenvalue() >= -1e-8 * h.matrix.abs().max().max(1.0), "min eigenvalue {}", h.min_eigenvalue());
    }
}

#[test]
fn probit_success_tends_to_a_half_as_variance_grows() {
    let m = ProbitGlmModel::new(2);
    let corr = DMatrix::identity(2, 2);
    let x = [1.0, -0.5];
    let mut last = f64::INFINITY;
    for v in [1.0, 1e2, 1e4, 1e6, 1e8] {
        let p = m.unpack(&m.params(&[1.5, 0.2], &[v, v], &corr).unwrap()).unwrap();
        let gap = (m.success_probability(&p, &x, false).unwrap().p - 0.5).abs();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-3);
}

#[test]
fn single_judgement_matches_the_dirichlet_density() {
    let (m, truth, js) = one_judgement(80.0, 11);
    let mc = MonteCarlo::default();
    let fitted = fitted_probabilities(&m, &truth, &js, &mc, false).unwrap();
    let direct = dirichlet_logpdf(&js.judgements[0].p, 80.0, &fitted[0].values).unwrap();
    let joint = joint_loglik(&js, 80.0, &truth, &m, &mc).unwrap();
    assert!((direct - joint).abs() < 1e-12);

    let twice = JudgementSet::new(vec![js.judgements[0].clone(), js.judgements[0].clone()]);
    let doubled = joint_loglik(&twice, 80.0, &truth, &m, &mc).unwrap();
    assert!((doubled - 2.0 * joint).abs() < 1e-9 * joint.abs());
}

#[test]
fn alpha_hat_and_alpha_mle_rank_judgement_sets_alike() {
    let (m, truth) = reference_mixture();
    let mc = MonteCarlo::default();
    let mut pairs = Vec::new();
    for (i, alpha) in (0..20).map(|i| (i, 3.0 * 1.6f64.powi(i))) {
        let (_, _, js) = one_judgement(alpha, 100 + i as u64);
        let fitted = fitted_probabilities(&m, &truth, &js, &mc, false).unwrap();
        pairs.push((alpha_hat_from(&js, &fitted).unwrap().alpha_hat, alpha_mle(&js, &fitted).unwrap()));
    }
    for a in &pairs {
        for b in &pairs {
            // The two estimators agree on ordering except between sets that
            // are within a few percent of each other.
            if a.0 > 1.1 * b.0 {
                assert!(a.1 > b.1, "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn simulated_judgements_average_to_the_model_probabilities() {
    let (m, truth) = reference_mixture();
    let alpha = 20.0;
    let part = ten_bins();
    let x = CovariateSet::empty();
    let probs = bin_probabilities(&m, &truth, &x, &part, false, &MonteCarlo::default()).unwrap().values;
    let n = 10_000;
    let mut sum = vec![0.0; probs.len()];
    for seed in 0..n {
        let js = sample_judgements(alpha, &truth, &m, &[(x.clone(), part.clone())], seed, &MonteCarlo::default()).unwrap();
        for (s, v) in sum.iter_mut().zip(&js.judgements[0].p) {
            *s += v;
        }
    }
    for (k, (s, p)) in sum.iter().zip(&probs).enumerate() {
        let mean = s / n as f64;
        let se = (p * (1.0 - p) / (alpha + 1.0) / n as f64).sqrt();
        assert!((mean - p).abs() <= 3.0 * se + 1e-9, "bin {k}: mean {mean} vs {p} (se {se})");
    }
}
