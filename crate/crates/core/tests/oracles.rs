//! Worked values checked against independent oracles: hand formulas,
//! closed-form lognormal results, explicit Hermite sums and brute-force
//! sampling.

use std::f64::consts::{E, LN_2, PI};

use mgvol::anamorphosis::{Anamorphosis, TailBounds};
use mgvol::blocksupport::{self, BlockLaw};
use mgvol::conditional::{self, PointLaw, VolumeSpec};
use mgvol::covariance::{CovarianceModel, Point};
use mgvol::hermite::{self, HermiteSeries};
use mgvol::kriging::{krige_field, simple_krige, Grid, SampleSet};
use mgvol::simulate;
use mgvol::Error;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

fn nested_model() -> CovarianceModel {
    "0.1 nugget + 0.9 sph(100)".parse().unwrap()
}

fn logn() -> Anamorphosis {
    Anamorphosis::lognormal(0.0, 1.0).unwrap()
}

fn expo() -> Anamorphosis {
    Anamorphosis::exponential(1.0 / 0.8).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y, 0.0)
}

/// Explicit Hermite sum Σ_q (−1)^{n−q} √(n!) 2^{−q} / ((n−2q)! q!) y^{n−2q}.
fn hermite_explicit(n: usize, y: f64) -> f64 {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let mut s = 0.0;
    for q in 0..=n / 2 {
        let sign = if (n - q).is_multiple_of(2) { 1.0 } else { -1.0 };
        s += sign * fact(n).sqrt() * 0.5f64.powi(q as i32) / (fact(n - 2 * q) * fact(q))
            * y.powi((n - 2 * q) as i32);
    }
    s
}

/// Standard normal pair by Box–Muller.
fn normal_pair(rng: &mut StdRng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (2.0 * PI * u2).cos(), r * (2.0 * PI * u2).sin())
}

#[test]
fn covariance_values() {
    let m = nested_model();
    assert_eq!(m.cov(&p(0.0, 0.0), &p(0.0, 0.0)), 1.0);
    assert_eq!(m.cov(&p(0.0, 0.0), &p(150.0, 0.0)), 0.0);
    let c50 = 0.9 * (1.0 - 1.5 * 0.5 + 0.5 * 0.125);
    assert!((m.cov(&p(0.0, 0.0), &p(30.0, 40.0)) - c50).abs() < 1e-15);
    assert!((c50 - 0.28125).abs() < 1e-15);

    let c = m.cov_matrix(&[p(0.0, 0.0), p(50.0, 0.0)]).unwrap();
    assert_eq!(c.nrows(), 2);
    assert!((c[(0, 1)] - 0.28125).abs() < 1e-15 && c[(0, 0)] == 1.0 && c[(1, 1)] == 1.0);
    assert_eq!(m.cov_matrix(&[p(1.0, 1.0)]).unwrap()[(0, 0)], 1.0);

    let nug: CovarianceModel = "1.0 nugget".parse().unwrap();
    let c = nug.cov_matrix(&[p(0.0, 0.0), p(1e-6, 0.0)]).unwrap();
    assert_eq!(c, DMatrix::identity(2, 2));
    assert!(matches!(
        m.cov_matrix(&[p(0.0, 0.0), p(1e-12, 0.0)]),
        Err(Error::DuplicatePoints { .. })
    ));
}

#[test]
fn anamorphosis_values() {
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let emp =
        Anamorphosis::fit_empirical(&[3.0, 1.0, 4.0, 2.0], None, TailBounds::default()).unwrap();
    for (k, z) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
        let expect = n01.inverse_cdf((k as f64 + 0.5) / 4.0);
        assert!((emp.forward(*z).unwrap() - expect).abs() < 1e-12);
    }
    assert!(matches!(
        Anamorphosis::fit_empirical(&[5.0, 5.0], None, TailBounds::default()),
        Err(Error::DegenerateData(_))
    ));
    let odd = Anamorphosis::fit_empirical(&[1.0, 2.0, 3.0, 4.0, 5.0], None, TailBounds::default())
        .unwrap();
    assert!(odd.forward(3.0).unwrap().abs() < 1e-15);

    let l = logn();
    assert_eq!(l.backward(0.0), 1.0);
    assert!((l.backward(1.0) - E).abs() < 1e-15);
    assert_eq!(l.forward(1.0).unwrap(), 0.0);
    assert!(matches!(l.forward(-1.0), Err(Error::OutOfSupport(_))));
    assert!((l.derivative(0.0) - 1.0).abs() < 1e-15);

    let x = expo();
    assert!((x.backward(0.0) - 0.8 * LN_2).abs() < 1e-15);
    assert!(x.forward(0.8 * LN_2).unwrap().abs() < 1e-14);
    let g0 = 1.0 / (2.0 * PI).sqrt();
    assert!((x.derivative(0.0) - 1.6 * g0).abs() < 1e-14);
    assert!((x.derivative(0.0) - 0.638_308).abs() < 1e-6);

    let c = l.hermite_coefficients(40).unwrap();
    assert!(rel(c[0], 0.5f64.exp()) < 1e-12);
}

#[test]
fn hermite_values() {
    assert!((hermite::eval(2, 0.0) + 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(hermite::eval(1, 1.0), -1.0);
    assert!((hermite::eval(5, 0.7) - hermite_explicit(5, 0.7)).abs() < 1e-13);
    let b = hermite::batch(10, -1.3);
    for n in [3, 10] {
        assert!((b[n] - hermite_explicit(n, -1.3)).abs() < 1e-12, "{n}");
    }
    assert_eq!(hermite::batch(2, 0.4)[2], hermite::eval(2, 0.4));

    let id = hermite::shift_stretch(4, 0.0, 1.0).unwrap();
    assert_eq!(id, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    let k = hermite::shift_stretch(3, 0.8, 0.0).unwrap();
    assert!((k[0] - hermite::eval(3, 0.8)).abs() < 1e-15 && k[1..].iter().all(|&c| c == 0.0));
    let (a, b) = (0.4, 0.6);
    let c = hermite::shift_stretch(1, a, b).unwrap();
    let s = (1.0 - b * b).sqrt();
    assert!((c[0] - hermite::eval(1, a / s) * s).abs() < 1e-15);
    assert!((c[1] - b).abs() < 1e-15);
    for y in [-1.0, 0.3, 2.0] {
        assert!((c[0] + c[1] * hermite::eval(1, y) - (-a - b * y)).abs() < 1e-15);
    }
    assert!(matches!(
        hermite::shift_stretch(2, 0.0, 1.1),
        Err(Error::ScaleOutOfRange(_))
    ));

    let series = HermiteSeries::new(logn().hermite_coefficients(100).unwrap()).unwrap();
    assert!(rel(series.conditional_mean(0.3, 1.0).unwrap(), 0.5f64.exp()) < 1e-12);
    assert!(rel(series.conditional_mean(0.5, 0.0).unwrap(), 0.5f64.exp()) < 1e-9);
    let m = series.conditional_mean(0.5, 0.6).unwrap();
    assert!(rel(m, (0.5 + 0.5 * 0.36f64).exp()) < 1e-6, "{m}");
}

#[test]
fn kriging_values() {
    let m = nested_model();
    let (y, s2) = simple_krige(&SampleSet::empty(), &m, &p(3.0, 4.0)).unwrap();
    assert_eq!((y, s2), (0.0, 1.0));

    let pure: CovarianceModel = "1.0 sph(100)".parse().unwrap();
    let s = SampleSet::new(vec![p(10.0, 10.0)], vec![1.0], vec![1.7]).unwrap();
    let (y, s2) = simple_krige(&s, &pure, &p(10.0, 10.0)).unwrap();
    assert!((y - 1.7).abs() < 1e-12 && s2.abs() < 1e-12);

    let s = SampleSet::new(vec![p(0.0, 0.0)], vec![1.0], vec![2.0]).unwrap();
    let (y, s2) = simple_krige(&s, &m, &p(50.0, 0.0)).unwrap();
    assert!((y - 0.5625).abs() < 1e-12);
    assert!((s2 - (1.0 - 0.28125f64.powi(2))).abs() < 1e-12);
    assert!((s2 - 0.920_898).abs() < 1e-6);

    // Field path over a line of nodes at spacing 50 from the sample.
    let grid = Grid::new([0.0; 3], [50.0, 1.0, 1.0], [4, 1, 1]).unwrap();
    let f = krige_field(&s, &m, &grid).unwrap();
    assert!((f.y_star()[1] - 0.5625).abs() < 1e-12);
    assert!((f.sigma2()[1] - (1.0 - 0.28125f64.powi(2))).abs() < 1e-12);
    for i in 0..4 {
        let (y, s2) = simple_krige(&s, &m, &grid.point(i)).unwrap();
        assert!((f.y_star()[i] - y).abs() < 1e-14 && (f.sigma2()[i] - s2).abs() < 1e-14);
    }
    // One sample: σ_ij − c_i c_j.
    let c1 = m.cov(&p(0.0, 0.0), &p(50.0, 0.0));
    let c2 = m.cov(&p(0.0, 0.0), &p(100.0, 0.0));
    let c12 = m.cov(&p(50.0, 0.0), &p(100.0, 0.0));
    assert!((f.sk_cross_covariance(1, 2) - (c12 - c1 * c2)).abs() < 1e-14);
    assert!((f.sk_cross_covariance(2, 2) - f.sigma2()[2]).abs() < 1e-14);

    let none = krige_field(&SampleSet::empty(), &m, &grid).unwrap();
    assert!((none.sk_cross_covariance(0, 1) - 0.28125).abs() < 1e-15);
}

#[test]
fn point_law_values() {
    let l = logn();
    let prior = PointLaw::new(0.0, 1.0, &l).unwrap();
    assert!((prior.pdf(1.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    assert!((prior.cdf(1.0).unwrap() - 0.5).abs() < 1e-15);
    assert!(rel(prior.mean().unwrap(), 0.5f64.exp()) < 1e-10);
    assert!(rel(prior.moment(2).unwrap(), E * E) < 1e-10);
    assert!(rel(prior.variance().unwrap(), E * (E - 1.0)) < 1e-10);

    // Logn(μ + σ y*, σ² σ²_SK) for a general lognormal.
    let g = Anamorphosis::lognormal(0.3, 0.7).unwrap();
    let law = PointLaw::new(-0.4, 0.5, &g).unwrap();
    let (m, v) = (0.3 + 0.7 * -0.4, 0.49 * 0.5);
    let z = 1.1f64;
    let pdf = (-(z.ln() - m).powi(2) / (2.0 * v)).exp() / (z * (2.0 * PI * v).sqrt());
    assert!(rel(law.pdf(z).unwrap(), pdf) < 1e-13);

    let point = PointLaw::new(0.2, 0.0, &l).unwrap();
    assert!(matches!(point.pdf(1.0), Err(Error::DegenerateLaw)));
    assert!((point.mean().unwrap() - 0.2f64.exp()).abs() < 1e-15);
    assert_eq!(point.variance().unwrap(), 0.0);
    assert!(rel(point.moment(3).unwrap(), 0.6f64.exp()) < 1e-15);

    let law = PointLaw::new(0.7, 0.3, &l).unwrap();
    assert!((law.cdf(l.backward(0.7)).unwrap() - 0.5).abs() < 1e-15);
    let x = expo();
    let pe = PointLaw::prior(&x);
    assert!((pe.cdf(0.8 * LN_2).unwrap() - 0.5).abs() < 1e-14);
    assert!((pe.variance().unwrap() - 0.64).abs() < 1e-6);
}

#[test]
fn pair_and_volume_values() {
    let l = logn();
    let prior = PointLaw::prior(&l);
    let c = conditional::pair_covariance(&prior, &prior, 0.6).unwrap();
    assert!(rel(c, E * (0.6f64.exp() - 1.0)) < 1e-10);
    assert!(
        conditional::pair_covariance(&prior, &prior, 0.0)
            .unwrap()
            .abs()
            < 1e-12
    );
    let a = PointLaw::new(0.2, 0.4, &l).unwrap();
    let b = PointLaw::new(-0.5, 0.7, &l).unwrap();
    let rho: f64 = 0.3;
    let expect = (0.2 - 0.5 + (0.4 + 0.7) / 2.0f64).exp() * (rho.exp() - 1.0);
    assert!(rel(conditional::pair_covariance(&a, &b, rho).unwrap(), expect) < 1e-10);
    assert!(
        rel(
            conditional::pair_covariance(&a, &a, 0.4).unwrap(),
            a.variance().unwrap()
        ) < 1e-10
    );

    // Two uncorrelated prior nodes: (Var + Var) / 4.
    let nug: CovarianceModel = "1.0 nugget".parse().unwrap();
    let grid = Grid::planar([0.0, 0.0], 1.0, 2, 1).unwrap();
    let f = krige_field(&SampleSet::empty(), &nug, &grid).unwrap();
    let x = expo();
    let v = conditional::volume_variance(&f, &VolumeSpec::new(vec![0, 1], 2).unwrap(), &x).unwrap();
    assert!((v - 0.64 / 2.0).abs() < 1e-6);
    let one = conditional::volume_variance(&f, &VolumeSpec::new(vec![1], 2).unwrap(), &x).unwrap();
    assert!((one - PointLaw::prior(&x).variance().unwrap()).abs() < 1e-15);
}

/// Largest |F_exact − F_sample| over a grid of points.
fn grid_ks(samples: &mut [f64], exact: &[(f64, f64)]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    exact
        .iter()
        .map(|&(z, f)| (samples.partition_point(|&s| s <= z) as f64 / n - f).abs())
        .fold(0.0, f64::max)
}

fn two_node_law(rho: f64) -> BlockLaw {
    BlockLaw::new(
        vec![0.0, 0.0],
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
    )
    .unwrap()
}

fn sampled_averages(rho: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let s = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let (a, b) = normal_pair(&mut rng);
            0.5 * (a.exp() + (rho * a + s * b).exp())
        })
        .collect()
}

#[test]
fn two_node_block_law_against_sampling() {
    let l = logn();
    for rho in [0.0, 0.6] {
        let bl = two_node_law(rho);
        let zs: Vec<f64> = (1..=120).map(|k| 0.05 * k as f64).collect();
        let exact: Vec<(f64, f64)> = blocksupport::block_cdf_exact_curve(&bl, &l, &zs)
            .unwrap()
            .iter()
            .map(|p| (p.z, p.cdf))
            .collect();
        let mut avg = sampled_averages(rho, 10_000_000, 99);
        let ks = grid_ks(&mut avg, &exact);
        assert!(ks <= 0.003, "rho {rho}: {ks}");
    }
}

#[test]
fn two_node_monte_carlo_and_cdf() {
    let l = logn();
    let bl = two_node_law(0.0);
    for z in [0.6, 1.0, 1.6, 3.0] {
        let exact = blocksupport::block_pdf_exact(&bl, &l, z).unwrap();
        let mc = blocksupport::block_pdf_mc(&bl, &l, z, 1_000_000, 21).unwrap();
        assert!(
            (mc.density - exact).abs() <= 3.0 * mc.se,
            "{z}: {exact} {mc:?}"
        );
    }
    // Below the smallest attainable average.
    let none = blocksupport::block_pdf_mc(&bl, &l, -1.0, 10_000, 1).unwrap();
    assert_eq!(none.density, 0.0);

    let z = 0.5f64.exp();
    let p = blocksupport::block_cdf(&bl, &l, z, 1_000_000, 5).unwrap();
    let avg = sampled_averages(0.0, 10_000_000, 7);
    let frac = avg.iter().filter(|&&a| a <= z).count() as f64 / avg.len() as f64;
    let oracle_se = (frac * (1.0 - frac) / avg.len() as f64).sqrt();
    let se = (p.se * p.se + oracle_se * oracle_se).sqrt();
    assert!((p.cdf - frac).abs() <= 3.0 * se, "{p:?} {frac} {se}");
    assert!((p.exceedance() - (1.0 - p.cdf)).abs() < 1e-15);

    let top = blocksupport::block_cdf(&bl, &l, 200.0, 100_000, 5).unwrap();
    assert!((top.cdf - 1.0).abs() < 1e-3);
    let single = BlockLaw::new(vec![0.3], DMatrix::from_element(1, 1, 0.5)).unwrap();
    let law = PointLaw::new(0.3, 0.5, &l).unwrap();
    assert_eq!(
        blocksupport::block_cdf(&single, &l, 1.2, 1000, 0)
            .unwrap()
            .cdf,
        law.cdf(1.2).unwrap()
    );
    assert_eq!(
        blocksupport::block_pdf_exact(&single, &l, 1.2).unwrap(),
        law.pdf(1.2).unwrap()
    );
}

#[test]
fn block_law_assembly() {
    let m = nested_model();
    let s = SampleSet::new(vec![p(0.0, 0.0)], vec![1.0], vec![2.0]).unwrap();
    let grid = Grid::new([0.0; 3], [50.0, 1.0, 1.0], [3, 1, 1]).unwrap();
    let f = krige_field(&s, &m, &grid).unwrap();
    let bl = blocksupport::make_block_law(&f, &VolumeSpec::new(vec![1, 2], 3).unwrap()).unwrap();
    let c = 0.28125;
    let c2 = m.cov(&p(0.0, 0.0), &p(100.0, 0.0));
    let expect = [1.0 - c * c, c - c * c2, c - c * c2, 1.0 - c2 * c2];
    for (k, e) in expect.iter().enumerate() {
        assert!((bl.covariance()[(k / 2, k % 2)] - e).abs() < 1e-14);
    }
    assert_eq!(bl.covariance()[(0, 0)], f.sigma2()[1]);
    let prior = krige_field(&SampleSet::empty(), &m, &grid).unwrap();
    let bl =
        blocksupport::make_block_law(&prior, &VolumeSpec::new(vec![0, 1, 2], 3).unwrap()).unwrap();
    assert_eq!(*bl.covariance(), m.cov_matrix(&grid.points()).unwrap());
}

#[test]
fn simulation_values() {
    let r = 2000;
    let nug: CovarianceModel = "1.0 nugget".parse().unwrap();
    let line = Grid::planar([0.0, 0.0], 1.0, 20, 1).unwrap();
    let white = simulate::lu_unconditional(&line, &nug, r, 3, false).unwrap();
    let corr = |a: usize, b: usize, set: &simulate::RealizationSet| {
        let x: Vec<f64> = set.node(a).collect();
        let y: Vec<f64> = set.node(b).collect();
        x.iter().zip(&y).map(|(u, v)| u * v).sum::<f64>() / x.len() as f64
    };
    assert!(corr(4, 5, &white).abs() <= 3.0 / (r as f64).sqrt());

    let m = nested_model();
    let grid = Grid::planar([0.0, 0.0], 10.0, 12, 12).unwrap();
    let set = simulate::lu_unconditional(&grid, &m, r, 4, false).unwrap();
    let (mean, _) = set.node_moments();
    let ok = mean
        .iter()
        .filter(|m| m.abs() <= 3.0 / (r as f64).sqrt())
        .count();
    assert!(ok as f64 >= 0.99 * mean.len() as f64);
    // Lag 50 covariance: nodes five apart along x.
    let a = grid.index(2, 6, 0);
    let b = grid.index(7, 6, 0);
    let xy: Vec<f64> = set.node(a).zip(set.node(b)).map(|(u, v)| u * v).collect();
    let mu = xy.iter().sum::<f64>() / r as f64;
    let se =
        (xy.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (r as f64 - 1.0) / r as f64).sqrt();
    assert!((mu - 0.28125).abs() <= 3.0 * se, "{mu} {se}");

    let x = expo();
    let raw = simulate::backtransform(&set, &x);
    assert_eq!(x.backward(0.0), 0.8 * LN_2);
    for k in [0, 17] {
        let g = set.realization(k);
        let z = raw.realization(k);
        for i in 1..g.len() {
            assert_eq!(g[i] < g[i - 1], z[i] < z[i - 1]);
        }
    }

    let samples = simulate::sample_from_realization(&raw, 0, 30, 8, &x).unwrap();
    let f = krige_field(&samples, &m, &grid).unwrap();
    let cond = simulate::lu_conditional(&f, 200, 9, false).unwrap();
    for pos in samples.positions() {
        let i = grid.node_at(pos).unwrap();
        assert!(cond.node(i).all(|v| v == f.y_star()[i]));
    }
    let all = simulate::sample_from_realization(&raw, 1, grid.len(), 8, &x).unwrap();
    assert_eq!(all.len(), grid.len());
    assert!(matches!(
        simulate::sample_from_realization(&raw, 0, grid.len() + 1, 8, &x),
        Err(Error::CountExceedsNodes { .. })
    ));
}

#[test]
fn unconditional_histogram_matches_target() {
    let x = expo();
    let nug: CovarianceModel = "1.0 nugget".parse().unwrap();
    let grid = Grid::planar([0.0, 0.0], 1.0, 50, 50).unwrap();
    let set = simulate::backtransform(
        &simulate::lu_unconditional(&grid, &nug, 20, 1, false).unwrap(),
        &x,
    );
    let mut v = set.values().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let ks = v
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let f = 1.0 - (-1.25 * z).exp();
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks <= 0.01, "{ks}");
}

#[test]
fn block_average_values() {
    let grid = Grid::planar([0.0, 0.0], 1.0, 3, 1).unwrap();
    let set =
        simulate::RealizationSet::new(grid, 2, 0, vec![1.0, 2.0, 6.0, 4.0, 4.0, 4.0]).unwrap();
    assert_eq!(
        simulate::block_average(&set, &VolumeSpec::new(vec![2], 3).unwrap()),
        vec![6.0, 4.0]
    );
    assert_eq!(
        simulate::block_average(&set, &VolumeSpec::new(vec![0, 1], 3).unwrap()),
        vec![1.5, 4.0]
    );
}
