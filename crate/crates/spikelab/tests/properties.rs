use proptest::prelude::*;
use rand::RngCore;
use spikelab::ensemble::{read_dump, write_dump};
use spikelab::exec::{map_trials, Execution};
use spikelab::harness::{crossing_point, format_value};
use spikelab::inference::{detectability_report, jaccard, recover_support};
use spikelab::laws::{
    classical_location, cone_mass, edges, inverse_classical_location, m_self_consistency_residual, mp_atom,
    mp_density, stieltjes_m, stieltjes_w, w_self_consistency_residual, Aspect, Side,
};
use spikelab::rng::{stream, Stream};
use spikelab::stats::{ks_one_sample, quantile};
use spikelab::Complex64;

/// `int rho(x) / (x - z) dx` plus the atom at zero, by midpoint rule in the
/// angle variable `x = a + (b - a)(1 - cos t) / 2`.
fn stieltjes_by_quadrature(z: Complex64, phi: f64) -> Complex64 {
    let (a, b) = edges(phi).unwrap();
    let n = 20_000;
    let h = std::f64::consts::PI / n as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let t = (k as f64 + 0.5) * h;
        let x = a + (b - a) * (1.0 - t.cos()) / 2.0;
        let dx = (b - a) * t.sin() / 2.0;
        acc += mp_density(x, phi).unwrap() * dx * h / (x - z);
    }
    acc + mp_atom(phi).unwrap() / (-z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn m_solves_its_equation_in_upper_half_plane(phi in 0.05f64..20.0, e in -3.0f64..12.0, eta in 1e-4f64..5.0) {
        let z = Complex64::new(e, eta);
        let m = stieltjes_m(z, phi).unwrap();
        prop_assert!(m.im > 0.0);
        prop_assert!(m_self_consistency_residual(m, z, phi) < 1e-10 * (1.0 + m.norm()));
    }

    #[test]
    fn w_solves_its_equation(phi in 0.05f64..20.0, e in -3.0f64..12.0, eta in 1e-4f64..5.0) {
        let z = Complex64::new(e, eta);
        let w = stieltjes_w(z, phi).unwrap();
        prop_assert!(w_self_consistency_residual(w, z, phi) < 1e-10 * (1.0 + z.norm()));
    }

    #[test]
    fn m_matches_quadrature_of_density(phi in 0.2f64..5.0, e in -1.0f64..8.0, eta in 0.5f64..3.0) {
        let z = Complex64::new(e, eta);
        let m = stieltjes_m(z, phi).unwrap();
        let q = stieltjes_by_quadrature(z, phi);
        prop_assert!((m - q).norm() < 1e-6, "m = {m}, quadrature = {q}");
    }

    #[test]
    fn density_vanishes_off_support(phi in 0.05f64..20.0, x in -5.0f64..30.0) {
        let (a, b) = edges(phi).unwrap();
        let rho = mp_density(x, phi).unwrap();
        prop_assert!(rho >= 0.0);
        if x < a || x > b {
            prop_assert_eq!(rho, 0.0);
        }
    }

    #[test]
    fn theta_inverts_on_both_sides(phi in 0.05f64..0.9, d in 1.01f64..50.0, t in 0.01f64..0.99) {
        let mu = classical_location(d, phi).unwrap();
        let back = inverse_classical_location(mu, phi, Side::Right).unwrap();
        prop_assert!((back - d).abs() < 1e-9 * d);
        // left outliers live in (-phi^{-1/2}, -1), which is nonempty for phi < 1
        let lo = -1.0 / phi.sqrt();
        let dl = -1.0 + t * (lo + 1.0);
        if dl < -1.0 - 1e-6 {
            let mu = classical_location(dl, phi).unwrap();
            let back = inverse_classical_location(mu, phi, Side::Left).unwrap();
            prop_assert!((back - dl).abs() < 1e-7);
        }
    }

    #[test]
    fn cone_mass_is_a_probability_increasing_in_d(phi in 0.05f64..20.0, d in 1.001f64..100.0, step in 0.001f64..5.0) {
        let u = cone_mass(d, phi).unwrap();
        prop_assert!(u > 0.0 && u < 1.0);
        prop_assert!(cone_mass(d + step, phi).unwrap() >= u);
    }

    #[test]
    fn support_shrinks_as_threshold_grows(xi in prop::collection::vec(-1.0f64..1.0, 1..200), t in 0.01f64..5.0, dt in 0.0f64..5.0) {
        let wide = recover_support(&xi, t).unwrap();
        let narrow = recover_support(&xi, t + dt).unwrap();
        prop_assert!(narrow.iter().all(|k| wide.contains(k)));
        prop_assert!(wide.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(
        a in prop::collection::btree_set(0usize..50, 0..20),
        b in prop::collection::btree_set(0usize..50, 0..20),
    ) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
    }

    #[test]
    fn detectability_margins_grow_with_sigma(sigma in 1.0f64..50.0, ds in 0.0f64..10.0, support in 1usize..100) {
        let aspect = Aspect::new(400, 800).unwrap();
        let lo = detectability_report(sigma, support, &aspect, 5.0).unwrap();
        let hi = detectability_report(sigma + ds, support, &aspect, 5.0).unwrap();
        prop_assert!(hi.naive_entrywise.margin >= lo.naive_entrywise.margin);
        prop_assert!(hi.pca_supercritical.margin >= lo.pca_supercritical.margin);
        prop_assert!(hi.naive_entrywise.holds >= lo.naive_entrywise.holds);
        prop_assert!(hi.pca_supercritical.holds >= lo.pca_supercritical.holds);
    }

    #[test]
    fn crossing_lies_in_the_bracketing_interval(mut fr in prop::collection::vec(0.0f64..1.0, 2..20)) {
        fr.sort_by(f64::total_cmp);
        let values: Vec<f64> = (0..fr.len()).map(|i| 0.5 + 0.1 * i as f64).collect();
        match crossing_point(&values, &fr, 0.5) {
            None => prop_assert!(fr.iter().all(|&f| f < 0.5)),
            Some(c) => {
                let i = fr.iter().position(|&f| f >= 0.5).unwrap();
                let lo = if i == 0 { values[0] } else { values[i - 1] };
                prop_assert!(c >= lo - 1e-12 && c <= values[i] + 1e-12);
            }
        }
    }

    #[test]
    fn csv_values_round_trip_exactly(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let s = format_value(v);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn dump_round_trips(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
        let mut rng = stream(seed, 0, Stream::Probe);
        let m = faer::Mat::<f64>::from_fn(rows, cols, |_, _| f64::from_bits(rng.next_u64() >> 2));
        let mut buf = Vec::new();
        write_dump(&mut buf, &[("A", m.as_ref())]).unwrap();
        prop_assert_eq!(buf.len(), 8 + 8 + 8 + 1 + 16 + 8 * rows * cols);
        let back = read_dump(&buf[..]).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0].0, "A");
        prop_assert!(back[0].1 == m);
    }

    #[test]
    fn streams_are_reproducible_and_distinct(master in any::<u64>(), trial in 0u64..1_000_000) {
        let a: Vec<u64> = (0..4).map({ let mut r = stream(master, trial, Stream::Noise); move |_| r.next_u64() }).collect();
        let b: Vec<u64> = (0..4).map({ let mut r = stream(master, trial, Stream::Noise); move |_| r.next_u64() }).collect();
        let c: Vec<u64> = (0..4).map({ let mut r = stream(master, trial + 1, Stream::Noise); move |_| r.next_u64() }).collect();
        let d: Vec<u64> = (0..4).map({ let mut r = stream(master, trial, Stream::Probe); move |_| r.next_u64() }).collect();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
        prop_assert_ne!(&a, &d);
    }

    #[test]
    fn quantiles_are_monotone_and_bracketed(xs in prop::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..1.0, dp in 0.0f64..1.0) {
        let q = quantile(&xs, p).unwrap();
        let q2 = quantile(&xs, (p + dp).min(1.0)).unwrap();
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        prop_assert!(q >= lo && q <= hi);
        prop_assert!(q2 >= q);
    }

    #[test]
    fn ks_statistic_is_in_unit_interval(xs in prop::collection::vec(0.0f64..1.0, 1..100)) {
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn trial_order_does_not_depend_on_execution(n in 0usize..64, seed in any::<u64>(), threads in 1usize..5) {
        let f = |i: usize| Ok(stream(seed, i as u64, Stream::Noise).next_u64());
        let serial = map_trials(n, Execution::Serial, f).unwrap();
        let parallel = map_trials(n, Execution::Parallel { threads: Some(threads) }, f).unwrap();
        prop_assert_eq!(serial, parallel);
    }
}
